"""Command line entry points wiring the pipeline end to end.

Exit codes: 0 success, 1 usage error, 2 data error. Every artifact-
writing subcommand drops a config echo (JSON) next to its outputs and is
byte-deterministic for a fixed --seed.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import click
import numpy as np

from . import bvh as bvh_mod
from . import gallery as gal
from . import metrics as met
from . import report, synth
from .clip import load_clip, resample, save_clip
from .features import FeatureDims, extract_phase_proxy
from .losses import TrainingConfig
from .network import ModelConfig, load_model, save_model
from .rollout import RolloutStart, TargetPose, guidance_from_clip, rollout
from .training import prepare_clip, train


class DataError(click.ClickException):
    exit_code = 2


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON file with per-subcommand default flags; explicit "
                   "flags win.")
@click.option("--log-json", is_flag=True, default=False,
              help="Emit one JSON record per event on stderr.")
@click.pass_context
def cli(ctx, config_path, log_json):
    """Motion in-betweening toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["log_json"] = log_json
    ctx.default_map = _load_config_file(config_path)


def _log(ctx, **record):
    if ctx.obj and ctx.obj.get("log_json"):
        click.echo(json.dumps(record, sort_keys=True, default=str), err=True)


def _write_manifest(out_dir: Path, clips: list, meta: dict) -> None:
    manifest = dict(meta)
    manifest["clips"] = [c.name for c in sorted(out_dir.glob("clips/*.tkc"))]
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_dataset(data_dir: str | Path) -> list:
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.json"
    if not manifest.exists():
        raise DataError(f"{data_dir} has no manifest.json; run `tweenkit synth` "
                        "or `tweenkit ingest` first")
    names = json.loads(manifest.read_text(encoding="utf-8"))["clips"]
    return [load_clip(data_dir / "clips" / n) for n in names]


@cli.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              envvar="TWEENKIT_DATA")
@click.option("--minutes", default=4.0, show_default=True)
@click.option("--styles", "n_styles", default=4, show_default=True)
@click.option("--clip-seconds", default=10.0, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.pass_context
def synth_cmd(ctx, out_dir, minutes, n_styles, clip_seconds, seed):
    """Generate a deterministic synthetic motion dataset."""
    styles = synth.default_styles()[:n_styles]
    if not styles:
        raise click.UsageError("--styles must be at least 1")
    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    clips = synth.synthetic_dataset(minutes, seed, styles=styles,
                                    clip_seconds=clip_seconds)
    for i, clip in enumerate(clips):
        save_clip(out / "clips" / f"clip_{i:04d}.tkc", clip)
    _write_manifest(out, clips, {
        "kind": "dataset", "minutes": minutes, "styles": len(styles),
        "clip_seconds": clip_seconds, "seed": seed, "source": "synth",
    })
    report.write_config_echo(out / "synth.config.json", {
        "command": "synth", "minutes": minutes, "styles": len(styles),
        "clip_seconds": clip_seconds, "seed": seed,
    })
    _log(ctx, event="synth", clips=len(clips), out=str(out))
    click.echo(f"wrote {len(clips)} clips to {out}")


@cli.command("ingest")
@click.option("--bvh-dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(),
              envvar="TWEENKIT_DATA")
@click.option("--style-id", default=0, show_default=True)
@click.pass_context
def ingest_cmd(ctx, bvh_dir, out_dir, style_id):
    """Parse BVH files into clip caches (resampled to 30 fps)."""
    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    files = sorted(Path(bvh_dir).glob("*.bvh"))
    if not files:
        raise DataError(f"no .bvh files under {bvh_dir}")
    count = 0
    for i, f in enumerate(files):
        try:
            _, clip = bvh_mod.parse_bvh(f.read_text(encoding="utf-8"))
        except (bvh_mod.ParseError, bvh_mod.UnsupportedChannel) as exc:
            raise DataError(f"{f}: {exc}") from exc
        clip = resample(clip)
        clip.style_id = style_id
        prepare_clip(clip)
        save_clip(out / "clips" / f"clip_{i:04d}.tkc", clip)
        count += 1
    _write_manifest(out, [], {"kind": "dataset", "source": "ingest",
                              "bvh_dir": str(bvh_dir)})
    report.write_config_echo(out / "ingest.config.json", {
        "command": "ingest", "bvh_dir": str(bvh_dir), "style_id": style_id,
    })
    _log(ctx, event="ingest", clips=count, out=str(out))
    click.echo(f"ingested {count} BVH files into {out}")


@cli.command("phases")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              envvar="TWEENKIT_DATA")
@click.pass_context
def phases_cmd(ctx, data_dir):
    """Extract phase features for every clip cache, in place."""
    data = Path(data_dir)
    names = json.loads((data / "manifest.json").read_text())["clips"]
    for n in names:
        path = data / "clips" / n
        clip = load_clip(path)
        prepare_clip(clip)
        extract_phase_proxy(clip)
        save_clip(path, clip)
    _log(ctx, event="phases", clips=len(names))
    click.echo(f"phase features written for {len(names)} clips")


@cli.group("gallery")
def gallery_group():
    """Build, query and export trajectory galleries."""


@gallery_group.command("build")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              envvar="TWEENKIT_DATA")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--stride", default=5, show_default=True)
@click.option("--duration-step", default=5, show_default=True)
@click.option("--bin-width", default=0.05, show_default=True)
@click.option("--alpha", default=0.35, show_default=True)
@click.option("--branches", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def gallery_build(ctx, data_dir, out_path, stride, duration_step, bin_width,
                  alpha, branches, seed):
    """Extract atomic trajectories from a dataset and index them."""
    clips = load_dataset(data_dir)
    cfg = gal.SearchConfig(alpha=alpha, branches=branches, bin_width=bin_width,
                           stride=stride, duration_step=duration_step, seed=seed)
    g = gal.build_gallery(clips, cfg)
    if g.size == 0:
        raise DataError("gallery is empty; clips may be too short")
    gal.save_gallery(out_path, g)
    report.write_config_echo(Path(out_path).with_suffix(".config.json"), {
        "command": "gallery build", "data": str(data_dir),
        "trajectories": g.size, **cfg.echo(),
    })
    _log(ctx, event="gallery_build", size=g.size, out=str(out_path))
    click.echo(f"gallery with {g.size} atomic trajectories -> {out_path}")


def _parse_pose_flag(value: str, name: str) -> tuple[np.ndarray, np.ndarray]:
    parts = value.split(",")
    if len(parts) != 4:
        raise click.UsageError(
            f"--{name} takes 'x,z,dx,dz' (position and facing), got {value!r}")
    try:
        x, z, dx, dz = (float(p) for p in parts)
    except ValueError:
        raise click.UsageError(f"--{name}: not numeric: {value!r}") from None
    d = np.hypot(dx, dz)
    if d < 1e-9:
        raise click.UsageError(f"--{name}: facing direction cannot be zero")
    return np.array([x, z]), np.array([dx / d, dz / d])


@gallery_group.command("query")
@click.option("--gallery", "gallery_path", required=True,
              type=click.Path(exists=True))
@click.option("--from", "from_pose", required=True,
              help="start pose 'x,z,dx,dz'")
@click.option("--to", "to_pose", required=True, help="target pose 'x,z,dx,dz'")
@click.option("--count", default=7, show_default=True)
@click.option("--duration", "duration_label", default=None,
              type=click.Choice(gal.DURATION_LABELS))
@click.option("--style", default=None, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def gallery_query(ctx, gallery_path, from_pose, to_pose, count, duration_label,
                  style, seed, out_dir):
    """Search the gallery for trajectories between two authoring poses."""
    g = gal.load_gallery(gallery_path)
    start_pos, start_dir = _parse_pose_flag(from_pose, "from")
    end_pos, end_dir = _parse_pose_flag(to_pose, "to")
    q = gal.Query.from_world(start_pos, start_dir, end_pos, end_dir)
    if not 0.1 <= q.distance <= 10.0:
        raise DataError(f"query distance {q.distance:.2f} m outside [0.1, 10]")
    cfg = replace(g.config, seed=seed)
    cands = gal.query_candidates(g, q, cfg, count=count, style=style,
                                 duration_label=duration_label)
    records = []
    for c in cands:
        rel_pos, _ = gal.materialize(g, c.segments)
        world = start_pos + _from_heading(rel_pos, start_dir)
        records.append({
            "ids": [list(s.traj.key) for s in c.segments],
            "duration": c.duration,
            "label": c.label,
            "error": round(c.error, 6),
            "polyline": [[round(float(p[0]), 4), round(float(p[1]), 4)]
                         for p in world],
        })
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.save_query_figure(records, out)
    report.write_config_echo(out / "query.config.json", {
        "command": "gallery query", "gallery": str(gallery_path),
        "from": from_pose, "to": to_pose, "count": count,
        "duration": duration_label, "style": style, "seed": seed,
    })
    _log(ctx, event="gallery_query", candidates=len(records))
    if records:
        click.echo(f"{len(records)} candidates -> {out}")
    else:
        click.echo(f"no match within alpha={cfg.alpha} rad; see {out}")


def _from_heading(v, direction):
    from .clip import from_heading_frame

    return from_heading_frame(v, direction)


@gallery_group.command("export")
@click.option("--gallery", "gallery_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def gallery_export(ctx, gallery_path, out_path):
    """Dump the gallery as line-delimited JSON for inspection."""
    g = gal.load_gallery(gallery_path)
    gal.export_jsonl(g, out_path)
    _log(ctx, event="gallery_export", size=g.size)
    click.echo(f"exported {g.size} trajectories -> {out_path}")


@cli.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              envvar="TWEENKIT_DATA")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--steps", default=10000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--experts", default=4, show_default=True,
              help="expert count (paper-scale default is 16)")
@click.option("--hidden", default=192, show_default=True,
              help="expert hidden width (paper-scale default is 512)")
@click.option("--learning-rate", default=1e-4, show_default=True)
@click.option("--weight-decay", default=1e-4, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--input-noise", default=0.15, show_default=True)
@click.option("--lr-schedule", default="cosine",
              type=click.Choice(["constant", "cosine"]), show_default=True)
@click.option("--mask-rate", default=0.15, show_default=True)
@click.option("--no-mirror", is_flag=True, default=False)
@click.pass_context
def train_cmd(ctx, data_dir, out_path, steps, seed, experts, hidden,
              learning_rate, weight_decay, batch_size, input_noise,
              lr_schedule, mask_rate, no_mirror):
    """Train the pose predictor on a clip dataset."""
    clips = load_dataset(data_dir)
    if not clips:
        raise DataError("dataset is empty")
    n_styles = max(c.style_id for c in clips) + 1
    dims = FeatureDims(n_styles=max(n_styles, 1))
    mc = ModelConfig(dims=dims, n_experts=experts, expert_hidden=hidden,
                     gating_hidden=(128, 64))
    tc = TrainingConfig(learning_rate=learning_rate, weight_decay=weight_decay,
                        batch_size=batch_size, steps=steps, seed=seed,
                        input_noise=input_noise, lr_schedule=lr_schedule,
                        warmup_steps=min(300, steps // 10),
                        mask_rate=mask_rate, mirror_augment=not no_mirror)
    try:
        model, curve = train(clips, tc, mc, log_every=max(1, steps // 10))
    except FloatingPointError as exc:
        raise DataError(f"training diverged: {exc}") from exc
    cfg_echo = {"command": "train", "data": str(data_dir),
                "model": {"experts": experts, "hidden": hidden},
                "training": asdict(tc)}
    save_model(out_path, model, extra_meta={"training_config": asdict(tc)})
    out_dir = Path(out_path).parent
    report.save_loss_curve(curve, out_dir)
    report.write_config_echo(Path(out_path).with_suffix(".config.json"), cfg_echo)
    _log(ctx, event="train", steps=steps, final_loss=curve[-1] if curve else None)
    click.echo(f"model -> {out_path} (final loss "
               f"{np.mean(curve[-100:]):.5f})" if curve else f"model -> {out_path}")


@cli.command("rollout")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              envvar="TWEENKIT_DATA")
@click.option("--clip", "clip_index", default=0, show_default=True)
@click.option("--start", "start_frame", default=0, show_default=True)
@click.option("--frames", default=45, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def rollout_cmd(ctx, model_path, data_dir, clip_index, start_frame, frames,
                out_path):
    """Generate an in-between along a clip's own trajectory, write BVH."""
    model, _ = load_model(model_path)
    clips = load_dataset(data_dir)
    if not 0 <= clip_index < len(clips):
        raise DataError(f"clip index {clip_index} outside dataset of {len(clips)}")
    clip = clips[clip_index]
    prepare_clip(clip)
    target_frame = start_frame + frames
    if target_frame >= clip.n_frames:
        raise DataError(f"start+frames {target_frame} exceeds clip length "
                        f"{clip.n_frames}")
    start = RolloutStart.from_clip(clip, start_frame)
    target = TargetPose.from_clip(clip, target_frame)
    guidance = guidance_from_clip(clip, start_frame, target_frame)
    out = rollout(model, start, target, guidance, style_id=clip.style_id,
                  skeleton=clip.skeleton)
    Path(out_path).write_text(bvh_mod.write_bvh(out), encoding="utf-8")
    report.write_config_echo(Path(out_path).with_suffix(".config.json"), {
        "command": "rollout", "model": str(model_path), "data": str(data_dir),
        "clip": clip_index, "start": start_frame, "frames": frames,
    })
    _log(ctx, event="rollout", frames=out.n_frames)
    click.echo(f"rollout of {out.n_frames} frames -> {out_path}")


@cli.command("eval")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              envvar="TWEENKIT_DATA")
@click.option("--method", "methods", default="interp", show_default=True,
              help="comma list: interp, model")
@click.option("--frames", "frames_list", default="15,30,45,60,75,90",
              show_default=True)
@click.option("--pairs", default=8, show_default=True,
              help="transitions sampled per length")
@click.option("--model", "model_path", default=None, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def eval_cmd(ctx, data_dir, methods, frames_list, pairs, model_path, seed,
             out_dir):
    """Evaluate methods against ground truth on sampled transitions."""
    clips = load_dataset(data_dir)
    for c in clips:
        prepare_clip(c)
    method_names = [m.strip() for m in methods.split(",") if m.strip()]
    unknown = set(method_names) - {"interp", "model"}
    if unknown:
        raise click.UsageError(f"unknown methods: {sorted(unknown)}")
    model = None
    if "model" in method_names:
        if not model_path:
            raise click.UsageError("--model is required for method 'model'")
        model, _ = load_model(model_path)
    lengths = [int(v) for v in frames_list.split(",")]

    from .clip import slice_clip

    rng = np.random.default_rng(seed)
    rep = met.EvalReport()
    for length in lengths:
        usable = [c for c in clips if c.n_frames > length + 2]
        if not usable:
            raise DataError(f"no clip long enough for {length}-frame transitions")
        acc = {m: {"l2p": [], "l2q": [], "slide": []} for m in method_names}
        for _ in range(pairs):
            c = usable[int(rng.integers(len(usable)))]
            s = int(rng.integers(0, c.n_frames - length - 1))
            for m in method_names:
                if m == "interp":
                    # covers frames s .. s+length inclusive
                    pred = met.interpolate_baseline(c, s, c, s + length,
                                                    length + 1)
                    truth = slice_clip(c, s, s + length + 1)
                else:
                    # rollout covers the frames after the start pose
                    start = RolloutStart.from_clip(c, s)
                    target = TargetPose.from_clip(c, s + length)
                    guidance = guidance_from_clip(c, s, s + length)
                    pred = rollout(model, start, target, guidance,
                                   style_id=c.style_id, skeleton=c.skeleton)
                    truth = slice_clip(c, s + 1, s + 1 + pred.n_frames)
                prepare_clip(truth)
                acc[m]["l2p"].append(met.l2p(pred, truth))
                acc[m]["l2q"].append(met.l2q(pred, truth))
                acc[m]["slide"].append(met.foot_slide(pred))
        for m in method_names:
            rep.add(m, length, float(np.mean(acc[m]["l2p"])),
                    float(np.mean(acc[m]["l2q"])),
                    float(np.mean(acc[m]["slide"])))
    out = Path(out_dir)
    csv_path, jsonl_path, png_path = report.save_eval_report(rep, out)
    report.write_config_echo(out / "eval.config.json", {
        "command": "eval", "data": str(data_dir), "methods": method_names,
        "frames": lengths, "pairs": pairs, "seed": seed,
        "model": str(model_path) if model_path else None,
    })
    _log(ctx, event="eval", rows=len(rep.rows))
    click.echo(f"eval report -> {csv_path}")


@cli.command("serve")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--gallery", "gallery_path", required=True,
              type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
@click.option("--static-dir", default=None, type=click.Path(),
              help="serve the authoring UI from this directory")
def serve_cmd(model_path, gallery_path, host, port, static_dir):
    """Run the authoring HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(model_path, gallery_path, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


def run(argv: list[str] | None = None) -> int:
    """Programmatic entry point returning an exit code."""
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return 0
    except click.UsageError as exc:
        exc.show()
        return 1
    except DataError as exc:
        click.echo(f"error: {exc.message}", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
