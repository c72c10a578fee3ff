"""Trajectory gallery: extraction, matching and candidate search.

Atomic trajectories are root-path windows (15..150 frames) re-expressed
in their own start-facing frame, so the stored start orientation is
(0, 1) by construction and the tuple reduces to (end orientation,
displacement, style, frame span). Matching aligns a candidate's
displacement onto the query's and charges the residual orientation
mismatch at both ends; longer queries are composed recursively by
splitting off gallery-distributed sub-distances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rotmath
from .arrayfile import load_arrays, save_arrays
from .clip import (MotionClip, facing_dirs, fk_all, ground_positions,
                   to_heading_frame)

GALLERY_FORMAT_VERSION = 1

DURATION_LABELS = ("fast", "medium", "slow")


class EmptySequence(ValueError):
    pass


class ZeroDisplacement(ValueError):
    pass


class TooFewCandidates(ValueError):
    pass


class InsufficientCandidates(ValueError):
    pass


@dataclass(frozen=True)
class AtomicTrajectory:
    """One gallery unit, relative to its own start frame."""

    clip_id: int
    t_start: int
    t_end: int
    o_start: np.ndarray     # unit, (0, 1) by construction after extraction
    o_end: np.ndarray       # unit, end facing in the start-facing frame
    v_disp: np.ndarray      # start->end ground displacement, same frame
    style: int

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.v_disp))

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.clip_id, self.t_start, self.t_end)


@dataclass(frozen=True)
class Query:
    """Search tuple in the authoring start-facing frame."""

    o_start: np.ndarray
    o_end: np.ndarray
    v_disp: np.ndarray

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.v_disp))

    @classmethod
    def from_world(cls, start_pos: np.ndarray, start_dir: np.ndarray,
                   end_pos: np.ndarray, end_dir: np.ndarray) -> "Query":
        v = to_heading_frame(np.asarray(end_pos) - np.asarray(start_pos), start_dir)
        oe = to_heading_frame(end_dir, start_dir)
        return cls(np.array([0.0, 1.0]), rotmath.normalize2d(oe), v)


@dataclass(frozen=True)
class SearchConfig:
    alpha: float = 0.35          # radians of total orientation error
    branches: int = 4            # branches kept per recursion level
    max_depth: int = 5
    bin_width: float = 0.05      # meters; same-distance tolerance
    seed: int = 0
    min_duration: int = 15
    max_duration: int = 150
    duration_step: int = 5       # duration grid; finer = denser distances
    stride: int = 5              # sliding-window start stride, frames
    min_residual: float = 0.08   # meters; do not recurse below this

    def echo(self) -> dict:
        return {k: getattr(self, k) for k in (
            "alpha", "branches", "max_depth", "bin_width", "seed",
            "min_duration", "max_duration", "duration_step", "stride",
            "min_residual")}


@dataclass
class ChainSegment:
    """An aligned gallery trajectory inside a search result."""

    traj: AtomicTrajectory
    rotation: float   # radians applied in the query frame

    @property
    def o_end(self) -> np.ndarray:
        return rotmath.rotate2d(self.traj.o_end, self.rotation)

    @property
    def v_disp(self) -> np.ndarray:
        return rotmath.rotate2d(self.traj.v_disp, self.rotation)

    @property
    def o_start(self) -> np.ndarray:
        return rotmath.rotate2d(self.traj.o_start, self.rotation)


# --------------------------------------------------------------------- #
# Extraction
# --------------------------------------------------------------------- #


def extract_atomics(clips: list[MotionClip],
                    cfg: SearchConfig | None = None) -> list[AtomicTrajectory]:
    """Sliding-window extraction over every clip and duration."""
    cfg = cfg or SearchConfig()
    out: list[AtomicTrajectory] = []
    for clip_id, clip in enumerate(clips):
        if clip.world_pos is None:
            fk_all(clip)
        gp = ground_positions(clip)
        dirs = facing_dirs(clip)
        n = clip.n_frames
        for dur in range(cfg.min_duration, cfg.max_duration + 1, cfg.duration_step):
            if dur >= n:
                continue
            for start in range(0, n - dur, cfg.stride):
                end = start + dur
                o_s = dirs[start]
                v = to_heading_frame(gp[end] - gp[start], o_s)
                o_e = to_heading_frame(dirs[end], o_s)
                out.append(AtomicTrajectory(
                    clip_id, start, end, np.array([0.0, 1.0]),
                    rotmath.normalize2d(o_e), v, clip.style_id))
    return out


# --------------------------------------------------------------------- #
# Gallery index
# --------------------------------------------------------------------- #


@dataclass
class GalleryIndex:
    trajectories: list[AtomicTrajectory]
    track_pos: list[np.ndarray]    # per clip, ground positions (N, 2)
    track_dir: list[np.ndarray]    # per clip, facing dirs (N, 2)
    config: SearchConfig
    labels: np.ndarray = field(default=None)  # per-trajectory duration label
    # vectorized columns
    vp: np.ndarray = field(default=None)
    oe: np.ndarray = field(default=None)
    dist: np.ndarray = field(default=None)
    dur: np.ndarray = field(default=None)
    style: np.ndarray = field(default=None)
    bins: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.vp is None:
            self._build_columns()
        if self.labels is None:
            self.labels = cluster_durations([t.duration for t in self.trajectories])

    def _build_columns(self) -> None:
        ts = self.trajectories
        self.vp = np.stack([t.v_disp for t in ts]) if ts else np.zeros((0, 2))
        self.oe = np.stack([t.o_end for t in ts]) if ts else np.zeros((0, 2))
        self.dist = np.linalg.norm(self.vp, axis=1)
        self.dur = np.array([t.duration for t in ts], dtype=int)
        self.style = np.array([t.style for t in ts], dtype=int)
        self.bins = np.floor(self.dist / self.config.bin_width).astype(int)

    @property
    def size(self) -> int:
        return len(self.trajectories)

    def label_of(self, index: int) -> str:
        return DURATION_LABELS[int(self.labels[index])]


def build_gallery(clips: list[MotionClip],
                  cfg: SearchConfig | None = None) -> GalleryIndex:
    cfg = cfg or SearchConfig()
    trajs = extract_atomics(clips, cfg)
    track_pos, track_dir = [], []
    for clip in clips:
        if clip.world_pos is None:
            fk_all(clip)
        track_pos.append(ground_positions(clip))
        track_dir.append(facing_dirs(clip))
    return GalleryIndex(trajs, track_pos, track_dir, cfg)


# --------------------------------------------------------------------- #
# Error, alignment, selection
# --------------------------------------------------------------------- #


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def error(chain: list[AtomicTrajectory | ChainSegment], q: Query) -> float:
    """Start-facing mismatch of the first element plus end-facing
    mismatch of the last, in radians (orientations already aligned)."""
    if not chain:
        raise EmptySequence("error of an empty candidate sequence")
    first, last = chain[0], chain[-1]
    return (rotmath.angle2d(first.o_start, q.o_start)
            + rotmath.angle2d(last.o_end, q.o_end))


def rotate_align(t: AtomicTrajectory, v_target: np.ndarray) -> AtomicTrajectory:
    """Rotate the tuple so its displacement points along v_target."""
    if t.distance < 1e-9:
        raise ZeroDisplacement("cannot align a zero-displacement trajectory")
    if float(np.linalg.norm(v_target)) < 1e-9:
        raise ZeroDisplacement("cannot align onto a zero-length target")
    delta = rotmath.signed_angle2d(t.v_disp, v_target)
    return replace(
        t,
        o_start=rotmath.rotate2d(t.o_start, delta),
        o_end=rotmath.rotate2d(t.o_end, delta),
        v_disp=rotmath.rotate2d(t.v_disp, delta),
    )


def _aligned_errors(gallery: GalleryIndex, idx: np.ndarray, q: Query,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(total error, start error, rotation) for gallery rows idx vs q.

    Replicates rotate_align + angle2d arithmetic exactly (same operation
    order) so rankings are bit-identical to a per-object exhaustive
    scan. Rows with near-zero displacement are matched unrotated.
    """
    vp = gallery.vp[idx]
    oe = gallery.oe[idx]
    vq, qs, qe = q.v_disp, q.o_start, q.o_end
    movable = gallery.dist[idx] > 1e-9
    cross = vp[:, 0] * vq[1] - vp[:, 1] * vq[0]
    dot = vp[:, 0] * vq[0] + vp[:, 1] * vq[1]
    delta = np.where(movable, np.arctan2(cross, dot), 0.0)
    c, s = np.cos(delta), np.sin(delta)
    # gallery start facings are exactly (0, 1): rotated = (-s, c)
    os_x, os_y = c * 0.0 - s * 1.0, s * 0.0 + c * 1.0
    start_err = np.arctan2(np.abs(os_x * qs[1] - os_y * qs[0]),
                           os_x * qs[0] + os_y * qs[1])
    oe_x = c * oe[:, 0] - s * oe[:, 1]
    oe_y = s * oe[:, 0] + c * oe[:, 1]
    end_err = np.arctan2(np.abs(oe_x * qe[1] - oe_y * qe[0]),
                         oe_x * qe[0] + oe_y * qe[1])
    return start_err + end_err, start_err, delta


def kth_best(gallery: GalleryIndex, q: Query, k: int,
             style: int | None = None) -> tuple[list[ChainSegment], bool]:
    """k lowest-error single trajectories after alignment.

    Ties break on (shorter duration, lower id); the ranking matches an
    exhaustive per-object scan exactly. Returns (segments, complete);
    complete is False when the gallery holds fewer than k trajectories
    (the list is then the whole ranking).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    idx = np.arange(gallery.size)
    if style is not None:
        idx = idx[gallery.style[idx] == style]
    if idx.size == 0:
        return [], False
    errs, _, deltas = _aligned_errors(gallery, idx, q)
    order = sorted(
        range(idx.size),
        key=lambda i: (errs[i], gallery.dur[idx[i]],
                       gallery.trajectories[idx[i]].key))
    picked = order[:k]
    segments = [ChainSegment(gallery.trajectories[idx[i]], float(deltas[i]))
                for i in picked]
    return segments, len(segments) == k


# --------------------------------------------------------------------- #
# Trajectory candidate search
# --------------------------------------------------------------------- #


def _direct_candidates(gallery: GalleryIndex, q: Query, budget: float,
                       idx_pool: np.ndarray) -> tuple[int, float, float] | None:
    """Best same-distance candidate within the error budget.

    Returns (gallery index, error, rotation) or None. Deterministic:
    minimum error with (duration, id) tie-breaks, matching a brute-force
    scan oracle.
    """
    d = q.distance
    near = idx_pool[np.abs(gallery.dist[idx_pool] - d) <= gallery.config.bin_width]
    if near.size == 0:
        return None
    errs, _, deltas = _aligned_errors(gallery, near, q)
    ok = errs <= budget + 1e-12
    if not np.any(ok):
        return None
    cand = np.flatnonzero(ok)
    best = min(cand, key=lambda i: (errs[i], gallery.dur[near[i]],
                                    gallery.trajectories[near[i]].key))
    return int(near[best]), float(errs[best]), float(deltas[best])


def tcs(gallery: GalleryIndex, q: Query, cfg: SearchConfig | None = None,
        style: int | None = None,
        ) -> tuple[list[ChainSegment], float]:
    """Recursive trajectory candidate search.

    Returns (chain, total error); the chain is empty on failure. On
    success the chain's orientation error against q is within
    cfg.alpha and its displacement closes v_disp(q) within one bin
    width. Deterministic for a fixed cfg.seed.
    """
    cfg = cfg or gallery.config
    rng = np.random.default_rng(cfg.seed)
    idx_pool = np.arange(gallery.size)
    if style is not None:
        idx_pool = idx_pool[gallery.style[idx_pool] == style]

    def recurse(query: Query, budget: float, depth: int,
                ) -> tuple[list[ChainSegment], float] | None:
        direct = _direct_candidates(gallery, query, budget, idx_pool)
        if direct is not None:
            gi, err_val, delta = direct
            return [ChainSegment(gallery.trajectories[gi], delta)], err_val
        if depth >= cfg.max_depth:
            return None
        d = query.distance
        shorter = idx_pool[(gallery.dist[idx_pool] < d - cfg.bin_width)
                           & (gallery.dist[idx_pool] > cfg.min_residual)]
        if shorter.size == 0:
            return None
        errs, start_errs, deltas = _aligned_errors(gallery, shorter, query)
        ok = start_errs <= budget + 1e-12
        shorter, start_errs, deltas = shorter[ok], start_errs[ok], deltas[ok]
        if shorter.size == 0:
            return None
        # keep k branches, sampled without replacement, favoring small
        # start error
        take = min(cfg.branches, shorter.size)
        weights = 1.0 / (1e-3 + start_errs)
        weights = weights / weights.sum()
        chosen = rng.choice(shorter.size, size=take, replace=False, p=weights)
        for ci in chosen:
            gi = int(shorter[ci])
            seg = ChainSegment(gallery.trajectories[gi], float(deltas[ci]))
            v_res = query.v_disp - seg.v_disp
            if float(np.linalg.norm(v_res)) < cfg.min_residual:
                continue
            sub = Query(seg.o_end, query.o_end, v_res)
            found = recurse(sub, budget - float(start_errs[ci]), depth + 1)
            if found is not None:
                chain, sub_err = found
                return [seg] + chain, float(start_errs[ci]) + sub_err
        return None

    found = recurse(q, cfg.alpha, 1)
    if found is None:
        return [], math.inf
    chain, err_total = found
    chain_err = error(chain, q)
    assert chain_err <= cfg.alpha + 1e-9, "search returned an out-of-budget chain"
    closure = q.v_disp - sum_displacement(chain)
    assert float(np.linalg.norm(closure)) <= cfg.bin_width + 1e-9, \
        "search returned a chain that does not close the displacement"
    return chain, err_total


def sum_displacement(chain: list[ChainSegment]) -> np.ndarray:
    return np.sum([seg.v_disp for seg in chain], axis=0)


# --------------------------------------------------------------------- #
# Duration clustering
# --------------------------------------------------------------------- #


def cluster_durations(durations: list[int] | np.ndarray) -> np.ndarray:
    """1-D 3-means over frame counts; labels 0=fast, 1=medium, 2=slow.

    Deterministic: centroids start at (min, median, max) and iteration
    stops when assignments are stable. With fewer than 3 distinct
    durations the tercile fallback applies (all equal -> all medium).
    """
    durations = np.asarray(durations, dtype=float)
    n = durations.size
    if n == 0:
        return np.zeros(0, dtype=int)
    distinct = np.unique(durations)
    if n < 3 or distinct.size < 3:
        return _tercile_fallback(durations, distinct)
    centroids = np.array([distinct.min(), float(np.median(durations)),
                          distinct.max()])
    labels = np.argmin(np.abs(durations[:, None] - centroids[None, :]), axis=1)
    for _iteration in range(200):
        for c in range(3):
            members = durations[labels == c]
            if members.size:
                centroids[c] = members.mean()
        new_labels = np.argmin(np.abs(durations[:, None] - centroids[None, :]),
                               axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    order = np.argsort(centroids, kind="stable")
    remap = np.empty(3, dtype=int)
    remap[order] = np.arange(3)
    return remap[labels]


def _tercile_fallback(durations: np.ndarray, distinct: np.ndarray) -> np.ndarray:
    if distinct.size == 1:
        return np.ones(durations.size, dtype=int)
    if distinct.size == 2:
        return np.where(durations == distinct[0], 0, 2)
    lo, hi = np.quantile(durations, [1.0 / 3.0, 2.0 / 3.0])
    labels = np.ones(durations.size, dtype=int)
    labels[durations <= lo] = 0
    labels[durations > hi] = 2
    return labels


# --------------------------------------------------------------------- #
# Candidate querying (service layer)
# --------------------------------------------------------------------- #


@dataclass
class Candidate:
    segments: list[ChainSegment]
    error: float
    label: str = "medium"

    @property
    def duration(self) -> int:
        return int(sum(seg.traj.duration for seg in self.segments))

    @property
    def key(self) -> tuple:
        return tuple(seg.traj.key for seg in self.segments)


def query_candidates(gallery: GalleryIndex, q: Query,
                     cfg: SearchConfig | None = None, count: int = 7,
                     style: int | None = None,
                     duration_label: str | None = None) -> list[Candidate]:
    """Up to `count` diverse candidates for a query.

    Pools direct matches (ranked) with composed chains from reseeded
    searches, clusters pool durations into fast/medium/slow, optionally
    filters by label, then picks candidates round-robin across labels by
    ascending error.
    """
    cfg = cfg or gallery.config
    pool: dict[tuple, Candidate] = {}

    idx_pool = np.arange(gallery.size)
    if style is not None:
        idx_pool = idx_pool[gallery.style[idx_pool] == style]
    near = idx_pool[np.abs(gallery.dist[idx_pool] - q.distance) <= cfg.bin_width]
    if near.size:
        errs, _, deltas = _aligned_errors(gallery, near, q)
        ok = np.flatnonzero(errs <= cfg.alpha + 1e-12)
        ranked = sorted(ok, key=lambda i: (errs[i], gallery.dur[near[i]],
                                           gallery.trajectories[near[i]].key))
        for i in ranked[:count * 3]:
            cand = Candidate([ChainSegment(gallery.trajectories[near[i]],
                                           float(deltas[i]))], float(errs[i]))
            pool.setdefault(cand.key, cand)

    attempts = 0
    seed = cfg.seed
    while len(pool) < count * 2 and attempts < count * 4:
        chain, err_total = tcs(gallery, q, replace(cfg, seed=seed + attempts),
                               style=style)
        attempts += 1
        if chain:
            cand = Candidate(chain, err_total)
            pool.setdefault(cand.key, cand)

    if not pool:
        return []
    cands = sorted(pool.values(), key=lambda c: (c.error, c.duration, c.key))
    labels = cluster_durations([c.duration for c in cands])
    for c, lab in zip(cands, labels):
        c.label = DURATION_LABELS[int(lab)]
    if duration_label is not None:
        cands = [c for c in cands if c.label == duration_label]
    # round-robin across labels for duration diversity
    by_label: dict[str, list[Candidate]] = {}
    for c in cands:
        by_label.setdefault(c.label, []).append(c)
    out: list[Candidate] = []
    while len(out) < count and any(by_label.values()):
        for lab in DURATION_LABELS:
            if by_label.get(lab):
                out.append(by_label[lab].pop(0))
                if len(out) >= count:
                    break
    return out


def materialize(gallery: GalleryIndex, segments: list[ChainSegment],
                ) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame (positions, dirs) of a chain in the query frame.

    Positions start at the origin; segment polylines come from the
    source clips, re-expressed in their window's start-facing frame and
    rotated by the alignment found during search.
    """
    if not segments:
        raise EmptySequence("cannot materialize an empty chain")
    pos_parts: list[np.ndarray] = []
    dir_parts: list[np.ndarray] = []
    cursor = np.zeros(2)
    for seg in segments:
        t = seg.traj
        gp = gallery.track_pos[t.clip_id][t.t_start:t.t_end + 1]
        dr = gallery.track_dir[t.clip_id][t.t_start:t.t_end + 1]
        o_s = dr[0]
        rel_pos = to_heading_frame(gp - gp[0], o_s)
        rel_dir = to_heading_frame(dr, o_s)
        rel_pos = rotmath.rotate2d(rel_pos, seg.rotation)
        rel_dir = rotmath.rotate2d(rel_dir, seg.rotation)
        if pos_parts:
            pos_parts.append(cursor + rel_pos[1:])
            dir_parts.append(rel_dir[1:])
        else:
            pos_parts.append(rel_pos)
            dir_parts.append(rel_dir)
        cursor = cursor + rel_pos[-1]
    return np.concatenate(pos_parts), np.concatenate(dir_parts)


# --------------------------------------------------------------------- #
# Persistence
# --------------------------------------------------------------------- #


def save_gallery(path: str | Path, gallery: GalleryIndex) -> None:
    ts = gallery.trajectories
    arrays = {
        "traj_clip": np.array([t.clip_id for t in ts], dtype=np.int64),
        "traj_start": np.array([t.t_start for t in ts], dtype=np.int64),
        "traj_end": np.array([t.t_end for t in ts], dtype=np.int64),
        "traj_oe": np.stack([t.o_end for t in ts]) if ts else np.zeros((0, 2)),
        "traj_vp": np.stack([t.v_disp for t in ts]) if ts else np.zeros((0, 2)),
        "traj_style": np.array([t.style for t in ts], dtype=np.int64),
        "traj_label": gallery.labels.astype(np.int64),
        "traj_bin": gallery.bins.astype(np.int64),
        "track_offsets": np.cumsum(
            [0] + [p.shape[0] for p in gallery.track_pos]).astype(np.int64),
        "track_pos": np.concatenate(gallery.track_pos) if gallery.track_pos
        else np.zeros((0, 2)),
        "track_dir": np.concatenate(gallery.track_dir) if gallery.track_dir
        else np.zeros((0, 2)),
    }
    meta = {
        "kind": "gallery",
        "version": GALLERY_FORMAT_VERSION,
        "config": gallery.config.echo(),
        "n_trajectories": len(ts),
        "n_clips": len(gallery.track_pos),
    }
    save_arrays(path, arrays, meta)


def load_gallery(path: str | Path) -> GalleryIndex:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "gallery":
        raise ValueError(f"{path} is not a gallery file")
    cfg = SearchConfig(**meta["config"])
    offsets = arrays["track_offsets"]
    track_pos = [arrays["track_pos"][offsets[i]:offsets[i + 1]].astype(float)
                 for i in range(len(offsets) - 1)]
    track_dir = [arrays["track_dir"][offsets[i]:offsets[i + 1]].astype(float)
                 for i in range(len(offsets) - 1)]
    trajs = []
    for i in range(int(meta["n_trajectories"])):
        trajs.append(AtomicTrajectory(
            int(arrays["traj_clip"][i]), int(arrays["traj_start"][i]),
            int(arrays["traj_end"][i]), np.array([0.0, 1.0]),
            arrays["traj_oe"][i].astype(float),
            arrays["traj_vp"][i].astype(float),
            int(arrays["traj_style"][i])))
    return GalleryIndex(trajs, track_pos, track_dir, cfg,
                        labels=arrays["traj_label"].astype(int))


def export_jsonl(gallery: GalleryIndex, path: str | Path) -> None:
    """Line-delimited text dump for inspection."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, t in enumerate(gallery.trajectories):
            rec = {
                "clip": t.clip_id, "start": t.t_start, "end": t.t_end,
                "duration": t.duration,
                "o_end": [round(float(v), 6) for v in t.o_end],
                "v_disp": [round(float(v), 6) for v in t.v_disp],
                "distance": round(t.distance, 6),
                "style": t.style,
                "label": gallery.label_of(i),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
