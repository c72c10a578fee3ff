import { ApiClient } from "./api.js";
import { candidateDraws, markerDraw, skeletonSegments, } from "./draw.js";
import { AuthoringScene } from "./scene.js";
const api = new ApiClient();
const scene = new AuthoringScene(api);
const authoring = document.getElementById("authoring");
const playback = document.getElementById("playback");
const banner = document.getElementById("banner");
const candidateList = document.getElementById("candidates");
const scrubber = document.getElementById("scrubber");
const frameLabel = document.getElementById("frame-label");
const styleSelect = document.getElementById("style");
const durationSelect = document.getElementById("duration");
const playButton = document.getElementById("play");
const pauseButton = document.getElementById("pause");
let meta = null;
const viewport = {
    width: authoring.width,
    height: authoring.height,
    metersPerPixel: 0.012,
    center: { x: 0, z: 1 },
};
// ----- authoring pane ---------------------------------------------- //
function screenToWorld(ev) {
    const rect = authoring.getBoundingClientRect();
    const px = ev.clientX - rect.left;
    const py = ev.clientY - rect.top;
    return {
        x: viewport.center.x + (px - viewport.width / 2) * viewport.metersPerPixel,
        z: viewport.center.z - (py - viewport.height / 2) * viewport.metersPerPixel,
    };
}
let drag = { kind: "none" };
authoring.addEventListener("mousedown", (ev) => {
    const w = screenToWorld(ev);
    const near = (m) => Math.hypot(m.x - w.x, m.z - w.z);
    const dStart = near(scene.start.pos);
    const dTarget = near(scene.target.pos);
    const marker = dStart <= dTarget ? "start" : "target";
    const dist = Math.min(dStart, dTarget);
    if (dist < 0.25) {
        drag = { kind: "move", marker };
    }
    else if (dist < 0.6) {
        drag = { kind: "rotate", marker };
    }
});
authoring.addEventListener("mousemove", (ev) => {
    if (drag.kind === "none")
        return;
    const w = screenToWorld(ev);
    const markerObj = drag.marker === "start" ? scene.start : scene.target;
    if (drag.kind === "move") {
        if (drag.marker === "start")
            scene.setStart(w, null);
        else
            scene.setTarget(w, null);
    }
    else {
        const facing = {
            x: w.x - markerObj.pos.x,
            z: w.z - markerObj.pos.z,
        };
        if (Math.hypot(facing.x, facing.z) > 1e-6) {
            if (drag.marker === "start")
                scene.setStart(null, facing);
            else
                scene.setTarget(null, facing);
        }
    }
});
window.addEventListener("mouseup", () => {
    drag = { kind: "none" };
});
function renderAuthoring() {
    const ctx = authoring.getContext("2d");
    if (!ctx)
        return;
    ctx.clearRect(0, 0, viewport.width, viewport.height);
    // ground grid, 1 m spacing
    ctx.strokeStyle = "#2b2f36";
    ctx.lineWidth = 1;
    const span = (viewport.width / 2) * viewport.metersPerPixel;
    for (let g = -Math.ceil(span); g <= Math.ceil(span); g++) {
        const [gx] = [viewport.width / 2 + (g - viewport.center.x) / viewport.metersPerPixel];
        ctx.beginPath();
        ctx.moveTo(gx, 0);
        ctx.lineTo(gx, viewport.height);
        ctx.stroke();
        const gy = viewport.height / 2 - (g - viewport.center.z) / viewport.metersPerPixel;
        ctx.beginPath();
        ctx.moveTo(0, gy);
        ctx.lineTo(viewport.width, gy);
        ctx.stroke();
    }
    for (const poly of candidateDraws(scene.visibleCandidates(), scene.selectedKey, viewport)) {
        ctx.strokeStyle = poly.color;
        ctx.lineWidth = poly.width;
        ctx.globalAlpha = poly.selected ? 1.0 : 0.75;
        ctx.beginPath();
        poly.points.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
        ctx.stroke();
    }
    ctx.globalAlpha = 1.0;
    // playhead dot along the selected candidate during playback
    if (scene.clip && scene.selected()) {
        const f = scene.clip.frames[scene.playback.frame];
        if (f) {
            const ctx2 = ctx;
            const [px, py] = [
                viewport.width / 2 + (f.root_pos[0] - viewport.center.x) / viewport.metersPerPixel,
                viewport.height / 2 - (f.root_pos[2] - viewport.center.z) / viewport.metersPerPixel,
            ];
            ctx2.fillStyle = "#ffffff";
            ctx2.beginPath();
            ctx2.arc(px, py, 4, 0, 2 * Math.PI);
            ctx2.fill();
        }
    }
    const drawMarker = (m, color) => {
        const { at, tip } = markerDraw(m, viewport);
        ctx.fillStyle = color;
        ctx.beginPath();
        ctx.arc(at[0], at[1], 7, 0, 2 * Math.PI);
        ctx.fill();
        ctx.strokeStyle = color;
        ctx.lineWidth = 2.5;
        ctx.beginPath();
        ctx.moveTo(at[0], at[1]);
        ctx.lineTo(tip[0], tip[1]);
        ctx.stroke();
    };
    drawMarker(scene.start, "#7ed07e");
    drawMarker(scene.target, "#d3d35e");
    if (scene.noMatch) {
        ctx.fillStyle = "#cc7777";
        ctx.font = "14px sans-serif";
        ctx.fillText("no match within the error threshold", 12, 20);
    }
}
// ----- playback pane ------------------------------------------------ //
function renderPlayback() {
    const ctx = playback.getContext("2d");
    if (!ctx || !meta)
        return;
    ctx.clearRect(0, 0, playback.width, playback.height);
    if (!scene.clip) {
        ctx.fillStyle = "#777";
        ctx.font = "13px sans-serif";
        ctx.fillText("select a candidate and press play", 12, 24);
        return;
    }
    ctx.strokeStyle = "#394049";
    ctx.beginPath();
    ctx.moveTo(0, playback.height - 40);
    ctx.lineTo(playback.width, playback.height - 40);
    ctx.stroke();
    const frame = scene.clip.frames[scene.playback.frame];
    const origin = [playback.width / 2, playback.height - 40];
    ctx.strokeStyle = "#9fd0ff";
    ctx.lineWidth = 2.5;
    for (const seg of skeletonSegments(frame, meta.skeleton, 130, origin)) {
        ctx.beginPath();
        ctx.moveTo(seg.a[0], seg.a[1]);
        ctx.lineTo(seg.b[0], seg.b[1]);
        ctx.stroke();
    }
    // ghost start/target root positions relative to the follow camera
    ctx.fillStyle = "#666";
    ctx.font = "12px sans-serif";
    ctx.fillText(`frame ${scene.playback.frame + 1}/${scene.clip.frames.length}`, 12, 20);
}
// ----- widgets ------------------------------------------------------ //
function renderWidgets() {
    banner.textContent = scene.banner ?? "";
    banner.style.display = scene.banner ? "block" : "none";
    const visible = scene.visibleCandidates();
    candidateList.replaceChildren(...visible.map((c) => {
        const li = document.createElement("li");
        li.textContent = `${c.label} | ${c.duration} frames | err ${c.error.toFixed(3)} rad`;
        li.className = scene.selected() === c ? "selected" : "";
        li.onclick = () => scene.select(c);
        return li;
    }));
    const n = scene.scrubberLength();
    scrubber.max = String(Math.max(0, n - 1));
    scrubber.value = String(scene.playback.frame);
    frameLabel.textContent = n
        ? `${scene.playback.frame + 1} / ${n}`
        : "no clip";
}
scrubber.addEventListener("input", () => {
    scene.pause();
    scene.setFrame(Number(scrubber.value));
});
playButton.addEventListener("click", () => {
    if (scene.clip && scene.selected())
        scene.resume();
    void scene.playRollout();
});
pauseButton.addEventListener("click", () => scene.pause());
styleSelect.addEventListener("change", () => {
    scene.setStyle(styleSelect.value === "any" ? null : Number(styleSelect.value));
});
durationSelect.addEventListener("change", () => {
    scene.setDurationFilter(durationSelect.value);
});
scene.onChange(() => {
    renderWidgets();
});
// clip-rate playback, render on every animation frame
let lastTick = 0;
function loop(now) {
    if (scene.playback.playing && now - lastTick >= 1000 / 30) {
        scene.tick();
        lastTick = now;
    }
    renderAuthoring();
    renderPlayback();
    requestAnimationFrame(loop);
}
async function boot() {
    try {
        meta = await api.meta();
        styleSelect.replaceChildren(new Option("any style", "any"), ...meta.styles.map((s) => new Option(`style ${s}`, String(s))));
    }
    catch (err) {
        scene.banner = `cannot reach service: ${String(err)}`;
    }
    renderWidgets();
    void scene.queryNow();
    requestAnimationFrame(loop);
}
void boot();
