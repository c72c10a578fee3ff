const LABEL_COLORS = {
    fast: "#e0564a",
    medium: "#e8a33d",
    slow: "#4a7fe0",
};
export function worldToScreen(v, vp) {
    // +z up on screen, +x right
    const px = vp.width / 2 + (v.x - vp.center.x) / vp.metersPerPixel;
    const py = vp.height / 2 - (v.z - vp.center.z) / vp.metersPerPixel;
    return [px, py];
}
export function candidateDraws(candidates, selectedKey, vp) {
    return candidates.map((c) => {
        const key = c.ids.map((id) => id.join(":")).join("|");
        return {
            points: c.polyline.map(([x, z]) => worldToScreen({ x, z }, vp)),
            color: LABEL_COLORS[c.label] ?? "#999999",
            width: key === selectedKey ? 3 : 1.5,
            label: `${c.label} ${c.duration}f`,
            selected: key === selectedKey,
        };
    });
}
export function markerDraw(m, vp) {
    const at = worldToScreen(m.pos, vp);
    const tip = worldToScreen({ x: m.pos.x + 0.4 * m.facing.x, z: m.pos.z + 0.4 * m.facing.z }, vp);
    return { at, tip };
}
/**
 * Stick-figure segments for the elevated playback pane: a follow camera
 * centered on the root, simple axonometric projection so depth along
 * the path reads as a slight diagonal.
 */
export function skeletonSegments(frame, skeleton, scale, originPx) {
    const root = frame.root_pos;
    const project = (p) => {
        const dx = p[0] - root[0];
        const dz = p[2] - root[2];
        return [
            originPx[0] + (dx * 0.92 + dz * 0.38) * scale,
            originPx[1] - (p[1] + dz * 0.18) * scale,
        ];
    };
    const segs = [];
    for (let j = 0; j < skeleton.parents.length; j++) {
        const parent = skeleton.parents[j];
        if (parent < 0)
            continue;
        segs.push({ a: project(frame.world_pos[parent]),
            b: project(frame.world_pos[j]) });
    }
    return segs;
}
/** Top-down bone dots for the authoring pane (root path context). */
export function skeletonGroundDots(frame, vp) {
    return frame.world_pos.map((p) => worldToScreen({ x: p[0], z: p[2] }, vp));
}
