import type { Candidate, Marker, SkeletonMeta, WireFrame } from "./types.js";

/**
 * Pure geometry: scene state to draw lists. The canvas layer only
 * strokes what these produce, so rendering decisions stay testable.
 */

export interface Viewport {
  width: number;
  height: number;
  metersPerPixel: number;
  center: { x: number; z: number };
}

export interface PolylineDraw {
  points: [number, number][]; // pixels
  color: string;
  width: number;
  label: string;
  selected: boolean;
}

export interface SegmentDraw {
  a: [number, number];
  b: [number, number];
}

const LABEL_COLORS: Record<string, string> = {
  fast: "#e0564a",
  medium: "#e8a33d",
  slow: "#4a7fe0",
};

export function worldToScreen(v: { x: number; z: number },
                              vp: Viewport): [number, number] {
  // +z up on screen, +x right
  const px = vp.width / 2 + (v.x - vp.center.x) / vp.metersPerPixel;
  const py = vp.height / 2 - (v.z - vp.center.z) / vp.metersPerPixel;
  return [px, py];
}

export function candidateDraws(candidates: Candidate[],
                               selectedKey: string | null,
                               vp: Viewport): PolylineDraw[] {
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

export function markerDraw(m: Marker, vp: Viewport): {
  at: [number, number];
  tip: [number, number];
} {
  const at = worldToScreen(m.pos, vp);
  const tip = worldToScreen(
    { x: m.pos.x + 0.4 * m.facing.x, z: m.pos.z + 0.4 * m.facing.z }, vp);
  return { at, tip };
}

/**
 * Stick-figure segments for the elevated playback pane: a follow camera
 * centered on the root, simple axonometric projection so depth along
 * the path reads as a slight diagonal.
 */
export function skeletonSegments(frame: WireFrame, skeleton: SkeletonMeta,
                                 scale: number, originPx: [number, number],
                                 ): SegmentDraw[] {
  const root = frame.root_pos;
  const project = (p: [number, number, number]): [number, number] => {
    const dx = p[0] - root[0];
    const dz = p[2] - root[2];
    return [
      originPx[0] + (dx * 0.92 + dz * 0.38) * scale,
      originPx[1] - (p[1] + dz * 0.18) * scale,
    ];
  };
  const segs: SegmentDraw[] = [];
  for (let j = 0; j < skeleton.parents.length; j++) {
    const parent = skeleton.parents[j];
    if (parent < 0) continue;
    segs.push({ a: project(frame.world_pos[parent]),
                b: project(frame.world_pos[j]) });
  }
  return segs;
}

/** Top-down bone dots for the authoring pane (root path context). */
export function skeletonGroundDots(frame: WireFrame, vp: Viewport,
                                   ): [number, number][] {
  return frame.world_pos.map((p) => worldToScreen({ x: p[0], z: p[2] }, vp));
}
