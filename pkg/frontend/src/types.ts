/** Wire types mirroring the authoring service JSON API. */

export interface Vec2 {
  x: number;
  z: number;
}

export interface Marker {
  pos: Vec2;
  /** unit ground-plane facing */
  facing: Vec2;
}

export interface Candidate {
  ids: number[][];
  duration: number;
  label: "fast" | "medium" | "slow";
  error: number;
  polyline: [number, number][];
}

export interface QueryResponse {
  candidates: Candidate[];
}

export interface WireFrame {
  root_pos: [number, number, number];
  rotations: number[][];
  world_pos: [number, number, number][];
}

export interface InbetweenResponse {
  tta0: number;
  frames: WireFrame[];
  pose_wire_version: number;
}

export interface SkeletonMeta {
  names: string[];
  parents: number[];
}

export interface Meta {
  styles: number[];
  model_version: number;
  gallery: { trajectories: number; clips: number; alpha: number };
  pose_wire_version: number;
  skeleton: SkeletonMeta;
}

export type DurationFilter = "all" | "fast" | "medium" | "slow";
