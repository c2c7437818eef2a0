/**
 * Orbit camera state and the math turning it into a camera pose.
 *
 * Azimuth is stored as an integer number of 1/65536-turn steps so that
 * wrapping is exact integer arithmetic: dragging a full 360 degrees
 * returns to bit-identical state, and therefore to a pixel-identical
 * server frame.
 */

export const AZIMUTH_STEPS = 65536;
export const MIN_DISTANCE = 1e-3;
const MAX_ELEVATION = Math.PI / 2 - 0.01;
const TWO_PI = Math.PI * 2;

export type Vec3 = [number, number, number];

export interface OrbitState {
  azimuthSteps: number; // integer in [0, AZIMUTH_STEPS)
  elevation: number; // radians, inside (-pi/2, pi/2)
  distance: number; // > 0
  target: Vec3;
}

export interface CameraPose {
  position: Vec3;
  forward: Vec3;
  up: Vec3;
}

export function makeOrbit(distance: number, target: Vec3 = [0, 0, 0]): OrbitState {
  return {
    azimuthSteps: Math.round(AZIMUTH_STEPS / 8),
    elevation: 0.35,
    distance: Math.max(distance, MIN_DISTANCE),
    target,
  };
}

export function azimuthRadians(state: OrbitState): number {
  return (state.azimuthSteps / AZIMUTH_STEPS) * TWO_PI;
}

function wrapSteps(steps: number): number {
  const n = Math.round(steps) % AZIMUTH_STEPS;
  return n < 0 ? n + AZIMUTH_STEPS : n;
}

export function rotate(state: OrbitState, dAzimuthSteps: number, dElevation: number): OrbitState {
  return {
    ...state,
    azimuthSteps: wrapSteps(state.azimuthSteps + dAzimuthSteps),
    elevation: Math.min(MAX_ELEVATION, Math.max(-MAX_ELEVATION, state.elevation + dElevation)),
  };
}

export function zoom(state: OrbitState, factor: number): OrbitState {
  return { ...state, distance: Math.max(MIN_DISTANCE, state.distance * factor) };
}

/** Spherical orbit around the target; the up hint stays world-up and the
 * server orthonormalizes. */
export function toCamera(state: OrbitState): CameraPose {
  const az = azimuthRadians(state);
  const ce = Math.cos(state.elevation);
  const dir: Vec3 = [ce * Math.sin(az), Math.sin(state.elevation), ce * Math.cos(az)];
  const position: Vec3 = [
    state.target[0] + dir[0] * state.distance,
    state.target[1] + dir[1] * state.distance,
    state.target[2] + dir[2] * state.distance,
  ];
  return {
    position,
    forward: [-dir[0], -dir[1], -dir[2]],
    up: [0, 1, 0],
  };
}
