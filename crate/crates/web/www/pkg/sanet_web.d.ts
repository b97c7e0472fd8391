/* tslint:disable */
/* eslint-disable */

/**
 * Spherical K-means on noisy points around `k` random directions in the plane.
 */
export function kmeans_circle(seed: number, k: number, points: number, spread: number): string;

/**
 * Pretrains a codec on a short synthetic corpus and returns its loss curve.
 */
export function pretrain_curve(feature_dim: number, learning_rate: number, steps: number, seed: number): string;

/**
 * Mixes a harmonic tone with band-limited noise, separates the mixture with
 * an oracle embedder and reports waveforms, masks and SI-SDR.
 */
export function separation_demo(seed: number, gain: number, noise_sigma: number, temperature: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly kmeans_circle: (a: number, b: number, c: number, d: number) => [number, number];
    readonly pretrain_curve: (a: number, b: number, c: number, d: number) => [number, number];
    readonly separation_demo: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
