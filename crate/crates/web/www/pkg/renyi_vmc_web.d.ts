/* tslint:disable */
/* eslint-disable */

/**
 * Energy and entropy per site of the Gibbs and Rényi ensembles on a chain
 * for `steps + 1` evenly spaced β in `[0, beta_max]`.
 */
export function curves(n: number, h_z: number, h_x: number, beta_max: number, steps: number): string;

/**
 * Optimize an MPDO on a short chain with exact enumeration instead of
 * sampling, so the trace is noise-free. Returns the per-iteration `F_R`
 * and the exact optimum for comparison.
 */
export function optimize(n: number, bond_dim: number, beta_r: number, iterations: number, learning_rate: number, seed: bigint): string;

/**
 * Site orders of the first `n_s` snake strings on an `lx × ly` lattice.
 */
export function snakes(lx: number, ly: number, n_s: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly curves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly optimize: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly snakes: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
