/* tslint:disable */
/* eslint-disable */

/**
 * `n_frames` densities on a shared grid, row-major in `values`.
 */
export class Frames {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * JSON with the run's headline numbers.
     */
    readonly info: string;
    readonly reference: Float64Array;
    readonly times: Float64Array;
    readonly values: Float64Array;
    readonly x: Float64Array;
}

export function classicBridge(mean0: number, var0: number, mean1: number, var1: number, sigma2: number, n_frames: number): Frames;

export function measure(wavenumber: number, t: number, a: number, b: number): Frames;

export function quantumBridge(wavenumber: number, target_mean: number, target_var: number, n_frames: number): Frames;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_frames_free: (a: number, b: number) => void;
    readonly classicBridge: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly frames_info: (a: number) => [number, number];
    readonly frames_reference: (a: number) => [number, number];
    readonly frames_times: (a: number) => [number, number];
    readonly frames_values: (a: number) => [number, number];
    readonly frames_x: (a: number) => [number, number];
    readonly measure: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly quantumBridge: (a: number, b: number, c: number, d: number) => [number, number, number];
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
