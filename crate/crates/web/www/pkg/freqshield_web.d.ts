/* tslint:disable */
/* eslint-disable */

export class Perturbed {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Absolute difference from the clean image, stretched for display.
     */
    difference(): Uint8Array;
    high_frequency(): number;
    view(mode: string): Uint8Array;
}

export class Scan {
    free(): void;
    [Symbol.dispose](): void;
    high_frequency(): number;
    label(): Uint8Array;
    constructor(size: number, classes: number, contrast: number, seed: bigint);
    perturb(epsilon: number, seed: bigint): Perturbed;
    size(): number;
    /**
     * `mode` is one of `spatial`, `frequency`, `shift_frequency`.
     */
    view(mode: string): Uint8Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_perturbed_free: (a: number, b: number) => void;
    readonly __wbg_scan_free: (a: number, b: number) => void;
    readonly perturbed_difference: (a: number) => [number, number];
    readonly perturbed_high_frequency: (a: number) => [number, number, number];
    readonly perturbed_view: (a: number, b: number, c: number) => [number, number, number, number];
    readonly scan_high_frequency: (a: number) => [number, number, number];
    readonly scan_label: (a: number) => [number, number];
    readonly scan_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly scan_perturb: (a: number, b: number, c: bigint) => number;
    readonly scan_size: (a: number) => number;
    readonly scan_view: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
