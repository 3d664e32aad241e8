/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_perturbed_free: (a: number, b: number) => void;
export const __wbg_scan_free: (a: number, b: number) => void;
export const perturbed_difference: (a: number) => [number, number];
export const perturbed_high_frequency: (a: number) => [number, number, number];
export const perturbed_view: (a: number, b: number, c: number) => [number, number, number, number];
export const scan_high_frequency: (a: number) => [number, number, number];
export const scan_label: (a: number) => [number, number];
export const scan_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const scan_perturb: (a: number, b: number, c: bigint) => number;
export const scan_size: (a: number) => number;
export const scan_view: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
