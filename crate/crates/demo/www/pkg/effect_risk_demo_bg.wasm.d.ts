/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const estimated_curve_json: (a: number, b: bigint, c: number) => [number, number, number, number];
export const normal_effect_json: (a: number, b: number, c: number) => [number, number, number, number];
export const population_bounds_json: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
