/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_frames_free: (a: number, b: number) => void;
export const classicBridge: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const frames_info: (a: number) => [number, number];
export const frames_reference: (a: number) => [number, number];
export const frames_times: (a: number) => [number, number];
export const frames_values: (a: number) => [number, number];
export const frames_x: (a: number) => [number, number];
export const measure: (a: number, b: number, c: number, d: number) => [number, number, number];
export const quantumBridge: (a: number, b: number, c: number, d: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
