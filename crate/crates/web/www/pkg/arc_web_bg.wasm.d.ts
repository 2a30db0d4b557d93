/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const attentionView: (a: any, b: number) => [number, number, number];
export const scoreGraph: (a: any) => [number, number, number];
export const smoothnessTable: (a: number, b: number, c: bigint) => [number, number, number];
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
