/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const kmeans_circle: (a: number, b: number, c: number, d: number) => [number, number];
export const pretrain_curve: (a: number, b: number, c: number, d: number) => [number, number];
export const separation_demo: (a: number, b: number, c: number, d: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
