/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_grayimage_free: (a: number, b: number) => void;
export const __wbg_maskpreview_free: (a: number, b: number) => void;
export const __wbg_sliceview_free: (a: number, b: number) => void;
export const grayimage_height: (a: number) => number;
export const grayimage_pixels: (a: number) => [number, number];
export const grayimage_rgba: (a: number) => [number, number];
export const grayimage_width: (a: number) => number;
export const maskPreview: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const maskpreview_achieved_rate: (a: number) => number;
export const maskpreview_image: (a: number) => number;
export const maskpreview_samples: (a: number) => number;
export const reconstructSlice: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const simulateSlice: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const sliceview_error: (a: number) => number;
export const sliceview_kspace: (a: number) => number;
export const sliceview_psnr: (a: number) => number;
export const sliceview_recon: (a: number) => number;
export const sliceview_reference: (a: number) => number;
export const sliceview_ssim: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
