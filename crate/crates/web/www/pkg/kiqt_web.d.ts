/* tslint:disable */
/* eslint-disable */

/**
 * Row-major 8-bit grayscale image.
 */
export class GrayImage {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    pixels(): Uint8Array;
    /**
     * Opaque RGBA bytes, ready for `ImageData`.
     */
    rgba(): Uint8Array;
    readonly height: number;
    readonly width: number;
}

export class MaskPreview {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly achieved_rate: number;
    readonly image: GrayImage;
    readonly samples: number;
}

/**
 * A high-field reference, one reconstruction of its undersampled low-field
 * counterpart, and the metrics between them.
 */
export class SliceView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly error: GrayImage;
    /**
     * Log-magnitude of the undersampled k-space.
     */
    readonly kspace: GrayImage;
    readonly psnr: number;
    readonly recon: GrayImage;
    readonly reference: GrayImage;
    readonly ssim: number;
}

export function maskPreview(pattern: string, rate: number, size: number, seed: number): MaskPreview;

export function reconstructSlice(ckpt: Uint8Array, seed: number, size: number, pattern: string, rate: number, noise_sigma: number): SliceView;

export function simulateSlice(seed: number, size: number, pattern: string, rate: number, noise_sigma: number): SliceView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_grayimage_free: (a: number, b: number) => void;
    readonly __wbg_maskpreview_free: (a: number, b: number) => void;
    readonly __wbg_sliceview_free: (a: number, b: number) => void;
    readonly grayimage_height: (a: number) => number;
    readonly grayimage_pixels: (a: number) => [number, number];
    readonly grayimage_rgba: (a: number) => [number, number];
    readonly grayimage_width: (a: number) => number;
    readonly maskPreview: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly maskpreview_achieved_rate: (a: number) => number;
    readonly maskpreview_image: (a: number) => number;
    readonly maskpreview_samples: (a: number) => number;
    readonly reconstructSlice: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly simulateSlice: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly sliceview_error: (a: number) => number;
    readonly sliceview_kspace: (a: number) => number;
    readonly sliceview_psnr: (a: number) => number;
    readonly sliceview_recon: (a: number) => number;
    readonly sliceview_reference: (a: number) => number;
    readonly sliceview_ssim: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
