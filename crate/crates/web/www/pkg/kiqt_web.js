/* @ts-self-types="./kiqt_web.d.ts" */

/**
 * Row-major 8-bit grayscale image.
 */
export class GrayImage {
    static __wrap(ptr) {
        const obj = Object.create(GrayImage.prototype);
        obj.__wbg_ptr = ptr;
        GrayImageFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        GrayImageFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_grayimage_free(ptr, 0);
    }
    /**
     * @returns {number}
     */
    get height() {
        const ret = wasm.grayimage_height(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * @returns {Uint8Array}
     */
    pixels() {
        const ret = wasm.grayimage_pixels(this.__wbg_ptr);
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * Opaque RGBA bytes, ready for `ImageData`.
     * @returns {Uint8Array}
     */
    rgba() {
        const ret = wasm.grayimage_rgba(this.__wbg_ptr);
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * @returns {number}
     */
    get width() {
        const ret = wasm.grayimage_width(this.__wbg_ptr);
        return ret >>> 0;
    }
}
if (Symbol.dispose) GrayImage.prototype[Symbol.dispose] = GrayImage.prototype.free;

export class MaskPreview {
    static __wrap(ptr) {
        const obj = Object.create(MaskPreview.prototype);
        obj.__wbg_ptr = ptr;
        MaskPreviewFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        MaskPreviewFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_maskpreview_free(ptr, 0);
    }
    /**
     * @returns {number}
     */
    get achieved_rate() {
        const ret = wasm.maskpreview_achieved_rate(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {GrayImage}
     */
    get image() {
        const ret = wasm.maskpreview_image(this.__wbg_ptr);
        return GrayImage.__wrap(ret);
    }
    /**
     * @returns {number}
     */
    get samples() {
        const ret = wasm.maskpreview_samples(this.__wbg_ptr);
        return ret >>> 0;
    }
}
if (Symbol.dispose) MaskPreview.prototype[Symbol.dispose] = MaskPreview.prototype.free;

/**
 * A high-field reference, one reconstruction of its undersampled low-field
 * counterpart, and the metrics between them.
 */
export class SliceView {
    static __wrap(ptr) {
        const obj = Object.create(SliceView.prototype);
        obj.__wbg_ptr = ptr;
        SliceViewFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        SliceViewFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_sliceview_free(ptr, 0);
    }
    /**
     * @returns {GrayImage}
     */
    get error() {
        const ret = wasm.sliceview_error(this.__wbg_ptr);
        return GrayImage.__wrap(ret);
    }
    /**
     * Log-magnitude of the undersampled k-space.
     * @returns {GrayImage}
     */
    get kspace() {
        const ret = wasm.sliceview_kspace(this.__wbg_ptr);
        return GrayImage.__wrap(ret);
    }
    /**
     * @returns {number}
     */
    get psnr() {
        const ret = wasm.sliceview_psnr(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {GrayImage}
     */
    get recon() {
        const ret = wasm.sliceview_recon(this.__wbg_ptr);
        return GrayImage.__wrap(ret);
    }
    /**
     * @returns {GrayImage}
     */
    get reference() {
        const ret = wasm.sliceview_reference(this.__wbg_ptr);
        return GrayImage.__wrap(ret);
    }
    /**
     * @returns {number}
     */
    get ssim() {
        const ret = wasm.sliceview_ssim(this.__wbg_ptr);
        return ret;
    }
}
if (Symbol.dispose) SliceView.prototype[Symbol.dispose] = SliceView.prototype.free;

/**
 * @param {string} pattern
 * @param {number} rate
 * @param {number} size
 * @param {number} seed
 * @returns {MaskPreview}
 */
export function maskPreview(pattern, rate, size, seed) {
    const ptr0 = passStringToWasm0(pattern, wasm.__wbindgen_malloc, wasm.__wbindgen_realloc);
    const len0 = WASM_VECTOR_LEN;
    const ret = wasm.maskPreview(ptr0, len0, rate, size, seed);
    if (ret[2]) {
        throw takeFromExternrefTable0(ret[1]);
    }
    return MaskPreview.__wrap(ret[0]);
}

/**
 * @param {Uint8Array} ckpt
 * @param {number} seed
 * @param {number} size
 * @param {string} pattern
 * @param {number} rate
 * @param {number} noise_sigma
 * @returns {SliceView}
 */
export function reconstructSlice(ckpt, seed, size, pattern, rate, noise_sigma) {
    const ptr0 = passArray8ToWasm0(ckpt, wasm.__wbindgen_malloc);
    const len0 = WASM_VECTOR_LEN;
    const ptr1 = passStringToWasm0(pattern, wasm.__wbindgen_malloc, wasm.__wbindgen_realloc);
    const len1 = WASM_VECTOR_LEN;
    const ret = wasm.reconstructSlice(ptr0, len0, seed, size, ptr1, len1, rate, noise_sigma);
    if (ret[2]) {
        throw takeFromExternrefTable0(ret[1]);
    }
    return SliceView.__wrap(ret[0]);
}

/**
 * @param {number} seed
 * @param {number} size
 * @param {string} pattern
 * @param {number} rate
 * @param {number} noise_sigma
 * @returns {SliceView}
 */
export function simulateSlice(seed, size, pattern, rate, noise_sigma) {
    const ptr0 = passStringToWasm0(pattern, wasm.__wbindgen_malloc, wasm.__wbindgen_realloc);
    const len0 = WASM_VECTOR_LEN;
    const ret = wasm.simulateSlice(seed, size, ptr0, len0, rate, noise_sigma);
    if (ret[2]) {
        throw takeFromExternrefTable0(ret[1]);
    }
    return SliceView.__wrap(ret[0]);
}
function __wbg_get_imports() {
    const import0 = {
        __proto__: null,
        __wbg_Error_30c8987f7c2ed4e2: function(arg0, arg1) {
            const ret = Error(getStringFromWasm0(arg0, arg1));
            return ret;
        },
        __wbg___wbindgen_throw_41e9ee4f547fc59a: function(arg0, arg1) {
            throw new Error(getStringFromWasm0(arg0, arg1));
        },
        __wbindgen_init_externref_table: function() {
            const table = wasm.__wbindgen_externrefs;
            const offset = table.grow(4);
            table.set(0, undefined);
            table.set(offset + 0, undefined);
            table.set(offset + 1, null);
            table.set(offset + 2, true);
            table.set(offset + 3, false);
        },
    };
    return {
        __proto__: null,
        "./kiqt_web_bg.js": import0,
    };
}

const GrayImageFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_grayimage_free(ptr, 1));
const MaskPreviewFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_maskpreview_free(ptr, 1));
const SliceViewFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_sliceview_free(ptr, 1));

function getArrayU8FromWasm0(ptr, len) {
    ptr = ptr >>> 0;
    return getUint8ArrayMemory0().subarray(ptr / 1, ptr / 1 + len);
}

function getStringFromWasm0(ptr, len) {
    return decodeText(ptr >>> 0, len);
}

let cachedUint8ArrayMemory0 = null;
function getUint8ArrayMemory0() {
    if (cachedUint8ArrayMemory0 === null || cachedUint8ArrayMemory0.byteLength === 0) {
        cachedUint8ArrayMemory0 = new Uint8Array(wasm.memory.buffer);
    }
    return cachedUint8ArrayMemory0;
}

function passArray8ToWasm0(arg, malloc) {
    const ptr = malloc(arg.length * 1, 1) >>> 0;
    getUint8ArrayMemory0().set(arg, ptr / 1);
    WASM_VECTOR_LEN = arg.length;
    return ptr;
}

function passStringToWasm0(arg, malloc, realloc) {
    if (realloc === undefined) {
        const buf = cachedTextEncoder.encode(arg);
        const ptr = malloc(buf.length, 1) >>> 0;
        getUint8ArrayMemory0().subarray(ptr, ptr + buf.length).set(buf);
        WASM_VECTOR_LEN = buf.length;
        return ptr;
    }

    let len = arg.length;
    let ptr = malloc(len, 1) >>> 0;

    const mem = getUint8ArrayMemory0();

    let offset = 0;

    for (; offset < len; offset++) {
        const code = arg.charCodeAt(offset);
        if (code > 0x7F) break;
        mem[ptr + offset] = code;
    }
    if (offset !== len) {
        if (offset !== 0) {
            arg = arg.slice(offset);
        }
        ptr = realloc(ptr, len, len = offset + arg.length * 3, 1) >>> 0;
        const view = getUint8ArrayMemory0().subarray(ptr + offset, ptr + len);
        const ret = cachedTextEncoder.encodeInto(arg, view);

        offset += ret.written;
        ptr = realloc(ptr, len, offset, 1) >>> 0;
    }

    WASM_VECTOR_LEN = offset;
    return ptr;
}

function takeFromExternrefTable0(idx) {
    const value = wasm.__wbindgen_externrefs.get(idx);
    wasm.__externref_table_dealloc(idx);
    return value;
}

let cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
cachedTextDecoder.decode();
const MAX_SAFARI_DECODE_BYTES = 2146435072;
let numBytesDecoded = 0;
function decodeText(ptr, len) {
    numBytesDecoded += len;
    if (numBytesDecoded >= MAX_SAFARI_DECODE_BYTES) {
        cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
        cachedTextDecoder.decode();
        numBytesDecoded = len;
    }
    return cachedTextDecoder.decode(getUint8ArrayMemory0().subarray(ptr, ptr + len));
}

const cachedTextEncoder = new TextEncoder();

if (!('encodeInto' in cachedTextEncoder)) {
    cachedTextEncoder.encodeInto = function (arg, view) {
        const buf = cachedTextEncoder.encode(arg);
        view.set(buf);
        return {
            read: arg.length,
            written: buf.length
        };
    };
}

let WASM_VECTOR_LEN = 0;

let wasmModule, wasmInstance, wasm;
function __wbg_finalize_init(instance, module) {
    wasmInstance = instance;
    wasm = instance.exports;
    wasmModule = module;
    cachedUint8ArrayMemory0 = null;
    wasm.__wbindgen_start();
    return wasm;
}

async function __wbg_load(module, imports) {
    if (typeof Response === 'function' && module instanceof Response) {
        if (!module.ok) {
            throw new Error(`failed to fetch Wasm: ${module.status} ${module.statusText} fetching '${module.url}'`);
        }

        if (typeof WebAssembly.instantiateStreaming === 'function') {
            try {
                return await WebAssembly.instantiateStreaming(module, imports);
            } catch (e) {
                const validResponse = expectedResponseType(module.type);

                if (validResponse && module.headers.get('Content-Type') !== 'application/wasm') {
                    console.warn("`WebAssembly.instantiateStreaming` failed because your server does not serve Wasm with `application/wasm` MIME type. Falling back to `WebAssembly.instantiate` which is slower. Original error:\n", e);

                } else { throw e; }
            }
        }

        const bytes = await module.arrayBuffer();
        return await WebAssembly.instantiate(bytes, imports);
    } else {
        const instance = await WebAssembly.instantiate(module, imports);

        if (instance instanceof WebAssembly.Instance) {
            return { instance, module };
        } else {
            return instance;
        }
    }

    function expectedResponseType(type) {
        switch (type) {
            case 'basic': case 'cors': case 'default': return true;
        }
        return false;
    }
}

function initSync(module) {
    if (wasm !== undefined) return wasm;


    if (module !== undefined) {
        if (Object.getPrototypeOf(module) === Object.prototype) {
            ({module} = module)
        } else {
            console.warn('using deprecated parameters for `initSync()`; pass a single object instead')
        }
    }

    const imports = __wbg_get_imports();
    if (!(module instanceof WebAssembly.Module)) {
        module = new WebAssembly.Module(module);
    }
    const instance = new WebAssembly.Instance(module, imports);
    return __wbg_finalize_init(instance, module);
}

async function __wbg_init(module_or_path) {
    if (wasm !== undefined) return wasm;


    if (module_or_path !== undefined) {
        if (Object.getPrototypeOf(module_or_path) === Object.prototype) {
            ({module_or_path} = module_or_path)
        } else {
            console.warn('using deprecated parameters for the initialization function; pass a single object instead')
        }
    }

    if (module_or_path === undefined) {
        module_or_path = new URL('kiqt_web_bg.wasm', import.meta.url);
    }
    const imports = __wbg_get_imports();

    if (typeof module_or_path === 'string' || (typeof Request === 'function' && module_or_path instanceof Request) || (typeof URL === 'function' && module_or_path instanceof URL)) {
        module_or_path = fetch(module_or_path);
    }

    const { instance, module } = await __wbg_load(await module_or_path, imports);

    return __wbg_finalize_init(instance, module);
}

export { initSync, __wbg_init as default };
