/* tslint:disable */
/* eslint-disable */

export class Curve {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly auc: number;
    readonly fractions: Float64Array;
    readonly probabilities: Float64Array;
}

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Attribution map of `target` by `method` (dmbp, grad, ig or sg).
     * `iterations` only affects dmbp.
     */
    explain(image: Uint8Array, target: number, method: string, iterations: number): Explanation;
    /**
     * Insertion curve of an explanation on the image it was computed for.
     */
    insertion(image: Uint8Array, explanation: Explanation, steps: number): Curve;
    constructor();
    /**
     * Softmax of the logits for an encoded image.
     */
    probabilities(image: Uint8Array): Float64Array;
    sample_png(index: number): Uint8Array | undefined;
    sample_target(index: number): number | undefined;
    readonly class_count: number;
    readonly model_id: string;
    readonly sample_count: number;
}

export class Explanation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Diverging heatmap as PNG bytes.
     */
    readonly heatmap: Uint8Array;
    readonly height: number;
    /**
     * Loss per iteration; empty for methods other than dmbp.
     */
    readonly losses: Float64Array;
    /**
     * Heatmap blended over the input, as PNG bytes.
     */
    readonly overlay: Uint8Array;
    readonly width: number;
    readonly y_neg: Float64Array;
    readonly y_nui: Float64Array;
    readonly y_pos: Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curve_free: (a: number, b: number) => void;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_explanation_free: (a: number, b: number) => void;
    readonly curve_auc: (a: number) => number;
    readonly curve_fractions: (a: number) => [number, number];
    readonly curve_probabilities: (a: number) => [number, number];
    readonly demo_class_count: (a: number) => number;
    readonly demo_explain: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly demo_insertion: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_model_id: (a: number) => [number, number];
    readonly demo_new: () => [number, number, number];
    readonly demo_probabilities: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_sample_count: (a: number) => number;
    readonly demo_sample_png: (a: number, b: number) => [number, number];
    readonly demo_sample_target: (a: number, b: number) => number;
    readonly explanation_heatmap: (a: number) => [number, number];
    readonly explanation_height: (a: number) => number;
    readonly explanation_losses: (a: number) => [number, number];
    readonly explanation_overlay: (a: number) => [number, number];
    readonly explanation_width: (a: number) => number;
    readonly explanation_y_neg: (a: number) => [number, number];
    readonly explanation_y_nui: (a: number) => [number, number];
    readonly explanation_y_pos: (a: number) => [number, number];
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
