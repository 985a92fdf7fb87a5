/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curve_free: (a: number, b: number) => void;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_explanation_free: (a: number, b: number) => void;
export const curve_auc: (a: number) => number;
export const curve_fractions: (a: number) => [number, number];
export const curve_probabilities: (a: number) => [number, number];
export const demo_class_count: (a: number) => number;
export const demo_explain: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const demo_insertion: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const demo_model_id: (a: number) => [number, number];
export const demo_new: () => [number, number, number];
export const demo_probabilities: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_sample_count: (a: number) => number;
export const demo_sample_png: (a: number, b: number) => [number, number];
export const demo_sample_target: (a: number, b: number) => number;
export const explanation_heatmap: (a: number) => [number, number];
export const explanation_height: (a: number) => number;
export const explanation_losses: (a: number) => [number, number];
export const explanation_overlay: (a: number) => [number, number];
export const explanation_width: (a: number) => number;
export const explanation_y_neg: (a: number) => [number, number];
export const explanation_y_nui: (a: number) => [number, number];
export const explanation_y_pos: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
