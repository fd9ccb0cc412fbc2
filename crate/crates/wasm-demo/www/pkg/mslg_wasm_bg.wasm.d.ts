/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_klcomparison_free: (a: number, b: number) => void;
export const __wbg_session_free: (a: number, b: number) => void;
export const compare_kl: (a: number, b: number, c: number, d: number) => [number, number, number];
export const klcomparison_label: (a: number) => [number, number];
export const klcomparison_pred: (a: number) => [number, number];
export const klcomparison_v1: (a: number) => number;
export const klcomparison_v1_label_grad: (a: number) => [number, number];
export const klcomparison_v1_pred_grad: (a: number) => [number, number];
export const klcomparison_v2: (a: number) => number;
export const klcomparison_v2_label_grad: (a: number) => [number, number];
export const klcomparison_v2_pred_grad: (a: number) => [number, number];
export const session_bounds: (a: number) => [number, number];
export const session_classes: (a: number) => number;
export const session_decision_grid: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const session_done: (a: number) => number;
export const session_epoch: (a: number) => number;
export const session_hard_labels: (a: number) => [number, number];
export const session_meta_labels: (a: number) => [number, number];
export const session_meta_points: (a: number) => [number, number];
export const session_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number];
export const session_noisy_labels: (a: number) => [number, number];
export const session_soft_labels: (a: number) => [number, number];
export const session_step: (a: number) => [number, number, number, number];
export const session_test_accuracy: (a: number, b: number, c: number) => [number, number, number];
export const session_total_epochs: (a: number) => number;
export const session_train_points: (a: number) => [number, number];
export const session_true_labels: (a: number) => [number, number];
export const session_warmup_epochs: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
