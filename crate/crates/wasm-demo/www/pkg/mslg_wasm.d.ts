/* tslint:disable */
/* eslint-disable */

/**
 * Both KL directions for one prediction/label pair given as logits.
 */
export class KlComparison {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly label: Float64Array;
    readonly pred: Float64Array;
    /**
     * `KL(yhat || f)`.
     */
    readonly v1: number;
    readonly v1_label_grad: Float64Array;
    readonly v1_pred_grad: Float64Array;
    /**
     * `KL(f || yhat)`.
     */
    readonly v2: number;
    /**
     * Gradient of `KL(f || yhat)` with respect to the label logits.
     */
    readonly v2_label_grad: Float64Array;
    /**
     * Gradient of `KL(f || yhat)` with respect to the prediction logits.
     */
    readonly v2_pred_grad: Float64Array;
}

export class Session {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `[xmin, xmax, ymin, ymax]` over all splits.
     */
    bounds(): Float64Array;
    classes(): number;
    /**
     * Predicted class on a `res x res` grid over `bounds()`, row 0 at the
     * top. `which` is `ce` or `mslg`.
     */
    decision_grid(which: string, res: number): Uint32Array;
    done(): boolean;
    epoch(): number;
    hard_labels(): Uint32Array;
    meta_labels(): Uint32Array;
    meta_points(): Float64Array;
    /**
     * 2-D blobs, split into train/meta/test (test is 20 %), with label noise
     * on the training split. `noise_kind` is `uniform` or
     * `feature_dependent`; `preset_name` is a training preset such as
     * `blobs`.
     */
    constructor(n: number, classes: number, separation: number, noise_kind: string, noise_ratio: number, meta_fraction: number, preset_name: string, seed: number);
    noisy_labels(): Uint32Array;
    /**
     * Current soft labels of the meta-trained run, row-major N x C.
     */
    soft_labels(): Float64Array;
    /**
     * One epoch of both runs. Returns `[epoch, ce_test_accuracy,
     * ce_train_loss, mslg_test_accuracy, mslg_train_loss, meta_loss,
     * label_recovery_rate, mean_grad_alignment]`, or an empty vector once
     * training is finished.
     */
    step(): Float64Array;
    /**
     * Test accuracy of `ce` or `mslg` right now.
     */
    test_accuracy(which: string): number;
    total_epochs(): number;
    /**
     * Training points as `x0, y0, x1, y1, ...`.
     */
    train_points(): Float64Array;
    true_labels(): Uint32Array;
    warmup_epochs(): number;
}

export function compare_kl(pred_logits: Float64Array, label_logits: Float64Array): KlComparison;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_klcomparison_free: (a: number, b: number) => void;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly compare_kl: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly klcomparison_label: (a: number) => [number, number];
    readonly klcomparison_pred: (a: number) => [number, number];
    readonly klcomparison_v1: (a: number) => number;
    readonly klcomparison_v1_label_grad: (a: number) => [number, number];
    readonly klcomparison_v1_pred_grad: (a: number) => [number, number];
    readonly klcomparison_v2: (a: number) => number;
    readonly klcomparison_v2_label_grad: (a: number) => [number, number];
    readonly klcomparison_v2_pred_grad: (a: number) => [number, number];
    readonly session_bounds: (a: number) => [number, number];
    readonly session_classes: (a: number) => number;
    readonly session_decision_grid: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly session_done: (a: number) => number;
    readonly session_epoch: (a: number) => number;
    readonly session_hard_labels: (a: number) => [number, number];
    readonly session_meta_labels: (a: number) => [number, number];
    readonly session_meta_points: (a: number) => [number, number];
    readonly session_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number];
    readonly session_noisy_labels: (a: number) => [number, number];
    readonly session_soft_labels: (a: number) => [number, number];
    readonly session_step: (a: number) => [number, number, number, number];
    readonly session_test_accuracy: (a: number, b: number, c: number) => [number, number, number];
    readonly session_total_epochs: (a: number) => number;
    readonly session_train_points: (a: number) => [number, number];
    readonly session_true_labels: (a: number) => [number, number];
    readonly session_warmup_epochs: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
