/* tslint:disable */
/* eslint-disable */

export class SceneExplorer {
    free(): void;
    [Symbol.dispose](): void;
    gaze_angle(who: number): number;
    /**
     * Head centre of person `who` in unit coordinates.
     */
    head_center(who: number): Float64Array;
    constructor(seed: number, _class: number);
    /**
     * `size × size` RGBA pixels; empty if `size` is unusable.
     */
    render_rgba(size: number): Uint8Array;
    /**
     * Points person `who` (0 principal, 1 associate) along `degrees`,
     * measured from +x towards +y (image rows grow downwards).
     */
    set_gaze_angle(who: number, degrees: number): void;
    summary_json(): string;
}

/**
 * Side of the square heatmap grid.
 */
export function heatmap_side(): number;

/**
 * Row-major heatmap target for a gaze point in unit coordinates; empty when
 * the point lies outside the image.
 */
export function heatmap_target(x: number, y: number): Float32Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_sceneexplorer_free: (a: number, b: number) => void;
    readonly heatmap_side: () => number;
    readonly heatmap_target: (a: number, b: number) => [number, number];
    readonly sceneexplorer_gaze_angle: (a: number, b: number) => number;
    readonly sceneexplorer_head_center: (a: number, b: number) => [number, number];
    readonly sceneexplorer_new: (a: number, b: number) => [number, number, number];
    readonly sceneexplorer_render_rgba: (a: number, b: number) => [number, number];
    readonly sceneexplorer_set_gaze_angle: (a: number, b: number, c: number) => void;
    readonly sceneexplorer_summary_json: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
