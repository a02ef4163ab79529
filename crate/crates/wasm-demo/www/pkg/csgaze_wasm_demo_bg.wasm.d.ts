/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_sceneexplorer_free: (a: number, b: number) => void;
export const heatmap_side: () => number;
export const heatmap_target: (a: number, b: number) => [number, number];
export const sceneexplorer_gaze_angle: (a: number, b: number) => number;
export const sceneexplorer_head_center: (a: number, b: number) => [number, number];
export const sceneexplorer_new: (a: number, b: number) => [number, number, number];
export const sceneexplorer_render_rgba: (a: number, b: number) => [number, number];
export const sceneexplorer_set_gaze_angle: (a: number, b: number, c: number) => void;
export const sceneexplorer_summary_json: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
