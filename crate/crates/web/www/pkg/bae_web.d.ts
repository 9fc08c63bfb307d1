/* tslint:disable */
/* eslint-disable */

/**
 * Synthetic corpus plus the most recently trained model. Every method
 * returns JSON text.
 */
export class Session {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `sizes_json` is an array of classifier training sizes.
     */
    accuracyBySize(sizes_json: string, seed: bigint): string;
    neighbors(word: string, lang_code: string, cross: boolean, k: number): string;
    /**
     * `synth_json` may be empty for the default corpus.
     */
    constructor(synth_json: string);
    samplePairs(n: number): string;
    /**
     * Trains from scratch; returns per-epoch curves and translation recovery.
     */
    train(settings_json: string): string;
    words(lang_code: string): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly session_accuracyBySize: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly session_neighbors: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly session_new: (a: number, b: number) => [number, number, number];
    readonly session_samplePairs: (a: number, b: number) => [number, number, number, number];
    readonly session_train: (a: number, b: number, c: number) => [number, number, number, number];
    readonly session_words: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
