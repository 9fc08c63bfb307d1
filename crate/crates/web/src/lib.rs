//! WebAssembly bindings for the static demo page in `www/`.

pub mod demo;

use bae_core::Lang;
use wasm_bindgen::prelude::*;

use demo::{Demo, TrainSettings};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

fn lang(code: &str) -> Result<Lang, JsError> {
    match code {
        "x" | "X" => Ok(Lang::X),
        "y" | "Y" => Ok(Lang::Y),
        other => Err(js_err(format!("unknown language {other:?}"))),
    }
}

/// Synthetic corpus plus the most recently trained model. Every method
/// returns JSON text.
#[wasm_bindgen]
pub struct Session {
    demo: Demo,
}

#[wasm_bindgen]
impl Session {
    /// `synth_json` may be empty for the default corpus.
    #[wasm_bindgen(constructor)]
    pub fn new(synth_json: &str) -> Result<Session, JsError> {
        Ok(Session {
            demo: Demo::from_json(synth_json).map_err(js_err)?,
        })
    }

    pub fn words(&self, lang_code: &str) -> Result<String, JsError> {
        to_json(&self.demo.words(lang(lang_code)?))
    }

    #[wasm_bindgen(js_name = samplePairs)]
    pub fn sample_pairs(&self, n: usize) -> Result<String, JsError> {
        to_json(&self.demo.sample_pairs(n))
    }

    /// Trains from scratch; returns per-epoch curves and translation recovery.
    pub fn train(&mut self, settings_json: &str) -> Result<String, JsError> {
        let settings: TrainSettings = if settings_json.trim().is_empty() {
            TrainSettings::default()
        } else {
            serde_json::from_str(settings_json).map_err(js_err)?
        };
        to_json(&self.demo.train(&settings).map_err(js_err)?)
    }

    pub fn neighbors(&self, word: &str, lang_code: &str, cross: bool, k: usize) -> Result<String, JsError> {
        to_json(&self.demo.neighbors(word, lang(lang_code)?, cross, k).map_err(js_err)?)
    }

    /// `sizes_json` is an array of classifier training sizes.
    #[wasm_bindgen(js_name = accuracyBySize)]
    pub fn accuracy_by_size(&self, sizes_json: &str, seed: u64) -> Result<String, JsError> {
        let sizes: Vec<usize> = serde_json::from_str(sizes_json).map_err(js_err)?;
        to_json(&self.demo.accuracy_by_size(&sizes, seed).map_err(js_err)?)
    }
}
