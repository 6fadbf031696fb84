//! Versioned JSON model document.
//!
//! ```json
//! {
//!   "format": "infilter-model",
//!   "schema_version": 1,
//!   "model": {
//!     "w_plus": [...], "w_minus": [...], "b_plus": 0.1, "b_minus": -0.2,
//!     "gamma1": 0.5, "gamma_n": 1.0, "gamma_f": 0.5,
//!     "stats": { "mu": [...], "sigma": [...] },
//!     "bank": { "config": {...}, "bp_coeffs": [[...]], "lp_coeffs": [[...]],
//!               "center_freqs": [...], "band_edges": [[lo, hi], ...], "octave_of": [...] },
//!     "quant": null | { "bits": 8, "band_pass": {"word_bits": 8, "frac_bits": 7}, ... }
//!   }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a saved model
//! reproduces every value bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_machine::TrainedModel;

pub const FORMAT_NAME: &str = "infilter-model";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub schema_version: u32,
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(model: TrainedModel) -> Self {
        ModelFile {
            format: FORMAT_NAME.to_string(),
            schema_version: SCHEMA_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<ModelFile> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != FORMAT_NAME {
            return Err(Error::ModelFile(format!("unexpected format tag {:?}", file.format)));
        }
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::ModelFile(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        file.model
            .validate()
            .map_err(|e| Error::ModelFile(format!("inconsistent model: {e}")))?;
        Ok(file)
    }
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, ModelFile::new(model.clone()).to_json()?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    Ok(ModelFile::from_json(&fs::read_to_string(path)?)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{design_bank, FilterBankConfig, StandardizationStats};
    use crate::kernel_machine::GAMMA_N;
    use crate::trainer::quantize_model;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> TrainedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut draw = |n| (0..n).map(|_| rng.gen_range(-1.0..1.0) / 3.0).collect::<Vec<f64>>();
        TrainedModel {
            w_plus: draw(30),
            w_minus: draw(30),
            b_plus: 0.1 / 3.0,
            b_minus: -std::f64::consts::PI,
            gamma1: 0.5,
            gamma_n: GAMMA_N,
            gamma_f: 0.5,
            stats: StandardizationStats {
                mu: draw(30).iter().map(|v| v * 1e3).collect(),
                sigma: draw(30).iter().map(|v| v.abs() * 7.0 + 1e-300).collect(),
            },
            bank: design_bank(&FilterBankConfig::default()).unwrap(),
            quant: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        for m in [model(), quantize_model(&model(), 8).unwrap()] {
            save_model(&m, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, m);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
            assert_eq!(bits(&back.w_plus), bits(&m.w_plus));
            assert_eq!(bits(&back.stats.sigma), bits(&m.stats.sigma));
        }
    }

    #[test]
    fn rejects_foreign_or_inconsistent_documents() {
        let mut f = ModelFile::new(model());
        f.format = "other".into();
        assert!(matches!(ModelFile::from_json(&f.to_json().unwrap()), Err(Error::ModelFile(_))));
        let mut f = ModelFile::new(model());
        f.schema_version = 99;
        assert!(matches!(ModelFile::from_json(&f.to_json().unwrap()), Err(Error::ModelFile(_))));
        let mut f = ModelFile::new(model());
        f.model.w_minus.pop();
        assert!(matches!(ModelFile::from_json(&f.to_json().unwrap()), Err(Error::ModelFile(_))));
        assert!(matches!(ModelFile::from_json("{"), Err(Error::Json(_))));
    }
}
