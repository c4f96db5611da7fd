//! Resolves `--data` arguments: a canonical dataset directory or one of the
//! built-in generators, written `synth:<name>`.

use std::path::Path;
use std::sync::Arc;

use arma_core::data::{
    load_canonical, random_knn_graph, synth_band_signals, synth_sbm, toy_p2, BandConfig,
    GraphDataset, SbmConfig,
};

use crate::error::CliError;

pub const SYNTH_NAMES: &[&str] = &["sbm", "band", "toy-p2"];

pub fn load_dataset(spec: &str, seed: u64) -> Result<GraphDataset, CliError> {
    let Some(name) = spec.strip_prefix("synth:") else {
        let path = Path::new(spec);
        return load_canonical(path).map_err(|e| CliError::from(e).at(path));
    };
    let ds = match name {
        "sbm" => synth_sbm(&SbmConfig {
            seed,
            ..SbmConfig::default()
        }),
        "band" => random_knn_graph(100, 8, seed).and_then(|adj| {
            synth_band_signals(
                Arc::new(adj),
                &BandConfig {
                    seed,
                    ..BandConfig::default()
                },
            )
        }),
        "toy-p2" => Ok(toy_p2()),
        _ => {
            return Err(CliError::config(
                "unknown_generator",
                format!("unknown generator {name:?}; expected one of {SYNTH_NAMES:?}"),
            ))
        }
    };
    Ok(ds?)
}
