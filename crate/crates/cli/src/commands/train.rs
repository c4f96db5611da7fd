use arma_core::data::save_checkpoint;
use arma_core::train::{build_model, train, DatasetShape, ModelConfig, TrainError, TrainReport};
use serde_json::json;

use crate::error::CliError;
use crate::output::{Format, RunDir};
use crate::source::load_dataset;
use crate::{read_json, TrainArgs};

fn write_report(run: &mut RunDir, report: &TrainReport) -> Result<(), CliError> {
    run.write_json("report.json", report)?;
    match run.format {
        Format::Csv => {
            let mut buf = Vec::new();
            report
                .write_curves_csv(&mut buf)
                .map_err(|e| CliError::output(&run.dir.join("curves.csv"), e))?;
            run.write_bytes("curves.csv", &buf)
        }
        Format::Json => run.write_json("curves.json", &report.epochs),
    }
}

pub fn run(args: &TrainArgs, format: Format) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => read_json::<ModelConfig>(path)?,
        None => ModelConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let ds = load_dataset(&args.data, cfg.seed)?;
    let mut model = build_model(&cfg, DatasetShape::of(&ds), cfg.seed)?;
    let mut out = RunDir::create(&args.out, format)?;
    let manifest = super::manifest(
        "train",
        args.config.as_deref(),
        &cfg,
        Some(&args.data),
        Some(cfg.seed),
    );

    let report = match train(&mut model, &ds, cfg.seed) {
        Ok(report) => report,
        Err(TrainError::Diverged { epoch, report }) => {
            write_report(&mut out, &report)?;
            out.finish(manifest)?;
            return Err(TrainError::Diverged { epoch, report }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_report(&mut out, &report)?;
    let ckpt = out.path("model.ckpt");
    save_checkpoint(&model.params, cfg.seed, &ckpt).map_err(|e| CliError::output(&ckpt, e))?;
    out.finish(manifest)?;

    let summary = json!({
        "command": "train",
        "dataset": report.dataset,
        "metric": report.metric,
        "epochs": report.epochs.len(),
        "best_epoch": report.best_epoch,
        "best_val_metric": report.best_val_metric,
        "test_metric": report.test_metric,
    });
    println!("{summary}");
    Ok(())
}
