use std::path::{Path, PathBuf};

use har_core::data::{apply_scaling, fit_scaling, load_csv, load_feature_rows, rmse, TargetSelector};
use har_core::experiments::{
    run_benchmark, run_convergence, run_demo, BenchmarkConfig, ConvergenceConfig, DemoConfig,
};
use har_core::model_io::ModelDocument;
use har_core::{tune, HarError, KernelFamily, Result, TuningConfig};
use serde_json::{json, Value};

use crate::settings::{KernelArg, RunConfig, Settings};

fn tuning(s: &Settings) -> TuningConfig {
    TuningConfig {
        epsilon: s.epsilon.expect("defaulted"),
        grid_count: s.grid.expect("defaulted"),
        ..TuningConfig::default()
    }
}

fn families(methods: &[KernelArg]) -> Vec<KernelFamily> {
    methods.iter().map(|m| m.family(0)).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// `report.csv` -> `report.json`; `report.json` -> `report.json.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let p = out.with_extension("json");
    if p == out {
        let mut s = out.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    } else {
        p
    }
}

fn timings_path(out: &Path) -> PathBuf {
    let mut s = out.with_extension("").into_os_string();
    s.push(".timings.csv");
    PathBuf::from(s)
}

fn out_path(s: &Settings) -> &Path {
    s.out.as_deref().expect("required")
}

fn target(s: &Settings) -> TargetSelector {
    TargetSelector::from(s.target.clone())
}

fn tune_on_file(s: &Settings) -> Result<(har_core::data::Dataset<f64>, har_core::TuningResultF64, har_core::FittedModelF64)> {
    let data = load_csv::<f64>(s.data.as_deref().expect("required"), &target(s))?;
    let family = s.kernel.expect("defaulted").family(s.order.expect("defaulted"));
    log::info!(
        "tuning {family} on {} rows x {} features",
        data.features.nrows(),
        data.features.ncols()
    );
    let scaling = fit_scaling(&data.features);
    let x = apply_scaling(&scaling, &data.features)?;
    let (result, model) = tune(&x, &data.target, family, &tuning(s))?;
    Ok((data, result, model.with_scaling(scaling)))
}

pub fn fit(run: &RunConfig) -> Result<Value> {
    let s = &run.settings;
    let (data, result, model) = tune_on_file(s)?;
    let fitted = model.predict_raw(&data.features)?;
    let train_rmse = rmse(&fitted, &data.target)?;
    let mut doc = ModelDocument::from_model(&model);
    doc.feature_names = data.feature_names.clone();
    doc.target_name = Some(data.target_name.clone());
    doc.run_config = run.to_value();
    doc.save(out_path(s))?;
    Ok(json!({
        "command": "fit",
        "kernel": model.spec,
        "lambda": model.lambda,
        "jitter": model.jitter,
        "loocv_mse": result.selected_error(),
        "train_rmse": train_rmse,
        "n": data.features.nrows(),
        "p": data.features.ncols(),
        "dropped_rows": data.dropped_rows,
        "model": out_path(s),
    }))
}

pub fn tune_cmd(run: &RunConfig) -> Result<Value> {
    let s = &run.settings;
    let (data, result, model) = tune_on_file(s)?;
    let candidates: Vec<Value> = result
        .candidates
        .iter()
        .zip(&result.loocv_errors)
        .map(|((spec, lambda), err)| json!({ "kernel": spec, "lambda": lambda, "loocv_mse": err }))
        .collect();
    let summary = json!({
        "command": "tune",
        "kernel": model.spec,
        "lambda": model.lambda,
        "loocv_mse": result.selected_error(),
        "n": data.features.nrows(),
        "p": data.features.ncols(),
        "out": out_path(s),
    });
    write_json(
        out_path(s),
        &json!({
            "run_config": run.to_value(),
            "selected": result.selected,
            "candidates": candidates,
            "summary": summary,
        }),
    )?;
    Ok(summary)
}

pub fn predict(run: &RunConfig) -> Result<Value> {
    let s = &run.settings;
    let model_path = s.model.as_deref().expect("required");
    let doc = ModelDocument::<f64>::load(model_path)?;
    if doc.feature_names.is_empty() {
        return Err(HarError::InvalidInput(format!(
            "model {} does not record feature names",
            model_path.display()
        )));
    }
    let model = doc.to_model()?;
    let (features, header, records) = load_feature_rows::<f64>(s.data.as_deref().expect("required"), &doc.feature_names)?;
    let predictions = match &features {
        Some(f) => model.predict_raw(f)?,
        None => Vec::new(),
    };
    let mut w = csv::Writer::from_path(out_path(s)).map_err(HarError::from)?;
    let mut head: Vec<String> = header.iter().map(str::to_string).collect();
    let mut column = String::from("prediction");
    while head.contains(&column) {
        column.push('_');
    }
    head.push(column);
    w.write_record(&head).map_err(HarError::from)?;
    for (rec, p) in records.iter().zip(&predictions) {
        let mut row: Vec<String> = rec.iter().map(str::to_string).collect();
        row.push(p.to_string());
        w.write_record(&row).map_err(HarError::from)?;
    }
    w.flush()?;
    write_json(
        &sidecar_path(out_path(s)),
        &json!({ "run_config": run.to_value(), "model_fingerprint": doc.gram_fingerprint, "rows": predictions.len() }),
    )?;
    Ok(json!({ "command": "predict", "rows": predictions.len(), "out": out_path(s) }))
}

pub fn simulate(run: &RunConfig) -> Result<Value> {
    let s = &run.settings;
    let config = DemoConfig {
        n: s.n.expect("defaulted"),
        grid_points: s.grid_points.expect("defaulted"),
        seed: s.seed.expect("defaulted"),
        methods: families(s.methods.as_deref().expect("defaulted")),
        tuning: tuning(s),
    };
    let output = run_demo(&config)?;
    write_text(out_path(s), &output.to_csv())?;
    write_json(
        &sidecar_path(out_path(s)),
        &json!({ "run_config": run.to_value(), "demo": output }),
    )?;
    Ok(json!({ "command": "simulate", "selected": output.selected, "out": out_path(s) }))
}

pub fn convergence(run: &RunConfig) -> Result<Value> {
    let s = &run.settings;
    let config = ConvergenceConfig {
        n_values: s.n_values.clone().expect("defaulted"),
        replications: s.reps.expect("defaulted"),
        test_size: s.test_size.expect("defaulted"),
        seed: s.seed.expect("defaulted"),
        tuning: tuning(s),
    };
    let report = run_convergence(&config)?;
    write_text(out_path(s), &report.to_csv())?;
    write_json(
        &sidecar_path(out_path(s)),
        &json!({ "run_config": run.to_value(), "report": report }),
    )?;
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| json!({ "n": r.n, "mean_rmse": r.mean_rmse, "ratio": r.ratio }))
        .collect();
    Ok(json!({ "command": "convergence", "rows": rows, "out": out_path(s) }))
}

pub fn bench(run: &RunConfig) -> Result<Value> {
    let s = &run.settings;
    let config = BenchmarkConfig {
        datasets: s.datasets.clone().expect("required"),
        methods: families(s.methods.as_deref().expect("defaulted")),
        repeats: s.repeats.expect("defaulted"),
        seed: s.seed.expect("defaulted"),
        max_rows: s.max_rows.filter(|&m| m > 0),
        train_fraction: s.train_frac.expect("defaulted"),
        target: target(s),
        tuning: tuning(s),
    };
    let report = run_benchmark(&config)?;
    write_text(out_path(s), &report.to_csv())?;
    write_json(
        &sidecar_path(out_path(s)),
        &json!({ "run_config": run.to_value(), "report": report }),
    )?;
    write_text(&timings_path(out_path(s)), &report.timings_csv())?;
    let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
    Ok(json!({
        "command": "bench",
        "cells": report.cells.len(),
        "failed_cells": failed,
        "out": out_path(s),
    }))
}
