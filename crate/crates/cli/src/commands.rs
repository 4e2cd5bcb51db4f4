use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fnfm::data::{cache, load_csv_split, read_csv, Dataset, EncodedExample, FieldSchema, RowEncoder};
use fnfm::harness::{self, gradient_gate, spread_ratio, Splits, TrainReport};
use fnfm::metrics::MetricsReport;
use fnfm::model::{ModelKind, ModelSpec};
use fnfm::store;
use serde_json::json;

use crate::config::{DataSource, RunConfig};
use crate::error::CliError;

/// Creates the output directory and logs the resolved config into it.
fn prepare_out(config: &RunConfig, out: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write(&out.join("config.json"), &config.to_json())?;
    Ok(out.to_path_buf())
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let v = serde_json::to_value(v).expect("serializable");
    serde_json::to_string_pretty(&v).expect("value serializes") + "\n"
}

fn load_splits(config: &RunConfig) -> Result<Splits, CliError> {
    let data = &config.data;
    let splits = match data.source {
        DataSource::Synthetic => harness::gen_synthetic(&config.synthetic)?.splits,
        DataSource::Cache => {
            let dir = data
                .dir
                .as_ref()
                .ok_or_else(|| CliError::Config("data.source is cache but data.dir is not set".into()))?;
            let test = dir.join("test.fnds");
            Splits {
                train: cache::read(&dir.join("train.fnds"))?,
                validation: cache::read(&dir.join("validation.fnds"))?,
                test: if test.exists() { Some(cache::read(&test)?) } else { None },
            }
        }
        DataSource::Csv => {
            let csv = data
                .csv
                .as_ref()
                .ok_or_else(|| CliError::Config("data.source is csv but data.csv is not set".into()))?;
            let (_, outcome) = load_csv_split(csv, &data.schema, &data.split, data.subsample, config.train.exec)?;
            Splits {
                train: outcome.train,
                validation: outcome.validation,
                test: Some(outcome.test),
            }
        }
    };
    splits.check()?;
    Ok(splits)
}

fn write_splits(out: &Path, train: &Dataset, validation: &Dataset, test: Option<&Dataset>) -> Result<(), CliError> {
    cache::write(train, &out.join("train.fnds"))?;
    cache::write(validation, &out.join("validation.fnds"))?;
    if let Some(t) = test {
        cache::write(t, &out.join("test.fnds"))?;
    }
    Ok(())
}

/// Per-dimension MLP-input std per epoch (0 = before training), long format.
fn diagnostics_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,stage,dim,std\n");
    let initial = report.initial_diagnostics.as_ref().map(|d| (0, d));
    let epochs = report.epochs.iter().filter_map(|e| e.diagnostics.as_ref().map(|d| (e.epoch, d)));
    for (epoch, d) in initial.into_iter().chain(epochs) {
        for (stage, values) in [("pre_bn", &d.pre_bn_std), ("mlp_input", &d.mlp_input_std)] {
            for (dim, v) in values.iter().enumerate() {
                let _ = writeln!(s, "{epoch},{stage},{dim},{v}");
            }
        }
    }
    s
}

fn write_report(out: &Path, stem: &str, report: &TrainReport) -> Result<(), CliError> {
    write(&out.join(format!("{stem}.json")), &pretty(report))?;
    write(&out.join(format!("{stem}.jsonl")), &report.to_jsonl())?;
    if report.initial_diagnostics.is_some() {
        write(&out.join(format!("{stem}_diagnostics.csv")), &diagnostics_csv(report))?;
    }
    Ok(())
}

fn summary(label: &str, r: &TrainReport) -> String {
    let test = r
        .test
        .as_ref()
        .map(|t| format!(" test logloss {:.5} auc {}", t.logloss, t.auc.map_or("-".into(), |a| format!("{a:.5}"))))
        .unwrap_or_default();
    format!(
        "{label}: best val logloss {:.5} at epoch {} of {}{test}",
        r.best_val_loss,
        r.best_epoch,
        r.epochs.len()
    )
}

pub fn prep(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let out = prepare_out(config, out)?;
    let csv = config
        .data
        .csv
        .as_ref()
        .ok_or_else(|| CliError::Config("prep needs --input or data.csv".into()))?;
    let d = &config.data;
    let (schema, outcome) = load_csv_split(csv, &d.schema, &d.split, d.subsample, config.train.exec)?;
    write_splits(&out, &outcome.train, &outcome.validation, Some(&outcome.test))?;
    let info = json!({
        "fields": schema.num_fields(),
        "features": schema.num_features(),
        "days": outcome.days,
        "rows": {
            "train": outcome.train.len(),
            "validation": outcome.validation.len(),
            "test": outcome.test.len(),
        },
        "rejected": outcome.rejected,
    });
    write(&out.join("prep.json"), &pretty(&info))?;
    println!(
        "{} train / {} validation / {} test rows, {} rejected",
        outcome.train.len(),
        outcome.validation.len(),
        outcome.test.len(),
        outcome.rejected.total()
    );
    Ok(())
}

pub fn synth(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let out = prepare_out(config, out)?;
    let data = harness::gen_synthetic(&config.synthetic)?;
    let s = &data.splits;
    write_splits(&out, &s.train, &s.validation, s.test.as_ref())?;
    let t = &data.truth;
    let info = json!({
        "spec": data.spec,
        "bayes_logloss": {
            "train": t.bayes_train,
            "validation": t.bayes_validation,
            "test": t.bayes_test,
        },
        "marginal": t.marginal,
    });
    write(&out.join("truth.json"), &pretty(&info))?;
    println!("bayes validation logloss {:.5}, marginal {:.4}", t.bayes_validation, t.marginal);
    Ok(())
}

pub fn train(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let out = prepare_out(config, out)?;
    let splits = load_splits(config)?;
    let outcome = harness::train(&config.train, &splits)?;
    store::save(&outcome.model, &out.join("model.fnfm"))?;
    write_report(&out, "report", &outcome.report)?;
    if let Some(t) = &outcome.report.test {
        write(&out.join("metrics.json"), &(t.to_json() + "\n"))?;
    }
    println!("{}", summary(config.train.model.kind.name(), &outcome.report));
    Ok(())
}

fn read_labeled(path: &Path, schema: &FieldSchema) -> Result<Vec<EncodedExample>, CliError> {
    let (header, records) = read_csv(path)?;
    let encoder = RowEncoder::new(schema.clone(), &header)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| encoder.encode(r).map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn eval(config: &RunConfig, out: &Path, model: &Path, data: &Path) -> Result<(), CliError> {
    let out = prepare_out(config, out)?;
    let frozen = store::load(model)?;
    let is_csv = data.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let examples = if is_csv {
        read_labeled(data, frozen.schema())?
    } else {
        let ds = cache::read(data)?;
        if ds.schema() != frozen.schema() {
            return Err(CliError::Data(format!("{} was encoded under a different schema", data.display())));
        }
        ds.examples().to_vec()
    };
    let p = frozen.predict(&examples, config.train.exec)?;
    let labels: Vec<f64> = examples.iter().map(|e| e.label_f64()).collect();
    let split = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report = MetricsReport::compute(frozen.kind().name(), split, &p, &labels)?;
    let line = report.to_json() + "\n";
    write(&out.join("eval.json"), &line)?;
    print!("{line}");
    Ok(())
}

pub fn predict(config: &RunConfig, out: &Path, model: &Path, input: &Path) -> Result<(), CliError> {
    let out = prepare_out(config, out)?;
    let frozen = store::load(model)?;
    let (header, records) = read_csv(input)?;
    let encoder = RowEncoder::new(frozen.schema().clone(), &header)?;
    let examples = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let slots = encoder
                .encode_features(r)
                .map_err(|e| CliError::Data(format!("{} row {}: {e}", input.display(), i + 1)))?;
            Ok(EncodedExample { label: 0, slots })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let p = frozen.predict(&examples, config.train.exec)?;
    let mut text = String::new();
    for v in &p {
        let _ = writeln!(text, "{v}");
    }
    write(&out.join("predictions.csv"), &text)?;
    print!("{text}");
    Ok(())
}

/// Toy schema used by `gradcheck`: three fields, `D = 2`, hidden `[4]`, batch 8.
pub fn gradcheck_spec(kind: ModelKind, batchnorm: bool) -> ModelSpec {
    match kind {
        ModelKind::Lr => ModelSpec::lr(),
        k if k.is_deep() => ModelSpec::new(k, 2, vec![4], batchnorm),
        k => ModelSpec::new(k, 2, vec![], false),
    }
}

pub fn gradcheck(config: &RunConfig, out: &Path, kind: Option<ModelKind>) -> Result<(), CliError> {
    let out = prepare_out(config, out)?;
    let kinds = kind.map_or(ModelKind::ALL.to_vec(), |k| vec![k]);
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for kind in kinds {
        let variants: &[bool] = if kind.is_deep() { &[false, true] } else { &[false] };
        for &bn in variants {
            let spec = gradcheck_spec(kind, bn);
            let report = gradient_gate(&spec, 3, 8, config.train.l2, config.train.seed)?;
            let verdict = if report.passed() { "ok" } else { "FAIL" };
            println!("{:<7} bn={bn:<5} max relative error {:.3e} {verdict}", kind.name(), report.max_error());
            if !report.passed() {
                failed.push(format!("{kind} bn={bn}"));
            }
            results.push(json!({
                "kind": kind,
                "batchnorm": bn,
                "passed": report.passed(),
                "max_error": report.max_error(),
                "report": report,
            }));
        }
    }
    write(&out.join("gradcheck.json"), &pretty(&results))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn ablate_concat(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let out = prepare_out(config, out)?;
    let splits = load_splits(config)?;
    let pair = harness::ablate_interaction_layer(&config.train, &splits)?;
    write(&out.join("paired.json"), &pretty(&pair))?;
    for (label, r) in [(&pair.label_a, &pair.a), (&pair.label_b, &pair.b)] {
        write_report(&out, label, r)?;
        println!("{}", summary(label, r));
    }
    Ok(())
}

pub fn ablate_bn(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let out = prepare_out(config, out)?;
    let splits = load_splits(config)?;
    let pair = harness::ablate_batchnorm(&config.train, &splits)?;
    write(&out.join("paired.json"), &pretty(&pair))?;
    let mut spread = String::from("arm,epoch,pre_bn_spread,mlp_input_spread\n");
    for (label, r) in [(&pair.label_a, &pair.a), (&pair.label_b, &pair.b)] {
        write_report(&out, label, r)?;
        println!("{}", summary(label, r));
        let initial = r.initial_diagnostics.as_ref().map(|d| (0, d));
        let epochs = r.epochs.iter().filter_map(|e| e.diagnostics.as_ref().map(|d| (e.epoch, d)));
        for (epoch, d) in initial.into_iter().chain(epochs) {
            let _ = writeln!(
                spread,
                "{label},{epoch},{},{}",
                spread_ratio(&d.pre_bn_std),
                spread_ratio(&d.mlp_input_std)
            );
        }
    }
    write(&out.join("spread.csv"), &spread)?;
    Ok(())
}

pub fn compare(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let out = prepare_out(config, out)?;
    let splits = load_splits(config)?;
    let board = harness::compare_models(&config.grid(), &splits)?;
    write(&out.join("leaderboard.json"), &(board.to_json() + "\n"))?;
    for kind in board.ranking() {
        let e = board.entry(kind).expect("ranked kinds have entries");
        let test = e
            .test
            .as_ref()
            .map(|t| format!(" test logloss {:.5} auc {}", t.logloss, t.auc.map_or("-".into(), |a| format!("{a:.5}"))))
            .unwrap_or_default();
        println!(
            "{:<7} dim {:<3} hidden {:<16} val logloss {:.5}{test}",
            kind.name(),
            e.spec.embedding_dim,
            format!("{:?}", e.spec.hidden),
            e.best_val_loss
        );
    }
    Ok(())
}
