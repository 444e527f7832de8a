use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use csiloc::checkpoint::{Checkpoint, Role, MANIFEST};
use csiloc::data::positions::format_positions_csv;
use csiloc::data::{
    generate_synthetic, parse_positions_csv, save_csi_tensor, split, Dataset, LabeledDataset, UnlabeledDataset,
};
use csiloc::gradcheck::{gradcheck as check_gradients, toy_problems, GradcheckConfig};
use csiloc::metrics::{compute_report, per_sample_errors, MetricsReport, AXES, METRICS};
use csiloc::models::{Autoencoder, Localizer, ModelSpec};
use csiloc::train::{self, evaluation_threads};
use csiloc::{Error, Result};
use serde::Serialize;

use crate::config::{read_file, write_file, RunConfig};

pub const UNLABELED_FILE: &str = "unlabeled.csit";
pub const LABELED_FILE: &str = "labeled.csit";
pub const POSITIONS_FILE: &str = "positions.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRAINLOG_FILE: &str = "trainlog.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const ERRORS_FILE: &str = "errors.csv";

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} file given (use --data <dir> or the config's data section)")))
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let (unlabeled, labeled) = generate_synthetic(&cfg.synthetic)?;
    std::fs::create_dir_all(out).map_err(|source| Error::Io { path: out.into(), source })?;
    save_csi_tensor(out.join(UNLABELED_FILE), unlabeled.features())?;
    save_csi_tensor(out.join(LABELED_FILE), labeled.features())?;
    write_file(&out.join(POSITIONS_FILE), format_positions_csv(labeled.positions())?)?;
    cfg.write_resolved(out)?;
    println!(
        "wrote {} unlabeled and {} labeled samples of {}x{} to {}",
        unlabeled.len(),
        labeled.len(),
        cfg.synthetic.h,
        cfg.synthetic.w,
        out.display()
    );
    Ok(())
}

fn print_log(log: &train::TrainLog) {
    let best = &log.epochs[log.best_epoch];
    println!(
        "epochs run {}, best epoch {} (validation loss {:.6e}, initial {:.6e}){}",
        log.epochs.len() - 1,
        best.epoch,
        best.val_loss,
        log.initial_val_loss(),
        if log.stopped_early { ", stopped early" } else { "" }
    );
}

pub fn pretrain(cfg: &RunConfig) -> Result<()> {
    let model = cfg.model()?;
    if !model.is_pretrained() {
        return Err(Error::Config(format!("{model} has no autoencoder to pretrain (use m3 or m4)")));
    }
    let out = cfg.out_dir()?;
    let data = UnlabeledDataset::load(required(&cfg.data.unlabeled, "unlabeled")?)?;
    let spec = ModelSpec { final_activation: cfg.final_activation, ..ModelSpec::new(model, data.sample_shape()) };
    let parts = split(&data, &cfg.unlabeled_split, cfg.seed)?;
    let [train_set, val_set] = parts.as_slice() else {
        return Err(Error::Config("unlabeled_split must have two ratios (train, validation)".into()));
    };
    let mut ae = Autoencoder::build(&spec, cfg.seed)?;
    cfg.write_resolved(out)?;
    let (ckpt, log) = train::pretrain(&mut ae, train_set, val_set, &cfg.train)?;
    ckpt.save(out.join(CHECKPOINT_DIR))?;
    write_file(&out.join(TRAINLOG_FILE), log.to_csv())?;
    print_log(&log);
    Ok(())
}

/// Accepts either a checkpoint directory or a run directory containing one.
fn checkpoint_dir(path: &Path) -> PathBuf {
    if path.join(MANIFEST).exists() {
        path.to_path_buf()
    } else {
        path.join(CHECKPOINT_DIR)
    }
}

#[derive(Serialize)]
struct SplitRecord<'a> {
    train: &'a [usize],
    validation: &'a [usize],
    test: &'a [usize],
}

pub fn finetune(cfg: &RunConfig) -> Result<()> {
    let model = cfg.model()?;
    let out = cfg.out_dir()?;
    match (model.is_pretrained(), &cfg.pretrained) {
        (true, None) => return Err(Error::Config(format!("{model} needs --pretrained <dir>"))),
        (false, Some(_)) => {
            return Err(Error::Config(format!("{model} is trained from scratch; --pretrained is not accepted")))
        }
        _ => {}
    }
    let data = LabeledDataset::load(
        required(&cfg.data.labeled, "labeled features")?,
        required(&cfg.data.positions, "positions")?,
    )?;
    let spec = ModelSpec { final_activation: cfg.final_activation, ..ModelSpec::new(model, data.sample_shape()) };
    let mut loc = Localizer::build(&spec, cfg.seed)?;
    if let Some(pretrained) = &cfg.pretrained {
        let dir = checkpoint_dir(pretrained);
        let ckpt = Checkpoint::<f32>::load(&dir)?;
        if ckpt.role != Role::Autoencoder {
            return Err(Error::Integrity(format!("{}: not an autoencoder checkpoint", dir.display())));
        }
        if ckpt.spec.input != spec.input {
            return Err(Error::Integrity(format!(
                "{}: pretrained on {:?} inputs but the labeled data is {:?}",
                dir.display(),
                ckpt.spec.input,
                spec.input
            )));
        }
        loc.load_encoder(&ckpt.tensors)?;
    }
    let parts = split(&data, &cfg.labeled_split, cfg.seed)?;
    let [train_set, val_set, test_set] = parts.as_slice() else {
        return Err(Error::Config("labeled_split must have three ratios (train, validation, test)".into()));
    };
    cfg.write_resolved(out)?;
    let (ckpt, log) = train::finetune(&mut loc, train_set, val_set, &cfg.train)?;
    ckpt.save(out.join(CHECKPOINT_DIR))?;
    write_file(&out.join(TRAINLOG_FILE), log.to_csv())?;
    let split_record = SplitRecord {
        train: &train_set.provenance().origin,
        validation: &val_set.provenance().origin,
        test: &test_set.provenance().origin,
    };
    write_file(&out.join(SPLIT_FILE), serde_json::to_string(&split_record).expect("split serializes") + "\n")?;
    let pred = train::evaluate(&loc, test_set, evaluation_threads()?)?;
    write_file(&out.join(PREDICTIONS_FILE), format_positions_csv(&pred)?)?;
    write_file(&out.join(TRUTH_FILE), format_positions_csv(test_set.positions())?)?;
    print_log(&log);
    println!("predicted {} test samples", test_set.len());
    Ok(())
}

pub enum EvalSource {
    Run(PathBuf),
    Files { predictions: PathBuf, truth: PathBuf },
}

fn load_positions(path: &Path) -> Result<csiloc::Tensor<f32>> {
    parse_positions_csv(&read_file(path)?).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

pub fn evaluate(cfg: &RunConfig, source: &EvalSource) -> Result<()> {
    let (pred_path, truth_path, out) = match source {
        EvalSource::Run(dir) => (
            dir.join(PREDICTIONS_FILE),
            dir.join(TRUTH_FILE),
            cfg.out.clone().unwrap_or_else(|| dir.clone()),
        ),
        EvalSource::Files { predictions, truth } => (predictions.clone(), truth.clone(), cfg.out_dir()?.to_path_buf()),
    };
    let pred = load_positions(&pred_path)?;
    let truth = load_positions(&truth_path)?;
    let report = compute_report(&truth, &pred, cfg.mode)?;
    write_file(&out.join(METRICS_CSV), report.to_csv())?;
    write_file(&out.join(METRICS_JSON), report.to_json())?;
    let mut errors = String::from("index,dx,dy,dz,euclidean\n");
    for (i, e) in per_sample_errors(&truth, &pred)?.iter().enumerate() {
        writeln!(errors, "{i},{},{},{},{}", e[0], e[1], e[2], e[3]).unwrap();
    }
    write_file(&out.join(ERRORS_FILE), errors)?;
    // evaluating in place keeps the finetune run's own config echo
    if cfg.out.is_some() {
        cfg.write_resolved(&out)?;
    }
    print!("{}", report_table(&[(String::from("run"), report)]));
    Ok(())
}

pub fn gradcheck(seed: u64, samples: usize, tolerance: f64, corrupt: bool) -> Result<()> {
    let cfg = GradcheckConfig { seed, samples_per_tensor: samples, corrupt_first_gradient: corrupt, ..Default::default() };
    let mut worst: f64 = 0.0;
    for mut toy in toy_problems(seed)? {
        let report = check_gradients(&mut toy.net, &toy.input, &toy.target, &cfg)?;
        for p in &report.params {
            println!(
                "{} layer {} {} {}: worst index {} analytic {:.9e} numeric {:.9e} rel error {:.3e} ({} checked, {} at kinks)",
                toy.name,
                p.layer_index,
                p.layer_kind,
                p.param,
                p.worst_index,
                p.analytic,
                p.numeric,
                p.rel_error,
                p.checked,
                p.skipped_kinks
            );
        }
        worst = worst.max(report.max_rel_error);
    }
    let verdict = if worst <= tolerance { "PASS" } else { "FAIL" };
    println!("max relative error {worst:.3e} (tolerance {tolerance:.1e}): {verdict}");
    if worst <= tolerance {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check failed: max relative error {worst:.3e} > {tolerance:.1e}")))
    }
}

/// One row per run; columns are `run,mode,n` then every metric per axis and
/// averaged, in a fixed order.
pub fn report_table(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::from("run,mode,n");
    for m in METRICS {
        for a in AXES.iter().chain(&["average"]) {
            write!(out, ",{m}_{a}").unwrap();
        }
    }
    out.push('\n');
    for (name, r) in rows {
        write!(out, "{name},{},{}", r.mode, r.n).unwrap();
        for m in METRICS {
            for v in r.metric(m).expect("known metric").values() {
                write!(out, ",{v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn report(runs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let path = run.join(METRICS_CSV);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Integrity(format!("run {}: cannot read {}: {e}", run.display(), path.display())))?;
        let report = MetricsReport::from_csv(&text)
            .map_err(|e| Error::Integrity(format!("run {}: {e}", run.display())))?;
        rows.push((run.display().to_string(), report));
    }
    let table = report_table(&rows);
    if let Some(path) = out {
        write_file(path, &table)?;
    }
    print!("{table}");
    Ok(())
}
