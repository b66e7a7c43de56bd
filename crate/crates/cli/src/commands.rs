use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};
use vaepack::augment::generate_variants;
use vaepack::codec::flatten;
use vaepack::compress::{compress, compression_rate, compression_rate_with_decoder, decompress, LatentArchive};
use vaepack::mnist::MnistDataset;
use vaepack::models::{build_model, evaluate, train_base, BaseModelSpec, EpochMetrics, Evaluation};
use vaepack::nn::{ParamSet, Tensor};
use vaepack::pipeline::{epochs_to_within, pool_chunks, run_pipeline, PipelineRun};
use vaepack::vae::{train_vae, VaeEpoch, VaeParams};
use vaepack::weights::{load_nnwt, save_nnwt};
use vaepack::ModelKind;

use crate::config::RunConfig;

pub const REPORT_FILE: &str = "report.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const CURVES_FILE: &str = "curves.csv";

pub fn base_path(dir: &Path) -> PathBuf {
    dir.join("base.nnwt")
}

pub fn variants_path(dir: &Path) -> PathBuf {
    dir.join("variants.nnwt")
}

pub fn vae_path(dir: &Path, latent: usize) -> PathBuf {
    dir.join(format!("vae_d{latent}.nnwt"))
}

pub fn archive_path(dir: &Path, latent: usize) -> PathBuf {
    dir.join(format!("archive_d{latent}.vaec"))
}

pub fn reconstructed_path(dir: &Path, latent: usize) -> PathBuf {
    dir.join(format!("reconstructed_d{latent}.nnwt"))
}

pub fn curve_path(dir: &Path, latent: usize) -> PathBuf {
    dir.join(format!("vae_curve_d{latent}.csv"))
}

fn per_class_path(dir: &Path, latent: usize) -> PathBuf {
    dir.join(format!("per_class_d{latent}.csv"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_mnist(cfg: &RunConfig) -> Result<(MnistDataset, MnistDataset)> {
    MnistDataset::load_dir(&cfg.mnist_dir).with_context(|| format!("loading MNIST from {}", cfg.mnist_dir.display()))
}

fn load_test(cfg: &RunConfig) -> Result<MnistDataset> {
    Ok(load_mnist(cfg)?.1)
}

fn load_base(dir: &Path, kind: ModelKind) -> Result<(BaseModelSpec, ParamSet)> {
    let path = base_path(dir);
    let (params, _) = load_nnwt(&path).with_context(|| format!("reading {}", path.display()))?;
    let spec = BaseModelSpec::new(kind)?;
    spec.check(&params).with_context(|| format!("{} does not hold {kind} weights", path.display()))?;
    Ok((spec, params))
}

fn load_vae(dir: &Path, latent: usize) -> Result<VaeParams> {
    let path = vae_path(dir, latent);
    let (params, header) = load_nnwt(&path).with_context(|| format!("reading {}", path.display()))?;
    let header = header.ok_or_else(|| anyhow!("{} is not a VAE weight file", path.display()))?;
    VaeParams::from_weights(params, header).with_context(|| format!("interpreting {}", path.display()))
}

fn save_vae(dir: &Path, vae: &VaeParams) -> Result<()> {
    let path = vae_path(dir, vae.arch.latent_dim);
    save_nnwt(&path, &vae.to_weights(), Some(vae.arch.header())).with_context(|| format!("writing {}", path.display()))
}

fn prepare(cfg: &RunConfig, kind: ModelKind) -> Result<PathBuf> {
    cfg.write_to(&cfg.out)?;
    let dir = cfg.kind_dir(kind);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn log_vae_epoch(kind: ModelKind, latent: usize) -> impl FnMut(&VaeEpoch) {
    move |e| {
        if e.epoch == 1 || e.epoch % 10 == 0 {
            info!(
                "{kind} d={latent} epoch {}: train {:.3} val {:.3} (recon {:.3}, kl {:.3})",
                e.epoch, e.train_loss, e.val_loss, e.val_reconstruction, e.val_kl
            );
        }
    }
}

pub fn train_base_cmd(cfg: &RunConfig) -> Result<()> {
    let (train, test) = load_mnist(cfg).context("train-base")?;
    for &kind in &cfg.kinds {
        let dir = prepare(cfg, kind).context("train-base")?;
        train_one_base(cfg, kind, &dir, &train, &test).context("train-base")?;
    }
    Ok(())
}

fn train_one_base(cfg: &RunConfig, kind: ModelKind, dir: &Path, train: &MnistDataset, test: &MnistDataset) -> Result<ParamSet> {
    let (spec, init) = build_model(kind, cfg.base.seed)?;
    info!("training {kind} ({} parameters)", spec.num_params());
    let trained = train_base(&spec, init, train, &cfg.base, |m| {
        info!("{kind} epoch {}: loss {:.4}, val acc {:.4}", m.epoch, m.train_loss, m.val_accuracy);
    })?;
    let path = base_path(dir);
    save_nnwt(&path, &trained.params, None).with_context(|| format!("writing {}", path.display()))?;
    write_csv::<EpochMetrics>(&dir.join("base_metrics.csv"), &trained.metrics)?;
    let acc = evaluate(&spec, &trained.params, test)?.accuracy();
    println!("{kind}: {} parameters, test accuracy {acc:.4} (best epoch {})", spec.num_params(), trained.best_epoch);
    Ok(trained.params)
}

pub fn gen_data_cmd(cfg: &RunConfig) -> Result<()> {
    for &kind in &cfg.kinds {
        let dir = prepare(cfg, kind).context("gen-data")?;
        let (_, params) = load_base(&dir, kind).context("gen-data")?;
        let v = generate_variants(&flatten(&params), &cfg.augment);
        let mut out = ParamSet::new(kind);
        let n = params.num_params();
        let stack = |rows: &[Tensor]| Tensor::stack(&rows.iter().map(Tensor::data).collect::<Vec<_>>(), &[n]);
        out.push("train", stack(&v.train).context("gen-data")?);
        out.push("val", stack(&v.val).context("gen-data")?);
        let path = variants_path(&dir);
        save_nnwt(&path, &out, None).with_context(|| format!("gen-data: writing {}", path.display()))?;
        println!("{kind}: {} training and {} validation variants -> {}", v.train.len(), v.val.len(), path.display());
    }
    Ok(())
}

fn load_variants(dir: &Path, kind: ModelKind) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    let path = variants_path(dir);
    let (set, _) = load_nnwt(&path).with_context(|| format!("reading {}", path.display()))?;
    if set.kind != kind {
        bail!("{} holds {} variants, expected {kind}", path.display(), set.kind);
    }
    let rows = |name: &str| -> Result<Vec<Tensor>> {
        let t = set.find(name).ok_or_else(|| anyhow!("{} has no '{name}' block", path.display()))?;
        let n = t.shape().first().copied().unwrap_or(0);
        Ok((0..n).map(|i| Tensor::from_vec(t.slice_rows(i, i + 1).into_data())).collect())
    };
    Ok((rows("train")?, rows("val")?))
}

pub fn train_vae_cmd(cfg: &RunConfig) -> Result<()> {
    for &kind in &cfg.kinds {
        let dir = prepare(cfg, kind).context("train-vae")?;
        let (train, val) = load_variants(&dir, kind).context("train-vae")?;
        let train = pool_chunks(&train, cfg.chunk_size).context("train-vae")?;
        let val = pool_chunks(&val, cfg.chunk_size).context("train-vae")?;
        let d = cfg.vae.latent_dim;
        info!("{kind}: {} training chunks, {} validation chunks", train.shape()[0], val.shape()[0]);
        let started = Instant::now();
        let out = train_vae(&train, &val, &cfg.vae, log_vae_epoch(kind, d)).context("train-vae")?;
        save_vae(&dir, &out.vae).context("train-vae")?;
        write_csv(&curve_path(&dir, d), &out.curve).context("train-vae")?;
        println!(
            "{kind}: VAE d={d} trained {} epochs in {:.1}s, best epoch {} (val loss {:.4})",
            out.curve.len(),
            started.elapsed().as_secs_f64(),
            out.best_epoch,
            out.best_val_loss
        );
    }
    Ok(())
}

pub fn compress_cmd(cfg: &RunConfig) -> Result<()> {
    for &kind in &cfg.kinds {
        let dir = prepare(cfg, kind).context("compress")?;
        let (_, params) = load_base(&dir, kind).context("compress")?;
        let vae = load_vae(&dir, cfg.vae.latent_dim).context("compress")?;
        let archive = compress(&params, &vae).context("compress")?;
        let path = archive_path(&dir, cfg.vae.latent_dim);
        archive.save(&path).with_context(|| format!("compress: writing {}", path.display()))?;
        println!(
            "{kind}: {} chunks x {} latents, rate {:.4} ({:.4} counting the decoder) -> {}",
            archive.n_chunks,
            archive.latent_dim,
            compression_rate(&archive),
            compression_rate_with_decoder(&archive, &vae),
            path.display()
        );
    }
    Ok(())
}

pub fn decompress_cmd(cfg: &RunConfig) -> Result<()> {
    for &kind in &cfg.kinds {
        let dir = prepare(cfg, kind).context("decompress")?;
        let d = cfg.vae.latent_dim;
        let apath = archive_path(&dir, d);
        let archive = LatentArchive::load(&apath).with_context(|| format!("decompress: reading {}", apath.display()))?;
        let vae = load_vae(&dir, d).context("decompress")?;
        let spec = BaseModelSpec::new(kind)?;
        let params = decompress(&archive, &vae, &spec).context("decompress")?;
        let path = reconstructed_path(&dir, d);
        save_nnwt(&path, &params, None).with_context(|| format!("decompress: writing {}", path.display()))?;
        println!("{kind}: reconstructed {} parameters -> {}", params.num_params(), path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct ClassRow {
    class: usize,
    total: usize,
    correct_original: usize,
    correct_reconstructed: Option<usize>,
    accuracy_original: f64,
    accuracy_reconstructed: Option<f64>,
}

fn per_class_rows(original: &Evaluation, reconstructed: Option<&Evaluation>) -> Vec<ClassRow> {
    (0..original.per_class.len())
        .map(|c| {
            let (ok, total) = original.per_class[c];
            let frac = |k: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
            let rec = reconstructed.map(|r| r.per_class[c].0);
            ClassRow {
                class: c,
                total,
                correct_original: ok,
                correct_reconstructed: rec,
                accuracy_original: frac(ok),
                accuracy_reconstructed: rec.map(frac),
            }
        })
        .collect()
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let test = load_test(cfg).context("evaluate")?;
    for &kind in &cfg.kinds {
        let dir = prepare(cfg, kind).context("evaluate")?;
        let (spec, params) = load_base(&dir, kind).context("evaluate")?;
        let original = evaluate(&spec, &params, &test).context("evaluate")?;
        let d = cfg.vae.latent_dim;
        let rpath = reconstructed_path(&dir, d);
        let reconstructed = if rpath.exists() {
            let (rp, _) = load_nnwt(&rpath).with_context(|| format!("evaluate: reading {}", rpath.display()))?;
            Some(evaluate(&spec, &rp, &test).context("evaluate")?)
        } else {
            None
        };
        write_csv(&per_class_path(&dir, d), &per_class_rows(&original, reconstructed.as_ref())).context("evaluate")?;
        match &reconstructed {
            Some(r) => println!("{kind}: original {:.4}, reconstructed (d={d}) {:.4}", original.accuracy(), r.accuracy()),
            None => println!("{kind}: original {:.4} (no reconstruction at d={d})", original.accuracy()),
        }
    }
    Ok(())
}

/// One row of `report.csv`.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    pub kind: String,
    pub params: usize,
    pub chunks: usize,
    pub latent_dim: usize,
    pub rate: f64,
    pub acc_original: f64,
    pub acc_reconstructed: f64,
    pub vae_epochs: usize,
    pub vae_train_seconds: f64,
}

#[derive(Serialize)]
struct Summary {
    kind: ModelKind,
    latent_dim: usize,
    rate: f64,
    rate_with_decoder: f64,
    decoder_params: usize,
    best_epoch: usize,
    best_val_loss: f64,
    stopped_early: bool,
    acc_original: f64,
    acc_reconstructed: f64,
}

/// Base weights from disk, training them first if absent.
fn base_or_train(cfg: &RunConfig, kind: ModelKind, dir: &Path, mnist: &(MnistDataset, MnistDataset)) -> Result<(BaseModelSpec, ParamSet)> {
    if base_path(dir).exists() {
        return load_base(dir, kind).context("train-base");
    }
    let params = train_one_base(cfg, kind, dir, &mnist.0, &mnist.1).context("train-base")?;
    Ok((BaseModelSpec::new(kind)?, params))
}

fn run_and_save(cfg: &RunConfig, kind: ModelKind, dir: &Path, spec: &BaseModelSpec, params: &ParamSet, test: &MnistDataset) -> Result<PipelineRun> {
    let d = cfg.vae.latent_dim;
    let run = run_pipeline(spec, params, test, &cfg.pipeline(), log_vae_epoch(kind, d))?;
    save_vae(dir, &run.training.vae).context("train-vae")?;
    write_csv(&curve_path(dir, d), &run.training.curve).context("train-vae")?;
    let apath = archive_path(dir, d);
    run.archive.save(&apath).with_context(|| format!("compress: writing {}", apath.display()))?;
    let rpath = reconstructed_path(dir, d);
    save_nnwt(&rpath, &run.reconstructed, None).with_context(|| format!("decompress: writing {}", rpath.display()))?;
    write_csv(&per_class_path(dir, d), &per_class_rows(&run.original, Some(&run.reconstructed_eval))).context("evaluate")?;
    let summary = Summary {
        kind,
        latent_dim: d,
        rate: run.rate(),
        rate_with_decoder: run.rate_with_decoder(),
        decoder_params: run.training.vae.decoder_params(),
        best_epoch: run.training.best_epoch,
        best_val_loss: run.training.best_val_loss,
        stopped_early: run.training.stopped_early,
        acc_original: run.original.accuracy(),
        acc_reconstructed: run.reconstructed_eval.accuracy(),
    };
    fs::write(dir.join(format!("summary_d{d}.json")), serde_json::to_string_pretty(&summary)?).context("evaluate")?;
    println!(
        "{kind} d={d}: rate {:.4} ({:.4} counting the decoder), accuracy {:.4} -> {:.4}, {} VAE epochs in {:.1}s",
        summary.rate,
        summary.rate_with_decoder,
        summary.acc_original,
        summary.acc_reconstructed,
        run.training.curve.len(),
        run.vae_train_seconds
    );
    Ok(run)
}

pub fn pipeline_cmd(cfg: &RunConfig) -> Result<()> {
    let mnist = load_mnist(cfg).context("pipeline")?;
    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        let dir = prepare(cfg, kind).context("pipeline")?;
        let (spec, params) = base_or_train(cfg, kind, &dir, &mnist)?;
        let run = run_and_save(cfg, kind, &dir, &spec, &params, &mnist.1)?;
        rows.push(ReportRow {
            kind: kind.name().to_string(),
            params: run.archive.param_count(),
            chunks: run.archive.n_chunks,
            latent_dim: run.archive.latent_dim,
            rate: run.rate(),
            acc_original: run.original.accuracy(),
            acc_reconstructed: run.reconstructed_eval.accuracy(),
            vae_epochs: run.training.curve.len(),
            vae_train_seconds: run.vae_train_seconds,
        });
    }
    let path = cfg.out.join(REPORT_FILE);
    write_csv(&path, &rows).context("pipeline")?;
    println!("report -> {}", path.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: String,
    pub latent_dim: usize,
    pub rate: f64,
    pub rate_with_decoder: f64,
    pub acc_original: f64,
    pub acc_reconstructed: f64,
    pub vae_epochs: usize,
    pub best_val_loss: f64,
}

pub fn sweep_cmd(cfg: &RunConfig, sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() || sizes.contains(&0) {
        bail!("sweep: --sizes must list at least one positive latent size");
    }
    let mnist = load_mnist(cfg).context("sweep")?;
    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        let dir = prepare(cfg, kind).context("sweep")?;
        let (spec, params) = base_or_train(cfg, kind, &dir, &mnist)?;
        for &d in sizes {
            let mut c = cfg.clone();
            c.vae.latent_dim = d;
            let run = run_and_save(&c, kind, &dir, &spec, &params, &mnist.1)?;
            rows.push(SweepRow {
                kind: kind.name().to_string(),
                latent_dim: d,
                rate: run.rate(),
                rate_with_decoder: run.rate_with_decoder(),
                acc_original: run.original.accuracy(),
                acc_reconstructed: run.reconstructed_eval.accuracy(),
                vae_epochs: run.training.curve.len(),
                best_val_loss: run.training.best_val_loss,
            });
        }
    }
    let path = cfg.out.join(SWEEP_FILE);
    write_csv(&path, &rows).context("sweep")?;
    println!("sweep -> {}", path.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CurveRow {
    pub kind: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub fn curves_cmd(cfg: &RunConfig, run: Option<&Path>) -> Result<()> {
    let root = run.unwrap_or(&cfg.out);
    if !root.is_dir() {
        bail!("curves: run directory {} does not exist", root.display());
    }
    let d = cfg.vae.latent_dim;
    let mut rows = Vec::new();
    for kind in ModelKind::BASE {
        let path = curve_path(&root.join(kind.name()), d);
        if !path.exists() {
            continue;
        }
        let mut r = csv::Reader::from_path(&path).with_context(|| format!("curves: reading {}", path.display()))?;
        let curve: Vec<VaeEpoch> =
            r.deserialize().collect::<Result<_, _>>().with_context(|| format!("curves: parsing {}", path.display()))?;
        let val: Vec<f64> = curve.iter().map(|e| e.val_loss).collect();
        let best = val.iter().copied().fold(f64::INFINITY, f64::min);
        match epochs_to_within(&val, 1.1) {
            Some(n) => println!("{kind}: {} epochs, best val loss {best:.4}, within 1.1x of final after {n} epochs", curve.len()),
            None => println!("{kind}: empty curve"),
        }
        rows.extend(curve.iter().map(|e| CurveRow {
            kind: kind.name().to_string(),
            epoch: e.epoch,
            train_loss: e.train_loss,
            val_loss: e.val_loss,
        }));
    }
    if rows.is_empty() {
        bail!("curves: no vae_curve_d{d}.csv under {}; run the pipeline first", root.display());
    }
    let path = root.join(CURVES_FILE);
    write_csv(&path, &rows).context("curves")?;
    println!("curves -> {}", path.display());
    Ok(())
}
