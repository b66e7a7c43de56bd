use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use vaepack::mnist::{write_idx_images, write_idx_labels, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS};
use vaepack::weights::load_nnwt;
use vaepack::Tensor;

fn synthetic_mnist(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let make = |n: usize, salt: usize| {
        let labels: Vec<u8> = (0..n).map(|i| ((i * 7 + salt) % 10) as u8).collect();
        let mut px = vec![0.0f32; n * 784];
        for (i, &l) in labels.iter().enumerate() {
            // A bright bar whose row encodes the label, plus deterministic speckle.
            for c in 4..24 {
                px[i * 784 + (2 + 2 * l as usize) * 28 + c] = 1.0;
            }
            for k in 0..30 {
                px[i * 784 + (i * 131 + k * 29 + salt) % 784] = ((k * 37 % 255) as f32 / 255.0).max(px[i * 784 + (i * 131 + k * 29 + salt) % 784]);
            }
        }
        (Tensor::new(vec![n, 28, 28], px).unwrap(), labels)
    };
    let (tr, trl) = make(300, 0);
    let (te, tel) = make(100, 3);
    fs::write(dir.join(TRAIN_IMAGES), write_idx_images(&tr)).unwrap();
    fs::write(dir.join(TRAIN_LABELS), write_idx_labels(&trl)).unwrap();
    fs::write(dir.join(TEST_IMAGES), write_idx_images(&te)).unwrap();
    fs::write(dir.join(TEST_LABELS), write_idx_labels(&tel)).unwrap();
}

struct Env {
    _tmp: TempDir,
    root: PathBuf,
}

impl Env {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        synthetic_mnist(&root.join("mnist"));
        fs::write(
            root.join("small.toml"),
            "[base]\nepochs = 1\nval_size = 50\n\n[augment]\nn_train = 4\nn_val = 1\n\n[vae]\nhidden = [16]\nmax_epochs = 3\n",
        )
        .unwrap();
        Env { _tmp: tmp, root }
    }

    fn out(&self) -> PathBuf {
        self.root.join("out")
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_vaepack"));
        cmd.args(args)
            .arg("--mnist-dir")
            .arg(self.root.join("mnist"))
            .arg("--out")
            .arg(self.out())
            .arg("--config")
            .arg(self.root.join("small.toml"))
            .env("RUST_LOG", "warn");
        cmd.output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }
}

fn numeric_fields_without_seconds(report: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(report.as_bytes());
    let headers = r.headers().unwrap().clone();
    let skip = headers.iter().position(|h| h == "vae_train_seconds").unwrap();
    r.records().map(|rec| rec.unwrap().iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| v.to_string()).collect()).collect()
}

#[test]
fn staged_commands_produce_every_artifact() {
    let env = Env::new();
    let stdout = env.ok(&["train-base", "--kind", "fnn"]);
    assert!(stdout.contains("185300 parameters"), "{stdout}");
    let dir = env.out().join("fnn");
    let (base, _) = load_nnwt(&dir.join("base.nnwt")).unwrap();
    assert_eq!(base.num_params(), 185_300);
    assert!(dir.join("base_metrics.csv").exists());

    env.ok(&["gen-data", "--kind", "fnn"]);
    let (variants, _) = load_nnwt(&dir.join("variants.nnwt")).unwrap();
    assert_eq!(variants.find("train").unwrap().shape(), &[4, 185_300]);

    env.ok(&["train-vae", "--kind", "fnn", "--latent", "8"]);
    assert!(dir.join("vae_d8.nnwt").exists());
    let stdout = env.ok(&["compress", "--kind", "fnn", "--latent", "8"]);
    assert!(stdout.contains("91 chunks x 8 latents"), "{stdout}");
    assert_eq!(fs::metadata(dir.join("archive_d8.vaec")).unwrap().len(), 23 + 91 * 8 * 4);
    env.ok(&["decompress", "--kind", "fnn", "--latent", "8"]);
    let (rec, _) = load_nnwt(&dir.join("reconstructed_d8.nnwt")).unwrap();
    assert_eq!(rec.layout(), base.layout());
    let stdout = env.ok(&["evaluate", "--kind", "fnn", "--latent", "8"]);
    assert!(stdout.contains("reconstructed (d=8)"), "{stdout}");
    let per_class = fs::read_to_string(dir.join("per_class_d8.csv")).unwrap();
    assert_eq!(per_class.lines().count(), 11);

    env.ok(&["curves", "--latent", "8"]);
    let curves = fs::read_to_string(env.out().join("curves.csv")).unwrap();
    assert!(curves.starts_with("kind,epoch,train_loss,val_loss"));
    assert_eq!(curves.lines().count(), 1 + 3);
    assert!(env.out().join("run_config.toml").exists());
}

#[test]
fn pipeline_is_reproducible() {
    let env = Env::new();
    env.ok(&["pipeline", "--kind", "rnn", "--latent", "4", "--seed", "5"]);
    let first = fs::read_to_string(env.out().join("report.csv")).unwrap();
    let archive = fs::read(env.out().join("rnn/archive_d4.vaec")).unwrap();
    assert!(first.starts_with("kind,params,chunks,latent_dim,rate,acc_original,acc_reconstructed,vae_epochs,vae_train_seconds"));
    assert_eq!(first.lines().count(), 2);
    let row = &numeric_fields_without_seconds(&first)[0];
    assert_eq!(&row[..4], &["rnn", "54538", "27", "4"]);

    // Same seeds from scratch, base model included.
    fs::remove_dir_all(env.out()).unwrap();
    env.ok(&["pipeline", "--kind", "rnn", "--latent", "4", "--seed", "5"]);
    let second = fs::read_to_string(env.out().join("report.csv")).unwrap();
    assert_eq!(numeric_fields_without_seconds(&first), numeric_fields_without_seconds(&second));
    assert_eq!(fs::read(env.out().join("rnn/archive_d4.vaec")).unwrap(), archive);
    let cfg = fs::read_to_string(env.out().join("run_config.toml")).unwrap();
    assert!(cfg.contains("latent_dim = 4"), "{cfg}");
}

#[test]
fn sweep_writes_one_row_per_size() {
    let env = Env::new();
    env.ok(&["sweep", "--kind", "rnn", "--sizes", "8,4"]);
    let sweep = fs::read_to_string(env.out().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = sweep.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("rnn,8,") && rows[1].starts_with("rnn,4,"));
}

#[test]
fn usage_and_stage_errors_fail() {
    let env = Env::new();
    assert!(!env.run(&["sweep", "--kind", "rnn", "--sizes", ""]).status.success());
    assert!(!env.run(&["sweep", "--kind", "rnn"]).status.success());
    assert!(!env.run(&["train-base", "--kind", "vae"]).status.success());

    let missing = env.root.join("nowhere");
    let out = Command::new(env!("CARGO_BIN_EXE_vaepack"))
        .args(["train-base", "--kind", "fnn", "--mnist-dir"])
        .arg(&missing)
        .arg("--out")
        .arg(env.out())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train-base") && err.contains("nowhere"), "{err}");

    let out = env.run(&["compress", "--kind", "cnn"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("compress") && err.contains("base.nnwt"), "{err}");

    let out = env.run(&["curves"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("curves"));
}
