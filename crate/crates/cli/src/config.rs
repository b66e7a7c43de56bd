use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use vaepack::augment::AugmentConfig;
use vaepack::codec::DEFAULT_CHUNK_SIZE;
use vaepack::models::BaseTrainConfig;
use vaepack::pipeline::PipelineConfig;
use vaepack::vae::VaeTrainConfig;
use vaepack::ModelKind;

pub const CONFIG_FILE: &str = "run_config.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Fnn,
    Cnn,
    Rnn,
    Lstm,
    All,
}

impl KindArg {
    pub fn kinds(self) -> Vec<ModelKind> {
        match self {
            KindArg::Fnn => vec![ModelKind::Fnn],
            KindArg::Cnn => vec![ModelKind::Cnn],
            KindArg::Rnn => vec![ModelKind::Rnn],
            KindArg::Lstm => vec![ModelKind::Lstm],
            KindArg::All => ModelKind::BASE.to_vec(),
        }
    }
}

/// Flags shared by every command. Any flag given here overrides the
/// corresponding value from `--config`.
#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// TOML file with a (partial) run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Model kind to operate on
    #[arg(long, value_enum, global = true)]
    pub kind: Option<KindArg>,
    /// Values per chunk [default: 2048]
    #[arg(long, global = true)]
    pub chunk_size: Option<usize>,
    /// Latent width of the VAE [default: 64]
    #[arg(long, global = true)]
    pub latent: Option<usize>,
    /// Maximum VAE training epochs [default: 500]
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// VAE early-stopping patience in epochs [default: 25]
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    /// Maximum base-model training epochs [default: 10]
    #[arg(long, global = true)]
    pub base_epochs: Option<usize>,
    /// Master seed; base, augment and VAE seeds are derived from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding the four raw MNIST IDX files [default: data/mnist]
    #[arg(long, global = true)]
    pub mnist_dir: Option<PathBuf>,
    /// Output directory [default: runs]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// Every setting a command depends on. Written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub kinds: Vec<ModelKind>,
    pub mnist_dir: PathBuf,
    pub out: PathBuf,
    pub chunk_size: usize,
    pub base: BaseTrainConfig,
    pub augment: AugmentConfig,
    pub vae: VaeTrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kinds: ModelKind::BASE.to_vec(),
            mnist_dir: PathBuf::from("data/mnist"),
            out: PathBuf::from("runs"),
            chunk_size: DEFAULT_CHUNK_SIZE,
            base: BaseTrainConfig::default(),
            augment: AugmentConfig::default(),
            vae: VaeTrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("config: reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("config: parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(k) = args.kind {
            cfg.kinds = k.kinds();
        }
        if let Some(v) = args.chunk_size {
            cfg.chunk_size = v;
        }
        if let Some(v) = args.latent {
            cfg.vae.latent_dim = v;
        }
        if let Some(v) = args.epochs {
            cfg.vae.max_epochs = v;
        }
        if let Some(v) = args.patience {
            cfg.vae.patience = v;
        }
        if let Some(v) = args.base_epochs {
            cfg.base.epochs = v;
        }
        if let Some(s) = args.seed {
            cfg.base.seed = s;
            cfg.augment.seed = s.wrapping_add(1);
            cfg.vae.seed = s.wrapping_add(2);
        }
        if let Some(v) = &args.mnist_dir {
            cfg.mnist_dir = v.clone();
        }
        if let Some(v) = &args.out {
            cfg.out = v.clone();
        }
        anyhow::ensure!(cfg.chunk_size > 0, "config: chunk_size must be positive");
        anyhow::ensure!(cfg.vae.latent_dim > 0, "config: latent size must be positive");
        anyhow::ensure!(!cfg.kinds.is_empty() && !cfg.kinds.contains(&ModelKind::Vae), "config: kinds must be base models");
        Ok(cfg)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { chunk_size: self.chunk_size, augment: self.augment.clone(), vae: self.vae.clone() }
    }

    pub fn kind_dir(&self, kind: ModelKind) -> PathBuf {
        self.out.join(kind.name())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let text = toml::to_string_pretty(self).context("serializing run configuration")?;
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "chunk_size = 512\nkinds = [\"cnn\"]\n[vae]\nlatent_dim = 16\nhidden = [32]\n").unwrap();
        let args = CommonArgs { config: Some(path), latent: Some(8), ..CommonArgs::default() };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.chunk_size, 512);
        assert_eq!(cfg.kinds, vec![ModelKind::Cnn]);
        assert_eq!(cfg.vae.latent_dim, 8);
        assert_eq!(cfg.vae.hidden, vec![32]);
        assert_eq!(cfg.vae.max_epochs, 500);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&toml::to_string_pretty(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn master_seed_fans_out() {
        let cfg = RunConfig::resolve(&CommonArgs { seed: Some(40), ..CommonArgs::default() }).unwrap();
        assert_eq!((cfg.base.seed, cfg.augment.seed, cfg.vae.seed), (40, 41, 42));
    }
}
