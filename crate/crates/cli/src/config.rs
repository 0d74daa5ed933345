use std::fs;
use std::path::{Path, PathBuf};

use circscatter::nn::{NetworkSpec, Preset};
use circscatter::pipeline::{Suite, TrainOverrides};
use circscatter::{Error, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Flags shared by every subcommand. Each also reads from `--config`.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// JSON run configuration; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON network spec used instead of a preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model directory or `<stem>.model` file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub noise_levels: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub min_delta: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub fixed_lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

/// Fully resolved settings of one run, archived into its output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub suite: Option<String>,
    pub preset: Option<String>,
    pub spec: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scale: Option<f64>,
    pub noise_levels: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub patience: Option<usize>,
    pub min_delta: Option<f64>,
    pub clip: Option<f64>,
    pub fixed_lambda: Option<f64>,
    pub precision: Option<Precision>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Reads `--config` if given, then overlays the flags.
    pub fn resolve(command: &str, args: &RunArgs) -> Result<Self> {
        let base = match &args.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let a = args.clone();
        let cfg = RunConfig {
            command: Some(command.to_string()),
            suite: a.suite.or(base.suite),
            preset: a.preset.or(base.preset),
            spec: a.spec.or(base.spec),
            data: a.data.or(base.data),
            model: a.model.or(base.model),
            out: a.out.or(base.out),
            seed: a.seed.or(base.seed),
            scale: a.scale.or(base.scale),
            noise_levels: a.noise_levels.or(base.noise_levels),
            trials: a.trials.or(base.trials),
            epochs: a.epochs.or(base.epochs),
            lr: a.lr.or(base.lr),
            batch: a.batch.or(base.batch),
            patience: a.patience.or(base.patience),
            min_delta: a.min_delta.or(base.min_delta),
            clip: a.clip.or(base.clip),
            fixed_lambda: a.fixed_lambda.or(base.fixed_lambda),
            precision: a.precision.or(base.precision),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.scale {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::InvalidConfig(format!("--scale {s} must lie in (0, 1]")));
            }
        }
        for p in [&self.data, &self.model, &self.spec].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
                ));
            }
        }
        if let Some(levels) = &self.noise_levels {
            if let Some(&l) = levels.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
                return Err(Error::InvalidNoiseLevel(l));
            }
        }
        if let Some(l) = self.fixed_lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidConfig(format!("--fixed-lambda {l} must be positive")));
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn precision(&self) -> Precision {
        self.precision.unwrap_or_default()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(self.command.as_deref().unwrap_or("run")))
    }

    pub fn suite(&self) -> Result<Option<Suite>> {
        self.suite.as_deref().map(str::parse).transpose()
    }

    pub fn require_suite(&self) -> Result<Suite> {
        self.suite()?
            .ok_or_else(|| Error::InvalidConfig("--suite is required".into()))
    }

    pub fn require_data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--data is required".into()))
    }

    pub fn require_model(&self) -> Result<&Path> {
        self.model
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--model is required".into()))
    }

    /// Custom spec file, else `--preset`, else the suite's preset.
    pub fn network(&self) -> Result<(NetworkSpec, Option<Preset>)> {
        if let Some(p) = &self.spec {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let spec: NetworkSpec = serde_json::from_str(&text)?;
            spec.resolve()?;
            return Ok((spec, None));
        }
        let preset = match (&self.preset, self.suite()?) {
            (Some(name), _) => Preset::from_name(name)?,
            (None, Some(s)) => s.preset(),
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "one of --preset, --suite or --spec is required".into(),
                ))
            }
        };
        Ok((preset.spec(), Some(preset)))
    }

    pub fn overrides(&self) -> TrainOverrides {
        TrainOverrides {
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch,
            patience: self.patience,
            min_delta: self.min_delta,
            clip: self.clip,
        }
    }
}
