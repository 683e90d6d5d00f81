use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use pais::harness::{DataSource, ExperimentConfig, SyntheticSpec};
use pais::sampler::SamplerFamily;

/// Flags shared by `run` and `weights`. Every field may also come from the
/// TOML file given with `--config`; flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with the same keys as the long flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Headerless CSV of numeric rows
    #[arg(long, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    /// Gaussian mixture `n,d,k,spread`
    #[arg(long)]
    pub synthetic: Option<SyntheticSpec>,
    #[arg(long)]
    pub k: Option<usize>,
    /// DP-Lloyd iterations
    #[arg(long = "T")]
    pub iterations: Option<usize>,
    /// Target sample sizes for unif and core
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    /// Noise allocation constants
    #[arg(long = "B", value_delimiter = ',')]
    pub b: Option<Vec<f64>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub trim: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Any of full, unif, core, opt
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<SamplerFamily>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub synthetic: Option<String>,
    pub k: Option<usize>,
    #[serde(rename = "T")]
    pub iterations: Option<usize>,
    pub m: Option<Vec<usize>>,
    #[serde(rename = "B")]
    pub b: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub trim: Option<f64>,
    pub reps: Option<usize>,
    pub families: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// The experiment config and output path after merging flags over the file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        // a source given on the command line replaces the file's source
        let (input, synthetic) = if self.input.is_some() || self.synthetic.is_some() {
            (self.input.clone(), self.synthetic)
        } else {
            let synthetic = file
                .synthetic
                .as_deref()
                .map(str::parse::<SyntheticSpec>)
                .transpose()
                .context("`synthetic` in the config file")?;
            (file.input.clone(), synthetic)
        };
        let source = match (input, synthetic) {
            (Some(_), Some(_)) => bail!("give either an input file or a synthetic spec, not both"),
            (Some(path), None) => DataSource::Csv(path),
            (None, Some(spec)) => DataSource::Synthetic(spec),
            (None, None) => bail!("no data: pass --input or --synthetic"),
        };
        let file_families = file
            .families
            .map(|v| v.iter().map(|s| s.parse::<SamplerFamily>()).collect::<pais::Result<Vec<_>>>())
            .transpose()
            .context("`families` in the config file")?;

        let mut cfg = ExperimentConfig::new(source, self.m.clone().or(file.m).unwrap_or_default());
        if let Some(k) = self.k.or(file.k) {
            cfg.k = k;
        }
        if let Some(t) = self.iterations.or(file.iterations) {
            cfg.iterations = t;
        }
        if let Some(b) = self.b.clone().or(file.b) {
            cfg.b_list = b;
        }
        if let Some(l) = self.lambda.or(file.lambda) {
            cfg.lambda = l;
        }
        if let Some(t) = self.trim.or(file.trim) {
            cfg.trim_fraction = t;
        }
        if let Some(r) = self.reps.or(file.reps) {
            cfg.repetitions = r;
        }
        if let Some(f) = self.families.clone().or(file_families) {
            cfg.families = f;
        }
        if let Some(s) = self.seed.or(file.seed) {
            cfg.seed = s;
        }
        Ok(Resolved {
            experiment: cfg,
            out: self.out.clone().or(file.out),
        })
    }
}
