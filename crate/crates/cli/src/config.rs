use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use inducement_core::data::CsvSchema;
use inducement_core::simulation::{BivariateProbitConfig, NonlinearConfig};
use inducement_core::subgroup::SubgroupResponse;
use inducement_core::{BartConfig, ProjectionMode, SensitivitySpec};

/// Everything a run needs, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Posterior draws pushed through the projection in per-draw mode.
    pub draws: usize,
    pub mode: ModeName,
    pub data: Option<DataConfig>,
    /// Reduced-form artifact; defaults to `<output_dir>/reduced_form.bin`.
    pub artifact: Option<PathBuf>,
    pub bart: BartConfig,
    pub sensitivity: SensitivitySpec,
    pub simulate: SimulateConfig,
    pub subgroup: SubgroupConfig,
    pub diagnose: DiagnoseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("inducement-out"),
            draws: 500,
            mode: ModeName::PerDraw,
            data: None,
            artifact: None,
            bart: BartConfig::default(),
            sensitivity: SensitivitySpec::default(),
            simulate: SimulateConfig::default(),
            subgroup: SubgroupConfig::default(),
            diagnose: DiagnoseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    PerDraw,
    MeanOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Table {
    /// Bivariate-probit recovery under the matching Gaussian.
    Bivariate,
    /// Nonlinear design under the correct density.
    Nonlinear,
    /// Nonlinear design scored under every density of the sweep.
    Misspecification,
    /// Monotone versus unconstrained outcome models on the bivariate design.
    Monotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub table: Table,
    pub replicates: usize,
    pub bivariate: BivariateProbitConfig,
    pub nonlinear: NonlinearConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            table: Table::Bivariate,
            replicates: 1,
            bivariate: BivariateProbitConfig::default(),
            nonlinear: NonlinearConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubgroupConfig {
    pub response: SubgroupResponse,
    pub max_depth: usize,
    /// Defaults to `max(50, n / 100)`.
    pub min_leaf: Option<usize>,
}

impl Default for SubgroupConfig {
    fn default() -> Self {
        Self {
            response: SubgroupResponse::Tau,
            max_depth: inducement_core::subgroup::DEFAULT_MAX_DEPTH,
            min_leaf: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub monitored: usize,
    pub max_lag: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            monitored: inducement_core::diagnostics::DEFAULT_MONITORED,
            max_lag: 50,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // relative paths inside the file resolve against its directory
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = base.join(&cfg.output_dir);
        if let Some(d) = cfg.data.as_mut() {
            d.path = base.join(&d.path);
        }
        if let Some(a) = cfg.artifact.as_mut() {
            *a = base.join(&*a);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.bart.validate()?;
        self.sensitivity.validate()?;
        anyhow::ensure!(self.draws > 0, "draws must be positive");
        anyhow::ensure!(self.simulate.replicates > 0, "simulate.replicates must be positive");
        Ok(())
    }

    pub fn projection_mode(&self) -> ProjectionMode {
        match self.mode {
            ModeName::PerDraw => ProjectionMode::PerDraw { draws: self.draws },
            ModeName::MeanOnly => ProjectionMode::MeanOnly,
        }
    }

    pub fn artifact_path(&self) -> PathBuf {
        self.artifact
            .clone()
            .unwrap_or_else(|| self.output_dir.join("reduced_form.bin"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_sections() {
        let text = r#"
seed = 9
draws = 20
mode = "mean-only"

[data]
path = "firms.csv"
treatment = "G"
outcome = "B"

[bart]
trees = 20

[[sensitivity.densities]]
kind = "gaussian"
sd = 0.5

[[sensitivity.densities]]
kind = "sharkfin"
q = 0.25
s = 0.5

[simulate]
table = "misspecification"
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.bart.trees, 20);
        assert_eq!(cfg.bart.burn_in, BartConfig::default().burn_in);
        assert_eq!(cfg.sensitivity.densities.len(), 2);
        assert_eq!(cfg.projection_mode(), ProjectionMode::MeanOnly);
        assert_eq!(cfg.simulate.table, Table::Misspecification);
        assert_eq!(cfg.data.unwrap().schema.treatment, "G");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_densities() {
        assert!(toml::from_str::<RunConfig>("sed = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[[sensitivity.densities]]\nkind = \"gaussian\"\nsd = -1").is_err());
    }
}
