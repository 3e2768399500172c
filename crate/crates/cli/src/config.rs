//! Experiment configuration files.
//!
//! ```toml
//! scene = "../scenes/reference64.toml"   # descriptor file or synth output directory
//! output_dir = "../out/reference"
//! precision = "f64"
//! max_iterations = 2000
//! initial_lr = 2e-4
//! seed = 7
//! record_every = 20
//!
//! [weights]
//! lambda_ph = 0.15
//! num_scales = 4
//!
//! [gradcheck]
//! step = 1e-4
//! samples = 512
//! field_amplitude = 0.2
//! threshold = 1e-5
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use realdepth_core::synth::line_of;
use realdepth_core::{LossWeights, OptimConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSettings {
    pub step: f64,
    pub samples: usize,
    /// Half-width of the uniform distribution the probe fields are drawn from.
    pub field_amplitude: f64,
    pub threshold: f64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self { step: 1e-4, samples: 512, field_amplitude: 0.2, threshold: 1e-5 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scene: PathBuf,
    output_dir: PathBuf,
    #[serde(default)]
    precision: Precision,
    max_iterations: Option<usize>,
    initial_lr: Option<f64>,
    seed: Option<u64>,
    record_every: Option<usize>,
    #[serde(default)]
    weights: LossWeights,
    #[serde(default)]
    gradcheck: GradcheckSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// A scene descriptor (rendered in memory) or a directory written by `synth`.
    pub scene: PathBuf,
    pub output_dir: PathBuf,
    pub precision: Precision,
    pub optim: OptimConfig,
    pub gradcheck: GradcheckSettings,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let defaults = OptimConfig::default();
        let optim = OptimConfig {
            max_iterations: raw.max_iterations.unwrap_or(defaults.max_iterations),
            initial_lr: raw.initial_lr.unwrap_or(defaults.initial_lr),
            weights: raw.weights,
            seed: raw.seed.unwrap_or(defaults.seed),
            record_every: raw.record_every.unwrap_or(defaults.record_every),
        };
        let config = Self {
            scene: base_dir.join(raw.scene),
            output_dir: base_dir.join(raw.output_dir),
            precision: raw.precision,
            optim,
            gradcheck: raw.gradcheck,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.optim.validate()?;
        if !self.scene.exists() {
            return Err(CliError::Invalid(format!("scene `{}` does not exist", self.scene.display())));
        }
        let g = &self.gradcheck;
        if !(g.step > 0.0 && g.threshold > 0.0 && g.field_amplitude >= 0.0) || g.samples == 0 {
            return Err(CliError::Invalid(
                "gradcheck needs positive step, threshold and samples and a non-negative field_amplitude".into(),
            ));
        }
        Ok(())
    }

    /// Applies `--seed` and `--scales` overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, scales: Option<usize>) -> Result<Self, CliError> {
        if let Some(seed) = seed {
            self.optim.seed = seed;
        }
        if let Some(n) = scales {
            self.optim.weights.num_scales = n;
        }
        self.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let c = ExperimentConfig::parse("scene = \"src\"\noutput_dir = \"out\"\n", &dir()).unwrap();
        assert_eq!(c.optim, OptimConfig::default());
        assert_eq!(c.gradcheck, GradcheckSettings::default());
        assert_eq!(c.output_dir, dir().join("out"));
    }

    #[test]
    fn unknown_weight_is_rejected_with_line() {
        let text = "scene = \"src\"\noutput_dir = \"out\"\n[weights]\nlambda_phh = 0.1\n";
        match ExperimentConfig::parse(text, &dir()) {
            Err(CliError::Config { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("lambda_phh"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn only_double_precision_is_accepted() {
        let text = "scene = \"src\"\noutput_dir = \"out\"\nprecision = \"f32\"\n";
        assert!(matches!(ExperimentConfig::parse(text, &dir()), Err(CliError::Config { line: 3, .. })));
    }

    #[test]
    fn missing_scene_is_invalid() {
        let text = "scene = \"no/such/scene\"\noutput_dir = \"out\"\n";
        let err = ExperimentConfig::parse(text, &dir()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn overrides_apply() {
        let c = ExperimentConfig::parse("scene = \"src\"\noutput_dir = \"out\"\n", &dir()).unwrap();
        let c = c.with_overrides(Some(9), Some(2)).unwrap();
        assert_eq!((c.optim.seed, c.optim.weights.num_scales), (9, 2));
    }
}
