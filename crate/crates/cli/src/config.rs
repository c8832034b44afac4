//! JSON run configuration. Every field is optional; command-line flags
//! override values read from the file.

use std::path::PathBuf;

use hdqkd::measurement::SettingPlan;
use hdqkd::pipeline::PipelineConfig;
use hdqkd::witness::WitnessConfig;
use hdqkd::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            start: 0.8,
            stop: 1.0,
            steps: 21,
        }
    }
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.start) || !in_unit(self.stop) || self.start > self.stop {
            return Err(Error::Config(format!(
                "sweep [{}, {}] must satisfy 0 <= start <= stop <= 1",
                self.start, self.stop
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("sweep needs at least one step".into()));
        }
        Ok(())
    }

    /// Evenly spaced visibilities, rounded to 12 decimals so that printed
    /// values stay short.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        (0..self.steps)
            .map(|k| {
                let v = self.start + (self.stop - self.start) * k as f64 / (self.steps - 1) as f64;
                (v * 1e12).round() / 1e12
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub starts: usize,
    pub max_evals: usize,
    pub fast_path: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        OptimizerConfig {
            seed: p.seed,
            starts: p.starts,
            max_evals: p.max_evals,
            fast_path: p.fast_path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub enabled: bool,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            enabled: false,
            lo: 0.0,
            hi: 1.0,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dims: Vec<usize>,
    pub sweep: Sweep,
    pub witnesses: Vec<WitnessConfig>,
    pub block_size: Option<usize>,
    pub blocks: Option<Vec<Vec<usize>>>,
    pub plan: SettingPlan,
    pub completion_passes: usize,
    pub optimizer: OptimizerConfig,
    pub threshold: ThresholdConfig,
    /// TT and SS count files for `rate`.
    pub tt: Option<PathBuf>,
    pub ss: Option<PathBuf>,
    /// Partial matrix for `completion`.
    pub completion_input: Option<PathBuf>,
    pub samples: usize,
    pub out: PathBuf,
    pub plot: bool,
    /// Record wall-clock times; disable for byte-stable output.
    pub timing: bool,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        RunConfig {
            dims: vec![16],
            sweep: Sweep::default(),
            witnesses: vec![WitnessConfig::default()],
            block_size: None,
            blocks: None,
            plan: p.plan,
            completion_passes: p.completion_passes,
            optimizer: OptimizerConfig::default(),
            threshold: ThresholdConfig::default(),
            tt: None,
            ss: None,
            completion_input: None,
            samples: 500,
            out: PathBuf::from("out"),
            plot: true,
            timing: true,
            jobs: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        if self.dims.is_empty() || self.dims.iter().any(|&d| d < 2) {
            return Err(Error::Config("dims must be a non-empty list of values >= 2".into()));
        }
        if self.witnesses.is_empty() {
            return Err(Error::Config("at least one witness preset is required".into()));
        }
        if self.optimizer.starts == 0 {
            return Err(Error::Config("optimizer.starts must be at least 1".into()));
        }
        for &d in &self.dims {
            self.pipeline(&self.witnesses[0]).partition(d)?;
        }
        Ok(())
    }

    pub fn pipeline(&self, witness: &WitnessConfig) -> PipelineConfig {
        PipelineConfig {
            witness: witness.clone(),
            block_size: self.block_size,
            blocks: self.blocks.clone(),
            plan: self.plan,
            completion_passes: self.completion_passes,
            seed: self.optimizer.seed,
            starts: self.optimizer.starts,
            max_evals: self.optimizer.max_evals,
            fast_path: self.optimizer.fast_path,
            verify: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_values() {
        let s = Sweep {
            start: 0.9,
            stop: 1.0,
            steps: 11,
        };
        let v = s.values();
        assert_eq!(v.len(), 11);
        assert_eq!(v[1], 0.91);
        assert_eq!(v[10], 1.0);
        assert!(Sweep { start: 0.5, stop: 1.2, steps: 3 }.validate().is_err());
        assert!(Sweep { start: 0.5, stop: 0.6, steps: 0 }.validate().is_err());
    }

    #[test]
    fn parses_partial_json() {
        let c = RunConfig::from_json(r#"{"dims": [8], "witnesses": [{"preset": "kh2"}], "block_size": 4}"#).unwrap();
        assert_eq!(c.dims, vec![8]);
        assert_eq!(c.sweep, Sweep::default());
        assert!(RunConfig::from_json(r#"{"dimz": [8]}"#).is_err());
    }

    #[test]
    fn partition_must_divide() {
        let c = RunConfig {
            dims: vec![10],
            block_size: Some(4),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
