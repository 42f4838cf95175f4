//! Flat `key = value` run configuration shared by the CLI subcommands.
//! Command-line flags override config values, which override the documented
//! defaults.

use std::path::Path;

use crate::error::{Error, Result};

/// Documented hyperparameter defaults.
pub mod defaults {
    pub const N_MAX: usize = 20;
    pub const K: usize = 2;
    pub const HEADS: usize = 4;
    pub const DIM: usize = 64;
    pub const M: usize = 10;
    pub const TAU: f64 = 0.5;
    pub const TEMPERATURE: f64 = 5.0;
    pub const BETA: f64 = 0.1;
    pub const TRIALS: usize = 10;
    pub const LR_SSM: f64 = 25.0;
    pub const LR_OSM: f64 = 32.0;
    pub const STEPS: usize = 500;
    pub const CONCURRENCY: usize = 1;
    pub const CHAT_TEMPERATURE: f64 = 0.9;
    pub const CHAT_MAX_TOKENS: u32 = 512;
}

/// Optional values loaded from a config file; `None` means "not set here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub input: Option<String>,
    pub out: Option<String>,
    pub params: Option<String>,
    pub oracle: Option<String>,
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub encoder: Option<String>,
    pub labels: Option<String>,
    pub kind: Option<String>,
    pub n_max: Option<usize>,
    pub k: Option<usize>,
    pub heads: Option<usize>,
    pub dim: Option<usize>,
    pub m: Option<usize>,
    pub tau: Option<f64>,
    pub t: Option<f64>,
    pub beta: Option<f64>,
    pub lr: Option<f64>,
    pub steps: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
}

impl RunConfig {
    /// Check that every value set here lies in its declared domain.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, value: Option<f64>) -> Result<()> {
            if let Some(v) = value {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
            Ok(())
        }
        fn at_least_one(name: &str, value: Option<usize>) -> Result<()> {
            if let Some(0) = value {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
            Ok(())
        }
        positive("tau", self.tau)?;
        positive("t", self.t)?;
        positive("beta", self.beta)?;
        if let Some(lr) = self.lr {
            if lr < 0.0 || !lr.is_finite() {
                return Err(Error::Config(format!("lr must be non-negative, got {lr}")));
            }
        }
        at_least_one("n_max", self.n_max)?;
        at_least_one("k", self.k)?;
        at_least_one("m", self.m)?;
        at_least_one("steps", self.steps)?;
        at_least_one("trials", self.trials)?;
        at_least_one("heads", self.heads)?;
        at_least_one("dim", self.dim)?;
        at_least_one("concurrency", self.concurrency)?;
        if let (Some(dim), Some(heads)) = (self.dim, self.heads) {
            if !dim.is_multiple_of(heads) {
                return Err(Error::Config(format!(
                    "dim {dim} must be divisible by heads {heads}"
                )));
            }
        }
        Ok(())
    }
}

/// Parse a config file: `key = value` lines, `#` comments, blank lines
/// ignored. Unknown keys are errors.
pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let content = std::fs::read_to_string(&path)?;
    let mut cfg = RunConfig::default();
    for (i, raw_line) in content.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1))
        })?;
        let key = key.trim();
        let value = value.trim().to_string();
        let bad = |what: &str| Error::Config(format!("line {}: bad {what} {value:?}", i + 1));
        match key {
            "input" => cfg.input = Some(value),
            "out" => cfg.out = Some(value),
            "params" => cfg.params = Some(value),
            "oracle" => cfg.oracle = Some(value),
            "backend" => cfg.backend = Some(value),
            "endpoint" => cfg.endpoint = Some(value),
            "encoder" => cfg.encoder = Some(value),
            "labels" => cfg.labels = Some(value),
            "kind" => cfg.kind = Some(value),
            "n_max" => cfg.n_max = Some(value.parse().map_err(|_| bad("integer"))?),
            "k" => cfg.k = Some(value.parse().map_err(|_| bad("integer"))?),
            "heads" => cfg.heads = Some(value.parse().map_err(|_| bad("integer"))?),
            "dim" => cfg.dim = Some(value.parse().map_err(|_| bad("integer"))?),
            "m" => cfg.m = Some(value.parse().map_err(|_| bad("integer"))?),
            "tau" => cfg.tau = Some(value.parse().map_err(|_| bad("float"))?),
            "t" => cfg.t = Some(value.parse().map_err(|_| bad("float"))?),
            "beta" => cfg.beta = Some(value.parse().map_err(|_| bad("float"))?),
            "lr" => cfg.lr = Some(value.parse().map_err(|_| bad("float"))?),
            "steps" => cfg.steps = Some(value.parse().map_err(|_| bad("integer"))?),
            "trials" => cfg.trials = Some(value.parse().map_err(|_| bad("integer"))?),
            "seed" => cfg.seed = Some(value.parse().map_err(|_| bad("integer"))?),
            "concurrency" => cfg.concurrency = Some(value.parse().map_err(|_| bad("integer"))?),
            other => {
                return Err(Error::Config(format!("line {}: unknown key {other:?}", i + 1)));
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# a comment\nn_max = 12\n\ntau=0.25\ninput = data.jsonl\n").unwrap();
        let cfg = load_run_config(&path).unwrap();
        assert_eq!(cfg.n_max, Some(12));
        assert_eq!(cfg.tau, Some(0.25));
        assert_eq!(cfg.input.as_deref(), Some("data.jsonl"));
        assert_eq!(cfg.m, None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "mystery = 1\n").unwrap();
        assert!(matches!(load_run_config(&path), Err(Error::Config(_))));
    }

    #[test]
    fn domain_violations_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "tau = 0\n").unwrap();
        assert!(matches!(load_run_config(&path), Err(Error::Config(_))));
        std::fs::write(&path, "dim = 10\nheads = 4\n").unwrap();
        assert!(matches!(load_run_config(&path), Err(Error::Config(_))));
    }
}
