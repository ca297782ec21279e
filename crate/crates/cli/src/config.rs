use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use structsel_core::grid::GridSpec;
use structsel_core::oracle_bench::{make_test_function, FunctionSpec};
use structsel_core::report::{serde_p, sha256_hex};
use structsel_core::selection::{KappaMode, ThetaGridConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyKernels,
    Calibrate,
    Select,
    BenchOracle,
    BenchRate,
    BenchSandwich,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyKernels => "verify-kernels",
            Command::Calibrate => "calibrate",
            Command::Select => "select",
            Command::BenchOracle => "bench-oracle",
            Command::BenchRate => "bench-rate",
            Command::BenchSandwich => "bench-sandwich",
        }
    }
}

/// An `L_p` exponent that serializes `inf` as a string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValue(#[serde(with = "serde_p")] pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub integral: f64,
    pub moment: f64,
    pub norm_bound_slack: f64,
    pub symmetry: f64,
    pub symmetry_pairs: usize,
    pub contraction_slack: f64,
    pub zero_bias_abs: f64,
    pub arithmetic: f64,
    pub rate_slope: f64,
    pub rate_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            integral: 1e-6,
            moment: 1e-10,
            norm_bound_slack: 0.01,
            symmetry: 1e-10,
            symmetry_pairs: 50,
            contraction_slack: 0.01,
            zero_bias_abs: 1e-8,
            arithmetic: 1e-10,
            rate_slope: 0.15,
            rate_ratio: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub command: Command,
    pub dim: usize,
    pub points_per_axis: usize,
    /// Defaults to the smallest admissible `1/2 + sqrt(d)`.
    pub half_width: Option<f64>,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    #[serde(with = "serde_p")]
    pub p: f64,
    pub p_list: Vec<PValue>,
    pub delta: f64,
    /// `delta = eps^a` with `a = 24 d^3 + 12 d^2` and analytic kappa.
    pub theory_delta: bool,
    pub kappa_mode: KappaMode,
    pub c3: f64,
    pub n_cal: usize,
    pub n_rep: usize,
    pub seed: u64,
    pub theta_grid: ThetaGridConfig,
    pub function: FunctionSpec,
    /// Number of fixed theta in the sandwich experiment.
    pub n_fixed: usize,
    pub tolerances: Tolerances,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: Command::VerifyKernels,
            dim: 2,
            points_per_axis: 161,
            half_width: None,
            eps: 0.1,
            eps_list: vec![0.2, 0.1, 0.05, 0.025],
            p: f64::INFINITY,
            p_list: vec![PValue(1.0), PValue(2.0), PValue(f64::INFINITY)],
            delta: 0.1,
            theory_delta: false,
            kappa_mode: KappaMode::MonteCarlo,
            c3: 8.0,
            n_cal: 200,
            n_rep: 100,
            seed: 20240601,
            theta_grid: ThetaGridConfig::default(),
            function: FunctionSpec::default(),
            n_fixed: 5,
            tolerances: Tolerances::default(),
            out: None,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Parses JSON; errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| anyhow::anyhow!("line {} column {}: {e}", e.line(), e.column()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = match self.half_width {
            Some(w) => GridSpec::new(self.dim, self.points_per_axis, w)?,
            None => GridSpec::with_margin(self.dim, self.points_per_axis)?,
        };
        Ok(g)
    }

    /// Exponent `a` of the theoretical `delta = eps^a`.
    pub fn delta_exponent(&self) -> f64 {
        let d = self.dim as f64;
        24.0 * d * d * d + 12.0 * d * d
    }

    pub fn effective_delta(&self, eps: f64) -> f64 {
        if self.theory_delta {
            eps.powf(self.delta_exponent())
        } else {
            self.delta
        }
    }

    pub fn effective_kappa_mode(&self) -> KappaMode {
        if self.theory_delta {
            KappaMode::Analytic
        } else {
            self.kappa_mode
        }
    }

    /// Checks every sub-configuration before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.theta_grid.dim != self.dim || self.function.dim != self.dim {
            bail!(
                "dimension mismatch: dim = {}, theta_grid.dim = {}, function.dim = {}",
                self.dim,
                self.theta_grid.dim,
                self.function.dim
            );
        }
        self.grid()?;
        self.theta_grid.validate()?;
        make_test_function(&self.function)?;
        if !(self.eps >= 0.0 && self.eps < 1.0) {
            bail!("eps = {} must lie in [0, 1)", self.eps);
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            bail!("eps_list entries must lie in (0, 1)");
        }
        if !(self.p >= 1.0) || self.p_list.iter().any(|p| !(p.0 >= 1.0)) {
            bail!("norm exponents must be >= 1");
        }
        if !self.theory_delta && !(self.delta > 0.0 && self.delta < 1.0) {
            bail!("delta = {} must lie in (0, 1)", self.delta);
        }
        if !(self.c3 > 0.0) {
            bail!("c3 must be positive");
        }
        if self.n_rep < 2 {
            bail!("n_rep must be at least 2");
        }
        if self.threads == Some(0) {
            bail!("threads must be positive");
        }
        // the bandwidth window is checked up front, not during the run
        let grid = self.grid()?;
        let levels: Vec<f64> = match self.command {
            Command::BenchRate => self.eps_list.clone(),
            _ => vec![self.eps],
        };
        for eps in levels {
            let window_eps = if eps > 0.0 { eps } else { 0.5 };
            self.theta_grid
                .bandwidth_window(window_eps, &grid)
                .with_context(|| format!("bandwidth window at eps = {eps}"))?;
        }
        Ok(())
    }

    /// Noise level used to place the bandwidth window when `eps = 0`.
    pub fn window_eps(&self) -> f64 {
        if self.eps > 0.0 {
            self.eps
        } else {
            0.5
        }
    }
}
