//! Structured test functions with certified smoothness, Monte Carlo risk
//! evaluation and the experiments built on them.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorBank;
use crate::grid::{Field, GridSpec, Region};
use crate::kernel::{givens_rotation, rotation_planes, Partition, ThetaPoint, UnivariateKernel};
use crate::observation::Observation;
use crate::report::{linear_fit, serde_p};
use crate::rng::derive_seed;
use crate::selection::{
    argmin_first, calibrate_kappa, select, select_index, KappaCalibration, ThetaGrid, ThetaGridConfig,
};

/// Stream tag for observation noise in risk experiments.
pub const RISK_STREAM: u64 = 0x7215;
/// Stream tag for the `zeta` sample used by the remainder term.
pub const ZETA_STREAM: u64 = 0x2E7A;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    SingleIndex,
    Additive,
    ProjectionPursuit,
    MultiIndex,
    AdditiveMultiIndex,
    Polynomial,
    Zero,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidFunction(format!("unknown family {s:?}")))
    }
}

/// Parameters of a built-in test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionSpec {
    pub family: Family,
    pub dim: usize,
    /// Givens angles of `E`; empty means the identity.
    pub angles: Vec<f64>,
    pub frequency: f64,
    pub amplitude: f64,
    /// Effective smoothness `beta`.
    pub beta: f64,
    /// Per-block smoothness; must equal `beta * |I_i|` when given.
    pub component_betas: Option<Vec<f64>>,
    /// `c0, c1, ..., cd` of the polynomial family.
    pub coefficients: Vec<f64>,
}

impl Default for FunctionSpec {
    fn default() -> Self {
        Self {
            family: Family::SingleIndex,
            dim: 2,
            angles: Vec::new(),
            frequency: 1.0,
            amplitude: 1.0,
            beta: 1.0,
            component_betas: None,
            coefficients: Vec::new(),
        }
    }
}

/// `amplitude * cos(2 pi freq . u + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Wave {
    pub amplitude: f64,
    pub freq: Vec<f64>,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ComponentFn {
    Waves(Vec<Wave>),
    Affine { c0: f64, c: Vec<f64> },
}

impl ComponentFn {
    fn eval(&self, u: &[f64]) -> f64 {
        match self {
            ComponentFn::Waves(ws) => ws
                .iter()
                .map(|w| {
                    let arg: f64 = w.freq.iter().zip(u).map(|(a, b)| a * b).sum();
                    w.amplitude * (TAU * arg + w.phase).cos()
                })
                .sum(),
            ComponentFn::Affine { c0, c } => c0 + c.iter().zip(u).map(|(a, b)| a * b).sum::<f64>(),
        }
    }

    /// Bound on every derivative of order `k` on `|u_j| <= reach`.
    fn derivative_bound(&self, k: usize, reach: f64) -> f64 {
        match self {
            ComponentFn::Waves(ws) => ws
                .iter()
                .map(|w| {
                    let norm = w.freq.iter().map(|f| f * f).sum::<f64>().sqrt();
                    w.amplitude.abs() * (TAU * norm).powi(k as i32)
                })
                .sum(),
            ComponentFn::Affine { c0, c } => match k {
                0 => c0.abs() + c.iter().map(|v| v.abs()).sum::<f64>() * reach,
                1 => c.iter().map(|v| v * v).sum::<f64>().sqrt(),
                _ => 0.0,
            },
        }
    }
}

/// `f_i` acting on the block `I_i` of direction columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub block: usize,
    pub f: ComponentFn,
    pub beta: f64,
    pub lipschitz: f64,
}

/// Smallest `L` with `f` in the Hoelder ball `H(beta, L)`, from derivative
/// bounds `D_k`: `max(D_0..D_l, D_{l+1}/(l+1)!, 2 D_l / l!)` where
/// `beta = l + alpha`, `alpha in (0, 1]`.
pub fn certified_holder_constant(beta: f64, d: impl Fn(usize) -> f64) -> f64 {
    let l = (beta.ceil() as usize).saturating_sub(1);
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    let derivs = (0..=l).map(&d).fold(0.0f64, f64::max);
    let rem = (d(l + 1) / fact(l + 1)).max(2.0 * d(l) / fact(l));
    derivs.max(rem)
}

#[derive(Debug, Clone, Serialize)]
pub struct StructuredFunction {
    pub spec: FunctionSpec,
    pub partition: Partition,
    /// Column-major `E`.
    pub directions: Vec<f64>,
    pub angles: Vec<f64>,
    pub components: Vec<Component>,
    pub beta: f64,
    /// Common Hoelder constant `max_i L_i`.
    pub lipschitz: f64,
}

pub fn make_test_function(spec: &FunctionSpec) -> Result<StructuredFunction> {
    let d = spec.dim;
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidFunction(format!("dimension {d} is not in 1..=3")));
    }
    if !(spec.beta > 0.0 && spec.frequency.is_finite() && spec.amplitude.is_finite()) {
        return Err(Error::InvalidFunction("beta must be positive".into()));
    }
    let planes = rotation_planes(d).len();
    let angles = if spec.angles.is_empty() {
        vec![0.0; planes]
    } else {
        spec.angles.clone()
    };
    if angles.len() != planes {
        return Err(Error::InvalidFunction(format!("dimension {d} takes {planes} angles")));
    }
    let (a, w) = (spec.amplitude, spec.frequency);
    let wave = |amplitude: f64, freq: Vec<f64>, phase: f64| Wave { amplitude, freq, phase };
    let pair_waves = || {
        ComponentFn::Waves(vec![
            wave(a / 2.0, vec![w, 0.5 * w], 0.0),
            wave(a / 2.0, vec![-0.5 * w, w], FRAC_PI_2 / 2.0),
        ])
    };
    let identity_only = |fam: &str| -> Result<()> {
        if angles.iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidFunction(format!("the {fam} family uses E = I")));
        }
        Ok(())
    };
    let (blocks, fns): (Vec<Vec<usize>>, Vec<(usize, ComponentFn)>) = match spec.family {
        Family::SingleIndex => {
            let mut blocks = vec![vec![0]];
            if d > 1 {
                blocks.push((1..d).collect());
            }
            (blocks, vec![(0, ComponentFn::Waves(vec![wave(a, vec![w], 0.0)]))])
        }
        Family::Additive | Family::ProjectionPursuit => {
            if spec.family == Family::Additive {
                identity_only("additive")?;
            }
            let blocks = (0..d).map(|j| vec![j]).collect();
            let fns = (0..d)
                .map(|j| (j, ComponentFn::Waves(vec![wave(a, vec![w], -FRAC_PI_2 * j as f64)])))
                .collect();
            (blocks, fns)
        }
        Family::MultiIndex => {
            if d < 2 {
                return Err(Error::InvalidFunction("multi-index needs d >= 2".into()));
            }
            let mut blocks = vec![vec![0, 1]];
            if d > 2 {
                blocks.push((2..d).collect());
            }
            (blocks, vec![(0, pair_waves())])
        }
        Family::AdditiveMultiIndex => {
            if d != 3 {
                return Err(Error::InvalidFunction("additive multi-index needs d = 3".into()));
            }
            (
                vec![vec![0, 1], vec![2]],
                vec![(0, pair_waves()), (1, ComponentFn::Waves(vec![wave(a, vec![w], 0.3)]))],
            )
        }
        Family::Polynomial => {
            identity_only("polynomial")?;
            let c = if spec.coefficients.is_empty() {
                std::iter::once(0.5)
                    .chain((0..d).map(|j| 0.3 - 0.2 * j as f64))
                    .collect()
            } else {
                spec.coefficients.clone()
            };
            if c.len() != d + 1 {
                return Err(Error::InvalidFunction(format!(
                    "polynomial needs {} coefficients",
                    d + 1
                )));
            }
            (
                vec![(0..d).collect()],
                vec![(
                    0,
                    ComponentFn::Affine {
                        c0: c[0],
                        c: c[1..].to_vec(),
                    },
                )],
            )
        }
        Family::Zero => (vec![(0..d).collect()], Vec::new()),
    };
    let partition = Partition::new(d, blocks)?;
    // blocks are canonical already; map component block ids through labels
    let betas: Vec<f64> = partition.blocks().iter().map(|b| spec.beta * b.len() as f64).collect();
    if let Some(given) = &spec.component_betas {
        if given.len() != betas.len() || given.iter().zip(&betas).any(|(g, b)| (g - b).abs() > 1e-12 * b) {
            return Err(Error::InvalidFunction(format!(
                "component smoothness {given:?} violates beta_i = beta |I_i| = {betas:?}"
            )));
        }
    }
    let grid_reach = (d as f64).sqrt() * (0.5 + (d as f64).sqrt());
    let components: Vec<Component> = fns
        .into_iter()
        .map(|(block, f)| {
            let beta = betas[block];
            let lipschitz = certified_holder_constant(beta, |k| f.derivative_bound(k, grid_reach));
            Component {
                block,
                f,
                beta,
                lipschitz,
            }
        })
        .collect();
    let e = givens_rotation(d, &angles)?;
    Ok(StructuredFunction {
        spec: spec.clone(),
        partition,
        directions: e.as_slice().to_vec(),
        angles,
        lipschitz: components.iter().map(|c| c.lipschitz).fold(0.0, f64::max),
        components,
        beta: spec.beta,
    })
}

impl StructuredFunction {
    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn direction_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_column_slice(d, d, &self.directions)
    }

    /// `sum_i f_i(E_i^T t)`.
    pub fn eval(&self, t: &[f64]) -> f64 {
        let d = self.dim();
        self.components
            .iter()
            .map(|c| {
                let u: Vec<f64> = self.partition.blocks()[c.block]
                    .iter()
                    .map(|&j| (0..d).map(|a| self.directions[a + j * d] * t[a]).sum())
                    .collect();
                c.f.eval(&u)
            })
            .sum()
    }

    pub fn sample(&self, grid: GridSpec) -> Result<Field> {
        if grid.dim() != self.dim() {
            return Err(Error::InvalidArgument("function and grid dimensions differ".into()));
        }
        Field::sample(grid, |t| self.eval(t))
    }

    /// `theta` with the true structure and the given per-block bandwidths.
    pub fn aligned_theta(&self, block_h: &[f64]) -> Result<ThetaPoint> {
        let mut h = vec![0.0; self.dim()];
        for (block, hb) in self.partition.blocks().iter().zip(block_h) {
            for &j in block {
                h[j] = *hb;
            }
        }
        ThetaPoint::rotated(self.partition.clone(), self.angles.clone(), h)
    }

    /// Bias bound `sum_i L_i ||g||_1^{|I_i|} sum_{j in I_i} h_j^{beta_i}`
    /// for a theta with the true structure.
    pub fn bias_bound(&self, theta: &ThetaPoint, g: &UnivariateKernel) -> f64 {
        let g1 = g.norm1();
        self.components
            .iter()
            .map(|c| {
                let block = &self.partition.blocks()[c.block];
                let sum_h: f64 = block.iter().map(|&j| theta.bandwidths()[j].powf(c.beta)).sum();
                c.lipschitz * g1.powi(block.len() as i32) * sum_h
            })
            .sum()
    }

    /// Ideal per-block bandwidths; blocks without a component, or with a
    /// zero constant, get `h_cap`.
    pub fn ideal_block_bandwidths(&self, eps: f64, g: &UnivariateKernel, h_cap: f64) -> Result<Vec<f64>> {
        let mut out = vec![h_cap; self.partition.len()];
        for c in &self.components {
            if c.lipschitz > 0.0 {
                let size = self.partition.blocks()[c.block].len();
                out[c.block] = ideal_bandwidth(c.beta, size, self.lipschitz, eps, g, self.dim())?.min(h_cap);
            }
        }
        Ok(out)
    }
}

/// `h* = ((eps/L) sqrt(ln(1/eps)))^{2/(2 beta_i + |I_i|)} (||g||_2/||g||_1)^{2d/(2 beta_i + |I_i|)}`.
pub fn ideal_bandwidth(
    beta_i: f64,
    block_size: usize,
    lipschitz: f64,
    eps: f64,
    g: &UnivariateKernel,
    dim: usize,
) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ideal bandwidth needs 0 < eps < 1, got {eps}"
        )));
    }
    if !(beta_i > 0.0 && lipschitz > 0.0 && block_size > 0) {
        return Err(Error::InvalidArgument(
            "ideal bandwidth needs positive beta, L and block".into(),
        ));
    }
    let e = 2.0 / (2.0 * beta_i + block_size as f64);
    let base = eps / lipschitz * (1.0 / eps).ln().sqrt();
    Ok(base.powf(e) * (g.norm2() / g.norm1()).powf(dim as f64 * e))
}

/// `phi_eps(beta) = [eps sqrt(ln(1/eps))]^{2 beta/(2 beta + 1)}`.
pub fn phi_rate(eps: f64, beta: f64) -> f64 {
    (eps * (1.0 / eps).ln().sqrt()).powf(2.0 * beta / (2.0 * beta + 1.0))
}

/// `psi_{eps,d}(alpha)` for `p = inf` (with the log factor) or finite `p`.
pub fn psi_rate(eps: f64, alpha: f64, dim: usize, p: f64) -> f64 {
    let base = if p.is_infinite() {
        eps * (1.0 / eps).ln().sqrt()
    } else {
        eps
    };
    base.powf(2.0 * alpha / (2.0 * alpha + dim as f64))
}

fn inner_truth(bank: &EstimatorBank, truth: &Field) -> Vec<f64> {
    let idx = bank.grid().region_indices(Region::Inner);
    idx.iter().map(|&j| truth.values()[j]).collect()
}

/// `||B_theta||_p` for every theta.
pub fn bias_norms(grid: &ThetaGrid, truth: &Field, p: f64) -> Result<Vec<f64>> {
    let bank = grid.bank();
    let spec = bank.spectrum(truth)?;
    let offset = inner_truth(bank, truth);
    Ok(bank.estimate_norms(&spec, p, Some(&offset)))
}

/// `inf_theta { ||B_theta||_p + kappa eps sigma_theta }` with its argmin.
pub fn oracle_objective(grid: &ThetaGrid, truth: &Field, eps: f64, kappa: f64, p: f64) -> Result<(usize, f64)> {
    let bias = bias_norms(grid, truth, p)?;
    let bank = grid.bank();
    let values: Vec<f64> = bias
        .iter()
        .enumerate()
        .map(|(t, b)| b + kappa * eps * bank.sigma(t))
        .collect();
    let t = argmin_first(&values);
    Ok((t, values[t]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskReport {
    pub estimator_id: String,
    #[serde(with = "serde_p")]
    pub p: f64,
    pub eps: f64,
    pub n_rep: usize,
    pub risk: f64,
    pub sd: f64,
    pub ci_halfwidth: f64,
    pub values: Vec<f64>,
}

impl RiskReport {
    pub fn from_values(estimator_id: impl Into<String>, p: f64, eps: f64, values: Vec<f64>) -> Self {
        let (mean, sd) = mean_sd(&values);
        Self {
            estimator_id: estimator_id.into(),
            p,
            eps,
            n_rep: values.len(),
            risk: mean,
            sd,
            ci_halfwidth: 1.96 * sd / (values.len() as f64).sqrt(),
            values,
        }
    }
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Seed of replication `rep` in experiment `experiment` at noise index `k`.
pub fn replication_seed(master: u64, experiment: u64, k: u64, rep: u64) -> u64 {
    derive_seed(derive_seed(master, experiment, k), RISK_STREAM, rep)
}

#[derive(Debug, Clone)]
pub enum Procedure<'a> {
    Fixed(usize),
    Selected(&'a KappaCalibration),
}

/// Monte Carlo `E ||F^ - F||_p` over `n_rep` replications seeded by
/// `replication_seed(seed, experiment, 0, r)`.
#[allow(clippy::too_many_arguments)]
pub fn mc_risk(
    grid: &ThetaGrid,
    procedure: &Procedure,
    truth: &Field,
    eps: f64,
    p: f64,
    n_rep: usize,
    seed: u64,
    experiment: u64,
) -> Result<RiskReport> {
    if n_rep < 2 {
        return Err(Error::InvalidArgument("mc_risk needs n_rep >= 2".into()));
    }
    let bank = grid.bank();
    let offset = inner_truth(bank, truth);
    let mut values = Vec::with_capacity(n_rep);
    for r in 0..n_rep as u64 {
        let obs = Observation::simulate(truth, eps, replication_seed(seed, experiment, 0, r))?;
        let theta = match procedure {
            Procedure::Fixed(t) => *t,
            Procedure::Selected(cal) => select_index(grid, &obs, p, cal)?.0,
        };
        let est = bank.estimate(theta, &obs, Region::Inner)?;
        let err: Vec<f64> = est.values.values().iter().zip(&offset).map(|(a, b)| a - b).collect();
        values.push(bank.inner_norm(&err, p));
    }
    let id = match procedure {
        Procedure::Fixed(t) => format!("fixed-{t}"),
        Procedure::Selected(_) => "selected".to_string(),
    };
    Ok(RiskReport::from_values(id, p, eps, values))
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionRow {
    pub theta: usize,
    pub bias_norm: f64,
    pub sup_pair: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `sup_nu ||B_{theta,nu} - B_nu||_p <= M(K) ||B_theta||_p * slack` with an
/// absolute tolerance for zero-bias rows.
pub fn contraction_check(
    grid: &ThetaGrid,
    truth: &Field,
    p: f64,
    slack: f64,
    abs_tol: f64,
) -> Result<Vec<ContractionRow>> {
    let bank = grid.bank();
    let spec = bank.spectrum(truth)?;
    let bias = bias_norms(grid, truth, p)?;
    let table = bank.pair_diff_norms(&spec, p);
    let n = bank.len();
    let m = bank.constants().m_of_k;
    Ok((0..n)
        .map(|t| {
            let sup_pair = table[t * n..(t + 1) * n].iter().copied().fold(0.0, f64::max);
            let bound = m * bias[t] * slack;
            ContractionRow {
                theta: t,
                bias_norm: bias[t],
                sup_pair,
                bound,
                pass: sup_pair <= bound + abs_tol,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct IdealCaseReport {
    #[serde(with = "serde_p")]
    pub p: f64,
    pub theta_hat: usize,
    pub bias_hat: f64,
    pub min_bias: f64,
    pub m_of_k: f64,
    pub bound: f64,
    pub pass: bool,
}

/// With `eps = 0`: `||B_theta^||_p <= (2 M(K) + 1) min_theta ||B_theta||_p`.
pub fn ideal_case(grid: &ThetaGrid, truth: &Field, p: f64) -> Result<IdealCaseReport> {
    let obs = Observation::exact(truth);
    let cal = KappaCalibration::analytic(grid, p, 0.5, 0.5, 1.0)?;
    let res = select(grid, &obs, p, &cal)?;
    let bias = bias_norms(grid, truth, p)?;
    let min_bias = bias.iter().copied().fold(f64::INFINITY, f64::min);
    let m = grid.constants().m_of_k;
    let bound = (2.0 * m + 1.0) * min_bias;
    let bias_hat = bias[res.theta_hat];
    Ok(IdealCaseReport {
        p,
        theta_hat: res.theta_hat,
        bias_hat,
        min_bias,
        m_of_k: m,
        bound,
        pass: bias_hat <= bound + 1e-10,
    })
}

/// Monte Carlo `E zeta^2`, `zeta = sup_{x,theta} |Z_theta(x)| / sigma_theta`.
pub fn zeta_sq_mean(grid: &ThetaGrid, n: usize, seed: u64) -> Result<f64> {
    let bank = grid.bank();
    let mut acc = 0.0;
    for r in 0..n as u64 {
        let z = Observation::noise(*bank.grid(), derive_seed(seed, ZETA_STREAM, r));
        let spec = bank.spectrum(z.values())?;
        let norms = bank.estimate_norms(&spec, f64::INFINITY, None);
        let zeta = norms
            .iter()
            .enumerate()
            .map(|(t, v)| v / bank.sigma(t))
            .fold(0.0, f64::max);
        acc += zeta * zeta;
    }
    Ok(acc / n as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleInequalityReport {
    #[serde(with = "serde_p")]
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    pub m_of_k: f64,
    pub sigma_of_k: f64,
    pub theta_star: usize,
    pub oracle_value: f64,
    pub f_sup: f64,
    pub zeta_sq_mean: f64,
    /// `||F||_inf (1 + M) delta + eps sigma(K) sqrt(delta E zeta^2)`.
    pub remainder: f64,
    /// The same term without the factor `eps` on the stochastic part.
    pub remainder_without_eps: f64,
    pub rhs: f64,
    pub lhs: RiskReport,
    pub ratio: f64,
    /// `(lhs - ci) / rhs`.
    pub ratio_lower: f64,
    pub pass: bool,
}

/// Selected-estimator risk against `(3 + 2M) inf {...} + r(delta)`.
#[allow(clippy::too_many_arguments)]
pub fn verify_oracle_inequality(
    grid: &ThetaGrid,
    truth: &Field,
    eps: f64,
    p: f64,
    cal: &KappaCalibration,
    n_rep: usize,
    seed: u64,
    experiment: u64,
) -> Result<OracleInequalityReport> {
    cal.check(grid, p)?;
    let (theta_star, oracle_value) = oracle_objective(grid, truth, eps, cal.kappa, p)?;
    let c = grid.constants();
    let zeta_sq = match cal.zeta_sq_mean {
        Some(z) => z,
        None => zeta_sq_mean(grid, 200, seed)?,
    };
    let f_sup = truth.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let first = f_sup * (1.0 + c.m_of_k) * cal.delta;
    let second = c.sigma_of_k * (cal.delta * zeta_sq).sqrt();
    let remainder = first + eps * second;
    let rhs = (3.0 + 2.0 * c.m_of_k) * oracle_value + remainder;
    let lhs = mc_risk(grid, &Procedure::Selected(cal), truth, eps, p, n_rep, seed, experiment)?;
    let ratio = lhs.risk / rhs;
    let ratio_lower = (lhs.risk - lhs.ci_halfwidth) / rhs;
    Ok(OracleInequalityReport {
        p,
        eps,
        delta: cal.delta,
        kappa: cal.kappa,
        m_of_k: c.m_of_k,
        sigma_of_k: c.sigma_of_k,
        theta_star,
        oracle_value,
        f_sup,
        zeta_sq_mean: zeta_sq,
        remainder,
        remainder_without_eps: first + second,
        rhs,
        ratio,
        ratio_lower,
        pass: ratio_lower <= 1.0,
        lhs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerEstimatorReport {
    pub n_rep: usize,
    pub hits: usize,
    pub fraction: f64,
    /// `(1 - delta) - 1.96 sqrt(delta (1 - delta) / n)`.
    pub threshold: f64,
    pub pass: bool,
}

/// Fraction of replications with `B^_theta <= ||B_theta||_p` for all theta.
#[allow(clippy::too_many_arguments)]
pub fn lower_estimator_check(
    grid: &ThetaGrid,
    truth: &Field,
    eps: f64,
    p: f64,
    cal: &KappaCalibration,
    n_rep: usize,
    seed: u64,
    experiment: u64,
) -> Result<LowerEstimatorReport> {
    let bias = bias_norms(grid, truth, p)?;
    let mut hits = 0;
    for r in 0..n_rep as u64 {
        let obs = Observation::simulate(truth, eps, replication_seed(seed, experiment, 0, r))?;
        let b = crate::selection::bhat_table(grid, &obs, cal, p)?;
        if b.iter().zip(&bias).all(|(bh, bt)| bh <= bt) {
            hits += 1;
        }
    }
    let fraction = hits as f64 / n_rep as f64;
    let d = cal.delta;
    let threshold = (1.0 - d) - 1.96 * (d * (1.0 - d) / n_rep as f64).sqrt();
    Ok(LowerEstimatorReport {
        n_rep,
        hits,
        fraction,
        threshold,
        pass: fraction >= threshold,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichRow {
    pub theta: usize,
    #[serde(with = "serde_p")]
    pub p: f64,
    pub bias_norm: f64,
    pub noise_norm: f64,
    pub noise_ci: f64,
    pub risk: f64,
    pub risk_ci: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

/// `1/4 (||B|| + eps E||Z||) <= E||B + eps Z|| <= ||B|| + eps E||Z||`, with
/// `Z_theta` and the observation sharing each replication's noise.
#[allow(clippy::too_many_arguments)]
pub fn risk_sandwich(
    grid: &ThetaGrid,
    thetas: &[usize],
    truth: &Field,
    eps: f64,
    ps: &[f64],
    n_rep: usize,
    seed: u64,
    experiment: u64,
) -> Result<Vec<SandwichRow>> {
    let bank = grid.bank();
    let spec_f = bank.spectrum(truth)?;
    let offset = inner_truth(bank, truth);
    let bias: Vec<Vec<f64>> = thetas
        .iter()
        .map(|&t| -> Result<Vec<f64>> {
            let smooth = bank.estimate_from_spectrum(t, &spec_f, Region::Inner)?;
            Ok(smooth.values.values().iter().zip(&offset).map(|(a, b)| a - b).collect())
        })
        .collect::<Result<_>>()?;
    let k = thetas.len() * ps.len();
    let mut risk = vec![Vec::with_capacity(n_rep); k];
    let mut noise = vec![Vec::with_capacity(n_rep); k];
    for r in 0..n_rep as u64 {
        let z = Observation::noise(*bank.grid(), replication_seed(seed, experiment, 0, r));
        let spec: Vec<Complex64> = bank.spectrum(z.values())?;
        for (i, &t) in thetas.iter().enumerate() {
            let zt = bank.estimate_from_spectrum(t, &spec, Region::Inner)?;
            let err: Vec<f64> = bias[i]
                .iter()
                .zip(zt.values.values())
                .map(|(b, z)| b + eps * z)
                .collect();
            for (j, &p) in ps.iter().enumerate() {
                risk[i * ps.len() + j].push(bank.inner_norm(&err, p));
                noise[i * ps.len() + j].push(bank.inner_norm(zt.values.values(), p));
            }
        }
    }
    let mut rows = Vec::new();
    for (i, &t) in thetas.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            let b = bank.inner_norm(&bias[i], p);
            let (rm, rsd) = mean_sd(&risk[i * ps.len() + j]);
            let (zm, zsd) = mean_sd(&noise[i * ps.len() + j]);
            let sq = (n_rep as f64).sqrt();
            let (rci, zci) = (1.96 * rsd / sq, 1.96 * zsd / sq);
            let lower = 0.25 * (b + eps * zm);
            let upper = b + eps * zm;
            let pass = lower - 0.25 * eps * zci <= rm + rci && rm - rci <= upper + eps * zci;
            rows.push(SandwichRow {
                theta: t,
                p,
                bias_norm: b,
                noise_norm: zm,
                noise_ci: zci,
                risk: rm,
                risk_ci: rci,
                lower,
                upper,
                pass,
            });
        }
    }
    Ok(rows)
}

/// How `kappa` is obtained in the rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum KappaSource {
    MonteCarlo { delta: f64, n_cal: usize },
    Analytic { delta: f64, c3: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct RatePoint {
    pub eps: f64,
    pub grid_size: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub kappa: f64,
    pub selected: RiskReport,
    pub oracle_h: Vec<f64>,
    pub oracle: RiskReport,
    pub phi: f64,
    pub psi: f64,
    /// `selected risk / oracle risk`.
    pub ratio: f64,
    /// `oracle risk / (L^{1/(2 beta + 1)} phi)`.
    pub upper_constant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub beta: f64,
    #[serde(with = "serde_p")]
    pub p: f64,
    pub eps_list: Vec<f64>,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub oracle_slope: f64,
    pub target_exponent: f64,
    pub psi_exponent: f64,
}

/// Full selection at each `eps`, with the grid rebuilt per noise level.
#[allow(clippy::too_many_arguments)]
pub fn rate_experiment(
    f: &StructuredFunction,
    eps_list: &[f64],
    config: &ThetaGridConfig,
    grid: GridSpec,
    p: f64,
    kappa: KappaSource,
    n_rep: usize,
    seed: u64,
    experiment: u64,
) -> Result<RateReport> {
    if eps_list.len() < 4 || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "rate experiment needs >= 4 decreasing noise levels".into(),
        ));
    }
    let truth = f.sample(grid)?;
    let mut points = Vec::new();
    let mut cached: Option<(String, KappaCalibration)> = None;
    for (k, &eps) in eps_list.iter().enumerate() {
        let tg = ThetaGrid::build(config, eps, grid)?;
        let cal = match kappa {
            KappaSource::Analytic { delta, c3 } => KappaCalibration::analytic(&tg, p, delta, eps, c3)?,
            KappaSource::MonteCarlo { delta, n_cal } => match &cached {
                Some((hash, cal)) if hash == tg.hash() => cal.clone(),
                _ => {
                    let cal = calibrate_kappa(&tg, p, delta, n_cal, derive_seed(seed, experiment, 1000))?;
                    cached = Some((tg.hash().to_string(), cal.clone()));
                    cal
                }
            },
        };
        let exp_k = derive_seed(experiment, k as u64, 0);
        let selected = mc_risk(&tg, &Procedure::Selected(&cal), &truth, eps, p, n_rep, seed, exp_k)?;
        let oracle_h = f.ideal_block_bandwidths(eps, tg.kernel(), tg.h_max())?;
        let og = ThetaGrid::from_points(vec![f.aligned_theta(&oracle_h)?], config.kernel_order, grid)?;
        let oracle = mc_risk(&og, &Procedure::Fixed(0), &truth, eps, p, n_rep, seed, exp_k)?;
        let phi = phi_rate(eps, f.beta);
        points.push(RatePoint {
            eps,
            grid_size: tg.len(),
            h_min: tg.h_min(),
            h_max: tg.h_max(),
            kappa: cal.kappa,
            ratio: selected.risk / oracle.risk,
            upper_constant: oracle.risk / (f.lipschitz.powf(1.0 / (2.0 * f.beta + 1.0)) * phi),
            psi: psi_rate(eps, f.beta, f.dim(), p),
            phi,
            oracle_h,
            selected,
            oracle,
        });
    }
    let x: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|pt| pt.selected.risk.ln()).collect();
    let yo: Vec<f64> = points.iter().map(|pt| pt.oracle.risk.ln()).collect();
    let b = f.beta;
    Ok(RateReport {
        beta: b,
        p,
        eps_list: eps_list.to_vec(),
        slope: linear_fit(&x, &ys).0,
        oracle_slope: linear_fit(&x, &yo).0,
        target_exponent: 2.0 * b / (2.0 * b + 1.0),
        psi_exponent: 2.0 * b / (2.0 * b + f.dim() as f64),
        points,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaScalingRow {
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    pub scaled: f64,
}

/// `kappa_inf(delta = eps) / sqrt(ln(1/eps))` from one shared sample.
pub fn kappa_scaling(grid: &ThetaGrid, eps_list: &[f64], n_cal: usize, seed: u64) -> Result<Vec<KappaScalingRow>> {
    let sample =
        crate::selection::sample_suprema(grid, f64::INFINITY, n_cal, seed, crate::selection::CALIBRATION_STREAM)?;
    eps_list
        .iter()
        .map(|&eps| {
            let cal = KappaCalibration::from_sample(&sample, eps)?;
            Ok(KappaScalingRow {
                eps,
                delta: eps,
                kappa: cal.kappa,
                scaled: cal.kappa / (1.0 / eps).ln().sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::UnivariateKernel;

    #[test]
    fn holder_constant_of_cosine() {
        let l = certified_holder_constant(1.0, |k| TAU.powi(k as i32));
        assert!((l - TAU).abs() < 1e-15);
        // beta = 2: l = 1, D_0 = 1, D_1 = 2 pi, remainder max(D_2/2, 2 D_1)
        let l2 = certified_holder_constant(2.0, |k| TAU.powi(k as i32));
        assert!((l2 - (TAU * TAU / 2.0).max(2.0 * TAU)).abs() < 1e-12);
        // beta = 0.5 uses l = 0: remainder bound max(D_1, 2 D_0)
        let lh = certified_holder_constant(0.5, |k| TAU.powi(k as i32));
        assert!((lh - TAU).abs() < 1e-15);
    }

    #[test]
    fn families_reproduce_structure() {
        let s = FunctionSpec {
            angles: vec![0.4],
            ..Default::default()
        };
        let f = make_test_function(&s).unwrap();
        let e = (0.4f64.cos(), 0.4f64.sin());
        for t in [[0.1, -0.3], [0.45, 0.2]] {
            let want = (TAU * (e.0 * t[0] + e.1 * t[1])).cos();
            assert!((f.eval(&t) - want).abs() < 1e-12);
        }
        assert!((f.lipschitz - TAU).abs() < 1e-12);
        assert_eq!(f.partition.label(), "{1}|{2}");

        let add = make_test_function(&FunctionSpec {
            family: Family::Additive,
            ..Default::default()
        })
        .unwrap();
        let t = [0.13, -0.27];
        let want = (TAU * t[0]).cos() + (TAU * t[1]).sin();
        assert!((add.eval(&t) - want).abs() < 1e-12);

        let z = make_test_function(&FunctionSpec {
            family: Family::Zero,
            dim: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(z.eval(&[0.1, 0.2, 0.3]), 0.0);

        let ami = make_test_function(&FunctionSpec {
            family: Family::AdditiveMultiIndex,
            dim: 3,
            angles: vec![0.1, 0.2, 0.3],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ami.components[0].beta, 2.0);
        assert_eq!(ami.components[1].beta, 1.0);

        assert!(Family::parse("cubic").is_err());
        assert_eq!(Family::parse("projection-pursuit").unwrap(), Family::ProjectionPursuit);
        let bad = FunctionSpec {
            family: Family::MultiIndex,
            component_betas: Some(vec![1.0, 1.0]),
            ..Default::default()
        };
        assert!(matches!(make_test_function(&bad), Err(Error::InvalidFunction(_))));
        let rotated_additive = FunctionSpec {
            family: Family::Additive,
            angles: vec![0.3],
            ..Default::default()
        };
        assert!(make_test_function(&rotated_additive).is_err());
    }

    #[test]
    fn ideal_bandwidth_formula() {
        let g = UnivariateKernel::build(0).unwrap();
        let h = ideal_bandwidth(1.0, 1, 1.0, 0.05, &g, 2).unwrap();
        let want = (0.05 * 20f64.ln().sqrt()).powf(2.0 / 3.0) * (10f64 / 7.0).sqrt().powf(4.0 / 3.0);
        assert!((h - want).abs() < 1e-6 * want);
        let h2 = ideal_bandwidth(1.0, 1, 1.0, 0.1, &g, 2).unwrap();
        assert!(h < h2);
        assert!(ideal_bandwidth(1.0, 1, 1.0, 1.0, &g, 2).is_err());
        let f = make_test_function(&FunctionSpec::default()).unwrap();
        let hb = f.ideal_block_bandwidths(0.05, &g, 0.7).unwrap();
        assert_eq!(hb[1], 0.7);
        let th = f.aligned_theta(&hb).unwrap();
        assert_eq!(th.bandwidths()[0], hb[0]);
    }

    #[test]
    fn rates() {
        assert!((phi_rate(0.1, 1.0) - 0.2845).abs() < 1e-4);
        let direct = (0.1 * 10f64.ln().sqrt()).powf(2.0 / 3.0);
        assert_eq!(phi_rate(0.1, 1.0), direct);
        assert!((psi_rate(0.1, 1.0, 2, 2.0) - 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_risk_is_bias() {
        let grid = GridSpec::with_margin(1, 201).unwrap();
        let f = make_test_function(&FunctionSpec {
            dim: 1,
            ..Default::default()
        })
        .unwrap();
        let truth = f.sample(grid).unwrap();
        let th = f.aligned_theta(&[0.2]).unwrap();
        let tg = ThetaGrid::from_points(vec![th], 0, grid).unwrap();
        let r = mc_risk(&tg, &Procedure::Fixed(0), &truth, 0.0, 2.0, 5, 1, 1).unwrap();
        let b = bias_norms(&tg, &truth, 2.0).unwrap()[0];
        assert!((r.risk - b).abs() < 1e-14);
        assert_eq!(r.ci_halfwidth, 0.0);
    }

    #[test]
    fn bias_bound_holds_for_aligned_theta() {
        let grid = GridSpec::with_margin(1, 801).unwrap();
        let g = UnivariateKernel::build(0).unwrap();
        let f = make_test_function(&FunctionSpec {
            dim: 1,
            frequency: 1.5,
            ..Default::default()
        })
        .unwrap();
        let truth = f.sample(grid).unwrap();
        let pts: Vec<ThetaPoint> = [0.05, 0.1, 0.2, 0.4]
            .iter()
            .map(|&h| f.aligned_theta(&[h]).unwrap())
            .collect();
        let tg = ThetaGrid::from_points(pts, 0, grid).unwrap();
        let b = bias_norms(&tg, &truth, f64::INFINITY).unwrap();
        for (t, bt) in b.iter().enumerate() {
            assert!(*bt <= f.bias_bound(tg.bank().theta(t), &g) * 1.01);
        }
    }
}
