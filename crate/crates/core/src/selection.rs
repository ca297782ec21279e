//! Discretised parameter set, calibration of `kappa_p`, the lower bias
//! estimator `B^_theta` and the selection rule
//! `theta^ = argmin { B^_theta + kappa * eps * sigma_theta }`.

use std::collections::HashSet;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimateField, EstimatorBank};
use crate::grid::{fmt_num, GridSpec, Region};
use crate::kernel::{
    enumerate_partitions, rotation_planes, CollectionConstants, ThetaPoint, UnivariateKernel, DEFAULT_ETA,
};
use crate::observation::Observation;
use crate::report::{fmt_p, serde_p, sha256_hex};
use crate::rng::derive_seed;

/// Stream tag for calibration noise draws.
pub const CALIBRATION_STREAM: u64 = 0xCA1B;
/// Stream tag for fresh draws used to audit a calibration.
pub const VALIDATION_STREAM: u64 = 0x0A0D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaGridConfig {
    pub dim: usize,
    /// Angles per Givens plane, `k * (pi/2) / n_angles`.
    pub n_angles: usize,
    /// Bandwidths per partition block.
    pub n_h: usize,
    pub beta_max: f64,
    pub eta: f64,
    pub kernel_order: usize,
    /// Window `[eps^2, eps^(2/((2 beta_max + 1) d))]` unless overridden.
    pub theory_window: bool,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    /// Smallest bandwidth in grid steps; `None` picks 8 for orders 0 and 1
    /// and 24 above.
    pub h_floor_cells: Option<f64>,
}

impl Default for ThetaGridConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            n_angles: 4,
            n_h: 3,
            beta_max: 1.0,
            eta: DEFAULT_ETA,
            kernel_order: 0,
            theory_window: true,
            h_min: None,
            h_max: None,
            h_floor_cells: None,
        }
    }
}

impl ThetaGridConfig {
    pub fn floor_cells(&self) -> f64 {
        self.h_floor_cells
            .unwrap_or(if self.kernel_order <= 1 { 8.0 } else { 24.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidArgument(format!(
                "dimension {} is not in 1..=3",
                self.dim
            )));
        }
        if self.n_angles == 0 || self.n_h == 0 {
            return Err(Error::InvalidArgument(
                "angle and bandwidth grids must be non-empty".into(),
            ));
        }
        if !(self.beta_max > 0.0 && self.eta > 0.0) {
            return Err(Error::InvalidArgument("beta_max and eta must be positive".into()));
        }
        if let Some(c) = self.h_floor_cells {
            if !(c >= 0.0) {
                return Err(Error::InvalidArgument(format!("h_floor_cells {c} is negative")));
            }
        }
        Ok(())
    }

    /// Effective `[h_min, h_max]` at noise level `eps` on `grid`.
    pub fn bandwidth_window(&self, eps: f64, grid: &GridSpec) -> Result<(f64, f64)> {
        self.validate()?;
        let theory = |what: &str| -> Result<(f64, f64)> {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "the {what} bandwidth needs 0 < eps < 1, got {eps}"
                )));
            }
            let d = self.dim as f64;
            Ok((eps * eps, eps.powf(2.0 / ((2.0 * self.beta_max + 1.0) * d))))
        };
        let h_min = match (self.h_min, self.theory_window) {
            (Some(h), _) => h,
            (None, true) => theory("minimal")?.0,
            (None, false) => return Err(Error::InvalidArgument("h_min is required".into())),
        };
        let h_max = match (self.h_max, self.theory_window) {
            (Some(h), _) => h,
            (None, true) => theory("maximal")?.1,
            (None, false) => return Err(Error::InvalidArgument("h_max is required".into())),
        };
        let h_min = h_min.max(self.floor_cells() * grid.spacing());
        let h_max = h_max.min(1.0);
        let ok = if self.n_h == 1 { h_min <= h_max } else { h_min < h_max };
        if !ok || !h_min.is_finite() || h_min <= 0.0 {
            return Err(Error::EmptyBandwidthWindow { h_min, h_max });
        }
        Ok((h_min, h_max))
    }
}

/// Geometric grid of `n` values from `lo` to `hi`, endpoints exact.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let ratio = (hi / lo).ln();
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => lo * (ratio * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// All Givens angle vectors on the grid `k * (pi/2) / n` per plane.
pub fn angle_grid(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let planes = rotation_planes(dim).len();
    let step = std::f64::consts::FRAC_PI_2 / n as f64;
    let mut out = vec![Vec::new()];
    for _ in 0..planes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k as f64 * step);
                    v
                })
            })
            .collect();
    }
    out
}

/// The finite parameter set together with its estimator bank.
#[derive(Debug)]
pub struct ThetaGrid {
    config: Option<ThetaGridConfig>,
    points: Vec<ThetaPoint>,
    h_min: f64,
    h_max: f64,
    structural_count: usize,
    continuous_radius: f64,
    kernel: UnivariateKernel,
    bank: EstimatorBank,
    hash: String,
}

/// Enumerates partitions x rotations x block-constant bandwidths.
pub fn build_theta_points(config: &ThetaGridConfig, eps: f64, grid: &GridSpec) -> Result<(Vec<ThetaPoint>, f64, f64)> {
    let (h_min, h_max) = config.bandwidth_window(eps, grid)?;
    if grid.dim() != config.dim {
        return Err(Error::InvalidArgument(format!(
            "grid dimension {} differs from the parameter dimension {}",
            grid.dim(),
            config.dim
        )));
    }
    let hs = geometric_grid(h_min, h_max, config.n_h);
    let angles = angle_grid(config.dim, config.n_angles);
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    for partition in enumerate_partitions(config.dim) {
        let blocks = partition.len();
        let tuples = (0..blocks).fold(vec![Vec::new()], |acc: Vec<Vec<f64>>, _| {
            acc.into_iter()
                .flat_map(|prefix| {
                    hs.iter().map(move |&h| {
                        let mut v = prefix.clone();
                        v.push(h);
                        v
                    })
                })
                .collect()
        });
        for a in &angles {
            for tuple in &tuples {
                let mut h = vec![0.0; config.dim];
                for (block, &hb) in partition.blocks().iter().zip(tuple) {
                    for &j in block {
                        h[j] = hb;
                    }
                }
                let theta = ThetaPoint::rotated(partition.clone(), a.clone(), h)?;
                theta.validate(config.eta)?;
                let key: Vec<u64> = theta
                    .directions()
                    .iter()
                    .chain(theta.bandwidths())
                    .map(|v| v.to_bits())
                    .chain(std::iter::once(blocks as u64))
                    .collect();
                if seen.insert((partition.label(), key)) {
                    points.push(theta);
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok((points, h_min, h_max))
}

impl ThetaGrid {
    pub fn build(config: &ThetaGridConfig, eps: f64, grid: GridSpec) -> Result<Self> {
        let (points, h_min, h_max) = build_theta_points(config, eps, &grid)?;
        let mut out = Self::from_points(points, config.kernel_order, grid)?;
        out.config = Some(config.clone());
        out.h_min = h_min;
        out.h_max = h_max;
        Ok(out)
    }

    /// A grid with explicitly listed points.
    pub fn from_points(points: Vec<ThetaPoint>, kernel_order: usize, grid: GridSpec) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let kernel = UnivariateKernel::build(kernel_order)?;
        let bank = EstimatorBank::new(&points, &kernel, grid)?;
        let all_h = points.iter().flat_map(|t| t.bandwidths().iter().copied());
        let (h_min, h_max) = all_h.fold((f64::INFINITY, 0.0f64), |(lo, hi), h| (lo.min(h), hi.max(h)));
        let labels: HashSet<String> = points.iter().map(|t| t.partition().label()).collect();
        let max_angle = points
            .iter()
            .flat_map(|t| t.angles().iter().map(|a| a.abs()))
            .fold(0.0f64, f64::max);
        let hash = theta_hash(&points, kernel_order, &grid);
        Ok(Self {
            config: None,
            structural_count: labels.len(),
            continuous_radius: max_angle.max(h_max),
            points,
            h_min,
            h_max,
            kernel,
            bank,
            hash,
        })
    }

    pub fn config(&self) -> Option<&ThetaGridConfig> {
        self.config.as_ref()
    }

    pub fn points(&self) -> &[ThetaPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn structural_count(&self) -> usize {
        self.structural_count
    }

    pub fn continuous_radius(&self) -> f64 {
        self.continuous_radius
    }

    pub fn kernel(&self) -> &UnivariateKernel {
        &self.kernel
    }

    pub fn bank(&self) -> &EstimatorBank {
        &self.bank
    }

    pub fn grid(&self) -> &GridSpec {
        self.bank.grid()
    }

    pub fn constants(&self) -> CollectionConstants {
        self.bank.constants()
    }

    /// SHA-256 of the grid geometry, kernel order and every point.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

fn theta_hash(points: &[ThetaPoint], order: usize, grid: &GridSpec) -> String {
    let mut s = format!(
        "grid {} {} {}\norder {order}\n",
        grid.dim(),
        grid.points_per_axis(),
        fmt_num(grid.half_width())
    );
    for t in points {
        s.push_str(&t.partition().label());
        for v in t.directions().iter().chain(t.bandwidths()) {
            s.push(' ');
            s.push_str(&fmt_num(*v));
        }
        s.push('\n');
    }
    sha256_hex(s.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaMode {
    MonteCarlo,
    Analytic,
}

/// Per-replication suprema of the normalised stochastic terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupremaSample {
    #[serde(with = "serde_p")]
    pub p: f64,
    pub seed: u64,
    pub grid_hash: String,
    /// `sup_theta ||Z_theta||_p / sigma_theta`.
    pub s1: Vec<f64>,
    /// `sup_{theta,nu} ||Z_{theta,nu} - Z_nu||_p / sigma~_{theta,nu}`.
    pub s2: Vec<f64>,
    /// `zeta = sup_{x,theta} |Z_theta(x)| / sigma_theta`.
    pub zeta: Vec<f64>,
}

impl SupremaSample {
    pub fn len(&self) -> usize {
        self.s1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s1.is_empty()
    }

    pub fn zeta_sq_mean(&self) -> f64 {
        self.zeta.iter().map(|z| z * z).sum::<f64>() / self.zeta.len() as f64
    }
}

/// Suprema of one unit-level noise replication.
pub fn noise_suprema(grid: &ThetaGrid, p: f64, noise_seed: u64) -> Result<(f64, f64, f64)> {
    let bank = grid.bank();
    let z = Observation::noise(*bank.grid(), noise_seed);
    let spec = bank.spectrum(z.values())?;
    Ok(suprema_from_spectrum(bank, &spec, p))
}

fn suprema_from_spectrum(bank: &EstimatorBank, spec: &[Complex64], p: f64) -> (f64, f64, f64) {
    let n = bank.len();
    let sup_norm = |norms: &[f64]| {
        norms
            .iter()
            .enumerate()
            .map(|(t, v)| v / bank.sigma(t))
            .fold(0.0f64, f64::max)
    };
    let single = bank.estimate_norms(spec, p, None);
    let s1 = sup_norm(&single);
    let zeta = if p.is_infinite() {
        s1
    } else {
        sup_norm(&bank.estimate_norms(spec, f64::INFINITY, None))
    };
    let table = bank.pair_diff_norms(spec, p);
    let s2 = table
        .iter()
        .enumerate()
        .map(|(k, v)| v / bank.sigma_pair_sup(k / n, k % n))
        .fold(0.0f64, f64::max);
    (s1, s2, zeta)
}

/// Draws `n` replications with seeds `derive_seed(seed, stream, r)`.
pub fn sample_suprema(grid: &ThetaGrid, p: f64, n: usize, seed: u64, stream: u64) -> Result<SupremaSample> {
    check_p(p)?;
    let mut out = SupremaSample {
        p,
        seed,
        grid_hash: grid.hash().to_string(),
        s1: Vec::with_capacity(n),
        s2: Vec::with_capacity(n),
        zeta: Vec::with_capacity(n),
    };
    for r in 0..n as u64 {
        let (s1, s2, zeta) = noise_suprema(grid, p, derive_seed(seed, stream, r))?;
        out.s1.push(s1);
        out.s2.push(s2);
        out.zeta.push(zeta);
    }
    Ok(out)
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("norm exponent {p} must be >= 1")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta {delta} is not in (0, 1)")))
    }
}

/// Smallest replication count that resolves the `1 - delta/2` quantile.
pub fn min_replications(delta: f64) -> usize {
    (20.0 / delta - 1e-9).ceil() as usize
}

/// The `ceil(level * n)`-th order statistic (1-based).
pub fn empirical_quantile(values: &[f64], level: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let k = ((level * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    v[k - 1]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaCalibration {
    #[serde(with = "serde_p")]
    pub p: f64,
    pub delta: f64,
    pub kappa: f64,
    pub mode: KappaMode,
    pub n_cal: usize,
    pub grid_hash: String,
    pub seed: u64,
    /// `1 - delta/2` quantiles of `S_1` and `S_2`.
    pub quantile_s1: Option<f64>,
    pub quantile_s2: Option<f64>,
    /// Monte Carlo estimate of `E zeta^2`.
    pub zeta_sq_mean: Option<f64>,
    pub c3: Option<f64>,
    pub eps: Option<f64>,
}

impl KappaCalibration {
    pub fn from_sample(sample: &SupremaSample, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let need = min_replications(delta);
        if sample.len() < need {
            return Err(Error::TooFewReplications {
                required: need,
                got: sample.len(),
                delta,
            });
        }
        let level = 1.0 - delta / 2.0;
        let q1 = empirical_quantile(&sample.s1, level);
        let q2 = empirical_quantile(&sample.s2, level);
        Ok(Self {
            p: sample.p,
            delta,
            kappa: q1.max(q2),
            mode: KappaMode::MonteCarlo,
            n_cal: sample.len(),
            grid_hash: sample.grid_hash.clone(),
            seed: sample.seed,
            quantile_s1: Some(q1),
            quantile_s2: Some(q2),
            zeta_sq_mean: Some(sample.zeta_sq_mean()),
            c3: None,
            eps: None,
        })
    }

    /// `kappa = sqrt(c3 ln(1/eps))`.
    pub fn analytic(grid: &ThetaGrid, p: f64, delta: f64, eps: f64, c3: f64) -> Result<Self> {
        check_p(p)?;
        check_delta(delta)?;
        if !(eps > 0.0 && eps < 1.0 && c3 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "analytic kappa needs 0 < eps < 1 and c3 > 0, got eps={eps}, c3={c3}"
            )));
        }
        Ok(Self {
            p,
            delta,
            kappa: analytic_kappa(eps, c3),
            mode: KappaMode::Analytic,
            n_cal: 0,
            grid_hash: grid.hash().to_string(),
            seed: 0,
            quantile_s1: None,
            quantile_s2: None,
            zeta_sq_mean: None,
            c3: Some(c3),
            eps: Some(eps),
        })
    }

    /// Errors unless this calibration belongs to `grid` and `p`.
    pub fn check(&self, grid: &ThetaGrid, p: f64) -> Result<()> {
        if self.grid_hash != grid.hash() {
            return Err(Error::CalibrationMismatch(format!(
                "calibration grid {} differs from grid {}",
                self.grid_hash,
                grid.hash()
            )));
        }
        if self.p != p {
            return Err(Error::CalibrationMismatch(format!(
                "calibration exponent {} differs from {}",
                fmt_p(self.p),
                fmt_p(p)
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn analytic_kappa(eps: f64, c3: f64) -> f64 {
    (c3 * (1.0 / eps).ln()).sqrt()
}

/// Monte Carlo `kappa_p` with `n_cal` replications.
pub fn calibrate_kappa(grid: &ThetaGrid, p: f64, delta: f64, n_cal: usize, seed: u64) -> Result<KappaCalibration> {
    check_delta(delta)?;
    let need = min_replications(delta);
    if n_cal < need {
        return Err(Error::TooFewReplications {
            required: need,
            got: n_cal,
            delta,
        });
    }
    let sample = sample_suprema(grid, p, n_cal, seed, CALIBRATION_STREAM)?;
    KappaCalibration::from_sample(&sample, delta)
}

#[derive(Debug, Clone, Serialize)]
pub struct Exceedance {
    pub n: usize,
    pub count: usize,
    pub fraction: f64,
    /// `delta + 3 sqrt(delta (1 - delta) / n)`.
    pub threshold: f64,
    pub pass: bool,
}

/// Fraction of fresh replications in which either supremum exceeds kappa.
pub fn calibration_exceedance(grid: &ThetaGrid, cal: &KappaCalibration, n: usize, seed: u64) -> Result<Exceedance> {
    cal.check(grid, cal.p)?;
    let sample = sample_suprema(grid, cal.p, n, seed, VALIDATION_STREAM)?;
    let count = sample
        .s1
        .iter()
        .zip(&sample.s2)
        .filter(|(a, b)| **a > cal.kappa || **b > cal.kappa)
        .count();
    let fraction = count as f64 / n as f64;
    let d = cal.delta;
    let threshold = d + 3.0 * (d * (1.0 - d) / n as f64).sqrt();
    Ok(Exceedance {
        n,
        count,
        fraction,
        threshold,
        pass: fraction <= threshold,
    })
}

/// `M(K)^-1 max_nu [ row_nu - eps kappa sigma~_{theta,nu} ]` over the
/// entries of `row` that are not NaN.
fn bhat_from_row(bank: &EstimatorBank, theta: usize, row: &[f64], eps_kappa: f64) -> f64 {
    let m = bank.constants().m_of_k;
    let best = row
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .map(|(nu, v)| v - eps_kappa * bank.sigma_pair_sup(theta, nu))
        .fold(f64::NEG_INFINITY, f64::max);
    best / m
}

/// `B^_theta(p)` for every theta. Not clamped at zero.
pub fn bhat_table(grid: &ThetaGrid, obs: &Observation, cal: &KappaCalibration, p: f64) -> Result<Vec<f64>> {
    cal.check(grid, p)?;
    let bank = grid.bank();
    let spec = bank.spectrum(obs.values())?;
    Ok(bhat_from_spectrum(bank, &spec, obs.eps() * cal.kappa, p))
}

fn bhat_from_spectrum(bank: &EstimatorBank, spec: &[Complex64], eps_kappa: f64, p: f64) -> Vec<f64> {
    let n = bank.len();
    let table = bank.pair_diff_norms(spec, p);
    (0..n)
        .map(|t| bhat_from_row(bank, t, &table[t * n..(t + 1) * n], eps_kappa))
        .collect()
}

/// `B^_theta(p)` for one theta.
pub fn bhat(grid: &ThetaGrid, theta: usize, obs: &Observation, cal: &KappaCalibration, p: f64) -> Result<f64> {
    cal.check(grid, p)?;
    let bank = grid.bank();
    let spec = bank.spectrum(obs.values())?;
    let blocks: Vec<usize> = (0..bank.pair_blocks()).collect();
    let row = bank.pair_diff_row(&spec, theta, &blocks, p);
    Ok(bhat_from_row(bank, theta, &row, obs.eps() * cal.kappa))
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub theta_hat: usize,
    pub theta: ThetaPoint,
    pub bhat: Vec<f64>,
    pub sigma_sup: Vec<f64>,
    pub objective: Vec<f64>,
    pub kappa: KappaCalibration,
    pub estimate: EstimateField,
}

impl SelectionResult {
    pub fn write_objective_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["theta_id", "bhat", "sigma_sup", "objective"])?;
        for t in 0..self.objective.len() {
            wtr.write_record([
                t.to_string(),
                fmt_num(self.bhat[t]),
                fmt_num(self.sigma_sup[t]),
                fmt_num(self.objective[t]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// First index attaining the minimum.
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Exhaustive selection with the full objective table.
pub fn select(grid: &ThetaGrid, obs: &Observation, p: f64, cal: &KappaCalibration) -> Result<SelectionResult> {
    cal.check(grid, p)?;
    let bank = grid.bank();
    let spec = bank.spectrum(obs.values())?;
    let ek = obs.eps() * cal.kappa;
    let bhat = bhat_from_spectrum(bank, &spec, ek, p);
    let sigma_sup: Vec<f64> = (0..bank.len()).map(|t| bank.sigma(t)).collect();
    let objective: Vec<f64> = bhat.iter().zip(&sigma_sup).map(|(b, s)| b + ek * s).collect();
    let theta_hat = argmin_first(&objective);
    Ok(SelectionResult {
        theta_hat,
        theta: bank.theta(theta_hat).clone(),
        estimate: bank.estimate_from_spectrum(theta_hat, &spec, Region::Inner)?,
        bhat,
        sigma_sup,
        objective,
        kappa: cal.clone(),
    })
}

/// The same `theta^` as [`select`], with its objective value, evaluating
/// only the rows that can still win.
///
/// Lower bounds for every theta come from the columns of the smallest
/// bandwidth of each partition; full rows are then computed in order of
/// increasing bound until the bound exceeds the best objective found.
pub fn select_index(grid: &ThetaGrid, obs: &Observation, p: f64, cal: &KappaCalibration) -> Result<(usize, f64)> {
    cal.check(grid, p)?;
    let bank = grid.bank();
    let spec = bank.spectrum(obs.values())?;
    Ok(select_pruned(bank, &spec, obs.eps() * cal.kappa, p))
}

fn seed_blocks(bank: &EstimatorBank) -> Vec<usize> {
    let mut best: Vec<(String, f64, usize)> = Vec::new();
    for t in 0..bank.len() {
        let theta = bank.theta(t);
        let label = theta.partition().label();
        let size: f64 = theta.bandwidths().iter().product();
        match best.iter_mut().find(|(l, _, _)| *l == label) {
            Some(entry) if size < entry.1 => *entry = (label, size, t),
            Some(_) => {}
            None => best.push((label, size, t)),
        }
    }
    let mut blocks: Vec<usize> = best.iter().map(|(_, _, t)| t / 2).collect();
    blocks.sort_unstable();
    blocks.dedup();
    blocks
}

pub(crate) fn select_pruned(bank: &EstimatorBank, spec: &[Complex64], eps_kappa: f64, p: f64) -> (usize, f64) {
    let n = bank.len();
    let seeds = seed_blocks(bank);
    let pen: Vec<f64> = (0..n).map(|t| eps_kappa * bank.sigma(t)).collect();
    let mut rows: Vec<Vec<f64>> = (0..n).map(|t| bank.pair_diff_row(spec, t, &seeds, p)).collect();
    let bound: Vec<f64> = (0..n)
        .map(|t| bhat_from_row(bank, t, &rows[t], eps_kappa) + pen[t])
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| bound[a].total_cmp(&bound[b]).then(a.cmp(&b)));
    let rest: Vec<usize> = (0..bank.pair_blocks()).filter(|b| !seeds.contains(b)).collect();
    let mut best: Option<(usize, f64)> = None;
    for t in order {
        if let Some((bt, bv)) = best {
            if bound[t] > bv || (bound[t] == bv && t > bt) {
                break;
            }
        }
        let extra = bank.pair_diff_row(spec, t, &rest, p);
        for (r, v) in rows[t].iter_mut().zip(extra) {
            if !v.is_nan() {
                *r = v;
            }
        }
        let value = bhat_from_row(bank, t, &rows[t], eps_kappa) + pen[t];
        let better = match best {
            None => true,
            Some((bt, bv)) => value < bv || (value == bv && t < bt),
        };
        if better {
            best = Some((t, value));
        }
    }
    best.expect("non-empty grid")
}
