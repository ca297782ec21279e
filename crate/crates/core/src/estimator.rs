//! Linear estimators `F_theta`, auxiliary estimators `F_{theta,nu}` and
//! their noise scales, all evaluated through cached transfer functions.
//!
//! The transfer of `K_theta` is `H_theta = cell * DFT(K_theta)`; kernels are
//! exactly even, so `H_theta` is real. The auxiliary estimator uses the
//! product `H_theta * H_nu`, which is bitwise symmetric in `(theta, nu)`.
//! Two real outputs share one complex inverse transform:
//! `IFFT((H_1 + i H_2) A) = IFFT(H_1 A) + i IFFT(H_2 A)` for Hermitian `A`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{FftEngine, FftScratch};
use crate::grid::{lp_norm_slice, weighted_lp_norm, Field, GridSpec, Region, RegionField};
use crate::kernel::{build_all, collection_constants, CollectionConstants, KernelField, ThetaPoint, UnivariateKernel};
use crate::observation::Observation;
use crate::smoothing::check_support;

pub struct EstimatorBank {
    grid: GridSpec,
    engine: FftEngine,
    kernels: Vec<KernelField>,
    transfers: Vec<Vec<f64>>,
    constants: CollectionConstants,
    /// Row-major `sigma~_{theta,nu}`, row `theta`, column `nu`.
    pair_sigma: Vec<f64>,
    inner_weights: Vec<f64>,
}

impl std::fmt::Debug for EstimatorBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EstimatorBank")
            .field("grid", &self.grid)
            .field("len", &self.kernels.len())
            .field("constants", &self.constants)
            .finish()
    }
}

#[derive(Default)]
struct Work {
    fft: FftScratch,
    a: Vec<Complex64>,
    packed: Vec<Complex64>,
    out: Vec<Complex64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Estimate of one `theta` on a region, with its noise scale `||K_theta||_2`.
#[derive(Debug, Clone)]
pub struct EstimateField {
    pub theta: usize,
    pub values: RegionField,
    pub sigma_sup: f64,
}

/// `B_theta = K_theta F - F` on the inner region.
#[derive(Debug, Clone)]
pub struct BiasField {
    pub theta: usize,
    pub values: RegionField,
}

impl BiasField {
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.values.lp_norm(p)
    }
}

impl EstimatorBank {
    pub fn new(thetas: &[ThetaPoint], g: &UnivariateKernel, grid: GridSpec) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let kernels = build_all(thetas, g, &grid)?;
        Self::from_kernels(kernels)
    }

    pub fn from_kernels(kernels: Vec<KernelField>) -> Result<Self> {
        let constants = collection_constants(&kernels)?;
        let grid = *kernels[0].values().grid();
        let max_radius = kernels.iter().map(|k| k.radius()).max().unwrap_or(0);
        check_support(&grid, 2 * max_radius, Region::Inner)?;
        let engine = FftEngine::new(grid);
        let cell = grid.cell_volume();
        let transfers: Vec<Vec<f64>> = kernels
            .par_iter()
            .map_init(FftScratch::default, |ws, k| {
                engine
                    .forward_centered(k.values().values(), ws)
                    .into_iter()
                    .map(|c| c.re * cell)
                    .collect()
            })
            .collect();
        let n = kernels.len();
        let norm = 1.0 / (grid.len() as f64 * cell);
        let pair_sigma: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|t| {
                let ht = &transfers[t];
                transfers.iter().map(move |hn| {
                    let s: f64 = ht
                        .iter()
                        .zip(hn)
                        .map(|(a, b)| {
                            let v = b * (a - 1.0);
                            v * v
                        })
                        .sum();
                    (s * norm).sqrt().max(1.0)
                })
            })
            .collect();
        Ok(Self {
            inner_weights: grid.region_weights(Region::Inner),
            grid,
            engine,
            kernels,
            transfers,
            constants,
            pair_sigma,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernel(&self, i: usize) -> &KernelField {
        &self.kernels[i]
    }

    pub fn kernels(&self) -> &[KernelField] {
        &self.kernels
    }

    pub fn theta(&self, i: usize) -> &ThetaPoint {
        self.kernels[i].theta()
    }

    pub fn constants(&self) -> CollectionConstants {
        self.constants
    }

    /// `sup_x sigma_theta(x) = ||K_theta||_2`.
    pub fn sigma(&self, i: usize) -> f64 {
        self.kernels[i].norm2()
    }

    /// `sup_x sigma~_{theta,nu}(x) = max(||K_{theta,nu} - K_nu||_2, 1)`.
    pub fn sigma_pair_sup(&self, theta: usize, nu: usize) -> f64 {
        self.pair_sigma[theta * self.len() + nu]
    }

    pub fn pair_sigma_table(&self) -> &[f64] {
        &self.pair_sigma
    }

    /// Unnormalised DFT of an observation or a function on the grid.
    pub fn spectrum(&self, field: &Field) -> Result<Vec<Complex64>> {
        if field.grid() != &self.grid {
            return Err(Error::InvalidArgument("field grid differs from the bank grid".into()));
        }
        Ok(self.engine.forward_real(field.values(), &mut FftScratch::default()))
    }

    /// Discrete `L_p` norm over the inner region, with cell overlap weights.
    pub fn inner_norm(&self, values: &[f64], p: f64) -> f64 {
        weighted_lp_norm(values, &self.inner_weights, p, self.grid.cell_volume())
    }

    fn region_radius_check(&self, radius: usize, region: Region) -> Result<()> {
        check_support(&self.grid, radius, region)
    }

    fn inverse_real(&self, spec: &[Complex64], transfer: impl Fn(usize) -> f64, region: Region) -> RegionField {
        let prod: Vec<Complex64> = spec.iter().enumerate().map(|(k, s)| s * transfer(k)).collect();
        let mut out = Vec::new();
        self.engine
            .inverse_region(&prod, region, &mut FftScratch::default(), &mut out);
        RegionField::new(self.grid, region, out.into_iter().map(|c| c.re).collect()).expect("region size matches")
    }

    /// `F_theta` on `region` from a precomputed spectrum.
    pub fn estimate_from_spectrum(&self, theta: usize, spec: &[Complex64], region: Region) -> Result<EstimateField> {
        self.region_radius_check(self.kernels[theta].radius(), region)?;
        let h = &self.transfers[theta];
        Ok(EstimateField {
            theta,
            values: self.inverse_real(spec, |k| h[k], region),
            sigma_sup: self.sigma(theta),
        })
    }

    pub fn estimate(&self, theta: usize, obs: &Observation, region: Region) -> Result<EstimateField> {
        let spec = self.spectrum(obs.values())?;
        self.estimate_from_spectrum(theta, &spec, region)
    }

    /// `F_{theta,nu}`: the observation smoothed once by `K_{theta,nu}`.
    pub fn estimate_pair_from_spectrum(
        &self,
        theta: usize,
        nu: usize,
        spec: &[Complex64],
        region: Region,
    ) -> Result<RegionField> {
        self.region_radius_check(self.kernels[theta].radius() + self.kernels[nu].radius(), region)?;
        let (a, b) = (&self.transfers[theta], &self.transfers[nu]);
        Ok(self.inverse_real(spec, |k| a[k] * b[k], region))
    }

    pub fn estimate_pair(&self, theta: usize, nu: usize, obs: &Observation, region: Region) -> Result<RegionField> {
        let spec = self.spectrum(obs.values())?;
        self.estimate_pair_from_spectrum(theta, nu, &spec, region)
    }

    /// `B_theta` on the inner region for a known truth.
    pub fn bias_field(&self, theta: usize, truth: &Field) -> Result<BiasField> {
        let spec = self.spectrum(truth)?;
        let smooth = self.estimate_from_spectrum(theta, &spec, Region::Inner)?.values;
        let idx = self.grid.region_indices(Region::Inner);
        let vals = smooth
            .values()
            .iter()
            .zip(&idx)
            .map(|(s, &j)| s - truth.values()[j])
            .collect();
        Ok(BiasField {
            theta,
            values: RegionField::new(self.grid, Region::Inner, vals)?,
        })
    }

    /// `||IFFT(H_theta spec) - offset||_p` over the inner region for every
    /// theta. `offset` is indexed like the inner region.
    pub fn estimate_norms(&self, spec: &[Complex64], p: f64, offset: Option<&[f64]>) -> Vec<f64> {
        let n = self.len();
        let pairs: Vec<(usize, Option<usize>)> = (0..n).step_by(2).map(|i| (i, (i + 1 < n).then_some(i + 1))).collect();
        let norms: Vec<(f64, Option<f64>)> = pairs
            .par_iter()
            .map_init(Work::default, |w, &(i, j)| {
                w.a.clear();
                w.a.extend_from_slice(spec);
                self.packed_inverse(w, i, j);
                let norm_of = |v: &mut Vec<f64>| {
                    if let Some(off) = offset {
                        for (x, o) in v.iter_mut().zip(off) {
                            *x -= o;
                        }
                    }
                    self.inner_norm(v, p)
                };
                let first = norm_of(&mut w.re);
                let second = j.map(|_| norm_of(&mut w.im));
                (first, second)
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for (a, b) in norms {
            out.push(a);
            if let Some(b) = b {
                out.push(b);
            }
        }
        out
    }

    /// Row-major table of `||IFFT(H_nu (H_theta - 1) spec)||_p` over the
    /// inner region: `||F_{theta,nu} - F_nu||_p` for an observation
    /// spectrum, `||B_{theta,nu} - B_nu||_p` for a truth spectrum.
    pub fn pair_diff_norms(&self, spec: &[Complex64], p: f64) -> Vec<f64> {
        let n = self.len();
        let blocks: Vec<usize> = (0..self.pair_blocks()).collect();
        (0..n)
            .into_par_iter()
            .map_init(Work::default, |w, t| {
                let mut row = vec![f64::NAN; n];
                self.fill_row(w, spec, t, &blocks, p, &mut row);
                row
            })
            .flatten_iter()
            .collect()
    }

    /// Number of packed column blocks `{2k, 2k+1}` in a pair row.
    pub fn pair_blocks(&self) -> usize {
        self.len().div_ceil(2)
    }

    /// One row of [`Self::pair_diff_norms`] restricted to the given column
    /// blocks; other entries are NaN. Values are bitwise identical to the
    /// full table because columns are always packed in the same pairs.
    pub fn pair_diff_row(&self, spec: &[Complex64], theta: usize, blocks: &[usize], p: f64) -> Vec<f64> {
        let mut row = vec![f64::NAN; self.len()];
        if blocks.len() < 2 {
            self.fill_row(&mut Work::default(), spec, theta, blocks, p, &mut row);
            return row;
        }
        let parts: Vec<Vec<f64>> = blocks
            .par_chunks(blocks.len().div_ceil(rayon::current_num_threads()).max(1))
            .map_init(Work::default, |w, chunk| {
                let mut part = vec![f64::NAN; self.len()];
                self.fill_row(w, spec, theta, chunk, p, &mut part);
                part
            })
            .collect();
        for part in parts {
            for (r, v) in row.iter_mut().zip(part) {
                if !v.is_nan() {
                    *r = v;
                }
            }
        }
        row
    }

    fn fill_row(&self, w: &mut Work, spec: &[Complex64], theta: usize, blocks: &[usize], p: f64, row: &mut [f64]) {
        let n = self.len();
        let ht = &self.transfers[theta];
        w.a.clear();
        w.a.extend(spec.iter().zip(ht).map(|(s, h)| s * (h - 1.0)));
        for &b in blocks {
            let nu = 2 * b;
            let second = (nu + 1 < n).then_some(nu + 1);
            self.packed_inverse(w, nu, second);
            row[nu] = self.inner_norm(&w.re, p);
            if let Some(s) = second {
                row[s] = self.inner_norm(&w.im, p);
            }
        }
    }

    /// Fills `w.re` (and `w.im`) with `IFFT(H_i w.a)` (and `IFFT(H_j w.a)`)
    /// on the inner region.
    fn packed_inverse(&self, w: &mut Work, i: usize, j: Option<usize>) {
        let hi = &self.transfers[i];
        w.packed.clear();
        match j {
            Some(j) => {
                let hj = &self.transfers[j];
                w.packed.extend(
                    w.a.iter()
                        .zip(hi.iter().zip(hj))
                        .map(|(a, (x, y))| a * Complex64::new(*x, *y)),
                );
            }
            None => w.packed.extend(w.a.iter().zip(hi).map(|(a, x)| a * x)),
        }
        self.engine
            .inverse_region(&w.packed, Region::Inner, &mut w.fft, &mut w.out);
        w.re.clear();
        w.re.extend(w.out.iter().map(|c| c.re));
        w.im.clear();
        w.im.extend(w.out.iter().map(|c| c.im));
    }
}

/// Plain (unweighted) norm helper for region fields outside the inner cube.
pub fn region_norm(values: &[f64], p: f64, grid: &GridSpec) -> f64 {
    lp_norm_slice(values, p, grid.cell_volume())
}
