//! Discretised white-noise observations
//! `y_j = F(t_j) + eps * cell^(-1/2) * xi_j`.
//!
//! With this density, `sum_j K(t_j - x) y_j * cell` has stochastic part
//! `eps * sum_j K(t_j - x) cell^(1/2) xi_j`, whose variance is
//! `eps^2 * sum_j K^2 * cell`, the discrete `eps^2 ||K||_2^2`.

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::rng::fill_noise;

#[derive(Debug, Clone)]
pub struct Observation {
    eps: f64,
    values: Field,
}

impl Observation {
    /// `truth + eps * cell^(-1/2) * xi` with `xi = draw_noise(grid, seed)`.
    pub fn simulate(truth: &Field, eps: f64, seed: u64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level {eps} must be >= 0")));
        }
        let grid = *truth.grid();
        let mut values = truth.values().to_vec();
        if eps > 0.0 {
            let mut xi = vec![0.0; grid.len()];
            fill_noise(seed, &mut xi);
            let s = eps / grid.cell_volume().sqrt();
            for (v, z) in values.iter_mut().zip(&xi) {
                *v += s * z;
            }
        }
        Ok(Self {
            eps,
            values: Field::new(grid, values)?,
        })
    }

    /// Pure noise at unit level, `cell^(-1/2) * xi`; estimators applied to
    /// it return the stochastic terms `Z_theta`.
    pub fn noise(grid: GridSpec, seed: u64) -> Self {
        let mut xi = vec![0.0; grid.len()];
        fill_noise(seed, &mut xi);
        let s = 1.0 / grid.cell_volume().sqrt();
        for v in xi.iter_mut() {
            *v *= s;
        }
        Self {
            eps: 1.0,
            values: Field::new(grid, xi).expect("finite noise"),
        }
    }

    /// Noise-free observation of `truth`.
    pub fn exact(truth: &Field) -> Self {
        Self {
            eps: 0.0,
            values: truth.clone(),
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn grid(&self) -> &GridSpec {
        self.values.grid()
    }

    pub fn values(&self) -> &Field {
        &self.values
    }
}
