//! Separable N-dimensional FFTs on a [`GridSpec`].
//!
//! All transforms are circular over the full `n^d` grid. Kernel supports are
//! checked against the grid margin before any product is formed, so circular
//! and linear convolution agree on every node that is read back.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{GridSpec, Region};

pub struct FftEngine {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftEngine").field("grid", &self.grid).finish()
    }
}

/// Reusable buffers for one worker.
#[derive(Default)]
pub struct FftScratch {
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl FftEngine {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Unnormalised forward transform of a real field.
    pub fn forward_real(&self, values: &[f64], ws: &mut FftScratch) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut data, ws);
        data
    }

    /// Forward transform of a centred kernel: the origin node is moved to
    /// flat index 0 first, so products of spectra act as convolutions about
    /// the origin.
    pub fn forward_centered(&self, values: &[f64], ws: &mut FftScratch) -> Vec<Complex64> {
        let shifted = self.ifftshift(values);
        self.forward_real(&shifted, ws)
    }

    pub fn forward_in_place(&self, data: &mut [Complex64], ws: &mut FftScratch) {
        let n = self.grid.points_per_axis();
        let shape = vec![n; self.grid.dim()];
        for axis in 0..self.grid.dim() {
            transform_axis(&*self.forward, data, &shape, axis, ws);
        }
    }

    /// Full inverse transform scaled by `1/N`; returns the real part.
    pub fn inverse_real(&self, spectrum: &[Complex64], ws: &mut FftScratch) -> Vec<f64> {
        let mut data = spectrum.to_vec();
        let n = self.grid.points_per_axis();
        let shape = vec![n; self.grid.dim()];
        for axis in 0..self.grid.dim() {
            transform_axis(&*self.inverse, &mut data, &shape, axis, ws);
        }
        let scale = 1.0 / self.grid.len() as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    /// Inverse transform scaled by `1/N`, evaluated only on the nodes of
    /// `region`. Output is row-major over the region cube. Axes are
    /// transformed last-to-first and each is cropped right after its pass,
    /// so later passes touch fewer lines.
    pub fn inverse_region(
        &self,
        spectrum: &[Complex64],
        region: Region,
        ws: &mut FftScratch,
        out: &mut Vec<Complex64>,
    ) {
        let n = self.grid.points_per_axis();
        let d = self.grid.dim();
        let (lo, hi) = self.grid.axis_range(region);
        let m = hi - lo + 1;
        let mut shape = vec![n; d];

        let mut cur = std::mem::take(&mut ws.a);
        let mut next = std::mem::take(&mut ws.b);
        cur.clear();
        cur.extend_from_slice(spectrum);

        let len = self.inverse.len();
        if ws.line.len() != len {
            ws.line.resize(len, Complex64::default());
        }
        let need = self.inverse.get_inplace_scratch_len();
        if ws.scratch.len() < need {
            ws.scratch.resize(need, Complex64::default());
        }

        for axis in (0..d).rev() {
            let outer: usize = shape[..axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            next.clear();
            next.resize(outer * m * inner, Complex64::default());
            for o in 0..outer {
                let src_base = o * n * inner;
                let dst_base = o * m * inner;
                for i in 0..inner {
                    for k in 0..n {
                        ws.line[k] = cur[src_base + k * inner + i];
                    }
                    self.inverse.process_with_scratch(&mut ws.line, &mut ws.scratch[..need]);
                    for k in lo..=hi {
                        next[dst_base + (k - lo) * inner + i] = ws.line[k];
                    }
                }
            }
            shape[axis] = m;
            std::mem::swap(&mut cur, &mut next);
        }

        let scale = 1.0 / self.grid.len() as f64;
        out.clear();
        out.extend(cur.iter().map(|c| c * scale));
        ws.a = cur;
        ws.b = next;
    }

    /// Moves the centre node to index 0 along every axis.
    pub fn ifftshift(&self, values: &[f64]) -> Vec<f64> {
        self.shift(values, self.grid.center())
    }

    /// Inverse of [`FftEngine::ifftshift`].
    pub fn fftshift(&self, values: &[f64]) -> Vec<f64> {
        let n = self.grid.points_per_axis();
        self.shift(values, n - self.grid.center())
    }

    fn shift(&self, values: &[f64], by: usize) -> Vec<f64> {
        let n = self.grid.points_per_axis();
        let d = self.grid.dim();
        let mut out = vec![0.0; values.len()];
        let mut idx = vec![0usize; d];
        for (j, &v) in values.iter().enumerate() {
            self.grid.unravel(j, &mut idx);
            for k in idx.iter_mut() {
                *k = (*k + n - by) % n;
            }
            out[self.grid.ravel(&idx)] = v;
        }
        out
    }
}

fn transform_axis(fft: &dyn Fft<f64>, data: &mut [Complex64], shape: &[usize], axis: usize, ws: &mut FftScratch) {
    let n = shape[axis];
    let need = fft.get_inplace_scratch_len();
    if ws.scratch.len() < need {
        ws.scratch.resize(need, Complex64::default());
    }
    let inner: usize = shape[axis + 1..].iter().product();
    if inner == 1 {
        // contiguous lines: rustfft processes a whole batch at once
        fft.process_with_scratch(data, &mut ws.scratch[..need]);
        return;
    }
    let outer: usize = shape[..axis].iter().product();
    ws.line.resize(n, Complex64::default());
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            for k in 0..n {
                ws.line[k] = data[base + k * inner + i];
            }
            fft.process_with_scratch(&mut ws.line, &mut ws.scratch[..need]);
            for k in 0..n {
                data[base + k * inner + i] = ws.line[k];
            }
        }
    }
}
