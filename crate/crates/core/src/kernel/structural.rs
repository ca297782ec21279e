//! Structural kernels
//! `K_theta(t) = |det E| sum_i G_{i,h}(E^T t) - (|I| - 1) |det E| G_0(E^T t)`
//! sampled on a grid.
//!
//! Every term `|det E| G(E^T t)` is normalised so its discrete integral is
//! exactly one, hence `sum K * cell = 1` up to rounding. When `E` is the
//! identity the terms factor over the axes and each one-dimensional factor
//! additionally has its even discrete moments up to the kernel order set to
//! zero, so polynomials of that degree pass through the discrete smoother
//! unchanged.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{fmt_num, Field, GridSpec};
use crate::kernel::theta::ThetaPoint;
use crate::kernel::univariate::UnivariateKernel;

#[derive(Debug, Clone)]
pub struct KernelField {
    theta: ThetaPoint,
    values: Field,
    norm1: f64,
    norm2: f64,
    integral: f64,
    radius: usize,
}

impl KernelField {
    pub fn theta(&self) -> &ThetaPoint {
        &self.theta
    }

    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn norm1(&self) -> f64 {
        self.norm1
    }

    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Largest axis offset, in nodes, of a nonzero value.
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn into_values(self) -> Field {
        self.values
    }
}

/// Discrete `(L_1, L_2)` norms of a kernel.
pub fn kernel_norms(k: &KernelField) -> (f64, f64) {
    (k.norm1, k.norm2)
}

pub fn build_structural_kernel(theta: &ThetaPoint, g: &UnivariateKernel, grid: &GridSpec) -> Result<KernelField> {
    let d = grid.dim();
    if theta.dim() != d {
        return Err(Error::InvalidTheta(format!(
            "theta has dimension {}, grid has {d}",
            theta.dim()
        )));
    }
    check_support_box(theta, grid)?;

    let nblocks = theta.partition().len();
    let mut terms: Vec<(Vec<f64>, f64)> = (0..nblocks).map(|i| (theta.term_bandwidths(Some(i)), 1.0)).collect();
    if nblocks > 1 {
        terms.push((theta.term_bandwidths(None), -((nblocks - 1) as f64)));
    }

    let mut values = vec![0.0; grid.len()];
    if theta.is_axis_aligned() {
        for (bw, coef) in &terms {
            let factors: Vec<Vec<f64>> = bw.iter().map(|&b| discrete_factor(g, b, grid)).collect();
            add_separable(&mut values, &factors, *coef, grid);
        }
    } else {
        let e = theta.direction_matrix();
        for (bw, coef) in &terms {
            let term = sample_rotated(g, &e, bw, grid);
            let mass: f64 = term.iter().sum::<f64>() * grid.cell_volume();
            if !(mass > 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "term with bandwidths {bw:?} has no mass on the grid"
                )));
            }
            let scale = coef / mass;
            for (v, t) in values.iter_mut().zip(&term) {
                *v += scale * t;
            }
        }
    }
    finish(theta.clone(), Field::new(*grid, values)?)
}

fn finish(theta: ThetaPoint, values: Field) -> Result<KernelField> {
    let cell = values.grid().cell_volume();
    let (mut s1, mut s2, mut s) = (0.0, 0.0, 0.0);
    for &v in values.values() {
        s += v;
        s1 += v.abs();
        s2 += v * v;
    }
    let radius = values.support_radius();
    Ok(KernelField {
        theta,
        norm1: s1 * cell,
        norm2: (s2 * cell).sqrt(),
        integral: s * cell,
        radius,
        values,
    })
}

/// Rejects kernels whose continuous support box leaves the observation
/// window.
fn check_support_box(theta: &ThetaPoint, grid: &GridSpec) -> Result<()> {
    let e = theta.direction_matrix();
    let inv_t = e
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::InvalidTheta("singular direction matrix".into()))?;
    let d = theta.dim();
    let widest: Vec<f64> = (0..d).map(|j| theta.bandwidths()[j].max(1.0)).collect();
    for a in 0..d {
        let reach: f64 = (0..d).map(|j| inv_t[(a, j)].abs() * widest[j] / 2.0).sum();
        if reach > grid.half_width() {
            return Err(Error::SupportOverflow(format!(
                "kernel support reaches {reach} along axis {} but the grid half width is {}",
                a + 1,
                grid.half_width()
            )));
        }
    }
    Ok(())
}

/// One-dimensional factor over axis offsets `-c..=c` approximating
/// `g(u / b) / b`. The factor is symmetric, sums to one (times the spacing)
/// and has vanishing even discrete moments up to the kernel order. Falls
/// back to plain normalisation of the sampled kernel when too few nodes
/// resolve the moment system.
pub fn discrete_factor(g: &UnivariateKernel, b: f64, grid: &GridSpec) -> Vec<f64> {
    let n = grid.points_per_axis();
    let c = grid.center();
    let dx = grid.spacing();
    let xs: Vec<f64> = (0..n).map(|k| grid.coord(k) / b).collect();
    let window: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let s = x * x;
            if s < 0.25 {
                (1.0 - 4.0 * s).powi(2)
            } else {
                0.0
            }
        })
        .collect();

    let size = g.order() / 2 + 1;
    let support = window.iter().skip(c).take_while(|&&w| w > 0.0).count();
    if size > 1 && support > size {
        let scale = dx / b;
        let a = DMatrix::from_fn(size, size, |m, i| {
            xs.iter()
                .zip(&window)
                .map(|(x, w)| x.powi(2 * (m + i) as i32) * w)
                .sum::<f64>()
                * scale
        });
        let mut rhs = DVector::zeros(size);
        rhs[0] = 1.0;
        if let Some(q) = a.lu().solve(&rhs) {
            let out: Vec<f64> = xs
                .iter()
                .zip(&window)
                .map(|(x, w)| {
                    let s = x * x;
                    q.iter().rev().fold(0.0, |acc, qi| acc * s + qi) * w / b
                })
                .collect();
            if out.iter().all(|v| v.is_finite()) {
                return out;
            }
        }
    }
    let raw: Vec<f64> = xs.iter().map(|&x| g.eval(x) / b).collect();
    let mass: f64 = raw.iter().sum::<f64>() * dx;
    raw.into_iter().map(|v| v / mass).collect()
}

fn add_separable(values: &mut [f64], factors: &[Vec<f64>], coef: f64, grid: &GridSpec) {
    let d = grid.dim();
    let mut idx = vec![0usize; d];
    for (j, v) in values.iter_mut().enumerate() {
        grid.unravel(j, &mut idx);
        let mut p = coef;
        for (f, &k) in factors.iter().zip(&idx) {
            p *= f[k];
            if p == 0.0 {
                break;
            }
        }
        *v += p;
    }
}

fn sample_rotated(g: &UnivariateKernel, e: &DMatrix<f64>, bw: &[f64], grid: &GridSpec) -> Vec<f64> {
    let d = grid.dim();
    let mut idx = vec![0usize; d];
    let mut t = vec![0.0; d];
    (0..grid.len())
        .map(|j| {
            grid.unravel(j, &mut idx);
            for (ta, &k) in t.iter_mut().zip(&idx) {
                *ta = grid.coord(k);
            }
            let mut p = 1.0;
            for (col, &b) in bw.iter().enumerate() {
                let u: f64 = (0..d).map(|a| e[(a, col)] * t[a]).sum();
                p *= g.eval(u / b) / b;
                if p == 0.0 {
                    break;
                }
            }
            p
        })
        .collect()
}

/// `(2|I| - 1) ||g||_1^d`.
pub fn norm1_bound(theta: &ThetaPoint, g: &UnivariateKernel) -> f64 {
    let blocks = theta.partition().len() as f64;
    (2.0 * blocks - 1.0) * g.norm1().powi(theta.dim() as i32)
}

/// `|det E|^(1/2) ||g||_2^d (sum_i prod_{j in I_i} h_j^(-1/2) + |I| - 1)`.
pub fn norm2_bound(theta: &ThetaPoint, g: &UnivariateKernel) -> f64 {
    let h = theta.bandwidths();
    let blocks = theta.partition().blocks();
    let sum: f64 = blocks
        .iter()
        .map(|b| b.iter().map(|&j| h[j].powf(-0.5)).product::<f64>())
        .sum();
    theta.abs_det().sqrt() * g.norm2().powi(theta.dim() as i32) * (sum + blocks.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollectionConstants {
    /// `M(K)`: largest kernel `L_1` norm.
    pub m_of_k: f64,
    /// `sigma(K)`: largest kernel `L_2` norm.
    pub sigma_of_k: f64,
    pub count: usize,
}

pub fn collection_constants(kernels: &[KernelField]) -> Result<CollectionConstants> {
    if kernels.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(CollectionConstants {
        m_of_k: kernels.iter().map(|k| k.norm1).fold(f64::MIN, f64::max),
        sigma_of_k: kernels.iter().map(|k| k.norm2).fold(f64::MIN, f64::max),
        count: kernels.len(),
    })
}

/// Builds the kernels of `thetas` in parallel.
pub fn build_all(thetas: &[ThetaPoint], g: &UnivariateKernel, grid: &GridSpec) -> Result<Vec<KernelField>> {
    thetas.par_iter().map(|t| build_structural_kernel(t, g, grid)).collect()
}

/// Audit table: `theta_id, partition, angles, h1..hd, norm1, norm2, integral`.
pub fn write_catalog<W: Write>(kernels: &[KernelField], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let d = kernels.first().map(|k| k.theta.dim()).unwrap_or(0);
    let mut header = vec!["theta_id".to_string(), "partition".into(), "angles".into()];
    header.extend((1..=d).map(|j| format!("h{j}")));
    header.extend(["norm1".into(), "norm2".into(), "integral".into()]);
    out.write_record(&header)?;
    for (id, k) in kernels.iter().enumerate() {
        let angles: Vec<String> = k.theta.angles().iter().map(|a| fmt_num(*a)).collect();
        let mut rec = vec![id.to_string(), k.theta.partition().label(), angles.join(";")];
        rec.extend(k.theta.bandwidths().iter().map(|h| fmt_num(*h)));
        rec.extend([fmt_num(k.norm1), fmt_num(k.norm2), fmt_num(k.integral)]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Region;
    use crate::kernel::theta::Partition;
    use crate::smoothing::apply_kernel;

    fn g0() -> UnivariateKernel {
        UnivariateKernel::build(0).unwrap()
    }

    #[test]
    fn single_block_identity_is_a_product_kernel() {
        let grid = GridSpec::with_margin(2, 81).unwrap();
        let theta = ThetaPoint::axis_aligned(Partition::single(2), vec![0.3, 0.5]).unwrap();
        let k = build_structural_kernel(&theta, &g0(), &grid).unwrap();
        let f0 = discrete_factor(&g0(), 0.3, &grid);
        let f1 = discrete_factor(&g0(), 0.5, &grid);
        let mut idx = [0usize; 2];
        for (j, v) in k.values().values().iter().enumerate() {
            grid.unravel(j, &mut idx);
            assert_eq!(*v, f0[idx[0]] * f1[idx[1]]);
        }
        // order zero factors are the normalised samples of g0
        let raw: Vec<f64> = (0..grid.points_per_axis())
            .map(|i| g0().eval(grid.coord(i) / 0.3) / 0.3)
            .collect();
        let mass: f64 = raw.iter().sum::<f64>() * grid.spacing();
        for (a, b) in f0.iter().zip(&raw) {
            assert!((a - b / mass).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_identity_kernel_combines_three_terms() {
        let grid = GridSpec::with_margin(2, 81).unwrap();
        let h = vec![0.2, 0.4];
        let theta = ThetaPoint::axis_aligned(Partition::singletons(2), h.clone()).unwrap();
        let k = build_structural_kernel(&theta, &g0(), &grid).unwrap();
        let fa = discrete_factor(&g0(), 0.2, &grid);
        let fb = discrete_factor(&g0(), 0.4, &grid);
        let f1 = discrete_factor(&g0(), 1.0, &grid);
        let mut idx = [0usize; 2];
        for (j, v) in k.values().values().iter().enumerate() {
            grid.unravel(j, &mut idx);
            let (x, y) = (idx[0], idx[1]);
            let expect = fa[x] * f1[y] + f1[x] * fb[y] - f1[x] * f1[y];
            assert!((v - expect).abs() < 1e-12);
        }
        assert!((k.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norms_of_g0_alone() {
        let grid = GridSpec::with_margin(1, 1001).unwrap();
        let theta = ThetaPoint::axis_aligned(Partition::single(1), vec![1.0]).unwrap();
        let k = build_structural_kernel(&theta, &g0(), &grid).unwrap();
        assert!((k.norm1() - 1.0).abs() < 1e-12);
        assert!((k.norm2() - (10.0f64 / 7.0).sqrt()).abs() < 1e-4);
        let theta = ThetaPoint::axis_aligned(Partition::single(1), vec![0.25]).unwrap();
        let k = build_structural_kernel(&theta, &g0(), &grid).unwrap();
        assert!((k.norm2() - 2.0 * (10.0f64 / 7.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn unit_integral_for_rotated_kernels() {
        let grid = GridSpec::with_margin(2, 81).unwrap();
        for part in [Partition::single(2), Partition::singletons(2)] {
            for phi in [0.2, 0.785, 1.3] {
                let theta = ThetaPoint::rotated(part.clone(), vec![phi], vec![0.3, 0.6]).unwrap();
                let k = build_structural_kernel(&theta, &g0(), &grid).unwrap();
                assert!((k.integral() - 1.0).abs() < 1e-12);
                // exact point symmetry
                let v = k.values().values();
                let n = v.len();
                for j in 0..n {
                    assert_eq!(v[j], v[n - 1 - j]);
                }
            }
        }
    }

    #[test]
    fn moment_matched_kernels_reproduce_polynomials() {
        let grid = GridSpec::with_margin(2, 121).unwrap();
        let g2 = UnivariateKernel::build(2).unwrap();
        let theta = ThetaPoint::axis_aligned(Partition::singletons(2), vec![0.4, 0.5]).unwrap();
        let k = build_structural_kernel(&theta, &g2, &grid).unwrap();
        let poly = Field::sample(grid, |x| {
            1.0 + x[0] - 2.0 * x[1] + x[0] * x[1] + 3.0 * x[0] * x[0] - x[1] * x[1]
        })
        .unwrap();
        let out = apply_kernel(k.values(), &poly, Region::Inner).unwrap();
        for (v, j) in out.values().iter().zip(out.indices()) {
            assert!((v - poly.values()[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn support_outside_the_window_is_rejected() {
        let grid = GridSpec::with_margin(2, 41).unwrap();
        let a = 0.1f64.asin();
        let skew = vec![1.0, 0.0, a.cos(), a.sin()];
        let theta = ThetaPoint::with_directions(Partition::single(2), skew, vec![1.0, 1.0], 1e-3).unwrap();
        // E^{-T} stretches the unit box beyond the window
        let err = build_structural_kernel(&theta, &g0(), &grid);
        assert!(matches!(err, Err(Error::SupportOverflow(_))), "{err:?}");
    }

    #[test]
    fn norm_bounds_on_a_fine_grid() {
        let grid = GridSpec::with_margin(2, 201).unwrap();
        for order in [0usize, 2] {
            let g = UnivariateKernel::build(order).unwrap();
            for part in [Partition::single(2), Partition::singletons(2)] {
                for phi in [0.0, 0.6] {
                    let theta = ThetaPoint::rotated(part.clone(), vec![phi], vec![0.5, 0.8]).unwrap();
                    let k = build_structural_kernel(&theta, &g, &grid).unwrap();
                    assert!(k.norm1() <= norm1_bound(&theta, &g) * 1.01);
                    assert!(k.norm2() <= norm2_bound(&theta, &g) * 1.01);
                }
            }
        }
    }

    #[test]
    fn collection_constants_of_positive_kernels() {
        let grid = GridSpec::with_margin(2, 81).unwrap();
        let thetas: Vec<ThetaPoint> = [0.2, 0.4, 0.8]
            .iter()
            .map(|&h| ThetaPoint::axis_aligned(Partition::single(2), vec![h, h]).unwrap())
            .collect();
        let ks = build_all(&thetas, &g0(), &grid).unwrap();
        let cc = collection_constants(&ks).unwrap();
        assert!((cc.m_of_k - 1.0).abs() < 1e-12);
        assert_eq!(cc.sigma_of_k, ks[0].norm2());
        assert_eq!(cc.count, 3);
        assert!(collection_constants(&[]).is_err());

        let mut buf = Vec::new();
        write_catalog(&ks, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta_id,partition,angles,h1,h2,norm1,norm2,integral\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
