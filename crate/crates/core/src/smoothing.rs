//! Discrete kernel smoothing `out(x) = sum_j K(t_j - x) v(t_j) * cell`.
//!
//! Kernels are fields centred at the origin node. The FFT path and the
//! direct path compute the same finite sum.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{FftEngine, FftScratch};
use crate::grid::{Field, GridSpec, Region, RegionField};

/// Fails unless a kernel of node radius `radius`, read around every node of
/// `region`, stays inside the grid.
pub fn check_support(grid: &GridSpec, radius: usize, region: Region) -> Result<()> {
    let (lo, _) = grid.axis_range(region);
    let reach = grid.center() - lo;
    if reach + radius > grid.center() {
        return Err(Error::SupportOverflow(format!(
            "kernel radius {radius} nodes around {region:?} (reach {reach}) exceeds the grid \
             half-size {} nodes",
            grid.center()
        )));
    }
    Ok(())
}

fn same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!(
            "fields live on different grids: {a:?} vs {b:?}"
        )));
    }
    Ok(())
}

/// FFT evaluation of the smoother on `region`.
pub fn apply_kernel(kernel: &Field, input: &Field, region: Region) -> Result<RegionField> {
    let grid = *kernel.grid();
    same_grid(&grid, input.grid())?;
    check_support(&grid, kernel.support_radius(), region)?;
    let engine = FftEngine::new(grid);
    let mut ws = FftScratch::default();
    let kh = engine.forward_centered(kernel.values(), &mut ws);
    let mut spec = engine.forward_real(input.values(), &mut ws);
    let cell = grid.cell_volume();
    // correlation with K: multiply by the conjugate kernel spectrum
    for (s, k) in spec.iter_mut().zip(&kh) {
        *s *= k.conj() * cell;
    }
    let mut out = Vec::new();
    engine.inverse_region(&spec, region, &mut ws, &mut out);
    RegionField::new(grid, region, out.into_iter().map(|c| c.re).collect())
}

/// Direct summation; the reference for [`apply_kernel`].
pub fn apply_kernel_direct(kernel: &Field, input: &Field, region: Region) -> Result<RegionField> {
    let grid = *kernel.grid();
    same_grid(&grid, input.grid())?;
    let r = kernel.support_radius();
    check_support(&grid, r, region)?;
    let d = grid.dim();
    let c = grid.center() as isize;
    let cell = grid.cell_volume();
    let taps: Vec<(Vec<isize>, f64)> = (0..grid.len())
        .filter_map(|j| {
            let v = kernel.values()[j];
            (v != 0.0).then(|| {
                let mut idx = vec![0usize; d];
                grid.unravel(j, &mut idx);
                (idx.iter().map(|&k| k as isize - c).collect(), v)
            })
        })
        .collect();
    let mut idx = vec![0usize; d];
    let mut shifted = vec![0usize; d];
    let values = grid
        .region_indices(region)
        .into_iter()
        .map(|x| {
            grid.unravel(x, &mut idx);
            let mut acc = 0.0;
            for (off, w) in &taps {
                for a in 0..d {
                    shifted[a] = (idx[a] as isize + off[a]) as usize;
                }
                acc += w * input.values()[grid.ravel(&shifted)];
            }
            acc * cell
        })
        .collect();
    RegionField::new(grid, region, values)
}

/// `(K_a * K_b)(u) = sum_v K_a(v) K_b(u - v) * cell`, centred like its inputs.
pub fn convolve_kernels(a: &Field, b: &Field) -> Result<Field> {
    let grid = *a.grid();
    same_grid(&grid, b.grid())?;
    check_pair_support(&grid, a.support_radius() + b.support_radius())?;
    let engine = FftEngine::new(grid);
    let mut ws = FftScratch::default();
    let fa = engine.forward_centered(a.values(), &mut ws);
    let fb = engine.forward_centered(b.values(), &mut ws);
    let cell = grid.cell_volume();
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y * cell).collect();
    let out = engine.inverse_real(&prod, &mut ws);
    Field::new(grid, engine.fftshift(&out))
}

/// Direct double sum; the reference for [`convolve_kernels`].
pub fn convolve_kernels_direct(a: &Field, b: &Field) -> Result<Field> {
    let grid = *a.grid();
    same_grid(&grid, b.grid())?;
    check_pair_support(&grid, a.support_radius() + b.support_radius())?;
    let d = grid.dim();
    let c = grid.center() as isize;
    let cell = grid.cell_volume();
    let nonzero = |f: &Field| -> Vec<(Vec<isize>, f64)> {
        let mut idx = vec![0usize; d];
        (0..grid.len())
            .filter(|&j| f.values()[j] != 0.0)
            .map(|j| {
                grid.unravel(j, &mut idx);
                (idx.iter().map(|&k| k as isize - c).collect(), f.values()[j])
            })
            .collect()
    };
    let (ta, tb) = (nonzero(a), nonzero(b));
    let mut out = vec![0.0; grid.len()];
    let mut pos = vec![0usize; d];
    for (oa, wa) in &ta {
        for (ob, wb) in &tb {
            for k in 0..d {
                pos[k] = (oa[k] + ob[k] + c) as usize;
            }
            out[grid.ravel(&pos)] += wa * wb * cell;
        }
    }
    Field::new(grid, out)
}

fn check_pair_support(grid: &GridSpec, radius: usize) -> Result<()> {
    if radius > grid.center() {
        return Err(Error::SupportOverflow(format!(
            "combined kernel radius {radius} nodes exceeds the grid half-size {} nodes",
            grid.center()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g0(x: f64) -> f64 {
        if x.abs() < 0.5 {
            15.0 / 8.0 * (1.0 - 4.0 * x * x).powi(2)
        } else {
            0.0
        }
    }

    fn box_kernel(grid: GridSpec, h: f64) -> Field {
        let raw = Field::sample(grid, |u| u.iter().map(|&x| g0(x / h) / h).product()).unwrap();
        let s = raw.integral();
        Field::new(grid, raw.values().iter().map(|v| v / s).collect()).unwrap()
    }

    #[test]
    fn constant_and_linear_inputs_are_reproduced() {
        let g = GridSpec::new(1, 257, 1.5).unwrap();
        let k = box_kernel(g, 0.3);
        let c = Field::sample(g, |_| 2.5).unwrap();
        let out = apply_kernel(&k, &c, Region::Inner).unwrap();
        assert!(out.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
        let lin = Field::sample(g, |x| x[0]).unwrap();
        let out = apply_kernel(&k, &lin, Region::Inner).unwrap();
        for (v, j) in out.values().iter().zip(out.indices()) {
            assert!((v - lin.values()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn second_moment_of_g0_shifts_a_parabola() {
        let g = GridSpec::new(1, 257, 1.5).unwrap();
        let h = 0.25;
        let k = box_kernel(g, h);
        let sq = Field::sample(g, |x| x[0] * x[0]).unwrap();
        let out = apply_kernel(&k, &sq, Region::Inner).unwrap();
        for (v, j) in out.values().iter().zip(out.indices()) {
            let x = g.coord(j);
            assert!((v - (x * x + h * h / 28.0)).abs() < 1e-4, "{v} at {x}");
        }
    }

    #[test]
    fn fft_matches_direct_summation() {
        for (d, n) in [(1usize, 101usize), (2, 41)] {
            let g = GridSpec::with_margin(d, n).unwrap();
            let k = box_kernel(g, 0.4);
            let f = Field::sample(g, |x| x.iter().map(|v| (3.0 * v).sin() + v * v).sum()).unwrap();
            for region in [Region::Inner, Region::Padded(3)] {
                let a = apply_kernel(&k, &f, region).unwrap();
                let b = apply_kernel_direct(&k, &f, region).unwrap();
                let scale = b.lp_norm(f64::INFINITY);
                for (x, y) in a.values().iter().zip(b.values()) {
                    assert!((x - y).abs() <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn support_overflow_is_an_error() {
        let g = GridSpec::with_margin(1, 101).unwrap();
        let wide = Field::sample(g, |x| (-x[0] * x[0]).exp()).unwrap();
        let f = Field::sample(g, |_| 1.0).unwrap();
        assert!(matches!(
            apply_kernel(&wide, &f, Region::Inner),
            Err(Error::SupportOverflow(_))
        ));
        assert!(matches!(convolve_kernels(&wide, &wide), Err(Error::SupportOverflow(_))));
    }

    #[test]
    fn convolution_paths_agree_and_commute() {
        let g = GridSpec::with_margin(2, 41).unwrap();
        let a = box_kernel(g, 0.3);
        let b = box_kernel(g, 0.7);
        let ab = convolve_kernels(&a, &b).unwrap();
        let ba = convolve_kernels(&b, &a).unwrap();
        let direct = convolve_kernels_direct(&a, &b).unwrap();
        let scale = direct.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for ((x, y), z) in ab.values().iter().zip(ba.values()).zip(direct.values()) {
            assert_eq!(x, y);
            assert!((x - z).abs() <= 1e-10 * scale);
        }
        assert!((ab.integral() - 1.0).abs() < 1e-10);
    }
}
