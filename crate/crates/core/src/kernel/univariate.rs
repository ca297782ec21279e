//! Windowed polynomial kernels `g(x) = P(x) (1 - 4x^2)^2` on `[-1/2, 1/2]`.
//!
//! `P` is even and of minimal degree such that `g` integrates to one and its
//! moments of order `1..=order` vanish. The window has a double zero at both
//! ends, so `g` and `g'` vanish there.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateKernel {
    order: usize,
    /// Coefficients of `P` in `x^2`: `P(x) = sum_i c[i] x^(2i)`.
    coefficients: Vec<f64>,
}

impl UnivariateKernel {
    pub fn build(order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::InvalidKernel(format!(
                "order {order} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        let exact = solve_moment_system(order / 2 + 1);
        let coefficients = exact.iter().map(|c| c.to_f64().expect("finite rational")).collect();
        Ok(Self { order, coefficients })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Value at `x`; zero outside `(-1/2, 1/2)`. Depends on `x` only through
    /// `x^2`, so `eval(-x) == eval(x)` bit for bit.
    pub fn eval(&self, x: f64) -> f64 {
        let s = x * x;
        if s >= 0.25 {
            return 0.0;
        }
        let w = 1.0 - 4.0 * s;
        self.poly(s) * w * w
    }

    /// `P` as a function of `s = x^2`.
    fn poly(&self, s: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    fn poly_ds(&self, s: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * s + i as f64 * c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let s = x * x;
        if s >= 0.25 {
            return 0.0;
        }
        let w = 1.0 - 4.0 * s;
        // d/dx [P(s) w^2] with s = x^2, w = 1 - 4s
        2.0 * x * (self.poly_ds(s) * w * w - 8.0 * self.poly(s) * w)
    }

    /// `int x^k g(x) dx` by Gauss-Legendre, exact for polynomial integrands
    /// of the degrees used here.
    pub fn moment(&self, k: usize) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        integrate(|x| x.powi(k as i32) * self.eval(x), -0.5, 0.5, 64)
    }

    /// `||g||_1`, integrated piecewise between the sign changes of `g`.
    pub fn norm1(&self) -> f64 {
        let mut cuts = vec![-0.5];
        let mut roots = self.interior_roots();
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.extend(roots);
        cuts.push(0.5);
        cuts.windows(2)
            .map(|w| integrate(|x| self.eval(x), w[0], w[1], 64).abs())
            .sum()
    }

    /// `||g||_2`.
    pub fn norm2(&self) -> f64 {
        integrate(|x| self.eval(x).powi(2), -0.5, 0.5, 64).sqrt()
    }

    /// Roots of `P` inside `(-1/2, 1/2)`, located by bracketing in `x^2`
    /// and bisection.
    fn interior_roots(&self) -> Vec<f64> {
        let steps = 4096;
        let mut out = Vec::new();
        let mut prev_s = 0.0;
        let mut prev = self.poly(0.0);
        for i in 1..=steps {
            let s = 0.25 * i as f64 / steps as f64;
            let v = self.poly(s);
            if prev == 0.0 {
                out.push(prev_s);
            } else if prev.signum() != v.signum() && v != 0.0 {
                let (mut a, mut b) = (prev_s, s);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if self.poly(m).signum() == prev.signum() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                out.push(0.5 * (a + b));
            }
            prev_s = s;
            prev = v;
        }
        out.into_iter()
            .filter(|&s| s > 0.0 && s < 0.25)
            .flat_map(|s| [-s.sqrt(), s.sqrt()])
            .collect()
    }
}

/// `int_{-1/2}^{1/2} x^(2k) (1 - 4x^2)^2 dx` as an exact rational.
fn window_moment(k: usize) -> BigRational {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let pow = |e: usize| -> BigRational { num_traits::pow(half.clone(), e) };
    let frac = |e: usize| BigRational::from_integer(BigInt::from(e as u64));
    let two = BigRational::from_integer(BigInt::from(2));
    let a = pow(2 * k + 1) / frac(2 * k + 1);
    let b = BigRational::from_integer(BigInt::from(8)) * pow(2 * k + 3) / frac(2 * k + 3);
    let c = BigRational::from_integer(BigInt::from(16)) * pow(2 * k + 5) / frac(2 * k + 5);
    two * (a - b + c)
}

/// Solves `sum_i c_i W(i + m) = [m == 0]` for `m = 0..size` exactly.
fn solve_moment_system(size: usize) -> Vec<BigRational> {
    let mut a: Vec<Vec<BigRational>> = (0..size)
        .map(|m| {
            let mut row: Vec<BigRational> = (0..size).map(|i| window_moment(i + m)).collect();
            row.push(if m == 0 {
                BigRational::one()
            } else {
                BigRational::zero()
            });
            row
        })
        .collect();
    for col in 0..size {
        let pivot = (col..size)
            .find(|&r| !a[r][col].is_zero())
            .expect("moment system of a positive window is nonsingular");
        a.swap(col, pivot);
        let p = a[col][col].clone();
        for v in a[col].iter_mut() {
            *v = &*v / &p;
        }
        for r in 0..size {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                let pivot_row = a[col].clone();
                for (v, pv) in a[r].iter_mut().zip(&pivot_row) {
                    *v = &*v - &f * pv;
                }
            }
        }
    }
    a.into_iter().map(|row| row[size].clone()).collect()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss-Legendre quadrature of `f` over `[a, b]` with `n` nodes.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}
