//! Structural parameters `theta = (I, E, h)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound on `|det E|`.
pub const DEFAULT_ETA: f64 = 1e-3;

/// A set partition of the axes `0..dim` into non-empty blocks, stored in
/// canonical order (each block sorted, blocks sorted by first element).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    dim: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(dim: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for b in blocks.iter_mut() {
            if b.is_empty() {
                return Err(Error::InvalidTheta("empty partition block".into()));
            }
            b.sort_unstable();
            for &j in b.iter() {
                if j >= dim || seen[j] {
                    return Err(Error::InvalidTheta(format!(
                        "blocks {blocks:?} do not partition 0..{dim}",
                        blocks = b
                    )));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidTheta(format!(
                "blocks do not cover every axis of 0..{dim}"
            )));
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { dim, blocks })
    }

    /// One block holding every axis.
    pub fn single(dim: usize) -> Self {
        Self {
            dim,
            blocks: vec![(0..dim).collect()],
        }
    }

    /// Every axis in its own block.
    pub fn singletons(dim: usize) -> Self {
        Self {
            dim,
            blocks: (0..dim).map(|j| vec![j]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_of(&self, axis: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.contains(&axis))
            .expect("partition covers every axis")
    }

    /// One-based label such as `{1,2}|{3}`.
    pub fn label(&self) -> String {
        self.blocks
            .iter()
            .map(|b| {
                let inner: Vec<String> = b.iter().map(|j| (j + 1).to_string()).collect();
                format!("{{{}}}", inner.join(","))
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// All set partitions of `0..dim`, in lexicographic order of their
/// restricted growth strings.
pub fn enumerate_partitions(dim: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    if dim == 0 {
        return out;
    }
    let mut rgs = vec![0usize; dim];
    loop {
        let nblocks = rgs.iter().max().unwrap() + 1;
        let mut blocks = vec![Vec::new(); nblocks];
        for (j, &b) in rgs.iter().enumerate() {
            blocks[b].push(j);
        }
        out.push(Partition { dim, blocks });
        // next restricted growth string
        let mut i = dim - 1;
        loop {
            if i == 0 {
                return out;
            }
            let max_prefix = rgs[..i].iter().max().copied().unwrap();
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                for v in rgs[i + 1..].iter_mut() {
                    *v = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Coordinate planes `(a, b)`, `a < b`, in lexicographic order.
pub fn rotation_planes(dim: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..dim {
        for b in a + 1..dim {
            out.push((a, b));
        }
    }
    out
}

/// Product of Givens rotations, one angle per plane of [`rotation_planes`],
/// applied left to right.
pub fn givens_rotation(dim: usize, angles: &[f64]) -> Result<DMatrix<f64>> {
    let planes = rotation_planes(dim);
    if angles.len() != planes.len() {
        return Err(Error::InvalidTheta(format!(
            "dimension {dim} needs {} rotation angles, got {}",
            planes.len(),
            angles.len()
        )));
    }
    let mut e = DMatrix::<f64>::identity(dim, dim);
    for (&(a, b), &phi) in planes.iter().zip(angles) {
        let mut gmat = DMatrix::<f64>::identity(dim, dim);
        let (s, c) = phi.sin_cos();
        gmat[(a, a)] = c;
        gmat[(b, b)] = c;
        gmat[(b, a)] = s;
        gmat[(a, b)] = -s;
        e = &e * &gmat;
    }
    Ok(e)
}

/// `theta = (I, E, h)`: partition, direction matrix with unit columns, and
/// one bandwidth per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    partition: Partition,
    /// Column-major `d x d`; column `j` is direction `e_j`.
    directions: Vec<f64>,
    /// Givens angles when `E` is a rotation, empty otherwise.
    angles: Vec<f64>,
    h: Vec<f64>,
}

impl ThetaPoint {
    /// `E` built from Givens angles.
    pub fn rotated(partition: Partition, angles: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        let d = partition.dim();
        let e = givens_rotation(d, &angles)?;
        let theta = Self {
            partition,
            directions: e.as_slice().to_vec(),
            angles,
            h,
        };
        theta.validate(DEFAULT_ETA)?;
        Ok(theta)
    }

    /// Arbitrary direction matrix, given column-major.
    pub fn with_directions(partition: Partition, directions: Vec<f64>, h: Vec<f64>, eta: f64) -> Result<Self> {
        let theta = Self {
            partition,
            directions,
            angles: Vec::new(),
            h,
        };
        theta.validate(eta)?;
        Ok(theta)
    }

    /// Identity directions.
    pub fn axis_aligned(partition: Partition, h: Vec<f64>) -> Result<Self> {
        let d = partition.dim();
        Self::rotated(partition, vec![0.0; rotation_planes(d).len()], h)
    }

    /// Checks the structural invariants: matching sizes, unit columns to
    /// `1e-12`, `|det E| >= eta` and positive finite bandwidths.
    pub fn validate(&self, eta: f64) -> Result<()> {
        let d = self.partition.dim();
        if self.directions.len() != d * d || self.h.len() != d {
            return Err(Error::InvalidTheta(format!(
                "dimension {d} needs a {d}x{d} direction matrix and {d} bandwidths"
            )));
        }
        let e = self.direction_matrix();
        for j in 0..d {
            let norm = e.column(j).norm();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidTheta(format!("direction {} has norm {norm}", j + 1)));
            }
        }
        let det = e.determinant().abs();
        if det < eta {
            return Err(Error::InvalidTheta(format!("|det E| = {det} is below eta = {eta}")));
        }
        if let Some(&bad) = self.h.iter().find(|&&h| !(h.is_finite() && h > 0.0)) {
            return Err(Error::InvalidTheta(format!("bandwidth {bad} is not positive")));
        }
        Ok(())
    }

    /// Fails unless every bandwidth lies in `[h_min, h_max]`.
    pub fn check_window(&self, h_min: f64, h_max: f64) -> Result<()> {
        let tol = 1e-12 * h_max;
        if let Some(&bad) = self.h.iter().find(|&&h| h < h_min - tol || h > h_max + tol) {
            return Err(Error::InvalidTheta(format!(
                "bandwidth {bad} is outside [{h_min}, {h_max}]"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn direction_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_column_slice(d, d, &self.directions)
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.h
    }

    pub fn abs_det(&self) -> f64 {
        self.direction_matrix().determinant().abs()
    }

    pub fn is_axis_aligned(&self) -> bool {
        let d = self.dim();
        (0..d).all(|a| (0..d).all(|b| self.directions[a + b * d] == if a == b { 1.0 } else { 0.0 }))
    }

    /// Bandwidth vector of the term for block `block`: `h_j` on the block,
    /// one elsewhere. `None` gives the all-ones vector of `G_0`.
    pub fn term_bandwidths(&self, block: Option<usize>) -> Vec<f64> {
        let mut b = vec![1.0; self.dim()];
        if let Some(i) = block {
            for &j in &self.partition.blocks()[i] {
                b[j] = self.h[j];
            }
        }
        b
    }
}
