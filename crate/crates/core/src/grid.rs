//! Regular grids over the observation window `[-W, W]^d`, scalar fields on
//! them, and discrete `L_p` norms.
//!
//! Nodes along every axis sit at `(k - c) * spacing` for `k = 0..n`, where
//! `c = (n - 1) / 2` is the index of the origin. This equals `-W + k * spacing`
//! and keeps the node set exactly symmetric about zero.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half width of the estimation window `[-1/2, 1/2]^d`.
pub const INNER_HALF_WIDTH: f64 = 0.5;

/// Smallest admissible observation half width for dimension `dim`.
pub fn margin_half_width(dim: usize) -> f64 {
    INNER_HALF_WIDTH + (dim as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    half_width: f64,
    spacing: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points_per_axis: usize, half_width: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if points_per_axis < 9 {
            return Err(Error::InvalidGrid(format!(
                "need at least 9 points per axis, got {points_per_axis}"
            )));
        }
        if points_per_axis % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be odd so the origin is a node, got {points_per_axis}"
            )));
        }
        let margin = margin_half_width(dim);
        if !(half_width.is_finite() && half_width >= margin * (1.0 - 1e-12)) {
            return Err(Error::InvalidGrid(format!(
                "half width {half_width} is below the kernel margin 1/2 + sqrt({dim}) = {margin}"
            )));
        }
        let spacing = 2.0 * half_width / (points_per_axis - 1) as f64;
        Ok(Self {
            dim,
            n: points_per_axis,
            half_width,
            spacing,
        })
    }

    /// Grid with the minimal margin `W = 1/2 + sqrt(dim)`.
    pub fn with_margin(dim: usize, points_per_axis: usize) -> Result<Self> {
        Self::new(dim, points_per_axis, margin_half_width(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Total number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the origin along each axis.
    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Coordinate of axis index `k`.
    pub fn coord(&self, k: usize) -> f64 {
        (k as f64 - self.center() as f64) * self.spacing
    }

    /// Per-axis indices of flat node `j` (row-major, last axis fastest).
    pub fn unravel(&self, mut j: usize, out: &mut [usize]) {
        for a in (0..self.dim).rev() {
            out[a] = j % self.n;
            j /= self.n;
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * self.n + k)
    }

    pub fn node(&self, j: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim];
        self.unravel(j, &mut idx);
        idx.iter().map(|&k| self.coord(k)).collect()
    }

    /// Number of nodes `m` such that the inner region spans axis offsets
    /// `-m..=m`: every node whose cell `[x - spacing/2, x + spacing/2]`
    /// meets the open window `(-1/2, 1/2)`.
    pub fn inner_radius(&self) -> usize {
        let mut m = (INNER_HALF_WIDTH / self.spacing + 0.5).floor() as usize;
        while m > 0 && (m as f64 - 0.5) * self.spacing >= INNER_HALF_WIDTH {
            m -= 1;
        }
        while (m as f64 + 0.5) * self.spacing < INNER_HALF_WIDTH {
            m += 1;
        }
        m
    }

    /// Fraction of the outermost inner cell that lies inside the window.
    pub fn inner_edge_weight(&self) -> f64 {
        let m = self.inner_radius() as f64;
        ((INNER_HALF_WIDTH - (m - 0.5) * self.spacing) / self.spacing).clamp(0.0, 1.0)
    }

    /// Quadrature weights of the nodes of `region`, row-major over the
    /// region cube. Inner nodes carry the overlap fraction of their cell
    /// with `[-1/2, 1/2]^d`; every other region uses unit weights.
    pub fn region_weights(&self, region: Region) -> Vec<f64> {
        let count = self.axis_count(region);
        let mut axis = vec![1.0; count];
        if region == Region::Inner && count > 1 {
            let w = self.inner_edge_weight();
            axis[0] = w;
            axis[count - 1] = w;
        }
        let total = count.pow(self.dim as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            for _ in 0..self.dim {
                w *= axis[rem % count];
                rem /= count;
            }
            out.push(w);
        }
        out
    }

    /// Inclusive axis index range of `region`.
    pub fn axis_range(&self, region: Region) -> (usize, usize) {
        let c = self.center();
        let r = match region {
            Region::Inner => self.inner_radius(),
            Region::Padded(extra) => (self.inner_radius() + extra).min(c),
            Region::Full => c,
        };
        (c - r, c + r)
    }

    /// Number of nodes per axis in `region`.
    pub fn axis_count(&self, region: Region) -> usize {
        let (lo, hi) = self.axis_range(region);
        hi - lo + 1
    }

    /// Flat indices of all nodes in `region`, in row-major order.
    pub fn region_indices(&self, region: Region) -> Vec<usize> {
        let (lo, hi) = self.axis_range(region);
        let m = hi - lo + 1;
        let total = m.pow(self.dim as u32);
        let mut idx = vec![0usize; self.dim];
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            for a in (0..self.dim).rev() {
                idx[a] = lo + rem % m;
                rem /= m;
            }
            out.push(self.ravel(&idx));
        }
        out
    }
}

/// Axis-aligned cube of nodes centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Nodes whose cells meet `[-1/2, 1/2]^d`.
    Inner,
    /// The inner cube grown by the given number of nodes per side.
    Padded(usize),
    /// Every node of the grid.
    Full,
}

/// Scalar field sampled on every node of a grid (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((j, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                node: j,
                coords: grid.node(j),
                value: v,
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f` at every node.
    pub fn sample<F>(grid: GridSpec, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut idx = vec![0usize; grid.dim()];
        let mut x = vec![0.0; grid.dim()];
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.len() {
            grid.unravel(j, &mut idx);
            for (xa, &k) in x.iter_mut().zip(&idx) {
                *xa = grid.coord(k);
            }
            let v = f(&x);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    node: j,
                    coords: x,
                    value: v,
                });
            }
            values.push(v);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values of the nodes in `region`, row-major over the region cube.
    pub fn restrict(&self, region: Region) -> Vec<f64> {
        self.grid
            .region_indices(region)
            .into_iter()
            .map(|j| self.values[j])
            .collect()
    }

    /// Discrete `L_p` norm over `region`; inner-region sums use the cell
    /// overlap weights of [`GridSpec::region_weights`].
    pub fn lp_norm(&self, p: f64, region: Region) -> f64 {
        let vals = self.restrict(region);
        if region == Region::Inner {
            weighted_lp_norm(&vals, &self.grid.region_weights(region), p, self.grid.cell_volume())
        } else {
            lp_norm_slice(&vals, p, self.grid.cell_volume())
        }
    }

    /// Largest axis offset (in nodes) from the origin of any nonzero entry.
    pub fn support_radius(&self) -> usize {
        let c = self.grid.center();
        let mut idx = vec![0usize; self.grid.dim()];
        let mut r = 0;
        for (j, &v) in self.values.iter().enumerate() {
            if v != 0.0 {
                self.grid.unravel(j, &mut idx);
                for &k in &idx {
                    r = r.max(k.abs_diff(c));
                }
            }
        }
        r
    }

    /// Riemann sum of the values over the whole grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Writes the flat binary layout: `dim: u64`, `n: u64`, `W: f64`, then
    /// `n^d` values as `f64`, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.dim as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&self.grid.half_width.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let dim = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let w = f64::from_le_bytes(b8);
        let grid = GridSpec::new(dim, n, w)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Self::new(grid, values)
    }

    /// CSV with columns `x1..xd,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.grid.dim).map(|a| format!("x{a}")).collect();
        header.push("value".into());
        out.write_record(&header)?;
        for (j, v) in self.values.iter().enumerate() {
            let mut rec: Vec<String> = self.grid.node(j).iter().map(|x| fmt_num(*x)).collect();
            rec.push(fmt_num(*v));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Values on the nodes of one region, row-major over the region cube.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionField {
    grid: GridSpec,
    region: Region,
    values: Vec<f64>,
}

impl RegionField {
    pub fn new(grid: GridSpec, region: Region, values: Vec<f64>) -> Result<Self> {
        let expected = grid.axis_count(region).pow(grid.dim() as u32);
        if values.len() != expected {
            return Err(Error::InvalidGrid(format!(
                "region holds {expected} nodes, got {} values",
                values.len()
            )));
        }
        Ok(Self { grid, region, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Flat full-grid indices matching [`RegionField::values`].
    pub fn indices(&self) -> Vec<usize> {
        self.grid.region_indices(self.region)
    }

    /// Same norm convention as [`Field::lp_norm`].
    pub fn lp_norm(&self, p: f64) -> f64 {
        if self.region == Region::Inner {
            weighted_lp_norm(
                &self.values,
                &self.grid.region_weights(self.region),
                p,
                self.grid.cell_volume(),
            )
        } else {
            lp_norm_slice(&self.values, p, self.grid.cell_volume())
        }
    }

    /// Restriction to a smaller region.
    pub fn restrict(&self, region: Region) -> Result<RegionField> {
        let (lo, hi) = self.grid.axis_range(self.region);
        let (rlo, rhi) = self.grid.axis_range(region);
        if rlo < lo || rhi > hi {
            return Err(Error::InvalidArgument(format!(
                "{region:?} is not contained in {:?}",
                self.region
            )));
        }
        let m = hi - lo + 1;
        let k = rhi - rlo + 1;
        let d = self.grid.dim();
        let mut out = Vec::with_capacity(k.pow(d as u32));
        for flat in 0..k.pow(d as u32) {
            let mut rem = flat;
            let mut src = 0;
            let mut stride = 1;
            for _ in 0..d {
                src += (rlo - lo + rem % k) * stride;
                rem /= k;
                stride *= m;
            }
            out.push(self.values[src]);
        }
        RegionField::new(self.grid, region, out)
    }
}

/// Fixed numeric formatting for tabular output: 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.11e}")
}

/// Discrete `L_p` norm `(sum |v|^p * cell)^(1/p)`, or `max |v|` for `p = inf`.
pub fn lp_norm_slice(values: &[f64], p: f64, cell_volume: f64) -> f64 {
    assert!(p >= 1.0, "L_p norm needs p >= 1, got {p}");
    if p.is_infinite() {
        values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else if p == 1.0 {
        values.iter().map(|v| v.abs()).sum::<f64>() * cell_volume
    } else if p == 2.0 {
        (values.iter().map(|v| v * v).sum::<f64>() * cell_volume).sqrt()
    } else {
        (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cell_volume).powf(1.0 / p)
    }
}

/// `(sum w |v|^p * cell)^(1/p)`, or `max |v|` over nodes with `w > 0`.
pub fn weighted_lp_norm(values: &[f64], weights: &[f64], p: f64, cell_volume: f64) -> f64 {
    assert!(p >= 1.0, "L_p norm needs p >= 1, got {p}");
    debug_assert_eq!(values.len(), weights.len());
    let it = values.iter().zip(weights);
    if p.is_infinite() {
        it.filter(|(_, &w)| w > 0.0).fold(0.0f64, |m, (v, _)| m.max(v.abs()))
    } else if p == 1.0 {
        it.map(|(v, w)| w * v.abs()).sum::<f64>() * cell_volume
    } else if p == 2.0 {
        (it.map(|(v, w)| w * v * v).sum::<f64>() * cell_volume).sqrt()
    } else {
        (it.map(|(v, w)| w * v.abs().powf(p)).sum::<f64>() * cell_volume).powf(1.0 / p)
    }
}

/// Free-function form of [`Field::sample`].
pub fn sample_function<F>(f: F, grid: GridSpec) -> Result<Field>
where
    F: Fn(&[f64]) -> f64,
{
    Field::sample(grid, f)
}

/// Free-function form of [`Field::lp_norm`].
pub fn lp_norm(field: &Field, p: f64, region: Region) -> f64 {
    field.lp_norm(p, region)
}
