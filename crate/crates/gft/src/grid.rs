//! Structured grids over a chart, with quadrature weights for the
//! measure-weighted inner product.
//!
//! Periodic axes get uniform nodes with no duplicated endpoint; bounded axes
//! get cell-centered (midpoint) nodes `min + (j+1/2)h`, which also realizes
//! the half-spacing offset that keeps coordinate singularities (sphere poles,
//! ball center) off the grid. The per-node weight is `sqrt(det q) * prod h_i`.

use crate::error::{GftError, Result};
use crate::manifold::{BoundaryKind, ManifoldSpec};
use num_complex::Complex64;
use rand::Rng;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct ChartGrid {
    pub spec: ManifoldSpec,
    pub points_per_axis: Vec<usize>,
    /// Per-axis 1-D node coordinates.
    pub axis_nodes: Vec<Vec<f64>>,
    /// Per-axis spacing h_i.
    pub spacing: Vec<f64>,
    /// Flattened (row-major) node coordinates: node i occupies
    /// `nodes[i*dim .. (i+1)*dim]`.
    pub nodes: Vec<f64>,
    /// Per-node quadrature weight w_x > 0.
    pub weights: Vec<f64>,
    /// Per-axis `(lower, upper)` closure treatment for bounded axes.
    pub singular_ends: Vec<(bool, bool)>,
}

pub fn build_grid(spec: &ManifoldSpec, points_per_axis: &[usize]) -> Result<Arc<ChartGrid>> {
    if points_per_axis.len() != spec.dim {
        return Err(GftError::Manifest(format!(
            "{} axis resolutions for dim {}",
            points_per_axis.len(),
            spec.dim
        )));
    }
    let singular = spec.singular_ends();
    for (axis, &n) in points_per_axis.iter().enumerate() {
        // One-sided closures at singular ends need a 5-point reach.
        let min = if singular[axis].0 || singular[axis].1 { 5 } else { 4 };
        if n < min {
            return Err(GftError::ResolutionTooLow { axis, n, min });
        }
    }

    let dim = spec.dim;
    let mut axis_nodes: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut spacing = Vec::with_capacity(dim);
    for (c, &n) in spec.coords.iter().zip(points_per_axis) {
        let h = c.range() / n as f64;
        let offset = match c.bc {
            BoundaryKind::Periodic => 0.0,
            _ => 0.5,
        };
        axis_nodes.push((0..n).map(|j| c.min + (j as f64 + offset) * h).collect());
        spacing.push(h);
    }

    let n_nodes: usize = points_per_axis.iter().product();
    let cell: f64 = spacing.iter().product();
    let mut nodes = Vec::with_capacity(n_nodes * dim);
    let mut weights = Vec::with_capacity(n_nodes);
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    for _ in 0..n_nodes {
        for ax in 0..dim {
            point[ax] = axis_nodes[ax][idx[ax]];
        }
        let diag = spec.metric_diag(&point)?;
        let sqrt_det = diag.iter().product::<f64>().sqrt();
        nodes.extend_from_slice(&point);
        weights.push(sqrt_det * cell);
        // row-major increment: last axis fastest
        for ax in (0..dim).rev() {
            idx[ax] += 1;
            if idx[ax] < points_per_axis[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }

    Ok(Arc::new(ChartGrid {
        spec: spec.clone(),
        points_per_axis: points_per_axis.to_vec(),
        axis_nodes,
        spacing,
        nodes,
        weights,
        singular_ends: singular,
    }))
}

impl ChartGrid {
    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim()..(i + 1) * self.dim()]
    }

    /// Row-major flat index from a multi-index.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut f = 0;
        for (ax, &i) in multi.iter().enumerate() {
            f = f * self.points_per_axis[ax] + i;
        }
        f
    }

    /// Multi-index from a row-major flat index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for ax in (0..self.dim()).rev() {
            out[ax] = flat % self.points_per_axis[ax];
            flat /= self.points_per_axis[ax];
        }
        out
    }

    /// All grid lines along `axis`: each line lists the flat indices of the
    /// nodes obtained by sweeping `axis` while holding the other indices
    /// fixed. Used for per-axis operator assembly.
    pub fn lines(&self, axis: usize) -> Vec<Vec<usize>> {
        let n_ax = self.points_per_axis[axis];
        let n_lines = self.n_nodes() / n_ax;
        // stride of one step along `axis` in the row-major flattening
        let stride: usize = self.points_per_axis[axis + 1..].iter().product();
        let mut lines = Vec::with_capacity(n_lines);
        let mut seen = vec![false; self.n_nodes()];
        for start in 0..self.n_nodes() {
            if seen[start] {
                continue;
            }
            if self.multi_index(start)[axis] != 0 {
                continue;
            }
            let line: Vec<usize> = (0..n_ax).map(|j| start + j * stride).collect();
            for &i in &line {
                seen[i] = true;
            }
            lines.push(line);
        }
        debug_assert_eq!(lines.len(), n_lines);
        lines
    }

    /// Measure-weighted inner product, conjugate-linear in the first slot.
    pub fn inner_w(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        debug_assert_eq!(a.len(), self.n_nodes());
        debug_assert_eq!(b.len(), self.n_nodes());
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..a.len() {
            acc += self.weights[i] * a[i].conj() * b[i];
        }
        acc
    }

    pub fn norm_w(&self, a: &[Complex64]) -> f64 {
        self.inner_w(a, a).re.max(0.0).sqrt()
    }

    /// Smooth random test vector: a few separable products of low modes
    /// (lowest quarter of each axis's resolvable band), unit w-norm.
    /// Bounded-axis factors vanish at the axis ends so the same vectors are
    /// usable under every boundary treatment.
    pub fn random_band_limited(&self, rng: &mut impl Rng) -> Vec<Complex64> {
        let n = self.n_nodes();
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        let terms = 8;
        for _ in 0..terms {
            let coeff = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            // per-axis mode choice
            let modes: Vec<(BoundaryKind, i64)> = self
                .spec
                .coords
                .iter()
                .zip(&self.points_per_axis)
                .map(|(c, &np)| {
                    let bc = c.bc;
                    let m = match bc {
                        BoundaryKind::Periodic => {
                            let cap = (np as i64 / 8).max(1);
                            rng.gen_range(-cap..=cap)
                        }
                        _ => {
                            let cap = (np as i64 / 4).max(1);
                            rng.gen_range(1..=cap)
                        }
                    };
                    (bc, m)
                })
                .collect();
            for i in 0..n {
                let x = self.node(i);
                let mut factor = Complex64::new(1.0, 0.0);
                for (ax, (bc, m)) in modes.iter().enumerate() {
                    let c = &self.spec.coords[ax];
                    let xi = (x[ax] - c.min) / c.range();
                    factor *= match bc {
                        BoundaryKind::Periodic => {
                            let arg = 2.0 * std::f64::consts::PI * (*m as f64) * xi;
                            Complex64::new(arg.cos(), arg.sin())
                        }
                        _ => {
                            let arg = std::f64::consts::PI * (*m as f64) * xi;
                            Complex64::new(arg.sin(), 0.0)
                        }
                    };
                }
                v[i] += coeff * factor;
            }
        }
        let nrm = self.norm_w(&v);
        if nrm > 0.0 {
            for z in &mut v {
                *z /= nrm;
            }
        }
        v
    }
}
