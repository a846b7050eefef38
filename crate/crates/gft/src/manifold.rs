//! Charts, metric fields, measures, and Christoffel symbols.
//!
//! A `ManifoldSpec` is declarative data: a named chart with per-coordinate
//! bounds and boundary kinds plus a diagonal metric, either from the built-in
//! catalog or parsed from component expressions. Everything downstream
//! (grids, operators, classification) reasons about this description.

use crate::error::{GftError, Result};
use crate::expr::Expr;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CatalogId {
    Interval,
    Circle,
    Torus2,
    Sphere2,
    Box3,
    Ball3,
}

impl CatalogId {
    pub const ALL: [CatalogId; 6] = [
        CatalogId::Interval,
        CatalogId::Circle,
        CatalogId::Torus2,
        CatalogId::Sphere2,
        CatalogId::Box3,
        CatalogId::Ball3,
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub bc: BoundaryKind,
}

impl CoordSpec {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// One diagonal metric component: a catalog closed form (with analytic
/// gradient) or a parsed user expression (differentiated centrally with
/// step 1e-5 x coordinate range).
#[derive(Debug, Clone)]
pub enum ComponentFn {
    One,
    /// r^2 where `var` indexes the radial coordinate.
    Square { var: usize },
    /// sin^2(x_var)
    Sin2 { var: usize },
    /// r^2 sin^2(theta)
    Square2Sin2 { r: usize, th: usize },
    Parsed(Expr),
}

impl ComponentFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ComponentFn::One => 1.0,
            ComponentFn::Square { var } => x[*var] * x[*var],
            ComponentFn::Sin2 { var } => {
                let s = x[*var].sin();
                s * s
            }
            ComponentFn::Square2Sin2 { r, th } => {
                let s = x[*th].sin();
                x[*r] * x[*r] * s * s
            }
            ComponentFn::Parsed(e) => e.eval(x),
        }
    }

    /// dq/dx_i; `steps[i]` is the central-difference step for parsed components.
    pub fn grad(&self, x: &[f64], i: usize, steps: &[f64]) -> f64 {
        match self {
            ComponentFn::One => 0.0,
            ComponentFn::Square { var } => {
                if i == *var {
                    2.0 * x[*var]
                } else {
                    0.0
                }
            }
            ComponentFn::Sin2 { var } => {
                if i == *var {
                    2.0 * x[*var].sin() * x[*var].cos()
                } else {
                    0.0
                }
            }
            ComponentFn::Square2Sin2 { r, th } => {
                let s = x[*th].sin();
                if i == *r {
                    2.0 * x[*r] * s * s
                } else if i == *th {
                    2.0 * x[*r] * x[*r] * s * x[*th].cos()
                } else {
                    0.0
                }
            }
            ComponentFn::Parsed(e) => {
                let h = steps[i];
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (e.eval(&xp) - e.eval(&xm)) / (2.0 * h)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Catalog,
    User,
}

/// Diagonal metric as a field of component functions.
#[derive(Debug, Clone)]
pub struct MetricExpr {
    pub diag: Vec<ComponentFn>,
    pub provenance: Provenance,
    /// Source strings when user-supplied (kept for round-tripping manifests).
    pub sources: Option<Vec<String>>,
}

/// Pointwise metric data: matrix, inverse, volume factor, Christoffels.
#[derive(Debug, Clone)]
pub struct MetricAtPoint {
    pub q: DMatrix<f64>,
    pub q_inv: DMatrix<f64>,
    pub sqrt_det: f64,
    /// gamma[k][i][j] = Christoffel symbol of the second kind.
    pub christoffel: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub name: String,
    pub dim: usize,
    pub coords: Vec<CoordSpec>,
    pub metric: MetricExpr,
    pub compact: bool,
    /// Declares that this compact chart stands in for a truncation of a
    /// non-compact manifold; classification may then tag axes `continuum`.
    pub truncation: bool,
    pub catalog_id: Option<CatalogId>,
}

pub const BALL3_RADIUS: f64 = PI;
pub const INTERVAL_LENGTH: f64 = PI;

impl ManifoldSpec {
    pub fn catalog(id: CatalogId) -> ManifoldSpec {
        use BoundaryKind::*;
        let coord = |name: &str, min: f64, max: f64, bc: BoundaryKind| CoordSpec {
            name: name.into(),
            min,
            max,
            bc,
        };
        match id {
            CatalogId::Interval => ManifoldSpec {
                name: "interval".into(),
                dim: 1,
                coords: vec![coord("x", 0.0, INTERVAL_LENGTH, Dirichlet)],
                metric: MetricExpr {
                    diag: vec![ComponentFn::One],
                    provenance: Provenance::Catalog,
                    sources: None,
                },
                compact: true,
                truncation: false,
                catalog_id: Some(id),
            },
            CatalogId::Circle => ManifoldSpec {
                name: "circle".into(),
                dim: 1,
                coords: vec![coord("th", 0.0, 2.0 * PI, Periodic)],
                metric: MetricExpr {
                    diag: vec![ComponentFn::One],
                    provenance: Provenance::Catalog,
                    sources: None,
                },
                compact: true,
                truncation: false,
                catalog_id: Some(id),
            },
            CatalogId::Torus2 => ManifoldSpec {
                name: "torus2".into(),
                dim: 2,
                coords: vec![
                    coord("th", 0.0, 2.0 * PI, Periodic),
                    coord("ph", 0.0, 2.0 * PI, Periodic),
                ],
                metric: MetricExpr {
                    diag: vec![ComponentFn::One, ComponentFn::One],
                    provenance: Provenance::Catalog,
                    sources: None,
                },
                compact: true,
                truncation: false,
                catalog_id: Some(id),
            },
            CatalogId::Sphere2 => ManifoldSpec {
                name: "sphere2".into(),
                dim: 2,
                coords: vec![
                    coord("th", 0.0, PI, Neumann),
                    coord("ph", 0.0, 2.0 * PI, Periodic),
                ],
                metric: MetricExpr {
                    diag: vec![ComponentFn::One, ComponentFn::Sin2 { var: 0 }],
                    provenance: Provenance::Catalog,
                    sources: None,
                },
                compact: true,
                truncation: false,
                catalog_id: Some(id),
            },
            CatalogId::Box3 => ManifoldSpec {
                name: "box3".into(),
                dim: 3,
                coords: vec![
                    coord("x", 0.0, 2.0 * PI, Periodic),
                    coord("y", 0.0, 2.0 * PI, Periodic),
                    coord("z", 0.0, 2.0 * PI, Periodic),
                ],
                metric: MetricExpr {
                    diag: vec![ComponentFn::One, ComponentFn::One, ComponentFn::One],
                    provenance: Provenance::Catalog,
                    sources: None,
                },
                compact: true,
                // periodic box standing in for all of flat 3-space
                truncation: true,
                catalog_id: Some(id),
            },
            CatalogId::Ball3 => ManifoldSpec {
                name: "ball3".into(),
                dim: 3,
                coords: vec![
                    coord("r", 0.0, BALL3_RADIUS, Dirichlet),
                    coord("th", 0.0, PI, Neumann),
                    coord("ph", 0.0, 2.0 * PI, Periodic),
                ],
                metric: MetricExpr {
                    diag: vec![
                        ComponentFn::One,
                        ComponentFn::Square { var: 0 },
                        ComponentFn::Square2Sin2 { r: 0, th: 1 },
                    ],
                    provenance: Provenance::Catalog,
                    sources: None,
                },
                compact: true,
                // bounded ball standing in for all of flat 3-space
                truncation: true,
                catalog_id: Some(id),
            },
        }
    }

    /// Central-difference steps per axis for user-metric derivatives.
    pub fn fd_steps(&self) -> Vec<f64> {
        self.coords.iter().map(|c| 1e-5 * c.range()).collect()
    }

    /// Which axis *ends* are coordinate singularities (metric degenerate):
    /// `(lower, upper)` per axis. Catalog charts use the known table; user
    /// metrics are probed by evaluating the volume factor near each end.
    pub fn singular_ends(&self) -> Vec<(bool, bool)> {
        if let Some(id) = self.catalog_id {
            return match id {
                CatalogId::Sphere2 => vec![(true, true), (false, false)],
                CatalogId::Ball3 => vec![(true, false), (true, true), (false, false)],
                _ => vec![(false, false); self.dim],
            };
        }
        let center: Vec<f64> = self.coords.iter().map(|c| 0.5 * (c.min + c.max)).collect();
        let center_vol = self.sqrt_det_raw(&center);
        let mut out = Vec::with_capacity(self.dim);
        for ax in 0..self.dim {
            if self.coords[ax].bc == BoundaryKind::Periodic {
                out.push((false, false));
                continue;
            }
            let probe = |end: f64| -> bool {
                let mut x = center.clone();
                x[ax] = end;
                let v = self.sqrt_det_raw(&x);
                !v.is_finite() || v.abs() < 1e-6 * center_vol.max(1e-300)
            };
            out.push((probe(self.coords[ax].min), probe(self.coords[ax].max)));
        }
        out
    }

    fn sqrt_det_raw(&self, x: &[f64]) -> f64 {
        self.metric
            .diag
            .iter()
            .map(|c| c.eval(x))
            .product::<f64>()
            .abs()
            .sqrt()
    }

    /// Wrap periodic coordinates into range; reject points outside bounded
    /// axes or within 1e-12 of a singular end.
    fn normalize_point(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim {
            return Err(GftError::OutOfChart {
                point: point.to_vec(),
                axis: point.len().min(self.dim),
            });
        }
        let singular = self.singular_ends();
        let mut x = point.to_vec();
        for (ax, c) in self.coords.iter().enumerate() {
            if c.bc == BoundaryKind::Periodic {
                let r = c.range();
                x[ax] = c.min + (x[ax] - c.min).rem_euclid(r);
            } else {
                let out = GftError::OutOfChart {
                    point: point.to_vec(),
                    axis: ax,
                };
                if !(x[ax] > c.min && x[ax] < c.max) {
                    return Err(out);
                }
                let (lo, hi) = singular[ax];
                if (lo && x[ax] - c.min < 1e-12) || (hi && c.max - x[ax] < 1e-12) {
                    return Err(out);
                }
            }
        }
        Ok(x)
    }

    /// Diagonal metric values at an interior point (cheap path for assembly).
    pub fn metric_diag(&self, point: &[f64]) -> Result<Vec<f64>> {
        let x = self.normalize_point(point)?;
        let diag: Vec<f64> = self.metric.diag.iter().map(|c| c.eval(&x)).collect();
        for (i, &v) in diag.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(GftError::NonPositiveDefinite {
                    point: point.to_vec(),
                    detail: format!("q_{i}{i} = {v}"),
                });
            }
        }
        Ok(diag)
    }

    /// Raw metric components without chart-interior or positivity checks.
    /// Needed at cell interfaces, which may sit exactly on a chart edge
    /// where the measure legitimately degenerates (sphere poles, ball
    /// center). Callers own the interpretation of zero components.
    pub fn metric_diag_unchecked(&self, point: &[f64]) -> Vec<f64> {
        self.metric.diag.iter().map(|c| c.eval(point)).collect()
    }
}

/// Metric matrix, inverse, volume factor, and Christoffel symbols at a point.
pub fn evaluate_metric(spec: &ManifoldSpec, point: &[f64]) -> Result<MetricAtPoint> {
    let x = spec.normalize_point(point)?;
    let n = spec.dim;
    let diag: Vec<f64> = spec.metric.diag.iter().map(|c| c.eval(&x)).collect();

    let q = DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 });
    // Cholesky is the positive-definiteness check.
    if q.clone().cholesky().is_none() {
        return Err(GftError::NonPositiveDefinite {
            point: point.to_vec(),
            detail: format!("diag = {diag:?}"),
        });
    }
    let q_inv = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / diag[i] } else { 0.0 });
    let sqrt_det = diag.iter().product::<f64>().sqrt();

    // dq[k][i] = d q_kk / d x_i
    let steps = spec.fd_steps();
    let mut dq = vec![vec![0.0; n]; n];
    for k in 0..n {
        for i in 0..n {
            dq[k][i] = spec.metric.diag[k].grad(&x, i, &steps);
        }
    }

    // Gamma^k_ij = 1/2 q^kk (d_i q_kj + d_j q_ki - d_k q_ij); diagonal metric.
    let mut christoffel = vec![vec![vec![0.0; n]; n]; n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let t1 = if k == j { dq[k][i] } else { 0.0 };
                let t2 = if k == i { dq[k][j] } else { 0.0 };
                let t3 = if i == j { dq[i][k] } else { 0.0 };
                christoffel[k][i][j] = 0.5 / diag[k] * (t1 + t2 - t3);
            }
        }
    }

    Ok(MetricAtPoint {
        q,
        q_inv,
        sqrt_det,
        christoffel,
    })
}

/// Volume factor sqrt(det q) at a point.
pub fn volume_element(spec: &ManifoldSpec, point: &[f64]) -> Result<f64> {
    Ok(evaluate_metric(spec, point)?.sqrt_det)
}

// ---------------------------------------------------------------------------
// Manifest ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ManifestJson {
    name: String,
    dim: usize,
    coords: Vec<CoordSpec>,
    metric: ManifestMetric,
    #[serde(default)]
    truncation: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ManifestMetric {
    Catalog { id: CatalogId },
    Diagonal { components: Vec<String> },
}

/// Parse and validate a JSON manifold manifest.
pub fn manifest_from_json(text: &str) -> Result<ManifoldSpec> {
    let m: ManifestJson =
        serde_json::from_str(text).map_err(|e| GftError::Manifest(e.to_string()))?;

    if m.dim == 0 || m.dim != m.coords.len() {
        return Err(GftError::Manifest(format!(
            "dim = {} but {} coordinate descriptors",
            m.dim,
            m.coords.len()
        )));
    }
    for c in &m.coords {
        if !(c.min.is_finite() && c.max.is_finite() && c.min < c.max) {
            return Err(GftError::Manifest(format!(
                "coordinate '{}' has invalid bounds [{}, {}]",
                c.name, c.min, c.max
            )));
        }
    }
    {
        let mut names: Vec<&str> = m.coords.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != m.coords.len() {
            return Err(GftError::Manifest("duplicate coordinate names".into()));
        }
    }

    match m.metric {
        ManifestMetric::Catalog { id } => {
            let canonical = ManifoldSpec::catalog(id);
            if m.dim != canonical.dim {
                return Err(GftError::Manifest(format!(
                    "catalog {id:?} has dim {}, manifest says {}",
                    canonical.dim, m.dim
                )));
            }
            for (given, canon) in m.coords.iter().zip(&canonical.coords) {
                if given.name != canon.name
                    || given.bc != canon.bc
                    || (given.min - canon.min).abs() > 1e-12
                    || (given.max - canon.max).abs() > 1e-12
                {
                    return Err(GftError::Manifest(format!(
                        "coordinate '{}' conflicts with catalog {id:?} chart '{}'",
                        given.name, canon.name
                    )));
                }
            }
            let mut spec = canonical;
            spec.name = m.name;
            if let Some(t) = m.truncation {
                spec.truncation = t;
            }
            Ok(spec)
        }
        ManifestMetric::Diagonal { components } => {
            if components.len() != m.dim {
                return Err(GftError::Manifest(format!(
                    "{} metric components for dim {}",
                    components.len(),
                    m.dim
                )));
            }
            let names: Vec<&str> = m.coords.iter().map(|c| c.name.as_str()).collect();
            let mut diag = Vec::with_capacity(m.dim);
            for src in &components {
                diag.push(ComponentFn::Parsed(Expr::parse(src, &names)?));
            }
            let spec = ManifoldSpec {
                name: m.name,
                dim: m.dim,
                coords: m.coords,
                metric: MetricExpr {
                    diag,
                    provenance: Provenance::User,
                    sources: Some(components),
                },
                compact: true,
                truncation: m.truncation.unwrap_or(false),
                catalog_id: None,
            };
            // positive definiteness at sample points (chart center + midpoints
            // toward each corner); periodic metrics must also be periodic, which
            // we spot-check by comparing end values.
            let center: Vec<f64> = spec.coords.iter().map(|c| 0.5 * (c.min + c.max)).collect();
            evaluate_metric(&spec, &center)?;
            for ax in 0..spec.dim {
                for frac in [0.25, 0.75] {
                    let mut x = center.clone();
                    x[ax] = spec.coords[ax].min + frac * spec.coords[ax].range();
                    spec.metric_diag(&x)?;
                }
            }
            Ok(spec)
        }
    }
}

pub fn manifest_from_path(path: &std::path::Path) -> Result<ManifoldSpec> {
    let text = std::fs::read_to_string(path)?;
    manifest_from_json(&text)
}
