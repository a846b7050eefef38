//! Pointwise verification of symmetry-generator identities on chart metrics:
//! Killing-vector and Killing-tensor residuals, Schouten–Nijenhuis brackets,
//! Frobenius integrability of one-forms, the Robertson mixed-partial test and
//! the R-separation data of a diagonal metric.
//!
//! Everything here works on analytic component functions sampled at chart
//! points, independent of any grid discretization — these are the continuum
//! checks that certify (or refute) the symmetry data behind the discrete
//! operator catalogs.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{GftError, Result};
use crate::manifold::{evaluate_metric, CatalogId, ManifoldSpec};

/// First-derivative central-difference step, as a fraction of the coordinate
/// range.
const D1_STEP: f64 = 1e-5;
/// Step for second derivatives (Robertson, separation potentials). Wider than
/// the first-derivative step: a second difference at step h has roundoff
/// floor ~ ε|f|/h², which at 1e-5·range would already eat the tolerance.
const D2_STEP: f64 = 1e-4;
/// A diagonal metric separates iff every Robertson mixed partial stays below
/// this bound.
pub const ROBERTSON_TOL: f64 = 1e-6;

type VectorMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type TensorMap = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Contravariant vector field K^i given by analytic component functions on a
/// chart.
#[derive(Clone)]
pub struct KillingField {
    pub id: String,
    pub chart: ManifoldSpec,
    components: VectorMap,
}

impl KillingField {
    pub fn new(
        id: &str,
        chart: &ManifoldSpec,
        components: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        KillingField {
            id: id.into(),
            chart: chart.clone(),
            components: Arc::new(components),
        }
    }

    /// K^i at a chart point.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.components)(x)
    }
}

impl std::fmt::Debug for KillingField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KillingField")
            .field("id", &self.id)
            .field("chart", &self.chart.name)
            .finish()
    }
}

/// Symmetric contravariant 2-tensor field κ^{ij}; `eval` must return a
/// symmetric matrix (the residuals read both triangles).
#[derive(Clone)]
pub struct KillingTensor2 {
    pub id: String,
    pub chart: ManifoldSpec,
    components: TensorMap,
}

impl KillingTensor2 {
    pub fn new(
        id: &str,
        chart: &ManifoldSpec,
        components: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        KillingTensor2 {
            id: id.into(),
            chart: chart.clone(),
            components: Arc::new(components),
        }
    }

    /// κ^{ij} at a chart point.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        (self.components)(x)
    }
}

impl std::fmt::Debug for KillingTensor2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KillingTensor2")
            .field("id", &self.id)
            .field("chart", &self.chart.name)
            .finish()
    }
}

// ---------------------------------------------------------------------------
// Finite differences over fallible point functions
// ---------------------------------------------------------------------------

fn step(spec: &ManifoldSpec, axis: usize, frac: f64) -> f64 {
    frac * spec.coords[axis].range()
}

fn d1(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], i: usize, h: f64) -> Result<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    Ok((f(&xp)? - f(&xm)?) / (2.0 * h))
}

fn d2_same(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], i: usize, h: f64) -> Result<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    Ok((f(&xp)? - 2.0 * f(x)? + f(&xm)?) / (h * h))
}

fn d2_mixed(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    i: usize,
    j: usize,
    hi: f64,
    hj: f64,
) -> Result<f64> {
    let at = |si: f64, sj: f64| -> Result<f64> {
        let mut y = x.to_vec();
        y[i] += si * hi;
        y[j] += sj * hj;
        f(&y)
    };
    Ok((at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?) / (4.0 * hi * hj))
}

/// Cartesian sampling grid strictly inside the chart: `per_axis` cell-center
/// points per axis, so every sample keeps a half-cell margin from boundaries
/// and singular loci.
pub fn interior_sample_grid(spec: &ManifoldSpec, per_axis: usize) -> Vec<Vec<f64>> {
    let n = spec.dim;
    let mut out = Vec::with_capacity(per_axis.pow(n as u32));
    let mut idx = vec![0usize; n];
    loop {
        let point: Vec<f64> = (0..n)
            .map(|ax| {
                let c = &spec.coords[ax];
                c.min + c.range() * (idx[ax] as f64 + 0.5) / per_axis as f64
            })
            .collect();
        out.push(point);
        let mut ax = 0;
        loop {
            idx[ax] += 1;
            if idx[ax] < per_axis {
                break;
            }
            idx[ax] = 0;
            ax += 1;
            if ax == n {
                return out;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Killing residuals
// ---------------------------------------------------------------------------

/// max over points and index pairs of |(∇_i K_j + ∇_j K_i)/2| for the lowered
/// field K_j = q_jj K^j, with Christoffels from the chart metric and central
/// differences for ∂K. Zero (up to difference noise) exactly when K generates
/// an isometry.
pub fn killing_vector_residual(field: &KillingField, sample_points: &[Vec<f64>]) -> Result<f64> {
    let spec = &field.chart;
    let n = spec.dim;
    let lower = |j: usize| {
        move |x: &[f64]| -> Result<f64> {
            let q = spec.metric_diag(x)?;
            Ok(q[j] * field.eval(x)[j])
        }
    };
    let mut worst = 0.0f64;
    for x in sample_points {
        let m = evaluate_metric(spec, x)?;
        let q = spec.metric_diag(x)?;
        let k = field.eval(x);
        let k_lo: Vec<f64> = (0..n).map(|j| q[j] * k[j]).collect();
        for i in 0..n {
            for j in i..n {
                let mut s = d1(&lower(j), x, i, step(spec, i, D1_STEP))?
                    + d1(&lower(i), x, j, step(spec, j, D1_STEP))?;
                for l in 0..n {
                    s -= 2.0 * m.christoffel[l][i][j] * k_lo[l];
                }
                worst = worst.max((s / 2.0).abs());
            }
        }
    }
    Ok(worst)
}

/// max over points and index triples of the symmetrized covariant derivative
/// |∇_(i κ_jk)| of the lowered tensor κ_{jk} = q_jj q_kk κ^{jk}.
pub fn killing_tensor_residual(tensor: &KillingTensor2, sample_points: &[Vec<f64>]) -> Result<f64> {
    let spec = &tensor.chart;
    let n = spec.dim;
    let lower = |j: usize, k: usize| {
        move |x: &[f64]| -> Result<f64> {
            let q = spec.metric_diag(x)?;
            Ok(q[j] * q[k] * tensor.eval(x)[(j, k)])
        }
    };
    let mut worst = 0.0f64;
    for x in sample_points {
        let m = evaluate_metric(spec, x)?;
        let q = spec.metric_diag(x)?;
        let up = tensor.eval(x);
        let lo = DMatrix::<f64>::from_fn(n, n, |j, k| q[j] * q[k] * up[(j, k)]);
        // ∇_i κ_jk at this point, all index combinations
        let mut nabla = vec![vec![vec![0.0f64; n]; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut v = d1(&lower(j, k), x, i, step(spec, i, D1_STEP))?;
                    for l in 0..n {
                        v -= m.christoffel[l][i][j] * lo[(l, k)] + m.christoffel[l][i][k] * lo[(j, l)];
                    }
                    nabla[i][j][k] = v;
                    nabla[i][k][j] = v;
                }
            }
        }
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let s = (nabla[i][j][k] + nabla[j][k][i] + nabla[k][i][j]) / 3.0;
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Schouten–Nijenhuis bracket
// ---------------------------------------------------------------------------

/// Operand of the Schouten–Nijenhuis bracket: a symmetric contravariant
/// tensor of rank 1 or 2.
#[derive(Debug, Clone, Copy)]
pub enum SnOperand<'a> {
    Vector(&'a KillingField),
    Tensor(&'a KillingTensor2),
}

impl<'a> SnOperand<'a> {
    fn chart(&self) -> &ManifoldSpec {
        match self {
            SnOperand::Vector(f) => &f.chart,
            SnOperand::Tensor(t) => &t.chart,
        }
    }
}

/// max pointwise component norm of [A, B]_SN, the bracket of symmetric
/// contravariant tensors (rank 1 against rank 1 reduces to the Lie bracket).
/// Computed in the plain-partial form, which the symmetrization makes
/// connection-independent. Two generators can belong to one commuting family
/// only when this vanishes.
pub fn sn_bracket_residual(a: SnOperand, b: SnOperand, sample_points: &[Vec<f64>]) -> Result<f64> {
    let spec = a.chart();
    let n = spec.dim;
    let h: Vec<f64> = (0..n).map(|i| step(spec, i, D1_STEP)).collect();

    // component derivative ∂_j of one upper component, by central difference
    let dv = |f: &KillingField, i: usize, j: usize, x: &[f64]| -> f64 {
        let g = |y: &[f64]| -> Result<f64> { Ok(f.eval(y)[i]) };
        d1(&g, x, j, h[j]).expect("component functions are total")
    };
    let dt = |t: &KillingTensor2, i: usize, k: usize, j: usize, x: &[f64]| -> f64 {
        let g = |y: &[f64]| -> Result<f64> { Ok(t.eval(y)[(i, k)]) };
        d1(&g, x, j, h[j]).expect("component functions are total")
    };

    let mut worst = 0.0f64;
    for x in sample_points {
        // chart containment check only; the bracket itself is metric-free
        spec.metric_diag(x)?;
        match (a, b) {
            (SnOperand::Vector(fa), SnOperand::Vector(fb)) => {
                let va = fa.eval(x);
                let vb = fb.eval(x);
                for i in 0..n {
                    let mut c = 0.0;
                    for j in 0..n {
                        c += va[j] * dv(fb, i, j, x) - vb[j] * dv(fa, i, j, x);
                    }
                    worst = worst.max(c.abs());
                }
            }
            (SnOperand::Vector(fa), SnOperand::Tensor(tb)) => {
                let va = fa.eval(x);
                let mb = tb.eval(x);
                for i in 0..n {
                    for k in i..n {
                        let mut c = 0.0;
                        for j in 0..n {
                            c += va[j] * dt(tb, i, k, j, x)
                                - mb[(j, i)] * dv(fa, k, j, x)
                                - mb[(j, k)] * dv(fa, i, j, x);
                        }
                        worst = worst.max(c.abs());
                    }
                }
            }
            (SnOperand::Tensor(_), SnOperand::Vector(_)) => {
                // antisymmetry of the bracket
                return sn_bracket_residual(b, a, sample_points);
            }
            (SnOperand::Tensor(ta), SnOperand::Tensor(tb)) => {
                let ma = ta.eval(x);
                let mb = tb.eval(x);
                for i in 0..n {
                    for k in i..n {
                        for l in k..n {
                            // full symmetrization = cyclic average, each term
                            // being symmetric in its trailing pair
                            let mut c = 0.0;
                            for (p, qq, r) in [(i, k, l), (k, l, i), (l, i, k)] {
                                for j in 0..n {
                                    c += 2.0 / 3.0
                                        * (ma[(j, p)] * dt(tb, qq, r, j, x)
                                            - mb[(j, p)] * dt(ta, qq, r, j, x));
                                }
                            }
                            worst = worst.max(c.abs());
                        }
                    }
                }
            }
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Frobenius integrability
// ---------------------------------------------------------------------------

/// max over points of |ε^{ijk} e_i ∂_j e_k| for a one-form with components
/// e_i: the e ∧ de = 0 integrability test. The wedge is a 3-form, so any
/// one-form on a 2-chart passes identically (returns 0); charts above
/// dimension 3 are rejected.
pub fn frobenius_residual(
    oneform: &KillingField,
    sample_points: &[Vec<f64>],
) -> Result<f64> {
    let spec = &oneform.chart;
    let n = spec.dim;
    if n > 3 {
        return Err(GftError::DimensionUnsupported { expected: 3, got: n });
    }
    if n < 3 {
        for x in sample_points {
            spec.metric_diag(x)?;
        }
        return Ok(0.0);
    }
    let h: Vec<f64> = (0..n).map(|i| step(spec, i, D1_STEP)).collect();
    let mut worst = 0.0f64;
    for x in sample_points {
        spec.metric_diag(x)?;
        let e = oneform.eval(x);
        let mut total = 0.0;
        for (i, j, k, sign) in [
            (0usize, 1usize, 2usize, 1.0),
            (1, 2, 0, 1.0),
            (2, 0, 1, 1.0),
            (0, 2, 1, -1.0),
            (2, 1, 0, -1.0),
            (1, 0, 2, -1.0),
        ] {
            let g = |y: &[f64]| -> Result<f64> { Ok(oneform.eval(y)[k]) };
            total += sign * e[i] * d1(&g, x, j, h[j])?;
        }
        worst = worst.max(total.abs());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Robertson condition and R-separation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RobertsonViolation {
    /// Index of the inverse-metric component ln(√|q| q^{ii}); also the first
    /// derivative axis.
    pub i: usize,
    /// Second derivative axis.
    pub j: usize,
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct RobertsonReport {
    pub separable: bool,
    /// Largest |∂_i∂_j ln(√|q| q^{ii})| seen anywhere.
    pub max_abs: f64,
    /// Entries exceeding the separability bound.
    pub violations: Vec<RobertsonViolation>,
}

/// Mixed-partial separability test for the (diagonal) chart metric:
/// ∂_i∂_j ln(√|q| q^{ii}) must vanish for every i ≠ j. The Helmholtz
/// equation decouples into per-axis ODEs after the R-substitution exactly
/// when this holds.
pub fn robertson_check(spec: &ManifoldSpec, sample_points: &[Vec<f64>]) -> Result<RobertsonReport> {
    let n = spec.dim;
    let mut max_abs = 0.0f64;
    let mut violations = Vec::new();
    for x in sample_points {
        for i in 0..n {
            let f = |y: &[f64]| -> Result<f64> {
                let q = spec.metric_diag(y)?;
                let sqrt_det = q.iter().product::<f64>().sqrt();
                Ok((sqrt_det / q[i]).ln())
            };
            for j in 0..n {
                if j == i {
                    continue;
                }
                let v = d2_mixed(&f, x, i, j, step(spec, i, D2_STEP), step(spec, j, D2_STEP))?;
                max_abs = max_abs.max(v.abs());
                if v.abs() > ROBERTSON_TOL {
                    violations.push(RobertsonViolation {
                        i,
                        j,
                        point: x.clone(),
                        value: v,
                    });
                }
            }
        }
    }
    Ok(RobertsonReport {
        separable: violations.is_empty(),
        max_abs,
        violations,
    })
}

/// Modulation factor R = Π q_i^{−1/4} and the per-axis separation potentials
/// V_i = (1/(4 q_i)) ((∂_i ln q_i)²/2 − ∂_i² ln q_i) of the R-substituted
/// Helmholtz equation, at one point. The metric must pass the Robertson test
/// there.
pub fn r_separation_factor(spec: &ManifoldSpec, point: &[f64]) -> Result<(f64, Vec<f64>)> {
    let report = robertson_check(spec, std::slice::from_ref(&point.to_vec()))?;
    if !report.separable {
        let worst = report
            .violations
            .iter()
            .fold(0.0f64, |a, v| a.max(v.value.abs()));
        return Err(GftError::NotSeparable(format!(
            "Robertson mixed partial {worst:.3e} at {point:?}"
        )));
    }
    let n = spec.dim;
    let q = spec.metric_diag(point)?;
    let r = q.iter().map(|&qi| qi.powf(-0.25)).product();
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let lnq = |y: &[f64]| -> Result<f64> { Ok(spec.metric_diag(y)?[i].ln()) };
        let h = step(spec, i, D2_STEP);
        let g1 = d1(&lnq, point, i, h)?;
        let g2 = d2_same(&lnq, point, i, h)?;
        v.push(0.25 / q[i] * (0.5 * g1 * g1 - g2));
    }
    Ok((r, v))
}

// ---------------------------------------------------------------------------
// Catalog symmetry generators and deliberately broken fixtures
// ---------------------------------------------------------------------------

/// The analytic Killing fields of each catalog chart: coordinate translations
/// on flat charts, the rotation generators on the sphere and ball. Interval
/// has none (translation breaks the Dirichlet ends).
pub fn catalog_killing_fields(id: CatalogId) -> Vec<KillingField> {
    let spec = ManifoldSpec::catalog(id);
    let unit = |ax: usize, dim: usize| {
        move |_: &[f64]| {
            let mut v = vec![0.0; dim];
            v[ax] = 1.0;
            v
        }
    };
    match id {
        CatalogId::Interval => Vec::new(),
        CatalogId::Circle => vec![KillingField::new("d_th", &spec, unit(0, 1))],
        CatalogId::Torus2 => vec![
            KillingField::new("d_th", &spec, unit(0, 2)),
            KillingField::new("d_ph", &spec, unit(1, 2)),
        ],
        CatalogId::Box3 => vec![
            KillingField::new("d_x", &spec, unit(0, 3)),
            KillingField::new("d_y", &spec, unit(1, 3)),
            KillingField::new("d_z", &spec, unit(2, 3)),
        ],
        CatalogId::Sphere2 => {
            // rotation generators in polar coordinates (θ, φ)
            let lx = |x: &[f64]| vec![-x[1].sin(), -x[0].cos() / x[0].sin() * x[1].cos()];
            let ly = |x: &[f64]| vec![x[1].cos(), -x[0].cos() / x[0].sin() * x[1].sin()];
            vec![
                KillingField::new("l_z", &spec, unit(1, 2)),
                KillingField::new("l_x", &spec, lx),
                KillingField::new("l_y", &spec, ly),
            ]
        }
        CatalogId::Ball3 => {
            // the same rotations, acting on the angular coordinates of (r, θ, φ)
            let lx = |x: &[f64]| vec![0.0, -x[2].sin(), -x[1].cos() / x[1].sin() * x[2].cos()];
            let ly = |x: &[f64]| vec![0.0, x[2].cos(), -x[1].cos() / x[1].sin() * x[2].sin()];
            vec![
                KillingField::new("l_z", &spec, unit(2, 3)),
                KillingField::new("l_x", &spec, lx),
                KillingField::new("l_y", &spec, ly),
            ]
        }
    }
}

/// The analytic rank-2 Killing tensors paired with the catalog charts: the
/// inverse metric everywhere (parallel by metric compatibility), plus the
/// angular Casimir symbol Σ_a L_a ⊗ L_a on the charts that carry rotations.
pub fn catalog_killing_tensors(id: CatalogId) -> Vec<KillingTensor2> {
    let spec = ManifoldSpec::catalog(id);
    let dim = spec.dim;
    let sp = spec.clone();
    let inv_metric = KillingTensor2::new("inverse_metric", &spec, move |x| {
        let q = sp.metric_diag_unchecked(x);
        DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 / q[i] } else { 0.0 })
    });
    let mut out = vec![inv_metric];
    match id {
        CatalogId::Sphere2 => {
            out.push(KillingTensor2::new("casimir_symbol", &spec, |x| {
                let s = x[0].sin();
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0 / (s * s)]))
            }));
        }
        CatalogId::Ball3 => {
            out.push(KillingTensor2::new("casimir_symbol", &spec, |x| {
                let s = x[1].sin();
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    0.0,
                    1.0,
                    1.0 / (s * s),
                ]))
            }));
        }
        _ => {}
    }
    out
}

/// Fields that look plausible but are not Killing, each failing the residual
/// by a documented O(1) margin:
/// - `dilation_x` on Box3: ∇_(x K_x) = ∂_x x = 1.
/// - `radial_dilation` on Ball3: ∇_(r K_r) = 1.
/// - `theta_modulation` on Torus2: K = sin θ ∂_θ, ∇_(θ K_θ) = cos θ.
/// - `polar_shear` on Sphere2: K = θ ∂_φ, symmetrized residual sin²θ / 2.
pub fn broken_killing_fixtures() -> Vec<KillingField> {
    let box3 = ManifoldSpec::catalog(CatalogId::Box3);
    let ball = ManifoldSpec::catalog(CatalogId::Ball3);
    let torus = ManifoldSpec::catalog(CatalogId::Torus2);
    let sphere = ManifoldSpec::catalog(CatalogId::Sphere2);
    vec![
        KillingField::new("dilation_x", &box3, |x: &[f64]| vec![x[0], 0.0, 0.0]),
        KillingField::new("radial_dilation", &ball, |x: &[f64]| vec![x[0], 0.0, 0.0]),
        KillingField::new("theta_modulation", &torus, |x: &[f64]| vec![x[0].sin(), 0.0]),
        KillingField::new("polar_shear", &sphere, |x: &[f64]| vec![0.0, x[0]]),
    ]
}
