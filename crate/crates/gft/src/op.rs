//! Discrete differential operators on a chart grid.
//!
//! Periodic axes use trigonometric (Fourier) differentiation; bounded axes
//! use 4th-order finite differences on the cell-centered nodes, with the
//! closure at each end chosen by boundary kind: Dirichlet folds odd-reflected
//! ghost values, Neumann folds even-reflected ghosts, and singular chart ends
//! (sphere poles, ball center) use one-sided stencils with no ghost at all —
//! the vanishing measure weight there enforces regularity weakly.
//!
//! Second-order operators are assembled in divergence form, so they are
//! symmetric in the measure-weighted inner product by construction and the
//! Laplacian is negative semidefinite exactly, not just asymptotically.

use crate::error::{GftError, Result};
use crate::grid::ChartGrid;
use crate::manifold::BoundaryKind;
use crate::sparse::CsrMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::sync::Arc;

/// Offsets larger than this on a finite-difference axis mark an operator as
/// non-local.
pub const DEFAULT_FD_LOCALITY_RADIUS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndClosure {
    /// Ghost values odd-reflected through the boundary (Dirichlet).
    OddGhost,
    /// Ghost values even-reflected through the boundary (Neumann).
    EvenGhost,
    /// One-sided stencil, no ghost (singular chart end).
    OneSided,
}

fn closure_for(bc: BoundaryKind, singular: bool) -> EndClosure {
    if singular {
        EndClosure::OneSided
    } else {
        match bc {
            BoundaryKind::Dirichlet => EndClosure::OddGhost,
            BoundaryKind::Neumann => EndClosure::EvenGhost,
            BoundaryKind::Periodic => unreachable!("periodic axes have no end closure"),
        }
    }
}

// ---------------------------------------------------------------------------
// 1-D differentiation matrices
// ---------------------------------------------------------------------------

/// Trigonometric-interpolation first derivative on n uniform periodic nodes
/// spanning `length`. Exact on every resolved mode; the unpaired (Nyquist)
/// mode of even n is annihilated, matching the derivative of its real
/// interpolant at the nodes.
pub fn fourier_d1(n: usize, length: f64) -> DMatrix<f64> {
    let k0 = 2.0 * std::f64::consts::PI / length;
    let m_max = (n - 1) / 2; // even n: n/2 - 1; odd n: (n-1)/2
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let theta = 2.0 * std::f64::consts::PI * (j as f64 - k as f64) / n as f64;
            let mut s = 0.0;
            for m in 1..=m_max {
                s -= 2.0 * (m as f64) * (m as f64 * theta).sin();
            }
            d[(j, k)] = k0 * s / n as f64;
        }
    }
    d
}

/// Negative second derivative (-d²/dx²) by trigonometric interpolation.
/// Eigenvalues are m² (in units of 2π/length) for resolved modes and (n/2)²
/// for the unpaired mode of even n, so the kernel is exactly the constants.
pub fn fourier_neg_d2(n: usize, length: f64) -> DMatrix<f64> {
    let k0 = 2.0 * std::f64::consts::PI / length;
    let m_max = (n - 1) / 2;
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let theta = 2.0 * std::f64::consts::PI * (j as f64 - k as f64) / n as f64;
            let mut s = 0.0;
            for m in 1..=m_max {
                s += 2.0 * (m as f64).powi(2) * (m as f64 * theta).cos();
            }
            if n % 2 == 0 {
                let ny = n as f64 / 2.0;
                s += ny * ny * (ny * theta).cos(); // cos(n/2 · θ_jk) = (-1)^(j-k)
            }
            d[(j, k)] = k0 * k0 * s / n as f64;
        }
    }
    d
}

/// Unitary translation by `a` (pullback of x -> x + a) on n uniform periodic
/// nodes via Fourier interpolation. Every mode, the unpaired one included,
/// is advanced by a unit-modulus phase, so U^H U = I exactly.
pub fn fourier_shift(n: usize, length: f64, a: f64) -> DMatrix<Complex64> {
    let k0 = 2.0 * std::f64::consts::PI / length;
    let lo = -(n as i64 - 1) / 2; // even n: modes lo..=lo+n-1 put Nyquist at +n/2
    let mut u = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let theta = 2.0 * std::f64::consts::PI * (j as f64 - k as f64) / n as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for step in 0..n {
                let m = lo + step as i64;
                let arg = m as f64 * theta + m as f64 * k0 * a;
                acc += Complex64::new(arg.cos(), arg.sin());
            }
            u[(j, k)] = acc / n as f64;
        }
    }
    u
}

/// Finite-difference weights for the m-th derivative at `z` from arbitrary
/// nodes `x` (Fornberg's recurrence). Every stencil in this module is
/// generated through here rather than from frozen coefficient tables.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    assert!(n > m, "need more than m nodes for an m-th derivative");
    let mut c = vec![vec![0.0f64; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Collocated 4th-order first derivative on n cell-centered nodes with
/// spacing h: centered 5-point interior rows, ghost folding or one-sided
/// rows at the ends. Used for first-order (vector-field) operators.
///
/// Caveat for second-order use: with ghost closures the checkerboard vector
/// (-1)^j lies in the kernel (all rows), so divergence forms built from this
/// matrix acquire a spurious zero mode — second-order assembly uses
/// `staggered_d1` instead, which has no such kernel.
pub fn bounded_d1(n: usize, h: f64, lower: EndClosure, upper: EndClosure) -> DMatrix<f64> {
    assert!(n >= 4);
    if lower == EndClosure::OneSided || upper == EndClosure::OneSided {
        assert!(n >= 5, "one-sided closures need a 5-point reach");
    }
    let mut d = DMatrix::zeros(n, n);
    for row in 0..n {
        let z = (row as f64 + 0.5) * h;
        if row < 2 && lower == EndClosure::OneSided {
            let xs: Vec<f64> = (0..5).map(|k| (k as f64 + 0.5) * h).collect();
            for (k, w) in fornberg_weights(z, &xs, 1).into_iter().enumerate() {
                d[(row, k)] += w;
            }
        } else if row >= n - 2 && upper == EndClosure::OneSided {
            let xs: Vec<f64> = (n - 5..n).map(|k| (k as f64 + 0.5) * h).collect();
            for (k, w) in fornberg_weights(z, &xs, 1).into_iter().enumerate() {
                d[(row, n - 5 + k)] += w;
            }
        } else {
            // centered stencil over nodes row-2 .. row+2, ghosts folded
            let ks: Vec<i64> = (row as i64 - 2..=row as i64 + 2).collect();
            let xs: Vec<f64> = ks.iter().map(|&k| (k as f64 + 0.5) * h).collect();
            for (&k, w) in ks.iter().zip(fornberg_weights(z, &xs, 1)) {
                fold_ghost(&mut d, row, k, w, n, lower, upper);
            }
        }
    }
    d
}

/// Staggered 4th-order flux derivative: maps values at the n cell-centered
/// nodes to first derivatives at the n+1 cell interfaces (positions j·h,
/// j = 0..=n). Interior rows use the 4-point staggered stencil
/// (f[-2] - 27 f[-1] + 27 f[0] - f[1]) / 24h; ends fold ghosts per closure.
/// A singular end gets an identically zero flux row at its boundary
/// interface (the coefficient vanishes there) and a 5-point one-sided
/// stencil one interface in. No nonzero checkerboard or constant-violating
/// kernel: ker T = {0} for Dirichlet ends, constants for Neumann/singular.
pub fn staggered_d1(n: usize, h: f64, lower: EndClosure, upper: EndClosure) -> DMatrix<f64> {
    assert!(n >= 4);
    if lower == EndClosure::OneSided || upper == EndClosure::OneSided {
        assert!(n >= 5, "one-sided closures need a 5-point reach");
    }
    let mut d = DMatrix::zeros(n + 1, n);
    for row in 0..=n {
        let z = row as f64 * h;
        let near_lower = row < 2;
        let near_upper = row > n - 2;
        if near_lower && lower == EndClosure::OneSided {
            if row == 0 {
                continue; // zero flux row at the singular interface
            }
            let xs: Vec<f64> = (0..5).map(|k| (k as f64 + 0.5) * h).collect();
            for (k, w) in fornberg_weights(z, &xs, 1).into_iter().enumerate() {
                d[(row, k)] += w;
            }
        } else if near_upper && upper == EndClosure::OneSided {
            if row == n {
                continue;
            }
            let xs: Vec<f64> = (n - 5..n).map(|k| (k as f64 + 0.5) * h).collect();
            for (k, w) in fornberg_weights(z, &xs, 1).into_iter().enumerate() {
                d[(row, n - 5 + k)] += w;
            }
        } else {
            // staggered stencil over nodes row-2 .. row+1, ghosts folded
            let ks: Vec<i64> = (row as i64 - 2..=row as i64 + 1).collect();
            let xs: Vec<f64> = ks.iter().map(|&k| (k as f64 + 0.5) * h).collect();
            for (&k, w) in ks.iter().zip(fornberg_weights(z, &xs, 1)) {
                fold_ghost(&mut d, row, k, w, n, lower, upper);
            }
        }
    }
    d
}

/// Add `w · f[k]` to row `row`, folding out-of-range node indices through
/// the nearer boundary with the closure's reflection sign.
fn fold_ghost(
    d: &mut DMatrix<f64>,
    row: usize,
    k: i64,
    w: f64,
    n: usize,
    lower: EndClosure,
    upper: EndClosure,
) {
    if w == 0.0 {
        return;
    }
    if k >= 0 && (k as usize) < n {
        d[(row, k as usize)] += w;
        return;
    }
    let (mirror, closure) = if k < 0 {
        (-1 - k, lower) // -1 -> 0, -2 -> 1
    } else {
        (2 * n as i64 - 1 - k, upper) // n -> n-1, n+1 -> n-2
    };
    let sign = match closure {
        EndClosure::OddGhost => -1.0,
        EndClosure::EvenGhost => 1.0,
        EndClosure::OneSided => unreachable!("one-sided rows never index ghosts"),
    };
    d[(row, mirror as usize)] += sign * w;
}

/// The first-derivative matrix for one grid axis, with closures implied by
/// the chart (periodic -> Fourier; bounded -> 4th-order FD with per-end
/// ghost or one-sided treatment).
pub fn axis_derivative_matrix(grid: &ChartGrid, axis: usize) -> DMatrix<f64> {
    let n = grid.points_per_axis[axis];
    let c = &grid.spec.coords[axis];
    match c.bc {
        BoundaryKind::Periodic => fourier_d1(n, c.range()),
        _ => {
            let (lo_sing, hi_sing) = grid.singular_ends[axis];
            bounded_d1(
                n,
                grid.spacing[axis],
                closure_for(c.bc, lo_sing),
                closure_for(c.bc, hi_sing),
            )
        }
    }
}

// ---------------------------------------------------------------------------
// DiscreteOperator
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub matrix: CsrMatrix,
    pub grid: Arc<ChartGrid>,
    /// Whether `matrix` is Hermitian with respect to the measure-weighted
    /// inner product (i.e. W·matrix is Hermitian as a plain matrix).
    pub hermitian_wrt_measure: bool,
    /// Largest index offset the operator couples along finite-difference
    /// axes; `None` when some axis is differentiated spectrally (dense rows).
    pub stencil_radius: Option<usize>,
}

impl DiscreteOperator {
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.matrix.apply(x)
    }

    pub fn n(&self) -> usize {
        self.matrix.n
    }

    pub fn scaled(&self, s: Complex64) -> DiscreteOperator {
        DiscreteOperator {
            matrix: self.matrix.scale(s),
            grid: self.grid.clone(),
            hermitian_wrt_measure: self.hermitian_wrt_measure && s.im == 0.0,
            stencil_radius: self.stencil_radius,
        }
    }

    /// Adjoint with respect to the measure: W^{-1} A^H W.
    pub fn adjoint_wrt_measure(&self) -> CsrMatrix {
        let w: Vec<Complex64> = self
            .grid
            .weights
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        let w_inv: Vec<Complex64> = self
            .grid
            .weights
            .iter()
            .map(|&x| Complex64::new(1.0 / x, 0.0))
            .collect();
        self.matrix
            .hermitian_transpose()
            .scale_cols(&w)
            .scale_rows(&w_inv)
    }

    /// Max deviation from measure-Hermiticity over random smooth trial pairs:
    /// |<u, Av> - <Au, v>| with unit-norm u, v.
    pub fn hermiticity_residual(&self, rng: &mut impl rand::Rng, trials: usize) -> f64 {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let u = self.grid.random_band_limited(rng);
            let v = self.grid.random_band_limited(rng);
            let av = self.apply(&v);
            let au = self.apply(&u);
            let lhs = self.grid.inner_w(&u, &av);
            let rhs = self.grid.inner_w(&au, &v);
            worst = worst.max((lhs - rhs).norm());
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Laplace–Beltrami assembly
// ---------------------------------------------------------------------------

/// Assemble the Laplace–Beltrami operator of the chart's diagonal metric.
/// The returned operator is the (negative semidefinite) Laplacian Δ; use
/// `.scaled(-1)` for the spectral problem -Δψ = λψ.
///
/// Per axis i the energy contribution uses coefficient c_i = √(det q)·q^{ii}.
/// Periodic axes along which c_i is constant (every catalog metric) get the
/// exact trigonometric second derivative, which keeps the kernel exactly
/// one-dimensional; a coefficient that varies along its own periodic axis
/// falls back to the symmetric D₁ᵀ·diag(c)·D₁ form.
pub fn assemble_laplace_beltrami(grid: &Arc<ChartGrid>) -> Result<DiscreteOperator> {
    let n = grid.n_nodes();
    let dim = grid.dim();
    let cell: f64 = grid.spacing.iter().product();

    // per-node coefficient c_i = sqrt(det q) * q^{ii} = sqrt(det q) / q_ii
    let mut coeff = vec![vec![0.0f64; n]; dim];
    for x in 0..n {
        let diag = grid.spec.metric_diag(grid.node(x))?;
        let sqrt_det = diag.iter().product::<f64>().sqrt();
        for i in 0..dim {
            coeff[i][x] = sqrt_det / diag[i];
        }
    }

    let mut triplets: Vec<(usize, usize, Complex64)> = Vec::new();
    let mut any_spectral = false;
    let mut fd_radius = 0usize;

    for axis in 0..dim {
        let (spectral, reach) = axis_energy_gram(grid, axis, &coeff[axis], cell, &mut triplets)?;
        any_spectral |= spectral;
        fd_radius = fd_radius.max(reach);
    }

    // -Δ = W^{-1} Σ_i Tᵀ M T ; flip sign to store Δ itself.
    let a = CsrMatrix::from_triplets(n, &triplets);
    let w_inv: Vec<Complex64> = grid
        .weights
        .iter()
        .map(|&w| Complex64::new(-1.0 / w, 0.0))
        .collect();
    let matrix = a.scale_rows(&w_inv);

    Ok(DiscreteOperator {
        matrix,
        grid: grid.clone(),
        hermitian_wrt_measure: true,
        stencil_radius: if any_spectral { None } else { Some(fd_radius) },
    })
}

/// One axis' contribution Tᵀ·diag(m)·T to the Dirichlet energy, scattered
/// into `triplets`. `coeff_ax` holds the per-node coefficient √(det q)·q^(axis,axis).
/// Returns (used a spectral matrix, finite-difference coupling reach).
fn axis_energy_gram(
    grid: &Arc<ChartGrid>,
    axis: usize,
    coeff_ax: &[f64],
    cell: f64,
    triplets: &mut Vec<(usize, usize, Complex64)>,
) -> Result<(bool, usize)> {
    let dim = grid.dim();
    let n_ax = grid.points_per_axis[axis];
    let lines = grid.lines(axis);
    let periodic = grid.spec.coords[axis].bc == BoundaryKind::Periodic;

    if periodic {
        // is c constant along this axis (all lines)?
        let constant = lines.iter().all(|line| {
            let c0 = coeff_ax[line[0]];
            line.iter()
                .all(|&x| (coeff_ax[x] - c0).abs() <= 1e-11 * (c0.abs() + 1.0))
        });
        let len = grid.spec.coords[axis].range();
        if constant {
            let s = fourier_neg_d2(n_ax, len);
            for line in &lines {
                let c_line = coeff_ax[line[0]] * cell;
                for (a, &ra) in line.iter().enumerate() {
                    for (b, &rb) in line.iter().enumerate() {
                        let v = c_line * s[(a, b)];
                        if v != 0.0 {
                            triplets.push((ra, rb, Complex64::new(v, 0.0)));
                        }
                    }
                }
            }
        } else {
            let d1 = fourier_d1(n_ax, len);
            for line in &lines {
                let m: Vec<f64> = line.iter().map(|&x| coeff_ax[x] * cell).collect();
                scatter_staggered(triplets, &d1, line, &m);
            }
        }
        Ok((true, 0))
    } else {
        let (lo_sing, hi_sing) = grid.singular_ends[axis];
        let bc = grid.spec.coords[axis].bc;
        let t = staggered_d1(
            n_ax,
            grid.spacing[axis],
            closure_for(bc, lo_sing),
            closure_for(bc, hi_sing),
        );
        let reach = gram_reach(&t);
        // flux coefficients live at the n+1 cell interfaces; the two
        // boundary interfaces own half dual cells
        let c_min = grid.spec.coords[axis].min;
        let h = grid.spacing[axis];
        let mut point = vec![0.0; dim];
        for line in &lines {
            let mut m = Vec::with_capacity(n_ax + 1);
            point.copy_from_slice(grid.node(line[0]));
            for l in 0..=n_ax {
                point[axis] = c_min + l as f64 * h;
                let diag = grid.spec.metric_diag_unchecked(&point);
                let sqrt_det = diag.iter().product::<f64>().sqrt();
                let v = sqrt_det / diag[axis];
                // the measure degenerates at singular chart ends: the
                // flux weight there is exactly zero
                let c = if v.is_finite() { v.max(0.0) } else { 0.0 };
                let dual = if l == 0 || l == n_ax { 0.5 } else { 1.0 };
                m.push(c * cell * dual);
            }
            scatter_staggered(triplets, &t, line, &m);
        }
        Ok((false, reach))
    }
}

/// Total squared angular momentum |L|² for the spherical-type catalog charts:
/// (θ, φ) with q = diag(1, sin²θ), where it coincides with -Δ, or (r, θ, φ)
/// with q = diag(1, r², r² sin²θ). Built from the same per-axis energy blocks
/// as the Laplacian, so [|L|², Δ] vanishes identically: the angular blocks
/// are shared and the radial block acts on a disjoint index.
pub fn assemble_orbital_casimir(grid: &Arc<ChartGrid>) -> Result<DiscreteOperator> {
    let n = grid.n_nodes();
    let dim = grid.dim();
    if dim != 2 && dim != 3 {
        return Err(GftError::DimensionUnsupported { expected: 3, got: dim });
    }
    let cell: f64 = grid.spacing.iter().product();
    let angular = if dim == 2 { vec![0usize, 1] } else { vec![1usize, 2] };

    let mut coeff = vec![vec![0.0f64; n]; dim];
    for x in 0..n {
        let diag = grid.spec.metric_diag(grid.node(x))?;
        let sqrt_det = diag.iter().product::<f64>().sqrt();
        for i in 0..dim {
            coeff[i][x] = sqrt_det / diag[i];
        }
    }

    let mut triplets: Vec<(usize, usize, Complex64)> = Vec::new();
    let mut any_spectral = false;
    let mut fd_radius = 0usize;
    for &axis in &angular {
        let (spectral, reach) = axis_energy_gram(grid, axis, &coeff[axis], cell, &mut triplets)?;
        any_spectral |= spectral;
        fd_radius = fd_radius.max(reach);
    }

    // |L|² = r² · (angular part of -Δ) = diag(r²/w) · Σ_ang TᵀMT
    let a = CsrMatrix::from_triplets(n, &triplets);
    let row_scale: Vec<Complex64> = (0..n)
        .map(|x| {
            let r2 = if dim == 3 {
                let r = grid.node(x)[0];
                r * r
            } else {
                1.0
            };
            Complex64::new(r2 / grid.weights[x], 0.0)
        })
        .collect();
    let matrix = a.scale_rows(&row_scale);

    Ok(DiscreteOperator {
        matrix,
        grid: grid.clone(),
        hermitian_wrt_measure: true,
        stencil_radius: if any_spectral { None } else { Some(fd_radius) },
    })
}

/// Scatter Tᵀ·diag(c)·T for one grid line into global triplets, with T
/// staggered (rows = interfaces) and per-interface weights `m`.
fn scatter_staggered(
    triplets: &mut Vec<(usize, usize, Complex64)>,
    t: &DMatrix<f64>,
    line: &[usize],
    m: &[f64],
) {
    let n_ax = line.len();
    debug_assert_eq!(t.ncols(), n_ax);
    debug_assert_eq!(t.nrows(), m.len());
    for l in 0..t.nrows() {
        if m[l] == 0.0 {
            continue;
        }
        for a in 0..n_ax {
            let ta = t[(l, a)];
            if ta == 0.0 {
                continue;
            }
            for b in 0..n_ax {
                let tb = t[(l, b)];
                if tb != 0.0 {
                    triplets.push((line[a], line[b], Complex64::new(m[l] * ta * tb, 0.0)));
                }
            }
        }
    }
}

/// Largest |a - b| with T[l,a], T[l,b] both nonzero for some row l — the
/// coupling reach of TᵀMT.
fn gram_reach(t: &DMatrix<f64>) -> usize {
    let mut reach = 0usize;
    for l in 0..t.nrows() {
        let support: Vec<usize> = (0..t.ncols()).filter(|&a| t[(l, a)] != 0.0).collect();
        if let (Some(&lo), Some(&hi)) = (support.first(), support.last()) {
            reach = reach.max(hi - lo);
        }
    }
    reach
}

// ---------------------------------------------------------------------------
// First-order operators
// ---------------------------------------------------------------------------

/// Assemble the symmetrized first-order operator for a real vector field K:
/// the measure-Hermitian part of -i K^j ∂_j, i.e. ½(X + X*ʷ) with
/// X = -i Σ_j diag(K^j) D_j. For a Killing field of the chart metric this is
/// a consistent discretization of the generator itself; for a general field
/// it differs by a zeroth-order divergence term.
pub fn assemble_first_order(
    grid: &Arc<ChartGrid>,
    field: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<DiscreteOperator> {
    let n = grid.n_nodes();
    let dim = grid.dim();
    let mut triplets: Vec<(usize, usize, Complex64)> = Vec::new();
    let mut any_spectral = false;
    let mut fd_radius = 0usize;

    // per-node field components
    let mut k = vec![vec![0.0f64; n]; dim];
    for x in 0..n {
        let v = field(grid.node(x));
        if v.len() != dim {
            return Err(GftError::DimensionUnsupported {
                expected: dim,
                got: v.len(),
            });
        }
        for i in 0..dim {
            k[i][x] = v[i];
        }
    }

    for axis in 0..dim {
        if k[axis].iter().all(|&v| v == 0.0) {
            continue;
        }
        let d = axis_derivative_matrix(grid, axis);
        match grid.spec.coords[axis].bc {
            BoundaryKind::Periodic => any_spectral = true,
            _ => {
                let n_ax = grid.points_per_axis[axis];
                let mut reach = 0usize;
                for l in 0..n_ax {
                    for c in 0..n_ax {
                        if d[(l, c)] != 0.0 {
                            reach = reach.max(l.abs_diff(c));
                        }
                    }
                }
                fd_radius = fd_radius.max(reach);
            }
        }
        for line in grid.lines(axis) {
            let n_ax = line.len();
            for a in 0..n_ax {
                let ka = k[axis][line[a]];
                if ka == 0.0 {
                    continue;
                }
                for b in 0..n_ax {
                    let v = d[(a, b)];
                    if v != 0.0 {
                        // X = -i K D
                        triplets.push((line[a], line[b], Complex64::new(0.0, -ka * v)));
                    }
                }
            }
        }
    }

    let x = CsrMatrix::from_triplets(n, &triplets);
    let op_x = DiscreteOperator {
        matrix: x.clone(),
        grid: grid.clone(),
        hermitian_wrt_measure: false,
        stencil_radius: None,
    };
    let adj = op_x.adjoint_wrt_measure();
    let matrix = x.add(&adj).scale(Complex64::new(0.5, 0.0));

    Ok(DiscreteOperator {
        matrix,
        grid: grid.clone(),
        hermitian_wrt_measure: true,
        stencil_radius: if any_spectral { None } else { Some(fd_radius) },
    })
}

// ---------------------------------------------------------------------------
// Locality check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Locality {
    Local {
        /// Largest coupling offset on finite-difference axes.
        fd_radius: usize,
        /// Periodic axes coupled beyond the stencil radius: dense tangential
        /// coupling from spectral differentiation. Such an operator acts like
        /// a stencil across axes but carries an order-1 pseudodifferential
        /// symbol along these, hence "pseudo-local".
        pseudo_local_axes: Vec<usize>,
    },
    NonLocal {
        /// Fraction of significant entries violating the stencil criterion.
        violation_fraction: f64,
    },
}

/// Decide whether an operator is a stencil (local), a stencil except for
/// spectral differentiation along single periodic axes (pseudo-local), or
/// genuinely non-local.
///
/// An entry (r, c) is admissible when its index offsets on every
/// finite-difference (bounded) axis are at most `r_max` and at most one
/// periodic axis carries a nonzero offset. Entries below 1e-12 of the max
/// magnitude are ignored.
pub fn locality_check(op: &DiscreteOperator, r_max: usize) -> Locality {
    let grid = &op.grid;
    let dim = grid.dim();
    let tol = 1e-12 * op.matrix.max_abs();
    let periodic: Vec<bool> = grid
        .spec
        .coords
        .iter()
        .map(|c| c.bc == BoundaryKind::Periodic)
        .collect();

    let mut fd_radius = 0usize;
    let mut pseudo = vec![false; dim];
    let mut significant = 0usize;
    let mut violations = 0usize;

    for r in 0..op.matrix.n {
        let mr = grid.multi_index(r);
        let (cols, vals) = op.matrix.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if v.norm() <= tol {
                continue;
            }
            significant += 1;
            let mc = grid.multi_index(c);
            let mut spectral_touched = 0usize;
            let mut ok = true;
            for ax in 0..dim {
                let n_ax = grid.points_per_axis[ax];
                let raw = mr[ax].abs_diff(mc[ax]);
                let off = if periodic[ax] {
                    raw.min(n_ax - raw)
                } else {
                    raw
                };
                if off == 0 {
                    continue;
                }
                if periodic[ax] {
                    spectral_touched += 1;
                    if off > r_max {
                        pseudo[ax] = true;
                    } else {
                        fd_radius = fd_radius.max(off);
                    }
                } else {
                    if off > r_max {
                        ok = false;
                    }
                    fd_radius = fd_radius.max(off.min(r_max));
                }
            }
            if spectral_touched > 1 {
                ok = false;
            }
            if !ok {
                violations += 1;
            }
        }
    }

    if violations > 0 {
        Locality::NonLocal {
            violation_fraction: violations as f64 / significant.max(1) as f64,
        }
    } else {
        Locality::Local {
            fd_radius,
            pseudo_local_axes: (0..dim).filter(|&ax| pseudo[ax]).collect(),
        }
    }
}
