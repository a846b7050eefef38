//! Eigendecomposition of measure-Hermitian operators, degeneracy clustering,
//! and the forward/inverse transform built on the eigenbasis.
//!
//! The generalized symmetric problem A v = λ v (A Hermitian w.r.t. the
//! weighted inner product) is reduced to an ordinary Hermitian problem for
//! B = W^{1/2} A W^{-1/2}; eigenvectors transform back as v = W^{-1/2} u and
//! are re-orthonormalized per degenerate cluster in the weighted inner
//! product itself.

use crate::error::{GftError, Result};
use crate::grid::ChartGrid;
use crate::op::DiscreteOperator;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::sync::Arc;

/// Above this many unknowns the dense path is refused under `Method::Auto`
/// and shift-invert Lanczos computes a partial spectrum instead.
pub const DENSE_LIMIT: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Dense below `DENSE_LIMIT`, Lanczos above.
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone)]
pub struct EigOptions {
    pub method: Method,
    /// Absolute gap below which adjacent eigenvalues share a cluster.
    /// `None` uses max(1e-6, 1e-8·|λ|).
    pub cluster_tol: Option<f64>,
    /// Number of lowest eigenpairs to keep. The dense path computes the full
    /// spectrum and truncates; Lanczos converges this many from below.
    pub n_eigs: Option<usize>,
    pub max_iter: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            method: Method::Auto,
            cluster_tol: None,
            n_eigs: None,
            max_iter: 600,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DegeneracyCluster {
    /// Representative eigenvalue (mean over the cluster).
    pub lambda: f64,
    /// Indices into the decomposition's eigenvalue/vector arrays.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub grid: Arc<ChartGrid>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `vectors[k]` is the k-th eigenvector, orthonormal in the weighted
    /// inner product, with a deterministic phase (largest-magnitude entry
    /// real positive).
    pub vectors: Vec<Vec<Complex64>>,
    pub clusters: Vec<DegeneracyCluster>,
    /// True when the decomposition spans the whole discrete space.
    pub complete: bool,
}

/// Coefficients of a field in the eigenbasis of a decomposition. Carries the
/// eigenvalue list as a fingerprint so a mismatched inverse is rejected.
#[derive(Debug, Clone)]
pub struct GftCoefficients {
    pub lambda: Vec<f64>,
    pub values: Vec<Complex64>,
}

fn default_cluster_tol(lambda: f64) -> f64 {
    (1e-8 * lambda.abs()).max(1e-6)
}

/// Group sorted eigenvalues into clusters; a split whose gap is within a
/// factor 2 of the threshold is reported as ambiguous rather than silently
/// chosen.
fn cluster_eigenvalues(ev: &[f64], tol: Option<f64>) -> Result<Vec<DegeneracyCluster>> {
    let mut clusters: Vec<DegeneracyCluster> = Vec::new();
    let mut start = 0usize;
    for k in 0..ev.len() {
        let is_last = k + 1 == ev.len();
        if !is_last {
            let gap = ev[k + 1] - ev[k];
            let t = tol.unwrap_or_else(|| default_cluster_tol(ev[k + 1].abs().max(ev[k].abs())));
            if gap <= t {
                continue; // same cluster
            }
            if gap <= 2.0 * t {
                return Err(GftError::ClusterAmbiguity {
                    lambda: ev[k + 1],
                    gap,
                    tol: t,
                });
            }
        }
        let indices: Vec<usize> = (start..=k).collect();
        let lambda = indices.iter().map(|&i| ev[i]).sum::<f64>() / indices.len() as f64;
        clusters.push(DegeneracyCluster { lambda, indices });
        start = k + 1;
    }
    Ok(clusters)
}

pub fn eig_decompose(op: &DiscreteOperator, opts: &EigOptions) -> Result<SpectralDecomposition> {
    if !op.hermitian_wrt_measure {
        return Err(GftError::ConvergenceFailure(
            "eigendecomposition requires a measure-Hermitian operator".into(),
        ));
    }
    let n = op.n();
    let method = match opts.method {
        Method::Auto => {
            if n <= DENSE_LIMIT {
                Method::Dense
            } else {
                Method::Lanczos
            }
        }
        m => m,
    };
    match method {
        Method::Dense => eig_dense(op, opts),
        Method::Lanczos => eig_lanczos(op, opts),
        Method::Auto => unreachable!(),
    }
}

/// W^{±1/2} scaling vectors.
fn half_weights(grid: &ChartGrid) -> (Vec<f64>, Vec<f64>) {
    let ws: Vec<f64> = grid.weights.iter().map(|&w| w.sqrt()).collect();
    let wsi: Vec<f64> = ws.iter().map(|&s| 1.0 / s).collect();
    (ws, wsi)
}

fn eig_dense(op: &DiscreteOperator, opts: &EigOptions) -> Result<SpectralDecomposition> {
    let n = op.n();
    let grid = &op.grid;
    let (ws, wsi) = half_weights(grid);

    let a = op.matrix.to_dense();
    let mut b = DMatrix::<Complex64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            b[(r, c)] = a[(r, c)] * (ws[r] * wsi[c]);
        }
    }
    // symmetrize away assembly roundoff
    let bh = b.adjoint();
    let b = (b + bh).scale(0.5);

    let real = b.iter().all(|z| z.im.abs() <= 1e-14 * (1.0 + z.re.abs()));
    let (mut ev, mut vecs): (Vec<f64>, Vec<Vec<Complex64>>) = if real {
        let mut buf = vec![0.0f64; n * n];
        for c in 0..n {
            for r in 0..n {
                buf[c * n + r] = b[(r, c)].re;
            }
        }
        let ev = crate::lapack::eigh_real(&mut buf, n)?;
        let vecs: Vec<Vec<Complex64>> = (0..n)
            .map(|k| {
                (0..n)
                    .map(|i| Complex64::new(buf[k * n + i] * wsi[i], 0.0))
                    .collect()
            })
            .collect();
        (ev, vecs)
    } else {
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        for c in 0..n {
            for r in 0..n {
                buf[c * n + r] = b[(r, c)];
            }
        }
        let ev = crate::lapack::eigh_complex(&mut buf, n)?;
        let vecs: Vec<Vec<Complex64>> = (0..n)
            .map(|k| (0..n).map(|i| buf[k * n + i] * wsi[i]).collect())
            .collect();
        (ev, vecs)
    };

    // LAPACK returns ascending eigenvalues; keep the explicit sort as a
    // guard so downstream clustering can rely on the order unconditionally
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| ev[i].partial_cmp(&ev[j]).expect("finite eigenvalues"));
    ev = order.iter().map(|&i| ev[i]).collect();
    vecs = order.iter().map(|&i| std::mem::take(&mut vecs[i])).collect();

    // requested window: keep the lowest k pairs (may cut a multiplet at the
    // window edge, like any partial decomposition)
    let keep = opts.n_eigs.unwrap_or(n).min(n);
    ev.truncate(keep);
    vecs.truncate(keep);

    finish_decomposition(grid.clone(), ev, vecs, keep == n, opts)
}

/// Orthonormalize per cluster in the weighted inner product, fix phases,
/// and cluster.
fn finish_decomposition(
    grid: Arc<ChartGrid>,
    eigenvalues: Vec<f64>,
    mut vectors: Vec<Vec<Complex64>>,
    complete: bool,
    opts: &EigOptions,
) -> Result<SpectralDecomposition> {
    let clusters = cluster_eigenvalues(&eigenvalues, opts.cluster_tol)?;
    for cl in &clusters {
        // modified Gram–Schmidt within the cluster
        for (pos, &k) in cl.indices.iter().enumerate() {
            for &j in &cl.indices[..pos] {
                let (vj, vk) = borrow_two(&mut vectors, j, k);
                let proj = grid.inner_w(vj, vk);
                for i in 0..vk.len() {
                    vk[i] -= proj * vj[i];
                }
            }
            let nrm = grid.norm_w(&vectors[k]);
            if nrm <= 0.0 {
                return Err(GftError::ConvergenceFailure(format!(
                    "rank collapse while orthonormalizing cluster at λ = {}",
                    cl.lambda
                )));
            }
            for z in &mut vectors[k] {
                *z /= nrm;
            }
        }
    }
    for v in &mut vectors {
        canonical_phase(v);
    }
    Ok(SpectralDecomposition {
        grid,
        eigenvalues,
        vectors,
        clusters,
        complete,
    })
}

fn borrow_two<T>(v: &mut [T], a: usize, b: usize) -> (&T, &mut T) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&lo[a], &mut hi[0])
}

/// Deterministic phase: rotate so the largest-magnitude entry (lowest index
/// on ties) is real positive.
pub(crate) fn canonical_phase(v: &mut [Complex64]) {
    let mut best = 0usize;
    let mut best_norm = 0.0f64;
    for (i, z) in v.iter().enumerate() {
        let nz = z.norm();
        if nz > best_norm * (1.0 + 1e-12) {
            best = i;
            best_norm = nz;
        }
    }
    if best_norm == 0.0 {
        return;
    }
    let phase = v[best] / best_norm;
    let rot = phase.conj();
    for z in v.iter_mut() {
        *z *= rot;
    }
}

// ---------------------------------------------------------------------------
// Shift-invert Lanczos (partial spectrum, large grids)
// ---------------------------------------------------------------------------

fn eig_lanczos(op: &DiscreteOperator, opts: &EigOptions) -> Result<SpectralDecomposition> {
    let n = op.n();
    let grid = &op.grid;
    let n_eigs = opts.n_eigs.unwrap_or(50).min(n);
    let (ws, wsi) = half_weights(grid);

    // B = W^{1/2} A W^{-1/2}; shift σ below the spectrum of interest.
    // Operators here are semi-bounded (Laplacians ≤ 0, so -Δ ≥ 0); a fixed
    // σ = -1 stays clear of the spectrum while keeping 1/(λ-σ) well spread
    // over the low end.
    let sigma = Complex64::new(-1.0, 0.0);
    let a = op.matrix.to_dense();
    let mut shifted = DMatrix::<Complex64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            shifted[(r, c)] = a[(r, c)] * (ws[r] * wsi[c]);
        }
    }
    let sh = shifted.adjoint();
    let mut shifted = (shifted + sh).scale(0.5);
    let b_mat = shifted.clone();
    for i in 0..n {
        shifted[(i, i)] -= sigma;
    }
    let lu = shifted.lu();

    // Single-vector Lanczos with full reorthogonalization converges to each
    // distinct eigenvalue once, so degenerate multiplets need deflated
    // restarts: converged eigenvectors are locked and projected out of every
    // later run, and each run then contributes at least one new vector per
    // multiplet it touches. Candidates are accepted only on a direct
    // residual check, never on the Ritz estimate alone.
    let mut locked_u: Vec<DVector<Complex64>> = Vec::new();
    let mut locked_ev: Vec<f64> = Vec::new();
    let mut stagnant_runs = 0usize;
    let mut run = 0usize;

    loop {
        // the spectrum below the provisional cut is closed only when a fresh
        // deflated run finds nothing new there — that is what saturates
        // degenerate multiplets
        let cut = if locked_ev.len() >= n_eigs {
            let mut sorted = locked_ev.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Some(sorted[n_eigs - 1])
        } else {
            None
        };
        if stagnant_runs >= 2 {
            if cut.is_some() {
                break; // closed: repeated runs added nothing anywhere
            }
            return Err(GftError::ConvergenceFailure(format!(
                "Lanczos stalled with {}/{} eigenpairs",
                locked_ev.len(),
                n_eigs
            )));
        }
        let remaining = n_eigs.saturating_sub(locked_ev.len());
        let steps = (2 * remaining + 40)
            .min(n.saturating_sub(locked_ev.len()))
            .min(opts.max_iter);
        if steps == 0 {
            stagnant_runs += 1;
            run += 1;
            continue;
        }

        // seeded per-run start vector, deflated against locked vectors
        let mut q = DVector::<Complex64>::from_fn(n, |i, _| {
            let h = (i as u64)
                .wrapping_mul(0x9E3779B97F4A7C15)
                .wrapping_add((run as u64).wrapping_mul(0xD1B54A32D192ED03));
            Complex64::new(((h >> 16) & 0xFFFF) as f64 / 65536.0 - 0.5, 0.0)
        });
        for u in &locked_u {
            let c = u.dotc(&q);
            q -= u.scale_complex(c);
        }
        let qn = q.norm();
        if qn < 1e-12 {
            stagnant_runs += 1;
            run += 1;
            continue;
        }
        q /= Complex64::new(qn, 0.0);

        let mut qs: Vec<DVector<Complex64>> = vec![q];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        for j in 0..steps {
            let z = lu
                .solve(&qs[j])
                .ok_or_else(|| GftError::ConvergenceFailure("singular shifted operator".into()))?;
            let alpha = qs[j].dotc(&z).re;
            let mut r = z - qs[j].scale(alpha);
            if j > 0 {
                r -= qs[j - 1].scale(betas[j - 1]);
            }
            for _ in 0..2 {
                for u in &locked_u {
                    let c = u.dotc(&r);
                    r -= u.scale_complex(c);
                }
                for qk in &qs {
                    let c = qk.dotc(&r);
                    r -= qk.scale_complex(c);
                }
            }
            alphas.push(alpha);
            let beta = r.norm();
            if j + 1 == steps || beta < 1e-13 {
                break;
            }
            betas.push(beta);
            qs.push(r / Complex64::new(beta, 0.0));
        }

        let m = alphas.len();
        let mut tri = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            tri[(i, i)] = alphas[i];
            if i + 1 < m {
                tri[(i, i + 1)] = betas[i];
                tri[(i + 1, i)] = betas[i];
            }
        }
        let te = nalgebra::SymmetricEigen::new(tri);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| te.eigenvalues[j].partial_cmp(&te.eigenvalues[i]).unwrap());

        let mut new_this_run = 0usize;
        let mut new_below_cut = 0usize;
        for &ri in &order {
            let theta = te.eigenvalues[ri];
            if theta.abs() < 1e-14 {
                continue;
            }
            let lambda = sigma.re + 1.0 / theta;
            let mut u = DVector::<Complex64>::zeros(n);
            for (k, qk) in qs.iter().enumerate() {
                u += qk.scale(te.eigenvectors[(k, ri)]);
            }
            // deflate and normalize (guards roundoff leakage into locked space)
            for lu_vec in &locked_u {
                let c = lu_vec.dotc(&u);
                u -= lu_vec.scale_complex(c);
            }
            let un = u.norm();
            if un < 1e-8 {
                continue;
            }
            u /= Complex64::new(un, 0.0);
            // direct residual check in B-space
            let bu = &b_mat * &u;
            let resid = (&bu - u.scale(lambda)).norm();
            if resid <= 1e-9 * lambda.abs().max(1.0) {
                if cut.map_or(true, |c| lambda < c - 1e-10) {
                    new_below_cut += 1;
                }
                locked_u.push(u);
                locked_ev.push(lambda);
                new_this_run += 1;
            }
        }
        // once the count is met, only discoveries below the provisional cut
        // keep the search open (they mean a multiplet there was unsaturated)
        let progress = if cut.is_some() { new_below_cut > 0 } else { new_this_run > 0 };
        stagnant_runs = if progress { 0 } else { stagnant_runs + 1 };
        run += 1;
        if run > n_eigs + 20 {
            return Err(GftError::ConvergenceFailure(format!(
                "Lanczos exceeded restart budget with {}/{} eigenpairs",
                locked_ev.len(),
                n_eigs
            )));
        }
    }

    // ascending in λ; back-transform v = W^{-1/2} u
    let mut order: Vec<usize> = (0..locked_ev.len()).collect();
    order.sort_by(|&i, &j| locked_ev[i].partial_cmp(&locked_ev[j]).unwrap());
    order.truncate(n_eigs);
    let ev: Vec<f64> = order.iter().map(|&i| locked_ev[i]).collect();
    let vecs: Vec<Vec<Complex64>> = order
        .iter()
        .map(|&i| (0..n).map(|r| locked_u[i][r] * wsi[r]).collect())
        .collect();

    finish_decomposition(grid.clone(), ev, vecs, false, opts)
}

trait ScaleComplex {
    fn scale_complex(&self, c: Complex64) -> Self;
}
impl ScaleComplex for DVector<Complex64> {
    fn scale_complex(&self, c: Complex64) -> Self {
        self.map(|z| z * c)
    }
}

// ---------------------------------------------------------------------------
// Transform
// ---------------------------------------------------------------------------

/// Forward transform: coefficients φ_k = <v_k, ψ>_w.
pub fn gft_forward(dec: &SpectralDecomposition, psi: &[Complex64]) -> Result<GftCoefficients> {
    if psi.len() != dec.grid.n_nodes() {
        return Err(GftError::GridMismatch);
    }
    let values: Vec<Complex64> = dec
        .vectors
        .iter()
        .map(|v| dec.grid.inner_w(v, psi))
        .collect();
    Ok(GftCoefficients {
        lambda: dec.eigenvalues.clone(),
        values,
    })
}

/// Inverse transform: ψ = Σ_k φ_k v_k. The coefficient fingerprint must
/// match the decomposition exactly.
pub fn gft_inverse(dec: &SpectralDecomposition, phi: &GftCoefficients) -> Result<Vec<Complex64>> {
    if phi.lambda.len() != dec.eigenvalues.len()
        || phi
            .lambda
            .iter()
            .zip(&dec.eigenvalues)
            .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err(GftError::LabelMismatch(
            "coefficient labels do not match this decomposition".into(),
        ));
    }
    let n = dec.grid.n_nodes();
    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    for (phi_k, v) in phi.values.iter().zip(&dec.vectors) {
        for i in 0..n {
            psi[i] += phi_k * v[i];
        }
    }
    Ok(psi)
}

/// Relative Parseval defect |‖ψ‖²_w - Σ|φ|²| / ‖ψ‖²_w.
pub fn parseval_defect(dec: &SpectralDecomposition, psi: &[Complex64]) -> Result<f64> {
    let phi = gft_forward(dec, psi)?;
    let norm2 = dec.grid.inner_w(psi, psi).re;
    let sum2: f64 = phi.values.iter().map(|z| z.norm_sqr()).sum();
    Ok((norm2 - sum2).abs() / norm2.max(f64::MIN_POSITIVE))
}

/// ‖ψ - V V^H W ψ‖_w / ‖ψ‖_w. Demands a complete decomposition — a partial
/// spectrum cannot certify completeness.
pub fn completeness_residual(dec: &SpectralDecomposition, psi: &[Complex64]) -> Result<f64> {
    if !dec.complete {
        return Err(GftError::RequiresFullSpectrum {
            have: dec.vectors.len(),
            need: dec.grid.n_nodes(),
        });
    }
    let phi = gft_forward(dec, psi)?;
    let back = gft_inverse(dec, &phi)?;
    let diff: Vec<Complex64> = psi.iter().zip(&back).map(|(a, b)| a - b).collect();
    let nrm = dec.grid.norm_w(psi);
    Ok(dec.grid.norm_w(&diff) / nrm.max(f64::MIN_POSITIVE))
}

/// Replace the eigenvectors of one cluster by V·U for a unitary U — a
/// change of fiber gauge. The projector onto the cluster is invariant.
pub fn fiber_rotate(
    dec: &SpectralDecomposition,
    cluster: usize,
    u: &DMatrix<Complex64>,
) -> Result<SpectralDecomposition> {
    let cl = &dec.clusters[cluster];
    let d = cl.indices.len();
    if u.nrows() != d || u.ncols() != d {
        return Err(GftError::LabelMismatch(format!(
            "rotation is {}x{}, cluster has dimension {d}",
            u.nrows(),
            u.ncols()
        )));
    }
    let dev = (u.adjoint() * u - DMatrix::<Complex64>::identity(d, d))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if dev > 1e-8 {
        return Err(GftError::NotUnitary(dev));
    }
    let n = dec.grid.n_nodes();
    let mut out = dec.clone();
    for (col, &k) in cl.indices.iter().enumerate() {
        let mut newv = vec![Complex64::new(0.0, 0.0); n];
        for (row, &j) in cl.indices.iter().enumerate() {
            let c = u[(row, col)];
            for i in 0..n {
                newv[i] += c * dec.vectors[j][i];
            }
        }
        out.vectors[k] = newv;
    }
    Ok(out)
}

/// The weighted projector P = Σ_{k∈cluster} v_k v_k^H W as a dense matrix —
/// the gauge-invariant object attached to a degenerate eigenvalue.
pub fn cluster_projector(dec: &SpectralDecomposition, cluster: usize) -> DMatrix<Complex64> {
    let n = dec.grid.n_nodes();
    let mut p = DMatrix::<Complex64>::zeros(n, n);
    for &k in &dec.clusters[cluster].indices {
        let v = &dec.vectors[k];
        for r in 0..n {
            for c in 0..n {
                p[(r, c)] += v[r] * v[c].conj() * dec.grid.weights[c];
            }
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::manifold::{CatalogId, ManifoldSpec};
    use crate::op::assemble_laplace_beltrami;
    use crate::sparse::CsrMatrix;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn neg_laplace(id: CatalogId, res: &[usize]) -> (Arc<ChartGrid>, DiscreteOperator) {
        let spec = ManifoldSpec::catalog(id);
        let g = build_grid(&spec, res).unwrap();
        let lap = assemble_laplace_beltrami(&g).unwrap();
        let neg = lap.scaled(Complex64::new(-1.0, 0.0));
        (g, neg)
    }

    /// Independent oracle: eigenvalues of -Δ on the discrete 2-torus with
    /// the trigonometric second derivative are m̃² + ñ² over the mode
    /// lattice, with m̃ ∈ {-N/2+1..N/2-1} each once and N/2 once.
    fn torus_lattice(n: usize) -> Vec<f64> {
        let modes: Vec<i64> = (-(n as i64) / 2 + 1..=(n as i64) / 2).collect();
        let mut ev = Vec::with_capacity(n * n);
        for &m in &modes {
            for &k in &modes {
                ev.push((m * m + k * k) as f64);
            }
        }
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    #[test]
    fn torus_spectrum_matches_lattice_oracle() {
        let (_, op) = neg_laplace(CatalogId::Torus2, &[16, 16]);
        let dec = eig_decompose(&op, &EigOptions::default()).unwrap();
        let oracle = torus_lattice(16);
        assert_eq!(dec.eigenvalues.len(), oracle.len());
        for (a, b) in dec.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // lowest 13: 0 once, 1 four times, 2 four times, 4 four times
        let first: Vec<f64> = dec.eigenvalues.iter().take(13).copied().collect();
        let want = [0., 1., 1., 1., 1., 2., 2., 2., 2., 4., 4., 4., 4.];
        for (a, b) in first.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn circle_clusters() {
        let (_, op) = neg_laplace(CatalogId::Circle, &[8]);
        let dec = eig_decompose(&op, &EigOptions::default()).unwrap();
        let sizes: Vec<usize> = dec.clusters.iter().map(|c| c.indices.len()).collect();
        assert_eq!(sizes, vec![1, 2, 2, 2, 1]);
        assert_relative_eq!(dec.clusters[3].lambda, 9.0, epsilon = 1e-9);
    }

    #[test]
    fn eigenvectors_are_weighted_orthonormal() {
        let (g, op) = neg_laplace(CatalogId::Sphere2, &[8, 12]);
        let dec = eig_decompose(&op, &EigOptions::default()).unwrap();
        for a in 0..dec.vectors.len() {
            for b in a..dec.vectors.len() {
                let ip = g.inner_w(&dec.vectors[a], &dec.vectors[b]);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (ip - Complex64::new(want, 0.0)).norm() < 1e-9,
                    "<v{a}, v{b}> = {ip}"
                );
            }
        }
    }

    #[test]
    fn parseval_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (id, res) in [
            (CatalogId::Torus2, vec![12usize, 12]),
            (CatalogId::Sphere2, vec![8, 12]),
            (CatalogId::Interval, vec![24]),
        ] {
            let (g, op) = neg_laplace(id, &res);
            let dec = eig_decompose(&op, &EigOptions::default()).unwrap();
            for _ in 0..5 {
                let psi = g.random_band_limited(&mut rng);
                let defect = parseval_defect(&dec, &psi).unwrap();
                assert!(defect < 1e-10, "{id:?}: parseval defect {defect}");
                let resid = completeness_residual(&dec, &psi).unwrap();
                assert!(resid < 1e-9, "{id:?}: completeness residual {resid}");
            }
        }
    }

    #[test]
    fn mismatches_are_rejected() {
        let (_, op) = neg_laplace(CatalogId::Circle, &[8]);
        let dec = eig_decompose(&op, &EigOptions::default()).unwrap();
        let bad = vec![Complex64::new(1.0, 0.0); 9];
        assert!(matches!(gft_forward(&dec, &bad), Err(GftError::GridMismatch)));

        let (_, op2) = neg_laplace(CatalogId::Circle, &[12]);
        let dec2 = eig_decompose(&op2, &EigOptions::default()).unwrap();
        let psi = vec![Complex64::new(1.0, 0.0); 12];
        let phi2 = gft_forward(&dec2, &psi).unwrap();
        assert!(matches!(
            gft_inverse(&dec, &phi2),
            Err(GftError::LabelMismatch(_))
        ));
    }

    #[test]
    fn fiber_rotation_preserves_projector() {
        let (_, op) = neg_laplace(CatalogId::Circle, &[8]);
        let dec = eig_decompose(&op, &EigOptions::default()).unwrap();
        // cluster 1 is the two-fold λ = 1 pair; rotate by a unitary that
        // mixes the pair and carries a phase
        let th = 0.7f64;
        let u = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(th.cos(), 0.0),
                -Complex64::new(0.0, 1.0) * th.sin(),
                Complex64::new(th.sin(), 0.0),
                Complex64::new(0.0, 1.0) * th.cos(),
            ],
        );
        let dev = (u.adjoint() * &u - DMatrix::<Complex64>::identity(2, 2))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12, "test unitary is broken: {dev}");

        let p_before = cluster_projector(&dec, 1);
        let rot = fiber_rotate(&dec, 1, &u).unwrap();
        let p_after = cluster_projector(&rot, 1);
        let diff = (&p_before - &p_after)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "projector moved by {diff}");

        // rotated vectors are still orthonormal and still eigenvectors
        let g = &dec.grid;
        let v0 = &rot.vectors[1];
        let av0 = op.apply(v0);
        for i in 0..v0.len() {
            assert!((av0[i] - v0[i]).norm() < 1e-8); // λ = 1
        }
        assert_relative_eq!(g.norm_w(v0), 1.0, epsilon = 1e-10);

        // non-unitary input is rejected
        let bad = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        assert!(matches!(
            fiber_rotate(&dec, 1, &bad),
            Err(GftError::NotUnitary(_))
        ));
    }

    #[test]
    fn cluster_ambiguity_detected() {
        // diagonal operator with a gap of 1.5·tol right at the threshold
        let spec = ManifoldSpec::catalog(CatalogId::Circle);
        let g = build_grid(&spec, &[4]).unwrap();
        let vals = [0.0, 1.5e-6, 10.0, 20.0];
        let trip: Vec<(usize, usize, Complex64)> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, i, Complex64::new(v, 0.0)))
            .collect();
        let op = DiscreteOperator {
            matrix: CsrMatrix::from_triplets(4, &trip),
            grid: g,
            hermitian_wrt_measure: true,
            stencil_radius: Some(0),
        };
        let opts = EigOptions {
            cluster_tol: Some(1e-6),
            ..Default::default()
        };
        match eig_decompose(&op, &opts) {
            Err(GftError::ClusterAmbiguity { gap, tol, .. }) => {
                assert!(gap > tol && gap <= 2.0 * tol);
            }
            other => panic!("expected ambiguity, got {other:?}"),
        }
        // a clearly separated tolerance resolves it
        let opts = EigOptions {
            cluster_tol: Some(1e-7),
            ..Default::default()
        };
        let dec = eig_decompose(&op, &opts).unwrap();
        assert_eq!(dec.clusters.len(), 4);
    }

    #[test]
    fn decomposition_is_deterministic() {
        let (_, op) = neg_laplace(CatalogId::Torus2, &[10, 10]);
        let d1 = eig_decompose(&op, &EigOptions::default()).unwrap();
        let d2 = eig_decompose(&op, &EigOptions::default()).unwrap();
        assert_eq!(d1.eigenvalues, d2.eigenvalues);
        for (a, b) in d1.vectors.iter().zip(&d2.vectors) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lanczos_matches_dense_low_spectrum() {
        let (_, op) = neg_laplace(CatalogId::Torus2, &[20, 20]);
        let dense = eig_decompose(&op, &EigOptions::default()).unwrap();
        let opts = EigOptions {
            method: Method::Lanczos,
            n_eigs: Some(30),
            ..Default::default()
        };
        let partial = eig_decompose(&op, &opts).unwrap();
        assert!(!partial.complete);
        assert!(partial.eigenvalues.len() >= 25);
        for k in 0..25 {
            assert!(
                (partial.eigenvalues[k] - dense.eigenvalues[k]).abs() < 1e-8,
                "λ_{k}: {} vs {}",
                partial.eigenvalues[k],
                dense.eigenvalues[k]
            );
        }
        // eigenvector quality: residual ‖Av - λv‖_w small
        for k in 0..10 {
            let v = &partial.vectors[k];
            let av = op.apply(v);
            let lam = partial.eigenvalues[k];
            let diff: Vec<Complex64> = av.iter().zip(v).map(|(a, b)| a - lam * b).collect();
            let resid = partial.grid.norm_w(&diff);
            assert!(resid < 1e-8, "Ritz residual {resid} at k={k}");
        }
        // completeness check must refuse a partial spectrum
        let psi = vec![Complex64::new(1.0, 0.0); 400];
        assert!(matches!(
            completeness_residual(&partial, &psi),
            Err(GftError::RequiresFullSpectrum { .. })
        ));
    }

    #[test]
    fn complex_hermitian_path() {
        // a Hermitian operator with genuinely complex entries: eigenvalues
        // of [[2, i], [-i, 2]] are 1 and 3
        let spec = ManifoldSpec::catalog(CatalogId::Circle);
        let g = build_grid(&spec, &[4]).unwrap();
        // embed the 2x2 block twice on a 4-node grid (weights are uniform
        // so measure-Hermitian = plain Hermitian)
        let i = Complex64::new(0.0, 1.0);
        let trip = vec![
            (0usize, 0usize, Complex64::new(2.0, 0.0)),
            (0, 1, i),
            (1, 0, -i),
            (1, 1, Complex64::new(2.0, 0.0)),
            (2, 2, Complex64::new(2.0, 0.0)),
            (2, 3, i),
            (3, 2, -i),
            (3, 3, Complex64::new(2.0, 0.0)),
        ];
        let op = DiscreteOperator {
            matrix: CsrMatrix::from_triplets(4, &trip),
            grid: g,
            hermitian_wrt_measure: true,
            stencil_radius: None,
        };
        let dec = eig_decompose(&op, &EigOptions::default()).unwrap();
        let want = [1.0, 1.0, 3.0, 3.0];
        for (a, b) in dec.eigenvalues.iter().zip(want.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }
}
