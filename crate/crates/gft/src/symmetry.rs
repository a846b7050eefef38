//! Symmetry operators over a chart: commutator diagnostics, joint
//! diagonalization of degenerate fibers, maximal-commuting-set search, the
//! synthetic dense commutant, and pullbacks of catalog isometries.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GftError, Result};
use crate::grid::ChartGrid;
use crate::manifold::{BoundaryKind, CatalogId};
use crate::op::{
    assemble_first_order, assemble_laplace_beltrami, assemble_orbital_casimir, fourier_shift,
    DiscreteOperator,
};
use crate::sparse::CsrMatrix;
use crate::spectral::{canonical_phase, eig_decompose, EigOptions, SpectralDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorOrigin {
    KillingVector,
    KillingTensor,
    Laplacian,
    Synthetic,
}

/// A measure-Hermitian operator participating in commutation analysis.
/// `comm_tol` is the commutation tolerance the operator can honestly meet:
/// operators built from exact trigonometric blocks commute with the
/// Laplacian to rounding (1e-8 budget), while finite-difference-built
/// coefficients commute only to truncation order (1e-5 budget).
#[derive(Debug, Clone)]
pub struct SymmetryOperator {
    pub id: String,
    /// Differential order (1 for generators of flows, 2 for quadratic
    /// invariants and the Laplacian, 0 for the non-differential synthetic
    /// operator).
    pub order: usize,
    pub op: DiscreteOperator,
    pub origin: OperatorOrigin,
    pub comm_tol: f64,
}

impl SymmetryOperator {
    pub fn new(
        id: impl Into<String>,
        order: usize,
        op: DiscreteOperator,
        origin: OperatorOrigin,
        comm_tol: f64,
    ) -> Result<Self> {
        if !op.hermitian_wrt_measure {
            return Err(GftError::ConvergenceFailure(format!(
                "symmetry operator {} must be Hermitian w.r.t. the measure",
                id.into()
            )));
        }
        Ok(SymmetryOperator { id: id.into(), order, op, origin, comm_tol })
    }

    pub fn grid(&self) -> &Arc<ChartGrid> {
        &self.op.grid
    }
}

/// Structural same-chart check: node layout and axis declarations agree.
fn same_grid(a: &ChartGrid, b: &ChartGrid) -> bool {
    a.points_per_axis == b.points_per_axis
        && a.spec.coords.len() == b.spec.coords.len()
        && a.spec
            .coords
            .iter()
            .zip(&b.spec.coords)
            .all(|(x, y)| x.min == y.min && x.max == y.max && x.bc == y.bc)
}

// ---------------------------------------------------------------------------
// Commutator diagnostics
// ---------------------------------------------------------------------------

/// Max over seeded random band-limited unit fields v of ‖(AB − BA)v‖_w.
/// Trial fields are limited to the lowest quarter of resolvable modes so the
/// measurement probes the operators, not differentiation-matrix edge noise.
pub fn commutator_norm(a: &SymmetryOperator, b: &SymmetryOperator, trials: usize) -> Result<f64> {
    if !same_grid(a.grid(), b.grid()) {
        return Err(GftError::GridMismatch);
    }
    let grid = a.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0117EA5);
    let mut worst = 0.0f64;
    for _ in 0..trials.max(1) {
        let v = grid.random_band_limited(&mut rng);
        let ab = a.op.apply(&b.op.apply(&v));
        let ba = b.op.apply(&a.op.apply(&v));
        let diff: Vec<Complex64> = ab.iter().zip(&ba).map(|(x, y)| x - y).collect();
        worst = worst.max(grid.norm_w(&diff));
    }
    Ok(worst)
}

/// Per-cluster off-fiber leakage ‖(I − P) O P‖ in the weighted norm: the
/// largest weighted singular value of O V − V (V†W O V) over each cluster's
/// orthonormal frame V. Zero exactly when every eigenvalue fiber is
/// invariant under O.
pub fn fiber_leakage(dec: &SpectralDecomposition, op: &SymmetryOperator) -> Result<Vec<f64>> {
    if !same_grid(&dec.grid, op.grid()) {
        return Err(GftError::GridMismatch);
    }
    let grid = &dec.grid;
    let mut out = Vec::with_capacity(dec.clusters.len());
    for cl in &dec.clusters {
        let d = cl.indices.len();
        let ov: Vec<Vec<Complex64>> =
            cl.indices.iter().map(|&k| op.op.apply(&dec.vectors[k])).collect();
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                m[(a, b)] = grid.inner_w(&dec.vectors[cl.indices[a]], &ov[b]);
            }
        }
        let y: Vec<Vec<Complex64>> = (0..d)
            .map(|b| {
                let mut col = ov[b].clone();
                for a in 0..d {
                    let c = m[(a, b)];
                    for (ci, vi) in col.iter_mut().zip(&dec.vectors[cl.indices[a]]) {
                        *ci -= c * vi;
                    }
                }
                col
            })
            .collect();
        let mut g = DMatrix::<Complex64>::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                g[(a, b)] = grid.inner_w(&y[a], &y[b]);
            }
        }
        let g = (g.adjoint() + g).scale(0.5);
        let top = nalgebra::SymmetricEigen::new(g)
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &e| acc.max(e));
        out.push(top.max(0.0).sqrt());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Joint diagonalization
// ---------------------------------------------------------------------------

/// Joint spectrum coordinates: axis 0 is the Laplacian eigenvalue, later
/// axes are the labels of each diagonalized operator, one tuple per
/// eigenvector in decomposition order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointLabelSpace {
    pub axes: Vec<String>,
    pub tuples: Vec<Vec<f64>>,
}

impl JointLabelSpace {
    /// Number of distinct tuples under componentwise tolerance `tol`,
    /// restricted to the tuple positions in `cols`.
    pub fn distinct_on(&self, cols: &[usize], indices: &[usize], tol: f64) -> usize {
        let mut proj: Vec<Vec<f64>> = indices
            .iter()
            .map(|&k| cols.iter().map(|&c| self.tuples[k][c]).collect())
            .collect();
        proj.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut count = 0usize;
        let mut prev: Option<&Vec<f64>> = None;
        for t in &proj {
            let same = prev
                .map(|p| p.iter().zip(t).all(|(x, y)| (x - y).abs() <= tol))
                .unwrap_or(false);
            if !same {
                count += 1;
            }
            prev = Some(t);
        }
        count
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JointDiagOptions {
    /// Two labels within this distance belong to the same sub-fiber.
    pub label_tol: f64,
    /// Acceptance bound on ‖O v − α v‖_w for every final vector.
    pub residual_tol: f64,
}

impl Default for JointDiagOptions {
    fn default() -> Self {
        JointDiagOptions { label_tol: 1e-6, residual_tol: 1e-6 }
    }
}

/// Resolve degenerate fibers with an ordered list of commuting operators:
/// inside every cluster the first operator is restricted to the fiber
/// (V†W O V), diagonalized, the fiber split by label gaps, and the rest of
/// the list applied recursively to each sub-fiber. Vectors come back rotated
/// (deterministic phase, labels ascending lexicographically within each
/// cluster) with the (λ, α₁, α₂, …) tuple per vector.
pub fn joint_diagonalize(
    dec: &SpectralDecomposition,
    ops: &[&SymmetryOperator],
    opts: &JointDiagOptions,
) -> Result<(SpectralDecomposition, JointLabelSpace)> {
    for op in ops {
        if !same_grid(&dec.grid, op.grid()) {
            return Err(GftError::GridMismatch);
        }
    }
    let mut vectors = dec.vectors.clone();
    let mut labels = vec![vec![0.0f64; ops.len()]; vectors.len()];

    for cl in &dec.clusters {
        split_fiber(&dec.grid, &mut vectors, &mut labels, &cl.indices, 0, ops, cl.lambda, opts)?;
    }
    for v in &mut vectors {
        canonical_phase(v);
    }

    let mut axes = vec!["lambda".to_string()];
    axes.extend(ops.iter().map(|o| o.id.clone()));
    let tuples: Vec<Vec<f64>> = (0..vectors.len())
        .map(|k| {
            let mut t = Vec::with_capacity(1 + ops.len());
            t.push(dec.eigenvalues[k]);
            t.extend_from_slice(&labels[k]);
            t
        })
        .collect();

    Ok((
        SpectralDecomposition {
            grid: dec.grid.clone(),
            eigenvalues: dec.eigenvalues.clone(),
            vectors,
            clusters: dec.clusters.clone(),
            complete: dec.complete,
        },
        JointLabelSpace { axes, tuples },
    ))
}

#[allow(clippy::too_many_arguments)]
fn split_fiber(
    grid: &Arc<ChartGrid>,
    vectors: &mut [Vec<Complex64>],
    labels: &mut [Vec<f64>],
    group: &[usize],
    depth: usize,
    ops: &[&SymmetryOperator],
    lambda: f64,
    opts: &JointDiagOptions,
) -> Result<()> {
    if depth == ops.len() || group.is_empty() {
        return Ok(());
    }
    let op = ops[depth];
    let d = group.len();

    let ov: Vec<Vec<Complex64>> = group.iter().map(|&k| op.op.apply(&vectors[k])).collect();
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            m[(a, b)] = grid.inner_w(&vectors[group[a]], &ov[b]);
        }
    }
    // leakage out of the fiber violates the invariant-eigenspace theorem
    let mut g = DMatrix::<Complex64>::zeros(d, d);
    let y: Vec<Vec<Complex64>> = (0..d)
        .map(|b| {
            let mut col = ov[b].clone();
            for a in 0..d {
                let c = m[(a, b)];
                for (ci, vi) in col.iter_mut().zip(&vectors[group[a]]) {
                    *ci -= c * vi;
                }
            }
            col
        })
        .collect();
    for a in 0..d {
        for b in 0..d {
            g[(a, b)] = grid.inner_w(&y[a], &y[b]);
        }
    }
    let g = (g.adjoint() + g).scale(0.5);
    let leak = nalgebra::SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &e| acc.max(e))
        .max(0.0)
        .sqrt();
    // an operator commuting within its tolerance leaks out of a fiber by at
    // most an order of magnitude more (invariant-eigenspace bound)
    let fiber_tol = 10.0 * op.comm_tol;
    if leak > fiber_tol {
        return Err(GftError::NonInvariantFiber {
            op: op.id.clone(),
            lambda,
            leak,
            tol: fiber_tol,
        });
    }

    let m = (m.adjoint() + m).scale(0.5);
    // the label gaps inside a fiber can sit barely above label_tol, so the
    // projected eigenbasis must not mix sub-eigenspaces beyond roundoff —
    // same solver as the dense path
    let mut mbuf = vec![Complex64::new(0.0, 0.0); d * d];
    for c in 0..d {
        for r in 0..d {
            mbuf[c * d + r] = m[(r, c)];
        }
    }
    let raw = crate::lapack::eigh_complex(&mut mbuf, d)?;
    let mut ord: Vec<usize> = (0..d).collect();
    ord.sort_by(|&i, &j| raw[i].partial_cmp(&raw[j]).unwrap());

    // rotate the frame and the operator images consistently
    let n = vectors[group[0]].len();
    let mut rotated: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    let mut rotated_ov: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    for &j in &ord {
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        let mut oc = vec![Complex64::new(0.0, 0.0); n];
        for a in 0..d {
            let u = mbuf[j * d + a];
            for i in 0..n {
                col[i] += u * vectors[group[a]][i];
                oc[i] += u * ov[a][i];
            }
        }
        rotated.push(col);
        rotated_ov.push(oc);
    }
    let alphas: Vec<f64> = ord.iter().map(|&j| raw[j]).collect();

    for (slot, &k) in group.iter().enumerate() {
        let resid: Vec<Complex64> = rotated_ov[slot]
            .iter()
            .zip(&rotated[slot])
            .map(|(o, v)| o - Complex64::new(alphas[slot], 0.0) * v)
            .collect();
        let r = grid.norm_w(&resid);
        if r > opts.residual_tol {
            return Err(GftError::ConvergenceFailure(format!(
                "joint eigenvector residual {r:.3e} for operator {} in the λ = {lambda} fiber",
                op.id
            )));
        }
        vectors[k] = std::mem::take(&mut rotated[slot]);
        labels[k][depth] = alphas[slot];
    }

    // recurse on label-gap sub-fibers
    let mut start = 0usize;
    for j in 0..d {
        let split = j + 1 == d || alphas[j + 1] - alphas[j] > opts.label_tol;
        if split {
            split_fiber(grid, vectors, labels, &group[start..=j], depth + 1, ops, lambda, opts)?;
            start = j + 1;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Maximal commuting set search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MasaCandidate {
    /// Ids of the member operators. The Laplacian is listed only when its
    /// eigenvalue carries information the member labels do not determine;
    /// when the members functionally determine λ it is dropped and flagged.
    pub members: Vec<String>,
    /// True when λ is a function of the member labels on the computed
    /// spectrum window (the Laplacian is "in" the set functionally).
    pub includes_laplacian_functionally: bool,
    /// Number of non-Laplacian members.
    pub rank: usize,
    /// Σ over clusters of distinct joint tuples: eigenvectors the labels
    /// tell apart. Equal to the number of computed eigenvectors when every
    /// degeneracy is resolved.
    pub resolved_degeneracy: usize,
    /// Number of computed eigenvectors (the resolution target).
    pub total_states: usize,
    /// Every proper subset of the members distinguishes strictly fewer
    /// states globally: the discrete surrogate of functional independence.
    pub independent: bool,
    /// Σ of member differential orders (ranking tiebreak).
    pub total_order: usize,
    /// Largest pairwise commutator norm measured among the full commuting
    /// set (members plus Laplacian when present).
    pub max_pairwise_commutator: f64,
    /// Largest per-cluster off-fiber leakage among members.
    pub max_fiber_leakage: f64,
}

/// Exhaustive search (catalogs are small) for maximal pairwise-commuting
/// subsets of the catalog whose members preserve every eigenvalue fiber of
/// the decomposition. Candidates are ranked by resolved degeneracy
/// (descending), then rank, then total differential order; only candidates
/// of rank ≥ `target_rank` are returned.
pub fn masa_search(
    catalog: &[SymmetryOperator],
    dec: &SpectralDecomposition,
    target_rank: usize,
) -> Result<Vec<MasaCandidate>> {
    let nv = catalog.len();
    if nv == 0 {
        return Ok(Vec::new());
    }
    if nv > 16 {
        return Err(GftError::ConvergenceFailure(
            "operator catalog too large for exhaustive subset search".into(),
        ));
    }

    // vertex admission: the fibers of the decomposition must be invariant
    let mut leakage = vec![0.0f64; nv];
    let mut admitted: Vec<usize> = Vec::new();
    for (i, op) in catalog.iter().enumerate() {
        let leaks = fiber_leakage(dec, op)?;
        leakage[i] = leaks.iter().fold(0.0f64, |a, &b| a.max(b));
        // theorem slack: an operator commuting within its tolerance leaks
        // at most an order of magnitude more
        if leakage[i] <= 10.0 * op.comm_tol {
            admitted.push(i);
        }
    }

    // pairwise commutator norms among admitted vertices
    let k = admitted.len();
    let mut comm = vec![vec![0.0f64; k]; k];
    let mut adj = vec![0u32; k];
    for a in 0..k {
        adj[a] |= 1 << a;
        for b in a + 1..k {
            let (ia, ib) = (admitted[a], admitted[b]);
            let c = commutator_norm(&catalog[ia], &catalog[ib], 4)?;
            comm[a][b] = c;
            comm[b][a] = c;
            if c <= catalog[ia].comm_tol.max(catalog[ib].comm_tol) {
                adj[a] |= 1 << b;
                adj[b] |= 1 << a;
            }
        }
    }

    // maximal cliques by bitmask enumeration
    let full: u32 = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
    let is_clique = |s: u32| -> bool {
        (0..k).all(|a| (s >> a) & 1 == 0 || s & !adj[a] == 0)
    };
    let mut cliques: Vec<u32> = Vec::new();
    for s in 1..=full {
        if !is_clique(s) {
            continue;
        }
        let extendable = (0..k).any(|v| (s >> v) & 1 == 0 && is_clique(s | (1 << v)));
        if !extendable {
            cliques.push(s);
        }
    }

    let joint_opts = JointDiagOptions::default();
    let mut out: Vec<MasaCandidate> = Vec::new();
    for &s in &cliques {
        let set: Vec<usize> = (0..k).filter(|&v| (s >> v) & 1 == 1).map(|v| admitted[v]).collect();
        let non_lap: Vec<usize> = set
            .iter()
            .copied()
            .filter(|&i| catalog[i].origin != OperatorOrigin::Laplacian)
            .collect();

        let ops: Vec<&SymmetryOperator> = non_lap.iter().map(|&i| &catalog[i]).collect();
        let (_, label_space) = joint_diagonalize(dec, &ops, &joint_opts)?;
        let all_indices: Vec<usize> = (0..label_space.tuples.len()).collect();
        let member_cols: Vec<usize> = (1..=ops.len()).collect();

        // within-cluster resolution (λ implicit: clusters are λ-fibers)
        let resolved: usize = dec
            .clusters
            .iter()
            .map(|cl| label_space.distinct_on(&member_cols, &cl.indices, joint_opts.label_tol))
            .sum();

        // functional independence: every proper subset separates strictly
        // fewer states globally
        let full_distinct = label_space.distinct_on(&member_cols, &all_indices, joint_opts.label_tol);
        let mut independent = true;
        if !member_cols.is_empty() {
            for drop in 0..member_cols.len() {
                let sub: Vec<usize> = member_cols
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != drop)
                    .map(|(_, &c)| c)
                    .collect();
                if label_space.distinct_on(&sub, &all_indices, joint_opts.label_tol) >= full_distinct
                {
                    independent = false;
                    break;
                }
            }
        }

        // does the member tuple determine λ?
        let lambda_determined = if non_lap.is_empty() {
            false
        } else {
            tuple_determines_lambda(&label_space, &member_cols, joint_opts.label_tol)
        };

        let members: Vec<String> = if non_lap.is_empty() {
            set.iter().map(|&i| catalog[i].id.clone()).collect()
        } else {
            non_lap.iter().map(|&i| catalog[i].id.clone()).collect()
        };
        let rank = members.len();
        let total_order: usize = if non_lap.is_empty() {
            set.iter().map(|&i| catalog[i].order).sum()
        } else {
            non_lap.iter().map(|&i| catalog[i].order).sum()
        };

        let mut max_comm = 0.0f64;
        for a in 0..k {
            for b in a + 1..k {
                if (s >> a) & 1 == 1 && (s >> b) & 1 == 1 {
                    max_comm = max_comm.max(comm[a][b]);
                }
            }
        }
        let max_leak = set.iter().map(|&i| leakage[i]).fold(0.0f64, f64::max);

        out.push(MasaCandidate {
            members,
            includes_laplacian_functionally: lambda_determined,
            rank,
            resolved_degeneracy: resolved,
            total_states: label_space.tuples.len(),
            independent,
            total_order,
            max_pairwise_commutator: max_comm,
            max_fiber_leakage: max_leak,
        });
    }

    out.retain(|c| c.rank >= target_rank);
    out.sort_by(|a, b| {
        b.resolved_degeneracy
            .cmp(&a.resolved_degeneracy)
            .then(a.rank.cmp(&b.rank))
            .then(a.total_order.cmp(&b.total_order))
            .then(a.members.cmp(&b.members))
    });
    Ok(out)
}

/// True when equal member tuples always share (approximately) one λ.
fn tuple_determines_lambda(space: &JointLabelSpace, member_cols: &[usize], tol: f64) -> bool {
    let mut order: Vec<usize> = (0..space.tuples.len()).collect();
    order.sort_by(|&i, &j| {
        let a: Vec<f64> = member_cols.iter().map(|&c| space.tuples[i][c]).collect();
        let b: Vec<f64> = member_cols.iter().map(|&c| space.tuples[j][c]).collect();
        a.partial_cmp(&b).unwrap()
    });
    let mut group_start = 0usize;
    for w in 1..=order.len() {
        let boundary = w == order.len() || {
            let (i, j) = (order[w - 1], order[w]);
            member_cols
                .iter()
                .any(|&c| (space.tuples[i][c] - space.tuples[j][c]).abs() > tol)
        };
        if boundary {
            let grp = &order[group_start..w];
            let lams: Vec<f64> = grp.iter().map(|&i| space.tuples[i][0]).collect();
            let lo = lams.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = lams.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-6 * (1.0 + hi.abs()) {
                return false;
            }
            group_start = w;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Synthetic commutant
// ---------------------------------------------------------------------------

/// Dense operator Σ_k α_k v_k v_k† W: acts as multiplication by α_k on the
/// k-th eigenvector. Commutes with the decomposed operator by construction
/// and is generically non-local — the counterexample showing commutation
/// alone does not make an operator geometric.
pub fn build_synthetic_commutant(
    dec: &SpectralDecomposition,
    labels: &[f64],
) -> Result<SymmetryOperator> {
    if labels.len() != dec.vectors.len() {
        return Err(GftError::LabelMismatch(format!(
            "{} labels for {} eigenvectors",
            labels.len(),
            dec.vectors.len()
        )));
    }
    let n = dec.grid.n_nodes();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for (k, v) in dec.vectors.iter().enumerate() {
        let a = labels[k];
        if a == 0.0 {
            continue;
        }
        for i in 0..n {
            let left = Complex64::new(a, 0.0) * v[i];
            if left == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                m[(i, j)] += left * v[j].conj() * dec.grid.weights[j];
            }
        }
    }
    let matrix = CsrMatrix::from_dense(&m, 0.0);
    let op = DiscreteOperator {
        matrix,
        grid: dec.grid.clone(),
        hermitian_wrt_measure: true,
        stencil_radius: None,
    };
    SymmetryOperator::new("synthetic", 0, op, OperatorOrigin::Synthetic, 1e-8)
}

// ---------------------------------------------------------------------------
// Isometry pullbacks
// ---------------------------------------------------------------------------

/// Catalog isometries with grid-exact pullbacks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum IsometryMap {
    Identity,
    /// Rigid translation along periodic axes (entries for bounded axes must
    /// be zero). On the sphere chart a shift of the second axis is the
    /// rotation about the polar axis.
    Translate { shift: Vec<f64> },
    /// Coordinate reflection of one axis about the chart midline.
    Reflect { axis: usize },
    /// Permutation of axes with identical extent, resolution, and boundary
    /// declarations (σ maps new axis a to old axis perm[a]).
    PermuteAxes { perm: Vec<usize> },
    /// Rotation of a square flat 2-torus chart by ε, realized spectrally:
    /// inside each Laplacian fiber the mode (m, n) is sent to its rotated
    /// image (m cos ε + n sin ε, −m sin ε + n cos ε) whenever that image is
    /// again a lattice mode of the fiber; the remaining modes of the fiber
    /// are matched in label order. Block-diagonal over fibers, hence
    /// commuting with Δ; this is the discrete shadow of the universal-cover
    /// rotation (each mode pairing carries a free phase, fixed here by the
    /// canonical phase convention of the eigenbasis).
    TorusRotate { eps: f64 },
}

/// Build the unitary pullback (U f)(x) = f(φ(x)) of a catalog isometry.
/// The result is checked for unitarity in the weighted inner product.
pub fn isometry_pullback(grid: &Arc<ChartGrid>, map: &IsometryMap) -> Result<DiscreteOperator> {
    let n = grid.n_nodes();
    let dim = grid.dim();
    let matrix = match map {
        IsometryMap::Identity => CsrMatrix::identity(n),
        IsometryMap::Translate { shift } => {
            if shift.len() != dim {
                return Err(GftError::NotCatalogIsometry(format!(
                    "translation needs {dim} components, got {}",
                    shift.len()
                )));
            }
            let mut u = CsrMatrix::identity(n);
            for axis in 0..dim {
                if shift[axis] == 0.0 {
                    continue;
                }
                if grid.spec.coords[axis].bc != BoundaryKind::Periodic {
                    return Err(GftError::NotCatalogIsometry(format!(
                        "axis {axis} is not periodic; only periodic axes translate"
                    )));
                }
                let s = fourier_shift(
                    grid.points_per_axis[axis],
                    grid.spec.coords[axis].range(),
                    shift[axis],
                );
                let mut trip = Vec::new();
                for line in grid.lines(axis) {
                    for (a, &ra) in line.iter().enumerate() {
                        for (b, &rb) in line.iter().enumerate() {
                            let v = s[(a, b)];
                            if v != Complex64::new(0.0, 0.0) {
                                trip.push((ra, rb, v));
                            }
                        }
                    }
                }
                u = CsrMatrix::from_triplets(n, &trip).matmul(&u);
            }
            u
        }
        IsometryMap::Reflect { axis } => {
            let ax = *axis;
            if ax >= dim {
                return Err(GftError::NotCatalogIsometry(format!(
                    "reflection axis {ax} out of range for dimension {dim}"
                )));
            }
            let n_ax = grid.points_per_axis[ax];
            let periodic = grid.spec.coords[ax].bc == BoundaryKind::Periodic;
            let mut trip = Vec::with_capacity(n);
            for i in 0..n {
                let mut mi = grid.multi_index(i);
                mi[ax] = if periodic { (n_ax - mi[ax]) % n_ax } else { n_ax - 1 - mi[ax] };
                trip.push((i, grid.flat_index(&mi), Complex64::new(1.0, 0.0)));
            }
            CsrMatrix::from_triplets(n, &trip)
        }
        IsometryMap::PermuteAxes { perm } => {
            let mut seen = vec![false; dim];
            if perm.len() != dim || perm.iter().any(|&p| p >= dim || std::mem::replace(&mut seen[p], true)) {
                return Err(GftError::NotCatalogIsometry(format!(
                    "{perm:?} is not a permutation of the {dim} axes"
                )));
            }
            for a in 0..dim {
                let p = perm[a];
                let (ca, cp) = (&grid.spec.coords[a], &grid.spec.coords[p]);
                if grid.points_per_axis[a] != grid.points_per_axis[p]
                    || ca.min != cp.min
                    || ca.max != cp.max
                    || ca.bc != cp.bc
                {
                    return Err(GftError::NotCatalogIsometry(format!(
                        "axes {a} and {p} differ in extent, resolution, or boundary kind"
                    )));
                }
            }
            let mut trip = Vec::with_capacity(n);
            for i in 0..n {
                let mi = grid.multi_index(i);
                let mapped: Vec<usize> = (0..dim).map(|a| mi[perm[a]]).collect();
                trip.push((i, grid.flat_index(&mapped), Complex64::new(1.0, 0.0)));
            }
            CsrMatrix::from_triplets(n, &trip)
        }
        IsometryMap::TorusRotate { eps } => torus_rotation_matrix(grid, *eps)?,
    };

    // unitarity in the weighted inner product: W^{-1} Uᴴ W U = I
    let w: Vec<Complex64> = grid.weights.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let wi: Vec<Complex64> = grid.weights.iter().map(|&x| Complex64::new(1.0 / x, 0.0)).collect();
    let adj_w = matrix.hermitian_transpose().scale_rows(&wi).scale_cols(&w);
    let prod = adj_w.matmul(&matrix);
    let dev = prod.add(&CsrMatrix::identity(n).scale(Complex64::new(-1.0, 0.0))).max_abs();
    if dev > 1e-8 {
        return Err(GftError::NotUnitary(dev));
    }

    Ok(DiscreteOperator {
        matrix,
        grid: grid.clone(),
        hermitian_wrt_measure: false,
        stencil_radius: None,
    })
}

/// Conjugate a symmetry operator by a pullback: U†_w O U, the operator seen
/// through the isometry. Hermiticity w.r.t. the measure is preserved when U
/// is measure-unitary.
pub fn conjugate_operator(op: &SymmetryOperator, u: &DiscreteOperator) -> Result<SymmetryOperator> {
    if !same_grid(op.grid(), &u.grid) {
        return Err(GftError::GridMismatch);
    }
    let grid = &u.grid;
    let w: Vec<Complex64> = grid.weights.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let wi: Vec<Complex64> = grid.weights.iter().map(|&x| Complex64::new(1.0 / x, 0.0)).collect();
    let adj_w = u.matrix.hermitian_transpose().scale_rows(&wi).scale_cols(&w);
    let matrix = adj_w.matmul(&op.op.matrix).matmul(&u.matrix);
    SymmetryOperator::new(
        format!("{}~", op.id),
        op.order,
        DiscreteOperator {
            matrix,
            grid: grid.clone(),
            hermitian_wrt_measure: op.op.hermitian_wrt_measure,
            stencil_radius: None,
        },
        op.origin,
        op.comm_tol,
    )
}

/// Spectral rotation pullback on the square flat 2-torus (see
/// `IsometryMap::TorusRotate`).
fn torus_rotation_matrix(grid: &Arc<ChartGrid>, eps: f64) -> Result<CsrMatrix> {
    let dim = grid.dim();
    if dim != 2
        || grid.spec.coords.iter().any(|c| c.bc != BoundaryKind::Periodic)
        || (grid.spec.coords[0].range() - grid.spec.coords[1].range()).abs() > 1e-12
        || grid.points_per_axis[0] != grid.points_per_axis[1]
    {
        return Err(GftError::NotCatalogIsometry(
            "rotation needs a square flat 2-torus chart at square resolution".into(),
        ));
    }
    // flat and isotropic metric
    let probe = [grid.node(0), grid.node(grid.n_nodes() / 2)];
    let q0 = grid.spec.metric_diag(probe[0])?;
    for p in probe {
        let q = grid.spec.metric_diag(p)?;
        if (q[0] - q[1]).abs() > 1e-12 * (1.0 + q[0].abs())
            || (q[0] - q0[0]).abs() > 1e-12 * (1.0 + q0[0].abs())
        {
            return Err(GftError::NotCatalogIsometry(
                "rotation needs a flat isotropic metric".into(),
            ));
        }
    }

    let neg_lap = assemble_laplace_beltrami(grid)?.scaled(Complex64::new(-1.0, 0.0));
    let dec = eig_decompose(&neg_lap, &EigOptions::default())?;
    let (p1, p2) = torus_momentum_pair(grid)?;
    let (adapted, labels) = joint_diagonalize(&dec, &[&p1, &p2], &JointDiagOptions::default())?;

    let n = grid.n_nodes();
    let (cos_e, sin_e) = (eps.cos(), eps.sin());
    let mut trip: Vec<(usize, usize, Complex64)> = Vec::new();
    for cl in &adapted.clusters {
        // integer mode labels of this fiber
        let mut modes: Vec<(i64, i64)> = Vec::with_capacity(cl.indices.len());
        for &k in &cl.indices {
            let (m, nn) = (labels.tuples[k][1], labels.tuples[k][2]);
            let (mr, nr) = (m.round(), nn.round());
            if (m - mr).abs() > 1e-6 || (nn - nr).abs() > 1e-6 {
                return Err(GftError::NotCatalogIsometry(format!(
                    "fiber labels ({m}, {nn}) are not lattice modes"
                )));
            }
            modes.push((mr as i64, nr as i64));
        }
        // pair each mode with its rotated image when that lands on the fiber
        let mut target: Vec<Option<usize>> = vec![None; modes.len()];
        let mut hit = vec![false; modes.len()];
        for (s, &(m, nn)) in modes.iter().enumerate() {
            let mp = m as f64 * cos_e + nn as f64 * sin_e;
            let np = -(m as f64) * sin_e + nn as f64 * cos_e;
            if (mp - mp.round()).abs() <= 1e-9 && (np - np.round()).abs() <= 1e-9 {
                let key = (mp.round() as i64, np.round() as i64);
                if let Some(t) = modes.iter().position(|&x| x == key) {
                    if !hit[t] {
                        target[s] = Some(t);
                        hit[t] = true;
                    }
                }
            }
        }
        // leftover modes matched in label order
        let mut free_src: Vec<usize> = (0..modes.len()).filter(|&s| target[s].is_none()).collect();
        let mut free_dst: Vec<usize> = (0..modes.len()).filter(|&t| !hit[t]).collect();
        free_src.sort_by_key(|&s| modes[s]);
        free_dst.sort_by_key(|&t| modes[t]);
        for (s, t) in free_src.into_iter().zip(free_dst) {
            target[s] = Some(t);
        }
        // U v_s = v_{σ(s)} : U = Σ v_{σ(s)} v_s† W restricted to this fiber
        for (s, t) in target.iter().enumerate() {
            let t = t.expect("complete pairing");
            let vs = &adapted.vectors[cl.indices[s]];
            let vt = &adapted.vectors[cl.indices[t]];
            for i in 0..n {
                if vt[i] == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    let z = vt[i] * vs[j].conj() * grid.weights[j];
                    if z != Complex64::new(0.0, 0.0) {
                        trip.push((i, j, z));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, &trip))
}

/// Per-cluster change-of-basis W_λ = V_a† W V_b between two label-adapted
/// bases of the same decomposition. Each W_λ is unitary exactly when both
/// frames are orthonormal spans of the same fiber — the discrete statement
/// that two maximal commuting sets are related by a unitary mixing inside
/// each degenerate sector.
pub fn cluster_change_of_basis(
    a: &SpectralDecomposition,
    b: &SpectralDecomposition,
) -> Result<Vec<DMatrix<Complex64>>> {
    if !same_grid(&a.grid, &b.grid) {
        return Err(GftError::GridMismatch);
    }
    if a.clusters.len() != b.clusters.len()
        || a.clusters
            .iter()
            .zip(&b.clusters)
            .any(|(x, y)| x.indices != y.indices)
    {
        return Err(GftError::LabelMismatch(
            "decompositions carry different cluster structures".into(),
        ));
    }
    let grid = &a.grid;
    let mut out = Vec::with_capacity(a.clusters.len());
    for cl in &a.clusters {
        let d = cl.indices.len();
        let mut w = DMatrix::<Complex64>::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                w[(i, j)] = grid.inner_w(&a.vectors[cl.indices[i]], &b.vectors[cl.indices[j]]);
            }
        }
        out.push(w);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Per-chart operator catalogs
// ---------------------------------------------------------------------------

/// Commutation tolerance an operator built on this grid can honestly meet:
/// exact trigonometric structure on all-periodic charts, truncation-order
/// commutators once finite differences participate.
fn grid_comm_tol(grid: &ChartGrid) -> f64 {
    if grid.spec.coords.iter().all(|c| c.bc == BoundaryKind::Periodic) {
        1e-8
    } else {
        1e-5
    }
}

fn momentum_op(grid: &Arc<ChartGrid>, axis: usize, id: &str) -> Result<SymmetryOperator> {
    let dim = grid.dim();
    let field = move |_: &[f64]| {
        let mut k = vec![0.0; dim];
        k[axis] = 1.0;
        k
    };
    let op = assemble_first_order(grid, &field)?;
    SymmetryOperator::new(id, 1, op, OperatorOrigin::KillingVector, 1e-8)
}

/// The two translation generators −i∂ on a 2-torus chart.
pub fn torus_momentum_pair(grid: &Arc<ChartGrid>) -> Result<(SymmetryOperator, SymmetryOperator)> {
    Ok((momentum_op(grid, 0, "p_theta")?, momentum_op(grid, 1, "p_phi")?))
}

/// The ε-rotated pair cos ε p̂_θ + sin ε p̂_φ and −sin ε p̂_θ + cos ε p̂_φ:
/// the torus translation generators seen from the rotated universal-cover
/// frame. Constant coefficients keep them grid-exact.
pub fn rotated_torus_momenta(
    grid: &Arc<ChartGrid>,
    eps: f64,
) -> Result<(SymmetryOperator, SymmetryOperator)> {
    let (p1, p2) = torus_momentum_pair(grid)?;
    let (c, s) = (eps.cos(), eps.sin());
    let m1 = p1.op.matrix.scale(Complex64::new(c, 0.0)).add(&p2.op.matrix.scale(Complex64::new(s, 0.0)));
    let m2 = p1.op.matrix.scale(Complex64::new(-s, 0.0)).add(&p2.op.matrix.scale(Complex64::new(c, 0.0)));
    let mk = |m: CsrMatrix, id: &str| {
        SymmetryOperator::new(
            id,
            1,
            DiscreteOperator {
                matrix: m,
                grid: grid.clone(),
                hermitian_wrt_measure: true,
                stencil_radius: None,
            },
            OperatorOrigin::KillingVector,
            1e-8,
        )
    };
    Ok((mk(m1, "p_rot_1")?, mk(m2, "p_rot_2")?))
}

/// Hard-coded candidate operators per catalog chart, ending with the
/// (positive) Laplacian −Δ whose labels are the decomposition eigenvalues.
pub fn operator_catalog(grid: &Arc<ChartGrid>, id: CatalogId) -> Result<Vec<SymmetryOperator>> {
    let mut out: Vec<SymmetryOperator> = Vec::new();
    match id {
        CatalogId::Interval => {}
        CatalogId::Circle => {
            out.push(momentum_op(grid, 0, "p_theta")?);
        }
        CatalogId::Torus2 => {
            let (p1, p2) = torus_momentum_pair(grid)?;
            out.push(p1);
            out.push(p2);
        }
        CatalogId::Box3 => {
            out.push(momentum_op(grid, 0, "p_x")?);
            out.push(momentum_op(grid, 1, "p_y")?);
            out.push(momentum_op(grid, 2, "p_z")?);
        }
        CatalogId::Sphere2 => {
            out.extend(angular_momentum_ops(grid, 0, 1)?);
        }
        CatalogId::Ball3 => {
            out.extend(angular_momentum_ops(grid, 1, 2)?);
        }
    }
    let neg_lap = assemble_laplace_beltrami(grid)?.scaled(Complex64::new(-1.0, 0.0));
    out.push(SymmetryOperator::new(
        "laplacian",
        2,
        neg_lap,
        OperatorOrigin::Laplacian,
        grid_comm_tol(grid),
    )?);
    Ok(out)
}

/// |L|², L_z, L_x, L_y on a spherical-type chart with polar axis `th_ax`
/// and azimuthal axis `ph_ax`. L_z and |L|² are grid-exact commutants of
/// the Laplacian. L_x and L_y carry cot θ coefficients whose
/// finite-difference truncation error concentrates at the pole-adjacent
/// nodes, so their discrete commutators with the Laplacian are far above
/// every admission budget at practical resolutions: they appear in the
/// catalog as honest candidates and drop out of every admitted set.
fn angular_momentum_ops(
    grid: &Arc<ChartGrid>,
    th_ax: usize,
    ph_ax: usize,
) -> Result<Vec<SymmetryOperator>> {
    let dim = grid.dim();
    let casimir = assemble_orbital_casimir(grid)?;
    let lsq = SymmetryOperator::new("l_squared", 2, casimir, OperatorOrigin::KillingTensor, 1e-8)?;
    let lz = momentum_op(grid, ph_ax, "l_z")?;

    // L_x = -i(-sin φ ∂θ - cot θ cos φ ∂φ), L_y = -i(cos φ ∂θ - cot θ sin φ ∂φ)
    let lx_field = move |x: &[f64]| {
        let (th, ph) = (x[th_ax], x[ph_ax]);
        let mut k = vec![0.0; dim];
        k[th_ax] = -ph.sin();
        k[ph_ax] = -(th.cos() / th.sin()) * ph.cos();
        k
    };
    let lx = SymmetryOperator::new(
        "l_x",
        1,
        assemble_first_order(grid, &lx_field)?,
        OperatorOrigin::KillingVector,
        1e-5,
    )?;
    let ly_field = move |x: &[f64]| {
        let (th, ph) = (x[th_ax], x[ph_ax]);
        let mut k = vec![0.0; dim];
        k[th_ax] = ph.cos();
        k[ph_ax] = -(th.cos() / th.sin()) * ph.sin();
        k
    };
    let ly = SymmetryOperator::new(
        "l_y",
        1,
        assemble_first_order(grid, &ly_field)?,
        OperatorOrigin::KillingVector,
        1e-5,
    )?;
    Ok(vec![lsq, lz, lx, ly])
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::manifold::ManifoldSpec;
    use crate::op::{locality_check, Locality};
    use rand::Rng;
    use std::f64::consts::PI;

    fn grid_for(id: CatalogId, res: &[usize]) -> Arc<ChartGrid> {
        build_grid(&ManifoldSpec::catalog(id), res).unwrap()
    }

    fn neg_lap_op(grid: &Arc<ChartGrid>) -> SymmetryOperator {
        let lap = assemble_laplace_beltrami(grid).unwrap().scaled(Complex64::new(-1.0, 0.0));
        SymmetryOperator::new("laplacian", 2, lap, OperatorOrigin::Laplacian, grid_comm_tol(grid))
            .unwrap()
    }

    /// Diagonal multiplication by sin(x_axis): Hermitian w.r.t. any real
    /// measure, but no commutant of anything differential.
    fn mult_sin(grid: &Arc<ChartGrid>, axis: usize) -> SymmetryOperator {
        let trip: Vec<(usize, usize, Complex64)> = (0..grid.n_nodes())
            .map(|i| (i, i, Complex64::new(grid.node(i)[axis].sin(), 0.0)))
            .collect();
        let op = DiscreteOperator {
            matrix: CsrMatrix::from_triplets(grid.n_nodes(), &trip),
            grid: grid.clone(),
            hermitian_wrt_measure: true,
            stencil_radius: Some(0),
        };
        SymmetryOperator::new("mult_sin", 0, op, OperatorOrigin::Synthetic, 1e-8).unwrap()
    }

    fn plane_wave(grid: &Arc<ChartGrid>, m: i64, n: i64) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = (0..grid.n_nodes())
            .map(|i| {
                let x = grid.node(i);
                let arg = m as f64 * x[0] + n as f64 * x[1];
                Complex64::new(arg.cos(), arg.sin())
            })
            .collect();
        let nrm = grid.norm_w(&v);
        for z in &mut v {
            *z /= nrm;
        }
        v
    }

    // --- commutator diagnostics -------------------------------------------

    #[test]
    fn translation_generators_commute() {
        let grid = grid_for(CatalogId::Torus2, &[9, 9]);
        let (p1, p2) = torus_momentum_pair(&grid).unwrap();
        let lap = neg_lap_op(&grid);
        assert!(commutator_norm(&p1, &p2, 4).unwrap() < 1e-10);
        assert!(commutator_norm(&p1, &lap, 4).unwrap() < 1e-9);
        assert!(commutator_norm(&p2, &lap, 4).unwrap() < 1e-9);
    }

    #[test]
    fn sphere_generators_commute_to_their_budgets() {
        let grid = grid_for(CatalogId::Sphere2, &[16, 12]);
        let ops = operator_catalog(&grid, CatalogId::Sphere2).unwrap();
        let lap = &ops[4];
        assert_eq!(ops[0].id, "l_squared");
        assert_eq!(ops[1].id, "l_z");
        // exact trigonometric structure: rounding-level commutators
        assert!(commutator_norm(&ops[0], lap, 4).unwrap() < 1e-8);
        assert!(commutator_norm(&ops[1], lap, 4).unwrap() < 1e-8);
        assert!(commutator_norm(&ops[0], &ops[1], 4).unwrap() < 1e-8);
        // the cot θ coefficients of l_x are differentiated by finite
        // differences whose truncation error concentrates at the
        // pole-adjacent nodes; the discrete commutator is order one and up
        // at desk resolution — these generators drop out of admitted sets
        let cx = commutator_norm(&ops[2], lap, 4).unwrap();
        assert!(cx.is_finite() && cx > 1e-3, "l_x commutator {cx}");
    }

    #[test]
    fn noncommuting_pair_is_order_one() {
        let grid = grid_for(CatalogId::Circle, &[16]);
        let p = momentum_op(&grid, 0, "p_theta").unwrap();
        let m = mult_sin(&grid, 0);
        // [-i d/dθ, sin θ] = -i cos θ: an order-one obstruction
        let c = commutator_norm(&p, &m, 4).unwrap();
        assert!(c > 0.05 && c < 2.0, "commutator {c}");
    }

    #[test]
    fn different_grids_are_rejected() {
        let g1 = grid_for(CatalogId::Circle, &[16]);
        let g2 = grid_for(CatalogId::Circle, &[20]);
        let p1 = momentum_op(&g1, 0, "p").unwrap();
        let p2 = momentum_op(&g2, 0, "p").unwrap();
        assert!(matches!(commutator_norm(&p1, &p2, 2), Err(GftError::GridMismatch)));
        let dec = eig_decompose(&p1.op, &EigOptions::default());
        // p is Hermitian, so the decomposition exists; joint-diagonalizing it
        // against an operator on the other grid must fail structurally
        let dec = dec.unwrap();
        assert!(matches!(
            joint_diagonalize(&dec, &[&p2], &JointDiagOptions::default()),
            Err(GftError::GridMismatch)
        ));
    }

    // --- joint diagonalization --------------------------------------------

    fn torus_dec(grid: &Arc<ChartGrid>) -> SpectralDecomposition {
        let lap = assemble_laplace_beltrami(grid).unwrap().scaled(Complex64::new(-1.0, 0.0));
        eig_decompose(&lap, &EigOptions::default()).unwrap()
    }

    #[test]
    fn joint_labels_match_torus_lattice() {
        let grid = grid_for(CatalogId::Torus2, &[9, 9]);
        let dec = torus_dec(&grid);
        let (p1, p2) = torus_momentum_pair(&grid).unwrap();
        let (_, labels) = joint_diagonalize(&dec, &[&p1, &p2], &JointDiagOptions::default()).unwrap();
        assert_eq!(labels.axes, vec!["lambda", "p_theta", "p_phi"]);

        // oracle: the label set must be exactly the integer lattice block
        // {-4..4}², and λ = m² + n² on every state
        let mut got: Vec<(i64, i64)> = Vec::new();
        for t in &labels.tuples {
            let (m, n) = (t[1], t[2]);
            assert!((m - m.round()).abs() < 1e-7, "non-integer label {m}");
            assert!((n - n.round()).abs() < 1e-7, "non-integer label {n}");
            let (mi, ni) = (m.round() as i64, n.round() as i64);
            assert!((t[0] - (mi * mi + ni * ni) as f64).abs() < 1e-8);
            got.push((mi, ni));
        }
        got.sort_unstable();
        let mut want: Vec<(i64, i64)> = Vec::new();
        for m in -4..=4 {
            for n in -4..=4 {
                want.push((m, n));
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn sphere_fibers_split_into_integer_azimuthal_labels() {
        let grid = grid_for(CatalogId::Sphere2, &[24, 16]);
        let lap = assemble_laplace_beltrami(&grid).unwrap().scaled(Complex64::new(-1.0, 0.0));
        let opts = EigOptions {
            cluster_tol: Some(0.5),
            n_eigs: Some(25),
            ..EigOptions::default()
        };
        let dec = eig_decompose(&lap, &opts).unwrap();
        let sizes: Vec<usize> = dec.clusters.iter().map(|c| c.indices.len()).collect();
        assert_eq!(sizes, vec![1, 3, 5, 7, 9]);

        let lz = momentum_op(&grid, 1, "l_z").unwrap();
        let (_, labels) = joint_diagonalize(&dec, &[&lz], &JointDiagOptions::default()).unwrap();
        for (l, cl) in dec.clusters.iter().enumerate() {
            let mut ms: Vec<i64> = cl
                .indices
                .iter()
                .map(|&k| {
                    let m = labels.tuples[k][1];
                    assert!((m - m.round()).abs() < 1e-7, "non-integer m {m}");
                    m.round() as i64
                })
                .collect();
            ms.sort_unstable();
            let want: Vec<i64> = (-(l as i64)..=l as i64).collect();
            assert_eq!(ms, want, "azimuthal labels of multiplet {l}");
        }
    }

    #[test]
    fn no_operators_means_lambda_only_labels() {
        let grid = grid_for(CatalogId::Torus2, &[9, 9]);
        let dec = torus_dec(&grid);
        let (out, labels) = joint_diagonalize(&dec, &[], &JointDiagOptions::default()).unwrap();
        assert_eq!(labels.axes, vec!["lambda"]);
        for (k, t) in labels.tuples.iter().enumerate() {
            assert_eq!(t.len(), 1);
            assert_eq!(t[0], dec.eigenvalues[k]);
        }
        for (a, b) in out.vectors.iter().zip(&dec.vectors) {
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn label_tuples_are_order_invariant() {
        let grid = grid_for(CatalogId::Torus2, &[9, 9]);
        let dec = torus_dec(&grid);
        let (p1, p2) = torus_momentum_pair(&grid).unwrap();
        let opts = JointDiagOptions::default();
        let (_, la) = joint_diagonalize(&dec, &[&p1, &p2], &opts).unwrap();
        let (_, lb) = joint_diagonalize(&dec, &[&p2, &p1], &opts).unwrap();
        for cl in &dec.clusters {
            let mut a: Vec<(i64, i64)> = cl
                .indices
                .iter()
                .map(|&k| (la.tuples[k][1].round() as i64, la.tuples[k][2].round() as i64))
                .collect();
            let mut b: Vec<(i64, i64)> = cl
                .indices
                .iter()
                .map(|&k| (lb.tuples[k][2].round() as i64, lb.tuples[k][1].round() as i64))
                .collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b, "fiber λ = {}", cl.lambda);
        }
    }

    #[test]
    fn fiber_leakage_flags_noninvariant_operators() {
        let grid = grid_for(CatalogId::Torus2, &[9, 9]);
        let dec = torus_dec(&grid);
        let (p1, _) = torus_momentum_pair(&grid).unwrap();
        let leaks = fiber_leakage(&dec, &p1).unwrap();
        assert!(leaks.iter().all(|&l| l < 1e-9), "momentum leaks {leaks:?}");

        let m = mult_sin(&grid, 0);
        let leaks = fiber_leakage(&dec, &m).unwrap();
        assert!(leaks.iter().cloned().fold(0.0f64, f64::max) > 0.1);
        match joint_diagonalize(&dec, &[&m], &JointDiagOptions::default()) {
            Err(GftError::NonInvariantFiber { op, .. }) => assert_eq!(op, "mult_sin"),
            other => panic!("expected NonInvariantFiber, got {other:?}"),
        }
    }

    // --- maximal commuting set search ---------------------------------------

    #[test]
    fn torus_momenta_form_the_top_candidate() {
        let grid = grid_for(CatalogId::Torus2, &[9, 9]);
        let dec = torus_dec(&grid);
        let catalog = operator_catalog(&grid, CatalogId::Torus2).unwrap();
        let out = masa_search(&catalog, &dec, 2).unwrap();
        assert_eq!(out.len(), 1);
        let c = &out[0];
        assert_eq!(c.members, vec!["p_theta", "p_phi"]);
        assert!(c.includes_laplacian_functionally, "λ = m² + n² is determined");
        assert_eq!(c.rank, 2);
        assert_eq!(c.total_order, 2);
        assert!(c.independent);
        assert_eq!(c.resolved_degeneracy, c.total_states);
        assert_eq!(c.total_states, 81);
        assert!(c.max_pairwise_commutator < 1e-9);
        assert!(c.max_fiber_leakage < 1e-9);
    }

    #[test]
    fn sphere_casimir_and_axial_momentum_form_the_top_candidate() {
        let grid = grid_for(CatalogId::Sphere2, &[24, 16]);
        let lap = assemble_laplace_beltrami(&grid).unwrap().scaled(Complex64::new(-1.0, 0.0));
        let opts = EigOptions {
            cluster_tol: Some(0.5),
            n_eigs: Some(25),
            ..EigOptions::default()
        };
        let dec = eig_decompose(&lap, &opts).unwrap();
        let catalog = operator_catalog(&grid, CatalogId::Sphere2).unwrap();
        let out = masa_search(&catalog, &dec, 2).unwrap();
        // l_x and l_y leak out of the fibers at truncation order, so the only
        // maximal commuting set is {|L|², L_z} (+ the Laplacian, functionally there)
        assert_eq!(out.len(), 1);
        let c = &out[0];
        assert_eq!(c.members, vec!["l_squared", "l_z"]);
        assert!(c.includes_laplacian_functionally, "λ = ℓ(ℓ+1) is determined");
        assert!(c.independent);
        assert_eq!(c.resolved_degeneracy, 25);
        assert_eq!(c.total_states, 25);
    }

    #[test]
    fn laplacian_alone_is_a_rank_one_candidate() {
        let grid = grid_for(CatalogId::Interval, &[16]);
        let dec = {
            let lap = assemble_laplace_beltrami(&grid).unwrap().scaled(Complex64::new(-1.0, 0.0));
            eig_decompose(&lap, &EigOptions::default()).unwrap()
        };
        assert!(masa_search(&[], &dec, 0).unwrap().is_empty());
        let catalog = operator_catalog(&grid, CatalogId::Interval).unwrap();
        let out = masa_search(&catalog, &dec, 1).unwrap();
        assert_eq!(out.len(), 1);
        let c = &out[0];
        assert_eq!(c.members, vec!["laplacian"]);
        assert!(!c.includes_laplacian_functionally);
        assert_eq!(c.rank, 1);
        // a nondegenerate spectrum is already resolved by λ itself
        assert_eq!(c.resolved_degeneracy, c.total_states);
    }

    #[test]
    fn ball_casimir_pair_resolves_but_does_not_determine_lambda() {
        let grid = grid_for(CatalogId::Ball3, &[10, 10, 12]);
        let lap = assemble_laplace_beltrami(&grid).unwrap().scaled(Complex64::new(-1.0, 0.0));
        let opts = EigOptions {
            cluster_tol: Some(0.25),
            n_eigs: Some(17),
            ..EigOptions::default()
        };
        let dec = eig_decompose(&lap, &opts).unwrap();
        let sizes: Vec<usize> = dec.clusters.iter().map(|c| c.indices.len()).collect();
        assert_eq!(sizes, vec![1, 3, 5, 1, 7], "radial/angular multiplet pattern");

        let catalog = operator_catalog(&grid, CatalogId::Ball3).unwrap();
        let lsq = &catalog[0];
        let lapop = &catalog[4];
        assert!(commutator_norm(lsq, lapop, 4).unwrap() < 1e-8);

        let out = masa_search(&catalog, &dec, 2).unwrap();
        assert_eq!(out.len(), 1);
        let c = &out[0];
        assert_eq!(c.members, vec!["l_squared", "l_z"]);
        // two ℓ = 0 fibers at different radial numbers share the member
        // labels (0, 0): λ is NOT a function of the member labels here
        assert!(!c.includes_laplacian_functionally);
        assert!(c.independent);
        assert_eq!(c.resolved_degeneracy, c.total_states);

        // Casimir labels sit near ℓ(ℓ+1), azimuthal labels are integers
        let lz = &catalog[1];
        let (_, labels) = joint_diagonalize(&dec, &[lsq, lz], &JointDiagOptions::default()).unwrap();
        let want_l = [0.0, 2.0, 6.0, 0.0, 12.0];
        for (cl, &wl) in dec.clusters.iter().zip(&want_l) {
            for &k in &cl.indices {
                // truncation error in the Casimir grows with ℓ on the coarse
                // polar grid (the ℓ = 3 label reads ≈ 11.44 at 10 θ-nodes)
                assert!(
                    (labels.tuples[k][1] - wl).abs() < 0.05 * wl + 0.1,
                    "Casimir label {} for target {wl}",
                    labels.tuples[k][1]
                );
                let m = labels.tuples[k][2];
                assert!((m - m.round()).abs() < 1e-6);
            }
        }
    }

    // --- synthetic commutant -------------------------------------------------

    #[test]
    fn synthetic_commutant_with_eigenvalue_labels_rebuilds_the_operator() {
        let grid = grid_for(CatalogId::Torus2, &[9, 9]);
        let dec = torus_dec(&grid);
        let synth = build_synthetic_commutant(&dec, &dec.eigenvalues).unwrap();
        let lap = neg_lap_op(&grid);
        let diff = synth.op.matrix.add(&lap.op.matrix.scale(Complex64::new(-1.0, 0.0)));
        assert!(diff.max_abs() < 1e-8 * lap.op.matrix.max_abs());

        let zero = build_synthetic_commutant(&dec, &vec![0.0; 81]).unwrap();
        assert_eq!(zero.op.matrix.max_abs(), 0.0);

        assert!(matches!(
            build_synthetic_commutant(&dec, &[1.0, 2.0]),
            Err(GftError::LabelMismatch(_))
        ));
    }

    #[test]
    fn synthetic_commutant_commutes_but_is_nonlocal() {
        let grid = grid_for(CatalogId::Torus2, &[9, 9]);
        let dec = torus_dec(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let labels: Vec<f64> = (0..dec.vectors.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let synth = build_synthetic_commutant(&dec, &labels).unwrap();
        let lap = neg_lap_op(&grid);
        assert!(commutator_norm(&synth, &lap, 4).unwrap() < 1e-8);
        match locality_check(&synth.op, 4) {
            Locality::NonLocal { violation_fraction } => assert!(violation_fraction > 0.1),
            other => panic!("expected a non-local verdict, got {other:?}"),
        }
    }

    // --- isometry pullbacks ---------------------------------------------------

    #[test]
    fn identity_pullback_is_the_identity() {
        let grid = grid_for(CatalogId::Torus2, &[8, 8]);
        let u = isometry_pullback(&grid, &IsometryMap::Identity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = grid.random_band_limited(&mut rng);
        let uv = u.apply(&v);
        assert!(v.iter().zip(&uv).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    #[test]
    fn translation_pullback_phases_and_commutes() {
        let grid = grid_for(CatalogId::Torus2, &[8, 8]);
        let u = isometry_pullback(&grid, &IsometryMap::Translate { shift: vec![PI / 3.0, 0.0] })
            .unwrap();
        // mode (2, 1) picks up exactly e^{i 2π/3}
        let v = plane_wave(&grid, 2, 1);
        let uv = u.apply(&v);
        let phase = Complex64::new(0.0, 2.0 * PI / 3.0).exp();
        for (a, b) in uv.iter().zip(&v) {
            assert!((a - phase * b).norm() < 1e-10);
        }
        // exact commutation with the Laplacian, as matrices
        let lap = assemble_laplace_beltrami(&grid).unwrap().scaled(Complex64::new(-1.0, 0.0));
        let ul = u.matrix.matmul(&lap.matrix);
        let lu = lap.matrix.matmul(&u.matrix);
        let diff = ul.add(&lu.scale(Complex64::new(-1.0, 0.0)));
        assert!(diff.max_abs() < 1e-10 * lap.matrix.max_abs());
        // couples only along the shifted periodic axis
        match locality_check(&u, 0) {
            Locality::Local { pseudo_local_axes, .. } => assert_eq!(pseudo_local_axes, vec![0]),
            other => panic!("expected pseudo-local along axis 0, got {other:?}"),
        }
    }

    #[test]
    fn reflection_and_permutation_pullbacks_commute_with_the_laplacian() {
        let grid = grid_for(CatalogId::Box3, &[6, 6, 6]);
        let lap = assemble_laplace_beltrami(&grid).unwrap().scaled(Complex64::new(-1.0, 0.0));
        for map in [
            IsometryMap::Reflect { axis: 0 },
            IsometryMap::PermuteAxes { perm: vec![1, 0, 2] },
        ] {
            let u = isometry_pullback(&grid, &map).unwrap();
            let diff = u
                .matrix
                .matmul(&lap.matrix)
                .add(&lap.matrix.matmul(&u.matrix).scale(Complex64::new(-1.0, 0.0)));
            assert!(diff.max_abs() < 1e-10 * lap.matrix.max_abs(), "{map:?}");
        }
    }

    #[test]
    fn non_isometries_are_rejected() {
        let ball = grid_for(CatalogId::Ball3, &[6, 6, 6]);
        assert!(matches!(
            isometry_pullback(&ball, &IsometryMap::PermuteAxes { perm: vec![0, 2, 1] }),
            Err(GftError::NotCatalogIsometry(_))
        ));
        let interval = grid_for(CatalogId::Interval, &[8]);
        assert!(matches!(
            isometry_pullback(&interval, &IsometryMap::Translate { shift: vec![0.1] }),
            Err(GftError::NotCatalogIsometry(_))
        ));
        let sphere = grid_for(CatalogId::Sphere2, &[8, 8]);
        assert!(matches!(
            isometry_pullback(&sphere, &IsometryMap::TorusRotate { eps: 0.3 }),
            Err(GftError::NotCatalogIsometry(_))
        ));
    }

    #[test]
    fn rotation_pullback_permutes_lattice_modes_and_commutes() {
        // 12 nodes per axis resolve the 12-fold λ = 25 fiber, where the
        // 3-4-5 rotation genuinely permutes lattice modes: (4,3) ↦ (5,0)
        let grid = grid_for(CatalogId::Torus2, &[12, 12]);
        let eps = (3.0f64 / 4.0).atan();
        let u = isometry_pullback(&grid, &IsometryMap::TorusRotate { eps }).unwrap();

        let lap = assemble_laplace_beltrami(&grid).unwrap().scaled(Complex64::new(-1.0, 0.0));
        let diff = u
            .matrix
            .matmul(&lap.matrix)
            .add(&lap.matrix.matmul(&u.matrix).scale(Complex64::new(-1.0, 0.0)));
        assert!(diff.max_abs() < 1e-8 * lap.matrix.max_abs());

        let img = u.apply(&plane_wave(&grid, 4, 3));
        let overlap = grid.inner_w(&plane_wave(&grid, 5, 0), &img);
        assert!((overlap.norm() - 1.0).abs() < 1e-7, "|⟨(5,0), U(4,3)⟩| = {}", overlap.norm());

        // a generic angle still builds a unitary commutant (fibers are then
        // matched in label order rather than by lattice geometry)
        assert!(isometry_pullback(&grid, &IsometryMap::TorusRotate { eps: 0.7 }).is_ok());
    }

    #[test]
    fn conjugated_momenta_keep_the_fiber_label_multisets() {
        let grid = grid_for(CatalogId::Torus2, &[12, 12]);
        let eps = (3.0f64 / 4.0).atan();
        let u = isometry_pullback(&grid, &IsometryMap::TorusRotate { eps }).unwrap();
        let dec = torus_dec(&grid);
        let (p1, p2) = torus_momentum_pair(&grid).unwrap();
        let c1 = conjugate_operator(&p1, &u).unwrap();
        let c2 = conjugate_operator(&p2, &u).unwrap();
        assert_eq!(c1.id, "p_theta~");

        let opts = JointDiagOptions::default();
        let (_, la) = joint_diagonalize(&dec, &[&p1, &p2], &opts).unwrap();
        let (_, lb) = joint_diagonalize(&dec, &[&c1, &c2], &opts).unwrap();
        for cl in &dec.clusters {
            let collect = |l: &JointLabelSpace| -> Vec<(i64, i64)> {
                let mut v: Vec<(i64, i64)> = cl
                    .indices
                    .iter()
                    .map(|&k| (l.tuples[k][1].round() as i64, l.tuples[k][2].round() as i64))
                    .collect();
                v.sort_unstable();
                v
            };
            assert_eq!(collect(&la), collect(&lb), "fiber λ = {}", cl.lambda);
        }
    }

    #[test]
    fn change_of_basis_blocks_are_unitary() {
        let grid = grid_for(CatalogId::Torus2, &[9, 9]);
        let dec = torus_dec(&grid);
        let (p1, p2) = torus_momentum_pair(&grid).unwrap();
        let (r1, r2) = rotated_torus_momenta(&grid, 0.37).unwrap();
        let opts = JointDiagOptions::default();
        let (da, _) = joint_diagonalize(&dec, &[&p1, &p2], &opts).unwrap();
        let (db, _) = joint_diagonalize(&dec, &[&r1, &r2], &opts).unwrap();
        let blocks = cluster_change_of_basis(&da, &db).unwrap();
        assert_eq!(blocks.len(), dec.clusters.len());
        for (cl, w) in dec.clusters.iter().zip(&blocks) {
            let d = cl.indices.len();
            let dev = (w.adjoint() * w - DMatrix::<Complex64>::identity(d, d))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-8, "fiber λ = {}: deviation {dev}", cl.lambda);
        }
    }

    // --- catalogs ---------------------------------------------------------

    #[test]
    fn catalog_operators_are_measure_hermitian() {
        let cases: Vec<(CatalogId, Vec<usize>, Vec<&str>)> = vec![
            (CatalogId::Interval, vec![12], vec!["laplacian"]),
            (CatalogId::Circle, vec![12], vec!["p_theta", "laplacian"]),
            (CatalogId::Torus2, vec![8, 8], vec!["p_theta", "p_phi", "laplacian"]),
            (CatalogId::Box3, vec![6, 6, 6], vec!["p_x", "p_y", "p_z", "laplacian"]),
            (
                CatalogId::Sphere2,
                vec![12, 10],
                vec!["l_squared", "l_z", "l_x", "l_y", "laplacian"],
            ),
            (
                CatalogId::Ball3,
                vec![8, 8, 8],
                vec!["l_squared", "l_z", "l_x", "l_y", "laplacian"],
            ),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (id, res, want_ids) in cases {
            let grid = grid_for(id, &res);
            let ops = operator_catalog(&grid, id).unwrap();
            let ids: Vec<&str> = ops.iter().map(|o| o.id.as_str()).collect();
            assert_eq!(ids, want_ids, "{id:?}");
            for op in &ops {
                let r = op.op.hermiticity_residual(&mut rng, 4);
                assert!(r < 1e-9, "{id:?}/{}: residual {r}", op.id);
            }
        }
    }

    #[test]
    fn rotated_momenta_are_exact_combinations() {
        let grid = grid_for(CatalogId::Torus2, &[8, 8]);
        let (p1, p2) = torus_momentum_pair(&grid).unwrap();
        let (r1, r2) = rotated_torus_momenta(&grid, 0.37).unwrap();
        let (c, s) = (0.37f64.cos(), 0.37f64.sin());
        let want1 = p1.op.matrix.scale(Complex64::new(c, 0.0)).add(&p2.op.matrix.scale(Complex64::new(s, 0.0)));
        assert!(want1.add(&r1.op.matrix.scale(Complex64::new(-1.0, 0.0))).max_abs() < 1e-14);
        // the rotated pair closes the same commutation relations
        let lap = neg_lap_op(&grid);
        assert!(commutator_norm(&r1, &r2, 4).unwrap() < 1e-10);
        assert!(commutator_norm(&r1, &lap, 4).unwrap() < 1e-9);
        assert!(commutator_norm(&r2, &lap, 4).unwrap() < 1e-9);
    }
}
