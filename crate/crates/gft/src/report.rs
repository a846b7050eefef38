//! One-shot reproduction of the worked examples as a serializable document:
//! the flat 3-space stand-ins resolved two ways (Cartesian triple vs the
//! spherical {total angular momentum, axial momentum} pair), the flat torus
//! resolved in the axis frame and in a rationally rotated frame, plus the
//! torus flow-closure table. Every number in the report is computed in this
//! process; nothing is looked up.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classify::{grid_cell, AxisTopology, ClassificationInput};
use crate::error::{GftError, Result};
use crate::flow::integrate_flow;
use crate::grid::build_grid;
use crate::killing::{frobenius_residual, interior_sample_grid, robertson_check, KillingField};
use crate::manifold::{CatalogId, ManifoldSpec};
use crate::op::assemble_laplace_beltrami;
use crate::spectral::{
    eig_decompose, parseval_defect, EigOptions, SpectralDecomposition,
};
use crate::symmetry::{
    joint_diagonalize, masa_search, operator_catalog, rotated_torus_momenta, JointDiagOptions,
    JointLabelSpace, MasaCandidate, SymmetryOperator,
};

pub const FORMAT_VERSION: u32 = 1;

/// Eigenform-web integrability evidence attached to cells whose resolving
/// set contains a rank-2 member.
#[derive(Debug, Clone, Serialize)]
pub struct TensorWebEvidence {
    pub robertson_separable: bool,
    pub robertson_max_abs: f64,
    /// Worst e ∧ de over the web's coordinate eigenforms.
    pub frobenius_max_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub name: String,
    pub manifold: String,
    pub resolution: Vec<usize>,
    pub masa_members: Vec<String>,
    pub laplacian_functionally_dependent: bool,
    pub algebraic: crate::classify::AlgebraicClass,
    pub topology: crate::classify::TopologyClass,
    pub cell: String,
    pub resolved_degeneracy: usize,
    pub total_states: usize,
    /// Worst relative |‖ψ‖²_w − Σ|φ|²| over seeded in-span trial fields.
    pub parseval_residual: f64,
    pub max_pairwise_commutator: f64,
    pub max_fiber_leakage: f64,
    /// Worst |⟨v_i, v_j⟩_w − δ_ij| inside any resolved fiber: the
    /// change-of-basis unitarity check.
    pub fiber_orthonormality_defect: f64,
    pub evidence: Option<TensorWebEvidence>,
    pub rationale: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RotatedLabelCheck {
    /// tan ε as an exact fraction.
    pub tan_eps: [i64; 2],
    pub states_compared: usize,
    /// Sorted {m'² + n'²} equals sorted {m² + n²}.
    pub multiset_equal: bool,
    pub max_multiset_defect: f64,
    /// Worst distance of q·m' (and q·n') from an integer: rational rotation
    /// keeps the labels on the lattice 1/q · ℤ.
    pub max_lattice_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowEntry {
    pub slope_tan_eps: f64,
    pub wraps_budget: usize,
    pub closed: bool,
    pub winding: Option<(i64, i64)>,
    pub max_section_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkedExampleReport {
    pub format_version: u32,
    pub cells: Vec<CellReport>,
    pub rotated_labels: RotatedLabelCheck,
    pub flows: Vec<FlowEntry>,
}

const TORUS_RES: [usize; 2] = [16, 16];
const TORUS_N_EIGS: usize = 13;
const BOX_RES: [usize; 3] = [8, 8, 8];
const BOX_N_EIGS: usize = 27; // multiplicity ladder 1 + 6 + 12 + 8
const BALL_RES: [usize; 3] = [10, 10, 12];
const BALL_N_EIGS: usize = 17; // multiplet pattern 1, 3, 5, 1, 7
const BALL_CLUSTER_TOL: f64 = 0.25;
const PARSEVAL_TRIALS: usize = 8;

fn in_span_parseval(dec: &SpectralDecomposition, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dec.grid.n_nodes();
    let mut worst = 0.0f64;
    for _ in 0..PARSEVAL_TRIALS {
        let mut psi = vec![Complex64::new(0.0, 0.0); n];
        for v in &dec.vectors {
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            for i in 0..n {
                psi[i] += c * v[i];
            }
        }
        worst = worst.max(parseval_defect(dec, &psi)?);
    }
    Ok(worst)
}

fn fiber_orthonormality_defect(dec: &SpectralDecomposition, refined: &SpectralDecomposition) -> f64 {
    let mut worst = 0.0f64;
    for cl in &dec.clusters {
        for (a, &i) in cl.indices.iter().enumerate() {
            for &j in &cl.indices[a..] {
                let g = dec.grid.inner_w(&refined.vectors[i], &refined.vectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - Complex64::new(target, 0.0)).norm());
            }
        }
    }
    worst
}

fn candidate_by_members<'a>(
    candidates: &'a [MasaCandidate],
    members: &[&str],
) -> Result<&'a MasaCandidate> {
    let mut want: Vec<&str> = members.to_vec();
    want.sort_unstable();
    candidates
        .iter()
        .find(|c| {
            let mut have: Vec<&str> = c.members.iter().map(|s| s.as_str()).collect();
            have.sort_unstable();
            have == want
        })
        .ok_or_else(|| {
            GftError::LabelMismatch(format!(
                "expected commuting set {{{}}} not among search candidates",
                members.join(", ")
            ))
        })
}

struct CellRun {
    report: CellReport,
    labels: JointLabelSpace,
}

/// Resolve one (manifold, commuting set) pair end to end and classify it.
fn run_cell(
    name: &str,
    id: CatalogId,
    resolution: &[usize],
    dec: &SpectralDecomposition,
    catalog: &[SymmetryOperator],
    members: &[&str],
    axis_topologies: Vec<AxisTopology>,
    evidence: Option<TensorWebEvidence>,
    seed: u64,
) -> Result<CellRun> {
    let spec = ManifoldSpec::catalog(id);
    let target_rank = members.len();
    let candidates = masa_search(catalog, dec, target_rank)?;
    let candidate = candidate_by_members(&candidates, members)?;

    let ops: Vec<&SymmetryOperator> = candidate
        .members
        .iter()
        .map(|m| catalog.iter().find(|o| &o.id == m).unwrap())
        .collect();
    let (refined, labels) = joint_diagonalize(dec, &ops, &JointDiagOptions::default())?;

    let degeneracy_present = dec.clusters.iter().any(|c| c.indices.len() > 1);
    let frobenius_pass = evidence
        .as_ref()
        .map(|e| e.robertson_separable && e.frobenius_max_residual < 1e-6);
    let input = ClassificationInput::from_candidate(
        &spec,
        candidate,
        catalog,
        degeneracy_present,
        frobenius_pass,
        axis_topologies,
    )?;
    let class = grid_cell(&input)?;

    let report = CellReport {
        name: name.into(),
        manifold: format!("{id:?}"),
        resolution: resolution.to_vec(),
        masa_members: candidate.members.clone(),
        laplacian_functionally_dependent: candidate.includes_laplacian_functionally,
        algebraic: class.algebraic,
        topology: class.topology,
        cell: class.cell_code(),
        resolved_degeneracy: candidate.resolved_degeneracy,
        total_states: candidate.total_states,
        parseval_residual: in_span_parseval(dec, seed)?,
        max_pairwise_commutator: candidate.max_pairwise_commutator,
        max_fiber_leakage: candidate.max_fiber_leakage,
        fiber_orthonormality_defect: fiber_orthonormality_defect(dec, &refined),
        evidence,
        rationale: class.rationale,
    };
    Ok(CellRun { report, labels })
}

fn ball_tensor_evidence() -> Result<TensorWebEvidence> {
    let spec = ManifoldSpec::catalog(CatalogId::Ball3);
    let points = interior_sample_grid(&spec, 4);
    let robertson = robertson_check(&spec, &points)?;
    // the orbital Casimir's principal directions are the chart axes; its
    // eigenforms are the coordinate differentials
    let mut frob = 0.0f64;
    for axis in 0..spec.dim {
        let dim = spec.dim;
        let form = KillingField::new("coordinate_eigenform", &spec, move |_| {
            let mut e = vec![0.0; dim];
            e[axis] = 1.0;
            e
        });
        frob = frob.max(frobenius_residual(&form, &points)?);
    }
    Ok(TensorWebEvidence {
        robertson_separable: robertson.separable,
        robertson_max_abs: robertson.max_abs,
        frobenius_max_residual: frob,
    })
}

fn rotated_label_check(
    axis: &JointLabelSpace,
    rotated: &JointLabelSpace,
    q: i64,
) -> RotatedLabelCheck {
    let sum_sq = |ls: &JointLabelSpace| -> Vec<f64> {
        let mut v: Vec<f64> = ls
            .tuples
            .iter()
            .map(|t| t[1] * t[1] + t[2] * t[2])
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    let a = sum_sq(axis);
    let r = sum_sq(rotated);
    let max_multiset_defect = a
        .iter()
        .zip(&r)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let max_lattice_defect = rotated
        .tuples
        .iter()
        .flat_map(|t| [t[1], t[2]])
        .map(|x| {
            let s = q as f64 * x;
            (s - s.round()).abs()
        })
        .fold(0.0, f64::max);
    RotatedLabelCheck {
        tan_eps: [3, 4],
        states_compared: a.len(),
        multiset_equal: a.len() == r.len() && max_multiset_defect < 1e-8,
        max_multiset_defect,
        max_lattice_defect,
    }
}

pub fn report_worked_examples() -> Result<WorkedExampleReport> {
    let mut cells = Vec::new();

    // flat 3-space stand-in, Cartesian resolving set
    let box_spec = ManifoldSpec::catalog(CatalogId::Box3);
    let box_grid = build_grid(&box_spec, &BOX_RES)?;
    let box_lap = assemble_laplace_beltrami(&box_grid)?.scaled(Complex64::new(-1.0, 0.0));
    let box_dec = eig_decompose(
        &box_lap,
        &EigOptions {
            n_eigs: Some(BOX_N_EIGS),
            ..EigOptions::default()
        },
    )?;
    let box_catalog = operator_catalog(&box_grid, CatalogId::Box3)?;
    cells.push(
        run_cell(
            "Box3-Cartesian",
            CatalogId::Box3,
            &BOX_RES,
            &box_dec,
            &box_catalog,
            &["p_x", "p_y", "p_z"],
            vec![AxisTopology::Continuum; 3],
            None,
            101,
        )?
        .report,
    );

    // same space, spherical resolving set: radial label stays on the
    // eigenvalue axis, angular labels are counting numbers
    let ball_spec = ManifoldSpec::catalog(CatalogId::Ball3);
    let ball_grid = build_grid(&ball_spec, &BALL_RES)?;
    let ball_lap = assemble_laplace_beltrami(&ball_grid)?.scaled(Complex64::new(-1.0, 0.0));
    let ball_dec = eig_decompose(
        &ball_lap,
        &EigOptions {
            cluster_tol: Some(BALL_CLUSTER_TOL),
            n_eigs: Some(BALL_N_EIGS),
            ..EigOptions::default()
        },
    )?;
    let ball_catalog = operator_catalog(&ball_grid, CatalogId::Ball3)?;
    cells.push(
        run_cell(
            "Ball3-spherical",
            CatalogId::Ball3,
            &BALL_RES,
            &ball_dec,
            &ball_catalog,
            &["l_squared", "l_z"],
            vec![
                AxisTopology::Continuum,
                AxisTopology::Discrete,
                AxisTopology::Discrete,
            ],
            Some(ball_tensor_evidence()?),
            102,
        )?
        .report,
    );

    // flat torus, axis-aligned translations
    let torus_spec = ManifoldSpec::catalog(CatalogId::Torus2);
    let torus_grid = build_grid(&torus_spec, &TORUS_RES)?;
    let torus_lap = assemble_laplace_beltrami(&torus_grid)?.scaled(Complex64::new(-1.0, 0.0));
    let torus_dec = eig_decompose(
        &torus_lap,
        &EigOptions {
            n_eigs: Some(TORUS_N_EIGS),
            ..EigOptions::default()
        },
    )?;
    let torus_catalog = operator_catalog(&torus_grid, CatalogId::Torus2)?;
    let axis_run = run_cell(
        "Torus2-axis",
        CatalogId::Torus2,
        &TORUS_RES,
        &torus_dec,
        &torus_catalog,
        &["p_theta", "p_phi"],
        vec![AxisTopology::Discrete, AxisTopology::Discrete],
        None,
        103,
    )?;

    // same spectrum, translations in the frame rotated by tan ε = 3/4
    let eps = (3.0f64 / 4.0).atan();
    let (r1, r2) = rotated_torus_momenta(&torus_grid, eps)?;
    let rot_catalog = vec![r1, r2];
    let rot_run = run_cell(
        "Torus2-rotated-rational",
        CatalogId::Torus2,
        &TORUS_RES,
        &torus_dec,
        &rot_catalog,
        &["p_rot_1", "p_rot_2"],
        vec![AxisTopology::Discrete, AxisTopology::Discrete],
        None,
        104,
    )?;
    let rotated_labels = rotated_label_check(&axis_run.labels, &rot_run.labels, 5);
    cells.push(axis_run.report);
    cells.push(rot_run.report);

    let flows = [(0.75, 100usize), (std::f64::consts::FRAC_1_SQRT_2, 4000), (std::f64::consts::SQRT_2, 4000)]
        .iter()
        .map(|&(slope, wraps)| {
            let trace = integrate_flow(slope, (0.3, 0.7), wraps);
            let max_section_gap = trace.section_gaps.iter().copied().fold(0.0, f64::max);
            FlowEntry {
                slope_tan_eps: slope,
                wraps_budget: wraps,
                closed: trace.closed,
                winding: trace.winding,
                max_section_gap,
            }
        })
        .collect();

    Ok(WorkedExampleReport {
        format_version: FORMAT_VERSION,
        cells,
        rotated_labels,
        flows,
    })
}
