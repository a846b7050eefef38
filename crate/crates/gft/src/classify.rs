//! The two classification flowcharts — algebraic completeness of the
//! commuting set (Type I/II/III) and transform-space topology (D/C/SD) —
//! composed into the grid cell for a (manifold, MASA) pair. Classification
//! is a pure function of member metadata and manifest-level flags; matrix
//! entries never enter, which is exactly why isometry conjugation cannot
//! change a result.

use serde::{Deserialize, Serialize};

use crate::error::{GftError, Result};
use crate::manifold::ManifoldSpec;
use crate::symmetry::{MasaCandidate, OperatorOrigin, SymmetryOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgebraicClass {
    TypeI,
    TypeII,
    TypeIII,
}

impl std::fmt::Display for AlgebraicClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlgebraicClass::TypeI => "Type I",
            AlgebraicClass::TypeII => "Type II",
            AlgebraicClass::TypeIII => "Type III",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopologyClass {
    D,
    C,
    SD,
}

impl std::fmt::Display for TopologyClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TopologyClass::D => "D",
            TopologyClass::C => "C",
            TopologyClass::SD => "SD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisTopology {
    Discrete,
    Continuum,
}

/// Classification-relevant metadata of one commuting-set member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasaMember {
    pub id: String,
    /// Differential order (1 = flow generator, 2 = quadratic invariant).
    pub order: usize,
    pub origin: OperatorOrigin,
}

#[derive(Debug, Clone)]
pub struct ClassificationInput {
    pub manifold: ManifoldSpec,
    pub members: Vec<MasaMember>,
    /// Whether the computed spectrum has any degenerate cluster.
    pub degeneracy_present: bool,
    /// Verdict of the eigenform integrability check; required whenever a
    /// member originates from a rank-2 Killing tensor.
    pub frobenius_pass: Option<bool>,
    /// One tag per transform-space label axis.
    pub axis_topologies: Vec<AxisTopology>,
}

impl ClassificationInput {
    /// Resolve a search candidate against the operator catalog it was drawn
    /// from, keeping only metadata. The Laplacian member is skipped when the
    /// candidate carries it functionally.
    pub fn from_candidate(
        manifold: &ManifoldSpec,
        candidate: &MasaCandidate,
        catalog: &[SymmetryOperator],
        degeneracy_present: bool,
        frobenius_pass: Option<bool>,
        axis_topologies: Vec<AxisTopology>,
    ) -> Result<Self> {
        let mut members = Vec::new();
        for id in &candidate.members {
            let op = catalog
                .iter()
                .find(|o| &o.id == id)
                .ok_or_else(|| GftError::LabelMismatch(format!("member '{id}' not in catalog")))?;
            members.push(MasaMember {
                id: op.id.clone(),
                order: op.order,
                origin: op.origin,
            });
        }
        Ok(ClassificationInput {
            manifold: manifold.clone(),
            members,
            degeneracy_present,
            frobenius_pass,
            axis_topologies,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub algebraic: AlgebraicClass,
    pub topology: TopologyClass,
    /// Flowchart decisions in the order they were taken; each names its rule
    /// and ends with the verdict it forced, so the result can be re-read off
    /// the rationale alone.
    pub rationale: Vec<String>,
}

impl ClassificationResult {
    /// Compact cell code, e.g. "I-SD".
    pub fn cell_code(&self) -> String {
        let roman = match self.algebraic {
            AlgebraicClass::TypeI => "I",
            AlgebraicClass::TypeII => "II",
            AlgebraicClass::TypeIII => "III",
        };
        format!("{roman}-{}", self.topology)
    }
}

fn algebraic_branch(input: &ClassificationInput) -> Result<(AlgebraicClass, Vec<String>)> {
    let n = input.manifold.dim;
    let mut why = Vec::new();

    if !input.degeneracy_present {
        return if n == 1 {
            why.push(
                "simple-spectrum rule: on a 1-manifold the Laplacian alone is complete at order 2 and its coordinate is Stackel => Type I"
                    .into(),
            );
            Ok((AlgebraicClass::TypeI, why))
        } else {
            why.push(format!(
                "simple-spectrum rule: a non-degenerate spectrum on a {n}-manifold admits no independent commuting partners, incomplete at order 2 => Type III"
            ));
            Ok((AlgebraicClass::TypeIII, why))
        };
    }

    let rank = input
        .members
        .iter()
        .filter(|m| m.origin != OperatorOrigin::Laplacian)
        .count();
    if rank + 1 < n {
        why.push(format!(
            "completeness rule: {rank} non-Laplacian members < n-1 = {} on a degenerate spectrum => Type III",
            n - 1
        ));
        return Ok((AlgebraicClass::TypeIII, why));
    }
    why.push(format!(
        "completeness rule: {rank} non-Laplacian members cover n-1 = {}, complete at order 2",
        n - 1
    ));

    let mut tensor_ids: Vec<&str> = input
        .members
        .iter()
        .filter(|m| m.origin == OperatorOrigin::KillingTensor)
        .map(|m| m.id.as_str())
        .collect();
    tensor_ids.sort_unstable();
    if tensor_ids.is_empty() {
        why.push(
            "integrability rule: no rank-2 members, eigenforms trivially integrable => Type I"
                .into(),
        );
        return Ok((AlgebraicClass::TypeI, why));
    }
    match input.frobenius_pass {
        None => Err(GftError::MissingFrobeniusEvidence(tensor_ids.join(", "))),
        Some(false) => {
            why.push(format!(
                "integrability rule: rank-2 member(s) {} fail the eigenform wedge test => Type II",
                tensor_ids.join(", ")
            ));
            Ok((AlgebraicClass::TypeII, why))
        }
        Some(true) => {
            why.push(format!(
                "integrability rule: rank-2 member(s) {} pass the eigenform wedge test => Type I",
                tensor_ids.join(", ")
            ));
            Ok((AlgebraicClass::TypeI, why))
        }
    }
}

fn topology_branch(input: &ClassificationInput) -> Result<(TopologyClass, Vec<String>)> {
    if input.axis_topologies.is_empty() {
        return Err(GftError::Manifest(
            "classification needs at least one label-axis topology tag".into(),
        ));
    }
    let continuum = input
        .axis_topologies
        .iter()
        .filter(|t| **t == AxisTopology::Continuum)
        .count();
    let total = input.axis_topologies.len();
    if continuum > 0 && input.manifold.compact && !input.manifold.truncation {
        let axis = input
            .axis_topologies
            .iter()
            .position(|t| *t == AxisTopology::Continuum)
            .unwrap();
        return Err(GftError::InconsistentCompactness(format!("k{axis}")));
    }
    let mut why = Vec::new();
    let class = if continuum == 0 {
        why.push(format!(
            "axis rule: all {total} label axes discrete => D"
        ));
        TopologyClass::D
    } else if continuum == total {
        why.push(format!(
            "axis rule: all {total} label axes continuum => C"
        ));
        TopologyClass::C
    } else {
        why.push(format!(
            "axis rule: {continuum} of {total} label axes continuum, mixed => SD"
        ));
        TopologyClass::SD
    };
    Ok((class, why))
}

/// Fig.-2-style algebraic verdict alone.
pub fn classify_algebraic(input: &ClassificationInput) -> Result<AlgebraicClass> {
    algebraic_branch(input).map(|(c, _)| c)
}

/// Fig.-3-style topology verdict alone.
pub fn classify_topology(input: &ClassificationInput) -> Result<TopologyClass> {
    topology_branch(input).map(|(c, _)| c)
}

/// Both flowcharts composed into the grid cell, with the decision trail.
pub fn grid_cell(input: &ClassificationInput) -> Result<ClassificationResult> {
    let (algebraic, mut rationale) = algebraic_branch(input)?;
    let (topology, topo_why) = topology_branch(input)?;
    rationale.extend(topo_why);
    Ok(ClassificationResult {
        algebraic,
        topology,
        rationale,
    })
}
