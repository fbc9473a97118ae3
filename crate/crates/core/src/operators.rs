//! Full and decomposed vector fields `f` and `f_l`.
//!
//! p-Laplace / Neumann: `f_l u = div_N(chi_l alpha(grad u))` with `chi_l`
//! evaluated on faces. Porous-medium / Dirichlet: `f_l u = Δ_D(chi_l alpha(u))`
//! with `chi_l` on nodes and the product zeroed on the boundary.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decomposition::PartitionOfUnity;
use crate::error::{Error, Result};
use crate::grid::{self, face_gradient, Field, Grid};
use crate::vectorfields::{FieldKind, VectorFieldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PLaplaceNeumann,
    PorousMediumDirichlet,
}

/// Hilbert space in which a family is dissipative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pivot {
    L2,
    HMinus1,
}

impl Pivot {
    pub fn inner(self, u: &Field, v: &Field) -> Result<f64> {
        match self {
            Pivot::L2 => grid::l2_inner(u, v),
            Pivot::HMinus1 => grid::hminus1_inner(u, v),
        }
    }

    pub fn norm(self, u: &Field) -> Result<f64> {
        match self {
            Pivot::L2 => Ok(grid::l2_norm(u)),
            Pivot::HMinus1 => grid::hminus1_norm(u),
        }
    }
}

impl Family {
    pub fn pivot(self) -> Pivot {
        match self {
            Family::PLaplaceNeumann => Pivot::L2,
            Family::PorousMediumDirichlet => Pivot::HMinus1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemKind {
    pub family: Family,
    pub spec: VectorFieldSpec,
}

impl ProblemKind {
    pub fn new(family: Family, spec: VectorFieldSpec, dim: usize) -> Result<Self> {
        spec.validate(dim)?;
        let ok = match family {
            Family::PLaplaceNeumann => spec.kind == FieldKind::PLaplace,
            Family::PorousMediumDirichlet => {
                matches!(spec.kind, FieldKind::PorousMedium | FieldKind::FastDiffusion | FieldKind::Stefan)
            }
        };
        if !ok {
            return Err(Error::InvalidVectorField(format!("{:?} cannot drive {family:?}", spec.kind)));
        }
        Ok(Self { family, spec })
    }

    pub fn p_laplace(p: f64, dim: usize) -> Result<Self> {
        Self::new(Family::PLaplaceNeumann, VectorFieldSpec::p_laplace(p), dim)
    }

    pub fn porous_medium(p: f64, dim: usize) -> Result<Self> {
        Self::new(Family::PorousMediumDirichlet, VectorFieldSpec::porous_medium(p), dim)
    }

    pub fn pivot(&self) -> Pivot {
        self.family.pivot()
    }
}

/// How `alpha` is linearized when assembling a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    /// Exact derivative (Newton).
    Jacobian,
    /// Frozen secant coefficient, `alpha(z) ≈ s(z0) z` (Picard/Kačanov).
    Secant,
}

/// `f` (full) or `f_l` restricted to the sites where `chi_l` is positive.
#[derive(Debug, Clone)]
pub struct SubOperator {
    problem: ProblemKind,
    grid: Arc<Grid>,
    index: Option<usize>,
    // faces (p-Laplace) or interior nodes (porous medium) with their weight
    sites: Vec<(usize, f64)>,
    support: Vec<usize>,
}

impl SubOperator {
    pub fn full(problem: &ProblemKind, grid: &Arc<Grid>) -> Self {
        let sites = match problem.family {
            Family::PLaplaceNeumann => (0..grid.face_count()).map(|f| (f, 1.0)).collect(),
            Family::PorousMediumDirichlet => grid.interior_nodes().iter().map(|&k| (k, 1.0)).collect(),
        };
        Self {
            problem: problem.clone(),
            grid: grid.clone(),
            index: None,
            sites,
            support: (0..grid.node_count()).collect(),
        }
    }

    pub fn local(problem: &ProblemKind, pou: &PartitionOfUnity, l: usize) -> Self {
        let grid = pou.grid();
        let sites = match problem.family {
            Family::PLaplaceNeumann => pou.face_weights[l]
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(f, w)| (f, *w))
                .collect(),
            Family::PorousMediumDirichlet => pou.support[l]
                .iter()
                .filter(|&&k| !grid.is_boundary(k))
                .map(|&k| (k, pou.node_weights[l][k]))
                .collect(),
        };
        Self {
            problem: problem.clone(),
            grid: grid.clone(),
            index: Some(l),
            sites,
            support: pou.support_closure(l),
        }
    }

    /// All `f_l` in ascending order.
    pub fn all_local(problem: &ProblemKind, pou: &PartitionOfUnity) -> Vec<Self> {
        (0..pou.len()).map(|l| Self::local(problem, pou, l)).collect()
    }

    pub fn problem(&self) -> &ProblemKind {
        &self.problem
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `None` for the full operator.
    pub fn index(&self) -> Option<usize> {
        self.index
    }

    /// Nodes outside which `apply` vanishes and the resolvent is the identity.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn pivot(&self) -> Pivot {
        self.problem.pivot()
    }

    pub fn apply(&self, u: &Field) -> Field {
        Field::from_raw(&self.grid, self.apply_values(u.values()))
    }

    pub(crate) fn apply_values(&self, u: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let spec = &self.problem.spec;
        let mut out = vec![0.0; grid.node_count()];
        match self.problem.family {
            Family::PLaplaceNeumann => {
                let d = grid.dim();
                let mut z = [0.0; 2];
                let mut a = [0.0; 2];
                let weights = grid.node_weights();
                for &(f, chi) in &self.sites {
                    let stencil = &grid.stencils()[f];
                    face_gradient(stencil, u, &mut z[..d]);
                    spec.alpha(&z[..d], &mut a[..d]);
                    let wf = grid.faces()[f].weight * chi;
                    for (c, comp) in stencil.components.iter().enumerate() {
                        for &(k, w) in comp {
                            out[k] -= w * wf * a[c] / weights[k];
                        }
                    }
                }
            }
            Family::PorousMediumDirichlet => {
                let mut q = vec![0.0; grid.node_count()];
                for &(k, chi) in &self.sites {
                    q[k] = chi * spec.alpha_scalar(u[k]);
                }
                for &(k, _) in &self.sites {
                    let qk = q[k];
                    if qk == 0.0 {
                        continue;
                    }
                    for axis in 0..grid.dim() {
                        let c = qk / (grid.dx()[axis] * grid.dx()[axis]);
                        out[k] -= 2.0 * c;
                        let s = grid.stride(axis);
                        for nb in [k - s, k + s] {
                            if !grid.is_boundary(nb) {
                                out[nb] += c;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Emits `(i, j, d f_i / d u_j)` for the chosen linearization at `u`.
    pub fn linearize(&self, u: &[f64], mode: Linearization, mut emit: impl FnMut(usize, usize, f64)) {
        let grid = &self.grid;
        let spec = &self.problem.spec;
        match self.problem.family {
            Family::PLaplaceNeumann => {
                let d = grid.dim();
                let mut z = [0.0; 2];
                let mut jac = [0.0; 4];
                let weights = grid.node_weights();
                for &(f, chi) in &self.sites {
                    let stencil = &grid.stencils()[f];
                    face_gradient(stencil, u, &mut z[..d]);
                    match mode {
                        Linearization::Jacobian => spec.alpha_jacobian(&z[..d], &mut jac[..d * d]),
                        Linearization::Secant => {
                            let s = spec.secant(&z[..d]);
                            jac = [0.0; 4];
                            (0..d).for_each(|c| jac[c * d + c] = s);
                        }
                    }
                    let wf = grid.faces()[f].weight * chi;
                    for (c, ci) in stencil.components.iter().enumerate() {
                        for (cp, cj) in stencil.components.iter().enumerate() {
                            let a = jac[c * d + cp];
                            if a == 0.0 {
                                continue;
                            }
                            for &(i, wi) in ci {
                                let scale = -wf * a * wi / weights[i];
                                for &(j, wj) in cj {
                                    emit(i, j, scale * wj);
                                }
                            }
                        }
                    }
                }
            }
            Family::PorousMediumDirichlet => {
                for &(j, chi) in &self.sites {
                    let dj = chi
                        * match mode {
                            Linearization::Jacobian => spec.alpha_prime(u[j]),
                            Linearization::Secant => spec.secant(&[u[j]]),
                        };
                    if dj == 0.0 {
                        continue;
                    }
                    for axis in 0..grid.dim() {
                        let c = dj / (grid.dx()[axis] * grid.dx()[axis]);
                        emit(j, j, -2.0 * c);
                        let s = grid.stride(axis);
                        for nb in [j - s, j + s] {
                            if !grid.is_boundary(nb) {
                                emit(nb, j, c);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `‖f u - Σ f_l u‖ / max(1, ‖f u‖)` in the discrete L² norm.
pub fn decomposition_residual(problem: &ProblemKind, pou: &PartitionOfUnity, u: &Field) -> f64 {
    let full = SubOperator::full(problem, pou.grid()).apply(u);
    let mut sum = Field::zeros(pou.grid());
    for op in SubOperator::all_local(problem, pou) {
        sum = sum.axpy(1.0, &op.apply(u));
    }
    grid::l2_norm(&full.sub(&sum)) / grid::l2_norm(&full).max(1.0)
}

/// `<f u - f v, u - v>_H` in the pivot space of the operator.
pub fn dissipativity_gap(op: &SubOperator, u: &Field, v: &Field) -> Result<f64> {
    u.check_same_grid(v)?;
    let df = op.apply(u).sub(&op.apply(v));
    op.pivot().inner(&df, &u.sub(v))
}
