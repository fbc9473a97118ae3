//! Resolvent solves `u - tau f_l(u) = g` by damped Newton.
//!
//! Unknowns are restricted to the operator's support; connected pieces of
//! the support decouple and are solved independently (and concurrently).
//! Newton uses an Armijo line search on the residual in the pivot norm. If
//! the line search stalls the solve switches to a damped lagged-coefficient
//! (Picard) iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::operators::{Linearization, Pivot, SubOperator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_newton: usize,
    pub max_backtrack: usize,
    pub armijo_c: f64,
    pub fallback_picard: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_abs: 1e-11,
            tol_rel: 1e-9,
            max_newton: 50,
            max_backtrack: 30,
            armijo_c: 1e-4,
            fallback_picard: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.tol_abs > 0.0
            && self.tol_rel > 0.0
            && self.max_newton > 0
            && self.max_backtrack > 0
            && self.armijo_c > 0.0
            && self.fallback_picard > 0;
        if !positive {
            return Err(Error::Config("solver settings must all be positive".into()));
        }
        if self.tol_abs > 1e-6 {
            return Err(Error::Config(format!("tol_abs must be <= 1e-6, got {}", self.tol_abs)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ResolventResult {
    pub u: Field,
    pub newton_iters: usize,
    pub residual: f64,
    pub used_fallback: bool,
}

/// Connected pieces of `nodes` under the 3^d neighbourhood.
pub(crate) fn connected_pieces(grid: &Grid, nodes: &[usize]) -> Vec<Vec<usize>> {
    let mut member = vec![false; grid.node_count()];
    nodes.iter().for_each(|&k| member[k] = true);
    let mut seen = vec![false; grid.node_count()];
    let mut pieces = Vec::new();
    for &start in nodes {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut piece = Vec::new();
        while let Some(k) = stack.pop() {
            piece.push(k);
            for m in grid.ring(k) {
                if member[m] && !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        piece.sort_unstable();
        pieces.push(piece);
    }
    pieces
}

struct PieceOutcome {
    values: Vec<f64>,
    newton_iters: usize,
    used_fallback: bool,
    converged: bool,
}

struct PieceSolver<'a> {
    op: &'a SubOperator,
    tau: f64,
    g: &'a Field,
    nodes: &'a [usize],
    pos: Vec<usize>,
    pivot: Pivot,
}

impl PieceSolver<'_> {
    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let fu = self.op.apply_values(u);
        let g = self.g.values();
        self.nodes.iter().map(|&k| u[k] - self.tau * fu[k] - g[k]).collect()
    }

    fn merit(&self, r: &[f64]) -> Result<f64> {
        let grid = self.g.grid();
        match self.pivot {
            Pivot::L2 => {
                let w = grid.node_weights();
                Ok(self.nodes.iter().zip(r).map(|(&k, v)| w[k] * v * v).sum::<f64>().sqrt())
            }
            Pivot::HMinus1 => {
                let mut full = Field::zeros(grid);
                for (&k, v) in self.nodes.iter().zip(r) {
                    full.values_mut()[k] = *v;
                }
                self.pivot.norm(&full)
            }
        }
    }

    /// `I - tau * (linearized f)` on the piece.
    fn system(&self, u: &[f64], mode: Linearization) -> Result<BandMatrix> {
        let mut triplets = Vec::new();
        let mut bw = 0;
        self.op.linearize(u, mode, |i, j, v| {
            let (pi, pj) = (self.pos[i], self.pos[j]);
            if pi != usize::MAX && pj != usize::MAX {
                bw = bw.max(pi.abs_diff(pj));
                triplets.push((pi, pj, v));
            }
        });
        let mut a = BandMatrix::zeros(self.nodes.len(), bw);
        for p in 0..self.nodes.len() {
            a.add(p, p, 1.0);
        }
        for (i, j, v) in triplets {
            a.add(i, j, -self.tau * v);
        }
        Ok(a)
    }

    fn run(&self, target: f64, cfg: &SolverConfig) -> Result<PieceOutcome> {
        let mut u = self.g.values().to_vec();
        let mut r = self.residual(&u);
        let mut phi = self.merit(&r)?;
        let mut iters = 0;
        let mut stalled = false;

        while phi > target && iters < cfg.max_newton {
            iters += 1;
            let lu = self.system(&u, Linearization::Jacobian)?.factor()?;
            let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
            lu.solve_in_place(&mut d);

            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=cfg.max_backtrack {
                let mut trial = u.clone();
                for (&k, dk) in self.nodes.iter().zip(&d) {
                    trial[k] += lambda * dk;
                }
                let rt = self.residual(&trial);
                let pt = self.merit(&rt)?;
                if pt <= (1.0 - cfg.armijo_c * lambda) * phi {
                    accepted = Some((trial, rt, pt));
                    break;
                }
                lambda *= 0.5;
            }
            match accepted {
                Some((trial, rt, pt)) => {
                    u = trial;
                    r = rt;
                    phi = pt;
                }
                None => {
                    stalled = true;
                    break;
                }
            }
        }

        let mut used_fallback = false;
        if phi > target && (stalled || iters >= cfg.max_newton) {
            used_fallback = true;
            let g = self.g.values();
            let mut omega = 1.0f64;
            for _ in 0..cfg.fallback_picard {
                if phi <= target {
                    break;
                }
                let lu = self.system(&u, Linearization::Secant)?.factor()?;
                let mut next: Vec<f64> = self.nodes.iter().map(|&k| g[k]).collect();
                lu.solve_in_place(&mut next);
                let mut trial = u.clone();
                for (&k, nk) in self.nodes.iter().zip(&next) {
                    trial[k] += omega * (nk - trial[k]);
                }
                let pt = self.merit(&self.residual(&trial))?;
                if pt < phi {
                    u = trial;
                    phi = pt;
                    omega = (2.0 * omega).min(1.0);
                } else {
                    omega *= 0.5;
                    if omega < 1e-6 {
                        break;
                    }
                }
            }
        }
        Ok(PieceOutcome {
            values: self.nodes.iter().map(|&k| u[k]).collect(),
            newton_iters: iters,
            used_fallback,
            converged: phi <= target,
        })
    }
}

/// `(I - tau f_l)^{-1} g`.
pub fn solve_resolvent(op: &SubOperator, tau: f64, g: &Field, cfg: &SolverConfig) -> Result<ResolventResult> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidStep(tau));
    }
    let grid = op.grid();
    g.check_same_grid(&Field::zeros(grid))?;
    let pivot = op.pivot();
    let target = cfg.tol_abs + cfg.tol_rel * pivot.norm(g)?;
    let pieces = connected_pieces(grid, op.support());
    let per_piece = target / pieces.len().max(1) as f64;

    let outcomes: Vec<Result<PieceOutcome>> = pieces
        .par_iter()
        .map(|nodes| {
            let mut pos = vec![usize::MAX; grid.node_count()];
            for (p, &k) in nodes.iter().enumerate() {
                pos[k] = p;
            }
            PieceSolver { op, tau, g, nodes, pos, pivot }.run(per_piece, cfg)
        })
        .collect();

    let mut u = g.values().to_vec();
    let mut newton_iters = 0;
    let mut used_fallback = false;
    let mut converged = true;
    for (nodes, outcome) in pieces.iter().zip(outcomes) {
        let o = outcome?;
        for (&k, v) in nodes.iter().zip(&o.values) {
            u[k] = *v;
        }
        newton_iters += o.newton_iters;
        used_fallback |= o.used_fallback;
        converged &= o.converged;
    }
    let u = Field::new(grid, u)?;
    let fu = op.apply(&u);
    let residual = pivot.norm(&u.axpy(-tau, &fu).sub(g))?;
    if !converged || residual > target {
        return Err(Error::NonConvergence { residual, target, best: Box::new(u) });
    }
    Ok(ResolventResult { u, newton_iters, residual, used_fallback })
}

/// Largest `‖R u - R v‖_H / ‖u - v‖_H` over the pairs; identical pairs are skipped.
pub fn nonexpansivity_audit(op: &SubOperator, tau: f64, pairs: &[(Field, Field)], cfg: &SolverConfig) -> Result<f64> {
    let pivot = op.pivot();
    let mut worst = 0.0f64;
    for (u, v) in pairs {
        let den = pivot.norm(&u.sub(v))?;
        if den == 0.0 {
            continue;
        }
        let ru = solve_resolvent(op, tau, u, cfg)?.u;
        let rv = solve_resolvent(op, tau, v, cfg)?.u;
        worst = worst.max(pivot.norm(&ru.sub(&rv))? / den);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaRow {
    pub tau: f64,
    pub defect: f64,
}

/// `‖Σ_l f_l (I - tau s f_l)^{-1} u - f u‖_H` for each `tau`.
pub fn yosida_consistency(
    locals: &[SubOperator],
    full: &SubOperator,
    u: &Field,
    taus: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<YosidaRow>> {
    let s = locals.len() as f64;
    let fu = full.apply(u);
    taus.iter()
        .map(|&tau| {
            let mut acc = Field::zeros(u.grid());
            for op in locals {
                let v = solve_resolvent(op, tau * s, u, cfg)?.u;
                acc = acc.axpy(1.0, &op.apply(&v));
            }
            Ok(YosidaRow { tau, defect: full.pivot().norm(&acc.sub(&fu))? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{build_partition, DecompositionLayout};
    use crate::grid::build_grid;
    use crate::operators::{Family, ProblemKind};
    use crate::vectorfields::VectorFieldSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, zero_bc: bool) -> Field {
        let vals = (0..grid.node_count())
            .map(|k| if zero_bc && grid.is_boundary(k) { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        Field::new(grid, vals).unwrap()
    }

    fn dense_solve(a: Vec<Vec<f64>>, b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
        m.lu().solve(&nalgebra::DVector::from_vec(b)).expect("nonsingular").as_slice().to_vec()
    }

    #[test]
    fn constants_are_fixed_points() {
        let g = build_grid(1, &[17], &[0.0], &[1.0]).unwrap();
        let prob = ProblemKind::new(Family::PLaplaceNeumann, VectorFieldSpec::p_laplace(3.0).with_eps(0.0), 1).unwrap();
        let res = solve_resolvent(&SubOperator::full(&prob, &g), 0.3, &Field::constant(&g, 1.7), &SolverConfig::default()).unwrap();
        assert!(res.newton_iters <= 1);
        assert!(res.u.values().iter().all(|v| *v == 1.7));
    }

    #[test]
    fn zero_is_fixed_for_porous_medium() {
        let g = build_grid(1, &[17], &[0.0], &[1.0]).unwrap();
        let prob = ProblemKind::porous_medium(3.0, 1).unwrap();
        let res = solve_resolvent(&SubOperator::full(&prob, &g), 0.3, &Field::zeros(&g), &SolverConfig::default()).unwrap();
        assert!(res.u.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_nonpositive_step() {
        let g = build_grid(1, &[9], &[0.0], &[1.0]).unwrap();
        let op = SubOperator::full(&ProblemKind::p_laplace(3.0, 1).unwrap(), &g);
        assert!(matches!(solve_resolvent(&op, 0.0, &Field::zeros(&g), &SolverConfig::default()), Err(Error::InvalidStep(_))));
    }

    #[test]
    fn p2_matches_dense_solve() {
        let g = build_grid(1, &[21], &[0.0], &[1.0]).unwrap();
        let n = 21;
        let h2 = g.dx()[0].powi(2);
        let tau = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rhs = random(&g, &mut rng, false);
        let op = SubOperator::full(&ProblemKind::p_laplace(2.0, 1).unwrap(), &g);
        let u = solve_resolvent(&op, tau, &rhs, &SolverConfig::default()).unwrap().u;
        // I - tau * Neumann Laplacian, assembled directly
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 1.0;
            let (l, r) = (i.checked_sub(1), (i + 1 < n).then_some(i + 1));
            let mult = if l.is_none() || r.is_none() { 2.0 } else { 1.0 };
            for j in [l, r].into_iter().flatten() {
                a[i][j] -= tau * mult / h2;
                a[i][i] += tau * mult / h2;
            }
        }
        let x = dense_solve(a, rhs.values().to_vec());
        let err: f64 = x.iter().zip(u.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9 * x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn identity_outside_support_and_pieces_decouple() {
        let g = build_grid(1, &[41], &[0.0], &[1.0]).unwrap();
        let pou = build_partition(&g, &DecompositionLayout::separating(2, 0.1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for prob in [ProblemKind::p_laplace(3.0, 1).unwrap(), ProblemKind::porous_medium(3.0, 1).unwrap()] {
            for l in 0..2 {
                let op = SubOperator::local(&prob, &pou, l);
                let rhs = random(&g, &mut rng, prob.family == Family::PorousMediumDirichlet);
                let res = solve_resolvent(&op, 0.1, &rhs, &SolverConfig::default()).unwrap();
                let mut inside = vec![false; 41];
                op.support().iter().for_each(|&k| inside[k] = true);
                for k in 0..41 {
                    if !inside[k] {
                        assert_eq!(res.u.values()[k], rhs.values()[k]);
                    }
                }
            }
            let frame = SubOperator::local(&prob, &pou, 1);
            assert_eq!(connected_pieces(&g, frame.support()).len(), 2);
        }
    }

    #[test]
    fn nonexpansive_and_damping() {
        let g = build_grid(1, &[33], &[0.0], &[1.0]).unwrap();
        let pou = build_partition(&g, &DecompositionLayout::strips(2, 0.125)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = SolverConfig::default();
        for (prob, zero_bc) in [
            (ProblemKind::p_laplace(3.0, 1).unwrap(), false),
            (ProblemKind::porous_medium(3.0, 1).unwrap(), true),
            (ProblemKind::new(Family::PorousMediumDirichlet, VectorFieldSpec::stefan(1.0, 2.0), 1).unwrap(), true),
        ] {
            let mut ops = SubOperator::all_local(&prob, &pou);
            ops.push(SubOperator::full(&prob, &g));
            for op in &ops {
                let pairs: Vec<_> = (0..10).map(|_| (random(&g, &mut rng, zero_bc), random(&g, &mut rng, zero_bc))).collect();
                let ratio = nonexpansivity_audit(op, 0.1, &pairs, &cfg).unwrap();
                assert!(ratio <= 1.0 + 1e-7, "{:?} {:?}: {ratio}", prob.family, op.index());
                for (u, _) in &pairs {
                    let ru = solve_resolvent(op, 0.1, u, &cfg).unwrap().u;
                    let p = op.pivot();
                    assert!(p.norm(&ru).unwrap() <= p.norm(u).unwrap() * (1.0 + 1e-7));
                }
            }
        }
    }

    #[test]
    fn yosida_defect_shrinks() {
        let g = build_grid(1, &[17], &[0.0], &[1.0]).unwrap();
        let pou = build_partition(&g, &DecompositionLayout::strips(2, 0.125)).unwrap();
        let prob = ProblemKind::p_laplace(2.0, 1).unwrap();
        let locals = SubOperator::all_local(&prob, &pou);
        let full = SubOperator::full(&prob, &g);
        let u = Field::from_fn(&g, |x| (std::f64::consts::PI * x[0]).cos());
        // asymptotic regime needs tau * ‖f‖ << 1, ‖f‖ ~ 4/dx^2
        let taus = [4e-5, 2e-5, 1e-5, 5e-6];
        let rows = yosida_consistency(&locals, &full, &u, &taus, &SolverConfig::default()).unwrap();
        for w in rows.windows(2) {
            let ratio = w[0].defect / w[1].defect;
            assert!(ratio > 1.6 && ratio < 2.4, "{rows:?}");
        }
        let zero = yosida_consistency(&locals, &full, &Field::zeros(&g), &taus, &SolverConfig::default()).unwrap();
        assert!(zero.iter().all(|r| r.defect == 0.0));
    }
}
