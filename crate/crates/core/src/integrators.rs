//! Time steppers built from subdomain resolvents.
//!
//! * sum splitting: `u ↦ (1/s) Σ_l (I - s h f_l)^{-1} u`, solves run concurrently
//!   and are reduced in ascending `l`;
//! * Lie splitting: `u ↦ (I - h f_s)^{-1} ⋯ (I - h f_1)^{-1} u`, sequential sweep;
//! * backward Euler on the full operator, the Crandall–Liggett reference;
//! * perturbed variants for `u' = (f + g) u` with a linear Lipschitz `g`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::PartitionOfUnity;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::operators::{ProblemKind, SubOperator};
use crate::resolvent::{solve_resolvent, ResolventResult, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    SumSplitting,
    LieSplitting,
    BackwardEuler,
    /// `(I - h g)^{-1} B_h`
    PerturbedModified,
    /// `(I + h g) B_h`
    PerturbedSemiImplicit,
}

/// Unperturbed step `B_h` underneath a perturbed scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseScheme {
    Sum,
    #[default]
    Lie,
    BackwardEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    #[default]
    Ascending,
    Descending,
}

/// `g(u) = coefficient * u`; Lipschitz with shift `M = max(coefficient, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPerturbation {
    pub coefficient: f64,
}

impl LinearPerturbation {
    pub fn apply(&self, u: &Field) -> Field {
        u.scale(self.coefficient)
    }

    pub fn shift(&self) -> f64 {
        self.coefficient.max(0.0)
    }

    /// `(I - h g)^{-1} v`.
    pub fn resolvent(&self, h: f64, v: &Field) -> Result<Field> {
        let m = self.shift();
        if m > 0.0 && h * m >= 1.0 {
            return Err(Error::StepTooLarge { h, m });
        }
        Ok(v.scale(1.0 / (1.0 - h * self.coefficient)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    #[serde(default)]
    pub base: BaseScheme,
    #[serde(default)]
    pub perturbation: Option<LinearPerturbation>,
    #[serde(default)]
    pub sweep: SweepOrder,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind) -> Self {
        Self { kind, base: BaseScheme::default(), perturbation: None, sweep: SweepOrder::default() }
    }

    pub fn perturbed(kind: SchemeKind, base: BaseScheme, coefficient: f64) -> Self {
        Self { kind, base, perturbation: Some(LinearPerturbation { coefficient }), sweep: SweepOrder::default() }
    }

    pub fn is_perturbed(&self) -> bool {
        matches!(self.kind, SchemeKind::PerturbedModified | SchemeKind::PerturbedSemiImplicit)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_perturbed() && self.perturbation.is_none() {
            return Err(Error::Config(format!("{:?} needs a perturbation", self.kind)));
        }
        Ok(())
    }

    /// Fully implicit counterpart, used as the convergence reference.
    pub fn reference(&self) -> SchemeSpec {
        match self.perturbation {
            Some(p) if self.is_perturbed() => SchemeSpec {
                kind: SchemeKind::PerturbedModified,
                base: BaseScheme::BackwardEuler,
                perturbation: Some(p),
                sweep: self.sweep,
            },
            _ => SchemeSpec::new(SchemeKind::BackwardEuler),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub solves: usize,
    pub newton_iters: usize,
    pub fallbacks: usize,
}

impl StepStats {
    fn record(&mut self, r: &ResolventResult) {
        self.solves += 1;
        self.newton_iters += r.newton_iters;
        self.fallbacks += usize::from(r.used_fallback);
    }

    pub fn merge(&mut self, other: &StepStats) {
        self.solves += other.solves;
        self.newton_iters += other.newton_iters;
        self.fallbacks += other.fallbacks;
    }
}

/// Problem, partition and the prebuilt full and local operators.
#[derive(Debug, Clone)]
pub struct Splitting {
    problem: ProblemKind,
    pou: Arc<PartitionOfUnity>,
    locals: Vec<SubOperator>,
    full: SubOperator,
}

impl Splitting {
    pub fn new(problem: ProblemKind, pou: Arc<PartitionOfUnity>) -> Self {
        let locals = SubOperator::all_local(&problem, &pou);
        let full = SubOperator::full(&problem, pou.grid());
        Self { problem, pou, locals, full }
    }

    pub fn problem(&self) -> &ProblemKind {
        &self.problem
    }

    pub fn partition(&self) -> &Arc<PartitionOfUnity> {
        &self.pou
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.pou.grid()
    }

    pub fn locals(&self) -> &[SubOperator] {
        &self.locals
    }

    pub fn full(&self) -> &SubOperator {
        &self.full
    }

    fn check_step(h: f64) -> Result<()> {
        if h > 0.0 && h.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidStep(h))
        }
    }

    pub fn step_sum(&self, h: f64, u: &Field, cfg: &SolverConfig) -> Result<(Field, StepStats)> {
        Self::check_step(h)?;
        let s = self.locals.len() as f64;
        let solved: Vec<Result<ResolventResult>> =
            self.locals.par_iter().map(|op| solve_resolvent(op, s * h, u, cfg)).collect();
        let mut stats = StepStats::default();
        let mut acc = Field::zeros(self.grid());
        for r in solved {
            let r = r?;
            stats.record(&r);
            acc = acc.axpy(1.0, &r.u);
        }
        Ok((acc.scale(1.0 / s), stats))
    }

    pub fn step_lie(&self, h: f64, u: &Field, cfg: &SolverConfig, order: SweepOrder) -> Result<(Field, StepStats)> {
        Self::check_step(h)?;
        let mut stats = StepStats::default();
        let mut v = u.clone();
        let sweep: Box<dyn Iterator<Item = &SubOperator>> = match order {
            SweepOrder::Ascending => Box::new(self.locals.iter()),
            SweepOrder::Descending => Box::new(self.locals.iter().rev()),
        };
        for op in sweep {
            let r = solve_resolvent(op, h, &v, cfg)?;
            stats.record(&r);
            v = r.u;
        }
        Ok((v, stats))
    }

    pub fn step_backward_euler(&self, h: f64, u: &Field, cfg: &SolverConfig) -> Result<(Field, StepStats)> {
        Self::check_step(h)?;
        let r = solve_resolvent(&self.full, h, u, cfg)?;
        let mut stats = StepStats::default();
        stats.record(&r);
        Ok((r.u, stats))
    }

    fn step_base(&self, base: BaseScheme, sweep: SweepOrder, h: f64, u: &Field, cfg: &SolverConfig) -> Result<(Field, StepStats)> {
        match base {
            BaseScheme::Sum => self.step_sum(h, u, cfg),
            BaseScheme::Lie => self.step_lie(h, u, cfg, sweep),
            BaseScheme::BackwardEuler => self.step_backward_euler(h, u, cfg),
        }
    }

    pub fn step_perturbed(&self, scheme: &SchemeSpec, h: f64, u: &Field, cfg: &SolverConfig) -> Result<(Field, StepStats)> {
        let g = scheme
            .perturbation
            .ok_or_else(|| Error::Config("perturbed step without a perturbation".into()))?;
        let m = g.shift();
        if m > 0.0 && h * m >= 1.0 {
            return Err(Error::StepTooLarge { h, m });
        }
        let (v, stats) = self.step_base(scheme.base, scheme.sweep, h, u, cfg)?;
        let w = match scheme.kind {
            SchemeKind::PerturbedSemiImplicit => v.axpy(h, &g.apply(&v)),
            _ => g.resolvent(h, &v)?,
        };
        Ok((w, stats))
    }

    pub fn step(&self, scheme: &SchemeSpec, h: f64, u: &Field, cfg: &SolverConfig) -> Result<(Field, StepStats)> {
        match scheme.kind {
            SchemeKind::SumSplitting => self.step_sum(h, u, cfg),
            SchemeKind::LieSplitting => self.step_lie(h, u, cfg, scheme.sweep),
            SchemeKind::BackwardEuler => self.step_backward_euler(h, u, cfg),
            SchemeKind::PerturbedModified | SchemeKind::PerturbedSemiImplicit => self.step_perturbed(scheme, h, u, cfg),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    /// `stats[i]` belongs to the step producing `states[i + 1]`.
    pub stats: Vec<StepStats>,
}

impl Trajectory {
    pub fn last(&self) -> &Field {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn total_stats(&self) -> StepStats {
        let mut t = StepStats::default();
        self.stats.iter().for_each(|s| t.merge(s));
        t
    }
}

/// `n` steps of size `final_time / n` from `initial`.
pub fn integrate(
    scheme: &SchemeSpec,
    splitting: &Splitting,
    initial: &Field,
    final_time: f64,
    n: usize,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    scheme.validate()?;
    if !(final_time > 0.0) || n == 0 {
        return Err(Error::Config(format!("need T > 0 and n >= 1, got T = {final_time}, n = {n}")));
    }
    let h = final_time / n as f64;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut stats = Vec::with_capacity(n);
    times.push(0.0);
    states.push(initial.clone());
    for k in 0..n {
        let (next, st) = splitting
            .step(scheme, h, &states[k], cfg)
            .map_err(|e| Error::Step { index: k, source: Box::new(e) })?;
        times.push(if k + 1 == n { final_time } else { (k + 1) as f64 * h });
        states.push(next);
        stats.push(st);
    }
    Ok(Trajectory { times, states, stats })
}
