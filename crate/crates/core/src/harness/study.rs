//! Convergence studies against a fine implicit or exact reference.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::harness::barenblatt::BarenblattParams;
use crate::harness::config::{barenblatt_field, ExperimentConfig, ReferenceSpec};
use crate::harness::probe::{propagation_probe, support_radius, SupportTable};
use crate::integrators::{integrate, Splitting, Trajectory};
use crate::operators::Pivot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    /// Pivot-norm error at the final time.
    pub error_final: f64,
    /// Largest pivot-norm error over the times shared with the reference.
    pub error_sup: f64,
    /// `log(e_prev / e) / log(n / n_prev)`; absent in the first row.
    pub observed_order: Option<f64>,
    pub wall_ms: f64,
    pub newton_total: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub name: String,
    pub final_time: f64,
    pub pivot: Pivot,
    pub reference: String,
    pub rows: Vec<ConvergenceRow>,
    /// Support growth of the finest run, when a probe was requested.
    pub probe: Option<SupportTable>,
    /// Trajectory of the finest run.
    pub finest: Option<Trajectory>,
}

impl ConvergenceReport {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error_final).collect()
    }

    /// Zeroes the wall-clock column, the only nondeterministic output.
    pub fn strip_timing(&mut self) {
        self.rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
    }

    pub fn summary(&self) -> String {
        let pivot = match self.pivot {
            Pivot::L2 => "L2",
            Pivot::HMinus1 => "H^-1",
        };
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.name);
        let _ = writeln!(s, "reference:  {}", self.reference);
        let _ = writeln!(s, "final time: {}   error norm: {pivot}", self.final_time);
        let _ = writeln!(s, "{:>8} {:>12} {:>12} {:>12} {:>8} {:>10} {:>8}", "n", "h", "err(T)", "err sup", "order", "wall ms", "newton");
        for r in &self.rows {
            let order = r.observed_order.map_or("-".to_string(), |o| format!("{o:.3}"));
            let _ = writeln!(
                s,
                "{:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>8} {:>10.1} {:>8}",
                r.n, r.h, r.error_final, r.error_sup, order, r.wall_ms, r.newton_total
            );
        }
        if let Some(p) = &self.probe {
            let _ = writeln!(
                s,
                "support (|u| > {:.0e}): initial radius {:.4}, final radius {:.4} ({:.1} cells), worst shrink {:.2} cells",
                p.threshold,
                p.initial_radius,
                p.final_radius(),
                p.final_radius() / p.cell,
                p.worst_shrink_cells()
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub enum Reference {
    Discrete { n: usize, trajectory: Trajectory },
    Barenblatt { params: BarenblattParams, center: Vec<f64> },
}

impl Reference {
    pub fn describe(&self) -> String {
        match self {
            Reference::Discrete { n, .. } => format!("implicit run with {n} steps"),
            Reference::Barenblatt { params, .. } => {
                format!("Barenblatt profile, m = {}, C = {:.6}, t0 = {}", params.m, params.c, params.t0)
            }
        }
    }

    /// Reference state at step `k` of an `n`-step run, when that time is shared.
    pub fn state_at(&self, grid: &Arc<Grid>, final_time: f64, k: usize, n: usize) -> Result<Option<Field>> {
        match self {
            Reference::Discrete { n: n_ref, trajectory } => {
                if (k * n_ref) % n != 0 {
                    return Ok(None);
                }
                Ok(Some(trajectory.states[k * n_ref / n].clone()))
            }
            Reference::Barenblatt { params, center } => {
                let t = if k == n { final_time } else { k as f64 * final_time / n as f64 };
                barenblatt_field(grid, params, center, params.t0 + t).map(Some)
            }
        }
    }
}

/// Everything built once per experiment.
pub struct Study {
    pub config: ExperimentConfig,
    pub grid: Arc<Grid>,
    pub splitting: Splitting,
    pub initial: Field,
}

impl Study {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.build_grid()?;
        let splitting = config.build_splitting(&grid)?;
        let initial = config.initial_field(&grid)?;
        Ok(Self { config: config.clone(), grid, splitting, initial })
    }

    pub fn run(&self, n: usize) -> Result<Trajectory> {
        integrate(&self.config.scheme, &self.splitting, &self.initial, self.config.time.final_time, n, &self.config.solver)
    }

    pub fn reference(&self) -> Result<Reference> {
        let cfg = &self.config;
        match cfg.reference {
            ReferenceSpec::BackwardEuler { n_ref } => {
                let n = n_ref.unwrap_or(16 * cfg.time.steps.last().copied().unwrap_or(1));
                let trajectory = integrate(&cfg.scheme.reference(), &self.splitting, &self.initial, cfg.time.final_time, n, &cfg.solver)?;
                Ok(Reference::Discrete { n, trajectory })
            }
            ReferenceSpec::Barenblatt => {
                let (params, center) = cfg
                    .barenblatt()?
                    .ok_or_else(|| Error::ReferenceUnavailable("initial datum is not a Barenblatt profile".into()))?;
                if !cfg.barenblatt_is_exact()? {
                    return Err(Error::ReferenceUnavailable("Barenblatt profile does not solve this problem".into()));
                }
                if cfg.scheme.is_perturbed() {
                    return Err(Error::ReferenceUnavailable("no closed form for perturbed problems".into()));
                }
                let reach = params.support_radius(params.t0 + cfg.time.final_time);
                let room = (0..self.grid.dim())
                    .map(|a| (center[a] - self.grid.lo()[a]).min(self.grid.hi()[a] - center[a]))
                    .fold(f64::INFINITY, f64::min);
                if reach >= room {
                    return Err(Error::ReferenceUnavailable(format!(
                        "support radius {reach:.4} reaches the boundary (room {room:.4})"
                    )));
                }
                Ok(Reference::Barenblatt { params, center })
            }
        }
    }

    pub fn evaluate(&self, reference: &Reference) -> Result<ConvergenceReport> {
        let cfg = &self.config;
        let pivot = self.splitting.problem().pivot();
        let final_time = cfg.time.final_time;
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(cfg.time.steps.len());
        let mut finest = None;
        for &n in &cfg.time.steps {
            let start = Instant::now();
            let traj = self.run(n)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let mut error_sup: f64 = 0.0;
            let mut error_final = f64::NAN;
            for k in 1..=n {
                if let Some(r) = reference.state_at(&self.grid, final_time, k, n)? {
                    let e = pivot.norm(&traj.states[k].sub(&r))?;
                    error_sup = error_sup.max(e);
                    if k == n {
                        error_final = e;
                    }
                }
            }
            let observed_order = rows.last().map(|prev| (prev.error_final / error_final).ln() / (n as f64 / prev.n as f64).ln());
            let stats = traj.total_stats();
            rows.push(ConvergenceRow {
                n,
                h: final_time / n as f64,
                error_final,
                error_sup,
                observed_order,
                wall_ms,
                newton_total: stats.newton_iters,
                fallbacks: stats.fallbacks,
            });
            finest = Some(traj);
        }
        let probe = match (&cfg.probe, &finest) {
            (Some(p), Some(traj)) => {
                let center = cfg.probe_center();
                let initial_radius = match cfg.barenblatt()? {
                    Some((params, _)) => params.support_radius(params.t0),
                    None => support_radius(self.initial.values(), |k| self.grid.coords(k), self.grid.dim(), &center, p.threshold),
                };
                Some(propagation_probe(traj, initial_radius, &center, p.threshold))
            }
            _ => None,
        };
        Ok(ConvergenceReport {
            name: cfg.name.clone().unwrap_or_else(|| "experiment".into()),
            final_time,
            pivot,
            reference: reference.describe(),
            rows,
            probe,
            finest,
        })
    }
}

pub fn run_convergence_study(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let study = Study::new(config)?;
    let reference = study.reference()?;
    study.evaluate(&reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::DecompositionLayout;
    use crate::harness::config::{GridConfig, InitialSpec, OutputConfig, ProblemConfig, TimeConfig};
    use crate::integrators::{SchemeKind, SchemeSpec};
    use crate::operators::Family;
    use crate::resolvent::SolverConfig;
    use crate::vectorfields::VectorFieldSpec;

    fn linear_config(steps: Vec<usize>) -> ExperimentConfig {
        ExperimentConfig {
            name: Some("heat".into()),
            seed: 0,
            grid: GridConfig { n: vec![33], lo: vec![0.0], hi: vec![1.0] },
            layout: DecompositionLayout::strips(1, 0.1),
            problem: ProblemConfig { family: Family::PLaplaceNeumann, field: VectorFieldSpec::p_laplace(2.0) },
            scheme: SchemeSpec::new(SchemeKind::BackwardEuler),
            initial: InitialSpec::SinPlusOne,
            time: TimeConfig { final_time: 0.05, steps },
            reference: ReferenceSpec::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
            probe: None,
        }
    }

    #[test]
    fn implicit_euler_is_first_order_on_smooth_linear_data() {
        let report = run_convergence_study(&linear_config(vec![4, 8, 16, 32])).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!(report.rows[0].observed_order.is_none());
        for r in &report.rows[1..] {
            let o = r.observed_order.unwrap();
            assert!((o - 1.0).abs() <= 0.2, "order {o}");
            assert!(r.error_sup >= r.error_final);
        }
    }

    #[test]
    fn single_entry_gives_single_row() {
        let report = run_convergence_study(&linear_config(vec![5])).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].observed_order.is_none());
        assert!(report.rows[0].error_final > 0.0);
    }

    #[test]
    fn barenblatt_reference_needs_room() {
        let mut cfg = linear_config(vec![4]);
        cfg.grid = GridConfig { n: vec![41], lo: vec![-0.5], hi: vec![0.5] };
        cfg.problem = ProblemConfig { family: Family::PorousMediumDirichlet, field: VectorFieldSpec::porous_medium(3.0) };
        cfg.initial = InitialSpec::Barenblatt { mass: 1.0, t0: 0.01, center: None, m: None };
        cfg.reference = ReferenceSpec::Barenblatt;
        cfg.time.final_time = 0.1;
        let study = Study::new(&cfg).unwrap();
        assert!(matches!(study.reference(), Err(Error::ReferenceUnavailable(_))));
    }
}
