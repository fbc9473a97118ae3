//! Property audits run by `check` before trusting a configuration.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposition::{check_separating_condition, build_decomposition, LayoutKind};
use crate::error::Result;
use crate::grid::Field;
use crate::harness::config::{zero_boundary, ExperimentConfig};
use crate::operators::{decomposition_residual, dissipativity_gap, Family, SubOperator};
use crate::resolvent::nonexpansivity_audit;
use crate::vectorfields::check_assumption3_seeded;

pub const RESIDUAL_TOL: f64 = 1e-12;
pub const GAP_TOL: f64 = 1e-10;
pub const RATIO_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditLine {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub lines: Vec<AuditLine>,
}

impl AuditReport {
    fn push(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        let passed = value <= bound;
        self.lines.push(AuditLine { name: name.into(), value, bound, passed });
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            let tag = if l.passed { "ok  " } else { "FAIL" };
            let _ = writeln!(s, "{tag} {:<40} {:>12.4e} (bound {:.1e})", l.name, l.value, l.bound);
        }
        s
    }
}

/// Audits the configured problem on `samples` random fields drawn from the
/// experiment seed.
pub fn audit_config(config: &ExperimentConfig, samples: usize) -> Result<AuditReport> {
    config.validate()?;
    let grid = config.build_grid()?;
    let problem = config.problem_kind()?;
    let subdomains = build_decomposition(&grid, &config.layout)?;
    let pou = config.build_partition(&grid)?;
    let mut report = AuditReport::default();

    let field = check_assumption3_seeded(&problem.spec, 10_000, 10.0, config.seed);
    report.push("field monotonicity violations", field.monotonicity_violations as f64, 0.0);
    report.push("field growth/coercivity violations", field.violations.len() as f64, 0.0);

    if config.layout.kind == LayoutKind::Separating {
        let ok = check_separating_condition(&subdomains, &grid);
        report.push("separating condition (1 = violated)", f64::from(u8::from(!ok)), 0.0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dirichlet = problem.family == Family::PorousMediumDirichlet;
    let random = |rng: &mut ChaCha8Rng| {
        let values = (0..grid.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut f = Field::new(&grid, values).expect("finite samples");
        if dirichlet {
            zero_boundary(&mut f);
        }
        f
    };
    let pairs: Vec<(Field, Field)> = (0..samples).map(|_| (random(&mut rng), random(&mut rng))).collect();

    let residual = pairs.iter().map(|(u, _)| decomposition_residual(&problem, &pou, u)).fold(0.0, f64::max);
    report.push("decomposition residual", residual, RESIDUAL_TOL);

    let mut ops = SubOperator::all_local(&problem, &pou);
    ops.push(SubOperator::full(&problem, &grid));
    let tau = config.time.final_time / config.time.steps[0] as f64;
    for op in &ops {
        let label = op.index().map_or("full".to_string(), |l| format!("f_{}", l + 1));
        let mut gap = f64::NEG_INFINITY;
        for (u, v) in &pairs {
            gap = gap.max(dissipativity_gap(op, u, v)?);
        }
        report.push(format!("dissipativity gap {label}"), gap, GAP_TOL);
        let ratio = nonexpansivity_audit(op, tau, &pairs, &config.solver)?;
        report.push(format!("resolvent Lipschitz ratio - 1, {label}"), ratio - 1.0, RATIO_TOL);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::demo;

    #[test]
    fn shipped_demos_pass_audit() {
        for name in ["plaplace-lie", "barenblatt-lie"] {
            let cfg = ExperimentConfig::from_toml_str(demo(name).unwrap()).unwrap();
            let report = audit_config(&cfg, 4).unwrap();
            assert!(report.passed(), "{name}\n{}", report.render());
        }
    }
}
