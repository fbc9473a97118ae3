//! TOML experiment description, one experiment per file.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{build_partition, DecompositionLayout, PartitionOfUnity};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Field, Grid};
use crate::harness::barenblatt::BarenblattParams;
use crate::integrators::{SchemeSpec, Splitting};
use crate::operators::{Family, ProblemKind};
use crate::resolvent::SolverConfig;
use crate::vectorfields::{FieldKind, VectorFieldSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub layout: DecompositionLayout,
    pub problem: ProblemConfig,
    pub scheme: SchemeSpec,
    pub initial: InitialSpec,
    pub time: TimeConfig,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis; its length fixes the dimension.
    pub n: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: Family,
    pub field: VectorFieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `prod_a sin(pi xi_a) + 1` with `xi` the unit-box coordinate.
    SinPlusOne,
    /// Barenblatt profile at `t0`. The exponent `m` defaults to `p - 1` of a
    /// porous-medium field; set it to start another equation from the profile.
    Barenblatt {
        #[serde(default = "one")]
        mass: f64,
        t0: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        m: Option<f64>,
    },
    /// `amplitude * cos²(pi r / (2 radius))` inside the ball.
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Constant { value: f64 },
    /// Uniform in `[-amplitude, amplitude]`, drawn from the experiment seed.
    Random {
        #[serde(default = "one")]
        amplitude: f64,
    },
    Zero,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Length of the simulated interval. Barenblatt data start at its `t0`,
    /// so the run covers `[t0, t0 + final_time]` in self-similar time.
    pub final_time: f64,
    /// Step counts to study, strictly increasing.
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Fully implicit run with `n_ref` steps, default `16 * max(steps)`.
    BackwardEuler {
        #[serde(default)]
        n_ref: Option<usize>,
    },
    Barenblatt,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec::BackwardEuler { n_ref: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// CSV file name, relative to the output directory.
    #[serde(default)]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Defaults to the Barenblatt or bump center, else the domain center.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

pub const SUPPORT_THRESHOLD: f64 = 1e-8;

fn default_threshold() -> f64 {
    SUPPORT_THRESHOLD
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.grid.n.len()
    }

    /// Checks everything that does not need the grid built.
    pub fn validate(&self) -> Result<()> {
        let steps = &self.time.steps;
        if steps.is_empty() || steps[0] == 0 {
            return Err(Error::Config("time.steps must be non-empty and positive".into()));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("time.steps must be strictly increasing, got {steps:?}")));
        }
        if !(self.time.final_time > 0.0 && self.time.final_time.is_finite()) {
            return Err(Error::Config(format!("time.final_time must be positive, got {}", self.time.final_time)));
        }
        self.scheme.validate()?;
        self.solver.validate()?;
        let finest = *steps.last().unwrap_or(&1);
        match (&self.reference, &self.initial) {
            (ReferenceSpec::BackwardEuler { n_ref: Some(n) }, _) if *n < 16 * finest => {
                return Err(Error::Config(format!("reference.n_ref = {n} must be at least 16 * {finest}")));
            }
            (ReferenceSpec::Barenblatt, InitialSpec::Barenblatt { .. }) => {}
            (ReferenceSpec::Barenblatt, _) => {
                return Err(Error::Config("a Barenblatt reference needs Barenblatt initial data".into()));
            }
            _ => {}
        }
        let d = self.dim();
        let point_ok = |p: &Option<Vec<f64>>| p.as_ref().map_or(true, |c| c.len() == d);
        let ok = match &self.initial {
            InitialSpec::Barenblatt { center, mass, t0, .. } => point_ok(center) && *mass > 0.0 && *t0 > 0.0,
            InitialSpec::Bump { center, radius, .. } => center.len() == d && *radius > 0.0,
            _ => true,
        };
        if !ok {
            return Err(Error::Config("initial datum parameters are inconsistent with the grid".into()));
        }
        if let Some(p) = &self.probe {
            if !point_ok(&p.center) || !(p.threshold > 0.0) {
                return Err(Error::Config("probe center must match the grid and threshold be positive".into()));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        build_grid(self.dim(), &self.grid.n, &self.grid.lo, &self.grid.hi)
    }

    pub fn problem_kind(&self) -> Result<ProblemKind> {
        ProblemKind::new(self.problem.family, self.problem.field.clone(), self.dim())
    }

    pub fn build_partition(&self, grid: &Arc<Grid>) -> Result<PartitionOfUnity> {
        build_partition(grid, &self.layout)
    }

    pub fn build_splitting(&self, grid: &Arc<Grid>) -> Result<Splitting> {
        Ok(Splitting::new(self.problem_kind()?, Arc::new(self.build_partition(grid)?)))
    }

    fn domain_center(&self) -> Vec<f64> {
        self.grid.lo.iter().zip(&self.grid.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// True when the Barenblatt initial datum is an exact solution of the problem.
    pub fn barenblatt_is_exact(&self) -> Result<bool> {
        let field = &self.problem.field;
        Ok(match self.barenblatt()? {
            Some((params, _)) => {
                self.problem.family == Family::PorousMediumDirichlet
                    && field.kind == FieldKind::PorousMedium
                    && params.m == field.p - 1.0
            }
            None => false,
        })
    }

    /// Barenblatt parameters and center when the initial datum is one.
    pub fn barenblatt(&self) -> Result<Option<(BarenblattParams, Vec<f64>)>> {
        let InitialSpec::Barenblatt { mass, t0, center, m } = &self.initial else {
            return Ok(None);
        };
        let m = match m {
            Some(m) => *m,
            None if self.problem.field.kind == FieldKind::PorousMedium => self.problem.field.p - 1.0,
            None => return Err(Error::Config("Barenblatt data need m or a porous-medium field".into())),
        };
        let params = BarenblattParams::with_mass(self.dim(), m, *mass, *t0)?;
        Ok(Some((params, center.clone().unwrap_or_else(|| self.domain_center()))))
    }

    pub fn probe_center(&self) -> Vec<f64> {
        if let Some(c) = self.probe.as_ref().and_then(|p| p.center.clone()) {
            return c;
        }
        match &self.initial {
            InitialSpec::Barenblatt { center: Some(c), .. } | InitialSpec::Bump { center: c, .. } => c.clone(),
            _ => self.domain_center(),
        }
    }

    pub fn initial_field(&self, grid: &Arc<Grid>) -> Result<Field> {
        let d = self.dim();
        let (lo, hi) = (&self.grid.lo, &self.grid.hi);
        let mut field = match &self.initial {
            InitialSpec::SinPlusOne => Field::from_fn(grid, |x| {
                (0..d).map(|a| (std::f64::consts::PI * (x[a] - lo[a]) / (hi[a] - lo[a])).sin()).product::<f64>() + 1.0
            }),
            InitialSpec::Barenblatt { .. } => {
                let (params, center) = self.barenblatt()?.expect("initial datum is Barenblatt");
                barenblatt_field(grid, &params, &center, params.t0)?
            }
            InitialSpec::Bump { center, radius, amplitude } => Field::from_fn(grid, |x| {
                let r = (0..d).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>().sqrt();
                if r < *radius {
                    amplitude * (std::f64::consts::FRAC_PI_2 * r / radius).cos().powi(2)
                } else {
                    0.0
                }
            }),
            InitialSpec::Constant { value } => Field::constant(grid, *value),
            InitialSpec::Random { amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let values = (0..grid.node_count()).map(|_| rng.gen_range(-*amplitude..=*amplitude)).collect();
                Field::new(grid, values)?
            }
            InitialSpec::Zero => Field::zeros(grid),
        };
        if self.problem.family == Family::PorousMediumDirichlet {
            zero_boundary(&mut field);
        }
        if !field.is_finite() {
            return Err(Error::Config("initial datum is not finite".into()));
        }
        Ok(field)
    }
}

pub(crate) fn zero_boundary(field: &mut Field) {
    let grid = field.grid().clone();
    for (v, &b) in field.values_mut().iter_mut().zip(grid.boundary_mask()) {
        if b {
            *v = 0.0;
        }
    }
}

/// Nodal Barenblatt values at self-similar time `t`, zero on the boundary.
pub fn barenblatt_field(grid: &Arc<Grid>, params: &BarenblattParams, center: &[f64], t: f64) -> Result<Field> {
    let d = grid.dim();
    let mut values = Vec::with_capacity(grid.node_count());
    for k in 0..grid.node_count() {
        let x = grid.coords(k);
        let r2 = (0..d).map(|a| (x[a] - center[a]).powi(2)).sum();
        values.push(if grid.is_boundary(k) { 0.0 } else { params.value_r2(r2, t)? });
    }
    Field::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
name = "basic"
seed = 3

[grid]
n = [33]
lo = [0.0]
hi = [1.0]

[layout]
kind = "strips"
subdomains = 2
overlap = 0.125

[problem]
family = "p_laplace_neumann"
field = { kind = "p_laplace", p = 3.0 }

[scheme]
kind = "lie_splitting"

[initial]
kind = "sin_plus_one"

[time]
final_time = 0.25
steps = [4, 8]
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = ExperimentConfig::from_toml_str(BASIC).unwrap();
        assert_eq!(cfg.reference, ReferenceSpec::BackwardEuler { n_ref: None });
        assert_eq!(cfg.solver, SolverConfig::default());
        assert!(cfg.probe.is_none());
        let grid = cfg.build_grid().unwrap();
        let eta = cfg.initial_field(&grid).unwrap();
        assert!((eta.values()[16] - 2.0).abs() < 1e-15);
        assert!((eta.values()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(BASIC).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            BASIC.replace("steps = [4, 8]", "steps = [8, 4]"),
            BASIC.replace("steps = [4, 8]", "steps = []"),
            BASIC.replace("final_time = 0.25", "final_time = -1.0"),
            BASIC.replace("seed = 3", "seed = 3\ncolour = 1"),
            BASIC.replace("lie_splitting", "perturbed_modified"),
            BASIC.replace("sin_plus_one\"", "sin_plus_one\"\n[reference]\nkind = \"backward_euler\"\nn_ref = 64"),
            BASIC.replace("sin_plus_one\"", "sin_plus_one\"\n[reference]\nkind = \"barenblatt\""),
        ];
        for text in bad {
            assert!(ExperimentConfig::from_toml_str(&text).is_err(), "accepted:\n{text}");
        }
    }

    #[test]
    fn random_datum_follows_seed() {
        let text = BASIC.replace("kind = \"sin_plus_one\"", "kind = \"random\"\namplitude = 0.5");
        let a = ExperimentConfig::from_toml_str(&text).unwrap();
        let mut b = a.clone();
        let grid = a.build_grid().unwrap();
        let fa = a.initial_field(&grid).unwrap();
        assert_eq!(fa.values(), a.initial_field(&grid).unwrap().values());
        b.seed = 4;
        assert_ne!(fa.values(), b.initial_field(&grid).unwrap().values());
        assert!(fa.max_abs() <= 0.5);
    }

    #[test]
    fn dirichlet_data_vanish_on_boundary() {
        let text = BASIC
            .replace("p_laplace_neumann", "porous_medium_dirichlet")
            .replace("kind = \"p_laplace\"", "kind = \"porous_medium\"");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let grid = cfg.build_grid().unwrap();
        let eta = cfg.initial_field(&grid).unwrap();
        assert_eq!(eta.values()[0], 0.0);
        assert_eq!(eta.values()[32], 0.0);
    }
}
