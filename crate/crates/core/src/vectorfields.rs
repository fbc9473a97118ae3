//! Coefficient maps `alpha` for p-Laplace and porous-medium type diffusion.
//!
//! Power kinds use `(|z|^2 + eps^2)^((p-2)/2) z`; the Stefan map is the
//! two-phase piecewise-linear map with its corners at `±1` rounded by C¹
//! quadratic pieces of total width `eps_reg`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    PLaplace,
    PorousMedium,
    FastDiffusion,
    Stefan,
    /// `alpha(z) = -z`. Fails monotonicity; only for exercising the audit.
    AntiMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorFieldSpec {
    pub kind: FieldKind,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_phase_slope")]
    pub a: f64,
    #[serde(default = "default_phase_slope")]
    pub b: f64,
    #[serde(default)]
    pub eps_reg: Option<f64>,
}

fn default_p() -> f64 {
    2.0
}

fn default_phase_slope() -> f64 {
    1.0
}

pub const DEFAULT_EPS_POWER: f64 = 1e-8;
pub const DEFAULT_EPS_STEFAN: f64 = 1e-6;

impl VectorFieldSpec {
    pub fn p_laplace(p: f64) -> Self {
        Self { kind: FieldKind::PLaplace, p, a: 1.0, b: 1.0, eps_reg: None }
    }

    pub fn porous_medium(p: f64) -> Self {
        Self { kind: FieldKind::PorousMedium, p, a: 1.0, b: 1.0, eps_reg: None }
    }

    pub fn fast_diffusion(p: f64) -> Self {
        Self { kind: FieldKind::FastDiffusion, p, a: 1.0, b: 1.0, eps_reg: None }
    }

    pub fn stefan(a: f64, b: f64) -> Self {
        Self { kind: FieldKind::Stefan, p: 2.0, a, b, eps_reg: None }
    }

    pub fn anti_monotone() -> Self {
        Self { kind: FieldKind::AntiMonotone, p: 2.0, a: 1.0, b: 1.0, eps_reg: Some(0.0) }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps_reg = Some(eps);
        self
    }

    pub fn eps(&self) -> f64 {
        self.eps_reg.unwrap_or(match self.kind {
            FieldKind::Stefan => DEFAULT_EPS_STEFAN,
            FieldKind::AntiMonotone => 0.0,
            _ => DEFAULT_EPS_POWER,
        })
    }

    /// Growth/coercivity exponent of the map.
    pub fn exponent(&self) -> f64 {
        match self.kind {
            FieldKind::Stefan | FieldKind::AntiMonotone => 2.0,
            _ => self.p,
        }
    }

    /// Checks exponent and parameter ranges for use on a `dim`-dimensional domain.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidVectorField(msg));
        let eps = self.eps();
        if !(eps >= 0.0) || !eps.is_finite() {
            return bad(format!("eps_reg must be finite and >= 0, got {eps}"));
        }
        match self.kind {
            FieldKind::PLaplace | FieldKind::PorousMedium if !(self.p >= 2.0) => {
                bad(format!("{:?} requires p >= 2, got {}", self.kind, self.p))
            }
            FieldKind::FastDiffusion if !(self.p > 1.0 && self.p < 2.0) => {
                bad(format!("fast diffusion requires 1 < p < 2, got {}", self.p))
            }
            FieldKind::FastDiffusion if eps == 0.0 => {
                bad("fast diffusion requires eps_reg > 0 (singular Jacobian at 0)".into())
            }
            FieldKind::Stefan if !(self.a > 0.0 && self.b > 0.0) => {
                bad(format!("stefan requires a, b > 0, got a={}, b={}", self.a, self.b))
            }
            FieldKind::PorousMedium | FieldKind::FastDiffusion | FieldKind::Stefan
                if dim > 2 && self.exponent() < 2.0 * dim as f64 / (dim as f64 + 2.0) =>
            {
                bad(format!("p must be >= 2d/(d+2) for d = {dim}"))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates `alpha(z)` into `out` (same length as `z`).
    pub fn alpha(&self, z: &[f64], out: &mut [f64]) {
        match self.kind {
            FieldKind::Stefan => {
                debug_assert_eq!(z.len(), 1);
                out[0] = stefan(self.a, self.b, 0.5 * self.eps(), z[0]).0;
            }
            FieldKind::AntiMonotone => {
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = -zi;
                }
            }
            _ => {
                let phi = self.power_factor(z);
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = phi * zi;
                }
            }
        }
    }

    pub fn alpha_vec(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.alpha(z, &mut out);
        out
    }

    /// Scalar `alpha` for the one-component porous-medium family.
    pub fn alpha_scalar(&self, z: f64) -> f64 {
        let mut out = [0.0];
        self.alpha(&[z], &mut out);
        out[0]
    }

    /// Derivative of the scalar map.
    pub fn alpha_prime(&self, z: f64) -> f64 {
        let mut out = [0.0];
        self.alpha_jacobian(&[z], &mut out);
        out[0]
    }

    fn power_factor(&self, z: &[f64]) -> f64 {
        let eps = self.eps();
        let g = z.iter().map(|v| v * v).sum::<f64>() + eps * eps;
        if self.p == 2.0 {
            1.0
        } else if g == 0.0 {
            // alpha(0) = 0 regardless of the factor
            0.0
        } else {
            g.powf(0.5 * (self.p - 2.0))
        }
    }

    /// Row-major `k x k` Jacobian of `alpha` at `z`.
    pub fn alpha_jacobian(&self, z: &[f64], out: &mut [f64]) {
        let k = z.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            FieldKind::Stefan => out[0] = stefan(self.a, self.b, 0.5 * self.eps(), z[0]).1,
            FieldKind::AntiMonotone => (0..k).for_each(|i| out[i * k + i] = -1.0),
            _ => {
                let eps = self.eps();
                let g = z.iter().map(|v| v * v).sum::<f64>() + eps * eps;
                if self.p == 2.0 {
                    (0..k).for_each(|i| out[i * k + i] = 1.0);
                    return;
                }
                if g == 0.0 {
                    // only reachable with eps = 0; p < 2 is rejected by validate
                    let d = if self.p > 2.0 { 0.0 } else { f64::MAX };
                    (0..k).for_each(|i| out[i * k + i] = d);
                    return;
                }
                let phi = g.powf(0.5 * (self.p - 2.0));
                let c = (self.p - 2.0) * phi / g;
                for i in 0..k {
                    for j in 0..k {
                        out[i * k + j] = c * z[i] * z[j];
                    }
                    out[i * k + i] += phi;
                }
            }
        }
    }

    /// Scalar `s(z) >= 0` with `alpha(z) = s(z) z`; used for lagged-coefficient iterations.
    pub fn secant(&self, z: &[f64]) -> f64 {
        match self.kind {
            FieldKind::Stefan => {
                if z[0] == 0.0 {
                    0.0
                } else {
                    self.alpha_scalar(z[0]) / z[0]
                }
            }
            FieldKind::AntiMonotone => -1.0,
            _ => self.power_factor(z),
        }
    }
}

/// Value and derivative of the smoothed Stefan map; `w` is the half-width.
fn stefan(a: f64, b: f64, w: f64, z: f64) -> (f64, f64) {
    if z >= 1.0 + w {
        (b * (z - 1.0), b)
    } else if z > 1.0 - w {
        let s = z - (1.0 - w);
        (b * s * s / (4.0 * w), b * s / (2.0 * w))
    } else if z >= -1.0 + w {
        (0.0, 0.0)
    } else if z > -1.0 - w {
        let s = z + 1.0 - w;
        (-a * s * s / (4.0 * w), -a * s / (2.0 * w))
    } else {
        (a * (z + 1.0), a)
    }
}

/// Outcome of sampling the monotonicity, growth and coercivity properties.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub kind: FieldKind,
    pub samples: usize,
    pub exponent: f64,
    pub monotonicity_violations: usize,
    /// Most negative `(alpha(z)-alpha(w)).(z-w)` seen.
    pub worst_monotonicity: f64,
    /// Fitted `|alpha(z)| <= c1 |z|^(p-1) + c2`.
    pub c1: f64,
    pub c2: f64,
    /// Fitted `alpha(z).z >= c3 |z|^p - c4`.
    pub c3: f64,
    pub c4: f64,
    pub violations: Vec<String>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples pairs in the ball of radius `domain_radius` and audits the map.
pub fn check_assumption3(spec: &VectorFieldSpec, sample_count: usize, domain_radius: f64) -> PropertyReport {
    check_assumption3_seeded(spec, sample_count, domain_radius, 0x5eed)
}

pub fn check_assumption3_seeded(
    spec: &VectorFieldSpec,
    sample_count: usize,
    domain_radius: f64,
    seed: u64,
) -> PropertyReport {
    let k = if spec.kind == FieldKind::PLaplace { 2 } else { 1 };
    let p = spec.exponent();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        // uniform in the ball by rejection
        loop {
            let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-domain_radius..=domain_radius)).collect();
            if z.iter().map(|v| v * v).sum::<f64>() <= domain_radius * domain_radius {
                return z;
            }
        }
    };
    let norm = |z: &[f64]| z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut violations = 0;
    let mut worst = 0.0f64;
    let mut pts = Vec::with_capacity(sample_count);
    for _ in 0..sample_count.max(1) {
        let z = sample(&mut rng);
        let w = sample(&mut rng);
        let az = spec.alpha_vec(&z);
        let aw = spec.alpha_vec(&w);
        let da: Vec<f64> = az.iter().zip(&aw).map(|(x, y)| x - y).collect();
        let dz: Vec<f64> = z.iter().zip(&w).map(|(x, y)| x - y).collect();
        let m = dot(&da, &dz);
        let scale = (norm(&da) * norm(&dz)).max(1.0);
        if m < -1e-12 * scale {
            violations += 1;
        }
        worst = worst.min(m);
        pts.push((norm(&z), norm(&az), dot(&az, &z)));
    }

    // growth: c1 from |z| >= 1, c2 absorbs the rest
    let c1 = pts.iter().filter(|t| t.0 >= 1.0).map(|t| t.1 / t.0.powf(p - 1.0)).fold(0.0, f64::max);
    let c2 = pts.iter().map(|t| (t.1 - c1 * t.0.powf(p - 1.0)).max(0.0)).fold(0.0, f64::max);
    // coercivity: c3 from the outer half of the ball, c4 absorbs the rest
    let outer = 0.5 * domain_radius;
    let c3 = pts
        .iter()
        .filter(|t| t.0 >= outer && t.0 > 0.0)
        .map(|t| t.2 / t.0.powf(p))
        .fold(f64::INFINITY, f64::min);
    let c3 = if c3.is_finite() { c3 } else { 0.0 };
    let c4 = pts.iter().map(|t| (c3 * t.0.powf(p) - t.2).max(0.0)).fold(0.0, f64::max);

    let mut messages = Vec::new();
    if violations > 0 {
        messages.push(format!("monotonicity violated in {violations} of {} pairs (worst {worst:.3e})", pts.len()));
    }
    if !(c3 > 0.0) {
        messages.push(format!("coercivity constant not positive (c3 = {c3:.3e})"));
    }
    PropertyReport {
        kind: spec.kind,
        samples: pts.len(),
        exponent: p,
        monotonicity_violations: violations,
        worst_monotonicity: worst,
        c1,
        c2,
        c3,
        c4,
        violations: messages,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_maps_to_zero() {
        for spec in [
            VectorFieldSpec::p_laplace(3.0).with_eps(0.0),
            VectorFieldSpec::porous_medium(2.5).with_eps(0.0),
            VectorFieldSpec::fast_diffusion(1.5).with_eps(0.0),
            VectorFieldSpec::stefan(1.0, 2.0).with_eps(0.0),
        ] {
            assert_eq!(spec.alpha_vec(&[0.0]), vec![0.0]);
        }
    }

    #[test]
    fn p_laplace_formula() {
        let spec = VectorFieldSpec::p_laplace(3.0).with_eps(0.0);
        assert_eq!(spec.alpha_vec(&[2.0, 0.0]), vec![4.0, 0.0]);
    }

    #[test]
    fn stefan_plateau_and_slopes() {
        let spec = VectorFieldSpec::stefan(1.0, 1.0).with_eps(0.0);
        assert_eq!(spec.alpha_scalar(0.5), 0.0);
        assert_eq!(spec.alpha_scalar(2.0), 1.0);
        assert_eq!(spec.alpha_scalar(-3.0), -2.0);
        let spec = VectorFieldSpec::stefan(2.0, 3.0);
        let w = 0.5 * spec.eps();
        // value and slope continuity at the blend ends
        for z0 in [1.0 - w, 1.0 + w, -1.0 - w, -1.0 + w] {
            let (l, r) = (stefan(2.0, 3.0, w, z0 - 1e-12), stefan(2.0, 3.0, w, z0 + 1e-12));
            assert!((l.0 - r.0).abs() < 1e-10);
            assert!((l.1 - r.1).abs() < 1e-4);
        }
    }

    #[test]
    fn jacobian_closed_forms() {
        let mut j = [0.0; 4];
        VectorFieldSpec::p_laplace(2.0).alpha_jacobian(&[0.3, -2.0], &mut j);
        assert_eq!(j, [1.0, 0.0, 0.0, 1.0]);
        VectorFieldSpec::p_laplace(4.0).with_eps(0.0).alpha_jacobian(&[1.0, 0.0], &mut j);
        assert_eq!(j, [3.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn regularization_converges() {
        let zs = [[0.3, -0.1], [1.2, 0.4], [0.01, 0.02]];
        for p in [3.0, 1.5] {
            let exact = VectorFieldSpec { kind: FieldKind::PLaplace, p, a: 1.0, b: 1.0, eps_reg: Some(0.0) };
            let mut prev = f64::INFINITY;
            for eps in [1e-4, 1e-8] {
                let reg = VectorFieldSpec { eps_reg: Some(eps), ..exact.clone() };
                let diff = zs
                    .iter()
                    .map(|z| {
                        let a = exact.alpha_vec(z);
                        let b = reg.alpha_vec(z);
                        (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
                    })
                    .fold(0.0, f64::max);
                assert!(diff < prev);
                prev = diff;
            }
        }
    }

    #[test]
    fn validation_rules() {
        assert!(VectorFieldSpec::p_laplace(1.5).validate(1).is_err());
        assert!(VectorFieldSpec::porous_medium(2.0).validate(2).is_ok());
        assert!(VectorFieldSpec::fast_diffusion(2.0).validate(1).is_err());
        assert!(VectorFieldSpec::fast_diffusion(1.5).validate(1).is_ok());
        assert!(VectorFieldSpec::fast_diffusion(1.5).with_eps(0.0).validate(1).is_err());
        assert!(VectorFieldSpec::stefan(0.0, 1.0).validate(1).is_err());
        // d > 2 exponent floor 2d/(d+2) = 1.2 for d = 3
        assert!(VectorFieldSpec::fast_diffusion(1.1).validate(3).is_err());
        assert!(VectorFieldSpec::fast_diffusion(1.3).validate(3).is_ok());
    }

    #[test]
    fn audit_flags_anti_monotone() {
        let r = check_assumption3(&VectorFieldSpec::anti_monotone(), 1000, 5.0);
        assert!(r.monotonicity_violations > 0);
        assert!(!r.passed());
    }

    #[test]
    fn audit_passes_shipped_kinds() {
        let r = check_assumption3(&VectorFieldSpec::p_laplace(3.0), 10_000, 10.0);
        assert_eq!(r.monotonicity_violations, 0);
        assert!(r.passed());
        let r = check_assumption3(&VectorFieldSpec::stefan(1.0, 1.0), 10_000, 100.0);
        assert_eq!(r.monotonicity_violations, 0);
        assert!((r.c3 - 1.0).abs() < 0.05, "c3 = {}", r.c3);
    }

    fn fd_check(spec: &VectorFieldSpec, z: &[f64]) {
        let k = z.len();
        let mut jac = vec![0.0; k * k];
        spec.alpha_jacobian(z, &mut jac);
        let h = 1e-6;
        for e in 0..k {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[e] += h;
            zm[e] -= h;
            let ap = spec.alpha_vec(&zp);
            let am = spec.alpha_vec(&zm);
            for i in 0..k {
                let fd = (ap[i] - am[i]) / (2.0 * h);
                let scale = jac[i * k + e].abs().max(1.0);
                assert!((fd - jac[i * k + e]).abs() <= 1e-5 * scale, "{spec:?} z={z:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_differences(x in -3.0f64..3.0, y in -3.0f64..3.0, p in 2.0f64..5.0) {
            fd_check(&VectorFieldSpec::p_laplace(p), &[x, y]);
            fd_check(&VectorFieldSpec::porous_medium(p), &[x]);
            fd_check(&VectorFieldSpec::fast_diffusion(1.0 + (p - 2.0) / 3.0 + 0.01).with_eps(1e-2), &[x]);
            // keep away from the Stefan corners
            prop_assume!((x.abs() - 1.0).abs() > 1e-3);
            fd_check(&VectorFieldSpec::stefan(1.5, 0.5), &[x]);
        }

        #[test]
        fn jacobian_is_psd(x in -3.0f64..3.0, y in -3.0f64..3.0, p in 2.0f64..5.0, vx in -1.0f64..1.0, vy in -1.0f64..1.0) {
            let mut j = [0.0; 4];
            VectorFieldSpec::p_laplace(p).alpha_jacobian(&[x, y], &mut j);
            prop_assert!((j[1] - j[2]).abs() <= 1e-12 * j[1].abs().max(1.0));
            let q = vx * (j[0] * vx + j[1] * vy) + vy * (j[2] * vx + j[3] * vy);
            prop_assert!(q >= -1e-12);
        }
    }
}
