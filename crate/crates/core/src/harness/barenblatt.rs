//! Self-similar Barenblatt solution of `u_t = Δ(u^m)`.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarenblattParams {
    pub dim: usize,
    /// Exponent `m = p - 1`.
    pub m: f64,
    pub c: f64,
    /// Initial time offset.
    pub t0: f64,
}

impl BarenblattParams {
    pub fn new(dim: usize, m: f64, c: f64, t0: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        if !(m > 1.0 && m.is_finite()) {
            return Err(Error::InvalidParams(format!("need m > 1, got {m}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParams(format!("need C > 0, got {c}")));
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::InvalidParams(format!("need t0 > 0, got {t0}")));
        }
        Ok(Self { dim, m, c, t0 })
    }

    /// Picks `C` so the total mass equals `mass`.
    pub fn with_mass(dim: usize, m: f64, mass: f64, t0: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParams(format!("need positive mass, got {mass}")));
        }
        // mass is C^gamma times the mass at C = 1
        let unit = Self::new(dim, m, 1.0, t0)?;
        let gamma = 1.0 / (m - 1.0) + dim as f64 / 2.0;
        let c = (mass / unit.mass()).powf(1.0 / gamma);
        Self::new(dim, m, c, t0)
    }

    pub fn a(&self) -> f64 {
        let d = self.dim as f64;
        d / (d * (self.m - 1.0) + 2.0)
    }

    pub fn b(&self) -> f64 {
        self.a() / self.dim as f64
    }

    pub fn k(&self) -> f64 {
        let d = self.dim as f64;
        self.a() * (self.m - 1.0) / (2.0 * d * self.m)
    }

    pub fn support_radius(&self, t: f64) -> f64 {
        (self.c / self.k()).sqrt() * t.powf(self.b())
    }

    /// Value at squared distance `r2` from the center.
    pub fn value_r2(&self, r2: f64, t: f64) -> Result<f64> {
        if !(t >= self.t0) {
            return Err(Error::InvalidParams(format!("t = {t} precedes t0 = {}", self.t0)));
        }
        let core = self.c - self.k() * r2 * t.powf(-2.0 * self.b());
        Ok(t.powf(-self.a()) * core.max(0.0).powf(1.0 / (self.m - 1.0)))
    }

    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        self.value_r2(x.iter().map(|v| v * v).sum(), t)
    }

    /// Closed-form mass, time independent.
    pub fn mass(&self) -> f64 {
        // ∫ (C - k|y|²)_+^q dy over R^d with q = 1/(m-1)
        let d = self.dim as f64;
        let q = 1.0 / (self.m - 1.0);
        let ball = std::f64::consts::PI.powf(d / 2.0) / gamma(d / 2.0 + 1.0);
        let radius = (self.c / self.k()).sqrt();
        // ∫_0^R (C - k r²)^q d r^{d-1} dr · |S^{d-1}| reduces to a beta integral
        let beta = gamma(q + 1.0) * gamma(d / 2.0 + 1.0) / gamma(q + d / 2.0 + 1.0);
        ball * radius.powf(d) * self.c.powf(q) * beta
    }
}

pub fn barenblatt(params: &BarenblattParams, x: &[f64], t: f64) -> Result<f64> {
    params.value(x, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_1d() -> BarenblattParams {
        BarenblattParams::with_mass(1, 2.0, 1.0, 0.01).unwrap()
    }

    #[test]
    fn constants_for_m2_in_1d() {
        let p = unit_1d();
        assert!((p.a() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.b() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.k() - 1.0 / 12.0).abs() < 1e-15);
        // (4/3) C^{3/2} / sqrt(k) = 1
        let c = (0.75 * (1.0f64 / 12.0).sqrt()).powf(2.0 / 3.0);
        assert!((p.c - c).abs() < 1e-12, "{} vs {c}", p.c);
    }

    #[test]
    fn zero_outside_support_and_peak_at_center() {
        let p = unit_1d();
        for t in [0.01, 0.05, 0.11] {
            let r = p.support_radius(t);
            assert_eq!(p.value(&[r * 1.0001], t).unwrap(), 0.0);
            assert_eq!(p.value(&[-r * 1.5], t).unwrap(), 0.0);
            let peak = t.powf(-p.a()) * p.c.powf(1.0 / (p.m - 1.0));
            assert!((p.value(&[0.0], t).unwrap() - peak).abs() <= 1e-14 * peak);
        }
        assert!(p.value(&[0.0], 0.005).is_err());
        assert!(BarenblattParams::new(1, 1.0, 1.0, 0.1).is_err());
        assert!(BarenblattParams::new(1, 2.0, 0.0, 0.1).is_err());
        assert!(BarenblattParams::new(1, 2.0, 1.0, 0.0).is_err());
    }

    fn quadrature_mass_1d(p: &BarenblattParams, t: f64) -> f64 {
        let r = p.support_radius(t);
        let n = 200_000;
        let dx = 2.0 * r / n as f64;
        // midpoint rule; the profile is only Hölder at the front
        (0..n).map(|i| p.value(&[-r + (i as f64 + 0.5) * dx], t).unwrap() * dx).sum()
    }

    #[test]
    fn mass_is_constant_in_time() {
        let p = unit_1d();
        let m0 = quadrature_mass_1d(&p, p.t0);
        for t in [0.02, 0.06, 0.11, 1.0] {
            let m = quadrature_mass_1d(&p, t);
            assert!(((m - m0) / m0).abs() <= 1e-6, "t = {t}: {m} vs {m0}");
        }
        assert!((m0 - 1.0).abs() <= 1e-6);
        for (d, m) in [(2usize, 2.0), (2, 3.0), (1, 3.0)] {
            let q = BarenblattParams::with_mass(d, m, 2.5, 0.1).unwrap();
            assert!((q.mass() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_quadrature_mass_in_2d() {
        let p = BarenblattParams::with_mass(2, 2.0, 1.0, 0.01).unwrap();
        for t in [0.01, 0.1] {
            let r = p.support_radius(t);
            let n = 200_000;
            let dr = r / n as f64;
            let m: f64 = (0..n)
                .map(|i| {
                    let s = (i as f64 + 0.5) * dr;
                    2.0 * std::f64::consts::PI * s * p.value(&[s, 0.0], t).unwrap() * dr
                })
                .sum();
            assert!((m - 1.0).abs() <= 1e-6, "{m}");
        }
    }

    /// Brute-force gate: explicit finite differences for `u_t = (u^m)_xx`
    /// started from the `t0` profile must reproduce the formula.
    #[test]
    fn explicit_fd_reproduces_profile() {
        let p = unit_1d();
        let (lo, hi) = (-1.5, 1.5);
        let nodes = 1201;
        let dx = (hi - lo) / (nodes - 1) as f64;
        let x = |i: usize| lo + i as f64 * dx;
        let mut u: Vec<f64> = (0..nodes).map(|i| p.value(&[x(i)], p.t0).unwrap()).collect();
        let horizon = 0.05;
        let umax = u.iter().cloned().fold(0.0, f64::max);
        let dt_stable = 0.4 * dx * dx / (p.m * umax.powf(p.m - 1.0));
        let steps = (horizon / dt_stable).ceil() as usize;
        let dt = horizon / steps as f64;
        let mut w = vec![0.0; nodes];
        let mut next = u.clone();
        for _ in 0..steps {
            for i in 0..nodes {
                w[i] = u[i].max(0.0).powf(p.m);
            }
            for i in 1..nodes - 1 {
                next[i] = u[i] + dt / (dx * dx) * (w[i - 1] - 2.0 * w[i] + w[i + 1]);
            }
            std::mem::swap(&mut u, &mut next);
        }
        let t = p.t0 + horizon;
        let err = (0..nodes)
            .map(|i| (u[i] - p.value(&[x(i)], t).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-2, "max pointwise deviation {err}");
    }
}
