//! Numerical support tracking for finite-speed-of-propagation checks.

use serde::Serialize;

use crate::integrators::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportRow {
    pub t: f64,
    /// Largest distance from the center of a node with `|u| > threshold`.
    pub radius: f64,
    pub radius_cells: f64,
    /// Change since the previous row, in cells.
    pub growth_cells: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportTable {
    pub rows: Vec<SupportRow>,
    pub initial_radius: f64,
    /// Cell length used for the `*_cells` columns (smallest spacing).
    pub cell: f64,
    pub threshold: f64,
}

impl SupportTable {
    /// Most negative `radius - initial_radius`, in cells (0 if never below).
    pub fn worst_shrink_cells(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| ((r.radius - self.initial_radius) / self.cell).min(0.0))
            .fold(0.0, f64::min)
    }

    pub fn final_radius(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.radius)
    }
}

pub fn support_radius(values: &[f64], coords: impl Fn(usize) -> [f64; 2], dim: usize, center: &[f64], threshold: f64) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > threshold)
        .map(|(k, _)| {
            let x = coords(k);
            (0..dim).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

pub fn propagation_probe(trajectory: &Trajectory, initial_support_radius: f64, center: &[f64], threshold: f64) -> SupportTable {
    let Some(first) = trajectory.states.first() else {
        return SupportTable { rows: Vec::new(), initial_radius: initial_support_radius, cell: 1.0, threshold };
    };
    let grid = first.grid().clone();
    let cell = grid.dx().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut rows = Vec::with_capacity(trajectory.states.len());
    let mut prev = None;
    for (t, u) in trajectory.times.iter().zip(&trajectory.states) {
        let radius = support_radius(u.values(), |k| grid.coords(k), grid.dim(), center, threshold);
        let growth_cells = prev.map_or(0.0, |p: f64| (radius - p) / cell);
        rows.push(SupportRow { t: *t, radius, radius_cells: radius / cell, growth_cells });
        prev = Some(radius);
    }
    SupportTable { rows, initial_radius: initial_support_radius, cell, threshold }
}
