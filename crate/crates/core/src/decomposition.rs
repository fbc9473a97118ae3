//! Overlapping subdomains and piecewise-linear partitions of unity.
//!
//! Every weight is a product of one-dimensional trapezoids (or one minus such
//! a product, for the boundary frame of a separating layout). Ramps are
//! snapped to whole cells, so adjacent ramps cancel exactly and the raw
//! weights already sum to one; the final normalization only removes
//! rounding.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// Slabs along the first axis.
    Strips,
    /// Tensor blocks, `blocks_per_axis` pieces per axis.
    Blocks,
    /// Subdomain `s` is a band along the whole boundary; the others are
    /// strips kept away from the boundary.
    Separating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionLayout {
    pub kind: LayoutKind,
    pub subdomains: usize,
    /// Overlap length, snapped to whole cells (at least two).
    pub overlap: f64,
    #[serde(default)]
    pub blocks_per_axis: Option<Vec<usize>>,
    /// Width of the boundary band outside the interior subdomains
    /// (separating layouts); defaults to `overlap`.
    #[serde(default)]
    pub boundary_width: Option<f64>,
}

impl DecompositionLayout {
    pub fn strips(subdomains: usize, overlap: f64) -> Self {
        Self { kind: LayoutKind::Strips, subdomains, overlap, blocks_per_axis: None, boundary_width: None }
    }

    pub fn blocks(per_axis: Vec<usize>, overlap: f64) -> Self {
        Self {
            kind: LayoutKind::Blocks,
            subdomains: per_axis.iter().product(),
            overlap,
            blocks_per_axis: Some(per_axis),
            boundary_width: None,
        }
    }

    pub fn separating(subdomains: usize, overlap: f64) -> Self {
        Self { kind: LayoutKind::Separating, subdomains, overlap, blocks_per_axis: None, boundary_width: None }
    }
}

/// Closed node-index box, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl NodeBox {
    fn nodes(&self, grid: &Grid) -> impl Iterator<Item = usize> + '_ {
        let b = *self;
        let dim = grid.dim();
        let (ylo, yhi) = if dim == 2 { (b.lo[1], b.hi[1]) } else { (0, 0) };
        let n0 = grid.n()[0];
        (ylo..=yhi).flat_map(move |j| (b.lo[0]..=b.hi[0]).map(move |i| i + n0 * j))
    }
}

/// 0 left of `a`, ramps to 1 at `b`, 1 until `c`, ramps to 0 at `d`.
/// `a == b` (or `c == d`) marks a side with no ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trapezoid {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Trapezoid {
    fn full() -> Self {
        Self { a: f64::NEG_INFINITY, b: f64::NEG_INFINITY, c: f64::INFINITY, d: f64::INFINITY }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.d {
            0.0
        } else if x < self.b {
            ((x - self.a) / (self.b - self.a)).clamp(0.0, 1.0)
        } else if x <= self.c {
            1.0
        } else {
            ((self.d - x) / (self.d - self.c)).clamp(0.0, 1.0)
        }
    }
}

/// Raw weight of one subdomain.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFn {
    /// Product of per-axis trapezoid factors.
    Product(Vec<(usize, Trapezoid)>),
    /// `1 - product`.
    Complement(Vec<(usize, Trapezoid)>),
}

impl WeightFn {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let prod = |fs: &[(usize, Trapezoid)]| fs.iter().map(|(ax, t)| t.eval(x[*ax])).product::<f64>();
        match self {
            WeightFn::Product(fs) => prod(fs),
            WeightFn::Complement(fs) => 1.0 - prod(fs),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Subdomain {
    pub id: usize,
    /// Pairwise disjoint node boxes whose union is the closure of the subdomain.
    pub components: Vec<NodeBox>,
    /// Sorted node indices covered by the components.
    pub node_set: Vec<usize>,
    pub weight: WeightFn,
}

#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    grid: Arc<Grid>,
    pub subdomains: Vec<Subdomain>,
    pub overlap_width: f64,
    /// `node_weights[l][k]`
    pub node_weights: Vec<Vec<f64>>,
    /// `face_weights[l][f]`, evaluated at face midpoints.
    pub face_weights: Vec<Vec<f64>>,
    /// Sorted nodes where the node weight is positive.
    pub support: Vec<Vec<usize>>,
}

fn cells(len: f64, dx: f64) -> usize {
    (len / dx).round().max(0.0) as usize
}

fn strip_ramps(grid: &Grid, axis: usize, lo_node: usize, hi_node: usize, pieces: usize, ov: usize) -> Result<Vec<Trapezoid>> {
    let x = |i: usize| grid.axis_coord(axis, i);
    let span = hi_node - lo_node;
    let cuts: Vec<usize> = (0..=pieces).map(|k| lo_node + ((k * span) as f64 / pieces as f64).round() as usize).collect();
    let (left, right) = (ov / 2, ov - ov / 2);
    let mut out = Vec::with_capacity(pieces);
    for k in 0..pieces {
        let mut t = Trapezoid::full();
        if k > 0 {
            let c = cuts[k];
            if c < lo_node + left || c + right > hi_node {
                return Err(Error::InfeasibleLayout("overlap ramp leaves the domain".into()));
            }
            t.a = x(c - left);
            t.b = x(c + right);
        }
        if k + 1 < pieces {
            let c = cuts[k + 1];
            t.c = x(c - left);
            t.d = x(c + right);
        }
        if k > 0 && k + 1 < pieces && cuts[k + 1] - left < cuts[k] + right {
            return Err(Error::InfeasibleLayout(format!(
                "piece {k} is narrower than the overlap ({ov} cells)"
            )));
        }
        if pieces > 1 && (cuts[k + 1] - cuts[k]) < ov {
            return Err(Error::InfeasibleLayout(format!(
                "piece {k} has {} cells, overlap needs {ov}",
                cuts[k + 1] - cuts[k]
            )));
        }
        out.push(t);
    }
    Ok(out)
}

/// Snapped node range `[first, last]` where a trapezoid is nonzero, closed.
fn node_range(grid: &Grid, axis: usize, t: &Trapezoid) -> (usize, usize) {
    let n = grid.n()[axis];
    let first = (0..n).find(|&i| grid.axis_coord(axis, i) >= t.a).unwrap_or(0);
    let last = (0..n).rev().find(|&i| grid.axis_coord(axis, i) <= t.d).unwrap_or(n - 1);
    (first, last)
}

/// Builds the subdomains for `layout` on `grid`.
pub fn build_decomposition(grid: &Grid, layout: &DecompositionLayout) -> Result<Vec<Subdomain>> {
    let s = layout.subdomains;
    if s == 0 {
        return Err(Error::InfeasibleLayout("need at least one subdomain".into()));
    }
    let dim = grid.dim();
    let dx0 = grid.dx()[0];
    let min_dx = grid.dx().iter().cloned().fold(f64::INFINITY, f64::min);
    if s > 1 && layout.overlap < 2.0 * min_dx - 1e-12 {
        return Err(Error::InfeasibleLayout(format!(
            "overlap {} is below two cells ({})",
            layout.overlap,
            2.0 * min_dx
        )));
    }
    let full_box = NodeBox { lo: [0, 0], hi: [grid.n()[0] - 1, if dim == 2 { grid.n()[1] - 1 } else { 0 }] };

    let weights: Vec<WeightFn> = match layout.kind {
        LayoutKind::Strips => {
            let ov = cells(layout.overlap, dx0).max(2);
            strip_ramps(grid, 0, 0, grid.n()[0] - 1, s, ov)?
                .into_iter()
                .map(|t| WeightFn::Product(vec![(0, t)]))
                .collect()
        }
        LayoutKind::Blocks => {
            let per_axis = match &layout.blocks_per_axis {
                Some(v) => v.clone(),
                None if dim == 1 => vec![s],
                None => {
                    let r = (s as f64).sqrt().round() as usize;
                    if r * r == s {
                        vec![r, r]
                    } else {
                        vec![s, 1]
                    }
                }
            };
            if per_axis.len() != dim || per_axis.iter().product::<usize>() != s {
                return Err(Error::InfeasibleLayout(format!(
                    "blocks_per_axis {per_axis:?} does not give {s} subdomains in {dim}D"
                )));
            }
            let ramps: Vec<Vec<Trapezoid>> = (0..dim)
                .map(|a| strip_ramps(grid, a, 0, grid.n()[a] - 1, per_axis[a], cells(layout.overlap, grid.dx()[a]).max(2)))
                .collect::<Result<_>>()?;
            let mut out = Vec::with_capacity(s);
            let ny = if dim == 2 { per_axis[1] } else { 1 };
            for j in 0..ny {
                for i in 0..per_axis[0] {
                    let mut fs = vec![(0, ramps[0][i])];
                    if dim == 2 {
                        fs.push((1, ramps[1][j]));
                    }
                    out.push(WeightFn::Product(fs));
                }
            }
            out
        }
        LayoutKind::Separating => {
            if s < 2 {
                return Err(Error::InfeasibleLayout("separating layout needs s >= 2".into()));
            }
            let mut frame = Vec::with_capacity(dim);
            for a in 0..dim {
                let n = grid.n()[a];
                let dx = grid.dx()[a];
                let ov = cells(layout.overlap, dx).max(2);
                let band = cells(layout.boundary_width.unwrap_or(layout.overlap), dx).max(1);
                // interior region [band, n-1-band] must hold both ramps
                if band + 2 * ov + band >= n - 1 {
                    return Err(Error::InfeasibleLayout(format!(
                        "axis {a}: boundary band {band} and overlap {ov} cells do not fit in {n} nodes"
                    )));
                }
                let t = Trapezoid {
                    a: grid.axis_coord(a, band),
                    b: grid.axis_coord(a, band + ov),
                    c: grid.axis_coord(a, n - 1 - band - ov),
                    d: grid.axis_coord(a, n - 1 - band),
                };
                frame.push((a, t));
            }
            // interior pieces split the plateau of the first-axis frame factor
            let n0 = grid.n()[0];
            let ov = cells(layout.overlap, dx0).max(2);
            let band = cells(layout.boundary_width.unwrap_or(layout.overlap), dx0).max(1);
            let inner = strip_ramps(grid, 0, band + ov, n0 - 1 - band - ov, s - 1, ov)?;
            let mut out: Vec<WeightFn> = inner
                .into_iter()
                .map(|t| {
                    let mut fs = frame.clone();
                    fs.push((0, t));
                    WeightFn::Product(fs)
                })
                .collect();
            out.push(WeightFn::Complement(frame));
            out
        }
    };

    weights
        .into_iter()
        .enumerate()
        .map(|(id, weight)| {
            let components = components_of(grid, &weight, &full_box);
            let mut nodes = BTreeSet::new();
            for c in &components {
                nodes.extend(c.nodes(grid));
            }
            Ok(Subdomain { id, components, node_set: nodes.into_iter().collect(), weight })
        })
        .collect()
}

fn components_of(grid: &Grid, weight: &WeightFn, full: &NodeBox) -> Vec<NodeBox> {
    let dim = grid.dim();
    match weight {
        WeightFn::Product(fs) => {
            let mut b = *full;
            for (axis, t) in fs {
                let (lo, hi) = node_range(grid, *axis, t);
                b.lo[*axis] = b.lo[*axis].max(lo);
                b.hi[*axis] = b.hi[*axis].min(hi);
            }
            vec![b]
        }
        WeightFn::Complement(fs) => {
            // outside the open plateau box [b, c]
            let mut inner = *full;
            for (axis, t) in fs {
                let n = grid.n()[*axis];
                inner.lo[*axis] = (0..n).find(|&i| grid.axis_coord(*axis, i) > t.b).unwrap_or(n - 1);
                inner.hi[*axis] = (0..n).rev().find(|&i| grid.axis_coord(*axis, i) < t.c).unwrap_or(0);
            }
            // closure of the frame reaches the first plateau node
            let lo0 = inner.lo[0] - 1;
            let hi0 = inner.hi[0] + 1;
            if dim == 1 {
                vec![
                    NodeBox { lo: [0, 0], hi: [lo0, 0] },
                    NodeBox { lo: [hi0, 0], hi: [full.hi[0], 0] },
                ]
            } else {
                let lo1 = inner.lo[1] - 1;
                let hi1 = inner.hi[1] + 1;
                vec![
                    NodeBox { lo: [0, 0], hi: [full.hi[0], lo1] },
                    NodeBox { lo: [0, hi1], hi: [full.hi[0], full.hi[1]] },
                    NodeBox { lo: [0, lo1 + 1], hi: [lo0, hi1 - 1] },
                    NodeBox { lo: [hi0, lo1 + 1], hi: [full.hi[0], hi1 - 1] },
                ]
            }
        }
    }
}

/// Evaluates the raw weights at nodes and face midpoints and normalizes them.
pub fn build_partition_of_unity(grid: &Arc<Grid>, subdomains: &[Subdomain], overlap_width: f64) -> Result<PartitionOfUnity> {
    let s = subdomains.len();
    let nodes = grid.node_count();
    let mut node_weights: Vec<Vec<f64>> = subdomains
        .iter()
        .map(|sd| (0..nodes).map(|k| sd.weight.eval(grid.coords(k))).collect())
        .collect();
    let mut face_weights: Vec<Vec<f64>> = subdomains
        .iter()
        .map(|sd| grid.faces().iter().map(|f| sd.weight.eval(f.midpoint)).collect())
        .collect();
    normalize(&mut node_weights, s).map_err(Error::UncoveredNode)?;
    normalize(&mut face_weights, s).map_err(|f| Error::UncoveredNode(grid.faces()[f].lo))?;

    // zero outside the closed node set
    for (l, sd) in subdomains.iter().enumerate() {
        let mut inside = vec![false; nodes];
        for &k in &sd.node_set {
            inside[k] = true;
        }
        for k in 0..nodes {
            if !inside[k] && node_weights[l][k] != 0.0 {
                return Err(Error::InfeasibleLayout(format!("weight {l} is positive outside its subdomain at node {k}")));
            }
        }
    }
    let support = node_weights
        .iter()
        .map(|w| w.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(k, _)| k).collect())
        .collect();
    Ok(PartitionOfUnity {
        grid: grid.clone(),
        subdomains: subdomains.to_vec(),
        overlap_width,
        node_weights,
        face_weights,
        support,
    })
}

fn normalize(weights: &mut [Vec<f64>], s: usize) -> std::result::Result<(), usize> {
    let len = weights.first().map_or(0, |w| w.len());
    for k in 0..len {
        let total: f64 = (0..s).map(|l| weights[l][k]).sum();
        if !(total > 0.0) {
            return Err(k);
        }
        for w in weights.iter_mut() {
            w[k] /= total;
        }
    }
    Ok(())
}

/// Decomposition plus partition of unity in one call.
pub fn build_partition(grid: &Arc<Grid>, layout: &DecompositionLayout) -> Result<PartitionOfUnity> {
    let subdomains = build_decomposition(grid, layout)?;
    // narrowest snapped ramp; strips only ramp along the first axis
    let axes = if layout.kind == LayoutKind::Strips { 1 } else { grid.dim() };
    let ov = (0..axes)
        .map(|a| cells(layout.overlap, grid.dx()[a]).max(2) as f64 * grid.dx()[a])
        .fold(f64::INFINITY, f64::min);
    build_partition_of_unity(grid, &subdomains, if layout.subdomains > 1 { ov } else { layout.overlap })
}

/// True iff subdomains `1..s-1` stay off the grid boundary (needs `s >= 2`).
pub fn check_separating_condition(subdomains: &[Subdomain], grid: &Grid) -> bool {
    match subdomains.split_last() {
        Some((_, others)) if !others.is_empty() => {
            others.iter().all(|sd| sd.node_set.iter().all(|&k| !grid.is_boundary(k)))
        }
        _ => false,
    }
}

impl PartitionOfUnity {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    /// Nodes where `chi_l` is positive at the node or an incident face, plus one ring.
    pub fn support_closure(&self, l: usize) -> Vec<usize> {
        let grid = &self.grid;
        let mut core = vec![false; grid.node_count()];
        for &k in &self.support[l] {
            core[k] = true;
        }
        for (f, face) in grid.faces().iter().enumerate() {
            if self.face_weights[l][f] > 0.0 {
                core[face.lo] = true;
                core[face.hi] = true;
            }
        }
        let mut out = core.clone();
        for k in 0..grid.node_count() {
            if core[k] {
                for m in grid.ring(k) {
                    out[m] = true;
                }
            }
        }
        out.iter().enumerate().filter(|(_, b)| **b).map(|(k, _)| k).collect()
    }

    /// Largest per-face difference quotient of `chi_l` along each axis.
    pub fn max_weight_slope(&self, l: usize) -> f64 {
        let g = &self.grid;
        g.faces()
            .iter()
            .map(|f| (self.node_weights[l][f.hi] - self.node_weights[l][f.lo]).abs() / g.dx()[f.axis])
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn line(n: usize) -> Arc<Grid> {
        build_grid(1, &[n], &[0.0], &[1.0]).unwrap()
    }

    fn check_sums(pou: &PartitionOfUnity) {
        let s = pou.len();
        for k in 0..pou.grid().node_count() {
            let sum: f64 = (0..s).map(|l| pou.node_weights[l][k]).sum();
            assert!((sum - 1.0).abs() <= 1e-15, "node {k}: {sum}");
            assert!((0..s).all(|l| pou.node_weights[l][k] >= 0.0));
        }
        for f in 0..pou.grid().face_count() {
            let sum: f64 = (0..s).map(|l| pou.face_weights[l][f]).sum();
            assert!((sum - 1.0).abs() <= 1e-15, "face {f}: {sum}");
        }
    }

    #[test]
    fn single_strip_is_whole_domain() {
        let g = line(21);
        let pou = build_partition(&g, &DecompositionLayout::strips(1, 0.2)).unwrap();
        assert_eq!(pou.subdomains[0].node_set, (0..21).collect::<Vec<_>>());
        assert!(pou.node_weights[0].iter().all(|v| *v == 1.0));
        assert!(pou.face_weights[0].iter().all(|v| *v == 1.0));
        assert_eq!(pou.support_closure(0).len(), 21);
        assert!(!check_separating_condition(&pou.subdomains, &g));
    }

    #[test]
    fn two_strips_with_ramp() {
        let g = line(21);
        let subs = build_decomposition(&g, &DecompositionLayout::strips(2, 0.2)).unwrap();
        // Omega_1 = [0, 0.6], Omega_2 = [0.4, 1]
        assert_eq!(subs[0].components, vec![NodeBox { lo: [0, 0], hi: [12, 0] }]);
        assert_eq!(subs[1].components, vec![NodeBox { lo: [8, 0], hi: [20, 0] }]);
        let pou = build_partition_of_unity(&g, &subs, 0.2).unwrap();
        for k in 0..21 {
            let x = g.coords(k)[0];
            let expect = ((0.6 - x) / 0.2).clamp(0.0, 1.0);
            assert!((pou.node_weights[0][k] - expect).abs() < 1e-12, "x={x}");
            assert!((pou.node_weights[1][k] - (1.0 - expect)).abs() < 1e-12);
        }
        check_sums(&pou);
        assert!(!check_separating_condition(&pou.subdomains, &g));
        // closure of strip 1 ends one node past 0.6
        assert_eq!(*pou.support_closure(0).last().unwrap(), 13);
        assert_eq!(pou.support_closure(0).first(), Some(&0));
    }

    #[test]
    fn separating_layout_1d() {
        let g = line(41);
        let subs = build_decomposition(&g, &DecompositionLayout::separating(2, 0.1)).unwrap();
        assert_eq!(subs[0].components.len(), 1);
        assert_eq!(subs[1].components.len(), 2);
        assert!(check_separating_condition(&subs, &g));
        let pou = build_partition_of_unity(&g, &subs, 0.1).unwrap();
        check_sums(&pou);
        // frame weight matches the distance-to-complement ramp
        let c = &subs[1].components;
        let (left_end, right_start) = (g.coords(c[0].hi[0])[0], g.coords(c[1].lo[0])[0]);
        for k in 0..41 {
            let x = g.coords(k)[0];
            let d = (left_end - x).max(x - right_start).max(0.0);
            assert!((pou.node_weights[1][k] - (d / 0.1).min(1.0)).abs() < 1e-12);
        }
        // closure: one interval per component
        let cl = pou.support_closure(1);
        let gaps = cl.windows(2).filter(|w| w[1] != w[0] + 1).count();
        assert_eq!(gaps, 1);
        assert!(cl.contains(&0) && cl.contains(&40));
    }

    #[test]
    fn layouts_partition_and_lipschitz() {
        let g2 = build_grid(2, &[17, 13], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let g1 = line(65);
        let cases = [
            (g1.clone(), DecompositionLayout::strips(3, 0.1)),
            (g1.clone(), DecompositionLayout::separating(3, 0.1)),
            (g2.clone(), DecompositionLayout::blocks(vec![2, 2], 0.2)),
            (g2.clone(), DecompositionLayout::separating(2, 0.2)),
            (g2.clone(), DecompositionLayout::strips(2, 0.25)),
        ];
        for (g, layout) in cases {
            let pou = build_partition(&g, &layout).unwrap();
            check_sums(&pou);
            let mut covered = vec![false; g.node_count()];
            for (l, sd) in pou.subdomains.iter().enumerate() {
                for &k in &sd.node_set {
                    covered[k] = true;
                }
                assert!(pou.max_weight_slope(l) <= 1.0 / pou.overlap_width + 1e-12, "{layout:?}");
                // components pairwise disjoint
                let total: usize = sd.components.iter().map(|c| c.nodes(&g).count()).sum();
                assert_eq!(total, sd.node_set.len());
            }
            assert!(covered.iter().all(|c| *c));
            let sep = check_separating_condition(&pou.subdomains, &g);
            assert_eq!(sep, layout.kind == LayoutKind::Separating, "{layout:?}");
        }
    }

    #[test]
    fn infeasible_layouts() {
        let g = line(11);
        assert!(matches!(
            build_decomposition(&g, &DecompositionLayout::strips(5, 0.3)),
            Err(Error::InfeasibleLayout(_))
        ));
        assert!(matches!(
            build_decomposition(&g, &DecompositionLayout::strips(2, 0.05)),
            Err(Error::InfeasibleLayout(_))
        ));
        assert!(build_decomposition(&g, &DecompositionLayout::separating(2, 0.3)).is_err());
    }
}
