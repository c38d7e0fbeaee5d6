//! Polyline continua with two marked points: construction, iteration under a
//! map's lift with adaptive refinement, diameter in the quotient metric, and
//! chaining of abutting arcs.
//!
//! A continuum is stored as a connected polyline in the universal cover; the
//! chart says which quotient the projection lands in. Consecutive lift
//! vertices stay within `h_max` of each other after every operation.

use crate::error::{Error, Result};
use crate::spaces::{Chart, PlanePoint, Point};
use crate::systems::MapSpec;
use serde::{Deserialize, Serialize};

/// Default cap on refinement growth.
pub const DEFAULT_MAX_VERTICES: usize = 1_000_000;

/// Vertex-count threshold above which the diameter switches to a
/// farthest-point subsample.
pub const DIAM_EXACT_LIMIT: usize = 4000;

const MAX_SPLIT_DEPTH: u32 = 48;

/// A polyline continuum with two marked vertices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkedContinuum {
    pub chart: Chart,
    pub vertices: Vec<PlanePoint>,
    pub mark_p: usize,
    pub mark_q: usize,
    pub h_max: f64,
}

/// Diameter value plus whether a subsample was used to compute it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DiamInfo {
    pub value: f64,
    pub subsampled: bool,
}

impl MarkedContinuum {
    pub fn new(
        chart: Chart,
        vertices: Vec<PlanePoint>,
        mark_p: usize,
        mark_q: usize,
        h_max: f64,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidArgument("continuum needs >= 1 vertex".into()));
        }
        if !(h_max > 0.0) {
            return Err(Error::InvalidArgument("h_max must be positive".into()));
        }
        if mark_p >= vertices.len() || mark_q >= vertices.len() {
            return Err(Error::InvalidArgument("mark index out of range".into()));
        }
        for v in &vertices {
            if !v.is_finite() {
                return Err(Error::InvalidArgument("non-finite vertex".into()));
            }
        }
        let c = Self {
            chart,
            vertices,
            mark_p,
            mark_q,
            h_max,
        };
        c.check_gaps()?;
        Ok(c)
    }

    /// Straight lift segment centered at a lift of `center`, marks at the
    /// two ends, vertex spacing at most `h_max`.
    pub fn segment(center: &Point, direction: PlanePoint, length: f64, h_max: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::InvalidArgument("segment length must be positive".into()));
        }
        if !(h_max > 0.0) {
            return Err(Error::InvalidArgument("h_max must be positive".into()));
        }
        let chart = center.chart()?;
        let c = center.lift()?;
        let dir = direction.normalized();
        let n = (length / h_max).ceil() as usize;
        let n = n.max(1);
        let mut vertices = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let t = i as f64 / n as f64 - 0.5;
            vertices.push(c + dir * (t * length));
        }
        Self::new(chart, vertices, 0, n, h_max)
    }

    /// Straight segment with an explicit vertex at the center (odd vertex
    /// count), used for leaves whose base must lie on the polyline.
    pub fn segment_with_center(
        center: &Point,
        direction: PlanePoint,
        half_length: f64,
        h_max: f64,
    ) -> Result<Self> {
        if !(half_length > 0.0) {
            return Err(Error::InvalidArgument("segment length must be positive".into()));
        }
        let chart = center.chart()?;
        let c = center.lift()?;
        let dir = direction.normalized();
        let half_n = ((half_length / h_max).ceil() as usize).max(1);
        let mut vertices = Vec::with_capacity(2 * half_n + 1);
        for i in 0..=(2 * half_n) {
            let t = (i as f64 - half_n as f64) / half_n as f64;
            vertices.push(c + dir * (t * half_length));
        }
        Self::new(chart, vertices, 0, 2 * half_n, h_max)
    }

    fn check_gaps(&self) -> Result<()> {
        for w in self.vertices.windows(2) {
            if (w[1] - w[0]).norm() > self.h_max * (1.0 + 1e-9) {
                return Err(Error::InvalidArgument(format!(
                    "vertex gap {} exceeds h_max {}",
                    (w[1] - w[0]).norm(),
                    self.h_max
                )));
            }
        }
        Ok(())
    }

    pub fn mark_p_lift(&self) -> PlanePoint {
        self.vertices[self.mark_p]
    }

    pub fn mark_q_lift(&self) -> PlanePoint {
        self.vertices[self.mark_q]
    }

    pub fn project_vertex(&self, i: usize) -> Point {
        self.chart.project(self.vertices[i])
    }

    /// One application of the lift (or inverse lift), refining so consecutive
    /// image vertices stay within h_max. New vertices come from midpoint
    /// insertion in the source polyline, re-mapped.
    fn step(&self, spec: &MapSpec, forward: bool, max_vertices: usize) -> Result<Self> {
        let map = |p: PlanePoint| -> Result<PlanePoint> {
            if forward {
                spec.apply_lift(p)
            } else {
                spec.apply_inverse_lift(p)
            }
        };
        let n = self.vertices.len();
        let mut out: Vec<PlanePoint> = Vec::with_capacity(n);
        let mut index_map: Vec<usize> = Vec::with_capacity(n);
        out.push(map(self.vertices[0])?);
        index_map.push(0);
        for i in 0..n - 1 {
            let sa = self.vertices[i];
            let sb = self.vertices[i + 1];
            let ia = *out.last().unwrap();
            let ib = map(sb)?;
            subdivide_edge(&map, sa, sb, ia, ib, self.h_max, max_vertices, 0, &mut out)?;
            index_map.push(out.len() - 1);
        }
        // Deck-translate back near the fundamental square: keeps lift
        // coordinates bounded over long iterations without changing the
        // projected continuum.
        let shift = PlanePoint::new(out[0].x.floor(), out[0].y.floor());
        if shift.x != 0.0 || shift.y != 0.0 {
            for v in out.iter_mut() {
                *v = *v - shift;
            }
        }
        Self::new(
            self.chart,
            out,
            index_map[self.mark_p],
            index_map[self.mark_q],
            self.h_max,
        )
    }

    /// Image after n applications of the lift (inverse lift for n < 0),
    /// with marks following their points.
    pub fn iterate(&self, spec: &MapSpec, n: i64) -> Result<Self> {
        self.iterate_with_budget(spec, n, DEFAULT_MAX_VERTICES)
    }

    pub fn iterate_with_budget(&self, spec: &MapSpec, n: i64, max_vertices: usize) -> Result<Self> {
        let mut cur = self.clone();
        for _ in 0..n.unsigned_abs() {
            cur = cur.step(spec, n > 0, max_vertices)?;
        }
        Ok(cur)
    }

    /// Maximum pairwise quotient distance over vertices. Exact for up to
    /// [`DIAM_EXACT_LIMIT`] vertices, otherwise over a farthest-point
    /// subsample of that size.
    pub fn diam(&self) -> f64 {
        self.diam_info().value
    }

    pub fn diam_info(&self) -> DiamInfo {
        let v = &self.vertices;
        if let Some(step) = uniform_straight_step(v) {
            return DiamInfo {
                value: uniform_segment_diam(self.chart, v[0], step, v.len()),
                subsampled: false,
            };
        }
        if v.len() <= DIAM_EXACT_LIMIT {
            return DiamInfo {
                value: pairwise_diam(self.chart, v),
                subsampled: false,
            };
        }
        // Thin very long polylines by stride first; consecutive vertices are
        // within h_max, so a stride-s thinning perturbs the diameter by at
        // most s * h_max.
        let candidates: Vec<PlanePoint> = if v.len() > 40_000 {
            let stride = v.len().div_ceil(40_000);
            v.iter().copied().step_by(stride).collect()
        } else {
            v.clone()
        };
        let sub = farthest_point_subsample(self.chart, &candidates, DIAM_EXACT_LIMIT);
        DiamInfo {
            value: pairwise_diam(self.chart, &sub),
            subsampled: true,
        }
    }

    /// Concatenate abutting parts into one polyline with marks at `a` and
    /// `c`. Consecutive parts must share an endpoint vertex within 1e-9 in
    /// the quotient metric.
    pub fn chain_union(parts: &[MarkedContinuum], a: &Point, c: &Point) -> Result<Self> {
        const TOL: f64 = 1e-9;
        if parts.is_empty() {
            return Err(Error::NotChained("no parts".into()));
        }
        let chart = parts[0].chart;
        if parts.iter().any(|p| p.chart != chart) {
            return Err(Error::NotChained("mixed charts".into()));
        }
        let mut vertices: Vec<PlanePoint> = parts[0].vertices.clone();
        for (k, part) in parts.iter().enumerate().skip(1) {
            let tail = *vertices.last().unwrap();
            let head = part.vertices[0];
            let last = *part.vertices.last().unwrap();
            // Orient the next part so its head touches our tail, then move it
            // by the deck transformation that makes the lifts agree.
            let (oriented, join) = if chart.lift_dist(tail, head) <= TOL {
                (part.vertices.clone(), head)
            } else if chart.lift_dist(tail, last) <= TOL {
                let mut r = part.vertices.clone();
                r.reverse();
                (r, last)
            } else {
                return Err(Error::NotChained(format!(
                    "parts {} and {} do not share an endpoint",
                    k - 1,
                    k
                )));
            };
            let oriented = align_lift(chart, &oriented, join, tail)?;
            vertices.extend_from_slice(&oriented[1..]);
        }
        let h_max = parts.iter().fold(0.0f64, |m, p| m.max(p.h_max));
        let mark_p = find_vertex(chart, &vertices, a, TOL)
            .ok_or_else(|| Error::MarkNotFound(format!("{a:?}")))?;
        let mark_q = find_vertex(chart, &vertices, c, TOL)
            .ok_or_else(|| Error::MarkNotFound(format!("{c:?}")))?;
        Self::new(chart, vertices, mark_p, mark_q, h_max)
    }

    /// Sub-polyline between two vertex indices (inclusive), re-marked at its
    /// ends. Reversed slices are returned in ascending orientation.
    pub fn slice_arc(&self, i: usize, j: usize) -> Result<Self> {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        if hi >= self.vertices.len() {
            return Err(Error::InvalidArgument("slice index out of range".into()));
        }
        let vertices = self.vertices[lo..=hi].to_vec();
        let last = vertices.len() - 1;
        Self::new(self.chart, vertices, 0, last, self.h_max)
    }
}

#[allow(clippy::too_many_arguments)]
fn subdivide_edge(
    map: &dyn Fn(PlanePoint) -> Result<PlanePoint>,
    sa: PlanePoint,
    sb: PlanePoint,
    ia: PlanePoint,
    ib: PlanePoint,
    h_max: f64,
    max_vertices: usize,
    depth: u32,
    out: &mut Vec<PlanePoint>,
) -> Result<()> {
    if (ib - ia).norm() <= h_max {
        if out.len() >= max_vertices {
            return Err(Error::VertexBudget(out.len()));
        }
        out.push(ib);
        return Ok(());
    }
    if depth >= MAX_SPLIT_DEPTH {
        return Err(Error::VertexBudget(out.len()));
    }
    let sm = sa.midpoint(sb);
    let im = map(sm)?;
    subdivide_edge(map, sa, sm, ia, im, h_max, max_vertices, depth + 1, out)?;
    subdivide_edge(map, sm, sb, im, ib, h_max, max_vertices, depth + 1, out)
}

fn pairwise_diam(chart: Chart, v: &[PlanePoint]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            let d = chart.lift_dist(v[i], v[j]);
            if d > best {
                best = d;
            }
        }
    }
    best
}

/// Detect an evenly spaced collinear vertex list and return its step vector.
fn uniform_straight_step(v: &[PlanePoint]) -> Option<PlanePoint> {
    if v.len() < 3 {
        return if v.len() == 2 { Some(v[1] - v[0]) } else { None };
    }
    let step = v[1] - v[0];
    let scale = v.iter().fold(1.0f64, |m, p| m.max(p.norm()));
    let tol = 1e-12 * (1.0 + step.norm()) + 1e-14 * scale;
    for w in v.windows(2).skip(1) {
        if ((w[1] - w[0]) - step).norm() > tol {
            return None;
        }
    }
    // Idealized positions must still agree with the real endpoint.
    let ideal_end = v[0] + step * (v.len() - 1) as f64;
    if (ideal_end - *v.last().unwrap()).norm() > 1e-10 * (1.0 + scale) {
        return None;
    }
    Some(step)
}

/// Diameter of an evenly spaced straight vertex set in O(V).
///
/// Pair distances on the torus depend only on the index difference d:
/// dist(v_i, v_{i+d}) = wrap(d * step). On the sphere a pair additionally
/// sees the antipodal lift, whose distance depends only on the index sum:
/// min over lattice of |v_i + v_j - m| = wrap(2 v_0 + (i + j) step).
fn uniform_segment_diam(chart: Chart, v0: PlanePoint, step: PlanePoint, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let wrap = |p: PlanePoint| -> f64 {
        (p.x - p.x.round()).hypot(p.y - p.y.round())
    };
    match chart {
        Chart::Torus => {
            let mut best = 0.0f64;
            for d in 1..n {
                best = best.max(wrap(step * d as f64));
            }
            best
        }
        Chart::Sphere => {
            // sum_dist[s] for s = i + j in 0 ..= 2(n-1).
            let sum_dist: Vec<f64> = (0..=(2 * (n - 1)))
                .map(|s| wrap(v0 + v0 + step * s as f64))
                .collect();
            // For index difference d >= 1 the admissible sums are
            // s = d, d+2, ..., 2(n-1)-d, all of parity d mod 2. Walk d
            // downward and expand per-parity window maxima at both ends.
            let mut best = 0.0f64;
            let mut acc = [f64::NEG_INFINITY; 2];
            let top = n - 1;
            for d in (1..n).rev() {
                let p = d & 1;
                acc[p] = acc[p].max(sum_dist[d]).max(sum_dist[2 * top - d]);
                let diff = wrap(step * d as f64);
                best = best.max(diff.min(acc[p]));
            }
            best
        }
    }
}

/// Greedy farthest-point subsample of k points, seeded at the first vertex.
fn farthest_point_subsample(chart: Chart, v: &[PlanePoint], k: usize) -> Vec<PlanePoint> {
    let mut chosen = Vec::with_capacity(k);
    chosen.push(v[0]);
    let mut min_dist: Vec<f64> = v.iter().map(|p| chart.lift_dist(v[0], *p)).collect();
    while chosen.len() < k {
        let (mut arg, mut best) = (0usize, -1.0f64);
        for (i, d) in min_dist.iter().enumerate() {
            if *d > best {
                best = *d;
                arg = i;
            }
        }
        if best <= 0.0 {
            break;
        }
        let p = v[arg];
        chosen.push(p);
        for (i, d) in min_dist.iter_mut().enumerate() {
            let nd = chart.lift_dist(p, v[i]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    chosen
}

/// Translate (and possibly reflect, on the sphere) a part's lift so that its
/// `join` vertex coincides with `target` exactly as a lift.
fn align_lift(
    chart: Chart,
    vertices: &[PlanePoint],
    join: PlanePoint,
    target: PlanePoint,
) -> Result<Vec<PlanePoint>> {
    let near_int = |v: f64| (v - v.round()).abs() <= 1e-7;
    let d = target - join;
    if near_int(d.x) && near_int(d.y) {
        let shift = PlanePoint::new(d.x.round(), d.y.round());
        return Ok(vertices.iter().map(|v| *v + shift).collect());
    }
    if chart == Chart::Sphere {
        let s = target + join;
        if near_int(s.x) && near_int(s.y) {
            let shift = PlanePoint::new(s.x.round(), s.y.round());
            return Ok(vertices.iter().map(|v| shift - *v).collect());
        }
    }
    Err(Error::NotChained(
        "no deck transformation joins the parts".into(),
    ))
}

fn find_vertex(chart: Chart, vertices: &[PlanePoint], p: &Point, tol: f64) -> Option<usize> {
    let lift = p.lift().ok()?;
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in vertices.iter().enumerate() {
        let d = chart.lift_dist(*v, lift);
        if d <= tol && best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::Point;
    use crate::systems::MapSpec;

    fn unstable_dir() -> PlanePoint {
        MapSpec::torus(0.0).eigenstructure().unwrap().v_u
    }

    fn stable_dir() -> PlanePoint {
        MapSpec::torus(0.0).eigenstructure().unwrap().v_s
    }

    #[test]
    fn segment_examples() {
        let c = MarkedContinuum::segment(
            &Point::torus(0.0, 0.0),
            PlanePoint::new(1.0, 0.0),
            0.1,
            0.01,
        )
        .unwrap();
        assert_eq!(c.vertices.len(), 11);
        assert_eq!(c.mark_p, 0);
        assert_eq!(c.mark_q, 10);
        assert!((c.vertices[0].x + 0.05).abs() < 1e-15);
        assert!((c.vertices[10].x - 0.05).abs() < 1e-15);
        assert!((c.diam() - 0.1).abs() < 1e-12);

        assert!(MarkedContinuum::segment(
            &Point::torus(0.0, 0.0),
            PlanePoint::new(1.0, 0.0),
            0.0,
            0.01
        )
        .is_err());
    }

    #[test]
    fn iterate_identity_and_eigen_stretching() {
        let spec = MapSpec::torus(0.0);
        let e = spec.eigenstructure().unwrap();
        let c =
            MarkedContinuum::segment(&Point::torus(0.3, 0.4), unstable_dir(), 0.01, 0.001).unwrap();
        let same = c.iterate(&spec, 0).unwrap();
        assert_eq!(same.vertices, c.vertices);

        // Unstable segments stretch by mu_u; oracle: map the end vertices
        // directly through the lift.
        let it = c.iterate(&spec, 1).unwrap();
        let direct_len = (spec.apply_lift(c.mark_q_lift()).unwrap()
            - spec.apply_lift(c.mark_p_lift()).unwrap())
        .norm();
        assert!((it.diam() - direct_len).abs() < 1e-12);
        assert!((it.diam() - 0.01 * e.mu_u).abs() < 1e-9);

        let c =
            MarkedContinuum::segment(&Point::torus(0.3, 0.4), stable_dir(), 0.01, 0.001).unwrap();
        let it = c.iterate(&spec, 1).unwrap();
        assert!((it.diam() - 0.01 * e.mu_s).abs() < 1e-9);
    }

    #[test]
    fn refinement_invariant_holds_through_steps() {
        for t in [0.0, 1.0] {
            let spec = MapSpec::torus(t);
            let c = MarkedContinuum::segment(
                &Point::torus(0.2, 0.7),
                PlanePoint::new(1.0, 0.3),
                0.02,
                0.002,
            )
            .unwrap();
            let mut cur = c;
            for _ in 0..4 {
                cur = cur.iterate(&spec, 1).unwrap();
                for w in cur.vertices.windows(2) {
                    assert!((w[1] - w[0]).norm() <= cur.h_max * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn iterate_round_trip_marks() {
        for t in [0.0, 0.7] {
            let spec = MapSpec::torus(t);
            let c = MarkedContinuum::segment(
                &Point::torus(0.6, 0.1),
                PlanePoint::new(0.4, 1.0),
                0.03,
                0.003,
            )
            .unwrap();
            let back = c.iterate(&spec, 3).unwrap().iterate(&spec, -3).unwrap();
            assert!(
                Chart::Torus.lift_dist(back.mark_p_lift(), c.mark_p_lift()) < 1e-9,
                "t={t}"
            );
            assert!(Chart::Torus.lift_dist(back.mark_q_lift(), c.mark_q_lift()) < 1e-9);
        }
    }

    #[test]
    fn eigen_diam_growth_below_injectivity_radius() {
        let spec = MapSpec::torus(0.0);
        let e = spec.eigenstructure().unwrap();
        let len = 0.004;
        let c =
            MarkedContinuum::segment(&Point::torus(0.1, 0.9), unstable_dir(), len, 0.0005).unwrap();
        for n in 1..=4i64 {
            let it = c.iterate(&spec, n).unwrap();
            let expect = len * e.mu_u.powi(n as i32);
            if expect < 0.5 {
                assert!(((it.diam() - expect) / expect).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn wraparound_diameter() {
        // A lift segment from (0,0) to (0.9,0) has torus diameter 0.5.
        let n = 90;
        let vertices: Vec<PlanePoint> = (0..=n)
            .map(|i| PlanePoint::new(0.9 * i as f64 / n as f64, 0.0))
            .collect();
        let c = MarkedContinuum::new(Chart::Torus, vertices, 0, n, 0.011).unwrap();
        assert!((c.diam() - 0.5).abs() < 0.011);

        let single = MarkedContinuum::new(
            Chart::Torus,
            vec![PlanePoint::new(0.2, 0.2)],
            0,
            0,
            1.0,
        )
        .unwrap();
        assert_eq!(single.diam(), 0.0);
    }

    #[test]
    fn sphere_diam_sees_antipodal_folding() {
        // Endpoints (0.1,0.1) and (0.9,0.9) are the same class; the sphere
        // diameter of the chord between them is attained against the middle.
        let n = 200;
        let vertices: Vec<PlanePoint> = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                PlanePoint::new(0.1 + 0.8 * t, 0.1 + 0.8 * t)
            })
            .collect();
        let c = MarkedContinuum::new(Chart::Sphere, vertices.clone(), 0, n, 0.006).unwrap();
        let torus_version = MarkedContinuum::new(Chart::Torus, vertices, 0, n, 0.006).unwrap();
        assert!(c.diam() < torus_version.diam());
        // Brute-force oracle over projected classes.
        let mut expect = 0.0f64;
        for i in 0..=n {
            for j in 0..=n {
                expect = expect.max(crate::spaces::lift_sphere_dist(
                    c.vertices[i],
                    c.vertices[j],
                ));
            }
        }
        assert!((c.diam() - expect).abs() < 1e-12);
    }

    #[test]
    fn chain_union_cases() {
        let h = 0.01;
        let a = MarkedContinuum::segment(
            &Point::torus(0.1, 0.0),
            PlanePoint::new(1.0, 0.0),
            0.05,
            h,
        )
        .unwrap();
        let b = MarkedContinuum::segment(
            &Point::torus(0.15, 0.0),
            PlanePoint::new(1.0, 0.0),
            0.05,
            h,
        )
        .unwrap();
        let u = MarkedContinuum::chain_union(
            &[a.clone(), b.clone()],
            &Point::torus(0.075, 0.0),
            &Point::torus(0.175, 0.0),
        )
        .unwrap();
        assert!((u.diam() - 0.1).abs() < 1e-12);
        assert_eq!(u.mark_p, 0);
        assert_eq!(u.mark_q, u.vertices.len() - 1);

        let single = MarkedContinuum::chain_union(
            &[a.clone()],
            &Point::torus(0.125, 0.0),
            &Point::torus(0.075, 0.0),
        )
        .unwrap();
        assert_eq!(single.mark_p, single.vertices.len() - 1);
        assert_eq!(single.mark_q, 0);

        let far = MarkedContinuum::segment(
            &Point::torus(0.5, 0.5),
            PlanePoint::new(1.0, 0.0),
            0.05,
            h,
        )
        .unwrap();
        assert!(MarkedContinuum::chain_union(
            &[a, far],
            &Point::torus(0.075, 0.0),
            &Point::torus(0.525, 0.5)
        )
        .is_err());
    }

    #[test]
    fn chain_union_across_wrap() {
        // Two segments that abut only через the torus wrap: the second part's
        // lift is shifted by a deck translation before concatenation.
        let h = 0.01;
        let a = MarkedContinuum::segment(
            &Point::torus(0.975, 0.0),
            PlanePoint::new(1.0, 0.0),
            0.05,
            h,
        )
        .unwrap();
        // Lift of b starts at (0.0,0.0) == (1.0,0.0) mod 1, the tail of a.
        let b_vertices: Vec<PlanePoint> = (0..=5)
            .map(|i| PlanePoint::new(0.01 * i as f64, 0.0))
            .collect();
        let b = MarkedContinuum::new(Chart::Torus, b_vertices, 0, 5, h).unwrap();
        let u = MarkedContinuum::chain_union(
            &[a, b],
            &Point::torus(0.95, 0.0),
            &Point::torus(0.05, 0.0),
        )
        .unwrap();
        assert!((u.diam() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn fast_diam_matches_brute_force_on_straight_segments() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let cx: f64 = rng.gen();
            let cy: f64 = rng.gen();
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let len: f64 = 10f64.powf(rng.gen_range(-3.0..0.2));
            let n: usize = rng.gen_range(2..60);
            let dir = PlanePoint::new(th.cos(), th.sin());
            let v0 = PlanePoint::new(cx, cy) - dir * (len / 2.0);
            let step = dir * (len / (n - 1).max(1) as f64);
            let vertices: Vec<PlanePoint> = (0..n).map(|i| v0 + step * i as f64).collect();
            for chart in [Chart::Torus, Chart::Sphere] {
                let c =
                    MarkedContinuum::new(chart, vertices.clone(), 0, n - 1, step.norm() + 1e-12)
                        .unwrap();
                let fast = c.diam();
                let brute = {
                    let mut best = 0.0f64;
                    for i in 0..n {
                        for j in (i + 1)..n {
                            best = best.max(chart.lift_dist(vertices[i], vertices[j]));
                        }
                    }
                    best
                };
                assert!(
                    (fast - brute).abs() < 1e-9,
                    "chart {chart:?}: fast {fast} vs brute {brute}"
                );
            }
        }
    }

    #[test]
    fn vertex_budget_guards_growth() {
        let spec = MapSpec::torus(0.0);
        let c = MarkedContinuum::segment(
            &Point::torus(0.0, 0.0),
            unstable_dir(),
            0.05,
            0.0005,
        )
        .unwrap();
        let err = c.iterate_with_budget(&spec, 8, 2000).unwrap_err();
        assert!(matches!(err, Error::VertexBudget(_)));
    }
}
