//! Local stable/unstable leaf continua and their intersections: leaf
//! construction with iterate-diameter trimming, the bracket operation
//! (unstable leaf of x meets stable leaf of y), and the empirical
//! local-product calibration of delta against eps.
//!
//! Leaves live on straight eigenlines in the linear chart; for t > 0 they
//! are transported through the solved conjugacy. Intersection candidates
//! come from exact 2x2 line solves over the relevant lattice and antipodal
//! lifts, and every candidate must pass the dynamical membership test
//! (forward closeness to y, backward closeness to x) before it is reported.

use crate::conjugacy::{Correction, Semiconjugacy};
use crate::continua::MarkedContinuum;
use crate::error::{Error, Result};
use crate::spaces::{Chart, PlanePoint, Point, Vec2};
use crate::systems::MapSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeafKind {
    Stable,
    Unstable,
}

/// A local leaf continuum: the component through `base` of the maximal
/// segment whose forward (Stable) resp. backward (Unstable) iterates all
/// keep diameter at most eps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeafSegment {
    pub base: Point,
    pub kind: LeafKind,
    pub eps: f64,
    pub continuum: MarkedContinuum,
    /// Half-length of the generating segment in the linear chart.
    pub radius: f64,
}

/// Verified intersection points, pairwise at least `tolerance` apart.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntersectionSet {
    pub points: Vec<Point>,
    pub tolerance: f64,
}

/// Knobs of the bracket search.
#[derive(Clone, Copy, Debug)]
pub struct BracketParams {
    /// Iterations of the membership test (stands in for infinity).
    pub n_verify: u32,
    /// Dedup tolerance in the quotient metric.
    pub dedup_tol: f64,
}

impl Default for BracketParams {
    fn default() -> Self {
        Self {
            n_verify: 200,
            dedup_tol: 1e-7,
        }
    }
}

const LEAF_TRIM_HORIZON: i64 = 24;

/// Orbit rounding-noise allowance after n iterations.
///
/// Float orbits decorrelate at the expansion rate: independently computed
/// nearby orbits acquire relative noise ~ ulp * mu_u^n, so distances beyond
/// n ~ 32 are unverifiable in doubles. A claim checked with this allowance
/// is strict where a violation is detectable and vacuous past the horizon.
pub fn orbit_noise_allowance(mu_u: f64, n: u32) -> f64 {
    32.0 * f64::EPSILON * mu_u.abs().powi(n as i32)
}

fn eigen_dir(spec: &MapSpec, kind: LeafKind) -> Result<Vec2> {
    let e = spec.eigenstructure()?;
    Ok(match kind {
        LeafKind::Stable => e.v_s,
        LeafKind::Unstable => e.v_u,
    })
}

/// Largest diameter any iterate of the leaf candidate shows along its
/// trimming direction, up to the horizon.
fn max_iterate_diam(
    c: &MarkedContinuum,
    spec: &MapSpec,
    kind: LeafKind,
    horizon: i64,
) -> Result<f64> {
    let dirn: i64 = match kind {
        LeafKind::Stable => 1,
        LeafKind::Unstable => -1,
    };
    let mut cur = c.clone();
    let mut worst = cur.diam();
    for _ in 0..horizon {
        cur = cur.iterate(spec, dirn)?;
        worst = worst.max(cur.diam());
    }
    Ok(worst)
}

/// Transported image of the linear segment through `center`, refined on the
/// parameter until lift gaps drop below h. Returns parameters and points;
/// tau = 0 is always a sample.
fn transported_samples(
    h_map: &Semiconjugacy,
    center: PlanePoint,
    dir: Vec2,
    r: f64,
    h: f64,
) -> Result<(Vec<f64>, Vec<PlanePoint>)> {
    let eval = |tau: f64| -> Result<PlanePoint> { h_map.invert(center + dir * tau, 1e-11) };
    let seed = 16usize;
    let mut taus: Vec<f64> = (0..=2 * seed)
        .map(|i| (i as f64 / seed as f64 - 1.0) * r)
        .collect();
    let mut pts = Vec::with_capacity(taus.len());
    for t in &taus {
        pts.push(eval(*t)?);
    }
    let mut i = 0usize;
    while i + 1 < taus.len() {
        if (pts[i + 1] - pts[i]).norm() > h {
            if taus[i + 1] - taus[i] < 1e-12 {
                return Err(Error::NonConvergence(0));
            }
            let tm = 0.5 * (taus[i] + taus[i + 1]);
            taus.insert(i + 1, tm);
            pts.insert(i + 1, eval(tm)?);
            if taus.len() > 100_000 {
                return Err(Error::VertexBudget(taus.len()));
            }
        } else {
            i += 1;
        }
    }
    Ok((taus, pts))
}

/// The sub-polyline of the transported samples with |tau| <= r.
fn sliced_polyline(
    chart: Chart,
    taus: &[f64],
    pts: &[PlanePoint],
    r: f64,
    h: f64,
) -> Result<MarkedContinuum> {
    let lo = taus.partition_point(|t| *t < -r);
    let hi = taus.partition_point(|t| *t <= r);
    if hi - lo < 2 {
        return Err(Error::TrivialContinuum);
    }
    let vertices = pts[lo..hi].to_vec();
    let last = vertices.len() - 1;
    MarkedContinuum::new(chart, vertices, 0, last, h)
}

/// The eps-leaf of `x`: the straight eigensegment through x (t = 0), or the
/// conjugacy pullback of the straight segment through h(x) (t > 0), extended
/// symmetrically to the largest radius whose forward (Stable) resp. backward
/// (Unstable) iterates all keep diameter at most eps.
pub fn leaf(
    spec: &MapSpec,
    x: &Point,
    kind: LeafKind,
    eps: f64,
    h: f64,
    transport: Option<&Semiconjugacy>,
) -> Result<LeafSegment> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::InvalidArgument(
            "leaf eps must lie in (0, 0.25), below half the injectivity radius".into(),
        ));
    }
    let chart = spec.chart()?;
    if x.chart()? != chart {
        return Err(Error::TypeMismatch);
    }
    if spec.t != 0.0 && transport.is_none() {
        return Err(Error::ConjugacyMissing);
    }
    let dir = eigen_dir(spec, kind)?;
    let lift = x.lift()?;
    let r_cap = 4.0 * eps;
    // For t > 0 the transported samples are computed once at the radius cap
    // and candidates are parameter slices; inversion is the expensive part.
    let transported = match transport {
        Some(hm) if spec.t != 0.0 => {
            let center = hm.forward(lift);
            Some(transported_samples(hm, center, dir, r_cap, h)?)
        }
        _ => None,
    };
    let build = |r: f64| -> Result<MarkedContinuum> {
        match &transported {
            Some((taus, pts)) => sliced_polyline(chart, taus, pts, r, h),
            None => {
                let base = chart.project(lift);
                MarkedContinuum::segment_with_center(&base, dir, r, h)
            }
        }
    };
    // Largest radius with iterate diameters <= eps; the leaf grows with r,
    // so bisection applies. Sub-sample-resolution slices count as fitting.
    let fits = |r: f64| -> Result<bool> {
        match build(r) {
            Err(Error::TrivialContinuum) => Ok(true),
            Err(e) => Err(e),
            Ok(c) => Ok(max_iterate_diam(&c, spec, kind, LEAF_TRIM_HORIZON)? <= eps),
        }
    };
    let mut lo = 0.0f64;
    let mut hi = eps;
    while hi <= r_cap / 2.0 && fits(hi)? {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(Error::NonConvergence(30));
    }
    let continuum = build(lo)?;
    Ok(LeafSegment {
        base: x.clone(),
        kind,
        eps,
        continuum,
        radius: lo,
    })
}

/// Verify the defining leaf property up to n_cap iterations: every iterate
/// diameter stays within eps plus the orbit noise allowance. Once the
/// diameter falls below the checkable resolution the remaining iterates are
/// accepted (float orbits past that point carry no information), and a
/// refinement blow-up occurring only after the diameter has already dropped
/// far below eps is treated the same way.
pub fn verify_leaf(leaf: &LeafSegment, spec: &MapSpec, n_cap: u32) -> Result<bool> {
    let mu_u = spec.eigenstructure()?.mu_u;
    let dirn: i64 = match leaf.kind {
        LeafKind::Stable => 1,
        LeafKind::Unstable => -1,
    };
    let mut cur = leaf.continuum.clone();
    for n in 0..=n_cap {
        let d = cur.diam();
        let bound = leaf.eps * (1.0 + 1e-9) + orbit_noise_allowance(mu_u, n);
        if d > bound {
            return Ok(false);
        }
        if d < 1e-9 {
            return Ok(true);
        }
        if n < n_cap {
            match cur.iterate(spec, dirn) {
                Ok(next) => cur = next,
                Err(Error::VertexBudget(_)) if d < leaf.eps / 10.0 => return Ok(true),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(true)
}

/// Literal membership test: z lies in C^u_eps(x) and C^s_eps(y) when every
/// forward iterate stays eps-close to y's and every backward iterate stays
/// eps-close to x's, up to the orbit noise allowance.
pub fn bracket_member(
    spec: &MapSpec,
    z: &Point,
    x: &Point,
    y: &Point,
    eps: f64,
    n_verify: u32,
) -> Result<bool> {
    let mu_u = spec.eigenstructure()?.mu_u;
    let mut zf = z.clone();
    let mut yf = y.clone();
    for n in 0..=n_verify {
        if zf.dist(&yf)? > eps * (1.0 + 1e-9) + orbit_noise_allowance(mu_u, n) {
            return Ok(false);
        }
        zf = spec.apply(&zf)?;
        yf = spec.apply(&yf)?;
    }
    let mut zb = z.clone();
    let mut xb = x.clone();
    for n in 0..=n_verify {
        if zb.dist(&xb)? > eps * (1.0 + 1e-9) + orbit_noise_allowance(mu_u, n) {
            return Ok(false);
        }
        zb = spec.apply_inverse(&zb)?;
        xb = spec.apply_inverse(&xb)?;
    }
    Ok(true)
}

/// All verified points of C^u_eps(x) intersected with C^s_eps(y).
///
/// Candidates come from exact 2x2 solves of the eigenline equations in the
/// linear chart over the lattice translates (and both antipodal lifts on
/// the sphere), are pulled back through the conjugacy for t > 0, and are
/// then filtered by the dynamical membership test.
pub fn bracket(
    spec: &MapSpec,
    x: &Point,
    y: &Point,
    eps: f64,
    transport: Option<&Semiconjugacy>,
    params: &BracketParams,
) -> Result<IntersectionSet> {
    let chart = spec.chart()?;
    if x.chart()? != chart || y.chart()? != chart {
        return Err(Error::TypeMismatch);
    }
    if spec.t != 0.0 && transport.is_none() {
        return Err(Error::ConjugacyMissing);
    }
    let e = spec.eigenstructure()?;
    let transported = spec.t != 0.0;
    let to_linear = |p: PlanePoint| -> PlanePoint {
        match transport {
            Some(hm) if transported => hm.forward(p),
            _ => p,
        }
    };
    let lx = to_linear(x.lift()?);
    let ly = to_linear(y.lift()?);

    // Conservative parameter reach; candidates outside the true leaves are
    // discarded by the membership test, missing ones never recover.
    let reach = eps * 1.75 + if transported { 0.35 } else { 0.0 };

    // det [v_u | -v_s].
    let det = e.v_u.x * (-e.v_s.y) - (-e.v_s.x) * e.v_u.y;
    let mut lifts_of_y = Vec::new();
    for mx in -2..=2i64 {
        for my in -2..=2i64 {
            let m = PlanePoint::new(mx as f64, my as f64);
            lifts_of_y.push(ly + m);
            if chart == Chart::Sphere {
                lifts_of_y.push(-ly + m);
            }
        }
    }
    let mut candidates: Vec<Point> = Vec::new();
    for ly_img in lifts_of_y {
        let rhs = ly_img - lx;
        // Solve s v_u - r v_s = rhs.
        let s = (rhs.x * (-e.v_s.y) - (-e.v_s.x) * rhs.y) / det;
        let r = (e.v_u.x * rhs.y - e.v_u.y * rhs.x) / det;
        if s.abs() > reach || r.abs() > reach {
            continue;
        }
        let z_lin = lx + e.v_u * s;
        let z_lift = match transport {
            Some(hm) if transported => hm.invert(z_lin, 1e-11)?,
            _ => z_lin,
        };
        candidates.push(chart.project(z_lift));
    }

    let mut verified: Vec<Point> = Vec::new();
    for z in candidates {
        if !bracket_member(spec, &z, x, y, eps, params.n_verify)? {
            continue;
        }
        if verified
            .iter()
            .all(|w| w.dist(&z).map(|d| d > params.dedup_tol).unwrap_or(true))
        {
            verified.push(z);
        }
    }
    verified.sort_by(|a, b| {
        let la = a.lift().unwrap_or(PlanePoint::new(0.0, 0.0));
        let lb = b.lift().unwrap_or(PlanePoint::new(0.0, 0.0));
        la.x.total_cmp(&lb.x).then(la.y.total_cmp(&lb.y))
    });
    if verified.is_empty() {
        return Err(Error::EmptyIntersection(format!(
            "no verified bracket point: d(x,y) = {:.3e}, eps = {eps}",
            x.dist(y)?
        )));
    }
    Ok(IntersectionSet {
        points: verified,
        tolerance: params.dedup_tol,
    })
}

/// Largest probed delta (halving search from eps) such that the bracket
/// succeeds for all probe pairs at distance below delta.
pub fn calibrate(
    spec: &MapSpec,
    eps: f64,
    probe_grid: u32,
    transport: Option<&Semiconjugacy>,
) -> Result<f64> {
    let chart = spec.chart()?;
    let params = BracketParams {
        n_verify: 60,
        ..Default::default()
    };
    let mut probes = Vec::new();
    for i in 0..probe_grid {
        for j in 0..probe_grid {
            let px = (i as f64 + 0.5) / probe_grid as f64;
            let py = (j as f64 + 0.5) / probe_grid as f64;
            probes.push(match chart {
                Chart::Torus => Point::torus(px, py),
                Chart::Sphere => Point::sphere(px, py),
            });
        }
    }
    if chart == Chart::Sphere {
        for s in crate::spaces::singular_points() {
            let base = s.rep().lift();
            for k in 1..=3 {
                let off = eps / (4.0 * 2f64.powi(k));
                probes.push(Point::sphere(base.x + off, base.y + off * 0.6));
            }
        }
    }
    let dirs: Vec<Vec2> = (0..8)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / 8.0;
            Vec2::new(th.cos(), th.sin())
        })
        .collect();
    let mut delta = eps;
    for _ in 0..24 {
        let ok = probes.iter().all(|p| {
            dirs.iter().all(|d| {
                let lift = match p.lift() {
                    Ok(l) => l,
                    Err(_) => return false,
                };
                let q_lift = lift + *d * (0.95 * delta);
                let q = chart.project(q_lift);
                bracket(spec, p, &q, eps, transport, &params).is_ok()
            })
        });
        if ok {
            return Ok(delta);
        }
        delta *= 0.5;
    }
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::MapSpec;

    #[test]
    fn linear_torus_leaves_have_diameter_eps() {
        let spec = MapSpec::torus(0.0);
        for kind in [LeafKind::Stable, LeafKind::Unstable] {
            let l = leaf(&spec, &Point::torus(0.0, 0.0), kind, 0.1, 0.002, None).unwrap();
            assert!((l.continuum.diam() - 0.1).abs() < 1e-6, "{:?}", kind);
            assert!((l.radius - 0.05).abs() < 1e-6);
            let base_on = l
                .continuum
                .vertices
                .iter()
                .any(|v| Chart::Torus.lift_dist(*v, l.base.lift().unwrap()) < 1e-12);
            assert!(base_on, "base lies on the continuum");
        }
    }

    #[test]
    fn stable_leaf_contracts_forward() {
        let spec = MapSpec::torus(0.0);
        let e = spec.eigenstructure().unwrap();
        let l = leaf(&spec, &Point::torus(0.3, 0.7), LeafKind::Stable, 0.1, 0.002, None).unwrap();
        let mut cur = l.continuum.clone();
        for n in 1..=6i64 {
            cur = cur.iterate(&spec, 1).unwrap();
            let expect = 0.1 * e.mu_s.powi(n as i32);
            assert!((cur.diam() - expect).abs() < 1e-6, "n = {n}");
            assert!(cur.diam() <= 0.1);
        }
        assert!(verify_leaf(&l, &spec, 200).unwrap());
    }

    #[test]
    fn bracket_solves_the_two_by_two_example() {
        // x = (0,0), y = (0.01, 0): with v_u ~ (1, 0.618034) and
        // v_s ~ (-1, 1.618034), s ~ 0.007236 and z = s v_u.
        let spec = MapSpec::torus(0.0);
        let set = bracket(
            &spec,
            &Point::torus(0.0, 0.0),
            &Point::torus(0.01, 0.0),
            0.1,
            None,
            &BracketParams::default(),
        )
        .unwrap();
        assert_eq!(set.points.len(), 1);
        let z = set.points[0].lift().unwrap();
        assert!((z.x - 0.007236).abs() < 1e-6, "z = {z:?}");
        assert!((z.y - 0.004472).abs() < 1e-6);
        let e = spec.eigenstructure().unwrap();
        let on_u = (z.x * e.v_u.y - z.y * e.v_u.x).abs();
        let d = z - PlanePoint::new(0.01, 0.0);
        let on_s = (d.x * e.v_s.y - d.y * e.v_s.x).abs();
        assert!(on_u < 1e-9 && on_s < 1e-9);
    }

    #[test]
    fn bracket_of_a_point_with_itself_contains_it() {
        for spec in [MapSpec::torus(0.0), MapSpec::sphere(0.0)] {
            let p = match spec.chart().unwrap() {
                Chart::Torus => Point::torus(0.21, 0.34),
                Chart::Sphere => Point::sphere(0.21, 0.34),
            };
            let set = bracket(&spec, &p, &p, 0.1, None, &BracketParams::default()).unwrap();
            assert!(set.points.iter().any(|z| z.dist(&p).unwrap() < 1e-9));
        }
    }

    #[test]
    fn bracket_points_pass_the_membership_test_independently() {
        let spec = MapSpec::sphere(0.0);
        let x = Point::sphere(0.52, 0.515);
        let y = Point::sphere(0.515, 0.52);
        let set = bracket(&spec, &x, &y, 0.08, None, &BracketParams::default()).unwrap();
        let mu_u = spec.eigenstructure().unwrap().mu_u;
        for z in &set.points {
            let mut zf = z.clone();
            let mut yf = y.clone();
            for n in 0..=200u32 {
                let bound = 0.08 * (1.0 + 1e-9) + orbit_noise_allowance(mu_u, n);
                assert!(zf.dist(&yf).unwrap() <= bound);
                zf = spec.apply(&zf).unwrap();
                yf = spec.apply(&yf).unwrap();
            }
            let mut zb = z.clone();
            let mut xb = x.clone();
            for n in 0..=200u32 {
                let bound = 0.08 * (1.0 + 1e-9) + orbit_noise_allowance(mu_u, n);
                assert!(zb.dist(&xb).unwrap() <= bound);
                zb = spec.apply_inverse(&zb).unwrap();
                xb = spec.apply_inverse(&xb).unwrap();
            }
        }
        for i in 0..set.points.len() {
            for j in (i + 1)..set.points.len() {
                assert!(set.points[i].dist(&set.points[j]).unwrap() >= set.tolerance);
            }
        }
    }

    #[test]
    fn sphere_self_bracket_near_singularity_has_two_points() {
        let spec = MapSpec::sphere(0.0);
        let sigma = 0.01;
        let x = Point::sphere(0.5 + sigma, 0.5 + sigma * 0.618034);
        let set = bracket(&spec, &x, &x, 0.08, None, &BracketParams::default()).unwrap();
        assert_eq!(set.points.len(), 2, "{:?}", set.points);
        assert!(set.points.iter().any(|z| z.dist(&x).unwrap() < 1e-9));
        // Far from the singularities the self-bracket is trivial.
        let far = Point::sphere(0.23, 0.11);
        let set = bracket(&spec, &far, &far, 0.08, None, &BracketParams::default()).unwrap();
        assert_eq!(set.points.len(), 1);
    }

    #[test]
    fn torus_bracket_is_single_valued_on_probes() {
        let spec = MapSpec::torus(0.0);
        for i in 0..6 {
            for j in 0..6 {
                let x = Point::torus(i as f64 / 6.0 + 0.05, j as f64 / 6.0 + 0.08);
                let lift = x.lift().unwrap() + PlanePoint::new(0.008, -0.005);
                let y = Chart::Torus.project(lift);
                let set = bracket(&spec, &x, &y, 0.1, None, &BracketParams::default()).unwrap();
                assert_eq!(set.points.len(), 1);
            }
        }
    }

    #[test]
    fn transported_bracket_verifies_dynamically() {
        let spec = MapSpec::torus(1.0);
        let h = Semiconjugacy::solve(&spec, 30).unwrap();
        let x = Point::torus(0.31, 0.72);
        let lift = x.lift().unwrap() + PlanePoint::new(0.006, 0.004);
        let y = Chart::Torus.project(lift);
        let set = bracket(&spec, &x, &y, 0.1, Some(&h), &BracketParams::default()).unwrap();
        assert!(!set.points.is_empty());
        for z in &set.points {
            assert!(bracket_member(&spec, z, &x, &y, 0.1, 200).unwrap());
        }
        assert!(matches!(
            bracket(&spec, &x, &y, 0.1, None, &BracketParams::default()),
            Err(Error::ConjugacyMissing)
        ));
    }

    #[test]
    fn transported_leaf_respects_the_diameter_condition() {
        let spec = MapSpec::sphere(1.0);
        let h = Semiconjugacy::solve(&spec, 30).unwrap();
        let l = leaf(
            &spec,
            &Point::sphere(0.27, 0.64),
            LeafKind::Stable,
            0.1,
            0.004,
            Some(&h),
        )
        .unwrap();
        assert!(l.continuum.diam() <= 0.1 * (1.0 + 1e-6));
        assert!(verify_leaf(&l, &spec, 60).unwrap());
        assert!(l.radius > 0.01);
    }

    #[test]
    fn calibrate_finds_positive_delta_and_is_monotone() {
        let spec = MapSpec::torus(0.0);
        let d1 = calibrate(&spec, 0.1, 6, None).unwrap();
        assert!(d1 > 1e-4);
        let d2 = calibrate(&spec, 0.05, 6, None).unwrap();
        assert!(d2 <= d1 + 1e-12, "monotone: {d2} vs {d1}");
        assert_eq!(d1, calibrate(&spec, 0.1, 6, None).unwrap());
    }
}
