//! Points, charts, and metrics for the flat torus, the antipodal-quotient
//! sphere (pillowcase orbifold), and finite products of the two.
//!
//! The torus carries the flat Euclidean quotient metric of the unit square;
//! the sphere carries the metric induced by identifying antipodal classes.
//! Products use the maximum metric over factors. All values are immutable
//! and all operations are pure.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// A point of the universal cover R^2 (a lift). Also used for 2-vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", from = "[f64; 2]")]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

/// Alias used where a value is a direction or displacement, not a location.
pub type Vec2 = PlanePoint;

impl PlanePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn midpoint(self, o: Self) -> Self {
        Self::new(0.5 * (self.x + o.x), 0.5 * (self.y + o.y))
    }
}

impl From<PlanePoint> for [f64; 2] {
    fn from(p: PlanePoint) -> Self {
        [p.x, p.y]
    }
}

impl From<[f64; 2]> for PlanePoint {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl Add for PlanePoint {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for PlanePoint {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for PlanePoint {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl Mul<f64> for PlanePoint {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

/// Reduce a coordinate into [0, 1). Idempotent.
pub fn reduce_unit(v: f64) -> f64 {
    let r = v - v.floor();
    // v - floor(v) can round up to exactly 1.0 for tiny negative v.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of the unit flat torus, coordinates reduced into [0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", from = "[f64; 2]")]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: reduce_unit(x),
            y: reduce_unit(y),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// The canonical lift in [0,1)^2.
    pub fn lift(&self) -> PlanePoint {
        PlanePoint::new(self.x, self.y)
    }

    pub fn from_lift(p: PlanePoint) -> Self {
        Self::new(p.x, p.y)
    }
}

impl From<TorusPoint> for [f64; 2] {
    fn from(p: TorusPoint) -> Self {
        [p.x, p.y]
    }
}

impl From<[f64; 2]> for TorusPoint {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

/// Distance on the flat torus: minimum over the 9 lattice translates of the
/// Euclidean lift distance. Bounded by sqrt(2)/2.
pub fn torus_dist(a: TorusPoint, b: TorusPoint) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut best = f64::INFINITY;
    for i in -1..=1i32 {
        for j in -1..=1i32 {
            let d = (dx + i as f64).hypot(dy + j as f64);
            if d < best {
                best = d;
            }
        }
    }
    best
}

/// Same value as [`torus_dist`] computed from raw lift displacements
/// (per-axis wrap to nearest integer). Used in hot loops.
pub fn lift_torus_dist(a: PlanePoint, b: PlanePoint) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    (dx - dx.round()).hypot(dy - dy.round())
}

/// Quotient-sphere distance computed from lifts of the two classes.
pub fn lift_sphere_dist(a: PlanePoint, b: PlanePoint) -> f64 {
    let diff = lift_torus_dist(a, b);
    let sx = b.x + a.x;
    let sy = b.y + a.y;
    let sum = (sx - sx.round()).hypot(sy - sy.round());
    diff.min(sum)
}

pub fn antipode(p: TorusPoint) -> TorusPoint {
    TorusPoint::new(-p.x, -p.y)
}

/// A point of the quotient sphere: the class {p, -p} held by its canonical
/// representative (the lexicographically smaller of the two reduced lifts).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "SpherePointRepr")]
pub struct SpherePoint {
    rep: TorusPoint,
}

#[derive(Deserialize)]
struct SpherePointRepr {
    rep: TorusPoint,
}

impl From<SpherePointRepr> for SpherePoint {
    fn from(r: SpherePointRepr) -> Self {
        canonicalize(r.rep)
    }
}

impl SpherePoint {
    pub fn rep(&self) -> TorusPoint {
        self.rep
    }

    pub fn lift(&self) -> PlanePoint {
        self.rep.lift()
    }

    pub fn from_lift(p: PlanePoint) -> Self {
        canonicalize(TorusPoint::from_lift(p))
    }
}

fn lex_le(a: TorusPoint, b: TorusPoint) -> bool {
    if a.x != b.x {
        a.x < b.x
    } else {
        a.y <= b.y
    }
}

/// Deterministic representative of the class {p, -p}.
pub fn canonicalize(p: TorusPoint) -> SpherePoint {
    let q = antipode(p);
    SpherePoint {
        rep: if lex_le(p, q) { p } else { q },
    }
}

pub fn sphere_dist(a: SpherePoint, b: SpherePoint) -> f64 {
    torus_dist(a.rep, b.rep).min(torus_dist(a.rep, antipode(b.rep)))
}

/// The four classes fixed by the antipodal map; the singular points of the
/// quotient sphere's stable/unstable foliations.
pub fn singular_points() -> [SpherePoint; 4] {
    [
        canonicalize(TorusPoint::new(0.0, 0.0)),
        canonicalize(TorusPoint::new(0.5, 0.0)),
        canonicalize(TorusPoint::new(0.0, 0.5)),
        canonicalize(TorusPoint::new(0.5, 0.5)),
    ]
}

/// Chart of a quotient space; tells which metric projected lifts carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    Torus,
    Sphere,
}

impl Chart {
    /// Quotient distance between two lifts under this chart.
    pub fn lift_dist(self, a: PlanePoint, b: PlanePoint) -> f64 {
        match self {
            Chart::Torus => lift_torus_dist(a, b),
            Chart::Sphere => lift_sphere_dist(a, b),
        }
    }

    pub fn project(self, p: PlanePoint) -> Point {
        match self {
            Chart::Torus => Point::Torus(TorusPoint::from_lift(p)),
            Chart::Sphere => Point::Sphere(SpherePoint::from_lift(p)),
        }
    }
}

/// A point of any supported space. Torus points serialize as `[x, y]`,
/// sphere points as `{"rep": [x, y]}`, product points as arrays of factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Sphere(SpherePoint),
    Torus(TorusPoint),
    Product(Vec<Point>),
}

impl Point {
    pub fn torus(x: f64, y: f64) -> Self {
        Point::Torus(TorusPoint::new(x, y))
    }

    pub fn sphere(x: f64, y: f64) -> Self {
        Point::Sphere(canonicalize(TorusPoint::new(x, y)))
    }

    /// Canonical lift for non-product points.
    pub fn lift(&self) -> Result<PlanePoint> {
        match self {
            Point::Torus(p) => Ok(p.lift()),
            Point::Sphere(p) => Ok(p.lift()),
            Point::Product(_) => Err(Error::TypeMismatch),
        }
    }

    pub fn chart(&self) -> Result<Chart> {
        match self {
            Point::Torus(_) => Ok(Chart::Torus),
            Point::Sphere(_) => Ok(Chart::Sphere),
            Point::Product(_) => Err(Error::TypeMismatch),
        }
    }

    /// Distance between two points of the same space. Products use the
    /// maximum metric over factors.
    pub fn dist(&self, other: &Point) -> Result<f64> {
        match (self, other) {
            (Point::Torus(a), Point::Torus(b)) => Ok(torus_dist(*a, *b)),
            (Point::Sphere(a), Point::Sphere(b)) => Ok(sphere_dist(*a, *b)),
            (Point::Product(a), Point::Product(b)) if a.len() == b.len() => {
                let mut d = 0.0f64;
                for (pa, pb) in a.iter().zip(b) {
                    d = d.max(pa.dist(pb)?);
                }
                Ok(d)
            }
            _ => Err(Error::TypeMismatch),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: minimum over a 5x5 mesh of lattice translates and,
    /// for the sphere, both lifts of the second class.
    fn torus_dist_oracle(a: TorusPoint, b: TorusPoint) -> f64 {
        let mut best = f64::INFINITY;
        for i in -2..=2i32 {
            for j in -2..=2i32 {
                let d = ((b.x() - a.x() + i as f64).powi(2)
                    + (b.y() - a.y() + j as f64).powi(2))
                .sqrt();
                best = best.min(d);
            }
        }
        best
    }

    fn sphere_dist_oracle(a: SpherePoint, b: SpherePoint) -> f64 {
        torus_dist_oracle(a.rep(), b.rep()).min(torus_dist_oracle(a.rep(), antipode(b.rep())))
    }

    #[test]
    fn torus_dist_basic() {
        let d = torus_dist(TorusPoint::new(0.0, 0.0), TorusPoint::new(0.0, 0.0));
        assert_eq!(d, 0.0);
        let d = torus_dist(TorusPoint::new(0.9, 0.0), TorusPoint::new(0.1, 0.0));
        assert!((d - 0.2).abs() < 1e-15);
        let d = torus_dist(TorusPoint::new(0.25, 0.25), TorusPoint::new(0.75, 0.75));
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((d - torus_dist_oracle(TorusPoint::new(0.25, 0.25), TorusPoint::new(0.75, 0.75)))
            .abs()
            < 1e-15);
    }

    #[test]
    fn sphere_dist_basic() {
        let a = canonicalize(TorusPoint::new(0.1, 0.1));
        let b = canonicalize(TorusPoint::new(0.9, 0.9));
        // Same class: (0.9, 0.9) = -(0.1, 0.1) mod 1, up to decimal rounding.
        assert!(sphere_dist(a, b) < 1e-15);
        assert!(torus_dist(a.rep(), b.rep()) < 1e-15);

        let a = canonicalize(TorusPoint::new(0.0, 0.0));
        let b = canonicalize(TorusPoint::new(0.5, 0.5));
        assert!((sphere_dist(a, b) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((sphere_dist(a, b) - sphere_dist_oracle(a, b)).abs() < 1e-15);

        let a = canonicalize(TorusPoint::new(0.1, 0.0));
        let b = canonicalize(TorusPoint::new(0.2, 0.0));
        assert!((sphere_dist(a, b) - 0.1).abs() < 1e-12);
        assert!((sphere_dist(a, b) - sphere_dist_oracle(a, b)).abs() < 1e-15);
    }

    #[test]
    fn canonicalize_examples() {
        let s = canonicalize(TorusPoint::new(0.7, 0.2));
        assert!((s.rep().x() - 0.3).abs() < 1e-15 && (s.rep().y() - 0.8).abs() < 1e-15);
        let s = canonicalize(TorusPoint::new(0.5, 0.5));
        assert_eq!(s.rep(), TorusPoint::new(0.5, 0.5));
        let s = canonicalize(TorusPoint::new(0.0, 0.4));
        assert_eq!(s.rep(), TorusPoint::new(0.0, 0.4));
    }

    #[test]
    fn canonicalize_is_antipode_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = TorusPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
            // The reps agree up to the rounding of the antipode itself.
            assert!(sphere_dist(canonicalize(p), canonicalize(antipode(p))) < 1e-15);
        }
    }

    #[test]
    fn four_singular_points() {
        let s = singular_points();
        assert_eq!(s.len(), 4);
        for p in &s {
            assert_eq!(canonicalize(antipode(p.rep())), *p);
        }
        // All distinct.
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(sphere_dist(s[i], s[j]) > 0.4);
            }
        }
    }

    #[test]
    fn metric_properties_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = TorusPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
            let b = TorusPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
            let c = TorusPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
            let ab = torus_dist(a, b);
            let ba = torus_dist(b, a);
            assert_eq!(ab, ba);
            assert!(ab <= torus_dist(a, c) + torus_dist(c, b) + 1e-12);
            assert!(ab <= 0.5f64.sqrt() + 1e-15);

            let (sa, sb, sc) = (canonicalize(a), canonicalize(b), canonicalize(c));
            let sab = sphere_dist(sa, sb);
            assert_eq!(sab, sphere_dist(sb, sa));
            assert!(sab <= sphere_dist(sa, sc) + sphere_dist(sc, sb) + 1e-12);
            if sab == 0.0 {
                assert_eq!(sa.rep(), sb.rep());
            }
        }
    }

    #[test]
    fn projection_is_two_to_one_off_singularities() {
        let n = 100;
        let mut non_singular = 0;
        for i in 0..n {
            for j in 0..n {
                let p = TorusPoint::new(i as f64 / n as f64, j as f64 / n as f64);
                let q = antipode(p);
                assert!(sphere_dist(canonicalize(p), canonicalize(q)) < 1e-15);
                if torus_dist(p, q) > 1e-12 {
                    non_singular += 1;
                }
            }
        }
        assert_eq!(non_singular, n * n - 4);
    }

    #[test]
    fn lift_dists_match_definitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let a = PlanePoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let b = PlanePoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let ta = TorusPoint::from_lift(a);
            let tb = TorusPoint::from_lift(b);
            assert!((lift_torus_dist(a, b) - torus_dist(ta, tb)).abs() < 1e-12);
            let sa = SpherePoint::from_lift(a);
            let sb = SpherePoint::from_lift(b);
            assert!((lift_sphere_dist(a, b) - sphere_dist(sa, sb)).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_formats() {
        let t = Point::torus(0.25, 0.75);
        assert_eq!(serde_json::to_string(&t).unwrap(), "[0.25,0.75]");
        let s = Point::sphere(0.7, 0.2);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.starts_with(r#"{"rep":["#), "{json}");
        assert!(s.dist(&Point::sphere(0.3, 0.8)).unwrap() < 1e-15);
        let p = Point::Product(vec![t.clone(), s.clone()]);
        let json = serde_json::to_string(&p).unwrap();
        let back: Point = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let back: Point = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(back, t);
        // Non-canonical sphere rep canonicalizes on input.
        let back: Point = serde_json::from_str(r#"{"rep":[0.7,0.2]}"#).unwrap();
        assert!(back.dist(&s).unwrap() < 1e-15);
    }

    proptest! {
        #[test]
        fn reduce_unit_idempotent(v in -1e6f64..1e6) {
            let r = reduce_unit(v);
            prop_assert!((0.0..1.0).contains(&r));
            prop_assert_eq!(reduce_unit(r), r);
        }

        #[test]
        fn torus_dist_symmetric_and_triangle(
            ax in 0.0f64..1.0, ay in 0.0f64..1.0,
            bx in 0.0f64..1.0, by in 0.0f64..1.0,
            cx in 0.0f64..1.0, cy in 0.0f64..1.0,
        ) {
            let a = TorusPoint::new(ax, ay);
            let b = TorusPoint::new(bx, by);
            let c = TorusPoint::new(cx, cy);
            prop_assert_eq!(torus_dist(a, b), torus_dist(b, a));
            prop_assert!(torus_dist(a, b) <= torus_dist(a, c) + torus_dist(c, b) + 1e-12);
        }
    }
}
