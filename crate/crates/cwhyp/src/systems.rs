//! Concrete dynamical systems: hyperbolic toral automorphisms, the sine
//! perturbation family on the standard matrix, their quotient-sphere
//! versions, inverses, lifts, and finite products.

use crate::error::{Error, Result};
use crate::spaces::{reduce_unit, Chart, PlanePoint, Point, SpherePoint, TorusPoint, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The reference matrix of the perturbed family.
pub const STANDARD_MATRIX: [[i64; 2]; 2] = [[2, 1], [1, 1]];

fn standard_matrix() -> [[i64; 2]; 2] {
    STANDARD_MATRIX
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Torus,
    Sphere,
    Product,
}

/// Description of one dynamical system: an integer linear part, a
/// perturbation parameter `t`, the space acted on, and factor specs when the
/// space is a product.
///
/// Only the standard matrix supports `t > 0`; other hyperbolic unimodular
/// matrices are supported at `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub space: SpaceKind,
    #[serde(default = "standard_matrix")]
    pub matrix: [[i64; 2]; 2],
    #[serde(default)]
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<MapSpec>>,
}

/// Eigenstructure of the linear part, unstable first.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EigenData {
    pub mu_u: f64,
    pub mu_s: f64,
    pub v_u: Vec2,
    pub v_s: Vec2,
}

/// Periodic odd sine correction of the family, evaluated with the argument
/// reduced to [-1/2, 1/2) so that both equivariance under integer translation
/// and oddness hold bit-exactly.
fn sine_term(t: f64, x: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let r = x - x.round();
    t / (2.0 * PI) * (2.0 * PI * r).sin()
}

impl MapSpec {
    pub fn torus(t: f64) -> Self {
        Self {
            space: SpaceKind::Torus,
            matrix: STANDARD_MATRIX,
            t,
            factors: None,
        }
    }

    pub fn sphere(t: f64) -> Self {
        Self {
            space: SpaceKind::Sphere,
            matrix: STANDARD_MATRIX,
            t,
            factors: None,
        }
    }

    pub fn linear(space: SpaceKind, matrix: [[i64; 2]; 2]) -> Self {
        Self {
            space,
            matrix,
            t: 0.0,
            factors: None,
        }
    }

    pub fn product(factors: Vec<MapSpec>) -> Self {
        Self {
            space: SpaceKind::Product,
            matrix: STANDARD_MATRIX,
            t: 0.0,
            factors: Some(factors),
        }
    }

    pub fn is_standard(&self) -> bool {
        self.matrix == STANDARD_MATRIX
    }

    pub fn det(&self) -> i64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }

    pub fn chart(&self) -> Result<Chart> {
        match self.space {
            SpaceKind::Torus => Ok(Chart::Torus),
            SpaceKind::Sphere => Ok(Chart::Sphere),
            SpaceKind::Product => Err(Error::TypeMismatch),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.space {
            SpaceKind::Product => {
                let factors = self
                    .factors
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("product spec needs factors".into()))?;
                if factors.len() < 2 {
                    return Err(Error::InvalidSpec("product needs at least 2 factors".into()));
                }
                for f in factors {
                    if f.space == SpaceKind::Product {
                        return Err(Error::InvalidSpec("nested product factors".into()));
                    }
                    f.validate()?;
                }
                Ok(())
            }
            _ => {
                if self.factors.is_some() {
                    return Err(Error::InvalidSpec("factors given for a non-product".into()));
                }
                if self.det().abs() != 1 {
                    return Err(Error::InvalidSpec(format!(
                        "det(A) = {} must be +-1",
                        self.det()
                    )));
                }
                self.eigenstructure()?;
                if !(0.0..=1.0).contains(&self.t) {
                    return Err(Error::InvalidSpec(format!("t = {} outside [0,1]", self.t)));
                }
                if self.t > 0.0 && !self.is_standard() {
                    return Err(Error::Unsupported(
                        "t > 0 is only defined for the standard matrix".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Lift of the map to the universal cover. Equivariant under integer
    /// translation and odd, both bit-exactly.
    pub fn apply_lift(&self, p: PlanePoint) -> Result<PlanePoint> {
        if self.space == SpaceKind::Product {
            return Err(Error::TypeMismatch);
        }
        if self.t != 0.0 && !self.is_standard() {
            return Err(Error::Unsupported(
                "t > 0 is only defined for the standard matrix".into(),
            ));
        }
        let m = self.matrix;
        let lin = PlanePoint::new(
            m[0][0] as f64 * p.x + m[0][1] as f64 * p.y,
            m[1][0] as f64 * p.x + m[1][1] as f64 * p.y,
        );
        let s = sine_term(self.t, p.x);
        Ok(PlanePoint::new(lin.x - s, lin.y - s))
    }

    /// Closed-form inverse of the lift. For the standard family the first
    /// minus the second image coordinate recovers x; general matrices at
    /// t = 0 invert through the integer adjugate.
    pub fn apply_inverse_lift(&self, p: PlanePoint) -> Result<PlanePoint> {
        if self.space == SpaceKind::Product {
            return Err(Error::TypeMismatch);
        }
        if self.is_standard() {
            let x = p.x - p.y;
            let y = p.y - x + sine_term(self.t, x);
            return Ok(PlanePoint::new(x, y));
        }
        if self.t != 0.0 {
            return Err(Error::Unsupported(
                "t > 0 is only defined for the standard matrix".into(),
            ));
        }
        let m = self.matrix;
        let det = self.det() as f64;
        Ok(PlanePoint::new(
            (m[1][1] as f64 * p.x - m[0][1] as f64 * p.y) / det,
            (-m[1][0] as f64 * p.x + m[0][0] as f64 * p.y) / det,
        ))
    }

    /// Apply the induced map on the spec's space.
    pub fn apply(&self, p: &Point) -> Result<Point> {
        match (self.space, p) {
            (SpaceKind::Torus, Point::Torus(tp)) => {
                let q = self.apply_lift(tp.lift())?;
                Ok(Point::Torus(TorusPoint::from_lift(q)))
            }
            (SpaceKind::Sphere, Point::Sphere(sp)) => {
                let q = self.apply_lift(sp.lift())?;
                Ok(Point::Sphere(SpherePoint::from_lift(q)))
            }
            (SpaceKind::Product, Point::Product(ps)) => {
                let factors = self
                    .factors
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("product spec needs factors".into()))?;
                if factors.len() != ps.len() {
                    return Err(Error::TypeMismatch);
                }
                let mut out = Vec::with_capacity(ps.len());
                for (f, q) in factors.iter().zip(ps) {
                    out.push(f.apply(q)?);
                }
                Ok(Point::Product(out))
            }
            _ => Err(Error::TypeMismatch),
        }
    }

    pub fn apply_inverse(&self, p: &Point) -> Result<Point> {
        match (self.space, p) {
            (SpaceKind::Torus, Point::Torus(tp)) => {
                let q = self.apply_inverse_lift(tp.lift())?;
                Ok(Point::Torus(TorusPoint::from_lift(q)))
            }
            (SpaceKind::Sphere, Point::Sphere(sp)) => {
                let q = self.apply_inverse_lift(sp.lift())?;
                Ok(Point::Sphere(SpherePoint::from_lift(q)))
            }
            (SpaceKind::Product, Point::Product(ps)) => {
                let factors = self
                    .factors
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("product spec needs factors".into()))?;
                if factors.len() != ps.len() {
                    return Err(Error::TypeMismatch);
                }
                let mut out = Vec::with_capacity(ps.len());
                for (f, q) in factors.iter().zip(ps) {
                    out.push(f.apply_inverse(q)?);
                }
                Ok(Point::Product(out))
            }
            _ => Err(Error::TypeMismatch),
        }
    }

    /// n-fold application; negative n iterates the inverse.
    pub fn apply_n(&self, p: &Point, n: i64) -> Result<Point> {
        let mut cur = p.clone();
        for _ in 0..n.abs() {
            cur = if n >= 0 {
                self.apply(&cur)?
            } else {
                self.apply_inverse(&cur)?
            };
        }
        Ok(cur)
    }

    /// Eigenvalues and unit eigenvectors of the linear part, unstable first.
    pub fn eigenstructure(&self) -> Result<EigenData> {
        if self.space == SpaceKind::Product {
            return Err(Error::TypeMismatch);
        }
        let m = self.matrix;
        let (a, b, c, d) = (
            m[0][0] as f64,
            m[0][1] as f64,
            m[1][0] as f64,
            m[1][1] as f64,
        );
        let tr = a + d;
        let det = self.det() as f64;
        let disc = tr * tr - 4.0 * det;
        if disc <= 0.0 {
            return Err(Error::InvalidSpec("complex eigenvalues: not hyperbolic".into()));
        }
        let s = disc.sqrt();
        let e1 = (tr + s) / 2.0;
        let e2 = (tr - s) / 2.0;
        let (mu_u, mu_s) = if e1.abs() >= e2.abs() { (e1, e2) } else { (e2, e1) };
        if (mu_u.abs() - 1.0).abs() < 1e-9 || (mu_s.abs() - 1.0).abs() < 1e-9 {
            return Err(Error::InvalidSpec("eigenvalue on the unit circle".into()));
        }
        let vector_for = |mu: f64| -> Vec2 {
            let v = if b != 0.0 {
                Vec2::new(b, mu - a)
            } else if c != 0.0 {
                Vec2::new(mu - d, c)
            } else if (a - mu).abs() < (d - mu).abs() {
                Vec2::new(1.0, 0.0)
            } else {
                Vec2::new(0.0, 1.0)
            };
            let v = v.normalized();
            // Fixed sign convention for reproducibility.
            if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
                -v
            } else {
                v
            }
        };
        Ok(EigenData {
            mu_u,
            mu_s,
            v_u: vector_for(mu_u),
            v_s: vector_for(mu_s),
        })
    }

    /// Analytic derivative of the lift at p.
    pub fn jacobian_at(&self, p: PlanePoint) -> Result<[[f64; 2]; 2]> {
        if self.space == SpaceKind::Product {
            return Err(Error::TypeMismatch);
        }
        let m = self.matrix;
        if self.t == 0.0 {
            return Ok([
                [m[0][0] as f64, m[0][1] as f64],
                [m[1][0] as f64, m[1][1] as f64],
            ]);
        }
        if !self.is_standard() {
            return Err(Error::Unsupported(
                "t > 0 is only defined for the standard matrix".into(),
            ));
        }
        let r = p.x - p.x.round();
        let c = self.t * (2.0 * PI * r).cos();
        Ok([[2.0 - c, 1.0], [1.0 - c, 1.0]])
    }

    /// Uniform Lipschitz bound of the lift and its inverse (spectral norm of
    /// the derivative, maximized over the space). The family has unimodular
    /// derivative, so the same value bounds both directions.
    pub fn lipschitz(&self) -> Result<f64> {
        match self.space {
            SpaceKind::Product => {
                let mut l: f64 = 0.0;
                for f in self.factors.as_ref().unwrap_or(&vec![]) {
                    l = l.max(f.lipschitz()?);
                }
                Ok(l)
            }
            _ => {
                if self.t == 0.0 {
                    let j = self.jacobian_at(PlanePoint::new(0.0, 0.0))?;
                    return Ok(spectral_norm(j).max(spectral_norm(invert2(j))));
                }
                let mut l: f64 = 0.0;
                let n = 4001;
                for i in 0..n {
                    let x = i as f64 / (n - 1) as f64;
                    let j = self.jacobian_at(PlanePoint::new(x, 0.0))?;
                    // det(Df_t) = 1, so the inverse norm equals the norm.
                    l = l.max(spectral_norm(j));
                }
                Ok(l)
            }
        }
    }
}

/// Largest singular value of a 2x2 matrix.
pub fn spectral_norm(m: [[f64; 2]; 2]) -> f64 {
    // Singular values from the eigenvalues of M^T M.
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let d = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
    ((tr + disc) / 2.0).max(0.0).sqrt()
}

pub fn invert2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

pub fn mat_apply(m: [[f64; 2]; 2], p: PlanePoint) -> PlanePoint {
    PlanePoint::new(m[0][0] * p.x + m[0][1] * p.y, m[1][0] * p.x + m[1][1] * p.y)
}

pub fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Integer matrix power of the spec's linear part.
pub fn matrix_power(m: [[i64; 2]; 2], k: u32) -> [[i64; 2]; 2] {
    let mut out = [[1, 0], [0, 1]];
    for _ in 0..k {
        let a = out;
        out = [
            [
                a[0][0] * m[0][0] + a[0][1] * m[1][0],
                a[0][0] * m[0][1] + a[0][1] * m[1][1],
            ],
            [
                a[1][0] * m[0][0] + a[1][1] * m[1][0],
                a[1][0] * m[0][1] + a[1][1] * m[1][1],
            ],
        ];
    }
    out
}

/// Reduce a lift into the fundamental square, preserving the point's class.
pub fn reduce_lift(p: PlanePoint) -> PlanePoint {
    PlanePoint::new(reduce_unit(p.x), reduce_unit(p.y))
}
