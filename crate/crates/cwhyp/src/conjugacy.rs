//! Numerical solution of the fixed-point equation A o h = h o f_t with
//! h = id + q, q odd and Z^2-periodic, via the geometric operator series on
//! the stable/unstable splitting; residual verification, sphere descent
//! checks, and inversion.
//!
//! The conjugation operator is T(q) = A^{-1} o q o f_t with inverse
//! T^{-1}(q) = A o q o f_t^{-1}. On corrections valued in the unstable line
//! T contracts by mu_s per application, and likewise T^{-1} on the stable
//! line, so the correction solving (I - T) q = c splits into two convergent
//! one-sided sums. The solver evaluates those sums pointwise along exact
//! reduced orbits; uniform grids with bilinear or sine interpolation serve
//! as the storage and exchange format.

use crate::error::{Error, Result};
use crate::spaces::{reduce_unit, PlanePoint, Vec2};
use crate::systems::{invert2, mat_apply, EigenData, MapSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

/// Anything that can evaluate the periodic odd correction q at a lift point.
pub trait Correction {
    fn correction(&self, p: PlanePoint) -> PlanePoint;

    /// h(p) = p + q(p) in lift coordinates.
    fn forward(&self, p: PlanePoint) -> PlanePoint {
        p + self.correction(p)
    }
}

/// The inhomogeneous term of the fixed-point equation:
/// c(x) = A^{-1}(f_t(x)) - x. Odd and periodic by the oddness and
/// equivariance of the family's lift.
pub fn rhs_at(spec: &MapSpec, p: PlanePoint) -> Result<PlanePoint> {
    let x = crate::systems::reduce_lift(p);
    let m = spec.matrix;
    let det = spec.det() as f64;
    let a_inv = [
        [m[1][1] as f64 / det, -m[0][1] as f64 / det],
        [-m[1][0] as f64 / det, m[0][0] as f64 / det],
    ];
    let fx = spec.apply_lift(x)?;
    Ok(mat_apply(a_inv, fx) - x)
}

/// The rhs sampled on a grid_n x grid_n lattice.
pub fn rhs_field(spec: &MapSpec, grid_n: usize, interp: Interp) -> Result<OddPeriodicField> {
    OddPeriodicField::from_fn(grid_n, interp, |p| rhs_at(spec, p))
}

/// Truncated-series solution of the fixed-point equation, evaluated
/// pointwise along exact orbits of the lift.
#[derive(Clone, Debug)]
pub struct Semiconjugacy {
    spec: MapSpec,
    terms: u32,
    eigen: EigenData,
    lip_estimate: f64,
    rhs_sup: f64,
}

impl Semiconjugacy {
    /// Solve with K series terms. The spec must belong to the standard
    /// family (any t in [0,1]); t = 0 yields the identity correction.
    pub fn solve(spec: &MapSpec, terms: u32) -> Result<Self> {
        if terms < 1 {
            return Err(Error::InvalidArgument("need at least one series term".into()));
        }
        spec.validate()?;
        if !spec.is_standard() {
            return Err(Error::Unsupported(
                "the correction series is defined for the standard family".into(),
            ));
        }
        let eigen = spec.eigenstructure()?;
        let mut solver = Self {
            spec: spec.clone(),
            terms,
            eigen,
            lip_estimate: 0.0,
            rhs_sup: 0.0,
        };
        // Sup of |c| and a finite-difference Lipschitz estimate of q on a
        // coarse grid; the estimate gates the inversion strategy.
        let n = 64usize;
        let h = 1e-5;
        let stats: Vec<(f64, f64)> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let p = PlanePoint::new((k % n) as f64 / n as f64, (k / n) as f64 / n as f64);
                let c = rhs_at(&solver.spec, p).unwrap_or(PlanePoint::new(0.0, 0.0));
                let q0 = solver.correction(p);
                let qx = solver.correction(p + PlanePoint::new(h, 0.0));
                let qy = solver.correction(p + PlanePoint::new(0.0, h));
                let lip = ((qx - q0).norm() / h).max((qy - q0).norm() / h);
                (c.norm(), lip)
            })
            .collect();
        for (c, l) in stats {
            solver.rhs_sup = solver.rhs_sup.max(c);
            solver.lip_estimate = solver.lip_estimate.max(l);
        }
        Ok(solver)
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn terms(&self) -> u32 {
        self.terms
    }

    pub fn lipschitz_estimate(&self) -> f64 {
        self.lip_estimate
    }

    /// Series tail bound: mu_s^K |c|_inf / (1 - mu_s).
    pub fn truncation_bound(&self) -> f64 {
        self.eigen.mu_s.powi(self.terms as i32) * self.rhs_sup / (1.0 - self.eigen.mu_s)
    }

    /// Inverse point of h = id + q.
    ///
    /// When the correction is a contraction the fixed-point iteration
    /// x <- y - q(x) suffices. Otherwise (the correction's slopes exceed 1
    /// already for moderate K) pointwise root finding on h is hopeless —
    /// h carries curvature of order mu_u^K — so the inverse is computed
    /// from what it means dynamically: h^{-1}(y) is the unique point whose
    /// forward/backward orbit tracks the linear orbit of y. That orbit is
    /// solved as a damped-Newton boundary-value problem over a window, with
    /// the stable discrepancy anchored at the left end and the unstable
    /// discrepancy at the right end. Window truncation contributes
    /// O(mu_s^window), far below tol.
    pub fn invert(&self, y: PlanePoint, tol: f64) -> Result<PlanePoint> {
        const MAX_ITERS: usize = 200;
        if self.lip_estimate < 0.9 {
            let mut x = y;
            for _ in 0..MAX_ITERS {
                let next = y - self.correction(x);
                let moved = (next - x).norm();
                x = next;
                if moved < tol * 0.25 && (self.forward(x) - y).norm() < tol {
                    return Ok(x);
                }
            }
            return Err(Error::NonConvergence(MAX_ITERS));
        }
        let x = self.invert_by_orbit(y, tol)?;
        if (self.forward(x) - y).norm() < tol {
            Ok(x)
        } else {
            Err(Error::NonConvergence(MAX_ITERS))
        }
    }

    fn invert_by_orbit(&self, y: PlanePoint, tol: f64) -> Result<PlanePoint> {
        // Window length: truncation error ~ |q|_inf mu_s^half.
        let mu_u = self.eigen.mu_u;
        let half = ((0.5_f64 / tol.max(1e-14)).ln() / mu_u.ln()).ceil() as usize + 4;
        let half = half.min(self.terms as usize + 10).max(8);
        let len = 2 * half + 1;

        // Linear orbit of y, reduced each step, with the wrapped step
        // defects e_k = f_t(w_k) - w_{k+1} (nearest deck image).
        let a = [
            [self.spec.matrix[0][0] as f64, self.spec.matrix[0][1] as f64],
            [self.spec.matrix[1][0] as f64, self.spec.matrix[1][1] as f64],
        ];
        let a_inv = invert2(a);
        let mut w = vec![PlanePoint::new(0.0, 0.0); len];
        w[half] = crate::systems::reduce_lift(y);
        for k in half..len - 1 {
            w[k + 1] = crate::systems::reduce_lift(mat_apply(a, w[k]));
        }
        for k in (0..half).rev() {
            w[k] = crate::systems::reduce_lift(mat_apply(a_inv, w[k + 1]));
        }
        let wrap = |p: PlanePoint| PlanePoint::new(p.x - p.x.round(), p.y - p.y.round());
        let mut defect = Vec::with_capacity(len - 1);
        for k in 0..len - 1 {
            let img = self.spec.apply_lift(w[k])?;
            defect.push(wrap(img - w[k + 1]));
        }

        // Damped Newton on G(d) = 0 with
        //   G_k = f_t(w_k + d_k) - f_t(w_k) + e_k - d_{k+1},  k = 0..len-2,
        //   v_s . d_0 = 0,   v_u . d_{len-1} = 0.
        let dim = 2 * len;
        let mut d = vec![PlanePoint::new(0.0, 0.0); len];
        let residual_of = |d: &[PlanePoint]| -> Result<(Vec<f64>, f64)> {
            let mut r = vec![0.0f64; dim];
            let mut sup = 0.0f64;
            for k in 0..len - 1 {
                let img = self.spec.apply_lift(w[k] + d[k])?;
                let base = self.spec.apply_lift(w[k])?;
                let g = img - base + defect[k] - d[k + 1];
                r[2 * k] = g.x;
                r[2 * k + 1] = g.y;
                sup = sup.max(g.norm());
            }
            let bl = self.eigen.v_s.dot(d[0]);
            let br = self.eigen.v_u.dot(d[len - 1]);
            r[dim - 2] = bl;
            r[dim - 1] = br;
            sup = sup.max(bl.abs()).max(br.abs());
            Ok((r, sup))
        };
        let (mut r, mut sup) = residual_of(&d)?;
        for _ in 0..60 {
            if sup < tol * 1e-2 {
                break;
            }
            // Assemble the banded Jacobian densely; the system is small.
            let mut mat = vec![0.0f64; dim * dim];
            for k in 0..len - 1 {
                let j = self.spec.jacobian_at(w[k] + d[k])?;
                for (row, jrow) in j.iter().enumerate() {
                    mat[(2 * k + row) * dim + 2 * k] = jrow[0];
                    mat[(2 * k + row) * dim + 2 * k + 1] = jrow[1];
                    mat[(2 * k + row) * dim + 2 * (k + 1) + row] = -1.0;
                }
            }
            mat[(dim - 2) * dim] = self.eigen.v_s.x;
            mat[(dim - 2) * dim + 1] = self.eigen.v_s.y;
            mat[(dim - 1) * dim + dim - 2] = self.eigen.v_u.x;
            mat[(dim - 1) * dim + dim - 1] = self.eigen.v_u.y;
            let step = solve_dense(&mut mat, &r, dim)
                .ok_or(Error::NonConvergence(60))?;
            let mut damp = 1.0f64;
            let mut improved = false;
            for _ in 0..20 {
                let cand: Vec<PlanePoint> = d
                    .iter()
                    .enumerate()
                    .map(|(k, v)| *v - PlanePoint::new(step[2 * k], step[2 * k + 1]) * damp)
                    .collect();
                let (rc, sc) = residual_of(&cand)?;
                if sc < sup * (1.0 - 0.25 * damp) {
                    d = cand;
                    r = rc;
                    sup = sc;
                    improved = true;
                    break;
                }
                damp *= 0.5;
            }
            if !improved {
                return Err(Error::NonConvergence(60));
            }
        }
        Ok(y + d[half])
    }

    /// Sample the correction on a grid.
    pub fn sample_grid(&self, grid_n: usize, interp: Interp) -> Result<OddPeriodicField> {
        OddPeriodicField::from_fn(grid_n, interp, |p| Ok(self.correction(p)))
    }
}

impl Correction for Semiconjugacy {
    /// q(x) = sum_{n=0}^{K-1} mu_s^n c_u(f^n x) v_u
    ///      - sum_{n=1}^{K}   mu_s^n c_s(f^{-n} x) v_s,
    /// with c_u, c_s the components of c along the orthonormal eigenbasis
    /// and all orbit points reduced into the unit square (c is periodic, so
    /// reduction keeps the evaluation exact while avoiding lift blow-up).
    fn correction(&self, p: PlanePoint) -> PlanePoint {
        let e = &self.eigen;
        let mu_s = e.mu_s;
        let mut x = crate::systems::reduce_lift(p);
        let mut acc_u = 0.0f64;
        let mut w = 1.0f64;
        for _ in 0..self.terms {
            let c = rhs_at(&self.spec, x).expect("standard family rhs");
            acc_u += w * c.dot(e.v_u);
            x = crate::systems::reduce_lift(self.spec.apply_lift(x).expect("standard family"));
            w *= mu_s;
        }
        let mut y = crate::systems::reduce_lift(p);
        let mut acc_s = 0.0f64;
        let mut w = mu_s;
        for _ in 0..self.terms {
            y = crate::systems::reduce_lift(
                self.spec.apply_inverse_lift(y).expect("standard family"),
            );
            let c = rhs_at(&self.spec, y).expect("standard family rhs");
            acc_s -= w * c.dot(e.v_s);
            w *= mu_s;
        }
        e.v_u * acc_u + e.v_s * acc_s
    }
}

/// Gaussian elimination with partial pivoting; returns None on a singular
/// pivot. `mat` is row-major n x n and is consumed.
fn solve_dense(mat: &mut [f64], rhs: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut b = rhs.to_vec();
    for col in 0..n {
        let mut piv = col;
        let mut best = mat[col * n + col].abs();
        for row in (col + 1)..n {
            let v = mat[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                mat.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = mat[col * n + col];
        for row in (col + 1)..n {
            let f = mat[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                mat[row * n + j] -= f * mat[col * n + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= mat[row * n + j] * x[j];
        }
        x[row] = acc / mat[row * n + row];
    }
    Some(x)
}

/// Max residual |A h(x) - h(f_t(x))| over an offset probe grid, computed in
/// lift coordinates with both sides reduced consistently.
pub fn residual<Q: Correction + Sync>(spec: &MapSpec, q: &Q, probe_n: usize) -> Result<f64> {
    let m = spec.matrix;
    let rows: Vec<f64> = (0..probe_n)
        .into_par_iter()
        .map(|iy| {
            let mut worst = 0.0f64;
            for ix in 0..probe_n {
                let p = PlanePoint::new(
                    (ix as f64 + 0.5) / probe_n as f64,
                    (iy as f64 + 0.5) / probe_n as f64,
                );
                let h_p = p + q.correction(p);
                let fp = spec.apply_lift(p).expect("lift");
                let h_fp = fp + q.correction(fp);
                let lhs = PlanePoint::new(
                    m[0][0] as f64 * h_p.x + m[0][1] as f64 * h_p.y,
                    m[1][0] as f64 * h_p.x + m[1][1] as f64 * h_p.y,
                );
                worst = worst.max((lhs - h_fp).norm());
            }
            worst
        })
        .collect();
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// Descent diagnostics: oddness of h (hence well-definedness on antipodal
/// classes) and preservation of the four singular classes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DescentReport {
    pub oddness_residual: f64,
    pub singular_classes_preserved: bool,
}

pub fn check_descent<Q: Correction + Sync>(q: &Q, probe_n: usize) -> DescentReport {
    let rows: Vec<f64> = (0..probe_n)
        .into_par_iter()
        .map(|iy| {
            let mut worst = 0.0f64;
            for ix in 0..probe_n {
                let p = PlanePoint::new(
                    (ix as f64 + 0.37) / probe_n as f64,
                    (iy as f64 + 0.61) / probe_n as f64,
                );
                let r = (q.correction(-p) + q.correction(p)).norm();
                worst = worst.max(r);
            }
            worst
        })
        .collect();
    let oddness_residual = rows.into_iter().fold(0.0, f64::max);
    let mut preserved = true;
    for s in crate::spaces::singular_points() {
        let image = q.forward(s.lift());
        let class = crate::spaces::SpherePoint::from_lift(image);
        let hits_singular = crate::spaces::singular_points()
            .iter()
            .any(|t| crate::spaces::sphere_dist(class, *t) < 1e-9);
        preserved &= hits_singular;
    }
    DescentReport {
        oddness_residual,
        singular_classes_preserved: preserved,
    }
}

/// Interpolation mode of a grid field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Bilinear,
    Fourier,
}

/// A Z^2-periodic odd vector field sampled on a uniform grid over [0,1)^2.
/// Periodicity is structural (indices wrap); oddness is a checked invariant:
/// values[iy][ix] = -values[(-iy) mod n][(-ix) mod n].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OddPeriodicField {
    pub grid_n: usize,
    /// Row-major samples, index iy * grid_n + ix, value (vx, vy).
    pub values: Vec<[f64; 2]>,
    pub interp: Interp,
    #[serde(skip)]
    sine: Option<SineTable>,
}

/// Sine-series coefficients of both components (enforces oddness exactly).
#[derive(Clone, Debug)]
struct SineTable {
    n: usize,
    bx: Vec<f64>,
    by: Vec<f64>,
}

impl OddPeriodicField {
    pub fn from_fn<F>(grid_n: usize, interp: Interp, f: F) -> Result<Self>
    where
        F: Fn(PlanePoint) -> Result<PlanePoint> + Sync,
    {
        if grid_n < 2 {
            return Err(Error::InvalidArgument("grid_n must be >= 2".into()));
        }
        let rows: Vec<Result<Vec<[f64; 2]>>> = (0..grid_n)
            .into_par_iter()
            .map(|iy| {
                let mut row = Vec::with_capacity(grid_n);
                for ix in 0..grid_n {
                    let p = PlanePoint::new(ix as f64 / grid_n as f64, iy as f64 / grid_n as f64);
                    let v = f(p)?;
                    row.push([v.x, v.y]);
                }
                Ok(row)
            })
            .collect();
        let mut values = Vec::with_capacity(grid_n * grid_n);
        for r in rows {
            values.extend(r?);
        }
        Self::from_values(grid_n, values, interp)
    }

    pub fn from_values(grid_n: usize, values: Vec<[f64; 2]>, interp: Interp) -> Result<Self> {
        if values.len() != grid_n * grid_n {
            return Err(Error::InvalidArgument("value count != grid_n^2".into()));
        }
        let mut field = Self {
            grid_n,
            values,
            interp,
            sine: None,
        };
        if interp == Interp::Fourier {
            field.build_sine_table();
        }
        Ok(field)
    }

    fn at(&self, ix: usize, iy: usize) -> Vec2 {
        let v = self.values[(iy % self.grid_n) * self.grid_n + (ix % self.grid_n)];
        Vec2::new(v[0], v[1])
    }

    /// Max oddness defect over the grid.
    pub fn oddness_residual(&self) -> f64 {
        let n = self.grid_n;
        let mut worst = 0.0f64;
        for iy in 0..n {
            for ix in 0..n {
                let a = self.at(ix, iy);
                let b = self.at((n - ix) % n, (n - iy) % n);
                worst = worst.max((a + b).norm());
            }
        }
        worst
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    /// Interpolated evaluation at a lift point (reduced into the grid).
    pub fn eval(&self, p: PlanePoint) -> Vec2 {
        match self.interp {
            Interp::Bilinear => self.eval_bilinear(p),
            Interp::Fourier => self.eval_sine(p),
        }
    }

    fn eval_bilinear(&self, p: PlanePoint) -> Vec2 {
        let n = self.grid_n as f64;
        let x = reduce_unit(p.x) * n;
        let y = reduce_unit(p.y) * n;
        let ix = (x.floor() as usize).min(self.grid_n - 1);
        let iy = (y.floor() as usize).min(self.grid_n - 1);
        let fx = x - ix as f64;
        let fy = y - iy as f64;
        let v00 = self.at(ix, iy);
        let v10 = self.at(ix + 1, iy);
        let v01 = self.at(ix, iy + 1);
        let v11 = self.at(ix + 1, iy + 1);
        v00 * ((1.0 - fx) * (1.0 - fy))
            + v10 * (fx * (1.0 - fy))
            + v01 * ((1.0 - fx) * fy)
            + v11 * (fx * fy)
    }

    fn build_sine_table(&mut self) {
        let n = self.grid_n;
        // Separable DFT, O(n^3): rows then columns, per component.
        let dft_1d = |data: &[(f64, f64)], out: &mut Vec<(f64, f64)>| {
            let len = data.len();
            out.clear();
            for k in 0..len {
                let mut re = 0.0;
                let mut im = 0.0;
                for (j, (dr, di)) in data.iter().enumerate() {
                    let th = -TAU * (k as f64) * (j as f64) / len as f64;
                    let (s, c) = th.sin_cos();
                    re += dr * c - di * s;
                    im += dr * s + di * c;
                }
                out.push((re / len as f64, im / len as f64));
            }
        };
        let mut bx = vec![0.0; n * n];
        let mut by = vec![0.0; n * n];
        for (comp, b) in [(0usize, &mut bx), (1usize, &mut by)] {
            let mut inter = vec![(0.0, 0.0); n * n];
            let mut buf = Vec::with_capacity(n);
            for iy in 0..n {
                let row: Vec<(f64, f64)> = (0..n)
                    .map(|ix| (self.values[iy * n + ix][comp], 0.0))
                    .collect();
                dft_1d(&row, &mut buf);
                inter[iy * n..(iy + 1) * n].copy_from_slice(&buf);
            }
            for kx in 0..n {
                let col: Vec<(f64, f64)> = (0..n).map(|iy| inter[iy * n + kx]).collect();
                dft_1d(&col, &mut buf);
                for ky in 0..n {
                    // Odd real field: coefficients purely imaginary; dropping
                    // the real part projects onto the odd part exactly.
                    b[ky * n + kx] = buf[ky].1;
                }
            }
        }
        self.sine = Some(SineTable { n, bx, by });
    }

    fn eval_sine(&self, p: PlanePoint) -> Vec2 {
        let table = match &self.sine {
            Some(t) => t,
            None => return self.eval_bilinear(p),
        };
        let n = table.n as i64;
        let x = reduce_unit(p.x);
        let y = reduce_unit(p.y);
        let mut vx = 0.0f64;
        let mut vy = 0.0f64;
        for ky_idx in 0..table.n {
            let ky = if (ky_idx as i64) < n / 2 {
                ky_idx as i64
            } else {
                ky_idx as i64 - n
            };
            for kx_idx in 0..table.n {
                let bx = table.bx[ky_idx * table.n + kx_idx];
                let by = table.by[ky_idx * table.n + kx_idx];
                if bx == 0.0 && by == 0.0 {
                    continue;
                }
                let kx = if (kx_idx as i64) < n / 2 {
                    kx_idx as i64
                } else {
                    kx_idx as i64 - n
                };
                // Re[i b e^{i th}] = -b sin(th).
                let th = TAU * (kx as f64 * x + ky as f64 * y);
                let s = th.sin();
                vx -= bx * s;
                vy -= by * s;
            }
        }
        Vec2::new(vx, vy)
    }
}

impl Correction for OddPeriodicField {
    fn correction(&self, p: PlanePoint) -> PlanePoint {
        self.eval(p)
    }
}

/// One application of the conjugation operator on a grid field:
/// T(q)(x) = A^{-1} q(f_t(x)), or its inverse A q(f_t^{-1}(x)).
pub fn apply_operator(
    field: &OddPeriodicField,
    spec: &MapSpec,
    inverse: bool,
) -> Result<OddPeriodicField> {
    let m = spec.matrix;
    let det = spec.det() as f64;
    let a_inv = [
        [m[1][1] as f64 / det, -m[0][1] as f64 / det],
        [-m[1][0] as f64 / det, m[0][0] as f64 / det],
    ];
    let a = [
        [m[0][0] as f64, m[0][1] as f64],
        [m[1][0] as f64, m[1][1] as f64],
    ];
    OddPeriodicField::from_fn(field.grid_n, field.interp, |p| {
        if inverse {
            let y = spec.apply_inverse_lift(p)?;
            Ok(mat_apply(a, field.eval(y)))
        } else {
            let y = spec.apply_lift(p)?;
            Ok(mat_apply(a_inv, field.eval(y)))
        }
    })
}

/// Scalar components of a field along the stable/unstable eigenbasis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitField {
    pub grid_n: usize,
    pub qu: Vec<f64>,
    pub qs: Vec<f64>,
}

pub fn split(field: &OddPeriodicField, eigen: &EigenData) -> SplitField {
    let mut qu = Vec::with_capacity(field.values.len());
    let mut qs = Vec::with_capacity(field.values.len());
    for v in &field.values {
        let p = Vec2::new(v[0], v[1]);
        qu.push(p.dot(eigen.v_u));
        qs.push(p.dot(eigen.v_s));
    }
    SplitField {
        grid_n: field.grid_n,
        qu,
        qs,
    }
}

pub fn reassemble(sf: &SplitField, eigen: &EigenData, interp: Interp) -> Result<OddPeriodicField> {
    let values: Vec<[f64; 2]> = sf
        .qu
        .iter()
        .zip(&sf.qs)
        .map(|(u, s)| {
            let v = eigen.v_u * *u + eigen.v_s * *s;
            [v.x, v.y]
        })
        .collect();
    OddPeriodicField::from_values(sf.grid_n, values, interp)
}

/// JSON header of the binary field format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldHeader {
    pub grid_n: usize,
    pub t: f64,
    #[serde(rename = "K")]
    pub k_terms: u32,
    pub residual: f64,
}

/// Write a field as a JSON header line followed by a flat little-endian
/// block of f64 pairs, row-major.
pub fn write_field(path: &Path, field: &OddPeriodicField, header: &FieldHeader) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        serde_json::to_writer(&mut w, header)?;
        w.write_all(b"\n")?;
        for v in &field.values {
            w.write_all(&v[0].to_le_bytes())?;
            w.write_all(&v[1].to_le_bytes())?;
        }
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(OddPeriodicField, FieldHeader)> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let newline = raw
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::InvalidArgument("missing field header line".into()))?;
    let header: FieldHeader = serde_json::from_slice(&raw[..newline])?;
    let body = &raw[newline + 1..];
    let expect = header.grid_n * header.grid_n * 16;
    if body.len() != expect {
        return Err(Error::InvalidArgument(format!(
            "field body has {} bytes, expected {expect}",
            body.len()
        )));
    }
    let mut values = Vec::with_capacity(header.grid_n * header.grid_n);
    for chunk in body.chunks_exact(16) {
        let x = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let y = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        values.push([x, y]);
    }
    let field = OddPeriodicField::from_values(header.grid_n, values, Interp::Bilinear)?;
    Ok((field, header))
}

/// Ratios |T^n(c_u v_u)|_inf / |c_u v_u|_inf for n = 1..=n_max, measured by
/// direct evaluation along exact orbits over a probe grid.
pub fn contraction_ratios(spec: &MapSpec, n_max: u32, probe_n: usize) -> Result<Vec<f64>> {
    let eigen = spec.eigenstructure()?;
    let mut probes = Vec::with_capacity(probe_n * probe_n);
    for iy in 0..probe_n {
        for ix in 0..probe_n {
            probes.push(PlanePoint::new(
                (ix as f64 + 0.5) / probe_n as f64,
                (iy as f64 + 0.5) / probe_n as f64,
            ));
        }
    }
    let cu = |p: PlanePoint| -> Result<f64> { Ok(rhs_at(spec, p)?.dot(eigen.v_u)) };
    let mut sup0 = 0.0f64;
    for p in &probes {
        sup0 = sup0.max(cu(*p)?.abs());
    }
    let mut ratios = Vec::with_capacity(n_max as usize);
    let mut weight = 1.0;
    for _ in 0..n_max {
        for p in probes.iter_mut() {
            *p = crate::systems::reduce_lift(spec.apply_lift(*p)?);
        }
        weight *= eigen.mu_s;
        let mut sup = 0.0f64;
        for p in &probes {
            sup = sup.max(cu(*p)?.abs());
        }
        ratios.push(weight * sup / sup0);
    }
    Ok(ratios)
}
