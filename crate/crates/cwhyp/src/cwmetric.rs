//! The expansion-time metric machinery on marked continua: the expansion
//! time N(C), the weight rho(C) = lambda^N(C), the empirical bound m on
//! expansion times of large continua, the chain-infimum D approximated over
//! contiguous vertex-aligned decompositions, and checkers for the metric,
//! hyperbolicity, chain, and compatibility inequalities.
//!
//! D is approximated from above: the unrestricted infimum over arbitrary
//! subcontinuum covers is not computable, while contiguous decompositions
//! keep both testable inequalities (D <= rho and rho <= 4 D) one-sided.

use crate::continua::MarkedContinuum;
use crate::error::{Error, Result};
use crate::spaces::{Point, Vec2};
use crate::systems::MapSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Expansion context: the expansivity constant, the empirical bound m on
/// expansion times of continua larger than eps/2, the contraction base
/// lambda = 2^(-1/m), and the iteration cap standing in for infinity.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CwContext {
    pub eps: f64,
    pub m: u32,
    pub lambda: f64,
    pub n_cap: u32,
}

pub const DEFAULT_N_CAP: u32 = 200;

impl CwContext {
    pub fn new(eps: f64, m: u32, n_cap: u32) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.25) {
            return Err(Error::InvalidArgument(format!(
                "eps = {eps} must lie in (0, 0.25), below half the injectivity radius"
            )));
        }
        if m == 0 || n_cap == 0 {
            return Err(Error::InvalidArgument("m and n_cap must be positive".into()));
        }
        let lambda = 2f64.powf(-1.0 / m as f64);
        Ok(Self {
            eps,
            m,
            lambda,
            n_cap,
        })
    }

    /// Context with m estimated by sampling seed continua of diameter above
    /// eps/2 (see [`estimate_m`]).
    pub fn with_estimated_m(
        spec: &MapSpec,
        eps: f64,
        samples: u32,
        seed: u64,
        n_cap: u32,
    ) -> Result<(Self, MEstimate)> {
        let est = estimate_m(spec, eps, samples, seed)?;
        Ok((Self::new(eps, est.m, n_cap)?, est))
    }
}

/// Result of the expansion-time scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpansionTime {
    /// diam(f^n C) exceeded eps first at |n| = this value.
    Exceeded(u32),
    /// No iterate within the cap exceeded eps.
    Saturated,
}

/// Smallest |n| <= n_cap with diam(f^n C) > eps, scanning n = 0, +-1, +-2...
/// Both iteration directions advance incrementally.
pub fn expansion_time(
    c: &MarkedContinuum,
    spec: &MapSpec,
    ctx: &CwContext,
) -> Result<ExpansionTime> {
    if c.diam() < 1e-12 {
        return Err(Error::TrivialContinuum);
    }
    if c.diam() > ctx.eps {
        return Ok(ExpansionTime::Exceeded(0));
    }
    let mut fwd = c.clone();
    let mut bwd = c.clone();
    for n in 1..=ctx.n_cap {
        fwd = fwd.iterate(spec, 1)?;
        if fwd.diam() > ctx.eps {
            return Ok(ExpansionTime::Exceeded(n));
        }
        bwd = bwd.iterate(spec, -1)?;
        if bwd.diam() > ctx.eps {
            return Ok(ExpansionTime::Exceeded(n));
        }
    }
    Ok(ExpansionTime::Saturated)
}

/// rho(C) = lambda^N(C); 0 for trivial continua; lambda^n_cap with the
/// saturated flag set when the scan hits the cap.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RhoValue {
    pub value: f64,
    pub saturated: bool,
}

pub fn rho(c: &MarkedContinuum, spec: &MapSpec, ctx: &CwContext) -> Result<RhoValue> {
    if c.diam() < 1e-12 {
        return Ok(RhoValue {
            value: 0.0,
            saturated: false,
        });
    }
    match expansion_time(c, spec, ctx)? {
        ExpansionTime::Exceeded(n) => Ok(RhoValue {
            value: ctx.lambda.powi(n as i32),
            saturated: false,
        }),
        ExpansionTime::Saturated => Ok(RhoValue {
            value: ctx.lambda.powi(ctx.n_cap as i32),
            saturated: true,
        }),
    }
}

/// Empirical m: the maximum expansion time over sampled seed continua with
/// diameter above eps/2, together with the sample census.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MEstimate {
    pub m: u32,
    pub samples: u32,
    pub seed: u64,
    pub eps: f64,
    /// (diameter, expansion time) pairs, capped at 1000 entries.
    pub census: Vec<(f64, u32)>,
}

/// Sample directions cycle through the eigendirections, the diagonal mixes
/// of the two, and seeded random headings; lengths live in (eps/2, eps].
pub fn estimate_m(spec: &MapSpec, eps: f64, samples: u32, seed: u64) -> Result<MEstimate> {
    if samples < 100 {
        return Err(Error::InvalidArgument("need at least 100 samples".into()));
    }
    let ctx_probe = CwContext::new(eps, 1, DEFAULT_N_CAP)?;
    let eigen = spec.eigenstructure()?;
    let chart_point = seed_point(spec)?;
    let results: Vec<Result<(f64, u32)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let center = random_point_like(&chart_point, &mut rng);
            let dir = match i % 6 {
                0 => eigen.v_u,
                1 => eigen.v_s,
                2 => (eigen.v_u + eigen.v_s).normalized(),
                3 => (eigen.v_u - eigen.v_s).normalized(),
                _ => {
                    let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    Vec2::new(th.cos(), th.sin())
                }
            };
            // Lengths biased toward the eps/2 boundary where expansion takes
            // longest.
            let len = (eps / 2.0 * (1.0 + rng.gen::<f64>().powi(2)) * 1.0001).min(eps);
            let mut c = MarkedContinuum::segment(&center, dir, len, len / 16.0)?;
            // Keep only samples whose quotient diameter clears eps/2; sphere
            // folding can shrink the projected diameter.
            let mut tries = 0;
            while c.diam() <= eps / 2.0 {
                tries += 1;
                if tries > 20 {
                    return Ok((0.0, 0));
                }
                let center = random_point_like(&chart_point, &mut rng);
                c = MarkedContinuum::segment(&center, dir, eps, eps / 16.0)?;
            }
            match expansion_time(&c, spec, &ctx_probe)? {
                ExpansionTime::Exceeded(n) => Ok((c.diam(), n)),
                ExpansionTime::Saturated => Err(Error::EpsTooLarge {
                    diam: c.diam(),
                    eps,
                }),
            }
        })
        .collect();
    let mut census = Vec::new();
    let mut m = 1u32;
    for r in results {
        let (diam, n) = r?;
        if diam == 0.0 {
            continue;
        }
        m = m.max(n);
        if census.len() < 1000 {
            census.push((diam, n));
        }
    }
    Ok(MEstimate {
        m,
        samples,
        seed,
        eps,
        census,
    })
}

fn seed_point(spec: &MapSpec) -> Result<Point> {
    match spec.chart()? {
        crate::spaces::Chart::Torus => Ok(Point::torus(0.0, 0.0)),
        crate::spaces::Chart::Sphere => Ok(Point::sphere(0.0, 0.0)),
    }
}

fn random_point_like(like: &Point, rng: &mut ChaCha8Rng) -> Point {
    let x = rng.gen::<f64>();
    let y = rng.gen::<f64>();
    match like {
        Point::Torus(_) => Point::torus(x, y),
        Point::Sphere(_) => Point::sphere(x, y),
        Point::Product(ps) => Point::Product(
            ps.iter()
                .map(|p| random_point_like(p, rng))
                .collect::<Vec<_>>(),
        ),
    }
}

/// Dynamic-programming minimum of sum(rho) over decompositions of the
/// mark-to-mark sub-polyline into at most `max_pieces` contiguous
/// vertex-aligned arcs. Always at most rho(C) (the one-piece decomposition
/// is included). Saturated arc weights enter at lambda^n_cap, which keeps
/// the approximation an upper bound on the true infimum.
pub fn chain_d(
    c: &MarkedContinuum,
    spec: &MapSpec,
    ctx: &CwContext,
    max_pieces: usize,
) -> Result<f64> {
    if max_pieces < 1 {
        return Err(Error::InvalidArgument("max_pieces must be >= 1".into()));
    }
    if c.diam() < 1e-12 || c.mark_p == c.mark_q {
        return Ok(0.0);
    }
    let sub = c.slice_arc(c.mark_p, c.mark_q)?;
    let n = sub.vertices.len();
    // rho of every contiguous arc [i, j].
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let arc = sub.slice_arc(i, j)?;
            if arc.diam() < 1e-12 {
                return Ok(0.0);
            }
            Ok(rho(&arc, spec, ctx)?.value)
        })
        .collect();
    let mut cost = vec![vec![f64::INFINITY; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        cost[i][j] = v?;
    }
    // dp[v] = min cost of covering [0, v] with at most the pieces spent so
    // far; `best` keeps the running minimum across piece counts.
    let mut dp = vec![f64::INFINITY; n];
    let mut best = vec![f64::INFINITY; n];
    dp[0] = 0.0;
    for _ in 0..max_pieces {
        let mut next = vec![f64::INFINITY; n];
        for u in 0..n - 1 {
            if dp[u].is_finite() {
                for v in (u + 1)..n {
                    let c2 = dp[u] + cost[u][v];
                    if c2 < next[v] {
                        next[v] = c2;
                    }
                }
            }
        }
        for v in 0..n {
            dp[v] = dp[v].min(next[v]);
            best[v] = best[v].min(dp[v]);
        }
    }
    Ok(best[n - 1])
}

/// Violation counts of the metric-theorem checks.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Violations {
    pub hyperbolicity: u32,
    pub frink: u32,
    pub compatibility: u32,
}

/// Report of a seeded run over sampled continua.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CwMetricReport {
    pub m: u32,
    pub lambda: f64,
    pub eps: f64,
    pub violations: Violations,
    pub samples: u32,
    pub seed: u64,
    /// Worst observed ratio rho / (4 chain_D): must stay <= 1.
    pub max_rho_over_4d: f64,
    /// Worst observed ratio chain_D(f^n C) / (4 lambda^n chain_D(C)).
    pub max_decay_ratio: f64,
    /// Worst observed ratio rho(union) / chain bound.
    pub max_frink_ratio: f64,
}

/// Empirical compatibility moduli between diam and the D approximation,
/// estimated from a seeded census of segments across scales.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompatibilityModuli {
    pub eps: f64,
    pub lambda: f64,
    pub m: u32,
    /// Census rows (diam, expansion time), sorted by diam ascending.
    census: Vec<(f64, u32)>,
    pub seed: u64,
}

impl CompatibilityModuli {
    /// Largest expansion time observed at or above the given diameter.
    pub fn max_n_at_diam_above(&self, d: f64) -> u32 {
        self.census
            .iter()
            .filter(|(diam, _)| *diam >= d)
            .map(|(_, n)| *n)
            .max()
            .unwrap_or(0)
    }

    /// Direction (b): a D-threshold such that chain_D(C) below it was never
    /// observed together with diam(C) >= delta. Uses rho >= 4 D.
    pub fn d_floor_for_diam(&self, delta: f64) -> f64 {
        let n = self.max_n_at_diam_above(delta);
        self.lambda.powi(n as i32) / 4.0
    }

    /// Direction (a): a diameter threshold such that every sampled C with
    /// diam(C) below it had rho(C) (hence chain_D) below `d_bound`.
    pub fn diam_floor_for_d(&self, d_bound: f64) -> f64 {
        // Smallest sampled diameter whose rho reached d_bound, backed off 2x.
        let mut gamma = f64::INFINITY;
        for (diam, n) in &self.census {
            if self.lambda.powi(*n as i32) >= d_bound {
                gamma = gamma.min(*diam);
            }
        }
        if gamma.is_finite() {
            gamma / 2.0
        } else {
            self.eps
        }
    }
}

/// Build the compatibility census for a system. Scales sweep logarithmically
/// from 1e-5 up to about half the diameter bound of the space.
pub fn calibrate_compatibility(
    spec: &MapSpec,
    ctx: &CwContext,
    samples: u32,
    seed: u64,
) -> Result<CompatibilityModuli> {
    let eigen = spec.eigenstructure()?;
    let chart_point = seed_point(spec)?;
    let rows: Vec<Result<(f64, u32)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            rng.set_stream(i as u64);
            let center = random_point_like(&chart_point, &mut rng);
            let dir = match i % 5 {
                0 => eigen.v_u,
                1 => eigen.v_s,
                2 => (eigen.v_u + eigen.v_s).normalized(),
                _ => {
                    let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    Vec2::new(th.cos(), th.sin())
                }
            };
            let scale: f64 = 10f64.powf(rng.gen_range(-5.0..-0.3));
            let c = MarkedContinuum::segment(&center, dir, scale, scale / 8.0)?;
            if c.diam() < 1e-12 {
                return Ok((0.0, 0));
            }
            match expansion_time(&c, spec, ctx)? {
                ExpansionTime::Exceeded(n) => Ok((c.diam(), n)),
                ExpansionTime::Saturated => Ok((c.diam(), ctx.n_cap)),
            }
        })
        .collect();
    let mut census = Vec::new();
    for r in rows {
        let row = r?;
        if row.0 > 0.0 {
            census.push(row);
        }
    }
    census.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(CompatibilityModuli {
        eps: ctx.eps,
        lambda: ctx.lambda,
        m: ctx.m,
        census,
        seed,
    })
}

const MAX_PIECES: usize = 4;

/// Verify, over seeded samples: (i) rho <= 4 chain_D; (ii) the decay
/// chain_D(f^n C) <= 4 lambda^n chain_D(C) on forward-contracting continua
/// for n <= 2m; (iii) the chain inequalities
/// rho(C1 u ... u Cn) <= 2 rho(C1) + 4 rho(C2) + ... + 4 rho(C_{n-1}) + 2 rho(Cn)
/// and rho(A u B) <= 2 max(rho(A), rho(B)); and the census-derived
/// compatibility moduli on fresh samples. Violations are data, not errors.
pub fn check_cw_metric_theorem(
    spec: &MapSpec,
    ctx: &CwContext,
    trials: u32,
    seed: u64,
) -> Result<CwMetricReport> {
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let eigen = spec.eigenstructure()?;
    let chart_point = seed_point(spec)?;

    // (i) rho <= 4 chain_D over random segments and chains.
    let frink_eq: Vec<Result<(u32, f64)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf41);
            rng.set_stream(i as u64);
            let c = if i % 3 == 2 {
                sample_chain(spec, &chart_point, &eigen, &mut rng)?.0
            } else {
                let center = random_point_like(&chart_point, &mut rng);
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let len: f64 = 10f64.powf(rng.gen_range(-2.5..-0.7));
                MarkedContinuum::segment(&center, Vec2::new(th.cos(), th.sin()), len, len / 8.0)?
            };
            if c.diam() < 1e-12 {
                return Ok((0, 0.0));
            }
            let r = rho(&c, spec, ctx)?;
            if r.saturated {
                return Ok((0, 0.0));
            }
            let d = chain_d(&c, spec, ctx, MAX_PIECES)?;
            let ratio = if d > 0.0 { r.value / (4.0 * d) } else { 0.0 };
            Ok(((ratio > 1.0 + 1e-9) as u32, ratio))
        })
        .collect();

    // (ii) decay on forward-contracting (stable-direction) continua.
    let decay: Vec<Result<(u32, f64)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdeca);
            rng.set_stream(i as u64);
            let center = random_point_like(&chart_point, &mut rng);
            let len = ctx.eps * rng.gen_range(0.2..0.95);
            let c = MarkedContinuum::segment(&center, eigen.v_s, len, len / 8.0)?;
            if c.diam() < 1e-12 {
                return Ok((0, 0.0));
            }
            let d0 = chain_d(&c, spec, ctx, MAX_PIECES)?;
            let mut worst = 0.0f64;
            let mut bad = 0u32;
            for n in 1..=(2 * ctx.m) {
                let it = c.iterate(spec, n as i64)?;
                let dn = chain_d(&it, spec, ctx, MAX_PIECES)?;
                let bound = 4.0 * ctx.lambda.powi(n as i32) * d0;
                let ratio = if bound > 0.0 { dn / bound } else { 0.0 };
                worst = worst.max(ratio);
                if ratio > 1.0 + 1e-9 {
                    bad += 1;
                }
            }
            Ok((bad, worst))
        })
        .collect();

    // (iii) chain inequalities on random arc-chains.
    let frink_chain: Vec<Result<(u32, f64)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc4a1);
            rng.set_stream(i as u64);
            let (whole, pieces) = sample_chain(spec, &chart_point, &eigen, &mut rng)?;
            if whole.diam() < 1e-12 {
                return Ok((0, 0.0));
            }
            let rw = rho(&whole, spec, ctx)?;
            if rw.saturated {
                return Ok((0, 0.0));
            }
            let mut bound = 0.0;
            let k = pieces.len();
            for (j, p) in pieces.iter().enumerate() {
                let rp = rho(p, spec, ctx)?;
                let coef = if j == 0 || j == k - 1 { 2.0 } else { 4.0 };
                bound += coef * rp.value;
            }
            let mut bad = 0u32;
            let mut worst: f64 = if bound > 0.0 { rw.value / bound } else { 0.0 };
            if rw.value > bound * (1.0 + 1e-9) {
                bad += 1;
            }
            // Two-piece form at every piece boundary.
            let mut boundary = 0usize;
            for j in 0..k - 1 {
                boundary += pieces[j].vertices.len() - 1;
                let a = whole.slice_arc(0, boundary)?;
                let b = whole.slice_arc(boundary, whole.vertices.len() - 1)?;
                if a.diam() < 1e-12 || b.diam() < 1e-12 {
                    continue;
                }
                let ra = rho(&a, spec, ctx)?.value;
                let rb = rho(&b, spec, ctx)?.value;
                let two = 2.0 * ra.max(rb);
                if two > 0.0 {
                    worst = worst.max(rw.value / two);
                }
                if rw.value > two * (1.0 + 1e-9) {
                    bad += 1;
                }
            }
            Ok((bad, worst))
        })
        .collect();

    let mut v = Violations::default();
    let mut max_rho_over_4d = 0.0f64;
    for r in frink_eq {
        let (bad, ratio) = r?;
        v.hyperbolicity += bad;
        max_rho_over_4d = max_rho_over_4d.max(ratio);
    }
    let mut max_decay_ratio = 0.0f64;
    for r in decay {
        let (bad, ratio) = r?;
        v.hyperbolicity += bad;
        max_decay_ratio = max_decay_ratio.max(ratio);
    }
    let mut max_frink_ratio = 0.0f64;
    for r in frink_chain {
        let (bad, ratio) = r?;
        v.frink += bad;
        max_frink_ratio = max_frink_ratio.max(ratio);
    }

    // Compatibility: fresh samples respect the census-derived moduli.
    let moduli = calibrate_compatibility(spec, ctx, (trials / 2).max(200), seed ^ 0xc0)?;
    let compat: Vec<Result<u32>> = (0..(trials / 4).max(100))
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0317);
            rng.set_stream(i as u64);
            let center = random_point_like(&chart_point, &mut rng);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let len: f64 = 10f64.powf(rng.gen_range(-4.0..-0.7));
            let c =
                MarkedContinuum::segment(&center, Vec2::new(th.cos(), th.sin()), len, len / 8.0)?;
            if c.diam() < 1e-12 {
                return Ok(0);
            }
            let d = chain_d(&c, spec, ctx, MAX_PIECES)?;
            let mut bad = 0u32;
            // Direction (a): diam below the modulus forces D below the bound.
            for d_bound in [0.9, 0.7, 0.5] {
                let gamma = moduli.diam_floor_for_d(d_bound);
                if c.diam() < gamma && d >= d_bound {
                    bad += 1;
                }
            }
            // Direction (b): D below the floor forces diam below delta.
            for delta in [ctx.eps, ctx.eps / 2.0] {
                let floor = moduli.d_floor_for_diam(delta);
                if d < floor && c.diam() >= delta {
                    bad += 1;
                }
            }
            Ok(bad)
        })
        .collect();
    for r in compat {
        v.compatibility += r?;
    }

    Ok(CwMetricReport {
        m: ctx.m,
        lambda: ctx.lambda,
        eps: ctx.eps,
        violations: v,
        samples: trials,
        seed,
        max_rho_over_4d,
        max_decay_ratio,
        max_frink_ratio,
    })
}

/// A connected random polyline of 2..=5 straight pieces with kinks, returned
/// whole plus the pieces as arcs sharing junction vertices exactly.
fn sample_chain(
    spec: &MapSpec,
    chart_point: &Point,
    eigen: &crate::systems::EigenData,
    rng: &mut ChaCha8Rng,
) -> Result<(MarkedContinuum, Vec<MarkedContinuum>)> {
    let chart = spec.chart()?;
    let k = rng.gen_range(2..=5usize);
    let start = random_point_like(chart_point, rng).lift()?;
    let mut th: f64 = if rng.gen_bool(0.3) {
        eigen.v_u.y.atan2(eigen.v_u.x)
    } else {
        rng.gen_range(0.0..std::f64::consts::TAU)
    };
    let mut vertices = vec![start];
    let mut boundaries = vec![0usize];
    let mut h_max = 0.0f64;
    for _ in 0..k {
        let len: f64 = 10f64.powf(rng.gen_range(-2.2..-0.9));
        let sub = 6usize;
        let h = len / sub as f64;
        h_max = h_max.max(h);
        let dir = Vec2::new(th.cos(), th.sin());
        let base = *vertices.last().unwrap();
        for i in 1..=sub {
            vertices.push(base + dir * (h * i as f64));
        }
        boundaries.push(vertices.len() - 1);
        th += rng.gen_range(-1.2..1.2f64);
    }
    let whole = MarkedContinuum::new(chart, vertices, 0, boundaries[k], h_max)?;
    let mut pieces = Vec::with_capacity(k);
    for w in boundaries.windows(2) {
        pieces.push(whole.slice_arc(w[0], w[1])?);
    }
    Ok((whole, pieces))
}
