//! Geodesics on the profile surface, the geodesic quadrangle bounded by the
//! arc γ, the Gauss-Bonnet tuning of (k2, Δ, r), assembly of the polygon D,
//! and Fermi charts on its edges.
//!
//! Geodesic equations of `dx² + G(x)² dy²` in arclength parameter:
//! `x'' = G G' (y')²`, `y'' = -2 (G'/G) x' y'`.  The Clairaut integral
//! `c = G² y'` is conserved on smooth pieces, so a connecting arc between
//! two points with the same x-coordinate turns exactly once, at the point
//! `x_t` where `G(x_t) = c`, and stays inside `{G ≥ c}`.

use thiserror::Error;

use crate::numerics::{bisect, integrate_piecewise, rk45_eval, rk45_step};
use crate::profile::{Branch, MetricParams, ProfileError, ProfileG};

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("profile error: {0}")]
    Profile(#[from] ProfileError),
    #[error("shooting failed to connect the endpoints (best residual {0:.3e})")]
    NoConnection(f64),
    #[error("point ({0}, {1}) outside the profile domain")]
    OutsideDomain(f64, f64),
    #[error("polygon needs m >= 5 edges, got {0}; use the small-case table instead")]
    TooFewEdges(usize),
    #[error("query at distance {0:.4} is outside the chart tube (radius {1:.4})")]
    OutsideTube(f64, f64),
    #[error("foot point on edge {0} is not unique")]
    AmbiguousFoot(usize),
    #[error("edge index {0} out of range 1..={1}")]
    BadEdge(usize, usize),
}

/// One recorded state along a geodesic: arclength, position and coordinate
/// velocity.
#[derive(Debug, Clone, Copy)]
pub struct PathSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl PathSample {
    /// Tangent angle in the orthonormal frame (∂x, ∂y/G).
    pub fn angle(&self, g: &ProfileG) -> f64 {
        let gv = eval_clamped(g, self.x).0;
        (gv * self.vy).atan2(self.vx)
    }
}

#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub samples: Vec<PathSample>,
    /// `G(x)² · dy/ds` at the start; conserved within smooth pieces.
    pub clairaut_constant: f64,
    /// Set when integration left the profile domain before finishing.
    pub truncated: bool,
}

impl GeodesicPath {
    pub fn start(&self) -> PathSample {
        self.samples[0]
    }

    pub fn end(&self) -> PathSample {
        *self.samples.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        self.end().s
    }

    pub fn min_x(&self) -> f64 {
        self.samples.iter().map(|p| p.x).fold(f64::INFINITY, f64::min)
    }

    pub fn max_x(&self) -> f64 {
        self.samples.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same path traversed backwards.
    pub fn reversed(&self) -> GeodesicPath {
        let total = self.length();
        let samples = self
            .samples
            .iter()
            .rev()
            .map(|p| PathSample { s: total - p.s, x: p.x, y: p.y, vx: -p.vx, vy: -p.vy })
            .collect();
        GeodesicPath { samples, clairaut_constant: -self.clairaut_constant, truncated: self.truncated }
    }

    /// Position at arclength `s` by cubic Hermite interpolation between
    /// recorded samples.
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        let (a, b, t) = self.bracket_s(s);
        (hermite(a.x, a.vx, b.x, b.vx, b.s - a.s, t), hermite(a.y, a.vy, b.y, b.vy, b.s - a.s, t))
    }

    /// Coordinate velocity at arclength `s` (linear interpolation).
    pub fn velocity_at(&self, s: f64) -> (f64, f64) {
        let (a, b, t) = self.bracket_s(s);
        (a.vx + (b.vx - a.vx) * t, a.vy + (b.vy - a.vy) * t)
    }

    fn bracket_s(&self, s: f64) -> (PathSample, PathSample, f64) {
        let n = self.samples.len();
        let s = s.clamp(0.0, self.length());
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.samples[mid].s <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = self.samples[lo];
        let b = self.samples[hi];
        let dt = (b.s - a.s).max(1e-300);
        (a, b, (s - a.s) / dt)
    }

    /// x-coordinate at height `y`; requires y strictly monotone along the
    /// path (Clairaut constant nonzero).
    pub fn x_at_y(&self, y: f64) -> f64 {
        let n = self.samples.len();
        let up = self.samples[n - 1].y > self.samples[0].y;
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if (self.samples[mid].y <= y) == up {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = self.samples[lo];
        let b = self.samples[hi];
        let h = b.s - a.s;
        if h <= 0.0 {
            return a.x;
        }
        // Invert the cubic y(s) by Newton, then evaluate the x cubic.
        let mut t = ((y - a.y) / (b.y - a.y)).clamp(0.0, 1.0);
        for _ in 0..30 {
            let yv = hermite(a.y, a.vy, b.y, b.vy, h, t);
            let yd = hermite_d(a.y, a.vy, b.y, b.vy, h, t);
            if yd.abs() < 1e-300 {
                break;
            }
            let step = (yv - y) / yd;
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        hermite(a.x, a.vx, b.x, b.vx, h, t.clamp(0.0, 1.0))
    }
}

fn hermite(p0: f64, m0: f64, p1: f64, m1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * p0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * p1
        + (t3 - t2) * h * m1
}

fn hermite_d(p0: f64, m0: f64, p1: f64, m1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    (6.0 * t2 - 6.0 * t) * p0
        + (3.0 * t2 - 4.0 * t + 1.0) * h * m0
        + (-6.0 * t2 + 6.0 * t) * p1
        + (3.0 * t2 - 2.0 * t) * h * m1
}

/// Integration options; the defaults are tight enough for the 1e-8 path
/// invariants, the looser preset is used inside shooting iterations.
#[derive(Debug, Clone, Copy)]
pub struct ShootOpts {
    pub tol: f64,
    pub h_max: f64,
}

impl Default for ShootOpts {
    fn default() -> Self {
        ShootOpts { tol: 1e-11, h_max: 5e-3 }
    }
}

impl ShootOpts {
    pub fn coarse() -> Self {
        ShootOpts { tol: 1e-9, h_max: 2e-2 }
    }
}

fn eval_clamped(g: &ProfileG, x: f64) -> (f64, f64, f64) {
    let lo = -g.params.delta;
    let hi = g.x_right - 1e-9;
    let xc = x.clamp(lo, hi);
    g.eval_piece(g.piece_of(xc), xc)
}

fn rhs(g: &ProfileG, st: &[f64; 4]) -> [f64; 4] {
    let (gv, gd, _) = eval_clamped(g, st[0]);
    [st[2], st[3], gv * gd * st[3] * st[3], -2.0 * gd / gv * st[2] * st[3]]
}

enum Stop {
    Length(f64),
    /// Stop when y crosses the level; abort (truncated) past the max length.
    YLevel { y: f64, max_len: f64 },
    /// Stop when x comes back to the level after at least `min_s` of
    /// arclength (for closing a symmetric arc at its launch abscissa).
    XReturn { x: f64, min_s: f64, max_len: f64 },
}

fn renormalize(g: &ProfileG, st: &mut [f64; 4]) {
    let gv = eval_clamped(g, st[0]).0;
    let speed = (st[2] * st[2] + gv * gv * st[3] * st[3]).sqrt();
    if speed > 0.0 {
        st[2] /= speed;
        st[3] /= speed;
    }
}

/// Locate `h` in `(0, h1]` such that the monitored component crosses its
/// target, by bisection on the step size with fixed-step evaluations.
fn locate_event<M: Fn(&[f64; 4]) -> f64>(
    g: &ProfileG,
    y0: &[f64; 4],
    h1: f64,
    monitor: M,
) -> (f64, [f64; 4]) {
    let f = |st: &[f64; 4]| rhs(g, st);
    let m0 = monitor(y0);
    let mut lo = 0.0;
    let mut hi = h1;
    let mut state = rk45_eval(&f, y0, h1).0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let cand = rk45_eval(&f, y0, mid).0;
        if (monitor(&cand) > 0.0) == (m0 > 0.0) {
            lo = mid;
        } else {
            hi = mid;
            state = cand;
        }
        if hi - lo < 1e-15 * h1.max(1.0) {
            break;
        }
    }
    (hi, state)
}

fn integrate_geodesic(g: &ProfileG, start: [f64; 4], stop: Stop, opts: ShootOpts) -> GeodesicPath {
    let f = |st: &[f64; 4]| rhs(g, st);
    let x_lo = -g.params.delta;
    let x_hi = g.x_right - 1e-7;
    let breaks = g.breakpoints();
    let clairaut = {
        let gv = eval_clamped(g, start[0]).0;
        gv * gv * start[3]
    };
    let mut samples = vec![PathSample { s: 0.0, x: start[0], y: start[1], vx: start[2], vy: start[3] }];
    let mut st = start;
    let mut s = 0.0;
    let mut h = opts.h_max.min(1e-3);
    let mut truncated = false;
    loop {
        let mut h_try = h.min(opts.h_max);
        match stop {
            Stop::Length(total) => {
                if s >= total - 1e-13 {
                    break;
                }
                h_try = h_try.min(total - s);
            }
            Stop::YLevel { max_len, .. } | Stop::XReturn { max_len, .. } => {
                if s >= max_len {
                    truncated = true;
                    break;
                }
            }
        }
        let step = rk45_step(&f, &st, h_try, opts.tol);
        let mut new = step.y;
        let mut h_used = step.h_used;
        let mut stop_here = false;

        // Piece-breakpoint events: land exactly on x = ε or 2ε and restart.
        for &b in &breaks {
            if (st[0] - b) != 0.0 && (st[0] - b).signum() != (new[0] - b).signum() && (new[0] - b) != 0.0 {
                let (h_ev, mut ev_state) = locate_event(g, &st, h_used, |p| p[0] - b);
                ev_state[0] = b;
                renormalize(g, &mut ev_state);
                new = ev_state;
                h_used = h_ev;
                break;
            }
        }
        // Domain exit (strict on the left: {x=-δ} itself is a geodesic).
        if new[0] < x_lo - 1e-12 || new[0] >= x_hi {
            let wall = if new[0] < x_lo { x_lo } else { x_hi };
            if (st[0] - wall).abs() > 1e-12 {
                let (h_ev, ev_state) = locate_event(g, &st, h_used, |p| p[0] - wall);
                new = ev_state;
                h_used = h_ev;
            }
            truncated = true;
            stop_here = true;
        }
        // Stop-level event.
        match stop {
            Stop::YLevel { y: level, .. } => {
                if !stop_here && (st[1] - level).signum() != (new[1] - level).signum() {
                    let (h_ev, mut ev_state) = locate_event(g, &st, h_used, |p| p[1] - level);
                    ev_state[1] = level;
                    new = ev_state;
                    h_used = h_ev;
                    stop_here = true;
                }
            }
            Stop::XReturn { x: level, min_s, .. } => {
                if !stop_here
                    && s > min_s
                    && (st[0] - level) < 0.0
                    && (new[0] - level) >= 0.0
                {
                    let (h_ev, mut ev_state) = locate_event(g, &st, h_used, |p| p[0] - level);
                    ev_state[0] = level;
                    new = ev_state;
                    h_used = h_ev;
                    stop_here = true;
                }
            }
            Stop::Length(_) => {}
        }
        s += h_used;
        st = new;
        samples.push(PathSample { s, x: st[0], y: st[1], vx: st[2], vy: st[3] });
        if stop_here {
            break;
        }
        // Stagnation guard: events pinned at the current state would
        // otherwise stall the integration without advancing arclength.
        if h_used < 1e-13 || samples.len() > 4_000_000 {
            truncated = true;
            break;
        }
        h = step.h_next.min(opts.h_max);
    }
    GeodesicPath { samples, clairaut_constant: clairaut, truncated }
}

/// Shoot a geodesic from `start` with tangent angle `angle` (orthonormal
/// frame) for the given arclength.  Leaving the profile domain truncates the
/// path and sets the flag rather than erroring.
pub fn shoot_geodesic(g: &ProfileG, start: (f64, f64), angle: f64, length: f64) -> GeodesicPath {
    shoot_geodesic_opts(g, start, angle, length, ShootOpts::default())
}

pub fn shoot_geodesic_opts(
    g: &ProfileG,
    start: (f64, f64),
    angle: f64,
    length: f64,
    opts: ShootOpts,
) -> GeodesicPath {
    let gv = eval_clamped(g, start.0).0;
    let st = [start.0, start.1, angle.cos(), angle.sin() / gv];
    integrate_geodesic(g, st, Stop::Length(length), opts)
}

fn shoot_until_y(
    g: &ProfileG,
    start: (f64, f64),
    angle: f64,
    y_level: f64,
    max_len: f64,
    opts: ShootOpts,
) -> GeodesicPath {
    let gv = eval_clamped(g, start.0).0;
    let st = [start.0, start.1, angle.cos(), angle.sin() / gv];
    integrate_geodesic(g, st, Stop::YLevel { y: y_level, max_len }, opts)
}

fn in_domain(g: &ProfileG, p: (f64, f64)) -> bool {
    p.0 >= -g.params.delta && p.0 < g.x_right
}

/// Connect `p` to `q` by a geodesic: shooting on the initial angle with the
/// residual measured where the path reaches the height of `q`.
pub fn connect_geodesic(g: &ProfileG, p: (f64, f64), q: (f64, f64)) -> Result<GeodesicPath, QuadError> {
    connect_geodesic_opts(g, p, q, ShootOpts::default())
}

pub fn connect_geodesic_opts(
    g: &ProfileG,
    p: (f64, f64),
    q: (f64, f64),
    opts: ShootOpts,
) -> Result<GeodesicPath, QuadError> {
    if !in_domain(g, p) {
        return Err(QuadError::OutsideDomain(p.0, p.1));
    }
    if !in_domain(g, q) {
        return Err(QuadError::OutsideDomain(q.0, q.1));
    }
    if (p.1 - q.1).abs() < 1e-14 {
        // Horizontal lines y = const are geodesics.
        let angle = if q.0 >= p.0 { 0.0 } else { std::f64::consts::PI };
        return Ok(shoot_geodesic_opts(g, p, angle, (q.0 - p.0).abs(), opts));
    }
    if q.1 < p.1 {
        return Ok(connect_geodesic_opts(g, q, p, opts)?.reversed());
    }
    let gv = eval_clamped(g, 0.5 * (p.0 + q.0)).0;
    let max_len = 4.0 * ((q.1 - p.1) * g.c1 + (q.0 - p.0).abs() + 5.0);
    let coarse = ShootOpts { tol: opts.tol.max(1e-10), h_max: opts.h_max.max(1e-2) };
    let residual = |phi: f64, o: ShootOpts| -> f64 {
        let path = shoot_until_y(g, p, phi, q.1, max_len, o);
        if path.truncated {
            let end = path.end();
            if end.x <= -g.params.delta + 1e-9 {
                -1e6
            } else if end.x >= g.x_right - 1e-6 {
                1e6
            } else {
                f64::NAN
            }
        } else {
            path.end().x - q.0
        }
    };
    // Initial chord guess, then a secant iteration.
    let mut phi0 = (gv * (q.1 - p.1)).atan2(q.0 - p.0);
    phi0 = phi0.clamp(1e-9, std::f64::consts::PI - 1e-9);
    let mut a = phi0;
    let mut fa = residual(a, coarse);
    let mut b = (phi0 + 0.02).min(std::f64::consts::PI - 1e-9);
    let mut fb = residual(b, coarse);
    let mut bracket: Option<(f64, f64)> = None;
    let mut best = f64::INFINITY;
    for _ in 0..60 {
        if fa.is_finite() && fb.is_finite() && fa.signum() != fb.signum() {
            bracket = Some((a.min(b), a.max(b)));
            break;
        }
        if !fa.is_finite() || !fb.is_finite() || fa == fb {
            break;
        }
        let next = (b - fb * (b - a) / (fb - fa)).clamp(1e-9, std::f64::consts::PI - 1e-9);
        a = b;
        fa = fb;
        b = next;
        fb = residual(b, coarse);
        best = best.min(fb.abs());
        if fb.abs() < 1e-11 {
            bracket = Some((b, b));
            break;
        }
    }
    if bracket.is_none() {
        // Fallback: scan the admissible angle range for a sign change.
        let n = 240;
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..=n {
            let phi = 1e-6 + (std::f64::consts::PI - 2e-6) * k as f64 / n as f64;
            let f = residual(phi, coarse);
            if !f.is_finite() {
                prev = None;
                continue;
            }
            if let Some((pp, fp)) = prev {
                if fp.signum() != f.signum() {
                    bracket = Some((pp, phi));
                    break;
                }
            }
            prev = Some((phi, f));
        }
    }
    let (lo, hi) = bracket.ok_or(QuadError::NoConnection(best))?;
    let phi = if lo == hi {
        lo
    } else {
        bisect(|phi| residual(phi, coarse), lo, hi, 1e-13).map_err(|_| QuadError::NoConnection(best))?
    };
    // Final passes at full accuracy, polished by secant steps.
    let mut phi_fine = phi;
    let mut f0 = residual(phi_fine, opts);
    for _ in 0..4 {
        if !f0.is_finite() || f0.abs() < 1e-11 {
            break;
        }
        let d = (f0.abs() * 1e-2).clamp(1e-9, 1e-5);
        let f1 = residual(phi_fine + d, opts);
        if !f1.is_finite() || (f1 - f0).abs() < 1e-300 {
            break;
        }
        phi_fine -= f0 * d / (f1 - f0);
        f0 = residual(phi_fine, opts);
    }
    let path = shoot_until_y(g, p, phi_fine, q.1, max_len, opts);
    let err = ((path.end().x - q.0).powi(2) + (path.end().y - q.1).powi(2)).sqrt();
    if path.truncated || err > 1e-9 {
        return Err(QuadError::NoConnection(err));
    }
    Ok(path)
}

/// The tuned geodesic quadrangle: left edge {x=-δ}, horizontals y=0 and
/// y=Δ, right edge γ from (r,0) to (r,Δ).
#[derive(Debug, Clone)]
pub struct QuadrangleSpec {
    pub params: MetricParams,
    pub gamma: GeodesicPath,
    /// Distance from γ to the curve {x=2ε}: `x_t - 2ε` at the turning point.
    pub closest_approach: f64,
    /// Largest excursion `x - 2ε` along γ (attained at the endpoints).
    pub max_excursion: f64,
}

impl QuadrangleSpec {
    pub fn new(params: MetricParams, gamma: GeodesicPath) -> Self {
        let two_eps = 2.0 * params.epsilon;
        let closest = gamma.min_x() - two_eps;
        let max_exc = gamma.max_x() - two_eps;
        QuadrangleSpec { params, gamma, closest_approach: closest, max_excursion: max_exc }
    }
}

/// Interior angles of the quadrangle at the two γ-corners, measured from
/// the metric inner product of the edge tangents.
pub fn corner_angles(g: &ProfileG, q: &QuadrangleSpec) -> (f64, f64) {
    let s0 = q.gamma.start();
    let s1 = q.gamma.end();
    // Bottom corner: edge direction away from the vertex is (-1, 0); γ away
    // from the vertex is its forward tangent.
    let a0 = angle_between(g, (s0.x, s0.y), (-1.0, 0.0), (s0.vx, s0.vy));
    // Top corner: γ away from the vertex is the reversed tangent.
    let a1 = angle_between(g, (s1.x, s1.y), (-1.0, 0.0), (-s1.vx, -s1.vy));
    (a0, a1)
}

fn angle_between(g: &ProfileG, at: (f64, f64), u: (f64, f64), v: (f64, f64)) -> f64 {
    let gv = eval_clamped(g, at.0).0;
    let un = ((u.0) * (u.0) + gv * gv * u.1 * u.1).sqrt();
    let vn = ((v.0) * (v.0) + gv * gv * v.1 * v.1).sqrt();
    let dot = (u.0 * v.0 + gv * gv * u.1 * v.1) / (un * vn);
    dot.clamp(-1.0, 1.0).acos()
}

/// ∫∫ K·G dx dy over the rectangle [a,b]×[0,height] by genuine nested
/// adaptive quadrature (the y-integral is trivial, the x-integrand is
/// piecewise constant × G).
pub fn rect_total_curvature(g: &ProfileG, a: f64, b: f64, height: f64) -> f64 {
    let breaks = g.breakpoints();
    let f = |x: f64| {
        let piece = g.piece_of(x);
        let p = &g.params;
        let k = [1.0 / (p.k1 * p.k1), -1.0, 1.0 / (p.k2 * p.k2)][piece];
        k * g.eval_piece(piece, x).0
    };
    integrate_piecewise(&f, a, b, &breaks, 1e-12) * height
}

/// Smooth-piece value of ∫_{-δ}^{X} K·G dx (no distributional term).
fn flux_smooth(g: &ProfileG, x_upper: f64) -> f64 {
    let p = &g.params;
    let mut cuts = vec![-p.delta];
    for b in g.breakpoints() {
        if b > -p.delta && b < x_upper {
            cuts.push(b);
        }
    }
    cuts.push(x_upper);
    // ∫ K G = ∫ -G'' = G'(a) - G'(b) piece by piece, one-sided at cuts.
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let piece = g.piece_of(0.5 * (w[0] + w[1]));
        total += g.eval_piece(piece, w[0]).1 - g.eval_piece(piece, w[1]).1;
    }
    total
}

/// Total curvature of the quadrangle: smooth-piece quadrature of K dA plus,
/// on the shifted branch, the distributional line term along {x=2ε}.
pub fn total_curvature(g: &ProfileG, q: &QuadrangleSpec) -> f64 {
    let delta_big = q.gamma.end().y - q.gamma.start().y;
    let y0 = q.gamma.start().y;
    let two_eps = 2.0 * g.params.epsilon;

    // y-levels where γ crosses a profile breakpoint (kinks of the inner
    // integral) — found by scanning the samples.
    let mut cuts: Vec<f64> = Vec::new();
    let mut right_measure = 0.0; // measure of {y : x_γ(y) > 2ε}
    {
        let samp = &q.gamma.samples;
        let mut crossings_2eps: Vec<f64> = Vec::new();
        for w in samp.windows(2) {
            for b in [g.params.epsilon, two_eps] {
                if (w[0].x - b).signum() != (w[1].x - b).signum() {
                    let t = (b - w[0].x) / (w[1].x - w[0].x);
                    let yc = w[0].y + (w[1].y - w[0].y) * t;
                    cuts.push(yc - y0);
                    if b == two_eps {
                        crossings_2eps.push(yc - y0);
                    }
                }
            }
        }
        // Accumulate the sub-intervals of [0, Δ] where x_γ > 2ε.
        let mut marks = vec![0.0];
        marks.extend(crossings_2eps.iter().copied());
        marks.push(delta_big);
        marks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in marks.windows(2) {
            let mid = y0 + 0.5 * (w[0] + w[1]);
            if q.gamma.x_at_y(mid) > two_eps {
                right_measure += w[1] - w[0];
            }
        }
    }
    let f = |y: f64| flux_smooth(g, q.gamma.x_at_y(y0 + y));
    let quad = integrate_piecewise(&f, 0.0, delta_big, &cuts, 1e-10);
    // Distributional curvature of the C⁰-only derivative kink at 2ε.
    let jump = g.eval_piece(2, two_eps).1 - g.eval_piece(1, two_eps).1;
    quad - jump * right_measure
}

/// Result of the Gauss-Bonnet tuning.  Infeasibility is a first-class
/// outcome, never an exception.
#[derive(Debug)]
pub enum GaussBonnetOutcome {
    Feasible {
        profile: ProfileG,
        quad: QuadrangleSpec,
        total: f64,
        corner_angles: (f64, f64),
    },
    Infeasible(InfeasibilityReport),
}

/// Evidence that the target total curvature cannot be reached: on the
/// principal branch every admissible right edge keeps G' ≤ -sinh ν, so the
/// total is bounded below by Δ·sinh ν > 0.
#[derive(Debug)]
pub struct InfeasibilityReport {
    pub branch: Branch,
    pub target: f64,
    /// Coefficient of the closed-form lower bound `total ≥ Δ·sinh ν`.
    pub lower_bound_rate: f64,
    /// (Δ, quadrature total, closed-form lower bound) evidence triples.
    pub samples: Vec<(f64, f64, f64)>,
    pub message: String,
}

/// Search (Δ, r) at fixed k2, escalating k2 over a ladder, for
/// `∫_Π K dA = target`.  The turning point of γ is pinned inside the μ₁-tube
/// of {x=2ε}; the corner-angle identity `sin θ = G(x_t)/G(r)` dictates how
/// far right the endpoints must sit, hence the k2 escalation.
pub fn solve_gauss_bonnet(params: MetricParams, target: f64) -> Result<GaussBonnetOutcome, QuadError> {
    match params.branch {
        Branch::Principal => principal_infeasibility(params, target),
        Branch::Shifted => shifted_solve(params, target),
    }
}

fn principal_infeasibility(params: MetricParams, target: f64) -> Result<GaussBonnetOutcome, QuadError> {
    let g = ProfileG::solve(params)?;
    let rate = params.nu.sinh();
    let mut samples = Vec::new();
    for delta_big in [0.5, 1.0, 2.0] {
        let gamma = connect_geodesic(&g, (params.r, 0.0), (params.r, delta_big))?;
        let quad = QuadrangleSpec::new(params, gamma);
        let total = total_curvature(&g, &quad);
        samples.push((delta_big, total, rate * delta_big));
    }
    Ok(GaussBonnetOutcome::Infeasible(InfeasibilityReport {
        branch: Branch::Principal,
        target,
        lower_bound_rate: rate,
        samples,
        message: format!(
            "principal branch: right of 2ε the derivative satisfies G' ≤ -sinh ν, \
             so ∫_Π K dA = -∫ G'(x_γ(y)) dy ≥ Δ·sinh ν = Δ·{rate:.6} > 0 ≥ target {target:.6}; \
             the connecting arcs bulge away from {{x=2ε}} and the target is unreachable"
        ),
    }))
}

fn shifted_solve(params: MetricParams, target: f64) -> Result<GaussBonnetOutcome, QuadError> {
    let theta = 0.5 * (target + std::f64::consts::PI); // target = 2θ - π
    let sin_theta = theta.sin();
    let x_mid = 2.0 * params.epsilon + 0.5 * params.mu1;
    let ladder = k2_ladder(params.k2);
    for &k2 in &ladder {
        let mut p = params;
        p.k2 = k2;
        let g = ProfileG::solve(p)?;
        // Carry the solved matching parameters (k1, x0) forward.
        let mut p = g.params;
        // Needed endpoint height of G: G(r) = G(x_mid)/sin θ, attainable only
        // when the third-piece amplitude clears it with margin.
        let g_mid = g.eval(x_mid).map(|v| v.0)?;
        let g_target = g_mid / sin_theta;
        if g_target > 0.98 * g.c2 {
            continue;
        }
        // r solves G(r) = g_target on the increasing stretch (2ε, x0).
        let r = match bisect(|x| g.eval_piece(2, x).0 - g_target, 2.0 * p.epsilon, p.x0, 1e-13) {
            Ok(r) => r,
            Err(_) => continue,
        };
        p.r = r;
        let g_r = g.eval_piece(2, r).0;
        // Parametrize the symmetric arc by its Clairaut constant c: launch at
        // angle π - arcsin(c/G(r)) and integrate until x returns to r.  This
        // sidesteps the boundary-value multiplicity of tall arcs (a second
        // family crosses the cap summit).
        let shoot_arc = |c: f64, fine: bool| -> Option<(f64, QuadrangleSpec)> {
            if !(c > 0.0 && c < g_r) {
                return None;
            }
            let opts = if fine { ShootOpts::default() } else { ShootOpts::coarse() };
            let phi = std::f64::consts::PI - (c / g_r).asin();
            let gv = g_r;
            let st = [r, 0.0, phi.cos(), phi.sin() / gv];
            let gamma = integrate_geodesic(&g, st, Stop::XReturn { x: r, min_s: 0.0, max_len: 5e3 }, opts);
            if gamma.truncated {
                return None;
            }
            let quad = QuadrangleSpec::new(p, gamma);
            let total = total_curvature(&g, &quad);
            Some((total, quad))
        };
        // The exact corner-angle geometry gives c* = G(r)·sin θ; a short
        // secant run absorbs the quadrature/integration residual.
        let mut c = g_r * sin_theta;
        let mut pair = match shoot_arc(c, false) {
            Some(v) => v,
            None => continue,
        };
        for _ in 0..30 {
            let f0 = pair.0 - target;
            if f0.abs() < 2e-8 {
                break;
            }
            let dc = (f0.abs() * 1e-3).clamp(1e-12, 1e-4);
            let f1 = match shoot_arc(c + dc, false) {
                Some((t, _)) => t - target,
                None => break,
            };
            if (f1 - f0).abs() < 1e-300 {
                break;
            }
            c -= f0 * dc / (f1 - f0);
            pair = match shoot_arc(c, false) {
                Some(v) => v,
                None => break,
            };
        }
        // Fine pass at the tuned c, with one more secant polish.
        let (mut total, mut quad) = match shoot_arc(c, true) {
            Some(v) => v,
            None => continue,
        };
        for _ in 0..4 {
            let f0 = total - target;
            if f0.abs() < 1e-8 {
                break;
            }
            let dc = (f0.abs() * 1e-3).clamp(1e-13, 1e-5);
            let f1 = match shoot_arc(c + dc, true) {
                Some((t, _)) => t - target,
                None => break,
            };
            if (f1 - f0).abs() < 1e-300 {
                break;
            }
            c -= f0 * dc / (f1 - f0);
            match shoot_arc(c, true) {
                Some((t, q)) => {
                    total = t;
                    quad = q;
                }
                None => break,
            }
        }
        let mut p_final = quad.params;
        p_final.big_delta = quad.gamma.end().y - quad.gamma.start().y;
        let quad = QuadrangleSpec { params: p_final, ..quad };
        if (total - target).abs() < 1e-6 && quad.closest_approach < p.mu1 {
            let g_final = ProfileG::solve(p_final)?;
            let angles = corner_angles(&g_final, &quad);
            return Ok(GaussBonnetOutcome::Feasible {
                profile: g_final,
                quad,
                total,
                corner_angles: angles,
            });
        }
    }
    Ok(GaussBonnetOutcome::Infeasible(InfeasibilityReport {
        branch: Branch::Shifted,
        target,
        lower_bound_rate: params.nu.sinh(),
        samples: Vec::new(),
        message: "shifted branch: k2 ladder exhausted without reaching the target".into(),
    }))
}

fn k2_ladder(start: f64) -> Vec<f64> {
    let mut ladder = vec![start];
    for k in [25.0, 50.0, 100.0, 200.0, 400.0] {
        if k > start {
            ladder.push(k);
        }
    }
    ladder
}

/// Edge classification inside the assembled polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Γ₁: the union of {x=-δ} segments.
    LeftLine,
    /// Γ₂: the top cut edge (γ turning point level).
    TopCut,
    /// Γ_m: the bottom cut edge.
    BottomCut,
    /// A full copy of γ.
    GammaFull,
    /// Half of γ (adjacent to a cut edge).
    GammaHalf,
}

#[derive(Debug, Clone)]
pub struct PolygonEdge {
    /// 1-based label Γ_i, clockwise from the left edge.
    pub label: usize,
    pub kind: EdgeKind,
    /// Polyline in global (x, y) coordinates, ordered clockwise.
    pub points: Vec<(f64, f64)>,
    /// Coordinate-velocity tangents at the polyline nodes (clockwise).
    pub tangents: Vec<(f64, f64)>,
    /// Cumulative arclength at the nodes.
    pub arclen: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PolygonVertex {
    /// F_i sits between Γ_i and Γ_{i+1} (cyclically).
    pub label: usize,
    pub position: (f64, f64),
    /// Measured interior angle; target π/2.
    pub angle: f64,
}

/// The polygon D: Π₋ on top, m-5 copies of Π, Π₊ at the bottom.
#[derive(Debug, Clone)]
pub struct PolygonD {
    pub m: usize,
    pub height: f64,
    /// x-coordinate of the γ turning point (the cut edges end here).
    pub x_turn: f64,
    pub edges: Vec<PolygonEdge>,
    pub vertices: Vec<PolygonVertex>,
    pub params: MetricParams,
}

impl PolygonD {
    pub fn edge(&self, label: usize) -> Option<&PolygonEdge> {
        self.edges.iter().find(|e| e.label == label)
    }

    /// Right boundary x at height y.
    pub fn right_x(&self, y: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for e in &self.edges {
            if !matches!(e.kind, EdgeKind::GammaFull | EdgeKind::GammaHalf) {
                continue;
            }
            let (ylo, yhi) = e
                .points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
            if y < ylo - 1e-12 || y > yhi + 1e-12 {
                continue;
            }
            // γ pieces are monotone in y; interpolate on the polyline.
            for w in e.points.windows(2) {
                let (a, b) = (w[0], w[1]);
                if (a.1 - y).abs() <= 1e-12 {
                    best = best.max(a.0);
                } else if (b.1 - y).abs() <= 1e-12 {
                    best = best.max(b.0);
                } else if (a.1 - y).signum() != (b.1 - y).signum() {
                    let t = (y - a.1) / (b.1 - a.1);
                    best = best.max(a.0 + (b.0 - a.0) * t);
                }
            }
        }
        best
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= -self.params.delta && p.1 >= 0.0 && p.1 <= self.height && p.0 <= self.right_x(p.1)
    }

    /// CSV export of edge polylines and vertex angles for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("record,label,x,y,angle\n");
        for e in &self.edges {
            for p in &e.points {
                out.push_str(&format!("edge,{},{:.12},{:.12},\n", e.label, p.0, p.1));
            }
        }
        for v in &self.vertices {
            out.push_str(&format!(
                "vertex,{},{:.12},{:.12},{:.12}\n",
                v.label, v.position.0, v.position.1, v.angle
            ));
        }
        out
    }
}

/// Split γ at its turning height and return (lower half, upper half), each
/// ordered with increasing y.
fn split_gamma(g: &ProfileG, q: &QuadrangleSpec) -> (Vec<PathSample>, Vec<PathSample>) {
    let y0 = q.gamma.start().y;
    let y1 = q.gamma.end().y;
    let y_mid = 0.5 * (y0 + y1);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for s in &q.gamma.samples {
        if s.y <= y_mid {
            lower.push(*s);
        } else {
            upper.push(*s);
        }
    }
    // Insert the exact turning node on both halves; the tangent there is
    // vertical with y' = c/G² (unit speed).
    let x_turn = q.gamma.x_at_y(y_mid);
    let gv = eval_clamped(g, x_turn).0;
    let node = PathSample { s: 0.0, x: x_turn, y: y_mid, vx: 0.0, vy: q.gamma.clairaut_constant / (gv * gv) };
    lower.push(node);
    upper.insert(0, node);
    (lower, upper)
}

fn samples_to_edge(label: usize, kind: EdgeKind, samples: &[(f64, f64, f64, f64)], g: &ProfileG) -> PolygonEdge {
    let mut arclen = vec![0.0];
    for w in samples.windows(2) {
        let gv = eval_clamped(g, 0.5 * (w[0].0 + w[1].0)).0;
        let dx = w[1].0 - w[0].0;
        let dy = w[1].1 - w[0].1;
        arclen.push(arclen.last().unwrap() + (dx * dx + gv * gv * dy * dy).sqrt());
    }
    PolygonEdge {
        label,
        kind,
        points: samples.iter().map(|s| (s.0, s.1)).collect(),
        tangents: samples.iter().map(|s| (s.2, s.3)).collect(),
        arclen,
    }
}

/// Assemble the polygon D from the tuned quadrangle: Π₋ (cut edge up) on
/// top, m-5 full copies of Π below it, Π₊ (cut edge down) at the bottom.
pub fn assemble_polygon(g: &ProfileG, q: &QuadrangleSpec, m: usize) -> Result<PolygonD, QuadError> {
    if m < 5 {
        return Err(QuadError::TooFewEdges(m));
    }
    let delta_big = q.gamma.end().y - q.gamma.start().y;
    let height = (m as f64 - 4.0) * delta_big;
    let (lower, upper) = split_gamma(g, q);
    let x_turn = lower.last().unwrap().x;
    let r = q.gamma.start().x;
    let y_base = q.gamma.start().y;

    // Clockwise node ordering helper: γ pieces traversed downward.
    let descending = |half: &[PathSample], shift: f64| -> Vec<(f64, f64, f64, f64)> {
        half.iter()
            .rev()
            .map(|s| (s.x, s.y - y_base + shift, -s.vx, -s.vy))
            .collect()
    };

    let mut edges = Vec::new();
    let delta = g.params.delta;
    // Γ₁: left edge, traversed upward (clockwise around D).
    edges.push(samples_to_edge(
        1,
        EdgeKind::LeftLine,
        &[(-delta, 0.0, 0.0, 1.0), (-delta, height, 0.0, 1.0)],
        g,
    ));
    // Γ₂: top cut edge, left to right.
    edges.push(samples_to_edge(
        2,
        EdgeKind::TopCut,
        &[(-delta, height, 1.0, 0.0), (x_turn, height, 1.0, 0.0)],
        g,
    ));
    // Γ₃: upper half of γ, from the turning point down to (r, height-Δ/2).
    // Π₋ is the lower half of Π placed cut-side-up: global y = y - Δ/2 + H.
    let mut label = 3;
    edges.push(samples_to_edge(
        label,
        EdgeKind::GammaHalf,
        &descending(&lower, height - 0.5 * delta_big + 0.0),
        g,
    ));
    label += 1;
    // m-5 full copies of γ descending.
    for j in 0..m - 5 {
        let shift = height - 0.5 * delta_big - (j as f64 + 1.0) * delta_big;
        let nodes: Vec<(f64, f64, f64, f64)> = q
            .gamma
            .samples
            .iter()
            .rev()
            .map(|s| (s.x, s.y - y_base + shift, -s.vx, -s.vy))
            .collect();
        edges.push(samples_to_edge(label, EdgeKind::GammaFull, &nodes, g));
        label += 1;
    }
    // Lower half-γ: Π₊ is the upper half placed cut-side-down:
    // global y = y - Δ/2; runs from (r, Δ/2) down to the turning point at y=0.
    edges.push(samples_to_edge(label, EdgeKind::GammaHalf, &descending(&upper, -0.5 * delta_big), g));
    label += 1;
    // Γ_m: bottom edge, right to left.
    edges.push(samples_to_edge(
        label,
        EdgeKind::BottomCut,
        &[(x_turn, 0.0, -1.0, 0.0), (-delta, 0.0, -1.0, 0.0)],
        g,
    ));
    debug_assert_eq!(label, m);
    let _ = r;

    // Vertices F_i between Γ_i and Γ_{i+1}, with measured interior angles.
    let mut vertices = Vec::new();
    for i in 0..m {
        let e1 = &edges[i];
        let e2 = &edges[(i + 1) % m];
        let p1 = *e1.points.last().unwrap();
        // Edge directions away from the vertex.
        let t_in = e1.tangents.last().unwrap();
        let away1 = (-t_in.0, -t_in.1);
        let away2 = *e2.tangents.first().unwrap();
        let angle = angle_between(g, p1, away1, away2);
        vertices.push(PolygonVertex { label: i + 1, position: p1, angle });
    }

    Ok(PolygonD { m, height, x_turn, edges, vertices, params: q.params })
}

/// A Fermi chart on a tubular neighborhood of one polygon edge.
#[derive(Debug, Clone)]
pub struct FermiChart {
    pub edge: usize,
    pub kind: EdgeKind,
    pub tube_radius: f64,
    profile: ProfileG,
    points: Vec<(f64, f64)>,
    arclen: Vec<f64>,
    tangents: Vec<(f64, f64)>,
}

/// Chart data at a query point.
#[derive(Debug, Clone, Copy)]
pub struct ChartPoint {
    /// Distance to the edge.
    pub rho: f64,
    /// Edge parameter of the foot (arclength, except Γ₁ where it is y).
    pub psi: f64,
    /// Transverse profile h(ρ) for the edge's ambient piece.
    pub h: f64,
    pub h_rho: f64,
    pub h_rhorho: f64,
    pub foot: (f64, f64),
    /// Angle of the inward normal (foot → query direction) at the query
    /// point, in the orthonormal frame (∂x, ∂y/G).
    pub normal_angle: f64,
    /// Profile piece containing the query point.
    pub piece: usize,
}

/// Build the Fermi chart of edge Γ_i.
pub fn fermi_chart(g: &ProfileG, d: &PolygonD, i: usize) -> Result<FermiChart, QuadError> {
    let edge = d.edge(i).ok_or(QuadError::BadEdge(i, d.m))?;
    let p = &d.params;
    // Tube radius: μ (2πε for Γ₁), capped at 0.9× the focal radius of the
    // ambient spherical piece.
    let base = if i == 1 { 2.0 * std::f64::consts::PI * p.epsilon } else { p.mu };
    let focal = match edge.kind {
        EdgeKind::LeftLine => 0.9 * std::f64::consts::FRAC_PI_2 * p.k1,
        EdgeKind::GammaFull | EdgeKind::GammaHalf => 0.9 * std::f64::consts::FRAC_PI_2 * p.k2,
        // The cut edges cross all three pieces; the k1 cap is the binding one.
        EdgeKind::TopCut | EdgeKind::BottomCut => 0.9 * std::f64::consts::FRAC_PI_2 * p.k1.min(p.k2),
    };
    Ok(FermiChart {
        edge: i,
        kind: edge.kind,
        tube_radius: base.min(focal),
        profile: g.clone(),
        points: edge.points.clone(),
        arclen: edge.arclen.clone(),
        tangents: edge.tangents.clone(),
    })
}

impl FermiChart {
    fn h_for(&self, piece: usize, rho: f64, scale: f64) -> (f64, f64, f64) {
        let p = &self.profile.params;
        match piece {
            0 => {
                let t = rho / p.k1;
                (scale * t.cos(), -scale / p.k1 * t.sin(), -scale / (p.k1 * p.k1) * t.cos())
            }
            1 => (scale * rho.cosh(), scale * rho.sinh(), scale * rho.cosh()),
            _ => {
                let t = rho / p.k2;
                (scale * t.cos(), -scale / p.k2 * t.sin(), -scale / (p.k2 * p.k2) * t.cos())
            }
        }
    }

    fn node_bracket(&self, s: f64) -> (usize, usize, f64) {
        let n = self.points.len();
        let s = s.clamp(0.0, *self.arclen.last().unwrap());
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.arclen[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = (s - self.arclen[lo]) / (self.arclen[hi] - self.arclen[lo]).max(1e-300);
        (lo, hi, t)
    }

    fn edge_point(&self, s: f64) -> (f64, f64) {
        let (lo, hi, t) = self.node_bracket(s);
        let a = self.points[lo];
        let b = self.points[hi];
        (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
    }

    /// Point and unit tangent angle (orthonormal frame) at edge arclength s.
    fn edge_state(&self, s: f64) -> ((f64, f64), f64) {
        let (lo, hi, t) = self.node_bracket(s);
        let a = self.points[lo];
        let b = self.points[hi];
        let pt = (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
        let ta = self.tangents[lo];
        let tb = self.tangents[hi];
        let v = (ta.0 + (tb.0 - ta.0) * t, ta.1 + (tb.1 - ta.1) * t);
        let gv = eval_clamped(&self.profile, pt.0).0;
        (pt, (gv * v.1).atan2(v.0))
    }

    /// Endpoint of the normal geodesic of length rho from edge parameter s,
    /// on the given side (+1 / -1 of the tangent direction).
    /// Endpoint of the normal geodesic, in coordinates translated by
    /// `y_origin`.  The metric is y-translation invariant, so shooting near
    /// y = 0 keeps float rounding independent of |y|.
    fn normal_end(&self, s: f64, rho: f64, side: f64, y_origin: f64) -> PathSample {
        let (foot, ang) = self.edge_state(s);
        let path = shoot_geodesic_opts(
            &self.profile,
            (foot.0, foot.1 - y_origin),
            ang + side * std::f64::consts::FRAC_PI_2,
            rho.max(0.0),
            ShootOpts { tol: 1e-11, h_max: 5e-3 },
        );
        path.end()
    }

    /// Evaluate the chart at a query point within the declared tube.
    pub fn query(&self, p: (f64, f64)) -> Result<ChartPoint, QuadError> {
        self.query_radius(p, self.tube_radius)
    }

    /// Evaluate the chart with an explicit radius cap (the fiber profiles
    /// need the foot map out to their sine breakpoint, past the tube).
    pub fn query_radius(&self, p: (f64, f64), radius: f64) -> Result<ChartPoint, QuadError> {
        let g = &self.profile;
        let piece = g.piece_of(p.0);
        if let EdgeKind::LeftLine = self.kind {
            // rho_1 = x + delta, psi_1 = y exactly; in these coordinates the
            // transverse profile is G itself.
            let rho = p.0 + g.params.delta;
            if rho > radius {
                return Err(QuadError::OutsideTube(rho, radius));
            }
            let (gv, gd, gdd) = eval_clamped(g, p.0);
            return Ok(ChartPoint {
                rho,
                psi: p.1,
                h: gv,
                h_rho: gd,
                h_rhorho: gdd,
                foot: (-g.params.delta, p.1),
                normal_angle: 0.0,
                piece,
            });
        }
        let total = *self.arclen.last().unwrap();
        // Nearest-node scan with a metric lower bound (G >= cosh nu), used
        // both as an outside-tube prefilter and as the Newton seed.
        let g_min = g.params.nu.cosh();
        let mut best_i = 0usize;
        let mut best_v = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let dx = p.0 - q.0;
            let dy = g_min * (p.1 - q.1);
            let v = (dx * dx + dy * dy).sqrt();
            if v < best_v {
                best_v = v;
                best_i = i;
            }
        }
        let spacing = if self.points.len() > 1 {
            total / (self.points.len() - 1) as f64
        } else {
            0.0
        };
        if best_v - spacing > radius {
            return Err(QuadError::OutsideTube(best_v - spacing, radius));
        }
        // Uniqueness check: a second local minimum well separated along the
        // edge but at nearly the same distance means an ambiguous foot.
        let sep = (self.points.len() / 16).max(8);
        let mut second_v = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            if (i as isize - best_i as isize).unsigned_abs() < sep {
                continue;
            }
            let dx = p.0 - q.0;
            let dy = g_min * (p.1 - q.1);
            second_v = second_v.min((dx * dx + dy * dy).sqrt());
        }
        if second_v.is_finite() && (second_v - best_v).abs() < 1e-6 && best_v < radius {
            return Err(QuadError::AmbiguousFoot(self.edge));
        }
        // Newton on the normal exponential map: unknowns (s, rho).
        let gq = eval_clamped(g, p.0).0;
        let mut s = self.arclen[best_i];
        let mut rho = best_v.max(1e-9);
        let (foot0, ang0) = self.edge_state(s);
        let w = (p.0 - foot0.0, p.1 - foot0.1);
        let gv0 = eval_clamped(g, foot0.0).0;
        let cross = ang0.cos() * gv0 * w.1 - ang0.sin() * (w.0);
        let mut side = if cross >= 0.0 { 1.0 } else { -1.0 };
        let res = |s: f64, rho: f64, side: f64| -> (f64, f64) {
            let e = self.normal_end(s, rho, side, p.1);
            (e.x - p.0, gq * e.y)
        };
        let mut converged = false;
        'sides: for _attempt in 0..2 {
            s = self.arclen[best_i];
            rho = best_v.max(1e-9);
            let mut prev_norm = f64::INFINITY;
            let mut best = (s, rho, f64::INFINITY);
            for _ in 0..40 {
                let (f1, f2) = res(s, rho, side);
                let norm = (f1 * f1 + f2 * f2).sqrt();
                if norm < best.2 {
                    best = (s, rho, norm);
                }
                if norm < 1e-13 {
                    break;
                }
                if !norm.is_finite() || norm > 4.0 * prev_norm {
                    break;
                }
                prev_norm = prev_norm.min(norm);
                // Step inward when clamped at an edge endpoint, otherwise
                // the Jacobian column in s degenerates.
                let ds = if s + 1e-7 <= total { 1e-7 } else { -1e-7 };
                let dr = 1e-7;
                let (f1s, f2s) = res(s + ds, rho, side);
                let (f1r, f2r) = res(s, rho + dr, side);
                let a = (f1s - f1) / ds;
                let b = (f1r - f1) / dr;
                let c = (f2s - f2) / ds;
                let d = (f2r - f2) / dr;
                let det = a * d - b * c;
                if det.abs() < 1e-300 {
                    break;
                }
                let step_s = (d * f1 - b * f2) / det;
                let step_r = (-c * f1 + a * f2) / det;
                s = (s - step_s).clamp(0.0, total);
                rho = (rho - step_r).clamp(0.0, radius * 1.5 + 10.0 * spacing);
            }
            if best.2 < 1e-10 {
                s = best.0;
                rho = best.1;
                converged = true;
                break 'sides;
            }
            side = -side;
        }
        if !converged {
            return Err(QuadError::OutsideTube(f64::INFINITY, radius));
        }
        if rho > radius {
            return Err(QuadError::OutsideTube(rho, radius));
        }
        let end = self.normal_end(s, rho, side, p.1);
        let normal_angle = end.angle(g);
        let (h, h_rho, h_rhorho) = self.h_for(piece, rho, 1.0);
        Ok(ChartPoint {
            rho,
            psi: s,
            h,
            h_rho,
            h_rhorho,
            foot: self.edge_point(s),
            normal_angle,
            piece,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::MetricParams;

    fn profile(branch: Branch) -> ProfileG {
        ProfileG::solve(MetricParams::reference(branch)).unwrap()
    }

    fn unit_speed_max_err(g: &ProfileG, path: &GeodesicPath) -> f64 {
        path.samples
            .iter()
            .map(|s| {
                let gv = eval_clamped(g, s.x).0;
                ((s.vx * s.vx + gv * gv * s.vy * s.vy).sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn vertical_shot_is_straight() {
        let g = profile(Branch::Shifted);
        let path = shoot_geodesic(&g, (0.05, 0.3), 0.0, 0.4);
        for s in &path.samples {
            assert!((s.y - 0.3).abs() < 1e-12);
            assert!(s.vy.abs() < 1e-12);
        }
        assert!((path.end().x - 0.45).abs() < 1e-9);
    }

    #[test]
    fn equator_is_a_geodesic() {
        let g = profile(Branch::Shifted);
        let path = shoot_geodesic(&g, (-g.params.delta, 0.0), std::f64::consts::FRAC_PI_2, 1.0);
        for s in &path.samples {
            assert!((s.x + g.params.delta).abs() < 1e-9, "x = {}", s.x);
        }
    }

    #[test]
    fn clairaut_constant_conserved() {
        let g = profile(Branch::Shifted);
        // Launch inside the hyperbolic band, length 1 crossing breakpoints.
        let path = shoot_geodesic(&g, (0.15, 0.0), 2.2, 1.0);
        let c0 = path.clairaut_constant;
        let mut drift = 0.0f64;
        for s in &path.samples {
            let gv = eval_clamped(&g, s.x).0;
            drift = drift.max((gv * gv * s.vy - c0).abs());
        }
        assert!(drift < 1e-8, "drift = {drift:e}");
        assert!(unit_speed_max_err(&g, &path) < 1e-8);
    }

    #[test]
    fn shooting_y_translation_invariance() {
        let g = profile(Branch::Shifted);
        let a = shoot_geodesic(&g, (0.1, 0.0), 1.0, 0.7);
        let b = shoot_geodesic(&g, (0.1, 0.5), 1.0, 0.7);
        assert!((a.end().x - b.end().x).abs() < 1e-9);
        assert!((a.end().y + 0.5 - b.end().y).abs() < 1e-9);
    }

    #[test]
    fn shooting_time_reversal() {
        let g = profile(Branch::Shifted);
        let fwd = shoot_geodesic(&g, (0.1, 0.0), 1.1, 0.6);
        let e = fwd.end();
        let back_angle = e.angle(&g) + std::f64::consts::PI;
        let back = shoot_geodesic(&g, (e.x, e.y), back_angle, 0.6);
        assert!((back.end().x - 0.1).abs() < 1e-9);
        assert!((back.end().y - 0.0).abs() < 1e-9);
    }

    #[test]
    fn connect_horizontal_trivial() {
        let g = profile(Branch::Shifted);
        let path = connect_geodesic(&g, (0.0, 0.2), (0.3, 0.2)).unwrap();
        assert!((path.end().x - 0.3).abs() < 1e-9);
        for s in &path.samples {
            assert!((s.y - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn connect_symmetric_arc_and_reversal() {
        let g = profile(Branch::Shifted);
        let p = (0.26, 0.0);
        let q = (0.26, 0.4);
        let path = connect_geodesic(&g, p, q).unwrap();
        assert!((path.end().x - q.0).abs() < 1e-9);
        // Symmetry about y = Δ/2: turning point at mid height.
        let x_mid = path.x_at_y(0.2);
        assert!((x_mid - path.min_x()).abs() < 1e-8);
        // Swapped endpoints give the reversed path.
        let back = connect_geodesic(&g, q, p).unwrap();
        assert!((back.end().x - p.0).abs() < 1e-9);
        assert!((back.start().x - q.0).abs() < 1e-12);
        let mid_fwd = path.x_at_y(0.13);
        let mid_back = back.x_at_y(0.13);
        assert!((mid_fwd - mid_back).abs() < 1e-8);
    }

    #[test]
    fn strip_identity_closed_form() {
        for branch in [Branch::Principal, Branch::Shifted] {
            let g = profile(branch);
            let cases = [(-0.1, 0.05, 0.7), (0.0, 0.3, 1.3), (0.12, 0.19, 0.5), (-0.15, 1.0, 2.0)];
            for (a, b, h) in cases {
                let quad = rect_total_curvature(&g, a, b, h);
                let closed = flux_smooth_diff(&g, a, b) * h;
                assert!((quad - closed).abs() < 1e-8, "branch {branch:?} [{a},{b}]: {quad} vs {closed}");
            }
        }
    }

    fn flux_smooth_diff(g: &ProfileG, a: f64, b: f64) -> f64 {
        super::flux_smooth(g, b) - super::flux_smooth(g, a)
    }

    #[test]
    fn rectangle_examples_match_paper_values() {
        let g = profile(Branch::Shifted);
        let p = &g.params;
        let h = 0.9;
        // [ε, 2ε] × [0, h] → -h (sinh(ε+ν) - sinh ν).
        let v = rect_total_curvature(&g, p.epsilon, 2.0 * p.epsilon, h);
        let expect = -h * ((p.epsilon + p.nu).sinh() - p.nu.sinh());
        assert!((v - expect).abs() < 1e-8);
        // [-δ, ε] × [0, h] → +h sinh(ε+ν).
        let v = rect_total_curvature(&g, -p.delta, p.epsilon, h);
        let expect = h * (p.epsilon + p.nu).sinh();
        assert!((v - expect).abs() < 1e-8);
    }

    #[test]
    fn gauss_bonnet_shifted_feasible() {
        let params = MetricParams::reference(Branch::Shifted);
        let out = solve_gauss_bonnet(params, -std::f64::consts::FRAC_PI_2).unwrap();
        match out {
            GaussBonnetOutcome::Feasible { quad, total, corner_angles, .. } => {
                assert!((total + std::f64::consts::FRAC_PI_2).abs() < 1e-6, "total = {total}");
                let target = std::f64::consts::FRAC_PI_4;
                assert!((corner_angles.0 - target).abs() < 1e-3, "θ₀ = {}", corner_angles.0);
                assert!((corner_angles.1 - target).abs() < 1e-3, "θ₁ = {}", corner_angles.1);
                assert!((corner_angles.0 - corner_angles.1).abs() < 1e-6);
                assert!(quad.closest_approach < params.mu1);
                assert!(quad.closest_approach > 0.0);
            }
            GaussBonnetOutcome::Infeasible(rep) => panic!("expected feasible: {}", rep.message),
        }
    }

    #[test]
    fn gauss_bonnet_principal_infeasible() {
        let params = MetricParams::reference(Branch::Principal);
        let out = solve_gauss_bonnet(params, -std::f64::consts::FRAC_PI_2).unwrap();
        match out {
            GaussBonnetOutcome::Infeasible(rep) => {
                assert!((rep.lower_bound_rate - params.nu.sinh()).abs() < 1e-15);
                assert!(!rep.samples.is_empty());
                for (delta_big, total, bound) in &rep.samples {
                    assert!(total + 1e-6 >= *bound, "Δ={delta_big}: total {total} < bound {bound}");
                    assert!(*total > 0.0);
                }
            }
            GaussBonnetOutcome::Feasible { .. } => panic!("principal branch must be infeasible"),
        }
    }

    #[test]
    fn gauss_bonnet_consistency_angle_defect() {
        // For an untuned quadrangle, ∫K dA must still equal 2θ - π.
        let g = profile(Branch::Shifted);
        let p = MetricParams::reference(Branch::Shifted);
        let gamma = connect_geodesic(&g, (0.26, 0.0), (0.26, 0.5)).unwrap();
        let quad = QuadrangleSpec::new(p, gamma);
        let total = total_curvature(&g, &quad);
        let (a0, a1) = corner_angles(&g, &quad);
        assert!((total - (a0 + a1 - std::f64::consts::PI)).abs() < 1e-5, "total {total} vs angles {a0} {a1}");
    }

    fn solved_polygon(m: usize) -> (ProfileG, QuadrangleSpec, PolygonD) {
        let params = MetricParams::reference(Branch::Shifted);
        match solve_gauss_bonnet(params, -std::f64::consts::FRAC_PI_2).unwrap() {
            GaussBonnetOutcome::Feasible { profile, quad, .. } => {
                let d = assemble_polygon(&profile, &quad, m).unwrap();
                (profile, quad, d)
            }
            GaussBonnetOutcome::Infeasible(rep) => panic!("{}", rep.message),
        }
    }

    #[test]
    fn polygon_edge_counts_and_angles() {
        let (_, quad, d5) = solved_polygon(5);
        assert_eq!(d5.edges.len(), 5);
        assert_eq!(d5.vertices.len(), 5);
        let delta_big = quad.gamma.end().y - quad.gamma.start().y;
        assert!((d5.height - delta_big).abs() < 1e-9);
        for v in &d5.vertices {
            assert!(
                (v.angle - std::f64::consts::FRAC_PI_2).abs() < 2e-3,
                "vertex {} angle {}",
                v.label,
                v.angle
            );
        }
        let (_, _, d7) = solved_polygon(7);
        assert_eq!(d7.edges.len(), 7);
        assert_eq!(d7.vertices.len(), 7);
        assert!(assemble_polygon(&d7_profile(), &quad, 4).is_err());
    }

    fn d7_profile() -> ProfileG {
        profile(Branch::Shifted)
    }

    #[test]
    fn fermi_chart_left_edge_exact() {
        let (g, _, d) = solved_polygon(5);
        let chart = fermi_chart(&g, &d, 1).unwrap();
        let p = (0.05, 0.3 * d.height);
        let cp = chart.query(p).unwrap();
        assert!((cp.rho - (p.0 + g.params.delta)).abs() < 1e-14);
        assert!((cp.psi - p.1).abs() < 1e-14);
        // h = G on this chart.
        assert!((cp.h - g.g(p.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fermi_chart_bottom_edge() {
        let (g, _, d) = solved_polygon(5);
        let chart = fermi_chart(&g, &d, 5).unwrap();
        // Point straight above the bottom edge, inside the hyperbolic band.
        let p = (0.15, 0.02);
        let cp = chart.query(p).unwrap();
        assert!(cp.rho > 0.0 && cp.rho < d.params.mu);
        // The foot must realize the distance: perturbing the foot along the
        // edge cannot give a shorter connection.
        for ds in [-0.01, 0.01] {
            let foot2 = (cp.foot.0 + ds, 0.0);
            let alt = connect_geodesic(&g, p, foot2).unwrap().length();
            assert!(alt >= cp.rho - 1e-10);
        }
        // Hyperbolic ambient piece: h = cosh ρ.
        assert_eq!(cp.piece, 1);
        assert!((cp.h - cp.rho.cosh()).abs() < 1e-12);
    }

    #[test]
    fn fermi_chart_metric_pullback_hyperbolic() {
        // dρ² + cosh²ρ dψ² must reproduce ds₀² along the normal exponential
        // of the bottom edge: move the foot by dψ and check the displacement
        // of the endpoint of the normal geodesic has length cosh(ρ)·dψ.
        let (g, _, d) = solved_polygon(5);
        let chart = fermi_chart(&g, &d, 5).unwrap();
        let p = (0.15, 0.02);
        let cp = chart.query(p).unwrap();
        let dpsi = 1e-3;
        // Shoot normals of length ρ from two nearby feet.
        let up = std::f64::consts::FRAC_PI_2;
        let e1 = shoot_geodesic(&g, cp.foot, up, cp.rho).end();
        let e2 = shoot_geodesic(&g, (cp.foot.0 + dpsi, cp.foot.1), up, cp.rho).end();
        let gv = g.g(0.5 * (e1.x + e2.x)).unwrap();
        let dist = ((e2.x - e1.x).powi(2) + gv * gv * (e2.y - e1.y).powi(2)).sqrt();
        assert!(
            (dist / dpsi - cp.rho.cosh()).abs() < 5e-6,
            "h = {} vs cosh ρ = {}",
            dist / dpsi,
            cp.rho.cosh()
        );
    }

    #[test]
    fn polygon_csv_export() {
        let (_, _, d) = solved_polygon(5);
        let csv = d.to_csv();
        assert!(csv.starts_with("record,label,x,y,angle\n"));
        assert_eq!(csv.lines().filter(|l| l.starts_with("vertex")).count(), 5);
    }
}
