//! One-dimensional mollification and the smoothing pipeline: convolve the
//! piecewise profiles with the standard bump kernel, re-solve the
//! Gauss-Bonnet target for the smoothed surface, rebuild the metric with the
//! smoothed fiber profiles and re-certify the Ricci lower bounds.
//!
//! Everything smoothed here is a function of one variable — the base profile
//! G(x) and the fiber profiles f(ρ).  Convolutions are evaluated by
//! Gauss-Legendre panels split at the source breakpoints.  Derivatives of a
//! mollified C¹ source are taken by moving them onto the source,
//! (∂f)_λ = ∂(f_λ): differentiating the kernel instead is available for
//! merely Lipschitz sources but loses a factor 1/λ per order to
//! cancellation.  Smoothed functions are tabulated as quintic Hermite
//! splines on a uniform grid finer than a twentieth of the radius.

use rayon::prelude::*;
use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;
use thiserror::Error;

use crate::curvature::{bounds_from_coefficients, kernel_to_f64, CurvatureError, GridSpec, Region};
use crate::lattice::KernelLattice;
use crate::metric_total::{MetricError, TotalMetric};
use crate::numerics::integrate;
use crate::profile::{ProfileError, ProfileG};
use crate::quadrangle::{
    assemble_polygon, solve_gauss_bonnet, GaussBonnetOutcome, InfeasibilityReport, PolygonD,
    QuadError,
};

#[derive(Debug, Error)]
pub enum MollifyError {
    #[error("smoothing radius {lambda:.3e} must stay below the extension margin {sigma:.3e}")]
    RadiusExceedsMargin { lambda: f64, sigma: f64 },
    #[error("domain [{0}, {1}] is empty after shrinking by the radius")]
    EmptyDomain(f64, f64),
    #[error("smoothing radius {0:.3e} reaches a quarter of the band width; the breakpoint neighborhoods would merge")]
    RadiusTooLarge(f64),
    #[error("empty smoothing ladder")]
    EmptyLadder,
    #[error("chart query failed for fiber {0} in the smoothed rebuild: {1}")]
    Chart(usize, QuadError),
    #[error("profile error: {0}")]
    Profile(#[from] ProfileError),
    #[error("metric error: {0}")]
    Metric(#[from] MetricError),
    #[error("curvature error: {0}")]
    Curvature(#[from] CurvatureError),
    #[error("quadrangle error: {0}")]
    Quad(#[from] QuadError),
}

/// Unnormalized unit bump exp(1/(u²−1)) on (−1, 1) and its derivatives.
/// Past |u| ≈ 1 the value underflows to zero long before the rational
/// prefactors overflow, so everything is cut at a safe margin.
fn bump(u: f64) -> f64 {
    let d = u * u - 1.0;
    if d > -1e-6 {
        return 0.0;
    }
    (1.0 / d).exp()
}

fn bump_d1(u: f64) -> f64 {
    let d = u * u - 1.0;
    if d > -1e-6 {
        return 0.0;
    }
    (1.0 / d).exp() * (-2.0 * u / (d * d))
}

fn bump_d2(u: f64) -> f64 {
    let d = u * u - 1.0;
    if d > -1e-6 {
        return 0.0;
    }
    let q = 4.0 * u * u / (d * d * d * d) - 2.0 / (d * d) + 8.0 * u * u / (d * d * d);
    (1.0 / d).exp() * q
}

fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| integrate(&bump, -1.0, 1.0, 1e-14))
}

/// Gauss-Legendre nodes and weights on [−1, 1] by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        xs[i] = -z;
        xs[n - 1 - i] = z;
        ws[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        ws[n - 1 - i] = ws[i];
    }
    (xs, ws)
}

fn gl24() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(24))
}

fn gl32() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(32))
}

/// The standard mollifier η_λ(t) = (C/λ)·exp(1/((t/λ)²−1)) on (−λ, λ), with
/// the normalization constant fixed numerically so that ∫η_λ = 1.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    pub lambda: f64,
    /// Normalization of the unit-radius bump.
    pub c: f64,
}

impl MollifierKernel {
    pub fn new(lambda: f64) -> MollifierKernel {
        assert!(lambda > 0.0, "mollifier radius must be positive");
        MollifierKernel { lambda, c: 1.0 / bump_mass() }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.c / self.lambda * bump(t / self.lambda)
    }

    pub fn d1(&self, t: f64) -> f64 {
        self.c / (self.lambda * self.lambda) * bump_d1(t / self.lambda)
    }

    pub fn d2(&self, t: f64) -> f64 {
        self.c / (self.lambda * self.lambda * self.lambda) * bump_d2(t / self.lambda)
    }

    /// ∫η_λ by adaptive quadrature, for checking the normalization.
    pub fn mass(&self) -> f64 {
        integrate(&|t| self.eval(t), -self.lambda, self.lambda, 1e-14)
    }

    /// Panels of the convolution support, split at the source breakpoints.
    fn panels(&self, breaks: &[f64], x: f64, width: f64) -> Vec<(f64, f64)> {
        let l = self.lambda;
        let mut cuts = vec![-l];
        for &b in breaks {
            let t = x - b;
            if t > -l && t < l {
                cuts.push(t);
            }
        }
        cuts.push(l);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-300 {
                continue;
            }
            let n = ((b - a) / width).ceil() as usize;
            let h = (b - a) / n as f64;
            for p in 0..n {
                out.push((a + (p as f64 + 0.5) * h, 0.5 * h));
            }
        }
        out
    }

    /// (η_λ^{(deriv)} * f)(x) with the derivative on the kernel.  Valid for
    /// merely Lipschitz sources, but each order loses a factor ~1/λ of
    /// precision to cancellation, so the second derivative gets the finer
    /// rule.
    pub fn convolve<F: Fn(f64) -> f64>(&self, f: &F, breaks: &[f64], x: f64, deriv: usize) -> f64 {
        let (width, (xs, ws)) = if deriv == 2 {
            (0.125 * self.lambda, gl32())
        } else {
            (0.25 * self.lambda, gl24())
        };
        let mut total = 0.0;
        for (mid, half) in self.panels(breaks, x, width) {
            let mut s = 0.0;
            for (&u, &wt) in xs.iter().zip(ws) {
                let t = mid + half * u;
                let k = match deriv {
                    0 => self.eval(t),
                    1 => self.d1(t),
                    _ => self.d2(t),
                };
                s += wt * k * f(x - t);
            }
            total += s * half;
        }
        total
    }

    /// (η_λ * f, η_λ * f′, η_λ * f″)(x) for a C¹ source with a piecewise
    /// jet: by derivative commutation these are the value and first two
    /// derivatives of f_λ, with no kernel-derivative cancellation.
    pub fn convolve_jet<F: Fn(f64) -> (f64, f64, f64)>(
        &self,
        f: &F,
        breaks: &[f64],
        x: f64,
    ) -> (f64, f64, f64) {
        let (xs, ws) = gl24();
        let mut total = (0.0, 0.0, 0.0);
        for (mid, half) in self.panels(breaks, x, 0.25 * self.lambda) {
            let mut s = (0.0, 0.0, 0.0);
            for (&u, &wt) in xs.iter().zip(ws) {
                let t = mid + half * u;
                let k = wt * self.eval(t);
                let (v, d1, d2) = f(x - t);
                s.0 += k * v;
                s.1 += k * d1;
                s.2 += k * d2;
            }
            total.0 += s.0 * half;
            total.1 += s.1 * half;
            total.2 += s.2 * half;
        }
        total
    }
}

/// A mollified one-variable function: value and two derivatives of the
/// convolution tabulated on a uniform grid with step λ/24 and interpolated
/// by a quintic Hermite spline (C², grid finer than λ/20).
#[derive(Debug, Clone)]
pub struct MollifiedFunction {
    pub lambda: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// (value, first derivative, second derivative) per node.
    pub nodes: Vec<(f64, f64, f64)>,
}

fn build_spline(
    lambda: f64,
    sigma: f64,
    a: f64,
    b: f64,
    node: impl Fn(f64) -> (f64, f64, f64) + Sync,
) -> Result<MollifiedFunction, MollifyError> {
    if !(lambda < sigma) {
        return Err(MollifyError::RadiusExceedsMargin { lambda, sigma });
    }
    let lo = a;
    let hi = b - lambda;
    if hi <= lo {
        return Err(MollifyError::EmptyDomain(lo, hi));
    }
    let n = (((hi - lo) / (lambda / 24.0)).ceil() as usize).max(1);
    let step = (hi - lo) / n as f64;
    let nodes: Vec<(f64, f64, f64)> = (0..=n)
        .into_par_iter()
        .map(|i| node(lo + i as f64 * step))
        .collect();
    Ok(MollifiedFunction { lambda, sigma, lo, hi, step, nodes })
}

/// Mollify a piecewise-smooth source known on [a−σ, b]: the convolution with
/// η_λ, tabulated on [a, b−λ].  The right margin is consumed by the kernel
/// support; the left one comes out of the caller-supplied extension.
/// Derivatives are taken on the kernel, so this works for any Lipschitz
/// source; prefer [`mollify_with_jet`] for C¹ sources and small radii.
pub fn mollify<F: Fn(f64) -> f64 + Sync>(
    f: &F,
    breaks: &[f64],
    a: f64,
    b: f64,
    lambda: f64,
    sigma: f64,
) -> Result<MollifiedFunction, MollifyError> {
    let kernel = MollifierKernel::new(lambda);
    build_spline(lambda, sigma, a, b, |x| {
        (
            kernel.convolve(f, breaks, x, 0),
            kernel.convolve(f, breaks, x, 1),
            kernel.convolve(f, breaks, x, 2),
        )
    })
}

/// Mollify a C¹ source given with its piecewise first and second
/// derivatives; the spline derivatives are the mollified source derivatives
/// (derivative commutation), which keeps full precision at any radius.
pub fn mollify_with_jet<F: Fn(f64) -> (f64, f64, f64) + Sync>(
    f: &F,
    breaks: &[f64],
    a: f64,
    b: f64,
    lambda: f64,
    sigma: f64,
) -> Result<MollifiedFunction, MollifyError> {
    let kernel = MollifierKernel::new(lambda);
    build_spline(lambda, sigma, a, b, |x| kernel.convolve_jet(f, breaks, x))
}

impl MollifiedFunction {
    fn locate(&self, x: f64) -> (usize, f64) {
        debug_assert!(
            x >= self.lo - 1e-9 && x <= self.hi + 1e-9,
            "query {x} outside mollified domain [{}, {}]",
            self.lo,
            self.hi
        );
        let xc = x.clamp(self.lo, self.hi);
        let mut i = ((xc - self.lo) / self.step) as usize;
        if i + 2 > self.nodes.len() {
            i = self.nodes.len() - 2;
        }
        let t = (xc - (self.lo + i as f64 * self.step)) / self.step;
        (i, t)
    }

    fn hermite(&self, x: f64, deriv: usize) -> f64 {
        let (i, t) = self.locate(x);
        let h = self.step;
        let (v0, d0, s0) = self.nodes[i];
        let (v1, d1, s1) = self.nodes[i + 1];
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        match deriv {
            0 => {
                let t5 = t4 * t;
                let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
                let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
                let h20 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
                let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
                let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
                let h21 = 0.5 * t3 - t4 + 0.5 * t5;
                v0 * h00 + v1 * h01 + h * (d0 * h10 + d1 * h11) + h * h * (s0 * h20 + s1 * h21)
            }
            1 => {
                let h00 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
                let h10 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
                let h20 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
                let h01 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
                let h11 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
                let h21 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
                (v0 * h00 + v1 * h01) / h + (d0 * h10 + d1 * h11) + h * (s0 * h20 + s1 * h21)
            }
            _ => {
                let h00 = -60.0 * t + 180.0 * t2 - 120.0 * t3;
                let h10 = -36.0 * t + 96.0 * t2 - 60.0 * t3;
                let h20 = 1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3;
                let h01 = 60.0 * t - 180.0 * t2 + 120.0 * t3;
                let h11 = -24.0 * t + 84.0 * t2 - 60.0 * t3;
                let h21 = 3.0 * t - 12.0 * t2 + 10.0 * t3;
                (v0 * h00 + v1 * h01) / (h * h) + (d0 * h10 + d1 * h11) / h + (s0 * h20 + s1 * h21)
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.hermite(x, 0)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.hermite(x, 1)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.hermite(x, 2)
    }

    /// True when every node and interval midpoint stays in [lower, upper] up
    /// to 1e−10 slack: a unit-mass nonnegative kernel cannot leave the range
    /// of its source.
    pub fn bounds_preserved(&self, lower: f64, upper: f64) -> bool {
        let slack = 1e-10;
        let ok = |v: f64| v >= lower - slack && v <= upper + slack;
        self.nodes.iter().all(|n| ok(n.0))
            && (0..self.nodes.len() - 1)
                .all(|i| ok(self.eval(self.lo + (i as f64 + 0.5) * self.step)))
    }
}

/// Sup-distance ladder of f_λ → f on a compact.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub lambdas: Vec<f64>,
    /// sup|f_λ − f| on the compact, one entry per rung.
    pub sup_distances: Vec<f64>,
    /// Curvature bad-set measures, filled by the profile pipeline.
    pub bad_set_measures: Vec<f64>,
    /// Distances decrease along the ladder within 10% slack.
    pub monotone: bool,
    /// Distances actually collapse; false for discontinuous sources, which
    /// converge almost everywhere but not uniformly.
    pub converging: bool,
}

/// Record sup|f_λ − f| on [a, b] over a decreasing λ ladder.  The source
/// must be defined on [a − max λ, b + max λ]; the sup is sampled uniformly
/// plus densely inside the breakpoint windows where it is attained.
pub fn convergence_report<F: Fn(f64) -> f64 + Sync>(
    f: &F,
    breaks: &[f64],
    a: f64,
    b: f64,
    ladder: &[f64],
) -> ConvergenceReport {
    let mut sups = Vec::with_capacity(ladder.len());
    for &lambda in ladder {
        let kernel = MollifierKernel::new(lambda);
        let mut xs: Vec<f64> = (0..=800).map(|i| a + (b - a) * i as f64 / 800.0).collect();
        for &brk in breaks {
            for i in 0..=160 {
                let x = brk - 2.0 * lambda + 4.0 * lambda * i as f64 / 160.0;
                if x > a && x < b {
                    xs.push(x);
                }
            }
        }
        let sup = xs
            .par_iter()
            .map(|&x| (kernel.convolve(f, breaks, x, 0) - f(x)).abs())
            .reduce(|| 0.0, f64::max);
        sups.push(sup);
    }
    let monotone = sups.windows(2).all(|w| w[1] <= 1.1 * w[0] + 1e-15);
    let converging = sups.first().is_none_or(|&s0| {
        let sl = *sups.last().unwrap();
        sl < 1e-11 || sl <= 0.25 * s0
    });
    ConvergenceReport {
        lambdas: ladder.to_vec(),
        sup_distances: sups,
        bad_set_measures: Vec::new(),
        monotone,
        converging,
    }
}

/// Piecewise profile jet extended past its domain ends by the boundary
/// pieces (the left extension of the smoothing pipeline's first step).
fn profile_jet(g: &ProfileG, x: f64) -> (f64, f64, f64) {
    let eps = g.params.epsilon;
    let piece = if x < eps {
        0
    } else if x < 2.0 * eps {
        1
    } else {
        2
    };
    g.eval_piece(piece, x)
}

fn piece_curvature(g: &ProfileG, piece: usize) -> f64 {
    let p = &g.params;
    [1.0 / (p.k1 * p.k1), -1.0, 1.0 / (p.k2 * p.k2)][piece]
}

/// Lebesgue measure of {x ∈ [−δ, β] : |K_λ(x) − K(x)| > 0.1} with
/// K_λ = −G_λ″/G_λ.  The bad set sits inside the λ-neighborhoods of the two
/// profile breakpoints: anywhere else the kernel sees a single smooth piece
/// and the curvature error is O(λ²).
pub fn curvature_in_measure(g: &ProfileG, lambda: f64, beta: f64) -> f64 {
    let a = -g.params.delta;
    let kernel = MollifierKernel::new(lambda);
    let breaks = g.breakpoints();
    let source = |x: f64| profile_jet(g, x);
    let bad = |x: f64| {
        let (gl, _, gdd) = kernel.convolve_jet(&source, &breaks, x);
        (-gdd / gl - piece_curvature(g, g.piece_of(x))).abs() > 0.1
    };
    let mut measure = 0.0;
    // Fine sweep of the breakpoint windows.
    for &brk in &breaks {
        let w_lo = (brk - 1.5 * lambda).max(a);
        let w_hi = (brk + 1.5 * lambda).min(beta);
        if w_hi <= w_lo {
            continue;
        }
        let n = 300usize;
        let h = (w_hi - w_lo) / n as f64;
        let cnt = (0..n)
            .into_par_iter()
            .filter(|&i| bad(w_lo + (i as f64 + 0.5) * h))
            .count();
        measure += cnt as f64 * h;
    }
    // Coarse confirmation sweep outside the windows.
    let n = 400usize;
    let h = (beta - a) / n as f64;
    let cnt = (0..n)
        .into_par_iter()
        .filter(|&i| {
            let x = a + (i as f64 + 0.5) * h;
            breaks.iter().all(|&brk| (x - brk).abs() > 1.5 * lambda) && bad(x)
        })
        .count();
    measure + cnt as f64 * h
}

/// Fiber profile jet extended through the origin and past its plateau:
/// s·sin(ρ/s) up to the sine peak, the constant s beyond it.  The extension
/// below ρ = 0 is the sine itself (odd), so the mollified profile still
/// vanishes at the edge.
fn fiber_jet(scale: f64, rho: f64) -> (f64, f64, f64) {
    if rho >= FRAC_PI_2 * scale {
        (scale, 0.0, 0.0)
    } else {
        let t = rho / scale;
        (scale * t.sin(), t.cos(), -t.sin() / scale)
    }
}

/// ∫_Π (K_λ ω_λ − K ω) for a fixed polygon: both area elements reduce to
/// −G″ dx dy, so the difference telescopes to boundary values of G_λ′ − G′
/// along the left edge and the right boundary x_γ(y), all at least λ away
/// from the breakpoints.  The y-integral uses a fixed Simpson grid: the
/// integrand is O(λ²) and inherits kinks from the sampled boundary curve, so
/// adaptive refinement would chase noise.
fn curvature_correction(g: &ProfileG, polygon: &PolygonD, lambda: f64) -> f64 {
    let kernel = MollifierKernel::new(lambda);
    let breaks = g.breakpoints();
    let source = |x: f64| profile_jet(g, x);
    let dg = |x: f64| kernel.convolve_jet(&source, &breaks, x).1 - g.eval_piece(g.piece_of(x), x).1;
    let height = polygon.height;
    let left = dg(-g.params.delta) * height;
    let n = 800usize; // Simpson panels
    let h = height / n as f64;
    let fy = |y: f64| dg(polygon.right_x(y));
    let mut right = fy(0.0) + fy(height);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        right += w * fy(i as f64 * h);
    }
    right *= h / 3.0;
    left - right
}

/// The rebuilt metric of the smoothing pipeline: Fermi charts of a piecewise
/// metric supply each fiber's distance and normal data, while the
/// coefficients fed to the curvature bounds come from the mollified base and
/// fiber profiles.
pub struct SmoothedMetric {
    /// Piecewise metric supplying charts and the polygon.
    pub charts: TotalMetric,
    /// Re-solved piecewise profile (exact far from the breakpoints).
    pub profile: ProfileG,
    pub lambda: f64,
    /// Mollified G near the caps.
    pub g: MollifiedFunction,
    /// Mollified fiber profile of scale 4ε.
    pub fiber1: MollifiedFunction,
    /// Mollified fiber profile of scale μ.
    pub fiber_small: MollifiedFunction,
}

impl SmoothedMetric {
    /// (G_λ, G_λ′, G_λ″): the spline inside the smoothing window, the exact
    /// third piece beyond it (the convolution of a single analytic piece
    /// differs from the piece by O(λ²)).
    fn base_eval(&self, x: f64) -> Result<(f64, f64, f64), MollifyError> {
        if x <= self.g.hi {
            Ok((self.g.eval(x), self.g.d1(x), self.g.d2(x)))
        } else {
            Ok(self.profile.eval(x)?)
        }
    }
}

fn smoothed_point(
    sm: &SmoothedMetric,
    kernel: &[Vec<f64>],
    p: (f64, f64),
    angles: usize,
) -> Result<(f64, Vec<f64>), MollifyError> {
    let (gv, gd, gdd) = sm.base_eval(p.0)?;
    let mut coef = sm.charts.coefficients(p)?;
    coef.g = gv;
    coef.diag[1] = gv * gv;
    let lambda = sm.lambda;
    for i in 0..coef.fibers.len() {
        let fp = &sm.charts.fibers[i];
        let brk = fp.breakpoint();
        let mf = if i == 0 { &sm.fiber1 } else { &sm.fiber_small };
        // Resolve the Fermi distance; the piecewise evaluation may have
        // reported only a lower bound when the point is far outside the tube.
        let cp = match &coef.fibers[i].chart_point {
            Some(cp) => Some(cp.clone()),
            None if coef.fibers[i].rho >= brk + lambda => None,
            None => match fp.chart.query_radius(p, brk + 2.0 * lambda) {
                Ok(cp) => Some(cp),
                Err(QuadError::OutsideTube(lower, _)) if lower >= brk + lambda => None,
                Err(e) => return Err(MollifyError::Chart(fp.index, e)),
            },
        };
        let fv = &mut coef.fibers[i];
        match cp {
            Some(cp) if cp.rho < brk + lambda => {
                let rho = cp.rho;
                let d_rho = mf.d1(rho);
                let (ca, sa) = (cp.normal_angle.cos(), cp.normal_angle.sin());
                fv.value = mf.eval(rho);
                fv.d_rho = d_rho;
                fv.d_rho2 = mf.d2(rho);
                fv.grad = (d_rho * ca, d_rho * gv * sa);
                fv.rho = rho;
                fv.plateau = false;
                fv.chart_point = Some(cp);
            }
            _ => {
                // Kernel support entirely on the plateau: exactly constant.
                fv.value = fp.scale;
                fv.grad = (0.0, 0.0);
                fv.d_rho = 0.0;
                fv.d_rho2 = 0.0;
                fv.plateau = true;
            }
        }
        let v = coef.fibers[i].value;
        coef.diag[2 + i] = v * v;
    }
    let (min_x, _argmin, ric_u) = bounds_from_coefficients(&coef, gv, gd, gdd, kernel, angles)?;
    Ok((min_x, ric_u))
}

/// Certification summary of the smoothed metric on one grid.
#[derive(Debug, Clone)]
pub struct SmoothedGridReport {
    pub points: usize,
    pub min_ric_x: f64,
    pub min_ric_u: f64,
    pub argmin: (f64, f64),
    /// Grid points whose worst bound is ≤ 0.
    pub nonpositive: usize,
    /// One row per base point: x, y, region, min bound.
    pub csv: String,
    pub pass: bool,
}

fn certify_smoothed(
    sm: &SmoothedMetric,
    kernel: &[Vec<f64>],
    grid: &GridSpec,
) -> Result<SmoothedGridReport, MollifyError> {
    let pts: Vec<(f64, f64)> = grid
        .points()
        .into_iter()
        .filter(|&p| sm.charts.polygon.contains(p))
        .collect();
    if pts.is_empty() {
        return Err(CurvatureError::EmptyGrid.into());
    }
    let rows: Vec<Result<(f64, Vec<f64>), MollifyError>> = pts
        .par_iter()
        .map(|&p| smoothed_point(sm, kernel, p, grid.angles))
        .collect();
    let mut csv = String::from("x,y,region,min_bound\n");
    let mut min_x = f64::INFINITY;
    let mut min_u = f64::INFINITY;
    let mut argmin = (f64::NAN, f64::NAN);
    let mut nonpositive = 0usize;
    for (p, row) in pts.iter().zip(rows) {
        let (mx, ric_u) = row?;
        let row_u = ric_u.iter().copied().fold(f64::INFINITY, f64::min);
        let row_min = mx.min(row_u);
        if row_min <= 0.0 {
            nonpositive += 1;
        }
        if row_min < min_x.min(min_u) {
            argmin = *p;
        }
        min_x = min_x.min(mx);
        min_u = min_u.min(row_u);
        csv.push_str(&format!(
            "{:.12e},{:.12e},{},{:.12e}\n",
            p.0,
            p.1,
            Region::of(&sm.profile.params, p.0).as_str(),
            row_min
        ));
    }
    Ok(SmoothedGridReport {
        points: pts.len(),
        min_ric_x: min_x,
        min_ric_u: min_u,
        argmin,
        nonpositive,
        csv,
        pass: min_x > 0.0 && min_u > 0.0,
    })
}

/// One rung of the smoothing ladder.
#[derive(Debug, Clone)]
pub struct LadderRow {
    pub lambda: f64,
    pub sup_distance: f64,
    pub bad_set: f64,
    pub min_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SmoothOptions {
    /// Decreasing smoothing radii.
    pub ladder: Vec<f64>,
    /// Extension margin as a multiple of λ.
    pub sigma_factor: f64,
    /// Right end of the convergence compact; default half-way from 2ε to the
    /// positivity end of the third piece.
    pub beta: Option<f64>,
    pub cap_grid: (usize, usize),
    pub deep_grid: (usize, usize),
    pub angles: usize,
    /// Query fiber distances in the charts rebuilt after the Gauss-Bonnet
    /// re-solve (default), or keep the charts of the metric the pipeline
    /// started from.
    pub charts_from_resolve: bool,
}

impl Default for SmoothOptions {
    fn default() -> Self {
        SmoothOptions {
            ladder: vec![1e-2, 1e-3, 1e-4],
            sigma_factor: 4.0,
            beta: None,
            cap_grid: (12, 24),
            deep_grid: (8, 10),
            angles: 16,
            charts_from_resolve: true,
        }
    }
}

#[derive(Debug)]
pub struct SmoothedCertification {
    pub rows: Vec<LadderRow>,
    pub convergence: ConvergenceReport,
    /// Relative change of k₂ and Δ caused by the re-solve at the final λ.
    pub k2_change: f64,
    pub delta_change: f64,
    /// |∫ K_λ ω_λ + π/2| of the final smoothed surface.
    pub gb_residual: f64,
    pub cap_report: SmoothedGridReport,
    pub deep_report: SmoothedGridReport,
    /// Ladder CSV: lambda, sup distance, bad-set measure, min Ricci bound.
    pub csv: String,
    pub pass: bool,
}

/// Outcome of the smoothing pipeline; an infeasible Gauss-Bonnet re-solve is
/// a first-class result, mirroring the piecewise solver.
#[derive(Debug)]
pub enum SmoothOutcome {
    Certified(Box<SmoothedCertification>),
    Infeasible(InfeasibilityReport),
}

/// The full smoothing pipeline over a λ ladder: mollify the extended base
/// profile, record its uniform convergence and the curvature bad sets,
/// re-solve the Gauss-Bonnet condition with the target shifted by the
/// smoothed surface's extra total curvature, mollify the fiber profiles with
/// the same radius, rebuild the metric and re-certify both Ricci bounds on
/// the cap and deep-interior grids.
pub fn smooth_pipeline(
    tm: &TotalMetric,
    subtorus: &KernelLattice,
    opts: &SmoothOptions,
) -> Result<SmoothOutcome, MollifyError> {
    if opts.ladder.is_empty() {
        return Err(MollifyError::EmptyLadder);
    }
    let params = tm.profile.params;
    let eps = params.epsilon;
    for &l in &opts.ladder {
        if !(l > 0.0 && l < 0.25 * eps) {
            return Err(MollifyError::RadiusTooLarge(l));
        }
        if !(opts.sigma_factor > 1.0) {
            return Err(MollifyError::RadiusExceedsMargin { lambda: l, sigma: opts.sigma_factor * l });
        }
    }
    let g0 = &tm.profile;
    let beta = opts.beta.unwrap_or(2.0 * eps + 0.5 * (g0.x_right - 2.0 * eps));
    let breaks = g0.breakpoints();
    let source = |x: f64| profile_jet(g0, x).0;
    let mut convergence = convergence_report(&source, &breaks, -params.delta, beta, &opts.ladder);
    let kernel_f = kernel_to_f64(subtorus);
    let mut rows: Vec<LadderRow> = Vec::new();
    let mut last: Option<(f64, f64, f64, SmoothedGridReport, SmoothedGridReport)> = None;
    for (idx, &lambda) in opts.ladder.iter().enumerate() {
        let sigma = opts.sigma_factor * lambda;
        let bad = curvature_in_measure(g0, lambda, beta);
        convergence.bad_set_measures.push(bad);
        // Shift the target by the extra total curvature of the smoothed
        // surface over the piecewise one, then re-solve.
        let corr = curvature_correction(g0, &tm.polygon, lambda);
        let target = -FRAC_PI_2 - corr;
        let (g2, quad, total) = match solve_gauss_bonnet(params, target)? {
            GaussBonnetOutcome::Feasible { profile, quad, total, .. } => (profile, quad, total),
            GaussBonnetOutcome::Infeasible(rep) => return Ok(SmoothOutcome::Infeasible(rep)),
        };
        let polygon2 = assemble_polygon(&g2, &quad, tm.polygon.m)?;
        let tm2 = TotalMetric::build(&g2, &polygon2)?;
        let charts = if opts.charts_from_resolve { tm2 } else { tm.clone() };
        // Mollified base profile over the first cap (the certification grids
        // stay left of ε or deep inside the analytic third piece).
        let src2 = |x: f64| profile_jet(&g2, x);
        let g_mf = mollify_with_jet(
            &src2,
            &g2.breakpoints(),
            -params.delta,
            eps + 0.02 + lambda,
            lambda,
            sigma,
        )?;
        // Fiber profiles mollified with the same radius.
        let s1 = 4.0 * eps;
        let fiber1 = mollify_with_jet(
            &|r| fiber_jet(s1, r),
            &[FRAC_PI_2 * s1],
            0.0,
            FRAC_PI_2 * s1 + 3.0 * lambda,
            lambda,
            sigma,
        )?;
        let fiber_small = mollify_with_jet(
            &|r| fiber_jet(params.mu, r),
            &[FRAC_PI_2 * params.mu],
            0.0,
            FRAC_PI_2 * params.mu + 3.0 * lambda,
            lambda,
            sigma,
        )?;
        let sm = SmoothedMetric { charts, profile: g2.clone(), lambda, g: g_mf, fiber1, fiber_small };
        let mut cap_grid = GridSpec::cap_default(&sm.charts, opts.cap_grid.0, opts.cap_grid.1);
        cap_grid.angles = opts.angles;
        // Keep the cap window clear of the smoothed breakpoint: within 1.5λ
        // of ε the base curvature already dips toward the band value, where
        // the bound is not claimed (same exclusion as the piecewise window).
        cap_grid.x_hi = cap_grid.x_hi.min(eps - 1.5 * lambda);
        let mut deep_grid = GridSpec::deep_interior(&sm.charts, opts.deep_grid.0, opts.deep_grid.1);
        deep_grid.angles = opts.angles;
        let cap = certify_smoothed(&sm, &kernel_f, &cap_grid)?;
        let deep = certify_smoothed(&sm, &kernel_f, &deep_grid)?;
        // Deep inside, the metric is a product with a flat torus and the
        // torus directions are exactly Ricci-flat, so only the base bound is
        // claimed there; the cap certifies both families.
        let min_bound = cap.min_ric_x.min(cap.min_ric_u).min(deep.min_ric_x);
        rows.push(LadderRow {
            lambda,
            sup_distance: convergence.sup_distances[idx],
            bad_set: bad,
            min_bound,
        });
        if idx == opts.ladder.len() - 1 {
            let k2_change = ((g2.params.k2 - params.k2) / params.k2).abs();
            let delta_change = ((g2.params.big_delta - params.big_delta) / params.big_delta).abs();
            let corr2 = curvature_correction(&g2, &polygon2, lambda);
            let gb_residual = (total + corr2 + FRAC_PI_2).abs();
            last = Some((k2_change, delta_change, gb_residual, cap, deep));
        }
    }
    let (k2_change, delta_change, gb_residual, cap_report, deep_report) = last.unwrap();
    let mut csv = String::from("lambda,sup_distance,bad_set,min_bound\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:.6e},{:.12e},{:.12e},{:.12e}\n",
            r.lambda, r.sup_distance, r.bad_set, r.min_bound
        ));
    }
    let pass = rows.last().unwrap().min_bound > 0.0;
    Ok(SmoothOutcome::Certified(Box::new(SmoothedCertification {
        rows,
        convergence,
        k2_change,
        delta_change,
        gb_residual,
        cap_report,
        deep_report,
        csv,
        pass,
    })))
}
