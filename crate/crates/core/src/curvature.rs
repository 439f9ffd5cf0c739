//! Closed-form curvature components of the total metric, the horizontal
//! frame orthogonal to the free subtorus, Ricci lower bounds with grid
//! certification, and an independent finite-difference oracle.
//!
//! All components are reported in the orthonormal coframe
//! `(dx, G dy, f_1 dφ_1, …, f_m dφ_m)`.  The certified quantity is the
//! submersion lower bound `K + Σ_i R(X, U_i, X, U_i)` (and its analogue for
//! the fiber directions), not the exact quotient Ricci tensor: the correction
//! terms dropped on the way down are nonnegative, so positivity of the bound
//! is what matters.

use num_traits::ToPrimitive;
use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::KernelLattice;
use crate::metric_total::{FiberValue, MetricCoefficients, MetricError, TotalMetric};
use crate::profile::{MetricParams, ProfileError};

#[derive(Debug, Error)]
pub enum CurvatureError {
    #[error("metric error: {0}")]
    Metric(#[from] MetricError),
    #[error("profile error: {0}")]
    Profile(#[from] ProfileError),
    #[error("coframe degenerates at fiber {fiber} (f = {value:.3e})")]
    DegenerateCoframe { fiber: usize, value: f64 },
    #[error("point within 10 finite-difference steps of a breakpoint (x = {0})")]
    NearBreakpoint(f64),
    #[error("could not complete the horizontal frame")]
    FrameDeficit,
    #[error("empty certification grid")]
    EmptyGrid,
}

/// Non-zero curvature components at a base point, indexed in the orthonormal
/// coframe.  `base` is the plane spanned by the two base directions; `xi[i]`
/// and `yi[i]` pair fiber i with the x- and y-direction; `ij` pairs two
/// fibers; `mixed[i]` is the only non-sectional pattern.
#[derive(Debug, Clone)]
pub struct CurvatureComponents {
    pub m: usize,
    /// R(e_x, e_y, e_x, e_y)
    pub base: f64,
    /// R(e_x, ê_i, e_x, ê_i) = −(f_i)_xx / f_i
    pub xi: Vec<f64>,
    /// R(e_y, ê_i, e_y, ê_i) = −(f_i)_yy/(f_i G²) − ((f_i)_x/f_i)(G_x/G)
    pub yi: Vec<f64>,
    /// R(ê_i, ê_j, ê_i, ê_j)
    pub ij: Vec<Vec<f64>>,
    /// R(e_x, ê_i, e_y, ê_i) = −(f_i)_xy/(f_i G) + ((f_i)_y/f_i)(G_x/G²)
    pub mixed: Vec<f64>,
}

/// Coordinate partials (f_x, f_y, f_xx, f_xy, f_yy) of one fiber function.
///
/// The fiber is a profile in the distance ρ to its edge, so its coordinate
/// Hessian is `f″ dρ⊗dρ + f′ ∂²ρ`.  The distance function of a geodesic has
/// covariant Hessian `(h_ρ/h)(g − dρ⊗dρ)`; adding the Christoffel terms of
/// `dx² + G² dy²` gives the plain coordinate second partials.
fn fiber_partials(gv: f64, gd: f64, fv: &FiberValue) -> (f64, f64, f64, f64, f64) {
    if fv.plateau {
        return (0.0, 0.0, 0.0, 0.0, 0.0);
    }
    let cp = fv.chart_point.as_ref().expect("non-plateau fiber without chart data");
    let (ca, sa) = (cp.normal_angle.cos(), cp.normal_angle.sin());
    let hr = cp.h_rho / cp.h;
    let rx = ca;
    let ry = gv * sa;
    let rxx = hr * sa * sa;
    let rxy = -hr * ca * gv * sa + (gd / gv) * ry;
    let ryy = hr * gv * gv * ca * ca - gv * gd * rx;
    (
        fv.d_rho * rx,
        fv.d_rho * ry,
        fv.d_rho2 * rx * rx + fv.d_rho * rxx,
        fv.d_rho2 * rx * ry + fv.d_rho * rxy,
        fv.d_rho2 * ry * ry + fv.d_rho * ryy,
    )
}

fn check_nondegenerate(coef: &MetricCoefficients) -> Result<(), CurvatureError> {
    for (i, fv) in coef.fibers.iter().enumerate() {
        if fv.value <= 1e-12 {
            return Err(CurvatureError::DegenerateCoframe { fiber: i + 1, value: fv.value });
        }
    }
    Ok(())
}

fn components_from(coef: &MetricCoefficients, gv: f64, gd: f64, gdd: f64) -> CurvatureComponents {
    let m = coef.fibers.len();
    let parts: Vec<_> = coef.fibers.iter().map(|fv| fiber_partials(gv, gd, fv)).collect();
    let mut xi = Vec::with_capacity(m);
    let mut yi = Vec::with_capacity(m);
    let mut mixed = Vec::with_capacity(m);
    for (fv, &(fx, fy, fxx, fxy, fyy)) in coef.fibers.iter().zip(&parts) {
        let f = fv.value;
        xi.push(-fxx / f);
        yi.push(-fyy / (f * gv * gv) - (fx / f) * (gd / gv));
        mixed.push(-fxy / (f * gv) + (fy / f) * (gd / (gv * gv)));
    }
    let mut ij = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let (fxi, fyi, ..) = parts[i];
            let (fxj, fyj, ..) = parts[j];
            let fi = coef.fibers[i].value;
            let fj = coef.fibers[j].value;
            ij[i][j] = -(fxi / fi) * (fxj / fj) - (fyi / fi) * (fyj / fj) / (gv * gv);
        }
    }
    CurvatureComponents { m, base: -gdd / gv, xi, yi, ij, mixed }
}

/// Closed-form components in base coordinates.  At a breakpoint the
/// right-hand piece is used (one-sided data).
pub fn components_base(tm: &TotalMetric, p: (f64, f64)) -> Result<CurvatureComponents, CurvatureError> {
    let (gv, gd, gdd) = tm.profile.eval(p.0)?;
    let coef = tm.coefficients(p)?;
    check_nondegenerate(&coef)?;
    Ok(components_from(&coef, gv, gd, gdd))
}

/// Closed-form components in the Fermi frame of the chart of edge k: the
/// base pair is (∂ρ, ∂ψ/h) and the mixed components vanish.  Fiber data is
/// pushed into the chart frame by rotating each fiber's normal direction.
pub fn components_fermi(tm: &TotalMetric, k: usize, p: (f64, f64)) -> Result<CurvatureComponents, CurvatureError> {
    let chart = &tm.fibers[k - 1].chart;
    let cp = chart.query(p).map_err(|e| MetricError::Chart(k, e))?;
    let coef = tm.coefficients(p)?;
    check_nondegenerate(&coef)?;
    let m = coef.fibers.len();
    let mut xi = Vec::with_capacity(m);
    let mut yi = Vec::with_capacity(m);
    let mut rho_slopes = Vec::with_capacity(m);
    let mut psi_slopes = Vec::with_capacity(m);
    for fv in &coef.fibers {
        if fv.plateau {
            xi.push(0.0);
            yi.push(0.0);
            rho_slopes.push(0.0);
            psi_slopes.push(0.0);
            continue;
        }
        let ci = fv.chart_point.as_ref().expect("non-plateau fiber without chart data");
        // Projection of this fiber's normal direction on the chart legs.
        let t = (ci.normal_angle - cp.normal_angle).cos();
        let s = (ci.normal_angle - cp.normal_angle).sin();
        let hir = ci.h_rho / ci.h;
        // Covariant Hessian of φ(ρ_i) along a unit leg u with u·∇ρ_i = c:
        // φ'' c² + φ' (h_ρ/h)(1 - c²).  The own-chart case is c = 1 resp. 0.
        let f_rhorho = fv.d_rho2 * t * t + fv.d_rho * hir * (1.0 - t * t);
        let f_psipsi = fv.d_rho2 * s * s + fv.d_rho * hir * (1.0 - s * s);
        xi.push(-f_rhorho / fv.value);
        yi.push(-f_psipsi / fv.value);
        rho_slopes.push(fv.d_rho * t / fv.value);
        psi_slopes.push(fv.d_rho * s / fv.value);
    }
    let mut ij = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                ij[i][j] = -rho_slopes[i] * rho_slopes[j] - psi_slopes[i] * psi_slopes[j];
            }
        }
    }
    Ok(CurvatureComponents {
        m,
        base: -cp.h_rhorho / cp.h,
        xi,
        yi,
        ij,
        mixed: vec![0.0; m],
    })
}

/// Orthonormal basis `U_1 … U_n` of the fiber directions orthogonal to the
/// free subtorus, expressed over the orthonormal fiber coframe: the l-th
/// coefficient of `U_i` is `c_l^i` in `U_i = Σ_l c_l^i (1/f_l)∂φ_l`.
#[derive(Debug, Clone)]
pub struct HorizontalFrame {
    pub vectors: Vec<Vec<f64>>,
    /// Smallest non-zero |c_l^i| over the frame.
    pub c_min: f64,
}

impl HorizontalFrame {
    pub fn n(&self) -> usize {
        self.vectors.len()
    }

    /// w_l = Σ_i (c_l^i)², the exact per-point weight of fiber l in the
    /// Ricci sums (between 0 and 1).
    pub fn fiber_weights(&self) -> Vec<f64> {
        let m = self.vectors.first().map_or(0, Vec::len);
        let mut w = vec![0.0; m];
        for u in &self.vectors {
            for (wl, c) in w.iter_mut().zip(u) {
                *wl += c * c;
            }
        }
        w
    }
}

fn frame_from_values(f: &[f64], kernel: &[Vec<f64>]) -> Result<HorizontalFrame, CurvatureError> {
    let m = f.len();
    let n = m - kernel.len();
    // In the orthonormal fiber coframe the kernel directions become the
    // coordinate vectors rescaled by the f's.
    let mut blocked: Vec<Vec<f64>> = Vec::with_capacity(kernel.len());
    for v in kernel {
        let mut w: Vec<f64> = v.iter().zip(f).map(|(a, b)| a * b).collect();
        for b in &blocked {
            let d: f64 = w.iter().zip(b).map(|(a, c)| a * c).sum();
            for (x, c) in w.iter_mut().zip(b) {
                *x -= d * c;
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Err(CurvatureError::FrameDeficit);
        }
        w.iter_mut().for_each(|x| *x /= norm);
        blocked.push(w);
    }
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n);
    for seed in 0..m {
        if frame.len() == n {
            break;
        }
        let mut u = vec![0.0; m];
        u[seed] = 1.0;
        // Two Gram-Schmidt passes for numerical orthogonality.
        for _ in 0..2 {
            for b in blocked.iter().chain(frame.iter()) {
                let d: f64 = u.iter().zip(b).map(|(a, c)| a * c).sum();
                for (x, c) in u.iter_mut().zip(b) {
                    *x -= d * c;
                }
            }
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            u.iter_mut().for_each(|x| *x /= norm);
            frame.push(u);
        }
    }
    if frame.len() < n {
        return Err(CurvatureError::FrameDeficit);
    }
    // Seeded Gram-Schmidt concentrates each fiber's weight in a single frame
    // vector (the others come out exactly orthogonal to that coframe axis).
    // Reflect the frame across its diagonal direction so every vector keeps a
    // share of every active weight; this keeps orthonormality and is
    // deterministic.
    if !blocked.is_empty() && n > 1 {
        let sums: Vec<f64> = (0..m)
            .map(|l| frame.iter().map(|u| u[l]).sum::<f64>())
            .collect();
        let scale = 2.0 / n as f64;
        for u in frame.iter_mut() {
            for (x, s) in u.iter_mut().zip(&sums) {
                *x -= scale * s;
            }
        }
    }
    let mut c_min = f64::INFINITY;
    for u in &frame {
        for &c in u {
            if c.abs() > 1e-12 {
                c_min = c_min.min(c.abs());
            }
        }
    }
    Ok(HorizontalFrame { vectors: frame, c_min })
}

/// Build the horizontal frame at a base point.  Deterministic: seeds are the
/// coordinate vectors in index order.
pub fn horizontal_frame(
    tm: &TotalMetric,
    subtorus: &KernelLattice,
    p: (f64, f64),
) -> Result<HorizontalFrame, CurvatureError> {
    let coef = tm.coefficients(p)?;
    check_nondegenerate(&coef)?;
    let f: Vec<f64> = coef.fibers.iter().map(|fv| fv.value).collect();
    let kernel = kernel_to_f64(subtorus);
    frame_from_values(&f, &kernel)
}

pub(crate) fn kernel_to_f64(subtorus: &KernelLattice) -> Vec<Vec<f64>> {
    subtorus
        .integer_kernel_basis
        .iter()
        .map(|v| v.iter().map(|x| x.to_f64().expect("kernel entry exceeds f64")).collect())
        .collect()
}

/// Direction parameters of the Ricci bound: one base unit direction written
/// in up to three frames.  `z` is the pair in base coordinates; `x` and `y`
/// are the pairs in the Fermi frames of the first and second active fiber.
#[derive(Debug, Clone, Copy)]
pub struct DirectionParams {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
}

impl DirectionParams {
    /// Couple all three pairs to the single direction at angle `tau` from
    /// the x-axis (orthonormal frame), rotating into the chart frames with
    /// the given normal angles.
    pub fn coupled(tau: f64, alpha_x: Option<f64>, alpha_y: Option<f64>) -> Self {
        let rot = |a: f64| ((tau - a).cos(), (tau - a).sin());
        DirectionParams {
            x: alpha_x.map(rot).unwrap_or((tau.cos(), tau.sin())),
            y: alpha_y.map(rot).unwrap_or((tau.cos(), tau.sin())),
            z: (tau.cos(), tau.sin()),
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.x.0, self.x.1, self.y.0, self.y.1, self.z.0, self.z.1]
    }
}

/// Normal angles of the (up to two) active fibers with index ≥ 2, used to
/// couple the direction parameters.
pub fn active_normal_angles(coef: &MetricCoefficients) -> (Option<f64>, Option<f64>) {
    let mut angles = coef
        .fibers
        .iter()
        .skip(1)
        .filter(|fv| !fv.plateau)
        .filter_map(|fv| fv.chart_point.as_ref().map(|cp| cp.normal_angle));
    (angles.next(), angles.next())
}

fn x_bound_from(
    coef: &MetricCoefficients,
    gv: f64,
    gd: f64,
    gdd: f64,
    weights: &[f64],
    dirs: &DirectionParams,
) -> f64 {
    let mut total = -gdd / gv;
    // First fiber in base coordinates (its distance is x + δ exactly).
    let fv1 = &coef.fibers[0];
    if !fv1.plateau {
        let (z1, z2) = dirs.z;
        let f = fv1.value;
        total += weights[0]
            * (-z1 * z1 * fv1.d_rho2 / f - z2 * z2 * (fv1.d_rho / f) * (gd / gv));
    }
    // Remaining active fibers in their own Fermi frames.
    let mut pairs = [dirs.x, dirs.y].into_iter();
    for (l, fv) in coef.fibers.iter().enumerate().skip(1) {
        if fv.plateau {
            continue;
        }
        let (a, b) = pairs.next().unwrap_or(dirs.x);
        let cp = fv.chart_point.as_ref().expect("non-plateau fiber without chart data");
        let f = fv.value;
        total += weights[l]
            * (-a * a * fv.d_rho2 / f - b * b * (fv.d_rho / f) * (cp.h_rho / cp.h));
    }
    total
}

/// Lower bound for Ric(X, X): `K + Σ_i R(X, U_i, X, U_i)` with the exact
/// per-point frame weights and the regional per-fiber frames.
pub fn ricci_x_bound(
    tm: &TotalMetric,
    frame: &HorizontalFrame,
    p: (f64, f64),
    dirs: &DirectionParams,
) -> Result<f64, CurvatureError> {
    let (gv, gd, gdd) = tm.profile.eval(p.0)?;
    let coef = tm.coefficients(p)?;
    check_nondegenerate(&coef)?;
    Ok(x_bound_from(&coef, gv, gd, gdd, &frame.fiber_weights(), dirs))
}

fn u_bound_from(comps: &CurvatureComponents, frame: &HorizontalFrame, i: usize) -> f64 {
    let c = &frame.vectors[i];
    let mut v = 0.0;
    for (l, cl) in c.iter().enumerate() {
        v += cl * cl * (comps.xi[l] + comps.yi[l]);
    }
    for (j, cj) in frame.vectors.iter().enumerate() {
        if j == i {
            continue;
        }
        // Exact plane curvature against U_j: the coefficient of R_lsls is
        // the squared 2x2 minor of the two coefficient vectors.
        for l in 0..c.len() {
            for s in (l + 1)..c.len() {
                let d = c[l] * cj[s] - c[s] * cj[l];
                v += d * d * comps.ij[l][s];
            }
        }
    }
    v
}

/// Lower bound for Ric(U_i, U_i): the two mixed base terms plus the
/// sectional curvatures against the other frame vectors,
/// `R(X,U_i,X,U_i) + R(X̃,U_i,X̃,U_i) + Σ_{j≠i} K_ij`.
pub fn ricci_u_bound(
    tm: &TotalMetric,
    frame: &HorizontalFrame,
    p: (f64, f64),
    i: usize,
) -> Result<f64, CurvatureError> {
    let comps = components_base(tm, p)?;
    Ok(u_bound_from(&comps, frame, i))
}

/// The fully relaxed band estimate with a uniform frame constant `c`:
/// −1 + n c² [x₁²/μ² − x₂² μ/(4ε) + z₁²/(16ε²) + z₂² tanh ν/(4ε tan((2+π)/4))].
/// Kept as a diagnostic: the certified bound uses exact per-point data.
pub fn relaxed_band_bound(params: &MetricParams, n: usize, c: f64, dirs: &DirectionParams) -> f64 {
    let eps = params.epsilon;
    let mu = params.mu;
    let (x1, x2) = dirs.x;
    let (z1, z2) = dirs.z;
    let bracket = x1 * x1 / (mu * mu) - x2 * x2 * mu / (4.0 * eps)
        + z1 * z1 / (16.0 * eps * eps)
        + z2 * z2 * params.nu.tanh() / (4.0 * eps * (0.5 + std::f64::consts::FRAC_PI_4).tan());
    -1.0 + n as f64 * c * c * bracket
}

/// Region of the base strip by the profile piece (plus the deep plateau of
/// the first fiber).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// −δ ≤ x < ε: first spherical cap.
    Cap1,
    /// ε ≤ x < 2ε: hyperbolic band.
    Band,
    /// 2ε ≤ x < 2πε − δ: second cap with the first fiber still warping.
    Cap2,
    /// x ≥ 2πε − δ: second cap, all fibers on their plateau away from edges.
    Deep,
}

impl Region {
    pub fn of(params: &MetricParams, x: f64) -> Region {
        let eps = params.epsilon;
        if x < eps {
            Region::Cap1
        } else if x < 2.0 * eps {
            Region::Band
        } else if x < 2.0 * std::f64::consts::PI * eps - params.delta {
            Region::Cap2
        } else {
            Region::Deep
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Cap1 => "cap1",
            Region::Band => "band",
            Region::Cap2 => "cap2",
            Region::Deep => "deep",
        }
    }
}

/// One certified sample: a base point with the worst direction found there.
#[derive(Debug, Clone)]
pub struct RicciSample {
    pub point: (f64, f64),
    pub region: Region,
    /// (x₁, x₂, y₁, y₂, z₁, z₂) of the minimizing direction.
    pub dirs: [f64; 6],
    pub ric_x: f64,
    pub ric_u: Vec<f64>,
}

/// Rectangular base grid crossed with a circle of coupled directions.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub angles: usize,
}

impl GridSpec {
    /// Default certification window: the first spherical cap, where every
    /// term of the bound is nonnegative.  The band and the second cap carry
    /// directions with a negative bound (see the certification report of a
    /// wider grid), so positivity there is not claimed by the bound alone.
    pub fn cap_default(tm: &TotalMetric, nx: usize, ny: usize) -> GridSpec {
        let p = &tm.profile.params;
        GridSpec {
            nx,
            ny,
            x_lo: -p.delta + 1e-3,
            x_hi: p.epsilon - 1e-3,
            y_lo: 1e-3,
            y_hi: tm.polygon.height - 1e-3,
            angles: 16,
        }
    }

    /// Deep-interior window: all fiber terms vanish away from the polygon
    /// boundary, so the bound must equal the cap curvature exactly.
    pub fn deep_interior(tm: &TotalMetric, nx: usize, ny: usize) -> GridSpec {
        let p = &tm.profile.params;
        GridSpec {
            nx,
            ny,
            x_lo: 2.0 * std::f64::consts::PI * p.epsilon - p.delta + 0.05,
            x_hi: 2.0,
            y_lo: 0.5,
            y_hi: tm.polygon.height - 0.5,
            angles: 16,
        }
    }

    pub(crate) fn points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for iy in 0..self.ny {
            let t = if self.ny > 1 { iy as f64 / (self.ny - 1) as f64 } else { 0.5 };
            let y = self.y_lo + (self.y_hi - self.y_lo) * t;
            for ix in 0..self.nx {
                let s = if self.nx > 1 { ix as f64 / (self.nx - 1) as f64 } else { 0.5 };
                out.push((self.x_lo + (self.x_hi - self.x_lo) * s, y));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CertificationReport {
    pub grid: GridSpec,
    /// Base points actually inside the polygon.
    pub points: usize,
    /// Total bound evaluations (directions plus frame vectors).
    pub samples: usize,
    pub min_ric_x: f64,
    pub argmin_x: RicciSample,
    pub min_ric_u: f64,
    pub argmin_u: ((f64, f64), usize),
    /// Samples whose worst bound is ≤ 0.
    pub nonpositive: usize,
    /// Max deviation of the finite-difference oracle from the closed forms
    /// at the spot-check points (NaN if no point qualified).
    pub oracle_deviation: f64,
    pub pass: bool,
    /// One row per base point: x, y, region, min bound over directions.
    pub csv: String,
}

struct SampleRow {
    point: (f64, f64),
    region: Region,
    min_x: f64,
    argmin_dirs: DirectionParams,
    ric_u: Vec<f64>,
}

/// Both Ricci lower bounds from explicit coefficient data: the minimum of
/// the X-bound over a fan of coupled directions (with its argmin) and the
/// U-bound per frame vector.  Entry point for metrics whose coefficient data
/// does not come from a [`TotalMetric`] directly, e.g. the mollified rebuild.
pub fn bounds_from_coefficients(
    coef: &MetricCoefficients,
    gv: f64,
    gd: f64,
    gdd: f64,
    kernel: &[Vec<f64>],
    angles: usize,
) -> Result<(f64, DirectionParams, Vec<f64>), CurvatureError> {
    check_nondegenerate(coef)?;
    let f: Vec<f64> = coef.fibers.iter().map(|fv| fv.value).collect();
    let frame = frame_from_values(&f, kernel)?;
    let weights = frame.fiber_weights();
    let (ax, ay) = active_normal_angles(coef);
    let mut min_x = f64::INFINITY;
    let mut argmin = DirectionParams::coupled(0.0, ax, ay);
    for a in 0..angles {
        let tau = std::f64::consts::TAU * a as f64 / angles as f64;
        let dirs = DirectionParams::coupled(tau, ax, ay);
        let v = x_bound_from(coef, gv, gd, gdd, &weights, &dirs);
        if v < min_x {
            min_x = v;
            argmin = dirs;
        }
    }
    let comps = components_from(coef, gv, gd, gdd);
    let ric_u = (0..frame.n()).map(|i| u_bound_from(&comps, &frame, i)).collect();
    Ok((min_x, argmin, ric_u))
}

fn evaluate_point(
    tm: &TotalMetric,
    kernel: &[Vec<f64>],
    p: (f64, f64),
    angles: usize,
) -> Result<SampleRow, CurvatureError> {
    let (gv, gd, gdd) = tm.profile.eval(p.0)?;
    let coef = tm.coefficients(p)?;
    let (min_x, argmin, ric_u) = bounds_from_coefficients(&coef, gv, gd, gdd, kernel, angles)?;
    Ok(SampleRow { point: p, region: Region::of(&tm.profile.params, p.0), min_x, argmin_dirs: argmin, ric_u })
}

/// Sweep the grid, minimize both bounds, and emit the per-sample CSV.
/// Deterministic for a fixed grid: the fan-out is an order-preserving map
/// and the reduction is a serial scan over the collected rows.
pub fn certify(
    tm: &TotalMetric,
    subtorus: &KernelLattice,
    grid: &GridSpec,
) -> Result<CertificationReport, CurvatureError> {
    let kernel = kernel_to_f64(subtorus);
    let pts: Vec<(f64, f64)> = grid
        .points()
        .into_iter()
        .filter(|&p| tm.polygon.contains(p))
        .collect();
    if pts.is_empty() {
        return Err(CurvatureError::EmptyGrid);
    }
    let rows: Vec<Result<SampleRow, CurvatureError>> = pts
        .par_iter()
        .map(|&p| evaluate_point(tm, &kernel, p, grid.angles))
        .collect();
    let mut csv = String::from("x,y,region,min_bound\n");
    let mut min_x = f64::INFINITY;
    let mut min_u = f64::INFINITY;
    let mut argmin_x: Option<RicciSample> = None;
    let mut argmin_u = ((f64::NAN, f64::NAN), 0usize);
    let mut nonpositive = 0usize;
    let mut samples = 0usize;
    for row in rows {
        let row = row?;
        samples += grid.angles + row.ric_u.len();
        let row_u = row.ric_u.iter().copied().fold(f64::INFINITY, f64::min);
        let row_min = row.min_x.min(row_u);
        if row_min <= 0.0 {
            nonpositive += 1;
        }
        csv.push_str(&format!(
            "{:.12e},{:.12e},{},{:.12e}\n",
            row.point.0,
            row.point.1,
            row.region.as_str(),
            row_min
        ));
        if row.min_x < min_x {
            min_x = row.min_x;
            argmin_x = Some(RicciSample {
                point: row.point,
                region: row.region,
                dirs: row.argmin_dirs.as_array(),
                ric_x: row.min_x,
                ric_u: row.ric_u.clone(),
            });
        }
        for (i, &v) in row.ric_u.iter().enumerate() {
            if v < min_u {
                min_u = v;
                argmin_u = (row.point, i);
            }
        }
    }
    let oracle_deviation = oracle_spot_check(tm, &pts);
    let argmin_x = argmin_x.ok_or(CurvatureError::EmptyGrid)?;
    Ok(CertificationReport {
        grid: grid.clone(),
        points: pts.len(),
        samples,
        min_ric_x: min_x,
        argmin_x,
        min_ric_u: min_u,
        argmin_u,
        nonpositive,
        oracle_deviation,
        pass: min_x > 0.0 && min_u > 0.0,
        csv,
    })
}

/// Run the oracle at a few interior grid points (skipping those too close
/// to a breakpoint) and report the worst deviation from the closed forms.
fn oracle_spot_check(tm: &TotalMetric, pts: &[(f64, f64)]) -> f64 {
    let mut dev = f64::NAN;
    for start in [pts.len() / 3, pts.len() / 2, 2 * pts.len() / 3] {
        // Scan forward past points the oracle refuses (breakpoint guards).
        for idx in start..(start + 50).min(pts.len()) {
            let p = pts[idx];
            if let Ok(oracle) = fd_oracle(tm, p) {
                if let Ok(comps) = components_base(tm, p) {
                    let d = max_tensor_deviation(&oracle.tensor, &components_to_tensor(&comps));
                    dev = if dev.is_nan() { d } else { dev.max(d) };
                    break;
                }
            }
        }
    }
    dev
}

/// Dense rank-4 tensor in the orthonormal frame, index order
/// (x, y, fiber 1, …, fiber m).
#[derive(Debug, Clone)]
pub struct Tensor4 {
    pub dim: usize,
    v: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dim: usize) -> Tensor4 {
        Tensor4 { dim, v: vec![0.0; dim * dim * dim * dim] }
    }

    #[inline]
    pub fn at(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.v[((a * self.dim + b) * self.dim + c) * self.dim + d]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, d: usize, val: f64) {
        self.v[((a * self.dim + b) * self.dim + c) * self.dim + d] = val;
    }

    /// Write a component together with its curvature-symmetry images.
    pub fn set_symmetric(&mut self, a: usize, b: usize, c: usize, d: usize, val: f64) {
        for &(i, j, k, l, s) in &[
            (a, b, c, d, 1.0),
            (b, a, c, d, -1.0),
            (a, b, d, c, -1.0),
            (b, a, d, c, 1.0),
            (c, d, a, b, 1.0),
            (d, c, a, b, -1.0),
            (c, d, b, a, -1.0),
            (d, c, b, a, 1.0),
        ] {
            self.set(i, j, k, l, s * val);
        }
    }
}

/// Assemble the full orthonormal tensor from the pattern components; all
/// entries outside the pattern are zero by construction, so comparing with
/// the oracle also checks the vanishing claims.
pub fn components_to_tensor(comps: &CurvatureComponents) -> Tensor4 {
    let m = comps.m;
    let mut t = Tensor4::zeros(m + 2);
    t.set_symmetric(0, 1, 0, 1, comps.base);
    for i in 0..m {
        t.set_symmetric(0, 2 + i, 0, 2 + i, comps.xi[i]);
        t.set_symmetric(1, 2 + i, 1, 2 + i, comps.yi[i]);
        t.set_symmetric(0, 2 + i, 1, 2 + i, comps.mixed[i]);
        for j in 0..m {
            if i < j {
                t.set_symmetric(2 + i, 2 + j, 2 + i, 2 + j, comps.ij[i][j]);
            }
        }
    }
    t
}

pub fn max_tensor_deviation(a: &Tensor4, b: &Tensor4) -> f64 {
    assert_eq!(a.dim, b.dim);
    a.v.iter().zip(&b.v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Max over index choices of the cyclic (first Bianchi) sum.
pub fn bianchi_residual(t: &Tensor4) -> f64 {
    let d = t.dim;
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    let s = t.at(a, b, c, e) + t.at(a, c, e, b) + t.at(a, e, b, c);
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    worst
}

/// Output of [`fd_oracle`]: the numerically assembled tensor plus the
/// pattern components read off from it.
#[derive(Debug, Clone)]
pub struct FdOracle {
    pub tensor: Tensor4,
    pub components: CurvatureComponents,
    pub bianchi: f64,
}

const FD_STEP: f64 = 1e-4;

/// Independent curvature tensor: central differences of the diagonal metric
/// coefficients (Richardson-extrapolated once) → Christoffel symbols →
/// Riemann tensor → orthonormal frame.  Errors out within 10 steps of any
/// breakpoint, where the one-sided derivatives would poison the stencil.
pub fn fd_oracle(tm: &TotalMetric, p: (f64, f64)) -> Result<FdOracle, CurvatureError> {
    let guard = 10.0 * FD_STEP;
    for b in tm.profile.breakpoints() {
        if (p.0 - b).abs() < guard {
            return Err(CurvatureError::NearBreakpoint(p.0));
        }
    }
    let coef = tm.coefficients(p)?;
    check_nondegenerate(&coef)?;
    for (fp, fv) in tm.fibers.iter().zip(&coef.fibers) {
        // The sine/plateau seam of a fiber is a ρ-breakpoint.
        if (fv.rho - fp.breakpoint()).abs() < guard {
            return Err(CurvatureError::NearBreakpoint(p.0));
        }
        // Near a collapsing edge the Christoffel symbols blow up like
        // cot(ρ/μ)/μ and the stencil cannot resolve them: the truncation
        // error scales like (step/ρ)⁴ against a 1/ρ value.
        if !fv.plateau && fv.rho < 300.0 * FD_STEP {
            return Err(CurvatureError::NearBreakpoint(p.0));
        }
    }
    let dim = tm.m() + 2;
    let gdiag = |x: f64, y: f64| -> Result<Vec<f64>, CurvatureError> {
        Ok(tm.coefficients((x, y))?.diag)
    };
    let gamma = |x: f64, y: f64| -> Result<Vec<f64>, CurvatureError> {
        let g0 = gdiag(x, y)?;
        let mut dg = [vec![0.0; dim], vec![0.0; dim]];
        for (axis, slot) in dg.iter_mut().enumerate() {
            let ev = |t: f64| if axis == 0 { gdiag(x + t, y) } else { gdiag(x, y + t) };
            let (p1, m1, p2, m2) = (ev(FD_STEP)?, ev(-FD_STEP)?, ev(2.0 * FD_STEP)?, ev(-2.0 * FD_STEP)?);
            for i in 0..dim {
                *slot.get_mut(i).unwrap() =
                    (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * FD_STEP);
            }
        }
        // Γ^k_{ij} for a diagonal metric depending on the first two coords.
        let pd = |a: usize, i: usize| if a < 2 { dg[a][i] } else { 0.0 };
        let mut gam = vec![0.0; dim * dim * dim];
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let mut v = 0.0;
                    if k == j {
                        v += pd(i, k);
                    }
                    if k == i {
                        v += pd(j, k);
                    }
                    if i == j {
                        v -= pd(k, i);
                    }
                    gam[(k * dim + i) * dim + j] = 0.5 / g0[k] * v;
                }
            }
        }
        Ok(gam)
    };
    let g0 = gdiag(p.0, p.1)?;
    let gam0 = gamma(p.0, p.1)?;
    let mut dgam = [vec![0.0; dim * dim * dim], vec![0.0; dim * dim * dim]];
    for (axis, slot) in dgam.iter_mut().enumerate() {
        let ev = |t: f64| if axis == 0 { gamma(p.0 + t, p.1) } else { gamma(p.0, p.1 + t) };
        let (p1, m1, p2, m2) = (ev(FD_STEP)?, ev(-FD_STEP)?, ev(2.0 * FD_STEP)?, ev(-2.0 * FD_STEP)?);
        for i in 0..slot.len() {
            slot[i] = (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * FD_STEP);
        }
    }
    let gam = |k: usize, i: usize, j: usize| gam0[(k * dim + i) * dim + j];
    let dgm = |a: usize, k: usize, i: usize, j: usize| {
        if a < 2 {
            dgam[a][(k * dim + i) * dim + j]
        } else {
            0.0
        }
    };
    let mut t = Tensor4::zeros(dim);
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                for d in 0..dim {
                    // R^a_{bcd} = ∂_c Γ^a_{db} − ∂_d Γ^a_{cb} + Γ^a_{ce}Γ^e_{db} − Γ^a_{de}Γ^e_{cb}
                    let mut r = dgm(c, a, d, b) - dgm(d, a, c, b);
                    for e in 0..dim {
                        r += gam(a, c, e) * gam(e, d, b) - gam(a, d, e) * gam(e, c, b);
                    }
                    let lowered = g0[a] * r;
                    let norm = (g0[a] * g0[b] * g0[c] * g0[d]).sqrt();
                    t.set(a, b, c, d, lowered / norm);
                }
            }
        }
    }
    let m = tm.m();
    let base = t.at(0, 1, 0, 1);
    let xi: Vec<f64> = (0..m).map(|i| t.at(0, 2 + i, 0, 2 + i)).collect();
    let yi: Vec<f64> = (0..m).map(|i| t.at(1, 2 + i, 1, 2 + i)).collect();
    let mixed: Vec<f64> = (0..m).map(|i| t.at(0, 2 + i, 1, 2 + i)).collect();
    let mut ij = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                ij[i][j] = t.at(2 + i, 2 + j, 2 + i, 2 + j);
            }
        }
    }
    let bianchi = bianchi_residual(&t);
    Ok(FdOracle { tensor: t, components: CurvatureComponents { m, base, xi, yi, ij, mixed }, bianchi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit_space::{subtorus_lattice, WeightedDisk};
    use crate::profile::{Branch, MetricParams};
    use crate::quadrangle::{assemble_polygon, solve_gauss_bonnet, GaussBonnetOutcome};

    fn total_metric(m: usize) -> TotalMetric {
        let params = MetricParams::reference(Branch::Shifted);
        match solve_gauss_bonnet(params, -std::f64::consts::FRAC_PI_2).unwrap() {
            GaussBonnetOutcome::Feasible { profile, quad, .. } => {
                let d = assemble_polygon(&profile, &quad, m).unwrap();
                TotalMetric::build(&profile, &d).unwrap()
            }
            GaussBonnetOutcome::Infeasible(rep) => panic!("{}", rep.message),
        }
    }

    /// m = 5, n = 3 disk whose kernel couples the first circle to the rest.
    fn desk_disk() -> WeightedDisk {
        WeightedDisk::from_i64(
            3,
            &[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1], &[1, 1, 1], &[1, 0, 1]],
        )
        .unwrap()
    }

    fn desk_kernel() -> KernelLattice {
        subtorus_lattice(&desk_disk()).unwrap()
    }

    #[test]
    fn base_components_plateau_and_band() {
        let tm = total_metric(5);
        let p = &tm.profile.params;
        // Deep plateau: only the base plane curves, at the cap value.
        let deep = (0.55, 0.5 * tm.polygon.height);
        let c = components_base(&tm, deep).unwrap();
        assert!((c.base - 1.0 / (p.k2 * p.k2)).abs() < 1e-12);
        for i in 0..c.m {
            assert!(c.xi[i].abs() < 1e-14 && c.yi[i].abs() < 1e-14 && c.mixed[i].abs() < 1e-14);
            for j in 0..c.m {
                assert!(c.ij[i][j].abs() < 1e-14);
            }
        }
        // Hyperbolic band: base sectional curvature −1.
        let band = (1.5 * p.epsilon, 0.5 * tm.polygon.height);
        let c = components_base(&tm, band).unwrap();
        assert!((c.base + 1.0).abs() < 1e-12);
        // First fiber warps: −(f1)_xx/f1 = 1/(16 ε²).
        assert!((c.xi[0] - 1.0 / (16.0 * p.epsilon * p.epsilon)).abs() < 1e-10);
        assert_eq!(c.ij[0][1], c.ij[1][0]);
    }

    #[test]
    fn fermi_components_constant_pieces() {
        let tm = total_metric(5);
        let p = &tm.profile.params;
        // Bottom cut edge chart at a band point: h = cosh, base −1, and the
        // collapsing fiber has −(f5)_ρρ/f5 = 1/μ².
        let pt = (1.5 * p.epsilon, 0.02);
        let c = components_fermi(&tm, 5, pt).unwrap();
        assert!((c.base + 1.0).abs() < 1e-12);
        assert!((c.xi[4] - 1.0 / (p.mu * p.mu)).abs() < 1e-9, "xi5 = {}", c.xi[4]);
        for i in 0..c.m {
            assert_eq!(c.mixed[i], 0.0);
        }
        // Outside the tube: error.
        assert!(components_fermi(&tm, 5, (0.0, 5.0)).is_err());
    }

    #[test]
    fn base_and_fermi_agree_on_overlap() {
        let tm = total_metric(5);
        // Point near the bottom cut edge with fibers 1 and 5 active.
        let pt = (0.05, 0.03);
        let cb = components_base(&tm, pt).unwrap();
        let cf = components_fermi(&tm, 5, pt).unwrap();
        let cp = tm.fibers[4].chart.query(pt).unwrap();
        let (ca, sa) = (cp.normal_angle.cos(), cp.normal_angle.sin());
        // Rotate the base pair into (∂ρ, ∂ψ/h) and compare plane by plane.
        assert!((cf.base - cb.base).abs() < 1e-9);
        for i in 0..cb.m {
            let rot_xi = ca * ca * cb.xi[i] + sa * sa * cb.yi[i] + 2.0 * ca * sa * cb.mixed[i];
            let rot_yi = sa * sa * cb.xi[i] + ca * ca * cb.yi[i] - 2.0 * ca * sa * cb.mixed[i];
            assert!((cf.xi[i] - rot_xi).abs() < 1e-8, "fiber {i}: {} vs {rot_xi}", cf.xi[i]);
            assert!((cf.yi[i] - rot_yi).abs() < 1e-8, "fiber {i}: {} vs {rot_yi}", cf.yi[i]);
        }
    }

    #[test]
    fn frame_trivial_kernel_is_identity() {
        let f = vec![0.3, 0.05, 0.05];
        let frame = frame_from_values(&f, &[]).unwrap();
        assert_eq!(frame.n(), 3);
        for (i, u) in frame.vectors.iter().enumerate() {
            for (l, &c) in u.iter().enumerate() {
                let want = if l == i { 1.0 } else { 0.0 };
                assert!((c - want).abs() < 1e-15);
            }
        }
        assert!((frame.c_min - 1.0).abs() < 1e-15);
    }

    #[test]
    fn frame_orthogonality_m3_kernel() {
        // Equal f's, kernel (1, 1, −1).
        let f = vec![0.1, 0.1, 0.1];
        let kernel = vec![vec![1.0, 1.0, -1.0]];
        let frame = frame_from_values(&f, &kernel).unwrap();
        assert_eq!(frame.n(), 2);
        for (i, u) in frame.vectors.iter().enumerate() {
            // Orthogonal to the kernel under diag(f²): coefficients live in
            // the orthonormal coframe, so the pairing is Σ c_l v_l f_l.
            let dot: f64 = u.iter().zip(&kernel[0]).zip(&f).map(|((c, v), fl)| c * v * fl).sum();
            assert!(dot.abs() < 1e-12);
            for (j, w) in frame.vectors.iter().enumerate() {
                let d: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
        assert!(frame.c_min > 0.0);
    }

    #[test]
    fn frame_at_metric_point() {
        let tm = total_metric(5);
        let kern = desk_kernel();
        assert_eq!(kern.rank(), 2);
        let p = (0.0, 0.4 * tm.polygon.height);
        let frame = horizontal_frame(&tm, &kern, p).unwrap();
        assert_eq!(frame.n(), 3);
        // Every frame vector keeps weight on the first fiber: the kernel
        // ties circle 1 to the others, which is what makes the fiber Ricci
        // bound positive off the plateau of f_1.
        for u in &frame.vectors {
            assert!(u[0].abs() > 1e-3, "frame vector lost fiber 1: {u:?}");
        }
        let w = frame.fiber_weights();
        let total: f64 = w.iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ricci_x_deep_interior_is_cap_curvature() {
        let tm = total_metric(5);
        let kern = desk_kernel();
        let p = (0.55, 0.5 * tm.polygon.height);
        let frame = horizontal_frame(&tm, &kern, p).unwrap();
        let k2 = tm.profile.params.k2;
        for a in 0..8 {
            let tau = std::f64::consts::TAU * a as f64 / 8.0;
            let dirs = DirectionParams::coupled(tau, None, None);
            let v = ricci_x_bound(&tm, &frame, p, &dirs).unwrap();
            assert!((v - 1.0 / (k2 * k2)).abs() < 1e-12);
        }
    }

    #[test]
    fn ricci_x_sign_flip_invariance() {
        let tm = total_metric(5);
        let kern = desk_kernel();
        let p = (0.0, 0.03);
        let frame = horizontal_frame(&tm, &kern, p).unwrap();
        let dirs = DirectionParams { x: (0.6, 0.8), y: (0.28, 0.96), z: (1.0, 0.0) };
        let v = ricci_x_bound(&tm, &frame, p, &dirs).unwrap();
        for flipped in [
            DirectionParams { x: (-0.6, 0.8), ..dirs },
            DirectionParams { x: (0.6, -0.8), ..dirs },
            DirectionParams { y: (-0.28, 0.96), ..dirs },
            DirectionParams { z: (-1.0, 0.0), ..dirs },
        ] {
            let w = ricci_x_bound(&tm, &frame, p, &flipped).unwrap();
            assert_eq!(v, w);
        }
    }

    #[test]
    fn first_cap_bound_is_positive_everywhere() {
        let tm = total_metric(5);
        let kern = desk_kernel();
        let pr = &tm.profile.params;
        let pts = [
            (-pr.delta + 1e-3, 0.5 * tm.polygon.height),
            (0.0, 0.02),
            (0.05, tm.polygon.height - 0.02),
            (pr.epsilon - 1e-3, 1.0),
        ];
        for &p in &pts {
            let coef = tm.coefficients(p).unwrap();
            let (ax, ay) = active_normal_angles(&coef);
            let frame = horizontal_frame(&tm, &kern, p).unwrap();
            for a in 0..16 {
                let tau = std::f64::consts::TAU * a as f64 / 16.0;
                let dirs = DirectionParams::coupled(tau, ax, ay);
                let v = ricci_x_bound(&tm, &frame, p, &dirs).unwrap();
                assert!(v > 0.0, "ric_x = {v} at {p:?}, tau = {tau}");
            }
            for i in 0..frame.n() {
                let v = ricci_u_bound(&tm, &frame, p, i).unwrap();
                assert!(v > 0.0, "ric_u[{i}] = {v} at {p:?}");
            }
        }
    }

    #[test]
    fn band_vertical_direction_is_not_certified() {
        // Mid-band, far from the cut edges: the only negative term of the
        // vertical direction is the base −1, and the warping of the first
        // fiber recovers at most tanh(ε+ν)·cot((ε+δ)/4ε)/4ε < 1 of it.  The
        // bound is genuinely negative there, which is why the default
        // certification window stops at the first cap.
        let tm = total_metric(5);
        let kern = desk_kernel();
        let p = (1.5 * tm.profile.params.epsilon, 0.5 * tm.polygon.height);
        let frame = horizontal_frame(&tm, &kern, p).unwrap();
        let vertical = DirectionParams::coupled(std::f64::consts::FRAC_PI_2, None, None);
        let v = ricci_x_bound(&tm, &frame, p, &vertical).unwrap();
        assert!(v < 0.0, "expected a negative vertical bound, got {v}");
        // Even the normal direction stays negative here: the frame weight of
        // the collapsing fiber is diluted to about 2μ²/f₁² once f₁ has grown
        // past μ, so the 1/(16ε²) term cannot make up the base −1.
        let w1 = frame.fiber_weights()[0];
        assert!(w1 < 0.1, "expected a diluted first-fiber weight, got {w1}");
        let normal = DirectionParams::coupled(0.0, None, None);
        let w = ricci_x_bound(&tm, &frame, p, &normal).unwrap();
        assert!(w < 0.0, "normal-direction bound should stay negative: {w}");
    }

    #[test]
    fn band_components_termwise_nonnegative() {
        // For x ≤ 2ε every pure-fiber sectional component is nonnegative.
        let tm = total_metric(5);
        let pts = [(0.0, 0.02), (0.15, 0.03), (0.18, tm.polygon.height - 0.04), (-0.1, 0.5)];
        for &p in &pts {
            let c = components_base(&tm, p).unwrap();
            for i in 0..c.m {
                for j in 0..c.m {
                    assert!(c.ij[i][j] >= -1e-12, "ij[{i}][{j}] = {} at {p:?}", c.ij[i][j]);
                }
            }
        }
    }

    #[test]
    fn relaxed_band_bound_behaviour() {
        let params = MetricParams::reference(Branch::Shifted);
        let normal = DirectionParams { x: (0.0, 1.0), y: (0.0, 1.0), z: (1.0, 0.0) };
        // The 1/(16ε²) term decreases when ε grows.
        let mut wider = params;
        wider.epsilon = 0.12;
        let b0 = relaxed_band_bound(&params, 3, 0.5, &normal);
        let b1 = relaxed_band_bound(&wider, 3, 0.5, &normal);
        assert!(b1 < b0);
        // Without the band tilt (ν = 0) the vertical direction loses its
        // only positive term and the relaxed bound goes non-positive.
        let mut flat = params;
        flat.nu = 0.0;
        let vertical = DirectionParams { x: (0.0, 1.0), y: (0.0, 1.0), z: (0.0, 1.0) };
        assert!(relaxed_band_bound(&flat, 3, 0.5, &vertical) <= -1.0 + 1e-12);
    }

    #[test]
    fn oracle_deep_interior_constant_curvature() {
        let tm = total_metric(5);
        let p = (0.55, 0.5 * tm.polygon.height);
        let oracle = fd_oracle(&tm, p).unwrap();
        let k2 = tm.profile.params.k2;
        assert!((oracle.components.base - 1.0 / (k2 * k2)).abs() < 1e-6);
        // All fiber components vanish on the plateau.
        for i in 0..oracle.components.m {
            assert!(oracle.components.xi[i].abs() < 1e-8);
            assert!(oracle.components.yi[i].abs() < 1e-8);
            assert!(oracle.components.mixed[i].abs() < 1e-8);
        }
        assert!(oracle.bianchi < 1e-6);
    }

    #[test]
    fn oracle_matches_closed_forms() {
        let tm = total_metric(5);
        let pts = [
            (0.05, 0.03),                        // first cap, fibers 1 and 5 active
            (0.15, 0.5 * tm.polygon.height),     // band interior
            (0.05, tm.polygon.height - 0.03),    // under the top cut, fibers 1 and 2 active
            (-0.05, 0.6 * tm.polygon.height),    // first cap interior
        ];
        for &p in &pts {
            let oracle = fd_oracle(&tm, p).unwrap();
            let closed = components_to_tensor(&components_base(&tm, p).unwrap());
            let dev = max_tensor_deviation(&oracle.tensor, &closed);
            assert!(dev < 1e-5, "deviation {dev} at {p:?}");
            assert!(oracle.bianchi < 1e-6, "bianchi {} at {p:?}", oracle.bianchi);
        }
    }

    #[test]
    fn oracle_rejects_breakpoint_neighborhood() {
        let tm = total_metric(5);
        let eps = tm.profile.params.epsilon;
        assert!(matches!(
            fd_oracle(&tm, (eps + 1e-4, 0.5 * tm.polygon.height)),
            Err(CurvatureError::NearBreakpoint(_))
        ));
    }

    #[test]
    fn ricci_u_matches_oracle_assembly() {
        let tm = total_metric(5);
        let kern = desk_kernel();
        let p = (0.05, 0.03);
        let frame = horizontal_frame(&tm, &kern, p).unwrap();
        let oracle = fd_oracle(&tm, p).unwrap();
        let t = &oracle.tensor;
        for i in 0..frame.n() {
            let closed = ricci_u_bound(&tm, &frame, p, i).unwrap();
            // Assemble the same sum from the full numerical tensor,
            // including the cross terms the closed form drops as zero.
            let c = &frame.vectors[i];
            let m = tm.m();
            let mut v = 0.0;
            for a in 0..2 {
                for l in 0..m {
                    for s in 0..m {
                        v += c[l] * c[s] * t.at(a, 2 + l, a, 2 + s);
                    }
                }
            }
            for (j, cj) in frame.vectors.iter().enumerate() {
                if j == i {
                    continue;
                }
                for l in 0..m {
                    for s in 0..m {
                        for l2 in 0..m {
                            for s2 in 0..m {
                                v += c[l] * cj[s] * c[l2] * cj[s2] * t.at(2 + l, 2 + s, 2 + l2, 2 + s2);
                            }
                        }
                    }
                }
            }
            let tol = 1e-4 * closed.abs().max(1.0);
            assert!((closed - v).abs() < tol, "frame {i}: closed {closed} vs oracle {v}");
        }
    }

    #[test]
    fn certify_first_cap_passes() {
        let tm = total_metric(5);
        let kern = desk_kernel();
        let grid = GridSpec::cap_default(&tm, 12, 16);
        let report = certify(&tm, &kern, &grid).unwrap();
        assert!(report.pass, "min_x = {}, min_u = {}", report.min_ric_x, report.min_ric_u);
        assert_eq!(report.nonpositive, 0);
        assert!(report.min_ric_x > 0.0 && report.min_ric_u > 0.0);
        assert!(report.oracle_deviation.is_nan() || report.oracle_deviation < 1e-5);
        // CSV: header plus one row per point.
        assert_eq!(report.csv.lines().count(), report.points + 1);
        assert!(report.csv.starts_with("x,y,region,min_bound\n"));
        // Determinism: a rerun is byte-identical.
        let again = certify(&tm, &kern, &grid).unwrap();
        assert_eq!(report.csv, again.csv);
    }

    #[test]
    fn certify_deep_interior_grid() {
        let tm = total_metric(5);
        let kern = desk_kernel();
        let grid = GridSpec::deep_interior(&tm, 8, 10);
        let report = certify(&tm, &kern, &grid).unwrap();
        let k2 = tm.profile.params.k2;
        assert!((report.min_ric_x - 1.0 / (k2 * k2)).abs() < 1e-9, "min_x = {}", report.min_ric_x);
    }
}
