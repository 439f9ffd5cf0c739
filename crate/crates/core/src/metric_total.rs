//! The fiber warping functions `f_i`, the full block-diagonal metric on
//! `D × T^m`, the orthonormal coframe scales, and the boundary-descent check
//! that the degenerate directions are exactly the collapsed circles.
//!
//! Each circle factor carries the metric of total length 2π, so the i-th
//! fiber coefficient is `f_i²` with `f_i` vanishing on the edge Γ_i.

use thiserror::Error;

use crate::profile::{ProfileError, ProfileG};
use crate::quadrangle::{fermi_chart, ChartPoint, FermiChart, PolygonD, QuadError};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("chart failure for fiber {0}: {1}")]
    Chart(usize, QuadError),
    #[error("profile error: {0}")]
    Profile(#[from] ProfileError),
    #[error("point ({0}, {1}) outside the polygon")]
    OutsidePolygon(f64, f64),
}

/// One fiber warping function `f_i`, tied to the Fermi chart of its edge:
/// `f_i = μ_i sin(ρ_i/μ_i)` up to the sine peak at `(π/2)μ_i`, constant
/// `μ_i` beyond it (so the glue is C¹).
#[derive(Debug, Clone)]
pub struct FiberProfile {
    /// 1-based fiber index; fiber i collapses over edge Γ_i.
    pub index: usize,
    /// μ_i: 4ε for i = 1, μ otherwise.
    pub scale: f64,
    pub chart: FermiChart,
}

/// Value and derivative data of a fiber function at a base point.
#[derive(Debug, Clone)]
pub struct FiberValue {
    pub value: f64,
    /// Coordinate partials (∂f/∂x, ∂f/∂y).
    pub grad: (f64, f64),
    /// Distance to the edge (capped reporting on the plateau).
    pub rho: f64,
    /// f′(ρ) and f″(ρ) along the normal direction.
    pub d_rho: f64,
    pub d_rho2: f64,
    /// True when the point sits on the constant plateau f = μ_i.
    pub plateau: bool,
    /// Chart data when the point resolved to a unique foot.
    pub chart_point: Option<ChartPoint>,
}

impl FiberProfile {
    /// End of the sine branch: the derivative vanishes there, so the
    /// constant extension is C¹.
    pub fn breakpoint(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 * self.scale
    }

    pub fn eval(&self, g: &ProfileG, p: (f64, f64)) -> Result<FiberValue, MetricError> {
        let cap = self.breakpoint();
        // Query a little past the breakpoint so near-plateau points still
        // resolve their foot; farther out the plateau needs no chart.
        match self.chart.query_radius(p, cap * 1.05 + 1e-6) {
            Ok(cp) => {
                if cp.rho >= cap {
                    Ok(FiberValue {
                        value: self.scale,
                        grad: (0.0, 0.0),
                        rho: cp.rho,
                        d_rho: 0.0,
                        d_rho2: 0.0,
                        plateau: true,
                        chart_point: Some(cp),
                    })
                } else {
                    let t = cp.rho / self.scale;
                    let value = self.scale * t.sin();
                    let d_rho = t.cos();
                    let d_rho2 = -t.sin() / self.scale;
                    // dρ = cos α dx + G sin α dy with α the outward normal
                    // angle in the orthonormal frame.
                    let gv = g.g(p.0)?;
                    let (ca, sa) = (cp.normal_angle.cos(), cp.normal_angle.sin());
                    Ok(FiberValue {
                        value,
                        grad: (d_rho * ca, d_rho * gv * sa),
                        rho: cp.rho,
                        d_rho,
                        d_rho2,
                        plateau: false,
                        chart_point: Some(cp),
                    })
                }
            }
            Err(QuadError::OutsideTube(lower, _)) if lower >= cap => Ok(FiberValue {
                value: self.scale,
                grad: (0.0, 0.0),
                rho: lower,
                d_rho: 0.0,
                d_rho2: 0.0,
                plateau: true,
                chart_point: None,
            }),
            Err(e) => Err(MetricError::Chart(self.index, e)),
        }
    }
}

/// Diagonal metric coefficients at a base point, in the coordinate order
/// `(x, y, φ₁, …, φ_m)`.
#[derive(Debug, Clone)]
pub struct MetricCoefficients {
    /// (1, G², f₁², …, f_m²).
    pub diag: Vec<f64>,
    pub g: f64,
    pub fibers: Vec<FiberValue>,
}

impl MetricCoefficients {
    pub fn determinant(&self) -> f64 {
        self.diag.iter().product()
    }

    /// Orthonormal coframe scales (1, G, f₁, …, f_m); degenerate entries
    /// are zero.
    pub fn coframe(&self) -> Vec<f64> {
        let mut out = vec![1.0, self.g];
        out.extend(self.fibers.iter().map(|f| f.value));
        out
    }
}

/// The piecewise-smooth invariant metric on `D × T^m`; coefficients never
/// read the φ variables, so T^m-invariance is structural.
#[derive(Debug, Clone)]
pub struct TotalMetric {
    pub profile: ProfileG,
    pub polygon: PolygonD,
    pub fibers: Vec<FiberProfile>,
}

impl TotalMetric {
    pub fn build(g: &ProfileG, polygon: &PolygonD) -> Result<Self, MetricError> {
        let eps = g.params.epsilon;
        let mu = g.params.mu;
        let mut fibers = Vec::with_capacity(polygon.m);
        for i in 1..=polygon.m {
            let chart = fermi_chart(g, polygon, i).map_err(|e| MetricError::Chart(i, e))?;
            let scale = if i == 1 { 4.0 * eps } else { mu };
            fibers.push(FiberProfile { index: i, scale, chart });
        }
        Ok(TotalMetric { profile: g.clone(), polygon: polygon.clone(), fibers })
    }

    pub fn m(&self) -> usize {
        self.polygon.m
    }

    /// Diagonal coefficients `(1, G², f₁², …, f_m²)` at a base point.
    pub fn coefficients(&self, p: (f64, f64)) -> Result<MetricCoefficients, MetricError> {
        let gv = self.profile.g(p.0)?;
        let mut diag = vec![1.0, gv * gv];
        let mut fibers = Vec::with_capacity(self.fibers.len());
        for fp in &self.fibers {
            let fv = fp.eval(&self.profile, p)?;
            diag.push(fv.value * fv.value);
            fibers.push(fv);
        }
        Ok(MetricCoefficients { diag, g: gv, fibers })
    }

    /// Fermi-block coefficients `(1, h_k², f₁², …, f_m²)` in the chart of
    /// edge k.
    pub fn coefficients_fermi(&self, k: usize, p: (f64, f64)) -> Result<MetricCoefficients, MetricError> {
        let chart = &self.fibers[k - 1].chart;
        let cp = chart.query(p).map_err(|e| MetricError::Chart(k, e))?;
        let mut diag = vec![1.0, cp.h * cp.h];
        let mut fibers = Vec::with_capacity(self.fibers.len());
        for fp in &self.fibers {
            let fv = fp.eval(&self.profile, p)?;
            diag.push(fv.value * fv.value);
            fibers.push(fv);
        }
        Ok(MetricCoefficients { diag, g: cp.h, fibers })
    }
}

/// One boundary or interior probe of [`descent_check`].
#[derive(Debug, Clone)]
pub struct DescentSample {
    pub point: (f64, f64),
    pub location: DescentLocation,
    /// Fiber indices whose coefficient vanished (below tolerance).
    pub collapsed: Vec<usize>,
    /// Indices expected to vanish from the N_m identification.
    pub expected: Vec<usize>,
    pub determinant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentLocation {
    Edge(usize),
    Vertex(usize),
    Interior,
}

#[derive(Debug, Clone)]
pub struct DescentReport {
    pub samples: Vec<DescentSample>,
    pub max_collapse_residual: f64,
    pub pass: bool,
}

/// Sample the polygon boundary and interior and confirm the metric
/// degenerates exactly on the circles collapsed by the N_m identification:
/// fiber i over the open edge Γ_i, fibers i and i+1 at the vertex F_i.
pub fn descent_check(tm: &TotalMetric, per_edge: usize) -> Result<DescentReport, MetricError> {
    let tol = 1e-7;
    let mut samples = Vec::new();
    let mut max_res = 0.0f64;
    let m = tm.m();
    for edge in &tm.polygon.edges {
        let total = *edge.arclen.last().unwrap();
        for k in 1..=per_edge {
            // Stay clear of the vertices so only one fiber collapses.
            let frac = k as f64 / (per_edge + 1) as f64;
            let s = total * (0.2 + 0.6 * frac);
            let p = edge_point_at(edge, s);
            let coef = tm.coefficients(p)?;
            let collapsed = collapsed_set(&coef, tol);
            for (i, fv) in coef.fibers.iter().enumerate() {
                if i + 1 == edge.label {
                    max_res = max_res.max(fv.value.abs());
                }
            }
            samples.push(DescentSample {
                point: p,
                location: DescentLocation::Edge(edge.label),
                collapsed,
                expected: vec![edge.label],
                determinant: coef.determinant(),
            });
        }
    }
    for v in &tm.polygon.vertices {
        let coef = tm.coefficients(v.position)?;
        let next = v.label % m + 1;
        samples.push(DescentSample {
            point: v.position,
            location: DescentLocation::Vertex(v.label),
            collapsed: collapsed_set(&coef, tol),
            expected: vec![v.label, next],
            determinant: coef.determinant(),
        });
    }
    // Interior probes along the vertical mid-strip.
    let h = tm.polygon.height;
    for k in 1..=per_edge {
        let y = h * k as f64 / (per_edge + 1) as f64;
        let x = (-tm.profile.params.delta + tm.polygon.right_x(y)) * 0.5;
        let p = (x, y);
        if !tm.polygon.contains(p) {
            continue;
        }
        let coef = tm.coefficients(p)?;
        samples.push(DescentSample {
            point: p,
            location: DescentLocation::Interior,
            collapsed: collapsed_set(&coef, tol),
            expected: Vec::new(),
            determinant: coef.determinant(),
        });
    }
    let pass = samples.iter().all(|s| {
        let mut got = s.collapsed.clone();
        let mut want = s.expected.clone();
        got.sort_unstable();
        want.sort_unstable();
        match s.location {
            DescentLocation::Interior => got.is_empty() && s.determinant > 0.0,
            _ => got == want,
        }
    });
    Ok(DescentReport { samples, max_collapse_residual: max_res, pass })
}

fn collapsed_set(coef: &MetricCoefficients, tol: f64) -> Vec<usize> {
    coef.fibers
        .iter()
        .enumerate()
        .filter(|(_, f)| f.value.abs() < tol)
        .map(|(i, _)| i + 1)
        .collect()
}

fn edge_point_at(edge: &crate::quadrangle::PolygonEdge, s: f64) -> (f64, f64) {
    let n = edge.points.len();
    let mut lo = 0;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if edge.arclen[mid] <= s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = (s - edge.arclen[lo]) / (edge.arclen[hi] - edge.arclen[lo]).max(1e-300);
    let a = edge.points[lo];
    let b = edge.points[hi];
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}
