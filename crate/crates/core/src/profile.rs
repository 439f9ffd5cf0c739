//! The base-surface profile: the matching equations for `k1` and `x0`, the
//! piecewise function `G` gluing a sphere cap of radius `k1`, a hyperbolic
//! band and a sphere cap of radius `k2`, and piecewise curvature/continuity
//! diagnostics.
//!
//! Convention: the surface metric is `ds0^2 = dx^2 + G(x)^2 dy^2`, so the
//! Gauss curvature is `-G''/G` and the area density is `G`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{bisect, NumericsError};

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("parameter invariant violated: {0}")]
    Invariant(String),
    #[error("x = {0} is left of the domain start -delta = {1}")]
    LeftOfDomain(f64, f64),
    #[error("x = {0} is beyond the positivity domain (G vanishes at {1})")]
    BeyondPositivity(f64, f64),
    #[error("root finding failed: {0}")]
    Root(#[from] NumericsError),
}

/// Which solution of the `k2` matching equation the third piece uses.
///
/// `Principal` keeps `G` C^1 at `2ε` with `G` decreasing there; `Shifted`
/// mirrors the angle so `G` increases after `2ε` at the cost of a derivative
/// kink of `2 sinh ν`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Principal,
    Shifted,
}

/// All scalar parameters of the metric construction.  `k1` and `x0` are
/// solved from the matching equations; the rest are chosen.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricParams {
    pub epsilon: f64,
    pub delta: f64,
    pub nu: f64,
    /// Height of the quadrangle strip.
    pub big_delta: f64,
    pub k2: f64,
    /// Solved from the first matching equation.
    pub k1: f64,
    /// Solved from the second matching equation.
    pub x0: f64,
    pub mu1: f64,
    pub mu: f64,
    /// x-coordinate of the geodesic chord endpoints (r, 0) and (r, Δ).
    pub r: f64,
    pub branch: Branch,
}

impl MetricParams {
    /// Reference configuration satisfying every invariant with comfortable
    /// margins; `k1`, `x0` are placeholders until the profile is solved.
    pub fn reference(branch: Branch) -> Self {
        MetricParams {
            epsilon: 0.1,
            delta: 0.15,
            nu: 0.05,
            big_delta: 1.0,
            k2: 10.0,
            k1: f64::NAN,
            x0: f64::NAN,
            mu1: 0.12,
            mu: 0.05,
            r: 0.26,
            branch: Branch::Shifted,
        }
        .with_branch(branch)
    }

    fn with_branch(mut self, branch: Branch) -> Self {
        self.branch = branch;
        self
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let e = self.epsilon;
        let bound = e * (std::f64::consts::PI - 1.0);
        if !(e > 0.0) {
            return Err(ProfileError::Invariant("epsilon must be positive".into()));
        }
        if !(bound > self.delta && self.delta > self.nu && self.nu > 0.0) {
            return Err(ProfileError::Invariant(format!(
                "need epsilon*(pi-1) > delta > nu > 0, got {bound:.6} > {} > {} > 0",
                self.delta, self.nu
            )));
        }
        if !(self.k2 > 0.0) {
            return Err(ProfileError::Invariant("k2 must be positive".into()));
        }
        if !(self.big_delta > 0.0) {
            return Err(ProfileError::Invariant("Delta must be positive".into()));
        }
        if self.mu1 > bound {
            return Err(ProfileError::Invariant(format!(
                "mu1 = {} exceeds epsilon*(pi-1) = {bound:.6}",
                self.mu1
            )));
        }
        if self.mu > 2.0 * std::f64::consts::PI * self.mu1 {
            return Err(ProfileError::Invariant(format!(
                "mu = {} exceeds 2*pi*mu1 = {:.6}",
                self.mu,
                2.0 * std::f64::consts::PI * self.mu1
            )));
        }
        if self.mu >= e {
            return Err(ProfileError::Invariant(format!("mu = {} must be smaller than epsilon = {e}", self.mu)));
        }
        if !(self.mu > 0.0 && self.mu1 > 0.0) {
            return Err(ProfileError::Invariant("mu and mu1 must be positive".into()));
        }
        if self.r <= 2.0 * e {
            return Err(ProfileError::Invariant(format!("r = {} must exceed 2*epsilon = {}", self.r, 2.0 * e)));
        }
        Ok(())
    }
}

/// Solve `tanh(ε+ν) = tan((ε+δ)/k1) / k1` for `k1`, with the angle
/// `(ε+δ)/k1` in `(0, π/2)`.
pub fn solve_k1(eps: f64, delta: f64, nu: f64) -> Result<f64, ProfileError> {
    if !(eps > 0.0 && eps * (std::f64::consts::PI - 1.0) > delta && delta > nu && nu > 0.0) {
        return Err(ProfileError::Invariant(format!(
            "solve_k1 needs epsilon*(pi-1) > delta > nu > 0, got eps={eps}, delta={delta}, nu={nu}"
        )));
    }
    let target = (eps + nu).tanh();
    let residual = |k1: f64| target - ((eps + delta) / k1).tan() / k1;
    // The angle sweeps (0, pi/2) as k1 runs over the bracket, and the
    // residual is monotone there.
    let lo = 2.0 * (eps + delta) / std::f64::consts::PI * (1.0 + 1e-12) + 1e-300;
    let hi = 100.0;
    let k1 = bisect(residual, lo, hi, 1e-13)?;
    Ok(k1)
}

/// Result of the `x0` matching equation.
#[derive(Debug, Clone, Copy)]
pub struct X0Solution {
    pub x0: f64,
    /// True when the chosen branch only matches C^0 at `2ε`, with a
    /// derivative kink of `2 sinh ν`.
    pub c0_only: bool,
}

/// Solve `tan((2ε - x0)/k2) = k2 tanh ν` for `x0`.
pub fn solve_x0(eps: f64, nu: f64, k2: f64, branch: Branch) -> Result<X0Solution, ProfileError> {
    if !(k2 > 0.0) {
        return Err(ProfileError::Invariant("k2 must be positive".into()));
    }
    let phi = (k2 * nu.tanh()).atan();
    match branch {
        Branch::Principal => Ok(X0Solution { x0: 2.0 * eps - k2 * phi, c0_only: false }),
        Branch::Shifted => Ok(X0Solution { x0: 2.0 * eps + k2 * phi, c0_only: true }),
    }
}

/// The solved piecewise warping profile.
#[derive(Debug, Clone)]
pub struct ProfileG {
    pub params: MetricParams,
    /// Amplitude of the first piece: `sqrt(cosh^2(ε+ν) + k1^2 sinh^2(ε+ν))`.
    pub c1: f64,
    /// Amplitude of the third piece: `sqrt(cosh^2 ν + k2^2 sinh^2 ν)`.
    pub c2: f64,
    /// Zero of the third piece; the evaluation domain is `[-δ, x_right)`.
    pub x_right: f64,
    /// Evaluate the third piece with the printed amplitude
    /// `sqrt(1 + (1+k2^2) sinh^2(ε+ν))` instead of the consistent one.
    /// Diagnostic only; breaks continuity at `2ε`.
    pub use_printed_amplitude: bool,
}

/// Evaluated jumps at a breakpoint, for [`ProfileG::continuity_report`].
#[derive(Debug, Clone, Copy)]
pub struct BreakpointJumps {
    pub x: f64,
    pub value_jump: f64,
    pub derivative_jump: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuityReport {
    pub at_eps: BreakpointJumps,
    pub at_two_eps: BreakpointJumps,
    /// Value jump at `2ε` that the printed third-piece amplitude would
    /// produce; documents the suspected typo in the displayed formula.
    pub printed_amplitude_value_jump: f64,
}

/// Gauss curvature at a point, flagged when one-sided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureAt {
    Interior(f64),
    Breakpoint { left: f64, right: f64 },
}

impl ProfileG {
    /// Solve the matching equations and assemble the profile.
    pub fn solve(mut params: MetricParams) -> Result<Self, ProfileError> {
        params.validate()?;
        params.k1 = solve_k1(params.epsilon, params.delta, params.nu)?;
        params.x0 = solve_x0(params.epsilon, params.nu, params.k2, params.branch)?.x0;
        let en = params.epsilon + params.nu;
        let c1 = (en.cosh().powi(2) + params.k1.powi(2) * en.sinh().powi(2)).sqrt();
        let c2 = (params.nu.cosh().powi(2) + params.k2.powi(2) * params.nu.sinh().powi(2)).sqrt();
        let x_right = params.x0 + params.k2 * std::f64::consts::FRAC_PI_2;
        Ok(ProfileG { params, c1, c2, x_right, use_printed_amplitude: false })
    }

    pub fn eps(&self) -> f64 {
        self.params.epsilon
    }

    fn third_amplitude(&self) -> f64 {
        if self.use_printed_amplitude {
            let en = self.params.epsilon + self.params.nu;
            (1.0 + (1.0 + self.params.k2.powi(2)) * en.sinh().powi(2)).sqrt()
        } else {
            self.c2
        }
    }

    /// Value, first and second derivative of `G` at `x`.  Breakpoints take
    /// the right-hand piece, so second derivatives there are one-sided.
    pub fn eval(&self, x: f64) -> Result<(f64, f64, f64), ProfileError> {
        let p = &self.params;
        if x < -p.delta {
            return Err(ProfileError::LeftOfDomain(x, -p.delta));
        }
        if x >= self.x_right {
            return Err(ProfileError::BeyondPositivity(x, self.x_right));
        }
        let out = if x < p.epsilon {
            let t = (x + p.delta) / p.k1;
            let v = self.c1 * t.cos();
            (v, -self.c1 / p.k1 * t.sin(), -v / (p.k1 * p.k1))
        } else if x < 2.0 * p.epsilon {
            let t = x - 2.0 * p.epsilon - p.nu;
            (t.cosh(), t.sinh(), t.cosh())
        } else {
            let a = self.third_amplitude();
            let t = (x - p.x0) / p.k2;
            let v = a * t.cos();
            (v, -a / p.k2 * t.sin(), -v / (p.k2 * p.k2))
        };
        if out.0 <= 0.0 {
            return Err(ProfileError::BeyondPositivity(x, self.x_right));
        }
        Ok(out)
    }

    /// Value only.
    pub fn g(&self, x: f64) -> Result<f64, ProfileError> {
        Ok(self.eval(x)?.0)
    }

    /// Evaluate a single piece regardless of `x`: 0 = first cap, 1 =
    /// hyperbolic band, 2 = second cap.  Used for one-sided limits.
    pub fn eval_piece(&self, piece: usize, x: f64) -> (f64, f64, f64) {
        let p = &self.params;
        match piece {
            0 => {
                let t = (x + p.delta) / p.k1;
                let v = self.c1 * t.cos();
                (v, -self.c1 / p.k1 * t.sin(), -v / (p.k1 * p.k1))
            }
            1 => {
                let t = x - 2.0 * p.epsilon - p.nu;
                (t.cosh(), t.sinh(), t.cosh())
            }
            _ => {
                let a = self.third_amplitude();
                let t = (x - p.x0) / p.k2;
                let v = a * t.cos();
                (v, -a / p.k2 * t.sin(), -v / (p.k2 * p.k2))
            }
        }
    }

    /// Index of the piece containing `x`, breakpoints going right.
    pub fn piece_of(&self, x: f64) -> usize {
        let p = &self.params;
        if x < p.epsilon {
            0
        } else if x < 2.0 * p.epsilon {
            1
        } else {
            2
        }
    }

    /// Breakpoints interior to the evaluation domain.
    pub fn breakpoints(&self) -> [f64; 2] {
        [self.params.epsilon, 2.0 * self.params.epsilon]
    }

    /// Piecewise Gauss curvature `-G''/G`.
    pub fn gauss_curvature(&self, x: f64) -> Result<CurvatureAt, ProfileError> {
        let p = &self.params;
        if x < -p.delta {
            return Err(ProfileError::LeftOfDomain(x, -p.delta));
        }
        if x >= self.x_right {
            return Err(ProfileError::BeyondPositivity(x, self.x_right));
        }
        let k_piece = [1.0 / (p.k1 * p.k1), -1.0, 1.0 / (p.k2 * p.k2)];
        for (b, pair) in [(p.epsilon, (0usize, 1usize)), (2.0 * p.epsilon, (1, 2))] {
            if x == b {
                return Ok(CurvatureAt::Breakpoint { left: k_piece[pair.0], right: k_piece[pair.1] });
            }
        }
        Ok(CurvatureAt::Interior(k_piece[self.piece_of(x)]))
    }

    /// Value and derivative jumps across both breakpoints, plus the
    /// printed-amplitude diagnostic.
    pub fn continuity_report(&self) -> ContinuityReport {
        let p = &self.params;
        let eps = p.epsilon;
        let jump = |piece_l: usize, piece_r: usize, x: f64| {
            let (vl, dl, _) = self.eval_piece(piece_l, x);
            let (vr, dr, _) = self.eval_piece(piece_r, x);
            BreakpointJumps { x, value_jump: vr - vl, derivative_jump: dr - dl }
        };
        let printed = {
            let saved = self.use_printed_amplitude;
            let mut probe = self.clone();
            probe.use_printed_amplitude = true;
            let (v_printed, _, _) = probe.eval_piece(2, 2.0 * eps);
            let (v_mid, _, _) = self.eval_piece(1, 2.0 * eps);
            let _ = saved;
            v_printed - v_mid
        };
        ContinuityReport {
            at_eps: jump(0, 1, eps),
            at_two_eps: jump(1, 2, 2.0 * eps),
            printed_amplitude_value_jump: printed,
        }
    }
}
