//! Model parameters and the deterministic curve `λ²`.
//!
//! Curves are restricted to representations whose bounded-variation
//! structure is available in closed form (constant, linear, piecewise
//! linear, exponential relaxation). This keeps the measure inequalities
//! of the uniqueness criteria exact rather than sampled.

use thiserror::Error;

/// Hard cap on the number of knots of a piecewise-linear curve.
pub const MAX_KNOTS: usize = 1_000_000;

/// Relative slack accepted when evaluating a curve at its domain end,
/// so that uniform grids built as `k · dt` do not fall out of domain
/// by a rounding error.
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("sigma must be a positive finite real, got {0}")]
    InvalidSigma(f64),
    #[error("delta must be a positive finite real, got {0}")]
    InvalidDelta(f64),
    #[error("b must be a nonnegative finite real, got {0}")]
    InvalidB(f64),
    #[error("p must lie in (0,1), got {0}; for |2p-1| > 1 no solution exists")]
    InvalidP(f64),
    #[error("curve: {0}")]
    InvalidCurve(String),
    #[error("time {t} outside curve domain [0, {domain_end}]")]
    OutOfDomain { t: f64, domain_end: f64 },
    #[error("interval start {s} must be strictly below end {t}")]
    EmptyInterval { s: f64, t: f64 },
}

/// The quadruple `(σ, δ, b, p)` defining the SDE and the skewness.
///
/// Validation is strict: out-of-range values are rejected, never
/// clamped. In particular `p ∈ (0,1)` so the skew coefficient `2p−1`
/// lies in `(−1, 1)`; outside that range the equation has no solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    sigma: f64,
    delta: f64,
    b: f64,
    p: f64,
}

impl ModelParams {
    pub fn new(sigma: f64, delta: f64, b: f64, p: f64) -> Result<Self, ModelError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ModelError::InvalidSigma(sigma));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(ModelError::InvalidDelta(delta));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(ModelError::InvalidB(b));
        }
        if !(p.is_finite() && p > 0.0 && p < 1.0) {
            return Err(ModelError::InvalidP(p));
        }
        Ok(Self { sigma, delta, b, p })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// The prefactor `2p − 1` of the local-time term.
    pub fn skew_coefficient(&self) -> f64 {
        2.0 * self.p - 1.0
    }

    /// `σ²δ/4`, the constant drift bound entering the `p > 1/2`
    /// uniqueness condition.
    pub fn drift_cap(&self) -> f64 {
        self.sigma * self.sigma * self.delta / 4.0
    }

    /// The drift `(σ²/4)(δ − b·x)` of the SDE at state `x`.
    pub fn drift(&self, x: f64) -> f64 {
        self.sigma * self.sigma / 4.0 * (self.delta - self.b * x)
    }
}

/// Jordan decomposition of `dλ²` over an interval `[s, t)`:
/// total increase and total decrease, both nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedMeasureSummary {
    pub positive_mass: f64,
    pub negative_mass: f64,
}

impl SignedMeasureSummary {
    pub fn net(&self) -> f64 {
        self.positive_mass - self.negative_mass
    }
}

/// The deterministic curve `λ² : [0, T_max] → ℝ⁺`.
///
/// All admitted representations are continuous, nonnegative and of
/// finite variation with closed-form Jordan decomposition.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    /// `λ²(t) = c`.
    Constant { value: f64, domain_end: f64 },
    /// `λ²(t) = intercept + slope · t`.
    Linear {
        intercept: f64,
        slope: f64,
        domain_end: f64,
    },
    /// Exact linear interpolation between knots `(tᵢ, vᵢ)` with
    /// strictly increasing times; the domain is `[t₀, t_last]` with
    /// `t₀ = 0`.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    /// `λ²(t) = a + (c − a) e^{−k t}`, relaxing from `c` at `t = 0`
    /// towards `a`.
    ExpRelaxation {
        a: f64,
        c: f64,
        k: f64,
        domain_end: f64,
    },
}

impl Curve {
    pub fn constant(value: f64, domain_end: f64) -> Result<Self, ModelError> {
        let curve = Curve::Constant { value, domain_end };
        curve.validate()?;
        Ok(curve)
    }

    pub fn linear(intercept: f64, slope: f64, domain_end: f64) -> Result<Self, ModelError> {
        let curve = Curve::Linear {
            intercept,
            slope,
            domain_end,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        let curve = Curve::PiecewiseLinear { knots };
        curve.validate()?;
        Ok(curve)
    }

    pub fn exp_relaxation(a: f64, c: f64, k: f64, domain_end: f64) -> Result<Self, ModelError> {
        let curve = Curve::ExpRelaxation { a, c, k, domain_end };
        curve.validate()?;
        Ok(curve)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidCurve(msg));
        match self {
            Curve::Constant { value, domain_end } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return bad(format!("constant value must be >= 0, got {value}"));
                }
                if !(domain_end.is_finite() && *domain_end > 0.0) {
                    return bad(format!("domain_end must be > 0, got {domain_end}"));
                }
            }
            Curve::Linear {
                intercept,
                slope,
                domain_end,
            } => {
                if !(domain_end.is_finite() && *domain_end > 0.0) {
                    return bad(format!("domain_end must be > 0, got {domain_end}"));
                }
                if !intercept.is_finite() || !slope.is_finite() {
                    return bad("linear coefficients must be finite".into());
                }
                // An affine function is nonnegative on [0, T] iff it is at
                // the endpoints.
                if *intercept < 0.0 || intercept + slope * domain_end < 0.0 {
                    return bad(format!(
                        "linear curve becomes negative on [0, {domain_end}]"
                    ));
                }
            }
            Curve::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return bad("piecewise curve needs at least two knots".into());
                }
                if knots.len() > MAX_KNOTS {
                    return bad(format!("knot count {} exceeds cap {MAX_KNOTS}", knots.len()));
                }
                if knots[0].0 != 0.0 {
                    return bad(format!("first knot must be at t = 0, got {}", knots[0].0));
                }
                for (t, v) in knots {
                    if !t.is_finite() || !v.is_finite() {
                        return bad("knots must be finite".into());
                    }
                    if *v < 0.0 {
                        return bad(format!("knot value at t = {t} is negative ({v})"));
                    }
                }
                for window in knots.windows(2) {
                    if window[1].0 <= window[0].0 {
                        return bad(format!(
                            "knot times must be strictly increasing, got {} then {}",
                            window[0].0, window[1].0
                        ));
                    }
                }
            }
            Curve::ExpRelaxation { a, c, k, domain_end } => {
                if !(domain_end.is_finite() && *domain_end > 0.0) {
                    return bad(format!("domain_end must be > 0, got {domain_end}"));
                }
                if !(a.is_finite() && *a >= 0.0) || !(c.is_finite() && *c >= 0.0) {
                    return bad("exp relaxation needs a >= 0 and c >= 0".into());
                }
                if !(k.is_finite() && *k > 0.0) {
                    return bad(format!("exp relaxation rate k must be > 0, got {k}"));
                }
                // The curve stays between a and c, so nonnegativity of the
                // endpoints covers the interior.
            }
        }
        Ok(())
    }

    /// End of the time domain `T_max`.
    pub fn domain_end(&self) -> f64 {
        match self {
            Curve::Constant { domain_end, .. } => *domain_end,
            Curve::Linear { domain_end, .. } => *domain_end,
            Curve::PiecewiseLinear { knots } => knots.last().expect("validated").0,
            Curve::ExpRelaxation { domain_end, .. } => *domain_end,
        }
    }

    fn check_time(&self, t: f64) -> Result<f64, ModelError> {
        let end = self.domain_end();
        let slack = DOMAIN_SLACK * end.max(1.0);
        if !t.is_finite() || t < -slack || t > end + slack {
            return Err(ModelError::OutOfDomain { t, domain_end: end });
        }
        Ok(t.clamp(0.0, end))
    }

    /// `λ²(t)`. Piecewise-linear curves use exact interpolation
    /// between knots.
    pub fn evaluate(&self, t: f64) -> Result<f64, ModelError> {
        let t = self.check_time(t)?;
        Ok(match self {
            Curve::Constant { value, .. } => *value,
            Curve::Linear { intercept, slope, .. } => intercept + slope * t,
            Curve::PiecewiseLinear { knots } => {
                let idx = self.segment_index(t);
                let (t0, v0) = knots[idx];
                let (t1, v1) = knots[idx + 1];
                v0 + (v1 - v0) * ((t - t0) / (t1 - t0))
            }
            Curve::ExpRelaxation { a, c, k, .. } => a + (c - a) * (-k * t).exp(),
        })
    }

    /// Index of the piecewise segment containing `t` (right-continuous;
    /// the last segment is closed on the right).
    fn segment_index(&self, t: f64) -> usize {
        match self {
            Curve::PiecewiseLinear { knots } => {
                let n = knots.len();
                match knots.partition_point(|(kt, _)| *kt <= t) {
                    0 => 0,
                    idx if idx >= n => n - 2,
                    idx => idx - 1,
                }
            }
            _ => 0,
        }
    }

    /// The a.e. derivative of `λ²` at `t`. At a knot of a piecewise
    /// curve the right-hand slope is reported (the choice is on a
    /// Lebesgue-null set and is used consistently by the residual
    /// checks).
    pub fn slope_at(&self, t: f64) -> Result<f64, ModelError> {
        let t = self.check_time(t)?;
        Ok(match self {
            Curve::Constant { .. } => 0.0,
            Curve::Linear { slope, .. } => *slope,
            Curve::PiecewiseLinear { knots } => {
                let idx = self.segment_index(t);
                let (t0, v0) = knots[idx];
                let (t1, v1) = knots[idx + 1];
                (v1 - v0) / (t1 - t0)
            }
            Curve::ExpRelaxation { a, c, k, .. } => -k * (c - a) * (-k * t).exp(),
        })
    }

    /// Jordan decomposition of `dλ²` over `[s, t)`: exact total
    /// increase and decrease. For the admitted representations the
    /// decomposition follows segment-by-segment from the sign of the
    /// slope.
    pub fn jordan_decomposition(&self, s: f64, t: f64) -> Result<SignedMeasureSummary, ModelError> {
        let s = self.check_time(s)?;
        let t = self.check_time(t)?;
        if s >= t {
            return Err(ModelError::EmptyInterval { s, t });
        }
        let mut positive = 0.0;
        let mut negative = 0.0;
        let mut add = |delta: f64| {
            if delta >= 0.0 {
                positive += delta;
            } else {
                negative -= delta;
            }
        };
        match self {
            Curve::Constant { .. } => {}
            Curve::Linear { slope, .. } => add(slope * (t - s)),
            Curve::PiecewiseLinear { knots } => {
                for window in knots.windows(2) {
                    let (t0, v0) = window[0];
                    let (t1, v1) = window[1];
                    let lo = t0.max(s);
                    let hi = t1.min(t);
                    if hi > lo {
                        add((v1 - v0) / (t1 - t0) * (hi - lo));
                    }
                }
            }
            Curve::ExpRelaxation { .. } => {
                // Monotone, so the decomposition is one-sided and exact.
                add(self.evaluate(t)? - self.evaluate(s)?);
            }
        }
        Ok(SignedMeasureSummary {
            positive_mass: positive,
            negative_mass: negative,
        })
    }

    /// Exact extrema of the a.e. derivative of `λ²` over `[s, t]`.
    pub fn slope_bounds(&self, s: f64, t: f64) -> Result<(f64, f64), ModelError> {
        let s = self.check_time(s)?;
        let t = self.check_time(t)?;
        if s >= t {
            return Err(ModelError::EmptyInterval { s, t });
        }
        Ok(match self {
            Curve::Constant { .. } => (0.0, 0.0),
            Curve::Linear { slope, .. } => (*slope, *slope),
            Curve::PiecewiseLinear { knots } => {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for window in knots.windows(2) {
                    let (t0, v0) = window[0];
                    let (t1, v1) = window[1];
                    if t1 > s && t0 < t {
                        let slope = (v1 - v0) / (t1 - t0);
                        min = min.min(slope);
                        max = max.max(slope);
                    }
                }
                (min, max)
            }
            Curve::ExpRelaxation { .. } => {
                // The derivative is monotone in t, so the extrema sit at
                // the interval endpoints.
                let ds = self.slope_at(s)?;
                let dt = self.slope_at(t)?;
                (ds.min(dt), ds.max(dt))
            }
        })
    }

    /// Maximum of `λ²` over `[0, horizon]` (used to size residual grids).
    pub fn max_value(&self, horizon: f64) -> Result<f64, ModelError> {
        let horizon = self.check_time(horizon)?;
        Ok(match self {
            Curve::Constant { value, .. } => *value,
            Curve::Linear { .. } | Curve::ExpRelaxation { .. } => {
                // Monotone between the endpoints.
                self.evaluate(0.0)?.max(self.evaluate(horizon)?)
            }
            Curve::PiecewiseLinear { knots } => {
                let mut max = self.evaluate(horizon)?;
                for (kt, kv) in knots {
                    if *kt <= horizon {
                        max = max.max(*kv);
                    }
                }
                max.max(self.evaluate(0.0)?)
            }
        })
    }

    /// Whether the representation is continuously differentiable
    /// (required by the C¹ uniqueness criterion).
    pub fn is_c1(&self) -> bool {
        !matches!(self, Curve::PiecewiseLinear { .. })
    }
}
