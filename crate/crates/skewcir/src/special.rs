//! Closed-form test functions for the generator
//! `L f(x) = (σ²/2)|x| f″(x) + (σ²/4)(δ − b x) f′(x)`.
//!
//! The family `f(x) = M(α, δ/2, b·x/2)` built from the Kummer confluent
//! hypergeometric function `M(a, b, z)` satisfies `L f = (σ²bα/4) f` on
//! `x > 0`; the special members `α = 0` (constants) and `α = δ/2`
//! (which collapses to `e^{bx/2}` via `M(a, a, z) = e^z`) drive the
//! explicit uniqueness conditions. The harmonic function `h` vanishes
//! on `ℝ⁺` and solves `L h = 0` below zero; the gated function `f_g`
//! is a strictly increasing C¹ function whose generator image has a
//! prescribed sign pattern.
//!
//! Only the series on the half-line `z ≥ 0` is implemented. The
//! criterion checks evaluate at `z = b·x/2` with `x` bounded by the
//! simulation truncation level, well inside the convergence budget;
//! Kummer functions of the second kind are not provided.

use crate::model::ModelParams;
use thiserror::Error;

/// Series cutoff: stop once the running term drops below this fraction
/// of the partial sum.
const RELATIVE_CUTOFF: f64 = 1e-15;

/// Hard cap on the number of series terms.
const MAX_TERMS: usize = 10_000;

/// Absolute tolerance of the adaptive quadrature backing `h` and `f_g`.
const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SpecialError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("Kummer series did not converge: M({a}, {b}, {z}) after {terms} terms")]
    NonConvergence { a: f64, b: f64, z: f64, terms: usize },
}

/// Value and first two derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deriv2 {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// A scalar function packaged with its first two derivatives and a
/// validity domain.
pub struct ScalarFunction {
    label: String,
    domain: (f64, f64),
    eval: Box<dyn Fn(f64) -> Result<Deriv2, SpecialError> + Send + Sync>,
}

impl std::fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarFunction")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ScalarFunction {
    pub fn new(
        label: impl Into<String>,
        domain: (f64, f64),
        eval: impl Fn(f64) -> Result<Deriv2, SpecialError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            domain,
            eval: Box::new(eval),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn eval(&self, x: f64) -> Result<Deriv2, SpecialError> {
        if !x.is_finite() || x < self.domain.0 || x > self.domain.1 {
            return Err(SpecialError::Domain(format!(
                "{} evaluated at {x} outside [{}, {}]",
                self.label, self.domain.0, self.domain.1
            )));
        }
        (self.eval)(x)
    }

    pub fn value(&self, x: f64) -> Result<f64, SpecialError> {
        Ok(self.eval(x)?.value)
    }

    /// The identity `f(x) = x` on all of ℝ.
    pub fn identity() -> Self {
        Self::new("f(x)=x", (f64::NEG_INFINITY, f64::INFINITY), |x| {
            Ok(Deriv2 { value: x, first: 1.0, second: 0.0 })
        })
    }

    /// `f(x) = e^{b x / 2}` on all of ℝ.
    pub fn exp_half(b: f64) -> Self {
        Self::new(
            format!("f(x)=exp({}*x/2)", b),
            (f64::NEG_INFINITY, f64::INFINITY),
            move |x| {
                let v = (b * x / 2.0).exp();
                Ok(Deriv2 {
                    value: v,
                    first: b / 2.0 * v,
                    second: b * b / 4.0 * v,
                })
            },
        )
    }
}

/// The time-homogeneous generator
/// `L f(x) = (σ²/2)|x| f″(x) + (σ²/4)(δ − b x) f′(x)`.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorL {
    params: ModelParams,
}

impl GeneratorL {
    pub fn new(params: ModelParams) -> Self {
        Self { params }
    }

    /// Apply `L` to reported derivatives at `x`.
    pub fn apply_deriv2(&self, d: &Deriv2, x: f64) -> f64 {
        let sigma2 = self.params.sigma() * self.params.sigma();
        sigma2 / 2.0 * x.abs() * d.second + self.params.drift(x) * d.first
    }

    pub fn apply(&self, f: &ScalarFunction, x: f64) -> Result<f64, SpecialError> {
        Ok(self.apply_deriv2(&f.eval(x)?, x))
    }

    /// Apply `L` using Richardson-extrapolated centered differences of
    /// the function values only. Used as an independent cross-check of
    /// the analytic derivatives; the coarse base step keeps quadrature
    /// noise in the backing values from swamping the second difference.
    pub fn apply_finite_difference(&self, f: &ScalarFunction, x: f64) -> Result<f64, SpecialError> {
        let h = 1e-2;
        let at = |step: f64| -> Result<(f64, f64), SpecialError> {
            let fm = f.value(x - step)?;
            let f0 = f.value(x)?;
            let fp = f.value(x + step)?;
            Ok(((fp - fm) / (2.0 * step), (fp - 2.0 * f0 + fm) / (step * step)))
        };
        let (d1_h, d2_h) = at(h)?;
        let (d1_h2, d2_h2) = at(h / 2.0)?;
        let d = Deriv2 {
            value: f.value(x)?,
            first: (4.0 * d1_h2 - d1_h) / 3.0,
            second: (4.0 * d2_h2 - d2_h) / 3.0,
        };
        Ok(self.apply_deriv2(&d, x))
    }
}

/// Kummer confluent hypergeometric function of the first kind,
/// `M(a, b, z) = Σ_{n≥0} (a)_n / (b)_n · zⁿ / n!`, for `z ≥ 0`.
///
/// Terms follow the ratio recurrence
/// `term_{n+1} / term_n = ((a+n) / ((b+n)(n+1))) · z`; summation stops
/// once two consecutive terms fall below `1e-15` of the partial sum
/// (a single small term can be a sign-change lull when `a < 0`), with
/// a hard cap of `10⁴` terms.
pub fn kummer_m(a: f64, b: f64, z: f64) -> Result<f64, SpecialError> {
    if !a.is_finite() || !b.is_finite() || !z.is_finite() {
        return Err(SpecialError::Domain(format!(
            "M({a}, {b}, {z}): arguments must be finite"
        )));
    }
    if b <= 0.0 && b == b.floor() {
        return Err(SpecialError::Domain(format!(
            "M(a, {b}, z): b must not be zero or a negative integer"
        )));
    }
    if z < 0.0 {
        return Err(SpecialError::Domain(format!(
            "M(a, b, {z}): only z >= 0 is supported"
        )));
    }
    let mut sum = 1.0f64;
    let mut term = 1.0f64;
    let mut small_streak = 0u8;
    for n in 0..MAX_TERMS {
        let nf = n as f64;
        term *= (a + nf) / ((b + nf) * (nf + 1.0)) * z;
        sum += term;
        if !sum.is_finite() {
            return Err(SpecialError::NonConvergence { a, b, z, terms: n + 1 });
        }
        if term.abs() <= RELATIVE_CUTOFF * sum.abs() {
            small_streak += 1;
            if small_streak >= 2 {
                return Ok(sum);
            }
        } else {
            small_streak = 0;
        }
    }
    Err(SpecialError::NonConvergence { a, b, z, terms: MAX_TERMS })
}

/// `M(a, b, z)` together with its first two `z`-derivatives, using the
/// contiguous relations `M′ = (a/b) M(a+1, b+1, z)` and
/// `M″ = (a(a+1))/(b(b+1)) M(a+2, b+2, z)`.
pub fn kummer_m_deriv2(a: f64, b: f64, z: f64) -> Result<Deriv2, SpecialError> {
    Ok(Deriv2 {
        value: kummer_m(a, b, z)?,
        first: a / b * kummer_m(a + 1.0, b + 1.0, z)?,
        second: a * (a + 1.0) / (b * (b + 1.0)) * kummer_m(a + 2.0, b + 2.0, z)?,
    })
}

/// Eigenvalue of [`eigenfunction`]: `L f = (σ² b α / 4) f`.
pub fn eigenvalue(params: &ModelParams, alpha: f64) -> f64 {
    params.sigma() * params.sigma() * params.b() * alpha / 4.0
}

/// The generator eigenfunction `f(x) = M(α, δ/2, b·x/2)` on `x ≥ 0`,
/// with derivatives from the term-wise differentiated series.
///
/// Requires `b > 0`; for `b = 0` the exponential family degenerates
/// and the criteria fall back to `f(x) = x`.
pub fn eigenfunction(params: &ModelParams, alpha: f64) -> Result<ScalarFunction, SpecialError> {
    if params.b() <= 0.0 {
        return Err(SpecialError::Domain(
            "eigenfunction requires b > 0 (for b = 0 use the linear family)".into(),
        ));
    }
    let beta = params.delta() / 2.0;
    let half_b = params.b() / 2.0;
    Ok(ScalarFunction::new(
        format!("f(x)=M({alpha}, {beta}, {half_b}*x)"),
        (0.0, f64::INFINITY),
        move |x| {
            let z = half_b * x;
            let m = kummer_m_deriv2(alpha, beta, z)?;
            Ok(Deriv2 {
                value: m.value,
                first: half_b * m.first,
                second: half_b * half_b * m.second,
            })
        },
    ))
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// The harmonic barrier function
///
/// ```text
/// h(x) = 0                                for x ≥ 0,
/// h(x) = −∫₀^{−x} y^{δ/2} e^{b y/2} dy    for x < 0.
/// ```
///
/// `h` is C¹ with locally integrable second derivative, nondecreasing,
/// and `L h = 0` away from the origin. Values on the negative axis are
/// computed by adaptive quadrature to absolute tolerance `1e-12`;
/// derivatives are closed-form.
pub fn harmonic_h(params: &ModelParams) -> ScalarFunction {
    let half_delta = params.delta() / 2.0;
    let half_b = params.b() / 2.0;
    ScalarFunction::new(
        "h (harmonic barrier)",
        (f64::NEG_INFINITY, f64::INFINITY),
        move |x| {
            if x >= 0.0 {
                return Ok(Deriv2 { value: 0.0, first: 0.0, second: 0.0 });
            }
            let integrand = move |y: f64| y.powf(half_delta) * (half_b * y).exp();
            let value = -adaptive_simpson(&integrand, 0.0, -x, QUAD_TOL);
            let first = (-x).powf(half_delta) * (-half_b * x).exp();
            // h″(x) = −[ (δ/2)(−x)^{δ/2−1} + (b/2)(−x)^{δ/2} ] e^{−bx/2}
            let second = -((half_delta * (-x).powf(half_delta - 1.0)
                + half_b * (-x).powf(half_delta))
                * (-half_b * x).exp());
            Ok(Deriv2 { value, first, second })
        },
    )
}

/// The pinned gate `g` of [`f_g`]: a C¹ function with
///
/// * `g(x) = 0` for `x ≤ 0`,
/// * `g(x) = x^{δ/2+2}` on `[0, c/2]`,
/// * a monotone cubic on `[c/2, c]` whose derivative decays linearly
///   from `g′(c/2)` to `0`,
/// * the rational tail `g(c)/(1 + ((x−c)/ρ)²)` with `ρ = c/2` beyond
///   `c`, strictly decreasing and positive.
///
/// The sign pattern is `g′ > 0` on `(0, c)`, `g′(c) = 0`, `g′ < 0` on
/// `(c, ∞)`. (No piecewise polynomial can stay positive with strictly
/// negative slope on an unbounded tail, hence the rational piece.)
#[derive(Debug, Clone, Copy)]
pub struct Gate {
    q: f64,
    c: f64,
}

impl Gate {
    fn new(delta: f64, c: f64) -> Self {
        Self { q: delta / 2.0 + 2.0, c }
    }

    /// `(g(x), g′(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let m = self.c / 2.0;
        if x <= 0.0 {
            (0.0, 0.0)
        } else if x <= m {
            (x.powf(self.q), self.q * x.powf(self.q - 1.0))
        } else if x <= self.c {
            let a = m.powf(self.q);
            let s0 = self.q * m.powf(self.q - 1.0);
            let h = self.c - m;
            let tau = (x - m) / h;
            (a + s0 * h * (tau - 0.5 * tau * tau), s0 * (1.0 - tau))
        } else {
            let b_val = {
                let a = m.powf(self.q);
                let s0 = self.q * m.powf(self.q - 1.0);
                a + 0.5 * s0 * (self.c - m)
            };
            let rho = self.c / 2.0;
            let u = (x - self.c) / rho;
            let denom = 1.0 + u * u;
            (b_val / denom, -2.0 * b_val * u / (rho * denom * denom))
        }
    }
}

/// The strictly increasing C¹ function built from the gate `g`:
///
/// ```text
/// f_g(x) = −∫₀^{−x} y^{δ/2} e^{b y/2} dy        for x < 0,
/// f_g(x) =  ∫₀^{x} g(y) y^{−δ/2} e^{b y/2} dy   for x ≥ 0,
/// ```
///
/// together with its generator image
/// `L f_g(x) = (σ²/2) x^{1−δ/2} e^{bx/2} g′(x)` for `x > 0` (zero for
/// `x ≤ 0`), which is negative wherever `g′ < 0`.
pub struct FgFunction {
    pub function: ScalarFunction,
    gate: Gate,
    params: ModelParams,
}

impl FgFunction {
    pub fn gate(&self) -> &Gate {
        &self.gate
    }

    /// `L f_g(x)`; the sign follows `g′` on `x > 0`.
    pub fn generator_image(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let p = &self.params;
        let (_, gp) = self.gate.eval(x);
        p.sigma() * p.sigma() / 2.0
            * x.powf(1.0 - p.delta() / 2.0)
            * (p.b() * x / 2.0).exp()
            * gp
    }
}

/// Build [`FgFunction`] for the gate level `c > 0`.
pub fn f_g(params: &ModelParams, c: f64) -> Result<FgFunction, SpecialError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(SpecialError::Domain(format!("gate level c must be > 0, got {c}")));
    }
    let gate = Gate::new(params.delta(), c);
    let half_delta = params.delta() / 2.0;
    let half_b = params.b() / 2.0;
    let m = c / 2.0;
    let h = harmonic_h(params);
    let eval = move |x: f64| -> Result<Deriv2, SpecialError> {
        if x < 0.0 {
            return h.eval(x);
        }
        // On [0, c/2] the integrand g(y) y^{−δ/2} e^{by/2} collapses to
        // y² e^{by/2}; beyond it use the gate pieces, split at the
        // joints so the quadrature sees smooth integrands only.
        let smooth_head = move |y: f64| y * y * (half_b * y).exp();
        let general = move |y: f64| gate.eval(y).0 * y.powf(-half_delta) * (half_b * y).exp();
        let mut value = adaptive_simpson(&smooth_head, 0.0, x.min(m), QUAD_TOL);
        if x > m {
            value += adaptive_simpson(&general, m, x.min(c), QUAD_TOL);
        }
        if x > c {
            value += adaptive_simpson(&general, c, x, QUAD_TOL);
        }
        let (first, second) = if x == 0.0 {
            (0.0, 0.0)
        } else if x <= m {
            let e = (half_b * x).exp();
            (x * x * e, (2.0 * x + half_b * x * x) * e)
        } else {
            let (g, gp) = gate.eval(x);
            let w = x.powf(-half_delta) * (half_b * x).exp();
            (g * w, (gp + g * (half_b - half_delta / x)) * w)
        };
        Ok(Deriv2 { value, first, second })
    };
    Ok(FgFunction {
        function: ScalarFunction::new(
            format!("f_g (gate level {c})"),
            (f64::NEG_INFINITY, f64::INFINITY),
            eval,
        ),
        gate,
        params: *params,
    })
}
