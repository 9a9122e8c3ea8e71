//! Euler scheme with skew reflection on the curve and running
//! local-time ledgers.
//!
//! One step from `(t_k, R_k)` draws a Brownian increment `dW` and one
//! uniform `u` (always both, so coupled runs stay synchronized no
//! matter which branch each member takes), forms the full-truncation
//! proposal
//!
//! ```text
//! R* = R_k + σ √(max(R_k, 0)) dW + (σ²/4)(δ − b R_k) dt,
//! ```
//!
//! and compares the signed distances `Y_k = R_k − λ²(t_k)` and
//! `Y* = R* − λ²(t_{k+1})`. Away from the curve (`sign` preserved and
//! `|Y*|` above the band) the proposal is kept, truncated at zero.
//! On a crossing or inside the band the step re-places the path at
//! distance `|Y*|` from the curve, above with probability `p` and
//! below otherwise: the skew random-walk rule that produces the
//! `p/(1−p)` excursion asymmetry.
//!
//! Local time is estimated through occupation of the band
//! `|Y_k| < band_eps` weighted by the bracket increment
//! `q_k = σ² R_k dt`: the upper ledger collects `q_k/band_eps` on
//! `0 ≤ Y_k < band_eps`, the lower on `−band_eps < Y_k < 0`, an exact
//! hit splits half-half, and the symmetric ledger is the running
//! average of the two, so `ℓ̂⁰ = (ℓ̂⁰⁺ + ℓ̂⁰⁻)/2` holds bitwise at every
//! step. No ledger mass is collected while `λ²(t_k) = 0`: the local
//! time measure vanishes on that set (the bracket `σ²R` dies at the
//! contact level), and gating the estimator keeps the discrete ledger
//! exactly zero for `λ² ≡ 0`.
//!
//! Batches are deterministic: path `i` draws from ChaCha8 stream `i`
//! of the seeded generator, so results are independent of thread
//! scheduling and bit-identical across runs.

use crate::model::{Curve, ModelError, ModelParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("non-finite state {value} at path {path}, step {step}")]
    NumericalFailure { path: usize, step: usize, value: f64 },
}

/// Discretization and batch parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Half-width of the skew-decision and local-time band; defaults
    /// to `√dt`, the diffusive scale.
    pub band_eps: f64,
    pub r0: f64,
    /// Path abort threshold: a path reaching this level is flagged and
    /// stopped, never silently dropped.
    pub truncation_level: f64,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            n_paths,
            seed,
            band_eps: dt.sqrt(),
            r0: 0.0,
            truncation_level: 1e3,
        }
    }

    pub fn with_r0(mut self, r0: f64) -> Self {
        self.r0 = r0;
        self
    }

    pub fn with_band_eps(mut self, band_eps: f64) -> Self {
        self.band_eps = band_eps;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon > self.dt) {
            return bad(format!("horizon must exceed dt, got {}", self.horizon));
        }
        if !(self.band_eps.is_finite() && self.band_eps > 0.0) {
            return bad(format!("band_eps must be > 0, got {}", self.band_eps));
        }
        if !(self.r0.is_finite() && self.r0 >= 0.0) {
            return bad(format!("r0 must be >= 0, got {}", self.r0));
        }
        if !(self.truncation_level.is_finite() && self.truncation_level > 0.0) {
            return bad(format!("truncation_level must be > 0, got {}", self.truncation_level));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Running local-time estimates; all three series share the grid of
/// the trajectory and are nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeLedger {
    plus: Vec<f64>,
    minus: Vec<f64>,
    sym: Vec<f64>,
}

impl LocalTimeLedger {
    fn with_capacity(n: usize) -> Self {
        let mut ledger = Self {
            plus: Vec::with_capacity(n),
            minus: Vec::with_capacity(n),
            sym: Vec::with_capacity(n),
        };
        ledger.plus.push(0.0);
        ledger.minus.push(0.0);
        ledger.sym.push(0.0);
        ledger
    }

    fn push_increment(&mut self, inc_plus: f64, inc_minus: f64) {
        let plus = self.plus.last().unwrap() + inc_plus;
        let minus = self.minus.last().unwrap() + inc_minus;
        self.plus.push(plus);
        self.minus.push(minus);
        self.sym.push((plus + minus) / 2.0);
    }

    /// Running series of `ℓ̂⁰⁺`.
    pub fn plus(&self) -> &[f64] {
        &self.plus
    }

    /// Running series of `ℓ̂⁰⁻`.
    pub fn minus(&self) -> &[f64] {
        &self.minus
    }

    /// Running series of the symmetric `ℓ̂⁰ = (ℓ̂⁰⁺ + ℓ̂⁰⁻)/2`.
    pub fn symmetric(&self) -> &[f64] {
        &self.sym
    }

    pub fn ell0(&self) -> f64 {
        *self.sym.last().unwrap()
    }

    pub fn ell0_plus(&self) -> f64 {
        *self.plus.last().unwrap()
    }

    pub fn ell0_minus(&self) -> f64 {
        *self.minus.last().unwrap()
    }
}

/// One simulated path on the uniform grid `t_k = k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    values: Vec<f64>,
    brownian_increments: Vec<f64>,
    ledger: LocalTimeLedger,
    aborted: Option<usize>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `R_k` per grid point (shorter than the full grid when aborted).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The Brownian increments consumed, retained for coupling.
    pub fn brownian_increments(&self) -> &[f64] {
        &self.brownian_increments
    }

    pub fn ledger(&self) -> &LocalTimeLedger {
        &self.ledger
    }

    /// Step index at which the truncation level was hit, if any.
    pub fn aborted(&self) -> Option<usize> {
        self.aborted
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Ledger increments `(plus, minus)` for the pre-step state `(y, r)`;
/// gated off wherever the curve sits at zero.
fn ledger_increment(params: &ModelParams, lam: f64, y: f64, r: f64, dt: f64, band_eps: f64) -> (f64, f64) {
    if lam <= 0.0 {
        return (0.0, 0.0);
    }
    let q = params.sigma() * params.sigma() * r * dt;
    if y == 0.0 {
        let half = q / band_eps / 2.0;
        (half, half)
    } else if y > 0.0 && y < band_eps {
        (q / band_eps, 0.0)
    } else if y < 0.0 && y > -band_eps {
        (0.0, q / band_eps)
    } else {
        (0.0, 0.0)
    }
}

/// Result of one scheme step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: f64,
    pub ledger_plus: f64,
    pub ledger_minus: f64,
    /// Whether the skew branch (crossing or in-band placement) fired.
    pub skewed: bool,
}

#[allow(clippy::too_many_arguments)]
fn step_core(
    params: &ModelParams,
    lam_k: f64,
    lam_k1: f64,
    r: f64,
    dw: f64,
    u: f64,
    dt: f64,
    band_eps: f64,
) -> StepOutcome {
    let proposal = r + params.sigma() * r.max(0.0).sqrt() * dw + params.drift(r) * dt;
    let y_k = r - lam_k;
    let y_next = proposal - lam_k1;
    let same_side = (y_k > 0.0 && y_next > 0.0) || (y_k < 0.0 && y_next < 0.0);
    let (next, skewed) = if same_side && y_next.abs() > band_eps {
        (proposal.max(0.0), false)
    } else {
        let side = if u < params.p() { 1.0 } else { -1.0 };
        ((lam_k1 + side * y_next.abs()).max(0.0), true)
    };
    let (ledger_plus, ledger_minus) = ledger_increment(params, lam_k, y_k, r, dt, band_eps);
    StepOutcome { next, ledger_plus, ledger_minus, skewed }
}

/// One scheme step from `(t, r)` with the supplied Brownian increment
/// and skew uniform.
pub fn step(
    params: &ModelParams,
    curve: &Curve,
    state: (f64, f64),
    dw: f64,
    u: f64,
    config: &SimConfig,
) -> Result<StepOutcome, EngineError> {
    let (t, r) = state;
    let lam_k = curve.evaluate(t)?;
    let lam_k1 = curve.evaluate(t + config.dt)?;
    let outcome = step_core(params, lam_k, lam_k1, r, dw, u, config.dt, config.band_eps);
    if !outcome.next.is_finite() {
        return Err(EngineError::NumericalFailure { path: 0, step: 0, value: outcome.next });
    }
    Ok(outcome)
}

/// The documented stream-splitting rule: path `i` of a batch draws
/// from ChaCha8 keyed by `seed` on stream `i`. Each step consumes one
/// standard normal (scaled to `√dt`) and then one uniform.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Curve levels cached on the step grid, shared read-only by every
/// worker of a batch.
fn curve_levels(curve: &Curve, config: &SimConfig) -> Result<Vec<f64>, EngineError> {
    let n = config.n_steps();
    (0..=n)
        .map(|k| curve.evaluate(k as f64 * config.dt).map_err(EngineError::from))
        .collect()
}

fn run_path(
    params: &ModelParams,
    levels: &[f64],
    config: &SimConfig,
    path_index: usize,
) -> Result<Trajectory, EngineError> {
    let n = levels.len() - 1;
    let mut rng = path_rng(config.seed, path_index as u64);
    let sqrt_dt = config.dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut increments = Vec::with_capacity(n);
    let mut ledger = LocalTimeLedger::with_capacity(n + 1);
    let mut r = config.r0;
    values.push(r);
    let mut aborted = None;
    for k in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let dw = sqrt_dt * z;
        let u: f64 = rng.random();
        let outcome = step_core(
            params,
            levels[k],
            levels[k + 1],
            r,
            dw,
            u,
            config.dt,
            config.band_eps,
        );
        if !outcome.next.is_finite() {
            return Err(EngineError::NumericalFailure {
                path: path_index,
                step: k,
                value: outcome.next,
            });
        }
        r = outcome.next;
        values.push(r);
        increments.push(dw);
        ledger.push_increment(outcome.ledger_plus, outcome.ledger_minus);
        if r >= config.truncation_level {
            aborted = Some(k + 1);
            break;
        }
    }
    Ok(Trajectory {
        dt: config.dt,
        values,
        brownian_increments: increments,
        ledger,
        aborted,
    })
}

/// Simulate one path of the batch; bit-identical to the corresponding
/// member of [`simulate`].
pub fn simulate_path(
    params: &ModelParams,
    curve: &Curve,
    config: &SimConfig,
    path_index: usize,
) -> Result<Trajectory, EngineError> {
    config.validate()?;
    check_domain(curve, config)?;
    let levels = curve_levels(curve, config)?;
    run_path(params, &levels, config, path_index)
}

fn check_domain(curve: &Curve, config: &SimConfig) -> Result<(), EngineError> {
    if config.horizon > curve.domain_end() * (1.0 + 1e-12) {
        return Err(EngineError::Config(format!(
            "horizon {} exceeds curve domain end {}",
            config.horizon,
            curve.domain_end()
        )));
    }
    Ok(())
}

/// Simulate the whole batch, retaining every trajectory. Suitable for
/// desk-scale runs; large batches should prefer [`simulate_map`].
pub fn simulate(
    params: &ModelParams,
    curve: &Curve,
    config: &SimConfig,
) -> Result<Vec<Trajectory>, EngineError> {
    simulate_map(params, curve, config, |t| t.clone())
}

/// Simulate the batch and reduce each trajectory to a summary value as
/// soon as it is built, fanning paths out across the worker pool.
/// Collection preserves path-index order, so the output is independent
/// of scheduling.
pub fn simulate_map<T: Send>(
    params: &ModelParams,
    curve: &Curve,
    config: &SimConfig,
    f: impl Fn(&Trajectory) -> T + Sync,
) -> Result<Vec<T>, EngineError> {
    config.validate()?;
    check_domain(curve, config)?;
    let levels = curve_levels(curve, config)?;
    (0..config.n_paths)
        .into_par_iter()
        .map(|i| run_path(params, &levels, config, i).map(|traj| f(&traj)))
        .collect()
}

/// Per-path scalars kept by batch runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub r_terminal: f64,
    pub ell0: f64,
    pub ell0_plus: f64,
    pub ell0_minus: f64,
    pub min_value: f64,
    pub aborted: bool,
}

impl PathSummary {
    pub fn of(traj: &Trajectory) -> Self {
        Self {
            r_terminal: traj.terminal(),
            ell0: traj.ledger().ell0(),
            ell0_plus: traj.ledger().ell0_plus(),
            ell0_minus: traj.ledger().ell0_minus(),
            min_value: traj.values().iter().copied().fold(f64::INFINITY, f64::min),
            aborted: traj.aborted().is_some(),
        }
    }
}

/// Summaries of the whole batch in path order.
pub fn simulate_summaries(
    params: &ModelParams,
    curve: &Curve,
    config: &SimConfig,
) -> Result<Vec<PathSummary>, EngineError> {
    simulate_map(params, curve, config, PathSummary::of)
}

/// Parameter perturbation applied to the second member of a coupled
/// pair; both members consume the identical noise stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Identical,
    /// `(band_eps for member 1, band_eps for member 2)`.
    BandEps(f64, f64),
    /// `(r0 for member 1, r0 for member 2)`.
    InitialValue(f64, f64),
}

impl Perturbation {
    fn configs(&self, base: &SimConfig) -> (SimConfig, SimConfig) {
        let mut first = *base;
        let mut second = *base;
        match *self {
            Perturbation::Identical => {}
            Perturbation::BandEps(e1, e2) => {
                first.band_eps = e1;
                second.band_eps = e2;
            }
            Perturbation::InitialValue(r1, r2) => {
                first.r0 = r1;
                second.r0 = r2;
            }
        }
        (first, second)
    }
}

/// A coupled pair of trajectories driven by the same Brownian
/// increments and skew uniforms.
#[derive(Debug, Clone)]
pub struct CoupledPath {
    pub first: Trajectory,
    pub second: Trajectory,
}

impl CoupledPath {
    fn common_len(&self) -> usize {
        self.first.values().len().min(self.second.values().len())
    }

    /// Pathwise supremum `S_k = max(R¹_k, R²_k)`.
    pub fn sup(&self) -> Vec<f64> {
        (0..self.common_len())
            .map(|k| self.first.values()[k].max(self.second.values()[k]))
            .collect()
    }

    /// Pathwise infimum `I_k = min(R¹_k, R²_k)`.
    pub fn inf(&self) -> Vec<f64> {
        (0..self.common_len())
            .map(|k| self.first.values()[k].min(self.second.values()[k]))
            .collect()
    }

    /// Gap series `S_k − I_k = |R¹_k − R²_k|`.
    pub fn gap(&self) -> Vec<f64> {
        (0..self.common_len())
            .map(|k| (self.first.values()[k] - self.second.values()[k]).abs())
            .collect()
    }

    pub fn terminal_gap(&self) -> f64 {
        let k = self.common_len() - 1;
        (self.first.values()[k] - self.second.values()[k]).abs()
    }

    pub fn aborted(&self) -> bool {
        self.first.aborted().is_some() || self.second.aborted().is_some()
    }
}

/// Couple the batch: member pairs share per-path noise but run with
/// perturbed scheme parameters.
pub fn couple(
    params: &ModelParams,
    curve: &Curve,
    config: &SimConfig,
    perturbation: Perturbation,
) -> Result<Vec<CoupledPath>, EngineError> {
    couple_map(params, curve, config, perturbation, |pair| pair.clone())
}

/// Couple the batch, reducing each pair on the fly.
pub fn couple_map<T: Send>(
    params: &ModelParams,
    curve: &Curve,
    config: &SimConfig,
    perturbation: Perturbation,
    f: impl Fn(&CoupledPath) -> T + Sync,
) -> Result<Vec<T>, EngineError> {
    let (first_cfg, second_cfg) = perturbation.configs(config);
    first_cfg.validate()?;
    second_cfg.validate()?;
    check_domain(curve, config)?;
    let levels = curve_levels(curve, config)?;
    (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let first = run_path(params, &levels, &first_cfg, i)?;
            let second = run_path(params, &levels, &second_cfg, i)?;
            Ok(f(&CoupledPath { first, second }))
        })
        .collect()
}

/// Band local-time estimator applied after the fact to an arbitrary
/// series on the same grid (used for the supremum of a coupled pair).
/// Shares the increment rule of the stepping scheme.
pub fn band_local_time(
    params: &ModelParams,
    curve: &Curve,
    dt: f64,
    band_eps: f64,
    values: &[f64],
) -> Result<LocalTimeLedger, EngineError> {
    let mut ledger = LocalTimeLedger::with_capacity(values.len());
    for (k, &r) in values.iter().enumerate().take(values.len().saturating_sub(1)) {
        let lam = curve.evaluate(k as f64 * dt)?;
        let (ip, im) = ledger_increment(params, lam, r - lam, r, dt, band_eps);
        ledger.push_increment(ip, im);
    }
    Ok(ledger)
}
