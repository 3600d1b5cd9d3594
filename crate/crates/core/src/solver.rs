//! Halfspace projection and the greedy, averaged and hybrid drivers that
//! project a coefficient vector onto the feasible set.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;

use crate::approx::SvdContext;
use crate::basis::{cached_gauss_rule, OrthonormalBasis};
use crate::constraints::{transform_under_map, ConstraintContext, ConstraintSet, RepresentorFrame};
use crate::{Error, Result};

pub const DEFAULT_DELTA: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
/// Corrections shorter than this while still infeasible mean no progress.
const STALL_NORM: f64 = 1e-15;
/// The hybrid extrapolation 1/α is refused below this |α|.
const MIN_ALPHA: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Greedy,
    Averaged,
    Hybrid,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::Averaged => "averaged",
            Algorithm::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Algorithm::Greedy),
            "averaged" => Ok(Algorithm::Averaged),
            "hybrid" => Ok(Algorithm::Hybrid),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub delta: f64,
    /// Switch tolerance of the hybrid driver.
    pub epsilon: f64,
    pub max_iters: usize,
    pub algorithm: Algorithm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            epsilon: 1e-3,
            max_iters: DEFAULT_MAX_ITERS,
            algorithm: Algorithm::Greedy,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.epsilon > 0.0) || self.max_iters < 1 {
            return Err(Error::InvalidArgument(format!(
                "solver needs delta > 0, epsilon > 0 and max_iters >= 1 (got {}, {}, {})",
                self.delta, self.epsilon, self.max_iters
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Greedy,
    Averaged,
}

/// One applied correction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub index: usize,
    pub phase: Phase,
    /// Worst signed distance of the iterate the correction was applied to.
    pub worst_sdist: f64,
    pub y_star: Option<f64>,
    pub k_star: Option<usize>,
    pub correction_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Feasible,
    MaxIters,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Basis coordinates of the final iterate.
    pub coeffs: DVector<f64>,
    pub iterations: Vec<IterationRecord>,
    pub terminated: Termination,
    pub final_worst_sdist: f64,
}

impl SolveResult {
    pub fn num_iterations(&self) -> usize {
        self.iterations.len()
    }
}

/// Nearest point of the halfspace {⟨ℓ̂, c⟩ ≤ β} to c.
pub fn project_halfspace(c: &DVector<f64>, frame: &RepresentorFrame) -> DVector<f64> {
    let s = frame.sdist(c);
    if s >= 0.0 {
        return c.clone();
    }
    c + &frame.ell_hat * s
}

/// Averaged correction Σ_k 1/(K |ω_k⁻|) ∫_{ω_k⁻} ℓ̂_k(y) sdist(y) dy, each
/// violation cell integrated with an (N+1)-point Gauss rule.
pub fn averaged_increment(ctx: &ConstraintContext, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = ctx.basis().dim();
    let big_k = ctx.set().len() as f64;
    let rule = cached_gauss_rule(n + 1)?;
    let mut total = DVector::zeros(n);
    for k in 0..ctx.set().len() {
        let cells = ctx.violation_set(x, k)?;
        let measure: f64 = cells.iter().map(|(a, b)| b - a).sum();
        if cells.is_empty() || measure <= 0.0 {
            continue;
        }
        let mut acc = DVector::zeros(n);
        for &(a, b) in &cells {
            for (y, w) in rule.mapped(a, b) {
                let frame = ctx.frame(k, y)?;
                let s = frame.sdist(x);
                acc.axpy(w * s, &frame.ell_hat, 1.0);
            }
        }
        total.axpy(1.0 / (big_k * measure), &acc, 1.0);
    }
    Ok(total)
}

/// One averaged update of the basis coordinates c; returns the new vector
/// and the norm of the increment.
pub fn averaged_step(
    c: &DVector<f64>,
    set: &ConstraintSet,
    basis: &OrthonormalBasis,
) -> Result<(DVector<f64>, f64)> {
    let ctx = ConstraintContext::new(set, basis)?;
    let inc = averaged_increment(&ctx, c)?;
    let norm = inc.norm();
    Ok((c + inc, norm))
}

struct Driver<'c, 'a> {
    ctx: &'c ConstraintContext<'a>,
    cfg: SolverConfig,
    x: DVector<f64>,
    records: Vec<IterationRecord>,
}

impl Driver<'_, '_> {
    fn record(&mut self, phase: Phase, worst: &crate::constraints::WorstPoint, norm: f64) {
        self.records.push(IterationRecord {
            index: self.records.len() + 1,
            phase,
            worst_sdist: worst.value,
            y_star: Some(worst.y),
            k_star: Some(worst.k),
            correction_norm: norm,
        });
    }

    fn finish(self, terminated: Termination, final_worst: f64) -> SolveResult {
        SolveResult {
            coeffs: self.ctx.to_coeffs(&self.x),
            iterations: self.records,
            terminated,
            final_worst_sdist: final_worst,
        }
    }

    fn run(mut self) -> Result<SolveResult> {
        let mut phase = match self.cfg.algorithm {
            Algorithm::Averaged | Algorithm::Hybrid => Phase::Averaged,
            Algorithm::Greedy => Phase::Greedy,
        };
        let hybrid = self.cfg.algorithm == Algorithm::Hybrid;
        let mut prev_worst: Option<f64> = None;
        let mut prev_alpha: Option<f64> = None;
        loop {
            let worst = self.ctx.min_sdist_global(&self.x)?;
            if worst.value >= -self.cfg.delta {
                return Ok(self.finish(Termination::Feasible, worst.value));
            }
            if self.records.len() >= self.cfg.max_iters {
                return Ok(self.finish(Termination::MaxIters, worst.value));
            }
            let applied = phase;
            let inc = match phase {
                Phase::Greedy => {
                    let frame = self.ctx.frame(worst.k, worst.y)?;
                    &frame.ell_hat * frame.sdist(&self.x)
                }
                Phase::Averaged => {
                    let mut inc = averaged_increment(self.ctx, &self.x)?;
                    if hybrid {
                        let alpha = prev_worst.map(|p| worst.value / p);
                        prev_worst = Some(worst.value);
                        if let (Some(a), Some(a_prev)) = (alpha, prev_alpha) {
                            if (a - a_prev).abs() <= self.cfg.epsilon {
                                if a.abs() < MIN_ALPHA {
                                    return Ok(self.finish(Termination::Stalled, worst.value));
                                }
                                inc /= a;
                                // takes effect from the next correction on
                                phase = Phase::Greedy;
                                log::debug!(
                                    "hybrid switch after {} averaged steps (alpha {a})",
                                    self.records.len()
                                );
                            }
                        }
                        prev_alpha = alpha;
                    }
                    inc
                }
            };
            let norm = inc.norm();
            if norm < STALL_NORM {
                return Ok(self.finish(Termination::Stalled, worst.value));
            }
            self.x += inc;
            self.record(applied, &worst, norm);
        }
    }
}

/// Runs the configured algorithm in the working coordinates of `ctx`,
/// starting from the working-coordinate vector `x0`.
pub fn solve_in_context(
    ctx: &ConstraintContext,
    x0: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if x0.len() != ctx.basis().dim() {
        return Err(Error::InvalidArgument(format!(
            "coefficient vector has length {}, basis dimension is {}",
            x0.len(),
            ctx.basis().dim()
        )));
    }
    Driver {
        ctx,
        cfg: *cfg,
        x: x0,
        records: Vec::new(),
    }
    .run()
}

fn solve_with(
    algorithm: Algorithm,
    c0: &DVector<f64>,
    set: &ConstraintSet,
    cfg: &SolverConfig,
    basis: &OrthonormalBasis,
) -> Result<SolveResult> {
    let ctx = ConstraintContext::new(set, basis)?;
    let cfg = SolverConfig { algorithm, ..*cfg };
    solve_in_context(&ctx, c0.clone(), &cfg)
}

/// Repeated projection onto the most violated halfspace.
pub fn greedy_solve(
    c0: &DVector<f64>,
    set: &ConstraintSet,
    cfg: &SolverConfig,
    basis: &OrthonormalBasis,
) -> Result<SolveResult> {
    solve_with(Algorithm::Greedy, c0, set, cfg, basis)
}

pub fn averaged_solve(
    c0: &DVector<f64>,
    set: &ConstraintSet,
    cfg: &SolverConfig,
    basis: &OrthonormalBasis,
) -> Result<SolveResult> {
    solve_with(Algorithm::Averaged, c0, set, cfg, basis)
}

/// Averaged steps until successive violation ratios settle, one extrapolated
/// averaged step, then greedy steps.
pub fn hybrid_solve(
    c0: &DVector<f64>,
    set: &ConstraintSet,
    cfg: &SolverConfig,
    basis: &OrthonormalBasis,
) -> Result<SolveResult> {
    solve_with(Algorithm::Hybrid, c0, set, cfg, basis)
}

/// Solves with `cfg.algorithm`. With a factorisation A = U Σ Vᵀ the iteration
/// runs in z = Σ Vᵀ c, i.e. it projects in the norm ‖A ·‖₂.
pub fn solve(
    c0: &DVector<f64>,
    set: &ConstraintSet,
    cfg: &SolverConfig,
    basis: &OrthonormalBasis,
    map: Option<&SvdContext>,
) -> Result<SolveResult> {
    match map {
        None => {
            let ctx = ConstraintContext::new(set, basis)?;
            solve_in_context(&ctx, c0.clone(), cfg)
        }
        Some(svd) => {
            let ctx = transform_under_map(set, basis, &svd.sigma, &svd.v)?;
            let z0 = svd.v.tr_mul(c0).component_mul(&svd.sigma);
            solve_in_context(&ctx, z0, cfg)
        }
    }
}
