//! Feasible weighted estimators: weights estimated from a covariate pool,
//! optional burn-in, sample splitting and the two-step scheme.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::score::{augmented_terms, check_inputs, running_means};
use super::weights::{
    g_prime_core, weighted_report, PoolNuisance, PoolValues, VarianceForm, VarianceWeights, WeightSource,
    DEFAULT_ALPHA, DEFAULT_EPSILON,
};
use crate::envs::CovariatePool;
use crate::error::{OpeError, Result};
use crate::nuisance::{NuisanceSequence, SharedNuisance};
use crate::types::{EstimateReport, HistoricalLog, Method, Policy, SharedPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleConfig {
    pub epsilon: f64,
    /// Periods discarded at the start of the window.
    pub burn_in: usize,
    pub alpha: f64,
    pub form: VarianceForm,
}

impl Default for FeasibleConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            burn_in: 0,
            alpha: DEFAULT_ALPHA,
            form: VarianceForm::default(),
        }
    }
}

/// Estimated weights for periods `first..=last` (1-based). `theta_prev[t−1]`
/// is the estimate of `θ` available before period `t`.
#[allow(clippy::too_many_arguments)]
pub fn feasible_weights(
    log: &HistoricalLog,
    pi_e: &dyn Policy,
    nuis: &NuisanceSequence,
    pool: &CovariatePool,
    theta_prev: &[f64],
    first: usize,
    last: usize,
    source: WeightSource,
    cfg: &FeasibleConfig,
) -> Result<VarianceWeights> {
    let snapshots = log.snapshots().ok_or_else(|| {
        OpeError::Unsupported("log carries no behavior-policy snapshots; variance weights cannot be estimated".into())
    })?;
    if pool.is_empty() {
        return Err(OpeError::Empty("evaluation covariates"));
    }
    if let Some(p) = pool.points().first() {
        if p.len() != log.dim() {
            return Err(OpeError::DimensionMismatch {
                what: "evaluation covariate",
                expected: log.dim(),
                got: p.len(),
            });
        }
    }
    if theta_prev.len() < last {
        return Err(OpeError::DimensionMismatch {
            what: "theta sequence",
            expected: last,
            got: theta_prev.len(),
        });
    }
    let pe = PoolValues::policy(pool, pi_e);
    let mut cached_nuis: Option<(SharedNuisance, PoolNuisance)> = None;
    let mut cached_snap: Option<(SharedPolicy, PoolValues)> = None;
    let mut raw = Vec::with_capacity(last + 1 - first);
    for t in first..=last {
        let n = nuis.at(t);
        if !cached_nuis.as_ref().is_some_and(|(p, _)| Arc::ptr_eq(p, n)) {
            cached_nuis = Some((n.clone(), PoolNuisance::new(pool, n.as_ref())));
        }
        let s = &snapshots[t - 1];
        if !cached_snap.as_ref().is_some_and(|(p, _)| Arc::ptr_eq(p, s)) {
            cached_snap = Some((s.clone(), PoolValues::policy(pool, s.as_ref())));
        }
        let g = g_prime_core(
            pool,
            &pe,
            &cached_snap.as_ref().unwrap().1,
            &cached_nuis.as_ref().unwrap().1,
            theta_prev[t - 1],
            cfg.form,
        )
        .map_err(|reason| OpeError::BehaviorPolicy { period: t, reason })?;
        raw.push(g);
    }
    VarianceWeights::floored(&raw, source, cfg.epsilon)
}

#[allow(clippy::too_many_arguments)]
fn feasible_over(
    method: Method,
    log: &HistoricalLog,
    pi_e: &dyn Policy,
    nuis: &NuisanceSequence,
    pool: &CovariatePool,
    theta_prev: &[f64],
    source: WeightSource,
    cfg: &FeasibleConfig,
) -> Result<EstimateReport> {
    check_inputs(log, pi_e, Some(nuis))?;
    let t = log.len();
    if cfg.burn_in >= t {
        return Err(OpeError::InvalidParameter {
            name: "burn_in",
            reason: format!("must be below the window length {t}, got {}", cfg.burn_in),
        });
    }
    let first = cfg.burn_in + 1;
    let weights = feasible_weights(log, pi_e, nuis, pool, theta_prev, first, t, source, cfg)?;
    let terms = augmented_terms(log, pi_e, nuis)?;
    let ratio = terms.max_ratio[cfg.burn_in..].iter().copied().fold(0.0, f64::max);
    weighted_report(method, &terms.q[cfg.burn_in..], &weights, cfg.alpha, cfg.burn_in, ratio)
}

/// Feasible A3IPW: weights `g_t = max(g′_t, ε)` from the covariate pool, the
/// weighted average over periods `B+1..T`, and its interval. With `B > 0`
/// the report is labelled SFA3IPW.
pub fn fa3ipw_estimate(
    log: &HistoricalLog,
    pi_e: &dyn Policy,
    nuis: &NuisanceSequence,
    pool: &CovariatePool,
    theta_prev: &[f64],
    cfg: &FeasibleConfig,
) -> Result<EstimateReport> {
    let method = if cfg.burn_in > 0 { Method::Sfa3Ipw } else { Method::Fa3Ipw };
    feasible_over(method, log, pi_e, nuis, pool, theta_prev, WeightSource::EvalData, cfg)
}

/// The same pipeline with `f̂ ≡ 0` (weighted IPW); the second-moment
/// estimates still enter the weights.
pub fn fa2daipw_estimate(
    log: &HistoricalLog,
    pi_e: &dyn Policy,
    nuis: &NuisanceSequence,
    pool: &CovariatePool,
    theta_prev: &[f64],
    cfg: &FeasibleConfig,
) -> Result<EstimateReport> {
    feasible_over(
        Method::Fa2daIpw,
        log,
        pi_e,
        &nuis.zero_mean(),
        pool,
        theta_prev,
        WeightSource::EvalData,
        cfg,
    )
}

// ── Sample splitting ────────────────────────────────────────────────────

/// `⌊rT⌋`, required to be at least 1 and `r` to lie in (0, 1).
pub fn split_point(t: usize, r: f64) -> Result<usize> {
    if !(r > 0.0 && r < 1.0) {
        return Err(OpeError::InvalidParameter {
            name: "r",
            reason: format!("split fraction must lie in (0, 1), got {r}"),
        });
    }
    let cut = (r * t as f64).floor() as usize;
    if cut == 0 {
        return Err(OpeError::InvalidParameter {
            name: "r",
            reason: format!("floor(r*T) = 0 for r = {r}, T = {t}"),
        });
    }
    Ok(cut)
}

/// Estimation log (periods `1..⌊rT⌋`) and covariate pool (contexts of
/// periods `⌊rT⌋+1..T`).
#[derive(Debug, Clone)]
pub struct SplitData {
    pub estimation: HistoricalLog,
    pub pool: CovariatePool,
}

pub fn sample_split(log: &HistoricalLog, r: f64) -> Result<SplitData> {
    let cut = split_point(log.len(), r)?;
    let later: Vec<Vec<f64>> = log.samples()[cut..].iter().map(|s| s.x.clone()).collect();
    Ok(SplitData {
        estimation: log.prefix(cut),
        pool: CovariatePool::from_contexts(&later)?,
    })
}

/// Weights for the split estimator: one per period `B+1..⌊rT⌋`, estimated
/// on the held-out covariates. Returns the weights and the window length.
pub fn sample_split_variance(
    log: &HistoricalLog,
    r: f64,
    pi_e: &dyn Policy,
    nuis: &NuisanceSequence,
    theta_prev: &[f64],
    cfg: &FeasibleConfig,
) -> Result<(VarianceWeights, usize)> {
    let split = sample_split(log, r)?;
    let cut = split.estimation.len();
    if cfg.burn_in >= cut {
        return Err(OpeError::InvalidParameter {
            name: "burn_in",
            reason: format!("must be below the window length {cut}, got {}", cfg.burn_in),
        });
    }
    let w = feasible_weights(
        &split.estimation,
        pi_e,
        nuis,
        &split.pool,
        theta_prev,
        cfg.burn_in + 1,
        cut,
        WeightSource::SampleSplit,
        cfg,
    )?;
    Ok((w, cut - cfg.burn_in))
}

/// FA3IPW on the first `⌊rT⌋` periods with weights from the rest.
pub fn fa3ipw_split_estimate(
    log: &HistoricalLog,
    r: f64,
    pi_e: &dyn Policy,
    nuis: &NuisanceSequence,
    theta_prev: &[f64],
    cfg: &FeasibleConfig,
) -> Result<EstimateReport> {
    let split = sample_split(log, r)?;
    let method = if cfg.burn_in > 0 { Method::Sfa3Ipw } else { Method::Fa3Ipw };
    feasible_over(
        method,
        &split.estimation,
        pi_e,
        nuis,
        &split.pool,
        theta_prev,
        WeightSource::SampleSplit,
        cfg,
    )
}

// ── Two-step estimation ─────────────────────────────────────────────────

/// Where the variance weights get their covariates.
#[derive(Debug, Clone, Copy)]
pub enum EvalSource<'a> {
    /// Independent evaluation covariates.
    Covariates(&'a CovariatePool),
    /// Held-out tail of the log itself.
    Split { r: f64 },
}

/// First pass: running weighted means with a constant initial weight `g̃`,
/// shifted so entry `t − 1` holds `θ̃_{t−1}` (with `θ̃₀ = 0`). A constant
/// weight cancels, leaving the running unweighted mean.
pub fn two_step_thetas(q: &[f64], g_tilde: f64) -> Result<Vec<f64>> {
    if !(g_tilde > 0.0 && g_tilde.is_finite()) {
        return Err(OpeError::InvalidParameter {
            name: "g_tilde",
            reason: format!("must be positive, got {g_tilde}"),
        });
    }
    Ok(running_means(q))
}

/// Which augmented term a two-step run weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoStepTarget {
    /// Full augmented term (FA3IPW family).
    Augmented,
    /// Outcome model forced to zero (FA2daIPW).
    ZeroMean,
}

/// Two-step estimation: pass 1 builds `θ̃_{t−1}` from constant weights,
/// pass 2 runs the feasible estimator with those values. The report keeps
/// the method label passed in.
#[allow(clippy::too_many_arguments)]
pub fn two_step_estimate(
    method: Method,
    target: TwoStepTarget,
    log: &HistoricalLog,
    pi_e: &dyn Policy,
    nuis: &NuisanceSequence,
    source: EvalSource<'_>,
    g_tilde: f64,
    cfg: &FeasibleConfig,
) -> Result<EstimateReport> {
    let zeroed;
    let nuis = match target {
        TwoStepTarget::Augmented => nuis,
        TwoStepTarget::ZeroMean => {
            zeroed = nuis.zero_mean();
            &zeroed
        }
    };
    let (est_log, pool, src) = match source {
        EvalSource::Covariates(pool) => (log.clone(), pool.clone(), WeightSource::EvalData),
        EvalSource::Split { r } => {
            let s = sample_split(log, r)?;
            (s.estimation, s.pool, WeightSource::SampleSplit)
        }
    };
    let q = augmented_terms(&est_log, pi_e, nuis)?.q;
    let thetas = two_step_thetas(&q, g_tilde)?;
    feasible_over(method, &est_log, pi_e, nuis, &pool, &thetas, src, cfg)
}

/// TSFA3IPW: two-step FA3IPW.
pub fn tsfa3ipw_estimate(
    log: &HistoricalLog,
    pi_e: &dyn Policy,
    nuis: &NuisanceSequence,
    source: EvalSource<'_>,
    g_tilde: f64,
    cfg: &FeasibleConfig,
) -> Result<EstimateReport> {
    two_step_estimate(Method::Tsfa3Ipw, TwoStepTarget::Augmented, log, pi_e, nuis, source, g_tilde, cfg)
}
