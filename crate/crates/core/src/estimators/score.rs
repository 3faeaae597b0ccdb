//! The augmented inverse-probability score and the unweighted estimators.

use crate::error::{OpeError, Result};
use crate::nuisance::NuisanceSequence;
use crate::types::{EstimateReport, HistoricalLog, LoggedSample, Method, Policy};

/// Everything the score needs for one period. `pi_e`, `f_hat` are evaluated
/// at the sample's context; `f_hat` must come from a pair fitted on
/// strictly earlier periods.
#[derive(Debug, Clone, Copy)]
pub struct ScoreInputs<'a> {
    pub sample: &'a LoggedSample,
    pub pi_e: &'a [f64],
    pub f_hat: &'a [f64],
    pub theta: f64,
}

/// `Σ_a [π^e(a|x)·1[A=a]·(y − f̂(a,x))/π_t(a|x) + π^e(a|x)·f̂(a,x)] − θ`.
pub fn score(inp: &ScoreInputs<'_>) -> Result<f64> {
    Ok(augmented_term(inp.sample, inp.pi_e, inp.f_hat)? - inp.theta)
}

/// The score at `θ = 0`. The importance-weighted residual is formed first,
/// then the direct-method part is added, so that `f̂ ≡ 0` reproduces the
/// plain IPW term bit for bit.
pub(crate) fn augmented_term(s: &LoggedSample, pe: &[f64], f: &[f64]) -> Result<f64> {
    let a = s.a;
    let pt = s.propensities[a];
    if !(pt > 0.0) {
        return Err(OpeError::ZeroPropensity { period: s.t });
    }
    let ipw = pe[a] * (s.y - f[a]) / pt;
    let dm: f64 = pe.iter().zip(f).map(|(p, v)| p * v).sum();
    Ok(ipw + dm)
}

fn ipw_term(s: &LoggedSample, pe: &[f64]) -> Result<f64> {
    let a = s.a;
    let pt = s.propensities[a];
    if !(pt > 0.0) {
        return Err(OpeError::ZeroPropensity { period: s.t });
    }
    Ok(pe[a] * s.y / pt)
}

pub(crate) fn check_inputs(log: &HistoricalLog, pi_e: &dyn Policy, nuis: Option<&NuisanceSequence>) -> Result<()> {
    if log.is_empty() {
        return Err(OpeError::Empty("historical log"));
    }
    if pi_e.num_actions() != log.num_actions() {
        return Err(OpeError::DimensionMismatch {
            what: "evaluation policy action count",
            expected: log.num_actions(),
            got: pi_e.num_actions(),
        });
    }
    if let Some(n) = nuis {
        if n.len() < log.len() {
            return Err(OpeError::DimensionMismatch {
                what: "nuisance sequence length",
                expected: log.len(),
                got: n.len(),
            });
        }
        for (t, p) in n.pairs().iter().enumerate().take(log.len()) {
            if p.fitted_through() > t {
                return Err(OpeError::InvalidParameter {
                    name: "nuisance",
                    reason: format!("pair for period {} is fitted through period {}", t + 1, p.fitted_through()),
                });
            }
            if p.num_actions() != log.num_actions() {
                return Err(OpeError::DimensionMismatch {
                    what: "nuisance action count",
                    expected: log.num_actions(),
                    got: p.num_actions(),
                });
            }
        }
    }
    Ok(())
}

/// Per-period values computed in one pass over the log.
#[derive(Debug, Clone, Default)]
pub struct PeriodTerms {
    /// Augmented terms `q_t` (the score at `θ = 0`).
    pub q: Vec<f64>,
    /// `Σ_a π^e(a|X_t) f̂_{t−1}(a, X_t)`.
    pub dm: Vec<f64>,
    /// `max_a π^e(a|X_t)/π_t(a|X_t)`.
    pub max_ratio: Vec<f64>,
}

/// Augmented terms of every period.
pub fn augmented_terms(log: &HistoricalLog, pi_e: &dyn Policy, nuis: &NuisanceSequence) -> Result<PeriodTerms> {
    check_inputs(log, pi_e, Some(nuis))?;
    let k = log.num_actions();
    let (mut pe, mut f, mut e) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    let mut out = PeriodTerms::default();
    for s in log.samples() {
        pi_e.probs_into(&s.x, &mut pe);
        nuis.at(s.t).predict_into(&s.x, &mut f, &mut e);
        out.q.push(augmented_term(s, &pe, &f)?);
        out.dm.push(pe.iter().zip(&f).map(|(p, v)| p * v).sum());
        out.max_ratio.push(max_ratio(&pe, &s.propensities));
    }
    Ok(out)
}

pub(crate) fn max_ratio(pe: &[f64], pt: &[f64]) -> f64 {
    pe.iter().zip(pt).map(|(e, b)| e / b).fold(0.0, f64::max)
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fold_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Direct method: `(1/T) Σ_t Σ_a π^e(a|X_t) f̂_{t−1}(a, X_t)`. No interval.
pub fn dm_estimate(log: &HistoricalLog, pi_e: &dyn Policy, nuis: &NuisanceSequence) -> Result<EstimateReport> {
    let terms = augmented_terms(log, pi_e, nuis)?;
    Ok(EstimateReport::unweighted(
        Method::Dm,
        mean(&terms.dm),
        log.len(),
        fold_max(&terms.max_ratio),
    ))
}

/// Adaptive IPW: `(1/T) Σ_t π^e(A_t|X_t) Y_t / π_t(A_t|X_t)`.
pub fn adaipw_estimate(log: &HistoricalLog, pi_e: &dyn Policy) -> Result<EstimateReport> {
    check_inputs(log, pi_e, None)?;
    let mut pe = vec![0.0; log.num_actions()];
    let mut q = Vec::with_capacity(log.len());
    let mut ratio: f64 = 0.0;
    for s in log.samples() {
        pi_e.probs_into(&s.x, &mut pe);
        q.push(ipw_term(s, &pe)?);
        ratio = ratio.max(max_ratio(&pe, &s.propensities));
    }
    Ok(EstimateReport::unweighted(Method::AdaIpw, mean(&q), log.len(), ratio))
}

/// Adaptive AIPW: unweighted mean of the augmented terms.
pub fn a2ipw_estimate(log: &HistoricalLog, pi_e: &dyn Policy, nuis: &NuisanceSequence) -> Result<EstimateReport> {
    let terms = augmented_terms(log, pi_e, nuis)?;
    Ok(EstimateReport::unweighted(
        Method::A2Ipw,
        mean(&terms.q),
        log.len(),
        fold_max(&terms.max_ratio),
    ))
}

/// Running means `θ̃_t = (1/t) Σ_{s≤t} q_s`, with `θ̃₀ = 0` prepended.
/// Entry `t − 1` of the result is therefore the estimate available before
/// period `t`.
pub fn running_means(q: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(q.len());
    if q.is_empty() {
        return out;
    }
    out.push(0.0);
    let mut sum = 0.0;
    for (i, v) in q.iter().enumerate().take(q.len().saturating_sub(1)) {
        sum += v;
        out.push(sum / (i + 1) as f64);
    }
    out
}
