//! Variance weights: the per-period conditional-variance estimate, its
//! floor, the exact oracle, weighted averaging and confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::score::{augmented_terms, check_inputs};
use crate::envs::{BanditEnvironment, CovariatePool};
use crate::error::{OpeError, Result};
use crate::nuisance::{Nuisance, NuisanceSequence};
use crate::types::{Diagnostics, EstimateReport, HistoricalLog, Method, Policy};

/// Default floor ε on the variance weights.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Floor on the conditional-variance estimate `ê − f̂²`.
pub const V_FLOOR: f64 = 1e-6;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// How the outcome-model part of the variance is aggregated over actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceForm {
    /// `Σ_a (π^e(a|x) f̂(a,x) − θ)²`, the per-action display.
    #[default]
    PerArm,
    /// `(Σ_a π^e(a|x) f̂(a,x) − θ)²`, the exact conditional variance of the
    /// augmented term when the nuisances are correct.
    SquaredSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Known,
    EvalData,
    SampleSplit,
    Initializer,
}

/// Per-period weights `g_t` over an estimation window, all at least ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceWeights {
    pub g: Vec<f64>,
    pub source: WeightSource,
    pub epsilon: f64,
    pub floor_hits: usize,
}

impl VarianceWeights {
    /// Weights supplied by the caller; every value must clear the floor.
    pub fn known(g: Vec<f64>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if g.is_empty() {
            return Err(OpeError::Empty("variance weights"));
        }
        if let Some((i, &v)) = g.iter().enumerate().find(|(_, &v)| !(v >= epsilon) || !v.is_finite()) {
            return Err(OpeError::WeightBelowFloor {
                period: i + 1,
                value: v,
                epsilon,
            });
        }
        Ok(Self {
            g,
            source: WeightSource::Known,
            epsilon,
            floor_hits: 0,
        })
    }

    /// Floors raw estimates `g′` at ε and counts how often the floor binds.
    pub fn floored(g_prime: &[f64], source: WeightSource, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let floor_hits = g_prime.iter().filter(|&&v| v < epsilon).count();
        Ok(Self {
            g: g_prime.iter().map(|&v| floor_variance(v, epsilon)).collect(),
            source,
            epsilon,
            floor_hits,
        })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(OpeError::InvalidParameter {
            name: "epsilon",
            reason: format!("must be positive, got {epsilon}"),
        });
    }
    Ok(())
}

/// `g = max(g′, ε)`.
pub fn floor_variance(g_prime: f64, epsilon: f64) -> f64 {
    g_prime.max(epsilon)
}

// ── Pool evaluation ─────────────────────────────────────────────────────

/// A policy evaluated at every pool point, stored once when the policy
/// ignores the context.
#[derive(Debug, Clone)]
pub(crate) struct PoolValues {
    data: Vec<f64>,
    k: usize,
    shared: bool,
}

impl PoolValues {
    pub(crate) fn policy(pool: &CovariatePool, p: &dyn Policy) -> Self {
        let k = p.num_actions();
        if p.context_free() {
            let mut data = vec![0.0; k];
            p.probs_into(&pool.points()[0], &mut data);
            return Self { data, k, shared: true };
        }
        let mut data = vec![0.0; k * pool.len()];
        for (x, out) in pool.points().iter().zip(data.chunks_mut(k)) {
            p.probs_into(x, out);
        }
        Self { data, k, shared: false }
    }

    fn row(&self, i: usize) -> &[f64] {
        if self.shared {
            &self.data
        } else {
            &self.data[i * self.k..(i + 1) * self.k]
        }
    }
}

/// `f̂`, `ê` at every pool point.
#[derive(Debug, Clone)]
pub(crate) struct PoolNuisance {
    f: Vec<f64>,
    e: Vec<f64>,
    k: usize,
}

impl PoolNuisance {
    pub(crate) fn new(pool: &CovariatePool, n: &dyn Nuisance) -> Self {
        let k = n.num_actions();
        let mut f = vec![0.0; k * pool.len()];
        let mut e = vec![0.0; k * pool.len()];
        for (i, x) in pool.points().iter().enumerate() {
            n.predict_into(x, &mut f[i * k..(i + 1) * k], &mut e[i * k..(i + 1) * k]);
        }
        Self { f, e, k }
    }

    fn rows(&self, i: usize) -> (&[f64], &[f64]) {
        let r = i * self.k..(i + 1) * self.k;
        (&self.f[r.clone()], &self.e[r])
    }
}

/// The per-covariate bracket of the variance formula, for either the
/// estimated (`v̂` floored) or the true conditional variance.
fn bracket(pe: &[f64], pt: &[f64], f: &[f64], v: impl Fn(usize) -> f64, theta: f64, form: VarianceForm) -> std::result::Result<f64, String> {
    let mut s = 0.0;
    let mut dm = 0.0;
    for a in 0..pe.len() {
        if pe[a] > 0.0 {
            if !(pt[a] > 0.0) {
                return Err(format!("behavior probability of action {a} is zero where the evaluation policy uses it"));
            }
            s += pe[a] * pe[a] * v(a) / pt[a];
        }
        match form {
            VarianceForm::PerArm => {
                let d = pe[a] * f[a] - theta;
                s += d * d;
            }
            VarianceForm::SquaredSum => dm += pe[a] * f[a],
        }
    }
    if form == VarianceForm::SquaredSum {
        let d = dm - theta;
        s += d * d;
    }
    Ok(s)
}

pub(crate) fn g_prime_core(
    pool: &CovariatePool,
    pe: &PoolValues,
    pt: &PoolValues,
    nuis: &PoolNuisance,
    theta: f64,
    form: VarianceForm,
) -> std::result::Result<f64, String> {
    let mut total = 0.0;
    for (i, w) in pool.weights().iter().enumerate() {
        let (f, e) = nuis.rows(i);
        let b = bracket(pe.row(i), pt.row(i), f, |a| (e[a] - f[a] * f[a]).max(V_FLOOR), theta, form)?;
        total += w * b;
    }
    Ok(total)
}

/// Raw variance estimate `g′` for one period: the pool average of
/// `Σ_a π^e² v̂ / π_t` plus the outcome-model spread around `θ̂_{t−1}`,
/// with `v̂ = max(ê − f̂², 10⁻⁶)`.
pub fn variance_estimate(
    pool: &CovariatePool,
    pi_e: &dyn Policy,
    snapshot: &dyn Policy,
    nuis: &dyn Nuisance,
    theta_prev: f64,
    form: VarianceForm,
) -> Result<f64> {
    if pool.is_empty() {
        return Err(OpeError::Empty("evaluation covariates"));
    }
    let k = pi_e.num_actions();
    for (what, got) in [("snapshot action count", snapshot.num_actions()), ("nuisance action count", nuis.num_actions())] {
        if got != k {
            return Err(OpeError::DimensionMismatch { what, expected: k, got });
        }
    }
    let pe = PoolValues::policy(pool, pi_e);
    let pt = PoolValues::policy(pool, snapshot);
    let pn = PoolNuisance::new(pool, nuis);
    g_prime_core(pool, &pe, &pt, &pn, theta_prev, form).map_err(OpeError::InvalidProbabilities)
}

/// Exact `σ*²_t` by summation over a finite context support, with the true
/// `f*`, `v*` and `θ₀`.
pub fn oracle_sigma_star(
    env: &dyn BanditEnvironment,
    snapshot: &dyn Policy,
    pi_e: &dyn Policy,
    theta0: f64,
    form: VarianceForm,
) -> Result<f64> {
    let support = env
        .support()
        .ok_or_else(|| OpeError::Unsupported("oracle variance needs a finite context support".into()))?;
    let k = env.num_actions();
    let (mut pe, mut pt, mut f) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    let mut total = 0.0;
    for (ctx, p) in &support {
        pi_e.probs_into(&ctx.x, &mut pe);
        snapshot.probs_into(&ctx.x, &mut pt);
        for (a, fa) in f.iter_mut().enumerate() {
            *fa = env.f_star(a, ctx);
        }
        let b = bracket(&pe, &pt, &f, |a| env.v_star(a, ctx), theta0, form).map_err(OpeError::InvalidProbabilities)?;
        total += p * b;
    }
    Ok(total)
}

// ── Weighted averaging and intervals ────────────────────────────────────

/// `(Σ_t 1/√g_t)⁻¹ Σ_t q_t/√g_t`. Weights are normalized by the largest one
/// so that equal weights become exactly 1 and the result reduces to the
/// plain mean bit for bit.
pub fn weighted_mean(q: &[f64], g: &[f64]) -> f64 {
    let g_min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for (v, gt) in q.iter().zip(g) {
        let u = (g_min / gt).sqrt();
        num += u * v;
        den += u;
    }
    num / den
}

/// `(1/√T) Σ_t 1/√g_t`.
pub fn stat_denominator(g: &[f64]) -> f64 {
    g.iter().map(|v| 1.0 / v.sqrt()).sum::<f64>() / (g.len() as f64).sqrt()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// `θ̂ ± z_{1−α/2} √T / Σ_t 1/√g_t` over the estimation window.
pub fn confidence_interval(g: &[f64], theta_hat: f64, alpha: f64) -> Result<(f64, f64)> {
    if g.is_empty() {
        return Err(OpeError::Empty("variance weights"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(OpeError::InvalidParameter {
            name: "alpha",
            reason: format!("must lie in (0, 1), got {alpha}"),
        });
    }
    let half = normal_quantile(1.0 - alpha / 2.0) / stat_denominator(g);
    Ok((theta_hat - half, theta_hat + half))
}

/// Builds a weighted report over a window of terms and weights.
pub(crate) fn weighted_report(
    method: Method,
    q: &[f64],
    weights: &VarianceWeights,
    alpha: f64,
    burn_in: usize,
    max_ratio: f64,
) -> Result<EstimateReport> {
    let theta_hat = weighted_mean(q, &weights.g);
    let mut report = EstimateReport {
        theta_hat,
        method,
        weights: weights.g.clone(),
        standardized_stat_denominator: Some(stat_denominator(&weights.g)),
        ci_low: None,
        ci_high: None,
        alpha,
        burn_in,
        window_len: q.len(),
        diagnostics: Diagnostics {
            max_importance_ratio: max_ratio,
            floor_hits: weights.floor_hits,
        },
        warnings: Vec::new(),
    };
    if q.len() == 1 {
        report
            .warnings
            .push("estimation window has a single period; confidence interval suppressed".into());
    } else {
        let (lo, hi) = confidence_interval(&weights.g, theta_hat, alpha)?;
        report.ci_low = Some(lo);
        report.ci_high = Some(hi);
    }
    if weights.floor_hits > 0 {
        report
            .warnings
            .push(format!("variance floor was binding in {} periods", weights.floor_hits));
    }
    Ok(report)
}

/// Weighted A3IPW with caller-supplied weights (one per period).
pub fn a3ipw_estimate(
    log: &HistoricalLog,
    pi_e: &dyn Policy,
    nuis: &NuisanceSequence,
    weights: &VarianceWeights,
) -> Result<EstimateReport> {
    check_inputs(log, pi_e, Some(nuis))?;
    if weights.len() != log.len() {
        return Err(OpeError::DimensionMismatch {
            what: "variance weights",
            expected: log.len(),
            got: weights.len(),
        });
    }
    if let Some((i, &v)) = weights.g.iter().enumerate().find(|(_, &v)| !(v >= weights.epsilon)) {
        return Err(OpeError::WeightBelowFloor {
            period: i + 1,
            value: v,
            epsilon: weights.epsilon,
        });
    }
    let terms = augmented_terms(log, pi_e, nuis)?;
    let ratio = terms.max_ratio.iter().copied().fold(0.0, f64::max);
    weighted_report(Method::A3Ipw, &terms.q, weights, DEFAULT_ALPHA, 0, ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_synthetic_env, ArmSpec, ContextLaw, NoiseSpec, SyntheticSpec};
    use crate::estimators::a2ipw_estimate;
    use crate::nuisance::{ConstantNuisance, FnNuisance, OracleNuisance};
    use crate::policies::{ConstantPolicy, FnPolicy};
    use crate::types::LoggedSample;
    use std::sync::Arc;

    fn one_hot(k: usize, i: usize) -> ConstantPolicy {
        let mut p = vec![0.0; k];
        p[i] = 1.0;
        ConstantPolicy::new(p).unwrap()
    }

    fn point_pool() -> CovariatePool {
        CovariatePool::from_contexts(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap()
    }

    /// `f̂ ≡ m` and `v̂ ≡ v` on every arm.
    fn flat(k: usize, m: f64, v: f64) -> ConstantNuisance {
        ConstantNuisance { k, f: m, e: v + m * m }
    }

    #[test]
    fn one_hot_unit_variance() {
        let pe = one_hot(3, 1);
        let pt = ConstantPolicy::new(vec![0.25, 0.5, 0.25]).unwrap();
        let m = 0.4;
        let g = variance_estimate(&point_pool(), &pe, &pt, &flat(3, m, 1.0), m, VarianceForm::SquaredSum).unwrap();
        assert!((g - 2.0).abs() < 1e-12);
        // The per-arm form agrees when the outcome model and θ are zero.
        let g0 = variance_estimate(&point_pool(), &pe, &pt, &flat(3, 0.0, 1.0), 0.0, VarianceForm::PerArm).unwrap();
        assert!((g0 - 2.0).abs() < 1e-12);
        // Otherwise each unused arm contributes θ².
        let g1 = variance_estimate(&point_pool(), &pe, &pt, &flat(3, m, 1.0), m, VarianceForm::PerArm).unwrap();
        assert!((g1 - (2.0 + 2.0 * m * m)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_rewards_give_floor_only() {
        let pe = one_hot(2, 0);
        let pt = ConstantPolicy::new(vec![0.5, 0.5]).unwrap();
        let g = variance_estimate(&point_pool(), &pe, &pt, &flat(2, 0.3, 0.0), 0.3, VarianceForm::SquaredSum).unwrap();
        // v̂ is floored at 1e-6, so g′ equals V_FLOOR / 0.5 instead of exactly 0.
        assert!((g - V_FLOOR / 0.5).abs() < 1e-18);
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(CovariatePool::from_contexts(&[]).is_err());
    }

    #[test]
    fn floor_examples() {
        assert_eq!(floor_variance(-0.3, 0.01), 0.01);
        assert_eq!(floor_variance(2.0, 0.01), 2.0);
        let w = VarianceWeights::floored(&[-0.3, 2.0, 0.009, 0.01], WeightSource::EvalData, 0.01).unwrap();
        assert_eq!(w.floor_hits, 2);
        assert_eq!(w.g, vec![0.01, 2.0, 0.01, 0.01]);
    }

    #[test]
    fn ci_examples() {
        let (lo, hi) = confidence_interval(&[1.0; 4], 0.0, 0.05).unwrap();
        assert!((hi - 0.979982).abs() < 1e-6);
        assert!((lo + hi).abs() < 1e-15);
        let (lo, hi) = confidence_interval(&[1.0; 4], 0.0, 1.0 - 1e-12).unwrap();
        assert!(hi - lo < 1e-10);
        let g = [0.5, 1.5, 2.0, 0.7];
        let g2: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let w1 = confidence_interval(&g, 0.0, 0.05).unwrap();
        let w2 = confidence_interval(&g2, 0.0, 0.05).unwrap();
        assert!(((w2.1 - w2.0) / (w1.1 - w1.0) - 2f64.sqrt()).abs() < 1e-12);
        assert!(confidence_interval(&g, 0.0, 0.0).is_err());
    }

    #[test]
    fn normal_quantile_accuracy() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
        assert!((normal_quantile(0.995) - 2.575_829_303_548_901).abs() < 1e-8);
    }

    fn log_with_rewards(ys: &[f64]) -> HistoricalLog {
        let samples = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| LoggedSample::new(i + 1, vec![0.0], i % 2, y, vec![0.5, 0.5]).unwrap())
            .collect();
        HistoricalLog::new(samples, 2, 1).unwrap()
    }

    #[test]
    fn a3ipw_arithmetic() {
        let log = log_with_rewards(&[0.25, 0.75]);
        let pe = ConstantPolicy::new(vec![0.5, 0.5]).unwrap();
        let nuis = NuisanceSequence::zero(2, 2);
        let (q1, q2) = (0.25, 0.75);
        let w = VarianceWeights::known(vec![1.0, 4.0], 1e-3).unwrap();
        let r = a3ipw_estimate(&log, &pe, &nuis, &w).unwrap();
        assert!((r.theta_hat - (q1 + q2 / 2.0) / 1.5).abs() < 1e-15);
        assert_eq!(r.standardized_stat_denominator, Some(1.5 / 2f64.sqrt()));
    }

    #[test]
    fn a3ipw_constant_weights_is_a2ipw() {
        let log = log_with_rewards(&[0.1, 0.9, 0.33, 0.47, 0.58]);
        let pe = ConstantPolicy::new(vec![0.3, 0.7]).unwrap();
        let nuis = NuisanceSequence::repeat(Arc::new(ConstantNuisance { k: 2, f: 0.2, e: 0.1 }), 5);
        let a2 = a2ipw_estimate(&log, &pe, &nuis).unwrap().theta_hat;
        for c in [1.0, 4.0, 0.37, 2.9] {
            let w = VarianceWeights::known(vec![c; 5], 1e-3).unwrap();
            assert_eq!(a3ipw_estimate(&log, &pe, &nuis, &w).unwrap().theta_hat, a2);
        }
    }

    #[test]
    fn a3ipw_rejects_bad_weights() {
        let log = log_with_rewards(&[0.1, 0.9]);
        let pe = ConstantPolicy::new(vec![0.5, 0.5]).unwrap();
        let nuis = NuisanceSequence::zero(2, 2);
        assert!(VarianceWeights::known(vec![1.0, 1e-4], 1e-3).is_err());
        let sneaky = VarianceWeights {
            g: vec![1.0, 1e-4],
            source: WeightSource::Known,
            epsilon: 1e-3,
            floor_hits: 0,
        };
        assert!(matches!(
            a3ipw_estimate(&log, &pe, &nuis, &sneaky),
            Err(OpeError::WeightBelowFloor { period: 2, .. })
        ));
        let short = VarianceWeights::known(vec![1.0], 1e-3).unwrap();
        assert!(a3ipw_estimate(&log, &pe, &nuis, &short).is_err());
    }

    #[test]
    fn single_period_window_suppresses_ci() {
        let log = log_with_rewards(&[0.5]);
        let pe = ConstantPolicy::new(vec![0.5, 0.5]).unwrap();
        let w = VarianceWeights::known(vec![1.0], 1e-3).unwrap();
        let r = a3ipw_estimate(&log, &pe, &NuisanceSequence::zero(2, 1), &w).unwrap();
        assert!(r.ci().is_none());
        assert_eq!(r.warnings.len(), 1);
    }

    fn bernoulli_2x2() -> Arc<dyn BanditEnvironment> {
        Arc::new(
            make_synthetic_env(SyntheticSpec {
                dim: 1,
                contexts: ContextLaw::Finite {
                    points: vec![vec![0.0], vec![1.0]],
                    probs: Some(vec![0.25, 0.75]),
                },
                arms: vec![
                    ArmSpec {
                        intercept: 0.2,
                        slope: vec![0.5],
                    },
                    ArmSpec {
                        intercept: 0.6,
                        slope: vec![-0.2],
                    },
                ],
                noise: NoiseSpec::Bernoulli,
                c2: 1.0,
            })
            .unwrap(),
        )
    }

    #[test]
    fn hand_computed_oracle_2x2() {
        // Means: x=0 → (0.2, 0.6); x=1 → (0.7, 0.4). p(x) = (1/4, 3/4).
        let env = bernoulli_2x2();
        let pe = ConstantPolicy::new(vec![0.5, 0.5]).unwrap();
        let pt = ConstantPolicy::new(vec![0.8, 0.2]).unwrap();
        let theta0 = crate::envs::true_policy_value(env.as_ref(), &pe).unwrap();
        let bracket = |f0: f64, f1: f64| {
            let v = |f: f64| f * (1.0 - f);
            0.25 * v(f0) / 0.8 + 0.25 * v(f1) / 0.2 + (0.5 * f0 + 0.5 * f1 - theta0).powi(2)
        };
        let hand = 0.25 * bracket(0.2, 0.6) + 0.75 * bracket(0.7, 0.4);
        let s = oracle_sigma_star(env.as_ref(), &pt, &pe, theta0, VarianceForm::SquaredSum).unwrap();
        assert!((s - hand).abs() < 1e-15);
    }

    #[test]
    fn oracle_deterministic_zero_and_dominance() {
        let env: Arc<dyn BanditEnvironment> = Arc::new(
            make_synthetic_env(SyntheticSpec {
                dim: 1,
                contexts: ContextLaw::Finite {
                    points: vec![vec![0.0], vec![1.0]],
                    probs: None,
                },
                arms: vec![
                    ArmSpec {
                        intercept: 0.0,
                        slope: vec![],
                    },
                    ArmSpec {
                        intercept: 0.5,
                        slope: vec![],
                    },
                ],
                noise: NoiseSpec::None,
                c2: 1.0,
            })
            .unwrap(),
        );
        let pe = one_hot(2, 1);
        let uniform = ConstantPolicy::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(oracle_sigma_star(env.as_ref(), &uniform, &pe, 0.5, VarianceForm::SquaredSum).unwrap(), 0.0);

        let noisy = bernoulli_2x2();
        let focused = ConstantPolicy::new(vec![0.1, 0.9]).unwrap();
        let pe = one_hot(2, 1);
        let theta0 = crate::envs::true_policy_value(noisy.as_ref(), &pe).unwrap();
        for form in [VarianceForm::PerArm, VarianceForm::SquaredSum] {
            let u = oracle_sigma_star(noisy.as_ref(), &uniform, &pe, theta0, form).unwrap();
            let c = oracle_sigma_star(noisy.as_ref(), &focused, &pe, theta0, form).unwrap();
            assert!(c < u);
        }
    }

    #[test]
    fn estimate_matches_oracle_on_full_support() {
        let env = bernoulli_2x2();
        let support = env.support().unwrap();
        let pool = CovariatePool::from_support(&support).unwrap();
        let oracle = OracleNuisance::new(env.clone());
        let pe = FnPolicy::new(2, |x: &[f64], out: &mut [f64]| {
            out[0] = 0.3 + 0.4 * x[0];
            out[1] = 1.0 - out[0];
        });
        let pt = FnPolicy::new(2, |x: &[f64], out: &mut [f64]| {
            out[0] = 0.6 - 0.3 * x[0];
            out[1] = 1.0 - out[0];
        });
        let theta0 = crate::envs::true_policy_value(env.as_ref(), &pe).unwrap();
        for form in [VarianceForm::PerArm, VarianceForm::SquaredSum] {
            let g = variance_estimate(&pool, &pe, &pt, &oracle, theta0, form).unwrap();
            let s = oracle_sigma_star(env.as_ref(), &pt, &pe, theta0, form).unwrap();
            assert!((g - s).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_behavior_probability_is_an_error() {
        let pe = ConstantPolicy::new(vec![0.5, 0.5]).unwrap();
        let pt = FnPolicy::new(2, |_: &[f64], out: &mut [f64]| out.copy_from_slice(&[1.0, 0.0]));
        let n = FnNuisance::new(2, 0, |_: &[f64], f: &mut [f64], e: &mut [f64]| {
            f.fill(0.0);
            e.fill(1.0);
        });
        assert!(variance_estimate(&point_pool(), &pe, &pt, &n, 0.0, VarianceForm::PerArm).is_err());
    }
}
