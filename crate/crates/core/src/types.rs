//! Domain types shared by every module: logged samples, the dependent log,
//! policy functions, assumption bounds and estimate reports.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

/// Tolerance on `|Σ p − 1|` for every probability vector in the crate.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Checks that `p` is a probability vector over `k` actions. With `strict`,
/// every entry must also be strictly positive (overlap).
pub fn check_probabilities(p: &[f64], k: usize, strict: bool) -> std::result::Result<(), String> {
    if p.len() != k {
        return Err(format!("expected {k} entries, got {}", p.len()));
    }
    let mut sum = 0.0;
    for (a, &v) in p.iter().enumerate() {
        if !v.is_finite() || v < 0.0 || v > 1.0 + PROB_SUM_TOL {
            return Err(format!("entry {a} = {v} is outside [0, 1]"));
        }
        if strict && v <= 0.0 {
            return Err(format!("entry {a} = {v} is not strictly positive"));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

// ── Logged samples ──────────────────────────────────────────────────────

/// One period of logged bandit feedback together with the full propensity
/// vector the behavior policy used at logging time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample")]
pub struct LoggedSample {
    /// Period index, 1-based.
    pub t: usize,
    pub x: Vec<f64>,
    /// Action, 0-based.
    pub a: usize,
    pub y: f64,
    pub propensities: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSample {
    t: usize,
    x: Vec<f64>,
    a: usize,
    y: f64,
    propensities: Vec<f64>,
}

impl TryFrom<RawSample> for LoggedSample {
    type Error = OpeError;

    fn try_from(r: RawSample) -> Result<Self> {
        LoggedSample::new(r.t, r.x, r.a, r.y, r.propensities)
    }
}

impl LoggedSample {
    pub fn new(t: usize, x: Vec<f64>, a: usize, y: f64, propensities: Vec<f64>) -> Result<Self> {
        let bad = |reason: String| OpeError::InvalidSample { period: t, reason };
        if t == 0 {
            return Err(bad("period indices are 1-based".into()));
        }
        let k = propensities.len();
        if k == 0 {
            return Err(bad("empty propensity vector".into()));
        }
        if a >= k {
            return Err(bad(format!("action {a} out of range for {k} actions")));
        }
        check_probabilities(&propensities, k, true).map_err(bad)?;
        if !y.is_finite() {
            return Err(bad(format!("non-finite reward {y}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite context entry".into()));
        }
        Ok(Self {
            t,
            x,
            a,
            y,
            propensities,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.propensities.len()
    }

    /// Logged propensity of the realized action.
    pub fn propensity(&self) -> f64 {
        self.propensities[self.a]
    }
}

// ── Policies ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Evaluation,
    BehaviorSnapshot,
}

/// A full conditional action-probability function `x ↦ π(·|x)`.
pub trait Policy: Send + Sync {
    fn num_actions(&self) -> usize;

    /// Writes `π(·|x)` into `out` (length `num_actions()`).
    fn probs_into(&self, x: &[f64], out: &mut [f64]);

    fn probs(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions()];
        self.probs_into(x, &mut out);
        out
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Evaluation
    }

    /// True when the output does not depend on `x`. Lets callers evaluate
    /// the policy once instead of per covariate.
    fn context_free(&self) -> bool {
        false
    }

    /// Context dimension the policy was built for, if it has one.
    fn input_dim(&self) -> Option<usize> {
        None
    }
}

impl<P: Policy + ?Sized> Policy for Arc<P> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).probs_into(x, out)
    }
    fn kind(&self) -> PolicyKind {
        (**self).kind()
    }
    fn context_free(&self) -> bool {
        (**self).context_free()
    }
    fn input_dim(&self) -> Option<usize> {
        (**self).input_dim()
    }
}

/// Shared handle to a behavior-policy snapshot.
pub type SharedPolicy = Arc<dyn Policy>;

// ── Historical log ──────────────────────────────────────────────────────

/// The ordered, dependent sample `S_T`, optionally carrying the behavior
/// policy snapshot `π_t(·|·, Ω_{t−1})` of every period.
#[derive(Clone)]
pub struct HistoricalLog {
    samples: Vec<LoggedSample>,
    k: usize,
    d: usize,
    snapshots: Option<Vec<SharedPolicy>>,
}

impl fmt::Debug for HistoricalLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HistoricalLog")
            .field("len", &self.samples.len())
            .field("k", &self.k)
            .field("d", &self.d)
            .field("has_snapshots", &self.snapshots.is_some())
            .finish()
    }
}

impl HistoricalLog {
    pub fn new(samples: Vec<LoggedSample>, k: usize, d: usize) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.t != i + 1 {
                return Err(OpeError::InvalidSample {
                    period: s.t,
                    reason: format!("expected period {} (indices must be 1..T without gaps)", i + 1),
                });
            }
            if s.num_actions() != k {
                return Err(OpeError::DimensionMismatch {
                    what: "action count",
                    expected: k,
                    got: s.num_actions(),
                });
            }
            if s.x.len() != d {
                return Err(OpeError::DimensionMismatch {
                    what: "context dimension",
                    expected: d,
                    got: s.x.len(),
                });
            }
        }
        Ok(Self {
            samples,
            k,
            d,
            snapshots: None,
        })
    }

    /// Attaches one behavior snapshot per period.
    pub fn with_snapshots(mut self, snapshots: Vec<SharedPolicy>) -> Result<Self> {
        if snapshots.len() != self.samples.len() {
            return Err(OpeError::DimensionMismatch {
                what: "behavior snapshots",
                expected: self.samples.len(),
                got: snapshots.len(),
            });
        }
        if let Some(p) = snapshots.iter().find(|p| p.num_actions() != self.k) {
            return Err(OpeError::DimensionMismatch {
                what: "snapshot action count",
                expected: self.k,
                got: p.num_actions(),
            });
        }
        self.snapshots = Some(snapshots);
        Ok(self)
    }

    pub fn samples(&self) -> &[LoggedSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn snapshots(&self) -> Option<&[SharedPolicy]> {
        self.snapshots.as_deref()
    }

    /// Snapshot of period `t` (1-based).
    pub fn snapshot(&self, t: usize) -> Option<&SharedPolicy> {
        self.snapshots.as_ref().and_then(|s| s.get(t.checked_sub(1)?))
    }

    /// The first `t` periods, snapshots included.
    pub fn prefix(&self, t: usize) -> HistoricalLog {
        let t = t.min(self.len());
        HistoricalLog {
            samples: self.samples[..t].to_vec(),
            k: self.k,
            d: self.d,
            snapshots: self.snapshots.as_ref().map(|s| s[..t].to_vec()),
        }
    }

    /// Returns a copy with every reward transformed by `f`.
    pub fn map_rewards(&self, f: impl Fn(f64) -> f64) -> HistoricalLog {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.y = f(s.y);
        }
        out
    }
}

// ── Assumption bounds ───────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRatioBound {
    /// Bound on `π^e(a|x) / π_t(a|x)`.
    pub c1: f64,
    /// Bound on `|Y|` and on the outcome model.
    pub c2: f64,
    /// Bound on `1/√g`.
    pub c3: f64,
    /// Variance floor ε.
    pub epsilon: f64,
}

impl Default for ImportanceRatioBound {
    fn default() -> Self {
        Self {
            c1: 10.0,
            c2: 1.0,
            c3: 1e3f64.sqrt(),
            epsilon: 1e-3,
        }
    }
}

impl ImportanceRatioBound {
    pub fn new(c1: f64, c2: f64, c3: f64, epsilon: f64) -> Result<Self> {
        for (name, v) in [("c1", c1), ("c2", c2), ("c3", c3), ("epsilon", epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OpeError::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        // 1/√ε ≤ C3, with a relative slack for the boundary case.
        if epsilon * c3 * c3 < 1.0 - 1e-12 {
            return Err(OpeError::InvalidParameter {
                name: "epsilon",
                reason: format!("must satisfy epsilon >= 1/c3^2 = {}", 1.0 / (c3 * c3)),
            });
        }
        Ok(Self { c1, c2, c3, epsilon })
    }
}

// ── Validation ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    RatioBound { period: usize, action: usize, ratio: f64 },
    RewardBound { period: usize, y: f64 },
    NonPositivePropensity { period: usize, action: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub max_ratio: f64,
    /// Whether the evaluation policy was one-hot on every logged context.
    /// Informational only.
    pub eval_deterministic: bool,
}

impl ValidationReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the bounded-ratio and bounded-reward assumptions on a realized log.
pub fn validate_log(
    log: &HistoricalLog,
    eval_policy: &dyn Policy,
    bounds: &ImportanceRatioBound,
) -> Result<ValidationReport> {
    if log.is_empty() {
        return Err(OpeError::Empty("historical log"));
    }
    if eval_policy.num_actions() != log.num_actions() {
        return Err(OpeError::DimensionMismatch {
            what: "evaluation policy action count",
            expected: log.num_actions(),
            got: eval_policy.num_actions(),
        });
    }
    if let Some(d) = eval_policy.input_dim() {
        if d != log.dim() {
            return Err(OpeError::DimensionMismatch {
                what: "evaluation policy input dimension",
                expected: log.dim(),
                got: d,
            });
        }
    }
    let mut violations = Vec::new();
    let mut max_ratio: f64 = 0.0;
    let mut deterministic = true;
    let mut pe = vec![0.0; log.num_actions()];
    for s in log.samples() {
        eval_policy.probs_into(&s.x, &mut pe);
        if pe.iter().filter(|&&p| p == 1.0).count() != 1 {
            deterministic = false;
        }
        for (a, (&e, &b)) in pe.iter().zip(&s.propensities).enumerate() {
            if b <= 0.0 {
                violations.push(Violation::NonPositivePropensity { period: s.t, action: a });
                continue;
            }
            let ratio = e / b;
            max_ratio = max_ratio.max(ratio);
            if ratio > bounds.c1 {
                violations.push(Violation::RatioBound {
                    period: s.t,
                    action: a,
                    ratio,
                });
            }
        }
        if s.y.abs() > bounds.c2 {
            violations.push(Violation::RewardBound { period: s.t, y: s.y });
        }
    }
    Ok(ValidationReport {
        violations,
        max_ratio,
        eval_deterministic: deterministic,
    })
}

// ── Estimate reports ────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DM")]
    Dm,
    #[serde(rename = "AdaIPW")]
    AdaIpw,
    #[serde(rename = "A2IPW")]
    A2Ipw,
    #[serde(rename = "A3IPW")]
    A3Ipw,
    #[serde(rename = "FA3IPW")]
    Fa3Ipw,
    #[serde(rename = "SFA3IPW")]
    Sfa3Ipw,
    #[serde(rename = "FA2daIPW")]
    Fa2daIpw,
    #[serde(rename = "TSFA3IPW")]
    Tsfa3Ipw,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Dm,
        Method::AdaIpw,
        Method::A2Ipw,
        Method::A3Ipw,
        Method::Fa3Ipw,
        Method::Sfa3Ipw,
        Method::Fa2daIpw,
        Method::Tsfa3Ipw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dm => "DM",
            Method::AdaIpw => "AdaIPW",
            Method::A2Ipw => "A2IPW",
            Method::A3Ipw => "A3IPW",
            Method::Fa3Ipw => "FA3IPW",
            Method::Sfa3Ipw => "SFA3IPW",
            Method::Fa2daIpw => "FA2daIPW",
            Method::Tsfa3Ipw => "TSFA3IPW",
        }
    }
}

/// Case-insensitive match on the display name.
impl std::str::FromStr for Method {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| OpeError::InvalidParameter {
                name: "estimator",
                reason: format!(
                    "unknown estimator {s:?}; expected one of {}",
                    Method::ALL.map(Method::name).join(", ")
                ),
            })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest `π^e(a|X_t)/π_t(a|X_t)` over the window and all actions.
    pub max_importance_ratio: f64,
    /// Number of periods where the variance floor ε was binding.
    pub floor_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub theta_hat: f64,
    pub method: Method,
    /// Per-period variance weights `g_t` over the estimation window.
    pub weights: Vec<f64>,
    /// `(1/√T) Σ_t 1/√g_t` over the window, when weights are present.
    pub standardized_stat_denominator: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub alpha: f64,
    pub burn_in: usize,
    /// Number of periods averaged.
    pub window_len: usize,
    pub diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EstimateReport {
    pub(crate) fn unweighted(method: Method, theta_hat: f64, window_len: usize, max_ratio: f64) -> Self {
        Self {
            theta_hat,
            method,
            weights: Vec::new(),
            standardized_stat_denominator: None,
            ci_low: None,
            ci_high: None,
            alpha: 0.05,
            burn_in: 0,
            window_len,
            diagnostics: Diagnostics {
                max_importance_ratio: max_ratio,
                floor_hits: 0,
            },
            warnings: Vec::new(),
        }
    }

    pub fn ci(&self) -> Option<(f64, f64)> {
        Some((self.ci_low?, self.ci_high?))
    }

    /// `(1/√T Σ 1/√g_t)(θ̂ − θ₀)`, asymptotically standard normal.
    pub fn standardized_statistic(&self, theta0: f64) -> Option<f64> {
        self.standardized_stat_denominator
            .map(|den| den * (self.theta_hat - theta0))
    }

    pub fn covers(&self, theta0: f64) -> Option<bool> {
        self.ci().map(|(lo, hi)| lo <= theta0 && theta0 <= hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_parse_back() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(m.name().to_lowercase().parse::<Method>().unwrap(), m);
        }
        assert!("IPW".parse::<Method>().is_err());
    }
    use proptest::prelude::*;

    struct Fixed(Vec<f64>);
    impl Policy for Fixed {
        fn num_actions(&self) -> usize {
            self.0.len()
        }
        fn probs_into(&self, _x: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&self.0);
        }
    }

    fn one_sample_log(p: Vec<f64>, y: f64) -> HistoricalLog {
        let s = LoggedSample::new(1, vec![0.0], 0, y, p).unwrap();
        HistoricalLog::new(vec![s], 2, 1).unwrap()
    }

    #[test]
    fn ratio_within_bound() {
        let log = one_sample_log(vec![0.5, 0.5], 1.0);
        let b = ImportanceRatioBound::new(4.0, 1.0, 1e3f64.sqrt(), 1e-3).unwrap();
        let r = validate_log(&log, &Fixed(vec![1.0, 0.0]), &b).unwrap();
        assert!(r.holds());
        assert_eq!(r.max_ratio, 2.0);
        assert!(r.eval_deterministic);
    }

    #[test]
    fn ratio_violation_reported_once() {
        let log = one_sample_log(vec![0.1, 0.9], 1.0);
        let b = ImportanceRatioBound::new(4.0, 1.0, 1e3f64.sqrt(), 1e-3).unwrap();
        let r = validate_log(&log, &Fixed(vec![1.0, 0.0]), &b).unwrap();
        assert_eq!(r.violations.len(), 1);
        match &r.violations[0] {
            Violation::RatioBound { period, action, ratio } => {
                assert_eq!((*period, *action), (1, 0));
                assert!((ratio - 10.0).abs() < 1e-12);
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn reward_violation() {
        let log = one_sample_log(vec![0.5, 0.5], 1.5);
        let r = validate_log(&log, &Fixed(vec![0.5, 0.5]), &ImportanceRatioBound::default()).unwrap();
        assert_eq!(r.violations, vec![Violation::RewardBound { period: 1, y: 1.5 }]);
        assert!(!r.eval_deterministic);
    }

    #[test]
    fn empty_log_is_precondition_error() {
        let log = HistoricalLog::new(vec![], 2, 1).unwrap();
        let e = validate_log(&log, &Fixed(vec![0.5, 0.5]), &ImportanceRatioBound::default());
        assert_eq!(e.unwrap_err(), OpeError::Empty("historical log"));
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        struct Dim3;
        impl Policy for Dim3 {
            fn num_actions(&self) -> usize {
                2
            }
            fn probs_into(&self, _x: &[f64], out: &mut [f64]) {
                out.fill(0.5);
            }
            fn input_dim(&self) -> Option<usize> {
                Some(3)
            }
        }
        let log = one_sample_log(vec![0.5, 0.5], 1.0);
        let e = validate_log(&log, &Dim3, &ImportanceRatioBound::default()).unwrap_err();
        assert!(matches!(e, OpeError::DimensionMismatch { .. }));
    }

    #[test]
    fn log_requires_contiguous_periods() {
        let s1 = LoggedSample::new(1, vec![0.0], 0, 0.0, vec![0.5, 0.5]).unwrap();
        let s3 = LoggedSample::new(3, vec![0.0], 0, 0.0, vec![0.5, 0.5]).unwrap();
        assert!(HistoricalLog::new(vec![s1, s3], 2, 1).is_err());
    }

    #[test]
    fn bounds_reject_inconsistent_floor() {
        assert!(ImportanceRatioBound::new(1.0, 1.0, 2.0, 0.1).is_err());
        assert!(ImportanceRatioBound::new(1.0, 1.0, 2.0, 0.25).is_ok());
        assert!(ImportanceRatioBound::new(0.0, 1.0, 2.0, 0.25).is_err());
    }

    #[test]
    fn deserialization_validates() {
        let ok = r#"{"t":1,"x":[0.5],"a":1,"y":1.0,"propensities":[0.25,0.75]}"#;
        assert!(serde_json::from_str::<LoggedSample>(ok).is_ok());
        let bad = r#"{"t":1,"x":[0.5],"a":1,"y":1.0,"propensities":[0.0,1.0]}"#;
        assert!(serde_json::from_str::<LoggedSample>(bad).is_err());
    }

    proptest! {
        #[test]
        fn invalid_propensity_vectors_rejected(v in proptest::collection::vec(-0.5f64..1.5, 2..6)) {
            let sum: f64 = v.iter().sum();
            let valid = v.iter().all(|&p| p > 0.0 && p <= 1.0) && (sum - 1.0).abs() <= PROB_SUM_TOL;
            let k = v.len();
            let r = LoggedSample::new(1, vec![], 0, 0.0, v);
            prop_assert_eq!(r.is_ok(), valid);
            if let Ok(s) = r {
                prop_assert_eq!(s.num_actions(), k);
            }
        }

        #[test]
        fn normalized_vectors_accepted(v in proptest::collection::vec(0.01f64..1.0, 2..8)) {
            let sum: f64 = v.iter().sum();
            let p: Vec<f64> = v.iter().map(|x| x / sum).collect();
            prop_assert!(LoggedSample::new(1, vec![1.0], 0, 0.5, p).is_ok());
        }

        #[test]
        fn validation_is_pure(ps in proptest::collection::vec(0.05f64..1.0, 2), y in -2.0f64..2.0) {
            let s: f64 = ps.iter().sum();
            let log = one_sample_log(ps.iter().map(|p| p / s).collect(), y);
            let pol = Fixed(vec![0.3, 0.7]);
            let b = ImportanceRatioBound::default();
            prop_assert_eq!(validate_log(&log, &pol, &b).unwrap(), validate_log(&log, &pol, &b).unwrap());
        }
    }
}
