//! Environments and log generation.
//!
//! A period draws `x ~ p(x)`, asks the behavior policy for `π_t(·|x)`,
//! samples the action from that vector, draws `y ~ p(y|a, x)`, stores the
//! full propensity vector and the policy snapshot, then feeds `(x, a, y)`
//! back to the policy. All randomness comes from the caller's generator, so
//! a seed fixes the log and a shorter run reproduces a prefix of a longer one.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{OpeError, Result};
use crate::ingest::ClassificationDataset;
use crate::policies::AdaptivePolicy;
use crate::types::{check_probabilities, HistoricalLog, LoggedSample, Policy};

/// A context draw. `key` identifies the support point or dataset row the
/// context came from, when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub x: Vec<f64>,
    pub key: Option<usize>,
}

impl Context {
    pub fn free(x: Vec<f64>) -> Self {
        Self { x, key: None }
    }
}

pub trait BanditEnvironment: Send + Sync {
    fn num_actions(&self) -> usize;
    fn dim(&self) -> usize;
    /// `C₂`: every reward draw satisfies `|y| ≤ C₂`.
    fn reward_bound(&self) -> f64;
    fn sample_context(&self, rng: &mut dyn RngCore) -> Context;
    fn sample_reward(&self, rng: &mut dyn RngCore, a: usize, ctx: &Context) -> f64;
    /// `E[Y(a) | x]`.
    fn f_star(&self, a: usize, ctx: &Context) -> f64;
    /// `E[Y(a)² | x]`.
    fn e_star(&self, a: usize, ctx: &Context) -> f64;
    fn v_star(&self, a: usize, ctx: &Context) -> f64 {
        let f = self.f_star(a, ctx);
        (self.e_star(a, ctx) - f * f).max(0.0)
    }
    /// Finite context support with probabilities, when the law is discrete.
    fn support(&self) -> Option<Vec<(Context, f64)>>;
}

// ── Synthetic environments ──────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextLaw {
    /// Uniform over the listed points unless `probs` is given.
    Finite {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        probs: Option<Vec<f64>>,
    },
    /// Independent `N(0, sd²)` coordinates.
    Gaussian { sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// `y = f*(a, x)` exactly.
    None,
    /// `y ~ Bernoulli(f*(a, x))`.
    Bernoulli,
    /// `y = f* + ε`, `ε ~ N(0, sd²)` truncated to `±truncate·sd`.
    TruncatedGaussian { sd: f64, truncate: f64 },
    /// Unbounded noise; rejected because rewards must be bounded.
    Gaussian { sd: f64 },
}

/// `f*(a, x) = clamp(intercept_a + slope_a·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub intercept: f64,
    #[serde(default)]
    pub slope: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub contexts: ContextLaw,
    pub arms: Vec<ArmSpec>,
    pub noise: NoiseSpec,
    /// Reward bound C₂.
    #[serde(default = "default_c2")]
    pub c2: f64,
}

fn default_c2() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    spec: SyntheticSpec,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    /// Range `f*` is clamped into so that draws stay within ±C₂.
    mean_range: (f64, f64),
    noise_var: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Variance of `N(0, sd²)` truncated to `±c·sd`.
pub fn truncated_normal_variance(sd: f64, c: f64) -> f64 {
    let phi = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
    sd * sd * (1.0 - 2.0 * c * phi / (2.0 * std_normal_cdf(c) - 1.0))
}

pub fn make_synthetic_env(spec: SyntheticSpec) -> Result<SyntheticEnv> {
    let param = |name: &'static str, reason: String| OpeError::InvalidParameter { name, reason };
    if spec.arms.len() < 2 {
        return Err(param("arms", "need at least 2 arms".into()));
    }
    if !(spec.c2 > 0.0) {
        return Err(param("c2", format!("must be positive, got {}", spec.c2)));
    }
    for arm in &spec.arms {
        if !arm.slope.is_empty() && arm.slope.len() != spec.dim {
            return Err(OpeError::DimensionMismatch {
                what: "arm slope",
                expected: spec.dim,
                got: arm.slope.len(),
            });
        }
    }
    let (probs, cumulative) = match &spec.contexts {
        ContextLaw::Finite { points, probs } => {
            if points.is_empty() {
                return Err(OpeError::Empty("finite context support"));
            }
            if let Some(p) = points.iter().find(|p| p.len() != spec.dim) {
                return Err(OpeError::DimensionMismatch {
                    what: "support point",
                    expected: spec.dim,
                    got: p.len(),
                });
            }
            let probs = match probs {
                Some(p) => {
                    check_probabilities(p, points.len(), false).map_err(OpeError::InvalidProbabilities)?;
                    p.clone()
                }
                None => vec![1.0 / points.len() as f64; points.len()],
            };
            let cumulative = probs
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            (probs, cumulative)
        }
        ContextLaw::Gaussian { sd } => {
            if !(*sd > 0.0) {
                return Err(param("sd", format!("context sd must be positive, got {sd}")));
            }
            (Vec::new(), Vec::new())
        }
    };
    let c2 = spec.c2;
    let (mean_range, noise_var) = match spec.noise {
        NoiseSpec::None => ((-c2, c2), 0.0),
        NoiseSpec::Bernoulli => {
            if c2 < 1.0 {
                return Err(param("c2", "Bernoulli rewards need c2 >= 1".into()));
            }
            ((0.0, 1.0), f64::NAN)
        }
        NoiseSpec::TruncatedGaussian { sd, truncate } => {
            if !(sd > 0.0 && truncate > 0.0) {
                return Err(param("noise", "sd and truncate must be positive".into()));
            }
            let half = sd * truncate;
            if half >= c2 {
                return Err(param("noise", format!("noise half-width {half} leaves no room under c2 = {c2}")));
            }
            ((-(c2 - half), c2 - half), truncated_normal_variance(sd, truncate))
        }
        NoiseSpec::Gaussian { .. } => {
            return Err(OpeError::Unsupported(
                "unbounded Gaussian reward noise; rewards must satisfy |y| <= c2".into(),
            ))
        }
    };
    Ok(SyntheticEnv {
        spec,
        probs,
        cumulative,
        mean_range,
        noise_var,
    })
}

impl SyntheticEnv {
    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    /// `f*` at a raw context vector.
    pub fn mean(&self, a: usize, x: &[f64]) -> f64 {
        let arm = &self.spec.arms[a];
        let lin = arm.intercept + arm.slope.iter().zip(x).map(|(s, v)| s * v).sum::<f64>();
        lin.clamp(self.mean_range.0, self.mean_range.1)
    }

    pub fn second_moment(&self, a: usize, x: &[f64]) -> f64 {
        let f = self.mean(a, x);
        match self.spec.noise {
            NoiseSpec::Bernoulli => f,
            _ => f * f + self.noise_var,
        }
    }

    fn point(&self, key: usize) -> Context {
        match &self.spec.contexts {
            ContextLaw::Finite { points, .. } => Context {
                x: points[key].clone(),
                key: Some(key),
            },
            ContextLaw::Gaussian { .. } => unreachable!("gaussian contexts have no keys"),
        }
    }
}

impl BanditEnvironment for SyntheticEnv {
    fn num_actions(&self) -> usize {
        self.spec.arms.len()
    }

    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn reward_bound(&self) -> f64 {
        self.spec.c2
    }

    fn sample_context(&self, rng: &mut dyn RngCore) -> Context {
        match &self.spec.contexts {
            ContextLaw::Finite { .. } => {
                let u: f64 = rng.random();
                let i = self.cumulative.partition_point(|&c| c <= u).min(self.probs.len() - 1);
                self.point(i)
            }
            ContextLaw::Gaussian { sd } => {
                let n = Normal::new(0.0, *sd).expect("validated sd");
                Context::free((0..self.spec.dim).map(|_| n.sample(rng)).collect())
            }
        }
    }

    fn sample_reward(&self, rng: &mut dyn RngCore, a: usize, ctx: &Context) -> f64 {
        let f = self.mean(a, &ctx.x);
        match self.spec.noise {
            NoiseSpec::None => f,
            NoiseSpec::Bernoulli => {
                if rng.random::<f64>() < f {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseSpec::TruncatedGaussian { sd, truncate } => {
                let n = Normal::new(0.0, sd).expect("validated sd");
                loop {
                    let e: f64 = n.sample(rng);
                    if e.abs() <= truncate * sd {
                        break f + e;
                    }
                }
            }
            NoiseSpec::Gaussian { .. } => unreachable!("rejected at construction"),
        }
    }

    fn f_star(&self, a: usize, ctx: &Context) -> f64 {
        self.mean(a, &ctx.x)
    }

    fn e_star(&self, a: usize, ctx: &Context) -> f64 {
        self.second_moment(a, &ctx.x)
    }

    fn support(&self) -> Option<Vec<(Context, f64)>> {
        match &self.spec.contexts {
            ContextLaw::Finite { .. } => Some(self.probs.iter().enumerate().map(|(i, &p)| (self.point(i), p)).collect()),
            ContextLaw::Gaussian { .. } => None,
        }
    }
}

// ── Classification-to-bandit transform ─────────────────────────────────

/// Rows of a classification dataset as contexts; the reward of action `a`
/// on a row is `1[a = label]`.
#[derive(Debug, Clone)]
pub struct ClassificationEnv {
    xs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    k: usize,
    d: usize,
}

pub fn classification_to_bandit(ds: &ClassificationDataset) -> Result<ClassificationEnv> {
    if ds.is_empty() {
        return Err(OpeError::Empty("dataset"));
    }
    if ds.n_classes < 2 {
        return Err(OpeError::InvalidParameter {
            name: "dataset",
            reason: "need at least 2 classes".into(),
        });
    }
    Ok(ClassificationEnv {
        xs: ds.to_dense(),
        labels: ds.labels(),
        k: ds.n_classes,
        d: ds.n_features,
    })
}

impl ClassificationEnv {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn row(&self, i: usize) -> Context {
        Context {
            x: self.xs[i].clone(),
            key: Some(i),
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Draws `t` log rows and `n` evaluation rows uniformly without
    /// replacement; the two sets are disjoint.
    pub fn draw_rows(&self, rng: &mut dyn RngCore, t: usize, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if t + n > self.len() {
            return Err(OpeError::InsufficientRows {
                requested: t + n,
                available: self.len(),
            });
        }
        let mut idx = index::sample(rng, self.len(), t + n).into_vec();
        let eval = idx.split_off(t);
        Ok((idx, eval))
    }

    /// Restricts the environment (and its support) to the given rows.
    pub fn restrict(&self, rows: &[usize]) -> ClassificationEnv {
        ClassificationEnv {
            xs: rows.iter().map(|&i| self.xs[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
            d: self.d,
        }
    }
}

impl BanditEnvironment for ClassificationEnv {
    fn num_actions(&self) -> usize {
        self.k
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn sample_context(&self, rng: &mut dyn RngCore) -> Context {
        self.row(rng.random_range(0..self.len()))
    }

    fn sample_reward(&self, _rng: &mut dyn RngCore, a: usize, ctx: &Context) -> f64 {
        self.f_star(a, ctx)
    }

    fn f_star(&self, a: usize, ctx: &Context) -> f64 {
        let row = ctx.key.expect("classification contexts carry their row");
        if self.labels[row] == a {
            1.0
        } else {
            0.0
        }
    }

    fn e_star(&self, a: usize, ctx: &Context) -> f64 {
        self.f_star(a, ctx)
    }

    fn support(&self) -> Option<Vec<(Context, f64)>> {
        let p = 1.0 / self.len() as f64;
        Some((0..self.len()).map(|i| (self.row(i), p)).collect())
    }
}

// ── Ground truth ────────────────────────────────────────────────────────

/// `θ₀ = E_x[Σ_a π^e(a|x) f*(a, x)]`, exact over a finite support.
pub fn true_policy_value(env: &dyn BanditEnvironment, pi_e: &dyn Policy) -> Result<f64> {
    let support = env
        .support()
        .ok_or_else(|| OpeError::Unsupported("true policy value needs a finite context support".into()))?;
    let mut pe = vec![0.0; env.num_actions()];
    let mut theta = 0.0;
    for (ctx, p) in &support {
        pi_e.probs_into(&ctx.x, &mut pe);
        let v: f64 = pe.iter().enumerate().map(|(a, w)| w * env.f_star(a, ctx)).sum();
        theta += p * v;
    }
    Ok(theta)
}

/// Monte Carlo approximation of `θ₀` for continuous context laws.
pub fn approx_policy_value(env: &dyn BanditEnvironment, pi_e: &dyn Policy, draws: usize, rng: &mut dyn RngCore) -> f64 {
    let mut pe = vec![0.0; env.num_actions()];
    let mut total = 0.0;
    for _ in 0..draws {
        let ctx = env.sample_context(rng);
        pi_e.probs_into(&ctx.x, &mut pe);
        total += pe.iter().enumerate().map(|(a, w)| w * env.f_star(a, &ctx)).sum::<f64>();
    }
    total / draws as f64
}

// ── Log generation ──────────────────────────────────────────────────────

fn sample_action(rng: &mut dyn RngCore, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    // Rounding left u above the last partial sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Runs the behavior policy for `t` periods with contexts drawn from the
/// environment.
pub fn generate_log(
    env: &dyn BanditEnvironment,
    behavior: &mut dyn AdaptivePolicy,
    t: usize,
    rng: &mut dyn RngCore,
) -> Result<HistoricalLog> {
    if t == 0 {
        return Err(OpeError::InvalidParameter {
            name: "t",
            reason: "need at least one period".into(),
        });
    }
    run_periods(env, behavior, t, rng, |env, rng, _| env.sample_context(rng))
}

/// Runs the behavior policy over a fixed context sequence (for example
/// rows drawn without replacement).
pub fn generate_log_with_contexts(
    env: &dyn BanditEnvironment,
    behavior: &mut dyn AdaptivePolicy,
    contexts: &[Context],
    rng: &mut dyn RngCore,
) -> Result<HistoricalLog> {
    if contexts.is_empty() {
        return Err(OpeError::Empty("context sequence"));
    }
    run_periods(env, behavior, contexts.len(), rng, |_, _, i| contexts[i].clone())
}

fn run_periods(
    env: &dyn BanditEnvironment,
    behavior: &mut dyn AdaptivePolicy,
    t: usize,
    rng: &mut dyn RngCore,
    mut next_context: impl FnMut(&dyn BanditEnvironment, &mut dyn RngCore, usize) -> Context,
) -> Result<HistoricalLog> {
    let k = env.num_actions();
    if behavior.num_actions() != k {
        return Err(OpeError::DimensionMismatch {
            what: "behavior policy action count",
            expected: k,
            got: behavior.num_actions(),
        });
    }
    let mut samples = Vec::with_capacity(t);
    let mut snapshots = Vec::with_capacity(t);
    for period in 1..=t {
        let ctx = next_context(env, rng, period - 1);
        let snapshot = behavior.snapshot();
        let probs = behavior.current(&ctx.x);
        check_probabilities(&probs, k, true).map_err(|reason| OpeError::BehaviorPolicy { period, reason })?;
        let a = sample_action(rng, &probs);
        let y = env.sample_reward(rng, a, &ctx);
        behavior.update(&ctx.x, a, y);
        samples.push(LoggedSample::new(period, ctx.x, a, y, probs)?);
        snapshots.push(snapshot);
    }
    HistoricalLog::new(samples, k, env.dim())?.with_snapshots(snapshots)
}

// ── Evaluation covariates ───────────────────────────────────────────────

/// Covariates-only evaluation data `E_N`, independent of the log.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationCovariates {
    contexts: Vec<Vec<f64>>,
}

impl EvaluationCovariates {
    pub fn new(contexts: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = contexts.first() else {
            return Err(OpeError::Empty("evaluation covariates"));
        };
        let d = first.len();
        if let Some(c) = contexts.iter().find(|c| c.len() != d) {
            return Err(OpeError::DimensionMismatch {
                what: "evaluation covariate",
                expected: d,
                got: c.len(),
            });
        }
        Ok(Self { contexts })
    }

    pub fn sample(env: &dyn BanditEnvironment, n: usize, rng: &mut dyn RngCore) -> Result<Self> {
        Self::new((0..n).map(|_| env.sample_context(rng).x).collect())
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.contexts
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.contexts[0].len()
    }
}

/// Weighted, de-duplicated covariate pool. Identical covariates are merged
/// and carry their multiplicity as weight; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePool {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl CovariatePool {
    pub fn from_contexts(contexts: &[Vec<f64>]) -> Result<Self> {
        if contexts.is_empty() {
            return Err(OpeError::Empty("covariate pool"));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut points = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for x in contexts {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            match index.get(&key) {
                Some(&i) => counts[i] += 1.0,
                None => {
                    index.insert(key, points.len());
                    points.push(x.clone());
                    counts.push(1.0);
                }
            }
        }
        let n = contexts.len() as f64;
        Ok(Self {
            points,
            weights: counts.into_iter().map(|c| c / n).collect(),
        })
    }

    /// Pool given explicit weights, e.g. a full finite support with its
    /// probabilities.
    pub fn weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(OpeError::Empty("covariate pool"));
        }
        if points.len() != weights.len() {
            return Err(OpeError::DimensionMismatch {
                what: "pool weights",
                expected: points.len(),
                got: weights.len(),
            });
        }
        Ok(Self { points, weights })
    }

    pub fn from_support(support: &[(Context, f64)]) -> Result<Self> {
        Self::weighted(
            support.iter().map(|(c, _)| c.x.clone()).collect(),
            support.iter().map(|(_, p)| *p).collect(),
        )
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl From<&EvaluationCovariates> for CovariatePool {
    fn from(ev: &EvaluationCovariates) -> Self {
        CovariatePool::from_contexts(ev.contexts()).expect("evaluation covariates are nonempty")
    }
}

// ── JSON-lines log format ───────────────────────────────────────────────

/// Writes one `LoggedSample` per line: `{"t", "x", "a", "y", "propensities"}`.
pub fn write_log_jsonl<W: Write>(log: &HistoricalLog, mut w: W) -> Result<()> {
    for s in log.samples() {
        serde_json::to_writer(&mut w, s).map_err(|e| OpeError::Io(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a JSON-lines log. Imported logs carry no behavior snapshots.
pub fn read_log_jsonl<R: BufRead>(reader: R) -> Result<HistoricalLog> {
    let mut samples: Vec<LoggedSample> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: LoggedSample = serde_json::from_str(&line).map_err(|e| OpeError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        samples.push(s);
    }
    let first = samples.first().ok_or(OpeError::Empty("log file"))?;
    let (k, d) = (first.num_actions(), first.x.len());
    HistoricalLog::new(samples, k, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_libsvm_str;
    use crate::policies::{mixture_policy, random_walk_policy, uniform_policy, ConstantPolicy, StaticBehavior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn two_arm_finite(noise: NoiseSpec) -> SyntheticEnv {
        make_synthetic_env(SyntheticSpec {
            dim: 1,
            contexts: ContextLaw::Finite {
                points: vec![vec![0.0], vec![1.0]],
                probs: None,
            },
            arms: vec![
                ArmSpec {
                    intercept: 0.0,
                    slope: vec![0.0],
                },
                ArmSpec {
                    intercept: 1.0,
                    slope: vec![0.0],
                },
            ],
            noise,
            c2: 1.0,
        })
        .unwrap()
    }

    fn uniform_behavior(k: usize) -> StaticBehavior {
        StaticBehavior(Arc::new(uniform_policy(k).unwrap()))
    }

    #[test]
    fn zero_noise_reward_equals_mean() {
        let env = two_arm_finite(NoiseSpec::None);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let ctx = env.sample_context(&mut rng);
            for a in 0..2 {
                assert_eq!(env.sample_reward(&mut rng, a, &ctx), a as f64);
            }
        }
    }

    #[test]
    fn bernoulli_second_moment_equals_mean() {
        let env = two_arm_finite(NoiseSpec::Bernoulli);
        for (ctx, _) in env.support().unwrap() {
            for a in 0..2 {
                assert_eq!(env.e_star(a, &ctx), env.f_star(a, &ctx));
            }
        }
    }

    #[test]
    fn unbounded_noise_rejected() {
        let mut spec = two_arm_finite(NoiseSpec::None).spec().clone();
        spec.noise = NoiseSpec::Gaussian { sd: 1.0 };
        assert!(matches!(make_synthetic_env(spec), Err(OpeError::Unsupported(_))));
    }

    #[test]
    fn truncated_gaussian_variance_matches_monte_carlo() {
        let env = make_synthetic_env(SyntheticSpec {
            dim: 1,
            contexts: ContextLaw::Finite {
                points: vec![vec![0.0]],
                probs: None,
            },
            arms: vec![
                ArmSpec {
                    intercept: 0.2,
                    slope: vec![],
                },
                ArmSpec {
                    intercept: -0.1,
                    slope: vec![],
                },
            ],
            noise: NoiseSpec::TruncatedGaussian { sd: 0.3, truncate: 1.5 },
            c2: 1.0,
        })
        .unwrap();
        let ctx = env.support().unwrap()[0].0.clone();
        let analytic = env.v_star(0, &ctx);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| env.sample_reward(&mut rng, 0, &ctx)).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let sq: Vec<f64> = draws.iter().map(|y| (y - m).powi(2)).collect();
        let v = sq.iter().sum::<f64>() / (n - 1) as f64;
        let sd_sq = (sq.iter().map(|s| (s - v).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd_sq / (n as f64).sqrt();
        assert!((v - analytic).abs() < 3.0 * se, "mc {v} analytic {analytic} se {se}");
        assert!(draws.iter().all(|y| y.abs() <= 1.0));
    }

    #[test]
    fn uniform_single_period() {
        let env = two_arm_finite(NoiseSpec::Bernoulli);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let log = generate_log(&env, &mut uniform_behavior(2), 1, &mut rng).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.samples()[0].propensities, vec![0.5, 0.5]);
    }

    #[test]
    fn generation_is_deterministic_and_prefix_stable() {
        let env = two_arm_finite(NoiseSpec::Bernoulli);
        let run = |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let mut pol = mixture_policy(Box::new(random_walk_policy(2, 0.05, 7).unwrap()), 0.7).unwrap();
            generate_log(&env, &mut pol, t, &mut rng).unwrap()
        };
        let a = run(50);
        let b = run(50);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_log_jsonl(&a, &mut buf_a).unwrap();
        write_log_jsonl(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        let short = run(20);
        assert_eq!(short.samples(), &a.samples()[..20]);
    }

    #[test]
    fn random_walk_propensities_move() {
        let env = two_arm_finite(NoiseSpec::Bernoulli);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pol = mixture_policy(Box::new(random_walk_policy(2, 0.05, 1).unwrap()), 0.7).unwrap();
        let log = generate_log(&env, &mut pol, 3, &mut rng).unwrap();
        let p: Vec<_> = log.samples().iter().map(|s| s.propensities.clone()).collect();
        assert!(p[0] != p[1] && p[1] != p[2]);
    }

    #[test]
    fn stored_propensity_matches_draw_frequency() {
        // χ² goodness of fit of actions drawn at a fixed state.
        let env = two_arm_finite(NoiseSpec::None);
        let probs = vec![0.2, 0.5, 0.3];
        let env3 = make_synthetic_env(SyntheticSpec {
            arms: vec![env.spec().arms[0].clone(), env.spec().arms[1].clone(), env.spec().arms[0].clone()],
            ..env.spec().clone()
        })
        .unwrap();
        let mut beh = StaticBehavior(Arc::new(ConstantPolicy::new(probs.clone()).unwrap()));
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let log = generate_log(&env3, &mut beh, 20_000, &mut rng).unwrap();
        let mut counts = [0.0; 3];
        for s in log.samples() {
            assert_eq!(s.propensities, probs);
            counts[s.a] += 1.0;
        }
        let n = log.len() as f64;
        let chi2: f64 = counts.iter().zip(&probs).map(|(c, p)| (c - n * p).powi(2) / (n * p)).sum();
        // χ²₂ 99.9% quantile.
        assert!(chi2 < 13.82, "chi2 = {chi2}");
    }

    #[test]
    fn invalid_behavior_aborts_with_period() {
        struct Broken;
        impl AdaptivePolicy for Broken {
            fn num_actions(&self) -> usize {
                2
            }
            fn current_into(&self, _x: &[f64], out: &mut [f64]) {
                out.copy_from_slice(&[0.7, 0.7]);
            }
            fn update(&mut self, _x: &[f64], _a: usize, _y: f64) {}
            fn snapshot(&self) -> crate::types::SharedPolicy {
                Arc::new(uniform_policy(2).unwrap())
            }
        }
        let env = two_arm_finite(NoiseSpec::None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = generate_log(&env, &mut Broken, 5, &mut rng).unwrap_err();
        assert!(matches!(e, OpeError::BehaviorPolicy { period: 1, .. }));
    }

    fn toy_dataset() -> ClassificationDataset {
        parse_libsvm_str("1 1:1\n2 1:2\n3 1:3\n1 1:4\n3 1:5\n").unwrap()
    }

    #[test]
    fn classification_rewards() {
        let env = classification_to_bandit(&toy_dataset()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let row = env.row(2);
        assert_eq!(env.label(2), 2);
        assert_eq!(env.sample_reward(&mut rng, 2, &row), 1.0);
        assert_eq!(env.sample_reward(&mut rng, 0, &row), 0.0);
        for (ctx, _) in env.support().unwrap() {
            for a in 0..3 {
                assert_eq!(env.v_star(a, &ctx), 0.0);
            }
        }
    }

    #[test]
    fn one_hot_on_label_has_value_one() {
        let env = classification_to_bandit(&toy_dataset()).unwrap();
        let rows = env.rows().to_vec();
        let labels = env.labels().to_vec();
        let pi = crate::policies::FnPolicy::new(3, move |x: &[f64], out: &mut [f64]| {
            let i = rows.iter().position(|r| r.as_slice() == x).unwrap();
            out.fill(0.0);
            out[labels[i]] = 1.0;
        });
        assert_eq!(true_policy_value(&env, &pi).unwrap(), 1.0);
    }

    #[test]
    fn mixture_value_formula() {
        // θ₀ = w·acc + (1 − w)/K, checked against an exhaustive row sum.
        let env = classification_to_bandit(&toy_dataset()).unwrap();
        let predict = |x: &[f64]| if x[0] < 2.5 { 0 } else { 2 };
        let w = 0.7;
        let pi = crate::policies::FnPolicy::new(3, move |x: &[f64], out: &mut [f64]| {
            out.fill((1.0 - w) / 3.0);
            out[predict(x)] += w;
        });
        let acc = (0..env.len()).filter(|&i| predict(&env.rows()[i]) == env.label(i)).count() as f64 / env.len() as f64;
        let mut brute = 0.0;
        for i in 0..env.len() {
            let p = pi.probs(&env.rows()[i]);
            brute += p[env.label(i)] / env.len() as f64;
        }
        let theta = true_policy_value(&env, &pi).unwrap();
        assert!((theta - brute).abs() < 1e-15);
        assert!((theta - (w * acc + (1.0 - w) / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn uniform_value_two_arms() {
        let env = two_arm_finite(NoiseSpec::None);
        let theta = true_policy_value(&env, &uniform_policy(2).unwrap()).unwrap();
        assert_eq!(theta, 0.5);
    }

    #[test]
    fn continuous_env_has_no_exact_value() {
        let mut spec = two_arm_finite(NoiseSpec::None).spec().clone();
        spec.contexts = ContextLaw::Gaussian { sd: 1.0 };
        let env = make_synthetic_env(spec).unwrap();
        assert!(true_policy_value(&env, &uniform_policy(2).unwrap()).is_err());
    }

    #[test]
    fn draw_rows_disjoint_and_bounded() {
        let env = classification_to_bandit(&toy_dataset()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (log, eval) = env.draw_rows(&mut rng, 3, 2).unwrap();
        assert_eq!(log.len(), 3);
        assert!(eval.iter().all(|i| !log.contains(i)));
        assert!(matches!(env.draw_rows(&mut rng, 4, 2), Err(OpeError::InsufficientRows { .. })));
    }

    #[test]
    fn pool_merges_duplicates() {
        let pool = CovariatePool::from_contexts(&[vec![1.0], vec![2.0], vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(pool.points(), &[vec![1.0], vec![2.0]]);
        assert_eq!(pool.weights(), &[0.75, 0.25]);
        assert!(EvaluationCovariates::new(vec![]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let env = two_arm_finite(NoiseSpec::Bernoulli);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pol = mixture_policy(Box::new(random_walk_policy(2, 0.05, 3).unwrap()), 0.7).unwrap();
        let log = generate_log(&env, &mut pol, 25, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_log_jsonl(&log, &mut buf).unwrap();
        let back = read_log_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.samples(), log.samples());
        assert!(back.snapshots().is_none());
    }
}
