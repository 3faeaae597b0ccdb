//! Behavior policies (random walk, LinUCB, uniform), uniform mixtures, and
//! the logistic-regression evaluation policy.
//!
//! Adaptive policies are single-owner mutable state. Each exposes an
//! immutable [`SharedPolicy`] snapshot of its current state so estimators
//! can query `π_t(·|x)` at covariates other than the logged one.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::types::{Policy, PolicyKind, SharedPolicy};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate().skip(1) {
        if s > v[best] {
            best = i;
        }
    }
    best
}

// ── Static policies ─────────────────────────────────────────────────────

/// A context-free policy with a fixed probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy {
    probs: Vec<f64>,
    kind: PolicyKind,
}

impl ConstantPolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        crate::types::check_probabilities(&probs, probs.len(), false).map_err(OpeError::InvalidProbabilities)?;
        Ok(Self {
            probs,
            kind: PolicyKind::Evaluation,
        })
    }

    fn snapshot(probs: Vec<f64>) -> Self {
        Self {
            probs,
            kind: PolicyKind::BehaviorSnapshot,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

impl Policy for ConstantPolicy {
    fn num_actions(&self) -> usize {
        self.probs.len()
    }
    fn probs_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.probs);
    }
    fn kind(&self) -> PolicyKind {
        self.kind
    }
    fn context_free(&self) -> bool {
        true
    }
}

pub fn uniform_policy(k: usize) -> Result<ConstantPolicy> {
    if k < 2 {
        return Err(OpeError::InvalidParameter {
            name: "k",
            reason: format!("need at least 2 actions, got {k}"),
        });
    }
    ConstantPolicy::new(vec![1.0 / k as f64; k])
}

/// Wraps a closure as a policy. Mostly useful for tests and oracles.
pub struct FnPolicy<F> {
    k: usize,
    f: F,
}

impl<F> FnPolicy<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(k: usize, f: F) -> Self {
        Self { k, f }
    }
}

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn num_actions(&self) -> usize {
        self.k
    }
    fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

// ── Adaptive policies ───────────────────────────────────────────────────

/// A behavior policy updated from past observations only.
pub trait AdaptivePolicy: Send {
    fn num_actions(&self) -> usize;

    /// `π_t(·|x, Ω_{t−1})` for the current state.
    fn current_into(&self, x: &[f64], out: &mut [f64]);

    fn current(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions()];
        self.current_into(x, &mut out);
        out
    }

    /// Consumes the observation of the period that just ended.
    fn update(&mut self, x: &[f64], a: usize, y: f64);

    /// Immutable copy of the current conditional probability function.
    fn snapshot(&self) -> SharedPolicy;
}

/// Default floor for random-walk probabilities.
pub const RW_FLOOR: f64 = 1e-3;
/// Default random-walk step standard deviation.
pub const RW_STEP_SD: f64 = 0.05;

/// Context-free random walk on the probability simplex.
///
/// Starts from uniform random draws normalized to sum to one. Each update
/// adds independent `N(0, step_sd²)` noise to every entry, clamps at the
/// floor δ and renormalizes the mass above the floor, so every entry stays
/// at least δ.
#[derive(Debug, Clone)]
pub struct RandomWalkPolicy {
    probs: Vec<f64>,
    step_sd: f64,
    floor: f64,
    rng: ChaCha8Rng,
}

impl RandomWalkPolicy {
    pub fn new(k: usize, step_sd: f64, floor: f64, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(OpeError::InvalidParameter {
                name: "k",
                reason: format!("need at least 2 actions, got {k}"),
            });
        }
        if !(step_sd >= 0.0 && step_sd.is_finite()) {
            return Err(OpeError::InvalidParameter {
                name: "step_sd",
                reason: format!("must be non-negative, got {step_sd}"),
            });
        }
        if !(floor > 0.0 && floor * k as f64 <= 1.0) {
            return Err(OpeError::InvalidParameter {
                name: "floor",
                reason: format!("must lie in (0, 1/k], got {floor}"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let mut p = Self {
            probs: raw,
            step_sd,
            floor,
            rng,
        };
        p.project();
        Ok(p)
    }

    fn project(&mut self) {
        let k = self.probs.len() as f64;
        let excess: Vec<f64> = self.probs.iter().map(|&v| (v.max(self.floor)) - self.floor).collect();
        let total: f64 = excess.iter().sum();
        let free = 1.0 - k * self.floor;
        for (p, e) in self.probs.iter_mut().zip(excess) {
            *p = if total > 0.0 {
                self.floor + free * e / total
            } else {
                1.0 / k
            };
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

pub fn random_walk_policy(k: usize, step_sd: f64, seed: u64) -> Result<RandomWalkPolicy> {
    RandomWalkPolicy::new(k, step_sd, RW_FLOOR, seed)
}

impl AdaptivePolicy for RandomWalkPolicy {
    fn num_actions(&self) -> usize {
        self.probs.len()
    }

    fn current_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.probs);
    }

    fn update(&mut self, _x: &[f64], _a: usize, _y: f64) {
        if self.step_sd == 0.0 {
            return;
        }
        let noise = Normal::new(0.0, self.step_sd).expect("step_sd validated");
        for p in self.probs.iter_mut() {
            *p += noise.sample(&mut self.rng);
        }
        self.project();
    }

    fn snapshot(&self) -> SharedPolicy {
        Arc::new(ConstantPolicy::snapshot(self.probs.clone()))
    }
}

/// Ridge statistics of one LinUCB arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    /// `A⁻¹`, row-major `d×d`, where `A = λI + Σ x xᵀ`.
    a_inv: Vec<f64>,
    b: Vec<f64>,
    theta: Vec<f64>,
}

impl ArmModel {
    fn new(d: usize, lambda: f64) -> Self {
        let mut a_inv = vec![0.0; d * d];
        for i in 0..d {
            a_inv[i * d + i] = 1.0 / lambda;
        }
        Self {
            a_inv,
            b: vec![0.0; d],
            theta: vec![0.0; d],
        }
    }

    fn d(&self) -> usize {
        self.b.len()
    }

    fn a_inv_times(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d();
        (0..d)
            .map(|i| self.a_inv[i * d..(i + 1) * d].iter().zip(x).map(|(m, v)| m * v).sum())
            .collect()
    }

    /// `θ̂·x + α √(xᵀ A⁻¹ x)`.
    pub fn score(&self, x: &[f64], alpha: f64) -> f64 {
        let mean: f64 = self.theta.iter().zip(x).map(|(t, v)| t * v).sum();
        if alpha == 0.0 {
            return mean;
        }
        let ax = self.a_inv_times(x);
        let width: f64 = ax.iter().zip(x).map(|(u, v)| u * v).sum();
        mean + alpha * width.max(0.0).sqrt()
    }

    /// Sherman–Morrison rank-one update with `(x, y)`.
    fn updated(&self, x: &[f64], y: f64) -> Self {
        let d = self.d();
        let u = self.a_inv_times(x);
        let denom = 1.0 + u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut a_inv = self.a_inv.clone();
        for i in 0..d {
            for j in 0..d {
                a_inv[i * d + j] -= u[i] * u[j] / denom;
            }
        }
        let b: Vec<f64> = self.b.iter().zip(x).map(|(b, v)| b + y * v).collect();
        let theta = (0..d)
            .map(|i| a_inv[i * d..(i + 1) * d].iter().zip(&b).map(|(m, v)| m * v).sum())
            .collect();
        Self { a_inv, b, theta }
    }
}

fn linucb_probs(arms: &[Arc<ArmModel>], alpha: f64, x: &[f64], out: &mut [f64]) {
    let scores: Vec<f64> = arms.iter().map(|m| m.score(x, alpha)).collect();
    out.fill(0.0);
    out[argmax(&scores)] = 1.0;
}

/// LinUCB with per-arm ridge regression. Returns a one-hot vector on the
/// arm with the highest upper confidence score.
#[derive(Debug, Clone)]
pub struct LinUcbPolicy {
    arms: Vec<Arc<ArmModel>>,
    alpha: f64,
}

impl LinUcbPolicy {
    pub fn new(k: usize, d: usize, lambda: f64, alpha: f64) -> Result<Self> {
        if k < 2 {
            return Err(OpeError::InvalidParameter {
                name: "k",
                reason: format!("need at least 2 actions, got {k}"),
            });
        }
        if !(lambda > 0.0) {
            return Err(OpeError::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive, got {lambda}"),
            });
        }
        if !(alpha >= 0.0) {
            return Err(OpeError::InvalidParameter {
                name: "alpha",
                reason: format!("must be non-negative, got {alpha}"),
            });
        }
        let arm = Arc::new(ArmModel::new(d, lambda));
        Ok(Self {
            arms: vec![arm; k],
            alpha,
        })
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.arms.iter().map(|m| m.score(x, self.alpha)).collect()
    }
}

pub fn linucb_policy(k: usize, d: usize, lambda: f64, alpha: f64) -> Result<LinUcbPolicy> {
    LinUcbPolicy::new(k, d, lambda, alpha)
}

impl AdaptivePolicy for LinUcbPolicy {
    fn num_actions(&self) -> usize {
        self.arms.len()
    }

    fn current_into(&self, x: &[f64], out: &mut [f64]) {
        linucb_probs(&self.arms, self.alpha, x, out)
    }

    fn update(&mut self, x: &[f64], a: usize, y: f64) {
        // Only the played arm changes, so snapshots share the other arms.
        self.arms[a] = Arc::new(self.arms[a].updated(x, y));
    }

    fn snapshot(&self) -> SharedPolicy {
        Arc::new(LinUcbSnapshot {
            arms: self.arms.clone(),
            alpha: self.alpha,
        })
    }
}

struct LinUcbSnapshot {
    arms: Vec<Arc<ArmModel>>,
    alpha: f64,
}

impl Policy for LinUcbSnapshot {
    fn num_actions(&self) -> usize {
        self.arms.len()
    }
    fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        linucb_probs(&self.arms, self.alpha, x, out)
    }
    fn kind(&self) -> PolicyKind {
        PolicyKind::BehaviorSnapshot
    }
    fn input_dim(&self) -> Option<usize> {
        self.arms.first().map(|m| m.d())
    }
}

/// `w·π^a + (1 − w)·uniform`, forwarding updates to the inner policy.
pub struct MixturePolicy {
    inner: Box<dyn AdaptivePolicy>,
    w: f64,
}

impl MixturePolicy {
    pub fn new(inner: Box<dyn AdaptivePolicy>, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(OpeError::InvalidParameter {
                name: "w",
                reason: format!("mixture weight must lie in [0, 1], got {w}"),
            });
        }
        Ok(Self { inner, w })
    }
}

pub fn mixture_policy(inner: Box<dyn AdaptivePolicy>, w: f64) -> Result<MixturePolicy> {
    MixturePolicy::new(inner, w)
}

fn mix_into(w: f64, out: &mut [f64]) {
    let u = (1.0 - w) / out.len() as f64;
    for p in out.iter_mut() {
        *p = w * *p + u;
    }
}

impl AdaptivePolicy for MixturePolicy {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn current_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.current_into(x, out);
        mix_into(self.w, out);
    }

    fn update(&mut self, x: &[f64], a: usize, y: f64) {
        self.inner.update(x, a, y)
    }

    fn snapshot(&self) -> SharedPolicy {
        Arc::new(MixtureSnapshot {
            inner: self.inner.snapshot(),
            w: self.w,
        })
    }
}

/// Uniform mixture of an arbitrary policy.
pub struct MixtureSnapshot {
    inner: SharedPolicy,
    w: f64,
}

impl MixtureSnapshot {
    pub fn new(inner: SharedPolicy, w: f64) -> Self {
        Self { inner, w }
    }
}

impl Policy for MixtureSnapshot {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }
    fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.probs_into(x, out);
        mix_into(self.w, out);
    }
    fn kind(&self) -> PolicyKind {
        PolicyKind::BehaviorSnapshot
    }
    fn context_free(&self) -> bool {
        self.inner.context_free()
    }
    fn input_dim(&self) -> Option<usize> {
        self.inner.input_dim()
    }
}

/// A static policy driven through the adaptive interface.
pub struct StaticBehavior(pub SharedPolicy);

impl AdaptivePolicy for StaticBehavior {
    fn num_actions(&self) -> usize {
        self.0.num_actions()
    }
    fn current_into(&self, x: &[f64], out: &mut [f64]) {
        self.0.probs_into(x, out)
    }
    fn update(&mut self, _x: &[f64], _a: usize, _y: f64) {}
    fn snapshot(&self) -> SharedPolicy {
        self.0.clone()
    }
}

/// Cycles through a fixed list of policies regardless of feedback.
pub struct ScheduledBehavior {
    schedule: Vec<SharedPolicy>,
    pos: usize,
}

impl ScheduledBehavior {
    pub fn new(schedule: Vec<SharedPolicy>) -> Result<Self> {
        if schedule.is_empty() {
            return Err(OpeError::Empty("behavior schedule"));
        }
        Ok(Self { schedule, pos: 0 })
    }
}

impl AdaptivePolicy for ScheduledBehavior {
    fn num_actions(&self) -> usize {
        self.schedule[0].num_actions()
    }
    fn current_into(&self, x: &[f64], out: &mut [f64]) {
        self.schedule[self.pos].probs_into(x, out)
    }
    fn update(&mut self, _x: &[f64], _a: usize, _y: f64) {
        self.pos = (self.pos + 1) % self.schedule.len();
    }
    fn snapshot(&self) -> SharedPolicy {
        self.schedule[self.pos].clone()
    }
}

// ── Evaluation policy ───────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub iterations: usize,
    pub step_size: f64,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step_size: 0.1,
            l2: 1e-4,
        }
    }
}

/// Multinomial logistic regression, `K × (d + 1)` weights with the bias
/// in the last column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    k: usize,
    d: usize,
    weights: Vec<f64>,
}

impl LogisticModel {
    fn logits(&self, x: &[f64], out: &mut [f64]) {
        let stride = self.d + 1;
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * stride..(c + 1) * stride];
            *o = w[self.d] + w[..self.d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.k];
        self.logits(x, &mut z);
        argmax(&z)
    }

    /// Full-batch gradient descent on the L2-penalized cross-entropy.
    pub fn fit(xs: &[Vec<f64>], labels: &[usize], k: usize, cfg: &LogisticConfig) -> Result<Self> {
        if xs.is_empty() {
            return Err(OpeError::Empty("training data"));
        }
        if xs.len() != labels.len() {
            return Err(OpeError::DimensionMismatch {
                what: "labels",
                expected: xs.len(),
                got: labels.len(),
            });
        }
        let d = xs[0].len();
        let mut seen = vec![false; k];
        for &l in labels {
            if l >= k {
                return Err(OpeError::InvalidParameter {
                    name: "labels",
                    reason: format!("label {l} out of range for {k} classes"),
                });
            }
            seen[l] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(OpeError::MissingClass(c));
        }
        let stride = d + 1;
        let n = xs.len() as f64;
        let mut model = Self {
            k,
            d,
            weights: vec![0.0; k * stride],
        };
        let mut grad = vec![0.0; k * stride];
        let mut z = vec![0.0; k];
        for _ in 0..cfg.iterations {
            grad.fill(0.0);
            for (x, &y) in xs.iter().zip(labels) {
                model.logits(x, &mut z);
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for v in z.iter_mut() {
                    *v = (*v - m).exp();
                    s += *v;
                }
                for (c, p) in z.iter().enumerate() {
                    let r = p / s - if c == y { 1.0 } else { 0.0 };
                    let g = &mut grad[c * stride..(c + 1) * stride];
                    for (gj, xj) in g[..d].iter_mut().zip(x) {
                        *gj += r * xj;
                    }
                    g[d] += r;
                }
            }
            for (i, (w, g)) in model.weights.iter_mut().zip(&grad).enumerate() {
                let penalty = if i % stride == d { 0.0 } else { cfg.l2 * *w };
                *w -= cfg.step_size * (g / n + penalty);
            }
        }
        Ok(model)
    }
}

/// `w·π^d + (1 − w)·uniform` where `π^d` is one-hot on the classifier's
/// prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierPolicy {
    pub model: LogisticModel,
    pub w: f64,
}

impl Policy for ClassifierPolicy {
    fn num_actions(&self) -> usize {
        self.model.k
    }
    fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.model.predict(x)] = 1.0;
        mix_into(self.w, out);
    }
    fn input_dim(&self) -> Option<usize> {
        Some(self.model.d)
    }
}

/// Fits the logistic-regression classifier and wraps it as an evaluation
/// policy mixed with uniform at weight `w`.
pub fn fit_evaluation_policy(
    xs: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    w: f64,
    cfg: &LogisticConfig,
) -> Result<ClassifierPolicy> {
    if !(0.0..=1.0).contains(&w) {
        return Err(OpeError::InvalidParameter {
            name: "w",
            reason: format!("mixture weight must lie in [0, 1], got {w}"),
        });
    }
    Ok(ClassifierPolicy {
        model: LogisticModel::fit(xs, labels, k, cfg)?,
        w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::check_probabilities;

    #[test]
    fn uniform_vectors() {
        assert_eq!(uniform_policy(2).unwrap().probs(&[]), vec![0.5, 0.5]);
        assert_eq!(uniform_policy(4).unwrap().probs(&[1.0]), vec![0.25; 4]);
        assert!(uniform_policy(1).is_err());
    }

    #[test]
    fn rw_initial_state_is_valid() {
        for seed in 0..20 {
            let p = random_walk_policy(5, RW_STEP_SD, seed).unwrap();
            check_probabilities(p.probs(), 5, true).unwrap();
        }
    }

    #[test]
    fn rw_zero_noise_is_constant() {
        let mut p = random_walk_policy(3, 0.0, 7).unwrap();
        let start = p.current(&[]);
        for _ in 0..100 {
            p.update(&[], 0, 1.0);
        }
        assert_eq!(p.current(&[]), start);
    }

    #[test]
    fn rw_long_run_respects_floor() {
        let mut p = RandomWalkPolicy::new(4, 0.2, RW_FLOOR, 3).unwrap();
        for _ in 0..10_000 {
            p.update(&[], 0, 0.0);
            assert!(p.probs().iter().all(|&v| v >= RW_FLOOR - 1e-15));
            check_probabilities(p.probs(), 4, true).unwrap();
        }
    }

    #[test]
    fn rw_ignores_context() {
        let p = random_walk_policy(3, RW_STEP_SD, 1).unwrap();
        assert_eq!(p.current(&[1.0, 2.0]), p.current(&[-5.0, 0.0]));
        assert!(p.snapshot().context_free());
    }

    #[test]
    fn linucb_cold_start_picks_arm_zero() {
        let p = linucb_policy(3, 2, 1.0, 0.0).unwrap();
        assert_eq!(p.current(&[0.3, -1.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn linucb_learns_rewarded_arm() {
        let mut p = linucb_policy(3, 2, 1.0, 0.0).unwrap();
        let x = [1.0, 0.5];
        for t in 0..300 {
            let a = t % 3;
            p.update(&x, a, if a == 2 { 1.0 } else { 0.0 });
        }
        assert_eq!(p.current(&x), vec![0.0, 0.0, 1.0]);
        check_probabilities(&p.snapshot().probs(&x), 3, false).unwrap();
    }

    #[test]
    fn linucb_sherman_morrison_matches_direct_inverse() {
        let mut arm = ArmModel::new(2, 2.0);
        let xs = [[1.0, 0.0], [0.5, 2.0], [-1.0, 1.0]];
        for x in &xs {
            arm = arm.updated(x, 1.0);
        }
        // A = 2I + Σ x xᵀ
        let mut a = [2.0, 0.0, 0.0, 2.0];
        for x in &xs {
            a[0] += x[0] * x[0];
            a[1] += x[0] * x[1];
            a[2] += x[1] * x[0];
            a[3] += x[1] * x[1];
        }
        let det = a[0] * a[3] - a[1] * a[2];
        let inv = [a[3] / det, -a[1] / det, -a[2] / det, a[0] / det];
        for (u, v) in arm.a_inv.iter().zip(inv) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn linucb_argmax_invariant_to_positive_rescaling() {
        let mut p = linucb_policy(4, 3, 1.0, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
            let a = rng.random_range(0..4);
            p.update(&x, a, rng.random());
        }
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let s = p.scores(&x);
            let c = rng.random_range(0.01..100.0);
            let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
            assert_eq!(argmax(&s), argmax(&scaled));
        }
    }

    #[test]
    fn mixture_arithmetic() {
        let one_hot: SharedPolicy = Arc::new(ConstantPolicy::new(vec![1.0, 0.0, 0.0]).unwrap());
        let m = mixture_policy(Box::new(StaticBehavior(one_hot.clone())), 0.7).unwrap();
        let p = m.current(&[]);
        for (a, b) in p.iter().zip([0.8, 0.1, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
        let m0 = mixture_policy(Box::new(StaticBehavior(one_hot)), 0.0).unwrap();
        assert_eq!(m0.current(&[]), vec![1.0 / 3.0; 3]);
        let u: SharedPolicy = Arc::new(uniform_policy(3).unwrap());
        let m1 = mixture_policy(Box::new(StaticBehavior(u)), 1.0).unwrap();
        assert_eq!(m1.current(&[]), vec![1.0 / 3.0; 3]);
        assert!(mixture_policy(Box::new(random_walk_policy(2, 0.1, 0).unwrap()), 1.5).is_err());
    }

    #[test]
    fn mixture_floor_bounds_ratio() {
        let w = 0.7;
        let k = 4;
        let mut m = mixture_policy(Box::new(RandomWalkPolicy::new(k, 0.3, RW_FLOOR, 5).unwrap()), w).unwrap();
        for _ in 0..1000 {
            m.update(&[], 0, 0.0);
            let p = m.current(&[]);
            assert!(p.iter().all(|&v| v >= (1.0 - w) / k as f64 - 1e-15));
            let max_ratio = p.iter().map(|v| 1.0 / v).fold(0.0, f64::max);
            assert!(max_ratio <= k as f64 / (1.0 - w) + 1e-9);
        }
    }

    #[test]
    fn policies_output_simplex_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rw = mixture_policy(Box::new(random_walk_policy(5, 0.2, 1).unwrap()), 0.7).unwrap();
        let mut ucb = mixture_policy(Box::new(linucb_policy(5, 2, 1.0, 1.0).unwrap()), 0.7).unwrap();
        for _ in 0..10_000 {
            let x = [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>()];
            for pol in [&mut rw, &mut ucb] {
                let p = pol.current(&x);
                check_probabilities(&p, 5, true).unwrap();
                let a = rng.random_range(0..5);
                pol.update(&x, a, rng.random::<f64>());
            }
        }
    }

    #[test]
    fn snapshots_are_frozen() {
        let mut p = linucb_policy(2, 1, 1.0, 0.0).unwrap();
        let before = p.snapshot();
        p.update(&[1.0], 1, 1.0);
        assert_eq!(before.probs(&[1.0]), vec![1.0, 0.0]);
        assert_eq!(p.snapshot().probs(&[1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn logistic_separable_data() {
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                vec![s * (1.0 + (i as f64) * 0.05), 0.3 * (i as f64).sin()]
            })
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let pol = fit_evaluation_policy(&xs, &labels, 2, 1.0, &LogisticConfig::default()).unwrap();
        let acc = xs.iter().zip(&labels).filter(|(x, &l)| pol.model.predict(x) == l).count();
        assert_eq!(acc, 40);
        assert_eq!(pol.probs(&xs[0]), vec![1.0, 0.0]);
    }

    #[test]
    fn classifier_policy_mixture_entries() {
        let xs = vec![vec![-1.0], vec![0.0], vec![1.0], vec![-1.2], vec![0.1], vec![1.3]];
        let labels = vec![0, 1, 2, 0, 1, 2];
        let pol = fit_evaluation_policy(&xs, &labels, 3, 0.7, &LogisticConfig::default()).unwrap();
        let mut p = pol.probs(&[5.0]);
        p.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in p.iter().zip([0.8, 0.1, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_class_is_named() {
        let xs = vec![vec![0.0], vec![1.0]];
        let e = fit_evaluation_policy(&xs, &[0, 2], 3, 0.7, &LogisticConfig::default()).unwrap_err();
        assert_eq!(e, OpeError::MissingClass(1));
    }
}
