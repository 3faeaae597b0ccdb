//! The estimator family built on the augmented inverse-probability score.
//!
//! Every estimator averages per-period terms whose conditional mean given
//! the past is the policy value, so averaging stays unbiased under adaptive
//! logging. The weighted variants divide each term by an estimate of its
//! conditional standard deviation, which makes the standardized sum
//! asymptotically normal even when the behavior policy never settles.

mod feasible;
mod score;
mod weights;

pub use feasible::{
    fa2daipw_estimate, fa3ipw_estimate, fa3ipw_split_estimate, feasible_weights, sample_split, sample_split_variance,
    split_point, tsfa3ipw_estimate, two_step_estimate, two_step_thetas, EvalSource, FeasibleConfig, SplitData,
    TwoStepTarget,
};
pub use score::{
    a2ipw_estimate, adaipw_estimate, augmented_terms, dm_estimate, running_means, score, PeriodTerms, ScoreInputs,
};
pub use weights::{
    a3ipw_estimate, confidence_interval, floor_variance, normal_quantile, oracle_sigma_star, stat_denominator,
    variance_estimate, weighted_mean, VarianceForm, VarianceWeights, WeightSource, DEFAULT_ALPHA, DEFAULT_EPSILON,
    V_FLOOR,
};
