//! Aggregated results and their CSV/JSON encodings.
//!
//! CSV columns, in order:
//! `estimator, env, policy, replications, mse, sd_sq_error, bias,
//! mean_ci_width, coverage, mean_runtime_ms`. Missing values (no interval)
//! are empty cells. Floats use the shortest representation that parses back
//! to the same value.

use std::io::Write;

use serde::{Deserialize, Serialize};

use ope_core::Method;

use crate::stats::{mean, std_dev};
use crate::HarnessError;

pub const CSV_COLUMNS: [&str; 10] = [
    "estimator",
    "env",
    "policy",
    "replications",
    "mse",
    "sd_sq_error",
    "bias",
    "mean_ci_width",
    "coverage",
    "mean_runtime_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: Method,
    pub env: String,
    pub policy: String,
    pub replications: usize,
    pub mse: f64,
    /// Standard deviation of the squared errors across replications.
    pub sd_sq_error: f64,
    pub bias: f64,
    pub mean_ci_width: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    #[serde(default)]
    pub failures: Vec<FailureRecord>,
}

/// One estimate from one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub theta_hat: f64,
    pub theta0: f64,
    pub ci: Option<(f64, f64)>,
    pub runtime_ms: f64,
}

/// Summarizes the observations of one estimator.
pub fn aggregate(estimator: Method, env: &str, policy: &str, obs: &[Observation]) -> ResultRow {
    let err: Vec<f64> = obs.iter().map(|o| o.theta_hat - o.theta0).collect();
    let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
    let cis: Vec<(f64, f64, f64)> = obs.iter().filter_map(|o| o.ci.map(|(l, h)| (l, h, o.theta0))).collect();
    let (width, coverage) = if cis.is_empty() {
        (None, None)
    } else {
        let widths: Vec<f64> = cis.iter().map(|(l, h, _)| h - l).collect();
        let hits = cis.iter().filter(|(l, h, t)| l <= t && t <= h).count();
        (Some(mean(&widths)), Some(hits as f64 / cis.len() as f64))
    };
    ResultRow {
        estimator,
        env: env.into(),
        policy: policy.into(),
        replications: obs.len(),
        mse: mean(&sq),
        sd_sq_error: std_dev(&sq),
        bias: mean(&err),
        mean_ci_width: width,
        coverage,
        mean_runtime_ms: mean(&obs.iter().map(|o| o.runtime_ms).collect::<Vec<_>>()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            out.write_record([
                r.estimator.name().to_string(),
                r.env.clone(),
                r.policy.clone(),
                r.replications.to_string(),
                r.mse.to_string(),
                r.sd_sq_error.to_string(),
                r.bias.to_string(),
                fmt_opt(r.mean_ci_width),
                fmt_opt(r.coverage),
                r.mean_runtime_ms.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Human-readable summary.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<10} {:<14} {:<8} {:>12} {:>12} {:>10} {:>10}\n",
            "estimator", "env", "policy", "MSE", "SD", "coverage", "CI width"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<10} {:<14} {:<8} {:>12.6} {:>12.6} {:>10} {:>10}\n",
                r.estimator.name(),
                r.env,
                r.policy,
                r.mse,
                r.sd_sq_error,
                r.coverage.map(|c| format!("{c:.3}")).unwrap_or_else(|| "-".into()),
                r.mean_ci_width.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into()),
            ));
        }
        for f in &self.failures {
            s.push_str(&format!("failed replication {} (seed {}): {}\n", f.replication, f.seed, f.error));
        }
        s
    }

    /// Same table with the timing column zeroed, for byte comparisons.
    pub fn without_timing(&self) -> ResultTable {
        let mut t = self.clone();
        for r in &mut t.rows {
            r.mean_runtime_ms = 0.0;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(theta_hat: f64, theta0: f64, ci: Option<(f64, f64)>) -> Observation {
        Observation {
            theta_hat,
            theta0,
            ci,
            runtime_ms: 1.0,
        }
    }

    #[test]
    fn constant_offset_has_unit_mse() {
        let o: Vec<_> = [0.1, 0.5, 0.9].iter().map(|&t| obs(t + 1.0, t, None)).collect();
        let r = aggregate(Method::Dm, "env", "RW", &o);
        assert!((r.mse - 1.0).abs() < 1e-15);
        assert!(r.sd_sq_error < 1e-15);
        assert_eq!(r.coverage, None);
    }

    #[test]
    fn coverage_and_width() {
        let o = vec![
            obs(0.5, 0.5, Some((0.4, 0.6))),
            obs(0.9, 0.5, Some((0.8, 1.0))),
        ];
        let r = aggregate(Method::Fa3Ipw, "env", "RW", &o);
        assert_eq!(r.coverage, Some(0.5));
        assert!((r.mean_ci_width.unwrap() - 0.2).abs() < 1e-12);
        assert!(r.mse >= 0.0);
    }

    #[test]
    fn empty_table_csv_is_header_only() {
        assert_eq!(ResultTable::default().to_csv_string(), format!("{}\n", CSV_COLUMNS.join(",")));
    }

    #[test]
    fn csv_uses_shortest_round_trip() {
        let t = ResultTable {
            rows: vec![aggregate(Method::A2Ipw, "e", "p", &[obs(0.1 + 0.2, 0.0, None)])],
            failures: vec![],
        };
        let csv = t.to_csv_string();
        let line = csv.lines().nth(1).unwrap();
        let mse: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(mse, (0.1f64 + 0.2).powi(2));
        assert!(line.contains(&((0.1f64 + 0.2).powi(2)).to_string()));
        assert!(line.split(',').nth(7).unwrap().is_empty());
    }

    #[test]
    fn json_round_trip() {
        let t = ResultTable {
            rows: vec![aggregate(Method::Fa3Ipw, "e", "p", &[obs(0.3, 0.2, Some((0.1, 0.5)))])],
            failures: vec![FailureRecord {
                replication: 3,
                seed: 7,
                error: "boom".into(),
            }],
        };
        assert_eq!(ResultTable::from_json(&t.to_json().unwrap()).unwrap(), t);
    }
}
