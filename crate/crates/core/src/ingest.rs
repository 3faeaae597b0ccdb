//! LIBSVM-format classification datasets.
//!
//! Each nonempty line is `<label> <idx>:<val> <idx>:<val> ...` with 1-based,
//! strictly increasing feature indices. Missing indices are implicit zeros.
//! Labels are remapped to contiguous 0-based class ids in first-seen order.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// 0-based class id.
    pub label: usize,
    /// Sparse features, 0-based indices, strictly increasing.
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationDataset {
    pub rows: Vec<Row>,
    pub n_features: usize,
    pub n_classes: usize,
    /// `label_map[class_id]` is the label as written in the file.
    pub label_map: Vec<i64>,
}

impl ClassificationDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_features];
        for &(j, v) in &self.rows[i].features {
            x[j] = v;
        }
        x
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.dense_row(i)).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Original-label → class-id lookup.
    pub fn class_of(&self, label: i64) -> Option<usize> {
        self.label_map.iter().position(|&l| l == label)
    }

    /// Dataset restricted to the given rows, keeping the label map.
    pub fn subset(&self, idx: &[usize]) -> ClassificationDataset {
        ClassificationDataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            n_features: self.n_features,
            n_classes: self.n_classes,
            label_map: self.label_map.clone(),
        }
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> OpeError {
    OpeError::Parse {
        line,
        reason: reason.into(),
    }
}

/// Parses LIBSVM text with the feature count inferred from the data.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<ClassificationDataset> {
    parse_libsvm_with(reader, None)
}

pub fn parse_libsvm_str(text: &str) -> Result<ClassificationDataset> {
    parse_libsvm(text.as_bytes())
}

/// Parses LIBSVM text. `n_features`, when given, overrides the inferred
/// dimension and must cover every index in the file.
pub fn parse_libsvm_with<R: BufRead>(reader: R, n_features: Option<usize>) -> Result<ClassificationDataset> {
    let mut rows = Vec::new();
    let mut label_map: Vec<i64> = Vec::new();
    let mut label_ids: HashMap<i64, usize> = HashMap::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let mut tokens = line.split_ascii_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label: i64 = label_tok
            .strip_prefix('+')
            .unwrap_or(label_tok)
            .parse()
            .map_err(|_| parse_err(lineno, format!("label {label_tok:?} is not an integer")))?;
        let class = *label_ids.entry(label).or_insert_with(|| {
            label_map.push(label);
            label_map.len() - 1
        });

        let mut features = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("token {tok:?} is not index:value")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("feature index {idx:?} is not a positive integer")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature indices are 1-based"));
            }
            if idx <= prev {
                return Err(parse_err(lineno, format!("feature index {idx} does not increase (previous {prev})")));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno, format!("feature value {val:?} is not numeric")))?;
            if !val.is_finite() {
                return Err(parse_err(lineno, format!("feature value {val} is not finite")));
            }
            if let Some(n) = n_features {
                if idx > n {
                    return Err(parse_err(lineno, format!("feature index {idx} exceeds n_features {n}")));
                }
            }
            prev = idx;
            features.push((idx - 1, val));
        }
        max_index = max_index.max(prev);
        rows.push(Row { label: class, features });
    }

    Ok(ClassificationDataset {
        rows,
        n_features: n_features.unwrap_or(max_index),
        n_classes: label_map.len(),
        label_map,
    })
}

/// Shortest decimal that parses back to exactly `v`.
pub fn fmt_shortest(v: f64) -> String {
    let plain = format!("{v}");
    let exp = format!("{v:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

/// Writes the dataset back in LIBSVM format using the original labels.
pub fn write_libsvm<W: Write>(ds: &ClassificationDataset, mut w: W) -> Result<()> {
    for row in &ds.rows {
        write!(w, "{}", ds.label_map[row.label])?;
        for &(j, v) in &row.features {
            write!(w, " {}:{}", j + 1, fmt_shortest(v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn to_libsvm_string(ds: &ClassificationDataset) -> String {
    let mut buf = Vec::new();
    write_libsvm(ds, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("output is ASCII")
}

// ── Standardization ─────────────────────────────────────────────────────

/// Per-column affine map `x ↦ (x − mean) · scale`. `scale` is `1/sd`, or 0
/// for constant columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) * s;
        }
    }
}

/// Rescales every dense column to zero mean and unit (population) variance.
/// Constant columns map to zeros.
pub fn standardize_features(ds: &ClassificationDataset) -> Result<(ClassificationDataset, Standardization)> {
    if ds.is_empty() {
        return Err(OpeError::Empty("dataset"));
    }
    let n = ds.len() as f64;
    let d = ds.n_features;
    let mut mean = vec![0.0; d];
    for row in &ds.rows {
        for &(j, v) in &row.features {
            mean[j] += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for i in 0..ds.len() {
        for (j, v) in ds.dense_row(i).into_iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|&s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();
    let st = Standardization { mean, scale };
    let rows = (0..ds.len())
        .map(|i| {
            let mut x = ds.dense_row(i);
            st.apply(&mut x);
            Row {
                label: ds.rows[i].label,
                features: x.into_iter().enumerate().filter(|&(_, v)| v != 0.0).collect(),
            }
        })
        .collect();
    Ok((
        ClassificationDataset {
            rows,
            n_features: d,
            n_classes: ds.n_classes,
            label_map: ds.label_map.clone(),
        },
        st,
    ))
}
