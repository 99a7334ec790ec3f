//! Evaluation metrics over activated predictions.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::clamp_probability;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Rmse,
    LogLoss,
    PairAccuracy,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::LogLoss => "logloss",
            Metric::PairAccuracy => "pairacc",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmse" => Ok(Metric::Rmse),
            "logloss" => Ok(Metric::LogLoss),
            "pairacc" => Ok(Metric::PairAccuracy),
            _ => Err(Error::Config(format!(
                "unknown metric `{s}` (expected rmse, logloss or pairacc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub metric: Metric,
    pub value: f64,
    pub count: usize,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} count {}", self.metric, self.value, self.count)
    }
}

fn check_lengths(predictions: &[f64], labels: &[f64]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::Eval(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Eval("no instances to evaluate".into()));
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(predictions, labels)?;
    let sse: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, r)| (r - p) * (r - p))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Mean negative log-likelihood with probabilities clamped away from 0 and 1.
pub fn logloss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(predictions, labels)?;
    let mut total = 0.0;
    for (&p, &r) in predictions.iter().zip(labels) {
        if r != 0.0 && r != 1.0 {
            return Err(Error::Eval(format!("logloss needs labels 0 or 1, got {r}")));
        }
        let p = clamp_probability(p);
        total -= if r == 1.0 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / predictions.len() as f64)
}

/// Fraction of pairwise instances whose prediction is strictly above 0.5; ties count as wrong.
pub fn pairacc(predictions: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Eval("no instances to evaluate".into()));
    }
    let right = predictions.iter().filter(|&&p| p > 0.5).count();
    Ok(right as f64 / predictions.len() as f64)
}

pub fn evaluate(metric: Metric, predictions: &[f64], labels: &[f64]) -> Result<EvalReport> {
    let value = match metric {
        Metric::Rmse => rmse(predictions, labels)?,
        Metric::LogLoss => logloss(predictions, labels)?,
        Metric::PairAccuracy => {
            check_lengths(predictions, labels)?;
            pairacc(predictions)?
        }
    };
    Ok(EvalReport {
        metric,
        value,
        count: predictions.len(),
    })
}

/// Reads one prediction per line.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::Eval(format!("line {}: bad prediction `{t}`", n + 1)))?;
        if !v.is_finite() {
            return Err(Error::Eval(format!(
                "line {}: non-finite prediction",
                n + 1
            )));
        }
        out.push(v);
    }
    Ok(out)
}
