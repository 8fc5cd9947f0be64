//! Link-classification objectives over `(z_P, z_N)` logit pairs, each
//! returning the scalar loss together with its exact gradient per logit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are kept inside `[P_MIN, 1 - P_MIN]` before taking logs.
pub const P_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    ClassBalance,
    Focal,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::CrossEntropy => "ce",
            LossKind::ClassBalance => "cb",
            LossKind::Focal => "fl",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" | "cross_entropy" => Ok(LossKind::CrossEntropy),
            "cb" | "class_balance" => Ok(LossKind::ClassBalance),
            "fl" | "focal" => Ok(LossKind::Focal),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Focal weight of positive links; negatives get `1 - alpha_pos`.
    #[serde(default = "default_alpha")]
    pub focal_alpha_pos: f64,
    #[serde(default = "default_gamma")]
    pub focal_gamma: f64,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_gamma() -> f64 {
    2.0
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            focal_alpha_pos: default_alpha(),
            focal_gamma: default_gamma(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_alpha_pos > 0.0 && self.focal_alpha_pos < 1.0) {
            return Err(Error::Config(format!("focal alpha must lie in (0, 1), got {}", self.focal_alpha_pos)));
        }
        if !(self.focal_gamma.is_finite() && self.focal_gamma >= 0.0) {
            return Err(Error::Config(format!("focal gamma must be >= 0, got {}", self.focal_gamma)));
        }
        Ok(())
    }

    pub fn evaluate(&self, logits: &[[f64; 2]], labels: &[bool]) -> Result<LossOutput> {
        match self.kind {
            LossKind::CrossEntropy => ce_loss(logits, labels),
            LossKind::ClassBalance => class_balance_loss(logits, labels),
            LossKind::Focal => focal_loss(logits, labels, self),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// d loss / d (z_P, z_N) for every sample.
    pub grad: Vec<[f64; 2]>,
    /// Class-balance loss saw only one class.
    pub degenerate: bool,
}

/// `log softmax(z)` at the true class (index 0 for a link).
fn log_prob_true(z: [f64; 2], label: bool) -> f64 {
    let (t, o) = if label { (z[0], z[1]) } else { (z[1], z[0]) };
    let m = t.max(o);
    t - (m + ((t - m).exp() + (o - m).exp()).ln())
}

/// Per-sample CE value and its logit gradient `softmax(z) - onehot`.
fn ce_term(z: [f64; 2], label: bool) -> (f64, [f64; 2]) {
    let lp = log_prob_true(z, label);
    let p_link = crate::model::link_probability(z);
    let y = if label { 1.0 } else { 0.0 };
    (-lp, [p_link - y, y - p_link])
}

fn check_batch(logits: &[[f64; 2]], labels: &[bool]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Config("loss needs at least one sample".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::SizeMismatch(format!("{} logits for {} labels", logits.len(), labels.len())));
    }
    Ok(())
}

/// Mean two-class softmax cross-entropy.
pub fn ce_loss(logits: &[[f64; 2]], labels: &[bool]) -> Result<LossOutput> {
    check_batch(logits, labels)?;
    let n = logits.len() as f64;
    let mut value = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let (v, g) = ce_term(z, y);
            value += v;
            [g[0] / n, g[1] / n]
        })
        .collect();
    Ok(LossOutput {
        value: value / n,
        grad,
        degenerate: false,
    })
}

/// Average of the mean CE over positives and the mean CE over negatives.
/// With a single class present this is the mean CE of that class and the
/// output is flagged degenerate.
pub fn class_balance_loss(logits: &[[f64; 2]], labels: &[bool]) -> Result<LossOutput> {
    check_batch(logits, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    let degenerate = n_pos == 0 || n_neg == 0;
    let (wp, wn) = if degenerate {
        let w = 1.0 / labels.len() as f64;
        (w, w)
    } else {
        (0.5 / n_pos as f64, 0.5 / n_neg as f64)
    };
    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let (v, g) = ce_term(z, y);
            let w = if y {
                pos_sum += v;
                wp
            } else {
                neg_sum += v;
                wn
            };
            [g[0] * w, g[1] * w]
        })
        .collect();
    Ok(LossOutput {
        value: pos_sum * wp + neg_sum * wn,
        grad,
        degenerate,
    })
}

/// Mean of `-α_c (1 - p_c)^γ log p_c`, `p_c` the softmax probability of the
/// true class.
pub fn focal_loss(logits: &[[f64; 2]], labels: &[bool], cfg: &LossConfig) -> Result<LossOutput> {
    check_batch(logits, labels)?;
    cfg.validate()?;
    let n = logits.len() as f64;
    let gamma = cfg.focal_gamma;
    let (lo, hi) = (P_MIN.ln(), (1.0 - P_MIN).ln());
    let mut value = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let alpha = if y { cfg.focal_alpha_pos } else { 1.0 - cfg.focal_alpha_pos };
            let lp = log_prob_true(z, y).clamp(lo, hi);
            let p = lp.exp();
            let q = 1.0 - p;
            value += -alpha * q.powf(gamma) * lp;
            // d/dz_true of the term; dp/dz_true = p(1-p), the other logit is
            // the mirror image.
            let dt = alpha * (gamma * q.powf(gamma) * p * lp - q.powf(gamma + 1.0)) / n;
            if y {
                [dt, -dt]
            } else {
                [-dt, dt]
            }
        })
        .collect();
    Ok(LossOutput {
        value: value / n,
        grad,
        degenerate: false,
    })
}
