//! Reference training objectives: the margin ranking loss used for the
//! specificity and helpfulness reward models, and the NLI negative
//! log-likelihood used for validity.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datasets::NliLabel;
use crate::error::{Error, Result};

/// Default ranking margin.
pub const DEFAULT_MARGIN: f64 = 0.5;

/// `ln(1 + e^x)` without overflow for large `x` or loss of precision for small `x`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

/// `ln σ(x)`, computed as `-softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Logistic function, evaluated on the side that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Chosen and rejected reward scores of a batch of preference pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingBatch {
    r_plus: Vec<f64>,
    r_minus: Vec<f64>,
    margin: f64,
}

impl RankingBatch {
    pub fn new(r_plus: Vec<f64>, r_minus: Vec<f64>, margin: f64) -> Result<Self> {
        if r_plus.len() != r_minus.len() {
            return Err(Error::LengthMismatch {
                left: r_plus.len(),
                right: r_minus.len(),
            });
        }
        if r_plus.is_empty() {
            return Err(Error::Empty("ranking batch"));
        }
        if r_plus.iter().chain(&r_minus).any(|x| x.is_nan()) {
            return Err(Error::NonFinite("ranking scores"));
        }
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(Error::InvalidArgument("margin must be finite and >= 0".into()));
        }
        Ok(RankingBatch {
            r_plus,
            r_minus,
            margin,
        })
    }

    pub fn with_default_margin(r_plus: Vec<f64>, r_minus: Vec<f64>) -> Result<Self> {
        Self::new(r_plus, r_minus, DEFAULT_MARGIN)
    }

    pub fn len(&self) -> usize {
        self.r_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_plus.is_empty()
    }

    pub fn r_plus(&self) -> &[f64] {
        &self.r_plus
    }

    pub fn r_minus(&self) -> &[f64] {
        &self.r_minus
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    fn differences(&self) -> impl Iterator<Item = f64> + '_ {
        self.r_plus
            .iter()
            .zip(&self.r_minus)
            .map(move |(p, m)| p - m - self.margin)
    }
}

/// `-(1/N) Σ ln σ(r⁺ − r⁻ − m)`.
pub fn ranking_loss(batch: &RankingBatch) -> f64 {
    let n = batch.len() as f64;
    -batch.differences().map(log_sigmoid).sum::<f64>() / n
}

/// Gradients of [`ranking_loss`] with respect to each chosen and rejected score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingGrad {
    pub d_plus: Vec<f64>,
    pub d_minus: Vec<f64>,
}

pub fn ranking_loss_grad(batch: &RankingBatch) -> RankingGrad {
    let n = batch.len() as f64;
    let d_plus: Vec<f64> = batch.differences().map(|d| -sigmoid(-d) / n).collect();
    let d_minus = d_plus.iter().map(|g| -g).collect();
    RankingGrad { d_plus, d_minus }
}

/// Model probabilities assigned to the true label of each NLI example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliBatch {
    p_true: Vec<f64>,
    labels: Vec<NliLabel>,
}

impl NliBatch {
    pub fn new(p_true: Vec<f64>, labels: Vec<NliLabel>) -> Result<Self> {
        if p_true.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: p_true.len(),
                right: labels.len(),
            });
        }
        if p_true.is_empty() {
            return Err(Error::Empty("nli batch"));
        }
        if let Some(p) = p_true.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidArgument(alloc::format!("probability {p} outside (0, 1]")));
        }
        Ok(NliBatch { p_true, labels })
    }

    pub fn p_true(&self) -> &[f64] {
        &self.p_true
    }

    pub fn labels(&self) -> &[NliLabel] {
        &self.labels
    }
}

/// `-(1/N) Σ ln p(yᵢ | premiseᵢ, hypothesisᵢ)`.
pub fn nli_nll(batch: &NliBatch) -> f64 {
    let n = batch.p_true.len() as f64;
    -batch.p_true.iter().map(|p| libm::log(*p)).sum::<f64>() / n
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::LN_2;

    #[test]
    fn loss_at_margin_is_ln2() {
        let b = RankingBatch::new(vec![1.5, -2.0, 10.0], vec![1.0, -2.5, 9.5], 0.5).unwrap();
        assert!((ranking_loss(&b) - LN_2).abs() < 1e-12);
        let g = ranking_loss_grad(&b);
        for v in &g.d_plus {
            assert!((v + 1.0 / 6.0).abs() < 1e-15);
        }
        let zero_margin = RankingBatch::new(vec![3.0], vec![3.0], 0.0).unwrap();
        assert!((ranking_loss(&zero_margin) - LN_2).abs() < 1e-12);
    }

    #[test]
    fn oracle_value() {
        // mpmath, 50 digits
        let b = RankingBatch::with_default_margin(vec![1.0, 0.2], vec![0.0, 0.5]).unwrap();
        assert!((ranking_loss(&b) - 0.82258882506394220344).abs() < 1e-15);
    }

    #[test]
    fn saturation() {
        let b = RankingBatch::new(vec![1e6], vec![0.0], 0.5).unwrap();
        assert_eq!(ranking_loss(&b), 0.0);
        assert_eq!(ranking_loss_grad(&b).d_plus[0], -0.0);
        let bad = RankingBatch::new(vec![-1e6], vec![0.0], 0.5).unwrap();
        assert!((ranking_loss(&bad) - (1e6 + 0.5)).abs() < 1e-6);
        assert!((ranking_loss_grad(&bad).d_minus[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn batch_validation() {
        assert!(RankingBatch::new(vec![], vec![], 0.5).is_err());
        assert!(RankingBatch::new(vec![1.0], vec![], 0.5).is_err());
        assert!(RankingBatch::new(vec![f64::NAN], vec![0.0], 0.5).is_err());
        assert!(RankingBatch::new(vec![1.0], vec![0.0], -0.1).is_err());
        assert!(NliBatch::new(vec![0.0], vec![NliLabel::Entailment]).is_err());
        assert!(NliBatch::new(vec![1.1], vec![NliLabel::Entailment]).is_err());
        assert!(NliBatch::new(vec![0.5, 0.5], vec![NliLabel::Entailment]).is_err());
    }

    #[test]
    fn nli_values() {
        let ones = NliBatch::new(vec![1.0; 4], vec![NliLabel::Entailment; 4]).unwrap();
        assert_eq!(nli_nll(&ones), 0.0);
        let halves = NliBatch::new(vec![0.5; 3], vec![NliLabel::Contradiction; 3]).unwrap();
        assert!((nli_nll(&halves) - LN_2).abs() < 1e-15);
        let b = NliBatch::new(vec![0.9, 0.25], vec![NliLabel::Entailment, NliLabel::Contradiction]).unwrap();
        // mpmath, 50 digits
        assert!((nli_nll(&b) - 0.74582743838885846003).abs() < 1e-15);
    }

    #[test]
    fn softplus_extremes() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - LN_2).abs() < 1e-16);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
