//! Agreement statistics: quadratic weighted kappa, pairwise alignment,
//! Cohen's and Fleiss' kappa, ICC(2,1), and summary helpers.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ScoreRange;
use crate::scoring::Dimension;

/// Paired human and machine scores on a declared range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingPairSeries {
    human: Vec<i64>,
    machine: Vec<i64>,
    range: ScoreRange,
}

impl RatingPairSeries {
    pub fn new(human: Vec<i64>, machine: Vec<i64>, range: ScoreRange) -> Result<Self> {
        if human.len() != machine.len() {
            return Err(Error::LengthMismatch {
                left: human.len(),
                right: machine.len(),
            });
        }
        if human.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 ratings, got {}",
                human.len()
            )));
        }
        if range.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty range [{}, {}]",
                range.lo, range.hi
            )));
        }
        if let Some(v) = human.iter().chain(&machine).find(|v| !range.contains(**v)) {
            return Err(Error::InvalidArgument(format!(
                "rating {v} outside [{}, {}]",
                range.lo, range.hi
            )));
        }
        Ok(RatingPairSeries { human, machine, range })
    }

    pub fn human(&self) -> &[i64] {
        &self.human
    }

    pub fn machine(&self) -> &[i64] {
        &self.machine
    }

    pub fn range(&self) -> ScoreRange {
        self.range
    }
}

/// Quadratic weighted kappa over the declared range.
///
/// The observed and expected weighted disagreements are accumulated as exact
/// integers from the two marginal histograms, so the only rounding is the
/// final division.
pub fn qwk(series: &RatingPairSeries) -> Result<f64> {
    let k = series.range.len();
    let lo = series.range.lo;
    let n = series.human.len() as u128;
    let mut hist_h = vec![0u128; k];
    let mut hist_m = vec![0u128; k];
    let mut observed: u128 = 0;
    for (&h, &m) in series.human.iter().zip(&series.machine) {
        hist_h[(h - lo) as usize] += 1;
        hist_m[(m - lo) as usize] += 1;
        let d = h.abs_diff(m) as u128;
        observed += d * d;
    }
    let mut expected: u128 = 0;
    for (i, &hi) in hist_h.iter().enumerate() {
        if hi == 0 {
            continue;
        }
        for (j, &mj) in hist_m.iter().enumerate() {
            let d = i.abs_diff(j) as u128;
            expected += d * d * hi * mj;
        }
    }
    if expected == 0 {
        return Err(Error::Undefined("quadratic weighted kappa with a single rated level"));
    }
    // Σw·E = expected / n, so κ = 1 - observed·n / expected.
    Ok(1.0 - (observed * n) as f64 / expected as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
}

impl Winner {
    pub fn flip(self) -> Winner {
        match self {
            Winner::A => Winner::B,
            Winner::B => Winner::A,
        }
    }
}

/// A gold preference and a predicted preference for one feedback pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseJudgment {
    pub item_id: String,
    pub gold_winner: Winner,
    pub predicted_winner: Winner,
    pub dimension: Dimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub n: usize,
    pub accuracy: f64,
    /// Binary F1 with "A preferred" as the positive class.
    pub f1: f64,
    /// Mean of the per-class F1 scores.
    pub macro_f1: f64,
}

fn class_f1(judgments: &[PairwiseJudgment], positive: Winner) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for j in judgments {
        match (j.predicted_winner == positive, j.gold_winner == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        // The class never occurs in gold or prediction: nothing was gotten wrong.
        1.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

pub fn pairwise_alignment(judgments: &[PairwiseJudgment]) -> Result<AlignmentReport> {
    if judgments.is_empty() {
        return Err(Error::Empty("judgment list"));
    }
    let correct = judgments.iter().filter(|j| j.gold_winner == j.predicted_winner).count();
    let f1 = class_f1(judgments, Winner::A);
    let f1_b = class_f1(judgments, Winner::B);
    Ok(AlignmentReport {
        n: judgments.len(),
        accuracy: correct as f64 / judgments.len() as f64,
        f1,
        macro_f1: (f1 + f1_b) / 2.0,
    })
}

/// Unweighted Cohen's kappa for two raters.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("label list"));
    }
    let n = a.len() as f64;
    let mut marg: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        marg.entry(x).or_default().0 += 1;
        marg.entry(y).or_default().1 += 1;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marg.values().map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n)).sum();
    if p_e >= 1.0 {
        return Err(Error::Undefined("Cohen's kappa with chance agreement 1"));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Fleiss' kappa from an items x categories count matrix with `raters` per item.
pub fn fleiss_kappa(counts: &[Vec<u64>], raters: u64) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Empty("count matrix"));
    }
    if raters < 2 {
        return Err(Error::InvalidArgument("Fleiss' kappa needs at least 2 raters".into()));
    }
    let k = counts[0].len();
    if k == 0 {
        return Err(Error::Empty("category list"));
    }
    let n_items = counts.len() as f64;
    let nf = raters as f64;
    let mut col = vec![0u64; k];
    let mut p_bar = 0.0;
    for (i, row) in counts.iter().enumerate() {
        if row.len() != k {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: k,
            });
        }
        let sum: u64 = row.iter().sum();
        if sum != raters {
            return Err(Error::InvalidArgument(format!(
                "row {i} sums to {sum}, expected {raters}"
            )));
        }
        let sq: u64 = row.iter().map(|c| c * c).sum();
        p_bar += (sq - raters) as f64 / (nf * (nf - 1.0));
        for (c, v) in col.iter_mut().zip(row) {
            *c += v;
        }
    }
    p_bar /= n_items;
    let total = n_items * nf;
    let p_e: f64 = col.iter().map(|&c| sq(c as f64 / total)).sum();
    if p_e >= 1.0 {
        return Err(Error::Undefined("Fleiss' kappa with a single category in use"));
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// ICC(2,1): two-way random effects, absolute agreement, single rater.
/// `matrix` is items x raters.
pub fn icc_2_1(matrix: &[Vec<f64>]) -> Result<f64> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::InvalidArgument("ICC needs at least 2 items".into()));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(Error::InvalidArgument("ICC needs at least 2 raters".into()));
    }
    if let Some(row) = matrix.iter().find(|r| r.len() != k) {
        return Err(Error::LengthMismatch {
            left: row.len(),
            right: k,
        });
    }
    if matrix.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("rating matrix"));
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = matrix.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k).map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let ss_rows = kf * row_means.iter().map(|m| sq(m - grand)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| sq(m - grand)).sum::<f64>();
    let ss_err: f64 = matrix
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            let (rm, cm) = (row_means[i], &col_means);
            r.iter().enumerate().map(move |(j, x)| sq(x - rm - cm[j] + grand))
        })
        .sum();
    let ms_rows = ss_rows / (nf - 1.0);
    let ms_cols = ss_cols / (kf - 1.0);
    let ms_err = ss_err / ((nf - 1.0) * (kf - 1.0));
    let denom = ms_rows + (kf - 1.0) * ms_err + kf * (ms_cols - ms_err) / nf;
    if denom.abs() < f64::EPSILON * (ms_rows.abs() + ms_cols.abs() + ms_err.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::Undefined("ICC with zero variance"));
    }
    Ok((ms_rows - ms_err) / denom)
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("sample"));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("standard deviation needs 2 values".into()));
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| sq(x - m)).sum();
    Ok(libm::sqrt(ss / (xs.len() - 1) as f64))
}

fn sq(x: f64) -> f64 {
    x * x
}
