//! Evaluation metrics and the failed-run / easy-hard case bookkeeping.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub fn accuracy(preds: &[usize], targets: &[usize]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let correct = preds.iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Matthews correlation coefficient over binary labels {0, 1}.
/// Returns 0 when any marginal is degenerate (all-positive or all-negative
/// predictions or targets).
pub fn mcc(preds: &[usize], targets: &[usize]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    if preds.iter().chain(targets).any(|v| *v > 1) {
        return Err(Error::InvalidArgument("mcc expects binary labels".into()));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0f64, 0f64, 0f64, 0f64);
    for (p, t) in preds.iter().zip(targets) {
        match (p, t) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (1, 0) => fp += 1.0,
            (0, 1) => fn_ += 1.0,
            _ => unreachable!("binary labels checked above"),
        }
    }
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((tp * tn - fp * fn_) / denom.sqrt())
}

pub fn mse(preds: &Matrix, targets: &Matrix) -> Result<f64> {
    if !preds.same_shape(targets) {
        return Err(Error::DimensionMismatch(format!(
            "predictions {:?} vs targets {:?}",
            preds.shape(),
            targets.shape()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let n = preds.len() as f64;
    Ok(preds
        .data()
        .iter()
        .zip(targets.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CaseStats {
    /// Fraction of examples predicted correctly in a strict majority of runs.
    pub easy_fraction: f64,
    /// Fraction predicted incorrectly in a strict majority of runs.
    pub hard_fraction: f64,
}

/// Per-example correct counts across runs.
pub fn case_counts(per_run_correctness: &[Vec<bool>]) -> Result<Vec<usize>> {
    if per_run_correctness.is_empty() {
        return Err(Error::InvalidArgument("no runs for case analysis".into()));
    }
    let n_examples = per_run_correctness[0].len();
    if n_examples == 0 {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    if per_run_correctness.iter().any(|r| r.len() != n_examples) {
        return Err(Error::DimensionMismatch(
            "runs disagree on evaluation-set size".into(),
        ));
    }
    let mut counts = vec![0usize; n_examples];
    for run in per_run_correctness {
        for (count, correct) in counts.iter_mut().zip(run) {
            if *correct {
                *count += 1;
            }
        }
    }
    Ok(counts)
}

/// Easy/hard split with a strict-majority threshold: out of n runs, easy
/// needs more than n/2 correct, hard more than n/2 incorrect; an even split
/// lands in neither bucket.
pub fn case_analysis(per_run_correctness: &[Vec<bool>]) -> Result<CaseStats> {
    let counts = case_counts(per_run_correctness)?;
    let n_runs = per_run_correctness.len();
    let n_examples = counts.len() as f64;
    let easy = counts.iter().filter(|c| 2 * **c > n_runs).count() as f64;
    let hard = counts.iter().filter(|c| 2 * (n_runs - **c) > n_runs).count() as f64;
    Ok(CaseStats {
        easy_fraction: easy / n_examples,
        hard_fraction: hard / n_examples,
    })
}

/// A strategy fails when its seed-averaged score falls strictly below the
/// vanilla average on the same seeds and task.
pub fn failed_run_flag(strategy_mean: f64, vanilla_mean: f64) -> bool {
    strategy_mean < vanilla_mean
}

/// Mean and sample standard deviation (n-1). A single value has std 0 and
/// is flagged degenerate by the caller.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_basics() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 0]).unwrap(), 2.0 / 3.0);
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn mcc_perfect_and_inverted() {
        let t = &[0, 1, 0, 1, 1, 0];
        assert_eq!(mcc(t, t).unwrap(), 1.0);
        let inv: Vec<usize> = t.iter().map(|v| 1 - v).collect();
        assert_eq!(mcc(&inv, t).unwrap(), -1.0);
    }

    #[test]
    fn mcc_hand_confusion_table() {
        // TP=6, TN=3, FP=1, FN=2 -> 16 / sqrt(1120)
        let mut preds = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..6 {
            preds.push(1);
            targets.push(1);
        }
        for _ in 0..3 {
            preds.push(0);
            targets.push(0);
        }
        preds.push(1);
        targets.push(0);
        for _ in 0..2 {
            preds.push(0);
            targets.push(1);
        }
        let got = mcc(&preds, &targets).unwrap();
        assert!((got - 0.47809144373375745).abs() < 1e-15);
    }

    #[test]
    fn mcc_degenerate_marginal_is_zero() {
        assert_eq!(mcc(&[1, 1, 1], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(mcc(&[0, 1, 1], &[1, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn mcc_polarity_swap_is_symmetric() {
        let preds = [1, 0, 1, 1, 0, 0, 1, 0];
        let targets = [1, 1, 0, 1, 0, 1, 1, 0];
        let direct = mcc(&preds, &targets).unwrap();
        let flipped_p: Vec<usize> = preds.iter().map(|v| 1 - v).collect();
        let flipped_t: Vec<usize> = targets.iter().map(|v| 1 - v).collect();
        let swapped = mcc(&flipped_p, &flipped_t).unwrap();
        assert!((direct - swapped).abs() < 1e-15);
    }

    #[test]
    fn case_analysis_strict_majority() {
        // 10 runs, 3 examples: always right / 5-5 split / always wrong
        let runs: Vec<Vec<bool>> = (0..10)
            .map(|i| vec![true, i < 5, false])
            .collect();
        let stats = case_analysis(&runs).unwrap();
        assert_eq!(stats.easy_fraction, 1.0 / 3.0);
        assert_eq!(stats.hard_fraction, 1.0 / 3.0);
    }

    #[test]
    fn all_correct_runs() {
        let runs = vec![vec![true, true]; 10];
        let stats = case_analysis(&runs).unwrap();
        assert_eq!(stats.easy_fraction, 1.0);
        assert_eq!(stats.hard_fraction, 0.0);
    }

    #[test]
    fn failed_run_is_strict() {
        assert!(!failed_run_flag(78.88, 78.88));
        assert!(failed_run_flag(78.0, 78.88));
        assert!(!failed_run_flag(80.0, 78.88));
    }

    #[test]
    fn mean_std_sample_convention() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - std::f64::consts::SQRT_2).abs() < 1e-15);
        let (m1, s1) = mean_std(&[5.0]);
        assert_eq!((m1, s1), (5.0, 0.0));
    }
}
