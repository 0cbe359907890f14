//! Weighted multi-task cross entropy.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, LOG_FLOOR};

/// `Σ_k λ_k · mean_b(−ln max(p_bk[y_bk], 1e-12))`.
///
/// `probs[b][k]` is the distribution of task `k` for batch item `b` and
/// `labels[b][k]` its true class.
pub fn multi_task_loss(probs: &[Vec<Vec<f64>>], labels: &[Vec<usize>], lambdas: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Contract("loss over an empty batch".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predictions but {} label rows",
            probs.len(),
            labels.len()
        )));
    }
    let mut per_task = vec![0.0; lambdas.len()];
    for (p, y) in probs.iter().zip(labels) {
        if p.len() != lambdas.len() || y.len() != lambdas.len() {
            return Err(Error::Contract(format!(
                "expected {} tasks, got {} distributions and {} labels",
                lambdas.len(),
                p.len(),
                y.len()
            )));
        }
        for (k, (dist, &label)) in p.iter().zip(y).enumerate() {
            check_distribution(dist)?;
            if label >= dist.len() {
                return Err(Error::Contract(format!(
                    "label {label} out of range for task {k} with {} classes",
                    dist.len()
                )));
            }
            per_task[k] += -dist[label].max(LOG_FLOOR).ln();
        }
    }
    let n = probs.len() as f64;
    Ok(per_task.iter().zip(lambdas).map(|(s, l)| l * s / n).sum())
}

fn check_distribution(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!("not a probability distribution: {p:?}")));
    }
    Ok(())
}

/// One bag's contribution `Σ_k λ_k · −ln p_k[y_k]` recorded on the tape.
pub fn bag_loss(g: &mut Graph, probs: &[NodeId], labels: &[usize], lambdas: &[f64]) -> Result<NodeId> {
    if probs.len() != labels.len() || probs.len() != lambdas.len() || probs.is_empty() {
        return Err(Error::Contract(format!(
            "{} task outputs, {} labels, {} weights",
            probs.len(),
            labels.len(),
            lambdas.len()
        )));
    }
    let mut total: Option<NodeId> = None;
    for ((&p, &y), &l) in probs.iter().zip(labels).zip(lambdas) {
        let nll = g.nll(p, y)?;
        let term = g.scale(nll, l)?;
        total = Some(match total {
            None => term,
            Some(t) => g.add(t, term)?,
        });
    }
    Ok(total.expect("at least one task"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let probs = vec![vec![vec![0.0, 1.0], vec![1.0, 0.0, 0.0]]];
        let labels = vec![vec![1, 0]];
        assert_eq!(multi_task_loss(&probs, &labels, &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_predictor_closed_form() {
        let counts = [3usize, 6, 16];
        let probs = vec![counts.iter().map(|&c| vec![1.0 / c as f64; c]).collect()];
        let loss = multi_task_loss(&probs, &[vec![0, 0, 0]], &[1.0; 3]).unwrap();
        let expected = 3f64.ln() + 6f64.ln() + 16f64.ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 5.662).abs() < 1e-3);
    }

    #[test]
    fn label_out_of_range() {
        let probs = vec![vec![vec![0.5, 0.5]]];
        assert!(matches!(
            multi_task_loss(&probs, &[vec![2]], &[1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zero_probability_is_floored() {
        let probs = vec![vec![vec![1.0, 0.0]]];
        let loss = multi_task_loss(&probs, &[vec![1]], &[1.0]).unwrap();
        assert!((loss - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn tape_matches_numeric() {
        let dists = [vec![0.2, 0.3, 0.5], vec![0.6, 0.4]];
        let lambdas = [0.5, 2.0];
        let labels = [2, 0];
        let mut g = Graph::new();
        let ids: Vec<NodeId> = dists
            .iter()
            .map(|d| g.constant(Tensor::vector(d.clone()).unwrap()))
            .collect();
        let l = bag_loss(&mut g, &ids, &labels, &lambdas).unwrap();
        let numeric = multi_task_loss(&[dists.to_vec()], &[labels.to_vec()], &lambdas).unwrap();
        assert!((g.value(l).data()[0] - numeric).abs() < 1e-15);
    }
}
