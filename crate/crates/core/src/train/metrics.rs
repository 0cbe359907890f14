//! Confusion matrices and Macro/Micro F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TagSchema;

/// Counts indexed `[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_pairs(classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Contract(format!(
                "{} truths but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::Contract(format!(
                "class pair ({truth}, {predicted}) out of range for {} classes",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn counts(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes).map(<[u64]>::to_vec).collect()
    }

    /// `(tp, fp, fn)` for one class.
    pub fn class_counts(&self, c: usize) -> (u64, u64, u64) {
        let tp = self.get(c, c);
        let col: u64 = (0..self.classes).map(|t| self.get(t, c)).sum();
        let row: u64 = (0..self.classes).map(|p| self.get(c, p)).sum();
        (tp, col - tp, row - tp)
    }

    /// `2tp / (2tp + fp + fn)`, or `None` when the class never appears in
    /// either truth or prediction.
    pub fn class_f1(&self, c: usize) -> Option<f64> {
        let (tp, fp, fn_) = self.class_counts(c);
        let denom = 2 * tp + fp + fn_;
        (denom > 0).then(|| (2 * tp) as f64 / denom as f64)
    }

    /// Unweighted mean over all classes; undefined classes count as 0.
    pub fn macro_f1(&self) -> f64 {
        let sum: f64 = (0..self.classes).map(|c| self.class_f1(c).unwrap_or(0.0)).sum();
        sum / self.classes as f64
    }

    /// F1 of the pooled counts. With exactly one label per item this is the
    /// accuracy.
    pub fn micro_f1(&self) -> f64 {
        let (tp, fp, fn_) = (0..self.classes).fold((0, 0, 0), |acc, c| {
            let (a, b, d) = self.class_counts(c);
            (acc.0 + a, acc.1 + b, acc.2 + d)
        });
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Each row divided by its sum; rows of absent truth classes stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|t| {
                let row: u64 = (0..self.classes).map(|p| self.get(t, p)).sum();
                (0..self.classes)
                    .map(|p| {
                        if row == 0 {
                            0.0
                        } else {
                            self.get(t, p) as f64 / row as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: String,
    pub classes: Vec<String>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    /// Row-normalized, `[truth][predicted]`.
    pub confusion: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
    /// Classes absent from both truth and prediction; their F1 is taken as 0.
    pub undefined_f1: Vec<String>,
    /// Classes absent from the truth; their confusion row is all zero.
    pub empty_rows: Vec<String>,
}

impl TaskMetrics {
    pub fn from_confusion(task: &str, classes: &[String], cm: &ConfusionMatrix) -> Self {
        let per_class: Vec<Option<f64>> = (0..cm.classes()).map(|c| cm.class_f1(c)).collect();
        let counts = cm.counts();
        TaskMetrics {
            task: task.to_string(),
            classes: classes.to_vec(),
            macro_f1: cm.macro_f1(),
            micro_f1: cm.micro_f1(),
            accuracy: cm.accuracy(),
            per_class_f1: per_class.iter().map(|f| f.unwrap_or(0.0)).collect(),
            confusion: cm.normalized(),
            undefined_f1: per_class
                .iter()
                .zip(classes)
                .filter(|(f, _)| f.is_none())
                .map(|(_, c)| c.clone())
                .collect(),
            empty_rows: counts
                .iter()
                .zip(classes)
                .filter(|(row, _)| row.iter().all(|&n| n == 0))
                .map(|(_, c)| c.clone())
                .collect(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bags: usize,
    pub tasks: Vec<TaskMetrics>,
    pub average_macro_f1: f64,
    pub average_micro_f1: f64,
}

impl MetricsReport {
    /// `truth[b][k]` and `predicted[b][k]` are class indices of bag `b` for
    /// task `k`.
    pub fn from_predictions(schema: &TagSchema, truth: &[Vec<usize>], predicted: &[Vec<usize>]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::config("data", "cannot evaluate an empty dataset"));
        }
        if truth.len() != predicted.len() {
            return Err(Error::Contract(format!(
                "{} truths but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut matrices: Vec<ConfusionMatrix> =
            schema.class_counts().into_iter().map(ConfusionMatrix::new).collect();
        for (t, p) in truth.iter().zip(predicted) {
            if t.len() != matrices.len() || p.len() != matrices.len() {
                return Err(Error::Contract(format!(
                    "expected {} tasks per bag",
                    matrices.len()
                )));
            }
            for (k, cm) in matrices.iter_mut().enumerate() {
                cm.record(t[k], p[k])?;
            }
        }
        let tasks: Vec<TaskMetrics> = schema
            .tasks()
            .iter()
            .zip(&matrices)
            .map(|(task, cm)| TaskMetrics::from_confusion(&task.name, &task.classes, cm))
            .collect();
        let k = tasks.len() as f64;
        Ok(MetricsReport {
            bags: truth.len(),
            average_macro_f1: tasks.iter().map(|t| t.macro_f1).sum::<f64>() / k,
            average_micro_f1: tasks.iter().map(|t| t.micro_f1).sum::<f64>() / k,
            tasks,
        })
    }

    pub fn macro_f1(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.macro_f1).collect()
    }

    pub fn micro_f1(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.micro_f1).collect()
    }
}
