//! Patch bags, seeded synthetic datasets, splits and the bag directory
//! format.

mod io;
mod split;
mod synth;

pub use io::{read_bags, read_bags_expecting, write_bags, BLOB, FORMAT, FORMAT_VERSION, MANIFEST};
pub use split::{split, SplitRatios};
pub use synth::{generate, generate_with_truth, CorrelationRule, SynthConfig, SyntheticData};

use crate::error::{Error, Result};
use crate::model::TagSchema;
use crate::tensor::Tensor;

/// One slide: `M × D` patch features and a class index per tag task.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBag {
    pub id: String,
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl PatchBag {
    pub fn new(
        id: impl Into<String>,
        patches: usize,
        feature_dim: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if patches == 0 {
            return Err(Error::EmptyBag);
        }
        let features = Tensor::matrix(patches, feature_dim, features)?;
        Ok(PatchBag {
            id: id.into(),
            features,
            labels,
        })
    }

    pub fn num_patches(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Same bag with patch rows reordered so that new row `i` is old row
    /// `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<PatchBag> {
        Ok(PatchBag {
            id: self.id.clone(),
            features: self.features.select_rows(order)?,
            labels: self.labels.clone(),
        })
    }
}

/// A set of bags sharing one schema and feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: TagSchema,
    pub feature_dim: usize,
    pub bags: Vec<PatchBag>,
}

impl Dataset {
    pub fn new(schema: TagSchema, feature_dim: usize, bags: Vec<PatchBag>) -> Result<Self> {
        let ds = Dataset {
            schema,
            feature_dim,
            bags,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let counts = self.schema.class_counts();
        for bag in &self.bags {
            if bag.feature_dim() != self.feature_dim {
                return Err(Error::dim(
                    "dataset",
                    bag.features.shape(),
                    &[bag.num_patches(), self.feature_dim],
                ));
            }
            if bag.labels.len() != counts.len() {
                return Err(Error::Contract(format!(
                    "bag {} has {} labels for {} tasks",
                    bag.id,
                    bag.labels.len(),
                    counts.len()
                )));
            }
            for (k, (&label, &n)) in bag.labels.iter().zip(&counts).enumerate() {
                if label >= n {
                    return Err(Error::Contract(format!(
                        "bag {}: label {label} out of range for task {} with {n} classes",
                        bag.id,
                        self.schema.tasks()[k].name
                    )));
                }
            }
            if !bag.features.is_finite() {
                return Err(Error::Integrity(format!("bag {}: non-finite features", bag.id)));
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            feature_dim: self.feature_dim,
            bags: indices.iter().map(|&i| self.bags[i].clone()).collect(),
        }
    }
}
