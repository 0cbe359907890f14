use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TagSchema;
use crate::tensor::Tensor;

/// Which patch-mixing block sits in front of the tag attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Per-patch gated attention heads with a residual projection.
    #[default]
    Gated,
    /// Scaled dot-product self-attention heads with the same residual
    /// projection.
    Sdpa,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Gated => "gated",
            Variant::Sdpa => "sdpa",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gated" => Ok(Variant::Gated),
            "sdpa" => Ok(Variant::Sdpa),
            other => Err(Error::config(
                "variant",
                format!("unknown variant `{other}` (expected gated or sdpa)"),
            )),
        }
    }
}

/// Architecture sizes. `heads == 0` removes the patch transformation
/// entirely so the tag attention sees the raw features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub head_hidden: usize,
    pub tag_hidden: usize,
    pub heads: usize,
    pub variant: Variant,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("head_hidden", self.head_hidden),
            ("tag_hidden", self.tag_hidden),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.variant == Variant::Sdpa && self.heads > 0 && !self.feature_dim.is_multiple_of(self.heads) {
            return Err(Error::config(
                "heads",
                format!(
                    "scaled dot-product attention needs feature_dim ({}) divisible by heads ({})",
                    self.feature_dim, self.heads
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedHead {
    /// `D × D'`
    pub hidden: Tensor,
    /// `D' × 1`
    pub score: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpaHead {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatchTransform {
    Identity,
    Gated {
        heads: Vec<GatedHead>,
        /// `(heads·D) × D`
        projection: Tensor,
    },
    Sdpa {
        heads: Vec<SdpaHead>,
        /// `D × D`
        projection: Tensor,
    },
}

/// Per-task attention pooling and classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TagHead {
    /// `D × D'_t`
    pub hidden: Tensor,
    /// `D'_t × 1`
    pub score: Tensor,
    /// `D × D_k`
    pub classifier: Tensor,
}

/// Every learnable matrix of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    schema: TagSchema,
    seed: u64,
    pub transform: PatchTransform,
    pub tags: Vec<TagHead>,
}

impl ModelParams {
    /// All-zero parameters with the right shapes.
    pub fn zeros(dims: ModelDims, schema: TagSchema) -> Result<Self> {
        dims.validate()?;
        let d = dims.feature_dim;
        let transform = match (dims.heads, dims.variant) {
            (0, _) => PatchTransform::Identity,
            (h, Variant::Gated) => PatchTransform::Gated {
                heads: (0..h)
                    .map(|_| GatedHead {
                        hidden: Tensor::zeros(&[d, dims.head_hidden]),
                        score: Tensor::zeros(&[dims.head_hidden, 1]),
                    })
                    .collect(),
                projection: Tensor::zeros(&[h * d, d]),
            },
            (h, Variant::Sdpa) => {
                let width = d / h;
                PatchTransform::Sdpa {
                    heads: (0..h)
                        .map(|_| SdpaHead {
                            query: Tensor::zeros(&[d, width]),
                            key: Tensor::zeros(&[d, width]),
                            value: Tensor::zeros(&[d, width]),
                        })
                        .collect(),
                    projection: Tensor::zeros(&[d, d]),
                }
            }
        };
        let tags = schema
            .class_counts()
            .into_iter()
            .map(|classes| TagHead {
                hidden: Tensor::zeros(&[d, dims.tag_hidden]),
                score: Tensor::zeros(&[dims.tag_hidden, 1]),
                classifier: Tensor::zeros(&[d, classes]),
            })
            .collect();
        Ok(ModelParams {
            dims,
            schema,
            seed: 0,
            transform,
            tags,
        })
    }

    /// Seeded initialisation: each matrix is drawn from
    /// `U(-sqrt(1/fan_in), +sqrt(1/fan_in))` with `fan_in` its row count.
    pub fn init(dims: ModelDims, schema: TagSchema, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(dims, schema)?;
        params.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in params.tensors_mut() {
            let bound = (1.0 / t.rows() as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(params)
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn schema(&self) -> &TagSchema {
        &self.schema
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    /// Matrices in canonical order with their checkpoint names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        match &self.transform {
            PatchTransform::Identity => {}
            PatchTransform::Gated { heads, projection } => {
                for (i, h) in heads.iter().enumerate() {
                    out.push((format!("head{i}.hidden"), &h.hidden));
                    out.push((format!("head{i}.score"), &h.score));
                }
                out.push(("projection".to_string(), projection));
            }
            PatchTransform::Sdpa { heads, projection } => {
                for (i, h) in heads.iter().enumerate() {
                    out.push((format!("head{i}.query"), &h.query));
                    out.push((format!("head{i}.key"), &h.key));
                    out.push((format!("head{i}.value"), &h.value));
                }
                out.push(("projection".to_string(), projection));
            }
        }
        for (k, t) in self.tags.iter().enumerate() {
            out.push((format!("tag{k}.hidden"), &t.hidden));
            out.push((format!("tag{k}.score"), &t.score));
            out.push((format!("tag{k}.classifier"), &t.classifier));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// Same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        match &mut self.transform {
            PatchTransform::Identity => {}
            PatchTransform::Gated { heads, projection } => {
                for h in heads.iter_mut() {
                    out.push(&mut h.hidden);
                    out.push(&mut h.score);
                }
                out.push(projection);
            }
            PatchTransform::Sdpa { heads, projection } => {
                for h in heads.iter_mut() {
                    out.push(&mut h.query);
                    out.push(&mut h.key);
                    out.push(&mut h.value);
                }
                out.push(projection);
            }
        }
        for t in self.tags.iter_mut() {
            out.push(&mut t.hidden);
            out.push(&mut t.score);
            out.push(&mut t.classifier);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}
