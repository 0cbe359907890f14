//! The patch transformer: schema, parameters, layers, forward pass and
//! checkpoints.

pub mod checkpoint;
pub mod layers;
mod params;
mod schema;

use serde::{Deserialize, Serialize};

pub use params::{GatedHead, ModelDims, ModelParams, PatchTransform, SdpaHead, TagHead, Variant};
pub use schema::{TagSchema, TagTask};

use crate::data::PatchBag;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Attention weights produced for one bag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub bag_id: String,
    /// One length-`M` vector per gated head; empty for the identity and
    /// dot-product transforms.
    pub head_weights: Vec<Vec<f64>>,
    /// One length-`M` vector per tag task.
    pub tag_weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// One probability vector per task, in schema order.
    pub probs: Vec<Vec<f64>>,
    pub attention: AttentionRecord,
}

impl Prediction {
    /// Arg-max class per task; ties go to the lowest index.
    pub fn classes(&self) -> Vec<usize> {
        self.probs.iter().map(|p| argmax(p)).collect()
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Node handles of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Parameter leaves in [`ModelParams::named_tensors`] order.
    pub params: Vec<NodeId>,
    pub transformed: NodeId,
    pub head_weights: Vec<NodeId>,
    pub sdpa_attention: Vec<NodeId>,
    pub tag_weights: Vec<NodeId>,
    pub tag_repr: Vec<NodeId>,
    pub probs: Vec<NodeId>,
}

impl ModelParams {
    /// Records the full forward pass for `patches` (an `M × D` node).
    /// Parameters are registered as trainable leaves when `trainable` is set.
    pub fn trace(&self, g: &mut Graph, patches: NodeId, trainable: bool) -> Result<ForwardTrace> {
        let (m, d) = g.value(patches).dims2()?;
        if m == 0 {
            return Err(Error::EmptyBag);
        }
        if d != self.dims().feature_dim {
            return Err(Error::dim(
                "forward",
                g.value(patches).shape(),
                &[m, self.dims().feature_dim],
            ));
        }
        let params: Vec<NodeId> = self
            .tensors()
            .into_iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        let mut ids = params.iter().copied();
        let mut next = || ids.next().expect("parameter layout");

        let (transformed, head_weights, sdpa_attention) = match &self.transform {
            PatchTransform::Identity => (patches, Vec::new(), Vec::new()),
            PatchTransform::Gated { heads, .. } => {
                let pairs: Vec<(NodeId, NodeId)> = heads.iter().map(|_| (next(), next())).collect();
                let projection = next();
                let (out, w) = layers::patch_transform(g, patches, &pairs, projection)?;
                (out, w, Vec::new())
            }
            PatchTransform::Sdpa { heads, .. } => {
                let triples: Vec<(NodeId, NodeId, NodeId)> =
                    heads.iter().map(|_| (next(), next(), next())).collect();
                let projection = next();
                let (out, a) = layers::sdpa_transform(g, patches, &triples, projection)?;
                (out, Vec::new(), a)
            }
        };

        let mut tag_weights = Vec::with_capacity(self.tags.len());
        let mut tag_repr = Vec::with_capacity(self.tags.len());
        let mut probs = Vec::with_capacity(self.tags.len());
        for _ in &self.tags {
            let (hidden, score, classifier) = (next(), next(), next());
            let (t, alpha) = layers::tag_attention(g, transformed, hidden, score)?;
            probs.push(layers::predict_tag(g, t, classifier)?);
            tag_weights.push(alpha);
            tag_repr.push(t);
        }
        Ok(ForwardTrace {
            params,
            transformed,
            head_weights,
            sdpa_attention,
            tag_weights,
            tag_repr,
            probs,
        })
    }

    /// Inference on raw `M × D` features.
    pub fn forward_features(&self, bag_id: &str, features: &Tensor) -> Result<Prediction> {
        let mut g = Graph::new();
        let v = g.constant(features.clone());
        let trace = self.trace(&mut g, v, false)?;
        let collect = |ids: &[NodeId]| -> Vec<Vec<f64>> {
            ids.iter().map(|&id| g.value(id).data().to_vec()).collect()
        };
        Ok(Prediction {
            probs: collect(&trace.probs),
            attention: AttentionRecord {
                bag_id: bag_id.to_string(),
                head_weights: collect(&trace.head_weights),
                tag_weights: collect(&trace.tag_weights),
            },
        })
    }

    pub fn forward(&self, bag: &PatchBag) -> Result<Prediction> {
        self.forward_features(&bag.id, &bag.features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(heads: usize, variant: Variant) -> ModelParams {
        ModelParams::init(
            ModelDims {
                feature_dim: 64,
                head_hidden: 8,
                tag_hidden: 8,
                heads,
                variant,
            },
            TagSchema::histology(),
            11,
        )
        .unwrap()
    }

    #[test]
    fn output_arity_follows_schema() {
        let p = small_params(3, Variant::Gated);
        let v = Tensor::from_fn(5, 64, |r, c| ((r * 7 + c) % 11) as f64 * 0.1 - 0.5);
        let pred = p.forward_features("b", &v).unwrap();
        let lens: Vec<usize> = pred.probs.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![3, 6, 16]);
        assert_eq!(pred.attention.head_weights.len(), 3);
        for w in pred
            .attention
            .head_weights
            .iter()
            .chain(&pred.attention.tag_weights)
        {
            assert_eq!(w.len(), 5);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for p in &pred.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transformed_shape_matches_input() {
        let p = ModelParams::init(
            ModelDims {
                feature_dim: 2048,
                head_hidden: 4,
                tag_hidden: 4,
                heads: 3,
                variant: Variant::Gated,
            },
            TagSchema::histology(),
            1,
        )
        .unwrap();
        let mut g = Graph::new();
        let v = g.constant(Tensor::from_fn(32, 2048, |r, c| ((r + c) % 5) as f64 * 0.01));
        let trace = p.trace(&mut g, v, false).unwrap();
        assert_eq!(g.value(trace.transformed).shape(), &[32, 2048]);
    }

    #[test]
    fn feature_dim_mismatch_is_rejected() {
        let p = small_params(1, Variant::Gated);
        let v = Tensor::zeros(&[3, 10]);
        assert!(matches!(
            p.forward_features("b", &v),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let p = small_params(2, Variant::Sdpa);
        let v = Tensor::from_fn(6, 64, |r, c| ((r * 13 + c * 3) % 17) as f64 * 0.05);
        assert_eq!(
            p.forward_features("x", &v).unwrap(),
            p.forward_features("x", &v).unwrap()
        );
    }

    #[test]
    fn identity_transform_passes_features_through() {
        let p = small_params(0, Variant::Gated);
        let v0 = Tensor::from_fn(4, 64, |r, c| r as f64 - c as f64 * 0.1);
        let mut g = Graph::new();
        let v = g.constant(v0.clone());
        let trace = p.trace(&mut g, v, false).unwrap();
        assert_eq!(g.value(trace.transformed), &v0);
    }

    #[test]
    fn argmax_ties_prefer_lowest_index() {
        assert_eq!(argmax(&[0.25, 0.5, 0.25]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
