//! Featurizer and bag model trained end to end from image patches.

use crate::data::PatchBag;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{ModelParams, TagSchema};
use crate::preprocess::{Featurizer, PatchImage, INPUT_LEN};
use crate::tensor::Tensor;
use crate::train::trainer::{Network, Traced};

/// A bag of image patches stored as their fixed featurizer summaries
/// (`M × INPUT_LEN`), so repeated epochs skip the pixel work.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBag {
    pub id: String,
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl ImageBag {
    pub fn from_patches(id: impl Into<String>, patches: &[PatchImage], labels: Vec<usize>) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::EmptyBag);
        }
        let mut rows = Vec::with_capacity(patches.len() * INPUT_LEN);
        for p in patches {
            rows.extend(Featurizer::input_vector(p)?);
        }
        Ok(ImageBag {
            id: id.into(),
            inputs: Tensor::matrix(patches.len(), INPUT_LEN, rows)?,
            labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub featurizer: Featurizer,
    pub model: ModelParams,
}

impl JointModel {
    pub fn new(featurizer: Featurizer, model: ModelParams) -> Result<Self> {
        if featurizer.feature_dim() != model.dims().feature_dim {
            return Err(Error::dim(
                "joint model",
                &[featurizer.feature_dim()],
                &[model.dims().feature_dim],
            ));
        }
        Ok(JointModel { featurizer, model })
    }

    /// Featurizes every patch, giving a bag for the feature-level model.
    pub fn to_patch_bag(&self, bag: &ImageBag) -> Result<PatchBag> {
        Ok(PatchBag {
            id: bag.id.clone(),
            features: self.featurizer.features(&bag.inputs)?,
            labels: bag.labels.clone(),
        })
    }
}

impl Network for JointModel {
    type Sample = ImageBag;

    fn schema(&self) -> &TagSchema {
        self.model.schema()
    }

    fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.featurizer.named_tensors().into_iter().map(|(_, t)| t).collect();
        out.extend(self.model.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.featurizer.tensors_mut();
        out.extend(self.model.tensors_mut());
        out
    }

    fn labels(sample: &ImageBag) -> &[usize] {
        &sample.labels
    }

    fn trace(&self, g: &mut Graph, sample: &ImageBag, trainable: bool) -> Result<Traced> {
        let input = g.constant(sample.inputs.clone());
        let (features, mut params) = self.featurizer.trace_inputs(g, input, trainable)?;
        let t = self.model.trace(g, features, trainable)?;
        params.extend(t.params);
        Ok(Traced { probs: t.probs, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDims, TagTask, Variant};
    use crate::preprocess::Image;
    use crate::train::{mean_loss, train, TrainConfig};

    fn schema() -> TagSchema {
        TagSchema::new(vec![TagTask {
            name: "tone".into(),
            classes: vec!["dark".into(), "light".into()],
        }])
        .unwrap()
    }

    fn bag(i: usize, level: u8, label: usize) -> ImageBag {
        let patches: Vec<PatchImage> = (0..3)
            .map(|j| PatchImage {
                image: Image::from_fn(224, 224, 3, |x, y, _| {
                    level.saturating_add(((x + y + j * 7 + i) % 16) as u8)
                })
                .unwrap(),
                origin: (0, 0),
                augmentations: Vec::new(),
            })
            .collect();
        ImageBag::from_patches(format!("img{i}"), &patches, vec![label]).unwrap()
    }

    fn model(seed: u64) -> JointModel {
        let dims = ModelDims {
            feature_dim: 8,
            head_hidden: 3,
            tag_hidden: 3,
            heads: 1,
            variant: Variant::Gated,
        };
        JointModel::new(
            Featurizer::init(16, 8, seed).unwrap(),
            ModelParams::init(dims, schema(), seed).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn featurizer_width_must_match() {
        let m = model(1);
        assert!(JointModel::new(Featurizer::init(16, 5, 1).unwrap(), m.model).is_err());
    }

    #[test]
    fn joint_training_updates_both_parts() {
        let data: Vec<ImageBag> = (0..6)
            .map(|i| if i % 2 == 0 { bag(i, 20, 0) } else { bag(i, 200, 1) })
            .collect();
        let init = model(3);
        let cfg = TrainConfig {
            lr: 1e-3,
            epochs: 10,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let out = train(init.clone(), &data, &[], &cfg).unwrap();
        assert_ne!(out.best.featurizer, init.featurizer);
        assert_ne!(out.best.model, init.model);
        let before = mean_loss(&init, &data, &[1.0]).unwrap();
        let after = mean_loss(&out.best, &data, &[1.0]).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn patch_bag_matches_joint_prediction() {
        let m = model(4);
        let b = bag(0, 90, 0);
        let fb = m.to_patch_bag(&b).unwrap();
        let direct = m.predict(&b).unwrap();
        assert_eq!(m.model.forward(&fb).unwrap().probs, direct);
    }
}
