//! Small trainable patch featurizer.
//!
//! A 224×224 patch is summarised as a 28×28 grid of 8×8 block-mean gray
//! levels plus the mean and standard deviation of each colour channel, all
//! scaled to `[0, 1]`. Two affine + ReLU layers map that summary to a
//! `D`-dimensional feature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::preprocess::{PatchImage, OUTPUT_SIDE};
use crate::tensor::Tensor;

pub const GRID: usize = 28;
pub const BLOCK: usize = OUTPUT_SIDE / GRID;
pub const INPUT_LEN: usize = GRID * GRID + 6;
pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_FEATURE_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    pub hidden: Tensor,
    pub hidden_bias: Tensor,
    pub output: Tensor,
    pub output_bias: Tensor,
}

impl Featurizer {
    /// Uniform fan-in initialisation for the weights, zero biases.
    pub fn init(hidden: usize, feature_dim: usize, seed: u64) -> Result<Self> {
        if hidden == 0 || feature_dim == 0 {
            return Err(Error::config("featurizer", "layer widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize| {
            let bound = (1.0 / rows as f64).sqrt();
            Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
        };
        let hidden_w = uniform(INPUT_LEN, hidden);
        let output_w = uniform(hidden, feature_dim);
        Ok(Featurizer {
            hidden: hidden_w,
            hidden_bias: Tensor::zeros(&[1, hidden]),
            output: output_w,
            output_bias: Tensor::zeros(&[1, feature_dim]),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.output.cols()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("featurizer.hidden".into(), &self.hidden),
            ("featurizer.hidden_bias".into(), &self.hidden_bias),
            ("featurizer.output".into(), &self.output),
            ("featurizer.output_bias".into(), &self.output_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.hidden,
            &mut self.hidden_bias,
            &mut self.output,
            &mut self.output_bias,
        ]
    }

    /// Fixed summary vector of one 224×224 patch.
    pub fn input_vector(patch: &PatchImage) -> Result<Vec<f64>> {
        let img = &patch.image;
        if img.width() != OUTPUT_SIDE || img.height() != OUTPUT_SIDE {
            return Err(Error::Size(format!(
                "featurizer needs {OUTPUT_SIDE}×{OUTPUT_SIDE} input, got {}×{}",
                img.width(),
                img.height()
            )));
        }
        let mut out = Vec::with_capacity(INPUT_LEN);
        let area = (BLOCK * BLOCK) as f64;
        for gy in 0..GRID {
            for gx in 0..GRID {
                let mut s = 0u32;
                for y in gy * BLOCK..(gy + 1) * BLOCK {
                    for x in gx * BLOCK..(gx + 1) * BLOCK {
                        s += img.gray_at(x, y) as u32;
                    }
                }
                out.push(s as f64 / area / 255.0);
            }
        }
        let n = (OUTPUT_SIDE * OUTPUT_SIDE) as f64;
        for c in 0..3 {
            let ch = c.min(img.channels() - 1);
            let (mut s, mut s2) = (0f64, 0f64);
            for px in img.data().chunks_exact(img.channels()) {
                let v = px[ch] as f64 / 255.0;
                s += v;
                s2 += v * v;
            }
            let mean = s / n;
            out.push(mean);
            out.push((s2 / n - mean * mean).max(0.0).sqrt());
        }
        Ok(out)
    }

    /// Records the featurizer on `g` for a stack of patches, returning the
    /// `M × D` feature node and the parameter leaves.
    pub fn trace(
        &self,
        g: &mut Graph,
        patches: &[PatchImage],
        trainable: bool,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        if patches.is_empty() {
            return Err(Error::EmptyBag);
        }
        let mut rows = Vec::with_capacity(patches.len() * INPUT_LEN);
        for p in patches {
            rows.extend(Self::input_vector(p)?);
        }
        let input = g.constant(Tensor::matrix(patches.len(), INPUT_LEN, rows)?);
        self.trace_inputs(g, input, trainable)
    }

    /// Same as [`Featurizer::trace`] on precomputed summary rows.
    pub fn trace_inputs(
        &self,
        g: &mut Graph,
        input: NodeId,
        trainable: bool,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let m = g.value(input).rows();
        let params: Vec<NodeId> = self
            .named_tensors()
            .into_iter()
            .map(|(_, t)| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        let [w1, b1, w2, b2] = params[..] else {
            unreachable!("four featurizer tensors")
        };
        let h = g.matmul(input, w1)?;
        let b1 = g.broadcast_rows(b1, m)?;
        let h = g.add(h, b1)?;
        let h = g.relu(h)?;
        let o = g.matmul(h, w2)?;
        let b2 = g.broadcast_rows(b2, m)?;
        let o = g.add(o, b2)?;
        let o = g.relu(o)?;
        Ok((o, params))
    }

    /// Features for precomputed summary rows, `M × INPUT_LEN` to `M × D`.
    pub fn features(&self, inputs: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let input = g.constant(inputs.clone());
        let (out, _) = self.trace_inputs(&mut g, input, false)?;
        Ok(g.value(out).clone())
    }

    pub fn featurize(&self, patch: &PatchImage) -> Result<Tensor> {
        let mut g = Graph::new();
        let (out, _) = self.trace(&mut g, std::slice::from_ref(patch), false)?;
        Tensor::vector(g.value(out).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Image;

    fn patch(f: impl FnMut(usize, usize, usize) -> u8) -> PatchImage {
        PatchImage {
            image: Image::from_fn(224, 224, 3, f).unwrap(),
            origin: (0, 0),
            augmentations: Vec::new(),
        }
    }

    #[test]
    fn output_length_is_feature_dim() {
        let f = Featurizer::init(16, DEFAULT_FEATURE_DIM, 1).unwrap();
        let v = f.featurize(&patch(|x, y, c| (x + y + c) as u8)).unwrap();
        assert_eq!(v.shape(), &[DEFAULT_FEATURE_DIM]);
    }

    #[test]
    fn black_image_with_zero_bias_is_zero() {
        let f = Featurizer::init(16, 8, 2).unwrap();
        let v = f.featurize(&patch(|_, _, _| 0)).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn wrong_size_is_rejected() {
        let f = Featurizer::init(4, 4, 2).unwrap();
        let small = PatchImage {
            image: Image::filled(100, 100, &[1]).unwrap(),
            origin: (0, 0),
            augmentations: Vec::new(),
        };
        assert!(matches!(f.featurize(&small), Err(Error::Size(_))));
    }

    #[test]
    fn summary_statistics() {
        let p = patch(|x, _, c| if c == 0 || x % 2 == 0 { 255 } else { 0 });
        let v = Featurizer::input_vector(&p).unwrap();
        assert_eq!(v.len(), INPUT_LEN);
        let tail = &v[GRID * GRID..];
        assert_eq!(tail[0], 1.0);
        assert_eq!(tail[1], 0.0);
        assert!((tail[2] - 0.5).abs() < 1e-12 && (tail[3] - 0.5).abs() < 1e-12);
    }
}
