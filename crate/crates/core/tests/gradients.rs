mod common;

use common::{dims, grad_check, random_bag, schema, small_model_grad_check};
use patchbag::model::{ModelParams, Variant};
use patchbag::preprocess::{Featurizer, INPUT_LEN};
use patchbag::train::{ImageBag, JointModel};
use patchbag::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gated_model_matches_central_differences() {
    for seed in 0..5 {
        let r = small_model_grad_check(seed, Variant::Gated);
        assert_eq!(r.failures, 0, "seed {seed}: {r:?}");
        assert!(r.entries > 100);
    }
}

#[test]
fn sdpa_model_matches_central_differences() {
    for seed in 0..5 {
        let r = small_model_grad_check(seed, Variant::Sdpa);
        assert_eq!(r.failures, 0, "seed {seed}: {r:?}");
    }
}

#[test]
fn tag_only_model_matches_central_differences() {
    let classes = [2, 5, 3];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = ModelParams::init(dims(5, 3, 0, Variant::Gated), schema(&classes), 11).unwrap();
    let bag = random_bag(&mut rng, 7, 5, &classes);
    let r = grad_check(&params, &bag, &[1.0, 0.5, 2.0]);
    assert_eq!(r.failures, 0, "{r:?}");
}

#[test]
fn featurizer_gradients_flow_through_the_joint_model() {
    let classes = [3];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // zero biases would put dead rows exactly on the ReLU corner
    let mut featurizer = Featurizer::init(4, 5, 5).unwrap();
    for b in featurizer.hidden_bias.data_mut().iter_mut().chain(featurizer.output_bias.data_mut()) {
        *b = rng.random_range(0.05..0.3);
    }
    let model = JointModel::new(
        featurizer,
        ModelParams::init(dims(5, 3, 1, Variant::Gated), schema(&classes), 5).unwrap(),
    )
    .unwrap();
    let inputs = Tensor::from_fn(3, INPUT_LEN, |_, _| rng.random_range(0.0..1.0));
    let bag = ImageBag {
        id: "img".into(),
        inputs,
        labels: vec![1],
    };
    let r = grad_check(&model, &bag, &[1.0]);
    assert_eq!(r.failures, 0, "{r:?}");
    assert!(r.entries > 4 * INPUT_LEN);
}
