use mov_core::mov::{self, Gate, MovArchitecture, MovParams};
use mov_core::nn::{self, LayerParams, MlpParams};
use proptest::prelude::*;

fn arch(dims: Vec<usize>, classes: usize) -> MovArchitecture {
    MovArchitecture {
        view_dims: dims,
        classes,
        expert_hidden: vec![5],
        gate_hidden: vec![3],
    }
}

fn inputs(dims: &[usize], flat: &[f64]) -> Vec<Vec<f64>> {
    let mut it = flat.iter().cycle();
    dims.iter().map(|&d| (0..d).map(|_| *it.next().unwrap()).collect()).collect()
}

fn case() -> impl Strategy<Value = (Vec<usize>, usize, u64, Vec<f64>)> {
    (
        proptest::collection::vec(1usize..5, 1..5),
        2usize..5,
        any::<u64>(),
        proptest::collection::vec(-30.0f64..30.0, 1..20),
    )
}

proptest! {
    #[test]
    fn mixture_is_a_distribution((dims, k, seed, flat) in case()) {
        let params = arch(dims.clone(), k).init(seed).unwrap();
        let p = mov::forward(&params, &inputs(&dims, &flat), None).unwrap();
        prop_assert!((p.gate_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.gate_weights.iter().all(|g| *g > 0.0));
        for d in &p.expert_dists {
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!((p.mixture_dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (c, q) in p.mixture_dist.iter().enumerate() {
            prop_assert!(*q >= 0.0);
            let by_hand: f64 = p.gate_weights.iter().zip(&p.expert_dists).map(|(g, d)| g * d[c]).sum();
            prop_assert!((q - by_hand).abs() < 1e-12);
            let lo = p.expert_dists.iter().map(|d| d[c]).fold(f64::INFINITY, f64::min);
            let hi = p.expert_dists.iter().map(|d| d[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*q >= lo - 1e-15 && *q <= hi + 1e-15);
        }
    }

    #[test]
    fn posterior_weights_sum_to_one((dims, k, seed, flat) in case(), label in 0usize..2) {
        let params = arch(dims.clone(), k).init(seed).unwrap();
        let p = mov::forward(&params, &inputs(&dims, &flat), None).unwrap();
        let w = mov::posterior_weights(&p, label).unwrap().w;
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn single_view_mixture_is_its_expert((dim, k, seed, flat) in (1usize..5, 2usize..5, any::<u64>(), proptest::collection::vec(-5.0f64..5.0, 1..8))) {
        let params = arch(vec![dim], k).init(seed).unwrap();
        let views = inputs(&[dim], &flat);
        let p = mov::forward(&params, &views, None).unwrap();
        prop_assert_eq!(&p.gate_weights, &vec![1.0]);
        let alone = nn::softmax(params.experts()[0].forward(&views[0], nn::Mode::Infer).unwrap().logits()).unwrap();
        for (a, b) in p.mixture_dist.iter().zip(&alone) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn degenerate_gate_selects_one_expert() {
    let expert = |bias: [f64; 2]| {
        MlpParams::from_layers(vec![LayerParams {
            inputs: 1,
            outputs: 2,
            weights: vec![0.0; 2],
            biases: bias.to_vec(),
        }])
        .unwrap()
    };
    let gate = MlpParams::from_layers(vec![LayerParams {
        inputs: 2,
        outputs: 2,
        weights: vec![0.0; 4],
        biases: vec![0.0, 800.0],
    }])
    .unwrap();
    let params = MovParams::new(Gate::Learned(gate), vec![expert([2.0, -1.0]), expert([-3.0, 1.0])]).unwrap();
    let p = mov::forward(&params, &[vec![0.3], vec![-0.2]], None).unwrap();
    let second = nn::softmax(&[-3.0, 1.0]).unwrap();
    assert_eq!(p.gate_weights, vec![0.0, 1.0]);
    for (a, b) in p.mixture_dist.iter().zip(&second) {
        assert!((a - b).abs() < 1e-15);
    }
    // the log-space likelihood stays finite with a saturated gate
    let sample = mov_core::MultiViewSample::new("a", vec![vec![0.3], vec![-0.2]], 0);
    let ll = mov::log_likelihood(&params, &[sample]).unwrap();
    assert!((ll - second[0].ln()).abs() < 1e-12);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let params = arch(vec![2, 3], 2).init(0).unwrap();
    assert!(mov::forward(&params, &[vec![0.0; 2]], None).is_err());
    assert!(mov::forward(&params, &[vec![0.0; 2], vec![0.0; 2]], None).is_err());
    assert!(mov::forward(&params, &[vec![0.0; 2], vec![f64::NAN; 3]], None).is_err());
}
