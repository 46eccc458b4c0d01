mod oracles;

use mfrnet::network::NUM_MFRB;
use mfrnet::{MfrNet, NetworkConfig, Tensor};

fn seeded_model(seed: u64) -> MfrNet<f32> {
    let probe = oracles::random_input(seed, 24, 24);
    oracles::test_model(seed, &probe).cast()
}

#[test]
fn forward_matches_straight_line_oracle() {
    for seed in 0..3 {
        let model = seeded_model(seed);
        let input = oracles::random_input(100 + seed, 20, 17).cast::<f32>();
        let got = model.forward(&input).unwrap();
        let want = oracles::forward(&model, &input);
        let got: Vec<f64> = got.data().iter().map(|&v| v as f64).collect();
        let err = oracles::rel_err(&got, &want.v);
        assert!(err < 1e-5, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn double_precision_forward_agrees_to_rounding() {
    let probe = oracles::random_input(7, 16, 16);
    let model = oracles::test_model(7, &probe);
    let input = oracles::random_input(8, 12, 13);
    let got = model.forward(&input).unwrap();
    let err = oracles::rel_err(got.data(), &oracles::forward(&model, &input).v);
    assert!(err < 1e-12, "{err:e}");
}

#[test]
fn structure_counts() {
    for cfg in [NetworkConfig::tiny(), NetworkConfig::paper_scale()] {
        let model = MfrNet::<f32>::zeros(cfg).unwrap();
        let s = model.structure();
        assert_eq!((s.mfrbs, s.frbs, s.cascade_edges), (NUM_MFRB, 12, 10));
        assert_eq!((s.side_inputs, s.side_outputs, s.side_edges), (11, 11, 11));
        assert!(!s.first_frb_has_side_input && !s.last_frb_has_side_output);

        // The same counts read off the layer manifest alone.
        let specs = model.specs();
        let fuses: Vec<_> = specs.iter().filter(|l| l.name.ends_with(".fuse")).collect();
        assert_eq!(fuses.len(), 12);
        let hdf = 4 * cfg.growth;
        let with_side: Vec<&str> = fuses
            .iter()
            .filter(|l| l.in_channels == hdf + cfg.side_channels)
            .map(|l| l.name.as_str())
            .collect();
        assert_eq!(with_side.len(), 11);
        assert!(!with_side.contains(&"b1.f1.fuse"));
        let sides: Vec<&str> = specs.iter().filter(|l| l.name.ends_with(".side")).map(|l| l.name.as_str()).collect();
        assert_eq!(sides.len(), 11);
        assert!(!sides.contains(&"b4.f3.side"));
        let cascade: usize = specs
            .iter()
            .filter(|l| l.name.starts_with("cascade."))
            .map(|l| l.in_channels / cfg.base_channels - 1)
            .sum();
        assert_eq!(cascade, 10);
    }
}

#[test]
fn output_keeps_spatial_size() {
    let model = seeded_model(3);
    for (h, w) in [(16, 16), (16, 37), (41, 16), (9, 128)] {
        let input = Tensor::<f32>::full([1, 3, h, w], 0.5);
        assert_eq!(model.forward(&input).unwrap().shape(), [1, 3, h, w]);
    }
}

#[test]
fn zero_weights_are_identity() {
    let model = MfrNet::<f32>::zeros(NetworkConfig::tiny()).unwrap();
    let input = oracles::random_input(5, 19, 23).cast::<f32>();
    assert_eq!(model.forward(&input).unwrap().data(), input.data());
}

#[test]
fn sampled_gradients_match_finite_differences() {
    let probe = oracles::random_input(11, 6, 6);
    let model = oracles::test_model(11, &probe);
    let input = oracles::random_input(12, 4, 5);
    let weights = oracles::random_input(13, 4, 5).map(|v| 2.0 * v - 1.0);
    // Every layer's biases plus a spread of weights.
    let report = oracles::grad_check(&model, &input, &weights, |l, i| {
        let n = model.layers()[l].weight.len();
        i >= n || (i * 7919 + l) % 97 == 0
    });
    assert!(report.checked > 2000, "only {} parameters checked", report.checked);
    assert!(report.failures.is_empty(), "{:#?}", &report.failures[..report.failures.len().min(10)]);
}
