use sentstruct_core::counterfactual::CfConfig;
use sentstruct_core::data::{synth_corpus, Corpus, SynthConfig};
use sentstruct_core::encoder::{init_params, HyperParams};
use sentstruct_core::train::{train, train_from, TrainConfig};
use sentstruct_core::Error;

fn hyper() -> HyperParams {
    let mut h = HyperParams::with_dim(16);
    h.max_sentences = 8;
    h.n_layers = 1;
    h.n_heads = 2;
    h.mlp_hidden = 16;
    h
}

fn corpus(n: usize, seed: u64) -> Corpus {
    synth_corpus(&SynthConfig::new(n, 16, 8, 0.8, 0.2, seed)).unwrap()
}

fn bits(p: &sentstruct_core::encoder::ModelParams<f32>) -> Vec<u32> {
    p.tensors().iter().flat_map(|t| t.as_slice().iter().map(|v| v.to_bits())).collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let h = hyper();
    let c = corpus(48, 1);
    let mut cfg = TrainConfig { seed: 4, ..Default::default() };
    cfg.adam.lr = 0.0;
    let start = init_params::<f32>(&h, 4).unwrap();
    let (end, hist) = train_from(start.clone(), &c, None, &h, &cfg, |_| {}).unwrap();
    assert_eq!(bits(&start), bits(&end));
    assert_eq!(hist.steps.len(), 2 * 3);
}

#[test]
fn zero_cf_weights_reduce_to_plain_bce_bit_for_bit() {
    let h = hyper();
    let c = corpus(64, 2);
    let plain = TrainConfig { cf_enabled: false, seed: 7, ..Default::default() };
    let zero = TrainConfig {
        cf_enabled: true,
        cf: CfConfig { nie_weight: 0.0, de_weight: 0.0, ..Default::default() },
        ..plain.clone()
    };
    let (pa, ha) = train(&c, None, &h, &plain).unwrap();
    let (pb, hb) = train(&c, None, &h, &zero).unwrap();
    assert_eq!(ha.steps.len(), hb.steps.len());
    for (a, b) in ha.steps.iter().zip(&hb.steps) {
        assert_eq!(a.loss.to_bits(), b.loss.to_bits(), "step {}", a.step);
        assert_eq!(b.loss.to_bits(), b.bce.to_bits());
        assert_eq!(a.grad_norm.to_bits(), b.grad_norm.to_bits());
    }
    assert_eq!(bits(&pa), bits(&pb));
}

#[test]
fn clipped_norm_never_exceeds_the_bound() {
    let h = hyper();
    let c = corpus(64, 3);
    for clip in [1e-3, 0.05, 1.0] {
        let mut cfg = TrainConfig { grad_clip_norm: clip, seed: 1, ..Default::default() };
        cfg.adam.lr = 1e-3;
        let (_, hist) = train(&c, None, &h, &cfg).unwrap();
        for s in &hist.steps {
            assert!(s.clipped_norm <= clip + 1e-6, "{} > {clip}", s.clipped_norm);
            assert!(s.clipped_norm <= s.grad_norm + 1e-6);
        }
        if clip == 1e-3 {
            assert!(hist.steps.iter().any(|s| s.grad_norm > clip));
        }
    }
}

#[test]
fn second_epoch_loss_is_lower_on_separable_data() {
    let h = hyper();
    let c = corpus(400, 5);
    let mut cfg = TrainConfig { cf_enabled: false, seed: 2, ..Default::default() };
    cfg.adam.lr = 3e-4;
    let (_, hist) = train(&c, None, &h, &cfg).unwrap();
    assert!(hist.epochs[1].mean_loss < hist.epochs[0].mean_loss, "{:?}", hist.epochs);
}

#[test]
fn training_is_deterministic_under_a_seed() {
    let h = hyper();
    let c = corpus(48, 6);
    let val = corpus(16, 60);
    let cfg = TrainConfig { seed: 9, ..Default::default() };
    let (pa, ha) = train(&c, Some(&val), &h, &cfg).unwrap();
    let (pb, hb) = train(&c, Some(&val), &h, &cfg).unwrap();
    assert_eq!(bits(&pa), bits(&pb));
    assert_eq!(ha, hb);
    assert!(ha.epochs[0].val.is_some());
    let (pc, _) = train(&c, None, &h, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(bits(&pa), bits(&pc));
}

#[test]
fn bad_configs_rejected() {
    let h = hyper();
    let c = corpus(16, 1);
    let cases = [
        TrainConfig { epochs: 0, ..Default::default() },
        TrainConfig { batch_size: 0, ..Default::default() },
        TrainConfig { grad_clip_norm: 0.0, ..Default::default() },
        TrainConfig { cf: CfConfig { samples: 0, ..Default::default() }, ..Default::default() },
    ];
    for cfg in cases {
        assert!(matches!(train(&c, None, &h, &cfg), Err(Error::BadConfig(_))), "{cfg:?}");
    }
    let mut neg = TrainConfig::default();
    neg.adam.lr = -1e-3;
    assert!(matches!(train(&c, None, &h, &neg), Err(Error::BadConfig(_))));
    let mut wrong_dim = hyper();
    wrong_dim.dim = 8;
    assert!(matches!(train(&c, None, &wrong_dim, &TrainConfig::default()), Err(Error::BadConfig(_))));
}

#[test]
fn several_counterfactual_samples_per_example() {
    let h = hyper();
    let c = corpus(32, 8);
    let cfg = TrainConfig { cf: CfConfig { samples: 3, ..Default::default() }, seed: 3, ..Default::default() };
    let (p, hist) = train(&c, None, &h, &cfg).unwrap();
    assert!(p.all_finite());
    assert!(hist.steps.iter().all(|s| s.nie > 0.0 && s.de > 0.0 && s.loss.is_finite()));
}

#[test]
fn missing_partners_are_counted_and_drop_the_direct_effect() {
    let h = hyper();
    let mut c = corpus(8, 2);
    for d in &mut c.docs {
        d.group_id = 0;
    }
    let cfg = TrainConfig { batch_size: 4, epochs: 1, seed: 1, ..Default::default() };
    let (_, hist) = train(&c, None, &h, &cfg).unwrap();
    assert_eq!(hist.no_partner, 8);
    assert!(hist.steps.iter().all(|s| s.de == 0.0 && s.nie > 0.0));
}
