use super::*;
use ndarray::array;

const SIGMOID_ONE: f64 = 0.7310585786300049;

#[test]
fn margin_values() {
    let q = array![1.0, 0.0];
    assert_eq!(edge_aware_margin(&q, &array![0.0, 1.0], 0.2, 0.5), 0.45);
    let m1 = edge_aware_margin(&q, &q, 0.2, 0.5);
    assert!((m1 - (0.2 + 0.5 * SIGMOID_ONE)).abs() < 1e-15);
    assert!((m1 - 0.565529).abs() < 1e-5);
    let far = edge_aware_margin(&array![1.0], &array![-1e3], 0.2, 0.5);
    assert!((far - 0.2).abs() < 1e-12);
}

#[test]
fn loss_values() {
    let q = array![1.0, 0.0];
    let other = array![0.0, 1.0];
    assert_eq!(hinge_loss(&q, &q, std::slice::from_ref(&other), 0.2, 0.5).unwrap(), 0.0);
    let full = 0.2 + 0.5 * SIGMOID_ONE;
    let same = hinge_loss(&q, &q, std::slice::from_ref(&q), 0.2, 0.5).unwrap();
    assert!((same - full).abs() < 1e-15);
    assert!((same - 0.5655).abs() < 1e-4);
    let two = hinge_loss(&q, &q, &[other, q.clone()], 0.2, 0.5).unwrap();
    assert!((two - full / 2.0).abs() < 1e-15);
    assert!((two - 0.2828).abs() < 1e-4);
    assert!(hinge_loss(&q, &q, &[], 0.2, 0.5).is_err());
}

fn seq(id: &str, tokens: &[usize]) -> Sequence {
    Sequence { id: id.into(), tokens: tokens.to_vec() }
}

#[test]
fn triplet_validation() {
    let p = init_params(EncoderDims::new(8, 1, 2, 12), SharingMode::PartialSharing, 1).unwrap();
    let t = Triplet { query: seq("q", &[2, 4, 3]), positive: seq("a", &[2, 5, 3]), negatives: vec![] };
    assert!(matches!(triplet_loss(&t, &p, 0.2, 0.5), Err(Error::Domain(_))));
    let t = Triplet { negatives: vec![seq("a", &[2, 6, 3])], ..t };
    assert!(triplet_loss(&t, &p, 0.2, 0.5).is_err());
    let t = Triplet { negatives: vec![seq("b", &[2, 6, 3])], ..t };
    assert!(triplet_loss(&t, &p, 0.2, 0.5).unwrap() >= 0.0);
}

fn unit_vec(v: &[f64]) -> Embedding {
    let e = Embedding::from(v.to_vec());
    let n = e.dot(&e).sqrt();
    e / n
}

#[test]
fn mining_prefers_token_duplicate() {
    let q = unit_vec(&[1.0, 0.2, 0.0]);
    let gold_tokens: BTreeSet<usize> = [4, 5, 6].into();
    let dup_tokens = gold_tokens.clone();
    let other_tokens: BTreeSet<usize> = [7, 8].into();
    let (e_dup, e_a, e_b) = (unit_vec(&[1.0, 0.2, 0.0]), unit_vec(&[0.9, 0.3, 0.1]), unit_vec(&[0.0, 1.0, 0.0]));
    let pool = [
        Candidate { id: "a", embedding: &e_a, tokens: &other_tokens },
        Candidate { id: "dup", embedding: &e_dup, tokens: &dup_tokens },
        Candidate { id: "b", embedding: &e_b, tokens: &other_tokens },
        Candidate { id: "gold", embedding: &e_dup, tokens: &dup_tokens },
    ];
    let gold: BTreeSet<&str> = ["gold"].into();
    let got = mine_hard_negatives(&q, &gold_tokens, &gold, &pool, 5);
    assert_eq!(got, ["dup", "a", "b"]);
    assert_eq!(mine_hard_negatives(&q, &gold_tokens, &gold, &pool, 1), ["dup"]);
}

#[test]
fn mining_exhausts_small_batches_and_breaks_ties_by_id() {
    let e = unit_vec(&[1.0, 0.0]);
    let t: BTreeSet<usize> = [1].into();
    let pool = [Candidate { id: "g", embedding: &e, tokens: &t }, Candidate { id: "n", embedding: &e, tokens: &t }];
    let gold: BTreeSet<&str> = ["g"].into();
    assert_eq!(mine_hard_negatives(&e, &t, &gold, &pool, 5), ["n"]);
    let pool = [
        Candidate { id: "z", embedding: &e, tokens: &t },
        Candidate { id: "m", embedding: &e, tokens: &t },
        Candidate { id: "x", embedding: &e, tokens: &t },
    ];
    assert_eq!(mine_hard_negatives(&e, &t, &BTreeSet::new(), &pool, 2), ["m", "x"]);
}

#[test]
fn jaccard_oracle() {
    let a: BTreeSet<usize> = [1, 2, 3].into();
    let b: BTreeSet<usize> = [2, 3, 4, 5].into();
    assert_eq!(jaccard(&a, &b), 2.0 / 5.0);
    assert_eq!(jaccard(&BTreeSet::new(), &BTreeSet::new()), 0.0);
}

fn small_config() -> TrainConfig {
    TrainConfig {
        d: 16,
        layers: 1,
        heads: 2,
        epochs: 3,
        batch_size: 8,
        lr: 0.5,
        disc_steps: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_keeps_init() {
    let corpus = crate::synthetic::corpus(16, 3).unwrap();
    let cfg = TrainConfig { lr: 0.0, ..small_config() };
    let out = train(&corpus, &cfg).unwrap();
    let vocab = build_vocabulary(&corpus, cfg.mode);
    let init = init_params(
        EncoderDims::new(cfg.d, cfg.layers, cfg.heads, vocab.len()),
        cfg.mode,
        crate::derive_seed(cfg.seed, "encoder-init"),
    )
    .unwrap();
    assert_eq!(out.model.params, init);
    assert_eq!(out.loss_trace.len(), 3);
}

#[test]
fn training_is_deterministic_and_freeze_holds() {
    let corpus = crate::synthetic::corpus(16, 3).unwrap();
    let cfg = small_config();
    let a = train(&corpus, &cfg).unwrap();
    let b = train(&corpus, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.discriminator.is_some());

    let frozen = train(&corpus, &TrainConfig { freeze_token_embeddings: true, ..cfg }).unwrap();
    let init = train(&corpus, &TrainConfig { lr: 0.0, ..cfg }).unwrap();
    for &t in frozen.model.params.token_tables() {
        assert_eq!(frozen.model.params.tensors[t], init.model.params.tensors[t]);
    }
    assert_ne!(frozen.model.params, init.model.params);
}

#[test]
fn too_small_corpus_and_bad_config() {
    let corpus = crate::synthetic::corpus(4, 3).unwrap();
    assert!(train(&corpus, &small_config()).is_err());
    assert!(TrainConfig { k_negatives: 0, ..small_config() }.validate().is_err());
    assert!(TrainConfig { alpha0: -0.1, ..small_config() }.validate().is_err());
}

#[test]
fn loss_trace_format() {
    assert_eq!(loss_trace_csv(&[0.5, 0.25]), "epoch,mean_loss\n1,0.500000000\n2,0.250000000\n");
}

fn random_triplets(n: usize, vocab: usize, seed: u64) -> Vec<Triplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = |id: String, rng: &mut ChaCha8Rng| {
        let len = rng.random_range(3..8);
        let mut t = vec![BOS];
        t.extend((0..len).map(|_| rng.random_range(4..vocab)));
        t.push(EOS);
        seq(&id, &t)
    };
    (0..n)
        .map(|i| Triplet {
            query: s(format!("q{i}"), &mut rng),
            positive: s(format!("p{i}"), &mut rng),
            negatives: (0..3).map(|j| s(format!("n{i}-{j}"), &mut rng)).collect(),
        })
        .collect()
}

#[test]
fn gradients_match_finite_differences() {
    let p = init_params(EncoderDims::new(8, 1, 2, 30), SharingMode::PartialSharing, 5).unwrap();
    let triplets = random_triplets(6, 30, 1);
    let report = grad_check(&p, &triplets, 1e-4, 0.2, 0.5, 2, 3).unwrap();
    assert!(report.coordinates_checked > 20);
    assert!(report.max_rel_err < 1e-4, "{report:?}");
    assert!(report.worst.is_some());
}

#[test]
fn clamped_hinge_has_zero_gradient() {
    // a margin of -10 keeps every hinge argument below -6
    let p = init_params(EncoderDims::new(8, 1, 2, 30), SharingMode::PartialSharing, 5).unwrap();
    let triplets = random_triplets(3, 30, 2);
    let report = grad_check(&p, &triplets, 1e-4, -10.0, 0.0, 1, 3).unwrap();
    assert!(report.coordinates_checked > 10);
    assert_eq!(report.max_rel_err, 0.0);
    let w = report.worst.unwrap();
    assert_eq!((w.analytic, w.numeric), (0.0, 0.0));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn unit_strategy(d: usize) -> impl Strategy<Value = Embedding> {
        proptest::collection::vec(-1.0f64..1.0, d)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
            .prop_map(|v| unit_vec(&v))
    }

    proptest! {
        #[test]
        fn loss_non_negative(q in unit_strategy(4), p in unit_strategy(4), negs in proptest::collection::vec(unit_strategy(4), 1..6)) {
            prop_assert!(hinge_loss(&q, &p, &negs, 0.2, 0.5).unwrap() >= 0.0);
        }

        #[test]
        fn inactive_when_negatives_are_far(q in unit_strategy(4), jitter in unit_strategy(4), negs in proptest::collection::vec(unit_strategy(4), 1..12)) {
            let p = unit_vec((&q + &(jitter * 0.1)).as_slice().unwrap());
            let dp = sq_dist(&q, &p);
            let negs: Vec<Embedding> = negs.into_iter().filter(|n| sq_dist(&q, n) - dp >= 0.7).collect();
            prop_assume!(!negs.is_empty());
            prop_assert_eq!(hinge_loss(&q, &p, &negs, 0.2, 0.5).unwrap(), 0.0);
        }

        #[test]
        fn margin_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let q = array![1.0];
            prop_assert!(edge_aware_margin(&q, &array![lo], 0.2, 0.5) <= edge_aware_margin(&q, &array![hi], 0.2, 0.5));
        }
    }
}
