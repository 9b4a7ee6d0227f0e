use super::*;
use crate::autograd::Tape;

fn small(mode: SharingMode, seed: u64) -> EncoderParams {
    init_params(EncoderDims::new(8, 1, 2, 20), mode, seed).unwrap()
}

/// Position-dependent shift; a constant one would vanish after layer norm.
fn perturb(m: &mut Matrix) {
    for (i, x) in m.iter_mut().enumerate() {
        *x += (i as f64 * 1.3).sin() * 0.5;
    }
}

fn norm(e: &Embedding) -> f64 {
    e.dot(e).sqrt()
}

#[test]
fn init_is_seed_deterministic() {
    let a = small(SharingMode::PartialSharing, 7);
    assert_eq!(a, small(SharingMode::PartialSharing, 7));
    assert_ne!(a, small(SharingMode::PartialSharing, 8));
}

#[test]
fn init_distribution() {
    let p = init_params(EncoderDims::new(64, 2, 4, 200), SharingMode::PartialSharing, 42).unwrap();
    let draws: Vec<f64> = p
        .weight_tensors()
        .into_iter()
        .flat_map(|i| p.tensors[i].iter().copied().collect::<Vec<_>>())
        .take(100_000)
        .collect();
    assert_eq!(draws.len(), 100_000);
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let std = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() <= 0.001, "mean {mean}");
    assert!((std - 0.02).abs() <= 0.002, "std {std}");
}

#[test]
fn invalid_dims() {
    assert!(matches!(
        init_params(EncoderDims::new(6, 2, 4, 10), SharingMode::PartialSharing, 1),
        Err(Error::Domain(_))
    ));
    assert!(init_params(EncoderDims::new(8, 0, 2, 10), SharingMode::PartialSharing, 1).is_err());
}

#[test]
fn outputs_unit_norm_and_deterministic() {
    for mode in SharingMode::ALL {
        let p = small(mode, 3);
        for modality in [Modality::Code, Modality::Text] {
            let a = p.encode(modality, &[2, 5, 6, 3]).unwrap();
            assert!((norm(&a) - 1.0).abs() < 1e-6);
            assert_eq!(a, p.encode(modality, &[2, 5, 6, 3]).unwrap());
        }
    }
}

#[test]
fn rejects_padding_and_out_of_range() {
    let p = small(SharingMode::PartialSharing, 1);
    assert!(p.encode(Modality::Code, &[]).is_err());
    assert!(p.encode(Modality::Code, &[PAD, PAD]).is_err());
    assert!(p.encode(Modality::Code, &[2, 99]).is_err());
}

#[test]
fn non_sharing_text_table_does_not_affect_code() {
    let mut p = small(SharingMode::NonSharing, 5);
    let before = p.encode(Modality::Code, &[2, 7, 8, 3]).unwrap();
    let t = p.embedding_table(Modality::Text);
    assert_ne!(t, p.embedding_table(Modality::Code));
    let mut rows: Vec<_> = p.tensors[t].rows().into_iter().map(|r| r.to_owned()).collect();
    rows.reverse();
    for (i, r) in rows.into_iter().enumerate() {
        p.tensors[t].row_mut(i).assign(&r);
    }
    assert_eq!(before, p.encode(Modality::Code, &[2, 7, 8, 3]).unwrap());
    // the core is private to each tower too
    let core = p.core_tensors(Modality::Text)[0];
    p.tensors[core] *= 3.0;
    assert_eq!(before, p.encode(Modality::Code, &[2, 7, 8, 3]).unwrap());
}

#[test]
fn full_sharing_towers_agree() {
    let p = small(SharingMode::FullSharing, 5);
    let ids = [2, 4, 9, 3];
    assert_eq!(encode_text(&ids, &p).unwrap(), encode_code(&ids, &p).unwrap());
}

#[test]
fn partial_sharing_aliases_core_only() {
    let mut p = small(SharingMode::PartialSharing, 5);
    assert_eq!(p.core_tensors(Modality::Code), p.core_tensors(Modality::Text));
    assert_ne!(p.embedding_table(Modality::Code), p.embedding_table(Modality::Text));
    assert_ne!(p.projection(Modality::Code), p.projection(Modality::Text));
    let ids = [2, 4, 9, 3];
    let (c0, t0) = (encode_code(&ids, &p).unwrap(), encode_text(&ids, &p).unwrap());
    let wq = p.core_tensors(Modality::Code)[5];
    perturb(&mut p.tensors[wq]);
    assert_ne!(c0, encode_code(&ids, &p).unwrap());
    assert_ne!(t0, encode_text(&ids, &p).unwrap());
}

#[test]
fn sharing_visibility_by_mode() {
    for mode in SharingMode::ALL {
        let mut p = small(mode, 11);
        let ids = [2, 4, 9, 3];
        let t0 = encode_text(&ids, &p).unwrap();
        let first_core = p.core_tensors(Modality::Code)[5];
        perturb(&mut p.tensors[first_core]);
        let changed = t0 != encode_text(&ids, &p).unwrap();
        let shared = mode != SharingMode::NonSharing;
        assert_eq!(changed, shared, "{mode}");
    }
}

#[test]
fn single_tower_uses_code_tokenizer() {
    let p = small(SharingMode::SingleTower, 1);
    assert_eq!(p.tokenizer_modality(Modality::Text), Modality::Code);
    let p = small(SharingMode::PartialSharing, 1);
    assert_eq!(p.tokenizer_modality(Modality::Text), Modality::Text);
}

#[test]
fn parameter_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("enc.bin");
    let vocab = Vocabulary::build([("def f(x): return x", Modality::Code), ("fix f", Modality::Text)]);
    let params = init_params(EncoderDims::new(8, 1, 2, vocab.len()), SharingMode::NonSharing, 9).unwrap();
    let model = Model { params, vocab };
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.digest(), model.digest());
    assert_eq!(model.digest().len(), 64);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Format(_))));
}

#[test]
fn encoder_gradient_matches_finite_differences() {
    let p = small(SharingMode::PartialSharing, 13);
    let ids = [2, 5, 6, 7, 3];
    let target = Matrix::from_shape_fn((1, 8), |(_, j)| (j as f64 * 0.7).sin());
    let loss = |params: &EncoderParams| -> (f64, crate::autograd::Grads) {
        let mut t = Tape::new(&params.tensors);
        let h = params.forward(&mut t, Modality::Text, &ids).unwrap();
        let tv = t.input(target.clone());
        let prod = t.mul(h, tv);
        let s = t.sum(prod);
        let g = t.backward(s);
        (t.scalar(s), g)
    };
    let (_, grads) = loss(&p);
    let eps = 1e-5;
    let mut checked = 0;
    for ti in [p.embedding_table(Modality::Text), p.core_tensors(Modality::Text)[5], p.projection(Modality::Text)] {
        for idx in [0usize, 7, 13, 40] {
            let (r, c) = (idx / p.tensors[ti].ncols(), idx % p.tensors[ti].ncols());
            if r >= p.tensors[ti].nrows() {
                continue;
            }
            let mut plus = p.clone();
            plus.tensors[ti][[r, c]] += eps;
            let mut minus = p.clone();
            minus.tensors[ti][[r, c]] -= eps;
            let fd = (loss(&plus).0 - loss(&minus).0) / (2.0 * eps);
            let an = grads.get(ti).map_or(0.0, |g| g[[r, c]]);
            assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "tensor {ti} [{r},{c}]: {fd} vs {an}");
            checked += 1;
        }
    }
    assert!(checked >= 8);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn every_mode_outputs_unit_norm(mode in 0usize..4, seed in 0u64..1000, ids in proptest::collection::vec(1usize..20, 1..30), text in any::<bool>()) {
            let p = small(SharingMode::ALL[mode], seed);
            let modality = if text { Modality::Text } else { Modality::Code };
            let e = p.encode(modality, &ids).unwrap();
            prop_assert!((norm(&e) - 1.0).abs() < 1e-6);
        }
    }
}
