use std::f64::consts::PI;

use proptest::collection::vec;
use proptest::prelude::*;

use lsoftmax::angular::{cos_multiple, psi, segment_of, Margin};
use lsoftmax::data::{self, Dataset, IDX_LABELS_MAGIC};
use lsoftmax::loss::{self, ClassifierParams, FeatureBatch, LambdaSchedule};
use lsoftmax::metrics;
use lsoftmax::model::Model;
use lsoftmax::nn::{LayerSpec, NetworkSpec};
use lsoftmax::optim::{self, TrainConfig, TrainState};
use lsoftmax::{params_io, Tensor};

/// T_m(c) by the three-term recurrence.
fn chebyshev(c: f64, m: u32) -> f64 {
    let (mut prev, mut cur) = (1.0, c);
    if m == 0 {
        return prev;
    }
    for _ in 1..m {
        (prev, cur) = (cur, 2.0 * c * cur - prev);
    }
    cur
}

/// Random `(features, weights, labels)` with N samples, D dims, K classes.
fn batch() -> impl Strategy<Value = (Tensor, Tensor, Vec<usize>)> {
    (1usize..6, 1usize..5, 2usize..5).prop_flat_map(|(n, d, k)| {
        (
            vec(-3.0f64..3.0, n * d),
            vec(-3.0f64..3.0, k * d),
            vec(0..k, n),
        )
            .prop_map(move |(x, w, y)| {
                (
                    Tensor::from_vec(&[n, d], x).unwrap(),
                    Tensor::from_vec(&[k, d], w).unwrap(),
                    y,
                )
            })
    })
}

fn loss_of(x: &Tensor, w: &Tensor, y: &[usize], m: u32, lambda: f64) -> Option<f64> {
    let params = ClassifierParams::new(w.clone()).ok()?;
    let batch = FeatureBatch::new(x, y).ok()?;
    loss::forward(batch, &params, Margin::new(m).unwrap(), lambda).ok().map(|r| r.loss)
}

proptest! {
    #[test]
    fn expansion_matches_recurrence(c in -1.0f64..=1.0, m in 1u32..=6) {
        let got = cos_multiple(c, Margin::new(m).unwrap());
        prop_assert!((got - chebyshev(c, m)).abs() <= 1e-12);
    }

    #[test]
    fn psi_nonincreasing_in_angle(a in 0.0f64..=PI, b in 0.0f64..=PI, m in 1u32..=6) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mg = Margin::new(m).unwrap();
        prop_assert!(psi(lo.cos(), mg) >= psi(hi.cos(), mg) - 1e-12);
    }

    #[test]
    fn psi_range_and_segment(c in -1.0f64..=1.0, m in 1u32..=6) {
        let mg = Margin::new(m).unwrap();
        let v = psi(c, mg);
        prop_assert!(v <= 1.0 + 1e-12 && v >= 1.0 - 2.0 * m as f64 - 1e-12);
        let scaled = c.acos() * m as f64 / PI;
        if (scaled - scaled.round()).abs() > 1e-9 {
            prop_assert_eq!(segment_of(c, mg), (scaled.floor() as u32).min(m - 1));
        }
    }

    #[test]
    fn loss_nonnegative_and_nonincreasing_in_lambda(
        (x, w, y) in batch(), m in 1u32..=4, l1 in 0.0f64..50.0, dl in 0.0f64..50.0,
    ) {
        if let (Some(a), Some(b)) = (loss_of(&x, &w, &y, m, l1), loss_of(&x, &w, &y, m, l1 + dl)) {
            prop_assert!(a >= 0.0 && b >= 0.0);
            prop_assert!(b <= a + 1e-12, "lambda {} -> {}: {} -> {}", l1, l1 + dl, a, b);
        }
    }

    #[test]
    fn margin_never_lowers_loss((x, w, y) in batch(), m in 2u32..=4) {
        if let (Some(plain), Some(margin)) = (loss_of(&x, &w, &y, 1, 0.0), loss_of(&x, &w, &y, m, 0.0)) {
            prop_assert!(margin >= plain - 1e-12);
        }
    }

    #[test]
    fn softmax_margin_ignores_lambda((x, w, y) in batch(), lambda in 0.0f64..1e6) {
        if let (Some(a), Some(b)) = (loss_of(&x, &w, &y, 1, 0.0), loss_of(&x, &w, &y, 1, lambda)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn lambda_schedule_decays_to_floor(
        initial in 0.0f64..1e4, min in 0.0f64..10.0, gamma in 0.01f64..=1.0, window in 1usize..200,
        t in 0usize..10_000, dt in 0usize..10_000,
    ) {
        let s = LambdaSchedule::new(initial, min, gamma, window).unwrap();
        prop_assert!(s.at(t) >= min);
        prop_assert!(s.at(t + dt) <= s.at(t));
        prop_assert_eq!(s.at(0), initial.max(min));
        prop_assert_eq!(loss::lambda_at(&s, t).to_bits(), s.at(t).to_bits());
    }

    #[test]
    fn lr_staircase_nonincreasing(drops in vec(0usize..1000, 0..4), t in 0usize..1000, dt in 0usize..1000) {
        let mut drops = drops;
        drops.sort_unstable();
        let cfg = TrainConfig { learning_rate: 0.1, lr_drop_iterations: drops, ..TrainConfig::default() };
        prop_assert!(optim::lr_at(&cfg, t + dt) <= optim::lr_at(&cfg, t));
    }

    #[test]
    fn idx_labels_round_trip(payload in vec(any::<u8>(), 0..300)) {
        let mut bytes = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        bytes.extend((payload.len() as u32).to_be_bytes());
        bytes.extend(&payload);
        let idx = data::parse_idx(&bytes).unwrap();
        prop_assert_eq!(idx.to_bytes(), bytes);
        prop_assert_eq!(idx.labels().unwrap(), payload.iter().map(|&b| b as usize).collect::<Vec<_>>());
    }

    #[test]
    fn idx_rejects_truncation(payload in vec(any::<u8>(), 1..100), cut in 1usize..100) {
        let mut bytes = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        bytes.extend((payload.len() as u32).to_be_bytes());
        bytes.extend(&payload);
        let keep = bytes.len() - cut.min(payload.len());
        prop_assert!(data::parse_idx(&bytes[..keep]).is_err());
    }

    #[test]
    fn params_round_trip_bit_exact(shapes in vec(vec(1usize..4, 1..4), 1..4), seed in any::<u64>()) {
        let mut bits = seed;
        let tensors: Vec<Tensor> = shapes
            .iter()
            .map(|s| {
                let n = s.iter().product();
                let data = (0..n)
                    .map(|_| {
                        bits = bits.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        f64::from_bits(bits)
                    })
                    .collect();
                Tensor::from_vec(s, data).unwrap()
            })
            .collect();
        let refs: Vec<&Tensor> = tensors.iter().collect();
        let back = params_io::decode(&params_io::encode(&refs)).unwrap();
        prop_assert_eq!(back.len(), tensors.len());
        for (a, b) in tensors.iter().zip(&back) {
            prop_assert_eq!(a.shape(), b.shape());
            let same = a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
            prop_assert!(same);
        }
    }

    #[test]
    fn features_csv_round_trip(rows in vec((vec(-1e6f64..1e6, 3), 0usize..10), 1..20)) {
        let feats = Tensor::from_rows(&rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>()).unwrap();
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let mut buf = Vec::new();
        metrics::write_features_csv(&mut buf, &feats, &labels).unwrap();
        let (f2, l2) = metrics::read_features_csv(&buf[..]).unwrap();
        prop_assert_eq!(f2, feats);
        prop_assert_eq!(l2, labels);
    }

    #[test]
    fn split_is_a_partition(n in 3usize..200, seed in any::<u64>(), a in 0.2f64..0.8) {
        let inputs = Tensor::from_vec(&[n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        let ds = Dataset::new(inputs, vec![0; n], 1).unwrap();
        let rest = 1.0 - a;
        if let Ok(s) = data::split(&ds, [a, rest / 2.0, rest / 2.0], seed) {
            let mut seen: Vec<usize> = [&s.train, &s.val, &s.test]
                .iter()
                .flat_map(|d| d.inputs.data().iter().map(|&v| v as usize))
                .collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn verification_beats_constant_guess(pairs in vec((vec(-1.0f64..1.0, 2), vec(-1.0f64..1.0, 2), any::<bool>()), 1..40)) {
        let a = Tensor::from_rows(&pairs.iter().map(|p| p.0.clone()).collect::<Vec<_>>()).unwrap();
        let b = Tensor::from_rows(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>()).unwrap();
        let same: Vec<bool> = pairs.iter().map(|p| p.2).collect();
        if let Ok(r) = metrics::verify_pairs(&a, &b, &same, &metrics::threshold_grid(101)) {
            let frac_same = same.iter().filter(|&&s| s).count() as f64 / same.len() as f64;
            prop_assert!(r.best_accuracy >= frac_same - 1e-12);
            prop_assert!(r.best_accuracy <= 1.0);
        }
    }

    #[test]
    fn sgd_without_gradient_or_decay_is_identity(seed in any::<u64>()) {
        let spec = NetworkSpec::new(vec![3], vec![LayerSpec::Dense { inputs: 3, outputs: 2 }, LayerSpec::Prelu { channels: 2 }]).unwrap();
        let model = Model::init(spec, 3, seed).unwrap();
        let grads: Vec<Tensor> = model.tensors().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        let mut state = TrainState::new(model.clone());
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        optim::sgd_step(&mut state, &grads, &cfg).unwrap();
        prop_assert_eq!(state.model, model);
    }
}
