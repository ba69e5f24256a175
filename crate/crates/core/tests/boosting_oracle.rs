use monofcw::detector::{train_features, TrainConfig, WindowModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Stump {
    feature: usize,
    threshold: f64,
    error: f64,
    left: f64,
    right: f64,
}

/// All (feature, midpoint) splits, majority-vote leaves (ties vote -1),
/// first strict minimum kept.
fn brute_force(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Stump {
    let mut best: Option<Stump> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = x.iter().map(|s| s[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let t = pair[0] + 0.5 * (pair[1] - pair[0]);
            let (mut lp, mut ln, mut rp, mut rn) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..x.len() {
                match (x[i][f] <= t, y[i] > 0.0) {
                    (true, true) => lp += w[i],
                    (true, false) => ln += w[i],
                    (false, true) => rp += w[i],
                    (false, false) => rn += w[i],
                }
            }
            let left = if lp > ln { 1.0 } else { -1.0 };
            let right = if rp > rn { 1.0 } else { -1.0 };
            let error = (if left > 0.0 { ln } else { lp }) + (if right > 0.0 { rn } else { rp });
            if best.as_ref().is_none_or(|b| error < b.error - 1e-12) {
                best = Some(Stump { feature: f, threshold: t, error, left, right });
            }
        }
    }
    best.expect("at least one split")
}

fn toy_set(seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |shift: f64| -> Vec<f64> {
        (0..4)
            .map(|f| ((rng.gen_range(0.0..10.0) + if f == 2 { shift } else { 0.0 }) * 2.0).round() / 2.0)
            .collect()
    };
    let pos = (0..10).map(|_| draw(2.5)).collect();
    let neg = (0..10).map(|_| draw(0.0)).collect();
    (pos, neg)
}

#[test]
fn three_rounds_match_brute_force_enumeration() {
    for seed in [1, 2, 3, 4, 5] {
        let (pos, neg) = toy_set(seed);
        let model = WindowModel { w: 2, h: 2, shrink: 1, n_channels: 1 };
        let out = train_features(&pos, &neg, model, &TrainConfig { rounds: 3, depth: 1, ..TrainConfig::default() }).unwrap();

        let x: Vec<Vec<f64>> = pos.iter().chain(&neg).cloned().collect();
        let y: Vec<f64> = (0..x.len()).map(|i| if i < pos.len() { 1.0 } else { -1.0 }).collect();
        let mut w = vec![1.0 / x.len() as f64; x.len()];
        for round in &out.rounds {
            let s = brute_force(&x, &y, &w);
            assert_eq!((round.feature, round.threshold), (s.feature, s.threshold), "seed {seed}");
            assert!((round.error - s.error).abs() < 1e-12);
            if s.error <= 1e-10 {
                break;
            }
            let alpha = 0.5 * ((1.0 - s.error) / s.error).ln();
            assert!((round.alpha - alpha).abs() < 1e-12);
            for i in 0..x.len() {
                let h = if x[i][s.feature] <= s.threshold { s.left } else { s.right };
                w[i] *= (-alpha * y[i] * h).exp();
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
        }
    }
}

#[test]
fn training_error_bound_never_increases() {
    let (pos, neg) = toy_set(9);
    let model = WindowModel { w: 2, h: 2, shrink: 1, n_channels: 1 };
    let out = train_features(&pos, &neg, model, &TrainConfig { rounds: 30, depth: 2, ..TrainConfig::default() }).unwrap();
    for pair in out.rounds.windows(2) {
        assert!(pair[1].error_bound <= pair[0].error_bound);
    }
    for r in &out.rounds {
        assert!(r.error < 0.5);
        assert!(r.training_error <= r.error_bound + 1e-12);
    }
}

#[test]
fn training_is_deterministic() {
    let (pos, neg) = toy_set(4);
    let model = WindowModel { w: 2, h: 2, shrink: 1, n_channels: 1 };
    let cfg = TrainConfig { rounds: 10, depth: 2, seed: 3, max_negatives: Some(7) };
    let a = train_features(&pos, &neg, model, &cfg).unwrap();
    let b = train_features(&pos, &neg, model, &cfg).unwrap();
    assert_eq!(a.classifier.to_text(), b.classifier.to_text());
}
