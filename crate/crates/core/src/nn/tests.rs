use rand::Rng as _;

use super::checkpoint::{decode, encode, params_from_records, params_to_records};
use super::classifier::{train_classifier, ClassifierParams};
use super::*;
use crate::rng::seeded;
use crate::signal::WindowedSource;
use crate::synthgen::StimulusImage;

fn random_image(h: usize, w: usize, seed: u64) -> StimulusImage {
    let mut rng = seeded(seed);
    StimulusImage {
        height: h,
        width: w,
        pixels: (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect(),
        quality: 0.5,
        category: 0,
        seed,
    }
}

fn random_window(t: usize, seed: u64) -> WindowedSource {
    let mut rng = seeded(seed ^ 0xABCD);
    WindowedSource {
        values: (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// Loss evaluated from scratch, independent of the backward pass.
fn direct_loss(params: &ModelParams, batch: &[BatchItem<'_>], objective: Objective) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .map(|b| {
            let out = forward(params, b.image).unwrap();
            match objective {
                Objective::Source => out
                    .s_pred
                    .iter()
                    .zip(&b.window.values)
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>(),
                _ => (out.y_pred - b.amplitude).powi(2),
            }
        })
        .sum::<f64>()
        / n
}

/// Central differences on a subset of coordinates of every tensor.
fn check_against_finite_differences(
    params: &ModelParams,
    batch: &[BatchItem<'_>],
    objective: Objective,
    per_tensor: Option<usize>,
    seed: u64,
) {
    const H: f64 = 1e-5;
    let analytic = grad(params, batch, objective).unwrap();
    let names: Vec<String> = params.named_tensors().into_iter().map(|t| t.name).collect();
    let grads: Vec<Vec<f64>> = analytic
        .values
        .named_tensors()
        .into_iter()
        .map(|t| t.data.to_vec())
        .collect();
    let mut rng = seeded(seed);
    let mut probe = params.clone();
    for (k, name) in names.iter().enumerate() {
        let len = grads[k].len();
        let coords: Vec<usize> = match per_tensor {
            Some(m) if m < len => (0..m).map(|_| rng.gen_range(0..len)).collect(),
            _ => (0..len).collect(),
        };
        for i in coords {
            let orig = probe.tensors_mut()[k][i];
            probe.tensors_mut()[k][i] = orig + H;
            let up = direct_loss(&probe, batch, objective);
            probe.tensors_mut()[k][i] = orig - H;
            let down = direct_loss(&probe, batch, objective);
            probe.tensors_mut()[k][i] = orig;
            let fd = (up - down) / (2.0 * H);
            let a = grads[k][i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "{objective:?} {name}[{i}]: analytic {a:e} vs fd {fd:e} (rel {rel:e})");
        }
    }
}

#[test]
fn gradient_matches_finite_differences_everywhere() {
    let (h, w, t) = (10, 10, 4);
    let params = ModelParams::init(h, w, t, 11).unwrap();
    let images: Vec<_> = (0..3).map(|i| random_image(h, w, 100 + i)).collect();
    let windows: Vec<_> = (0..3).map(|i| random_window(t, 200 + i)).collect();
    let batch: Vec<_> = (0..3)
        .map(|i| BatchItem {
            image: &images[i],
            window: &windows[i],
            amplitude: 0.3 * i as f64 - 0.2,
        })
        .collect();
    for objective in [Objective::Source, Objective::AmplitudeFull, Objective::AmplitudeHead] {
        check_against_finite_differences(&params, &batch, objective, None, 1);
    }
}

#[test]
fn gradient_matches_finite_differences_at_default_size() {
    let (h, w, t) = (32, 32, 50);
    let params = ModelParams::init(h, w, t, 5).unwrap();
    let images: Vec<_> = (0..3).map(|i| random_image(h, w, 300 + i)).collect();
    let windows: Vec<_> = (0..3).map(|i| random_window(t, 400 + i)).collect();
    let batch: Vec<_> = (0..3)
        .map(|i| BatchItem {
            image: &images[i],
            window: &windows[i],
            amplitude: 1.0 + i as f64,
        })
        .collect();
    check_against_finite_differences(&params, &batch, Objective::Source, Some(12), 2);
    check_against_finite_differences(&params, &batch, Objective::AmplitudeFull, Some(12), 3);
}

#[test]
fn gradient_flags_follow_objective() {
    let params = ModelParams::init(10, 10, 3, 1).unwrap();
    let img = random_image(10, 10, 1);
    let win = random_window(3, 1);
    let batch = [BatchItem { image: &img, window: &win, amplitude: 1.0 }];
    let g = grad(&params, &batch, Objective::Source).unwrap();
    assert!(g.theta2_frozen && !g.theta1_frozen);
    assert!(g.values.theta2.weight.iter().all(|&v| v == 0.0));
    let g = grad(&params, &batch, Objective::AmplitudeHead).unwrap();
    assert!(g.theta1_frozen && !g.theta2_frozen);
    // frozen partition is still differentiated
    assert!(g.values.theta1.fc3.weight.iter().any(|&v| v != 0.0));
}

#[test]
fn zero_residual_gives_zero_gradient() {
    let params = ModelParams::init(10, 10, 3, 1).unwrap();
    let img = random_image(10, 10, 2);
    let out = forward(&params, &img).unwrap();
    let win = WindowedSource { values: out.s_pred.clone() };
    let batch = [BatchItem { image: &img, window: &win, amplitude: out.y_pred }];
    for obj in [Objective::Source, Objective::AmplitudeFull] {
        let g = grad(&params, &batch, obj).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.values.named_tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }
}

#[test]
fn doubling_residuals_doubles_head_gradient() {
    let params = ModelParams::init(10, 10, 3, 4).unwrap();
    let imgs: Vec<_> = (0..2).map(|i| random_image(10, 10, 10 + i)).collect();
    let win = random_window(3, 0);
    let preds: Vec<f64> = imgs.iter().map(|im| forward(&params, im).unwrap().y_pred).collect();
    let make = |scale: f64| -> Vec<f64> {
        let batch: Vec<_> = imgs
            .iter()
            .zip(&preds)
            .enumerate()
            .map(|(i, (im, p))| BatchItem {
                image: im,
                window: &win,
                amplitude: p - scale * (1.0 + i as f64),
            })
            .collect();
        let g = grad(&params, &batch, Objective::AmplitudeHead).unwrap();
        let mut v = g.values.theta2.weight.clone();
        v.extend(g.values.theta2.bias);
        v
    };
    let single = make(1.0);
    let double = make(2.0);
    for (a, b) in single.iter().zip(&double) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
    }
}

#[test]
fn zero_weights_give_zero_output() {
    let params = ModelParams::zeros(32, 32, 50).unwrap();
    let out = forward(&params, &random_image(32, 32, 1)).unwrap();
    assert!(out.s_pred.iter().all(|&v| v == 0.0));
    assert_eq!(out.y_pred, 0.0);
}

#[test]
fn forward_is_deterministic_and_checks_shape() {
    let params = ModelParams::init(32, 32, 50, 9).unwrap();
    let img = random_image(32, 32, 3);
    assert_eq!(forward(&params, &img).unwrap(), forward(&params, &img).unwrap());
    assert_eq!(params, ModelParams::init(32, 32, 50, 9).unwrap());
    assert!(matches!(forward(&params, &random_image(16, 32, 3)), Err(crate::Error::Shape(_))));
}

#[test]
fn amplitude_is_affine_in_source_head() {
    let params = ModelParams::init(32, 32, 50, 21).unwrap();
    let img = random_image(32, 32, 4);
    let out = forward(&params, &img).unwrap();
    let mut oracle = params.theta2.bias[0];
    for (w, s) in params.theta2.weight.iter().zip(&out.s_pred) {
        oracle += w * s;
    }
    assert!((out.y_pred - oracle).abs() < 1e-12);
}

#[test]
fn loss_examples() {
    let mut params = ModelParams::zeros(10, 10, 2).unwrap();
    let img = random_image(10, 10, 1);
    let target = WindowedSource { values: vec![1.0, 0.0] };
    assert_eq!(loss1(&params.theta1, &[(&img, &target)]).unwrap(), 1.0);
    let zero = WindowedSource { values: vec![0.0, 0.0] };
    assert_eq!(loss1(&params.theta1, &[(&img, &zero)]).unwrap(), 0.0);
    let bad = WindowedSource { values: vec![0.0; 3] };
    assert!(matches!(loss1(&params.theta1, &[(&img, &bad)]), Err(crate::Error::Shape(_))));

    // constant prediction 0.5; residuals ±1
    params.theta2.bias[0] = 0.5;
    let img2 = random_image(10, 10, 2);
    assert_eq!(loss2(&params, &[(&img, 1.5), (&img2, -0.5)]).unwrap(), 1.0);
    assert_eq!(loss2(&params, &[(&img, 0.5)]).unwrap(), 0.0);
}

#[test]
fn losses_match_direct_summation() {
    let params = ModelParams::init(12, 12, 6, 3).unwrap();
    let imgs: Vec<_> = (0..5).map(|i| random_image(12, 12, 50 + i)).collect();
    let wins: Vec<_> = (0..5).map(|i| random_window(6, 60 + i)).collect();
    let pairs: Vec<_> = imgs.iter().zip(&wins).collect();
    let mut oracle = 0.0;
    for (img, win) in &pairs {
        let s = forward(&params, img).unwrap().s_pred;
        for j in 0..6 {
            oracle += (win.values[j] - s[j]) * (win.values[j] - s[j]);
        }
    }
    oracle /= 5.0;
    let got = loss1(&params.theta1, &pairs.iter().map(|(a, b)| (*a, *b)).collect::<Vec<_>>()).unwrap();
    assert!((got - oracle).abs() < 1e-10);

    let amps: Vec<(&StimulusImage, f64)> = imgs.iter().map(|i| (i, 0.1 * i.seed as f64)).collect();
    let mut oracle2 = 0.0;
    for (img, y) in &amps {
        let p = forward(&params, img).unwrap().y_pred;
        oracle2 += (y - p) * (y - p);
    }
    assert!((loss2(&params, &amps).unwrap() - oracle2 / 5.0).abs() < 1e-10);
}

fn toy_set(n: usize, t: usize, seed: u64) -> TrainingSet {
    let mut rng = seeded(seed);
    let examples = (0..n)
        .map(|i| {
            let q: f64 = rng.gen_range(0.0..1.0);
            let mut img = random_image(12, 12, seed * 1000 + i as u64);
            for p in &mut img.pixels {
                *p *= q;
            }
            let values: Vec<f64> = (0..t).map(|j| q * (1.0 - (j as f64 - 2.0).abs() / 3.0)).collect();
            Example {
                amplitude: values.iter().copied().fold(f64::MIN, f64::max),
                window: WindowedSource { values },
                category: i % 3,
                image: img,
            }
        })
        .collect();
    TrainingSet { examples }
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        stage1_epochs: 8,
        stage2_epochs: 8,
        baseline_epochs: 8,
        learning_rate: 5e-3,
        batch_size: 10,
        ..TrainConfig::default()
    }
}

#[test]
fn two_stage_freezes_partitions_and_descends() {
    let set = toy_set(50, 5, 1);
    let cfg = small_cfg();
    let out = train_two_stage(&set, &cfg).unwrap();
    assert_eq!(out.initial.theta2, out.after_stage1.theta2);
    assert_eq!(out.after_stage1.theta1, out.params.theta1);
    assert_ne!(out.initial.theta1, out.after_stage1.theta1);
    assert_ne!(out.after_stage1.theta2, out.params.theta2);

    let pairs: Vec<_> = set.examples.iter().map(|e| (&e.image, &e.window)).collect();
    let amps: Vec<_> = set.examples.iter().map(|e| (&e.image, e.amplitude)).collect();
    assert!(loss1(&out.params.theta1, &pairs).unwrap() < loss1(&out.initial.theta1, &pairs).unwrap());
    assert!(loss2(&out.params, &amps).unwrap() < loss2(&out.after_stage1, &amps).unwrap());
    assert_eq!(out.trace.stage1.len(), 8);
    assert_eq!(out.trace.stage2.len(), 8);

    // deterministic
    let again = train_two_stage(&set, &cfg).unwrap();
    assert_eq!(again.params, out.params);
}

#[test]
fn zero_learning_rate_leaves_params_unchanged() {
    let set = toy_set(20, 5, 2);
    let cfg = TrainConfig { learning_rate: 0.0, ..small_cfg() };
    let out = train_two_stage(&set, &cfg).unwrap();
    assert_eq!(out.initial, out.params);
    let (base, _) = train_baseline(&set, &cfg).unwrap();
    assert_eq!(base, out.initial);
}

#[test]
fn baseline_ignores_windows_and_descends() {
    let set = toy_set(50, 5, 3);
    let cfg = small_cfg();
    let (clean, trace) = train_baseline(&set, &cfg).unwrap();
    let mut poisoned = set.clone();
    for e in &mut poisoned.examples {
        e.window.values.fill(f64::NAN);
    }
    let (p, _) = train_baseline(&poisoned, &cfg).unwrap();
    assert_eq!(p, clean);
    let init = ModelParams::init(12, 12, 5, cfg.weight_init_seed).unwrap();
    let amps: Vec<_> = set.examples.iter().map(|e| (&e.image, e.amplitude)).collect();
    assert!(loss2(&clean, &amps).unwrap() < loss2(&init, &amps).unwrap());
    assert_eq!(trace.len(), 8);
}

#[test]
fn divergence_is_reported_with_epoch() {
    let set = toy_set(20, 5, 4);
    let cfg = TrainConfig { learning_rate: 1e6, ..small_cfg() };
    assert!(matches!(train_two_stage(&set, &cfg), Err(crate::Error::Diverged { .. })));
}

#[test]
fn oversized_batch_is_a_config_error() {
    let set = toy_set(5, 5, 4);
    let cfg = TrainConfig { batch_size: 6, ..small_cfg() };
    assert!(matches!(train_two_stage(&set, &cfg), Err(crate::Error::Config(_))));
}

fn window_multisets(set: &TrainingSet) -> Vec<Vec<Vec<u64>>> {
    let n_cat = set.examples.iter().map(|e| e.category + 1).max().unwrap();
    (0..n_cat)
        .map(|c| {
            let mut v: Vec<Vec<u64>> = set
                .examples
                .iter()
                .filter(|e| e.category == c)
                .map(|e| e.window.values.iter().map(|x| x.to_bits()).collect())
                .collect();
            v.sort();
            v
        })
        .collect()
}

#[test]
fn shuffle_preserves_per_category_multisets() {
    let set = toy_set(30, 5, 5);
    let before = window_multisets(&set);
    let mut moved = false;
    for seed in 0..100 {
        let s = shuffle_eeg_within_category(&set, seed);
        assert_eq!(window_multisets(&s), before);
        for (a, b) in s.examples.iter().zip(&set.examples) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.amplitude, b.amplitude);
            assert_eq!(a.category, b.category);
        }
        moved |= s.examples.iter().zip(&set.examples).any(|(a, b)| a.window != b.window);
    }
    assert!(moved);
}

#[test]
fn shuffle_with_singleton_categories_is_identity() {
    let mut set = toy_set(3, 5, 6);
    for (i, e) in set.examples.iter_mut().enumerate() {
        e.category = i;
    }
    assert_eq!(shuffle_eeg_within_category(&set, 17), set);
}

#[test]
fn synthetic_neuroscore_examples() {
    let mut params = ModelParams::zeros(10, 10, 3).unwrap();
    params.theta2.bias[0] = 0.7;
    let imgs: Vec<_> = (0..4).map(|i| random_image(10, 10, i)).collect();
    let groups = vec![vec![&imgs[0], &imgs[1]], vec![&imgs[2]], vec![&imgs[3]]];
    assert_eq!(predict_synthetic_neuroscore(&params, &groups).unwrap(), vec![0.7; 3]);
    assert!(predict_synthetic_neuroscore(&params, &[vec![]]).is_err());

    let params = ModelParams::init(10, 10, 3, 2).unwrap();
    let single = predict_synthetic_neuroscore(&params, &[vec![&imgs[2]]]).unwrap();
    assert_eq!(single[0], forward(&params, &imgs[2]).unwrap().y_pred);
    let group: Vec<_> = imgs.iter().collect();
    let oracle = imgs.iter().map(|i| forward(&params, i).unwrap().y_pred).sum::<f64>() / 4.0;
    let got = predict_synthetic_neuroscore(&params, &[group]).unwrap()[0];
    assert!((got - oracle).abs() < 1e-12);
}

#[test]
fn checkpoint_round_trip() {
    let p = ModelParams::init(32, 32, 50, 8).unwrap();
    let back = params_from_records(&decode(&encode(&params_to_records(&p))).unwrap()).unwrap();
    assert_eq!(back, p);
}

#[test]
fn classifier_probability_rows() {
    let imgs: Vec<_> = (0..5).map(|i| random_image(12, 12, i)).collect();
    let refs: Vec<_> = imgs.iter().collect();
    let uniform = ClassifierParams::zeros(12, 12, 4).unwrap();
    let p = uniform.probabilities(&refs).unwrap();
    assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    let c = ClassifierParams::init(12, 12, 3, 1).unwrap();
    let p = c.probabilities(&refs).unwrap();
    for i in 0..p.rows() {
        assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert_eq!(c.features(&refs).unwrap().cols(), FC2_WIDTH);
}

#[test]
fn classifier_learns_separable_toy_data() {
    // class 0: dark images, class 1: bright images
    let imgs: Vec<_> = (0..60)
        .map(|i| {
            let mut im = random_image(12, 12, 500 + i);
            let scale = if i % 2 == 0 { 0.3 } else { 1.0 };
            let shift = if i % 2 == 0 { 0.0 } else { 0.5 };
            for p in &mut im.pixels {
                *p = (*p * scale + shift).min(1.0);
            }
            im
        })
        .collect();
    let labels: Vec<usize> = (0..60).map(|i| i % 2).collect();
    let refs: Vec<_> = imgs.iter().collect();
    let cfg = TrainConfig { stage1_epochs: 10, learning_rate: 1e-2, batch_size: 10, ..TrainConfig::default() };
    let c = train_classifier(&refs, &labels, 2, &cfg).unwrap();
    let p = c.probabilities(&refs).unwrap();
    let correct = (0..60)
        .filter(|&i| {
            let row = p.row(i);
            (if row[1] > row[0] { 1 } else { 0 }) == labels[i]
        })
        .count();
    assert!(correct as f64 / 60.0 > 0.9, "accuracy {correct}/60");
    assert!(train_classifier(&refs, &labels, 1, &cfg).is_err());
}
