mod common;

use common::{desk_blobs, run};
use mslg::config::{preset, LrSchedule, TrainConfig};
use mslg::data::{gen_blobs, gen_spirals, LabeledDataset};
use mslg::eval::{model_accuracy, recovery_rate, Evaluator};
use mslg::model::{MlpModel, SgdState};
use mslg::rng::{streams, Rng};
use mslg::trainer::{cce_epoch, Method, Trainer};

fn small_cfg() -> TrainConfig {
    let mut cfg = preset("blobs-smoke").unwrap();
    cfg.total_epochs = 6;
    cfg.warmup_epochs = 2;
    cfg.seed = 3;
    cfg
}

fn fit_ce(ds: &LabeledDataset, hidden: &[usize], epochs: usize, lr: f64, seed: u64) -> MlpModel {
    let mut sizes = vec![ds.dim()];
    sizes.extend(hidden);
    sizes.push(ds.classes());
    let mut model = MlpModel::new(&sizes, &mut Rng::with_stream(seed, streams::MODEL_INIT)).unwrap();
    let mut opt = SgdState::new(model.param_count(), lr, 0.9, 0.0);
    let mut rng = Rng::with_stream(seed, streams::BATCHES);
    for _ in 0..epochs {
        cce_epoch(&mut model, &mut opt, ds.training_data(), 32, &mut rng).unwrap();
    }
    model
}

#[test]
fn warmup_only_run_equals_ce_baseline() {
    let (tr, me, te) = desk_blobs(1, 0.4, 0.02);
    let mut cfg = small_cfg();
    cfg.warmup_epochs = cfg.total_epochs;
    let ce = run(&cfg, Method::Ce, &tr, &me, &te);
    let ms = run(&cfg, Method::Mslg, &tr, &me, &te);
    assert_eq!(ce.metrics, ms.metrics);
    assert_eq!(ce.model.params(), ms.model.params());
}

#[test]
fn warmup_epochs_match_ce_prefix_bitwise() {
    let (tr, me, te) = desk_blobs(2, 0.4, 0.02);
    let cfg = small_cfg();
    let ce = run(&cfg, Method::Ce, &tr, &me, &te);
    let ms = run(&cfg, Method::Mslg, &tr, &me, &te);
    assert_eq!(ce.metrics[..2], ms.metrics[..2]);
    assert_ne!(ce.metrics[2..], ms.metrics[2..]);
}

#[test]
fn zero_beta_zero_entropy_is_frozen_soft_ce() {
    let (tr, me, te) = desk_blobs(3, 0.4, 0.02);
    let mut cfg = small_cfg();
    cfg.beta = 0.0;
    cfg.entropy_weight = 0.0;
    let mon = Evaluator { train: &tr, test: &te };
    let mut a = Trainer::new(cfg.clone(), tr.training_data(), 4).unwrap();
    let mut b = a.clone();
    for e in 0..cfg.total_epochs {
        let (ma, mb) = if e < cfg.warmup_epochs {
            (
                a.warmup_epoch(tr.training_data(), me.training_data(), &mon).unwrap(),
                b.warmup_epoch(tr.training_data(), me.training_data(), &mon).unwrap(),
            )
        } else {
            (
                a.mslg_epoch(tr.training_data(), me.training_data(), &mon).unwrap(),
                b.frozen_label_epoch(tr.training_data(), me.training_data(), &mon).unwrap(),
            )
        };
        for (x, y) in [
            (ma.train_loss, mb.train_loss),
            (ma.meta_loss, mb.meta_loss),
            (ma.test_accuracy, mb.test_accuracy),
            (ma.label_recovery_rate, mb.label_recovery_rate),
            (ma.lr, mb.lr),
        ] {
            assert!((x - y).abs() <= 1e-12, "epoch {e}: {x} vs {y}");
        }
    }
    assert_eq!(a.store(), b.store());
}

#[test]
fn identical_seeds_give_identical_metrics() {
    let (tr, me, te) = desk_blobs(4, 0.4, 0.02);
    let cfg = small_cfg();
    let a = run(&cfg, Method::Mslg, &tr, &me, &te);
    let b = run(&cfg, Method::Mslg, &tr, &me, &te);
    assert_eq!(a.metrics, b.metrics);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(run(&other, Method::Mslg, &tr, &me, &te).metrics, a.metrics);
}

#[test]
fn soft_labels_stay_normalised_through_training() {
    let (tr, me, te) = desk_blobs(5, 0.4, 0.02);
    let out = run(&small_cfg(), Method::Mslg, &tr, &me, &te);
    for r in 0..out.store.len() {
        let s: f64 = out.store.soft_label(r).iter().sum();
        assert!((s - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn zero_lr_warmup_keeps_parameters() {
    let (tr, me, te) = desk_blobs(6, 0.2, 0.02);
    let mut cfg = small_cfg();
    cfg.lambda_schedule = LrSchedule::constant(0.0);
    let mon = Evaluator { train: &tr, test: &te };
    let mut t = Trainer::new(cfg, tr.training_data(), 4).unwrap();
    let before = t.model().params().clone();
    let m = t.warmup_epoch(tr.training_data(), me.training_data(), &mon).unwrap();
    assert_eq!(t.model().params(), &before);
    assert!(m.train_loss.is_finite() && m.test_accuracy > 0.0);
}

#[test]
fn mslg_recovers_some_corrupted_labels() {
    let (tr, me, te) = desk_blobs(0, 0.4, 0.02);
    let initial = recovery_rate(tr.noisy_labels(), tr.noisy_labels(), tr.true_labels());
    assert_eq!(initial, 0.0);
    let out = run(&preset("blobs").unwrap(), Method::Mslg, &tr, &me, &te);
    let rate = recovery_rate(&out.store.hard_labels(), tr.noisy_labels(), tr.true_labels());
    assert!(rate > initial, "{rate}");
}

#[test]
fn separable_two_class_blobs_fit_in_twenty_warmup_epochs() {
    let ds = gen_blobs(400, 2, 2, 6.0, &mut Rng::new(11)).unwrap();
    let model = fit_ce(&ds, &[32, 32], 20, 0.05, 11);
    let acc = model_accuracy(&model, ds.features(), ds.true_labels()).unwrap();
    assert!(acc >= 0.95, "{acc}");
}

#[test]
fn well_separated_blobs_are_linearly_separable() {
    let ds = gen_blobs(1000, 4, 2, 10.0, &mut Rng::new(12)).unwrap();
    let model = fit_ce(&ds, &[], 30, 0.05, 12);
    let acc = model_accuracy(&model, ds.features(), ds.true_labels()).unwrap();
    assert!(acc > 0.99, "{acc}");
}

#[test]
fn coincident_blobs_are_at_chance() {
    let ds = gen_blobs(2000, 4, 2, 0.0, &mut Rng::new(13)).unwrap();
    let held = gen_blobs(2000, 4, 2, 0.0, &mut Rng::new(14)).unwrap();
    let model = fit_ce(&ds, &[32, 32], 10, 0.05, 13);
    let acc = model_accuracy(&model, held.features(), held.true_labels()).unwrap();
    assert!((acc - 0.25).abs() < 0.05, "{acc}");
}

#[test]
fn clean_spirals_fit_with_default_mlp() {
    let ds = gen_spirals(600, 3, 0.02, &mut Rng::new(15)).unwrap();
    let hidden = TrainConfig::default().hidden_layers;
    let model = fit_ce(&ds, &hidden, 300, 0.05, 15);
    let acc = model_accuracy(&model, ds.features(), ds.true_labels()).unwrap();
    assert!(acc >= 0.9, "{acc}");
}
