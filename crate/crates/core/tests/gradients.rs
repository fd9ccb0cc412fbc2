//! Analytic gradients against central finite differences.

mod common;

use common::gradcheck::{self, Loss, ALL};

const CASES: u64 = 100;
const TOL: f64 = 1e-4;

fn sweep(losses: &[Loss], check: fn(Loss, u64) -> f64) {
    for &loss in losses {
        for case in 0..CASES {
            let worst = check(loss, case);
            assert!(worst <= TOL, "{loss:?} case {case}: {worst:e}");
        }
    }
}

#[test]
fn loss_gradients_wrt_predictions() {
    sweep(&ALL, gradcheck::predictions);
}

#[test]
fn kl_gradients_wrt_labels() {
    sweep(&[Loss::KlV2, Loss::KlV1], gradcheck::labels);
}

#[test]
fn loss_gradients_per_raw_entry() {
    sweep(&ALL, gradcheck::raw_entries);
}

#[test]
fn backprop_matches_finite_differences_for_every_loss() {
    sweep(&ALL, gradcheck::backprop);
}
