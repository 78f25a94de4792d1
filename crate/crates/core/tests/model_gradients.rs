//! Finite-difference checks of the full forward pass and loss.

mod common;

#[test]
fn loss_gradients_match_finite_differences() {
    for (name, err) in common::model_errors() {
        assert!(err <= common::MODEL_TOL, "{name}: relative error {err:e}");
    }
}
