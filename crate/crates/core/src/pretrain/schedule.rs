/// KL anneal factor: linear ramp from 0 over the first half of training,
/// pinned at 1 for the second half.
pub fn beta_schedule(epoch: usize, total_epochs: usize) -> f64 {
    assert!(epoch < total_epochs, "epoch {epoch} of {total_epochs}");
    let ramp = total_epochs.div_ceil(2);
    (epoch as f64 / ramp as f64).min(1.0)
}
