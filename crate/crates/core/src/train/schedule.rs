/// Reversal coefficient for training progress `p`:
/// `2 / (1 + exp(-10 p)) - 1`. Inputs outside `[0, 1]` are clamped.
pub fn lambda_schedule(p: f64) -> f64 {
    let clamped = p.clamp(0.0, 1.0);
    if clamped != p {
        log::warn!("training progress {p} outside [0, 1], clamped to {clamped}");
    }
    2.0 / (1.0 + (-10.0 * clamped).exp()) - 1.0
}

/// Progress for epoch `epoch` and batch `batch` (both counted from 1) of a
/// run with `epochs` epochs of `batches` batches: `(batch + epoch * batches)
/// / (epochs * batches)`, clamped to `[0, 1]`.
pub fn progress(epoch: usize, batch: usize, epochs: usize, batches: usize) -> f64 {
    let total = (epochs * batches) as f64;
    ((batch + epoch * batches) as f64 / total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_reference_points() {
        assert_eq!(lambda_schedule(0.0), 0.0);
        let half = 2.0 / (1.0 + (-5f64).exp()) - 1.0;
        assert_eq!(lambda_schedule(0.5), half);
        assert!((lambda_schedule(0.5) - 0.98661).abs() < 1e-5);
        assert!((lambda_schedule(1.0) - 0.99991).abs() < 1e-5);
        assert_eq!(lambda_schedule(-1.0), 0.0);
        assert_eq!(lambda_schedule(2.0), lambda_schedule(1.0));
    }

    #[test]
    fn progress_examples() {
        assert_eq!(progress(1, 1, 10, 5), 6.0 / 50.0);
        assert_eq!(progress(10, 5, 10, 5), 1.0);
        // Halving the batch count while doubling the epochs keeps the endpoint.
        assert_eq!(progress(10, 10, 10, 10), progress(20, 5, 20, 5));
        assert_eq!(progress(20, 5, 20, 5), 1.0);
    }
}
