use crate::{Error, Result};

/// Time to draw a box, as a percentage of the time to draw the same
/// instance's mask (7 s vs 79.2 s).
pub const BOX_TO_MASK_TIME_PERCENT: f64 = 8.8;

/// Annotation effort relative to fully mask-annotating the pool, in percent:
/// `n_boxed / n_mask_total * ratio_percent`.
pub fn annotation_cost(n_boxed: usize, n_mask_total: usize, ratio_percent: f64) -> Result<f64> {
    if n_mask_total == 0 {
        return Err(Error::InvalidArgument("n_mask_total must be positive".into()));
    }
    if !(ratio_percent.is_finite() && ratio_percent >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time ratio must be finite and >= 0, got {ratio_percent}"
        )));
    }
    Ok(n_boxed as f64 / n_mask_total as f64 * ratio_percent)
}

/// Rounds half away from zero to `decimals` places.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}
