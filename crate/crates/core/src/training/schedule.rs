use crate::error::{Error, Result};

/// Cosine annealing from `lr_max` at `t = 0` to `lr_min` at `t = epochs`.
///
/// Written as a convex combination so both endpoints are exact.
pub fn cosine_lr(t: usize, epochs: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if epochs == 0 || t > epochs {
        return Err(Error::OutOfRange(format!("epoch {t} outside 0..={epochs}")));
    }
    let w = 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / epochs as f64).cos());
    Ok(lr_max * w + lr_min * (1.0 - w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_midpoint_and_monotone() {
        assert_eq!(cosine_lr(0, 500, 2e-4, 1e-6).unwrap(), 2e-4);
        assert_eq!(cosine_lr(500, 500, 2e-4, 1e-6).unwrap(), 1e-6);
        assert!((cosine_lr(250, 500, 2e-4, 1e-6).unwrap() - 1.005e-4).abs() < 1e-15);
        let all: Vec<f64> = (0..=500).map(|t| cosine_lr(t, 500, 2e-4, 1e-6).unwrap()).collect();
        assert!(all.windows(2).all(|w| w[1] <= w[0]));
        assert!(cosine_lr(501, 500, 2e-4, 1e-6).is_err());
    }
}
