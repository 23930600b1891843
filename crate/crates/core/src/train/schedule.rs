use std::f64::consts::PI;

/// Linear warmup from 0 to `lr_max` over `warmup_steps`, then cosine decay
/// to 0 at `total_steps`.
pub fn lr_schedule(step: usize, lr_max: f64, warmup_steps: usize, total_steps: usize) -> f64 {
    if step < warmup_steps {
        return lr_max * step as f64 / warmup_steps as f64;
    }
    if step >= total_steps {
        return 0.0;
    }
    let span = (total_steps - warmup_steps).max(1) as f64;
    let progress = (step - warmup_steps) as f64 / span;
    lr_max * 0.5 * (1.0 + (PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_landmarks() {
        let (lr, warm, total) = (3e-4, 10, 100);
        assert_eq!(lr_schedule(0, lr, warm, total), 0.0);
        assert_eq!(lr_schedule(5, lr, warm, total), 1.5e-4);
        assert_eq!(lr_schedule(warm, lr, warm, total), lr);
        assert!(lr_schedule(total, lr, warm, total).abs() < 1e-12);
        assert!((lr_schedule(55, lr, warm, total) - lr / 2.0).abs() < 1e-12);
        assert_eq!(lr_schedule(0, lr, 0, total), lr);
    }

    #[test]
    fn schedule_is_monotone_after_warmup() {
        let v: Vec<f64> = (10..=100).map(|s| lr_schedule(s, 1.0, 10, 100)).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }
}
