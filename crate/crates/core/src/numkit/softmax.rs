use crate::error::{invalid, Result};

/// `log Σ exp(v_i)` with a max shift.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return invalid("log_sum_exp of an empty sequence");
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || v.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return invalid("log_sum_exp input must be finite or -inf");
    }
    if max == f64::NEG_INFINITY {
        return invalid("log_sum_exp of all -inf entries");
    }
    Ok(max + lse_shifted(v, max))
}

/// Unchecked `ln Σ exp(v_i - shift)`; callers guarantee the inputs are valid.
#[inline]
pub(crate) fn lse_shifted(v: &[f64], shift: f64) -> f64 {
    v.iter().map(|x| (x - shift).exp()).sum::<f64>().ln()
}

/// Unchecked log-sum-exp for hot loops over already-validated logits.
#[inline]
pub(crate) fn lse_unchecked(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + lse_shifted(v, max)
}

/// Normalized exponentials. Computed as `exp(x - max) / Σ` so that an exact
/// constant shift of the input leaves the output bitwise unchanged.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    log_sum_exp(v)?;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    Ok(out)
}

pub fn log_softmax(v: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(v)?;
    Ok(v.iter().map(|x| x - lse).collect())
}

/// `ln(1 + eˣ)` without overflow or cancellation.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// Inverse of [`softplus`] on `(0, ∞)`: `ln(eʸ - 1)`.
#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn lse_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - LN_2).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + LN_2)).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, 3f64.ln()]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[0.0, f64::NEG_INFINITY]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn lse_errors() {
        assert!(log_sum_exp(&[]).is_err());
        assert!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).is_err());
        assert!(log_sum_exp(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for x in &s {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((s[0] - 0.25).abs() < 1e-15 && (s[1] - 0.75).abs() < 1e-15);
        let s = softmax(&[700.0, 700.0, 0.0]).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
        assert!(s[2] < 1e-300);
    }

    #[test]
    fn softplus_pairs() {
        for &y in &[1e-12, 1e-5, 0.3, 1.0, 7.0, 29.9, 30.1, 80.0] {
            let x = softplus_inv(y);
            assert!((softplus(x) - y).abs() <= 1e-14 * y.max(1.0), "y={y}");
        }
        assert_eq!(softplus(800.0), 800.0);
        assert!((softplus(0.0) - LN_2).abs() < 1e-16);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(grid in prop::collection::vec(-50_000_000i64..50_000_000, 1..20), c in -500i64..=500) {
            // dyadic inputs keep v + c exact, so only the kernel's own rounding is measured
            let v: Vec<f64> = grid.iter().map(|&k| k as f64 / (1u64 << 20) as f64).collect();
            let c = c as f64;
            let a = softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-14);
            }
            let sum: f64 = a.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(a.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn softmax_shift_general(v in prop::collection::vec(-50.0f64..50.0, 1..20), c in -500.0f64..500.0) {
            let a = softmax(&v).unwrap();
            let b = softmax(&v.iter().map(|x| x + c).collect::<Vec<_>>()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn lse_bracketed_by_max(v in prop::collection::vec(-1000.0f64..1000.0, 1..30)) {
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let l = log_sum_exp(&v).unwrap();
            prop_assert!(l >= max);
            prop_assert!(l <= max + (v.len() as f64).ln() + 1e-12);
        }
    }
}
