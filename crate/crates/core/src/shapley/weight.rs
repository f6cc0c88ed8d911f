use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::template::MAX_PLAYERS;

/// Exact coalition weight `s!(n-s-1)!/n!`.
///
/// Factorials up to `24!` fit in `u128`, so the ratio is computed without
/// rounding and reduced.
pub fn shapley_weight(n: usize, s: usize) -> Result<Ratio<u128>> {
    if n == 0 || s >= n || n > MAX_PLAYERS {
        return Err(Error::OutOfRange { n, s });
    }
    Ok(Ratio::new(
        factorial(s) * factorial(n - s - 1),
        factorial(n),
    ))
}

/// [`shapley_weight`] converted once to `f64`.
pub fn shapley_weight_f64(n: usize, s: usize) -> Result<f64> {
    let w = shapley_weight(n, s)?;
    Ok(*w.numer() as f64 / *w.denom() as f64)
}

/// Weights for every coalition size `0..n`.
pub(crate) fn weight_table(n: usize) -> Result<Vec<f64>> {
    (0..n).map(|s| shapley_weight_f64(n, s)).collect()
}

fn factorial(k: usize) -> u128 {
    (1..=k as u128).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_weights() {
        assert_eq!(shapley_weight(1, 0).unwrap(), Ratio::from_integer(1));
        assert_eq!(shapley_weight(3, 1).unwrap(), Ratio::new(1, 6));
        assert_eq!(shapley_weight(3, 0).unwrap(), Ratio::new(1, 3));
        assert_eq!(shapley_weight(3, 2).unwrap(), Ratio::new(1, 3));
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(shapley_weight(3, 3), Err(Error::OutOfRange { n: 3, s: 3 })));
        assert!(shapley_weight(0, 0).is_err());
        assert!(shapley_weight(25, 0).is_err());
        assert!(shapley_weight(24, 23).is_ok());
    }

    #[test]
    fn reduced_form_is_one_over_n_choose() {
        // s!(n-s-1)!/n! == 1 / (n * C(n-1, s))
        for n in 1..=24usize {
            for s in 0..n {
                let w = shapley_weight(n, s).unwrap();
                assert_eq!(*w.numer(), 1);
                let mut choose: u128 = 1;
                for k in 0..s as u128 {
                    choose = choose * (n as u128 - 1 - k) / (k + 1);
                }
                assert_eq!(*w.denom(), n as u128 * choose);
            }
        }
    }
}
