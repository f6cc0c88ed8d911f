use rayon::prelude::*;

use super::weight::weight_table;
use super::{Attribution, Game, Method, Neumaier};
use crate::coalition::CoalitionMask;
use crate::error::{Error, Result};
use crate::template::MAX_PLAYERS;

/// Exact Shapley values from the full coalition table.
///
/// All `2^n` coalition values are fetched once (in parallel) into a flat
/// table indexed by mask bits; aggregation is then a single deterministic
/// pass over that table.
pub fn exact_shapley<G: Game + ?Sized>(game: &G) -> Result<Attribution> {
    let n = game.player_count();
    if n == 0 {
        return Err(Error::NoPlayers);
    }
    if n > MAX_PLAYERS {
        return Err(Error::PlayerCapExceeded {
            found: n,
            cap: MAX_PLAYERS,
        });
    }
    let table: Vec<f64> = (0..1u64 << n)
        .into_par_iter()
        .map(|bits| game.value(CoalitionMask::from_bits(bits, n)?))
        .collect::<Result<_>>()?;
    Ok(aggregate(&table, n, game.labels()))
}

pub(crate) fn aggregate(table: &[f64], n: usize, labels: Vec<String>) -> Attribution {
    debug_assert_eq!(table.len(), 1 << n);
    let weights = weight_table(n).expect("n checked by caller");
    let mut sums = vec![Neumaier::default(); n];
    for (bits, &without) in table.iter().enumerate() {
        let size = bits.count_ones() as usize;
        if size == n {
            continue;
        }
        let w = weights[size];
        for (i, acc) in sums.iter_mut().enumerate() {
            let bit = 1 << i;
            if bits & bit == 0 {
                acc.add(w * (table[bits | bit] - without));
            }
        }
    }
    let values = sums.into_iter().map(Neumaier::total).collect();
    Attribution::assemble(
        values,
        labels,
        table[0],
        table[table.len() - 1],
        Method::Exact,
        None,
    )
}
