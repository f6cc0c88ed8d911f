use super::{Attribution, Game, Method, Neumaier};
use crate::coalition::CoalitionMask;
use crate::error::{Error, Result};

/// Largest game [`permutation_oracle`] will enumerate (`8! = 40320` orderings).
pub const PERMUTATION_ORACLE_CAP: usize = 8;

/// Shapley values by brute force over all `n!` player orderings.
///
/// Queries the game directly for every prefix of every ordering, with no
/// shared table, so it is independent of [`super::exact_shapley`].
pub fn permutation_oracle<G: Game + ?Sized>(game: &G) -> Result<Attribution> {
    let n = game.player_count();
    if n == 0 {
        return Err(Error::NoPlayers);
    }
    if n > PERMUTATION_ORACLE_CAP {
        return Err(Error::PlayerCapExceeded {
            found: n,
            cap: PERMUTATION_ORACLE_CAP,
        });
    }
    let mut sums = vec![Neumaier::default(); n];
    let mut orderings = 0u64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut visit = |order: &[usize]| -> Result<()> {
        let mut coalition = CoalitionMask::empty(n);
        let mut previous = game.value(coalition)?;
        for &player in order {
            coalition = coalition.with(player);
            let current = game.value(coalition)?;
            sums[player].add(current - previous);
            previous = current;
        }
        orderings += 1;
        Ok(())
    };

    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    visit(&order)?;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order)?;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }

    let values = sums
        .into_iter()
        .map(|s| s.total() / orderings as f64)
        .collect();
    let v_empty = game.value(CoalitionMask::empty(n))?;
    let v_full = game.value(CoalitionMask::full(n))?;
    Ok(Attribution::assemble(
        values,
        game.labels(),
        v_empty,
        v_full,
        Method::Enumerated,
        None,
    ))
}
