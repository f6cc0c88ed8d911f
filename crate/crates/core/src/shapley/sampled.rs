use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Attribution, Game, Method};
use crate::coalition::{CoalitionMask, MAX_MASK_WIDTH};
use crate::error::{Error, Result};

/// Fewest permutations [`sampled_shapley`] accepts.
pub const MIN_PERMUTATIONS: usize = 100;

/// Monte Carlo Shapley estimate from `permutations` seeded random orderings.
///
/// The orderings are drawn up front from `seed`, every distinct prefix
/// coalition is evaluated once, and the estimates are accumulated in ordering
/// order, so the result is bit-identical for a given seed regardless of how
/// the evaluations were scheduled. Standard errors are `stdev / sqrt(m)`.
pub fn sampled_shapley<G: Game + ?Sized>(
    game: &G,
    permutations: usize,
    seed: u64,
) -> Result<Attribution> {
    let n = game.player_count();
    if n == 0 {
        return Err(Error::NoPlayers);
    }
    if n > MAX_MASK_WIDTH {
        return Err(Error::PlayerCapExceeded {
            found: n,
            cap: MAX_MASK_WIDTH,
        });
    }
    if permutations < MIN_PERMUTATIONS {
        return Err(Error::TooFewPermutations {
            got: permutations,
            min: MIN_PERMUTATIONS,
        });
    }

    let orderings = draw_orderings(n, permutations, seed);

    let mut needed: Vec<u64> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for order in &orderings {
            let mut bits = 0u64;
            if seen.insert(bits) {
                needed.push(bits);
            }
            for &p in order {
                bits |= 1 << p;
                if seen.insert(bits) {
                    needed.push(bits);
                }
            }
        }
    }
    let values: HashMap<u64, f64> = needed
        .par_iter()
        .map(|&bits| Ok((bits, game.value(CoalitionMask::from_bits(bits, n)?)?)))
        .collect::<Result<_>>()?;

    // Welford accumulation per player.
    let mut mean = vec![0.0f64; n];
    let mut m2 = vec![0.0f64; n];
    for (k, order) in orderings.iter().enumerate() {
        let count = (k + 1) as f64;
        let mut bits = 0u64;
        let mut previous = values[&bits];
        for &p in order {
            bits |= 1 << p;
            let current = values[&bits];
            let x = current - previous;
            let delta = x - mean[p as usize];
            mean[p as usize] += delta / count;
            m2[p as usize] += delta * (x - mean[p as usize]);
            previous = current;
        }
    }
    let m = permutations as f64;
    let standard_errors = m2
        .iter()
        .map(|&s| (s / (m - 1.0)).max(0.0).sqrt() / m.sqrt())
        .collect();

    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    Ok(Attribution::assemble(
        mean,
        game.labels(),
        values[&0],
        values[&full],
        Method::Sampled { permutations, seed },
        Some(standard_errors),
    ))
}

fn draw_orderings(n: usize, m: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<u8> = (0..n as u8).collect();
    (0..m)
        .map(|_| {
            let mut order = base.clone();
            order.shuffle(&mut rng);
            order
        })
        .collect()
}
