//! Integer Chebyshev-distance projection onto `{y ∈ ℕ₀^d : Σy = c}`.
//!
//! Given a noisy integer vector `x` and a target `c ≥ 0`, find a non-negative
//! integer `y` summing to `c` that minimizes `‖x − y‖∞`. Both solvers work on
//! the offset `z = y − x`: start from the even split of the surplus, then, if
//! the sum overshoots, clip entries towards `max(−x, −t)` in the configured
//! order, growing the distance budget `t` every full pass.
//!
//! Clipping the smallest entries first zeroes small noisy counts before large
//! ones, which suppresses false positives in sparse releases.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntOptError {
    #[error("target sum must be non-negative, got {0}")]
    NegativeTarget(i64),
    #[error("vector must have at least one entry")]
    Empty,
    #[error("integer overflow while solving")]
    Overflow,
    #[error("brute force needs d ≤ {max_d} and c ≤ {max_c}")]
    TooLarge { max_d: usize, max_c: i64 },
}

/// Visiting order of the clipping pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// Smallest `x` first; ties by index.
    #[default]
    Ascending,
    /// Largest `x` first; ties by index.
    Descending,
    /// Seeded uniform permutation.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptProblem {
    pub x: Vec<i64>,
    pub c: i64,
    pub order: Order,
}

impl OptProblem {
    pub fn new(x: Vec<i64>, c: i64, order: Order) -> Self {
        Self { x, c, order }
    }

    fn validate(&self) -> Result<(), IntOptError> {
        if self.x.is_empty() {
            return Err(IntOptError::Empty);
        }
        if self.c < 0 {
            return Err(IntOptError::NegativeTarget(self.c));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptSolution {
    pub y: Vec<i64>,
    /// `‖x − y‖∞`.
    pub alpha: i64,
}

fn checked_sum(x: &[i64]) -> Result<i64, IntOptError> {
    x.iter()
        .try_fold(0i64, |acc, &v| acc.checked_add(v))
        .ok_or(IntOptError::Overflow)
}

fn chebyshev(x: &[i64], y: &[i64]) -> Result<i64, IntOptError> {
    x.iter().zip(y).try_fold(0i64, |acc, (&a, &b)| {
        Ok(acc.max(b.checked_sub(a).ok_or(IntOptError::Overflow)?.abs()))
    })
}

/// `max(⌈|c − Σx| / d⌉, −min x)`, clipped at 0; no feasible `y` is closer.
pub fn lower_bound(x: &[i64], c: i64) -> Result<i64, IntOptError> {
    if x.is_empty() {
        return Err(IntOptError::Empty);
    }
    let gap = c
        .checked_sub(checked_sum(x)?)
        .and_then(i64::checked_abs)
        .ok_or(IntOptError::Overflow)?;
    let d = x.len() as i64;
    let spread = gap.div_euclid(d) + i64::from(gap.rem_euclid(d) != 0);
    let min = *x.iter().min().expect("non-empty");
    let neg = min.checked_neg().ok_or(IntOptError::Overflow)?;
    Ok(spread.max(neg).max(0))
}

/// Starting offset `z_i = max(⌈(c − Σx)/d⌉, −x_i)`.
pub fn initial_offset(x: &[i64], c: i64) -> Result<Vec<i64>, IntOptError> {
    if x.is_empty() {
        return Err(IntOptError::Empty);
    }
    let surplus = c.checked_sub(checked_sum(x)?).ok_or(IntOptError::Overflow)?;
    let d = x.len() as i64;
    let share = surplus.div_euclid(d) + i64::from(surplus.rem_euclid(d) != 0);
    x.iter()
        .map(|&v| Ok(share.max(v.checked_neg().ok_or(IntOptError::Overflow)?)))
        .collect()
}

fn visit_order(x: &[i64], order: Order) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    match order {
        Order::Ascending => idx.sort_by_key(|&i| (x[i], i)),
        Order::Descending => idx.sort_by_key(|&i| (std::cmp::Reverse(x[i]), i)),
        Order::Random(seed) => idx.shuffle(&mut ChaCha12Rng::seed_from_u64(seed)),
    }
    idx
}

struct State {
    z: Vec<i64>,
    /// `Σz − (c − Σx)`, the amount still to remove.
    excess: i64,
    t: i64,
}

fn start(problem: &OptProblem) -> Result<State, IntOptError> {
    let z = initial_offset(&problem.x, problem.c)?;
    let surplus = problem
        .c
        .checked_sub(checked_sum(&problem.x)?)
        .ok_or(IntOptError::Overflow)?;
    let excess = checked_sum(&z)?
        .checked_sub(surplus)
        .ok_or(IntOptError::Overflow)?;
    let t = z.iter().map(|v| v.abs()).max().expect("non-empty");
    Ok(State { z, excess, t })
}

/// Lowers `z[i]` by up to `excess`, no further than `max(−x_i, −t)`.
fn clip(state: &mut State, x: &[i64], i: usize) -> Result<(), IntOptError> {
    let floor = (-x[i]).max(-state.t);
    let target = state
        .z[i]
        .checked_sub(state.excess)
        .ok_or(IntOptError::Overflow)?
        .max(floor);
    if target < state.z[i] {
        state.excess -= state.z[i] - target;
        state.z[i] = target;
    }
    Ok(())
}

fn finish(problem: &OptProblem, z: Vec<i64>) -> Result<OptSolution, IntOptError> {
    let y = problem
        .x
        .iter()
        .zip(&z)
        .map(|(&a, &b)| a.checked_add(b).ok_or(IntOptError::Overflow))
        .collect::<Result<Vec<_>, _>>()?;
    let alpha = chebyshev(&problem.x, &y)?;
    Ok(OptSolution { y, alpha })
}

fn trivial(problem: &OptProblem) -> Option<OptSolution> {
    (problem.x.len() == 1).then(|| OptSolution {
        y: vec![problem.c],
        alpha: (problem.c - problem.x[0]).abs(),
    })
}

/// Cyclic clipping pass; `t` grows by one after each full sweep.
pub fn intopt_simple(problem: &OptProblem) -> Result<OptSolution, IntOptError> {
    problem.validate()?;
    if let Some(sol) = trivial(problem) {
        return Ok(sol);
    }
    let x = &problem.x;
    let mut state = start(problem)?;
    let order = visit_order(x, problem.order);
    let mut j = 0;
    while state.excess > 0 {
        clip(&mut state, x, order[j])?;
        j += 1;
        if j == order.len() {
            j = 0;
            state.t = state.t.checked_add(1).ok_or(IntOptError::Overflow)?;
        }
    }
    finish(problem, state.z)
}

/// Same output as [`intopt_simple`], skipping exhausted entries and raising
/// `t` in batches.
///
/// Entries already at `−x_i` can never move again, so each sweep only visits
/// the active set. When a sweep leaves `excess` to remove from `|I|` active
/// entries, the next `⌊excess / |I|⌋` sweeps would each clip every active
/// entry by exactly one, so `t` jumps by that amount at once.
pub fn intopt_fast(problem: &OptProblem) -> Result<OptSolution, IntOptError> {
    problem.validate()?;
    if let Some(sol) = trivial(problem) {
        return Ok(sol);
    }
    let x = &problem.x;
    let mut state = start(problem)?;
    let mut active: Vec<usize> = visit_order(x, problem.order)
        .into_iter()
        .filter(|&i| state.z[i] > -x[i])
        .collect();
    while state.excess > 0 {
        for &i in &active {
            clip(&mut state, x, i)?;
            if state.excess == 0 {
                break;
            }
        }
        if state.excess == 0 {
            break;
        }
        active.retain(|&i| state.z[i] > -x[i]);
        let step = (state.excess / active.len() as i64).max(1);
        state.t = state.t.checked_add(step).ok_or(IntOptError::Overflow)?;
    }
    finish(problem, state.z)
}

pub const BRUTE_FORCE_MAX_D: usize = 4;
pub const BRUTE_FORCE_MAX_C: i64 = 12;

/// Exact minimum of `‖x − y‖∞` by enumerating every composition of `c`.
pub fn brute_force_oracle(x: &[i64], c: i64) -> Result<i64, IntOptError> {
    if x.is_empty() {
        return Err(IntOptError::Empty);
    }
    if c < 0 {
        return Err(IntOptError::NegativeTarget(c));
    }
    if x.len() > BRUTE_FORCE_MAX_D || c > BRUTE_FORCE_MAX_C {
        return Err(IntOptError::TooLarge {
            max_d: BRUTE_FORCE_MAX_D,
            max_c: BRUTE_FORCE_MAX_C,
        });
    }
    fn walk(x: &[i64], left: i64, acc: i64, best: &mut i64) {
        if x.len() == 1 {
            *best = (*best).min(acc.max((left - x[0]).abs()));
            return;
        }
        for v in 0..=left {
            walk(&x[1..], left - v, acc.max((v - x[0]).abs()), best);
        }
    }
    let mut best = i64::MAX;
    walk(x, c, 0, &mut best);
    Ok(best)
}
