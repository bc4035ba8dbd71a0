//! Built-in environment generators.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MdpSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Action 0 of [`chain`] moves right, action 1 moves left.
pub const CHAIN_RIGHT: usize = 0;
pub const CHAIN_LEFT: usize = 1;

/// A `length`-state chain starting at state 0. The last state is absorbing under both
/// actions. With probability `slip_prob` an action moves the opposite way.
///
/// With `sparse_goal_reward` the only reward is 1 at the absorbing end; otherwise
/// state `s` pays `s / (length − 1)`.
pub fn chain<T: Scalar>(length: usize, slip_prob: f64, sparse_goal_reward: bool, gamma: f64) -> Result<MdpSpec<T>> {
    build_chain(length, slip_prob, sparse_goal_reward, gamma, false)
}

/// Like a sparse [`chain`], except that action 1 (and a slipped action 0) sends the
/// agent back to state 0. A uniformly random walk reaches the goal with probability
/// about `2^−(length−1)`, so undirected exploration fails.
pub fn reset_chain<T: Scalar>(length: usize, slip_prob: f64, gamma: f64) -> Result<MdpSpec<T>> {
    build_chain(length, slip_prob, true, gamma, true)
}

fn build_chain<T: Scalar>(
    length: usize,
    slip_prob: f64,
    sparse_goal_reward: bool,
    gamma: f64,
    reset: bool,
) -> Result<MdpSpec<T>> {
    if length < 2 {
        return Err(Error::InvalidMdp("chain needs at least 2 states".into()));
    }
    if !(0.0..=1.0).contains(&slip_prob) {
        return Err(Error::InvalidMdp(format!("slip probability {slip_prob} outside [0, 1]")));
    }
    let (ns, na) = (length, 2);
    let goal = length - 1;
    let mut p = vec![0.0f64; ns * na * ns];
    let mut r = vec![0.0f64; ns * na];
    for s in 0..ns {
        let right = (s + 1).min(goal);
        let left = if reset { 0 } else { s.saturating_sub(1) };
        for a in 0..na {
            let row = &mut p[(s * na + a) * ns..][..ns];
            if s == goal {
                row[goal] = 1.0;
            } else {
                let (intended, slipped) = if a == CHAIN_RIGHT { (right, left) } else { (left, right) };
                row[intended] += 1.0 - slip_prob;
                row[slipped] += slip_prob;
            }
            r[s * na + a] = if sparse_goal_reward {
                if s == goal { 1.0 } else { 0.0 }
            } else {
                s as f64 / goal as f64
            };
        }
    }
    MdpSpec::new(
        ns,
        na,
        p.into_iter().map(T::lit).collect(),
        r.into_iter().map(T::lit).collect(),
        T::lit(gamma),
        0,
    )
}

/// `width × height` grid, actions up/down/left/right, start in the corner `(0, 0)` and an
/// absorbing goal with reward 1 in the opposite corner. A slip replaces the chosen move with
/// a uniformly random one.
pub fn grid<T: Scalar>(width: usize, height: usize, slip_prob: f64, gamma: f64) -> Result<MdpSpec<T>> {
    if width * height < 2 {
        return Err(Error::InvalidMdp("grid needs at least 2 cells".into()));
    }
    if !(0.0..=1.0).contains(&slip_prob) {
        return Err(Error::InvalidMdp(format!("slip probability {slip_prob} outside [0, 1]")));
    }
    let ns = width * height;
    let na = 4;
    let goal = ns - 1;
    let idx = |x: usize, y: usize| y * width + x;
    let moved = |s: usize, dir: usize| {
        let (x, y) = (s % width, s / width);
        match dir {
            0 => idx(x, (y + 1).min(height - 1)),
            1 => idx(x, y.saturating_sub(1)),
            2 => idx(x.saturating_sub(1), y),
            _ => idx((x + 1).min(width - 1), y),
        }
    };
    let mut p = vec![0.0f64; ns * na * ns];
    let mut r = vec![0.0f64; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let row = &mut p[(s * na + a) * ns..][..ns];
            if s == goal {
                row[goal] = 1.0;
                r[s * na + a] = 1.0;
                continue;
            }
            row[moved(s, a)] += 1.0 - slip_prob;
            for dir in 0..na {
                row[moved(s, dir)] += slip_prob / na as f64;
            }
        }
    }
    MdpSpec::new(ns, na, p.into_iter().map(T::lit).collect(), r.into_iter().map(T::lit).collect(), T::lit(gamma), 0)
}

/// Random MDP: each pair moves to `branching` distinct successors with random weights;
/// rewards uniform on `[0, 1]`; initial state 0.
pub fn random_mdp<T: Scalar>(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    branching: usize,
    gamma: f64,
) -> Result<MdpSpec<T>> {
    if branching == 0 || branching > n_states {
        return Err(Error::InvalidMdp(format!("branching {branching} must lie in 1..={n_states}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![0.0f64; n_states * n_actions * n_states];
    let mut r = vec![0.0f64; n_states * n_actions];
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = &mut p[(s * n_actions + a) * n_states..][..n_states];
            let succ = sample(&mut rng, n_states, branching);
            let weights: Vec<f64> = (0..branching).map(|_| 0.05 + rng.gen::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            for (sp, w) in succ.iter().zip(weights) {
                row[sp] = w / total;
            }
            r[s * n_actions + a] = rng.gen::<f64>();
        }
    }
    MdpSpec::new(
        n_states,
        n_actions,
        p.into_iter().map(T::lit).collect(),
        r.into_iter().map(T::lit).collect(),
        T::lit(gamma),
        0,
    )
}
