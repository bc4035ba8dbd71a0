//! Simulation: geometric stopping times, the occupancy sampler and rollouts.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ActionDistribution, MdpSpec};
use crate::scalar::Scalar;

/// Draws an index from a discrete distribution (weights need not be normalised).
pub(crate) fn sample_index<T: Scalar, R: Rng + ?Sized>(weights: &[T], rng: &mut R) -> usize {
    let total: T = weights.iter().copied().sum();
    let u = T::lit(rng.gen::<f64>()) * total;
    let mut acc = T::zero();
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > T::zero() {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Samples `τ ≥ 1` with `P(τ) = γ^{τ−1}(1 − γ)`, truncated at `cap`.
///
/// Returns the (possibly truncated) value and whether truncation happened.
pub fn sample_geometric<T: Scalar, R: Rng + ?Sized>(gamma: T, cap: usize, rng: &mut R) -> (usize, bool) {
    assert!(cap >= 1, "horizon cap must be at least 1");
    let g = gamma.as_f64();
    if g <= 0.0 {
        return (1, false);
    }
    // 1 − U lies in (0, 1]
    let u = 1.0 - rng.gen::<f64>();
    let raw = 1.0 + (u.ln() / g.ln()).floor();
    if !raw.is_finite() || raw > cap as f64 {
        (cap, true)
    } else {
        (raw as usize, false)
    }
}

/// `⌈ln(10⁶) / (1 − γ)⌉`: geometric tail mass beyond the cap is below `10⁻⁶`.
pub fn default_horizon_cap<T: Scalar>(gamma: T) -> usize {
    ((1e6f64).ln() / (1.0 - gamma.as_f64())).ceil().max(1.0) as usize
}

/// Distribution `ν` over state-action pairs used to seed the occupancy sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution<T> {
    n_actions: usize,
    probs: Vec<T>,
}

impl<T: Scalar> InitialDistribution<T> {
    pub fn new(n_actions: usize, probs: Vec<T>) -> Self {
        Self { n_actions, probs }
    }

    /// `δ_{s₀} ⊗ Unif(A)`.
    pub fn default_for(mdp: &MdpSpec<T>) -> Self {
        let na = mdp.n_actions();
        let mut probs = vec![T::zero(); mdp.n_pairs()];
        let w = T::one() / T::from_usize_lossy(na);
        for a in 0..na {
            probs[mdp.pair_index(mdp.initial_state(), a)] = w;
        }
        Self { n_actions: na, probs }
    }

    /// Point mass at a single pair.
    pub fn point(mdp: &MdpSpec<T>, s: usize, a: usize) -> Self {
        let mut probs = vec![T::zero(); mdp.n_pairs()];
        probs[mdp.pair_index(s, a)] = T::one();
        Self { n_actions: mdp.n_actions(), probs }
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let i = sample_index(&self.probs, rng);
        (i / self.n_actions, i % self.n_actions)
    }
}

/// Environment access with a global transition counter.
///
/// Every next-state draw goes through [`Simulator::step`], so the counter is the
/// ground truth for sample accounting.
#[derive(Debug)]
pub struct Simulator<'m, T> {
    mdp: &'m MdpSpec<T>,
    transitions: AtomicU64,
}

impl<'m, T: Scalar> Simulator<'m, T> {
    pub fn new(mdp: &'m MdpSpec<T>) -> Self {
        Self { mdp, transitions: AtomicU64::new(0) }
    }

    pub fn mdp(&self) -> &'m MdpSpec<T> {
        self.mdp
    }

    pub fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        self.transitions.fetch_add(1, Ordering::Relaxed);
        sample_index(self.mdp.transition_row(s, a), rng)
    }

    pub fn transitions(&self) -> u64 {
        self.transitions.load(Ordering::Relaxed)
    }

    pub fn sample_action<P, R>(&self, policy: &P, s: usize, buf: &mut [T], rng: &mut R) -> usize
    where
        P: ActionDistribution<T> + ?Sized,
        R: Rng + ?Sized,
    {
        policy.probs_into(s, buf);
        sample_index(buf, rng)
    }

    /// Occupancy sampler: `(s₀, a₀) ~ ν`, stop time `τ ~ Geom(1 − γ)` capped at
    /// `horizon_cap`, then `τ − 1` steps under `policy`; the pair at the stop
    /// time is returned, so `τ = 1` yields the `ν` draw itself.
    pub fn d_sample<P, R>(
        &self,
        policy: &P,
        nu: &InitialDistribution<T>,
        gamma: T,
        horizon_cap: usize,
        rng: &mut R,
    ) -> DSample
    where
        P: ActionDistribution<T> + ?Sized,
        R: Rng + ?Sized,
    {
        let (mut s, mut a) = nu.sample(rng);
        let (tau, truncated) = sample_geometric(gamma, horizon_cap, rng);
        let mut buf = vec![T::zero(); policy.n_actions()];
        for _ in 1..tau {
            s = self.step(s, a, rng);
            a = self.sample_action(policy, s, &mut buf, rng);
        }
        DSample { state: s, action: a, steps: tau - 1, truncated }
    }
}

/// Result of one occupancy-sampler call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DSample {
    pub state: usize,
    pub action: usize,
    /// Environment transitions consumed (`τ − 1`).
    pub steps: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step<T> {
    pub state: usize,
    pub action: usize,
    pub reward: T,
    pub bonus: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GeometricStop,
    HorizonCap,
}

/// Nonempty rollout; the first step is the start pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub steps: Vec<Step<T>>,
    pub terminated_by: Termination,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> &Step<T> {
        &self.steps[0]
    }

    pub fn last(&self) -> &Step<T> {
        self.steps.last().expect("trajectory is nonempty")
    }
}

/// Geometric-length rollout from `start`: `h ~ Geom(1 − γ)` capped at `horizon_cap`,
/// then `h − 1` steps under `policy`. `bonus` (indexed by pair) is recorded per step.
pub fn rollout_geometric<T, P, R>(
    sim: &Simulator<'_, T>,
    start: (usize, usize),
    policy: &P,
    bonus: Option<&[T]>,
    horizon_cap: usize,
    rng: &mut R,
) -> Trajectory<T>
where
    T: Scalar,
    P: ActionDistribution<T> + ?Sized,
    R: Rng + ?Sized,
{
    let mdp = sim.mdp();
    let (h, truncated) = sample_geometric(mdp.gamma(), horizon_cap, rng);
    let record = |s: usize, a: usize| Step {
        state: s,
        action: a,
        reward: mdp.reward(s, a),
        bonus: bonus.map_or(T::zero(), |b| b[mdp.pair_index(s, a)]),
    };
    let mut steps = Vec::with_capacity(h);
    let (mut s, mut a) = start;
    steps.push(record(s, a));
    let mut buf = vec![T::zero(); policy.n_actions()];
    for _ in 1..h {
        s = sim.step(s, a, rng);
        a = sim.sample_action(policy, s, &mut buf, rng);
        steps.push(record(s, a));
    }
    Trajectory {
        steps,
        terminated_by: if truncated { Termination::HorizonCap } else { Termination::GeometricStop },
    }
}
