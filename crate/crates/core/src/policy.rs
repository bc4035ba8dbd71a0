//! Softmax policies updated by natural policy gradient, and uniform mixtures of them.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bonus::BonusOracle;
use crate::error::{Error, Result};
use crate::mdp::{sample_index, ActionDistribution};
use crate::scalar::Scalar;

/// `π(a|s) ∝ exp(c(s, a))` at known states, where `c` is the η-weighted sum of all
/// critics applied so far. At unknown states the policy keeps its birth-time base
/// rule: uniform over the unknown actions (uniform over all actions if none are).
///
/// The known set is frozen at creation, so a policy never changes behaviour when the
/// known set later grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy<T>", bound(deserialize = "T: Scalar"))]
pub struct SoftmaxPolicy<T> {
    n_states: usize,
    n_actions: usize,
    known_state: Vec<bool>,
    known_pair: Vec<bool>,
    critic_sum: Vec<T>,
    #[serde(skip)]
    probs: Vec<T>,
}

impl<T: Scalar> SoftmaxPolicy<T> {
    /// Uniform at every state, with every state treated as known.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self::from_parts(vec![true; n_states], vec![true; n_states * n_actions], vec![T::zero(); n_states * n_actions], n_actions)
    }

    /// The inner loop's starting policy for a given known set.
    pub fn initial(oracle: &BonusOracle<T>) -> Self {
        let (ns, na) = (oracle.n_states(), oracle.n_actions());
        let known_pair = (0..ns * na).map(|z| oracle.known_pair(z / na, z % na)).collect();
        Self::from_parts(oracle.known_states().to_vec(), known_pair, vec![T::zero(); ns * na], na)
    }

    fn from_parts(known_state: Vec<bool>, known_pair: Vec<bool>, critic_sum: Vec<T>, n_actions: usize) -> Self {
        let n_states = known_state.len();
        let mut p = Self { n_states, n_actions, known_state, known_pair, critic_sum, probs: Vec::new() };
        p.refresh();
        p
    }

    fn refresh(&mut self) {
        let na = self.n_actions;
        self.probs = vec![T::zero(); self.n_states * na];
        for s in 0..self.n_states {
            let row = &mut self.probs[s * na..(s + 1) * na];
            if self.known_state[s] {
                let c = &self.critic_sum[s * na..(s + 1) * na];
                let max = c.iter().copied().fold(T::neg_infinity(), T::max);
                for (p, x) in row.iter_mut().zip(c) {
                    *p = (*x - max).exp();
                }
                let total: T = row.iter().copied().sum();
                row.iter_mut().for_each(|p| *p /= total);
            } else {
                let unknown = &self.known_pair[s * na..(s + 1) * na];
                let n_unknown = unknown.iter().filter(|k| !**k).count();
                if n_unknown == 0 {
                    row.iter_mut().for_each(|p| *p = T::one() / T::from_usize_lossy(na));
                } else {
                    let w = T::one() / T::from_usize_lossy(n_unknown);
                    for (p, k) in row.iter_mut().zip(unknown) {
                        *p = if *k { T::zero() } else { w };
                    }
                }
            }
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn is_known(&self, s: usize) -> bool {
        self.known_state[s]
    }

    /// Unknown states whose actions are all known pairs; they fall back to uniform.
    pub fn fallback_states(&self) -> usize {
        (0..self.n_states)
            .filter(|&s| !self.known_state[s] && self.known_pair[s * self.n_actions..(s + 1) * self.n_actions].iter().all(|k| *k))
            .count()
    }

    pub fn critic_sum(&self) -> &[T] {
        &self.critic_sum
    }

    pub fn prob(&self, s: usize, a: usize) -> T {
        self.probs[s * self.n_actions + a]
    }

    pub fn probs(&self, s: usize) -> &[T] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `π_{k+1}(·|s) ∝ π_k(·|s) exp(η Q̂(s, ·))` at known states; unknown states untouched.
    pub fn npg_step(&self, q_hat: &[T], eta: T) -> Self {
        assert_eq!(q_hat.len(), self.critic_sum.len(), "critic must cover every pair");
        assert!(eta >= T::zero(), "step size must be nonnegative");
        let na = self.n_actions;
        let mut critic_sum = self.critic_sum.clone();
        for s in (0..self.n_states).filter(|&s| self.known_state[s]) {
            for z in s * na..(s + 1) * na {
                critic_sum[z] += eta * q_hat[z];
            }
        }
        Self::from_parts(self.known_state.clone(), self.known_pair.clone(), critic_sum, na)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(self.probs(s), rng)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
    }
}

#[derive(Deserialize)]
struct RawPolicy<T> {
    n_states: usize,
    n_actions: usize,
    known_state: Vec<bool>,
    known_pair: Vec<bool>,
    critic_sum: Vec<T>,
}

impl<T: Scalar> TryFrom<RawPolicy<T>> for SoftmaxPolicy<T> {
    type Error = String;

    fn try_from(raw: RawPolicy<T>) -> std::result::Result<Self, String> {
        if raw.n_actions == 0
            || raw.known_state.len() != raw.n_states
            || raw.known_pair.len() != raw.n_states * raw.n_actions
            || raw.critic_sum.len() != raw.known_pair.len()
        {
            return Err("inconsistent policy dimensions".into());
        }
        Ok(Self::from_parts(raw.known_state, raw.known_pair, raw.critic_sum, raw.n_actions))
    }
}

impl<T: Scalar> ActionDistribution<T> for SoftmaxPolicy<T> {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, s: usize, out: &mut [T]) {
        out.copy_from_slice(self.probs(s));
    }

    fn action_prob(&self, s: usize, a: usize) -> T {
        self.prob(s, a)
    }
}

#[derive(Debug, Clone)]
pub enum MixtureComponent<T> {
    Leaf(Arc<SoftmaxPolicy<T>>),
    Nested(Arc<MixturePolicy<T>>),
}

/// Uniform mixture at trajectory granularity: a run of the mixture picks one leaf
/// policy up front and follows it throughout. Its per-state probabilities (the
/// [`ActionDistribution`] impl) are the component averages, which is what an
/// importance weight needs but not what drives its occupancy.
#[derive(Debug, Clone)]
pub struct MixturePolicy<T> {
    n_actions: usize,
    components: Vec<MixtureComponent<T>>,
}

impl<T: Scalar> MixturePolicy<T> {
    pub fn new(components: Vec<MixtureComponent<T>>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::Invariant("empty mixture".into()))?;
        let n_actions = match first {
            MixtureComponent::Leaf(p) => p.n_actions,
            MixtureComponent::Nested(m) => m.n_actions,
        };
        Ok(Self { n_actions, components })
    }

    pub fn of_leaves(leaves: Vec<Arc<SoftmaxPolicy<T>>>) -> Result<Self> {
        Self::new(leaves.into_iter().map(MixtureComponent::Leaf).collect())
    }

    pub fn singleton(leaf: Arc<SoftmaxPolicy<T>>) -> Self {
        Self { n_actions: leaf.n_actions, components: vec![MixtureComponent::Leaf(leaf)] }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[MixtureComponent<T>] {
        &self.components
    }

    pub fn push(&mut self, component: MixtureComponent<T>) {
        self.components.push(component);
    }

    /// Draw a component uniformly, recursing into nested mixtures until a leaf.
    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> &Arc<SoftmaxPolicy<T>> {
        let mut m = self;
        loop {
            match &m.components[rng.gen_range(0..m.components.len())] {
                MixtureComponent::Leaf(p) => return p,
                MixtureComponent::Nested(inner) => m = inner,
            }
        }
    }

    /// Every leaf with its total mixing weight. Shared leaves are reported once per
    /// occurrence.
    pub fn leaves(&self) -> Vec<(Arc<SoftmaxPolicy<T>>, f64)> {
        let mut out = Vec::new();
        self.collect_leaves(1.0, &mut out);
        out
    }

    fn collect_leaves(&self, weight: f64, out: &mut Vec<(Arc<SoftmaxPolicy<T>>, f64)>) {
        let w = weight / self.components.len() as f64;
        for c in &self.components {
            match c {
                MixtureComponent::Leaf(p) => out.push((Arc::clone(p), w)),
                MixtureComponent::Nested(m) => m.collect_leaves(w, out),
            }
        }
    }

    pub fn prob(&self, s: usize, a: usize) -> T {
        let mut buf = vec![T::zero(); self.n_actions];
        self.probs_into(s, &mut buf);
        buf[a]
    }
}

impl<T: Scalar> ActionDistribution<T> for MixturePolicy<T> {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, s: usize, out: &mut [T]) {
        out.iter_mut().for_each(|p| *p = T::zero());
        let mut tmp = vec![T::zero(); self.n_actions];
        for c in &self.components {
            match c {
                MixtureComponent::Leaf(p) => tmp.copy_from_slice(p.probs(s)),
                MixtureComponent::Nested(m) => m.probs_into(s, &mut tmp),
            }
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += *t;
            }
        }
        let n = T::from_usize_lossy(self.components.len());
        out.iter_mut().for_each(|p| *p /= n);
    }
}
