//! Finite discounted MDPs and their exact dynamic-programming oracles.
//!
//! Transitions are stored densely, row-major over `(s, a, s')`. The
//! [`FiniteModel`] trait lets the same solvers run on the plain MDP and on the
//! bonus-added / auxiliary constructions in [`AugmentedMdp`].

mod format;
mod generators;
mod sampling;

pub(crate) use sampling::sample_index;
pub use format::{parse_mdp_file, write_mdp_file, MdpFile};
pub use generators::{chain, grid, random_mdp, reset_chain, CHAIN_LEFT, CHAIN_RIGHT};
pub use sampling::{
    default_horizon_cap, rollout_geometric, sample_geometric, DSample, InitialDistribution,
    Simulator, Step, Termination, Trajectory,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{solve_dense, Scalar};

/// Finite discounted MDP `(S, A, P, r, γ)` with a single initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec<T> {
    n_states: usize,
    n_actions: usize,
    transition: Vec<T>,
    reward: Vec<T>,
    gamma: T,
    initial_state: usize,
}

impl<T: Scalar> MdpSpec<T> {
    /// Validates and builds an MDP. `transition` is indexed `[(s * A + a) * S + s']`,
    /// `reward` is indexed `[s * A + a]`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<T>,
        reward: Vec<T>,
        gamma: T,
        initial_state: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("n_states and n_actions must be positive".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::InvalidMdp(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::InvalidMdp(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::InvalidMdp(format!("gamma {gamma} outside (0, 1)")));
        }
        if initial_state >= n_states {
            return Err(Error::InvalidMdp(format!("initial state {initial_state} out of range")));
        }
        let tol = T::row_tolerance();
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                if row.iter().any(|p| !(p.is_finite() && *p >= T::zero())) {
                    return Err(Error::InvalidMdp(format!("negative or non-finite probability in row ({s}, {a})")));
                }
                let total: T = row.iter().copied().sum();
                if (total - T::one()).abs() > tol {
                    return Err(Error::InvalidMdp(format!("row ({s}, {a}) sums to {total}")));
                }
                let r = reward[s * n_actions + a];
                if !(r >= T::zero() && r <= T::one()) {
                    return Err(Error::InvalidMdp(format!("reward {r} at ({s}, {a}) outside [0, 1]")));
                }
            }
        }
        Ok(Self { n_states, n_actions, transition, reward, gamma, initial_state })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// Next-state distribution `P(· | s, a)`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> T {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[T] {
        &self.reward
    }

    /// Same dynamics with a different discount.
    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, self.transition.clone(), self.reward.clone(), gamma, self.initial_state)
    }

    /// Converts the tables to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Result<MdpSpec<U>> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<_>>();
        MdpSpec::new(
            self.n_states,
            self.n_actions,
            conv(&self.transition),
            conv(&self.reward),
            U::lit(self.gamma.as_f64()),
            self.initial_state,
        )
    }
}

/// A finite model the exact solvers can run on.
pub trait FiniteModel<T: Scalar> {
    fn n_states(&self) -> usize;
    /// Number of action columns, including any extension action.
    fn n_actions(&self) -> usize;
    fn gamma(&self) -> T;
    fn initial_state(&self) -> usize;
    fn is_available(&self, s: usize, a: usize) -> bool;
    fn reward(&self, s: usize, a: usize) -> T;
    /// Calls `f(s', p)` for every next state with positive probability.
    fn for_each_next(&self, s: usize, a: usize, f: &mut dyn FnMut(usize, T));

    fn expected_next(&self, s: usize, a: usize, v: &[T]) -> T {
        let mut acc = T::zero();
        self.for_each_next(s, a, &mut |sp, p| acc += p * v[sp]);
        acc
    }
}

impl<T: Scalar> FiniteModel<T> for MdpSpec<T> {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn gamma(&self) -> T {
        self.gamma
    }
    fn initial_state(&self) -> usize {
        self.initial_state
    }
    fn is_available(&self, s: usize, a: usize) -> bool {
        s < self.n_states && a < self.n_actions
    }
    fn reward(&self, s: usize, a: usize) -> T {
        MdpSpec::reward(self, s, a)
    }
    fn for_each_next(&self, s: usize, a: usize, f: &mut dyn FnMut(usize, T)) {
        for (sp, &p) in self.transition_row(s, a).iter().enumerate() {
            if p > T::zero() {
                f(sp, p);
            }
        }
    }
}

/// Reward of the absorbing extension action.
pub const ABSORBING_REWARD: f64 = 3.0;

/// An MDP with an additive reward bonus and, optionally, an absorbing action
/// `a†` (index `base.n_actions()`) that exists only at flagged states.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMdp<T> {
    base: MdpSpec<T>,
    extra_reward: Vec<T>,
    unknown_states: Option<Vec<bool>>,
}

impl<T: Scalar> AugmentedMdp<T> {
    pub fn new(base: MdpSpec<T>, extra_reward: Vec<T>, unknown_states: Option<Vec<bool>>) -> Result<Self> {
        if extra_reward.len() != base.n_pairs() {
            return Err(Error::InvalidMdp("bonus table does not match (S, A)".into()));
        }
        if extra_reward.iter().any(|b| !(b.is_finite() && *b >= T::zero())) {
            return Err(Error::InvalidMdp("bonus must be finite and nonnegative".into()));
        }
        if let Some(flags) = &unknown_states {
            if flags.len() != base.n_states() {
                return Err(Error::InvalidMdp("unknown-state flags do not match S".into()));
            }
        }
        Ok(Self { base, extra_reward, unknown_states })
    }

    pub fn base(&self) -> &MdpSpec<T> {
        &self.base
    }

    pub fn extra_reward(&self) -> &[T] {
        &self.extra_reward
    }

    pub fn has_absorbing_action(&self) -> bool {
        self.unknown_states.is_some()
    }

    /// Index of `a†` when the absorbing extension is present.
    pub fn absorbing_action(&self) -> Option<usize> {
        self.unknown_states.as_ref().map(|_| self.base.n_actions())
    }

    pub fn is_unknown_state(&self, s: usize) -> bool {
        self.unknown_states.as_ref().is_some_and(|f| f[s])
    }
}

impl<T: Scalar> FiniteModel<T> for AugmentedMdp<T> {
    fn n_states(&self) -> usize {
        self.base.n_states()
    }
    fn n_actions(&self) -> usize {
        self.base.n_actions() + usize::from(self.unknown_states.is_some())
    }
    fn gamma(&self) -> T {
        self.base.gamma()
    }
    fn initial_state(&self) -> usize {
        self.base.initial_state()
    }
    fn is_available(&self, s: usize, a: usize) -> bool {
        if s >= self.base.n_states() {
            return false;
        }
        if a < self.base.n_actions() {
            return true;
        }
        a == self.base.n_actions() && self.is_unknown_state(s)
    }
    fn reward(&self, s: usize, a: usize) -> T {
        if a == self.base.n_actions() {
            T::lit(ABSORBING_REWARD)
        } else {
            self.base.reward(s, a) + self.extra_reward[self.base.pair_index(s, a)]
        }
    }
    fn for_each_next(&self, s: usize, a: usize, f: &mut dyn FnMut(usize, T)) {
        if a == self.base.n_actions() {
            f(s, T::one());
        } else {
            self.base.for_each_next(s, a, f);
        }
    }
}

/// Dense `(s, a)`-indexed table of action values. Unavailable actions hold `-∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> QTable<T> {
    #[inline]
    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Output of an exact solver: `Q`, `V`, and the number of sweeps used.
#[derive(Debug, Clone)]
pub struct ValueSolution<T> {
    pub q: QTable<T>,
    pub v: Vec<T>,
    pub sweeps: usize,
}

/// Dense stochastic policy over the action columns of a [`FiniteModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable<T> {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<T>,
}

impl<T: Scalar> PolicyTable<T> {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(n_actions);
        Self { n_states, n_actions, probs: vec![p; n_states * n_actions] }
    }

    /// Deterministic policy playing `actions[s]` at each state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![T::zero(); actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = T::one();
        }
        Self { n_states: actions.len(), n_actions, probs }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> T {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [T] {
        &mut self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Pads with zero-probability columns up to `n_actions` (e.g. to act on an augmented model).
    pub fn widen(&self, n_actions: usize) -> Self {
        assert!(n_actions >= self.n_actions);
        let mut probs = vec![T::zero(); self.n_states * n_actions];
        for s in 0..self.n_states {
            probs[s * n_actions..s * n_actions + self.n_actions].copy_from_slice(self.row(s));
        }
        Self { n_states: self.n_states, n_actions, probs }
    }
}

/// Anything that yields an action distribution per state.
pub trait ActionDistribution<T: Scalar> {
    fn n_actions(&self) -> usize;
    /// Writes `π(· | s)` into `out` (length `n_actions()`).
    fn probs_into(&self, s: usize, out: &mut [T]);

    fn action_prob(&self, s: usize, a: usize) -> T {
        let mut buf = vec![T::zero(); self.n_actions()];
        self.probs_into(s, &mut buf);
        buf[a]
    }

    /// Materialises the policy over `n_states` states.
    fn to_table(&self, n_states: usize) -> PolicyTable<T> {
        let n_actions = self.n_actions();
        let mut table = PolicyTable { n_states, n_actions, probs: vec![T::zero(); n_states * n_actions] };
        for s in 0..n_states {
            self.probs_into(s, table.row_mut(s));
        }
        table
    }
}

impl<T: Scalar> ActionDistribution<T> for PolicyTable<T> {
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn probs_into(&self, s: usize, out: &mut [T]) {
        out.copy_from_slice(self.row(s));
    }
}

fn bellman_backup<T: Scalar, M: FiniteModel<T> + ?Sized>(model: &M, v: &[T], q: &mut [T]) {
    let (ns, na, gamma) = (model.n_states(), model.n_actions(), model.gamma());
    for s in 0..ns {
        for a in 0..na {
            q[s * na + a] = if model.is_available(s, a) {
                model.reward(s, a) + gamma * model.expected_next(s, a, v)
            } else {
                T::neg_infinity()
            };
        }
    }
}

fn greedy_values<T: Scalar>(q: &[T], ns: usize, na: usize, v: &mut [T]) {
    for s in 0..ns {
        v[s] = q[s * na..(s + 1) * na].iter().copied().fold(T::neg_infinity(), T::max);
    }
}

/// Optimal `Q*`, `V*` by fixed-point iteration until the sup-norm Bellman residual of
/// the returned `Q` is at most `tol`.
pub fn value_iteration<T: Scalar, M: FiniteModel<T> + ?Sized>(model: &M, tol: T) -> ValueSolution<T> {
    assert!(tol > T::zero(), "tol must be positive");
    let (ns, na, gamma) = (model.n_states(), model.n_actions(), model.gamma());
    let mut v = vec![T::zero(); ns];
    let mut q = vec![T::zero(); ns * na];
    let mut v_next = vec![T::zero(); ns];
    let max_sweeps = 1_000_000;
    let mut sweeps = 0;
    loop {
        bellman_backup(model, &v, &mut q);
        greedy_values(&q, ns, na, &mut v_next);
        sweeps += 1;
        let gap = v.iter().zip(&v_next).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
        std::mem::swap(&mut v, &mut v_next);
        // residual of q (built from the previous v) is at most gamma * gap
        if gamma * gap <= tol || gap == T::zero() || sweeps >= max_sweeps {
            break;
        }
    }
    ValueSolution { q: QTable { n_states: ns, n_actions: na, values: q }, v, sweeps }
}

/// Sup-norm Bellman optimality residual `‖T Q − Q‖∞` over available pairs.
pub fn bellman_optimality_residual<T: Scalar, M: FiniteModel<T> + ?Sized>(model: &M, q: &QTable<T>) -> T {
    let (ns, na) = (model.n_states(), model.n_actions());
    let mut v = vec![T::zero(); ns];
    greedy_values(&q.values, ns, na, &mut v);
    let mut backed = vec![T::zero(); ns * na];
    bellman_backup(model, &v, &mut backed);
    let mut worst = T::zero();
    for s in 0..ns {
        for a in 0..na {
            if model.is_available(s, a) {
                worst = worst.max((backed[s * na + a] - q.get(s, a)).abs());
            }
        }
    }
    worst
}

fn check_policy_support<T: Scalar, M: FiniteModel<T> + ?Sized>(model: &M, policy: &PolicyTable<T>) -> Result<()> {
    if policy.n_states != model.n_states() || policy.n_actions > model.n_actions() {
        return Err(Error::InvalidMdp(format!(
            "policy shape {}x{} does not fit model {}x{}",
            policy.n_states,
            policy.n_actions,
            model.n_states(),
            model.n_actions()
        )));
    }
    for s in 0..policy.n_states {
        for a in 0..policy.n_actions {
            if policy.prob(s, a) > T::zero() && !model.is_available(s, a) {
                return Err(Error::ActionUnavailable { state: s, action: a });
            }
        }
    }
    Ok(())
}

/// State-to-state kernel `P_π` (row-major) and expected reward `r_π`.
fn policy_kernel<T: Scalar, M: FiniteModel<T> + ?Sized>(model: &M, policy: &PolicyTable<T>) -> (Vec<T>, Vec<T>) {
    let ns = model.n_states();
    let mut p = vec![T::zero(); ns * ns];
    let mut r = vec![T::zero(); ns];
    for s in 0..ns {
        for a in 0..policy.n_actions {
            let w = policy.prob(s, a);
            if w == T::zero() {
                continue;
            }
            r[s] += w * model.reward(s, a);
            model.for_each_next(s, a, &mut |sp, prob| p[s * ns + sp] += w * prob);
        }
    }
    (p, r)
}

/// Exact `Q^π`, `V^π` by a dense linear solve, polished with fixed-point sweeps until the
/// Bellman residual for `π` is at most `tol`.
pub fn policy_evaluation_exact<T: Scalar, M: FiniteModel<T> + ?Sized>(
    model: &M,
    policy: &PolicyTable<T>,
    tol: T,
) -> Result<ValueSolution<T>> {
    check_policy_support(model, policy)?;
    let (ns, na, gamma) = (model.n_states(), model.n_actions(), model.gamma());
    let (p, r) = policy_kernel(model, policy);
    let mut a = vec![T::zero(); ns * ns];
    for i in 0..ns {
        for j in 0..ns {
            a[i * ns + j] = -gamma * p[i * ns + j];
        }
        a[i * ns + i] += T::one();
    }
    let mut v = solve_dense(a, r.clone(), ns).ok_or_else(|| Error::InvalidMdp("singular policy system".into()))?;
    let mut sweeps = 0;
    loop {
        let mut worst = T::zero();
        let mut next = vec![T::zero(); ns];
        for s in 0..ns {
            let mut acc = r[s];
            for sp in 0..ns {
                acc += gamma * p[s * ns + sp] * v[sp];
            }
            worst = worst.max((acc - v[s]).abs());
            next[s] = acc;
        }
        if worst <= tol || sweeps >= 100_000 {
            break;
        }
        v = next;
        sweeps += 1;
    }
    let mut q = vec![T::zero(); ns * na];
    bellman_backup(model, &v, &mut q);
    Ok(ValueSolution { q: QTable { n_states: ns, n_actions: na, values: q }, v, sweeps })
}

/// Discounted state-action occupancy `d^π_ν = (1−γ) Σ_t γ^t Pr(s_t, a_t)` with
/// `(s_0, a_0) ~ ν`. `nu` is indexed like the policy table.
pub fn occupancy_exact<T: Scalar, M: FiniteModel<T> + ?Sized>(
    model: &M,
    policy: &PolicyTable<T>,
    nu: &[T],
) -> Result<Vec<T>> {
    check_policy_support(model, policy)?;
    let (ns, na, gamma) = (model.n_states(), policy.n_actions, model.gamma());
    if nu.len() != ns * na {
        return Err(Error::InvalidMdp("initial distribution does not match (S, A)".into()));
    }
    let (p, _) = policy_kernel(model, policy);
    // incoming state mass m solves (I − γ P_πᵀ) m = (1 − γ) c, c(s) = Σ ν(s', a') P(s | s', a')
    let mut c = vec![T::zero(); ns];
    for s in 0..ns {
        for a in 0..na {
            let w = nu[s * na + a];
            if w > T::zero() {
                model.for_each_next(s, a, &mut |sp, prob| c[sp] += w * prob);
            }
        }
    }
    let mut mat = vec![T::zero(); ns * ns];
    for i in 0..ns {
        for j in 0..ns {
            mat[i * ns + j] = -gamma * p[j * ns + i];
        }
        mat[i * ns + i] += T::one();
    }
    let rhs: Vec<T> = c.iter().map(|x| (T::one() - gamma) * *x).collect();
    let m = solve_dense(mat, rhs, ns).ok_or_else(|| Error::InvalidMdp("singular occupancy system".into()))?;
    let mut d = vec![T::zero(); ns * na];
    for s in 0..ns {
        for a in 0..na {
            d[s * na + a] = (T::one() - gamma) * nu[s * na + a] + gamma * m[s] * policy.prob(s, a);
        }
    }
    Ok(d)
}

/// Greedy deterministic policy with respect to `q` (lowest index wins ties).
pub fn greedy_policy<T: Scalar>(q: &QTable<T>) -> PolicyTable<T> {
    let actions: Vec<usize> = (0..q.n_states)
        .map(|s| {
            let row = q.row(s);
            let mut best = 0;
            for a in 1..row.len() {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    PolicyTable::deterministic(q.n_actions, &actions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(r: f64, gamma: f64) -> MdpSpec<f64> {
        MdpSpec::new(1, 1, vec![1.0], vec![r], gamma, 0).unwrap()
    }

    /// start(0) -> goal(1) deterministically, goal self-loops with reward 1.
    fn two_state_goal(gamma: f64) -> MdpSpec<f64> {
        MdpSpec::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 1.0], gamma, 0).unwrap()
    }

    /// 0 -> 1 -> 0 deterministic cycle, single action.
    fn two_cycle(gamma: f64) -> MdpSpec<f64> {
        MdpSpec::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 0.0], gamma, 0).unwrap()
    }

    #[test]
    fn rejects_bad_rows_rewards_and_gamma() {
        assert!(MdpSpec::new(1, 1, vec![0.9], vec![0.0], 0.5, 0).is_err());
        assert!(MdpSpec::new(2, 1, vec![1.5, -0.5, 0.0, 1.0], vec![0.0, 0.0], 0.5, 0).is_err());
        assert!(MdpSpec::new(1, 1, vec![1.0], vec![1.5], 0.5, 0).is_err());
        assert!(MdpSpec::new(1, 1, vec![1.0], vec![0.5], 1.0, 0).is_err());
        assert!(MdpSpec::new(1, 1, vec![1.0], vec![0.5], 0.0, 0).is_err());
        assert!(MdpSpec::new(1, 1, vec![1.0], vec![0.5], 0.5, 3).is_err());
    }

    #[test]
    fn geometric_series_value() {
        let sol = value_iteration(&single_state(1.0, 0.9), 1e-10);
        assert!((sol.v[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn two_state_goal_values() {
        let sol = value_iteration(&two_state_goal(0.5), 1e-10);
        assert!((sol.v[0] - 1.0).abs() < 1e-9);
        assert!((sol.v[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_reward_zero_value() {
        let mdp = random_mdp::<f64>(3, 6, 3, 2, 0.8).unwrap();
        let zero = MdpSpec::new(6, 3, mdp.transition.clone(), vec![0.0; 18], 0.8, 0).unwrap();
        let sol = value_iteration(&zero, 1e-10);
        assert!(sol.v.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn residual_below_tolerance() {
        for seed in 0..5 {
            let mdp = random_mdp::<f64>(seed, 20, 3, 4, 0.95).unwrap();
            let sol = value_iteration(&mdp, 1e-10);
            assert!(bellman_optimality_residual(&mdp, &sol.q) <= 1e-10);
        }
    }

    #[test]
    fn uniform_policy_symmetric_rewards() {
        let mdp: MdpSpec<f64> = MdpSpec::new(1, 2, vec![1.0, 1.0], vec![0.5, 0.5], 0.5, 0).unwrap();
        let sol = policy_evaluation_exact(&mdp, &PolicyTable::uniform(1, 2), 1e-12).unwrap();
        assert!(sol.q.values.iter().all(|q| (q - 1.0).abs() < 1e-12));
    }

    #[test]
    fn right_moving_chain_value() {
        // 3-chain, action 0 moves right, terminal state 2 absorbing with reward 1.
        let mdp = chain::<f64>(3, 0.0, true, 0.9).unwrap();
        let pol = PolicyTable::deterministic(2, &[0, 0, 0]);
        let sol = policy_evaluation_exact(&mdp, &pol, 1e-12).unwrap();
        assert!((sol.v[0] - 8.1).abs() < 1e-9);
    }

    #[test]
    fn greedy_evaluation_matches_optimum() {
        let mdp = random_mdp::<f64>(11, 8, 3, 3, 0.9).unwrap();
        let opt = value_iteration(&mdp, 1e-10);
        let pol = greedy_policy(&opt.q);
        let eval = policy_evaluation_exact(&mdp, &pol, 1e-10).unwrap();
        for s in 0..8 {
            assert!((eval.v[s] - opt.v[s]).abs() <= 1e-9);
        }
    }

    #[test]
    fn absorbing_action_value() {
        let base = single_state(0.0, 0.8);
        let aug = AugmentedMdp::new(base, vec![0.0], Some(vec![true])).unwrap();
        let pol = PolicyTable::deterministic(2, &[1]);
        let sol = policy_evaluation_exact(&aug, &pol, 1e-12).unwrap();
        assert!((sol.v[0] - 3.0 / 0.2).abs() < 1e-9);
    }

    #[test]
    fn absorbing_action_unavailable_at_known_state() {
        let base = two_state_goal(0.5);
        let aug = AugmentedMdp::new(base, vec![0.0; 2], Some(vec![false, true])).unwrap();
        let pol = PolicyTable::deterministic(2, &[1, 1]);
        let err = policy_evaluation_exact(&aug, &pol, 1e-12).unwrap_err();
        assert_eq!(err, Error::ActionUnavailable { state: 0, action: 1 });
    }

    #[test]
    fn occupancy_of_two_cycle() {
        let mdp = two_cycle(0.5);
        let d = occupancy_exact(&mdp, &PolicyTable::uniform(2, 1), &[1.0, 0.0]).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((d[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_of_absorbing_pair() {
        let mdp = single_state(0.3, 0.7);
        let d = occupancy_exact(&mdp, &PolicyTable::uniform(1, 1), &[1.0]).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_sums_to_one() {
        let mdp = random_mdp::<f64>(5, 12, 3, 3, 0.95).unwrap();
        let nu = InitialDistribution::default_for(&mdp);
        let d = occupancy_exact(&mdp, &PolicyTable::uniform(12, 3), nu.probs()).unwrap();
        let total: f64 = d.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(d.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn works_in_single_precision() {
        let sol = value_iteration(&two_state_goal(0.5).cast::<f32>().unwrap(), 1e-5f32);
        assert!((sol.v[1] - 2.0).abs() < 1e-4);
    }
}
