//! Policy evaluation for the inner loop: behaviour rollouts restarted from the
//! policy cover, importance-weighted geometric-stopping returns, the regression
//! onto the function class, and the pessimistic critic assembled from the fit.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bonus::BonusOracle;
use crate::error::{Error, Result};
use crate::function_class::{FunctionClass, FunctionHandle};
use crate::mdp::{
    policy_evaluation_exact, rollout_geometric, ActionDistribution, InitialDistribution, MdpSpec, Simulator,
    Trajectory,
};
use crate::policy::{MixturePolicy, SoftmaxPolicy};
use crate::scalar::Scalar;

/// Bonus cap `B = 3/(1−γ)`.
pub fn bonus_cap<T: Scalar>(gamma: T) -> T {
    T::lit(3.0) / (T::one() - gamma)
}

/// Return cap `G_max = (2 + B)/(1−γ)`.
pub fn return_cap<T: Scalar>(gamma: T) -> T {
    (T::lit(2.0) + bonus_cap(gamma)) / (T::one() - gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsOptions<T> {
    /// Clip `λ` so that `|λG| ≤ 2 G_max`.
    pub clip: bool,
    /// Leave the bonus out of `G` for length-1 rollouts and skip the `b(s_F, a_F)`
    /// subtraction. Same expectation, different variance.
    pub exclude_first_step_bonus: bool,
    pub gamma: T,
}

impl<T: Scalar> IsOptions<T> {
    pub fn plain(gamma: T) -> Self {
        Self { clip: false, exclude_first_step_bonus: false, gamma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsEstimate<T> {
    pub lambda: T,
    pub g: T,
    pub target: T,
    pub clipped: bool,
}

/// `M` rollouts from one collection, all continued under the same behaviour policy.
#[derive(Debug, Clone)]
pub struct EvalDataset<T> {
    pub rollouts: Vec<Trajectory<T>>,
    pub behaviour: Arc<SoftmaxPolicy<T>>,
    pub oracle_version: u64,
    pub created_at_inner_step: usize,
    /// Environment transitions spent: restart sampling plus continuation.
    pub transitions: u64,
    pub truncated: usize,
}

/// Draw `m` rollouts: a cover leaf uniformly, a restart pair from its occupancy,
/// then a geometric-length continuation under `behaviour`. Rollout `i` uses stream
/// `i` of a generator seeded with `seed`, so the result does not depend on thread
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn behaviour_sample<T: Scalar>(
    sim: &Simulator<'_, T>,
    cover: &MixturePolicy<T>,
    behaviour: &Arc<SoftmaxPolicy<T>>,
    bonus: &BonusOracle<T>,
    m: usize,
    nu: &InitialDistribution<T>,
    horizon_cap: usize,
    seed: u64,
    inner_step: usize,
) -> EvalDataset<T> {
    assert!(m >= 1, "at least one rollout");
    let gamma = sim.mdp().gamma();
    let results: Vec<(Trajectory<T>, u64, bool)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let leaf = cover.sample_component(&mut rng);
            let start = sim.d_sample(leaf.as_ref(), nu, gamma, horizon_cap, &mut rng);
            let traj = rollout_geometric(
                sim,
                (start.state, start.action),
                behaviour.as_ref(),
                Some(bonus.bonus_table()),
                horizon_cap,
                &mut rng,
            );
            let used = (start.steps + traj.len() - 1) as u64;
            let truncated = start.truncated || traj.terminated_by == crate::mdp::Termination::HorizonCap;
            (traj, used, truncated)
        })
        .collect();
    let transitions = results.iter().map(|r| r.1).sum();
    let truncated = results.iter().filter(|r| r.2).count();
    EvalDataset {
        rollouts: results.into_iter().map(|r| r.0).collect(),
        behaviour: Arc::clone(behaviour),
        oracle_version: bonus.version(),
        created_at_inner_step: inner_step,
        transitions,
        truncated,
    }
}

/// Importance-weighted regression target for one rollout.
///
/// `λ = Π_{τ≥2} π(a_τ|s_τ)/π̲(a_τ|s_τ)`, `G = (r_L + b_L)/(1−γ)` at the last pair,
/// and the target is `λG − b(s_F, a_F)`, whose expectation is `Q_b^π − b` at the
/// first pair.
pub fn is_target<T, E, B>(
    rollout: &Trajectory<T>,
    evaluate: &E,
    behaviour: &B,
    bonus: &BonusOracle<T>,
    opts: &IsOptions<T>,
) -> Result<IsEstimate<T>>
where
    T: Scalar,
    E: ActionDistribution<T> + ?Sized,
    B: ActionDistribution<T> + ?Sized,
{
    let mut lambda = T::one();
    for step in &rollout.steps[1..] {
        let den = behaviour.action_prob(step.state, step.action);
        if den <= T::zero() {
            return Err(Error::UnsupportedBehaviour { state: step.state, action: step.action });
        }
        lambda *= evaluate.action_prob(step.state, step.action) / den;
    }
    let (first, last) = (rollout.first(), rollout.last());
    let one_minus_gamma = T::one() - opts.gamma;
    let b_first = bonus.bonus(first.state, first.action);
    let (g, offset) = if opts.exclude_first_step_bonus {
        let b_last = if rollout.len() == 1 { T::zero() } else { bonus.bonus(last.state, last.action) };
        ((last.reward + b_last) / one_minus_gamma, T::zero())
    } else {
        ((last.reward + bonus.bonus(last.state, last.action)) / one_minus_gamma, b_first)
    };
    let mut clipped = false;
    if opts.clip {
        let cap = T::lit(2.0) * return_cap(opts.gamma);
        if (lambda * g).abs() > cap {
            lambda = cap / (g.abs() + T::lit(1e-12));
            clipped = true;
        }
    }
    Ok(IsEstimate { lambda, g, target: lambda * g - offset, clipped })
}

/// Fitted critic: `Q̂ = f̂ + ½b` on known pairs and `f̂ + b` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic<T> {
    pub fit: FunctionHandle<T>,
    pub f_table: Vec<T>,
    pub q: Vec<T>,
}

impl<T: Scalar> Critic<T> {
    pub fn assemble(class: &FunctionClass<T>, fit: FunctionHandle<T>, bonus: &BonusOracle<T>) -> Self {
        let f_table = class.table(&fit);
        let na = class.n_actions();
        let half = T::lit(0.5);
        let q = f_table
            .iter()
            .enumerate()
            .map(|(z, f)| {
                let (s, a) = (z / na, z % na);
                let b = bonus.bonus(s, a);
                if bonus.known_pair(s, a) {
                    *f + half * b
                } else {
                    *f + b
                }
            })
            .collect();
        Self { fit, f_table, q }
    }

    pub fn get(&self, s: usize, a: usize, n_actions: usize) -> T {
        self.q[s * n_actions + a]
    }
}

/// Regress the importance-weighted targets of `data` onto `class`.
pub fn evaluate_policy<T: Scalar>(
    data: &EvalDataset<T>,
    evaluate: &SoftmaxPolicy<T>,
    class: &FunctionClass<T>,
    bonus: &BonusOracle<T>,
    opts: &IsOptions<T>,
) -> Result<Critic<T>> {
    if data.rollouts.is_empty() {
        return Err(Error::NoRegressionData);
    }
    let samples = data
        .rollouts
        .iter()
        .map(|r| {
            let est = is_target(r, evaluate, data.behaviour.as_ref(), bonus, opts)?;
            Ok(((r.first().state, r.first().action), est.target))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = class.fit_least_squares(&samples)?;
    Ok(Critic::assemble(class, fit, bonus))
}

/// Critic from the exact targets `Q_b^π − b` at every pair, with the same fit and
/// assembly as [`evaluate_policy`].
pub fn evaluate_policy_exact<T: Scalar>(
    mdp: &MdpSpec<T>,
    evaluate: &SoftmaxPolicy<T>,
    class: &FunctionClass<T>,
    bonus: &BonusOracle<T>,
) -> Result<Critic<T>> {
    let bonus_mdp = bonus.build_bonus_mdp(mdp)?;
    let table = evaluate.to_table(mdp.n_states());
    let sol = policy_evaluation_exact(&bonus_mdp, &table, T::lit(1e-12))?;
    let na = mdp.n_actions();
    let samples: Vec<_> = (0..mdp.n_pairs())
        .map(|z| {
            let (s, a) = (z / na, z % na);
            ((s, a), sol.q.get(s, a) - bonus.bonus(s, a))
        })
        .collect();
    let fit = class.fit_least_squares(&samples)?;
    Ok(Critic::assemble(class, fit, bonus))
}

/// Unclamped reuse window `(1−γ) ln 2 / (2 ln(1/δ₁) η (B + W))`.
pub fn kappa_formula<T: Scalar>(gamma: T, delta1: T, eta: T, b: T, w: T) -> T {
    (T::one() - gamma) * T::lit(std::f64::consts::LN_2) / (T::lit(2.0) * (-delta1.ln()) * eta * (b + w))
}

/// The reuse window, floored and clamped to `[1, k_inner]`.
pub fn kappa_window<T: Scalar>(gamma: T, delta1: T, eta: T, b: T, w: T, k_inner: usize) -> usize {
    let k_inner = k_inner.max(1);
    let raw = kappa_formula(gamma, delta1, eta, b, w);
    if !raw.is_finite() || raw >= T::from_usize_lossy(k_inner) {
        return k_inner;
    }
    raw.floor().to_usize().unwrap_or(1).clamp(1, k_inner)
}

/// JSON lines, one per rollout: the visited pairs, `λ`, `G` and the target.
pub fn dump_json_lines<T: Scalar>(
    data: &EvalDataset<T>,
    evaluate: &SoftmaxPolicy<T>,
    bonus: &BonusOracle<T>,
    opts: &IsOptions<T>,
) -> Result<String> {
    let mut out = String::new();
    for r in &data.rollouts {
        let est = is_target(r, evaluate, data.behaviour.as_ref(), bonus, opts)?;
        let pairs: Vec<[usize; 2]> = r.steps.iter().map(|s| [s.state, s.action]).collect();
        let line = serde_json::json!({
            "pairs": pairs,
            "lambda": est.lambda.as_f64(),
            "G": est.g.as_f64(),
            "target": est.target.as_f64(),
        });
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}
