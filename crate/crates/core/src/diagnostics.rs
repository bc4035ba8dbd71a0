//! Checks of the analysis on small instances: a brute-force eluder dimension, and
//! exact verifications of the structural inequalities the guarantees rest on
//! (one-sided critic error, NPG regret, distribution dominance, partial optimism,
//! negative advantage, bonus sums). Every checker reads stored run artifacts or
//! explicit instances; none of them re-runs an experiment.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::bonus::{BonusOracle, BonusVariant};
use crate::driver::{run_lpo, EvalMode, InnerArtifact, Lpo, LpoConfig, MetricsRow, RunOutput};
use crate::error::{Error, Result};
use crate::function_class::FunctionClass;
use crate::mdp::{
    greedy_policy, occupancy_exact, policy_evaluation_exact, random_mdp, value_iteration, ActionDistribution,
    AugmentedMdp, MdpSpec, PolicyTable,
};
use crate::policy::{MixturePolicy, SoftmaxPolicy};
use crate::scalar::Scalar;

/// Largest candidate set the eluder search accepts.
pub const ELUDER_MAX_CANDIDATES: usize = 12;

/// Length of the longest sequence of candidates in which every element is
/// ε'-independent of its predecessors, for some ε' on the grid `ε·2^j < 2W`.
///
/// Independence of `z` from a set `P` means some `Δf ∈ F − F` has
/// `Σ_{p∈P} Δf(p)² ≤ ε'²` yet `|Δf(z)| > ε'`, decided with the grid search of
/// [`FunctionClass::width_bruteforce`]. The search runs over predecessor subsets,
/// which covers every ordering.
pub fn eluder_dimension_bruteforce<T: Scalar>(
    class: &FunctionClass<T>,
    candidates: &[(usize, usize)],
    epsilon: T,
    grid_step: T,
) -> Result<usize> {
    if candidates.len() > ELUDER_MAX_CANDIDATES {
        return Err(Error::OracleScaleExceeded(format!(
            "{} candidates > {ELUDER_MAX_CANDIDATES}",
            candidates.len()
        )));
    }
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidClass("epsilon must be positive".into()));
    }
    let two_w = T::lit(2.0) * class.bound();
    let n = candidates.len();
    let mut best = 0;
    let mut scale = epsilon;
    while scale < two_w {
        let mut cache: HashMap<(usize, u32), bool> = HashMap::new();
        let mut independent = |z: usize, mask: u32| -> Result<bool> {
            if let Some(&v) = cache.get(&(z, mask)) {
                return Ok(v);
            }
            let mut weights = vec![T::zero(); class.n_pairs()];
            for (i, &(s, a)) in candidates.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    weights[s * class.n_actions() + a] += T::one();
                }
            }
            let (s, a) = candidates[z];
            let w = class.width_bruteforce(&weights, scale * scale, s, a, grid_step)?;
            let v = w > scale * (T::one() + T::lit(1e-9));
            cache.insert((z, mask), v);
            Ok(v)
        };
        let mut reachable = vec![false; 1 << n];
        reachable[0] = true;
        for mask in 0..(1u32 << n) {
            if !reachable[mask as usize] {
                continue;
            }
            best = best.max(mask.count_ones() as usize);
            for z in 0..n {
                let bit = 1u32 << z;
                if mask & bit == 0 && !reachable[(mask | bit) as usize] && independent(z, mask)? {
                    reachable[(mask | bit) as usize] = true;
                }
            }
        }
        scale *= T::lit(2.0);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lemma {
    OneSidedError,
    NpgRegret,
    BonusConcentration,
    DistributionDominance,
    PartialOptimism,
    NegativeAdvantage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub lemma: Lemma,
    pub instances_checked: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

impl LemmaReport {
    fn new(lemma: Lemma, instances_checked: usize, max_violation: f64, tolerance: f64, note: impl Into<String>) -> Self {
        let pass = max_violation <= tolerance && !max_violation.is_nan();
        Self { lemma, instances_checked, max_violation, tolerance, pass, note: note.into() }
    }
}

fn require_artifacts<T>(artifacts: &[InnerArtifact<T>], exact: bool) -> Result<()> {
    if artifacts.is_empty() {
        return Err(Error::MissingArtifacts("run was not recorded with record_artifacts".into()));
    }
    if exact && artifacts.iter().any(|a| !a.exact) {
        return Err(Error::MissingArtifacts("checker needs an exact-evaluation run".into()));
    }
    Ok(())
}

/// `0 ≤ Q_b^{π_k} − Q̂_k ≤ 2ω/β` at every known pair of every inner iteration.
pub fn check_optimism<T: Scalar>(artifacts: &[InnerArtifact<T>], mdp: &MdpSpec<T>, tolerance: f64) -> Result<LemmaReport> {
    require_artifacts(artifacts, true)?;
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for art in artifacts {
        let bonus_mdp = art.oracle.build_bonus_mdp(mdp)?;
        for (pi, q_hat) in art.policies.iter().zip(&art.critics) {
            let qb = policy_evaluation_exact(&bonus_mdp, &pi.to_table(ns), T::lit(1e-12))?.q;
            for s in 0..ns {
                for a in 0..na {
                    if !art.oracle.known_pair(s, a) {
                        continue;
                    }
                    let gap = (qb.get(s, a) - q_hat[s * na + a]).as_f64();
                    let upper = 2.0 * (art.oracle.width(s, a) / art.oracle.beta()).as_f64();
                    let upper = if art.oracle.variant() == BonusVariant::Full { upper } else { 0.0 };
                    worst = worst.max((-gap).max(gap - upper));
                    checked += 1;
                }
            }
        }
    }
    if checked == 0 {
        worst = 0.0;
    }
    Ok(LemmaReport::new(Lemma::OneSidedError, checked, worst, tolerance, "known pairs × inner iterations"))
}

/// The comparator on the auxiliary MDP: `comparator` at known states, `a†` at unknown states.
pub fn comparator_on_auxiliary<T: Scalar>(comparator: &PolicyTable<T>, aux: &AugmentedMdp<T>) -> PolicyTable<T> {
    let Some(dagger) = aux.absorbing_action() else {
        return comparator.clone();
    };
    let mut table = comparator.widen(dagger + 1);
    for s in 0..table.n_states {
        if aux.is_unknown_state(s) {
            let row = table.row_mut(s);
            row.iter_mut().for_each(|p| *p = T::zero());
            row[dagger] = T::one();
        }
    }
    table
}

/// `δ_{s₀} ⊗ π(·|s₀)` as a pair distribution.
fn start_distribution<T: Scalar>(policy: &PolicyTable<T>, s0: usize) -> Vec<T> {
    let mut nu = vec![T::zero(); policy.n_states * policy.n_actions];
    nu[s0 * policy.n_actions..(s0 + 1) * policy.n_actions].copy_from_slice(policy.row(s0));
    nu
}

/// Greedy policy on the optimal action values of `mdp`.
pub fn optimal_comparator<T: Scalar>(mdp: &MdpSpec<T>) -> PolicyTable<T> {
    greedy_policy(&value_iteration(mdp, T::lit(1e-12)).q)
}

/// `Σ_k E_{d̃}[Â_k 1{s known}] − 8W√(K ln|A|)` for every inner loop, where `d̃` is the
/// occupancy from `s₀` of the comparator on the auxiliary MDP and
/// `Â_k = Q̂_k − ⟨π_k, Q̂_k⟩`. Returns the report and the per-loop sums.
pub fn check_npg_regret<T: Scalar>(
    artifacts: &[InnerArtifact<T>],
    mdp: &MdpSpec<T>,
    w: f64,
    tolerance: f64,
) -> Result<(LemmaReport, Vec<f64>)> {
    require_artifacts(artifacts, false)?;
    let comparator = optimal_comparator(mdp);
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut worst = f64::NEG_INFINITY;
    let mut sums = Vec::new();
    for art in artifacts {
        let k = art.critics.len();
        if k == 0 {
            return Err(Error::MissingArtifacts("inner loop without critics".into()));
        }
        let aux = art.oracle.build_auxiliary_mdp(mdp)?;
        let tilde = comparator_on_auxiliary(&comparator, &aux);
        let d = occupancy_exact(&aux, &tilde, &start_distribution(&tilde, mdp.initial_state()))?;
        let wide = tilde.n_actions;
        let mut total = 0.0;
        for (pi, q_hat) in art.policies.iter().zip(&art.critics) {
            for s in (0..ns).filter(|&s| art.oracle.known_state(s)) {
                let q = &q_hat[s * na..(s + 1) * na];
                let baseline: T = pi.probs(s).iter().zip(q).map(|(p, x)| *p * *x).sum();
                for a in 0..na {
                    total += (d[s * wide + a] * (q[a] - baseline)).as_f64();
                }
            }
        }
        let bound = 8.0 * w * ((na as f64).ln() * k as f64).sqrt();
        worst = worst.max(total - bound);
        sums.push(total);
    }
    Ok((LemmaReport::new(Lemma::NpgRegret, artifacts.len(), worst, tolerance, "violation = sum − 8W√(K ln|A|)"), sums))
}

/// Sums of `E_{d^n}[ω]` and `E_{d^n}[b₁]` over a run against `c√(N d² ε)` and
/// `c√(N d² ε)/((1−γ)β)`. The violation is the larger of the two excesses.
pub fn check_bonus_concentration(
    metrics: &[MetricsRow],
    d_eluder: f64,
    epsilon: f64,
    gamma: f64,
    beta: f64,
    slack: f64,
) -> LemmaReport {
    let n = metrics.len() as f64;
    let width_sum: f64 = metrics.iter().map(|r| r.expected_width).sum();
    let indicator_sum: f64 = metrics.iter().map(|r| r.expected_indicator_bonus).sum();
    let scale = slack * (n * d_eluder * d_eluder * epsilon).sqrt();
    let violation = (width_sum - scale).max(indicator_sum - scale / ((1.0 - gamma) * beta));
    LemmaReport::new(
        Lemma::BonusConcentration,
        metrics.len(),
        violation,
        0.0,
        format!("width sum {width_sum:.6}, indicator-bonus sum {indicator_sum:.6}, scale {scale:.6}"),
    )
}

/// Sum of `E_{d^n}[ω]` over the rows.
pub fn width_sum(metrics: &[MetricsRow]) -> f64 {
    metrics.iter().map(|r| r.expected_width).sum()
}

/// One structural-check instance: an MDP, a known set, a comparator and inner
/// policies produced under that known set.
#[derive(Debug, Clone)]
pub struct LemmaInstance<T> {
    pub mdp: MdpSpec<T>,
    pub oracle: Arc<BonusOracle<T>>,
    pub comparator: PolicyTable<T>,
    pub policies: Vec<Arc<SoftmaxPolicy<T>>>,
}

/// `max_{s known, a} d̃(s, a) − d^{π̃}(s, a)`: the comparator's occupancy on the
/// auxiliary MDP never exceeds its occupancy on the true MDP at known states.
pub fn dominance_violation<T: Scalar>(
    mdp: &MdpSpec<T>,
    aux: &AugmentedMdp<T>,
    oracle: &BonusOracle<T>,
    comparator: &PolicyTable<T>,
    aux_policy: &PolicyTable<T>,
) -> Result<f64> {
    let s0 = mdp.initial_state();
    let d_true = occupancy_exact(mdp, comparator, &start_distribution(comparator, s0))?;
    let d_aux = occupancy_exact(aux, aux_policy, &start_distribution(aux_policy, s0))?;
    let (na, wide) = (mdp.n_actions(), aux_policy.n_actions);
    let mut worst = f64::NEG_INFINITY;
    for s in (0..mdp.n_states()).filter(|&s| oracle.known_state(s)) {
        for a in 0..na {
            worst = worst.max((d_aux[s * wide + a] - d_true[s * na + a]).as_f64());
        }
    }
    Ok(if worst.is_finite() { worst } else { 0.0 })
}

/// `V^{π̃}(s₀) + E_{d^{π̃}}[2 b_w]/(1−γ) − V_{aux}^{π̃ⁿ}(s₀)`, with the state-level
/// width bonus `b_w = ω/β · 1{s known}`.
pub fn partial_optimism_violation<T: Scalar>(
    mdp: &MdpSpec<T>,
    aux: &AugmentedMdp<T>,
    oracle: &BonusOracle<T>,
    comparator: &PolicyTable<T>,
    aux_policy: &PolicyTable<T>,
) -> Result<f64> {
    let s0 = mdp.initial_state();
    let gamma = mdp.gamma().as_f64();
    let v_true = policy_evaluation_exact(mdp, comparator, T::lit(1e-12))?.v[s0].as_f64();
    let v_aux = policy_evaluation_exact(aux, aux_policy, T::lit(1e-12))?.v[s0].as_f64();
    let d = occupancy_exact(mdp, comparator, &start_distribution(comparator, s0))?;
    let na = mdp.n_actions();
    let mut bonus = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..na {
            bonus += (d[s * na + a] * T::lit(2.0) * oracle.width_bonus(s, a)).as_f64();
        }
    }
    Ok(v_true + bonus / (1.0 - gamma) - v_aux)
}

/// `max_{s unknown} A^{π}_{aux}(s, a†)`: playing `a†` is never better than an inner
/// policy at unknown states.
pub fn negative_advantage_violation<T: Scalar, P: ActionDistribution<T> + ?Sized>(
    mdp: &MdpSpec<T>,
    aux: &AugmentedMdp<T>,
    policy: &P,
) -> Result<f64> {
    let Some(dagger) = aux.absorbing_action() else {
        return Ok(0.0);
    };
    let table = policy.to_table(mdp.n_states()).widen(dagger + 1);
    let sol = policy_evaluation_exact(aux, &table, T::lit(1e-12))?;
    let mut worst = f64::NEG_INFINITY;
    for s in (0..mdp.n_states()).filter(|&s| aux.is_unknown_state(s)) {
        worst = worst.max((sol.q.get(s, dagger) - sol.v[s]).as_f64());
    }
    Ok(if worst.is_finite() { worst } else { 0.0 })
}

fn fold_instances<T: Scalar>(
    instances: &[LemmaInstance<T>],
    lemma: Lemma,
    tolerance: f64,
    mut per_instance: impl FnMut(&LemmaInstance<T>, &AugmentedMdp<T>) -> Result<f64>,
) -> Result<LemmaReport> {
    let mut worst = f64::NEG_INFINITY;
    for inst in instances {
        let aux = inst.oracle.build_auxiliary_mdp(&inst.mdp)?;
        worst = worst.max(per_instance(inst, &aux)?);
    }
    if instances.is_empty() {
        worst = 0.0;
    }
    Ok(LemmaReport::new(lemma, instances.len(), worst, tolerance, ""))
}

pub fn check_distribution_dominance<T: Scalar>(instances: &[LemmaInstance<T>], tolerance: f64) -> Result<LemmaReport> {
    fold_instances(instances, Lemma::DistributionDominance, tolerance, |inst, aux| {
        let tilde = comparator_on_auxiliary(&inst.comparator, aux);
        dominance_violation(&inst.mdp, aux, &inst.oracle, &inst.comparator, &tilde)
    })
}

pub fn check_partial_optimism<T: Scalar>(instances: &[LemmaInstance<T>], tolerance: f64) -> Result<LemmaReport> {
    fold_instances(instances, Lemma::PartialOptimism, tolerance, |inst, aux| {
        let tilde = comparator_on_auxiliary(&inst.comparator, aux);
        partial_optimism_violation(&inst.mdp, aux, &inst.oracle, &inst.comparator, &tilde)
    })
}

pub fn check_negative_advantage<T: Scalar>(instances: &[LemmaInstance<T>], tolerance: f64) -> Result<LemmaReport> {
    fold_instances(instances, Lemma::NegativeAdvantage, tolerance, |inst, aux| {
        let mut worst = f64::NEG_INFINITY;
        for pi in &inst.policies {
            worst = worst.max(negative_advantage_violation(&inst.mdp, aux, pi.as_ref())?);
        }
        Ok(worst)
    })
}

/// `count` random instances with 3 to 6 states and 2 or 3 actions. Known sets come
/// from random widths around `β = 0.3`; inner policies are produced by the driver's
/// inner loop (exact critics) under that known set; the comparator is optimal.
pub fn random_lemma_instances(seed: u64, count: usize) -> Result<Vec<LemmaInstance<f64>>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let ns = rng.gen_range(3..=6);
        let na = rng.gen_range(2..=3);
        let mdp = random_mdp::<f64>(seed.wrapping_mul(1000).wrapping_add(i as u64), ns, na, 2, 0.8)?;
        // roughly half of the pairs known, the start state sometimes unknown
        let widths: Vec<f64> = (0..ns * na).map(|_| rng.gen_range(0.0..0.45)).collect();
        let oracle = Arc::new(BonusOracle::from_widths(ns, na, widths, 0, 0.3, 1.0, 0.8, BonusVariant::Full));
        let w = 30.0;
        let class = FunctionClass::tabular(ns, na, w)?;
        let config = LpoConfig {
            n_outer: 1,
            k_inner: 6,
            eta: Some(0.3),
            w_bound: w,
            mode: EvalMode::Exact,
            ..LpoConfig::default()
        };
        let mut lpo = Lpo::new(&config, &mdp, &class)?;
        let cover = MixturePolicy::singleton(Arc::new(SoftmaxPolicy::uniform(ns, na)));
        let mixture = lpo.inner_policy_update(1, &cover, &oracle)?;
        let policies = mixture.leaves().into_iter().map(|(p, _)| p).collect();
        let comparator = optimal_comparator(&mdp);
        out.push(LemmaInstance { mdp, oracle, comparator, policies });
    }
    Ok(out)
}

/// The driver with the bonus swapped for an ablation variant.
pub fn run_baseline<T: Scalar>(
    variant: BonusVariant,
    config: &LpoConfig,
    mdp: &MdpSpec<T>,
    class: &FunctionClass<T>,
) -> Result<RunOutput<T>> {
    let config = LpoConfig { variant, ..config.clone() };
    run_lpo(&config, mdp, class)
}
