//! The outer loop (sensitivity-sampled dataset, lazy bonus rebuilds, policy cover)
//! and the inner natural-policy-gradient loop, with run metrics and the
//! bookkeeping invariants checked on every run.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bonus::{BonusOracle, BonusVariant};
use crate::error::{Error, Result};
use crate::evaluation::{
    behaviour_sample, bonus_cap, evaluate_policy, evaluate_policy_exact, kappa_window, return_cap, Critic, IsOptions,
};
use crate::function_class::FunctionClass;
use crate::mdp::{
    default_horizon_cap, occupancy_exact, policy_evaluation_exact, value_iteration, ActionDistribution,
    InitialDistribution, MdpSpec, Simulator,
};
use crate::policy::{MixtureComponent, MixturePolicy, SoftmaxPolicy};
use crate::scalar::Scalar;
use crate::sensitivity::{AdmissionConfig, SensitivityDataset};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Importance-weighted Monte-Carlo targets from collected rollouts.
    #[default]
    #[serde(alias = "mc")]
    MonteCarlo,
    /// Exact targets from dynamic programming; admissions stay sampled.
    #[serde(alias = "exact-eval")]
    Exact,
}

/// Run configuration. Unset optional fields are derived: `eta` from the regret-optimal
/// step size, `kappa` from the stability window, `epsilon_width` as
/// `c_epsilon · ln N`. With `theory = true` all three are derived regardless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpoConfig {
    /// Outer iterations `N`.
    pub n_outer: usize,
    /// Inner iterations `K`.
    pub k_inner: usize,
    /// Rollouts per data collection `M`.
    pub m_rollouts: usize,
    pub eta: Option<f64>,
    pub kappa: Option<usize>,
    pub beta: f64,
    pub epsilon_width: Option<f64>,
    /// Overrides the environment's discount when set.
    pub gamma: Option<f64>,
    /// Sup-norm bound `W` of the function class.
    pub w_bound: f64,
    pub delta: f64,
    /// Confidence level of the reuse window.
    pub delta1: f64,
    pub c_mult: f64,
    pub c_budget: f64,
    pub c_epsilon: f64,
    pub mode: EvalMode,
    pub variant: BonusVariant,
    pub seed: u64,
    pub theory: bool,
    pub theory_c1: f64,
    pub theory_c2: f64,
    pub theory_c_stat: f64,
    pub theory_eps1: f64,
    pub theory_eps2: f64,
    pub theory_delta3: f64,
    pub horizon_cap: Option<usize>,
    pub clip: bool,
    pub exclude_first_step_bonus: bool,
    /// Keep per-inner-iteration policies and critics in memory for the checkers.
    pub record_artifacts: bool,
}

impl Default for LpoConfig {
    fn default() -> Self {
        Self {
            n_outer: 200,
            k_inner: 20,
            m_rollouts: 200,
            eta: None,
            kappa: None,
            beta: 0.3,
            epsilon_width: None,
            gamma: None,
            w_bound: 1.0,
            delta: 0.1,
            delta1: 0.1,
            c_mult: 1.0,
            c_budget: 1.0,
            c_epsilon: 1.0,
            mode: EvalMode::MonteCarlo,
            variant: BonusVariant::Full,
            seed: 0,
            theory: false,
            theory_c1: 1.0,
            theory_c2: 1.0,
            theory_c_stat: 1.0,
            theory_eps1: 1e-3,
            theory_eps2: 1e-3,
            theory_delta3: 0.05,
            horizon_cap: None,
            clip: false,
            exclude_first_step_bonus: false,
            record_artifacts: false,
        }
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> Error {
    Error::InvalidConfig { key: key.into(), msg: msg.into() }
}

impl LpoConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("n_outer", self.n_outer), ("k_inner", self.k_inner), ("m_rollouts", self.m_rollouts)] {
            if v == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
        }
        let open_unit = |key: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(invalid(key, format!("{v} is not in (0, 1)")))
            }
        };
        open_unit("beta", self.beta)?;
        open_unit("delta", self.delta)?;
        open_unit("delta1", self.delta1)?;
        open_unit("theory_delta3", self.theory_delta3)?;
        if let Some(g) = self.gamma {
            open_unit("gamma", g)?;
        }
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("{v} must be positive and finite")))
            }
        };
        positive("w_bound", self.w_bound)?;
        positive("c_mult", self.c_mult)?;
        positive("c_budget", self.c_budget)?;
        positive("c_epsilon", self.c_epsilon)?;
        positive("theory_eps1", self.theory_eps1)?;
        positive("theory_eps2", self.theory_eps2)?;
        for (key, v) in [("theory_c1", self.theory_c1), ("theory_c2", self.theory_c2), ("theory_c_stat", self.theory_c_stat)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(key, "must be nonnegative"));
            }
        }
        if let Some(eta) = self.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(invalid("eta", "must be nonnegative"));
            }
        }
        if let Some(eps) = self.epsilon_width {
            positive("epsilon_width", eps)?;
        }
        if self.kappa == Some(0) {
            return Err(invalid("kappa", "must be at least 1"));
        }
        if self.horizon_cap == Some(0) {
            return Err(invalid("horizon_cap", "must be at least 1"));
        }
        Ok(())
    }
}

/// Regret-optimal NPG step size `√(ln|A| / (16 W² K))`.
pub fn derive_eta(k_inner: usize, n_actions: usize, w: f64) -> f64 {
    ((n_actions as f64).ln() / (16.0 * w * w * k_inner as f64)).sqrt()
}

/// Constants entering the theory-mode width budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonTheory {
    pub n_outer: usize,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c_stat: f64,
    pub m_rollouts: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub delta3: f64,
}

/// Statistical error `500 c_stat W⁴ (log N(F, ε₂) + ln(1/δ₃)) / M + 13 W² ε₂`.
pub fn epsilon_stat<T: Scalar>(class: &FunctionClass<T>, p: &EpsilonTheory) -> f64 {
    let w = class.bound().as_f64();
    let log_cover = class.log_cover_size(T::lit(p.eps2)).as_f64();
    500.0 * p.c_stat * w.powi(4) * (log_cover - p.delta3.ln()) / p.m_rollouts as f64 + 13.0 * w * w * p.eps2
}

/// Theory-scale width budget
/// `100 (1.5 C₁ N ε_stat + 20 N W ε₁ + 0.5 C₂ (ln N + 2 log N(F, ε₁) + ln(1/δ)))`,
/// using `N(F − F, 2ε₁) ≤ N(F, ε₁)²`.
pub fn derive_epsilon_theory<T: Scalar>(class: &FunctionClass<T>, p: &EpsilonTheory) -> f64 {
    let n = p.n_outer as f64;
    let w = class.bound().as_f64();
    let log_diff_cover = 2.0 * class.log_cover_size(T::lit(p.eps1)).as_f64();
    let ln_term = n.ln() + log_diff_cover - p.delta.ln();
    100.0 * (1.5 * p.c1 * n * epsilon_stat(class, p) + 20.0 * n * w * p.eps1 + 0.5 * p.c2 * ln_term)
}

/// Parameters actually used by a run after derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    pub eta: f64,
    pub kappa: usize,
    pub epsilon_width: f64,
    pub gamma: f64,
    pub horizon_cap: usize,
    pub horizon_tail_mass: f64,
    pub bonus_cap: f64,
    pub return_cap: f64,
    /// Values the theory formulas give, logged next to the practical choices.
    pub theory_eta: f64,
    pub theory_kappa: usize,
}

impl DerivedParams {
    pub fn resolve<T: Scalar>(config: &LpoConfig, mdp: &MdpSpec<T>, class: &FunctionClass<T>) -> Result<Self> {
        config.validate()?;
        if class.n_states() != mdp.n_states() || class.n_actions() != mdp.n_actions() {
            return Err(invalid("class", "function class domain does not match the environment"));
        }
        if (class.bound().as_f64() - config.w_bound).abs() > 1e-12 * config.w_bound.max(1.0) {
            return Err(invalid("w_bound", "function class bound differs from the configured W"));
        }
        let gamma = config.gamma.unwrap_or_else(|| mdp.gamma().as_f64());
        let w = config.w_bound;
        let b = bonus_cap(gamma);
        let g_max = return_cap(gamma);
        let theory_eta = derive_eta(config.k_inner, mdp.n_actions().max(2), w);
        let theory_kappa = kappa_window(gamma, config.delta1, theory_eta, b, w, config.k_inner);
        let (eta, kappa, epsilon_width) = if config.theory {
            if 2.0 * g_max > w {
                return Err(invalid("w_bound", format!("theory mode needs W ≥ 2 G_max = {}", 2.0 * g_max)));
            }
            let p = EpsilonTheory {
                n_outer: config.n_outer,
                delta: config.delta,
                c1: config.theory_c1,
                c2: config.theory_c2,
                c_stat: config.theory_c_stat,
                m_rollouts: config.m_rollouts,
                eps1: config.theory_eps1,
                eps2: config.theory_eps2,
                delta3: config.theory_delta3,
            };
            (theory_eta, theory_kappa, derive_epsilon_theory(class, &p))
        } else {
            let eta = config.eta.unwrap_or(theory_eta);
            let kappa = match config.kappa {
                Some(k) => k.min(config.k_inner),
                None => kappa_window(gamma, config.delta1, eta, b, w, config.k_inner),
            };
            let eps = config
                .epsilon_width
                .unwrap_or_else(|| config.c_epsilon * (config.n_outer.max(2) as f64).ln());
            (eta, kappa, eps)
        };
        let horizon_cap = config.horizon_cap.unwrap_or_else(|| default_horizon_cap(gamma));
        Ok(Self {
            eta,
            kappa,
            epsilon_width,
            gamma,
            horizon_cap,
            horizon_tail_mass: gamma.powf(horizon_cap as f64),
            bonus_cap: b,
            return_cap: g_max,
            theory_eta,
            theory_kappa,
        })
    }
}

/// One row per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub n: usize,
    pub switched: bool,
    pub dataset_distinct: usize,
    pub dataset_weight: u64,
    pub known_pair_fraction: f64,
    /// Exact `V(s₀)` of this iteration's output mixture on the true MDP.
    pub value_exact_of_mixture: f64,
    pub suboptimality: f64,
    /// Cumulative environment transitions.
    pub transitions_used: u64,
    pub raw_sensitivity: f64,
    pub sensitivity_factor: f64,
    pub admitted: bool,
    /// `E_{d^n}[ω]` under the occupancy of this iteration's mixture.
    pub expected_width: f64,
    /// `E_{d^n}[3/(1−γ) · 1{ω ≥ β}]`.
    pub expected_indicator_bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub final_value: f64,
    pub v_star: f64,
    pub final_suboptimality: f64,
    /// Value of the uniform mixture over all `N` iteration outputs.
    pub value_of_uniform_output: f64,
    pub switches: usize,
    pub dataset_versions: u64,
    pub inner_invocations: usize,
    pub collections: usize,
    pub total_transitions: u64,
    pub truncated_rollouts: usize,
    pub fallback_states: usize,
    pub switch_budget_log_term: f64,
    pub params: DerivedParams,
    pub config: LpoConfig,
    pub wall_clock_seconds: f64,
}

/// One inner loop: the known set it ran under, its policies `π_0..π_{K−1}` and the
/// critic evaluated for each.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct InnerArtifact<T> {
    pub n: usize,
    pub oracle: Arc<BonusOracle<T>>,
    pub policies: Vec<Arc<SoftmaxPolicy<T>>>,
    pub critics: Vec<Vec<T>>,
    pub eta: T,
    pub exact: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub metrics: Vec<MetricsRow>,
    pub summary: RunSummary,
    pub final_policy: Arc<MixturePolicy<T>>,
    pub dataset: SensitivityDataset<T>,
    pub oracle: Arc<BonusOracle<T>>,
    pub artifacts: Vec<InnerArtifact<T>>,
    /// Bonus tables at every rebuild, as `(n, oracle)`.
    pub oracles: Vec<(usize, Arc<BonusOracle<T>>)>,
}

/// Mutable state of the outer loop.
#[derive(Debug, Clone)]
pub struct LpoState<T> {
    pub n: usize,
    pub dataset: SensitivityDataset<T>,
    pub oracle: Option<Arc<BonusOracle<T>>>,
    /// `π^0, …, π^{n}`: the cover for the next iteration.
    pub cover: MixturePolicy<T>,
    pub current: Arc<MixturePolicy<T>>,
    pub last_seen_version: u64,
    pub switches: usize,
    pub inner_invocations: usize,
    pub collections: usize,
    pub admissions_before_last: usize,
    pub metrics: Vec<MetricsRow>,
}

/// A configured run. Construct with [`Lpo::new`], advance with [`Lpo::outer_step`].
pub struct Lpo<'m, T: Scalar> {
    mdp: &'m MdpSpec<T>,
    class: &'m FunctionClass<T>,
    config: LpoConfig,
    params: DerivedParams,
    sim: Simulator<'m, T>,
    nu: InitialDistribution<T>,
    v_star: f64,
    rng: ChaCha8Rng,
    collect_rng: ChaCha8Rng,
    ledger: u64,
    truncated: usize,
    state: LpoState<T>,
    artifacts: Vec<InnerArtifact<T>>,
    oracles: Vec<(usize, Arc<BonusOracle<T>>)>,
    current_value: f64,
    current_width: f64,
    current_indicator: f64,
}

impl<'m, T: Scalar> Lpo<'m, T> {
    /// `mdp` must already carry the discount the run should use.
    pub fn new(config: &LpoConfig, mdp: &'m MdpSpec<T>, class: &'m FunctionClass<T>) -> Result<Self> {
        let params = DerivedParams::resolve(config, mdp, class)?;
        if (params.gamma - mdp.gamma().as_f64()).abs() > 1e-12 {
            return Err(invalid("gamma", "environment discount differs from the configured gamma"));
        }
        let admission = AdmissionConfig { c_mult: T::lit(config.c_mult), delta: T::lit(config.delta), n_budget: config.n_outer as u64 };
        let dataset = SensitivityDataset::new(class, admission)?;
        let v_star = value_iteration(mdp, T::lit(1e-10)).v[mdp.initial_state()].as_f64();
        let pi0 = Arc::new(MixturePolicy::singleton(Arc::new(SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions()))));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        let mut collect_rng = ChaCha8Rng::seed_from_u64(config.seed);
        collect_rng.set_stream(1);
        Ok(Self {
            mdp,
            class,
            config: config.clone(),
            params,
            sim: Simulator::new(mdp),
            nu: InitialDistribution::default_for(mdp),
            v_star,
            rng,
            collect_rng,
            ledger: 0,
            truncated: 0,
            state: LpoState {
                n: 0,
                dataset,
                oracle: None,
                cover: MixturePolicy::new(vec![MixtureComponent::Nested(Arc::clone(&pi0))])?,
                current: pi0,
                last_seen_version: 0,
                switches: 0,
                inner_invocations: 0,
                collections: 0,
                admissions_before_last: 0,
                metrics: Vec::new(),
            },
            artifacts: Vec::new(),
            oracles: Vec::new(),
            current_value: f64::NAN,
            current_width: f64::NAN,
            current_indicator: f64::NAN,
        })
    }

    pub fn params(&self) -> &DerivedParams {
        &self.params
    }

    pub fn state(&self) -> &LpoState<T> {
        &self.state
    }

    pub fn transitions(&self) -> u64 {
        self.sim.transitions()
    }

    /// One outer iteration: rebuild and re-plan if the dataset changed (always at
    /// `n = 1`), otherwise carry the previous output; then draw one pair from the
    /// current output's occupancy and offer it to the dataset.
    pub fn outer_step(&mut self) -> Result<()> {
        let n = self.state.n + 1;
        let switched = n == 1 || self.state.dataset.switch_occurred(self.state.last_seen_version);
        if switched {
            self.state.last_seen_version = self.state.dataset.version();
            let oracle = Arc::new(BonusOracle::rebuild(
                &self.state.dataset,
                self.class,
                T::lit(self.config.beta),
                T::lit(self.params.epsilon_width),
                self.mdp.gamma(),
                self.config.variant,
            ));
            if let Some(prev) = &self.state.oracle {
                check_known_set_monotone(prev, &oracle)?;
            }
            self.state.switches += 1;
            let cover = self.state.cover.clone();
            let output = self.inner_policy_update(n, &cover, &oracle)?;
            self.state.current = Arc::new(output);
            self.state.oracle = Some(Arc::clone(&oracle));
            self.oracles.push((n, oracle));
            self.refresh_exact_summaries()?;
        }

        let leaf = Arc::clone(self.state.current.sample_component(&mut self.rng));
        let draw = self.sim.d_sample(leaf.as_ref(), &self.nu, self.mdp.gamma(), self.params.horizon_cap, &mut self.rng);
        self.ledger += draw.steps as u64;
        self.truncated += usize::from(draw.truncated);
        let decision = self.state.dataset.admit(self.class, draw.state, draw.action, &mut self.rng)?;
        if decision.admitted && n < self.config.n_outer {
            self.state.admissions_before_last += 1;
        }
        self.state.cover.push(MixtureComponent::Nested(Arc::clone(&self.state.current)));
        self.state.n = n;

        let oracle = self.state.oracle.as_ref().expect("oracle built at n = 1");
        self.state.metrics.push(MetricsRow {
            n,
            switched,
            dataset_distinct: self.state.dataset.distinct(),
            dataset_weight: self.state.dataset.total_weight(),
            known_pair_fraction: oracle.known_pair_fraction(),
            value_exact_of_mixture: self.current_value,
            suboptimality: self.v_star - self.current_value,
            transitions_used: self.sim.transitions(),
            raw_sensitivity: decision.sensitivity_raw.as_f64(),
            sensitivity_factor: decision.factor.as_f64(),
            admitted: decision.admitted,
            expected_width: self.current_width,
            expected_indicator_bonus: self.current_indicator,
        });
        Ok(())
    }

    /// Inner loop under a fixed known set: `K` critic evaluations, a natural policy
    /// gradient step after each but the last, fresh behaviour data whenever the
    /// current data is `κ` steps old. Returns `Unif{π_0, …, π_{K−1}}`.
    pub fn inner_policy_update(
        &mut self,
        n: usize,
        cover: &MixturePolicy<T>,
        oracle: &Arc<BonusOracle<T>>,
    ) -> Result<MixturePolicy<T>> {
        self.state.inner_invocations += 1;
        let k_inner = self.config.k_inner;
        let eta = T::lit(self.params.eta);
        let exact = self.config.mode == EvalMode::Exact;
        let opts = IsOptions {
            clip: self.config.clip,
            exclude_first_step_bonus: self.config.exclude_first_step_bonus,
            gamma: self.mdp.gamma(),
        };
        let mut pi = Arc::new(SoftmaxPolicy::initial(oracle));
        let mut policies = vec![Arc::clone(&pi)];
        let mut critics = Vec::new();
        let mut data = None;
        let mut k_low = 0;
        for k in 0..k_inner {
            let critic: Critic<T> = if exact {
                evaluate_policy_exact(self.mdp, &pi, self.class, oracle)?
            } else {
                if data.is_none() || k - k_low >= self.params.kappa {
                    let seed = self.collect_rng.gen::<u64>();
                    let d = behaviour_sample(
                        &self.sim,
                        cover,
                        &pi,
                        oracle,
                        self.config.m_rollouts,
                        &self.nu,
                        self.params.horizon_cap,
                        seed,
                        k,
                    );
                    self.ledger += d.transitions;
                    self.truncated += d.truncated;
                    self.state.collections += 1;
                    k_low = k;
                    data = Some(d);
                }
                evaluate_policy(data.as_ref().expect("collected above"), &pi, self.class, oracle, &opts)?
            };
            if k + 1 < k_inner {
                pi = Arc::new(pi.npg_step(&critic.q, eta));
                policies.push(Arc::clone(&pi));
            }
            if self.config.record_artifacts {
                critics.push(critic.q);
            }
        }
        if self.config.record_artifacts {
            self.artifacts.push(InnerArtifact { n, oracle: Arc::clone(oracle), policies: policies.clone(), critics, eta, exact });
        }
        MixturePolicy::of_leaves(policies)
    }

    /// Exact value and expected widths of the current output, averaged over leaves.
    fn refresh_exact_summaries(&mut self) -> Result<()> {
        let oracle = self.state.oracle.as_ref().expect("oracle");
        let ns = self.mdp.n_states();
        let s0 = self.mdp.initial_state();
        let indicator: Vec<T> = (0..self.mdp.n_pairs())
            .map(|z| {
                let (s, a) = (z / self.mdp.n_actions(), z % self.mdp.n_actions());
                if oracle.width(s, a) >= oracle.beta() { T::lit(self.params.bonus_cap) } else { T::zero() }
            })
            .collect();
        let (mut value, mut width, mut ind) = (0.0, 0.0, 0.0);
        for (leaf, w) in self.state.current.leaves() {
            let table = leaf.to_table(ns);
            value += w * policy_evaluation_exact(self.mdp, &table, T::lit(1e-12))?.v[s0].as_f64();
            let d = occupancy_exact(self.mdp, &table, self.nu.probs())?;
            width += w * d.iter().zip(oracle.widths()).map(|(p, x)| *p * *x).sum::<T>().as_f64();
            ind += w * d.iter().zip(&indicator).map(|(p, x)| *p * *x).sum::<T>().as_f64();
        }
        self.current_value = value;
        self.current_width = width;
        self.current_indicator = ind;
        Ok(())
    }

    /// Check the bookkeeping invariants and package the run.
    pub fn finish(self, started: Instant) -> Result<RunOutput<T>> {
        let st = &self.state;
        if st.inner_invocations != st.admissions_before_last + 1 {
            return Err(Error::Invariant(format!(
                "low-switching: {} inner loops but {} dataset changes before the last iteration",
                st.inner_invocations, st.admissions_before_last
            )));
        }
        if st.switches != st.inner_invocations || st.switches != self.oracles.len() {
            return Err(Error::Invariant("bonus rebuilds and inner loops disagree".into()));
        }
        if self.ledger != self.sim.transitions() {
            return Err(Error::Invariant(format!(
                "sample accounting: ledger {} vs simulator {}",
                self.ledger,
                self.sim.transitions()
            )));
        }
        if st.cover.len() != st.n + 1 || st.metrics.len() != st.n {
            return Err(Error::Invariant("policy cover length differs from completed iterations + 1".into()));
        }
        let last = st.metrics.last().ok_or_else(|| Error::Invariant("no iterations ran".into()))?;
        let value_of_uniform_output = st.metrics.iter().map(|r| r.value_exact_of_mixture).sum::<f64>() / st.n as f64;
        let fallback_states = self.artifacts.iter().flat_map(|a| a.policies.first()).map(|p| p.fallback_states()).sum();
        let summary = RunSummary {
            final_value: last.value_exact_of_mixture,
            v_star: self.v_star,
            final_suboptimality: last.suboptimality,
            value_of_uniform_output,
            switches: st.switches,
            dataset_versions: st.dataset.version(),
            inner_invocations: st.inner_invocations,
            collections: st.collections,
            total_transitions: self.sim.transitions(),
            truncated_rollouts: self.truncated,
            fallback_states,
            switch_budget_log_term: st.dataset.log_multiplier().as_f64(),
            params: self.params,
            config: self.config.clone(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        Ok(RunOutput {
            metrics: self.state.metrics,
            summary,
            final_policy: self.state.current,
            dataset: self.state.dataset,
            oracle: self.state.oracle.expect("oracle built at n = 1"),
            artifacts: self.artifacts,
            oracles: self.oracles,
        })
    }
}

fn check_known_set_monotone<T: Scalar>(prev: &BonusOracle<T>, next: &BonusOracle<T>) -> Result<()> {
    if prev.epsilon() != next.epsilon() || prev.beta() != next.beta() {
        return Ok(());
    }
    for s in 0..prev.n_states() {
        for a in 0..prev.n_actions() {
            if prev.known_pair(s, a) && !next.known_pair(s, a) {
                return Err(Error::Invariant(format!("known set shrank at ({s}, {a})")));
            }
        }
    }
    Ok(())
}

/// Run `N` outer iterations on `mdp` (its discount is replaced by `config.gamma` when set).
pub fn run_lpo<T: Scalar>(config: &LpoConfig, mdp: &MdpSpec<T>, class: &FunctionClass<T>) -> Result<RunOutput<T>> {
    let started = Instant::now();
    let mdp = match config.gamma {
        Some(g) => mdp.with_gamma(T::lit(g))?,
        None => mdp.clone(),
    };
    let mut lpo = Lpo::new(config, &mdp, class)?;
    for _ in 0..config.n_outer {
        lpo.outer_step()?;
    }
    lpo.finish(started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::chain;

    fn small_config() -> LpoConfig {
        LpoConfig {
            n_outer: 30,
            k_inner: 4,
            m_rollouts: 50,
            eta: Some(0.5),
            kappa: Some(2),
            w_bound: 40.0,
            c_mult: 0.01,
            ..LpoConfig::default()
        }
    }

    #[test]
    fn eta_examples() {
        assert!((derive_eta(100, 4, 1.0) - 0.02944).abs() < 1e-5);
        assert!((derive_eta(400, 4, 1.0) * 2.0 - derive_eta(100, 4, 1.0)).abs() < 1e-12);
        assert!((derive_eta(100, 4, 2.0) * 2.0 - derive_eta(100, 4, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn epsilon_theory_reduces_to_log_term() {
        let class = FunctionClass::<f64>::tabular(3, 2, 1.0).unwrap();
        let p = EpsilonTheory {
            n_outer: 1000,
            delta: 0.05,
            c1: 0.0,
            c2: 1.0,
            c_stat: 1.0,
            m_rollouts: 1000,
            eps1: 1e-3,
            eps2: 1e-3,
            delta3: 0.05,
        };
        let got = derive_epsilon_theory(&class, &p) - 100.0 * 20.0 * 1000.0 * 1e-3;
        let ln_term = 1000f64.ln() + 2.0 * 6.0 * (2.0 / 1e-3 + 1.0f64).ln() + (1.0 / 0.05f64).ln();
        assert!((got - 50.0 * ln_term).abs() < 1e-9);
        let doubled = EpsilonTheory { c1: 2.0, ..p };
        let single = EpsilonTheory { c1: 1.0, ..p };
        let first = derive_epsilon_theory(&class, &single) - derive_epsilon_theory(&class, &p);
        let second = derive_epsilon_theory(&class, &doubled) - derive_epsilon_theory(&class, &p);
        assert!((second - 2.0 * first).abs() < 1e-6 * second.abs());
    }

    #[test]
    fn validation_names_the_key() {
        let bad = LpoConfig { beta: 1.5, ..LpoConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig { key, .. }) if key == "beta"));
        let bad = LpoConfig { k_inner: 0, ..LpoConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig { key, .. }) if key == "k_inner"));
        let mdp = chain::<f64>(3, 0.0, true, 0.9).unwrap();
        let class = FunctionClass::tabular(3, 2, 1.0).unwrap();
        let theory = LpoConfig { theory: true, ..LpoConfig::default() };
        assert!(matches!(DerivedParams::resolve(&theory, &mdp, &class), Err(Error::InvalidConfig { key, .. }) if key == "w_bound"));
    }

    #[test]
    fn first_iteration_always_plans() {
        let mdp = chain::<f64>(4, 0.1, true, 0.9).unwrap();
        let config = small_config();
        let class = FunctionClass::tabular(4, 2, config.w_bound).unwrap();
        let mut lpo = Lpo::new(&config, &mdp, &class).unwrap();
        lpo.outer_step().unwrap();
        assert!(lpo.state().metrics[0].switched);
        assert_eq!(lpo.state().inner_invocations, 1);
    }

    #[test]
    fn rejection_carries_everything_over() {
        let mdp = chain::<f64>(4, 0.1, true, 0.9).unwrap();
        // a tiny multiplier makes nearly every offer after the first few a rejection
        let config = LpoConfig { c_mult: 1e-6, n_outer: 50, ..small_config() };
        let class = FunctionClass::tabular(4, 2, config.w_bound).unwrap();
        let mut lpo = Lpo::new(&config, &mdp, &class).unwrap();
        lpo.outer_step().unwrap();
        let (policy, oracle) = (Arc::clone(&lpo.state().current), lpo.state().oracle.clone().unwrap());
        let mut carried = 0;
        for _ in 0..20 {
            lpo.outer_step().unwrap();
            if !lpo.state().metrics.last().unwrap().switched {
                carried += 1;
            }
        }
        if lpo.state().switches == 1 {
            assert!(Arc::ptr_eq(&policy, &lpo.state().current));
            assert!(Arc::ptr_eq(&oracle, lpo.state().oracle.as_ref().unwrap()));
        }
        assert!(carried > 0);
    }

    #[test]
    fn single_inner_step_returns_initial_policy() {
        let mdp = chain::<f64>(3, 0.0, true, 0.9).unwrap();
        let config = LpoConfig { k_inner: 1, n_outer: 1, record_artifacts: true, ..small_config() };
        let class = FunctionClass::tabular(3, 2, config.w_bound).unwrap();
        let out = run_lpo(&config, &mdp, &class).unwrap();
        let leaves = out.final_policy.leaves();
        assert_eq!(leaves.len(), 1);
        assert_eq!(*leaves[0].0, SoftmaxPolicy::initial(&out.artifacts[0].oracle));
    }

    #[test]
    fn collection_count_matches_window() {
        let mdp = chain::<f64>(3, 0.0, true, 0.9).unwrap();
        for (k, kappa, want) in [(7, 3, 3), (6, 6, 1), (5, 1, 5), (1, 1, 1)] {
            let config = LpoConfig { k_inner: k, kappa: Some(kappa), n_outer: 1, ..small_config() };
            let class = FunctionClass::tabular(3, 2, config.w_bound).unwrap();
            let out = run_lpo(&config, &mdp, &class).unwrap();
            assert_eq!(out.summary.collections, want, "K={k} κ={kappa}");
        }
    }

    #[test]
    fn runs_are_deterministic_and_accounted() {
        let mdp = chain::<f64>(5, 0.1, true, 0.9).unwrap();
        let config = small_config();
        let class = FunctionClass::tabular(5, 2, config.w_bound).unwrap();
        let a = run_lpo(&config, &mdp, &class).unwrap();
        let b = run_lpo(&config, &mdp, &class).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.summary.total_transitions, b.summary.total_transitions);
        assert!(a.summary.total_transitions > 0);
        assert_eq!(a.metrics.len(), 30);
        let switched = a.metrics.iter().filter(|r| r.switched).count();
        assert_eq!(switched, a.summary.switches);
    }

    #[test]
    fn exact_mode_runs_without_collections() {
        let mdp = chain::<f64>(4, 0.1, true, 0.9).unwrap();
        let config = LpoConfig { mode: EvalMode::Exact, ..small_config() };
        let class = FunctionClass::tabular(4, 2, config.w_bound).unwrap();
        let out = run_lpo(&config, &mdp, &class).unwrap();
        assert_eq!(out.summary.collections, 0);
        assert!(out.metrics.iter().all(|r| r.value_exact_of_mixture.is_finite()));
    }

    #[test]
    fn config_round_trips_through_toml_like_json() {
        let config = small_config();
        let text = serde_json::to_string(&config).unwrap();
        let back: LpoConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
        assert!(serde_json::from_str::<LpoConfig>("{\"unknown_key\": 1}").is_err());
    }
}
