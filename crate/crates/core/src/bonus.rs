//! Known sets and exploration bonuses derived from the width function, plus the
//! bonus-added and auxiliary MDPs used by the analysis checks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::function_class::FunctionClass;
use crate::mdp::{AugmentedMdp, MdpSpec};
use crate::scalar::Scalar;
use crate::sensitivity::SensitivityDataset;

/// Which bonus the driver uses. `Full` is the algorithm as designed; the other two
/// are ablations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BonusVariant {
    #[default]
    Full,
    /// `3/(1−γ)` on unknown pairs, nothing on known pairs.
    IndicatorOnly,
    /// No bonus at all and every state treated as known.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonusOracle<T> {
    n_states: usize,
    n_actions: usize,
    version: u64,
    beta: T,
    epsilon: T,
    gamma: T,
    variant: BonusVariant,
    widths: Vec<T>,
    bonus: Vec<T>,
    known_pair: Vec<bool>,
    known_state: Vec<bool>,
}

impl<T: Scalar> BonusOracle<T> {
    /// Recompute widths at every pair from the dataset and derive the known set and bonus.
    pub fn rebuild(
        dataset: &SensitivityDataset<T>,
        class: &FunctionClass<T>,
        beta: T,
        epsilon: T,
        gamma: T,
        variant: BonusVariant,
    ) -> Self {
        let widths = class.width_table(dataset, epsilon);
        Self::from_widths(class.n_states(), class.n_actions(), widths, dataset.version(), beta, epsilon, gamma, variant)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_widths(
        n_states: usize,
        n_actions: usize,
        widths: Vec<T>,
        version: u64,
        beta: T,
        epsilon: T,
        gamma: T,
        variant: BonusVariant,
    ) -> Self {
        assert_eq!(widths.len(), n_states * n_actions, "one width per pair");
        let big = T::lit(3.0) / (T::one() - gamma);
        let known_pair: Vec<bool> = match variant {
            BonusVariant::None => vec![true; widths.len()],
            _ => widths.iter().map(|w| *w < beta).collect(),
        };
        let bonus = widths
            .iter()
            .zip(&known_pair)
            .map(|(w, &known)| match (variant, known) {
                (BonusVariant::None, _) => T::zero(),
                (_, false) => big,
                (BonusVariant::Full, true) => T::lit(2.0) / beta * *w,
                (BonusVariant::IndicatorOnly, true) => T::zero(),
            })
            .collect();
        let known_state = known_pair.chunks(n_actions).map(|row| row.iter().all(|k| *k)).collect();
        Self { n_states, n_actions, version, beta, epsilon, gamma, variant, widths, bonus, known_pair, known_state }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Dataset version the oracle was built from.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn variant(&self) -> BonusVariant {
        self.variant
    }

    pub fn width(&self, s: usize, a: usize) -> T {
        self.widths[s * self.n_actions + a]
    }

    pub fn widths(&self) -> &[T] {
        &self.widths
    }

    pub fn bonus(&self, s: usize, a: usize) -> T {
        self.bonus[s * self.n_actions + a]
    }

    pub fn bonus_table(&self) -> &[T] {
        &self.bonus
    }

    pub fn known_pair(&self, s: usize, a: usize) -> bool {
        self.known_pair[s * self.n_actions + a]
    }

    /// A state is known when every one of its actions is a known pair.
    pub fn known_state(&self, s: usize) -> bool {
        self.known_state[s]
    }

    pub fn known_states(&self) -> &[bool] {
        &self.known_state
    }

    pub fn known_pair_fraction(&self) -> f64 {
        self.known_pair.iter().filter(|k| **k).count() as f64 / self.known_pair.len() as f64
    }

    /// The width part of the bonus at known states, `ω / β · 1{s known}` (zero without a width bonus).
    pub fn width_bonus(&self, s: usize, a: usize) -> T {
        if self.variant == BonusVariant::Full && self.known_state[s] {
            self.width(s, a) / self.beta
        } else {
            T::zero()
        }
    }

    /// `M_b = (S, A, P, r + b, γ)`.
    pub fn build_bonus_mdp(&self, mdp: &MdpSpec<T>) -> Result<AugmentedMdp<T>> {
        AugmentedMdp::new(mdp.clone(), self.bonus.clone(), None)
    }

    /// The bonus MDP plus an absorbing action with reward 3 at each unknown state.
    pub fn build_auxiliary_mdp(&self, mdp: &MdpSpec<T>) -> Result<AugmentedMdp<T>> {
        let unknown: Vec<bool> = self.known_state.iter().map(|k| !k).collect();
        let unknown = unknown.iter().any(|u| *u).then_some(unknown);
        AugmentedMdp::new(mdp.clone(), self.bonus.clone(), unknown)
    }

    /// CSV rows `n,s,a,width,bonus,known` (no header).
    pub fn dump_csv_rows(&self, n: u64) -> String {
        let mut out = String::new();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let _ = writeln!(
                    out,
                    "{n},{s},{a},{},{},{}",
                    self.width(s, a),
                    self.bonus(s, a),
                    u8::from(self.known_pair(s, a))
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{chain, policy_evaluation_exact, value_iteration, FiniteModel, PolicyTable};
    use crate::sensitivity::AdmissionConfig;

    fn oracle(widths: Vec<f64>, n_actions: usize, beta: f64, gamma: f64) -> BonusOracle<f64> {
        let n_states = widths.len() / n_actions;
        BonusOracle::from_widths(n_states, n_actions, widths, 0, beta, 1.0, gamma, BonusVariant::Full)
    }

    #[test]
    fn empty_dataset_is_all_unknown() {
        let class: FunctionClass<f64> = FunctionClass::tabular(3, 2, 1.0).unwrap();
        let ds = SensitivityDataset::new(&class, AdmissionConfig { c_mult: 1.0, delta: 0.1, n_budget: 10 }).unwrap();
        let o = BonusOracle::rebuild(&ds, &class, 0.5, 1.0, 0.9, BonusVariant::Full);
        assert!(o.widths().iter().all(|w| *w == 2.0));
        assert!(o.bonus_table().iter().all(|b| (b - 30.0).abs() < 1e-12));
        assert!((0..3).all(|s| !o.known_state(s)));
        assert_eq!(o.known_pair_fraction(), 0.0);
    }

    #[test]
    fn bonus_examples() {
        let o = oracle(vec![0.2, 0.05], 1, 0.1, 0.9);
        assert!((o.bonus(0, 0) - 30.0).abs() < 1e-12);
        assert!((o.bonus(1, 0) - 1.0).abs() < 1e-12);
        assert!(!o.known_pair(0, 0) && o.known_pair(1, 0));
    }

    #[test]
    fn width_equal_to_beta_is_unknown() {
        let o = oracle(vec![0.01, 0.1], 2, 0.1, 0.9);
        assert!(!o.known_state(0));
        let o = oracle(vec![0.01, 0.09], 2, 0.1, 0.9);
        assert!(o.known_state(0));
    }

    #[test]
    fn bonus_is_bounded() {
        let widths: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
        let o = oracle(widths, 4, 0.3, 0.5);
        assert!(o.bonus_table().iter().all(|b| *b >= 0.0 && *b <= 6.0));
        for (z, w) in o.widths().iter().enumerate() {
            if *w < 0.3 {
                assert!(o.bonus_table()[z] < 2.0);
            }
        }
    }

    #[test]
    fn variants() {
        let o: BonusOracle<f64> = BonusOracle::from_widths(2, 1, vec![0.1, 1.0], 0, 0.3, 1.0, 0.9, BonusVariant::IndicatorOnly);
        assert_eq!(o.bonus(0, 0), 0.0);
        assert!((o.bonus(1, 0) - 30.0).abs() < 1e-12);
        let o = BonusOracle::from_widths(2, 1, vec![0.1, 1.0], 0, 0.3, 1.0, 0.9, BonusVariant::None);
        assert!(o.bonus_table().iter().all(|b| *b == 0.0));
        assert!(o.known_state(1));
    }

    #[test]
    fn zero_bonus_mdp_matches_base() {
        let mdp = chain::<f64>(4, 0.1, true, 0.9).unwrap();
        let o = BonusOracle::from_widths(4, 2, vec![0.0; 8], 0, 0.3, 1.0, 0.9, BonusVariant::Full);
        let aug = o.build_bonus_mdp(&mdp).unwrap();
        let a = value_iteration(&mdp, 1e-12);
        let b = value_iteration(&aug, 1e-12);
        for (x, y) in a.v.iter().zip(&b.v) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn all_unknown_value_bound() {
        let mdp = chain::<f64>(4, 0.1, true, 0.9).unwrap();
        let o = oracle(vec![2.0; 8], 2, 0.3, 0.9);
        let aug = o.build_bonus_mdp(&mdp).unwrap();
        let v = value_iteration(&aug, 1e-12).v;
        let bound = (1.0 + 30.0) / 0.1;
        assert!(v.iter().all(|x| *x <= bound + 1e-9));
    }

    #[test]
    fn single_known_pair_reward() {
        let mdp = chain::<f64>(3, 0.0, false, 0.9).unwrap();
        let mut widths = vec![2.0; 6];
        widths[2] = 0.15;
        let o = oracle(widths, 2, 0.3, 0.9);
        assert!((o.bonus(1, 0) - 1.0).abs() < 1e-12);
        let aug = o.build_bonus_mdp(&mdp).unwrap();
        assert!((aug.reward(1, 0) - (mdp.reward(1, 0) + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn absorbing_action_value() {
        let mdp = chain::<f64>(3, 0.0, true, 0.9).unwrap();
        let o = oracle(vec![0.0, 0.0, 2.0, 2.0, 0.0, 0.0], 2, 0.3, 0.9);
        let aux = o.build_auxiliary_mdp(&mdp).unwrap();
        let dagger = aux.absorbing_action().unwrap();
        let mut pi = PolicyTable::uniform(3, 3);
        for s in 0..3 {
            let row = pi.row_mut(s);
            row.iter_mut().for_each(|p| *p = 0.0);
            row[if s == 1 { dagger } else { 0 }] = 1.0;
        }
        let sol = policy_evaluation_exact(&aux, &pi, 1e-12).unwrap();
        assert!((sol.v[1] - 30.0).abs() < 1e-9);
        let all_known = oracle(vec![0.0; 6], 2, 0.3, 0.9);
        assert!(!all_known.build_auxiliary_mdp(&mdp).unwrap().has_absorbing_action());
    }

    #[test]
    fn rebuild_is_pure() {
        let class = FunctionClass::tabular(2, 2, 1.0).unwrap();
        let ds = SensitivityDataset::from_snapshot(
            &class,
            AdmissionConfig { c_mult: 1.0, delta: 0.1, n_budget: 10 },
            "{\"s\":0,\"a\":1,\"count\":40}\n",
        )
        .unwrap();
        let a = BonusOracle::rebuild(&ds, &class, 0.3, 1.0, 0.9, BonusVariant::Full);
        let b = BonusOracle::rebuild(&ds, &class, 0.3, 1.0, 0.9, BonusVariant::Full);
        assert_eq!(a, b);
        assert!(a.known_pair(0, 1) && !a.known_pair(0, 0));
        assert_eq!(a.dump_csv_rows(3).lines().count(), 4);
    }
}
