//! The online-sensitivity-sampled dataset: streaming admission with integer copy
//! weights, version-based switch detection, and the weighted Z-norm.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_class::{FunctionClass, FunctionHandle, PairWeights};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionConfig<T> {
    /// Multiplier on the sensitivity factor. The proofs leave it unspecified.
    pub c_mult: T,
    pub delta: T,
    /// Planned number of outer iterations `N`.
    pub n_budget: u64,
}

impl<T: Scalar> AdmissionConfig<T> {
    /// Cover radius `√(δ / 64N³)` used inside the sensitivity factor.
    pub fn cover_radius(&self) -> T {
        let n = T::from_u64_lossy(self.n_budget);
        (self.delta / (T::lit(64.0) * n * n * n)).sqrt()
    }

    /// `ln N + log N(F, r) + ln(1/δ)`.
    pub fn log_multiplier(&self, class: &FunctionClass<T>) -> T {
        T::from_u64_lossy(self.n_budget).ln() + class.log_cover_size(self.cover_radius()) - self.delta.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissionDecision<T> {
    pub sensitivity_raw: T,
    pub factor: T,
    pub copies_if_admitted: u64,
    pub admitted: bool,
    pub coin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityDataset<T> {
    n_states: usize,
    n_actions: usize,
    counts: BTreeMap<usize, u64>,
    version: u64,
    total_admissions: u64,
    total_copies: u64,
    config: AdmissionConfig<T>,
    log_multiplier: T,
}

impl<T: Scalar> SensitivityDataset<T> {
    pub fn new(class: &FunctionClass<T>, config: AdmissionConfig<T>) -> Result<Self> {
        if !(config.c_mult > T::zero()) {
            return Err(Error::InvalidConfig { key: "c_mult".into(), msg: "must be positive".into() });
        }
        if !(config.delta > T::zero() && config.delta < T::one()) {
            return Err(Error::InvalidConfig { key: "delta".into(), msg: "must lie in (0, 1)".into() });
        }
        if config.n_budget == 0 {
            return Err(Error::InvalidConfig { key: "n_budget".into(), msg: "must be positive".into() });
        }
        Ok(Self {
            n_states: class.n_states(),
            n_actions: class.n_actions(),
            counts: BTreeMap::new(),
            version: 0,
            total_admissions: 0,
            total_copies: 0,
            config,
            log_multiplier: config.log_multiplier(class),
        })
    }

    pub fn config(&self) -> &AdmissionConfig<T> {
        &self.config
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn total_admissions(&self) -> u64 {
        self.total_admissions
    }

    /// Sum of all copy weights.
    pub fn total_weight(&self) -> u64 {
        self.total_copies
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.counts.get(&(s * self.n_actions + a)).copied().unwrap_or(0)
    }

    /// `((s, a), count)` in pair order.
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.counts.iter().map(move |(&z, &c)| ((z / self.n_actions, z % self.n_actions), c))
    }

    /// The multiplier `ln N + log N(F, √(δ/64N³)) + ln(1/δ)` applied to sensitivities.
    pub fn log_multiplier(&self) -> T {
        self.log_multiplier
    }

    /// Sensitivity of `(s, a)` against the current dataset, without admitting it.
    pub fn raw_sensitivity(&self, class: &FunctionClass<T>, s: usize, a: usize) -> Result<T> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::OutOfDomain { state: s, action: a });
        }
        Ok(class.sensitivity(self, s * self.n_actions + a, self.config.n_budget))
    }

    /// Offer `(s, a)` to the dataset. A coin is drawn on every call so the random
    /// stream does not depend on the decision.
    pub fn admit<R: Rng + ?Sized>(
        &mut self,
        class: &FunctionClass<T>,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<AdmissionDecision<T>> {
        let sensitivity_raw = self.raw_sensitivity(class, s, a)?;
        let factor = self.config.c_mult * sensitivity_raw * self.log_multiplier;
        let coin: f64 = rng.gen();
        let (copies, admitted) = if factor >= T::one() {
            (1, true)
        } else {
            let inv = (T::one() / factor).floor().to_f64().unwrap_or(f64::MAX);
            let copies = if inv >= u64::MAX as f64 { u64::MAX } else { inv as u64 };
            (copies.max(1), coin < 1.0 / copies.max(1) as f64)
        };
        if admitted {
            let entry = self.counts.entry(s * self.n_actions + a).or_insert(0);
            *entry = entry.saturating_add(copies);
            self.total_copies = self.total_copies.saturating_add(copies);
            self.total_admissions += 1;
            self.version += 1;
        }
        Ok(AdmissionDecision { sensitivity_raw, factor, copies_if_admitted: copies, admitted, coin })
    }

    /// `Σ_z count(z) · Δf(z)²` for `Δf = f − g`.
    pub fn z_norm_sq(&self, class: &FunctionClass<T>, f: &FunctionHandle<T>, g: &FunctionHandle<T>) -> T {
        self.counts
            .iter()
            .map(|(&z, &c)| {
                let d = class.evaluate_pair(f, z) - class.evaluate_pair(g, z);
                T::from_u64_lossy(c) * d * d
            })
            .sum()
    }

    pub fn switch_occurred(&self, last_seen_version: u64) -> bool {
        self.version > last_seen_version
    }

    /// JSON lines, one `{"s":…,"a":…,"count":…}` object per entry.
    pub fn snapshot_json_lines(&self) -> String {
        let mut out = String::new();
        for ((s, a), count) in self.entries() {
            let _ = writeln!(out, "{}", serde_json::json!({ "s": s, "a": a, "count": count }));
        }
        out
    }

    /// Rebuild a dataset from [`snapshot_json_lines`](Self::snapshot_json_lines).
    /// The version is set to the number of entries.
    pub fn from_snapshot(class: &FunctionClass<T>, config: AdmissionConfig<T>, text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            s: usize,
            a: usize,
            count: u64,
        }
        let mut ds = Self::new(class, config)?;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line =
                serde_json::from_str(raw).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            if line.s >= ds.n_states || line.a >= ds.n_actions || line.count == 0 {
                return Err(Error::Parse { line: i + 1, msg: "entry outside the domain or zero count".into() });
            }
            *ds.counts.entry(line.s * ds.n_actions + line.a).or_insert(0) += line.count;
            ds.total_copies += line.count;
            ds.total_admissions += 1;
            ds.version += 1;
        }
        Ok(ds)
    }
}

impl<T: Scalar> PairWeights<T> for SensitivityDataset<T> {
    fn weight(&self, pair: usize) -> T {
        self.counts.get(&pair).map_or(T::zero(), |&c| T::from_u64_lossy(c))
    }

    fn for_each_weight(&self, f: &mut dyn FnMut(usize, T)) {
        for (&z, &c) in &self.counts {
            f(z, T::from_u64_lossy(c));
        }
    }
}

/// Upper bound on the number of dataset changes over `N` iterations:
/// `C_budget · log_term · d_eluder · (ln N)²`.
pub fn switch_budget<T: Scalar>(d_eluder: T, n: u64, log_term: T, c_budget: T) -> T {
    let ln_n = T::from_u64_lossy(n).ln();
    c_budget * log_term * d_eluder * ln_n * ln_n
}
