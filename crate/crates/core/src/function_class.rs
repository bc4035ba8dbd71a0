//! Function classes `F` over state-action pairs: evaluation, constrained least
//! squares, the width of the difference class under a dataset norm, online
//! sensitivity scores, and covering numbers.
//!
//! Two instantiations are provided. The tabular class is every table with
//! entries in `[−W, W]`. The linear class is `θᵀφ(s, a)` with `‖θ‖₂ ≤ W` and
//! features normalised to `‖φ‖₂ ≤ 1`, so `‖f‖∞ ≤ W` holds for both.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{invert_dense, quad_form, solve_dense, Scalar};

/// Largest tabular domain the brute-force oracles accept.
pub const BRUTEFORCE_MAX_PAIRS: usize = 8;
/// Largest linear feature dimension the brute-force oracles accept.
pub const BRUTEFORCE_MAX_DIM: usize = 3;

/// Nonnegative weights on pair indices; the norm `‖g‖²_Z = Σ_z w_z g(z)²`.
pub trait PairWeights<T: Scalar> {
    fn weight(&self, pair: usize) -> T;
    fn for_each_weight(&self, f: &mut dyn FnMut(usize, T));
}

impl<T: Scalar> PairWeights<T> for [T] {
    fn weight(&self, pair: usize) -> T {
        self[pair]
    }
    fn for_each_weight(&self, f: &mut dyn FnMut(usize, T)) {
        for (i, &w) in self.iter().enumerate() {
            if w > T::zero() {
                f(i, w);
            }
        }
    }
}

impl<T: Scalar> PairWeights<T> for Vec<T> {
    fn weight(&self, pair: usize) -> T {
        self[pair]
    }
    fn for_each_weight(&self, f: &mut dyn FnMut(usize, T)) {
        self.as_slice().for_each_weight(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassKind {
    Tabular,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularClass<T> {
    n_states: usize,
    n_actions: usize,
    bound: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClass<T> {
    n_states: usize,
    n_actions: usize,
    bound: T,
    dim: usize,
    features: Vec<T>,
    ridge: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionClass<T> {
    Tabular(TabularClass<T>),
    Linear(LinearClass<T>),
}

/// A member of a class: a value table or a coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionHandle<T> {
    Table(Vec<T>),
    Coefficients(Vec<T>),
}

/// `log N(F, radius)` paired with the radius it was computed at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverSpec<T> {
    pub radius: T,
    pub log_cover_size: T,
}

impl<T: Scalar> FunctionClass<T> {
    pub fn tabular(n_states: usize, n_actions: usize, bound: T) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidClass("empty domain".into()));
        }
        if !(bound > T::zero() && bound.is_finite()) {
            return Err(Error::InvalidClass(format!("sup-norm bound {bound} must be positive")));
        }
        Ok(Self::Tabular(TabularClass { n_states, n_actions, bound }))
    }

    /// Linear class over `features[pair]`; every feature must satisfy `‖φ‖₂ ≤ 1`.
    pub fn linear(n_states: usize, n_actions: usize, bound: T, features: &[Vec<T>], ridge: T) -> Result<Self> {
        if features.len() != n_states * n_actions || features.is_empty() {
            return Err(Error::InvalidClass("one feature vector per pair required".into()));
        }
        if !(bound > T::zero() && bound.is_finite()) {
            return Err(Error::InvalidClass(format!("sup-norm bound {bound} must be positive")));
        }
        if ridge < T::zero() {
            return Err(Error::InvalidClass("ridge must be nonnegative".into()));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::InvalidClass("feature dimension must be positive".into()));
        }
        let mut flat = Vec::with_capacity(features.len() * dim);
        for (i, f) in features.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::InvalidClass(format!("feature {i} has dimension {}", f.len())));
            }
            let norm = f.iter().map(|x| *x * *x).sum::<T>().sqrt();
            if !(norm <= T::one() + T::lit(1e-9)) {
                return Err(Error::InvalidClass(format!("feature {i} has norm {norm} > 1")));
            }
            flat.extend_from_slice(f);
        }
        Ok(Self::Linear(LinearClass { n_states, n_actions, bound, dim, features: flat, ridge }))
    }

    /// Linear class after dividing every feature by the largest feature norm.
    pub fn linear_normalized(n_states: usize, n_actions: usize, bound: T, features: &[Vec<T>], ridge: T) -> Result<Self> {
        let max_norm = features
            .iter()
            .map(|f| f.iter().map(|x| *x * *x).sum::<T>().sqrt())
            .fold(T::zero(), T::max);
        let scale = if max_norm > T::one() { T::one() / max_norm } else { T::one() };
        let scaled: Vec<Vec<T>> = features.iter().map(|f| f.iter().map(|x| *x * scale).collect()).collect();
        Self::linear(n_states, n_actions, bound, &scaled, ridge)
    }

    pub fn kind(&self) -> ClassKind {
        match self {
            Self::Tabular(_) => ClassKind::Tabular,
            Self::Linear(_) => ClassKind::Linear,
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            Self::Tabular(c) => c.n_states,
            Self::Linear(c) => c.n_states,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Self::Tabular(c) => c.n_actions,
            Self::Linear(c) => c.n_actions,
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states() * self.n_actions()
    }

    /// The sup-norm bound `W`.
    pub fn bound(&self) -> T {
        match self {
            Self::Tabular(c) => c.bound,
            Self::Linear(c) => c.bound,
        }
    }

    /// Number of free parameters (pairs for tabular, feature dimension for linear).
    pub fn dimension(&self) -> usize {
        match self {
            Self::Tabular(c) => c.n_states * c.n_actions,
            Self::Linear(c) => c.dim,
        }
    }

    fn pair(&self, s: usize, a: usize) -> Result<usize> {
        if s < self.n_states() && a < self.n_actions() {
            Ok(s * self.n_actions() + a)
        } else {
            Err(Error::OutOfDomain { state: s, action: a })
        }
    }

    /// The all-zero member.
    pub fn zero(&self) -> FunctionHandle<T> {
        match self {
            Self::Tabular(c) => FunctionHandle::Table(vec![T::zero(); c.n_states * c.n_actions]),
            Self::Linear(c) => FunctionHandle::Coefficients(vec![T::zero(); c.dim]),
        }
    }

    pub fn evaluate(&self, f: &FunctionHandle<T>, s: usize, a: usize) -> Result<T> {
        let z = self.pair(s, a)?;
        Ok(self.evaluate_pair(f, z))
    }

    pub(crate) fn evaluate_pair(&self, f: &FunctionHandle<T>, z: usize) -> T {
        match (self, f) {
            (Self::Tabular(_), FunctionHandle::Table(t)) => t[z],
            (Self::Linear(c), FunctionHandle::Coefficients(theta)) => dot(c.feature(z), theta),
            _ => panic!("function handle does not belong to this class"),
        }
    }

    /// Values of `f` at every pair.
    pub fn table(&self, f: &FunctionHandle<T>) -> Vec<T> {
        (0..self.n_pairs()).map(|z| self.evaluate_pair(f, z)).collect()
    }

    /// Least-squares fit projected to `‖f‖∞ ≤ W`. Tabular: per-pair mean, clamped,
    /// unobserved pairs the mean of the observed actions at their state (0 if none).
    /// Linear: ridge regression, then `‖θ‖₂ ≤ W`.
    pub fn fit_least_squares(&self, data: &[((usize, usize), T)]) -> Result<FunctionHandle<T>> {
        if data.is_empty() {
            return Err(Error::NoRegressionData);
        }
        match self {
            Self::Tabular(c) => {
                let n = c.n_states * c.n_actions;
                let mut sums = vec![T::zero(); n];
                let mut counts = vec![0usize; n];
                for &((s, a), y) in data {
                    let z = self.pair(s, a)?;
                    sums[z] += y;
                    counts[z] += 1;
                }
                let mut table: Vec<T> = sums
                    .iter()
                    .zip(&counts)
                    .map(|(&sum, &k)| {
                        if k == 0 {
                            T::zero()
                        } else {
                            (sum / T::from_usize_lossy(k)).max(-c.bound).min(c.bound)
                        }
                    })
                    .collect();
                // Any value minimizes the loss at an unobserved pair. Use the mean of the
                // observed actions at the same state so a policy step stays neutral there.
                for s in 0..c.n_states {
                    let row = s * c.n_actions..(s + 1) * c.n_actions;
                    let seen: Vec<T> = row.clone().filter(|&z| counts[z] > 0).map(|z| table[z]).collect();
                    if seen.is_empty() || seen.len() == c.n_actions {
                        continue;
                    }
                    let fill = seen.iter().fold(T::zero(), |acc, &v| acc + v) / T::from_usize_lossy(seen.len());
                    for z in row.filter(|&z| counts[z] == 0) {
                        table[z] = fill;
                    }
                }
                Ok(FunctionHandle::Table(table))
            }
            Self::Linear(c) => {
                let d = c.dim;
                let mut gram = vec![T::zero(); d * d];
                let mut rhs = vec![T::zero(); d];
                for &((s, a), y) in data {
                    let phi = c.feature(self.pair(s, a)?);
                    for i in 0..d {
                        rhs[i] += phi[i] * y;
                        for j in 0..d {
                            gram[i * d + j] += phi[i] * phi[j];
                        }
                    }
                }
                let mut ridge = c.ridge;
                let theta = loop {
                    let mut m = gram.clone();
                    for i in 0..d {
                        m[i * d + i] += ridge;
                    }
                    if let Some(theta) = solve_dense(m, rhs.clone(), d) {
                        break theta;
                    }
                    // rank-deficient design: fall back to a minimal ridge
                    ridge = if ridge > T::zero() { ridge * T::lit(10.0) } else { T::lit(1e-10) };
                };
                let norm = theta.iter().map(|x| *x * *x).sum::<T>().sqrt();
                let theta = if norm > c.bound { theta.iter().map(|x| *x * c.bound / norm).collect() } else { theta };
                Ok(FunctionHandle::Coefficients(theta))
            }
        }
    }

    /// `sup |Δf(s, a)|` over `Δf ∈ F − F` with `‖Δf‖²_Z ≤ epsilon`.
    ///
    /// Tabular: `min(2W, √(ε / c))` with `c` the weight at the pair. Linear: the ridge
    /// relaxation `min(2W, √(2ε) ‖φ‖_{(Σ̂ + λI)⁻¹})`, `λ = ε / 4W²`, which never
    /// undershoots the exact constrained supremum.
    pub fn width<W: PairWeights<T> + ?Sized>(&self, weights: &W, epsilon: T, s: usize, a: usize) -> Result<T> {
        let z = self.pair(s, a)?;
        Ok(match self {
            Self::Tabular(c) => tabular_width(c.bound, weights.weight(z), epsilon),
            Self::Linear(c) => {
                let inv = c.regularized_inverse(weights, epsilon / (T::lit(4.0) * c.bound * c.bound));
                c.linear_width(&inv, z, epsilon)
            }
        })
    }

    /// Width at every pair (one matrix inverse for the linear class).
    pub fn width_table<W: PairWeights<T> + ?Sized>(&self, weights: &W, epsilon: T) -> Vec<T> {
        match self {
            Self::Tabular(c) => (0..self.n_pairs()).map(|z| tabular_width(c.bound, weights.weight(z), epsilon)).collect(),
            Self::Linear(c) => {
                let inv = c.regularized_inverse(weights, epsilon / (T::lit(4.0) * c.bound * c.bound));
                (0..self.n_pairs()).map(|z| c.linear_width(&inv, z, epsilon)).collect()
            }
        }
    }

    /// Online sensitivity `sup (Δf(z))² / (min(‖Δf‖²_Z, 4NW²) + 1)`.
    ///
    /// Exact for the tabular class; for the linear class an upper bound built from the
    /// leverage `φᵀ(Σ̂ + I/4W²)⁻¹φ`.
    pub fn sensitivity<W: PairWeights<T> + ?Sized>(&self, weights: &W, pair: usize, n_budget: u64) -> T {
        let four_w2 = T::lit(4.0) * self.bound() * self.bound();
        let cap = four_w2 * T::from_u64_lossy(n_budget);
        match self {
            Self::Tabular(_) => four_w2 / ((four_w2 * weights.weight(pair)).min(cap) + T::one()),
            Self::Linear(c) => {
                let inv = c.regularized_inverse(weights, T::one() / four_w2);
                let leverage = quad_form(&inv, c.feature(pair));
                let capped = four_w2 / (cap + T::one());
                leverage.max(capped).min(four_w2)
            }
        }
    }

    /// Analytic upper bound on `log N(F, radius)`; zero once `radius ≥ 2W`.
    pub fn log_cover_size(&self, radius: T) -> T {
        assert!(radius > T::zero(), "radius must be positive");
        let w = self.bound();
        if radius >= T::lit(2.0) * w {
            return T::zero();
        }
        match self {
            Self::Tabular(c) => T::from_usize_lossy(c.n_states * c.n_actions) * (T::lit(2.0) * w / radius + T::one()).ln(),
            Self::Linear(c) => T::from_usize_lossy(c.dim) * (T::one() + T::lit(4.0) * w / radius).ln(),
        }
    }

    pub fn cover_spec(&self, radius: T) -> CoverSpec<T> {
        CoverSpec { radius, log_cover_size: self.log_cover_size(radius) }
    }

    fn check_bruteforce_scale(&self) -> Result<()> {
        match self {
            Self::Tabular(c) if c.n_states * c.n_actions > BRUTEFORCE_MAX_PAIRS => Err(Error::OracleScaleExceeded(format!(
                "{} pairs > {BRUTEFORCE_MAX_PAIRS}",
                c.n_states * c.n_actions
            ))),
            Self::Linear(c) if c.dim > BRUTEFORCE_MAX_DIM => {
                Err(Error::OracleScaleExceeded(format!("dimension {} > {BRUTEFORCE_MAX_DIM}", c.dim)))
            }
            _ => Ok(()),
        }
    }

    /// Width by exhaustive search over a grid of step `grid_step`.
    ///
    /// Tabular: every grid table is searched; the constraint is a sum over pairs, so the
    /// search over the other coordinates decomposes into one scan per pair. Linear: every
    /// `Δθ` on the cube grid inside the ball `‖Δθ‖₂ ≤ 2W`.
    pub fn width_bruteforce<W: PairWeights<T> + ?Sized>(
        &self,
        weights: &W,
        epsilon: T,
        s: usize,
        a: usize,
        grid_step: T,
    ) -> Result<T> {
        self.check_bruteforce_scale()?;
        let z = self.pair(s, a)?;
        let two_w = T::lit(2.0) * self.bound();
        let grid = symmetric_grid(two_w, grid_step);
        match self {
            Self::Tabular(_) => {
                // cheapest admissible contribution of every other pair
                let mut rest = T::zero();
                for other in 0..self.n_pairs() {
                    if other != z {
                        let w = weights.weight(other);
                        rest += grid.iter().map(|g| w * *g * *g).fold(T::infinity(), T::min);
                    }
                }
                let wz = weights.weight(z);
                Ok(grid
                    .iter()
                    .filter(|g| wz * **g * **g + rest <= epsilon)
                    .map(|g| g.abs())
                    .fold(T::zero(), T::max))
            }
            Self::Linear(c) => {
                let mut best = T::zero();
                let phi_z = c.feature(z).to_vec();
                for_each_grid_point(&grid, c.dim, &mut |theta| {
                    if dot(theta, theta) > two_w * two_w {
                        return;
                    }
                    let val = dot(theta, &phi_z).abs();
                    if val <= best {
                        return;
                    }
                    if c.norm_sq(weights, theta) <= epsilon {
                        best = val;
                    }
                });
                Ok(best)
            }
        }
    }

    /// Sensitivity by exhaustive grid search (tabular only; decomposed like
    /// [`width_bruteforce`](Self::width_bruteforce)).
    pub fn sensitivity_bruteforce<W: PairWeights<T> + ?Sized>(
        &self,
        weights: &W,
        pair: usize,
        n_budget: u64,
        grid_step: T,
    ) -> Result<T> {
        self.check_bruteforce_scale()?;
        let Self::Tabular(c) = self else {
            return Err(Error::OracleScaleExceeded("grid sensitivity search is tabular only".into()));
        };
        let two_w = T::lit(2.0) * c.bound;
        let grid = symmetric_grid(two_w, grid_step);
        let cap = T::lit(4.0) * c.bound * c.bound * T::from_u64_lossy(n_budget);
        let mut rest = T::zero();
        for other in 0..self.n_pairs() {
            if other != pair {
                let w = weights.weight(other);
                rest += grid.iter().map(|g| w * *g * *g).fold(T::infinity(), T::min);
            }
        }
        let wz = weights.weight(pair);
        Ok(grid
            .iter()
            .map(|g| *g * *g / ((wz * *g * *g + rest).min(cap) + T::one()))
            .fold(T::zero(), T::max))
    }

    /// Sampled lower estimate of the linear-class sensitivity and width suprema:
    /// `samples` random `Δθ` drawn uniformly from the ball `‖Δθ‖₂ ≤ 2W`, each also
    /// rescaled onto the width constraint boundary. Returns `(sensitivity, width)`.
    pub fn sampled_suprema<W: PairWeights<T> + ?Sized, R: Rng + ?Sized>(
        &self,
        weights: &W,
        pair: usize,
        n_budget: u64,
        epsilon: T,
        samples: usize,
        rng: &mut R,
    ) -> Result<(T, T)> {
        let Self::Linear(c) = self else {
            return Err(Error::InvalidClass("sampled suprema are for the linear class".into()));
        };
        let two_w = T::lit(2.0) * c.bound;
        let cap = T::lit(4.0) * c.bound * c.bound * T::from_u64_lossy(n_budget);
        let phi = c.feature(pair);
        let (mut sens, mut width) = (T::zero(), T::zero());
        for _ in 0..samples {
            let dir: Vec<T> = (0..c.dim).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
            let norm = dot(&dir, &dir).sqrt();
            if norm == T::zero() {
                continue;
            }
            let radius = two_w * T::lit(rng.gen::<f64>().powf(1.0 / c.dim as f64));
            let theta: Vec<T> = dir.iter().map(|x| *x / norm * radius).collect();
            let q = c.norm_sq(weights, &theta);
            let v = dot(&theta, phi);
            sens = sens.max(v * v / (q.min(cap) + T::one()));
            // largest multiple of theta inside both constraints
            let mut scale = two_w / radius;
            if q > T::zero() {
                scale = scale.min((epsilon / q).sqrt());
            }
            width = width.max(v.abs() * scale);
        }
        Ok((sens, width))
    }
}

impl<T: Scalar> LinearClass<T> {
    fn feature(&self, pair: usize) -> &[T] {
        &self.features[pair * self.dim..(pair + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn norm_sq<W: PairWeights<T> + ?Sized>(&self, weights: &W, theta: &[T]) -> T {
        let mut acc = T::zero();
        weights.for_each_weight(&mut |z, w| {
            let v = dot(self.feature(z), theta);
            acc += w * v * v;
        });
        acc
    }

    /// `(Σ̂ + λI)⁻¹` with `Σ̂ = Σ_z w_z φ(z)φ(z)ᵀ`.
    fn regularized_inverse<W: PairWeights<T> + ?Sized>(&self, weights: &W, lambda: T) -> Vec<T> {
        let d = self.dim;
        let mut m = vec![T::zero(); d * d];
        weights.for_each_weight(&mut |z, w| {
            let phi = self.feature(z);
            for i in 0..d {
                for j in 0..d {
                    m[i * d + j] += w * phi[i] * phi[j];
                }
            }
        });
        for i in 0..d {
            m[i * d + i] += lambda;
        }
        invert_dense(&m, d).expect("regularised second-moment matrix is positive definite")
    }

    fn linear_width(&self, inv: &[T], pair: usize, epsilon: T) -> T {
        let two_w = T::lit(2.0) * self.bound;
        let lev = quad_form(inv, self.feature(pair)).max(T::zero());
        two_w.min((T::lit(2.0) * epsilon * lev).sqrt())
    }
}

fn tabular_width<T: Scalar>(bound: T, weight: T, epsilon: T) -> T {
    let two_w = T::lit(2.0) * bound;
    if weight <= T::zero() {
        two_w
    } else {
        two_w.min((epsilon / weight).sqrt())
    }
}

fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(a, b)| *a * *b).sum()
}

fn symmetric_grid<T: Scalar>(half_width: T, step: T) -> Vec<T> {
    assert!(step > T::zero(), "grid step must be positive");
    let m = (half_width / step).floor().to_i64().expect("grid size");
    // Endpoints are kept even off-step: the tabular maximizers sit on the boundary.
    let mut grid: Vec<T> = (-m..=m).map(|k| T::lit(k as f64) * step).collect();
    if T::lit(m as f64) * step < half_width {
        grid.insert(0, -half_width);
        grid.push(half_width);
    }
    grid
}

fn for_each_grid_point<T: Scalar>(grid: &[T], dim: usize, f: &mut dyn FnMut(&[T])) {
    let mut idx = vec![0usize; dim];
    let mut point = vec![grid[0]; dim];
    loop {
        f(&point);
        let mut k = 0;
        loop {
            if k == dim {
                return;
            }
            idx[k] += 1;
            if idx[k] < grid.len() {
                point[k] = grid[idx[k]];
                break;
            }
            idx[k] = 0;
            point[k] = grid[0];
            k += 1;
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tab(ns: usize, na: usize, w: f64) -> FunctionClass<f64> {
        FunctionClass::tabular(ns, na, w).unwrap()
    }

    #[test]
    fn zero_table_evaluates_to_zero() {
        let c = tab(2, 2, 1.0);
        assert_eq!(c.evaluate(&c.zero(), 1, 1).unwrap(), 0.0);
        assert_eq!(c.evaluate(&c.zero(), 2, 0), Err(Error::OutOfDomain { state: 2, action: 0 }));
    }

    #[test]
    fn unit_linear_evaluation() {
        let c = FunctionClass::linear(1, 1, 1.0, &[vec![1.0, 0.0]], 1e-8).unwrap();
        let f = FunctionHandle::Coefficients(vec![1.0, 0.0]);
        assert_eq!(c.evaluate(&f, 0, 0).unwrap(), 1.0);
    }

    #[test]
    fn rejects_unnormalised_features() {
        assert!(FunctionClass::linear(1, 1, 1.0, &[vec![1.0, 1.0]], 0.0).is_err());
        let c: FunctionClass<f64> = FunctionClass::linear_normalized(1, 2, 1.0, &[vec![3.0, 4.0], vec![1.0, 0.0]], 0.0).unwrap();
        let f = FunctionHandle::Coefficients(vec![0.0, 1.0]);
        assert!((c.evaluate(&f, 0, 0).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn tabular_fit_mean_and_clamp() {
        let c = tab(2, 1, 5.0);
        let f = c.fit_least_squares(&[((0, 0), 1.0), ((0, 0), 3.0)]).unwrap();
        assert_eq!(c.evaluate(&f, 0, 0).unwrap(), 2.0);
        assert_eq!(c.evaluate(&f, 1, 0).unwrap(), 0.0);
        let c = tab(2, 1, 1.0);
        let f = c.fit_least_squares(&[((0, 0), 10.0)]).unwrap();
        assert_eq!(c.evaluate(&f, 0, 0).unwrap(), 1.0);
        assert_eq!(c.fit_least_squares(&[]), Err(Error::NoRegressionData));
    }

    #[test]
    fn linear_fit_one_dimensional_mean() {
        let c: FunctionClass<f64> = FunctionClass::linear(3, 1, 5.0, &[vec![1.0], vec![1.0], vec![1.0]], 0.0).unwrap();
        let f = c.fit_least_squares(&[((0, 0), 1.0), ((1, 0), 2.0), ((2, 0), 3.0)]).unwrap();
        let FunctionHandle::Coefficients(theta) = f else { panic!() };
        assert!((theta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_projects_to_bound() {
        let c: FunctionClass<f64> = FunctionClass::linear(1, 1, 1.0, &[vec![1.0]], 0.0).unwrap();
        let f = c.fit_least_squares(&[((0, 0), 4.0)]).unwrap();
        assert!((c.evaluate(&f, 0, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tabular_width_examples() {
        let c = tab(2, 1, 1.0);
        assert_eq!(c.width(&vec![0.0, 0.0], 1.0, 0, 0).unwrap(), 2.0);
        assert_eq!(c.width(&vec![4.0, 0.0], 1.0, 0, 0).unwrap(), 0.5);
        assert_eq!(c.width(&vec![0.0, 3.0], 1.0, 0, 0).unwrap(), 2.0);
    }

    #[test]
    fn width_bruteforce_examples() {
        let c = tab(2, 1, 1.0);
        let w = c.width_bruteforce(&vec![4.0, 0.0], 1.0, 0, 0, 0.001).unwrap();
        assert!((w - 0.5).abs() <= 0.002);
        let w = c.width_bruteforce(&vec![0.0, 0.0], 1.0, 0, 0, 0.01).unwrap();
        assert!((w - 2.0).abs() <= 0.01);
        // epsilon at least 4W² |Z| never binds
        let w = c.width_bruteforce(&vec![2.0, 3.0], 4.0 * 5.0, 0, 0, 0.01).unwrap();
        assert!((w - 2.0).abs() <= 0.01);
        let big = tab(3, 3, 1.0);
        assert!(matches!(big.width_bruteforce(&vec![0.0; 9], 1.0, 0, 0, 0.1), Err(Error::OracleScaleExceeded(_))));
    }

    #[test]
    fn tabular_sensitivity_examples() {
        let c = tab(1, 1, 1.0);
        assert_eq!(c.sensitivity(&vec![0.0], 0, 100), 4.0);
        assert!((c.sensitivity(&vec![1.0], 0, 1_000_000) - 0.8).abs() < 1e-12);
        assert!((c.sensitivity(&vec![5.0], 0, 2) - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_bruteforce_matches_examples() {
        let c = tab(2, 1, 1.0);
        for (w, n, want) in [(0.0, 100, 4.0), (1.0, 1_000_000, 0.8), (5.0, 2, 4.0 / 9.0)] {
            let got = c.sensitivity_bruteforce(&vec![w, 2.0], 0, n, 0.001).unwrap();
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn log_cover_examples() {
        let c = tab(3, 2, 1.0);
        assert_eq!(c.log_cover_size(2.0), 0.0);
        assert!((c.log_cover_size(0.5) - 6.0 * 5.0f64.ln()).abs() < 1e-12);
        let feats = vec![vec![0.5, 0.5, 0.5, 0.5]; 2];
        let l = FunctionClass::linear(2, 1, 1.0, &feats, 0.0).unwrap();
        assert!((l.log_cover_size(1.0) - 4.0 * 5.0f64.ln()).abs() < 1e-12);
        assert!(c.log_cover_size(0.1) >= c.log_cover_size(0.2));
    }

    fn linear_2d() -> FunctionClass<f64> {
        let s = 0.5f64.sqrt();
        let feats = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![s, s], vec![0.6, -0.8]];
        FunctionClass::linear(4, 1, 1.0, &feats, 1e-8).unwrap()
    }

    #[test]
    fn linear_width_bounds_bruteforce() {
        let c = linear_2d();
        let weights = vec![3.0, 0.0, 1.0, 0.0];
        for z in 0..4 {
            let closed = c.width(&weights, 0.5, z, 0).unwrap();
            let brute = c.width_bruteforce(&weights, 0.5, z, 0, 0.01).unwrap();
            assert!(brute <= closed + 1e-9, "pair {z}: brute {brute} > closed {closed}");
            assert!(closed <= brute * 2f64.sqrt() + 0.03, "pair {z}: closed {closed} too loose vs {brute}");
        }
    }

    #[test]
    fn empty_dataset_linear_width_is_two_w() {
        let c = linear_2d();
        assert!((c.width(&vec![0.0; 4], 0.5, 0, 0).unwrap() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn tabular_width_monotone_under_additions(
            counts in proptest::collection::vec(0u32..6, 6),
            extra in 0usize..6,
            eps in 0.01f64..4.0,
        ) {
            let c = tab(3, 2, 1.0);
            let before: Vec<f64> = counts.iter().map(|x| *x as f64).collect();
            let mut after = before.clone();
            after[extra] += 1.0;
            let wb = c.width_table(&before, eps);
            let wa = c.width_table(&after, eps);
            for z in 0..6 {
                prop_assert!(wa[z] <= wb[z]);
                prop_assert!(wb[z] >= 0.0 && wb[z] <= 2.0);
            }
        }

        #[test]
        fn sensitivity_in_range(count in 0u32..1000, n in 1u64..10_000, w in 0.1f64..10.0) {
            let c = tab(1, 1, w);
            let s = c.sensitivity(&vec![count as f64], 0, n);
            prop_assert!(s > 0.0 && s <= 4.0 * w * w + 1e-12);
        }

        #[test]
        fn linear_width_monotone_under_additions(
            counts in proptest::collection::vec(0u32..4, 4),
            extra in 0usize..4,
        ) {
            let c = linear_2d();
            let before: Vec<f64> = counts.iter().map(|x| *x as f64).collect();
            let mut after = before.clone();
            after[extra] += 1.0;
            let wb = c.width_table(&before, 0.3);
            let wa = c.width_table(&after, 0.3);
            for z in 0..4 {
                prop_assert!(wa[z] <= wb[z] + 1e-12);
            }
        }
    }
}
