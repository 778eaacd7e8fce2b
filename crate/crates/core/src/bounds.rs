//! Closed-form bounds on correlation sums under power-law covariance decay.
//!
//! Everything here is a pure function of its arguments. The hypothesis on the
//! sequence is `E[X_m X_n] <= K / (1 + |m - n|)^gamma`, and all bounds are
//! expressed through the piecewise function [`p_gamma`].

use std::f64::consts::LN_2;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("kappa must be positive, got {0}")]
    NonPositiveKappa(f64),
    #[error("beta = {beta} is outside the open interval ({lower}, 1)")]
    BetaOutOfRange { beta: f64, lower: f64 },
    #[error("p_gamma is defined on [1, inf), got x = {0}")]
    OutsideDomain(f64),
    #[error("index sets hold positive integers only")]
    ZeroIndex,
    #[error("duplicate index {0} in index set")]
    DuplicateIndex(u64),
    #[error("the double-sum bound needs a nonempty index set")]
    EmptySet,
    #[error("series truncation limits must be at least 1 (got k_max = {k_max}, i_max = {i_max})")]
    BadLimits { k_max: u32, i_max: u64 },
}

fn check_gamma(gamma: f64) -> Result<(), BoundsError> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::NonPositiveGamma(gamma))
    }
}

/// Infimum of admissible rate parameters for a given decay exponent.
///
/// `beta` must lie strictly above this value and strictly below 1.
pub fn beta_lower_bound(gamma: f64) -> f64 {
    if gamma >= 1.0 {
        0.5
    } else {
        1.0 - gamma / 2.0
    }
}

/// The decay exponent `gamma`, the constant `K` and the rate parameter `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceHypothesis {
    gamma: f64,
    kappa: f64,
    beta: f64,
}

impl CovarianceHypothesis {
    pub fn new(gamma: f64, kappa: f64, beta: f64) -> Result<Self, BoundsError> {
        check_gamma(gamma)?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(BoundsError::NonPositiveKappa(kappa));
        }
        let lower = beta_lower_bound(gamma);
        if !(beta > lower && beta < 1.0) {
            return Err(BoundsError::BetaOutOfRange { beta, lower });
        }
        Ok(Self { gamma, kappa, beta })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Same hypothesis with a different constant `K`.
    pub fn with_kappa(&self, kappa: f64) -> Result<Self, BoundsError> {
        Self::new(self.gamma, kappa, self.beta)
    }
}

/// A finite set of positive integers, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSet {
    elements: Vec<u64>,
}

impl IndexSet {
    pub fn new<I: IntoIterator<Item = u64>>(elements: I) -> Result<Self, BoundsError> {
        let mut elements: Vec<u64> = elements.into_iter().collect();
        elements.sort_unstable();
        if elements.first() == Some(&0) {
            return Err(BoundsError::ZeroIndex);
        }
        if let Some(w) = elements.windows(2).find(|w| w[0] == w[1]) {
            return Err(BoundsError::DuplicateIndex(w[0]));
        }
        Ok(Self { elements })
    }

    /// `{1, ..., m}`.
    pub fn prefix(m: u64) -> Self {
        Self {
            elements: (1..=m).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.elements
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.elements.iter().copied()
    }
}

/// The nondecreasing function bounding partial sums of `(1 + n)^-gamma`.
///
/// `1/(gamma-1)` for `gamma > 1`, `ln x + 1` for `gamma == 1`,
/// `x^(1-gamma)/(1-gamma)` for `gamma < 1`.
pub fn p_gamma(gamma: f64, x: f64) -> Result<f64, BoundsError> {
    check_gamma(gamma)?;
    if !(x >= 1.0) {
        return Err(BoundsError::OutsideDomain(x));
    }
    Ok(p_gamma_unchecked(gamma, x))
}

fn p_gamma_unchecked(gamma: f64, x: f64) -> f64 {
    if gamma > 1.0 {
        1.0 / (gamma - 1.0)
    } else if gamma == 1.0 {
        x.ln() + 1.0
    } else {
        x.powf(1.0 - gamma) / (1.0 - gamma)
    }
}

/// `ln p_gamma(2^k)`, evaluated without forming `2^k`.
fn ln_p_gamma_pow2(gamma: f64, k: u32) -> f64 {
    let k = f64::from(k);
    if gamma > 1.0 {
        -(gamma - 1.0).ln()
    } else if gamma == 1.0 {
        (k * LN_2 + 1.0).ln()
    } else {
        k * (1.0 - gamma) * LN_2 - (1.0 - gamma).ln()
    }
}

/// `ln(1 + e^x)` without overflow.
fn ln_one_plus_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Upper bound on `sum_{n in J} (1 + n)^-gamma`, namely `p_gamma(|J| + 1)`.
pub fn lemma1_bound(set: &IndexSet, gamma: f64) -> Result<f64, BoundsError> {
    p_gamma(gamma, set.len() as f64 + 1.0)
}

/// Upper bound on `sum_{(m,n) in J^2} (1 + |m - n|)^-gamma`, namely
/// `|J| (1 + 2 p_gamma(|J|))`.
pub fn lemma2_bound(set: &IndexSet, gamma: f64) -> Result<f64, BoundsError> {
    if set.is_empty() {
        check_gamma(gamma)?;
        return Err(BoundsError::EmptySet);
    }
    let card = set.len() as f64;
    Ok(card * (1.0 + 2.0 * p_gamma(gamma, card)?))
}

/// `ln(2^{(1-2 beta) k} (1 + 2 p_gamma(2^k)))`, the level factor of the
/// block badness bound.
fn ln_level_factor(gamma: f64, beta: f64, k: u32) -> f64 {
    let ln_two_p = LN_2 + ln_p_gamma_pow2(gamma, k);
    (1.0 - 2.0 * beta) * f64::from(k) * LN_2 + ln_one_plus_exp(ln_two_p)
}

fn level_factor(gamma: f64, beta: f64, k: u32) -> f64 {
    ln_level_factor(gamma, beta, k).exp()
}

/// Chebyshev bound on `P(B_{k,i} is bad)`:
/// `K i^{-2 beta} 2^{(1 - 2 beta) k} (1 + 2 p_gamma(2^k))`.
///
/// Evaluated in log space so that deep levels do not overflow.
pub fn chebyshev_block_bound(h: &CovarianceHypothesis, k: u32, i: u64) -> f64 {
    assert!(i >= 1, "dyadic block indices start at 1");
    let ln = h.kappa.ln() - 2.0 * h.beta * (i as f64).ln() + ln_level_factor(h.gamma, h.beta, k);
    ln.exp()
}

/// Which factor of the badness series, if any, fails to converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Summability {
    Summable,
    /// `beta <= 1/2`: the sum over `i` of `i^{-2 beta}` diverges.
    DivergentInIndex,
    /// `gamma < 1` and `beta <= 1 - gamma/2`: the sum over levels diverges.
    DivergentInLevel,
}

pub fn summability(gamma: f64, beta: f64) -> Summability {
    if beta <= 0.5 {
        Summability::DivergentInIndex
    } else if gamma < 1.0 && beta <= 1.0 - gamma / 2.0 {
        Summability::DivergentInLevel
    } else {
        Summability::Summable
    }
}

/// A truncated Borel–Cantelli series together with a certified bound on
/// everything left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BadnessSeries {
    pub k_max: u32,
    pub i_max: u64,
    /// `sum_{0 <= k <= k_max} sum_{1 <= i <= i_max}` of the block bound.
    pub partial_sum: f64,
    /// Upper bound on the full series minus `partial_sum`; infinite when the
    /// series diverges.
    pub tail_bound: f64,
    pub summability: Summability,
}

impl BadnessSeries {
    pub fn is_summable(&self) -> bool {
        self.summability == Summability::Summable
    }

    /// `tail_bound / partial_sum`.
    pub fn relative_tail(&self) -> f64 {
        self.tail_bound / self.partial_sum
    }
}

/// Partial sum of the bad-block bound over the rectangle
/// `0 <= k <= k_max`, `1 <= i <= i_max`.
pub fn badness_series_partial(
    h: &CovarianceHypothesis,
    k_max: u32,
    i_max: u64,
) -> Result<BadnessSeries, BoundsError> {
    badness_series_raw(h.gamma, h.kappa, h.beta, k_max, i_max)
}

/// Like [`badness_series_partial`] but accepts parameters at or beyond the
/// summability boundary, which a [`CovarianceHypothesis`] refuses to hold.
/// Requires `0 < beta < 1` so the block bound itself stays finite.
pub fn badness_series_raw(
    gamma: f64,
    kappa: f64,
    beta: f64,
    k_max: u32,
    i_max: u64,
) -> Result<BadnessSeries, BoundsError> {
    check_gamma(gamma)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(BoundsError::NonPositiveKappa(kappa));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(BoundsError::BetaOutOfRange { beta, lower: 0.0 });
    }
    if k_max < 1 || i_max < 1 {
        return Err(BoundsError::BadLimits { k_max, i_max });
    }

    // The bound factorises as K * a_k * b_i.
    let level_sum: f64 = (0..=k_max).map(|k| level_factor(gamma, beta, k)).sum();
    let index_sum = index_partial_sum(beta, i_max);
    let partial_sum = kappa * level_sum * index_sum;

    let summability = summability(gamma, beta);
    let tail_bound = match summability {
        Summability::Summable => {
            let index_tail = index_tail_bound(beta, i_max);
            let level_tail = level_tail(gamma, beta, k_max);
            kappa * (level_tail * (index_sum + index_tail) + level_sum * index_tail)
        }
        _ => f64::INFINITY,
    };

    Ok(BadnessSeries {
        k_max,
        i_max,
        partial_sum,
        tail_bound,
        summability,
    })
}

/// `sum_{i=1}^{m} i^{-2 beta}`, accumulated smallest terms first.
fn index_partial_sum(beta: f64, m: u64) -> f64 {
    (1..=m).rev().map(|i| (i as f64).powf(-2.0 * beta)).sum()
}

/// Integral comparison: `sum_{i > m} i^{-2 beta} <= m^{1 - 2 beta} / (2 beta - 1)`.
fn index_tail_bound(beta: f64, m: u64) -> f64 {
    (m as f64).powf(1.0 - 2.0 * beta) / (2.0 * beta - 1.0)
}

/// Exact value of `sum_{k > k_max} 2^{(1-2beta)k} (1 + 2 p_gamma(2^k))` for a
/// summable pair, via geometric series.
fn level_tail(gamma: f64, beta: f64, k_max: u32) -> f64 {
    let r = (1.0 - 2.0 * beta) * LN_2;
    let ratio = r.exp();
    let start = f64::from(k_max) + 1.0;
    let geometric = |ln_ratio: f64| (ln_ratio * start).exp() / (1.0 - ln_ratio.exp());
    if gamma > 1.0 {
        (1.0 + 2.0 / (gamma - 1.0)) * geometric(r)
    } else if gamma == 1.0 {
        // a_k = ratio^k (3 + 2 k ln 2)
        // sum_{k >= m} k q^k = q^m (m - (m - 1) q) / (1 - q)^2
        let head = (r * start).exp();
        let weighted = head * (start - (start - 1.0) * ratio) / (1.0 - ratio).powi(2);
        3.0 * geometric(r) + 2.0 * LN_2 * weighted
    } else {
        let s = (2.0 - 2.0 * beta - gamma) * LN_2;
        geometric(r) + 2.0 / (1.0 - gamma) * geometric(s)
    }
}

/// Sum of the block bound over every block inside a horizon of `2^depth`:
/// `0 <= k <= depth`, `1 <= i <= 2^{depth - k}`.
pub fn badness_series_over_horizon(h: &CovarianceHypothesis, depth: u32) -> f64 {
    let n = 1u64 << depth;
    // prefix[m] = sum_{i=1}^{m} i^{-2 beta}
    let mut prefix = Vec::with_capacity(n as usize + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for i in 1..=n {
        acc += (i as f64).powf(-2.0 * h.beta);
        prefix.push(acc);
    }
    (0..=depth)
        .map(|k| level_factor(h.gamma, h.beta, k) * prefix[(n >> k) as usize])
        .sum::<f64>()
        * h.kappa
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn hypothesis_rejects_boundaries() {
        assert!(CovarianceHypothesis::new(2.0, 1.0, 0.75).is_ok());
        assert!(CovarianceHypothesis::new(2.0, 1.0, 0.5).is_err());
        assert!(CovarianceHypothesis::new(2.0, 1.0, 1.0).is_err());
        assert!(CovarianceHypothesis::new(0.5, 1.0, 0.75).is_err());
        assert!(CovarianceHypothesis::new(0.5, 1.0, 0.7501).is_ok());
        assert!(CovarianceHypothesis::new(0.0, 1.0, 0.75).is_err());
        assert!(CovarianceHypothesis::new(1.0, 0.0, 0.75).is_err());
        assert!(CovarianceHypothesis::new(f64::NAN, 1.0, 0.75).is_err());
    }

    #[test]
    fn p_gamma_branches() {
        assert_eq!(p_gamma(2.0, 1000.0).unwrap(), 1.0);
        assert_eq!(p_gamma(1.0, 1.0).unwrap(), 1.0);
        assert!(close(p_gamma(0.5, 4.0).unwrap(), 4.0, 1e-15));
        assert!(p_gamma(1.0, 0.5).is_err());
        assert!(p_gamma(-1.0, 2.0).is_err());
    }

    #[test]
    fn p_gamma_half_matches_quadrature() {
        // midpoint rule for the integral of (1+t)^{-1/2} on [0, 3]
        let steps = 200_000;
        let h = 3.0 / steps as f64;
        let integral: f64 = (0..steps)
            .map(|j| (1.0 + (j as f64 + 0.5) * h).powf(-0.5) * h)
            .sum();
        // integral = 2 (2 - 1) = 2 and p_{1/2}(4) = integral + 1/(1 - gamma)
        assert!((integral - 2.0).abs() < 1e-9);
        assert!(close(p_gamma(0.5, 4.0).unwrap(), integral + 2.0, 1e-9));
    }

    #[test]
    fn index_set_validation() {
        assert_eq!(IndexSet::new([0, 1]), Err(BoundsError::ZeroIndex));
        assert_eq!(IndexSet::new([3, 1, 3]), Err(BoundsError::DuplicateIndex(3)));
        let s = IndexSet::new([9, 3, 27]).unwrap();
        assert_eq!(s.as_slice(), &[3, 9, 27]);
    }

    #[test]
    fn lemma1_examples() {
        let empty = IndexSet::default();
        assert_eq!(lemma1_bound(&empty, 1.0).unwrap(), 1.0);

        let prefix = IndexSet::prefix(100);
        let bound = lemma1_bound(&prefix, 0.5).unwrap();
        assert!(close(bound, 101f64.sqrt() / 0.5, 1e-15));
        assert!((bound - 20.0998).abs() < 1e-4);
        let brute: f64 = (1..=100).map(|n| (1.0 + n as f64).powf(-0.5)).sum();
        assert!((brute - 17.689108).abs() < 1e-6);
        assert!(brute <= bound);

        let single = IndexSet::new([7]).unwrap();
        assert_eq!(lemma1_bound(&single, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn lemma2_examples() {
        let five = IndexSet::new([5]).unwrap();
        for gamma in [0.3, 1.0, 2.5] {
            let expected = 1.0 + 2.0 * p_gamma(gamma, 1.0).unwrap();
            assert_eq!(lemma2_bound(&five, gamma).unwrap(), expected);
        }

        let bound = lemma2_bound(&IndexSet::prefix(64), 1.0).unwrap();
        assert!(close(bound, 64.0 * (1.0 + 2.0 * (64f64.ln() + 1.0)), 1e-15));
        assert!((bound - 724.337).abs() < 1e-3);

        let powers = IndexSet::new([1, 3, 9, 27, 81]).unwrap();
        let expected = 5.0 * (1.0 + 2.0 * 5f64.powf(0.7) / 0.7);
        assert!(close(lemma2_bound(&powers, 0.3).unwrap(), expected, 1e-15));

        assert_eq!(
            lemma2_bound(&IndexSet::default(), 1.0),
            Err(BoundsError::EmptySet)
        );
    }

    #[test]
    fn chebyshev_examples() {
        let h = CovarianceHypothesis::new(1.0, 1.0, 0.75).unwrap();
        assert!(close(chebyshev_block_bound(&h, 0, 1), 3.0, 1e-14));

        let h = CovarianceHypothesis::new(2.0, 1.0, 0.75).unwrap();
        assert!(close(chebyshev_block_bound(&h, 10, 1), 0.09375, 1e-14));

        let h = CovarianceHypothesis::new(0.9, 1.0, 0.6).unwrap();
        let a = chebyshev_block_bound(&h, 5, 1000);
        let b = chebyshev_block_bound(&h, 5, 2000);
        assert!(close(a / b, 2f64.powf(1.2), 1e-12));
    }

    #[test]
    fn chebyshev_matches_direct_evaluation() {
        for &(gamma, beta) in &[(0.4, 0.85), (1.0, 0.6), (3.0, 0.9)] {
            let h = CovarianceHypothesis::new(gamma, 1.7, beta).unwrap();
            for k in 0..30 {
                for i in [1u64, 2, 7, 100] {
                    let x = 2f64.powi(k as i32);
                    let direct = 1.7
                        * (i as f64).powf(-2.0 * beta)
                        * 2f64.powf((1.0 - 2.0 * beta) * k as f64)
                        * (1.0 + 2.0 * p_gamma(gamma, x).unwrap());
                    assert!(close(chebyshev_block_bound(&h, k, i), direct, 1e-12));
                }
            }
        }
    }

    #[test]
    fn chebyshev_stays_finite_deep_in_the_tree() {
        let h = CovarianceHypothesis::new(0.05, 1.0, 0.99).unwrap();
        let v = chebyshev_block_bound(&h, 2000, 1);
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn series_partial_matches_double_sum() {
        for gamma in [0.5, 1.0, 2.0] {
            let h = CovarianceHypothesis::new(gamma, 1.0, 0.8).unwrap();
            let series = badness_series_partial(&h, 12, 300).unwrap();
            let direct: f64 = (0..=12)
                .flat_map(|k| (1..=300).map(move |i| (k, i)))
                .map(|(k, i)| chebyshev_block_bound(&h, k, i))
                .sum();
            assert!(close(series.partial_sum, direct, 1e-12));
        }
    }

    #[test]
    fn series_is_linear_in_kappa() {
        let h1 = CovarianceHypothesis::new(2.0, 1.0, 0.75).unwrap();
        let h2 = h1.with_kappa(2.0).unwrap();
        let a = badness_series_partial(&h1, 20, 1000).unwrap();
        let b = badness_series_partial(&h2, 20, 1000).unwrap();
        assert_eq!(b.partial_sum, 2.0 * a.partial_sum);
        assert_eq!(b.tail_bound, 2.0 * a.tail_bound);
    }

    #[test]
    fn series_tail_bound_dominates_later_increments() {
        for gamma in [0.5, 1.0, 2.0] {
            let h = CovarianceHypothesis::new(gamma, 1.0, 0.8).unwrap();
            let small = badness_series_partial(&h, 20, 1_000).unwrap();
            let large = badness_series_partial(&h, 60, 1_000_000).unwrap();
            let increment = large.partial_sum - small.partial_sum;
            assert!(increment > 0.0);
            assert!(increment <= small.tail_bound);
            assert!(large.tail_bound < small.tail_bound);
        }
    }

    #[test]
    fn level_tail_matches_brute_force() {
        for &(gamma, beta) in &[(0.5, 0.8), (1.0, 0.75), (2.0, 0.75), (0.2, 0.95)] {
            let k_max = 10;
            let exact = level_tail(gamma, beta, k_max);
            let brute: f64 = (k_max + 1..4000)
                .rev()
                .map(|k| level_factor(gamma, beta, k))
                .sum();
            assert!(close(exact, brute, 1e-9), "{gamma} {beta}: {exact} vs {brute}");
        }
    }

    #[test]
    fn boundary_is_flagged() {
        let s = badness_series_raw(0.5, 1.0, 0.75, 60, 1000).unwrap();
        assert_eq!(s.summability, Summability::DivergentInLevel);
        assert!(s.tail_bound.is_infinite());
        // exponent cancellation: every level contributes at least 2/(1-gamma) = 4
        assert!(s.partial_sum > 61.0 * 4.0);

        let s = badness_series_raw(2.0, 1.0, 0.5, 10, 10).unwrap();
        assert_eq!(s.summability, Summability::DivergentInIndex);
        assert_eq!(summability(0.5, 0.7501), Summability::Summable);
    }

    #[test]
    fn horizon_series_matches_block_enumeration() {
        let h = CovarianceHypothesis::new(0.7, 1.3, 0.9).unwrap();
        let depth = 9;
        let direct: f64 = (0..=depth)
            .flat_map(|k| (1..=(1u64 << (depth - k))).map(move |i| (k, i)))
            .map(|(k, i)| chebyshev_block_bound(&h, k, i))
            .sum();
        assert!(close(badness_series_over_horizon(&h, depth), direct, 1e-12));
    }
}
