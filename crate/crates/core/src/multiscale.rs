//! Dyadic blocks over `{1, 2, ...}` and the partial-sum analysis built on them.
//!
//! A block `B_{k,i}` is the integer interval `[(i-1) 2^k + 1, i 2^k]`. A
//! sample path of length `2^L` induces block sums on every node of the
//! truncated binary tree; a block is *bad* when `|S_{k,i}| >= 2^{beta k} i^beta`.
//! The greedy partition of `{1..N}` into blocks, one per set bit of `N`,
//! turns per-block control into control of the prefix sum `S_N`.

use std::io::Write;
use std::ops::RangeInclusive;

use serde::Serialize;
use thiserror::Error;

use crate::bounds::CovarianceHypothesis;
use crate::genseq::SamplePath;

#[derive(Debug, Error)]
pub enum MultiscaleError {
    #[error("block index must be at least 1")]
    ZeroIndex,
    #[error("block ({level}, {index}) does not fit in 64 bits")]
    BlockOverflow { level: u32, index: u64 },
    #[error("path length {0} is not a nonzero power of two")]
    NotPowerOfTwo(usize),
    #[error("prefix length must be at least 1")]
    EmptyPrefix,
    #[error("prefix length {n} exceeds horizon {horizon}")]
    BeyondHorizon { n: u64, horizon: u64 },
    #[error("geometry check needs at least one bad block")]
    EmptyCensus,
    #[error("N = {n} is below 4 N_F - 1 with N_F = {n_f}")]
    PreconditionViolated { n: u64, n_f: u64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Node `(k, i)` of the dyadic tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DyadicBlock {
    level: u32,
    index: u64,
}

impl DyadicBlock {
    pub fn new(level: u32, index: u64) -> Result<Self, MultiscaleError> {
        if index == 0 {
            return Err(MultiscaleError::ZeroIndex);
        }
        if level >= 64 || index.checked_mul(1u64 << level).is_none() {
            return Err(MultiscaleError::BlockOverflow { level, index });
        }
        Ok(Self { level, index })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn first(&self) -> u64 {
        ((self.index - 1) << self.level) + 1
    }

    pub fn last(&self) -> u64 {
        self.index << self.level
    }

    pub fn len(&self) -> u64 {
        1 << self.level
    }

    pub fn range(&self) -> RangeInclusive<u64> {
        self.first()..=self.last()
    }

    pub fn children(&self) -> Option<[DyadicBlock; 2]> {
        (self.level > 0).then(|| {
            [
                DyadicBlock {
                    level: self.level - 1,
                    index: 2 * self.index - 1,
                },
                DyadicBlock {
                    level: self.level - 1,
                    index: 2 * self.index,
                },
            ]
        })
    }

    pub fn is_subset_of(&self, other: &DyadicBlock) -> bool {
        other.first() <= self.first() && self.last() <= other.last()
    }

    pub fn is_strict_subset_of(&self, other: &DyadicBlock) -> bool {
        self.is_subset_of(other) && self != other
    }

    /// The badness threshold `2^{beta k} i^beta`.
    pub fn threshold(&self, beta: f64) -> f64 {
        bad_threshold(beta, self.level, self.index)
    }
}

pub fn block_range(b: &DyadicBlock) -> RangeInclusive<u64> {
    b.range()
}

pub fn bad_threshold(beta: f64, level: u32, index: u64) -> f64 {
    2f64.powf(beta * f64::from(level)) * (index as f64).powf(beta)
}

/// Block sums of one path over every node of the depth-`L` tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSumTree {
    /// `levels[k][i - 1] = S_{k,i}`.
    levels: Vec<Vec<f64>>,
}

impl BlockSumTree {
    /// Bottom-up pairwise aggregation of `values`, whose length must be `2^L`.
    pub fn from_values(values: &[f64]) -> Result<Self, MultiscaleError> {
        if !values.len().is_power_of_two() {
            return Err(MultiscaleError::NotPowerOfTwo(values.len()));
        }
        let mut levels = vec![values.to_vec()];
        while levels.last().unwrap().len() > 1 {
            let next = levels
                .last()
                .unwrap()
                .chunks_exact(2)
                .map(|pair| pair[0] + pair[1])
                .collect();
            levels.push(next);
        }
        Ok(Self { levels })
    }

    pub fn depth(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn horizon(&self) -> u64 {
        self.levels[0].len() as u64
    }

    pub fn values(&self) -> &[f64] {
        &self.levels[0]
    }

    /// `S_{k,i}` for `i = 1..=2^{L-k}`, stored at offset `i - 1`.
    pub fn level(&self, k: u32) -> &[f64] {
        &self.levels[k as usize]
    }

    pub fn contains(&self, b: &DyadicBlock) -> bool {
        b.level <= self.depth() && b.last() <= self.horizon()
    }

    pub fn sum(&self, b: &DyadicBlock) -> Option<f64> {
        self.contains(b)
            .then(|| self.levels[b.level as usize][(b.index - 1) as usize])
    }

    /// Every block inside the horizon, level by level.
    pub fn blocks(&self) -> impl Iterator<Item = DyadicBlock> + '_ {
        (0..=self.depth()).flat_map(move |k| {
            (1..=(self.horizon() >> k)).map(move |i| DyadicBlock { level: k, index: i })
        })
    }
}

pub fn build_block_sum_tree(path: &SamplePath) -> Result<BlockSumTree, MultiscaleError> {
    BlockSumTree::from_values(&path.values)
}

/// The bad blocks of one path within its horizon, and `N_F`.
///
/// `n_f` is horizon-truncated: only blocks with `i 2^k <= 2^L` are seen.
#[derive(Debug, Clone, PartialEq)]
pub struct BadBlockCensus {
    beta: f64,
    bad: Vec<DyadicBlock>,
    n_f: Option<u64>,
    /// `flags[k][i - 1]` is true for bad blocks.
    flags: Vec<Vec<bool>>,
}

impl BadBlockCensus {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Bad blocks ordered by level, then index.
    pub fn bad_blocks(&self) -> &[DyadicBlock] {
        &self.bad
    }

    pub fn n_f(&self) -> Option<u64> {
        self.n_f
    }

    pub fn is_empty(&self) -> bool {
        self.bad.is_empty()
    }

    /// `None` for blocks outside the classified horizon.
    pub fn is_bad(&self, b: &DyadicBlock) -> Option<bool> {
        self.flags
            .get(b.level as usize)
            .and_then(|row| row.get((b.index - 1) as usize))
            .copied()
    }

    /// Whether `N >= 4 N_F - 1`; vacuously true for an empty census.
    pub fn precondition_holds(&self, n: u64) -> bool {
        self.n_f.is_none_or(|f| n + 1 >= 4 * f)
    }

    /// Dump as CSV with header `k,i,block_sum,threshold,is_bad`: every block
    /// when `verbose`, bad blocks only otherwise.
    pub fn write_csv<W: Write>(
        &self,
        tree: &BlockSumTree,
        verbose: bool,
        out: W,
    ) -> Result<(), MultiscaleError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "i", "block_sum", "threshold", "is_bad"])?;
        let mut row = |b: DyadicBlock| -> Result<(), MultiscaleError> {
            let bad = self.is_bad(&b).unwrap_or(false);
            w.write_record([
                b.level.to_string(),
                b.index.to_string(),
                tree.sum(&b).unwrap_or(f64::NAN).to_string(),
                b.threshold(self.beta).to_string(),
                u8::from(bad).to_string(),
            ])?;
            Ok(())
        };
        if verbose {
            tree.blocks().try_for_each(&mut row)?;
        } else {
            self.bad.iter().copied().try_for_each(&mut row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Mark every block with `|S_{k,i}| >= 2^{beta k} i^beta` as bad.
pub fn classify_blocks(tree: &BlockSumTree, h: &CovarianceHypothesis) -> BadBlockCensus {
    let beta = h.beta();
    let mut bad = Vec::new();
    let mut n_f: Option<u64> = None;
    let flags = (0..=tree.depth())
        .map(|k| {
            tree.level(k)
                .iter()
                .enumerate()
                .map(|(offset, s)| {
                    let b = DyadicBlock {
                        level: k,
                        index: offset as u64 + 1,
                    };
                    let is_bad = s.abs() >= b.threshold(beta);
                    if is_bad {
                        n_f = Some(n_f.map_or(b.last(), |f| f.max(b.last())));
                        bad.push(b);
                    }
                    is_bad
                })
                .collect()
        })
        .collect();
    BadBlockCensus { beta, bad, n_f, flags }
}

/// Decomposition of `{1..N}` into maximal dyadic blocks, largest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GreedyPartition {
    n: u64,
    blocks: Vec<DyadicBlock>,
}

impl GreedyPartition {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn blocks(&self) -> &[DyadicBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `log N / log 2 + 1`, an upper bound on the number of blocks.
    pub fn len_bound(&self) -> f64 {
        (self.n as f64).log2() + 1.0
    }

    /// Whether the scanned indices agree with `i_s = 2^{k_1-k_s} + ... + 2^{k_{s-1}-k_s} + 1`.
    pub fn closed_form_matches(&self) -> bool {
        let levels: Vec<u32> = self.blocks.iter().map(|b| b.level).collect();
        closed_form_indices(&levels)
            .iter()
            .zip(&self.blocks)
            .all(|(&i, b)| i == b.index)
    }
}

/// `i_1 = 1`, `i_s = sum_{t < s} 2^{k_t - k_s} + 1`.
pub fn closed_form_indices(levels: &[u32]) -> Vec<u64> {
    (0..levels.len())
        .map(|s| {
            levels[..s]
                .iter()
                .map(|&kt| 1u64 << (kt - levels[s]))
                .sum::<u64>()
                + 1
        })
        .collect()
}

/// Scan the set bits of `N` from the top, laying blocks left to right.
pub fn greedy_partition(n: u64) -> Result<GreedyPartition, MultiscaleError> {
    if n == 0 {
        return Err(MultiscaleError::EmptyPrefix);
    }
    let mut blocks = Vec::with_capacity(n.count_ones() as usize);
    let mut covered = 0u64;
    for k in (0..64u32).rev().filter(|&k| n >> k & 1 == 1) {
        blocks.push(DyadicBlock {
            level: k,
            index: (covered >> k) + 1,
        });
        covered += 1 << k;
    }
    Ok(GreedyPartition { n, blocks })
}

fn check_prefix(tree: &BlockSumTree, n: u64) -> Result<(), MultiscaleError> {
    if n == 0 {
        return Err(MultiscaleError::EmptyPrefix);
    }
    if n > tree.horizon() {
        return Err(MultiscaleError::BeyondHorizon {
            n,
            horizon: tree.horizon(),
        });
    }
    Ok(())
}

/// `S_N` as the sum of the greedy blocks' sums.
pub fn prefix_sum_via_partition(tree: &BlockSumTree, n: u64) -> Result<f64, MultiscaleError> {
    check_prefix(tree, n)?;
    let partition = greedy_partition(n)?;
    Ok(partition
        .blocks()
        .iter()
        .map(|b| tree.sum(b).expect("greedy blocks of N <= horizon lie in the tree"))
        .sum())
}

/// `(log N / log 2 + 1) N^beta`.
pub fn rate_envelope(n: u64, beta: f64) -> f64 {
    let n = n as f64;
    (n.log2() + 1.0) * n.powf(beta)
}

/// The chain `|S_N| <= sum |S_s| <= sum thr_s = sum (2^{k_1}+...+2^{k_s})^beta <= l N^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundChain {
    pub abs_prefix_sum: f64,
    pub sum_abs_block_sums: f64,
    pub sum_thresholds: f64,
    pub sum_prefix_powers: f64,
    pub len_times_n_beta: f64,
}

impl BoundChain {
    /// The two inequalities that need no goodness assumption, plus the
    /// identity between thresholds and prefix powers (to 1e-9 relative).
    pub fn structural_steps_hold(&self) -> bool {
        let identity = (self.sum_thresholds - self.sum_prefix_powers).abs()
            <= 1e-9 * self.sum_prefix_powers;
        self.abs_prefix_sum <= self.sum_abs_block_sums
            && identity
            && self.sum_prefix_powers <= self.len_times_n_beta
    }

    pub fn holds(&self) -> bool {
        self.structural_steps_hold() && self.sum_abs_block_sums <= self.sum_thresholds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCheck {
    pub n: u64,
    /// (a) `N >= 4 N_F - 1`, vacuous for an empty census.
    pub precondition: bool,
    /// (b) every greedy block of `N` is good.
    pub all_greedy_good: bool,
    /// (c) `|S_N| <= (log N / log 2 + 1) N^beta`.
    pub within_envelope: bool,
    pub prefix_sum: f64,
    pub envelope: f64,
    pub chain: BoundChain,
}

impl RateCheck {
    /// (a) implies (b), and (b) implies (c) together with the full chain.
    pub fn implications_hold(&self) -> bool {
        let a_to_b = !self.precondition || self.all_greedy_good;
        let b_to_c = !self.all_greedy_good || (self.within_envelope && self.chain.holds());
        a_to_b && b_to_c && self.chain.structural_steps_hold()
    }
}

pub fn deterministic_rate_check(
    tree: &BlockSumTree,
    census: &BadBlockCensus,
    h: &CovarianceHypothesis,
    n: u64,
) -> Result<RateCheck, MultiscaleError> {
    check_prefix(tree, n)?;
    let beta = h.beta();
    let partition = greedy_partition(n)?;
    let mut prefix_sum = 0.0;
    let mut sum_abs = 0.0;
    let mut sum_thresholds = 0.0;
    let mut sum_prefix_powers = 0.0;
    let mut covered = 0u64;
    let mut all_good = true;
    for b in partition.blocks() {
        let s = tree.sum(b).expect("greedy blocks lie in the tree");
        prefix_sum += s;
        sum_abs += s.abs();
        sum_thresholds += b.threshold(beta);
        covered += b.len();
        sum_prefix_powers += (covered as f64).powf(beta);
        all_good &= !census.is_bad(b).expect("classified horizon");
    }
    let envelope = rate_envelope(n, beta);
    Ok(RateCheck {
        n,
        precondition: census.precondition_holds(n),
        all_greedy_good: all_good,
        within_envelope: prefix_sum.abs() <= envelope,
        prefix_sum,
        envelope,
        chain: BoundChain {
            abs_prefix_sum: prefix_sum.abs(),
            sum_abs_block_sums: sum_abs,
            sum_thresholds,
            sum_prefix_powers,
            len_times_n_beta: partition.len() as f64 * (n as f64).powf(beta),
        },
    })
}

/// The rate lemma checked on every prefix `1 <= N <= horizon` of one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixScan {
    /// Prefixes with `N >= 4 N_F - 1`.
    pub qualifying: u64,
    /// Prefixes where (a) held but (b) or (c) did not, or (b) held but (c) did not.
    pub failures: Vec<u64>,
    /// Largest `|S_N| / envelope(N)` over qualifying `N`; `None` if none qualify.
    pub max_envelope_ratio: Option<f64>,
}

/// Lean version of [`deterministic_rate_check`] run over all prefixes.
pub fn scan_prefixes(tree: &BlockSumTree, census: &BadBlockCensus, h: &CovarianceHypothesis) -> PrefixScan {
    let beta = h.beta();
    let mut qualifying = 0;
    let mut failures = Vec::new();
    let mut max_ratio: Option<f64> = None;
    for n in 1..=tree.horizon() {
        let mut sum = 0.0;
        let mut good = true;
        let mut covered = 0u64;
        for k in (0..=tree.depth()).rev().filter(|&k| n >> k & 1 == 1) {
            let offset = (covered >> k) as usize;
            sum += tree.levels[k as usize][offset];
            good &= !census.flags[k as usize][offset];
            covered += 1 << k;
        }
        let envelope = rate_envelope(n, beta);
        let within = sum.abs() <= envelope;
        let pre = census.precondition_holds(n);
        if (pre && !good) || (good && !within) {
            failures.push(n);
        }
        if pre {
            qualifying += 1;
            let ratio = sum.abs() / envelope;
            max_ratio = Some(max_ratio.map_or(ratio, |m| m.max(ratio)));
        }
    }
    PrefixScan {
        qualifying,
        failures,
        max_envelope_ratio: max_ratio,
    }
}

/// Intermediate claims of the argument that every bad block sits strictly
/// inside the first greedy block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GeometryCheck {
    pub n: u64,
    pub n_f: u64,
    /// `k_1 = floor(log2 N)`.
    pub k1: u32,
    /// Smallest `r` with `2^r >= N_F`.
    pub r: u32,
    /// `4 N_F <= N + 1 <= 2^{k_1 + 1}`.
    pub four_nf_bounded: bool,
    /// `N_F <= 2^{k_1 - 1}`.
    pub nf_at_most_half: bool,
    pub r_plus_one_le_k1: bool,
    /// Every bad block is a subset of `B_{r,1}`.
    pub bad_within_root_r: bool,
    /// Every bad block is a strict subset of `B_{k_1,1}`.
    pub bad_strictly_inside_first: bool,
}

impl GeometryCheck {
    pub fn holds(&self) -> bool {
        self.four_nf_bounded
            && self.nf_at_most_half
            && self.r_plus_one_le_k1
            && self.bad_within_root_r
            && self.bad_strictly_inside_first
    }
}

pub fn strict_subset_geometry_check(
    census: &BadBlockCensus,
    n: u64,
) -> Result<GeometryCheck, MultiscaleError> {
    let n_f = census.n_f().ok_or(MultiscaleError::EmptyCensus)?;
    if !census.precondition_holds(n) {
        return Err(MultiscaleError::PreconditionViolated { n, n_f });
    }
    let k1 = 63 - n.leading_zeros();
    let r = n_f.next_power_of_two().trailing_zeros();
    let first = DyadicBlock { level: k1, index: 1 };
    let root_r = DyadicBlock { level: r, index: 1 };
    Ok(GeometryCheck {
        n,
        n_f,
        k1,
        r,
        four_nf_bounded: 4 * n_f <= n + 1 && n < 1u64 << (k1 + 1),
        nf_at_most_half: k1 >= 1 && n_f <= 1u64 << (k1 - 1),
        r_plus_one_le_k1: r < k1,
        bad_within_root_r: census.bad_blocks().iter().all(|b| b.is_subset_of(&root_r)),
        bad_strictly_inside_first: census
            .bad_blocks()
            .iter()
            .all(|b| b.is_strict_subset_of(&first)),
    })
}
