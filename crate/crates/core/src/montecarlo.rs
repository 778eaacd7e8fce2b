//! Monte Carlo experiments over many independent paths.
//!
//! Paths are simulated and analyzed in parallel; every per-path record is
//! collected in path-index order before any aggregation, so results do not
//! depend on the number of worker threads.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{badness_series_over_horizon, chebyshev_block_bound, CovarianceHypothesis};
use crate::genseq::{fit_kappa, GenError, GeneratorSpec, PathGenerator};
use crate::multiscale::{classify_blocks, scan_prefixes, strict_subset_geometry_check, BlockSumTree, DyadicBlock};

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error("hypothesis not certified: generator needs K >= {fitted}, hypothesis has K = {kappa}")]
    NotCertified { fitted: f64, kappa: f64 },
    #[error("num_paths must be positive")]
    NoPaths,
    #[error("checkpoints must be strictly increasing, positive and at most the horizon {horizon}")]
    BadCheckpoints { horizon: usize },
    #[error("block ({level}, {index}) lies outside the horizon {horizon}")]
    BlockOutsideHorizon { level: u32, index: u64, horizon: usize },
    #[error("envelope check needs at least 3 checkpoints spanning a factor of 64, got {count} spanning {span}")]
    InsufficientCheckpoints { count: usize, span: f64 },
    #[error("could not build a thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A validated experiment: the generator is certified against the hypothesis.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    generator: GeneratorSpec,
    hypothesis: CovarianceHypothesis,
    num_paths: usize,
    checkpoints: Vec<u64>,
    blocks_under_test: Vec<DyadicBlock>,
    fitted_kappa: f64,
}

/// Powers of two from 16 (or 1 for tiny horizons) up to the horizon.
pub fn default_checkpoints(horizon: usize) -> Vec<u64> {
    let depth = horizon.trailing_zeros();
    let start = if depth >= 4 { 4 } else { 0 };
    (start..=depth).map(|k| 1u64 << k).collect()
}

/// The spine `(k, 1)` for every level, then the row `(3, i)` for `i <= 64`.
pub fn default_blocks(horizon: usize) -> Vec<DyadicBlock> {
    let depth = horizon.trailing_zeros();
    let mut blocks: Vec<DyadicBlock> = (0..=depth)
        .map(|k| DyadicBlock::new(k, 1).expect("valid spine block"))
        .collect();
    if depth >= 3 {
        let row_len = (horizon as u64 >> 3).min(64);
        blocks.extend((2..=row_len).map(|i| DyadicBlock::new(3, i).expect("valid row block")));
    }
    blocks
}

impl ExperimentConfig {
    pub fn new(
        generator: GeneratorSpec,
        hypothesis: CovarianceHypothesis,
        num_paths: usize,
        checkpoints: Vec<u64>,
        blocks_under_test: Vec<DyadicBlock>,
    ) -> Result<Self, McError> {
        let horizon = generator.horizon();
        if num_paths == 0 {
            return Err(McError::NoPaths);
        }
        let increasing = checkpoints.windows(2).all(|w| w[0] < w[1]);
        let in_range = checkpoints.iter().all(|&n| n >= 1 && n <= horizon as u64);
        if !increasing || !in_range {
            return Err(McError::BadCheckpoints { horizon });
        }
        if let Some(b) = blocks_under_test.iter().find(|b| b.last() > horizon as u64) {
            return Err(McError::BlockOutsideHorizon {
                level: b.level(),
                index: b.index(),
                horizon,
            });
        }
        let max_lag = (horizon - 1).max(1);
        let profile = fit_kappa(&generator, hypothesis.gamma(), max_lag)?;
        if profile.fitted_kappa > hypothesis.kappa() {
            return Err(McError::NotCertified {
                fitted: profile.fitted_kappa,
                kappa: hypothesis.kappa(),
            });
        }
        Ok(Self {
            generator,
            hypothesis,
            num_paths,
            checkpoints,
            blocks_under_test,
            fitted_kappa: profile.fitted_kappa,
        })
    }

    /// Default checkpoints and blocks for the generator's horizon.
    pub fn with_defaults(
        generator: GeneratorSpec,
        hypothesis: CovarianceHypothesis,
        num_paths: usize,
    ) -> Result<Self, McError> {
        let horizon = generator.horizon();
        Self::new(
            generator,
            hypothesis,
            num_paths,
            default_checkpoints(horizon),
            default_blocks(horizon),
        )
    }

    pub fn generator(&self) -> &GeneratorSpec {
        &self.generator
    }

    pub fn hypothesis(&self) -> &CovarianceHypothesis {
        &self.hypothesis
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }

    pub fn blocks_under_test(&self) -> &[DyadicBlock] {
        &self.blocks_under_test
    }

    pub fn fitted_kappa(&self) -> f64 {
        self.fitted_kappa
    }
}

/// Everything retained from one analyzed path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub path_index: u64,
    pub num_bad: usize,
    pub n_f: Option<u64>,
    /// Badness of each block under test.
    pub bad_flags: Vec<bool>,
    /// `S_{k,i}` for each block under test.
    pub block_sums: Vec<f64>,
    /// `|A_N|` at each checkpoint.
    pub abs_average: Vec<f64>,
    /// `sup_{N <= n <= horizon} |A_n|` at each checkpoint.
    pub running_sup: Vec<f64>,
    pub qualifying_prefixes: u64,
    pub lemma_failures: usize,
    pub max_envelope_ratio: Option<f64>,
    /// `None` when the census is empty or no prefix qualifies.
    pub geometry_ok: Option<bool>,
}

fn analyze_path(values: &[f64], path_index: u64, cfg: &ExperimentConfig) -> PathRecord {
    let h = &cfg.hypothesis;
    let tree = BlockSumTree::from_values(values).expect("horizon is a power of two");
    let census = classify_blocks(&tree, h);
    let scan = scan_prefixes(&tree, &census, h);

    let horizon = values.len() as u64;
    let mut abs_avg = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (n, x) in values.iter().enumerate() {
        sum += x;
        abs_avg.push((sum / (n + 1) as f64).abs());
    }
    let mut suffix_sup = abs_avg.clone();
    for n in (0..suffix_sup.len().saturating_sub(1)).rev() {
        suffix_sup[n] = suffix_sup[n].max(suffix_sup[n + 1]);
    }

    // The claims depend on N only through k_1 = floor(log2 N), so one probe
    // per level covers every qualifying prefix.
    let geometry_ok = census.n_f().and_then(|n_f| {
        let start = (4 * n_f).saturating_sub(1).max(1);
        if start > horizon {
            return None;
        }
        let mut probes: Vec<u64> = std::iter::once(start)
            .chain((0..=tree.depth()).map(|k| 1u64 << k).filter(|&n| n >= start))
            .chain(std::iter::once(horizon))
            .collect();
        probes.dedup();
        Some(probes.iter().all(|&n| {
            strict_subset_geometry_check(&census, n)
                .map(|g| g.holds())
                .unwrap_or(false)
        }))
    });

    PathRecord {
        path_index,
        num_bad: census.bad_blocks().len(),
        n_f: census.n_f(),
        bad_flags: cfg
            .blocks_under_test
            .iter()
            .map(|b| census.is_bad(b).expect("block inside horizon"))
            .collect(),
        block_sums: cfg
            .blocks_under_test
            .iter()
            .map(|b| tree.sum(b).expect("block inside horizon"))
            .collect(),
        abs_average: cfg.checkpoints.iter().map(|&n| abs_avg[n as usize - 1]).collect(),
        running_sup: cfg.checkpoints.iter().map(|&n| suffix_sup[n as usize - 1]).collect(),
        qualifying_prefixes: scan.qualifying,
        lemma_failures: scan.failures.len(),
        max_envelope_ratio: scan.max_envelope_ratio,
        geometry_ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStat {
    pub block: DyadicBlock,
    pub threshold: f64,
    pub emp_freq: f64,
    /// `sqrt(f (1 - f) / num_paths)`.
    pub std_err: f64,
    pub cheb_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointStat {
    pub n: u64,
    pub q50_abs_a: f64,
    pub q90_abs_a: f64,
    pub q99_abs_a: f64,
    pub q50_sup: f64,
    /// `(log N / log 2 + 1) N^beta / N`, the envelope on `|A_N|`.
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusStats {
    pub empty_fraction: f64,
    /// `(n_f, count)` pairs sorted by `n_f`, with empty censuses under `None` first.
    pub n_f_histogram: Vec<(Option<u64>, usize)>,
    pub mean_num_bad: f64,
    pub std_err_num_bad: f64,
}

/// Least-squares line through `(ln N, ln median running sup)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub num_paths: usize,
    pub blocks: Vec<BlockStat>,
    pub checkpoints: Vec<CheckpointStat>,
    pub census: CensusStats,
    pub rate_fit: Option<RateFit>,
    pub paths: Vec<PathRecord>,
}

impl McResult {
    /// Largest envelope ratio over all paths with a qualifying prefix.
    pub fn envelope_ratio_max(&self) -> Option<f64> {
        self.paths
            .iter()
            .filter_map(|p| p.max_envelope_ratio)
            .reduce(f64::max)
    }

    pub fn lemma_failures(&self) -> usize {
        self.paths.iter().map(|p| p.lemma_failures).sum()
    }

    pub fn geometry_failures(&self) -> usize {
        self.paths.iter().filter(|p| p.geometry_ok == Some(false)).count()
    }

    /// Blocks whose empirical frequency exceeds the Chebyshev bound by more
    /// than `z` standard errors.
    pub fn chebyshev_exceedances(&self, z: f64) -> Vec<&BlockStat> {
        self.blocks
            .iter()
            .filter(|b| b.emp_freq > b.cheb_bound + z * b.std_err)
            .collect()
    }
}

/// Nearest-rank quantile of sorted data.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<RateFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(RateFit {
        slope,
        intercept: my - slope * mx,
    })
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, McError> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| McError::ThreadPool(e.to_string())),
        None => Ok(f()),
    }
}

/// Simulate and analyze every path; `threads` caps the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<McResult, McError> {
    let generator = PathGenerator::new(cfg.generator)?;
    let paths: Vec<PathRecord> = with_pool(threads, || {
        (0..cfg.num_paths as u64)
            .into_par_iter()
            .map(|idx| analyze_path(&generator.generate(idx).values, idx, cfg))
            .collect()
    })?;
    Ok(aggregate(cfg, paths))
}

fn aggregate(cfg: &ExperimentConfig, paths: Vec<PathRecord>) -> McResult {
    let h = &cfg.hypothesis;
    let m = paths.len() as f64;

    let blocks = cfg
        .blocks_under_test
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let hits = paths.iter().filter(|p| p.bad_flags[j]).count();
            let f = hits as f64 / m;
            BlockStat {
                block: *b,
                threshold: b.threshold(h.beta()),
                emp_freq: f,
                std_err: (f * (1.0 - f) / m).sqrt(),
                cheb_bound: chebyshev_block_bound(h, b.level(), b.index()),
            }
        })
        .collect();

    let checkpoints: Vec<CheckpointStat> = cfg
        .checkpoints
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let mut abs_a: Vec<f64> = paths.iter().map(|p| p.abs_average[j]).collect();
            let mut sup: Vec<f64> = paths.iter().map(|p| p.running_sup[j]).collect();
            abs_a.sort_by(f64::total_cmp);
            sup.sort_by(f64::total_cmp);
            CheckpointStat {
                n,
                q50_abs_a: nearest_rank(&abs_a, 0.5),
                q90_abs_a: nearest_rank(&abs_a, 0.9),
                q99_abs_a: nearest_rank(&abs_a, 0.99),
                q50_sup: nearest_rank(&sup, 0.5),
                envelope: crate::multiscale::rate_envelope(n, h.beta()) / n as f64,
            }
        })
        .collect();

    let rate_fit = if checkpoints.iter().all(|c| c.q50_sup > 0.0) {
        let xs: Vec<f64> = checkpoints.iter().map(|c| (c.n as f64).ln()).collect();
        let ys: Vec<f64> = checkpoints.iter().map(|c| c.q50_sup.ln()).collect();
        least_squares(&xs, &ys)
    } else {
        None
    };

    let mut hist: Vec<(Option<u64>, usize)> = Vec::new();
    let mut sorted_nf: Vec<Option<u64>> = paths.iter().map(|p| p.n_f).collect();
    sorted_nf.sort();
    for nf in sorted_nf {
        match hist.last_mut() {
            Some((v, c)) if *v == nf => *c += 1,
            _ => hist.push((nf, 1)),
        }
    }
    let empty = paths.iter().filter(|p| p.n_f.is_none()).count();
    let mean_bad = paths.iter().map(|p| p.num_bad as f64).sum::<f64>() / m;
    let var_bad = if paths.len() > 1 {
        paths
            .iter()
            .map(|p| (p.num_bad as f64 - mean_bad).powi(2))
            .sum::<f64>()
            / (m - 1.0)
    } else {
        0.0
    };

    McResult {
        num_paths: paths.len(),
        blocks,
        checkpoints,
        census: CensusStats {
            empty_fraction: empty as f64 / m,
            n_f_histogram: hist,
            mean_num_bad: mean_bad,
            std_err_num_bad: (var_bad / m).sqrt(),
        },
        rate_fit,
        paths,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    /// Largest `|S_N| / ((log N / log 2 + 1) N^beta)` over qualifying `N`,
    /// over all paths.
    pub max_ratio: Option<f64>,
    pub ratio_ok: bool,
    pub paths_with_qualifying_prefix: usize,
    pub slope: Option<f64>,
    /// `-(1 - beta) + 0.1`.
    pub slope_limit: f64,
    pub slope_ok: bool,
}

pub const SLOPE_TOLERANCE: f64 = 0.1;

pub fn envelope_check(result: &McResult, h: &CovarianceHypothesis) -> Result<EnvelopeReport, McError> {
    let count = result.checkpoints.len();
    let span = match (result.checkpoints.first(), result.checkpoints.last()) {
        (Some(a), Some(b)) => b.n as f64 / a.n as f64,
        _ => 0.0,
    };
    if count < 3 || span < 64.0 {
        return Err(McError::InsufficientCheckpoints { count, span });
    }
    let max_ratio = result.envelope_ratio_max();
    let slope = result.rate_fit.map(|f| f.slope);
    let slope_limit = -(1.0 - h.beta()) + SLOPE_TOLERANCE;
    Ok(EnvelopeReport {
        max_ratio,
        ratio_ok: max_ratio.is_none_or(|r| r <= 1.0),
        paths_with_qualifying_prefix: result
            .paths
            .iter()
            .filter(|p| p.max_envelope_ratio.is_some())
            .count(),
        slope,
        slope_limit,
        slope_ok: slope.is_some_and(|s| s <= slope_limit),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusSummary {
    pub stats: CensusStats,
    /// Mean number of bad blocks per path, the sum of all per-block frequencies.
    pub total_bad_frequency: f64,
    /// Chebyshev bound summed over every block in the horizon.
    pub series_bound: f64,
    /// `series_bound + 4 * std_err_num_bad`.
    pub allowed: f64,
    pub within_series_bound: bool,
}

pub fn summarize_census(result: &McResult, cfg: &ExperimentConfig) -> CensusSummary {
    let series_bound = badness_series_over_horizon(&cfg.hypothesis, cfg.generator.depth());
    let allowed = series_bound + 4.0 * result.census.std_err_num_bad;
    CensusSummary {
        stats: result.census.clone(),
        total_bad_frequency: result.census.mean_num_bad,
        series_bound,
        allowed,
        within_series_bound: result.census.mean_num_bad <= allowed,
    }
}

pub fn census_summary(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<CensusSummary, McError> {
    let result = run_experiment(cfg, threads)?;
    Ok(summarize_census(&result, cfg))
}

pub fn write_blocks_csv<W: Write>(result: &McResult, out: W) -> Result<(), McError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "i", "threshold", "emp_freq", "std_err", "cheb_bound"])?;
    for b in &result.blocks {
        w.write_record([
            b.block.level().to_string(),
            b.block.index().to_string(),
            b.threshold.to_string(),
            b.emp_freq.to_string(),
            b.std_err.to_string(),
            b.cheb_bound.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_checkpoints_csv<W: Write>(result: &McResult, out: W) -> Result<(), McError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "q50_absA", "q90_absA", "q99_absA", "q50_sup", "envelope"])?;
    for c in &result.checkpoints {
        w.write_record([
            c.n.to_string(),
            c.q50_abs_a.to_string(),
            c.q90_abs_a.to_string(),
            c.q99_abs_a.to_string(),
            c.q50_sup.to_string(),
            c.envelope.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One line of `census.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CensusRow {
    pub path_index: u64,
    pub num_bad: usize,
    pub n_f: Option<u64>,
}

impl From<&PathRecord> for CensusRow {
    fn from(p: &PathRecord) -> Self {
        Self {
            path_index: p.path_index,
            num_bad: p.num_bad,
            n_f: p.n_f,
        }
    }
}

/// `n_f` is written as `empty` for paths without bad blocks.
pub fn write_census_csv<W: Write, I: IntoIterator<Item = CensusRow>>(rows: I, out: W) -> Result<(), McError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_index", "num_bad", "n_f"])?;
    for row in rows {
        w.write_record([
            row.path_index.to_string(),
            row.num_bad.to_string(),
            row.n_f.map_or_else(|| "empty".to_string(), |f| f.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryFlags {
    pub lemma_ok: bool,
    pub geometry_ok: bool,
    pub envelope_ratio_ok: bool,
    pub chebyshev_ok: bool,
    pub census_series_ok: bool,
    /// `None` when the slope check does not apply (e.g. too few checkpoints).
    pub slope_ok: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub generator: GeneratorSpec,
    pub hypothesis: CovarianceHypothesis,
    pub fitted_kappa: f64,
    pub num_paths: usize,
    pub envelope_ratio_max: Option<f64>,
    pub lemma_failures: usize,
    pub geometry_failures: usize,
    pub rate_fit: Option<RateFit>,
    pub slope_limit: f64,
    pub census: CensusSummary,
    /// The running sup is taken within the horizon and underestimates the
    /// infinite-horizon sup.
    pub running_sup_note: &'static str,
    pub passed: SummaryFlags,
}

impl Summary {
    pub fn all_passed(&self) -> bool {
        let p = &self.passed;
        p.lemma_ok
            && p.geometry_ok
            && p.envelope_ratio_ok
            && p.chebyshev_ok
            && p.census_series_ok
            && p.slope_ok != Some(false)
    }
}

pub fn summarize(result: &McResult, cfg: &ExperimentConfig) -> Summary {
    let h = &cfg.hypothesis;
    let envelope = envelope_check(result, h).ok();
    let census = summarize_census(result, cfg);
    let slope_limit = -(1.0 - h.beta()) + SLOPE_TOLERANCE;
    Summary {
        generator: cfg.generator,
        hypothesis: *h,
        fitted_kappa: cfg.fitted_kappa,
        num_paths: result.num_paths,
        envelope_ratio_max: result.envelope_ratio_max(),
        lemma_failures: result.lemma_failures(),
        geometry_failures: result.geometry_failures(),
        rate_fit: result.rate_fit,
        slope_limit,
        passed: SummaryFlags {
            lemma_ok: result.lemma_failures() == 0,
            geometry_ok: result.geometry_failures() == 0,
            envelope_ratio_ok: result.envelope_ratio_max().is_none_or(|r| r <= 1.0),
            chebyshev_ok: result.chebyshev_exceedances(4.0).is_empty(),
            census_series_ok: census.within_series_bound,
            slope_ok: envelope.map(|e| e.slope_ok),
        },
        census,
        running_sup_note: "sup over N <= n <= horizon (horizon-truncated, biased low)",
    }
}
