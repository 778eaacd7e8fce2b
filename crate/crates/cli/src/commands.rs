//! Subcommands of the `slln` binary.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use slln_core::bounds::CovarianceHypothesis;
use slln_core::genseq::{write_path_binary, GeneratorKind, GeneratorSpec, PathGenerator, DEFAULT_TRUNCATION};
use slln_core::montecarlo::{
    run_experiment, summarize, write_blocks_csv, write_census_csv, write_checkpoints_csv, CensusRow,
};
use slln_core::multiscale::{classify_blocks, greedy_partition, BlockSumTree};
use slln_core::oracle::{run_sweep, Lemma, SweepConfig};

use crate::config::{preset, RawConfig, RunConfig, PRESETS};
use crate::manifest::{looks_like_manifest, sha256_hex, RunManifest, MANIFEST_FILE};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "slln", version, about = "Dyadic block experiments on dependent Gaussian sequences")]
pub struct Cli {
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "slln-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the correlation-sum bounds against brute force on random sets.
    Verify {
        /// Comma-separated exponents.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        gamma: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Reverse the tested inequality; the run must then fail.
        #[arg(long)]
        self_test_fault: bool,
    },
    /// Print the greedy dyadic partition of {1..N}.
    Partition { n: u64 },
    /// Print the block-sum tree of a short path and mark its bad blocks.
    Blocktree {
        #[arg(long, default_value_t = 16)]
        horizon: usize,
        #[arg(long, default_value_t = 0.75)]
        beta: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        /// Explicit path values; otherwise an i.i.d. Gaussian path is drawn.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        values: Option<Vec<f64>>,
    },
    /// Generate paths, cache them and write their bad-block censuses.
    Simulate(RunArgs),
    /// Run a many-path experiment and write its reports.
    Montecarlo {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the path cache and per-path censuses.
        #[arg(long)]
        cache_paths: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file, or a manifest from an earlier run to replay.
    #[arg(required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Use a shipped preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
}

/// A failure to start the requested work, reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(message.into()))
}

/// Parse arguments, run, and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(true) => EXIT_SUCCESS,
        Ok(false) => EXIT_FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Verify {
            gamma,
            trials,
            self_test_fault,
        } => verify(gamma.as_deref(), *trials, *self_test_fault, cli.seed.unwrap_or(0)),
        Command::Partition { n } => partition(*n),
        Command::Blocktree {
            horizon,
            beta,
            gamma,
            values,
        } => blocktree(*horizon, *beta, *gamma, values.as_deref(), cli.seed.unwrap_or(0)),
        Command::Simulate(args) => {
            let (raw, run) = load(args, cli.seed)?;
            simulate(&raw, &run, &cli.out)
        }
        Command::Montecarlo { run: args, cache_paths } => {
            let (raw, run) = load(args, cli.seed)?;
            montecarlo(&raw, &run, &cli.out, cli.threads, *cache_paths)
        }
    }
}

fn verify(gammas: Option<&[f64]>, trials: usize, fault: bool, seed: u64) -> Result<bool> {
    if let Some(bad) = gammas.and_then(|g| g.iter().find(|&&g| !(g > 0.0 && g.is_finite()))) {
        return Err(usage(format!("gamma must be positive, got {bad}")));
    }
    let mut all_ok = true;
    for (lemma, mut cfg) in [
        (Lemma::SingleSum, SweepConfig::single_sum_default(seed)),
        (Lemma::DoubleSum, SweepConfig::double_sum_default(seed)),
    ] {
        if let Some(g) = gammas {
            cfg.gammas = g.to_vec();
        }
        cfg.trials = trials;
        cfg.inject_fault = fault;
        let report = run_sweep(lemma, &cfg).map_err(|e| usage(e.to_string()))?;
        let name = match lemma {
            Lemma::SingleSum => "single sum  <= p_gamma(|J|+1)",
            Lemma::DoubleSum => "double sum  <= |J|(1+2p_gamma(|J|))",
        };
        println!(
            "{name}: {} comparisons, min gap {:.6e}, {} violations{}",
            report.comparisons,
            report.min_gap,
            report.violations.len(),
            if fault { " (fault injected)" } else { "" }
        );
        for v in report.violations.iter().take(5) {
            println!(
                "  violation: gamma = {}, brute force = {}, bound = {}, J = {:?}",
                v.gamma, v.brute_force, v.bound, v.set
            );
        }
        all_ok &= report.passed();
    }
    println!("{}", if all_ok { "PASS" } else { "FAIL" });
    Ok(all_ok)
}

/// The partition table as printed by `slln partition`.
pub fn partition_table(n: u64) -> Result<String> {
    if n == 0 {
        return Err(usage("N must be at least 1"));
    }
    let p = greedy_partition(n).map_err(|e| usage(e.to_string()))?;
    let mut out = String::new();
    writeln!(out, "{:>3} {:>4} {:>12}  range", "s", "k_s", "i_s")?;
    for (s, b) in p.blocks().iter().enumerate() {
        let range = if b.first() == b.last() {
            format!("{{{}}}", b.first())
        } else {
            format!("{{{}..{}}}", b.first(), b.last())
        };
        writeln!(out, "{:>3} {:>4} {:>12}  {range}", s + 1, b.level(), b.index())?;
    }
    writeln!(out, "l = {} <= log2(N) + 1 = {:.6}", p.len(), p.len_bound())?;
    Ok(out)
}

fn partition(n: u64) -> Result<bool> {
    print!("{}", partition_table(n)?);
    Ok(true)
}

/// The block tree as printed by `slln blocktree`, top level first.
pub fn blocktree_table(values: &[f64], gamma: f64, beta: f64) -> Result<String> {
    let h = CovarianceHypothesis::new(gamma, 1.0, beta).map_err(|e| usage(e.to_string()))?;
    let tree = BlockSumTree::from_values(values).map_err(|e| usage(e.to_string()))?;
    let census = classify_blocks(&tree, &h);
    let mut out = String::new();
    writeln!(out, "horizon {}, beta {beta}; * marks |S_k,i| >= 2^(beta k) i^beta", tree.horizon())?;
    for k in (0..=tree.depth()).rev() {
        let cells: Vec<String> = tree
            .blocks()
            .filter(|b| b.level() == k)
            .map(|b| {
                let mark = if census.is_bad(&b) == Some(true) { "*" } else { " " };
                format!("{:>8.3}{mark}", tree.sum(&b).unwrap_or(f64::NAN))
            })
            .collect();
        writeln!(out, "k={k:<2} {}", cells.join(" "))?;
    }
    match census.n_f() {
        Some(n_f) => writeln!(out, "{} bad blocks, N_F = {n_f}", census.bad_blocks().len())?,
        None => writeln!(out, "no bad blocks")?,
    }
    Ok(out)
}

fn blocktree(horizon: usize, beta: f64, gamma: f64, values: Option<&[f64]>, seed: u64) -> Result<bool> {
    let values = match values {
        Some(v) => v.to_vec(),
        None => {
            if horizon > 64 {
                return Err(usage("blocktree is meant for horizons of at most 64"));
            }
            let spec = GeneratorSpec::new(GeneratorKind::IidGaussian, seed, horizon)
                .map_err(|e| usage(e.to_string()))?;
            PathGenerator::new(spec)?.generate(0).values
        }
    };
    print!("{}", blocktree_table(&values, gamma, beta)?);
    Ok(true)
}

/// Read a config from a file, a manifest or a preset and apply the seed override.
pub fn load(args: &RunArgs, seed: Option<u64>) -> Result<(RawConfig, RunConfig)> {
    let mut raw = match (&args.config, &args.preset) {
        (_, Some(name)) => preset(name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            usage(format!("unknown preset `{name}` (available: {})", names.join(", ")))
        })?,
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            if looks_like_manifest(&text) {
                let manifest = RunManifest::parse(&text).map_err(|e| usage(format!("{e:#}")))?;
                RawConfig::from_map(&manifest.config).map_err(|e| usage(e.to_string()))?
            } else {
                RawConfig::parse(&text).map_err(|e| usage(e.to_string()))?
            }
        }
        (None, None) => return Err(usage("a config file or --preset is required")),
    };
    if let Some(seed) = seed {
        raw.set("seed", seed.to_string());
    }
    let run = raw.resolve().map_err(|e| usage(e.to_string()))?;
    Ok((raw, run))
}

/// The config content with the seed and generator defaults written out.
fn snapshot(raw: &RawConfig, run: &RunConfig) -> BTreeMap<String, String> {
    let mut raw = raw.clone();
    raw.set("seed", run.seed.to_string());
    if raw.get("generator.kind") == Some("linear") && raw.get("generator.truncation").is_none() {
        raw.set("generator.truncation", DEFAULT_TRUNCATION.to_string());
    }
    raw.to_map()
}

struct Outputs {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            digests: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.digests.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn finish(self, command: &str, raw: &RawConfig, run: &RunConfig, started: String) -> Result<()> {
        let manifest = RunManifest {
            command: command.to_string(),
            config: snapshot(raw, run),
            seed: run.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started,
            finished: chrono::Utc::now().to_rfc3339(),
            outputs: self.digests,
        };
        manifest.verify_outputs(&self.dir)?;
        let json = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(self.dir.join(MANIFEST_FILE), json)?;
        Ok(())
    }
}

/// Paths under `paths/`, per-path censuses under `census/`; returns the summary rows.
fn write_path_cache(outputs: &mut Outputs, run: &RunConfig) -> Result<Vec<CensusRow>> {
    let cfg = &run.experiment;
    let generator = PathGenerator::new(*cfg.generator())?;
    let mut rows = Vec::with_capacity(cfg.num_paths());
    for idx in 0..cfg.num_paths() as u64 {
        let path = generator.generate(idx);
        let mut bin = Vec::with_capacity(16 + 8 * path.values.len());
        write_path_binary(&mut bin, &path.values)?;
        outputs.write(&format!("paths/path_{idx:06}.bin"), &bin)?;

        let tree = BlockSumTree::from_values(&path.values)?;
        let census = classify_blocks(&tree, cfg.hypothesis());
        let mut csv = Vec::new();
        census.write_csv(&tree, run.verbose_census, &mut csv)?;
        outputs.write(&format!("census/path_{idx:06}.csv"), &csv)?;
        rows.push(CensusRow {
            path_index: idx,
            num_bad: census.bad_blocks().len(),
            n_f: census.n_f(),
        });
    }
    Ok(rows)
}

fn simulate(raw: &RawConfig, run: &RunConfig, out: &Path) -> Result<bool> {
    let started = chrono::Utc::now().to_rfc3339();
    let mut outputs = Outputs::new(out)?;
    let rows = write_path_cache(&mut outputs, run)?;
    let mut csv = Vec::new();
    write_census_csv(rows, &mut csv)?;
    outputs.write("census.csv", &csv)?;
    outputs.finish("simulate", raw, run, started)?;
    println!("wrote {} paths to {}", run.experiment.num_paths(), out.display());
    Ok(true)
}

fn montecarlo(raw: &RawConfig, run: &RunConfig, out: &Path, threads: Option<usize>, cache: bool) -> Result<bool> {
    let started = chrono::Utc::now().to_rfc3339();
    let cfg = &run.experiment;
    let result = run_experiment(cfg, threads)?;
    let summary = summarize(&result, cfg);

    let mut outputs = Outputs::new(out)?;
    let mut buf = Vec::new();
    write_blocks_csv(&result, &mut buf)?;
    outputs.write("blocks.csv", &buf)?;
    buf.clear();
    write_checkpoints_csv(&result, &mut buf)?;
    outputs.write("checkpoints.csv", &buf)?;
    buf.clear();
    write_census_csv(result.paths.iter().map(CensusRow::from), &mut buf)?;
    outputs.write("census.csv", &buf)?;
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    outputs.write("summary.json", json.as_bytes())?;
    if cache {
        write_path_cache(&mut outputs, run)?;
    }
    outputs.finish("montecarlo", raw, run, started)?;

    let p = &summary.passed;
    println!("paths                 {}", summary.num_paths);
    println!("fitted K              {}", summary.fitted_kappa);
    println!(
        "envelope ratio max    {}",
        summary.envelope_ratio_max.map_or("n/a".to_string(), |r| format!("{r:.4}"))
    );
    println!("lemma failures        {}", summary.lemma_failures);
    println!("geometry failures     {}", summary.geometry_failures);
    match summary.rate_fit {
        Some(fit) => println!("rate slope            {:.4} (limit {:.4})", fit.slope, summary.slope_limit),
        None => println!("rate slope            n/a"),
    }
    println!(
        "census mean bad       {:.4} (series bound {:.4})",
        summary.census.total_bad_frequency, summary.census.series_bound
    );
    println!(
        "checks                lemma {} geometry {} envelope {} chebyshev {} census {} slope {}",
        p.lemma_ok,
        p.geometry_ok,
        p.envelope_ratio_ok,
        p.chebyshev_ok,
        p.census_series_ok,
        p.slope_ok.map_or("n/a".to_string(), |s| s.to_string())
    );
    let passed = summary.all_passed();
    println!("{}", if passed { "PASS" } else { "FAIL" });
    Ok(passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_thirteen() {
        let t = partition_table(13).unwrap();
        let rows: Vec<&str> = t.lines().collect();
        assert_eq!(rows.len(), 5);
        assert!(rows[1].ends_with("{1..8}") && rows[1].contains(" 3 "));
        assert!(rows[2].ends_with("{9..12}"));
        assert!(rows[3].ends_with("{13}"));
        assert_eq!(rows[4], "l = 3 <= log2(N) + 1 = 4.700440");
    }

    #[test]
    fn partition_edge_cases() {
        assert_eq!(partition_table(16).unwrap().lines().count(), 3);
        let t = partition_table((1 << 20) - 1).unwrap();
        assert_eq!(t.lines().count(), 22);
        assert!(t.ends_with("l = 20 <= log2(N) + 1 = 20.999999\n"), "{t}");
        assert!(partition_table(0).is_err());
    }

    #[test]
    fn blocktree_of_a_spike() {
        let mut values = vec![0.0; 8];
        values[0] = 5.0;
        let t = blocktree_table(&values, 2.0, 0.75).unwrap();
        assert!(t.contains("k=3     5.000*"), "{t}");
        assert!(t.ends_with("4 bad blocks, N_F = 8\n"), "{t}");
        assert!(blocktree_table(&values[..7], 2.0, 0.75).is_err());
    }
}
