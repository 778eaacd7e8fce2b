//! Flat `key = value` run configuration with `#` comments and dotted keys.

use std::collections::BTreeMap;
use std::fmt;

use slln_core::bounds::CovarianceHypothesis;
use slln_core::genseq::{GeneratorKind, GeneratorSpec, DEFAULT_TRUNCATION};
use slln_core::montecarlo::{default_blocks, default_checkpoints, ExperimentConfig};
use slln_core::multiscale::DyadicBlock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, when the problem can be tied to one.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "generator.kind",
    "generator.horizon",
    "generator.phi",
    "generator.hurst",
    "generator.gamma_target",
    "generator.truncation",
    "hypothesis.gamma",
    "hypothesis.kappa",
    "hypothesis.beta",
    "experiment.num_paths",
    "experiment.checkpoints",
    "experiment.blocks",
    "output.verbose_census",
];

/// The key-value content of a config file, keeping the line each key came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Option<usize>)>,
}

impl PartialEq for RawConfig {
    fn eq(&self, other: &Self) -> bool {
        self.to_map() == other.to_map()
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(Some(line), format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(err(Some(line), format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(Some(line), format!("empty value for `{key}`")));
            }
            if let Some((_, Some(first))) = entries.get(key) {
                return Err(err(Some(line), format!("duplicate key `{key}` (first set on line {first})")));
            }
            entries.insert(key.to_string(), (value.to_string(), Some(line)));
        }
        Ok(Self { entries })
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (k, v) in map {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(err(None, format!("unknown key `{k}`")));
            }
            entries.insert(k.clone(), (v.clone(), None));
        }
        Ok(Self { entries })
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect()
    }

    /// One `key = value` line per entry, sorted by key.
    pub fn serialize(&self) -> String {
        self.entries
            .iter()
            .map(|(k, (v, _))| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (value.into(), None));
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).and_then(|(_, l)| *l)
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let value = self
            .get(key)
            .ok_or_else(|| err(None, format!("missing required key `{key}`")))?;
        value
            .parse()
            .map_err(|_| err(self.line(key), format!("cannot parse `{value}` for `{key}`")))
    }

    fn optional<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(key).map(|_| self.required(key)).transpose()
    }

    fn reject(&self, keys: &[&str], kind: &str) -> Result<(), ConfigError> {
        match keys.iter().find(|k| self.get(k).is_some()) {
            Some(k) => Err(err(self.line(k), format!("`{k}` does not apply to generator kind `{kind}`"))),
            None => Ok(()),
        }
    }

    fn generator_kind(&self) -> Result<GeneratorKind, ConfigError> {
        let kind: String = self.required("generator.kind")?;
        let all = ["generator.phi", "generator.hurst", "generator.gamma_target", "generator.truncation"];
        let allowed: &[&str] = match kind.as_str() {
            "ar1" => &["generator.phi"],
            "fgn" => &["generator.hurst"],
            "linear" => &["generator.gamma_target", "generator.truncation"],
            "iid" | "zero" => &[],
            other => {
                return Err(err(
                    self.line("generator.kind"),
                    format!("unknown generator kind `{other}` (expected iid, ar1, linear, fgn or zero)"),
                ))
            }
        };
        let rejected: Vec<&str> = all.iter().copied().filter(|k| !allowed.contains(k)).collect();
        self.reject(&rejected, &kind)?;
        Ok(match kind.as_str() {
            "ar1" => GeneratorKind::Ar1 {
                phi: self.required("generator.phi")?,
            },
            "fgn" => GeneratorKind::FractionalGaussianNoise {
                hurst: self.required("generator.hurst")?,
            },
            "linear" => GeneratorKind::LinearProcess {
                gamma_target: self.required("generator.gamma_target")?,
                truncation: self.optional("generator.truncation")?.unwrap_or(DEFAULT_TRUNCATION),
            },
            "zero" => GeneratorKind::Zero,
            _ => GeneratorKind::IidGaussian,
        })
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(value) = self.get(key) else {
            return Ok(None);
        };
        value
            .split(',')
            .map(|item| {
                item.trim()
                    .parse()
                    .map_err(|_| err(self.line(key), format!("cannot parse `{}` in `{key}`", item.trim())))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    fn blocks(&self) -> Result<Option<Vec<DyadicBlock>>, ConfigError> {
        let key = "experiment.blocks";
        let Some(value) = self.get(key) else {
            return Ok(None);
        };
        let line = self.line(key);
        value
            .split(',')
            .map(|item| {
                let item = item.trim();
                let (k, i) = item
                    .split_once(':')
                    .ok_or_else(|| err(line, format!("block `{item}` is not `k:i`")))?;
                let k: u32 = k.trim().parse().map_err(|_| err(line, format!("bad level in `{item}`")))?;
                let i: u64 = i.trim().parse().map_err(|_| err(line, format!("bad index in `{item}`")))?;
                DyadicBlock::new(k, i).map_err(|e| err(line, e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Validate every value and build the typed run configuration.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let seed: u64 = self.optional("seed")?.unwrap_or(0);
        let kind = self.generator_kind()?;
        let horizon: usize = self.required("generator.horizon")?;
        let generator = GeneratorSpec::new(kind, seed, horizon).map_err(|e| {
            let key = match e {
                slln_core::genseq::GenError::HorizonNotPowerOfTwo(_) => "generator.horizon",
                _ => "generator.kind",
            };
            err(self.line(key), e.to_string())
        })?;
        let hypothesis = CovarianceHypothesis::new(
            self.required("hypothesis.gamma")?,
            self.required("hypothesis.kappa")?,
            self.required("hypothesis.beta")?,
        )
        .map_err(|e| {
            let key = match e {
                slln_core::bounds::BoundsError::NonPositiveGamma(_) => "hypothesis.gamma",
                slln_core::bounds::BoundsError::NonPositiveKappa(_) => "hypothesis.kappa",
                _ => "hypothesis.beta",
            };
            err(self.line(key), e.to_string())
        })?;
        let num_paths: usize = self.required("experiment.num_paths")?;
        let checkpoints = self
            .list("experiment.checkpoints")?
            .unwrap_or_else(|| default_checkpoints(horizon));
        let blocks = self.blocks()?.unwrap_or_else(|| default_blocks(horizon));
        let verbose_census = self.optional("output.verbose_census")?.unwrap_or(false);
        let experiment = ExperimentConfig::new(generator, hypothesis, num_paths, checkpoints, blocks)
            .map_err(|e| err(None, e.to_string()))?;
        Ok(RunConfig {
            seed,
            experiment,
            verbose_census,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub experiment: ExperimentConfig,
    pub verbose_census: bool,
}

/// Presets shipped with the tool, as config text.
pub const PRESETS: &[(&str, &str)] = &[
    ("iid-beta075", include_str!("../presets/iid-beta075.conf")),
    ("fgn-h08-longrange", include_str!("../presets/fgn-h08-longrange.conf")),
    ("linear-gamma1", include_str!("../presets/linear-gamma1.conf")),
    ("fgn-h03-negative", include_str!("../presets/fgn-h03-negative.conf")),
    ("ar1-phi05", include_str!("../presets/ar1-phi05.conf")),
];

pub fn preset(name: &str) -> Option<RawConfig> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| RawConfig::parse(text).expect("shipped presets parse"))
}
