//! Centered stationary Gaussian sequences with known autocovariance.
//!
//! Each generator comes with an exact covariance oracle ([`autocovariance`])
//! and a way to find the smallest constant `K` for which
//! `r(k) <= K / (1 + k)^gamma` holds on the inspected lags ([`fit_kappa`]).
//! Paths are a deterministic function of `(seed, path_index)`.

use std::io::{self, Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of moving-average coefficients for [`GeneratorKind::LinearProcess`].
pub const DEFAULT_TRUNCATION: usize = 1 << 16;

/// Eigenvalues of the circulant embedding below `-EIGEN_TOLERANCE * max` are fatal.
pub const EIGEN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("horizon must be a power of two, got {0}")]
    HorizonNotPowerOfTwo(usize),
    #[error("AR(1) coefficient must lie in (-1, 1), got {0}")]
    PhiOutOfRange(f64),
    #[error("Hurst parameter must lie in (0, 1), got {0}")]
    HurstOutOfRange(f64),
    #[error("linear process target exponent must be positive, got {0}")]
    GammaTargetOutOfRange(f64),
    #[error("linear process truncation must be positive")]
    ZeroTruncation,
    #[error("lag {lag} exceeds horizon {horizon}")]
    LagBeyondHorizon { lag: usize, horizon: usize },
    #[error("max_lag must be positive")]
    ZeroMaxLag,
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("r(k)(1+k)^{gamma} is still increasing at max_lag = {max_lag}; gamma too large for this generator")]
    StillIncreasing { gamma: f64, max_lag: usize },
    #[error("circulant embedding has eigenvalue {min} (max {max})")]
    NegativeEigenvalue { min: f64, max: f64 },
    #[error("not a path file (bad magic)")]
    BadMagic,
    #[error("unsupported path file version {0}")]
    UnsupportedVersion(u16),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GeneratorKind {
    /// The constant zero sequence. Degenerate; used for smoke tests.
    Zero,
    IidGaussian,
    Ar1 { phi: f64 },
    /// Moving average with coefficients `c_j = (1 + j)^{-(gamma_target + 1)/2}`,
    /// `0 <= j < truncation`, normalized to unit variance.
    LinearProcess { gamma_target: f64, truncation: usize },
    FractionalGaussianNoise { hurst: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    kind: GeneratorKind,
    seed: u64,
    horizon: usize,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, seed: u64, horizon: usize) -> Result<Self, GenError> {
        if !horizon.is_power_of_two() {
            return Err(GenError::HorizonNotPowerOfTwo(horizon));
        }
        match kind {
            GeneratorKind::Ar1 { phi } if !(phi > -1.0 && phi < 1.0) => {
                return Err(GenError::PhiOutOfRange(phi))
            }
            GeneratorKind::FractionalGaussianNoise { hurst } if !(hurst > 0.0 && hurst < 1.0) => {
                return Err(GenError::HurstOutOfRange(hurst))
            }
            GeneratorKind::LinearProcess { gamma_target, .. }
                if !(gamma_target > 0.0 && gamma_target.is_finite()) =>
            {
                return Err(GenError::GammaTargetOutOfRange(gamma_target))
            }
            GeneratorKind::LinearProcess { truncation: 0, .. } => return Err(GenError::ZeroTruncation),
            _ => {}
        }
        Ok(Self { kind, seed, horizon })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `L` with `horizon = 2^L`.
    pub fn depth(&self) -> u32 {
        self.horizon.trailing_zeros()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

fn linear_coefficients(gamma_target: f64, truncation: usize) -> Vec<f64> {
    let exponent = -(gamma_target + 1.0) / 2.0;
    (0..truncation).map(|j| (1.0 + j as f64).powf(exponent)).collect()
}

/// Upper bound on the fraction of variance the infinite moving average
/// loses to truncation: `sum_{j >= T} c_j^2 / sum_j c_j^2 <= (1 + T)^{-gamma} / gamma`.
pub fn truncation_bias_bound(gamma_target: f64, truncation: usize) -> f64 {
    // numerator <= integral_{T-1}^{inf} (1+x)^{-(gamma+1)} dx, denominator >= c_0^2 = 1
    (truncation as f64).powf(-gamma_target) / gamma_target
}

fn fgn_autocovariance(hurst: f64, lag: usize) -> f64 {
    let two_h = 2.0 * hurst;
    let k = lag as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Exact stationary autocovariance `r(lag)`.
pub fn autocovariance(spec: &GeneratorSpec, lag: usize) -> Result<f64, GenError> {
    if lag > spec.horizon {
        return Err(GenError::LagBeyondHorizon {
            lag,
            horizon: spec.horizon,
        });
    }
    Ok(match spec.kind {
        GeneratorKind::Zero => 0.0,
        GeneratorKind::IidGaussian => f64::from(u8::from(lag == 0)),
        GeneratorKind::Ar1 { phi } => phi.powi(lag as i32),
        GeneratorKind::LinearProcess {
            gamma_target,
            truncation,
        } => {
            let c = linear_coefficients(gamma_target, truncation);
            if lag >= truncation {
                0.0
            } else {
                let norm: f64 = c.iter().map(|x| x * x).sum();
                let cross: f64 = c.iter().zip(&c[lag..]).map(|(a, b)| a * b).sum();
                cross / norm
            }
        }
        GeneratorKind::FractionalGaussianNoise { hurst } => fgn_autocovariance(hurst, lag),
    })
}

/// `r(0..=max_lag)`. Linear processes use an FFT autocorrelation instead of
/// one convolution per lag.
pub fn autocovariances(spec: &GeneratorSpec, max_lag: usize) -> Result<Vec<f64>, GenError> {
    if max_lag > spec.horizon {
        return Err(GenError::LagBeyondHorizon {
            lag: max_lag,
            horizon: spec.horizon,
        });
    }
    match spec.kind {
        GeneratorKind::LinearProcess {
            gamma_target,
            truncation,
        } => {
            let c = linear_coefficients(gamma_target, truncation);
            let len = (2 * truncation).next_power_of_two();
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(len);
            let inv = planner.plan_fft_inverse(len);
            let mut buf: Vec<Complex<f64>> = c.iter().map(|&x| Complex::new(x, 0.0)).collect();
            buf.resize(len, Complex::new(0.0, 0.0));
            fwd.process(&mut buf);
            for z in buf.iter_mut() {
                *z = Complex::new(z.norm_sqr(), 0.0);
            }
            inv.process(&mut buf);
            let r0 = buf[0].re;
            Ok((0..=max_lag)
                .map(|k| if k < truncation { buf[k].re / r0 } else { 0.0 })
                .collect())
        }
        _ => (0..=max_lag).map(|k| autocovariance(spec, k)).collect(),
    }
}

/// Exact autocovariances together with the fitted constant `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceProfile {
    pub lags: Vec<f64>,
    pub fitted_kappa: f64,
    pub gamma_used: f64,
}

impl CovarianceProfile {
    /// Whether `r(k) (1 + k)^gamma <= kappa` on every stored lag.
    pub fn certifies(&self, kappa: f64) -> bool {
        self.lags
            .iter()
            .enumerate()
            .all(|(k, &r)| r * (1.0 + k as f64).powf(self.gamma_used) <= kappa)
    }
}

/// Smallest `K` with `r(k) <= K / (1 + k)^gamma` for `0 <= k <= max_lag`.
///
/// Fails when the weighted sequence `r(k) (1 + k)^gamma` peaks at the last
/// inspected lag while still rising, which means `gamma` outruns the decay.
pub fn fit_kappa(spec: &GeneratorSpec, gamma: f64, max_lag: usize) -> Result<CovarianceProfile, GenError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(GenError::NonPositiveGamma(gamma));
    }
    if max_lag == 0 {
        return Err(GenError::ZeroMaxLag);
    }
    let lags = autocovariances(spec, max_lag)?;
    let weighted: Vec<f64> = lags
        .iter()
        .enumerate()
        .map(|(k, &r)| r * (1.0 + k as f64).powf(gamma))
        .collect();
    let off_diagonal_max = weighted[1..].iter().copied().fold(0.0f64, f64::max);
    let last = weighted[max_lag];
    if max_lag >= 2 && last > 0.0 && last > weighted[max_lag - 1] && last >= off_diagonal_max {
        return Err(GenError::StillIncreasing { gamma, max_lag });
    }
    Ok(CovarianceProfile {
        fitted_kappa: lags[0].max(off_diagonal_max),
        lags,
        gamma_used: gamma,
    })
}

/// One realization `X_1..X_N` of a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub values: Vec<f64>,
    pub generator: GeneratorSpec,
    pub path_index: u64,
}

/// Per-path random stream: a ChaCha8 keyed by the master seed, with the
/// path index selecting the stream.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

enum Engine {
    Zero,
    Iid,
    Ar1 {
        phi: f64,
        innovation_scale: f64,
    },
    Linear {
        truncation: usize,
        /// Spectrum of the normalized coefficients, zero-padded to the FFT length.
        spectrum: Vec<Complex<f64>>,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    Circulant {
        /// `sqrt(lambda_j / M)` for the `M = 2N` circulant eigenvalues.
        scales: Vec<f64>,
        forward: Arc<dyn Fft<f64>>,
    },
}

/// A generator with its FFT plans and spectra prepared once, shareable
/// across threads.
pub struct PathGenerator {
    spec: GeneratorSpec,
    engine: Engine,
}

impl PathGenerator {
    pub fn new(spec: GeneratorSpec) -> Result<Self, GenError> {
        let n = spec.horizon;
        let engine = match spec.kind {
            GeneratorKind::Zero => Engine::Zero,
            GeneratorKind::IidGaussian => Engine::Iid,
            GeneratorKind::Ar1 { phi } => Engine::Ar1 {
                phi,
                innovation_scale: (1.0 - phi * phi).sqrt(),
            },
            GeneratorKind::LinearProcess {
                gamma_target,
                truncation,
            } => {
                if truncation == 0 {
                    return Err(GenError::ZeroTruncation);
                }
                let c = linear_coefficients(gamma_target, truncation);
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                // innovations: n + truncation - 1, full linear convolution fits
                let len = (n + 2 * truncation).next_power_of_two();
                let mut planner = FftPlanner::new();
                let forward = planner.plan_fft_forward(len);
                let inverse = planner.plan_fft_inverse(len);
                let mut spectrum: Vec<Complex<f64>> =
                    c.iter().map(|&x| Complex::new(x / norm, 0.0)).collect();
                spectrum.resize(len, Complex::new(0.0, 0.0));
                forward.process(&mut spectrum);
                Engine::Linear {
                    truncation,
                    spectrum,
                    forward,
                    inverse,
                }
            }
            GeneratorKind::FractionalGaussianNoise { hurst } => {
                let m = 2 * n;
                let mut row: Vec<Complex<f64>> = Vec::with_capacity(m);
                for j in 0..=n {
                    row.push(Complex::new(fgn_autocovariance(hurst, j), 0.0));
                }
                for j in (1..n).rev() {
                    row.push(Complex::new(fgn_autocovariance(hurst, j), 0.0));
                }
                let mut planner = FftPlanner::new();
                let forward = planner.plan_fft_forward(m);
                forward.process(&mut row);
                let max = row.iter().map(|z| z.re).fold(f64::MIN, f64::max);
                let min = row.iter().map(|z| z.re).fold(f64::MAX, f64::min);
                if min < -EIGEN_TOLERANCE * max {
                    return Err(GenError::NegativeEigenvalue { min, max });
                }
                let scales = row
                    .iter()
                    .map(|z| (z.re.max(0.0) / m as f64).sqrt())
                    .collect();
                Engine::Circulant { scales, forward }
            }
        };
        Ok(Self { spec, engine })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn generate(&self, path_index: u64) -> SamplePath {
        let n = self.spec.horizon;
        let mut rng = path_rng(self.spec.seed, path_index);
        let values = match &self.engine {
            Engine::Zero => vec![0.0; n],
            Engine::Iid => normals(&mut rng, n),
            Engine::Ar1 {
                phi,
                innovation_scale,
            } => {
                let mut values = Vec::with_capacity(n);
                let mut x: f64 = rng.sample(StandardNormal);
                values.push(x);
                for _ in 1..n {
                    let xi: f64 = rng.sample(StandardNormal);
                    x = phi * x + innovation_scale * xi;
                    values.push(x);
                }
                values
            }
            Engine::Linear {
                truncation,
                spectrum,
                forward,
                inverse,
            } => {
                let len = spectrum.len();
                let mut buf: Vec<Complex<f64>> = normals(&mut rng, n + truncation - 1)
                    .into_iter()
                    .map(|x| Complex::new(x, 0.0))
                    .collect();
                buf.resize(len, Complex::new(0.0, 0.0));
                forward.process(&mut buf);
                for (z, s) in buf.iter_mut().zip(spectrum) {
                    *z *= s;
                }
                inverse.process(&mut buf);
                let scale = 1.0 / len as f64;
                buf[truncation - 1..truncation - 1 + n]
                    .iter()
                    .map(|z| z.re * scale)
                    .collect()
            }
            Engine::Circulant { scales, forward } => {
                let mut buf: Vec<Complex<f64>> = scales
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(re * s, im * s)
                    })
                    .collect();
                forward.process(&mut buf);
                buf[..n].iter().map(|z| z.re).collect()
            }
        };
        SamplePath {
            values,
            generator: self.spec,
            path_index,
        }
    }
}

/// One-shot convenience over [`PathGenerator`].
pub fn generate_path(spec: &GeneratorSpec, path_index: u64) -> Result<SamplePath, GenError> {
    Ok(PathGenerator::new(*spec)?.generate(path_index))
}

pub const PATH_MAGIC: [u8; 4] = *b"DSLN";
pub const PATH_FORMAT_VERSION: u16 = 1;

/// 16-byte header (magic, version u16 LE, horizon u64 LE, 2 reserved bytes)
/// followed by the values as little-endian `f64`.
pub fn write_path_binary<W: Write>(mut w: W, values: &[f64]) -> io::Result<()> {
    let mut header = [0u8; 16];
    header[..4].copy_from_slice(&PATH_MAGIC);
    header[4..6].copy_from_slice(&PATH_FORMAT_VERSION.to_le_bytes());
    header[6..14].copy_from_slice(&(values.len() as u64).to_le_bytes());
    w.write_all(&header)?;
    let mut body = Vec::with_capacity(values.len() * 8);
    for v in values {
        body.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&body)?;
    w.flush()
}

pub fn read_path_binary<R: Read>(mut r: R) -> Result<Vec<f64>, GenError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..4] != PATH_MAGIC {
        return Err(GenError::BadMagic);
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != PATH_FORMAT_VERSION {
        return Err(GenError::UnsupportedVersion(version));
    }
    let horizon = u64::from_le_bytes(header[6..14].try_into().unwrap()) as usize;
    let mut body = vec![0u8; horizon * 8];
    r.read_exact(&mut body)?;
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(kind: GeneratorKind, horizon: usize) -> GeneratorSpec {
        GeneratorSpec::new(kind, 7, horizon).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(GeneratorSpec::new(GeneratorKind::IidGaussian, 0, 1000).is_err());
        assert!(GeneratorSpec::new(GeneratorKind::Ar1 { phi: 1.0 }, 0, 8).is_err());
        assert!(GeneratorSpec::new(GeneratorKind::FractionalGaussianNoise { hurst: 0.0 }, 0, 8).is_err());
        assert!(GeneratorSpec::new(
            GeneratorKind::LinearProcess {
                gamma_target: 0.5,
                truncation: 0
            },
            0,
            8
        )
        .is_err());
        assert!(GeneratorSpec::new(GeneratorKind::FractionalGaussianNoise { hurst: 0.5 }, 0, 1).is_ok());
    }

    #[test]
    fn autocovariance_examples() {
        assert_eq!(autocovariance(&spec(GeneratorKind::IidGaussian, 8), 3).unwrap(), 0.0);
        let white = spec(GeneratorKind::FractionalGaussianNoise { hurst: 0.5 }, 8);
        assert_eq!(autocovariance(&white, 1).unwrap(), 0.0);
        assert_eq!(autocovariance(&white, 0).unwrap(), 1.0);
        let ar = spec(GeneratorKind::Ar1 { phi: -0.5 }, 8);
        assert_eq!(autocovariance(&ar, 2).unwrap(), 0.25);
        assert!(autocovariance(&ar, 9).is_err());
    }

    #[test]
    fn fgn_negative_correlation_below_half() {
        let s = spec(GeneratorKind::FractionalGaussianNoise { hurst: 0.3 }, 64);
        for k in 1..=64 {
            assert!(autocovariance(&s, k).unwrap() < 0.0);
        }
    }

    #[test]
    fn linear_fft_matches_direct_convolution() {
        let s = spec(
            GeneratorKind::LinearProcess {
                gamma_target: 0.6,
                truncation: 4096,
            },
            4096,
        );
        let via_fft = autocovariances(&s, 4096).unwrap();
        assert!((via_fft[0] - 1.0).abs() < 1e-15);
        for lag in [1, 2, 17, 300, 4095, 4096] {
            let direct = autocovariance(&s, lag).unwrap();
            assert!((via_fft[lag] - direct).abs() < 1e-12, "lag {lag}");
        }
    }

    #[test]
    fn truncation_bias_is_small_by_default() {
        assert!(truncation_bias_bound(1.5, DEFAULT_TRUNCATION) < 1e-6);
        // brute force check of the bound on a small case
        let c = linear_coefficients(0.5, 1 << 20);
        let total: f64 = c.iter().map(|x| x * x).sum();
        let dropped: f64 = c[256..].iter().map(|x| x * x).sum();
        assert!(dropped / total <= truncation_bias_bound(0.5, 256));
    }

    #[test]
    fn fit_kappa_examples() {
        let iid = spec(GeneratorKind::IidGaussian, 1024);
        assert_eq!(fit_kappa(&iid, 2.0, 100).unwrap().fitted_kappa, 1.0);

        let fgn = spec(GeneratorKind::FractionalGaussianNoise { hurst: 0.7 }, 1 << 14);
        let profile = fit_kappa(&fgn, 0.6, 1 << 14).unwrap();
        assert_eq!(profile.fitted_kappa, 1.0);
        let tail: Vec<f64> = (1000..1010)
            .map(|k| profile.lags[k] * (1.0 + k as f64).powf(0.6))
            .collect();
        assert!(tail.windows(2).all(|w| w[1] < w[0]));
        // asymptote H(2H-1) = 0.28
        let q = profile.lags[1 << 14] * (1.0 + (1 << 14) as f64).powf(0.6);
        assert!((q - 0.28).abs() < 1e-3);

        let ar = spec(GeneratorKind::Ar1 { phi: 0.9 }, 256);
        let profile = fit_kappa(&ar, 5.0, 200).unwrap();
        let peak = (1..=200)
            .map(|k| 0.9f64.powi(k) * (1.0 + f64::from(k)).powi(5))
            .fold(0.0, f64::max);
        assert!((profile.fitted_kappa - peak).abs() <= 1e-9 * peak);
    }

    #[test]
    fn fit_kappa_rejects_too_fast_gamma() {
        let fgn = spec(GeneratorKind::FractionalGaussianNoise { hurst: 0.8 }, 1 << 12);
        assert!(matches!(
            fit_kappa(&fgn, 0.6, 1 << 12),
            Err(GenError::StillIncreasing { .. })
        ));
        let ar = spec(GeneratorKind::Ar1 { phi: 0.99 }, 256);
        assert!(fit_kappa(&ar, 5.0, 20).is_err());
    }

    #[test]
    fn negative_ar1_is_certified_by_diagonal_and_even_lags() {
        let ar = spec(GeneratorKind::Ar1 { phi: -0.5 }, 256);
        let profile = fit_kappa(&ar, 2.0, 200).unwrap();
        // even lags: 0.25 * 9 = 2.25 is the peak
        assert!((profile.fitted_kappa - 2.25).abs() < 1e-15);
        assert!(profile.certifies(profile.fitted_kappa));
    }

    #[test]
    fn paths_are_deterministic() {
        for kind in [
            GeneratorKind::IidGaussian,
            GeneratorKind::Ar1 { phi: 0.3 },
            GeneratorKind::LinearProcess {
                gamma_target: 0.5,
                truncation: 256,
            },
            GeneratorKind::FractionalGaussianNoise { hurst: 0.8 },
        ] {
            let s = spec(kind, 512);
            let a = generate_path(&s, 3).unwrap();
            let b = generate_path(&s, 3).unwrap();
            let c = generate_path(&s, 4).unwrap();
            assert_eq!(a.values.len(), 512);
            assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_ne!(a.values, c.values);
        }
    }

    #[test]
    fn linear_generator_matches_direct_convolution() {
        let truncation = 64;
        let s = spec(
            GeneratorKind::LinearProcess {
                gamma_target: 0.5,
                truncation,
            },
            128,
        );
        let path = generate_path(&s, 0).unwrap();
        let mut rng = path_rng(7, 0);
        let xi = normals(&mut rng, 128 + truncation - 1);
        let c = linear_coefficients(0.5, truncation);
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        for n in [0, 1, 50, 127] {
            let direct: f64 = (0..truncation).map(|j| c[j] * xi[n + truncation - 1 - j]).sum::<f64>() / norm;
            assert!((direct - path.values[n]).abs() < 1e-10);
        }
    }

    #[test]
    fn binary_format_header() {
        let mut buf = Vec::new();
        write_path_binary(&mut buf, &[1.0, -2.5]).unwrap();
        assert_eq!(buf.len(), 32);
        assert_eq!(&buf[..4], b"DSLN");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..14], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &1.0f64.to_le_bytes());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_path_binary(&bad[..]), Err(GenError::BadMagic)));
        let mut vers = buf.clone();
        vers[4] = 9;
        assert!(matches!(read_path_binary(&vers[..]), Err(GenError::UnsupportedVersion(9))));
        assert!(read_path_binary(&buf[..20]).is_err());
    }

    proptest! {
        #[test]
        fn binary_roundtrip(values in proptest::collection::vec(any::<f64>(), 0..64)) {
            let mut buf = Vec::new();
            write_path_binary(&mut buf, &values).unwrap();
            let back = read_path_binary(&buf[..]).unwrap();
            prop_assert_eq!(back.len(), values.len());
            for (a, b) in back.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
