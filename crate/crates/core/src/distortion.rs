//! Bounded gradient-measurement errors.
//!
//! The only contract on an error vector is its norm bound. Several shapes
//! are provided so the simulator can be exercised against random, worst-case
//! magnitude and deterministic biased distortions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::rng::{self, Domain};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMode {
    /// No distortion.
    None,
    /// Uniform direction, magnitude uniform on `[0, ε]`.
    Ball,
    /// Uniform direction, magnitude exactly `ε`.
    Sphere,
    /// Ball-shaped, but keyed by source only: every receiver sees the same
    /// error from a given source at a given iteration.
    Shared,
    /// Deterministic rounding to a grid of pitch `2ε/√n`.
    Quantizer,
}

impl ErrorMode {
    /// Whether the error seen by receiver `i` is independent of `i`.
    pub fn receiver_independent(self) -> bool {
        matches!(self, Self::None | Self::Shared | Self::Quantizer)
    }
}

impl fmt::Display for ErrorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Ball => "ball",
            Self::Sphere => "sphere",
            Self::Shared => "shared",
            Self::Quantizer => "quant",
        })
    }
}

impl FromStr for ErrorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "ball" => Ok(Self::Ball),
            "sphere" => Ok(Self::Sphere),
            "shared" | "shared_per_source" => Ok(Self::Shared),
            "quant" | "quantizer" => Ok(Self::Quantizer),
            other => Err(Error::Config(format!(
                "unknown error mode `{other}` (expected none|ball|sphere|shared|quant)"
            ))),
        }
    }
}

/// Identifies one measurement: receiver `i` hears source `j` at global
/// iteration `k` of trial `trial`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorKey {
    pub receiver: usize,
    pub source: usize,
    pub iter: usize,
    pub trial: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel<T> {
    pub mode: ErrorMode,
    pub epsilon: T,
    pub seed: u64,
}

impl<T: Scalar> ErrorModel<T> {
    pub fn new(mode: ErrorMode, epsilon: T, seed: u64) -> Result<Self> {
        if !(epsilon >= T::zero()) || !epsilon.is_finite() {
            return Err(Error::Input(format!(
                "error bound must be finite and nonnegative, got {epsilon}"
            )));
        }
        Ok(Self {
            mode,
            epsilon,
            seed,
        })
    }

    pub fn none() -> Self {
        Self {
            mode: ErrorMode::None,
            epsilon: T::zero(),
            seed: 0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.mode == ErrorMode::None || self.epsilon == T::zero()
    }

    /// Error vector added to `clean`, the gradient being transmitted.
    ///
    /// Random modes ignore `clean`; the quantizer returns `quantize(clean) - clean`.
    /// The result never exceeds `epsilon` in norm (up to rounding).
    pub fn draw_error(&self, key: ErrorKey, clean: &[T]) -> Vec<T> {
        let n = clean.len();
        if self.is_noiseless() {
            return vec![T::zero(); n];
        }
        match self.mode {
            ErrorMode::None => unreachable!(),
            ErrorMode::Quantizer => {
                let q = quantize(clean, self.epsilon).expect("epsilon > 0 checked above");
                q.iter().zip(clean).map(|(&a, &b)| a - b).collect()
            }
            ErrorMode::Ball | ErrorMode::Sphere => {
                let words = [
                    self.seed,
                    key.trial as u64,
                    key.receiver as u64,
                    key.source as u64,
                    key.iter as u64,
                ];
                self.random_vector(Domain::Error, &words, n)
            }
            ErrorMode::Shared => {
                let words = [
                    self.seed,
                    key.trial as u64,
                    key.source as u64,
                    key.iter as u64,
                ];
                self.random_vector(Domain::SharedError, &words, n)
            }
        }
    }

    /// `clean + draw_error(key, clean)`.
    pub fn distort(&self, key: ErrorKey, clean: &[T]) -> Vec<T> {
        if self.mode == ErrorMode::Quantizer && !self.is_noiseless() {
            return quantize(clean, self.epsilon).expect("epsilon > 0");
        }
        let mut out = self.draw_error(key, clean);
        for (o, &c) in out.iter_mut().zip(clean) {
            *o = c + *o;
        }
        out
    }

    fn random_vector(&self, domain: Domain, words: &[u64], n: usize) -> Vec<T> {
        let mut r = rng::keyed(domain, words);
        let mut dir: Vec<T> = rng::normal_vec(&mut r, n);
        let len = norm(&dir);
        if !(len > T::zero()) {
            dir = vec![T::zero(); n];
            dir[0] = T::one();
        } else {
            dir.iter_mut().for_each(|d| *d = *d / len);
        }
        let magnitude = match self.mode {
            ErrorMode::Sphere => self.epsilon,
            _ => self.epsilon * rng::unit_interval::<T, _>(&mut r),
        };
        let mut e: Vec<T> = dir.into_iter().map(|d| d * magnitude).collect();
        // A unit vector may come out a few ulp long.
        let en = norm(&e);
        if en > self.epsilon {
            let s = self.epsilon / en;
            e.iter_mut().for_each(|v| *v = *v * s);
        }
        e
    }
}

/// Rounds each coordinate to the nearest multiple of `Δ = 2ε/√n`, ties away
/// from zero, so that `‖quantize(v) - v‖ ≤ ε`.
pub fn quantize<T: Scalar>(v: &[T], epsilon: T) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::Input("cannot quantize an empty vector".into()));
    }
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(Error::Input(format!(
            "quantizer bound must be positive, got {epsilon}"
        )));
    }
    let step = T::lit(2.0) * epsilon / T::count(v.len()).sqrt();
    let out: Vec<T> = v.iter().map(|&x| (x / step).round() * step).collect();
    debug_assert!({
        let err = crate::linalg::dist(&out, v);
        err <= epsilon * (T::one() + T::lit(64.0) * T::epsilon())
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: usize, j: usize, k: usize) -> ErrorKey {
        ErrorKey {
            receiver: i,
            source: j,
            iter: k,
            trial: 0,
        }
    }

    #[test]
    fn zero_bound_gives_zero_vector() {
        for mode in [ErrorMode::Ball, ErrorMode::Sphere, ErrorMode::Shared] {
            let m = ErrorModel::new(mode, 0.0_f64, 3).unwrap();
            assert_eq!(m.draw_error(key(0, 1, 0), &[1.0, 2.0]), vec![0.0, 0.0]);
        }
        assert_eq!(
            ErrorModel::<f64>::none().draw_error(key(0, 1, 0), &[5.0]),
            vec![0.0]
        );
    }

    #[test]
    fn ball_draws_respect_bound() {
        let m = ErrorModel::new(ErrorMode::Ball, 0.1_f64, 9).unwrap();
        let clean = vec![0.0; 10];
        for k in 0..1000 {
            let e = m.draw_error(key(0, 1, k), &clean);
            assert!(norm(&e) <= 0.1);
        }
    }

    #[test]
    fn sphere_draws_have_full_magnitude() {
        let m = ErrorModel::new(ErrorMode::Sphere, 0.5_f64, 9).unwrap();
        let e = m.draw_error(key(2, 1, 7), &[0.0; 4]);
        assert!((norm(&e) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shared_mode_ignores_receiver() {
        let m = ErrorModel::new(ErrorMode::Shared, 1.0_f64, 4).unwrap();
        let a = m.draw_error(key(1, 3, 5), &[0.0; 6]);
        let b = m.draw_error(key(2, 3, 5), &[0.0; 6]);
        assert_eq!(a, b);
        let ball = ErrorModel::new(ErrorMode::Ball, 1.0_f64, 4).unwrap();
        assert_ne!(
            ball.draw_error(key(1, 3, 5), &[0.0; 6]),
            ball.draw_error(key(2, 3, 5), &[0.0; 6])
        );
    }

    #[test]
    fn distinct_iterations_differ() {
        let m = ErrorModel::new(ErrorMode::Ball, 1.0_f64, 4).unwrap();
        assert_ne!(
            m.draw_error(key(0, 1, 5), &[0.0; 3]),
            m.draw_error(key(0, 1, 6), &[0.0; 3])
        );
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(&[0.25_f64], 0.1).unwrap(), vec![0.2]);
        let on_grid = vec![0.4_f64, -0.2];
        let step = 2.0 * 0.1 / 2f64.sqrt();
        let v: Vec<f64> = [3.0, -2.0].iter().map(|m| m * step).collect();
        assert_eq!(quantize(&v, 0.1).unwrap(), v);
        assert!(quantize(&on_grid, 0.0).is_err());
        assert!(quantize::<f64>(&[], 1.0).is_err());
    }

    #[test]
    fn quantize_ties_round_away_from_zero() {
        // step 1 in one dimension
        assert_eq!(quantize(&[0.5_f64], 0.5).unwrap(), vec![1.0]);
        assert_eq!(quantize(&[-1.5_f64], 0.5).unwrap(), vec![-2.0]);
    }

    #[test]
    fn quantizer_mode_error_is_deterministic() {
        let m = ErrorModel::new(ErrorMode::Quantizer, 1.0_f64, 0).unwrap();
        let g = [0.37, -2.2, 5.1];
        assert_eq!(
            m.draw_error(key(0, 1, 0), &g),
            m.draw_error(key(3, 1, 9), &g)
        );
        assert!(norm(&m.draw_error(key(0, 1, 0), &g)) <= 1.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("quant".parse::<ErrorMode>().unwrap(), ErrorMode::Quantizer);
        assert_eq!("shared".parse::<ErrorMode>().unwrap(), ErrorMode::Shared);
        assert!("gauss".parse::<ErrorMode>().is_err());
        for m in [
            ErrorMode::None,
            ErrorMode::Ball,
            ErrorMode::Sphere,
            ErrorMode::Shared,
            ErrorMode::Quantizer,
        ] {
            assert_eq!(m.to_string().parse::<ErrorMode>().unwrap(), m);
        }
    }
}
