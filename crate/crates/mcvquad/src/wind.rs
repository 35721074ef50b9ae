//! Wind as mean plus zero-mean Gaussian turbulence, either synthesized from a
//! covariance model or replayed from a recorded trace.
//!
//! Traces are plain-text CSV (`t,wx,wy,wz`, SI units); statistics estimated
//! from a trace feed the controller's noise intensity `W`.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Eigenvalue floor below which a symmetrized covariance is rejected.
const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum WindError {
    #[error("covariance is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    InvalidModel { min_eig: f64 },
    #[error("trace must contain at least 2 samples, got {0}")]
    TraceTooShort(usize),
    #[error("trace times must be strictly increasing (violation at index {0})")]
    NonMonotoneTimes(usize),
    #[error("trace has {times} times but {samples} samples")]
    LengthMismatch { times: usize, samples: usize },
    #[error("time {t} outside trace range [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },
    #[error("trace parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trace i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Interpolation used when replaying a trace between recorded samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interp {
    /// Hold the most recent sample (default; matches per-step injection).
    #[default]
    ZeroOrderHold,
    /// Linear interpolation between bracketing samples.
    Linear,
}

/// Gaussian wind description: mean velocity plus per-sample turbulence
/// covariance. The covariance doubles as the controller's noise intensity `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindModel {
    mean: Vector3<f64>,
    covariance: Matrix3<f64>,
}

impl WindModel {
    /// Builds a model, symmetrizing the covariance and rejecting it if any
    /// eigenvalue falls below `-1e-10`.
    pub fn new(mean: Vector3<f64>, covariance: Matrix3<f64>) -> Result<Self, WindError> {
        let sym = (covariance + covariance.transpose()) * 0.5;
        let min_eig = sym
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOLERANCE {
            return Err(WindError::InvalidModel { min_eig });
        }
        Ok(Self {
            mean,
            covariance: sym,
        })
    }

    /// Still air.
    pub fn calm() -> Self {
        Self {
            mean: Vector3::zeros(),
            covariance: Matrix3::zeros(),
        }
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.mean
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        self.covariance
    }

    /// Factor `L` with `L L^T = covariance`. Cholesky when positive definite,
    /// symmetric eigenvalue square root for the semidefinite boundary.
    pub fn factor(&self) -> Result<Matrix3<f64>, WindError> {
        if let Some(chol) = self.covariance.cholesky() {
            return Ok(chol.l());
        }
        let eig = self.covariance.symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOLERANCE {
            return Err(WindError::InvalidModel { min_eig });
        }
        let sqrt_vals = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        Ok(eig.eigenvectors * sqrt_vals)
    }
}

/// Draws one wind sample `mean + L z`, `z ~ N(0, I3)`, deterministic given the
/// generator state.
pub fn sample_gaussian<R: Rng>(model: &WindModel, rng: &mut R) -> Result<Vector3<f64>, WindError> {
    let l = model.factor()?;
    let z = Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    Ok(model.mean + l * z)
}

/// Recorded wind time series with strictly increasing sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct WindTrace {
    times: Vec<f64>,
    samples: Vec<Vector3<f64>>,
}

impl WindTrace {
    pub fn new(times: Vec<f64>, samples: Vec<Vector3<f64>>) -> Result<Self, WindError> {
        if times.len() != samples.len() {
            return Err(WindError::LengthMismatch {
                times: times.len(),
                samples: samples.len(),
            });
        }
        if times.len() < 2 {
            return Err(WindError::TraceTooShort(times.len()));
        }
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                return Err(WindError::NonMonotoneTimes(i));
            }
        }
        Ok(Self { times, samples })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn samples(&self) -> &[Vector3<f64>] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Wind at time `t`. No extrapolation: `t` must lie inside the recorded
    /// range.
    pub fn lookup(&self, t: f64, mode: Interp) -> Result<Vector3<f64>, WindError> {
        if t < self.start_time() || t > self.end_time() {
            return Err(WindError::OutOfRange {
                t,
                t0: self.start_time(),
                t1: self.end_time(),
            });
        }
        // Index of the last knot with time <= t.
        let idx = match self.times.partition_point(|&tk| tk <= t) {
            0 => 0,
            p => p - 1,
        };
        match mode {
            Interp::ZeroOrderHold => Ok(self.samples[idx]),
            Interp::Linear => {
                if idx + 1 >= self.times.len() {
                    return Ok(self.samples[idx]);
                }
                let (t0, t1) = (self.times[idx], self.times[idx + 1]);
                let alpha = (t - t0) / (t1 - t0);
                Ok(self.samples[idx].lerp(&self.samples[idx + 1], alpha))
            }
        }
    }

    /// Sample mean and unbiased sample covariance (divide by N-1) of the
    /// recorded wind, symmetrized.
    pub fn estimate_stats(&self) -> WindModel {
        let n = self.samples.len() as f64;
        let mean: Vector3<f64> = self.samples.iter().sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::zeros();
        for s in &self.samples {
            let d = s - mean;
            cov += d * d.transpose();
        }
        cov /= n - 1.0;
        let cov = (cov + cov.transpose()) * 0.5;
        WindModel {
            mean,
            covariance: cov,
        }
    }

    /// Reads a trace from a `t,wx,wy,wz` CSV file.
    pub fn read_csv(path: &Path) -> Result<Self, WindError> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, WindError> {
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if i == 0 {
                let header: Vec<&str> = line.split(',').map(str::trim).collect();
                if header != ["t", "wx", "wy", "wz"] {
                    return Err(WindError::Parse {
                        line: 1,
                        reason: format!("expected header `t,wx,wy,wz`, got `{line}`"),
                    });
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(WindError::Parse {
                    line: i + 1,
                    reason: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let mut vals = [0.0; 4];
            for (j, f) in fields.iter().enumerate() {
                vals[j] = f.parse::<f64>().map_err(|e| WindError::Parse {
                    line: i + 1,
                    reason: format!("bad number `{f}`: {e}"),
                })?;
            }
            times.push(vals[0]);
            samples.push(Vector3::new(vals[1], vals[2], vals[3]));
        }
        Self::new(times, samples).map_err(|e| match e {
            WindError::NonMonotoneTimes(i) => WindError::Parse {
                line: i + 2,
                reason: "times not strictly increasing".into(),
            },
            other => other,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), WindError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "t,wx,wy,wz")?;
        for (t, s) in self.times.iter().zip(&self.samples) {
            writeln!(f, "{t},{},{},{}", s.x, s.y, s.z)?;
        }
        Ok(())
    }
}

/// Where simulated wind comes from.
#[derive(Debug, Clone)]
pub enum WindSource {
    /// Synthesize from a Gaussian model; `seed` is the default stream seed
    /// used when a run seed is not supplied externally.
    Gaussian { model: WindModel, seed: u64 },
    /// Replay a recorded trace with the given interpolation mode.
    Replay { trace: WindTrace, interp: Interp },
}

impl WindSource {
    /// Mean wind used for linearization and reference construction.
    pub fn mean(&self) -> Vector3<f64> {
        match self {
            WindSource::Gaussian { model, .. } => model.mean(),
            WindSource::Replay { trace, .. } => trace.estimate_stats().mean(),
        }
    }

    /// Turbulence covariance used as the controller's `W`.
    pub fn covariance(&self) -> Matrix3<f64> {
        match self {
            WindSource::Gaussian { model, .. } => model.covariance(),
            WindSource::Replay { trace, .. } => trace.estimate_stats().covariance(),
        }
    }
}

impl fmt::Display for WindModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mean     [{:.6}, {:.6}, {:.6}] m/s",
            self.mean.x, self.mean.y, self.mean.z
        )?;
        for i in 0..3 {
            writeln!(
                f,
                "cov[{i}]   [{:.6}, {:.6}, {:.6}] m^2/s^2",
                self.covariance[(i, 0)],
                self.covariance[(i, 1)],
                self.covariance[(i, 2)]
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_knot_trace() -> WindTrace {
        WindTrace::new(
            vec![0.0, 1.0],
            vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(3.0, 0.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn degenerate_covariance_returns_mean_exactly() {
        let model = WindModel::new(Vector3::new(2.72, 1.752, -0.006), Matrix3::zeros()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = sample_gaussian(&model, &mut rng).unwrap();
        assert_eq!(v, Vector3::new(2.72, 1.752, -0.006));
    }

    #[test]
    fn sample_mean_converges_by_law_of_large_numbers() {
        let model = WindModel::new(Vector3::zeros(), Matrix3::identity()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let l = model.factor().unwrap();
        let n = 1_000_000;
        let mut acc = Vector3::zeros();
        for _ in 0..n {
            let z = Vector3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            acc += model.mean() + l * z;
        }
        let mean = acc / n as f64;
        for k in 0..3 {
            assert!(mean[k].abs() < 0.01, "axis {k} mean {}", mean[k]);
        }
    }

    #[test]
    fn sample_variance_matches_diagonal_covariance() {
        let target = Vector3::new(0.25, 0.09, 0.01);
        let model = WindModel::new(Vector3::zeros(), Matrix3::from_diagonal(&target)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = model.factor().unwrap();
        let n = 1_000_000;
        let mut sum = Vector3::zeros();
        let mut sum_sq = Vector3::zeros();
        for _ in 0..n {
            let z = Vector3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let v = l * z;
            sum += v;
            sum_sq += v.component_mul(&v);
        }
        let nf = n as f64;
        for k in 0..3 {
            let var = sum_sq[k] / nf - (sum[k] / nf).powi(2);
            let rel = (var - target[k]).abs() / target[k];
            assert!(rel < 0.05, "axis {k} variance {var} vs {}", target[k]);
        }
    }

    #[test]
    fn non_psd_covariance_rejected() {
        let cov = Matrix3::from_diagonal(&Vector3::new(1.0, -0.5, 1.0));
        assert!(matches!(
            WindModel::new(Vector3::zeros(), cov),
            Err(WindError::InvalidModel { .. })
        ));
    }

    #[test]
    fn identical_seeds_yield_identical_sequences() {
        let model = WindModel::new(
            Vector3::new(1.0, -2.0, 0.5),
            Matrix3::from_diagonal(&Vector3::new(0.5, 0.3, 0.05)),
        )
        .unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(123);
        let mut b = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..100 {
            let va = sample_gaussian(&model, &mut a).unwrap();
            let vb = sample_gaussian(&model, &mut b).unwrap();
            assert_eq!(va, vb);
        }
    }

    #[test]
    fn lookup_linear_midpoint() {
        let trace = two_knot_trace();
        let v = trace.lookup(0.5, Interp::Linear).unwrap();
        assert!((v - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn lookup_zoh_holds_previous_sample() {
        let trace = two_knot_trace();
        let v = trace.lookup(0.5, Interp::ZeroOrderHold).unwrap();
        assert_eq!(v, Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn lookup_endpoint_both_modes() {
        let trace = two_knot_trace();
        for mode in [Interp::ZeroOrderHold, Interp::Linear] {
            let v = trace.lookup(1.0, mode).unwrap();
            assert_eq!(v, Vector3::new(3.0, 0.0, 0.0));
        }
    }

    #[test]
    fn lookup_rejects_out_of_range() {
        let trace = two_knot_trace();
        assert!(matches!(
            trace.lookup(-0.1, Interp::Linear),
            Err(WindError::OutOfRange { .. })
        ));
        assert!(matches!(
            trace.lookup(1.1, Interp::ZeroOrderHold),
            Err(WindError::OutOfRange { .. })
        ));
    }

    #[test]
    fn estimate_stats_constant_trace() {
        let trace = WindTrace::new(
            (0..10).map(|i| i as f64).collect(),
            vec![Vector3::new(5.0, 0.0, 0.0); 10],
        )
        .unwrap();
        let model = trace.estimate_stats();
        assert_eq!(model.mean(), Vector3::new(5.0, 0.0, 0.0));
        assert!(model.covariance().norm() < 1e-15);
    }

    #[test]
    fn estimate_stats_two_samples() {
        // ((1-2)^2 + (3-2)^2) / (N-1) = 2 on the x axis.
        let trace = two_knot_trace();
        let model = trace.estimate_stats();
        assert!((model.mean() - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-15);
        let expected = Matrix3::from_diagonal(&Vector3::new(2.0, 0.0, 0.0));
        assert!((model.covariance() - expected).norm() < 1e-15);
    }

    #[test]
    fn estimate_stats_round_trip_recovers_covariance() {
        let sigma = Matrix3::identity();
        let model = WindModel::new(Vector3::new(1.0, 2.0, 3.0), sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let mut times = Vec::with_capacity(n);
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            times.push(i as f64);
            samples.push(sample_gaussian(&model, &mut rng).unwrap());
        }
        let est = WindTrace::new(times, samples).unwrap().estimate_stats();
        // Mean within 3 sigma / sqrt(N) per axis.
        let tol = 3.0 / (n as f64).sqrt();
        for k in 0..3 {
            assert!((est.mean()[k] - model.mean()[k]).abs() < tol);
        }
        for k in 0..3 {
            let rel = (est.covariance()[(k, k)] - 1.0).abs();
            assert!(rel < 0.05, "diag {k}: {}", est.covariance()[(k, k)]);
        }
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = two_knot_trace();
        trace.write_csv(&path).unwrap();
        let back = WindTrace::read_csv(&path).unwrap();
        assert_eq!(trace, back);

        let bad = "time,wx,wy,wz\n0,1,0,0\n1,2,0,0\n";
        let err = WindTrace::read(std::io::Cursor::new(bad)).unwrap_err();
        assert!(matches!(err, WindError::Parse { line: 1, .. }));
    }

    #[test]
    fn csv_rejects_non_monotone_times() {
        let bad = "t,wx,wy,wz\n0,1,0,0\n2,2,0,0\n1,3,0,0\n";
        let err = WindTrace::read(std::io::Cursor::new(bad)).unwrap_err();
        assert!(matches!(err, WindError::Parse { line: 4, .. }));
    }

    proptest! {
        #[test]
        fn lookup_exact_at_knots(n in 2usize..20, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut times = Vec::new();
            let mut t = 0.0;
            let mut samples = Vec::new();
            for _ in 0..n {
                times.push(t);
                t += rng.random_range(0.1..2.0);
                samples.push(Vector3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                ));
            }
            let trace = WindTrace::new(times.clone(), samples.clone()).unwrap();
            for (tk, sk) in times.iter().zip(&samples) {
                let zoh = trace.lookup(*tk, Interp::ZeroOrderHold).unwrap();
                let lin = trace.lookup(*tk, Interp::Linear).unwrap();
                prop_assert!((zoh - sk).norm() < 1e-12);
                prop_assert!((lin - sk).norm() < 1e-12);
            }
        }
    }
}
