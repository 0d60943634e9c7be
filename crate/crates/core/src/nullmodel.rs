//! Autocovariance null model, surrogate labelings and the test statistics
//! built on them.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSequence;
use crate::seed::{derive_seed, rng_from_seed};

/// Eigenvalue floor applied when repairing an indefinite covariance matrix.
pub const REPAIR_EPSILON: f64 = 1e-10;
pub const DEFAULT_NULL_DRAWS: usize = 1000;
/// Normal quantile for a two-sided 95% interval.
pub const WILSON_Z: f64 = 1.96;
/// Surrogate values above this threshold become label 1.
pub const LABEL_THRESHOLD: f64 = 0.5;

/// Mean label value and the linearly decaying autocovariance at every lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovarianceModel {
    acov: Vec<f64>,
    mean: f64,
}

impl AutocovarianceModel {
    /// Builds a model from precomputed lags. `acov[0]` is the variance.
    pub fn from_parts(acov: Vec<f64>, mean: f64) -> Result<Self> {
        if acov.is_empty() {
            return Err(Error::Contract("autocovariance vector is empty".into()));
        }
        if !mean.is_finite() || acov.iter().any(|a| !a.is_finite()) {
            return Err(Error::Contract("autocovariance model is not finite".into()));
        }
        Ok(AutocovarianceModel { acov, mean })
    }

    pub fn acov(&self) -> &[f64] {
        &self.acov
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn len(&self) -> usize {
        self.acov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acov.is_empty()
    }
}

/// Lag-wise autocovariance of `labels`, each lag summed over its `m - lag`
/// products and divided by `m`.
pub fn autocovariance(labels: &LabelSequence) -> Result<AutocovarianceModel> {
    let m = labels.len();
    if m < 2 {
        return Err(Error::Contract(format!(
            "autocovariance needs at least 2 labels, got {m}"
        )));
    }
    let x: Vec<f64> = labels.as_slice().iter().map(|&l| f64::from(l)).collect();
    let mean = x.iter().sum::<f64>() / m as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let acov = (0..m)
        .map(|lag| {
            let mut s = 0.0;
            for j in 0..m - lag {
                s += dev[j] * dev[j + lag];
            }
            s / m as f64
        })
        .collect();
    Ok(AutocovarianceModel { acov, mean })
}

pub fn toeplitz(model: &AutocovarianceModel) -> DMatrix<f64> {
    let m = model.len();
    DMatrix::from_fn(m, m, |i, j| model.acov[i.abs_diff(j)])
}

/// Gaussian surrogate generator with covariance equal to a PSD-repaired
/// Toeplitz autocovariance matrix.
#[derive(Debug, Clone)]
pub struct NullSampler {
    mean: f64,
    factor: DMatrix<f64>,
    packed: Vec<f64>,
    repair_log: f64,
}

impl NullSampler {
    /// Convenience path: autocovariance, Toeplitz matrix, factorization.
    pub fn fit(labels: &LabelSequence) -> Result<Self> {
        let model = autocovariance(labels)?;
        make_sampler(&toeplitz(&model), model.mean())
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.factor.nrows() == 0
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Lower-triangular factor `F` with `F Fᵀ` equal to the repaired matrix.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Largest entrywise change made to the input matrix.
    pub fn repair_log(&self) -> f64 {
        self.repair_log
    }

    /// One surrogate value vector `mean + F z`.
    pub fn draw_values<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.len();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = Vec::with_capacity(m);
        let mut offset = 0;
        for i in 0..m {
            let row = &self.packed[offset..offset + i + 1];
            let dot: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
            out.push(self.mean + dot);
            offset += i + 1;
        }
        out
    }
}

/// Eigenvalue-clips `matrix`, then Cholesky-factors the result.
pub fn make_sampler(matrix: &DMatrix<f64>, mean: f64) -> Result<NullSampler> {
    let m = matrix.nrows();
    if m == 0 || matrix.ncols() != m {
        return Err(Error::Contract(format!(
            "covariance matrix must be square and non-empty, got {}x{}",
            m,
            matrix.ncols()
        )));
    }
    let scale = matrix.amax().max(1.0);
    for i in 0..m {
        for j in 0..i {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Contract(format!(
                    "covariance matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) || !mean.is_finite() {
        return Err(Error::Contract("covariance matrix is not finite".into()));
    }

    let eigen = SymmetricEigen::new(matrix.clone());
    let clipped = eigen.eigenvalues.map(|l| l.max(REPAIR_EPSILON));
    let vectors = &eigen.eigenvectors;
    let rebuilt = vectors * DMatrix::from_diagonal(&clipped) * vectors.transpose();
    let mut repaired = (&rebuilt + rebuilt.transpose()) * 0.5;

    let mut jitter = 0.0;
    let factor = loop {
        if let Some(ch) = Cholesky::new(repaired.clone()) {
            break ch.l();
        }
        let step = if jitter == 0.0 { REPAIR_EPSILON } else { jitter * 10.0 };
        for i in 0..m {
            repaired[(i, i)] += step - jitter;
        }
        jitter = step;
        log::warn!("cholesky failed after eigenvalue repair, adding diagonal jitter {jitter:e}");
        if jitter > scale {
            return Err(Error::Contract("covariance matrix could not be factored".into()));
        }
    };

    let repair_log = (&repaired - matrix).amax();
    let mut packed = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in 0..=i {
            packed.push(factor[(i, j)]);
        }
    }
    Ok(NullSampler {
        mean,
        factor,
        packed,
        repair_log,
    })
}

/// Surrogate labeling: threshold one Gaussian draw at 0.5.
pub fn draw_null(sampler: &NullSampler, seed: u64) -> LabelSequence {
    let mut rng = rng_from_seed(seed);
    LabelSequence::from_bools(
        sampler
            .draw_values(&mut rng)
            .into_iter()
            .map(|x| x > LABEL_THRESHOLD),
    )
}

/// Confusion counts of `labels` against `reference`, label 1 positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn count(labels: &LabelSequence, reference: &LabelSequence) -> Result<Self> {
        if labels.len() != reference.len() {
            return Err(Error::Contract(format!(
                "label lengths differ: {} vs {}",
                labels.len(),
                reference.len()
            )));
        }
        let mut c = Confusion::default();
        for (&l, &r) in labels.as_slice().iter().zip(reference.as_slice()) {
            match (l, r) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fp += 1,
                _ => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (self.tp, self.tn, self.fp, self.fn_);
        let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        if factors.contains(&0) {
            return 0.0;
        }
        let num = (tn * tp) as f64 - (fn_ * fp) as f64;
        let den: u128 = factors.iter().map(|&v| u128::from(v)).product();
        num / (den as f64).sqrt()
    }
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(labels: &LabelSequence, reference: &LabelSequence) -> Result<f64> {
    Ok(Confusion::count(labels, reference)?.mcc())
}

/// Maps an MCC to the 50..100 percent scale, ignoring label identity.
pub fn normalized_mcc(v: f64) -> f64 {
    50.0 * (1.0 + v.abs())
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub observed_mcc_norm: f64,
    pub p_value: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub n_draws: usize,
    pub exceedances: usize,
}

/// Monte Carlo p-value of the normalized MCC between `observed` and
/// `reference`, against surrogates drawn from `sampler`.
pub fn p_value(
    observed: &LabelSequence,
    reference: &LabelSequence,
    sampler: &NullSampler,
    n_draws: usize,
    seed: u64,
) -> Result<TestResult> {
    if n_draws < 1 {
        return Err(Error::Config("null_draws must be at least 1".into()));
    }
    if observed.len() != sampler.len() {
        return Err(Error::Contract(format!(
            "sampler has length {}, labels have {}",
            sampler.len(),
            observed.len()
        )));
    }
    let s_obs = normalized_mcc(mcc(observed, reference)?);
    let exceedances = (0..n_draws as u64)
        .into_par_iter()
        .map(|k| {
            let null = draw_null(sampler, derive_seed(seed, &[k]));
            let s = normalized_mcc(mcc(&null, reference)?);
            Ok(usize::from(s >= s_obs))
        })
        .sum::<Result<usize>>()?;
    let (wilson_lo, wilson_hi) = wilson(exceedances, n_draws, WILSON_Z);
    Ok(TestResult {
        observed_mcc_norm: s_obs,
        p_value: (1 + exceedances) as f64 / (n_draws + 1) as f64,
        wilson_lo,
        wilson_hi,
        n_draws,
        exceedances,
    })
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_fdr(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("p-value {bad} outside [0, 1]")));
    }
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; n];
    let mut running = 1.0_f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        let q = p[i] * (n as f64 / (rank + 1) as f64);
        running = running.min(q);
        adjusted[i] = running;
    }
    Ok(adjusted)
}
