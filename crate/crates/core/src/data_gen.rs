//! Synthetic regression data under a designated true model.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::model_space::ModelSpec;

/// Factor levels are integers `1..=LEVELS`.
pub const LEVELS: u32 = 100;

/// Mean of the uniform distribution on `1..=LEVELS`.
pub const LEVEL_MEAN: f64 = (LEVELS as f64 + 1.0) / 2.0;

/// Everything that defines the data-generating process except the
/// coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthSpec {
    pub true_model: ModelSpec,
    pub k: usize,
    /// Sample size per dataset.
    pub n: usize,
    /// Noise fraction `f`: noise variance `f` against model expectation
    /// `1 - f` at the mean predictor vector.
    pub sigma_level: f64,
    /// Target Pearson correlation between `x1` and every other factor.
    pub correlation: f64,
    pub signal: SignalScale,
}

/// Scale of the deterministic part relative to the noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SignalScale {
    /// Model expectation at the mean predictors rescaled to `1 - f`, noise
    /// variance `f`.
    #[default]
    Normalized,
    /// Coefficients act on raw factor levels; noise variance is
    /// `E(y | mean predictors) * f / (1 - f)`.
    Raw,
}

impl core::str::FromStr for SignalScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<SignalScale> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normalized" => Ok(SignalScale::Normalized),
            "raw" => Ok(SignalScale::Raw),
            _ => Err(Error::config("signal scale must be normalized or raw")),
        }
    }
}

impl TruthSpec {
    pub fn new(true_model: ModelSpec, k: usize, n: usize, sigma_level: f64, correlation: f64) -> TruthSpec {
        TruthSpec {
            true_model,
            k,
            n,
            sigma_level,
            correlation,
            signal: SignalScale::Normalized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.true_model.is_valid() || self.true_model.max_factor() > self.k {
            return Err(Error::config("true model is not a member of the model space"));
        }
        if !(self.sigma_level > 0.0 && self.sigma_level < 1.0) {
            return Err(Error::config("sigma level must lie in (0, 1)"));
        }
        if !(0.0..0.9).contains(&self.correlation) {
            return Err(Error::config("correlation must lie in [0, 0.9)"));
        }
        if self.n < self.k + 2 {
            return Err(Error::config("sample size must be at least k + 2"));
        }
        // every fitted model needs n > p
        if self.n <= (1 << self.k) {
            return Err(Error::config("sample size too small for the largest model"));
        }
        Ok(())
    }

    /// Stable 64-bit digest used to derive random streams.
    pub fn fingerprint(&self) -> u64 {
        use crate::rng::mix;
        let mut h = mix(u64::from(self.true_model.bits()), self.k as u64);
        h = mix(h, self.n as u64);
        h = mix(h, self.sigma_level.to_bits());
        h = mix(h, self.correlation.to_bits());
        match self.signal {
            SignalScale::Normalized => h,
            SignalScale::Raw => mix(h, 1),
        }
    }
}

/// A [`TruthSpec`] with coefficients drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub spec: TruthSpec,
    /// One coefficient per term of the true model, in canonical term order.
    pub beta: Vec<f64>,
}

/// Raw factor values, column-major `n x k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictors {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl Predictors {
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Predictors> {
        let k = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if k == 0 || n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::config("predictor columns must be nonempty and equally long"));
        }
        Ok(Predictors {
            n,
            k,
            data: columns.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Column of factor `factor` (1-based).
    pub fn column(&self, factor: usize) -> &[f64] {
        &self.data[(factor - 1) * self.n..factor * self.n]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Predictors,
    /// Standardized response: sample mean 0, sample sd 1.
    pub y: Vec<f64>,
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Latent Gaussian correlation whose copula yields Pearson correlation
/// `target` between uniform marginals: `r = (6/pi) asin(rho/2)`.
pub fn latent_correlation(target: f64) -> f64 {
    2.0 * libm::sin(PI * target / 6.0)
}

fn to_level(z: f64) -> f64 {
    let level = libm::floor(f64::from(LEVELS) * normal_cdf(z)) + 1.0;
    level.clamp(1.0, f64::from(LEVELS))
}

/// Draws an `n x k` matrix of integer levels. Every column is uniform on
/// `1..=100`; columns `2..=k` are tied to column 1 through a Gaussian copula.
pub fn gen_predictors<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    correlation: f64,
    rng: &mut R,
) -> Result<Predictors> {
    if k == 0 || n < k + 2 {
        return Err(Error::config("need k >= 1 and n >= k + 2"));
    }
    if !(0.0..0.9).contains(&correlation) {
        return Err(Error::config("correlation must lie in [0, 0.9)"));
    }
    let rho = latent_correlation(correlation);
    let resid = libm::sqrt(1.0 - rho * rho);
    let mut data = alloc::vec![0.0; n * k];
    for i in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        data[i] = to_level(z1);
        for j in 1..k {
            let e: f64 = rng.sample(StandardNormal);
            data[j * n + i] = to_level(rho * z1 + resid * e);
        }
    }
    Ok(Predictors { n, k, data })
}

/// Dirichlet(1, ..., 1) coefficients, one per term of `true_model`.
pub fn gen_coefficients<R: Rng + ?Sized>(true_model: ModelSpec, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..true_model.p())
        .map(|_| Exp1.sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Product of the raw factor columns in `term`, row by row.
pub(crate) fn term_values(x: &Predictors, mask: u8, out: &mut [f64]) {
    out.fill(1.0);
    for f in 1..=x.k() {
        if mask & (1 << (f - 1)) != 0 {
            for (o, v) in out.iter_mut().zip(x.column(f)) {
                *o *= v;
            }
        }
    }
}

/// Rescales `y` in place to sample mean 0 and sample sd 1.
pub fn standardize(y: &mut [f64]) -> Result<()> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter_mut().for_each(|v| *v -= mean);
    let var = y.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Generation("response has zero variance".into()));
    }
    let sd = libm::sqrt(var);
    y.iter_mut().for_each(|v| *v /= sd);
    Ok(())
}

/// Builds the standardized response for `x` under `truth`.
///
/// Noise and signal are set so that noise variance over model expectation
/// at the mean predictor vector is `f : 1 - f` (see [`SignalScale`]);
/// the response is standardized afterwards.
pub fn gen_response<R: Rng + ?Sized>(
    x: Predictors,
    truth: &GroundTruth,
    rng: &mut R,
) -> Result<Dataset> {
    let spec = &truth.spec;
    if x.k() != spec.k || x.n() != spec.n {
        return Err(Error::config("predictor dimensions do not match the truth"));
    }
    let terms = spec.true_model.terms();
    if terms.len() != truth.beta.len() {
        return Err(Error::config("one coefficient per true-model term required"));
    }
    let n = x.n();
    let mut det = alloc::vec![0.0; n];
    let mut buf = alloc::vec![0.0; n];
    let mut at_mean = 0.0;
    for (t, &b) in terms.iter().zip(&truth.beta) {
        term_values(&x, t.mask(), &mut buf);
        for (d, v) in det.iter_mut().zip(&buf) {
            *d += b * v;
        }
        at_mean += b * libm::pow(LEVEL_MEAN, f64::from(t.order()));
    }
    let det_mean = det.iter().sum::<f64>() / n as f64;
    let det_var = det.iter().map(|d| (d - det_mean) * (d - det_mean)).sum::<f64>();
    if !(det_var > 0.0) || !(at_mean > 0.0) {
        return Err(Error::Generation("deterministic part has zero variance".into()));
    }
    let f = spec.sigma_level;
    let (scale, noise_sd) = match spec.signal {
        SignalScale::Normalized => ((1.0 - f) / at_mean, libm::sqrt(f)),
        SignalScale::Raw => (1.0, libm::sqrt(at_mean * f / (1.0 - f))),
    };
    let mut y: Vec<f64> = det
        .iter()
        .map(|d| {
            let e: f64 = rng.sample(StandardNormal);
            scale * d + noise_sd * e
        })
        .collect();
    standardize(&mut y)?;
    Ok(Dataset { x, y })
}

/// Fresh predictors and response for one experiment.
pub fn gen_dataset<R: Rng + ?Sized>(truth: &GroundTruth, rng: &mut R) -> Result<Dataset> {
    let x = gen_predictors(truth.spec.n, truth.spec.k, truth.spec.correlation, rng)?;
    gen_response(x, truth, rng)
}

impl GroundTruth {
    /// Draws coefficients for `spec`.
    pub fn draw<R: Rng + ?Sized>(spec: TruthSpec, rng: &mut R) -> Result<GroundTruth> {
        spec.validate()?;
        let beta = gen_coefficients(spec.true_model, rng);
        Ok(GroundTruth { spec, beta })
    }
}
