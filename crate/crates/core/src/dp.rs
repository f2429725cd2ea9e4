//! Gaussian-mechanism mathematics: sensitivity, noise calibration, sampling
//! and an exact check of the (ε, δ) inequality.
//!
//! Everything here is pure. Randomness comes from a caller-owned
//! [`NoiseSource`].
//!
//! Neighboring datasets differ by adding or removing one record, so a
//! query's sensitivity is the largest change a single row can make to it.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::query::{QueryDescriptor, QueryError, QueryKind};

/// Largest accepted δ. Keeps `ln(1.25/δ)` comfortably positive.
pub const MAX_DELTA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("delta must lie in (0, {MAX_DELTA}], got {0}")]
    Delta(f64),
    #[error("sensitivity must be finite and non-negative, got {0}")]
    Sensitivity(f64),
    #[error("sigma must be finite and non-negative, got {0}")]
    Sigma(f64),
    #[error("column {name:?}: bounds must be finite with lo <= hi, got [{lo}, {hi}]")]
    Bounds { name: String, lo: f64, hi: f64 },
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
}

/// Requested privacy level for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, ParamError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(ParamError::Epsilon(epsilon));
        }
        if !(delta > 0.0 && delta <= MAX_DELTA) {
            return Err(ParamError::Delta(delta));
        }
        Ok(PrivacyParams { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// ΔQ, in the query's output units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Sensitivity(f64);

impl Sensitivity {
    pub fn new(value: f64) -> Result<Self, ParamError> {
        if value.is_finite() && value >= 0.0 {
            Ok(Sensitivity(value))
        } else {
            Err(ParamError::Sensitivity(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Standard deviation of injected noise, in the query's output units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Sigma(f64);

impl Sigma {
    pub fn new(value: f64) -> Result<Self, ParamError> {
        if value.is_finite() && value >= 0.0 {
            Ok(Sigma(value))
        } else {
            Err(ParamError::Sigma(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl Column {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Column {
            name: name.into(),
            lo,
            hi,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Ordered numeric columns with declared bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self, ParamError> {
        for (i, c) in columns.iter().enumerate() {
            if !(c.lo.is_finite() && c.hi.is_finite() && c.lo <= c.hi) {
                return Err(ParamError::Bounds {
                    name: c.name.clone(),
                    lo: c.lo,
                    hi: c.hi,
                });
            }
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(ParamError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Closed-form ΔQ under add/remove-one-record neighbors.
///
/// `COUNT` → 1, `SUM(c)` → `max(|lo|, |hi|)`, `MEAN(c)` → `(hi - lo) / n_public`.
/// The MEAN bound treats the dataset size as public and is an approximation:
/// it ignores the change in denominator when a row is added or removed.
pub fn sensitivity_of(
    desc: &QueryDescriptor,
    schema: &Schema,
    n_public: u64,
) -> Result<Sensitivity, QueryError> {
    desc.validate(schema)?;
    let bounds = || {
        let name = desc.column.as_deref().expect("validated");
        schema.column(name).expect("validated")
    };
    let value = match desc.kind {
        QueryKind::Count => 1.0,
        QueryKind::Sum => {
            let c = bounds();
            c.lo.abs().max(c.hi.abs())
        }
        QueryKind::Mean => {
            if n_public == 0 {
                return Err(QueryError::EmptyPublicSize);
            }
            let c = bounds();
            (c.hi - c.lo) / n_public as f64
        }
    };
    Ok(Sensitivity(value))
}

/// `sqrt(2 ln(1.25/δ))`, the multiplier that turns ΔQ/ε into σ.
pub fn calibration_factor(delta: f64) -> f64 {
    (2.0 * (1.25 / delta).ln()).sqrt()
}

/// σ = sqrt(2 ln(1.25/δ)) · ΔQ / ε.
pub fn compute_sigma(params: PrivacyParams, sens: Sensitivity) -> Sigma {
    Sigma(calibration_factor(params.delta) * sens.0 / params.epsilon)
}

/// Inverse of [`compute_sigma`] in ε: the ε whose calibrated noise at this δ is `sigma`.
pub fn epsilon_for_sigma(delta: f64, sens: Sensitivity, sigma: f64) -> f64 {
    if sens.0 == 0.0 {
        return 0.0;
    }
    calibration_factor(delta) * sens.0 / sigma
}

/// Source of standard normal draws.
///
/// Every [`RngCore`] is a source, sampled with the Marsaglia polar method:
/// draw `u, v` uniform on `[-1, 1)` until `0 < s = u² + v² < 1`, then return
/// `u · sqrt(-2 ln s / s)`. The paired value is discarded so each call
/// consumes a whole number of rejection rounds, which keeps streams stable.
pub trait NoiseSource {
    fn standard_normal(&mut self) -> f64;
}

impl<R: RngCore + ?Sized> NoiseSource for R {
    fn standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.random::<f64>() - 1.0;
            let v = 2.0 * self.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }
}

/// `true_value + z`, with `z ~ N(0, sigma²)`.
pub fn gaussian_mechanism<N: NoiseSource + ?Sized>(
    true_value: f64,
    sigma: Sigma,
    rng: &mut N,
) -> f64 {
    true_value + sigma.0 * rng.standard_normal()
}

/// Pr[N(0, 1) >= x].
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Checks `Pr[Y(D) ∈ S] <= e^ε Pr[Y(D') ∈ S] + δ` with exact Gaussian tails.
///
/// `D` has true answer 0 and `D'` has true answer ΔQ. `S` ranges over the
/// threshold events `{y >= t}` and `{y <= t}` for every `t` in `grid`, in
/// both directions `D → D'` and `D' → D`. For two Gaussians with equal
/// variance the likelihood ratio is monotone in `y`, so the worst-case set
/// for any `(ε, δ)` pair is a threshold event and a fine grid is sufficient.
pub fn verify_dp_guarantee(
    params: PrivacyParams,
    sens: Sensitivity,
    sigma: Sigma,
    grid: &[f64],
) -> bool {
    let shift = sens.0;
    if shift == 0.0 {
        return true;
    }
    if sigma.0 == 0.0 {
        return false;
    }
    let bound = params.epsilon.exp();
    let delta = params.delta;
    let s = sigma.0;
    grid.iter().all(|&t| {
        let upper_d = normal_sf(t / s);
        let upper_n = normal_sf((t - shift) / s);
        let lower_d = normal_sf(-t / s);
        let lower_n = normal_sf((shift - t) / s);
        upper_d <= bound * upper_n + delta
            && upper_n <= bound * upper_d + delta
            && lower_d <= bound * lower_n + delta
            && lower_n <= bound * lower_d + delta
    })
}

/// `points` evenly spaced thresholds covering `[-10σ, ΔQ + 10σ]`.
pub fn threshold_grid(sens: Sensitivity, sigma: Sigma, points: usize) -> Vec<f64> {
    let lo = -10.0 * sigma.0;
    let hi = sens.0 + 10.0 * sigma.0;
    if points < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}
