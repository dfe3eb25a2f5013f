//! Monte Carlo estimation of event probabilities and sup-norm means.
//!
//! Sample `i` of a run with seed `s` is always drawn from
//! `RandomStream::new(s, i)`, so results do not depend on the number of
//! worker threads. Indicator counts are reduced as integers; real-valued
//! statistics are collected in index order and summed with Neumaier
//! compensation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::FeatureTable;
use crate::field::KLField;
use crate::grid::GridBox;
use crate::kernel::{kernel_distance, kernel_seminorm, KernelSeminormSpec};
use crate::rng::RandomStream;

/// Smallest sample count accepted by the estimators.
pub const MIN_SAMPLES: usize = 100;

/// Default sample count used by the CLI.
pub const DEFAULT_SAMPLES: usize = 20_000;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// A deterministic predicate on sample paths, evaluated on the event's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSpec {
    /// `‖X‖_{box,r} < threshold`.
    SupNormBelow {
        #[serde(rename = "box")]
        grid: GridBox,
        #[serde(default)]
        order: usize,
        threshold: f64,
    },
    /// Number of zeros on the grid equals `count` (scalar fields on the line).
    ///
    /// Strict sign changes between neighbouring grid points count as one zero
    /// each; a grid value that is exactly 0 counts as a zero and restarts the
    /// sign scan.
    ZeroCountEquals {
        #[serde(rename = "box")]
        grid: GridBox,
        count: usize,
    },
    /// Every component is positive at every grid point.
    PositiveOnBox {
        #[serde(rename = "box")]
        grid: GridBox,
    },
    /// Some grid point has `|f| < value_eps` and `|f'| < deriv_eps`
    /// (scalar fields on the line): a near-degenerate zero.
    DegenerateZero {
        #[serde(rename = "box")]
        grid: GridBox,
        value_eps: f64,
        deriv_eps: f64,
    },
}

impl EventSpec {
    pub fn grid(&self) -> &GridBox {
        match self {
            Self::SupNormBelow { grid, .. }
            | Self::ZeroCountEquals { grid, .. }
            | Self::PositiveOnBox { grid }
            | Self::DegenerateZero { grid, .. } => grid,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SupNormBelow { .. } => "sup_norm_below",
            Self::ZeroCountEquals { .. } => "zero_count_equals",
            Self::PositiveOnBox { .. } => "positive_on_box",
            Self::DegenerateZero { .. } => "degenerate_zero",
        }
    }

    /// Tabulates the field for this event.
    pub fn compile(&self, field: &KLField) -> Result<CompiledEvent> {
        check_dim("event box dimension", field.m(), self.grid().dim())?;
        let scalar_line = |what: &str| {
            if field.m() == 1 && field.k() == 1 {
                Ok(())
            } else {
                Err(Error::InvalidEvent(format!(
                    "{what} needs a scalar field on the line, got m = {}, k = {}",
                    field.m(),
                    field.k()
                )))
            }
        };
        let r = match self {
            Self::SupNormBelow { order, .. } => *order,
            Self::ZeroCountEquals { .. } => {
                scalar_line("zero_count_equals")?;
                0
            }
            Self::PositiveOnBox { .. } => 0,
            Self::DegenerateZero { .. } => {
                scalar_line("degenerate_zero")?;
                1
            }
        };
        Ok(CompiledEvent {
            spec: self.clone(),
            table: field.feature_table(self.grid(), r)?,
        })
    }
}

/// An event with the field's derivatives tabulated on the event grid.
pub struct CompiledEvent {
    spec: EventSpec,
    table: FeatureTable,
}

impl CompiledEvent {
    pub fn occurs(&self, coeffs: &[f64]) -> bool {
        let t = &self.table;
        match &self.spec {
            EventSpec::SupNormBelow { threshold, .. } => t.path_sup(coeffs) < *threshold,
            EventSpec::ZeroCountEquals { count, .. } => {
                let mut buf = [0.0];
                let values = (0..t.n_points).map(|x| {
                    t.combine_at(coeffs, x, &mut buf);
                    buf[0]
                });
                count_zeros(values) == *count
            }
            EventSpec::PositiveOnBox { .. } => {
                let mut buf = vec![0.0; t.block()];
                (0..t.n_points).all(|x| {
                    t.combine_at(coeffs, x, &mut buf);
                    buf.iter().all(|v| *v > 0.0)
                })
            }
            EventSpec::DegenerateZero {
                value_eps,
                deriv_eps,
                ..
            } => {
                let mut buf = [0.0; 2];
                (0..t.n_points).any(|x| {
                    t.combine_at(coeffs, x, &mut buf);
                    buf[0].abs() < *value_eps && buf[1].abs() < *deriv_eps
                })
            }
        }
    }
}

/// Zeros of a sampled scalar function, counted as described on
/// [`EventSpec::ZeroCountEquals`].
pub fn count_zeros(values: impl IntoIterator<Item = f64>) -> usize {
    let mut count = 0;
    let mut prev: Option<bool> = None;
    for v in values {
        if v == 0.0 {
            count += 1;
            prev = None;
            continue;
        }
        let positive = v > 0.0;
        if prev.is_some_and(|p| p != positive) {
            count += 1;
        }
        prev = Some(positive);
    }
    count
}

/// A Monte Carlo estimate with a 95% normal-approximation interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    /// Probability for indicator statistics, mean otherwise.
    pub p_hat: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub ci95: [f64; 2],
}

impl MCEstimate {
    /// `p̂ = hits / n`, `stderr = √(p̂(1 − p̂)/n)`, interval clamped to `[0, 1]`.
    pub fn from_count(hits: usize, n_samples: usize, seed: u64) -> Self {
        let n = n_samples as f64;
        let p_hat = hits as f64 / n;
        let stderr = (p_hat * (1.0 - p_hat) / n).sqrt();
        Self {
            p_hat,
            stderr,
            n_samples,
            seed,
            ci95: [
                (p_hat - Z95 * stderr).max(0.0),
                (p_hat + Z95 * stderr).min(1.0),
            ],
        }
    }

    /// Sample mean with `stderr = s/√n` from the unbiased sample variance.
    pub fn from_values(values: &[f64], seed: u64) -> Self {
        let n = values.len() as f64;
        let mean = neumaier_sum(values.iter().copied()) / n;
        let var = if values.len() > 1 {
            neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0)
        } else {
            0.0
        };
        let stderr = (var / n).sqrt();
        Self {
            p_hat: mean,
            stderr,
            n_samples: values.len(),
            seed,
            ci95: [mean - Z95 * stderr, mean + Z95 * stderr],
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci95[0] <= value && value <= self.ci95[1]
    }
}

pub(crate) fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    Ok(())
}

/// Fraction of `n_samples` independent paths for which `event` occurs.
pub fn estimate_probability(
    field: &KLField,
    event: &EventSpec,
    n_samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    check_samples(n_samples)?;
    let compiled = event.compile(field)?;
    let hits = (0..n_samples as u64)
        .into_par_iter()
        .filter(|&i| compiled.occurs(&field.sample_coeffs(&mut RandomStream::new(seed, i))))
        .count();
    Ok(MCEstimate::from_count(hits, n_samples, seed))
}

/// Per-sample values of `‖X‖_{box,r}`, in sample-index order.
pub fn sup_norm_samples(
    field: &KLField,
    grid: &GridBox,
    r: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let table = field.feature_table(grid, r)?;
    Ok((0..n_samples as u64)
        .into_par_iter()
        .map(|i| table.path_sup(&field.sample_coeffs(&mut RandomStream::new(seed, i))))
        .collect())
}

/// Monte Carlo mean of `‖X‖_{box,r}`.
pub fn empirical_sup_mean(
    field: &KLField,
    grid: &GridBox,
    r: usize,
    n_samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    check_samples(n_samples)?;
    let values = sup_norm_samples(field, grid, r, n_samples, seed)?;
    Ok(MCEstimate::from_values(&values, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianRatio {
    /// `E‖X‖_{box,r−1} / √‖K‖_{(r,r)}`; 0 when the denominator vanishes.
    pub ratio: f64,
    pub sup_mean: MCEstimate,
    pub kernel_seminorm: f64,
    /// Set when `‖K‖_{(r,r)} = 0` and the ratio was defined as 0.
    pub zero_kernel: bool,
}

/// Ratio of the Monte Carlo mean sup norm at order `r − 1` to the square root
/// of the kernel seminorm at order `(r, r)`. Bounded uniformly over fields by
/// a constant depending only on the box and `r`.
pub fn gaussian_ratio(
    field: &KLField,
    grid: &GridBox,
    r: usize,
    n_samples: usize,
    seed: u64,
) -> Result<GaussianRatio> {
    if r == 0 {
        return Err(Error::InvalidParameter("gaussian_ratio needs r >= 1".into()));
    }
    let sup_mean = empirical_sup_mean(field, grid, r - 1, n_samples, seed)?;
    let seminorm = kernel_seminorm(field, &KernelSeminormSpec::new(grid.clone(), r))?;
    let zero_kernel = seminorm == 0.0;
    let ratio = if zero_kernel {
        0.0
    } else {
        sup_mean.p_hat / seminorm.sqrt()
    };
    Ok(GaussianRatio {
        ratio,
        sup_mean,
        kernel_seminorm: seminorm,
        zero_kernel,
    })
}

/// A sequence of fields approaching a limit field, with the event whose
/// probability is tracked along the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitStudy {
    pub fields: Vec<KLField>,
    pub limit: KLField,
    pub event: EventSpec,
    /// Box for the kernel distances.
    #[serde(rename = "box")]
    pub grid: GridBox,
    /// Event smoothness order `r`; kernel distances are measured at
    /// `(r + 2, r + 2)` unless `kernel_order` overrides it.
    #[serde(default)]
    pub r: usize,
    #[serde(default)]
    pub kernel_order: Option<usize>,
}

impl LimitStudy {
    pub fn distance_order(&self) -> usize {
        self.kernel_order.unwrap_or(self.r + 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRow {
    /// Position in the sequence; `None` for the limit field.
    pub index: Option<usize>,
    pub kernel_distance: f64,
    pub estimate: MCEstimate,
}

/// One row per field of the sequence plus a final row for the limit field.
///
/// The event's boundary must carry no mass under the limit law for the
/// estimates to converge; for sup-norm events any positive threshold works
/// when the limit field is non-degenerate.
pub fn limit_study(study: &LimitStudy, n_samples: usize, seed: u64) -> Result<Vec<LimitRow>> {
    let (m, k) = (study.limit.m(), study.limit.k());
    for f in &study.fields {
        check_dim("limit study domain", m, f.m())?;
        check_dim("limit study output", k, f.k())?;
    }
    let spec = KernelSeminormSpec::new(study.grid.clone(), study.distance_order());
    let mut rows = Vec::with_capacity(study.fields.len() + 1);
    for (i, f) in study.fields.iter().enumerate() {
        rows.push(LimitRow {
            index: Some(i),
            kernel_distance: kernel_distance(f, &study.limit, &spec)?,
            estimate: estimate_probability(f, &study.event, n_samples, seed)?,
        });
    }
    rows.push(LimitRow {
        index: None,
        kernel_distance: 0.0,
        estimate: estimate_probability(&study.limit, &study.event, n_samples, seed)?,
    });
    Ok(rows)
}
