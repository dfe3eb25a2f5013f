//! Bump-sum fields whose covariances vanish uniformly while the fields do not
//! converge to zero in law.
//!
//! `X_n = (1/a_n) Σ_{i ≤ n²} γ_i φ_i` with `n²` unit-peak bumps on disjoint
//! intervals and `P{|γ| > a_n} = 1/n`. Then `‖K_{X_n}‖_0 = 1/a_n² → 0` but
//! `P{‖X_n‖_0 < 1} = (1 − 1/n)^{n²} → 0`. The `r`-fold integrals `Y_n` carry
//! the same failure over to `C^{r,r}` kernel convergence.

use serde::Serialize;

use crate::basis::BasisFunction;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::field::{KLField, SamplePath};
use crate::grid::GridBox;
use crate::kernel::{kernel_seminorm, KernelSeminormSpec};
use crate::mc::{empirical_sup_mean, estimate_probability, EventSpec, MCEstimate};
use crate::report::field_digest;
use crate::special::normal_quantile;

/// Fraction of each cell left empty between neighbouring bump supports.
pub const GAP: f64 = 0.1;

/// Quadrature steps per box width for the iterated integrals.
pub const QUADRATURE_STEPS: usize = 4096;

/// Minimum grid resolution before alignment to the bump centres.
const MIN_RESOLUTION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleConfig {
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    /// Number of integrations `r` used for `Y_n`.
    pub integration_order: usize,
}

impl CounterexampleConfig {
    /// `X_n` on `[0, 1]`.
    pub fn new(n: usize) -> Result<Self> {
        Self::on_interval(n, 0.0, 1.0)
    }

    pub fn on_interval(n: usize, lower: f64, upper: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidParameter(format!(
                "invalid interval [{lower}, {upper}]"
            )));
        }
        Ok(Self {
            n,
            lower,
            upper,
            integration_order: 0,
        })
    }

    pub fn with_integration_order(mut self, r: usize) -> Self {
        self.integration_order = r;
        self
    }

    pub fn n_bumps(&self) -> usize {
        self.n * self.n
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// `x_i = lower + (i − ½) · width / n²`, `i = 1..n²`.
    pub fn centers(&self) -> Vec<f64> {
        let cells = self.n_bumps() as f64;
        (1..=self.n_bumps())
            .map(|i| self.lower + (i as f64 - 0.5) * self.width() / cells)
            .collect()
    }

    /// Half the cell width, shrunk by [`GAP`].
    pub fn radius(&self) -> f64 {
        self.width() / (2.0 * self.n_bumps() as f64) * (1.0 - GAP)
    }

    /// Grid whose resolution is the smallest multiple of `2n²` that is at
    /// least 256, so every bump centre is a grid point.
    pub fn grid(&self) -> GridBox {
        let step = 2 * self.n_bumps();
        let res = MIN_RESOLUTION.div_ceil(step) * step;
        GridBox::interval(self.lower, self.upper, res).expect("validated interval")
    }

    /// `c = lower − 0.1 · width`, outside the box.
    pub fn base_point(&self) -> f64 {
        self.lower - 0.1 * self.width()
    }
}

/// `a_n = Φ⁻¹(1 − 1/(2n))`, the level with `P{|γ| > a_n} = 1/n`.
pub fn a_n(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    normal_quantile(1.0 - 1.0 / (2.0 * n as f64))
}

/// `n²` unit bumps at the configured centres, all with `σ = 1/a_n`.
pub fn build_x_n(config: &CounterexampleConfig) -> Result<KLField> {
    let sigma = 1.0 / a_n(config.n)?;
    let radius = config.radius();
    let basis: Vec<BasisFunction> = config
        .centers()
        .into_iter()
        .map(|c| BasisFunction::bump(vec![c], radius, vec![1.0]))
        .collect();
    let n = basis.len();
    KLField::new(1, 1, basis, vec![sigma; n])
}

/// `(1 − 1/n)^{n²}`. With unit-peak bumps on disjoint supports
/// `‖X_n‖_0 = max_i |γ_i| / a_n`, so this is exactly `P{‖X_n‖_0 < 1}`.
pub fn exact_small_norm_prob(n: usize) -> f64 {
    let n = n as f64;
    (1.0 - 1.0 / n).powf(n * n)
}

/// `‖K_{X_n}‖_{(0,0)}` on each configuration's aligned grid.
pub fn kernel_sup_decay(n_values: &[usize]) -> Result<Vec<f64>> {
    n_values
        .iter()
        .map(|&n| {
            let config = CounterexampleConfig::new(n)?;
            let field = build_x_n(&config)?;
            kernel_seminorm(&field, &KernelSeminormSpec::new(config.grid(), 0))
        })
        .collect()
}

/// `P{‖X_n‖_0 < 1}` as an event on the aligned grid.
pub fn small_norm_event(config: &CounterexampleConfig) -> EventSpec {
    EventSpec::SupNormBelow {
        grid: config.grid(),
        order: 0,
        threshold: 1.0,
    }
}

/// A function tabulated at `start + i · step`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tabulation {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl Tabulation {
    pub fn x(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    /// Derivative of order `order` by repeated fourth-order central
    /// differences; each pass drops two points at either end.
    pub fn derivative(&self, order: usize) -> Tabulation {
        let mut t = self.clone();
        for _ in 0..order {
            let v = &t.values;
            let h = t.step;
            let values = if v.len() < 5 {
                Vec::new()
            } else {
                (2..v.len() - 2)
                    .map(|i| (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * h))
                    .collect()
            };
            t = Tabulation {
                start: t.start + 2.0 * h,
                step: h,
                values,
            };
        }
        t
    }
}

/// `Y(x) = ∫_c^x ∫_c^{s_r} … ∫_c^{s_2} X(s_1) ds_1 … ds_r` on
/// `c, c + h, …` up to the box's upper end, `h = width / 4096`.
///
/// Uses Cauchy's formula `Y(x) = 1/(r−1)! ∫_c^x (x − s)^{r−1} X(s) ds`,
/// expanded in powers of `x − c`, so every moment `∫_c^x (s − c)^j X(s) ds` is
/// a cumulative composite Simpson sum over exact path values.
pub fn integrate_path(path: &SamplePath, config: &CounterexampleConfig) -> Result<Tabulation> {
    let r = config.integration_order;
    if r == 0 {
        return Err(Error::InvalidParameter(
            "integration order must be at least 1".into(),
        ));
    }
    let field = path.field();
    if (field.m(), field.k()) != (1, 1) {
        return Err(Error::InvalidParameter(
            "iterated integrals need a scalar field on the line".into(),
        ));
    }
    let c = config.base_point();
    let h = config.width() / QUADRATURE_STEPS as f64;
    let steps = ((config.upper - c) / h).ceil() as usize;
    let fine = GridBox::interval(c, c + steps as f64 * h, 2 * steps)?;
    let table = FeatureTable::build(field.basis(), 1, 1, &fine, 0)?;
    let mut buf = [0.0];
    let xs: Vec<f64> = (0..=2 * steps)
        .map(|i| {
            table.combine_at(path.coeffs(), i, &mut buf);
            buf[0]
        })
        .collect();

    // moments[j][i] = ∫_c^{x_i} (s − c)^j X(s) ds
    let mut moments = vec![vec![0.0; steps + 1]; r];
    for (j, mom) in moments.iter_mut().enumerate() {
        let g = |idx: usize| {
            let u = idx as f64 * h / 2.0;
            u.powi(j as i32) * xs[idx]
        };
        for i in 0..steps {
            let add = h / 6.0 * (g(2 * i) + 4.0 * g(2 * i + 1) + g(2 * i + 2));
            mom[i + 1] = mom[i] + add;
        }
    }
    let fact: f64 = (1..r).map(|v| v as f64).product();
    let values = (0..=steps)
        .map(|i| {
            let dx = i as f64 * h;
            let mut y = 0.0;
            for (j, mom) in moments.iter().enumerate() {
                let binom = binomial(r - 1, j);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                y += sign * binom * dx.powi((r - 1 - j) as i32) * mom[i];
            }
            y / fact
        })
        .collect();
    Ok(Tabulation {
        start: c,
        step: h,
        values,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Sup over tabulation points inside the box of `|d^r Y/dx^r − X|`.
pub fn derivative_sup_error(
    path: &SamplePath,
    tab: &Tabulation,
    config: &CounterexampleConfig,
) -> Result<f64> {
    let d = tab.derivative(config.integration_order);
    let mut worst = 0.0f64;
    for (i, v) in d.values.iter().enumerate() {
        let x = d.x(i);
        if x < config.lower || x > config.upper {
            continue;
        }
        worst = worst.max((v - path.value(&[x])?[0]).abs());
    }
    Ok(worst)
}

/// One line of the counterexample report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub n: usize,
    pub a_n: f64,
    pub exact_prob: f64,
    pub mc_prob: f64,
    pub stderr: f64,
    pub ci95: [f64; 2],
    pub kernel_sup: f64,
    pub field_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub n_samples: usize,
    pub seed: u64,
    pub rows: Vec<CounterexampleRow>,
}

impl CounterexampleReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,a_n,exact_prob,mc_prob,stderr,ci95_lo,ci95_hi,kernel_sup,field_digest\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.n, r.a_n, r.exact_prob, r.mc_prob, r.stderr, r.ci95[0], r.ci95[1], r.kernel_sup, r.field_digest
            ));
        }
        out
    }
}

/// Builds `X_n` for each `n`, estimates `P{‖X_n‖_0 < 1}` and compares with the
/// closed form.
pub fn counterexample_report(n_values: &[usize], n_samples: usize, seed: u64) -> Result<CounterexampleReport> {
    let rows = n_values
        .iter()
        .map(|&n| {
            let config = CounterexampleConfig::new(n)?;
            let field = build_x_n(&config)?;
            let est: MCEstimate = estimate_probability(&field, &small_norm_event(&config), n_samples, seed)?;
            Ok(CounterexampleRow {
                n,
                a_n: a_n(n)?,
                exact_prob: exact_small_norm_prob(n),
                mc_prob: est.p_hat,
                stderr: est.stderr,
                ci95: est.ci95,
                kernel_sup: kernel_seminorm(&field, &KernelSeminormSpec::new(config.grid(), 0))?,
                field_digest: field_digest(&field),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CounterexampleReport {
        n_samples,
        seed,
        rows,
    })
}

/// Monte Carlo mean of `‖X_n‖_0` on the aligned grid.
pub fn sup_mean(n: usize, n_samples: usize, seed: u64) -> Result<MCEstimate> {
    let config = CounterexampleConfig::new(n)?;
    let field = build_x_n(&config)?;
    empirical_sup_mean(&field, &config.grid(), 0, n_samples, seed)
}
