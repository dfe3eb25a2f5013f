//! Matrix-valued covariance kernels with exact mixed derivatives, product
//! seminorms and symmetry / positive-semidefiniteness checks.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::MultiIndex;
use crate::error::{check_dim, Error, Result};
use crate::features::{FeatureTable, SignedExpansion};
use crate::field::KLField;
use crate::grid::GridBox;
use crate::linalg::{symmetric_eigen, Matrix};

/// Default relative tolerance for [`check_psd`].
pub const PSD_REL_TOL: f64 = 1e-9;

/// Point budget of [`check_psd`].
pub const MAX_PSD_POINTS: usize = 64;

/// A matrix-valued kernel `K: R^m × R^m -> R^{k×k}` with mixed partials
/// `∂_(α,β) K(p, q)`, `α` acting on `p` and `β` on `q`.
pub trait Kernel: Sync {
    fn domain_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn eval_deriv(
        &self,
        p: &[f64],
        q: &[f64],
        alpha: &MultiIndex,
        beta: &MultiIndex,
    ) -> Result<Matrix>;

    fn eval(&self, p: &[f64], q: &[f64]) -> Matrix {
        let z = MultiIndex::zeros(self.domain_dim());
        self.eval_deriv(p, q, &z, &z)
            .expect("order-0 kernel evaluation is always supported")
    }

    /// Finite-rank form `Σ w_n f_n(p) f_n(q)ᵀ`, when the kernel has one.
    fn expansion(&self) -> Option<SignedExpansion> {
        None
    }
}

impl Kernel for KLField {
    fn domain_dim(&self) -> usize {
        self.m()
    }

    fn output_dim(&self) -> usize {
        self.k()
    }

    /// `Σ_n σ_n² ∂_α f_n(p) ∂_β f_n(q)ᵀ`.
    fn eval_deriv(
        &self,
        p: &[f64],
        q: &[f64],
        alpha: &MultiIndex,
        beta: &MultiIndex,
    ) -> Result<Matrix> {
        let k = self.k();
        let mut out = Matrix::zeros(k, k);
        for (f, s) in self.basis().iter().zip(self.sigmas()) {
            let a = f.eval_partial(p, alpha)?;
            let b = f.eval_partial(q, beta)?;
            let w = s * s;
            for i in 0..k {
                for j in 0..k {
                    out[(i, j)] += w * a[i] * b[j];
                }
            }
        }
        Ok(out)
    }

    fn expansion(&self) -> Option<SignedExpansion> {
        Some(KLField::expansion(self))
    }
}

/// Scalar closed-form kernels on `R^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// `⟨s, t⟩`
    Dot,
    /// `1 + ⟨s, t⟩`
    AffineDot,
    /// `exp(⟨s, t⟩)`
    ExpDot,
}

/// A covariance kernel: either induced by a finite expansion or closed-form.
///
/// JSON: `{"type": "from_kl", "field": {...}}` or
/// `{"type": "closed_form", "form": "affine_dot", "m": 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceKernel {
    FromKl {
        field: Arc<KLField>,
    },
    ClosedForm {
        form: ClosedForm,
        #[serde(default = "one")]
        m: usize,
    },
}

fn one() -> usize {
    1
}

impl CovarianceKernel {
    pub fn from_field(field: impl Into<Arc<KLField>>) -> Self {
        Self::FromKl {
            field: field.into(),
        }
    }

    pub fn closed_form(form: ClosedForm, m: usize) -> Self {
        Self::ClosedForm { form, m }
    }
}

impl Kernel for CovarianceKernel {
    fn domain_dim(&self) -> usize {
        match self {
            Self::FromKl { field } => field.m(),
            Self::ClosedForm { m, .. } => *m,
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            Self::FromKl { field } => field.k(),
            Self::ClosedForm { .. } => 1,
        }
    }

    fn eval_deriv(
        &self,
        p: &[f64],
        q: &[f64],
        alpha: &MultiIndex,
        beta: &MultiIndex,
    ) -> Result<Matrix> {
        match self {
            Self::FromKl { field } => field.eval_deriv(p, q, alpha, beta),
            Self::ClosedForm { form, m } => {
                check_dim("kernel point", *m, p.len())?;
                check_dim("kernel point", *m, q.len())?;
                check_dim("kernel multi-index", *m, alpha.dim())?;
                check_dim("kernel multi-index", *m, beta.dim())?;
                let v = closed_form_deriv(*form, p, q, alpha, beta);
                Ok(Matrix::from_fn(1, 1, |_, _| v))
            }
        }
    }

    fn expansion(&self) -> Option<SignedExpansion> {
        match self {
            Self::FromKl { field } => Some(field.expansion()),
            Self::ClosedForm { .. } => None,
        }
    }
}

fn closed_form_deriv(form: ClosedForm, s: &[f64], t: &[f64], alpha: &MultiIndex, beta: &MultiIndex) -> f64 {
    let a = alpha.entries();
    let b = beta.entries();
    match form {
        ClosedForm::Dot | ClosedForm::AffineDot => {
            let constant = if form == ClosedForm::AffineDot { 1.0 } else { 0.0 };
            match (alpha.order(), beta.order()) {
                (0, 0) => constant + s.iter().zip(t).map(|(x, y)| x * y).sum::<f64>(),
                (1, 0) => t[a.iter().position(|&v| v == 1).unwrap()],
                (0, 1) => s[b.iter().position(|&v| v == 1).unwrap()],
                (1, 1) => {
                    if a == b {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            }
        }
        // exp(Σ s_i t_i) = Π exp(s_i t_i) and
        // ∂_s^a ∂_t^b e^{st} = Σ_j C(a,j) b!/(b−j)! s^{b−j} t^{a−j} e^{st}
        ClosedForm::ExpDot => {
            let mut v = 1.0;
            for i in 0..s.len() {
                let (ai, bi) = (a[i] as i32, b[i] as i32);
                let (si, ti) = (s[i], t[i]);
                let mut sum = 0.0;
                for j in 0..=ai.min(bi) {
                    sum += binomial(ai, j)
                        * falling(bi, j)
                        * si.powi(bi - j)
                        * ti.powi(ai - j);
                }
                v *= sum * (si * ti).exp();
            }
            v
        }
    }
}

fn binomial(n: i32, k: i32) -> f64 {
    falling(n, k) / falling(k, k)
}

fn falling(n: i32, k: i32) -> f64 {
    (0..k).map(|i| f64::from(n - i)).product()
}

/// `c · K`.
pub struct ScaledKernel<'a, K: ?Sized> {
    pub inner: &'a K,
    pub factor: f64,
}

impl<K: Kernel + ?Sized> Kernel for ScaledKernel<'_, K> {
    fn domain_dim(&self) -> usize {
        self.inner.domain_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn eval_deriv(&self, p: &[f64], q: &[f64], a: &MultiIndex, b: &MultiIndex) -> Result<Matrix> {
        Ok(self.inner.eval_deriv(p, q, a, b)?.scale(self.factor))
    }

    fn expansion(&self) -> Option<SignedExpansion> {
        self.inner.expansion().map(|e| e.scaled(self.factor))
    }
}

/// Pointwise difference `K1 − K2`.
pub struct KernelDifference<'a, A: ?Sized, B: ?Sized> {
    pub left: &'a A,
    pub right: &'a B,
}

impl<A: Kernel + ?Sized, B: Kernel + ?Sized> Kernel for KernelDifference<'_, A, B> {
    fn domain_dim(&self) -> usize {
        self.left.domain_dim()
    }

    fn output_dim(&self) -> usize {
        self.left.output_dim()
    }

    fn eval_deriv(&self, p: &[f64], q: &[f64], a: &MultiIndex, b: &MultiIndex) -> Result<Matrix> {
        Ok(self
            .left
            .eval_deriv(p, q, a, b)?
            .sub(&self.right.eval_deriv(p, q, a, b)?))
    }

    fn expansion(&self) -> Option<SignedExpansion> {
        Some(self.left.expansion()?.minus(self.right.expansion()?))
    }
}

/// Box and order `r` of the product seminorm `‖K‖_{(r,r)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSeminormSpec {
    #[serde(rename = "box")]
    pub grid: GridBox,
    pub order: usize,
}

impl KernelSeminormSpec {
    pub fn new(grid: GridBox, order: usize) -> Self {
        Self { grid, order }
    }
}

/// Grid approximation of `sup_{x,y} max_{|α|,|β| ≤ r} max_{j,ℓ} |∂_(α,β) K^{j,ℓ}(x, y)|`.
///
/// Finite-rank kernels are evaluated through a sparse derivative table, so
/// only grid pairs that share a basis function are visited; other kernels are
/// evaluated pair by pair.
pub fn kernel_seminorm<K: Kernel + ?Sized>(kernel: &K, spec: &KernelSeminormSpec) -> Result<f64> {
    check_dim("box dimension", kernel.domain_dim(), spec.grid.dim())?;
    if let Some(exp) = kernel.expansion() {
        let table = FeatureTable::build(exp.basis(), exp.m, exp.k, &spec.grid, spec.order)?;
        return Ok(table.kernel_sup(&exp.weights()));
    }
    let alphas = MultiIndex::enumerate(kernel.domain_dim(), spec.order);
    let points = spec.grid.points();
    points
        .par_iter()
        .map(|p| {
            let mut best = 0.0f64;
            for q in &points {
                for a in &alphas {
                    for b in &alphas {
                        best = best.max(kernel.eval_deriv(p, q, a, b)?.max_abs());
                    }
                }
            }
            Ok(best)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Seminorm of `K1 − K2`.
pub fn kernel_distance<A, B>(k1: &A, k2: &B, spec: &KernelSeminormSpec) -> Result<f64>
where
    A: Kernel + ?Sized,
    B: Kernel + ?Sized,
{
    check_dim("kernel domain", k1.domain_dim(), k2.domain_dim())?;
    check_dim("kernel output", k1.output_dim(), k2.output_dim())?;
    kernel_seminorm(
        &KernelDifference {
            left: k1,
            right: k2,
        },
        spec,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub pass: bool,
    pub worst_violation: f64,
}

/// `max |K(p, q) − K(q, p)ᵀ|` over the given pairs; passes iff `≤ tol`.
pub fn check_symmetry<K: Kernel + ?Sized>(
    kernel: &K,
    pairs: &[(Vec<f64>, Vec<f64>)],
    tol: f64,
) -> SymmetryReport {
    let worst = pairs
        .iter()
        .map(|(p, q)| kernel.eval(p, q).sub(&kernel.eval(q, p).transpose()).max_abs())
        .fold(0.0, f64::max);
    SymmetryReport {
        pass: worst <= tol,
        worst_violation: worst,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdReport {
    pub pass: bool,
    pub min_eigenvalue: f64,
    pub tolerance: f64,
}

/// Assembles the `(k·n)²` Gram matrix over `points` and tests
/// `λ_min ≥ −rel_tol · max |diag|`.
pub fn check_psd<K: Kernel + ?Sized>(kernel: &K, points: &[Vec<f64>], rel_tol: f64) -> Result<PsdReport> {
    if points.len() > MAX_PSD_POINTS {
        return Err(Error::InvalidParameter(format!(
            "check_psd accepts at most {MAX_PSD_POINTS} points, got {}",
            points.len()
        )));
    }
    let gram = gram_matrix(kernel, points);
    let scale = gram.diagonal().iter().fold(0.0, |m: f64, d| m.max(d.abs()));
    let tolerance = rel_tol * scale;
    let eig = symmetric_eigen(&gram)?;
    let min_eigenvalue = eig.min();
    Ok(PsdReport {
        pass: min_eigenvalue >= -tolerance,
        min_eigenvalue,
        tolerance,
    })
}

/// Gram matrix with block `(i, i')` equal to `K(p_i, p_{i'})`.
pub fn gram_matrix<K: Kernel + ?Sized>(kernel: &K, points: &[Vec<f64>]) -> Matrix {
    let k = kernel.output_dim();
    let n = points.len();
    let mut g = Matrix::zeros(k * n, k * n);
    for (i, p) in points.iter().enumerate() {
        for (ii, q) in points.iter().enumerate() {
            let block = kernel.eval(p, q);
            for a in 0..k {
                for b in 0..k {
                    g[(i * k + a, ii * k + b)] = block[(a, b)];
                }
            }
        }
    }
    g
}
