//! Finite Karhunen–Loève fields `X = Σ_n σ_n ξ_n f_n`.
//!
//! A [`KLField`] is a legitimate Gaussian random field in its own right: all
//! identities checked here (covariance, Cameron–Martin products, support
//! spans) hold exactly for the truncation, not only in a limit.

use std::ops::Add;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFunction, MultiIndex};
use crate::error::{check_dim, Error, Result};
use crate::features::{FeatureTable, SignedExpansion};
use crate::grid::GridBox;
use crate::kernel::Kernel;
use crate::linalg::{symmetric_eigen, Matrix};
use crate::rng::RandomStream;

/// Condition-number ceiling for the projection normal equations.
pub const MAX_CONDITION: f64 = 1e12;

/// A finite Karhunen–Loève expansion.
///
/// JSON: `{"m": 1, "k": 1, "basis": [...], "sigmas": [...]}`; `sigmas` may be
/// omitted, in which case every coefficient has unit standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KLFieldSpec", into = "KLFieldSpec")]
pub struct KLField {
    m: usize,
    k: usize,
    basis: Vec<BasisFunction>,
    sigmas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KLFieldSpec {
    m: usize,
    k: usize,
    #[serde(default)]
    basis: Vec<BasisFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigmas: Option<Vec<f64>>,
}

impl TryFrom<KLFieldSpec> for KLField {
    type Error = Error;

    fn try_from(spec: KLFieldSpec) -> Result<Self> {
        match spec.sigmas {
            Some(s) => KLField::new(spec.m, spec.k, spec.basis, s),
            None => KLField::unit(spec.m, spec.k, spec.basis),
        }
    }
}

impl From<KLField> for KLFieldSpec {
    fn from(f: KLField) -> Self {
        Self {
            m: f.m,
            k: f.k,
            basis: f.basis,
            sigmas: Some(f.sigmas),
        }
    }
}

impl KLField {
    pub fn new(m: usize, k: usize, basis: Vec<BasisFunction>, sigmas: Vec<f64>) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::InvalidParameter(
                "field dimensions m and k must be positive".into(),
            ));
        }
        check_dim("field sigmas", basis.len(), sigmas.len())?;
        for (i, f) in basis.iter().enumerate() {
            let (fm, fk) = f.validate()?;
            if (fm, fk) != (m, k) {
                return Err(Error::InvalidParameter(format!(
                    "basis[{i}] maps R^{fm} -> R^{fk}, field is R^{m} -> R^{k}"
                )));
            }
        }
        if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "sigmas must be positive and finite, got {s}"
            )));
        }
        Ok(Self {
            m,
            k,
            basis,
            sigmas,
        })
    }

    /// All `σ_n = 1`.
    pub fn unit(m: usize, k: usize, basis: Vec<BasisFunction>) -> Result<Self> {
        let n = basis.len();
        Self::new(m, k, basis, vec![1.0; n])
    }

    /// The zero field (`N = 0`).
    pub fn empty(m: usize, k: usize) -> Self {
        Self {
            m,
            k,
            basis: Vec::new(),
            sigmas: Vec::new(),
        }
    }

    /// Scalar field on the line.
    pub fn scalar_line(basis: Vec<BasisFunction>) -> Result<Self> {
        Self::unit(1, 1, basis)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.basis
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub(crate) fn expansion(&self) -> SignedExpansion {
        SignedExpansion {
            m: self.m,
            k: self.k,
            terms: self
                .basis
                .iter()
                .cloned()
                .zip(self.sigmas.iter().map(|s| s * s))
                .collect(),
        }
    }

    /// Draws `σ_n ξ_n` for every basis term from `rng`.
    pub fn sample_coeffs(&self, rng: &mut RandomStream) -> Vec<f64> {
        self.sigmas.iter().map(|s| s * rng.next_normal()).collect()
    }

    pub(crate) fn feature_table(&self, grid: &GridBox, r: usize) -> Result<FeatureTable> {
        check_dim("box dimension", self.m, grid.dim())?;
        FeatureTable::build(&self.basis, self.m, self.k, grid, r)
    }
}

/// One realisation of a [`KLField`], stored by its coefficients `σ_n ξ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    field: Arc<KLField>,
    coeffs: Vec<f64>,
}

impl SamplePath {
    pub fn new(field: Arc<KLField>, coeffs: Vec<f64>) -> Result<Self> {
        check_dim("sample coefficients", field.len(), coeffs.len())?;
        Ok(Self { field, coeffs })
    }

    pub fn zero(field: Arc<KLField>) -> Self {
        let n = field.len();
        Self {
            field,
            coeffs: vec![0.0; n],
        }
    }

    pub fn field(&self) -> &Arc<KLField> {
        &self.field
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `∂_α X(p) = Σ_n c_n ∂_α f_n(p)`.
    pub fn eval(&self, p: &[f64], alpha: &MultiIndex) -> Result<Vec<f64>> {
        check_dim("point", self.field.m, p.len())?;
        let mut out = vec![0.0; self.field.k];
        for (f, c) in self.field.basis.iter().zip(&self.coeffs) {
            if *c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(f.eval_partial(p, alpha)?) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    pub fn value(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.eval(p, &MultiIndex::zeros(self.field.m))
    }

    /// Grid sup of `|∂_α X^j|` over `|α| ≤ r` and all components.
    pub fn seminorm(&self, grid: &GridBox, r: usize) -> Result<f64> {
        Ok(self.field.feature_table(grid, r)?.path_sup(&self.coeffs))
    }

    /// `(point, value)` rows on the grid, ready for CSV export.
    pub fn tabulate(&self, grid: &GridBox) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        check_dim("box dimension", self.field.m, grid.dim())?;
        grid.points()
            .into_iter()
            .map(|p| {
                let v = self.value(&p)?;
                Ok((p, v))
            })
            .collect()
    }
}

impl Add for &SamplePath {
    type Output = SamplePath;

    /// Coefficientwise sum. Panics if the paths belong to different fields.
    fn add(self, rhs: &SamplePath) -> SamplePath {
        assert!(
            Arc::ptr_eq(&self.field, &rhs.field) || self.field == rhs.field,
            "sample paths from different fields"
        );
        SamplePath {
            field: self.field.clone(),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Draws one path: `coeffs_n = σ_n · ξ_n` with `ξ_n` from `rng`.
pub fn sample(field: &Arc<KLField>, rng: &mut RandomStream) -> SamplePath {
    SamplePath {
        field: field.clone(),
        coeffs: field.sample_coeffs(rng),
    }
}

/// The Cameron–Martin function `h_p^j(q) = K(q, p)e_j = Σ_n σ_n² f_n^j(p) f_n(q)`,
/// stored by its coefficients in the basis `f_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportBasisFunction {
    pub point: Vec<f64>,
    pub component: usize,
    pub coeffs: Vec<f64>,
}

impl SupportBasisFunction {
    pub fn eval(&self, field: &KLField, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; field.k];
        for (f, c) in field.basis.iter().zip(&self.coeffs) {
            for (o, v) in out.iter_mut().zip(f.eval(q)) {
                *o += c * v;
            }
        }
        out
    }

    /// The same function as an element of the span of the field's basis.
    pub fn as_path(&self, field: Arc<KLField>) -> Result<SamplePath> {
        SamplePath::new(field, self.coeffs.clone())
    }
}

/// `h_p^j`, with `j` zero-based.
pub fn support_basis(field: &KLField, p: &[f64], j: usize) -> Result<SupportBasisFunction> {
    check_dim("point", field.m, p.len())?;
    if j >= field.k {
        return Err(Error::InvalidParameter(format!(
            "component {j} out of range for k = {}",
            field.k
        )));
    }
    let coeffs = field
        .basis
        .iter()
        .zip(&field.sigmas)
        .map(|(f, s)| s * s * f.eval(p)[j])
        .collect();
    Ok(SupportBasisFunction {
        point: p.to_vec(),
        component: j,
        coeffs,
    })
}

/// Cameron–Martin inner product `⟨h_p^j, h_q^ℓ⟩`.
///
/// In the orthonormal system `σ_n f_n` the coefficients of `h_p^j` are
/// `σ_n f_n^j(p)`, so the product is `Σ_n σ_n² f_n^j(p) f_n^ℓ(q)`. The result
/// is cross-checked against `K(p, q)[j][ℓ]`.
pub fn cm_inner(field: &KLField, (p, j): (&[f64], usize), (q, l): (&[f64], usize)) -> Result<f64> {
    let hp = support_basis(field, p, j)?;
    let hq = support_basis(field, q, l)?;
    let inner: f64 = hp
        .coeffs
        .iter()
        .zip(&hq.coeffs)
        .zip(&field.sigmas)
        .map(|((a, b), s)| (a / s) * (b / s))
        .sum();
    let kernel = field.eval(p, q)[(j, l)];
    if (inner - kernel).abs() > 1e-12 * (1.0 + kernel.abs()) {
        return Err(Error::CmMismatch { inner, kernel });
    }
    Ok(inner)
}

/// Root-mean-square least-squares residual of `g` against `span{f_n}` on the
/// grid of `grid`, over all grid points and output components.
///
/// Columns are normalised before forming the normal equations; the Gram
/// matrix is inverted through its Jacobi eigen-decomposition and rejected
/// when its condition estimate exceeds [`MAX_CONDITION`].
pub fn projection_residual(
    field: &KLField,
    g: impl Fn(&[f64]) -> Vec<f64>,
    grid: &GridBox,
) -> Result<f64> {
    check_dim("box dimension", field.m, grid.dim())?;
    let points = grid.points();
    let n = field.len();
    let k = field.k;
    let table = FeatureTable::build_with(&field.basis, k, grid, vec![MultiIndex::zeros(field.m)])?;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(points.len() * k);
    let mut target = Vec::with_capacity(points.len() * k);
    let per_component: Vec<Vec<Vec<f64>>> = (0..k).map(|j| table.column_values(n, 0, j)).collect();
    for (x, p) in points.iter().enumerate() {
        let gv = g(p);
        check_dim("projection target", k, gv.len())?;
        for j in 0..k {
            rows.push(per_component[j][x].clone());
            target.push(gv[j]);
        }
    }

    let coeffs = if n == 0 {
        Vec::new()
    } else {
        let scales: Vec<f64> = (0..n)
            .map(|c| {
                let s = rows.iter().map(|r| r[c] * r[c]).sum::<f64>().sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let gram = Matrix::from_fn(n, n, |a, b| {
            rows.iter().map(|r| r[a] * r[b]).sum::<f64>() / (scales[a] * scales[b])
        });
        let rhs: Vec<f64> = (0..n)
            .map(|a| rows.iter().zip(&target).map(|(r, t)| r[a] * t).sum::<f64>() / scales[a])
            .collect();
        let eig = symmetric_eigen(&gram)?;
        let (lo, hi) = (eig.min(), eig.max());
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > MAX_CONDITION {
            return Err(Error::IllConditioned { condition });
        }
        // x = V Λ⁻¹ Vᵀ b
        let mut y = vec![0.0; n];
        for (i, lam) in eig.values.iter().enumerate() {
            let proj: f64 = (0..n).map(|a| eig.vectors[(a, i)] * rhs[a]).sum();
            for (a, ya) in y.iter_mut().enumerate() {
                *ya += eig.vectors[(a, i)] * proj / lam;
            }
        }
        y.iter().zip(&scales).map(|(v, s)| v / s).collect()
    };

    let sq: f64 = rows
        .iter()
        .zip(&target)
        .map(|(r, t)| {
            let fit: f64 = r.iter().zip(&coeffs).map(|(a, c)| a * c).sum();
            (t - fit) * (t - fit)
        })
        .sum();
    Ok((sq / target.len() as f64).sqrt())
}
