//! Jets of sample paths, jet covariance matrices and the maximal-rank
//! certificate for almost-sure transversality.
//!
//! Jet coordinates are ordered output-component-major, then graded-lex in
//! the multi-index: entry `(j, α)` sits at `j · C(m+r, r) + pos(α)`.
//!
//! If the covariance of `j^r_p X` is non-degenerate at every `p`, the jet has
//! full support in `J^r_p` and `j^r X` is transverse to every submanifold of
//! the jet bundle with probability one. [`scan_nondegeneracy`] checks exactly
//! that hypothesis on a grid; it does not simulate the conclusion.

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::MultiIndex;
use crate::error::{check_dim, Result};
use crate::field::SamplePath;
use crate::grid::GridBox;
use crate::kernel::Kernel;
use crate::linalg::{symmetric_eigen, Matrix};

/// Default spectral-ratio cutoff for the maximal-rank test.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// `k · C(m + r, r)`.
pub fn jet_dimension(m: usize, k: usize, r: usize) -> usize {
    // C(m + r, r) via the multiplicative formula; exact in integers
    let mut c: usize = 1;
    for i in 1..=r {
        c = c * (m + i) / i;
    }
    k * c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Jet {
    pub point: Vec<f64>,
    pub order: usize,
    pub values: Vec<f64>,
}

/// `j^r_p X`: all `∂_α X^j(p)` with `|α| ≤ r`.
pub fn jet_eval(path: &SamplePath, p: &[f64], r: usize) -> Result<Jet> {
    let field = path.field();
    let alphas = MultiIndex::enumerate(field.m(), r);
    let mut values = vec![0.0; field.k() * alphas.len()];
    for (ai, a) in alphas.iter().enumerate() {
        for (j, v) in path.eval(p, a)?.into_iter().enumerate() {
            values[j * alphas.len() + ai] = v;
        }
    }
    Ok(Jet {
        point: p.to_vec(),
        order: r,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JetCovariance {
    pub point: Vec<f64>,
    pub order: usize,
    pub matrix: Matrix,
}

/// Entry `((j, α), (ℓ, β)) = ∂_(α,β) K^{j,ℓ}(p, p)`.
pub fn jet_covariance<K: Kernel + ?Sized>(kernel: &K, p: &[f64], r: usize) -> Result<JetCovariance> {
    check_dim("point", kernel.domain_dim(), p.len())?;
    let k = kernel.output_dim();
    let alphas = MultiIndex::enumerate(kernel.domain_dim(), r);
    let na = alphas.len();
    let mut matrix = Matrix::zeros(k * na, k * na);
    for (ai, a) in alphas.iter().enumerate() {
        for (bi, b) in alphas.iter().enumerate() {
            let block = kernel.eval_deriv(p, p, a, b)?;
            for j in 0..k {
                for l in 0..k {
                    matrix[(j * na + ai, l * na + bi)] = block[(j, l)];
                }
            }
        }
    }
    Ok(JetCovariance {
        point: p.to_vec(),
        order: r,
        matrix,
    })
}

/// Maximal-rank certificate at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub point: Vec<f64>,
    /// `λ_min / λ_max` of the jet covariance (0 when `λ_max = 0`).
    pub ratio: f64,
    pub pass: bool,
    pub jet_dim: usize,
    /// Number of eigenvalues above `rel_tol · λ_max`.
    pub rank_estimate: usize,
}

pub fn nondegeneracy_certificate<K: Kernel + ?Sized>(
    kernel: &K,
    p: &[f64],
    r: usize,
    rel_tol: f64,
) -> Result<Certificate> {
    let cov = jet_covariance(kernel, p, r)?;
    let eig = symmetric_eigen(&cov.matrix)?;
    let max = eig.max();
    let ratio = if max > 0.0 { eig.min() / max } else { 0.0 };
    let rank_estimate = if max > 0.0 {
        eig.values.iter().filter(|&&v| v > rel_tol * max).count()
    } else {
        0
    };
    Ok(Certificate {
        point: p.to_vec(),
        ratio,
        pass: ratio > rel_tol,
        jet_dim: cov.matrix.rows(),
        rank_estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub all_pass: bool,
    pub worst_point: Vec<f64>,
    pub worst_ratio: f64,
    pub worst_index: usize,
    pub n_points: usize,
    pub n_failed: usize,
    #[serde(skip)]
    pub certificates: Vec<Certificate>,
}

/// Runs the certificate at every grid point. The worst point is the one with
/// the smallest ratio, ties going to the lower grid index.
pub fn scan_nondegeneracy<K: Kernel + ?Sized>(
    kernel: &K,
    grid: &GridBox,
    r: usize,
    rel_tol: f64,
) -> Result<ScanReport> {
    check_dim("box dimension", kernel.domain_dim(), grid.dim())?;
    let certificates: Vec<Certificate> = (0..grid.n_points())
        .into_par_iter()
        .map(|i| nondegeneracy_certificate(kernel, &grid.point(i), r, rel_tol))
        .collect::<Result<_>>()?;
    let (worst_index, worst) = certificates
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.ratio.total_cmp(&b.ratio).then(i.cmp(j)))
        .expect("grids have at least two points");
    Ok(ScanReport {
        all_pass: certificates.iter().all(|c| c.pass),
        worst_point: worst.point.clone(),
        worst_ratio: worst.ratio,
        worst_index,
        n_points: certificates.len(),
        n_failed: certificates.iter().filter(|c| !c.pass).count(),
        certificates,
    })
}
