//! Closed-form basis functions `R^m -> R^k` with exact partial derivatives.

use std::cmp::Ordering;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Highest derivative order supported for [`BasisFunction::Bump`].
pub const MAX_BUMP_ORDER: usize = 4;

/// A multi-index `α = (α_1, …, α_m)` selecting the partial derivative `∂_α`.
///
/// Ordered graded-lexicographically: first by `|α|`, then lexicographically
/// on the entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self(entries)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0; m])
    }

    /// The unit multi-index `e_i` of length `m`.
    pub fn unit(m: usize, i: usize) -> Self {
        let mut e = vec![0; m];
        e[i] = 1;
        Self(e)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|α| = Σ α_i`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// All multi-indices of length `m` with `|α| ≤ r`, in graded-lex order.
    /// There are `C(m + r, r)` of them.
    pub fn enumerate(m: usize, r: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for total in 0..=r {
            let mut current = vec![0u32; m];
            fill(&mut current, 0, total, &mut out);
        }
        out
    }

    /// Position of `self` within `enumerate(self.dim(), r)`.
    pub fn graded_lex_position(&self, r: usize) -> Option<usize> {
        if self.order() > r {
            return None;
        }
        Self::enumerate(self.dim(), r).iter().position(|a| a == self)
    }
}

// Generates, in increasing lexicographic order, every tail of `current`
// starting at `pos` whose entries sum to `remaining`.
fn fill(current: &mut Vec<u32>, pos: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
    let m = current.len();
    if m == 0 {
        if remaining == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    if pos == m - 1 {
        current[pos] = remaining as u32;
        out.push(MultiIndex(current.clone()));
        return;
    }
    for v in 0..=remaining {
        current[pos] = v as u32;
        fill(current, pos + 1, remaining - v, out);
    }
    current[pos] = 0;
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

/// A closed-form smooth map `R^m -> R^k`.
///
/// JSON form is internally tagged by `"type"`:
///
/// ```json
/// {"type": "monomial", "exponents": [2], "amplitude": [1.0]}
/// {"type": "harmonic", "frequency": [3.0], "phase": 0.0, "amplitude": [1.0]}
/// {"type": "bump", "center": [0.5], "radius": 0.1, "amplitude": [1.0]}
/// {"type": "scaled", "inner": {...}, "factor": 0.5}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisFunction {
    /// `amplitude · x^exponents`.
    Monomial {
        exponents: MultiIndex,
        amplitude: Vec<f64>,
    },
    /// `amplitude · cos(⟨frequency, x⟩ + phase)`.
    Harmonic {
        frequency: Vec<f64>,
        #[serde(default)]
        phase: f64,
        amplitude: Vec<f64>,
    },
    /// `amplitude · exp(1 − 1/(1 − |(x − center)/radius|²))` inside the open
    /// ball, zero outside. Peak value `amplitude` at the center.
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: Vec<f64>,
    },
    /// `factor · inner`.
    Scaled {
        inner: Box<BasisFunction>,
        factor: f64,
    },
}

impl BasisFunction {
    pub fn monomial(exponents: Vec<u32>, amplitude: Vec<f64>) -> Self {
        Self::Monomial {
            exponents: MultiIndex(exponents),
            amplitude,
        }
    }

    /// Scalar monomial `t^e` on the line.
    pub fn power(e: u32) -> Self {
        Self::monomial(vec![e], vec![1.0])
    }

    pub fn harmonic(frequency: Vec<f64>, phase: f64, amplitude: Vec<f64>) -> Self {
        Self::Harmonic {
            frequency,
            phase,
            amplitude,
        }
    }

    pub fn bump(center: Vec<f64>, radius: f64, amplitude: Vec<f64>) -> Self {
        Self::Bump {
            center,
            radius,
            amplitude,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::Scaled {
            inner: Box::new(self),
            factor,
        }
    }

    /// Domain dimension `m`.
    pub fn domain_dim(&self) -> usize {
        match self {
            Self::Monomial { exponents, .. } => exponents.dim(),
            Self::Harmonic { frequency, .. } => frequency.len(),
            Self::Bump { center, .. } => center.len(),
            Self::Scaled { inner, .. } => inner.domain_dim(),
        }
    }

    /// Output dimension `k`.
    pub fn output_dim(&self) -> usize {
        match self {
            Self::Monomial { amplitude, .. }
            | Self::Harmonic { amplitude, .. }
            | Self::Bump { amplitude, .. } => amplitude.len(),
            Self::Scaled { inner, .. } => inner.output_dim(),
        }
    }

    /// Checks parameters and returns `(m, k)`.
    pub fn validate(&self) -> Result<(usize, usize)> {
        let (m, k) = (self.domain_dim(), self.output_dim());
        if m == 0 {
            return Err(Error::InvalidParameter(
                "basis function has an empty domain".into(),
            ));
        }
        if k == 0 {
            return Err(Error::InvalidParameter(
                "basis function has an empty amplitude".into(),
            ));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Monomial { amplitude, .. } => {
                if !finite(amplitude) {
                    return Err(Error::InvalidParameter("non-finite amplitude".into()));
                }
            }
            Self::Harmonic {
                frequency,
                phase,
                amplitude,
            } => {
                if !finite(frequency) || !phase.is_finite() || !finite(amplitude) {
                    return Err(Error::InvalidParameter(
                        "non-finite harmonic parameter".into(),
                    ));
                }
            }
            Self::Bump {
                center,
                radius,
                amplitude,
            } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "bump radius must be positive, got {radius}"
                    )));
                }
                if !finite(center) || !finite(amplitude) {
                    return Err(Error::InvalidParameter("non-finite bump parameter".into()));
                }
            }
            Self::Scaled { inner, factor } => {
                if !factor.is_finite() {
                    return Err(Error::InvalidParameter("non-finite scale factor".into()));
                }
                inner.validate()?;
            }
        }
        Ok((m, k))
    }

    /// Closed-form value at `p`.
    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        match self {
            Self::Monomial {
                exponents,
                amplitude,
            } => {
                let v: f64 = exponents
                    .entries()
                    .iter()
                    .zip(p)
                    .map(|(&e, &x)| x.powi(e as i32))
                    .product();
                amplitude.iter().map(|a| a * v).collect()
            }
            Self::Harmonic {
                frequency,
                phase,
                amplitude,
            } => {
                let v = (dot(frequency, p) + phase).cos();
                amplitude.iter().map(|a| a * v).collect()
            }
            Self::Bump {
                center,
                radius,
                amplitude,
            } => {
                let s = scaled_sq_dist(p, center, *radius);
                let v = if s < 1.0 { (1.0 - 1.0 / (1.0 - s)).exp() } else { 0.0 };
                amplitude.iter().map(|a| a * v).collect()
            }
            Self::Scaled { inner, factor } => {
                inner.eval(p).into_iter().map(|v| factor * v).collect()
            }
        }
    }

    /// Exact partial derivative `∂_α f(p)`.
    pub fn eval_partial(&self, p: &[f64], alpha: &MultiIndex) -> Result<Vec<f64>> {
        check_dim("eval_partial multi-index", self.domain_dim(), alpha.dim())?;
        Ok(match self {
            Self::Monomial {
                exponents,
                amplitude,
            } => {
                let mut v = 1.0;
                for ((&e, &a), &x) in exponents.entries().iter().zip(alpha.entries()).zip(p) {
                    if a > e {
                        v = 0.0;
                        break;
                    }
                    v *= falling_factorial(e, a) * x.powi((e - a) as i32);
                }
                amplitude.iter().map(|amp| amp * v).collect()
            }
            Self::Harmonic {
                frequency,
                phase,
                amplitude,
            } => {
                let theta = dot(frequency, p) + phase;
                let chain: f64 = frequency
                    .iter()
                    .zip(alpha.entries())
                    .map(|(w, &a)| w.powi(a as i32))
                    .product();
                let d = match alpha.order() % 4 {
                    0 => theta.cos(),
                    1 => -theta.sin(),
                    2 => -theta.cos(),
                    _ => theta.sin(),
                };
                amplitude.iter().map(|amp| amp * chain * d).collect()
            }
            Self::Bump {
                center,
                radius,
                amplitude,
            } => {
                let v = bump_partial(p, center, *radius, alpha)?;
                amplitude.iter().map(|amp| amp * v).collect()
            }
            Self::Scaled { inner, factor } => inner
                .eval_partial(p, alpha)?
                .into_iter()
                .map(|v| factor * v)
                .collect(),
        })
    }

    /// Axis-aligned bounding box of the support, if compact.
    pub fn support_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Bump { center, radius, .. } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            Self::Scaled { inner, .. } => inner.support_bounds(),
            _ => None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled_sq_dist(p: &[f64], center: &[f64], radius: f64) -> f64 {
    p.iter()
        .zip(center)
        .map(|(x, c)| {
            let u = (x - c) / radius;
            u * u
        })
        .sum()
}

fn falling_factorial(n: u32, k: u32) -> f64 {
    (0..k).map(|i| f64::from(n - i)).product()
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Polynomials `P_j(s)` (coefficients in ascending powers of `s`) such that
/// `F^{(j)}(s) = P_j(s) / (1 − s)^{2j} · F(s)` for `F(s) = exp(1 − 1/(1 − s))`.
///
/// `P_0 = 1`, `P_{j+1} = (1 − s)² P_j' + (2j(1 − s) − 1) P_j`.
fn bump_prefactors() -> &'static [Vec<f64>] {
    static CACHE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let mut polys = vec![vec![1.0]];
        for j in 0..MAX_BUMP_ORDER {
            let p = &polys[j];
            let dp: Vec<f64> = p
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect();
            let one_minus_s_sq = [1.0, -2.0, 1.0];
            let lin = [2.0 * j as f64 - 1.0, -2.0 * j as f64];
            let a = poly_mul(&one_minus_s_sq, &dp);
            let b = poly_mul(&lin, p);
            let mut next = poly_add(&a, &b);
            while next.len() > 1 && next.last() == Some(&0.0) {
                next.pop();
            }
            polys.push(next);
        }
        polys
    })
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

fn poly_eval(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &x| acc * s + x)
}

/// `F^{(j)}(s)` for the radial profile, `0 ≤ s < 1`.
fn profile_derivative(j: usize, s: f64) -> f64 {
    let w = 1.0 - s;
    let log_mag = 1.0 - 1.0 / w - 2.0 * j as f64 * w.ln();
    poly_eval(&bump_prefactors()[j], s) * log_mag.exp()
}

// f(x) = F(Σ u_i²), u_i = (x_i − c_i)/ρ. Each coordinate contributes
// d^a/du^a G(u²) = Σ_{j=⌈a/2⌉}^{a} a!/((a−j)!(2j−a)!) (2u)^{2j−a} G^{(j)}(u²),
// and the coordinate operators combine multiplicatively in the profile
// derivative order.
fn bump_partial(p: &[f64], center: &[f64], radius: f64, alpha: &MultiIndex) -> Result<f64> {
    let order = alpha.order();
    if order > MAX_BUMP_ORDER {
        return Err(Error::OrderUnsupported {
            order,
            max: MAX_BUMP_ORDER,
        });
    }
    let s = scaled_sq_dist(p, center, radius);
    if s >= 1.0 {
        return Ok(0.0);
    }
    let u: Vec<f64> = p.iter().zip(center).map(|(x, c)| (x - c) / radius).collect();

    // coefficient of F^{(j)} accumulated over coordinates
    let mut acc = vec![0.0; order + 1];
    acc[0] = 1.0;
    for (&a, &ui) in alpha.entries().iter().zip(&u) {
        if a == 0 {
            continue;
        }
        let mut next = vec![0.0; order + 1];
        for (j0, &c0) in acc.iter().enumerate() {
            if c0 == 0.0 {
                continue;
            }
            for j in a.div_ceil(2)..=a {
                let coeff = factorial(a) / (factorial(a - j) * factorial(2 * j - a))
                    * (2.0 * ui).powi((2 * j - a) as i32);
                next[j0 + j as usize] += c0 * coeff;
            }
        }
        acc = next;
    }
    let total: f64 = acc
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, c)| c * profile_derivative(j, s))
        .sum();
    Ok(total * radius.powi(-(order as i32)))
}

/// Relative error of the analytic `∂_α f(p)` against a central difference
/// of the analytic `∂_{α − e_i} f` along the first active axis `i`:
/// `|analytic − fd| / (1 + |analytic|)`, maximised over components.
///
/// Returns 0 for `|α| = 0`.
pub fn fd_check(f: &BasisFunction, p: &[f64], alpha: &MultiIndex, h: f64) -> Result<f64> {
    let Some(axis) = alpha.entries().iter().position(|&a| a > 0) else {
        return Ok(0.0);
    };
    let mut lower = alpha.entries().to_vec();
    lower[axis] -= 1;
    let lower = MultiIndex::new(lower);
    let mut plus = p.to_vec();
    let mut minus = p.to_vec();
    plus[axis] += h;
    minus[axis] -= h;
    let fp = f.eval_partial(&plus, &lower)?;
    let fm = f.eval_partial(&minus, &lower)?;
    let exact = f.eval_partial(p, alpha)?;
    Ok(exact
        .iter()
        .zip(fp.iter().zip(&fm))
        .map(|(e, (a, b))| (e - (a - b) / (2.0 * h)).abs() / (1.0 + e.abs()))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn eval_examples() {
        assert_eq!(BasisFunction::power(2).eval(&[3.0]), vec![9.0]);
        let b = BasisFunction::bump(vec![0.0], 1.0, vec![1.0]);
        assert_eq!(b.eval(&[0.0]), vec![1.0]);
        assert_eq!(b.eval(&[2.0]), vec![0.0]);
    }

    #[test]
    fn partial_examples() {
        assert_eq!(
            BasisFunction::power(2).eval_partial(&[3.0], &mi(&[1])).unwrap(),
            vec![6.0]
        );
        let h = BasisFunction::harmonic(vec![2.0], 0.0, vec![1.0]);
        assert_eq!(h.eval_partial(&[0.0], &mi(&[2])).unwrap(), vec![-4.0]);
        let b = BasisFunction::bump(vec![0.0], 1.0, vec![1.0]);
        assert_eq!(b.eval_partial(&[0.0], &mi(&[1])).unwrap(), vec![0.0]);
    }

    #[test]
    fn order_zero_matches_eval() {
        let fs = [
            BasisFunction::monomial(vec![2, 1], vec![1.0, -2.0]),
            BasisFunction::harmonic(vec![1.5, -0.5], 0.3, vec![2.0]),
            BasisFunction::bump(vec![0.1, 0.2], 0.7, vec![1.0, 3.0]),
        ];
        for f in &fs {
            let p = [0.3, 0.4];
            assert_eq!(f.eval_partial(&p, &MultiIndex::zeros(2)).unwrap(), f.eval(&p));
        }
    }

    #[test]
    fn prefactor_polynomials() {
        // F' = -F/(1-s)^2, F'' = (2s - 1) F/(1-s)^4
        let p = bump_prefactors();
        assert_eq!(p[1], vec![-1.0]);
        assert_eq!(p[2], vec![-1.0, 2.0]);
    }

    #[test]
    fn bump_order_cap() {
        let b = BasisFunction::bump(vec![0.0], 1.0, vec![1.0]);
        assert_eq!(
            b.eval_partial(&[0.2], &mi(&[5])),
            Err(Error::OrderUnsupported { order: 5, max: 4 })
        );
        assert!(BasisFunction::power(7).eval_partial(&[0.2], &mi(&[6])).is_ok());
    }

    #[test]
    fn bump_vanishes_outside_with_derivatives() {
        let b = BasisFunction::bump(vec![0.5, 0.5], 0.25, vec![1.0]);
        for alpha in MultiIndex::enumerate(2, 4) {
            for p in [[0.0, 0.0], [0.75, 0.5], [0.5, 0.2], [1.0, 1.0]] {
                assert_eq!(b.eval_partial(&p, &alpha).unwrap(), vec![0.0]);
            }
        }
    }

    #[test]
    fn enumeration_order_and_count() {
        let all = MultiIndex::enumerate(2, 2);
        let expected: Vec<MultiIndex> = [
            [0, 0],
            [0, 1],
            [1, 0],
            [0, 2],
            [1, 1],
            [2, 0],
        ]
        .iter()
        .map(|v| mi(v))
        .collect();
        assert_eq!(all, expected);
        for w in all.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(MultiIndex::enumerate(3, 4).len(), 35);
        assert_eq!(mi(&[1, 1]).graded_lex_position(2), Some(4));
    }

    #[test]
    fn fd_examples() {
        let cube = BasisFunction::power(3);
        assert!(fd_check(&cube, &[1.0], &mi(&[1]), 1e-5).unwrap() < 1e-8);
        let c = BasisFunction::harmonic(vec![1.0], 0.0, vec![1.0]);
        assert!(fd_check(&c, &[0.3], &mi(&[2]), 1e-4).unwrap() < 1e-6);
        assert_eq!(fd_check(&c, &[0.3], &mi(&[0]), 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn json_schema() {
        let f: BasisFunction = serde_json::from_str(
            r#"{"type":"scaled","factor":2.0,"inner":{"type":"bump","center":[0.5],"radius":0.25,"amplitude":[1.0]}}"#,
        )
        .unwrap();
        assert_eq!(f.eval(&[0.5]), vec![2.0]);
        let bad = serde_json::from_str::<BasisFunction>(
            r#"{"type":"monomial","exponents":[1],"amplitude":[1.0],"extra":1}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn validation() {
        assert!(BasisFunction::bump(vec![0.0], 0.0, vec![1.0]).validate().is_err());
        assert!(BasisFunction::monomial(vec![1], vec![]).validate().is_err());
        assert_eq!(
            BasisFunction::harmonic(vec![1.0, 2.0], 0.0, vec![1.0; 3]).validate(),
            Ok((2, 3))
        );
    }
}
