//! Sparse tables of basis-function derivatives on a grid.
//!
//! A table stores, for every grid point `x`, the basis indices `n` for which
//! some `∂_α f_n(x)` is non-zero together with those derivative values. Sample
//! paths and finite-rank kernels are then evaluated on the grid as sparse dot
//! products, which keeps fields with thousands of disjoint bumps cheap.

use rayon::prelude::*;

use crate::basis::{BasisFunction, MultiIndex};
use crate::error::Result;
use crate::grid::GridBox;

/// A finite-rank kernel `K(p, q) = Σ_n w_n f_n(p) f_n(q)ᵀ` with real (possibly
/// negative) weights. Sums, differences and multiples of finite expansions
/// stay in this form.
#[derive(Debug, Clone)]
pub struct SignedExpansion {
    pub m: usize,
    pub k: usize,
    pub terms: Vec<(BasisFunction, f64)>,
}

impl SignedExpansion {
    pub fn scaled(mut self, c: f64) -> Self {
        for (_, w) in &mut self.terms {
            *w *= c;
        }
        self
    }

    /// `self − other`; dimensions are checked by the caller.
    pub fn minus(mut self, other: SignedExpansion) -> Self {
        self.terms
            .extend(other.terms.into_iter().map(|(f, w)| (f, -w)));
        self
    }

    pub fn basis(&self) -> impl Iterator<Item = &BasisFunction> {
        self.terms.iter().map(|(f, _)| f)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|(_, w)| *w).collect()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FeatureTable {
    pub k: usize,
    pub alphas: Vec<MultiIndex>,
    pub n_points: usize,
    offsets: Vec<usize>,
    basis_idx: Vec<usize>,
    // one block of alphas.len() * k values per stored entry, alpha-major
    values: Vec<f64>,
    // transposed index: point lists per basis function
    points_of: Vec<Vec<usize>>,
}

impl FeatureTable {
    /// Tabulates `∂_α f_n` for every `α` with `|α| ≤ r`.
    pub fn build<'a>(
        basis: impl IntoIterator<Item = &'a BasisFunction>,
        m: usize,
        k: usize,
        grid: &GridBox,
        r: usize,
    ) -> Result<Self> {
        let alphas = MultiIndex::enumerate(m, r);
        Self::build_with(basis, k, grid, alphas)
    }

    pub fn build_with<'a>(
        basis: impl IntoIterator<Item = &'a BasisFunction>,
        k: usize,
        grid: &GridBox,
        alphas: Vec<MultiIndex>,
    ) -> Result<Self> {
        let basis: Vec<&BasisFunction> = basis.into_iter().collect();
        let n_points = grid.n_points();
        let block = alphas.len() * k;
        let all: Vec<usize> = (0..n_points).collect();

        let per_basis: Vec<Vec<(usize, Vec<f64>)>> = basis
            .par_iter()
            .map(|f| {
                let candidates = match f.support_bounds() {
                    Some((lo, hi)) => grid.indices_within(&lo, &hi),
                    None => all.clone(),
                };
                let mut rows = Vec::new();
                for x in candidates {
                    let p = grid.point(x);
                    let mut vals = Vec::with_capacity(block);
                    for a in &alphas {
                        vals.extend(f.eval_partial(&p, a)?);
                    }
                    if vals.iter().any(|v| *v != 0.0) {
                        rows.push((x, vals));
                    }
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;

        let mut counts = vec![0usize; n_points + 1];
        for rows in &per_basis {
            for (x, _) in rows {
                counts[x + 1] += 1;
            }
        }
        for i in 0..n_points {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let total = offsets[n_points];
        let mut cursor = counts;
        let mut basis_idx = vec![0usize; total];
        let mut values = vec![0.0; total * block];
        let mut points_of = Vec::with_capacity(per_basis.len());
        // basis functions are visited in index order, so each point's entries
        // end up sorted by basis index
        for (n, rows) in per_basis.into_iter().enumerate() {
            let mut pts = Vec::with_capacity(rows.len());
            for (x, vals) in rows {
                let slot = cursor[x];
                cursor[x] += 1;
                basis_idx[slot] = n;
                values[slot * block..(slot + 1) * block].copy_from_slice(&vals);
                pts.push(x);
            }
            points_of.push(pts);
        }
        Ok(Self {
            k,
            alphas,
            n_points,
            offsets,
            basis_idx,
            values,
            points_of,
        })
    }

    pub fn block(&self) -> usize {
        self.alphas.len() * self.k
    }

    fn entries(&self, x: usize) -> std::ops::Range<usize> {
        self.offsets[x]..self.offsets[x + 1]
    }

    fn slot_values(&self, slot: usize) -> &[f64] {
        let b = self.block();
        &self.values[slot * b..(slot + 1) * b]
    }

    /// Writes `Σ_n coeffs[n] ∂_α f_n^j(x)` into `out[a * k + j]`.
    pub fn combine_at(&self, coeffs: &[f64], x: usize, out: &mut [f64]) {
        out.fill(0.0);
        for slot in self.entries(x) {
            let c = coeffs[self.basis_idx[slot]];
            if c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.slot_values(slot)) {
                *o += c * v;
            }
        }
    }

    /// Dense `points × basis` design matrix for a single derivative slot
    /// (`alpha_pos`, component `j`).
    pub fn column_values(&self, n_basis: usize, alpha_pos: usize, j: usize) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; n_basis]; self.n_points];
        for (x, row) in rows.iter_mut().enumerate() {
            for slot in self.entries(x) {
                row[self.basis_idx[slot]] = self.slot_values(slot)[alpha_pos * self.k + j];
            }
        }
        rows
    }

    /// Max over grid points, tabulated derivatives and components of the
    /// absolute value of the combined path.
    pub fn path_sup(&self, coeffs: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.block()];
        let mut best = 0.0f64;
        for x in 0..self.n_points {
            self.combine_at(coeffs, x, &mut buf);
            for v in &buf {
                best = best.max(v.abs());
            }
        }
        best
    }

    /// Max over grid pairs `(x, y)`, derivative pairs and components of
    /// `|Σ_n w_n ∂_α f_n^j(x) ∂_β f_n^ℓ(y)|`.
    pub fn kernel_sup(&self, weights: &[f64]) -> f64 {
        let b = self.block();
        (0..self.n_points)
            .into_par_iter()
            .map_init(
                || (vec![usize::MAX; self.n_points], vec![0.0; b * b]),
                |(seen, acc), x| {
                let mut best = 0.0f64;
                for sx in self.entries(x) {
                    for &y in &self.points_of[self.basis_idx[sx]] {
                        if seen[y] == x {
                            continue;
                        }
                        seen[y] = x;
                        self.pair_block(weights, x, y, acc);
                        for v in acc.iter() {
                            best = best.max(v.abs());
                        }
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max)
    }

    fn pair_block(&self, weights: &[f64], x: usize, y: usize, acc: &mut [f64]) {
        let b = self.block();
        acc.fill(0.0);
        let (mut i, mut j) = (self.offsets[x], self.offsets[y]);
        let (ie, je) = (self.offsets[x + 1], self.offsets[y + 1]);
        while i < ie && j < je {
            let (ni, nj) = (self.basis_idx[i], self.basis_idx[j]);
            if ni < nj {
                i += 1;
            } else if nj < ni {
                j += 1;
            } else {
                let w = weights[ni];
                let (vx, vy) = (self.slot_values(i), self.slot_values(j));
                for (r, a) in vx.iter().enumerate() {
                    let wa = w * a;
                    if wa == 0.0 {
                        continue;
                    }
                    for (c, bv) in vy.iter().enumerate() {
                        acc[r * b + c] += wa * bv;
                    }
                }
                i += 1;
                j += 1;
            }
        }
    }
}
