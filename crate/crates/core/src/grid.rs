//! Compact boxes in `R^m` with a uniform evaluation grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default per-axis grid resolution for a box of dimension `m`.
pub fn default_resolution(m: usize) -> usize {
    match m {
        1 => 256,
        2 => 64,
        _ => 16,
    }
}

/// An axis-aligned box `Π [lower_i, upper_i]` with `resolution_i + 1` grid
/// points per axis, endpoints included.
///
/// Suprema over the box are taken over the grid, so they are lower bounds on
/// the true suprema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridBoxSpec")]
pub struct GridBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridBoxSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(default)]
    resolution: Option<Vec<usize>>,
}

impl TryFrom<GridBoxSpec> for GridBox {
    type Error = Error;

    fn try_from(spec: GridBoxSpec) -> Result<Self> {
        let m = spec.lower.len();
        let resolution = spec.resolution.unwrap_or_else(|| vec![default_resolution(m); m]);
        GridBox::new(spec.lower, spec.upper, resolution)
    }
}

impl GridBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let m = lower.len();
        if m == 0 || upper.len() != m || resolution.len() != m {
            return Err(Error::InvalidParameter(format!(
                "box needs equal, non-zero numbers of lower bounds, upper bounds and resolutions (got {}, {}, {})",
                m,
                upper.len(),
                resolution.len()
            )));
        }
        for i in 0..m {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::InvalidParameter(format!(
                    "box axis {i}: need finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
            if resolution[i] == 0 {
                return Err(Error::InvalidParameter(format!(
                    "box axis {i}: resolution must be positive"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            resolution,
        })
    }

    /// `[lo, hi]` on the line with `resolution` intervals.
    pub fn interval(lo: f64, hi: f64, resolution: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![resolution])
    }

    /// The unit interval with the default resolution.
    pub fn unit_interval() -> Self {
        Self::interval(0.0, 1.0, default_resolution(1)).expect("valid interval")
    }

    /// Same bounds, different resolution on every axis.
    pub fn with_resolution(&self, resolution: usize) -> Result<Self> {
        Self::new(
            self.lower.clone(),
            self.upper.clone(),
            vec![resolution; self.dim()],
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Grid coordinate `j` on `axis`; the last coordinate is exactly `upper`.
    pub fn coordinate(&self, axis: usize, j: usize) -> f64 {
        let res = self.resolution[axis];
        if j == res {
            self.upper[axis]
        } else {
            self.lower[axis] + j as f64 * self.width(axis) / res as f64
        }
    }

    pub fn axis_coordinates(&self, axis: usize) -> Vec<f64> {
        (0..=self.resolution[axis])
            .map(|j| self.coordinate(axis, j))
            .collect()
    }

    pub fn n_points(&self) -> usize {
        self.resolution.iter().map(|r| r + 1).product()
    }

    /// Grid points with the first axis varying slowest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.n_points()).map(|i| self.point(i)).collect()
    }

    /// Flat index of per-axis indices (first axis slowest).
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.resolution)
            .fold(0, |acc, (&j, &r)| acc * (r + 1) + j)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut out = vec![0.0; self.dim()];
        for axis in (0..self.dim()).rev() {
            let n = self.resolution[axis] + 1;
            out[axis] = self.coordinate(axis, rem % n);
            rem /= n;
        }
        out
    }

    /// Range of grid indices on `axis` whose coordinates lie in `[a, b]`.
    pub fn index_range(&self, axis: usize, a: f64, b: f64) -> std::ops::Range<usize> {
        let res = self.resolution[axis];
        let h = self.width(axis) / res as f64;
        let lo = ((a - self.lower[axis]) / h).ceil().max(0.0);
        let hi = ((b - self.lower[axis]) / h).floor().min(res as f64);
        if hi < lo {
            return 0..0;
        }
        // one extra index on each side absorbs rounding in the division
        let lo = (lo as usize).saturating_sub(1);
        let hi = (hi as usize + 1).min(res);
        lo..hi + 1
    }

    /// Flat indices of grid points inside the axis-aligned box `[lo, hi]`
    /// (possibly with a one-cell margin).
    pub fn indices_within(&self, lo: &[f64], hi: &[f64]) -> Vec<usize> {
        let ranges: Vec<_> = (0..self.dim())
            .map(|axis| self.index_range(axis, lo[axis], hi[axis]))
            .collect();
        if ranges.iter().any(|r| r.is_empty()) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        loop {
            out.push(self.flat_index(&idx));
            let mut axis = self.dim();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < ranges[axis].end {
                    break;
                }
                idx[axis] = ranges[axis].start;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_and_endpoints() {
        let b = GridBox::new(vec![0.0, -1.0], vec![1.0, 1.0], vec![4, 2]).unwrap();
        assert_eq!(b.n_points(), 15);
        let pts = b.points();
        assert_eq!(pts[0], vec![0.0, -1.0]);
        assert_eq!(pts[1], vec![0.0, 0.0]);
        assert_eq!(pts[14], vec![1.0, 1.0]);
        assert_eq!(b.flat_index(&[4, 2]), 14);
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(GridBox::interval(1.0, 1.0, 4).is_err());
        assert!(GridBox::interval(0.0, 1.0, 0).is_err());
        assert!(GridBox::new(vec![0.0], vec![1.0, 2.0], vec![3]).is_err());
    }

    #[test]
    fn json_defaults_resolution() {
        let b: GridBox = serde_json::from_str(r#"{"lower":[0,0],"upper":[1,2]}"#).unwrap();
        assert_eq!(b.resolution(), &[64, 64]);
        assert!(serde_json::from_str::<GridBox>(r#"{"lower":[1],"upper":[0]}"#).is_err());
    }

    #[test]
    fn indices_cover_subbox() {
        let b = GridBox::interval(0.0, 1.0, 100).unwrap();
        let idx = b.indices_within(&[0.305], &[0.4]);
        let inside: Vec<usize> = (0..=100)
            .filter(|&j| (0.305..=0.4).contains(&b.coordinate(0, j)))
            .collect();
        for j in inside {
            assert!(idx.contains(&j));
        }
        assert!(b.indices_within(&[2.0], &[3.0]).is_empty());
    }
}
