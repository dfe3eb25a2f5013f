use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde_path_to_error::Segment;

use grflab_core::grid::default_resolution;
use grflab_core::{GridBox, MultiIndex};

/// Reads and deserialises a JSON file. Schema violations name the offending
/// location as a JSON pointer.
pub fn load_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {what} file {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        anyhow!(
            "schema error in {what} file {} at {}: {}",
            path.display(),
            json_pointer(e.path()),
            e.inner()
        )
    })
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// `"0.1,0.2"` as a point.
pub fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad coordinate {t:?}: {e}")))
        .collect()
}

/// `"2,0"` as a multi-index.
pub fn parse_multi_index(s: &str) -> Result<MultiIndex, String> {
    s.split(',')
        .map(|t| t.trim().parse::<u32>().map_err(|e| format!("bad multi-index entry {t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(MultiIndex::new)
}

/// `"LO:HI"` as an axis interval.
pub fn parse_axis(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got {s:?}"))?;
    let lo = lo.trim().parse::<f64>().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi = hi.trim().parse::<f64>().map_err(|e| format!("bad upper bound: {e}"))?;
    Ok((lo, hi))
}

/// The box `Π [lo_i, hi_i]` for a domain of dimension `m`. No axes means the
/// unit cube; a single axis is repeated in every direction.
pub fn build_grid(axes: &[(f64, f64)], resolution: Option<usize>, m: usize) -> Result<GridBox> {
    let axes: Vec<(f64, f64)> = match axes.len() {
        0 => vec![(0.0, 1.0); m],
        1 => vec![axes[0]; m],
        n if n == m => axes.to_vec(),
        n => bail!("got {n} --domain axes for a {m}-dimensional domain"),
    };
    let res = resolution.unwrap_or_else(|| default_resolution(m));
    Ok(GridBox::new(
        axes.iter().map(|a| a.0).collect(),
        axes.iter().map(|a| a.1).collect(),
        vec![res; m],
    )?)
}
