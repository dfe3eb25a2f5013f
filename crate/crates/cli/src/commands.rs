use std::path::Path;
use std::sync::Arc;

use anyhow::{ensure, Result};
use serde::Serialize;

use grflab_core::counterexample::counterexample_report;
use grflab_core::jet::{scan_nondegeneracy, Certificate};
use grflab_core::kernel::{check_psd, check_symmetry, PsdReport, SymmetryReport, MAX_PSD_POINTS};
use grflab_core::linalg::Matrix;
use grflab_core::mc::{estimate_probability, gaussian_ratio, LimitStudy, MCEstimate};
use grflab_core::report::{canonical_digest, field_digest};
use grflab_core::{
    kernel_distance, kernel_seminorm, sample as draw, CovarianceKernel, EventSpec, GridBox, KLField,
    Kernel, KernelSeminormSpec, MultiIndex, RandomStream,
};

use crate::input::{build_grid, load_json};
use crate::output::{axis_columns, Csv, Report};
use crate::{GridArgs, KernelSource, McArgs, ValidateTarget};

/// Where a kernel came from: the digest of its field, or of the closed-form
/// kernel description.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_digest: Option<String>,
}

impl Provenance {
    fn of(kernel: &CovarianceKernel) -> Self {
        match kernel {
            CovarianceKernel::FromKl { field } => Self {
                field_digest: Some(field_digest(field)),
                kernel_digest: None,
            },
            CovarianceKernel::ClosedForm { .. } => Self {
                field_digest: None,
                kernel_digest: Some(canonical_digest(kernel)),
            },
        }
    }

    fn digest(&self) -> &str {
        self.field_digest
            .as_deref()
            .or(self.kernel_digest.as_deref())
            .unwrap_or_default()
    }
}

fn load_field(path: &Path) -> Result<Arc<KLField>> {
    Ok(Arc::new(load_json(path, "field")?))
}

fn load_kernel_from(kernel: Option<&Path>, field: Option<&Path>) -> Result<CovarianceKernel> {
    match (kernel, field) {
        (Some(k), _) => load_json(k, "kernel"),
        (None, Some(f)) => Ok(CovarianceKernel::from_field(load_field(f)?)),
        (None, None) => anyhow::bail!("need --kernel or --field"),
    }
}

fn load_kernel(source: &KernelSource) -> Result<(CovarianceKernel, Provenance)> {
    let k = load_kernel_from(source.kernel.as_deref(), source.field.as_deref())?;
    let p = Provenance::of(&k);
    Ok((k, p))
}

fn fmt_point(p: &[f64]) -> Vec<String> {
    p.iter().map(|x| x.to_string()).collect()
}

#[derive(Serialize)]
struct SampleReport<'a> {
    field_digest: String,
    seed: u64,
    #[serde(rename = "box")]
    grid: &'a GridBox,
    points: Vec<Vec<f64>>,
    paths: Vec<PathRecord>,
}

#[derive(Serialize)]
struct PathRecord {
    index: usize,
    coeffs: Vec<f64>,
    values: Vec<Vec<f64>>,
}

pub fn sample(field_path: &Path, grid: &GridArgs, count: usize, seed: u64) -> Result<Report> {
    let field = load_field(field_path)?;
    let grid = build_grid(&grid.domain, grid.resolution, field.m())?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let path = draw(&field, &mut RandomStream::new(seed, i as u64));
        let table = path.tabulate(&grid)?;
        paths.push(PathRecord {
            index: i,
            coeffs: path.coeffs().to_vec(),
            values: table.into_iter().map(|(_, v)| v).collect(),
        });
    }
    let points = grid.points();
    let mut header = vec!["path".to_string()];
    header.extend(axis_columns("x", field.m()));
    header.extend(axis_columns("value", field.k()));
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for p in &paths {
        for (x, v) in points.iter().zip(&p.values) {
            let mut row = vec![p.index.to_string()];
            row.extend(fmt_point(x));
            row.extend(fmt_point(v));
            csv.row(row);
        }
    }
    let report = SampleReport {
        field_digest: field_digest(&field),
        seed,
        grid: &grid,
        points,
        paths,
    };
    Ok(Report::new(&report, csv.finish()))
}

#[derive(Serialize)]
struct CovarianceReport<'a> {
    #[serde(flatten)]
    provenance: Provenance,
    points: &'a [Vec<f64>],
    alpha: MultiIndex,
    beta: MultiIndex,
    matrix: Matrix,
    symmetry: SymmetryReport,
    psd: PsdReport,
}

pub fn covariance(
    source: &KernelSource,
    points: &[Vec<f64>],
    alpha: Option<MultiIndex>,
    beta: Option<MultiIndex>,
    rel_tol: f64,
) -> Result<Report> {
    let (kernel, provenance) = load_kernel(source)?;
    let (m, k) = (kernel.domain_dim(), kernel.output_dim());
    ensure!(
        points.len() <= MAX_PSD_POINTS,
        "at most {MAX_PSD_POINTS} points, got {}",
        points.len()
    );
    for p in points {
        ensure!(p.len() == m, "point {p:?} has {} coordinates, the kernel domain has {m}", p.len());
    }
    let alpha = alpha.unwrap_or_else(|| MultiIndex::zeros(m));
    let beta = beta.unwrap_or_else(|| MultiIndex::zeros(m));
    ensure!(alpha.dim() == m && beta.dim() == m, "multi-indices need {m} entries");

    let n = points.len();
    let mut matrix = Matrix::zeros(n * k, n * k);
    for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            let block = kernel.eval_deriv(p, q, &alpha, &beta)?;
            for a in 0..k {
                for b in 0..k {
                    matrix[(i * k + a, j * k + b)] = block[(a, b)];
                }
            }
        }
    }
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .map(|(i, j)| (points[i].clone(), points[j].clone()))
        .collect();
    let scale = pairs
        .iter()
        .map(|(p, q)| kernel.eval(p, q).max_abs())
        .fold(1.0, f64::max);
    let symmetry = check_symmetry(&kernel, &pairs, 1e-12 * scale);
    let psd = check_psd(&kernel, points, rel_tol)?;
    let passed = symmetry.pass && psd.pass;

    let mut csv = Csv::new(&["row", "col", "value"]);
    for r in 0..matrix.rows() {
        for c in 0..matrix.cols() {
            csv.row([r.to_string(), c.to_string(), matrix[(r, c)].to_string()]);
        }
    }
    let report = CovarianceReport {
        provenance,
        points,
        alpha,
        beta,
        matrix,
        symmetry,
        psd,
    };
    Ok(Report::new(&report, csv.finish()).with_verdict(passed))
}

#[derive(Serialize)]
struct SeminormReport {
    #[serde(flatten)]
    provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    minus: Option<Provenance>,
    quantity: &'static str,
    order: usize,
    #[serde(rename = "box")]
    grid: GridBox,
    value: f64,
}

pub fn seminorm(
    source: &KernelSource,
    minus_kernel: Option<&Path>,
    minus_field: Option<&Path>,
    order: usize,
    grid: &GridArgs,
) -> Result<Report> {
    let (kernel, provenance) = load_kernel(source)?;
    let grid = build_grid(&grid.domain, grid.resolution, kernel.domain_dim())?;
    let spec = KernelSeminormSpec::new(grid.clone(), order);
    let (quantity, value, minus) = if minus_kernel.is_some() || minus_field.is_some() {
        let other = load_kernel_from(minus_kernel, minus_field)?;
        let d = kernel_distance(&kernel, &other, &spec)?;
        ("distance", d, Some(Provenance::of(&other)))
    } else {
        ("seminorm", kernel_seminorm(&kernel, &spec)?, None)
    };
    let mut csv = Csv::new(&["quantity", "order", "value", "digest"]);
    csv.row([quantity.to_string(), order.to_string(), value.to_string(), provenance.digest().to_string()]);
    let report = SeminormReport {
        provenance,
        minus,
        quantity,
        order,
        grid,
        value,
    };
    Ok(Report::new(&report, csv.finish()))
}

#[derive(Serialize)]
struct JetScanReport {
    #[serde(flatten)]
    provenance: Provenance,
    order: usize,
    rel_tol: f64,
    #[serde(rename = "box")]
    grid: GridBox,
    all_pass: bool,
    n_points: usize,
    n_failed: usize,
    worst_index: usize,
    worst_point: Vec<f64>,
    worst_ratio: f64,
    certificates: Vec<Certificate>,
}

pub fn jet_scan(
    source: &KernelSource,
    order: usize,
    grid: &GridArgs,
    rel_tol: f64,
    require_pass: bool,
) -> Result<Report> {
    let (kernel, provenance) = load_kernel(source)?;
    let m = kernel.domain_dim();
    let grid = build_grid(&grid.domain, grid.resolution, m)?;
    let scan = scan_nondegeneracy(&kernel, &grid, order, rel_tol)?;

    let mut header = vec!["index".to_string()];
    header.extend(axis_columns("x", m));
    header.extend(["ratio", "pass", "jet_dim", "rank_estimate"].map(String::from));
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (i, c) in scan.certificates.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(fmt_point(&c.point));
        row.extend([c.ratio.to_string(), c.pass.to_string(), c.jet_dim.to_string(), c.rank_estimate.to_string()]);
        csv.row(row);
    }
    let passed = !require_pass || scan.all_pass;
    let report = JetScanReport {
        provenance,
        order,
        rel_tol,
        grid,
        all_pass: scan.all_pass,
        n_points: scan.n_points,
        n_failed: scan.n_failed,
        worst_index: scan.worst_index,
        worst_point: scan.worst_point,
        worst_ratio: scan.worst_ratio,
        certificates: scan.certificates,
    };
    Ok(Report::new(&report, csv.finish()).with_verdict(passed))
}

#[derive(Serialize)]
struct EstimateReport {
    event: &'static str,
    n: usize,
    p_hat: f64,
    stderr: f64,
    ci95: [f64; 2],
    seed: u64,
    field_digest: String,
}

const ESTIMATE_HEADER: [&str; 8] = ["event", "n", "p_hat", "stderr", "ci95_lo", "ci95_hi", "seed", "field_digest"];

pub fn estimate(field_path: &Path, event_path: &Path, mc: &McArgs) -> Result<Report> {
    let field = load_field(field_path)?;
    let event: EventSpec = load_json(event_path, "event")?;
    let e = estimate_probability(&field, &event, mc.samples, mc.seed)?;
    let report = EstimateReport {
        event: event.name(),
        n: e.n_samples,
        p_hat: e.p_hat,
        stderr: e.stderr,
        ci95: e.ci95,
        seed: e.seed,
        field_digest: field_digest(&field),
    };
    let mut csv = Csv::new(&ESTIMATE_HEADER);
    csv.row([
        report.event.to_string(),
        report.n.to_string(),
        report.p_hat.to_string(),
        report.stderr.to_string(),
        report.ci95[0].to_string(),
        report.ci95[1].to_string(),
        report.seed.to_string(),
        report.field_digest.clone(),
    ]);
    Ok(Report::new(&report, csv.finish()))
}

#[derive(Serialize)]
struct RatioReport {
    field_digest: String,
    order: usize,
    #[serde(rename = "box")]
    grid: GridBox,
    ratio: f64,
    sup_mean: MCEstimate,
    kernel_seminorm: f64,
    zero_kernel: bool,
}

pub fn gauss_ratio(field_path: &Path, order: usize, grid: &GridArgs, mc: &McArgs) -> Result<Report> {
    let field = load_field(field_path)?;
    let grid = build_grid(&grid.domain, grid.resolution, field.m())?;
    let g = gaussian_ratio(&field, &grid, order, mc.samples, mc.seed)?;
    let mut csv = Csv::new(&["order", "ratio", "sup_mean", "sup_stderr", "kernel_seminorm", "zero_kernel", "seed", "field_digest"]);
    let digest = field_digest(&field);
    csv.row([
        order.to_string(),
        g.ratio.to_string(),
        g.sup_mean.p_hat.to_string(),
        g.sup_mean.stderr.to_string(),
        g.kernel_seminorm.to_string(),
        g.zero_kernel.to_string(),
        mc.seed.to_string(),
        digest.clone(),
    ]);
    let report = RatioReport {
        field_digest: digest,
        order,
        grid,
        ratio: g.ratio,
        sup_mean: g.sup_mean,
        kernel_seminorm: g.kernel_seminorm,
        zero_kernel: g.zero_kernel,
    };
    Ok(Report::new(&report, csv.finish()))
}

#[derive(Serialize)]
struct LimitReport {
    study_digest: String,
    event: &'static str,
    distance_order: usize,
    n_samples: usize,
    seed: u64,
    rows: Vec<LimitRecord>,
}

#[derive(Serialize)]
struct LimitRecord {
    /// Position in the sequence; null for the limit field.
    index: Option<usize>,
    field_digest: String,
    kernel_distance: f64,
    p_hat: f64,
    stderr: f64,
    ci95: [f64; 2],
}

pub fn limit_study(path: &Path, mc: &McArgs) -> Result<Report> {
    let study: LimitStudy = load_json(path, "limit study")?;
    let rows = grflab_core::mc::limit_study(&study, mc.samples, mc.seed)?;
    let fields = study.fields.iter().chain(std::iter::once(&study.limit));
    let records: Vec<LimitRecord> = rows
        .into_iter()
        .zip(fields)
        .map(|(r, f)| LimitRecord {
            index: r.index,
            field_digest: field_digest(f),
            kernel_distance: r.kernel_distance,
            p_hat: r.estimate.p_hat,
            stderr: r.estimate.stderr,
            ci95: r.estimate.ci95,
        })
        .collect();
    let mut csv = Csv::new(&["index", "kernel_distance", "p_hat", "stderr", "ci95_lo", "ci95_hi", "field_digest"]);
    for r in &records {
        csv.row([
            r.index.map_or("limit".to_string(), |i| i.to_string()),
            r.kernel_distance.to_string(),
            r.p_hat.to_string(),
            r.stderr.to_string(),
            r.ci95[0].to_string(),
            r.ci95[1].to_string(),
            r.field_digest.clone(),
        ]);
    }
    let report = LimitReport {
        study_digest: canonical_digest(&study),
        event: study.event.name(),
        distance_order: study.distance_order(),
        n_samples: mc.samples,
        seed: mc.seed,
        rows: records,
    };
    Ok(Report::new(&report, csv.finish()))
}

pub fn counterexample(ns: &[usize], mc: &McArgs) -> Result<Report> {
    let report = counterexample_report(ns, mc.samples, mc.seed)?;
    Ok(Report {
        json: report.to_json(),
        csv: report.to_csv(),
        passed: true,
    })
}

#[derive(Serialize)]
struct ValidateReport {
    kind: &'static str,
    valid: bool,
    digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    symmetry: Option<SymmetryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psd: Option<PsdReport>,
}

/// Symmetry over all pairs and PSD on a unit-cube grid of at most
/// [`MAX_PSD_POINTS`] points.
fn kernel_checks(kernel: &CovarianceKernel, per_axis: usize) -> Result<(SymmetryReport, PsdReport)> {
    let m = kernel.domain_dim();
    let mut n = per_axis.max(2);
    while n.pow(m as u32) > MAX_PSD_POINTS && n > 2 {
        n -= 1;
    }
    let grid = GridBox::new(vec![0.0; m], vec![1.0; m], vec![n - 1; m])?;
    let points = grid.points();
    ensure!(points.len() <= MAX_PSD_POINTS, "domain dimension {m} too large for the PSD check");
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| points[i..].iter().map(move |q| (p.clone(), q.clone())))
        .collect();
    let scale = pairs
        .iter()
        .map(|(p, q)| kernel.eval(p, q).max_abs())
        .fold(1.0, f64::max);
    Ok((
        check_symmetry(kernel, &pairs, 1e-12 * scale),
        check_psd(kernel, &points, grflab_core::kernel::PSD_REL_TOL)?,
    ))
}

pub fn validate(target: &ValidateTarget, per_axis: usize) -> Result<Report> {
    let (kind, digest, checks) = if let Some(p) = &target.field {
        let field = load_field(p)?;
        let kernel = CovarianceKernel::from_field(field.clone());
        ("field", field_digest(&field), Some(kernel_checks(&kernel, per_axis)?))
    } else if let Some(p) = &target.kernel {
        let kernel: CovarianceKernel = load_json(p, "kernel")?;
        let digest = Provenance::of(&kernel).digest().to_string();
        ("kernel", digest, Some(kernel_checks(&kernel, per_axis)?))
    } else if let Some(p) = &target.event {
        let event: EventSpec = load_json(p, "event")?;
        ("event", canonical_digest(&event), None)
    } else if let Some(p) = &target.study {
        let study: LimitStudy = load_json(p, "limit study")?;
        let (m, k) = (study.limit.m(), study.limit.k());
        for (i, f) in study.fields.iter().enumerate() {
            ensure!(
                f.m() == m && f.k() == k,
                "fields[{i}] maps R^{} -> R^{}, the limit maps R^{m} -> R^{k}",
                f.m(),
                f.k()
            );
        }
        ensure!(study.event.grid().dim() == m, "event box dimension differs from the fields");
        ensure!(study.grid.dim() == m, "study box dimension differs from the fields");
        ("limit_study", canonical_digest(&study), None)
    } else {
        anyhow::bail!("nothing to validate");
    };
    let (symmetry, psd) = match checks {
        Some((s, p)) => (Some(s), Some(p)),
        None => (None, None),
    };
    let valid = symmetry.as_ref().map_or(true, |s| s.pass) && psd.as_ref().map_or(true, |p| p.pass);
    let mut csv = Csv::new(&["kind", "valid", "digest"]);
    csv.row([kind.to_string(), valid.to_string(), digest.clone()]);
    let report = ValidateReport {
        kind,
        valid,
        digest,
        symmetry,
        psd,
    };
    Ok(Report::new(&report, csv.finish()).with_verdict(valid))
}
