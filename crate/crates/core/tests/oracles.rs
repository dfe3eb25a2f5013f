//! Checks against values computed independently of the library: quadrature,
//! bisection, an external eigen-solver and closed-form Gaussian integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use grflab_core::counterexample::{self, a_n, build_x_n, exact_small_norm_prob, CounterexampleConfig};
use grflab_core::jet::{jet_covariance, jet_eval, nondegeneracy_certificate, DEFAULT_REL_TOL};
use grflab_core::linalg::{symmetric_eigen, Matrix};
use grflab_core::mc::{empirical_sup_mean, estimate_probability, gaussian_ratio, limit_study, LimitStudy};
use grflab_core::{
    normal_cdf, normal_quantile, sample, BasisFunction, EventSpec, GridBox, KLField, Kernel,
    RandomStream,
};

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn bisect_quantile(u: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn cdf_matches_quadrature() {
    for x in [-5.0, -2.3, -1.0, -0.1, 0.0, 0.4, 1.0, 1.96, 3.5] {
        let q = 0.5 + simpson(pdf, 0.0, x, 2000);
        assert!((normal_cdf(x) - q).abs() < 1e-12, "x = {x}");
    }
    assert_eq!(normal_cdf(0.0), 0.5);
    assert!((normal_cdf(1.2815515655446004) - 0.9).abs() < 1e-15);
}

#[test]
fn quantile_matches_bisection() {
    assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    for (u, v) in [(0.9, 1.2815515655), (0.995, 2.5758293035), (0.75, 0.6744897502)] {
        let q = normal_quantile(u).unwrap();
        assert!((q - v).abs() < 1e-9, "u = {u}");
        assert!((q - bisect_quantile(u)).abs() < 1e-12);
    }
    for u in [1e-300, 1e-12, 0.01, 0.3, 0.7, 0.97, 1.0 - 1e-12] {
        let q = normal_quantile(u).unwrap();
        // Φ near 1 cannot resolve small upper tails, so bisect 1 − u (exact here)
        let oracle = if u > 0.5 { -bisect_quantile(1.0 - u) } else { bisect_quantile(u) };
        assert!((q - oracle).abs() < 1e-9 * (1.0 + q.abs()), "u = {u}");
    }
}

#[test]
fn counterexample_levels() {
    for (n, v) in [(2, 0.6744897502), (5, 1.2815515655), (100, 2.5758293035)] {
        assert!((a_n(n).unwrap() - v).abs() < 1e-9);
    }
    let sups = counterexample::kernel_sup_decay(&[5, 100]).unwrap();
    assert!((sups[0] - 0.6089).abs() < 1e-4);
    assert!((sups[1] - 0.1507).abs() < 1e-4);
}

#[test]
fn jacobi_matches_nalgebra() {
    let mut rng = RandomStream::new(5, 0);
    for n in [1, 2, 3, 6, 10, 17] {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = 2.0 * rng.next_uniform() - 1.0;
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let ours = symmetric_eigen(&a).unwrap();
        let oracle = DMatrix::from_row_slice(n, n, a.as_slice()).symmetric_eigen();
        let mut theirs: Vec<f64> = oracle.eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-10, "n = {n}: {x} vs {y}");
        }
        // A v = λ v for every returned pair
        for (c, lambda) in ours.values.iter().enumerate() {
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[(i, j)] * ours.vectors[(j, c)]).sum();
                assert!((av - lambda * ours.vectors[(i, c)]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn constant_field_small_norm_probability() {
    let f = KLField::scalar_line(vec![BasisFunction::power(0)]).unwrap();
    let event = EventSpec::SupNormBelow {
        grid: GridBox::unit_interval(),
        order: 0,
        threshold: 1.0,
    };
    let e = estimate_probability(&f, &event, 20_000, 0).unwrap();
    assert!(e.covers(2.0 * normal_cdf(1.0) - 1.0));
    assert!((2.0 * normal_cdf(1.0) - 1.0 - 0.682689).abs() < 1e-6);
}

/// `P{sign a ≠ sign(a + b)}` for independent standard normals, by a product
/// Simpson rule over the region where the signs differ.
fn opposite_sign_probability() -> f64 {
    simpson(
        |a| {
            // for fixed a, a + b has the opposite sign iff b < −a (a > 0) or b > −a (a < 0)
            let tail = if a > 0.0 {
                simpson(pdf, -12.0, -a, 400)
            } else {
                simpson(pdf, -a, 12.0, 400)
            };
            pdf(a) * tail
        },
        -12.0,
        12.0,
        2000,
    )
}

#[test]
fn single_zero_of_random_line() {
    let exact = opposite_sign_probability();
    assert!((exact - 0.25).abs() < 1e-6);
    let f = KLField::scalar_line(vec![BasisFunction::power(0), BasisFunction::power(1)]).unwrap();
    let event = EventSpec::ZeroCountEquals {
        grid: GridBox::unit_interval(),
        count: 1,
    };
    let e = estimate_probability(&f, &event, 20_000, 0).unwrap();
    assert!(e.covers(exact), "{e:?}");
}

#[test]
fn half_normal_mean_and_ratio() {
    let f = KLField::scalar_line(vec![BasisFunction::power(0)]).unwrap();
    let grid = GridBox::unit_interval();
    let target = (2.0 / PI).sqrt();
    let e = empirical_sup_mean(&f, &grid, 0, 20_000, 0).unwrap();
    assert!((e.p_hat - target).abs() <= 3.0 * e.stderr, "{e:?}");
    let g = gaussian_ratio(&f, &grid, 1, 20_000, 0).unwrap();
    assert_eq!(g.kernel_seminorm, 1.0);
    assert_eq!(g.ratio, e.p_hat);
    let empty = gaussian_ratio(&KLField::empty(1, 1), &grid, 1, 200, 0).unwrap();
    assert!(empty.zero_kernel && empty.ratio == 0.0);
    assert_eq!(empirical_sup_mean(&KLField::empty(1, 1), &grid, 0, 200, 0).unwrap().p_hat, 0.0);
}

fn mixed_field(seed: u64) -> KLField {
    let mut rng = RandomStream::new(seed, u64::MAX);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.next_uniform();
    let mut basis = Vec::new();
    for e in [[0, 0], [1, 0], [0, 1], [2, 1], [1, 2]] {
        basis.push(BasisFunction::monomial(e.to_vec(), vec![u(-1.0, 1.0), u(-1.0, 1.0)]));
    }
    for _ in 0..5 {
        let w = vec![u(-3.0, 3.0), u(-3.0, 3.0)];
        basis.push(BasisFunction::harmonic(w, u(0.0, 6.0), vec![u(-1.0, 1.0), u(-1.0, 1.0)]));
    }
    let sigmas = (0..10).map(|_| u(0.5, 1.5)).collect();
    KLField::new(2, 2, basis, sigmas).unwrap()
}

#[test]
fn empirical_covariance_matches_kernel_for_three_seeds() {
    let field = Arc::new(mixed_field(1));
    let pairs = [([0.1, 0.2], [0.9, 0.4]), ([0.5, 0.5], [0.5, 0.5]), ([0.0, 1.0], [0.7, 0.3])];
    let n = 100_000;
    for seed in [0, 1, 2] {
        let paths: Vec<_> = (0..n)
            .map(|i| sample(&field, &mut RandomStream::new(seed, i)))
            .collect();
        for (p, q) in &pairs {
            let k = field.eval(p, q);
            let vals: Vec<(Vec<f64>, Vec<f64>)> =
                paths.iter().map(|s| (s.value(p).unwrap(), s.value(q).unwrap())).collect();
            for j in 0..2 {
                for l in 0..2 {
                    let prods: Vec<f64> = vals.iter().map(|(a, b)| a[j] * b[l]).collect();
                    let mean = prods.iter().sum::<f64>() / n as f64;
                    let var = prods.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
                    let se = (var / n as f64).sqrt();
                    assert!((mean - k[(j, l)]).abs() <= 5.0 * se, "seed {seed} entry ({j},{l})");
                }
            }
        }
    }
}

#[test]
fn empirical_jet_covariance_matches() {
    let field = Arc::new(
        KLField::scalar_line(vec![
            BasisFunction::power(0),
            BasisFunction::power(1),
            BasisFunction::power(2).scaled(std::f64::consts::FRAC_1_SQRT_2),
            BasisFunction::harmonic(vec![2.0], 0.3, vec![0.5]),
        ])
        .unwrap(),
    );
    let p = [0.4];
    let r = 2;
    assert!(nondegeneracy_certificate(field.as_ref(), &p, r, DEFAULT_REL_TOL).unwrap().pass);
    let cov = jet_covariance(field.as_ref(), &p, r).unwrap().matrix;
    let n = 100_000;
    let jets: Vec<Vec<f64>> = (0..n)
        .map(|i| jet_eval(&sample(&field, &mut RandomStream::new(9, i)), &p, r).unwrap().values)
        .collect();
    let d = cov.rows();
    for x in 0..d {
        for y in 0..d {
            let prods: Vec<f64> = jets.iter().map(|j| j[x] * j[y]).collect();
            let mean = prods.iter().sum::<f64>() / n as f64;
            let var = prods.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - cov[(x, y)]).abs() <= 5.0 * (var / n as f64).sqrt(), "entry ({x},{y})");
        }
    }
}

#[test]
fn small_norm_probability_for_small_n() {
    for n in [2, 5] {
        let config = CounterexampleConfig::new(n).unwrap();
        let field = build_x_n(&config).unwrap();
        let e = estimate_probability(&field, &counterexample::small_norm_event(&config), 20_000, 0).unwrap();
        let exact = exact_small_norm_prob(n);
        let se = (exact * (1.0 - exact) / 20_000.0).sqrt();
        assert!((e.p_hat - exact).abs() <= 3.0 * se, "n = {n}: {} vs {exact}", e.p_hat);
    }
}

#[test]
fn sup_mean_of_x_100_exceeds_one() {
    let e = counterexample::sup_mean(100, 2000, 0).unwrap();
    // E max of 10⁴ half-normals over a_100 is about 1.7
    assert!(e.p_hat >= 1.0 && (e.p_hat - 1.7).abs() < 0.2, "{e:?}");
}

#[test]
fn vanishing_kernels_with_non_vanishing_fields() {
    // resolution 200 is a multiple of 2n² for n = 2, 5, 10, so every centre
    // of every field in the sequence is a grid point
    let grid = GridBox::interval(0.0, 1.0, 200).unwrap();
    let fields: Vec<KLField> = [2, 5, 10]
        .iter()
        .map(|&n| build_x_n(&CounterexampleConfig::new(n).unwrap()).unwrap())
        .collect();
    let study = LimitStudy {
        fields,
        limit: KLField::empty(1, 1),
        event: EventSpec::SupNormBelow {
            grid: grid.clone(),
            order: 0,
            threshold: 1.0,
        },
        grid,
        r: 0,
        kernel_order: Some(0),
    };
    let rows = limit_study(&study, 20_000, 0).unwrap();
    let dist: Vec<f64> = rows[..3].iter().map(|r| r.kernel_distance).collect();
    assert!(dist.windows(2).all(|w| w[1] < w[0]));
    for (row, n) in rows.iter().zip([2, 5, 10]) {
        let a = a_n(n).unwrap();
        assert!((row.kernel_distance - 1.0 / (a * a)).abs() < 1e-12);
        assert!(row.estimate.covers(exact_small_norm_prob(n)) || row.estimate.p_hat < 0.01);
    }
    let p: Vec<f64> = rows[..3].iter().map(|r| r.estimate.p_hat).collect();
    assert!(p.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(rows[3].estimate.p_hat, 1.0);
}

#[test]
fn constant_sequence_rows_agree() {
    let f = KLField::scalar_line(vec![BasisFunction::power(0), BasisFunction::power(1)]).unwrap();
    let grid = GridBox::unit_interval();
    let study = LimitStudy {
        fields: vec![f.clone(), f.clone()],
        limit: f,
        event: EventSpec::SupNormBelow {
            grid: grid.clone(),
            order: 0,
            threshold: 1.5,
        },
        grid,
        r: 0,
        kernel_order: None,
    };
    let rows = limit_study(&study, 5000, 3).unwrap();
    for r in &rows {
        assert_eq!(r.kernel_distance, 0.0);
        assert_eq!(r.estimate, rows[2].estimate);
    }
}
