use std::sync::Arc;

use proptest::prelude::*;

use grflab_core::jet::{jet_covariance, nondegeneracy_certificate, DEFAULT_REL_TOL};
use grflab_core::kernel::{gram_matrix, ScaledKernel};
use grflab_core::linalg::symmetric_eigen;
use grflab_core::mc::estimate_probability;
use grflab_core::{
    cm_inner, fd_check, kernel_distance, kernel_seminorm, normal_cdf, normal_quantile, sample,
    support_basis, BasisFunction, EventSpec, GridBox, KLField, Kernel, KernelSeminormSpec,
    MultiIndex, RandomStream, SamplePath,
};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn amplitude(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, k)
}

fn monomial(m: usize, k: usize) -> impl Strategy<Value = BasisFunction> {
    (prop::collection::vec(0u32..4, m), amplitude(k))
        .prop_map(|(e, a)| BasisFunction::monomial(e, a))
}

fn harmonic(m: usize, k: usize) -> impl Strategy<Value = BasisFunction> {
    (prop::collection::vec(-3.0..3.0f64, m), 0.0..6.3f64, amplitude(k))
        .prop_map(|(w, ph, a)| BasisFunction::harmonic(w, ph, a))
}

fn bump(m: usize, k: usize) -> impl Strategy<Value = BasisFunction> {
    (prop::collection::vec(0.0..1.0f64, m), 0.3..1.2f64, amplitude(k))
        .prop_map(|(c, r, a)| BasisFunction::bump(c, r, a))
}

fn basis_function(m: usize, k: usize) -> impl Strategy<Value = BasisFunction> {
    let plain = prop_oneof![monomial(m, k), harmonic(m, k), bump(m, k)];
    (plain, prop::option::of(-3.0..3.0f64)).prop_map(|(f, c)| match c {
        Some(c) => f.scaled(c),
        None => f,
    })
}

fn field(m: usize, k: usize, max_len: usize) -> impl Strategy<Value = KLField> {
    prop::collection::vec((basis_function(m, k), 0.1..2.0f64), 1..=max_len).prop_map(move |terms| {
        let (basis, sigmas) = terms.into_iter().unzip();
        KLField::new(m, k, basis, sigmas).unwrap()
    })
}

fn any_field() -> impl Strategy<Value = KLField> {
    (1usize..=2, 1usize..=2).prop_flat_map(|(m, k)| field(m, k, 5))
}

fn point(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.5..1.5f64, m)
}

fn multi_index(m: usize, r: u32) -> impl Strategy<Value = MultiIndex> {
    prop::collection::vec(0..=r, m)
        .prop_filter("bounded order", move |v| v.iter().sum::<u32>() <= r)
        .prop_map(MultiIndex::new)
}

fn coarse_grid(m: usize) -> GridBox {
    GridBox::new(vec![0.0; m], vec![1.0; m], vec![if m == 1 { 64 } else { 12 }; m]).unwrap()
}

fn same_field_paths(
    max_len: usize,
) -> impl Strategy<Value = (Arc<KLField>, Vec<f64>, Vec<f64>)> {
    field(1, 1, max_len).prop_flat_map(|f| {
        let n = f.len();
        (
            Just(Arc::new(f)),
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n),
        )
    })
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn scaled_is_exactly_scaled(
        f in basis_function(2, 2),
        c in -5.0..5.0f64,
        p in point(2),
        a in multi_index(2, 4),
    ) {
        let base = f.eval_partial(&p, &a).unwrap();
        let scaled = f.clone().scaled(c).eval_partial(&p, &a).unwrap();
        let expected: Vec<f64> = base.iter().map(|v| c * v).collect();
        prop_assert_eq!(scaled, expected);
    }

    #[test]
    fn derivatives_match_central_differences(
        f in prop_oneof![monomial(2, 1), harmonic(2, 1)],
        p in prop::collection::vec(-1.0..1.0f64, 2),
        a in multi_index(2, 4),
    ) {
        let e = fd_check(&f, &p, &a, 1e-5).unwrap();
        let tol = if a.order() <= 2 { 1e-6 } else { 1e-4 };
        prop_assert!(e <= tol, "error {} for {:?} at {:?}", e, a, p);
    }

    #[test]
    fn bump_derivatives_match_central_differences(
        (c, rho, amp) in (prop::collection::vec(0.0..1.0f64, 2), 0.5..1.2f64, amplitude(1)),
        (u, theta) in (0.0..0.9f64, 0.0..6.3f64),
        a in multi_index(2, 4),
    ) {
        let f = BasisFunction::bump(c.clone(), rho, amp);
        let p = vec![c[0] + rho * u * theta.cos(), c[1] + rho * u * theta.sin()];
        let e = fd_check(&f, &p, &a, 1e-5).unwrap();
        let tol = if a.order() <= 2 { 1e-6 } else { 1e-4 };
        prop_assert!(e <= tol, "error {} for {:?} at {:?}", e, a, p);
    }

    #[test]
    fn graded_lex_is_strict_total_order(m in 1usize..=3, r in 0usize..=4) {
        let all = MultiIndex::enumerate(m, r);
        let mut c: usize = 1;
        for i in 1..=r {
            c = c * (m + i) / i;
        }
        prop_assert_eq!(all.len(), c);
        for w in all.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        for (i, a) in all.iter().enumerate() {
            prop_assert_eq!(a.graded_lex_position(r), Some(i));
        }
    }

    #[test]
    fn kernel_transpose_swap(
        f in any_field(),
        seed in any::<u64>(),
        ab in (0u32..=2, 0u32..=2, 0u32..=2, 0u32..=2),
    ) {
        let m = f.m();
        let mut rng = RandomStream::new(seed, 0);
        let p: Vec<f64> = (0..m).map(|_| rng.next_uniform()).collect();
        let q: Vec<f64> = (0..m).map(|_| rng.next_uniform()).collect();
        let mk = |x: u32, y: u32| MultiIndex::new([x, y][..m].to_vec());
        let (a, b) = (mk(ab.0, ab.1), mk(ab.2, ab.3));
        let left = f.eval_deriv(&p, &q, &a, &b).unwrap();
        let right = f.eval_deriv(&q, &p, &b, &a).unwrap().transpose();
        prop_assert!(left.sub(&right).max_abs() <= 1e-12 * (1.0 + left.max_abs()));
    }

    #[test]
    fn kernel_seminorm_is_homogeneous(f in field(1, 1, 4), c in -10.0..10.0f64, r in 0usize..=1) {
        let spec = KernelSeminormSpec::new(coarse_grid(1), r);
        let base = kernel_seminorm(&f, &spec).unwrap();
        let scaled = kernel_seminorm(&ScaledKernel { inner: &f, factor: c }, &spec).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + c.abs() * base));
    }

    #[test]
    fn kernel_distance_triangle(
        a in field(1, 1, 3),
        b in field(1, 1, 3),
        c in field(1, 1, 3),
    ) {
        let spec = KernelSeminormSpec::new(coarse_grid(1), 1);
        let ab = kernel_distance(&a, &b, &spec).unwrap();
        let bc = kernel_distance(&b, &c, &spec).unwrap();
        let ac = kernel_distance(&a, &c, &spec).unwrap();
        prop_assert!(ac <= ab + bc + 1e-10);
    }

    #[test]
    fn gram_rank_bounded_by_basis_size(f in field(1, 1, 3), pts in prop::collection::vec(-1.0..2.0f64, 6..10)) {
        let points: Vec<Vec<f64>> = pts.iter().map(|&x| vec![x]).collect();
        let eig = symmetric_eigen(&gram_matrix(&f, &points)).unwrap();
        let max = eig.max().abs();
        let beyond = eig.values.len() - f.len();
        for v in &eig.values[..beyond] {
            prop_assert!(v.abs() <= 1e-9 * max.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn sample_evaluation_is_linear(
        (f, c1, c2) in same_field_paths(5),
        x in -0.5..1.5f64,
        a in 0u32..=2,
    ) {
        let s1 = SamplePath::new(f.clone(), c1).unwrap();
        let s2 = SamplePath::new(f, c2).unwrap();
        let alpha = MultiIndex::new(vec![a]);
        let sum = (&s1 + &s2).eval(&[x], &alpha).unwrap()[0];
        let parts = s1.eval(&[x], &alpha).unwrap()[0] + s2.eval(&[x], &alpha).unwrap()[0];
        prop_assert!((sum - parts).abs() <= 1e-12 * (1.0 + parts.abs()));
    }

    #[test]
    fn path_seminorm_homogeneous_and_subadditive(
        (f, c1, c2) in same_field_paths(4),
        t in -4.0..4.0f64,
        r in 0usize..=2,
    ) {
        let grid = coarse_grid(1);
        let s1 = SamplePath::new(f.clone(), c1.clone()).unwrap();
        let s2 = SamplePath::new(f.clone(), c2).unwrap();
        let scaled = SamplePath::new(f, c1.iter().map(|c| t * c).collect()).unwrap();
        let n1 = s1.seminorm(&grid, r).unwrap();
        let n2 = s2.seminorm(&grid, r).unwrap();
        let ns = scaled.seminorm(&grid, r).unwrap();
        prop_assert!((ns - t.abs() * n1).abs() <= 1e-12 * (1.0 + t.abs() * n1));
        prop_assert!((&s1 + &s2).seminorm(&grid, r).unwrap() <= n1 + n2 + 1e-12 * (1.0 + n1 + n2));
    }

    #[test]
    fn cm_inner_agrees_with_kernel(f in any_field(), seed in any::<u64>()) {
        let mut rng = RandomStream::new(seed, 1);
        let p: Vec<f64> = (0..f.m()).map(|_| rng.next_uniform()).collect();
        let q: Vec<f64> = (0..f.m()).map(|_| rng.next_uniform()).collect();
        for j in 0..f.k() {
            for l in 0..f.k() {
                let inner = cm_inner(&f, (&p, j), (&q, l)).unwrap();
                let k = f.eval(&p, &q)[(j, l)];
                prop_assert!((inner - k).abs() <= 1e-12 * (1.0 + k.abs()));
            }
        }
    }

    #[test]
    fn support_function_is_kernel_column(f in field(1, 2, 4), p in 0.0..1.0f64, j in 0usize..2) {
        let h = support_basis(&f, &[p], j).unwrap();
        for i in 0..50 {
            let q = i as f64 / 49.0;
            let hq = h.eval(&f, &[q]);
            let kq = f.eval(&[q], &[p]);
            for c in 0..2 {
                prop_assert!((hq[c] - kq[(c, j)]).abs() <= 1e-12 * (1.0 + kq[(c, j)].abs()));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic(f in any_field(), seed in any::<u64>(), index in any::<u64>()) {
        let f = Arc::new(f);
        let a = sample(&f, &mut RandomStream::new(seed, index));
        let b = sample(&f, &mut RandomStream::new(seed, index));
        prop_assert_eq!(
            a.coeffs().iter().map(|c| c.to_bits()).collect::<Vec<_>>(),
            b.coeffs().iter().map(|c| c.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn quantile_inverts_cdf(x in -6.0..6.0f64) {
        let back = normal_quantile(normal_cdf(x)).unwrap();
        prop_assert!((back - x).abs() <= 1e-8, "x = {}, back = {}", x, back);
    }

    #[test]
    fn jet_covariance_is_gram_of_basis_jets(f in field(2, 2, 4), p in point(2), r in 0usize..=2) {
        let cov = jet_covariance(&f, &p, r).unwrap().matrix;
        let alphas = MultiIndex::enumerate(2, r);
        let na = alphas.len();
        let dim = 2 * na;
        // J: rows are jet coordinates, columns are σ_n-scaled basis jets
        let mut jac = vec![vec![0.0; f.len()]; dim];
        for (n, (b, s)) in f.basis().iter().zip(f.sigmas()).enumerate() {
            for (ai, a) in alphas.iter().enumerate() {
                let d = b.eval_partial(&p, a).unwrap();
                for j in 0..2 {
                    jac[j * na + ai][n] = s * d[j];
                }
            }
        }
        for x in 0..dim {
            for y in 0..dim {
                let v: f64 = (0..f.len()).map(|n| jac[x][n] * jac[y][n]).sum();
                prop_assert!((cov[(x, y)] - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn nondegeneracy_verdict_is_scale_free(f in field(1, 1, 4), p in point(1), r in 0usize..=2) {
        let verdict = |c: f64| {
            nondegeneracy_certificate(&ScaledKernel { inner: &f, factor: c }, &p, r, DEFAULT_REL_TOL)
                .unwrap()
                .pass
        };
        let base = verdict(1.0);
        prop_assert_eq!(verdict(1e-6), base);
        prop_assert_eq!(verdict(1e6), base);
    }

    #[test]
    fn rank_deficient_when_jet_exceeds_basis(f in field(1, 1, 2), p in point(1)) {
        let c = nondegeneracy_certificate(&f, &p, 2, DEFAULT_REL_TOL).unwrap();
        prop_assert!(c.ratio < 1e-9 && !c.pass);
        prop_assert!(c.rank_estimate <= f.len());
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn estimates_are_reproducible(seed in any::<u64>(), c in 0.5..2.0f64) {
        let f = KLField::scalar_line(vec![BasisFunction::power(0), BasisFunction::power(1)]).unwrap();
        let event = EventSpec::SupNormBelow { grid: GridBox::interval(0.0, 1.0, 32).unwrap(), order: 0, threshold: c };
        let a = estimate_probability(&f, &event, 2000, seed).unwrap();
        let b = estimate_probability(&f, &event, 2000, seed).unwrap();
        prop_assert_eq!(a.p_hat.to_bits(), b.p_hat.to_bits());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn probability_monotone_in_threshold(seed in any::<u64>(), c1 in 0.1..3.0f64, dc in 0.0..1.0f64) {
        let f = KLField::scalar_line(vec![
            BasisFunction::power(0),
            BasisFunction::harmonic(vec![3.0], 0.0, vec![1.0]),
        ])
        .unwrap();
        let grid = GridBox::interval(0.0, 1.0, 32).unwrap();
        let at = |c: f64| {
            let event = EventSpec::SupNormBelow { grid: grid.clone(), order: 1, threshold: c };
            estimate_probability(&f, &event, 1000, seed).unwrap()
        };
        let (lo, hi) = (at(c1), at(c1 + dc));
        prop_assert!(lo.p_hat <= hi.p_hat);
        for e in [lo, hi] {
            prop_assert!((0.0..=1.0).contains(&e.p_hat));
            prop_assert!(e.ci95[0] >= 0.0 && e.ci95[1] <= 1.0);
        }
    }
}

#[test]
fn seeds_agree_within_combined_error() {
    let f = KLField::scalar_line(vec![BasisFunction::power(0), BasisFunction::power(1)]).unwrap();
    let event = EventSpec::SupNormBelow {
        grid: GridBox::unit_interval(),
        order: 0,
        threshold: 1.0,
    };
    let estimates: Vec<_> = (0..5)
        .map(|s| estimate_probability(&f, &event, 20_000, s).unwrap())
        .collect();
    for a in &estimates {
        for b in &estimates {
            let combined = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
            assert!((a.p_hat - b.p_hat).abs() <= 4.0 * combined);
        }
    }
}
