use proptest::prelude::*;

use vosopt::bregman::check_three_point_identity;
use vosopt::harness::{read_csv, rate_value, write_csv, TraceRecord};
use vosopt::linalg::{normal_matrix, normal_vector, rng};
use vosopt::operators::skew_split;
use vosopt::oracle::{L1Norm, Objective, ProxOracle};
use vosopt::problems::{build_quadratic, build_softplus_regularized, SpectrumSpec};
use vosopt::solvers::{aor_hb_coefficients, max_min_step, vos_alpha, DEFAULT_ALPHA_MAX};
use vosopt::{run_scheme, Matrix, Problem, ProblemKind, ProblemSpec, RunOptions, SchemeId, StepSizePolicy};

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..1000.0, 2..6).prop_map(|mut v| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    })
}

fn quad_problem(spec: Vec<f64>, seed: u64) -> Problem {
    ProblemSpec::from(ProblemKind::Quadratic {
        spectrum: SpectrumSpec::List(spec),
        seed,
    })
    .build()
    .unwrap()
}

fn steps(n: usize, seed: u64) -> RunOptions {
    RunOptions {
        max_iter: n,
        tol: 0.0,
        seed,
        ..Default::default()
    }
}

/// `E_{k+1} <= factor E_k` over the rows above `1e-10 E_0`.
fn contracts(values: &[f64], factor: f64) -> bool {
    let v0 = values[0];
    values
        .windows(2)
        .take_while(|w| w[0] > 1e-10 * v0)
        .all(|w| w[1] <= (factor + 1e-10) * w[0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn max_min_step_is_the_grid_maximum(a in 0.01f64..10.0, c in 0.01f64..10.0) {
        let r = max_min_step(a, c);
        let grid = (1..10_000)
            .map(|i| {
                let b = i as f64 / 10_000.0;
                (a * b.sqrt()).min(c * (1.0 - b))
            })
            .fold(0.0, f64::max);
        prop_assert!(r >= grid - 1e-9);
        prop_assert!(r <= grid + 1e-3 * a.max(c));
    }

    #[test]
    fn heavy_ball_coefficients_match_step(mu in 0.01f64..10.0, ratio in 1.01f64..1e4) {
        let l = mu * ratio;
        let alpha = vos_alpha(mu, l - mu, DEFAULT_ALPHA_MAX);
        let (gamma, beta) = aor_hb_coefficients(mu, l);
        let a1 = (1.0 + alpha).powi(2);
        prop_assert!((gamma - alpha * alpha / (a1 * mu)).abs() <= 1e-12 * gamma);
        prop_assert!((beta - (1.0 + alpha * alpha) / a1).abs() <= 1e-12);
    }

    #[test]
    fn three_point_identity_holds(spec in spectrum(), seed in 0u64..1000) {
        let n = spec.len();
        let f = build_softplus_regularized(&spec, 1.0, seed).unwrap().f;
        let mut r = rng(seed);
        let (x, y, z) = (normal_vector(&mut r, n), normal_vector(&mut r, n), normal_vector(&mut r, n));
        let res = check_three_point_identity(f.as_ref(), &x, &y, &z).unwrap();
        prop_assert!(res.residual <= 1e-12 * res.scale.max(1.0));
    }

    #[test]
    fn soft_threshold_is_the_prox(lambda in 0.01f64..5.0, t in 0.01f64..5.0, seed in 0u64..1000) {
        let g = L1Norm { lambda };
        let v = normal_vector(&mut rng(seed), 8) * 3.0;
        let p = g.prox(t, &v);
        for (vi, pi) in v.iter().zip(p.iter()) {
            let s = (vi - pi) / t;
            if *pi != 0.0 {
                prop_assert!((s - lambda * pi.signum()).abs() <= 1e-12 * (1.0 + lambda));
            } else {
                prop_assert!(s.abs() <= lambda * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn skew_split_reassembles(n in 2usize..8, seed in 0u64..1000) {
        let m = normal_matrix(&mut rng(seed), n, n);
        let s = &m - m.transpose();
        let d = skew_split(&s).unwrap();
        let back = &d.b_sym - &d.b_lower * 2.0;
        prop_assert!((&back - &s).amax() <= 1e-14 * (1.0 + s.amax()));
        for i in 0..n {
            for j in i..n {
                prop_assert_eq!(d.b_lower[(i, j)], 0.0);
            }
        }
        prop_assert!((&d.b_sym - d.b_sym.transpose()).amax() == 0.0);
    }

    #[test]
    fn ppa_contracts_for_any_step(spec in spectrum(), alpha in 0.01f64..100.0, seed in 0u64..1000) {
        let p = quad_problem(spec.clone(), seed);
        let opts = RunOptions { policy: StepSizePolicy::Fixed { alpha }, ..steps(50, seed) };
        let out = run_scheme(SchemeId::Ppa, &p, &opts).unwrap();
        let e: Vec<f64> = out.trace.iter().map(|r| r.lyap_primary).collect();
        prop_assert!(contracts(&e, 1.0 / (1.0 + spec[0] * alpha)));
    }

    #[test]
    fn accelerated_schemes_contract(spec in spectrum(), seed in 0u64..1000) {
        let p = quad_problem(spec, seed);
        for scheme in [SchemeId::AorVos, SchemeId::AorHb, SchemeId::EpcVos, SchemeId::ExtraGrad] {
            let out = run_scheme(scheme, &p, &steps(100, seed)).unwrap();
            let c = &out.setup.constants;
            let alpha = c.alpha.unwrap();
            let e: Vec<f64> = out.trace.iter().map(rate_value).collect();
            prop_assert!(contracts(&e, 1.0 / (1.0 + alpha)), "{scheme}");
        }
    }

    #[test]
    fn solution_is_a_fixed_point(spec in spectrum(), seed in 0u64..1000) {
        let q = build_quadratic(&spec, seed).unwrap();
        let xs = q.x_star.clone().unwrap();
        let p = Problem::Smooth(q.smooth());
        for scheme in [SchemeId::Gd, SchemeId::AorVos, SchemeId::EpcVos, SchemeId::ExtraGrad, SchemeId::AorHb] {
            let opts = RunOptions { x0: Some(xs.iter().copied().collect()), ..steps(50, seed) };
            let out = run_scheme(scheme, &p, &opts).unwrap();
            prop_assert!((&out.state.x - &xs).norm() <= 1e-12 * (1.0 + xs.norm()), "{scheme}");
        }
    }

    #[test]
    fn declared_constants_bound_the_hessian(spec in spectrum(), seed in 0u64..1000) {
        let q = build_quadratic(&spec, seed).unwrap();
        let f = q.objective.as_ref();
        let h: Matrix = f.hessian(&normal_vector(&mut rng(seed), spec.len())).unwrap();
        let eig = h.symmetric_eigenvalues();
        prop_assert!(eig.min() >= f.mu() * (1.0 - 1e-10));
        prop_assert!(eig.max() <= f.lipschitz() * (1.0 + 1e-10));
    }

    #[test]
    fn trace_csv_round_trips(rows in prop::collection::vec((any::<u32>(), -1e300f64..1e300, proptest::option::of(-1e3f64..1e3)), 1..20)) {
        let trace: Vec<TraceRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (w, v, m))| TraceRecord {
                k: i,
                lyap_primary: *v,
                lyap_modified: *m,
                f_gap: m.map(|x| x * 2.0),
                grad_norm: v.abs(),
                dist_to_star: None,
                gamma: Some(*w as f64),
                epsilon: None,
                alpha: 0.5,
                wall_ns: *w as u64,
            })
            .collect();
        let mut buf = Vec::new();
        write_csv(&trace, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, trace);
    }
}
