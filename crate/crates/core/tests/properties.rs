use crn_recovery::analysis::{geometric_mean, support_mismatch, support_of};
use crn_recovery::graph::{fit_kirchhoff, EffectiveModel, Scheme};
use crn_recovery::linalg::{pinv_solve, CompressedLs};
use crn_recovery::recovery::{stls, StlsOptions};
use crn_recovery::spline::{build_operators, TimeGrid};
use crn_recovery::{CrnModel, MonomialBasis, Reaction, ReactionList};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn names(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("X{i}")).collect()
}

fn reactions(n: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..n, 0..n, 0.01f64..5.0), 1..12)
        .prop_map(|v| v.into_iter().filter(|(s, t, _)| s != t).collect::<Vec<_>>())
        .prop_filter("at least one reaction", |v| !v.is_empty())
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kirchhoff_columns_sum_to_zero(rs in reactions(9)) {
        let basis = MonomialBasis::new(3, 2).unwrap();
        let list = ReactionList::new(rs.iter().map(|&(s, t, k)| Reaction { source: s, target: t, rate: k }).collect());
        let model = CrnModel::assemble(names(3), basis, list).unwrap();
        let k = model.kirchhoff().matrix();
        for i in 0..k.ncols() {
            prop_assert!(k.column(i).sum().abs() < 1e-12);
            prop_assert!(k[(i, i)] <= 0.0);
            for j in 0..k.nrows() {
                if j != i {
                    prop_assert!(k[(j, i)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn rhs_matches_term_by_term_sum(rs in reactions(9), x in prop::collection::vec(0.0f64..2.0, 3)) {
        let basis = MonomialBasis::new(3, 2).unwrap();
        let list = ReactionList::new(rs.iter().map(|&(s, t, k)| Reaction { source: s, target: t, rate: k }).collect());
        let model = CrnModel::assemble(names(3), basis.clone(), list).unwrap();
        let mut expect = [0.0; 3];
        for &(s, t, k) in &rs {
            let ys = basis.exponent(s);
            let yt = basis.exponent(t);
            let flux = k * (0..3).map(|a| x[a].powi(ys[a] as i32)).product::<f64>();
            for a in 0..3 {
                expect[a] += flux * (yt[a] as f64 - ys[a] as f64);
            }
        }
        let got = model.rhs(&x).unwrap();
        for a in 0..3 {
            prop_assert!((got[a] - expect[a]).abs() <= 1e-12 * (1.0 + expect[a].abs()));
        }
    }

    #[test]
    fn support_mismatch_is_a_metric(a in matrix(3, 5), b in matrix(3, 5), c in matrix(3, 5)) {
        let sparse = |m: DMatrix<f64>| m.map(|v| if v > 0.2 { v } else { 0.0 });
        let (sa, sb, sc) = (support_of(&sparse(a)), support_of(&sparse(b)), support_of(&sparse(c)));
        prop_assert_eq!(support_mismatch(&sa, &sa), 0);
        prop_assert_eq!(support_mismatch(&sa, &sb), support_mismatch(&sb, &sa));
        prop_assert!(support_mismatch(&sa, &sc) <= support_mismatch(&sa, &sb) + support_mismatch(&sb, &sc));
        if support_mismatch(&sa, &sb) == 0 {
            prop_assert_eq!(sa, sb);
        }
    }

    #[test]
    fn geometric_mean_between_extremes_and_scales(v in prop::collection::vec(1e-6f64..1e3, 1..20), s in 1e-3f64..1e3) {
        let g = geometric_mean(&v).unwrap();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(0.0, f64::max);
        prop_assert!(g >= lo * (1.0 - 1e-12) && g <= hi * (1.0 + 1e-12));
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        let gs = geometric_mean(&scaled).unwrap();
        prop_assert!((gs - s * g).abs() <= 1e-10 * s * g);
    }

    #[test]
    fn stls_rows_are_least_squares_on_their_support(
        r in matrix(6, 40),
        c in matrix(3, 6),
        noise in matrix(3, 40),
        tau in 0.05f64..0.5,
    ) {
        let targets = &c * &r + noise * 0.05;
        let opts = StlsOptions { tau, ..Default::default() };
        let out = stls(&targets, &r, &opts).unwrap();
        for row in 0..3 {
            let support: Vec<usize> = (0..6).filter(|&j| out.support[row][j]).collect();
            let report = &out.rows[row];
            for pair in report.supports.windows(2) {
                prop_assert!(pair[1].iter().all(|j| pair[0].contains(j)));
            }
            for j in 0..6 {
                if !out.support[row][j] {
                    prop_assert_eq!(out.coefficients[(row, j)], 0.0);
                }
            }
            if support.is_empty() {
                continue;
            }
            // independent refit through the normal-free pseudoinverse
            let sub = r.select_rows(&support).transpose();
            let rhs: DVector<f64> = targets.row(row).transpose();
            let (x, _) = pinv_solve(&sub, &rhs, 1e-10).unwrap();
            for (k, &j) in support.iter().enumerate() {
                prop_assert!((x[k] - out.coefficients[(row, j)]).abs() < 1e-9, "{} vs {}", x[k], out.coefficients[(row, j)]);
            }
        }
    }

    #[test]
    fn exact_linear_systems_are_recovered(r in matrix(5, 30), c in matrix(4, 5)) {
        let targets = &c * &r;
        let ls = CompressedLs::new(&targets, &r, 1e-10).unwrap();
        let (got, res) = ls.solve_all().unwrap();
        prop_assume!(ls.singular_values().last().copied().unwrap_or(0.0) > 1e-3);
        prop_assert!((got - &c).amax() < 1e-10);
        prop_assert!(res < 1e-18);
    }

    #[test]
    fn kirchhoff_fit_recovers_constructed_matrices(q in matrix(6, 4), rates in prop::collection::vec(0.0f64..2.0, 12), mask in prop::collection::vec(any::<bool>(), 12)) {
        let r = 4;
        let mut k = DMatrix::zeros(r, r);
        let mut idx = 0;
        for i in 0..r {
            for j in 0..r {
                if i != j {
                    if mask[idx] {
                        k[(j, i)] = rates[idx] + 0.1;
                    }
                    idx += 1;
                }
            }
            k[(i, i)] = -k.column(i).sum();
        }
        let model = EffectiveModel {
            c_eff: &q * &k,
            q_eff: q.clone(),
            source_indices: (0..r).collect(),
            scheme: Scheme::ActiveColumns,
            zero_complex: false,
        };
        let fit = fit_kirchhoff(&model, None).unwrap();
        prop_assume!(!fit.degenerate);
        let rel = (&fit.k - &k).norm() / k.norm().max(1e-300);
        prop_assert!(rel <= 1e-8, "relative error {rel:e}");
        prop_assert!(fit.kkt_residual <= 1e-8);
        let edges = fit.coefficients_from_edges(&model);
        prop_assert!((edges - &model.c_eff).amax() < 1e-8);
        prop_assert_eq!(fit.edges.len(), mask.iter().filter(|&&m| m).count());
    }

    #[test]
    fn cardinal_splines_partition_unity(points in 4usize..60, t0 in -5.0f64..5.0, len in 0.5f64..30.0) {
        let grid = TimeGrid::new(t0, t0 + len, points).unwrap();
        let ops = build_operators(&grid).unwrap();
        let times = grid.times();
        for k in 0..points {
            prop_assert!(ops.l.column(k).sum().abs() < 1e-9 * (points as f64) / len);
            prop_assert!((ops.j.column(k).sum() - (times[k] - t0)).abs() < 1e-10 * len);
        }
    }

    #[test]
    fn cubics_are_differentiated_and_integrated_exactly(points in 4usize..80, a in prop::collection::vec(-2.0f64..2.0, 4)) {
        let grid = TimeGrid::new(0.0, 3.0, points).unwrap();
        let ops = build_operators(&grid).unwrap();
        let t = grid.times();
        let f = |s: f64| a[0] + a[1] * s + a[2] * s * s + a[3] * s * s * s;
        let df = |s: f64| a[1] + 2.0 * a[2] * s + 3.0 * a[3] * s * s;
        let intf = |s: f64| a[0] * s + a[1] * s * s / 2.0 + a[2] * s.powi(3) / 3.0 + a[3] * s.powi(4) / 4.0;
        let v = DMatrix::from_fn(1, points, |_, k| f(t[k]));
        let d = &v * &ops.l;
        let i = &v * &ops.j;
        for k in 0..points {
            prop_assert!((d[k] - df(t[k])).abs() < 1e-10);
            prop_assert!((i[k] - intf(t[k])).abs() < 1e-10);
        }
    }
}
