use crn_recovery::analysis::{compute_errors, fit_decay, Method};
use crn_recovery::driver::Protocol;
use crn_recovery::presets::PresetName;
use crn_recovery::recovery::{build_dictionary, dictionary_rank, Formulation};
use crn_recovery::spline::{build_operators, stack_operators, TimeGrid};
use nalgebra::DMatrix;

fn clean_m1(points: usize) -> Vec<crn_recovery::recovery::RecoveryResult> {
    let p = Protocol::from_preset(PresetName::M1);
    let setup = p.setup(0, 0).unwrap();
    let grid = p.grid(points).unwrap();
    let bundle = p.data(&setup, &grid, 0, 0).unwrap();
    let ops = stack_operators(build_operators(&grid).unwrap(), p.experiments).unwrap();
    p.recover(&setup, &bundle, &ops).unwrap()
}

#[test]
fn clean_m1_reference_errors() {
    // frozen from seed 0, trial 0, 100 points
    let expect = [
        (Method::new(Formulation::Differential, false), 2.938530e-2, 46),
        (Method::new(Formulation::Differential, true), 3.932337e-3, 0),
        (Method::new(Formulation::Integral, false), 7.700020e-4, 46),
        (Method::new(Formulation::Integral, true), 9.398793e-5, 0),
    ];
    let p = Protocol::from_preset(PresetName::M1);
    let setup = p.setup(0, 0).unwrap();
    let mut got = Vec::new();
    for r in clean_m1(100) {
        got.extend(compute_errors(&r, &setup.model).unwrap());
    }
    for (method, spectral, mismatch) in expect {
        let (_, e) = got.iter().find(|(m, _)| *m == method).unwrap();
        assert!((e.spectral - spectral).abs() <= 1e-3 * spectral, "{method}: {:e}", e.spectral);
        assert_eq!(e.support_mismatch, mismatch, "{method}");
    }
}

#[test]
fn formulations_agree_more_closely_on_finer_grids() {
    let gap = |points| {
        let rs = clean_m1(points);
        let c = |f| rs.iter().find(|r| r.formulation == f).unwrap().c_ls.clone();
        (c(Formulation::Differential) - c(Formulation::Integral)).norm()
    };
    let gaps: Vec<f64> = [50, 100, 200].into_iter().map(gap).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn one_experiment_cannot_separate_conserved_species() {
    let p = Protocol::from_preset(PresetName::M1);
    let setup = p.setup(0, 0).unwrap();
    let grid = p.grid(100).unwrap();
    let bundle = p.data(&setup, &grid, 0, 0).unwrap();
    let d = build_dictionary(setup.model.basis(), &bundle.x, bundle.block_len()).unwrap();
    let (full, _) = dictionary_rank(&d.d, 1e-10);
    let (single, _) = dictionary_rank(&d.d.columns(0, 100).into_owned(), 1e-10);
    assert_eq!(full, setup.model.basis().len());
    assert!(single < full, "{single} vs {full}");
}

#[test]
fn operator_orders_on_coarse_grids() {
    let f = |t: f64| t.sin() + (-t / 4.0).exp();
    let df = |t: f64| t.cos() - (-t / 4.0).exp() / 4.0;
    let intf = |t: f64| 1.0 - t.cos() + 4.0 * (1.0 - (-t / 4.0).exp());
    let row = |grid: &TimeGrid, g: &dyn Fn(f64) -> f64| {
        DMatrix::from_row_slice(1, grid.points, &grid.times().iter().map(|&t| g(t)).collect::<Vec<_>>())
    };
    let mut dif = Vec::new();
    let mut int = Vec::new();
    for n in [25usize, 50, 100, 200, 400] {
        let grid = TimeGrid::new(0.0, 20.0, n + 1).unwrap();
        let ops = build_operators(&grid).unwrap();
        let x = row(&grid, &f);
        dif.push((n as f64, (&x * &ops.l - row(&grid, &df)).amax()));
        int.push((n as f64, (&x * &ops.j - row(&grid, &intf)).amax()));
    }
    let sd = fit_decay(&dif, None).unwrap().slope;
    let si = fit_decay(&int, None).unwrap().slope;
    assert!((sd + 3.0).abs() <= 0.3, "differentiation slope {sd} over 25..400 intervals");
    assert!((si + 4.0).abs() <= 0.3, "integration slope {si} over 25..400 intervals");
}
