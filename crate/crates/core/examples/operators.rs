//! Differentiate and integrate sampled data with the spline operators.

use crn_recovery::spline::build_operators;
use crn_recovery::TimeGrid;
use nalgebra::DMatrix;

fn main() -> crn_recovery::Result<()> {
    for points in [21, 41, 81, 161] {
        let grid = TimeGrid::new(0.0, 10.0, points)?;
        let ops = build_operators(&grid)?;
        let t = grid.times();
        let x = DMatrix::from_fn(1, points, |_, k| (0.5 * t[k]).sin());

        // data are row vectors, operators act from the right
        let dx = &x * &ops.l;
        let ix = &x * &ops.j;
        let e_dif = (0..points).map(|k| (dx[k] - 0.5 * (0.5 * t[k]).cos()).abs()).fold(0.0, f64::max);
        let e_int = (0..points).map(|k| (ix[k] - 2.0 * (1.0 - (0.5 * t[k]).cos())).abs()).fold(0.0, f64::max);
        let norms = ops.norms().summary;
        println!(
            "n={:4}  max|dif err|={e_dif:.3e}  max|int err|={e_int:.3e}  ||L||={:.2}  ||J||={:.2}",
            grid.intervals(),
            norms.l_inf,
            norms.j_inf
        );
    }
    Ok(())
}
