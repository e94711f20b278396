//! Weighted Poincaré ratio of `sin(πx) sin(πy)` and the seeded random estimate.

use std::f64::consts::PI;

use keldysh_lab::abc::{poincare_constant, poincare_ratio};
use keldysh_lab::fields::TestField;
use keldysh_lab::geometry::Rect;
use keldysh_lab::grid::Grid;
use keldysh_lab::typechange::make_power;

fn main() -> keldysh_lab::Result<()> {
    let k = make_power(1)?;
    let rect = Rect::unit_square();
    println!("closed form {:.6}", 2.0 / (3.0 * PI * PI));
    for n in [65, 129, 257] {
        let g = Grid::new(rect, n)?;
        let ratio = poincare_ratio(&k, &TestField::sin_sin().sample(&g))?;
        let est = poincare_constant(&k, &rect, 16, 42, n)?;
        println!("n={n:>3} sine ratio {ratio:.6}  random estimate {:.6}", est.constant);
    }
    Ok(())
}
