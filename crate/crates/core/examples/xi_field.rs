//! The divergence identity behind the auxiliary potential and the decay of `ξ`
//! along the boundary characteristics.

use keldysh_lab::fields::TestField;
use keldysh_lab::geometry::build_domain;
use keldysh_lab::grid::Grid;
use keldysh_lab::operators::divergence_identity_residual;
use keldysh_lab::solver::box_inside;
use keldysh_lab::typechange::make_power;
use keldysh_lab::xifield::{build_xi_gradient, characteristic_decay_check, sonic_line_report};

fn main() -> keldysh_lab::Result<()> {
    let k = make_power(1)?;
    let dom = build_domain(&k, 0.0, 2.0, 1.0)?;
    let u = TestField::wave();
    for n in [33, 65, 129] {
        let g = Grid::new(dom.clone(), n)?;
        let field = u.sample(&g);
        let res = divergence_identity_residual(&k, &field)?;
        let inner = res.max_abs_where(|i| {
            let p = g.point(i);
            box_inside(g.region(), p.x, p.y, 0.2, 0.2, 0.0)
        });
        let grad = build_xi_gradient(&k, &field)?;
        let decay = characteristic_decay_check(&grad, &dom.gamma2)?;
        let sonic = sonic_line_report(&grad, &field)?;
        println!(
            "n={n:>3} identity residual {inner:.3e}  form gap {:.3e}  max dξ/dy {:.3e}  max |ξ_y| on x=0 {:.3}",
            decay.max_discrepancy, decay.max_violation, sonic.max_xiy
        );
    }
    Ok(())
}
