//! The homogeneous mixed problem from a random start.

use keldysh_lab::geometry::{build_domain, Region};
use keldysh_lab::operators::OperatorSpec;
use keldysh_lab::solver::mixed_dn_experiment;
use keldysh_lab::typechange::make_power;

fn main() -> keldysh_lab::Result<()> {
    let k = make_power(1)?;
    let region: Region = build_domain(&k, 0.0, 2.0, 1.0)?.into();
    let rep = mixed_dn_experiment(&OperatorSpec::loword(&k), &region, &[17, 33, 65, 129], 7)?;
    for r in &rep.rows {
        println!("n={:>3} sup {:.3e} residual {:.3e}", r.n, r.sup_norm, r.residual_norm);
    }
    println!("sup/h at most {:.3e}", rep.constant);
    Ok(())
}
