//! Adding data on the characteristics over-determines the problem: the
//! closed/open residual ratio grows under refinement unless the data is the
//! trace of the open solution.

use keldysh_lab::fields::TestField;
use keldysh_lab::geometry::{build_domain, Region};
use keldysh_lab::operators::OperatorSpec;
use keldysh_lab::solver::{overdeterminacy_experiment, CharData};
use keldysh_lab::typechange::make_power;

fn main() -> keldysh_lab::Result<()> {
    let k = make_power(1)?;
    let region: Region = build_domain(&k, 0.0, 2.0, 1.0)?.into();
    let spec = OperatorSpec::loword(&k);
    for data in [CharData::Constant(1.0), CharData::OpenTrace, CharData::Exact] {
        let rep = overdeterminacy_experiment(&spec, &region, &TestField::exp_cos(), data, &[17, 33, 65])?;
        let ratios: Vec<String> = rep.rows.iter().map(|r| format!("{:.3}", r.ratio)).collect();
        println!("{data:?}: ratios {}", ratios.join(", "));
    }
    Ok(())
}
