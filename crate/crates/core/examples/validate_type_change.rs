//! Sampled admissibility of a few type-change functions.

use keldysh_lab::typechange::{make_power, make_sgn, validate, Regularity, TypeChangeFn};

fn main() -> keldysh_lab::Result<()> {
    // fails the sign condition for x > 1
    let custom = TypeChangeFn::custom("x - x^2", |x| x - x * x, |x| 1.0 - 2.0 * x, Some(|_| -2.0), Regularity::C2, true);
    for k in [make_power(1)?, make_power(2)?, make_sgn(), custom] {
        let r = validate(&k, -2.0, 2.0, 401)?;
        println!("{:<10} admissible={} violations={:?} flags={:?}", k.label(), r.admissible(), r.violations.first(), r.flags);
    }
    Ok(())
}
