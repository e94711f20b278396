//! Characteristics of `K = x`, the apex of the mixed domain and its JSON form.

use keldysh_lab::geometry::{build_domain, solve_apex, trace_characteristic, Branch, Point};
use keldysh_lab::typechange::make_power;

fn main() -> keldysh_lab::Result<()> {
    let k = make_power(1)?;
    for (branch, y_stop) in [(Branch::Plus, 10.0), (Branch::Minus, -10.0)] {
        let p = trace_characteristic(&k, Point::new(-1.0, 0.0), branch, y_stop, 1e-3)?;
        println!("{branch:?}: {} vertices, ends at ({:.6}, {:.6})", p.vertices.len(), p.end().x, p.end().y);
    }
    println!("apex m = {:.9}", solve_apex(&k, 0.0, 2.0)?);

    let dom = build_domain(&k, 0.0, 2.0, 1.0)?;
    println!("elliptic part {:?}", dom.elliptic_part());
    let json = dom.to_json();
    println!("arcs: {}", json["arcs"].as_array().map_or(0, |a| a.len()));
    Ok(())
}
