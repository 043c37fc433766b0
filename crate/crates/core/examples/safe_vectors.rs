//! Solve the safe vector of every guessing function for a qubit and check it.

use meanking::bases::gen_mub;
use meanking::retrodiction::{safe_condition_error, solve_all_safe_vectors};

fn main() -> meanking::Result<()> {
    let bs = gen_mub(2)?;
    for sv in solve_all_safe_vectors(&bs)? {
        let err = safe_condition_error(&bs, &sv)?;
        let eta: Vec<String> = sv
            .eta
            .iter()
            .map(|z| format!("{:+.3}{:+.3}i", z.re, z.im))
            .collect();
        println!("x = {}  η = [{}]  error = {err:.1e}", sv.x, eta.join(", "));
    }
    Ok(())
}
