//! Solve the weight LP at d = 2 and d = 3 and print the smallest weights.

use meanking::bases::gen_mub;
use meanking::retrodiction::Strategy;

fn main() -> meanking::Result<()> {
    for d in [2, 3] {
        let s = Strategy::build(&gen_mub(d)?)?;
        let min = s.weights().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = s.weights().iter().cloned().fold(0.0, f64::max);
        println!(
            "d = {d}: {} outcomes, p(x) in [{min:.6}, {max:.6}], completeness residual {:.1e}",
            s.num_outcomes(),
            s.completeness_residual()
        );
    }
    Ok(())
}
