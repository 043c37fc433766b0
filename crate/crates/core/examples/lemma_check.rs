//! Commutant of the safe-vector projectors for single rounds and qubit pairs.

use meanking::bases::gen_mub;
use meanking::retrodiction::Strategy;
use meanking::security::{lemma2_check, LemmaReport};

fn main() -> meanking::Result<()> {
    for (d, n) in [(2, 1), (3, 1), (2, 2)] {
        let s = Strategy::build(&gen_mub(d)?)?;
        let r = lemma2_check(&s, n, 1e-9)?;
        println!("{}", serde_json::to_string(&LemmaReport::new(d, n, &r))?);
    }
    Ok(())
}
