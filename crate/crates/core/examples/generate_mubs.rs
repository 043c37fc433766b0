//! Build the prime-dimension MUB sets and print their validation reports.

use meanking::bases::{gen_mub, validate};
use meanking::qmath::DEFAULT_TOL;

fn main() -> meanking::Result<()> {
    for d in [2, 3, 5, 7] {
        let bs = gen_mub(d)?;
        let report = validate(&bs, DEFAULT_TOL)?;
        println!("d = {d}: {} bases", bs.len());
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(())
}
