//! Detection and leakage as the strength of three canned attacks goes from zero to full.

use meanking::attack::{sweep, CannedAttack};
use meanking::bases::gen_mub;
use meanking::retrodiction::Strategy;

fn main() -> meanking::Result<()> {
    let s = Strategy::build(&gen_mub(2)?)?;
    for name in ["intercept-resend:b=1", "probe", "source-replace"] {
        let attack: CannedAttack = name.parse()?;
        println!("{attack}");
        for p in sweep(&s, &attack, 1, 6)? {
            println!("  {:.3}  detection {:.4}  leakage {:.4}", p.parameter, p.detection_probability, p.leakage);
        }
    }
    Ok(())
}
