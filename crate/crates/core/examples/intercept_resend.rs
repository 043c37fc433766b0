//! Intercept-resend in each basis: exact detection probability against a simulated run.

use meanking::attack::{detection_probability, leakage, AttackModel};
use meanking::bases::gen_mub;
use meanking::protocol::{agreement_rate, run_protocol, sift_and_test, ProtocolConfig};
use meanking::retrodiction::Strategy;

fn main() -> meanking::Result<()> {
    let s = Strategy::build(&gen_mub(2)?)?;
    for b in 0..3 {
        let am = AttackModel::intercept_resend(s.basis_set(), b, 1.0, 1)?;
        let q = detection_probability(&s, &am)?;
        let cfg = ProtocolConfig { d: 2, n: 1, rounds: 5000, test_fraction: 0.1, seed: b as u64 };
        let t = run_protocol(&cfg, &s, Some(&am))?;
        let (accepted, _) = sift_and_test(&t);
        println!(
            "basis {}: detection {q:.4}, simulated error {:.4}, leakage {:.3}, accepted {accepted}",
            b + 1,
            1.0 - agreement_rate(&t),
            leakage(&am, s.basis_set())?
        );
    }
    Ok(())
}
