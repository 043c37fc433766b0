//! Run the protocol without an eavesdropper and print the sifted key.

use meanking::bases::gen_mub;
use meanking::protocol::{agreement_rate, run_protocol, sift_and_test, ProtocolConfig};
use meanking::retrodiction::Strategy;

fn main() -> meanking::Result<()> {
    let s = Strategy::build(&gen_mub(3)?)?;
    let cfg = ProtocolConfig { d: 3, n: 2, rounds: 40, test_fraction: 0.25, seed: 1 };
    let t = run_protocol(&cfg, &s, None)?;
    let (accepted, keys) = sift_and_test(&t);
    println!("agreement {:.3}, accepted {accepted}", agreement_rate(&t));
    println!("alice {}", keys.alice_key);
    println!("bob   {}", keys.bob_key);
    print!("{}", t.to_jsonl()?.lines().take(4).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
