//! Attacks whose E operators are all scalar are invisible and carry no information.

use meanking::attack::{build_e_operators, evaluate, scalar_defect, scalar_projection, AttackModel};
use meanking::bases::gen_mub;
use meanking::retrodiction::Strategy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> meanking::Result<()> {
    let s = Strategy::build(&gen_mub(2)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let general = AttackModel::random(&mut rng, 2, 1, 2, 2)?;
        let scalar = scalar_projection(&general)?;
        for (name, am) in [("random", &general), ("scalar part", &scalar)] {
            let report = evaluate(&s, am)?;
            println!(
                "{name:<12} scalar defect {:.1e}  detection {:.2e}  leakage {:.2e}",
                scalar_defect(&build_e_operators(am)?),
                report.detection_probability,
                report.leakage
            );
        }
    }
    Ok(())
}
