//! The two-way key distribution protocol: Alice prepares Ω, Bob measures
//! the returning half in a random basis and sends the eigenstate back,
//! Alice measures her POVM and, once Bob's bases are public, announces
//! `i′ = x(b)`. A random subset of positions is compared to test for Eve.

use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{alice_state, bob_outcome_probabilities, block_outcomes, AttackModel, GroupedProductStrategy};
use crate::error::{Error, Result};
use crate::qmath::c;
use crate::retrodiction::{phi_hat, GuessingFunction, Strategy};

/// Largest deviation from 1 tolerated in a sampling distribution.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Random stream used for test-position selection; blocks use their index.
const TEST_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub d: usize,
    /// Instances per block.
    pub n: usize,
    /// Number of blocks.
    pub rounds: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidInput(format!("d = {} is below 2", self.d)));
        }
        if self.n == 0 || self.rounds == 0 {
            return Err(Error::InvalidInput("n and rounds must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::InvalidInput(format!(
                "test fraction {} outside [0, 1]",
                self.test_fraction
            )));
        }
        Ok(())
    }

    /// Total number of protocol instances, `rounds · n`.
    pub fn instances(&self) -> usize {
        self.rounds * self.n
    }

    pub fn num_tests(&self) -> usize {
        let want = (self.test_fraction * self.instances() as f64).ceil() as usize;
        want.min(self.instances())
    }
}

/// One protocol instance; all indices 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub b: usize,
    pub i: usize,
    pub x: GuessingFunction,
    pub i_prime: usize,
}

impl RoundRecord {
    pub fn agrees(&self) -> bool {
        self.i == self.i_prime
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: ProtocolConfig,
    pub records: Vec<RoundRecord>,
    pub test_indices: Vec<usize>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub alice_key: String,
    pub bob_key: String,
}

#[derive(Serialize, Deserialize)]
struct TranscriptHeader {
    config: ProtocolConfig,
    seed: u64,
    test_indices: Vec<usize>,
    accepted: bool,
}

impl Transcript {
    /// Header line followed by one record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = TranscriptHeader {
            config: self.config.clone(),
            seed: self.config.seed,
            test_indices: self.test_indices.clone(),
            accepted: self.accepted,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header: TranscriptHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::InvalidInput("empty transcript".into())),
        };
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Transcript {
            config: header.config,
            records,
            test_indices: header.test_indices,
            accepted: header.accepted,
        })
    }
}

/// Alice's outcome distributions, indexed by Bob's block `(b⃗, i⃗)`.
struct OutcomeTables {
    k: usize,
    block: usize,
    bob: Vec<WeightedIndex<f64>>,
    alice: Vec<Option<WeightedIndex<f64>>>,
    /// Per-instance strategy outcomes for each Alice outcome index.
    tuples: Vec<Vec<usize>>,
}

fn checked_weights(weights: Vec<f64>, what: &str) -> Result<WeightedIndex<f64>> {
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(total));
    }
    let clipped: Vec<f64> = weights.into_iter().map(|w| w.max(0.0)).collect();
    WeightedIndex::new(clipped).map_err(|e| Error::InvalidInput(format!("{what} distribution: {e}")))
}

impl OutcomeTables {
    fn bob_outcomes(&self, d: usize) -> usize {
        d.pow(self.block as u32)
    }

    fn honest(strategy: &Strategy) -> Result<Self> {
        let bs = strategy.basis_set();
        let d = strategy.dim();
        let scale = c((d as f64).sqrt(), 0.0);
        let mut bob = Vec::with_capacity(bs.len());
        let mut alice = Vec::with_capacity(bs.len() * d);
        for b in 0..bs.len() {
            let mut probs = Vec::with_capacity(d);
            for i in 0..d {
                let ph = phi_hat(bs, b, i)?;
                probs.push(ph.norm_squared());
                alice.push(Some(checked_weights(
                    strategy.outcome_distribution_pure(&(ph * scale)),
                    "Alice's",
                )?));
            }
            bob.push(checked_weights(probs, "Bob's")?);
        }
        Ok(Self {
            k: bs.len(),
            block: 1,
            bob,
            alice,
            tuples: (0..strategy.num_outcomes()).map(|x| vec![x]).collect(),
        })
    }

    fn attacked(strategy: &Strategy, am: &AttackModel) -> Result<Self> {
        let bs = strategy.basis_set();
        let grouped = GroupedProductStrategy::new(strategy, am.n())?;
        let k = bs.len();
        let nb = k.pow(am.n() as u32);
        let mut bob = Vec::with_capacity(nb);
        let mut alice = Vec::new();
        let mut last_b = None;
        for (bases, outcomes) in block_outcomes(am.d(), k, am.n()) {
            if last_b.as_ref() != Some(&bases) {
                let probs = bob_outcome_probabilities(am, bs, &bases)?;
                bob.push(checked_weights(probs, "Bob's")?);
                last_b = Some(bases.clone());
            }
            match alice_state(am, bs, &bases, &outcomes) {
                Ok(rho) => alice.push(Some(checked_weights(grouped.outcome_distribution(&rho), "Alice's")?)),
                Err(Error::ZeroProbability) => alice.push(None),
                Err(e) => return Err(e),
            }
        }
        let tuples = (0..grouped.num_outcomes())
            .map(|idx| grouped.product().outcome_tuple(idx))
            .collect();
        Ok(Self {
            k,
            block: am.n(),
            bob,
            alice,
            tuples,
        })
    }
}

fn digits(mut index: usize, radix: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % radix;
        index /= radix;
    }
    out
}

/// What each party holds after the quantum phase of one simulation unit.
struct QuantumPhase {
    bob: Vec<(usize, usize)>,
    alice: Vec<usize>,
}

fn simulate_unit<R: Rng>(rng: &mut R, tables: &OutcomeTables, d: usize) -> Result<QuantumPhase> {
    let b_idx = rng.random_range(0..tables.bob.len());
    let i_idx = tables.bob[b_idx].sample(rng);
    let dist = tables.alice[b_idx * tables.bob_outcomes(d) + i_idx]
        .as_ref()
        .ok_or(Error::ZeroProbability)?;
    let x_idx = dist.sample(rng);
    let bases = digits(b_idx, tables.k, tables.block);
    let outcomes = digits(i_idx, d, tables.block);
    Ok(QuantumPhase {
        bob: bases.into_iter().zip(outcomes).collect(),
        alice: tables.tuples[x_idx].clone(),
    })
}

/// Runs `cfg.rounds` blocks of `cfg.n` instances. An attack on a single
/// instance (`n = 1`) is repeated independently on every instance; an
/// attack with `n = cfg.n` acts coherently on each whole block.
pub fn run_protocol(cfg: &ProtocolConfig, strategy: &Strategy, attack: Option<&AttackModel>) -> Result<Transcript> {
    cfg.validate()?;
    if strategy.dim() != cfg.d {
        return Err(Error::DimensionMismatch(format!(
            "strategy dimension {} vs configured d = {}",
            strategy.dim(),
            cfg.d
        )));
    }
    let tables = match attack {
        None => OutcomeTables::honest(strategy)?,
        Some(am) => {
            if am.d() != cfg.d {
                return Err(Error::DimensionMismatch(format!(
                    "attack dimension {} vs configured d = {}",
                    am.d(),
                    cfg.d
                )));
            }
            if am.n() != 1 && am.n() != cfg.n {
                return Err(Error::DimensionMismatch(format!(
                    "attack block length {} must be 1 or n = {}",
                    am.n(),
                    cfg.n
                )));
            }
            OutcomeTables::attacked(strategy, am)?
        }
    };

    // Quantum phase. Alice's outcomes are fixed before any basis is revealed.
    let units_per_block = cfg.n / tables.block;
    let mut bob_view = Vec::with_capacity(cfg.instances());
    let mut alice_view = Vec::with_capacity(cfg.instances());
    for round in 0..cfg.rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(round as u64);
        for _ in 0..units_per_block {
            let phase = simulate_unit(&mut rng, &tables, cfg.d)?;
            bob_view.extend(phase.bob);
            alice_view.extend(phase.alice);
        }
    }

    // Bob announces his bases; Alice infers i′ = x(b).
    let records: Vec<RoundRecord> = bob_view
        .into_iter()
        .zip(alice_view)
        .map(|((b, i), x_idx)| {
            let x = strategy.safe_vectors()[x_idx].x.clone();
            RoundRecord {
                b,
                i,
                i_prime: x.guess(b),
                x,
            }
        })
        .collect();

    let test_indices = select_tests(cfg);
    let accepted = test_indices.iter().all(|&t| records[t].agrees());
    Ok(Transcript {
        config: cfg.clone(),
        records,
        test_indices,
        accepted,
    })
}

/// `⌈test_fraction · rounds · n⌉` distinct positions, sorted.
pub fn select_tests(cfg: &ProtocolConfig) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TEST_STREAM);
    let mut picked = rand::seq::index::sample(&mut rng, cfg.instances(), cfg.num_tests()).into_vec();
    picked.sort_unstable();
    picked
}

/// Re-derives the test positions from the configuration, compares them and
/// builds both keys from the remaining positions.
pub fn sift_and_test(t: &Transcript) -> (bool, KeyPair) {
    let tests = select_tests(&t.config);
    let accepted = tests.iter().all(|&idx| t.records.get(idx).is_some_and(RoundRecord::agrees));
    let mut is_test = vec![false; t.records.len()];
    for &idx in &tests {
        if idx < is_test.len() {
            is_test[idx] = true;
        }
    }
    let digit = |v: usize| char::from_digit(v as u32, 36).expect("digit below 36");
    let mut alice_key = String::new();
    let mut bob_key = String::new();
    for (r, test) in t.records.iter().zip(is_test) {
        if !test {
            alice_key.push(digit(r.i_prime));
            bob_key.push(digit(r.i));
        }
    }
    (accepted, KeyPair { alice_key, bob_key })
}

/// Fraction of instances with `i = i′`.
pub fn agreement_rate(t: &Transcript) -> f64 {
    if t.records.is_empty() {
        return 1.0;
    }
    t.records.iter().filter(|r| r.agrees()).count() as f64 / t.records.len() as f64
}
