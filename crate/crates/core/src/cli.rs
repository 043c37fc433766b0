//! `mkqkd` command line.
//!
//! Exit codes: 0 pass, 1 usage or I/O, 2 validation or solve failure,
//! 3 protocol aborted because the test positions disagreed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::attack::{self, AttackFile, AttackModel, CannedAttack};
use crate::bases::{gen_mub, validate, BasisSet};
use crate::error::{Error, Result};
use crate::io::{sha256_hex, to_json_string};
use crate::protocol::{agreement_rate, run_protocol, sift_and_test, ProtocolConfig};
use crate::qmath::DEFAULT_TOL;
use crate::retrodiction::Strategy;
use crate::security::{lemma2_check, LemmaReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_FAILED: u8 = 2;
pub const EXIT_ABORTED: u8 = 3;

pub const TOL_ENV: &str = "MKQKD_TOL";

/// Largest `d^{d+1}` for which a strategy is built.
const MAX_STRATEGY_OUTCOMES: usize = 4096;

#[derive(Debug, Parser, Serialize)]
#[command(name = "mkqkd", version, about = "Mean King retrodiction and two-way QKD toolkit")]
pub struct Cli {
    /// Also write a run manifest to this path.
    #[arg(long, global = true, value_name = "PATH")]
    #[serde(skip)]
    pub manifest_out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate or validate basis sets.
    #[command(subcommand)]
    Bases(BasesCmd),
    /// Build Alice's maximal strategy.
    #[command(subcommand)]
    Strategy(StrategyCmd),
    /// Simulate the protocol.
    Run(RunArgs),
    /// Lemma checks and attack evaluation.
    #[command(subcommand)]
    Security(SecurityCmd),
    /// Re-run a recorded command and compare every output digest.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasesCmd {
    /// Write the d+1 mutually unbiased bases for d = 2, 3, 5 or 7.
    Gen {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a validation report; exit 2 if the set is unusable.
    Check {
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[arg(long, env = TOL_ENV, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyCmd {
    Build {
        #[arg(long)]
        bases: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = TOL_ENV, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    #[arg(long)]
    pub strategy: PathBuf,
    /// Number of blocks.
    #[arg(long)]
    pub rounds: usize,
    /// Instances per block.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Named attack applied to every instance, e.g. `intercept-resend:b=1`.
    #[arg(long, default_value = "none", conflicts_with = "attack_file")]
    pub attack: String,
    /// Attack file; its block length must be 1 or `--n`.
    #[arg(long)]
    pub attack_file: Option<PathBuf>,
    /// Directory receiving transcript.jsonl, summary.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct StrategySource {
    /// Use the generated MUBs of this dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub strategy: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecurityCmd {
    /// Dimension of the operators having every safe product vector as eigenvector.
    Lemma {
        #[command(flatten)]
        source: StrategySource,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, env = TOL_ENV, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact detection probability and leakage of an attack.
    AttackEval {
        #[command(flatten)]
        source: StrategySource,
        #[arg(long, default_value = "none", conflicts_with = "attack_file")]
        attack: String,
        #[arg(long)]
        attack_file: Option<PathBuf>,
        /// Block length of named attacks.
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Also evaluate this many strengths from 0 up to the attack's own.
        #[arg(long)]
        sweep: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub env: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stdout_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub instances: usize,
    pub attack: String,
    pub agreement_rate: f64,
    pub error_rate: f64,
    pub accepted: bool,
    pub tests: usize,
    pub failed_tests: usize,
    pub key_length: usize,
    pub keys_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub dim: usize,
    pub outcomes: usize,
    pub min_weight: f64,
    pub completeness_residual: f64,
    pub max_safe_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub reproduced: bool,
    pub inputs_match: bool,
    pub mismatched: Vec<PathBuf>,
}

/// Files touched by one command.
#[derive(Default)]
struct Ctx {
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    stdout: Vec<u8>,
}

impl Ctx {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path)?;
        self.inputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T> {
        let bytes = self.read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        fs::write(path, bytes)?;
        self.outputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn print(&mut self, text: &str) {
        self.stdout.extend_from_slice(text.as_bytes());
    }

    /// Prints `value` and writes it to `out` when given.
    fn emit<T: Serialize>(&mut self, value: &T, out: Option<&Path>) -> Result<()> {
        let text = to_json_string(value)?;
        if let Some(path) = out {
            self.write(path, text.as_bytes())?;
        }
        self.print(&text);
        Ok(())
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_)
        | Error::Json(_)
        | Error::InvalidInput(_)
        | Error::UnsupportedDimension(_)
        | Error::ResourceGuard(_)
        | Error::IndexOutOfRange(_) => EXIT_USAGE,
        _ => EXIT_FAILED,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut ctx = Ctx::default();
    let result = dispatch(&cli, &argv, &mut ctx);
    let _ = stdout.write_all(&ctx.stdout);
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    };
    if let Some(path) = &cli.manifest_out {
        if let Err(e) = write_manifest(path, &cli, &argv, &ctx) {
            let _ = writeln!(stderr, "error: writing manifest: {e}");
            return EXIT_USAGE;
        }
    }
    code
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Bases(BasesCmd::Gen { .. }) => "bases gen",
        Command::Bases(BasesCmd::Check { .. }) => "bases check",
        Command::Strategy(StrategyCmd::Build { .. }) => "strategy build",
        Command::Run(_) => "run",
        Command::Security(SecurityCmd::Lemma { .. }) => "security lemma",
        Command::Security(SecurityCmd::AttackEval { .. }) => "security attack-eval",
        Command::Replay(_) => "replay",
    }
}

fn build_manifest(cli: &Cli, argv: &[String], ctx: &Ctx) -> Result<RunManifest> {
    let seed = match &cli.command {
        Command::Run(r) => Some(r.seed),
        _ => None,
    };
    let mut env = BTreeMap::new();
    if let Ok(v) = std::env::var(TOL_ENV) {
        env.insert(TOL_ENV.to_string(), v);
    }
    Ok(RunManifest {
        command: command_name(&cli.command).to_string(),
        argv: strip_manifest_flag(argv),
        config: serde_json::to_value(&cli.command)?,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        env,
        inputs: ctx.inputs.clone(),
        outputs: ctx.outputs.clone(),
        stdout_sha256: sha256_hex(&ctx.stdout),
    })
}

fn write_manifest(path: &Path, cli: &Cli, argv: &[String], ctx: &Ctx) -> Result<()> {
    let manifest = build_manifest(cli, argv, ctx)?;
    fs::write(path, to_json_string(&manifest)?)?;
    Ok(())
}

fn strip_manifest_flag(argv: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--manifest-out" {
            skip = true;
        } else if !a.starts_with("--manifest-out=") {
            out.push(a.clone());
        }
    }
    out
}

fn dispatch(cli: &Cli, argv: &[String], ctx: &mut Ctx) -> Result<u8> {
    match &cli.command {
        Command::Bases(BasesCmd::Gen { dim, out }) => {
            let bs = gen_mub(*dim)?;
            ctx.emit(&bs, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Bases(BasesCmd::Check { input, tol }) => {
            let bs: BasisSet = ctx.read_json(input)?;
            let report = validate(&bs, *tol)?;
            ctx.emit(&report, None)?;
            Ok(if report.passes() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Strategy(StrategyCmd::Build { bases, out, tol }) => {
            let bs: BasisSet = ctx.read_json(bases)?;
            let report = validate(&bs, *tol)?;
            if !report.passes() {
                ctx.emit(&report, None)?;
                return Err(Error::Precondition("basis set fails validation".into()));
            }
            let s = build_strategy(&bs)?;
            ctx.write(out, to_json_string(&s)?.as_bytes())?;
            ctx.emit(&strategy_summary(&s), None)?;
            Ok(EXIT_OK)
        }
        Command::Run(args) => cmd_run(cli, argv, args, ctx),
        Command::Security(SecurityCmd::Lemma { source, n, tol, out }) => {
            let s = load_strategy(source, ctx)?;
            let r = lemma2_check(&s, *n, *tol)?;
            let report = LemmaReport::new(s.dim(), *n, &r);
            ctx.emit(&report, out.as_deref())?;
            Ok(if report.solution_dim == 1 { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Security(SecurityCmd::AttackEval {
            source,
            attack,
            attack_file,
            n,
            sweep,
            out,
        }) => {
            let s = load_strategy(source, ctx)?;
            let (canned, am) = match attack_file {
                Some(path) => (None, load_attack(path, ctx)?),
                None => {
                    let canned: CannedAttack = attack.parse()?;
                    let am = match canned.build(s.basis_set(), *n)? {
                        Some(am) => am,
                        None => AttackModel::identity(s.dim(), *n)?,
                    };
                    (Some(canned), am)
                }
            };
            let mut report = attack::evaluate(&s, &am)?;
            if let Some(points) = sweep {
                let canned = canned.ok_or_else(|| {
                    Error::InvalidInput("--sweep needs a named attack".into())
                })?;
                report.curve = Some(attack::sweep(&s, &canned, am.n(), *points)?);
            }
            ctx.emit(&report, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Replay(args) => cmd_replay(args, ctx),
    }
}

fn build_strategy(bs: &BasisSet) -> Result<Strategy> {
    bs.dim()
        .checked_pow(bs.len() as u32)
        .filter(|&c| c <= MAX_STRATEGY_OUTCOMES)
        .ok_or_else(|| {
            Error::ResourceGuard(format!(
                "d^k outcomes for d = {}, k = {} exceed {MAX_STRATEGY_OUTCOMES}",
                bs.dim(),
                bs.len()
            ))
        })?;
    Strategy::build(bs)
}

fn strategy_summary(s: &Strategy) -> StrategySummary {
    StrategySummary {
        dim: s.dim(),
        outcomes: s.num_outcomes(),
        min_weight: s.weights().iter().copied().fold(f64::INFINITY, f64::min),
        completeness_residual: s.completeness_residual(),
        max_safe_residual: s
            .safe_vectors()
            .iter()
            .map(|sv| sv.residual)
            .fold(0.0, f64::max),
    }
}

fn load_strategy(source: &StrategySource, ctx: &mut Ctx) -> Result<Strategy> {
    match (&source.dim, &source.strategy) {
        (Some(d), None) => build_strategy(&gen_mub(*d)?),
        (None, Some(path)) => ctx.read_json(path),
        _ => Err(Error::InvalidInput("give exactly one of --dim and --strategy".into())),
    }
}

fn load_attack(path: &Path, ctx: &mut Ctx) -> Result<AttackModel> {
    let file: AttackFile = ctx.read_json(path)?;
    AttackModel::try_from(file)
}

fn cmd_run(cli: &Cli, argv: &[String], args: &RunArgs, ctx: &mut Ctx) -> Result<u8> {
    let strategy: Strategy = ctx.read_json(&args.strategy)?;
    let cfg = ProtocolConfig {
        d: strategy.dim(),
        n: args.n,
        rounds: args.rounds,
        test_fraction: args.test_fraction,
        seed: args.seed,
    };
    cfg.validate()?;
    let (label, am) = match &args.attack_file {
        Some(path) => (path.display().to_string(), Some(load_attack(path, ctx)?)),
        None => {
            let canned: CannedAttack = args.attack.parse()?;
            (canned.to_string(), canned.build(strategy.basis_set(), 1)?)
        }
    };
    let t = run_protocol(&cfg, &strategy, am.as_ref())?;
    let (accepted, keys) = sift_and_test(&t);
    let failed_tests = t
        .test_indices
        .iter()
        .filter(|&&i| !t.records[i].agrees())
        .count();
    let rate = agreement_rate(&t);
    let summary = RunSummary {
        instances: t.records.len(),
        attack: label,
        agreement_rate: rate,
        error_rate: 1.0 - rate,
        accepted,
        tests: t.test_indices.len(),
        failed_tests,
        key_length: keys.alice_key.len(),
        keys_match: keys.alice_key == keys.bob_key,
    };

    fs::create_dir_all(&args.out)?;
    ctx.write(&args.out.join("transcript.jsonl"), t.to_jsonl()?.as_bytes())?;
    ctx.emit(&summary, Some(&args.out.join("summary.json")))?;
    let manifest = build_manifest(cli, argv, ctx)?;
    fs::write(args.out.join("manifest.json"), to_json_string(&manifest)?)?;
    Ok(if accepted { EXIT_OK } else { EXIT_ABORTED })
}

fn cmd_replay(args: &ReplayArgs, ctx: &mut Ctx) -> Result<u8> {
    let manifest: RunManifest = ctx.read_json(&args.manifest)?;
    if manifest.command == "replay" {
        return Err(Error::InvalidInput("cannot replay a replay".into()));
    }
    let mut mismatched = Vec::new();
    for input in &manifest.inputs {
        match fs::read(&input.path) {
            Ok(bytes) if sha256_hex(&bytes) == input.sha256 => {}
            _ => mismatched.push(input.path.clone()),
        }
    }
    let inputs_match = mismatched.is_empty();
    let mut reproduced = false;
    if inputs_match {
        if let Some(tol) = manifest.env.get(TOL_ENV) {
            std::env::set_var(TOL_ENV, tol);
        }
        let argv = std::iter::once("mkqkd".to_string()).chain(manifest.argv.iter().cloned());
        let mut out = Vec::new();
        let mut err = Vec::new();
        main_with_args(argv, &mut out, &mut err);
        let mut all_match = sha256_hex(&out) == manifest.stdout_sha256;
        if !all_match {
            mismatched.push(PathBuf::from("<stdout>"));
        }
        for output in &manifest.outputs {
            match fs::read(&output.path) {
                Ok(bytes) if sha256_hex(&bytes) == output.sha256 => {}
                _ => {
                    all_match = false;
                    mismatched.push(output.path.clone());
                }
            }
        }
        reproduced = all_match;
    }
    let report = ReplayReport {
        reproduced,
        inputs_match,
        mismatched,
    };
    ctx.emit(&report, None)?;
    Ok(if reproduced { EXIT_OK } else { EXIT_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (u8, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("mkqkd").chain(args.iter().copied());
        let code = main_with_args(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run(&["--help"]).0, EXIT_OK);
        assert_eq!(run(&["--version"]).0, EXIT_OK);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(&[]).0, EXIT_USAGE);
        assert_eq!(run(&["bases", "gen"]).0, EXIT_USAGE);
        assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
        let (code, _, err) = run(&["bases", "gen", "--dim", "4"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("unsupported dimension"));
    }

    #[test]
    fn bases_gen_prints_json() {
        let (code, out, _) = run(&["bases", "gen", "--dim", "2"]);
        assert_eq!(code, EXIT_OK);
        let bs: BasisSet = serde_json::from_str(&out).unwrap();
        assert_eq!(bs.len(), 3);
    }

    #[test]
    fn exit_code_classes() {
        assert_eq!(exit_code(&Error::InvalidInput(String::new())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Infeasible), EXIT_FAILED);
        assert_eq!(exit_code(&Error::NotMaximal { min_weight: 0.0 }), EXIT_FAILED);
        assert_eq!(exit_code(&Error::UnsupportedDimension(4)), EXIT_USAGE);
    }

    #[test]
    fn manifest_flag_is_not_recorded() {
        let argv: Vec<String> = ["run", "--manifest-out", "m.json", "--seed", "1", "--manifest-out=x"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(strip_manifest_flag(&argv), vec!["run", "--seed", "1"]);
    }

    #[test]
    fn attack_eval_none_is_clean() {
        let (code, out, _) = run(&["security", "attack-eval", "--dim", "2", "--attack", "none"]);
        assert_eq!(code, EXIT_OK);
        let report: attack::AttackReport = serde_json::from_str(&out).unwrap();
        assert!(report.detection_probability.abs() < 1e-12);
        assert!(report.leakage < 1e-12);
    }
}
