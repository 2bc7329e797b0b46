//! Command-line front end.
//!
//! Exit codes: 0 success, 1 output disagreed with the plaintext sum,
//! 2 configuration error, 3 infeasible parameters, 4 protocol abort,
//! 5 a group could not reconstruct.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::field::{PrimeField, MERSENNE_61};
use crate::groups::{build_honest_graph, GroupAssignment};
use crate::params::{
    expansion_factor, find_params, fraction_count, AvailabilityFormula, ProtocolParams, SecurityConfig,
};
use crate::protocol::{MessageKind, ShardScheme};
use crate::sim::{
    load_inputs, run_scaled_benchmark, run_simulation, verify_privacy_ledger, Adversary, BenchReport,
    Corruption, DropoutModel, DropoutTiming, InputModel, SimulationConfig, SimulationReport, Verdict,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_ABORT: i32 = 4;
pub const EXIT_UNAVAILABLE: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "shardagg", version, about = "Sharded secure aggregation: parameter planning and federation simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Smallest group size and threshold meeting the security and availability targets.
    Params(ParamsArgs),
    /// Run the protocol over an in-process federation and check the output.
    Simulate(SimulateArgs),
    /// Time client and server work, simulating only a sample of groups.
    Bench(BenchArgs),
    /// Expansion-factor table over pack widths.
    Expansion(ExpansionArgs),
    /// Dump group assignments and every protocol message of a small run.
    Trace(TraceArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AdversaryKind {
    None,
    Observer,
    /// Corrupt clients alter their messages at `--mutation-rate`.
    Mutate,
    /// A single message anywhere in the run is altered.
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TimingArg {
    Before,
    After,
    Mixed,
}

impl From<TimingArg> for DropoutTiming {
    fn from(t: TimingArg) -> Self {
        match t {
            TimingArg::Before => DropoutTiming::BeforeShares,
            TimingArg::After => DropoutTiming::AfterShares,
            TimingArg::Mixed => DropoutTiming::Mixed,
        }
    }
}

/// Accepts plain integers and scientific notation such as `1e8`.
fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if f < 0.0 || f.fract() != 0.0 || f > 1e15 {
        return Err(format!("not a whole count: {s}"));
    }
    Ok(f as u64)
}

/// Threat model and targets shared by every planning command.
#[derive(Args, Clone, Debug)]
pub struct ThreatArgs {
    /// Secrets packed per sharing polynomial.
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Shards per input.
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Security target in bits.
    #[arg(long, default_value_t = 40.0)]
    pub sigma: f64,
    /// Availability target in bits.
    #[arg(long, default_value_t = 20.0)]
    pub eta: f64,
    /// Assumed corrupt fraction.
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    /// Assumed dropout fraction.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Error-detecting reconstruction (one extra share per group).
    #[arg(long)]
    pub malicious: bool,
    /// Evaluate availability with the formula's printed `1 -` taken literally.
    #[arg(long)]
    pub literal_availability: bool,
}

impl ThreatArgs {
    fn security(&self, n: u64) -> SecurityConfig {
        SecurityConfig {
            sigma: self.sigma,
            eta: self.eta,
            gamma: self.gamma,
            delta: self.delta,
            n,
            k: self.k,
            m: self.m,
            malicious: self.malicious,
            availability_formula: if self.literal_availability {
                AvailabilityFormula::Literal
            } else {
                AvailabilityFormula::Described
            },
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct ParamsArgs {
    /// Federation size; a comma-separated list sweeps.
    #[arg(long, value_parser = parse_count, value_delimiter = ',', default_value = "1000000")]
    pub n: Vec<u64>,
    #[command(flatten)]
    pub threat: ThreatArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Protocol parameters: planned from the threat model unless both
/// `--g` and `--t` are given.
#[derive(Args, Clone, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub threat: ThreatArgs,
    /// Group size (skips planning; needs --t).
    #[arg(long, requires = "t")]
    pub g: Option<usize>,
    /// Threshold (skips planning; needs --g).
    #[arg(long, requires = "g")]
    pub t: Option<usize>,
    /// Prime field modulus.
    #[arg(long, default_value_t = MERSENNE_61)]
    pub modulus: u64,
    /// Seed for every random choice; a random one is drawn and printed if absent.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    fn params(&self, n: u64) -> Result<ProtocolParams> {
        match (self.g, self.t) {
            (Some(g), Some(t)) => {
                let p = ProtocolParams::manual(n, g, t, self.threat.k, self.threat.m, self.threat.malicious);
                p.validate()?;
                Ok(p)
            }
            _ => find_params(&self.threat.security(n)),
        }
    }

    fn seed(&self, stderr: &mut dyn Write) -> u64 {
        self.seed.unwrap_or_else(|| {
            let s = rand::random::<u64>();
            let _ = writeln!(stderr, "seed: {s}");
            s
        })
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_count, default_value = "1000")]
    pub n: u64,
    /// Input vector length.
    #[arg(long, default_value_t = 100)]
    pub l: usize,
    #[command(flatten)]
    pub run: RunArgs,
    /// Fraction of clients that drop out.
    #[arg(long, default_value_t = 0.0)]
    pub inject_dropouts: f64,
    #[arg(long, value_enum, default_value_t = TimingArg::Before)]
    pub dropout_timing: TimingArg,
    #[arg(long, value_enum, default_value_t = AdversaryKind::None)]
    pub adversary: AdversaryKind,
    /// Actual corrupt fraction; defaults to --gamma when an adversary is set.
    #[arg(long)]
    pub corrupt: Option<f64>,
    /// Per-message mutation probability for `--adversary mutate`.
    #[arg(long, default_value_t = 1.0)]
    pub mutation_rate: f64,
    /// Message kinds an adversary alters.
    #[arg(long, value_delimiter = ',', default_value = "share,broadcast,report")]
    pub mutate_kinds: Vec<String>,
    /// Input file: one decimal value per line, --l per client, clients in order.
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Federation sizes (comma-separated).
    #[arg(long, value_parser = parse_count, value_delimiter = ',', default_value = "100000")]
    pub n: Vec<u64>,
    /// Vector lengths (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub l: Vec<usize>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Groups per round to run client-side; all groups if absent.
    #[arg(long)]
    pub groups_sampled: Option<usize>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct ExpansionArgs {
    /// Pack widths (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
    pub k: Vec<usize>,
    /// Fixed group size; planned per pack width if absent.
    #[arg(long)]
    pub g: Option<usize>,
    #[arg(long, value_parser = parse_count, default_value = "100000000")]
    pub n: u64,
    #[arg(long, default_value_t = 61)]
    pub field_bits: u32,
    #[arg(long, default_value_t = 40.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 20.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long)]
    pub malicious: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(long, value_parser = parse_count, default_value = "4")]
    pub n: u64,
    #[arg(long, default_value_t = 2)]
    pub g: usize,
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub l: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long)]
    pub malicious: bool,
    #[arg(long, default_value_t = MERSENNE_61)]
    pub modulus: u64,
    /// Client order before grouping, e.g. `0,1,3,2`; identity if absent.
    #[arg(long, value_delimiter = ',')]
    pub permutation: Option<Vec<usize>>,
    /// Derive the client order from --seed instead of using the identity.
    #[arg(long, conflicts_with = "permutation")]
    pub seeded: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Input file as for `simulate`; random bits if absent.
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    /// Include payload values in the message dump.
    #[arg(long)]
    pub reveal: bool,
    /// Write the message dump (JSON lines) here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) | Error::FieldTooSmall { .. } => EXIT_INFEASIBLE,
        Error::Protocol(_) | Error::TamperDetected => EXIT_ABORT,
        _ => EXIT_CONFIG,
    }
}

fn error_json(err: &Error) -> String {
    let kind = match exit_code(err) {
        EXIT_INFEASIBLE => "infeasible",
        EXIT_ABORT => "abort",
        _ => "config",
    };
    json!({ "error": kind, "message": err.to_string() }).to_string()
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Error::Config(e.to_string())),
    }
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, stdout, stderr),
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                EXIT_CONFIG
            } else {
                let _ = write!(stdout, "{}", e.render());
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Params(a) => cmd_params(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout, stderr),
        Command::Bench(a) => cmd_bench(&a, stdout, stderr),
        Command::Expansion(a) => cmd_expansion(&a, stdout),
        Command::Trace(a) => cmd_trace(&a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            let _ = writeln!(stdout, "{}", error_json(&err));
            let _ = writeln!(stderr, "error: {err}");
            exit_code(&err)
        }
    }
}

/// `gamma n` and `delta n` enter the search floored to whole parties; the
/// record shows the counts actually used.
fn params_record((p, cfg): &(ProtocolParams, SecurityConfig)) -> serde_json::Value {
    json!({
        "corrupt_assumed": fraction_count(cfg.n, cfg.gamma),
        "dropouts_assumed": fraction_count(cfg.n, cfg.delta),
        "n": p.n,
        "k": p.k,
        "m": p.m,
        "malicious": p.malicious,
        "g": p.g,
        "t": p.t,
        "neighbors": p.neighbors(),
        "achieved_sigma": p.achieved_sigma,
        "achieved_eta": p.achieved_eta,
        "expansion_factor": p.expansion_factor(PrimeField::mersenne61().bits()),
    })
}

pub fn cmd_params(a: &ParamsArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mut records = Vec::with_capacity(a.n.len());
    for &n in &a.n {
        let cfg = a.threat.security(n);
        records.push((find_params(&cfg)?, cfg));
    }
    let text = match a.output.format {
        Format::Json if records.len() == 1 => format!("{}\n", params_record(&records[0])),
        Format::Json => {
            let all: Vec<_> = records.iter().map(params_record).collect();
            format!("{}\n", serde_json::Value::Array(all))
        }
        Format::Csv => {
            let header = ["n", "k", "malicious", "g", "t", "neighbors", "achieved_sigma", "achieved_eta", "expansion_factor"];
            let rows: Vec<_> = records
                .iter()
                .map(|(p, _)| {
                    vec![
                        p.n.to_string(),
                        p.k.to_string(),
                        p.malicious.to_string(),
                        p.g.to_string(),
                        p.t.to_string(),
                        p.neighbors().to_string(),
                        format!("{:.4}", p.achieved_sigma),
                        format!("{:.4}", p.achieved_eta),
                        format!("{:.4}", p.expansion_factor(61)),
                    ]
                })
                .collect();
            csv_text(&header, &rows)?
        }
    };
    emit(a.output.out.as_deref(), &text, stdout)?;
    Ok(EXIT_OK)
}

fn parse_kinds(kinds: &[String]) -> Result<Vec<MessageKind>> {
    kinds.iter().map(|k| k.parse()).collect()
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Match => EXIT_OK,
        Verdict::Mismatch => EXIT_MISMATCH,
        Verdict::Abort => EXIT_ABORT,
        Verdict::Unavailable => EXIT_UNAVAILABLE,
    }
}

fn simulation_config(a: &SimulateArgs, stderr: &mut dyn Write) -> Result<SimulationConfig> {
    let params = a.run.params(a.n)?;
    let mut cfg = SimulationConfig::new(params, a.l, a.run.seed(stderr));
    cfg.modulus = a.run.modulus;
    cfg.dropouts = DropoutModel { fraction: a.inject_dropouts, timing: a.dropout_timing.into(), explicit: None };
    let kinds = parse_kinds(&a.mutate_kinds)?;
    cfg.adversary = match a.adversary {
        AdversaryKind::None => Adversary::None,
        AdversaryKind::Observer => Adversary::Observer,
        AdversaryKind::Mutate => Adversary::Mutator { rate: a.mutation_rate, kinds },
        AdversaryKind::Single => Adversary::SingleMutation { kinds },
    };
    let default_corrupt = if a.adversary == AdversaryKind::None { 0.0 } else { a.run.threat.gamma };
    cfg.corruption = Corruption::Fraction(a.corrupt.unwrap_or(default_corrupt));
    if let Some(path) = &a.inputs {
        cfg.inputs = InputModel::Fixed(load_inputs(path, a.n as usize, a.l)?);
    }
    Ok(cfg)
}

fn verdict_line(r: &SimulationReport) -> String {
    let name = serde_json::to_value(r.verdict).expect("verdict");
    let mut line = format!(
        "verdict: {} (n={}, g={}, t={}, k={}, covered={}, dropped={}, aborted_clients={})",
        name.as_str().unwrap_or_default(),
        r.n,
        r.g,
        r.t,
        r.k,
        r.covered.len(),
        r.dropped_before_shares.len() + r.dropped_after_shares.len(),
        r.client_aborts
    );
    if let Some(reason) = &r.abort_reason {
        line.push_str(&format!("; abort: {reason}"));
    }
    line
}

pub fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let cfg = simulation_config(a, stderr)?;
    let report = run_simulation(&cfg)?;
    let _ = writeln!(stderr, "{}", verdict_line(&report));
    if report.ledger.is_some() {
        let lv = verify_privacy_ledger(&report, &cfg.params);
        let _ = writeln!(
            stderr,
            "privacy ledger: clean={} exposed_groups={} violations={} honest_graph_connected={}",
            lv.clean,
            lv.exposed_groups.len(),
            lv.violations.len(),
            lv.honest_graph_connected
        );
    }
    let text = match a.output.format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")),
        Format::Csv => csv_text(&SimulationReport::CSV_HEADER, &[report.csv_row()])?,
    };
    emit(a.output.out.as_deref(), &text, stdout)?;
    Ok(verdict_code(report.verdict))
}

pub fn cmd_bench(a: &BenchArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let seed = a.run.seed(stderr);
    let mut reports: Vec<BenchReport> = Vec::new();
    for &n in &a.n {
        let params = a.run.params(n)?;
        for &l in &a.l {
            let mut cfg = SimulationConfig::new(params.clone(), l, seed);
            cfg.modulus = a.run.modulus;
            let groups = (n as usize / params.g).max(1);
            let sampled = a.groups_sampled.unwrap_or(groups).min(groups);
            reports.push(run_scaled_benchmark(&cfg, sampled)?);
        }
    }
    let text = match a.format {
        Format::Csv => csv_text(&BenchReport::CSV_HEADER, &reports.iter().map(BenchReport::csv_row).collect::<Vec<_>>())?,
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&reports).expect("report serializes")),
    };
    emit(a.out.as_deref(), &text, stdout)?;
    Ok(EXIT_OK)
}

pub fn cmd_expansion(a: &ExpansionArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mut rows = Vec::with_capacity(a.k.len());
    for &k in &a.k {
        if k == 0 {
            return Err(Error::Config("pack width k must be positive".into()));
        }
        let g = match a.g {
            Some(g) => g,
            None => {
                let cfg = SecurityConfig {
                    sigma: a.sigma,
                    eta: a.eta,
                    gamma: a.gamma,
                    delta: a.delta,
                    n: a.n,
                    k,
                    m: 2,
                    malicious: a.malicious,
                    availability_formula: AvailabilityFormula::Described,
                };
                find_params(&cfg)?.g
            }
        };
        rows.push((k, g, expansion_factor(g, k, a.field_bits)));
    }
    let text = match a.output.format {
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|&(k, g, ex)| json!({ "k": k, "g": g, "neighbors": 2 * g, "field_bits": a.field_bits, "expansion_factor": ex }))
                .collect();
            format!("{}\n", serde_json::Value::Array(v))
        }
        Format::Csv => {
            let rows: Vec<_> = rows
                .iter()
                .map(|&(k, g, ex)| vec![k.to_string(), g.to_string(), (2 * g).to_string(), a.field_bits.to_string(), format!("{ex:.4}")])
                .collect();
            csv_text(&["k", "g", "neighbors", "field_bits", "expansion_factor"], &rows)?
        }
    };
    emit(a.output.out.as_deref(), &text, stdout)?;
    Ok(EXIT_OK)
}

fn party_name(id: usize, n: usize) -> String {
    if n <= 26 {
        char::from(b'A' + id as u8).to_string()
    } else {
        id.to_string()
    }
}

fn group_table(assignments: &[GroupAssignment], n: usize) -> String {
    let mut out = String::new();
    for a in assignments {
        let groups: Vec<String> = a
            .groups
            .iter()
            .map(|g| format!("{{{}}}", g.iter().map(|&c| party_name(c, n)).collect::<Vec<_>>().join(", ")))
            .collect();
        out.push_str(&format!("round {}: {}\n", a.round + 1, groups.join(" ")));
    }
    out
}

pub fn cmd_trace(a: &TraceArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let n = a.n as usize;
    if n > 4096 {
        return Err(Error::Config(format!("trace is meant for small federations; got n={n}")));
    }
    let params = ProtocolParams::manual(a.n, a.g, a.t, a.k, a.m, a.malicious);
    params.validate()?;
    let seed = match (a.seed, a.seeded) {
        (Some(s), _) => s,
        (None, true) => {
            let s = rand::random::<u64>();
            let _ = writeln!(stderr, "seed: {s}");
            s
        }
        (None, false) => 0,
    };
    let mut cfg = SimulationConfig::new(params, a.l, seed);
    cfg.modulus = a.modulus;
    cfg.record_trace = true;
    cfg.reveal_payloads = a.reveal;
    cfg.shard_scheme = ShardScheme::Shamir;
    cfg.permutation = match (&a.permutation, a.seeded) {
        (Some(p), _) => Some(p.clone()),
        (None, true) => None,
        (None, false) => Some((0..n).collect()),
    };
    cfg.inputs = match &a.inputs {
        Some(path) => InputModel::Fixed(load_inputs(path, n, a.l)?),
        None => InputModel::Bounded(2),
    };
    let report = run_simulation(&cfg)?;

    let perm = cfg.permutation.clone().unwrap_or_else(|| crate::groups::derive_permutation(&seed.to_le_bytes(), n));
    let assignments: Vec<_> =
        (0..a.m).map(|r| crate::groups::assign_round(&perm, a.g, r)).collect::<Result<_>>()?;
    let refs: Vec<_> = assignments.iter().collect();
    let connected = build_honest_graph(&refs, &vec![true; n]).is_connected();

    let mut summary = group_table(&assignments, n);
    summary.push_str(&format!("honest graph connected: {connected}\n"));
    summary.push_str(&format!(
        "output: {:?}  plaintext sum: {:?}\n{}\n",
        report.output,
        report.oracle_sum,
        verdict_line(&report)
    ));
    stdout.write_all(summary.as_bytes()).map_err(|e| Error::Config(e.to_string()))?;

    let mut lines = String::new();
    for rec in &report.trace {
        lines.push_str(&serde_json::to_string(rec).expect("trace record serializes"));
        lines.push('\n');
    }
    emit(a.out.as_deref(), &lines, stdout)?;
    Ok(verdict_code(report.verdict))
}
