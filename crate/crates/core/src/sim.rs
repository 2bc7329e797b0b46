//! In-process federation simulator.
//!
//! The driver is phase-synchronous and runs one group at a time: members
//! send shares, the shuffled deliveries are applied, members broadcast,
//! broadcasts are delivered, members reconstruct and report. Because
//! dropouts are drawn before the run and every client's `m` share sends are
//! treated as one step, processing round `r` group by group is equivalent
//! to running all rounds side by side.
//!
//! Every random choice (inputs, sharing randomness, dropouts, corruptions,
//! delivery order, mutations) comes from a stream derived from the seed, so
//! a configuration reproduces its report exactly up to wall-clock timings.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField, MERSENNE_61};
use crate::groups::{assign_round, build_honest_graph, derive_permutation, ClientId, GroupAssignment};
use crate::params::ProtocolParams;
use crate::protocol::{
    memberships_for, ClientState, Message, MessageKind, Party, SchemeCache, ServerOutcome, ServerState,
    SessionConfig, ShardScheme, TraceRecord,
};

/// Largest federation [`run_simulation`] will materialize.
pub const MAX_FULL_SIMULATION: usize = 1_000_000;

/// Largest federation [`run_scaled_benchmark`] will lay out.
pub const MAX_BENCH_FEDERATION: usize = 10_000_000;

/// Client steps (split, share, broadcast, report) plus the server step.
pub const PROTOCOL_STEPS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutTiming {
    /// Dropped clients send nothing.
    #[default]
    BeforeShares,
    /// Dropped clients deliver their shares, then go silent.
    AfterShares,
    /// Each dropped client picks one of the above with equal odds.
    Mixed,
}

impl std::str::FromStr for DropoutTiming {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "before" | "before-shares" | "before_shares" => Ok(Self::BeforeShares),
            "after" | "after-shares" | "after_shares" => Ok(Self::AfterShares),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::Config(format!("unknown dropout timing {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DropoutModel {
    /// `floor(fraction * n)` clients drop, chosen uniformly.
    pub fraction: f64,
    pub timing: DropoutTiming,
    /// Overrides `fraction` with a fixed set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<ClientId>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    Fraction(f64),
    Explicit(Vec<ClientId>),
}

impl Default for Corruption {
    fn default() -> Self {
        Corruption::Fraction(0.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversary {
    #[default]
    None,
    /// Corrupt clients follow the protocol; their view is tallied.
    Observer,
    /// Each message of a listed kind sent by a corrupt client is altered
    /// with probability `rate`.
    Mutator { rate: f64, kinds: Vec<MessageKind> },
    /// Exactly one in-group or report message, of a listed kind, is altered.
    SingleMutation { kinds: Vec<MessageKind> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputModel {
    /// Uniform field elements.
    #[default]
    Random,
    /// Uniform integers below the bound.
    Bounded(u64),
    /// One vector per client.
    Fixed(Vec<Vec<u64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub params: ProtocolParams,
    pub modulus: u64,
    /// Input vector length.
    pub len: usize,
    pub seed: u64,
    #[serde(default)]
    pub dropouts: DropoutModel,
    #[serde(default)]
    pub corruption: Corruption,
    #[serde(default)]
    pub adversary: Adversary,
    #[serde(default)]
    pub inputs: InputModel,
    #[serde(default)]
    pub shard_scheme: ShardScheme,
    /// Replaces the seed-derived permutation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<ClientId>>,
    #[serde(default)]
    pub record_trace: bool,
    #[serde(default)]
    pub reveal_payloads: bool,
}

impl SimulationConfig {
    pub fn new(params: ProtocolParams, len: usize, seed: u64) -> Self {
        Self {
            params,
            modulus: MERSENNE_61,
            len,
            seed,
            dropouts: DropoutModel::default(),
            corruption: Corruption::default(),
            adversary: Adversary::default(),
            inputs: InputModel::default(),
            shard_scheme: ShardScheme::default(),
            permutation: None,
            record_trace: false,
            reveal_payloads: false,
        }
    }

    fn field(&self) -> Result<PrimeField> {
        PrimeField::new(self.modulus)
    }

    fn session(&self) -> Result<SessionConfig> {
        let mut s = SessionConfig::from_params(&self.params, self.field()?, self.len);
        s.shard_scheme = self.shard_scheme;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self, limit: usize) -> Result<()> {
        let n = self.params.n as usize;
        if n > limit {
            return Err(Error::Config(format!("federation of {n} exceeds the limit of {limit} simulated clients")));
        }
        self.params.validate()?;
        let fraction_ok = |f: f64| (0.0..1.0).contains(&f);
        if !fraction_ok(self.dropouts.fraction) {
            return Err(Error::Config(format!("dropout fraction {} outside [0, 1)", self.dropouts.fraction)));
        }
        if let Corruption::Fraction(f) = self.corruption {
            if !fraction_ok(f) {
                return Err(Error::Config(format!("corrupt fraction {f} outside [0, 1)")));
            }
        }
        for set in [self.dropouts.explicit.as_deref(), self.explicit_corrupt()].into_iter().flatten() {
            if set.iter().any(|&c| c >= n) {
                return Err(Error::Config("client id outside the federation".into()));
            }
        }
        if let Adversary::Mutator { rate, .. } = self.adversary {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("mutation rate {rate} outside [0, 1]")));
            }
        }
        if let Some(p) = &self.permutation {
            let mut sorted = p.clone();
            sorted.sort_unstable();
            if sorted != (0..n).collect::<Vec<_>>() {
                return Err(Error::Config("permutation override is not a permutation of the federation".into()));
            }
        }
        if let InputModel::Fixed(v) = &self.inputs {
            if v.len() != n || v.iter().any(|x| x.len() != self.len) {
                return Err(Error::Config(format!("fixed inputs must be {n} vectors of length {}", self.len)));
            }
        }
        let field = self.field()?;
        let largest = 2 * self.params.g - 1;
        if (largest.min(n) + self.params.k) as u64 >= field.modulus() {
            return Err(Error::FieldTooSmall { shares: largest.min(n), pack: self.params.k, modulus: field.modulus() });
        }
        self.session().map(|_| ())
    }

    fn explicit_corrupt(&self) -> Option<&[ClientId]> {
        match &self.corruption {
            Corruption::Explicit(v) => Some(v),
            Corruption::Fraction(_) => None,
        }
    }
}

/// Reads one decimal value per line: `len` values per client, clients in
/// order. Blank lines are ignored.
pub fn load_inputs(path: &Path, n: usize, len: usize) -> Result<Vec<Vec<u64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(n * len);
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v = trimmed
            .parse::<u64>()
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        values.push(v);
    }
    if values.len() != n * len {
        return Err(Error::Config(format!(
            "{} holds {} values, expected {n} clients x {len}",
            path.display(),
            values.len()
        )));
    }
    Ok(values.chunks(len).map(<[u64]>::to_vec).collect())
}

fn stream(seed: u64, tag: &str, index: u64) -> ChaCha20Rng {
    let digest = Sha256::new()
        .chain_update(b"shardagg/sim")
        .chain_update(seed.to_le_bytes())
        .chain_update(tag.as_bytes())
        .chain_update(index.to_le_bytes())
        .finalize();
    ChaCha20Rng::from_seed(digest.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Output equals the sum over the covered inputs.
    Match,
    Mismatch,
    Abort,
    /// Some group could not reconstruct; no output.
    Unavailable,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCount {
    pub messages: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub by_kind: BTreeMap<MessageKind, KindCount>,
    pub total_messages: u64,
    pub total_bytes: u64,
    pub client_to_client_bytes: u64,
    pub server_received_messages: u64,
    pub server_received_bytes: u64,
    pub uplink_bytes_min: u64,
    pub uplink_bytes_max: u64,
    pub uplink_bytes_mean: f64,
    /// Bytes sent by each client.
    #[serde(skip)]
    pub uplink_bytes: Vec<u64>,
}

impl Counters {
    fn record(&mut self, msg: &Message, field: &PrimeField) {
        let bytes = msg.byte_len(field) as u64;
        let entry = self.by_kind.entry(msg.kind).or_default();
        entry.messages += 1;
        entry.bytes += bytes;
        self.total_messages += 1;
        self.total_bytes += bytes;
        self.uplink_bytes[msg.sender] += bytes;
        match msg.receiver {
            Party::Server => {
                self.server_received_messages += 1;
                self.server_received_bytes += bytes;
            }
            Party::Client(_) => self.client_to_client_bytes += bytes,
        }
    }

    fn summarize(&mut self) {
        self.uplink_bytes_min = self.uplink_bytes.iter().copied().min().unwrap_or(0);
        self.uplink_bytes_max = self.uplink_bytes.iter().copied().max().unwrap_or(0);
        self.uplink_bytes_mean = if self.uplink_bytes.is_empty() {
            0.0
        } else {
            self.uplink_bytes.iter().sum::<u64>() as f64 / self.uplink_bytes.len() as f64
        };
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatus {
    Reported,
    Failed,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub round: usize,
    pub group: usize,
    pub size: usize,
    pub dropped_before_shares: usize,
    pub dropped_after_shares: usize,
    pub reports: usize,
    pub status: GroupStatus,
}

/// Shares of honest clients' polynomials that reached corrupt members.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupExposure {
    pub round: usize,
    pub group: usize,
    pub corrupt_members: usize,
    pub honest_senders: usize,
    /// Fewest and most shares of any one honest sender seen by the coalition.
    pub observed_min: usize,
    pub observed_max: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub threshold: usize,
    pub groups: Vec<GroupExposure>,
    pub honest_graph_connected: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub client_ms: f64,
    pub server_ms: f64,
    pub client_ms_per_client: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n: usize,
    pub g: usize,
    pub t: usize,
    pub k: usize,
    pub m: usize,
    pub len: usize,
    pub malicious: bool,
    pub seed: u64,
    pub verdict: Verdict,
    pub output: Option<Vec<u64>>,
    pub abort_reason: Option<String>,
    /// `(round, group)` pairs with no report.
    pub unavailable_groups: Vec<(usize, usize)>,
    pub oracle_sum: Vec<u64>,
    /// Clients whose inputs the output must contain.
    pub covered: Vec<ClientId>,
    pub dropped_before_shares: Vec<ClientId>,
    pub dropped_after_shares: Vec<ClientId>,
    pub corrupt: Vec<ClientId>,
    pub protocol_steps: usize,
    pub counters: Counters,
    pub groups: Vec<GroupRecord>,
    pub ledger: Option<PrivacyLedger>,
    pub mutations_applied: usize,
    pub client_aborts: usize,
    pub timing: Timing,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

impl SimulationReport {
    /// The report with wall-clock fields zeroed, for exact comparison.
    pub fn without_timing(&self) -> Self {
        Self { timing: Timing::default(), ..self.clone() }
    }

    pub fn failed_groups(&self) -> usize {
        self.groups.iter().filter(|g| g.status == GroupStatus::Failed).count()
    }

    pub const CSV_HEADER: [&'static str; 16] = [
        "n",
        "g",
        "t",
        "k",
        "m",
        "len",
        "malicious",
        "seed",
        "verdict",
        "dropped",
        "corrupt",
        "failed_groups",
        "total_bytes",
        "server_bytes",
        "client_ms",
        "server_ms",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.g.to_string(),
            self.t.to_string(),
            self.k.to_string(),
            self.m.to_string(),
            self.len.to_string(),
            self.malicious.to_string(),
            self.seed.to_string(),
            serde_json::to_value(self.verdict).expect("verdict").as_str().unwrap_or_default().to_string(),
            (self.dropped_before_shares.len() + self.dropped_after_shares.len()).to_string(),
            self.corrupt.len().to_string(),
            self.failed_groups().to_string(),
            self.counters.total_bytes.to_string(),
            self.counters.server_received_bytes.to_string(),
            format!("{:.3}", self.timing.client_ms),
            format!("{:.3}", self.timing.server_ms),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Presence {
    Live,
    DroppedBefore,
    DroppedAfter,
}

/// The one message a single-mutation adversary alters.
#[derive(Clone, Copy, Debug)]
struct MutationTarget {
    kind: MessageKind,
    round: usize,
    sender: ClientId,
    receiver: Party,
}

struct Driver<'a> {
    cfg: &'a SimulationConfig,
    field: PrimeField,
    counters: Counters,
    trace: Vec<TraceRecord>,
    corrupt: Vec<bool>,
    rng: ChaCha20Rng,
    target: Option<MutationTarget>,
    mutations_applied: usize,
}

impl Driver<'_> {
    fn mutate(&mut self, msg: &mut Message) {
        let hit = match (&self.cfg.adversary, self.target) {
            (Adversary::Mutator { rate, kinds }, _) => {
                self.corrupt[msg.sender] && kinds.contains(&msg.kind) && self.rng.gen_bool(*rate)
            }
            (Adversary::SingleMutation { .. }, Some(t)) => {
                t.kind == msg.kind && t.round == msg.round && t.sender == msg.sender && t.receiver == msg.receiver
            }
            _ => false,
        };
        if hit && !msg.payload.is_empty() {
            let i = self.rng.gen_range(0..msg.payload.len());
            let delta = self.field.random_nonzero(&mut self.rng);
            msg.payload[i] = self.field.add(msg.payload[i], delta);
            self.mutations_applied += 1;
        }
    }

    /// Records, mutates and shuffles one phase's outgoing messages.
    fn post(&mut self, mut msgs: Vec<Message>) -> Vec<Message> {
        for msg in msgs.iter_mut() {
            self.mutate(msg);
            self.counters.record(msg, &self.field);
            if self.cfg.record_trace {
                self.trace.push(msg.trace_record(self.cfg.reveal_payloads));
            }
        }
        msgs.shuffle(&mut self.rng);
        msgs
    }
}

fn pick_single_target(
    kinds: &[MessageKind],
    assignments: &[GroupAssignment],
    presence: &[Presence],
    rng: &mut ChaCha20Rng,
) -> Option<MutationTarget> {
    let kinds: Vec<_> = kinds.iter().copied().filter(|k| *k != MessageKind::Abort).collect();
    if kinds.is_empty() {
        return None;
    }
    let round = rng.gen_range(0..assignments.len());
    let groups = &assignments[round].groups;
    let members = &groups[rng.gen_range(0..groups.len())];
    let kind = kinds[rng.gen_range(0..kinds.len())];
    let senders: Vec<_> = members.iter().copied().filter(|&c| presence[c] == Presence::Live).collect();
    let sender = *senders.choose(rng)?;
    let receiver = match kind {
        MessageKind::GroupSumReport => Party::Server,
        _ => {
            let others: Vec<_> = members.iter().copied().filter(|&c| c != sender).collect();
            Party::Client(*others.choose(rng)?)
        }
    };
    Some(MutationTarget { kind, round, sender, receiver })
}

fn choose_subset(n: usize, fraction: f64, rng: &mut ChaCha20Rng) -> Vec<ClientId> {
    let count = ((fraction * n as f64).floor() as usize).min(n);
    let mut v = index::sample(rng, n, count).into_vec();
    v.sort_unstable();
    v
}

fn client_inputs(cfg: &SimulationConfig, field: &PrimeField, id: ClientId) -> Vec<FieldElement> {
    match &cfg.inputs {
        InputModel::Fixed(v) => v[id].iter().map(|&x| field.element(x)).collect(),
        InputModel::Random => {
            let mut rng = stream(cfg.seed, "input", id as u64);
            (0..cfg.len).map(|_| field.random(&mut rng)).collect()
        }
        InputModel::Bounded(bound) => {
            let mut rng = stream(cfg.seed, "input", id as u64);
            (0..cfg.len).map(|_| field.element(rng.gen_range(0..(*bound).max(1)))).collect()
        }
    }
}

fn round_assignments(cfg: &SimulationConfig) -> Result<Vec<GroupAssignment>> {
    let n = cfg.params.n as usize;
    let perm = match &cfg.permutation {
        Some(p) => p.clone(),
        None => derive_permutation(&cfg.seed.to_le_bytes(), n),
    };
    (0..cfg.params.m).map(|r| assign_round(&perm, cfg.params.g, r)).collect()
}

/// Runs the full protocol over an in-process federation.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationReport> {
    cfg.validate(MAX_FULL_SIMULATION)?;
    let n = cfg.params.n as usize;
    let m = cfg.params.m;
    let field = cfg.field()?;
    let session = Arc::new(cfg.session()?);
    let assignments = round_assignments(cfg)?;
    let memberships: Vec<_> = assignments.iter().map(memberships_for).collect();

    let mut setup_rng = stream(cfg.seed, "setup", 0);
    let corrupt_ids = match &cfg.corruption {
        Corruption::Explicit(v) => {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            v
        }
        Corruption::Fraction(f) => choose_subset(n, *f, &mut setup_rng),
    };
    let mut corrupt = vec![false; n];
    for &c in &corrupt_ids {
        corrupt[c] = true;
    }
    let dropped = match &cfg.dropouts.explicit {
        Some(v) => {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            v
        }
        None => choose_subset(n, cfg.dropouts.fraction, &mut setup_rng),
    };
    let mut presence = vec![Presence::Live; n];
    for &c in &dropped {
        let after = match cfg.dropouts.timing {
            DropoutTiming::BeforeShares => false,
            DropoutTiming::AfterShares => true,
            DropoutTiming::Mixed => setup_rng.gen_bool(0.5),
        };
        presence[c] = if after { Presence::DroppedAfter } else { Presence::DroppedBefore };
    }
    let target = match &cfg.adversary {
        Adversary::SingleMutation { kinds } => pick_single_target(kinds, &assignments, &presence, &mut setup_rng),
        _ => None,
    };

    let mut driver = Driver {
        cfg,
        field,
        counters: Counters { uplink_bytes: vec![0; n], ..Default::default() },
        trace: Vec::new(),
        corrupt: corrupt.clone(),
        rng: stream(cfg.seed, "network", 0),
        target,
        mutations_applied: 0,
    };
    let cache = SchemeCache::new(&session);
    let mut client_time = Duration::ZERO;
    let mut server_time = Duration::ZERO;

    let mut oracle = vec![FieldElement::ZERO; cfg.len];
    let mut covered = Vec::with_capacity(n);
    let mut clients = Vec::with_capacity(n);
    for id in 0..n {
        let input = client_inputs(cfg, &field, id);
        if presence[id] != Presence::DroppedBefore {
            field.add_assign_slice(&mut oracle, &input);
            covered.push(id);
        }
        let ms = (0..m).map(|r| memberships[r][id].clone()).collect();
        let mut client = ClientState::new(id, session.clone(), input, ms)?;
        if presence[id] != Presence::DroppedBefore {
            let start = Instant::now();
            client.split(&mut stream(cfg.seed, "split", id as u64))?;
            client_time += start.elapsed();
        }
        clients.push(client);
    }

    let refs: Vec<&GroupAssignment> = assignments.iter().collect();
    let mut server = ServerState::new(session.clone(), &refs)?;
    let observing = !corrupt_ids.is_empty();
    let mut exposures = Vec::new();
    let mut records = Vec::new();

    for (r, assignment) in assignments.iter().enumerate() {
        for (gi, members) in assignment.groups.iter().enumerate() {
            // share delivery
            let mut outbox = Vec::new();
            for &c in members {
                if presence[c] == Presence::DroppedBefore {
                    continue;
                }
                let start = Instant::now();
                let mut rng = stream(cfg.seed, "share", (c * m + r) as u64);
                outbox.extend(clients[c].group_agg_round1(r, &cache, &mut rng)?);
                client_time += start.elapsed();
            }
            if observing {
                exposures.push(exposure(r, gi, members, &presence, &corrupt, &outbox));
            }
            for msg in driver.post(outbox) {
                if let Party::Client(to) = msg.receiver {
                    if presence[to] != Presence::DroppedBefore {
                        clients[to].receive(msg);
                    }
                }
            }

            // sum broadcast
            let mut outbox = Vec::new();
            for &c in members {
                if presence[c] != Presence::Live {
                    continue;
                }
                let start = Instant::now();
                outbox.extend(clients[c].group_agg_round2(r)?);
                client_time += start.elapsed();
            }
            for msg in driver.post(outbox) {
                if let Party::Client(to) = msg.receiver {
                    if presence[to] == Presence::Live {
                        clients[to].receive(msg);
                    }
                }
            }

            // reconstruction and report
            let mut outbox = Vec::new();
            for &c in members {
                if presence[c] != Presence::Live {
                    continue;
                }
                let start = Instant::now();
                outbox.extend(clients[c].group_agg_round3(r, &cache));
                client_time += start.elapsed();
            }
            let aborted = outbox.iter().any(|msg| msg.kind == MessageKind::Abort);
            let start = Instant::now();
            for msg in driver.post(outbox) {
                server.receive(&msg);
            }
            server_time += start.elapsed();
            cache.clear_reconstructors();

            let reports = server.report_count(r, gi);
            records.push(GroupRecord {
                round: r,
                group: gi,
                size: members.len(),
                dropped_before_shares: members.iter().filter(|&&c| presence[c] == Presence::DroppedBefore).count(),
                dropped_after_shares: members.iter().filter(|&&c| presence[c] == Presence::DroppedAfter).count(),
                reports,
                status: if aborted {
                    GroupStatus::Aborted
                } else if reports == 0 {
                    GroupStatus::Failed
                } else {
                    GroupStatus::Reported
                },
            });
        }
    }

    let start = Instant::now();
    let outcome = server.finish();
    server_time += start.elapsed();

    let ledger = observing.then(|| {
        let honest: Vec<bool> = (0..n).map(|c| !corrupt[c] && presence[c] == Presence::Live).collect();
        PrivacyLedger {
            threshold: cfg.params.t,
            groups: exposures,
            honest_graph_connected: build_honest_graph(&refs, &honest).is_connected(),
        }
    });

    let oracle_sum: Vec<u64> = oracle.iter().map(|v| v.value()).collect();
    let (verdict, output, abort_reason, unavailable_groups) = match outcome {
        ServerOutcome::Output(v) => {
            let v: Vec<u64> = v.iter().map(|x| x.value()).collect();
            let verdict = if v == oracle_sum { Verdict::Match } else { Verdict::Mismatch };
            (verdict, Some(v), None, Vec::new())
        }
        ServerOutcome::Aborted(reason) => (Verdict::Abort, None, Some(reason), Vec::new()),
        ServerOutcome::Unavailable(missing) => (Verdict::Unavailable, None, None, missing),
    };
    let mut counters = driver.counters;
    counters.summarize();
    let by_presence = |p: Presence| (0..n).filter(|&c| presence[c] == p).collect::<Vec<_>>();
    let client_ms = client_time.as_secs_f64() * 1e3;

    Ok(SimulationReport {
        n,
        g: cfg.params.g,
        t: cfg.params.t,
        k: cfg.params.k,
        m,
        len: cfg.len,
        malicious: cfg.params.malicious,
        seed: cfg.seed,
        verdict,
        output,
        abort_reason,
        unavailable_groups,
        oracle_sum,
        covered,
        dropped_before_shares: by_presence(Presence::DroppedBefore),
        dropped_after_shares: by_presence(Presence::DroppedAfter),
        corrupt: corrupt_ids,
        protocol_steps: PROTOCOL_STEPS,
        counters,
        groups: records,
        ledger,
        mutations_applied: driver.mutations_applied,
        client_aborts: clients.iter().filter(|c| c.is_aborted()).count(),
        timing: Timing {
            client_ms,
            server_ms: server_time.as_secs_f64() * 1e3,
            client_ms_per_client: client_ms / n as f64,
        },
        trace: driver.trace,
    })
}

fn exposure(
    round: usize,
    group: usize,
    members: &[ClientId],
    presence: &[Presence],
    corrupt: &[bool],
    deliveries: &[Message],
) -> GroupExposure {
    let mut seen: BTreeMap<ClientId, usize> = BTreeMap::new();
    for &c in members {
        if !corrupt[c] && presence[c] != Presence::DroppedBefore {
            seen.insert(c, 0);
        }
    }
    for msg in deliveries {
        if let (Some(count), Party::Client(to)) = (seen.get_mut(&msg.sender), msg.receiver) {
            if corrupt[to] {
                *count += 1;
            }
        }
    }
    GroupExposure {
        round,
        group,
        corrupt_members: members.iter().filter(|&&c| corrupt[c]).count(),
        honest_senders: seen.len(),
        observed_min: seen.values().copied().min().unwrap_or(0),
        observed_max: seen.values().copied().max().unwrap_or(0),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerVerdict {
    /// No accounting violations, no exposed group, connected honest graph.
    pub clean: bool,
    /// Groups whose coalition view disagrees with their corrupt membership.
    pub violations: Vec<(usize, usize)>,
    /// Groups with at least `t` corrupt members.
    pub exposed_groups: Vec<(usize, usize)>,
    pub honest_graph_connected: bool,
}

/// Checks that the coalition saw `t` or more shares of an honest client
/// only where the group held `t` or more corrupt members, and that the
/// honest graph over the rounds is connected.
pub fn verify_privacy_ledger(report: &SimulationReport, params: &ProtocolParams) -> LedgerVerdict {
    let Some(ledger) = &report.ledger else {
        return LedgerVerdict {
            clean: true,
            violations: Vec::new(),
            exposed_groups: Vec::new(),
            honest_graph_connected: true,
        };
    };
    let t = params.t;
    let mut violations = Vec::new();
    let mut exposed_groups = Vec::new();
    for e in &ledger.groups {
        let consistent = e.honest_senders == 0
            || (e.observed_min == e.observed_max && e.observed_max <= e.corrupt_members);
        if !consistent || (e.observed_max >= t && e.corrupt_members < t) {
            violations.push((e.round, e.group));
        }
        if e.corrupt_members >= t {
            exposed_groups.push((e.round, e.group));
        }
    }
    LedgerVerdict {
        clean: violations.is_empty() && exposed_groups.is_empty() && ledger.honest_graph_connected,
        violations,
        exposed_groups,
        honest_graph_connected: ledger.honest_graph_connected,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub len: usize,
    pub g: usize,
    pub t: usize,
    pub k: usize,
    pub m: usize,
    pub malicious: bool,
    pub groups_per_round: usize,
    pub sampled_groups: usize,
    /// Total groups over sampled groups, per round.
    pub sampling_factor: f64,
    pub clients_simulated: usize,
    pub client_ms: f64,
    pub client_ms_per_client: f64,
    pub server_ms: f64,
    pub reports_received: u64,
    /// Sampled groups whose reconstructed total matched their plaintext sum.
    pub sampled_groups_correct: usize,
    pub server_output: bool,
}

impl BenchReport {
    pub const CSV_HEADER: [&'static str; 6] = ["n", "L", "mode", "client_ms", "server_ms", "sampled_groups"];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.len.to_string(),
            if self.malicious { "malicious" } else { "semi-honest" }.to_string(),
            format!("{:.3}", self.client_ms_per_client),
            format!("{:.3}", self.server_ms),
            self.sampled_groups.to_string(),
        ]
    }
}

/// Runs the client side for `groups_sampled` groups per round, replaces the
/// remaining groups' reports with consistent dummy values, and times the
/// server over reports from all `n` clients in every round.
pub fn run_scaled_benchmark(cfg: &SimulationConfig, groups_sampled: usize) -> Result<BenchReport> {
    cfg.validate(MAX_BENCH_FEDERATION)?;
    let n = cfg.params.n as usize;
    let m = cfg.params.m;
    let field = cfg.field()?;
    let session = Arc::new(cfg.session()?);
    let assignments = round_assignments(cfg)?;
    let groups_per_round = assignments[0].group_count();
    if groups_sampled == 0 || groups_sampled > groups_per_round {
        return Err(Error::Config(format!("groups_sampled must lie in 1..={groups_per_round}, got {groups_sampled}")));
    }
    let cache = SchemeCache::new(&session);
    let refs: Vec<&GroupAssignment> = assignments.iter().collect();
    let mut server = ServerState::new(session.clone(), &refs)?;
    let mut client_time = Duration::ZERO;
    let mut server_time = Duration::ZERO;
    let mut clients_simulated = 0;
    let mut correct = 0;
    let mut dummy_rng = stream(cfg.seed, "dummy", 0);

    for (r, assignment) in assignments.iter().enumerate() {
        let membership = memberships_for(assignment);
        for (gi, members) in assignment.groups.iter().enumerate() {
            let reports = if gi < groups_sampled {
                clients_simulated += members.len();
                let (reports, elapsed, ok) =
                    run_group(cfg, &field, &session, &cache, &membership, members, r)?;
                client_time += elapsed;
                correct += usize::from(ok);
                reports
            } else {
                let dummy: Vec<_> = (0..cfg.len).map(|_| field.random(&mut dummy_rng)).collect();
                members
                    .iter()
                    .map(|&c| Message {
                        kind: MessageKind::GroupSumReport,
                        sender: c,
                        receiver: Party::Server,
                        round: r,
                        payload: dummy.clone(),
                    })
                    .collect()
            };
            let start = Instant::now();
            for msg in &reports {
                server.receive(msg);
            }
            server_time += start.elapsed();
        }
    }
    let start = Instant::now();
    let outcome = server.finish();
    server_time += start.elapsed();
    let client_ms = client_time.as_secs_f64() * 1e3;
    Ok(BenchReport {
        n,
        len: cfg.len,
        g: cfg.params.g,
        t: cfg.params.t,
        k: cfg.params.k,
        m,
        malicious: cfg.params.malicious,
        groups_per_round,
        sampled_groups: groups_sampled,
        sampling_factor: groups_per_round as f64 / groups_sampled as f64,
        clients_simulated,
        client_ms,
        // every client takes part once per round
        client_ms_per_client: client_ms * m as f64 / clients_simulated as f64,
        server_ms: server_time.as_secs_f64() * 1e3,
        reports_received: (n * m) as u64,
        sampled_groups_correct: correct,
        server_output: matches!(outcome, ServerOutcome::Output(_)),
    })
}

/// One honest group's full exchange for a single round. Returns its
/// reports, the client compute time and whether the total was right.
fn run_group(
    cfg: &SimulationConfig,
    field: &PrimeField,
    session: &Arc<SessionConfig>,
    cache: &SchemeCache,
    membership: &[crate::protocol::Membership],
    members: &[ClientId],
    round: usize,
) -> Result<(Vec<Message>, Duration, bool)> {
    let m = cfg.params.m;
    let mut elapsed = Duration::ZERO;
    let mut expected = vec![FieldElement::ZERO; cfg.len];
    let mut clients = Vec::with_capacity(members.len());
    let mut slot = BTreeMap::new();
    for (i, &c) in members.iter().enumerate() {
        // only this round's membership matters; the rest are placeholders
        let ms = (0..m)
            .map(|r| {
                let mut mb = membership[c].clone();
                mb.round = r;
                mb
            })
            .collect();
        let input = client_inputs(cfg, field, c);
        let mut client = ClientState::new(c, session.clone(), input, ms)?;
        let start = Instant::now();
        client.split(&mut stream(cfg.seed, "split", c as u64))?;
        elapsed += start.elapsed();
        field.add_assign_slice(&mut expected, &client.shards().expect("split")[round]);
        slot.insert(c, i);
        clients.push(client);
    }
    let mut outbox = Vec::new();
    for (client, &c) in clients.iter_mut().zip(members) {
        let start = Instant::now();
        outbox.extend(client.group_agg_round1(round, cache, &mut stream(cfg.seed, "share", (c * m + round) as u64))?);
        elapsed += start.elapsed();
    }
    for msg in outbox.drain(..) {
        if let Party::Client(to) = msg.receiver {
            clients[slot[&to]].receive(msg);
        }
    }
    for client in clients.iter_mut() {
        let start = Instant::now();
        outbox.extend(client.group_agg_round2(round)?);
        elapsed += start.elapsed();
    }
    for msg in outbox.drain(..) {
        if let Party::Client(to) = msg.receiver {
            clients[slot[&to]].receive(msg);
        }
    }
    let mut reports = Vec::with_capacity(members.len());
    for client in clients.iter_mut() {
        let start = Instant::now();
        reports.extend(client.group_agg_round3(round, cache));
        elapsed += start.elapsed();
    }
    cache.clear_reconstructors();
    let ok = reports.len() == members.len() && reports.iter().all(|r| r.payload == expected);
    Ok((reports, elapsed, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64, g: usize, t: usize, k: usize, malicious: bool) -> ProtocolParams {
        ProtocolParams::manual(n, g, t, k, 2, malicious)
    }

    #[test]
    fn honest_run_matches_oracle() {
        let cfg = SimulationConfig::new(params(40, 6, 2, 3, true), 7, 11);
        let report = run_simulation(&cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Match);
        assert_eq!(report.covered.len(), 40);
        assert_eq!(report.client_aborts, 0);
    }

    #[test]
    fn deterministic_under_seed() {
        let mut cfg = SimulationConfig::new(params(30, 5, 2, 2, false), 4, 5);
        cfg.dropouts = DropoutModel { fraction: 0.1, timing: DropoutTiming::Mixed, explicit: None };
        cfg.corruption = Corruption::Fraction(0.2);
        cfg.adversary = Adversary::Observer;
        let a = run_simulation(&cfg).unwrap().without_timing();
        let b = run_simulation(&cfg).unwrap().without_timing();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        cfg.seed = 6;
        assert_ne!(run_simulation(&cfg).unwrap().without_timing(), a);
    }

    #[test]
    fn rejects_oversized_or_infeasible() {
        let cfg = SimulationConfig::new(params(2_000_000, 200, 10, 100, true), 1, 0);
        assert!(matches!(run_simulation(&cfg), Err(Error::Config(_))));
        let cfg = SimulationConfig::new(params(20, 4, 3, 3, true), 1, 0);
        assert!(matches!(run_simulation(&cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn after_share_dropouts_are_covered() {
        let mut cfg = SimulationConfig::new(params(40, 8, 2, 2, true), 3, 9);
        cfg.dropouts = DropoutModel { fraction: 0.0, timing: DropoutTiming::AfterShares, explicit: Some(vec![0, 13]) };
        let report = run_simulation(&cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Match);
        assert_eq!(report.covered.len(), 40);
        assert_eq!(report.dropped_after_shares, vec![0, 13]);

        cfg.dropouts.timing = DropoutTiming::BeforeShares;
        let report = run_simulation(&cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Match);
        assert_eq!(report.covered.len(), 38);
        assert!(!report.covered.contains(&13));
    }

    #[test]
    fn over_budget_dropouts_fail_a_group() {
        // a group of 5 needs t + k = 5 sums in malicious mode
        let mut cfg = SimulationConfig::new(params(20, 5, 2, 3, true), 2, 1);
        cfg.dropouts.explicit = Some(vec![7]);
        let report = run_simulation(&cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Unavailable);
        assert_eq!(report.failed_groups(), 2);
    }

    #[test]
    fn broadcast_mutation_aborts_in_malicious_mode() {
        let mut cfg = SimulationConfig::new(params(50, 10, 3, 4, true), 5, 3);
        cfg.corruption = Corruption::Fraction(0.2);
        cfg.adversary = Adversary::Mutator { rate: 0.5, kinds: vec![MessageKind::SumBroadcast] };
        let report = run_simulation(&cfg).unwrap();
        assert!(report.mutations_applied > 0);
        assert_eq!(report.verdict, Verdict::Abort);
    }

    #[test]
    fn counters_follow_closed_form() {
        let (n, g, k, len) = (24usize, 6usize, 3usize, 10usize);
        let cfg = SimulationConfig::new(params(n as u64, g, 2, k, false), len, 4);
        let report = run_simulation(&cfg).unwrap();
        let blocks = len.div_ceil(k) as u64;
        let share = 2 * g as u64 * blocks * 8;
        let broadcast = 2 * (g as u64 - 1) * blocks * 8;
        let reports = 2 * len as u64 * 8;
        let expected = share + broadcast + reports;
        assert_eq!(report.counters.uplink_bytes_min, expected);
        assert_eq!(report.counters.uplink_bytes_max, expected);
        let sum: u64 = report.counters.by_kind.values().map(|c| c.bytes).sum();
        assert_eq!(sum, report.counters.total_bytes);
        assert_eq!(report.counters.server_received_messages, 2 * n as u64);
    }

    #[test]
    fn ledger_flags_forced_exposure() {
        let p = params(30, 6, 2, 2, false);
        let perm: Vec<usize> = (0..30).collect();
        let mut cfg = SimulationConfig::new(p.clone(), 2, 8);
        cfg.permutation = Some(perm);
        cfg.adversary = Adversary::Observer;
        cfg.corruption = Corruption::Explicit(vec![0, 1]);
        let report = run_simulation(&cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Match);
        let verdict = verify_privacy_ledger(&report, &p);
        assert!(verdict.violations.is_empty());
        assert_eq!(verdict.exposed_groups, vec![(0, 0)]);
        assert!(!verdict.clean);

        cfg.corruption = Corruption::Explicit(vec![]);
        let report = run_simulation(&cfg).unwrap();
        assert!(verify_privacy_ledger(&report, &p).clean);
    }

    #[test]
    fn bench_full_sampling_is_correct() {
        let cfg = SimulationConfig::new(params(60, 10, 3, 4, true), 9, 2);
        let b = run_scaled_benchmark(&cfg, 6).unwrap();
        assert_eq!(b.sampled_groups_correct, 12);
        assert!(b.server_output);
        assert_eq!(b.reports_received, 120);
        let b = run_scaled_benchmark(&cfg, 1).unwrap();
        assert_eq!(b.sampling_factor, 6.0);
        assert!(run_scaled_benchmark(&cfg, 7).is_err());
    }

    #[test]
    fn input_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.txt");
        std::fs::write(&path, "1\n2\n\n3\n4\n").unwrap();
        assert_eq!(load_inputs(&path, 2, 2).unwrap(), vec![vec![1, 2], vec![3, 4]]);
        assert!(load_inputs(&path, 3, 2).is_err());
        std::fs::write(&path, "1\nx\n").unwrap();
        assert!(load_inputs(&path, 1, 2).is_err());
    }
}
