//! Client and server state machines for sharded group aggregation.
//!
//! Each client splits its input into `m` shards. Shard `r` is summed inside
//! the client's round-`r` group: members packed-share their shard to every
//! group member (themselves included), add up what they receive, broadcast
//! that sum to the group, reconstruct the group total, and report it to the
//! server. The server checks that all reports of a group agree, adds one
//! report per group to get each round's total, and recombines the `m`
//! round totals into the federation sum.
//!
//! All `m` rounds' share deliveries leave a client in one step, so a client
//! that drops after sending shares is counted in every round and one that
//! drops before is counted in none.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::groups::{ClientId, GroupAssignment};
use crate::params::ProtocolParams;
use crate::shamir::{block_count, PackedScheme, Reconstructor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    ShareDelivery,
    SumBroadcast,
    GroupSumReport,
    Abort,
}

impl std::str::FromStr for MessageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "share" | "share_delivery" => Ok(Self::ShareDelivery),
            "broadcast" | "sum_broadcast" => Ok(Self::SumBroadcast),
            "report" | "group_sum_report" => Ok(Self::GroupSumReport),
            "abort" => Ok(Self::Abort),
            other => Err(Error::Config(format!("unknown message kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Client(ClientId),
    Server,
}

pub const SERVER: Party = Party::Server;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: ClientId,
    pub receiver: Party,
    /// Shard round, `< m`.
    pub round: usize,
    pub payload: Vec<FieldElement>,
}

impl Message {
    pub fn byte_len(&self, field: &PrimeField) -> usize {
        self.payload.len() * field.element_bytes()
    }

    /// Trace line with the payload values dropped unless `reveal`.
    pub fn trace_record(&self, reveal: bool) -> TraceRecord {
        TraceRecord {
            kind: self.kind,
            sender: self.sender,
            receiver: self.receiver,
            round: self.round,
            payload_len: self.payload.len(),
            payload: reveal.then(|| self.payload.iter().map(|v| v.value()).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub kind: MessageKind,
    pub sender: ClientId,
    pub receiver: Party,
    pub round: usize,
    pub payload_len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<Vec<u64>>,
}

/// How a client's input is split into shards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShardScheme {
    /// `(m, m)` Shamir: shard `r` is `f(r + 1)` for a random degree-`m-1`
    /// polynomial with `f(0) = v`.
    #[default]
    Shamir,
    /// Uniform shards summing to `v`.
    Additive,
}

/// Configuration every party of one run agrees on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionConfig {
    pub field: PrimeField,
    pub threshold: usize,
    pub pack: usize,
    pub shards: usize,
    /// Input vector length.
    pub len: usize,
    pub malicious: bool,
    pub shard_scheme: ShardScheme,
}

impl SessionConfig {
    pub fn from_params(params: &ProtocolParams, field: PrimeField, len: usize) -> Self {
        Self {
            field,
            threshold: params.t,
            pack: params.k,
            shards: params.m,
            len,
            malicious: params.malicious,
            shard_scheme: ShardScheme::Shamir,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold == 0 || self.pack == 0 || self.len == 0 {
            return Err(Error::Config("threshold, pack width and vector length must be positive".into()));
        }
        if self.shards < 2 {
            return Err(Error::Config(format!("need at least 2 shards, got {}", self.shards)));
        }
        if self.shard_scheme == ShardScheme::Shamir && self.shards as u64 >= self.field.modulus() {
            return Err(Error::Config(format!(
                "{} Shamir shards need a field larger than {}",
                self.shards,
                self.field.modulus()
            )));
        }
        Ok(())
    }

    /// Packed blocks per shard vector.
    pub fn blocks(&self) -> usize {
        block_count(self.len, self.pack)
    }

    /// Broadcast sums a group needs to reconstruct.
    pub fn required_shares(&self) -> usize {
        crate::params::required_shares(self.threshold, self.pack, self.malicious)
    }
}

/// Splits `v` element-wise into `m` shards.
pub fn client_shard_split<R: Rng + ?Sized>(
    field: &PrimeField,
    v: &[FieldElement],
    m: usize,
    scheme: ShardScheme,
    rng: &mut R,
) -> Result<Vec<Vec<FieldElement>>> {
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 shards, got {m}")));
    }
    let mut shards = vec![Vec::with_capacity(v.len()); m];
    match scheme {
        ShardScheme::Shamir => {
            if m as u64 >= field.modulus() {
                return Err(Error::Config(format!("{m} Shamir shards need a field larger than {}", field.modulus())));
            }
            let xs: Vec<_> = (1..=m as u64).map(|x| field.element(x)).collect();
            let mut coeffs = vec![FieldElement::ZERO; m - 1];
            for &value in v {
                for c in coeffs.iter_mut() {
                    *c = field.random(rng);
                }
                for (shard, &x) in shards.iter_mut().zip(&xs) {
                    // Horner on value + c1 x + ... + c_{m-1} x^{m-1}
                    let mut acc = FieldElement::ZERO;
                    for &c in coeffs.iter().rev() {
                        acc = field.add(field.mul(acc, x), c);
                    }
                    shard.push(field.add(field.mul(acc, x), value));
                }
            }
        }
        ShardScheme::Additive => {
            for &value in v {
                let mut rest = value;
                for shard in shards.iter_mut().take(m - 1) {
                    let r = field.random(rng);
                    rest = field.sub(rest, r);
                    shard.push(r);
                }
                shards[m - 1].push(rest);
            }
        }
    }
    Ok(shards)
}

/// Inverse of [`client_shard_split`]; linear, so it also recombines
/// per-round totals into the total of the inputs.
pub fn reconstruct_shards(
    field: &PrimeField,
    scheme: ShardScheme,
    shards: &[Vec<FieldElement>],
) -> Result<Vec<FieldElement>> {
    let m = shards.len();
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 shards, got {m}")));
    }
    let len = shards[0].len();
    if shards.iter().any(|s| s.len() != len) {
        return Err(Error::Config("shard lengths differ".into()));
    }
    let weights = match scheme {
        ShardScheme::Additive => vec![FieldElement::ONE; m],
        ShardScheme::Shamir => {
            if m as u64 >= field.modulus() {
                return Err(Error::Config(format!("{m} Shamir shards need a field larger than {}", field.modulus())));
            }
            let xs: Vec<_> = (1..=m as u64).map(|x| field.element(x)).collect();
            crate::shamir::LagrangeBasis::new(*field, xs)?.coefficients_at(FieldElement::ZERO)
        }
    };
    Ok((0..len).map(|i| field.sum(shards.iter().zip(&weights).map(|(s, &w)| field.mul(w, s[i])))).collect())
}

/// A client's place in one round's grouping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Membership {
    pub round: usize,
    pub group: usize,
    pub members: Arc<[ClientId]>,
    /// Index into `members`; the share point is `position + 1`.
    pub position: usize,
}

/// Memberships of every client for one round's assignment, indexed by id.
pub fn memberships_for(assignment: &GroupAssignment) -> Vec<Membership> {
    let mut out: Vec<Option<Membership>> = vec![None; assignment.n];
    for (group, members) in assignment.groups.iter().enumerate() {
        let shared: Arc<[ClientId]> = members.clone().into();
        for (position, &c) in members.iter().enumerate() {
            out[c] = Some(Membership { round: assignment.round, group, members: shared.clone(), position });
        }
    }
    out.into_iter().map(|m| m.expect("assignment is a partition")).collect()
}

type ReconstructorKey = (usize, bool, Vec<usize>);

/// Shared packed-sharing schemes (per group size) and reconstruction
/// coefficients (per set of responding positions).
#[derive(Debug)]
pub struct SchemeCache {
    field: PrimeField,
    threshold: usize,
    pack: usize,
    schemes: Mutex<HashMap<usize, Arc<PackedScheme>>>,
    reconstructors: Mutex<HashMap<ReconstructorKey, Arc<Reconstructor>>>,
}

impl SchemeCache {
    pub fn new(cfg: &SessionConfig) -> Self {
        Self {
            field: cfg.field,
            threshold: cfg.threshold,
            pack: cfg.pack,
            schemes: Mutex::default(),
            reconstructors: Mutex::default(),
        }
    }

    pub fn scheme(&self, group_size: usize) -> Result<Arc<PackedScheme>> {
        let mut schemes = self.schemes.lock().expect("cache lock");
        if let Some(s) = schemes.get(&group_size) {
            return Ok(s.clone());
        }
        let s = Arc::new(PackedScheme::new(self.field, self.threshold, group_size, self.pack)?);
        schemes.insert(group_size, s.clone());
        Ok(s)
    }

    pub fn reconstructor(&self, group_size: usize, positions: &[usize], verified: bool) -> Result<Arc<Reconstructor>> {
        let key = (group_size, verified, positions.to_vec());
        if let Some(r) = self.reconstructors.lock().expect("cache lock").get(&key) {
            return Ok(r.clone());
        }
        let scheme = self.scheme(group_size)?;
        let points: Vec<_> = positions.iter().map(|&p| scheme.share_point(p)).collect();
        let r = Arc::new(scheme.reconstructor(&points, verified)?);
        self.reconstructors.lock().expect("cache lock").insert(key, r.clone());
        Ok(r)
    }

    /// Drops cached reconstruction coefficients; schemes are kept.
    pub fn clear_reconstructors(&self) {
        self.reconstructors.lock().expect("cache lock").clear();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    SharesSent,
    Broadcast,
    Reported,
    /// Too few shares or sums arrived to reconstruct.
    Failed,
    Aborted,
}

#[derive(Debug)]
struct RoundState {
    membership: Membership,
    phase: Phase,
    shares: Vec<Option<Vec<FieldElement>>>,
    sums: Vec<Option<Vec<FieldElement>>>,
    group_sum: Option<Vec<FieldElement>>,
}

impl RoundState {
    fn release(&mut self) {
        self.shares = Vec::new();
        self.sums = Vec::new();
    }
}

/// One client's protocol state across all shard rounds.
#[derive(Debug)]
pub struct ClientState {
    id: ClientId,
    cfg: Arc<SessionConfig>,
    input: Vec<FieldElement>,
    shards: Option<Vec<Vec<FieldElement>>>,
    rounds: Vec<RoundState>,
    abort: Option<String>,
    abort_sent: bool,
}

impl ClientState {
    pub fn new(
        id: ClientId,
        cfg: Arc<SessionConfig>,
        input: Vec<FieldElement>,
        memberships: Vec<Membership>,
    ) -> Result<Self> {
        if input.len() != cfg.len {
            return Err(Error::Config(format!("input has length {}, expected {}", input.len(), cfg.len)));
        }
        if memberships.len() != cfg.shards {
            return Err(Error::Config(format!("{} memberships for {} shards", memberships.len(), cfg.shards)));
        }
        let mut rounds = Vec::with_capacity(memberships.len());
        for (r, membership) in memberships.into_iter().enumerate() {
            if membership.round != r || membership.members.get(membership.position) != Some(&id) {
                return Err(Error::Config(format!("client {id} has an inconsistent round-{r} membership")));
            }
            let size = membership.members.len();
            rounds.push(RoundState {
                membership,
                phase: Phase::Idle,
                shares: vec![None; size],
                sums: vec![None; size],
                group_sum: None,
            });
        }
        Ok(Self { id, cfg, input, shards: None, rounds, abort: None, abort_sent: false })
    }

    pub fn id(&self) -> ClientId {
        self.id
    }

    pub fn input(&self) -> &[FieldElement] {
        &self.input
    }

    pub fn shards(&self) -> Option<&[Vec<FieldElement>]> {
        self.shards.as_deref()
    }

    pub fn membership(&self, round: usize) -> &Membership {
        &self.rounds[round].membership
    }

    pub fn phase(&self, round: usize) -> Phase {
        if self.abort.is_some() {
            Phase::Aborted
        } else {
            self.rounds[round].phase
        }
    }

    pub fn is_aborted(&self) -> bool {
        self.abort.is_some()
    }

    pub fn abort_reason(&self) -> Option<&str> {
        self.abort.as_deref()
    }

    /// Reconstructed group total of `round`, once available.
    pub fn group_sum(&self, round: usize) -> Option<&[FieldElement]> {
        self.rounds[round].group_sum.as_deref()
    }

    fn fail(&mut self, reason: String) {
        if self.abort.is_none() {
            self.abort = Some(reason);
        }
    }

    /// Splits the input into the `m` shards.
    pub fn split<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.shards.is_some() {
            return Err(Error::Protocol(format!("client {} already split its input", self.id)));
        }
        let cfg = &self.cfg;
        self.shards = Some(client_shard_split(&cfg.field, &self.input, cfg.shards, cfg.shard_scheme, rng)?);
        Ok(())
    }

    /// Packed-shares shard `round` to every group member, self included.
    pub fn group_agg_round1<R: Rng + ?Sized>(
        &mut self,
        round: usize,
        cache: &SchemeCache,
        rng: &mut R,
    ) -> Result<Vec<Message>> {
        let shard = match &self.shards {
            Some(s) => &s[round],
            None => return Err(Error::Protocol(format!("client {} has not split its input", self.id))),
        };
        let state = &self.rounds[round];
        if state.phase != Phase::Idle {
            return Err(Error::Protocol(format!("client {} already shared round {round}", self.id)));
        }
        let members = state.membership.members.clone();
        if members.len() < self.cfg.required_shares() {
            return Err(Error::Infeasible(format!(
                "group of {} cannot reach the {} shares reconstruction needs",
                members.len(),
                self.cfg.required_shares()
            )));
        }
        let shared = cache.scheme(members.len())?.share_vector(shard, rng)?;
        self.rounds[round].phase = Phase::SharesSent;
        Ok(members
            .iter()
            .zip(shared.shares)
            .map(|(&to, share)| Message {
                kind: MessageKind::ShareDelivery,
                sender: self.id,
                receiver: Party::Client(to),
                round,
                payload: share.values,
            })
            .collect())
    }

    /// Accepts one incoming message. Anything ill-formed or out of phase
    /// moves the client into the aborted state; it never panics.
    pub fn receive(&mut self, msg: Message) {
        if self.abort.is_some() {
            return;
        }
        if let Err(reason) = self.accept(msg) {
            self.fail(reason);
        }
    }

    fn accept(&mut self, msg: Message) -> std::result::Result<(), String> {
        if msg.receiver != Party::Client(self.id) {
            return Err(format!("message for {:?} delivered to client {}", msg.receiver, self.id));
        }
        if msg.round >= self.rounds.len() {
            return Err(format!("message names round {} of {}", msg.round, self.rounds.len()));
        }
        let blocks = self.cfg.blocks();
        let id = self.id;
        let state = &mut self.rounds[msg.round];
        let Some(pos) = state.membership.members.iter().position(|&c| c == msg.sender) else {
            return Err(format!("client {} is not in round-{} group of {id}", msg.sender, msg.round));
        };
        if msg.payload.len() != blocks {
            return Err(format!("payload of {} elements, expected {blocks}", msg.payload.len()));
        }
        match msg.kind {
            MessageKind::ShareDelivery => {
                if !matches!(state.phase, Phase::Idle | Phase::SharesSent) {
                    return Err(format!("share from {} arrived after round {} summed", msg.sender, msg.round));
                }
                if state.shares[pos].is_some() {
                    return Err(format!("duplicate share from {}", msg.sender));
                }
                state.shares[pos] = Some(msg.payload);
            }
            MessageKind::SumBroadcast => {
                if pos == state.membership.position {
                    return Err("client received its own broadcast".into());
                }
                if !matches!(state.phase, Phase::SharesSent | Phase::Broadcast | Phase::Failed) {
                    return Err(format!("broadcast from {} arrived out of phase", msg.sender));
                }
                if state.sums[pos].is_some() {
                    return Err(format!("duplicate broadcast from {}", msg.sender));
                }
                if state.phase != Phase::Failed {
                    state.sums[pos] = Some(msg.payload);
                }
            }
            MessageKind::GroupSumReport | MessageKind::Abort => {
                return Err(format!("client received a {:?} message", msg.kind));
            }
        }
        Ok(())
    }

    /// Sums the received shares and broadcasts the sum to the other members.
    /// Too few shares marks the group failed and sends nothing.
    pub fn group_agg_round2(&mut self, round: usize) -> Result<Vec<Message>> {
        if self.abort.is_some() {
            return Ok(Vec::new());
        }
        let required = self.cfg.required_shares();
        let field = self.cfg.field;
        let blocks = self.cfg.blocks();
        let state = &mut self.rounds[round];
        if state.phase != Phase::SharesSent {
            return Err(Error::Protocol(format!("client {} cannot sum round {round} in phase {:?}", self.id, state.phase)));
        }
        let received = state.shares.iter().flatten().count();
        if received < required {
            state.phase = Phase::Failed;
            state.release();
            return Ok(Vec::new());
        }
        let mut sum = vec![FieldElement::ZERO; blocks];
        for share in state.shares.iter().flatten() {
            field.add_assign_slice(&mut sum, share);
        }
        state.shares = Vec::new();
        let me = state.membership.position;
        state.sums[me] = Some(sum.clone());
        state.phase = Phase::Broadcast;
        Ok(state
            .membership
            .members
            .iter()
            .enumerate()
            .filter(|&(p, _)| p != me)
            .map(|(_, &to)| Message {
                kind: MessageKind::SumBroadcast,
                sender: self.id,
                receiver: Party::Client(to),
                round,
                payload: sum.clone(),
            })
            .collect())
    }

    /// Reconstructs the group total and reports it to the server; an
    /// aborted client instead sends a single `Abort`, and a failed group
    /// sends nothing.
    pub fn group_agg_round3(&mut self, round: usize, cache: &SchemeCache) -> Vec<Message> {
        if self.abort.is_none() {
            if let Err(reason) = self.reconstruct_round(round, cache) {
                self.fail(reason);
            }
        }
        if self.abort.is_some() {
            if self.abort_sent {
                return Vec::new();
            }
            self.abort_sent = true;
            return vec![Message {
                kind: MessageKind::Abort,
                sender: self.id,
                receiver: SERVER,
                round,
                payload: Vec::new(),
            }];
        }
        match &self.rounds[round].group_sum {
            Some(sum) if self.rounds[round].phase == Phase::Reported => vec![Message {
                kind: MessageKind::GroupSumReport,
                sender: self.id,
                receiver: SERVER,
                round,
                payload: sum.clone(),
            }],
            _ => Vec::new(),
        }
    }

    fn reconstruct_round(&mut self, round: usize, cache: &SchemeCache) -> std::result::Result<(), String> {
        let cfg = self.cfg.clone();
        let state = &mut self.rounds[round];
        match state.phase {
            Phase::Broadcast => {}
            Phase::Failed => return Ok(()),
            other => return Err(format!("cannot reconstruct round {round} in phase {other:?}")),
        }
        let mut positions: Vec<usize> = (0..state.sums.len()).filter(|&p| state.sums[p].is_some()).collect();
        let required = cfg.required_shares();
        if positions.len() < required {
            state.phase = Phase::Failed;
            state.release();
            return Ok(());
        }
        if !cfg.malicious {
            positions.truncate(required);
        }
        let size = state.membership.members.len();
        let rec = cache.reconstructor(size, &positions, cfg.malicious).map_err(|e| e.to_string())?;
        let mut total = Vec::with_capacity(cfg.blocks() * cfg.pack);
        let mut column = Vec::with_capacity(positions.len());
        for b in 0..cfg.blocks() {
            column.clear();
            column.extend(positions.iter().map(|&p| state.sums[p].as_ref().expect("present")[b]));
            match rec.secrets(&column) {
                Ok(secrets) => total.extend(secrets),
                Err(Error::TamperDetected) => {
                    state.release();
                    return Err(format!("inconsistent broadcast sums in round {round}"));
                }
                Err(e) => return Err(e.to_string()),
            }
        }
        total.truncate(cfg.len);
        state.group_sum = Some(total);
        state.phase = Phase::Reported;
        state.release();
        Ok(())
    }
}

/// Agreement check over the reports of one group.
#[derive(Clone, Debug, Default)]
struct GroupTally {
    value: Option<Vec<FieldElement>>,
    reports: usize,
}

impl GroupTally {
    fn add(&mut self, report: &[FieldElement]) -> std::result::Result<(), ()> {
        self.reports += 1;
        match &self.value {
            None => {
                self.value = Some(report.to_vec());
                Ok(())
            }
            Some(v) if v.as_slice() == report => Ok(()),
            Some(_) => Err(()),
        }
    }
}

/// Result of collecting one round's group reports.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundCollection {
    Sum(Vec<FieldElement>),
    /// Groups from which no report arrived.
    Incomplete(Vec<usize>),
}

/// Sums one round: every group's reports must agree, and each group adds
/// its common value once. A disagreement is an abort.
pub fn server_subagg_collect(
    field: &PrimeField,
    len: usize,
    reports_by_group: &[Vec<Vec<FieldElement>>],
) -> Result<RoundCollection> {
    let mut sum = vec![FieldElement::ZERO; len];
    let mut missing = Vec::new();
    for (group, reports) in reports_by_group.iter().enumerate() {
        let mut tally = GroupTally::default();
        for report in reports {
            if report.len() != len {
                return Err(Error::Protocol(format!("group {group} report has {} elements, expected {len}", report.len())));
            }
            tally.add(report).map_err(|_| Error::Protocol(format!("group {group} reports disagree")))?;
        }
        match tally.value {
            Some(v) => field.add_assign_slice(&mut sum, &v),
            None => missing.push(group),
        }
    }
    Ok(if missing.is_empty() { RoundCollection::Sum(sum) } else { RoundCollection::Incomplete(missing) })
}

/// Recombines the `m` round totals into the federation total.
pub fn server_reconstruct_output(
    field: &PrimeField,
    scheme: ShardScheme,
    round_sums: &[Option<Vec<FieldElement>>],
) -> Result<Vec<FieldElement>> {
    let sums: Vec<_> = round_sums
        .iter()
        .enumerate()
        .map(|(r, s)| s.clone().ok_or_else(|| Error::Protocol(format!("round {r} total is missing"))))
        .collect::<Result<_>>()?;
    reconstruct_shards(field, scheme, &sums)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerOutcome {
    Output(Vec<FieldElement>),
    Aborted(String),
    /// Rounds and groups with no report; no output without them.
    Unavailable(Vec<(usize, usize)>),
}

/// Server side: streams reports in, checks agreement per group on the fly.
#[derive(Debug)]
pub struct ServerState {
    cfg: Arc<SessionConfig>,
    group_of: Vec<Vec<usize>>,
    reported: Vec<Vec<bool>>,
    tallies: Vec<Vec<GroupTally>>,
    abort: Option<String>,
}

impl ServerState {
    pub fn new(cfg: Arc<SessionConfig>, assignments: &[&GroupAssignment]) -> Result<Self> {
        if assignments.len() != cfg.shards {
            return Err(Error::Config(format!("{} assignments for {} shards", assignments.len(), cfg.shards)));
        }
        let n = assignments[0].n;
        let mut group_of = Vec::with_capacity(assignments.len());
        let mut tallies = Vec::with_capacity(assignments.len());
        for (r, a) in assignments.iter().enumerate() {
            if a.round != r || a.n != n {
                return Err(Error::Config(format!("assignment {r} does not match the federation")));
            }
            group_of.push(a.membership_index().into_iter().map(|(g, _)| g).collect());
            tallies.push(vec![GroupTally::default(); a.group_count()]);
        }
        Ok(Self { cfg, group_of, reported: vec![vec![false; n]; assignments.len()], tallies, abort: None })
    }

    pub fn is_aborted(&self) -> bool {
        self.abort.is_some()
    }

    pub fn receive(&mut self, msg: &Message) {
        if self.abort.is_some() {
            return;
        }
        if let Err(reason) = self.accept(msg) {
            self.abort = Some(reason);
        }
    }

    fn accept(&mut self, msg: &Message) -> std::result::Result<(), String> {
        if msg.receiver != SERVER {
            return Err(format!("server received a message addressed to {:?}", msg.receiver));
        }
        if msg.round >= self.cfg.shards || msg.sender >= self.group_of[0].len() {
            return Err(format!("message from {} names round {}", msg.sender, msg.round));
        }
        match msg.kind {
            MessageKind::Abort => Err(format!("client {} aborted in round {}", msg.sender, msg.round)),
            MessageKind::GroupSumReport => {
                if msg.payload.len() != self.cfg.len {
                    return Err(format!("report of {} elements, expected {}", msg.payload.len(), self.cfg.len));
                }
                let seen = &mut self.reported[msg.round][msg.sender];
                if *seen {
                    return Err(format!("duplicate report from {}", msg.sender));
                }
                *seen = true;
                let group = self.group_of[msg.round][msg.sender];
                self.tallies[msg.round][group]
                    .add(&msg.payload)
                    .map_err(|_| format!("round {} group {group} reports disagree", msg.round))
            }
            other => Err(format!("server received a {other:?} message")),
        }
    }

    /// Reports received for `(round, group)`.
    pub fn report_count(&self, round: usize, group: usize) -> usize {
        self.tallies[round][group].reports
    }

    pub fn finish(&self) -> ServerOutcome {
        if let Some(reason) = &self.abort {
            return ServerOutcome::Aborted(reason.clone());
        }
        let field = self.cfg.field;
        let mut missing = Vec::new();
        let mut round_sums = Vec::with_capacity(self.tallies.len());
        for (r, groups) in self.tallies.iter().enumerate() {
            let mut sum = vec![FieldElement::ZERO; self.cfg.len];
            for (g, tally) in groups.iter().enumerate() {
                match &tally.value {
                    Some(v) => field.add_assign_slice(&mut sum, v),
                    None => missing.push((r, g)),
                }
            }
            round_sums.push(Some(sum));
        }
        if !missing.is_empty() {
            return ServerOutcome::Unavailable(missing);
        }
        match server_reconstruct_output(&field, self.cfg.shard_scheme, &round_sums) {
            Ok(v) => ServerOutcome::Output(v),
            Err(e) => ServerOutcome::Aborted(e.to_string()),
        }
    }
}
