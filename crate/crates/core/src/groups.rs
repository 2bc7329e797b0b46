//! Deterministic group assignment and the honest-party communication graph.
//!
//! All parties derive the same permutation from a published seed. The party
//! at permuted index `i` sits at base group `b = i / g` with in-group offset
//! `j = i % g`. Round 0 groups by `b`; round `r` sends it to group
//! `(b + r * j) mod G`, i.e. the `j`-th member of every group moves `j`
//! groups forward in the second round. For a fixed `j` this map is a
//! bijection on groups, so every round-`r` group keeps exactly `g` members.
//!
//! When `g` does not divide `n` the short tail is merged into the last
//! group, so group sizes lie in `[g, 2g)`.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type ClientId = usize;

/// Seeded Fisher-Yates shuffle of `0..n`.
pub fn derive_permutation(seed: &[u8], n: usize) -> Vec<ClientId> {
    let digest = Sha256::new().chain_update(b"shardagg/permutation").chain_update(seed).finalize();
    let mut rng = ChaCha20Rng::from_seed(digest.into());
    let mut perm: Vec<ClientId> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Number of groups per round for `n` parties and nominal size `g`.
pub fn group_count(n: usize, g: usize) -> usize {
    (n / g).max(1)
}

/// Group that permuted index `i` lands in during `round`.
fn locate(i: usize, n: usize, g: usize, round: usize) -> usize {
    let groups = group_count(n, g);
    let base = (i / g).min(groups - 1);
    let offset = i - base * g;
    (base + round * offset) % groups
}

/// One round's partition of the federation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub round: usize,
    pub n: usize,
    pub g: usize,
    /// Members of each group, ordered by permuted index. A member's share
    /// point is its position in this list plus one.
    pub groups: Vec<Vec<ClientId>>,
}

impl GroupAssignment {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// `(group, position)` for every client id.
    pub fn membership_index(&self) -> Vec<(usize, usize)> {
        let mut index = vec![(usize::MAX, usize::MAX); self.n];
        for (gi, members) in self.groups.iter().enumerate() {
            for (pos, &c) in members.iter().enumerate() {
                index[c] = (gi, pos);
            }
        }
        index
    }

    pub fn sizes(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for members in &self.groups {
            *hist.entry(members.len()).or_insert(0) += 1;
        }
        hist
    }

    /// Every id in `0..n` appears exactly once.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![false; self.n];
        for &c in self.groups.iter().flatten() {
            if c >= self.n || seen[c] {
                return false;
            }
            seen[c] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Assignment for shard round `round` (0-based).
pub fn assign_round(perm: &[ClientId], g: usize, round: usize) -> Result<GroupAssignment> {
    if g < 2 {
        return Err(Error::Config(format!("group size must be at least 2, got {g}")));
    }
    let n = perm.len();
    if n == 0 {
        return Err(Error::Config("empty federation".into()));
    }
    let mut groups = vec![Vec::with_capacity(g); group_count(n, g)];
    for (i, &client) in perm.iter().enumerate() {
        groups[locate(i, n, g, round)].push(client);
    }
    Ok(GroupAssignment { round, n, g, groups })
}

pub fn assign_round1(perm: &[ClientId], g: usize) -> Result<GroupAssignment> {
    assign_round(perm, g, 0)
}

pub fn assign_round2(perm: &[ClientId], g: usize) -> Result<GroupAssignment> {
    assign_round(perm, g, 1)
}

/// Group-size histogram of round `round` without materializing the
/// assignment; the same for every permutation.
pub fn round_size_histogram(n: usize, g: usize, round: usize) -> BTreeMap<usize, usize> {
    let groups = group_count(n, g);
    let mut hist = BTreeMap::new();
    if groups == 1 {
        hist.insert(n, 1);
        return hist;
    }
    let tail_start = groups * g;
    if tail_start == n {
        hist.insert(g, groups);
        return hist;
    }
    // only the merged tail (offsets g..) perturbs the otherwise uniform sizes
    let mut extra: BTreeMap<usize, usize> = BTreeMap::new();
    for i in tail_start..n {
        *extra.entry(locate(i, n, g, round)).or_insert(0) += 1;
    }
    let mut bumped = 0;
    for (_, e) in extra {
        *hist.entry(g + e).or_insert(0) += 1;
        bumped += 1;
    }
    if groups > bumped {
        *hist.entry(g).or_insert(0) += groups - bumped;
    }
    hist
}

/// Graph over honest parties with an edge between any two parties that
/// share a group in some round.
#[derive(Clone, Debug)]
pub struct HonestGraph {
    vertices: Vec<ClientId>,
    adjacency: Vec<Vec<usize>>,
}

impl HonestGraph {
    pub fn vertices(&self) -> &[ClientId] {
        &self.vertices
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as ordered `(low, high)` id pairs, sorted.
    pub fn edges(&self) -> Vec<(ClientId, ClientId)> {
        let mut out = Vec::new();
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            for &v in nbrs {
                if u < v {
                    let (a, b) = (self.vertices[u], self.vertices[v]);
                    out.push((a.min(b), a.max(b)));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self)
    }
}

/// Builds the honest graph from any number of rounds' assignments.
pub fn build_honest_graph(rounds: &[&GroupAssignment], honest: &[bool]) -> HonestGraph {
    let vertices: Vec<ClientId> = (0..honest.len()).filter(|&c| honest[c]).collect();
    let mut vindex = vec![usize::MAX; honest.len()];
    for (vi, &c) in vertices.iter().enumerate() {
        vindex[c] = vi;
    }
    let mut adjacency = vec![Vec::new(); vertices.len()];
    for assignment in rounds {
        for members in &assignment.groups {
            let hv: Vec<usize> = members.iter().filter(|&&c| honest[c]).map(|&c| vindex[c]).collect();
            for &u in &hv {
                adjacency[u].extend(hv.iter().copied().filter(|&v| v != u));
            }
        }
    }
    for nbrs in &mut adjacency {
        nbrs.sort_unstable();
        nbrs.dedup();
    }
    HonestGraph { vertices, adjacency }
}

/// True iff the graph has at most one connected component.
pub fn is_connected(graph: &HonestGraph) -> bool {
    let n = graph.vertices.len();
    if n <= 1 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &graph.adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    reached == n
}
