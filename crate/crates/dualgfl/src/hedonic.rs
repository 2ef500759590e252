//! Lower-level coalition formation: perfect partitions, preference
//! refinement, the Pareto-optimal partitioning loop, and brute-force
//! dominance oracles for verification.
//!
//! The refinement loop starts from fully relaxed profiles (everything
//! indifferent), promotes one indifference at a time toward each client's
//! true profile, and keeps the last profile for which a perfect partition
//! exists. The returned partition is perfect for the final relaxed profile
//! and Pareto-optimal for the true one.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::preference::PreferenceProfile;
use crate::rng::SimRng;
use crate::topology::{ClientId, ServerId};

/// Client handle for the matching step: servers rank clients by data size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientWeight {
    pub id: ClientId,
    pub data: f64,
}

/// Disjoint server-anchored coalitions covering all clients. A server may sit
/// idle (empty client set); every client belongs to exactly one coalition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    by_server: BTreeMap<ServerId, BTreeSet<ClientId>>,
}

impl Partition {
    /// Empty partition over the given servers.
    pub fn empty(servers: &[ServerId]) -> Self {
        Self {
            by_server: servers.iter().map(|&s| (s, BTreeSet::new())).collect(),
        }
    }

    pub fn assign(&mut self, client: ClientId, server: ServerId) {
        self.by_server.entry(server).or_default().insert(client);
    }

    pub fn members(&self, server: ServerId) -> Option<&BTreeSet<ClientId>> {
        self.by_server.get(&server)
    }

    pub fn server_of(&self, client: ClientId) -> Option<ServerId> {
        self.by_server
            .iter()
            .find(|(_, members)| members.contains(&client))
            .map(|(&s, _)| s)
    }

    pub fn coalitions(&self) -> impl Iterator<Item = (ServerId, &BTreeSet<ClientId>)> {
        self.by_server.iter().map(|(&s, m)| (s, m))
    }

    pub fn n_servers(&self) -> usize {
        self.by_server.len()
    }

    pub fn n_assigned(&self) -> usize {
        self.by_server.values().map(|m| m.len()).sum()
    }

    pub fn max_coalition_size(&self) -> usize {
        self.by_server.values().map(|m| m.len()).max().unwrap_or(0)
    }

    /// Disjoint cover of exactly `clients`, every coalition within capacity.
    pub fn validate(&self, clients: &[ClientId], capacity: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (server, members) in &self.by_server {
            if members.len() > capacity {
                return Err(Error::InvalidData(format!(
                    "coalition {server} exceeds capacity {capacity}"
                )));
            }
            for &c in members {
                if !seen.insert(c) {
                    return Err(Error::InvalidData(format!(
                        "client {c} appears in two coalitions"
                    )));
                }
            }
        }
        let expected: BTreeSet<ClientId> = clients.iter().copied().collect();
        if seen != expected {
            return Err(Error::InvalidData(
                "partition does not cover the client set exactly".into(),
            ));
        }
        Ok(())
    }
}

// Fixture format: JSON map of server id -> sorted client id list.
impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<String, Vec<usize>> = self
            .by_server
            .iter()
            .map(|(s, members)| {
                (
                    s.0.to_string(),
                    members.iter().map(|c| c.0).collect::<Vec<_>>(),
                )
            })
            .collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw: BTreeMap<String, Vec<usize>> = BTreeMap::deserialize(deserializer)?;
        let mut by_server = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for (key, members) in raw {
            let server = ServerId(key.parse::<usize>().map_err(|_| {
                D::Error::custom(format!("server key {key:?} is not an integer"))
            })?);
            let mut set = BTreeSet::new();
            for c in members {
                if !seen.insert(c) {
                    return Err(D::Error::custom(format!(
                        "client {c} appears in two coalitions"
                    )));
                }
                set.insert(ClientId(c));
            }
            if by_server.insert(server, set).is_some() {
                return Err(D::Error::custom(format!("duplicate server key {server}")));
            }
        }
        Ok(Partition { by_server })
    }
}

/// Find a partition assigning every client to a coalition inside its top
/// indifference class, respecting `capacity`. Returns `None` when no such
/// allocation exists (absence is a value, not an error).
///
/// The first pass mirrors the matching heuristic of the round loop: iterate
/// servers in shuffled order, each greedily taking top-choice clients in
/// descending data order (shuffle breaking ties). Leftover clients are then
/// placed by augmenting paths, so the decision is exact: `None` means no
/// perfect allocation exists at all.
pub fn perfect_partition(
    clients: &[ClientWeight],
    servers: &[ServerId],
    profiles: &[PreferenceProfile],
    capacity: usize,
    rng: &mut SimRng,
) -> Option<Partition> {
    assert_eq!(clients.len(), profiles.len(), "one profile per client");

    let server_index: BTreeMap<ServerId, usize> =
        servers.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    // top_choices[i] = server indices in client i's top indifference class.
    let top_choices: Vec<Vec<usize>> = profiles
        .iter()
        .map(|p| {
            p.top_class()
                .iter()
                .filter_map(|s| server_index.get(s).copied())
                .collect()
        })
        .collect();

    let mut assigned: Vec<Option<usize>> = vec![None; clients.len()];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); servers.len()];

    // Greedy pass over shuffled server order.
    let mut server_order: Vec<usize> = (0..servers.len()).collect();
    shuffle(&mut server_order, rng);
    let mut base_order: Vec<usize> = (0..clients.len()).collect();
    for &s in &server_order {
        // Preference list: data size descending, shuffle breaking ties.
        shuffle(&mut base_order, rng);
        let mut list = base_order.clone();
        list.sort_by(|&a, &b| {
            clients[b]
                .data
                .partial_cmp(&clients[a].data)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for &i in &list {
            if members[s].len() >= capacity {
                break;
            }
            if assigned[i].is_none() && top_choices[i].contains(&s) {
                assigned[i] = Some(s);
                members[s].push(i);
            }
        }
    }

    // Augmentation pass for anyone the greedy sweep missed.
    let unassigned: Vec<usize> = (0..clients.len()).filter(|&i| assigned[i].is_none()).collect();
    for i in unassigned {
        let mut visited = vec![false; servers.len()];
        if !augment(
            i,
            &top_choices,
            capacity,
            &mut assigned,
            &mut members,
            &mut visited,
        ) {
            return None;
        }
    }

    let mut partition = Partition::empty(servers);
    for (i, slot) in assigned.iter().enumerate() {
        let s = slot.expect("all clients assigned");
        partition.assign(clients[i].id, servers[s]);
    }
    Some(partition)
}

/// DFS augmenting step: place client `i`, evicting and re-placing occupants
/// when every top-choice server is full.
fn augment(
    i: usize,
    top_choices: &[Vec<usize>],
    capacity: usize,
    assigned: &mut Vec<Option<usize>>,
    members: &mut Vec<Vec<usize>>,
    visited: &mut Vec<bool>,
) -> bool {
    for &s in &top_choices[i] {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        if members[s].len() < capacity {
            assigned[i] = Some(s);
            members[s].push(i);
            return true;
        }
        for slot in 0..members[s].len() {
            let occupant = members[s][slot];
            if augment(occupant, top_choices, capacity, assigned, members, visited) {
                members[s][slot] = i;
                assigned[i] = Some(s);
                return true;
            }
        }
    }
    false
}

fn shuffle(items: &mut [usize], rng: &mut SimRng) {
    use rand::seq::SliceRandom;
    items.shuffle(rng);
}

/// Promote exactly one indifference of `bottom` (one that is strict in `top`)
/// to a strict preference, picking the lowest-ranked candidate indifference
/// first. Errors when `bottom` already equals `top`.
pub fn refine(bottom: &PreferenceProfile, top: &PreferenceProfile) -> Result<PreferenceProfile> {
    let top_rank: BTreeMap<ServerId, usize> = top
        .classes()
        .iter()
        .enumerate()
        .flat_map(|(r, class)| class.iter().map(move |&s| (s, r)))
        .collect();

    // `bottom <= top` means each bottom class merges consecutive top classes.
    let mut next_expected = 0usize;
    for class in bottom.classes() {
        let mut ranks: Vec<usize> = class
            .iter()
            .map(|s| {
                top_rank.get(s).copied().ok_or_else(|| Error::InvalidProfile {
                    client: bottom.owner,
                    reason: format!("candidate {s} missing from the strict profile"),
                })
            })
            .collect::<Result<_>>()?;
        ranks.sort_unstable();
        ranks.dedup();
        if ranks.first() != Some(&next_expected)
            || ranks.windows(2).any(|w| w[1] != w[0] + 1)
        {
            return Err(Error::InvalidProfile {
                client: bottom.owner,
                reason: "relaxed profile is not a coarsening of the strict one".into(),
            });
        }
        next_expected = ranks.last().unwrap() + 1;
    }
    if next_expected != top.classes().len() {
        return Err(Error::InvalidProfile {
            client: bottom.owner,
            reason: "profiles rank different candidate sets".into(),
        });
    }

    // Deepest bottom class that still merges several top classes.
    let split_at = bottom
        .classes()
        .iter()
        .rposition(|class| {
            let ranks: BTreeSet<usize> = class.iter().map(|s| top_rank[s]).collect();
            ranks.len() > 1
        })
        .ok_or(Error::RefineExhausted)?;

    let mut classes: Vec<Vec<ServerId>> = Vec::with_capacity(bottom.classes().len() + 1);
    for (idx, class) in bottom.classes().iter().enumerate() {
        if idx != split_at {
            classes.push(class.clone());
            continue;
        }
        let worst_rank = class.iter().map(|s| top_rank[s]).max().unwrap();
        let (tail, head): (Vec<ServerId>, Vec<ServerId>) = class
            .iter()
            .copied()
            .partition(|s| top_rank[s] == worst_rank);
        classes.push(head);
        classes.push(tail);
    }
    PreferenceProfile::from_classes(bottom.owner, classes)
}

/// Count of strictly ordered candidate pairs in a weak order; the refinement
/// loop can never run more iterations than this.
pub fn strict_pairs(profile: &PreferenceProfile) -> usize {
    let sizes: Vec<usize> = profile.classes().iter().map(|c| c.len()).collect();
    let mut pairs = 0;
    for i in 0..sizes.len() {
        for j in (i + 1)..sizes.len() {
            pairs += sizes[i] * sizes[j];
        }
    }
    pairs
}

/// Counters from one POP run, exposed for the termination-bound checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct PopStats {
    pub refinements: usize,
    pub perfect_calls: usize,
    pub rejected_refinements: usize,
}

/// Pareto-optimal partitioning: refine relaxed profiles client by client
/// (ascending id), keeping each refinement only if a perfect partition still
/// exists. Deterministic given the rng state. The iteration order determines
/// which Pareto-optimal partition is returned.
pub fn pop(
    clients: &[ClientWeight],
    servers: &[ServerId],
    profiles: &[PreferenceProfile],
    capacity: usize,
    rng: &mut SimRng,
) -> Result<Partition> {
    pop_with_stats(clients, servers, profiles, capacity, rng).map(|(p, _)| p)
}

pub fn pop_with_stats(
    clients: &[ClientWeight],
    servers: &[ServerId],
    profiles: &[PreferenceProfile],
    capacity: usize,
    rng: &mut SimRng,
) -> Result<(Partition, PopStats)> {
    if capacity * servers.len() < clients.len() {
        return Err(Error::InfeasibleInstance {
            clients: clients.len(),
            servers: servers.len(),
            capacity,
        });
    }
    if clients.len() != profiles.len() {
        return Err(Error::InvalidData(format!(
            "{} clients but {} profiles",
            clients.len(),
            profiles.len()
        )));
    }
    let mut sorted_servers: Vec<ServerId> = servers.to_vec();
    sorted_servers.sort();
    for (c, p) in clients.iter().zip(profiles) {
        if p.owner != c.id {
            return Err(Error::InvalidProfile {
                client: c.id,
                reason: format!("profile owner {} does not match", p.owner),
            });
        }
        if !p.covers(&sorted_servers) {
            return Err(Error::InvalidProfile {
                client: c.id,
                reason: "profile does not rank the server set exactly".into(),
            });
        }
    }

    let bound: usize = profiles.iter().map(strict_pairs).sum();
    let mut stats = PopStats::default();

    let mut tops: Vec<PreferenceProfile> = profiles.to_vec();
    let mut bottoms: Vec<PreferenceProfile> = clients
        .iter()
        .map(|c| PreferenceProfile::fully_relaxed(c.id, &sorted_servers))
        .collect();

    stats.perfect_calls += 1;
    let mut best = perfect_partition(clients, servers, &bottoms, capacity, rng)
        .expect("fully relaxed profiles with capacity*K >= N always admit a perfect partition");

    // Clients in ascending id order.
    let mut order: Vec<usize> = (0..clients.len()).collect();
    order.sort_by_key(|&i| clients[i].id);

    for idx in order {
        while bottoms[idx] != tops[idx] {
            let refined = refine(&bottoms[idx], &tops[idx])?;
            stats.refinements += 1;
            debug_assert!(
                stats.refinements <= bound,
                "refinement loop exceeded the strict-pair bound {bound}"
            );
            let previous = std::mem::replace(&mut bottoms[idx], refined);
            stats.perfect_calls += 1;
            match perfect_partition(clients, servers, &bottoms, capacity, rng) {
                Some(p) => {
                    best = p;
                }
                None => {
                    stats.rejected_refinements += 1;
                    bottoms[idx] = previous;
                    // Abandon the remaining refinements for this client: any
                    // finer profile restricts it further and must fail too.
                    tops[idx] = bottoms[idx].clone();
                }
            }
        }
    }

    Ok((best, stats))
}

/// True iff every client weakly prefers its coalition in `a` over `b` and at
/// least one strictly prefers it. Profiles are matched to clients by owner.
pub fn pareto_dominates(a: &Partition, b: &Partition, profiles: &[PreferenceProfile]) -> bool {
    let mut strict = false;
    for p in profiles {
        let ra = a
            .server_of(p.owner)
            .and_then(|s| p.rank_of(s))
            .expect("partition a covers every profiled client");
        let rb = b
            .server_of(p.owner)
            .and_then(|s| p.rank_of(s))
            .expect("partition b covers every profiled client");
        if ra > rb {
            return false;
        }
        if ra < rb {
            strict = true;
        }
    }
    strict
}

/// Enumeration guard for the brute-force oracle.
pub const BRUTEFORCE_MAX_CLIENTS: usize = 10;
pub const BRUTEFORCE_MAX_SERVERS: usize = 4;

/// Exhaustively check Pareto optimality of `p` against every
/// capacity-feasible partition of the instance. Guarded to small instances;
/// this is the verification oracle, not a production path.
pub fn is_pareto_optimal_bruteforce(
    p: &Partition,
    clients: &[ClientWeight],
    servers: &[ServerId],
    profiles: &[PreferenceProfile],
    capacity: usize,
) -> Result<bool> {
    let n = clients.len();
    let k = servers.len();
    if n > BRUTEFORCE_MAX_CLIENTS || k > BRUTEFORCE_MAX_SERVERS {
        return Err(Error::EnumerationGuard(format!(
            "instance {n} clients x {k} servers exceeds {BRUTEFORCE_MAX_CLIENTS} x {BRUTEFORCE_MAX_SERVERS}"
        )));
    }

    // Ranks of the candidate partition, per client index.
    let base_rank: Vec<usize> = clients
        .iter()
        .zip(profiles)
        .map(|(c, prof)| {
            let s = p.server_of(c.id).expect("partition covers client");
            prof.rank_of(s).expect("profile ranks assigned server")
        })
        .collect();

    let mut assignment = vec![0usize; n];
    loop {
        // Capacity filter.
        let mut counts = vec![0usize; k];
        let mut feasible = true;
        for &a in &assignment {
            counts[a] += 1;
            if counts[a] > capacity {
                feasible = false;
                break;
            }
        }
        if feasible {
            // Does this assignment Pareto-dominate p?
            let mut weakly_better = true;
            let mut strictly = false;
            for (i, prof) in profiles.iter().enumerate() {
                let r = prof
                    .rank_of(servers[assignment[i]])
                    .expect("profile ranks every server");
                if r > base_rank[i] {
                    weakly_better = false;
                    break;
                }
                if r < base_rank[i] {
                    strictly = true;
                }
            }
            if weakly_better && strictly {
                return Ok(false);
            }
        }

        // Next assignment in base-k counting order.
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(true);
            }
            assignment[pos] += 1;
            if assignment[pos] < k {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}
