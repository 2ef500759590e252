//! Auction-aware preference profiles.
//!
//! Clients rank the K server-anchored coalition candidates by an
//! auction-aware value: the client's share of the coalition's EMA payoff
//! estimate minus its own training cost, with coalitions already visited this
//! round pinned to value 0. Candidates are evaluated against the previous
//! round's coalition composition (snapshots).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{ClientId, ServerId, Topology};

/// Two values within this relative tolerance fall into the same indifference
/// class. Exact float equality would make ties depend on summation order.
pub const TIE_REL_TOL: f64 = 1e-9;

/// Tie predicate used when grouping preference values.
pub fn values_tied(a: f64, b: f64) -> bool {
    if a == b {
        // Covers the -inf pair from infeasible links, where a - b is NaN.
        return true;
    }
    (a - b).abs() <= TIE_REL_TOL * 1.0_f64.max(a.abs()).max(b.abs())
}

/// EMA estimates of each coalition's realized payoff.
///
/// A coalition that wins round t updates to
/// `alpha * old + (1 - alpha) * realized`; losers keep their estimate
/// unchanged. Unknown coalitions start at the configured prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimator {
    estimates: BTreeMap<ServerId, f64>,
    ema_coefficient: f64,
    prior: f64,
}

impl PayoffEstimator {
    pub fn new(ema_coefficient: f64, prior: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ema_coefficient) {
            return Err(Error::InvalidConfig {
                key: "ema_coefficient".into(),
                reason: format!("must lie in [0, 1], got {ema_coefficient}"),
            });
        }
        Ok(Self {
            estimates: BTreeMap::new(),
            ema_coefficient,
            prior,
        })
    }

    /// Current estimate for a coalition, falling back to the prior.
    pub fn estimate(&self, coalition: ServerId) -> f64 {
        *self.estimates.get(&coalition).unwrap_or(&self.prior)
    }

    /// Fold one round's outcome into the estimate. Rounds where the coalition
    /// was not selected leave the estimate untouched.
    pub fn update(&mut self, coalition: ServerId, realized: f64, selected: bool) {
        if !selected {
            return;
        }
        let old = self.estimate(coalition);
        let a = self.ema_coefficient;
        self.estimates
            .insert(coalition, a * old + (1.0 - a) * realized);
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }
}

/// Coalitions a client has joined in the current round's formation step.
/// Reset each round so profiles stay complete across rounds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientHistory {
    pub joined: BTreeSet<ServerId>,
}

impl ClientHistory {
    pub fn contains(&self, coalition: ServerId) -> bool {
        self.joined.contains(&coalition)
    }
}

/// Previous-round composition of one server-anchored coalition. `total_data`
/// is the member sample-count sum; a joining client is added on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionSnapshot {
    pub server: ServerId,
    pub members: BTreeSet<ClientId>,
    pub total_data: f64,
}

impl CoalitionSnapshot {
    pub fn empty(server: ServerId) -> Self {
        Self {
            server,
            members: BTreeSet::new(),
            total_data: 0.0,
        }
    }

    /// Aggregate data once `client` (holding `data`) has joined. Members
    /// already in the snapshot contribute their data exactly once.
    pub fn data_with(&self, client: ClientId, data: f64) -> f64 {
        if self.members.contains(&client) {
            self.total_data
        } else {
            self.total_data + data
        }
    }
}

/// A complete weak order over the K coalition candidates: strictly ordered
/// indifference classes, best first.
///
/// Serializes as `{"owner": i, "ranking": [[ids...], ...]}`; deserialization
/// re-validates the no-duplicates and nonempty-class invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceProfile {
    pub owner: ClientId,
    classes: Vec<Vec<ServerId>>,
}

#[derive(Serialize, Deserialize)]
struct ProfileWire {
    owner: ClientId,
    ranking: Vec<Vec<ServerId>>,
}

impl Serialize for PreferenceProfile {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ProfileWire {
            owner: self.owner,
            ranking: self.classes.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PreferenceProfile {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let wire = ProfileWire::deserialize(deserializer)?;
        PreferenceProfile::from_classes(wire.owner, wire.ranking)
            .map_err(serde::de::Error::custom)
    }
}

impl PreferenceProfile {
    /// Build from explicit indifference classes, validating that every
    /// candidate appears exactly once and no class is empty. Class members
    /// are stored in ascending id order so equal weak orders compare equal.
    pub fn from_classes(owner: ClientId, mut classes: Vec<Vec<ServerId>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for class in &mut classes {
            if class.is_empty() {
                return Err(Error::InvalidProfile {
                    client: owner,
                    reason: "empty indifference class".into(),
                });
            }
            class.sort();
            for &s in class.iter() {
                if !seen.insert(s) {
                    return Err(Error::InvalidProfile {
                        client: owner,
                        reason: format!("candidate {s} appears twice"),
                    });
                }
            }
        }
        if classes.is_empty() {
            return Err(Error::InvalidProfile {
                client: owner,
                reason: "profile ranks no candidates".into(),
            });
        }
        Ok(Self { owner, classes })
    }

    /// Fully relaxed profile: one indifference class holding all candidates.
    pub fn fully_relaxed(owner: ClientId, candidates: &[ServerId]) -> Self {
        let mut class = candidates.to_vec();
        class.sort();
        Self {
            owner,
            classes: vec![class],
        }
    }

    pub fn classes(&self) -> &[Vec<ServerId>] {
        &self.classes
    }

    pub fn n_candidates(&self) -> usize {
        self.classes.iter().map(|c| c.len()).sum()
    }

    /// Class index of a candidate (0 = most preferred).
    pub fn rank_of(&self, candidate: ServerId) -> Option<usize> {
        self.classes
            .iter()
            .position(|class| class.contains(&candidate))
    }

    /// Candidates in the top indifference class.
    pub fn top_class(&self) -> &[ServerId] {
        &self.classes[0]
    }

    /// True if this profile ranks exactly the given candidate set.
    pub fn covers(&self, candidates: &[ServerId]) -> bool {
        let mine: BTreeSet<ServerId> = self.classes.iter().flatten().copied().collect();
        let theirs: BTreeSet<ServerId> = candidates.iter().copied().collect();
        mine == theirs && self.n_candidates() == candidates.len()
    }
}

/// Auction-aware payoff: the client's data-proportional share of the
/// coalition's estimated payoff, `d_i * R_hat / sum_j d_j`.
pub fn client_payoff(d_i: f64, coalition_data: f64, estimate: f64) -> Result<f64> {
    if coalition_data <= 0.0 {
        return Err(Error::InvalidCoalition(format!(
            "aggregate data must be positive, got {coalition_data}"
        )));
    }
    Ok(d_i * estimate / coalition_data)
}

/// Auction-aware utility: payoff minus training cost.
pub fn client_utility(payoff: f64, cost: f64) -> f64 {
    payoff - cost
}

/// Preference value: 0 for coalitions already visited this round, the raw
/// utility otherwise. Note the literal consequence: a visited coalition
/// outranks any unvisited one with negative utility.
pub fn preference_value(utility: f64, coalition: ServerId, history: &ClientHistory) -> f64 {
    if history.contains(coalition) {
        0.0
    } else {
        utility
    }
}

/// Preference value of one candidate coalition for one client, composed from
/// the estimator, the cost model, and the history rule. Infeasible links give
/// value -inf so the candidate sinks to the bottom of the ranking.
pub fn candidate_value(
    client: ClientId,
    snapshot: &CoalitionSnapshot,
    estimator: &PayoffEstimator,
    history: &ClientHistory,
    topo: &Topology,
) -> f64 {
    let node = topo.client(client);
    let d_i = node.data_size as f64;
    let coalition_data = snapshot.data_with(client, d_i);
    let payoff = match client_payoff(d_i, coalition_data, estimator.estimate(snapshot.server)) {
        Ok(p) => p,
        Err(_) => return f64::NEG_INFINITY,
    };
    let utility = match topo.total_cost(client, snapshot.server) {
        Ok(cost) => client_utility(payoff, cost),
        Err(_) => f64::NEG_INFINITY,
    };
    preference_value(utility, snapshot.server, history)
}

/// Build the client's full preference profile over the candidate snapshots:
/// sort descending by value, group near-equal values into indifference
/// classes. Deterministic: ties inside a class keep ascending server order.
pub fn build_preference_profile(
    client: ClientId,
    candidates: &[CoalitionSnapshot],
    estimator: &PayoffEstimator,
    history: &ClientHistory,
    topo: &Topology,
) -> Result<PreferenceProfile> {
    if candidates.is_empty() {
        return Err(Error::InvalidProfile {
            client,
            reason: "no candidate coalitions".into(),
        });
    }
    let mut valued: Vec<(ServerId, f64)> = candidates
        .iter()
        .map(|snap| {
            (
                snap.server,
                candidate_value(client, snap, estimator, history, topo),
            )
        })
        .collect();
    profile_from_values(client, &mut valued)
}

/// Group (candidate, value) pairs into a profile. Values are compared against
/// the first member of the open class, so grouping cannot chain drift.
pub fn profile_from_values(
    client: ClientId,
    valued: &mut [(ServerId, f64)],
) -> Result<PreferenceProfile> {
    valued.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let mut classes: Vec<Vec<ServerId>> = Vec::new();
    let mut anchor = f64::NAN;
    for &(server, value) in valued.iter() {
        if classes.is_empty() || !values_tied(anchor, value) {
            classes.push(vec![server]);
            anchor = value;
        } else {
            classes.last_mut().expect("class open").push(server);
        }
    }
    for class in &mut classes {
        class.sort();
    }
    PreferenceProfile::from_classes(client, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, streams};
    use crate::topology::{generate_topology, TopologyConfig};
    use rand::Rng;

    #[test]
    fn ema_update_midpoint() {
        let mut est = PayoffEstimator::new(0.5, 10.0).unwrap();
        est.update(ServerId(0), 20.0, true);
        assert_eq!(est.estimate(ServerId(0)), 15.0);
    }

    #[test]
    fn ema_not_selected_unchanged() {
        let mut est = PayoffEstimator::new(0.5, 10.0).unwrap();
        est.update(ServerId(0), 20.0, false);
        assert_eq!(est.estimate(ServerId(0)), 10.0);
    }

    #[test]
    fn ema_alpha_one_ignores_realized() {
        let mut est = PayoffEstimator::new(1.0, 10.0).unwrap();
        est.update(ServerId(0), 99.0, true);
        assert_eq!(est.estimate(ServerId(0)), 10.0);
    }

    #[test]
    fn ema_unknown_coalition_starts_at_prior() {
        let est = PayoffEstimator::new(0.3, 7.5).unwrap();
        assert_eq!(est.estimate(ServerId(42)), 7.5);
    }

    #[test]
    fn ema_coefficient_range_checked() {
        assert!(PayoffEstimator::new(1.5, 0.0).is_err());
        assert!(PayoffEstimator::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn ema_stays_in_bounds_for_bounded_payoffs() {
        // Contraction: estimates remain in [min(prior,0), max(prior, R_max)].
        let r_max = 50.0;
        let prior = 10.0;
        let mut r = stream_rng(3, 77);
        for _ in 0..50 {
            let alpha: f64 = r.random_range(0.0..=1.0);
            let mut est = PayoffEstimator::new(alpha, prior).unwrap();
            for _ in 0..200 {
                let realized = r.random_range(0.0..=r_max);
                let selected = r.random_bool(0.7);
                est.update(ServerId(0), realized, selected);
                let e = est.estimate(ServerId(0));
                assert!(e >= prior.min(0.0) - 1e-12 && e <= prior.max(r_max) + 1e-12);
            }
        }
    }

    #[test]
    fn payoff_is_proportional_split() {
        assert_eq!(client_payoff(2.0, 8.0, 40.0).unwrap(), 10.0);
        // Singleton keeps the whole estimate.
        assert_eq!(client_payoff(3.0, 3.0, 40.0).unwrap(), 40.0);
        assert!(client_payoff(1.0, 0.0, 40.0).is_err());
    }

    #[test]
    fn payoff_matches_weight_recomputation() {
        let mut r = stream_rng(4, 78);
        for _ in 0..200 {
            let d: f64 = r.random_range(0.1..10.0);
            let extra: f64 = r.random_range(0.0..50.0);
            let total = d + extra;
            let est: f64 = r.random_range(0.0..100.0);
            let w = d / total;
            let got = client_payoff(d, total, est).unwrap();
            assert!((got - w * est).abs() <= 1e-12 * est.max(1.0));
        }
    }

    #[test]
    fn utility_is_payoff_minus_cost() {
        assert_eq!(client_utility(5.0, 2.0), 3.0);
        assert_eq!(client_utility(4.0, 4.0), 0.0);
        let mut r = stream_rng(5, 79);
        for _ in 0..100 {
            let p: f64 = r.random_range(-10.0..10.0);
            let c: f64 = r.random_range(-10.0..10.0);
            assert_eq!(client_utility(p, c), p - c);
        }
    }

    #[test]
    fn preference_value_zeroes_history() {
        let mut h = ClientHistory::default();
        h.joined.insert(ServerId(1));
        assert_eq!(preference_value(3.5, ServerId(1), &h), 0.0);
        assert_eq!(preference_value(3.5, ServerId(2), &h), 3.5);
        assert_eq!(preference_value(-2.0, ServerId(2), &h), -2.0);
    }

    #[test]
    fn profile_groups_exact_ties() {
        let mut valued = vec![
            (ServerId(0), 5.0),
            (ServerId(1), 5.0),
            (ServerId(2), 2.0),
        ];
        let p = profile_from_values(ClientId(0), &mut valued).unwrap();
        assert_eq!(p.classes(), &[vec![ServerId(0), ServerId(1)], vec![ServerId(2)]]);
    }

    #[test]
    fn profile_all_equal_single_class() {
        let mut valued = vec![(ServerId(0), 1.0), (ServerId(1), 1.0), (ServerId(2), 1.0)];
        let p = profile_from_values(ClientId(0), &mut valued).unwrap();
        assert_eq!(p.classes().len(), 1);
        assert_eq!(p.n_candidates(), 3);
    }

    #[test]
    fn profile_order_agrees_with_independent_sort() {
        let mut r = stream_rng(6, 80);
        for _ in 0..50 {
            let mut valued: Vec<(ServerId, f64)> = (0..6)
                .map(|k| (ServerId(k), r.random_range(-5.0..5.0)))
                .collect();
            let mut expected = valued.clone();
            expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            let p = profile_from_values(ClientId(0), &mut valued).unwrap();
            // Ranking order must equal value order: walking classes best to
            // worst reproduces the independently sorted values.
            let mut idx = 0;
            for (ci, class) in p.classes().iter().enumerate() {
                for &s in class {
                    let v = expected.iter().find(|(id, _)| *id == s).unwrap().1;
                    let v_sorted = expected[idx].1;
                    assert!(
                        values_tied(v, v_sorted),
                        "class {ci} member {s} has value {v}, sorted slot {idx} is {v_sorted}"
                    );
                    idx += 1;
                }
            }
            assert_eq!(idx, 6);
        }
    }

    #[test]
    fn profiles_are_complete_over_candidates() {
        let config = TopologyConfig {
            n_clients: 10,
            n_servers: 4,
            ..TopologyConfig::default()
        };
        let topo =
            generate_topology(&config, &mut stream_rng(1, streams::TOPOLOGY)).unwrap();
        let est = PayoffEstimator::new(0.5, 100.0).unwrap();
        let snaps: Vec<CoalitionSnapshot> =
            topo.server_ids().map(CoalitionSnapshot::empty).collect();
        let servers: Vec<ServerId> = topo.server_ids().collect();
        for c in 0..10 {
            let p = build_preference_profile(
                ClientId(c),
                &snaps,
                &est,
                &ClientHistory::default(),
                &topo,
            )
            .unwrap();
            assert!(p.covers(&servers));
        }
    }

    #[test]
    fn raising_estimate_never_demotes_candidate() {
        let config = TopologyConfig {
            n_clients: 6,
            n_servers: 5,
            ..TopologyConfig::default()
        };
        let topo =
            generate_topology(&config, &mut stream_rng(2, streams::TOPOLOGY)).unwrap();
        let snaps: Vec<CoalitionSnapshot> =
            topo.server_ids().map(CoalitionSnapshot::empty).collect();
        let history = ClientHistory::default();
        let mut r = stream_rng(9, 81);
        for _ in 0..40 {
            let mut low = PayoffEstimator::new(0.5, 0.0).unwrap();
            for s in topo.server_ids() {
                low.update(s, r.random_range(0.0..50.0), true);
            }
            let target = ServerId(r.random_range(0..5));
            let mut high = low.clone();
            high.update(target, low.estimate(target) * 2.0 + 10.0, true);

            let p_low =
                build_preference_profile(ClientId(0), &snaps, &low, &history, &topo).unwrap();
            let p_high =
                build_preference_profile(ClientId(0), &snaps, &high, &history, &topo).unwrap();
            assert!(p_high.rank_of(target).unwrap() <= p_low.rank_of(target).unwrap());
        }
    }

    #[test]
    fn duplicate_candidates_rejected() {
        let classes = vec![vec![ServerId(0)], vec![ServerId(0)]];
        assert!(PreferenceProfile::from_classes(ClientId(0), classes).is_err());
    }

    #[test]
    fn profile_json_round_trip_and_validation() {
        let p = PreferenceProfile::from_classes(
            ClientId(3),
            vec![vec![ServerId(2), ServerId(0)], vec![ServerId(1)]],
        )
        .unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"owner":3,"ranking":[[0,2],[1]]}"#);
        let back: PreferenceProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        // Duplicates and empty classes are rejected on the wire.
        assert!(serde_json::from_str::<PreferenceProfile>(
            r#"{"owner":0,"ranking":[[1],[1]]}"#
        )
        .is_err());
        assert!(serde_json::from_str::<PreferenceProfile>(
            r#"{"owner":0,"ranking":[[]]}"#
        )
        .is_err());
    }

    #[test]
    fn infeasible_link_sinks_to_bottom() {
        let config = TopologyConfig {
            n_clients: 2,
            n_servers: 3,
            tx_power: 0.0, // every link has rate 0
            ..TopologyConfig::default()
        };
        let topo =
            generate_topology(&config, &mut stream_rng(3, streams::TOPOLOGY)).unwrap();
        let est = PayoffEstimator::new(0.5, 100.0).unwrap();
        let snaps: Vec<CoalitionSnapshot> =
            topo.server_ids().map(CoalitionSnapshot::empty).collect();
        let p = build_preference_profile(
            ClientId(0),
            &snaps,
            &est,
            &ClientHistory::default(),
            &topo,
        )
        .unwrap();
        // All candidates infeasible: a single indifference class of -inf.
        assert_eq!(p.classes().len(), 1);
    }
}
