//! Full round loop: profile generation, coalition formation, equilibrium
//! bidding, winner selection (per method), hierarchical training, payoff
//! distribution, and metric logging.

pub mod learner;
pub mod metrics;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample as index_sample;
use rand::Rng;

pub use learner::{
    dirichlet_partition, local_train, test_accuracy, training_loss, zero_params, SyntheticTask,
};
pub use metrics::{MetricsLog, RoundRecord, WinnerSummary};

use crate::auction::{
    equilibrium_bid, score, select_winners_greedy, AuctionOutcome, Bid, CostDistribution,
    PolyCost, QualityCost, QualityStrategy, ScoringWeights,
};
use crate::config::{Method, QualityMode, SimConfig};
use crate::error::{Error, Result};
use crate::hedonic::{pop, ClientWeight, Partition};
use crate::preference::{
    build_preference_profile, ClientHistory, CoalitionSnapshot, PayoffEstimator,
    PreferenceProfile,
};
use crate::rng::{round_rng, stream_rng, streams, SimRng};
use crate::topology::{generate_topology, ClientId, ServerId, Topology};

/// Weighted-mean aggregation with weights renormalized over the participant
/// set: `x = sum_i d_i y_i / sum_i d_i`.
pub fn aggregate(updates: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
    if updates.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    let total: f64 = updates.iter().map(|(_, w)| w).sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::EmptyAggregation);
    }
    // Normalize weights first: a single participant contributes with weight
    // exactly 1, so its parameters pass through unchanged.
    let dim = updates[0].0.len();
    let mut out = vec![0.0; dim];
    for (params, w) in updates {
        debug_assert_eq!(params.len(), dim);
        let nw = w / total;
        for (o, p) in out.iter_mut().zip(params) {
            *o += nw * p;
        }
    }
    Ok(out)
}

/// Split a contract price across coalition members proportionally to data,
/// with the float residual handed to the largest member (ties: lower id) so
/// the shares sum to the price.
pub fn distribute_payoffs(
    contract_price: f64,
    members: &[(ClientId, f64)],
) -> Result<Vec<(ClientId, f64)>> {
    if members.is_empty() {
        return Err(Error::InvalidCoalition("no members to pay".into()));
    }
    let total: f64 = members.iter().map(|(_, d)| d).sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::InvalidCoalition(format!(
            "aggregate data must be positive, got {total}"
        )));
    }
    let mut payoffs: Vec<(ClientId, f64)> = members
        .iter()
        .map(|&(id, d)| (id, d / total * contract_price))
        .collect();
    let paid: f64 = payoffs.iter().map(|(_, p)| p).sum();
    let residual = contract_price - paid;
    let largest = members
        .iter()
        .enumerate()
        .max_by(|(ia, (_, da)), (ib, (_, db))| {
            da.partial_cmp(db)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ib.cmp(ia)) // ties: lower index wins
        })
        .map(|(i, _)| i)
        .expect("members nonempty");
    payoffs[largest].1 += residual;
    Ok(payoffs)
}

/// Live state of one simulation run.
pub struct Simulation {
    config: SimConfig,
    topo: Topology,
    task: SyntheticTask,
    client_samples: Vec<Vec<usize>>,
    params: Vec<f64>,
    estimator: PayoffEstimator,
    prev_partition: Partition,
    histories: Vec<ClientHistory>,
    weights: ScoringWeights,
    coalition_dist: CostDistribution,
    client_dist: Option<CostDistribution>,
    cost_model: PolyCost,
    cohort: usize,
    round: usize,
}

impl Simulation {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        if config.alpha.len() != 1 {
            return Err(Error::InvalidConfig {
                key: "alpha".into(),
                reason: "the simulation uses a single quality attribute (data size)".into(),
            });
        }
        if config.method.needs_cohort() && config.cohort_size.is_none() {
            return Err(Error::InvalidConfig {
                key: "cohort_size".into(),
                reason: format!(
                    "method {} needs a cohort size; run through run_simulation for automatic matching",
                    config.method
                ),
            });
        }

        let mut topo_rng = stream_rng(config.seed, streams::TOPOLOGY);
        let mut topo = generate_topology(&config.topology_config(), &mut topo_rng)?;

        let mut data_rng = stream_rng(config.seed, streams::DATASET);
        let task = SyntheticTask::generate(
            config.feature_dim,
            config.n_classes,
            config.train_samples,
            config.test_samples,
            config.class_separation,
            config.feature_noise,
            &mut data_rng,
        );
        let client_samples = dirichlet_partition(
            &task.train_labels,
            config.n_classes,
            config.n_clients,
            config.dirichlet_beta,
            &mut data_rng,
        )?;
        let counts: Vec<u64> = client_samples.iter().map(|s| s.len() as u64).collect();
        topo.set_data_sizes(&counts)?;

        let mean_theta = 0.5 * (config.coalition_theta_low + config.coalition_theta_high);
        let mean_coalition_data = config.train_samples as f64 / config.n_servers as f64;
        let prior = config.payoff_prior.unwrap_or_else(|| {
            // Expected contract price under uniform winning odds.
            config.winners_per_round as f64 / config.n_servers as f64
                * config.quality_cost_linear
                * mean_theta
                * mean_coalition_data
        });

        let client_dist = if config.theta_low < config.theta_high {
            Some(CostDistribution::uniform(config.theta_low, config.theta_high)?)
        } else {
            None
        };

        let servers: Vec<ServerId> = topo.server_ids().collect();
        let params = zero_params(config.n_classes, config.feature_dim);
        Ok(Self {
            topo,
            task,
            client_samples,
            params,
            estimator: PayoffEstimator::new(config.ema_coefficient, prior)?,
            prev_partition: Partition::empty(&servers),
            histories: vec![ClientHistory::default(); config.n_clients],
            weights: ScoringWeights::new(config.alpha.clone())?,
            coalition_dist: CostDistribution::uniform(
                config.coalition_theta_low,
                config.coalition_theta_high,
            )?,
            client_dist,
            cost_model: PolyCost {
                linear: config.quality_cost_linear,
                quadratic: config.quality_cost_quadratic,
            },
            cohort: config.cohort_size.unwrap_or(0),
            round: 0,
            config: config.clone(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn global_params(&self) -> &[f64] {
        &self.params
    }

    fn data_of(&self, client: ClientId) -> f64 {
        self.topo.client(client).data_size as f64
    }

    /// Run one round and append nothing: the caller owns the log.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let t = self.round;
        self.round += 1;
        match self.config.method {
            Method::Dualgfl | Method::Dualgflstat | Method::Fedavghed => {
                self.run_coalition_round(t)
            }
            Method::Fedavg | Method::Fedavgauc => self.run_singleton_round(t),
        }
    }

    // ---- coalition methods -------------------------------------------------

    fn run_coalition_round(&mut self, t: usize) -> Result<RoundRecord> {
        let mut rng = round_rng(self.config.seed, streams::ROUND, t as u64);
        let servers: Vec<ServerId> = self.topo.server_ids().collect();

        // (1) Auction-aware preference profiles against last round's
        // coalition snapshots. Formation is one-shot per round, so at
        // evaluation time no client has joined anything yet this round and
        // the visited-coalition histories are empty; they would only fill up
        // under an iterative join protocol.
        let snapshots: Vec<CoalitionSnapshot> = servers
            .iter()
            .map(|&s| {
                let members = self
                    .prev_partition
                    .members(s)
                    .cloned()
                    .unwrap_or_default();
                let total_data = members.iter().map(|&c| self.data_of(c)).sum();
                CoalitionSnapshot {
                    server: s,
                    members,
                    total_data,
                }
            })
            .collect();
        let profiles: Vec<PreferenceProfile> = (0..self.config.n_clients)
            .map(|i| {
                build_preference_profile(
                    ClientId(i),
                    &snapshots,
                    &self.estimator,
                    &self.histories[i],
                    &self.topo,
                )
            })
            .collect::<Result<_>>()?;

        // (2) Pareto-optimal partition.
        let client_weights: Vec<ClientWeight> = (0..self.config.n_clients)
            .map(|i| ClientWeight {
                id: ClientId(i),
                data: self.data_of(ClientId(i)),
            })
            .collect();
        let partition = pop(
            &client_weights,
            &servers,
            &profiles,
            self.config.capacity,
            &mut rng,
        )?;

        // (3) Equilibrium bids from every nonempty coalition.
        let bidders: Vec<ServerId> = partition
            .coalitions()
            .filter(|(_, members)| !members.is_empty())
            .map(|(s, _)| s)
            .collect();
        let n_bidders = bidders.len();
        let mut bids = Vec::with_capacity(n_bidders);
        for &s in &bidders {
            let members = partition.members(s).expect("bidder exists");
            let quality: f64 = members.iter().map(|&c| self.data_of(c)).sum();
            let resource = self.config.bandwidth_demand * members.len() as f64;
            let theta = rng.random_range(
                self.config.coalition_theta_low..=self.config.coalition_theta_high,
            );
            let strategy = match self.config.quality_mode {
                QualityMode::Fixed => QualityStrategy::Fixed(quality),
                QualityMode::Strategic => QualityStrategy::Strategic {
                    q_min: 0.0,
                    q_max: self.config.quality_max,
                },
            };
            let bid = if n_bidders >= 2 {
                equilibrium_bid(
                    s,
                    &self.cost_model,
                    strategy,
                    theta,
                    &self.coalition_dist,
                    n_bidders,
                    &self.weights,
                    resource,
                )?
            } else {
                // A lone bidder earns no information rent; price at cost.
                let q = match strategy {
                    QualityStrategy::Fixed(q) => q,
                    QualityStrategy::Strategic { .. } => quality,
                };
                Bid {
                    coalition: s,
                    price: self.cost_model.cost(q, theta),
                    qualities: vec![q],
                    resource,
                }
            };
            bids.push(bid);
        }

        // (4) Winner selection.
        let outcome = match self.config.method {
            Method::Dualgfl => select_winners_greedy(
                &bids,
                &self.weights,
                self.config.winners_per_round,
                self.config.budget,
            )?,
            Method::Dualgflstat => self.sample_outcome(&bids, true, &mut rng)?,
            Method::Fedavghed => self.sample_outcome(&bids, false, &mut rng)?,
            _ => unreachable!("coalition round for coalition methods only"),
        };

        // (5) Local training and hierarchical aggregation over winners.
        let winner_set: BTreeSet<ServerId> = outcome.winners.iter().copied().collect();
        let groups: Vec<(ServerId, Vec<ClientId>)> = outcome
            .winners
            .iter()
            .map(|&s| {
                let members = partition
                    .members(s)
                    .expect("winner is a coalition")
                    .iter()
                    .copied()
                    .filter(|&c| self.topo.total_cost(c, s).is_ok())
                    .collect();
                (s, members)
            })
            .collect();
        let (weight_sum, hier_flat) = self.train_groups(&groups, t)?;

        // (6) Payoff distribution and estimator updates.
        let price_of: BTreeMap<ServerId, f64> =
            bids.iter().map(|b| (b.coalition, b.price)).collect();
        let mut client_payoffs: BTreeMap<ClientId, f64> = BTreeMap::new();
        let mut paid_total = 0.0;
        let mut price_total = 0.0;
        for (s, members) in &groups {
            if members.is_empty() {
                continue;
            }
            let price = price_of[s];
            price_total += price;
            let weighted: Vec<(ClientId, f64)> =
                members.iter().map(|&c| (c, self.data_of(c))).collect();
            for (c, p) in distribute_payoffs(price, &weighted)? {
                paid_total += p;
                *client_payoffs.entry(c).or_insert(0.0) += p;
            }
        }
        for bid in &bids {
            self.estimator.update(
                bid.coalition,
                bid.price,
                winner_set.contains(&bid.coalition),
            );
        }

        let mut client_utilities = BTreeMap::new();
        for (s, members) in &groups {
            for &c in members {
                let cost = self.topo.total_cost(c, *s)?;
                let payoff = client_payoffs.get(&c).copied().unwrap_or(0.0);
                client_utilities.insert(c, payoff - cost);
            }
        }

        // (7) Bookkeeping for the next round. Histories reset each round and
        // stay empty between formations (one-shot join per round).
        for h in &mut self.histories {
            *h = ClientHistory::default();
        }
        self.prev_partition = partition.clone();

        let winning_clients: Vec<ClientId> =
            groups.iter().flat_map(|(_, m)| m.iter().copied()).collect();
        let winners: Vec<WinnerSummary> = outcome
            .winners
            .iter()
            .zip(&outcome.assigned_scores)
            .map(|(&s, &sc)| {
                let bid = bids.iter().find(|b| b.coalition == s).expect("winner bid");
                WinnerSummary {
                    coalition: s,
                    price: bid.price,
                    score: sc,
                    quality: bid.qualities[0],
                    resource: bid.resource,
                }
            })
            .collect();

        let record = self.build_record(
            t,
            Some(partition),
            winners,
            winning_clients,
            Some(outcome.total_score),
            client_payoffs,
            client_utilities,
            (price_total - paid_total).abs(),
            weight_sum,
            hier_flat,
        );
        Ok(record)
    }

    /// Random winner selection over the bids: score-weighted when `by_score`
    /// (zero weight for nonpositive scores, uniform fallback when all weights
    /// vanish), uniform otherwise. Budget and cardinality are still honored.
    fn sample_outcome(
        &self,
        bids: &[Bid],
        by_score: bool,
        rng: &mut SimRng,
    ) -> Result<AuctionOutcome> {
        let scores: Vec<f64> = bids
            .iter()
            .map(|b| score(b, &self.weights))
            .collect::<Result<_>>()?;
        let mut pool: Vec<usize> = (0..bids.len()).collect();
        let mut outcome = AuctionOutcome::empty();
        while outcome.winners.len() < self.config.winners_per_round && !pool.is_empty() {
            let weights: Vec<f64> = pool
                .iter()
                .map(|&i| if by_score { scores[i].max(0.0) } else { 1.0 })
                .collect();
            let total: f64 = weights.iter().sum();
            let pick = if total > 0.0 {
                let mut draw = rng.random_range(0.0..total);
                let mut chosen = pool.len() - 1;
                for (pos, w) in weights.iter().enumerate() {
                    if draw < *w {
                        chosen = pos;
                        break;
                    }
                    draw -= w;
                }
                chosen
            } else {
                rng.random_range(0..pool.len())
            };
            let i = pool.swap_remove(pick);
            if outcome.spent_resource + bids[i].resource <= self.config.budget {
                outcome.winners.push(bids[i].coalition);
                outcome.assigned_scores.push(scores[i]);
                outcome.total_score += scores[i];
                outcome.spent_resource += bids[i].resource;
            }
        }
        Ok(outcome)
    }

    // ---- coalition-free baselines -------------------------------------------

    fn run_singleton_round(&mut self, t: usize) -> Result<RoundRecord> {
        let mut rng = round_rng(self.config.seed, streams::ROUND, t as u64);
        let n = self.config.n_clients;
        let cohort = self.cohort.clamp(1, n);

        let selected: Vec<ClientId> = match self.config.method {
            Method::Fedavg => {
                let mut picks: Vec<usize> = index_sample(&mut rng, n, cohort).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(ClientId).collect()
            }
            Method::Fedavgauc => {
                // Singleton bids from every client; top cohort by score.
                let mut scored: Vec<(ClientId, f64)> = (0..n)
                    .map(|i| {
                        let c = ClientId(i);
                        let price = self.singleton_price(c)?;
                        let s = self.weights.alpha[0] * self.data_of(c) - price;
                        Ok((c, s))
                    })
                    .collect::<Result<_>>()?;
                scored.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.0.cmp(&b.0))
                });
                let mut picked: Vec<ClientId> =
                    scored.iter().take(cohort).map(|(c, _)| *c).collect();
                picked.sort_unstable();
                picked
            }
            _ => unreachable!("singleton round for coalition-free methods only"),
        };

        // Each selected client is its own coalition anchored at the nearest
        // server, paid its singleton contract price.
        let groups: Vec<(ServerId, Vec<ClientId>)> = selected
            .iter()
            .map(|&c| (self.topo.nearest_server(c), vec![c]))
            .collect();
        let (weight_sum, hier_flat) = self.train_groups(&groups, t)?;

        let mut client_payoffs = BTreeMap::new();
        let mut client_utilities = BTreeMap::new();
        for &c in &selected {
            let payoff = self.singleton_price(c)?;
            let cost = self.topo.total_cost(c, self.topo.nearest_server(c))?;
            client_payoffs.insert(c, payoff);
            client_utilities.insert(c, payoff - cost);
        }

        let record = self.build_record(
            t,
            None,
            Vec::new(),
            selected,
            None,
            client_payoffs,
            client_utilities,
            0.0,
            weight_sum,
            hier_flat,
        );
        Ok(record)
    }

    /// Equilibrium price of a client bidding alone: model cost at its data
    /// size plus the information rent against all N potential bidders.
    fn singleton_price(&self, client: ClientId) -> Result<f64> {
        let q = self.data_of(client);
        let theta = self.topo.client(client).cost_factor;
        let cost = self.cost_model.cost(q, theta);
        let profit = match (&self.client_dist, self.config.n_clients >= 2) {
            (Some(dist), true) => crate::auction::equilibrium_profit(
                theta.clamp(dist.lower(), dist.upper()),
                dist,
                self.config.n_clients,
                |t| self.cost_model.marginal_theta(q, t),
            )?,
            _ => 0.0,
        };
        Ok(cost + profit)
    }

    // ---- shared machinery ----------------------------------------------------

    /// Train every group member, aggregate per group (edge), then across
    /// groups (central), and install the result. Returns the participant
    /// weight closure and the max deviation from flat aggregation.
    fn train_groups(
        &mut self,
        groups: &[(ServerId, Vec<ClientId>)],
        t: usize,
    ) -> Result<(f64, f64)> {
        let participants: Vec<ClientId> = groups
            .iter()
            .flat_map(|(_, members)| members.iter().copied())
            .collect();
        if participants.is_empty() {
            // Round skipped: model unchanged, closure trivially exact.
            return Ok((1.0, 0.0));
        }

        let mut updates: BTreeMap<ClientId, (Vec<f64>, f64)> = BTreeMap::new();
        for &c in &participants {
            let mut learner_rng = round_rng(
                self.config.seed,
                streams::LEARNER,
                (t * self.config.n_clients + c.0) as u64,
            );
            let trained = local_train(
                &self.params,
                &self.task,
                &self.client_samples[c.0],
                self.config.local_epochs,
                self.config.learning_rate,
                self.config.batch_size,
                &mut learner_rng,
            );
            if let Some(params) = trained {
                updates.insert(c, (params, self.data_of(c)));
            }
        }
        if updates.is_empty() {
            return Ok((1.0, 0.0));
        }

        // Edge aggregation per coalition, then central aggregation weighted
        // by coalition data.
        let mut edge_means: Vec<(Vec<f64>, f64)> = Vec::new();
        for (_, members) in groups {
            let local: Vec<(Vec<f64>, f64)> = members
                .iter()
                .filter_map(|c| updates.get(c).cloned())
                .collect();
            if local.is_empty() {
                continue;
            }
            let weight: f64 = local.iter().map(|(_, w)| w).sum();
            edge_means.push((aggregate(&local)?, weight));
        }
        let hierarchical = aggregate(&edge_means)?;

        // Flat weighted mean over all participants, for the equality check.
        let flat_inputs: Vec<(Vec<f64>, f64)> = updates.values().cloned().collect();
        let flat = aggregate(&flat_inputs)?;
        let deviation = hierarchical
            .iter()
            .zip(&flat)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        let total_weight: f64 = flat_inputs.iter().map(|(_, w)| w).sum();
        let weight_sum: f64 = flat_inputs.iter().map(|(_, w)| w / total_weight).sum();

        self.params = hierarchical;
        Ok((weight_sum, deviation))
    }

    #[allow(clippy::too_many_arguments)]
    fn build_record(
        &self,
        t: usize,
        partition: Option<Partition>,
        winners: Vec<WinnerSummary>,
        winning_clients: Vec<ClientId>,
        total_score: Option<f64>,
        client_payoffs: BTreeMap<ClientId, f64>,
        client_utilities: BTreeMap<ClientId, f64>,
        payoff_conservation_residual: f64,
        aggregation_weight_sum: f64,
        hier_flat_deviation: f64,
    ) -> RoundRecord {
        let n_winning = winning_clients.len();
        let mean = |values: &mut dyn Iterator<Item = f64>, count: usize| -> f64 {
            if count == 0 {
                0.0
            } else {
                values.sum::<f64>() / count as f64
            }
        };
        let avg_client_quality = mean(
            &mut winning_clients.iter().map(|&c| self.data_of(c)),
            n_winning,
        );
        let avg_coalition_quality = if winners.is_empty() {
            // Coalition-free methods: each winning client is its own
            // coalition of one.
            avg_client_quality
        } else {
            mean(&mut winners.iter().map(|w| w.quality), winners.len())
        };
        let avg_client_payoff = mean(&mut client_payoffs.values().copied(), client_payoffs.len());
        let avg_client_utility = mean(
            &mut client_utilities.values().copied(),
            client_utilities.len(),
        );
        RoundRecord {
            round: t,
            method: self.config.method,
            partition,
            winners,
            winning_clients,
            total_score,
            avg_client_quality,
            avg_coalition_quality,
            avg_client_payoff,
            avg_client_utility,
            client_payoffs,
            client_utilities,
            test_accuracy: test_accuracy(&self.params, &self.task),
            n_winning_clients: n_winning,
            payoff_conservation_residual,
            aggregation_weight_sum,
            hier_flat_deviation,
        }
    }
}

/// Run a full simulation. Coalition-free methods without an explicit cohort
/// first run the dual-game method on the same seed and match its mean
/// winning-client count, so cohort sizes stay comparable across methods.
pub fn run_simulation(config: &SimConfig) -> Result<MetricsLog> {
    config.validate()?;
    let mut cfg = config.clone();
    if cfg.method.needs_cohort() && cfg.cohort_size.is_none() {
        let mut calibration = cfg.clone();
        calibration.method = Method::Dualgfl;
        let reference = run_simulation(&calibration)?;
        let mean = reference.mean_winning_clients();
        cfg.cohort_size = Some((mean.round() as usize).clamp(1, cfg.n_clients));
    }
    let mut sim = Simulation::new(&cfg)?;
    let mut records = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        records.push(sim.run_round()?);
    }
    Ok(MetricsLog {
        method: cfg.method,
        seed: cfg.seed,
        records,
    })
}
