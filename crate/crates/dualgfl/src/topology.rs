//! Simulated network: grid-placed edge servers, randomly placed clients, and
//! the per-(client, server) cost model.
//!
//! Costs follow the standard wireless abstraction: computation cost
//! `kappa * cycles * clock^2`, uplink rate `B * log2(1 + p*h/N0)` with an
//! inverse power-law channel gain `h = (d0 / dist)^gamma`, communication cost
//! `model_size / rate`, and total cost `c_cp + theta * c_cm`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Identifier of a client node.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ClientId(pub usize);

/// Identifier of an edge server. Coalitions are anchored to one edge server
/// each, so this doubles as the coalition identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ServerId(pub usize);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// CPU parameters entering the computation-cost formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeParams {
    /// CPU-architecture coefficient (dimensionless).
    pub kappa: f64,
    /// CPU cycles per local round.
    pub cycles: f64,
    /// CPU clock frequency in Hz.
    pub clock: f64,
}

impl ComputeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("cycles", self.cycles),
            ("clock", self.clock),
        ] {
            if !(v.is_finite() && v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig {
                    key: name.into(),
                    reason: format!("must be strictly positive, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Uplink channel parameters for one (client, server) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    /// Transmission power in W.
    pub tx_power: f64,
    /// Channel gain (dimensionless, derived from distance).
    pub channel_gain: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidConfig {
                key: "bandwidth".into(),
                reason: "must be > 0".into(),
            });
        }
        if !(self.noise_psd.is_finite() && self.noise_psd > 0.0) {
            return Err(Error::InvalidConfig {
                key: "noise_psd".into(),
                reason: "must be > 0".into(),
            });
        }
        if self.tx_power < 0.0 || self.channel_gain < 0.0 {
            return Err(Error::InvalidConfig {
                key: "tx_power/channel_gain".into(),
                reason: "must be nonnegative".into(),
            });
        }
        Ok(())
    }
}

/// One client with its placement, data volume, and cost parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientNode {
    pub id: ClientId,
    /// 2-D position in km.
    pub position: [f64; 2],
    /// Local sample count.
    pub data_size: u64,
    /// Cost factor scaling this client's communication cost.
    pub cost_factor: f64,
    pub compute: ComputeParams,
}

/// One edge server with its grid position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerNode {
    pub id: ServerId,
    pub position: [f64; 2],
}

/// Parameters for topology generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub n_clients: usize,
    pub n_servers: usize,
    /// Grid spacing between adjacent edge servers, in km.
    pub grid_spacing: f64,
    /// Size of one model update, in bits.
    pub model_size: f64,
    pub bandwidth: f64,
    pub tx_power: f64,
    pub noise_psd: f64,
    pub kappa: f64,
    pub cpu_cycles: f64,
    pub cpu_clock: f64,
    /// Relative per-client jitter applied to the CPU clock; 0 disables it.
    pub clock_jitter: f64,
    /// Client cost-factor range [theta_low, theta_high].
    pub theta_low: f64,
    pub theta_high: f64,
    /// Fallback data-size range, used until a dataset partition overrides it.
    pub data_size_min: u64,
    pub data_size_max: u64,
    /// Path-loss reference distance d0 in km.
    pub gain_ref_distance: f64,
    /// Path-loss exponent gamma.
    pub path_loss_exponent: f64,
    /// Distances are clamped below by this value so a client sitting on top
    /// of a server (the K=1 degenerate grid) keeps a finite gain.
    pub min_distance: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_clients: 50,
            n_servers: 9,
            grid_spacing: 100.0,
            model_size: 5.0e7,
            bandwidth: 1.0e6,
            tx_power: 0.5,
            noise_psd: 1.0e-6,
            kappa: 1.0e-27,
            cpu_cycles: 5.0e9,
            cpu_clock: 1.0e9,
            clock_jitter: 0.0,
            theta_low: 0.1,
            theta_high: 1.0,
            data_size_min: 50,
            data_size_max: 150,
            gain_ref_distance: 1.0,
            path_loss_exponent: 2.0,
            min_distance: 0.01,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        };
        if self.n_clients == 0 {
            return Err(bad("n_clients", "must be >= 1"));
        }
        if self.n_servers == 0 {
            return Err(bad("n_servers", "must be >= 1"));
        }
        if !(self.grid_spacing.is_finite() && self.grid_spacing > 0.0) {
            return Err(bad("grid_spacing", "must be > 0"));
        }
        if self.model_size < 0.0 {
            return Err(bad("model_size", "must be >= 0"));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(bad("bandwidth", "must be > 0"));
        }
        if self.tx_power < 0.0 {
            return Err(bad("tx_power", "must be >= 0"));
        }
        if !(self.noise_psd.is_finite() && self.noise_psd > 0.0) {
            return Err(bad("noise_psd", "must be > 0"));
        }
        ComputeParams {
            kappa: self.kappa,
            cycles: self.cpu_cycles,
            clock: self.cpu_clock,
        }
        .validate()?;
        if !(0.0..1.0).contains(&self.clock_jitter) {
            return Err(bad("clock_jitter", "must lie in [0, 1)"));
        }
        let theta_ok = self.theta_low.is_finite()
            && self.theta_high.is_finite()
            && self.theta_low <= self.theta_high;
        if !theta_ok {
            return Err(bad("theta_low", "must not exceed theta_high"));
        }
        if self.theta_low < 0.0 {
            return Err(bad("theta_low", "must be >= 0"));
        }
        if self.data_size_min == 0 || self.data_size_min > self.data_size_max {
            return Err(bad("data_size_min", "need 1 <= data_size_min <= data_size_max"));
        }
        if !(self.gain_ref_distance.is_finite() && self.gain_ref_distance > 0.0) {
            return Err(bad("gain_ref_distance", "must be > 0"));
        }
        if self.path_loss_exponent < 0.0 {
            return Err(bad("path_loss_exponent", "must be >= 0"));
        }
        if !(self.min_distance.is_finite() && self.min_distance > 0.0) {
            return Err(bad("min_distance", "must be > 0"));
        }
        Ok(())
    }
}

/// The generated network: clients, grid-placed servers, and shared channel
/// parameters. Immutable after generation; all cost queries are pure reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub clients: Vec<ClientNode>,
    pub servers: Vec<ServerNode>,
    pub model_size: f64,
    pub grid_spacing: f64,
    pub bandwidth: f64,
    pub tx_power: f64,
    pub noise_psd: f64,
    pub gain_ref_distance: f64,
    pub path_loss_exponent: f64,
    pub min_distance: f64,
}

/// Generate a topology: servers on a ceil(sqrt(K))-sided grid, clients
/// uniformly random inside the grid's bounding box, per-client data sizes and
/// cost factors sampled from the configured distributions.
///
/// Deterministic given the rng state.
pub fn generate_topology(config: &TopologyConfig, rng: &mut SimRng) -> Result<Topology> {
    config.validate()?;

    let side = (config.n_servers as f64).sqrt().ceil() as usize;
    let mut servers = Vec::with_capacity(config.n_servers);
    for k in 0..config.n_servers {
        let row = k / side;
        let col = k % side;
        servers.push(ServerNode {
            id: ServerId(k),
            position: [
                col as f64 * config.grid_spacing,
                row as f64 * config.grid_spacing,
            ],
        });
    }
    let extent = (side - 1) as f64 * config.grid_spacing;

    let mut clients = Vec::with_capacity(config.n_clients);
    for i in 0..config.n_clients {
        let position = if extent > 0.0 {
            [
                rng.random_range(0.0..=extent),
                rng.random_range(0.0..=extent),
            ]
        } else {
            [0.0, 0.0]
        };
        let data_size = rng.random_range(config.data_size_min..=config.data_size_max);
        let cost_factor = if config.theta_low < config.theta_high {
            rng.random_range(config.theta_low..=config.theta_high)
        } else {
            config.theta_low
        };
        let clock = if config.clock_jitter > 0.0 {
            let f = rng.random_range(1.0 - config.clock_jitter..=1.0 + config.clock_jitter);
            config.cpu_clock * f
        } else {
            config.cpu_clock
        };
        clients.push(ClientNode {
            id: ClientId(i),
            position,
            data_size,
            cost_factor,
            compute: ComputeParams {
                kappa: config.kappa,
                cycles: config.cpu_cycles,
                clock,
            },
        });
    }

    Ok(Topology {
        clients,
        servers,
        model_size: config.model_size,
        grid_spacing: config.grid_spacing,
        bandwidth: config.bandwidth,
        tx_power: config.tx_power,
        noise_psd: config.noise_psd,
        gain_ref_distance: config.gain_ref_distance,
        path_loss_exponent: config.path_loss_exponent,
        min_distance: config.min_distance,
    })
}

/// Achievable uplink rate `B * log2(1 + p*h/N0)` in bits/s.
pub fn uplink_rate(ch: &ChannelParams) -> f64 {
    ch.bandwidth * (1.0 + ch.tx_power * ch.channel_gain / ch.noise_psd).log2()
}

/// Computation cost `kappa * cycles * clock^2`.
pub fn computation_cost(p: &ComputeParams) -> f64 {
    p.kappa * p.cycles * p.clock * p.clock
}

/// Communication cost `model_size / rate`. `None` marks an infeasible link
/// (nonpositive rate); the caller excludes that coalition candidate.
pub fn communication_cost(model_size: f64, rate: f64) -> Option<f64> {
    if rate <= 0.0 {
        return None;
    }
    Some(model_size / rate)
}

/// Total cost `c_cp + theta * c_cm` of `client` uploading to `server`.
pub fn total_cost(client: &ClientNode, server: ServerId, topo: &Topology) -> Result<f64> {
    let ch = topo.channel_params(client, server)?;
    let rate = uplink_rate(&ch);
    let c_cm = communication_cost(topo.model_size, rate).ok_or(Error::InfeasibleLink {
        client: client.id,
        server,
    })?;
    let c_cp = computation_cost(&client.compute);
    Ok(c_cp + client.cost_factor * c_cm)
}

impl Topology {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn n_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn client(&self, id: ClientId) -> &ClientNode {
        &self.clients[id.0]
    }

    pub fn server_ids(&self) -> impl Iterator<Item = ServerId> + '_ {
        self.servers.iter().map(|s| s.id)
    }

    /// Euclidean distance in km, clamped below by `min_distance`.
    pub fn distance(&self, client: &ClientNode, server: ServerId) -> f64 {
        let s = &self.servers[server.0];
        let dx = client.position[0] - s.position[0];
        let dy = client.position[1] - s.position[1];
        (dx * dx + dy * dy).sqrt().max(self.min_distance)
    }

    /// Inverse power-law path gain `(d0 / dist)^gamma`.
    pub fn channel_gain(&self, dist: f64) -> f64 {
        (self.gain_ref_distance / dist.max(self.min_distance)).powf(self.path_loss_exponent)
    }

    pub fn channel_params(&self, client: &ClientNode, server: ServerId) -> Result<ChannelParams> {
        if server.0 >= self.servers.len() {
            return Err(Error::Domain(format!("unknown server id {server}")));
        }
        let gain = self.channel_gain(self.distance(client, server));
        Ok(ChannelParams {
            bandwidth: self.bandwidth,
            tx_power: self.tx_power,
            channel_gain: gain,
            noise_psd: self.noise_psd,
        })
    }

    /// Total cost of `client` joining the coalition anchored at `server`.
    pub fn total_cost(&self, client: ClientId, server: ServerId) -> Result<f64> {
        if client.0 >= self.clients.len() {
            return Err(Error::Domain(format!("unknown client id {client}")));
        }
        total_cost(&self.clients[client.0], server, self)
    }

    /// Data-share weights `d_i = |D_i| / |D|` over all clients.
    pub fn data_shares(&self) -> Vec<f64> {
        let total: u64 = self.clients.iter().map(|c| c.data_size).sum();
        self.clients
            .iter()
            .map(|c| c.data_size as f64 / total as f64)
            .collect()
    }

    /// Server nearest to the client (ties broken by lower id). Used by the
    /// coalition-free baselines to price communication.
    pub fn nearest_server(&self, client: ClientId) -> ServerId {
        let c = &self.clients[client.0];
        self.servers
            .iter()
            .map(|s| {
                let dx = c.position[0] - s.position[0];
                let dy = c.position[1] - s.position[1];
                (dx * dx + dy * dy, s.id)
            })
            .min_by(|a, b| a.partial_cmp(b).expect("distances are finite"))
            .map(|(_, id)| id)
            .expect("topology has at least one server")
    }

    /// Replace per-client data sizes (the dataset partition owns the real
    /// counts; the generator only samples placeholders).
    pub fn set_data_sizes(&mut self, sizes: &[u64]) -> Result<()> {
        if sizes.len() != self.clients.len() {
            return Err(Error::InvalidData(format!(
                "expected {} data sizes, got {}",
                self.clients.len(),
                sizes.len()
            )));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidData(format!("client {i} has zero data")));
        }
        for (c, &s) in self.clients.iter_mut().zip(sizes) {
            c.data_size = s;
        }
        Ok(())
    }

    /// Structural invariants; used after deserializing untrusted documents.
    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() || self.servers.is_empty() {
            return Err(Error::InvalidData("empty client or server list".into()));
        }
        let side = (self.servers.len() as f64).sqrt().ceil() as usize;
        let extent = (side - 1) as f64 * self.grid_spacing;
        if !(self.grid_spacing.is_finite() && self.grid_spacing > 0.0) || !self.grid_spacing.is_finite() {
            return Err(Error::InvalidData("grid_spacing must be positive".into()));
        }
        for (k, s) in self.servers.iter().enumerate() {
            if s.id != ServerId(k) {
                return Err(Error::InvalidData(format!(
                    "server ids must be dense, found {} at index {k}",
                    s.id
                )));
            }
            let expect = [
                (k % side) as f64 * self.grid_spacing,
                (k / side) as f64 * self.grid_spacing,
            ];
            if s.position != expect {
                return Err(Error::InvalidData(format!("server {k} is off-grid")));
            }
        }
        for (i, c) in self.clients.iter().enumerate() {
            if c.id != ClientId(i) {
                return Err(Error::InvalidData(format!(
                    "client ids must be dense, found {} at index {i}",
                    c.id
                )));
            }
            if c.data_size == 0 {
                return Err(Error::InvalidData(format!("client {i} has zero data")));
            }
            c.compute.validate()?;
            if !c.position.iter().all(|v| v.is_finite())
                || c.position.iter().any(|&v| v < 0.0 || v > extent)
            {
                return Err(Error::InvalidData(format!(
                    "client {i} lies outside the grid bounding box"
                )));
            }
            if !c.cost_factor.is_finite() || c.cost_factor < 0.0 {
                return Err(Error::InvalidData(format!(
                    "client {i} has invalid cost factor"
                )));
            }
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) || !(self.noise_psd.is_finite() && self.noise_psd > 0.0) || !(self.min_distance.is_finite() && self.min_distance > 0.0) {
            return Err(Error::InvalidData(
                "bandwidth, noise_psd, and min_distance must be positive".into(),
            ));
        }
        if self.tx_power < 0.0 || self.model_size < 0.0 {
            return Err(Error::InvalidData(
                "tx_power and model_size must be nonnegative".into(),
            ));
        }
        if !(self.gain_ref_distance.is_finite() && self.gain_ref_distance > 0.0) || self.path_loss_exponent < 0.0 {
            return Err(Error::InvalidData("invalid path-loss parameters".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, streams};

    fn rng(seed: u64) -> SimRng {
        stream_rng(seed, streams::TOPOLOGY)
    }

    #[test]
    fn grid_k9_spacing_100_gives_3x3_at_0_100_200() {
        let config = TopologyConfig {
            n_servers: 9,
            ..TopologyConfig::default()
        };
        let topo = generate_topology(&config, &mut rng(1)).unwrap();
        let coords: Vec<[f64; 2]> = topo.servers.iter().map(|s| s.position).collect();
        for v in [0.0, 100.0, 200.0] {
            for w in [0.0, 100.0, 200.0] {
                assert!(coords.contains(&[w, v]), "missing grid point ({w},{v})");
            }
        }
        assert_eq!(coords.len(), 9);
    }

    #[test]
    fn single_server_sits_at_origin() {
        let config = TopologyConfig {
            n_servers: 1,
            n_clients: 3,
            ..TopologyConfig::default()
        };
        let topo = generate_topology(&config, &mut rng(1)).unwrap();
        assert_eq!(topo.servers[0].position, [0.0, 0.0]);
        // Degenerate bounding box: all clients at the origin too.
        for c in &topo.clients {
            assert_eq!(c.position, [0.0, 0.0]);
        }
        // The distance clamp keeps the cost finite.
        let cost = topo.total_cost(ClientId(0), ServerId(0)).unwrap();
        assert!(cost.is_finite());
    }

    #[test]
    fn clients_fall_inside_bounding_box() {
        // Bounds-check oracle over the generated output.
        let config = TopologyConfig {
            n_clients: 50,
            n_servers: 9,
            ..TopologyConfig::default()
        };
        let topo = generate_topology(&config, &mut rng(7)).unwrap();
        assert_eq!(topo.clients.len(), 50);
        for c in &topo.clients {
            for &v in &c.position {
                assert!((0.0..=200.0).contains(&v), "position {v} out of [0,200]");
            }
        }
        topo.validate().unwrap();
    }

    #[test]
    fn zero_counts_rejected() {
        let mut config = TopologyConfig {
            n_clients: 0,
            ..TopologyConfig::default()
        };
        assert!(matches!(
            generate_topology(&config, &mut rng(1)),
            Err(Error::InvalidConfig { .. })
        ));
        config.n_clients = 1;
        config.n_servers = 0;
        assert!(matches!(
            generate_topology(&config, &mut rng(1)),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let config = TopologyConfig::default();
        let a = generate_topology(&config, &mut rng(42)).unwrap();
        let b = generate_topology(&config, &mut rng(42)).unwrap();
        assert_eq!(a, b);
        let json_a = serde_json::to_string(&a).unwrap();
        let json_b = serde_json::to_string(&b).unwrap();
        assert_eq!(json_a, json_b);
    }

    #[test]
    fn uplink_rate_matches_formula() {
        // B=1, p*h/N0 = 1 -> log2(2) = 1.
        let ch = ChannelParams {
            bandwidth: 1.0,
            tx_power: 1.0,
            channel_gain: 1.0,
            noise_psd: 1.0,
        };
        assert_eq!(uplink_rate(&ch), 1.0);
        // B=2, p*h/N0 = 3 -> 2*log2(4) = 4.
        let ch = ChannelParams {
            bandwidth: 2.0,
            tx_power: 3.0,
            channel_gain: 1.0,
            noise_psd: 1.0,
        };
        assert_eq!(uplink_rate(&ch), 4.0);
        // Zero received power -> rate 0.
        let ch = ChannelParams {
            bandwidth: 1.0e6,
            tx_power: 0.0,
            channel_gain: 1.0,
            noise_psd: 1.0,
        };
        assert_eq!(uplink_rate(&ch), 0.0);
    }

    #[test]
    fn computation_cost_matches_formula() {
        let p = ComputeParams {
            kappa: 2.0,
            cycles: 3.0,
            clock: 2.0,
        };
        assert_eq!(computation_cost(&p), 24.0);
        let z = ComputeParams {
            kappa: 0.0,
            cycles: 3.0,
            clock: 2.0,
        };
        assert_eq!(computation_cost(&z), 0.0);
    }

    #[test]
    fn computation_cost_random_params_match_reevaluation() {
        let mut r = rng(11);
        for _ in 0..100 {
            let p = ComputeParams {
                kappa: r.random_range(0.1..10.0),
                cycles: r.random_range(0.1..10.0),
                clock: r.random_range(0.1..10.0),
            };
            let expected = p.kappa * p.cycles * p.clock.powi(2);
            let got = computation_cost(&p);
            assert!((got - expected).abs() <= expected.abs() * f64::EPSILON * 2.0);
        }
    }

    #[test]
    fn communication_cost_divides_and_guards() {
        assert_eq!(communication_cost(10.0, 1.0), Some(10.0));
        assert_eq!(communication_cost(0.0, 5.0), Some(0.0));
        assert_eq!(communication_cost(10.0, 0.0), None);
    }

    #[test]
    fn communication_cost_times_rate_recovers_size() {
        let mut r = rng(12);
        for _ in 0..200 {
            let size = r.random_range(1.0..1.0e8);
            let rate = r.random_range(1.0..1.0e7);
            let c = communication_cost(size, rate).unwrap();
            let back = c * rate;
            assert!((back - size).abs() <= size * f64::EPSILON * 4.0);
        }
    }

    #[test]
    fn total_cost_composes_the_pipeline() {
        let config = TopologyConfig::default();
        let topo = generate_topology(&config, &mut rng(5)).unwrap();
        for client in topo.clients.iter().take(10) {
            for server in topo.servers.iter().take(3) {
                let got = total_cost(client, server.id, &topo).unwrap();
                // Independent composition of the three primitive operations.
                let dist = topo.distance(client, server.id);
                let gain = (topo.gain_ref_distance / dist).powf(topo.path_loss_exponent);
                let rate = topo.bandwidth * (1.0 + topo.tx_power * gain / topo.noise_psd).log2();
                let expected =
                    computation_cost(&client.compute) + client.cost_factor * topo.model_size / rate;
                assert!((got - expected).abs() <= expected.abs() * 1e-12);
            }
        }
    }

    #[test]
    fn theta_zero_leaves_computation_cost_only() {
        let config = TopologyConfig {
            theta_low: 0.0,
            theta_high: 0.0,
            ..TopologyConfig::default()
        };
        let topo = generate_topology(&config, &mut rng(5)).unwrap();
        let client = &topo.clients[0];
        let got = total_cost(client, ServerId(0), &topo).unwrap();
        assert_eq!(got, computation_cost(&client.compute));
    }

    #[test]
    fn total_cost_monotone_in_distance() {
        // Gain is monotone nonincreasing in distance, so cost is nondecreasing.
        let config = TopologyConfig::default();
        let mut topo = generate_topology(&config, &mut rng(9)).unwrap();
        topo.clients[0].position = [0.0, 0.0];
        let c = topo.clients[0].clone();
        let mut last = f64::NEG_INFINITY;
        let mut by_distance: Vec<(f64, f64)> = topo
            .server_ids()
            .map(|s| {
                (
                    topo.distance(&c, s),
                    topo.total_cost(ClientId(0), s).unwrap(),
                )
            })
            .collect();
        by_distance.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (_, cost) in by_distance {
            assert!(cost >= last);
            last = cost;
        }
    }

    #[test]
    fn uplink_rate_monotone_in_bandwidth_and_snr() {
        let base = ChannelParams {
            bandwidth: 1.0e6,
            tx_power: 0.5,
            channel_gain: 1e-4,
            noise_psd: 1e-6,
        };
        let r0 = uplink_rate(&base);
        let more_bw = ChannelParams {
            bandwidth: 2.0e6,
            ..base
        };
        let more_snr = ChannelParams {
            tx_power: 1.0,
            ..base
        };
        assert!(uplink_rate(&more_bw) > r0);
        assert!(uplink_rate(&more_snr) > r0);
    }
}
