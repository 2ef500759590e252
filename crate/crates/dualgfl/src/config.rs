//! Simulation configuration: a flat, commented key-value document (TOML)
//! with defaults for every key, strict unknown-key rejection, and invariant
//! validation that names the offending key.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auction::ScoringWeights;
use crate::error::{Error, Result};
use crate::topology::TopologyConfig;

/// Client-selection method of a run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Coalition game plus score-maximizing auction selection.
    #[default]
    Dualgfl,
    /// Coalition game plus score-proportional random selection.
    Dualgflstat,
    /// Uniform random client sampling, no games.
    Fedavg,
    /// Singleton bids per client, top scores win, no coalitions.
    Fedavgauc,
    /// Coalition game plus uniform random coalition selection.
    Fedavghed,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Dualgfl,
        Method::Dualgflstat,
        Method::Fedavg,
        Method::Fedavgauc,
        Method::Fedavghed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Dualgfl => "dualgfl",
            Method::Dualgflstat => "dualgflstat",
            Method::Fedavg => "fedavg",
            Method::Fedavgauc => "fedavgauc",
            Method::Fedavghed => "fedavghed",
        }
    }

    /// Methods without coalition bidding need a matched cohort size.
    pub fn needs_cohort(&self) -> bool {
        matches!(self, Method::Fedavg | Method::Fedavgauc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dualgfl" => Ok(Method::Dualgfl),
            "dualgflstat" => Ok(Method::Dualgflstat),
            "fedavg" => Ok(Method::Fedavg),
            "fedavgauc" => Ok(Method::Fedavgauc),
            "fedavghed" => Ok(Method::Fedavghed),
            other => Err(Error::InvalidConfig {
                key: "method".into(),
                reason: format!(
                    "unknown method {other:?}; expected one of dualgfl, dualgflstat, fedavg, fedavgauc, fedavghed"
                ),
            }),
        }
    }
}

/// How coalitions choose bid qualities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QualityMode {
    /// Quality pinned to the coalition's aggregate data size; only the price
    /// is strategic.
    #[default]
    Fixed,
    /// Quality chosen by the equilibrium optimizer under the convex cost.
    Strategic,
}

/// Full simulation configuration. Every field has a default, so a minimal
/// document (even an empty one) is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    // Game dimensions.
    pub n_clients: usize,
    pub n_servers: usize,
    pub winners_per_round: usize,
    pub capacity: usize,
    pub rounds: usize,
    pub seed: u64,
    pub method: Method,

    // Learner schedule.
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,

    // Preference machinery.
    pub ema_coefficient: f64,
    /// Initial payoff estimate; derived from the expected contract price
    /// under uniform winning odds when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payoff_prior: Option<f64>,

    // Auction.
    pub alpha: Vec<f64>,
    pub budget: f64,
    pub coalition_theta_low: f64,
    pub coalition_theta_high: f64,
    pub bandwidth_demand: f64,
    pub quality_mode: QualityMode,
    pub quality_cost_linear: f64,
    pub quality_cost_quadratic: f64,
    pub quality_max: f64,

    // Baseline cohort: matched to the dual-game run when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cohort_size: Option<usize>,

    // Topology and channel.
    pub grid_spacing: f64,
    pub model_size: f64,
    pub bandwidth: f64,
    pub tx_power: f64,
    pub noise_psd: f64,
    pub kappa: f64,
    pub cpu_cycles: f64,
    pub cpu_clock: f64,
    pub clock_jitter: f64,
    pub theta_low: f64,
    pub theta_high: f64,
    pub gain_ref_distance: f64,
    pub path_loss_exponent: f64,
    pub min_distance: f64,

    // Synthetic dataset.
    pub dirichlet_beta: f64,
    pub feature_dim: usize,
    pub n_classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub class_separation: f64,
    pub feature_noise: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let topo = TopologyConfig::default();
        Self {
            n_clients: 50,
            n_servers: 9,
            winners_per_round: 3,
            capacity: 10,
            rounds: 100,
            seed: 1,
            method: Method::Dualgfl,

            local_epochs: 3,
            learning_rate: 0.05,
            batch_size: 32,

            ema_coefficient: 0.5,
            // Zero prior: clients only value coalitions with realized
            // earnings, which lets winners accumulate members instead of
            // clients parking on never-selected servers whose estimate
            // would otherwise stay pinned at an optimistic prior.
            payoff_prior: Some(0.0),

            alpha: vec![3.0],
            budget: 400.0,
            coalition_theta_low: 0.9,
            coalition_theta_high: 1.1,
            bandwidth_demand: 10.0,
            quality_mode: QualityMode::Fixed,
            quality_cost_linear: 1.0,
            quality_cost_quadratic: 2.0e-4,
            quality_max: 1.0e6,

            cohort_size: None,

            grid_spacing: topo.grid_spacing,
            model_size: topo.model_size,
            bandwidth: topo.bandwidth,
            tx_power: topo.tx_power,
            noise_psd: topo.noise_psd,
            kappa: topo.kappa,
            cpu_cycles: topo.cpu_cycles,
            cpu_clock: topo.cpu_clock,
            clock_jitter: topo.clock_jitter,
            theta_low: topo.theta_low,
            theta_high: topo.theta_high,
            gain_ref_distance: topo.gain_ref_distance,
            path_loss_exponent: topo.path_loss_exponent,
            min_distance: topo.min_distance,

            dirichlet_beta: 0.6,
            feature_dim: 32,
            n_classes: 10,
            train_samples: 5000,
            test_samples: 1000,
            class_separation: 1.0,
            feature_noise: 1.0,
        }
    }
}

impl SimConfig {
    /// Parse a TOML document; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SimConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Serialize back to TOML. `from_toml_str(to_toml_string(c)) == c`.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Error::InvalidConfig {
            key: key.into(),
            reason,
        };
        if self.winners_per_round == 0 || self.winners_per_round > self.n_servers {
            return Err(bad(
                "winners_per_round",
                format!(
                    "need 1 <= winners_per_round <= n_servers ({})",
                    self.n_servers
                ),
            ));
        }
        if self.capacity * self.n_servers < self.n_clients {
            return Err(bad(
                "capacity",
                format!(
                    "capacity * n_servers = {} cannot host {} clients",
                    self.capacity * self.n_servers,
                    self.n_clients
                ),
            ));
        }
        if self.rounds == 0 {
            return Err(bad("rounds", "must be >= 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(bad("local_epochs", "must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(bad("learning_rate", "must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.ema_coefficient) {
            return Err(bad("ema_coefficient", "must lie in [0, 1]".into()));
        }
        ScoringWeights::new(self.alpha.clone())?;
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(bad("budget", "must be > 0".into()));
        }
        let coalition_theta_ok = self.coalition_theta_low.is_finite()
            && self.coalition_theta_high.is_finite()
            && self.coalition_theta_low >= 0.0
            && self.coalition_theta_low < self.coalition_theta_high;
        if !coalition_theta_ok {
            return Err(bad(
                "coalition_theta_low",
                "need 0 <= coalition_theta_low < coalition_theta_high".into(),
            ));
        }
        if !(self.bandwidth_demand.is_finite() && self.bandwidth_demand > 0.0) {
            return Err(bad("bandwidth_demand", "must be > 0".into()));
        }
        if self.quality_cost_linear < 0.0 || self.quality_cost_quadratic < 0.0 {
            return Err(bad(
                "quality_cost_linear",
                "cost coefficients must be >= 0".into(),
            ));
        }
        if self.quality_mode == QualityMode::Strategic && self.quality_cost_quadratic == 0.0 {
            return Err(bad(
                "quality_cost_quadratic",
                "strategic quality needs a strictly convex cost (> 0)".into(),
            ));
        }
        if !(self.quality_max.is_finite() && self.quality_max > 0.0) {
            return Err(bad("quality_max", "must be > 0".into()));
        }
        if let Some(c) = self.cohort_size {
            if c == 0 || c > self.n_clients {
                return Err(bad(
                    "cohort_size",
                    format!("need 1 <= cohort_size <= n_clients ({})", self.n_clients),
                ));
            }
        }
        if !(self.dirichlet_beta.is_finite() && self.dirichlet_beta > 0.0) {
            return Err(bad("dirichlet_beta", "must be > 0".into()));
        }
        if self.feature_dim == 0 {
            return Err(bad("feature_dim", "must be >= 1".into()));
        }
        if self.n_classes < 2 {
            return Err(bad("n_classes", "must be >= 2".into()));
        }
        if self.train_samples < self.n_clients {
            return Err(bad(
                "train_samples",
                format!("dataset smaller than n_clients ({})", self.n_clients),
            ));
        }
        if self.test_samples == 0 {
            return Err(bad("test_samples", "must be >= 1".into()));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) || !(self.feature_noise.is_finite() && self.feature_noise > 0.0) {
            return Err(bad(
                "class_separation",
                "need class_separation >= 0 and feature_noise > 0".into(),
            ));
        }
        self.topology_config().validate()?;
        Ok(())
    }

    /// The topology slice of this configuration. Data sizes start from the
    /// placeholder range and are overwritten by the dataset partition.
    pub fn topology_config(&self) -> TopologyConfig {
        TopologyConfig {
            n_clients: self.n_clients,
            n_servers: self.n_servers,
            grid_spacing: self.grid_spacing,
            model_size: self.model_size,
            bandwidth: self.bandwidth,
            tx_power: self.tx_power,
            noise_psd: self.noise_psd,
            kappa: self.kappa,
            cpu_cycles: self.cpu_cycles,
            cpu_clock: self.cpu_clock,
            clock_jitter: self.clock_jitter,
            theta_low: self.theta_low,
            theta_high: self.theta_high,
            data_size_min: 1,
            data_size_max: (self.train_samples / self.n_clients).max(1) as u64,
            gain_ref_distance: self.gain_ref_distance,
            path_loss_exponent: self.path_loss_exponent,
            min_distance: self.min_distance,
        }
    }
}

/// Load and validate a configuration document from disk.
pub fn load_config<P: AsRef<Path>>(path: P) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        Error::ConfigParse(format!("cannot read {}: {e}", path.as_ref().display()))
    })?;
    SimConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = SimConfig::from_toml_str("").unwrap();
        assert_eq!(c, SimConfig::default());
        let c = SimConfig::from_toml_str("seed = 99\nrounds = 7\n").unwrap();
        assert_eq!(c.seed, 99);
        assert_eq!(c.rounds, 7);
        assert_eq!(c.n_clients, 50);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = SimConfig::from_toml_str("no_such_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("no_such_key"), "{err}");
    }

    #[test]
    fn winners_exceeding_servers_rejected_by_name() {
        let err = SimConfig::from_toml_str("n_servers = 4\nwinners_per_round = 5\n").unwrap_err();
        match err {
            Error::InvalidConfig { key, .. } => assert_eq!(key, "winners_per_round"),
            other => panic!("expected InvalidConfig, got {other}"),
        }
    }

    #[test]
    fn capacity_shortfall_rejected() {
        let err =
            SimConfig::from_toml_str("n_clients = 100\nn_servers = 4\ncapacity = 10\n").unwrap_err();
        match err {
            Error::InvalidConfig { key, .. } => assert_eq!(key, "capacity"),
            other => panic!("expected InvalidConfig, got {other}"),
        }
    }

    #[test]
    fn toml_round_trip_is_identity() {
        let c = SimConfig {
            seed: 1234,
            method: Method::Fedavghed,
            alpha: vec![1.5],
            payoff_prior: Some(42.0),
            cohort_size: Some(17),
            ..SimConfig::default()
        };
        let text = c.to_toml_string().unwrap();
        let back = SimConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn load_config_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sim.toml");
        std::fs::write(&path, "# smoke config\nrounds = 3\nseed = 5\n").unwrap();
        let c = load_config(&path).unwrap();
        assert_eq!(c.rounds, 3);
        assert!(load_config(dir.path().join("missing.toml")).is_err());
    }
}
