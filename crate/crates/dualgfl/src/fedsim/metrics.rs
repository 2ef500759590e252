//! Per-round records and the metrics log with cumulative averages and CSV
//! emission.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::error::{Error, Result};
use crate::hedonic::Partition;
use crate::topology::{ClientId, ServerId};

/// Contract summary of one winning coalition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerSummary {
    pub coalition: ServerId,
    pub price: f64,
    pub score: f64,
    pub quality: f64,
    pub resource: f64,
}

/// Everything observable about one training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub method: Method,
    /// Coalition structure of the round; `None` for coalition-free methods.
    pub partition: Option<Partition>,
    pub winners: Vec<WinnerSummary>,
    pub winning_clients: Vec<ClientId>,
    /// Total score of winning coalitions; `None` where scores do not apply.
    pub total_score: Option<f64>,
    pub avg_client_quality: f64,
    pub avg_coalition_quality: f64,
    pub avg_client_payoff: f64,
    pub avg_client_utility: f64,
    pub client_payoffs: BTreeMap<ClientId, f64>,
    pub client_utilities: BTreeMap<ClientId, f64>,
    pub test_accuracy: f64,
    pub n_winning_clients: usize,
    // Conservation diagnostics, recomputed every round.
    pub payoff_conservation_residual: f64,
    pub aggregation_weight_sum: f64,
    pub hier_flat_deviation: f64,
}

impl RoundRecord {
    /// All reported metric fields are finite.
    pub fn metrics_finite(&self) -> bool {
        let mut ok = self.avg_client_quality.is_finite()
            && self.avg_coalition_quality.is_finite()
            && self.avg_client_payoff.is_finite()
            && self.avg_client_utility.is_finite()
            && self.test_accuracy.is_finite();
        if let Some(ts) = self.total_score {
            ok &= ts.is_finite();
        }
        ok
    }
}

/// Cumulative (running-mean) counterparts of the per-round metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeRow {
    pub total_score: Option<f64>,
    pub avg_client_quality: f64,
    pub avg_coalition_quality: f64,
    pub avg_client_payoff: f64,
    pub avg_client_utility: f64,
}

/// One run's records plus its identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub method: Method,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
}

impl MetricsLog {
    /// Running means of the five headline metrics after each round.
    pub fn cumulative(&self) -> Vec<CumulativeRow> {
        let mut out = Vec::with_capacity(self.records.len());
        let mut sums = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (t, r) in self.records.iter().enumerate() {
            let n = (t + 1) as f64;
            if let Some(ts) = r.total_score {
                sums.0 += ts;
            }
            sums.1 += r.avg_client_quality;
            sums.2 += r.avg_coalition_quality;
            sums.3 += r.avg_client_payoff;
            sums.4 += r.avg_client_utility;
            out.push(CumulativeRow {
                total_score: r.total_score.map(|_| sums.0 / n),
                avg_client_quality: sums.1 / n,
                avg_coalition_quality: sums.2 / n,
                avg_client_payoff: sums.3 / n,
                avg_client_utility: sums.4 / n,
            });
        }
        out
    }

    /// Final cumulative row (the whole-run means).
    pub fn final_cumulative(&self) -> Option<CumulativeRow> {
        self.cumulative().pop()
    }

    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map(|r| r.test_accuracy).unwrap_or(0.0)
    }

    pub fn mean_winning_clients(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records
            .iter()
            .map(|r| r.n_winning_clients as f64)
            .sum::<f64>()
            / self.records.len() as f64
    }

    pub const CSV_HEADER: [&'static str; 14] = [
        "round",
        "method",
        "total_score",
        "avg_client_quality",
        "avg_coalition_quality",
        "avg_client_payoff",
        "avg_client_utility",
        "cum_total_score",
        "cum_avg_client_quality",
        "cum_avg_coalition_quality",
        "cum_avg_client_payoff",
        "cum_avg_client_utility",
        "test_accuracy",
        "n_winning_clients",
    ];

    /// One CSV row per round; metrics that do not apply stay empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(Self::CSV_HEADER)
            .map_err(csv_error)?;
        let cumulative = self.cumulative();
        for (r, c) in self.records.iter().zip(&cumulative) {
            csv.write_record([
                r.round.to_string(),
                r.method.to_string(),
                opt(r.total_score),
                num(r.avg_client_quality),
                num(r.avg_coalition_quality),
                num(r.avg_client_payoff),
                num(r.avg_client_utility),
                opt(c.total_score),
                num(c.avg_client_quality),
                num(c.avg_coalition_quality),
                num(c.avg_client_payoff),
                num(c.avg_client_utility),
                num(r.test_accuracy),
                r.n_winning_clients.to_string(),
            ])
            .map_err(csv_error)?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidData(format!("csv write failed: {e}"))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}
