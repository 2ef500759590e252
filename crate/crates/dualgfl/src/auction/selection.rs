//! Winner selection: the greedy score-to-resource heuristic and an exact
//! enumeration solver used as its oracle.
//!
//! Both maximize total score subject to at most `m` winners and a resource
//! budget. The cardinality constraint is `<= m` rather than `= m`: a tight
//! budget may admit fewer winners, which the outcome reports as a shortfall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::ServerId;

use super::{score, Bid, ScoringWeights};

/// Enumeration guard of the exact solver.
pub const EXACT_MAX_BIDS: usize = 20;

/// Result of one auction: winner list, their own bid scores (the fulfilled
/// score each contracted), and the totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub winners: Vec<ServerId>,
    pub assigned_scores: Vec<f64>,
    pub total_score: f64,
    pub spent_resource: f64,
}

impl AuctionOutcome {
    pub fn empty() -> Self {
        Self {
            winners: Vec::new(),
            assigned_scores: Vec::new(),
            total_score: 0.0,
            spent_resource: 0.0,
        }
    }

    pub fn n_winners(&self) -> usize {
        self.winners.len()
    }

    /// True when fewer than the requested `m` winners fit the budget.
    pub fn is_short(&self, m: usize) -> bool {
        self.winners.len() < m
    }

    /// Both selection constraints, checked against the originating instance.
    pub fn check_feasible(&self, m: usize, e_max: f64) -> bool {
        self.winners.len() <= m && self.spent_resource <= e_max + 1e-9
    }
}

fn validated_scores(bids: &[Bid], w: &ScoringWeights) -> Result<Vec<f64>> {
    bids.iter()
        .map(|b| {
            b.validate()?;
            score(b, w)
        })
        .collect()
}

/// Greedy selection by descending score-to-resource ratio (ties: lower
/// resource, then lower coalition id). Admits a bid while fewer than `m`
/// winners are seated and the budget still covers it; negative-score bids
/// are skipped outright.
pub fn select_winners_greedy(
    bids: &[Bid],
    w: &ScoringWeights,
    m: usize,
    e_max: f64,
) -> Result<AuctionOutcome> {
    let scores = validated_scores(bids, w)?;

    let mut order: Vec<usize> = (0..bids.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scores[a] / bids[a].resource;
        let rb = scores[b] / bids[b].resource;
        rb.partial_cmp(&ra)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                bids[a]
                    .resource
                    .partial_cmp(&bids[b].resource)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(bids[a].coalition.cmp(&bids[b].coalition))
    });

    let mut outcome = AuctionOutcome::empty();
    for &i in &order {
        if outcome.winners.len() >= m {
            break;
        }
        if scores[i] < 0.0 {
            continue;
        }
        if outcome.spent_resource + bids[i].resource <= e_max {
            outcome.winners.push(bids[i].coalition);
            outcome.assigned_scores.push(scores[i]);
            outcome.total_score += scores[i];
            outcome.spent_resource += bids[i].resource;
        }
    }
    Ok(outcome)
}

/// Exact maximizer of total score under the cardinality and budget
/// constraints, by depth-first enumeration with an optimistic-score bound.
/// Ties resolve toward more winners, then the lexicographically smallest
/// winner set. Guarded to `EXACT_MAX_BIDS` bids.
pub fn select_winners_exact(
    bids: &[Bid],
    w: &ScoringWeights,
    m: usize,
    e_max: f64,
) -> Result<AuctionOutcome> {
    if bids.len() > EXACT_MAX_BIDS {
        return Err(Error::EnumerationGuard(format!(
            "{} bids exceed the exact-solver guard of {EXACT_MAX_BIDS}",
            bids.len()
        )));
    }
    let all_scores = validated_scores(bids, w)?;

    // Negative scores can only lower the objective under the <= m
    // cardinality rule; drop them before enumerating.
    let mut candidates: Vec<usize> = (0..bids.len()).filter(|&i| all_scores[i] >= 0.0).collect();
    candidates.sort_by(|&a, &b| bids[a].coalition.cmp(&bids[b].coalition));

    // Optimistic bound: the best `m` remaining scores, budget ignored.
    let mut suffix_best: Vec<f64> = vec![0.0; candidates.len() + 1];
    for pos in (0..candidates.len()).rev() {
        let mut rest: Vec<f64> = candidates[pos..].iter().map(|&i| all_scores[i]).collect();
        rest.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        suffix_best[pos] = rest.iter().take(m).sum();
    }

    struct Search<'a> {
        bids: &'a [Bid],
        scores: &'a [f64],
        candidates: &'a [usize],
        suffix_best: &'a [f64],
        m: usize,
        e_max: f64,
        // Best (total, candidate positions). Positions run in ascending
        // coalition-id order, so comparing them lexicographically compares
        // the winner id sets lexicographically.
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn better(&self, total: f64, chosen: &[usize]) -> bool {
            match &self.best {
                None => true,
                Some((bt, bc)) => {
                    if total > bt + 1e-12 {
                        return true;
                    }
                    if total < bt - 1e-12 {
                        return false;
                    }
                    // Equal objective: prefer more winners (the cardinality
                    // target is an equality at heart), then the
                    // lexicographically smaller winner set.
                    if chosen.len() != bc.len() {
                        return chosen.len() > bc.len();
                    }
                    chosen < bc.as_slice()
                }
            }
        }

        fn dfs(&mut self, pos: usize, total: f64, spent: f64, chosen: &mut Vec<usize>) {
            if let Some((bt, _)) = &self.best {
                if total + self.suffix_best[pos] < bt - 1e-12 {
                    return;
                }
            }
            if pos == self.candidates.len() {
                if self.better(total, chosen) {
                    self.best = Some((total, chosen.clone()));
                }
                return;
            }
            let i = self.candidates[pos];
            // Include, when feasible.
            if chosen.len() < self.m && spent + self.bids[i].resource <= self.e_max {
                chosen.push(pos);
                self.dfs(
                    pos + 1,
                    total + self.scores[i],
                    spent + self.bids[i].resource,
                    chosen,
                );
                chosen.pop();
            }
            // Exclude.
            self.dfs(pos + 1, total, spent, chosen);
        }
    }

    let mut search = Search {
        bids,
        scores: &all_scores,
        candidates: &candidates,
        suffix_best: &suffix_best,
        m,
        e_max,
        best: None,
    };
    search.dfs(0, 0.0, 0.0, &mut Vec::new());

    let (_, chosen) = search.best.unwrap_or((0.0, Vec::new()));
    let mut outcome = AuctionOutcome::empty();
    for pos in chosen {
        let i = candidates[pos];
        outcome.winners.push(bids[i].coalition);
        outcome.assigned_scores.push(all_scores[i]);
        outcome.total_score += all_scores[i];
        outcome.spent_resource += bids[i].resource;
    }
    Ok(outcome)
}

/// Serializable auction instance, shared between the greedy and exact solver
/// tests and external tooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionFixture {
    pub m: usize,
    pub e_max: f64,
    pub alpha: Vec<f64>,
    pub bids: Vec<Bid>,
}

impl AuctionFixture {
    pub fn from_json(text: &str) -> Result<Self> {
        let fixture: AuctionFixture =
            serde_json::from_str(text).map_err(|e| Error::InvalidData(e.to_string()))?;
        if !fixture.e_max.is_finite() || fixture.e_max < 0.0 {
            return Err(Error::InvalidData("e_max must be finite and >= 0".into()));
        }
        for b in &fixture.bids {
            b.validate()?;
        }
        ScoringWeights::new(fixture.alpha.clone())?;
        Ok(fixture)
    }

    pub fn weights(&self) -> Result<ScoringWeights> {
        ScoringWeights::new(self.alpha.clone())
    }

    pub fn run_greedy(&self) -> Result<AuctionOutcome> {
        select_winners_greedy(&self.bids, &self.weights()?, self.m, self.e_max)
    }

    pub fn run_exact(&self) -> Result<AuctionOutcome> {
        select_winners_exact(&self.bids, &self.weights()?, self.m, self.e_max)
    }
}
