//! Upper-level multi-attribute auction: quasi-linear scoring, equilibrium
//! bids (optimal quality plus an information-rent price integral), and
//! budget-constrained winner selection.
//!
//! Suppliers share a common cost function `C(Q, theta)` and differ in a
//! private cost factor `theta` drawn i.i.d. from a known distribution. The
//! equilibrium bid posts the score-maximizing quality and a price of cost
//! plus the expected rent of the marginal winning type.

pub mod quadrature;
pub mod selection;

use serde::{Deserialize, Serialize};

pub use quadrature::adaptive_simpson;
pub use selection::{select_winners_exact, select_winners_greedy, AuctionFixture, AuctionOutcome};

use crate::error::{Error, Result};
use crate::topology::ServerId;

/// Absolute tolerance of the profit integral.
pub const PROFIT_QUAD_TOL: f64 = 1e-8;
/// Maximum bisection depth of the profit integral.
pub const PROFIT_QUAD_DEPTH: u32 = 40;
/// First-order-condition residual bound for interior quality optima.
pub const FOC_TOL: f64 = 1e-9;

/// A sealed bid: price, quality vector, and resource request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub coalition: ServerId,
    pub price: f64,
    pub qualities: Vec<f64>,
    pub resource: f64,
}

impl Bid {
    pub fn validate(&self) -> Result<()> {
        if !(self.resource.is_finite() && self.resource > 0.0) || !self.resource.is_finite() {
            return Err(Error::InvalidBid {
                coalition: self.coalition,
                reason: format!("resource request must be positive, got {}", self.resource),
            });
        }
        if self.qualities.iter().any(|&q| q < 0.0 || !q.is_finite()) {
            return Err(Error::InvalidBid {
                coalition: self.coalition,
                reason: "qualities must be finite and nonnegative".into(),
            });
        }
        if !self.price.is_finite() {
            return Err(Error::InvalidBid {
                coalition: self.coalition,
                reason: "price must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Quality weights of the quasi-linear scoring rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringWeights {
    pub alpha: Vec<f64>,
}

impl ScoringWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return Err(Error::InvalidConfig {
                key: "alpha".into(),
                reason: "weights must be nonempty, finite, and nonnegative".into(),
            });
        }
        Ok(Self { alpha })
    }

    /// Scalar weight, for the single-attribute quality optimizer.
    pub fn scalar(&self) -> Result<f64> {
        if self.alpha.len() != 1 {
            return Err(Error::DimensionMismatch {
                qualities: 1,
                weights: self.alpha.len(),
            });
        }
        Ok(self.alpha[0])
    }
}

/// Quasi-linear score `Q^T alpha - P`.
pub fn score(bid: &Bid, w: &ScoringWeights) -> Result<f64> {
    if bid.qualities.len() != w.alpha.len() {
        return Err(Error::DimensionMismatch {
            qualities: bid.qualities.len(),
            weights: w.alpha.len(),
        });
    }
    let dot: f64 = bid
        .qualities
        .iter()
        .zip(&w.alpha)
        .map(|(q, a)| q * a)
        .sum();
    Ok(dot - bid.price)
}

/// Supplier profit: `P - C` when the bid wins, 0 otherwise.
pub fn supplier_utility(bid: &Bid, cost: f64, won: bool) -> f64 {
    if won {
        bid.price - cost
    } else {
        0.0
    }
}

/// Distribution family of the private cost factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostFamily {
    #[default]
    Uniform,
}

/// I.i.d. distribution of supplier cost factors on `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDistribution {
    lower: f64,
    upper: f64,
    family: CostFamily,
}

impl CostDistribution {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        let range_ok = lower.is_finite() && upper.is_finite() && lower < upper;
        if !range_ok {
            return Err(Error::InvalidConfig {
                key: "theta range".into(),
                reason: format!("need lower < upper, got [{lower}, {upper}]"),
            });
        }
        Ok(Self {
            lower,
            upper,
            family: CostFamily::Uniform,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// CDF, clamped to [0, 1] outside the support.
    pub fn cdf(&self, t: f64) -> f64 {
        match self.family {
            CostFamily::Uniform => ((t - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0),
        }
    }
}

/// Common supplier cost model with derivative access; convex and increasing
/// in quality over the search domain.
pub trait QualityCost {
    fn cost(&self, q: f64, theta: f64) -> f64;
    /// dC/dQ at `(q, theta)`.
    fn marginal_quality(&self, q: f64, theta: f64) -> f64;
    /// dC/dtheta at `(q, theta)`.
    fn marginal_theta(&self, q: f64, theta: f64) -> f64;
}

/// Polynomial cost `C(Q, theta) = theta * (linear*Q + quadratic*Q^2)`.
/// `quadratic = 0` gives the linear model used with fixed qualities;
/// `quadratic > 0` is strictly convex with an interior optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyCost {
    pub linear: f64,
    pub quadratic: f64,
}

impl QualityCost for PolyCost {
    fn cost(&self, q: f64, theta: f64) -> f64 {
        theta * (self.linear * q + self.quadratic * q * q)
    }

    fn marginal_quality(&self, q: f64, theta: f64) -> f64 {
        theta * (self.linear + 2.0 * self.quadratic * q)
    }

    fn marginal_theta(&self, q: f64, _theta: f64) -> f64 {
        self.linear * q + self.quadratic * q * q
    }
}

/// Maximize `alpha*Q - C(Q, theta)` over `[lo, hi]`.
///
/// For convex costs the derivative `alpha - dC/dQ` is nonincreasing, so the
/// optimum is found by sign inspection at the boundaries plus bisection. An
/// unbounded domain with cost growth slower than linear diverges.
pub fn optimal_quality<C: QualityCost>(
    cost: &C,
    w: &ScoringWeights,
    theta: f64,
    domain: (f64, f64),
) -> Result<f64> {
    let alpha = w.scalar()?;
    let (lo, mut hi) = domain;
    // `hi` may be infinite (unbounded search domain); NaN fails `hi > lo`.
    let domain_ok = lo.is_finite() && lo >= 0.0 && hi > lo;
    if !domain_ok {
        return Err(Error::Domain(format!(
            "quality domain [{lo}, {hi}] must satisfy 0 <= lo < hi"
        )));
    }
    let g = |q: f64| alpha - cost.marginal_quality(q, theta);

    if !hi.is_finite() {
        // Bracket by doubling until the derivative turns nonpositive.
        let mut probe = lo.max(1.0);
        loop {
            if g(probe) <= 0.0 {
                hi = probe;
                break;
            }
            probe *= 2.0;
            if probe > 1e12 {
                return Err(Error::Divergence(format!(
                    "objective still increasing at Q = {probe:.3e}"
                )));
            }
        }
    }

    if g(lo) <= 0.0 {
        return Ok(lo);
    }
    if g(hi) >= 0.0 {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let gm = g(mid);
        if gm.abs() <= FOC_TOL {
            return Ok(mid);
        }
        if gm > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= f64::EPSILON * b.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Information-rent integral of the symmetric equilibrium:
/// `integral_theta^upper C_theta(Q*(t), t) * [(1-F(t))/(1-F(theta))]^(n-1) dt`.
///
/// `cost_theta` evaluates `dC/dtheta` at the equilibrium quality of type `t`.
pub fn equilibrium_profit<G: Fn(f64) -> f64>(
    theta: f64,
    dist: &CostDistribution,
    n_bidders: usize,
    cost_theta: G,
) -> Result<f64> {
    if n_bidders < 2 {
        return Err(Error::Domain(format!(
            "equilibrium needs at least two bidders, got {n_bidders}"
        )));
    }
    if theta < dist.lower() || theta > dist.upper() {
        return Err(Error::Domain(format!(
            "theta {theta} outside support [{}, {}]",
            dist.lower(),
            dist.upper()
        )));
    }
    let denom = 1.0 - dist.cdf(theta);
    if denom <= 0.0 || theta >= dist.upper() {
        // Marginal type: empty integration interval in the limit.
        return Ok(0.0);
    }
    let exponent = (n_bidders - 1) as i32;
    let integrand = |t: f64| {
        let ratio = (1.0 - dist.cdf(t)) / denom;
        cost_theta(t) * ratio.powi(exponent)
    };
    Ok(adaptive_simpson(
        integrand,
        theta,
        dist.upper(),
        PROFIT_QUAD_TOL,
        PROFIT_QUAD_DEPTH,
    ))
}

/// How a supplier chooses its quality vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QualityStrategy {
    /// Quality pinned to an observable attribute (aggregate data size); only
    /// the price is strategic.
    Fixed(f64),
    /// Full equilibrium: quality maximizes score-minus-cost over the domain.
    Strategic { q_min: f64, q_max: f64 },
}

/// The symmetric equilibrium bid of a supplier of type `theta`.
#[allow(clippy::too_many_arguments)]
pub fn equilibrium_bid<C: QualityCost>(
    coalition: ServerId,
    cost: &C,
    strategy: QualityStrategy,
    theta: f64,
    dist: &CostDistribution,
    n_bidders: usize,
    w: &ScoringWeights,
    resource: f64,
) -> Result<Bid> {
    let q_star = match strategy {
        QualityStrategy::Fixed(q) => {
            if q < 0.0 || !q.is_finite() {
                return Err(Error::InvalidBid {
                    coalition,
                    reason: format!("fixed quality must be nonnegative, got {q}"),
                });
            }
            q
        }
        QualityStrategy::Strategic { q_min, q_max } => {
            optimal_quality(cost, w, theta, (q_min, q_max))?
        }
    };

    // Divergence and domain errors surface at the support's lower end where
    // the optimal quality is largest; probing it up front lets the integrand
    // below stay infallible.
    if let QualityStrategy::Strategic { q_min, q_max } = strategy {
        optimal_quality(cost, w, dist.lower(), (q_min, q_max))?;
    }

    let profit = equilibrium_profit(theta, dist, n_bidders, |t| {
        let q_t = match strategy {
            QualityStrategy::Fixed(q) => q,
            QualityStrategy::Strategic { q_min, q_max } => optimal_quality(cost, w, t, (q_min, q_max))
                .expect("validated at the support's lower end"),
        };
        cost.marginal_theta(q_t, t)
    })?;

    let bid = Bid {
        coalition,
        price: cost.cost(q_star, theta) + profit,
        qualities: vec![q_star],
        resource,
    };
    bid.validate()?;
    Ok(bid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn w(alpha: &[f64]) -> ScoringWeights {
        ScoringWeights::new(alpha.to_vec()).unwrap()
    }

    fn bid(price: f64, qualities: &[f64]) -> Bid {
        Bid {
            coalition: ServerId(0),
            price,
            qualities: qualities.to_vec(),
            resource: 1.0,
        }
    }

    #[test]
    fn score_is_quasi_linear() {
        assert_eq!(score(&bid(2.0, &[5.0]), &w(&[1.0])).unwrap(), 3.0);
        assert_eq!(score(&bid(0.0, &[0.0]), &w(&[1.0])).unwrap(), 0.0);
        assert_eq!(score(&bid(5.0, &[2.0, 3.0]), &w(&[1.0, 2.0])).unwrap(), 3.0);
    }

    #[test]
    fn score_rejects_dimension_mismatch() {
        assert!(matches!(
            score(&bid(0.0, &[1.0, 2.0]), &w(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn supplier_utility_branches_on_winning() {
        let b = bid(5.0, &[1.0]);
        assert_eq!(supplier_utility(&b, 3.0, true), 2.0);
        assert_eq!(supplier_utility(&b, 3.0, false), 0.0);
        assert_eq!(supplier_utility(&b, 5.0, true), 0.0);
    }

    #[test]
    fn optimal_quality_interior_quadratic() {
        // alpha = 2, C = theta Q^2, theta = 0.5: FOC 2 = Q, objective value 2.
        let cost = PolyCost {
            linear: 0.0,
            quadratic: 1.0,
        };
        let q = optimal_quality(&cost, &w(&[2.0]), 0.5, (0.0, 10.0)).unwrap();
        assert!((q - 2.0).abs() < 1e-6);
        let value = 2.0 * q - cost.cost(q, 0.5);
        assert!((value - 2.0).abs() < 1e-9);
        // FOC residual at the interior optimum.
        assert!((2.0 - cost.marginal_quality(q, 0.5)).abs() <= 1e-6);
    }

    #[test]
    fn optimal_quality_boundary_when_linear_cost_dominates() {
        // alpha = 1, C = theta Q with theta = 2 > alpha: decreasing objective.
        let cost = PolyCost {
            linear: 1.0,
            quadratic: 0.0,
        };
        let q = optimal_quality(&cost, &w(&[1.0]), 2.0, (0.0, 10.0)).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn optimal_quality_matches_grid_oracle() {
        let mut r = stream_rng(1, 90);
        for _ in 0..50 {
            let cost = PolyCost {
                linear: r.random_range(0.0..1.0),
                quadratic: r.random_range(0.05..2.0),
            };
            let theta: f64 = r.random_range(0.1..2.0);
            let alpha: f64 = r.random_range(0.1..4.0);
            let hi = 10.0;
            let q = optimal_quality(&cost, &w(&[alpha]), theta, (0.0, hi)).unwrap();
            // Grid oracle at step 1e-4.
            let mut best = (f64::NEG_INFINITY, 0.0);
            let steps = (hi / 1e-4) as usize;
            for i in 0..=steps {
                let qq = i as f64 * 1e-4;
                let v = alpha * qq - cost.cost(qq, theta);
                if v > best.0 {
                    best = (v, qq);
                }
            }
            assert!(
                (q - best.1).abs() <= 1e-4 + 1e-5,
                "bisection {q} vs grid {} (alpha={alpha}, theta={theta})",
                best.1
            );
            let v_opt = alpha * q - cost.cost(q, theta);
            assert!(v_opt >= best.0 - 1e-5);
        }
    }

    #[test]
    fn optimal_quality_diverges_on_sublinear_unbounded() {
        struct SqrtCost;
        impl QualityCost for SqrtCost {
            fn cost(&self, q: f64, theta: f64) -> f64 {
                theta * q.sqrt()
            }
            fn marginal_quality(&self, q: f64, theta: f64) -> f64 {
                0.5 * theta / q.sqrt().max(1e-12)
            }
            fn marginal_theta(&self, q: f64, _: f64) -> f64 {
                q.sqrt()
            }
        }
        let got = optimal_quality(&SqrtCost, &w(&[1.0]), 1.0, (0.0, f64::INFINITY));
        assert!(matches!(got, Err(Error::Divergence(_))));
    }

    #[test]
    fn equilibrium_profit_matches_closed_form_n2() {
        // Uniform on [0,1], C_theta = 1, n = 2: P~(theta) = (1-theta)/2.
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        let p = equilibrium_profit(0.5, &dist, 2, |_| 1.0).unwrap();
        assert!((p - 0.25).abs() < 1e-6);
        for i in 0..=10 {
            let theta = i as f64 / 10.0;
            let p = equilibrium_profit(theta, &dist, 2, |_| 1.0).unwrap();
            assert!((p - (1.0 - theta) / 2.0).abs() < 1e-6, "theta = {theta}");
        }
    }

    #[test]
    fn equilibrium_profit_matches_closed_form_n3() {
        // n = 3, theta = 0: integral of (1-t)^2 over [0,1] = 1/3.
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        let p = equilibrium_profit(0.0, &dist, 3, |_| 1.0).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_profit_zero_at_upper_bound() {
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        assert_eq!(equilibrium_profit(1.0, &dist, 2, |_| 1.0).unwrap(), 0.0);
    }

    #[test]
    fn equilibrium_profit_domain_checks() {
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        assert!(equilibrium_profit(-0.1, &dist, 2, |_| 1.0).is_err());
        assert!(equilibrium_profit(1.1, &dist, 2, |_| 1.0).is_err());
        assert!(equilibrium_profit(0.5, &dist, 1, |_| 1.0).is_err());
    }

    #[test]
    fn equilibrium_profit_nonincreasing_in_theta() {
        let dist = CostDistribution::uniform(0.2, 1.7).unwrap();
        for n in [2usize, 3, 5, 9] {
            let mut last = f64::INFINITY;
            for i in 0..=40 {
                let theta = 0.2 + 1.5 * i as f64 / 40.0;
                let p = equilibrium_profit(theta, &dist, n, |t| 1.0 + t).unwrap();
                assert!(p <= last + 1e-9, "n={n}, theta={theta}");
                last = p;
            }
        }
    }

    #[test]
    fn equilibrium_bid_marginal_type_prices_at_cost() {
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        let cost = PolyCost {
            linear: 1.0,
            quadratic: 0.0,
        };
        let b = equilibrium_bid(
            ServerId(0),
            &cost,
            QualityStrategy::Fixed(3.0),
            1.0,
            &dist,
            4,
            &w(&[2.0]),
            1.0,
        )
        .unwrap();
        assert!((b.price - cost.cost(3.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_bid_composes_cost_and_profit() {
        // Uniform [0,1], C = theta*Q with Q capped at 1, alpha = 1, n = 2,
        // theta = 0.5: Q* = 1, P* = 0.5 + 0.25 = 0.75.
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        let cost = PolyCost {
            linear: 1.0,
            quadratic: 0.0,
        };
        let b = equilibrium_bid(
            ServerId(0),
            &cost,
            QualityStrategy::Strategic {
                q_min: 0.0,
                q_max: 1.0,
            },
            0.5,
            &dist,
            2,
            &w(&[1.0]),
            1.0,
        )
        .unwrap();
        assert!((b.qualities[0] - 1.0).abs() < 1e-9);
        assert!((b.price - 0.75).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_bid_score_identity() {
        // Score of the equilibrium bid equals Q*alpha - C(Q*) - profit.
        let dist = CostDistribution::uniform(0.1, 1.3).unwrap();
        let cost = PolyCost {
            linear: 0.2,
            quadratic: 0.5,
        };
        let weights = w(&[2.5]);
        let mut r = stream_rng(2, 91);
        for _ in 0..20 {
            let theta = r.random_range(0.1..1.3);
            let b = equilibrium_bid(
                ServerId(1),
                &cost,
                QualityStrategy::Strategic {
                    q_min: 0.0,
                    q_max: 50.0,
                },
                theta,
                &dist,
                5,
                &weights,
                2.0,
            )
            .unwrap();
            let q = b.qualities[0];
            let profit = b.price - cost.cost(q, theta);
            let expected = 2.5 * q - cost.cost(q, theta) - profit;
            let got = score(&b, &weights).unwrap();
            assert!((got - expected).abs() < 1e-9);
            // Individual rationality: price covers cost at the bid quality.
            assert!(profit >= -1e-12);
        }
    }

    #[test]
    fn score_invariance_of_adjusted_bids() {
        // For any (P, Q) and Q', the bid (P + (Q'-Q)^T alpha, Q') scores the
        // same under the quasi-linear rule.
        let mut r = stream_rng(3, 92);
        for _ in 0..1000 {
            let l = r.random_range(1..=3);
            let alpha: Vec<f64> = (0..l).map(|_| r.random_range(0.0..3.0)).collect();
            let weights = w(&alpha);
            let q: Vec<f64> = (0..l).map(|_| r.random_range(0.0..10.0)).collect();
            let q2: Vec<f64> = (0..l).map(|_| r.random_range(0.0..10.0)).collect();
            let p: f64 = r.random_range(0.0..20.0);
            let shift: f64 = q2
                .iter()
                .zip(&q)
                .zip(&alpha)
                .map(|((b, a), al)| (b - a) * al)
                .sum();
            let original = bid(p, &q);
            let adjusted = bid(p + shift, &q2);
            let s0 = score(&original, &weights).unwrap();
            let s1 = score(&adjusted, &weights).unwrap();
            let scale = s0.abs().max(1.0);
            assert!((s0 - s1).abs() <= 1e-12 * scale, "{s0} vs {s1}");
        }
    }

    #[test]
    fn profit_dominance_of_adjusted_bids() {
        // Whenever (Q*-Q)^T alpha - C(Q*) + C(Q) > 0, the adjusted bid's
        // profit-if-win strictly exceeds the original's.
        let mut r = stream_rng(4, 93);
        let mut hits = 0;
        for _ in 0..1000 {
            let cost = PolyCost {
                linear: r.random_range(0.0..1.0),
                quadratic: r.random_range(0.05..1.5),
            };
            let theta: f64 = r.random_range(0.1..2.0);
            let alpha: f64 = r.random_range(0.1..4.0);
            let weights = w(&[alpha]);
            let q: f64 = r.random_range(0.0..8.0);
            let p: f64 = r.random_range(0.0..10.0);
            let q_star = optimal_quality(&cost, &weights, theta, (0.0, 20.0)).unwrap();
            let improvement = (q_star - q) * alpha - cost.cost(q_star, theta) + cost.cost(q, theta);
            if improvement > 1e-9 {
                hits += 1;
                let p2 = p + (q_star - q) * alpha;
                let profit_orig = p - cost.cost(q, theta);
                let profit_adj = p2 - cost.cost(q_star, theta);
                assert!(
                    profit_adj > profit_orig,
                    "improvement {improvement} did not raise profit"
                );
            }
        }
        assert!(hits > 100, "dominance construction rarely applicable: {hits}");
    }
}
