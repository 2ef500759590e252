//! Built-in lightweight learner: multinomial logistic regression on a
//! synthetic Gaussian-mixture classification task, plus the Dirichlet
//! partitioner that shards the training set across clients.
//!
//! The learner sits behind plain functions over a flat parameter vector so a
//! real dataset/model pair can replace it without touching the round loop.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Synthetic classification task with a held-out test split.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub feature_dim: usize,
    pub n_classes: usize,
    pub train_features: Vec<f64>,
    pub train_labels: Vec<usize>,
    pub test_features: Vec<f64>,
    pub test_labels: Vec<usize>,
}

impl SyntheticTask {
    /// Gaussian mixture: one spherical cluster per class, cluster centers at
    /// `N(0, separation^2)` per coordinate, samples at `center + N(0, noise^2)`.
    /// Labels are balanced round-robin.
    pub fn generate(
        feature_dim: usize,
        n_classes: usize,
        n_train: usize,
        n_test: usize,
        separation: f64,
        noise: f64,
        rng: &mut SimRng,
    ) -> Self {
        let normal = |rng: &mut SimRng| -> f64 { StandardNormal.sample(rng) };
        let centers: Vec<f64> = (0..n_classes * feature_dim)
            .map(|_| separation * normal(rng))
            .collect();

        let sample = |rng: &mut SimRng, features: &mut Vec<f64>, labels: &mut Vec<usize>, n: usize| {
            for i in 0..n {
                let class = i % n_classes;
                labels.push(class);
                for j in 0..feature_dim {
                    features.push(centers[class * feature_dim + j] + noise * normal(rng));
                }
            }
        };

        let mut train_features = Vec::with_capacity(n_train * feature_dim);
        let mut train_labels = Vec::with_capacity(n_train);
        sample(rng, &mut train_features, &mut train_labels, n_train);
        let mut test_features = Vec::with_capacity(n_test * feature_dim);
        let mut test_labels = Vec::with_capacity(n_test);
        sample(rng, &mut test_features, &mut test_labels, n_test);

        Self {
            feature_dim,
            n_classes,
            train_features,
            train_labels,
            test_features,
            test_labels,
        }
    }

    pub fn n_train(&self) -> usize {
        self.train_labels.len()
    }

    pub fn train_feature(&self, i: usize) -> &[f64] {
        &self.train_features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Parameter count of the matching logistic model.
    pub fn param_len(&self) -> usize {
        self.n_classes * (self.feature_dim + 1)
    }
}

/// Shard sample indices across clients with Dirichlet label heterogeneity:
/// per class, client proportions are drawn from `Dir(beta)` and converted to
/// counts by largest remainder. Regenerates (bounded) until every client
/// holds at least one sample, then falls back to moving singles from the
/// largest holder.
pub fn dirichlet_partition(
    labels: &[usize],
    n_classes: usize,
    n_clients: usize,
    beta: f64,
    rng: &mut SimRng,
) -> Result<Vec<Vec<usize>>> {
    if n_clients == 0 {
        return Err(Error::InvalidConfig {
            key: "n_clients".into(),
            reason: "must be >= 1".into(),
        });
    }
    if labels.len() < n_clients {
        return Err(Error::InvalidConfig {
            key: "train_samples".into(),
            reason: format!(
                "{} samples cannot cover {} clients",
                labels.len(),
                n_clients
            ),
        });
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidConfig {
            key: "dirichlet_beta".into(),
            reason: "must be > 0".into(),
        });
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        by_class[label].push(i);
    }

    const MAX_ATTEMPTS: usize = 100;
    let gamma = Gamma::new(beta, 1.0).expect("beta > 0");
    let mut assignment: Vec<Vec<usize>> = Vec::new();
    for _ in 0..MAX_ATTEMPTS {
        assignment = vec![Vec::new(); n_clients];
        for class_samples in &by_class {
            if class_samples.is_empty() {
                continue;
            }
            let proportions = dirichlet_draw(&gamma, n_clients, rng);
            let counts = largest_remainder(&proportions, class_samples.len());
            let mut cursor = 0;
            for (client, &count) in counts.iter().enumerate() {
                assignment[client].extend_from_slice(&class_samples[cursor..cursor + count]);
                cursor += count;
            }
        }
        if assignment.iter().all(|a| !a.is_empty()) {
            return Ok(assignment);
        }
    }

    // Deterministic fixup: hand one sample from the largest holder to each
    // empty client.
    for client in 0..n_clients {
        if !assignment[client].is_empty() {
            continue;
        }
        let donor = (0..n_clients)
            .max_by_key(|&c| assignment[c].len())
            .expect("clients exist");
        if assignment[donor].len() <= 1 {
            return Err(Error::InvalidConfig {
                key: "train_samples".into(),
                reason: "not enough samples to give every client one".into(),
            });
        }
        let moved = assignment[donor].pop().expect("donor nonempty");
        assignment[client].push(moved);
    }
    Ok(assignment)
}

/// One Dirichlet draw via normalized Gamma variates.
fn dirichlet_draw(gamma: &Gamma<f64>, n: usize, rng: &mut SimRng) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng).max(1e-300)).collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

/// Convert proportions to integer counts summing to `total`: floor each
/// share, then hand the remainder to the largest fractional parts (ties by
/// lower index).
fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(proportions.len());
    let mut fractions: Vec<(f64, usize)> = Vec::with_capacity(proportions.len());
    let mut assigned = 0usize;
    for (i, &p) in proportions.iter().enumerate() {
        let exact = p * total as f64;
        let base = exact.floor() as usize;
        counts.push(base);
        assigned += base;
        fractions.push((exact - base as f64, i));
    }
    fractions.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    for &(_, i) in fractions.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Zero-initialized parameters for `n_classes` x (`feature_dim` + bias).
pub fn zero_params(n_classes: usize, feature_dim: usize) -> Vec<f64> {
    vec![0.0; n_classes * (feature_dim + 1)]
}

fn logits(params: &[f64], x: &[f64], n_classes: usize, dim: usize, out: &mut [f64]) {
    for (c, slot) in out.iter_mut().enumerate().take(n_classes) {
        let row = &params[c * (dim + 1)..(c + 1) * (dim + 1)];
        let mut z = row[dim]; // bias
        for j in 0..dim {
            z += row[j] * x[j];
        }
        *slot = z;
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Mini-batch SGD on the multinomial cross-entropy over the client's
/// samples. Returns the updated parameters; `None` signals an empty client
/// that must be skipped.
pub fn local_train(
    params: &[f64],
    task: &SyntheticTask,
    samples: &[usize],
    epochs: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut SimRng,
) -> Option<Vec<f64>> {
    if samples.is_empty() {
        return None;
    }
    let dim = task.feature_dim;
    let n_classes = task.n_classes;
    let mut params = params.to_vec();
    let mut order: Vec<usize> = samples.to_vec();
    let mut probs = vec![0.0; n_classes];
    let mut grad = vec![0.0; params.len()];
    let batch_size = batch_size.max(1);

    for _ in 0..epochs {
        order.shuffle(rng);
        for batch in order.chunks(batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let x = task.train_feature(i);
                let y = task.train_labels[i];
                logits(&params, x, n_classes, dim, &mut probs);
                softmax_in_place(&mut probs);
                for c in 0..n_classes {
                    let delta = probs[c] - if c == y { 1.0 } else { 0.0 };
                    let row = &mut grad[c * (dim + 1)..(c + 1) * (dim + 1)];
                    for j in 0..dim {
                        row[j] += delta * x[j];
                    }
                    row[dim] += delta;
                }
            }
            let scale = lr / batch.len() as f64;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= scale * g;
            }
        }
    }
    Some(params)
}

/// Mean cross-entropy loss over the given training samples.
pub fn training_loss(params: &[f64], task: &SyntheticTask, samples: &[usize]) -> f64 {
    let mut probs = vec![0.0; task.n_classes];
    let mut total = 0.0;
    for &i in samples {
        logits(params, task.train_feature(i), task.n_classes, task.feature_dim, &mut probs);
        softmax_in_place(&mut probs);
        total -= probs[task.train_labels[i]].max(1e-300).ln();
    }
    total / samples.len().max(1) as f64
}

/// Argmax accuracy on the test split.
pub fn test_accuracy(params: &[f64], task: &SyntheticTask) -> f64 {
    let dim = task.feature_dim;
    let n = task.test_labels.len();
    let mut probs = vec![0.0; task.n_classes];
    let mut correct = 0usize;
    for i in 0..n {
        let x = &task.test_features[i * dim..(i + 1) * dim];
        logits(params, x, task.n_classes, dim, &mut probs);
        let pred = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(c, _)| c)
            .unwrap_or(0);
        if pred == task.test_labels[i] {
            correct += 1;
        }
    }
    correct as f64 / n.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, streams};

    fn task(seed: u64) -> SyntheticTask {
        SyntheticTask::generate(8, 4, 400, 100, 1.5, 0.8, &mut stream_rng(seed, streams::DATASET))
    }

    #[test]
    fn partition_single_client_takes_everything() {
        let t = task(1);
        let parts =
            dirichlet_partition(&t.train_labels, 4, 1, 0.5, &mut stream_rng(1, 70)).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].len(), t.n_train());
    }

    #[test]
    fn partition_counts_close_under_normalized_shares() {
        // Per-class proportions sum to 1, so counts sum to class totals and
        // every sample lands exactly once.
        let t = task(2);
        for beta in [0.1, 1.0, 10.0] {
            let parts =
                dirichlet_partition(&t.train_labels, 4, 7, beta, &mut stream_rng(3, 71)).unwrap();
            let total: usize = parts.iter().map(|p| p.len()).sum();
            assert_eq!(total, t.n_train());
            let mut seen = vec![false; t.n_train()];
            for p in &parts {
                assert!(!p.is_empty(), "empty client at beta {beta}");
                for &i in p {
                    assert!(!seen[i], "sample {i} assigned twice");
                    seen[i] = true;
                }
            }
        }
    }

    #[test]
    fn smaller_beta_is_more_skewed() {
        // Across seeds, the variance of per-class client proportions is
        // strictly higher at beta = 0.1 than at beta = 10.
        let t = task(3);
        let n_clients = 10;
        let mean_var = |beta: f64| -> f64 {
            let mut acc = 0.0;
            for seed in 0..20u64 {
                let parts = dirichlet_partition(
                    &t.train_labels,
                    4,
                    n_clients,
                    beta,
                    &mut stream_rng(100 + seed, 72),
                )
                .unwrap();
                // Class-0 proportion per client.
                let class0: Vec<f64> = parts
                    .iter()
                    .map(|p| {
                        p.iter().filter(|&&i| t.train_labels[i] == 0).count() as f64
                    })
                    .collect();
                let total: f64 = class0.iter().sum();
                let shares: Vec<f64> = class0.iter().map(|c| c / total).collect();
                let mean = 1.0 / n_clients as f64;
                acc += shares.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
                    / n_clients as f64;
            }
            acc / 20.0
        };
        assert!(mean_var(0.1) > mean_var(10.0));
    }

    #[test]
    fn partition_rejects_undersized_datasets() {
        let labels = vec![0usize; 3];
        assert!(matches!(
            dirichlet_partition(&labels, 1, 5, 0.5, &mut stream_rng(1, 73)),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let t = task(4);
        let params = zero_params(4, 8);
        let samples: Vec<usize> = (0..50).collect();
        let got = local_train(&params, &t, &samples, 3, 0.0, 16, &mut stream_rng(1, 74)).unwrap();
        assert_eq!(got, params);
    }

    #[test]
    fn zero_epochs_keep_parameters() {
        let t = task(5);
        let params = zero_params(4, 8);
        let samples: Vec<usize> = (0..50).collect();
        let got = local_train(&params, &t, &samples, 0, 0.1, 16, &mut stream_rng(1, 75)).unwrap();
        assert_eq!(got, params);
    }

    #[test]
    fn empty_client_signals_skip() {
        let t = task(6);
        let params = zero_params(4, 8);
        assert!(local_train(&params, &t, &[], 1, 0.1, 16, &mut stream_rng(1, 76)).is_none());
    }

    #[test]
    fn full_batch_loss_nonincreasing() {
        // Convex objective, small step, full batch: the loss trace cannot
        // rise between epochs.
        let t = task(7);
        let samples: Vec<usize> = (0..200).collect();
        let mut params = zero_params(4, 8);
        let mut last = training_loss(&params, &t, &samples);
        for epoch in 0..5 {
            params = local_train(
                &params,
                &t,
                &samples,
                1,
                0.01,
                samples.len(),
                &mut stream_rng(10 + epoch, 77),
            )
            .unwrap();
            let loss = training_loss(&params, &t, &samples);
            assert!(
                loss <= last + 1e-12,
                "epoch {epoch}: loss rose {last} -> {loss}"
            );
            last = loss;
        }
    }

    #[test]
    fn training_improves_test_accuracy() {
        let t = task(8);
        let samples: Vec<usize> = (0..t.n_train()).collect();
        let params0 = zero_params(4, 8);
        let base = test_accuracy(&params0, &t);
        let trained = local_train(&params0, &t, &samples, 5, 0.1, 32, &mut stream_rng(2, 78))
            .unwrap();
        let acc = test_accuracy(&trained, &t);
        assert!(acc > base, "accuracy {acc} did not beat baseline {base}");
        assert!(acc > 0.5, "separable mixture should be learnable, got {acc}");
    }
}
