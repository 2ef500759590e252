//! Experiment execution: (method, seed, ablation) sweeps, per-run CSVs with
//! config sidecars, a cross-seed summary table, and the capacity ablation
//! table with max-normalized columns.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Method, SimConfig};
use crate::error::{Error, Result};
use crate::fedsim::{run_simulation, MetricsLog};

/// One sweep axis. Only the coalition capacity is swept today.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AblationAxis {
    Capacity(Vec<usize>),
}

/// Parse an ablation argument of the form `capacity=6,8,10,15`.
pub fn parse_ablation(text: &str) -> Result<AblationAxis> {
    let (axis, values) = text.split_once('=').ok_or_else(|| Error::InvalidConfig {
        key: "ablation".into(),
        reason: format!("expected axis=v1,v2,..., got {text:?}"),
    })?;
    if axis.trim() != "capacity" {
        return Err(Error::InvalidConfig {
            key: "ablation".into(),
            reason: format!("unknown ablation axis {axis:?}; only capacity is supported"),
        });
    }
    let parsed: Vec<usize> = values
        .split(',')
        .map(|v| {
            v.trim().parse::<usize>().map_err(|_| Error::InvalidConfig {
                key: "ablation".into(),
                reason: format!("capacity value {v:?} is not a positive integer"),
            })
        })
        .collect::<Result<_>>()?;
    if parsed.is_empty() || parsed.contains(&0) {
        return Err(Error::InvalidConfig {
            key: "ablation".into(),
            reason: "capacity values must be positive".into(),
        });
    }
    Ok(AblationAxis::Capacity(parsed))
}

/// A full experiment: base configuration, seed list, method list, output
/// directory, and an optional ablation axis.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    pub ablation: Option<AblationAxis>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig {
                key: "seed".into(),
                reason: "at least one seed is required".into(),
            });
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig {
                key: "method".into(),
                reason: "at least one method is required".into(),
            });
        }
        self.base.validate()
    }
}

/// Paths produced by one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub run_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
    pub ablation_file: Option<PathBuf>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    seed: u64,
    config: &'a SimConfig,
}

/// Final whole-run means of one (method, seed, capacity) run.
struct RunSummary {
    method: Method,
    capacity: usize,
    total_score: Option<f64>,
    avg_client_quality: f64,
    avg_coalition_quality: f64,
    avg_client_payoff: f64,
    avg_client_utility: f64,
    test_accuracy: f64,
    mean_winning_clients: f64,
}

fn summarize(log: &MetricsLog, capacity: usize) -> RunSummary {
    let cum = log.final_cumulative().expect("runs have at least one round");
    RunSummary {
        method: log.method,
        capacity,
        total_score: cum.total_score,
        avg_client_quality: cum.avg_client_quality,
        avg_coalition_quality: cum.avg_coalition_quality,
        avg_client_payoff: cum.avg_client_payoff,
        avg_client_utility: cum.avg_client_utility,
        test_accuracy: log.final_accuracy(),
        mean_winning_clients: log.mean_winning_clients(),
    }
}

/// Execute the sweep: one CSV (plus JSON config sidecar) per run, a summary
/// CSV of per-method means across seeds, and, when an ablation axis is set,
/// a per-capacity table with raw and max-normalized columns.
///
/// Runs are deterministic: repeating the same spec reproduces every output
/// file byte for byte. Coalition-free methods are matched to the dual-game
/// run's mean winning-client count on the same seed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out_dir)?;

    let capacities: Vec<Option<usize>> = match &spec.ablation {
        Some(AblationAxis::Capacity(values)) => values.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    let sweep = spec.ablation.is_some();

    let mut run_files = Vec::new();
    let mut summaries: Vec<RunSummary> = Vec::new();

    for capacity in &capacities {
        for &seed in &spec.seeds {
            let mut cfg = spec.base.clone();
            cfg.seed = seed;
            if let Some(c) = capacity {
                cfg.capacity = *c;
            }
            cfg.validate()?;

            // The dual-game run doubles as the cohort reference for the
            // coalition-free baselines; run it once per (capacity, seed).
            let needs_reference = spec
                .methods
                .iter()
                .any(|m| *m == Method::Dualgfl || m.needs_cohort());
            let reference: Option<MetricsLog> = if needs_reference {
                let mut dual = cfg.clone();
                dual.method = Method::Dualgfl;
                Some(run_simulation(&dual)?)
            } else {
                None
            };

            for &method in &spec.methods {
                let mut run_cfg = cfg.clone();
                run_cfg.method = method;
                if method.needs_cohort() && run_cfg.cohort_size.is_none() {
                    let mean = reference
                        .as_ref()
                        .expect("reference run exists for cohort methods")
                        .mean_winning_clients();
                    run_cfg.cohort_size =
                        Some((mean.round() as usize).clamp(1, run_cfg.n_clients));
                }
                let log = match (method, &reference) {
                    (Method::Dualgfl, Some(r)) => r.clone(),
                    _ => run_simulation(&run_cfg)?,
                };

                let stem = match capacity {
                    Some(c) => format!("run_{method}_seed{seed}_cap{c}"),
                    None => format!("run_{method}_seed{seed}"),
                };
                let csv_path = spec.out_dir.join(format!("{stem}.csv"));
                let file = std::fs::File::create(&csv_path)?;
                log.write_csv(file)?;
                let sidecar = Sidecar {
                    seed,
                    config: &run_cfg,
                };
                let json = serde_json::to_string_pretty(&sidecar)
                    .map_err(|e| Error::InvalidData(e.to_string()))?;
                std::fs::write(spec.out_dir.join(format!("{stem}.json")), json + "\n")?;
                run_files.push(csv_path);

                summaries.push(summarize(&log, run_cfg.capacity));
            }
        }
    }

    let summary_file = spec.out_dir.join("summary.csv");
    write_summary(&summary_file, &spec.methods, &capacities, &summaries, sweep)?;

    let ablation_file = if sweep {
        let path = spec.out_dir.join("ablation.csv");
        write_ablation(&path, &spec.methods, &capacities, &summaries)?;
        Some(path)
    } else {
        None
    };

    Ok(ExperimentOutput {
        run_files,
        summary_file,
        ablation_file,
    })
}

/// Seed-mean of every metric for one (method, capacity) cell.
struct CellMean {
    total_score: Option<f64>,
    avg_client_quality: f64,
    avg_coalition_quality: f64,
    avg_client_payoff: f64,
    avg_client_utility: f64,
    test_accuracy: f64,
    mean_winning_clients: f64,
    n_runs: usize,
}

fn cell_mean(summaries: &[RunSummary], method: Method, capacity: Option<usize>) -> CellMean {
    let rows: Vec<&RunSummary> = summaries
        .iter()
        .filter(|s| s.method == method && capacity.map(|c| s.capacity == c).unwrap_or(true))
        .collect();
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&RunSummary) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
    let total_score = if rows.iter().all(|r| r.total_score.is_some()) && !rows.is_empty() {
        Some(rows.iter().map(|r| r.total_score.unwrap()).sum::<f64>() / n)
    } else {
        None
    };
    CellMean {
        total_score,
        avg_client_quality: mean(&|r| r.avg_client_quality),
        avg_coalition_quality: mean(&|r| r.avg_coalition_quality),
        avg_client_payoff: mean(&|r| r.avg_client_payoff),
        avg_client_utility: mean(&|r| r.avg_client_utility),
        test_accuracy: mean(&|r| r.test_accuracy),
        mean_winning_clients: mean(&|r| r.mean_winning_clients),
        n_runs: rows.len(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn write_summary(
    path: &Path,
    methods: &[Method],
    capacities: &[Option<usize>],
    summaries: &[RunSummary],
    sweep: bool,
) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    writeln!(
        out,
        "method,capacity,n_runs,total_score,avg_client_quality,avg_coalition_quality,\
         avg_client_payoff,avg_client_utility,test_accuracy,mean_winning_clients"
    )?;
    for capacity in capacities {
        for &method in methods {
            let cell = cell_mean(summaries, method, *capacity);
            if cell.n_runs == 0 {
                continue;
            }
            let cap_col = match capacity {
                Some(c) => c.to_string(),
                None if sweep => String::new(),
                None => summaries
                    .iter()
                    .find(|s| s.method == method)
                    .map(|s| s.capacity.to_string())
                    .unwrap_or_default(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                method,
                cap_col,
                cell.n_runs,
                fmt_opt(cell.total_score),
                cell.avg_client_quality,
                cell.avg_coalition_quality,
                cell.avg_client_payoff,
                cell.avg_client_utility,
                cell.test_accuracy,
                cell.mean_winning_clients,
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-capacity seed-means plus max-normalized columns (normalization is
/// per method across the capacity axis, mirroring the normalized ablation
/// plots).
fn write_ablation(
    path: &Path,
    methods: &[Method],
    capacities: &[Option<usize>],
    summaries: &[RunSummary],
) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    writeln!(
        out,
        "method,capacity,total_score,avg_client_quality,avg_coalition_quality,\
         avg_client_utility,norm_total_score,norm_avg_client_quality,\
         norm_avg_coalition_quality,norm_avg_client_utility"
    )?;
    for &method in methods {
        let cells: BTreeMap<usize, CellMean> = capacities
            .iter()
            .filter_map(|c| c.map(|cap| (cap, cell_mean(summaries, method, Some(cap)))))
            .filter(|(_, cell)| cell.n_runs > 0)
            .collect();
        if cells.is_empty() {
            continue;
        }
        let max_of = |f: &dyn Fn(&CellMean) -> f64| {
            cells
                .values()
                .map(f)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let max_score = cells
            .values()
            .filter_map(|c| c.total_score)
            .fold(f64::NEG_INFINITY, f64::max);
        let max_cq = max_of(&|c| c.avg_client_quality);
        let max_coq = max_of(&|c| c.avg_coalition_quality);
        let max_u = max_of(&|c| c.avg_client_utility);
        let norm = |v: f64, max: f64| if max > 0.0 { v / max } else { 0.0 };
        for (cap, cell) in &cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                method,
                cap,
                fmt_opt(cell.total_score),
                cell.avg_client_quality,
                cell.avg_coalition_quality,
                cell.avg_client_utility,
                fmt_opt(cell.total_score.map(|s| norm(s, max_score))),
                norm(cell.avg_client_quality, max_cq),
                norm(cell.avg_coalition_quality, max_coq),
                norm(cell.avg_client_utility, max_u),
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(dir: &Path) -> ExperimentSpec {
        ExperimentSpec {
            base: SimConfig {
                n_clients: 8,
                n_servers: 3,
                winners_per_round: 2,
                capacity: 4,
                rounds: 3,
                train_samples: 160,
                test_samples: 40,
                feature_dim: 6,
                n_classes: 4,
                local_epochs: 1,
                ..SimConfig::default()
            },
            seeds: vec![1, 2],
            methods: vec![Method::Dualgfl, Method::Fedavghed],
            out_dir: dir.to_path_buf(),
            ablation: None,
        }
    }

    #[test]
    fn ablation_argument_parses() {
        assert_eq!(
            parse_ablation("capacity=6,8,10,15").unwrap(),
            AblationAxis::Capacity(vec![6, 8, 10, 15])
        );
        assert!(parse_ablation("capacity=").is_err());
        assert!(parse_ablation("capacity=0").is_err());
        assert!(parse_ablation("rounds=5").is_err());
        assert!(parse_ablation("garbage").is_err());
    }

    #[test]
    fn sweep_emits_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(dir.path());
        let out = run_experiment(&spec).unwrap();
        // 2 methods x 2 seeds.
        assert_eq!(out.run_files.len(), 4);
        for f in &out.run_files {
            assert!(f.exists(), "{f:?} missing");
            let sidecar = f.with_extension("json");
            assert!(sidecar.exists(), "{sidecar:?} missing");
        }
        assert!(out.summary_file.exists());
        assert!(out.ablation_file.is_none());
        let summary = std::fs::read_to_string(&out.summary_file).unwrap();
        // Header plus one row per method.
        assert_eq!(summary.lines().count(), 3, "{summary}");
    }

    #[test]
    fn rerun_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut spec = tiny_spec(dir_a.path());
        spec.seeds = vec![3];
        let out_a = run_experiment(&spec).unwrap();
        spec.out_dir = dir_b.path().to_path_buf();
        let out_b = run_experiment(&spec).unwrap();
        for (a, b) in out_a.run_files.iter().zip(&out_b.run_files) {
            assert_eq!(
                std::fs::read(a).unwrap(),
                std::fs::read(b).unwrap(),
                "{a:?} differs"
            );
        }
        assert_eq!(
            std::fs::read(&out_a.summary_file).unwrap(),
            std::fs::read(&out_b.summary_file).unwrap()
        );
    }

    #[test]
    fn summary_means_match_recomputation_from_run_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = tiny_spec(dir.path());
        spec.methods = vec![Method::Dualgfl];
        let out = run_experiment(&spec).unwrap();

        // Recompute the cross-seed mean of cum_total_score's final value
        // straight from the emitted per-run CSVs.
        let mut finals = Vec::new();
        for f in &out.run_files {
            let text = std::fs::read_to_string(f).unwrap();
            let last = text.lines().last().unwrap();
            let cols: Vec<&str> = last.split(',').collect();
            finals.push(cols[7].parse::<f64>().unwrap()); // cum_total_score
        }
        let expected = finals.iter().sum::<f64>() / finals.len() as f64;

        let summary = std::fs::read_to_string(&out.summary_file).unwrap();
        let row = summary.lines().nth(1).unwrap();
        let got: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn ablation_sweep_emits_normalized_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = tiny_spec(dir.path());
        spec.seeds = vec![1];
        spec.methods = vec![Method::Dualgfl];
        spec.ablation = Some(AblationAxis::Capacity(vec![3, 4]));
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.run_files.len(), 2);
        let table = std::fs::read_to_string(out.ablation_file.unwrap()).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3, "{table}");
        // Normalized columns peak at exactly 1 somewhere along the axis.
        let mut max_norm_score = 0.0f64;
        for row in &lines[1..] {
            let cols: Vec<&str> = row.split(',').collect();
            max_norm_score = max_norm_score.max(cols[6].parse::<f64>().unwrap());
        }
        assert!((max_norm_score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_requires_seeds_and_methods() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = tiny_spec(dir.path());
        spec.seeds.clear();
        assert!(run_experiment(&spec).is_err());
        let mut spec = tiny_spec(dir.path());
        spec.methods.clear();
        assert!(run_experiment(&spec).is_err());
    }
}
