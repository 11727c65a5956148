//! Paired baseline / relation-trained comparisons over seeded trials.
//!
//! Each trial derives its own seed from `(base_seed, trial_id)` and from that
//! independent streams for the training-set draw, the test-set draw, network
//! initialisation, the substitution protocol and the SGD shuffle. Both
//! networks of a trial share the training set `S`, the initial parameters,
//! the optimiser settings and the evaluation set; they differ only in the
//! `m` substituted samples.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, AugmentationPlan, Mnist};
use crate::error::{Error, Result};
use crate::mr::{LabeledSample, MetamorphicRelation, MrKind, ParamSpec};
use crate::nn::{self, NetworkParams, TrainConfig};
use crate::seed;
use crate::stats::{self, TTestResult, TestKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mr: MrKind,
    pub k: usize,
    /// Target `m / (2k)`.
    pub ratio: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub test_size: usize,
    pub test_kind: TestKind,
    pub train: TrainConfig,
    pub params: ParamSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mr: MrKind::Rotate,
            k: 1500,
            ratio: 0.06,
            trials: 10,
            base_seed: 0,
            test_size: 10_000,
            test_kind: TestKind::Welch,
            train: TrainConfig::default(),
            params: ParamSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(Error::Config(format!(
                "at least 2 trials are needed for a t-test, got {}",
                self.trials
            )));
        }
        if self.test_size == 0 {
            return Err(Error::Config("test_size must be positive".into()));
        }
        self.removal_count()?;
        self.train.validate()?;
        self.params
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// `m`, the number of samples removed from `S`.
    pub fn removal_count(&self) -> Result<usize> {
        dataset::removal_count(self.k, self.ratio)
    }

    pub fn relation(&self) -> Result<MetamorphicRelation> {
        MetamorphicRelation::new(self.mr, self.params.clone())
    }

    pub fn label(&self) -> String {
        format!("{} k={} m/2k={}", self.mr, self.k, self.ratio)
    }
}

/// The five published conditions: (relation, k, m/2k).
pub const PAPER_CONDITIONS: [(MrKind, usize, f64); 5] = [
    (MrKind::Rotate, 1500, 0.06),
    (MrKind::Shift, 15_000, 0.03),
    (MrKind::Scale, 1500, 0.03),
    (MrKind::Vmirror, 1500, 0.12),
    (MrKind::Elastic, 1500, 0.25),
];

/// Published one-tailed p-values, in [`PAPER_CONDITIONS`] order.
pub const PAPER_P_VALUES: [f64; 5] = [0.000, 0.009, 0.006, 0.042, 0.002];

pub fn paper_preset(template: &ExperimentConfig) -> Vec<ExperimentConfig> {
    PAPER_CONDITIONS
        .iter()
        .map(|&(mr, k, ratio)| ExperimentConfig {
            mr,
            k,
            ratio,
            ..template.clone()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    MrTrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub seed: u64,
    pub condition: Condition,
    pub mr_name: MrKind,
    pub k: usize,
    pub ratio: f64,
    pub accuracy: f64,
    pub train_seconds: f64,
}

impl TrialRecord {
    fn dedup_key(&self) -> (Condition, MrKind, usize, u64, u64, u64) {
        (
            self.condition,
            self.mr_name,
            self.k,
            self.ratio.to_bits(),
            self.trial_id,
            self.seed,
        )
    }
}

/// One line of the results log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogEntry {
    Trial(TrialRecord),
    Failure {
        mr_name: MrKind,
        k: usize,
        ratio: f64,
        trial_id: u64,
        seed: u64,
        error: String,
    },
}

/// Append-only JSON-lines log; one writer at a time.
#[derive(Debug)]
pub struct ResultsLog {
    path: PathBuf,
    lock: Mutex<()>,
}

impl ResultsLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entries: &[LogEntry]) -> Result<()> {
        let mut text = String::new();
        for e in entries {
            text.push_str(&serde_json::to_string(e).expect("log entries serialise"));
            text.push('\n');
        }
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(format!("opening {}", self.path.display()), e))?;
        file.write_all(text.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(format!("appending to {}", self.path.display()), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Vec<LogEntry>> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut out = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                offset: n as u64 + 1,
                message: format!("line {}: {e}", n + 1),
            })?);
        }
        Ok(out)
    }
}

/// Trains a network from `init` and scores it on `test`.
pub trait Trainer: Sync {
    fn fit_and_score(
        &self,
        init: &NetworkParams<f32>,
        train: &[LabeledSample],
        test: &[LabeledSample],
        cfg: &TrainConfig,
    ) -> Result<f64>;
}

/// The real thing: SGD training followed by test-set accuracy.
#[derive(Clone, Copy, Debug, Default)]
pub struct SgdTrainer;

impl Trainer for SgdTrainer {
    fn fit_and_score(
        &self,
        init: &NetworkParams<f32>,
        train: &[LabeledSample],
        test: &[LabeledSample],
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let trained = nn::train(init.clone(), train, cfg)?;
        nn::accuracy(&trained.params, test)
    }
}

pub fn trial_seed(base_seed: u64, trial_id: u64) -> u64 {
    seed::derive(base_seed, "trial", trial_id)
}

/// Everything one trial trains and evaluates on, before any training happens.
pub struct TrialInputs {
    pub seed: u64,
    pub s_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub split: dataset::SplitResult,
    pub test: Vec<LabeledSample>,
    pub init: NetworkParams<f32>,
    pub train_cfg: TrainConfig,
}

pub fn prepare_trial(cfg: &ExperimentConfig, data: &Mnist, trial_id: u64) -> Result<TrialInputs> {
    let seed = trial_seed(cfg.base_seed, trial_id);
    let s_indices =
        dataset::training_indices(&data.train, cfg.k, seed::derive(seed, "select-train", 0))?;
    let test_indices = dataset::test_indices(
        &data.test,
        cfg.test_size,
        seed::derive(seed, "select-test", 0),
    )?;
    let s = data.train.gather(&s_indices);
    let plan =
        AugmentationPlan::from_ratio(cfg.k, cfg.ratio, cfg.mr, seed::derive(seed, "augment", 0))?;
    let split = dataset::build_augmented_set(&s, &plan, &cfg.relation()?)?;
    Ok(TrialInputs {
        seed,
        test: data.test.gather(&test_indices),
        s_indices,
        test_indices,
        split,
        init: nn::init_params(seed::derive(seed, "init", 0)),
        train_cfg: TrainConfig {
            seed: seed::derive(seed, "train", cfg.train.seed),
            ..cfg.train.clone()
        },
    })
}

/// Trains DNN1 on `S` and DNN2 on `S'` from identical starting points.
pub fn run_trial(
    cfg: &ExperimentConfig,
    data: &Mnist,
    trainer: &dyn Trainer,
    trial_id: u64,
) -> Result<(TrialRecord, TrialRecord)> {
    let inputs = prepare_trial(cfg, data, trial_id)?;
    let record = |condition, train: &[LabeledSample]| -> Result<TrialRecord> {
        let start = Instant::now();
        let accuracy =
            trainer.fit_and_score(&inputs.init, train, &inputs.test, &inputs.train_cfg)?;
        Ok(TrialRecord {
            trial_id,
            seed: inputs.seed,
            condition,
            mr_name: cfg.mr,
            k: cfg.k,
            ratio: cfg.ratio,
            accuracy,
            train_seconds: start.elapsed().as_secs_f64(),
        })
    };
    let baseline = record(Condition::Baseline, &inputs.split.s)?;
    let treated = record(Condition::MrTrained, &inputs.split.s_prime)?;
    log::info!(
        "{} trial {trial_id}: baseline {:.4}, mr {:.4}",
        cfg.label(),
        baseline.accuracy,
        treated.accuracy
    );
    Ok((baseline, treated))
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub test: TTestResult,
    /// Baseline and relation-trained record per trial, in trial order.
    pub records: Vec<TrialRecord>,
}

impl ExperimentOutcome {
    pub fn accuracies(&self, condition: Condition) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.condition == condition)
            .map(|r| r.accuracy)
            .collect()
    }
}

/// Runs every trial (on up to `workers` threads) and tests `mean(b) > mean(a)`.
///
/// Completed trials are appended to `log` as they finish; failed ones leave a
/// failure line, and the first failure is returned after all trials ran.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &Mnist,
    trainer: &dyn Trainer,
    log: Option<&ResultsLog>,
    workers: usize,
) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let outcomes: Vec<Result<(TrialRecord, TrialRecord)>> = pool.install(|| {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|trial_id| {
                let res = run_trial(cfg, data, trainer, trial_id);
                if let Some(log) = log {
                    let entries = match &res {
                        Ok((a, b)) => vec![LogEntry::Trial(a.clone()), LogEntry::Trial(b.clone())],
                        Err(e) => vec![LogEntry::Failure {
                            mr_name: cfg.mr,
                            k: cfg.k,
                            ratio: cfg.ratio,
                            trial_id,
                            seed: trial_seed(cfg.base_seed, trial_id),
                            error: e.to_string(),
                        }],
                    };
                    log.append(&entries)?;
                }
                res
            })
            .collect()
    });

    let mut records = Vec::with_capacity(2 * cfg.trials);
    for res in outcomes {
        let (a, b) = res?;
        records.push(a);
        records.push(b);
    }
    let outcome_a: Vec<f64> = records.iter().step_by(2).map(|r| r.accuracy).collect();
    let outcome_b: Vec<f64> = records
        .iter()
        .skip(1)
        .step_by(2)
        .map(|r| r.accuracy)
        .collect();
    let test = stats::t_test(cfg.test_kind, &outcome_a, &outcome_b)?;
    Ok(ExperimentOutcome { test, records })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub mr_name: MrKind,
    pub k: usize,
    pub ratio: f64,
    pub n_baseline: usize,
    pub n_mr: usize,
    pub mean_baseline: f64,
    pub sd_baseline: f64,
    pub mean_mr: f64,
    pub sd_mr: f64,
    pub t_stat: f64,
    pub dof: f64,
    pub p_value: f64,
    pub significant: bool,
}

pub const ALPHA: f64 = 0.05;

/// Summarises trial records per (relation, k, ratio), dropping duplicates.
pub fn summarize(entries: &[LogEntry], kind: TestKind) -> Result<Vec<ReportRow>> {
    let mut seen = HashSet::new();
    type Group = BTreeMap<Condition, BTreeMap<u64, f64>>;
    let mut groups: BTreeMap<(MrKind, usize, u64), Group> = BTreeMap::new();
    for entry in entries {
        let LogEntry::Trial(r) = entry else { continue };
        if !seen.insert(r.dedup_key()) {
            continue;
        }
        groups
            .entry((r.mr_name, r.k, r.ratio.to_bits()))
            .or_default()
            .entry(r.condition)
            .or_default()
            .insert(r.trial_id, r.accuracy);
    }
    if groups.is_empty() {
        return Err(Error::InsufficientData("no trial records".into()));
    }
    let mut rows = Vec::new();
    for ((mr_name, k, ratio_bits), by_condition) in groups {
        let ratio = f64::from_bits(ratio_bits);
        let get = |c| -> Vec<(u64, f64)> {
            by_condition
                .get(&c)
                .map(|m| m.iter().map(|(&t, &a)| (t, a)).collect())
                .unwrap_or_default()
        };
        let (base, treated) = (get(Condition::Baseline), get(Condition::MrTrained));
        if base.len() < 2 || treated.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "{mr_name} k={k} m/2k={ratio}: {} baseline and {} relation-trained records, need 2 each",
                base.len(),
                treated.len()
            )));
        }
        let (a, b): (Vec<f64>, Vec<f64>) = if kind == TestKind::Paired {
            let treated: BTreeMap<u64, f64> = treated.iter().copied().collect();
            base.iter()
                .filter_map(|(t, x)| treated.get(t).map(|y| (*x, *y)))
                .unzip()
        } else {
            (
                base.iter().map(|p| p.1).collect(),
                treated.iter().map(|p| p.1).collect(),
            )
        };
        let test = stats::t_test(kind, &a, &b)
            .map_err(|e| Error::InsufficientData(format!("{mr_name} k={k} m/2k={ratio}: {e}")))?;
        rows.push(ReportRow {
            mr_name,
            k,
            ratio,
            n_baseline: a.len(),
            n_mr: b.len(),
            mean_baseline: test.mean_a,
            sd_baseline: stats::variance(&a).sqrt(),
            mean_mr: test.mean_b,
            sd_mr: stats::variance(&b).sqrt(),
            t_stat: test.t_stat,
            dof: test.dof,
            p_value: test.p_value,
            significant: test.p_value < ALPHA,
        });
    }
    Ok(rows)
}

pub fn report(results_log_path: impl AsRef<Path>, kind: TestKind) -> Result<Vec<ReportRow>> {
    summarize(&ResultsLog::read(results_log_path)?, kind)
}

pub fn render_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>6} {:>6} {:>4}  {:>17}  {:>17}  {:>7} {:>6} {:>6}  α=0.05",
        "mr", "k", "m/2k", "n", "DNN1 acc", "DNN2 acc", "t", "dof", "p"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>5.1}% {:>4}  {:>8.4} ± {:<6.4}  {:>8.4} ± {:<6.4}  {:>7.3} {:>6.2} {:>6.3}  {}",
            r.mr_name.name(),
            r.k,
            r.ratio * 100.0,
            r.n_baseline.min(r.n_mr),
            r.mean_baseline,
            r.sd_baseline,
            r.mean_mr,
            r.sd_mr,
            r.t_stat,
            r.dof,
            r.p_value,
            if r.significant { "pass" } else { "fail" }
        );
    }
    out
}

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(
        "mr,k,ratio,n_baseline,n_mr,mean_baseline,sd_baseline,mean_mr,sd_mr,t,dof,p,significant\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.mr_name.name(),
            r.k,
            r.ratio,
            r.n_baseline,
            r.n_mr,
            r.mean_baseline,
            r.sd_baseline,
            r.mean_mr,
            r.sd_mr,
            r.t_stat,
            r.dof,
            r.p_value,
            r.significant
        );
    }
    out
}
