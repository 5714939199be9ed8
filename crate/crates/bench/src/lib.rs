//! Schedulability sweeps over synthetic task sets and their `.dat` tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hpcdag::alloc::{allocate_taskset, cpdag_reduction, verify_allocation, AllocOutcome, AllocParams};
use hpcdag::gen::{gen_taskset, GenConfig};
use hpcdag::model::{tag, Architecture, Tag, TaskSpec};
use hpcdag::timing::PreemptionScheme;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The ten heuristic combinations, in column order.
pub const HEURISTICS: [&str; 10] =
    ["BRF-P", "BOF-P", "BRF-R", "BOF-R", "WRF-P", "WOF-P", "BOP-P", "BRP-P", "WOP-P", "WRP-P"];

/// Column name of the baseline that fixes one concrete task per spec.
pub const CP_DAG: &str = "CP-DAG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub arch: Architecture,
    pub steps: usize,
    pub runs: usize,
    pub heuristics: Vec<AllocParams>,
    /// Adds the CP-DAG baseline, allocated with `cp_params`.
    pub cp_dag: bool,
    pub cp_params: AllocParams,
    pub scheme: PreemptionScheme,
    pub seed: u64,
    pub parallel: bool,
    pub gen: GenConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            arch: Architecture::xavier(),
            steps: 16,
            runs: 85,
            heuristics: HEURISTICS.iter().map(|h| h.parse().expect("valid heuristic name")).collect(),
            cp_dag: true,
            cp_params: "BRF-P".parse().expect("valid heuristic name"),
            scheme: PreemptionScheme::Reduced,
            seed: 0,
            parallel: true,
            gen: GenConfig::default(),
        }
    }
}

impl SweepConfig {
    /// Per-tag utilization targets at step `index`: `index * m_tag / steps`
    /// (0.5 per step for eight CPUs, 0.0625 for a single accelerator).
    pub fn targets(&self, index: usize) -> BTreeMap<Tag, f64> {
        self.arch
            .tags()
            .into_iter()
            .map(|t| {
                let m = self.arch.count(&t) as f64;
                (t, index as f64 * m / self.steps as f64)
            })
            .collect()
    }

    /// Column names in output order.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.heuristics.iter().map(AllocParams::name).collect();
        if self.cp_dag {
            cols.push(CP_DAG.to_string());
        }
        cols
    }
}

/// Random generator of run `run` at step `index`, independent of the
/// order in which runs execute.
pub fn run_rng(seed: u64, index: usize, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((index as u64) << 32) | run as u64);
    rng
}

/// Seed of the allocation heuristics within one run.
fn alloc_seed(seed: u64, index: usize, run: usize) -> u64 {
    seed ^ ((index as u64) << 40) ^ ((run as u64) << 8) ^ 0x5eed
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub run: usize,
    pub success: bool,
    pub active_cpus: usize,
    /// Mean utilization over the active CPUs; 0 when none is active.
    pub active_util: f64,
    /// Positive-WCET CPU sub-tasks in the generated set.
    pub cpu_subtasks: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub columns: Vec<String>,
    pub steps: usize,
    /// Per column, every run sorted by `(index, run)`.
    pub records: BTreeMap<String, Vec<RunRecord>>,
    /// Successful allocations that failed the re-check (sampled).
    pub recheck_failures: usize,
}

impl SweepResult {
    fn runs_at<'a>(&'a self, column: &str, index: usize) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.get(column).into_iter().flatten().filter(move |r| r.index == index)
    }

    pub fn rate(&self, column: &str, index: usize) -> f64 {
        let (n, ok) = self.runs_at(column, index).fold((0, 0), |(n, ok), r| (n + 1, ok + usize::from(r.success)));
        if n == 0 {
            f64::NAN
        } else {
            ok as f64 / n as f64
        }
    }

    fn mean_over_successes(&self, column: &str, index: usize, f: impl Fn(&RunRecord) -> f64) -> f64 {
        let (n, sum) = self
            .runs_at(column, index)
            .filter(|r| r.success)
            .fold((0usize, 0.0), |(n, s), r| (n + 1, s + f(r)));
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }

    pub fn avg_active_cpus(&self, column: &str, index: usize) -> f64 {
        self.mean_over_successes(column, index, |r| r.active_cpus as f64)
    }

    pub fn avg_active_util(&self, column: &str, index: usize) -> f64 {
        self.mean_over_successes(column, index, |r| r.active_util)
    }
}

/// Outcome of one allocation turned into a record.
fn record(index: usize, run: usize, outcome: &AllocOutcome, arch: &Architecture, cpu_subtasks: usize) -> RunRecord {
    let cpu = tag("CPU");
    let alloc = outcome.allocation();
    let active: Vec<_> =
        alloc.active_engines().filter(|&e| arch.engine(e).is_some_and(|e| e.tag == cpu)).collect();
    let active_util = if active.is_empty() {
        0.0
    } else {
        active.iter().map(|&e| alloc.utilization(e)).sum::<f64>() / active.len() as f64
    };
    RunRecord { index, run, success: outcome.is_success(), active_cpus: active.len(), active_util, cpu_subtasks }
}

/// Everything computed for one `(index, run)` pair.
struct RunOutput {
    records: Vec<(String, RunRecord)>,
    recheck_failures: usize,
}

fn one_run(cfg: &SweepConfig, index: usize, run: usize) -> RunOutput {
    let mut rng = run_rng(cfg.seed, index, run);
    let gen = GenConfig { utilization: cfg.targets(index), ..cfg.gen.clone() };
    let cpu = tag("CPU");
    let mut out = RunOutput { records: Vec::new(), recheck_failures: 0 };
    let specs = match gen_taskset(&cfg.arch, &gen, &mut rng) {
        Ok(s) => s,
        Err(_) => {
            for col in cfg.columns() {
                let r = RunRecord { index, run, success: false, active_cpus: 0, active_util: 0.0, cpu_subtasks: 0 };
                out.records.push((col, r));
            }
            return out;
        }
    };
    let cpu_subtasks: usize = specs.iter().map(|s| hpcdag::alloc::positive_subtasks(s, &cpu)).sum();
    let seed = alloc_seed(cfg.seed, index, run);
    // Roughly one run in a hundred re-checks its successful allocations.
    let recheck = (index * 7919 + run) % 100 == 0;
    let mut attempt = |name: String, specs: &[TaskSpec], params: &AllocParams| {
        let params = params.clone().with_scheme(cfg.scheme).with_seed(seed);
        let outcome = allocate_taskset(specs, &cfg.arch, &params).unwrap_or_else(|_| AllocOutcome::Fail {
            task: u32::MAX,
            partial: Default::default(),
        });
        if recheck {
            if let AllocOutcome::Success(a) = &outcome {
                let ok = verify_allocation(a, &cfg.arch, &params).map(|p| p.is_empty()).unwrap_or(false);
                out.recheck_failures += usize::from(!ok);
            }
        }
        out.records.push((name, record(index, run, &outcome, &cfg.arch, cpu_subtasks)));
    };
    for params in &cfg.heuristics {
        attempt(params.name(), &specs, params);
    }
    if cfg.cp_dag {
        let mut cp_rng = run_rng(cfg.seed ^ 0xc0de, index, run);
        match cpdag_reduction(&specs, &mut cp_rng) {
            Ok(reduced) => attempt(CP_DAG.to_string(), &reduced, &cfg.cp_params),
            Err(_) => out.records.push((
                CP_DAG.to_string(),
                RunRecord { index, run, success: false, active_cpus: 0, active_util: 0.0, cpu_subtasks },
            )),
        }
    }
    out
}

/// Runs every heuristic on `runs` generated sets at each utilization step.
pub fn run_sweep(cfg: &SweepConfig) -> SweepResult {
    let pairs: Vec<(usize, usize)> = (0..cfg.steps).flat_map(|i| (0..cfg.runs).map(move |r| (i, r))).collect();
    let outputs: Vec<RunOutput> = if cfg.parallel {
        pairs.par_iter().map(|&(i, r)| one_run(cfg, i, r)).collect()
    } else {
        pairs.iter().map(|&(i, r)| one_run(cfg, i, r)).collect()
    };
    let mut result = SweepResult { columns: cfg.columns(), steps: cfg.steps, ..Default::default() };
    for output in outputs {
        result.recheck_failures += output.recheck_failures;
        for (col, rec) in output.records {
            result.records.entry(col).or_default().push(rec);
        }
    }
    for recs in result.records.values_mut() {
        recs.sort_by_key(|r| (r.index, r.run));
    }
    result
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreemptionTable {
    pub steps: usize,
    /// `(max_rate, reduced_rate)` per index.
    pub rows: Vec<(f64, f64)>,
    /// Per index and run: `(success under MAX, success under REDUCED)`.
    pub per_seed: Vec<Vec<(bool, bool)>>,
}

/// BRF-P under both charging schemes on identical task sets.
pub fn run_preemption_experiment(cfg: &SweepConfig) -> PreemptionTable {
    let brf_p: AllocParams = "BRF-P".parse().expect("valid heuristic name");
    let mut result = PreemptionTable { steps: cfg.steps, ..Default::default() };
    let mut per_seed: Vec<Vec<(bool, bool)>> = vec![Vec::new(); cfg.steps];
    for scheme in [PreemptionScheme::Max, PreemptionScheme::Reduced] {
        let sub = SweepConfig { heuristics: vec![brf_p.clone()], cp_dag: false, scheme, ..cfg.clone() };
        let res = run_sweep(&sub);
        for rec in &res.records[&brf_p.name()] {
            let slot = &mut per_seed[rec.index];
            if scheme == PreemptionScheme::Max {
                slot.push((rec.success, false));
            } else {
                slot[rec.run].1 = rec.success;
            }
        }
    }
    for runs in &per_seed {
        let n = runs.len().max(1) as f64;
        let max = runs.iter().filter(|r| r.0).count() as f64 / n;
        let reduced = runs.iter().filter(|r| r.1).count() as f64 / n;
        result.rows.push((max, reduced));
    }
    result.per_seed = per_seed;
    result
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn table(header: &[String], rows: impl Iterator<Item = (usize, Vec<f64>)>) -> String {
    let mut text = String::from("# util_index");
    for h in header {
        text.push(' ');
        text.push_str(h);
    }
    text.push('\n');
    for (index, values) in rows {
        let _ = write!(text, "{index}");
        for v in values {
            text.push(' ');
            text.push_str(&cell(v));
        }
        text.push('\n');
    }
    text
}

/// The three per-heuristic tables as `(file name, contents)`.
pub fn render_dat(result: &SweepResult) -> Vec<(&'static str, String)> {
    let cols = &result.columns;
    let metric = |f: &dyn Fn(&str, usize) -> f64| {
        table(cols, (0..result.steps).map(|i| (i, cols.iter().map(|c| f(c, i)).collect())))
    };
    if cols.is_empty() {
        return ["sched_rate.dat", "avg_ncore.dat", "avg_u_a.dat"].into_iter().map(|n| (n, table(cols, std::iter::empty()))).collect();
    }
    vec![
        ("sched_rate.dat", metric(&|c, i| result.rate(c, i))),
        ("avg_ncore.dat", metric(&|c, i| result.avg_active_cpus(c, i))),
        ("avg_u_a.dat", metric(&|c, i| result.avg_active_util(c, i))),
    ]
}

pub fn render_preemption_dat(table_: &PreemptionTable) -> String {
    let header = vec!["MAX_PREEMP".to_string(), "REDUCED_PREM".to_string()];
    table(&header, table_.rows.iter().enumerate().map(|(i, &(a, b))| (i, vec![a, b])))
}

/// Writes the sweep tables into `dir`.
pub fn emit_dat(result: &SweepResult, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, text) in render_dat(result) {
        fs::write(dir.join(name), text)?;
    }
    Ok(())
}

pub fn emit_preemption_dat(table_: &PreemptionTable, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("preemp.dat"), render_preemption_dat(table_))
}
