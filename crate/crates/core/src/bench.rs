//! Seeded trial matrices over tasks × strategies, success-rate reports and
//! episode traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::monitor::{
    EpisodeConfig, EpisodeSeeds, MonitorError, Strategy, TaskRunner, TrialResult,
};
use crate::pddl::{parse_domain, parse_problem, PddlError};
use crate::perception::PerceptionConfig;
use crate::tasks::bundled_task;
use crate::world::{Scenario, SituationSpec, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("task `{task}` is not solvable from its initial state: {source}")]
    Unsolvable {
        task: String,
        #[source]
        source: MonitorError,
    },
    #[error("task `{task}`: {source}")]
    Parse {
        task: String,
        #[source]
        source: Box<PddlError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] WorldError),
    #[error("malformed report: {0}")]
    Report(String),
    #[error("malformed trace: {0}")]
    Trace(String),
}

fn read(path: &Path) -> Result<String, BenchError> {
    fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), BenchError> {
    fs::write(path, text).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A bundled task by name, or a domain/problem file pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskSource {
    Bundled(String),
    Files {
        name: String,
        domain: PathBuf,
        problem: PathBuf,
    },
}

impl TaskSource {
    pub fn name(&self) -> &str {
        match self {
            TaskSource::Bundled(n) => n,
            TaskSource::Files { name, .. } => name,
        }
    }

    pub fn runner(&self) -> Result<TaskRunner, BenchError> {
        let name = self.name().to_string();
        let parse_err = |source| BenchError::Parse {
            task: name.clone(),
            source: Box::new(source),
        };
        let (domain, problem) = match self {
            TaskSource::Bundled(n) => bundled_task(n)
                .ok_or_else(|| BenchError::Config(format!("no bundled task named `{n}`")))?
                .load()
                .map_err(parse_err)?,
            TaskSource::Files {
                domain, problem, ..
            } => {
                let d = parse_domain(&read(domain)?).map_err(parse_err)?;
                let p = parse_problem(&read(problem)?, &d).map_err(parse_err)?;
                (d, p)
            }
        };
        TaskRunner::new(name.clone(), domain, problem)
            .map_err(|source| BenchError::Unsolvable { task: name, source })
    }
}

/// Benchmark configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub tasks: Vec<TaskSource>,
    pub strategies: Vec<Strategy>,
    pub trials: usize,
    pub base_seed: u64,
    pub flip_rate: f64,
    pub skip_rate: f64,
    pub gate_on_inview: bool,
    /// Situation table file; the bundled table when absent.
    pub situations: Option<PathBuf>,
    pub max_replans: usize,
    pub step_factor: usize,
    pub max_steps: Option<usize>,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            tasks: crate::tasks::BUNDLED_TASKS
                .iter()
                .map(|t| TaskSource::Bundled(t.name.to_string()))
                .collect(),
            strategies: Strategy::ALL.to_vec(),
            trials: 20,
            base_seed: 0,
            flip_rate: 0.0,
            skip_rate: 0.0,
            gate_on_inview: false,
            situations: None,
            max_replans: 25,
            step_factor: 10,
            max_steps: None,
            csv: None,
            json: None,
        }
    }
}

impl BenchmarkConfig {
    /// Reads a TOML file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let mut cfg: BenchmarkConfig =
            toml::from_str(&read(path)?).map_err(|e| BenchError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for t in &mut cfg.tasks {
            if let TaskSource::Files {
                domain, problem, ..
            } = t
            {
                resolve(domain);
                resolve(problem);
            }
        }
        for p in [&mut cfg.situations, &mut cfg.csv, &mut cfg.json]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.trials == 0 {
            return Err(BenchError::Config("trials must be at least 1".into()));
        }
        for (name, rate) in [("flip_rate", self.flip_rate), ("skip_rate", self.skip_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(BenchError::Config(format!("{name} {rate} outside [0, 1]")));
            }
        }
        if self.step_factor == 0 || self.max_steps == Some(0) {
            return Err(BenchError::Config("step budget must be positive".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tasks {
            if !seen.insert(t.name()) {
                return Err(BenchError::Config(format!(
                    "task `{}` listed twice",
                    t.name()
                )));
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, BenchError> {
        let situations = match &self.situations {
            Some(p) => SituationSpec::parse(&read(p)?)?,
            None => SituationSpec::default(),
        };
        Ok(Scenario {
            situations,
            ..Scenario::default()
        })
    }

    pub fn episode_config(&self, strategy: Strategy, scenario: Scenario) -> EpisodeConfig {
        EpisodeConfig {
            perception: PerceptionConfig {
                flip_rate: self.flip_rate,
                skip_rate: self.skip_rate,
                gate_on_inview: self.gate_on_inview,
            },
            scenario,
            max_steps: self.max_steps,
            step_factor: self.step_factor,
            max_replans: self.max_replans,
            ..EpisodeConfig::new(strategy)
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeds of one trial. The world seed depends on (base seed + trial index,
/// task index) only, so every strategy faces the same situation draws on a
/// given trial; the perception seed additionally mixes in the strategy index.
pub fn derive_seeds(base_seed: u64, task: usize, strategy: usize, trial: usize) -> EpisodeSeeds {
    let world = splitmix64(base_seed.wrapping_add(trial as u64) ^ splitmix64(task as u64 + 1));
    let perception = splitmix64(world ^ splitmix64(((strategy as u64) + 1) << 32));
    EpisodeSeeds { world, perception }
}

/// All trial results of one (task, strategy) cell, in trial order.
#[derive(Debug, Clone)]
pub struct CellResults {
    pub task: String,
    pub strategy: Strategy,
    pub trials: Vec<TrialResult>,
}

/// Prepared tasks and scenario for a benchmark configuration.
pub struct Benchmark {
    cfg: BenchmarkConfig,
    runners: Vec<TaskRunner>,
    scenario: Scenario,
}

impl Benchmark {
    pub fn new(cfg: BenchmarkConfig) -> Result<Self, BenchError> {
        cfg.validate()?;
        let scenario = cfg.scenario()?;
        let runners = cfg
            .tasks
            .iter()
            .map(TaskSource::runner)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Benchmark {
            cfg,
            runners,
            scenario,
        })
    }

    pub fn config(&self) -> &BenchmarkConfig {
        &self.cfg
    }

    pub fn runners(&self) -> &[TaskRunner] {
        &self.runners
    }

    pub fn episode_config(&self, strategy: Strategy) -> EpisodeConfig {
        self.cfg.episode_config(strategy, self.scenario.clone())
    }

    /// Seeds of one trial; strategies are indexed by their position in the
    /// full strategy list, not in the configured subset.
    pub fn seeds(&self, task: usize, strategy: Strategy, trial: usize) -> EpisodeSeeds {
        let s = Strategy::ALL
            .iter()
            .position(|x| *x == strategy)
            .unwrap_or(0);
        derive_seeds(self.cfg.base_seed, task, s, trial)
    }

    pub fn run_trial(&self, task: usize, strategy: Strategy, trial: usize) -> TrialResult {
        let ep = self.episode_config(strategy);
        self.runners[task].run(&ep, self.seeds(task, strategy, trial))
    }

    /// Runs every cell; trials fan out across threads and are collected in
    /// index order.
    pub fn run_matrix(&self) -> Vec<CellResults> {
        let mut cells = Vec::new();
        for (ti, runner) in self.runners.iter().enumerate() {
            for &strategy in &self.cfg.strategies {
                let ep = self.episode_config(strategy);
                let trials = (0..self.cfg.trials)
                    .into_par_iter()
                    .map(|t| runner.run(&ep, self.seeds(ti, strategy, t)))
                    .collect();
                cells.push(CellResults {
                    task: runner.name().to_string(),
                    strategy,
                    trials,
                });
            }
        }
        cells
    }

    pub fn report(&self, cells: &[CellResults]) -> Report {
        let tasks: Vec<String> = self.runners.iter().map(|r| r.name().to_string()).collect();
        let rows = self
            .cfg
            .strategies
            .iter()
            .map(|&strategy| ReportRow {
                strategy: strategy.label().to_string(),
                cells: tasks
                    .iter()
                    .map(|task| {
                        let c = cells
                            .iter()
                            .find(|c| c.strategy == strategy && &c.task == task)
                            .expect("every cell was run");
                        Cell {
                            successes: c.trials.iter().filter(|t| t.success).count(),
                            trials: c.trials.len(),
                        }
                    })
                    .collect(),
            })
            .collect();
        Report { tasks, rows }
    }
}

/// Runs the configured matrix and returns the aggregated report.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<Report, BenchError> {
    let bench = Benchmark::new(cfg.clone())?;
    let cells = bench.run_matrix();
    Ok(bench.report(&cells))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub successes: usize,
    pub trials: usize,
}

impl Cell {
    /// Success rate in percent.
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            100.0 * self.successes as f64 / self.trials as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub cells: Vec<Cell>,
}

impl ReportRow {
    /// Unweighted mean of the per-task success percentages.
    pub fn average(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().map(Cell::rate).sum::<f64>() / self.cells.len() as f64
    }
}

/// Success counts per (strategy, task); columns follow `tasks`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub tasks: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn row(&self, strategy: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    pub fn total_trials(&self) -> usize {
        self.rows
            .iter()
            .flat_map(|r| &r.cells)
            .map(|c| c.trials)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["strategy".to_string()];
        for t in &self.tasks {
            header.extend([
                format!("{t}_succ"),
                format!("{t}_trials"),
                format!("{t}_rate"),
            ]);
        }
        header.push("avg".into());
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.strategy.clone()];
            for c in &row.cells {
                rec.extend([
                    c.successes.to_string(),
                    c.trials.to_string(),
                    format!("{:.1}", c.rate()),
                ]);
            }
            rec.push(format!("{:.1}", row.average()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, BenchError> {
        let bad = |m: String| BenchError::Report(m);
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let n = header.len();
        if n < 2 || (n - 2) % 3 != 0 || &header[0] != "strategy" || &header[n - 1] != "avg" {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let tasks: Vec<String> = (0..(n - 2) / 3)
            .map(|i| {
                header[1 + 3 * i]
                    .strip_suffix("_succ")
                    .map(String::from)
                    .ok_or_else(|| {
                        bad(format!(
                            "column `{}` is not a success count",
                            &header[1 + 3 * i]
                        ))
                    })
            })
            .collect::<Result<_, _>>()?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| -> Result<usize, BenchError> {
                rec[i]
                    .parse()
                    .map_err(|_| bad(format!("`{}` is not a count", &rec[i])))
            };
            let cells = (0..tasks.len())
                .map(|i| {
                    Ok(Cell {
                        successes: num(1 + 3 * i)?,
                        trials: num(2 + 3 * i)?,
                    })
                })
                .collect::<Result<_, BenchError>>()?;
            rows.push(ReportRow {
                strategy: rec[0].to_string(),
                cells,
            });
        }
        Ok(Report { tasks, rows })
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let cells: Vec<serde_json::Value> = self
                    .tasks
                    .iter()
                    .zip(&row.cells)
                    .map(|(t, c)| {
                        serde_json::json!({
                            "task": t,
                            "successes": c.successes,
                            "trials": c.trials,
                            "rate": (c.rate() * 10.0).round() / 10.0,
                        })
                    })
                    .collect();
                serde_json::json!({
                    "strategy": row.strategy,
                    "cells": cells,
                    "avg": (row.average() * 10.0).round() / 10.0,
                })
            })
            .collect();
        let doc = serde_json::json!({ "tasks": self.tasks, "rows": rows });
        serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n"
    }

    /// Plain-text table: `successes/trials` per task, then the average.
    pub fn to_table(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.strategy.len())
            .chain(["strategy".len()])
            .max()
            .unwrap_or(8);
        let col_w: Vec<usize> = self.tasks.iter().map(|t| t.len().max(7)).collect();
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "strategy");
        for (t, w) in self.tasks.iter().zip(&col_w) {
            let _ = write!(out, "  {t:>w$}");
        }
        out.push_str("    avg\n");
        for row in &self.rows {
            let _ = write!(out, "{:<name_w$}", row.strategy);
            for (c, w) in row.cells.iter().zip(&col_w) {
                let _ = write!(out, "  {:>w$}", format!("{}/{}", c.successes, c.trials));
            }
            let _ = writeln!(out, "  {:>5.1}", row.average());
        }
        out
    }

    /// Writes the configured CSV/JSON outputs.
    pub fn write_outputs(&self, cfg: &BenchmarkConfig) -> Result<(), BenchError> {
        if let Some(p) = &cfg.csv {
            write(p, &self.to_csv())?;
        }
        if let Some(p) = &cfg.json {
            write(p, &self.to_json())?;
        }
        Ok(())
    }
}

/// Everything needed to re-run one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub task: TaskSource,
    pub strategy: Strategy,
    pub seeds: EpisodeSeeds,
    pub flip_rate: f64,
    pub skip_rate: f64,
    pub gate_on_inview: bool,
    pub situations: Option<PathBuf>,
    pub max_replans: usize,
    pub step_factor: usize,
    pub max_steps: Option<usize>,
}

impl TraceHeader {
    pub fn new(
        cfg: &BenchmarkConfig,
        task: usize,
        strategy: Strategy,
        seeds: EpisodeSeeds,
    ) -> Self {
        TraceHeader {
            task: cfg.tasks[task].clone(),
            strategy,
            seeds,
            flip_rate: cfg.flip_rate,
            skip_rate: cfg.skip_rate,
            gate_on_inview: cfg.gate_on_inview,
            situations: cfg.situations.clone(),
            max_replans: cfg.max_replans,
            step_factor: cfg.step_factor,
            max_steps: cfg.max_steps,
        }
    }

    fn to_text(&self) -> String {
        let mut out = String::from("# episode trace\n");
        match &self.task {
            TaskSource::Bundled(n) => {
                let _ = writeln!(out, "#task={n}");
            }
            TaskSource::Files {
                name,
                domain,
                problem,
            } => {
                let _ = writeln!(out, "#task={name}");
                let _ = writeln!(out, "#domain={}", domain.display());
                let _ = writeln!(out, "#problem={}", problem.display());
            }
        }
        let _ = writeln!(out, "#strategy={}", self.strategy);
        let _ = writeln!(out, "#world_seed={}", self.seeds.world);
        let _ = writeln!(out, "#perception_seed={}", self.seeds.perception);
        let _ = writeln!(out, "#flip_rate={}", self.flip_rate);
        let _ = writeln!(out, "#skip_rate={}", self.skip_rate);
        let _ = writeln!(out, "#gate_on_inview={}", self.gate_on_inview);
        if let Some(p) = &self.situations {
            let _ = writeln!(out, "#situations={}", p.display());
        }
        let _ = writeln!(out, "#max_replans={}", self.max_replans);
        let _ = writeln!(out, "#step_factor={}", self.step_factor);
        if let Some(m) = self.max_steps {
            let _ = writeln!(out, "#max_steps={m}");
        }
        out
    }

    fn parse(text: &str) -> Result<Self, BenchError> {
        let mut kv = BTreeMap::new();
        for line in text.lines() {
            if let Some((k, v)) = line.strip_prefix('#').and_then(|l| l.split_once('=')) {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let bad = |m: String| BenchError::Trace(m);
        let get = |k: &str| kv.get(k).ok_or_else(|| bad(format!("missing `{k}`")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, BenchError> {
            v.parse()
                .map_err(|_| BenchError::Trace(format!("bad value `{v}` for `{k}`")))
        }
        let name = get("task")?.clone();
        let task = match (kv.get("domain"), kv.get("problem")) {
            (Some(d), Some(p)) => TaskSource::Files {
                name,
                domain: d.into(),
                problem: p.into(),
            },
            _ => TaskSource::Bundled(name),
        };
        Ok(TraceHeader {
            task,
            strategy: get("strategy")?.parse().map_err(bad)?,
            seeds: EpisodeSeeds {
                world: num("world_seed", get("world_seed")?)?,
                perception: num("perception_seed", get("perception_seed")?)?,
            },
            flip_rate: num("flip_rate", get("flip_rate")?)?,
            skip_rate: num("skip_rate", get("skip_rate")?)?,
            gate_on_inview: num("gate_on_inview", get("gate_on_inview")?)?,
            situations: kv.get("situations").map(PathBuf::from),
            max_replans: num("max_replans", get("max_replans")?)?,
            step_factor: num("step_factor", get("step_factor")?)?,
            max_steps: kv
                .get("max_steps")
                .map(|v| num("max_steps", v))
                .transpose()?,
        })
    }

    fn benchmark_config(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            tasks: vec![self.task.clone()],
            strategies: vec![self.strategy],
            trials: 1,
            flip_rate: self.flip_rate,
            skip_rate: self.skip_rate,
            gate_on_inview: self.gate_on_inview,
            situations: self.situations.clone(),
            max_replans: self.max_replans,
            step_factor: self.step_factor,
            max_steps: self.max_steps,
            ..BenchmarkConfig::default()
        }
    }
}

/// A header plus the episode's event log.
pub fn render_trace(header: &TraceHeader, result: &TrialResult) -> String {
    header.to_text() + &result.log()
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub header: TraceHeader,
    pub result: TrialResult,
    /// Whether the re-run log equals the recorded one.
    pub matches: bool,
}

/// Re-runs the episode a trace describes and compares the event logs.
pub fn replay(trace: &str) -> Result<Replay, BenchError> {
    let header = TraceHeader::parse(trace)?;
    let cfg = header.benchmark_config();
    let runner = header.task.runner()?;
    let ep = cfg.episode_config(header.strategy, cfg.scenario()?);
    let result = runner.run(&ep, header.seeds);
    let recorded: String = trace
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let matches = recorded == result.log();
    Ok(Replay {
        header,
        result,
        matches,
    })
}
