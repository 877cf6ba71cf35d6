use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use groundplan::bench::{render_trace, replay, Benchmark, BenchmarkConfig, TraceHeader};
use groundplan::monitor::Strategy;
use groundplan::pddl::{parse_domain, parse_problem, Domain, Problem};
use groundplan::perception::Visibility;
use groundplan::planner::{validate_plan, Planner, SymbolicState};
use groundplan::tasks::{bundled_task, BUNDLED_TASKS};
use groundplan::vlmclient::{ClientConfig, VlmAnswerer, VlmClient};
use groundplan::world::WorldState;

#[derive(Parser)]
#[command(
    name = "bench",
    version,
    about = "Seeded execution-monitoring benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task x strategy matrix of a TOML config and print the success table.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's csv output path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Overrides the config's json output path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Parse a domain/problem pair and check that the planner's plan (or a given one) is valid.
    Validate {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        /// Plan file with one `(action arg ...)` per line; `;` starts a comment.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Print the initial plan of a bundled task or a domain/problem pair.
    Plan {
        #[command(flatten)]
        task: TaskArgs,
        /// Emit the sas_plan file format.
        #[arg(long)]
        sas: bool,
    },
    /// Run a single trial of a config and write its replayable trace.
    Trial {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Trace output path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Answer vision questions through a live endpoint (TOML client config)
        /// using a labeled scene digest instead of camera images.
        #[arg(long)]
        vlm_config: Option<PathBuf>,
    },
    /// Re-run the episode a trace describes and compare event logs.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Args)]
struct TaskArgs {
    /// Bundled task name.
    #[arg(long, conflicts_with_all = ["domain", "problem"])]
    task: Option<String>,
    #[arg(long, requires = "problem")]
    domain: Option<PathBuf>,
    #[arg(long, requires = "domain")]
    problem: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_pair(domain: &Path, problem: &Path) -> Result<(Domain, Problem), String> {
    let d = parse_domain(&read(domain)?).map_err(|e| format!("{}: {e}", domain.display()))?;
    let p =
        parse_problem(&read(problem)?, &d).map_err(|e| format!("{}: {e}", problem.display()))?;
    Ok((d, p))
}

fn load_task(args: &TaskArgs) -> Result<(Domain, Problem), String> {
    match (&args.task, &args.domain, &args.problem) {
        (Some(name), _, _) => {
            let names: Vec<&str> = BUNDLED_TASKS.iter().map(|t| t.name).collect();
            bundled_task(name)
                .ok_or_else(|| {
                    format!("no bundled task `{name}` (available: {})", names.join(", "))
                })?
                .load()
                .map_err(|e| e.to_string())
        }
        (None, Some(d), Some(p)) => load_pair(d, p),
        _ => Err("give --task or both --domain and --problem".into()),
    }
}

fn cmd_run(config: &Path, csv: Option<PathBuf>, json: Option<PathBuf>) -> Result<bool, String> {
    let mut cfg = BenchmarkConfig::load(config).map_err(|e| e.to_string())?;
    cfg.csv = csv.or(cfg.csv);
    cfg.json = json.or(cfg.json);
    let bench = Benchmark::new(cfg).map_err(|e| e.to_string())?;
    let report = bench.report(&bench.run_matrix());
    print!("{}", report.to_table());
    report
        .write_outputs(bench.config())
        .map_err(|e| e.to_string())?;
    Ok(true)
}

fn parse_plan_file(
    text: &str,
    planner: &Planner,
) -> Result<Vec<groundplan::pddl::GroundAction>, String> {
    let mut steps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let inner = line.trim_start_matches('(').trim_end_matches(')');
        let want = format!(
            "({})",
            inner.split_whitespace().collect::<Vec<_>>().join(" ")
        );
        let step = planner
            .actions()
            .iter()
            .find(|a| a.to_pddl().eq_ignore_ascii_case(&want))
            .ok_or_else(|| {
                format!(
                    "line {}: `{line}` is not a ground action of this problem",
                    i + 1
                )
            })?;
        steps.push(step.clone());
    }
    Ok(steps)
}

fn cmd_validate(domain: &Path, problem: &Path, plan: Option<&Path>) -> Result<bool, String> {
    let (d, p) = load_pair(domain, problem)?;
    println!(
        "domain {}: {} actions, {} predicates; problem {}: {} objects, {} init atoms, {} goal literals",
        d.name,
        d.actions.len(),
        d.predicates.len(),
        p.name,
        p.objects.len(),
        p.init.len(),
        p.goal.len()
    );
    let planner = Planner::new(&d, &p);
    let steps = match plan {
        Some(f) => parse_plan_file(&read(f)?, &planner)?,
        None => {
            planner
                .plan(&init_state(&p), &p.goal)
                .map_err(|e| e.to_string())?
                .steps
        }
    };
    let v = validate_plan(planner.universe(), &init_state(&p), &steps, &p.goal);
    match v.failed_at {
        None => println!("plan of length {} is valid", steps.len()),
        Some(i) if i == steps.len() => println!("plan applies but leaves the goal unsatisfied"),
        Some(i) => println!("step {} {} is not applicable", i + 1, steps[i].to_pddl()),
    }
    Ok(v.valid)
}

fn init_state(p: &Problem) -> SymbolicState {
    p.init.iter().cloned().collect()
}

fn cmd_plan(task: &TaskArgs, sas: bool) -> Result<bool, String> {
    let (d, p) = load_task(task)?;
    let planner = Planner::new(&d, &p);
    let plan = planner
        .plan(&init_state(&p), &p.goal)
        .map_err(|e| e.to_string())?;
    if sas {
        print!("{}", plan.to_sas_plan());
    } else {
        for (i, s) in plan.steps.iter().enumerate() {
            println!("{:>3}  {}", i + 1, s.to_pddl());
        }
        println!("length {}", plan.len());
    }
    Ok(true)
}

fn cmd_trial(
    config: &Path,
    task: &str,
    strategy: Strategy,
    trial: usize,
    out: Option<&Path>,
    vlm: Option<&Path>,
) -> Result<bool, String> {
    let cfg = BenchmarkConfig::load(config).map_err(|e| e.to_string())?;
    let ti = cfg
        .tasks
        .iter()
        .position(|t| t.name() == task)
        .ok_or_else(|| format!("task `{task}` is not in {}", config.display()))?;
    let header_cfg = cfg.clone();
    let bench = Benchmark::new(cfg).map_err(|e| e.to_string())?;
    let seeds = bench.seeds(ti, strategy, trial);
    let mut trace;
    let result = match vlm {
        None => {
            let r = bench.run_trial(ti, strategy, trial);
            trace = render_trace(&TraceHeader::new(&header_cfg, ti, strategy, seeds), &r);
            r
        }
        Some(path) => {
            let client_cfg: ClientConfig =
                toml::from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
            let client = VlmClient::new(client_cfg).map_err(|e| e.to_string())?;
            let mut answerer = VlmAnswerer::with_scene_digest(client, Visibility::default());
            let runner = &bench.runners()[ti];
            let ep = bench.episode_config(strategy);
            let world = WorldState::from_problem(runner.problem());
            let r = runner.run_with(world, &ep, seeds, Some(&mut answerer));
            // Live answers are not reproducible; the header still records the seeds.
            trace = render_trace(&TraceHeader::new(&header_cfg, ti, strategy, seeds), &r);
            trace.insert_str(0, "#answerer=live\n");
            if answerer.failures() > 0 {
                eprintln!("{} query batches fell back to skip", answerer.failures());
            }
            r
        }
    };
    match out {
        Some(p) => fs::write(p, &trace).map_err(|e| format!("{}: {e}", p.display()))?,
        None => print!("{trace}"),
    }
    eprintln!(
        "{task} {strategy} trial {trial}: success={} steps={} replans={} ({})",
        result.success,
        result.steps,
        result.replans,
        result.termination.key()
    );
    Ok(true)
}

fn cmd_replay(trace: &Path) -> Result<bool, String> {
    let r = replay(&read(trace)?).map_err(|e| e.to_string())?;
    println!(
        "success={} steps={} replans={} termination={}",
        r.result.success,
        r.result.steps,
        r.result.replans,
        r.result.termination.key()
    );
    if r.matches {
        println!("replay matches the recorded trace");
    } else {
        println!("replay DIVERGES from the recorded trace");
    }
    Ok(r.matches)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config, csv, json } => cmd_run(config, csv.clone(), json.clone()),
        Command::Validate {
            domain,
            problem,
            plan,
        } => cmd_validate(domain, problem, plan.as_deref()),
        Command::Plan { task, sas } => cmd_plan(task, *sas),
        Command::Trial {
            config,
            task,
            strategy,
            trial,
            out,
            vlm_config,
        } => cmd_trial(
            config,
            task,
            *strategy,
            *trial,
            out.as_deref(),
            vlm_config.as_deref(),
        ),
        Command::Replay { trace } => cmd_replay(trace),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
