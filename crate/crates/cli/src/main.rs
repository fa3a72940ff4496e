use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use apfsm::analysis::{
    deadline_curve, expected_reward, outcome_summary, reach, CurveRange, Direction,
    RewardStructure, SolveOptions,
};
use apfsm::microsim::{calibrate, ActionStats, MicroParams};
use apfsm::montecarlo::{
    estimate, sample_path, CornerScheduler, DEFAULT_STEP_CAP, ESTIMATE_CSV_HEADER,
};
use apfsm::scenario::{generate_model, ScenarioError, ScenarioParams};
use apfsm::statespace::{classify_terminals, ABSORBING};
use apfsm::{build, load_model, BuildMode, BuildOptions, Machine, StateSpace64};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "apfsm",
    version,
    about = "Explicit-state analysis of autonomous probabilistic state machines"
)]
struct Cli {
    /// Worker threads for building and analysis (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and type-check a model; silent on success.
    Validate { model: PathBuf },
    /// Build the state space and report its size.
    Build {
        model: PathBuf,
        #[command(flatten)]
        build: BuildArgs,
        /// Write the build statistics as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probability of eventually reaching a label.
    Check {
        model: PathBuf,
        #[arg(long)]
        target: String,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probability of each outcome category.
    Outcomes {
        model: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deadline curve as CSV: `T,min,max,uniform`.
    Curve {
        model: PathBuf,
        #[arg(long)]
        target: String,
        /// Mission-time variable.
        #[arg(long, default_value = "t")]
        time: String,
        #[arg(long, default_value_t = 0)]
        from: i64,
        #[arg(long)]
        to: i64,
        #[arg(long, default_value_t = 1)]
        step: i64,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expected accumulated reward until absorption.
    Reward {
        model: PathBuf,
        #[arg(long)]
        reward: String,
        #[arg(long, default_value = ABSORBING)]
        target: String,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of eventually visiting a label.
    Simulate {
        model: PathBuf,
        #[arg(short = 'n', long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        event: String,
        /// How interval corners are drawn: uniform, lo or hi.
        #[arg(long, default_value = "uniform")]
        scheduler: CornerScheduler,
        /// Paths longer than this are cut and count as misses.
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        steps: usize,
        /// Write the estimate as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one sample path drawn with `--seed`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the micro-simulation and write action statistics.
    Calibrate {
        /// Micro-simulation parameters as JSON; defaults apply when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the search-and-transport model.
    GenScenario {
        /// Scenario parameters as JSON; the desk scenario when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Override one parameter, e.g. `--set width=10` or `--set approach_time=[3,4]`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Action statistics from `calibrate`.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BuildArgs {
    /// autonomous, interval or uniform; interval when the model has
    /// non-degenerate intervals, autonomous otherwise.
    #[arg(long)]
    mode: Option<BuildMode>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    build: BuildArgs,
    /// min, max or fixed; fixed on a DTMC, required otherwise.
    #[arg(long)]
    dir: Option<Direction>,
    /// Relative convergence tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

enum Failure {
    Usage(String),
    Model(String),
}

impl Failure {
    fn model(e: impl fmt::Display) -> Self {
        Failure::Model(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Model(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Validate { model } => {
            load(&model)?;
            Ok(())
        }
        Command::Build { model, build, out } => {
            let m = load(&model)?;
            let mode = build.resolve(&m);
            let ss = build_space(&m, mode)?;
            let st = ss.stats();
            println!(
                "{mode} build: {} states, {} choices, {} transitions, {} initial, {} deadlocks, {:.3} s",
                st.states,
                st.choices,
                st.transitions,
                st.initial_states,
                st.deadlocks,
                st.seconds
            );
            if let Some(out) = out {
                let doc = json!({
                    "mode": mode,
                    "states": st.states,
                    "choices": st.choices,
                    "transitions": st.transitions,
                    "max_choices": st.max_choices,
                    "initial_states": st.initial_states,
                    "deadlocks": st.deadlocks,
                });
                write_atomic(&out, &pretty(&doc))?;
            }
            Ok(())
        }
        Command::Check {
            model,
            target,
            solve,
            out,
        } => {
            let m = load(&model)?;
            let ss = build_space(&m, solve.build.resolve(&m))?;
            let dir = solve.direction(&ss)?;
            let v = reach(&ss, &target, dir, &solve.options()?).map_err(Failure::model)?;
            let p = v.initial_value();
            println!("{p:.10}");
            if let Some(out) = out {
                let doc = json!({
                    "objective": v.objective.description,
                    "mode": ss.mode(),
                    "value": p,
                    "iterations": v.convergence.iterations,
                });
                write_atomic(&out, &pretty(&doc))?;
            }
            Ok(())
        }
        Command::Outcomes { model, solve, out } => {
            let m = load(&model)?;
            let ss = build_space(&m, solve.build.resolve(&m))?;
            let dir = solve.direction(&ss)?;
            let part = classify_terminals(&ss).map_err(Failure::model)?;
            let summary =
                outcome_summary(&ss, &part, dir, &solve.options()?).map_err(Failure::model)?;
            for (name, p) in &summary.categories {
                println!("{name} {p:.10}");
            }
            if let Some(out) = out {
                write_atomic(&out, &pretty(&summary))?;
            }
            Ok(())
        }
        Command::Curve {
            model,
            target,
            time,
            from,
            to,
            step,
            build,
            tol,
            out,
        } => {
            let range =
                CurveRange::new(from, to, step).map_err(|e| Failure::Usage(e.to_string()))?;
            let opts = options(tol)?;
            let m = load(&model)?;
            let mode = build.resolve(&m);
            let ss = build_space(&m, mode)?;
            let uniform = if ss.is_dtmc() {
                None
            } else {
                Some(build_space(&m, BuildMode::Uniform)?)
            };
            let curve = deadline_curve(&ss, uniform.as_ref(), &target, &time, &range, &opts)
                .map_err(Failure::model)?;
            let csv = curve.to_csv();
            match out {
                Some(out) => {
                    write_atomic(&out, &csv)?;
                    println!(
                        "{} deadlines written to {}",
                        curve.points.len(),
                        out.display()
                    );
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Reward {
            model,
            reward,
            target,
            solve,
            out,
        } => {
            let m = load(&model)?;
            let ss = build_space(&m, solve.build.resolve(&m))?;
            let dir = solve.direction(&ss)?;
            let rs = RewardStructure::from_model(&ss, &m, &reward).map_err(Failure::model)?;
            let v = expected_reward(&ss, &rs, &target, dir, &solve.options()?)
                .map_err(Failure::model)?;
            let r = v.initial_value();
            println!("{r:.10}");
            if let Some(out) = out {
                let doc =
                    json!({ "reward": reward, "target": target, "direction": dir, "value": r });
                write_atomic(&out, &pretty(&doc))?;
            }
            Ok(())
        }
        Command::Simulate {
            model,
            samples,
            seed,
            event,
            scheduler,
            steps,
            out,
            trace,
        } => {
            if samples == 0 {
                return Err(Failure::Usage("-n must be positive".into()));
            }
            let m = load(&model)?;
            let est =
                estimate(&m, &event, samples, seed, scheduler, steps).map_err(Failure::model)?;
            println!(
                "{event}: {:.6} in [{:.6}, {:.6}] from {} paths ({} truncated), seed {seed}",
                est.point, est.lo, est.hi, est.n, est.truncated
            );
            if let Some(out) = out {
                write_atomic(&out, &format!("{ESTIMATE_CSV_HEADER}\n{}\n", est.csv_row()))?;
            }
            if let Some(path) = trace {
                let t = sample_path(&m, scheduler, seed, steps).map_err(Failure::model)?;
                write_atomic(&path, &t.dump(&m))?;
            }
            Ok(())
        }
        Command::Calibrate {
            params,
            seed,
            trials,
            out,
        } => {
            let mut p = match params {
                Some(path) => serde_json::from_str::<MicroParams>(&read(&path)?)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
                None => MicroParams::default(),
            };
            if let Some(s) = seed {
                p.seed = s;
            }
            if let Some(n) = trials {
                p.trials = n;
            }
            let stats = calibrate(&p).map_err(Failure::model)?;
            for (name, s) in &stats.0 {
                let prob = s.prob.map(|p| format!(", p {p:.4}")).unwrap_or_default();
                println!(
                    "{name}: time {:.3} [{}..{}], battery {:.3} [{}..{}]{prob}",
                    s.time.mean, s.time.lo, s.time.hi, s.battery.mean, s.battery.lo, s.battery.hi
                );
            }
            write_atomic(&out, &stats.to_json())
        }
        Command::GenScenario {
            params,
            set,
            stats,
            out,
        } => {
            let mut p = match params {
                Some(path) => serde_json::from_str::<ScenarioParams>(&read(&path)?)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
                None => ScenarioParams::default(),
            };
            if let Some(path) = stats {
                let s = ActionStats::from_json(&read(&path)?)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                p.apply_stats(&s).map_err(scenario_failure)?;
            }
            for kv in &set {
                let (k, v) = kv.split_once('=').ok_or_else(|| {
                    Failure::Usage(format!("--set expects KEY=VALUE, got `{kv}`"))
                })?;
                p.set(k.trim(), v.trim()).map_err(scenario_failure)?;
            }
            let text = generate_model(&p).map_err(scenario_failure)?;
            write_atomic(&out, &text)?;
            println!(
                "{}x{} arena, {} object(s), about {} states, written to {}",
                p.width,
                p.height,
                p.objects,
                p.estimated_states(),
                out.display()
            );
            Ok(())
        }
    }
}

impl BuildArgs {
    fn resolve(&self, m: &Machine) -> BuildMode {
        self.mode
            .unwrap_or(if m.model().has_nondegenerate_intervals() {
                BuildMode::Interval
            } else {
                BuildMode::Autonomous
            })
    }
}

impl SolveArgs {
    fn direction(&self, ss: &StateSpace64) -> Result<Direction, Failure> {
        match self.dir {
            Some(d) => Ok(d),
            None if ss.is_dtmc() => Ok(Direction::Fixed),
            None => Err(Failure::Usage(
                "the state space has non-deterministic choices; pass --dir min or --dir max".into(),
            )),
        }
    }

    fn options(&self) -> Result<SolveOptions, Failure> {
        options(self.tol)
    }
}

fn options(tol: f64) -> Result<SolveOptions, Failure> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Failure::Usage(format!(
            "--tol must lie in (0, 1), got {tol}"
        )));
    }
    Ok(SolveOptions {
        tolerance: tol,
        ..Default::default()
    })
}

fn scenario_failure(e: ScenarioError) -> Failure {
    match e {
        ScenarioError::UnknownKey(_) => Failure::Usage(format!(
            "{e} (known: {})",
            ScenarioParams::keys().join(", ")
        )),
        other => Failure::model(other),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Machine, Failure> {
    let text = read(path)?;
    let model = load_model(&text).map_err(|diags| {
        let lines: Vec<String> = diags
            .iter()
            .map(|d| format!("{}:{d}", path.display()))
            .collect();
        Failure::Model(lines.join("\n"))
    })?;
    Machine::new(&model).map_err(|e| Failure::Model(format!("{}: {e}", path.display())))
}

fn build_space(m: &Machine, mode: BuildMode) -> Result<StateSpace64, Failure> {
    let start = Instant::now();
    let ss = build(m, &BuildOptions::from_env(mode)).map_err(Failure::model)?;
    eprintln!(
        "built {} states, {} transitions in {:.2} s",
        ss.state_count(),
        ss.transition_count(),
        start.elapsed().as_secs_f64()
    );
    Ok(ss)
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serialises");
    s.push('\n');
    s
}

/// Writes next to the destination and renames, so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> Outcome {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Failure::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let io = |e: std::io::Error| Failure::Usage(format!("{}: {e}", path.display()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(contents.as_bytes())?;
            f.sync_all()
        })
        .and_then(|()| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}
