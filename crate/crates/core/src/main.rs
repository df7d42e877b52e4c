use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use next_planner::bench::{
    normalize, render_tree_svg, run_benchmark, run_planner, BenchConfig, BenchReport, BenchRow, PlannerKind, TreeFile,
    CSV_HEADER,
};
use next_planner::env::{generate_problem, PlanningProblem, ProblemOptions, RobotKind};
use next_planner::guidance::{load_checkpoint, CellKind, GuidanceParams, Hyper};
use next_planner::msil::{train, MsilConfig, OptimizerKind, UcbSettings, DEFAULT_BUDGET, DEFAULT_CLIP_NORM, DEFAULT_K};
use next_planner::rng::derive_seed;
use next_planner::tree::DEFAULT_ETA;
use next_planner::{Error, Result};

#[derive(Parser)]
#[command(name = "next-mp", version, about = "Learned tree-based sampling motion planners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expansion iterations per problem.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    /// Policy candidates per guided expansion.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Steering radius.
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Exploration weight of the confidence score.
    #[arg(long, default_value_t = UcbSettings::ks().lambda)]
    lambda: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated problems as JSON files.
    Gen {
        #[arg(long, default_value = "point2")]
        robot: RobotKind,
        #[arg(short = 'n', default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the guidance network by self-improvement.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "point2")]
        robot: RobotKind,
        /// Training problems; generated from --seed when absent.
        #[arg(long)]
        problems_dir: Option<PathBuf>,
        /// Problems to generate when no directory is given (defaults to --epochs).
        #[arg(short = 'n')]
        n: Option<usize>,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        /// Gradient steps per epoch.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value = "adam")]
        optimizer: OptimizerKind,
        /// Gradient-norm cap; 0 disables clipping.
        #[arg(long, default_value_t = DEFAULT_CLIP_NORM)]
        clip_norm: f64,
        /// Problems between parameter updates.
        #[arg(long, default_value_t = 1)]
        update_every: usize,
        /// Initial parameters; a fresh network when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        sigma_policy: Option<f64>,
        #[arg(long)]
        tvi: Option<usize>,
        #[arg(long)]
        cell: Option<CellKind>,
        /// Output directory for the log and checkpoints.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan one problem and print its result row.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value = "rrt-star")]
        planner: PlannerKind,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        sigma_policy: Option<f64>,
        /// SVG rendering of the final tree.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON dump of the final tree.
        #[arg(long)]
        tree_out: Option<PathBuf>,
    },
    /// Run planners over a problem set and write a CSV report.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        problems_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "rrt-star,est")]
        planner: Vec<PlannerKind>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        sigma_policy: Option<f64>,
        #[arg(long, default_value = "rrt-star")]
        baseline: PlannerKind,
        /// Record wall-clock time per run (makes the report non-reproducible).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        wall_cap_ms: Option<u64>,
        /// CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a problem and optionally a saved tree as SVG.
    Render {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_dir(dir: &Path) -> Result<Vec<PlanningProblem>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no .json problems in {}", dir.display())));
    }
    files
        .iter()
        .map(|f| PlanningProblem::load(f).map_err(|e| Error::ProblemFormat(format!("{}: {e}", f.display()))))
        .collect()
}

fn load_params(path: Option<&Path>, sigma: Option<f64>) -> Result<Option<GuidanceParams<f32>>> {
    let Some(path) = path else { return Ok(None) };
    let mut params = load_checkpoint(path)?;
    if let Some(s) = sigma {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument("--sigma-policy must be finite and non-negative".into()));
        }
        params.set_sigma_policy(s);
    }
    Ok(Some(params))
}

fn bench_config(c: &Common) -> BenchConfig {
    BenchConfig {
        budget: c.budget,
        k: c.k,
        eta: c.eta,
        lambda: c.lambda,
        seed: c.seed,
        ..BenchConfig::default()
    }
}

fn print_summary(report: &BenchReport, baseline: PlannerKind) {
    let norm = normalize(report, baseline).ok();
    for s in report.summaries() {
        let n = norm.as_ref().and_then(|n| n.get(s.planner));
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        eprintln!(
            "{:<13} success {:.3}  checks {:.1}  cost {}  norm checks {}  norm cost {}",
            s.planner.name(),
            s.success_rate,
            s.mean_checks,
            fmt(s.mean_cost),
            fmt(n.and_then(|n| n.checks)),
            fmt(n.and_then(|n| n.cost)),
        );
    }
    for r in report.failures() {
        eprintln!("failed {:016x} {}: {}", r.problem_id, r.planner, r.error.as_deref().unwrap_or(""));
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { robot, n, seed, out } => {
            std::fs::create_dir_all(&out)?;
            let opts = ProblemOptions::for_robot(robot);
            for i in 0..n {
                let p = generate_problem(robot, derive_seed(seed, &[i as u64]), &opts)?;
                p.save(out.join(format!("{}_{i:04}.json", robot.name())))?;
            }
            eprintln!("wrote {n} {robot} problems to {}", out.display());
        }
        Command::Train {
            common,
            robot,
            problems_dir,
            n,
            epochs,
            steps,
            batch,
            lr,
            optimizer,
            clip_norm,
            update_every,
            checkpoint,
            sigma_policy,
            tvi,
            cell,
            out,
        } => {
            let problems = match problems_dir {
                Some(dir) => load_dir(&dir)?,
                None => {
                    let opts = ProblemOptions::for_robot(robot);
                    (0..n.unwrap_or(epochs).max(1))
                        .map(|i| generate_problem(robot, derive_seed(common.seed, &[2, i as u64]), &opts))
                        .collect::<Result<_>>()?
                }
            };
            let robot = problems[0].robot.kind;
            let params = match load_params(checkpoint.as_deref(), sigma_policy)? {
                Some(p) => {
                    if tvi.is_some() || cell.is_some() {
                        return Err(Error::InvalidArgument("--tvi and --cell only apply to a fresh network".into()));
                    }
                    p
                }
                None => {
                    let mut h = Hyper::for_robot(robot, common.eta);
                    if let Some(s) = sigma_policy {
                        h.sigma_policy = s;
                    }
                    if let Some(t) = tvi {
                        h.t_vi = t;
                    }
                    if let Some(c) = cell {
                        h.cell = c;
                    }
                    GuidanceParams::init(h, common.seed)?
                }
            };
            let mut cfg = MsilConfig::new(epochs);
            cfg.steps_per_epoch = steps;
            cfg.batch_size = batch;
            cfg.learning_rate = lr;
            cfg.optimizer = optimizer;
            cfg.clip_norm = (clip_norm > 0.0).then_some(clip_norm);
            cfg.update_every = update_every;
            cfg.seed = common.seed;
            cfg.planner.budget = common.budget;
            cfg.planner.k = common.k;
            cfg.planner.eta = common.eta;
            cfg.planner.ucb.lambda = common.lambda;
            let result = train(&cfg, &problems, params, Some(&out))?;
            let wins = result.log.len().min(50).max(1);
            let rate = |recs: &[next_planner::msil::EpochRecord]| {
                recs.iter().filter(|r| r.success).count() as f64 / recs.len().max(1) as f64
            };
            eprintln!(
                "trained {epochs} epochs: success {:.3} in the first {wins}, {:.3} in the last {wins}; buffer {}",
                rate(&result.log[..wins.min(result.log.len())]),
                rate(&result.log[result.log.len().saturating_sub(wins)..]),
                result.buffer.len()
            );
        }
        Command::Plan {
            common,
            problem,
            planner,
            checkpoint,
            sigma_policy,
            out,
            tree_out,
        } => {
            let p = PlanningProblem::load(&problem)?;
            let params = load_params(checkpoint.as_deref(), sigma_policy)?;
            if planner.needs_network() && params.is_none() {
                return Err(Error::InvalidArgument(format!("planner {planner} needs --checkpoint")));
            }
            let cfg = bench_config(&common);
            let seed = derive_seed(common.seed, &[p.id(), planner.code()]);
            let r = run_planner(planner, &p, params.as_ref(), &cfg, seed)?;
            let row = BenchRow {
                problem_id: p.id(),
                planner,
                success: r.success,
                collision_checks: r.collision_checks,
                samples: r.samples_used,
                path_cost: r.path_cost,
                wall_ms: 0,
                seed,
                error: None,
            };
            println!("{CSV_HEADER}\n{}", row.csv_row());
            if let Some(svg) = out {
                let rendered = render_tree_svg(&p, &r.tree, r.path.as_deref());
                if let Some(w) = &rendered.warning {
                    eprintln!("warning: {w}");
                }
                std::fs::write(svg, rendered.svg)?;
            }
            if let Some(path) = tree_out {
                std::fs::write(path, TreeFile::from_tree(&r.tree).to_json()?)?;
            }
        }
        Command::Bench {
            common,
            problems_dir,
            planner,
            checkpoint,
            sigma_policy,
            baseline,
            timing,
            wall_cap_ms,
            out,
        } => {
            let problems = load_dir(&problems_dir)?;
            let params = load_params(checkpoint.as_deref(), sigma_policy)?;
            let cfg = BenchConfig {
                timing,
                wall_cap: wall_cap_ms.map(Duration::from_millis),
                ..bench_config(&common)
            };
            let report = run_benchmark(&problems, &planner, params.as_ref(), &cfg)?;
            match out {
                Some(path) => report.write_csv(path)?,
                None => print!("{}", report.to_csv()),
            }
            print_summary(&report, baseline);
        }
        Command::Render { problem, tree, out } => {
            let p = PlanningProblem::load(&problem)?;
            let tree = match tree {
                Some(t) => TreeFile::from_json(&std::fs::read_to_string(t)?)?.into_tree()?,
                None => next_planner::tree::SearchTree::new(p.start.clone()),
            };
            if tree.config(0).dim() != p.dof() {
                return Err(Error::InvalidArgument("tree does not match the problem dimension".into()));
            }
            let path = tree.goal_leaf.map(|leaf| next_planner::tree::extract_path(&tree, leaf).0);
            let rendered = render_tree_svg(&p, &tree, path.as_deref());
            if let Some(w) = &rendered.warning {
                eprintln!("warning: {w}");
            }
            std::fs::write(out, rendered.svg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
