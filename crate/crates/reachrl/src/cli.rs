//! `reachrl {solve|learn|bench|epsdiff|convert}`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::One;
use reachrl_core::exact::{
    min_gap, optimal_exact, transition_complexity, eps_diff_bound, ExactError,
    DEFAULT_POLICY_CAP,
};
use reachrl_core::learner::{BudgetMode, LearnerConfig, Termination};
use reachrl_core::simulator::LoopMode;
use reachrl_core::{Mdp, Rational};

use crate::harness::{self, Oracle, LEARN_HEADER};
use crate::literal::{format_exact, format_rational};
use crate::mdpx::{parse_mdpx_with_target, write_mdpx, DEFAULT_TARGET_LABEL};
use crate::prism::import_prism_explicit;

#[derive(Debug, Parser)]
#[command(name = "reachrl", version, about = "Reachability learning on explicit-state MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the exact optimal reachability probability.
    Solve(SolveArgs),
    /// Run the staged learner and stream one CSV row per stage.
    Learn(LearnArgs),
    /// Run seeded trials in parallel and write CSV summaries and plots.
    Bench(BenchArgs),
    /// Transition complexity, the gap lower bound and the actual gap.
    Epsdiff(EpsdiffArgs),
    /// Convert a model from another format to MDPX.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// MDPX model file.
    pub model: PathBuf,
    /// Label whose states form the target set.
    #[arg(long, default_value = DEFAULT_TARGET_LABEL)]
    pub target: String,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also print the value of every state.
    #[arg(long)]
    pub all_states: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Practical,
    Theoretical,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Loop {
    Heuristic,
    ExactEc,
}

#[derive(Debug, Args)]
pub struct LearnerFlags {
    #[arg(long, value_enum, default_value = "practical")]
    pub mode: Mode,
    /// How simulation runs detect that they are stuck.
    #[arg(long = "loop", value_enum, default_value = "heuristic")]
    pub loop_mode: Loop,
    /// Exploration probability.
    #[arg(long, default_value_t = LearnerConfig::default().mu)]
    pub mu: f64,
    /// Practical budget coefficient.
    #[arg(long, default_value_t = LearnerConfig::default().c0)]
    pub c0: u64,
    #[arg(long, default_value_t = LearnerConfig::default().max_stages)]
    pub max_stages: u32,
    #[arg(long, default_value_t = LearnerConfig::default().min_stages)]
    pub min_stages: u32,
    /// Stop once re-evaluation improves the error by less than this.
    #[arg(long, default_value_t = LearnerConfig::default().convergence_threshold)]
    pub threshold: f64,
    /// Unroll depth of the theoretical budget (default |S|·k).
    #[arg(long)]
    pub unroll: Option<usize>,
    #[arg(long, env = "REACHRL_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl LearnerFlags {
    pub fn config(&self) -> LearnerConfig {
        LearnerConfig {
            budget: match self.mode {
                Mode::Practical => BudgetMode::Practical,
                Mode::Theoretical => BudgetMode::Theoretical,
            },
            loop_mode: match self.loop_mode {
                Loop::Heuristic => LoopMode::Heuristic,
                Loop::ExactEc => LoopMode::ExactEc,
            },
            mu: self.mu,
            c0: self.c0,
            max_stages: self.max_stages,
            min_stages: self.min_stages,
            convergence_threshold: self.threshold,
            seed: self.seed,
            unroll: self.unroll,
            ..LearnerConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub learner: LearnerFlags,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub learner: LearnerFlags,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub trials: u32,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: available processors).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EpsdiffArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Maximum number of policies to enumerate.
    #[arg(long, default_value_t = DEFAULT_POLICY_CAP)]
    pub cap: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SourceFormat {
    /// PRISM explicit `.tra` + `.lab`.
    Prism,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub from: SourceFormat,
    #[arg(long)]
    pub tra: PathBuf,
    #[arg(long)]
    pub lab: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failed command: message for stderr and exit code.
#[derive(Debug)]
struct Failure(String, i32);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string(), 1)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display()), 1))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure(format!("{}: {e}", path.display()), 1))
}

pub fn load_model(args: &ModelArgs) -> Result<Mdp, String> {
    let text = fs::read_to_string(&args.model).map_err(|e| format!("{}: {e}", args.model.display()))?;
    parse_mdpx_with_target(&text, &args.target).map_err(|e| format!("{}:{e}", args.model.display()))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return e.exit_code();
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => solve(a, stdout),
        Command::Learn(a) => learn(a, stdout, stderr),
        Command::Bench(a) => bench(a, stdout),
        Command::Epsdiff(a) => epsdiff(a, stdout),
        Command::Convert(a) => convert(a, stderr),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure(message, code)) => {
            let _ = writeln!(stderr, "error: {message}");
            code
        }
    }
}

fn solve(a: &SolveArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let m = load_model(&a.model).map_err(|e| Failure(e, 1))?;
    let opt = optimal_exact(&m);
    writeln!(out, "{}", format_exact(opt.at_initial(&m)))?;
    if a.all_states {
        for s in m.states() {
            writeln!(out, "{}\t{}\t{}", s.0, format_exact(&opt.values[s.0]), m.action_name(opt.policy.action(s)))?;
        }
    }
    Ok(())
}

fn learn(a: &LearnArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let m = load_model(&a.model).map_err(|e| Failure(e, 1))?;
    let config = a.learner.config();
    config.check()?;
    let sink: Box<dyn Write + '_> = match &a.out {
        Some(path) => Box::new(io::BufWriter::new(
            fs::File::create(path).map_err(|e| Failure(format!("{}: {e}", path.display()), 1))?,
        )),
        None => Box::new(stdout),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(LEARN_HEADER)?;
    w.flush()?;
    let oracle = Oracle::new(&m);
    let mut write_err = None;
    let trial = harness::run_trial(&m, &oracle, config, |row| {
        if write_err.is_none() {
            if let Err(e) = w.write_record(row.learn_record()).and_then(|()| Ok(w.flush()?)) {
                write_err = Some(e);
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let mut sink = w.into_inner().map_err(|e| Failure(e.to_string(), 1))?;
    if let Some(e) = trial.error {
        writeln!(sink, "# error: {e}")?;
        sink.flush()?;
        return Err(Failure(e.to_string(), 2));
    }
    sink.flush()?;
    let how = match trial.termination {
        Some(Termination::Converged) => "converged",
        _ => "stage limit reached",
    };
    writeln!(stderr, "{how} after {} stages", trial.rows.len())?;
    Ok(())
}

fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let m = load_model(&a.model).map_err(|e| Failure(e, 1))?;
    let config = a.learner.config();
    config.check()?;
    let jobs = a.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let seeds = harness::seed_list(a.learner.seed, a.trials as usize);
    let results = harness::run_bench(&m, config, &seeds, jobs);
    let agg = harness::write_bench_artifacts(&a.out, &results)?;
    let failed = results.iter().filter(|t| t.error.is_some()).count();
    if let Some(last) = agg.last() {
        writeln!(
            out,
            "{} trials, {} stages, final median L = {}, U = {}, policy value = {}",
            results.len(),
            last.k,
            last.lower.0,
            last.upper.0,
            last.value.0
        )?;
    }
    if failed > 0 {
        let first = results.iter().find_map(|t| t.error.as_ref()).expect("counted above");
        return Err(Failure(format!("{failed} trials failed: {first}"), 2));
    }
    Ok(())
}

fn power_of_two_exponent(r: &Rational) -> Option<u64> {
    let tz = r.denom().trailing_zeros()?;
    (r.numer().is_one() && (r.denom() >> tz).is_one()).then_some(tz)
}

fn epsdiff(a: &EpsdiffArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let m = load_model(&a.model).map_err(|e| Failure(e, 1))?;
    let bound = eps_diff_bound(&m);
    writeln!(out, "D = {}", transition_complexity(&m))?;
    match power_of_two_exponent(&bound) {
        Some(e) => writeln!(out, "bound = 2^-{e}")?,
        None => writeln!(out, "bound = {}", format_rational(&bound))?,
    }
    let cert = match min_gap(&m, a.cap) {
        Ok(c) => c,
        Err(ExactError::TooManyPolicies { count, cap }) => {
            writeln!(out, "policies ~ {count:e}")?;
            return Err(Failure(format!("refusing to enumerate about {count:e} policies (cap {cap})"), 3));
        }
        Err(e) => return Err(e.into()),
    };
    let opt = |r: &Option<Rational>| r.as_ref().map_or_else(|| "none".to_string(), format_rational);
    writeln!(out, "policies = {}", cert.policies)?;
    writeln!(out, "optimal = {}", format_rational(&cert.optimal_value))?;
    writeln!(out, "eps_diff = {}", opt(&cert.eps_diff))?;
    writeln!(out, "min_l1 = {}", opt(&cert.min_l1_distance))?;
    if let Some(gap) = &cert.eps_diff {
        let holds = gap >= &cert.bound;
        writeln!(out, "eps_diff >= bound: {holds}")?;
    }
    Ok(())
}

fn convert(a: &ConvertArgs, stderr: &mut dyn Write) -> Result<(), Failure> {
    match a.from {
        SourceFormat::Prism => {
            let tra = read(&a.tra)?;
            let lab = read(&a.lab)?;
            let import = import_prism_explicit(&tra, &lab, &a.target)
                .map_err(|e| Failure(format!("{} / {}: {e}", a.tra.display(), a.lab.display()), 1))?;
            for w in &import.warnings {
                writeln!(stderr, "warning: {w}")?;
            }
            write_file(&a.out, &write_mdpx(&import.mdp))?;
            writeln!(stderr, "wrote {} ({} states)", a.out.display(), import.mdp.num_states())?;
        }
    }
    Ok(())
}
