use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vfea_core::harness::{
    bench, emit_report, evaluate_ir, run_case_with_artifacts, CaseSpec, HarnessConfig, Report, ReportFormat,
    DEFAULT_MATCH_TOLERANCE,
};
use vfea_core::ir::{deserialize, serialize};
use vfea_core::memory::MemoryBuffer;
use vfea_core::sandbox::{execute_workspace_script, ExecutionMode, Limits};
use vfea_core::synthesis::make_generator;
use vfea_core::validation::audit;

const EXIT_CASE_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const WORKSPACE_ENV: &str = "VFEA_WORKSPACE_ROOT";

#[derive(Parser)]
#[command(name = "vfea", version, about = "Drawing to structural analysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Perceive a drawing, synthesize and execute the analysis script.
    Run(RunArgs),
    /// Audit an IR document.
    Validate {
        #[arg(long)]
        ir: PathBuf,
    },
    /// Score a predicted IR against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MATCH_TOLERANCE)]
        tol: f64,
    },
    /// Run every case in a suite directory.
    Bench(BenchArgs),
    /// Execute a workspace's script and print the outcome as JSON.
    #[command(hide = true)]
    Exec {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        max_statements: usize,
        #[arg(long)]
        max_dofs: usize,
        #[arg(long)]
        max_wall_time: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Isolation {
    InProcess,
    Subprocess,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, default_value_t = 3)]
    max_retries: usize,
    /// perfect, faulty:KIND[:stubborn] or external:URL
    #[arg(long, default_value = "perfect")]
    generator: String,
    #[arg(long, value_enum, default_value = "on")]
    fallback: Switch,
    /// JSONL experience buffer shared by every case.
    #[arg(long)]
    memory: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "in-process")]
    isolation: Isolation,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    drawing: PathBuf,
    #[arg(long)]
    context: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "run")]
    task_id: String,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long, default_value = "vfea-bench")]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn harness_config(p: &PipelineArgs, out: &Path) -> Result<HarnessConfig, String> {
    make_generator(&p.generator).map_err(|e| e.to_string())?;
    let root = std::env::var_os(WORKSPACE_ENV).map(PathBuf::from).unwrap_or_else(|| out.join("workspaces"));
    let mut cfg = HarnessConfig::new(root);
    cfg.generator = p.generator.clone();
    cfg.synthesis.max_retries = p.max_retries;
    cfg.synthesis.fallback = matches!(p.fallback, Switch::On);
    if let Isolation::Subprocess = p.isolation {
        let program = std::env::current_exe().map_err(|e| format!("cannot locate the vfea binary: {e}"))?;
        cfg.synthesis.execution = ExecutionMode::Subprocess { program };
    }
    if let Some(path) = &p.memory {
        cfg.memory = Some(Arc::new(MemoryBuffer::open(path).map_err(|e| e.to_string())?));
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn run(args: RunArgs) -> ExitCode {
    if let Err(e) = fs::create_dir_all(&args.out) {
        return config_error(format!("cannot create {}: {e}", args.out.display()));
    }
    let cfg = match harness_config(&args.pipeline, &args.out) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let case = match CaseSpec::new(args.task_id, &args.drawing, &args.context, args.truth.as_deref()) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let (report, artifacts) = match run_case_with_artifacts(&case, &cfg) {
        Ok(r) => r,
        Err(e) => return config_error(e),
    };
    let mut outputs = vec![
        ("report.json", emit_report(Report::Case(&report), ReportFormat::StructuredText)),
        ("report.md", emit_report(Report::Case(&report), ReportFormat::Markdown)),
    ];
    if let Some(m) = &artifacts.model {
        outputs.push(("ir.json", serialize(m)));
    }
    if let Some(t) = &artifacts.trace {
        outputs.push(("trace.json", serde_json::to_string_pretty(t).expect("traces serialize") + "\n"));
    }
    if let Some(s) = &artifacts.synthesis {
        outputs.push(("script.sim", s.script.clone()));
        outputs.push(("results.res", s.results.to_document()));
    }
    for (name, text) in &outputs {
        if let Err(e) = write(&args.out.join(name), text) {
            return config_error(e);
        }
    }
    print!("{}", emit_report(Report::Case(&report), ReportFormat::Markdown));
    if report.execution_success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CASE_FAILURE)
    }
}

fn run_bench(args: BenchArgs) -> ExitCode {
    if args.parallel == 0 {
        return config_error("--parallel must be at least 1");
    }
    if let Err(e) = fs::create_dir_all(&args.out) {
        return config_error(format!("cannot create {}: {e}", args.out.display()));
    }
    let cfg = match harness_config(&args.pipeline, &args.out) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let (summary, cases) = match bench(&args.suite, &cfg, args.parallel) {
        Ok(r) => r,
        Err(e) => return config_error(e),
    };
    let doc = Report::Suite { summary: &summary, cases: &cases };
    let md = emit_report(doc, ReportFormat::Markdown);
    for (name, text) in [("report.json", emit_report(doc, ReportFormat::StructuredText)), ("report.md", md.clone())] {
        if let Err(e) = write(&args.out.join(name), &text) {
            return config_error(e);
        }
    }
    print!("{md}");
    if cases.iter().all(|c| c.execution_success) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CASE_FAILURE)
    }
}

fn validate(ir: &Path) -> ExitCode {
    let text = match fs::read_to_string(ir) {
        Ok(t) => t,
        Err(e) => return config_error(format!("cannot read {}: {e}", ir.display())),
    };
    match deserialize(&text) {
        Ok(model) => {
            let report = audit(&model, None);
            print!("{}", report.to_text());
            if report.clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CASE_FAILURE)
            }
        }
        Err(e) => {
            println!("{e}");
            ExitCode::from(EXIT_CASE_FAILURE)
        }
    }
}

fn eval(pred: &Path, truth: &Path, tol: f64) -> ExitCode {
    let load = |p: &Path| -> Result<_, String> {
        let text = fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
        deserialize(&text).map_err(|e| format!("{}: {e}", p.display()))
    };
    if !(tol > 0.0 && tol.is_finite()) {
        return config_error("--tol must be positive");
    }
    match (load(pred), load(truth)) {
        (Ok(p), Ok(t)) => {
            println!("{}", serde_json::to_string_pretty(&evaluate_ir(&p, &t, tol)).expect("metrics serialize"));
            ExitCode::SUCCESS
        }
        (Err(e), _) | (_, Err(e)) => config_error(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run(args) => run(args),
        Command::Bench(args) => run_bench(args),
        Command::Validate { ir } => validate(&ir),
        Command::Eval { pred, truth, tol } => eval(&pred, &truth, tol),
        Command::Exec { workspace, max_statements, max_dofs, max_wall_time } => {
            let limits = Limits { max_statements, max_solver_dofs: max_dofs, max_wall_time };
            if !limits.is_valid() {
                return config_error("limits must be positive");
            }
            let outcome = execute_workspace_script(&workspace, &limits);
            println!("{}", serde_json::to_string(&outcome).expect("outcomes serialize"));
            ExitCode::SUCCESS
        }
    }
}
