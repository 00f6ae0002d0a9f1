use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbds_bench::config::SourceKind;
use rbds_bench::experiment::{prepare_rep, sweep};
use rbds_bench::seeds::{rep_seed, stream, Stream};
use rbds_bench::{run_experiment, ExperimentConfig, ExperimentReport};
use rbds_core::coder::code_with_mode;
use rbds_core::matrix::{load_labels, load_matrix, save_labels, save_matrix, write_atomic};
use rbds_core::methods::{MethodRegistry, RpcaPrecleanLrrs};
use rbds_core::solver::{write_trace, SolveOptions};
use rbds_core::{DataMatrix, Dictionary, Error, MatrixFormat, Result};

#[derive(Parser)]
#[command(
    name = "rbds",
    version,
    about = "Block-diagonal representation experiments"
)]
struct Cli {
    /// Experiment configuration (key=value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Method to run; repeat to run several. Overrides the config.
    #[arg(long = "method", global = true)]
    methods: Vec<String>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset (repetition 0, before splitting).
    Gen {
        #[arg(long, default_value = "csv")]
        format: MatrixFormat,
    },
    /// Fit the first method on repetition 0's training split.
    Train,
    /// Code samples against a dictionary written by `train`.
    Code {
        /// Directory produced by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Matrix of samples to code, one per column.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the full experiment and write the report.
    Eval,
    /// Run one experiment per value of a numeric setting.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Print the summary table of an existing report.csv.
    Report {
        /// Report directory (defaults to --out).
        dir: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn load_config(cli: &Cli) -> Result<Ctx> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if !cli.methods.is_empty() {
        cfg.methods = cli.methods.clone();
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("rbds-out"));
    cfg.output_dir = Some(out.clone());
    Ok(Ctx {
        cfg,
        out,
        quiet: cli.quiet,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn gen(ctx: &Ctx, format: MatrixFormat) -> Result<()> {
    ctx.cfg.validate()?;
    if ctx.cfg.source != SourceKind::Synthetic {
        return Err(Error::Config("gen needs data.source=synthetic".into()));
    }
    ensure_dir(&ctx.out)?;
    let mut spec = ctx.cfg.synthetic.clone();
    spec.seed = stream(rep_seed(ctx.cfg.seed, 0), Stream::Data);
    let ds = rbds_core::datagen::gen_subspaces(&spec)?;
    let name = match format {
        MatrixFormat::Csv => "data.csv",
        MatrixFormat::RawBin => "data.bin",
    };
    save_matrix(ds.data(), ctx.out.join(name), format)?;
    save_labels(ds.labels(), ctx.out.join("labels.txt"))?;
    ctx.say(format!(
        "wrote {} samples of dimension {} to {}",
        ds.len(),
        ds.data().rows(),
        ctx.out.join(name).display()
    ));
    Ok(())
}

fn train(ctx: &Ctx) -> Result<()> {
    ctx.cfg.validate()?;
    let method = &ctx.cfg.methods[0];
    let data = prepare_rep(&ctx.cfg, 0, None)?;
    let mut reg = MethodRegistry::with_builtins();
    reg.register(Box::new(RpcaPrecleanLrrs {
        lambda: ctx.cfg.rpca_lambda,
    }));
    let mut solver = ctx.cfg.solver_for(method)?;
    solver.seed = stream(data.seed, Stream::Solver);
    let model = reg
        .resolve(method)?
        .fit(&data.train, &solver, &SolveOptions::default())?;

    ensure_dir(&ctx.out)?;
    save_matrix(
        &model.dictionary.atoms,
        ctx.out.join("dictionary.csv"),
        MatrixFormat::Csv,
    )?;
    save_labels(
        &model.dictionary.atom_labels,
        ctx.out.join("dictionary_labels.txt"),
    )?;
    save_matrix(
        &DataMatrix::new(model.z_train.clone())?,
        ctx.out.join("z_train.csv"),
        MatrixFormat::Csv,
    )?;
    save_labels(&model.train_labels, ctx.out.join("train_labels.txt"))?;
    save_matrix(
        data.test.data(),
        ctx.out.join("test.csv"),
        MatrixFormat::Csv,
    )?;
    save_labels(data.test.labels(), ctx.out.join("test_labels.txt"))?;
    write_trace(&model.history, ctx.out.join("trace.csv"))?;
    let (p, zj, zl) = model
        .final_residuals()
        .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    let summary = format!(
        "method={method}\nconverged={}\niterations={}\nprimal_residual={p:e}\nzj_residual={zj:e}\nzl_residual={zl:e}\noffblock_ratio={}\nconfig_hash={}\n",
        model.converged,
        model.iterations_used,
        model.offblock_ratio()?,
        ctx.cfg.hash()
    );
    write_atomic(&ctx.out.join("model.txt"), summary.as_bytes())?;
    write_atomic(&ctx.out.join("config.txt"), ctx.cfg.canonical().as_bytes())?;
    ctx.say(summary.trim_end());
    Ok(())
}

fn code(ctx: &Ctx, model: &Path, input: &Path) -> Result<()> {
    ctx.cfg.validate()?;
    let atoms = load_matrix(model.join("dictionary.csv"), MatrixFormat::Csv)?;
    let labels = load_labels(model.join("dictionary_labels.txt"))?;
    let dict = Dictionary::new(atoms, labels)?;
    let x = load_matrix(input, MatrixFormat::from_path(input))?;
    let solver = ctx.cfg.solver_for(&ctx.cfg.methods[0])?;
    let out = code_with_mode(&x, &dict, &solver, ctx.cfg.coding_mode)?;
    ensure_dir(&ctx.out)?;
    save_matrix(
        &DataMatrix::new(out.z_hat)?,
        ctx.out.join("z_hat.csv"),
        MatrixFormat::Csv,
    )?;
    save_matrix(
        &DataMatrix::new(out.e_hat)?,
        ctx.out.join("e_hat.csv"),
        MatrixFormat::Csv,
    )?;
    ctx.say(format!(
        "coded {} samples in {} iterations (converged: {})",
        x.cols(),
        out.iterations_used,
        out.converged
    ));
    Ok(())
}

fn eval(ctx: &Ctx) -> Result<()> {
    let report = run_experiment(&ctx.cfg)?;
    ctx.say(report.render_table());
    ctx.say(format!("wrote {}", ctx.out.join("report.csv").display()));
    Ok(())
}

fn run_sweep(ctx: &Ctx, param: &str, values: &[f64]) -> Result<()> {
    let reports = sweep(&ctx.cfg, param, values)?;
    for (v, r) in values.iter().zip(&reports) {
        ctx.say(format!("{param} = {v}"));
        ctx.say(r.render_table());
    }
    ctx.say(format!("wrote {}", ctx.out.join("sweep.csv").display()));
    Ok(())
}

fn report(ctx: &Ctx, dir: Option<&Path>) -> Result<()> {
    let dir = dir.unwrap_or(&ctx.out);
    let path = dir.join("report.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report = ExperimentReport::from_runs_csv(&text)?;
    print!("{}", report.render_table());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = load_config(&cli)?;
    match &cli.command {
        Command::Gen { format } => gen(&ctx, *format),
        Command::Train => train(&ctx),
        Command::Code { model, input } => code(&ctx, model, input),
        Command::Eval => eval(&ctx),
        Command::Sweep { param, values } => run_sweep(&ctx, param, values),
        Command::Report { dir } => report(&ctx, dir.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
