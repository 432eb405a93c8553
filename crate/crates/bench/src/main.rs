use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use avsvm::data::{DelimitedOptions, LabelColumn, LabelMap};
use avsvm::{
    CombinerConfig, Error, KernelSpec, Normalization, PsdMode, Result, ScalingMode, SolverConfig, TestEvalMode,
};
use avsvm_bench::{
    emit_report, gaussian_menu, run_oneclass, run_param_select, run_table1, DatasetSource, ExperimentConfig, Format,
    OneClassConfig, PARAM_SELECT_WIDTHS,
};

#[derive(Parser)]
#[command(name = "bench", version, about = "Kernel-combination SVM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Polynomial, gaussian and linear SVMs against their AV combination.
    Table1(ExperimentArgs),
    /// Gaussian SVMs over a range of widths against their AV combination.
    Paramselect {
        #[command(flatten)]
        common: ExperimentArgs,
        /// Comma-separated gaussian widths.
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<f64>>,
    },
    /// One-class SVM over a dataset; writes flagged indices as CSV.
    Oneclass(OneClassArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Delimited or sparse (`.svm`, `.libsvm`) file; the bundled cancer table
    /// when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Delimited input has a header row.
    #[arg(long)]
    header: bool,
    /// Zero-based label column of delimited input (default: last).
    #[arg(long)]
    label_column: Option<usize>,
    /// Label mapping such as `yes=+1,no=-1`.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long, default_value = ",")]
    delimiter: char,
}

impl DataArgs {
    fn source(&self) -> Result<DatasetSource> {
        let Some(path) = &self.data else {
            return Ok(DatasetSource::Bundled);
        };
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if matches!(ext, "svm" | "libsvm" | "sparse") {
            return Ok(DatasetSource::Sparse(path.clone()));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::InvalidParameter(
                "delimiter must be a single ASCII character".into(),
            ));
        }
        Ok(DatasetSource::Delimited {
            path: path.clone(),
            options: DelimitedOptions {
                delimiter: self.delimiter as u8,
                has_header: self.header,
                label_column: self.label_column.map_or(LabelColumn::Last, LabelColumn::Index),
                label_map: match &self.labels {
                    Some(m) => m.parse()?,
                    None => LabelMap::default(),
                },
            },
        })
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    /// Training fraction of each partition.
    #[arg(long, default_value_t = 0.7)]
    ratio: f64,
    /// Default C.
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    /// Additional C values evaluated alongside the default.
    #[arg(long, value_delimiter = ',')]
    c_sweep: Option<Vec<f64>>,
    /// none | unit | zscore
    #[arg(long, default_value = "none")]
    scaling: ScalingMode,
    /// none | shift | clip
    #[arg(long, default_value = "clip")]
    psd: PsdMode,
    /// avg | pred
    #[arg(long, default_value = "pred")]
    test_eval: TestEvalMode,
    /// none | cosine | trace
    #[arg(long, default_value = "cosine")]
    normalize: Normalization,
    /// av | half_abs | threshold:<t>
    #[arg(long, default_value = "av")]
    combine: avsvm::GFunction,
    #[arg(long, default_value_t = 1e-3)]
    kkt_tol: f64,
    #[arg(long, default_value_t = 10_000_000)]
    max_iter: u64,
    /// Output directory for report.json, report.csv and report.md.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        cfg.dataset = self.data.source()?;
        cfg.plan.master_seed = self.seed;
        cfg.plan.repetitions = self.splits;
        cfg.plan.train_fraction = self.ratio;
        cfg.c_default = self.c;
        if let Some(sweep) = &self.c_sweep {
            cfg.c_sweep = sweep.clone();
        }
        cfg.scaling = self.scaling;
        cfg.psd = self.psd;
        cfg.normalization = self.normalize;
        cfg.combiner = CombinerConfig {
            g_function: self.combine,
            test_eval: self.test_eval,
        };
        cfg.solver = SolverConfig {
            kkt_tol: self.kkt_tol,
            max_iterations: self.max_iter,
            ..SolverConfig::default()
        };
        Ok(cfg)
    }
}

#[derive(Args)]
struct OneClassArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    nu: f64,
    #[arg(long, default_value = "gauss:c=1")]
    kernel: KernelSpec,
    #[arg(long, default_value = "none")]
    scaling: ScalingMode,
    #[arg(long, default_value_t = 1e-3)]
    kkt_tol: f64,
    /// Outlier CSV path (stdout when omitted).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for oneclass.json and outliers.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write(path: PathBuf, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(&path, body).map_err(|e| Error::Io { path, source: e })
}

fn experiment(cfg: ExperimentConfig, table1: bool, out: Option<&PathBuf>) -> Result<()> {
    let started = Instant::now();
    let report = if table1 {
        run_table1(&cfg)?
    } else {
        run_param_select(&cfg)?
    };
    eprintln!("finished in {:.1}s", started.elapsed().as_secs_f64());
    match out {
        Some(dir) => {
            for p in emit_report(&report, dir, &[Format::Json, Format::Csv, Format::Markdown])? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => print!("{}", report.to_json()?),
    }
    eprint!("{}", report.to_markdown());
    if !report.complete {
        return Err(Error::InvalidParameter(
            "some repetitions failed; see the report".into(),
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Table1(args) => {
            let cfg = args.apply(ExperimentConfig::table1())?;
            experiment(cfg, true, args.out.as_ref())
        }
        Command::Paramselect { common, widths } => {
            let mut cfg = common.apply(ExperimentConfig::param_select())?;
            if common.c_sweep.is_none() {
                cfg.c_sweep = vec![cfg.c_default];
            }
            cfg.kernels = gaussian_menu(widths.as_deref().unwrap_or(&PARAM_SELECT_WIDTHS));
            experiment(cfg, false, common.out.as_ref())
        }
        Command::Oneclass(args) => {
            let cfg = OneClassConfig {
                dataset: args.data.source()?,
                kernel: args.kernel,
                nu: args.nu,
                scaling: args.scaling,
                solver: SolverConfig {
                    kkt_tol: args.kkt_tol,
                    ..SolverConfig::default()
                },
            };
            let report = run_oneclass(&cfg)?;
            let csv = report.outliers_csv();
            if let Some(dir) = &args.out {
                write(dir.join("oneclass.json"), &report.to_json()?)?;
                write(dir.join("outliers.csv"), &csv)?;
            }
            match &args.csv {
                Some(path) => write(path.clone(), &csv)?,
                None if args.out.is_none() => print!("{csv}"),
                None => {}
            }
            eprintln!(
                "{} of {} points flagged (nu = {})",
                report.outliers.len(),
                report.n,
                report.nu
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let err = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
