//! Experiment harness: repeated train/test runs of single-kernel SVMs and
//! the AV combination, plus one-class outlier scoring.

pub mod report;

use std::path::PathBuf;

use rayon::prelude::*;

use avsvm::combine::{average_kernel, combine_multi, combine_test_rows};
use avsvm::data::{self, cancer_dataset, fit_apply_scaling, make_splits, DelimitedOptions};
use avsvm::kernel::{cross_gram, gram_matrix, psd_repair, self_similarity, DEFAULT_PSD_TOL};
use avsvm::one_class::{outlier_indices, train_oneclass_gram};
use avsvm::svm::{self, sign_label, SvmModel};
use avsvm::{
    CombinerConfig, Error, GramMatrix, KernelSpec, LabeledDataset, Labels, Matrix, Normalization, Normalizer, PsdMode,
    Result, ScalingMode, SolverConfig, Split, SplitPlan, TestEvalMode,
};

pub use report::{
    emit_report, ConfigEcho, ExperimentReport, Format, MethodRun, RepetitionResult, Selection, Stat, Summary,
};

/// Name of the combined method in reports.
pub const AV: &str = "AV";

/// Published mean test errors for the cancer table.
pub const TABLE1_TARGETS: [(&str, f64); 4] = [("polynomial", 7.8), ("gaussian", 10.8), ("linear", 3.7), (AV, 3.1)];

/// Gaussian widths of the parameter-selection study.
pub const PARAM_SELECT_WIDTHS: [f64; 12] = [0.1, 1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Bundled,
    Delimited { path: PathBuf, options: DelimitedOptions },
    Sparse(PathBuf),
}

impl DatasetSource {
    pub fn load(&self) -> Result<LabeledDataset> {
        match self {
            DatasetSource::Bundled => cancer_dataset(),
            DatasetSource::Delimited { path, options } => data::load_delimited(path, options),
            DatasetSource::Sparse(path) => data::load_sparse_format(path),
        }
    }

    pub fn id(&self) -> String {
        match self {
            DatasetSource::Bundled => data::CANCER_ID.to_string(),
            DatasetSource::Delimited { path, .. } | DatasetSource::Sparse(path) => path.display().to_string(),
        }
    }
}

/// A named kernel in the experiment menu.
#[derive(Debug, Clone, PartialEq)]
pub struct MenuEntry {
    pub name: String,
    pub spec: KernelSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub kernels: Vec<MenuEntry>,
    pub combiner: CombinerConfig,
    /// Applied to each kernel before combination; single-kernel runs use the
    /// raw kernel.
    pub normalization: Normalization,
    pub c_default: f64,
    pub c_sweep: Vec<f64>,
    pub plan: SplitPlan,
    pub scaling: ScalingMode,
    pub psd: PsdMode,
    pub solver: SolverConfig,
    /// Published test errors by method name, used to pick the closest C.
    pub targets: Vec<(String, f64)>,
}

impl ExperimentConfig {
    /// Polynomial, gaussian and linear kernels plus their AV combination.
    pub fn table1() -> Self {
        Self {
            dataset: DatasetSource::Bundled,
            kernels: vec![
                MenuEntry {
                    name: "polynomial".into(),
                    spec: KernelSpec::Polynomial { degree: 2, offset: 1.0 },
                },
                MenuEntry {
                    name: "gaussian".into(),
                    spec: KernelSpec::Gaussian { width_c: 1.0 },
                },
                MenuEntry {
                    name: "linear".into(),
                    spec: KernelSpec::Linear,
                },
            ],
            combiner: CombinerConfig {
                test_eval: TestEvalMode::PredictedLabel,
                ..Default::default()
            },
            normalization: Normalization::Cosine,
            c_default: 1.0,
            c_sweep: vec![0.1, 1.0, 10.0, 100.0],
            plan: SplitPlan::default(),
            scaling: ScalingMode::None,
            psd: PsdMode::SpectralClip,
            solver: SolverConfig::default(),
            targets: TABLE1_TARGETS.iter().map(|&(m, t)| (m.to_string(), t)).collect(),
        }
    }

    /// Twelve gaussian widths and their AV combination.
    pub fn param_select() -> Self {
        Self {
            kernels: gaussian_menu(&PARAM_SELECT_WIDTHS),
            c_sweep: vec![1.0],
            targets: Vec::new(),
            ..Self::table1()
        }
    }

    /// Default C followed by the sweep, without duplicates.
    pub fn c_values(&self) -> Vec<f64> {
        let mut cs = vec![self.c_default];
        for &c in &self.c_sweep {
            if !cs.contains(&c) {
                cs.push(c);
            }
        }
        cs
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::InvalidParameter("kernel menu is empty".into()));
        }
        for k in &self.kernels {
            if k.spec.is_precomputed() {
                return Err(Error::PrecomputedKernel);
            }
            k.spec.validate()?;
        }
        for &c in &self.c_values() {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("C must be positive, got {c}")));
            }
        }
        self.solver.validate()?;
        match &self.dataset {
            DatasetSource::Bundled => {}
            DatasetSource::Delimited { path, .. } | DatasetSource::Sparse(path) => {
                if !path.exists() {
                    return Err(Error::InvalidParameter(format!(
                        "dataset {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            dataset: self.dataset.id(),
            kernels: self.kernels.iter().map(|k| format!("{}={}", k.name, k.spec)).collect(),
            combiner: self.combiner.to_string(),
            normalization: self.normalization.to_string(),
            c_default: self.c_default,
            c_sweep: self.c_sweep.clone(),
            repetitions: self.plan.repetitions,
            train_fraction: self.plan.train_fraction,
            scaling: self.scaling.to_string(),
            psd: self.psd.to_string(),
            kkt_tol: self.solver.kkt_tol,
            max_iterations: self.solver.max_iterations,
        }
    }
}

/// Gaussian kernels named by width, e.g. `gauss(c=10)`.
pub fn gaussian_menu(widths: &[f64]) -> Vec<MenuEntry> {
    widths
        .iter()
        .map(|&c| {
            let spec = KernelSpec::Gaussian { width_c: c };
            MenuEntry {
                name: spec.label(),
                spec,
            }
        })
        .collect()
}

/// Errors and SV share of one trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    train_error: f64,
    test_error: f64,
    sv_percent: f64,
}

/// Per repetition: one outcome per (method, C), methods in menu order then AV.
fn run_repetition(ds: &LabeledDataset, split: &Split, cfg: &ExperimentConfig, cs: &[f64]) -> Result<Vec<Outcome>> {
    let train = ds.subset(&split.train);
    let test = ds.subset(&split.test);
    let (xtr, xte, _) = fit_apply_scaling(train.x(), test.x(), cfg.scaling)?;
    let (ytr, yte) = (train.y(), test.y());

    let mut grams = Vec::with_capacity(cfg.kernels.len());
    let mut crosses = Vec::with_capacity(cfg.kernels.len());
    let mut outcomes = Vec::new();
    for k in &cfg.kernels {
        let g = gram_matrix(&k.spec, &xtr)?;
        let cross = cross_gram(&k.spec, &xtr, &xte)?;
        let train_rows = g.to_matrix();
        for &c in cs {
            let model = svm::train(&g, ytr, c, &cfg.solver)?;
            outcomes.push(outcome(&model, &train_rows, ytr, &cross, yte)?);
        }
        let diag = self_similarity(&k.spec, &xte)?;
        let norm = Normalizer::fit(&g, cfg.normalization)?;
        crosses.push(norm.apply_cross(&cross, &diag)?);
        grams.push(norm.apply_gram(&g));
    }

    let kstar = psd_repair(&combine_multi(&grams, ytr, &cfg.combiner)?, cfg.psd, DEFAULT_PSD_TOL)?;
    let kbar = average_kernel(&grams)?;
    let kbar_rows = kbar.to_matrix();
    let train_blocks: Vec<Matrix> = grams.iter().map(GramMatrix::to_matrix).collect();
    let mean_cross = combine_test_rows(&crosses, ytr, &CombinerConfig::default(), None)?;
    for &c in cs {
        let model = svm::train(&kstar, ytr, c, &cfg.solver)?;
        let (train_rows, test_rows) = match cfg.combiner.test_eval {
            TestEvalMode::AverageFallback => (kbar_rows.clone(), mean_cross.clone()),
            TestEvalMode::PredictedLabel => {
                let provisional = svm::train(&kbar, ytr, c, &cfg.solver)?;
                let yhat_train = predict_rows(&provisional, &kbar_rows)?;
                let yhat_test = predict_rows(&provisional, &mean_cross)?;
                (
                    combine_test_rows(&train_blocks, ytr, &cfg.combiner, Some(&yhat_train))?,
                    combine_test_rows(&crosses, ytr, &cfg.combiner, Some(&yhat_test))?,
                )
            }
        };
        outcomes.push(outcome(&model, &train_rows, ytr, &test_rows, yte)?);
    }
    Ok(outcomes)
}

fn predict_rows(model: &SvmModel, rows: &Matrix) -> Result<Labels> {
    let signs = rows
        .rows()
        .map(|r| model.decision_from_full_row(r).map(|v| sign_label(v) as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(Labels::from_signs(&signs))
}

fn outcome(model: &SvmModel, train_rows: &Matrix, ytr: &Labels, test_rows: &Matrix, yte: &Labels) -> Result<Outcome> {
    let tr = model.evaluate(train_rows, ytr)?;
    let te = model.evaluate(test_rows, yte)?;
    Ok(Outcome {
        train_error: tr.error_percent,
        test_error: te.error_percent,
        sv_percent: te.sv_percent,
    })
}

fn run_experiment(name: &str, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ds = cfg.dataset.load()?;
    if !ds.y().has_both_classes() {
        return Err(Error::SingleClass);
    }
    let splits = make_splits(ds.n(), &cfg.plan)?;
    let cs = cfg.c_values();

    let per_rep: Vec<Result<Vec<Outcome>>> = splits
        .par_iter()
        .map(|split| run_repetition(&ds, split, cfg, &cs))
        .collect();

    let mut methods: Vec<(String, String)> = cfg
        .kernels
        .iter()
        .map(|k| (k.name.clone(), k.spec.to_string()))
        .collect();
    methods.push((AV.to_string(), format!("combined:{}", cfg.combiner.g_function)));

    let mut runs = Vec::with_capacity(methods.len() * cs.len());
    for (mi, (method, kernel)) in methods.iter().enumerate() {
        for (ci, &c) in cs.iter().enumerate() {
            let repetitions: Vec<RepetitionResult> = per_rep
                .iter()
                .enumerate()
                .map(|(r, res)| match res {
                    Ok(outs) => {
                        let o = outs[mi * cs.len() + ci];
                        RepetitionResult {
                            repetition: r,
                            complete: true,
                            train_error: Some(o.train_error),
                            test_error: Some(o.test_error),
                            sv_percent: Some(o.sv_percent),
                            error: None,
                        }
                    }
                    Err(e) => RepetitionResult {
                        repetition: r,
                        complete: false,
                        train_error: None,
                        test_error: None,
                        sv_percent: None,
                        error: Some(e.to_string()),
                    },
                })
                .collect();
            let summary = Summary::of(&repetitions);
            runs.push(MethodRun {
                method: method.clone(),
                kernel: kernel.clone(),
                c,
                repetitions,
                summary,
            });
        }
    }
    for (r, res) in per_rep.iter().enumerate() {
        if let Err(e) = res {
            log::error!("repetition {r} failed: {e}");
        }
    }

    let selections = methods
        .iter()
        .map(|(method, _)| {
            let target = cfg.targets.iter().find(|(m, _)| m == method).map(|&(_, t)| t);
            let mine: Vec<&MethodRun> = runs.iter().filter(|r| &r.method == method).collect();
            let by = |key: &dyn Fn(f64) -> f64| {
                mine.iter()
                    .filter_map(|r| r.summary.test_error.mean.map(|m| (key(m), r.c)))
                    .fold(None, |best: Option<(f64, f64)>, x| match best {
                        Some(b) if b.0 <= x.0 => Some(b),
                        _ => Some(x),
                    })
                    .map(|(_, c)| c)
            };
            Selection {
                method: method.clone(),
                default_c: cfg.c_default,
                closest_c: target.and_then(|t| by(&|m| (m - t).abs())),
                target_test_error: target,
                best_c: by(&|m| m),
            }
        })
        .collect();

    Ok(ExperimentReport {
        experiment: name.to_string(),
        seed: cfg.plan.master_seed,
        config: cfg.echo(),
        complete: per_rep.iter().all(Result::is_ok),
        runs,
        selections,
    })
}

/// Single-kernel SVMs for every menu entry plus AV over the whole menu.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment("table1", cfg)
}

/// Same procedure over a menu of gaussian widths.
pub fn run_param_select(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment("paramselect", cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneClassConfig {
    pub dataset: DatasetSource,
    pub kernel: KernelSpec,
    pub nu: f64,
    pub scaling: ScalingMode,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OneClassReport {
    pub dataset: String,
    pub kernel: String,
    pub nu: f64,
    pub scaling: String,
    pub n: usize,
    pub offset_b: f64,
    pub support_vectors: usize,
    pub outliers: Vec<usize>,
    pub scores: Vec<f64>,
}

impl OneClassReport {
    /// `index,score` for each flagged point.
    pub fn outliers_csv(&self) -> String {
        let mut out = String::from("index,score\n");
        for &i in &self.outliers {
            out.push_str(&format!("{i},{}\n", self.scores[i]));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

/// Fits a one-class model on the whole dataset and flags points scoring
/// below the threshold.
pub fn run_oneclass(cfg: &OneClassConfig) -> Result<OneClassReport> {
    let ds = cfg.dataset.load()?;
    let transform = avsvm::ScalingTransform::fit(ds.x(), cfg.scaling);
    let x = transform.apply(ds.x())?;
    let g = gram_matrix(&cfg.kernel, &x)?;
    let model = train_oneclass_gram(&g, cfg.nu, &cfg.solver)?;
    let scores = model.training_scores(&g)?;
    Ok(OneClassReport {
        dataset: cfg.dataset.id(),
        kernel: cfg.kernel.to_string(),
        nu: cfg.nu,
        scaling: cfg.scaling.to_string(),
        n: ds.n(),
        offset_b: model.offset_b(),
        support_vectors: model.support_indices().len(),
        outliers: outlier_indices(&scores, cfg.solver.kkt_tol),
        scores,
    })
}
