//! End-to-end run: breadth ladder, one DBN per dataset, layer samples,
//! analysis reports, TAP counts, observable propagation and (for toy widths)
//! enumeration cross-checks. Stages of one dataset depend on each other; a
//! failed stage marks its dependents skipped and leaves other datasets alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hfm::analysis::LayerReport;
use hfm::EmpiricalSample;
use hfm_data::glyphs::{self, Family, Style};
use hfm_data::{breadth_ladder, load_idx, Dataset, RawImages};
use hfm_dbn::exact::{self, MAX_EXACT_WIDTH};
use hfm_dbn::observable::{joint_histogram, martingale_pairs, regress, ObservableSpec, Regression};
use hfm_dbn::sampling::{clamped_states, equilibrium_layers, rows_to_sample, EquilibriumDiagnostics};
use hfm_dbn::tap::{tap_count_solutions, tap_inits};
use hfm_dbn::{train_dbn, Dbn};
use log::{info, warn};
use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands;
use crate::config::{derive_seed, DataSource, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::output::{FileRecord, Outputs};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "detail")]
pub enum StageStatus {
    Ok,
    Failed(String),
    Skipped(String),
}

impl StageStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, StageStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub stages: BTreeMap<String, StageStatus>,
    pub files: BTreeMap<String, FileRecord>,
}

/// Per-sample numbers lifted from a [`LayerReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub samples: u64,
    pub distinct: usize,
    pub entropy_plugin: f64,
    pub g_fit: f64,
    pub kl_full: f64,
    pub kendall_d: Option<f64>,
    pub leaves: usize,
    pub weighted_kl: f64,
    /// Weight-averaged plug-in entropy of the peak leaves.
    pub mean_leaf_entropy: f64,
}

impl SampleSummary {
    fn new(r: &LayerReport, distinct: usize) -> Self {
        let leaves = &r.peaks.leaves;
        let total: f64 = leaves.iter().map(|l| l.weight).sum();
        let weighted: f64 = leaves.iter().map(|l| l.weight * l.entropy_plugin).sum();
        // + 0.0 turns a -0.0 from all-zero leaf entropies into 0.0
        let mean_leaf_entropy = weighted / total.max(f64::MIN_POSITIVE) + 0.0;
        Self {
            samples: r.samples,
            distinct,
            entropy_plugin: r.entropies.plugin,
            g_fit: r.g_fit,
            kl_full: r.kl_full,
            kendall_d: r.kendall_d,
            leaves: leaves.len(),
            weighted_kl: r.peaks.weighted_kl,
            mean_leaf_entropy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapRow {
    pub dataset: String,
    pub layer: usize,
    pub inits: usize,
    pub distinct: usize,
    pub converged_runs: usize,
    pub unconverged_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRow {
    pub dataset: String,
    pub observable: String,
    pub layer: usize,
    pub points: usize,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub reliability: Option<f64>,
}

impl MartingaleRow {
    fn new(dataset: &str, observable: &str, layer: usize, points: usize, r: Option<&Regression>) -> Self {
        Self {
            dataset: dataset.into(),
            observable: observable.into(),
            layer,
            points,
            slope: r.map(|r| r.slope),
            intercept: r.map(|r| r.intercept),
            slope_stderr: r.map(|r| r.slope_stderr),
            ci_low: r.map(|r| r.ci95.0),
            ci_high: r.map(|r| r.ci95.1),
            reliability: r.map(|r| r.reliability),
        }
    }
}

/// Sampled layer distribution against exact enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationCheck {
    pub path: String,
    pub layer: usize,
    pub states: usize,
    pub samples: usize,
    pub tv: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// TV allowance for an empirical histogram of `samples` draws over `states`
/// cells: a fixed 0.02 plus `sqrt(K / N)`, about three times the expected
/// sampling TV.
pub fn enumeration_tolerance(states: usize, samples: usize) -> f64 {
    0.02 + (states as f64 / samples.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub width: usize,
    pub clamped: Option<SampleSummary>,
    pub equilibrium: Option<SampleSummary>,
    pub tap: Option<TapRow>,
    pub martingale: Vec<MartingaleRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub rows: usize,
    pub classes: usize,
    pub sizes: Vec<usize>,
    pub equilibrium: Option<EquilibriumDiagnostics>,
    pub layers: Vec<LayerSummary>,
    pub checks: Vec<EnumerationCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub config_hash: String,
    pub datasets: Vec<DatasetSummary>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    pub summary: Summary,
    pub manifest: Manifest,
}

impl PipelineOutcome {
    pub fn failed_stages(&self) -> Vec<&str> {
        self.manifest
            .stages
            .iter()
            .filter(|(_, s)| matches!(s, StageStatus::Failed(_)))
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

/// Runs every stage. `config` must already carry any command-line overrides;
/// it is validated here before anything is written.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    config.validate()?;
    // execution settings do not change any output
    let mut hashed = config.clone();
    hashed.out_dir = None;
    hashed.jobs = 1;
    let config_hash = hashed.hash();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut run = Run {
        config,
        out: Outputs::new(out_dir)?,
        stages: BTreeMap::new(),
        pool,
    };
    run.out.write_json("config", "config.json", &hashed)?;

    if let Some(rg) = &config.rg {
        let result = run.pool.install(|| {
            commands::sweep(
                &rg.n_values,
                &rg.g_values,
                rg.starts,
                rg.max_iterations,
                rg.tolerance,
                derive_seed(config.seed, "rg"),
            )
        });
        let status = result
            .and_then(|rows| commands::sweep_csv(&rows))
            .and_then(|bytes| run.out.write("rg_sweep", "rg/sweep.csv", &bytes));
        run.finish("rg_sweep", status);
    }

    let ladder = run.data_stage();
    let mut datasets = Vec::new();
    for name in &config.data.datasets {
        let data = ladder.as_ref().map(|l| match name.as_str() {
            "narrow" => &l.narrow,
            "medium" => &l.medium,
            _ => &l.broad,
        });
        datasets.push(run.dataset(name, data)?);
    }

    let summary = Summary {
        seed: config.seed,
        config_hash: config_hash.clone(),
        datasets,
    };
    run.out.write_json("summary", "summary.json", &summary)?;
    let Run { out, stages, .. } = run;
    let manifest = Manifest {
        config_hash,
        seed: config.seed,
        config: hashed,
        stages,
        files: out.files().clone(),
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    std::fs::write(out.path("manifest.json"), text)?;
    Ok(PipelineOutcome {
        out_dir: out_dir.to_path_buf(),
        summary,
        manifest,
    })
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    out: Outputs,
    stages: BTreeMap<String, StageStatus>,
    pool: rayon::ThreadPool,
}

/// Clamped states of every layer (index 0 is the data itself).
struct Samples {
    clamped: Vec<Array2<f64>>,
    equilibrium: Vec<Array2<f64>>,
}

impl Run<'_> {
    fn finish<T>(&mut self, stage: &str, result: Result<T>) -> Option<T> {
        match result {
            Ok(v) => {
                self.stages.insert(stage.into(), StageStatus::Ok);
                Some(v)
            }
            Err(e) => {
                warn!("stage {stage} failed: {e}");
                self.stages.insert(stage.into(), StageStatus::Failed(e.to_string()));
                None
            }
        }
    }

    fn skip(&mut self, stage: &str, because: &str) {
        self.stages
            .insert(stage.into(), StageStatus::Skipped(format!("{because} did not complete")));
    }

    fn data_stage(&mut self) -> Option<hfm_data::Ladder> {
        let result = self.build_ladder();
        self.finish("data", result)
    }

    fn build_ladder(&mut self) -> Result<hfm_data::Ladder> {
        let c = self.config;
        let d = &c.data;
        let (digits, letters, source): (RawImages, Option<RawImages>, String) = match d.source {
            DataSource::Synthetic => {
                let style = Style::default();
                let digits = glyphs::synthesize(
                    Family::Digits,
                    d.synthetic_per_class,
                    &style,
                    derive_seed(c.seed, "synth/digits"),
                );
                let letters = d.synthetic_letters.then(|| {
                    glyphs::synthesize(
                        Family::Letters,
                        d.synthetic_per_class,
                        &style,
                        derive_seed(c.seed, "synth/letters"),
                    )
                });
                (digits, letters, "synthetic glyphs".into())
            }
            DataSource::Idx => {
                let images = d.digits_images.as_ref().expect("validated");
                let labels = d.digits_labels.as_ref().expect("validated");
                let digits = load_idx(images, labels)?;
                let letters = match (&d.letters_images, &d.letters_labels) {
                    (Some(i), Some(l)) => Some(load_idx(i, l)?),
                    _ => None,
                };
                let name = images.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                (digits, letters, format!("idx:{name}"))
            }
        };
        info!("building the breadth ladder from {} digit images", digits.len());
        let ladder_config = d.ladder.to_config(derive_seed(c.seed, "ladder"));
        let ladder = breadth_ladder(&digits, letters.as_ref(), &ladder_config, &source)?;
        let dir = self.out.path("data");
        for (name, ds) in ladder.iter() {
            for path in ds.save(&dir, name)? {
                self.out.record("data", &path)?;
            }
        }
        Ok(ladder)
    }

    fn dataset(&mut self, name: &str, data: Option<&Dataset>) -> Result<DatasetSummary> {
        let stage = |s: &str| format!("{s}/{name}");
        let mut summary = DatasetSummary {
            name: name.into(),
            rows: data.map_or(0, |d| d.len()),
            classes: data.map_or(0, |d| d.distinct_labels()),
            sizes: Vec::new(),
            equilibrium: None,
            layers: Vec::new(),
            checks: Vec::new(),
        };
        let downstream = ["train", "samples", "analysis", "tap", "observables", "checks"];
        let Some(data) = data else {
            for s in downstream {
                self.skip(&stage(s), "data");
            }
            return Ok(summary);
        };

        let trained = self.train(name, data);
        let Some(dbn) = self.finish(&stage("train"), trained) else {
            for s in &downstream[1..] {
                self.skip(&stage(s), "train");
            }
            return Ok(summary);
        };
        summary.sizes = dbn.sizes();
        summary.layers = (1..=dbn.depth())
            .map(|l| LayerSummary {
                layer: l,
                width: dbn.width(l),
                clamped: None,
                equilibrium: None,
                tap: None,
                martingale: Vec::new(),
            })
            .collect();

        let sampled = self.samples(name, &dbn, data);
        let Some((samples, diag)) = self.finish(&stage("samples"), sampled) else {
            for s in &downstream[2..] {
                self.skip(&stage(s), "samples");
            }
            return Ok(summary);
        };
        summary.equilibrium = Some(diag);

        let analysed = self.analysis(name, &dbn, &samples, &mut summary);
        self.finish(&stage("analysis"), analysed);
        if self.config.tap.enabled {
            let counted = self.tap(name, &dbn, &samples, &mut summary);
            self.finish(&stage("tap"), counted);
        }
        if self.config.observables.enabled {
            let propagated = self.observables(name, &dbn, data, &mut summary);
            self.finish(&stage("observables"), propagated);
        }
        if self.config.checks.enumeration {
            let checked = self.checks(name, &dbn, &samples, &mut summary);
            self.finish(&stage("checks"), checked);
        }
        Ok(summary)
    }

    fn train(&mut self, name: &str, data: &Dataset) -> Result<Dbn> {
        let c = self.config;
        let mut sizes = vec![data.width()];
        sizes.extend(&c.dbn.hidden);
        let train_config = c.dbn.train.to_config(derive_seed(c.seed, &format!("train/{name}")));
        info!("training {name} DBN with sizes {sizes:?}");
        let (dbn, logs) = train_dbn(data.images.view(), &sizes, &train_config)?;
        let stage = format!("train/{name}");
        let model_path = self.out.path(&format!("models/{name}.json"));
        std::fs::create_dir_all(model_path.parent().expect("has parent"))?;
        dbn.save_json(&model_path, Some(&train_config))?;
        self.out.record(&stage, &model_path)?;
        #[derive(Serialize)]
        struct LogRow {
            rbm: usize,
            epoch: usize,
            pseudo_likelihood: f64,
            grad_norm: f64,
        }
        let rows: Vec<LogRow> = logs
            .iter()
            .enumerate()
            .flat_map(|(k, log)| {
                log.iter().map(move |e| LogRow {
                    rbm: k + 1,
                    epoch: e.epoch,
                    pseudo_likelihood: e.pseudo_likelihood,
                    grad_norm: e.grad_norm,
                })
            })
            .collect();
        self.out.write_csv(&stage, &format!("models/{name}.train.csv"), &rows)?;
        Ok(dbn)
    }

    fn samples(&mut self, name: &str, dbn: &Dbn, data: &Dataset) -> Result<(Samples, EquilibriumDiagnostics)> {
        let c = self.config;
        let stage = format!("samples/{name}");
        let mut clamped = vec![data.images.clone()];
        for l in 1..=dbn.depth() {
            let seed = derive_seed(c.seed, &format!("clamped/{name}/{l}"));
            clamped.push(clamped_states(dbn, data.images.view(), l, c.sampling.passes, seed)?);
        }
        let count = c.sampling.equilibrium_samples.unwrap_or(data.len());
        let seed = derive_seed(c.seed, &format!("equilibrium/{name}"));
        let (equilibrium, diag) = equilibrium_layers(dbn, count, &c.sampling.equilibrium, seed)?;
        if !diag.converged {
            warn!("{name}: equilibrium chains disagree (max z {:.2})", diag.max_z);
        }
        for l in 1..=dbn.depth() {
            for (kind, states) in [("clamped", &clamped[l]), ("equilibrium", &equilibrium[l])] {
                let mut text = Vec::new();
                rows_to_sample(states.view()).write_text(&mut text)?;
                self.out.write(&stage, &format!("samples/{name}/{kind}_l{l}.txt"), &text)?;
            }
        }
        self.out.write_json(&stage, &format!("samples/{name}/equilibrium.json"), &diag)?;
        Ok((Samples { clamped, equilibrium }, diag))
    }

    fn analysis(&mut self, name: &str, dbn: &Dbn, samples: &Samples, summary: &mut DatasetSummary) -> Result<()> {
        let c = self.config;
        let mut jobs = Vec::new();
        for l in 1..=dbn.depth() {
            if dbn.width(l) > c.analysis.max_width {
                continue;
            }
            jobs.push(("clamped", l, rows_to_sample(samples.clamped[l].view())));
            jobs.push(("equilibrium", l, rows_to_sample(samples.equilibrium[l].view())));
        }
        let a = &c.analysis;
        let reports: Vec<Result<(&str, usize, LayerReport, usize)>> = self.pool.install(|| {
            jobs.par_iter()
                .map(|(kind, l, sample): &(&str, usize, EmpiricalSample)| {
                    let label = format!("{name}/{kind}/l{l}");
                    let r = LayerReport::build(&label, sample, a.g_strategy, a.peak_threshold)?;
                    Ok((*kind, *l, r, sample.distinct()))
                })
                .collect()
        });
        #[derive(Serialize)]
        struct Row<'r> {
            dataset: &'r str,
            kind: &'r str,
            layer: usize,
            prefix_n: usize,
            peak_id: String,
            weight: f64,
            g: f64,
            kl_bits: f64,
        }
        let stage = format!("analysis/{name}");
        let mut rows = Vec::new();
        for r in reports {
            let (kind, l, report, distinct) = r?;
            self.out
                .write_json(&stage, &format!("reports/{name}/{kind}_l{l}.json"), &report)?;
            rows.extend(report.rows().into_iter().map(|row| Row {
                dataset: name,
                kind,
                layer: l,
                prefix_n: row.prefix_n,
                peak_id: row.peak_id,
                weight: row.weight,
                g: row.g,
                kl_bits: row.kl_bits,
            }));
            let s = Some(SampleSummary::new(&report, distinct));
            let layer = &mut summary.layers[l - 1];
            if kind == "clamped" {
                layer.clamped = s;
            } else {
                layer.equilibrium = s;
            }
        }
        self.out.write_csv(&stage, &format!("reports/{name}/kl_rows.csv"), &rows)?;
        Ok(())
    }

    fn tap(&mut self, name: &str, dbn: &Dbn, samples: &Samples, summary: &mut DatasetSummary) -> Result<()> {
        let t = &self.config.tap;
        let solver = t.solver();
        let rows: Vec<Result<TapRow>> = self.pool.install(|| {
            (1..=dbn.depth())
                .into_par_iter()
                .map(|l| {
                    let rbm = dbn.rbm(l)?;
                    let below = &samples.clamped[l - 1];
                    let take = below.nrows().min(t.max_inits);
                    let inits = tap_inits(rbm, below.slice(s![..take, ..]))?;
                    let count = tap_count_solutions(rbm, &inits, t.dedup_tol, &solver)?;
                    Ok(TapRow {
                        dataset: name.into(),
                        layer: l,
                        inits: inits.len(),
                        distinct: count.distinct,
                        converged_runs: count.converged_runs,
                        unconverged_runs: count.unconverged_runs,
                    })
                })
                .collect()
        });
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        for row in &rows {
            summary.layers[row.layer - 1].tap = Some(row.clone());
        }
        self.out.write_csv(&format!("tap/{name}"), &format!("tap/{name}.csv"), &rows)
    }

    fn observables(&mut self, name: &str, dbn: &Dbn, data: &Dataset, summary: &mut DatasetSummary) -> Result<()> {
        let o = &self.config.observables;
        let width = dbn.width(0);
        let side = (width as f64).sqrt().round() as usize;
        if side * side != width {
            return Err(CliError::Runtime(format!("visible width {width} is not a square image")));
        }
        let take = data.len().min(o.max_points);
        let points = data.images.slice(s![..take, ..]);
        let specs = [ObservableSpec::left_minus_right(side), ObservableSpec::top_minus_bottom(side)];
        let jobs: Vec<(&ObservableSpec, usize)> = specs
            .iter()
            .flat_map(|spec| (2..=dbn.depth()).map(move |l| (spec, l)))
            .collect();
        let seed = self.config.seed;
        type Job = (MartingaleRow, Vec<Vec<u64>>);
        let results: Vec<Result<Job>> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(spec, l)| {
                    let job_seed = derive_seed(seed, &format!("observables/{name}/{}/{l}", spec.name));
                    let pairs = martingale_pairs(dbn, spec, l, points, o.rollouts, job_seed)?;
                    let reg = regress(&pairs.upper, &pairs.lower, pairs.upper_noise_var);
                    let bounds = spec.bounds();
                    let hist = joint_histogram(&pairs.upper, &pairs.lower, o.bins, bounds, bounds);
                    Ok((MartingaleRow::new(name, &spec.name, l, pairs.upper.len(), reg.as_ref()), hist))
                })
                .collect()
        });
        #[derive(Serialize)]
        struct HistRow {
            bin_upper: usize,
            bin_lower: usize,
            count: u64,
        }
        let stage = format!("observables/{name}");
        let mut rows = Vec::new();
        for r in results {
            let (row, hist) = r?;
            let cells: Vec<HistRow> = hist
                .iter()
                .enumerate()
                .flat_map(|(i, line)| {
                    line.iter().enumerate().map(move |(j, &count)| HistRow {
                        bin_upper: i,
                        bin_lower: j,
                        count,
                    })
                })
                .collect();
            self.out.write_csv(
                &stage,
                &format!("observables/{name}/{}_l{}.csv", row.observable, row.layer),
                &cells,
            )?;
            summary.layers[row.layer - 1].martingale.push(row.clone());
            rows.push(row);
        }
        self.out
            .write_csv(&stage, &format!("observables/{name}/martingale.csv"), &rows)
    }

    fn checks(&mut self, name: &str, dbn: &Dbn, samples: &Samples, summary: &mut DatasetSummary) -> Result<()> {
        let limit = self.config.checks.max_width.min(MAX_EXACT_WIDTH);
        let sizes = dbn.sizes();
        let mut checks = Vec::new();
        for l in 0..=dbn.depth() {
            if l >= 1 && sizes[..=l].iter().all(|&w| w <= limit) {
                let exact = exact::clamped_distribution(dbn, samples.clamped[0].view(), l)?;
                checks.push(compare("clamped", l, &exact, &samples.clamped[l])?);
            }
            if sizes[l..].iter().all(|&w| w <= limit) {
                let exact = exact::equilibrium_distribution(dbn, l)?;
                checks.push(compare("equilibrium", l, &exact, &samples.equilibrium[l])?);
            }
        }
        let stage = format!("checks/{name}");
        self.out.write_json(&stage, &format!("checks/{name}.json"), &checks)?;
        let failed = checks.iter().filter(|c| !c.passed).count();
        summary.checks = checks;
        if failed > 0 {
            return Err(CliError::Runtime(format!("{failed} enumeration checks out of tolerance")));
        }
        Ok(())
    }
}

fn compare(path: &str, layer: usize, exact: &Array1<f64>, states: &Array2<f64>) -> Result<EnumerationCheck> {
    let empirical = exact::empirical(states.view())?;
    let tv = 0.5 * (&empirical - exact).mapv(f64::abs).sum();
    let tolerance = enumeration_tolerance(exact.len(), states.nrows());
    Ok(EnumerationCheck {
        path: path.into(),
        layer,
        states: exact.len(),
        samples: states.nrows(),
        tv,
        tolerance,
        passed: tv <= tolerance,
    })
}
