//! Stage orchestration: dependency resolution, per-stage status, outputs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use evidencer_core::rfx_bms::{exceedance_probabilities, DEFAULT_REL_TAIL, DEFAULT_SAMPLES};
use evidencer_core::{
    cv_bma, estimate_rfx, log_family_evidence, oos_bma, posterior_probabilities, BetaStack, CvResult, EpMethod,
    FamilyPartition, GroupLmeStack, RfxOptions,
};
use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::data::{chunks, compute_cv, ModelSpace};
use crate::error::{exit, CliError, Result};
use crate::io::{format_value, load_matrix, write_matrix};

pub const DEFAULT_CHUNK_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Cvlme,
    Anc,
    Lfe,
    Bms,
    Ep,
    Bma,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Cvlme, Stage::Anc, Stage::Lfe, Stage::Bms, Stage::Ep, Stage::Bma];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Cvlme => "cvlme",
            Stage::Anc => "anc",
            Stage::Lfe => "lfe",
            Stage::Bms => "bms",
            Stage::Ep => "ep",
            Stage::Bma => "bma",
        }
    }

    fn deps(self, cfg: &Config) -> Vec<Stage> {
        match self {
            Stage::Cvlme | Stage::Bms => vec![],
            Stage::Anc | Stage::Lfe | Stage::Bma => vec![Stage::Cvlme],
            Stage::Ep if cfg.ep.alpha.is_some() => vec![],
            Stage::Ep => vec![Stage::Bms],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Requested stages plus everything they depend on, in execution order.
pub fn resolve_stages(cfg: &Config, requested: &[Stage]) -> Vec<Stage> {
    let mut need: Vec<Stage> = requested.to_vec();
    let mut i = 0;
    while i < need.len() {
        for d in need[i].deps(cfg) {
            if !need.contains(&d) {
                need.push(d);
            }
        }
        i += 1;
    }
    Stage::ALL.into_iter().filter(|s| need.contains(s)).collect()
}

/// Every stage the config has inputs for.
pub fn pipeline_stages(cfg: &Config) -> Vec<Stage> {
    let mut stages = Vec::new();
    if !cfg.models.is_empty() {
        stages.extend([Stage::Cvlme, Stage::Anc]);
        if !cfg.families.is_empty() {
            stages.push(Stage::Lfe);
        }
    }
    if cfg.group.is_some() {
        stages.extend([Stage::Bms, Stage::Ep]);
    } else if cfg.ep.alpha.is_some() {
        stages.push(Stage::Ep);
    }
    if !cfg.models.is_empty() {
        stages.push(Stage::Bma);
    }
    stages
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpChoice {
    ClosedForm,
    Sampling,
    Integration,
}

impl EpChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "closed-form" => Ok(EpChoice::ClosedForm),
            "sampling" => Ok(EpChoice::Sampling),
            "integration" => Ok(EpChoice::Integration),
            other => Err(CliError::config(format!(
                "unknown EP method '{other}', expected closed-form, sampling or integration"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EpChoice::ClosedForm => "closed-form",
            EpChoice::Sampling => "sampling",
            EpChoice::Integration => "integration",
        }
    }
}

/// Command-line overrides of the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub ep_method: Option<EpChoice>,
    pub samples: Option<usize>,
    pub chunk_size: Option<usize>,
    pub timings: bool,
    pub ep_benchmark: bool,
}

/// Effective settings, recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub ep_method: &'static str,
    pub samples: usize,
    pub rel_tail: f64,
    pub vb_alpha0: f64,
    pub vb_tol: f64,
    pub vb_max_iter: usize,
    pub chunk_size: usize,
    #[serde(skip)]
    ep_choice: EpChoice,
}

impl Settings {
    pub fn new(cfg: &Config, opts: &RunOptions) -> Result<Self> {
        let ep_choice = match (opts.ep_method, &cfg.ep.method) {
            (Some(m), _) => m,
            (None, Some(m)) => EpChoice::parse(m)?,
            (None, None) => EpChoice::Integration,
        };
        let chunk_size = opts.chunk_size.or(cfg.chunk_size).unwrap_or(DEFAULT_CHUNK_SIZE);
        if chunk_size == 0 {
            return Err(CliError::config("chunk size must be positive"));
        }
        Ok(Self {
            seed: opts.seed.or(cfg.seed).unwrap_or(0),
            ep_method: ep_choice.name(),
            samples: opts.samples.or(cfg.ep.samples).unwrap_or(DEFAULT_SAMPLES),
            rel_tail: cfg.ep.rel_tail.unwrap_or(DEFAULT_REL_TAIL),
            vb_alpha0: cfg.vb.alpha0,
            vb_tol: cfg.vb.tol,
            vb_max_iter: cfg.vb.max_iter,
            chunk_size,
            ep_choice,
        })
    }

    fn ep_method(&self, choice: EpChoice) -> EpMethod<f64> {
        match choice {
            EpChoice::ClosedForm => EpMethod::ClosedForm,
            EpChoice::Sampling => EpMethod::Sampling {
                samples: self.samples,
                seed: self.seed,
            },
            EpChoice::Integration => EpMethod::Integration { rel_tail: self.rel_tail },
        }
    }

    fn rfx_options(&self) -> RfxOptions<f64> {
        RfxOptions {
            alpha0: self.vb_alpha0,
            tol: self.vb_tol,
            max_iter: self.vb_max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: StageStatus,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, Value>,
    #[serde(skip)]
    pub exit_code: i32,
}

/// One row of `timings.csv`.
#[derive(Debug, Clone)]
pub struct Timing {
    pub task: String,
    pub models: usize,
    pub voxels: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub stages: Vec<StageReport>,
    pub timings: Vec<Timing>,
    pub subjects: Vec<String>,
}

impl RunReport {
    /// 0 when every stage succeeded, 4 when some did, otherwise the exit code
    /// of the first failure.
    pub fn exit_code(&self) -> i32 {
        let failed: Vec<_> = self.stages.iter().filter(|s| s.status != StageStatus::Ok).collect();
        if failed.is_empty() {
            exit::OK
        } else if failed.len() < self.stages.len() {
            exit::PARTIAL
        } else {
            failed
                .iter()
                .find(|s| s.status == StageStatus::Failed)
                .map_or(exit::CONFIG, |s| s.exit_code)
        }
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, corner: &str, rows: &[String], cols: &[String], values: &Array2<f64>) -> Result<()> {
        write_matrix(&self.dir.join(name), corner, rows, cols, values.view())?;
        self.files.push(name.to_string());
        Ok(())
    }
}

#[derive(Default)]
struct Context {
    space: Option<ModelSpace>,
    cv: Option<CvResult<f64>>,
    betas: Option<Vec<Array2<f64>>>,
    alpha: Option<(Array2<f64>, Vec<String>, Vec<String>)>,
    subjects: Vec<String>,
}

type StageOutcome = (Vec<String>, BTreeMap<String, Value>);

fn generic_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

struct Runner<'a> {
    cfg: &'a Config,
    settings: &'a Settings,
    out: &'a Path,
    ctx: Context,
    timings: Vec<Timing>,
    benchmark: bool,
}

impl Runner<'_> {
    fn outputs(&self) -> Outputs {
        Outputs {
            dir: self.out.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn space(&self) -> &ModelSpace {
        self.ctx.space.as_ref().expect("cvlme ran first")
    }

    fn run(&mut self, stage: Stage) -> Result<StageOutcome> {
        match stage {
            Stage::Cvlme => self.cvlme(),
            Stage::Anc => self.anc(),
            Stage::Lfe => self.lfe(),
            Stage::Bms => self.bms(),
            Stage::Ep => self.ep(),
            Stage::Bma => self.bma(),
        }
    }

    fn cvlme(&mut self) -> Result<StageOutcome> {
        let space = ModelSpace::load(self.cfg)?;
        let regressor = match &self.cfg.bma {
            Some(b) if b.betas.is_none() => Some(b.regressor),
            _ => None,
        };
        let res = compute_cv(&space, self.settings.chunk_size, regressor)?;
        let mut out = self.outputs();
        let (names, cols) = (&space.names, &space.voxel_labels);
        out.write("cvLME.csv", "model", names, cols, &res.cv.cv_lme)?;
        for (i, fold) in res.cv.oos_lme.iter().enumerate() {
            out.write(&format!("oosLME_fold{}.csv", i + 1), "model", names, cols, fold)?;
        }
        let details = BTreeMap::from([
            ("models".to_string(), json!(space.models())),
            ("voxels".to_string(), json!(space.voxels())),
            ("folds".to_string(), json!(space.folds())),
        ]);
        self.ctx.cv = Some(res.cv);
        self.ctx.betas = res.betas;
        self.ctx.space = Some(space);
        Ok((out.files, details))
    }

    fn anc(&mut self) -> Result<StageOutcome> {
        let space = self.space();
        let cv = self.ctx.cv.as_ref().expect("cvlme ran first");
        let mut out = self.outputs();
        let (names, cols) = (&space.names, &space.voxel_labels);
        out.write("cvAcc.csv", "model", names, cols, &cv.cv_acc)?;
        out.write("cvCom.csv", "model", names, cols, &cv.cv_com)?;
        for i in 0..cv.folds() {
            out.write(&format!("oosAcc_fold{}.csv", i + 1), "model", names, cols, &cv.oos_acc[i])?;
            out.write(&format!("oosCom_fold{}.csv", i + 1), "model", names, cols, &cv.oos_com[i])?;
        }
        Ok((out.files, BTreeMap::new()))
    }

    fn lfe(&mut self) -> Result<StageOutcome> {
        if self.cfg.families.is_empty() {
            return Err(CliError::config("no families configured"));
        }
        let space = self.space();
        let index = |name: &str| space.names.iter().position(|n| n == name).expect("validated model name");
        let entries = self
            .cfg
            .families
            .iter()
            .map(|f| (f.name.clone(), f.models.iter().map(|m| index(m)).collect(), f.weights.clone()))
            .collect();
        let part = FamilyPartition::new(space.models(), entries)?;
        let lfe = log_family_evidence(self.ctx.cv.as_ref().expect("cvlme ran first").cv_lme.view(), &part)?;
        let mut out = self.outputs();
        out.write("LFE.csv", "family", part.names(), &space.voxel_labels, &lfe)?;
        Ok((out.files, BTreeMap::from([("families".to_string(), json!(part.len()))])))
    }

    fn load_group(&mut self) -> Result<(GroupLmeStack<f64>, Vec<String>, Vec<String>)> {
        let group = self
            .cfg
            .group
            .as_ref()
            .ok_or_else(|| CliError::config("no group subjects configured"))?;
        let mut mats = Vec::with_capacity(group.subjects.len());
        let mut names: Option<Vec<String>> = (!self.cfg.models.is_empty()).then(|| self.cfg.model_names());
        let mut cols = None;
        for subject in &group.subjects {
            let (values, labels, voxel_labels) = match (&subject.cvlme, &subject.config) {
                (Some(path), _) => {
                    let m = load_matrix(path)?;
                    (m.values, m.row_labels, m.col_labels)
                }
                (None, Some(path)) => {
                    let sub = Config::load(path)?;
                    let space = ModelSpace::load(&sub)?;
                    let res = compute_cv(&space, self.settings.chunk_size, None)?;
                    (res.cv.cv_lme, Some(space.names), Some(space.voxel_labels))
                }
                (None, None) => unreachable!("validated config"),
            };
            if let Some(first) = mats.first().map(|m: &Array2<f64>| m.dim()) {
                if values.dim() != first {
                    return Err(CliError::config(format!(
                        "subject '{}' has {:?} cvLME entries, first subject has {first:?}",
                        subject.id,
                        values.dim()
                    )));
                }
            }
            match (&names, labels) {
                (Some(expected), Some(found)) if *expected != found => {
                    return Err(CliError::config(format!(
                        "subject '{}' lists models {found:?}, expected {expected:?}",
                        subject.id
                    )));
                }
                (None, Some(found)) => names = Some(found),
                _ => {}
            }
            if cols.is_none() {
                cols = voxel_labels;
            }
            mats.push(values);
        }
        let ids: Vec<String> = group.subjects.iter().map(|s| s.id.clone()).collect();
        let stack = GroupLmeStack::from_subjects(ids.clone(), &mats)?;
        let names = names.unwrap_or_else(|| generic_labels("m", stack.models()));
        if names.len() != stack.models() {
            return Err(CliError::config(format!(
                "{} model names for {} cvLME rows",
                names.len(),
                stack.models()
            )));
        }
        self.ctx.subjects = ids;
        let cols = cols.unwrap_or_else(|| crate::io::voxel_labels(stack.voxels()));
        Ok((stack, names, cols))
    }

    fn bms(&mut self) -> Result<StageOutcome> {
        let (group, names, cols) = self.load_group()?;
        let opts = self.settings.rfx_options();
        let mut alphas = Vec::new();
        let mut converged = Vec::new();
        let mut iterations = Vec::new();
        for range in chunks(group.voxels(), self.settings.chunk_size) {
            let part = GroupLmeStack::new(
                group.lme().slice(s![.., .., range]).to_owned(),
                group.subject_ids().to_vec(),
            )?;
            let est = estimate_rfx(&part, &opts)?;
            alphas.push(est.alpha);
            converged.extend(est.converged);
            iterations.extend(est.iterations);
        }
        let views: Vec<_> = alphas.iter().map(|a| a.view()).collect();
        let alpha = concatenate(Axis(1), &views).expect("chunks share the model count");
        let freq = &alpha / &alpha.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut out = self.outputs();
        out.write("alpha.csv", "model", &names, &cols, &alpha)?;
        out.write("freq.csv", "model", &names, &cols, &freq)?;
        let details = BTreeMap::from([
            ("subjects".to_string(), json!(group.subjects())),
            ("non_converged_voxels".to_string(), json!(converged.iter().filter(|c| !**c).count())),
            ("max_iterations".to_string(), json!(iterations.iter().max().copied().unwrap_or(0))),
        ]);
        self.ctx.alpha = Some((alpha, names, cols));
        Ok((out.files, details))
    }

    fn exceedance(&self, alpha: &Array2<f64>, choice: EpChoice) -> Result<(Array2<f64>, Array1<f64>)> {
        let method = self.settings.ep_method(choice);
        let mut eps = Vec::new();
        let mut devs = Vec::new();
        for range in chunks(alpha.ncols(), self.settings.chunk_size) {
            let offset = range.start as u64;
            let map = exceedance_probabilities(alpha.slice(s![.., range]), method, offset)?;
            eps.push(map.ep);
            devs.push(map.deviation);
        }
        let ep_views: Vec<_> = eps.iter().map(|a| a.view()).collect();
        let dev_views: Vec<_> = devs.iter().map(|a| a.view()).collect();
        Ok((
            concatenate(Axis(1), &ep_views).expect("chunks share the model count"),
            concatenate(Axis(0), &dev_views).expect("one deviation per voxel"),
        ))
    }

    fn ep(&mut self) -> Result<StageOutcome> {
        let (alpha, names, cols) = match (&self.ctx.alpha, &self.cfg.ep.alpha) {
            (Some(a), _) => a.clone(),
            (None, Some(path)) => {
                let m = load_matrix(path)?;
                let names = m.row_labels.unwrap_or_else(|| generic_labels("m", m.values.nrows()));
                let cols = m.col_labels.unwrap_or_else(|| crate::io::voxel_labels(m.values.ncols()));
                (m.values, names, cols)
            }
            (None, None) => return Err(CliError::config("ep needs a bms stage or an 'ep.alpha' input")),
        };
        let choice = self.settings.ep_choice;
        let (ep, deviation) = self.exceedance(&alpha, choice)?;
        let mut out = self.outputs();
        out.write("EP.csv", "model", &names, &cols, &ep)?;
        let mut details = BTreeMap::from([("method".to_string(), json!(choice.name()))]);
        if choice == EpChoice::Integration {
            let dev = deviation.insert_axis(Axis(0));
            out.write("EP_deviation.csv", "diagnostic", &["sum_minus_one".to_string()], &cols, &dev)?;
            let worst = dev.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
            details.insert("max_abs_deviation".to_string(), json!(format_value(worst)));
        }
        if self.benchmark {
            for bench in [EpChoice::Integration, EpChoice::Sampling] {
                let start = Instant::now();
                self.exceedance(&alpha, bench)?;
                self.timings.push(Timing {
                    task: format!("ep_{}", bench.name()),
                    models: alpha.nrows(),
                    voxels: alpha.ncols(),
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
        }
        Ok((out.files, details))
    }

    fn bma(&mut self) -> Result<StageOutcome> {
        let space = self.space();
        let cv = self.ctx.cv.as_ref().expect("cvlme ran first");
        let prior = self.cfg.model_prior.as_deref();
        let pp = posterior_probabilities(cv.cv_lme.view(), prior)?;
        let mut out = self.outputs();
        out.write("PP.csv", "model", &space.names, &space.voxel_labels, &pp.pp)?;
        let Some(entry) = &self.cfg.bma else {
            return Ok((out.files, BTreeMap::new()));
        };
        let betas = match &entry.betas {
            None => self.ctx.betas.clone().expect("betas computed with cvlme"),
            Some(files) => space
                .names
                .iter()
                .map(|name| {
                    let path = files
                        .get(name)
                        .ok_or_else(|| CliError::config(format!("bma betas missing for model '{name}'")))?;
                    Ok(load_matrix(path)?.values)
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let regressor = entry.name.clone().unwrap_or_else(|| format!("beta{}", entry.regressor + 1));
        let stack = BetaStack::from_models(&betas, regressor.clone())?;
        if stack.sessions() != cv.folds() || stack.voxels() != space.voxels() {
            return Err(CliError::config(format!(
                "parameter estimates are {} sessions × {} voxels, expected {} × {}",
                stack.sessions(),
                stack.voxels(),
                cv.folds(),
                space.voxels()
            )));
        }
        let per_fold = cv
            .oos_lme
            .iter()
            .map(|lme| posterior_probabilities(lme.view(), prior))
            .collect::<evidencer_core::Result<Vec<_>>>()?;
        let cv_est = cv_bma(&stack, &pp)?;
        let oos_est = oos_bma(&stack, &per_fold)?;
        let table = ndarray::stack(Axis(0), &[cv_est.view(), oos_est.view()]).expect("equal lengths");
        out.write("BMA.csv", &regressor, &["cvBMA".to_string(), "oosBMA".to_string()], &space.voxel_labels, &table)?;
        Ok((out.files, BTreeMap::new()))
    }
}

/// Runs the requested stages (plus dependencies), writing outputs to `out`.
/// Stage failures are recorded, not raised; stages depending on a failed
/// stage are skipped.
pub fn run_stages(cfg: &Config, requested: &[Stage], settings: &Settings, opts: &RunOptions, out: &Path) -> RunReport {
    let stages = resolve_stages(cfg, requested);
    let mut runner = Runner {
        cfg,
        settings,
        out,
        ctx: Context::default(),
        timings: Vec::new(),
        benchmark: opts.ep_benchmark,
    };
    let mut reports: Vec<StageReport> = Vec::with_capacity(stages.len());
    for stage in stages {
        let blocked = stage
            .deps(cfg)
            .into_iter()
            .find(|d| reports.iter().any(|r| r.stage == *d && r.status != StageStatus::Ok));
        let mut report = StageReport {
            stage,
            status: StageStatus::Ok,
            outputs: Vec::new(),
            error: None,
            details: BTreeMap::new(),
            exit_code: exit::OK,
        };
        if let Some(dep) = blocked {
            report.status = StageStatus::Skipped;
            report.error = Some(format!("depends on '{dep}', which did not complete"));
            report.exit_code = exit::PARTIAL;
            reports.push(report);
            continue;
        }
        let start = Instant::now();
        match runner.run(stage) {
            Ok((files, details)) => {
                report.outputs = files;
                report.details = details;
            }
            Err(e) => {
                report.status = StageStatus::Failed;
                report.exit_code = e.exit_code();
                report.error = Some(e.to_string());
            }
        }
        let (models, voxels) = runner
            .ctx
            .space
            .as_ref()
            .map_or((0, 0), |s| (s.models(), s.voxels()));
        runner.timings.push(Timing {
            task: stage.name().to_string(),
            models,
            voxels,
            seconds: start.elapsed().as_secs_f64(),
        });
        reports.push(report);
    }
    RunReport {
        stages: reports,
        timings: runner.timings,
        subjects: runner.ctx.subjects,
    }
}
