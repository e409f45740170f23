//! Entry point shared by the binary and the tests.

use std::path::Path;

use crate::config::Config;
use crate::error::{exit, CliError, Result};
use crate::manifest::{output_hashes, write_manifest, write_timings, Manifest};
use crate::pipeline::{pipeline_stages, run_stages, RunOptions, Settings, Stage};

/// Stages asked for on the command line.
#[derive(Debug, Clone)]
pub enum Selection {
    Only(Stage),
    Everything,
}

/// Parses `--threads`: a positive count or `auto` (0 lets rayon decide).
pub fn parse_threads(value: &str) -> Result<usize> {
    if value.eq_ignore_ascii_case("auto") {
        return Ok(0);
    }
    match value.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(CliError::config(format!("--threads expects a positive integer or 'auto', got '{value}'"))),
    }
}

fn config_failure(out: &Path, err: &CliError) -> i32 {
    eprintln!("error: {err}");
    if std::fs::create_dir_all(out).is_ok() {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: None,
            settings: None,
            models: Vec::new(),
            subjects: &[],
            stages: &[],
            outputs: Default::default(),
            error: Some(err.to_string()),
        };
        let _ = write_manifest(out, &manifest);
    }
    err.exit_code()
}

/// Loads the config, runs the selection and writes outputs and manifest.
/// Returns the process exit code.
pub fn run(config: &Path, out: &Path, selection: Selection, opts: &RunOptions) -> i32 {
    let cfg = match Config::load(config) {
        Ok(c) => c,
        Err(e) => return config_failure(out, &e),
    };
    let settings = match Settings::new(&cfg, opts) {
        Ok(s) => s,
        Err(e) => return config_failure(out, &e),
    };
    if let Err(e) = std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e)) {
        eprintln!("error: {e}");
        return exit::CONFIG;
    }
    let stages = match selection {
        Selection::Only(s) => vec![s],
        Selection::Everything => pipeline_stages(&cfg),
    };
    if stages.is_empty() {
        return config_failure(out, &CliError::config("the config provides inputs for no stage"));
    }
    let report = run_stages(&cfg, &stages, &settings, opts, out);
    for s in &report.stages {
        if let Some(err) = &s.error {
            eprintln!("stage {}: {:?}: {err}", s.stage, s.status);
        }
    }
    let mut code = report.exit_code();
    let outputs = match output_hashes(out, &report.stages) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: {e}");
            code = code.max(exit::PARTIAL);
            Default::default()
        }
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: Some(&cfg.hash),
        settings: Some(&settings),
        models: cfg.model_names(),
        subjects: &report.subjects,
        stages: &report.stages,
        outputs,
        error: None,
    };
    if let Err(e) = write_manifest(out, &manifest) {
        eprintln!("error: {e}");
        return code.max(exit::PARTIAL);
    }
    if opts.timings || opts.ep_benchmark {
        if let Err(e) = write_timings(out, &report.timings) {
            eprintln!("error: {e}");
        }
        for pair in report.timings.windows(2) {
            if let [a, b] = pair {
                if a.task == "ep_integration" && b.task == "ep_sampling" {
                    eprintln!(
                        "ep benchmark: k = {}, V = {}: integration {:.3e} s, sampling {:.3e} s, speedup {:.1}",
                        a.models,
                        a.voxels,
                        a.seconds,
                        b.seconds,
                        b.seconds / a.seconds
                    );
                }
            }
        }
    }
    code
}
