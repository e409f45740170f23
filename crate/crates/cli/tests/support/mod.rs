#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_evidencer"));
    cmd.env_remove("EVIDENCER_THREADS");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn write_csv(path: &Path, m: &Array2<f64>) {
    let mut text = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

pub fn read_table(path: &Path) -> (Vec<String>, Array2<f64>) {
    let m = evidencer_cli::io::load_matrix(path).unwrap();
    (m.row_labels.unwrap_or_default(), m.values)
}

/// Two nested models: `small` = [1, x1], `large` = [1, x1, x2]. Odd voxels
/// carry an x2 effect, even voxels do not.
pub struct Study {
    pub sessions: usize,
    pub scans: usize,
    pub voxels: usize,
    pub seed: u64,
}

impl Study {
    pub fn designs(&self, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((self.scans, 3), |(i, j)| match j {
            0 => 1.0,
            1 => (i as f64 * 0.37).sin() + 0.3 * rng.sample::<f64, _>(StandardNormal),
            _ => 0.0,
        })
    }

    /// Writes data, designs and a config to `dir`; returns the config path.
    pub fn write(&self, dir: &Path, extra: Value) -> PathBuf {
        std::fs::create_dir_all(dir).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut data = Vec::new();
        let mut small = Vec::new();
        let mut large = Vec::new();
        for s in 0..self.sessions {
            let mut x = self.designs(&mut rng);
            for i in 0..self.scans {
                x[[i, 2]] = 0.6 * x[[i, 1]] + rng.sample::<f64, _>(StandardNormal);
            }
            let y = Array2::from_shape_fn((self.scans, self.voxels), |(i, v)| {
                let effect = if v % 2 == 1 { 1.5 * x[[i, 2]] } else { 0.0 };
                2.0 + 1.0 * x[[i, 1]] + effect + rng.sample::<f64, _>(StandardNormal)
            });
            let names = (format!("Y_s{}.csv", s + 1), format!("Xsmall_s{}.csv", s + 1), format!("Xlarge_s{}.csv", s + 1));
            write_csv(&dir.join(&names.0), &y);
            write_csv(&dir.join(&names.1), &x.slice(ndarray::s![.., 0..2]).to_owned());
            write_csv(&dir.join(&names.2), &x);
            data.push(names.0);
            small.push(names.1);
            large.push(names.2);
        }
        let mut cfg = json!({
            "models": [
                {"name": "small", "designs": small},
                {"name": "large", "designs": large}
            ],
            "data": data,
            "families": [
                {"name": "without_x2", "models": ["small"]},
                {"name": "with_x2", "models": ["large"]}
            ],
            "bma": {"regressor": 1, "name": "x1"}
        });
        if let (Value::Object(base), Value::Object(more)) = (&mut cfg, extra) {
            base.extend(more);
        }
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        path
    }
}

/// A group study: one subject config per subject plus a top-level config
/// that also analyses the first subject on its own.
pub fn write_group(dir: &Path, subjects: usize, voxels: usize) -> PathBuf {
    let mut entries = Vec::new();
    for s in 0..subjects {
        let id = format!("sub-{:02}", s + 1);
        let study = Study { sessions: 2, scans: 30, voxels, seed: 100 + s as u64 };
        let path = study.write(&dir.join(&id), json!({}));
        entries.push(json!({"id": id, "config": path.strip_prefix(dir).unwrap()}));
    }
    let first = Study { sessions: 2, scans: 30, voxels, seed: 100 };
    first.write(dir, json!({"group": {"subjects": entries}}))
}
