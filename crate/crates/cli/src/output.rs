//! CSV writers and run manifests.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ambstab::sim::{ModelKind, Trajectory};
use ambstab::sweep::{RunSummary, SweepRow};
use ambstab::verify::Certificate;
use sha2::{Digest, Sha256};

pub const TOOL: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Shortest round-trip decimal; independent of locale.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Identity of a run: command, tool version, seed and the resolved configuration.
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: String,
}

impl Manifest {
    pub fn run_id(&self) -> String {
        let mut h = Sha256::new();
        for part in [self.command.as_str(), TOOL, &self.seed.to_string(), &self.config] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(&h.finalize()[..6])
    }

    fn stem(&self) -> String {
        format!("{}-{}", self.command, self.run_id())
    }

    pub fn data_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.csv", self.stem()))
    }

    pub fn manifest_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.manifest.txt", self.stem()))
    }

    /// The manifest doubles as a config file: the header lines are comments.
    pub fn render(&self, outputs: &[PathBuf]) -> String {
        let mut s = format!(
            "# run_id = {}\n# command = {}\n# tool = {}\n# seed = {}\n",
            self.run_id(),
            self.command,
            TOOL,
            self.seed
        );
        for p in outputs {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            s.push_str(&format!("# output = {name}\n"));
        }
        s.push_str(&self.config);
        s
    }

    pub fn write(&self, dir: &Path, outputs: &[PathBuf]) -> io::Result<PathBuf> {
        let path = self.manifest_path(dir);
        fs::write(&path, self.render(outputs))?;
        Ok(path)
    }
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn trajectory_header(model: ModelKind) -> Vec<&'static str> {
    let mut h = vec!["t", "x1", "x2", "x3", "u"];
    if model != ModelKind::Chain {
        h.extend(["v1", "v2"]);
    }
    h.extend(["V", "U", "g", "z1", "z2", "z3"]);
    h
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(trajectory_header(traj.meta.model)).map_err(csv_err)?;
    let chain = traj.meta.model == ModelKind::Chain;
    for s in &traj.samples {
        let mut row = vec![num(s.t), num(s.x[0]), num(s.x[1]), num(s.x[2]), num(s.input)];
        if !chain {
            row.push(opt(s.v1));
            row.push(opt(s.v2));
        }
        row.extend([s.lyapunov, s.storage, s.g, s.z.z1, s.z.z2, s.z.z3].map(num));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_certificates(path: &Path, certs: &[Certificate]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["name", "pass", "samples", "worst_margin", "tolerance", "witness", "detail"]).map_err(csv_err)?;
    for c in certs {
        let witness = c.witness.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ");
        w.write_record([
            c.name.clone(),
            c.pass.to_string(),
            c.samples.to_string(),
            num(c.worst_margin),
            num(c.tolerance),
            witness,
            c.detail.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

pub const SUMMARY_COLUMNS: [&str; 7] =
    ["status", "initial_norm", "final_norm", "max_abs_v", "min_vdot_margin", "settling_time", "message"];

pub fn summary_fields(s: &RunSummary) -> Vec<String> {
    vec![
        s.status.label().to_string(),
        opt(s.initial_norm),
        opt(s.final_norm),
        opt(s.max_voltage),
        opt(s.min_vdot_margin),
        opt(s.settling_time),
        s.status.message().to_string(),
    ]
}

pub fn summary_line(s: &RunSummary) -> String {
    SUMMARY_COLUMNS
        .iter()
        .zip(summary_fields(s))
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_sweep(path: &Path, axes: &[String], rows: &[SweepRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["index".to_string()];
    header.extend(axes.iter().cloned());
    header.extend(SUMMARY_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut row = vec![r.index.to_string()];
        row.extend(r.overrides.iter().map(|(_, v)| v.clone()));
        row.extend(summary_fields(&r.summary));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
}
