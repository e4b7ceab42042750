//! Config files and result directories.
//!
//! Specs are TOML. Recorded tables are comma-separated with one header row,
//! and every number is written with 9 significant digits. Summaries are
//! computed from those rounded numbers, so re-analysing a result directory
//! reproduces its summary exactly.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{summarize, SampleStats};
use crate::embodiment::arena::{PoseSample, RobotPose};
use crate::embodiment::{EventKind, StimEvent};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentSpec, RunResult, WeightSnapshot};
use crate::network::{SpikeEvent, SpikeRaster};
use crate::sweep::{CellResult, Condition, SweepSpec};

pub const ENGINE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const SPEC_FILE: &str = "spec.toml";
pub const SPIKES_FILE: &str = "spikes.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_RUNS_FILE: &str = "runs.csv";
pub const SWEEP_SERIES_FILE: &str = "sweep_timeseries.csv";

pub const SPIKES_HEADER: [&str; 2] = ["time_ms", "neuron_id"];
pub const WEIGHTS_HEADER: [&str; 5] = [
    "time_ms",
    "mean_input_weight",
    "input_to_output",
    "input_to_hidden",
    "mean_plastic_weight",
];
pub const EVENTS_HEADER: [&str; 2] = ["time_ms", "kind"];
pub const TRAJECTORY_HEADER: [&str; 8] = [
    "time_ms",
    "x",
    "y",
    "heading",
    "v_left",
    "v_right",
    "sensor_left",
    "sensor_right",
];
pub const SWEEP_HEADER: [&str; 12] = [
    "a_ltd",
    "tau_ltd",
    "stdp_integral",
    "mean_si",
    "si_stderr",
    "closed_initial",
    "closed_final",
    "open_initial",
    "open_final",
    "n_closed",
    "n_open",
    "error",
];
pub const SWEEP_RUNS_HEADER: [&str; 8] = [
    "a_ltd",
    "tau_ltd",
    "condition",
    "repeat",
    "seed",
    "n_removals",
    "initial_weight",
    "final_weight",
];
pub const SWEEP_SERIES_HEADER: [&str; 7] = [
    "a_ltd",
    "tau_ltd",
    "condition",
    "time_ms",
    "mean_input_weight",
    "stderr",
    "n",
];

/// Formats `x` with 9 significant digits in its shortest exact form.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let q = quantize(x);
    if q == 0.0 {
        return "0".into();
    }
    format!("{q}")
}

/// Rounds `x` to 9 significant digits.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn parse_number(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {s:?} is not a number"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedSpec {
    Experiment(Box<ExperimentSpec>),
    Sweep(Box<SweepSpec>),
}

/// Reads and validates a spec file. Files with a `base` table are sweeps.
pub fn load_spec(path: &Path) -> Result<LoadedSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spec(&text, path)
}

pub fn parse_spec(text: &str, path: &Path) -> Result<LoadedSpec> {
    let table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, path, e))?;
    let spec = if table.contains_key("base") || table.contains_key("sweep") {
        let s: SweepSpec = toml::from_str(text).map_err(|e| parse_error(text, path, e))?;
        s.validate()?;
        LoadedSpec::Sweep(Box::new(s))
    } else {
        let s: ExperimentSpec = toml::from_str(text).map_err(|e| parse_error(text, path, e))?;
        s.validate()?;
        LoadedSpec::Experiment(Box::new(s))
    };
    Ok(spec)
}

pub fn load_experiment_spec(path: &Path) -> Result<ExperimentSpec> {
    match load_spec(path)? {
        LoadedSpec::Experiment(s) => Ok(*s),
        LoadedSpec::Sweep(_) => Err(Error::Config(format!(
            "{} describes a sweep, not a single run",
            path.display()
        ))),
    }
}

pub fn load_sweep_spec(path: &Path) -> Result<SweepSpec> {
    match load_spec(path)? {
        LoadedSpec::Sweep(s) => Ok(*s),
        LoadedSpec::Experiment(_) => Err(Error::Config(format!(
            "{} describes a single run, not a sweep",
            path.display()
        ))),
    }
}

fn parse_error(text: &str, path: &Path, e: toml::de::Error) -> Error {
    let message = match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    };
    Error::Parse {
        path: path.to_path_buf(),
        message,
    }
}

fn spec_toml<T: Serialize>(spec: &T) -> Result<String> {
    toml::to_string(spec).map_err(|e| Error::Config(format!("cannot serialize spec: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    /// `run` or `sweep`.
    pub kind: String,
    pub seed: u64,
    pub spec: serde_json::Value,
    pub written_unix_ms: u64,
    pub elapsed_ms: Option<f64>,
    pub completed_ms: Option<f64>,
    pub fault: Option<String>,
    pub files: Vec<FileDigest>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path,
            message: e.to_string(),
        })
    }

    /// Recomputes every listed digest and reports the first mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let path = dir.join(&f.name);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let digest = hex::encode(Sha256::digest(&bytes));
            if digest != f.sha256 || bytes.len() as u64 != f.bytes {
                return Err(Error::Input(format!("{} does not match its digest", f.name)));
            }
        }
        Ok(())
    }
}

struct OutputDir {
    dir: PathBuf,
    files: Vec<FileDigest>,
}

impl OutputDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(FileDigest {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn write_table<const N: usize>(
        &mut self,
        name: &str,
        header: [&str; N],
        rows: impl IntoIterator<Item = [String; N]>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let path = self.dir.join(name);
        let csv_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        self.write(name, &bytes)
    }

    fn finish(self, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.files = self.files;
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Input(format!("cannot serialize manifest: {e}")))?;
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Copy of `result` with every recorded number rounded as it is written.
pub fn quantized(result: &RunResult) -> RunResult {
    let q = quantize;
    RunResult {
        spec: result.spec.clone(),
        raster: SpikeRaster::from_events(
            result
                .raster
                .events()
                .iter()
                .map(|e| SpikeEvent {
                    time_ms: q(e.time_ms),
                    neuron: e.neuron,
                })
                .collect(),
        ),
        snapshots: result
            .snapshots
            .iter()
            .map(|s| WeightSnapshot {
                time_ms: q(s.time_ms),
                mean_input_weight: q(s.mean_input_weight),
                input_to_output: q(s.input_to_output),
                input_to_hidden: q(s.input_to_hidden),
                mean_plastic_weight: q(s.mean_plastic_weight),
            })
            .collect(),
        events: result
            .events
            .iter()
            .map(|e| StimEvent {
                time_ms: q(e.time_ms),
                kind: e.kind,
            })
            .collect(),
        trajectory: result
            .trajectory
            .iter()
            .map(|p| PoseSample {
                time_ms: q(p.time_ms),
                pose: RobotPose {
                    x: q(p.pose.x),
                    y: q(p.pose.y),
                    heading: q(p.pose.heading),
                    v_left: q(p.pose.v_left),
                    v_right: q(p.pose.v_right),
                },
                sensor_left: q(p.sensor_left),
                sensor_right: q(p.sensor_right),
            })
            .collect(),
        completed_ms: q(result.completed_ms),
        fault: result.fault.clone(),
    }
}

fn quantize_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let x = quantize(n.as_f64().expect("f64 number"));
            *v = serde_json::Number::from_f64(x).map_or(serde_json::Value::Null, Into::into);
        }
        serde_json::Value::Array(xs) => xs.iter_mut().for_each(quantize_json),
        serde_json::Value::Object(m) => m.values_mut().for_each(quantize_json),
        _ => {}
    }
}

/// The summary document of a run, as written to `summary.json`.
pub fn summary_text(result: &RunResult) -> Result<String> {
    let summary = summarize(&quantized(result))?;
    let mut value = serde_json::to_value(&summary)
        .map_err(|e| Error::Analysis(format!("cannot serialize summary: {e}")))?;
    quantize_json(&mut value);
    let text = serde_json::to_string_pretty(&value)
        .map_err(|e| Error::Analysis(format!("cannot serialize summary: {e}")))?;
    Ok(text + "\n")
}

/// Writes all tables, the summary and the manifest of one run into `out_dir`.
pub fn write_outputs(
    result: &RunResult,
    out_dir: &Path,
    elapsed: Option<Duration>,
) -> Result<RunManifest> {
    let mut out = OutputDir::create(out_dir)?;
    out.write(SPEC_FILE, spec_toml(&result.spec)?.as_bytes())?;
    out.write_table(
        SPIKES_FILE,
        SPIKES_HEADER,
        result
            .raster
            .events()
            .iter()
            .map(|e| [format_number(e.time_ms), e.neuron.to_string()]),
    )?;
    out.write_table(
        WEIGHTS_FILE,
        WEIGHTS_HEADER,
        result.snapshots.iter().map(|s| {
            [
                format_number(s.time_ms),
                format_number(s.mean_input_weight),
                format_number(s.input_to_output),
                format_number(s.input_to_hidden),
                format_number(s.mean_plastic_weight),
            ]
        }),
    )?;
    out.write_table(
        EVENTS_FILE,
        EVENTS_HEADER,
        result
            .events
            .iter()
            .map(|e| [format_number(e.time_ms), e.kind.as_str().to_string()]),
    )?;
    if !result.trajectory.is_empty() {
        out.write_table(
            TRAJECTORY_FILE,
            TRAJECTORY_HEADER,
            result.trajectory.iter().map(|p| {
                [
                    format_number(p.time_ms),
                    format_number(p.pose.x),
                    format_number(p.pose.y),
                    format_number(p.pose.heading),
                    format_number(p.pose.v_left),
                    format_number(p.pose.v_right),
                    format_number(p.sensor_left),
                    format_number(p.sensor_right),
                ]
            }),
        )?;
    }
    out.write(SUMMARY_FILE, summary_text(result)?.as_bytes())?;
    out.finish(RunManifest {
        engine_version: ENGINE_VERSION.to_string(),
        kind: "run".into(),
        seed: result.spec.seed,
        spec: serde_json::to_value(&result.spec)
            .map_err(|e| Error::Config(format!("cannot serialize spec: {e}")))?,
        written_unix_ms: unix_ms(),
        elapsed_ms: elapsed.map(|d| d.as_secs_f64() * 1000.0),
        completed_ms: Some(quantize(result.completed_ms)),
        fault: result.fault.clone(),
        files: Vec::new(),
    })
}

fn read_table(dir: &Path, name: &str, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let parse_err = |message: String| Error::Parse {
        path: path.clone(),
        message,
    };
    let got = r.headers().map_err(|e| parse_err(e.to_string()))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(parse_err(format!(
            "expected columns {}, found {}",
            header.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        rows.push((k + 2, rec.map_err(|e| parse_err(e.to_string()))?));
    }
    Ok(rows)
}

/// Rebuilds a run from the tables in `dir`.
pub fn read_run_dir(dir: &Path) -> Result<RunResult> {
    let spec_path = dir.join(SPEC_FILE);
    let spec = match load_spec(&spec_path)? {
        LoadedSpec::Experiment(s) => *s,
        LoadedSpec::Sweep(_) => {
            return Err(Error::Input(format!("{} is a sweep directory", dir.display())))
        }
    };
    let manifest = RunManifest::read(dir)?;

    let p = dir.join(SPIKES_FILE);
    let mut spikes = Vec::new();
    for (line, rec) in read_table(dir, SPIKES_FILE, &SPIKES_HEADER)? {
        let neuron = rec[1].trim().parse::<usize>().map_err(|_| Error::Parse {
            path: p.clone(),
            message: format!("line {line}: bad neuron id {:?}", &rec[1]),
        })?;
        spikes.push(SpikeEvent {
            time_ms: parse_number(&rec[0], &p, line)?,
            neuron,
        });
    }

    let p = dir.join(WEIGHTS_FILE);
    let mut snapshots = Vec::new();
    for (line, rec) in read_table(dir, WEIGHTS_FILE, &WEIGHTS_HEADER)? {
        let x = |i: usize| parse_number(&rec[i], &p, line);
        snapshots.push(WeightSnapshot {
            time_ms: x(0)?,
            mean_input_weight: x(1)?,
            input_to_output: x(2)?,
            input_to_hidden: x(3)?,
            mean_plastic_weight: x(4)?,
        });
    }

    let p = dir.join(EVENTS_FILE);
    let mut events = Vec::new();
    for (line, rec) in read_table(dir, EVENTS_FILE, &EVENTS_HEADER)? {
        let kind = EventKind::parse(rec[1].trim()).ok_or_else(|| Error::Parse {
            path: p.clone(),
            message: format!("line {line}: unknown event kind {:?}", &rec[1]),
        })?;
        events.push(StimEvent {
            time_ms: parse_number(&rec[0], &p, line)?,
            kind,
        });
    }

    let mut trajectory = Vec::new();
    if dir.join(TRAJECTORY_FILE).exists() {
        let p = dir.join(TRAJECTORY_FILE);
        for (line, rec) in read_table(dir, TRAJECTORY_FILE, &TRAJECTORY_HEADER)? {
            let x = |i: usize| parse_number(&rec[i], &p, line);
            trajectory.push(PoseSample {
                time_ms: x(0)?,
                pose: RobotPose {
                    x: x(1)?,
                    y: x(2)?,
                    heading: x(3)?,
                    v_left: x(4)?,
                    v_right: x(5)?,
                },
                sensor_left: x(6)?,
                sensor_right: x(7)?,
            });
        }
    }

    let completed_ms = manifest
        .completed_ms
        .or_else(|| snapshots.last().map(|s: &WeightSnapshot| s.time_ms))
        .unwrap_or(0.0);
    Ok(RunResult {
        spec,
        raster: SpikeRaster::from_events(spikes),
        snapshots,
        events,
        trajectory,
        completed_ms,
        fault: manifest.fault,
    })
}

/// Recomputes the summary document of a run directory from its tables.
pub fn analyze_dir(dir: &Path) -> Result<String> {
    summary_text(&read_run_dir(dir)?)
}

fn cell_rows(cells: &[CellResult]) -> Vec<[String; 12]> {
    let stat = |s: Option<SampleStats>| s.map_or("nan".to_string(), |s| format_number(s.mean));
    cells
        .iter()
        .map(|c| {
            let si = SampleStats::of(&c.paired_si());
            [
                format_number(c.cell.a_ltd),
                format_number(c.cell.tau_ltd),
                format_number(c.stdp_integral),
                c.mean_si.map_or("nan".to_string(), format_number),
                si.and_then(|s| s.stderr).map_or("nan".to_string(), format_number),
                stat(SampleStats::of(&c.initials(Condition::Closed))),
                stat(c.final_stats(Condition::Closed)),
                stat(SampleStats::of(&c.initials(Condition::Open))),
                stat(c.final_stats(Condition::Open)),
                c.closed.len().to_string(),
                c.open.len().to_string(),
                c.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

/// Writes the per-cell table, the per-run table and the mean weight series
/// of a sweep.
pub fn write_sweep_outputs(
    spec: &SweepSpec,
    cells: &[CellResult],
    out_dir: &Path,
    elapsed: Option<Duration>,
) -> Result<RunManifest> {
    let mut out = OutputDir::create(out_dir)?;
    out.write(SPEC_FILE, spec_toml(spec)?.as_bytes())?;
    out.write_table(SWEEP_FILE, SWEEP_HEADER, cell_rows(cells))?;

    let mut runs = Vec::new();
    let mut series = Vec::new();
    for c in cells {
        for condition in Condition::BOTH {
            let recs = c.runs(condition);
            for r in recs {
                runs.push([
                    format_number(c.cell.a_ltd),
                    format_number(c.cell.tau_ltd),
                    condition.as_str().to_string(),
                    r.repeat.to_string(),
                    r.seed.to_string(),
                    r.n_removals.to_string(),
                    format_number(r.initial_weight()),
                    format_number(r.final_weight()),
                ]);
            }
            let len = recs.iter().map(|r| r.snapshots.len()).min().unwrap_or(0);
            for k in 0..len {
                let ws: Vec<f64> = recs.iter().map(|r| r.snapshots[k].mean_input_weight).collect();
                let s = SampleStats::of(&ws).expect("non-empty");
                series.push([
                    format_number(c.cell.a_ltd),
                    format_number(c.cell.tau_ltd),
                    condition.as_str().to_string(),
                    format_number(recs[0].snapshots[k].time_ms),
                    format_number(s.mean),
                    s.stderr.map_or("nan".to_string(), format_number),
                    s.n.to_string(),
                ]);
            }
        }
    }
    out.write_table(SWEEP_RUNS_FILE, SWEEP_RUNS_HEADER, runs)?;
    out.write_table(SWEEP_SERIES_FILE, SWEEP_SERIES_HEADER, series)?;
    out.finish(RunManifest {
        engine_version: ENGINE_VERSION.to_string(),
        kind: "sweep".into(),
        seed: spec.base.seed,
        spec: serde_json::to_value(spec)
            .map_err(|e| Error::Config(format!("cannot serialize spec: {e}")))?,
        written_unix_ms: unix_ms(),
        elapsed_ms: elapsed.map(|d| d.as_secs_f64() * 1000.0),
        completed_ms: None,
        fault: None,
        files: Vec::new(),
    })
}
