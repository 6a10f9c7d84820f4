//! Versioned artifact files: demonstration/rollout JSON-lines, per-step
//! trajectory CSV, policy checkpoints, training logs, evaluation and
//! ablation summaries, and the experiment manifest.
//!
//! Every file starts with a header carrying the format name, a format
//! version, and the hash of the experiment configuration that produced it.
//! Floating-point values are written with the shortest representation that
//! parses back to the identical bits, so write/read cycles are exact and
//! rerunning a seeded experiment reproduces files byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, ManipulatorModel};
use crate::policy::{PolicyArch, PolicyParams};
use crate::sim_env::Rollout;
use crate::smoothness::SmoothnessReport;
use crate::trainer::{EvalReport, TrainLogRow};

pub const FORMAT_VERSION: u32 = 1;

pub const ROLLOUTS_FORMAT: &str = "rollouts";
pub const STEPS_FORMAT: &str = "steps";
pub const CHECKPOINT_FORMAT: &str = "policy-checkpoint";
pub const TRAIN_LOG_FORMAT: &str = "train-log";
pub const BC_LOG_FORMAT: &str = "bc-log";
pub const REPORT_FORMAT: &str = "smoothness-report";
pub const EVAL_FORMAT: &str = "eval-metrics";
pub const ABLATION_FORMAT: &str = "ablation-summary";
pub const MANIFEST_FORMAT: &str = "manifest";

/// Parsed first line of any artifact file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
}

impl FileHeader {
    fn expect(&self, format: &str) -> Result<()> {
        if self.format != format {
            return Err(Error::ContractViolation(format!(
                "expected a {format} file, found {}",
                self.format
            )));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::ContractViolation(format!(
                "unsupported {format} version {} (this build reads version {FORMAT_VERSION})",
                self.version
            )));
        }
        Ok(())
    }
}

fn csv_preamble(format: &str, config_hash: &str) -> String {
    format!("# format={format} version={FORMAT_VERSION} config_hash={config_hash}")
}

/// Parse the `# format=... version=... config_hash=...` comment line.
pub fn parse_csv_preamble(line: &str) -> Result<FileHeader> {
    let bad = || Error::MalformedRow {
        line: 1,
        message: "missing or malformed header comment".into(),
    };
    let rest = line.strip_prefix("# ").ok_or_else(bad)?;
    let mut format = None;
    let mut version = None;
    let mut config_hash = None;
    for piece in rest.split_whitespace() {
        let (key, value) = piece.split_once('=').ok_or_else(bad)?;
        match key {
            "format" => format = Some(value.to_string()),
            "version" => version = Some(value.parse::<u32>().map_err(|_| bad())?),
            "config_hash" => config_hash = Some(value.to_string()),
            _ => return Err(bad()),
        }
    }
    Ok(FileHeader {
        format: format.ok_or_else(bad)?,
        version: version.ok_or_else(bad)?,
        config_hash: config_hash.ok_or_else(bad)?,
    })
}

// ---------------------------------------------------------------------------
// JSON-lines rollouts and demonstrations

/// Write rollouts as JSON lines behind a one-line JSON header.
pub fn write_rollouts_jsonl(path: &Path, rollouts: &[Rollout], config_hash: &str) -> Result<()> {
    let header = FileHeader {
        format: ROLLOUTS_FORMAT.into(),
        version: FORMAT_VERSION,
        config_hash: config_hash.into(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for rollout in rollouts {
        out.push_str(&serde_json::to_string(rollout)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_rollouts_jsonl(path: &Path) -> Result<(FileHeader, Vec<Rollout>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::MalformedRow {
        line: 1,
        message: "empty file, expected a JSON header line".into(),
    })?;
    let header: FileHeader = serde_json::from_str(first).map_err(|e| Error::MalformedRow {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    header.expect(ROLLOUTS_FORMAT)?;
    let mut rollouts = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let rollout: Rollout = serde_json::from_str(line).map_err(|e| Error::MalformedRow {
            line: idx + 1,
            message: e.to_string(),
        })?;
        rollouts.push(rollout);
    }
    Ok((header, rollouts))
}

// ---------------------------------------------------------------------------
// Per-step trajectory CSV

fn steps_csv_header(dof: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=dof).map(|i| format!("q{i}")));
    cols.extend((1..=dof).map(|i| format!("a{i}")));
    cols.push("ee_x".into());
    cols.push("ee_y".into());
    cols.push("success_latched".into());
    cols.join(",")
}

/// Per-step CSV: one row per trajectory sample. The `t = 0` row is an
/// episode's initial state (action columns zero); a later row with `t = 0`
/// starts the next episode, which is how several episodes share one file.
pub fn write_steps_csv(
    path: &Path,
    model: &ManipulatorModel,
    rollouts: &[Rollout],
    config_hash: &str,
) -> Result<()> {
    let dof = model.dof();
    let mut out = csv_preamble(STEPS_FORMAT, config_hash);
    out.push('\n');
    out.push_str(&steps_csv_header(dof));
    out.push('\n');
    for rollout in rollouts {
        for (t, q) in rollout.joint_traj.samples.iter().enumerate() {
            if q.len() != dof {
                return Err(Error::DimensionMismatch {
                    context: "steps csv sample",
                    expected: dof,
                    got: q.len(),
                });
            }
            let zeros = vec![0.0; dof];
            let action = if t == 0 { &zeros } else { &rollout.actions[t - 1] };
            let latched = t > 0 && rollout.success_by_step[t - 1];
            let ee = forward_kinematics(model, q)?;
            let mut row = vec![t.to_string()];
            row.extend(q.iter().map(|v| format!("{v}")));
            row.extend(action.iter().map(|v| format!("{v}")));
            row.push(format!("{}", ee[0]));
            row.push(format!("{}", ee[1]));
            row.push(if latched { "1".into() } else { "0".into() });
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One episode recovered from a per-step CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StepsEpisode {
    /// Joint positions per sample, including the initial state.
    pub samples: Vec<Vec<f64>>,
    /// Commanded joint deltas per step.
    pub actions: Vec<Vec<f64>>,
    /// Success flag from the final row.
    pub success: bool,
}

pub fn read_steps_csv(path: &Path) -> Result<(FileHeader, Vec<StepsEpisode>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::MalformedRow {
        line: 1,
        message: "empty file, expected a header comment".into(),
    })?;
    let header = parse_csv_preamble(first)?;
    header.expect(STEPS_FORMAT)?;
    let (_, columns_line) = lines.next().ok_or(Error::MalformedRow {
        line: 2,
        message: "missing column header".into(),
    })?;
    let n_cols = columns_line.split(',').count();
    if n_cols < 6 || (n_cols - 4) % 2 != 0 {
        return Err(Error::MalformedRow {
            line: 2,
            message: format!("cannot derive joint count from {n_cols} columns"),
        });
    }
    let dof = (n_cols - 4) / 2;
    if columns_line != steps_csv_header(dof) {
        return Err(Error::MalformedRow {
            line: 2,
            message: format!("unexpected columns, want '{}'", steps_csv_header(dof)),
        });
    }

    let mut episodes: Vec<StepsEpisode> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::MalformedRow {
                line: lineno,
                message: format!("expected {n_cols} fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::MalformedRow {
                line: lineno,
                message: format!("{what} is not a number: '{s}'"),
            })
        };
        let t = parse(fields[0], "t")? as usize;
        let q: Vec<f64> = fields[1..1 + dof]
            .iter()
            .map(|s| parse(s, "joint position"))
            .collect::<Result<_>>()?;
        let a: Vec<f64> = fields[1 + dof..1 + 2 * dof]
            .iter()
            .map(|s| parse(s, "action"))
            .collect::<Result<_>>()?;
        let success = match fields[n_cols - 1] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::MalformedRow {
                    line: lineno,
                    message: format!("success_latched must be 0 or 1, got '{other}'"),
                })
            }
        };
        if t == 0 {
            episodes.push(StepsEpisode { samples: Vec::new(), actions: Vec::new(), success });
        }
        let episode = episodes.last_mut().ok_or(Error::MalformedRow {
            line: lineno,
            message: "first data row must have t = 0".into(),
        })?;
        if t != 0 {
            if t != episode.samples.len() {
                return Err(Error::MalformedRow {
                    line: lineno,
                    message: format!("t = {t} out of order, expected {}", episode.samples.len()),
                });
            }
            episode.actions.push(a);
        }
        episode.samples.push(q);
        episode.success = success;
    }
    Ok((header, episodes))
}

// ---------------------------------------------------------------------------
// Policy checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    /// Which pipeline stage produced this ("bc" or "grpo-<mode>").
    pub stage: String,
    pub arch: PolicyArch,
    pub tensors: Vec<TensorRecord>,
}

/// Expected tensor sequence for an architecture: per layer a weight matrix
/// (out x in, row-major) and a bias vector, then the shared log_std vector.
fn tensor_layout(arch: &PolicyArch) -> Vec<(String, Vec<usize>)> {
    let mut layout = Vec::new();
    for (l, (fan_in, fan_out)) in arch.layer_dims().into_iter().enumerate() {
        layout.push((format!("layer{l}.weight"), vec![fan_out, fan_in]));
        layout.push((format!("layer{l}.bias"), vec![fan_out]));
    }
    layout.push(("log_std".into(), vec![arch.output_dim]));
    layout
}

pub fn checkpoint_from_params(params: &PolicyParams, stage: &str, config_hash: &str) -> Checkpoint {
    let arch = &params.arch;
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, shape) in tensor_layout(arch) {
        let len: usize = shape.iter().product();
        tensors.push(TensorRecord {
            name,
            shape,
            values: params.flat[offset..offset + len].to_vec(),
        });
        offset += len;
    }
    debug_assert_eq!(offset, params.flat.len());
    Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: FORMAT_VERSION,
        config_hash: config_hash.into(),
        stage: stage.into(),
        arch: arch.clone(),
        tensors,
    }
}

/// Rebuild parameters, rejecting version skew and any tensor whose name,
/// order, or shape disagrees with the declared architecture.
pub fn params_from_checkpoint(ck: &Checkpoint) -> Result<PolicyParams> {
    if ck.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("not a policy checkpoint: format '{}'", ck.format)));
    }
    if ck.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (this build reads version {FORMAT_VERSION})",
            ck.version
        )));
    }
    // Re-run the architecture invariants rather than trusting the file.
    let arch = PolicyArch::new(
        ck.arch.input_dim,
        ck.arch.hidden.clone(),
        ck.arch.output_dim,
        ck.arch.action_scale,
    )?;
    let layout = tensor_layout(&arch);
    if ck.tensors.len() != layout.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            layout.len(),
            ck.tensors.len()
        )));
    }
    let mut flat = Vec::with_capacity(arch.param_count());
    for (tensor, (name, shape)) in ck.tensors.iter().zip(&layout) {
        if &tensor.name != name || &tensor.shape != shape {
            return Err(Error::Checkpoint(format!(
                "tensor mismatch: found '{}' with shape {:?}, expected '{}' with shape {:?}",
                tensor.name, tensor.shape, name, shape
            )));
        }
        let len: usize = shape.iter().product();
        if tensor.values.len() != len {
            return Err(Error::Checkpoint(format!(
                "tensor '{}' has {} values but shape {:?}",
                tensor.name,
                tensor.values.len(),
                shape
            )));
        }
        if tensor.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("tensor '{}' has non-finite values", name)));
        }
        flat.extend_from_slice(&tensor.values);
    }
    Ok(PolicyParams { arch, flat })
}

pub fn write_checkpoint(
    path: &Path,
    params: &PolicyParams,
    stage: &str,
    config_hash: &str,
) -> Result<()> {
    let ck = checkpoint_from_params(params, stage, config_hash);
    std::fs::write(path, serde_json::to_string_pretty(&ck)?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let ck: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(ck)
}

// ---------------------------------------------------------------------------
// CSV logs and summaries

pub fn render_train_log(rows: &[TrainLogRow], config_hash: &str) -> String {
    let mut out = csv_preamble(TRAIN_LOG_FORMAT, config_hash);
    out.push('\n');
    out.push_str(TrainLogRow::CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn write_train_log(path: &Path, rows: &[TrainLogRow], config_hash: &str) -> Result<()> {
    std::fs::write(path, render_train_log(rows, config_hash))?;
    Ok(())
}

/// Loss-per-iteration log for the cloning stage; iteration 0 is the loss
/// before any update.
pub fn write_bc_log(path: &Path, losses: &[f64], config_hash: &str) -> Result<()> {
    let mut out = csv_preamble(BC_LOG_FORMAT, config_hash);
    out.push('\n');
    out.push_str("iteration,loss\n");
    for (i, loss) in losses.iter().enumerate() {
        out.push_str(&format!("{i},{loss}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_report_csv(
    path: &Path,
    reports: &[SmoothnessReport],
    config_hash: &str,
) -> Result<()> {
    let mut out = csv_preamble(REPORT_FORMAT, config_hash);
    out.push('\n');
    out.push_str("episode,");
    out.push_str(SmoothnessReport::CSV_HEADER);
    out.push('\n');
    for (i, report) in reports.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", report.to_csv_row()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_eval_csv(path: &Path, report: &EvalReport, config_hash: &str) -> Result<()> {
    let mut out = csv_preamble(EVAL_FORMAT, config_hash);
    out.push('\n');
    out.push_str("episodes,success_rate,mean_jerk,peak_jerk\n");
    out.push_str(&format!(
        "{},{},{},{}\n",
        report.episodes, report.success_rate, report.mean_jerk, report.peak_jerk
    ));
    std::fs::write(path, out)?;
    Ok(())
}

/// One line of the ablation summary; `seed` is a number for per-run rows and
/// the word "mean" for the per-mode aggregate rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: String,
    pub seed: String,
    pub success_rate: f64,
    pub mean_jerk: f64,
}

pub fn render_ablation_csv(rows: &[AblationRow], config_hash: &str) -> String {
    let mut out = csv_preamble(ABLATION_FORMAT, config_hash);
    out.push('\n');
    out.push_str("mode,seed,success_rate,mean_jerk\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.mode, row.seed, row.success_rate, row.mean_jerk
        ));
    }
    out
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow], config_hash: &str) -> Result<()> {
    std::fs::write(path, render_ablation_csv(rows, config_hash))?;
    Ok(())
}

pub fn read_ablation_csv(path: &Path) -> Result<(FileHeader, Vec<AblationRow>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::MalformedRow {
        line: 1,
        message: "empty file, expected a header comment".into(),
    })?;
    let header = parse_csv_preamble(first)?;
    header.expect(ABLATION_FORMAT)?;
    let (_, cols) = lines.next().ok_or(Error::MalformedRow {
        line: 2,
        message: "missing column header".into(),
    })?;
    if cols != "mode,seed,success_rate,mean_jerk" {
        return Err(Error::MalformedRow { line: 2, message: format!("unexpected columns '{cols}'") });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::MalformedRow {
                line: idx + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::MalformedRow {
                line: idx + 1,
                message: format!("not a number: '{s}'"),
            })
        };
        rows.push(AblationRow {
            mode: fields[0].into(),
            seed: fields[1].into(),
            success_rate: num(fields[2])?,
            mean_jerk: num(fields[3])?,
        });
    }
    Ok((header, rows))
}

// ---------------------------------------------------------------------------
// Experiment manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    /// Where the effective configuration was loaded from ("defaults" when no
    /// file was given).
    pub config_path: String,
    pub seeds: Vec<u64>,
    /// Files this run wrote, relative to the output directory.
    pub outputs: Vec<String>,
    /// Format version of each artifact kind this run emitted.
    pub artifact_versions: Vec<(String, u32)>,
}

impl ExperimentManifest {
    pub fn new(config_path: &str, config_hash: &str, seeds: Vec<u64>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::ContractViolation("manifest seed list is empty".into()));
        }
        Ok(ExperimentManifest {
            format: MANIFEST_FORMAT.into(),
            version: FORMAT_VERSION,
            config_hash: config_hash.into(),
            config_path: config_path.into(),
            seeds,
            outputs: Vec::new(),
            artifact_versions: Vec::new(),
        })
    }

    pub fn record(&mut self, relative_path: &str, format: &str) {
        self.outputs.push(relative_path.to_string());
        let key = format.to_string();
        if !self.artifact_versions.iter().any(|(k, _)| *k == key) {
            self.artifact_versions.push((key, FORMAT_VERSION));
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
