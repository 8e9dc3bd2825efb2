//! File formats: newline-delimited JSON records for datasets and exact
//! trajectories, JSON checkpoints and sweep documents. Floats are written
//! with 17 significant digits so every value round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dynamics::ExactTrajectory;
use crate::generator::GeneratorParams;
use crate::measurement::{Counts, MeasurementConfig, MeasurementDataset, NoisyRecord};
use crate::trainer::EpochStats;
use crate::{Error, Result, Vec16};

pub const SCHEMA_VERSION: u64 = 1;
pub const CHECKPOINT_FORMAT: &str = "lda-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Lexicographic Pauli-product ordering over (I, x, y, z)².
pub const BASIS_ORDER: &str = "pauli-lex-IXYZ";

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    format!("{x:.16e}")
}

/// Compact JSON text with floats at 17 significant digits.
pub fn to_json(value: &Value) -> Result<String> {
    let mut out = String::new();
    write_value(value, &mut out)?;
    Ok(out)
}

fn write_value(value: &Value, out: &mut String) -> Result<()> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().expect("f64 number");
                if !x.is_finite() {
                    return Err(Error::Parse(format!("cannot serialise non-finite number {x}")));
                }
                out.push_str(&fmt_f64(x));
            } else {
                write!(out, "{n}").expect("write to string");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s)?),
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(v, out)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k)?);
                out.push(':');
                write_value(v, out)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

fn float(x: f64) -> Value {
    // Non-finite values have no JSON form and become null.
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

fn float_array(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(float).collect())
}

/// Hex SHA-256 of the serialised form of any configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let text = to_json(&serde_json::to_value(config)?)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    f.sync_all()?;
    Ok(())
}

#[derive(Deserialize)]
struct RecordLine {
    schema_version: u64,
    traj_id: usize,
    t: f64,
    dt: f64,
    window: f64,
    v0: Vec<f64>,
    v_est: Vec<f64>,
    counts: Option<Vec<Vec<u32>>>,
    #[serde(rename = "N")]
    shots: Option<u32>,
    #[serde(rename = "M")]
    m: usize,
    seed: u64,
}

fn vec16(xs: &[f64], what: &str, line: usize) -> Result<Vec16> {
    if xs.len() != 16 {
        return Err(Error::Parse(format!("line {line}: {what} has {} components, expected 16", xs.len())));
    }
    Ok(Vec16::from_column_slice(xs))
}

pub fn dataset_to_string(ds: &MeasurementDataset) -> Result<String> {
    let mut out = String::new();
    for r in &ds.records {
        let counts = match &r.counts {
            Some(c) => Value::Array(c.iter().map(|h| Value::Array(h.iter().map(|&x| Value::from(x)).collect())).collect()),
            None => Value::Null,
        };
        let mut obj = serde_json::Map::new();
        obj.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        obj.insert("traj_id".into(), Value::from(r.traj_id));
        obj.insert("t".into(), float(r.t));
        obj.insert("dt".into(), float(ds.dt));
        obj.insert("window".into(), float(ds.config.window));
        obj.insert("v0".into(), float_array(r.v0.iter().copied()));
        obj.insert("v_est".into(), float_array(r.v_est.iter().copied()));
        obj.insert("counts".into(), counts);
        obj.insert("N".into(), ds.config.shots.map_or(Value::Null, Value::from));
        obj.insert("M".into(), Value::from(ds.config.times_per_trajectory));
        obj.insert("seed".into(), Value::from(ds.config.seed));
        out.push_str(&to_json(&Value::Object(obj))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, ds: &MeasurementDataset) -> Result<()> {
    write_atomic(path, &dataset_to_string(ds)?)
}

pub fn read_dataset(path: &Path) -> Result<MeasurementDataset> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    let mut meta: Option<(f64, MeasurementConfig)> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let rec: RecordLine =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {n}: {e}")))?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("line {n}: unsupported schema_version {}", rec.schema_version)));
        }
        let cfg = MeasurementConfig { shots: rec.shots, times_per_trajectory: rec.m, window: rec.window, seed: rec.seed };
        match &meta {
            None => meta = Some((rec.dt, cfg)),
            Some((dt, c)) => {
                if *dt != rec.dt || *c != cfg {
                    return Err(Error::Parse(format!("line {n}: metadata differs from earlier records")));
                }
            }
        }
        if !(rec.dt > 0.0) || !rec.t.is_finite() || rec.t < 0.0 {
            return Err(Error::Parse(format!("line {n}: invalid time or step")));
        }
        let counts = match rec.counts {
            None => None,
            Some(rows) => {
                let mut c: Counts = [[0; 4]; 9];
                if rows.len() != 9 || rows.iter().any(|r| r.len() != 4) {
                    return Err(Error::Parse(format!("line {n}: counts must be 9 x 4")));
                }
                for (dst, src) in c.iter_mut().zip(&rows) {
                    dst.copy_from_slice(src);
                }
                Some(c)
            }
        };
        records.push(NoisyRecord {
            traj_id: rec.traj_id,
            step: (rec.t / rec.dt).round() as usize,
            t: rec.t,
            v0: vec16(&rec.v0, "v0", n)?,
            v_est: vec16(&rec.v_est, "v_est", n)?,
            counts,
        });
    }
    let (dt, config) = meta.ok_or_else(|| Error::Parse(format!("{} holds no records", path.display())))?;
    config.validate()?;
    Ok(MeasurementDataset { dt, config, records })
}

#[derive(Deserialize)]
struct ExactLine {
    traj_id: usize,
    t: f64,
    dt: f64,
    v: Vec<f64>,
}

pub fn exact_to_string(trajs: &[ExactTrajectory]) -> Result<String> {
    let mut out = String::new();
    for traj in trajs {
        for (k, v) in traj.states.iter().enumerate() {
            let mut obj = serde_json::Map::new();
            obj.insert("traj_id".into(), Value::from(traj.id));
            obj.insert("t".into(), float(traj.time(k)));
            obj.insert("dt".into(), float(traj.dt));
            obj.insert("v".into(), float_array(v.iter().copied()));
            out.push_str(&to_json(&Value::Object(obj))?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_exact(path: &Path, trajs: &[ExactTrajectory]) -> Result<()> {
    write_atomic(path, &exact_to_string(trajs)?)
}

/// Trajectories in file order; each must list its grid times in order.
pub fn read_exact(path: &Path) -> Result<Vec<ExactTrajectory>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out: Vec<ExactTrajectory> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let rec: ExactLine = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {n}: {e}")))?;
        let v = vec16(&rec.v, "v", n)?;
        match out.last_mut() {
            Some(t) if t.id == rec.traj_id => {
                if (rec.t - t.time(t.states.len())).abs() > 1e-9 * rec.t.max(1.0) || rec.dt != t.dt {
                    return Err(Error::Parse(format!("line {n}: trajectory {} is not on a uniform grid", rec.traj_id)));
                }
                t.states.push(v);
            }
            _ => {
                if rec.t != 0.0 {
                    return Err(Error::Parse(format!("line {n}: trajectory {} does not start at t = 0", rec.traj_id)));
                }
                if out.iter().any(|t| t.id == rec.traj_id) {
                    return Err(Error::Parse(format!("line {n}: trajectory {} is split", rec.traj_id)));
                }
                out.push(ExactTrajectory { id: rec.traj_id, dt: rec.dt, states: vec![v] });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Parse(format!("{} holds no trajectories", path.display())));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub basis_order: String,
    pub theta_h: Vec<f64>,
    pub theta_x: Vec<Vec<f64>>,
    pub theta_y: Vec<Vec<f64>>,
    pub config_hash: String,
    pub best_epoch: Option<usize>,
    pub final_loss: Option<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let t = crate::basis::NUM_TRACELESS;
    if rows.len() != t || rows.iter().any(|r| r.len() != t) {
        return Err(Error::ShapeMismatch(format!("{what} must be {t} x {t}")));
    }
    Ok(DMatrix::from_fn(t, t, |i, j| rows[i][j]))
}

impl Checkpoint {
    pub fn new(params: &GeneratorParams, config_hash: String, best_epoch: Option<usize>, final_loss: Option<f64>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            basis_order: BASIS_ORDER.into(),
            theta_h: params.theta_h.clone(),
            theta_x: rows(&params.theta_x),
            theta_y: rows(&params.theta_y),
            config_hash,
            best_epoch,
            final_loss,
        }
    }

    pub fn params(&self) -> Result<GeneratorParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint {} v{}", self.format, self.version)));
        }
        if self.basis_order != BASIS_ORDER {
            return Err(Error::ShapeMismatch(format!("checkpoint basis ordering '{}'", self.basis_order)));
        }
        if self.theta_h.len() != crate::basis::NUM_TRACELESS {
            return Err(Error::ShapeMismatch("theta_h must have 15 entries".into()));
        }
        let p = GeneratorParams {
            theta_h: self.theta_h.clone(),
            theta_x: from_rows(&self.theta_x, "theta_x")?,
            theta_y: from_rows(&self.theta_y, "theta_y")?,
        };
        if !p.is_finite() {
            return Err(Error::Parse("checkpoint holds non-finite parameters".into()));
        }
        Ok(p)
    }

    pub fn to_string(&self) -> Result<String> {
        Ok(to_json(&serde_json::to_value(self)?)? + "\n")
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &ckpt.to_string()?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    ckpt.params()?;
    Ok(ckpt)
}

pub fn loss_history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,lr,mse,regularizer,total,holdout_mse\n");
    for h in history {
        let hold = h.holdout_mse.map(fmt_f64).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            h.epoch,
            fmt_f64(h.lr),
            fmt_f64(h.loss.mse),
            fmt_f64(h.loss.regularizer),
            fmt_f64(h.loss.total),
            hold
        ));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text)
}

/// Pretty-free JSON document of any serialisable value.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &(to_json(&serde_json::to_value(value)?)? + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0, 1e-17] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            let v: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(v.to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn non_finite_rejected() {
        assert!(to_json(&serde_json::json!({"a": [1.0]})).is_ok());
        let mut m = serde_json::Map::new();
        m.insert("x".into(), float(f64::NAN));
        // NaN maps to null rather than an invalid number.
        assert_eq!(to_json(&Value::Object(m)).unwrap(), "{\"x\":null}");
    }

    #[test]
    fn config_hash_is_stable() {
        let a = config_hash(&crate::trainer::TrainConfig::default()).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&crate::trainer::TrainConfig::default()).unwrap());
        let b = config_hash(&crate::trainer::TrainConfig { seed: 1, ..Default::default() }).unwrap();
        assert_ne!(a, b);
    }
}
