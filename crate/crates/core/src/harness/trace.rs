use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Checkpoint;

/// One experiment step in raw units. `u` is the input applied at `k` (empty at
/// the final step), `yhat` the model's prediction of `y` before it was measured.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub yhat: Vec<f64>,
    pub score: f64,
    pub penalty: f64,
    pub step_ms: f64,
    /// Time spent in input selection alone.
    pub acq_ms: f64,
}

impl StepRecord {
    /// Equality on everything except the wall-clock columns.
    pub fn same_data(&self, other: &StepRecord) -> bool {
        let bits = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        self.k == other.k
            && bits(&self.u, &other.u)
            && bits(&self.y, &other.y)
            && bits(&self.yhat, &other.yhat)
            && self.score.to_bits() == other.score.to_bits()
            && self.penalty.to_bits() == other.penalty.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    Aborted { at: usize, reason: String },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

/// Records for `k = 0 … N` and the final model.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    pub status: RunStatus,
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    k: usize,
    u: String,
    y: String,
    yhat: String,
    score: f64,
    penalty: f64,
    step_ms: f64,
    acq_ms: f64,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";")
}

fn split(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|p| p.trim().parse::<f64>().map_err(|e| Error::parse(format!("bad number {p:?}: {e}")))).collect()
}

impl RunTrace {
    pub fn new() -> Self {
        RunTrace { records: Vec::new(), status: RunStatus::Completed, checkpoint: None }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn outputs(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.y.clone()).collect()
    }

    /// Equal records apart from timing, and equal status.
    pub fn same_data(&self, other: &RunTrace) -> bool {
        self.status == other.status
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_data(b))
    }

    /// CSV with columns `k,u,y,yhat,score,penalty,step_ms,acq_ms`; vector
    /// entries are `;`-separated. An aborted run ends with a `# aborted` line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(Row {
                k: r.k,
                u: join(&r.u),
                y: join(&r.y),
                yhat: join(&r.yhat),
                score: r.score,
                penalty: r.penalty,
                step_ms: r.step_ms,
                acq_ms: r.acq_ms,
            })?;
        }
        let mut w = wr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        if let RunStatus::Aborted { at, reason } = &self.status {
            writeln!(w, "# aborted at {at}: {}", reason.replace('\n', " "))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut text = String::new();
        let mut r = r;
        r.read_to_string(&mut text)?;
        let mut status = RunStatus::Completed;
        let mut body = String::with_capacity(text.len());
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# aborted at ") {
                let (at, reason) = rest.split_once(": ").unwrap_or((rest, ""));
                let at = at.trim().parse().map_err(|_| Error::parse(format!("bad abort marker {line:?}")))?;
                status = RunStatus::Aborted { at, reason: reason.to_string() };
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let mut records = Vec::new();
        for row in rd.deserialize::<Row>() {
            let row = row?;
            records.push(StepRecord {
                k: row.k,
                u: split(&row.u)?,
                y: split(&row.y)?,
                yhat: split(&row.yhat)?,
                score: row.score,
                penalty: row.penalty,
                step_ms: row.step_ms,
                acq_ms: row.acq_ms,
            });
        }
        if records.windows(2).any(|w| w[1].k != w[0].k + 1) {
            return Err(Error::parse("trace steps are not consecutive"));
        }
        Ok(RunTrace { records, status, checkpoint: None })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { path: Some(path.to_path_buf()), msg },
            other => other,
        })
    }
}

impl Default for RunTrace {
    fn default() -> Self {
        Self::new()
    }
}
