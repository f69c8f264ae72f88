//! Per-step simulation records and their CSV form.
//!
//! Column order: `time`, then for each agent `i` (1-based) the true state
//! `x_i, y_i, vx_i, vy_i` and desired position `dx_i, dy_i`; followers also
//! carry their estimate `ex_i, ey_i, evx_i, evy_i` and the trace of their
//! covariance block `ptr_i`. That is `1 + 6N + 5(N − 3)` columns. Floats are
//! written with 17 significant digits, which round-trips exactly.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector2;
use thiserror::Error;

use crate::dynamics::AgentState;
use crate::geometry::Point2;
use crate::graphs::NUM_LEADERS;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed trace: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub truth: Vec<AgentState>,
    pub desired: Vec<Point2>,
    /// Follower estimates (followers only, in agent order).
    pub estimates: Vec<AgentState>,
    pub cov_trace: Vec<f64>,
    /// Commanded accelerations of every agent for the step that starts at
    /// this row. Not exported.
    pub controls: Vec<Vector2<f64>>,
    /// Measurements fused in the step that produced this row. Not exported.
    pub measurements: usize,
    /// Observer contraction diagnostic of that step. Not exported.
    pub sigma_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    num_agents: usize,
    pub rows: Vec<TraceRow>,
}

pub fn column_count(num_agents: usize) -> usize {
    1 + 6 * num_agents + 5 * (num_agents - NUM_LEADERS)
}

fn header(num_agents: usize) -> Vec<String> {
    let mut h = vec!["time".to_string()];
    for i in 0..num_agents {
        let id = i + 1;
        for name in ["x", "y", "vx", "vy", "dx", "dy"] {
            h.push(format!("{name}_{id}"));
        }
        if i >= NUM_LEADERS {
            for name in ["ex", "ey", "evx", "evy", "ptr"] {
                h.push(format!("{name}_{id}"));
            }
        }
    }
    h
}

impl SimulationTrace {
    pub fn new(num_agents: usize) -> Self {
        assert!(num_agents > NUM_LEADERS);
        Self {
            num_agents,
            rows: Vec::new(),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header(self.num_agents))?;
        let mut record = Vec::with_capacity(column_count(self.num_agents));
        for row in &self.rows {
            record.clear();
            let mut push = |v: f64| record.push(format!("{v:.16e}"));
            push(row.time);
            for i in 0..self.num_agents {
                let s = &row.truth[i];
                for v in [s.position.x, s.position.y, s.velocity.x, s.velocity.y, row.desired[i].x, row.desired[i].y] {
                    push(v);
                }
                if i >= NUM_LEADERS {
                    let e = &row.estimates[i - NUM_LEADERS];
                    for v in [e.position.x, e.position.y, e.velocity.x, e.velocity.y, row.cov_trace[i - NUM_LEADERS]] {
                        push(v);
                    }
                }
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn export(&self, path: &Path) -> Result<(), TraceError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads a trace written by [`write_csv`](Self::write_csv). Columns that are
    /// not exported come back empty.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, TraceError> {
        let mut r = csv::Reader::from_reader(input);
        let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let cols = head.len();
        if cols < 14 || (cols + 14) % 11 != 0 {
            return Err(TraceError::Format(format!("{cols} columns match no agent count")));
        }
        let n = (cols + 14) / 11;
        if head != header(n) {
            return Err(TraceError::Format("unexpected header".into()));
        }
        let mut trace = Self::new(n);
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TraceError::Format(format!("data row {}: {e}", line + 1)))?;
            let mut it = vals.into_iter();
            let mut next = || it.next().expect("column count checked by the csv reader");
            let mut row = TraceRow {
                time: next(),
                truth: Vec::with_capacity(n),
                desired: Vec::with_capacity(n),
                estimates: Vec::new(),
                cov_trace: Vec::new(),
                controls: Vec::new(),
                measurements: 0,
                sigma_max: None,
            };
            for i in 0..n {
                let (x, y, vx, vy) = (next(), next(), next(), next());
                row.truth.push(AgentState::new(Point2::new(x, y), Vector2::new(vx, vy)));
                let (dx, dy) = (next(), next());
                row.desired.push(Point2::new(dx, dy));
                if i >= NUM_LEADERS {
                    let (x, y, vx, vy) = (next(), next(), next(), next());
                    row.estimates.push(AgentState::new(Point2::new(x, y), Vector2::new(vx, vy)));
                    row.cov_trace.push(next());
                }
            }
            trace.rows.push(row);
        }
        Ok(trace)
    }

    pub fn import(path: &Path) -> Result<Self, TraceError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
