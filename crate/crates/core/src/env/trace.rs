use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TRACE_HEADER: &str = "t,va,vb,vc,u_worst,y_worst,ta_0,tb_0,tc_0,qouta_total,qoutb_total,qoutc_total";

/// One simulation step as exported for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    /// Phase voltages at the node with the largest imbalance.
    pub v: [f64; 3],
    pub u_worst: f64,
    pub y_worst: f64,
    pub action: [f64; 3],
    /// Total reactive injection per phase, kVAR.
    pub q_total: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn max_vi(&self) -> f64 {
        self.rows.iter().map(|r| r.u_worst).fold(0.0, f64::max)
    }

    pub fn max_vo(&self) -> f64 {
        self.rows.iter().map(|r| r.y_worst).fold(0.0, f64::max)
    }

    /// Rows with `from <= t <= to`.
    pub fn window(&self, from: f64, to: f64) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.t >= from && r.t <= to)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t, r.v[0], r.v[1], r.v[2], r.u_worst, r.y_worst, r.action[0], r.action[1], r.action[2],
                r.q_total[0], r.q_total[1], r.q_total[2]
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}
