use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detectors::{DrawSource, RunTrace};

/// Per-iteration state. Row 0 is the state before the first draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub i: usize,
    pub n_rejected: u64,
    pub n_accepted: u64,
    pub n_unvisited: u64,
    pub n_ambiguity: u64,
    pub p_uniform: f64,
    pub p_gaussian: f64,
    /// Cumulative draws from the uniform branch.
    pub n_uniform: usize,
    /// Cumulative draws from the Gaussian branch.
    pub n_gaussian: usize,
}

pub fn extract_curves(trace: &RunTrace) -> Vec<CurvePoint> {
    let n = trace.total_windows;
    let mut out = Vec::with_capacity(trace.records.len() + 1);
    out.push(CurvePoint {
        i: 0,
        n_rejected: 0,
        n_accepted: 0,
        n_unvisited: n,
        n_ambiguity: 0,
        p_uniform: trace.initial_p_uniform,
        p_gaussian: 1.0 - trace.initial_p_uniform,
        n_uniform: 0,
        n_gaussian: 0,
    });
    let (mut nu, mut ng) = (0, 0);
    for r in &trace.records {
        match r.source {
            DrawSource::Gaussian => ng += 1,
            DrawSource::Uniform | DrawSource::Grid => nu += 1,
        }
        out.push(CurvePoint {
            i: r.i,
            n_rejected: r.n_rejected,
            n_accepted: r.n_accepted,
            n_unvisited: n - r.n_rejected - r.n_accepted,
            n_ambiguity: r.n_ambiguity,
            p_uniform: r.p_uniform,
            p_gaussian: 1.0 - r.p_uniform,
            n_uniform: nu,
            n_gaussian: ng,
        });
    }
    out
}

pub fn write_curves_csv<W: Write>(out: W, label: &str, points: &[CurvePoint]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for p in points {
        w.serialize((label, p))?;
    }
    w.flush()?;
    Ok(())
}
