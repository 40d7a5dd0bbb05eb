//! Episode traces as JSON lines plus the coverage-count grid derived from
//! them.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{cell_of, EnergyBreakdown};
use crate::error::{Error, Result};

/// Everything observable about one executed slot. Positions are post-move;
/// assignments and collisions are [user, uav] and [uav, uav] index pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: usize,
    pub positions: Vec<[f64; 2]>,
    pub assignments: Vec<[usize; 2]>,
    pub energy: Vec<EnergyBreakdown>,
    pub rewards: Vec<f64>,
    pub psi: f64,
    pub collisions: Vec<[usize; 2]>,
    pub boundary: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
    pub battery: Vec<f64>,
}

/// Final line of a trace: episode totals and each UAV's visited-cell map as
/// a row-major bitstring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub total_tasks: usize,
    pub processed_tasks: usize,
    pub visited: Vec<String>,
}

pub fn write_trace(path: &Path, slots: &[SlotRecord], summary: &TraceSummary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    for slot in slots {
        let line = serde_json::to_string(slot)
            .map_err(|e| Error::config(format!("trace serialization: {e}")))?;
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    let line = serde_json::to_string(summary)
        .map_err(|e| Error::config(format!("trace serialization: {e}")))?;
    w.write_all(line.as_bytes()).map_err(io_err)?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn read_trace(path: &Path) -> Result<(Vec<SlotRecord>, TraceSummary)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut slots = Vec::new();
    let mut summary = None;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SlotRecord>(&line) {
            Ok(slot) => slots.push(slot),
            Err(_) => {
                summary = Some(serde_json::from_str::<TraceSummary>(&line).map_err(|e| {
                    Error::config(format!("{}: unrecognized trace line: {e}", path.display()))
                })?);
            }
        }
    }
    let summary =
        summary.ok_or_else(|| Error::config(format!("{}: trace has no summary line", path.display())))?;
    Ok((slots, summary))
}

/// Per-cell visit counts over all slots: each UAV contributes its post-move
/// cell once per slot, so the counts sum to fleet size times slot count.
pub fn coverage_counts(slots: &[SlotRecord], grid_dim: usize, grid_cell: f64) -> Vec<u64> {
    let mut counts = vec![0u64; grid_dim * grid_dim];
    for slot in slots {
        for pos in &slot.positions {
            let (row, col) = cell_of(*pos, grid_cell, grid_dim);
            counts[row * grid_dim + col] += 1;
        }
    }
    counts
}

/// Renders the count grid as CSV with row and column headers.
pub fn coverage_csv(counts: &[u64], grid_dim: usize) -> String {
    let mut out = String::from("row\\col");
    for c in 0..grid_dim {
        out.push_str(&format!(",{c}"));
    }
    out.push('\n');
    for r in 0..grid_dim {
        out.push_str(&r.to_string());
        for c in 0..grid_dim {
            out.push_str(&format!(",{}", counts[r * grid_dim + c]));
        }
        out.push('\n');
    }
    out
}

pub fn emit_coverage_grid(
    path: &Path,
    slots: &[SlotRecord],
    grid_dim: usize,
    grid_cell: f64,
) -> Result<PathBuf> {
    let counts = coverage_counts(slots, grid_dim, grid_cell);
    std::fs::write(path, coverage_csv(&counts, grid_dim)).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}
