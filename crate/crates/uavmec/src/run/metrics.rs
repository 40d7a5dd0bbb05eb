//! Per-episode metrics and plain-text CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ppo::UpdateStats;

/// What one episode produced. Energies are raw joules regardless of reward
/// normalization.
#[derive(Debug, Clone)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub returns: Vec<f64>,
    pub mean_return: f64,
    pub task_completion_pct: f64,
    pub processed_tasks: usize,
    pub total_tasks: usize,
    pub collisions: usize,
    pub boundary_violations: usize,
    pub total_energy: f64,
    pub energy_per_task: f64,
    pub psi_series: Vec<f64>,
    pub psi_mean: f64,
}

impl EpisodeMetrics {
    pub fn csv_header(num_uavs: usize) -> String {
        let mut h = String::from(
            "episode,task_pct,processed,total,collisions,boundary,energy_total,energy_per_task,psi_mean,mean_return",
        );
        for m in 0..num_uavs {
            h.push_str(&format!(",return_{m}"));
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.task_completion_pct,
            self.processed_tasks,
            self.total_tasks,
            self.collisions,
            self.boundary_violations,
            self.total_energy,
            self.energy_per_task,
            self.psi_mean,
            self.mean_return,
        );
        for r in &self.returns {
            row.push_str(&format!(",{r}"));
        }
        row
    }
}

pub const STATS_HEADER: &str = "episode,uav,actor_loss,critic_loss,entropy,clip_fraction,mean_ratio";

pub fn stats_row(episode: usize, uav: usize, s: &UpdateStats) -> String {
    format!(
        "{episode},{uav},{},{},{},{},{}",
        s.actor_loss, s.critic_loss, s.entropy, s.clip_fraction, s.mean_ratio
    )
}

/// Line-buffered CSV file that flushes after every row, so partial runs
/// leave readable output.
pub struct CsvFile {
    writer: BufWriter<File>,
    path: PathBuf,
}

impl CsvFile {
    pub fn create(path: PathBuf, header: &str) -> Result<CsvFile> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut csv = CsvFile {
            writer: BufWriter::new(file),
            path,
        };
        csv.row(header)?;
        Ok(csv)
    }

    pub fn row(&mut self, line: &str) -> Result<()> {
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Mean and population standard deviation; (0, 0) for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
