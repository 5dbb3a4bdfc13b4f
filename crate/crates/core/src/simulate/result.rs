use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::measures::{io as measure_io, SummaryStats, WeightedEmpirical};
use crate::real::Real;
use crate::simulate::config::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Spoc,
    BatchSpoc,
    ClassicalPoc,
    CoupledSpoc,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSnapshot<T> {
    pub step: usize,
    pub time: f64,
    pub summary: SummaryStats<T>,
    /// Present with the `full_atoms` backend.
    pub measure: Option<WeightedEmpirical<T>>,
}

/// The measures at every checkpoint once particles `1..=n` are in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilestoneSnapshot<T> {
    pub n: usize,
    pub checkpoints: Vec<CheckpointSnapshot<T>>,
}

impl<T: Real> MilestoneSnapshot<T> {
    pub fn at_step(&self, step: usize) -> Option<&CheckpointSnapshot<T>> {
        self.checkpoints.iter().find(|c| c.step == step)
    }

    pub fn last(&self) -> &CheckpointSnapshot<T> {
        self.checkpoints.last().expect("at least one checkpoint")
    }
}

/// `count` paths on `points = M + 1` grid times, row-major
/// `[path][time][coordinate]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStore<T> {
    pub count: usize,
    pub points: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Real> PathStore<T> {
    pub fn new(points: usize, dim: usize) -> Self {
        Self {
            count: 0,
            points,
            dim,
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, path: &[T]) {
        debug_assert_eq!(path.len(), self.points * self.dim);
        self.data.extend_from_slice(path);
        self.count += 1;
    }

    /// Path `i` (0-based) as `points * dim` values.
    pub fn path(&self, i: usize) -> &[T] {
        let w = self.points * self.dim;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn truncated(&self, count: usize) -> Self {
        let count = count.min(self.count);
        Self {
            count,
            points: self.points,
            dim: self.dim,
            data: self.data[..count * self.points * self.dim].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult<T> {
    pub replication: u64,
    pub snapshots: Vec<MilestoneSnapshot<T>>,
    pub paths: Option<PathStore<T>>,
    pub euler_steps: u64,
}

impl<T: Real> ReplicationResult<T> {
    pub fn milestone(&self, n: usize) -> Option<&MilestoneSnapshot<T>> {
        self.snapshots.iter().find(|s| s.n == n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult<T> {
    pub version: String,
    pub method: Method,
    pub config: SimConfig,
    pub replications: Vec<ReplicationResult<T>>,
    /// Deviations and interpretation choices that affect the numbers.
    pub notes: Vec<String>,
    pub wall_time_secs: f64,
    pub euler_steps: u64,
}

impl<T: Real> RunResult<T> {
    /// Everything except timing, for bit-identity comparisons.
    pub fn same_output(&self, other: &Self) -> bool {
        self.method == other.method && self.replications == other.replications
    }

    /// `E X` (first coordinate) at the last checkpoint of milestone `n`,
    /// one value per replication.
    pub fn terminal_means(&self, n: usize) -> Vec<f64> {
        self.replications
            .iter()
            .filter_map(|r| r.milestone(n))
            .map(|s| s.last().summary.mean[0].as_f64())
            .collect()
    }

    pub fn terminal_second_moments(&self, n: usize) -> Vec<f64> {
        self.replications
            .iter()
            .filter_map(|r| r.milestone(n))
            .map(|s| s.last().summary.second_moment.as_f64())
            .collect()
    }
}

pub const CRATE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub replication: u64,
    pub n: usize,
    pub step: usize,
    pub time: f64,
    pub mean: Vec<f64>,
    pub second_moment: f64,
    pub snapshot_file: Option<String>,
}

/// On-disk description of a run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub method: Method,
    pub complete: bool,
    pub config: SimConfig,
    /// `(replication, stream seed)`: particle streams are keyed by these.
    pub seed_map: Vec<(u64, u64)>,
    pub notes: Vec<String>,
    pub wall_time_secs: f64,
    pub euler_steps: u64,
    pub summaries: Vec<SummaryRow>,
    pub paths_file: Option<String>,
}

pub const PATHS_MAGIC: &[u8; 4] = b"SPPT";

/// Writes `manifest.json`, `snapshots/*.csv` and, when paths were stored,
/// `paths.bin`.
///
/// `paths.bin` layout (little endian): `b"SPPT"`, `u32` version 1, `u32`
/// rank 4, four `u64` extents `(replications, paths, points, dim)`, then
/// the `f64` values row-major.
pub fn write_run_dir<T: Real>(dir: &Path, run: &RunResult<T>, complete: bool) -> Result<Manifest> {
    let snaps = dir.join("snapshots");
    fs::create_dir_all(&snaps)?;
    let mut summaries = Vec::new();
    for rep in &run.replications {
        for ms in &rep.snapshots {
            for cp in &ms.checkpoints {
                let snapshot_file = match &cp.measure {
                    Some(mu) => {
                        let name = format!("rep{}_n{}_m{}.csv", rep.replication, ms.n, cp.step);
                        let f = BufWriter::new(fs::File::create(snaps.join(&name))?);
                        measure_io::write_csv(mu, f)?;
                        Some(format!("snapshots/{name}"))
                    }
                    None => None,
                };
                summaries.push(SummaryRow {
                    replication: rep.replication,
                    n: ms.n,
                    step: cp.step,
                    time: cp.time,
                    mean: cp.summary.mean.iter().map(|v| v.as_f64()).collect(),
                    second_moment: cp.summary.second_moment.as_f64(),
                    snapshot_file,
                });
            }
        }
    }
    // Summary table next to the per-snapshot measures.
    {
        let mut f = BufWriter::new(fs::File::create(snaps.join("summary.csv"))?);
        let dim = run.config.initial.dim();
        let means: Vec<String> = (0..dim).map(|k| format!("mean{k}")).collect();
        writeln!(f, "replication,n,step,time,{},second_moment", means.join(","))?;
        for r in &summaries {
            let m: Vec<String> = r.mean.iter().map(|v| v.to_string()).collect();
            writeln!(
                f,
                "{},{},{},{},{},{}",
                r.replication,
                r.n,
                r.step,
                r.time,
                m.join(","),
                r.second_moment
            )?;
        }
    }
    let paths_file = if run.replications.iter().any(|r| r.paths.is_some()) {
        write_paths(&dir.join("paths.bin"), run)?;
        Some("paths.bin".to_string())
    } else {
        None
    };
    let manifest = Manifest {
        version: run.version.clone(),
        method: run.method,
        complete,
        config: run.config.clone(),
        seed_map: run
            .replications
            .iter()
            .map(|r| (r.replication, crate::rng::stream_seed(run.config.seed, r.replication)))
            .collect(),
        notes: run.notes.clone(),
        wall_time_secs: run.wall_time_secs,
        euler_steps: run.euler_steps,
        summaries,
        paths_file,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_paths<T: Real>(path: &Path, run: &RunResult<T>) -> Result<()> {
    let stores: Vec<&PathStore<T>> = run
        .replications
        .iter()
        .map(|r| {
            r.paths
                .as_ref()
                .ok_or_else(|| SpocError::Numeric("paths stored for some replications only".into()))
        })
        .collect::<Result<_>>()?;
    let first = stores[0];
    if stores
        .iter()
        .any(|s| (s.count, s.points, s.dim) != (first.count, first.points, first.dim))
    {
        return Err(SpocError::Numeric("replications stored paths of different shapes".into()));
    }
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(PATHS_MAGIC)?;
    f.write_all(&1u32.to_le_bytes())?;
    f.write_all(&4u32.to_le_bytes())?;
    for e in [stores.len(), first.count, first.points, first.dim] {
        f.write_all(&(e as u64).to_le_bytes())?;
    }
    for s in stores {
        for v in &s.data {
            f.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Reads `paths.bin` back as one [`PathStore<f64>`] per replication.
pub fn read_paths(path: &Path) -> Result<Vec<PathStore<f64>>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |m: &str| SpocError::Config(format!("bad paths file: {m}"));
    if buf.len() < 44 || &buf[..4] != PATHS_MAGIC {
        return Err(bad("missing magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().expect("4 bytes"));
    if u32_at(4) != 1 || u32_at(8) != 4 {
        return Err(bad("unsupported version or rank"));
    }
    let ext: Vec<usize> = (0..4)
        .map(|k| u64::from_le_bytes(buf[12 + 8 * k..20 + 8 * k].try_into().expect("8 bytes")) as usize)
        .collect();
    let per = ext[1] * ext[2] * ext[3];
    if buf.len() != 44 + 8 * ext[0] * per {
        return Err(bad("length does not match header"));
    }
    let vals: Vec<f64> = buf[44..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(vals
        .chunks(per.max(1))
        .take(ext[0])
        .map(|c| PathStore {
            count: ext[1],
            points: ext[2],
            dim: ext[3],
            data: c.to_vec(),
        })
        .collect())
}
