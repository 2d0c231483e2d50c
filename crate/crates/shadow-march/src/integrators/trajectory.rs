//! Primal trajectory storage with binary checkpoint persistence.

use crate::error::{Result, ShadowError};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SHMT";
const VERSION: u32 = 1;

/// Primal solution sampled at every time step: states `u_0..u_N` on the
/// uniform grid `t_i = start_time + i·dt`, stored time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStore {
    start_time: f64,
    dt: f64,
    dim: usize,
    data: Vec<f64>,
}

impl TrajectoryStore {
    pub fn new(start_time: f64, dt: f64, dim: usize) -> Self {
        assert!(dim >= 1);
        TrajectoryStore { start_time, dt, dim, data: Vec::new() }
    }

    pub fn with_capacity(start_time: f64, dt: f64, dim: usize, snapshots: usize) -> Self {
        let mut s = Self::new(start_time, dt, dim);
        s.data.reserve(snapshots * dim);
        s
    }

    pub(crate) fn push(&mut self, state: &[f64]) {
        assert_eq!(state.len(), self.dim);
        self.data.extend_from_slice(state);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    /// Number of snapshots (N+1 for N steps).
    pub fn snapshots(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Number of steps N.
    pub fn steps(&self) -> usize {
        self.snapshots().saturating_sub(1)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_time + i as f64 * self.dt
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.snapshots() - 1)
    }

    /// Checkpoint layout: magic "SHMT", version u32, n u64, N u64, dt f64,
    /// start_time f64, then (N+1)·n little-endian f64 in time-major order.
    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        out.write_all(&(self.steps() as u64).to_le_bytes())?;
        out.write_all(&self.dt.to_le_bytes())?;
        out.write_all(&self.start_time.to_le_bytes())?;
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);

        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ShadowError::BadCheckpoint(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != VERSION {
            return Err(ShadowError::BadCheckpoint(format!("unsupported version {version}")));
        }
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf)?;
        let dim = u64::from_le_bytes(u64buf) as usize;
        input.read_exact(&mut u64buf)?;
        let steps = u64::from_le_bytes(u64buf) as usize;
        let mut f64buf = [0u8; 8];
        input.read_exact(&mut f64buf)?;
        let dt = f64::from_le_bytes(f64buf);
        input.read_exact(&mut f64buf)?;
        let start_time = f64::from_le_bytes(f64buf);

        if dim == 0 {
            return Err(ShadowError::BadCheckpoint("zero state dimension".into()));
        }
        let count = (steps + 1) * dim;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            input.read_exact(&mut f64buf)?;
            data.push(f64::from_le_bytes(f64buf));
        }
        if input.read(&mut [0u8; 1])? != 0 {
            return Err(ShadowError::BadCheckpoint("trailing bytes".into()));
        }
        Ok(TrajectoryStore { start_time, dt, dim, data })
    }
}
