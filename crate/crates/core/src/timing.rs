//! Frametime statistics over repeated runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frames: usize,
    pub avg_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub std_ms: f64,
}

impl FrameStats {
    pub fn from_samples(ms: &[f64]) -> Result<Self> {
        if ms.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = ms.len() as f64;
        let avg = ms.iter().sum::<f64>() / n;
        let var = ms.iter().map(|x| (x - avg) * (x - avg)).sum::<f64>() / n;
        Ok(Self {
            frames: ms.len(),
            avg_ms: avg,
            min_ms: ms.iter().copied().fold(f64::INFINITY, f64::min),
            max_ms: ms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std_ms: var.sqrt(),
        })
    }
}

/// Times `frames` calls of `run` after `warmup` untimed calls. Only the body
/// of `run` is measured.
pub fn time_frames<T>(warmup: usize, frames: usize, mut run: impl FnMut() -> Result<T>) -> Result<FrameStats> {
    for _ in 0..warmup {
        std::hint::black_box(run()?);
    }
    let mut samples = Vec::with_capacity(frames);
    for _ in 0..frames {
        let start = Instant::now();
        let out = run()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    FrameStats::from_samples(&samples)
}

/// Runs `f` inside a dedicated rayon pool with `threads` workers
/// (`0` means the rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
