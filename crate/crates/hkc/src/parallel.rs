//! Thread-count independent parallel sampling and study runs.

use hkcopula::estimation::{study_replication, summarize_study, StudyCell, StudyConfig};
use hkcopula::hierarchical::{HierarchicalModel, SampleMethod};
use hkcopula::rng::stream;
use hkcopula::DataMatrix;
use rayon::prelude::*;

/// Rows per sampling chunk; chunk `c` draws from stream (seed, 1, c).
pub const CHUNK: usize = 1024;

/// `n` draws split into fixed chunks, so the output does not depend on the thread count.
pub fn sample_chunked(
    model: &HierarchicalModel,
    n: usize,
    method: SampleMethod,
    seed: u64,
) -> hkcopula::Result<DataMatrix> {
    let d = model.n_vars();
    let chunks: Vec<usize> = (0..n.div_ceil(CHUNK)).collect();
    let parts: Vec<DataMatrix> = chunks
        .par_iter()
        .map(|&c| {
            let rows = CHUNK.min(n - c * CHUNK);
            model.sample(rows, method, &mut stream(seed, 1, c as u32))
        })
        .collect::<hkcopula::Result<_>>()?;
    let mut data = Vec::with_capacity(n * d);
    for p in parts {
        data.extend(p.into_vec());
    }
    DataMatrix::from_vec(n, d, data)
}

/// Every (design, replication) pair of the study, run in parallel.
pub fn run_study(cfg: &StudyConfig) -> Vec<StudyCell> {
    let jobs: Vec<(usize, usize)> = (0..cfg.designs().len())
        .flat_map(|i| (0..cfg.replications).map(move |r| (i, r)))
        .collect();
    let results: Vec<(usize, Option<[f64; 3]>)> = jobs
        .par_iter()
        .map(|&(i, r)| (i, study_replication(cfg, i, r).ok()))
        .collect();
    summarize_study(cfg, &results)
}
