use crate::error::{Error, Result};

/// Evaluates `f` on every cell with up to `jobs` worker threads and
/// returns the results in cell order, so the output does not depend on
/// scheduling.
pub fn run_cells<C, T, F>(jobs: usize, cells: &[C], f: F) -> Result<Vec<T>>
where
    C: Sync,
    T: Send,
    F: Fn(&C) -> T + Sync,
{
    if jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    if jobs == 1 || cells.len() < 2 {
        return Ok(cells.iter().map(f).collect());
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| cells.par_iter().map(&f).collect()))
}
