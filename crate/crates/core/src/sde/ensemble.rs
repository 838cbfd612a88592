use std::io::{self, Write};

use sha2::{Digest, Sha256};

use super::Path;

/// Runs `job(path_index)` for `0..count` and returns the results in index
/// order. `workers == 0` uses every available core; `workers == 1` runs
/// inline. Results do not depend on the worker count.
pub fn run_ensemble<T, F>(count: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers != 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build();
        if let Ok(pool) = pool {
            return pool.install(|| (0..count as u64).into_par_iter().map(&job).collect());
        }
    }
    let _ = workers;
    (0..count as u64).map(job).collect()
}

/// Hex SHA-256 of the little-endian bytes of `values`.
pub fn digest_f64s<I: IntoIterator<Item = f64>>(values: I) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// A set of paths sharing one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub master_seed: u64,
    pub dt: f64,
    pub columns: Vec<String>,
    pub paths: Vec<Path>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn stopped_count(&self) -> usize {
        self.paths.iter().filter(|p| p.stop.is_some()).count()
    }

    /// `path,t,<columns>,stopped`, one row per path and grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "path,t")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w, ",stopped")?;
        for (i, p) in self.paths.iter().enumerate() {
            for k in 0..=p.steps() {
                write!(w, "{i},{:.16e}", p.time(k))?;
                for v in p.state(k) {
                    write!(w, ",{v:.16e}")?;
                }
                writeln!(w, ",{}", u8::from(p.is_stopped_at(k)))?;
            }
        }
        Ok(())
    }

    /// Digest over all states and stop indices.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.master_seed.to_le_bytes());
        h.update(self.dt.to_le_bytes());
        for p in &self.paths {
            for v in &p.states {
                h.update(v.to_le_bytes());
            }
            let stop = p.stop.map_or(u64::MAX, |(k, _)| k as u64);
            h.update(stop.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
