//! Order-preserving parallel map, sequential without the `parallel` feature.

use crate::error::{Error, Result};

pub(crate) fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        // `f` itself is not `Send`; a closure borrowing it is.
        #[allow(clippy::redundant_closure)]
        items.par_iter().map(|x| f(x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` on a pool of `threads` workers, or the default pool when `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    if threads == Some(0) {
        return Err(Error::Config("thread count must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        return pool.install(f);
    }
    f()
}
