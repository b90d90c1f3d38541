//! Parallel execution helpers.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! and fall back to plain iterators otherwise. Every parallel map collects
//! into an index-ordered `Vec` and reductions happen sequentially afterwards,
//! so results are bitwise identical regardless of thread count.

/// Map `f` over `0..n`, collecting results in index order.
macro_rules! par_map_range {
    ($n:expr, $f:expr) => {{
        #[cfg(feature = "parallel")]
        {
            use rayon::iter::{IntoParallelIterator, ParallelIterator};
            (0..$n).into_par_iter().map($f).collect::<Vec<_>>()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..$n).map($f).collect::<Vec<_>>()
        }
    }};
}

pub(crate) use par_map_range;

/// Cap the worker pool at `n` threads (0 means "all available cores").
///
/// Only meaningful with the `parallel` feature; otherwise a no-op. Calling
/// this more than once keeps the first pool, which is how rayon's global
/// pool behaves.
pub fn configure_threads(n: usize) -> std::result::Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        if n == 0 {
            return Ok(());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}
