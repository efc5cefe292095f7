//! Chunked work distribution with a deterministic result order.

/// Images handled by one unit of work. Fixed so that reduction order never
/// depends on the worker count.
pub(crate) const IMAGE_CHUNK: usize = 8;

/// Applies `f(chunk_index, chunk)` over consecutive `chunk`-sized pieces of
/// `data`, returning results in chunk order.
pub(crate) fn map_chunks_mut<T, R, F>(data: &mut [T], chunk: usize, f: F) -> alloc::vec::Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut [T]) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect()
    }
}
