use rayon::prelude::*;
use spinlab_core::rng::{StreamRng, StreamSeed};

use crate::CliResult;

/// Draws per chunk; chunk `c` owns the stream `seed.child(c)`, so results
/// do not depend on the number of worker threads.
pub const CHUNK: usize = 10_000;

/// `total` draws split into fixed chunks run in parallel. `init` builds
/// per-chunk state (caches); `draw` receives the global draw index.
pub fn draw<T, S, I, F>(total: usize, seed: StreamSeed, init: I, draw: F) -> CliResult<Vec<T>>
where
    T: Send,
    I: Fn() -> CliResult<S> + Sync,
    F: Fn(&mut S, usize, &mut StreamRng) -> CliResult<T> + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init()?;
            let mut rng = seed.child(c as u64).rng();
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(total);
            (lo..hi).map(|i| draw(&mut state, i, &mut rng)).collect::<CliResult<Vec<T>>>()
        })
        .collect::<CliResult<Vec<Vec<T>>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::ThreadPoolBuilder;
    use spinlab_core::rng::StreamSeed;

    #[test]
    fn independent_of_thread_count() {
        use rand::RngCore;
        let run = |threads| {
            ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| draw(25_000, StreamSeed(9), || Ok(()), |_, i, rng| Ok((i, rng.next_u64()))).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a.len(), 25_000);
        assert!(a.iter().enumerate().all(|(i, x)| x.0 == i));
    }
}
