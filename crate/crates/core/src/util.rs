//! Shared helpers: seeded RNG construction and optional data parallelism.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide deterministic RNG.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task; identical (seed, stream)
/// pairs always yield the same sequence.
pub fn rng_stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Maps `f` over items, in parallel when the `parallel` feature is enabled
/// and `DAGVAE_THREADS` does not force single-threaded execution. Output
/// order always matches input order.
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if thread_cap() != 1 {
            return items.into_par_iter().map(f).collect();
        }
    }
    items.into_iter().map(f).collect()
}

/// Worker cap from the DAGVAE_THREADS environment variable (0 or unset means
/// "let the runtime decide").
pub fn thread_cap() -> usize {
    std::env::var("DAGVAE_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

#[cfg(feature = "parallel")]
/// Installs a global rayon pool honoring DAGVAE_THREADS. Safe to call more
/// than once; later calls are no-ops.
pub fn init_thread_pool() {
    let cap = thread_cap();
    if cap > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cap).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
pub fn init_thread_pool() {}
