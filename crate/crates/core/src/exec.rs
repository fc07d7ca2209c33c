//! Execution strategy for the data-parallel kernels.
//!
//! Every embarrassingly parallel loop in the crate funnels through the two
//! helpers below. With the `parallel` feature enabled they hand work to rayon
//! once the estimated work size crosses a runtime threshold; below it, and
//! always when the feature is off, they run sequentially. Both paths collect
//! results in index order, so the choice never changes output values, only
//! wall time.
//!
//! The threshold is process-global and mutable so benchmarks and tests can pin
//! either path; [`ThresholdGuard`] restores the previous value on drop.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Stateless 64-bit scramble (splitmix finalizer). Work splitting and
/// deterministic seeding both need a cheap way to turn an index into an
/// uncorrelated bit pattern, and sharing one keeps every derived stream
/// reproducible from a single written-down constant.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Work units (item count times an approximate per-item cost) below which
/// spawning threads costs more than it saves on typical desktop hardware.
pub const DEFAULT_PARALLEL_THRESHOLD: usize = 1 << 12;

static PAR_THRESHOLD: AtomicUsize = AtomicUsize::new(DEFAULT_PARALLEL_THRESHOLD);

pub fn parallel_threshold() -> usize {
    PAR_THRESHOLD.load(Ordering::Relaxed)
}

pub fn set_parallel_threshold(work_units: usize) {
    PAR_THRESHOLD.store(work_units, Ordering::Relaxed);
}

/// Pins the parallel threshold for a scope. `force(0)` makes every helper
/// take the rayon path, `force(usize::MAX)` forces sequential execution.
pub struct ThresholdGuard {
    previous: usize,
}

impl ThresholdGuard {
    pub fn force(work_units: usize) -> Self {
        let previous = parallel_threshold();
        set_parallel_threshold(work_units);
        ThresholdGuard { previous }
    }
}

impl Drop for ThresholdGuard {
    fn drop(&mut self) {
        set_parallel_threshold(self.previous);
    }
}

#[cfg(feature = "parallel")]
#[inline]
fn go_parallel(work_units: usize) -> bool {
    work_units >= parallel_threshold()
}

/// Maps `f` over `0..n` and collects results in index order. `item_cost` is a
/// rough per-item work estimate used only for the threshold decision.
pub fn map_indexed<U, F>(n: usize, item_cost: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if go_parallel(n.saturating_mul(item_cost.max(1))) {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = item_cost;
    (0..n).map(f).collect()
}

/// Applies `f` to consecutive disjoint chunks of `data`, passing each chunk's
/// index. Chunks other than the last have exactly `chunk_len` elements.
pub fn for_each_chunk_mut<F>(data: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    assert!(chunk_len > 0, "chunk_len must be positive");
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if go_parallel(data.len()) {
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, chunk)| f(i, chunk));
            return;
        }
    }
    for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
        f(i, chunk);
    }
}
