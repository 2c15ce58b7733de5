//! Deterministic frame-parallel execution.
//!
//! Every frame's work is a pure function of `(seed, frame index)`, so results
//! are collected in frame order and folded sequentially. Output is therefore
//! byte-identical regardless of thread count, and identical between the
//! rayon path and the sequential fallback (build with
//! `--no-default-features` to drop the rayon dependency entirely).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `frames` through `f`, preserving frame order in the output.
/// Dispatches to rayon when the `parallel` feature is enabled.
pub fn map_frames<T, F>(frames: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_frames_parallel(frames, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_frames_sequential(frames, f)
    }
}

/// Single-threaded reference path; always available for comparison.
pub fn map_frames_sequential<T, F>(frames: std::ops::Range<u64>, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    frames.map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_frames_parallel<T, F>(frames: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    frames.into_par_iter().map(f).collect()
}
