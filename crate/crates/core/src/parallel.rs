//! Deterministic data parallelism for independent field lanes.
//!
//! Tasks are mapped with scoped threads and gathered back in task order, so
//! results are bit-identical for every width. The width is capped globally
//! (the CLI wires HYMFLOW_THREADS here); small workloads run inline.

use std::sync::atomic::{AtomicUsize, Ordering};

static WIDTH: AtomicUsize = AtomicUsize::new(0); // 0 = hardware default

pub fn set_parallel_width(width: usize) {
    WIDTH.store(width.max(1), Ordering::Relaxed);
}

pub fn parallel_width() -> usize {
    match WIDTH.load(Ordering::Relaxed) {
        0 => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
        w => w,
    }
}

/// Map `f` over 0..count, preserving index order in the output.
pub fn map_tasks<R, F>(count: usize, min_parallel: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    let width = parallel_width().min(count.max(1));
    if width <= 1 || count < min_parallel {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(width);
    let mut out: Vec<Option<R>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, slot_chunk) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            handles.push(scope.spawn(move || {
                let base = w * chunk;
                for (i, slot) in slot_chunk.iter_mut().enumerate() {
                    *slot = Some(f(base + i));
                }
            }));
        }
        for h in handles {
            h.join().expect("lane worker panicked");
        }
    });
    out.into_iter().map(|v| v.expect("task slot filled")).collect()
}
