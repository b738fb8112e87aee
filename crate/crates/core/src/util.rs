//! Small numeric helpers shared by the solvers.

use rayon::prelude::*;

const CHUNK: usize = 8192;

/// Dot product with a fixed chunked summation order, so the result is
/// bit-identical for any thread count.
pub fn det_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| {
            let mut s = 0.0;
            for (x, y) in ca.iter().zip(cb.iter()) {
                s += x * y;
            }
            s
        })
        .collect();
    partials.iter().sum()
}

/// Chunk-ordered sum of `f` over the slice; deterministic like [`det_dot`].
pub fn det_sum_by(a: &[f64], f: impl Fn(f64) -> f64 + Sync) -> f64 {
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .map(|c| {
            let mut s = 0.0;
            for &x in c {
                s += f(x);
            }
            s
        })
        .collect();
    partials.iter().sum()
}

pub fn det_norm2(a: &[f64]) -> f64 {
    det_dot(a, a).sqrt()
}

/// Peak resident-set size of this process in bytes (Linux VmHWM), if readable.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}
