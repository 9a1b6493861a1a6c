//! Deterministic reductions and small numeric helpers.
//!
//! All ensemble statistics in this crate go through the block-structured sums
//! below, so results are independent of thread count and scheduling.

/// Compensated (Kahan) accumulator.
#[derive(Clone, Copy, Default, Debug)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = Kahan::default();
    for x in xs {
        acc.add(x);
    }
    acc.total()
}

/// Fixed block size shared by every deterministic reduction.
pub const REDUCTION_BLOCK: usize = 256;

/// Sum with a fixed block structure: depends only on values and order.
pub fn block_sum(xs: &[f64]) -> f64 {
    let mut outer = Kahan::default();
    for chunk in xs.chunks(REDUCTION_BLOCK) {
        outer.add(kahan_sum(chunk.iter().copied()));
    }
    outer.total()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    block_sum(xs) / xs.len() as f64
}

/// Sample mean and standard error. A single sample has standard error zero.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let m = mean(xs);
    if n == 1 {
        return (m, 0.0);
    }
    let mut dev = Kahan::default();
    for chunk in xs.chunks(REDUCTION_BLOCK) {
        dev.add(kahan_sum(chunk.iter().map(|&x| (x - m) * (x - m))));
    }
    let var = dev.total() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Least-squares slope of ln(y) against ln(x). Requires positive data.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let lx: Vec<f64> = xs.iter().map(|&x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| y.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let mut num = Kahan::default();
    let mut den = Kahan::default();
    for i in 0..lx.len() {
        num.add((lx[i] - mx) * (ly[i] - my));
        den.add((lx[i] - mx) * (lx[i] - mx));
    }
    num.total() / den.total()
}

/// Map fixed-size path blocks in parallel, then combine the per-block partial
/// results in index order. `map` sees (block index, path range); the combine
/// runs sequentially, so the outcome is schedule-independent.
pub fn par_blocks<T, M>(n: usize, block: usize, map: M) -> Vec<T>
where
    T: Send,
    M: Fn(usize, std::ops::Range<usize>) -> T + Sync,
{
    use rayon::prelude::*;
    let n_blocks = n.div_ceil(block);
    (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * block;
            let hi = (lo + block).min(n);
            map(b, lo..hi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut xs = vec![1e16];
        xs.extend(std::iter::repeat(1.0).take(1000));
        xs.push(-1e16);
        assert_eq!(block_sum(&xs), 1000.0);
    }

    #[test]
    fn mean_stderr_constant_samples() {
        let xs = vec![2.5; 400];
        let (m, se) = mean_stderr(&xs);
        assert_eq!(m, 2.5);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn loglog_slope_exact_power_law() {
        let xs = [1.0, 0.5, 0.25, 0.125];
        let ys: Vec<f64> = xs.iter().map(|&x: &f64| 3.0 * x.powf(1.5)).collect();
        let s = loglog_slope(&xs, &ys);
        assert!((s - 1.5).abs() < 1e-12, "slope {s}");
    }

    #[test]
    fn par_blocks_matches_serial() {
        let n = 1000;
        let parts = par_blocks(n, REDUCTION_BLOCK, |_, range| {
            kahan_sum(range.map(|i| (i as f64).sin()))
        });
        let total = kahan_sum(parts.into_iter());
        let serial = block_sum(&(0..n).map(|i| (i as f64).sin()).collect::<Vec<_>>());
        assert_eq!(total, serial);
    }
}
