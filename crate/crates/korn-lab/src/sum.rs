//! Deterministic compensated summation.
//!
//! Every floating-point reduction in this crate goes through these helpers.
//! Items are grouped into fixed-size blocks; each block is accumulated with
//! Neumaier compensation, blocks may be processed in parallel, and the block
//! totals are combined sequentially in block order. The result is therefore
//! bit-identical for any thread count, and accurate to a few ulps even for
//! badly conditioned sums.

use rayon::prelude::*;

/// Items per block. Fixed so the reduction tree never depends on the number
/// of worker threads.
pub const BLOCK: usize = 256;

/// Neumaier variant of Kahan summation: exact for |term| > |sum| too.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Deterministic `sum of f(i) for i in 0..n` where `f` itself may add many
/// terms through the accumulator it is handed.
pub fn block_sum(n: usize, f: impl Fn(usize, &mut Neumaier) + Sync) -> f64 {
    block_sum_array::<1>(n, |i, acc| f(i, &mut acc[0]))[0]
}

/// Fused variant: each item contributes to `K` accumulators at once, so one
/// pass over an expensive index set (e.g. cell pairs) can produce several
/// sums. Returns the per-component totals.
pub fn block_sum_array<const K: usize>(
    n: usize,
    f: impl Fn(usize, &mut [Neumaier; K]) + Sync,
) -> [f64; K] {
    let nblocks = n.div_ceil(BLOCK);
    let block_totals: Vec<[f64; K]> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = [Neumaier::default(); K];
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            for i in lo..hi {
                f(i, &mut acc);
            }
            let mut out = [0.0; K];
            for k in 0..K {
                out[k] = acc[k].total();
            }
            out
        })
        .collect();

    let mut final_acc = [Neumaier::default(); K];
    for t in &block_totals {
        for k in 0..K {
            final_acc[k].add(t[k]);
        }
    }
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = final_acc[k].total();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_term() {
        let mut acc = Neumaier::default();
        acc.add(1e16);
        acc.add(1.0);
        acc.add(-1e16);
        assert_eq!(acc.total(), 1.0);
    }

    #[test]
    fn block_sum_matches_exact_small_case() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let got = block_sum(v.len(), |i, acc| acc.add(v[i]));
        let mut exact = Neumaier::default();
        for &x in &v {
            exact.add(x);
        }
        assert!((got - exact.total()).abs() <= 1e-12 * exact.total().abs().max(1.0));
    }

    #[test]
    fn identical_across_thread_counts() {
        let v: Vec<f64> = (0..100_000)
            .map(|i| ((i as f64) * 0.7).sin() * 1e8 / ((i + 1) as f64))
            .collect();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| block_sum(v.len(), |i, acc| acc.add(v[i])))
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn fused_components_are_independent() {
        let got = block_sum_array::<2>(500, |i, acc| {
            acc[0].add(i as f64);
            acc[1].add(1.0);
        });
        assert_eq!(got[0], (499.0 * 500.0) / 2.0);
        assert_eq!(got[1], 500.0);
    }
}
