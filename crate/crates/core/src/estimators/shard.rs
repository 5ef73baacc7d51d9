//! Shard fan-out and mergeable accumulators.
//!
//! Shard `s` of a run owns `RngStream::new(seed, s)` and a contiguous share
//! of the sample budget. Shard results are merged in shard order, so a run is
//! a pure function of `(seed, shards, samples)` whatever the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Sample counts per shard; the first `samples % shards` shards take one extra.
pub fn shard_sizes(samples: u64, shards: u32) -> Vec<u64> {
    let k = shards as u64;
    (0..k).map(|s| samples / k + u64::from(s < samples % k)).collect()
}

pub(crate) fn check_run(samples: u64, min_samples: u64, shards: u32) -> Result<()> {
    if samples < min_samples {
        return Err(Error::InvalidArgument(format!("need at least {min_samples} samples, got {samples}")));
    }
    if shards == 0 {
        return Err(Error::InvalidArgument("shard count must be at least 1".into()));
    }
    Ok(())
}

/// Runs `work(stream, count)` for every shard and returns the results in
/// shard order.
pub fn run_shards<A, F>(samples: u64, seed: u64, shards: u32, work: F) -> Vec<A>
where
    A: Send,
    F: Fn(RngStream, u64) -> A + Sync,
{
    shard_sizes(samples, shards)
        .into_par_iter()
        .enumerate()
        .map(|(s, count)| work(RngStream::new(seed, s as u64), count))
        .collect()
}

/// Count, mean and centered sum of squares (Welford, Chan merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanVar {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl MeanVar {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance; 0 below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Mean of `exp(l_i)` kept as a shift `max` plus scaled sums, so that terms
/// far below the double range still contribute exactly in ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMean {
    pub count: u64,
    pub shift: f64,
    /// `sum exp(l_i - shift)`
    pub s1: f64,
    /// `sum exp(2 (l_i - shift))`
    pub s2: f64,
}

impl Default for LogMean {
    fn default() -> Self {
        Self { count: 0, shift: f64::NEG_INFINITY, s1: 0.0, s2: 0.0 }
    }
}

impl LogMean {
    #[inline]
    pub fn push(&mut self, l: f64) {
        self.count += 1;
        if l == f64::NEG_INFINITY {
            return;
        }
        if l > self.shift {
            let r = (self.shift - l).exp();
            self.s1 *= r;
            self.s2 *= r * r;
            self.shift = l;
        }
        let e = (l - self.shift).exp();
        self.s1 += e;
        self.s2 += e * e;
    }

    pub fn merge(&mut self, other: &LogMean) {
        self.count += other.count;
        if other.shift == f64::NEG_INFINITY {
            return;
        }
        let shift = self.shift.max(other.shift);
        let (ra, rb) = ((self.shift - shift).exp(), (other.shift - shift).exp());
        self.s1 = self.s1 * ra + other.s1 * rb;
        self.s2 = self.s2 * ra * ra + other.s2 * rb * rb;
        self.shift = shift;
    }

    /// Log of the sample mean; `-inf` when every term was zero.
    pub fn log_mean(&self) -> f64 {
        if self.s1 == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.shift + (self.s1 / self.count as f64).ln()
        }
    }

    /// Standard error of the mean relative to the mean itself, which is the
    /// delta-method standard error of the log mean.
    pub fn relative_stderr(&self) -> f64 {
        if self.s1 == 0.0 || self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        let mean = self.s1 / n;
        let var = ((self.s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
        (var / n).sqrt() / mean
    }

    /// `(sum e)^2 / sum e^2`: the effective number of contributing terms.
    pub fn ess(&self) -> f64 {
        if self.s2 == 0.0 {
            0.0
        } else {
            self.s1 * self.s1 / self.s2
        }
    }

    pub fn mean(&self) -> f64 {
        self.log_mean().exp()
    }

    pub fn stderr(&self) -> f64 {
        if self.s1 == 0.0 {
            return 0.0;
        }
        self.mean() * self.relative_stderr()
    }
}

/// Self-normalized weighted mean `sum w h / sum w` with log weights, plus the
/// sums needed for its delta-method variance
/// `sum w^2 (h - R)^2 / (sum w)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRatio {
    pub count: u64,
    pub shift: f64,
    pub sw: f64,
    pub swh: f64,
    pub sw2: f64,
    pub sw2h: f64,
    pub sw2h2: f64,
}

impl Default for LogRatio {
    fn default() -> Self {
        Self { count: 0, shift: f64::NEG_INFINITY, sw: 0.0, swh: 0.0, sw2: 0.0, sw2h: 0.0, sw2h2: 0.0 }
    }
}

impl LogRatio {
    fn rescale(&mut self, r: f64) {
        self.sw *= r;
        self.swh *= r;
        let r2 = r * r;
        self.sw2 *= r2;
        self.sw2h *= r2;
        self.sw2h2 *= r2;
    }

    #[inline]
    pub fn push(&mut self, log_w: f64, h: f64) {
        self.count += 1;
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.shift {
            self.rescale((self.shift - log_w).exp());
            self.shift = log_w;
        }
        let w = (log_w - self.shift).exp();
        let w2 = w * w;
        self.sw += w;
        self.swh += w * h;
        self.sw2 += w2;
        self.sw2h += w2 * h;
        self.sw2h2 += w2 * h * h;
    }

    pub fn merge(&mut self, other: &LogRatio) {
        self.count += other.count;
        if other.shift == f64::NEG_INFINITY {
            return;
        }
        let shift = self.shift.max(other.shift);
        let mut b = *other;
        b.rescale((other.shift - shift).exp());
        self.rescale((self.shift - shift).exp());
        self.shift = shift;
        self.sw += b.sw;
        self.swh += b.swh;
        self.sw2 += b.sw2;
        self.sw2h += b.sw2h;
        self.sw2h2 += b.sw2h2;
    }

    pub fn ratio(&self) -> f64 {
        self.swh / self.sw
    }

    pub fn stderr(&self) -> f64 {
        let r = self.ratio();
        let num = (self.sw2h2 - 2.0 * r * self.sw2h + r * r * self.sw2).max(0.0);
        num.sqrt() / self.sw
    }

    pub fn ess(&self) -> f64 {
        if self.sw2 == 0.0 {
            0.0
        } else {
            self.sw * self.sw / self.sw2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shard_sizes_cover_budget() {
        assert_eq!(shard_sizes(10, 3), vec![4, 3, 3]);
        assert_eq!(shard_sizes(2, 4), vec![1, 1, 0, 0]);
        assert_eq!(shard_sizes(1_000_000, 8).iter().sum::<u64>(), 1_000_000);
    }

    #[test]
    fn meanvar_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1 - 3.0).collect();
        let mut all = MeanVar::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut parts = MeanVar::default();
        for chunk in xs.chunks(137) {
            let mut p = MeanVar::default();
            chunk.iter().for_each(|&x| p.push(x));
            parts.merge(&p);
        }
        assert_eq!(parts.count, all.count);
        assert!((parts.mean - all.mean).abs() < 1e-12);
        assert!((parts.variance() - all.variance()).abs() < 1e-10);
        let direct = xs.iter().map(|x| (x - all.mean).powi(2)).sum::<f64>() / 999.0;
        assert!((all.variance() - direct).abs() < 1e-10);
    }

    #[test]
    fn logmean_survives_underflow() {
        // terms around exp(-1000) are all zero in linear space
        let ls = [-1000.0, -1001.0, -999.5, f64::NEG_INFINITY];
        let mut a = LogMean::default();
        ls.iter().for_each(|&l| a.push(l));
        let direct = ls.iter().map(|&l| (l + 1000.0f64).exp()).sum::<f64>() / 4.0;
        assert!((a.log_mean() - (direct.ln() - 1000.0)).abs() < 1e-12);
        let mut b = LogMean::default();
        b.push(ls[0]);
        b.push(ls[1]);
        let mut c = LogMean::default();
        c.push(ls[2]);
        c.push(ls[3]);
        b.merge(&c);
        assert!((b.log_mean() - a.log_mean()).abs() < 1e-12);
        assert!((b.ess() - a.ess()).abs() < 1e-12);
    }

    #[test]
    fn logmean_linear_agreement() {
        let xs = [0.2, 0.5, 0.1, 0.7, 0.3];
        let mut a = LogMean::default();
        let mut m = MeanVar::default();
        for &x in &xs {
            a.push(f64::ln(x));
            m.push(x);
        }
        assert!((a.mean() - m.mean).abs() < 1e-14);
        assert!((a.stderr() - m.stderr()).abs() < 1e-14);
    }

    #[test]
    fn ratio_unit_weights_is_mean() {
        let hs = [1.0, 2.0, 4.0, 7.0];
        let mut r = LogRatio::default();
        hs.iter().for_each(|&h| r.push(-700.0, h));
        assert!((r.ratio() - 3.5).abs() < 1e-14);
        // delta-method form with equal weights: sqrt(sum (h - mean)^2) / n
        let ss: f64 = hs.iter().map(|h| (h - 3.5f64).powi(2)).sum();
        assert!((r.stderr() - ss.sqrt() / 4.0).abs() < 1e-14);
        assert!((r.ess() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_merge_is_order_consistent() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (-(i as f64) * 0.37 - 500.0, (i % 7) as f64)).collect();
        let mut all = LogRatio::default();
        pts.iter().for_each(|&(l, h)| all.push(l, h));
        let mut merged = LogRatio::default();
        for chunk in pts.chunks(9).rev() {
            let mut p = LogRatio::default();
            chunk.iter().for_each(|&(l, h)| p.push(l, h));
            merged.merge(&p);
        }
        assert!((merged.ratio() - all.ratio()).abs() < 1e-12);
        assert!((merged.stderr() - all.stderr()).abs() < 1e-12);
    }
}
