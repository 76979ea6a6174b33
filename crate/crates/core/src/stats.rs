//! Running accumulators for ergodic averages.
//!
//! All sums are compensated (Neumaier). Scalar accumulators also keep a
//! weighted online second moment; merging two accumulators is equivalent
//! to accumulating the concatenated samples.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Weighted running mean of a scalar observable with an online variance.
///
/// Time-weighted averages use the waiting times as weights; per-step
/// averages use unit weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RerAccumulator {
    weighted_sum: KahanSum,
    total_weight: KahanSum,
    count: u64,
    mean: f64,
    m2: f64,
    weight_for_moments: f64,
}

impl RerAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64, weight: f64) -> Result<()> {
        self.push(weight * x, weight, x)
    }

    /// Adds a contribution already multiplied by its weight; the sample
    /// seen by the variance is `weighted / weight`.
    pub fn add_weighted(&mut self, weighted: f64, weight: f64) -> Result<()> {
        self.push(weighted, weight, weighted / weight)
    }

    fn push(&mut self, weighted: f64, weight: f64, x: f64) -> Result<()> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sample weight must be positive and finite, got {weight}"
            )));
        }
        if !x.is_finite() || !weighted.is_finite() {
            return Err(Error::NonFinite {
                what: "accumulated sample".into(),
            });
        }
        self.weighted_sum.add(weighted);
        self.total_weight.add(weight);
        self.count += 1;
        // West (1979) weighted update
        self.weight_for_moments += weight;
        let delta = x - self.mean;
        self.mean += delta * weight / self.weight_for_moments;
        self.m2 += weight * delta * (x - self.mean);
        Ok(())
    }

    pub fn merge(&mut self, other: &RerAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let w = self.weight_for_moments + other.weight_for_moments;
        let delta = other.mean - self.mean;
        self.m2 += other.m2 + delta * delta * self.weight_for_moments * other.weight_for_moments / w;
        self.mean += delta * other.weight_for_moments / w;
        self.weight_for_moments = w;
        self.weighted_sum.merge(&other.weighted_sum);
        self.total_weight.merge(&other.total_weight);
        self.count += other.count;
    }

    pub fn estimate(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::NoData);
        }
        Ok(self.weighted_sum.value() / self.total_weight.value())
    }

    /// Weighted population variance of the samples (not of the mean).
    pub fn variance(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::NoData);
        }
        Ok((self.m2 / self.weight_for_moments).max(0.0))
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight.value()
    }
}

/// Weighted running mean of k×k matrix samples. Only the upper triangle is
/// summed; the emitted matrix mirrors it, so symmetry is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct FimAccumulator {
    k: usize,
    upper: Vec<KahanSum>,
    total_weight: KahanSum,
    count: u64,
}

impl FimAccumulator {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            upper: vec![KahanSum::new(); k * (k + 1) / 2],
            total_weight: KahanSum::new(),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    fn check_weight(weight: f64) -> Result<()> {
        if weight > 0.0 && weight.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "sample weight must be positive and finite, got {weight}"
            )))
        }
    }

    /// Adds `weight · m` for a symmetric sample `m` (upper triangle read).
    pub fn add_matrix(&mut self, m: &DMatrix<f64>, weight: f64) -> Result<()> {
        check_len("FIM sample rows", self.k, m.nrows())?;
        check_len("FIM sample columns", self.k, m.ncols())?;
        Self::check_weight(weight)?;
        let mut idx = 0;
        for i in 0..self.k {
            for j in i..self.k {
                self.upper[idx].add(weight * m[(i, j)]);
                idx += 1;
            }
        }
        self.total_weight.add(weight);
        self.count += 1;
        Ok(())
    }

    /// Adds `weight · v vᵀ`.
    pub fn add_outer(&mut self, v: &[f64], weight: f64) -> Result<()> {
        check_len("FIM gradient", self.k, v.len())?;
        Self::check_weight(weight)?;
        let mut idx = 0;
        for i in 0..self.k {
            for j in i..self.k {
                self.upper[idx].add(weight * v[i] * v[j]);
                idx += 1;
            }
        }
        self.total_weight.add(weight);
        self.count += 1;
        Ok(())
    }

    /// Adds `scale · m` for a sample given as its packed upper triangle
    /// (row-major), with `weight` added to the denominator.
    pub fn add_packed(&mut self, packed: &[f64], scale: f64, weight: f64) -> Result<()> {
        check_len("packed FIM sample", self.upper.len(), packed.len())?;
        Self::check_weight(weight)?;
        if packed.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "FIM sample".into(),
            });
        }
        for (acc, v) in self.upper.iter_mut().zip(packed) {
            acc.add(scale * v);
        }
        self.total_weight.add(weight);
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &FimAccumulator) -> Result<()> {
        check_len("FIM accumulator merge", self.k, other.k)?;
        for (a, b) in self.upper.iter_mut().zip(&other.upper) {
            a.merge(b);
        }
        self.total_weight.merge(&other.total_weight);
        self.count += other.count;
        Ok(())
    }

    pub fn estimate(&self) -> Result<DMatrix<f64>> {
        if self.count == 0 {
            return Err(Error::NoData);
        }
        let w = self.total_weight.value();
        let mut out = DMatrix::zeros(self.k, self.k);
        let mut idx = 0;
        for i in 0..self.k {
            for j in i..self.k {
                let v = self.upper[idx].value() / w;
                out[(i, j)] = v;
                out[(j, i)] = v;
                idx += 1;
            }
        }
        Ok(out)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight.value()
    }
}

/// Streaming non-overlapping batch means.
///
/// Each sample contributes a fixed-width vector of additive sums. Batches
/// start at size one; whenever `2·target` batches are complete, adjacent
/// pairs are merged and the batch size doubles. At any time there are
/// between `target` and `2·target − 1` complete batches once enough data
/// has arrived. The trailing partial batch is excluded from the spread.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMeans {
    width: usize,
    target: usize,
    batch_size: u64,
    batches: Vec<Vec<f64>>,
    current: Vec<f64>,
    in_current: u64,
}

impl BatchMeans {
    pub const DEFAULT_BATCHES: usize = 32;

    pub fn new(width: usize, target: usize) -> Self {
        let target = target.max(2);
        Self {
            width,
            target,
            batch_size: 1,
            batches: Vec::with_capacity(2 * target),
            current: vec![0.0; width],
            in_current: 0,
        }
    }

    pub fn push(&mut self, sums: &[f64]) {
        debug_assert_eq!(sums.len(), self.width);
        for (c, s) in self.current.iter_mut().zip(sums) {
            *c += s;
        }
        self.in_current += 1;
        if self.in_current == self.batch_size {
            let done = std::mem::replace(&mut self.current, vec![0.0; self.width]);
            self.batches.push(done);
            self.in_current = 0;
            if self.batches.len() == 2 * self.target {
                let merged: Vec<Vec<f64>> = self
                    .batches
                    .chunks(2)
                    .map(|pair| pair[0].iter().zip(&pair[1]).map(|(a, b)| a + b).collect())
                    .collect();
                self.batches = merged;
                self.batch_size *= 2;
            }
        }
    }

    /// Standard error of Σnum/Σden by the delta method over batch sums,
    /// so batches with more weight count for more.
    pub fn ratio_std_error(&self, num: usize, den: usize) -> Option<f64> {
        let b = self.batches.len();
        if b < self.target {
            return None;
        }
        let total_num: f64 = self.batches.iter().map(|s| s[num]).sum();
        let total_den: f64 = self.batches.iter().map(|s| s[den]).sum();
        let ratio = total_num / total_den;
        let mean_den = total_den / b as f64;
        let ss: f64 = self
            .batches
            .iter()
            .map(|s| ((s[num] - ratio * s[den]) / mean_den).powi(2))
            .sum();
        Some((ss / (b * (b - 1)) as f64).sqrt())
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    /// Standard error of `f(total sums)` estimated from the spread of
    /// `f(batch sums)`. `None` with fewer than `target` complete batches.
    pub fn std_error(&self, f: impl Fn(&[f64]) -> f64) -> Option<f64> {
        let b = self.batches.len();
        if b < self.target {
            return None;
        }
        let values: Vec<f64> = self.batches.iter().map(|s| f(s)).collect();
        let mean = values.iter().sum::<f64>() / b as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        Some((var / b as f64).sqrt())
    }
}

/// Geometrically spaced checkpoints of a running estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub points: Vec<TracePoint>,
    #[serde(skip)]
    next: u64,
    #[serde(skip)]
    factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Samples consumed so far.
    pub samples: u64,
    /// Simulated time (or step count for chains).
    pub horizon: f64,
    pub estimate: f64,
}

impl ConvergenceTrace {
    /// `per_decade` checkpoints per factor of ten in sample count.
    pub fn new(per_decade: u32) -> Self {
        let per_decade = per_decade.max(1);
        Self {
            points: Vec::new(),
            next: 1,
            factor: 10f64.powf(1.0 / per_decade as f64),
        }
    }

    pub fn due(&self, samples: u64) -> bool {
        samples >= self.next
    }

    pub fn record(&mut self, samples: u64, horizon: f64, estimate: f64) {
        self.points.push(TracePoint {
            samples,
            horizon,
            estimate,
        });
        let mut next = self.next;
        while next <= samples {
            next = ((next as f64 * self.factor).ceil() as u64).max(next + 1);
        }
        self.next = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_mean() {
        let mut acc = RerAccumulator::new();
        acc.add(2.0, 1.0).unwrap();
        acc.add(4.0, 1.0).unwrap();
        assert_eq!(acc.estimate().unwrap(), 3.0);
    }

    #[test]
    fn weighted_mean() {
        let mut acc = RerAccumulator::new();
        acc.add(0.0, 1.0).unwrap();
        acc.add(4.0, 3.0).unwrap();
        assert_eq!(acc.estimate().unwrap(), 3.0);
    }

    #[test]
    fn empty_is_no_data() {
        let acc = RerAccumulator::new();
        assert_eq!(acc.estimate(), Err(Error::NoData));
        assert_eq!(FimAccumulator::new(2).estimate(), Err(Error::NoData));
    }

    #[test]
    fn rejects_bad_weight() {
        let mut acc = RerAccumulator::new();
        assert!(acc.add(1.0, 0.0).is_err());
        assert!(acc.add(1.0, -1.0).is_err());
    }

    #[test]
    fn fim_dimension_mismatch() {
        let mut acc = FimAccumulator::new(2);
        assert!(matches!(
            acc.add_outer(&[1.0, 2.0, 3.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(acc.add_matrix(&DMatrix::zeros(3, 3), 1.0).is_err());
    }

    #[test]
    fn fim_repeated_outer_is_rank_one() {
        let mut acc = FimAccumulator::new(2);
        for _ in 0..5 {
            acc.add_outer(&[1.0, 2.0], 1.0).unwrap();
        }
        let m = acc.estimate().unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
    }

    #[test]
    fn kahan_beats_naive() {
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..10_000_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-9)).abs() < 1e-15);
    }

    #[test]
    fn variance_matches_two_pass() {
        let xs = [1.0, 3.0, 2.0, 7.0, -1.0];
        let ws = [1.0, 0.5, 2.0, 1.5, 0.25];
        let mut acc = RerAccumulator::new();
        for (x, w) in xs.iter().zip(&ws) {
            acc.add(*x, *w).unwrap();
        }
        let wsum: f64 = ws.iter().sum();
        let mean = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
        let var = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| w * (x - mean).powi(2))
            .sum::<f64>()
            / wsum;
        assert!((acc.variance().unwrap() - var).abs() < 1e-12);
    }

    #[test]
    fn batch_means_iid_error() {
        // iid uniform samples: SE of the mean should be ≈ sqrt(1/12 / n)
        let mut rng = crate::rng::RngStream::new(1, 0);
        let n = 1 << 16;
        let mut bm = BatchMeans::new(2, 32);
        for _ in 0..n {
            bm.push(&[rng.uniform(), 1.0]);
        }
        assert!(bm.batch_count() >= 32 && bm.batch_count() < 64);
        let se = bm.std_error(|s| s[0] / s[1]).unwrap();
        let expected = (1.0 / 12.0 / n as f64).sqrt();
        assert!((se / expected - 1.0).abs() < 0.4, "se {se} vs {expected}");
    }

    #[test]
    fn ratio_error_accounts_for_unequal_weights() {
        // x_i / w_i constant: the ratio has no spread even though batch
        // weights differ
        let mut rng = crate::rng::RngStream::new(2, 0);
        let mut bm = BatchMeans::new(2, 8);
        for _ in 0..1000 {
            let w = rng.uniform_range(0.1, 10.0);
            bm.push(&[3.0 * w, w]);
        }
        assert!(bm.ratio_std_error(0, 1).unwrap() < 1e-12);
    }

    #[test]
    fn trace_is_geometric() {
        let mut t = ConvergenceTrace::new(2);
        for n in 1..=1000u64 {
            if t.due(n) {
                t.record(n, n as f64, 0.0);
            }
        }
        let ns: Vec<u64> = t.points.iter().map(|p| p.samples).collect();
        assert_eq!(ns.first(), Some(&1));
        assert!(ns.len() >= 6 && ns.len() <= 9, "{ns:?}");
    }

    proptest! {
        #[test]
        fn merge_equals_concatenation(
            a in prop::collection::vec((-1e3f64..1e3, 1e-3f64..10.0), 1..50),
            b in prop::collection::vec((-1e3f64..1e3, 1e-3f64..10.0), 1..50),
        ) {
            let mut left = RerAccumulator::new();
            let mut right = RerAccumulator::new();
            let mut all = RerAccumulator::new();
            for &(x, w) in &a { left.add(x, w).unwrap(); all.add(x, w).unwrap(); }
            for &(x, w) in &b { right.add(x, w).unwrap(); all.add(x, w).unwrap(); }
            left.merge(&right);
            let e1 = left.estimate().unwrap();
            let e2 = all.estimate().unwrap();
            prop_assert!((e1 - e2).abs() <= 1e-12 * e2.abs().max(1.0));
            let v1 = left.variance().unwrap();
            let v2 = all.variance().unwrap();
            prop_assert!((v1 - v2).abs() <= 1e-9 * v2.abs().max(1.0));
            prop_assert!(v1 >= 0.0);
        }

        #[test]
        fn fim_merge_and_symmetry(
            a in prop::collection::vec((prop::array::uniform3(-5f64..5.0), 1e-3f64..5.0), 1..30),
            b in prop::collection::vec((prop::array::uniform3(-5f64..5.0), 1e-3f64..5.0), 1..30),
        ) {
            let mut left = FimAccumulator::new(3);
            let mut right = FimAccumulator::new(3);
            let mut all = FimAccumulator::new(3);
            for (v, w) in &a { left.add_outer(v, *w).unwrap(); all.add_outer(v, *w).unwrap(); }
            for (v, w) in &b { right.add_outer(v, *w).unwrap(); all.add_outer(v, *w).unwrap(); }
            left.merge(&right).unwrap();
            let m1 = left.estimate().unwrap();
            let m2 = all.estimate().unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((m1[(i, j)] - m2[(i, j)]).abs() <= 1e-12 * m2.abs().max().max(1.0));
                    prop_assert_eq!(m1[(i, j)], m1[(j, i)]);
                }
            }
            let eig = m1.clone().symmetric_eigen();
            let trace = m1.trace();
            prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10 * trace));
        }
    }
}
