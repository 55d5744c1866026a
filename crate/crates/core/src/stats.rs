//! Batch-mean error bars and jackknife propagation for correlated chains.

use thiserror::Error;

/// No error bar is reported from fewer batches than this.
pub const MIN_BATCHES: usize = 8;

#[derive(Debug, Error, PartialEq, Clone)]
pub enum BatchError {
    #[error("{got} batches requested or filled; at least {MIN_BATCHES} are needed")]
    TooFewBatches { got: usize },
    #[error("{samples} samples cannot fill {batches} batches")]
    TooFewSamples { samples: usize, batches: usize },
    #[error("sample has {got} components, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Streaming accumulator splitting a known-length sequence into contiguous
/// batches of (almost) equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchAccumulator {
    dim: usize,
    expected: usize,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
    seen: usize,
}

impl BatchAccumulator {
    pub fn new(dim: usize, n_batches: usize, expected: usize) -> Result<Self, BatchError> {
        if n_batches < MIN_BATCHES {
            return Err(BatchError::TooFewBatches { got: n_batches });
        }
        if expected < n_batches {
            return Err(BatchError::TooFewSamples {
                samples: expected,
                batches: n_batches,
            });
        }
        Ok(Self {
            dim,
            expected,
            sums: vec![vec![0.0; dim]; n_batches],
            counts: vec![0; n_batches],
            seen: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_batches(&self) -> usize {
        self.counts.len()
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    pub fn push(&mut self, values: &[f64]) -> Result<(), BatchError> {
        if values.len() != self.dim {
            return Err(BatchError::Dimension {
                expected: self.dim,
                got: values.len(),
            });
        }
        let b = (self.seen.min(self.expected - 1) * self.counts.len()) / self.expected;
        for (s, v) in self.sums[b].iter_mut().zip(values) {
            *s += v;
        }
        self.counts[b] += 1;
        self.seen += 1;
        Ok(())
    }

    /// Means of the non-empty batches.
    pub fn batch_means(&self) -> Result<Vec<Vec<f64>>, BatchError> {
        let out: Vec<Vec<f64>> = self
            .sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s.iter().map(|x| x / c as f64).collect())
            .collect();
        if out.len() < MIN_BATCHES {
            return Err(BatchError::TooFewBatches { got: out.len() });
        }
        Ok(out)
    }

    /// Overall mean (every sample weighted equally).
    pub fn mean(&self) -> Vec<f64> {
        let total: usize = self.counts.iter().sum();
        let mut m = vec![0.0; self.dim];
        for s in &self.sums {
            for (a, b) in m.iter_mut().zip(s) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|x| *x /= total.max(1) as f64);
        m
    }

    /// Batch-mean standard error of the mean.
    pub fn stderr(&self) -> Result<Vec<f64>, BatchError> {
        Ok(stderr_of(&self.batch_means()?))
    }

    /// Combines two accumulators over the same batch layout (batch by batch).
    pub fn merge(&mut self, other: &Self) -> Result<(), BatchError> {
        if other.dim != self.dim || other.counts.len() != self.counts.len() {
            return Err(BatchError::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.seen += other.seen;
        self.expected += other.expected;
        Ok(())
    }
}

fn mean_of(batches: &[Vec<f64>]) -> Vec<f64> {
    let b = batches.len() as f64;
    let mut m = vec![0.0; batches[0].len()];
    for row in batches {
        for (a, x) in m.iter_mut().zip(row) {
            *a += x / b;
        }
    }
    m
}

fn stderr_of(batches: &[Vec<f64>]) -> Vec<f64> {
    let b = batches.len() as f64;
    let m = mean_of(batches);
    let mut v = vec![0.0; m.len()];
    for row in batches {
        for ((acc, x), mu) in v.iter_mut().zip(row).zip(&m) {
            *acc += (x - mu) * (x - mu);
        }
    }
    v.into_iter().map(|s| (s / (b * (b - 1.0))).sqrt()).collect()
}

/// Mean and batch-mean standard error of a sequence of vector samples.
pub fn batch_means(samples: &[Vec<f64>], n_batches: usize) -> Result<(Vec<f64>, Vec<f64>), BatchError> {
    let dim = samples.first().map_or(0, |s| s.len());
    let mut acc = BatchAccumulator::new(dim, n_batches, samples.len())?;
    for s in samples {
        acc.push(s)?;
    }
    Ok((acc.mean(), acc.stderr()?))
}

/// Delete-one-batch jackknife of a smooth function of batch means.
/// Returns `f(mean)` and the jackknife standard error.
pub fn jackknife(
    batches: &[Vec<f64>],
    f: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, Vec<f64>), BatchError> {
    let b = batches.len();
    if b < MIN_BATCHES {
        return Err(BatchError::TooFewBatches { got: b });
    }
    let full = mean_of(batches);
    let center = f(&full);
    let bf = b as f64;
    let leave_out: Vec<Vec<f64>> = batches
        .iter()
        .map(|row| {
            let x: Vec<f64> = full
                .iter()
                .zip(row)
                .map(|(m, r)| (bf * m - r) / (bf - 1.0))
                .collect();
            f(&x)
        })
        .collect();
    let avg = mean_of(&leave_out);
    let mut var = vec![0.0; center.len()];
    for row in &leave_out {
        for ((v, x), a) in var.iter_mut().zip(row).zip(&avg) {
            *v += (x - a) * (x - a);
        }
    }
    let se = var.into_iter().map(|v| ((bf - 1.0) / bf * v).sqrt()).collect();
    Ok((center, se))
}

/// Least-squares line `y = a + b x`; returns `(intercept, slope, se_intercept, se_slope)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (se_i, se_s) = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let s2 = rss / (nf - 2.0);
        ((s2 * (1.0 / nf + mx * mx / sxx)).sqrt(), (s2 / sxx).sqrt())
    } else {
        (0.0, 0.0)
    };
    Some((intercept, slope, se_i, se_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn refuses_few_batches() {
        assert_eq!(
            BatchAccumulator::new(1, 4, 100),
            Err(BatchError::TooFewBatches { got: 4 })
        );
        let s: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        assert!(batch_means(&s, 8).is_err());
    }

    #[test]
    fn batch_means_of_alternating_series() {
        let s: Vec<Vec<f64>> = (0..160).map(|i| vec![(i % 2) as f64]).collect();
        let (m, se) = batch_means(&s, 16).unwrap();
        assert_relative_eq!(m[0], 0.5);
        // every batch has the same mean
        assert!(se[0] < 1e-15);
    }

    #[test]
    fn stderr_of_independent_batches() {
        // batch means 0..16 exactly
        let s: Vec<Vec<f64>> = (0..16).flat_map(|b| (0..10).map(move |_| vec![b as f64])).collect();
        let (m, se) = batch_means(&s, 16).unwrap();
        assert_relative_eq!(m[0], 7.5);
        let var: f64 = (0..16).map(|b| (b as f64 - 7.5).powi(2)).sum::<f64>() / 15.0;
        assert_relative_eq!(se[0], (var / 16.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn jackknife_of_linear_function_matches_batch_means() {
        let batches: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let (c, se) = jackknife(&batches, |x| vec![2.0 * x[0] + x[1]]).unwrap();
        let direct: Vec<Vec<f64>> = batches.iter().map(|b| vec![2.0 * b[0] + b[1]]).collect();
        let m = mean_of(&direct);
        assert_relative_eq!(c[0], m[0], max_relative = 1e-12);
        assert_relative_eq!(se[0], stderr_of(&direct)[0], max_relative = 1e-10);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 + 2.0 * v).collect();
        let (a, b, _, sb) = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(a, 1.5, epsilon = 1e-12);
        assert_relative_eq!(b, 2.0, epsilon = 1e-12);
        assert!(sb < 1e-10);
    }
}
