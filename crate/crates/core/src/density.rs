//! Score distributions: min-max normalization, Gaussian KDE and histograms.

use std::fmt::Write as _;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::rng;
use crate::scalar::Scalar;

pub const KDE_POINTS: usize = 256;
pub const HISTOGRAM_BINS: usize = 50;
/// The KDE grid extends this many bandwidths past the data.
const GRID_PAD: f64 = 4.0;

/// Maps the observed minimum to 0 and maximum to 1; a constant input maps to 0.
pub fn min_max_normalize<T: Scalar>(xs: &[T]) -> Vec<T> {
    let lo = xs.iter().copied().fold(T::infinity(), T::min);
    let hi = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    xs.iter()
        .map(|&x| {
            if span > T::zero() {
                (x - lo) / span
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile<T: Scalar>(sorted: &[T], q: f64) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = T::of(pos - i as f64);
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + (sorted[i + 1] - sorted[i]) * frac
    }
}

pub fn median<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    Some(quantile(&v, 0.5))
}

/// Silverman's rule, `0.9 min(σ, IQR/1.34) n^{-1/5}`, floored at 1.5 grid
/// spacings of the data range so the 256-point grid resolves every kernel.
pub fn silverman_bandwidth<T: Scalar>(xs: &[T]) -> T {
    let n = xs.len();
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let nn = T::of(n as f64);
    let mean = v.iter().copied().sum::<T>() / nn;
    let var = if n > 1 {
        v.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / T::of((n - 1) as f64)
    } else {
        T::zero()
    };
    let sd = var.sqrt();
    let iqr = (quantile(&v, 0.75) - quantile(&v, 0.25)) / T::of(1.34);
    let spread = match (sd > T::zero(), iqr > T::zero()) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => T::zero(),
    };
    let h = T::of(0.9) * spread * nn.powf(T::of(-0.2));
    let range = v[n - 1] - v[0];
    let floor = if range > T::zero() {
        T::of(1.5) * range / T::of((KDE_POINTS - 1) as f64)
    } else {
        T::one() / T::of((KDE_POINTS - 1) as f64)
    };
    h.max(floor)
}

pub fn trapezoid<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| (xw[1] - xw[0]) * (yw[0] + yw[1]) * T::of(0.5))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionExport<T> {
    pub raw_scores: Vec<T>,
    pub normalized: Vec<T>,
    pub bandwidth: T,
    pub kde_x: Vec<T>,
    pub kde_y: Vec<T>,
    /// Left edges of the uniform bins over `[0, 1]`.
    pub hist_edges: Vec<T>,
    pub hist_counts: Vec<usize>,
    pub sample_size: usize,
}

impl<T: Scalar> DistributionExport<T> {
    /// Grid point of the highest density.
    pub fn kde_mode(&self) -> T {
        let mut best = 0;
        for i in 1..self.kde_y.len() {
            if self.kde_y[i] > self.kde_y[best] {
                best = i;
            }
        }
        self.kde_x[best]
    }

    pub fn median_normalized(&self) -> T {
        median(&self.normalized).expect("nonempty export")
    }

    /// Long-format CSV with a `kind` column: `meta`, `score`, `kde`, `hist`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,x,y\n");
        let _ = writeln!(s, "meta,sample_size,{}", self.sample_size);
        let _ = writeln!(s, "meta,bandwidth,{}", self.bandwidth);
        for (r, n) in self.raw_scores.iter().zip(&self.normalized) {
            let _ = writeln!(s, "score,{r},{n}");
        }
        for (x, y) in self.kde_x.iter().zip(&self.kde_y) {
            let _ = writeln!(s, "kde,{x},{y}");
        }
        for (e, c) in self.hist_edges.iter().zip(&self.hist_counts) {
            let _ = writeln!(s, "hist,{e},{c}");
        }
        s
    }
}

pub fn distribution<T: Scalar>(raw_scores: &[T]) -> Result<DistributionExport<T>> {
    if raw_scores.is_empty() {
        return Err(Error::NoEdges);
    }
    if raw_scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("scores must be finite".into()));
    }
    let normalized = min_max_normalize(raw_scores);
    let n = normalized.len();
    let h = silverman_bandwidth(&normalized);
    let lo = normalized.iter().copied().fold(T::infinity(), T::min) - T::of(GRID_PAD) * h;
    let hi = normalized.iter().copied().fold(T::neg_infinity(), T::max) + T::of(GRID_PAD) * h;
    let step = (hi - lo) / T::of((KDE_POINTS - 1) as f64);
    let kde_x: Vec<T> = (0..KDE_POINTS)
        .map(|i| lo + step * T::of(i as f64))
        .collect();
    let norm = T::one() / (T::of(n as f64) * h * (T::PI() + T::PI()).sqrt());
    let kde_y = kde_x
        .iter()
        .map(|&x| {
            normalized
                .iter()
                .map(|&s| {
                    let z = (x - s) / h;
                    (-(z * z) * T::of(0.5)).exp()
                })
                .sum::<T>()
                * norm
        })
        .collect();
    let mut hist_counts = vec![0usize; HISTOGRAM_BINS];
    for &v in &normalized {
        let b = (v * T::of(HISTOGRAM_BINS as f64)).floor().to_f64_lossy() as usize;
        hist_counts[b.min(HISTOGRAM_BINS - 1)] += 1;
    }
    let hist_edges = (0..HISTOGRAM_BINS)
        .map(|i| T::of(i as f64 / HISTOGRAM_BINS as f64))
        .collect();
    Ok(DistributionExport {
        raw_scores: raw_scores.to_vec(),
        normalized,
        bandwidth: h,
        kde_x,
        kde_y,
        hist_edges,
        hist_counts,
        sample_size: n,
    })
}

/// Uniform subsample without replacement, returned in edge order; everything
/// when `samples` covers the input.
pub fn subsample<T: Copy>(scores: &[(Edge, T)], samples: usize, seed: u64) -> Vec<(Edge, T)> {
    let mut out: Vec<(Edge, T)> = if samples >= scores.len() {
        scores.to_vec()
    } else {
        index::sample(&mut rng::seeded(seed), scores.len(), samples)
            .into_iter()
            .map(|i| scores[i])
            .collect()
    };
    out.sort_by_key(|a| a.0);
    out
}
