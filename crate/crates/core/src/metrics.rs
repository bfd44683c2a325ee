//! Distance functions used by the k-NN classifier.
//!
//! All accumulation happens in `f64` whatever the storage type. Every
//! distance is computed as `prepared_distance(prepare(a), prepare(b))`, and
//! the k-NN classifier uses the same two steps on cached supports, so batched
//! and one-off distances are bit-identical.
//!
//! Degenerate inputs resolve to a neutral distance of 1.0: cosine with a
//! zero vector, correlation with a constant vector.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

/// The four distances evaluated for k-NN detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DistanceMetric {
    Euclidean,
    Manhattan,
    Cosine,
    /// One minus the Pearson correlation coefficient.
    Correlation,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 4] = [
        DistanceMetric::Euclidean,
        DistanceMetric::Correlation,
        DistanceMetric::Manhattan,
        DistanceMetric::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Manhattan => "manhattan",
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::Correlation => "correlation",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownMetric;

impl fmt::Display for UnknownMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown metric (expected euclidean, manhattan, cosine or correlation)")
    }
}

impl FromStr for DistanceMetric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "manhattan" | "cityblock" => Ok(DistanceMetric::Manhattan),
            "cosine" => Ok(DistanceMetric::Cosine),
            "correlation" => Ok(DistanceMetric::Correlation),
            _ => Err(UnknownMetric),
        }
    }
}

/// A vector converted for repeated distance evaluation under one metric.
///
/// For correlation the values are centred on their own mean; for cosine and
/// correlation `norm` holds the Euclidean norm of `values`, or `None` when the
/// vector is degenerate (zero for cosine, constant for correlation).
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    values: Vec<f64>,
    norm: Option<f64>,
}

impl Prepared {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators let the compiler vectorize without
    // reassociating a single sum.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sq_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        for l in 0..4 {
            let d = a[j + l] - b[j + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        let d = a[j] - b[j];
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn abs_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        for l in 0..4 {
            acc[l] += libm::fabs(a[j + l] - b[j + l]);
        }
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += libm::fabs(a[j] - b[j]);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Converts `v` for use with [`prepared_distance`] under `metric`.
pub fn prepare<T: Copy + Into<f64>>(v: &[T], metric: DistanceMetric) -> Prepared {
    let mut values: Vec<f64> = v.iter().map(|&x| x.into()).collect();
    let norm = match metric {
        DistanceMetric::Euclidean | DistanceMetric::Manhattan => None,
        DistanceMetric::Cosine => {
            let n = libm::sqrt(dot(&values, &values));
            (n > 0.0).then_some(n)
        }
        DistanceMetric::Correlation => {
            let constant = values.windows(2).all(|w| w[0] == w[1]);
            let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
            for x in values.iter_mut() {
                *x -= mean;
            }
            let n = libm::sqrt(dot(&values, &values));
            (!constant && n > 0.0).then_some(n)
        }
    };
    Prepared { values, norm }
}

/// Distance between two vectors prepared under the same `metric`.
pub fn prepared_distance(a: &Prepared, b: &Prepared, metric: DistanceMetric) -> f64 {
    debug_assert_eq!(a.values.len(), b.values.len());
    match metric {
        DistanceMetric::Euclidean => libm::sqrt(sq_diff(&a.values, &b.values)),
        DistanceMetric::Manhattan => abs_diff(&a.values, &b.values),
        DistanceMetric::Cosine | DistanceMetric::Correlation => match (a.norm, b.norm) {
            (Some(na), Some(nb)) => {
                let sim = dot(&a.values, &b.values) / (na * nb);
                (1.0 - sim).clamp(0.0, 2.0)
            }
            _ => 1.0,
        },
    }
}

/// Distance between `a` and `b` under `metric`.
///
/// # Panics
/// If the slices differ in length.
pub fn distance<T: Copy + Into<f64>>(a: &[T], b: &[T], metric: DistanceMetric) -> f64 {
    assert_eq!(a.len(), b.len(), "distance operands differ in length");
    prepared_distance(&prepare(a, metric), &prepare(b, metric), metric)
}
