//! The seven distance functions and their batched form.
//!
//! All metrics return "smaller is closer". Cosine and correlation are
//! reported as `1 − similarity`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::MetricError;
use crate::kernels::{self, Element};
use crate::store::DescriptorMatrix;

/// Denominators below this magnitude are treated as zero.
pub const DEGENERATE_EPS: f64 = 1e-12;
/// Negative results no further below zero than this are rounding noise.
const NEG_CLAMP: f64 = 1e-9;
/// A centered sum of squares this small relative to the raw one means the
/// vector is constant up to rounding.
const CONSTANT_REL: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricId {
    Manhattan,
    Euclidean,
    Cosine,
    BrayCurtis,
    Canberra,
    Chebyshev,
    Correlation,
}

impl MetricId {
    /// Column order of the result tables.
    pub const ALL: [MetricId; 7] = [
        MetricId::Manhattan,
        MetricId::Euclidean,
        MetricId::Cosine,
        MetricId::BrayCurtis,
        MetricId::Canberra,
        MetricId::Chebyshev,
        MetricId::Correlation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricId::Manhattan => "manhattan",
            MetricId::Euclidean => "euclidean",
            MetricId::Cosine => "cosine",
            MetricId::BrayCurtis => "braycurtis",
            MetricId::Canberra => "canberra",
            MetricId::Chebyshev => "chebyshev",
            MetricId::Correlation => "correlation",
        }
    }

    /// Short column header used in grid tables.
    pub fn short_label(self) -> &'static str {
        match self {
            MetricId::Manhattan => "Manh.",
            MetricId::Euclidean => "Eucl.",
            MetricId::Cosine => "Cos",
            MetricId::BrayCurtis => "BC",
            MetricId::Canberra => "Canb.",
            MetricId::Chebyshev => "Cheb.",
            MetricId::Correlation => "Correl.",
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        MetricId::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| MetricError::Unknown(s.to_owned()))
    }
}

/// Per-vector quantities a metric needs regardless of the other operand.
#[derive(Debug, Clone, Copy)]
pub(crate) enum VectorStats {
    None,
    /// Σx²
    Norm {
        sumsq: f64,
    },
    /// Mean and Σ(x − mean)²; `constant` marks zero variance.
    Centered {
        mean: f64,
        centered_sumsq: f64,
        constant: bool,
    },
}

impl VectorStats {
    pub(crate) fn of<T: Element>(metric: MetricId, v: &[T]) -> Self {
        match metric {
            MetricId::Cosine => VectorStats::Norm {
                sumsq: kernels::sumsq(v),
            },
            MetricId::Correlation => {
                let mean = kernels::sum(v) / v.len() as f64;
                let centered_sumsq = kernels::centered_sumsq(v, mean);
                let raw = kernels::sumsq(v);
                VectorStats::Centered {
                    mean,
                    centered_sumsq,
                    constant: centered_sumsq <= CONSTANT_REL * raw || centered_sumsq == 0.0,
                }
            }
            _ => VectorStats::None,
        }
    }
}

fn clamp(d: f64) -> f64 {
    if (-NEG_CLAMP..0.0).contains(&d) {
        0.0
    } else {
        d
    }
}

/// Distance between two vectors whose per-vector stats are already known.
#[inline]
pub(crate) fn combine<T: Element>(
    metric: MetricId,
    p: &[T],
    ps: VectorStats,
    q: &[T],
    qs: VectorStats,
) -> Result<f64, MetricError> {
    let d = match metric {
        MetricId::Manhattan => kernels::manhattan(p, q),
        MetricId::Euclidean => kernels::sq_euclidean(p, q).sqrt(),
        MetricId::Chebyshev => kernels::chebyshev(p, q),
        MetricId::Canberra => kernels::canberra(p, q),
        MetricId::BrayCurtis => {
            let (num, den) = kernels::bray_curtis_parts(p, q);
            if den.abs() < DEGENERATE_EPS {
                return Err(MetricError::DegenerateBrayCurtis(den));
            }
            num / den
        }
        MetricId::Cosine => {
            let (VectorStats::Norm { sumsq: np }, VectorStats::Norm { sumsq: nq }) = (ps, qs) else {
                unreachable!("cosine stats")
            };
            if np == 0.0 || nq == 0.0 {
                return Err(MetricError::ZeroNorm);
            }
            1.0 - kernels::dot(p, q) / (np.sqrt() * nq.sqrt())
        }
        MetricId::Correlation => {
            let (
                VectorStats::Centered {
                    mean: mp,
                    centered_sumsq: cp,
                    constant: kp,
                },
                VectorStats::Centered {
                    mean: mq,
                    centered_sumsq: cq,
                    constant: kq,
                },
            ) = (ps, qs)
            else {
                unreachable!("correlation stats")
            };
            if kp || kq {
                return Err(MetricError::ZeroVariance);
            }
            1.0 - kernels::centered_dot(p, mp, q, mq) / (cp.sqrt() * cq.sqrt())
        }
    };
    Ok(clamp(d))
}

fn check_shapes(p: usize, q: usize) -> Result<(), MetricError> {
    if p != q {
        return Err(MetricError::LengthMismatch(p, q));
    }
    if p == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Distance between `p` and `q` under `metric`.
pub fn distance<T: Element>(metric: MetricId, p: &[T], q: &[T]) -> Result<f64, MetricError> {
    check_shapes(p.len(), q.len())?;
    combine(metric, p, VectorStats::of(metric, p), q, VectorStats::of(metric, q))
}

/// Distances from one query to every row, plus the number of rows that hit a
/// degenerate case and were assigned `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDistances {
    pub values: Vec<f64>,
    pub warnings: usize,
}

/// An index matrix with the per-row statistics of one metric precomputed.
pub struct PreparedIndex<'a> {
    metric: MetricId,
    matrix: &'a DescriptorMatrix,
    stats: Vec<VectorStats>,
}

/// A query vector with its statistics for one metric.
pub struct PreparedQuery<'q> {
    values: &'q [f32],
    stats: VectorStats,
}

impl<'a> PreparedIndex<'a> {
    pub fn new(metric: MetricId, matrix: &'a DescriptorMatrix) -> Self {
        let stats = match metric {
            MetricId::Cosine | MetricId::Correlation => matrix
                .as_slice()
                .par_chunks_exact(matrix.dim())
                .map(|row| VectorStats::of(metric, row))
                .collect(),
            _ => Vec::new(),
        };
        Self { metric, matrix, stats }
    }

    pub fn metric(&self) -> MetricId {
        self.metric
    }

    pub fn matrix(&self) -> &'a DescriptorMatrix {
        self.matrix
    }

    pub fn prepare_query<'q>(&self, query: &'q [f32]) -> Result<PreparedQuery<'q>, MetricError> {
        check_shapes(query.len(), self.matrix.dim())?;
        Ok(PreparedQuery {
            values: query,
            stats: VectorStats::of(self.metric, query),
        })
    }

    /// Distance from a prepared query to one row.
    #[inline]
    pub fn pair(&self, query: &PreparedQuery<'_>, row: usize) -> Result<f64, MetricError> {
        let rs = self.stats.get(row).copied().unwrap_or(VectorStats::None);
        combine(self.metric, query.values, query.stats, self.matrix.row(row), rs)
    }

    /// Like [`pair`](Self::pair) but maps per-row failures to `+inf`.
    #[inline]
    pub fn pair_or_inf(&self, query: &PreparedQuery<'_>, row: usize) -> (f64, bool) {
        match self.pair(query, row) {
            Ok(d) => (d, false),
            Err(_) => (f64::INFINITY, true),
        }
    }

    pub fn distances(&self, query: &[f32]) -> Result<BatchDistances, MetricError> {
        let q = self.prepare_query(query)?;
        let values: Vec<(f64, bool)> = (0..self.matrix.count())
            .into_par_iter()
            .map(|row| self.pair_or_inf(&q, row))
            .collect();
        let warnings = values.iter().filter(|(_, w)| *w).count();
        Ok(BatchDistances {
            values: values.into_iter().map(|(d, _)| d).collect(),
            warnings,
        })
    }
}

/// Distances from `query` to every row of `index`, in row order.
pub fn distance_batch(
    metric: MetricId,
    query: &[f32],
    index: &DescriptorMatrix,
) -> Result<BatchDistances, MetricError> {
    if query.len() != index.dim() {
        return Err(MetricError::LengthMismatch(query.len(), index.dim()));
    }
    PreparedIndex::new(metric, index).distances(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn hand_computed_values() {
        assert_eq!(distance(MetricId::Manhattan, &[0.0f32, 0.0], &[3.0, 4.0]).unwrap(), 7.0);
        assert_eq!(distance(MetricId::Euclidean, &[0.0f32, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(distance(MetricId::Chebyshev, &[1.0f32, 5.0], &[4.0, 1.0]).unwrap(), 4.0);
        assert_eq!(distance(MetricId::Canberra, &[1.0f32, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(
            distance(MetricId::BrayCurtis, &[1.0f32, 2.0], &[3.0, 2.0]).unwrap(),
            0.25
        );
    }

    #[test]
    fn self_distance_of_similarity_metrics() {
        let p = [0.3f32, -1.2, 4.0, 0.01];
        assert!(close(distance(MetricId::Cosine, &p, &p).unwrap(), 0.0, 1e-9));
        let shifted: Vec<f64> = p.iter().map(|&x| 2.5 * x as f64 + 7.0).collect();
        let p64: Vec<f64> = p.iter().map(|&x| x as f64).collect();
        assert!(close(
            distance(MetricId::Correlation, &p64, &shifted).unwrap(),
            0.0,
            1e-9
        ));
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            distance(MetricId::Cosine, &[0.0f32, 0.0], &[1.0, 2.0]),
            Err(MetricError::ZeroNorm)
        );
        assert_eq!(
            distance(MetricId::Correlation, &[0.7f32, 0.7, 0.7], &[1.0, 2.0, 3.0]),
            Err(MetricError::ZeroVariance)
        );
        assert!(matches!(
            distance(MetricId::BrayCurtis, &[1.0f32, -2.0], &[1.0, 0.0]),
            Err(MetricError::DegenerateBrayCurtis(_))
        ));
        assert_eq!(
            distance(MetricId::Manhattan, &[1.0f32], &[1.0, 2.0]),
            Err(MetricError::LengthMismatch(1, 2))
        );
        assert_eq!(distance::<f32>(MetricId::Manhattan, &[], &[]), Err(MetricError::Empty));
    }

    #[test]
    fn bray_curtis_keeps_sign_of_denominator() {
        let d = distance(MetricId::BrayCurtis, &[-1.0f32, -2.0], &[-3.0, -2.0]).unwrap();
        assert_eq!(d, -0.25);
    }

    #[test]
    fn parse_names_case_insensitively() {
        assert_eq!("BrayCurtis".parse::<MetricId>().unwrap(), MetricId::BrayCurtis);
        assert_eq!(" COSINE ".parse::<MetricId>().unwrap(), MetricId::Cosine);
        assert!("hamming".parse::<MetricId>().is_err());
        for m in MetricId::ALL {
            assert_eq!(m.name().parse::<MetricId>().unwrap(), m);
            assert_eq!(MetricId::from_tag(m.tag()), Some(m));
        }
    }

    #[test]
    fn batch_handles_empty_and_degenerate_rows() {
        let empty = DescriptorMatrix::empty(3).unwrap();
        let out = distance_batch(MetricId::Cosine, &[1.0, 2.0, 3.0], &empty).unwrap();
        assert!(out.values.is_empty());

        let m = DescriptorMatrix::from_rows(&[[1.0f32, 2.0, 3.0], [0.0, 0.0, 0.0]]).unwrap();
        let out = distance_batch(MetricId::Cosine, &[1.0, 2.0, 3.0], &m).unwrap();
        assert!(close(out.values[0], 0.0, 1e-9));
        assert_eq!(out.values[1], f64::INFINITY);
        assert_eq!(out.warnings, 1);

        assert_eq!(
            distance_batch(MetricId::Cosine, &[1.0, 2.0], &m),
            Err(MetricError::LengthMismatch(2, 3))
        );
    }

    #[test]
    fn batch_is_bit_identical_to_scalar() {
        let rows: Vec<Vec<f32>> = (0..20)
            .map(|r| (0..33).map(|c| ((r * 31 + c * 17) % 23) as f32 - 11.0).collect())
            .collect();
        let m = DescriptorMatrix::from_rows(&rows).unwrap();
        let q: Vec<f32> = (0..33).map(|c| (c % 7) as f32 - 2.5).collect();
        for metric in MetricId::ALL {
            let out = distance_batch(metric, &q, &m).unwrap();
            for (i, row) in rows.iter().enumerate() {
                match distance(metric, &q, row) {
                    Ok(d) => assert_eq!(out.values[i].to_bits(), d.to_bits(), "{metric} row {i}"),
                    Err(_) => assert_eq!(out.values[i], f64::INFINITY),
                }
            }
        }
    }
}
