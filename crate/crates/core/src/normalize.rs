//! Descriptor normalization: per-descriptor (axis 1) and per-feature (axis 0)
//! L1/L2 scaling, and quantile-range ROBUST scaling.
//!
//! Statistics for the fitted schemes come from a reference set (the index)
//! and are reused unchanged on any other matrix, so queries and index share
//! one coordinate transform.
//!
//! # Sidecar layout (little-endian)
//!
//! ```text
//! magic b"VITN" | version u32 = 1 | scheme u8 | flags u8 | dim u32
//! | q_low f64 | q_high f64 | stats f64 × (0, D or 2·D)
//! ```
//!
//! `flags` bit 0 selects the as-printed formulas. `dim` is 0 for the
//! stateless schemes. ROBUST stores `(q1, q2)` pairs column by column.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, NormalizationError, Result};
use crate::store::DescriptorMatrix;

/// Denominators with magnitude below this leave the row or column unscaled.
pub const DEGENERATE_EPS: f64 = 1e-12;

pub const SIDECAR_MAGIC: [u8; 4] = *b"VITN";
pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    L1Axis1,
    L2Axis1,
    L1Axis0,
    L2Axis0,
    Robust,
    None,
}

impl Scheme {
    /// Row order of the result tables.
    pub const GRID: [Scheme; 5] = [
        Scheme::L2Axis1,
        Scheme::L2Axis0,
        Scheme::L1Axis1,
        Scheme::L1Axis0,
        Scheme::Robust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::L1Axis1 => "l1-axis1",
            Scheme::L2Axis1 => "l2-axis1",
            Scheme::L1Axis0 => "l1-axis0",
            Scheme::L2Axis0 => "l2-axis0",
            Scheme::Robust => "robust",
            Scheme::None => "none",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::L1Axis1 => "L1 Axis=1",
            Scheme::L2Axis1 => "L2 Axis=1",
            Scheme::L1Axis0 => "L1 Axis=0",
            Scheme::L2Axis0 => "L2 Axis=0",
            Scheme::Robust => "ROBUST",
            Scheme::None => "none",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Scheme::L1Axis1 => 0,
            Scheme::L2Axis1 => 1,
            Scheme::L1Axis0 => 2,
            Scheme::L2Axis0 => 3,
            Scheme::Robust => 4,
            Scheme::None => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        [
            Scheme::L1Axis1,
            Scheme::L2Axis1,
            Scheme::L1Axis0,
            Scheme::L2Axis0,
            Scheme::Robust,
            Scheme::None,
        ]
        .get(tag as usize)
        .copied()
    }

    fn is_fitted(self) -> bool {
        matches!(self, Scheme::L1Axis0 | Scheme::L2Axis0 | Scheme::Robust)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = NormalizationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        Ok(match key.as_str() {
            "l1axis1" => Scheme::L1Axis1,
            "l2axis1" => Scheme::L2Axis1,
            "l1axis0" => Scheme::L1Axis0,
            "l2axis0" => Scheme::L2Axis0,
            "robust" => Scheme::Robust,
            "none" => Scheme::None,
            _ => return Err(NormalizationError::UnknownScheme(s.to_owned())),
        })
    }
}

/// Which denominators the L1/L2 schemes use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NormFormula {
    /// Σ|x| and √(Σx²).
    #[default]
    Standard,
    /// Signed Σx and Σx² without the square root, as typeset in some
    /// references. Kept for A/B comparison only.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationSpec {
    scheme: Scheme,
    q_low: f64,
    q_high: f64,
    formula: NormFormula,
}

impl NormalizationSpec {
    pub const DEFAULT_Q_LOW: f64 = 0.25;
    pub const DEFAULT_Q_HIGH: f64 = 0.75;

    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            q_low: Self::DEFAULT_Q_LOW,
            q_high: Self::DEFAULT_Q_HIGH,
            formula: NormFormula::Standard,
        }
    }

    pub fn with_quantiles(mut self, low: f64, high: f64) -> Result<Self, NormalizationError> {
        if !(low > 0.0 && low < high && high < 1.0) {
            return Err(NormalizationError::BadQuantiles { low, high });
        }
        self.q_low = low;
        self.q_high = high;
        Ok(self)
    }

    pub fn with_formula(mut self, formula: NormFormula) -> Self {
        self.formula = formula;
        self
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn quantiles(&self) -> (f64, f64) {
        (self.q_low, self.q_high)
    }

    pub fn formula(&self) -> NormFormula {
        self.formula
    }
}

/// Fitted per-column state.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnStats {
    None,
    /// One scale per column (axis-0 schemes).
    Scale(Vec<f64>),
    /// `(q1, q2)` per column (ROBUST).
    Quantiles(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedNormalizer {
    spec: NormalizationSpec,
    stats: ColumnStats,
}

/// Output of [`FittedNormalizer::apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub matrix: DescriptorMatrix,
    /// Rows (axis 1) or columns (axis 0, ROBUST) left unscaled because their
    /// denominator was degenerate.
    pub degenerate: usize,
}

/// Linear-interpolated quantile of ascending `sorted` at position q·(n−1).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn l1_denominator(values: impl Iterator<Item = f64>, formula: NormFormula) -> f64 {
    match formula {
        NormFormula::Standard => values.map(f64::abs).sum(),
        NormFormula::AsPrinted => values.sum(),
    }
}

fn l2_denominator(values: impl Iterator<Item = f64>, formula: NormFormula) -> f64 {
    let sq: f64 = values.map(|v| v * v).sum();
    match formula {
        NormFormula::Standard => sq.sqrt(),
        NormFormula::AsPrinted => sq,
    }
}

fn column(matrix: &DescriptorMatrix, col: usize) -> impl Iterator<Item = f64> + '_ {
    matrix.rows().map(move |r| r[col] as f64)
}

impl FittedNormalizer {
    /// Computes whatever statistics `spec` needs from `reference`.
    pub fn fit(spec: NormalizationSpec, reference: &DescriptorMatrix) -> Result<Self, NormalizationError> {
        if spec.scheme.is_fitted() && reference.is_empty() {
            return Err(NormalizationError::EmptyReference {
                scheme: spec.scheme.name(),
            });
        }
        let dim = reference.dim();
        let stats = match spec.scheme {
            Scheme::L1Axis1 | Scheme::L2Axis1 | Scheme::None => ColumnStats::None,
            Scheme::L1Axis0 => ColumnStats::Scale(
                (0..dim)
                    .into_par_iter()
                    .map(|c| l1_denominator(column(reference, c), spec.formula))
                    .collect(),
            ),
            Scheme::L2Axis0 => ColumnStats::Scale(
                (0..dim)
                    .into_par_iter()
                    .map(|c| l2_denominator(column(reference, c), spec.formula))
                    .collect(),
            ),
            Scheme::Robust => ColumnStats::Quantiles(
                (0..dim)
                    .into_par_iter()
                    .map(|c| {
                        let mut col: Vec<f64> = column(reference, c).collect();
                        col.sort_by(f64::total_cmp);
                        (quantile_sorted(&col, spec.q_low), quantile_sorted(&col, spec.q_high))
                    })
                    .collect(),
            ),
        };
        Ok(Self { spec, stats })
    }

    pub fn spec(&self) -> &NormalizationSpec {
        &self.spec
    }

    pub fn stats(&self) -> &ColumnStats {
        &self.stats
    }

    /// Dimension the statistics were fitted on; `None` for stateless schemes.
    pub fn fitted_dim(&self) -> Option<usize> {
        match &self.stats {
            ColumnStats::None => None,
            ColumnStats::Scale(s) => Some(s.len()),
            ColumnStats::Quantiles(q) => Some(q.len()),
        }
    }

    /// Normalizes a copy of `matrix`.
    pub fn apply(&self, matrix: &DescriptorMatrix) -> Result<Normalized, NormalizationError> {
        let dim = matrix.dim();
        if let Some(fitted) = self.fitted_dim() {
            if fitted != dim {
                return Err(NormalizationError::DimensionMismatch { fitted, actual: dim });
            }
        }
        let formula = self.spec.formula;
        let mut out: Vec<f32> = matrix.as_slice().to_vec();
        let degenerate = match (&self.stats, self.spec.scheme) {
            (_, Scheme::None) => 0,
            (ColumnStats::None, scheme) => {
                let l1 = scheme == Scheme::L1Axis1;
                out.par_chunks_exact_mut(dim)
                    .map(|row| {
                        let vals = row.iter().map(|&v| v as f64);
                        let den = if l1 {
                            l1_denominator(vals, formula)
                        } else {
                            l2_denominator(vals, formula)
                        };
                        if den.abs() < DEGENERATE_EPS {
                            return 1;
                        }
                        for v in row.iter_mut() {
                            *v = (*v as f64 / den) as f32;
                        }
                        0
                    })
                    .sum()
            }
            (ColumnStats::Scale(scale), _) => {
                out.par_chunks_exact_mut(dim).for_each(|row| {
                    for (v, &s) in row.iter_mut().zip(scale) {
                        if s.abs() >= DEGENERATE_EPS {
                            *v = (*v as f64 / s) as f32;
                        }
                    }
                });
                scale.iter().filter(|s| s.abs() < DEGENERATE_EPS).count()
            }
            (ColumnStats::Quantiles(qs), _) => {
                out.par_chunks_exact_mut(dim).for_each(|row| {
                    for (v, &(q1, q2)) in row.iter_mut().zip(qs) {
                        let shifted = *v as f64 - q1;
                        let range = q2 - q1;
                        *v = if range.abs() >= DEGENERATE_EPS {
                            (shifted / range) as f32
                        } else {
                            shifted as f32
                        };
                    }
                });
                qs.iter().filter(|(q1, q2)| (q2 - q1).abs() < DEGENERATE_EPS).count()
            }
        };
        if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
            return Err(NormalizationError::NonFiniteOutput {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Normalized {
            matrix: DescriptorMatrix::from_parts_unchecked(out, dim),
            degenerate,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&SIDECAR_MAGIC);
        buf.extend_from_slice(&SIDECAR_VERSION.to_le_bytes());
        buf.push(self.spec.scheme.tag());
        buf.push(u8::from(self.spec.formula == NormFormula::AsPrinted));
        buf.extend_from_slice(&(self.fitted_dim().unwrap_or(0) as u32).to_le_bytes());
        buf.extend_from_slice(&self.spec.q_low.to_le_bytes());
        buf.extend_from_slice(&self.spec.q_high.to_le_bytes());
        match &self.stats {
            ColumnStats::None => {}
            ColumnStats::Scale(s) => s.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
            ColumnStats::Quantiles(q) => q.iter().for_each(|(a, b)| {
                buf.extend_from_slice(&a.to_le_bytes());
                buf.extend_from_slice(&b.to_le_bytes());
            }),
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NormalizationError> {
        let bad = |m: &str| NormalizationError::Sidecar(m.to_owned());
        const FIXED: usize = 4 + 4 + 1 + 1 + 4 + 8 + 8;
        if bytes.len() < FIXED {
            return Err(bad("truncated header"));
        }
        if bytes[..4] != SIDECAR_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != SIDECAR_VERSION {
            return Err(bad("unsupported version"));
        }
        let scheme = Scheme::from_tag(bytes[8]).ok_or_else(|| bad("unknown scheme tag"))?;
        let formula = match bytes[9] {
            0 => NormFormula::Standard,
            1 => NormFormula::AsPrinted,
            _ => return Err(bad("unknown flags")),
        };
        let dim = u32_at(10) as usize;
        let spec = NormalizationSpec::new(scheme)
            .with_quantiles(f64_at(14), f64_at(22))?
            .with_formula(formula);
        let per_col = match scheme {
            Scheme::L1Axis0 | Scheme::L2Axis0 => 1,
            Scheme::Robust => 2,
            _ => 0,
        };
        if per_col == 0 && dim != 0 {
            return Err(bad("stateless scheme with a dimension"));
        }
        if per_col > 0 && dim == 0 {
            return Err(bad("fitted scheme without statistics"));
        }
        let expected = FIXED + dim * per_col * 8;
        if bytes.len() != expected {
            return Err(bad("length does not match the declared dimension"));
        }
        let vals: Vec<f64> = (0..dim * per_col).map(|i| f64_at(FIXED + 8 * i)).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite statistic"));
        }
        let stats = match per_col {
            0 => ColumnStats::None,
            1 => ColumnStats::Scale(vals),
            _ => {
                let pairs: Vec<(f64, f64)> = vals.chunks_exact(2).map(|p| (p[0], p[1])).collect();
                if pairs.iter().any(|(a, b)| b < a) {
                    return Err(bad("q2 below q1"));
                }
                ColumnStats::Quantiles(pairs)
            }
        };
        Ok(Self { spec, stats })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

/// Fits on `reference` and applies to `reference` in one step.
pub fn fit_apply(spec: NormalizationSpec, reference: &DescriptorMatrix) -> Result<Normalized, NormalizationError> {
    FittedNormalizer::fit(spec, reference)?.apply(reference)
}
