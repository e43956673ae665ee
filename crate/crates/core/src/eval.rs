//! Retrieval scoring: mean Average Precision and the UKBench N-S score.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::search::RankedList;

/// Depth at which the N-S score is counted.
pub const NS_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Map,
    Ns,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Map => "mAP",
            Protocol::Ns => "N-S",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTruth {
    pub query: String,
    pub positives: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub junk: BTreeSet<String>,
    #[serde(default)]
    pub exclude_self: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub protocol: Protocol,
    pub queries: Vec<QueryTruth>,
}

impl GroundTruth {
    /// Checks the structural invariants every parser must establish.
    pub fn validate(&self) -> Result<(), EvalError> {
        let mut seen = HashSet::new();
        for q in &self.queries {
            if !seen.insert(q.query.as_str()) {
                return Err(EvalError::DuplicateQuery(q.query.clone()));
            }
            if q.positives.is_empty() {
                return Err(EvalError::EmptyPositives(q.query.clone()));
            }
            if self.protocol == Protocol::Ns && !q.junk.is_empty() {
                return Err(EvalError::JunkUnderNs(q.query.clone()));
            }
            if let Some(id) = q.positives.intersection(&q.junk).next() {
                return Err(EvalError::PositiveIsJunk {
                    query: q.query.clone(),
                    id: id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Fails if a query or positive is missing from `known`.
    pub fn check_ids<'a>(&self, known: impl Fn(&str) -> bool + 'a) -> Result<(), EvalError> {
        for q in &self.queries {
            for id in std::iter::once(&q.query).chain(&q.positives) {
                if !known(id) {
                    return Err(EvalError::UnknownId {
                        query: q.query.clone(),
                        id: id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    /// mAP on the 0–100 scale, or mean N-S in [0, 4].
    pub aggregate: f64,
    pub per_query: Vec<(String, f64)>,
}

impl EvalReport {
    /// `<query_id> <score>` lines followed by `AGGREGATE <value>`.
    pub fn write_machine(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (q, s) in &self.per_query {
            writeln!(out, "{q} {s}")?;
        }
        writeln!(out, "AGGREGATE {}", self.aggregate)
    }

    pub fn write_table(&self, out: &mut impl Write) -> std::io::Result<()> {
        let width = self
            .per_query
            .iter()
            .map(|(q, _)| q.chars().count())
            .max()
            .unwrap_or(0)
            .max(9);
        writeln!(out, "{:<width$}  {}", "query", self.protocol)?;
        writeln!(out, "{}", "-".repeat(width + 10))?;
        for (q, s) in &self.per_query {
            match self.protocol {
                Protocol::Map => writeln!(out, "{q:<width$}  {:>8.4}", s * 100.0)?,
                Protocol::Ns => writeln!(out, "{q:<width$}  {s:>8}")?,
            }
        }
        writeln!(out, "{}", "-".repeat(width + 10))?;
        match self.protocol {
            Protocol::Map => writeln!(out, "{:<width$}  {:>8.2}", "mean", self.aggregate),
            Protocol::Ns => writeln!(out, "{:<width$}  {:>8.3}", "mean", self.aggregate),
        }
    }
}

/// Non-interpolated average precision after deleting junk entries.
///
/// Positives that never appear in `ranked` contribute zero.
pub fn average_precision(
    ranked: &RankedList,
    positives: &BTreeSet<String>,
    junk: &BTreeSet<String>,
) -> Result<f64, EvalError> {
    if positives.is_empty() {
        return Err(EvalError::EmptyPositives(ranked.query_id.to_string()));
    }
    let mut rank = 0usize;
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for id in ranked.ids() {
        if junk.contains(id) {
            continue;
        }
        rank += 1;
        if positives.contains(id) {
            hits += 1;
            sum += hits as f64 / rank as f64;
        }
    }
    Ok(sum / positives.len() as f64)
}

fn index_rankings(rankings: &[RankedList]) -> Result<HashMap<&str, &RankedList>, EvalError> {
    let mut by_query = HashMap::with_capacity(rankings.len());
    for r in rankings {
        if by_query.insert(&*r.query_id, r).is_some() {
            return Err(EvalError::DuplicateRanking(r.query_id.to_string()));
        }
    }
    Ok(by_query)
}

fn expect_protocol(gt: &GroundTruth, expected: Protocol) -> Result<(), EvalError> {
    if gt.protocol != expected {
        return Err(EvalError::WrongProtocol {
            expected: expected.name(),
            actual: gt.protocol.name(),
        });
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0f64, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn mean_average_precision(rankings: &[RankedList], gt: &GroundTruth) -> Result<EvalReport, EvalError> {
    expect_protocol(gt, Protocol::Map)?;
    let by_query = index_rankings(rankings)?;
    let per_query = gt
        .queries
        .iter()
        .map(|q| {
            let r = by_query
                .get(q.query.as_str())
                .ok_or_else(|| EvalError::MissingRanking(q.query.clone()))?;
            Ok((q.query.clone(), average_precision(r, &q.positives, &q.junk)?))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport {
        protocol: Protocol::Map,
        aggregate: 100.0 * mean(per_query.iter().map(|(_, ap)| *ap)),
        per_query,
    })
}

/// Number of positives among the first four entries of each ranking.
pub fn ns_score(rankings: &[RankedList], gt: &GroundTruth) -> Result<EvalReport, EvalError> {
    expect_protocol(gt, Protocol::Ns)?;
    let by_query = index_rankings(rankings)?;
    let per_query = gt
        .queries
        .iter()
        .map(|q| {
            let r = by_query
                .get(q.query.as_str())
                .ok_or_else(|| EvalError::MissingRanking(q.query.clone()))?;
            if r.entries.len() < NS_DEPTH {
                return Err(EvalError::ShallowRanking {
                    query: q.query.clone(),
                    depth: r.entries.len(),
                });
            }
            let hits = r.ids().take(NS_DEPTH).filter(|id| q.positives.contains(*id)).count();
            Ok((q.query.clone(), hits as f64))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport {
        protocol: Protocol::Ns,
        aggregate: mean(per_query.iter().map(|(_, s)| *s)),
        per_query,
    })
}

/// Dispatches on the ground truth's protocol.
pub fn score(rankings: &[RankedList], gt: &GroundTruth) -> Result<EvalReport, EvalError> {
    match gt.protocol {
        Protocol::Map => mean_average_precision(rankings, gt),
        Protocol::Ns => ns_score(rankings, gt),
    }
}
