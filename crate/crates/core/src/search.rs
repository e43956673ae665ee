//! Exhaustive top-k retrieval.
//!
//! Ties are broken by ascending index row, so rankings are reproducible for
//! any thread count.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::SearchError;
use crate::metrics::{MetricId, PreparedIndex, PreparedQuery};
use crate::store::DescriptorSet;

/// Queries scored together against each index row, so the row is read once
/// per block instead of once per query.
const QUERY_BLOCK: usize = 32;

/// Requested ranking depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Depth {
    Top(usize),
    Full,
}

impl Depth {
    pub fn top(k: usize) -> Result<Self, SearchError> {
        if k == 0 {
            Err(SearchError::ZeroK)
        } else {
            Ok(Depth::Top(k))
        }
    }

    fn limit(self, eligible: usize) -> usize {
        match self {
            Depth::Top(k) => k.min(eligible),
            Depth::Full => eligible,
        }
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Depth::Top(k) => write!(f, "{k}"),
            Depth::Full => f.write_str("full"),
        }
    }
}

impl FromStr for Depth {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(Depth::Full);
        }
        match s.parse::<usize>() {
            Ok(k) => Depth::top(k),
            Err(_) => Err(SearchError::BadDepth(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub id: Arc<str>,
    pub row: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: Arc<str>,
    pub depth: Depth,
    pub entries: Vec<RankedEntry>,
    /// Rows whose distance could not be computed and were ranked last.
    pub warnings: usize,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| &*e.id)
    }

    /// Writes `<query_id> <rank> <id> <distance>` lines, ranks starting at 1.
    pub fn write_trec(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (rank, e) in self.entries.iter().enumerate() {
            writeln!(out, "{} {} {} {}", self.query_id, rank + 1, e.id, e.distance)?;
        }
        Ok(())
    }
}

/// Heap key ordered by (distance, row); the heap top is the worst survivor.
#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    distance: f64,
    row: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.row.cmp(&other.row))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded selection of the `k` smallest candidates. When every candidate
/// survives, they are collected and sorted once instead of heaped.
struct Selector {
    k: usize,
    keep_all: bool,
    heap: BinaryHeap<Candidate>,
    all: Vec<Candidate>,
    warnings: usize,
}

impl Selector {
    fn new(k: usize, candidates: usize) -> Self {
        let keep_all = k >= candidates;
        Self {
            k,
            keep_all,
            heap: BinaryHeap::with_capacity(if keep_all { 0 } else { k.min(1 << 16) + 1 }),
            all: Vec::with_capacity(if keep_all { candidates } else { 0 }),
            warnings: 0,
        }
    }

    #[inline]
    fn offer(&mut self, c: Candidate) {
        if self.keep_all {
            self.all.push(c);
        } else if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(mut top) = self.heap.peek_mut() {
            if c < *top {
                *top = c;
            }
        }
    }

    fn finish(self) -> (Vec<Candidate>, usize) {
        if self.keep_all {
            let mut all = self.all;
            // rows are unique, so the order is total
            all.sort_unstable();
            (all, self.warnings)
        } else {
            (self.heap.into_sorted_vec(), self.warnings)
        }
    }
}

/// Per-query exclusions keyed by query id.
pub type Exclusions = HashMap<String, HashSet<String>>;

struct QueryJob<'q> {
    prepared: PreparedQuery<'q>,
    excluded: HashSet<usize>,
    selector: Selector,
}

fn excluded_rows(index: &DescriptorSet, exclude: Option<&HashSet<String>>) -> HashSet<usize> {
    exclude
        .into_iter()
        .flatten()
        .filter_map(|id| index.row_of(id))
        .collect()
}

fn finish_job(index: &DescriptorSet, query_id: Arc<str>, depth: Depth, job: QueryJob<'_>) -> RankedList {
    let (survivors, warnings) = job.selector.finish();
    RankedList {
        query_id,
        depth,
        entries: survivors
            .into_iter()
            .map(|c| RankedEntry {
                id: index.id(c.row).clone(),
                row: c.row,
                distance: c.distance,
            })
            .collect(),
        warnings,
    }
}

/// Scores one block of queries against every index row.
fn run_block(prepared: &PreparedIndex<'_>, jobs: &mut [QueryJob<'_>]) {
    let n = prepared.matrix().count();
    for row in 0..n {
        for job in jobs.iter_mut() {
            if !job.excluded.is_empty() && job.excluded.contains(&row) {
                continue;
            }
            let (distance, failed) = prepared.pair_or_inf(&job.prepared, row);
            job.selector.warnings += failed as usize;
            job.selector.offer(Candidate { distance, row });
        }
    }
}

fn new_job<'q>(
    prepared: &PreparedIndex<'_>,
    index: &DescriptorSet,
    query: &'q [f32],
    depth: Depth,
    exclude: Option<&HashSet<String>>,
) -> Result<QueryJob<'q>, SearchError> {
    let pq = prepared
        .prepare_query(query)
        .map_err(|_| SearchError::DimensionMismatch {
            query: query.len(),
            index: index.dim(),
        })?;
    let excluded = excluded_rows(index, exclude);
    let candidates = index.len() - excluded.len();
    let k = depth.limit(candidates);
    Ok(QueryJob {
        prepared: pq,
        excluded,
        selector: Selector::new(k, candidates),
    })
}

fn check_dims(query: usize, index: usize) -> Result<(), SearchError> {
    if query != index {
        Err(SearchError::DimensionMismatch { query, index })
    } else {
        Ok(())
    }
}

/// The `depth` closest index entries to `query`, skipping `exclude`.
pub fn top_k(
    query: &[f32],
    query_id: &str,
    index: &DescriptorSet,
    metric: MetricId,
    depth: Depth,
    exclude: &HashSet<String>,
) -> Result<RankedList, SearchError> {
    check_dims(query.len(), index.dim())?;
    let prepared = PreparedIndex::new(metric, index.matrix());
    let mut job = [new_job(&prepared, index, query, depth, Some(exclude))?];
    run_block(&prepared, &mut job);
    let [job] = job;
    Ok(finish_job(index, Arc::from(query_id), depth, job))
}

/// Runs [`top_k`] for every query row; output follows query order.
pub fn batch_search(
    queries: &DescriptorSet,
    index: &DescriptorSet,
    metric: MetricId,
    depth: Depth,
    exclusions: &Exclusions,
) -> Result<Vec<RankedList>, SearchError> {
    check_dims(queries.dim(), index.dim())?;
    let prepared = PreparedIndex::new(metric, index.matrix());
    let blocks: Vec<Vec<usize>> = (0..queries.len())
        .collect::<Vec<_>>()
        .chunks(QUERY_BLOCK)
        .map(<[usize]>::to_vec)
        .collect();
    let results: Vec<Vec<RankedList>> = blocks
        .into_par_iter()
        .map(|block| {
            let mut jobs = block
                .iter()
                .map(|&q| {
                    let exclude = exclusions.get(&*queries.ids()[q]);
                    new_job(&prepared, index, queries.matrix().row(q), depth, exclude)
                })
                .collect::<Result<Vec<_>, _>>()?;
            run_block(&prepared, &mut jobs);
            Ok(block
                .iter()
                .zip(jobs)
                .map(|(&q, job)| finish_job(index, queries.id(q).clone(), depth, job))
                .collect())
        })
        .collect::<Result<_, SearchError>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// Dumps rankings in the TREC-style text format.
pub fn write_rankings(rankings: &[RankedList], out: &mut impl Write) -> std::io::Result<()> {
    for r in rankings {
        r.write_trec(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::DescriptorMatrix;

    fn set(rows: &[&[f32]]) -> DescriptorSet {
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("r{i}")).collect();
        DescriptorSet::new(DescriptorMatrix::from_rows(rows).unwrap(), &ids).unwrap()
    }

    #[test]
    fn self_match_and_exclusion() {
        let idx = set(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.1], &[-1.0, 0.0]]);
        let q = idx.matrix().row(2).to_vec();
        let r = top_k(&q, "q", &idx, MetricId::Cosine, Depth::Top(1), &HashSet::new()).unwrap();
        assert_eq!(&*r.entries[0].id, "r2");
        assert!(r.entries[0].distance.abs() < 1e-9);

        let ex: HashSet<String> = ["r2".to_string()].into();
        let r = top_k(&q, "q", &idx, MetricId::Cosine, Depth::Top(1), &ex).unwrap();
        assert_eq!(&*r.entries[0].id, "r0");
    }

    #[test]
    fn ties_follow_row_order() {
        let idx = set(&[&[1.0], &[3.0], &[1.0], &[3.0], &[2.0]]);
        let r = top_k(&[2.0], "q", &idx, MetricId::Manhattan, Depth::Full, &HashSet::new()).unwrap();
        let rows: Vec<usize> = r.entries.iter().map(|e| e.row).collect();
        assert_eq!(rows, vec![4, 0, 1, 2, 3]);
    }

    #[test]
    fn depth_larger_than_eligible() {
        let idx = set(&[&[1.0], &[2.0]]);
        let ex: HashSet<String> = ["r0".to_string(), "nope".to_string()].into();
        let r = top_k(&[0.0], "q", &idx, MetricId::Euclidean, Depth::Top(10), &ex).unwrap();
        assert_eq!(r.entries.len(), 1);
    }

    #[test]
    fn degenerate_rows_rank_last() {
        let idx = set(&[&[0.0, 0.0], &[1.0, 1.0], &[1.0, -1.0]]);
        let r = top_k(&[1.0, 0.5], "q", &idx, MetricId::Cosine, Depth::Full, &HashSet::new()).unwrap();
        assert_eq!(r.entries.last().unwrap().row, 0);
        assert_eq!(r.entries.last().unwrap().distance, f64::INFINITY);
        assert_eq!(r.warnings, 1);
    }

    #[test]
    fn dimension_mismatch() {
        let idx = set(&[&[1.0, 2.0]]);
        assert_eq!(
            top_k(&[1.0], "q", &idx, MetricId::Cosine, Depth::Full, &HashSet::new()).unwrap_err(),
            SearchError::DimensionMismatch { query: 1, index: 2 }
        );
        let qs = set(&[&[1.0]]);
        assert!(batch_search(&qs, &idx, MetricId::Cosine, Depth::Full, &Exclusions::new()).is_err());
    }

    #[test]
    fn batch_with_self_exclusions_and_empty_queries() {
        let idx = set(&[&[1.0, 0.0], &[0.9, 0.1], &[0.0, 1.0], &[0.1, 0.9]]);
        let ex: Exclusions = idx
            .ids()
            .iter()
            .map(|id| (id.to_string(), [id.to_string()].into()))
            .collect();
        let out = batch_search(&idx, &idx, MetricId::Cosine, Depth::Top(1), &ex).unwrap();
        assert_eq!(out.len(), 4);
        for r in &out {
            assert_ne!(r.query_id, r.entries[0].id);
        }
        let none = idx.select(&[]);
        assert!(batch_search(&none, &idx, MetricId::Cosine, Depth::Top(1), &ex)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn depth_parsing() {
        assert_eq!("full".parse::<Depth>().unwrap(), Depth::Full);
        assert_eq!("FULL".parse::<Depth>().unwrap(), Depth::Full);
        assert_eq!("7".parse::<Depth>().unwrap(), Depth::Top(7));
        assert_eq!("0".parse::<Depth>().unwrap_err(), SearchError::ZeroK);
        assert!("-1".parse::<Depth>().is_err());
    }

    #[test]
    fn trec_dump() {
        let idx = set(&[&[1.0], &[3.0]]);
        let r = top_k(&[2.5], "q9", &idx, MetricId::Manhattan, Depth::Full, &HashSet::new()).unwrap();
        let mut buf = Vec::new();
        r.write_trec(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "q9 1 r1 0.5\nq9 2 r0 1.5\n");
    }
}
