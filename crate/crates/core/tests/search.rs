use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vitriever::search::Exclusions;
use vitriever::{batch_search, top_k, Depth, DescriptorMatrix, DescriptorSet, MetricId};

fn random_set(seed: u64, n: usize, d: usize, prefix: &str) -> DescriptorSet {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let m = DescriptorMatrix::new((0..n * d).map(|_| r.gen_range(-1.0f32..1.0)).collect(), d).unwrap();
    let ids: Vec<String> = (0..n).map(|i| format!("{prefix}{i}")).collect();
    DescriptorSet::new(m, &ids).unwrap()
}

fn flatten(lists: &[vitriever::RankedList]) -> Vec<(String, usize, u64)> {
    lists
        .iter()
        .flat_map(|l| {
            l.entries
                .iter()
                .map(|e| (l.query_id.to_string(), e.row, e.distance.to_bits()))
        })
        .collect()
}

#[test]
fn oxford_sized_batch_matches_single_queries() {
    let index = random_set(1, 5062, 768, "img");
    let queries = index.select(&(0..55).map(|i| i * 92).collect::<Vec<_>>());
    for metric in [MetricId::Cosine, MetricId::Euclidean, MetricId::Canberra] {
        let batch = batch_search(&queries, &index, metric, Depth::Full, &HashMap::new()).unwrap();
        assert_eq!(batch.len(), 55);
        for (q, list) in batch.iter().enumerate() {
            let single = top_k(
                queries.matrix().row(q),
                &queries.ids()[q],
                &index,
                metric,
                Depth::Full,
                &HashSet::new(),
            )
            .unwrap();
            assert_eq!(
                flatten(std::slice::from_ref(list)),
                flatten(&[single]),
                "{metric} query {q}"
            );
            // A query that is itself indexed ranks itself first at distance ~0.
            assert_eq!(list.entries[0].row, q * 92);
            assert!(list.entries[0].distance.abs() <= 1e-12);
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let index = random_set(2, 700, 24, "i");
    let queries = random_set(3, 45, 24, "q");
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            flatten(&batch_search(&queries, &index, MetricId::Correlation, Depth::Top(30), &HashMap::new()).unwrap())
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn shallower_rankings_are_prefixes() {
    let index = random_set(4, 400, 16, "i");
    let queries = random_set(5, 20, 16, "q");
    for metric in MetricId::ALL {
        let full = batch_search(&queries, &index, metric, Depth::Full, &HashMap::new()).unwrap();
        for k in [1, 4, 50, 399, 400, 1000] {
            let top = batch_search(&queries, &index, metric, Depth::Top(k), &HashMap::new()).unwrap();
            for (a, b) in top.iter().zip(&full) {
                assert_eq!(a.entries.len(), k.min(400));
                assert_eq!(a.entries[..], b.entries[..a.entries.len()], "{metric} k={k}");
                assert!(a.entries.windows(2).all(|w| w[0].distance <= w[1].distance));
            }
        }
    }
}

#[test]
fn exclusions_remove_only_listed_ids() {
    let index = random_set(6, 50, 8, "i");
    let queries = index.select(&[0, 1]);
    let mut excl: Exclusions = HashMap::new();
    excl.insert("i0".into(), HashSet::from(["i0".to_string(), "i7".to_string()]));
    let out = batch_search(&queries, &index, MetricId::Manhattan, Depth::Full, &excl).unwrap();
    assert_eq!(out[0].entries.len(), 48);
    assert!(out[0].ids().all(|id| id != "i0" && id != "i7"));
    assert_eq!(out[1].entries.len(), 50);
}

#[test]
fn degenerate_rows_rank_last_with_warnings() {
    let mut rows = vec![vec![1.0f32, 2.0, 3.0]; 4];
    rows[1] = vec![0.0; 3];
    rows[2] = vec![5.0, 1.0, 0.5];
    let index = DescriptorSet::new(DescriptorMatrix::from_rows(&rows).unwrap(), &["a", "zero", "b", "c"]).unwrap();
    let list = top_k(
        &[1.0, 1.0, 1.0],
        "q",
        &index,
        MetricId::Cosine,
        Depth::Full,
        &HashSet::new(),
    )
    .unwrap();
    assert_eq!(list.warnings, 1);
    let last = list.entries.last().unwrap();
    assert_eq!(&*last.id, "zero");
    assert!(last.distance.is_infinite());
}

#[test]
fn trec_output() {
    let index = DescriptorSet::new(
        DescriptorMatrix::from_rows(&[[0.0f32], [3.0], [1.0]]).unwrap(),
        &["x", "y", "z"],
    )
    .unwrap();
    let list = top_k(
        &[0.0],
        "q1",
        &index,
        MetricId::Euclidean,
        Depth::Top(2),
        &HashSet::new(),
    )
    .unwrap();
    let mut out = Vec::new();
    list.write_trec(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0][..3], ["q1", "1", "x"]);
    assert_eq!(lines[1][..3], ["q1", "2", "z"]);
    assert_eq!(lines[1][3].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let index = random_set(7, 5, 4, "i");
    assert!(top_k(&[1.0, 2.0], "q", &index, MetricId::Cosine, Depth::Full, &HashSet::new()).is_err());
}
