use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use vitriever_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(vit_last_error()).to_string_lossy().into_owned() }
}

/// Three groups of four near-identical rows, UKBench-style ids.
unsafe fn ukbench_store() -> *mut VitStore {
    let mut values = Vec::new();
    for g in 0..3 {
        for m in 0..4 {
            values.extend((0..5).map(|d| 1.0 + ((g * 3 + d * 2) % 7) as f32 + 0.001 * m as f32));
        }
    }
    let ids: Vec<CString> = (0..12).map(|i| cstr(&format!("ukbench{i:05}.jpg"))).collect();
    let id_ptrs: Vec<*const std::os::raw::c_char> = ids.iter().map(|s| s.as_ptr()).collect();
    let mut store = ptr::null_mut();
    assert_eq!(
        vit_store_new(values.as_ptr(), 12, 5, id_ptrs.as_ptr(), &mut store),
        VitStatus::Ok
    );
    store
}

#[test]
fn store_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().join("s.vitd").to_str().unwrap());
    unsafe {
        let store = ukbench_store();
        assert_eq!(vit_store_count(store), 12);
        assert_eq!(vit_store_dim(store), 5);
        assert_eq!(vit_store_write(store, path.as_ptr()), VitStatus::Ok);

        let mut back = ptr::null_mut();
        assert_eq!(vit_store_open(path.as_ptr(), &mut back), VitStatus::Ok);
        let a = std::slice::from_raw_parts(vit_store_row(store, 7), 5);
        let b = std::slice::from_raw_parts(vit_store_row(back, 7), 5);
        assert_eq!(a, b);
        assert!(vit_store_row(back, 12).is_null());

        let mut buf = [0 as std::os::raw::c_char; 8];
        let mut len = 0usize;
        assert_eq!(
            vit_store_id(back, 3, buf.as_mut_ptr(), buf.len(), &mut len),
            VitStatus::Ok
        );
        assert_eq!(len, "ukbench00003.jpg".len());
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "ukbench");
        assert_eq!(
            vit_store_id(back, 99, ptr::null_mut(), 0, ptr::null_mut()),
            VitStatus::InvalidArgument
        );

        vit_store_free(store);
        vit_store_free(back);
    }
}

#[test]
fn errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.vitd");
    std::fs::write(&bad, b"VITD\x01\x00").unwrap();
    let bad = cstr(bad.to_str().unwrap());
    let missing = cstr("/nonexistent/x.vitd");
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(vit_store_open(bad.as_ptr(), &mut s), VitStatus::Format);
        assert!(last_error().contains("truncated"), "{}", last_error());
        assert_eq!(vit_store_open(missing.as_ptr(), &mut s), VitStatus::Io);
        assert_eq!(vit_store_open(ptr::null(), &mut s), VitStatus::NullPointer);
        assert!(s.is_null());

        let p = [0.0f32, 0.0];
        let q = [1.0f32, 2.0];
        let mut d = 0.0;
        assert_eq!(
            vit_distance(VitMetric::Cosine, p.as_ptr(), q.as_ptr(), 2, &mut d),
            VitStatus::Metric
        );
        assert_eq!(
            vit_distance(VitMetric::Cosine, p.as_ptr(), q.as_ptr(), 0, &mut d),
            VitStatus::Metric
        );

        // Freeing NULL is a no-op.
        vit_store_free(ptr::null_mut());
        vit_results_free(ptr::null_mut());
        vit_normalizer_free(ptr::null_mut());
    }
}

#[test]
fn distances_match_the_library() {
    let p = [1.0f32, -2.0, 3.5, 0.25];
    let q = [0.5f32, 4.0, -1.0, 2.0];
    for (metric, id) in [
        (VitMetric::Manhattan, vitriever::MetricId::Manhattan),
        (VitMetric::Euclidean, vitriever::MetricId::Euclidean),
        (VitMetric::Cosine, vitriever::MetricId::Cosine),
        (VitMetric::BrayCurtis, vitriever::MetricId::BrayCurtis),
        (VitMetric::Canberra, vitriever::MetricId::Canberra),
        (VitMetric::Chebyshev, vitriever::MetricId::Chebyshev),
        (VitMetric::Correlation, vitriever::MetricId::Correlation),
    ] {
        let mut d = f64::NAN;
        let status = unsafe { vit_distance(metric, p.as_ptr(), q.as_ptr(), 4, &mut d) };
        assert_eq!(status, VitStatus::Ok);
        assert_eq!(d.to_bits(), vitriever::distance(id, &p, &q).unwrap().to_bits());
    }
}

#[test]
fn batch_search_and_normalize() {
    unsafe {
        let store = ukbench_store();
        let mut norm = ptr::null_mut();
        assert_eq!(
            vit_normalizer_fit(VitScheme::Robust, 0.25, 0.75, store, &mut norm),
            VitStatus::Ok
        );
        let mut normalized = ptr::null_mut();
        let mut degenerate = usize::MAX;
        assert_eq!(
            vit_normalizer_apply(norm, store, &mut normalized, &mut degenerate),
            VitStatus::Ok
        );
        assert_eq!(degenerate, 0);

        let mut dists = vec![0.0f64; 12];
        let mut warnings = 9;
        let q = vit_store_row(normalized, 0);
        assert_eq!(
            vit_distance_batch(
                VitMetric::Euclidean,
                q,
                5,
                normalized,
                dists.as_mut_ptr(),
                &mut warnings
            ),
            VitStatus::Ok
        );
        assert_eq!((dists[0], warnings), (0.0, 0));

        let mut results = ptr::null_mut();
        assert_eq!(
            vit_search(normalized, normalized, VitMetric::Euclidean, 3, true, &mut results),
            VitStatus::Ok
        );
        assert_eq!(vit_results_count(results), 12);
        for query in 0..12 {
            assert_eq!(vit_results_len(results, query), 3);
            let mut prev = f64::NEG_INFINITY;
            for rank in 0..3 {
                let (mut row, mut d) = (usize::MAX, f64::NAN);
                assert_eq!(vit_results_entry(results, query, rank, &mut row, &mut d), VitStatus::Ok);
                assert_ne!(row, query);
                assert_eq!(row / 4, query / 4, "query {query} rank {rank}");
                assert!(d >= prev);
                prev = d;
                assert_eq!(d, dists_between(normalized, query, row));
            }
        }
        assert_eq!(
            vit_results_entry(results, 0, 3, ptr::null_mut(), ptr::null_mut()),
            VitStatus::InvalidArgument
        );

        let mut full = ptr::null_mut();
        assert_eq!(
            vit_search(store, store, VitMetric::Cosine, 0, false, &mut full),
            VitStatus::Ok
        );
        assert_eq!(vit_results_len(full, 5), 12);

        vit_results_free(results);
        vit_results_free(full);
        vit_store_free(normalized);
        vit_normalizer_free(norm);
        vit_store_free(store);
    }
}

unsafe fn dists_between(store: *const VitStore, a: usize, b: usize) -> f64 {
    let mut d = 0.0;
    let p = vit_store_row(store, a);
    let q = vit_store_row(store, b);
    assert_eq!(vit_distance(VitMetric::Euclidean, p, q, 5, &mut d), VitStatus::Ok);
    d
}

#[test]
fn normalizer_sidecar_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let sidecar = cstr(dir.path().join("n.vitn").to_str().unwrap());
    let store_path = cstr(dir.path().join("s.vitd").to_str().unwrap());
    unsafe {
        let store = ukbench_store();
        assert_eq!(vit_store_write(store, store_path.as_ptr()), VitStatus::Ok);
        let mut norm = ptr::null_mut();
        assert_eq!(
            vit_normalizer_fit(VitScheme::L2Axis0, 0.25, 0.75, store, &mut norm),
            VitStatus::Ok
        );
        assert_eq!(vit_normalizer_save(norm, sidecar.as_ptr()), VitStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(vit_normalizer_load(sidecar.as_ptr(), &mut loaded), VitStatus::Ok);
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            vit_normalizer_apply(norm, store, &mut a, ptr::null_mut()),
            VitStatus::Ok
        );
        assert_eq!(
            vit_normalizer_apply(loaded, store, &mut b, ptr::null_mut()),
            VitStatus::Ok
        );
        for row in 0..12 {
            let ra = std::slice::from_raw_parts(vit_store_row(a, row), 5);
            let rb = std::slice::from_raw_parts(vit_store_row(b, row), 5);
            assert_eq!(ra, rb);
        }

        let mut bad = ptr::null_mut();
        assert_eq!(
            vit_normalizer_fit(VitScheme::Robust, 0.8, 0.2, store, &mut bad),
            VitStatus::Normalization
        );

        let mut score = 0.0;
        let status = vit_evaluate(
            store_path.as_ptr(),
            ptr::null(),
            VitLayout::Ukbench,
            ptr::null(),
            VitMetric::Cosine,
            VitScheme::Robust,
            0.25,
            0.75,
            0,
            &mut score,
        );
        assert_eq!(status, VitStatus::Ok, "{}", last_error());
        assert_eq!(score, 4.0);

        let status = vit_evaluate(
            store_path.as_ptr(),
            ptr::null(),
            VitLayout::Oxford,
            ptr::null(),
            VitMetric::Cosine,
            VitScheme::None,
            0.25,
            0.75,
            0,
            &mut score,
        );
        assert_ne!(status, VitStatus::Ok);

        for p in [a, b, store] {
            vit_store_free(p);
        }
        vit_normalizer_free(norm);
        vit_normalizer_free(loaded);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(vit_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vitriever.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "vit_store_open",
        "vit_search",
        "vit_evaluate",
        "VIT_STATUS_OK",
        "VitStore",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler available; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
