//! C ABI over the vitriever engine.
//!
//! # Conventions
//!
//! * Every fallible function returns a [`VitStatus`]; `VIT_STATUS_OK` is 0.
//! * On failure a message is stored per thread and can be read with
//!   [`vit_last_error`]. It stays valid until the next failing call on the
//!   same thread.
//! * Objects are opaque handles created by `*_open` / `*_new` / `*_fit`
//!   functions and released with the matching `*_free`. Passing NULL to a
//!   `*_free` function is a no-op.
//! * Pointer arguments must be valid for the duration of the call; string
//!   arguments are NUL-terminated UTF-8.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::HashSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vitriever::cli::{CellConfig, Experiment};
use vitriever::datasets::DatasetLayout;
use vitriever::error::{Error, NormalizationError};
use vitriever::search::{Depth, Exclusions};
use vitriever::{DescriptorMatrix, DescriptorSet, FittedNormalizer, MetricId, NormalizationSpec, RankedList, Scheme};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    Metric = 6,
    Normalization = 7,
    Eval = 8,
    Dataset = 9,
    Panic = 10,
}

/// Distance functions, in result-table column order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VitMetric {
    Manhattan = 0,
    Euclidean = 1,
    Cosine = 2,
    BrayCurtis = 3,
    Canberra = 4,
    Chebyshev = 5,
    Correlation = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VitScheme {
    L1Axis1 = 0,
    L2Axis1 = 1,
    L1Axis0 = 2,
    L2Axis0 = 3,
    Robust = 4,
    None = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VitLayout {
    Oxford = 0,
    Paris = 1,
    Holidays = 2,
    Ukbench = 3,
    Json = 4,
}

/// Descriptor set with row ids.
pub struct VitStore(DescriptorSet);

/// Fitted normalization state.
pub struct VitNormalizer(FittedNormalizer);

/// Rankings for a batch of queries.
pub struct VitResults(Vec<RankedList>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: VitStatus, msg: impl Into<String>) -> VitStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> VitStatus {
    match err {
        Error::Io { .. } => VitStatus::Io,
        Error::Store(_) => VitStatus::Format,
        Error::Normalization(NormalizationError::DimensionMismatch { .. }) | Error::Search(_) => {
            VitStatus::DimensionMismatch
        }
        Error::Normalization(_) => VitStatus::Normalization,
        Error::Metric(_) => VitStatus::Metric,
        Error::Eval(_) => VitStatus::Eval,
        Error::Dataset(_) => VitStatus::Dataset,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), VitStatus>) -> VitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VitStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(VitStatus::Panic, "internal panic"),
    }
}

fn check<T>(r: Result<T, impl Into<Error>>) -> Result<T, VitStatus> {
    r.map_err(|e| {
        let e = e.into();
        fail(status_of(&e), e.to_string())
    })
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, VitStatus> {
    if p.is_null() {
        return Err(fail(VitStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VitStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, VitStatus> {
    p.as_ref()
        .ok_or_else(|| fail(VitStatus::NullPointer, format!("{what} is NULL")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), VitStatus> {
    if p.is_null() {
        Err(fail(VitStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

fn metric_of(m: VitMetric) -> MetricId {
    MetricId::from_tag(m as u8).expect("enum values mirror MetricId")
}

fn scheme_of(s: VitScheme) -> Scheme {
    Scheme::from_tag(s as u8).expect("enum values mirror Scheme")
}

fn layout_of(l: VitLayout) -> DatasetLayout {
    match l {
        VitLayout::Oxford => DatasetLayout::Oxford,
        VitLayout::Paris => DatasetLayout::Paris,
        VitLayout::Holidays => DatasetLayout::Holidays,
        VitLayout::Ukbench => DatasetLayout::UkBench,
        VitLayout::Json => DatasetLayout::GenericJson,
    }
}

fn depth_of(k: usize) -> Depth {
    if k == 0 {
        Depth::Full
    } else {
        Depth::Top(k)
    }
}

/// Message of the last failure on this thread, or NULL.
#[no_mangle]
pub extern "C" fn vit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens a binary descriptor store.
#[no_mangle]
pub unsafe extern "C" fn vit_store_open(path: *const c_char, out: *mut *mut VitStore) -> VitStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_arg(out, "out")?;
        let set = check(DescriptorSet::open(path))?;
        *out = Box::into_raw(Box::new(VitStore(set)));
        Ok(())
    })
}

/// Builds a store from `count × dim` row-major values and `count` ids.
#[no_mangle]
pub unsafe extern "C" fn vit_store_new(
    values: *const f32,
    count: usize,
    dim: usize,
    ids: *const *const c_char,
    out: *mut *mut VitStore,
) -> VitStatus {
    guard(|| {
        out_arg(out, "out")?;
        if count > 0 && (values.is_null() || ids.is_null()) {
            return Err(fail(VitStatus::NullPointer, "values or ids is NULL"));
        }
        let data = if count == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(values, count * dim).to_vec()
        };
        let id_strings = (0..count)
            .map(|i| str_arg(*ids.add(i), "id").map(str::to_owned))
            .collect::<Result<Vec<_>, _>>()?;
        let matrix = check(DescriptorMatrix::new(data, dim))?;
        let set = check(DescriptorSet::new(matrix, &id_strings))?;
        *out = Box::into_raw(Box::new(VitStore(set)));
        Ok(())
    })
}

/// Writes a store in the binary format.
#[no_mangle]
pub unsafe extern "C" fn vit_store_write(store: *const VitStore, path: *const c_char) -> VitStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        let path = str_arg(path, "path")?;
        let ids: Vec<&str> = store.0.ids().iter().map(|s| &**s).collect();
        check(vitriever::write_store(store.0.matrix(), &ids, path))
    })
}

#[no_mangle]
pub unsafe extern "C" fn vit_store_count(store: *const VitStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn vit_store_dim(store: *const VitStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.dim())
}

/// Borrowed pointer to row `row` (`dim` values), or NULL if out of range.
#[no_mangle]
pub unsafe extern "C" fn vit_store_row(store: *const VitStore, row: usize) -> *const f32 {
    match store.as_ref() {
        Some(s) if row < s.0.len() => s.0.matrix().row(row).as_ptr(),
        _ => ptr::null(),
    }
}

/// Copies the id of `row` into `buf` (NUL-terminated, truncated to
/// `buf_len`). Returns the full id length in bytes through `len_out`.
#[no_mangle]
pub unsafe extern "C" fn vit_store_id(
    store: *const VitStore,
    row: usize,
    buf: *mut c_char,
    buf_len: usize,
    len_out: *mut usize,
) -> VitStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        if row >= store.0.len() {
            return Err(fail(VitStatus::InvalidArgument, format!("row {row} out of range")));
        }
        let id = store.0.id(row).as_bytes();
        if !len_out.is_null() {
            *len_out = id.len();
        }
        if !buf.is_null() && buf_len > 0 {
            let n = id.len().min(buf_len - 1);
            ptr::copy_nonoverlapping(id.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vit_store_free(store: *mut VitStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Distance between two `len`-element vectors.
#[no_mangle]
pub unsafe extern "C" fn vit_distance(
    metric: VitMetric,
    p: *const f32,
    q: *const f32,
    len: usize,
    out: *mut f64,
) -> VitStatus {
    guard(|| {
        out_arg(out, "out")?;
        if p.is_null() || q.is_null() {
            return Err(fail(VitStatus::NullPointer, "vector is NULL"));
        }
        let p = std::slice::from_raw_parts(p, len);
        let q = std::slice::from_raw_parts(q, len);
        *out = check(vitriever::distance(metric_of(metric), p, q))?;
        Ok(())
    })
}

/// Distances from `query` (`dim` values) to every row of `index`, written to
/// `out` which must hold `vit_store_count(index)` values. Undefined
/// distances are `+inf` and counted in `warnings_out` (may be NULL).
#[no_mangle]
pub unsafe extern "C" fn vit_distance_batch(
    metric: VitMetric,
    query: *const f32,
    dim: usize,
    index: *const VitStore,
    out: *mut f64,
    warnings_out: *mut usize,
) -> VitStatus {
    guard(|| {
        let index = ref_arg(index, "index")?;
        if query.is_null() {
            return Err(fail(VitStatus::NullPointer, "query is NULL"));
        }
        if !index.0.is_empty() {
            out_arg(out, "out")?;
        }
        let q = std::slice::from_raw_parts(query, dim);
        let batch = check(vitriever::distance_batch(metric_of(metric), q, index.0.matrix()))?;
        if !batch.values.is_empty() {
            ptr::copy_nonoverlapping(batch.values.as_ptr(), out, batch.values.len());
        }
        if !warnings_out.is_null() {
            *warnings_out = batch.warnings;
        }
        Ok(())
    })
}

/// Fits a normalizer on `reference`. Quantiles apply to ROBUST only.
#[no_mangle]
pub unsafe extern "C" fn vit_normalizer_fit(
    scheme: VitScheme,
    q_low: f64,
    q_high: f64,
    reference: *const VitStore,
    out: *mut *mut VitNormalizer,
) -> VitStatus {
    guard(|| {
        let reference = ref_arg(reference, "reference")?;
        out_arg(out, "out")?;
        let spec = check(NormalizationSpec::new(scheme_of(scheme)).with_quantiles(q_low, q_high))?;
        let fitted = check(FittedNormalizer::fit(spec, reference.0.matrix()))?;
        *out = Box::into_raw(Box::new(VitNormalizer(fitted)));
        Ok(())
    })
}

/// Applies a normalizer, producing a new store with the same ids.
#[no_mangle]
pub unsafe extern "C" fn vit_normalizer_apply(
    normalizer: *const VitNormalizer,
    input: *const VitStore,
    out: *mut *mut VitStore,
    degenerate_out: *mut usize,
) -> VitStatus {
    guard(|| {
        let normalizer = ref_arg(normalizer, "normalizer")?;
        let input = ref_arg(input, "input")?;
        out_arg(out, "out")?;
        let n = check(normalizer.0.apply(input.0.matrix()))?;
        if !degenerate_out.is_null() {
            *degenerate_out = n.degenerate;
        }
        *out = Box::into_raw(Box::new(VitStore(input.0.with_matrix(n.matrix))));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vit_normalizer_save(normalizer: *const VitNormalizer, path: *const c_char) -> VitStatus {
    guard(|| {
        let normalizer = ref_arg(normalizer, "normalizer")?;
        check(normalizer.0.save(str_arg(path, "path")?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn vit_normalizer_load(path: *const c_char, out: *mut *mut VitNormalizer) -> VitStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_arg(out, "out")?;
        let n = check(FittedNormalizer::load(path))?;
        *out = Box::into_raw(Box::new(VitNormalizer(n)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vit_normalizer_free(normalizer: *mut VitNormalizer) {
    if !normalizer.is_null() {
        drop(Box::from_raw(normalizer));
    }
}

/// Ranks `index` for every row of `queries`. `k == 0` requests full
/// rankings. With `exclude_self`, each query's own id is skipped.
#[no_mangle]
pub unsafe extern "C" fn vit_search(
    queries: *const VitStore,
    index: *const VitStore,
    metric: VitMetric,
    k: usize,
    exclude_self: bool,
    out: *mut *mut VitResults,
) -> VitStatus {
    guard(|| {
        let queries = ref_arg(queries, "queries")?;
        let index = ref_arg(index, "index")?;
        out_arg(out, "out")?;
        let exclusions: Exclusions = if exclude_self {
            queries
                .0
                .ids()
                .iter()
                .map(|id| (id.to_string(), HashSet::from([id.to_string()])))
                .collect()
        } else {
            Exclusions::new()
        };
        let results = check(vitriever::batch_search(
            &queries.0,
            &index.0,
            metric_of(metric),
            depth_of(k),
            &exclusions,
        ))?;
        *out = Box::into_raw(Box::new(VitResults(results)));
        Ok(())
    })
}

/// Number of rankings (one per query).
#[no_mangle]
pub unsafe extern "C" fn vit_results_count(results: *const VitResults) -> usize {
    results.as_ref().map_or(0, |r| r.0.len())
}

/// Length of ranking `query`, or 0 if out of range.
#[no_mangle]
pub unsafe extern "C" fn vit_results_len(results: *const VitResults, query: usize) -> usize {
    results
        .as_ref()
        .and_then(|r| r.0.get(query))
        .map_or(0, |r| r.entries.len())
}

/// Index row and distance of entry `rank` (0-based) of ranking `query`.
#[no_mangle]
pub unsafe extern "C" fn vit_results_entry(
    results: *const VitResults,
    query: usize,
    rank: usize,
    row_out: *mut usize,
    distance_out: *mut f64,
) -> VitStatus {
    guard(|| {
        let results = ref_arg(results, "results")?;
        let entry = results.0.get(query).and_then(|r| r.entries.get(rank)).ok_or_else(|| {
            fail(
                VitStatus::InvalidArgument,
                format!("entry ({query}, {rank}) out of range"),
            )
        })?;
        if !row_out.is_null() {
            *row_out = entry.row;
        }
        if !distance_out.is_null() {
            *distance_out = entry.distance;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vit_results_free(results: *mut VitResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Loads stores and ground truth, evaluates one configuration and writes the
/// aggregate score (mAP on 0–100, or mean N-S) to `aggregate_out`.
/// `queries_path` and `gt_path` may be NULL; `k == 0` uses the protocol
/// default depth.
#[no_mangle]
pub unsafe extern "C" fn vit_evaluate(
    index_path: *const c_char,
    queries_path: *const c_char,
    layout: VitLayout,
    gt_path: *const c_char,
    metric: VitMetric,
    scheme: VitScheme,
    q_low: f64,
    q_high: f64,
    k: usize,
    aggregate_out: *mut f64,
) -> VitStatus {
    guard(|| {
        let index_path = str_arg(index_path, "index_path")?;
        let queries_path = if queries_path.is_null() {
            None
        } else {
            Some(Path::new(str_arg(queries_path, "queries_path")?))
        };
        let gt_path = if gt_path.is_null() {
            None
        } else {
            Some(Path::new(str_arg(gt_path, "gt_path")?))
        };
        out_arg(aggregate_out, "aggregate_out")?;
        let norm = check(NormalizationSpec::new(scheme_of(scheme)).with_quantiles(q_low, q_high))?;
        let exp = check(Experiment::load(
            Path::new(index_path),
            queries_path,
            layout_of(layout),
            gt_path,
        ))?;
        let cell = CellConfig {
            metric: metric_of(metric),
            norm,
            depth: (k > 0).then_some(Depth::Top(k)),
        };
        *aggregate_out = check(exp.evaluate(cell))?.report.aggregate;
        Ok(())
    })
}
