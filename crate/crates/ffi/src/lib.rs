//! C ABI over `linkgcn`.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns an
//! [`LgStatus`]; on failure a description is kept per thread and can be read
//! with [`lg_last_error`]. Panics are caught at the boundary and reported as
//! [`LgStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use linkgcn::data::{self, SyntheticSpec};
use linkgcn::experiment::RunConfig;
use linkgcn::infer::{self, EdgeScoreSet, ScoringConfig};
use linkgcn::{metrics, model, train, EmbeddingSet, Error, GcnParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    NoPositives = 6,
    Diverged = 7,
    Panic = 8,
}

/// Labeled, unit-normalized embeddings.
pub struct LgEmbeddingSet(EmbeddingSet);

/// Trained GCN parameters.
pub struct LgModel(GcnParams);

/// Scored pivot-neighbour pairs.
pub struct LgEdgeScores(EdgeScoreSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LgStatus {
    match e {
        Error::Io { .. } => LgStatus::Io,
        Error::BadMagic { .. } | Error::UnsupportedVersion { .. } | Error::Malformed { .. } | Error::Json(_) => {
            LgStatus::Format
        }
        Error::Shape { .. } | Error::SizeMismatch(_) => LgStatus::Shape,
        Error::NoPositives => LgStatus::NoPositives,
        Error::Diverged { .. } => LgStatus::Diverged,
        _ => LgStatus::InvalidArgument,
    }
}

struct Fail(LgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(LgStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LgStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            LgStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(LgStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn lg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads embeddings through a JSON manifest.
///
/// # Safety
/// `manifest` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_set_load(manifest: *const c_char, out: *mut *mut LgEmbeddingSet) -> LgStatus {
    guard(|| {
        let path = path_arg(manifest, "manifest")?;
        put(out, LgEmbeddingSet(data::load_manifest(path)?))
    })
}

/// Builds a set from `n` row-major rows of `dim` floats and `n` labels.
/// Rows are unit-normalized.
///
/// # Safety
/// `features` must hold `n * dim` floats and `labels` `n` integers.
#[no_mangle]
pub unsafe extern "C" fn lg_set_from_rows(
    features: *const f32,
    n: usize,
    dim: usize,
    labels: *const i64,
    out: *mut *mut LgEmbeddingSet,
) -> LgStatus {
    guard(|| {
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Fail(LgStatus::InvalidArgument, "n * dim overflows".into()))?;
        let f = slice_arg(features, len, "features")?;
        let l = slice_arg(labels, n, "labels")?;
        put(out, LgEmbeddingSet(EmbeddingSet::new(f.to_vec(), dim, l, "ffi")?))
    })
}

/// Generates Gaussian identities of the given sizes on the unit sphere.
///
/// # Safety
/// `class_sizes` must hold `classes` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_set_generate(
    class_sizes: *const usize,
    classes: usize,
    dim: usize,
    spread: f64,
    separation: f64,
    seed: u64,
    out: *mut *mut LgEmbeddingSet,
) -> LgStatus {
    guard(|| {
        let sizes = slice_arg(class_sizes, classes, "class_sizes")?;
        let spec = SyntheticSpec {
            class_sizes: sizes.to_vec(),
            dim,
            spread,
            separation,
            seed,
            sample_seed: None,
            name: "synthetic".into(),
        };
        put(out, LgEmbeddingSet(data::generate_synthetic(&spec)?))
    })
}

/// Writes the set's feature and label files next to `manifest`.
///
/// # Safety
/// `set` must be a live handle and `manifest` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lg_set_save(set: *const LgEmbeddingSet, manifest: *const c_char) -> LgStatus {
    guard(|| {
        let set = handle(set, "set")?;
        data::save_embeddings(&set.0, path_arg(manifest, "manifest")?)?;
        Ok(())
    })
}

/// Row count, or 0 for NULL.
///
/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lg_set_len(set: *const LgEmbeddingSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// Feature dimension, or 0 for NULL.
///
/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lg_set_dim(set: *const LgEmbeddingSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.dim())
}

/// Copies the dense label of every row into `labels` (length `lg_set_len`).
///
/// # Safety
/// `set` must be a live handle; `labels` must have room for every row.
#[no_mangle]
pub unsafe extern "C" fn lg_set_labels(set: *const LgEmbeddingSet, labels: *mut u32) -> LgStatus {
    guard(|| {
        let set = handle(set, "set")?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        ptr::copy_nonoverlapping(set.0.labels().as_ptr(), labels, set.0.len());
        Ok(())
    })
}

/// # Safety
/// `set` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lg_set_free(set: *mut LgEmbeddingSet) {
    release(set);
}

/// Trains on `set`. `config_json` holds a run config (`{"train": {...}}`)
/// or is NULL for defaults.
///
/// # Safety
/// `set` must be a live handle, `config_json` NULL or NUL-terminated, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lg_model_train(
    set: *const LgEmbeddingSet,
    config_json: *const c_char,
    out: *mut *mut LgModel,
) -> LgStatus {
    guard(|| {
        let set = handle(set, "set")?;
        let cfg: RunConfig = if config_json.is_null() {
            RunConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| Fail(LgStatus::InvalidArgument, "config is not UTF-8".into()))?;
            serde_json::from_str(text).map_err(|e| Fail(LgStatus::Format, e.to_string()))?
        };
        let (params, _) = train::train(&set.0, &cfg.train)?;
        put(out, LgModel(params))
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_model_load(path: *const c_char, out: *mut *mut LgModel) -> LgStatus {
    guard(|| put(out, LgModel(model::load_checkpoint(path_arg(path, "path")?)?)))
}

/// # Safety
/// `m` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lg_model_save(m: *const LgModel, path: *const c_char) -> LgStatus {
    guard(|| {
        model::save_checkpoint(&handle(m, "model")?.0, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lg_model_free(m: *mut LgModel) {
    release(m);
}

/// Scores every pivot against its `k` nearest neighbours, with `k2` 2-hop
/// neighbours per node and `r` edges per node.
///
/// # Safety
/// `set` and `m` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_score_edges(
    set: *const LgEmbeddingSet,
    m: *const LgModel,
    k: usize,
    k2: usize,
    r: usize,
    out: *mut *mut LgEdgeScores,
) -> LgStatus {
    guard(|| {
        let set = handle(set, "set")?;
        let m = handle(m, "model")?;
        let scores = infer::score_edges(&set.0, &m.0, &ScoringConfig::top_k(k, k2, r))?;
        put(out, LgEdgeScores(scores))
    })
}

/// Number of scored pairs, or 0 for NULL.
///
/// # Safety
/// `s` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lg_scores_len(s: *const LgEdgeScores) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// Reads pair `i`. `label` receives 1 (link), 0 (no link) or -1 (unknown).
/// Any output pointer may be NULL.
///
/// # Safety
/// `s` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_scores_get(
    s: *const LgEdgeScores,
    i: usize,
    pivot: *mut usize,
    neighbor: *mut usize,
    score: *mut f64,
    label: *mut i32,
) -> LgStatus {
    guard(|| {
        let s = handle(s, "scores")?;
        let e = s.0.edges.get(i).ok_or_else(|| {
            Fail(
                LgStatus::InvalidArgument,
                format!("index {i} out of range for {} pairs", s.0.len()),
            )
        })?;
        if let Some(p) = pivot.as_mut() {
            *p = e.pivot;
        }
        if let Some(p) = neighbor.as_mut() {
            *p = e.neighbor;
        }
        if let Some(p) = score.as_mut() {
            *p = e.score;
        }
        if let Some(p) = label.as_mut() {
            *p = e.label.map_or(-1, i32::from);
        }
        Ok(())
    })
}

/// Edge AP of a score set against its ground-truth bits.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_scores_average_precision(s: *const LgEdgeScores, out: *mut f64) -> LgStatus {
    guard(|| {
        let ap = handle(s, "scores")?.0.average_precision()?;
        *out.as_mut().ok_or_else(|| null("out"))? = ap;
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lg_scores_free(s: *mut LgEdgeScores) {
    release(s);
}

/// Connected components of the pairs scoring at least `tau` over `n` nodes.
/// `assignments` receives `n` cluster ids numbered by first appearance.
///
/// # Safety
/// `s` must be a live handle; `assignments` must have room for `n` entries.
#[no_mangle]
pub unsafe extern "C" fn lg_merge_links(
    s: *const LgEdgeScores,
    tau: f64,
    n: usize,
    assignments: *mut usize,
    cluster_count: *mut usize,
) -> LgStatus {
    guard(|| {
        let s = handle(s, "scores")?;
        let c = infer::merge_links(&s.0, tau, n)?;
        if n > 0 {
            if assignments.is_null() {
                return Err(null("assignments"));
            }
            ptr::copy_nonoverlapping(c.assignments.as_ptr(), assignments, n);
        }
        if let Some(out) = cluster_count.as_mut() {
            *out = c.cluster_count;
        }
        Ok(())
    })
}

/// Average precision of `n` scores against 0/1 labels.
///
/// # Safety
/// `scores` and `labels` must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_average_precision(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> LgStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l: Vec<bool> = slice_arg(labels, n, "labels")?.iter().map(|&b| b != 0).collect();
        let ap = metrics::average_precision(s, &l)?;
        *out.as_mut().ok_or_else(|| null("out"))? = ap;
        Ok(())
    })
}

/// BCubed precision, recall and F of a predicted partition against truth.
///
/// # Safety
/// `pred` and `truth` must hold `n` entries; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_bcubed(
    pred: *const usize,
    truth: *const usize,
    n: usize,
    precision: *mut f64,
    recall: *mut f64,
    f: *mut f64,
) -> LgStatus {
    guard(|| {
        let b = metrics::bcubed(slice_arg(pred, n, "pred")?, slice_arg(truth, n, "truth")?)?;
        *precision.as_mut().ok_or_else(|| null("precision"))? = b.precision;
        *recall.as_mut().ok_or_else(|| null("recall"))? = b.recall;
        *f.as_mut().ok_or_else(|| null("f"))? = b.f;
        Ok(())
    })
}
