//! C ABI over the core toolkit. All functions return a [`TrwmrfStatus`]
//! code (0 on success) and communicate objects through opaque handles that
//! must be released with the matching `_free` function. The most recent
//! error message is kept per thread and retrievable with
//! [`trwmrf_last_error`]. The header is generated into `include/trwmrf.h`
//! at build time.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use libc::{c_char, c_double, c_int, size_t};

use trwmrf::config::{CouplingKind, RhoSource};
use trwmrf::error::MrfError;
use trwmrf::experiment::{draw_true_model, edge_weights_for, Method};
use trwmrf::graph::Graph;
use trwmrf::model::{ExponentialParams, MarginalSet};
use trwmrf::predict::{
    gamma_from_observation, predict, MixtureSpec, ObservationVector, SnrParam,
};
use trwmrf::transfer::exact_marginals_auto;
use trwmrf::trw::{trw_sum_product, TrwOptions};

/// Result codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrwmrfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Malformed input: bad UTF-8, bad file contents, shape mismatch.
    InvalidInput = 2,
    /// Inference or linear algebra failed numerically.
    NumericalFailure = 3,
    /// A provided buffer was too small.
    BufferTooSmall = 4,
    /// A panic was caught at the boundary; state is unspecified.
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &MrfError) -> TrwmrfStatus {
    match err {
        MrfError::NanInMessages(_)
        | MrfError::InnerNotConverged(_)
        | MrfError::ZeroMomentCell(_)
        | MrfError::LineSearchFailed(_)
        | MrfError::SingularMatrix(_) => TrwmrfStatus::NumericalFailure,
        _ => TrwmrfStatus::InvalidInput,
    }
}

fn guard<F: FnOnce() -> TrwmrfStatus>(f: F) -> TrwmrfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            TrwmrfStatus::Internal
        }
    }
}

/// Opaque model handle (graph plus potential tables).
pub struct TrwmrfModel {
    inner: ExponentialParams,
}

/// Opaque marginal-table handle.
pub struct TrwmrfMarginals {
    inner: MarginalSet,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, TrwmrfStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(TrwmrfStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        TrwmrfStatus::InvalidInput
    })
}

fn emit_model(
    out: *mut *mut TrwmrfModel,
    result: Result<ExponentialParams, MrfError>,
) -> TrwmrfStatus {
    if out.is_null() {
        set_error("null output pointer");
        return TrwmrfStatus::NullArgument;
    }
    match result {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(TrwmrfModel { inner })) };
            TrwmrfStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Copy the most recent error message on this thread into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full length needed,
/// including the terminator.
#[no_mangle]
pub unsafe extern "C" fn trwmrf_last_error(buf: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // Force termination when truncating.
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Parse a model from its text representation.
#[no_mangle]
pub unsafe extern "C" fn trwmrf_model_from_string(
    text: *const c_char,
    out: *mut *mut TrwmrfModel,
) -> TrwmrfStatus {
    guard(|| {
        let text = match cstr_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        emit_model(out, ExponentialParams::from_model_string(text, "<string>"))
    })
}

/// Load a model from a file in the text format.
#[no_mangle]
pub unsafe extern "C" fn trwmrf_model_load(
    path: *const c_char,
    out: *mut *mut TrwmrfModel,
) -> TrwmrfStatus {
    guard(|| {
        let path = match cstr_arg(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        emit_model(out, ExponentialParams::load(path.as_ref()))
    })
}

/// Draw a random two-state coupled field on a grid: spin couplings uniform
/// on `[0, gamma]` when `attractive` is nonzero, `[-gamma, gamma]`
/// otherwise; node terms zero.
#[no_mangle]
pub unsafe extern "C" fn trwmrf_model_sample_grid(
    rows: size_t,
    cols: size_t,
    attractive: c_int,
    gamma: c_double,
    seed: u64,
    out: *mut *mut TrwmrfModel,
) -> TrwmrfStatus {
    guard(|| {
        let kind = if attractive != 0 { CouplingKind::Attractive } else { CouplingKind::Mixed };
        let result = Graph::grid(rows, cols)
            .map(Arc::new)
            .and_then(|g| draw_true_model(&g, kind, gamma, seed));
        emit_model(out, result)
    })
}

/// Serialize a model; the returned string must be released with
/// [`trwmrf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn trwmrf_model_to_string(
    model: *const TrwmrfModel,
    out: *mut *mut c_char,
) -> TrwmrfStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            set_error("null argument");
            return TrwmrfStatus::NullArgument;
        }
        let text = (*model).inner.to_model_string();
        match CString::new(text) {
            Ok(c) => {
                *out = c.into_raw();
                TrwmrfStatus::Ok
            }
            Err(_) => {
                set_error("model text contained an interior NUL");
                TrwmrfStatus::Internal
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn trwmrf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn trwmrf_model_free(model: *mut TrwmrfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn trwmrf_model_num_nodes(model: *const TrwmrfModel) -> size_t {
    if model.is_null() {
        return 0;
    }
    (*model).inner.graph().num_nodes()
}

#[no_mangle]
pub unsafe extern "C" fn trwmrf_model_num_edges(model: *const TrwmrfModel) -> size_t {
    if model.is_null() {
        return 0;
    }
    (*model).inner.graph().num_edges()
}

#[no_mangle]
pub unsafe extern "C" fn trwmrf_model_num_states(model: *const TrwmrfModel) -> size_t {
    if model.is_null() {
        return 0;
    }
    (*model).inner.num_states()
}

/// Inference engine selector for [`trwmrf_infer`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrwmrfEngine {
    /// Reweighted sum-product with uniform-spanning-tree edge weights.
    Trw = 0,
    /// Ordinary sum-product (unit edge weights).
    Bp = 1,
    /// Exact marginals (enumeration or grid transfer chain).
    Exact = 2,
}

fn engine_marginals(
    model: &ExponentialParams,
    engine: TrwmrfEngine,
    tolerance: f64,
    max_iter: usize,
    converged: &mut bool,
) -> Result<MarginalSet, MrfError> {
    *converged = true;
    match engine {
        TrwmrfEngine::Exact => exact_marginals_auto(model),
        TrwmrfEngine::Trw | TrwmrfEngine::Bp => {
            let method = if matches!(engine, TrwmrfEngine::Trw) { Method::Trw } else { Method::Bp };
            let weights = edge_weights_for(
                method,
                model.graph(),
                &RhoSource::UniformSpanningTree,
            )?
            .expect("message-passing engines carry weights");
            let opts = TrwOptions {
                tolerance: if tolerance > 0.0 { tolerance } else { 1e-10 },
                max_iter: if max_iter > 0 { max_iter } else { 5000 },
                ..Default::default()
            };
            let (tau, rep) = trw_sum_product(model, &weights, &opts)?;
            *converged = rep.converged;
            Ok(tau)
        }
    }
}

/// Compute marginals with the selected engine. `converged_out` (optional)
/// receives 1 when message passing reached the tolerance. Pass
/// `tolerance <= 0` or `max_iter == 0` for the defaults.
#[no_mangle]
pub unsafe extern "C" fn trwmrf_infer(
    model: *const TrwmrfModel,
    engine: TrwmrfEngine,
    tolerance: c_double,
    max_iter: size_t,
    out: *mut *mut TrwmrfMarginals,
    converged_out: *mut c_int,
) -> TrwmrfStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            set_error("null argument");
            return TrwmrfStatus::NullArgument;
        }
        let mut converged = true;
        match engine_marginals(&(*model).inner, engine, tolerance, max_iter, &mut converged) {
            Ok(inner) => {
                if !converged_out.is_null() {
                    *converged_out = c_int::from(converged);
                }
                *out = Box::into_raw(Box::new(TrwmrfMarginals { inner }));
                TrwmrfStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn trwmrf_marginals_free(marg: *mut TrwmrfMarginals) {
    if !marg.is_null() {
        drop(Box::from_raw(marg));
    }
}

/// Copy the `m` node-marginal probabilities of one node into `buf`.
#[no_mangle]
pub unsafe extern "C" fn trwmrf_marginals_node(
    marg: *const TrwmrfMarginals,
    node: size_t,
    buf: *mut c_double,
    buf_len: size_t,
) -> TrwmrfStatus {
    guard(|| {
        if marg.is_null() || buf.is_null() {
            set_error("null argument");
            return TrwmrfStatus::NullArgument;
        }
        let inner = &(*marg).inner;
        if node >= inner.graph().num_nodes() {
            set_error("node index out of range");
            return TrwmrfStatus::InvalidInput;
        }
        let probs = inner.node(node);
        if buf_len < probs.len() {
            set_error("buffer shorter than the number of states");
            return TrwmrfStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(probs.as_ptr(), buf, probs.len());
        TrwmrfStatus::Ok
    })
}

/// Copy the `m*m` joint table of one edge (row-major in the smaller
/// endpoint's state) into `buf`.
#[no_mangle]
pub unsafe extern "C" fn trwmrf_marginals_edge(
    marg: *const TrwmrfMarginals,
    edge: size_t,
    buf: *mut c_double,
    buf_len: size_t,
) -> TrwmrfStatus {
    guard(|| {
        if marg.is_null() || buf.is_null() {
            set_error("null argument");
            return TrwmrfStatus::NullArgument;
        }
        let inner = &(*marg).inner;
        if edge >= inner.graph().num_edges() {
            set_error("edge index out of range");
            return TrwmrfStatus::InvalidInput;
        }
        let tab = inner.edge_table(edge);
        if buf_len < tab.len() {
            set_error("buffer shorter than the edge table");
            return TrwmrfStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(tab.as_ptr(), buf, tab.len());
        TrwmrfStatus::Ok
    })
}

/// Denoise one observation vector against the model: conditions on the
/// observations through the Gaussian-mixture channel with SNR `alpha`,
/// runs the selected engine on the shifted model, and writes the
/// posterior-mean estimates (one per node) into `z_out`.
///
/// `nu` and `sigma2` give the per-state component means and variances and
/// must have `trwmrf_model_num_states(model)` entries; `y` and `z_out`
/// must have one entry per node.
#[no_mangle]
pub unsafe extern "C" fn trwmrf_denoise(
    model: *const TrwmrfModel,
    engine: TrwmrfEngine,
    nu: *const c_double,
    sigma2: *const c_double,
    alpha: c_double,
    y: *const c_double,
    y_len: size_t,
    z_out: *mut c_double,
) -> TrwmrfStatus {
    guard(|| {
        if model.is_null() || nu.is_null() || sigma2.is_null() || y.is_null() || z_out.is_null() {
            set_error("null argument");
            return TrwmrfStatus::NullArgument;
        }
        let inner = &(*model).inner;
        let m = inner.num_states();
        let n = inner.graph().num_nodes();
        if y_len != n {
            set_error("observation length must equal the node count");
            return TrwmrfStatus::InvalidInput;
        }
        let nu = std::slice::from_raw_parts(nu, m).to_vec();
        let sigma2 = std::slice::from_raw_parts(sigma2, m).to_vec();
        let values = std::slice::from_raw_parts(y, n).to_vec();
        let run = || -> Result<Vec<f64>, MrfError> {
            let spec = MixtureSpec::new(nu, sigma2)?;
            let alpha = SnrParam::new(alpha)?;
            let obs = ObservationVector { alpha, values };
            let gamma = gamma_from_observation(inner.graph(), &spec, &obs)?;
            let post = inner.combined(&gamma)?;
            let mut converged = true;
            let marg = engine_marginals(&post, engine, 0.0, 0, &mut converged)?;
            predict(&marg, &spec, &obs)
        };
        match run() {
            Ok(z) => {
                std::ptr::copy_nonoverlapping(z.as_ptr(), z_out, n);
                TrwmrfStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
