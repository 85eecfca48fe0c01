//! C ABI over the embedlab core. Handles are opaque; every fallible call
//! returns an [`EmbedlabStatus`] and leaves human-readable detail in a
//! thread-local buffer exposed by [`embedlab_last_error_message`].
//!
//! Ownership: constructors (`*_new`, `*_build`, `*_sample`) hand the caller
//! an owned handle that must be released with the matching `*_free`; a
//! `free` on NULL is a no-op. Output buffers are caller-allocated and their
//! lengths are validated before anything is written. No call unwinds across
//! the boundary: a caught panic reports `EMBEDLAB_STATUS_PANIC`.

#![deny(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use embedlab::chain::{build_functional_chain, build_orthogonal_chain, Chain};
use embedlab::covering;
use embedlab::cube_slice::{self, SliceQuery};
use embedlab::distortion;
use embedlab::error::{EmbedError, ErrorClass};
use embedlab::experiment::{auto_scale_grid, PROBE_DIAMETER};
use embedlab::geometry::{difference_set, dyadic_layers, NormTag, Point, PointSet};
use embedlab::probe::{sample_probe_map_trial, ProbeConfig, ProbeMap, ProbeMode};

/// Call outcome. Values mirror the CLI exit conventions (0 success, 1 I/O,
/// 2 validation, 3 assertion); 4 marks a panic caught at the boundary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedlabStatus {
    Ok = 0,
    Io = 1,
    Validation = 2,
    Assertion = 3,
    Panic = 4,
}

/// Norm selector accepted by [`embedlab_pointset_new`]: 0 = Euclidean,
/// 1 = sup norm.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedlabNorm {
    L2 = 0,
    Linf = 1,
}

/// Target geometry for chains and probes: 0 = Hilbert (orthogonal blocks,
/// l_2), 1 = Banach (sign functionals, l_inf).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedlabMode {
    Hilbert = 0,
    Banach = 1,
}

/// Opaque finite point set with a fixed norm.
pub struct EmbedlabPointSet(PointSet);

/// Opaque layer chain built from a difference set.
pub struct EmbedlabChain(Chain);

/// Opaque sampled linear map with its generating configuration.
pub struct EmbedlabProbeMap(ProbeMap);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_message(msg: &str) {
    let clean: String = msg
        .chars()
        .map(|c| if c == '\0' { ' ' } else { c })
        .collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn fail(status: EmbedlabStatus, msg: &str) -> EmbedlabStatus {
    set_message(msg);
    status
}

fn from_err(e: &EmbedError) -> EmbedlabStatus {
    let status = match e.class() {
        ErrorClass::Validation => EmbedlabStatus::Validation,
        ErrorClass::Assertion => EmbedlabStatus::Assertion,
        ErrorClass::Io => EmbedlabStatus::Io,
    };
    fail(status, &e.to_string())
}

fn guard<F: FnOnce() -> EmbedlabStatus>(f: F) -> EmbedlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".into());
            fail(EmbedlabStatus::Panic, &msg)
        }
    }
}

fn norm_tag(norm: c_int) -> Result<NormTag, EmbedlabStatus> {
    match norm {
        0 => Ok(NormTag::L2),
        1 => Ok(NormTag::Linf),
        _ => Err(fail(
            EmbedlabStatus::Validation,
            &format!("unknown norm selector {norm}; use EMBEDLAB_NORM_* values"),
        )),
    }
}

fn probe_mode(mode: c_int) -> Result<ProbeMode, EmbedlabStatus> {
    match mode {
        0 => Ok(ProbeMode::Hilbert),
        1 => Ok(ProbeMode::Banach),
        _ => Err(fail(
            EmbedlabStatus::Validation,
            &format!("unknown mode selector {mode}; use EMBEDLAB_MODE_* values"),
        )),
    }
}

macro_rules! nonnull {
    ($p:expr, $what:literal) => {
        match unsafe { $p.as_ref() } {
            Some(r) => r,
            None => return fail(EmbedlabStatus::Validation, concat!("null pointer: ", $what)),
        }
    };
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn embedlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing embedlab call on the same thread.
#[no_mangle]
pub extern "C" fn embedlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a point set from `n` rows of `dim` coordinates in row-major
/// order. `norm` takes `EMBEDLAB_NORM_*` values.
/// # Safety
/// `data` must point to `n * dim` readable doubles and `out` must be a valid write target.
#[no_mangle]
pub unsafe extern "C" fn embedlab_pointset_new(
    data: *const f64,
    n: usize,
    dim: usize,
    norm: c_int,
    out: *mut *mut EmbedlabPointSet,
) -> EmbedlabStatus {
    guard(|| {
        if out.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: out");
        }
        if data.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: data");
        }
        let tag = match norm_tag(norm) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let len = match n.checked_mul(dim) {
            Some(l) if l > 0 => l,
            _ => return fail(EmbedlabStatus::Validation, "n and dim must be positive"),
        };
        let flat = unsafe { std::slice::from_raw_parts(data, len) };
        let points: Vec<Point> = flat.chunks(dim).map(|c| Point(c.to_vec())).collect();
        match PointSet::new(points, tag, "ffi") {
            Ok(set) => {
                unsafe { *out = Box::into_raw(Box::new(EmbedlabPointSet(set))) };
                EmbedlabStatus::Ok
            }
            Err(e) => from_err(&e),
        }
    })
}

/// # Safety
/// `p` must be NULL or a pointer obtained from `embedlab_pointset_new` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn embedlab_pointset_free(p: *mut EmbedlabPointSet) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Number of points; 0 for NULL.
/// # Safety
/// `p` must be NULL or a live point-set handle.
#[no_mangle]
pub unsafe extern "C" fn embedlab_pointset_len(p: *const EmbedlabPointSet) -> usize {
    unsafe { p.as_ref() }.map_or(0, |s| s.0.len())
}

/// Ambient dimension; 0 for NULL.
/// # Safety
/// `p` must be NULL or a live point-set handle.
#[no_mangle]
pub unsafe extern "C" fn embedlab_pointset_dim(p: *const EmbedlabPointSet) -> usize {
    unsafe { p.as_ref() }.map_or(0, |s| s.0.dim())
}

/// Diameter in the set's own norm.
/// # Safety
/// `p` must be a live handle and `out` a valid write target.
#[no_mangle]
pub unsafe extern "C" fn embedlab_pointset_diameter(
    p: *const EmbedlabPointSet,
    out: *mut f64,
) -> EmbedlabStatus {
    guard(|| {
        let set = nonnull!(p, "set");
        if out.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: out");
        }
        unsafe { *out = set.0.diameter() };
        EmbedlabStatus::Ok
    })
}

/// Density at `offset` of the hyperplane section of the unit cube with
/// Euclidean unit normal `a` (length `dim`).
/// # Safety
/// `a` must point to `dim` readable doubles and `out` must be a valid write target.
#[no_mangle]
pub unsafe extern "C" fn embedlab_section_density(
    a: *const f64,
    dim: usize,
    offset: f64,
    out: *mut f64,
) -> EmbedlabStatus {
    guard(|| {
        if a.is_null() || dim == 0 {
            return fail(EmbedlabStatus::Validation, "normal must be non-empty");
        }
        if out.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: out");
        }
        let normal = unsafe { std::slice::from_raw_parts(a, dim) };
        match cube_slice::section_density(normal, offset) {
            Ok(v) => {
                unsafe { *out = v };
                EmbedlabStatus::Ok
            }
            Err(e) => from_err(&e),
        }
    })
}

/// Volume of the slab |<x, a> - y| <= eps inside the unit cube.
/// # Safety
/// `a` must point to `dim` readable doubles and `out` must be a valid write target.
#[no_mangle]
pub unsafe extern "C" fn embedlab_slab_volume(
    a: *const f64,
    dim: usize,
    y: f64,
    eps: f64,
    out: *mut f64,
) -> EmbedlabStatus {
    guard(|| {
        if a.is_null() || dim == 0 {
            return fail(EmbedlabStatus::Validation, "normal must be non-empty");
        }
        if out.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: out");
        }
        let normal = unsafe { std::slice::from_raw_parts(a, dim) };
        let q = SliceQuery {
            a: normal.to_vec(),
            y,
            eps,
        };
        match cube_slice::slab_volume_exact(&q) {
            Ok(r) => {
                unsafe { *out = r.value };
                EmbedlabStatus::Ok
            }
            Err(e) => from_err(&e),
        }
    })
}

/// Homogeneity fit over an automatic two-scale grid: `s_hat` receives the
/// dimension-like exponent, `m_hat` the matching localized-count constant.
/// # Safety
/// `p` must be a live handle; `s_hat` and `m_hat` must be valid write targets.
#[no_mangle]
pub unsafe extern "C" fn embedlab_assouad_estimate(
    p: *const EmbedlabPointSet,
    s_hat: *mut f64,
    m_hat: *mut f64,
) -> EmbedlabStatus {
    guard(|| {
        let set = nonnull!(p, "set");
        if s_hat.is_null() || m_hat.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: s_hat/m_hat");
        }
        let grid = auto_scale_grid(set.0.diameter());
        match covering::assouad_estimate(&set.0, &grid) {
            Ok(fit) => {
                unsafe {
                    *s_hat = fit.s_hom_hat;
                    *m_hat = fit.m_hat;
                }
                EmbedlabStatus::Ok
            }
            Err(e) => from_err(&e),
        }
    })
}

/// Builds the layer chain of the set's difference set in the geometry of
/// `mode` (`EMBEDLAB_MODE_*`). With `normalize` nonzero the set is first
/// scaled so its diameter is at most 1/4, which places every difference
/// layer in the probed range j >= 1.
/// # Safety
/// `p` must be a live handle and `out` a valid write target.
#[no_mangle]
pub unsafe extern "C" fn embedlab_chain_build(
    p: *const EmbedlabPointSet,
    mode: c_int,
    normalize: c_int,
    out: *mut *mut EmbedlabChain,
) -> EmbedlabStatus {
    guard(|| {
        let set = nonnull!(p, "set");
        if out.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: out");
        }
        let mode = match probe_mode(mode) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let tag = match mode {
            ProbeMode::Hilbert => NormTag::L2,
            ProbeMode::Banach => NormTag::Linf,
        };
        let mut base = set.0.clone().with_norm(tag);
        if normalize != 0 {
            base = base.normalized_to_diameter(PROBE_DIAMETER).0;
        }
        let diffs = match difference_set(&base) {
            Ok(d) => d,
            Err(e) => return from_err(&e),
        };
        let dec = dyadic_layers(&diffs);
        let chain = match mode {
            ProbeMode::Hilbert => build_orthogonal_chain(&dec).map(Chain::Ortho),
            ProbeMode::Banach => build_functional_chain(&dec).map(Chain::Functional),
        };
        match chain {
            Ok(c) => {
                unsafe { *out = Box::into_raw(Box::new(EmbedlabChain(c))) };
                EmbedlabStatus::Ok
            }
            Err(e) => from_err(&e),
        }
    })
}

/// # Safety
/// `c` must be NULL or a pointer obtained from `embedlab_chain_build` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn embedlab_chain_free(c: *mut EmbedlabChain) {
    if !c.is_null() {
        drop(unsafe { Box::from_raw(c) });
    }
}

/// Samples trial `trial` of the random map attached to `chain`. Layer
/// weights decay as j^-s_decay; blocks deeper than `j_max` are truncated,
/// and `j_max <= 0` selects the deepest stored layer automatically.
/// # Safety
/// `chain` must be a live handle and `out` a valid write target.
#[no_mangle]
pub unsafe extern "C" fn embedlab_probe_sample(
    chain: *const EmbedlabChain,
    n_out: usize,
    s_decay: f64,
    j_max: i32,
    seed: u64,
    trial: u32,
    out: *mut *mut EmbedlabProbeMap,
) -> EmbedlabStatus {
    guard(|| {
        let chain = nonnull!(chain, "chain");
        if out.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: out");
        }
        let mode = match chain.0 {
            Chain::Ortho(_) => ProbeMode::Hilbert,
            Chain::Functional(_) => ProbeMode::Banach,
        };
        let j_max = if j_max <= 0 {
            chain.0.layer_indices().last().copied().unwrap_or(1).max(1)
        } else {
            j_max
        };
        let cfg = ProbeConfig {
            n_out,
            s_decay,
            mode,
            j_max,
            seed,
        };
        match sample_probe_map_trial(&chain.0, &cfg, trial) {
            Ok(map) => {
                unsafe { *out = Box::into_raw(Box::new(EmbedlabProbeMap(map))) };
                EmbedlabStatus::Ok
            }
            Err(e) => from_err(&e),
        }
    })
}

/// # Safety
/// `m` must be NULL or a pointer obtained from `embedlab_probe_sample` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn embedlab_probe_free(m: *mut EmbedlabProbeMap) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Output dimension of the sampled map; 0 for NULL.
/// # Safety
/// `m` must be NULL or a live probe-map handle.
#[no_mangle]
pub unsafe extern "C" fn embedlab_probe_n_out(m: *const EmbedlabProbeMap) -> usize {
    unsafe { m.as_ref() }.map_or(0, |p| p.0.n_out)
}

/// Input dimension of the sampled map; 0 for NULL.
/// # Safety
/// `m` must be NULL or a live probe-map handle.
#[no_mangle]
pub unsafe extern "C" fn embedlab_probe_dim(m: *const EmbedlabProbeMap) -> usize {
    unsafe { m.as_ref() }.map_or(0, |p| p.0.dim)
}

/// Applies the map to `z` (length `dim`), writing `n_out` coordinates.
/// # Safety
/// `m` must be a live handle; `z` must point to `dim` readable and `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn embedlab_probe_apply(
    m: *const EmbedlabProbeMap,
    z: *const f64,
    dim: usize,
    out: *mut f64,
    out_len: usize,
) -> EmbedlabStatus {
    guard(|| {
        let map = nonnull!(m, "map");
        if z.is_null() || out.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: z/out");
        }
        if out_len != map.0.n_out {
            return fail(
                EmbedlabStatus::Validation,
                &format!("out_len {} != n_out {}", out_len, map.0.n_out),
            );
        }
        if dim != map.0.dim {
            return fail(
                EmbedlabStatus::Validation,
                &format!("z has dimension {}, map expects {}", dim, map.0.dim),
            );
        }
        let zs = unsafe { std::slice::from_raw_parts(z, dim) };
        match map.0.apply(zs) {
            Ok(img) => {
                let dst = unsafe { std::slice::from_raw_parts_mut(out, out_len) };
                dst.copy_from_slice(&img);
                EmbedlabStatus::Ok
            }
            Err(e) => from_err(&e),
        }
    })
}

/// Copies the row-major n_out x dim matrix into `buf`.
/// # Safety
/// `m` must be a live handle and `buf` must point to `buf_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn embedlab_probe_matrix(
    m: *const EmbedlabProbeMap,
    buf: *mut f64,
    buf_len: usize,
) -> EmbedlabStatus {
    guard(|| {
        let map = nonnull!(m, "map");
        if buf.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: buf");
        }
        let need = map.0.n_out * map.0.dim;
        if buf_len != need {
            return fail(
                EmbedlabStatus::Validation,
                &format!("buf_len {buf_len} != n_out * dim = {need}"),
            );
        }
        let dst = unsafe { std::slice::from_raw_parts_mut(buf, buf_len) };
        dst.copy_from_slice(&map.0.matrix);
        EmbedlabStatus::Ok
    })
}

/// Checks the two-sided almost-bi-Lipschitz estimate on all pairs of `p`
/// closer than `rho_l`. `*ok` receives 1 when every pair passes; on 0 the
/// first failing pair is described in the thread-local message.
/// # Safety
/// `m` and `p` must be live handles and `ok` a valid write target.
#[no_mangle]
pub unsafe extern "C" fn embedlab_verify_almost_bilip(
    m: *const EmbedlabProbeMap,
    p: *const EmbedlabPointSet,
    gamma: f64,
    c_l: f64,
    rho_l: f64,
    ok: *mut c_int,
) -> EmbedlabStatus {
    guard(|| {
        let map = nonnull!(m, "map");
        let set = nonnull!(p, "set");
        if ok.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: ok");
        }
        match distortion::verify_almost_bilip(&map.0, &set.0, gamma, c_l, rho_l) {
            Ok(check) => {
                unsafe { *ok = c_int::from(check.ok) };
                if let Some(w) = check.witness {
                    set_message(&format!(
                        "pair ({}, {}) fails on the {} side: dist {} maps to {}",
                        w.i, w.j, w.side, w.dist, w.image_dist
                    ));
                }
                EmbedlabStatus::Ok
            }
            Err(e) => from_err(&e),
        }
    })
}

/// Profiles the map over the dyadic layers of the difference set of `p`
/// (in the map's own geometry) and fits the log-Lipschitz exponent on the
/// probed window, writing `gamma_hat` and the envelope constant `c_fit`.
/// # Safety
/// `m` and `p` must be live handles; `gamma_hat` and `c_fit` must be valid write targets.
#[no_mangle]
pub unsafe extern "C" fn embedlab_gamma_fit(
    m: *const EmbedlabProbeMap,
    p: *const EmbedlabPointSet,
    gamma_hat: *mut f64,
    c_fit: *mut f64,
) -> EmbedlabStatus {
    guard(|| {
        let map = nonnull!(m, "map");
        let set = nonnull!(p, "set");
        if gamma_hat.is_null() || c_fit.is_null() {
            return fail(EmbedlabStatus::Validation, "null pointer: gamma_hat/c_fit");
        }
        let tag = match map.0.config.mode {
            ProbeMode::Hilbert => NormTag::L2,
            ProbeMode::Banach => NormTag::Linf,
        };
        let diffs = match difference_set(&set.0.clone().with_norm(tag)) {
            Ok(d) => d,
            Err(e) => return from_err(&e),
        };
        let dec = dyadic_layers(&diffs);
        let profile = match distortion::layer_min_ratio(&map.0, &dec) {
            Ok(prof) => prof,
            Err(e) => return from_err(&e),
        };
        match distortion::fit_gamma_windows(&profile).into_iter().next() {
            Some(fit) => {
                unsafe {
                    *gamma_hat = fit.gamma_hat;
                    *c_fit = fit.c_fit;
                }
                EmbedlabStatus::Ok
            }
            None => fail(
                EmbedlabStatus::Validation,
                "profile has no probed layers to fit",
            ),
        }
    })
}
