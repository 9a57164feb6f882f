//! C interface to `greedy-sched`.
//!
//! Every function returns a [`GsStatus`]. On failure the message is kept per
//! thread and read with [`gs_last_error`]. Links are 1-based in priority
//! vectors and 0-based in rate and queue arrays; link sets are bit masks with
//! link `i` at bit `i - 1`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use greedy_sched::em::{em_assign, EmInit, EmOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};
use greedy_sched::graph::{incidence_matrix, weighted_norm};
use greedy_sched::scheduling::{greedy_schedule, max_weight_schedule};
use greedy_sched::sim::{simulate, SimConfig, SimResult};
use greedy_sched::stability::{min_norm_priority, test_feasibility};
use greedy_sched::{ConflictGraph, Error, LinkSet, PriorityVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    OutsideRegion = 4,
    Solver = 5,
    InvariantViolation = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Opaque conflict graph.
pub struct GsGraph(ConflictGraph);

/// Opaque result of one simulation run.
pub struct GsSimResult(SimResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GsVerdict {
    pub member: bool,
    pub boundary: bool,
    pub value: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GsStatus {
    match e {
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => GsStatus::Parse,
        Error::OutsideCapacityRegion => GsStatus::OutsideRegion,
        Error::Lp(_) => GsStatus::Solver,
        Error::InvariantViolation { .. } => GsStatus::InvariantViolation,
        Error::Io(_) => GsStatus::Io,
        _ => GsStatus::InvalidArgument,
    }
}

struct Fail(GsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            GsStatus::Panic
        }
    }
}

unsafe fn graph<'a>(g: *const GsGraph) -> Result<&'a ConflictGraph, Fail> {
    g.as_ref().map(|g| &g.0).ok_or_else(|| null("graph"))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn rates<'a>(g: &ConflictGraph, p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if len != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), got: len }.into());
    }
    input(p, len, "rates")
}

unsafe fn priority(g: &ConflictGraph, p: *const u32, len: usize) -> Result<PriorityVector, Fail> {
    if len != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), got: len }.into());
    }
    let v = input(p, len, "priority")?.iter().map(|&x| x as usize).collect();
    Ok(PriorityVector::new(v)?)
}

fn copy_priority(p: &PriorityVector, out: &mut [u32]) {
    for (o, &v) in out.iter_mut().zip(p.as_slice()) {
        *o = v as u32;
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn gs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Graph on links `1..=n` with `edge_count` pairs read from `edges`
/// (`2 * edge_count` entries).
///
/// # Safety
/// `edges` must hold `2 * edge_count` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_new(
    n: usize,
    edges: *const u32,
    edge_count: usize,
    out: *mut *mut GsGraph,
) -> GsStatus {
    guard(|| {
        let flat = input(edges, 2 * edge_count, "edges")?;
        let pairs: Vec<(usize, usize)> = flat.chunks(2).map(|c| (c[0] as usize, c[1] as usize)).collect();
        let g = ConflictGraph::new(n, &pairs)?;
        write(out, Box::into_raw(Box::new(GsGraph(g))), "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_ring(n: usize, out: *mut *mut GsGraph) -> GsStatus {
    guard(|| {
        let g = ConflictGraph::ring(n)?;
        write(out, Box::into_raw(Box::new(GsGraph(g))), "out")
    })
}

/// The eight-link bipartite example graph.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_bipartite8(out: *mut *mut GsGraph) -> GsStatus {
    guard(|| write(out, Box::into_raw(Box::new(GsGraph(ConflictGraph::bipartite_fig1b()))), "out"))
}

/// `ring:<n>`, `bipartite8`, or a path to an edge-list file.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_from_spec(spec: *const c_char, out: *mut *mut GsGraph) -> GsStatus {
    guard(|| {
        if spec.is_null() {
            return Err(null("spec"));
        }
        let s = CStr::from_ptr(spec)
            .to_str()
            .map_err(|_| Fail(GsStatus::Parse, "spec is not UTF-8".into()))?;
        let g = ConflictGraph::from_spec(s)?;
        write(out, Box::into_raw(Box::new(GsGraph(g))), "out")
    })
}

/// Number of links, or 0 for a null graph.
///
/// # Safety
/// `g` must be null or a live graph.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_link_count(g: *const GsGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.n())
}

/// # Safety
/// `g` must be null or a graph not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_free(g: *mut GsGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Largest weighted closed-neighbourhood load under `priority`.
///
/// # Safety
/// Arrays must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_weighted_norm(
    g: *const GsGraph,
    priority_vec: *const u32,
    rate: *const f64,
    n: usize,
    out: *mut f64,
) -> GsStatus {
    guard(|| {
        let g = graph(g)?;
        let p = priority(g, priority_vec, n)?;
        let a = rates(g, rate, n)?;
        let v = weighted_norm(&incidence_matrix(g, &p)?, a)?;
        write(out, v, "out")
    })
}

/// Whether some static priority stabilises `rate`. `certificate` may be null;
/// otherwise it receives the best priority vector.
///
/// # Safety
/// Arrays must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_test_feasibility(
    g: *const GsGraph,
    rate: *const f64,
    n: usize,
    out: *mut GsVerdict,
    certificate: *mut u32,
) -> GsStatus {
    guard(|| {
        let g = graph(g)?;
        let v = test_feasibility(g, rates(g, rate, n)?)?;
        if !certificate.is_null() {
            if let Some(p) = &v.certificate {
                copy_priority(p, output(certificate, n, "certificate")?);
            }
        }
        write(
            out,
            GsVerdict {
                member: v.member,
                boundary: v.boundary,
                value: v.value,
            },
            "out",
        )
    })
}

/// Priority vector of least weighted norm, written to `priority_out`.
///
/// # Safety
/// Arrays must hold `n` entries; `norm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_min_norm_priority(
    g: *const GsGraph,
    rate: *const f64,
    n: usize,
    priority_out: *mut u32,
    norm: *mut f64,
) -> GsStatus {
    guard(|| {
        let g = graph(g)?;
        let (p, v) = min_norm_priority(g, rates(g, rate, n)?)?;
        copy_priority(&p, output(priority_out, n, "priority_out")?);
        write(norm, v, "norm")
    })
}

/// Greedy schedule over the links in `occupied` under `priority`.
///
/// # Safety
/// `priority_vec` must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_greedy_schedule(
    g: *const GsGraph,
    priority_vec: *const u32,
    n: usize,
    occupied: u64,
    out: *mut u64,
) -> GsStatus {
    guard(|| {
        let g = graph(g)?;
        let p = priority(g, priority_vec, n)?;
        let s = greedy_schedule(g, &p, LinkSet::from_bits(occupied))?;
        write(out, s.bits(), "out")
    })
}

/// Independent set of largest total queue.
///
/// # Safety
/// `queues` must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_max_weight_schedule(
    g: *const GsGraph,
    queues: *const u64,
    n: usize,
    out: *mut u64,
) -> GsStatus {
    guard(|| {
        let g = graph(g)?;
        if n != g.n() {
            return Err(Error::DimensionMismatch { expected: g.n(), got: n }.into());
        }
        let s = max_weight_schedule(g, input(queues, n, "queues")?)?;
        write(out, s.bits(), "out")
    })
}

/// Two-priority assignment. Writes the first class's rate share to `x_out`,
/// both priority vectors, and the achieved objective to `t_out`.
///
/// # Safety
/// Arrays must hold `n` entries; `t_out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gs_em_assign(
    g: *const GsGraph,
    rate: *const f64,
    n: usize,
    restarts: usize,
    seed: u64,
    x_out: *mut f64,
    p1_out: *mut u32,
    p2_out: *mut u32,
    t_out: *mut f64,
) -> GsStatus {
    guard(|| {
        let g = graph(g)?;
        let a = rates(g, rate, n)?;
        let opts = EmOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: EmInit::Half,
            restarts,
            seed,
        };
        let s = em_assign(g, a, &opts)?;
        output(x_out, n, "x_out")?.copy_from_slice(&s.x);
        copy_priority(&s.p1, output(p1_out, n, "p1_out")?);
        copy_priority(&s.p2, output(p2_out, n, "p2_out")?);
        write(t_out, s.t, "t_out")
    })
}

/// One run of a JSON simulation config (same fields as the CLI's `--config`).
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_simulate(config_json: *const c_char, out: *mut *mut GsSimResult) -> GsStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|_| Fail(GsStatus::Parse, "config is not UTF-8".into()))?;
        let r = simulate(&SimConfig::from_json(text)?)?;
        write(out, Box::into_raw(Box::new(GsSimResult(r))), "out")
    })
}

/// # Safety
/// `r` must be null or a result not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_sim_result_free(r: *mut GsSimResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Largest queue at the horizon, or 0 for null.
///
/// # Safety
/// `r` must be null or a live result.
#[no_mangle]
pub unsafe extern "C" fn gs_sim_result_final_max_queue(r: *const GsSimResult) -> u64 {
    r.as_ref().map_or(0, |r| r.0.final_max_queue())
}

/// Growth rate of the largest queue over the second half of the run.
///
/// # Safety
/// `r` must be null or a live result.
#[no_mangle]
pub unsafe extern "C" fn gs_sim_result_slope(r: *const GsSimResult) -> f64 {
    r.as_ref().map_or(0.0, |r| r.0.slope())
}

/// Copies the final queue lengths. `len` must be at least the link count;
/// `BUFFER_TOO_SMALL` otherwise.
///
/// # Safety
/// `buf` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn gs_sim_result_final_queues(
    r: *const GsSimResult,
    buf: *mut u64,
    len: usize,
) -> GsStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        let q = &r.0.final_queues;
        if len < q.len() {
            return Err(Fail(
                GsStatus::BufferTooSmall,
                format!("need {} entries, got {len}", q.len()),
            ));
        }
        output(buf, q.len(), "buf")?.copy_from_slice(q);
        Ok(())
    })
}
