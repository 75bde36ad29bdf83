//! C ABI over the graphdiff library.
//!
//! Models and graph lists cross the boundary as opaque handles that the
//! caller releases with the matching `*_free` function. Every fallible call
//! returns a [`GdStatus`]; on failure the message is available from
//! [`gd_last_error`] on the same thread until the next failing call.
//! Panics are caught at the boundary and reported as `GD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use graphdiff::config::Config;
use graphdiff::engine::{load_checkpoint, SavedModel};
use graphdiff::graph::Graph;
use graphdiff::io::{read_graphs, write_graphs, Manifest, Split};
use graphdiff::{pipeline, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGraph = 3,
    Parse = 4,
    Io = 5,
    Checkpoint = 6,
    Config = 7,
    Numeric = 8,
    Internal = 9,
    Panic = 10,
}

/// One labelled edge `i < j` with edge class `label >= 1`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GdEdge {
    pub i: usize,
    pub j: usize,
    pub label: usize,
}

/// Opaque trained model.
pub struct GdModel(SavedModel);

/// Opaque list of graphs.
pub struct GdGraphs(Vec<Graph>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GdStatus {
    match e {
        Error::InvalidGraph(_) => GdStatus::InvalidGraph,
        Error::InvalidArgument(_) => GdStatus::InvalidArgument,
        Error::Parse { .. } => GdStatus::Parse,
        Error::Io { .. } => GdStatus::Io,
        Error::Checkpoint(_) => GdStatus::Checkpoint,
        Error::Config(_) => GdStatus::Config,
        Error::Numeric(_) => GdStatus::Numeric,
        Error::Shape { .. } | Error::Autodiff(_) => GdStatus::Internal,
    }
}

struct Fail(GdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GdStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GdStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GdStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GdStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn graph_at<'a>(graphs: *const GdGraphs, index: usize) -> Result<&'a Graph, Fail> {
    let list = graphs.as_ref().ok_or_else(|| null("graphs"))?;
    list.0.get(index).ok_or_else(|| {
        Fail(
            GdStatus::InvalidArgument,
            format!("graph index {index} out of range for {} graphs", list.0.len()),
        )
    })
}

/// Message of the last failing call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint written by the `train` or `train-regressor` commands.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_model_load(path: *const c_char, out: *mut *mut GdModel) -> GdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = load_checkpoint(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(GdModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`gd_model_load`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gd_model_free(model: *mut GdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Draws `count` samples. `nodes == 0` draws each node count from the
/// training distribution. The same seed gives the same graphs.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_model_sample(
    model: *const GdModel,
    count: usize,
    nodes: usize,
    seed: u64,
    out: *mut *mut GdGraphs,
) -> GdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let graphs = pipeline::sample(&model.0, count, (nodes > 0).then_some(nodes), seed)?;
        *out = Box::into_raw(Box::new(GdGraphs(graphs)));
        Ok(())
    })
}

/// Reads a graph file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_graphs_read(path: *const c_char, out: *mut *mut GdGraphs) -> GdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let graphs = read_graphs(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(GdGraphs(graphs)));
        Ok(())
    })
}

/// Writes a graph file.
///
/// # Safety
/// `graphs` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gd_graphs_write(graphs: *const GdGraphs, path: *const c_char) -> GdStatus {
    guard(|| {
        let list = graphs.as_ref().ok_or_else(|| null("graphs"))?;
        write_graphs(&path_arg(path, "path")?, &list.0)?;
        Ok(())
    })
}

/// # Safety
/// `graphs` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gd_graphs_free(graphs: *mut GdGraphs) {
    if !graphs.is_null() {
        drop(Box::from_raw(graphs));
    }
}

/// Number of graphs in the list; 0 for null.
///
/// # Safety
/// `graphs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gd_graphs_len(graphs: *const GdGraphs) -> usize {
    graphs.as_ref().map_or(0, |g| g.0.len())
}

/// Node count of graph `index`.
///
/// # Safety
/// `graphs` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_graph_node_count(graphs: *const GdGraphs, index: usize, out: *mut usize) -> GdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = graph_at(graphs, index)?.n();
        Ok(())
    })
}

/// Copies up to `cap` node classes of graph `index` into `buf` and stores
/// the full count in `len`. Pass `cap == 0` to query the size.
///
/// # Safety
/// `buf` must hold `cap` elements (it may be null when `cap == 0`) and `len`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_graph_nodes(
    graphs: *const GdGraphs,
    index: usize,
    buf: *mut usize,
    cap: usize,
    len: *mut usize,
) -> GdStatus {
    guard(|| {
        let len = out_arg(len, "len")?;
        let nodes = graph_at(graphs, index)?.nodes();
        *len = nodes.len();
        copy_out(nodes, buf, cap)
    })
}

/// Copies up to `cap` edges of graph `index` into `buf` and stores the full
/// count in `len`. Edges come in row-major order of `(i, j)`.
///
/// # Safety
/// As for [`gd_graph_nodes`].
#[no_mangle]
pub unsafe extern "C" fn gd_graph_edges(
    graphs: *const GdGraphs,
    index: usize,
    buf: *mut GdEdge,
    cap: usize,
    len: *mut usize,
) -> GdStatus {
    guard(|| {
        let len = out_arg(len, "len")?;
        let edges: Vec<GdEdge> = graph_at(graphs, index)?
            .edge_list()
            .into_iter()
            .map(|(i, j, label)| GdEdge { i, j, label })
            .collect();
        *len = edges.len();
        copy_out(&edges, buf, cap)
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize) -> Result<(), Fail> {
    let k = src.len().min(cap);
    if k > 0 {
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, k);
    }
    Ok(())
}

/// Scores `generated` against the train and test splits of the config's
/// manifest and returns the `key = value` report as a string owned by the
/// caller, to be released with [`gd_string_free`].
///
/// # Safety
/// `config` must be a NUL-terminated path, `generated` a live handle and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_evaluate(
    config: *const c_char,
    generated: *const GdGraphs,
    seed: u64,
    out: *mut *mut c_char,
) -> GdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let gen = generated.as_ref().ok_or_else(|| null("generated"))?;
        let cfg = Config::load(&path_arg(config, "config")?)?;
        let m = Manifest::load(cfg.manifest("evaluate")?)?;
        let report = pipeline::evaluate(&cfg, &gen.0, &m.read(Split::Train)?, &m.read(Split::Test)?, seed)?;
        let text = CString::new(report.to_string()).expect("report has no NUL");
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
