//! C ABI over `ponas-core`.
//!
//! Tables and search results are opaque handles created by `*_new`/`*_load`
//! style functions and released with the matching `*_free`. Every fallible
//! function returns a [`PonasStatus`]; on failure a message is available from
//! [`ponas_last_error_message`] on the same thread. Outputs are written
//! through caller-provided pointers only on success.
//!
//! The header `include/ponas.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ponas::cost_model::LayerCostTable;
use ponas::progressive_builder::{build_table, SyntheticEvaluator};
use ponas::specializer::{self, Selection, Specialized};
use ponas::{
    analysis, AccuracyLossTable, AccuracyTable, Chromosome, Constraint, Error, GaConfig, Metric,
    SynthProfile,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PonasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    Io = 4,
    Validation = 5,
    Panic = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PonasMetric {
    Flops = 0,
    Params = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PonasSelection {
    Pooled = 0,
    ParentsOnly = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PonasCost {
    pub flops: u64,
    pub params: u64,
}

/// Genetic-search settings. Start from [`ponas_ga_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PonasGaConfig {
    pub population: u32,
    pub generations: u32,
    pub mutation_prob: f64,
    pub seed: u64,
    pub repair_attempts: u32,
    pub selection: PonasSelection,
}

/// Opaque accuracy table.
pub struct PonasAccuracyTable(AccuracyTable);

/// Opaque accuracy-loss table.
pub struct PonasLossTable(AccuracyLossTable);

/// Opaque per-layer block cost table.
pub struct PonasCostTable(LayerCostTable);

/// Opaque outcome of a search.
pub struct PonasSpecialization(Specialized);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> PonasStatus {
    match e {
        Error::Infeasible { .. } => PonasStatus::Infeasible,
        Error::Io { .. } => PonasStatus::Io,
        _ => PonasStatus::Validation,
    }
}

struct Fail(PonasStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PonasStatus::NullPointer, format!("{what} is null"))
}

fn guard<F>(f: F) -> PonasStatus
where
    F: FnOnce() -> Result<(), Fail>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PonasStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PonasStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|e| {
        Fail(
            PonasStatus::InvalidArgument,
            format!("{what} is not UTF-8: {e}"),
        )
    })
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = value;
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(PonasStatus::Validation, "string contains NUL".into()))
}

/// Message describing the last failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ponas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Version of the engine as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ponas_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ponas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses an accuracy table document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_accuracy_table_from_json(
    json: *const c_char,
    out: *mut *mut PonasAccuracyTable,
) -> PonasStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        store(out, PonasAccuracyTable(AccuracyTable::from_json(text)?))
    })
}

/// Runs the layer-by-layer table construction against the built-in
/// synthetic evaluator. `threads == 0` uses all cores.
///
/// # Safety
/// `out` must be writable. `best_genes` may be NULL, otherwise it must have
/// room for the number of searchable layers (19).
#[no_mangle]
pub unsafe extern "C" fn ponas_accuracy_table_build_synthetic(
    seed: u64,
    threads: usize,
    out: *mut *mut PonasAccuracyTable,
    best_genes: *mut u32,
) -> PonasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let m = ponas::default_macro();
        let eval = SyntheticEvaluator::new(seed, m.num_searchable());
        let built = build_table(&m, &eval, (threads > 0).then_some(threads))?;
        if !best_genes.is_null() {
            for (i, &g) in built.best_genes.genes().iter().enumerate() {
                *best_genes.add(i) = g as u32;
            }
        }
        store(out, PonasAccuracyTable(built.table))
    })
}

/// Synthetic table with the peaked profile.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_accuracy_table_synthetic(
    seed: u64,
    layers: usize,
    candidates: usize,
    out: *mut *mut PonasAccuracyTable,
) -> PonasStatus {
    guard(|| {
        let t = ponas::synth_table(seed, layers, candidates, SynthProfile::Peaked)?;
        store(out, PonasAccuracyTable(t))
    })
}

/// # Safety
/// `table` must be a live handle; `layers` and `candidates` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_accuracy_table_dims(
    table: *const PonasAccuracyTable,
    layers: *mut usize,
    candidates: *mut usize,
) -> PonasStatus {
    guard(|| {
        let t = &borrow(table, "table")?.0;
        write_out(layers, t.layers())?;
        write_out(candidates, t.candidates())
    })
}

/// # Safety
/// `table` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_accuracy_table_get(
    table: *const PonasAccuracyTable,
    layer: usize,
    candidate: usize,
    out: *mut f64,
) -> PonasStatus {
    guard(|| {
        let t = &borrow(table, "table")?.0;
        if layer >= t.layers() || candidate >= t.candidates() {
            return Err(Fail(
                PonasStatus::InvalidArgument,
                format!(
                    "({layer}, {candidate}) outside {}x{}",
                    t.layers(),
                    t.candidates()
                ),
            ));
        }
        write_out(out, t.get(layer, candidate))
    })
}

/// Serializes the table; free the result with [`ponas_string_free`].
///
/// # Safety
/// `table` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_accuracy_table_to_json(
    table: *const PonasAccuracyTable,
    out: *mut *mut c_char,
) -> PonasStatus {
    guard(|| {
        let t = &borrow(table, "table")?.0;
        write_out(out, into_c_string(t.to_json())?)
    })
}

/// # Safety
/// `table` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_accuracy_table_to_loss(
    table: *const PonasAccuracyTable,
    out: *mut *mut PonasLossTable,
) -> PonasStatus {
    guard(|| {
        let t = &borrow(table, "table")?.0;
        store(out, PonasLossTable(t.to_loss_domain()))
    })
}

/// # Safety
/// `table` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ponas_accuracy_table_free(table: *mut PonasAccuracyTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Parses a table document; accuracy tables are converted to the loss domain.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_loss_table_from_json(
    json: *const c_char,
    out: *mut *mut PonasLossTable,
) -> PonasStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let table = ponas::accuracy_table::parse_table(text)?.into_loss();
        store(out, PonasLossTable(table))
    })
}

/// # Safety
/// `table` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_loss_table_get(
    table: *const PonasLossTable,
    layer: usize,
    candidate: usize,
    out: *mut f64,
) -> PonasStatus {
    guard(|| {
        let t = &borrow(table, "table")?.0;
        if layer >= t.layers() || candidate >= t.candidates() {
            return Err(Fail(
                PonasStatus::InvalidArgument,
                format!(
                    "({layer}, {candidate}) outside {}x{}",
                    t.layers(),
                    t.candidates()
                ),
            ));
        }
        write_out(out, t.get(layer, candidate))
    })
}

/// Writes the maximum loss of each layer into `out` (capacity `cap`) and
/// the number of layers into `len`. Fails if `cap` is too small.
///
/// # Safety
/// `table` must be a live handle; `out` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn ponas_loss_table_importance(
    table: *const PonasLossTable,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> PonasStatus {
    guard(|| {
        let imp = borrow(table, "table")?.0.layer_importance();
        copy_out(&imp, out, cap, len)
    })
}

/// # Safety
/// `table` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ponas_loss_table_free(table: *mut PonasLossTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Parses a `ponas-cost-table-v1` document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_cost_table_from_json(
    json: *const c_char,
    out: *mut *mut PonasCostTable,
) -> PonasStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        store(out, PonasCostTable(LayerCostTable::from_json(text)?))
    })
}

/// # Safety
/// `table` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ponas_cost_table_free(table: *mut PonasCostTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// FLOPs and parameters of a gene vector on the built-in macro-architecture.
///
/// # Safety
/// `genes` must point to `len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_architecture_cost(
    genes: *const u32,
    len: usize,
    out: *mut PonasCost,
) -> PonasStatus {
    guard(|| {
        let genes = slice(genes, len, "genes")?;
        let chromosome = Chromosome::new(genes.iter().map(|&g| g as usize).collect());
        let spec = ponas::decode(&chromosome, &ponas::default_macro())?;
        let c = ponas::architecture_cost(&spec)?;
        write_out(
            out,
            PonasCost {
                flops: c.flops,
                params: c.params,
            },
        )
    })
}

#[no_mangle]
pub extern "C" fn ponas_ga_config_default() -> PonasGaConfig {
    let d = GaConfig::default();
    PonasGaConfig {
        population: d.population as u32,
        generations: d.generations as u32,
        mutation_prob: d.mutation_prob,
        seed: d.seed,
        repair_attempts: d.repair_attempts as u32,
        selection: PonasSelection::Pooled,
    }
}

fn metric(m: PonasMetric) -> Metric {
    match m {
        PonasMetric::Flops => Metric::Flops,
        PonasMetric::Params => Metric::Params,
    }
}

unsafe fn cost_table(costs: *const PonasCostTable) -> Result<LayerCostTable, Fail> {
    match costs.as_ref() {
        Some(c) => Ok(c.0.clone()),
        None => Ok(LayerCostTable::from_macro(&ponas::default_macro())?),
    }
}

/// Genetic search. `costs` may be NULL to price networks with the built-in
/// macro-architecture; `config` may be NULL for the defaults.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_specialize(
    loss: *const PonasLossTable,
    costs: *const PonasCostTable,
    metric_kind: PonasMetric,
    ceiling: u64,
    config: *const PonasGaConfig,
    out: *mut *mut PonasSpecialization,
) -> PonasStatus {
    guard(|| {
        let loss = &borrow(loss, "loss table")?.0;
        let costs = cost_table(costs)?;
        let c = config
            .as_ref()
            .copied()
            .unwrap_or_else(|| ponas_ga_config_default());
        let cfg = GaConfig {
            population: c.population as usize,
            parents_kept: c.population as usize / 2,
            generations: c.generations as usize,
            mutation_prob: c.mutation_prob,
            seed: c.seed,
            repair_attempts: c.repair_attempts as usize,
            selection: match c.selection {
                PonasSelection::Pooled => Selection::Pooled,
                PonasSelection::ParentsOnly => Selection::ParentsOnly,
            },
        };
        let constraint = Constraint::new(metric(metric_kind), ceiling)?;
        let result = specializer::specialize(loss, &costs, constraint, &cfg)?;
        store(out, PonasSpecialization(result))
    })
}

/// Exhaustive search over small spaces. `costs` may be NULL as in
/// [`ponas_specialize`]. Writes the optimal genes into `genes` (capacity
/// `cap`), their count into `len` and the total loss into `loss_out`.
///
/// # Safety
/// Handles must be live; output pointers writable with the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn ponas_brute_force(
    loss: *const PonasLossTable,
    costs: *const PonasCostTable,
    metric_kind: PonasMetric,
    ceiling: u64,
    genes: *mut u32,
    cap: usize,
    len: *mut usize,
    loss_out: *mut f64,
) -> PonasStatus {
    guard(|| {
        let table = &borrow(loss, "loss table")?.0;
        let costs = cost_table(costs)?;
        let constraint = Constraint::new(metric(metric_kind), ceiling)?;
        let (best, micros) = specializer::brute_force(table, &costs, constraint)?;
        let g: Vec<u32> = best.genes().iter().map(|&g| g as u32).collect();
        copy_out(&g, genes, cap, len)?;
        write_out(loss_out, micros as f64 / 1e6)
    })
}

unsafe fn copy_out<T: Copy>(
    src: &[T],
    out: *mut T,
    cap: usize,
    len: *mut usize,
) -> Result<(), Fail> {
    write_out(len, src.len())?;
    if cap < src.len() {
        return Err(Fail(
            PonasStatus::InvalidArgument,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

/// Best chromosome found. `len` receives the gene count even when `cap` is
/// too small, so callers can size the buffer with a first call.
///
/// # Safety
/// `result` must be a live handle; `genes` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn ponas_specialization_genes(
    result: *const PonasSpecialization,
    genes: *mut u32,
    cap: usize,
    len: *mut usize,
) -> PonasStatus {
    guard(|| {
        let r = &borrow(result, "result")?.0;
        let g: Vec<u32> = r.chromosome.genes().iter().map(|&g| g as u32).collect();
        copy_out(&g, genes, cap, len)
    })
}

/// # Safety
/// `result` must be a live handle; `loss` and `cost` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_specialization_summary(
    result: *const PonasSpecialization,
    loss: *mut f64,
    cost: *mut PonasCost,
) -> PonasStatus {
    guard(|| {
        let r = &borrow(result, "result")?.0;
        write_out(loss, r.loss())?;
        write_out(
            cost,
            PonasCost {
                flops: r.cost.flops,
                params: r.cost.params,
            },
        )
    })
}

/// Per-generation best and mean loss. Either buffer may be NULL.
///
/// # Safety
/// `result` must be a live handle; non-NULL buffers need room for `cap`.
#[no_mangle]
pub unsafe extern "C" fn ponas_specialization_curve(
    result: *const PonasSpecialization,
    best: *mut f64,
    mean: *mut f64,
    cap: usize,
    len: *mut usize,
) -> PonasStatus {
    guard(|| {
        let r = &borrow(result, "result")?.0;
        let records = &r.log.records;
        write_out(len, records.len())?;
        if cap < records.len() {
            return Err(Fail(
                PonasStatus::InvalidArgument,
                format!("buffer holds {cap} values, {} needed", records.len()),
            ));
        }
        for (i, rec) in records.iter().enumerate() {
            if !best.is_null() {
                *best.add(i) = rec.best_loss;
            }
            if !mean.is_null() {
                *mean.add(i) = rec.mean_loss;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `result` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ponas_specialization_free(result: *mut PonasSpecialization) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Kendall's tau-b of two samples of length `n`.
///
/// # Safety
/// `xs` and `ys` must point to `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ponas_kendall_tau(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    out: *mut f64,
) -> PonasStatus {
    guard(|| {
        let xs = slice(xs, n, "xs")?.to_vec();
        let ys = slice(ys, n, "ys")?.to_vec();
        let samples = analysis::PairedSamples::new(xs, ys)?;
        write_out(out, analysis::kendall_tau(&samples)?)
    })
}
