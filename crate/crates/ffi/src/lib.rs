//! C ABI over the `qperc` library.
//!
//! Objects are opaque handles created by `qp_*_new` style functions and
//! released with the matching `qp_*_free`. Every fallible function returns a
//! [`QpStatus`]; on failure `qp_last_error` describes the problem for the
//! calling thread. Panics are caught at the boundary and reported as
//! [`QpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use qperc::cluster_dynamics::{verify_correspondence, InitMode};
use qperc::entanglement::{eof_two_qubit, theorem1_bound};
use qperc::error::Error;
use qperc::lattice::{percolation_lattice, LatticeSpec, PercolationLattice};
use qperc::percolation::{branching_upper_tree, tau_estimate, NoiseRealization};
use qperc::quantum::{
    read_density_file, reduced_density_matrix, write_density_file, DensityMatrix, GateOp,
    NoiseChannelSpec, C64,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Capacity = 4,
    Validation = 5,
    Method = 6,
    Io = 7,
    Panic = 8,
    Internal = 9,
}

/// Noise channel selector for [`qp_density_apply_noise`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpNoise {
    /// Computational-basis collapse with probability `strength`.
    Collapse = 0,
    /// Replacement by the maximally mixed state with probability `strength`.
    Depolarize = 1,
    /// Coherence damping by `exp(-strength)`.
    Dephase = 2,
}

/// Opaque percolation lattice.
pub struct QpLattice(PercolationLattice);

/// Opaque density matrix.
pub struct QpDensity(DensityMatrix);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(QpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParameter(_) | Error::Config(_) | Error::Format(_) => {
                QpStatus::InvalidArgument
            }
            Error::OutOfRange { .. } => QpStatus::OutOfRange,
            Error::Capacity(_) => QpStatus::Capacity,
            Error::Shape(_) | Error::Schedule(_) | Error::Validation(_) => QpStatus::Validation,
            Error::Method(_) => QpStatus::Method,
            Error::Io(_) => QpStatus::Io,
            _ => QpStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(QpStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, catching panics and recording the error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            QpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            QpStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn path(ptr: *const c_char) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(QpStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn complex_pairs(re_im: &[f64]) -> Vec<C64> {
    re_im
        .chunks_exact(2)
        .map(|p| C64::new(p[0], p[1]))
        .collect()
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build the contracted percolation lattice of a `sides[0] x ... x
/// sides[dim-1]` register run for `steps` steps.
///
/// # Safety
/// `sides` must point to `dim` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_lattice_new(
    sides: *const usize,
    dim: usize,
    steps: usize,
    out_lattice: *mut *mut QpLattice,
) -> QpStatus {
    guard(|| {
        let sides = slice(sides, dim, "sides")?.to_vec();
        let slot = out(out_lattice, "out_lattice")?;
        let spec = LatticeSpec::new(sides, steps)?;
        *slot = Box::into_raw(Box::new(QpLattice(percolation_lattice(&spec)?)));
        Ok(())
    })
}

/// Release a lattice; null is ignored.
///
/// # Safety
/// `lattice` must come from [`qp_lattice_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qp_lattice_free(lattice: *mut QpLattice) {
    if !lattice.is_null() {
        drop(Box::from_raw(lattice));
    }
}

/// Node and percolation-edge counts.
///
/// # Safety
/// `lattice` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_lattice_size(
    lattice: *const QpLattice,
    out_nodes: *mut usize,
    out_edges: *mut usize,
) -> QpStatus {
    guard(|| {
        let l = &handle(lattice, "lattice")?.0;
        *out(out_nodes, "out_nodes")? = l.node_count();
        *out(out_edges, "out_edges")? = l.edge_count();
        Ok(())
    })
}

/// Node holding `particle` at time `t`.
///
/// # Safety
/// `lattice` must be a live handle; `out_node` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_lattice_node_of(
    lattice: *const QpLattice,
    particle: usize,
    t: usize,
    out_node: *mut usize,
) -> QpStatus {
    guard(|| {
        let l = &handle(lattice, "lattice")?.0;
        let spec = l
            .spec()
            .ok_or_else(|| Failure(QpStatus::Internal, "no spec".into()))?;
        if particle >= spec.particles() || t > spec.steps() {
            return Err(Failure(
                QpStatus::OutOfRange,
                format!("(particle {particle}, t {t}) outside the lattice"),
            ));
        }
        *out(out_node, "out_node")? = l.node_of(particle, t);
        Ok(())
    })
}

/// Estimate connection probabilities for `npairs` node pairs given as
/// `pairs[2k], pairs[2k+1]`. `out_tau` receives `npairs` values;
/// `out_stderr` and `out_hits` may be null.
///
/// # Safety
/// All non-null pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn qp_tau_estimate(
    lattice: *const QpLattice,
    p: f64,
    pairs: *const usize,
    npairs: usize,
    samples: u64,
    seed: u64,
    out_tau: *mut f64,
    out_stderr: *mut f64,
    out_hits: *mut u64,
) -> QpStatus {
    guard(|| {
        let l = &handle(lattice, "lattice")?.0;
        let flat = slice(pairs, 2 * npairs, "pairs")?;
        if out_tau.is_null() && npairs > 0 {
            return Err(null("out_tau"));
        }
        let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let est = tau_estimate(l, p, &pairs, samples, seed)?;
        for (k, e) in est.iter().enumerate() {
            *out_tau.add(k) = e.tau;
            if !out_stderr.is_null() {
                *out_stderr.add(k) = e.stderr;
            }
            if !out_hits.is_null() {
                *out_hits.add(k) = e.hits;
            }
        }
        Ok(())
    })
}

/// Check cluster dynamics against percolation connectivity for one noise
/// pattern. `open` holds `n * steps` bytes, nonzero for an open edge
/// `t * n + x`. `giant` selects the single-cluster start.
///
/// # Safety
/// `sides` must hold `dim` values, `open` the stated number of bytes.
#[no_mangle]
pub unsafe extern "C" fn qp_verify_correspondence(
    sides: *const usize,
    dim: usize,
    steps: usize,
    open: *const u8,
    open_len: usize,
    giant: bool,
    out_holds: *mut bool,
) -> QpStatus {
    guard(|| {
        let spec = LatticeSpec::new(slice(sides, dim, "sides")?.to_vec(), steps)?;
        let bits: Vec<bool> = slice(open, open_len, "open")?
            .iter()
            .map(|&b| b != 0)
            .collect();
        let r = NoiseRealization::from_bits(f64::NAN, 0, 0, bits);
        let init = if giant {
            InitMode::Giant
        } else {
            InitMode::Singletons
        };
        *out(out_holds, "out_holds")? = verify_correspondence(&spec, &r, init)?.holds;
        Ok(())
    })
}

/// `|0...0><0...0|` on `qubits` qubits.
///
/// # Safety
/// `out_density` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_density_zero(
    qubits: usize,
    out_density: *mut *mut QpDensity,
) -> QpStatus {
    guard(|| {
        let slot = out(out_density, "out_density")?;
        *slot = Box::into_raw(Box::new(QpDensity(DensityMatrix::zero_state(qubits)?)));
        Ok(())
    })
}

/// Validated density matrix from `2 * 4^qubits` row-major `(re, im)` pairs.
///
/// # Safety
/// `re_im` must hold `re_im_len` doubles; `out_density` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_density_from_entries(
    qubits: usize,
    re_im: *const f64,
    re_im_len: usize,
    out_density: *mut *mut QpDensity,
) -> QpStatus {
    guard(|| {
        let data = complex_pairs(slice(re_im, re_im_len, "re_im")?);
        let slot = out(out_density, "out_density")?;
        *slot = Box::into_raw(Box::new(QpDensity(DensityMatrix::from_entries(
            qubits, data,
        )?)));
        Ok(())
    })
}

/// Read the binary density-matrix format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_density` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_density_read(
    path_c: *const c_char,
    out_density: *mut *mut QpDensity,
) -> QpStatus {
    guard(|| {
        let p = path(path_c)?;
        let slot = out(out_density, "out_density")?;
        *slot = Box::into_raw(Box::new(QpDensity(read_density_file(&p)?)));
        Ok(())
    })
}

/// Write the binary density-matrix format.
///
/// # Safety
/// `density` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qp_density_write(
    density: *const QpDensity,
    path_c: *const c_char,
) -> QpStatus {
    guard(|| {
        let d = &handle(density, "density")?.0;
        write_density_file(&path(path_c)?, d)?;
        Ok(())
    })
}

/// Release a density matrix; null is ignored.
///
/// # Safety
/// `density` must come from a `qp_density_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn qp_density_free(density: *mut QpDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// Number of qubits.
///
/// # Safety
/// `density` must be live; `out_qubits` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_density_qubits(
    density: *const QpDensity,
    out_qubits: *mut usize,
) -> QpStatus {
    guard(|| {
        *out(out_qubits, "out_qubits")? = handle(density, "density")?.0.qubits();
        Ok(())
    })
}

/// Copy the entries as row-major `(re, im)` pairs into `re_im`, which must
/// hold `2 * 4^qubits` doubles.
///
/// # Safety
/// `re_im` must hold `re_im_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_density_entries(
    density: *const QpDensity,
    re_im: *mut f64,
    re_im_len: usize,
) -> QpStatus {
    guard(|| {
        let d = &handle(density, "density")?.0;
        let needed = 2 * d.entries().len();
        if re_im_len < needed {
            return Err(Failure(
                QpStatus::InvalidArgument,
                format!("buffer holds {re_im_len} doubles, {needed} needed"),
            ));
        }
        if re_im.is_null() {
            return Err(null("re_im"));
        }
        for (k, z) in d.entries().iter().enumerate() {
            *re_im.add(2 * k) = z.re;
            *re_im.add(2 * k + 1) = z.im;
        }
        Ok(())
    })
}

/// Apply a 2x2 unitary (row-major `(re, im)`, 8 doubles) to `qubit`.
///
/// # Safety
/// `density` must be live; `u_re_im` must hold 8 doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_density_apply_single(
    density: *mut QpDensity,
    qubit: usize,
    u_re_im: *const f64,
) -> QpStatus {
    guard(|| {
        let d = out(density, "density")?;
        let u: [C64; 4] = complex_pairs(slice(u_re_im, 8, "u")?)
            .try_into()
            .expect("8 doubles");
        d.0.apply(&GateOp::Single { qubit, u })?;
        Ok(())
    })
}

/// Apply a 4x4 unitary (row-major `(re, im)`, 32 doubles) to `(q0, q1)`,
/// `q0` being the more significant index bit.
///
/// # Safety
/// `density` must be live; `u_re_im` must hold 32 doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_density_apply_two(
    density: *mut QpDensity,
    q0: usize,
    q1: usize,
    u_re_im: *const f64,
) -> QpStatus {
    guard(|| {
        let d = out(density, "density")?;
        let u: [C64; 16] = complex_pairs(slice(u_re_im, 32, "u")?)
            .try_into()
            .expect("32 doubles");
        d.0.apply(&GateOp::Two {
            qubits: [q0, q1],
            u,
        })?;
        Ok(())
    })
}

/// Apply a single-qubit noise channel.
///
/// # Safety
/// `density` must be live.
#[no_mangle]
pub unsafe extern "C" fn qp_density_apply_noise(
    density: *mut QpDensity,
    model: QpNoise,
    strength: f64,
    qubit: usize,
) -> QpStatus {
    guard(|| {
        let d = out(density, "density")?;
        let spec = match model {
            QpNoise::Collapse => NoiseChannelSpec::collapse(strength),
            QpNoise::Depolarize => NoiseChannelSpec::depolarize(strength),
            QpNoise::Dephase => NoiseChannelSpec::dephase(strength),
        };
        d.0.apply_noise(&spec, qubit)?;
        Ok(())
    })
}

/// Reduced state on `subset` (in the given order) as a new handle.
///
/// # Safety
/// `density` must be live; `subset` must hold `k` values; `out_density`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_density_reduce(
    density: *const QpDensity,
    subset: *const usize,
    k: usize,
    out_density: *mut *mut QpDensity,
) -> QpStatus {
    guard(|| {
        let d = &handle(density, "density")?.0;
        let reduced = reduced_density_matrix(d, slice(subset, k, "subset")?)?;
        *out(out_density, "out_density")? = Box::into_raw(Box::new(QpDensity(reduced)));
        Ok(())
    })
}

/// Closed-form entanglement of formation (ebits) of a two-qubit state.
///
/// # Safety
/// `density` must be live; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_eof_two_qubit(
    density: *const QpDensity,
    out_value: *mut f64,
) -> QpStatus {
    guard(|| {
        let d = &handle(density, "density")?.0;
        *out(out_value, "out_value")? = eof_two_qubit(d)?.value;
        Ok(())
    })
}

/// Survival to `depth` generations of the Binomial(3, p) branching process.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_branching_survival(
    p: f64,
    depth: usize,
    out_value: *mut f64,
) -> QpStatus {
    guard(|| {
        *out(out_value, "out_value")? = branching_upper_tree(p, depth)?;
        Ok(())
    })
}

/// Entanglement bound between sets of `size_a` and `size_b` qubits at
/// `distance`, given correlation length `xi`. With `giant` the correction
/// for a single-cluster start at time `t` on `n` particles is added.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_theorem1_bound(
    size_a: usize,
    size_b: usize,
    distance: f64,
    xi: f64,
    giant: bool,
    t: f64,
    n: usize,
    out_value: *mut f64,
) -> QpStatus {
    guard(|| {
        let correction = giant.then_some((t, n));
        *out(out_value, "out_value")? = theorem1_bound(size_a, size_b, distance, xi, correction)?;
        Ok(())
    })
}
