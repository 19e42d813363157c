//! C ABI over `cgexcite`: mel filterbanks, excitation spectrograms and the
//! conditional gated LSTM cell, exposed through opaque handles.
//!
//! Every fallible function returns a [`CgxStatus`]. On failure a message is
//! kept per thread and can be fetched with [`cgx_last_error`]. Handles are
//! created by `*_new` functions and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cgexcite::dsp::{build_mel_filterbank, FrameParams, MelFilterbank};
use cgexcite::excitation::{
    generate_excitation, ExcitationConfig, ExcitationSpectrogram, UnvoicedDivisor,
};
use cgexcite::features::{EnergyContour, PitchContour};
use cgexcite::nn::{CellState, CglstmParams, GateComposition, Parameters, Recurrent};
use cgexcite::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgxStatus {
    CgxOk = 0,
    CgxNullPointer = 1,
    CgxDomain = 2,
    CgxConfig = 3,
    CgxShape = 4,
    CgxEmptyInput = 5,
    CgxDegenerate = 6,
    CgxNumeric = 7,
    CgxBufferTooSmall = 8,
    CgxIo = 9,
    CgxFormat = 10,
    CgxPanic = 11,
}

impl From<&Error> for CgxStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => CgxStatus::CgxDomain,
            Error::Config(_) => CgxStatus::CgxConfig,
            Error::Shape { .. } => CgxStatus::CgxShape,
            Error::EmptyInput(_) => CgxStatus::CgxEmptyInput,
            Error::Degenerate(_) => CgxStatus::CgxDegenerate,
            Error::Numeric(_) | Error::Training { .. } => CgxStatus::CgxNumeric,
            Error::UnsupportedFormat { .. } | Error::Parse { .. } => CgxStatus::CgxFormat,
            Error::Io { .. } => CgxStatus::CgxIo,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CgxStatus, msg: impl Into<String>) -> CgxStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), CgxStatus>) -> CgxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CgxStatus::CgxOk,
        Ok(Err(s)) => s,
        Err(_) => fail(CgxStatus::CgxPanic, "internal panic"),
    }
}

fn lift<T>(r: cgexcite::Result<T>) -> Result<T, CgxStatus> {
    r.map_err(|e| fail(CgxStatus::from(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), CgxStatus> {
    if p.is_null() {
        Err(fail(CgxStatus::CgxNullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be valid for `len` reads when non-null.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], CgxStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be valid for `len` writes when non-null.
unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], CgxStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), CgxStatus> {
    if dst.len() < src.len() {
        return Err(fail(
            CgxStatus::CgxBufferTooSmall,
            format!("buffer holds {} values, {} needed", dst.len(), src.len()),
        ));
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL,
/// or 0 when no error was recorded.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn cgx_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Framing parameters, mirroring the library defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CgxFrameParams {
    pub sample_rate: u32,
    pub hop: usize,
    pub window: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl From<FrameParams> for CgxFrameParams {
    fn from(p: FrameParams) -> Self {
        CgxFrameParams {
            sample_rate: p.sample_rate,
            hop: p.hop,
            window: p.window,
            n_fft: p.n_fft,
            n_mels: p.n_mels,
            fmin: p.fmin,
            fmax: p.fmax,
        }
    }
}

impl From<CgxFrameParams> for FrameParams {
    fn from(p: CgxFrameParams) -> Self {
        FrameParams {
            sample_rate: p.sample_rate,
            hop: p.hop,
            window: p.window,
            n_fft: p.n_fft,
            n_mels: p.n_mels,
            fmin: p.fmin,
            fmax: p.fmax,
        }
    }
}

/// 16 kHz, hop 200, window 800, 1024-point FFT, 80 mels over 0..8000 Hz.
#[no_mangle]
pub extern "C" fn cgx_frame_params_default() -> CgxFrameParams {
    FrameParams::default().into()
}

/// Opaque mel filterbank.
pub struct CgxFilterbank(MelFilterbank);

/// Opaque mel excitation spectrogram.
pub struct CgxExcitation(ExcitationSpectrogram);

/// Opaque conditional gated LSTM cell.
pub struct CgxCglstm(CglstmParams);

/// # Safety
/// `params` must point to a valid struct and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn cgx_filterbank_new(
    params: *const CgxFrameParams,
    out: *mut *mut CgxFilterbank,
) -> CgxStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        let fb = lift(build_mel_filterbank(&FrameParams::from(*params)))?;
        *out = Box::into_raw(Box::new(CgxFilterbank(fb)));
        Ok(())
    })
}

/// # Safety
/// `fb` must come from [`cgx_filterbank_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cgx_filterbank_free(fb: *mut CgxFilterbank) {
    if !fb.is_null() {
        drop(Box::from_raw(fb));
    }
}

/// Writes the matrix shape, `n_bins` rows by `n_mels` columns.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgx_filterbank_shape(
    fb: *const CgxFilterbank,
    n_bins: *mut usize,
    n_mels: *mut usize,
) -> CgxStatus {
    guard(|| {
        non_null(fb, "filterbank")?;
        non_null(n_bins, "n_bins")?;
        non_null(n_mels, "n_mels")?;
        *n_bins = (*fb).0.n_bins();
        *n_mels = (*fb).0.n_mels();
        Ok(())
    })
}

/// Copies the row-major `n_bins x n_mels` weights into `out`.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cgx_filterbank_weights(
    fb: *const CgxFilterbank,
    out: *mut f64,
    len: usize,
) -> CgxStatus {
    guard(|| {
        non_null(fb, "filterbank")?;
        copy_out((*fb).0.weights().as_slice(), slice_mut(out, len, "out")?)
    })
}

/// Builds the mel excitation of `n_frames` pitch (Hz, 0 = unvoiced) and
/// energy values. `literal_divisor` divides unvoiced energy by `n_fft`
/// instead of the bin count.
///
/// # Safety
/// `f0` and `energy` must be valid for `n_frames` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cgx_excitation_new(
    fb: *const CgxFilterbank,
    f0: *const f64,
    energy: *const f64,
    n_frames: usize,
    literal_divisor: bool,
    out: *mut *mut CgxExcitation,
) -> CgxStatus {
    guard(|| {
        non_null(fb, "filterbank")?;
        non_null(out, "out")?;
        let fb = &(*fb).0;
        let params = *fb.params();
        let pitch = lift(PitchContour::new(slice(f0, n_frames, "f0")?.to_vec(), params))?;
        let energy = lift(EnergyContour::new(slice(energy, n_frames, "energy")?.to_vec(), params))?;
        let config = ExcitationConfig {
            unvoiced_divisor: if literal_divisor {
                UnvoicedDivisor::Fft
            } else {
                UnvoicedDivisor::Bins
            },
        };
        let exc = lift(generate_excitation(&pitch, &energy, fb, &config))?;
        *out = Box::into_raw(Box::new(CgxExcitation(exc)));
        Ok(())
    })
}

/// # Safety
/// `exc` must come from [`cgx_excitation_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cgx_excitation_free(exc: *mut CgxExcitation) {
    if !exc.is_null() {
        drop(Box::from_raw(exc));
    }
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgx_excitation_shape(
    exc: *const CgxExcitation,
    n_frames: *mut usize,
    n_mels: *mut usize,
) -> CgxStatus {
    guard(|| {
        non_null(exc, "excitation")?;
        non_null(n_frames, "n_frames")?;
        non_null(n_mels, "n_mels")?;
        let data = (*exc).0.mel().data();
        *n_frames = data.rows();
        *n_mels = data.cols();
        Ok(())
    })
}

/// Copies the row-major `n_frames x n_mels` values into `out`.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cgx_excitation_data(
    exc: *const CgxExcitation,
    out: *mut f64,
    len: usize,
) -> CgxStatus {
    guard(|| {
        non_null(exc, "excitation")?;
        copy_out((*exc).0.mel().data().as_slice(), slice_mut(out, len, "out")?)
    })
}

/// Creates a cell with seeded content weights and control projections at
/// the LSTM reduction point (`W = 0`, `b = 1`). `product_gates` selects the
/// `σ(a)·σ(m)` gate composition instead of `σ(a·m)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cgx_cglstm_new(
    hidden: usize,
    input: usize,
    control: usize,
    seed: u64,
    product_gates: bool,
    out: *mut *mut CgxCglstm,
) -> CgxStatus {
    guard(|| {
        non_null(out, "out")?;
        if hidden == 0 || input == 0 || control == 0 {
            return Err(fail(CgxStatus::CgxConfig, "cell dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = CglstmParams::init(hidden, input, control, &mut rng);
        if product_gates {
            p = p.with_composition(GateComposition::Product);
        }
        *out = Box::into_raw(Box::new(CgxCglstm(p)));
        Ok(())
    })
}

/// # Safety
/// `cell` must come from [`cgx_cglstm_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cgx_cglstm_free(cell: *mut CgxCglstm) {
    if !cell.is_null() {
        drop(Box::from_raw(cell));
    }
}

/// Writes the hidden, input and control sizes and the parameter count.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgx_cglstm_dims(
    cell: *const CgxCglstm,
    hidden: *mut usize,
    input: *mut usize,
    control: *mut usize,
    param_count: *mut usize,
) -> CgxStatus {
    guard(|| {
        non_null(cell, "cell")?;
        for (p, what) in [(hidden, "hidden"), (input, "input"), (control, "control"), (param_count, "param_count")] {
            non_null(p, what)?;
        }
        let c = &(*cell).0;
        *hidden = Recurrent::hidden(c);
        *input = Recurrent::input_dim(c);
        *control = Recurrent::control_dim(c);
        *param_count = c.param_count();
        Ok(())
    })
}

/// Overwrites one control projection (`gate` 0 = forget, 1 = input,
/// 2 = output) with a row-major `hidden x control` weight matrix and a
/// `hidden` bias.
///
/// # Safety
/// `w` and `b` must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cgx_cglstm_set_control(
    cell: *mut CgxCglstm,
    gate: u32,
    w: *const f64,
    w_len: usize,
    b: *const f64,
    b_len: usize,
) -> CgxStatus {
    guard(|| {
        non_null(cell, "cell")?;
        let c = &mut (*cell).0;
        let h = Recurrent::hidden(c);
        let k = Recurrent::control_dim(c);
        if w_len != h * k || b_len != h {
            return Err(fail(
                CgxStatus::CgxShape,
                format!("expected {} weights and {h} biases, got {w_len} and {b_len}", h * k),
            ));
        }
        let (w, b) = (slice(w, w_len, "w")?, slice(b, b_len, "b")?);
        let dense = match gate {
            0 => &mut c.control_forget,
            1 => &mut c.control_input,
            2 => &mut c.control_output,
            _ => return Err(fail(CgxStatus::CgxConfig, format!("gate index {gate} is not 0, 1 or 2"))),
        };
        dense.w.as_mut_slice().copy_from_slice(w);
        dense.b.copy_from_slice(b);
        Ok(())
    })
}

/// One step. `h` and `c` hold the state on entry and receive the new state.
///
/// # Safety
/// `h` and `c` must be valid for `hidden` values, `x` for `input`,
/// `control` for the control size.
#[no_mangle]
pub unsafe extern "C" fn cgx_cglstm_step(
    cell: *const CgxCglstm,
    h: *mut f64,
    c: *mut f64,
    x: *const f64,
    control: *const f64,
) -> CgxStatus {
    guard(|| {
        non_null(cell, "cell")?;
        let p = &(*cell).0;
        let hd = Recurrent::hidden(p);
        let h = slice_mut(h, hd, "h")?;
        let c = slice_mut(c, hd, "c")?;
        let x = slice(x, Recurrent::input_dim(p), "x")?;
        let ctl = slice(control, Recurrent::control_dim(p), "control")?;
        let state = CellState {
            h: h.to_vec(),
            cell: c.to_vec(),
        };
        let next = lift(p.step_cached(&state, x, ctl))?;
        h.copy_from_slice(next.h());
        c.copy_from_slice(next.cell());
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cgx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

