use std::ffi::{c_char, CStr};
use std::ptr;

use cgexcite::dsp::{build_mel_filterbank, FrameParams};
use cgexcite::nn::{lstm_step, CellState, CglstmParams, Recurrent};
use cgexcite_ffi::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        cgx_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn default_filterbank() -> *mut CgxFilterbank {
    let params = cgx_frame_params_default();
    let mut fb = ptr::null_mut();
    assert_eq!(unsafe { cgx_filterbank_new(&params, &mut fb) }, CgxStatus::CgxOk);
    fb
}

#[test]
fn filterbank_matches_library() {
    let fb = default_filterbank();
    let (mut bins, mut mels) = (0, 0);
    unsafe {
        assert_eq!(cgx_filterbank_shape(fb, &mut bins, &mut mels), CgxStatus::CgxOk);
        assert_eq!((bins, mels), (513, 80));
        let mut w = vec![0.0; bins * mels];
        assert_eq!(cgx_filterbank_weights(fb, w.as_mut_ptr(), w.len()), CgxStatus::CgxOk);
        let lib = build_mel_filterbank(&FrameParams::default()).unwrap();
        assert_eq!(w, lib.weights().as_slice());

        let mut short = vec![0.0; 10];
        let status = cgx_filterbank_weights(fb, short.as_mut_ptr(), short.len());
        assert_eq!(status, CgxStatus::CgxBufferTooSmall);
        assert!(last_error().contains("41040"));
        cgx_filterbank_free(fb);
    }
}

#[test]
fn invalid_params_report_config_error() {
    let mut params = cgx_frame_params_default();
    params.n_mels = 0;
    let mut fb = ptr::null_mut();
    let status = unsafe { cgx_filterbank_new(&params, &mut fb) };
    assert_eq!(status, CgxStatus::CgxConfig);
    assert!(fb.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { cgx_filterbank_new(ptr::null(), &mut fb) },
        CgxStatus::CgxNullPointer
    );
}

#[test]
fn excitation_conserves_energy_through_abi() {
    let fb = default_filterbank();
    let f0 = [0.0, 120.0, 250.0];
    let energy = [3.0, 10.0, 0.5];
    let mut exc = ptr::null_mut();
    unsafe {
        let status = cgx_excitation_new(fb, f0.as_ptr(), energy.as_ptr(), 3, false, &mut exc);
        assert_eq!(status, CgxStatus::CgxOk);
        let (mut frames, mut mels) = (0, 0);
        assert_eq!(cgx_excitation_shape(exc, &mut frames, &mut mels), CgxStatus::CgxOk);
        assert_eq!((frames, mels), (3, 80));
        let mut data = vec![0.0; frames * mels];
        assert_eq!(cgx_excitation_data(exc, data.as_mut_ptr(), data.len()), CgxStatus::CgxOk);
        assert!(data.iter().all(|&v| v >= 0.0));

        let mut literal = ptr::null_mut();
        let status = cgx_excitation_new(fb, f0.as_ptr(), energy.as_ptr(), 3, true, &mut literal);
        assert_eq!(status, CgxStatus::CgxOk);
        let mut lit = vec![0.0; frames * mels];
        cgx_excitation_data(literal, lit.as_mut_ptr(), lit.len());
        for k in 0..mels {
            if data[k] > 0.0 {
                assert!((lit[k] / data[k] - 513.0 / 1024.0).abs() < 1e-12);
            }
        }
        assert_eq!(&lit[mels..], &data[mels..]);

        let bad = [9000.0];
        let mut none = ptr::null_mut();
        let status = cgx_excitation_new(fb, bad.as_ptr(), energy.as_ptr(), 1, false, &mut none);
        assert_eq!(status, CgxStatus::CgxDomain);
        assert!(none.is_null());

        cgx_excitation_free(literal);
        cgx_excitation_free(exc);
        cgx_filterbank_free(fb);
    }
}

#[test]
fn cglstm_cell_starts_at_lstm_and_responds_to_control() {
    let (hidden, input, control, seed) = (4, 3, 2, 11);
    let mut cell = ptr::null_mut();
    unsafe {
        assert_eq!(cgx_cglstm_new(hidden, input, control, seed, false, &mut cell), CgxStatus::CgxOk);
        let (mut h, mut i, mut c, mut n) = (0, 0, 0, 0);
        cgx_cglstm_dims(cell, &mut h, &mut i, &mut c, &mut n);
        assert_eq!((h, i, c), (4, 3, 2));
        assert_eq!(n, 4 * (4 * 7 + 4) + 3 * (4 * 2 + 4));

        let mut lib = CglstmParams::init(hidden, input, control, &mut ChaCha8Rng::seed_from_u64(seed));
        let x = [0.3, -0.7, 0.2];
        let ctl = [1.5, -2.0];
        let mut hs = [0.1, -0.2, 0.3, 0.0];
        let mut cs = [0.0, 0.5, -0.5, 0.2];
        let state = CellState { h: hs.to_vec(), cell: cs.to_vec() };
        assert_eq!(cgx_cglstm_step(cell, hs.as_mut_ptr(), cs.as_mut_ptr(), x.as_ptr(), ctl.as_ptr()), CgxStatus::CgxOk);
        let reference = lstm_step(&lib.content, &state, &x).unwrap();
        assert_eq!(hs.to_vec(), reference.h);
        assert_eq!(cs.to_vec(), reference.cell);

        let w = [0.5; 8];
        let b = [0.2; 4];
        assert_eq!(cgx_cglstm_set_control(cell, 1, w.as_ptr(), 8, b.as_ptr(), 4), CgxStatus::CgxOk);
        let mut hs2 = state.h.clone();
        let mut cs2 = state.cell.clone();
        cgx_cglstm_step(cell, hs2.as_mut_ptr(), cs2.as_mut_ptr(), x.as_ptr(), ctl.as_ptr());
        assert_ne!(hs2, reference.h);
        lib.control_input.w.as_mut_slice().copy_from_slice(&w);
        lib.control_input.b.copy_from_slice(&b);
        let conditioned = lib.step_cached(&state, &x, &ctl).unwrap();
        assert_eq!(hs2, conditioned.h());
        assert_eq!(cs2, conditioned.cell());

        assert_eq!(cgx_cglstm_set_control(cell, 3, w.as_ptr(), 8, b.as_ptr(), 4), CgxStatus::CgxConfig);
        assert_eq!(cgx_cglstm_set_control(cell, 0, w.as_ptr(), 7, b.as_ptr(), 4), CgxStatus::CgxShape);
        cgx_cglstm_free(cell);
    }
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { cgx_cglstm_new(0, 3, 2, 1, false, &mut none) }, CgxStatus::CgxConfig);
}

#[test]
fn free_accepts_null_and_version_is_set() {
    unsafe {
        cgx_filterbank_free(ptr::null_mut());
        cgx_excitation_free(ptr::null_mut());
        cgx_cglstm_free(ptr::null_mut());
        let v = CStr::from_ptr(cgx_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
