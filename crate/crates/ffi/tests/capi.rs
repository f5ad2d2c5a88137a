use std::ffi::{CStr, CString};
use std::f64::consts::PI;
use std::ptr;

use uasep_ffi::*;

fn signal(samples: &[f64], rate: u32) -> *mut UasepSignal {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { uasep_signal_new(samples.as_ptr(), samples.len(), rate, &mut out) }, UasepStatus::Ok);
    out
}

fn samples(s: *const UasepSignal) -> Vec<f64> {
    let mut len = 0;
    assert_eq!(unsafe { uasep_signal_info(s, &mut len, ptr::null_mut()) }, UasepStatus::Ok);
    let mut buf = vec![0.0; len];
    assert_eq!(unsafe { uasep_signal_copy(s, buf.as_mut_ptr(), len) }, UasepStatus::Ok);
    buf
}

fn last_error() -> String {
    let p = uasep_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tone(freq: f64, len: usize, rate: u32) -> Vec<f64> {
    (0..len).map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
}

#[test]
fn stft_round_trip_through_handles() {
    let x: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
    let s = signal(&x, 8000);
    let mut spec = ptr::null_mut();
    assert_eq!(unsafe { uasep_stft(s, 32.0, 8.0, 0, &mut spec) }, UasepStatus::Ok);
    let (mut frames, mut bins) = (0, 0);
    assert_eq!(unsafe { uasep_spectrogram_shape(spec, &mut frames, &mut bins) }, UasepStatus::Ok);
    assert_eq!(bins, 129);
    assert!(frames > 0);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { uasep_istft(spec, &mut back) }, UasepStatus::Ok);
    let y = samples(back);
    assert_eq!(y.len(), x.len());
    let err: f64 = x[256..3744].iter().zip(&y[256..3744]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");
    unsafe {
        uasep_istft(ptr::null(), &mut back);
        uasep_signal_free(back);
        uasep_spectrogram_free(spec);
        uasep_signal_free(s);
    }
}

#[test]
fn null_and_invalid_arguments_report_errors() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { uasep_signal_new(ptr::null(), 10, 8000, &mut out) }, UasepStatus::NullPointer);
    assert!(last_error().contains("samples"));
    assert!(out.is_null());

    let s = signal(&[0.0; 64], 8000);
    let mut spec = ptr::null_mut();
    assert_eq!(unsafe { uasep_stft(s, 32.0, 8.0, 9, &mut spec) }, UasepStatus::InvalidArgument);
    assert!(last_error().contains("window code 9"));

    let mut small = [0.0; 4];
    assert_eq!(unsafe { uasep_signal_copy(s, small.as_mut_ptr(), 4) }, UasepStatus::BufferTooSmall);
    assert!(last_error().contains("64"));

    let bad = CString::new("{\"k_clusters\": 0}").unwrap();
    let mut sep = ptr::null_mut();
    assert_eq!(unsafe { uasep_separator_new(bad.as_ptr(), &mut sep) }, UasepStatus::Format);
    let deep = CString::new("{\"method\": \"deep\"}").unwrap();
    assert_eq!(unsafe { uasep_separator_new(deep.as_ptr(), &mut sep) }, UasepStatus::Config);
    assert!(last_error().contains("checkpoint"));
    unsafe {
        uasep_signal_free(s);
        uasep_signal_free(ptr::null_mut());
    }
}

#[test]
fn classic_separation_of_two_tones() {
    let rate = 8000;
    let (a, b) = (tone(500.0, 8000, rate), tone(3000.0, 8000, rate));
    let mix = |ga: f64, gb: f64| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| ga * x + gb * y).collect() };
    let obs = [signal(&mix(1.0, 1.0), rate), signal(&mix(0.9, 0.3), rate)];
    let refs = [signal(&a, rate), signal(&b, rate)];

    let mut sep = ptr::null_mut();
    assert_eq!(unsafe { uasep_separator_new(ptr::null(), &mut sep) }, UasepStatus::Ok);
    let mut result = ptr::null_mut();
    let obs_ptrs: Vec<*const UasepSignal> = obs.iter().map(|&p| p.cast_const()).collect();
    assert_eq!(unsafe { uasep_separate(sep, obs_ptrs.as_ptr(), 2, 2, &mut result) }, UasepStatus::Ok);

    let mut count = 0;
    assert_eq!(unsafe { uasep_separation_count(result, &mut count) }, UasepStatus::Ok);
    assert_eq!(count, 2);
    let (mut frames, mut bins) = (0, 0);
    assert_eq!(unsafe { uasep_separation_shape(result, &mut frames, &mut bins) }, UasepStatus::Ok);
    let mut masks = vec![vec![0u8; frames * bins]; 2];
    for (i, m) in masks.iter_mut().enumerate() {
        assert_eq!(unsafe { uasep_separation_mask(result, i, m.as_mut_ptr(), m.len()) }, UasepStatus::Ok);
    }
    // binary masks partition the plane
    assert!(masks[0].iter().zip(&masks[1]).all(|(p, q)| p + q == 1));

    let ref_ptrs: Vec<*const UasepSignal> = refs.iter().map(|&p| p.cast_const()).collect();
    let mut scores = UasepScores::default();
    assert_eq!(unsafe { uasep_separation_evaluate(result, ref_ptrs.as_ptr(), 2, &mut scores) }, UasepStatus::Ok);
    assert!(scores.mean_xi > 0.99, "{scores:?}");
    assert!(scores.mean_psr > 0.99, "{scores:?}");

    let mut est = ptr::null_mut();
    assert_eq!(unsafe { uasep_separation_estimate(result, 5, &mut est) }, UasepStatus::InvalidArgument);
    assert_eq!(unsafe { uasep_separation_estimate(result, 0, &mut est) }, UasepStatus::Ok);
    let (mut xa, mut xb) = (0.0, 0.0);
    assert_eq!(unsafe { uasep_similarity(est, refs[0], &mut xa) }, UasepStatus::Ok);
    assert_eq!(unsafe { uasep_similarity(est, refs[1], &mut xb) }, UasepStatus::Ok);
    assert!(xa.max(xb) > 0.99 && xa.min(xb) < 0.05, "{xa} {xb}");

    unsafe {
        uasep_signal_free(est);
        uasep_separation_free(result);
        uasep_separator_free(sep);
        for p in obs.into_iter().chain(refs) {
            uasep_signal_free(p);
        }
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(uasep_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/uasep.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("UASEP_STATUS_OK = 0"));
}
