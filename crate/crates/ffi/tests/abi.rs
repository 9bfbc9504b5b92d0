use std::ffi::{CStr, CString};
use std::ptr;

use innovguard::sim::sdg::{sample_sdg_trajectory, SdgProcess};
use innovguard_ffi::*;

fn ar2(n: usize, seed: u64) -> Vec<f64> {
    let p = SdgProcess::ar_gaussian(vec![1.2, -0.5], 1.0, 0.0);
    sample_sdg_trajectory(&p, n, seed).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe {
        ig_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn fit(x: &[f64]) -> *mut IgArModel {
    let mut m = ptr::null_mut();
    let s = unsafe { ig_ar_model_fit(x.as_ptr(), x.len(), 1000.0, 4, &mut m) };
    assert_eq!(s, IgStatus::Ok, "{}", last_error());
    assert!(!m.is_null());
    m
}

fn default_config() -> IgIsfdConfig {
    let mut cfg = IgIsfdConfig { k: 0, epsilon: 0.0, c: 0.0, lambda_sep: 0.0, bonferroni: 0 };
    assert_eq!(unsafe { ig_isfd_config_default(&mut cfg) }, IgStatus::Ok);
    cfg
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(ig_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let mut m = ptr::null_mut();
    let s = unsafe { ig_ar_model_fit(ptr::null(), 10, 1000.0, 2, &mut m) };
    assert_eq!(s, IgStatus::NullPointer);
    assert!(m.is_null());
    assert!(last_error().contains("samples"));
    assert_eq!(unsafe { ig_ar_model_fit(ptr::null(), 0, 1000.0, 2, ptr::null_mut()) }, IgStatus::NullPointer);
    assert_eq!(unsafe { ig_ar_model_order(ptr::null()) }, 0);
    unsafe {
        ig_ar_model_free(ptr::null_mut());
        ig_detector_free(ptr::null_mut());
        ig_blob_free(ptr::null_mut());
    }
}

#[test]
fn core_errors_map_to_status_codes() {
    let x = ar2(100, 1);
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ig_ar_model_fit(x.as_ptr(), x.len(), -1.0, 4, &mut m) }, IgStatus::InvalidArgument);
    let constant = vec![3.0; 200];
    assert_eq!(
        unsafe { ig_ar_model_fit(constant.as_ptr(), constant.len(), 1000.0, 4, &mut m) },
        IgStatus::Degenerate
    );
    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { ig_ar_model_from_json(bad.as_ptr(), &mut m) }, IgStatus::Parse);
    let junk = b"XXXX0000";
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { ig_blob_from_bytes(junk.as_ptr(), junk.len(), &mut b) }, IgStatus::MalformedBlob);
    assert!(b.is_null());
}

#[test]
fn model_json_round_trip_and_buffer_sizing() {
    let x = ar2(5000, 2);
    let m = fit(&x);
    unsafe {
        assert_eq!(ig_ar_model_order(m), 4);
        assert_eq!(ig_ar_model_warmup(m), 4);
        let mut need = 0usize;
        assert_eq!(ig_ar_model_to_json(m, ptr::null_mut(), 0, &mut need), IgStatus::BufferTooSmall);
        let mut buf = vec![0 as std::ffi::c_char; need];
        let mut written = 0usize;
        assert_eq!(ig_ar_model_to_json(m, buf.as_mut_ptr(), buf.len(), &mut written), IgStatus::Ok);
        assert_eq!(written, need);
        let mut back = ptr::null_mut();
        assert_eq!(ig_ar_model_from_json(buf.as_ptr(), &mut back), IgStatus::Ok);

        let mut a = vec![0.0; x.len()];
        let mut b = vec![0.0; x.len()];
        let (mut na, mut nb) = (0, 0);
        assert_eq!(ig_ar_model_encode(m, x.as_ptr(), x.len(), 1000.0, a.as_mut_ptr(), a.len(), &mut na), IgStatus::Ok);
        assert_eq!(ig_ar_model_encode(back, x.as_ptr(), x.len(), 1000.0, b.as_mut_ptr(), b.len(), &mut nb), IgStatus::Ok);
        assert_eq!(na, x.len() - 4);
        assert_eq!(a[..na], b[..nb]);
        assert!(a[..na].iter().all(|v| (0.0..=1.0).contains(v)));
        ig_ar_model_free(back);
        ig_ar_model_free(m);
    }
}

#[test]
fn batch_and_online_detectors_agree() {
    let train = ar2(20_000, 3);
    let m = fit(&train);
    let cfg = default_config();
    assert_eq!(cfg.k, 4);
    let mut x = ar2(2000, 4);
    // Variance jump at sample 1000.
    for v in &mut x[1000..] {
        *v *= 4.0;
    }
    for (start, expect) in [(200usize, IG_DECISION_H0), (1000, IG_DECISION_H1)] {
        unsafe {
            let mut batch = std::mem::zeroed::<IgIsfdResult>();
            let s = ig_isfd_run_waveform(m, x.as_ptr(), x.len(), 1000.0, start, &cfg, &mut batch);
            assert_eq!(s, IgStatus::Ok, "{}", last_error());
            assert_eq!(batch.decision, expect);

            let mut det = ptr::null_mut();
            assert_eq!(ig_detector_new(m, 1000.0, &cfg, &mut det), IgStatus::Ok);
            let mut decided = 0u8;
            let mut online = std::mem::zeroed::<IgIsfdResult>();
            assert_eq!(ig_detector_push(det, x.as_ptr(), start, &mut decided), IgStatus::Ok);
            assert_eq!(ig_detector_reset(det), IgStatus::Ok);
            decided = 0;
            assert_eq!(ig_detector_result(det, &mut online), IgStatus::TruncatedStream);
            // Feed the rest in uneven chunks.
            let mut i = start;
            while i < x.len() && decided == 0 {
                let n = 7.min(x.len() - i);
                assert_eq!(ig_detector_push(det, x[i..].as_ptr(), n, &mut decided), IgStatus::Ok);
                i += n;
            }
            assert_eq!(decided, 1);
            let rs = ig_detector_result(det, &mut online);
            assert_eq!(rs, IgStatus::Ok, "start {start}: {}", last_error());
            assert_eq!(online.decision, batch.decision);
            assert_eq!(online.samples_consumed, batch.samples_consumed);
            assert_eq!(online.final_statistic, batch.final_statistic);
            ig_detector_free(det);
        }
    }
    unsafe { ig_ar_model_free(m) };
}

#[test]
fn detect_on_short_stream_is_truncated() {
    let cfg = default_config();
    let v = vec![0.5; 50];
    let mut out = unsafe { std::mem::zeroed::<IgIsfdResult>() };
    let s = unsafe { ig_isfd_detect(v.as_ptr(), v.len(), 50_000.0, &cfg, &mut out) };
    assert_eq!(s, IgStatus::TruncatedStream);
    assert!(last_error().contains("50"));
}

#[test]
fn compress_round_trip_through_bytes() {
    let fs = 5000.0;
    let n = 20_000;
    let noise = ar2(n, 5);
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            100.0 * (std::f64::consts::TAU * 50.0 * t).sin() + noise[i]
        })
        .collect();
    unsafe {
        let mut blob = ptr::null_mut();
        let s = ig_compress(x.as_ptr(), n, x.as_ptr(), n, fs, 50.0, 3, 4, 0.01, &mut blob);
        assert_eq!(s, IgStatus::Ok, "{}", last_error());
        assert_eq!(ig_blob_sample_count(blob), n as u64);

        let mut need = 0;
        assert_eq!(ig_blob_to_bytes(blob, ptr::null_mut(), 0, &mut need), IgStatus::BufferTooSmall);
        let mut bytes = vec![0u8; need];
        let mut written = 0;
        assert_eq!(ig_blob_to_bytes(blob, bytes.as_mut_ptr(), need, &mut written), IgStatus::Ok);
        assert_eq!(&bytes[..4], b"CPW1");

        let mut parsed = ptr::null_mut();
        assert_eq!(ig_blob_from_bytes(bytes.as_ptr(), bytes.len(), &mut parsed), IgStatus::Ok);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        assert_eq!(ig_blob_decompress(blob, a.as_mut_ptr(), n, &mut written), IgStatus::Ok);
        assert_eq!(written, n);
        assert_eq!(ig_blob_decompress(parsed, b.as_mut_ptr(), n, &mut written), IgStatus::Ok);
        assert_eq!(a, b);

        let power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let mid = n / 4..3 * n / 4;
        let mse = mid.clone().map(|i| (a[i] - x[i]).powi(2)).sum::<f64>() / mid.len() as f64;
        assert!(mse <= 0.01 * power * 1.15, "mse {mse}, power {power}");
        ig_blob_free(parsed);
        ig_blob_free(blob);
    }
}
