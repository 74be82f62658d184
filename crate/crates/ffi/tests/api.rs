use std::ffi::{CStr, CString};
use std::ptr;

use semcast_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(semcast_last_error()) }.to_string_lossy().into_owned()
}

fn set(cfg: *mut SemcastConfig, key: &str, value: &str) -> SemcastStatus {
    let (k, v) = (CString::new(key).unwrap(), CString::new(value).unwrap());
    unsafe { semcast_config_set(cfg, k.as_ptr(), v.as_ptr()) }
}

/// A small session: 8 items, two SNRs, a handful of trials.
fn small_session() -> *mut SemcastSession {
    let cfg = semcast_config_new();
    for (k, v) in [("n_items", "8"), ("snr_db", "0,20"), ("trials", "8"), ("epochs", "20")] {
        assert_eq!(set(cfg, k, v), SemcastStatus::Ok, "{k}: {}", last_error());
    }
    let mut session = ptr::null_mut();
    let status = unsafe { semcast_session_new(cfg, &mut session) };
    unsafe { semcast_config_free(cfg) };
    assert_eq!(status, SemcastStatus::Ok, "{}", last_error());
    assert!(!session.is_null());
    session
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(semcast_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_errors_keep_the_handle_unchanged() {
    let cfg = semcast_config_new();
    assert_eq!(set(cfg, "no_such_key", "1"), SemcastStatus::Config);
    assert!(!last_error().is_empty());
    assert_eq!(set(cfg, "qam_order", "12"), SemcastStatus::Config);
    assert_eq!(set(cfg, "n_items", "4"), SemcastStatus::Ok);
    assert_eq!(last_error(), "");

    let key = CString::new("trials").unwrap();
    assert_eq!(unsafe { semcast_config_set(cfg, key.as_ptr(), ptr::null()) }, SemcastStatus::NullPointer);
    assert_eq!(unsafe { semcast_config_set(ptr::null_mut(), key.as_ptr(), key.as_ptr()) }, SemcastStatus::NullPointer);
    unsafe {
        semcast_config_free(cfg);
        semcast_config_free(ptr::null_mut());
    }
}

#[test]
fn config_load_reports_io_and_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = ptr::null_mut();
    let missing = CString::new(dir.path().join("missing.cfg").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { semcast_config_load(missing.as_ptr(), &mut out) }, SemcastStatus::Io);
    assert!(out.is_null());

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "trials = many\n").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { semcast_config_load(bad.as_ptr(), &mut out) }, SemcastStatus::Config);

    let good = dir.path().join("good.cfg");
    std::fs::write(&good, "# small\ntrials = 3\nseed = 9\n").unwrap();
    let good = CString::new(good.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { semcast_config_load(good.as_ptr(), &mut out) }, SemcastStatus::Ok);
    assert!(!out.is_null());
    unsafe { semcast_config_free(out) };
}

#[test]
fn trials_are_reproducible_through_the_handle() {
    let session = small_session();
    assert_eq!(unsafe { semcast_session_items(session) }, 8);
    let run = || {
        let mut t = std::mem::MaybeUninit::<SemcastTrial>::uninit();
        assert_eq!(unsafe { semcast_run_trial(session, 3, 20.0, 0.01, t.as_mut_ptr()) }, SemcastStatus::Ok);
        unsafe { t.assume_init() }
    };
    let (a, b) = (run(), run());
    assert_eq!(a.item, 3);
    assert_eq!(a.perm_digest, b.perm_digest);
    assert_eq!(a.legit_errors, b.legit_errors);
    assert!(a.lambda >= 1 && a.symbols > 0 && a.payload_bits > 0);

    let mut t = std::mem::MaybeUninit::<SemcastTrial>::uninit();
    assert_eq!(unsafe { semcast_run_trial(session, 0, f64::NAN, 0.01, t.as_mut_ptr()) }, SemcastStatus::InvalidArgument);
    assert_eq!(unsafe { semcast_run_trial(session, 0, 10.0, -1.0, t.as_mut_ptr()) }, SemcastStatus::InvalidArgument);
    assert_eq!(unsafe { semcast_run_trial(ptr::null(), 0, 10.0, 0.0, t.as_mut_ptr()) }, SemcastStatus::NullPointer);
    unsafe { semcast_session_free(session) };
}

#[test]
fn sweeps_report_required_length_and_write_csv() {
    let session = small_session();
    let mut written = 0usize;
    let status = unsafe { semcast_ber_sweep(session, ptr::null(), ptr::null_mut(), 0, &mut written) };
    assert_eq!(status, SemcastStatus::BufferTooSmall);
    assert_eq!(written, 2);

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut points = vec![unsafe { std::mem::zeroed::<SemcastBerPoint>() }; written];
    let status = unsafe { semcast_ber_sweep(session, out.as_ptr(), points.as_mut_ptr(), points.len(), &mut written) };
    assert_eq!(status, SemcastStatus::Ok, "{}", last_error());
    assert_eq!((points[0].snr_db, points[1].snr_db), (0.0, 20.0));
    assert_eq!(points[0].legit_ber_encrypted, points[0].legit_ber_plaintext);
    assert!(points[1].eve_ber > 0.3);
    assert!(dir.path().join("ber_sweep.csv").exists());
    assert!(dir.path().join("constellation.csv").exists());

    let mut lat = vec![unsafe { std::mem::zeroed::<SemcastLatencyPoint>() }; 16];
    let status = unsafe { semcast_latency_sweep(session, out.as_ptr(), lat.as_mut_ptr(), lat.len(), &mut written) };
    assert_eq!(status, SemcastStatus::Ok, "{}", last_error());
    assert_eq!(written, 10);
    assert_eq!(lat[0].epsilon, 0.0);
    assert_eq!(lat[0].symbol_fraction, 1.0);
    assert!(dir.path().join("latency_sweep.csv").exists());
    unsafe { semcast_session_free(session) };
}

#[test]
fn select_maps_writes_best_first() {
    let scores = [0.1, 0.5, 0.0, 0.3];
    let mut idx = [usize::MAX; 4];
    let mut written = 0;
    let status = unsafe { semcast_select_maps(scores.as_ptr(), 4, 0.9, 0.05, idx.as_mut_ptr(), 4, &mut written) };
    assert_eq!(status, SemcastStatus::Ok, "{}", last_error());
    assert_eq!(&idx[..written], &[1, 3, 0]);

    let status = unsafe { semcast_select_maps(scores.as_ptr(), 4, 0.9, 0.05, idx.as_mut_ptr(), 2, &mut written) };
    assert_eq!(status, SemcastStatus::BufferTooSmall);
    assert_eq!(written, 3);

    let bad = [0.5, -0.1];
    let status = unsafe { semcast_select_maps(bad.as_ptr(), 2, 0.4, 0.05, idx.as_mut_ptr(), 4, &mut written) };
    assert_eq!(status, SemcastStatus::InvalidArgument);
    let status = unsafe { semcast_select_maps(ptr::null(), 2, 0.4, 0.05, idx.as_mut_ptr(), 4, &mut written) };
    assert_eq!(status, SemcastStatus::NullPointer);
}

#[test]
fn search_space_formulas() {
    let eval = |kind, bits, n| {
        let mut s = SemcastSearchSpace { multiplier: 0, log2: 0 };
        assert_eq!(unsafe { semcast_search_space(kind, bits, n, &mut s) }, SemcastStatus::Ok);
        (s.multiplier, s.log2)
    };
    assert_eq!(eval(SemcastSearchKind::Weights, 8, 4), (1, 32));
    assert_eq!(eval(SemcastSearchKind::SemanticKeys, 64, 10), (1, 640));
    assert_eq!(eval(SemcastSearchKind::SeedKey, 128, 99), (1, 128));
    assert_eq!(eval(SemcastSearchKind::WithAllocation, 128, 8), (8, 1024));
    let status = unsafe { semcast_search_space(SemcastSearchKind::Weights, 8, 4, ptr::null_mut()) };
    assert_eq!(status, SemcastStatus::NullPointer);
}

#[test]
fn lightweight_hash_matches_the_library() {
    for (x, t) in [(0u64, 0u64), (1, 2), (u64::MAX, 7)] {
        assert_eq!(semcast_lightweight_hash(x, t), semcast::keys::lightweight_hash(x, t));
    }
    assert_ne!(semcast_lightweight_hash(1, 0), semcast_lightweight_hash(1, 1));
}
