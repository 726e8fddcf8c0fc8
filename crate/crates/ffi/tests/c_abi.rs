use std::ffi::{c_char, CStr, CString};
use std::ptr;

use fibercavity_ffi::*;

fn primary() -> *mut FcConfig {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { fc_config_primary(&mut h) }, FcStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { fc_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn derived_quantities() {
    let h = primary();
    let (mut zeta, mut s, mut lr) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { fc_config_derived(h, &mut zeta, &mut s, &mut lr) }, FcStatus::Ok);
    assert!((zeta - 4.1).abs() < 0.05);
    assert!((s - (-1.0f64 / 111.0).exp()).abs() < 1e-15);
    assert!((lr - 999.2).abs() < 0.1);
    unsafe { fc_config_free(h) };
}

#[test]
fn readout_and_prediction_match_library() {
    let h = primary();
    let lib = fibercavity::presets::primary().validate().unwrap();
    let mut p = FcReadoutPoint::default();
    assert_eq!(unsafe { fc_readout_probability(h, 10, &mut p) }, FcStatus::Ok);
    let want = fibercavity::readout::readout_probability(10, &lib).unwrap();
    assert_eq!(p.total, want.total);

    let mut o = FcObservables::default();
    assert_eq!(unsafe { fc_predict(h, 1, &mut o) }, FcStatus::Ok);
    let want = fibercavity::model::predict(&lib, 1).unwrap().observables;
    assert_eq!(o.g2_ac_heralded, want.g2_ac_heralded);
    assert_eq!(o.rate_h_cps, want.rate_h_cps);

    let mut xi = f64::NAN;
    assert_eq!(unsafe { fc_xi(h, 0.0, &mut xi) }, FcStatus::Ok);
    assert!(xi > 0.0 && xi < std::f64::consts::FRAC_PI_2);
    unsafe { fc_config_free(h) };
}

#[test]
fn error_codes_and_messages() {
    let mut h = ptr::null_mut();
    let bad = CString::new("{\"scheme\": 1}").unwrap();
    assert_eq!(unsafe { fc_config_from_json(bad.as_ptr(), &mut h) }, FcStatus::ConfigInvalid);
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { fc_config_from_json(ptr::null(), &mut h) }, FcStatus::NullPointer);

    let h = primary();
    let key = CString::new("scheme.lambda_h_nm").unwrap();
    let val = CString::new("670.0").unwrap();
    assert_eq!(unsafe { fc_config_set(h, key.as_ptr(), val.as_ptr()) }, FcStatus::EnergyConservationViolated);
    assert!(last_error().contains("EnergyConservationViolated"));

    let mut p = FcReadoutPoint::default();
    assert_eq!(unsafe { fc_readout_probability(h, 0, &mut p) }, FcStatus::NonPhysicalParameter);
    assert_eq!(unsafe { fc_readout_probability(h, 1, ptr::null_mut()) }, FcStatus::NullPointer);
    // handle unchanged by the rejected override
    assert_eq!(unsafe { fc_readout_probability(h, 1, &mut p) }, FcStatus::Ok);
    unsafe { fc_config_free(h) };
    unsafe { fc_config_free(ptr::null_mut()) };
}

#[test]
fn json_round_trip_through_handle() {
    let h = primary();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { fc_config_to_json(h, &mut s) }, FcStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    assert_eq!(text, fibercavity::presets::PRIMARY_JSON);
    let mut h2 = ptr::null_mut();
    assert_eq!(unsafe { fc_config_from_json(s, &mut h2) }, FcStatus::Ok);
    unsafe {
        fc_string_free(s);
        fc_config_free(h);
        fc_config_free(h2);
    }
}

#[test]
fn simulation_file_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let h = primary();
    let a = CString::new(dir.path().join("a.bin").to_str().unwrap()).unwrap();
    let b = CString::new(dir.path().join("b.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fc_simulate_to_file(h, 7, 100_000, 1, 0, a.as_ptr()) }, FcStatus::Ok);
    assert_eq!(unsafe { fc_simulate_to_file(h, 7, 100_000, 1, 0, b.as_ptr()) }, FcStatus::Ok);
    let ra = std::fs::read(dir.path().join("a.bin")).unwrap();
    assert_eq!(ra.len(), 100_000 * 11);
    assert_eq!(ra, std::fs::read(dir.path().join("b.bin")).unwrap());
    assert!(dir.path().join("a.bin.manifest.json").exists());
    unsafe { fc_config_free(h) };
}

#[test]
fn multiplex_single_bin() {
    let curve = [0.8, 0.7, 0.6];
    let mut r = FcMultiplexResult::default();
    assert_eq!(unsafe { fc_multiplex(0.1, curve.as_ptr(), 3, 1, 1, 0, &mut r) }, FcStatus::Ok);
    assert_eq!(r.enhancement, 1.0);
    assert_eq!(unsafe { fc_multiplex(0.1, curve.as_ptr(), 3, 5, 1, 0, &mut r) }, FcStatus::CurveRangeExceeded);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(fc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
