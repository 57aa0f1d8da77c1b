use std::ffi::{CStr, CString};
use std::ptr;

use tapsim::ar::fit_ar;
use tapsim::gru::{GruNetwork, GruShape};
use tapsim_ffi::*;

fn last_error() -> String {
    let p = tapsim_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn gru_forward_matches_core() {
    unsafe {
        let mut gru = ptr::null_mut();
        assert_eq!(tapsim_gru_new(2, 3, 5, 4, 2, 17, &mut gru), TapsimStatus::Ok);
        let mut shape = TapsimGruShape::default();
        assert_eq!(tapsim_gru_shape(gru, &mut shape), TapsimStatus::Ok);
        assert_eq!((shape.layers, shape.input_dim, shape.window, shape.horizon), (2, 3, 4, 2));

        let window: Vec<f64> = (0..15).map(|i| i as f64 / 15.0).collect();
        let mut out = [0.0; 6];
        assert_eq!(tapsim_gru_forward(gru, window.as_ptr(), 15, out.as_mut_ptr(), 6), TapsimStatus::Ok);
        let core = GruNetwork::new(GruShape::new(2, 3, 5, 4, 2), 17).unwrap();
        let rows: Vec<Vec<f64>> = window.chunks(3).map(<[f64]>::to_vec).collect();
        let expected: Vec<f64> = core.forward(&rows, 2).unwrap().concat();
        assert_eq!(out.to_vec(), expected);

        assert_eq!(
            tapsim_gru_forward(gru, window.as_ptr(), 14, out.as_mut_ptr(), 6),
            TapsimStatus::InvalidArgument
        );
        assert!(last_error().contains("rows of 3"));
        tapsim_gru_free(gru);
    }
}

#[test]
fn gru_save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("w.bin").to_str().unwrap()).unwrap();
    unsafe {
        let mut a = ptr::null_mut();
        assert_eq!(tapsim_gru_new(1, 2, 3, 3, 2, 4, &mut a), TapsimStatus::Ok);
        assert_eq!(tapsim_gru_save(a, path.as_ptr()), TapsimStatus::Ok);
        let mut b = ptr::null_mut();
        assert_eq!(tapsim_gru_load(path.as_ptr(), &mut b), TapsimStatus::Ok);
        let window = [0.3; 8];
        let (mut ya, mut yb) = ([0.0; 4], [0.0; 4]);
        tapsim_gru_forward(a, window.as_ptr(), 8, ya.as_mut_ptr(), 4);
        tapsim_gru_forward(b, window.as_ptr(), 8, yb.as_mut_ptr(), 4);
        assert_eq!(ya, yb);
        tapsim_gru_free(a);
        tapsim_gru_free(b);
    }
}

#[test]
fn load_errors_carry_codes_and_messages() {
    let missing = CString::new("/nonexistent/weights.bin").unwrap();
    let mut gru = ptr::null_mut();
    unsafe {
        assert_eq!(tapsim_gru_load(missing.as_ptr(), &mut gru), TapsimStatus::Io);
        assert!(last_error().contains("/nonexistent/weights.bin"));
        assert!(gru.is_null());
        assert_eq!(tapsim_gru_load(ptr::null(), &mut gru), TapsimStatus::NullPointer);
        assert!(last_error().contains("path"));
    }
    let mut mu = 0;
    unsafe {
        assert_eq!(tapsim_compute_mu(1000.0, 166.67, &mut mu), TapsimStatus::Ok);
    }
    assert_eq!(mu, 6);
    assert!(tapsim_last_error_message().is_null());
    unsafe {
        assert_eq!(tapsim_compute_mu(1000.0, 0.0, &mut mu), TapsimStatus::InvalidArgument);
    }
}

#[test]
fn ar_matches_core() {
    let series: Vec<f64> = (0..40)
        .flat_map(|t| [0.5 + 0.3 * (t as f64 * 0.4).sin(), 0.2 + 0.01 * t as f64])
        .collect();
    unsafe {
        let mut ar = ptr::null_mut();
        assert_eq!(tapsim_ar_fit(series.as_ptr(), 40, 2, 3, 1e-6, &mut ar), TapsimStatus::Ok);
        let mut out = [0.0; 6];
        assert_eq!(tapsim_ar_predict(ar, series.as_ptr(), 40, 3, out.as_mut_ptr(), 6), TapsimStatus::Ok);
        let rows: Vec<Vec<f64>> = series.chunks(2).map(<[f64]>::to_vec).collect();
        let expected = fit_ar(&rows, 3, 1e-6).unwrap().predict_from_window(&rows, 3).unwrap().concat();
        assert_eq!(out.to_vec(), expected);
        tapsim_ar_free(ar);

        let mut short = ptr::null_mut();
        assert_eq!(tapsim_ar_fit(series.as_ptr(), 3, 2, 3, 1e-6, &mut short), TapsimStatus::InvalidData);
        assert!(short.is_null());
    }
}

#[test]
fn engine_routes_actual_then_predictions() {
    let config = CString::new(r#"{"window": 5, "horizon": 3}"#).unwrap();
    let initial = [0.0];
    unsafe {
        let mut engine = ptr::null_mut();
        assert_eq!(
            tapsim_engine_new(config.as_ptr(), TapsimStrategy::SinglePredictive, initial.as_ptr(), 1, ptr::null(), &mut engine),
            TapsimStatus::Ok
        );
        let mut cmd = [0.0];
        let mut source = TapsimSource::HoldLast;
        for t in 0..12usize {
            let v = [0.05 * t as f64];
            assert_eq!(tapsim_engine_ingest(engine, &t, v.as_ptr(), 1, true, t), TapsimStatus::Ok);
            assert_eq!(tapsim_engine_decide(engine, t, cmd.as_mut_ptr(), 1, &mut source), TapsimStatus::Ok);
            assert_eq!(source, TapsimSource::Actual);
            assert_eq!(cmd[0], v[0]);
        }
        assert_eq!(tapsim_engine_decide(engine, 12, cmd.as_mut_ptr(), 1, &mut source), TapsimStatus::Ok);
        assert_eq!(source, TapsimSource::ShortTerm);
        assert!((cmd[0] - 0.6).abs() < 1e-3, "{}", cmd[0]);
        assert_eq!(
            tapsim_engine_decide(engine, 12, cmd.as_mut_ptr(), 1, &mut source),
            TapsimStatus::InvalidState
        );
        tapsim_engine_free(engine);

        let mut tap = ptr::null_mut();
        assert_eq!(
            tapsim_engine_new(ptr::null(), TapsimStrategy::Tap, initial.as_ptr(), 1, ptr::null(), &mut tap),
            TapsimStatus::InvalidData
        );
        assert!(last_error().contains("generation network"));
    }
}

#[test]
fn runs_a_scenario() {
    let scenario = CString::new(
        r#"{
        "data": {"synthetic": {"dof_count": 1, "duration_slots": 40, "kind": "constant_velocity", "cycles_per_slot": [0.02]}},
        "channel": {"mode": "periodic", "period_k": 3, "slot_duration_ms": 1},
        "engine": {"window": 5, "horizon": 3},
        "strategies": ["non_predictive", "single_predictive"],
        "experiment": {"episodes": 2}
    }"#,
    )
    .unwrap();
    unsafe {
        let mut report = ptr::null_mut();
        assert_eq!(tapsim_run_experiment_json(scenario.as_ptr(), &mut report), TapsimStatus::Ok);
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        tapsim_string_free(report);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["strategies"].as_array().unwrap().len(), 2);

        let broken = CString::new(r#"{"data": {}}"#).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(tapsim_run_experiment_json(broken.as_ptr(), &mut none), TapsimStatus::InvalidData);
        assert!(last_error().contains("channel"), "{}", last_error());
        assert!(none.is_null());
    }
}
