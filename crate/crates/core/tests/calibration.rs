use lorafix_core::pathloss::{
    assess_calibration, fit_model, read_calibration_csv, CalibrationCriteria, CalibrationVerdict,
    RejectReason,
};

/// Second-module readings: RSSI hardly moves across 100..800 m.
const FLAT: &str = "distance_m,mean_rssi_db
100,-104.48
200,-103.68
300,-103.51
400,-104.97
500,-105.06
600,-104.86
700,-104.62
800,-104.65
";

#[test]
fn flat_module_is_rejected() {
    let points = read_calibration_csv(FLAT.as_bytes()).unwrap();
    let (model, report) = fit_model(&points).unwrap();
    assert!((report.slope - -0.8727023).abs() < 1e-6, "{}", report.slope);
    assert!((report.intercept - -102.2309).abs() < 1e-4);
    assert!((report.r_squared - 0.21168).abs() < 1e-4);
    let verdict = assess_calibration(&report, &model, &CalibrationCriteria::default());
    assert!(matches!(
        verdict,
        CalibrationVerdict::Rejected(RejectReason::ExponentTooSmall { .. })
    ));

    // Even with the exponent floor removed, the fit quality fails.
    let lenient = CalibrationCriteria {
        min_exponent: 0.0,
        ..Default::default()
    };
    assert!(matches!(
        assess_calibration(&report, &model, &lenient),
        CalibrationVerdict::Rejected(RejectReason::PoorFit { .. })
    ));
}

#[test]
fn field_module_is_usable() {
    let text = "distance_m,mean_rssi_db
102.97,-79.41
199.19,-82.94
298.19,-85.81
398.15,-85.58
498.34,-87.93
598.29,-88.32
";
    let points = read_calibration_csv(text.as_bytes()).unwrap();
    let (model, report) = fit_model(&points).unwrap();
    assert_eq!(
        assess_calibration(&report, &model, &CalibrationCriteria::default()),
        CalibrationVerdict::Usable
    );
    assert!((model.exponent - 1.165611690215402).abs() < 1e-9);
    assert!((report.r_squared - 0.9710101503975177).abs() < 1e-9);
}
