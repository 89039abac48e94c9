use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_lorafix");
const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
const SCENARIO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/square.toml");

fn lorafix(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn field_calibration(dir: &Path) -> PathBuf {
    let sd = [102.97, 199.19, 298.19, 398.15, 498.34, 598.29];
    let mean = [-79.41, -82.94, -85.81, -85.58, -87.93, -88.32];
    let mut text = String::from("distance_m,mean_rssi_db\n");
    for (d, m) in sd.iter().zip(mean) {
        text.push_str(&format!("{d},{m}\n"));
    }
    write(dir, "cal.csv", &text)
}

#[test]
fn fit_writes_model_and_reports_usable() {
    let dir = tempfile::tempdir().unwrap();
    let cal = field_calibration(dir.path());
    let o = lorafix(&["fit", s(&cal), "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("verdict    usable"), "{out}");
    assert!(out.contains("L          1.1656"), "{out}");

    let model = fs::read_to_string(dir.path().join("model.txt")).unwrap();
    assert!(model.starts_with("L=1.1656"));

    let o = lorafix(&[
        "predict",
        "--model",
        s(&dir.path().join("model.txt")),
        "--distance",
        "100",
    ]);
    assert!(o.status.success());
    let rssi: f64 = stdout(&o).trim().parse().unwrap();
    assert!((rssi - (-56.128160841664396 - 20.0 * 1.1656116902153975)).abs() < 1e-3);
}

#[test]
fn fit_on_flat_readings_is_rejected_only_under_strict() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("distance_m,mean_rssi_db\n");
    for line in fs::read_to_string(format!("{DATA}/table4.csv"))
        .unwrap()
        .lines()
        .skip(1)
    {
        let f: Vec<&str> = line.split(',').collect();
        text.push_str(&format!("{},{}\n", f[0], f[1]));
    }
    let cal = write(dir.path(), "flat.csv", &text);
    let o = lorafix(&["fit", s(&cal), "--out", s(dir.path())]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("rejected"));
    let o = lorafix(&["fit", s(&cal), "--strict", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_input_errors_exit_two_and_domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.csv", "");
    assert_eq!(lorafix(&["fit", s(&empty)]).status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    assert_eq!(lorafix(&["fit", s(&missing)]).status.code(), Some(2));
    let one = write(
        dir.path(),
        "one.csv",
        "distance_m,mean_rssi_db\n100,-80\n100,-81\n",
    );
    assert_eq!(
        lorafix(&["fit", s(&one), "--out", s(dir.path())])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(lorafix(&["bogus"]).status.code(), Some(2));
}

#[test]
fn distance_flags_short_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", "L=1.165\nC=-56.134\n");
    let o = lorafix(&["distance", "--model", s(&model), "--rssi", "-79"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("91.7"), "{out}");
    assert!(out.contains("low confidence"));
    let o = lorafix(&["distance", "--model", s(&model), "--rssi", "-86"]);
    assert!(stdout(&o).starts_with("366.1"));
    assert_eq!(
        lorafix(&["distance", "--rssi", "-80"]).status.code(),
        Some(2)
    );
}

#[test]
fn slant_accepts_beta_or_alpha() {
    let a = stdout(&lorafix(&[
        "slant", "--gd", "100", "--height", "50", "--beta", "79.1",
    ]));
    let b = stdout(&lorafix(&[
        "slant", "--gd", "100", "--height", "50", "--alpha", "10.9",
    ]));
    assert_eq!(a, b);
    assert!(a.starts_with("103.00"), "{a}");
    let o = lorafix(&["slant", "--gd", "100", "--height", "50", "--beta", "190"]);
    assert_eq!(o.status.code(), Some(1));
}

fn field_reports(dir: &Path) -> PathBuf {
    write(
        dir,
        "reports.csv",
        "station_id,uav_id,window_end_s,mean_rssi_db,sample_count\n\
         GS1,FF1,10.0,-80.00,5\nGS2,FF1,10.0,-86.00,5\nGS3,FF1,10.0,-79.00,5\nGS4,FF1,10.0,-81.00,5\n",
    )
}

#[test]
fn locate_field_readings() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", "L=1.165\nC=-56.134\n");
    let reports = field_reports(dir.path());
    let o = lorafix(&[
        "locate",
        &format!("{DATA}/field_stations.csv"),
        s(&reports),
        "--model",
        s(&model),
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    for est in ["111.84", "366.10", "91.78", "136.28"] {
        assert!(out.contains(est), "missing {est} in {out}");
    }
    let fixes = fs::read_to_string(dir.path().join("fixes.csv")).unwrap();
    assert_eq!(
        fixes.lines().nth(1).unwrap(),
        "FF1,15.641934,194.567793,135.266677,98.589349,coplanar-reduced,ok"
    );
}

#[test]
fn locate_with_three_stations_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", "L=1.165\nC=-56.134\n");
    let stations = write(
        dir.path(),
        "three.csv",
        "station_id,x_m,y_m,z_m\nGS1,0,0,0\nGS2,200,0,0\nGS3,200,200,0\n",
    );
    let o = lorafix(&[
        "locate",
        s(&stations),
        s(&field_reports(dir.path())),
        "--model",
        s(&model),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 4 stations"));
}

#[test]
fn locate_malformed_report_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", "L=1.165\nC=-56.134\n");
    let bad = write(dir.path(), "bad.csv", "GS1,FF1,10.0,-80.0\n");
    let o = lorafix(&[
        "locate",
        &format!("{DATA}/field_stations.csv"),
        s(&bad),
        "--model",
        s(&model),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["simulate", SCENARIO, "--out", s(&out)];
        args.extend_from_slice(extra);
        assert!(lorafix(&args).status.success());
        fs::read(out.join("samples.csv")).unwrap()
    };
    let a = run("a", &[]);
    assert_eq!(a, run("b", &[]));
    assert_ne!(a, run("c", &["--seed", "43"]));
}

fn scenario_variant(dir: &Path, from: &str, to: &str) -> PathBuf {
    let text = fs::read_to_string(SCENARIO).unwrap();
    assert!(text.contains(from));
    write(dir, "variant.toml", &text.replacen(from, to, 1))
}

#[test]
fn simulate_with_loss_drops_about_half() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_variant(
        dir.path(),
        "loss_probability = 0.0",
        "loss_probability = 0.5",
    );
    let text = fs::read_to_string(&sc)
        .unwrap()
        .replace("dwell_s = 10.0", "dwell_s = 2000.0");
    fs::write(&sc, text).unwrap();
    let out = dir.path().join("o");
    assert!(lorafix(&["simulate", s(&sc), "--out", s(&out)])
        .status
        .success());
    // 4 stations × (1000 + 6 + 3) slots.
    let slots = 4 * 1009;
    let kept = fs::read_to_string(out.join("samples.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    // Binomial(4036, 0.5): 5σ is about 159.
    assert!(
        (kept as i64 - slots as i64 / 2).abs() < 160,
        "kept {kept} of {slots}"
    );
}

#[test]
fn simulate_zero_noise_fixes_match_waypoints() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_variant(
        dir.path(),
        "anchors = [[102.97, 2.19], [199.19, 1.53], [298.19, 1.62], [398.15, 1.21], [498.34, 1.14], [598.29, 1.10]]",
        "anchors = [[1.0, 0.0]]",
    );
    let out = dir.path().join("o");
    let o = lorafix(&["simulate", s(&sc), "--out", s(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("waypoints [2]"));
    let fixes = fs::read_to_string(out.join("fixes.csv")).unwrap();
    let rows: Vec<Vec<f64>> = fixes
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .skip(1)
                .take(3)
                .map(|v| v.parse().unwrap())
                .collect()
        })
        .collect();
    assert_eq!(
        rows,
        vec![vec![100.0, 100.0, 50.0], vec![40.0, 160.0, 80.0]]
    );
}

#[test]
fn simulate_invalid_and_unparsable_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let invalid = scenario_variant(
        dir.path(),
        "loss_probability = 0.0",
        "loss_probability = 1.5",
    );
    assert_eq!(lorafix(&["simulate", s(&invalid)]).status.code(), Some(1));
    let garbled = write(dir.path(), "g.toml", "seed = \"x\"\n");
    assert_eq!(lorafix(&["simulate", s(&garbled)]).status.code(), Some(2));
}

#[test]
fn replay_subcommand_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lorafix(&["replay-paper", "table5", "--out", s(dir.path())]);
    assert!(o.status.success());
    assert!(dir.path().join("table5.csv").exists());
    let o = lorafix(&["replay-paper", "table2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL 300 m slant distance"));
    assert_eq!(lorafix(&["replay-paper", "table9"]).status.code(), Some(2));
}
