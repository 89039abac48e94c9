use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use lorafix_core::geometry::{beta_from_alpha, slant_distance};
use lorafix_core::pathloss::{
    assess_calibration, fit_model, read_calibration_csv, CalibrationCriteria, CalibrationVerdict,
    PathLossError, PathLossModel,
};
use lorafix_core::simulator::{collect_reports, simulate, Scenario, ScenarioError};
use lorafix_core::station_net::{
    ingest, parse_report_log, serve_tcp, write_fix_log, FixRecord, FusionConfig, StationRegistry,
};
use lorafix_core::trilateration::MIN_STATIONS;

use crate::replay::{replay, Which};
use crate::{Cli, CliError, Command, GlobalOpts};

type CmdResult = Result<(), CliError>;

fn io_err(e: std::io::Error) -> CliError {
    CliError::usage(e)
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(CliError::Usage)
}

fn load_model(global: &GlobalOpts) -> Result<PathLossModel, CliError> {
    let path = global
        .model
        .as_ref()
        .ok_or_else(|| CliError::usage(anyhow!("--model <file> is required for this command")))?;
    read_file(path)?
        .parse()
        .with_context(|| format!("bad model file {}", path.display()))
        .map_err(CliError::Usage)
}

fn out_dir(global: &GlobalOpts) -> Result<PathBuf, CliError> {
    let dir = global.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(CliError::Usage)?;
    Ok(dir)
}

fn write_artifact(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Usage)?;
    Ok(path)
}

fn load_registry(path: &Path) -> Result<StationRegistry, CliError> {
    let text = read_file(path)?;
    StationRegistry::from_csv(text.as_bytes())
        .with_context(|| format!("bad station registry {}", path.display()))
        .map_err(CliError::Usage)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CmdResult {
    let g = &cli.global;
    match cli.command {
        Command::Fit {
            calibration_csv,
            min_exponent,
            min_r2,
            strict,
        } => cmd_fit(
            g,
            &calibration_csv,
            CalibrationCriteria {
                min_exponent,
                min_r_squared: min_r2,
            },
            strict,
            out,
        ),
        Command::Predict { distance } => {
            let model = load_model(g)?;
            let rssi = model.predict_rssi(distance).map_err(CliError::domain)?;
            writeln!(out, "{rssi:.4}").map_err(io_err)
        }
        Command::Distance { rssi } => {
            let model = load_model(g)?;
            let d = model.estimate_distance(rssi).map_err(CliError::domain)?;
            let flag = if d.low_confidence {
                " (low confidence: below 100 m)"
            } else {
                ""
            };
            writeln!(out, "{:.4}{flag}", d.meters).map_err(io_err)
        }
        Command::Slant {
            gd,
            height,
            beta,
            alpha,
        } => {
            let beta = match (beta, alpha) {
                (Some(b), _) => b,
                (None, Some(a)) => beta_from_alpha(a).map_err(CliError::domain)?,
                (None, None) => {
                    return Err(CliError::usage(anyhow!(
                        "one of --beta or --alpha is required"
                    )))
                }
            };
            let sd = slant_distance(gd, height, beta).map_err(CliError::domain)?;
            writeln!(out, "{sd:.4}").map_err(io_err)
        }
        Command::Locate {
            stations_csv,
            reports_csv,
        } => cmd_locate(g, &stations_csv, &reports_csv, out),
        Command::Simulate { scenario } => cmd_simulate(g, &scenario, out),
        Command::ReplayPaper { which } => cmd_replay(g, &which, out),
        Command::Collect {
            stations_csv,
            listen,
            streams,
        } => cmd_collect(g, &stations_csv, &listen, streams, out),
    }
}

fn cmd_fit(
    g: &GlobalOpts,
    csv_path: &Path,
    criteria: CalibrationCriteria,
    strict: bool,
    out: &mut dyn Write,
) -> CmdResult {
    let text = read_file(csv_path)?;
    let points = read_calibration_csv(text.as_bytes())
        .with_context(|| format!("bad calibration file {}", csv_path.display()))
        .map_err(CliError::Usage)?;
    let (model, report) = match fit_model(&points) {
        Ok(fit) => fit,
        Err(e @ PathLossError::InsufficientPoints(_)) => return Err(CliError::usage(e)),
        Err(e) => return Err(CliError::domain(e)),
    };
    let verdict = assess_calibration(&report, &model, &criteria);

    writeln!(out, "points     {}", report.n_points).map_err(io_err)?;
    writeln!(out, "slope      {:.6} dB/decade", report.slope).map_err(io_err)?;
    writeln!(out, "intercept  {:.6} dB", report.intercept).map_err(io_err)?;
    writeln!(out, "L          {:.6}", model.exponent).map_err(io_err)?;
    writeln!(out, "C          {:.6}", model.intercept_db).map_err(io_err)?;
    writeln!(out, "R²         {:.6}", report.r_squared).map_err(io_err)?;
    match &verdict {
        CalibrationVerdict::Usable => writeln!(out, "verdict    usable"),
        CalibrationVerdict::Rejected(why) => writeln!(out, "verdict    rejected ({why})"),
    }
    .map_err(io_err)?;

    let path = match &g.model {
        Some(p) => p.clone(),
        None => out_dir(g)?.join("model.txt"),
    };
    fs::write(&path, model.to_string())
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Usage)?;
    writeln!(out, "model written to {}", path.display()).map_err(io_err)?;

    if strict {
        if let CalibrationVerdict::Rejected(why) = verdict {
            return Err(CliError::domain(anyhow!("calibration rejected: {why}")));
        }
    }
    Ok(())
}

fn print_fix(out: &mut dyn Write, fix: &FixRecord) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<10} {:>12} {:>10}",
        "station", "mean_rssi_db", "est_sd_m"
    )?;
    for (r, range) in fix.reports.iter().zip(&fix.ranges) {
        writeln!(
            out,
            "{:<10} {:>12.2} {:>10.2}{}",
            r.station_id,
            r.mean_rssi_db,
            range.distance.meters,
            if range.distance.low_confidence {
                "  low-confidence"
            } else {
                ""
            }
        )?;
    }
    writeln!(out, "fix: {fix}")
}

fn cmd_locate(g: &GlobalOpts, stations: &Path, reports: &Path, out: &mut dyn Write) -> CmdResult {
    let model = load_model(g)?;
    let registry = load_registry(stations)?;
    if registry.len() < MIN_STATIONS {
        return Err(CliError::domain(anyhow!(
            "a 3-D fix needs at least {MIN_STATIONS} stations; registry has {}",
            registry.len()
        )));
    }
    let text = read_file(reports)?;
    let parsed = parse_report_log(&text)
        .with_context(|| format!("bad report log {}", reports.display()))
        .map_err(CliError::Usage)?;
    let lines: Vec<String> = parsed.iter().map(|r| r.encode()).collect();
    let result = ingest(&lines, &registry, model, FusionConfig::default());

    if result.stats.unknown_station > 0 {
        writeln!(
            out,
            "dropped {} reports from unknown stations",
            result.stats.unknown_station
        )
        .map_err(io_err)?;
    }
    for fix in &result.fixes {
        print_fix(out, fix).map_err(io_err)?;
    }
    if let Some(dir) = &g.out {
        let dir = out_dir(&GlobalOpts {
            out: Some(dir.clone()),
            ..Default::default()
        })?;
        let mut buf = Vec::new();
        write_fix_log(&mut buf, &result.fixes).map_err(io_err)?;
        write_artifact(&dir, "fixes.csv", &buf)?;
    }
    if result.fixes.is_empty() {
        return Err(CliError::domain(anyhow!(
            "no fix: fewer than {MIN_STATIONS} known stations reported in any epoch"
        )));
    }
    Ok(())
}

fn cmd_simulate(g: &GlobalOpts, path: &Path, out: &mut dyn Write) -> CmdResult {
    let text = read_file(path)?;
    let mut scenario = Scenario::from_toml_str(&text).map_err(|e| match e {
        ScenarioError::Invalid(_) => CliError::domain(e),
        ScenarioError::Parse(_) => CliError::usage(e),
    })?;
    if let Some(seed) = g.seed {
        scenario.seed = seed;
    }
    let streams = simulate(&scenario).map_err(CliError::domain)?;
    let reports = collect_reports(&scenario, &streams);

    let mut samples_csv = String::from("station_id,uav_id,timestamp_s,rssi_db,truth_distance_m\n");
    let mut emitted = 0usize;
    for stream in &streams {
        for s in &stream.samples {
            emitted += 1;
            samples_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                s.sample.station_id,
                s.sample.uav_id,
                s.sample.timestamp_s,
                s.sample.rssi_db,
                s.truth_distance_m
            ));
        }
    }
    let mut reports_csv =
        String::from("station_id,uav_id,window_end_s,mean_rssi_db,sample_count\n");
    for r in &reports {
        reports_csv.push_str(&r.encode());
    }
    let result = ingest(
        reports.iter().map(|r| r.encode()),
        &scenario.registry(),
        scenario.truth_model,
        scenario.collector,
    );
    let mut fixes_csv = Vec::new();
    write_fix_log(&mut fixes_csv, &result.fixes).map_err(io_err)?;

    let dir = out_dir(g)?;
    write_artifact(&dir, "samples.csv", samples_csv.as_bytes())?;
    write_artifact(&dir, "reports.csv", reports_csv.as_bytes())?;
    write_artifact(&dir, "fixes.csv", &fixes_csv)?;

    let slots: usize = scenario.stations.len()
        * scenario
            .waypoints
            .iter()
            .map(|w| (w.dwell_s / scenario.schedule.interval_s() + 1e-9).floor() as usize)
            .sum::<usize>();
    writeln!(out, "seed {}", scenario.seed).map_err(io_err)?;
    writeln!(out, "samples {emitted} of {slots} emission slots").map_err(io_err)?;
    writeln!(out, "reports {}", reports.len()).map_err(io_err)?;
    let unusable = scenario.unusable_waypoints();
    if !unusable.is_empty() {
        writeln!(
            out,
            "waypoints {unusable:?} dwell less than {} s and cannot be localized",
            scenario.schedule.dwell_requirement_s()
        )
        .map_err(io_err)?;
    }
    for fix in &result.fixes {
        writeln!(out, "fix: {fix}").map_err(io_err)?;
    }
    writeln!(
        out,
        "wrote samples.csv, reports.csv, fixes.csv to {}",
        dir.display()
    )
    .map_err(io_err)
}

fn cmd_replay(g: &GlobalOpts, which: &str, out: &mut dyn Write) -> CmdResult {
    let targets: Vec<Which> = if which == "all" {
        Which::ALL.to_vec()
    } else {
        vec![which
            .parse()
            .map_err(|e: String| CliError::usage(anyhow!(e)))?]
    };
    let dir = match &g.out {
        Some(_) => Some(out_dir(g)?),
        None => None,
    };
    let mut failed = Vec::new();
    for w in targets {
        let r = replay(w);
        writeln!(out, "== {} ==", w.name()).map_err(io_err)?;
        for c in &r.checks {
            writeln!(out, "{c}").map_err(io_err)?;
        }
        for n in &r.notes {
            writeln!(out, "note {n}").map_err(io_err)?;
        }
        if let Some(dir) = &dir {
            write_artifact(dir, &format!("{}.csv", w.name()), r.csv.as_bytes())?;
        }
        if !r.passed() {
            failed.push(w.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::domain(anyhow!(
            "out-of-tolerance cells in {}",
            failed.join(", ")
        )))
    }
}

fn cmd_collect(
    g: &GlobalOpts,
    stations: &Path,
    listen: &str,
    streams: usize,
    out: &mut dyn Write,
) -> CmdResult {
    let model = load_model(g)?;
    let registry = load_registry(stations)?;
    let listener = TcpListener::bind(listen)
        .with_context(|| format!("cannot listen on {listen}"))
        .map_err(CliError::Usage)?;
    writeln!(
        out,
        "listening on {} for {streams} stream(s)",
        listener.local_addr().map_err(io_err)?
    )
    .map_err(io_err)?;
    let mut fixes = Vec::new();
    let stats = serve_tcp(
        listener,
        streams,
        registry,
        model,
        FusionConfig::default(),
        |f| {
            fixes.push(f.clone());
        },
    )
    .map_err(CliError::usage)?;
    for f in &fixes {
        writeln!(out, "fix: {f}").map_err(io_err)?;
    }
    writeln!(
        out,
        "accepted {} reports, {} unknown station, {} malformed",
        stats.accepted, stats.unknown_station, stats.malformed
    )
    .map_err(io_err)?;
    if g.out.is_some() {
        let mut buf = Vec::new();
        write_fix_log(&mut buf, &fixes).map_err(io_err)?;
        write_artifact(&out_dir(g)?, "fixes.csv", &buf)?;
    }
    Ok(())
}
