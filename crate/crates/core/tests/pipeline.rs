use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::thread;

use lorafix_core::simulator::{collect_reports, simulate_with, Parallelism, StationSpec, Waypoint};
use lorafix_core::station_net::{ingest, serve_tcp};
use lorafix_core::{MessageFormat, NoiseProfile, PathLossModel, Position3D, Scenario, UavId};

fn scenario(noise: NoiseProfile) -> Scenario {
    let stations = [
        ("GS1", 0.0, 0.0, 0.0),
        ("GS2", 300.0, 0.0, 12.0),
        ("GS3", 300.0, 300.0, 0.0),
        ("GS4", 0.0, 300.0, 25.0),
        ("GS5", 150.0, -100.0, 4.0),
    ];
    let text = format!(
        "seed = 99\nuav_id = \"A7x\"\nmessage_format = \"M2\"\n\
         [truth_model]\nL = 2.0\nC = -40.0\n[noise]\nanchors = [[1.0, 0.0]]\n{}{}",
        stations
            .iter()
            .map(|(id, x, y, z)| format!(
                "[[stations]]\nid = \"{id}\"\nposition = [{x}, {y}, {z}]\n"
            ))
            .collect::<String>(),
        "[[waypoints]]\nposition = [120.0, 80.0, 60.0]\ndwell_s = 10.0\n\
         [[waypoints]]\nposition = [200.0, 250.0, 110.0]\ndwell_s = 14.0\n",
    );
    let mut sc = Scenario::from_toml_str(&text).unwrap();
    sc.noise = noise;
    sc
}

#[test]
fn toml_scenario_fields() {
    let sc = scenario(NoiseProfile::silent());
    assert_eq!(sc.uav_id, UavId::new("A7x").unwrap());
    assert_eq!(sc.message_format, MessageFormat::M2);
    assert_eq!(sc.truth_model, PathLossModel::new(2.0, -40.0));
    assert_eq!(sc.stations.len(), 5);
    assert_eq!(
        sc.waypoints[1],
        Waypoint {
            position: Position3D::new(200.0, 250.0, 110.0),
            dwell_s: 14.0
        }
    );
    assert_eq!(
        sc.stations[4],
        StationSpec {
            id: "GS5".into(),
            position: Position3D::new(150.0, -100.0, 4.0),
            bias_db: 0.0
        }
    );
}

#[test]
fn serial_and_threaded_simulation_agree() {
    let sc = scenario(NoiseProfile::field());
    assert_eq!(
        simulate_with(&sc, Parallelism::Serial).unwrap(),
        simulate_with(&sc, Parallelism::PerStation).unwrap()
    );
}

#[test]
fn zero_noise_fixes_over_tcp_match_batch_and_truth() {
    let sc = scenario(NoiseProfile::silent());
    let streams = simulate_with(&sc, Parallelism::PerStation).unwrap();
    let reports = collect_reports(&sc, &streams);
    let batch = ingest(
        reports.iter().map(|r| r.encode()),
        &sc.registry(),
        sc.truth_model,
        sc.collector,
    );
    assert_eq!(batch.fixes.len(), 2);
    for (fix, wp) in batch.fixes.iter().zip(&sc.waypoints) {
        let o = fix.result.as_ref().unwrap();
        assert!(o.position.distance_to(&wp.position) < 1e-6);
        assert_eq!(o.stations_used.len(), 5);
    }

    // One connection sends every report, so arrival order is preserved.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let lines: Vec<String> = reports.iter().map(|r| r.encode()).collect();
    let sender = thread::spawn(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        for l in lines {
            s.write_all(l.as_bytes()).unwrap();
        }
    });
    let mut live = Vec::new();
    let stats = serve_tcp(
        listener,
        1,
        sc.registry(),
        sc.truth_model,
        sc.collector,
        |f| live.push(f.clone()),
    )
    .unwrap();
    sender.join().unwrap();
    assert_eq!(stats.accepted, reports.len());
    assert_eq!(live, batch.fixes);
}
