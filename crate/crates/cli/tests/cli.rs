use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use simnet_core::io::parse_touchstone;
use simnet_core::linalg::rel_error;
use simnet_core::{Experiment, ExperimentConfig};

fn simnet(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_simnet"));
    cmd.args(args).env_remove("SIMNET_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("simnet runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, body: serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

fn small_comm() -> serde_json::Value {
    serde_json::json!({
        "scenario": {"geometry": {"layers": 2, "array_shape": [4, 1]}},
        "optimizer": {"descent": {"max_iters": 60}, "max_sweeps": 4}
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "resolved_config.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn pipeline_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small_comm());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let out = simnet(
            &[
                "pipeline",
                "--config",
                s(&cfg),
                "--out-dir",
                s(dir),
                "--levels",
                "4",
                "--seed",
                "11",
            ],
            &[("SIMNET_THREADS", threads)],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let fa = files(&a);
    assert!(
        fa.len() >= 8,
        "{:?}",
        fa.iter().map(|f| &f.0).collect::<Vec<_>>()
    );
    assert_eq!(fa, files(&b));
    let resolved = ExperimentConfig::read(&a.join("resolved_config.json")).unwrap();
    assert_eq!(resolved.seed, 11);
    assert_eq!(resolved.optimizer.descent.rng_seed, 11);
    assert_eq!(resolved.cells.levels, Some(4));
}

#[test]
fn exit_codes_by_failure_category() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let bad_key = write_config(tmp.path(), serde_json::json!({"optimiser": {}}));
    assert_eq!(
        code(&simnet(
            &[
                "optimize",
                "--config",
                s(&bad_key),
                "--out-dir",
                s(&out_dir)
            ],
            &[]
        )),
        3
    );

    let broken = tmp.path().join("broken.json");
    std::fs::write(&broken, "{\"seed\": 1,\n").unwrap();
    assert_eq!(code(&simnet(&["optimize", "--config", s(&broken)], &[])), 4);

    let missing = tmp.path().join("missing.json");
    assert_eq!(
        code(&simnet(&["optimize", "--config", s(&missing)], &[])),
        7
    );

    assert_eq!(code(&simnet(&["pipeline", "--snr-sweep", "0:0:5"], &[])), 2);
    assert_eq!(code(&simnet(&["pipeline", "--model", "x"], &[])), 2);
    assert_eq!(code(&simnet(&["frobnicate"], &[])), 2);
    assert_eq!(
        code(&simnet(
            &["synth", "--out-dir", s(&out_dir)],
            &[("SIMNET_THREADS", "0")]
        )),
        2
    );

    let bad_ts = tmp.path().join("bad.s2p");
    std::fs::write(
        &bad_ts,
        "# GHz S RI R 50\n1 0 0 0 0 0 0 0 0\n0.5 0 0 0 0 0 0 0 0\n",
    )
    .unwrap();
    let cfg = write_config(
        tmp.path(),
        serde_json::json!({"scenario": {"touchstone": {"path": bad_ts, "sources": 1}}}),
    );
    assert_eq!(code(&simnet(&["optimize", "--config", s(&cfg)], &[])), 4);
}

#[test]
fn synth_writes_a_touchstone_network() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), small_comm());
    let out = simnet(
        &[
            "synth",
            "--config",
            s(&cfg_path),
            "--out-dir",
            s(tmp.path()),
            "--format",
            "ma",
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ports = 4 + 2 * 2 * 4 + 4;
    let file = parse_touchstone(&tmp.path().join(format!("network.s{ports}p"))).unwrap();
    let cfg = ExperimentConfig::read(&cfg_path).unwrap();
    let exp = Experiment::build(&cfg).unwrap();
    assert!(rel_error(&file.data[0], &exp.system.scattering().assemble()) <= 1e-12);
    let topo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("topology.json")).unwrap())
            .unwrap();
    assert_eq!(topo["sim_ports"], 16);

    let mut loaded = cfg.clone();
    loaded.scenario.touchstone = Some(simnet_core::io::TouchstoneSource {
        path: tmp.path().join(format!("network.s{ports}p")),
        frequency_hz: None,
        sources: 4,
    });
    let a = Experiment::build(&loaded).unwrap();
    let (la, _, _) = a.system.scattering().dims();
    assert_eq!(la, 4);
    assert!(rel_error(&a.system.scattering().s_ee, &exp.system.scattering().s_ee) <= 1e-12);
}

#[test]
fn export_states_matches_pipeline_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small_comm());
    let run = tmp.path().join("run");
    let out = simnet(
        &[
            "optimize",
            "--config",
            s(&cfg),
            "--out-dir",
            s(&run),
            "--levels",
            "8",
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let exported = tmp.path().join("exported.json");
    let out = simnet(
        &[
            "export-states",
            "--config",
            s(&cfg),
            "--levels",
            "8",
            "--state",
            s(&run.join("levels.json")),
            "--output",
            s(&exported),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(&exported).unwrap(),
        std::fs::read(run.join("states_manifest.json")).unwrap()
    );
    let out = simnet(
        &[
            "evaluate",
            "--config",
            s(&cfg),
            "--out-dir",
            s(&run),
            "--snr-sweep",
            "0:10:20",
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(run.join("capacity.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn weak_model_equals_dense_model_on_isolated_layers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small_comm());
    let mut channels = Vec::new();
    for model in ["ni", "w"] {
        let dir = tmp.path().join(model);
        let out = simnet(
            &[
                "pipeline",
                "--config",
                s(&cfg),
                "--out-dir",
                s(&dir),
                "--model",
                model,
            ],
            &[],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("channel.json")).unwrap())
                .unwrap();
        let y: Vec<f64> = v["continuous"]["y"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|row| row.as_array().unwrap().iter())
            .flat_map(|z| z.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
            .collect();
        channels.push((y, v["continuous"]["loss"].as_f64().unwrap()));
    }
    let (a, b) = (&channels[0], &channels[1]);
    let scale = a.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff =
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
    assert!(diff <= 1e-8 * scale, "relative difference {}", diff / scale);
    assert!((a.1 - b.1).abs() <= 1e-8 * a.1.max(1.0));
}
