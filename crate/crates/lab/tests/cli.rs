use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use moistpe::config::Settings;
use moistpe::mpe1::Snapshot;
use moistpe_core::diagnostics::constraint_residual;
use moistpe_core::mesh::Grid;

const SMALL: &str = "\
[grid]
ntheta = 8
nphi = 8
nxi = 5
[noise]
Lmax = 2
Kmax = 2
[run]
dt = 1e-3
steps = 20
init = random:0.5
";

fn moistpe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moistpe"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn checks_pass_on_the_default_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = moistpe(&["checks", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("checks.csv")).unwrap();
    assert!(csv.starts_with("check,value,bound,pass\n"));
    assert!(!csv.contains(",false"));
    // The shipped desk config gives the same result.
    let desk = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.cfg");
    let out2 = tmp.path().join("out2");
    let o = moistpe(&["checks", "--config", desk, "--out", out2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn validation_errors_exit_2_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let cases = [
        (SMALL.replace("ntheta = 8\n", ""), "ntheta"),
        (format!("{SMALL}humidity = 3\n"), "humidity"),
        (SMALL.replace("dt = 1e-3", "dt = 1e-2"), "stability bound"),
        (format!("{SMALL}[physics]\nbeta = 0\n"), "beta"),
        (format!("{SMALL}[experiment]\nexperiment = measure\n"), "experiment"),
    ];
    for (text, needle) in cases {
        let cfg = write_config(tmp.path(), &text);
        let o = moistpe(&["run", "--config", &cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "{needle}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{needle}: {}", stderr(&o));
        assert!(!Path::new(out).exists(), "nothing is written on validation errors");
    }
}

#[test]
fn stability_message_cites_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("dt = 1e-3", "dt = 1e-2"));
    let o = moistpe(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    let bound = Grid::new(8, 8, 5, 0.5, 1.0).unwrap().stable_dt();
    assert!(stderr(&o).contains(&bound.to_string()), "{}", stderr(&o));
}

#[test]
fn refuses_non_empty_output_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let o = moistpe(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--force"));
    let o = moistpe(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--force"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("keep.txt").exists());
}

#[test]
fn run_outputs_are_byte_identical_and_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let dirs = ["a", "b", "c"].map(|d| tmp.path().join(d));
    for (dir, seed) in dirs.iter().zip(["0", "0", "5"]) {
        let o = moistpe(&[
            "run",
            "--config",
            &cfg,
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            seed,
            "--snapshot-every",
            "10",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let files = ["energy.csv", "manifest.txt", "final.mpe1", "snapshot_0.mpe1", "snapshot_10.mpe1", "snapshot_20.mpe1"];
    for f in files {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(dirs[0].join("final.mpe1")).unwrap(), fs::read(dirs[2].join("final.mpe1")).unwrap());

    let energy = fs::read_to_string(dirs[0].join("energy.csv")).unwrap();
    assert!(energy.starts_with("step,l2_v,l2_T,l2_q,"));
    assert_eq!(energy.lines().count(), 22);

    // The manifest is itself a valid config reproducing the run.
    let manifest = fs::read_to_string(dirs[2].join("manifest.txt")).unwrap();
    let echoed = Settings::parse(&manifest).unwrap();
    assert_eq!(echoed.run.seed, 5);
    assert_eq!(echoed.run.snapshot_every, 10);

    let grid = Grid::new(8, 8, 5, 0.5, 1.0).unwrap();
    let snap = Snapshot::read(fs::File::open(dirs[0].join("snapshot_10.mpe1")).unwrap()).unwrap();
    assert_eq!(snap.dims, [8, 8, 5]);
    let u = snap.to_state(&grid, 1.0, 1.0).unwrap();
    assert!(constraint_residual(&grid, &u.v) <= 1e-10 * u.v.max_speed());
}

#[test]
fn blow_up_exits_3_with_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("random:0.5", "random:1e4").replace("steps = 20", "steps = 200"));
    let out = tmp.path().join("out");
    let o = moistpe(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("blow-up at step"));
    assert!(out.join("last_valid.mpe1").exists());
    assert!(out.join("energy.csv").exists());
}

#[test]
fn dump_spectrum_lists_every_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = moistpe(&["dump-spectrum", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("component,l,m,k,lambda,gamma_mode"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    // Scalars: ℓ = 0..=2 → 9 harmonics; velocity has no ℓ = 0 mode but
    // two fields per ℓ ≥ 1 → 16; two vertical modes each.
    let count = |c: &str| rows.iter().filter(|r| r[0] == c).count();
    assert_eq!(count("2"), 18);
    assert_eq!(count("3"), 18);
    assert!(count("1") > 0);
    for r in &rows {
        let lambda: f64 = r[4].parse().unwrap();
        let gamma: f64 = r[5].parse().unwrap();
        assert!((lambda - gamma.powf(-2.0)).abs() <= 1e-12 * lambda);
    }
}

#[test]
fn attractor_experiments_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}[experiment]\nmembers = 3\nfirst_depth = 8\ndepths = 3\nrhos = 0.5, 1\nburn_in = 10\nwindow = 200\nsample_every = 5\n"
    );
    let cfg = write_config(tmp.path(), &text);
    for (cmd, files) in [
        ("pullback", &["pullback.csv", "pullback_summary.csv"][..]),
        ("absorb", &["absorb.csv"][..]),
        ("measure", &["measure.csv", "measure_summary.csv"][..]),
    ] {
        let out = tmp.path().join(cmd);
        let o = moistpe(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        for f in files {
            assert!(out.join(f).exists(), "{cmd}: {f}");
        }
    }
    let pull = fs::read_to_string(tmp.path().join("pullback/pullback.csv")).unwrap();
    assert!(pull.starts_with("s,pair,distance_V,diameter\n"));
    // Three starts, three pairs each.
    assert_eq!(pull.lines().count(), 1 + 9);
    let measure = fs::read_to_string(tmp.path().join("measure/measure.csv")).unwrap();
    assert!(measure.starts_with("observable,window,mean,stderr\n"));
    assert_eq!(measure.lines().count(), 1 + 4 * 3);
}

#[test]
fn buoyancy_hypothesis_is_enforced_for_attractor_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let strong = format!("{SMALL}[physics]\nb = 0.4\n[experiment]\nfirst_depth = 4\ndepths = 1\nmembers = 2\n");
    let cfg = write_config(tmp.path(), &strong);
    let o = moistpe(&["pullback", "--config", &cfg, "--out", tmp.path().join("a").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("allow_large_buoyancy"));
    let cfg = write_config(tmp.path(), &format!("{strong}allow_large_buoyancy = true\n"));
    let o = moistpe(&["pullback", "--config", &cfg, "--out", tmp.path().join("b").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // Plain runs do not need the hypothesis.
    let cfg = write_config(tmp.path(), &format!("{SMALL}[physics]\nb = 0.4\n"));
    let o = moistpe(&["run", "--config", &cfg, "--out", tmp.path().join("c").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
