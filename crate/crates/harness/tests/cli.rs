//! End-to-end runs of the `radtherm` binary: exit codes, flag overrides,
//! determinism and the CSV/JSON/binary layouts read downstream.

use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

const SMALL_RUN: &str = "[grid]\ncells = 40\nangular_order = 8\n";
const SMALL_TIME: &str = "seed = 11\n[regime]\nlight = \"unit\"\n[grid]\ncells = 30\nangular_order = 8\n\
                          [time]\nsteps = 4\nperturbation = 0.2\n";
const SMALL_STUDY: &str = "[grid]\ncells = 60\nangular_order = 8\n";
const SMALL_TABLE: &str = "[grid]\ncells = 100\nangular_order = 8\n[model]\ngroups = 4\n";
const SMALL_LAYERS: &str = "[grid]\nangular_order = 8\n[model]\ngroups = 2\n";
const SMALL_INIT: &str = "[grid]\nangular_order = 8\n[model]\ngroups = 2\n";

struct Outcome {
    code: i32,
    out: PathBuf,
    stderr: String,
    _dir: tempfile::TempDir,
}

fn radtherm(sub: &str, config: &str, extra: &[&str]) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_radtherm"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Outcome {
        code: o.status.code().unwrap(),
        out,
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        _dir: dir,
    }
}

fn ok(sub: &str, config: &str, extra: &[&str]) -> Outcome {
    let o = radtherm(sub, config, extra);
    assert_eq!(o.code, 0, "{sub} failed: {}", o.stderr);
    o
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(name)).unwrap()).unwrap()
}

/// Parsed CSV: the legend names, the header and the rows, after checking the layout.
struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn column(&self, name: &str) -> Vec<f64> {
        let k = self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[k].parse().unwrap()).collect()
    }
}

fn read_csv(path: &Path) -> Csv {
    let text = std::fs::read_to_string(path).unwrap();
    let (legend, body) = text.split_once('\n').unwrap();
    let legend = legend.strip_prefix("# columns: ").unwrap_or_else(|| panic!("{path:?} lacks a legend"));
    let names: Vec<&str> = legend.split("; ").map(|d| d.split_once(" = ").unwrap().0).collect();
    let mut r = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(header, names, "{path:?}: legend and header disagree");
    let rows: Vec<Vec<String>> = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect();
    assert!(!rows.is_empty(), "{path:?} has no rows");
    assert!(rows.iter().all(|row| row.len() == header.len()));
    Csv { header, rows }
}

/// Every CSV in `dir` is documented, rectangular and numeric outside `text_columns`.
fn check_csvs(dir: &Path, text_columns: &[&str]) -> usize {
    let mut n = 0;
    for (name, _) in files(dir) {
        if !name.ends_with(".csv") {
            continue;
        }
        let csv = read_csv(&dir.join(&name));
        for row in &csv.rows {
            for (h, v) in csv.header.iter().zip(row) {
                if text_columns.contains(&h.as_str()) {
                    continue;
                }
                assert!(
                    v.parse::<f64>().is_ok() || v == "true" || v == "false",
                    "{name}: {h} = {v:?} is not numeric"
                );
            }
        }
        n += 1;
    }
    n
}

#[test]
fn stationary_runs_write_profile_summary_and_snapshot() {
    let o = ok("run", SMALL_RUN, &[]);
    assert_eq!(check_csvs(&o.out, &[]), 1);
    let profile = read_csv(&o.out.join("profile.csv"));
    assert_eq!(profile.header, ["x", "T", "flux", "departure", "anisotropy"]);
    assert_eq!(profile.rows.len(), 40);
    let s = json(&o.out, "run.json");
    assert_eq!(s["experiment"], "single_run");
    assert_eq!(s["cells"], 40);
    assert_eq!(s["directions"], 8);
    for key in ["regime", "eps", "ell_m", "ell_t", "total_energy", "max_departure", "max_anisotropy", "seed"] {
        assert!(s.get(key).is_some(), "run.json lacks {key}");
    }

    // Header of three u64 sizes, then I row-major by (cell, direction, group), then T.
    let bytes = std::fs::read(o.out.join("snapshot.bin")).unwrap();
    let u = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap()) as usize;
    let (n, nd, ng) = (u(0), u(1), u(2));
    assert_eq!((n, nd), (40, 8));
    assert_eq!(bytes.len(), 8 * (3 + n * nd * ng + n));
    let f = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let t_off = 3 + n * nd * ng;
    let t = profile.column("T");
    for i in 0..n {
        assert_eq!(f(t_off + i), t[i]);
    }
    assert!((0..n * nd * ng).all(|k| f(3 + k) > 0.0));
}

#[test]
fn time_runs_add_a_history_and_repeat_byte_for_byte() {
    let a = ok("run", SMALL_TIME, &[]);
    let b = ok("run", SMALL_TIME, &[]);
    assert_eq!(files(&a.out), files(&b.out));
    let h = read_csv(&a.out.join("history.csv"));
    assert_eq!(h.header, ["step", "time", "energy", "T_min", "T_max", "departure_max"]);
    assert_eq!(h.rows.len(), 5);
    let t_min = h.column("T_min");
    let t_max = h.column("T_max");
    assert!(t_min[0] < t_max[0], "the seeded perturbation must show at step 0");

    let c = ok("run", SMALL_TIME, &["--seed", "12"]);
    assert_ne!(files(&a.out)["profile.csv"], files(&c.out)["profile.csv"]);
    assert_eq!(json(&c.out, "run.json")["seed"], 12);
}

#[test]
fn studies_report_orders_and_limit_profiles() {
    let o = ok("study", SMALL_STUDY, &[]);
    assert_eq!(check_csvs(&o.out, &[]), 7);
    let r = json(&o.out, "study.json");
    assert_eq!(r["experiment"], "convergence_study");
    assert_eq!(r["partial"], false);
    assert!(r["failure"].is_null());
    assert_eq!(r["entries"].as_array().unwrap().len(), 3);
    assert!(r["order_linf"].is_f64() && r["order_l1"].is_f64());
    for e in r["entries"].as_array().unwrap() {
        let w = e["window"].as_array().unwrap();
        assert!(w[0].as_f64().unwrap() < w[1].as_f64().unwrap());
        assert_eq!(e["left"]["kind"], "temperature");
    }
    let conv = read_csv(&o.out.join("convergence.csv"));
    assert_eq!(conv.column("eps"), [0.2, 0.1, 0.05]);
    let limit = read_csv(&o.out.join("limit_0.csv"));
    assert_eq!(limit.header, ["x", "T", "phi_0", "flux"]);
    // A stationary slab carries the same flux through every cell, up to the Newton tolerance.
    let flux = limit.column("flux");
    assert!(flux.iter().all(|f| (f - flux[0]).abs() <= 1e-6 * flux[0].abs()));
    let p = read_csv(&o.out.join("profile_2.csv"));
    assert_eq!(p.header, ["x", "T_kinetic", "T_limit", "error", "in_window", "departure", "anisotropy"]);
    let timings = json(&o.out, "timings.json");
    assert_eq!(timings.as_array().unwrap().len(), 3);
}

#[test]
fn study_output_does_not_depend_on_the_worker_count() {
    let a = ok("study", SMALL_STUDY, &["--workers", "1"]);
    let b = ok("study", SMALL_STUDY, &["--workers", "3"]);
    let (mut fa, mut fb) = (files(&a.out), files(&b.out));
    fa.remove("timings.json");
    fb.remove("timings.json");
    assert_eq!(fa, fb);
}

#[test]
fn regime_four_studies_keep_departure_while_anisotropy_falls() {
    let cfg = format!(
        "{SMALL_STUDY}[regime]\nbeta = 2.0\ngamma = -1.0\neps = [0.1, 0.05, 0.025]\n\
         [model]\npreset = \"multigroup\"\ngroups = 4\nalpha_s = 1.0\n"
    );
    let o = ok("study", &cfg, &[]);
    let r = json(&o.out, "study.json");
    let entries = r["entries"].as_array().unwrap();
    let an: Vec<f64> = entries.iter().map(|e| e["bulk_anisotropy"].as_f64().unwrap()).collect();
    assert!(an.windows(2).all(|w| w[1] < w[0]), "{an:?}");
    assert!(entries.iter().all(|e| e["bulk_departure"].as_f64().unwrap() > 0.1));
}

#[test]
fn regime_tables_carry_widths_and_columns() {
    let o = ok("table", SMALL_TABLE, &[]);
    assert_eq!(check_csvs(&o.out, &["regime", "thermalization", "bulk", "column"]), 6);
    let t = json(&o.out, "regime_table.json");
    assert_eq!(t["experiment"], "regime_table");
    let rows = t["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let columns = ["coincident", "nested", "transition", "non_equilibrium"];
    for r in rows {
        assert!(r["milne_width"].is_f64() && r["thermal_width"].is_f64());
        assert!(columns.contains(&r["column"].as_str().unwrap()), "{r}");
    }
    let csv = read_csv(&o.out.join("regime_table.csv"));
    assert_eq!(csv.rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["1.1", "1.2", "2", "3", "4"]);
    assert_eq!(read_csv(&o.out.join("regime_2.csv")).header.len(), 5);
}

#[test]
fn layer_studies_write_both_walls() {
    let o = ok("layers", SMALL_LAYERS, &[]);
    check_csvs(&o.out, &[]);
    let r = json(&o.out, "layers.json");
    assert_eq!(r["experiment"], "layer_study");
    let walls = r["walls"].as_array().unwrap();
    assert_eq!(walls.iter().map(|w| w["side"].as_str().unwrap()).collect::<Vec<_>>(), ["left", "right"]);
    for w in walls {
        assert!(w["milne_width"].is_f64());
        assert!(w["certificate"]["tail_flatness"].is_f64());
        assert_eq!(w["far_intensity"].as_array().unwrap().len(), 2);
    }
    let m = read_csv(&o.out.join("milne_left.csv"));
    assert_eq!(m.header, ["y", "anisotropy", "T", "phi_0", "phi_1"]);
}

#[test]
fn initial_layer_studies_write_trajectories_and_the_corner() {
    let o = ok("init-layers", SMALL_INIT, &[]);
    check_csvs(&o.out, &[]);
    let r = json(&o.out, "init_layers.json");
    assert_eq!(r["experiment"], "initial_layer_study");
    let variants = r["variants"].as_array().unwrap();
    assert!(!variants.is_empty());
    for v in variants {
        let name = v["variant"].as_str().unwrap();
        assert!(v["closed_form_error"].as_f64().unwrap() < 1e-8, "{name}");
        let traj = read_csv(&o.out.join(format!("trajectory_{name}.csv")));
        assert_eq!(traj.header[..3], ["tau", "T", "anisotropy"]);
        assert_eq!(traj.rows.len(), v["steps"].as_u64().unwrap() as usize + 1);
    }
    assert!(r["corner"]["case"].is_string());
    let corner = read_csv(&o.out.join("corner.csv"));
    assert_eq!(corner.header, ["tau", "T_wall", "T_far", "phi_wall", "phi_far"]);
}

#[test]
fn every_subcommand_is_deterministic() {
    for (sub, cfg) in [
        ("run", SMALL_RUN),
        ("table", SMALL_TABLE),
        ("layers", SMALL_LAYERS),
        ("init-layers", SMALL_INIT),
    ] {
        assert_eq!(files(&ok(sub, cfg, &[]).out), files(&ok(sub, cfg, &[]).out), "{sub}");
    }
}

#[test]
fn non_convergence_exits_two() {
    let o = radtherm("run", &format!("{SMALL_RUN}[solver]\nmax_newton = 1\n"), &[]);
    assert_eq!(o.code, 2, "{}", o.stderr);

    let o = radtherm("study", &format!("{SMALL_STUDY}[solver]\nmax_newton = 1\n"), &[]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    let r = json(&o.out, "study.json");
    assert_eq!(r["partial"], true);
    assert!(r["failure"].as_str().unwrap().contains("eps"));
    assert!(r["order_linf"].is_null());
}

#[test]
fn config_errors_exit_three() {
    for (sub, cfg) in [
        ("run", "[regime]\nbeta = 0.5\ngamma = 0.5\n"),
        ("run", "not toml at all ["),
        ("run", "[grid]\ncolumns = 3\n"),
        ("run", "experiment = \"regime_table\"\n"),
        ("study", "[regime]\nbeta = 0.0\ngamma = -1.0\n"),
        ("study", "[regime]\neps = [0.1, 0.05]\n"),
        ("init-layers", "[regime]\nlight = \"stationary\"\n"),
    ] {
        let o = radtherm(sub, cfg, &[]);
        assert_eq!(o.code, 3, "{sub} with {cfg:?}: {}", o.stderr);
        assert!(o.stderr.starts_with("radtherm: "), "{}", o.stderr);
        assert!(!o.out.exists());
    }
    assert_eq!(radtherm("run", SMALL_RUN, &["--workers", "0"]).code, 3);
    assert_eq!(radtherm("run", SMALL_RUN, &["--bogus"]).code, 3);
    assert_eq!(radtherm("run", SMALL_RUN, &["--seed", "minus one"]).code, 3);
    let missing = Command::new(env!("CARGO_BIN_EXE_radtherm"))
        .args(["run", "--config", "/nonexistent/radtherm.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));
    let bare = Command::new(env!("CARGO_BIN_EXE_radtherm")).output().unwrap();
    assert_eq!(bare.status.code(), Some(3));
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"], &["study", "--help"]] {
        let o = Command::new(env!("CARGO_BIN_EXE_radtherm")).args(args).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{args:?}");
    }
}

#[test]
fn flags_override_file_values() {
    let o = ok("run", &format!("seed = 3\nworkers = 2\noutput = \"elsewhere\"\n{SMALL_RUN}"), &["--seed", "9"]);
    assert!(o.out.join("run.json").exists());
    assert_eq!(json(&o.out, "run.json")["seed"], 9);
}
