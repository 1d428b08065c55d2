//! End-to-end tests of the binary: exit codes, artifact layout, determinism
//! and golden-figure reproduction.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tiermenu"))
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.scn");
    fs::write(&path, body).unwrap();
    path
}

const BASE: &str = "\
[distribution]
kind = power
alpha = 1.0

[quality]
kind = canonical

[regime]
kind = fixed
c_m = 0.1

[outputs]
artifacts = summary, price-schedule, choice-schedule
single_class = true
";

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn summary_field(out_dir: &Path, column: &str) -> f64 {
    let text = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    row[idx].parse().unwrap()
}

#[test]
fn solve_fixed_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), BASE);
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "solve-fixed",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["summary.csv", "price_schedule.csv", "choice_schedule.csv"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    assert!((summary_field(&out_dir, "marginal_user") - 0.5).abs() < 1e-6);
    assert!((summary_field(&out_dir, "profit") - 0.10505190990589924).abs() < 1e-6);
    assert!((summary_field(&out_dir, "single_class_profit") - 0.0962781400198).abs() < 1e-6);
}

#[test]
fn identical_scenarios_produce_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), BASE);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&[
            "solve-fixed",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    for f in ["summary.csv", "price_schedule.csv", "choice_schedule.csv"] {
        let a = fs::read(out_a.join(f)).unwrap();
        let b = fs::read(out_b.join(f)).unwrap();
        assert_eq!(a, b, "nondeterministic output in {f}");
    }
}

#[test]
fn parse_errors_exit_2_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), &format!("{BASE}frobnicate = 1\n"));
    let out = run(&["solve-fixed", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 15"), "{stderr}");
    assert!(stderr.contains("frobnicate"), "{stderr}");
}

#[test]
fn ill_conditioned_model_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    // heavily skewed power family: the density underflows near zero and the
    // derivation refuses to continue
    let body = BASE.replace("alpha = 1.0", "alpha = 12.0");
    let scenario = write_scenario(tmp.path(), &body);
    let out = run(&["solve-fixed", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn wrong_regime_for_subcommand_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), BASE);
    let out = run(&["solve-variable", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inadmissible_menu_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{BASE}\n[menu]\nclass = 0.2 0.6\nclass = 0.5 0.2\n");
    let scenario = write_scenario(tmp.path(), &body);
    let out = run(&["menu-eval", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn single_class_at_abundant_capacity() {
    let tmp = tempfile::tempdir().unwrap();
    let body = BASE.replace("c_m = 0.1", "c_m = 0.5");
    let scenario = write_scenario(tmp.path(), &body);
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "single-class",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(out_dir.join("single_class.csv")).unwrap();
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    // price, congestion, profit
    assert!((row[0] - 0.5).abs() < 1e-6);
    assert!(row[1] < 1e-6);
    assert!((row[2] - 0.25).abs() < 1e-6);
}

#[test]
fn sweep_reports_proved_trends() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), BASE);
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "sweep",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--param",
        "c_m",
        "--values",
        "0.1,0.2,0.3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let profits: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert_eq!(profits.len(), 3);
    assert!(profits[0] < profits[1] && profits[1] < profits[2]);
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("shadow price decreasing in c_m: true"));
    assert!(report.contains("profit increasing in c_m: true"));
}

#[test]
fn brute_force_subcommand_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{BASE}\n[search]\nk = 2\nresolution = 8\n");
    let scenario = write_scenario(tmp.path(), &body);
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "brute-force",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("brute_menu.csv").is_file());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("brute-force profit"), "{stdout}");
}

#[test]
fn payg_flag_keeps_exclusion_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), BASE);
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "solve-fixed",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--payg",
    ]);
    assert!(out.status.success());
    assert!((summary_field(&out_dir, "marginal_user") - 0.5).abs() < 1e-6);
}

#[test]
fn reproduce_rejects_unknown_figure() {
    let out = run(&["reproduce", "fig9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_scenarios_stay_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut checked = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("scn") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        tiermenu_cli::scenario::Scenario::parse(&text)
            .unwrap_or_else(|e| panic!("{} does not parse: {e}", path.display()));
        checked += 1;
    }
    assert!(checked >= 5, "expected the shipped scenario set, found {checked}");
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').filter_map(|c| c.parse().ok()).collect())
        .collect()
}

#[test]
fn reproduced_figures_match_golden_copies() {
    let golden_root = Path::new(env!("CARGO_MANIFEST_DIR")).join("golden");
    for figure in ["fig1", "fig2", "fig3", "fig4", "fig5"] {
        let tmp = tempfile::tempdir().unwrap();
        let out_dir = tmp.path().join("out");
        let out = run(&[
            "reproduce",
            figure,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let golden_dir = golden_root.join(figure);
        let mut compared = 0;
        for entry in fs::read_dir(&golden_dir).unwrap() {
            let entry = entry.unwrap();
            let name = entry.file_name();
            let fresh = out_dir.join(&name);
            assert!(fresh.is_file(), "missing artifact {name:?}");
            assert_eq!(
                fs::read(entry.path()).unwrap(),
                fs::read(&fresh).unwrap(),
                "artifact {name:?} differs from its golden copy"
            );
            compared += 1;
        }
        assert!(compared > 0, "no golden files for {figure}");

        match figure {
            "fig1" => {
                // proven direction: more capacity lowers every user's
                // chosen congestion
                let scarce = read_csv(&out_dir.join("fig1_choice_0p05.csv"));
                let ample = read_csv(&out_dir.join("fig1_choice_0p45.csv"));
                for (a, b) in scarce.iter().zip(&ample) {
                    assert!(b[1] <= a[1] + 1e-9, "choice curve must shift down");
                }
            }
            "fig2" => {
                let rows = read_csv(&out_dir.join("fig2.csv"));
                for w in rows.windows(2) {
                    assert!(w[1][1] <= w[0][1] + 1e-9, "consumption rose with t");
                    assert!(w[1][2] <= w[0][2] + 1e-9, "profit rose with t");
                }
            }
            "fig3" => {
                let rows = read_csv(&out_dir.join("fig3_summary.csv"));
                for w in rows.windows(2) {
                    assert!(w[1][1] > w[0][1], "marginal user must rise with alpha");
                    assert!(w[1][3] >= w[0][3] - 1e-12, "premium range must narrow");
                }
            }
            "fig4" => {
                let rows = read_csv(&out_dir.join("fig4.csv"));
                let gap_at = |c: f64| -> f64 {
                    let r = rows
                        .iter()
                        .find(|r| (r[0] - c).abs() < 1e-9)
                        .expect("capacity row");
                    (r[1] - r[2]) / r[1]
                };
                for r in &rows {
                    assert!(r[1] >= r[2] - 1e-9, "differentiation must dominate");
                }
                // the gap decays toward abundance
                assert!(gap_at(0.48) < gap_at(0.36) && gap_at(0.36) < gap_at(0.24));
            }
            "fig5" => {
                for tag in ["0p11", "0p22"] {
                    let rows = read_csv(&out_dir.join(format!("fig5_{tag}.csv")));
                    // differentiation admits more subscribers: positive
                    // utility starts earlier
                    let first_diff = rows.iter().find(|r| r[1] > 1e-9).unwrap()[0];
                    let first_single = rows.iter().find(|r| r[2] > 1e-9).unwrap()[0];
                    assert!(first_diff < first_single);
                }
            }
            _ => {}
        }
    }
}
