use dcep_core::baseline::BaselineConfig;
use dcep_core::harness::report::{line_chart, panels, Series};
use dcep_core::harness::*;
use dcep_core::plant::{plant_solver_config, PlantState};
use dcep_core::PlantParams;

fn short_week() -> Scenario {
    synth_scenario(1, 1, &SynthProfile::default()).unwrap()
}

fn baseline_run(sc: &Scenario) -> RunReport {
    let p = PlantParams::default();
    let mut c = BaselineController::new(BaselineConfig::default(), p.clone());
    simulate(&mut c, sc, PlantState::nominal(&p), &p, &plant_solver_config()).unwrap()
}

#[test]
fn scenario_round_trip() {
    let sc = short_week();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    sc.save(&path).unwrap();
    assert_eq!(Scenario::load(&path, sc.tau).unwrap(), sc);
}

#[test]
fn one_row_scenario_with_longer_average_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    std::fs::write(&path, "timestamp,t_oawb,q_l_ref,price\n0,25,1300,0.1\n").unwrap();
    assert!(Scenario::load(&path, 6).is_err());
}

#[test]
fn zero_price_costs_nothing() {
    let mut sc = short_week().window(0, 36).unwrap();
    for r in &mut sc.rows {
        r.price = 0.0;
    }
    let run = baseline_run(&sc);
    assert_eq!(run.total_cost, 0.0);
}

#[test]
fn cost_is_price_times_energy() {
    let sc = short_week();
    let run = baseline_run(&sc);
    let t_s = PlantParams::default().t_s;
    let direct: f64 = run.rows.iter().map(|r| r.price * r.outputs.p_tot * t_s / 3600.0).sum();
    assert!((run.total_cost - direct).abs() <= 1e-9 * direct);
}

#[test]
fn price_average_matches_direct_windows() {
    let sc = short_week();
    let avg = sc.price_average();
    for k in 0..sc.len() {
        let lo = (k + 1).saturating_sub(sc.tau);
        let window = &sc.rows[lo..=k];
        let direct = window.iter().map(|r| r.price).sum::<f64>() / window.len() as f64;
        assert!((avg[k] - direct).abs() <= 1e-15 * direct.max(1.0), "k={k}");
    }
}

#[test]
fn simulation_is_deterministic() {
    let sc = short_week().window(0, 48).unwrap();
    let a = baseline_run(&sc);
    let b = baseline_run(&sc);
    let strip = |r: &RunReport| r.rows.iter().map(|t| (t.input, t.state, t.outputs)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn trajectory_csv_round_trip() {
    let sc = short_week().window(0, 30).unwrap();
    let run = baseline_run(&sc);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    run.write_trajectory_csv(&path).unwrap();
    let back = read_trajectory_csv(&path).unwrap();
    assert_eq!(back, run.rows);
}

#[test]
fn comparison_savings_are_relative_to_baseline() {
    let sc = short_week().window(0, 24).unwrap();
    let base = baseline_run(&sc);
    assert_eq!(comparison(std::slice::from_ref(&base)).len(), 1);
    let mut other = base.clone();
    other.controller = "other".into();
    other.total_cost = 0.8 * base.total_cost;
    let rows = comparison(&[other, base]);
    assert!((rows[0].savings - 0.2).abs() < 1e-12);
    assert_eq!(rows[1].savings, 0.0);
}

fn polyline_points(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter_map(|l| l.split("points=\"").nth(1))
        .map(|rest| {
            rest.split('"')
                .next()
                .unwrap()
                .split_whitespace()
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

#[test]
fn chart_axes_cover_the_data() {
    let hours: Vec<f64> = (0..50).map(|k| k as f64 / 6.0).collect();
    let a: Vec<f64> = hours.iter().map(|h| 1000.0 + 300.0 * h.sin()).collect();
    let b: Vec<f64> = hours.iter().map(|h| 900.0 + 50.0 * h).collect();
    let price: Vec<f64> = hours.iter().map(|h| 0.1 + 0.02 * h.cos()).collect();
    let svg = line_chart("t", "kW", &hours, &[Series { name: "a", values: a }, Series { name: "b", values: b }], &price);
    let lines = polyline_points(&svg);
    assert_eq!(lines.len(), 3);
    let [main, strip] = panels();
    let eps = 0.01;
    for (pts, rect) in [(&lines[0], main), (&lines[1], main), (&lines[2], strip)] {
        for &(x, y) in pts {
            assert!(x >= rect.0 - eps && x <= rect.2 + eps && y >= rect.1 - eps && y <= rect.3 + eps, "({x}, {y}) outside {rect:?}");
        }
    }
    // the extremes of the main panel are reached by some series
    let ys: Vec<f64> = lines[..2].iter().flatten().map(|p| p.1).collect();
    let top = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let bottom = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((top - main.1).abs() < eps && (bottom - main.3).abs() < eps);
    let xs: Vec<f64> = lines[0].iter().map(|p| p.0).collect();
    assert!((xs[0] - main.0).abs() < eps && (xs[xs.len() - 1] - main.2).abs() < eps);
}

#[test]
fn report_writes_table_and_charts() {
    let sc = short_week().window(0, 24).unwrap();
    let run = baseline_run(&sc);
    let dir = tempfile::tempdir().unwrap();
    let files = write_report(&[run], dir.path()).unwrap();
    assert_eq!(files.len(), 5);
    for f in files {
        assert!(std::fs::metadata(f).unwrap().len() > 0);
    }
}
