mod common;

use std::fs;
use std::io::Write;

use pgs_core::experiment::{allocate, read_power_csv, run_experiment, ExperimentSpec, Scheme};
use pgs_core::milp::{build_model, solve_milp_with, MilpOptions, Mode};
use pgs_core::mobility::{generate_highway_trace, load_trace};
use pgs_core::power::network_power;
use pgs_core::scenario::{default_highway_scenario, default_paper_scenario, TimeGrid};
use pgs_core::Error;

use common::{desk, desk_matrix, unguarded};

fn metrics_lines(dir: &std::path::Path) -> Vec<String> {
    fs::read_to_string(dir.join("metrics.csv"))
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn single_cell_writes_header_and_one_row() {
    let out = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(desk());
    spec.schemes = vec![Scheme::Es];
    spec.users = vec![3];
    spec.out_dir = Some(out.path().into());
    run_experiment(&spec).unwrap();
    let lines = metrics_lines(out.path());
    assert_eq!(lines[0], "scheme,M,sigma2,l_req,seed,Q_Net,F_Net,P_Net");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("es,3,0,4,1,"));
}

#[test]
fn rows_follow_the_axes() {
    let mut spec = ExperimentSpec::new(desk());
    spec.schemes = vec![Scheme::PgsMinAirAlg];
    spec.users = vec![2, 4];
    assert_eq!(run_experiment(&spec).unwrap().rows.len(), 2);

    spec.schemes = vec![Scheme::Es, Scheme::PgsMinAirAlg];
    spec.users = vec![3];
    spec.sigma2 = vec![0.0, 4.0, 16.0];
    spec.seeds = 5;
    let rows = run_experiment(&spec).unwrap().rows;
    assert_eq!(rows.len(), 30);
    for scheme in [Scheme::Es, Scheme::PgsMinAirAlg] {
        let mine: Vec<_> = rows.iter().filter(|r| r.scheme == scheme).collect();
        assert_eq!(mine.len(), 15);
        let mut seeds: Vec<usize> = mine.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds, vec![0, 1, 2, 3, 4]);
    }
}

#[test]
fn prediction_saves_power_on_the_default_scenario() {
    let mut spec = ExperimentSpec::new(default_paper_scenario());
    spec.schemes = vec![Scheme::Es, Scheme::PgsMinAirAlg];
    let rows = run_experiment(&spec).unwrap().rows;
    assert!(rows[1].metrics.p_net < rows[0].metrics.p_net, "{rows:?}");
}

#[test]
fn dumped_power_reproduces_p_net() {
    let out = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(desk());
    spec.schemes = vec![Scheme::Es, Scheme::Rp, Scheme::PgsMinAirAlg, Scheme::PgsMinPowerAlg, Scheme::PgsMinPowerMilp];
    spec.users = vec![2, 3];
    spec.settings = unguarded();
    spec.out_dir = Some(out.path().into());
    let rows = run_experiment(&spec).unwrap().rows;
    for row in rows {
        let path = out
            .path()
            .join("runs")
            .join(format!("{}_M{}_L{}", row.scheme, row.users, row.l_req))
            .join("power.csv");
        let power = read_power_csv(&path).unwrap();
        let slots = power[0].len() as f64;
        let p_net: f64 = power.iter().flatten().sum::<f64>() / slots;
        assert!(
            (p_net - row.metrics.p_net).abs() <= 1e-9 * row.metrics.p_net.max(1.0),
            "{}: {p_net} vs {}",
            row.scheme,
            row.metrics.p_net
        );
    }
}

#[test]
fn three_cell_network_power_equals_exact_objective() {
    let mut s = default_highway_scenario();
    s.time = TimeGrid::new(10.0, 80.0, 10.0).unwrap();
    for bs in &mut s.base_stations {
        bs.n_off = 1;
    }
    let m = desk_matrix(&s, 2);
    let model = build_model(Mode::MinPower, &m, &s);
    let sol = solve_milp_with(
        &model,
        &MilpOptions {
            max_binaries: usize::MAX,
            ..MilpOptions::default()
        },
    )
    .unwrap();
    let alloc = allocate(Scheme::PgsMinPowerMilp, &m, &s, &unguarded()).unwrap();
    let expected = sol.objective / s.time.slots() as f64;
    assert!((network_power(&alloc.schedule) - expected).abs() < 1e-6 * expected);
    alloc.schedule.validate(&s).unwrap();
}

#[test]
fn heuristics_never_beat_the_exact_optimum() {
    let s = desk();
    for users in [2, 3] {
        let m = desk_matrix(&s, users);
        let run = |k| allocate(k, &m, &s, &unguarded()).unwrap();
        let (alg_air, milp_air) = (run(Scheme::PgsMinAirAlg), run(Scheme::PgsMinAirMilp));
        assert!(milp_air.x.total_airtime() <= alg_air.x.total_airtime() + 1e-9);
        let (alg_pow, milp_pow) = (run(Scheme::PgsMinPowerAlg), run(Scheme::PgsMinPowerMilp));
        assert!(network_power(&milp_pow.schedule) <= network_power(&alg_pow.schedule) + 1e-6);
        assert!(network_power(&milp_pow.schedule) <= network_power(&milp_air.schedule) + 1e-6);
    }
}

#[test]
fn exact_schemes_are_refused_above_the_guard() {
    let mut spec = ExperimentSpec::new(default_paper_scenario());
    spec.schemes = vec![Scheme::PgsMinAirMilp];
    match run_experiment(&spec) {
        Err(Error::Experiment(msg)) => assert!(msg.contains("above the limit of 40"), "{msg}"),
        other => panic!("expected a refusal, got {other:?}"),
    }
}

#[test]
fn imported_trace_matches_generated_positions() {
    let mut s = default_highway_scenario();
    s.user_count = 20;
    let generated = generate_highway_trace(&s, &s.highway).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let mut f = fs::File::create(&path).unwrap();
    writeln!(f, "slot,user_id,x_m,y_m").unwrap();
    for n in 0..s.time.slots() {
        for u in 0..20 {
            if let Some(p) = generated.position(u, n) {
                writeln!(f, "{},veh{u},{},{}", n + 1, p.x, p.y).unwrap();
            }
        }
    }
    drop(f);
    let loaded = load_trace(&path, &s.time).unwrap();
    assert_eq!(loaded.users(), 20);
    for (u, n) in [(0, 0), (0, 239), (7, 100), (19, 150), (12, 75)] {
        assert_eq!(loaded.position(u, n), generated.position(u, n), "user {u} slot {n}");
    }

    let mut spec = ExperimentSpec::new(s.clone());
    spec.schemes = vec![Scheme::PgsMinAirAlg];
    spec.users = vec![20];
    let from_generator = run_experiment(&spec).unwrap().rows;
    spec.trace = Some(loaded);
    assert_eq!(run_experiment(&spec).unwrap().rows, from_generator);
}

#[test]
fn trace_with_too_few_users_is_rejected() {
    let s = default_paper_scenario();
    let mut spec = ExperimentSpec::new(s.clone());
    let mut small = s.clone();
    small.user_count = 2;
    spec.trace = Some(generate_highway_trace(&small, &small.highway).unwrap());
    spec.users = vec![5];
    assert!(matches!(run_experiment(&spec), Err(Error::Experiment(_))));
}
