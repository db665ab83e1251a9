//! The value table against simulation of its own greedy policy, started from
//! the initial state and from states in the middle of the study. The lattice
//! is finer than the default one: near p = 0 the default spacing alone
//! moves values by about 0.05.

use il7ctl::model::GridSpec;
use il7ctl::sim::{discounted_cost, replicate_rng, simulate_from, Policy};
use il7ctl::solver::{solve, SolverOptions};
use il7ctl::{Model, ModelConfig, PatientParams, State};

const RUNS: u64 = 4000;

#[test]
fn table_matches_simulated_cost_of_greedy_policy() {
    let cfg = ModelConfig {
        horizon: 90,
        sigma_min: 21,
        grid: GridSpec {
            p_max: 200.0,
            h_p: 5.0,
            r_max: 2000.0,
            h_r: 12.5,
            ..Default::default()
        },
        ..Default::default()
    };
    let model = Model::new(PatientParams::patient_a(), cfg).unwrap();
    let (table, report) = solve(&model, &SolverOptions::default(), |_, _| {}).unwrap();
    assert!(report.converged);
    let policy = Policy::Optimal(&table);
    let alpha = model.config().alpha;

    // the stored sigma closest to `want` for the given block and day
    let at = |gamma: u32, n: u32, want: u32, theta: u32, p: f64, r: f64| {
        let sigma = (0..=theta)
            .filter(|&s| table.grid().row_of(gamma, n, s, theta).is_some())
            .min_by_key(|&s| s.abs_diff(want))
            .expect("block is reachable on that day");
        State::new(gamma, n, sigma as f64, theta as f64, p, r)
    };
    let cases = [
        (State::initial(model.params()), 0),
        (at(1, 2, 10, 30, 10.0, 600.0), 1),
        (at(1, 2, 21, 50, 20.0, 450.0), 1),
        (at(3, 2, 3, 40, 5.0, 300.0), 1),
        (at(2, 1, 0, 1, 5.0, 250.0), 1),
    ];
    for (start, cycle) in cases {
        let costs: Vec<f64> = (0..RUNS)
            .map(|i| {
                let traj = simulate_from(&model, &policy, start, cycle, &mut replicate_rng(11, i)).unwrap();
                (alpha * start.theta).exp() * discounted_cost(&traj, alpha)
            })
            .collect();
        let mean = costs.iter().sum::<f64>() / RUNS as f64;
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (RUNS - 1) as f64;
        let se = (var / RUNS as f64).sqrt();
        let w = table.interpolate(&start).unwrap();
        eprintln!("{start}: W {w:.4}, simulated {mean:.4} +- {se:.4}");
        assert!((w - mean).abs() <= 4.0 * se + 0.02, "{start}: W {w} vs simulated {mean} +- {se}");
    }
}
