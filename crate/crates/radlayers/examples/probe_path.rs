//! Temporary probe: per-v0 path diagnostics on one replication.

use radlayers::selection::{
    select_over_grid, BicVariant, SelectionSettings, V1Rule,
};
use radlayers::sim::rng::substream;
use radlayers::sim::{datasets_from_truth, simulate, Scenario, SigmaXKind, SimDesign};

fn main() {
    let sigma2: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1.0);
    let rep: u64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let v1_arg: f64 = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);
    let case2 = std::env::args().nth(4).is_some();

    let design = if case2 {
        SimDesign::case2(sigma2) // arg doubles as theta
    } else {
        SimDesign::case1(SigmaXKind::Identity, sigma2)
    };
    let mut rng = substream(2024, rep);
    let truth = simulate(&design, &mut rng).unwrap();
    let datasets = datasets_from_truth(&truth, &design).unwrap();

    let mut settings = Scenario::A.apply(&SelectionSettings::default());
    if v1_arg > 0.0 {
        settings.v1_rule = V1Rule::Fixed(v1_arg);
    }
    let v0_grid: Vec<f64> = (1..=10).map(|i| 0.001 * i as f64).collect();
    let result = select_over_grid(&datasets, &settings, &v0_grid).unwrap();

    // per-v0: layer-1 TPR/FPR and both BIC flavors
    println!("v1 rule: {:?}", settings.v1_rule);
    for pt in &result.points {
        let mut tp = 0;
        let mut fp = 0;
        let mut pos = 0;
        let mut neg = 0;
        for t in 0..3 {
            for m in 0..4 {
                for k in 0..20 {
                    if truth.zeta[t][m][k] {
                        pos += 1;
                        if pt.zeta[t][m][k] {
                            tp += 1;
                        }
                    } else {
                        neg += 1;
                        if pt.zeta[t][m][k] {
                            fp += 1;
                        }
                    }
                }
            }
        }
        let conv = radlayers::selection::compute_bic(
            &pt.states,
            &datasets,
            &pt.zeta,
            BicVariant::Conventional,
        )
        .unwrap();
        println!(
            "v0={:.3} conv={} TPR={:.3} FPR={:.3} K={:?} bic_verbatim={:.1} bic_conv={:.1}{}",
            pt.v0,
            pt.converged,
            tp as f64 / pos as f64,
            fp as f64 / neg as f64,
            pt.k_per_layer,
            pt.bic.unwrap_or(f64::NAN),
            conv,
            if pt.v0 == result.chosen_v0() { "  <== chosen" } else { "" }
        );
    }
    // iteration counts
    let iters: Vec<usize> = result.points[0].states.iter().map(|s| s.iterations).collect();
    println!("iterations per layer at v0=0.001: {iters:?}");
}
