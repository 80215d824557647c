//! Temporary probe: reference-table cells under a chosen v1 rule.

use radlayers::selection::{SelectionSettings, V1Rule};
use radlayers::sim::{replicate, Scenario, SigmaXKind, SimDesign};

fn main() {
    let reps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(6);
    let v1_arg: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);

    let mut settings = SelectionSettings::default();
    if v1_arg > 0.0 {
        settings.v1_rule = V1Rule::Fixed(v1_arg);
    }
    let v0_grid: Vec<f64> = (1..=10).map(|i| 0.001 * i as f64).collect();

    for (label, design, scenario) in [
        (
            "case1 s2=1  A",
            SimDesign::case1(SigmaXKind::Identity, 1.0),
            Scenario::A,
        ),
        (
            "case1 s2=30 A",
            SimDesign::case1(SigmaXKind::Identity, 30.0),
            Scenario::A,
        ),
        ("case2 th=1  A", SimDesign::case2(1.0), Scenario::A),
        ("case2 th=1  D", SimDesign::case2(1.0), Scenario::D),
    ] {
        let started = std::time::Instant::now();
        match replicate(&design, scenario, reps, &v0_grid, &settings, 2024) {
            Ok(report) => {
                let mut cells = Vec::new();
                for t in 0..3 {
                    let (tpr, sd) = report.tpr_mean_sd(t);
                    cells.push(format!("L{} {:.3}({:.3}) fpr {:.4}", t + 1, tpr, sd, report.fpr_mean(t)));
                }
                println!(
                    "{label}: {}  fails={} [{:.0}s]",
                    cells.join(" | "),
                    report.failures,
                    started.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("{label}: ERROR {e}"),
        }
    }
}
