//! Temporary probe: small replication runs for calibration.

use radlayers::selection::{BicVariant, SelectionSettings};
use radlayers::sim::{replicate, Scenario, SigmaXKind, SimDesign};

fn main() {
    let reps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(4);
    let sigma2: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1.0);
    let variant = std::env::args().nth(3).unwrap_or_else(|| "verbatim".into());

    let design = SimDesign::case1(SigmaXKind::Identity, sigma2);
    let v0_grid: Vec<f64> = (1..=10).map(|i| 0.001 * i as f64).collect();
    let mut settings = SelectionSettings::default();
    settings.bic = if variant == "conventional" {
        BicVariant::Conventional
    } else {
        BicVariant::Verbatim
    };

    let started = std::time::Instant::now();
    let report = replicate(&design, Scenario::A, reps, &v0_grid, &settings, 2024).unwrap();
    let elapsed = started.elapsed();

    println!(
        "case1 sigma2={sigma2} scenario=A reps={reps} variant={variant} failures={} elapsed={:.1}s",
        report.failures,
        elapsed.as_secs_f64()
    );
    for t in 0..3 {
        let (tpr, tpr_sd) = report.tpr_mean_sd(t);
        let fpr = report.fpr_mean(t);
        let (ew, _) = report.e_w_mean_sd(t);
        let (eb, _) = report.e_beta_mean_sd(t);
        println!(
            "layer {}: TPR {:.3} ({:.3})  FPR {:.4}  E_w {:.3}  E_b {:.3}",
            t + 1,
            tpr,
            tpr_sd,
            fpr,
            ew,
            eb
        );
    }
    let v0s: Vec<f64> = report.per_rep.iter().map(|r| r.chosen_v0).collect();
    println!("chosen v0 per rep: {v0s:?}");
}
