//! Temporary probe: per-iteration trajectory of one layer fit.

use nalgebra::DMatrix;
use radlayers::model::{
    e_step, fit_layer, m_step_beta, m_step_delta, m_step_lambda, m_step_nu, Hyperparams,
    LayerParameterState, MuPrior,
};
use radlayers::selection::{SelectionSettings, V1Rule};
use radlayers::sim::rng::substream;
use radlayers::sim::{datasets_from_truth, simulate, Scenario, SimDesign};

fn main() {
    let v0: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.001);
    let v1: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let q0: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(0.01);

    let design = SimDesign::case2(1.0);
    let mut rng = substream(2024, 0);
    let truth = simulate(&design, &mut rng).unwrap();
    let datasets = datasets_from_truth(&truth, &design).unwrap();
    let data = &datasets[0];

    let mut settings = Scenario::A.apply(&SelectionSettings::default());
    settings.v1_rule = V1Rule::Fixed(v1);
    let mut hyper = settings.resolve(data, v0).unwrap();
    hyper.q0 = q0;
    let mu = MuPrior::zeros(4, 20);

    // manual DAEM loop with tracing
    let mut state = LayerParameterState::init(data, &hyper, &mu);
    let mut q = hyper.q0;
    for iter in 1..=60 {
        let (w, d) = e_step(&state, data, &hyper, q).unwrap();
        state.w = w;
        state.d = d;
        state.b = m_step_beta(data, &state, &hyper).unwrap();
        state.nu_inv2 = m_step_nu(data, &state, &hyper);
        let (delta, delta_inv) = m_step_delta(data, &state, &hyper).unwrap();
        state.delta = delta;
        state.delta_inv = delta_inv;
        state.lambda = m_step_lambda(&state, &hyper, &mu).unwrap();
        let wmax = state.w.iter().map(|w| w.max()).fold(0.0f64, f64::max);
        let wmean: f64 = state.w.iter().flat_map(|w| w.iter()).sum::<f64>() / 80.0;
        if iter % 5 == 0 || iter <= 12 {
            println!(
                "it {iter:3} q={q:.3} max|b|={:.3} mean(w)={wmean:.3} max(w)={wmax:.3} tr(D)={:.1} nu2max={:.2}",
                state.b.amax(),
                state.delta.trace(),
                state.nu_inv2.map(|v| 1.0 / v).amax(),
            );
        }
        q = (q * 1.1).min(1.0);
    }

    // reference: per-gene true signal magnitude on the standardized scale
    let mut bstd = truth.b[0].clone();
    for k in 0..20 {
        for j in 0..12 {
            bstd[(k, j)] *= data.x_scales()[k];
        }
    }
    println!("true max|b_std| = {:.2}", bstd.amax());
    println!("true Delta trace = {:.2}", truth.delta[0].trace());

    // full fit for the record
    let state = fit_layer(data, &hyper, &mu, None).unwrap();
    let included: usize = state
        .w
        .iter()
        .flat_map(|w| w.iter())
        .filter(|&&v| v > 0.5)
        .count();
    println!(
        "fit: converged={} iters={} included={} / 80",
        state.converged, state.iterations, included
    );
    let ols = DMatrix::from(nalgebra::Cholesky::new(data.x().transpose() * data.x()).unwrap()
        .solve(&(data.x().transpose() * data.y())));
    println!("max |ols| (std scale) = {:.2}", ols.amax());
}
