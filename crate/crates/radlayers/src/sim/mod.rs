//! Synthetic-data studies: generators for the two simulation cases,
//! selection-quality metrics, the replication harness and the EM-vs-MCMC
//! timing comparison.

pub mod mcmc;
pub mod rng;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerDataset, MuPolicy};
use crate::numeric::{mean_sd, norm_cdf};
use crate::selection::{select_over_grid, LambdaRule, SelectionResult, SelectionSettings};
use rng::{
    cholesky_factor, gamma_sample, inverse_wishart_sample, laplace_sample, mvn_rows, substream,
};

/// Predictor covariance designs used by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaXKind {
    Identity,
    /// First half of the genes strongly equicorrelated (diagonal 10,
    /// off-diagonal 9), second half independent.
    Block2x2,
    /// Four independent equicorrelated five-gene groups (diagonal 10,
    /// off-diagonal 9, zero across groups), aligned with the nested truth
    /// groups of the fixed-coefficient design.
    Block4x4,
}

/// Assemble the predictor covariance for `g` genes.
pub fn gen_sigma_x(kind: SigmaXKind, g: usize) -> Result<DMatrix<f64>> {
    let filled = |lo: usize, hi: usize, m: &mut DMatrix<f64>| {
        for i in lo..hi {
            for j in lo..hi {
                m[(i, j)] = if i == j { 10.0 } else { 9.0 };
            }
        }
    };
    match kind {
        SigmaXKind::Identity => Ok(DMatrix::identity(g, g)),
        SigmaXKind::Block2x2 => {
            if g < 2 {
                return Err(Error::InvalidInput("block design needs g >= 2".into()));
            }
            let half = g / 2;
            let mut m = DMatrix::identity(g, g);
            filled(0, half, &mut m);
            Ok(m)
        }
        SigmaXKind::Block4x4 => {
            if g < 20 {
                return Err(Error::InvalidInput(
                    "the four-block design is laid out for g = 20".into(),
                ));
            }
            let mut m = DMatrix::identity(g, g);
            for b in 0..4 {
                filled(5 * b, 5 * (b + 1), &mut m);
            }
            Ok(m)
        }
    }
}

/// Hyperparameters of the from-the-model generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenHyper {
    pub a1: f64,
    pub a2: f64,
    pub v0: f64,
    pub v1: f64,
    pub alpha: f64,
}

impl Default for GenHyper {
    fn default() -> Self {
        GenHyper {
            a1: 5.0,
            a2: 5.0,
            v0: 0.01,
            v1: 1.0,
            alpha: 0.8,
        }
    }
}

/// Design shared by both cases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub g: usize,
    pub tau: usize,
    /// PCs per (layer, sequence) block.
    pub p_per_block: usize,
    pub n_sequences: usize,
    pub sigma_x: SigmaXKind,
    pub case: SimCase,
}

/// Which generator produces the responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimCase {
    /// Responses drawn from the full hierarchical model.
    FromModel {
        sigma2: f64,
        #[serde(default)]
        gen: GenHyper,
    },
    /// Fixed nested block-diagonal coefficients with double-exponential
    /// entries; noise scale fixed at 20.
    FixedB {
        theta: f64,
        /// Nested (rows, cols) extents per layer; defaults to
        /// (15, 9), (10, 6), (5, 3).
        #[serde(default)]
        block_plan: Option<Vec<(usize, usize)>>,
    },
}

impl SimDesign {
    /// The standard from-the-model design: n = 100, g = 20, tau = 3, four
    /// sequences of three PCs each.
    pub fn case1(sigma_x: SigmaXKind, sigma2: f64) -> Self {
        SimDesign {
            n: 100,
            g: 20,
            tau: 3,
            p_per_block: 3,
            n_sequences: 4,
            sigma_x,
            case: SimCase::FromModel {
                sigma2,
                gen: GenHyper::default(),
            },
        }
    }

    /// The standard fixed-coefficient design on the four-block covariance.
    pub fn case2(theta: f64) -> Self {
        SimDesign {
            n: 100,
            g: 20,
            tau: 3,
            p_per_block: 3,
            n_sequences: 4,
            sigma_x: SigmaXKind::Block4x4,
            case: SimCase::FixedB {
                theta,
                block_plan: None,
            },
        }
    }

    pub fn p_total(&self) -> usize {
        self.p_per_block * self.n_sequences
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.g == 0 || self.tau == 0 || self.p_per_block == 0
            || self.n_sequences == 0
        {
            return Err(Error::InvalidInput("degenerate simulation design".into()));
        }
        if let SimCase::FixedB { block_plan, theta } = &self.case {
            if *theta <= 0.0 {
                return Err(Error::InvalidInput("theta must be positive".into()));
            }
            let plan = resolve_block_plan(block_plan, self.tau)?;
            for w in plan.windows(2) {
                if w[1].0 > w[0].0 || w[1].1 > w[0].1 {
                    return Err(Error::InvalidInput(
                        "block plan must be nested (non-increasing extents)".into(),
                    ));
                }
            }
            for (r, s) in &plan {
                if *r > self.g || *s > self.p_total() {
                    return Err(Error::InvalidInput(
                        "block plan exceeds the design dimensions".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn resolve_block_plan(
    plan: &Option<Vec<(usize, usize)>>,
    tau: usize,
) -> Result<Vec<(usize, usize)>> {
    match plan {
        Some(p) => {
            if p.len() != tau {
                return Err(Error::InvalidInput(format!(
                    "block plan has {} layers for tau = {tau}",
                    p.len()
                )));
            }
            Ok(p.clone())
        }
        None => {
            if tau != 3 {
                return Err(Error::InvalidInput(
                    "the default block plan covers tau = 3; specify one explicitly".into(),
                ));
            }
            Ok(vec![(15, 9), (10, 6), (5, 3)])
        }
    }
}

/// Ground truth produced by a generator.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub x: DMatrix<f64>,
    pub y: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    /// Inclusion truth per layer, sequence, gene.
    pub zeta: Vec<Vec<Vec<bool>>>,
    pub delta: Vec<DMatrix<f64>>,
    /// Sampled propensities per layer and sequence (empty for fixed-B).
    pub lambda: Vec<Vec<DVector<f64>>>,
}

/// Draw one dataset from the full hierarchical model.
pub fn simulate_case1(design: &SimDesign, rng: &mut impl Rng) -> Result<SimTruth> {
    design.validate()?;
    let SimCase::FromModel { sigma2, gen } = &design.case else {
        return Err(Error::InvalidInput(
            "design does not use the from-the-model generator".into(),
        ));
    };
    let (n, g, tau) = (design.n, design.g, design.tau);
    let p = design.p_total();
    let pb = design.p_per_block;
    let n_seq = design.n_sequences;

    let sigma_x = gen_sigma_x(design.sigma_x, g)?;
    let lx = cholesky_factor(&sigma_x, "predictor covariance")?;
    let x = mvn_rows(n, &lx, rng);

    let psi = DMatrix::identity(p, p) * *sigma2;
    let mut y = Vec::with_capacity(tau);
    let mut b_all = Vec::with_capacity(tau);
    let mut zeta_all = Vec::with_capacity(tau);
    let mut delta_all = Vec::with_capacity(tau);
    let mut lambda_all: Vec<Vec<DVector<f64>>> = Vec::with_capacity(tau);

    for t in 0..tau {
        let delta = inverse_wishart_sample(p as f64, &psi, rng)?;

        let mut nu2 = DMatrix::zeros(g, p);
        for m in 0..n_seq {
            for k in 0..g {
                for j in 0..pb {
                    nu2[(k, m * pb + j)] = 1.0 / gamma_sample(gen.a1, gen.a2, rng);
                }
            }
        }

        let mut lambda_t = Vec::with_capacity(n_seq);
        let mut zeta_t = Vec::with_capacity(n_seq);
        for m in 0..n_seq {
            let mu = if t == 0 {
                DVector::zeros(g)
            } else {
                lambda_all[t - 1][m].map(|v| gen.alpha * v.max(0.0))
            };
            let lam = rng::mvn_sample(&lx, rng) + mu;
            let zeta: Vec<bool> = (0..g)
                .map(|k| rng.random::<f64>() < norm_cdf(lam[k]))
                .collect();
            lambda_t.push(lam);
            zeta_t.push(zeta);
        }

        let mut b = DMatrix::zeros(g, p);
        for m in 0..n_seq {
            for k in 0..g {
                let scale = if zeta_t[m][k] { gen.v1 } else { gen.v0 };
                for j in 0..pb {
                    let col = m * pb + j;
                    let sd = (scale * nu2[(k, col)]).sqrt();
                    b[(k, col)] = sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
            }
        }

        let ld = cholesky_factor(&delta, "residual covariance draw")?;
        let noise = mvn_rows(n, &ld, rng);
        y.push(&x * &b + noise);
        b_all.push(b);
        zeta_all.push(zeta_t);
        delta_all.push(delta);
        lambda_all.push(lambda_t);
    }

    Ok(SimTruth {
        x,
        y,
        b: b_all,
        zeta: zeta_all,
        delta: delta_all,
        lambda: lambda_all,
    })
}

/// Draw one dataset with fixed nested block coefficients.
pub fn simulate_case2(design: &SimDesign, rng: &mut impl Rng) -> Result<SimTruth> {
    design.validate()?;
    let SimCase::FixedB { theta, block_plan } = &design.case else {
        return Err(Error::InvalidInput(
            "design does not use the fixed-coefficient generator".into(),
        ));
    };
    let plan = resolve_block_plan(block_plan, design.tau)?;
    let (n, g) = (design.n, design.g);
    let p = design.p_total();
    let pb = design.p_per_block;
    let n_seq = design.n_sequences;

    let sigma_x = gen_sigma_x(design.sigma_x, g)?;
    let lx = cholesky_factor(&sigma_x, "predictor covariance")?;
    let x = mvn_rows(n, &lx, rng);

    let psi = DMatrix::identity(p, p) * 20.0;
    let mut y = Vec::with_capacity(design.tau);
    let mut b_all = Vec::with_capacity(design.tau);
    let mut zeta_all = Vec::with_capacity(design.tau);
    let mut delta_all = Vec::with_capacity(design.tau);

    for &(rows, cols) in &plan {
        let delta = inverse_wishart_sample(p as f64, &psi, rng)?;
        let mut b = DMatrix::zeros(g, p);
        for k in 0..rows {
            for j in 0..cols {
                b[(k, j)] = laplace_sample(*theta, rng);
            }
        }
        let zeta_t: Vec<Vec<bool>> = (0..n_seq)
            .map(|m| (0..g).map(|k| k < rows && m * pb < cols).collect())
            .collect();
        let ld = cholesky_factor(&delta, "residual covariance draw")?;
        let noise = mvn_rows(n, &ld, rng);
        y.push(&x * &b + noise);
        b_all.push(b);
        zeta_all.push(zeta_t);
        delta_all.push(delta);
    }

    Ok(SimTruth {
        x,
        y,
        b: b_all,
        zeta: zeta_all,
        delta: delta_all,
        lambda: Vec::new(),
    })
}

/// Dispatch on the design's generator.
pub fn simulate(design: &SimDesign, rng: &mut impl Rng) -> Result<SimTruth> {
    match design.case {
        SimCase::FromModel { .. } => simulate_case1(design, rng),
        SimCase::FixedB { .. } => simulate_case2(design, rng),
    }
}

/// Wrap a generated truth into per-layer regression datasets. The predictors
/// keep their generated scale: the studies' spike/slab settings are calibrated
/// to the coefficient scale the generators produce.
pub fn datasets_from_truth(truth: &SimTruth, design: &SimDesign) -> Result<Vec<LayerDataset>> {
    let blocks: Vec<(String, usize)> = (0..design.n_sequences)
        .map(|m| (format!("seq{}", m + 1), design.p_per_block))
        .collect();
    truth
        .y
        .iter()
        .enumerate()
        .map(|(t, y)| LayerDataset::from_raw_unscaled(t + 1, y.clone(), &truth.x, blocks.clone()))
        .collect()
}

/// Per-layer selection quality.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LayerMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub e_w: f64,
    pub e_beta: f64,
}

/// Metrics of one replication.
#[derive(Debug, Clone, Serialize)]
pub struct RepMetrics {
    pub per_layer: Vec<LayerMetrics>,
    /// Inclusion-probability error averaged over all layers jointly.
    pub e_w_joint: f64,
    /// Coefficient squared error averaged over all layers jointly.
    pub e_beta_joint: f64,
    pub chosen_v0: f64,
}

/// Compare a selection outcome against a generated truth. Coefficient errors
/// are computed on the raw predictor scale.
pub fn compute_metrics(
    truth: &SimTruth,
    result: &SelectionResult,
    datasets: &[LayerDataset],
) -> Result<RepMetrics> {
    let chosen = result.chosen();
    let tau = truth.y.len();
    if chosen.zeta.len() != tau {
        return Err(Error::InvalidInput(
            "selection result and truth disagree on the layer count".into(),
        ));
    }
    let b_raw = result.chosen_b_raw(datasets);
    let mut per_layer = Vec::with_capacity(tau);
    let mut ew_total = 0.0;
    let mut ew_count = 0usize;
    let mut eb_total = 0.0;
    let mut eb_count = 0usize;

    for t in 0..tau {
        let (mut tp, mut fp, mut tn, mut fnn) = (0usize, 0usize, 0usize, 0usize);
        let mut ew_layer = 0.0;
        let mut ew_n = 0usize;
        for m in 0..truth.zeta[t].len() {
            for k in 0..truth.zeta[t][m].len() {
                let truth_in = truth.zeta[t][m][k];
                let est_in = chosen.zeta[t][m][k];
                match (truth_in, est_in) {
                    (true, true) => tp += 1,
                    (true, false) => fnn += 1,
                    (false, true) => fp += 1,
                    (false, false) => tn += 1,
                }
                let target = if truth_in { 1.0 } else { 0.0 };
                ew_layer += (target - chosen.w[t][m][k]).abs();
                ew_n += 1;
            }
        }
        let diff = &truth.b[t] - &b_raw[t];
        let eb_layer: f64 = diff.iter().map(|v| v * v).sum();
        let eb_n = diff.len();

        per_layer.push(LayerMetrics {
            tpr: if tp + fnn == 0 {
                1.0
            } else {
                tp as f64 / (tp + fnn) as f64
            },
            fpr: if fp + tn == 0 {
                0.0
            } else {
                fp as f64 / (fp + tn) as f64
            },
            e_w: ew_layer / ew_n as f64,
            e_beta: eb_layer / eb_n as f64,
        });
        ew_total += ew_layer;
        ew_count += ew_n;
        eb_total += eb_layer;
        eb_count += eb_n;
    }

    Ok(RepMetrics {
        per_layer,
        e_w_joint: ew_total / ew_count as f64,
        e_beta_joint: eb_total / eb_count as f64,
        chosen_v0: result.chosen_v0(),
    })
}

/// Estimation scenario: which structural priors the fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Layer borrowing and predictor-correlation prior.
    A,
    /// Predictor-correlation prior only (no layer borrowing).
    B,
    /// Layer borrowing only (identity propensity prior).
    C,
    /// Neither.
    D,
}

impl Scenario {
    pub fn mu_policy(&self) -> MuPolicy {
        match self {
            Scenario::A | Scenario::C => MuPolicy::PositivePart,
            Scenario::B | Scenario::D => MuPolicy::Zero,
        }
    }

    pub fn lambda_rule(&self) -> LambdaRule {
        match self {
            Scenario::A | Scenario::B => LambdaRule::CorrelationOfX,
            Scenario::C | Scenario::D => LambdaRule::Identity,
        }
    }

    pub fn apply(&self, base: &SelectionSettings) -> SelectionSettings {
        let mut s = base.clone();
        s.mu_policy = self.mu_policy();
        s.lambda_rule = self.lambda_rule();
        s
    }

    pub fn parse(s: &str) -> Result<Scenario> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            other => Err(Error::Config(format!("unknown scenario {other}"))),
        }
    }
}

/// Aggregated replication outcomes for one (design, scenario) cell.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    pub reps_requested: usize,
    pub failures: usize,
    pub per_rep: Vec<RepMetrics>,
    pub tau: usize,
}

impl MetricsReport {
    fn layer_values(&self, t: usize, f: impl Fn(&LayerMetrics) -> f64) -> Vec<f64> {
        self.per_rep.iter().map(|r| f(&r.per_layer[t])).collect()
    }

    pub fn tpr_mean_sd(&self, t: usize) -> (f64, f64) {
        mean_sd(&self.layer_values(t, |m| m.tpr))
    }

    pub fn fpr_mean(&self, t: usize) -> f64 {
        mean_sd(&self.layer_values(t, |m| m.fpr)).0
    }

    pub fn e_w_mean_sd(&self, t: usize) -> (f64, f64) {
        mean_sd(&self.layer_values(t, |m| m.e_w))
    }

    pub fn e_beta_mean_sd(&self, t: usize) -> (f64, f64) {
        mean_sd(&self.layer_values(t, |m| m.e_beta))
    }

    pub fn e_w_joint_mean_sd(&self) -> (f64, f64) {
        mean_sd(&self.per_rep.iter().map(|r| r.e_w_joint).collect::<Vec<_>>())
    }

    pub fn e_beta_joint_mean_sd(&self) -> (f64, f64) {
        mean_sd(&self.per_rep.iter().map(|r| r.e_beta_joint).collect::<Vec<_>>())
    }
}

/// Run `reps` end-to-end replications (generate, select over the grid,
/// score). Replication r uses substream r of the master seed, so reports are
/// bit-identical for a fixed seed regardless of thread scheduling.
pub fn replicate(
    design: &SimDesign,
    scenario: Scenario,
    reps: usize,
    v0_grid: &[f64],
    base: &SelectionSettings,
    master_seed: u64,
) -> Result<MetricsReport> {
    if reps == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    design.validate()?;
    let settings = scenario.apply(base);
    let outcomes: Vec<Result<RepMetrics>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(master_seed, rep as u64);
            let truth = simulate(design, &mut rng)?;
            let datasets = datasets_from_truth(&truth, design)?;
            let result = select_over_grid(&datasets, &settings, v0_grid)?;
            compute_metrics(&truth, &result, &datasets)
        })
        .collect();

    let mut per_rep = Vec::with_capacity(reps);
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(m) => per_rep.push(m),
            Err(_) => failures += 1,
        }
    }
    if per_rep.is_empty() {
        return Err(Error::Selection("every replication failed".into()));
    }
    Ok(MetricsReport {
        scenario,
        reps_requested: reps,
        failures,
        per_rep,
        tau: design.tau,
    })
}

/// How the EM-vs-MCMC comparison counts MCMC work.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    /// Give the sampler the measured EM wall-clock budget.
    Wallclock,
    /// Run a fixed number of sweeps (deterministic; for CI).
    FixedSweeps(usize),
}

/// One row of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub g: usize,
    pub p_total: usize,
    pub t_em_seconds: f64,
    pub mcmc_sweeps: usize,
    pub mcmc_seconds: f64,
}

/// Time a full EM selection at the given size, then run the Gibbs/MH sampler
/// on the first layer for the same wall-clock budget (or a fixed sweep count)
/// and report how many sweeps it completed.
pub fn run_bench(
    g: usize,
    p_total: usize,
    v0_count: usize,
    mode: BenchMode,
    seed: u64,
) -> Result<BenchRow> {
    if p_total % 4 != 0 {
        return Err(Error::InvalidInput(
            "p_total must split across four sequences".into(),
        ));
    }
    let design = SimDesign {
        n: 100,
        g,
        tau: 3,
        p_per_block: p_total / 4,
        n_sequences: 4,
        sigma_x: SigmaXKind::Identity,
        case: SimCase::FromModel {
            sigma2: 1.0,
            gen: GenHyper::default(),
        },
    };
    let mut rng = substream(seed, 0);
    let truth = simulate(&design, &mut rng)?;
    let datasets = datasets_from_truth(&truth, &design)?;
    let v0_grid: Vec<f64> = (1..=v0_count).map(|i| 0.001 * i as f64).collect();
    let settings = SelectionSettings::default();

    let started = std::time::Instant::now();
    let result = select_over_grid(&datasets, &settings, &v0_grid)?;
    let t_em = started.elapsed();

    let hyper = settings.resolve(&datasets[0], result.chosen_v0())?;
    let mu = crate::model::MuPrior::zeros(4, g);
    let opts = match mode {
        BenchMode::Wallclock => mcmc::McmcOptions {
            sweeps: usize::MAX,
            burn_in: 0,
            time_budget: Some(t_em),
            ..mcmc::McmcOptions::default()
        },
        BenchMode::FixedSweeps(n) => mcmc::McmcOptions {
            sweeps: n,
            burn_in: 0,
            time_budget: None,
            ..mcmc::McmcOptions::default()
        },
    };
    let mut mcmc_rng = substream(seed, 1);
    let mcmc_out = mcmc::mcmc_baseline(&datasets[0], &hyper, &mu, &opts, None, &mut mcmc_rng)?;

    Ok(BenchRow {
        g,
        p_total,
        t_em_seconds: t_em.as_secs_f64(),
        mcmc_sweeps: mcmc_out.sweeps_completed,
        mcmc_seconds: mcmc_out.elapsed.as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigma_designs_are_spd_with_expected_entries() {
        let id = gen_sigma_x(SigmaXKind::Identity, 20).unwrap();
        assert_eq!(id, DMatrix::identity(20, 20));

        let b2 = gen_sigma_x(SigmaXKind::Block2x2, 20).unwrap();
        assert_eq!(b2[(0, 0)], 10.0);
        assert_eq!(b2[(0, 9)], 9.0);
        assert_eq!(b2[(0, 10)], 0.0);
        assert_eq!(b2[(12, 12)], 1.0);
        // implied within-block correlation 0.9
        assert_relative_eq!(b2[(0, 1)] / b2[(0, 0)], 0.9);
        assert!(nalgebra::Cholesky::new(b2).is_some());

        let b4 = gen_sigma_x(SigmaXKind::Block4x4, 20).unwrap();
        assert_eq!(b4[(0, 4)], 9.0);
        assert_eq!(b4[(0, 5)], 0.0);
        assert_eq!(b4[(0, 15)], 0.0);
        assert_eq!(b4[(15, 19)], 9.0);
        assert!(nalgebra::Cholesky::new(b4).is_some());
    }

    #[test]
    fn case1_dimensions_and_spike_degeneracy() {
        let mut design = SimDesign::case1(SigmaXKind::Identity, 1.0);
        let mut rng = substream(1, 0);
        let truth = simulate_case1(&design, &mut rng).unwrap();
        assert_eq!(truth.x.shape(), (100, 20));
        assert_eq!(truth.y.len(), 3);
        assert_eq!(truth.y[0].shape(), (100, 12));
        assert_eq!(truth.b[0].shape(), (20, 12));
        assert_eq!(truth.zeta[0].len(), 4);

        // v0 = 0 makes excluded rows exactly zero
        if let SimCase::FromModel { gen, .. } = &mut design.case {
            gen.v0 = 0.0;
        }
        let mut rng = substream(2, 0);
        let truth = simulate_case1(&design, &mut rng).unwrap();
        for t in 0..3 {
            for m in 0..4 {
                for k in 0..20 {
                    if !truth.zeta[t][m][k] {
                        for j in 0..3 {
                            assert_eq!(truth.b[t][(k, m * 3 + j)], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn case1_predictor_covariance_matches_design() {
        let mut design = SimDesign::case1(SigmaXKind::Block2x2, 1.0);
        design.n = 100_000;
        let mut rng = substream(3, 0);
        let truth = simulate_case1(&design, &mut rng).unwrap();
        let emp = truth.x.transpose() * &truth.x / design.n as f64;
        let sigma = gen_sigma_x(SigmaXKind::Block2x2, 20).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let tol = 0.02 * sigma[(i, i)].max(sigma[(j, j)]);
                assert!(
                    (emp[(i, j)] - sigma[(i, j)]).abs() < tol.max(0.05),
                    "cov mismatch at ({i},{j}): {} vs {}",
                    emp[(i, j)],
                    sigma[(i, j)]
                );
            }
        }
    }

    #[test]
    fn case2_truth_is_nested_with_layer3_on_first_sequence() {
        let design = SimDesign::case2(1.0);
        let mut rng = substream(4, 0);
        let truth = simulate_case2(&design, &mut rng).unwrap();
        // layer 3: genes 1-5 on sequence 1 only
        for m in 0..4 {
            for k in 0..20 {
                let expect = m == 0 && k < 5;
                assert_eq!(truth.zeta[2][m][k], expect);
            }
        }
        // nestedness: set at layer t+1 contained in layer t
        for t in 0..2 {
            for m in 0..4 {
                for k in 0..20 {
                    if truth.zeta[t + 1][m][k] {
                        assert!(truth.zeta[t][m][k]);
                    }
                }
            }
        }
        // block sizes by layer
        let count = |t: usize| -> usize {
            truth.zeta[t]
                .iter()
                .map(|s| s.iter().filter(|&&z| z).count())
                .sum()
        };
        assert_eq!(count(0), 15 * 3); // 15 genes x 3 sequences
        assert_eq!(count(1), 10 * 2);
        assert_eq!(count(2), 5);
    }

    #[test]
    fn metrics_on_perfect_recovery() {
        let design = SimDesign::case2(1.0);
        let mut rng = substream(5, 0);
        let truth = simulate_case2(&design, &mut rng).unwrap();
        let datasets = datasets_from_truth(&truth, &design).unwrap();
        // fabricate a selection result that matches the truth exactly
        use crate::model::{Hyperparams, LayerParameterState, MuPrior};
        let mut points = Vec::new();
        let hyper = Hyperparams::defaults(20, 12);
        let states: Vec<LayerParameterState> = datasets
            .iter()
            .zip(&truth.b)
            .map(|(d, b)| {
                let mut s = LayerParameterState::init(d, &hyper, &MuPrior::zeros(4, 20));
                // store standardized-scale coefficients so the raw mapping
                // restores the truth
                let mut bs = b.clone();
                for k in 0..20 {
                    for j in 0..12 {
                        bs[(k, j)] *= d.x_scales()[k];
                    }
                }
                s.b = bs;
                for m in 0..4 {
                    for k in 0..20 {
                        s.w[m][k] = if truth.zeta[d.layer - 1][m][k] { 1.0 } else { 0.0 };
                    }
                }
                s.converged = true;
                s
            })
            .collect();
        let zetas: Vec<Vec<Vec<bool>>> = states
            .iter()
            .map(crate::selection::threshold_zeta)
            .collect();
        let b_selected: Vec<DMatrix<f64>> = states
            .iter()
            .zip(&zetas)
            .map(|(s, z)| crate::selection::apply_selection(s, z))
            .collect();
        points.push(crate::selection::GridPoint {
            v0: 0.005,
            converged: true,
            bic: Some(0.0),
            zeta: zetas,
            w: states
                .iter()
                .map(|s| s.w.iter().map(|v| v.iter().copied().collect()).collect())
                .collect(),
            k_per_layer: vec![0; 3],
            b_selected,
            states,
        });
        let result = crate::selection::SelectionResult {
            v0_grid: vec![0.005],
            points,
            chosen_index: 0,
            bic_variant: crate::selection::BicVariant::Verbatim,
        };
        let metrics = compute_metrics(&truth, &result, &datasets).unwrap();
        for lm in &metrics.per_layer {
            assert_eq!(lm.tpr, 1.0);
            assert_eq!(lm.fpr, 0.0);
            assert_eq!(lm.e_w, 0.0);
            assert!(lm.e_beta < 1e-20);
        }
        assert_eq!(metrics.e_w_joint, 0.0);
    }

    #[test]
    fn replicate_is_deterministic() {
        let design = SimDesign {
            n: 40,
            g: 6,
            tau: 2,
            p_per_block: 2,
            n_sequences: 2,
            sigma_x: SigmaXKind::Identity,
            case: SimCase::FromModel {
                sigma2: 1.0,
                gen: GenHyper::default(),
            },
        };
        let mut settings = SelectionSettings::default();
        settings.v1_rule = crate::selection::V1Rule::Fixed(10.0);
        let grid = [0.005, 0.01];
        let a = replicate(&design, Scenario::A, 3, &grid, &settings, 77).unwrap();
        let b = replicate(&design, Scenario::A, 3, &grid, &settings, 77).unwrap();
        assert_eq!(a.per_rep.len(), b.per_rep.len());
        for (x, y) in a.per_rep.iter().zip(&b.per_rep) {
            assert_eq!(x.chosen_v0, y.chosen_v0);
            for (lx, ly) in x.per_layer.iter().zip(&y.per_layer) {
                assert_eq!(lx.tpr, ly.tpr);
                assert_eq!(lx.e_w, ly.e_w);
                assert_eq!(lx.e_beta, ly.e_beta);
            }
        }
    }
}
