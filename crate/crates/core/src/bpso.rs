//! Binary particle swarm optimization over octant designs.
//!
//! Four runner flavors share one skeleton (velocity update → sigmoid
//! transfer → stochastic bit resampling):
//!
//! * [`baseline_bpso`] — classic two-term BPSO driven purely by the deployed
//!   surrogate's design error. Never touches the reference solver.
//! * [`single_metric_bpso`] — the same dynamics steered by one scalar metric
//!   (surrogate design error, physics residual, ensemble disagreement, or
//!   reference design error). The reference-driven variant is the expensive
//!   "evaluate everything" upper bound.
//! * [`multifidelity_bpso`] — the uncertainty-aware search: every iteration
//!   the swarm's most promising particle (by surrogate design error) earns
//!   one reference evaluation, which becomes a weighted beacon; particles
//!   are steered toward beacons while verified progress continues and fall
//!   back to uncertainty-seeking dynamics after two stalled verifications.
//!   With `staged = true` the first `n_itr_const` iterations run pure
//!   uncertainty-chasing dynamics before the alternating stage begins.
//!
//! All stochastic decisions flow from one seeded ChaCha stream per run, in a
//! fixed draw order, so every runner is bit-reproducible.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{random_design, OctantDesign, OCTANT_BITS};
use crate::metrics::{physics_residual, target_mae, DesignTarget};
use crate::oracle::MeteredOracle;
use crate::surrogate::{Ensemble, SurrogateModel};

#[derive(Debug, Error)]
pub enum SwarmError {
    #[error("invalid swarm configuration: {0}")]
    ConfigInvalid(String),
    #[error("{0:?} requires an ensemble")]
    MissingEnsemble(MetricKind),
    #[error("{0:?} requires reference-solver access")]
    MissingOracle(MetricKind),
    #[error("attraction is undefined with no beacons")]
    NoBeacons,
    #[error("{0:?} is not an uncertainty metric; multifidelity search needs one")]
    NotUncertainty(MetricKind),
}

/// Search regime of the multifidelity runner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Verified progress is flowing: steer toward evaluated beacons.
    Exploit,
    /// Two consecutive verifications stalled: chase uncertainty again.
    Explore,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Exploit => "exploit",
            Mode::Explore => "explore",
        }
    }
}

/// Whether a metric improves by shrinking or by growing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

/// Scalar objectives a swarm can chase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// Design error of the deployed surrogate's prediction (minimize).
    LfDesMae,
    /// Design error under the reference solver (minimize; costly).
    HfDesMae,
    /// Physics residual of the deployed surrogate's prediction (maximize
    /// when used as an exploration objective).
    PhyUnc,
    /// Ensemble disagreement on |T| (maximize when used as an exploration
    /// objective).
    EnsbUnc,
}

impl MetricKind {
    /// Natural direction of the metric when a swarm chases it.
    pub fn direction(self) -> Direction {
        match self {
            MetricKind::LfDesMae | MetricKind::HfDesMae => Direction::Minimize,
            MetricKind::PhyUnc | MetricKind::EnsbUnc => Direction::Maximize,
        }
    }

    pub fn is_uncertainty(self) -> bool {
        matches!(self, MetricKind::PhyUnc | MetricKind::EnsbUnc)
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricKind::LfDesMae => "lf-des-mae",
            MetricKind::HfDesMae => "hf-des-mae",
            MetricKind::PhyUnc => "phy-unc",
            MetricKind::EnsbUnc => "ensb-unc",
        }
    }
}

/// Swarm hyperparameters. Defaults reproduce the reported experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub n_particles: usize,
    /// Total iterations per run.
    pub n_itr: usize,
    /// Uncertainty-only warmup iterations of a staged run.
    pub n_itr_const: usize,
    /// Alternating iterations of a staged run.
    pub n_itr_alter: usize,
    /// Inertia weight.
    pub w: f64,
    /// Cognitive coefficient (baseline).
    pub c1: f64,
    /// Social coefficient (baseline).
    pub c2: f64,
    /// Metric-chasing coefficient (single-metric and warmup dynamics).
    pub c_metric: f64,
    /// Alternating-stage coefficient (beacon pull and explore fallback).
    pub c: f64,
    /// Beacon sharpness: beacon j weighs exp(-k * error_j).
    pub k: f64,
    /// Velocity components are clamped to [-v_clamp, v_clamp].
    pub v_clamp: f64,
    /// Seed of the run's random stream.
    pub seed: u64,
    /// Ablation switch: treat the uncertainty metrics as objectives to
    /// minimize instead of maximize.
    pub minimize_uncertainty_metrics: bool,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            n_particles: 20,
            n_itr: 30,
            n_itr_const: 10,
            n_itr_alter: 20,
            w: 0.7,
            c1: 2.0,
            c2: 2.0,
            c_metric: 2.0,
            c: 2.0,
            k: 10.0,
            v_clamp: 6.0,
            seed: 0,
            minimize_uncertainty_metrics: false,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), SwarmError> {
        if self.n_particles < 2 {
            return Err(SwarmError::ConfigInvalid(format!(
                "n_particles must be at least 2, got {}",
                self.n_particles
            )));
        }
        if self.n_itr == 0 {
            return Err(SwarmError::ConfigInvalid("n_itr must be positive".into()));
        }
        if self.n_itr_const + self.n_itr_alter != self.n_itr {
            return Err(SwarmError::ConfigInvalid(format!(
                "n_itr_const ({}) + n_itr_alter ({}) must equal n_itr ({})",
                self.n_itr_const, self.n_itr_alter, self.n_itr
            )));
        }
        for (name, v) in [
            ("w", self.w),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c_metric", self.c_metric),
            ("c", self.c),
            ("k", self.k),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SwarmError::ConfigInvalid(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !self.v_clamp.is_finite() || self.v_clamp <= 0.0 {
            return Err(SwarmError::ConfigInvalid(format!(
                "v_clamp must be finite and positive, got {}",
                self.v_clamp
            )));
        }
        Ok(())
    }
}

/// Sigmoid transfer from a velocity component to a bit-on probability.
pub fn transfer(v: f64) -> f64 {
    1.0 / (1.0 + (-3.0 * v).exp())
}

/// Resamples a particle's bits: bit j turns on iff transfer(v[j]) exceeds a
/// fresh uniform draw. Draws exactly one uniform per bit, in bit order.
pub fn update_position<R: Rng + ?Sized>(v: &[f64; OCTANT_BITS], rng: &mut R) -> OctantDesign {
    let mut d = OctantDesign::zeros();
    for (j, &vj) in v.iter().enumerate() {
        d.set_bit(j, transfer(vj) > rng.gen::<f64>());
    }
    d
}

/// Softmin-weighted pull of a particle toward the evaluated beacons: beacon
/// j with reference error e_j contributes weight exp(-k * e_j) to the
/// per-coordinate field sum_j alpha_j (b_j - x) / sum_j alpha_j.
pub fn attraction(
    beacons: &[(OctantDesign, f64)],
    x: &OctantDesign,
    k: f64,
) -> Result<[f64; OCTANT_BITS], SwarmError> {
    if beacons.is_empty() {
        return Err(SwarmError::NoBeacons);
    }
    let mut field = [0.0f64; OCTANT_BITS];
    let mut total = 0.0;
    for (b, err) in beacons {
        let alpha = (-k * err).exp();
        total += alpha;
        for (j, f) in field.iter_mut().enumerate() {
            *f += alpha * (f64::from(b.bit(j)) - f64::from(x.bit(j)));
        }
    }
    for f in field.iter_mut() {
        *f /= total;
    }
    Ok(field)
}

/// The explore/exploit state machine: an improvement snaps back to Exploit;
/// the mode flips to Explore only after exactly two consecutive stalls and
/// stays there until the next improvement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StagnationTracker {
    counter: u8,
    mode: Mode,
}

impl Default for StagnationTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl StagnationTracker {
    pub fn new() -> Self {
        Self { counter: 0, mode: Mode::Exploit }
    }

    /// Feeds one verification outcome and returns the mode to use next.
    pub fn observe(&mut self, improved: bool) -> Mode {
        if improved {
            self.counter = 0;
            self.mode = Mode::Exploit;
        } else {
            self.counter = (self.counter + 1).min(2);
            if self.counter == 2 {
                self.mode = Mode::Explore;
            }
        }
        self.mode
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn stall_count(&self) -> u8 {
        self.counter
    }
}

/// One iteration's log line.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Search regime (multifidelity runs only).
    pub mode: Option<Mode>,
    /// Surrogate design error of the iteration's selected design (absent
    /// when the run never consults the surrogate).
    pub best_lf_des_mae: Option<f64>,
    /// Reference design error, where the run evaluated it.
    pub hf_des_mae: Option<f64>,
    /// The iteration's selected design.
    pub design: OctantDesign,
    /// Reference-solver calls the run itself has spent up to and including
    /// this iteration (post-hoc verification never counts here).
    pub hf_calls_cumulative: u64,
}

/// Complete log of one optimization run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub iterations: Vec<IterationRecord>,
    /// Reference evaluations consumed during the run.
    pub hf_calls: u64,
    /// Single-design single-member surrogate predictions consumed.
    pub lf_calls: u64,
    pub wall: Duration,
    /// Best verified design error (populated when the run itself verifies;
    /// otherwise left for post-hoc scoring).
    pub final_hf_des_mae: Option<f64>,
    pub best_design: Option<OctantDesign>,
}

/// First index of the minimum (ties break toward the lowest index).
pub(crate) fn argmin_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

fn improves(old: f64, new: f64, dir: Direction) -> bool {
    match dir {
        Direction::Minimize => new < old,
        Direction::Maximize => new > old,
    }
}

fn worst_value(dir: Direction) -> f64 {
    match dir {
        Direction::Minimize => f64::INFINITY,
        Direction::Maximize => f64::NEG_INFINITY,
    }
}

/// The swarm's initial state under a config's seed: positions first (one
/// design per particle, bit by bit), then velocities (uniform in [-1, 1],
/// particle by particle, coordinate by coordinate).
pub fn initial_swarm(cfg: &SwarmConfig) -> (Vec<OctantDesign>, Vec<[f64; OCTANT_BITS]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    initial_swarm_from(cfg, &mut rng)
}

fn initial_swarm_from<R: Rng + ?Sized>(
    cfg: &SwarmConfig,
    rng: &mut R,
) -> (Vec<OctantDesign>, Vec<[f64; OCTANT_BITS]>) {
    let x: Vec<OctantDesign> = (0..cfg.n_particles).map(|_| random_design(rng)).collect();
    let v: Vec<[f64; OCTANT_BITS]> = (0..cfg.n_particles)
        .map(|_| {
            let mut row = [0.0; OCTANT_BITS];
            for r in row.iter_mut() {
                *r = rng.gen_range(-1.0..1.0);
            }
            row
        })
        .collect();
    (x, v)
}

fn scalar_draws<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// v <- clamp(w v + c r (target - x)) per coordinate.
fn steer_toward(
    v: &mut [f64; OCTANT_BITS],
    w: f64,
    c: f64,
    r: f64,
    target: &OctantDesign,
    x: &OctantDesign,
    clamp: f64,
) {
    for (j, vj) in v.iter_mut().enumerate() {
        let delta = f64::from(target.bit(j)) - f64::from(x.bit(j));
        *vj = (w * *vj + c * r * delta).clamp(-clamp, clamp);
    }
}

/// v <- clamp(w v + c r field) per coordinate.
fn steer_field(v: &mut [f64; OCTANT_BITS], w: f64, c: f64, r: f64, field: &[f64; OCTANT_BITS], clamp: f64) {
    for (j, vj) in v.iter_mut().enumerate() {
        *vj = (w * *vj + c * r * field[j]).clamp(-clamp, clamp);
    }
}

/// Classic BPSO against an arbitrary batch design-error evaluator. Exposed
/// so the dynamics can be exercised with any scorer (including the
/// reference solver itself); counts one evaluator call per design scored.
pub fn baseline_bpso_with_evaluator<F>(
    cfg: &SwarmConfig,
    mut eval: F,
) -> Result<RunRecord, SwarmError>
where
    F: FnMut(&[OctantDesign]) -> Vec<f64>,
{
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut x, mut v) = initial_swarm_from(cfg, &mut rng);
    let n = cfg.n_particles;
    let mut lf_calls = 0u64;

    let mut scores = eval(&x);
    lf_calls += n as u64;
    let mut p = x.clone();
    let mut pv = scores.clone();
    let g0 = argmin_first(&pv);
    let mut g = p[g0];
    let mut gv = pv[g0];

    let mut iterations = Vec::with_capacity(cfg.n_itr);
    for it in 1..=cfg.n_itr {
        let r1 = scalar_draws(n, &mut rng);
        let r2 = scalar_draws(n, &mut rng);
        for i in 0..n {
            let mut vi = v[i];
            for (j, vj) in vi.iter_mut().enumerate() {
                let cognitive = cfg.c1 * r1[i] * (f64::from(p[i].bit(j)) - f64::from(x[i].bit(j)));
                let social = cfg.c2 * r2[i] * (f64::from(g.bit(j)) - f64::from(x[i].bit(j)));
                *vj = (cfg.w * *vj + cognitive + social).clamp(-cfg.v_clamp, cfg.v_clamp);
            }
            v[i] = vi;
        }
        for i in 0..n {
            x[i] = update_position(&v[i], &mut rng);
        }
        scores = eval(&x);
        lf_calls += n as u64;
        for i in 0..n {
            if scores[i] < pv[i] {
                pv[i] = scores[i];
                p[i] = x[i];
            }
        }
        let gi = argmin_first(&pv);
        if pv[gi] < gv {
            gv = pv[gi];
            g = p[gi];
        }
        iterations.push(IterationRecord {
            iteration: it,
            mode: None,
            best_lf_des_mae: Some(gv),
            hf_des_mae: None,
            design: g,
            hf_calls_cumulative: 0,
        });
    }

    Ok(RunRecord {
        iterations,
        hf_calls: 0,
        lf_calls,
        wall: start.elapsed(),
        final_hf_des_mae: None,
        best_design: None,
    })
}

/// Classic surrogate-only BPSO: minimizes the deployed model's design error
/// and, by construction, makes zero reference-solver calls.
pub fn baseline_bpso(
    cfg: &SwarmConfig,
    model: &SurrogateModel,
    target: &DesignTarget,
) -> Result<RunRecord, SwarmError> {
    baseline_bpso_with_evaluator(cfg, |designs| {
        model
            .predict_t_mag_batch(designs)
            .iter()
            .map(|t| target_mae(t, target))
            .collect()
    })
}

/// Metric values plus (when the surrogate is consulted) the surrogate
/// design error used to select the iteration's representative particle.
struct MetricBatch {
    lf_des: Option<Vec<f64>>,
    metric: Vec<f64>,
    lf_calls: u64,
}

fn evaluate_metric_batch(
    metric: MetricKind,
    designs: &[OctantDesign],
    model: &SurrogateModel,
    ensemble: Option<&Ensemble>,
    oracle: Option<&MeteredOracle>,
    target: &DesignTarget,
) -> Result<MetricBatch, SwarmError> {
    let n = designs.len() as u64;
    match metric {
        MetricKind::LfDesMae => {
            let lf: Vec<f64> = model
                .predict_t_mag_batch(designs)
                .iter()
                .map(|t| target_mae(t, target))
                .collect();
            Ok(MetricBatch { metric: lf.clone(), lf_des: Some(lf), lf_calls: n })
        }
        MetricKind::PhyUnc => {
            let spectra = model.predict_batch(designs);
            let lf: Vec<f64> = spectra.iter().map(|s| target_mae(&s.t_mag(), target)).collect();
            let unc: Vec<f64> = spectra.iter().map(physics_residual).collect();
            Ok(MetricBatch { lf_des: Some(lf), metric: unc, lf_calls: n })
        }
        MetricKind::EnsbUnc => {
            let ensemble = ensemble.ok_or(SwarmError::MissingEnsemble(metric))?;
            let curves = ensemble.member_t_mags(designs);
            // Member 0 is the deployed predictor; its curve serves the
            // design-error readout while all members feed the spread.
            let lf: Vec<f64> = curves.iter().map(|c| target_mae(&c[0], target)).collect();
            let unc: Vec<f64> = curves
                .iter()
                .map(|c| crate::metrics::ensemble_spread(c))
                .collect();
            Ok(MetricBatch {
                lf_des: Some(lf),
                metric: unc,
                lf_calls: n * ensemble.n_members() as u64,
            })
        }
        MetricKind::HfDesMae => {
            let oracle = oracle.ok_or(SwarmError::MissingOracle(metric))?;
            let vals: Vec<f64> = designs
                .iter()
                .map(|d| target_mae(&oracle.spectrum(d).t_mag(), target))
                .collect();
            Ok(MetricBatch { lf_des: None, metric: vals, lf_calls: 0 })
        }
    }
}

fn effective_direction(metric: MetricKind, cfg: &SwarmConfig) -> Direction {
    if cfg.minimize_uncertainty_metrics && metric.is_uncertainty() {
        Direction::Minimize
    } else {
        metric.direction()
    }
}

/// Single-metric BPSO: one scalar objective steers personal bests (there is
/// no global-best term). The initial positions are never evaluated; each
/// iteration moves first, then scores the fresh swarm.
pub fn single_metric_bpso(
    cfg: &SwarmConfig,
    metric: MetricKind,
    model: &SurrogateModel,
    ensemble: Option<&Ensemble>,
    oracle: Option<&MeteredOracle>,
    target: &DesignTarget,
) -> Result<RunRecord, SwarmError> {
    cfg.validate()?;
    if metric == MetricKind::EnsbUnc && ensemble.is_none() {
        return Err(SwarmError::MissingEnsemble(metric));
    }
    if metric == MetricKind::HfDesMae && oracle.is_none() {
        return Err(SwarmError::MissingOracle(metric));
    }
    let start = Instant::now();
    let dir = effective_direction(metric, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut x, mut v) = initial_swarm_from(cfg, &mut rng);
    let n = cfg.n_particles;

    let mut p = x.clone();
    let mut pv = vec![worst_value(dir); n];
    let mut lf_calls = 0u64;
    let hf_before = oracle.map_or(0, |o| o.calls());

    let mut best_hf = f64::INFINITY;
    let mut best_design = None;
    let mut iterations = Vec::with_capacity(cfg.n_itr);

    for it in 1..=cfg.n_itr {
        let r1 = scalar_draws(n, &mut rng);
        for i in 0..n {
            let mut vi = v[i];
            steer_toward(&mut vi, cfg.w, cfg.c_metric, r1[i], &p[i], &x[i], cfg.v_clamp);
            v[i] = vi;
        }
        for i in 0..n {
            x[i] = update_position(&v[i], &mut rng);
        }

        let batch = evaluate_metric_batch(metric, &x, model, ensemble, oracle, target)?;
        lf_calls += batch.lf_calls;
        for i in 0..n {
            if improves(pv[i], batch.metric[i], dir) {
                pv[i] = batch.metric[i];
                p[i] = x[i];
            }
        }

        let record = match metric {
            MetricKind::HfDesMae => {
                let bi = argmin_first(&batch.metric);
                let hv = batch.metric[bi];
                if hv < best_hf {
                    best_hf = hv;
                    best_design = Some(x[bi]);
                }
                IterationRecord {
                    iteration: it,
                    mode: None,
                    best_lf_des_mae: None,
                    hf_des_mae: Some(hv),
                    design: x[bi],
                    hf_calls_cumulative: (it * n) as u64,
                }
            }
            _ => {
                let lf = batch.lf_des.as_ref().expect("surrogate metrics carry design error");
                let xe = argmin_first(lf);
                IterationRecord {
                    iteration: it,
                    mode: None,
                    best_lf_des_mae: Some(lf[xe]),
                    hf_des_mae: None,
                    design: x[xe],
                    hf_calls_cumulative: 0,
                }
            }
        };
        iterations.push(record);
    }

    let hf_calls = oracle.map_or(0, |o| o.calls()) - hf_before;
    Ok(RunRecord {
        iterations,
        hf_calls,
        lf_calls,
        wall: start.elapsed(),
        final_hf_des_mae: if metric == MetricKind::HfDesMae { Some(best_hf) } else { None },
        best_design,
    })
}

/// Uncertainty-guided multifidelity BPSO. Each iteration scores the current
/// swarm with the surrogate, sends the lowest-surrogate-error particle to
/// the reference solver (one call), logs it as a beacon, advances the
/// stagnation state machine on the verified outcome, updates personal bests
/// by the uncertainty metric, and then moves: warmup iterations (staged runs
/// only) and Explore steps chase personal bests, Exploit steps ride the
/// beacon field.
pub fn multifidelity_bpso(
    cfg: &SwarmConfig,
    metric: MetricKind,
    model: &SurrogateModel,
    ensemble: Option<&Ensemble>,
    oracle: &MeteredOracle,
    target: &DesignTarget,
    staged: bool,
) -> Result<RunRecord, SwarmError> {
    cfg.validate()?;
    if !metric.is_uncertainty() {
        return Err(SwarmError::NotUncertainty(metric));
    }
    if metric == MetricKind::EnsbUnc && ensemble.is_none() {
        return Err(SwarmError::MissingEnsemble(metric));
    }
    let start = Instant::now();
    let dir = effective_direction(metric, cfg);
    let n_const = if staged { cfg.n_itr_const } else { 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut x, mut v) = initial_swarm_from(cfg, &mut rng);
    let n = cfg.n_particles;

    let mut p = x.clone();
    let mut pv = vec![worst_value(dir); n];
    let mut beacons: Vec<(OctantDesign, f64)> = Vec::with_capacity(cfg.n_itr);
    let mut tracker = StagnationTracker::new();
    let mut best_hf = f64::INFINITY;
    let mut best_design = None;
    let mut lf_calls = 0u64;
    let hf_before = oracle.calls();
    let mut iterations = Vec::with_capacity(cfg.n_itr);

    for it in 1..=cfg.n_itr {
        // Score the swarm as it stands, then verify its most promising
        // member. Evaluating before moving means iteration 1 verifies a
        // fresh random particle, which is what seeds the beacon list.
        let batch = evaluate_metric_batch(metric, &x, model, ensemble, None, target)?;
        lf_calls += batch.lf_calls;
        let lf = batch.lf_des.as_ref().expect("uncertainty metrics carry design error");
        let xe = argmin_first(lf);
        let hv = target_mae(&oracle.spectrum(&x[xe]).t_mag(), target);
        beacons.push((x[xe], hv));

        let improved = hv < best_hf;
        if improved {
            best_hf = hv;
            best_design = Some(x[xe]);
        }
        let mode = tracker.observe(improved);

        for i in 0..n {
            if improves(pv[i], batch.metric[i], dir) {
                pv[i] = batch.metric[i];
                p[i] = x[i];
            }
        }

        // Both scalar draws happen every iteration so the random stream
        // does not depend on which branch fires.
        let r1 = scalar_draws(n, &mut rng);
        let r2 = scalar_draws(n, &mut rng);
        if it <= n_const {
            for i in 0..n {
                let mut vi = v[i];
                steer_toward(&mut vi, cfg.w, cfg.c_metric, r1[i], &p[i], &x[i], cfg.v_clamp);
                v[i] = vi;
            }
        } else if mode == Mode::Exploit {
            for i in 0..n {
                let field = attraction(&beacons, &x[i], cfg.k)?;
                let mut vi = v[i];
                steer_field(&mut vi, cfg.w, cfg.c, r2[i], &field, cfg.v_clamp);
                v[i] = vi;
            }
        } else {
            for i in 0..n {
                let mut vi = v[i];
                steer_toward(&mut vi, cfg.w, cfg.c, r1[i], &p[i], &x[i], cfg.v_clamp);
                v[i] = vi;
            }
        }
        for i in 0..n {
            x[i] = update_position(&v[i], &mut rng);
        }

        iterations.push(IterationRecord {
            iteration: it,
            mode: Some(mode),
            best_lf_des_mae: Some(lf[xe]),
            hf_des_mae: Some(hv),
            design: x_eval_design(&beacons),
            hf_calls_cumulative: it as u64,
        });
    }

    let hf_calls = oracle.calls() - hf_before;
    Ok(RunRecord {
        iterations,
        hf_calls,
        lf_calls,
        wall: start.elapsed(),
        final_hf_des_mae: Some(best_hf),
        best_design,
    })
}

fn x_eval_design(beacons: &[(OctantDesign, f64)]) -> OctantDesign {
    beacons.last().expect("beacon pushed this iteration").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::TargetKind;
    use crate::oracle::Oracle;
    use crate::surrogate::{generate_dataset, train_ensemble, SurrogateConfig};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn oracle() -> &'static Oracle {
        static ORACLE: OnceLock<Oracle> = OnceLock::new();
        ORACLE.get_or_init(Oracle::default)
    }

    /// Small but real ensemble: fast to train, faithful in structure.
    fn fixture() -> &'static Ensemble {
        static FIX: OnceLock<Ensemble> = OnceLock::new();
        FIX.get_or_init(|| {
            let cfg = SurrogateConfig { feature_dim: 64, ..SurrogateConfig::default() };
            let ts = generate_dataset(oracle(), 300, 1).unwrap();
            train_ensemble(&ts, 3, 100, &cfg).unwrap()
        })
    }

    fn stop_target() -> DesignTarget {
        DesignTarget::band_stop()
    }

    fn short_cfg(seed: u64) -> SwarmConfig {
        SwarmConfig {
            n_itr: 8,
            n_itr_const: 3,
            n_itr_alter: 5,
            seed,
            ..SwarmConfig::default()
        }
    }

    #[test]
    fn transfer_matches_its_closed_form() {
        assert_eq!(transfer(0.0), 0.5);
        assert!(transfer(6.0) > 0.99);
        assert!(transfer(-6.0) < 0.01);
        assert!((transfer(1.0) - 0.952_574_126_822_433_1).abs() < 1e-12);
        // Monotone and bounded.
        let mut prev = 0.0;
        for i in -60..=60 {
            let t = transfer(i as f64 / 10.0);
            assert!((0.0..=1.0).contains(&t));
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn zero_velocity_resamples_bits_fairly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = [0.0; OCTANT_BITS];
        let mut ones = 0usize;
        let draws = 10_000;
        for _ in 0..draws {
            ones += update_position(&v, &mut rng).weight();
        }
        let freq = ones as f64 / (draws * OCTANT_BITS) as f64;
        assert!(
            (freq - 0.5).abs() <= 0.02,
            "bit-on frequency {freq} strays from 0.5"
        );
    }

    #[test]
    fn saturated_velocities_pin_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut v = [6.0; OCTANT_BITS];
        for j in 0..OCTANT_BITS / 2 {
            v[j] = -6.0;
        }
        let mut on = [0u32; OCTANT_BITS];
        for _ in 0..1000 {
            let d = update_position(&v, &mut rng);
            for j in 0..OCTANT_BITS {
                on[j] += u32::from(d.bit(j));
            }
        }
        for j in 0..OCTANT_BITS {
            let rate = f64::from(on[j]) / 1000.0;
            if v[j] > 0.0 {
                assert!(rate > 0.95, "bit {j} on-rate {rate} despite v=+6");
            } else {
                assert!(rate < 0.05, "bit {j} on-rate {rate} despite v=-6");
            }
        }
    }

    #[test]
    fn attraction_with_one_beacon_points_straight_at_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_design(&mut rng);
        let x = random_design(&mut rng);
        let f = attraction(&[(b, 0.37)], &x, 10.0).unwrap();
        for j in 0..OCTANT_BITS {
            let expect = f64::from(b.bit(j)) - f64::from(x.bit(j));
            assert!((f[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn attraction_with_equal_errors_averages_the_beacons() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b1 = random_design(&mut rng);
        let b2 = random_design(&mut rng);
        let x = random_design(&mut rng);
        let f = attraction(&[(b1, 0.2), (b2, 0.2)], &x, 10.0).unwrap();
        for j in 0..OCTANT_BITS {
            let d1 = f64::from(b1.bit(j)) - f64::from(x.bit(j));
            let d2 = f64::from(b2.bit(j)) - f64::from(x.bit(j));
            assert!((f[j] - 0.5 * (d1 + d2)).abs() < 1e-12);
        }
    }

    #[test]
    fn attraction_all_but_ignores_a_much_worse_beacon() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let good = random_design(&mut rng);
        let bad = random_design(&mut rng);
        let x = random_design(&mut rng);
        let f = attraction(&[(good, 0.0), (bad, 1.0)], &x, 10.0).unwrap();
        for j in 0..OCTANT_BITS {
            let expect = f64::from(good.bit(j)) - f64::from(x.bit(j));
            assert!(
                (f[j] - expect).abs() <= 1e-4,
                "coordinate {j}: field {} vs perfect-beacon pull {expect}",
                f[j]
            );
        }
    }

    #[test]
    fn attraction_needs_beacons() {
        let x = OctantDesign::zeros();
        assert!(matches!(attraction(&[], &x, 10.0), Err(SwarmError::NoBeacons)));
    }

    #[test]
    fn stagnation_trace_improve_stall_stall_improve() {
        let mut t = StagnationTracker::new();
        let modes: Vec<Mode> = [true, false, false, true]
            .into_iter()
            .map(|o| t.observe(o))
            .collect();
        assert_eq!(modes, [Mode::Exploit, Mode::Exploit, Mode::Explore, Mode::Exploit]);
    }

    proptest! {
        /// Explore appears exactly when the two most recent verifications
        /// both stalled.
        #[test]
        fn explore_requires_two_consecutive_stalls(obs in proptest::collection::vec(any::<bool>(), 1..100)) {
            let mut t = StagnationTracker::new();
            for (i, &improved) in obs.iter().enumerate() {
                let mode = t.observe(improved);
                let expect_explore = i >= 1 && !improved && !obs[i - 1];
                prop_assert_eq!(mode == Mode::Explore, expect_explore);
            }
        }
    }

    #[test]
    fn config_validation_catches_bad_shapes() {
        assert!(SwarmConfig::default().validate().is_ok());
        let mut bad = SwarmConfig::default();
        bad.n_particles = 1;
        assert!(bad.validate().is_err());
        let mut bad = SwarmConfig::default();
        bad.n_itr_const = 11;
        assert!(bad.validate().is_err());
        let mut bad = SwarmConfig::default();
        bad.v_clamp = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = SwarmConfig::default();
        bad.w = f64::NAN;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn baseline_never_calls_the_reference_and_counts_lf_work() {
        let ens = fixture();
        let cfg = short_cfg(21);
        let rec = baseline_bpso(&cfg, ens.deployed(), &stop_target()).unwrap();
        assert_eq!(rec.hf_calls, 0);
        assert_eq!(
            rec.lf_calls,
            (cfg.n_particles * (cfg.n_itr + 1)) as u64,
            "one batch before the loop plus one per iteration"
        );
        assert_eq!(rec.iterations.len(), cfg.n_itr);
        assert!(rec.final_hf_des_mae.is_none());
    }

    #[test]
    fn baseline_best_score_is_monotone_and_beats_the_initial_swarm() {
        let cfg = short_cfg(22);
        let target = stop_target();
        let eval = |designs: &[OctantDesign]| -> Vec<f64> {
            designs
                .iter()
                .map(|d| target_mae(&oracle().spectrum(d).t_mag(), &target))
                .collect()
        };
        let rec = baseline_bpso_with_evaluator(&cfg, eval).unwrap();
        let best: Vec<f64> = rec
            .iterations
            .iter()
            .map(|r| r.best_lf_des_mae.unwrap())
            .collect();
        for w in best.windows(2) {
            assert!(w[1] <= w[0], "best score regressed: {w:?}");
        }
        let (x0, _) = initial_swarm(&cfg);
        let init_best = eval(&x0).into_iter().fold(f64::INFINITY, f64::min);
        assert!(best[0] <= init_best);
        assert!(*best.last().unwrap() <= init_best);
    }

    #[test]
    fn runs_are_reproducible_from_their_seed() {
        let ens = fixture();
        let cfg = short_cfg(23);
        let target = stop_target();

        let a = baseline_bpso(&cfg, ens.deployed(), &target).unwrap();
        let b = baseline_bpso(&cfg, ens.deployed(), &target).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.lf_calls, b.lf_calls);

        let ma = MeteredOracle::new(oracle());
        let mb = MeteredOracle::new(oracle());
        let sa = multifidelity_bpso(&cfg, MetricKind::PhyUnc, ens.deployed(), None, &ma, &target, true).unwrap();
        let sb = multifidelity_bpso(&cfg, MetricKind::PhyUnc, ens.deployed(), None, &mb, &target, true).unwrap();
        assert_eq!(sa.iterations, sb.iterations);
        assert_eq!(sa.final_hf_des_mae, sb.final_hf_des_mae);

        let mut changed = cfg.clone();
        changed.seed = 24;
        let sc = multifidelity_bpso(&changed, MetricKind::PhyUnc, ens.deployed(), None, &MeteredOracle::new(oracle()), &target, true).unwrap();
        assert_ne!(sa.iterations, sc.iterations, "different seeds should diverge");
    }

    #[test]
    fn reference_driven_search_consumes_exactly_its_budget() {
        let ens = fixture();
        let cfg = short_cfg(25);
        let meter = MeteredOracle::new(oracle());
        let rec = single_metric_bpso(
            &cfg,
            MetricKind::HfDesMae,
            ens.deployed(),
            None,
            Some(&meter),
            &stop_target(),
        )
        .unwrap();
        assert_eq!(rec.hf_calls, (cfg.n_particles * cfg.n_itr) as u64);
        assert_eq!(meter.calls(), rec.hf_calls);
        assert_eq!(rec.lf_calls, 0);
        let best_from_rows = rec
            .iterations
            .iter()
            .filter_map(|r| r.hf_des_mae)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(rec.final_hf_des_mae, Some(best_from_rows));
        assert!(rec.best_design.is_some());
        assert!(rec.iterations.iter().all(|r| r.best_lf_des_mae.is_none()));
    }

    #[test]
    fn multifidelity_verifies_once_per_iteration() {
        let ens = fixture();
        let cfg = short_cfg(26);
        let target = stop_target();
        for staged in [true, false] {
            for metric in [MetricKind::PhyUnc, MetricKind::EnsbUnc] {
                let meter = MeteredOracle::new(oracle());
                let rec = multifidelity_bpso(
                    &cfg,
                    metric,
                    ens.deployed(),
                    Some(ens),
                    &meter,
                    &target,
                    staged,
                )
                .unwrap();
                assert_eq!(rec.hf_calls, cfg.n_itr as u64);
                assert_eq!(meter.calls(), cfg.n_itr as u64);
                let expected_lf = match metric {
                    MetricKind::PhyUnc => cfg.n_particles * cfg.n_itr,
                    MetricKind::EnsbUnc => cfg.n_particles * cfg.n_itr * ens.n_members(),
                    _ => unreachable!(),
                };
                assert_eq!(rec.lf_calls, expected_lf as u64);
                assert!(rec.iterations.iter().all(|r| r.mode.is_some()
                    && r.hf_des_mae.is_some()
                    && r.best_lf_des_mae.is_some()));
                // The record's final value is the running best of the rows.
                let best = rec
                    .iterations
                    .iter()
                    .filter_map(|r| r.hf_des_mae)
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(rec.final_hf_des_mae, Some(best));
            }
        }
    }

    #[test]
    fn recorded_mode_trace_obeys_the_state_machine() {
        let ens = fixture();
        let target = stop_target();
        for seed in 0..6u64 {
            let cfg = SwarmConfig { seed, ..SwarmConfig::default() };
            let meter = MeteredOracle::new(oracle());
            let rec = multifidelity_bpso(
                &cfg,
                MetricKind::PhyUnc,
                ens.deployed(),
                None,
                &meter,
                &target,
                true,
            )
            .unwrap();
            let mut best = f64::INFINITY;
            let mut tracker = StagnationTracker::new();
            for row in &rec.iterations {
                let hv = row.hf_des_mae.unwrap();
                let improved = hv < best;
                if improved {
                    best = hv;
                }
                let expect = tracker.observe(improved);
                assert_eq!(row.mode, Some(expect), "iteration {}", row.iteration);
            }
        }
    }

    #[test]
    fn wiring_errors_are_reported() {
        let ens = fixture();
        let cfg = short_cfg(27);
        let target = stop_target();
        assert!(matches!(
            single_metric_bpso(&cfg, MetricKind::EnsbUnc, ens.deployed(), None, None, &target),
            Err(SwarmError::MissingEnsemble(MetricKind::EnsbUnc))
        ));
        assert!(matches!(
            single_metric_bpso(&cfg, MetricKind::HfDesMae, ens.deployed(), None, None, &target),
            Err(SwarmError::MissingOracle(MetricKind::HfDesMae))
        ));
        let meter = MeteredOracle::new(oracle());
        assert!(matches!(
            multifidelity_bpso(&cfg, MetricKind::LfDesMae, ens.deployed(), None, &meter, &target, true),
            Err(SwarmError::NotUncertainty(MetricKind::LfDesMae))
        ));
        assert!(matches!(
            multifidelity_bpso(&cfg, MetricKind::EnsbUnc, ens.deployed(), None, &meter, &target, true),
            Err(SwarmError::MissingEnsemble(MetricKind::EnsbUnc))
        ));
    }

    #[test]
    fn argmin_breaks_ties_toward_the_lowest_index() {
        assert_eq!(argmin_first(&[0.3, 0.1, 0.1, 0.5]), 1);
        assert_eq!(argmin_first(&[0.2]), 0);
        assert_eq!(argmin_first(&[1.0, 1.0, 1.0]), 0);
    }

    #[test]
    fn single_metric_rows_select_the_surrogate_minimizer() {
        let ens = fixture();
        let cfg = short_cfg(28);
        let target = stop_target();
        let rec = single_metric_bpso(&cfg, MetricKind::PhyUnc, ens.deployed(), None, None, &target).unwrap();
        assert_eq!(rec.iterations.len(), cfg.n_itr);
        for row in &rec.iterations {
            // The recorded design's surrogate error matches the recorded value.
            let t = ens.deployed().predict_t_mag_batch(&[row.design]);
            let lf = target_mae(&t[0], &target);
            assert!((lf - row.best_lf_des_mae.unwrap()).abs() < 1e-12);
            assert!(row.hf_des_mae.is_none());
            assert!(row.mode.is_none());
        }
        assert_eq!(rec.hf_calls, 0);
        assert!(rec.final_hf_des_mae.is_none());
    }

    #[test]
    fn band_pass_target_changes_the_search() {
        let ens = fixture();
        let cfg = short_cfg(29);
        let stop = multifidelity_bpso(
            &cfg,
            MetricKind::PhyUnc,
            ens.deployed(),
            None,
            &MeteredOracle::new(oracle()),
            &DesignTarget::band_stop(),
            true,
        )
        .unwrap();
        let pass = multifidelity_bpso(
            &cfg,
            MetricKind::PhyUnc,
            ens.deployed(),
            None,
            &MeteredOracle::new(oracle()),
            &DesignTarget::band_pass(),
            true,
        )
        .unwrap();
        assert_ne!(stop.iterations, pass.iterations);
        assert_eq!(
            DesignTarget::band_pass().kind,
            TargetKind::BandPass
        );
    }
}
