//! Low-fidelity surrogate: random-feature ridge regression.
//!
//! The surrogate is the fast, imperfect stand-in for the reference solver.
//! Each model maps a design to three bounded geometry channels — normalized
//! fill fraction, normalized roughness, centered connectivity, each squashed
//! through a gain-scaled tanh — and expands them with a random cosine
//! feature bank (weights ~ N(0, σ²), phases ~ U[0, 2π)). Four independent
//! ridge heads, one per spectral component (Re T, Im T, Re R, Im R), read
//! the expansion. Independence of the heads is deliberate: it means the
//! learned response can (and generically does) violate the exact continuity
//! identity T − R = 1 that the reference model obeys, which is what makes
//! the physics residual of a prediction a usable uncertainty signal.
//!
//! The fill and roughness channels are z-scored against the training set and
//! hard-clipped at ±`channel_clip_z` before the tanh. The clip is the
//! surrogate's honest confession of its support: outside the training
//! distribution the features freeze, so predictions go confidently stale
//! rather than wildly extrapolating — exactly the data-sparse failure mode
//! an uncertainty-aware optimizer has to detect and route around.
//!
//! An ensemble is a set of such models differing only in their feature
//! seeds; member 0 acts as the deployed predictor and all members feed the
//! disagreement metric.

use std::fs;
use std::io::{self, Read as _, Write as _};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{expand_octant, features, random_design, OctantDesign};
use crate::oracle::{Oracle, Spectrum, N_FREQ};

/// Smallest usable training set.
pub const MIN_TRAINING_SET: usize = 100;
/// Largest supported training set.
pub const MAX_TRAINING_SET: usize = 10_000;
/// Spectral components regressed independently.
const N_BLOCKS: usize = 4;
/// Geometry channels fed to the feature bank.
const N_CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("training set size {0} outside [{MIN_TRAINING_SET}, {MAX_TRAINING_SET}]")]
    DatasetSize(usize),
    #[error("degenerate training data: designs carry no geometric variation")]
    DegenerateData,
    #[error("ensemble needs at least 2 members, got {0}")]
    EnsembleTooSmall(usize),
    #[error("ridge system was not positive definite (lambda too small?)")]
    SingularSystem,
    #[error("unreadable model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Training hyperparameters and feature-map shape, all overridable from the
/// experiment config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    /// Labeled designs in the default training set.
    pub n_train: usize,
    /// Ensemble size (member 0 is the deployed predictor).
    pub n_members: usize,
    /// Seed of the random training-set generator.
    pub dataset_seed: u64,
    /// Member m trains with feature seed `feature_seed_base + m`.
    pub feature_seed_base: u64,
    /// Random cosine features per model.
    pub feature_dim: usize,
    /// Ridge regularization strength.
    pub ridge_lambda: f64,
    /// Standard deviation of the random projection weights.
    pub weight_scale: f64,
    /// Output gain of each tanh geometry channel.
    pub channel_gain: f64,
    /// Hard clip (in training-set standard deviations) applied to the fill
    /// and roughness channels before the tanh.
    pub channel_clip_z: f64,
    /// Center of the connectivity channel.
    pub conn_center: f64,
    /// Scale of the connectivity channel.
    pub conn_scale: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_members: 10,
            dataset_seed: 1,
            feature_seed_base: 1000,
            feature_dim: 512,
            ridge_lambda: 1e-3,
            weight_scale: 1.3,
            channel_gain: 1.5,
            channel_clip_z: 2.4,
            conn_center: 0.5,
            conn_scale: 0.1,
        }
    }
}

/// Designs labeled by the reference solver.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub designs: Vec<OctantDesign>,
    pub responses: Vec<Spectrum>,
}

impl TrainingSet {
    pub fn new(designs: Vec<OctantDesign>, responses: Vec<Spectrum>) -> Result<Self, SurrogateError> {
        assert_eq!(designs.len(), responses.len(), "designs and labels must pair up");
        if designs.len() < MIN_TRAINING_SET || designs.len() > MAX_TRAINING_SET {
            return Err(SurrogateError::DatasetSize(designs.len()));
        }
        Ok(Self { designs, responses })
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }
}

/// Draws `n` random designs and labels them with the reference solver;
/// deterministic given the seed.
pub fn generate_dataset(oracle: &Oracle, n: usize, seed: u64) -> Result<TrainingSet, SurrogateError> {
    if !(MIN_TRAINING_SET..=MAX_TRAINING_SET).contains(&n) {
        return Err(SurrogateError::DatasetSize(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let designs: Vec<OctantDesign> = (0..n).map(|_| random_design(&mut rng)).collect();
    let responses: Vec<Spectrum> = designs.iter().map(|d| oracle.spectrum(d)).collect();
    Ok(TrainingSet { designs, responses })
}

/// Training-set statistics that normalize the geometry channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelNorm {
    pub fill_mean: f64,
    pub fill_sd: f64,
    pub rough_mean: f64,
    pub rough_sd: f64,
    pub conn_center: f64,
    pub conn_scale: f64,
}

impl ChannelNorm {
    fn from_training(ts: &TrainingSet, cfg: &SurrogateConfig) -> Result<Self, SurrogateError> {
        let n = ts.len() as f64;
        let (mut fill_mean, mut rough_mean) = (0.0, 0.0);
        let feats: Vec<_> = ts
            .designs
            .iter()
            .map(|d| features(&expand_octant(d)))
            .collect();
        for f in &feats {
            fill_mean += f.fill_fraction;
            rough_mean += f.roughness;
        }
        fill_mean /= n;
        rough_mean /= n;
        let (mut fill_var, mut rough_var) = (0.0, 0.0);
        for f in &feats {
            fill_var += (f.fill_fraction - fill_mean).powi(2);
            rough_var += (f.roughness - rough_mean).powi(2);
        }
        let fill_sd = (fill_var / n).sqrt();
        let rough_sd = (rough_var / n).sqrt();
        if fill_sd < 1e-12 || rough_sd < 1e-12 {
            return Err(SurrogateError::DegenerateData);
        }
        Ok(Self {
            fill_mean,
            fill_sd,
            rough_mean,
            rough_sd,
            conn_center: cfg.conn_center,
            conn_scale: cfg.conn_scale,
        })
    }
}

/// One ridge head: maps the cosine feature expansion to one spectral block.
#[derive(Clone, Debug, PartialEq)]
struct BlockHead {
    /// Random projection, `feature_dim × 3`.
    w: DMatrix<f64>,
    /// Random phases, `feature_dim`.
    phase: DVector<f64>,
    /// Ridge coefficients, `feature_dim × N_FREQ`.
    beta: DMatrix<f64>,
    /// Per-frequency intercepts, `N_FREQ`.
    intercept: DVector<f64>,
}

/// A single trained surrogate model.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateModel {
    pub feature_seed: u64,
    pub ridge_lambda: f64,
    feature_dim: usize,
    channel_gain: f64,
    channel_clip_z: f64,
    norm: ChannelNorm,
    blocks: Vec<BlockHead>,
}

impl SurrogateModel {
    /// Geometry channels of a batch of designs, one row per design.
    fn encode(&self, designs: &[OctantDesign]) -> DMatrix<f64> {
        encode_batch(
            designs,
            &self.norm,
            self.channel_gain,
            self.channel_clip_z,
        )
    }

    /// Predicts the full four-component spectral response of each design.
    pub fn predict_batch(&self, designs: &[OctantDesign]) -> Vec<Spectrum> {
        let u = self.encode(designs);
        let outs: Vec<DMatrix<f64>> = self
            .blocks
            .iter()
            .map(|b| block_outputs(&u, b))
            .collect();
        (0..designs.len())
            .map(|i| {
                Spectrum::new(
                    outs[0].row(i).iter().copied().collect(),
                    outs[1].row(i).iter().copied().collect(),
                    outs[2].row(i).iter().copied().collect(),
                    outs[3].row(i).iter().copied().collect(),
                )
            })
            .collect()
    }

    /// Predicts a single design's response.
    pub fn predict(&self, design: &OctantDesign) -> Spectrum {
        self.predict_batch(std::slice::from_ref(design)).remove(0)
    }

    /// Predicts only the transmission magnitude |T| of each design (cheaper:
    /// touches the two transmission heads only).
    pub fn predict_t_mag_batch(&self, designs: &[OctantDesign]) -> Vec<Vec<f64>> {
        let u = self.encode(designs);
        let re = block_outputs(&u, &self.blocks[0]);
        let im = block_outputs(&u, &self.blocks[1]);
        (0..designs.len())
            .map(|i| {
                (0..N_FREQ)
                    .map(|k| re[(i, k)].hypot(im[(i, k)]))
                    .collect()
            })
            .collect()
    }
}

/// Bounded geometry channels of a batch of designs.
fn encode_batch(
    designs: &[OctantDesign],
    norm: &ChannelNorm,
    gain: f64,
    clip_z: f64,
) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(designs.len(), N_CHANNELS);
    for (i, d) in designs.iter().enumerate() {
        let f = features(&expand_octant(d));
        let zf = ((f.fill_fraction - norm.fill_mean) / norm.fill_sd).clamp(-clip_z, clip_z);
        let zr = ((f.roughness - norm.rough_mean) / norm.rough_sd).clamp(-clip_z, clip_z);
        let zc = (f.connectivity - norm.conn_center) / norm.conn_scale;
        u[(i, 0)] = gain * zf.tanh();
        u[(i, 1)] = gain * zr.tanh();
        u[(i, 2)] = gain * zc.tanh();
    }
    u
}

/// Cosine feature expansion: cos(U·Wᵀ + phase), row per design.
fn feature_expansion(u: &DMatrix<f64>, w: &DMatrix<f64>, phase: &DVector<f64>) -> DMatrix<f64> {
    let mut phi = u * w.transpose();
    for (j, mut col) in phi.column_iter_mut().enumerate() {
        let ph = phase[j];
        for v in col.iter_mut() {
            *v = (*v + ph).cos();
        }
    }
    phi
}

/// Evaluates one trained head on an encoded batch.
fn block_outputs(u: &DMatrix<f64>, b: &BlockHead) -> DMatrix<f64> {
    let phi = feature_expansion(u, &b.w, &b.phase);
    let mut y = phi * &b.beta;
    for mut row in y.row_iter_mut() {
        row += b.intercept.transpose();
    }
    y
}

/// Trains one model: a fresh random feature bank per spectral block, then a
/// centered ridge solve against the training labels. Deterministic given the
/// training set, the feature seed, and the config.
pub fn train(
    ts: &TrainingSet,
    feature_seed: u64,
    cfg: &SurrogateConfig,
) -> Result<SurrogateModel, SurrogateError> {
    if ts.len() < MIN_TRAINING_SET || ts.len() > MAX_TRAINING_SET {
        return Err(SurrogateError::DatasetSize(ts.len()));
    }
    if ts.designs.iter().all(|d| d == &ts.designs[0]) {
        return Err(SurrogateError::DegenerateData);
    }
    let norm = ChannelNorm::from_training(ts, cfg)?;
    let u = encode_batch(&ts.designs, &norm, cfg.channel_gain, cfg.channel_clip_z);
    let dim = cfg.feature_dim;

    let mut rng = ChaCha8Rng::seed_from_u64(feature_seed);
    let weight_dist = Normal::new(0.0, cfg.weight_scale).expect("positive weight scale");

    let mut blocks = Vec::with_capacity(N_BLOCKS);
    for block_idx in 0..N_BLOCKS {
        // Fresh random features for this block, drawn in a fixed order.
        let mut w = DMatrix::zeros(dim, N_CHANNELS);
        for i in 0..dim {
            for j in 0..N_CHANNELS {
                w[(i, j)] = weight_dist.sample(&mut rng);
            }
        }
        let phase =
            DVector::from_iterator(dim, (0..dim).map(|_| rng.gen::<f64>() * std::f64::consts::TAU));

        let phi = feature_expansion(&u, &w, &phase);
        let mu = column_means(&phi);
        let mut pc = phi;
        for (j, mut col) in pc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mu[j]);
        }

        let mut gram = pc.tr_mul(&pc);
        for d in 0..dim {
            gram[(d, d)] += cfg.ridge_lambda;
        }
        let chol = gram
            .cholesky()
            .ok_or(SurrogateError::SingularSystem)?;

        let y = label_matrix(ts, block_idx);
        let ybar = column_means(&y);
        let mut yc = y;
        for (j, mut col) in yc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-ybar[j]);
        }

        let rhs = pc.tr_mul(&yc);
        let beta = chol.solve(&rhs);
        let intercept = &ybar - beta.tr_mul(&mu);
        blocks.push(BlockHead { w, phase, beta, intercept });
    }

    Ok(SurrogateModel {
        feature_seed,
        ridge_lambda: cfg.ridge_lambda,
        feature_dim: dim,
        channel_gain: cfg.channel_gain,
        channel_clip_z: cfg.channel_clip_z,
        norm,
        blocks,
    })
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

fn label_matrix(ts: &TrainingSet, block: usize) -> DMatrix<f64> {
    DMatrix::from_fn(ts.len(), N_FREQ, |i, k| {
        let s = &ts.responses[i];
        match block {
            0 => s.t_re[k],
            1 => s.t_im[k],
            2 => s.r_re[k],
            _ => s.r_im[k],
        }
    })
}

/// Independently seeded surrogate replicas; member 0 is the deployed
/// predictor, all members feed the disagreement metric.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub members: Vec<SurrogateModel>,
}

impl Ensemble {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    /// The member that serves optimization-time predictions.
    pub fn deployed(&self) -> &SurrogateModel {
        &self.members[0]
    }

    /// Transmission-magnitude curves of every member for every design:
    /// `curves[i][m]` is member m's |T| for design i.
    pub fn member_t_mags(&self, designs: &[OctantDesign]) -> Vec<Vec<Vec<f64>>> {
        let per_member: Vec<Vec<Vec<f64>>> = self
            .members
            .iter()
            .map(|m| m.predict_t_mag_batch(designs))
            .collect();
        (0..designs.len())
            .map(|i| per_member.iter().map(|mm| mm[i].clone()).collect())
            .collect()
    }
}

/// Trains `n_m` members with feature seeds `seed_base + m`, in parallel.
pub fn train_ensemble(
    ts: &TrainingSet,
    n_m: usize,
    seed_base: u64,
    cfg: &SurrogateConfig,
) -> Result<Ensemble, SurrogateError> {
    if n_m < 2 {
        return Err(SurrogateError::EnsembleTooSmall(n_m));
    }
    let members: Result<Vec<SurrogateModel>, SurrogateError> = (0..n_m)
        .into_par_iter()
        .map(|m| train(ts, seed_base + m as u64, cfg))
        .collect();
    Ok(Ensemble { members: members? })
}

// ---------------------------------------------------------------------------
// Persistence: versioned little-endian binary ("MSUR1").
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 5] = b"MSUR1";

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_matrix_row_major(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            write_f64(out, m[(i, j)]);
        }
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SurrogateError> {
        if self.pos + n > self.buf.len() {
            return Err(SurrogateError::BadModelFile("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SurrogateError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SurrogateError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SurrogateError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix_row_major(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>, SurrogateError> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }
}

/// Serializes an ensemble to the versioned binary model format.
pub fn save_ensemble(ensemble: &Ensemble, path: &Path) -> Result<(), SurrogateError> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    let first = ensemble.deployed();
    write_u32(&mut out, ensemble.n_members() as u32);
    write_u32(&mut out, first.feature_dim as u32);
    write_u32(&mut out, N_CHANNELS as u32);
    write_u32(&mut out, N_FREQ as u32);
    write_f64(&mut out, first.ridge_lambda);
    write_f64(&mut out, first.channel_gain);
    write_f64(&mut out, first.channel_clip_z);
    write_f64(&mut out, first.norm.fill_mean);
    write_f64(&mut out, first.norm.fill_sd);
    write_f64(&mut out, first.norm.rough_mean);
    write_f64(&mut out, first.norm.rough_sd);
    write_f64(&mut out, first.norm.conn_center);
    write_f64(&mut out, first.norm.conn_scale);
    for member in &ensemble.members {
        write_u64(&mut out, member.feature_seed);
        for b in &member.blocks {
            write_matrix_row_major(&mut out, &b.w);
            for j in 0..member.feature_dim {
                write_f64(&mut out, b.phase[j]);
            }
            write_matrix_row_major(&mut out, &b.beta);
            for k in 0..N_FREQ {
                write_f64(&mut out, b.intercept[k]);
            }
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Loads an ensemble saved by [`save_ensemble`]; predictions from the loaded
/// ensemble are bit-identical to the original's.
pub fn load_ensemble(path: &Path) -> Result<Ensemble, SurrogateError> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < MODEL_MAGIC.len() || &buf[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(SurrogateError::BadModelFile("bad magic bytes".into()));
    }
    let mut r = ByteReader { buf: &buf, pos: MODEL_MAGIC.len() };
    let n_members = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let n_channels = r.u32()? as usize;
    let n_freq = r.u32()? as usize;
    if n_channels != N_CHANNELS || n_freq != N_FREQ {
        return Err(SurrogateError::BadModelFile(format!(
            "unsupported shape: {n_channels} channels, {n_freq} frequency points"
        )));
    }
    if n_members == 0 || dim == 0 {
        return Err(SurrogateError::BadModelFile("empty model".into()));
    }
    let ridge_lambda = r.f64()?;
    let channel_gain = r.f64()?;
    let channel_clip_z = r.f64()?;
    let norm = ChannelNorm {
        fill_mean: r.f64()?,
        fill_sd: r.f64()?,
        rough_mean: r.f64()?,
        rough_sd: r.f64()?,
        conn_center: r.f64()?,
        conn_scale: r.f64()?,
    };
    let mut members = Vec::with_capacity(n_members);
    for _ in 0..n_members {
        let feature_seed = r.u64()?;
        let mut blocks = Vec::with_capacity(N_BLOCKS);
        for _ in 0..N_BLOCKS {
            let w = r.matrix_row_major(dim, N_CHANNELS)?;
            let mut phase = DVector::zeros(dim);
            for j in 0..dim {
                phase[j] = r.f64()?;
            }
            let beta = r.matrix_row_major(dim, N_FREQ)?;
            let mut intercept = DVector::zeros(N_FREQ);
            for k in 0..N_FREQ {
                intercept[k] = r.f64()?;
            }
            blocks.push(BlockHead { w, phase, beta, intercept });
        }
        members.push(SurrogateModel {
            feature_seed,
            ridge_lambda,
            feature_dim: dim,
            channel_gain,
            channel_clip_z,
            norm,
            blocks,
        });
    }
    if r.pos != buf.len() {
        return Err(SurrogateError::BadModelFile("trailing bytes".into()));
    }
    Ok(Ensemble { members })
}
