//! Test signals and Monte Carlo phase-transition grids.
//!
//! Images are column-major: pixel `(row i, column j)` is entry `i + n1·j`.
//! Measurements are always DFT coefficients of the signal on its grid.

use std::hash::Hasher;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupPartition;
use crate::linop::{
    compose_t, make_dft, make_dft2, make_finite_difference_1d, make_finite_difference_2d, make_haar,
    make_haar2, make_identity, OpKind, TransformOperator,
};
use crate::sampling::{draw, SamplingPattern};
use crate::solver::{rsnr, solve, RecoveryProblem, SolveOptions, SUCCESS_DB};
use crate::spectra::{density, incoherence, two_step_density, SamplingDensity};
use crate::C64;

/// Coefficients below this fraction of the largest magnitude count as zero.
pub const SPARSITY_TOL: f64 = 1e-10;

fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Keeps the `s` largest coefficients (or groups, by ℓ2 norm) of `c`.
pub fn keep_largest(c: &[C64], s: usize, partition: Option<&GroupPartition>) -> Vec<C64> {
    let singles;
    let p = match partition {
        Some(p) => p,
        None => {
            singles = GroupPartition::singletons(c.len());
            &singles
        }
    };
    let mags = p.group_norms_sqr(c);
    let mut order: Vec<usize> = (0..mags.len()).collect();
    // ties broken by index so the result is deterministic
    order.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));
    let mut out = vec![czero(); c.len()];
    for &g in order.iter().take(s) {
        for &i in &p.groups()[g] {
            out[i] = c[i];
        }
    }
    out
}

/// Number of coefficients (or groups) above [`SPARSITY_TOL`] relative to
/// the largest.
pub fn sparsity(c: &[C64], partition: Option<&GroupPartition>) -> usize {
    let mags: Vec<f64> = match partition {
        Some(p) => p.group_norms_sqr(c).into_iter().map(f64::sqrt).collect(),
        None => c.iter().map(|z| z.norm()).collect(),
    };
    let max = mags.iter().copied().fold(0.0, f64::max);
    mags.iter().filter(|&&m| m > SPARSITY_TOL * max).count()
}

/// Zeroes all but the `s` largest analysis coefficients `Φf` and maps back
/// to the signal domain.
///
/// 1D finite differences are inverted with the last difference replaced by
/// the signal sum, which is kept; `s` then counts the remaining `n − 1`
/// differences (the replaced difference is then generally nonzero). Other
/// non-injective `Φ` keep the null-space part of `f`.
pub fn synthesize_sparse(
    base: &[C64],
    phi: &TransformOperator,
    s: usize,
    partition: Option<&GroupPartition>,
) -> Result<Vec<C64>> {
    let c = phi.forward(base)?;
    if phi.kind() == OpKind::FiniteDiff1d {
        let n = base.len();
        let sum: C64 = base.iter().sum();
        let kept = keep_largest(&c[..n - 1], s, None);
        return Ok(invert_tv1d(&kept, sum));
    }
    let kept = keep_largest(&c, s, partition);
    let mut f = phi.pinv(&kept)?;
    if !phi.is_injective() {
        let proj = phi.pinv(&c)?;
        for ((v, b), p) in f.iter_mut().zip(base).zip(proj) {
            *v += b - p;
        }
    }
    Ok(f)
}

/// Inverse of `f ↦ [f₀ − f_{n−1}, f₁ − f₀, …, f_{n−2} − f_{n−3}, Σ f]`.
fn invert_tv1d(diffs: &[C64], sum: C64) -> Vec<C64> {
    let n = diffs.len() + 1;
    // f_k = f_{n−1} + P_k with P_k = Σ_{j≤k} d_j for k < n − 1
    let prefix: Vec<C64> = diffs
        .iter()
        .scan(czero(), |acc, &d| {
            *acc += d;
            Some(*acc)
        })
        .collect();
    let last = (sum - prefix.iter().sum::<C64>()) / n as f64;
    let mut f: Vec<C64> = prefix.iter().map(|p| last + p).collect();
    f.push(last);
    f
}

/// Modified Shepp-Logan ellipses: intensity ×10, semi-axes, centre, angle°.
const SHEPP_LOGAN: [(i32, f64, f64, f64, f64, f64); 10] = [
    (10, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Modified Shepp-Logan phantom on `[-1, 1]²`, sampled at pixel centres.
/// Row 0 is the top (`y = 1`).
pub fn phantom(n1: usize, n2: usize) -> Result<Vec<f64>> {
    if n1 < 16 || n2 < 16 {
        return Err(Error::InvalidArgument(format!("phantom needs at least 16×16, got {n1}×{n2}")));
    }
    let mut out = vec![0.0; n1 * n2];
    for j in 0..n2 {
        let x = (2 * j + 1) as f64 / n2 as f64 - 1.0;
        for i in 0..n1 {
            let y = 1.0 - (2 * i + 1) as f64 / n1 as f64;
            // integer tenths keep the image exactly piecewise constant
            let tenths: i32 = SHEPP_LOGAN
                .iter()
                .filter(|&&(_, a, b, x0, y0, deg)| {
                    let (s, c) = deg.to_radians().sin_cos();
                    let (dx, dy) = (x - x0, y - y0);
                    let u = dx * c + dy * s;
                    let v = -dx * s + dy * c;
                    (u / a).powi(2) + (v / b).powi(2) <= 1.0
                })
                .map(|e| e.0)
                .sum();
            out[i + n1 * j] = tenths as f64 / 10.0;
        }
    }
    Ok(out)
}

/// Deterministic stand-in for one line of an MR brain image: piecewise
/// smooth magnitude with slowly varying phase.
pub fn mri_line_surrogate(n: usize) -> Vec<C64> {
    // (start, end, level) as fractions of the line
    const SEGMENTS: [(f64, f64, f64); 9] = [
        (0.08, 0.92, 0.15),
        (0.10, 0.90, 0.55),
        (0.16, 0.30, 0.25),
        (0.34, 0.41, 0.35),
        (0.45, 0.55, -0.20),
        (0.58, 0.66, 0.30),
        (0.70, 0.84, 0.20),
        (0.48, 0.51, 0.45),
        (0.86, 0.88, 0.40),
    ];
    (0..n)
        .map(|k| {
            let t = (k as f64 + 0.5) / n as f64;
            let mut mag: f64 = SEGMENTS
                .iter()
                .filter(|(a, b, _)| t >= *a && t < *b)
                .map(|s| s.2)
                .sum();
            if (0.10..0.90).contains(&t) {
                mag += 0.05 * (std::f64::consts::TAU * 3.0 * t).sin();
            }
            let phase = 0.4 * (std::f64::consts::TAU * t).sin() + 0.2 * t;
            C64::from_polar(mag, phase)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// raw signal files

const RAW_MAGIC: &[u8; 4] = b"TSPR";

#[derive(Clone, Debug, PartialEq)]
pub struct RawSignal {
    pub n1: usize,
    pub n2: usize,
    pub data: Vec<C64>,
}

/// Header `"TSPR"`, `u32` n1, n2, channels (1 real, 2 complex), then `f64`
/// values little-endian (complex interleaved).
pub fn write_raw(path: &Path, signal: &RawSignal) -> Result<()> {
    if signal.data.len() != signal.n1 * signal.n2 {
        return Err(Error::DimensionMismatch { expected: signal.n1 * signal.n2, got: signal.data.len() });
    }
    let complex = signal.data.iter().any(|z| z.im != 0.0);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(RAW_MAGIC)?;
    for v in [signal.n1, signal.n2, if complex { 2 } else { 1 }] {
        let v = u32::try_from(v).map_err(|_| Error::InvalidArgument("dimension exceeds u32".into()))?;
        f.write_all(&v.to_le_bytes())?;
    }
    for z in &signal.data {
        f.write_all(&z.re.to_le_bytes())?;
        if complex {
            f.write_all(&z.im.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<RawSignal> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |why: &str| Error::InvalidArgument(format!("{}: {why}", path.display()));
    if bytes.len() < 16 || &bytes[..4] != RAW_MAGIC {
        return Err(bad("missing TSPR header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
    let (n1, n2, ch) = (word(1), word(2), word(3));
    if !(ch == 1 || ch == 2) {
        return Err(bad("channels must be 1 or 2"));
    }
    let body = &bytes[16..];
    if body.len() != n1 * n2 * ch * 8 {
        return Err(bad("payload size does not match header"));
    }
    let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let data = if ch == 2 {
        vals.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
    } else {
        vals.iter().map(|&v| C64::new(v, 0.0)).collect()
    };
    Ok(RawSignal { n1, n2, data })
}

// ---------------------------------------------------------------------------
// experiment configuration

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    /// 1D: `level` (default full depth); 2D: full-depth separable.
    Haar,
    Tv1d,
    Tv2dAniso,
    Tv2dIso,
}

/// Sparsifying transform `Φ` on an `n1 × n2` grid (`n2 = 1` for 1D).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub n1: usize,
    #[serde(default = "one")]
    pub n2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
}

fn one() -> usize {
    1
}

impl TransformSpec {
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phi(&self) -> Result<TransformOperator> {
        let (n1, n2) = (self.n1, self.n2);
        match self.kind {
            TransformKind::Identity => make_identity(n1 * n2),
            TransformKind::Haar if n2 == 1 => {
                let level = self.level.unwrap_or(n1.trailing_zeros() as usize);
                make_haar(n1, level)
            }
            TransformKind::Haar => make_haar2(n1, n2),
            TransformKind::Tv1d if n2 == 1 => make_finite_difference_1d(n1),
            TransformKind::Tv1d => Err(Error::Config("tv1d needs n2 = 1".into())),
            TransformKind::Tv2dAniso | TransformKind::Tv2dIso => make_finite_difference_2d(n1, n2),
        }
    }

    /// The DFT on the same grid.
    pub fn psi(&self) -> Result<TransformOperator> {
        if self.n2 == 1 {
            make_dft(self.n1)
        } else {
            make_dft2(self.n1, self.n2)
        }
    }

    pub fn t(&self) -> Result<TransformOperator> {
        compose_t(&self.phi()?, &self.psi()?)
    }

    /// Pairs vertical and horizontal differences of each pixel.
    pub fn partition(&self) -> Option<GroupPartition> {
        (self.kind == TransformKind::Tv2dIso).then(|| GroupPartition::stacked(self.len(), 2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SignalSource {
    Phantom,
    MriLine,
    File { path: PathBuf },
    /// Fresh random `s`-sparse coefficients per trial.
    RandomSparse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DensityMode {
    Uniform,
    Variable,
    TwoStepUniform,
    TwoStepVariable,
    /// Density of another transform, with this transform's null indices forced.
    Cross { transform: TransformSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub transform: TransformSpec,
    /// Transform used to sparsify the base signal; defaults to `transform`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<TransformSpec>,
    pub signal: SignalSource,
    /// Sparsity levels; absent means the signal is used as given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<Vec<usize>>,
    /// Alternative to `measurements`: `m = round(ratio · n)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    pub trials: usize,
    pub density: DensityMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold_db: f64,
    #[serde(default)]
    pub admm: SolveOptions,
}

fn default_threshold() -> f64 {
    SUCCESS_DB
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn n(&self) -> usize {
        self.transform.len()
    }

    pub fn m_values(&self) -> Result<Vec<usize>> {
        let n = self.n();
        match (&self.measurements, &self.ratios) {
            (Some(m), None) => Ok(m.clone()),
            (None, Some(r)) => Ok(r.iter().map(|x| (x * n as f64).round() as usize).collect()),
            _ => Err(Error::Config("give exactly one of `measurements` and `ratios`".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Config("empty transform grid".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let ms = self.m_values()?;
        if ms.is_empty() || ms.iter().any(|&m| m == 0 || m > n) {
            return Err(Error::Config(format!("measurement counts must lie in [1, {n}]")));
        }
        if let Some(ss) = &self.sparsity {
            if ss.iter().any(|&s| s >= n) {
                return Err(Error::Config(format!("sparsity levels must be below n = {n}")));
            }
        } else if self.signal == SignalSource::RandomSparse {
            return Err(Error::Config("random_sparse signals need `sparsity`".into()));
        }
        if let Some(sy) = &self.synthesis {
            if sy.len() != n {
                return Err(Error::Config("synthesis transform has a different size".into()));
            }
        }
        if let DensityMode::Cross { transform } = &self.density {
            if transform.len() != n {
                return Err(Error::Config("cross-density transform has a different size".into()));
            }
        }
        Ok(())
    }

    /// Sampling density over the DFT grid.
    pub fn sampling_density(&self, t: &TransformOperator) -> Result<SamplingDensity> {
        let n = self.n();
        let partition = self.transform.partition();
        match &self.density {
            DensityMode::Uniform => SamplingDensity::uniform(n),
            DensityMode::Variable => density(&incoherence(t)?),
            DensityMode::TwoStepUniform => SamplingDensity::two_step_uniform(n, &t.null_columns()?),
            DensityMode::TwoStepVariable => two_step_density(t, partition.as_ref()),
            DensityMode::Cross { transform } => {
                let other = transform.t()?;
                two_step_density(&other, transform.partition().as_ref())?.restrict(&t.null_columns()?)
            }
        }
    }
}

/// `base ⊕ FNV-1a(s, m, trial)`, each as `u64` little-endian.
pub fn trial_seed(base: u64, s: usize, m: usize, trial: usize) -> u64 {
    let mut h = FnvHasher::default();
    for v in [s as u64, m as u64, trial as u64] {
        h.write(&v.to_le_bytes());
    }
    base ^ h.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub s: usize,
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub mean_rsnr_db: f64,
    /// Per-trial RSNR; `NaN` marks a trial that errored.
    pub rsnr_db: Vec<f64>,
    pub failures: Vec<String>,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub s: usize,
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub mean_rsnr_db: f64,
}

impl GridResult {
    pub fn rows(&self) -> Vec<CsvRow> {
        self.cells
            .iter()
            .map(|c| CsvRow {
                s: c.s,
                m: c.m,
                trials: c.trials,
                successes: c.successes,
                rate: c.rate,
                mean_rsnr_db: c.mean_rsnr_db,
            })
            .collect()
    }

    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| !c.failures.is_empty())
    }

    pub fn cell(&self, s: usize, m: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.s == s && c.m == m)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in self.rows() {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

pub fn parse_csv(s: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(s.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?)
}

/// Everything a grid needs besides the per-trial draws.
struct Prepared {
    t: TransformOperator,
    psi: TransformOperator,
    partition: Option<GroupPartition>,
    density: SamplingDensity,
    synthesis_phi: TransformOperator,
    synthesis_partition: Option<GroupPartition>,
    base: Option<Vec<C64>>,
}

impl Prepared {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let t = cfg.transform.t()?;
        let psi = cfg.transform.psi()?;
        let density = cfg.sampling_density(&t)?;
        let syn = cfg.synthesis.as_ref().unwrap_or(&cfg.transform);
        let (n1, n2) = (cfg.transform.n1, cfg.transform.n2);
        let base = match &cfg.signal {
            SignalSource::Phantom => Some(phantom(n1, n2)?.into_iter().map(|v| C64::new(v, 0.0)).collect()),
            SignalSource::MriLine => Some(mri_line_surrogate(n1 * n2)),
            SignalSource::File { path } => {
                let raw = read_raw(path)?;
                if (raw.n1, raw.n2) != (n1, n2) && raw.n1 * raw.n2 != n1 * n2 {
                    return Err(Error::Config(format!(
                        "{} holds {}×{}, expected {n1}×{n2}",
                        path.display(),
                        raw.n1,
                        raw.n2
                    )));
                }
                Some(raw.data)
            }
            SignalSource::RandomSparse => None,
        };
        Ok(Self {
            t,
            psi,
            partition: cfg.transform.partition(),
            density,
            synthesis_phi: syn.phi()?,
            synthesis_partition: syn.partition(),
            base,
        })
    }

    fn draw(&self, s: Option<usize>, m: usize, seed: u64) -> Result<(Vec<C64>, SamplingPattern)> {
        let x = self.psi.forward(&self.signal(s, seed)?)?;
        Ok((x, draw(&self.density, m, seed)?))
    }

    /// Signal-domain image for sparsity `s` (`None`: as given).
    fn signal(&self, s: Option<usize>, seed: u64) -> Result<Vec<C64>> {
        match (&self.base, s) {
            (Some(b), None) => Ok(b.clone()),
            (Some(b), Some(s)) => synthesize_sparse(b, &self.synthesis_phi, s, self.synthesis_partition.as_ref()),
            (None, Some(s)) => random_sparse_signal(&self.synthesis_phi, s, self.synthesis_partition.as_ref(), seed),
            (None, None) => Err(Error::Config("random_sparse signals need `sparsity`".into())),
        }
    }
}

/// `Φ†c` for random complex `c` supported on `s` random coefficients (or
/// groups).
pub fn random_sparse_signal(
    phi: &TransformOperator,
    s: usize,
    partition: Option<&GroupPartition>,
    seed: u64,
) -> Result<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let big_n = phi.out_dim();
    let groups: Vec<Vec<usize>> = match partition {
        Some(p) => p.groups().to_vec(),
        None => (0..big_n).map(|i| vec![i]).collect(),
    };
    if s > groups.len() {
        return Err(Error::InvalidArgument(format!("s = {s} exceeds {} coefficients", groups.len())));
    }
    let chosen = rand::seq::index::sample(&mut rng, groups.len(), s);
    let mut c = vec![czero(); big_n];
    for g in chosen.iter() {
        for &i in &groups[g] {
            c[i] = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
    }
    phi.pinv(&c)
}

struct TrialOutcome {
    rsnr: f64,
    error: Option<String>,
}

/// One `(signal, pattern)` draw of an experiment.
pub struct Instance {
    pub t: TransformOperator,
    pub partition: Option<GroupPartition>,
    pub density: SamplingDensity,
    /// Measurement-domain signal `x = Ψf`.
    pub x: Vec<C64>,
    pub pattern: SamplingPattern,
}

impl Instance {
    /// Equality-constrained problem, group form when the transform is grouped.
    pub fn problem(&self) -> Result<RecoveryProblem<'_>> {
        let obs = self.pattern.subsample(&self.x, false)?;
        match &self.partition {
            Some(p) => RecoveryProblem::group_eq(&self.t, &self.pattern, obs, p),
            None => RecoveryProblem::l1_eq(&self.t, &self.pattern, obs),
        }
    }
}

impl ExperimentConfig {
    /// The draw a grid uses for cell `(s, m)` and trial `trial`; `s = None`
    /// uses the signal as given.
    pub fn instance(&self, s: Option<usize>, m: usize, trial: usize) -> Result<Instance> {
        self.validate()?;
        let prep = Prepared::new(self)?;
        let seed = trial_seed(self.seed, s.unwrap_or(0), m, trial);
        let (x, pattern) = prep.draw(s, m, seed)?;
        Ok(Instance { t: prep.t, partition: prep.partition, density: prep.density, x, pattern })
    }
}

fn run_trial(cfg: &ExperimentConfig, prep: &Prepared, s: Option<usize>, m: usize, trial: usize) -> TrialOutcome {
    let seed = trial_seed(cfg.seed, s.unwrap_or(0), m, trial);
    let attempt = || -> Result<f64> {
        let (x, pattern) = prep.draw(s, m, seed)?;
        let obs = pattern.subsample(&x, false)?;
        let problem = match &prep.partition {
            Some(p) => RecoveryProblem::group_eq(&prep.t, &pattern, obs, p)?,
            None => RecoveryProblem::l1_eq(&prep.t, &pattern, obs)?,
        };
        let report = solve(&problem, &cfg.admm)?;
        rsnr(&report.x_hat, &x)
    };
    match attempt() {
        Ok(r) => TrialOutcome { rsnr: r, error: None },
        Err(e) => TrialOutcome { rsnr: f64::NAN, error: Some(format!("trial {trial}: {e}")) },
    }
}

/// Runs every `(s, m, trial)` job on a pool of `threads` workers (`None`:
/// rayon's default) and merges results in grid order.
pub fn run_grid(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<GridResult> {
    cfg.validate()?;
    let prep = Prepared::new(cfg)?;
    let ms = cfg.m_values()?;
    let s_levels: Vec<Option<usize>> = match &cfg.sparsity {
        Some(ss) => ss.iter().map(|&s| Some(s)).collect(),
        None => vec![None],
    };
    let given_s = if cfg.sparsity.is_none() {
        let f = prep.signal(None, 0)?;
        sparsity(&cfg.transform.phi()?.forward(&f)?, prep.partition.as_ref())
    } else {
        0
    };
    let jobs: Vec<(Option<usize>, usize, usize)> = s_levels
        .iter()
        .flat_map(|&s| ms.iter().flat_map(move |&m| (0..cfg.trials).map(move |t| (s, m, t))))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<(TrialOutcome, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, m, t)| {
                let start = Instant::now();
                let o = run_trial(cfg, &prep, s, m, t);
                (o, start.elapsed().as_secs_f64())
            })
            .collect()
    });
    let cells = outcomes
        .chunks(cfg.trials)
        .zip(jobs.chunks(cfg.trials))
        .map(|(outs, js)| {
            let (s, m, _) = js[0];
            let rsnr_db: Vec<f64> = outs.iter().map(|(o, _)| o.rsnr).collect();
            let successes = rsnr_db.iter().filter(|&&r| r >= cfg.threshold_db).count();
            let finite: Vec<f64> = rsnr_db.iter().copied().filter(|r| r.is_finite()).collect();
            let mean = if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 };
            CellResult {
                s: s.unwrap_or(given_s),
                m,
                trials: cfg.trials,
                successes,
                rate: successes as f64 / cfg.trials as f64,
                mean_rsnr_db: mean,
                rsnr_db,
                failures: outs.iter().filter_map(|(o, _)| o.error.clone()).collect(),
                wall_clock_s: outs.iter().map(|(_, w)| w).sum(),
            }
        })
        .collect();
    Ok(GridResult { cells })
}

// ---------------------------------------------------------------------------
// SVG output

/// 1D: polyline of the density. 2D: log-scale grayscale image with the zero
/// frequency centred.
pub fn emit_density_plot(density: &SamplingDensity, shape: Option<(usize, usize)>, path: &Path) -> Result<()> {
    std::fs::write(path, density_svg(density, shape)?)?;
    Ok(())
}

pub fn density_svg(density: &SamplingDensity, shape: Option<(usize, usize)>) -> Result<String> {
    let p = &density.p;
    match shape {
        Some((n1, n2)) if n2 > 1 => {
            crate::error::check_len(p.len(), n1 * n2)?;
            let positive: Vec<f64> = p.iter().copied().filter(|&v| v > 0.0).collect();
            let hi = positive.iter().copied().fold(f64::MIN_POSITIVE, f64::max).ln();
            let lo = positive.iter().copied().fold(f64::INFINITY, f64::min).ln();
            let span = (hi - lo).max(f64::MIN_POSITIVE);
            let mut svg = format!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{n2}\" height=\"{n1}\" shape-rendering=\"crispEdges\">\n"
            );
            for j in 0..n2 {
                for i in 0..n1 {
                    let v = p[i + n1 * j];
                    let level = if v > 0.0 { (((v.ln() - lo) / span) * 255.0).round() as u8 } else { 0 };
                    let (r, c) = ((i + n1 / 2) % n1, (j + n2 / 2) % n2);
                    svg += &format!(
                        "<rect x=\"{c}\" y=\"{r}\" width=\"1\" height=\"1\" fill=\"rgb({level},{level},{level})\"/>\n"
                    );
                }
            }
            svg += "</svg>\n";
            Ok(svg)
        }
        _ => {
            let (w, h) = (600.0, 300.0);
            let max = p.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let step = if p.len() > 1 { w / (p.len() - 1) as f64 } else { 0.0 };
            let points: Vec<String> = p
                .iter()
                .enumerate()
                .map(|(k, &v)| format!("{:.3},{:.3}", k as f64 * step, h - 0.9 * h * v / max))
                .collect();
            Ok(format!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
                 <polyline fill=\"none\" stroke=\"black\" points=\"{}\"/>\n</svg>\n",
                points.join(" ")
            ))
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.svg` (white = rate 1, black = rate 0).
pub fn emit_success_grid(result: &GridResult, path: &Path) -> Result<()> {
    std::fs::write(path.with_extension("csv"), result.to_csv()?)?;
    std::fs::write(path.with_extension("svg"), success_svg(result))?;
    Ok(())
}

pub fn success_svg(result: &GridResult) -> String {
    let mut ss: Vec<usize> = result.cells.iter().map(|c| c.s).collect();
    let mut ms: Vec<usize> = result.cells.iter().map(|c| c.m).collect();
    ss.sort_unstable();
    ss.dedup();
    ms.sort_unstable();
    ms.dedup();
    let cell = 20;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" shape-rendering=\"crispEdges\">\n",
        ss.len() * cell,
        ms.len() * cell
    );
    for c in &result.cells {
        let x = ss.binary_search(&c.s).expect("listed") * cell;
        // larger m at the top
        let y = (ms.len() - 1 - ms.binary_search(&c.m).expect("listed")) * cell;
        let level = (c.rate.clamp(0.0, 1.0) * 255.0).round() as u8;
        svg += &format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({level},{level},{level})\"/>\n"
        );
    }
    svg += "</svg>\n";
    svg
}
