//! Random sampling patterns `Ω` and the sampling operators `S_Ω`, `S_Ω′`.
//!
//! Indices are 0-based. `Ω` keeps the draw order because the golfing
//! construction partitions it into consecutive blocks.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::spectra::SamplingDensity;
use crate::C64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "PatternDocument", try_from = "PatternDocument")]
pub struct SamplingPattern {
    n: usize,
    seed: u64,
    omega: Vec<usize>,
    omega_prime: Vec<usize>,
    /// Multiplicity of each entry of `omega_prime`.
    counts: Vec<usize>,
}

/// On-disk form `{n, seed, omega}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatternDocument {
    pub n: usize,
    pub seed: u64,
    pub omega: Vec<usize>,
}

impl From<SamplingPattern> for PatternDocument {
    fn from(p: SamplingPattern) -> Self {
        Self { n: p.n, seed: p.seed, omega: p.omega }
    }
}

impl TryFrom<PatternDocument> for SamplingPattern {
    type Error = Error;
    fn try_from(d: PatternDocument) -> Result<Self> {
        SamplingPattern::from_indices(d.n, d.omega, d.seed)
    }
}

impl SamplingPattern {
    pub fn from_indices(n: usize, omega: Vec<usize>, seed: u64) -> Result<Self> {
        if let Some(&k) = omega.iter().find(|&&k| k >= n) {
            return Err(Error::InvalidArgument(format!("sample index {k} outside [0, {n})")));
        }
        let mut mult = vec![0usize; n];
        omega.iter().for_each(|&k| mult[k] += 1);
        let (omega_prime, counts) = mult
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k, c))
            .unzip();
        Ok(Self { n, seed, omega, omega_prime, counts })
    }

    /// Every index once, in order.
    pub fn full(n: usize) -> Self {
        Self::from_indices(n, (0..n).collect(), 0).expect("indices in range")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `m = |Ω|`.
    pub fn m(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn omega_prime(&self) -> &[usize] {
        &self.omega_prime
    }

    /// Multiplicities aligned with [`SamplingPattern::omega_prime`].
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `R`, the largest multiplicity.
    pub fn max_repetition(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// `|Ω| − |Ω′|`.
    pub fn repeats(&self) -> usize {
        self.omega.len() - self.omega_prime.len()
    }

    /// Diagonal of `S_Ω* S_Ω` over the whole domain.
    pub fn multiplicity(&self) -> Vec<usize> {
        let mut mult = vec![0usize; self.n];
        for (&k, &c) in self.omega_prime.iter().zip(&self.counts) {
            mult[k] = c;
        }
        mult
    }

    /// Consecutive block `omega[start..start+len]` as its own pattern.
    pub fn block(&self, start: usize, len: usize) -> Result<Self> {
        let end = start
            .checked_add(len)
            .filter(|&e| e <= self.omega.len())
            .ok_or_else(|| Error::InvalidArgument(format!("block {start}+{len} exceeds |Ω| = {}", self.m())))?;
        Self::from_indices(self.n, self.omega[start..end].to_vec(), self.seed)
    }

    /// `S_Ω x` (`dedup = false`) or `S_Ω′ x`.
    pub fn subsample(&self, x: &[C64], dedup: bool) -> Result<Vec<C64>> {
        check_len(self.n, x.len())?;
        let idx = if dedup { &self.omega_prime } else { &self.omega };
        Ok(idx.iter().map(|&k| x[k]).collect())
    }

    /// `S_Ω* y` (scatter-add over repeats) or `S_Ω′* y`.
    pub fn embed(&self, y: &[C64], dedup: bool) -> Result<Vec<C64>> {
        let idx = if dedup { &self.omega_prime } else { &self.omega };
        check_len(idx.len(), y.len())?;
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        for (&k, &v) in idx.iter().zip(y) {
            out[k] += v;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Binary PGM (P5) of the sampled set on a column-major `n1 × n2`
    /// frequency grid, zero frequency moved to the centre; 255 = sampled.
    pub fn write_mask_pgm(&self, n1: usize, n2: usize, path: &Path) -> Result<()> {
        check_len(self.n, n1 * n2)?;
        let mult = self.multiplicity();
        let mut pixels = vec![0u8; n1 * n2];
        for j in 0..n2 {
            for i in 0..n1 {
                if mult[i + n1 * j] > 0 {
                    let (r, c) = ((i + n1 / 2) % n1, (j + n2 / 2) % n2);
                    pixels[r * n2 + c] = 255;
                }
            }
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "P5\n{n2} {n1}\n255\n")?;
        f.write_all(&pixels)?;
        f.flush()?;
        Ok(())
    }
}

/// Draws `m` indices: the density's forced indices first, then `m − n0`
/// i.i.d. draws from its random part by inverse CDF.
pub fn draw(density: &SamplingDensity, m: usize, seed: u64) -> Result<SamplingPattern> {
    density.validate()?;
    let n0 = density.forced.len();
    if m <= n0 {
        return Err(Error::InvalidArgument(format!(
            "m = {m} must exceed the {n0} forced samples"
        )));
    }
    let cdf: Vec<f64> = density
        .p
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let total = *cdf.last().expect("non-empty density");
    let last_positive = density.p.iter().rposition(|&p| p > 0.0).expect("positive mass");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = density.forced.clone();
    omega.reserve(m - n0);
    for _ in n0..m {
        let u = rng.random::<f64>() * total;
        let k = cdf.partition_point(|&c| c <= u).min(last_positive);
        omega.push(k);
    }
    SamplingPattern::from_indices(density.n, omega, seed)
}
