//! Incoherence parameters of a transform, the sampling densities derived
//! from them, and closed-form sample-complexity / noise-amplification
//! expressions.
//!
//! For an injective `T: C^n → C^N` with `T̃ = (T†)*`:
//!
//! * `γ = argmin_{γ>0} ‖γ T*T − I‖ = 2 / (e_max + e_min)` over the
//!   eigenvalues of `T*T`;
//! * `μ_k = n γ ‖T e_k‖²_∞`, `μ̃_k = (n/γ) ‖T̃ e_k‖²_∞`, `μ = max_k max(μ_k, μ̃_k)`;
//! * `μ̄ = (1/n) Σ_k √(μ_k μ̃_k)`;
//! * the variable density is `p_k ∝ √(μ_k μ̃_k)`.
//!
//! Group variants replace `‖·‖_∞` by the largest per-group ℓ2 norm.
//! Non-injective transforms (circular finite differences) are handled by
//! restricting `T` to its non-null columns and always sampling the null
//! indices ("two-step" sampling).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupPartition;
use crate::linop::{make_dense, Mode, TransformOperator};
use crate::C64;

/// Relative size below which the smallest eigenvalue of `T*T` is zero.
pub const INJECTIVITY_TOL: f64 = 1e-12;

/// Optimal scaling `γ` and the contraction it achieves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaInfo {
    pub gamma: f64,
    /// `‖γ T*T − I‖ = (e_max − e_min) / (e_max + e_min)`.
    pub deviation: f64,
    pub e_min: f64,
    pub e_max: f64,
}

impl GammaInfo {
    fn from_extremes(e_min: f64, e_max: f64) -> Result<Self> {
        if !(e_max > 0.0) || e_min <= INJECTIVITY_TOL * e_max {
            return Err(Error::NonInjective);
        }
        Ok(Self {
            gamma: 2.0 / (e_max + e_min),
            deviation: (e_max - e_min) / (e_max + e_min),
            e_min,
            e_max,
        })
    }
}

pub fn gamma_opt(t: &TransformOperator) -> Result<GammaInfo> {
    if let Some(d) = t.gram_diagonal() {
        let (lo, hi) = extremes(d.iter().copied());
        return GammaInfo::from_extremes(lo, hi);
    }
    let m = t.to_dense(Mode::Forward)?;
    gamma_of_matrix(&m)
}

fn gamma_of_matrix(m: &DMatrix<C64>) -> Result<GammaInfo> {
    let gram = m.ad_mul(m);
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = extremes(eig.iter().copied());
    GammaInfo::from_extremes(lo.max(0.0), hi)
}

fn extremes(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncoherenceProfile {
    /// Number of columns the parameters are computed over (`n`, or `n − n0`
    /// after removing null columns).
    pub n: usize,
    /// Dimension of the full sampling domain.
    pub ambient_dim: usize,
    /// Sampling indices (into the ambient domain) the entries refer to.
    pub columns: Vec<usize>,
    pub gamma: f64,
    pub gamma_deviation: f64,
    pub mu: f64,
    pub mu_k: Vec<f64>,
    pub mu_tilde_k: Vec<f64>,
    pub mu_bar: f64,
    pub group: bool,
    /// `N`: number of coefficients (or of groups in the group model).
    pub num_coefficients: usize,
}

impl IncoherenceProfile {
    fn assemble(
        gamma: GammaInfo,
        columns: Vec<usize>,
        ambient_dim: usize,
        sup_sqr: &[f64],
        tilde_sup_sqr: &[f64],
        group: bool,
        num_coefficients: usize,
    ) -> Self {
        let n = columns.len();
        let nf = n as f64;
        let mu_k: Vec<f64> = sup_sqr.iter().map(|a| nf * gamma.gamma * a).collect();
        let mu_tilde_k: Vec<f64> = tilde_sup_sqr.iter().map(|a| nf / gamma.gamma * a).collect();
        let mu = mu_k
            .iter()
            .zip(&mu_tilde_k)
            .fold(0.0f64, |acc, (a, b)| acc.max(*a).max(*b));
        let mu_bar = mu_k.iter().zip(&mu_tilde_k).map(|(a, b)| (a * b).sqrt()).sum::<f64>() / nf;
        Self {
            n,
            ambient_dim,
            columns,
            gamma: gamma.gamma,
            gamma_deviation: gamma.deviation,
            mu,
            mu_k,
            mu_tilde_k,
            mu_bar,
            group,
            num_coefficients,
        }
    }

    /// `√(μ_k μ̃_k)` per column.
    pub fn local_weights(&self) -> Vec<f64> {
        self.mu_k.iter().zip(&self.mu_tilde_k).map(|(a, b)| (a * b).sqrt()).collect()
    }

    /// `ρ = μ̄^{-1/2} [√μ_1, …, √μ_n]`, expanded to the ambient domain with
    /// zeros at indices outside [`IncoherenceProfile::columns`].
    pub fn rho_weights(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.ambient_dim];
        let s = self.mu_bar.sqrt();
        for (&k, &m) in self.columns.iter().zip(&self.mu_k) {
            rho[k] = m.sqrt() / s;
        }
        rho
    }
}

pub fn incoherence(t: &TransformOperator) -> Result<IncoherenceProfile> {
    let all: Vec<usize> = (0..t.in_dim()).collect();
    incoherence_on_columns(t, &all, None)
}

pub fn group_incoherence(t: &TransformOperator, partition: &GroupPartition) -> Result<IncoherenceProfile> {
    let all: Vec<usize> = (0..t.in_dim()).collect();
    incoherence_on_columns(t, &all, Some(partition))
}

/// Parameters of `T` restricted to the columns `keep` (`T[e_k]_{k∈keep}`),
/// optionally for the group model.
pub fn incoherence_on_columns(
    t: &TransformOperator,
    keep: &[usize],
    partition: Option<&GroupPartition>,
) -> Result<IncoherenceProfile> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("no columns to profile".into()));
    }
    if let Some(&k) = keep.iter().find(|&&k| k >= t.in_dim()) {
        return Err(Error::InvalidArgument(format!("column {k} out of range")));
    }
    if let Some(p) = partition {
        if p.len() != t.out_dim() {
            return Err(Error::Partition(format!(
                "partition covers {} coordinates, transform has {}",
                p.len(),
                t.out_dim()
            )));
        }
        if p.is_singletons() {
            let mut prof = incoherence_on_columns(t, keep, None)?;
            prof.group = true;
            return Ok(prof);
        }
    }
    let num_coefficients = partition.map_or(t.out_dim(), |p| p.num_groups());
    let group = partition.is_some();

    if let Some(diag) = t.gram_diagonal() {
        let gamma = GammaInfo::from_extremes(
            keep.iter().map(|&k| diag[k]).fold(f64::INFINITY, f64::min),
            keep.iter().map(|&k| diag[k]).fold(0.0, f64::max),
        )?;
        let sup = column_sup_sqr(t, keep, partition)?;
        // T̃ e_k = T e_k / d_k when T*T = diag(d)
        let tilde: Vec<f64> = keep.iter().zip(&sup).map(|(&k, a)| a / (diag[k] * diag[k])).collect();
        return Ok(IncoherenceProfile::assemble(
            gamma,
            keep.to_vec(),
            t.in_dim(),
            &sup,
            &tilde,
            group,
            num_coefficients,
        ));
    }

    // General transform: materialize the restricted matrix and use its SVD.
    let rows = t.out_dim();
    if rows * keep.len() > crate::linop::DENSE_LIMIT {
        return Err(Error::TooLarge { entries: rows * keep.len() });
    }
    let mut m = DMatrix::from_element(rows, keep.len(), C64::new(0.0, 0.0));
    for (c, &k) in keep.iter().enumerate() {
        m.column_mut(c).copy_from_slice(&t.column(k, Mode::Forward)?);
    }
    let gamma = gamma_of_matrix(&m)?;
    let sub = make_dense(m)?;
    let local: Vec<usize> = (0..keep.len()).collect();
    let sup = column_sup_sqr_generic(&sub, &local, partition, Mode::Forward)?;
    let tilde = column_sup_sqr_generic(&sub, &local, partition, Mode::Tilde)?;
    Ok(IncoherenceProfile::assemble(
        gamma,
        keep.to_vec(),
        t.in_dim(),
        &sup,
        &tilde,
        group,
        num_coefficients,
    ))
}

/// `‖T e_k‖²_∞`, or `max_j ‖Π_{G_j} T e_k‖²₂` in the group model.
fn column_sup_sqr(t: &TransformOperator, keep: &[usize], partition: Option<&GroupPartition>) -> Result<Vec<f64>> {
    if let Some(spectra) = t.spectra().filter(|_| t.is_fourier_spectral()) {
        let n = t.in_dim() as f64;
        match partition {
            None => {
                return Ok(keep
                    .iter()
                    .map(|&k| spectra.iter().map(|l| l[k].norm_sqr()).fold(0.0, f64::max) / n)
                    .collect())
            }
            Some(p) if p.is_stacked(t.in_dim()) => {
                // every group holds one entry of each filter's Fourier atom
                return Ok(keep
                    .iter()
                    .map(|&k| spectra.iter().map(|l| l[k].norm_sqr()).sum::<f64>() / n)
                    .collect());
            }
            Some(_) => {}
        }
    }
    column_sup_sqr_generic(t, keep, partition, Mode::Forward)
}

fn column_sup_sqr_generic(
    t: &TransformOperator,
    keep: &[usize],
    partition: Option<&GroupPartition>,
    mode: Mode,
) -> Result<Vec<f64>> {
    keep.par_iter()
        .map(|&k| {
            let c = t.column(k, mode)?;
            Ok(match partition {
                None => c.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max),
                Some(p) => p.group_norms_sqr(&c).into_iter().fold(0.0, f64::max),
            })
        })
        .collect()
}

/// Probability mass over the ambient sampling domain, plus the indices that
/// are always sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingDensity {
    pub n: usize,
    /// Mass of the random part; zero on `forced`.
    pub p: Vec<f64>,
    pub forced: Vec<usize>,
}

impl SamplingDensity {
    pub fn new(p: Vec<f64>, forced: Vec<usize>) -> Result<Self> {
        let d = Self { n: p.len(), p, forced };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::two_step_uniform(n, &[])
    }

    /// Always sample `forced`, uniform on the rest.
    pub fn two_step_uniform(n: usize, forced: &[usize]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDensity("empty domain".into()));
        }
        let mut p = vec![1.0; n];
        for &k in forced {
            if k >= n {
                return Err(Error::InvalidDensity(format!("forced index {k} ≥ {n}")));
            }
            p[k] = 0.0;
        }
        normalize(&mut p)?;
        Self::new(p, forced.to_vec())
    }

    /// Point mass on `k`.
    pub fn point_mass(n: usize, k: usize) -> Result<Self> {
        let mut p = vec![0.0; n];
        *p.get_mut(k).ok_or_else(|| Error::InvalidDensity(format!("index {k} ≥ {n}")))? = 1.0;
        Self::new(p, vec![])
    }

    /// `n0`, the number of always-sampled indices.
    pub fn support_offset(&self) -> usize {
        self.forced.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity("negative or non-finite mass".into()));
        }
        let total: f64 = self.p.iter().sum();
        if (total - 1.0).abs() > 1e-12 * (self.n as f64).max(1.0).sqrt().max(1.0) {
            return Err(Error::InvalidDensity(format!("mass sums to {total}")));
        }
        for &k in &self.forced {
            if k >= self.n || self.p[k] != 0.0 {
                return Err(Error::InvalidDensity(format!(
                    "forced index {k} overlaps the random support"
                )));
            }
        }
        let mut sorted = self.forced.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.forced.len() {
            return Err(Error::InvalidDensity("duplicate forced index".into()));
        }
        Ok(())
    }

    /// Force `forced` and renormalize the remaining mass (used to restrict a
    /// density computed for another transform to a two-step scheme).
    pub fn restrict(&self, forced: &[usize]) -> Result<Self> {
        let mut p = self.p.clone();
        let mut all_forced = self.forced.clone();
        for &k in forced {
            if k >= self.n {
                return Err(Error::InvalidDensity(format!("forced index {k} ≥ {}", self.n)));
            }
            p[k] = 0.0;
            if !all_forced.contains(&k) {
                all_forced.push(k);
            }
        }
        normalize(&mut p)?;
        Self::new(p, all_forced)
    }
}

fn normalize(p: &mut [f64]) -> Result<()> {
    let total: f64 = p.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidDensity("all weights are zero".into()));
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// `P(ω = k) = √(μ_k μ̃_k) / Σ_j √(μ_j μ̃_j)`; indices outside the profile's
/// columns become forced samples.
pub fn density(profile: &IncoherenceProfile) -> Result<SamplingDensity> {
    let w = profile.local_weights();
    let mut p = vec![0.0; profile.ambient_dim];
    for (&k, &v) in profile.columns.iter().zip(&w) {
        p[k] = v;
    }
    normalize(&mut p)?;
    let mut in_profile = vec![false; profile.ambient_dim];
    profile.columns.iter().for_each(|&k| in_profile[k] = true);
    let forced = (0..profile.ambient_dim).filter(|&k| !in_profile[k]).collect();
    SamplingDensity::new(p, forced)
}

/// Group density; identical formula applied to a group profile.
pub fn group_density(profile: &IncoherenceProfile) -> Result<SamplingDensity> {
    density(profile)
}

/// Two-step scheme: always sample the null columns of `T`, and draw the rest
/// from the density of `T` with those columns removed.
pub fn two_step_density(t: &TransformOperator, partition: Option<&GroupPartition>) -> Result<SamplingDensity> {
    let (_, d) = two_step_profile(t, partition)?;
    Ok(d)
}

pub fn two_step_profile(
    t: &TransformOperator,
    partition: Option<&GroupPartition>,
) -> Result<(IncoherenceProfile, SamplingDensity)> {
    let nulls = t.null_columns()?;
    let keep: Vec<usize> = (0..t.in_dim()).filter(|k| nulls.binary_search(k).is_err()).collect();
    let profile = incoherence_on_columns(t, &keep, partition)?;
    let d = density(&profile)?;
    Ok((profile, d))
}

/// On-disk form of a profile together with its density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityDocument {
    pub n: usize,
    pub gamma: f64,
    pub mu: f64,
    pub mu_k: Vec<f64>,
    pub mu_tilde_k: Vec<f64>,
    pub density: Vec<f64>,
    pub forced: Vec<usize>,
}

impl DensityDocument {
    pub fn new(profile: &IncoherenceProfile, density: &SamplingDensity) -> Self {
        let mut mu_k = vec![0.0; profile.ambient_dim];
        let mut mu_tilde_k = vec![0.0; profile.ambient_dim];
        for (i, &k) in profile.columns.iter().enumerate() {
            mu_k[k] = profile.mu_k[i];
            mu_tilde_k[k] = profile.mu_tilde_k[i];
        }
        Self {
            n: profile.ambient_dim,
            gamma: profile.gamma,
            mu: profile.mu,
            mu_k,
            mu_tilde_k,
            density: density.p.clone(),
            forced: density.forced.clone(),
        }
    }

    pub fn to_density(&self) -> Result<SamplingDensity> {
        SamplingDensity::new(self.density.clone(), self.forced.clone())
    }
}

// ---------------------------------------------------------------------------
// closed-form bounds; `c` is the unspecified numerical constant

/// Measurements sufficient for exact recovery:
/// `C(1+β) μ s / (1 − ‖γT*T − I‖) · [log N + log(‖T‖_{1→2}‖T†‖_{2→∞})]`.
///
/// Pass `μ̄` (variable density), `μ_G` (group) or `μ̄_G` as `mu` for the
/// corresponding variants.
pub fn uniqueness_measurements(
    mu: f64,
    s: usize,
    num_coefficients: usize,
    gamma_deviation: f64,
    norm_product: f64,
    beta: f64,
    c: f64,
) -> f64 {
    c * (1.0 + beta) * mu * s as f64 / (1.0 - gamma_deviation)
        * ((num_coefficients as f64).ln() + norm_product.ln())
}

/// Sample complexity of the refined noisy guarantee:
/// `C μ s log⁴ N / (1 − ‖γT*T − I‖)`.
pub fn noisy_measurements(mu: f64, s: usize, num_coefficients: usize, gamma_deviation: f64, c: f64) -> f64 {
    c * mu * s as f64 * (num_coefficients as f64).ln().powi(4) / (1.0 - gamma_deviation)
}

/// Noise amplification `σ_max/σ_min · {2 + 28√N(3n‖T‖_{1→2}‖T†‖_{2→∞} + 1)}`.
pub fn stability_amplification(sigma_ratio: f64, num_coefficients: usize, n: usize, norm_product: f64) -> f64 {
    sigma_ratio
        * (2.0 + 28.0 * (num_coefficients as f64).sqrt() * (3.0 * n as f64 * norm_product + 1.0))
}

/// Variable-density form of [`stability_amplification`]:
/// `σ_max/σ_min · μ̄/min μ̃ · [2 + 28√N(max μ / min μ̃ · 3n·np + 1)]`.
pub fn stability_amplification_vd(
    sigma_ratio: f64,
    num_coefficients: usize,
    n: usize,
    norm_product: f64,
    profile: &IncoherenceProfile,
) -> f64 {
    let (mu_max, mut_min) = local_extremes(profile);
    sigma_ratio * profile.mu_bar / mut_min
        * (2.0
            + 28.0
                * (num_coefficients as f64).sqrt()
                * (mu_max / mut_min * 3.0 * n as f64 * norm_product + 1.0))
}

/// `σ_max/σ_min · [14√N + (n/m){‖T‖_{1→2}‖T†‖_{2→∞}(|Ω| − |Ω′|) + 1}]`.
pub fn refined_amplification(
    sigma_ratio: f64,
    num_coefficients: usize,
    n: usize,
    m: usize,
    norm_product: f64,
    repeats: usize,
) -> f64 {
    sigma_ratio
        * (14.0 * (num_coefficients as f64).sqrt()
            + n as f64 / m as f64 * (norm_product * repeats as f64 + 1.0))
}

/// `σ_max/σ_min · (14√N + (n/m) R)` for `T*T = I`, `R` the largest multiplicity.
pub fn refined_amplification_isometric(
    sigma_ratio: f64,
    num_coefficients: usize,
    n: usize,
    m: usize,
    max_repetition: usize,
) -> f64 {
    sigma_ratio * (14.0 * (num_coefficients as f64).sqrt() + n as f64 / m as f64 * max_repetition as f64)
}

/// Variable-density form of [`refined_amplification`].
pub fn refined_amplification_vd(
    sigma_ratio: f64,
    num_coefficients: usize,
    n: usize,
    m: usize,
    norm_product: f64,
    repeats: usize,
    profile: &IncoherenceProfile,
) -> f64 {
    let (mu_max, mut_min) = local_extremes(profile);
    sigma_ratio * profile.mu_bar / mut_min
        * (14.0 * (num_coefficients as f64).sqrt()
            + n as f64 / m as f64 * (mu_max / mut_min * norm_product * repeats as f64 + 1.0))
}

fn local_extremes(profile: &IncoherenceProfile) -> (f64, f64) {
    let mu_max = profile.mu_k.iter().copied().fold(0.0, f64::max);
    let mut_min = profile.mu_tilde_k.iter().copied().fold(f64::INFINITY, f64::min);
    (mu_max, mut_min)
}
