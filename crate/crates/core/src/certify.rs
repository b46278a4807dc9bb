//! Inexact dual certificates by the golfing scheme, and the empirical
//! deviation quantities that control them.
//!
//! A certificate for `x` with `J = supp(Tx)` is a `v ∈ C^N` with
//!
//! * `(TT† − T S_Ω′* S_Ω′ T†)* v = 0`,
//! * `‖Π_J(v − sgn(Tx))‖₂ ≤ 1 / (7 n ‖T‖_{1→2} ‖T†‖_{2→∞})`,
//! * `‖(I − Π_J) v‖_∞ ≤ 1/2`,
//!
//! which, together with a local isometry deviation of at most 1/2, makes
//! `x` the unique minimizer of the equality-constrained ℓ1 program.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::groups::GroupPartition;
use crate::linop::{Mode, TransformOperator};
use crate::sampling::SamplingPattern;
use crate::{norm2, norm_inf, C64};

/// Upper bound on `|J|` for the dense local-isometry computation.
pub const MAX_DENSE_SUPPORT: usize = 2048;
/// Relative tolerance for the annihilation condition, which holds exactly
/// in exact arithmetic.
pub const VANISH_TOL: f64 = 1e-8;
/// Attempts per stage before the construction gives up.
pub const MAX_STAGE_ATTEMPTS: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
        }
    }
}

/// How stages draw their samples from `Ω`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockPolicy {
    /// Consecutive disjoint blocks in draw order; a failed stage is re-run
    /// on the next block.
    #[default]
    Disjoint,
    /// Every stage uses the first `m_i` samples of `Ω`. A failed stage ends
    /// the construction.
    Reuse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GolfingSchedule {
    pub ell: usize,
    /// Contraction targets `‖q_i‖ ≤ c_i ‖q_{i−1}‖`.
    pub c: Vec<f64>,
    /// Off-support targets `‖(I − Π_J)(stage_i)‖_∞ ≤ t_i ‖q_{i−1}‖`.
    pub t: Vec<f64>,
    pub m: Vec<usize>,
    pub beta: f64,
    #[serde(default)]
    pub log_base: LogBase,
    #[serde(default)]
    pub blocks: BlockPolicy,
}

impl GolfingSchedule {
    /// Block sizes sufficient for the stage targets to hold with high
    /// probability:
    ///
    /// ```text
    /// ℓ   = ⌈log₂ s / 2 + log₂ n + log₂(‖T‖_{1→2}‖T†‖_{2→∞})⌉ + 3
    /// c_i = 1/⌈2√(log N)⌉ (i ≤ 3),   1/2 otherwise
    /// t_i = 1/⌈4√s⌉ (i ≤ 3),        log N/⌈4√s⌉ otherwise
    /// m_i = ⌈10(1 + log 6 + β) μ s / c_i²⌉
    /// ```
    pub fn standard(
        s: usize,
        n: usize,
        num_coefficients: usize,
        beta: f64,
        mu: f64,
        norm_product: f64,
        log_base: LogBase,
    ) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidArgument("sparsity must be at least 1".into()));
        }
        let sf = s as f64;
        let ell_real = sf.log2() / 2.0 + (n as f64).log2() + norm_product.log2();
        // guard against ⌈k + ε⌉ = k + 1 from rounding in exact powers of two
        let ell = (ell_real - 1e-12).ceil().max(0.0) as usize + 3;
        let log_n = log_base.log(num_coefficients as f64);
        let c_head = 1.0 / (2.0 * log_n.sqrt()).ceil();
        let t_den = (4.0 * sf.sqrt()).ceil();
        let c: Vec<f64> = (1..=ell).map(|i| if i <= 3 { c_head } else { 0.5 }).collect();
        let t: Vec<f64> = (1..=ell).map(|i| if i <= 3 { 1.0 / t_den } else { log_n / t_den }).collect();
        let m = c
            .iter()
            .map(|ci| (10.0 * (1.0 + log_base.log(6.0) + beta) * mu * sf / (ci * ci)).ceil() as usize)
            .collect();
        Ok(Self { ell, c, t, m, beta, log_base, blocks: BlockPolicy::Disjoint })
    }

    /// `ell` stages on the first `m_block` samples each, with fixed targets.
    pub fn reuse(ell: usize, m_block: usize, c: f64, t: f64) -> Self {
        Self {
            ell,
            c: vec![c; ell],
            t: vec![t; ell],
            m: vec![m_block; ell],
            beta: 1.0,
            log_base: LogBase::Natural,
            blocks: BlockPolicy::Reuse,
        }
    }

    pub fn total(&self) -> usize {
        self.m.iter().sum()
    }

    /// Samples to draw so that every stage can be retried.
    pub fn draw_size(&self) -> usize {
        match self.blocks {
            BlockPolicy::Disjoint => MAX_STAGE_ATTEMPTS * self.total(),
            BlockPolicy::Reuse => self.m.iter().copied().max().unwrap_or(0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.c.len() != self.ell || self.t.len() != self.ell || self.m.len() != self.ell {
            return Err(Error::InvalidArgument("schedule sequences must have length ℓ".into()));
        }
        if self.m.contains(&0) {
            return Err(Error::InvalidArgument("empty golfing block".into()));
        }
        Ok(())
    }
}

/// Support `J` and the sign pattern `sgn(Tx)` (zero off `J`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignPattern {
    pub support: Vec<usize>,
    pub sign: Vec<C64>,
}

impl SignPattern {
    /// Support of `Tx`: entries above `rel_tol · ‖Tx‖_∞`.
    pub fn of_signal(t: &TransformOperator, x: &[C64], rel_tol: f64) -> Result<Self> {
        let tx = t.forward(x)?;
        let cut = rel_tol * norm_inf(&tx);
        let support: Vec<usize> = (0..tx.len()).filter(|&i| tx[i].norm() > cut).collect();
        let mut sign = vec![C64::new(0.0, 0.0); tx.len()];
        for &i in &support {
            sign[i] = tx[i] / tx[i].norm();
        }
        Ok(Self { support, sign })
    }

    pub fn new(support: Vec<usize>, sign: Vec<C64>) -> Result<Self> {
        let mut on = vec![false; sign.len()];
        for &j in &support {
            *on.get_mut(j).ok_or_else(|| Error::InvalidArgument(format!("support index {j} out of range")))? = true;
        }
        if sign.iter().zip(&on).any(|(z, &o)| !o && *z != C64::new(0.0, 0.0)) {
            return Err(Error::InvalidArgument("sign pattern is nonzero off the support".into()));
        }
        Ok(Self { support, sign })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: usize,
    pub attempt: usize,
    pub block_start: usize,
    pub block_len: usize,
    pub q_norm_before: f64,
    pub q_norm_after: f64,
    pub offsupport: f64,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateThresholds {
    pub vanish: f64,
    pub sign: f64,
    pub offsupport: f64,
    pub local_isometry: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub v: Vec<C64>,
    pub vanish_residual: f64,
    pub sign_deviation: f64,
    pub offsupport_max: f64,
    pub local_isometry_dev: f64,
    pub thresholds: CertificateThresholds,
    /// The construction ran all `ℓ` stages.
    pub completed: bool,
    pub passed: bool,
    pub stages: Vec<StageLog>,
    /// `q_ℓ` (or the last accepted `q_i`).
    pub residual_q: Vec<C64>,
}

/// `Σ_{k∈block} e_k (T*q)_k`, scaled by `n/|block|`.
fn sampled_adjoint(w: &[C64], block: &[usize], n: usize) -> Vec<C64> {
    let mut a = vec![C64::new(0.0, 0.0); w.len()];
    let scale = n as f64 / block.len() as f64;
    for &k in block {
        a[k] += w[k] * scale;
    }
    a
}

pub fn build_certificate(
    t: &TransformOperator,
    sign: &SignPattern,
    pattern: &SamplingPattern,
    schedule: &GolfingSchedule,
) -> Result<CertificateReport> {
    schedule.validate()?;
    check_len(t.out_dim(), sign.sign.len())?;
    check_len(t.in_dim(), pattern.n())?;
    if sign.support.is_empty() {
        return Err(Error::InvalidArgument("empty support".into()));
    }
    let n = t.in_dim();
    let big_n = t.out_dim();
    let mut on_j = vec![false; big_n];
    sign.support.iter().for_each(|&j| on_j[j] = true);
    let omega = pattern.omega();

    let mut q = sign.sign.clone();
    let mut v = vec![C64::new(0.0, 0.0); big_n];
    let mut stages = Vec::new();
    let mut cursor = 0usize;
    let mut completed = true;

    'stages: for i in 0..schedule.ell {
        let m_i = schedule.m[i];
        let q_norm = norm2(&q);
        let attempts = match schedule.blocks {
            BlockPolicy::Disjoint => MAX_STAGE_ATTEMPTS,
            BlockPolicy::Reuse => 1,
        };
        for attempt in 0..attempts {
            let start = match schedule.blocks {
                BlockPolicy::Disjoint => cursor,
                BlockPolicy::Reuse => 0,
            };
            if start + m_i > omega.len() {
                completed = false;
                break 'stages;
            }
            let block = &omega[start..start + m_i];
            if schedule.blocks == BlockPolicy::Disjoint {
                cursor += m_i;
            }
            let w = t.apply_unchecked(&q, Mode::Adjoint);
            let a = sampled_adjoint(&w, block, n);
            // T̃(w − a): restricted to J it is the next q
            let diff: Vec<C64> = w.iter().zip(&a).map(|(x, y)| x - y).collect();
            let td = t.apply_unchecked(&diff, Mode::Tilde);
            let mut q_next = vec![C64::new(0.0, 0.0); big_n];
            let mut off = 0.0f64;
            for k in 0..big_n {
                if on_j[k] {
                    q_next[k] = td[k];
                } else {
                    off = off.max(td[k].norm());
                }
            }
            let q_next_norm = norm2(&q_next);
            let accepted =
                q_next_norm <= schedule.c[i] * q_norm && off <= schedule.t[i] * q_norm;
            stages.push(StageLog {
                stage: i + 1,
                attempt: attempt + 1,
                block_start: start,
                block_len: m_i,
                q_norm_before: q_norm,
                q_norm_after: q_next_norm,
                offsupport: off,
                accepted,
            });
            if accepted {
                // stage contribution (T̃ a + q − T̃ w) = q − T̃(w − a)
                for k in 0..big_n {
                    v[k] += q[k] - td[k];
                }
                q = q_next;
                continue 'stages;
            }
        }
        completed = false;
        break;
    }

    let np = t.column_norms()?.norm_product();
    let vanish_residual = vanish_residual(t, pattern, &v);
    let mut sign_dev = 0.0;
    let mut off_max = 0.0f64;
    for k in 0..big_n {
        if on_j[k] {
            sign_dev += (v[k] - sign.sign[k]).norm_sqr();
        } else {
            off_max = off_max.max(v[k].norm());
        }
    }
    let sign_deviation = sign_dev.sqrt();
    let local_isometry_dev = local_isometry_deviation(t, pattern, &sign.support)?;
    let thresholds = CertificateThresholds {
        vanish: VANISH_TOL * norm2(&v).max(1.0),
        sign: 1.0 / (7.0 * n as f64 * np),
        offsupport: 0.5,
        local_isometry: 0.5,
    };
    let passed = completed
        && vanish_residual <= thresholds.vanish
        && sign_deviation <= thresholds.sign
        && off_max <= thresholds.offsupport
        && local_isometry_dev <= thresholds.local_isometry;
    Ok(CertificateReport {
        v,
        vanish_residual,
        sign_deviation,
        offsupport_max: off_max,
        local_isometry_dev,
        thresholds,
        completed,
        passed,
        stages,
        residual_q: q,
    })
}

/// `‖(TT† − T S_Ω′* S_Ω′ T†)* v‖₂ = ‖T̃ (I − S_Ω′* S_Ω′) T* v‖₂`.
pub fn vanish_residual(t: &TransformOperator, pattern: &SamplingPattern, v: &[C64]) -> f64 {
    let mut a = t.apply_unchecked(v, Mode::Adjoint);
    for &k in pattern.omega_prime() {
        a[k] = C64::new(0.0, 0.0);
    }
    norm2(&t.apply_unchecked(&a, Mode::Tilde))
}

/// `(n/m) T S_Ω* S_Ω u − T u` for `u ∈ C^n`.
fn sampled_deviation(t: &TransformOperator, pattern: &SamplingPattern, u: &[C64], mode_out: Mode) -> Vec<C64> {
    let n = pattern.n() as f64;
    let m = pattern.m() as f64;
    let mult = pattern.multiplicity();
    let su: Vec<C64> = u.iter().zip(&mult).map(|(z, &c)| z * (n / m * c as f64)).collect();
    let diff: Vec<C64> = su.iter().zip(u).map(|(a, b)| a - b).collect();
    t.apply_unchecked(&diff, mode_out)
}

/// Spectral norm of `(n/m) Π_J T S_Ω* S_Ω T† Π_J − Π_J T T† Π_J` as an
/// `|J| × |J|` matrix.
pub fn local_isometry_deviation(t: &TransformOperator, pattern: &SamplingPattern, support: &[usize]) -> Result<f64> {
    check_len(t.in_dim(), pattern.n())?;
    let s = support.len();
    if s > MAX_DENSE_SUPPORT {
        return Err(Error::TooLarge { entries: s * s });
    }
    if s == 0 {
        return Ok(0.0);
    }
    let mut mat = DMatrix::from_element(s, s, C64::new(0.0, 0.0));
    for (c, &j) in support.iter().enumerate() {
        let mut e = vec![C64::new(0.0, 0.0); t.out_dim()];
        *e.get_mut(j).ok_or_else(|| Error::InvalidArgument(format!("support index {j} out of range")))? =
            C64::new(1.0, 0.0);
        let u = t.apply_unchecked(&e, Mode::Pinv);
        let col = sampled_deviation(t, pattern, &u, Mode::Forward);
        for (r, &i) in support.iter().enumerate() {
            mat[(r, c)] = col[i];
        }
    }
    Ok(mat.singular_values().iter().copied().fold(0.0, f64::max))
}

fn restrict(q: &[C64], keep: &[bool], on: bool) -> Vec<C64> {
    q.iter()
        .zip(keep)
        .map(|(&z, &k)| if k == on { z } else { C64::new(0.0, 0.0) })
        .collect()
}

fn mask(len: usize, support: &[usize]) -> Result<Vec<bool>> {
    let mut on = vec![false; len];
    for &j in support {
        *on.get_mut(j).ok_or_else(|| Error::InvalidArgument(format!("support index {j} out of range")))? = true;
    }
    Ok(on)
}

/// `‖Π_J((n/m) T S_Ω* S_Ω T† − TT†) Π_J q‖₂`.
pub fn deviation_e2(t: &TransformOperator, pattern: &SamplingPattern, support: &[usize], q: &[C64]) -> Result<f64> {
    check_len(t.out_dim(), q.len())?;
    check_len(t.in_dim(), pattern.n())?;
    let on = mask(t.out_dim(), support)?;
    let u = t.apply_unchecked(&restrict(q, &on, true), Mode::Pinv);
    let out = sampled_deviation(t, pattern, &u, Mode::Forward);
    Ok(norm2(&restrict(&out, &on, true)))
}

/// `Π_{[N]∖J}((n/m) T̃ S_Ω* S_Ω T* − T̃T*) Π_J q`.
fn e3_vector(t: &TransformOperator, pattern: &SamplingPattern, on: &[bool], q: &[C64]) -> Vec<C64> {
    let u = t.apply_unchecked(&restrict(q, on, true), Mode::Adjoint);
    let out = sampled_deviation(t, pattern, &u, Mode::Tilde);
    restrict(&out, on, false)
}

/// `‖Π_{[N]∖J}((n/m) T̃ S_Ω* S_Ω T* − T̃T*) Π_J q‖_∞`.
pub fn deviation_e3(t: &TransformOperator, pattern: &SamplingPattern, support: &[usize], q: &[C64]) -> Result<f64> {
    check_len(t.out_dim(), q.len())?;
    check_len(t.in_dim(), pattern.n())?;
    let on = mask(t.out_dim(), support)?;
    Ok(norm_inf(&e3_vector(t, pattern, &on, q)))
}

/// Group form of [`deviation_e3`]: `support` lists groups, and the result
/// is the largest off-support group norm.
pub fn deviation_e3_group(
    t: &TransformOperator,
    pattern: &SamplingPattern,
    partition: &GroupPartition,
    support: &[usize],
    q: &[C64],
) -> Result<f64> {
    check_len(t.out_dim(), q.len())?;
    check_len(t.out_dim(), partition.len())?;
    check_len(t.in_dim(), pattern.n())?;
    let mut on = vec![false; t.out_dim()];
    for &g in support {
        let members = partition
            .groups()
            .get(g)
            .ok_or_else(|| Error::InvalidArgument(format!("group {g} out of range")))?;
        members.iter().for_each(|&i| on[i] = true);
    }
    Ok(partition.dual_norm(&e3_vector(t, pattern, &on, q)))
}

/// `P(local isometry deviation ≥ δ) ≤ 2s exp(−(m/(sμ))·(δ²/2)/(1/(1−d) + δ/3))`
/// with `d = ‖γT*T − I‖`.
pub fn e1_tail_bound(s: usize, m: usize, mu: f64, gamma_deviation: f64, delta: f64) -> f64 {
    let sf = s as f64;
    2.0 * sf
        * (-(m as f64 / (sf * mu)) * (delta * delta / 2.0) / (1.0 / (1.0 - gamma_deviation) + delta / 3.0)).exp()
}

/// `P(E2 ≥ t‖Π_J q‖) ≤ exp{−¼(t√(m(1−d)/(sμ)) − 1)²}`, valid for `t ≤ 1/2`.
pub fn e2_tail_bound(s: usize, m: usize, mu: f64, gamma_deviation: f64, t: f64) -> f64 {
    let r = t * (m as f64 * (1.0 - gamma_deviation) / (s as f64 * mu)).sqrt() - 1.0;
    (-0.25 * r * r).exp()
}

/// `P(E3 ≥ t‖Π_J q‖) ≤ 2N exp(−(m/(2μ))·t²/(1/(1−d) + √s t/3))`.
pub fn e3_tail_bound(s: usize, m: usize, mu: f64, gamma_deviation: f64, num_coefficients: usize, t: f64) -> f64 {
    2.0 * num_coefficients as f64
        * (-(m as f64 / (2.0 * mu)) * t * t / (1.0 / (1.0 - gamma_deviation) + (s as f64).sqrt() * t / 3.0)).exp()
}

/// Group form of [`e3_tail_bound`], with the extra factor `max_j |G_j|`.
pub fn e3_group_tail_bound(
    s: usize,
    m: usize,
    mu: f64,
    gamma_deviation: f64,
    num_groups: usize,
    max_group_size: usize,
    t: f64,
) -> f64 {
    max_group_size as f64 * e3_tail_bound(s, m, mu, gamma_deviation, num_groups, t)
}

/// Smallest `m` with `e1_tail_bound(s, m, …) ≤ target`.
pub fn e1_measurements_for(s: usize, mu: f64, gamma_deviation: f64, delta: f64, target: f64) -> usize {
    let sf = s as f64;
    // invert the closed form, then settle the ceiling
    let k = (delta * delta / 2.0) / (1.0 / (1.0 - gamma_deviation) + delta / 3.0);
    let mut m = ((2.0 * sf / target).ln() * sf * mu / k).ceil().max(1.0) as usize;
    while m > 1 && e1_tail_bound(s, m - 1, mu, gamma_deviation, delta) <= target {
        m -= 1;
    }
    while e1_tail_bound(s, m, mu, gamma_deviation, delta) > target {
        m += 1;
    }
    m
}
