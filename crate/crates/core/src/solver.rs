//! ADMM for transform-domain ℓ1 and mixed-norm recovery.
//!
//! The programs are split as `y = Tg`, `z = A g` with `A = S_Ω′ diag(ρ)`
//! (`ρ = 1` except for the weighted variant). Iteration with scaled duals
//! `u₁, u₂`:
//!
//! ```text
//! g ← (β₁T*T + β₂A*A)⁻¹ [β₁T*(y − u₁) + β₂A*(z − u₂)]
//! y ← prox_{‖·‖/β₁}(Tg + u₁)
//! z ← Π_C(Ag + u₂)          C = {b} or a ball around b
//! u₁ += Tg − y,  u₂ += Ag − z
//! ```
//!
//! Repeated samples carry no extra information in the noiseless program,
//! so the equality constraint is imposed on `Ω′`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::groups::GroupPartition;
use crate::linop::{Mode, TransformOperator};
use crate::sampling::SamplingPattern;
use crate::{norm2, C64};

/// Reported instead of `+∞` for an exact reconstruction.
pub const RSNR_CAP_DB: f64 = 300.0;
pub const SUCCESS_DB: f64 = 60.0;

/// `sgn(z)·max(|z| − τ, 0)`.
pub fn soft_threshold(z: C64, tau: f64) -> C64 {
    let a = z.norm();
    if a <= tau {
        C64::new(0.0, 0.0)
    } else {
        z / a * (a - tau)
    }
}

/// Scales `block` by `max(1 − τ/‖block‖₂, 0)`.
pub fn group_soft_threshold(block: &[C64], tau: f64) -> Vec<C64> {
    let a = norm2(block);
    if a <= tau {
        vec![C64::new(0.0, 0.0); block.len()]
    } else {
        block.iter().map(|&z| z / a * (a - tau)).collect()
    }
}

/// Nearest point to `v` in `{w : ‖w − center‖₂ ≤ radius}`.
pub fn project_ball(v: &[C64], center: &[C64], radius: f64) -> Vec<C64> {
    let d: Vec<C64> = v.iter().zip(center).map(|(a, b)| a - b).collect();
    let r = norm2(&d);
    if r <= radius {
        return v.to_vec();
    }
    center.iter().zip(&d).map(|(c, e)| c + e * (radius / r)).collect()
}

/// `−20 log₁₀(‖x̂ − x‖/‖x‖)`, capped at [`RSNR_CAP_DB`].
pub fn rsnr(x_hat: &[C64], x: &[C64]) -> Result<f64> {
    check_len(x.len(), x_hat.len())?;
    let nx = norm2(x);
    if nx == 0.0 {
        return Err(Error::InvalidArgument("RSNR of a zero reference signal".into()));
    }
    let err: Vec<C64> = x_hat.iter().zip(x).map(|(a, b)| a - b).collect();
    let e = norm2(&err);
    if e == 0.0 {
        return Ok(RSNR_CAP_DB);
    }
    Ok((-20.0 * (e / nx).log10()).min(RSNR_CAP_DB))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    L1Eq,
    L1Ball,
    L1BallWeighted,
    GroupEq,
    GroupBall,
}

impl Variant {
    pub fn is_equality(self) -> bool {
        matches!(self, Variant::L1Eq | Variant::GroupEq)
    }

    pub fn is_group(self) -> bool {
        matches!(self, Variant::GroupEq | Variant::GroupBall)
    }
}

/// One recovery program over a shared operator and pattern.
///
/// Equality variants take `S_Ω x` (length `m`); ball variants take
/// `S_Ω′ x♯` (length `|Ω′|`).
#[derive(Clone, Debug)]
pub struct RecoveryProblem<'a> {
    t: &'a TransformOperator,
    pattern: &'a SamplingPattern,
    observations: Vec<C64>,
    variant: Variant,
    epsilon: f64,
    rho: Option<Vec<f64>>,
    partition: Option<&'a GroupPartition>,
}

impl<'a> RecoveryProblem<'a> {
    pub fn l1_eq(t: &'a TransformOperator, pattern: &'a SamplingPattern, observations: Vec<C64>) -> Result<Self> {
        Self::new(t, pattern, observations, Variant::L1Eq, 0.0, None, None)
    }

    pub fn l1_ball(
        t: &'a TransformOperator,
        pattern: &'a SamplingPattern,
        observations: Vec<C64>,
        epsilon: f64,
    ) -> Result<Self> {
        Self::new(t, pattern, observations, Variant::L1Ball, epsilon, None, None)
    }

    /// `rho` has the ambient length `n`.
    pub fn l1_ball_weighted(
        t: &'a TransformOperator,
        pattern: &'a SamplingPattern,
        observations: Vec<C64>,
        epsilon: f64,
        rho: Vec<f64>,
    ) -> Result<Self> {
        Self::new(t, pattern, observations, Variant::L1BallWeighted, epsilon, Some(rho), None)
    }

    pub fn group_eq(
        t: &'a TransformOperator,
        pattern: &'a SamplingPattern,
        observations: Vec<C64>,
        partition: &'a GroupPartition,
    ) -> Result<Self> {
        Self::new(t, pattern, observations, Variant::GroupEq, 0.0, None, Some(partition))
    }

    pub fn group_ball(
        t: &'a TransformOperator,
        pattern: &'a SamplingPattern,
        observations: Vec<C64>,
        epsilon: f64,
        partition: &'a GroupPartition,
    ) -> Result<Self> {
        Self::new(t, pattern, observations, Variant::GroupBall, epsilon, None, Some(partition))
    }

    pub fn new(
        t: &'a TransformOperator,
        pattern: &'a SamplingPattern,
        observations: Vec<C64>,
        variant: Variant,
        epsilon: f64,
        rho: Option<Vec<f64>>,
        partition: Option<&'a GroupPartition>,
    ) -> Result<Self> {
        check_len(t.in_dim(), pattern.n())?;
        let expect = if variant.is_equality() { pattern.m() } else { pattern.omega_prime().len() };
        check_len(expect, observations.len())?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("ε = {epsilon} must be finite and nonnegative")));
        }
        if variant.is_equality() != (epsilon == 0.0) {
            return Err(Error::InvalidArgument("ε = 0 exactly for the equality variants".into()));
        }
        if (variant == Variant::L1BallWeighted) != rho.is_some() {
            return Err(Error::InvalidArgument("ρ weights go with the weighted variant only".into()));
        }
        if let Some(r) = &rho {
            check_len(t.in_dim(), r.len())?;
            if r.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidArgument("ρ must be finite and nonnegative".into()));
            }
        }
        if variant.is_group() != partition.is_some() {
            return Err(Error::InvalidArgument("a partition goes with group variants only".into()));
        }
        if let Some(p) = partition {
            if p.len() != t.out_dim() {
                return Err(Error::Partition(format!(
                    "partition covers {} coordinates, transform has {}",
                    p.len(),
                    t.out_dim()
                )));
            }
        }
        Ok(Self { t, pattern, observations, variant, epsilon, rho, partition })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn pattern(&self) -> &SamplingPattern {
        self.pattern
    }

    pub fn observations(&self) -> &[C64] {
        &self.observations
    }

    /// Observations on `Ω′`, averaging repeated samples.
    fn dedup_observations(&self) -> Vec<C64> {
        if !self.variant.is_equality() {
            return self.observations.clone();
        }
        let mut sum = vec![C64::new(0.0, 0.0); self.pattern.n()];
        for (&k, &v) in self.pattern.omega().iter().zip(&self.observations) {
            sum[k] += v;
        }
        self.pattern
            .omega_prime()
            .iter()
            .zip(self.pattern.counts())
            .map(|(&k, &c)| sum[k] / c as f64)
            .collect()
    }

    /// `‖Tg‖₁` or `‖Tg‖_{G,1}`.
    pub fn objective(&self, tg: &[C64]) -> f64 {
        match self.partition {
            Some(p) => p.mixed_norm(tg),
            None => tg.iter().map(|z| z.norm()).sum(),
        }
    }

    /// `‖S_Ω x̂ − S_Ω x‖₂` or `max(0, ‖S_Ω′[ρ⊙(x̂ − x♯)]‖₂ − ε)`.
    pub fn feasibility_gap(&self, x_hat: &[C64]) -> Result<f64> {
        let s = self.pattern.subsample(x_hat, !self.variant.is_equality())?;
        if self.variant.is_equality() {
            let d: Vec<C64> = s.iter().zip(&self.observations).map(|(a, b)| a - b).collect();
            return Ok(norm2(&d));
        }
        let d: Vec<C64> = s
            .iter()
            .zip(&self.observations)
            .zip(self.pattern.omega_prime())
            .map(|((a, b), &k)| (a - b) * self.rho.as_ref().map_or(1.0, |r| r[k]))
            .collect();
        Ok((norm2(&d) - self.epsilon).max(0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub iterations: usize,
    /// `(β₁, β₂)`.
    pub penalty: (f64, f64),
    /// Stop once both residuals fall below this value.
    pub early_stop: Option<f64>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Rescale the data so that `‖T g⁰‖_∞ = 1` for the zero-filled start
    /// `g⁰`; the penalties then act on a fixed data scale.
    pub normalize: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            iterations: 1000,
            penalty: (1.0, 1.0),
            early_stop: None,
            cg_tol: 1e-10,
            cg_max_iter: 200,
            normalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x_hat: Vec<C64>,
    pub objective_trace: Vec<f64>,
    pub primal_residual: Vec<f64>,
    pub dual_residual: Vec<f64>,
    pub iterations: usize,
    pub feasibility_gap: f64,
    pub warning: Option<String>,
}

impl SolveReport {
    /// `u64` LE length, then interleaved `re, im` as `f64` LE.
    pub fn write_x_hat(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&(self.x_hat.len() as u64).to_le_bytes())?;
        for z in &self.x_hat {
            f.write_all(&z.re.to_le_bytes())?;
            f.write_all(&z.im.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

pub fn read_x_hat(path: &Path) -> Result<Vec<C64>> {
    let bytes = std::fs::read(path)?;
    let bad = || Error::InvalidArgument(format!("{} is not a vector file", path.display()));
    let len = u64::from_le_bytes(bytes.get(..8).ok_or_else(bad)?.try_into().expect("8 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() != len * 16 {
        return Err(bad());
    }
    Ok(body
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect())
}

pub fn solve(problem: &RecoveryProblem<'_>, opts: &SolveOptions) -> Result<SolveReport> {
    let (b1, b2) = opts.penalty;
    if !(b1 > 0.0 && b2 > 0.0) {
        return Err(Error::InvalidArgument("penalties must be positive".into()));
    }
    let t = problem.t;
    let pat = problem.pattern;
    let n = t.in_dim();
    let idx = pat.omega_prime();
    let ones;
    let rho: &[f64] = match &problem.rho {
        Some(r) => r,
        None => {
            ones = vec![1.0; n];
            &ones
        }
    };
    let mut obs = problem.dedup_observations();
    let scale = if opts.normalize {
        let peak = crate::norm_inf(&t.apply_unchecked(&pat.embed(&obs, true)?, Mode::Forward));
        if peak > 0.0 && peak.is_finite() { 1.0 / peak } else { 1.0 }
    } else {
        1.0
    };
    obs.iter_mut().for_each(|v| *v *= scale);
    let radius = problem.epsilon * scale;
    // ball centre / equality target in z-space
    let center: Vec<C64> = obs.iter().zip(idx).map(|(&v, &k)| v * rho[k]).collect();

    // diag(A*A)
    let mut ata = vec![0.0; n];
    for &k in idx {
        ata[k] = rho[k] * rho[k];
    }

    let warning = ill_posed_warning(t, idx)?;
    let gram = t.gram_diagonal();

    let a_apply = |g: &[C64]| -> Vec<C64> { idx.iter().map(|&k| g[k] * rho[k]).collect() };
    let a_adjoint = |z: &[C64]| -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (&k, &v) in idx.iter().zip(z) {
            out[k] = v * rho[k];
        }
        out
    };
    let shrink = |v: &mut [C64], tau: f64| match problem.partition {
        None => v.iter_mut().for_each(|z| *z = soft_threshold(*z, tau)),
        Some(p) => {
            for grp in p.groups() {
                let block: Vec<C64> = grp.iter().map(|&i| v[i]).collect();
                for (&i, w) in grp.iter().zip(group_soft_threshold(&block, tau)) {
                    v[i] = w;
                }
            }
        }
    };
    let project = |v: Vec<C64>| -> Vec<C64> {
        if problem.variant.is_equality() {
            center.clone()
        } else {
            project_ball(&v, &center, radius)
        }
    };

    let mut g = pat.embed(&obs, true)?;
    let mut y = t.apply_unchecked(&g, Mode::Forward);
    let mut z = a_apply(&g);
    let mut u1 = vec![C64::new(0.0, 0.0); y.len()];
    let mut u2 = vec![C64::new(0.0, 0.0); z.len()];

    let mut objective_trace = Vec::with_capacity(opts.iterations);
    let mut primal_residual = Vec::with_capacity(opts.iterations);
    let mut dual_residual = Vec::with_capacity(opts.iterations);

    for _ in 0..opts.iterations {
        // g-update
        let w1: Vec<C64> = y.iter().zip(&u1).map(|(a, b)| (a - b) * b1).collect();
        let w2: Vec<C64> = z.iter().zip(&u2).map(|(a, b)| (a - b) * b2).collect();
        let mut rhs = t.apply_unchecked(&w1, Mode::Adjoint);
        for (r, v) in rhs.iter_mut().zip(a_adjoint(&w2)) {
            *r += v;
        }
        match &gram {
            Some(d) => {
                for k in 0..n {
                    let den = b1 * d[k] + b2 * ata[k];
                    g[k] = if den > 0.0 { rhs[k] / den } else { C64::new(0.0, 0.0) };
                }
            }
            None => conjugate_gradient(t, &ata, b1, b2, &rhs, &mut g, opts.cg_tol, opts.cg_max_iter),
        }

        let tg = t.apply_unchecked(&g, Mode::Forward);
        let ag = a_apply(&g);

        let y_old = std::mem::take(&mut y);
        y = tg.iter().zip(&u1).map(|(a, b)| a + b).collect();
        shrink(&mut y, 1.0 / b1);
        let z_old = std::mem::take(&mut z);
        z = project(ag.iter().zip(&u2).map(|(a, b)| a + b).collect());

        let mut r1 = 0.0;
        for ((u, a), c) in u1.iter_mut().zip(&tg).zip(&y) {
            let d = a - c;
            *u += d;
            r1 += d.norm_sqr();
        }
        for ((u, a), c) in u2.iter_mut().zip(&ag).zip(&z) {
            let d = a - c;
            *u += d;
            r1 += d.norm_sqr();
        }
        let dy: Vec<C64> = y.iter().zip(&y_old).map(|(a, b)| (a - b) * b1).collect();
        let dz: Vec<C64> = z.iter().zip(&z_old).map(|(a, b)| (a - b) * b2).collect();
        let mut s = t.apply_unchecked(&dy, Mode::Adjoint);
        for (v, w) in s.iter_mut().zip(a_adjoint(&dz)) {
            *v += w;
        }

        objective_trace.push(problem.objective(&tg) / scale);
        primal_residual.push(r1.sqrt() / scale);
        dual_residual.push(norm2(&s) / scale);
        if let Some(tol) = opts.early_stop {
            if r1.sqrt() < tol * scale && norm2(&s) < tol * scale {
                break;
            }
        }
    }

    if scale != 1.0 {
        g.iter_mut().for_each(|v| *v /= scale);
    }
    let feasibility_gap = problem.feasibility_gap(&g)?;
    Ok(SolveReport {
        iterations: objective_trace.len(),
        x_hat: g,
        objective_trace,
        primal_residual,
        dual_residual,
        feasibility_gap,
        warning,
    })
}

fn ill_posed_warning(t: &TransformOperator, sampled: &[usize]) -> Result<Option<String>> {
    if t.is_injective() {
        return Ok(None);
    }
    let missing: Vec<usize> = t
        .null_columns()?
        .into_iter()
        .filter(|k| sampled.binary_search(k).is_err())
        .collect();
    Ok((!missing.is_empty()).then(|| {
        format!("transform is not injective and null indices {missing:?} are not sampled")
    }))
}

/// Solves `(β₁T*T + β₂ diag(ata)) g = rhs`, warm-started from `g`.
#[allow(clippy::too_many_arguments)]
fn conjugate_gradient(
    t: &TransformOperator,
    ata: &[f64],
    b1: f64,
    b2: f64,
    rhs: &[C64],
    g: &mut [C64],
    tol: f64,
    max_iter: usize,
) {
    let apply = |v: &[C64]| -> Vec<C64> {
        let tv = t.apply_unchecked(v, Mode::Forward);
        let mut out = t.apply_unchecked(&tv, Mode::Adjoint);
        for ((o, &x), &a) in out.iter_mut().zip(v).zip(ata) {
            *o = *o * b1 + x * (b2 * a);
        }
        out
    };
    let target = tol * norm2(rhs).max(f64::MIN_POSITIVE);
    let ag = apply(g);
    let mut r: Vec<C64> = rhs.iter().zip(&ag).map(|(a, b)| a - b).collect();
    let mut p = r.clone();
    let mut rr = crate::inner(&r, &r).re;
    for _ in 0..max_iter {
        if rr.sqrt() <= target {
            break;
        }
        let ap = apply(&p);
        let pap = crate::inner(&p, &ap).re;
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..g.len() {
            g[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_new = crate::inner(&r, &r).re;
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + p[i] * beta;
        }
        rr = rr_new;
    }
}
