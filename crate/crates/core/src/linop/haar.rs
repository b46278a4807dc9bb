//! Periodized orthonormal Haar analysis/synthesis.
//!
//! A level-`ℓ` decomposition of a length-`n` signal is laid out as
//! `[a_ℓ | d_ℓ | d_{ℓ-1} | … | d_1]`: the `n / 2^ℓ` scaling coefficients
//! first, then the detail bands from coarse to fine.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::C64;

pub(crate) fn analyze(x: &mut [C64], level: usize, scratch: &mut Vec<C64>) {
    let mut len = x.len();
    scratch.resize(len, C64::new(0.0, 0.0));
    for _ in 0..level {
        let half = len / 2;
        for i in 0..half {
            let (a, b) = (x[2 * i], x[2 * i + 1]);
            scratch[i] = (a + b) * FRAC_1_SQRT_2;
            scratch[half + i] = (a - b) * FRAC_1_SQRT_2;
        }
        x[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
}

pub(crate) fn synthesize(x: &mut [C64], level: usize, scratch: &mut Vec<C64>) {
    let n = x.len();
    scratch.resize(n, C64::new(0.0, 0.0));
    let mut len = n >> level;
    for _ in 0..level {
        let half = len;
        len *= 2;
        for i in 0..half {
            let (a, d) = (x[i], x[half + i]);
            scratch[2 * i] = (a + d) * FRAC_1_SQRT_2;
            scratch[2 * i + 1] = (a - d) * FRAC_1_SQRT_2;
        }
        x[..len].copy_from_slice(&scratch[..len]);
    }
}

/// Separable Haar on a column-major `n1 × n2` grid: level `l1` along
/// columns, then level `l2` along rows.
pub(crate) fn analyze_grid(x: &mut [C64], n1: usize, n2: usize, l1: usize, l2: usize) {
    let mut scratch = Vec::new();
    if l1 > 0 {
        for col in x.chunks_mut(n1) {
            analyze(col, l1, &mut scratch);
        }
    }
    if l2 > 0 {
        let mut row = vec![C64::new(0.0, 0.0); n2];
        for i in 0..n1 {
            for j in 0..n2 {
                row[j] = x[i + n1 * j];
            }
            analyze(&mut row, l2, &mut scratch);
            for j in 0..n2 {
                x[i + n1 * j] = row[j];
            }
        }
    }
}

pub(crate) fn synthesize_grid(x: &mut [C64], n1: usize, n2: usize, l1: usize, l2: usize) {
    let mut scratch = Vec::new();
    if l2 > 0 {
        let mut row = vec![C64::new(0.0, 0.0); n2];
        for i in 0..n1 {
            for j in 0..n2 {
                row[j] = x[i + n1 * j];
            }
            synthesize(&mut row, l2, &mut scratch);
            for j in 0..n2 {
                x[i + n1 * j] = row[j];
            }
        }
    }
    if l1 > 0 {
        for col in x.chunks_mut(n1) {
            synthesize(col, l1, &mut scratch);
        }
    }
}
