//! Unitary 1D/2D DFT on column-major grids.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::C64;

/// Unitary DFT on an `n1 × n2` grid stored column-major (`i + n1 * j`).
///
/// A 1D transform is the `n2 == 1` case.
#[derive(Clone)]
pub struct GridFft {
    n1: usize,
    n2: usize,
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for GridFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridFft").field("n1", &self.n1).field("n2", &self.n2).finish()
    }
}

impl GridFft {
    pub fn new(n1: usize, n2: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n1,
            n2,
            fwd1: planner.plan_fft_forward(n1),
            inv1: planner.plan_fft_inverse(n1),
            fwd2: planner.plan_fft_forward(n2),
            inv2: planner.plan_fft_inverse(n2),
            scale: 1.0 / ((n1 * n2) as f64).sqrt(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-place `Ψ v`.
    pub fn forward(&self, buf: &mut [C64]) {
        self.run(buf, &self.fwd1, &self.fwd2);
    }

    /// In-place `Ψ* v`.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.run(buf, &self.inv1, &self.inv2);
    }

    fn run(&self, buf: &mut [C64], along_cols: &Arc<dyn Fft<f64>>, along_rows: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.len());
        let (n1, n2) = (self.n1, self.n2);
        if n1 > 1 {
            along_cols.process(buf);
        }
        if n2 > 1 {
            let mut t = vec![C64::new(0.0, 0.0); n1 * n2];
            for j in 0..n2 {
                for i in 0..n1 {
                    t[j + n2 * i] = buf[i + n1 * j];
                }
            }
            along_rows.process(&mut t);
            for i in 0..n1 {
                for j in 0..n2 {
                    buf[i + n1 * j] = t[j + n2 * i];
                }
            }
        }
        for z in buf.iter_mut() {
            *z *= self.scale;
        }
    }

    /// Unnormalized DFT `√n Ψ φ` of a kernel, i.e. the eigenvalues of the
    /// circulant matrix built from `φ`.
    pub fn spectrum_of_kernel(&self, kernel: &[C64]) -> Vec<C64> {
        let mut lam = kernel.to_vec();
        self.forward(&mut lam);
        let root_n = (self.len() as f64).sqrt();
        lam.iter_mut().for_each(|z| *z *= root_n);
        lam
    }
}
