//! Cached 3D real-to-complex transforms on n^3 grids.
//!
//! Real layout: index (ix*n + iy)*n + iz. Spectral layout: (ix*n + iy)*h + kz, h = n/2 + 1.
//! Forward is unnormalized; callers divide by n^3.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft3 {
    pub n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn cache() -> &'static Mutex<HashMap<usize, Arc<Fft3>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Fft3 {
    pub fn get(n: usize) -> Arc<Fft3> {
        let mut map = cache().lock().unwrap_or_else(|e| e.into_inner());
        map.entry(n)
            .or_insert_with(|| {
                let mut rp = RealFftPlanner::<f64>::new();
                let mut cp = FftPlanner::<f64>::new();
                Arc::new(Fft3 {
                    n,
                    r2c: rp.plan_fft_forward(n),
                    c2r: rp.plan_fft_inverse(n),
                    fwd: cp.plan_fft_forward(n),
                    inv: cp.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    pub fn half(&self) -> usize {
        self.n / 2 + 1
    }

    /// Transform along the two complex axes, in place.
    fn complex_axes(&self, spec: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let h = self.half();
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // y axis: contiguous blocks of n*h per ix
        for ix in 0..n {
            let block = &mut spec[ix * n * h..(ix + 1) * n * h];
            for kz in 0..h {
                for iy in 0..n {
                    buf[iy] = block[iy * h + kz];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for iy in 0..n {
                    block[iy * h + kz] = buf[iy];
                }
            }
        }
        // x axis
        let stride = n * h;
        for r in 0..stride {
            for ix in 0..n {
                buf[ix] = spec[ix * stride + r];
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for ix in 0..n {
                spec[ix * stride + r] = buf[ix];
            }
        }
    }

    pub fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let h = self.half();
        debug_assert_eq!(real.len(), n * n * n);
        let mut spec = vec![Complex64::new(0.0, 0.0); n * n * h];
        let mut line = vec![0.0; n];
        let mut scratch = self.r2c.make_scratch_vec();
        for row in 0..n * n {
            line.copy_from_slice(&real[row * n..(row + 1) * n]);
            self.r2c
                .process_with_scratch(&mut line, &mut spec[row * h..(row + 1) * h], &mut scratch)
                .expect("r2c length");
        }
        self.complex_axes(&mut spec, false);
        spec
    }

    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let h = self.half();
        debug_assert_eq!(spec.len(), n * n * h);
        let mut work = spec.to_vec();
        self.complex_axes(&mut work, true);
        let mut real = vec![0.0; n * n * n];
        let mut scratch = self.c2r.make_scratch_vec();
        for row in 0..n * n {
            let s = &mut work[row * h..(row + 1) * h];
            s[0].im = 0.0;
            s[h - 1].im = 0.0;
            self.c2r
                .process_with_scratch(s, &mut real[row * n..(row + 1) * n], &mut scratch)
                .expect("c2r length");
        }
        real
    }
}
