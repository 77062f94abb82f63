//! Discrete Fourier transform kernels.
//!
//! Two strategies sit behind one [`FftPlan`]:
//!
//! - power-of-two lengths use an iterative radix-2 Cooley–Tukey transform
//!   with a precomputed twiddle table;
//! - every other length uses Bluestein's chirp-z algorithm, which reduces
//!   the transform to a circular convolution at the next power of two at or
//!   above `2n - 1` and reuses the radix-2 kernel underneath.
//!
//! A plan precomputes everything that depends only on the length, so
//! repeated transforms of equal-length windows (the spectrogram hot path)
//! pay the setup cost once.
//!
//! # Example
//!
//! ```
//! use gearvib::fft::FftPlan;
//! use num_complex::Complex64;
//!
//! let plan = FftPlan::new(8);
//! let spectrum = plan.forward_real(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
//! // The DFT of a unit impulse is flat.
//! for bin in &spectrum {
//!     assert!((bin.norm() - 1.0).abs() < 1e-12);
//! }
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;

/// A reusable transform plan for one fixed length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Radix2 {
        /// exp(-2πi k / n) for k in 0..n/2.
        twiddles: Vec<Complex64>,
    },
    Bluestein {
        /// Convolution length: next power of two at or above 2n - 1.
        m: usize,
        /// chirp[j] = exp(-iπ j² / n), j in 0..n.
        chirp: Vec<Complex64>,
        /// Forward transform (length m) of the chirp convolution kernel.
        kernel_fft: Vec<Complex64>,
        /// Radix-2 plan for the inner length-m transforms.
        inner: Box<FftPlan>,
    },
}

impl FftPlan {
    /// Builds a plan for transforms of length `n` (n >= 1).
    pub fn new(n: usize) -> FftPlan {
        assert!(n >= 1, "transform length must be at least 1");
        let kind = if n.is_power_of_two() {
            PlanKind::Radix2 {
                twiddles: (0..n / 2)
                    .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
                    .collect(),
            }
        } else {
            let m = (2 * n - 1).next_power_of_two();
            let chirp = chirp_table(n);
            // Kernel b[j] = conj(chirp[|j|]) on the circle of length m.
            let mut kernel = vec![Complex64::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for j in 1..n {
                kernel[j] = chirp[j].conj();
                kernel[m - j] = chirp[j].conj();
            }
            let inner = FftPlan::new(m);
            inner.radix2_in_place(&mut kernel, false);
            PlanKind::Bluestein {
                m,
                chirp,
                kernel_fft: kernel,
                inner: Box::new(inner),
            }
        };
        FftPlan { n, kind }
    }

    /// Transform length this plan was built for.
    pub fn len(&self) -> usize {
        self.n
    }

    /// True when the plan length is zero (never; kept for API symmetry).
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Forward DFT: X[k] = Σ_j x[j] · exp(-2πi jk / n).
    pub fn forward(&self, input: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(input.len(), self.n, "input length must match the plan");
        match &self.kind {
            PlanKind::Radix2 { .. } => {
                let mut buf = input.to_vec();
                self.radix2_in_place(&mut buf, false);
                buf
            }
            PlanKind::Bluestein { .. } => self.bluestein(input),
        }
    }

    /// Forward DFT of a real-valued signal.
    pub fn forward_real(&self, input: &[f64]) -> Vec<Complex64> {
        let complex: Vec<Complex64> = input.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&complex)
    }

    /// Inverse DFT: x[j] = (1/n) Σ_k X[k] · exp(+2πi jk / n).
    pub fn inverse(&self, input: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(input.len(), self.n, "input length must match the plan");
        match &self.kind {
            PlanKind::Radix2 { .. } => {
                let mut buf = input.to_vec();
                self.radix2_in_place(&mut buf, true);
                buf
            }
            PlanKind::Bluestein { .. } => {
                // conj ∘ forward ∘ conj, then scale by 1/n.
                let conj: Vec<Complex64> = input.iter().map(|z| z.conj()).collect();
                let mut out = self.bluestein(&conj);
                let scale = 1.0 / self.n as f64;
                for z in &mut out {
                    *z = z.conj() * scale;
                }
                out
            }
        }
    }

    /// Iterative radix-2 DIT transform. `inverse` also applies 1/n scaling.
    fn radix2_in_place(&self, buf: &mut [Complex64], inverse: bool) {
        let twiddles = match &self.kind {
            PlanKind::Radix2 { twiddles } => twiddles,
            PlanKind::Bluestein { .. } => unreachable!("radix-2 path on a Bluestein plan"),
        };
        let n = buf.len();
        debug_assert_eq!(n, self.n);
        if n <= 1 {
            return;
        }

        // Bit-reversal permutation.
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
            if j > i {
                buf.swap(i, j);
            }
        }

        let mut span = 2;
        while span <= n {
            let half = span / 2;
            let stride = n / span;
            for start in (0..n).step_by(span) {
                for k in 0..half {
                    let w = if inverse {
                        twiddles[k * stride].conj()
                    } else {
                        twiddles[k * stride]
                    };
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            span *= 2;
        }

        if inverse {
            let scale = 1.0 / n as f64;
            for z in buf.iter_mut() {
                *z *= scale;
            }
        }
    }

    /// Bluestein's algorithm: DFT as a chirp-modulated circular convolution.
    fn bluestein(&self, input: &[Complex64]) -> Vec<Complex64> {
        let (m, chirp, kernel_fft, inner) = match &self.kind {
            PlanKind::Bluestein {
                m,
                chirp,
                kernel_fft,
                inner,
            } => (*m, chirp, kernel_fft, inner),
            PlanKind::Radix2 { .. } => unreachable!("bluestein path on a radix-2 plan"),
        };

        let mut a = vec![Complex64::new(0.0, 0.0); m];
        for (j, (&x, &c)) in input.iter().zip(chirp.iter()).enumerate() {
            a[j] = x * c;
        }
        inner.radix2_in_place(&mut a, false);
        for (av, kv) in a.iter_mut().zip(kernel_fft.iter()) {
            *av *= kv;
        }
        inner.radix2_in_place(&mut a, true);

        (0..self.n).map(|k| chirp[k] * a[k]).collect()
    }
}

/// chirp[j] = exp(-iπ j² / n), with j² reduced mod 2n so the phase argument
/// stays small and exact for large j.
fn chirp_table(n: usize) -> Vec<Complex64> {
    let two_n = 2 * n as u128;
    (0..n)
        .map(|j| {
            let sq = (j as u128 * j as u128) % two_n;
            Complex64::from_polar(1.0, -PI * sq as f64 / n as f64)
        })
        .collect()
}

// ---------------------------------------------------------------------------
