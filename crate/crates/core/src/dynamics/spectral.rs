//! 2-D Fourier machinery for the pseudo-spectral solver: transforms,
//! wavenumber tables, dealiasing, and isotropic ring indices.
//!
//! Spectral fields are stored as `Array2<Complex<T>>` with shape
//! `(ny, nx)` so that a row holds one y-line of x values, matching the
//! crate-wide x-fastest flattening. The forward transform carries the
//! `1/(nx*ny)` normalization, so `mean(|f|^2)` on the grid equals
//! `sum(|f_hat|^2)` over modes.

use crate::Scalar;
use ndarray::Array2;
use num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};
use std::sync::Arc;

pub struct SpectralGrid<T> {
    nx: usize,
    ny: usize,
    /// Domain length in meters (square domain).
    length_m: f64,
    /// Dimensional wavenumbers, rad/m, FFT index order.
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// Integer mode numbers, FFT index order.
    mx: Vec<i64>,
    my: Vec<i64>,
    /// Square 2/3-rule cutoff: modes with |m| > k_dealias are zeroed.
    k_dealias: usize,
    /// Nearest-integer isotropic ring per mode.
    ring: Array2<usize>,
    fft_x: Arc<dyn Fft<T>>,
    ifft_x: Arc<dyn Fft<T>>,
    fft_y: Arc<dyn Fft<T>>,
    ifft_y: Arc<dyn Fft<T>>,
}

impl<T: Scalar + FftNum> SpectralGrid<T> {
    pub fn new(nx: usize, ny: usize, length_m: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fft_x = planner.plan_fft_forward(nx);
        let ifft_x = planner.plan_fft_inverse(nx);
        let fft_y = planner.plan_fft_forward(ny);
        let ifft_y = planner.plan_fft_inverse(ny);
        let mode = |i: usize, n: usize| -> i64 {
            if i <= n / 2 {
                i as i64
            } else {
                i as i64 - n as i64
            }
        };
        let mx: Vec<i64> = (0..nx).map(|i| mode(i, nx)).collect();
        let my: Vec<i64> = (0..ny).map(|i| mode(i, ny)).collect();
        let two_pi_over_l = 2.0 * std::f64::consts::PI / length_m;
        let kx: Vec<f64> = mx.iter().map(|&m| m as f64 * two_pi_over_l).collect();
        let ky: Vec<f64> = my.iter().map(|&m| m as f64 * two_pi_over_l).collect();
        let ring = Array2::from_shape_fn((ny, nx), |(iy, ix)| {
            let h = ((mx[ix] * mx[ix] + my[iy] * my[iy]) as f64).sqrt();
            h.round() as usize
        });
        SpectralGrid {
            nx,
            ny,
            length_m,
            kx,
            ky,
            mx,
            my,
            k_dealias: nx.min(ny) / 3,
            ring,
            fft_x,
            ifft_x,
            fft_y,
            ifft_y,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn length_m(&self) -> f64 {
        self.length_m
    }

    pub fn kx(&self) -> &[f64] {
        &self.kx
    }

    pub fn ky(&self) -> &[f64] {
        &self.ky
    }

    pub fn k_dealias(&self) -> usize {
        self.k_dealias
    }

    pub fn ring(&self) -> &Array2<usize> {
        &self.ring
    }

    /// |K| in rad/m for mode (iy, ix).
    pub fn k_abs(&self, iy: usize, ix: usize) -> f64 {
        (self.kx[ix] * self.kx[ix] + self.ky[iy] * self.ky[iy]).sqrt()
    }

    pub fn is_aliased(&self, iy: usize, ix: usize) -> bool {
        self.mx[ix].unsigned_abs() as usize > self.k_dealias
            || self.my[iy].unsigned_abs() as usize > self.k_dealias
    }

    /// Zero every mode beyond the 2/3-rule cutoff.
    pub fn dealias(&self, field: &mut Array2<Complex<T>>) {
        for ((iy, ix), v) in field.indexed_iter_mut() {
            if self.is_aliased(iy, ix) {
                *v = Complex::new(T::zero(), T::zero());
            }
        }
    }

    fn fft_rows(&self, field: &mut Array2<Complex<T>>, plan: &Arc<dyn Fft<T>>) {
        for mut row in field.rows_mut() {
            let slice = row.as_slice_mut().expect("contiguous row");
            plan.process(slice);
        }
    }

    fn fft_cols(&self, field: &mut Array2<Complex<T>>, plan: &Arc<dyn Fft<T>>) {
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.ny];
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                scratch[iy] = field[[iy, ix]];
            }
            plan.process(&mut scratch);
            for iy in 0..self.ny {
                field[[iy, ix]] = scratch[iy];
            }
        }
    }

    /// Forward transform, normalized by `1/(nx*ny)`.
    pub fn forward(&self, field: &mut Array2<Complex<T>>) {
        self.fft_rows(field, &self.fft_x);
        self.fft_cols(field, &self.fft_y);
        let norm = T::cast(1.0 / (self.nx * self.ny) as f64);
        for v in field.iter_mut() {
            *v = Complex::new(v.re * norm, v.im * norm);
        }
    }

    /// Inverse transform (unnormalized synthesis).
    pub fn inverse(&self, field: &mut Array2<Complex<T>>) {
        self.fft_rows(field, &self.ifft_x);
        self.fft_cols(field, &self.ifft_y);
    }

    /// Spectral coefficients of a real grid field.
    pub fn analyze(&self, grid: &Array2<T>) -> Array2<Complex<T>> {
        let mut hat = grid.mapv(|v| Complex::new(v, T::zero()));
        self.forward(&mut hat);
        hat
    }

    /// Real grid field from spectral coefficients.
    pub fn synthesize(&self, hat: &Array2<Complex<T>>) -> Array2<T> {
        let mut work = hat.clone();
        self.inverse(&mut work);
        work.mapv(|v| v.re)
    }
}

/// Multiply by `i * k` along x: spectral x-derivative.
pub fn derivative_x<T: Scalar + FftNum>(
    grid: &SpectralGrid<T>,
    hat: &Array2<Complex<T>>,
) -> Array2<Complex<T>> {
    let mut out = hat.clone();
    for ((_, ix), v) in out.indexed_iter_mut() {
        let k = T::cast(grid.kx[ix]);
        *v = Complex::new(-v.im * k, v.re * k);
    }
    out
}

/// Multiply by `i * k` along y: spectral y-derivative.
pub fn derivative_y<T: Scalar + FftNum>(
    grid: &SpectralGrid<T>,
    hat: &Array2<Complex<T>>,
) -> Array2<Complex<T>> {
    let mut out = hat.clone();
    for ((iy, _), v) in out.indexed_iter_mut() {
        let k = T::cast(grid.ky[iy]);
        *v = Complex::new(-v.im * k, v.re * k);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn round_trip_identity() {
        let grid = SpectralGrid::<f64>::new(32, 32, 1.0e6);
        let mut rng = CounterRng::new(1, 0);
        let field = Array2::from_shape_fn((32, 32), |_| rng.uniform_sym());
        let hat = grid.analyze(&field);
        let back = grid.synthesize(&hat);
        for (a, b) in field.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_holds_to_1e_10() {
        let grid = SpectralGrid::<f64>::new(32, 16, 2.0e6);
        let mut rng = CounterRng::new(2, 0);
        for _ in 0..5 {
            let field = Array2::from_shape_fn((16, 32), |_| rng.uniform_sym());
            let hat = grid.analyze(&field);
            let grid_ms: f64 = field.iter().map(|v| v * v).sum::<f64>() / field.len() as f64;
            let spec_ms: f64 = hat.iter().map(|v| v.norm_sqr()).sum();
            assert!(
                (grid_ms - spec_ms).abs() <= 1e-10 * grid_ms.abs().max(1e-30),
                "{grid_ms} vs {spec_ms}"
            );
        }
    }

    #[test]
    fn single_mode_lands_on_its_coefficient() {
        let n = 32;
        let grid = SpectralGrid::<f64>::new(n, n, 1.0e6);
        let (mx, my) = (3i64, 5i64);
        let amp = 2.0;
        let field = Array2::from_shape_fn((n, n), |(iy, ix)| {
            let phase =
                2.0 * std::f64::consts::PI * (mx as f64 * ix as f64 + my as f64 * iy as f64)
                    / n as f64;
            amp * phase.cos()
        });
        let hat = grid.analyze(&field);
        // cosine splits between (mx, my) and (-mx, -my), each amp/2
        let got = hat[[my as usize, mx as usize]];
        assert!((got.re - amp / 2.0).abs() < 1e-12, "{got}");
        assert!(got.im.abs() < 1e-12);
        let conj = hat[[n - my as usize, n - mx as usize]];
        assert!((conj.re - amp / 2.0).abs() < 1e-12);
        // everything else is zero
        let total: f64 = hat.iter().map(|v| v.norm_sqr()).sum();
        assert!((total - amp * amp / 2.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_analytic() {
        let n = 32;
        let l = 2.0 * std::f64::consts::PI * 1.0e6;
        let grid = SpectralGrid::<f64>::new(n, n, l);
        let m = 4i64;
        let k = 2.0 * std::f64::consts::PI * m as f64 / l;
        let field = Array2::from_shape_fn((n, n), |(_, ix)| {
            (k * (ix as f64 / n as f64) * l).sin()
        });
        let hat = grid.analyze(&field);
        let dx = grid.synthesize(&derivative_x(&grid, &hat));
        for (ix, _) in (0..n).zip(0..1) {
            let x = ix as f64 / n as f64 * l;
            let want = k * (k * x).cos();
            assert!((dx[[0, ix]] - want).abs() < 1e-12 * k.max(1.0), "ix {ix}");
        }
    }

    #[test]
    fn dealias_cuts_high_modes() {
        let n = 32;
        let grid = SpectralGrid::<f64>::new(n, n, 1.0e6);
        assert_eq!(grid.k_dealias(), 10);
        let mut hat = Array2::from_elem((n, n), Complex::new(1.0, 0.0));
        grid.dealias(&mut hat);
        assert_eq!(hat[[0, 11]], Complex::new(0.0, 0.0));
        assert_eq!(hat[[0, 10]], Complex::new(1.0, 0.0));
        assert_eq!(hat[[n - 11, 0]], Complex::new(0.0, 0.0)); // m_y = -11
        assert_eq!(hat[[n - 10, 0]], Complex::new(1.0, 0.0)); // m_y = -10
    }

    #[test]
    fn ring_indices() {
        let grid = SpectralGrid::<f64>::new(32, 32, 1.0e6);
        let ring = grid.ring();
        assert_eq!(ring[[0, 0]], 0);
        assert_eq!(ring[[0, 3]], 3);
        assert_eq!(ring[[4, 3]], 5); // 3-4-5 triangle
        assert_eq!(ring[[32 - 4, 3]], 5); // negative m_y
    }
}
