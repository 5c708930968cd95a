//! Uniform grids on the torus `[-1/2, 1/2]^n`, discrete Fourier transforms,
//! diagonal multipliers, spectral derivatives and `L^p` quadrature.
//!
//! Conventions:
//!
//! * grid point `j` on an axis is `t_j = (j + s/2)/M - 1/2` where `s` is the
//!   axis shift flag (half a cell when set);
//! * frequencies live in `[-M/2, M/2)` and are stored in FFT order;
//! * the forward transform is the grid average
//!   `f^(k) = M^{-n} sum_t e^{-2 pi i k.t} f(t)`, the inverse is the plain sum
//!   `f(t) = sum_k f^(k) e^{2 pi i k.t}`. This makes `f^(k)` the Fourier
//!   coefficient of the trigonometric polynomial interpolating the samples.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the number of samples a single field may hold.
pub const MAX_POINTS: usize = 1 << 26;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// A uniform grid with `M` points per axis on the `n`-torus.
///
/// `n = 0` is allowed and denotes the one-point torus; fields on it are
/// constants. This is how the first coefficient of a martingale-type stack
/// is represented.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    m: usize,
    shifts: Vec<bool>,
}

impl TorusGrid {
    /// Grid with the same half-cell shift flag on every axis.
    pub fn new(n: usize, m: usize, offset: bool) -> Result<Self> {
        Self::with_shifts(m, vec![offset; n])
    }

    /// Grid with an individual half-cell shift flag per axis.
    pub fn with_shifts(m: usize, shifts: Vec<bool>) -> Result<Self> {
        if m == 0 || m % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be positive and even, got {m}"
            )));
        }
        let n = shifts.len();
        let total = u32::try_from(n)
            .ok()
            .and_then(|n| m.checked_pow(n))
            .ok_or_else(|| Error::InvalidGrid(format!("{m}^{n} points overflow")))?;
        if total > MAX_POINTS {
            return Err(Error::TooLarge(format!(
                "grid {m}^{n} = {total} points exceeds {MAX_POINTS}"
            )));
        }
        Ok(Self { m, shifts })
    }

    /// Grid shifted by half a cell on the first axis only.
    ///
    /// For every `b` in `{-1,1}^n` and every point, `M * b.t` lies in
    /// `Z + 1/2`, so `b.t` never hits the jumps of the 1-periodic sign
    /// function. The all-axes shift only has this property for odd `n`.
    pub fn sign_safe(n: usize, m: usize) -> Result<Self> {
        let mut shifts = vec![false; n];
        if let Some(first) = shifts.first_mut() {
            *first = true;
        }
        Self::with_shifts(m, shifts)
    }

    pub fn dim(&self) -> usize {
        self.shifts.len()
    }

    pub fn points_per_axis(&self) -> usize {
        self.m
    }

    pub fn shifts(&self) -> &[bool] {
        &self.shifts
    }

    /// `Some(flag)` when every axis carries the same shift.
    pub fn uniform_offset(&self) -> Option<bool> {
        match self.shifts.first() {
            None => Some(false),
            Some(&s) => self.shifts.iter().all(|&x| x == s).then_some(s),
        }
    }

    /// Total number of grid points `M^n`.
    pub fn len(&self) -> usize {
        self.m.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest `B` such that all frequencies with `|k|_inf <= B` are
    /// represented without touching the unmatched `-M/2` mode.
    pub fn max_bandlimit(&self) -> usize {
        self.m / 2 - 1
    }

    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        let s = if self.shifts[axis] { 0.5 } else { 0.0 };
        (index as f64 + s) / self.m as f64 - 0.5
    }

    /// Coordinates of the grid point with the given flat index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &j)| self.coordinate(a, j))
            .collect()
    }

    /// Signed frequency stored at FFT index `j`.
    pub fn frequency(&self, j: usize) -> i64 {
        if j < self.m / 2 {
            j as i64
        } else {
            j as i64 - self.m as i64
        }
    }

    /// FFT index of a signed frequency, if representable.
    pub fn frequency_index(&self, k: i64) -> Option<usize> {
        let half = (self.m / 2) as i64;
        if k < -half || k >= half {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.m as i64) as usize)
        }
    }

    /// Flat index of a frequency vector, if every component is representable.
    pub fn flat_frequency_index(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim() {
            return None;
        }
        let mut flat = 0;
        for &ki in k {
            flat = flat * self.m + self.frequency_index(ki)?;
        }
        Some(flat)
    }

    /// Row-major multi-index of a flat index (last axis fastest).
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = flat % self.m;
            flat /= self.m;
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &j| acc * self.m + j)
    }

    /// Frequency vector stored at a flat spectral index.
    pub fn frequency_vector(&self, flat: usize) -> Vec<i64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter().map(|&j| self.frequency(j)).collect()
    }

    /// Same shifts, `factor` times as many points per axis.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        Self::with_shifts(self.m * factor, self.shifts.clone())
    }

    /// Cartesian product `T^{n1} x T^{n2}` with a common `M`.
    pub fn product(&self, other: &TorusGrid) -> Result<Self> {
        if self.m != other.m {
            return Err(Error::ShapeMismatch(format!(
                "cannot take product of grids with M = {} and M = {}",
                self.m, other.m
            )));
        }
        let mut shifts = self.shifts.clone();
        shifts.extend_from_slice(&other.shifts);
        Self::with_shifts(self.m, shifts)
    }

    /// Per-axis phase `exp(-2 pi i k (s/(2M) - 1/2))` applied after a raw DFT
    /// so that coefficients refer to the centred, shifted grid.
    fn axis_phases(&self, axis: usize) -> Vec<Complex64> {
        let s = if self.shifts[axis] { 0.5 } else { 0.0 };
        let origin = s / self.m as f64 - 0.5;
        (0..self.m)
            .map(|j| {
                let k = self.frequency(j) as f64;
                Complex64::from_polar(1.0, -2.0 * PI * k * origin)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Physical,
    Spectral,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Physical => "physical",
            Representation::Spectral => "spectral",
        }
    }
}

/// A complex function on a torus grid, held either as samples or as Fourier
/// coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    grid: TorusGrid,
    repr: Representation,
    values: Vec<Complex64>,
    bandlimit: Option<usize>,
}

/// A real Fourier symbol evaluated on integer frequencies.
pub trait FourierSymbol {
    fn value(&self, k: &[i64]) -> f64;
}

impl<F> FourierSymbol for F
where
    F: Fn(&[i64]) -> f64,
{
    fn value(&self, k: &[i64]) -> f64 {
        self(k)
    }
}

impl TorusField {
    pub fn from_physical(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        Self::checked(grid, Representation::Physical, values)
    }

    pub fn from_spectral(grid: TorusGrid, coefficients: Vec<Complex64>) -> Result<Self> {
        Self::checked(grid, Representation::Spectral, coefficients)
    }

    fn checked(grid: TorusGrid, repr: Representation, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} points, got {} values",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid,
            repr,
            values,
            bandlimit: None,
        })
    }

    pub fn zeros(grid: TorusGrid, repr: Representation) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            repr,
            values,
            bandlimit: None,
        }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn<F>(grid: TorusGrid, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let n = grid.dim();
        let mut idx = vec![0; n];
        let mut t = vec![0.0; n];
        let values = (0..grid.len())
            .map(|flat| {
                grid.unravel(flat, &mut idx);
                for a in 0..n {
                    t[a] = grid.coordinate(a, idx[a]);
                }
                f(&t)
            })
            .collect();
        Self {
            grid,
            repr: Representation::Physical,
            values,
            bandlimit: None,
        }
    }

    /// Trigonometric polynomial from `(frequency, coefficient)` pairs.
    /// Repeated frequencies accumulate.
    pub fn from_modes(grid: TorusGrid, modes: &[(Vec<i64>, Complex64)]) -> Result<Self> {
        let mut field = Self::zeros(grid, Representation::Spectral);
        for (k, c) in modes {
            let flat = field.grid.flat_frequency_index(k).ok_or_else(|| {
                Error::Nyquist(format!(
                    "frequency {k:?} not representable on M = {}",
                    field.grid.m
                ))
            })?;
            field.values[flat] += c;
        }
        Ok(field)
    }

    /// Single exponential `e_k(t) = exp(2 pi i k.t)`.
    pub fn exponential(grid: TorusGrid, k: &[i64]) -> Result<Self> {
        Self::from_modes(grid, &[(k.to_vec(), Complex64::new(1.0, 0.0))])
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn bandlimit(&self) -> Option<usize> {
        self.bandlimit
    }

    /// Truncates the spectrum to `|k|_inf <= b` and records the bandlimit.
    /// The representation is preserved.
    pub fn with_bandlimit(&self, b: usize) -> Result<Self> {
        if b > self.grid.max_bandlimit() {
            return Err(Error::Nyquist(format!(
                "bandlimit {b} needs more than M = {} points per axis",
                self.grid.m
            )));
        }
        let mut spec = self.to_spectral();
        let n = self.grid.dim();
        let mut idx = vec![0; n];
        for (flat, c) in spec.values.iter_mut().enumerate() {
            self.grid.unravel(flat, &mut idx);
            if idx.iter().any(|&j| self.grid.frequency(j).unsigned_abs() as usize > b) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        spec.bandlimit = Some(b);
        Ok(match self.repr {
            Representation::Spectral => spec,
            Representation::Physical => spec.to_physical(),
        })
    }

    /// Largest `|k|_inf` among coefficients above `tol * max|coefficient|`.
    pub fn effective_bandlimit(&self, tol: f64) -> usize {
        let spec = self.to_spectral();
        let max = spec.values.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut idx = vec![0; self.grid.dim()];
        let mut best = 0;
        for (flat, c) in spec.values.iter().enumerate() {
            if c.norm() > tol * max && max > 0.0 {
                self.grid.unravel(flat, &mut idx);
                let kmax = idx
                    .iter()
                    .map(|&j| self.grid.frequency(j).unsigned_abs() as usize)
                    .max()
                    .unwrap_or(0);
                best = best.max(kmax);
            }
        }
        best
    }

    /// Spectral copy (clone when already spectral).
    pub fn to_spectral(&self) -> TorusField {
        match self.repr {
            Representation::Spectral => self.clone(),
            Representation::Physical => {
                let mut values = self.values.clone();
                forward_in_place(&self.grid, &mut values);
                TorusField {
                    grid: self.grid.clone(),
                    repr: Representation::Spectral,
                    values,
                    bandlimit: self.bandlimit,
                }
            }
        }
    }

    /// Physical copy (clone when already physical).
    pub fn to_physical(&self) -> TorusField {
        match self.repr {
            Representation::Physical => self.clone(),
            Representation::Spectral => {
                let mut values = self.values.clone();
                inverse_in_place(&self.grid, &mut values);
                TorusField {
                    grid: self.grid.clone(),
                    repr: Representation::Physical,
                    values,
                    bandlimit: self.bandlimit,
                }
            }
        }
    }

    /// Coefficient at a frequency vector (zero when not representable).
    pub fn coefficient(&self, k: &[i64]) -> Complex64 {
        let spec = self.to_spectral();
        spec.grid
            .flat_frequency_index(k)
            .map(|i| spec.values[i])
            .unwrap_or_default()
    }

    /// `c * f`, representation preserved.
    pub fn scaled(&self, c: Complex64) -> TorusField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `a * self + b * other` in the representation of `self`.
    pub fn combine(&self, a: Complex64, other: &TorusField, b: Complex64) -> Result<TorusField> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        let other = match self.repr {
            Representation::Physical => other.to_physical(),
            Representation::Spectral => other.to_spectral(),
        };
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let bandlimit = match (self.bandlimit, other.bandlimit) {
            (Some(x), Some(y)) => Some(x.max(y)),
            _ => None,
        };
        Ok(TorusField {
            grid: self.grid.clone(),
            repr: self.repr,
            values,
            bandlimit,
        })
    }

    /// Cyclic translation by a grid vector: `g(t) = f(t - shift/M)`.
    pub fn translated(&self, shift: &[i64]) -> Result<TorusField> {
        if shift.len() != self.grid.dim() {
            return Err(Error::ShapeMismatch("shift has wrong dimension".into()));
        }
        let phys = self.to_physical();
        let m = self.grid.m as i64;
        let n = self.grid.dim();
        let mut idx = vec![0; n];
        let mut src = vec![0; n];
        let mut values = vec![Complex64::default(); phys.values.len()];
        for (flat, v) in values.iter_mut().enumerate() {
            self.grid.unravel(flat, &mut idx);
            for a in 0..n {
                src[a] = (idx[a] as i64 - shift[a]).rem_euclid(m) as usize;
            }
            *v = phys.values[self.grid.ravel(&src)];
        }
        Ok(TorusField {
            grid: self.grid.clone(),
            repr: Representation::Physical,
            values,
            bandlimit: self.bandlimit,
        })
    }

    /// `sqrt(sum_k |f^(k)|^2)`, the `L^2` norm by Parseval.
    pub fn l2_norm_spectral(&self) -> f64 {
        let spec = self.to_spectral();
        pairwise_sum(spec.values.iter().map(|c| c.norm_sqr())).sqrt()
    }

    /// `sqrt(M^{-n} sum_t |f(t)|^2)`.
    pub fn l2_norm_physical(&self) -> f64 {
        let phys = self.to_physical();
        (pairwise_sum(phys.values.iter().map(|c| c.norm_sqr())) / phys.values.len() as f64).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Normalized forward DFT. Fails unless the field holds samples.
pub fn forward_transform(f: &TorusField) -> Result<TorusField> {
    if f.repr != Representation::Physical {
        return Err(Error::WrongRepresentation {
            expected: "physical",
            found: f.repr.name(),
        });
    }
    Ok(f.to_spectral())
}

/// Inverse DFT. Fails unless the field holds coefficients.
pub fn inverse_transform(f: &TorusField) -> Result<TorusField> {
    if f.repr != Representation::Spectral {
        return Err(Error::WrongRepresentation {
            expected: "spectral",
            found: f.repr.name(),
        });
    }
    Ok(f.to_physical())
}

/// Multiplies every coefficient by `s(k)`. Output is spectral.
pub fn apply_multiplier<S: FourierSymbol + ?Sized>(f: &TorusField, s: &S) -> TorusField {
    let mut out = f.to_spectral();
    let weights = symbol_table(&out.grid, s);
    out.values
        .iter_mut()
        .zip(&weights)
        .for_each(|(c, w)| *c *= *w);
    out
}

/// Values of a symbol at every stored frequency, in FFT order.
pub fn symbol_table<S: FourierSymbol + ?Sized>(grid: &TorusGrid, s: &S) -> Vec<f64> {
    let n = grid.dim();
    let mut idx = vec![0; n];
    let mut k = vec![0i64; n];
    (0..grid.len())
        .map(|flat| {
            grid.unravel(flat, &mut idx);
            for a in 0..n {
                k[a] = grid.frequency(idx[a]);
            }
            s.value(&k)
        })
        .collect()
}

/// Multiplies the coefficient at `k` by `prod_i (2 pi i k_i)^{gamma_i}`.
///
/// Rejects fields with energy in the unmatched `-M/2` mode along any axis
/// that is differentiated, since that mode has no symmetric partner.
pub fn spectral_derivative(f: &TorusField, gamma: &[u32]) -> Result<TorusField> {
    let grid = f.grid.clone();
    if gamma.len() != grid.dim() {
        return Err(Error::ShapeMismatch(format!(
            "derivative order has length {}, field has dimension {}",
            gamma.len(),
            grid.dim()
        )));
    }
    let mut out = f.to_spectral();
    let max = out.max_abs();
    let nyq = grid.m / 2;
    let n = grid.dim();
    let mut idx = vec![0; n];
    for (flat, c) in out.values.iter_mut().enumerate() {
        grid.unravel(flat, &mut idx);
        let mut factor = Complex64::new(1.0, 0.0);
        for a in 0..n {
            if gamma[a] == 0 {
                continue;
            }
            if idx[a] == nyq && c.norm() > 1e-12 * max {
                return Err(Error::Nyquist(format!(
                    "coefficient at frequency -{nyq} on axis {a} is nonzero"
                )));
            }
            let ik = Complex64::new(0.0, 2.0 * PI * grid.frequency(idx[a]) as f64);
            factor *= ik.powu(gamma[a]);
        }
        *c *= factor;
    }
    Ok(out)
}

/// `(mean over the refined grid of |f|^p)^{1/p}` after zero-padding the
/// spectrum by `oversample` per axis.
pub fn lp_norm(f: &TorusField, p: f64, oversample: usize) -> Result<f64> {
    check_exponent(p)?;
    if oversample == 0 {
        return Err(Error::InvalidOversample);
    }
    if oversample == 1 {
        let phys = f.to_physical();
        return Ok(mean_abs_pow(&phys.values, p).powf(1.0 / p));
    }
    let fine = zero_pad(f, oversample)?.to_physical();
    Ok(mean_abs_pow(&fine.values, p).powf(1.0 / p))
}

/// Sets the mean (the coefficient at `k = 0`) to zero.
pub fn project_mean_zero(f: &TorusField) -> TorusField {
    let mut out = f.to_spectral();
    if let Some(c) = out.values.first_mut() {
        *c = Complex64::new(0.0, 0.0);
    }
    match f.repr {
        Representation::Spectral => out,
        Representation::Physical => out.to_physical(),
    }
}

/// Embeds the spectrum into a grid `factor` times finer. Output is spectral
/// and represents the same trigonometric polynomial.
pub fn zero_pad(f: &TorusField, factor: usize) -> Result<TorusField> {
    if factor == 0 {
        return Err(Error::InvalidOversample);
    }
    let spec = f.to_spectral();
    if factor == 1 {
        return Ok(spec);
    }
    let coarse = &spec.grid;
    let fine_grid = coarse.refine(factor)?;
    let map: Vec<usize> = (0..coarse.m)
        .map(|j| {
            fine_grid
                .frequency_index(coarse.frequency(j))
                .expect("coarse frequencies fit the refined grid")
        })
        .collect();
    let mut values = vec![Complex64::default(); fine_grid.len()];
    let n = coarse.dim();
    let mut idx = vec![0; n];
    for (flat, c) in spec.values.iter().enumerate() {
        if *c == Complex64::default() {
            continue;
        }
        coarse.unravel(flat, &mut idx);
        let target = idx.iter().fold(0, |acc, &j| acc * fine_grid.m + map[j]);
        values[target] = *c;
    }
    Ok(TorusField {
        grid: fine_grid,
        repr: Representation::Spectral,
        values,
        bandlimit: spec.bandlimit,
    })
}

/// Restricts a spectrum to a coarser grid, dropping frequencies that do not
/// fit. Inverse of [`zero_pad`] on padded fields.
pub fn truncate_spectrum(f: &TorusField, grid: &TorusGrid) -> Result<TorusField> {
    let spec = f.to_spectral();
    if grid.dim() != spec.grid.dim() || grid.m > spec.grid.m {
        return Err(Error::ShapeMismatch(
            "target grid must have the same dimension and no more points".into(),
        ));
    }
    let map: Vec<usize> = (0..grid.m)
        .map(|j| {
            spec.grid
                .frequency_index(grid.frequency(j))
                .expect("coarse frequencies fit the fine grid")
        })
        .collect();
    let n = grid.dim();
    let mut idx = vec![0; n];
    let values = (0..grid.len())
        .map(|flat| {
            grid.unravel(flat, &mut idx);
            let src = idx.iter().fold(0, |acc, &j| acc * spec.grid.m + map[j]);
            spec.values[src]
        })
        .collect();
    Ok(TorusField {
        grid: grid.clone(),
        repr: Representation::Spectral,
        values,
        bandlimit: spec.bandlimit,
    })
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

/// `|z|^p` with cheap paths for the common exponents.
#[inline]
pub(crate) fn abs_pow(z: Complex64, p: f64) -> f64 {
    let sq = z.norm_sqr();
    if p == 2.0 {
        sq
    } else if p == 4.0 {
        sq * sq
    } else if sq == 0.0 {
        0.0
    } else {
        sq.powf(0.5 * p)
    }
}

pub(crate) fn mean_abs_pow(values: &[Complex64], p: f64) -> f64 {
    pairwise_sum(values.iter().map(|&z| abs_pow(z, p))) / values.len() as f64
}

/// Two-level blocked summation; keeps the rounding error of long sums of
/// nonnegative terms near `sqrt(len) * eps`.
pub(crate) fn pairwise_sum<I: Iterator<Item = f64>>(iter: I) -> f64 {
    const BLOCK: usize = 512;
    let mut total = 0.0;
    let mut block = 0.0;
    let mut count = 0;
    let mut blocks = Vec::new();
    for x in iter {
        block += x;
        count += 1;
        if count == BLOCK {
            blocks.push(block);
            block = 0.0;
            count = 0;
        }
    }
    blocks.push(block);
    while blocks.len() > 1 {
        blocks = blocks
            .chunks(2)
            .map(|c| c.iter().sum())
            .collect();
    }
    total += blocks[0];
    total
}

fn forward_in_place(grid: &TorusGrid, values: &mut [Complex64]) {
    if grid.dim() == 0 {
        return;
    }
    fft_axes(grid, values, FftDirection::Forward);
    let scale = 1.0 / grid.len() as f64;
    apply_phases(grid, values, false, scale);
}

fn inverse_in_place(grid: &TorusGrid, values: &mut [Complex64]) {
    if grid.dim() == 0 {
        return;
    }
    apply_phases(grid, values, true, 1.0);
    fft_axes(grid, values, FftDirection::Inverse);
}

fn apply_phases(grid: &TorusGrid, values: &mut [Complex64], conjugate: bool, scale: f64) {
    let n = grid.dim();
    let m = grid.m;
    let tables: Vec<Vec<Complex64>> = (0..n)
        .map(|a| {
            let t = grid.axis_phases(a);
            if conjugate {
                t.iter().map(|z| z.conj()).collect()
            } else {
                t
            }
        })
        .collect();
    let mut idx = vec![0; n];
    for (flat, v) in values.iter_mut().enumerate() {
        let mut rem = flat;
        for slot in idx.iter_mut().rev() {
            *slot = rem % m;
            rem /= m;
        }
        let mut ph = Complex64::new(scale, 0.0);
        for a in 0..n {
            ph *= tables[a][idx[a]];
        }
        *v *= ph;
    }
}

fn fft_axes(grid: &TorusGrid, values: &mut [Complex64], direction: FftDirection) {
    let m = grid.m;
    let n = grid.dim();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(m, direction));
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    // Last axis is contiguous: transform all lines at once.
    fft.process_with_scratch(values, &mut scratch);
    let mut line = vec![Complex64::default(); m];
    for axis in (0..n.saturating_sub(1)).rev() {
        let stride = m.pow((n - 1 - axis) as u32);
        let outer = values.len() / (stride * m);
        for o in 0..outer {
            let base = o * stride * m;
            for inner in 0..stride {
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = values[base + inner + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    values[base + inner + j * stride] = *v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid(n: usize, m: usize) -> TorusGrid {
        TorusGrid::new(n, m, true).unwrap()
    }

    #[test]
    fn constant_function_has_only_mean() {
        for &(n, m) in &[(1, 8), (2, 16), (3, 4)] {
            let g = grid(n, m);
            let f = TorusField::from_fn(g, |_| c(1.0, 0.0));
            let s = forward_transform(&f).unwrap();
            assert!((s.values()[0] - c(1.0, 0.0)).norm() < 1e-14);
            assert!(s.values()[1..].iter().all(|z| z.norm() < 1e-14));
        }
    }

    #[test]
    fn exponential_transforms_to_basis_vector() {
        for offset in [false, true] {
            let g = TorusGrid::new(2, 16, offset).unwrap();
            let k0 = [3i64, -5];
            let f = TorusField::from_fn(g.clone(), |t| {
                Complex64::from_polar(1.0, 2.0 * PI * (k0[0] as f64 * t[0] + k0[1] as f64 * t[1]))
            });
            let s = forward_transform(&f).unwrap();
            let at = g.flat_frequency_index(&k0).unwrap();
            for (i, z) in s.values().iter().enumerate() {
                let expect = if i == at { 1.0 } else { 0.0 };
                assert!((z - c(expect, 0.0)).norm() < 1e-13, "index {i}: {z}");
            }
        }
    }

    #[test]
    fn square_wave_partial_sum_coefficients() {
        // a(t) = sum_{odd l <= 5} 4/(pi l) sin(2 pi l t); coefficient at +-l is -+2i/(pi l).
        let g = grid(1, 64);
        let f = TorusField::from_fn(g.clone(), |t| {
            let v: f64 = [1.0, 3.0, 5.0]
                .iter()
                .map(|&l| 4.0 / (PI * l) * (2.0 * PI * l * t[0]).sin())
                .sum();
            c(v, 0.0)
        });
        let s = forward_transform(&f).unwrap();
        for j in 0..64 {
            let k = g.frequency(j);
            let expect = if k != 0 && k.abs() <= 5 && k.abs() % 2 == 1 {
                c(0.0, -2.0 / (PI * k as f64))
            } else {
                c(0.0, 0.0)
            };
            assert!((s.values()[j] - expect).norm() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn inverse_of_single_mode_samples_exponential() {
        let g = grid(2, 8);
        let f = inverse_transform(&TorusField::exponential(g.clone(), &[1, 0]).unwrap()).unwrap();
        for flat in 0..g.len() {
            let t = g.point(flat);
            let expect = Complex64::from_polar(1.0, 2.0 * PI * t[0]);
            assert!((f.values()[flat] - expect).norm() < 1e-13);
        }
        let zero = inverse_transform(&TorusField::zeros(g, Representation::Spectral)).unwrap();
        assert!(zero.values().iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn wrong_representation_is_rejected() {
        let g = grid(1, 8);
        let phys = TorusField::zeros(g.clone(), Representation::Physical);
        let spec = TorusField::zeros(g, Representation::Spectral);
        assert!(matches!(inverse_transform(&phys), Err(Error::WrongRepresentation { .. })));
        assert!(matches!(forward_transform(&spec), Err(Error::WrongRepresentation { .. })));
    }

    #[test]
    fn multiplier_on_single_modes() {
        let g = grid(2, 16);
        let m = |k: &[i64]| {
            let n2 = (k[0] * k[0] + k[1] * k[1]) as f64;
            if n2 == 0.0 {
                0.0
            } else {
                (k[0] * k[1]) as f64 / n2
            }
        };
        let out = apply_multiplier(&TorusField::exponential(g.clone(), &[1, 1]).unwrap(), &m);
        assert!((out.coefficient(&[1, 1]) - c(0.5, 0.0)).norm() < 1e-15);
        let out = apply_multiplier(&TorusField::exponential(g.clone(), &[1, -1]).unwrap(), &m);
        assert!((out.coefficient(&[1, -1]) - c(-0.5, 0.0)).norm() < 1e-15);

        let one = |k: &[i64]| if k.iter().all(|&x| x == 0) { 0.0 } else { 1.0 };
        let f = TorusField::from_modes(g, &[(vec![2, 1], c(1.0, 2.0)), (vec![-3, 0], c(0.5, 0.0))])
            .unwrap();
        let out = apply_multiplier(&f, &one);
        assert_eq!(out.values(), f.values());
    }

    #[test]
    fn derivatives_of_single_modes() {
        let g = grid(2, 16);
        let e10 = TorusField::exponential(g.clone(), &[1, 0]).unwrap();
        let d = spectral_derivative(&e10, &[0, 0]).unwrap();
        assert_eq!(d.values(), e10.values());
        let d = spectral_derivative(&e10, &[1, 0]).unwrap();
        assert!((d.coefficient(&[1, 0]) - c(0.0, 2.0 * PI)).norm() < 1e-14);
        let e11 = TorusField::exponential(g, &[1, 1]).unwrap();
        let d = spectral_derivative(&e11, &[1, 1]).unwrap();
        assert!((d.coefficient(&[1, 1]) - c(-4.0 * PI * PI, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn derivative_rejects_nyquist_energy() {
        let g = grid(1, 8);
        let f = TorusField::exponential(g, &[-4]).unwrap();
        assert!(matches!(spectral_derivative(&f, &[1]), Err(Error::Nyquist(_))));
        assert!(spectral_derivative(&f, &[0]).is_ok());
    }

    #[test]
    fn lp_norm_basic_values() {
        let g = grid(2, 8);
        let constant = TorusField::from_fn(g.clone(), |_| c(-3.0, 4.0));
        let mode = TorusField::exponential(g, &[2, -1]).unwrap();
        for p in [1.5, 2.0, 3.0, 4.0, 7.5] {
            assert!((lp_norm(&constant, p, 1).unwrap() - 5.0).abs() < 1e-13);
            assert!((lp_norm(&mode, p, 2).unwrap() - 1.0).abs() < 1e-13);
        }
        let cosine = TorusField::from_fn(grid(1, 16), |t| c(2.0 * (2.0 * PI * t[0]).cos(), 0.0));
        for os in 1..4 {
            assert!((lp_norm(&cosine, 2.0, os).unwrap() - 2f64.sqrt()).abs() < 1e-10);
        }
        assert!(matches!(lp_norm(&cosine, 1.0, 1), Err(Error::InvalidExponent(_))));
        assert!(matches!(lp_norm(&cosine, 0.5, 1), Err(Error::InvalidExponent(_))));
        assert!(matches!(lp_norm(&cosine, 2.0, 0), Err(Error::InvalidOversample)));
    }

    #[test]
    fn mean_zero_projection() {
        let g = grid(2, 8);
        let one = TorusField::from_fn(g.clone(), |_| c(1.0, 0.0));
        assert!(project_mean_zero(&one).max_abs() < 1e-14);
        let f = TorusField::from_modes(g.clone(), &[(vec![0, 0], c(3.0, 0.0)), (vec![1, 0], c(1.0, 0.0))])
            .unwrap();
        let e = TorusField::exponential(g, &[1, 0]).unwrap();
        assert_eq!(project_mean_zero(&f).values(), e.values());
        assert_eq!(project_mean_zero(&e).values(), e.values());
    }

    #[test]
    fn bandlimit_truncates_and_guards_nyquist() {
        let g = grid(1, 16);
        let f = TorusField::from_modes(g, &[(vec![2], c(1.0, 0.0)), (vec![6], c(1.0, 0.0))]).unwrap();
        let b = f.with_bandlimit(3).unwrap();
        assert_eq!(b.bandlimit(), Some(3));
        assert_eq!(b.coefficient(&[6]), c(0.0, 0.0));
        assert_eq!(b.coefficient(&[2]), c(1.0, 0.0));
        assert!(f.with_bandlimit(8).is_err());
        assert_eq!(f.effective_bandlimit(1e-12), 6);
    }

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::new(2, 7, true).is_err());
        assert!(TorusGrid::new(2, 0, true).is_err());
        assert!(TorusGrid::new(40, 8, true).is_err());
        let g = TorusGrid::new(0, 8, true).unwrap();
        assert_eq!(g.len(), 1);
        let s = TorusGrid::sign_safe(3, 8).unwrap();
        assert_eq!(s.shifts(), &[true, false, false]);
        assert_eq!(s.uniform_offset(), None);
    }

    #[test]
    fn translation_commutes_with_multiplier() {
        let g = grid(2, 8);
        let f = TorusField::from_fn(g, |t| c((2.0 * PI * (t[0] + 2.0 * t[1])).sin(), t[0] * t[1]));
        let m = |k: &[i64]| (k[0] - 2 * k[1]) as f64 / (1.0 + (k[0] * k[0] + k[1] * k[1]) as f64);
        let a = apply_multiplier(&f.translated(&[3, -1]).unwrap(), &m).to_physical();
        let b = apply_multiplier(&f, &m).translated(&[3, -1]).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() < 1e-13);
        }
    }
}
