//! Explicit witnesses: square-wave trigonometric polynomials, their lifts
//! `a(b.t)` to `T^n`, eigen-witness pairs, layered stacks on `T^{rn}`,
//! Bourgain's frequency shift and the end-to-end lower-bound pipeline.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::martingale::{transform_ratio, umd_lower_search, WalshMartingale};
use crate::symbols::{DerivativeFamily, HomogeneousSymbol};
use crate::torus::{
    abs_pow, apply_multiplier, check_exponent, pairwise_sum, zero_pad, FourierSymbol, TorusField,
    TorusGrid,
};

/// Default number of midpoint nodes used to measure `||sgn - a||_p`.
pub const SIGN_QUADRATURE_POINTS: usize = 1 << 17;

/// Largest total dimension `r n` a stack may have.
pub const MAX_STACK_DIM: usize = 6;

/// Finite, mean-zero trigonometric polynomial on `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly1D {
    coefficients: BTreeMap<i64, Complex64>,
}

impl TrigPoly1D {
    pub fn new(coefficients: BTreeMap<i64, Complex64>) -> Result<Self> {
        if coefficients.contains_key(&0) {
            return Err(Error::Constraint("a mean-zero polynomial has no coefficient at 0".into()));
        }
        if coefficients.values().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("polynomial coefficients".into()));
        }
        Ok(Self { coefficients })
    }

    /// `e_l(theta) = exp(2 pi i l theta)`.
    pub fn mode(l: i64) -> Result<Self> {
        Self::new(BTreeMap::from([(l, Complex64::new(1.0, 0.0))]))
    }

    pub fn coefficients(&self) -> &BTreeMap<i64, Complex64> {
        &self.coefficients
    }

    pub fn coefficient(&self, l: i64) -> Complex64 {
        self.coefficients.get(&l).copied().unwrap_or_default()
    }

    pub fn degree(&self) -> u64 {
        self.coefficients.keys().map(|l| l.unsigned_abs()).max().unwrap_or(0)
    }

    /// `c(-l) = conj c(l)` for every `l`, to the given tolerance.
    pub fn is_real(&self, tol: f64) -> bool {
        self.coefficients
            .iter()
            .all(|(&l, c)| (self.coefficient(-l) - c.conj()).norm() <= tol)
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        self.coefficients
            .iter()
            .map(|(&l, c)| c * Complex64::from_polar(1.0, 2.0 * PI * l as f64 * theta))
            .sum()
    }
}

/// Fourier partial sum of the square wave `sgn` of degree `d`:
/// `sum_{odd l <= d} 4/(pi l) sin(2 pi l theta)`.
pub fn square_wave_poly(d: u32) -> Result<TrigPoly1D> {
    if d == 0 {
        return Err(Error::Constraint("degree must be at least 1".into()));
    }
    let mut c = BTreeMap::new();
    for l in (1..=d as i64).step_by(2) {
        let v = 2.0 / (PI * l as f64);
        c.insert(l, Complex64::new(0.0, -v));
        c.insert(-l, Complex64::new(0.0, v));
    }
    TrigPoly1D::new(c)
}

/// `||sgn - a||_{L^p(T)}` by the midpoint rule on `q` cells. The jumps of
/// `sgn` fall on cell boundaries when `q` is even.
pub fn sign_distance(a: &TrigPoly1D, p: f64, q: usize) -> Result<f64> {
    check_exponent(p)?;
    if q < 2 || q % 2 != 0 {
        return Err(Error::Quadrature(format!("node count {q} must be even and at least 2")));
    }
    let terms: Vec<(f64, Complex64)> = a
        .coefficients
        .iter()
        .map(|(&l, &c)| (2.0 * PI * l as f64, c))
        .collect();
    let vals: Vec<f64> = (0..q)
        .into_par_iter()
        .map(|j| {
            let theta = (j as f64 + 0.5) / q as f64 - 0.5;
            let s = if theta > 0.0 { 1.0 } else { -1.0 };
            let v: Complex64 = terms
                .iter()
                .map(|&(w, c)| c * Complex64::from_polar(1.0, w * theta))
                .sum();
            abs_pow(Complex64::new(s, 0.0) - v, p)
        })
        .collect();
    Ok((pairwise_sum(vals.into_iter()) / q as f64).powf(1.0 / p))
}

/// `||sgn - a||_2` for the degree-`d` partial sum, from Parseval:
/// `1 - (8/pi^2) sum_{odd l <= d} l^{-2}`.
pub fn square_wave_l2_gap(d: u32) -> f64 {
    let s: f64 = (1..=d as u64).step_by(2).map(|l| 1.0 / (l * l) as f64).sum();
    (1.0 - 8.0 / (PI * PI) * s).max(0.0).sqrt()
}

/// `a_b(t) = a(b.t)` as a spectral field: coefficient `a^(l)` sits at `l b`.
pub fn lift_to_torus(a: &TrigPoly1D, b: &[i64], grid: &TorusGrid) -> Result<TorusField> {
    if b.len() != grid.dim() || b.iter().any(|&x| x != 1 && x != -1) {
        return Err(Error::ShapeMismatch(format!(
            "{b:?} is not a sign vector of length {}",
            grid.dim()
        )));
    }
    let deg = a.degree() as usize;
    if deg > grid.max_bandlimit() {
        return Err(Error::Nyquist(format!(
            "degree {deg} needs more than M = {} points per axis",
            grid.points_per_axis()
        )));
    }
    let modes: Vec<(Vec<i64>, Complex64)> = a
        .coefficients
        .iter()
        .map(|(&l, &c)| (b.iter().map(|&x| l * x).collect(), c))
        .collect();
    TorusField::from_modes(grid.clone(), &modes)?.with_bandlimit(deg)
}

/// `(a^+, a^-)` with `a^+ = a_{(1,..,1)}` and `a^- = a_{b_F}`.
pub fn eigen_witness_pair(
    fam: &DerivativeFamily,
    a: &TrigPoly1D,
    grid: &TorusGrid,
) -> Result<(TorusField, TorusField)> {
    if !fam.is_normalized() {
        return Err(Error::InvalidFamily(
            "eigen-witnesses need |beta| even and sum_F beta odd".into(),
        ));
    }
    if grid.dim() != fam.n {
        return Err(Error::ShapeMismatch(format!(
            "grid has dimension {}, family has n = {}",
            grid.dim(),
            fam.n
        )));
    }
    let set = fam.parity_set.as_ref().expect("normalized families carry F");
    let plus = lift_to_torus(a, &vec![1; fam.n], grid)?;
    let minus = lift_to_torus(a, &set.sign_vector(fam.n), grid)?;
    Ok((plus, minus))
}

/// `sum_k |f^(k)|`.
pub fn a_norm(f: &TorusField) -> f64 {
    pairwise_sum(f.to_spectral().values().iter().map(|c| c.norm()))
}

/// `sum_l sigma_l zeta_l(t_l) Phi_l(t_1..t_{l-1})` on `T^{rn}`, kept in
/// factored form. Norms stream over the product grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedField {
    base: TorusGrid,
    zetas: Vec<TorusField>,
    phis: Vec<TorusField>,
    signs: Vec<i8>,
}

/// Builds a stack; `signs = None` means all `+1`.
pub fn bourgain_stack(
    zetas: Vec<TorusField>,
    phis: Vec<TorusField>,
    signs: Option<Vec<i8>>,
) -> Result<StackedField> {
    let r = zetas.len();
    if r == 0 || phis.len() != r {
        return Err(Error::ShapeMismatch(format!(
            "{} zetas and {} phis; need equal nonzero counts",
            r,
            phis.len()
        )));
    }
    let base = zetas[0].grid().clone();
    if base.dim() == 0 {
        return Err(Error::ShapeMismatch("zetas must live on T^n with n >= 1".into()));
    }
    if r * base.dim() > MAX_STACK_DIM {
        return Err(Error::TooLarge(format!(
            "stack dimension {} exceeds {MAX_STACK_DIM}",
            r * base.dim()
        )));
    }
    let mut lower = TorusGrid::with_shifts(base.points_per_axis(), vec![])?;
    for l in 0..r {
        if zetas[l].grid() != &base {
            return Err(Error::ShapeMismatch(format!("zeta_{} is on a different grid", l + 1)));
        }
        if phis[l].grid() != &lower {
            return Err(Error::ShapeMismatch(format!(
                "Phi_{} must live on T^{} with the base grid on every factor",
                l + 1,
                l * base.dim()
            )));
        }
        if l + 1 < r {
            lower = lower.product(&base)?;
        }
    }
    let signs = signs.unwrap_or_else(|| vec![1; r]);
    if signs.len() != r || signs.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::ShapeMismatch(format!("{signs:?} is not a sign vector of length {r}")));
    }
    Ok(StackedField {
        base,
        zetas: zetas.iter().map(|z| z.to_physical()).collect(),
        phis: phis.iter().map(|p| p.to_physical()).collect(),
        signs,
    })
}

impl StackedField {
    pub fn layers(&self) -> usize {
        self.zetas.len()
    }

    pub fn base_grid(&self) -> &TorusGrid {
        &self.base
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn zetas(&self) -> &[TorusField] {
        &self.zetas
    }

    pub fn phis(&self) -> &[TorusField] {
        &self.phis
    }

    pub fn with_signs(&self, signs: Vec<i8>) -> Result<Self> {
        bourgain_stack(self.zetas.clone(), self.phis.clone(), Some(signs))
    }

    /// Grid of the assembled field, `T^{rn}`.
    pub fn grid(&self) -> Result<TorusGrid> {
        let mut g = self.base.clone();
        for _ in 1..self.layers() {
            g = g.product(&self.base)?;
        }
        Ok(g)
    }

    /// Value at a multi-index of the product grid.
    pub fn value_at(&self, idx: &[usize]) -> Complex64 {
        let n = self.base.dim();
        let m = self.base.points_per_axis();
        let mut acc = Complex64::default();
        let mut pfx = 0;
        for l in 0..self.layers() {
            let block = &idx[l * n..(l + 1) * n];
            let z = block.iter().fold(0, |a, &j| a * m + j);
            acc += self.signs[l] as f64 * self.zetas[l].values()[z] * self.phis[l].values()[pfx];
            pfx = pfx * m.pow(n as u32) + z;
        }
        acc
    }

    /// Materializes the field on `T^{rn}`.
    pub fn assemble(&self) -> Result<TorusField> {
        let grid = self.grid()?;
        let mut idx = vec![0; grid.dim()];
        let values = (0..grid.len())
            .map(|flat| {
                grid.unravel(flat, &mut idx);
                self.value_at(&idx)
            })
            .collect();
        TorusField::from_physical(grid, values)
    }

    /// `L^p` norm of the assembled trigonometric polynomial, sampled on the
    /// grid refined `oversample` times per axis, without materializing it.
    pub fn lp_norm(&self, p: f64, oversample: usize) -> Result<f64> {
        check_exponent(p)?;
        let refine = |f: &TorusField| -> Result<Vec<Complex64>> {
            Ok(zero_pad(f, oversample)?.to_physical().into_values())
        };
        let zetas: Vec<Vec<Complex64>> = self.zetas.iter().map(refine).collect::<Result<_>>()?;
        let phis: Vec<Vec<Complex64>> = self.phis.iter().map(refine).collect::<Result<_>>()?;
        let block = zetas[0].len();
        let r = self.layers();
        let total = (block as f64).powi(r as i32);
        if total > 1e11 {
            return Err(Error::TooLarge(format!("{total} quadrature points")));
        }
        let ctx = StreamCtx {
            zetas: &zetas,
            phis: &phis,
            signs: &self.signs,
            block,
            p,
        };
        let partial: Vec<f64> = (0..block)
            .into_par_iter()
            .map(|i| {
                let acc = self.signs[0] as f64 * zetas[0][i] * phis[0][0];
                ctx.sum(1, i, acc)
            })
            .collect();
        Ok((pairwise_sum(partial.into_iter()) / total).powf(1.0 / p))
    }
}

struct StreamCtx<'a> {
    zetas: &'a [Vec<Complex64>],
    phis: &'a [Vec<Complex64>],
    signs: &'a [i8],
    block: usize,
    p: f64,
}

impl StreamCtx<'_> {
    fn sum(&self, level: usize, pfx: usize, acc: Complex64) -> f64 {
        if level == self.zetas.len() {
            return abs_pow(acc, self.p);
        }
        let phi = self.signs[level] as f64 * self.phis[level][pfx];
        let zeta = &self.zetas[level];
        if level + 1 == self.zetas.len() {
            let mut s = 0.0;
            for z in zeta {
                s += abs_pow(acc + z * phi, self.p);
            }
            return s;
        }
        let mut s = 0.0;
        for (i, z) in zeta.iter().enumerate() {
            s += self.sum(level + 1, pfx * self.block + i, acc + z * phi);
        }
        s
    }
}

/// `(1/N) ||stack_signed||_p / ||stack_plus||_p`, a lower bound for the
/// best constant of the family.
pub fn theorem_lower_bound(
    fam: &DerivativeFamily,
    plus: &StackedField,
    signed: &StackedField,
    oversample: usize,
) -> Result<f64> {
    if plus.signs.iter().any(|&s| s != 1) {
        return Err(Error::Constraint("the reference stack must have all signs +1".into()));
    }
    if plus.zetas != signed.zetas || plus.phis != signed.phis {
        return Err(Error::Constraint("stacks must share their layers".into()));
    }
    let den = plus.lp_norm(fam.p, oversample)?;
    if den == 0.0 {
        return Err(Error::ZeroDenominator("the unsigned stack vanishes".into()));
    }
    let num = signed.lp_norm(fam.p, oversample)?;
    Ok(num / (fam.len() as f64 * den))
}

/// `M_1 = 4B + 1`, `M_l = M_{l-1} (4 B r + 1)`.
pub fn default_scales(b: u64, r: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(r);
    let mut m = 4 * b + 1;
    for _ in 0..r {
        out.push(m);
        m *= 4 * b * r as u64 + 1;
    }
    out
}

/// Bourgain's transformation `t -> f(tbar + Mbar (x) t)` of a field on
/// `T^{ln}`: the coefficient at `(s, k)` moves to `Mbar_{l-1} . s + M_l k`
/// and picks up the phase `e_{(s,k)}(tbar)`.
pub fn bourgain_shift(f: &TorusField, mbar: &[u64], tbar: &[f64]) -> Result<TorusField> {
    let l = mbar.len();
    let dim = f.grid().dim();
    if l == 0 || dim % l != 0 || dim == 0 {
        return Err(Error::ShapeMismatch(format!(
            "field dimension {dim} is not a positive multiple of {l} scales"
        )));
    }
    if tbar.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "base point has length {}, expected {dim}",
            tbar.len()
        )));
    }
    if mbar[0] == 0 || mbar.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Constraint(format!("scales {mbar:?} must be positive and increasing")));
    }
    let n = dim / l;
    let spec = f.to_spectral();
    let grid = spec.grid();
    let mut out: Vec<(Vec<i64>, Complex64)> = Vec::new();
    let mut seen: HashMap<Vec<i64>, Vec<i64>> = HashMap::new();
    let mut top: i64 = 0;
    for (flat, c) in spec.values().iter().enumerate() {
        if *c == Complex64::default() {
            continue;
        }
        let kk = grid.frequency_vector(flat);
        let mut freq = vec![0i64; n];
        for (blk, &scale) in mbar.iter().enumerate() {
            for a in 0..n {
                freq[a] += scale as i64 * kk[blk * n + a];
            }
        }
        if let Some(prev) = seen.insert(freq.clone(), kk.clone()) {
            return Err(Error::FrequencyCollision(format!(
                "{prev:?} and {kk:?} both map to {freq:?}"
            )));
        }
        let phase: f64 = kk.iter().zip(tbar).map(|(&k, &t)| k as f64 * t).sum();
        top = top.max(freq.iter().map(|x| x.abs()).max().unwrap_or(0));
        out.push((freq, c * Complex64::from_polar(1.0, 2.0 * PI * phase)));
    }
    let m = (2 * top as usize + 1).next_power_of_two().max(2);
    let out_grid = TorusGrid::with_shifts(m, grid.shifts()[..n].to_vec())?;
    TorusField::from_modes(out_grid, &out)?.with_bandlimit(top as usize)
}

/// The tensor extension `I (x) T_m` on `T^{ln}`: multiplies the coefficient
/// at `(s, k)` by `m(k)`.
pub fn tensor_multiplier(f: &TorusField, sym: &HomogeneousSymbol) -> Result<TorusField> {
    let n = sym.dim();
    let dim = f.grid().dim();
    if dim == 0 || dim % n != 0 {
        return Err(Error::ShapeMismatch(format!(
            "field dimension {dim} is not a multiple of the symbol dimension {n}"
        )));
    }
    Ok(apply_multiplier(f, &|k: &[i64]| sym.value(&k[dim - n..])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommutationReport {
    /// `||T_m f~ - (I (x) T_m f)~||_A`.
    pub error_a: f64,
    /// `(|Mbar_{l-1}| max|s| / M_l) sup|grad m| ||f||_A`.
    pub bound: f64,
    pub sup_gradient: f64,
    pub max_s: f64,
    pub f_a_norm: f64,
}

/// Measures the commutation error of Bourgain's transformation against
/// `T_m` and the mean-value bound for it. `sup|grad m|` is sampled on
/// `1/2 <= |z| <= 4` with `10^4` points and a `1.1` safety factor.
pub fn commutation_check(
    f: &TorusField,
    mbar: &[u64],
    tbar: &[f64],
    sym: &HomogeneousSymbol,
) -> Result<CommutationReport> {
    let l = mbar.len();
    let n = sym.dim();
    let dim = f.grid().dim();
    if dim != l * n {
        return Err(Error::ShapeMismatch(format!(
            "field dimension {dim} differs from {l} layers of dimension {n}"
        )));
    }
    let spec = f.to_spectral();
    let mlast = mbar[l - 1] as f64;
    let mprev: f64 = mbar[..l - 1].iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
    let mut max_s: f64 = 0.0;
    for (flat, c) in spec.values().iter().enumerate() {
        if *c == Complex64::default() {
            continue;
        }
        let kk = spec.grid().frequency_vector(flat);
        let (s, k) = kk.split_at(dim - n);
        if k.iter().all(|&x| x == 0) {
            return Err(Error::Constraint(format!(
                "coefficient at {kk:?} is not mean-zero in the last variable"
            )));
        }
        let knorm = k.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
        let mut shift = vec![0.0; n];
        for (blk, &scale) in mbar[..l - 1].iter().enumerate() {
            for a in 0..n {
                shift[a] += scale as f64 * s[blk * n + a] as f64;
            }
        }
        let rel = shift.iter().map(|x| x * x).sum::<f64>().sqrt() / (mlast * knorm);
        if rel > 0.5 {
            return Err(Error::Constraint(format!(
                "scales too slow: frequency {kk:?} moves by {rel} relative to M_l |k|"
            )));
        }
        max_s = max_s.max(s.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt());
    }
    let shifted = bourgain_shift(f, mbar, tbar)?;
    let lhs = apply_multiplier(&shifted, sym);
    let rhs = bourgain_shift(&tensor_multiplier(f, sym)?, mbar, tbar)?;
    if lhs.grid() != rhs.grid() {
        return Err(Error::ShapeMismatch("shifted fields landed on different grids".into()));
    }
    let diff = lhs.combine(Complex64::new(1.0, 0.0), &rhs, Complex64::new(-1.0, 0.0))?;
    let sup_gradient = sym.sup_gradient_sampled(10_000, 1.1);
    let f_a_norm = a_norm(f);
    Ok(CommutationReport {
        error_a: a_norm(&diff),
        bound: mprev * max_s / mlast * sup_gradient * f_a_norm,
        sup_gradient,
        max_s,
        f_a_norm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineOptions {
    pub r: usize,
    pub degree: u32,
    pub grid_m: usize,
    pub oversample: usize,
    pub walsh_budget: usize,
    pub seed: u64,
    /// Overrides the signs of the Walsh witness.
    pub sigma: Option<Vec<i8>>,
    pub quadrature_points: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            r: 2,
            degree: 63,
            grid_m: 128,
            oversample: 1,
            walsh_budget: 2000,
            seed: 0,
            sigma: None,
            quadrature_points: SIGN_QUADRATURE_POINTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineReport {
    pub family: DerivativeFamily,
    pub options: PipelineOptions,
    /// Measured `||sgn - a||_p`.
    pub delta: f64,
    /// `||sgn - a||_2` from Parseval.
    pub delta_l2_analytic: f64,
    /// Measured `||sgn - a||_2`.
    pub delta_l2_measured: f64,
    pub sigma: Vec<i8>,
    pub b_vectors: Vec<Vec<i64>>,
    pub walsh: WalshMartingale,
    pub walsh_ratio: f64,
    pub zeta_norms: Vec<f64>,
    pub phi_norms: Vec<f64>,
    pub norm_plus: f64,
    pub norm_signed: f64,
    pub lower_bound: f64,
}

/// Square wave, eigen-witnesses, Walsh witness and stacks, ending in
/// [`theorem_lower_bound`].
pub fn run_pipeline(fam: &DerivativeFamily, opts: &PipelineOptions) -> Result<PipelineReport> {
    let p = fam.p;
    let n = fam.n;
    if opts.r == 0 {
        return Err(Error::Constraint("r must be at least 1".into()));
    }
    let a = square_wave_poly(opts.degree)?;
    let delta = sign_distance(&a, p, opts.quadrature_points)?;
    let delta_l2_measured = sign_distance(&a, 2.0, opts.quadrature_points)?;
    let grid = TorusGrid::sign_safe(n, opts.grid_m)?;
    let (aplus, aminus) = eigen_witness_pair(fam, &a, &grid)?;
    let set = fam.parity_set.as_ref().expect("normalized");

    let search = umd_lower_search(opts.r, p, opts.walsh_budget, opts.seed)?;
    let walsh = search.martingale;
    let sigma = match &opts.sigma {
        Some(s) => s.clone(),
        None => search.sigma,
    };
    let walsh_ratio = transform_ratio(&walsh, &sigma, p)?;

    let mut zetas = Vec::with_capacity(opts.r);
    let mut b_vectors = Vec::with_capacity(opts.r);
    for &s in &sigma {
        if s == 1 {
            zetas.push(aplus.to_physical());
            b_vectors.push(vec![1; n]);
        } else {
            zetas.push(aminus.to_physical());
            b_vectors.push(set.sign_vector(n));
        }
    }
    let phis = (0..opts.r)
        .map(|l| walsh_phi(&walsh.walsh_coefficients(l), &zetas[..l], opts.grid_m))
        .collect::<Result<Vec<_>>>()?;
    let signed = bourgain_stack(zetas.clone(), phis.clone(), Some(sigma.clone()))?;
    let plus = signed.with_signs(vec![1; opts.r])?;
    let norm_plus = plus.lp_norm(p, opts.oversample)?;
    let norm_signed = signed.lp_norm(p, opts.oversample)?;
    if norm_plus == 0.0 {
        return Err(Error::ZeroDenominator("the unsigned stack vanishes".into()));
    }
    let lower_bound = norm_signed / (fam.len() as f64 * norm_plus);
    let zeta_norms = zetas
        .iter()
        .map(|z| crate::torus::lp_norm(z, p, opts.oversample.max(1)))
        .collect::<Result<_>>()?;
    let phi_norms = phis
        .iter()
        .map(|f| crate::torus::lp_norm(f, p, 1))
        .collect::<Result<_>>()?;
    Ok(PipelineReport {
        family: fam.clone(),
        options: opts.clone(),
        delta,
        delta_l2_analytic: square_wave_l2_gap(opts.degree),
        delta_l2_measured,
        sigma,
        b_vectors,
        walsh,
        walsh_ratio,
        zeta_norms,
        phi_norms,
        norm_plus,
        norm_signed,
        lower_bound,
    })
}

/// `Phi(t_1..t_k) = sum_S c_S prod_{i in S} zeta_i(t_i)` on `T^{kn}`.
fn walsh_phi(coeffs: &[f64], zetas: &[TorusField], m: usize) -> Result<TorusField> {
    let k = zetas.len();
    let grid = if k == 0 {
        TorusGrid::with_shifts(m, vec![])?
    } else {
        let mut g = zetas[0].grid().clone();
        for z in &zetas[1..] {
            g = g.product(z.grid())?;
        }
        g
    };
    let block = zetas.first().map(|z| z.values().len()).unwrap_or(1);
    let mut idx = vec![0; k];
    let values = (0..grid.len())
        .map(|flat| {
            let mut rem = flat;
            for slot in idx.iter_mut().rev() {
                *slot = rem % block;
                rem /= block;
            }
            coeffs
                .iter()
                .enumerate()
                .map(|(s, &c)| {
                    let mut v = Complex64::new(c, 0.0);
                    for (i, z) in zetas.iter().enumerate() {
                        if s >> i & 1 == 1 {
                            v *= z.values()[idx[i]];
                        }
                    }
                    v
                })
                .sum()
        })
        .collect();
    TorusField::from_physical(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::{make_symbol, MultiIndex};
    use crate::torus::lp_norm;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cor12(p: f64) -> DerivativeFamily {
        DerivativeFamily::new(
            MultiIndex::new(vec![1, 1]),
            vec![MultiIndex::new(vec![2, 0]), MultiIndex::new(vec![0, 2])],
            p,
        )
        .unwrap()
        .with_found_parity_set()
        .unwrap()
    }

    #[test]
    fn square_wave_degree_one() {
        let a = square_wave_poly(1).unwrap();
        assert_eq!(a.coefficients().len(), 2);
        assert!((a.coefficient(1) - c(0.0, -2.0 / PI)).norm() < 1e-16);
        assert_eq!(a.coefficient(0), c(0.0, 0.0));
        assert!(a.is_real(0.0));
        let th = 0.13;
        assert!((a.eval(th).re - 4.0 / PI * (2.0 * PI * th).sin()).abs() < 1e-14);
        assert!(square_wave_poly(0).is_err());
    }

    #[test]
    fn l2_gap_matches_quadrature() {
        for d in [1, 5, 63] {
            let a = square_wave_poly(d).unwrap();
            let measured = sign_distance(&a, 2.0, SIGN_QUADRATURE_POINTS).unwrap();
            let exact = square_wave_l2_gap(d);
            assert!((measured * measured - exact * exact).abs() < 1e-6, "{d}");
        }
    }

    #[test]
    fn lifts() {
        let g = TorusGrid::new(2, 16, true).unwrap();
        let f = lift_to_torus(&TrigPoly1D::mode(1).unwrap(), &[1, 1], &g).unwrap();
        assert_eq!(f.values(), TorusField::exponential(g.clone(), &[1, 1]).unwrap().values());

        let a = square_wave_poly(5).unwrap();
        let lifted = lift_to_torus(&a, &[1, 1], &g).unwrap().to_physical();
        for flat in 0..g.len() {
            let t = g.point(flat);
            assert!((lifted.values()[flat] - a.eval(t[0] + t[1])).norm() < 1e-12);
        }
        let b = lift_to_torus(&square_wave_poly(1).unwrap(), &[1, -1], &g).unwrap();
        assert!(b.coefficient(&[1, -1]).norm() > 0.0 && b.coefficient(&[-1, 1]).norm() > 0.0);
        assert!((a_norm(&lifted) - 4.0 / PI * (1.0 + 1.0 / 3.0 + 0.2)).abs() < 1e-12);
        assert!(lift_to_torus(&square_wave_poly(9).unwrap(), &[1, 1], &g).is_err());
    }

    #[test]
    fn eigen_relations_for_the_mixed_family() {
        let fam = cor12(4.0);
        let g = TorusGrid::new(2, 32, true).unwrap();
        let a = square_wave_poly(7).unwrap();
        let (plus, minus) = eigen_witness_pair(&fam, &a, &g).unwrap();
        let m = fam.symbol();
        let check = |f: &TorusField, sym: &HomogeneousSymbol, lambda: f64| {
            let out = apply_multiplier(f, sym);
            let diff = out.combine(c(1.0, 0.0), f, c(-lambda, 0.0)).unwrap();
            assert!(diff.l2_norm_spectral() <= 1e-12 * f.l2_norm_spectral());
        };
        check(&plus, &m, 0.5);
        check(&minus, &m, -0.5);
        for mj in fam.alpha_symbols() {
            check(&plus, &mj, 0.5);
            check(&minus, &mj, 0.5);
        }
        let raw = DerivativeFamily::new(MultiIndex::new(vec![1, 0]), vec![MultiIndex::new(vec![0, 1])], 2.0)
            .unwrap()
            .with_found_parity_set()
            .unwrap();
        assert!(eigen_witness_pair(&raw, &a, &g).is_err());
    }

    #[test]
    fn single_layer_stack_is_the_signed_zeta() {
        let g = TorusGrid::new(2, 8, true).unwrap();
        let z = TorusField::exponential(g.clone(), &[1, 2]).unwrap();
        let one = TorusField::from_physical(TorusGrid::with_shifts(8, vec![]).unwrap(), vec![c(1.0, 0.0)])
            .unwrap();
        let st = bourgain_stack(vec![z.clone()], vec![one], Some(vec![-1])).unwrap();
        let f = st.assemble().unwrap();
        let expect = z.to_physical().scaled(c(-1.0, 0.0));
        for (x, y) in f.values().iter().zip(expect.values()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn two_layer_stack_support_and_norms() {
        let g = TorusGrid::new(1, 8, true).unwrap();
        let z1 = TorusField::exponential(g.clone(), &[1]).unwrap();
        let z2 = TorusField::exponential(g.clone(), &[2]).unwrap().scaled(c(3.0, 0.0));
        let phi1 = TorusField::from_physical(TorusGrid::with_shifts(8, vec![]).unwrap(), vec![c(2.0, 0.0)])
            .unwrap();
        let phi2 = TorusField::exponential(g.clone(), &[-3]).unwrap();
        let st = bourgain_stack(vec![z1, z2], vec![phi1, phi2], None).unwrap();
        let spec = st.assemble().unwrap().to_spectral();
        let lines: Vec<Vec<i64>> = spec
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > 1e-12)
            .map(|(i, _)| spec.grid().frequency_vector(i))
            .collect();
        assert_eq!(lines, vec![vec![1, 0], vec![-3, 2]]);
        assert!((spec.coefficient(&[1, 0]) - c(2.0, 0.0)).norm() < 1e-13);
        assert!((spec.coefficient(&[-3, 2]) - c(3.0, 0.0)).norm() < 1e-13);
        let l2 = st.lp_norm(2.0, 1).unwrap();
        assert!((l2 * l2 - (4.0 + 9.0)).abs() < 1e-12);
        let assembled = lp_norm(&st.assemble().unwrap(), 3.0, 1).unwrap();
        assert!((st.lp_norm(3.0, 1).unwrap() - assembled).abs() < 1e-12);
    }

    #[test]
    fn stack_pointwise_formula() {
        let g = TorusGrid::sign_safe(2, 8).unwrap();
        let a = square_wave_poly(3).unwrap();
        let z1 = lift_to_torus(&a, &[1, 1], &g).unwrap().to_physical();
        let z2 = lift_to_torus(&a, &[-1, 1], &g).unwrap().to_physical();
        let phi1 = TorusField::from_physical(TorusGrid::with_shifts(8, vec![]).unwrap(), vec![c(0.7, 0.0)])
            .unwrap();
        let phi2 = z1.scaled(c(0.5, 0.0));
        let st = bourgain_stack(vec![z1.clone(), z2.clone()], vec![phi1, phi2], Some(vec![1, -1])).unwrap();
        let f = st.assemble().unwrap();
        for flat in (0..f.grid().len()).step_by(97) {
            let t = f.grid().point(flat);
            let u1 = a.eval(t[0] + t[1]);
            let u2 = a.eval(-t[2] + t[3]);
            let expect = u1 * 0.7 - u2 * u1 * 0.5;
            assert!((f.values()[flat] - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn lower_bound_trivial_cases() {
        let fam = cor12(3.0);
        let g = TorusGrid::sign_safe(2, 8).unwrap();
        let a = square_wave_poly(3).unwrap();
        let (plus, minus) = eigen_witness_pair(&fam, &a, &g).unwrap();
        let phi1 = TorusField::from_physical(TorusGrid::with_shifts(8, vec![]).unwrap(), vec![c(1.0, 0.0)])
            .unwrap();
        let phi2 = plus.to_physical().scaled(c(0.3, 0.0));
        let st = bourgain_stack(vec![plus, minus], vec![phi1, phi2], None).unwrap();
        assert_eq!(theorem_lower_bound(&fam, &st, &st, 1).unwrap(), 0.5);
        let signed = st.with_signs(vec![1, -1]).unwrap();
        let mut fam2 = fam.clone();
        fam2.p = 2.0;
        assert!((theorem_lower_bound(&fam2, &st, &signed, 1).unwrap() - 0.5).abs() < 1e-12);
        assert!(theorem_lower_bound(&fam, &signed, &st, 1).is_err());
    }

    #[test]
    fn shift_single_layer_and_injectivity() {
        let g = TorusGrid::new(1, 8, true).unwrap();
        let f = TorusField::exponential(g, &[2]).unwrap();
        let out = bourgain_shift(&f, &[5], &[0.1]).unwrap();
        let expect = Complex64::from_polar(1.0, 2.0 * PI * 0.2);
        assert!((out.coefficient(&[10]) - expect).norm() < 1e-14);
        assert!((a_norm(&out) - 1.0).abs() < 1e-15);

        let mut seen = std::collections::HashSet::new();
        for s in -2i64..=2 {
            for k in [-2i64, -1, 1, 2] {
                assert!(seen.insert(5 * s + 25 * k));
            }
        }
        assert_eq!(seen.len(), 20);
        assert_eq!(default_scales(2, 2), vec![9, 153]);
    }

    #[test]
    fn shift_collision_is_detected() {
        let g = TorusGrid::new(2, 8, true).unwrap();
        let f = TorusField::from_modes(g, &[(vec![2, 0], c(1.0, 0.0)), (vec![0, 1], c(1.0, 0.0))])
            .unwrap();
        assert!(matches!(
            bourgain_shift(&f, &[1, 2], &[0.0, 0.0]),
            Err(Error::FrequencyCollision(_))
        ));
    }

    #[test]
    fn commutation_bound_holds() {
        let sym = make_symbol(&MultiIndex::new(vec![1, 1])).unwrap();
        let g = TorusGrid::new(4, 8, true).unwrap();
        let f = TorusField::from_modes(
            g,
            &[
                (vec![1, 0, 1, 1], c(1.0, 0.0)),
                (vec![-2, 1, 2, -1], c(0.0, 0.5)),
                (vec![0, 2, -1, 2], c(-0.3, 0.2)),
            ],
        )
        .unwrap();
        let mbar = default_scales(2, 2);
        let rep = commutation_check(&f, &mbar, &[0.1, -0.2, 0.3, 0.05], &sym).unwrap();
        assert!(rep.error_a > 0.0);
        assert!(rep.error_a <= rep.bound, "{rep:?}");
        let shifted = bourgain_shift(&f, &mbar, &[0.1, -0.2, 0.3, 0.05]).unwrap();
        assert!((a_norm(&shifted) - a_norm(&f)).abs() < 1e-14);
    }
}
