//! Limits behind the transference between `R^n` and `T^n`: scaling of
//! Gaussian-windowed periodic functions, Poisson summation, the pairing
//! identity for multipliers, and the dyadic block bounds.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbols::HomogeneousSymbol;
use crate::torus::{
    abs_pow, check_exponent, lp_norm, pairwise_sum, zero_pad, TorusField, TorusGrid, MAX_POINTS,
};

/// `A exp(-pi a |x|^2)` on `R^n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub amplitude: f64,
    pub a: f64,
}

impl Gaussian {
    pub fn new(amplitude: f64, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !amplitude.is_finite() {
            return Err(Error::Constraint(format!("invalid Gaussian ({amplitude}, {a})")));
        }
        Ok(Self { amplitude, a })
    }

    /// `exp(-pi |x|^2 / p)`.
    pub fn window(p: f64) -> Self {
        Self {
            amplitude: 1.0,
            a: 1.0 / p,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.amplitude * (-std::f64::consts::PI * self.a * r2).exp()
    }

    /// Fourier transform with the `exp(-2 pi i x xi)` convention.
    pub fn hat(&self, xi: &[f64]) -> f64 {
        let r2: f64 = xi.iter().map(|v| v * v).sum();
        self.amplitude
            * self.a.powf(-0.5 * xi.len() as f64)
            * (-std::f64::consts::PI * r2 / self.a).exp()
    }

    pub fn lp_norm(&self, p: f64, n: usize) -> f64 {
        self.amplitude.abs() * (self.a * p).powf(-(n as f64) / (2.0 * p))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepResult {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub targets: Vec<f64>,
    pub errors: Vec<f64>,
    pub tail_bounds: Vec<f64>,
    pub fitted_order: Option<f64>,
}

impl SweepResult {
    fn new(epsilons: &[f64], values: Vec<f64>, targets: Vec<f64>, tails: Vec<f64>) -> Result<Self> {
        let errors: Vec<f64> = values.iter().zip(&targets).map(|(v, t)| (v - t).abs()).collect();
        if errors.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("sweep error".into()));
        }
        let pts: Vec<(f64, f64)> = epsilons
            .iter()
            .zip(&errors)
            .filter(|(_, &e)| e > 0.0)
            .map(|(&x, &e)| (x.ln(), e.ln()))
            .collect();
        let fitted_order = (pts.len() >= 2).then(|| linear_fit(&pts).slope);
        Ok(Self {
            epsilons: epsilons.to_vec(),
            values,
            targets,
            errors,
            tail_bounds: tails,
            fitted_order,
        })
    }

    pub fn final_relative_error(&self) -> f64 {
        let i = self.errors.len() - 1;
        let t = self.targets[i].abs();
        if t == 0.0 {
            self.errors[i]
        } else {
            self.errors[i] / t
        }
    }

    /// Whether the errors at `eps <= threshold` strictly decrease.
    pub fn strictly_decreasing_below(&self, threshold: f64) -> bool {
        let tail: Vec<f64> = self
            .epsilons
            .iter()
            .zip(&self.errors)
            .filter(|(&e, _)| e <= threshold)
            .map(|(_, &err)| err)
            .collect();
        tail.windows(2).all(|w| w[1] < w[0])
    }
}

fn check_epsilons(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::Constraint("empty epsilon sweep".into()));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Constraint("epsilons must be positive".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Constraint("epsilons must be strictly decreasing".into()));
    }
    Ok(())
}

/// `2^-a, ..., 2^-b`.
pub fn dyadic_epsilons(a: i32, b: i32) -> Vec<f64> {
    (a..=b).map(|j| 2f64.powi(-j)).collect()
}

/// Box half-width beyond which `exp(-pi c y^2)` is below `1e-17`.
fn box_half_width(c: f64) -> f64 {
    (17.0 * std::f64::consts::LN_10 / (std::f64::consts::PI * c)).sqrt()
}

/// Bound for `int_{|y| > l} exp(-pi c y^2) dy`.
fn gaussian_tail(c: f64, l: f64) -> f64 {
    (-std::f64::consts::PI * c * l * l).exp() / (std::f64::consts::PI * c * l)
}

/// `eps^{n/p} ||phi(eps .) f||_{L^p(R^n)}` for each `eps`, by a Riemann sum
/// with spacing `h = eps/Q` on a box outside which `|phi|^p` is negligible.
/// The target is `||phi||_p ||f||_p`.
pub fn lemma22_sweep(phi: &Gaussian, f: &TorusField, p: f64, eps: &[f64]) -> Result<SweepResult> {
    check_exponent(p)?;
    check_epsilons(eps)?;
    let n = f.grid().dim();
    let m = f.grid().points_per_axis();
    let band = f.effective_bandlimit(0.0).max(1);
    let needed = (2 * p.ceil() as usize * band + 1).max(8);
    let mut factor = 1;
    while m * factor < needed {
        factor *= 2;
    }
    let fine = zero_pad(f, factor)?.to_physical();
    let q = fine.grid().points_per_axis();
    let powers: Vec<f64> = fine.values().iter().map(|&z| abs_pow(z, p)).collect();
    let fmax = powers.iter().cloned().fold(0.0, f64::max);
    let target = phi.lp_norm(p, n) * (pairwise_sum(powers.iter().cloned()) / powers.len() as f64).powf(1.0 / p);

    // |phi(y)|^p = |A|^p exp(-pi c |y|^2)
    let c = phi.a * p;
    let amp = phi.amplitude.abs().powf(p);
    let half = box_half_width(c);
    let results: Vec<Result<(f64, f64)>> = eps
        .par_iter()
        .map(|&e| {
            let h = e / q as f64;
            let reach = (half / e).ceil() as i64 + 1;
            let weights: Vec<Vec<f64>> = (0..n)
                .map(|axis| {
                    (0..q)
                        .map(|j| {
                            let t = fine.grid().coordinate(axis, j);
                            pairwise_sum((-reach..=reach).filter_map(|w| {
                                let y = e * (t + w as f64);
                                (y.abs() <= half).then(|| h * (-std::f64::consts::PI * c * y * y).exp())
                            }))
                        })
                        .collect()
                })
                .collect();
            let mut idx = vec![0; n];
            let integral = amp
                * pairwise_sum((0..powers.len()).map(|flat| {
                    fine.grid().unravel(flat, &mut idx);
                    let w: f64 = idx.iter().enumerate().map(|(a, &j)| weights[a][j]).product();
                    w * powers[flat]
                }));
            let one_d = c.powf(-0.5);
            let tail = amp * fmax * n as f64 * 2.0 * gaussian_tail(c, half) * one_d.powi(n as i32 - 1);
            let value = integral.powf(1.0 / p);
            let tail_value = tail / (p * integral.powf(1.0 - 1.0 / p)).max(f64::MIN_POSITIVE);
            if tail_value > 1e-8 * value {
                return Err(Error::Quadrature(format!(
                    "tail {tail_value:e} too large at eps = {e}"
                )));
            }
            Ok((value, tail_value))
        })
        .collect();
    let mut values = Vec::new();
    let mut tails = Vec::new();
    for r in results {
        let (v, t) = r?;
        values.push(v);
        tails.push(t);
    }
    SweepResult::new(eps, values, vec![target; eps.len()], tails)
}

/// `eps^{n/p'} ||sum_k fhat(eps k) e_k||_{L^p(T^n)}` for each `eps`, with
/// the frequency cutoff chosen so the dropped coefficients have `l^1` mass
/// below `1e-10` of the target. The target is `||f||_{L^p(R^n)}`.
pub fn lemma23_sweep(f: &Gaussian, n: usize, p: f64, eps: &[f64]) -> Result<SweepResult> {
    check_exponent(p)?;
    check_epsilons(eps)?;
    if n == 0 {
        return Err(Error::InvalidGrid("dimension must be positive".into()));
    }
    let target = f.lp_norm(p, n);
    let q = p / (p - 1.0);
    let oversample = 4;
    let mut values = Vec::new();
    let mut tails = Vec::new();
    for &e in eps {
        let scale = e.powf(n as f64 / q);
        let amp = f.amplitude.abs() * f.a.powf(-0.5 * n as f64);
        let c = e * e / f.a;
        // full one-dimensional sum of exp(-pi c k^2) is at most 1 + 1/sqrt(c)
        let full = 1.0 + c.powf(-0.5);
        let tail_at = |k: usize| {
            let t1 = 2.0 * gaussian_tail(c, k as f64 + 0.5).min(1.0);
            scale * amp * n as f64 * t1 * full.powi(n as i32 - 1)
        };
        let mut cutoff = 1usize;
        while tail_at(cutoff) > 1e-10 * target {
            cutoff += 1;
        }
        let mut m = 4usize;
        while m / 2 - 1 < cutoff {
            m *= 2;
        }
        let fine_points = (m * oversample).checked_pow(n as u32);
        if fine_points.is_none_or(|t| t > MAX_POINTS) {
            return Err(Error::TooLarge(format!(
                "cutoff {cutoff} at eps = {e} needs a grid of {m}^{n} points"
            )));
        }
        let grid = TorusGrid::new(n, m, false)?;
        let axis: Vec<f64> = (0..m).map(|j| grid.frequency(j) as f64).collect();
        let mut idx = vec![0; n];
        let coeffs: Vec<Complex64> = (0..grid.len())
            .map(|flat| {
                grid.unravel(flat, &mut idx);
                let inside = idx.iter().all(|&j| axis[j].abs() <= cutoff as f64);
                if !inside {
                    return Complex64::default();
                }
                let xi: Vec<f64> = idx.iter().map(|&j| e * axis[j]).collect();
                Complex64::new(f.hat(&xi), 0.0)
            })
            .collect();
        let field = TorusField::from_spectral(grid, coeffs)?;
        values.push(scale * lp_norm(&field, p, oversample)?);
        tails.push(tail_at(cutoff));
    }
    SweepResult::new(eps, values, vec![target; eps.len()], tails)
}

/// `eps^{-n} int m(xi) phihat((xi - k)/eps) psicheck((xi - l)/eps) dxi`
/// with `phi = exp(-pi|x|^2/p)` and `psi = exp(-pi|x|^2/p')`. The target is
/// `m(k)` when `k = l` and `0` otherwise.
pub fn pairing_identity_check(
    sym: &HomogeneousSymbol,
    k: &[i64],
    l: &[i64],
    p: f64,
    eps: &[f64],
) -> Result<SweepResult> {
    check_exponent(p)?;
    check_epsilons(eps)?;
    let n = sym.dim();
    if k.len() != n || l.len() != n {
        return Err(Error::ShapeMismatch("frequency length differs from the symbol".into()));
    }
    if k.iter().all(|&x| x == 0) || l.iter().all(|&x| x == 0) {
        return Err(Error::Constraint("k and l must be nonzero".into()));
    }
    let q = p / (p - 1.0);
    let s = p + q;
    // p|xi-k|^2 + q|xi-l|^2 = s|xi-c|^2 + |k-l|^2 with c = (pk + ql)/s
    let center: Vec<f64> = k
        .iter()
        .zip(l)
        .map(|(&a, &b)| (p * a as f64 + q * b as f64) / s)
        .collect();
    let dist2: f64 = k.iter().zip(l).map(|(&a, &b)| ((a - b) * (a - b)) as f64).sum();
    let half = box_half_width(s);
    let h = 1.0 / 16.0;
    let per_axis = (half / h).ceil() as i64;
    let nodes: Vec<f64> = (-per_axis..=per_axis).map(|j| j as f64 * h).collect();
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&x| h * (p * q).sqrt() * (-std::f64::consts::PI * s * x * x).exp())
        .collect();
    let side = nodes.len();
    let total = side.checked_pow(n as u32).filter(|&t| t <= MAX_POINTS).ok_or_else(|| {
        Error::Quadrature(format!("{side}^{n} quadrature nodes"))
    })?;
    let target = if k == l { sym.eval(&center) } else { 0.0 };
    let values: Vec<f64> = eps
        .par_iter()
        .map(|&e| {
            let pre = (-std::f64::consts::PI * dist2 / (e * e)).exp();
            if pre == 0.0 {
                return 0.0;
            }
            let mut xi = vec![0.0; n];
            pre * pairwise_sum((0..total).map(|flat| {
                let mut rem = flat;
                let mut w = 1.0;
                for a in (0..n).rev() {
                    let j = rem % side;
                    rem /= side;
                    xi[a] = center[a] + e * nodes[j];
                    w *= weights[j];
                }
                w * sym.eval(&xi)
            }))
        })
        .collect();
    let tail = n as f64 * 2.0 * gaussian_tail(s, half) * (p * q).sqrt() * s.powf(-0.5 * (n as f64 - 1.0));
    let tails = values.iter().map(|_| tail).collect();
    SweepResult::new(eps, values, vec![target; eps.len()], tails)
}

fn glue(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

fn smoothstep(x: f64) -> f64 {
    let a = glue(x);
    a / (a + glue(1.0 - x))
}

/// Smooth bump equal to 1 on `|x| <= 1` and 0 on `|x| >= 2`.
pub fn theta0(x: &[f64]) -> f64 {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    smoothstep(2.0 - r)
}

/// `Theta_l(2^l eta)`, the sum of the three neighbouring dyadic pieces.
pub fn block_window(l: u32, eta: &[f64]) -> f64 {
    let half: Vec<f64> = eta.iter().map(|v| v / 2.0).collect();
    if l <= 1 {
        theta0(&half)
    } else {
        let quad: Vec<f64> = eta.iter().map(|v| v * 4.0).collect();
        theta0(&half) - theta0(&quad)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockBound {
    pub pointwise_bound: f64,
    pub derivative_bound: f64,
}

fn multi_indices(n: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v: Vec<u32>| {
                let used: u32 = v.iter().sum();
                (0..=max - used).map(move |g| {
                    let mut w = v.clone();
                    w.push(g);
                    w
                })
            })
            .collect();
    }
    out
}

/// Sup of `|M(eta)|` and of `|eta|^{|g|} |d^g M(eta)|` over `|g| <= n + 1`
/// for `M(eta) = [m(2^l eps eta + k) - m(k)] Theta_l(2^l eta)`, sampled on
/// `[-4, 4]^n` with central differences.
pub fn dyadic_block_bound(sym: &HomogeneousSymbol, k: &[i64], l: u32, eps: f64) -> Result<BlockBound> {
    let n = sym.dim();
    if k.len() != n {
        return Err(Error::ShapeMismatch("frequency length differs from the symbol".into()));
    }
    if k.iter().all(|&x| x == 0) {
        return Err(Error::Constraint("k must be nonzero".into()));
    }
    if !(eps > 0.0 && eps < 2f64.powi(-(l as i32) - 3)) {
        return Err(Error::Constraint(format!(
            "eps = {eps} must lie in (0, 2^-{})",
            l + 3
        )));
    }
    let side: usize = match n {
        1 | 2 => 81,
        3 => 33,
        _ => return Err(Error::TooLarge(format!("dyadic block grid in dimension {n}"))),
    };
    let h = 8.0 / (side - 1) as f64;
    let delta = 2f64.powi(l as i32) * eps;
    let kf: Vec<f64> = k.iter().map(|&x| x as f64).collect();
    let mk = sym.eval(&kf);
    let total = side.pow(n as u32);
    let coord = |j: usize| -4.0 + j as f64 * h;
    let unravel = |mut flat: usize| {
        let mut idx = vec![0; n];
        for a in (0..n).rev() {
            idx[a] = flat % side;
            flat /= side;
        }
        idx
    };
    let values: Vec<f64> = (0..total)
        .map(|flat| {
            let eta: Vec<f64> = unravel(flat).into_iter().map(coord).collect();
            let w = block_window(l, &eta);
            if w == 0.0 {
                return 0.0;
            }
            let xi: Vec<f64> = eta.iter().zip(&kf).map(|(e, k)| delta * e + k).collect();
            (sym.eval(&xi) - mk) * w
        })
        .collect();
    let stride = |a: usize| side.pow((n - 1 - a) as u32);
    let mut pointwise = 0.0f64;
    let mut derivative = 0.0f64;
    for gamma in multi_indices(n, n as u32 + 1) {
        let mut d = values.clone();
        for (a, &g) in gamma.iter().enumerate() {
            for _ in 0..g {
                let s = stride(a);
                let mut next = vec![f64::NAN; total];
                for (flat, out) in next.iter_mut().enumerate() {
                    let j = (flat / s) % side;
                    if j == 0 || j == side - 1 {
                        continue;
                    }
                    *out = (d[flat + s] - d[flat - s]) / (2.0 * h);
                }
                d = next;
            }
        }
        let order: u32 = gamma.iter().sum();
        for (flat, &v) in d.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let r = unravel(flat)
                .into_iter()
                .map(|j| coord(j).powi(2))
                .sum::<f64>()
                .sqrt();
            let weighted = r.powi(order as i32) * v.abs();
            if order == 0 {
                pointwise = pointwise.max(v.abs());
            }
            derivative = derivative.max(weighted);
        }
    }
    Ok(BlockBound {
        pointwise_bound: pointwise,
        derivative_bound: derivative,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares line through `(x, y)` pairs.
pub fn linear_fit(pts: &[(f64, f64)]) -> LinearFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DyadicSweep {
    pub block: u32,
    pub k: Vec<i64>,
    pub epsilons: Vec<f64>,
    pub scales: Vec<f64>,
    pub bounds: Vec<BlockBound>,
    pub pointwise_fit: LinearFit,
    pub derivative_fit: LinearFit,
    pub pointwise_loglog_slope: Option<f64>,
    pub derivative_loglog_slope: Option<f64>,
}

/// [`dyadic_block_bound`] over several `eps`, with linear fits of both
/// bounds against `2^l eps`.
pub fn dyadic_sweep(sym: &HomogeneousSymbol, k: &[i64], l: u32, eps: &[f64]) -> Result<DyadicSweep> {
    check_epsilons(eps)?;
    let bounds = eps
        .par_iter()
        .map(|&e| dyadic_block_bound(sym, k, l, e))
        .collect::<Result<Vec<_>>>()?;
    let scales: Vec<f64> = eps.iter().map(|e| 2f64.powi(l as i32) * e).collect();
    let fit = |sel: fn(&BlockBound) -> f64| {
        let pts: Vec<(f64, f64)> = scales.iter().zip(&bounds).map(|(&s, b)| (s, sel(b))).collect();
        let logs: Vec<(f64, f64)> = pts
            .iter()
            .filter(|p| p.1 > 0.0)
            .map(|p| (p.0.ln(), p.1.ln()))
            .collect();
        (linear_fit(&pts), (logs.len() >= 2).then(|| linear_fit(&logs).slope))
    };
    let (pointwise_fit, pointwise_loglog_slope) = fit(|b| b.pointwise_bound);
    let (derivative_fit, derivative_loglog_slope) = fit(|b| b.derivative_bound);
    Ok(DyadicSweep {
        block: l,
        k: k.to_vec(),
        epsilons: eps.to_vec(),
        scales,
        bounds,
        pointwise_fit,
        derivative_fit,
        pointwise_loglog_slope,
        derivative_loglog_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::{make_symbol, MultiIndex};
    use crate::witness::square_wave_poly;

    #[test]
    fn gaussian_closed_forms() {
        let g = Gaussian::window(3.0);
        assert!((g.lp_norm(3.0, 1) - 1.0).abs() < 1e-15);
        let f = Gaussian::new(2.0, 1.0).unwrap();
        assert!((f.lp_norm(2.0, 2) - 2.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.hat(&[0.0, 0.0]), 2.0);
    }

    #[test]
    fn scaling_is_exact_for_unimodular_fields() {
        let grid = TorusGrid::new(1, 8, false).unwrap();
        let eps = dyadic_epsilons(1, 6);
        for p in [1.5, 2.0, 4.0] {
            let one = TorusField::from_modes(grid.clone(), &[(vec![0], Complex64::new(1.0, 0.0))]).unwrap();
            let e1 = TorusField::exponential(grid.clone(), &[1]).unwrap();
            for f in [one, e1] {
                let s = lemma22_sweep(&Gaussian::window(p), &f, p, &eps).unwrap();
                assert!(s.errors.iter().all(|&e| e < 1e-13), "{:?}", s.errors);
                assert!(s.tail_bounds.iter().all(|&t| t <= 1e-8 * s.targets[0]));
            }
        }
    }

    #[test]
    fn square_wave_scaling_limit() {
        let grid = TorusGrid::new(1, 16, false).unwrap();
        let a = square_wave_poly(5).unwrap();
        let modes: Vec<(Vec<i64>, Complex64)> =
            a.coefficients().iter().map(|(&k, &c)| (vec![k], c)).collect();
        let f = TorusField::from_modes(grid, &modes).unwrap();
        let s = lemma22_sweep(&Gaussian::window(2.0), &f, 2.0, &dyadic_epsilons(3, 9)).unwrap();
        let parseval: f64 = a.coefficients().values().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((s.targets[0] - parseval).abs() < 1e-14);
        assert!(s.final_relative_error() <= 1e-3);
    }

    #[test]
    fn poisson_limit_and_linearity() {
        let eps = dyadic_epsilons(2, 7);
        let g = Gaussian::new(1.0, 1.0).unwrap();
        let s = lemma23_sweep(&g, 1, 2.0, &eps).unwrap();
        assert!((s.targets[0] - 2f64.powf(-0.25)).abs() < 1e-15);
        assert!(s.final_relative_error() <= 1e-3);
        let d = lemma23_sweep(&Gaussian::new(2.0, 1.0).unwrap(), 1, 2.0, &eps).unwrap();
        for (a, b) in s.values.iter().zip(&d.values) {
            assert!((b - 2.0 * a).abs() <= 1e-14 * b);
        }
        let s4 = lemma23_sweep(&g, 2, 4.0, &dyadic_epsilons(2, 5)).unwrap();
        assert!(s4.final_relative_error() <= 1e-6);
    }

    #[test]
    fn pairing_diagonal_and_off_diagonal() {
        let sym = make_symbol(&MultiIndex::new(vec![1, 1])).unwrap();
        let eps = dyadic_epsilons(2, 7);
        let d = pairing_identity_check(&sym, &[1, 1], &[1, 1], 2.0, &eps).unwrap();
        assert_eq!(d.targets[0], 0.5);
        assert!(d.errors.last().unwrap() <= &1e-3);
        assert!(d.errors.windows(2).all(|w| w[1] < w[0]));
        let order = d.fitted_order.unwrap();
        assert!((order - 2.0).abs() < 0.1, "{order}");
        let o = pairing_identity_check(&sym, &[1, 0], &[0, 1], 2.0, &eps).unwrap();
        assert!(o.values.last().unwrap().abs() <= 1e-6 * d.values.last().unwrap());
        let one = make_symbol(&MultiIndex::new(vec![0, 0])).unwrap();
        let u = pairing_identity_check(&one, &[2, -1], &[2, -1], 3.0, &eps).unwrap();
        assert!(u.errors.iter().all(|&e| e < 1e-13));
    }

    #[test]
    fn dyadic_window_partition() {
        assert_eq!(theta0(&[0.5, 0.5]), 1.0);
        assert_eq!(theta0(&[2.0, 0.1]), 0.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(block_window(3, &[4.1, 0.0]), 0.0);
        assert_eq!(block_window(3, &[0.1, 0.0]), 0.0);
        assert_eq!(block_window(0, &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn dyadic_bounds_scale_linearly() {
        let sym = make_symbol(&MultiIndex::new(vec![1, 1])).unwrap();
        let a = dyadic_block_bound(&sym, &[1, 1], 0, 1.0 / 64.0).unwrap();
        let b = dyadic_block_bound(&sym, &[1, 1], 0, 1.0 / 32.0).unwrap();
        // the gradient of xi1 xi2 / |xi|^2 vanishes on the diagonal
        let ratio = b.pointwise_bound / a.pointwise_bound;
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
        let a = dyadic_block_bound(&sym, &[2, 1], 0, 1.0 / 64.0).unwrap();
        let b = dyadic_block_bound(&sym, &[2, 1], 0, 1.0 / 32.0).unwrap();
        let ratio = b.pointwise_bound / a.pointwise_bound;
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
        let eps: Vec<f64> = (0..6).map(|j| 2f64.powi(-5 - j)).collect();
        let s = dyadic_sweep(&sym, &[2, 1], 1, &eps).unwrap();
        assert!(s.pointwise_fit.r2 >= 0.99 && s.derivative_fit.r2 >= 0.99);
        let c = make_symbol(&MultiIndex::new(vec![0, 0])).unwrap();
        let z = dyadic_block_bound(&c, &[1, 1], 0, 0.01).unwrap();
        assert_eq!((z.pointwise_bound, z.derivative_bound), (0.0, 0.0));
        assert!(dyadic_block_bound(&sym, &[1, 1], 1, 1.0 / 16.0).is_err());
    }
}
