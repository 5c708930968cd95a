//! Maximization of `R(f) = ||T_m f||_p / sum_j ||T_{m_j} f||_p` over
//! mean-zero trigonometric polynomials on a torus grid.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbols::DerivativeFamily;
use crate::torus::{
    check_exponent, mean_abs_pow, symbol_table, zero_pad, FourierSymbol, TorusField,
    TorusGrid,
};
use crate::witness::{eigen_witness_pair, square_wave_poly};

/// The ratio objective on a fixed grid, with symbol tables precomputed.
pub struct RatioObjective {
    grid: TorusGrid,
    fine: TorusGrid,
    p: f64,
    tables: Vec<Vec<f64>>,
    map: Vec<usize>,
}

impl RatioObjective {
    pub fn new(fam: &DerivativeFamily, grid: &TorusGrid, p: f64, oversample: usize) -> Result<Self> {
        check_exponent(p)?;
        if oversample == 0 {
            return Err(Error::InvalidOversample);
        }
        if grid.dim() != fam.n {
            return Err(Error::ShapeMismatch(format!(
                "grid has dimension {}, family has n = {}",
                grid.dim(),
                fam.n
            )));
        }
        let fine = grid.refine(oversample)?;
        let mut tables = vec![symbol_table(grid, &fam.symbol())];
        for s in fam.alpha_symbols() {
            tables.push(symbol_table(grid, &s));
        }
        let axis: Vec<usize> = (0..grid.points_per_axis())
            .map(|j| fine.frequency_index(grid.frequency(j)).expect("fits"))
            .collect();
        let mut idx = vec![0; grid.dim()];
        let map = (0..grid.len())
            .map(|flat| {
                grid.unravel(flat, &mut idx);
                idx.iter().fold(0, |a, &j| a * fine.points_per_axis() + axis[j])
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            fine,
            p,
            tables,
            map,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn outputs(&self, f: &TorusField) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
        if f.grid() != &self.grid {
            return Err(Error::ShapeMismatch("field is on a different grid".into()));
        }
        let spec = f.to_spectral();
        let coeffs = spec.values().to_vec();
        let outs = self
            .tables
            .iter()
            .map(|t| {
                let mut v = vec![Complex64::default(); self.fine.len()];
                for (i, (&c, &w)) in coeffs.iter().zip(t).enumerate() {
                    v[self.map[i]] = c * w;
                }
                let g = TorusField::from_spectral(self.fine.clone(), v)
                    .expect("fine grid size")
                    .to_physical()
                    .into_values();
                if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::NonFinite("multiplier output".into()));
                }
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((coeffs, outs))
    }

    fn norms(&self, outs: &[Vec<Complex64>]) -> Vec<f64> {
        outs.iter()
            .map(|g| mean_abs_pow(g, self.p).powf(1.0 / self.p))
            .collect()
    }

    fn ratio_from_norms(norms: &[f64]) -> Result<f64> {
        let den: f64 = norms[1..].iter().sum();
        if den == 0.0 {
            let js: Vec<String> = (1..norms.len()).map(|j| j.to_string()).collect();
            return Err(Error::ZeroDenominator(format!(
                "T_m_j f = 0 for every j in {{{}}}",
                js.join(",")
            )));
        }
        let r = norms[0] / den;
        if !r.is_finite() {
            return Err(Error::NonFinite("ratio".into()));
        }
        Ok(r)
    }

    pub fn value(&self, f: &TorusField) -> Result<f64> {
        let (_, outs) = self.outputs(f)?;
        Self::ratio_from_norms(&self.norms(&outs))
    }

    /// Ratio and its gradient with respect to the real and imaginary parts
    /// of the physical samples, packed as `dR/dRe f + i dR/dIm f`. For
    /// `p < 2` the weight `|g|^{p-2}` uses `(|g|^2 + eps^2)` with
    /// `eps = eps_rel * max|g|`.
    pub fn value_and_gradient(&self, f: &TorusField, eps_rel: f64) -> Result<(f64, TorusField)> {
        let (_, outs) = self.outputs(f)?;
        let norms = self.norms(&outs);
        let r = Self::ratio_from_norms(&norms)?;
        let den: f64 = norms[1..].iter().sum();
        let p = self.p;
        let scale = 1.0 / self.grid.len() as f64;
        let mut grad_spec = vec![Complex64::default(); self.grid.len()];
        for (j, g) in outs.iter().enumerate() {
            let nj = norms[j];
            if nj == 0.0 {
                continue;
            }
            let coef = if j == 0 { 1.0 / den } else { -r / den };
            let gmax = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let eps2 = (eps_rel * gmax).powi(2);
            let w: Vec<Complex64> = g
                .iter()
                .map(|&z| {
                    let sq = z.norm_sqr();
                    let weight = if p == 2.0 {
                        1.0
                    } else if p < 2.0 {
                        (sq + eps2).powf(0.5 * (p - 2.0))
                    } else if sq == 0.0 {
                        0.0
                    } else {
                        sq.powf(0.5 * (p - 2.0))
                    };
                    z * weight
                })
                .collect();
            let what = TorusField::from_physical(self.fine.clone(), w)
                .expect("fine grid size")
                .to_spectral()
                .into_values();
            let factor = coef * nj.powf(1.0 - p) * scale;
            for (i, acc) in grad_spec.iter_mut().enumerate() {
                *acc += what[self.map[i]] * (self.tables[j][i] * factor);
            }
        }
        let grad = TorusField::from_spectral(self.grid.clone(), grad_spec)?.to_physical();
        if grad.values().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at ratio {r}")));
        }
        Ok((r, grad))
    }
}

/// `||T_m f||_p / sum_j ||T_{m_j} f||_p` with norms on the grid refined
/// `oversample` times.
pub fn ratio_objective(fam: &DerivativeFamily, f: &TorusField, p: f64, oversample: usize) -> Result<f64> {
    RatioObjective::new(fam, f.grid(), p, oversample)?.value(f)
}

/// Gradient of [`ratio_objective`] (see [`RatioObjective::value_and_gradient`]).
pub fn ratio_gradient(
    fam: &DerivativeFamily,
    f: &TorusField,
    p: f64,
    oversample: usize,
    eps_rel: f64,
) -> Result<TorusField> {
    if p < 2.0 && !(eps_rel > 0.0) {
        return Err(Error::Constraint("p < 2 needs a positive smoothing parameter".into()));
    }
    Ok(RatioObjective::new(fam, f.grid(), p, oversample)?
        .value_and_gradient(f, eps_rel)?
        .1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScanResult {
    pub best_k: f64,
    pub best_freq: Vec<i64>,
}

/// `max |m(k)| / sum_j |m_j(k)|` over `0 < |k|_inf <= range`. Ties (relative
/// `1e-12`) go to the smallest `|k|_inf`, then the fewest negative entries,
/// then the lexicographically smallest `k`.
pub fn single_frequency_scan(fam: &DerivativeFamily, range: usize) -> Result<ScanResult> {
    if range == 0 {
        return Err(Error::Constraint("scan range must be at least 1".into()));
    }
    let n = fam.n;
    let side = 2 * range + 1;
    let total = side
        .checked_pow(n as u32)
        .filter(|&t| t <= 1 << 26)
        .ok_or_else(|| Error::TooLarge(format!("scan over (2*{range}+1)^{n} frequencies")))?;
    let m = fam.symbol();
    let mj = fam.alpha_symbols();
    let key = |k: &[i64]| {
        (
            k.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0),
            k.iter().filter(|&&x| x < 0).count(),
            k.to_vec(),
        )
    };
    let mut best: Option<(f64, Vec<i64>)> = None;
    let mut k = vec![0i64; n];
    for flat in 0..total {
        let mut rem = flat;
        for slot in k.iter_mut().rev() {
            *slot = (rem % side) as i64 - range as i64;
            rem /= side;
        }
        if k.iter().all(|&x| x == 0) {
            continue;
        }
        let num = m.value(&k).abs();
        let den: f64 = mj.iter().map(|s| s.value(&k).abs()).sum();
        let v = if den == 0.0 {
            if num == 0.0 {
                continue;
            }
            f64::INFINITY
        } else {
            num / den
        };
        let better = match &best {
            None => true,
            Some((bv, bk)) => {
                let tie = if v.is_infinite() || bv.is_infinite() {
                    v == *bv
                } else {
                    (v - bv).abs() <= 1e-12 * v.abs().max(bv.abs())
                };
                if tie {
                    key(&k) < key(bk)
                } else {
                    v > *bv
                }
            }
        };
        if better {
            best = Some((v, k.clone()));
        }
    }
    let (best_k, best_freq) = best.ok_or_else(|| {
        Error::ZeroDenominator("every symbol vanishes on the scanned range".into())
    })?;
    Ok(ScanResult { best_k, best_freq })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateOptions {
    pub starts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub oversample: usize,
    /// Smoothing for `p < 2`, relative to `max|g|`.
    pub eps_g: f64,
    /// Smallest smoothing reached by annealing.
    pub eps_g_min: f64,
    pub stall_window: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iter: 5000,
            tol: 1e-9,
            seed: 0,
            oversample: 4,
            eps_g: 1e-8,
            eps_g_min: 1e-12,
            stall_window: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StartSummary {
    pub kind: String,
    pub initial_ratio: f64,
    pub final_ratio: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateReport {
    pub family: DerivativeFamily,
    pub grid_m: usize,
    pub grid_shifts: Vec<bool>,
    pub p: f64,
    pub k_lower: f64,
    pub upper_bound_ref: Option<f64>,
    pub scan: ScanResult,
    pub trace: Vec<(usize, f64)>,
    pub best_start: usize,
    pub starts: Vec<StartSummary>,
    pub settings: EstimateOptions,
    pub seed: u64,
    #[serde(skip)]
    pub witness: TorusField,
}

struct Start {
    kind: String,
    field: TorusField,
}

/// Multi-start projected gradient ascent on the unit `L^2` sphere of
/// mean-zero fields with `|k|_inf <= M/2 - 1`. `warm` (a witness from a
/// coarser grid with an integer refinement factor) is added as the first
/// start.
pub fn maximize_ratio(
    fam: &DerivativeFamily,
    p: f64,
    grid: &TorusGrid,
    opts: &EstimateOptions,
    warm: Option<&TorusField>,
) -> Result<EstimateReport> {
    check_exponent(p)?;
    let m = grid.points_per_axis();
    if m / 2 < 5 {
        return Err(Error::Nyquist(format!(
            "M = {m} cannot hold the modes |k|_inf <= 4"
        )));
    }
    let objective = RatioObjective::new(fam, grid, p, opts.oversample)?;
    let band = grid.max_bandlimit();
    let scan = single_frequency_scan(fam, band)?;

    let mut starts = Vec::new();
    if let Some(w) = warm {
        let factor = m / w.grid().points_per_axis();
        if factor == 0 || factor * w.grid().points_per_axis() != m || w.grid().dim() != grid.dim() {
            return Err(Error::ShapeMismatch(
                "warm start must come from a coarser grid with an integer ratio".into(),
            ));
        }
        let padded = zero_pad(w, factor)?;
        let field = TorusField::from_spectral(grid.clone(), padded.into_values())?;
        starts.push(Start {
            kind: "warm".into(),
            field,
        });
    }
    starts.push(Start {
        kind: "single-frequency".into(),
        field: TorusField::exponential(grid.clone(), &scan.best_freq)?,
    });
    if fam.is_normalized() {
        let deg = (m / 4).max(1) as u32;
        let deg = if deg % 2 == 0 { deg - 1 } else { deg };
        let a = square_wave_poly(deg)?;
        let (plus, minus) = eigen_witness_pair(fam, &a, grid)?;
        starts.push(Start {
            kind: "square-wave".into(),
            field: plus.combine(Complex64::new(1.0, 0.0), &minus, Complex64::new(1.0, 0.0))?,
        });
    }
    let mut master = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.starts.max(1) {
        let s: u64 = master.random();
        starts.push(Start {
            kind: format!("random-{s:016x}"),
            field: random_field(grid, (m / 4).max(1), s)?,
        });
    }

    let results: Vec<Result<(StartSummary, Vec<(usize, f64)>, TorusField)>> = starts
        .into_par_iter()
        .map(|s| ascend(&objective, s, p, opts, band))
        .collect();

    let mut best: Option<(usize, Vec<(usize, f64)>, TorusField, f64)> = None;
    let mut summaries = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        let (summary, trace, field) = match res {
            Ok(x) => x,
            Err(Error::ZeroDenominator(_)) => {
                summaries.push(StartSummary {
                    kind: "degenerate".into(),
                    initial_ratio: 0.0,
                    final_ratio: 0.0,
                    iterations: 0,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let v = summary.final_ratio;
        if v > 0.0 && best.as_ref().is_none_or(|b| v > b.3) {
            best = Some((i, trace, field, v));
        }
        summaries.push(summary);
    }
    let (best_start, trace, witness, k_lower) =
        best.ok_or_else(|| Error::Optimization("every start is degenerate".into()))?;
    let mut family = fam.clone();
    family.p = p;
    Ok(EstimateReport {
        upper_bound_ref: family.upper_bound_ref(),
        family,
        grid_m: m,
        grid_shifts: grid.shifts().to_vec(),
        p,
        k_lower,
        scan,
        trace,
        best_start,
        starts: summaries,
        settings: opts.clone(),
        seed: opts.seed,
        witness,
    })
}

/// Real-valued field with independent normal coefficients on
/// `0 < |k|_inf <= b`.
fn random_field(grid: &TorusGrid, b: usize, seed: u64) -> Result<TorusField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut spec = vec![Complex64::default(); grid.len()];
    let mut idx = vec![0; grid.dim()];
    for (flat, c) in spec.iter_mut().enumerate() {
        grid.unravel(flat, &mut idx);
        let inside = idx
            .iter()
            .all(|&j| grid.frequency(j).unsigned_abs() as usize <= b);
        if inside && flat != 0 {
            *c = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    let f = TorusField::from_spectral(grid.clone(), spec)?.to_physical();
    let real: Vec<Complex64> = f.values().iter().map(|z| Complex64::new(z.re, 0.0)).collect();
    TorusField::from_physical(grid.clone(), real)
}

/// Zeroes the mean and every coefficient outside `|k|_inf <= band`, then
/// scales to unit `L^2` norm.
fn project(f: &TorusField, band: usize) -> Result<TorusField> {
    let mut out = f.with_bandlimit(band)?.to_spectral().into_values();
    out[0] = Complex64::default();
    let nrm = out.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if nrm == 0.0 {
        return Err(Error::ZeroDenominator("start field vanishes on the search band".into()));
    }
    out.iter_mut().for_each(|c| *c /= nrm);
    Ok(TorusField::from_spectral(f.grid().clone(), out)?.to_physical())
}

fn ascend(
    obj: &RatioObjective,
    start: Start,
    p: f64,
    opts: &EstimateOptions,
    band: usize,
) -> Result<(StartSummary, Vec<(usize, f64)>, TorusField)> {
    let mut f = project(&start.field, band)?;
    let mut r = obj.value(&f)?;
    let initial = r;
    let mut trace = vec![(0, r)];
    let mut eps = opts.eps_g;
    let mut step = f64::NAN;
    let mut iterations = 0;
    let window = opts.stall_window.max(1);
    while iterations < opts.max_iter {
        iterations += 1;
        let (_, g) = obj.value_and_gradient(&f, eps)?;
        let g = g.with_bandlimit(band)?;
        let gvals = project_tangent(&f, &g);
        let gnorm2: f64 = gvals.iter().map(|z| z.norm_sqr()).sum();
        let fnorm: f64 = f.values().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut accepted = None;
        if gnorm2 > 0.0 && gnorm2.is_finite() {
            if !step.is_finite() {
                step = 0.1 * fnorm / gnorm2.sqrt();
            }
            for _ in 0..30 {
                let cand: Vec<Complex64> = f
                    .values()
                    .iter()
                    .zip(&gvals)
                    .map(|(x, d)| x + d * step)
                    .collect();
                let cand = project(&TorusField::from_physical(f.grid().clone(), cand)?, band)?;
                let rv = obj.value(&cand)?;
                if rv > r {
                    accepted = Some((cand, rv));
                    break;
                }
                step *= 0.5;
            }
        }
        match accepted {
            Some((cand, rv)) => {
                f = cand;
                r = rv;
                step *= 2.0;
                trace.push((iterations, r));
            }
            None => {
                if p < 2.0 && eps > opts.eps_g_min {
                    eps = (eps / 10.0).max(opts.eps_g_min);
                    step = f64::NAN;
                    continue;
                }
                break;
            }
        }
        if trace.len() > window {
            let old = trace[trace.len() - 1 - window].1;
            if (r - old) <= opts.tol * r.abs() {
                if p < 2.0 && eps > opts.eps_g_min {
                    eps = (eps / 10.0).max(opts.eps_g_min);
                    continue;
                }
                break;
            }
        }
    }
    Ok((
        StartSummary {
            kind: start.kind,
            initial_ratio: initial,
            final_ratio: r,
            iterations,
        },
        trace,
        f,
    ))
}

/// Removes the component of `g` along `f` (the ratio is scale invariant,
/// so this only drops the part that renormalization undoes).
fn project_tangent(f: &TorusField, g: &TorusField) -> Vec<Complex64> {
    let g = g.to_physical();
    let ff: f64 = f.values().iter().map(|z| z.norm_sqr()).sum();
    let fg: f64 = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a.conj() * b).re)
        .sum();
    let c = if ff > 0.0 { fg / ff } else { 0.0 };
    f.values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| b - a * c)
        .collect()
}

/// Exact gradient check helper: `|grad|_2` and the Euler defect
/// `<grad, f>`.
pub fn euler_defect(f: &TorusField, grad: &TorusField) -> (f64, f64) {
    let f = f.to_physical();
    let g = grad.to_physical();
    let inner: f64 = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a.conj() * b).re)
        .sum();
    let gn = g.values().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (gn, inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::MultiIndex;

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

    fn random_complex(grid: &TorusGrid, seed: u64) -> TorusField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let v = (0..grid.len())
            .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        TorusField::from_physical(grid.clone(), v).unwrap()
    }

    fn fd_gradient(obj: &RatioObjective, f: &TorusField, h: f64) -> Vec<Complex64> {
        let base = f.values().to_vec();
        let eval = |v: Vec<Complex64>| {
            obj.value(&TorusField::from_physical(f.grid().clone(), v).unwrap())
                .unwrap()
        };
        (0..base.len())
            .map(|i| {
                let mut parts = [0.0; 2];
                for (slot, dir) in [Complex64::new(h, 0.0), Complex64::new(0.0, h)]
                    .into_iter()
                    .enumerate()
                {
                    let mut up = base.clone();
                    up[i] += dir;
                    let mut dn = base.clone();
                    dn[i] -= dir;
                    parts[slot] = (eval(up) - eval(dn)) / (2.0 * h);
                }
                Complex64::new(parts[0], parts[1])
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = TorusGrid::new(2, 8, false).unwrap();
        for p in [4.0 / 3.0, 2.0, 4.0] {
            let fam = cor12(p);
            let obj = RatioObjective::new(&fam, &grid, p, 4).unwrap();
            for seed in 0..3 {
                let f = random_complex(&grid, seed);
                let (_, g) = obj.value_and_gradient(&f, 1e-12).unwrap();
                let fd = fd_gradient(&obj, &f, 1e-6);
                let num: f64 = g
                    .values()
                    .iter()
                    .zip(&fd)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let (gn, inner) = euler_defect(&f, &g);
                assert!(num <= 1e-5 * gn, "p = {p}, seed {seed}: {num} vs {gn}");
                assert!(inner.abs() <= 1e-10 * gn * f.l2_norm_physical() * 8.0);
            }
        }
    }

    #[test]
    fn single_mode_is_stationary_at_two() {
        let grid = TorusGrid::new(2, 16, false).unwrap();
        let fam = cor12(2.0);
        let f = TorusField::exponential(grid.clone(), &[1, 1]).unwrap();
        let obj = RatioObjective::new(&fam, &grid, 2.0, 2).unwrap();
        let (r, g) = obj.value_and_gradient(&f, 0.0).unwrap();
        assert!((r - 0.5).abs() < 1e-14);
        assert!(g.max_abs() < 1e-14);
    }

    #[test]
    fn scan_prefers_smallest_nonnegative_mode() {
        let s = single_frequency_scan(&cor12(2.0), 4).unwrap();
        assert!((s.best_k - 0.5).abs() < 1e-15);
        assert_eq!(s.best_freq, vec![1, 1]);
        let fam = DerivativeFamily::new(
            MultiIndex::new(vec![2, 0]),
            vec![MultiIndex::new(vec![0, 2])],
            2.0,
        )
        .unwrap();
        let s = single_frequency_scan(&fam, 2).unwrap();
        assert!(s.best_k.is_infinite());
        assert_eq!(s.best_freq, vec![1, 0]);
    }

    #[test]
    fn zero_denominator_is_reported() {
        let grid = TorusGrid::new(2, 8, false).unwrap();
        let fam = DerivativeFamily::new(
            MultiIndex::new(vec![1, 1]),
            vec![MultiIndex::new(vec![2, 0])],
            2.0,
        )
        .unwrap();
        let f = TorusField::exponential(grid, &[0, 1]).unwrap();
        assert!(matches!(
            ratio_objective(&fam, &f, 2.0, 1),
            Err(Error::ZeroDenominator(_))
        ));
    }

    #[test]
    fn ascent_at_two_finds_one_half() {
        let grid = TorusGrid::new(2, 16, false).unwrap();
        let opts = EstimateOptions {
            starts: 3,
            max_iter: 200,
            ..Default::default()
        };
        let rep = maximize_ratio(&cor12(2.0), 2.0, &grid, &opts, None).unwrap();
        assert!((rep.k_lower - 0.5).abs() < 1e-9, "{}", rep.k_lower);
        assert!(rep.k_lower >= rep.scan.best_k - 1e-15);
        assert!(rep.trace.windows(2).all(|w| w[1].1 >= w[0].1));
        let again = ratio_objective(&rep.family, &rep.witness, 2.0, opts.oversample).unwrap();
        assert!((again - rep.k_lower).abs() <= 1e-9);
    }

    #[test]
    fn ascent_at_four_beats_single_modes() {
        let grid = TorusGrid::new(2, 16, false).unwrap();
        let opts = EstimateOptions {
            starts: 4,
            max_iter: 300,
            oversample: 2,
            ..Default::default()
        };
        let rep = maximize_ratio(&cor12(4.0), 4.0, &grid, &opts, None).unwrap();
        assert!(rep.k_lower > 0.5 && rep.k_lower <= 1.5, "{}", rep.k_lower);
        let a = maximize_ratio(&cor12(4.0), 4.0, &grid, &opts, None).unwrap();
        assert_eq!(a.k_lower.to_bits(), rep.k_lower.to_bits());
    }
    #[test]
    fn identical_operators_give_one() {
        let fam = DerivativeFamily::new(
            MultiIndex::new(vec![2, 0]),
            vec![MultiIndex::new(vec![2, 0])],
            3.0,
        )
        .unwrap();
        let s = single_frequency_scan(&fam, 3).unwrap();
        assert_eq!(s.best_k, 1.0);
        assert_eq!(s.best_freq, vec![1, 0]);
        let grid = TorusGrid::new(2, 16, false).unwrap();
        let opts = EstimateOptions {
            starts: 3,
            max_iter: 50,
            ..Default::default()
        };
        let rep = maximize_ratio(&fam, 3.0, &grid, &opts, None).unwrap();
        assert!((rep.k_lower - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn scan_in_three_dimensions() {
        let fam = DerivativeFamily::new(
            MultiIndex::new(vec![1, 1, 0]),
            vec![
                MultiIndex::new(vec![2, 0, 0]),
                MultiIndex::new(vec![0, 2, 0]),
                MultiIndex::new(vec![0, 0, 2]),
            ],
            2.0,
        )
        .unwrap();
        let s = single_frequency_scan(&fam, 8).unwrap();
        assert!((s.best_k - 0.5).abs() < 1e-15);
        assert_eq!(s.best_freq, vec![1, 1, 0]);
    }

    #[test]
    fn ratio_is_translation_and_swap_invariant() {
        let grid = TorusGrid::new(2, 8, false).unwrap();
        let fam = cor12(4.0);
        let f = random_complex(&grid, 7);
        let r = ratio_objective(&fam, &f, 4.0, 4).unwrap();
        let moved = f.translated(&[3, -2]).unwrap();
        assert!((ratio_objective(&fam, &moved, 4.0, 4).unwrap() - r).abs() < 1e-10);
        let swapped: Vec<Complex64> = (0..64).map(|i| f.values()[(i % 8) * 8 + i / 8]).collect();
        let swapped = TorusField::from_physical(grid, swapped).unwrap();
        assert!((ratio_objective(&fam, &swapped, 4.0, 4).unwrap() - r).abs() < 1e-10);
    }
}
