//! Paley-Walsh martingales on the `2^r`-atom dyadic probability space, exact
//! sign-transform ratios, a seeded lower-bound search for the UMD constant
//! of the scalars, and the sign-field distribution counts.
//!
//! Atom `w` in `0..2^r` carries the signs `eps_i(w) = -1` if bit `i-1` of `w`
//! is set and `+1` otherwise. The table `d_l` is indexed by the low `l-1`
//! bits of `w`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{check_exponent, TorusGrid};

pub const MAX_STEPS: usize = 20;
const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalshMartingale {
    tables: Vec<Vec<f64>>,
}

impl WalshMartingale {
    pub fn new(tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::InvalidMartingale("at least one step is required".into()));
        }
        if tables.len() > MAX_STEPS {
            return Err(Error::TooLarge(format!(
                "{} steps exceeds {MAX_STEPS}",
                tables.len()
            )));
        }
        for (l, t) in tables.iter().enumerate() {
            if t.len() != 1 << l {
                return Err(Error::InvalidMartingale(format!(
                    "table d_{} has {} entries, expected {}",
                    l + 1,
                    t.len(),
                    1usize << l
                )));
            }
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("table d_{}", l + 1)));
            }
        }
        Ok(Self { tables })
    }

    pub fn steps(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    pub fn atoms(&self) -> usize {
        1 << self.steps()
    }

    /// `sum_l sigma_l eps_l(w) d_l(w)` at atom `w`.
    #[inline]
    pub fn transformed_value(&self, w: usize, sigma: &[i8]) -> f64 {
        let mut acc = 0.0;
        for (l, t) in self.tables.iter().enumerate() {
            let d = t[w & ((1 << l) - 1)];
            let eps = if w >> l & 1 == 1 { -1.0 } else { 1.0 };
            acc += sigma[l] as f64 * eps * d;
        }
        acc
    }

    /// The same martingale with increment `l` multiplied by `sigma_l`.
    pub fn transformed(&self, sigma: &[i8]) -> Result<Self> {
        check_signs(sigma, self.steps())?;
        let tables = self
            .tables
            .iter()
            .zip(sigma)
            .map(|(t, &s)| t.iter().map(|x| s as f64 * x).collect())
            .collect();
        Ok(Self { tables })
    }

    /// Largest conditional mean `|E[eps_l d_l | eps_1..eps_{l-1}]|` over all
    /// steps and histories, computed by summing over atoms.
    pub fn max_conditional_mean(&self) -> f64 {
        let r = self.steps();
        let mut worst: f64 = 0.0;
        for l in 0..r {
            let mut sums = vec![0.0; 1 << l];
            let mut counts = vec![0usize; 1 << l];
            for w in 0..self.atoms() {
                let past = w & ((1 << l) - 1);
                let eps = if w >> l & 1 == 1 { -1.0 } else { 1.0 };
                sums[past] += eps * self.tables[l][past];
                counts[past] += 1;
            }
            for (s, c) in sums.iter().zip(counts) {
                worst = worst.max((s / c as f64).abs());
            }
        }
        worst
    }

    /// `E|sum_l sigma_l eps_l d_l|^p` as an exact atom average.
    pub fn moment(&self, sigma: &[i8], p: f64) -> f64 {
        let atoms = self.atoms();
        let chunks = atoms.div_ceil(CHUNK);
        let partial: Vec<(f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Neumaier::default();
                for w in c * CHUNK..((c + 1) * CHUNK).min(atoms) {
                    acc.add(self.transformed_value(w, sigma).abs().powf(p));
                }
                (acc.sum, acc.comp)
            })
            .collect();
        let mut acc = Neumaier::default();
        for (s, c) in partial {
            acc.add(s);
            acc.add(c);
        }
        acc.value() / atoms as f64
    }

    /// `(sum_S c_S prod_{i in S} eps_i)` expansion of `d_l`; entry `S` is the
    /// bitmask of the indices in `S`.
    pub fn walsh_coefficients(&self, l: usize) -> Vec<f64> {
        let mut c = self.tables[l].clone();
        let mut h = 1;
        while h < c.len() {
            for block in (0..c.len()).step_by(2 * h) {
                for i in block..block + h {
                    let (x, y) = (c[i], c[i + h]);
                    c[i] = x + y;
                    c[i + h] = x - y;
                }
            }
            h *= 2;
        }
        let scale = 1.0 / c.len() as f64;
        c.iter_mut().for_each(|x| *x *= scale);
        c
    }
}

#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

fn check_signs(sigma: &[i8], r: usize) -> Result<()> {
    if sigma.len() != r {
        return Err(Error::ShapeMismatch(format!(
            "sign vector has length {}, martingale has {r} steps",
            sigma.len()
        )));
    }
    if sigma.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidMartingale(format!("{sigma:?} is not a sign vector")));
    }
    Ok(())
}

/// `||sum sigma_l eps_l d_l||_p / ||sum eps_l d_l||_p`.
pub fn transform_ratio(m: &WalshMartingale, sigma: &[i8], p: f64) -> Result<f64> {
    check_exponent(p)?;
    check_signs(sigma, m.steps())?;
    let plus = vec![1i8; m.steps()];
    let den = m.moment(&plus, p);
    if den == 0.0 {
        return Err(Error::InvalidMartingale("the martingale vanishes identically".into()));
    }
    Ok((m.moment(sigma, p) / den).powf(1.0 / p))
}

/// `p* - 1` where `p* = max(p, p/(p-1))`.
pub fn burkholder_ceiling(p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(crate::symbols::burkholder(p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UmdSearchResult {
    pub best_ratio: f64,
    pub martingale: WalshMartingale,
    pub sigma: Vec<i8>,
    pub evaluations: usize,
    pub start_index: usize,
}

/// Number of independent starts used by [`umd_lower_search`].
pub const SEARCH_STARTS: usize = 4;

/// Multi-start local search for `sup transform_ratio` over `r`-step
/// martingales and signs. `budget` counts ratio evaluations over all starts.
/// The result is an exactly evaluated ratio, so it is a lower bound for the
/// scalar UMD constant.
pub fn umd_lower_search(r: usize, p: f64, budget: usize, seed: u64) -> Result<UmdSearchResult> {
    check_exponent(p)?;
    if r == 0 || r > 14 {
        return Err(Error::InvalidMartingale(format!("r = {r} is outside 1..=14")));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..SEARCH_STARTS).map(|_| master.random()).collect();
    let per_start = (budget / SEARCH_STARTS).max(1);
    let results: Vec<Result<UmdSearchResult>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| search_one(r, p, per_start, s, i))
        .collect();
    let mut best: Option<UmdSearchResult> = None;
    let mut total = 0;
    for res in results {
        let res = res?;
        total += res.evaluations;
        if best.as_ref().is_none_or(|b| res.best_ratio > b.best_ratio) {
            best = Some(res);
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = total;
    Ok(best)
}

fn search_one(r: usize, p: f64, budget: usize, seed: u64, index: usize) -> Result<UmdSearchResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let tables: Vec<Vec<f64>> = (0..r)
        .map(|l| (0..1usize << l).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    let mut m = WalshMartingale::new(tables)?;
    // Signs constant on the first r-1 steps give ratio 1 for every table.
    let plateau = |s: &[i8]| r >= 3 && s[..r - 1].iter().all(|&x| x == s[0]);
    let mut sigma: Vec<i8> = (0..r)
        .map(|l| {
            let up = if index % 2 == 0 {
                l % 2 == 0
            } else {
                rng.random::<bool>()
            };
            if up { 1 } else { -1 }
        })
        .collect();
    if plateau(&sigma) {
        sigma[0] = -sigma[0];
    }
    let mut evals = 0;
    let eval = |m: &WalshMartingale, s: &[i8], evals: &mut usize| -> f64 {
        *evals += 1;
        transform_ratio(m, s, p).unwrap_or(0.0)
    };
    let mut best = eval(&m, &sigma, &mut evals);
    let mut scale = 1.0;
    while evals < budget {
        let mut accepted = 0;
        let tries = 4 * r;
        for _ in 0..tries {
            if evals >= budget {
                break;
            }
            let l = rng.random_range(0..r);
            let j = rng.random_range(0..1usize << l);
            let old = m.tables[l][j];
            let factor = (scale * normal.sample(&mut rng)).exp();
            let flip = rng.random::<f64>() < 0.1;
            m.tables[l][j] = if flip { -old * factor } else { old * factor };
            let v = eval(&m, &sigma, &mut evals);
            if v > best {
                best = v;
                accepted += 1;
            } else {
                m.tables[l][j] = old;
            }
        }
        if accepted == 0 {
            scale = (scale * 0.7).max(0.02);
        } else {
            scale = (scale * 1.2).min(2.0);
        }
        for l in 0..r {
            if evals >= budget {
                break;
            }
            sigma[l] = -sigma[l];
            if plateau(&sigma) {
                sigma[l] = -sigma[l];
                continue;
            }
            let v = eval(&m, &sigma, &mut evals);
            if v > best {
                best = v;
            } else {
                sigma[l] = -sigma[l];
            }
        }
    }
    Ok(UmdSearchResult {
        best_ratio: best,
        martingale: m,
        sigma,
        evaluations: evals,
        start_index: index,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignFieldReport {
    /// `(positive, negative)` counts of `sgn(b.t)` per vector.
    pub counts: Vec<(u64, u64)>,
    /// Joint counts over the product grid, indexed by the bitmask of
    /// negative signs.
    pub joint: Vec<u64>,
    pub points_per_factor: u64,
    pub balanced: bool,
    pub factorizes: bool,
}

/// Exact counts of `sgn(b_l . t_l)` on a grid and on the product of `r`
/// copies of it, where `sgn` is the 1-periodic extension of the sign on
/// `[-1/2, 1/2)`.
pub fn sign_field_check(bs: &[Vec<i64>], grid: &TorusGrid) -> Result<SignFieldReport> {
    let n = grid.dim();
    if bs.is_empty() {
        return Err(Error::ShapeMismatch("no sign vectors given".into()));
    }
    for b in bs {
        if b.len() != n || b.iter().any(|&x| x != 1 && x != -1) {
            return Err(Error::ShapeMismatch(format!(
                "{b:?} is not a sign vector of length {n}"
            )));
        }
    }
    let signs: Vec<Vec<bool>> = bs
        .iter()
        .map(|b| negative_signs(b, grid))
        .collect::<Result<_>>()?;
    let per = grid.len() as u64;
    let counts: Vec<(u64, u64)> = signs
        .iter()
        .map(|s| {
            let neg = s.iter().filter(|&&x| x).count() as u64;
            (per - neg, neg)
        })
        .collect();

    let r = bs.len();
    let total = (grid.len() as u128).checked_pow(r as u32).unwrap_or(u128::MAX);
    if total > 1 << 26 {
        return Err(Error::TooLarge(format!(
            "product grid with {total} points is too large to enumerate"
        )));
    }
    let mut joint = vec![0u64; 1 << r];
    let g = grid.len();
    for flat in 0..total as usize {
        let mut rem = flat;
        let mut pattern = 0;
        for l in (0..r).rev() {
            if signs[l][rem % g] {
                pattern |= 1 << l;
            }
            rem /= g;
        }
        joint[pattern] += 1;
    }
    let balanced = counts.iter().all(|&(a, b)| a == b);
    let factorizes = joint.iter().enumerate().all(|(pattern, &c)| {
        let mut prod: u128 = 1;
        for (l, &(pos, neg)) in counts.iter().enumerate() {
            prod *= if pattern >> l & 1 == 1 { neg } else { pos } as u128;
        }
        c as u128 == prod
    });
    Ok(SignFieldReport {
        counts,
        joint,
        points_per_factor: per,
        balanced,
        factorizes,
    })
}

/// `true` where `sgn(b.t) = -1`. Fails if some grid point sits on a jump.
fn negative_signs(b: &[i64], grid: &TorusGrid) -> Result<Vec<bool>> {
    // With t_i = (2 k_i + s_i)/(2M) - 1/2, b.t = num/(2M) for the integer
    // num = sum b_i (2 k_i + s_i) - M sum b_i.
    let m = grid.points_per_axis() as i64;
    let n = grid.dim();
    let shifts: Vec<i64> = grid.shifts().iter().map(|&s| s as i64).collect();
    let bsum: i64 = b.iter().sum();
    let mut idx = vec![0; n];
    let mut out = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        grid.unravel(flat, &mut idx);
        let num: i64 = (0..n)
            .map(|a| b[a] * (2 * idx[a] as i64 + shifts[a]))
            .sum::<i64>()
            - m * bsum;
        let red = (num + m).rem_euclid(2 * m) - m;
        if red == 0 || red == -m {
            return Err(Error::DegenerateSignGrid(format!(
                "b = {b:?} puts grid point {idx:?} on a jump of the sign function"
            )));
        }
        out.push(red < 0);
    }
    Ok(out)
}
