//! Multi-indices, derivative families and the homogeneous symbols
//! `m(xi) = xi^beta / |xi|^|beta|`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::FourierSymbol;

/// Vector of nonnegative integer exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self(entries)
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![0; n];
        v[i] = 1;
        Self(v)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|beta| = beta_1 + ... + beta_n`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `sum_{l in F} beta_l` for a 1-based set `F`.
    pub fn sum_over(&self, set: &ParitySet) -> u32 {
        set.0.iter().map(|&l| self.0[l - 1]).sum()
    }

    /// Adds one to the 0-based coordinate `i`.
    pub fn bumped(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v[i] += 1;
        Self(v)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    /// Parses `"1,0,2"`. Error positions are 1-based character offsets.
    fn from_str(s: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut pos = 1;
        for part in s.split(',') {
            let trimmed = part.trim();
            let lead = part.len() - part.trim_start().len();
            let v = trimmed.parse::<u32>().map_err(|_| Error::Parse {
                position: pos + lead,
                message: format!("expected a nonnegative integer, found {trimmed:?}"),
            })?;
            entries.push(v);
            pos += part.len() + 1;
        }
        Ok(Self(entries))
    }
}

/// A subset of `{1..n}`, stored sorted and 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParitySet(Vec<usize>);

impl ParitySet {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, l: usize) -> bool {
        self.0.binary_search(&l).is_ok()
    }

    /// Sorted complement within `{1..n}`.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        (1..=n).filter(|&l| !self.contains(l)).collect()
    }

    /// The sign vector `b_F`: `-1` on `F`, `+1` elsewhere.
    pub fn sign_vector(&self, n: usize) -> Vec<i64> {
        (1..=n).map(|l| if self.contains(l) { -1 } else { 1 }).collect()
    }
}

impl fmt::Display for ParitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// The instance `(beta, {alpha^j}, p)` with an optional parity certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DerivativeFamily {
    pub n: usize,
    pub beta: MultiIndex,
    pub alphas: Vec<MultiIndex>,
    pub p: f64,
    pub parity_set: Option<ParitySet>,
}

impl DerivativeFamily {
    /// Checks shapes and the exponent. Orders are not required to match here
    /// so that diagnostics can report the mismatch.
    pub fn new(beta: MultiIndex, alphas: Vec<MultiIndex>, p: f64) -> Result<Self> {
        let n = beta.len();
        if n == 0 {
            return Err(Error::InvalidMultiIndex("beta has length zero".into()));
        }
        if alphas.is_empty() {
            return Err(Error::InvalidFamily("at least one alpha is required".into()));
        }
        if let Some(a) = alphas.iter().find(|a| a.len() != n) {
            return Err(Error::InvalidMultiIndex(format!(
                "alpha ({a}) has length {}, beta has length {n}",
                a.len()
            )));
        }
        crate::torus::check_exponent(p)?;
        Ok(Self {
            n,
            beta,
            alphas,
            p,
            parity_set: None,
        })
    }

    /// Same family with `F` found by [`find_parity_set`] attached (if any).
    pub fn with_found_parity_set(mut self) -> Result<Self> {
        self.parity_set = find_parity_set(&self.beta, &self.alphas)?;
        Ok(self)
    }

    /// Attaches a given `F` after checking it.
    pub fn with_parity_set(mut self, set: ParitySet) -> Result<Self> {
        check_parity_set(&self.beta, &self.alphas, &set)?;
        self.parity_set = Some(set);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn orders_match(&self) -> bool {
        let o = self.beta.order();
        self.alphas.iter().all(|a| a.order() == o)
    }

    /// Orders agree and the attached `F`, if any, is a valid certificate.
    pub fn check_invariants(&self) -> Result<()> {
        if !self.orders_match() {
            return Err(Error::InvalidFamily(format!(
                "|beta| = {} differs from some |alpha^j|",
                self.beta.order()
            )));
        }
        if let Some(f) = &self.parity_set {
            check_parity_set(&self.beta, &self.alphas, f)?;
        }
        Ok(())
    }

    /// `|beta|` even and `sum_F beta` odd.
    pub fn is_normalized(&self) -> bool {
        match &self.parity_set {
            Some(f) => self.beta.order() % 2 == 0 && self.beta.sum_over(f) % 2 == 1,
            None => false,
        }
    }

    pub fn symbol(&self) -> HomogeneousSymbol {
        HomogeneousSymbol {
            beta: self.beta.clone(),
        }
    }

    pub fn alpha_symbols(&self) -> Vec<HomogeneousSymbol> {
        self.alphas
            .iter()
            .map(|a| HomogeneousSymbol { beta: a.clone() })
            .collect()
    }

    /// Known upper bound for the best constant: `1` when `beta` is one of
    /// the `alpha^j` (the triangle inequality), and `(p*-1)/2` for the
    /// mixed second derivative against the two pure ones.
    pub fn upper_bound_ref(&self) -> Option<f64> {
        if self.alphas.contains(&self.beta) {
            return Some(1.0);
        }
        let mixed = self.n == 2
            && self.beta.entries() == [1, 1]
            && self.alphas.len() == 2
            && self.alphas.contains(&MultiIndex::new(vec![2, 0]))
            && self.alphas.contains(&MultiIndex::new(vec![0, 2]));
        mixed.then(|| 0.5 * burkholder(self.p))
    }
}

/// `p* - 1` with `p* = max(p, p')`.
pub(crate) fn burkholder(p: f64) -> f64 {
    p.max(p / (p - 1.0)) - 1.0
}

/// `m(xi) = xi^beta / |xi|^|beta|`, zero at the origin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomogeneousSymbol {
    pub beta: MultiIndex,
}

pub fn make_symbol(beta: &MultiIndex) -> Result<HomogeneousSymbol> {
    if beta.is_empty() {
        return Err(Error::InvalidMultiIndex("beta has length zero".into()));
    }
    Ok(HomogeneousSymbol { beta: beta.clone() })
}

impl HomogeneousSymbol {
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn order(&self) -> u32 {
        self.beta.order()
    }

    /// Evaluation at a real point.
    pub fn eval(&self, xi: &[f64]) -> f64 {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        if r2 == 0.0 {
            return 0.0;
        }
        let num: f64 = xi
            .iter()
            .zip(self.beta.entries())
            .map(|(&x, &b)| x.powi(b as i32))
            .product();
        num / radius_pow(r2, self.order())
    }

    /// Gradient at a real point away from the origin.
    pub fn gradient(&self, xi: &[f64]) -> Vec<f64> {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        if r2 == 0.0 {
            return vec![0.0; xi.len()];
        }
        let order = self.order();
        let beta = self.beta.entries();
        let mono: f64 = xi.iter().zip(beta).map(|(&x, &b)| x.powi(b as i32)).product();
        let denom = radius_pow(r2, order);
        (0..xi.len())
            .map(|i| {
                let lead = if beta[i] == 0 {
                    0.0
                } else {
                    let reduced: f64 = xi
                        .iter()
                        .zip(beta)
                        .enumerate()
                        .map(|(j, (&x, &b))| x.powi(if j == i { b as i32 - 1 } else { b as i32 }))
                        .product();
                    beta[i] as f64 * reduced / denom
                };
                lead - order as f64 * mono * xi[i] / (denom * r2)
            })
            .collect()
    }

    /// `max |grad m|` over `1/2 <= |z| <= 4`, estimated from about `samples`
    /// deterministic points, times `safety`.
    pub fn sup_gradient_sampled(&self, samples: usize, safety: f64) -> f64 {
        let n = self.dim();
        let radii = [0.5, 1.0, 2.0, 4.0];
        let per_shell = (samples / radii.len()).max(1);
        let mut best: f64 = 0.0;
        for &r in &radii {
            for dir in sphere_points(n, per_shell) {
                let z: Vec<f64> = dir.iter().map(|d| r * d).collect();
                let g = self.gradient(&z);
                best = best.max(g.iter().map(|x| x * x).sum::<f64>().sqrt());
            }
        }
        safety * best
    }
}

impl FourierSymbol for HomogeneousSymbol {
    fn value(&self, k: &[i64]) -> f64 {
        let xi: Vec<f64> = k.iter().map(|&x| x as f64).collect();
        self.eval(&xi)
    }
}

/// `|xi|^order` from `|xi|^2`, exact for even orders.
fn radius_pow(r2: f64, order: u32) -> f64 {
    if order % 2 == 0 {
        r2.powi((order / 2) as i32)
    } else {
        r2.sqrt().powi(order as i32)
    }
}

/// Deterministic quasi-uniform points on the unit sphere `S^{n-1}`.
fn sphere_points(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        0 => vec![],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            // Per-axis grid on the cube surface, projected radially.
            let side = ((count as f64 / (2 * n) as f64).powf(1.0 / (n - 1) as f64)).ceil() as usize;
            let side = side.max(2);
            let mut out = Vec::new();
            let mut idx = vec![0usize; n - 1];
            for face in 0..n {
                for sign in [-1.0, 1.0] {
                    loop {
                        let mut z = Vec::with_capacity(n);
                        let mut it = idx.iter();
                        for a in 0..n {
                            if a == face {
                                z.push(sign);
                            } else {
                                let j = *it.next().unwrap();
                                z.push(-1.0 + 2.0 * j as f64 / (side - 1) as f64);
                            }
                        }
                        let r = z.iter().map(|x| x * x).sum::<f64>().sqrt();
                        out.push(z.iter().map(|x| x / r).collect());
                        let mut a = 0;
                        while a < n - 1 {
                            idx[a] += 1;
                            if idx[a] < side {
                                break;
                            }
                            idx[a] = 0;
                            a += 1;
                        }
                        if a == n - 1 {
                            break;
                        }
                    }
                }
            }
            out
        }
    }
}

/// `b^beta * n^{-|beta|/2}`, the value of `m` at a sign vector `b`, which by
/// homogeneity and evenness is also its value at every `l b`, `l != 0`.
pub fn eigenvalue_on_sign_vector(s: &HomogeneousSymbol, b: &[i64]) -> Result<f64> {
    if b.len() != s.dim() {
        return Err(Error::ShapeMismatch(format!(
            "sign vector has length {}, symbol has dimension {}",
            b.len(),
            s.dim()
        )));
    }
    if b.iter().any(|&x| x != 1 && x != -1) {
        return Err(Error::InvalidMultiIndex(format!(
            "{b:?} is not a sign vector"
        )));
    }
    if s.order() % 2 == 1 {
        return Err(Error::OddOrder(s.order()));
    }
    let sign: i64 = b
        .iter()
        .zip(s.beta.entries())
        .map(|(&x, &e)| if e % 2 == 1 { x } else { 1 })
        .product();
    Ok(sign as f64 * (s.dim() as f64).powf(-(s.order() as f64) / 2.0))
}

fn check_parity_set(beta: &MultiIndex, alphas: &[MultiIndex], set: &ParitySet) -> Result<()> {
    let n = beta.len();
    if set.0.is_empty() || set.0.len() >= n {
        return Err(Error::InvalidFamily(format!(
            "parity set {set} must be a proper nonempty subset of {{1..{n}}}"
        )));
    }
    if set.0.iter().any(|&l| l == 0 || l > n) {
        return Err(Error::InvalidFamily(format!("parity set {set} out of range")));
    }
    let bp = beta.sum_over(set) % 2;
    if let Some(a) = alphas.iter().find(|a| a.sum_over(set) % 2 == bp) {
        return Err(Error::InvalidFamily(format!(
            "parity set {set}: alpha ({a}) has the same parity as beta"
        )));
    }
    Ok(())
}

/// Smallest proper nonempty `F` (by size, then lexicographically) on which
/// every `alpha^j` has parity opposite to `beta`.
pub fn find_parity_set(beta: &MultiIndex, alphas: &[MultiIndex]) -> Result<Option<ParitySet>> {
    let n = beta.len();
    if n == 0 || alphas.is_empty() {
        return Err(Error::InvalidMultiIndex(
            "beta must be nonempty and at least one alpha is required".into(),
        ));
    }
    if n > 20 {
        return Err(Error::TooLarge(format!("n = {n} exceeds 20")));
    }
    if let Some(a) = alphas.iter().find(|a| a.len() != n) {
        return Err(Error::InvalidMultiIndex(format!(
            "alpha ({a}) has length {}, beta has length {n}",
            a.len()
        )));
    }
    let parity = |v: &MultiIndex, mask: u32| -> u32 {
        v.entries()
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &x)| x)
            .sum::<u32>()
            % 2
    };
    let full = (1u32 << n) - 1;
    let mut best: Option<Vec<usize>> = None;
    for mask in 1..full {
        let bp = parity(beta, mask);
        if alphas.iter().all(|a| parity(a, mask) != bp) {
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect();
            if best
                .as_ref()
                .is_none_or(|b| (members.len(), &members) < (b.len(), b))
            {
                best = Some(members);
            }
        }
    }
    Ok(best.map(ParitySet))
}

/// Makes `sum_F beta` odd (adding `e_s`, `s = min F`) and then `|beta|` even
/// (adding `e_t`, `t = min` of the complement) to `beta` and every `alpha^j`.
pub fn normalize_family(fam: &DerivativeFamily) -> Result<DerivativeFamily> {
    let set = fam
        .parity_set
        .clone()
        .ok_or_else(|| Error::InvalidFamily("no parity set attached".into()))?;
    fam.check_invariants()?;
    check_parity_set(&fam.beta, &fam.alphas, &set)?;
    let mut beta = fam.beta.clone();
    let mut alphas = fam.alphas.clone();
    if beta.sum_over(&set) % 2 == 0 {
        let s = set.0[0] - 1;
        beta = beta.bumped(s);
        alphas = alphas.iter().map(|a| a.bumped(s)).collect();
    }
    if beta.order() % 2 == 1 {
        let t = set.complement(fam.n)[0] - 1;
        beta = beta.bumped(t);
        alphas = alphas.iter().map(|a| a.bumped(t)).collect();
    }
    let out = DerivativeFamily {
        n: fam.n,
        beta,
        alphas,
        p: fam.p,
        parity_set: Some(set),
    };
    out.check_invariants()?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvexCheck {
    pub feasible: bool,
    pub weights: Option<Vec<BigRational>>,
}

impl ConvexCheck {
    /// Weights rendered as `"p/q"` strings (integers without a slash).
    pub fn weight_strings(&self) -> Option<Vec<String>> {
        self.weights
            .as_ref()
            .map(|w| w.iter().map(|x| x.to_string()).collect())
    }
}

/// Decides exactly whether `beta` lies in the convex hull of the `alpha^j`
/// by enumerating basic solutions of `[alpha; 1] lambda = [beta; 1]`.
pub fn convex_combination_check(beta: &MultiIndex, alphas: &[MultiIndex]) -> Result<ConvexCheck> {
    let n = beta.len();
    if alphas.is_empty() {
        return Err(Error::InvalidFamily("at least one alpha is required".into()));
    }
    if alphas.iter().any(|a| a.len() != n) {
        return Err(Error::InvalidMultiIndex("all multi-indices must share a length".into()));
    }
    let q = |x: u32| BigRational::from_integer(BigInt::from(x));
    let rows = n + 1;
    let column = |j: usize| -> Vec<BigRational> {
        let mut c: Vec<BigRational> = alphas[j].entries().iter().map(|&x| q(x)).collect();
        c.push(BigRational::one());
        c
    };
    let mut rhs: Vec<BigRational> = beta.entries().iter().map(|&x| q(x)).collect();
    rhs.push(BigRational::one());

    let big_n = alphas.len();
    for size in 1..=big_n.min(rows) {
        for subset in combinations(big_n, size) {
            let cols: Vec<Vec<BigRational>> = subset.iter().map(|&j| column(j)).collect();
            if let Some(lambda) = solve_unique(&cols, &rhs) {
                if lambda.iter().all(|x| !x.is_negative()) {
                    let mut weights = vec![BigRational::zero(); big_n];
                    for (&j, x) in subset.iter().zip(lambda) {
                        weights[j] = x;
                    }
                    return Ok(ConvexCheck {
                        feasible: true,
                        weights: Some(weights),
                    });
                }
            }
        }
    }
    Ok(ConvexCheck {
        feasible: false,
        weights: None,
    })
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Solves `sum_j lambda_j cols[j] = rhs` when the columns are independent
/// and the system is consistent.
fn solve_unique(cols: &[Vec<BigRational>], rhs: &[BigRational]) -> Option<Vec<BigRational>> {
    let rows = rhs.len();
    let k = cols.len();
    let mut a: Vec<Vec<BigRational>> = (0..rows)
        .map(|i| {
            let mut r: Vec<BigRational> = cols.iter().map(|c| c[i].clone()).collect();
            r.push(rhs[i].clone());
            r
        })
        .collect();
    let mut pivot_row = 0;
    for col in 0..k {
        let p = (pivot_row..rows).find(|&r| !a[r][col].is_zero())?;
        a.swap(pivot_row, p);
        let inv = a[pivot_row][col].recip();
        for x in a[pivot_row].iter_mut() {
            *x *= &inv;
        }
        for r in 0..rows {
            if r != pivot_row && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in 0..=k {
                    let delta = &factor * &a[pivot_row][c];
                    a[r][c] -= delta;
                }
            }
        }
        pivot_row += 1;
    }
    if a[k..].iter().any(|r| !r[k].is_zero()) {
        return None;
    }
    Some((0..k).map(|i| a[i][k].clone()).collect())
}
