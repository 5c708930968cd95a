//! Spot check of `||d1 d2 u||_p <= K (||d1^2 u||_p + ||d2^2 u||_p)` for
//! rapidly decaying functions on `R^2`, approximated on a periodic box.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbols::burkholder;
use crate::torus::{check_exponent, lp_norm, spectral_derivative, TorusField, TorusGrid};

type Profile = fn(f64, f64) -> f64;

fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

const CATALOG: &[(&str, Profile)] = &[
    ("gauss", |x, y| (-PI * (x * x + y * y)).exp()),
    ("gauss-x1x2", |x, y| x * y * (-PI * (x * x + y * y)).exp()),
    ("gauss-quartic", |x, y| {
        (x.powi(4) - 6.0 * x * x * y * y + y.powi(4)) * (-PI * (x * x + y * y)).exp()
    }),
    ("gauss-mixed", |x, y| {
        (x * x - x * y + 2.0 * y.powi(3)) * (-PI * (x * x + 2.0 * y * y) / 2.0).exp()
    }),
    ("gauss-anisotropic", |x, y| {
        (x + y).powi(2) * (-PI * (x * x + 2.0 * y * y)).exp()
    }),
    ("separable", |x, y| {
        (-PI * x * x).exp() + y * (-2.0 * PI * y * y).exp()
    }),
    ("bump", |x, y| bump((x * x + y * y) / 56.25)),
];

/// Names of the built-in test functions.
pub fn catalog_names() -> Vec<&'static str> {
    CATALOG.iter().map(|c| c.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PdeOptions {
    pub half_width: f64,
    pub grid_m: usize,
    pub oversample: usize,
    pub decay_threshold: f64,
    pub tolerance: f64,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            grid_m: 512,
            oversample: 2,
            decay_threshold: 1e-12,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PdeReport {
    pub function: String,
    pub p: f64,
    pub options: PdeOptions,
    pub norm_mixed: f64,
    pub norm_d11: f64,
    pub norm_d22: f64,
    pub ratio: f64,
    pub ceiling: f64,
    pub boundary_jump: f64,
    pub spectral_tail: f64,
    pub within_ceiling: bool,
}

/// Samples the named function on `[-L, L)^2`, checks its periodization
/// error, and measures the derivative ratio. The ratio does not depend on
/// the box scaling, so the derivatives are taken on the unit torus.
pub fn pde_check(name: &str, p: f64, opts: &PdeOptions) -> Result<PdeReport> {
    check_exponent(p)?;
    let u = CATALOG
        .iter()
        .find(|c| c.0 == name)
        .map(|c| c.1)
        .ok_or_else(|| {
            Error::Constraint(format!(
                "unknown test function {name:?} (known: {})",
                catalog_names().join(", ")
            ))
        })?;
    let l = opts.half_width;
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Constraint("box half-width must be positive".into()));
    }
    let m = opts.grid_m;
    let grid = TorusGrid::new(2, m, false)?;
    let field = TorusField::from_fn(grid.clone(), |t| Complex64::new(u(2.0 * l * t[0], 2.0 * l * t[1]), 0.0));
    let umax = field.max_abs();
    if umax == 0.0 {
        return Err(Error::Constraint(format!("{name} vanishes on the grid")));
    }

    let mut jump = 0.0f64;
    for j in 0..m {
        let s = 2.0 * l * grid.coordinate(0, j);
        jump = jump
            .max((u(-l, s) - u(l, s)).abs())
            .max((u(s, -l) - u(s, l)).abs());
    }
    let jump = jump / umax;

    let spec = field.to_spectral();
    let cmax = spec.max_abs();
    let edge = (3 * m / 8) as i64;
    let tail = spec
        .values()
        .iter()
        .enumerate()
        .filter(|(flat, _)| grid.frequency_vector(*flat).iter().any(|x| x.abs() > edge))
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max)
        / cmax;
    if jump > opts.decay_threshold || tail > opts.decay_threshold {
        return Err(Error::Constraint(format!(
            "{name} is not negligible at the box boundary (jump {jump:e}, spectral tail {tail:e})"
        )));
    }
    let spec = spec.with_bandlimit(m / 2 - 1)?;
    let norm = |gamma: [u32; 2]| -> Result<f64> {
        lp_norm(&spectral_derivative(&spec, &gamma)?, p, opts.oversample)
    };
    let norm_mixed = norm([1, 1])?;
    let norm_d11 = norm([2, 0])?;
    let norm_d22 = norm([0, 2])?;
    let den = norm_d11 + norm_d22;
    if den == 0.0 {
        return Err(Error::ZeroDenominator(format!("both pure second derivatives of {name} vanish")));
    }
    let ratio = norm_mixed / den;
    let ceiling = burkholder(p) / 2.0;
    Ok(PdeReport {
        function: name.to_string(),
        p,
        options: opts.clone(),
        norm_mixed,
        norm_d11,
        norm_d22,
        ratio,
        ceiling,
        boundary_jump: jump,
        spectral_tail: tail,
        within_ceiling: ratio <= ceiling + opts.tolerance,
    })
}
