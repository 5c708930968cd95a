use derivbound::estimator::{maximize_ratio, EstimateOptions};
use derivbound::io::load_field;
use derivbound::martingale::{burkholder_ceiling, umd_lower_search};
use derivbound::pde::{catalog_names, pde_check, PdeOptions};
use derivbound::symbols::{
    convex_combination_check, eigenvalue_on_sign_vector, find_parity_set, make_symbol, normalize_family,
    DerivativeFamily,
};
use derivbound::torus::{apply_multiplier, TorusField, TorusGrid};
use derivbound::transference::{
    dyadic_epsilons, dyadic_sweep, lemma22_sweep, lemma23_sweep, pairing_identity_check, Gaussian, SweepResult,
};
use derivbound::witness::{eigen_witness_pair, lift_to_torus, run_pipeline, square_wave_poly, PipelineOptions};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{
    EstimateArgs, FamilyArgs, Lemma, MartingaleArgs, PdeArgs, PipelineArgs, TransferArgs, WitnessArgs,
};
use crate::emit::{num, OutDir, Outcome};
use crate::error::CliError;
use crate::svg::{Axes, Series};

/// Slack on known upper bounds before an estimate counts as a violation.
pub const CEILING_SLACK: f64 = 0.02;
/// Largest admissible eigen-relation residual relative to the witness norm.
pub const EIGEN_TOLERANCE: f64 = 1e-12;

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Failure(e.to_string()))
}

fn normalized(args: &FamilyArgs) -> Result<(DerivativeFamily, bool), CliError> {
    let fam = args.family()?.with_found_parity_set()?;
    if fam.is_normalized() {
        return Ok((fam, false));
    }
    if fam.parity_set.is_none() {
        return Err(CliError::Input(format!(
            "beta = {} admits no parity set against the given alphas",
            fam.beta
        )));
    }
    Ok((normalize_family(&fam)?, true))
}

pub fn check_family(args: &FamilyArgs, out: &mut OutDir) -> Result<Outcome, CliError> {
    let fam = args.family()?;
    let parity = find_parity_set(&fam.beta, &fam.alphas)?;
    let normalized = match &parity {
        Some(set) => match fam.clone().with_parity_set(set.clone()).and_then(|f| normalize_family(&f)) {
            Ok(f) => json!({ "beta": f.beta, "alphas": f.alphas, "unchanged": f.beta == fam.beta }),
            Err(e) => json!({ "error": e.to_string() }),
        },
        None => Value::Null,
    };
    let convex = convex_combination_check(&fam.beta, &fam.alphas)?;
    let fam = match parity.clone() {
        Some(set) if fam.orders_match() => fam.with_parity_set(set)?,
        _ => fam,
    };
    let orders: Vec<u32> = fam.alphas.iter().map(|a| a.order()).collect();
    let result = json!({
        "family": fam,
        "betaOrder": fam.beta.order(),
        "alphaOrders": orders,
        "ordersMatch": fam.orders_match(),
        "paritySet": parity.as_ref().map(|s| s.members().to_vec()),
        "paritySetDisplay": parity.as_ref().map(|s| s.to_string()).unwrap_or_else(|| "no valid F".into()),
        "normalized": normalized,
        "convexCombination": {
            "feasible": convex.feasible,
            "weights": convex.weight_strings(),
        },
        "upperBoundRef": fam.upper_bound_ref(),
    });
    println!(
        "orders match: {}; F = {}; convex: {}",
        fam.orders_match(),
        result["paritySetDisplay"].as_str().unwrap_or_default(),
        convex.feasible
    );
    out.json("family.json", &result)?;
    Ok(Outcome {
        result,
        violations: Vec::new(),
    })
}

pub fn estimate(args: &EstimateArgs, seed: u64, out: &mut OutDir) -> Result<Outcome, CliError> {
    let fam = args.family.family()?;
    fam.check_invariants()?;
    let fam = fam.with_found_parity_set()?;
    let grid = TorusGrid::new(fam.n, args.grid, false)?;
    let opts = EstimateOptions {
        starts: args.starts,
        max_iter: args.max_iter,
        tol: args.tol,
        seed,
        oversample: args.oversample,
        eps_g: args.eps_g,
        ..Default::default()
    };
    let warm = args.warm_from.as_deref().map(load_field).transpose()?;
    let report = maximize_ratio(&fam, fam.p, &grid, &opts, warm.as_ref())?;

    let mut violations = Vec::new();
    if let Some(ub) = report.upper_bound_ref {
        if report.k_lower > ub + CEILING_SLACK {
            violations.push(format!("kLower {} exceeds the upper bound {ub}", report.k_lower));
        }
    }
    if report.trace.windows(2).any(|w| w[1].1 < w[0].1) {
        violations.push("trace is not monotone".into());
    }

    out.field("witness.csv", &report.witness)?;
    let rows: Vec<Vec<String>> = report
        .trace
        .iter()
        .map(|&(i, r)| vec![i.to_string(), num(r)])
        .collect();
    out.csv("trace.csv", &["iteration", "ratio"], &rows)?;
    if let Some(extra) = &args.csv {
        crate::emit::write_csv(extra, &["iteration", "ratio"], &rows)?;
    }
    let pts: Vec<(f64, f64)> = report.trace.iter().map(|&(i, r)| (i as f64, r)).collect();
    let mut series = vec![Series::new("ratio", pts.clone())];
    if let (Some(ub), Some(last)) = (report.upper_bound_ref, pts.last()) {
        series.push(Series::new("upper bound", vec![(0.0, ub), (last.0, ub)]));
    }
    out.chart(
        "convergence.svg",
        Axes {
            title: "Best start: ratio by iteration",
            x_label: "iteration",
            y_label: "ratio",
            log_x: false,
            log_y: false,
        },
        &series,
    )?;
    println!(
        "kLower = {:.9} (scan {:.9} at {:?}, upper bound {:?})",
        report.k_lower, report.scan.best_k, report.scan.best_freq, report.upper_bound_ref
    );
    Ok(Outcome {
        result: to_value(&report)?,
        violations,
    })
}

/// `||T a - lambda a||_2 / ||a||_2`.
fn eigen_residual(a: &TorusField, sym: &derivbound::symbols::HomogeneousSymbol, lambda: f64) -> Result<f64, CliError> {
    let ta = apply_multiplier(a, sym);
    let d = ta.combine(Complex64::new(1.0, 0.0), a, Complex64::new(-lambda, 0.0))?;
    Ok(d.l2_norm_spectral() / a.l2_norm_spectral())
}

pub fn witness(args: &WitnessArgs, out: &mut OutDir) -> Result<Outcome, CliError> {
    let (fam, changed) = normalized(&args.family)?;
    let a = square_wave_poly(args.degree)?;
    let grid = TorusGrid::sign_safe(fam.n, args.grid)?;
    let (plus, minus) = eigen_witness_pair(&fam, &a, &grid)?;
    let set = fam.parity_set.as_ref().expect("normalized families carry F");
    let b_minus = set.sign_vector(fam.n);
    let b_plus = vec![1i64; fam.n];

    let mut residuals = Vec::new();
    let mut violations = Vec::new();
    let mut check = |label: String, a: &TorusField, sym, b: &[i64]| -> Result<(), CliError> {
        let lambda = eigenvalue_on_sign_vector(sym, b)?;
        let r = eigen_residual(a, sym, lambda)?;
        if r > EIGEN_TOLERANCE {
            violations.push(format!("{label}: residual {r:e}"));
        }
        residuals.push(json!({ "operator": label, "eigenvalue": lambda, "residual": r }));
        Ok(())
    };
    let sym = fam.symbol();
    check("m on a+".into(), &plus, &sym, &b_plus)?;
    check("m on a-".into(), &minus, &sym, &b_minus)?;
    for (j, s) in fam.alpha_symbols().iter().enumerate() {
        check(format!("m_{} on a+", j + 1), &plus, s, &b_plus)?;
        check(format!("m_{} on a-", j + 1), &minus, s, &b_minus)?;
    }
    out.field("a_plus.csv", &plus)?;
    out.field("a_minus.csv", &minus)?;
    let result = json!({
        "family": fam,
        "normalizedFromInput": changed,
        "degree": args.degree,
        "gridM": args.grid,
        "gridShifts": grid.shifts(),
        "bPlus": b_plus,
        "bMinus": b_minus,
        "normPlus": plus.l2_norm_spectral(),
        "normMinus": minus.l2_norm_spectral(),
        "eigenRelations": residuals,
        "files": ["a_plus.csv", "a_minus.csv"],
    });
    out.json("manifest.json", &result)?;
    println!("eigen-witnesses written; {} relation(s) checked", result["eigenRelations"].as_array().map_or(0, Vec::len));
    Ok(Outcome { result, violations })
}

pub fn pipeline(args: &PipelineArgs, seed: u64, out: &mut OutDir) -> Result<Outcome, CliError> {
    let (fam, changed) = normalized(&args.family)?;
    let opts = PipelineOptions {
        r: args.r,
        degree: args.degree,
        grid_m: args.grid,
        oversample: args.oversample,
        walsh_budget: args.budget,
        seed,
        sigma: args.sigma.clone(),
        ..Default::default()
    };
    if let Some(s) = &opts.sigma {
        if s.len() != opts.r || s.iter().any(|&x| x != 1 && x != -1) {
            return Err(CliError::Input(format!("sigma must hold {} entries from {{1, -1}}", opts.r)));
        }
    }
    let report = run_pipeline(&fam, &opts)?;
    let ceiling = burkholder_ceiling(fam.p)?;
    let mut violations = Vec::new();
    if let Some(ub) = fam.upper_bound_ref() {
        if report.lower_bound > ub + CEILING_SLACK {
            violations.push(format!("lower bound {} exceeds the upper bound {ub}", report.lower_bound));
        }
    }
    if report.walsh_ratio > ceiling + 1e-9 {
        violations.push(format!("Walsh ratio {} exceeds p*-1 = {ceiling}", report.walsh_ratio));
    }

    let a = square_wave_poly(args.degree)?;
    let grid = TorusGrid::sign_safe(fam.n, args.grid)?;
    let mut files = Vec::new();
    for (l, b) in report.b_vectors.iter().enumerate() {
        let name = format!("zeta_{}.csv", l + 1);
        out.field(&name, &lift_to_torus(&a, b, &grid)?)?;
        files.push(name);
    }
    let mut result = to_value(&report)?;
    result["normalizedFromInput"] = json!(changed);
    result["walshCeiling"] = json!(ceiling);
    result["upperBoundRef"] = json!(fam.upper_bound_ref());
    result["files"] = json!(files);
    println!(
        "certified lower bound {:.9} (delta {:.3e}, Walsh ratio {:.6})",
        report.lower_bound, report.delta, report.walsh_ratio
    );
    Ok(Outcome { result, violations })
}

pub fn martingale(args: &MartingaleArgs, seed: u64, out: &mut OutDir) -> Result<Outcome, CliError> {
    let res = umd_lower_search(args.r, args.p, args.budget, seed)?;
    let ceiling = burkholder_ceiling(args.p)?;
    let mut violations = Vec::new();
    if res.best_ratio > ceiling + 1e-9 {
        violations.push(format!("ratio {} exceeds p*-1 = {ceiling}", res.best_ratio));
    }
    let result = json!({
        "r": args.r,
        "p": args.p,
        "budget": args.budget,
        "bestRatio": res.best_ratio,
        "ceiling": ceiling,
        "sigma": res.sigma,
        "tables": res.martingale.tables(),
        "evaluations": res.evaluations,
        "startIndex": res.start_index,
    });
    let rows: Vec<Vec<String>> = res
        .martingale
        .tables()
        .iter()
        .enumerate()
        .flat_map(|(l, t)| t.iter().enumerate().map(move |(w, &v)| vec![(l + 1).to_string(), w.to_string(), num(v)]))
        .collect();
    out.csv("tables.csv", &["step", "prefix", "value"], &rows)?;
    println!("best ratio {:.9} (ceiling {ceiling})", res.best_ratio);
    Ok(Outcome { result, violations })
}

fn sweep_outputs(out: &mut OutDir, title: &str, s: &SweepResult) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = (0..s.epsilons.len())
        .map(|i| {
            vec![
                num(s.epsilons[i]),
                num(s.values[i]),
                num(s.targets[i]),
                num(s.errors[i]),
                num(s.tail_bounds[i]),
            ]
        })
        .collect();
    out.csv("sweep.csv", &["eps", "value", "target", "error", "tail_bound"], &rows)?;
    let err: Vec<(f64, f64)> = s.epsilons.iter().cloned().zip(s.errors.iter().cloned()).collect();
    out.chart(
        "convergence.svg",
        Axes {
            title,
            x_label: "eps",
            y_label: "absolute error",
            log_x: true,
            log_y: true,
        },
        &[Series::new("error", err)],
    )
}

pub fn transfer(args: &TransferArgs, out: &mut OutDir) -> Result<Outcome, CliError> {
    let eps = dyadic_epsilons(args.eps_from, args.eps_to);
    if eps.is_empty() {
        return Err(CliError::Input("empty epsilon range".into()));
    }
    let p = args.p;
    let result = match args.lemma {
        Lemma::Scaling => {
            let a = square_wave_poly(args.degree)?;
            let m = (2 * args.degree as usize + 2).next_power_of_two().max(8);
            let grid = TorusGrid::new(args.n, m, false)?;
            let f = lift_to_torus(&a, &vec![1; args.n], &grid)?;
            let s = lemma22_sweep(&Gaussian::window(p), &f, p, &eps)?;
            sweep_outputs(out, "Scaling limit: error against eps", &s)?;
            sweep_value(&s)?
        }
        Lemma::Poisson => {
            let s = lemma23_sweep(&Gaussian::window(p), args.n, p, &eps)?;
            sweep_outputs(out, "Periodization limit: error against eps", &s)?;
            sweep_value(&s)?
        }
        Lemma::Pairing => {
            let sym = make_symbol(&args.beta)?;
            let s = pairing_identity_check(&sym, &args.k, &args.l, p, &eps)?;
            sweep_outputs(out, "Pairing identity: error against eps", &s)?;
            let mut v = sweep_value(&s)?;
            v["diagonal"] = json!(args.k == args.l);
            v
        }
        Lemma::Dyadic => {
            let sym = make_symbol(&args.beta)?;
            let d = dyadic_sweep(&sym, &args.k, args.block, &eps)?;
            let rows: Vec<Vec<String>> = d
                .bounds
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    vec![
                        num(d.epsilons[i]),
                        num(d.scales[i]),
                        num(b.pointwise_bound),
                        num(b.derivative_bound),
                    ]
                })
                .collect();
            out.csv("sweep.csv", &["eps", "scale", "pointwise_bound", "derivative_bound"], &rows)?;
            let pick = |f: fn(&derivbound::transference::BlockBound) -> f64| -> Vec<(f64, f64)> {
                d.scales.iter().cloned().zip(d.bounds.iter().map(f)).collect()
            };
            out.chart(
                "convergence.svg",
                Axes {
                    title: "Rescaled block symbol bounds",
                    x_label: "2^l eps",
                    y_label: "bound",
                    log_x: true,
                    log_y: true,
                },
                &[
                    Series::new("pointwise", pick(|b| b.pointwise_bound)),
                    Series::new("derivative", pick(|b| b.derivative_bound)),
                ],
            )?;
            to_value(&d)?
        }
    };
    out.json("sweep.json", &result)?;
    println!("sweep over {} epsilons written", eps.len());
    Ok(Outcome {
        result,
        violations: Vec::new(),
    })
}

fn sweep_value(s: &SweepResult) -> Result<Value, CliError> {
    let mut v = to_value(s)?;
    v["finalRelativeError"] = json!(s.final_relative_error());
    Ok(v)
}

pub fn pde(args: &PdeArgs, out: &mut OutDir) -> Result<Outcome, CliError> {
    let names: Vec<String> = match &args.function {
        Some(f) => vec![f.clone()],
        None => catalog_names().iter().map(|s| s.to_string()).collect(),
    };
    let opts = PdeOptions {
        half_width: args.half_width,
        grid_m: args.grid,
        tolerance: args.tolerance,
        ..Default::default()
    };
    let mut reports = Vec::new();
    let mut violations = Vec::new();
    for name in &names {
        let r = pde_check(name, args.p, &opts)?;
        if !r.within_ceiling {
            violations.push(format!("{name}: ratio {} above {}", r.ratio, r.ceiling));
        }
        println!("{name}: ratio {:.9} (ceiling {:.6})", r.ratio, r.ceiling);
        reports.push(r);
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.function.clone(),
                num(r.ratio),
                num(r.ceiling),
                num(r.norm_mixed),
                num(r.norm_d11),
                num(r.norm_d22),
            ]
        })
        .collect();
    out.csv("ratios.csv", &["function", "ratio", "ceiling", "norm_d12", "norm_d11", "norm_d22"], &rows)?;
    Ok(Outcome {
        result: json!({ "p": args.p, "checks": reports }),
        violations,
    })
}
