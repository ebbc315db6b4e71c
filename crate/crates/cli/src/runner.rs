//! Dispatches one parsed config to the core library and writes the outputs.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde_json::json;
use twistkam_core::action::{f_profile, minimize_endpoints, MinimizeOpts};
use twistkam_core::dynamics::{conjugate_scan, green_slope, twist_step, PhasePoint, ScanRegion};
use twistkam_core::genfun::GeneratingFunction;
use twistkam_core::grid::TorusGrid;
use twistkam_core::invariant_graphs::{
    build_graph, compare_graphs, foliation_section, graph_cohomology, periodic_fiber,
};
use twistkam_core::weakkam::{alpha_profile, dual_aubry_graph, mane, stilde, CohomologyClass};

use crate::config::{vec_param, ExperimentConfig};
use crate::report::{check, Check, OutputSink};
use crate::CliError;

pub struct Outcome {
    pub checks: Vec<Check>,
    /// A declared `assert_*` that did not hold; reported after the outputs
    /// are written, then mapped to the audit-failure exit code.
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(checks: Vec<Check>) -> Self {
        Outcome {
            checks,
            failure: None,
        }
    }
}

fn csv_row(fields: &[String]) -> String {
    fields.join(",")
}

fn fmt_vec(v: &DVector<f64>) -> Vec<String> {
    v.iter().map(|x| format!("{x}")).collect()
}

impl ExperimentConfig {
    fn opts(&self) -> MinimizeOpts {
        let mut o = MinimizeOpts::with_seed(self.seed);
        if let Some(m) = self.params.multistarts {
            o.multistarts = m;
        }
        o
    }

    fn grid(&self, d: usize) -> Result<TorusGrid, CliError> {
        let res = self
            .params
            .grid
            .clone()
            .ok_or_else(|| CliError::Config("missing params.grid".into()))?;
        if res.len() != d {
            return Err(CliError::Config(format!(
                "params.grid has {} entries, map dimension is {d}",
                res.len()
            )));
        }
        Ok(TorusGrid::new(res))
    }

    fn probe(&self, d: usize) -> TorusGrid {
        match &self.params.grid {
            Some(res) if res.len() == d => TorusGrid::new(res.clone()),
            _ => TorusGrid::new(vec![1; d]),
        }
    }

    fn r(&self, d: usize) -> Vec<i64> {
        self.params.r.clone().unwrap_or_else(|| vec![0; d])
    }

    fn classes(&self, d: usize) -> Result<Vec<CohomologyClass>, CliError> {
        let raw = self
            .params
            .classes
            .clone()
            .ok_or_else(|| CliError::Config("missing params.classes".into()))?;
        raw.iter()
            .map(|c| {
                if c.len() != d {
                    return Err(CliError::Config(format!(
                        "class {c:?} has wrong dimension (expected {d})"
                    )));
                }
                Ok(CohomologyClass::new(DVector::from_row_slice(c)))
            })
            .collect()
    }

    fn cohomology(&self, d: usize) -> Result<CohomologyClass, CliError> {
        let c = vec_param(&self.params.c, "c")?;
        if c.len() != d {
            return Err(CliError::Config("params.c has wrong dimension".into()));
        }
        Ok(CohomologyClass::new(c))
    }
}

pub fn run(cfg: &ExperimentConfig, sink: &mut OutputSink) -> Result<Outcome, CliError> {
    let s = cfg.build_genfun()?;
    match cfg.command.as_str() {
        "audit" => run_audit(cfg, &s, sink),
        "orbit" => run_orbit(cfg, &s, sink),
        "conjugate-scan" => run_conjugate_scan(cfg, &s, sink),
        "green" => run_green(cfg, &s, sink),
        "minimize" => run_minimize(cfg, &s, sink),
        "f-profile" => run_f_profile(cfg, &s, sink),
        "periodic" => run_periodic(cfg, &s, sink),
        "graph" => run_graph(cfg, &s, sink),
        "alpha" => run_alpha(cfg, &s, sink),
        "mane" => run_mane(cfg, &s, sink),
        "aubry" => run_aubry(cfg, &s, sink),
        "foliation" => run_foliation(cfg, &s, sink),
        "crosscheck" => run_crosscheck(cfg, &s, sink),
        _ => unreachable!("validated at parse time"),
    }
}

fn run_audit(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let n_samples = cfg.params.samples.unwrap_or(256);
    let report = s.audit(n_samples, cfg.seed).map_err(CliError::from_core)?;
    sink.write_json("audit.json", &report)?;
    let checks = vec![
        check(
            "twist_lower_bound_positive",
            report.twist_lower_bound > 0.0,
            report.twist_lower_bound,
        ),
        check(
            "periodicity_residual_small",
            report.periodicity_residual <= 1e-8,
            report.periodicity_residual,
        ),
        check(
            "coercivity_quadratic_growth",
            report.coercivity_gamma > 0.0,
            report.coercivity_gamma,
        ),
    ];
    Ok(Outcome::ok(checks))
}

fn run_orbit(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let x = vec_param(&cfg.params.x, "x")?;
    let p = vec_param(&cfg.params.p, "p")?;
    let steps = cfg.params.steps.unwrap_or(100);
    if steps < 0 {
        return Err(CliError::Config("params.steps must be >= 0".into()));
    }
    let mut pt = PhasePoint::new(x, p);
    let mut csv = String::new();
    let mut header = vec!["step".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.extend((1..=d).map(|i| format!("p_{i}")));
    writeln!(csv, "{}", csv_row(&header)).unwrap();
    for step in 0..=steps {
        let mut row = vec![format!("{step}")];
        row.extend(fmt_vec(&pt.x));
        row.extend(fmt_vec(&pt.p));
        writeln!(csv, "{}", csv_row(&row)).unwrap();
        if step < steps {
            pt = twist_step(s, &pt).map_err(CliError::from_core)?;
        }
    }
    sink.write("orbit.csv", &csv)?;
    Ok(Outcome::ok(vec![check("orbit_completed", true, steps as f64)]))
}

fn run_conjugate_scan(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let region = ScanRegion {
        base: cfg.grid(d)?,
        p_min: vec_param(&cfg.params.p_min, "p_min")?,
        p_max: vec_param(&cfg.params.p_max, "p_max")?,
        p_res: cfg
            .params
            .p_res
            .ok_or_else(|| CliError::Config("missing params.p_res".into()))?,
    };
    let n_max = cfg.params.n_max.unwrap_or(20);
    let threshold = cfg.params.threshold.unwrap_or(1e-8);
    let report = conjugate_scan(s, &region, n_max, threshold).map_err(CliError::from_core)?;
    sink.write("scan.csv", &report.to_csv())?;
    let degeneracies: Vec<_> = report
        .degeneracies
        .iter()
        .map(|g| {
            json!({
                "n": g.n,
                "x": g.x,
                "p": g.p,
                "min_singular_value": g.min_singular_value,
            })
        })
        .collect();
    sink.write_json(
        "scan.json",
        &json!({
            "first_degenerate_n": report.first_degenerate_n,
            "min_singular_value": report.min_singular_value,
            "threshold": report.threshold,
            "degeneracies": degeneracies,
        }),
    )?;
    let found = report.degeneracy_found();
    let mut checks = vec![check(
        "degeneracy_found",
        found,
        report.min_singular_value,
    )];
    let mut failure = None;
    if let Some(expect) = cfg.params.assert_degeneracy {
        let ok = found == expect;
        checks.push(check("assert_degeneracy", ok, report.min_singular_value));
        if !ok {
            failure = Some(format!(
                "expected degeneracy_found = {expect}, scan found {found}"
            ));
        }
    }
    Ok(Outcome { checks, failure })
}

fn run_green(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let x = vec_param(&cfg.params.x, "x")?;
    let p = vec_param(&cfg.params.p, "p")?;
    let n_iter = cfg.params.n_iter.unwrap_or(64);
    let g = green_slope(s, &PhasePoint::new(x, p), n_iter).map_err(CliError::from_core)?;
    let rows: Vec<Vec<f64>> = g
        .slope
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    sink.write_json(
        "green.json",
        &json!({ "n_iter": g.n_iter, "slope": rows, "gap": g.gap }),
    )?;
    Ok(Outcome::ok(vec![check("green_converged", g.gap <= 1e-6, g.gap)]))
}

fn run_minimize(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let x = vec_param(&cfg.params.x, "x")?;
    let y = vec_param(&cfg.params.y, "y")?;
    let n = cfg
        .params
        .n
        .ok_or_else(|| CliError::Config("missing params.n".into()))?;
    let m = minimize_endpoints(s, &x, &y, n, &cfg.opts()).map_err(CliError::from_core)?;
    let mut csv = String::new();
    let mut header = vec!["k".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    writeln!(csv, "{}", csv_row(&header)).unwrap();
    for (k, pt) in m.segment.points.iter().enumerate() {
        let mut row = vec![format!("{k}")];
        row.extend(fmt_vec(pt));
        writeln!(csv, "{}", csv_row(&row)).unwrap();
    }
    sink.write("minimize.csv", &csv)?;
    sink.write_json(
        "minimize.json",
        &json!({
            "value": m.value,
            "grad_norm": m.grad_norm,
            "newton_iters": m.newton_iters,
            "multistart_count": m.multistart_count,
            "hessian_min_eig": m.hessian_min_eig,
        }),
    )?;
    Ok(Outcome::ok(vec![
            check("first_order_stationary", m.grad_norm <= 1e-8, m.grad_norm),
            check(
                "second_order_minimum",
                m.hessian_min_eig >= 0.0,
                m.hessian_min_eig,
            ),
        ]))
}

fn run_f_profile(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let n = cfg
        .params
        .n
        .ok_or_else(|| CliError::Config("missing params.n".into()))?;
    let r = cfg.r(d);
    let grid = cfg.grid(d)?;
    let prof = f_profile(s, n, &r, &grid, &cfg.opts()).map_err(CliError::from_core)?;
    let mut csv = String::new();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.push("value".to_string());
    writeln!(csv, "{}", csv_row(&header)).unwrap();
    for i in 0..grid.len() {
        let mut row = fmt_vec(&grid.point(i));
        row.push(format!("{}", prof.values[i]));
        writeln!(csv, "{}", csv_row(&row)).unwrap();
    }
    sink.write("profile.csv", &csv)?;
    sink.write_json(
        "profile.json",
        &json!({
            "gap": prof.gap,
            "argmax": prof.argmax,
            "argmin": prof.argmin,
            "n": n,
            "r": r,
        }),
    )?;
    let mut checks = vec![check("gap", true, prof.gap)];
    let mut failure = None;
    if let Some(lo) = cfg.params.assert_gap_above {
        let ok = prof.gap > lo;
        checks.push(check("assert_gap_above", ok, prof.gap));
        if !ok {
            failure = Some(format!("constancy gap {} is not above {lo}", prof.gap));
        }
    }
    if let Some(hi) = cfg.params.assert_gap_below {
        let ok = prof.gap < hi;
        checks.push(check("assert_gap_below", ok, prof.gap));
        if !ok {
            failure = Some(format!("constancy gap {} is not below {hi}", prof.gap));
        }
    }
    Ok(Outcome { checks, failure })
}

fn run_periodic(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let x = vec_param(&cfg.params.x, "x")?;
    let n = cfg
        .params
        .n
        .ok_or_else(|| CliError::Config("missing params.n".into()))?;
    let r = cfg.r(d);
    let fib = periodic_fiber(s, &x, n, &r, &cfg.opts()).map_err(CliError::from_core)?;
    let points: Vec<Vec<f64>> = fib
        .segment
        .points
        .iter()
        .map(|p| p.as_slice().to_vec())
        .collect();
    sink.write_json(
        "periodic.json",
        &json!({
            "p": fib.p.as_slice(),
            "residual": fib.residual,
            "action": fib.segment.action,
            "points": points,
        }),
    )?;
    let tol = cfg.params.threshold.unwrap_or(1e-6);
    Ok(Outcome::ok(vec![check("orbit_closes", fib.residual <= tol, fib.residual)]))
}

fn run_graph(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let n = cfg
        .params
        .n
        .ok_or_else(|| CliError::Config("missing params.n".into()))?;
    let r = cfg.r(d);
    let grid = cfg.grid(d)?;
    let g = build_graph(s, n, &r, &grid, &cfg.opts()).map_err(CliError::from_core)?;
    sink.write("graph.csv", &g.to_csv())?;
    sink.write_json(
        "graph.json",
        &json!({
            "invariance_residual": g.audits.invariance_residual,
            "jacobian_asymmetry": g.audits.jacobian_asymmetry,
            "lipschitz": g.audits.lipschitz,
            "average_p": g.audits.average_p.as_slice(),
            "present_cells": g.present_cells(),
            "total_cells": grid.len(),
        }),
    )?;
    let tol = cfg.params.threshold.unwrap_or(1e-6);
    Ok(Outcome::ok(vec![
            check(
                "invariance_residual",
                g.audits.invariance_residual <= tol,
                g.audits.invariance_residual,
            ),
            check(
                "all_cells_present",
                g.present_cells() == grid.len(),
                g.present_cells() as f64,
            ),
        ]))
}

fn run_alpha(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let classes = cfg.classes(d)?;
    let n_max = cfg.params.n_max.unwrap_or(8);
    let r_max = cfg.params.r_max.unwrap_or(2);
    let probe = cfg.probe(d);
    let prof = alpha_profile(s, &classes, n_max, r_max, &probe, &cfg.opts())
        .map_err(CliError::from_core)?;
    let mut csv = String::new();
    let mut header: Vec<String> = (1..=d).map(|i| format!("c_{i}")).collect();
    header.push("alpha".to_string());
    header.push("N_at".to_string());
    header.extend((1..=d).map(|i| format!("r_at_{i}")));
    writeln!(csv, "{}", csv_row(&header)).unwrap();
    for (c, est) in prof.classes.iter().zip(&prof.estimates) {
        let mut row = fmt_vec(&c.c);
        row.push(format!("{}", est.value));
        match &est.witness {
            Some(w) => {
                row.push(format!("{}", w.n));
                row.extend(w.r.iter().map(|k| format!("{k}")));
            }
            None => {
                row.push(String::new());
                row.extend((0..d).map(|_| String::new()));
            }
        }
        writeln!(csv, "{}", csv_row(&row)).unwrap();
    }
    sink.write("alpha.csv", &csv)?;
    sink.write_json(
        "alpha.json",
        &json!({
            "midpoint_violation": prof.midpoint_violation,
            "superlinearity_ratios": prof.superlinearity_ratios,
            "n_max": n_max,
            "r_max": r_max,
        }),
    )?;
    Ok(Outcome::ok(vec![check(
            "midpoint_convexity",
            prof.midpoint_violation <= 1e-7,
            prof.midpoint_violation,
        )]))
}

fn run_mane(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let c = cfg.cohomology(d)?;
    let x = vec_param(&cfg.params.x, "x")?;
    let y = vec_param(&cfg.params.y, "y")?;
    let n_max = cfg.params.n_max.unwrap_or(8);
    let r_max = cfg.params.r_max.unwrap_or(2);
    let probe = cfg.probe(d);
    let opts = cfg.opts();
    let st = stilde(s, &c, n_max, r_max, &probe, &opts).map_err(CliError::from_core)?;
    let fwd = mane(s, &c, &x, &y, n_max, r_max, &st, &opts).map_err(CliError::from_core)?;
    let bwd = mane(s, &c, &y, &x, n_max, r_max, &st, &opts).map_err(CliError::from_core)?;
    let antisym = fwd.value + bwd.value;
    let witness = fwd.witness.as_ref();
    sink.write_json(
        "mane.json",
        &json!({
            "stilde": st.value,
            "alpha": -st.value,
            "value": fwd.value,
            "value_reversed": bwd.value,
            "antisymmetry_sum": antisym,
            "witness_n": witness.map(|w| w.n),
            "witness_r": witness.map(|w| w.r.clone()),
        }),
    )?;
    Ok(Outcome::ok(vec![check("cycle_sum_nonnegative", antisym >= -1e-9, antisym)]))
}

fn run_aubry(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let c = cfg.cohomology(d)?;
    let grid = cfg.grid(d)?;
    let n_max = cfg.params.n_max.unwrap_or(8);
    let r_max = cfg.params.r_max.unwrap_or(2);
    let tol = cfg.params.indicator_tol.unwrap_or(1e-2);
    let g = dual_aubry_graph(s, &c, &grid, n_max, r_max, &cfg.opts(), tol)
        .map_err(CliError::from_core)?;
    sink.write("aubry.csv", &g.to_csv())?;
    let mut by_status = std::collections::BTreeMap::new();
    for st in &g.status {
        *by_status.entry(st.as_str()).or_insert(0usize) += 1;
    }
    sink.write_json(
        "aubry.json",
        &json!({
            "invariance_residual": g.audits.invariance_residual,
            "average_p": g.audits.average_p.as_slice(),
            "present_cells": g.present_cells(),
            "total_cells": grid.len(),
            "cells_by_status": by_status,
            "indicator_tol": tol,
        }),
    )?;
    Ok(Outcome::ok(vec![check(
            "aubry_nonempty",
            g.present_cells() > 0,
            g.present_cells() as f64,
        )]))
}

fn run_foliation(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let x = vec_param(&cfg.params.x, "x")?;
    let classes = cfg.classes(d)?;
    let n_max = cfg.params.n_max.unwrap_or(8);
    let r_max = cfg.params.r_max.unwrap_or(2);
    let tol = cfg.params.indicator_tol.unwrap_or(1e-2);
    let probe = cfg.probe(d);
    let sec = foliation_section(s, &x, &classes, n_max, r_max, &probe, &cfg.opts(), tol)
        .map_err(CliError::from_core)?;
    let mut csv = String::new();
    let mut header: Vec<String> = (1..=d).map(|i| format!("c_{i}")).collect();
    header.extend((1..=d).map(|i| format!("p_{i}")));
    header.push("indicator".to_string());
    writeln!(csv, "{}", csv_row(&header)).unwrap();
    for (i, c) in sec.classes.iter().enumerate() {
        let mut row = fmt_vec(&c.c);
        match &sec.p[i] {
            Some(p) => row.extend(fmt_vec(p)),
            None => row.extend((0..d).map(|_| String::new())),
        }
        match sec.indicator[i] {
            Some(v) => row.push(format!("{v}")),
            None => row.push(String::new()),
        }
        writeln!(csv, "{}", csv_row(&row)).unwrap();
    }
    sink.write("foliation.csv", &csv)?;
    sink.write_json(
        "foliation.json",
        &json!({
            "injectivity_gap": sec.injectivity_gap,
            "monotone_violation": sec.monotone_violation,
            "continuity_modulus": sec.continuity_modulus,
            "max_p_norm": sec.max_p_norm,
            "failures": sec.failures,
        }),
    )?;
    Ok(Outcome::ok(vec![
            check("no_failures", sec.failures == 0, sec.failures as f64),
            check(
                "injective_section",
                sec.injectivity_gap > 0.0,
                sec.injectivity_gap,
            ),
        ]))
}

fn run_crosscheck(
    cfg: &ExperimentConfig,
    s: &GeneratingFunction,
    sink: &mut OutputSink,
) -> Result<Outcome, CliError> {
    let d = s.dim();
    let n = cfg
        .params
        .n
        .ok_or_else(|| CliError::Config("missing params.n".into()))?;
    let r = cfg.r(d);
    let grid = cfg.grid(d)?;
    let n_max = cfg.params.n_max.unwrap_or(n.max(6));
    let r_max = cfg
        .params
        .r_max
        .unwrap_or_else(|| r.iter().map(|k| k.abs()).max().unwrap_or(0).max(2));
    let tol = cfg.params.indicator_tol.unwrap_or(1e-2);
    let opts = cfg.opts();
    let g = build_graph(s, n, &r, &grid, &opts).map_err(CliError::from_core)?;
    sink.write("graph.csv", &g.to_csv())?;
    let cbar = graph_cohomology(&g).map_err(CliError::from_core)?;
    let dual =
        dual_aubry_graph(s, &cbar, &grid, n_max, r_max, &opts, tol).map_err(CliError::from_core)?;
    sink.write("dual.csv", &dual.to_csv())?;
    let dist = compare_graphs(&g, &dual).map_err(CliError::from_core)?;
    sink.write_json(
        "crosscheck.json",
        &json!({
            "cbar": cbar.c.as_slice(),
            "sup_distance": dist.sup,
            "inf_distance": dist.inf,
            "common_cells": dist.common_cells,
            "graph_cells": g.present_cells(),
            "dual_cells": dual.present_cells(),
        }),
    )?;
    let mut checks = vec![
        check("common_cells_nonempty", dist.common_cells > 0, dist.common_cells as f64),
        check("sup_distance", true, dist.sup),
    ];
    let mut failure = None;
    if let Some(bound) = cfg.params.assert_match_below {
        let ok = dist.sup < bound;
        checks.push(check("assert_match_below", ok, dist.sup));
        if !ok {
            failure = Some(format!("graphs differ by {} (bound {bound})", dist.sup));
        }
    }
    Ok(Outcome { checks, failure })
}
