//! Invariant Lagrangian graphs: periodic fibers, graphs built from them,
//! cohomology classes of graphs, graph comparison, and the foliation section.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::action::{minimize_endpoints, MinimizeOpts, Segment};
use crate::dynamics::{twist_map, PhasePoint};
use crate::error::{CoreError, Result};
use crate::genfun::GeneratingFunction;
use crate::grid::TorusGrid;
use crate::weakkam::{aubry_partner, stilde, CohomologyClass, WeakKamEstimate};

/// Per-cell outcome of a graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Present,
    IndicatorFailed,
    Ambiguous,
    SolverFailed,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Present => "present",
            CellStatus::IndicatorFailed => "indicator_failed",
            CellStatus::Ambiguous => "ambiguous",
            CellStatus::SolverFailed => "solver_failed",
        }
    }
}

/// What a graph's momenta were solved from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphMeta {
    /// Fibers of `F^N(x, p) = (x + r, p)`.
    Periodic { n: usize, r: Vec<i64> },
    /// Dual Aubry samples of a cohomology class.
    DualAubry { c: DVector<f64> },
}

/// Summary audits of a sampled graph.
#[derive(Debug, Clone)]
pub struct GraphAudits {
    /// Max over audited cells of the invariance residual (0 when no cell
    /// could be audited).
    pub invariance_residual: f64,
    /// Max over cells of `||J - J^T||_inf` for the central-difference
    /// Jacobian of `x -> p(x)`.
    pub jacobian_asymmetry: f64,
    /// Max over neighbor cells of `||dp|| / h`: empirical Lipschitz bound.
    pub lipschitz: f64,
    /// Mean momentum over present cells.
    pub average_p: DVector<f64>,
    pub audited_cells: usize,
}

/// A sampled graph `x -> p(x)` over a torus grid; absent cells carry the
/// reason they failed.
#[derive(Debug, Clone)]
pub struct LagrangianGraph {
    pub grid: TorusGrid,
    pub p: Vec<Option<DVector<f64>>>,
    pub status: Vec<CellStatus>,
    pub meta: GraphMeta,
    /// Per-cell invariance residual where it could be evaluated.
    pub residuals: Vec<Option<f64>>,
    pub audits: GraphAudits,
}

impl LagrangianGraph {
    /// Assembles a graph from per-cell momenta and runs every audit that
    /// does not require extra solves: invariance under the twist map
    /// (through interpolation for dual graphs), Jacobian asymmetry by
    /// central differences, Lipschitz bound and average momentum.
    pub fn from_samples(
        s: &GeneratingFunction,
        grid: TorusGrid,
        p: Vec<Option<DVector<f64>>>,
        status: Vec<CellStatus>,
        meta: GraphMeta,
    ) -> Self {
        assert_eq!(p.len(), grid.len());
        assert_eq!(status.len(), grid.len());
        let d = grid.dim();
        let spacing = grid.spacing();

        let average_p = {
            let mut acc = DVector::zeros(d);
            let mut count = 0usize;
            for pv in p.iter().flatten() {
                acc += pv;
                count += 1;
            }
            if count > 0 {
                acc / count as f64
            } else {
                acc
            }
        };

        let mut asymmetry = 0.0f64;
        let mut lipschitz = 0.0f64;
        for flat in 0..grid.len() {
            if p[flat].is_none() {
                continue;
            }
            let mut jac = DMatrix::zeros(d, d);
            let mut complete = true;
            for axis in 0..d {
                let (fwd, bwd) = (grid.neighbor(flat, axis, 1), grid.neighbor(flat, axis, -1));
                match (&p[fwd], &p[bwd]) {
                    (Some(pf), Some(pb)) => {
                        let col = (pf - pb) / (2.0 * spacing[axis]);
                        jac.set_column(axis, &col);
                        lipschitz = lipschitz
                            .max((pf - p[flat].as_ref().unwrap()).norm() / spacing[axis]);
                    }
                    _ => complete = false,
                }
            }
            if complete && d > 1 {
                asymmetry = asymmetry.max((&jac - jac.transpose()).amax());
            }
        }

        let mut graph = LagrangianGraph {
            grid,
            p,
            status,
            meta,
            residuals: Vec::new(),
            audits: GraphAudits {
                invariance_residual: 0.0,
                jacobian_asymmetry: asymmetry,
                lipschitz,
                average_p,
                audited_cells: 0,
            },
        };
        graph.audit_invariance(s);
        graph
    }

    fn audit_invariance(&mut self, s: &GeneratingFunction) {
        let mut residuals = vec![None; self.grid.len()];
        let mut worst = 0.0f64;
        let mut audited = 0usize;
        for flat in 0..self.grid.len() {
            let Some(pv) = &self.p[flat] else { continue };
            let x = self.grid.point(flat);
            let pt = PhasePoint {
                x: x.clone(),
                p: pv.clone(),
            };
            let res = match &self.meta {
                GraphMeta::Periodic { n, r } => {
                    let Ok(img) = twist_map(s, &pt, *n as i64) else { continue };
                    let rv = DVector::from_iterator(
                        r.len(),
                        r.iter().map(|&k| k as f64),
                    );
                    ((img.x - x - rv).norm_squared() + (img.p - pv).norm_squared()).sqrt()
                }
                GraphMeta::DualAubry { .. } => {
                    let Ok(img) = twist_map(s, &pt, 1) else { continue };
                    let Some(p_interp) = self.interp(&img.x) else { continue };
                    (p_interp - img.p).norm()
                }
            };
            worst = worst.max(res);
            residuals[flat] = Some(res);
            audited += 1;
        }
        self.residuals = residuals;
        self.audits.invariance_residual = worst;
        self.audits.audited_cells = audited;
    }

    pub fn present_cells(&self) -> usize {
        self.p.iter().filter(|c| c.is_some()).count()
    }

    /// Multilinear interpolation of `p` at an arbitrary point (coordinates
    /// taken mod 1). `None` when a required corner cell is absent.
    pub fn interp(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let d = self.grid.dim();
        let res = self.grid.resolution();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0f64; d];
        for axis in 0..d {
            let t = (x[axis].rem_euclid(1.0)) * res[axis] as f64;
            base[axis] = (t.floor() as usize) % res[axis];
            frac[axis] = t - t.floor();
        }
        let mut acc = DVector::zeros(d);
        for corner in 0..(1usize << d) {
            let mut idx = base.clone();
            let mut weight = 1.0;
            for axis in 0..d {
                if corner >> axis & 1 == 1 {
                    idx[axis] = (idx[axis] + 1) % res[axis];
                    weight *= frac[axis];
                } else {
                    weight *= 1.0 - frac[axis];
                }
            }
            let pv = self.p[self.grid.flat_index(&idx)].as_ref()?;
            acc += pv * weight;
        }
        Some(acc)
    }

    /// CSV rows `x_1..x_d, p_1..p_d, residual, status` in cell order.
    pub fn to_csv(&self) -> String {
        let d = self.grid.dim();
        let mut out = String::new();
        for i in 1..=d {
            out.push_str(&format!("x_{i},"));
        }
        for i in 1..=d {
            out.push_str(&format!("p_{i},"));
        }
        out.push_str("residual,status\n");
        for flat in 0..self.grid.len() {
            let x = self.grid.point(flat);
            for v in x.iter() {
                out.push_str(&format!("{v},"));
            }
            match &self.p[flat] {
                Some(p) => {
                    for v in p.iter() {
                        out.push_str(&format!("{v},"));
                    }
                }
                None => out.push_str(&",".repeat(d)),
            }
            match self.residuals[flat] {
                Some(r) => out.push_str(&format!("{r}")),
                None => {}
            }
            out.push_str(&format!(",{}\n", self.status[flat].as_str()));
        }
        out
    }
}

/// A periodic-fiber solution at one base point.
#[derive(Debug, Clone)]
pub struct PeriodicFiber {
    pub p: DVector<f64>,
    /// `||F^N(x, p) - (x + r, p)||` in the cover.
    pub residual: f64,
    pub segment: Segment,
}

/// Solves for the momentum whose orbit closes up: `F^N(x, p) = (x + r, p)`.
///
/// `p = -D1 S(x, x_1)` along the minimizing segment from `x` to `x + r`.
/// A large residual is a meaningful report (the minimizer need not be an
/// orbit in the presence of conjugate points), not an error.
pub fn periodic_fiber(
    s: &GeneratingFunction,
    x: &DVector<f64>,
    n: usize,
    r: &[i64],
    opts: &MinimizeOpts,
) -> Result<PeriodicFiber> {
    if n == 0 {
        return Err(CoreError::InvalidInput("periodic_fiber needs N >= 1".into()));
    }
    let rv = DVector::from_iterator(r.len(), r.iter().map(|&k| k as f64));
    let target = x + &rv;
    let m = minimize_endpoints(s, x, &target, n, opts)?;
    let p = -s.d1(x, &m.segment.points[1]);
    let pt = PhasePoint {
        x: x.clone(),
        p: p.clone(),
    };
    let img = twist_map(s, &pt, n as i64)?;
    let residual =
        ((img.x - &target).norm_squared() + (img.p - &p).norm_squared()).sqrt();
    Ok(PeriodicFiber {
        p,
        residual,
        segment: m.segment,
    })
}

/// Builds the `(N, r)` graph cell by cell. Rejected when more than 1% of
/// cells fail to solve.
pub fn build_graph(
    s: &GeneratingFunction,
    n: usize,
    r: &[i64],
    grid: &TorusGrid,
    opts: &MinimizeOpts,
) -> Result<LagrangianGraph> {
    let cells: Vec<(Option<DVector<f64>>, CellStatus)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let cell_opts = MinimizeOpts {
                seed: opts
                    .seed
                    .wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                ..opts.clone()
            };
            match periodic_fiber(s, &x, n, r, &cell_opts) {
                Ok(f) => (Some(f.p), CellStatus::Present),
                Err(_) => (None, CellStatus::SolverFailed),
            }
        })
        .collect();
    let failed = cells.iter().filter(|(p, _)| p.is_none()).count();
    if failed * 100 > grid.len() {
        return Err(CoreError::AuditFailed(format!(
            "{failed} of {} graph cells failed to solve",
            grid.len()
        )));
    }
    let (p, status): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    Ok(LagrangianGraph::from_samples(
        s,
        grid.clone(),
        p,
        status,
        GraphMeta::Periodic {
            n,
            r: r.to_vec(),
        },
    ))
}

/// Cohomology class of a graph: the grid average of `p` (the class of a
/// closed 1-form is its average over the fundamental domain, quadrature
/// error `O(h^2)`). Gated on the Lagrangian audit.
pub fn graph_cohomology(g: &LagrangianGraph) -> Result<CohomologyClass> {
    let threshold = 1e-4 * (1.0 + g.audits.lipschitz);
    if g.audits.jacobian_asymmetry > threshold {
        return Err(CoreError::NotLagrangian {
            asymmetry: g.audits.jacobian_asymmetry,
        });
    }
    if g.present_cells() == 0 {
        return Err(CoreError::InvalidInput("graph has no present cells".into()));
    }
    Ok(CohomologyClass::new(g.audits.average_p.clone()))
}

/// Pointwise distance between two graphs over their common present cells.
#[derive(Debug, Clone, Copy)]
pub struct GraphDistance {
    pub sup: f64,
    /// A strictly positive `inf` over all cells is evidence the graphs are
    /// disjoint; `sup` near zero means they match.
    pub inf: f64,
    pub common_cells: usize,
}

pub fn compare_graphs(g1: &LagrangianGraph, g2: &LagrangianGraph) -> Result<GraphDistance> {
    if g1.grid != g2.grid {
        return Err(CoreError::GridMismatch);
    }
    let mut sup = 0.0f64;
    let mut inf = f64::INFINITY;
    let mut common = 0usize;
    for (a, b) in g1.p.iter().zip(&g2.p) {
        if let (Some(pa), Some(pb)) = (a, b) {
            let d = (pa - pb).norm();
            sup = sup.max(d);
            inf = inf.min(d);
            common += 1;
        }
    }
    if common == 0 {
        return Err(CoreError::InvalidInput("graphs share no present cells".into()));
    }
    Ok(GraphDistance {
        sup,
        inf,
        common_cells: common,
    })
}

/// The section of the foliation over one base point: `c -> p(c)` with
/// `(x, p(c))` in the dual Aubry set of class `c`.
#[derive(Debug, Clone)]
pub struct FoliationSection {
    pub x: DVector<f64>,
    pub classes: Vec<CohomologyClass>,
    pub p: Vec<Option<DVector<f64>>>,
    pub indicator: Vec<Option<f64>>,
    /// `min ||p(c) - p(c')||` over distinct classes with both present.
    pub injectivity_gap: f64,
    /// d = 1 only: most negative increment of `p` along the sorted classes
    /// (0 when monotone nondecreasing).
    pub monotone_violation: f64,
    /// Max `||dp|| / ||dc||` over consecutive classes.
    pub continuity_modulus: f64,
    pub max_p_norm: f64,
    pub failures: usize,
}

/// Samples the foliation section at `x` over a list of cohomology classes.
/// Per-class indicator failures are recorded, not fatal (they are expected
/// only in the presence of conjugate points).
pub fn foliation_section(
    s: &GeneratingFunction,
    x: &DVector<f64>,
    classes: &[CohomologyClass],
    n_max: usize,
    r_max: i64,
    probe: &TorusGrid,
    opts: &MinimizeOpts,
    indicator_tol: f64,
) -> Result<FoliationSection> {
    let samples: Vec<(Option<DVector<f64>>, Option<f64>)> = classes
        .par_iter()
        .map(|c| {
            let st: WeakKamEstimate = match stilde(s, c, n_max, r_max, probe, opts) {
                Ok(st) => st,
                Err(_) => return (None, None),
            };
            match aubry_partner(s, c, x, n_max, r_max, &st, opts, indicator_tol) {
                Ok(sample) => (Some(sample.p), Some(sample.indicator)),
                Err(_) => (None, None),
            }
        })
        .collect();
    let (p, indicator): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
    let failures = p.iter().filter(|v: &&Option<DVector<f64>>| v.is_none()).count();

    let mut gap = f64::INFINITY;
    let mut max_p_norm = 0.0f64;
    for i in 0..classes.len() {
        let Some(pi) = &p[i] else { continue };
        max_p_norm = max_p_norm.max(pi.norm());
        for j in i + 1..classes.len() {
            if let Some(pj) = &p[j] {
                if (&classes[i].c - &classes[j].c).norm() > 1e-12 {
                    gap = gap.min((pi - pj).norm());
                }
            }
        }
    }
    if !gap.is_finite() {
        gap = 0.0;
    }
    let mut monotone_violation = 0.0f64;
    let mut modulus = 0.0f64;
    for w in 0..classes.len().saturating_sub(1) {
        let (Some(pa), Some(pb)) = (&p[w], &p[w + 1]) else { continue };
        let dc = &classes[w + 1].c - &classes[w].c;
        if dc.norm() > 1e-12 {
            modulus = modulus.max((pb - pa).norm() / dc.norm());
        }
        if s.dim() == 1 {
            let inc = (pb[0] - pa[0]) * dc[0].signum();
            monotone_violation = monotone_violation.max(-inc);
        }
    }
    Ok(FoliationSection {
        x: x.clone(),
        classes: classes.to_vec(),
        p,
        indicator,
        injectivity_gap: gap,
        monotone_violation,
        continuity_modulus: modulus,
        max_p_norm,
        failures,
    })
}
