//! Discrete weak KAM layer: twisted actions, minimizing holonomic value,
//! Mather alpha function, Mañé potential, Aubry samples and potential audits.
//!
//! The exact quantities are infima over unbounded segment lengths and lattice
//! shifts. Everything here is truncated explicitly: results carry their
//! `(N_max, R_max, probe resolution)` so callers can reason about the
//! truncation allowance instead of pretending convergence. Values are exact
//! (up to solver tolerance) whenever the optimal rotation data is rational
//! with denominator at most `N_max`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::action::{minimize_endpoints, MinimizeOpts, Segment};
use crate::dynamics::shift;
use crate::error::{CoreError, Result};
use crate::genfun::GeneratingFunction;
use crate::grid::TorusGrid;
use crate::invariant_graphs::{CellStatus, GraphMeta, LagrangianGraph};

/// Default Aubry-membership threshold for the truncated indicator.
pub const INDICATOR_TOL: f64 = 1e-2;

/// Candidates within this (relative) band of the best cycle value count as
/// alternative partners for the ambiguity check.
const PARTNER_BAND: f64 = 1e-9;
/// Two near-optimal partners further apart than this are reported as
/// ambiguous rather than silently picking one.
const PARTNER_SEPARATION: f64 = 1e-3;

/// A cohomology class `c`, acting on the configuration space by the linear
/// cocycle `x -> c . x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohomologyClass {
    pub c: DVector<f64>,
}

impl CohomologyClass {
    pub fn new(c: DVector<f64>) -> Self {
        assert!(c.iter().all(|v| v.is_finite()));
        CohomologyClass { c }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

/// Which truncated quantity a [`WeakKamEstimate`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EstimateKind {
    Stilde,
    Alpha,
    Mane,
    AubryIndicator,
}

/// The truncation a weak KAM value was computed under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Truncation {
    pub n_max: usize,
    pub r_max: i64,
    /// Resolution of the probe grid (empty when no probe was involved).
    pub grid_resolution: Vec<usize>,
}

/// The attaining `(N, r, segment)` of a truncated infimum.
#[derive(Debug, Clone)]
pub struct Witness {
    pub n: usize,
    pub r: Vec<i64>,
    pub segment: Segment,
}

/// A truncated weak KAM value together with its provenance.
#[derive(Debug, Clone)]
pub struct WeakKamEstimate {
    pub value: f64,
    pub kind: EstimateKind,
    pub truncation: Truncation,
    pub witness: Option<Witness>,
}

/// One sampled point of the Aubry set with its dual momentum.
#[derive(Debug, Clone)]
pub struct AubrySample {
    pub x: DVector<f64>,
    /// Partner in the universal cover: `(x, y)` realizes a minimizing cycle.
    pub y: DVector<f64>,
    /// Dual momentum `p = -D1 S(x, y)` of the untwisted function.
    pub p: DVector<f64>,
    /// Truncated indicator `pi_c(x, x)` that admitted the sample.
    pub indicator: f64,
    /// `|S_c(x,y) - stilde - pi_c(x,y)|`.
    pub action_identity_res: f64,
    /// `|pi_c(x,y) + pi_c(y,x)|`.
    pub antisymmetry_res: f64,
    pub witness_n: usize,
    pub witness_r: Vec<i64>,
}

/// `S_c(x,y) = S(x,y) + c . (x - y)`; second derivatives — and therefore the
/// twist constant and all extremal sequences — are unchanged.
pub fn twist_by_cocycle(s: &GeneratingFunction, c: &CohomologyClass) -> GeneratingFunction {
    s.with_cocycle(&c.c)
}

/// All integer vectors of length `d` with sup norm at most `r_max`.
pub fn lattice_box(d: usize, r_max: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::with_capacity(out.len() * (2 * r_max + 1) as usize);
        for prefix in &out {
            for k in -r_max..=r_max {
                let mut v = prefix.clone();
                v.push(k);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// One `(n, r)` candidate of a truncated infimum; `value` is the raw
/// minimized action of the segment (no normalization applied).
struct Candidate {
    n: usize,
    r: Vec<i64>,
    value: f64,
    segment: Segment,
}

/// Minimizes `A_n^{(c)}(x, y + r)` for every `n <= n_max` and every shift
/// `r` in the lattice box. Failed candidates are dropped; the caller takes a
/// minimum over the survivors.
fn sweep(
    sc: &GeneratingFunction,
    x: &DVector<f64>,
    y: &DVector<f64>,
    n_max: usize,
    r_max: i64,
    opts: &MinimizeOpts,
) -> Vec<Candidate> {
    let d = x.len();
    let shifts = lattice_box(d, r_max);
    let mut jobs = Vec::with_capacity(shifts.len() * n_max);
    for r in &shifts {
        for n in 1..=n_max {
            jobs.push((n, r.clone()));
        }
    }
    jobs.into_par_iter()
        .filter_map(|(n, r)| {
            let target =
                y + DVector::from_iterator(d, r.iter().map(|&k| k as f64));
            minimize_endpoints(sc, x, &target, n, opts)
                .ok()
                .map(|m| Candidate {
                    n,
                    r,
                    value: m.value,
                    segment: m.segment,
                })
        })
        .collect()
}

/// Truncated minimizing holonomic value: minimum of the mean twisted action
/// over cycles `x -> x + r` with `n <= n_max`, `||r||_inf <= r_max` and `x`
/// on the probe grid. A certified upper bound of the true value, monotone
/// nonincreasing in the truncation, exact at rational rotation data with
/// denominator `<= n_max`.
pub fn stilde(
    s: &GeneratingFunction,
    c: &CohomologyClass,
    n_max: usize,
    r_max: i64,
    probe: &TorusGrid,
    opts: &MinimizeOpts,
) -> Result<WeakKamEstimate> {
    if n_max == 0 {
        return Err(CoreError::InvalidInput("stilde needs N_max >= 1".into()));
    }
    if r_max < 0 {
        return Err(CoreError::InvalidInput("stilde needs R_max >= 0".into()));
    }
    let sc = twist_by_cocycle(s, c);
    let mut best: Option<(f64, Witness)> = None;
    for x in probe.points() {
        for cand in sweep(&sc, &x, &x, n_max, r_max, opts) {
            let mean = cand.value / cand.n as f64;
            if best.as_ref().map_or(true, |(v, _)| mean < *v) {
                best = Some((
                    mean,
                    Witness {
                        n: cand.n,
                        r: cand.r,
                        segment: cand.segment,
                    },
                ));
            }
        }
    }
    let (value, witness) = best.ok_or(CoreError::NoConvergence {
        iters: 0,
        residual: f64::NAN,
    })?;
    Ok(WeakKamEstimate {
        value,
        kind: EstimateKind::Stilde,
        truncation: Truncation {
            n_max,
            r_max,
            grid_resolution: probe.resolution().to_vec(),
        },
        witness: Some(witness),
    })
}

/// `alpha(c) = -stilde_c`; the Mather function restricted to the truncation.
pub fn alpha(
    s: &GeneratingFunction,
    c: &CohomologyClass,
    n_max: usize,
    r_max: i64,
    probe: &TorusGrid,
    opts: &MinimizeOpts,
) -> Result<WeakKamEstimate> {
    let st = stilde(s, c, n_max, r_max, probe, opts)?;
    Ok(WeakKamEstimate {
        value: -st.value,
        kind: EstimateKind::Alpha,
        ..st
    })
}

/// `alpha` over a list of classes, with a midpoint-convexity audit and a
/// superlinearity probe along the largest sampled class.
#[derive(Debug, Clone)]
pub struct AlphaProfile {
    pub classes: Vec<CohomologyClass>,
    pub estimates: Vec<WeakKamEstimate>,
    /// Worst `alpha((c1+c2)/2) - (alpha(c1)+alpha(c2))/2` over sampled
    /// pairs; positive values violate convexity beyond truncation.
    pub midpoint_violation: f64,
    /// `alpha(t c) / t` for `t = 1, 2, 4` along the largest class.
    pub superlinearity_ratios: Vec<f64>,
}

pub fn alpha_profile(
    s: &GeneratingFunction,
    classes: &[CohomologyClass],
    n_max: usize,
    r_max: i64,
    probe: &TorusGrid,
    opts: &MinimizeOpts,
) -> Result<AlphaProfile> {
    let estimates: Vec<WeakKamEstimate> = classes
        .iter()
        .map(|c| alpha(s, c, n_max, r_max, probe, opts))
        .collect::<Result<_>>()?;
    // midpoint convexity over all pairs (bounded; profiles are small)
    let mut violation = f64::NEG_INFINITY;
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            let mid = CohomologyClass::new((&classes[i].c + &classes[j].c) * 0.5);
            let am = alpha(s, &mid, n_max, r_max, probe, opts)?.value;
            violation = violation.max(am - 0.5 * (estimates[i].value + estimates[j].value));
        }
    }
    if !violation.is_finite() {
        violation = 0.0;
    }
    let largest = classes
        .iter()
        .max_by(|a, b| a.c.norm().total_cmp(&b.c.norm()))
        .ok_or_else(|| CoreError::InvalidInput("alpha_profile needs classes".into()))?;
    let mut ratios = Vec::new();
    for t in [1i64, 2, 4] {
        let ct = CohomologyClass::new(&largest.c * t as f64);
        // the optimal shift scales with t, so the shift box must too
        let a = alpha(s, &ct, n_max, r_max * t, probe, opts)?.value;
        ratios.push(a / t as f64);
    }
    Ok(AlphaProfile {
        classes: classes.to_vec(),
        estimates,
        midpoint_violation: violation,
        superlinearity_ratios: ratios,
    })
}

/// Truncated Mañé potential
/// `pi_c(x, y) = min_{n <= n_max, r} [A_n^{(c)}(x, y + r) - n * stilde_est]`.
pub fn mane(
    s: &GeneratingFunction,
    c: &CohomologyClass,
    x: &DVector<f64>,
    y: &DVector<f64>,
    n_max: usize,
    r_max: i64,
    stilde_est: &WeakKamEstimate,
    opts: &MinimizeOpts,
) -> Result<WeakKamEstimate> {
    let sc = twist_by_cocycle(s, c);
    let mut best: Option<(f64, Witness)> = None;
    for cand in sweep(&sc, x, y, n_max, r_max, opts) {
        let v = cand.value - cand.n as f64 * stilde_est.value;
        if best.as_ref().map_or(true, |(b, _)| v < *b) {
            best = Some((
                v,
                Witness {
                    n: cand.n,
                    r: cand.r,
                    segment: cand.segment,
                },
            ));
        }
    }
    let (value, witness) = best.ok_or(CoreError::NoConvergence {
        iters: 0,
        residual: f64::NAN,
    })?;
    Ok(WeakKamEstimate {
        value,
        kind: EstimateKind::Mane,
        truncation: Truncation {
            n_max,
            r_max,
            grid_resolution: Vec::new(),
        },
        witness: Some(witness),
    })
}

/// `pi_c(x, x)`: vanishes (up to truncation) exactly on the projected
/// Aubry set.
pub fn aubry_indicator(
    s: &GeneratingFunction,
    c: &CohomologyClass,
    x: &DVector<f64>,
    n_max: usize,
    r_max: i64,
    stilde_est: &WeakKamEstimate,
    opts: &MinimizeOpts,
) -> Result<WeakKamEstimate> {
    let m = mane(s, c, x, x, n_max, r_max, stilde_est, opts)?;
    Ok(WeakKamEstimate {
        kind: EstimateKind::AubryIndicator,
        ..m
    })
}

/// Aubry partner of `x`: the next configuration point of a minimizing cycle
/// through `x`.
///
/// The partner is read off the indicator's own witness cycle (its second
/// point), which locates it to solver accuracy; the calibration and
/// antisymmetry residuals of the pair are then measured and reported.
/// Near-optimal cycles whose partners disagree by more than `1e-3` raise
/// `AmbiguousPartner` instead of picking one silently.
pub fn aubry_partner(
    s: &GeneratingFunction,
    c: &CohomologyClass,
    x: &DVector<f64>,
    n_max: usize,
    r_max: i64,
    stilde_est: &WeakKamEstimate,
    opts: &MinimizeOpts,
    indicator_tol: f64,
) -> Result<AubrySample> {
    let sc = twist_by_cocycle(s, c);
    let candidates = sweep(&sc, x, x, n_max, r_max, opts);
    let mut best: Option<&Candidate> = None;
    for cand in &candidates {
        let v = cand.value - cand.n as f64 * stilde_est.value;
        if best
            .map_or(true, |b| v < b.value - b.n as f64 * stilde_est.value)
        {
            best = Some(cand);
        }
    }
    let best = best.ok_or(CoreError::NoConvergence {
        iters: 0,
        residual: f64::NAN,
    })?;
    let indicator = best.value - best.n as f64 * stilde_est.value;
    if indicator > indicator_tol {
        return Err(CoreError::NotInAubry {
            indicator,
            tol: indicator_tol,
        });
    }
    let y = best.segment.points[1].clone();
    // near-optimal cycles must agree on the partner
    let band = PARTNER_BAND * (1.0 + indicator.abs());
    let mut separation = 0.0f64;
    for cand in &candidates {
        let v = cand.value - cand.n as f64 * stilde_est.value;
        if v <= indicator + band {
            separation = separation.max((&cand.segment.points[1] - &y).norm());
        }
    }
    if separation > PARTNER_SEPARATION {
        return Err(CoreError::AmbiguousPartner { separation });
    }
    let p = -s.d1(x, &y);
    let pi_xy = mane(s, c, x, &y, n_max, r_max, stilde_est, opts)?.value;
    let pi_yx = mane(s, c, &y, x, n_max, r_max, stilde_est, opts)?.value;
    let action_identity_res = (sc.eval(x, &y) - stilde_est.value - pi_xy).abs();
    let antisymmetry_res = (pi_xy + pi_yx).abs();
    Ok(AubrySample {
        x: x.clone(),
        y,
        p,
        indicator,
        action_identity_res,
        antisymmetry_res,
        witness_n: best.n,
        witness_r: best.r.clone(),
    })
}

/// Samples the dual Aubry set over a grid: one `(x, p)` per cell passing the
/// indicator, absent cells marked with their failure reason. `stilde` is
/// computed once with the same grid as probe and shared across cells.
pub fn dual_aubry_graph(
    s: &GeneratingFunction,
    c: &CohomologyClass,
    grid: &TorusGrid,
    n_max: usize,
    r_max: i64,
    opts: &MinimizeOpts,
    indicator_tol: f64,
) -> Result<LagrangianGraph> {
    let st = stilde(s, c, n_max, r_max, grid, opts)?;
    let cells: Vec<(Option<DVector<f64>>, CellStatus)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            match aubry_partner(s, c, &x, n_max, r_max, &st, opts, indicator_tol) {
                Ok(sample) => (Some(sample.p), CellStatus::Present),
                Err(CoreError::NotInAubry { .. }) => (None, CellStatus::IndicatorFailed),
                Err(CoreError::AmbiguousPartner { .. }) => (None, CellStatus::Ambiguous),
                Err(_) => (None, CellStatus::SolverFailed),
            }
        })
        .collect();
    let (p, status): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    Ok(LagrangianGraph::from_samples(
        s,
        grid.clone(),
        p,
        status,
        GraphMeta::DualAubry { c: c.c.clone() },
    ))
}

/// Audit report over the Mañé potential on sampled triples, plus the Aubry
/// identities on supplied samples. All quantities are reports, not gates.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialAudits {
    /// Min over triples of `pi(x,y) + pi(y,z) - pi(x,z)`; must be `>= -tol`.
    pub triangle_min: f64,
    /// Max over triples of `|pi(x,z) - pi(x,y) - pi(y,z)|`; vanishes only
    /// without conjugate points.
    pub additivity_max: f64,
    /// Max over pairs of `|pi(x,y) + pi(y,x)|`; same caveat.
    pub antisymmetry_max: f64,
    /// Min over Aubry samples `(x, y)` with successor `z` of
    /// `stilde - [S(x,y) + S(y,z) - S(x,z)]` (untwisted `S`).
    pub stilde_bound_min: f64,
    /// Max partner displacement `||y - x||` over the Aubry samples.
    pub displacement_max: f64,
    /// Empirical Lipschitz constant of `y -> pi_c(x, y)` over the triples.
    pub lipschitz_estimate: f64,
}

pub fn potential_audits(
    s: &GeneratingFunction,
    c: &CohomologyClass,
    triples: &[(DVector<f64>, DVector<f64>, DVector<f64>)],
    aubry: &[AubrySample],
    n_max: usize,
    r_max: i64,
    stilde_est: &WeakKamEstimate,
    opts: &MinimizeOpts,
) -> Result<PotentialAudits> {
    let pi = |a: &DVector<f64>, b: &DVector<f64>| -> Result<f64> {
        Ok(mane(s, c, a, b, n_max, r_max, stilde_est, opts)?.value)
    };
    let mut triangle_min = f64::INFINITY;
    let mut additivity_max = 0.0f64;
    let mut antisymmetry_max = 0.0f64;
    let mut lipschitz = 0.0f64;
    for (x, y, z) in triples {
        let xy = pi(x, y)?;
        let yz = pi(y, z)?;
        let xz = pi(x, z)?;
        let yx = pi(y, x)?;
        triangle_min = triangle_min.min(xy + yz - xz);
        additivity_max = additivity_max.max((xz - xy - yz).abs());
        antisymmetry_max = antisymmetry_max.max((xy + yx).abs());
        let dyz = torus_distance(y, z);
        if dyz > 1e-9 {
            lipschitz = lipschitz.max((xy - xz).abs() / dyz);
        }
    }
    if triples.is_empty() {
        triangle_min = 0.0;
    }
    let mut stilde_bound_min = f64::INFINITY;
    let mut displacement_max = 0.0f64;
    for sample in aubry {
        displacement_max = displacement_max.max((&sample.y - &sample.x).norm());
        let z = shift(s, &sample.x, &sample.y)?;
        let bound = s.eval(&sample.x, &sample.y) + s.eval(&sample.y, &z)
            - s.eval(&sample.x, &z);
        stilde_bound_min = stilde_bound_min.min(stilde_est.value - bound);
    }
    if aubry.is_empty() {
        stilde_bound_min = 0.0;
    }
    Ok(PotentialAudits {
        triangle_min,
        additivity_max,
        antisymmetry_max,
        stilde_bound_min,
        displacement_max,
        lipschitz_estimate: lipschitz,
    })
}

/// Worst sub-action violation of `u = pi_c(x0, .)` over all ordered grid
/// pairs: `max u(y) - u(x) - pi_c(x, y)`; nonpositive up to tolerance.
pub fn sub_action_violation(
    s: &GeneratingFunction,
    c: &CohomologyClass,
    x0: &DVector<f64>,
    grid: &TorusGrid,
    n_max: usize,
    r_max: i64,
    stilde_est: &WeakKamEstimate,
    opts: &MinimizeOpts,
) -> Result<f64> {
    let pts = grid.points();
    let u: Vec<f64> = pts
        .iter()
        .map(|y| Ok(mane(s, c, x0, y, n_max, r_max, stilde_est, opts)?.value))
        .collect::<Result<_>>()?;
    let mut worst = f64::NEG_INFINITY;
    for (i, x) in pts.iter().enumerate() {
        for (j, y) in pts.iter().enumerate() {
            if i == j {
                continue;
            }
            let pi_xy = mane(s, c, x, y, n_max, r_max, stilde_est, opts)?.value;
            worst = worst.max(u[j] - u[i] - pi_xy);
        }
    }
    Ok(worst)
}

fn torus_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&u, &v)| {
            let d = (u - v).rem_euclid(1.0);
            d.min(1.0 - d).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::families;
    use crate::oracles;
    use approx::assert_relative_eq;
    use nalgebra::{dvector, DMatrix};

    fn probe1() -> TorusGrid {
        TorusGrid::new(vec![1])
    }

    fn quick_opts() -> MinimizeOpts {
        MinimizeOpts {
            multistarts: 1,
            ..Default::default()
        }
    }

    #[test]
    fn twist_preserves_extremal_sequences() {
        let s = families::standard(1.0);
        let sc = twist_by_cocycle(&s, &CohomologyClass::new(dvector![0.3]));
        for (a, b) in [(0.1, 0.4), (0.7, 0.2), (0.5, 1.3)] {
            let n0 = shift(&s, &dvector![a], &dvector![b]).unwrap();
            let n1 = shift(&sc, &dvector![a], &dvector![b]).unwrap();
            assert!((n0 - n1).norm() < 1e-10);
        }
    }

    #[test]
    fn stilde_quadratic_closed_forms() {
        let s = families::quadratic_1d(1.0);
        let opts = quick_opts();
        let st = stilde(&s, &CohomologyClass::new(dvector![0.5]), 2, 1, &probe1(), &opts)
            .unwrap();
        assert_relative_eq!(st.value, -0.125, epsilon = 1e-10);
        let w = st.witness.unwrap();
        assert_eq!((w.n, w.r.as_slice()), (2, &[1][..]));
        assert_relative_eq!(w.segment.action / w.n as f64, st.value, epsilon = 1e-10);

        let z = stilde(&s, &CohomologyClass::new(dvector![0.0]), 3, 1, &probe1(), &opts)
            .unwrap();
        assert!(z.value.abs() < 1e-12);

        let s2 = families::quadratic(DMatrix::from_diagonal(&dvector![1.0, 2.0]));
        let st2 = stilde(
            &s2,
            &CohomologyClass::new(dvector![0.0, 1.0]),
            2,
            1,
            &TorusGrid::new(vec![1, 1]),
            &opts,
        )
        .unwrap();
        assert_relative_eq!(st2.value, -0.25, epsilon = 1e-10);
    }

    #[test]
    fn stilde_monotone_in_truncation() {
        let s = families::standard(0.7);
        let c = CohomologyClass::new(dvector![0.3]);
        let opts = MinimizeOpts::default();
        let probe = TorusGrid::new(vec![4]);
        let coarse = stilde(&s, &c, 2, 1, &probe, &opts).unwrap().value;
        let fine = stilde(&s, &c, 5, 2, &probe, &opts).unwrap().value;
        assert!(fine <= coarse + 1e-12);
    }

    #[test]
    fn alpha_standard_matches_dp_oracle() {
        let s = families::standard(1.0);
        let c = CohomologyClass::new(dvector![0.0]);
        let a = alpha(&s, &c, 6, 2, &TorusGrid::new(vec![8]), &MinimizeOpts::default())
            .unwrap();
        let tau = std::f64::consts::TAU;
        assert_relative_eq!(a.value, 1.0 / (tau * tau), epsilon = 1e-9);
        let dp = oracles::CircleDp::new(&s, 64, 2);
        assert_relative_eq!(a.value, -dp.stilde(6), epsilon = 1e-9);
    }

    #[test]
    fn alpha_profile_quadratic_convex() {
        let s = families::quadratic_1d(1.0);
        let classes: Vec<CohomologyClass> = [-1.0, -0.5, 0.0, 0.5, 1.0]
            .iter()
            .map(|&c| CohomologyClass::new(dvector![c]))
            .collect();
        let prof = alpha_profile(&s, &classes, 4, 4, &probe1(), &quick_opts()).unwrap();
        for (cl, est) in prof.classes.iter().zip(&prof.estimates) {
            assert_relative_eq!(est.value, 0.5 * cl.c[0] * cl.c[0], epsilon = 1e-9);
        }
        assert!(prof.midpoint_violation <= 1e-8);
        // alpha(tc)/t = t/2 for c = 1: strictly increasing ratios
        assert!(prof.superlinearity_ratios[2] > prof.superlinearity_ratios[0] + 0.5);
    }

    #[test]
    fn mane_quadratic_examples() {
        let s = families::quadratic_1d(1.0);
        let opts = quick_opts();
        let c = CohomologyClass::new(dvector![0.5]);
        let st = stilde(&s, &c, 2, 1, &probe1(), &opts).unwrap();
        let m = mane(&s, &c, &dvector![0.0], &dvector![0.5], 2, 1, &st, &opts).unwrap();
        assert!(m.value.abs() < 1e-10);
        let w = m.witness.unwrap();
        assert_eq!((w.n, w.r.as_slice()), (1, &[0][..]));

        let c0 = CohomologyClass::new(dvector![0.0]);
        let st0 = stilde(&s, &c0, 2, 1, &probe1(), &opts).unwrap();
        let m0 = mane(&s, &c0, &dvector![0.0], &dvector![0.0], 2, 1, &st0, &opts).unwrap();
        assert!(m0.value.abs() < 1e-12);
    }

    #[test]
    fn mane_standard_matches_dp_oracle() {
        let s = families::standard(1.0);
        let c = CohomologyClass::new(dvector![0.0]);
        let opts = MinimizeOpts::default();
        let st = stilde(&s, &c, 6, 2, &TorusGrid::new(vec![8]), &opts).unwrap();
        let dp = oracles::CircleDp::new(&s, 128, 2);
        for (x, y) in [(0.0, 0.5), (0.25, 0.75), (0.6, 0.1)] {
            let m = mane(&s, &c, &dvector![x], &dvector![y], 6, 2, &st, &opts)
                .unwrap()
                .value;
            let oracle = dp.mane(x, y, 6, st.value);
            assert_relative_eq!(m, oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn aubry_partner_quadratic() {
        let s = families::quadratic_1d(1.0);
        let opts = quick_opts();
        let c = CohomologyClass::new(dvector![0.5]);
        let st = stilde(&s, &c, 2, 1, &probe1(), &opts).unwrap();
        let sample =
            aubry_partner(&s, &c, &dvector![0.2], 2, 1, &st, &opts, INDICATOR_TOL).unwrap();
        assert_relative_eq!(sample.y[0], 0.7, epsilon = 1e-9);
        assert_relative_eq!(sample.p[0], 0.5, epsilon = 1e-9);
        assert!(sample.action_identity_res <= 1e-9);
        assert!(sample.antisymmetry_res <= 1e-9);

        let c0 = CohomologyClass::new(dvector![0.0]);
        let st0 = stilde(&s, &c0, 2, 1, &probe1(), &opts).unwrap();
        let s0 =
            aubry_partner(&s, &c0, &dvector![0.37], 2, 1, &st0, &opts, INDICATOR_TOL).unwrap();
        assert_relative_eq!(s0.y[0], 0.37, epsilon = 1e-10);
        assert!(s0.p[0].abs() < 1e-10);
    }

    #[test]
    fn aubry_partner_standard_fixed_point() {
        let s = families::standard(1.0);
        let c = CohomologyClass::new(dvector![0.0]);
        let opts = MinimizeOpts::default();
        let st = stilde(&s, &c, 6, 2, &TorusGrid::new(vec![8]), &opts).unwrap();
        let sample =
            aubry_partner(&s, &c, &dvector![0.5], 6, 2, &st, &opts, INDICATOR_TOL).unwrap();
        assert_relative_eq!(sample.y[0], 0.5, epsilon = 1e-8);
        assert!(sample.p[0].abs() < 1e-8);
        assert!(sample.action_identity_res <= 1e-8);
        assert!(sample.antisymmetry_res <= 1e-8);
    }

    #[test]
    fn rejects_points_outside_aubry() {
        // potential maximum of the standard family is never in the Aubry set
        let s = families::standard(1.0);
        let c = CohomologyClass::new(dvector![0.0]);
        let opts = MinimizeOpts::default();
        let st = stilde(&s, &c, 4, 1, &TorusGrid::new(vec![8]), &opts).unwrap();
        let err = aubry_partner(&s, &c, &dvector![0.0], 4, 1, &st, &opts, INDICATOR_TOL);
        assert!(matches!(err, Err(CoreError::NotInAubry { .. })));
    }

    #[test]
    fn dual_graph_quadratic_is_flat() {
        let s = families::quadratic_1d(1.0);
        let c = CohomologyClass::new(dvector![0.5]);
        let g = dual_aubry_graph(&s, &c, &TorusGrid::new(vec![16]), 2, 1, &quick_opts(), INDICATOR_TOL)
            .unwrap();
        assert_eq!(g.present_cells(), 16);
        for p in g.p.iter().flatten() {
            assert_relative_eq!(p[0], 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn potential_audit_quadratic_commensurate() {
        let s = families::quadratic_1d(1.0);
        let c = CohomologyClass::new(dvector![0.5]);
        let opts = quick_opts();
        let st = stilde(&s, &c, 4, 2, &probe1(), &opts).unwrap();
        // points at multiples of 0.5: every leg is commensurate with c
        let triples = vec![(dvector![0.0], dvector![0.5], dvector![1.0])];
        let sample =
            aubry_partner(&s, &c, &dvector![0.0], 4, 2, &st, &opts, INDICATOR_TOL).unwrap();
        let audit =
            potential_audits(&s, &c, &triples, &[sample], 4, 2, &st, &opts).unwrap();
        assert!(audit.triangle_min >= -1e-9);
        assert!(audit.additivity_max <= 1e-9);
        assert!(audit.antisymmetry_max <= 1e-9);
        assert!(audit.stilde_bound_min >= -1e-9);
        assert_relative_eq!(audit.displacement_max, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn sub_action_property_quadratic() {
        let s = families::quadratic_1d(1.0);
        let c = CohomologyClass::new(dvector![0.5]);
        let opts = quick_opts();
        let st = stilde(&s, &c, 4, 2, &probe1(), &opts).unwrap();
        let v = sub_action_violation(
            &s,
            &c,
            &dvector![0.0],
            &TorusGrid::new(vec![4]),
            4,
            2,
            &st,
            &opts,
        )
        .unwrap();
        assert!(v <= 1e-9);
    }
}
