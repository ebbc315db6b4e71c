//! The shift map on configuration pairs, the twist map on phase space, its
//! tangent map, conjugate-point scanning and Green-bundle slopes.
//!
//! The twist map is defined implicitly by `p = -D1 S(x, x')` and
//! `p' = D2 S(x, x')`; the uniform twist condition makes both fiber
//! equations uniquely solvable, so every operation here reduces to a damped
//! Newton solve on a monotone residual.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::genfun::GeneratingFunction;
use crate::grid::TorusGrid;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

/// A point of phase space `R^d x (R^d)*` in universal-cover coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: DVector<f64>,
    pub p: DVector<f64>,
}

impl PhasePoint {
    pub fn new(x: DVector<f64>, p: DVector<f64>) -> Self {
        assert_eq!(x.len(), p.len());
        PhasePoint { x, p }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn dist(&self, other: &PhasePoint) -> f64 {
        ((&self.x - &other.x).norm_squared() + (&self.p - &other.p).norm_squared()).sqrt()
    }
}

/// The 2d x 2d derivative of the twist map in `(dx, dp)` block coordinates.
#[derive(Debug, Clone)]
pub struct TangentBlock {
    pub matrix: DMatrix<f64>,
}

impl TangentBlock {
    /// Residual of the symplecticity identity `J^T Omega J = Omega`.
    pub fn symplectic_residual(&self) -> f64 {
        let d = self.matrix.nrows() / 2;
        let omega = omega_matrix(d);
        (self.matrix.transpose() * &omega * &self.matrix - omega).amax()
    }
}

fn omega_matrix(d: usize) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        o[(i, d + i)] = 1.0;
        o[(d + i, i)] = -1.0;
    }
    o
}

/// Solves `D1 S(x, y) = -p` for `y` (the forward fiber equation).
pub fn fiber_solve(s: &GeneratingFunction, x: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
    let seed = x + s
        .quadratic_part()
        .lu()
        .solve(p)
        .unwrap_or_else(|| p.clone());
    newton_solve(seed, |y| {
        let b = s.derivatives(x, y);
        (&b.d1 + p, b.d12)
    })
}

/// Solves `D2 S(x, y) = p` for `x` (the backward fiber equation).
pub fn fiber_solve_back(
    s: &GeneratingFunction,
    y: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    let seed = y - s
        .quadratic_part()
        .lu()
        .solve(p)
        .unwrap_or_else(|| p.clone());
    newton_solve(seed, |x| {
        let b = s.derivatives(x, y);
        // d/dx of D2 S(x, y) is the transpose of the mixed block
        (&b.d2 - p, b.d12.transpose())
    })
}

/// Damped Newton on a monotone residual; the twist condition keeps the
/// Jacobian invertible, backtracking keeps `||residual||` decreasing.
fn newton_solve<F>(mut z: DVector<f64>, f: F) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let (mut res, mut jac) = f(&z);
    for iter in 0..NEWTON_MAX_ITER {
        let rn = res.norm();
        if rn <= NEWTON_TOL {
            return Ok(z);
        }
        let step = jac.clone().lu().solve(&(-&res)).ok_or(CoreError::NoConvergence {
            iters: iter,
            residual: rn,
        })?;
        let mut t = 1.0;
        loop {
            let cand = &z + &step * t;
            let (r2, j2) = f(&cand);
            if r2.norm() < rn || t < 1e-8 {
                z = cand;
                res = r2;
                jac = j2;
                break;
            }
            t *= 0.5;
        }
    }
    let rn = res.norm();
    if rn <= 1e-11 {
        Ok(z)
    } else {
        Err(CoreError::NoConvergence {
            iters: NEWTON_MAX_ITER,
            residual: rn,
        })
    }
}

/// `x2` such that `(x0, x1, x2)` is extremal:
/// `D2 S(x0, x1) + D1 S(x1, x2) = 0`.
pub fn shift(s: &GeneratingFunction, x0: &DVector<f64>, x1: &DVector<f64>) -> Result<DVector<f64>> {
    let p = s.d2(x0, x1);
    fiber_solve(s, x1, &p)
}

/// Backward shift: `w` such that `(w, x0, x1)` is extremal.
pub fn shift_back(
    s: &GeneratingFunction,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
) -> Result<DVector<f64>> {
    let p = -s.d1(x0, x1);
    fiber_solve_back(s, x0, &p)
}

/// One forward step of the lifted twist map.
pub fn twist_step(s: &GeneratingFunction, pt: &PhasePoint) -> Result<PhasePoint> {
    let y = fiber_solve(s, &pt.x, &pt.p)?;
    let p2 = s.d2(&pt.x, &y);
    Ok(PhasePoint::new(y, p2))
}

/// One backward step of the lifted twist map.
pub fn twist_step_back(s: &GeneratingFunction, pt: &PhasePoint) -> Result<PhasePoint> {
    let x = fiber_solve_back(s, &pt.x, &pt.p)?;
    let p = -s.d1(&x, &pt.x);
    Ok(PhasePoint::new(x, p))
}

/// `n`-fold composition of the lifted twist map; negative `n` iterates the
/// inverse map.
pub fn twist_map(s: &GeneratingFunction, pt: &PhasePoint, n: i64) -> Result<PhasePoint> {
    let mut cur = pt.clone();
    if n >= 0 {
        for _ in 0..n {
            cur = twist_step(s, &cur)?;
        }
    } else {
        for _ in 0..(-n) {
            cur = twist_step_back(s, &cur)?;
        }
    }
    Ok(cur)
}

/// The conjugacy `L(x, y) = (x, -D1 S(x, y))` between the shift map and the
/// twist map.
pub fn conjugacy(s: &GeneratingFunction, x: &DVector<f64>, y: &DVector<f64>) -> PhasePoint {
    PhasePoint::new(x.clone(), -s.d1(x, y))
}

/// Derivative of the twist map at `pt`, by implicit differentiation of the
/// defining equations.
pub fn tangent(s: &GeneratingFunction, pt: &PhasePoint) -> Result<TangentBlock> {
    let y = fiber_solve(s, &pt.x, &pt.p)?;
    let b = s.derivatives(&pt.x, &y);
    let d = pt.dim();
    // dp = -D11 dx - D12 dy  =>  dy = -D12^{-1} (D11 dx + dp)
    let d12_inv = b
        .d12
        .clone()
        .lu()
        .try_inverse()
        .ok_or(CoreError::NoConvergence { iters: 0, residual: f64::NAN })?;
    let a_blk = -&d12_inv * &b.d11;
    let b_blk = -d12_inv;
    // dp' = D21 dx + D22 dy
    let d21 = b.d12.transpose();
    let c_blk = &d21 + &b.d22 * &a_blk;
    let d_blk = &b.d22 * &b_blk;
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    j.view_mut((0, 0), (d, d)).copy_from(&a_blk);
    j.view_mut((0, d), (d, d)).copy_from(&b_blk);
    j.view_mut((d, 0), (d, d)).copy_from(&c_blk);
    j.view_mut((d, d), (d, d)).copy_from(&d_blk);
    Ok(TangentBlock { matrix: j })
}

/// Derivative of the inverse twist map at `pt`.
pub fn tangent_back(s: &GeneratingFunction, pt: &PhasePoint) -> Result<TangentBlock> {
    let prev = twist_step_back(s, pt)?;
    let j = tangent(s, &prev)?;
    let inv = j
        .matrix
        .lu()
        .try_inverse()
        .ok_or(CoreError::NoConvergence { iters: 0, residual: f64::NAN })?;
    Ok(TangentBlock { matrix: inv })
}

/// Region scanned for conjugate points: a torus grid of base points times a
/// regular grid in a momentum box.
#[derive(Debug, Clone)]
pub struct ScanRegion {
    pub base: TorusGrid,
    pub p_min: DVector<f64>,
    pub p_max: DVector<f64>,
    pub p_res: usize,
}

impl ScanRegion {
    pub fn points(&self) -> Vec<PhasePoint> {
        let d = self.p_min.len();
        let mut momenta = vec![DVector::zeros(d)];
        for axis in 0..d {
            let mut next = Vec::new();
            for m in &momenta {
                for i in 0..self.p_res {
                    let mut mm = m.clone();
                    let t = if self.p_res == 1 {
                        0.5
                    } else {
                        i as f64 / (self.p_res - 1) as f64
                    };
                    mm[axis] = self.p_min[axis] + t * (self.p_max[axis] - self.p_min[axis]);
                    next.push(mm);
                }
            }
            momenta = next;
        }
        let mut pts = Vec::new();
        for x in self.base.points() {
            for p in &momenta {
                pts.push(PhasePoint::new(x.clone(), p.clone()));
            }
        }
        pts
    }
}

/// Singular-value track of one scanned phase point.
#[derive(Debug, Clone, Serialize)]
pub struct ScanEntry {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// `(n, sigma_min(M_n), det(M_n))` for n in both scan directions.
    pub track: Vec<(i64, f64, f64)>,
}

/// A located (refined) degeneracy of the vertical-return matrix.
#[derive(Debug, Clone, Serialize)]
pub struct Degeneracy {
    pub n: i64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub min_singular_value: f64,
}

/// Result of a conjugate-point scan over a phase-space region.
#[derive(Debug, Clone, Serialize)]
pub struct ConjugateReport {
    pub entries: Vec<ScanEntry>,
    pub degeneracies: Vec<Degeneracy>,
    pub first_degenerate_n: Option<i64>,
    pub min_singular_value: f64,
    pub threshold: f64,
}

impl ConjugateReport {
    pub fn degeneracy_found(&self) -> bool {
        self.first_degenerate_n.is_some()
    }

    /// CSV serialization: `x_1..x_d, p_1..p_d, n, min_singular_value, degenerate`.
    pub fn to_csv(&self) -> String {
        let d = self.entries.first().map(|e| e.x.len()).unwrap_or(0);
        let mut out = String::new();
        for i in 1..=d {
            out.push_str(&format!("x_{i},"));
        }
        for i in 1..=d {
            out.push_str(&format!("p_{i},"));
        }
        out.push_str("n,min_singular_value,degenerate\n");
        for e in &self.entries {
            for (n, sv, det) in &e.track {
                for xi in &e.x {
                    out.push_str(&format!("{xi},"));
                }
                for pi in &e.p {
                    out.push_str(&format!("{pi},"));
                }
                let deg = u8::from(*sv <= self.threshold * (1.0 + det.abs()));
                out.push_str(&format!("{n},{sv},{deg}\n"));
            }
        }
        out
    }
}

/// Vertical-return matrices along the forward (+) or backward (-) orbit of
/// `pt`: `M_n` is the horizontal block of `DF^n` applied to the vertical.
fn vertical_track(
    s: &GeneratingFunction,
    pt: &PhasePoint,
    n_max: usize,
    backward: bool,
) -> Result<Vec<DMatrix<f64>>> {
    let d = pt.dim();
    let mut basis = DMatrix::zeros(2 * d, d);
    basis.view_mut((d, 0), (d, d)).copy_from(&DMatrix::identity(d, d));
    let mut cur = pt.clone();
    let mut track = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let j = if backward {
            tangent_back(s, &cur)?
        } else {
            tangent(s, &cur)?
        };
        basis = &j.matrix * basis;
        cur = if backward {
            twist_step_back(s, &cur)?
        } else {
            twist_step(s, &cur)?
        };
        track.push(basis.rows(0, d).into_owned());
    }
    Ok(track)
}

fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.min()
}

/// Scans a region for conjugate points.
///
/// At each grid point the vertical is pushed through products of tangent
/// blocks in both time directions. Exact rank loss is not decidable on a
/// grid, so degeneracies are certified through sign changes of `det(M_n)`
/// between neighboring grid points: each sign change is refined by bisection
/// along the connecting segment until the relative singular-value cutoff is
/// met. Degeneracy is a report, not an error.
pub fn conjugate_scan(
    s: &GeneratingFunction,
    region: &ScanRegion,
    n_max: usize,
    threshold: f64,
) -> Result<ConjugateReport> {
    if n_max == 0 || threshold <= 0.0 {
        return Err(CoreError::InvalidInput(
            "conjugate_scan needs n_max >= 1 and threshold > 0".into(),
        ));
    }
    let pts = region.points();
    let tracks: Vec<_> = pts
        .par_iter()
        .map(|pt| -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
            Ok((
                vertical_track(s, pt, n_max, false)?,
                vertical_track(s, pt, n_max, true)?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(pts.len());
    let mut global_min = f64::INFINITY;
    for (pt, (fwd, bwd)) in pts.iter().zip(&tracks) {
        let mut track = Vec::with_capacity(2 * n_max);
        for (k, m) in fwd.iter().enumerate() {
            let sv = min_singular_value(m);
            global_min = global_min.min(sv);
            track.push((k as i64 + 1, sv, m.determinant()));
        }
        for (k, m) in bwd.iter().enumerate() {
            let sv = min_singular_value(m);
            global_min = global_min.min(sv);
            track.push((-(k as i64) - 1, sv, m.determinant()));
        }
        entries.push(ScanEntry {
            x: pt.x.as_slice().to_vec(),
            p: pt.p.as_slice().to_vec(),
            track,
        });
    }

    // Sign-change certificates between neighboring scan points.
    let mut degeneracies: Vec<Degeneracy> = Vec::new();
    let neighbor_pairs = neighbor_index_pairs(region);
    for n_signed in signed_steps(n_max) {
        if degeneracies.iter().any(|dg| dg.n.abs() <= n_signed.abs()) {
            // already found a degeneracy at an earlier or equal |n|
        }
        let dets: Vec<f64> = entries
            .iter()
            .map(|e| e.track.iter().find(|(n, _, _)| *n == n_signed).unwrap().2)
            .collect();
        for &(a, b) in &neighbor_pairs {
            if dets[a].signum() * dets[b].signum() < 0.0 {
                if let Ok(dg) = refine_degeneracy(s, &pts[a], &pts[b], n_signed, threshold) {
                    degeneracies.push(dg);
                    break; // one certificate per n is enough
                }
            }
        }
    }
    degeneracies.sort_by_key(|dg| dg.n.abs());
    let first = degeneracies.first().map(|dg| dg.n);
    Ok(ConjugateReport {
        entries,
        degeneracies,
        first_degenerate_n: first,
        min_singular_value: global_min,
        threshold,
    })
}

/// |n| increasing, forward before backward.
fn signed_steps(n_max: usize) -> Vec<i64> {
    let mut v = Vec::with_capacity(2 * n_max);
    for n in 1..=n_max as i64 {
        v.push(n);
        v.push(-n);
    }
    v
}

/// Index pairs of scan points adjacent in the flattened (base x momentum)
/// grid, along every base axis (with torus wrap) and the momentum axes.
fn neighbor_index_pairs(region: &ScanRegion) -> Vec<(usize, usize)> {
    let base_pts = region.base.len();
    let d = region.p_min.len();
    let p_per_base = region.p_res.pow(d as u32);
    let mut pairs = Vec::new();
    // momentum neighbors share a base point and differ by one in the
    // flattened momentum index along one axis
    for bi in 0..base_pts {
        for mi in 0..p_per_base {
            let mut stride = 1;
            for _axis in 0..d {
                let coord = (mi / stride) % region.p_res;
                if coord + 1 < region.p_res {
                    pairs.push((bi * p_per_base + mi, bi * p_per_base + mi + stride));
                }
                stride *= region.p_res;
            }
        }
    }
    // base neighbors (torus wrap) share a momentum index
    for (a, b) in region.base.neighbor_pairs() {
        for mi in 0..p_per_base {
            pairs.push((a * p_per_base + mi, b * p_per_base + mi));
        }
    }
    pairs
}

/// Bisects along the segment between two phase points until the
/// vertical-return matrix at step `n` is degenerate to the cutoff.
fn refine_degeneracy(
    s: &GeneratingFunction,
    a: &PhasePoint,
    b: &PhasePoint,
    n: i64,
    threshold: f64,
) -> Result<Degeneracy> {
    let det_at = |t: f64| -> Result<(f64, f64, PhasePoint)> {
        let pt = PhasePoint::new(
            &a.x * (1.0 - t) + &b.x * t,
            &a.p * (1.0 - t) + &b.p * t,
        );
        let track = vertical_track(s, &pt, n.unsigned_abs() as usize, n < 0)?;
        let m = track.last().unwrap();
        Ok((m.determinant(), min_singular_value(m), pt))
    };
    let (mut fa, _, _) = det_at(0.0)?;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best: Option<(f64, PhasePoint)> = None;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (fm, sv, pt) = det_at(mid)?;
        let scale = 1.0 + fm.abs();
        if best.as_ref().map_or(true, |(s0, _)| sv < *s0) {
            best = Some((sv, pt));
        }
        if sv <= threshold * scale {
            break;
        }
        if fa.signum() * fm.signum() <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            fa = fm;
        }
    }
    let (sv, pt) = best.ok_or(CoreError::NoConvergence { iters: 80, residual: f64::NAN })?;
    Ok(Degeneracy {
        n,
        x: pt.x.as_slice().to_vec(),
        p: pt.p.as_slice().to_vec(),
        min_singular_value: sv,
    })
}

/// A finite-time Green-bundle slope.
#[derive(Debug, Clone)]
pub struct GreenSlope {
    pub n_iter: usize,
    /// `G_n` with the pushed vertical written as the graph `(dx, G_n dx)`.
    pub slope: DMatrix<f64>,
    /// `||G_n - G_{n/2}||_inf`, a convergence diagnostic.
    pub gap: f64,
}

/// Pushes the vertical from `F^{-n}(pt)` forward `n` steps and expresses the
/// image as a graph over the horizontal.
///
/// The basis is re-orthonormalized every 8 steps so hyperbolic growth does
/// not overflow; the slope `P X^{-1}` is invariant under the
/// re-orthonormalization.
pub fn green_slope(s: &GeneratingFunction, pt: &PhasePoint, n_iter: usize) -> Result<GreenSlope> {
    if n_iter == 0 {
        return Err(CoreError::InvalidInput("green_slope needs n_iter >= 1".into()));
    }
    let g_n = green_slope_once(s, pt, n_iter)?;
    let half = (n_iter / 2).max(1);
    let g_half = green_slope_once(s, pt, half)?;
    let gap = (&g_n - &g_half).amax();
    Ok(GreenSlope {
        n_iter,
        slope: g_n,
        gap,
    })
}

fn green_slope_once(
    s: &GeneratingFunction,
    pt: &PhasePoint,
    n: usize,
) -> Result<DMatrix<f64>> {
    let d = pt.dim();
    // backward orbit pts[k] = F^{-k}(pt)
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(pt.clone());
    for k in 0..n {
        orbit.push(twist_step_back(s, &orbit[k])?);
    }
    let mut basis = DMatrix::zeros(2 * d, d);
    basis.view_mut((d, 0), (d, d)).copy_from(&DMatrix::identity(d, d));
    for (steps, k) in (1..=n).rev().enumerate() {
        let j = tangent(s, &orbit[k])?;
        basis = &j.matrix * basis;
        if (steps + 1) % 8 == 0 {
            let qr = basis.qr();
            basis = qr.q();
        }
    }
    let x_blk = basis.rows(0, d).into_owned();
    let p_blk = basis.rows(d, d).into_owned();
    let svd = x_blk.clone().svd(false, false);
    let smin = svd.singular_values.min();
    let smax = svd.singular_values.max();
    if smin <= 1e-12 * smax.max(1.0) {
        return Err(CoreError::NotTransverse { n });
    }
    let x_inv = x_blk
        .lu()
        .try_inverse()
        .ok_or(CoreError::NotTransverse { n })?;
    Ok(p_blk * x_inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::families;
    use crate::oracles;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn fiber_solve_quadratic() {
        let s = families::quadratic_1d(1.0);
        let y = fiber_solve(&s, &dvector![0.0], &dvector![0.3]).unwrap();
        assert_relative_eq!(y[0], 0.3, epsilon = 1e-12);

        let m = nalgebra::DMatrix::from_diagonal(&dvector![1.0, 2.0]);
        let s2 = families::quadratic(m);
        let y2 = fiber_solve(&s2, &dvector![0.0, 0.0], &dvector![0.0, 1.0]).unwrap();
        assert_relative_eq!(y2[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(y2[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fiber_solve_standard_against_bisection() {
        let s = families::standard(1.0);
        let (x, p) = (dvector![0.2], dvector![0.1]);
        let y = fiber_solve(&s, &x, &p).unwrap();
        // independent bisection on the monotone scalar equation D1S(x, y) + p = 0
        let f = |yy: f64| s.d1(&x, &dvector![yy])[0] + p[0];
        let (mut lo, mut hi) = (-5.0, 5.0);
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_relative_eq!(y[0], 0.5 * (lo + hi), epsilon = 1e-10);
        assert!((s.d1(&x, &y) + &p).norm() <= 1e-11);
    }

    #[test]
    fn shift_quadratic_and_standard() {
        let s = families::quadratic_1d(1.0);
        let x2 = shift(&s, &dvector![0.0], &dvector![0.3]).unwrap();
        assert_relative_eq!(x2[0], 0.6, epsilon = 1e-12);

        let m = nalgebra::DMatrix::from_diagonal(&dvector![1.0, 2.0]);
        let s2 = families::quadratic(m);
        let x2 = shift(&s2, &dvector![0.0, 0.0], &dvector![0.1, 0.2]).unwrap();
        assert_relative_eq!(x2[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(x2[1], 0.4, epsilon = 1e-12);

        let st = families::standard(1.0);
        let x2 = shift(&st, &dvector![0.0], &dvector![0.0]).unwrap();
        assert!(x2[0].abs() < 1e-12);
    }

    #[test]
    fn twist_map_shear() {
        let s = families::quadratic_1d(1.0);
        let pt = PhasePoint::new(dvector![0.0], dvector![0.3]);
        let q = twist_map(&s, &pt, 1).unwrap();
        assert_relative_eq!(q.x[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(q.p[0], 0.3, epsilon = 1e-12);
        let q10 = twist_map(&s, &pt, 10).unwrap();
        assert_relative_eq!(q10.x[0], 3.0, epsilon = 1e-11);
    }

    #[test]
    fn standard_fixed_point() {
        let s = families::standard(1.0);
        let pt = PhasePoint::new(dvector![0.5], dvector![0.0]);
        let q = twist_map(&s, &pt, 1).unwrap();
        assert!(q.dist(&pt) < 1e-12);
    }

    #[test]
    fn round_trip_inverse() {
        let s = families::coupled_standard(0.7, 0.1);
        let pt = PhasePoint::new(dvector![0.3, 0.8], dvector![0.2, -0.4]);
        let fwd = twist_map(&s, &pt, 3).unwrap();
        let back = twist_map(&s, &fwd, -3).unwrap();
        assert!(back.dist(&pt) < 1e-9);
    }

    #[test]
    fn tangent_shear_blocks() {
        let s = families::quadratic_1d(1.0);
        let j = tangent(&s, &PhasePoint::new(dvector![0.1], dvector![0.4]))
            .unwrap()
            .matrix;
        assert_relative_eq!(j[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(j[(0, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(j[(1, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(j[(1, 1)], 1.0, epsilon = 1e-12);

        let m = nalgebra::DMatrix::from_diagonal(&dvector![1.0, 2.0]);
        let s2 = families::quadratic(m.clone());
        let j2 = tangent(&s2, &PhasePoint::new(dvector![0.0, 0.0], dvector![0.3, 0.1]))
            .unwrap()
            .matrix;
        let minv = m.try_inverse().unwrap();
        assert_relative_eq!(j2[(0, 2)], minv[(0, 0)], epsilon = 1e-12);
        assert_relative_eq!(j2[(1, 3)], minv[(1, 1)], epsilon = 1e-12);
        assert_relative_eq!(j2[(2, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tangent_matches_finite_differences_and_is_symplectic() {
        let s = families::standard(1.0);
        let pt = PhasePoint::new(dvector![0.5], dvector![0.0]);
        let j = tangent(&s, &pt).unwrap();
        let fd = oracles::fd_tangent(&s, &pt, 1e-6).unwrap();
        assert!((&j.matrix - &fd).amax() <= 1e-5 * (1.0 + j.matrix.amax()));
        assert!(j.symplectic_residual() <= 1e-8);
        assert_relative_eq!(j.matrix.determinant(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn conjugacy_identity() {
        let s = families::standard(1.0);
        let (x, y) = (dvector![0.21], dvector![0.78]);
        let lhs = twist_map(&s, &conjugacy(&s, &x, &y), 1).unwrap();
        let x2 = shift(&s, &x, &y).unwrap();
        let rhs = conjugacy(&s, &y, &x2);
        assert!(lhs.dist(&rhs) < 1e-9);
    }

    #[test]
    fn equivariance_under_lattice_shift() {
        let s = families::coupled_standard(0.6, 0.05);
        let pt = PhasePoint::new(dvector![0.2, 0.9], dvector![0.1, -0.2]);
        let shifted = PhasePoint::new(&pt.x + dvector![2.0, -1.0], pt.p.clone());
        let a = twist_map(&s, &pt, 2).unwrap();
        let b = twist_map(&s, &shifted, 2).unwrap();
        assert!((&b.x - &a.x - dvector![2.0, -1.0]).norm() < 1e-9);
        assert!((&b.p - &a.p).norm() < 1e-9);
    }

    #[test]
    fn shear_has_no_conjugate_points() {
        let s = families::quadratic_1d(1.0);
        let region = ScanRegion {
            base: TorusGrid::new(vec![4]),
            p_min: dvector![-0.5],
            p_max: dvector![0.5],
            p_res: 3,
        };
        let rep = conjugate_scan(&s, &region, 50, 1e-8).unwrap();
        assert!(!rep.degeneracy_found());
        assert_relative_eq!(rep.min_singular_value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_k_standard_matches_shear() {
        let s0 = families::standard(0.0);
        let sq = families::quadratic_1d(1.0);
        let region = ScanRegion {
            base: TorusGrid::new(vec![4]),
            p_min: dvector![-0.5],
            p_max: dvector![0.5],
            p_res: 3,
        };
        let a = conjugate_scan(&s0, &region, 20, 1e-8).unwrap();
        let b = conjugate_scan(&sq, &region, 20, 1e-8).unwrap();
        assert!(!a.degeneracy_found() && !b.degeneracy_found());
        for (ea, eb) in a.entries.iter().zip(&b.entries) {
            for ((_, sa, _), (_, sb, _)) in ea.track.iter().zip(&eb.track) {
                assert_relative_eq!(sa, sb, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn green_slope_shear() {
        let s = families::quadratic_1d(1.0);
        let pt = PhasePoint::new(dvector![0.1], dvector![0.25]);
        let g = green_slope(&s, &pt, 64).unwrap();
        assert_relative_eq!(g.slope[(0, 0)], 1.0 / 64.0, epsilon = 1e-12);
        assert!(g.gap > 0.0);
    }

    #[test]
    fn green_slope_anisotropic() {
        let m = nalgebra::DMatrix::from_diagonal(&dvector![1.0, 2.0]);
        let s = families::quadratic(m.clone());
        let pt = PhasePoint::new(dvector![0.3, 0.1], dvector![0.0, 0.0]);
        let g = green_slope(&s, &pt, 32).unwrap();
        assert!((&g.slope - &m / 32.0).amax() < 1e-10);
        assert!((&g.slope - g.slope.transpose()).amax() < 1e-10);
    }

    #[test]
    fn green_slope_hyperbolic_fixed_point() {
        // the fixed point at x = 0.5 is hyperbolic (monodromy trace 2 + K)
        let s = families::standard(1.0);
        let pt = PhasePoint::new(dvector![0.5], dvector![0.0]);
        let g = green_slope(&s, &pt, 60).unwrap();
        // unstable eigenvector slope of the 2x2 monodromy [[1+K,1],[K,1]]
        let k = 1.0;
        let tr: f64 = 2.0 + k;
        let lam = 0.5 * (tr + (tr * tr - 4.0).sqrt());
        // eigenvector (v, (lam - (1+K)) v): slope = lam - 1 - K
        let slope = lam - 1.0 - k;
        assert_relative_eq!(g.slope[(0, 0)], slope, epsilon = 1e-9);
        assert!(g.gap < 1e-9);
    }
}
