//! Action sums and coercive fixed-endpoint minimization.
//!
//! `A_N(x, y)` is computed by a damped Newton iteration on the interior
//! points of a segment. The Hessian of the fixed-endpoint action is block
//! tridiagonal (diagonal `D22 + D11`, off-diagonal `D12`), so the Newton
//! step is solved by block forward elimination and back substitution.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{shift, shift_back};
use crate::error::{CoreError, Result};
use crate::genfun::GeneratingFunction;
use crate::grid::TorusGrid;

/// A finite configuration segment with its action.
#[derive(Debug, Clone)]
pub struct Segment {
    pub points: Vec<DVector<f64>>,
    pub action: f64,
}

impl Segment {
    pub fn new(s: &GeneratingFunction, points: Vec<DVector<f64>>) -> Self {
        let action = action_sum(s, &points);
        Segment { points, action }
    }

    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }
}

/// `S(x_0, ..., x_n) = sum_k S(x_k, x_{k+1})`.
pub fn action_sum(s: &GeneratingFunction, points: &[DVector<f64>]) -> f64 {
    assert!(points.len() >= 2, "action needs at least two points");
    points
        .windows(2)
        .map(|w| s.eval(&w[0], &w[1]))
        .sum()
}

/// Max interior extremality residual
/// `||D2 S(x_{k-1}, x_k) + D1 S(x_k, x_{k+1})||`.
pub fn extremal_residual(s: &GeneratingFunction, points: &[DVector<f64>]) -> f64 {
    assert!(points.len() >= 3, "residual needs at least three points");
    points
        .windows(3)
        .map(|w| (s.d2(&w[0], &w[1]) + s.d1(&w[1], &w[2])).norm())
        .fold(0.0, f64::max)
}

/// Options for [`minimize_endpoints`].
#[derive(Debug, Clone)]
pub struct MinimizeOpts {
    /// Extra random starts besides the interpolation seed.
    pub multistarts: usize,
    /// Gaussian perturbation scale applied to the extra starts.
    pub perturb_scale: f64,
    pub seed: u64,
    /// Absolute gradient-norm tolerance.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Coercivity constants `(alpha, beta, gamma)` from the family audit,
    /// used to size the search box around the interpolation seed.
    pub coercivity: Option<(f64, f64, f64)>,
}

impl Default for MinimizeOpts {
    fn default() -> Self {
        MinimizeOpts {
            multistarts: 4,
            perturb_scale: 0.25,
            seed: 0,
            grad_tol: 1e-9,
            max_iter: 200,
            coercivity: None,
        }
    }
}

impl MinimizeOpts {
    pub fn with_seed(seed: u64) -> Self {
        MinimizeOpts { seed, ..Default::default() }
    }
}

/// Result of a fixed-endpoint minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub segment: Segment,
    pub value: f64,
    pub grad_norm: f64,
    pub newton_iters: usize,
    pub multistart_count: usize,
    /// Smallest eigenvalue of the dense action Hessian at the result.
    pub hessian_min_eig: f64,
}

/// Minimizes the fixed-endpoint action `S_{x,y,N}` over interior points.
///
/// The seed is the linear interpolation between `x` and `y` (exact for the
/// integrable families); extra starts are seeded perturbations of it.
/// Returns the best critical point found; `SaddleDetected` signals that the
/// best critical point is not a local minimum, which can only happen in the
/// presence of conjugate points.
pub fn minimize_endpoints(
    s: &GeneratingFunction,
    x: &DVector<f64>,
    y: &DVector<f64>,
    n: usize,
    opts: &MinimizeOpts,
) -> Result<MinimizeResult> {
    if n == 0 {
        return Err(CoreError::InvalidInput("minimize_endpoints needs N >= 1".into()));
    }
    if n == 1 {
        let seg = Segment::new(s, vec![x.clone(), y.clone()]);
        let value = seg.action;
        return Ok(MinimizeResult {
            segment: seg,
            value,
            grad_norm: 0.0,
            newton_iters: 0,
            multistart_count: 1,
            hessian_min_eig: 0.0,
        });
    }
    let d = x.len();
    let seed_interior: Vec<DVector<f64>> = (1..n)
        .map(|k| x + (y - x) * (k as f64 / n as f64))
        .collect();
    let mut box_radius = initial_box_radius(s, x, y, n, opts);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![seed_interior.clone()];
    for _ in 0..opts.multistarts {
        let perturbed: Vec<DVector<f64>> = seed_interior
            .iter()
            .map(|z| {
                z + DVector::from_fn(d, |_, _| {
                    opts.perturb_scale * gaussian(&mut rng)
                })
            })
            .collect();
        starts.push(perturbed);
    }

    let mut best: Option<(f64, Vec<DVector<f64>>, f64, usize)> = None;
    let mut total_iters = 0;
    for start in &starts {
        let mut enlargements = 0;
        loop {
            match newton_minimize(s, x, y, start, &seed_interior, box_radius, opts) {
                Ok((interior, value, gnorm, iters, touched_box)) => {
                    total_iters += iters;
                    if touched_box && enlargements < 3 {
                        enlargements += 1;
                        box_radius *= 2.0;
                        continue;
                    }
                    if best.as_ref().map_or(true, |(v, _, _, _)| value < *v) {
                        best = Some((value, interior, gnorm, iters));
                    }
                }
                Err(_) => {} // a failed start is not fatal while others converge
            }
            break;
        }
    }
    let (mut value, mut interior, mut grad_norm, _) = best.ok_or(CoreError::NoConvergence {
        iters: opts.max_iter * starts.len(),
        residual: f64::NAN,
    })?;

    // a saddle can attract the Newton iteration along its stable manifold;
    // kick along the negative-curvature direction and descend again
    let mut min_eig = 0.0;
    let mut escape_step = 0.25;
    for escape in 0.. {
        let mut points = Vec::with_capacity(n + 1);
        points.push(x.clone());
        points.extend(interior.iter().cloned());
        points.push(y.clone());
        let eig = dense_hessian(s, &points).symmetric_eigen();
        let worst = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        min_eig = eig.eigenvalues[worst];
        let scale = (1.0 + value.abs()).max(1.0);
        if min_eig >= -1e-8 * scale {
            break;
        }
        if escape >= 5 {
            return Err(CoreError::SaddleDetected { min_eig });
        }
        let dir = eig.eigenvectors.column(worst);
        let mut improved = false;
        for sign in [1.0, -1.0] {
            let kicked: Vec<DVector<f64>> = interior
                .iter()
                .enumerate()
                .map(|(k, z)| {
                    z + DVector::from_fn(d, |i, _| sign * escape_step * dir[k * d + i])
                })
                .collect();
            if let Ok((cand, v, g, iters, _)) =
                newton_minimize(s, x, y, &kicked, &seed_interior, box_radius, opts)
            {
                total_iters += iters;
                if v < value - 1e-12 * scale {
                    value = v;
                    interior = cand;
                    grad_norm = g;
                    improved = true;
                }
            }
        }
        if !improved {
            escape_step *= 2.0;
        }
    }
    let mut points = Vec::with_capacity(n + 1);
    points.push(x.clone());
    points.extend(interior);
    points.push(y.clone());
    let segment = Segment { points, action: value };
    Ok(MinimizeResult {
        segment,
        value,
        grad_norm,
        newton_iters: total_iters,
        multistart_count: starts.len(),
        hessian_min_eig: min_eig,
    })
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Search radius around the interpolation seed.
///
/// When coercivity constants are available the radius bounds the longest
/// single step a minimizer no worse than the seed can take; otherwise a
/// fixed margin around the seed is used. The radius only gates box
/// enlargement, it does not constrain well-behaved Newton runs.
fn initial_box_radius(
    s: &GeneratingFunction,
    x: &DVector<f64>,
    y: &DVector<f64>,
    n: usize,
    opts: &MinimizeOpts,
) -> f64 {
    let base = 2.0 + (y - x).amax();
    match opts.coercivity {
        Some((alpha, beta, gamma)) if gamma > 0.0 => {
            let pts: Vec<DVector<f64>> = (0..=n)
                .map(|k| x + (y - x) * (k as f64 / n as f64))
                .collect();
            let seed_value = action_sum(s, &pts);
            let floor = if beta < 0.0 {
                alpha - beta * beta / (4.0 * gamma)
            } else {
                alpha
            };
            let budget = seed_value - (n as f64 - 1.0) * floor - alpha;
            if budget <= 0.0 {
                return base;
            }
            let t_max = (-beta + (beta * beta + 4.0 * gamma * budget).sqrt()) / (2.0 * gamma);
            base.max(n as f64 * t_max)
        }
        _ => base,
    }
}

/// One damped Newton run from `start`; returns
/// `(interior, value, grad_norm, iters, touched_box)`.
#[allow(clippy::type_complexity)]
fn newton_minimize(
    s: &GeneratingFunction,
    x: &DVector<f64>,
    y: &DVector<f64>,
    start: &[DVector<f64>],
    seed: &[DVector<f64>],
    box_radius: f64,
    opts: &MinimizeOpts,
) -> Result<(Vec<DVector<f64>>, f64, f64, usize, bool)> {
    let m = start.len();
    let d = x.len();
    let mut z: Vec<DVector<f64>> = start.to_vec();
    let mut touched = false;

    let eval_all = |z: &[DVector<f64>]| -> (f64, Vec<crate::genfun::DerivativeBundle>) {
        let mut bundles = Vec::with_capacity(m + 1);
        let mut prev = x;
        for zk in z {
            bundles.push(s.derivatives(prev, zk));
            prev = zk;
        }
        bundles.push(s.derivatives(prev, y));
        let value = bundles.iter().map(|b| b.value).sum();
        (value, bundles)
    };
    let value_only = |z: &[DVector<f64>]| -> f64 {
        let mut v = 0.0;
        let mut prev = x;
        for zk in z {
            v += s.eval(prev, zk);
            prev = zk;
        }
        v + s.eval(prev, y)
    };

    let (mut value, mut bundles) = eval_all(&z);
    for iter in 0..opts.max_iter {
        // gradient blocks g_k = D2 S(x_{k-1}, x_k) + D1 S(x_k, x_{k+1})
        let grad: Vec<DVector<f64>> = (0..m)
            .map(|k| &bundles[k].d2 + &bundles[k + 1].d1)
            .collect();
        let gnorm = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
        if gnorm <= opts.grad_tol {
            return Ok((z, value, gnorm, iter, touched));
        }
        let diag: Vec<DMatrix<f64>> = (0..m)
            .map(|k| &bundles[k].d22 + &bundles[k + 1].d11)
            .collect();
        let upper: Vec<DMatrix<f64>> = (0..m - 1).map(|k| bundles[k + 1].d12.clone()).collect();
        let rhs: Vec<DVector<f64>> = grad.iter().map(|g| -g).collect();
        let newton_dir = solve_block_tridiagonal(&diag, &upper, &rhs);

        // fall back to steepest descent when the Hessian is unusable
        let dir = match newton_dir {
            Some(dir) => {
                let descent: f64 = dir
                    .iter()
                    .zip(&grad)
                    .map(|(p, g)| p.dot(g))
                    .sum();
                if descent < 0.0 {
                    dir
                } else {
                    grad.iter().map(|g| -g).collect()
                }
            }
            None => grad.iter().map(|g| -g).collect(),
        };
        let dir_dot_grad: f64 = dir.iter().zip(&grad).map(|(p, g)| p.dot(g)).sum();

        // Armijo backtracking
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-12 {
            let cand: Vec<DVector<f64>> = z
                .iter()
                .zip(&dir)
                .map(|(zk, pk)| zk + pk * t)
                .collect();
            let vc = value_only(&cand);
            if vc <= value + 1e-4 * t * dir_dot_grad {
                z = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // stagnation at numerical precision: accept if the gradient is
            // already small in the relaxed sense
            if gnorm <= 1e-9 * (1.0 + value.abs()) {
                return Ok((z, value, gnorm, iter, touched));
            }
            return Err(CoreError::NoConvergence { iters: iter, residual: gnorm });
        }
        // box check against the interpolation seed
        for (zk, sk) in z.iter_mut().zip(seed) {
            for i in 0..d {
                let dev = zk[i] - sk[i];
                if dev.abs() > box_radius {
                    zk[i] = sk[i] + dev.signum() * box_radius;
                    touched = true;
                }
            }
        }
        let (v2, b2) = eval_all(&z);
        value = v2;
        bundles = b2;
    }
    let grad: Vec<DVector<f64>> = (0..m)
        .map(|k| &bundles[k].d2 + &bundles[k + 1].d1)
        .collect();
    let gnorm = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
    if gnorm <= 1e-9 * (1.0 + value.abs()) {
        Ok((z, value, gnorm, opts.max_iter, touched))
    } else {
        Err(CoreError::NoConvergence { iters: opts.max_iter, residual: gnorm })
    }
}

/// Solves the symmetric block-tridiagonal system with diagonal blocks
/// `diag`, super-diagonal blocks `upper` (sub-diagonal = transposes) by
/// block forward elimination and back substitution.
pub fn solve_block_tridiagonal(
    diag: &[DMatrix<f64>],
    upper: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
) -> Option<Vec<DVector<f64>>> {
    let m = diag.len();
    assert_eq!(upper.len() + 1, m.max(1));
    assert_eq!(rhs.len(), m);
    let mut c = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    c.push(diag[0].clone());
    y.push(rhs[0].clone());
    for k in 1..m {
        let prev_lu = c[k - 1].clone().lu();
        let w = prev_lu.solve(&upper[k - 1])?; // C_{k-1}^{-1} E_{k-1}
        c.push(&diag[k] - upper[k - 1].transpose() * &w);
        let wy = prev_lu.solve(&y[k - 1])?;
        y.push(&rhs[k] - upper[k - 1].transpose() * wy);
    }
    let mut z = vec![DVector::zeros(0); m];
    z[m - 1] = c[m - 1].clone().lu().solve(&y[m - 1])?;
    for k in (0..m - 1).rev() {
        let r = &y[k] - &upper[k] * &z[k + 1];
        z[k] = c[k].clone().lu().solve(&r)?;
    }
    Some(z)
}

/// Dense Hessian of the fixed-endpoint action at a segment (endpoints
/// included in `points`, variables are the interior points).
pub fn dense_hessian(s: &GeneratingFunction, points: &[DVector<f64>]) -> DMatrix<f64> {
    let n = points.len() - 1;
    let d = points[0].len();
    let m = n - 1;
    let bundles: Vec<_> = points
        .windows(2)
        .map(|w| s.derivatives(&w[0], &w[1]))
        .collect();
    let mut h = DMatrix::zeros(m * d, m * d);
    for k in 0..m {
        let blk = &bundles[k].d22 + &bundles[k + 1].d11;
        h.view_mut((k * d, k * d), (d, d)).copy_from(&blk);
        if k + 1 < m {
            let e = &bundles[k + 1].d12;
            h.view_mut((k * d, (k + 1) * d), (d, d)).copy_from(e);
            h.view_mut(((k + 1) * d, k * d), (d, d)).copy_from(&e.transpose());
        }
    }
    h
}

/// Extends the extremal pair `(x0, x1)` `n_plus` steps forward past `x1`
/// and `n_minus` steps backward before `x0`.
pub fn extend_extremal(
    s: &GeneratingFunction,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    n_minus: usize,
    n_plus: usize,
) -> Result<Vec<DVector<f64>>> {
    let mut back = Vec::with_capacity(n_minus);
    let mut a = x0.clone();
    let mut b = x1.clone();
    for _ in 0..n_minus {
        let w = shift_back(s, &a, &b)?;
        back.push(w.clone());
        b = a;
        a = w;
    }
    back.reverse();
    let mut out = back;
    out.push(x0.clone());
    out.push(x1.clone());
    let mut prev = x0.clone();
    let mut cur = x1.clone();
    for _ in 0..n_plus {
        let next = shift(s, &prev, &cur)?;
        out.push(next.clone());
        prev = cur;
        cur = next;
    }
    Ok(out)
}

/// `A_N(x, y) + A_{N'}(y, z) - A_{N+N'}(x, z)`; nonnegative by the
/// triangular inequality, zero exactly when `y` sits on the minimizing
/// segment from `x` to `z`.
pub fn triangle_gap(
    s: &GeneratingFunction,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
    n1: usize,
    n2: usize,
    opts: &MinimizeOpts,
) -> Result<f64> {
    let a = minimize_endpoints(s, x, y, n1, opts)?.value;
    let b = minimize_endpoints(s, y, z, n2, opts)?.value;
    let c = minimize_endpoints(s, x, z, n1 + n2, opts)?.value;
    Ok(a + b - c)
}

/// Samples of `f(x) = A_N(x, x + r)` over a torus grid.
#[derive(Debug, Clone)]
pub struct FProfile {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
    pub gap: f64,
    pub argmax: usize,
    pub argmin: usize,
}

/// Evaluates the constancy observable `f(x) = A_N(x, x + r)` over a grid.
///
/// The gap `max f - min f` vanishes for twist maps without conjugate
/// points; a strictly positive gap certifies that conjugate points exist.
pub fn f_profile(
    s: &GeneratingFunction,
    n: usize,
    r: &[i64],
    grid: &TorusGrid,
    opts: &MinimizeOpts,
) -> Result<FProfile> {
    if n == 0 {
        return Err(CoreError::InvalidInput("f_profile needs N >= 1".into()));
    }
    let rv = DVector::from_iterator(r.len(), r.iter().map(|&k| k as f64));
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let y = &x + &rv;
            let cell_opts = MinimizeOpts {
                seed: opts.seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                ..opts.clone()
            };
            minimize_endpoints(s, &x, &y, n, &cell_opts).map(|m| m.value)
        })
        .collect::<Result<_>>()?;
    let (mut argmin, mut argmax) = (0, 0);
    for (i, &v) in values.iter().enumerate() {
        if v < values[argmin] {
            argmin = i;
        }
        if v > values[argmax] {
            argmax = i;
        }
    }
    let gap = values[argmax] - values[argmin];
    Ok(FProfile {
        grid: grid.clone(),
        values,
        gap,
        argmax,
        argmin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::families;
    use crate::oracles;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn action_sums() {
        let s = families::quadratic_1d(1.0);
        let pts = vec![dvector![0.0], dvector![0.5], dvector![1.0]];
        assert_relative_eq!(action_sum(&s, &pts), 0.25, epsilon = 1e-15);
        assert_relative_eq!(
            action_sum(&s, &[dvector![0.0], dvector![1.0]]),
            0.5,
            epsilon = 1e-15
        );
        let st = families::standard(1.0);
        let z = dvector![0.0];
        let v = action_sum(&st, &[z.clone(), z.clone(), z.clone()]);
        assert_relative_eq!(v, 2.0 / (std::f64::consts::TAU.powi(2)), epsilon = 1e-15);
    }

    #[test]
    fn minimize_quadratic_equal_steps() {
        let s = families::quadratic_1d(1.0);
        let r = minimize_endpoints(
            &s,
            &dvector![0.0],
            &dvector![1.0],
            2,
            &MinimizeOpts::default(),
        )
        .unwrap();
        assert_relative_eq!(r.value, 0.25, epsilon = 1e-12);
        assert_relative_eq!(r.segment.points[1][0], 0.5, epsilon = 1e-10);
        assert!(r.grad_norm <= 1e-9 * (1.0 + r.value.abs()));
    }

    #[test]
    fn minimize_anisotropic() {
        let m = nalgebra::DMatrix::from_diagonal(&dvector![1.0, 2.0]);
        let s = families::quadratic(m);
        let r = minimize_endpoints(
            &s,
            &dvector![0.0, 0.0],
            &dvector![0.0, 1.0],
            4,
            &MinimizeOpts::default(),
        )
        .unwrap();
        assert_relative_eq!(r.value, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn minimize_standard_matches_derivative_free_oracle() {
        let s = families::standard(1.0);
        let r = minimize_endpoints(
            &s,
            &dvector![0.0],
            &dvector![1.0],
            3,
            &MinimizeOpts::default(),
        )
        .unwrap();
        let oracle =
            oracles::minimize_endpoints_oracle(&s, &dvector![0.0], &dvector![1.0], 3, 9);
        assert_relative_eq!(r.value, oracle, epsilon = 1e-7);
        assert!(extremal_residual(&s, &r.segment.points) <= 1e-9);
    }

    #[test]
    fn extend_arithmetic_progression() {
        let s = families::quadratic_1d(1.0);
        let pts = extend_extremal(&s, &dvector![0.0], &dvector![0.5], 0, 2).unwrap();
        let expect = [0.0, 0.5, 1.0, 1.5];
        assert_eq!(pts.len(), 4);
        for (p, e) in pts.iter().zip(expect) {
            assert_relative_eq!(p[0], e, epsilon = 1e-10);
        }
    }

    #[test]
    fn constant_sequences_are_extremal() {
        let s = families::quadratic_1d(1.0);
        let pts = extend_extremal(&s, &dvector![0.0], &dvector![0.0], 2, 2).unwrap();
        assert_eq!(pts.len(), 6);
        for p in &pts {
            assert!(p[0].abs() < 1e-10);
        }
        let st = families::standard(1.0);
        let pts = extend_extremal(&st, &dvector![0.5], &dvector![0.5], 1, 3).unwrap();
        for p in &pts {
            assert_relative_eq!(p[0], 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn residual_values() {
        let s = families::quadratic_1d(1.0);
        let r0 = extremal_residual(&s, &[dvector![0.0], dvector![0.5], dvector![1.0]]);
        assert!(r0 < 1e-15);
        let r1 = extremal_residual(&s, &[dvector![0.0], dvector![0.6], dvector![1.0]]);
        assert_relative_eq!(r1, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn triangle_gap_cases() {
        let s = families::quadratic_1d(1.0);
        let opts = MinimizeOpts::default();
        let on = triangle_gap(
            &s,
            &dvector![0.0],
            &dvector![0.5],
            &dvector![1.0],
            1,
            1,
            &opts,
        )
        .unwrap();
        assert!(on.abs() < 1e-10);
        let off = triangle_gap(
            &s,
            &dvector![0.0],
            &dvector![0.8],
            &dvector![1.0],
            1,
            1,
            &opts,
        )
        .unwrap();
        assert_relative_eq!(off, 0.09, epsilon = 1e-10);
    }

    #[test]
    fn f_profile_quadratic_constant() {
        let s = families::quadratic_1d(1.0);
        let prof = f_profile(&s, 1, &[1], &TorusGrid::new(vec![64]), &MinimizeOpts::default())
            .unwrap();
        assert!(prof.gap <= 1e-12);
        assert_relative_eq!(prof.values[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn f_profile_standard_closed_form() {
        let s = families::standard(1.0);
        let prof = f_profile(&s, 1, &[0], &TorusGrid::new(vec![64]), &MinimizeOpts::default())
            .unwrap();
        let expect = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::PI);
        assert_relative_eq!(prof.gap, expect, epsilon = 1e-12);
    }

    #[test]
    fn minimizer_reextends_to_itself() {
        let s = families::standard(1.0);
        let r = minimize_endpoints(
            &s,
            &dvector![0.1],
            &dvector![0.9],
            4,
            &MinimizeOpts::default(),
        )
        .unwrap();
        let pts = &r.segment.points;
        let re = extend_extremal(&s, &pts[0], &pts[1], 0, 3).unwrap();
        for (a, b) in re.iter().zip(pts) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn banded_solve_matches_dense() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for &d in &[1usize, 2] {
            for m in 1..=7usize {
                let diag: Vec<DMatrix<f64>> = (0..m)
                    .map(|_| {
                        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
                        &a * a.transpose() + DMatrix::identity(d, d) * (2.0 + d as f64)
                    })
                    .collect();
                let upper: Vec<DMatrix<f64>> = (0..m.saturating_sub(1))
                    .map(|_| DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.5..0.5)))
                    .collect();
                let rhs: Vec<DVector<f64>> = (0..m)
                    .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)))
                    .collect();
                let z = solve_block_tridiagonal(&diag, &upper, &rhs).unwrap();
                // dense assembly
                let mut h = DMatrix::zeros(m * d, m * d);
                let mut b = DVector::zeros(m * d);
                for k in 0..m {
                    h.view_mut((k * d, k * d), (d, d)).copy_from(&diag[k]);
                    if k + 1 < m {
                        h.view_mut((k * d, (k + 1) * d), (d, d)).copy_from(&upper[k]);
                        h.view_mut(((k + 1) * d, k * d), (d, d))
                            .copy_from(&upper[k].transpose());
                    }
                    b.rows_mut(k * d, d).copy_from(&rhs[k]);
                }
                let dense = h.lu().solve(&b).unwrap();
                for k in 0..m {
                    for i in 0..d {
                        assert_relative_eq!(z[k][i], dense[k * d + i], epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn translation_invariance() {
        let s = families::coupled_standard(0.5, 0.1);
        let opts = MinimizeOpts::default();
        let (x, y) = (dvector![0.2, 0.7], dvector![1.1, 0.4]);
        let shift = dvector![2.0, -3.0];
        let a = minimize_endpoints(&s, &x, &y, 3, &opts).unwrap().value;
        let b = minimize_endpoints(&s, &(&x + &shift), &(&y + &shift), 3, &opts)
            .unwrap()
            .value;
        assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }
}
