//! Generating functions of uniform twist type.
//!
//! A generating function is a C^2 map `S : R^d x R^d -> R` with
//!
//! * diagonal periodicity: `S(x+r, y+r) = S(x, y)` for every `r` in `Z^d`;
//! * uniform twist: the quadratic form of the mixed block `D12 S` is bounded
//!   above by `-A ||xi||^2` for some constant `A > 0`.
//!
//! The families implemented here are closed under the operations the rest of
//! the crate needs (all first and second partial derivatives are analytic),
//! and a linear cocycle `c (x - y)` can be attached to any of them without
//! touching the second derivatives.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

const TAU: f64 = std::f64::consts::TAU;

/// One trigonometric term `a cos(2 pi k.z) + b sin(2 pi k.z)`.
///
/// For the `integrable_convex` family `z = y - x` and `k` has length `d`;
/// for `custom_fourier` the phase is `k_x . x + k_v . (y - x)` and `k` stores
/// the concatenation `(k_x, k_v)` of length `2d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub index: Vec<i64>,
    pub cos_coeff: f64,
    pub sin_coeff: f64,
}

/// Built-in family descriptors.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `S(x,y) = 1/2 (y-x)^T M (y-x)` with `M` symmetric positive definite.
    IntegrableQuadratic { m: DMatrix<f64> },
    /// `S(x,y) = h(y-x)` with `h(v) = 1/2 v^T M v + trig polynomial in v`.
    IntegrableConvex { m: DMatrix<f64>, terms: Vec<FourierTerm> },
    /// `S(x,y) = 1/2 (y-x)^2 + (K / 4 pi^2) cos(2 pi x)` (d = 1).
    Standard { k: f64 },
    /// Two standard factors plus a coupling `eps cos(2 pi (x1 - x2))` (d = 2).
    CoupledStandard { k: f64, eps: f64 },
    /// `1/2 (y-x)^T M (y-x)` plus a trig polynomial in `(x, y-x)`.
    CustomFourier { m: DMatrix<f64>, terms: Vec<FourierTerm> },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::IntegrableQuadratic { .. } => "integrable_quadratic",
            Family::IntegrableConvex { .. } => "integrable_convex",
            Family::Standard { .. } => "standard",
            Family::CoupledStandard { .. } => "coupled_standard",
            Family::CustomFourier { .. } => "custom_fourier",
        }
    }
}

/// Value and first/second partial derivative blocks of `S` at one `(x, y)`.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub value: f64,
    pub d1: DVector<f64>,
    pub d2: DVector<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d22: DMatrix<f64>,
}

/// A generating function of uniform twist type, possibly twisted by a
/// linear cocycle `c (x - y)`.
///
/// Immutable after construction; every evaluation is pure.
#[derive(Debug, Clone)]
pub struct GeneratingFunction {
    dim: usize,
    family: Family,
    cocycle: DVector<f64>,
    twist_constant_hint: Option<f64>,
}

/// Report of the defining-condition audit.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    /// `max |S(x+r, y+r) - S(x, y)|` over the sample set.
    pub periodicity_residual: f64,
    /// `min` over samples of the smallest eigenvalue of `-sym(D12 S)`.
    pub twist_lower_bound: f64,
    /// Least-squares fit `S >= alpha + beta t + gamma t^2` with `t = ||x-y||`.
    pub coercivity_alpha: f64,
    pub coercivity_beta: f64,
    pub coercivity_gamma: f64,
    /// Most negative value of `S - (alpha + beta t + gamma t^2)` over samples.
    pub coercivity_worst_violation: f64,
    pub n_samples: usize,
}

impl GeneratingFunction {
    /// Instantiates a built-in family, validating parameters and running a
    /// quick twist audit on a default sample set.
    pub fn make_family(family: Family) -> Result<Self> {
        let dim = match &family {
            Family::IntegrableQuadratic { m } | Family::IntegrableConvex { m, .. } => {
                check_spd(m)?;
                m.nrows()
            }
            Family::Standard { .. } => 1,
            Family::CoupledStandard { .. } => 2,
            Family::CustomFourier { m, .. } => {
                check_spd(m)?;
                m.nrows()
            }
        };
        if let Family::IntegrableConvex { m, terms } | Family::CustomFourier { m, terms } = &family
        {
            let want = match &family {
                Family::IntegrableConvex { .. } => m.nrows(),
                _ => 2 * m.nrows(),
            };
            for t in terms {
                if t.index.len() != want {
                    return Err(CoreError::InvalidFamily(format!(
                        "fourier index length {} does not match expected {}",
                        t.index.len(),
                        want
                    )));
                }
            }
        }
        let gf = GeneratingFunction {
            dim,
            family,
            cocycle: DVector::zeros(dim),
            twist_constant_hint: None,
        };
        let report = gf.audit(64, 0)?;
        Ok(GeneratingFunction {
            twist_constant_hint: Some(report.twist_lower_bound),
            ..gf
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn cocycle(&self) -> &DVector<f64> {
        &self.cocycle
    }

    /// Claimed lower bound for the twist constant, filled by the audit.
    pub fn twist_constant_hint(&self) -> Option<f64> {
        self.twist_constant_hint
    }

    /// Returns the same base family twisted by the linear cocycle
    /// `x |-> c . x`, i.e. `S_c(x,y) = S(x,y) + c . (x - y)`.
    ///
    /// Second derivatives (and hence the twist constant and all extremal
    /// sequences) are unchanged; cocycles compose additively.
    pub fn with_cocycle(&self, c: &DVector<f64>) -> Self {
        assert_eq!(c.len(), self.dim);
        GeneratingFunction {
            cocycle: &self.cocycle + c,
            ..self.clone()
        }
    }

    /// `S(x, y)`, including the cocycle term.
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.base_eval(x, y) + self.cocycle.dot(&(x - y))
    }

    /// Analytic value and derivative blocks at `(x, y)`.
    pub fn derivatives(&self, x: &DVector<f64>, y: &DVector<f64>) -> DerivativeBundle {
        let mut b = self.base_derivatives(x, y);
        b.value += self.cocycle.dot(&(x - y));
        b.d1 += &self.cocycle;
        b.d2 -= &self.cocycle;
        b
    }

    /// `D1 S(x, y)`.
    pub fn d1(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.derivatives(x, y).d1
    }

    /// `D2 S(x, y)`.
    pub fn d2(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.derivatives(x, y).d2
    }

    fn base_eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let v = y - x;
        match &self.family {
            Family::IntegrableQuadratic { m } => 0.5 * v.dot(&(m * &v)),
            Family::IntegrableConvex { m, terms } => {
                let mut s = 0.5 * v.dot(&(m * &v));
                for t in terms {
                    let theta = TAU * dot_iv(&t.index, v.as_slice());
                    s += t.cos_coeff * theta.cos() + t.sin_coeff * theta.sin();
                }
                s
            }
            Family::Standard { k } => {
                0.5 * v[0] * v[0] + k / (TAU * TAU) * (TAU * x[0]).cos()
            }
            Family::CoupledStandard { k, eps } => {
                let mut s = 0.0;
                for i in 0..2 {
                    s += 0.5 * v[i] * v[i] + k / (TAU * TAU) * (TAU * x[i]).cos();
                }
                s + eps * (TAU * (x[0] - x[1])).cos()
            }
            Family::CustomFourier { m, terms } => {
                let d = m.nrows();
                let mut s = 0.5 * v.dot(&(m * &v));
                for t in terms {
                    let theta = TAU
                        * (dot_iv(&t.index[..d], x.as_slice())
                            + dot_iv(&t.index[d..], v.as_slice()));
                    s += t.cos_coeff * theta.cos() + t.sin_coeff * theta.sin();
                }
                s
            }
        }
    }

    fn base_derivatives(&self, x: &DVector<f64>, y: &DVector<f64>) -> DerivativeBundle {
        let d = self.dim;
        let v = y - x;
        match &self.family {
            Family::IntegrableQuadratic { m } => {
                let mv = m * &v;
                DerivativeBundle {
                    value: 0.5 * v.dot(&mv),
                    d1: -&mv,
                    d2: mv,
                    d11: m.clone(),
                    d12: -m,
                    d22: m.clone(),
                }
            }
            Family::IntegrableConvex { m, terms } => {
                // S = h(y - x): d1 = -h', d2 = h', d11 = d22 = h'', d12 = -h''.
                let mut value = 0.5 * v.dot(&(m * &v));
                let mut grad = m * &v;
                let mut hess = m.clone();
                for t in terms {
                    let kv: DVector<f64> =
                        DVector::from_iterator(d, t.index.iter().map(|&i| i as f64));
                    let theta = TAU * kv.dot(&v);
                    let (sin, cos) = theta.sin_cos();
                    value += t.cos_coeff * cos + t.sin_coeff * sin;
                    let dphase = TAU * (-t.cos_coeff * sin + t.sin_coeff * cos);
                    grad += &kv * dphase;
                    let d2phase = TAU * TAU * (-t.cos_coeff * cos - t.sin_coeff * sin);
                    hess += &kv * kv.transpose() * d2phase;
                }
                DerivativeBundle {
                    value,
                    d1: -&grad,
                    d2: grad,
                    d11: hess.clone(),
                    d12: -&hess,
                    d22: hess,
                }
            }
            Family::Standard { k } => {
                let (sx, cx) = (TAU * x[0]).sin_cos();
                DerivativeBundle {
                    value: 0.5 * v[0] * v[0] + k / (TAU * TAU) * cx,
                    d1: DVector::from_element(1, -v[0] - k / TAU * sx),
                    d2: v.clone(),
                    d11: DMatrix::from_element(1, 1, 1.0 - k * cx),
                    d12: DMatrix::from_element(1, 1, -1.0),
                    d22: DMatrix::from_element(1, 1, 1.0),
                }
            }
            Family::CoupledStandard { k, eps } => {
                let mut value = eps * (TAU * (x[0] - x[1])).cos();
                let mut grad_v = DVector::zeros(2); // d/dx of the potential part
                let mut hess_v = DMatrix::zeros(2, 2);
                for i in 0..2 {
                    let (sx, cx) = (TAU * x[i]).sin_cos();
                    value += 0.5 * v[i] * v[i] + k / (TAU * TAU) * cx;
                    grad_v[i] = -k / TAU * sx;
                    hess_v[(i, i)] = -k * cx;
                }
                let (sc, cc) = (TAU * (x[0] - x[1])).sin_cos();
                grad_v[0] -= TAU * eps * sc;
                grad_v[1] += TAU * eps * sc;
                let hc = -TAU * TAU * eps * cc;
                hess_v[(0, 0)] += hc;
                hess_v[(1, 1)] += hc;
                hess_v[(0, 1)] -= hc;
                hess_v[(1, 0)] -= hc;
                DerivativeBundle {
                    value,
                    d1: -&v + &grad_v,
                    d2: v,
                    d11: DMatrix::identity(2, 2) + hess_v,
                    d12: -DMatrix::identity(2, 2),
                    d22: DMatrix::identity(2, 2),
                }
            }
            Family::CustomFourier { m, terms } => {
                let mv = m * &v;
                let mut value = 0.5 * v.dot(&mv);
                let mut d1 = -&mv;
                let mut d2 = mv;
                let mut d11 = m.clone();
                let mut d12 = -m;
                let mut d22 = m.clone();
                for t in terms {
                    let kx: DVector<f64> =
                        DVector::from_iterator(d, t.index[..d].iter().map(|&i| i as f64));
                    let kv: DVector<f64> =
                        DVector::from_iterator(d, t.index[d..].iter().map(|&i| i as f64));
                    let theta = TAU * (kx.dot(x) + kv.dot(&v));
                    let (sin, cos) = theta.sin_cos();
                    value += t.cos_coeff * cos + t.sin_coeff * sin;
                    // phase gradient wrt x is 2 pi (kx - kv), wrt y is 2 pi kv
                    let gx = &kx - &kv;
                    let dphase = TAU * (-t.cos_coeff * sin + t.sin_coeff * cos);
                    d1 += &gx * dphase;
                    d2 += &kv * dphase;
                    let d2phase = TAU * TAU * (-t.cos_coeff * cos - t.sin_coeff * sin);
                    d11 += &gx * gx.transpose() * d2phase;
                    d12 += &gx * kv.transpose() * d2phase;
                    d22 += &kv * kv.transpose() * d2phase;
                }
                DerivativeBundle {
                    value,
                    d1,
                    d2,
                    d11,
                    d12,
                    d22,
                }
            }
        }
    }

    /// Samples the defining conditions and fits the coercivity constants.
    ///
    /// Fails with `AuditFailed` when the estimated twist constant is not
    /// positive; downstream solvers must refuse such an input.
    pub fn audit(&self, n_samples: usize, seed: u64) -> Result<AuditReport> {
        if n_samples == 0 {
            return Err(CoreError::InvalidInput("audit needs n_samples >= 1".into()));
        }
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut periodicity = 0.0f64;
        let mut twist = f64::INFINITY;
        // rows (1, t, t^2) against S for the coercivity fit
        let mut ts = Vec::with_capacity(n_samples);
        let mut ss = Vec::with_capacity(n_samples);
        for i in 0..n_samples {
            let x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            // spread ||x - y|| over [0, 10]
            let radius = 10.0 * (i as f64 + 0.5) / n_samples as f64;
            let dir = random_unit(&mut rng, d);
            let y = &x + dir * radius;
            let r = DVector::from_fn(d, |_, _| rng.gen_range(-3i64..=3) as f64);
            let s = self.eval(&x, &y);
            let shifted = self.eval(&(&x + &r), &(&y + &r));
            periodicity = periodicity.max((shifted - s).abs());
            let b = self.derivatives(&x, &y);
            let sym = -(&b.d12 + b.d12.transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            twist = twist.min(eig.eigenvalues.min());
            ts.push(radius);
            ss.push(s);
        }
        if twist <= 0.0 {
            return Err(CoreError::AuditFailed(format!(
                "estimated twist constant {twist:.3e} is not positive"
            )));
        }
        // least squares S ~ alpha + beta t + gamma t^2
        let n = ts.len();
        let a = DMatrix::from_fn(n, 3, |i, j| ts[i].powi(j as i32));
        let rhs = DVector::from_vec(ss.clone());
        let coef = (a.transpose() * &a)
            .lu()
            .solve(&(a.transpose() * &rhs))
            .ok_or_else(|| CoreError::AuditFailed("coercivity fit is singular".into()))?;
        let worst = (0..n)
            .map(|i| ss[i] - (coef[0] + coef[1] * ts[i] + coef[2] * ts[i] * ts[i]))
            .fold(f64::INFINITY, f64::min)
            .min(0.0);
        Ok(AuditReport {
            periodicity_residual: periodicity,
            twist_lower_bound: twist,
            coercivity_alpha: coef[0],
            coercivity_beta: coef[1],
            coercivity_gamma: coef[2],
            coercivity_worst_violation: worst,
            n_samples,
        })
    }

    /// Quadratic part of the family, used to seed implicit solves.
    ///
    /// For the standard families the quadratic part is the identity.
    pub(crate) fn quadratic_part(&self) -> DMatrix<f64> {
        match &self.family {
            Family::IntegrableQuadratic { m }
            | Family::IntegrableConvex { m, .. }
            | Family::CustomFourier { m, .. } => m.clone(),
            Family::Standard { .. } => DMatrix::identity(1, 1),
            Family::CoupledStandard { .. } => DMatrix::identity(2, 2),
        }
    }
}

fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(CoreError::InvalidFamily("M must be square and nonempty".into()));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(CoreError::InvalidFamily("M must be symmetric".into()));
    }
    if m.clone().cholesky().is_none() {
        return Err(CoreError::InvalidFamily("M must be positive definite".into()));
    }
    Ok(())
}

fn dot_iv(idx: &[i64], v: &[f64]) -> f64 {
    idx.iter().zip(v).map(|(&k, &x)| k as f64 * x).sum()
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Convenience constructors used throughout the tests and the CLI.
pub mod families {
    use super::*;

    pub fn quadratic(m: DMatrix<f64>) -> GeneratingFunction {
        GeneratingFunction::make_family(Family::IntegrableQuadratic { m }).expect("valid family")
    }

    pub fn quadratic_1d(m: f64) -> GeneratingFunction {
        quadratic(DMatrix::from_element(1, 1, m))
    }

    pub fn standard(k: f64) -> GeneratingFunction {
        GeneratingFunction::make_family(Family::Standard { k }).expect("valid family")
    }

    pub fn coupled_standard(k: f64, eps: f64) -> GeneratingFunction {
        GeneratingFunction::make_family(Family::CoupledStandard { k, eps }).expect("valid family")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use approx::assert_relative_eq;

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(s)
    }

    #[test]
    fn quadratic_values() {
        let s = families::quadratic_1d(1.0);
        assert_relative_eq!(s.eval(&v(&[0.0]), &v(&[0.3])), 0.045, epsilon = 1e-15);
        let s2 = families::quadratic(DMatrix::from_diagonal(&v(&[1.0, 2.0])));
        assert_relative_eq!(
            s2.eval(&v(&[0.0, 0.0]), &v(&[0.0, 1.0])),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn standard_value_at_quarter() {
        let s = families::standard(1.0);
        // (1 / 4 pi^2) cos(pi / 2) = 0
        assert!(s.eval(&v(&[0.25]), &v(&[0.25])).abs() < 1e-15);
    }

    #[test]
    fn quadratic_derivatives() {
        let s = families::quadratic_1d(1.0);
        let b = s.derivatives(&v(&[0.0]), &v(&[0.3]));
        assert_relative_eq!(b.d1[0], -0.3, epsilon = 1e-15);
        assert_relative_eq!(b.d2[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(b.d12[(0, 0)], -1.0, epsilon = 1e-15);

        let s2 = families::quadratic(DMatrix::from_diagonal(&v(&[1.0, 2.0])));
        let b2 = s2.derivatives(&v(&[0.3, -0.2]), &v(&[1.1, 0.4]));
        assert_relative_eq!(b2.d12[(0, 0)], -1.0, epsilon = 1e-15);
        assert_relative_eq!(b2.d12[(1, 1)], -2.0, epsilon = 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fams = [
            families::quadratic_1d(1.0),
            families::standard(1.0),
            families::coupled_standard(0.8, 0.1),
            GeneratingFunction::make_family(Family::CustomFourier {
                m: DMatrix::from_diagonal(&v(&[1.0, 1.5])),
                terms: vec![FourierTerm {
                    index: vec![1, 0, 0, 1],
                    cos_coeff: 0.02,
                    sin_coeff: 0.01,
                }],
            })
            .unwrap(),
            GeneratingFunction::make_family(Family::IntegrableConvex {
                m: DMatrix::from_element(1, 1, 1.0),
                terms: vec![FourierTerm {
                    index: vec![1],
                    cos_coeff: 0.01,
                    sin_coeff: 0.0,
                }],
            })
            .unwrap(),
        ];
        for s in &fams {
            let d = s.dim();
            let x = DVector::from_fn(d, |i, _| 0.17 + 0.31 * i as f64);
            let y = DVector::from_fn(d, |i, _| -0.42 + 0.23 * i as f64);
            oracles::check_bundle_against_fd(s, &x, &y, 1e-5, 1e-6);
        }
    }

    #[test]
    fn schwarz_symmetry() {
        let s = families::coupled_standard(1.0, 0.2);
        let b = s.derivatives(&v(&[0.2, 0.7]), &v(&[0.9, -0.3]));
        assert!((&b.d11 - b.d11.transpose()).amax() < 1e-10);
        assert!((&b.d22 - b.d22.transpose()).amax() < 1e-10);
    }

    #[test]
    fn audit_quadratic() {
        let s = families::quadratic_1d(1.0);
        let rep = s.audit(128, 7).unwrap();
        assert_relative_eq!(rep.twist_lower_bound, 1.0, epsilon = 1e-12);
        assert!(rep.periodicity_residual <= 1e-12);
        assert!(rep.coercivity_gamma > 0.0);

        let s2 = families::quadratic(DMatrix::from_diagonal(&v(&[1.0, 2.0])));
        let rep2 = s2.audit(128, 7).unwrap();
        assert_relative_eq!(rep2.twist_lower_bound, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn audit_standard_twist_independent_of_k() {
        let s = families::standard(1.0);
        let rep = s.audit(64, 3).unwrap();
        assert_relative_eq!(rep.twist_lower_bound, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(GeneratingFunction::make_family(Family::IntegrableQuadratic { m }).is_err());
    }

    #[test]
    fn periodicity_for_all_families() {
        let fams = [
            families::standard(1.3),
            families::coupled_standard(0.5, 0.1),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in &fams {
            let d = s.dim();
            for _ in 0..50 {
                let x = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
                let y = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
                let r = DVector::from_fn(d, |_, _| rng.gen_range(-3i64..=3) as f64);
                let a = s.eval(&x, &y);
                let b = s.eval(&(&x + &r), &(&y + &r));
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn cocycle_shifts_gradients_only() {
        let s = families::standard(1.0);
        let c = v(&[0.3]);
        let sc = s.with_cocycle(&c);
        let (x, y) = (v(&[0.2]), v(&[0.9]));
        let b = s.derivatives(&x, &y);
        let bc = sc.derivatives(&x, &y);
        assert_relative_eq!(bc.value, b.value + 0.3 * (x[0] - y[0]), epsilon = 1e-15);
        assert_relative_eq!(bc.d1[0], b.d1[0] + 0.3, epsilon = 1e-15);
        assert_relative_eq!(bc.d2[0], b.d2[0] - 0.3, epsilon = 1e-15);
        assert_eq!(bc.d12, b.d12);
    }
}
