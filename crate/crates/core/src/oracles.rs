//! Independent reference computations used to cross-check the fast paths.
//!
//! Everything in this module is deliberately slow and simple: finite
//! differences, derivative-free pattern search, and exhaustive dynamic
//! programming on a discretized circle. None of it shares code with the
//! Newton/banded machinery it is used to verify.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{twist_step, PhasePoint};
use crate::error::Result;
use crate::genfun::GeneratingFunction;

/// Asserts that the analytic derivative bundle at `(x, y)` matches central
/// finite differences of the value (first order) and of the gradients
/// (second order).
pub fn check_bundle_against_fd(
    s: &GeneratingFunction,
    x: &DVector<f64>,
    y: &DVector<f64>,
    h: f64,
    rel_tol: f64,
) {
    let d = x.len();
    let b = s.derivatives(x, y);
    let scale = 1.0 + b.d1.amax().max(b.d2.amax());
    for i in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd1 = (s.eval(&xp, y) - s.eval(&xm, y)) / (2.0 * h);
        assert!(
            (fd1 - b.d1[i]).abs() <= rel_tol * scale,
            "d1[{i}] mismatch: fd {fd1} vs {}",
            b.d1[i]
        );
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[i] += h;
        ym[i] -= h;
        let fd2 = (s.eval(x, &yp) - s.eval(x, &ym)) / (2.0 * h);
        assert!(
            (fd2 - b.d2[i]).abs() <= rel_tol * scale,
            "d2[{i}] mismatch: fd {fd2} vs {}",
            b.d2[i]
        );
    }
    let mscale = 1.0 + b.d11.amax().max(b.d12.amax()).max(b.d22.amax());
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let c11 = (s.derivatives(&xp, y).d1 - s.derivatives(&xm, y).d1) / (2.0 * h);
        let c21 = (s.derivatives(&xp, y).d2 - s.derivatives(&xm, y).d2) / (2.0 * h);
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[j] += h;
        ym[j] -= h;
        let c12 = (s.derivatives(x, &yp).d1 - s.derivatives(x, &ym).d1) / (2.0 * h);
        let c22 = (s.derivatives(x, &yp).d2 - s.derivatives(x, &ym).d2) / (2.0 * h);
        for i in 0..d {
            assert!((c11[i] - b.d11[(i, j)]).abs() <= rel_tol * mscale, "d11 mismatch");
            assert!((c12[i] - b.d12[(i, j)]).abs() <= rel_tol * mscale, "d12 mismatch");
            // c21 differentiates d2 wrt x, i.e. the (j, i) entry of d12
            assert!((c21[i] - b.d12[(j, i)]).abs() <= rel_tol * mscale, "d21 mismatch");
            assert!((c22[i] - b.d22[(i, j)]).abs() <= rel_tol * mscale, "d22 mismatch");
        }
    }
}

/// Central-difference Jacobian of one twist-map step.
pub fn fd_tangent(s: &GeneratingFunction, pt: &PhasePoint, h: f64) -> Result<DMatrix<f64>> {
    let d = pt.dim();
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    for col in 0..2 * d {
        let mut plus = pt.clone();
        let mut minus = pt.clone();
        if col < d {
            plus.x[col] += h;
            minus.x[col] -= h;
        } else {
            plus.p[col - d] += h;
            minus.p[col - d] -= h;
        }
        let fp = twist_step(s, &plus)?;
        let fm = twist_step(s, &minus)?;
        for row in 0..d {
            j[(row, col)] = (fp.x[row] - fm.x[row]) / (2.0 * h);
            j[(d + row, col)] = (fp.p[row] - fm.p[row]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Compass (pattern) search: repeatedly polls coordinate directions with a
/// shrinking step. Derivative-free and independent of any Newton code.
pub fn pattern_search<F>(f: F, start: &[f64], init_step: f64, final_step: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut z = start.to_vec();
    let mut v = f(&z);
    let mut step = init_step;
    let mut budget = 2_000_000usize;
    while step > final_step && budget > 0 {
        let mut improved = false;
        for i in 0..z.len() {
            for dir in [1.0, -1.0] {
                let old = z[i];
                z[i] = old + dir * step;
                let vc = f(&z);
                budget = budget.saturating_sub(1);
                if vc < v {
                    v = vc;
                    improved = true;
                } else {
                    z[i] = old;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (z, v)
}

/// Derivative-free multistart oracle for the fixed-endpoint minimum
/// `A_N(x, y)`: random restarts around the linear seed, each polished by
/// pattern search.
pub fn minimize_endpoints_oracle(
    s: &GeneratingFunction,
    x: &DVector<f64>,
    y: &DVector<f64>,
    n: usize,
    n_starts: usize,
) -> f64 {
    if n == 1 {
        return s.eval(x, y);
    }
    let d = x.len();
    let m = (n - 1) * d;
    let seed: Vec<f64> = (1..n)
        .flat_map(|k| {
            let p = x + (y - x) * (k as f64 / n as f64);
            p.as_slice().to_vec()
        })
        .collect();
    let objective = |z: &[f64]| -> f64 {
        let mut v = 0.0;
        let mut prev = x.clone();
        for k in 0..n - 1 {
            let cur = DVector::from_row_slice(&z[k * d..(k + 1) * d]);
            v += s.eval(&prev, &cur);
            prev = cur;
        }
        v + s.eval(&prev, y)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut best = f64::INFINITY;
    for start_idx in 0..=n_starts {
        let start: Vec<f64> = if start_idx == 0 {
            seed.clone()
        } else {
            (0..m)
                .map(|i| seed[i] + rng.gen_range(-0.75..0.75))
                .collect()
        };
        let (_, v) = pattern_search(&objective, &start, 0.5, 1e-12);
        best = best.min(v);
    }
    best
}

/// Exhaustive shortest-path machinery on a discretized circle (d = 1).
///
/// Nodes are `g_i = i / n_nodes`; an arc `(i, j)` may wrap any integer
/// shift `s` with `|s| <= s_max`, with weight `min_s S(g_i, g_j + s)`.
/// Paths found by dynamic programming are then polished by pattern search
/// with the endpoints held fixed, so combinatorics come from the DP and
/// final accuracy from the polish.
pub struct CircleDp<'a> {
    s: &'a GeneratingFunction,
    n_nodes: usize,
    s_max: i64,
    weight: Vec<f64>,
    shift: Vec<i64>,
}

impl<'a> CircleDp<'a> {
    pub fn new(s: &'a GeneratingFunction, n_nodes: usize, s_max: i64) -> Self {
        assert_eq!(s.dim(), 1, "CircleDp is one-dimensional");
        let mut weight = vec![f64::INFINITY; n_nodes * n_nodes];
        let mut shift = vec![0i64; n_nodes * n_nodes];
        for i in 0..n_nodes {
            let gi = DVector::from_element(1, i as f64 / n_nodes as f64);
            for j in 0..n_nodes {
                let mut best = f64::INFINITY;
                let mut best_s = 0;
                for sh in -s_max..=s_max {
                    let gj = DVector::from_element(1, j as f64 / n_nodes as f64 + sh as f64);
                    let w = s.eval(&gi, &gj);
                    if w < best {
                        best = w;
                        best_s = sh;
                    }
                }
                weight[i * n_nodes + j] = best;
                shift[i * n_nodes + j] = best_s;
            }
        }
        CircleDp {
            s,
            n_nodes,
            s_max,
            weight,
            shift,
        }
    }

    fn node(&self, i: usize) -> f64 {
        i as f64 / self.n_nodes as f64
    }

    fn arc_from_real(&self, from: f64, j: usize) -> (f64, i64) {
        let mut best = f64::INFINITY;
        let mut best_s = 0;
        for sh in -self.s_max..=self.s_max {
            let w = self.s.eval(
                &DVector::from_element(1, from),
                &DVector::from_element(1, self.node(j) + sh as f64),
            );
            if w < best {
                best = w;
                best_s = sh;
            }
        }
        (best, best_s)
    }

    fn arc_to_real(&self, i: usize, to: f64) -> (f64, i64) {
        let mut best = f64::INFINITY;
        let mut best_s = 0;
        for sh in -self.s_max..=self.s_max {
            let w = self.s.eval(
                &DVector::from_element(1, self.node(i)),
                &DVector::from_element(1, to + sh as f64),
            );
            if w < best {
                best = w;
                best_s = sh;
            }
        }
        (best, best_s)
    }

    /// Best `n`-arc path from the real point `x` to `y` modulo `Z`,
    /// reconstructed as absolute positions in the universal cover and then
    /// polished (interior points only). Returns the polished action.
    pub fn best_path(&self, x: f64, y: f64, n: usize) -> f64 {
        assert!(n >= 1);
        if n == 1 {
            let mut best = f64::INFINITY;
            for sh in -self.s_max..=self.s_max {
                best = best.min(self.s.eval(
                    &DVector::from_element(1, x),
                    &DVector::from_element(1, y + sh as f64),
                ));
            }
            return best;
        }
        let nn = self.n_nodes;
        // dist[k][j]: best (k+1)-arc path x -> node j; parents for rebuild
        let mut dist = vec![f64::INFINITY; nn];
        let mut par: Vec<Vec<(usize, i64)>> = Vec::new();
        let mut first_shift = vec![0i64; nn];
        for j in 0..nn {
            let (w, sh) = self.arc_from_real(x, j);
            dist[j] = w;
            first_shift[j] = sh;
        }
        for _arc in 2..n {
            let mut next = vec![f64::INFINITY; nn];
            let mut pk = vec![(0usize, 0i64); nn];
            for j in 0..nn {
                for i in 0..nn {
                    let cand = dist[i] + self.weight[i * nn + j];
                    if cand < next[j] {
                        next[j] = cand;
                        pk[j] = (i, self.shift[i * nn + j]);
                    }
                }
            }
            par.push(pk);
            dist = next;
        }
        // closing arc to y; each node's accumulated integer offset matters
        let offset_of = |i: usize| -> f64 {
            let mut cur = i;
            let mut off = 0i64;
            for pk in par.iter().rev() {
                off += pk[cur].1;
                cur = pk[cur].0;
            }
            (off + first_shift[cur]) as f64
        };
        let mut best_total = f64::INFINITY;
        let mut best_last = 0usize;
        let mut best_sh_end = 0i64;
        for i in 0..nn {
            let (w, sh) = self.arc_to_real(i, y - offset_of(i));
            if dist[i] + w < best_total {
                best_total = dist[i] + w;
                best_last = i;
                best_sh_end = sh;
            }
        }
        // rebuild node indices of the interior points
        let mut rev = vec![best_last];
        for pk in par.iter().rev() {
            let (prev, _) = pk[rev[rev.len() - 1]];
            rev.push(prev);
        }
        rev.reverse(); // node index of interior point k (k = 1..n-1)

        // absolute positions: accumulate arc shifts
        let mut interior = Vec::with_capacity(n - 1);
        let mut offset = first_shift[rev[0]] as f64;
        interior.push(self.node(rev[0]) + offset);
        for (k, pk) in par.iter().enumerate() {
            let j = rev[k + 1];
            let (_, sh) = pk[j];
            offset += sh as f64;
            interior.push(self.node(j) + offset);
        }
        let y_end = y + best_sh_end as f64;

        let objective = |z: &[f64]| -> f64 {
            let mut v = self.s.eval(
                &DVector::from_element(1, x),
                &DVector::from_element(1, z[0]),
            );
            for w in z.windows(2) {
                v += self.s.eval(
                    &DVector::from_element(1, w[0]),
                    &DVector::from_element(1, w[1]),
                );
            }
            v + self.s.eval(
                &DVector::from_element(1, z[z.len() - 1]),
                &DVector::from_element(1, y_end),
            )
        };
        let (_, v) = pattern_search(objective, &interior, 1.0 / self.n_nodes as f64, 1e-13);
        v
    }

    /// Mañé potential by exhaustive DP:
    /// `min_{n <= n_max} best_path(x, y, n) - n * stilde`.
    pub fn mane(&self, x: f64, y: f64, n_max: usize, stilde: f64) -> f64 {
        (1..=n_max)
            .map(|n| self.best_path(x, y, n) - n as f64 * stilde)
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimizing holonomic value by exhaustive cycle search: best mean
    /// action over polished cycles of length at most `n_max`.
    pub fn stilde(&self, n_max: usize) -> f64 {
        let nn = self.n_nodes;
        let mut best = f64::INFINITY;
        for n in 1..=n_max {
            if n == 1 {
                for i in 0..nn {
                    let cycle = self.polish_cycle(&[self.node(i)], self.shift[i * nn + i]);
                    best = best.min(cycle);
                }
                continue;
            }
            // DP from every start node back to itself
            for start in 0..nn {
                let mut dist = vec![f64::INFINITY; nn];
                let mut shifts: Vec<Vec<i64>> = vec![Vec::new(); nn];
                let mut nodes: Vec<Vec<usize>> = vec![Vec::new(); nn];
                for j in 0..nn {
                    dist[j] = self.weight[start * nn + j];
                    shifts[j] = vec![self.shift[start * nn + j]];
                    nodes[j] = vec![j];
                }
                for _ in 1..n {
                    let mut nd = vec![f64::INFINITY; nn];
                    let mut nsh: Vec<Vec<i64>> = vec![Vec::new(); nn];
                    let mut nno: Vec<Vec<usize>> = vec![Vec::new(); nn];
                    for j in 0..nn {
                        for i in 0..nn {
                            let cand = dist[i] + self.weight[i * nn + j];
                            if cand < nd[j] {
                                nd[j] = cand;
                                let mut sh = shifts[i].clone();
                                sh.push(self.shift[i * nn + j]);
                                nsh[j] = sh;
                                let mut no = nodes[i].clone();
                                no.push(j);
                                nno[j] = no;
                            }
                        }
                    }
                    dist = nd;
                    shifts = nsh;
                    nodes = nno;
                }
                if dist[start].is_finite() {
                    // positions of the cycle z_0 = start, z_k from arcs
                    let mut pos = vec![self.node(start)];
                    let mut off = 0.0;
                    for k in 0..n - 1 {
                        off += shifts[start][k] as f64;
                        pos.push(self.node(nodes[start][k]) + off);
                    }
                    let total_shift = shifts[start].iter().sum::<i64>();
                    let v = self.polish_cycle(&pos, total_shift);
                    best = best.min(v / n as f64);
                }
            }
        }
        best
    }

    /// Polishes a cycle `z_0, ..., z_{n-1}, z_0 + total_shift` and returns
    /// its total action (the caller divides by n).
    fn polish_cycle(&self, positions: &[f64], total_shift: i64) -> f64 {
        let n = positions.len();
        let objective = |z: &[f64]| -> f64 {
            let mut v = 0.0;
            for k in 0..n {
                let a = z[k];
                let b = if k + 1 < n {
                    z[k + 1]
                } else {
                    z[0] + total_shift as f64
                };
                v += self.s.eval(
                    &DVector::from_element(1, a),
                    &DVector::from_element(1, b),
                );
            }
            v
        };
        let (_, v) = pattern_search(objective, positions, 1.0 / self.n_nodes as f64, 1e-13);
        v
    }
}
