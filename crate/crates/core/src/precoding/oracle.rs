//! Derivative-free search over the optimal-structure family.
//!
//! The search space is `{λ ≥ 0, Σλ = P} × {p ≥ 0, Σp = P}`. Both factors
//! are parameterised by fractions on the unit simplex. An exhaustive simplex
//! grid seeds the search; coordinate-wise golden-section line searches then
//! refine it. A line search along coordinate `i` sets that fraction to `t`
//! and rescales the others to keep the sum at one.

use super::{PrecodeProblem, StructureSolver};
use crate::{Error, Result};

/// Default number of objective evaluations.
pub const DEFAULT_ORACLE_BUDGET: usize = 6000;

/// Grid resolution (steps per unit) used for one- and two-user problems.
const FINE_GRID: usize = 64;
const GOLDEN_EVALS: usize = 14;
const MAX_SWEEPS: usize = 64;
const MIN_WIDTH: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub duals: Vec<f64>,
    pub powers: Vec<f64>,
    pub sum_se: f64,
    /// Best value found by the grid stage alone.
    pub grid_se: f64,
    pub evaluations: usize,
    /// The budget ran out before the refinement converged.
    pub budget_exhausted: bool,
}

struct Search<'a> {
    solver: &'a StructureSolver,
    total_power: f64,
    budget: usize,
    evaluations: usize,
    exhausted: bool,
    best: (Vec<f64>, Vec<f64>, f64),
}

impl Search<'_> {
    /// Objective at simplex fractions, or `None` once the budget is spent.
    fn eval(&mut self, lam: &[f64], pw: &[f64]) -> Option<f64> {
        if self.evaluations >= self.budget {
            self.exhausted = true;
            return None;
        }
        self.evaluations += 1;
        let p = self.total_power;
        let duals: Vec<f64> = lam.iter().map(|x| x * p).collect();
        let powers: Vec<f64> = pw.iter().map(|x| x * p).collect();
        let se = self
            .solver
            .sum_se(&duals, &powers)
            .expect("fractions are valid by construction");
        let se = if se.is_finite() { se } else { f64::NEG_INFINITY };
        if se > self.best.2 {
            self.best = (lam.to_vec(), pw.to_vec(), se);
        }
        Some(se)
    }
}

/// All compositions of `m` into `k` non-negative parts, lexicographic.
fn compositions(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=left).rev() {
            cur.push(v);
            rec(left - v, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn binomial(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Steps per unit for the seed grid: fixed for `K ≤ 2`, otherwise the finest
/// grid whose pair count fits in half the budget (0 = no grid).
fn grid_resolution(k: usize, budget: usize) -> usize {
    if k <= 2 {
        return FINE_GRID;
    }
    (1..=FINE_GRID)
        .rev()
        .find(|&m| binomial(m + k - 1, k - 1).powi(2) <= budget as f64 / 2.0)
        .unwrap_or(0)
}

fn with_coordinate(x: &[f64], i: usize, t: f64) -> Vec<f64> {
    let rest: f64 = x.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
    let others = (x.len() - 1) as f64;
    x.iter()
        .enumerate()
        .map(|(j, &v)| {
            if j == i {
                t
            } else if rest > 0.0 {
                v * (1.0 - t) / rest
            } else {
                (1.0 - t) / others
            }
        })
        .collect()
}

/// Golden-section maximisation of `f` on `[a, b]` plus both endpoints.
/// Returns `None` if the budget ran out.
fn golden_max(mut f: impl FnMut(f64) -> Option<f64>, a: f64, b: f64) -> Option<()> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    f(a)?;
    f(b)?;
    let (mut a, mut b) = (a, b);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..GOLDEN_EVALS {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
        }
    }
    Some(())
}

/// Best `(λ, p)` of the optimal-structure precoder found within `budget`
/// objective evaluations. Deterministic for a fixed budget.
pub fn oracle_lambda(prob: &PrecodeProblem, budget: usize) -> Result<OracleResult> {
    if budget == 0 {
        return Err(Error::InvalidConfig("oracle budget must be at least 1".into()));
    }
    let k = prob.n_users();
    let solver = StructureSolver::new(prob);
    let equal = vec![1.0 / k as f64; k];
    let mut s = Search {
        solver: &solver,
        total_power: prob.total_power,
        budget,
        evaluations: 0,
        exhausted: false,
        best: (equal.clone(), equal.clone(), f64::NEG_INFINITY),
    };

    'grid: {
        if s.eval(&equal, &equal).is_none() || k == 1 {
            break 'grid;
        }
        let m = grid_resolution(k, budget);
        if m == 0 {
            break 'grid;
        }
        let pts: Vec<Vec<f64>> = compositions(m, k)
            .into_iter()
            .map(|c| c.into_iter().map(|v| v as f64 / m as f64).collect())
            .collect();
        for lam in &pts {
            for pw in &pts {
                if s.eval(lam, pw).is_none() {
                    break 'grid;
                }
            }
        }
    }
    let grid_se = s.best.2;

    if k > 1 && !s.exhausted {
        let coords = if k == 2 { 1 } else { k };
        let mut width = match grid_resolution(k, budget) {
            0 => 0.5,
            m => 1.0 / m as f64,
        };
        'refine: for _ in 0..MAX_SWEEPS {
            let before = s.best.2;
            for block in 0..2 {
                for i in 0..coords {
                    let (lam, pw, _) = s.best.clone();
                    let base = if block == 0 { &lam } else { &pw };
                    let t0 = base[i];
                    let (a, b) = ((t0 - width).max(0.0), (t0 + width).min(1.0));
                    let line = |t: f64| {
                        if block == 0 {
                            s.eval(&with_coordinate(&lam, i, t), &pw)
                        } else {
                            s.eval(&lam, &with_coordinate(&pw, i, t))
                        }
                    };
                    if golden_max(line, a, b).is_none() {
                        break 'refine;
                    }
                }
            }
            if s.best.2 - before <= 1e-13 * s.best.2.abs().max(1.0) {
                width *= 0.25;
                if width < MIN_WIDTH {
                    break;
                }
            }
        }
    }

    let (lam, pw, se) = s.best;
    let p = prob.total_power;
    Ok(OracleResult {
        duals: lam.iter().map(|x| x * p).collect(),
        powers: pw.iter().map(|x| x * p).collect(),
        sum_se: se,
        grid_se,
        evaluations: s.evaluations,
        budget_exhausted: s.exhausted,
    })
}
