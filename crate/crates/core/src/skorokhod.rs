//! Deterministic Skorokhod maps with two time-dependent barriers.
//!
//! Both directions use the explicit running-extremum formulas:
//!
//! forward:  `k_t = -max{ (x0-u0)^+ ∧ inf_{v<=t}(x_v-l_v),
//!                        sup_{s<=t}[ (x_s-u_s) ∧ inf_{s<=v<=t}(x_v-l_v) ] }`
//!
//! backward: `k_T-k_t = -max{ (a-u_T)^+ ∧ inf_{t<=v<=T}(w_v-l_v),
//!                            sup_{t<=s<=T}[ (w_s-u_s) ∧ inf_{t<=v<=s}(w_v-l_v) ] }`
//! with `w_v = a + x_T - x_v` (left limits and the terminal clamp enter for
//! cadlag data).
//!
//! Each map is evaluated twice: a direct O(N^2) transcription of the formula
//! and an O(N) recursion built on `min(max(S, g), h)` updates; the two must
//! agree to rounding. An independent iterated one-sided-reflection oracle and
//! a minimality verifier provide cross checks.

use crate::error::{Error, Result};
use crate::grid::{max_partial_stieltjes, max_partial_stieltjes_left, Band, BVPath, GridCurve};

/// Which decomposition a solution satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Reflected path together with its regulator.
#[derive(Debug, Clone)]
pub struct SkorokhodSolution {
    /// Reflected path `x`, contained in the band.
    pub x: GridCurve,
    /// Regulator `k` with `k_0 = 0`.
    pub k: BVPath,
    pub direction: Direction,
    /// Terminal anchor for the backward problem.
    pub anchor: Option<f64>,
    /// Max absolute disagreement between the O(N^2) and O(N) evaluations.
    pub eval_agreement: f64,
    /// Sweeps used (oracle construction only).
    pub iterations: usize,
}

fn check_band_inputs(xbar: &GridCurve, band: &Band) -> Result<()> {
    if !xbar.grid().same_grid(band.grid()) {
        return Err(Error::InvalidInput("input path and barriers live on different grids".into()));
    }
    Ok(())
}

/// Forward two-barrier map. Requires `l_0 <= xbar_0 <= u_0`.
pub fn forward_skorokhod(xbar: &GridCurve, band: &Band) -> Result<SkorokhodSolution> {
    check_band_inputs(xbar, band)?;
    let l = band.lower().values();
    let u = band.upper().values();
    let xv = xbar.values();
    if xv[0] < l[0] || xv[0] > u[0] {
        return Err(Error::InvalidInput(format!(
            "initial value {} outside the barrier interval [{}, {}]",
            xv[0], l[0], u[0]
        )));
    }
    let n = xv.len();

    // O(N) recursion. h_v = x_v - l_v, g_s = x_s - u_s.
    // A_t = (x0-u0)^+ ∧ inf h,  S_t = sup_s min(g_s, inf_{[s,t]} h).
    let mut k_fast = vec![0.0; n];
    let mut a_run = (xv[0] - u[0]).max(0.0).min(xv[0] - l[0]);
    let mut s_run = (xv[0] - u[0]).min(xv[0] - l[0]);
    k_fast[0] = -a_run.max(s_run);
    for i in 1..n {
        let h = xv[i] - l[i];
        let g = xv[i] - u[i];
        a_run = a_run.min(h);
        s_run = s_run.max(g).min(h);
        k_fast[i] = -a_run.max(s_run);
    }

    // O(N^2) direct transcription, kept as the reference path.
    let mut k_ref = vec![0.0; n];
    for t in 0..n {
        let mut inf_h = f64::INFINITY;
        for v in 0..=t {
            inf_h = inf_h.min(xv[v] - l[v]);
        }
        let first = (xv[0] - u[0]).max(0.0).min(inf_h);
        let mut sup_term = f64::NEG_INFINITY;
        for s in 0..=t {
            let mut inf_sh = f64::INFINITY;
            for v in s..=t {
                inf_sh = inf_sh.min(xv[v] - l[v]);
            }
            sup_term = sup_term.max((xv[s] - u[s]).min(inf_sh));
        }
        k_ref[t] = -first.max(sup_term);
    }

    let agreement = k_fast
        .iter()
        .zip(&k_ref)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let x_values: Vec<f64> = xv.iter().zip(&k_fast).map(|(x, k)| x + k).collect();
    let x = GridCurve::new(xbar.grid().clone(), x_values, xbar.regularity())?;
    let k = BVPath::from_values(xbar.grid().clone(), &k_fast)?;
    Ok(SkorokhodSolution {
        x,
        k,
        direction: Direction::Forward,
        anchor: None,
        eval_agreement: agreement,
        iterations: 0,
    })
}

/// Backward two-barrier map anchored at `a`. Requires `l_T <= a <= u_T`.
///
/// Cadlag-flagged curves are read as piecewise constant between nodes; the
/// clamp `a~ = max(min(a + dx_T, u_{T-}), l_{T-})` and the trailing term
/// `a~ - (a + dx_T)` then enter the formula. For continuous curves this
/// reduces to the plain expression with `a~ = a`.
pub fn backward_skorokhod(xbar: &GridCurve, a: f64, band: &Band) -> Result<SkorokhodSolution> {
    check_band_inputs(xbar, band)?;
    let grid = xbar.grid().clone();
    let n = grid.len();
    let last = n - 1;
    let l = band.lower();
    let u = band.upper();
    if a < l.value(last) || a > u.value(last) {
        return Err(Error::InvalidInput(format!(
            "anchor {} outside the terminal barrier interval [{}, {}]",
            a,
            l.value(last),
            u.value(last)
        )));
    }
    if !a.is_finite() {
        return Err(Error::InvalidInput("anchor must be finite".into()));
    }

    let xv = xbar.values();
    let x_tl = xbar.left_limit(last);
    let dx_t = xv[last] - x_tl;
    let a_tilde = (a + dx_t).min(u.left_limit(last)).max(l.left_limit(last));
    let trailing = a_tilde - (a + dx_t);

    // w_i = a~ + x_{T-} - x_{t_i -}; h_i = w_i - l_{t_i -}; g_i = w_i - u_{t_i -}.
    let w = |i: usize| a_tilde + x_tl - xbar.left_limit(i);
    let h = |i: usize| w(i) - l.left_limit(i);
    let g = |i: usize| w(i) - u.left_limit(i);
    let first_cap = (a_tilde - u.value(last)).max(0.0);

    // O(N) recursion, marching backward from T.
    let mut trace_fast = vec![0.0; n]; // k_T - k_{t_i}
    let mut inf_h = h(last);
    let mut s_run = g(last).min(h(last));
    trace_fast[last] = 0.0;
    for i in (0..last).rev() {
        inf_h = inf_h.min(h(i));
        s_run = s_run.max(g(i)).min(h(i));
        trace_fast[i] = -first_cap.min(inf_h).max(s_run) + trailing;
    }

    // O(N^2) reference.
    let mut trace_ref = vec![0.0; n];
    for t in 0..last {
        let mut inf_th = f64::INFINITY;
        for v in t..=last {
            inf_th = inf_th.min(h(v));
        }
        let first = first_cap.min(inf_th);
        let mut sup_term = f64::NEG_INFINITY;
        for s in t..=last {
            let mut inf_ts = f64::INFINITY;
            for v in t..=s {
                inf_ts = inf_ts.min(h(v));
            }
            sup_term = sup_term.max(g(s).min(inf_ts));
        }
        trace_ref[t] = -first.max(sup_term) + trailing;
    }

    let agreement = trace_fast
        .iter()
        .zip(&trace_ref)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);

    // x_t = a + x_T - x_t + (k_T - k_t); k recovered from k_0 = 0.
    let x_values: Vec<f64> = (0..n)
        .map(|i| a + xv[last] - xv[i] + trace_fast[i])
        .collect();
    let k_values: Vec<f64> = (0..n).map(|i| trace_fast[0] - trace_fast[i]).collect();
    let x = GridCurve::new(grid.clone(), x_values, xbar.regularity())?;
    let k = BVPath::from_values(grid, &k_values)?;
    Ok(SkorokhodSolution {
        x,
        k,
        direction: Direction::Backward,
        anchor: Some(a),
        eval_agreement: agreement,
        iterations: 0,
    })
}

/// Trace `k_T - k_{t_i}` of a backward solution at every node.
pub fn backward_trace(sol: &SkorokhodSolution) -> Vec<f64> {
    let values = sol.k.values();
    let k_t = *values.last().unwrap();
    values.iter().map(|k| k_t - k).collect()
}

/// Verifier output for a candidate solution. Produced, never thrown.
#[derive(Debug, Clone)]
pub struct MinimalityReport {
    /// `max_{s<=t} ∫_s^t (x-l) dk`; minimality requires `<= tol`.
    pub lower_sum: f64,
    /// `max_{s<=t} ∫_s^t (x-u) dk`.
    pub upper_sum: f64,
    /// Worst violation of `dk_i >= 0` while strictly below the upper barrier.
    pub sign_up_violation: f64,
    /// Worst violation of `dk_i <= 0` while strictly above the lower barrier.
    pub sign_down_violation: f64,
    /// Max decomposition defect `|x_t - (xbar_t + k_t)|` (or backward analogue).
    pub decomposition_residual: f64,
    /// Worst barrier excursion `max(l_t - x_t, x_t - u_t)` over nodes.
    pub containment_violation: f64,
    pub tol: f64,
}

impl MinimalityReport {
    pub fn passes(&self) -> bool {
        self.lower_sum <= self.tol
            && self.upper_sum <= self.tol
            && self.sign_up_violation <= self.tol
            && self.sign_down_violation <= self.tol
            && self.decomposition_residual <= self.tol
            && self.containment_violation <= self.tol
    }
}

/// Checks the discrete minimality conditions, the sign pattern of the
/// regulator increments and the decomposition identity.
///
/// Backward solutions are checked with the left-limit convention on the
/// integrands, matching their definition.
pub fn check_minimality(
    sol: &SkorokhodSolution,
    xbar: &GridCurve,
    band: &Band,
    tol: f64,
) -> MinimalityReport {
    let n = xbar.grid().len();
    let last = n - 1;
    let xv = sol.x.values();
    let kv = sol.k.values();
    let l = band.lower();
    let u = band.upper();
    let backward = sol.direction == Direction::Backward;

    // A forward regulator acts at the right node of its increment interval, a
    // backward one at the left node (the grid reading of the left limits in
    // its minimality condition).
    let f_lower: Vec<f64> = (0..n).map(|i| sol.x.value(i) - l.value(i)).collect();
    let f_upper: Vec<f64> = (0..n).map(|i| sol.x.value(i) - u.value(i)).collect();
    let (lower_sum, upper_sum) = if backward {
        (
            max_partial_stieltjes_left(&f_lower, sol.k.increments()),
            max_partial_stieltjes_left(&f_upper, sol.k.increments()),
        )
    } else {
        (
            max_partial_stieltjes(&f_lower, sol.k.increments()),
            max_partial_stieltjes(&f_upper, sol.k.increments()),
        )
    };

    let mut sign_up = 0.0f64;
    let mut sign_down = 0.0f64;
    for i in 1..n {
        let dk = sol.k.increment_at(i);
        let at = if backward { i - 1 } else { i };
        let x_i = sol.x.value(at);
        if x_i < u.value(at) - tol {
            sign_up = sign_up.max(-dk);
        }
        if x_i > l.value(at) + tol {
            sign_down = sign_down.max(dk);
        }
    }

    let mut decomposition = 0.0f64;
    for i in 0..n {
        let expect = match sol.direction {
            Direction::Forward => xbar.value(i) + kv[i],
            Direction::Backward => {
                sol.anchor.unwrap_or(0.0) + xbar.value(last) - xbar.value(i) + (kv[last] - kv[i])
            }
        };
        decomposition = decomposition.max((xv[i] - expect).abs());
    }

    let containment = (0..n)
        .map(|i| (l.value(i) - xv[i]).max(xv[i] - u.value(i)))
        .fold(0.0f64, f64::max);

    MinimalityReport {
        lower_sum,
        upper_sum,
        sign_up_violation: sign_up,
        sign_down_violation: sign_down,
        decomposition_residual: decomposition,
        containment_violation: containment,
        tol,
    }
}

/// Independent oracle for the forward problem: alternate classical one-sided
/// reflections (running-max regulators) at the lower and upper barrier until
/// the path stops moving.
pub fn oracle_skorokhod(
    xbar: &GridCurve,
    band: &Band,
    max_iters: usize,
    tol: f64,
) -> Result<SkorokhodSolution> {
    check_band_inputs(xbar, band)?;
    let l = band.lower().values();
    let u = band.upper().values();
    let xv = xbar.values();
    if xv[0] < l[0] || xv[0] > u[0] {
        return Err(Error::InvalidInput(format!(
            "initial value {} outside the barrier interval [{}, {}]",
            xv[0], l[0], u[0]
        )));
    }
    let n = xv.len();
    let mut p = xv.to_vec();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_iters {
        let before = p.clone();
        // Push up at the lower barrier with the classical running max.
        let mut reg = 0.0f64;
        for i in 0..n {
            reg = reg.max(l[i] - p[i]);
            p[i] += reg;
        }
        // Push down at the upper barrier.
        let mut reg = 0.0f64;
        for i in 0..n {
            reg = reg.max(p[i] - u[i]);
            p[i] -= reg;
        }
        residual = p
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        iterations = sweep;
        if residual < tol {
            let k_values: Vec<f64> = p.iter().zip(xv).map(|(px, x)| px - x).collect();
            let x = GridCurve::new(xbar.grid().clone(), p, xbar.regularity())?;
            let mut shifted = k_values;
            let k0 = shifted[0];
            for v in shifted.iter_mut() {
                *v -= k0;
            }
            let k = BVPath::from_values(xbar.grid().clone(), &shifted)?;
            return Ok(SkorokhodSolution {
                x,
                k,
                direction: Direction::Forward,
                anchor: None,
                eval_agreement: 0.0,
                iterations,
            });
        }
    }
    Err(Error::NonConvergence {
        iters: iterations,
        residual,
        history: vec![],
    })
}
