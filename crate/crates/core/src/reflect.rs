//! Mean reflection under sublinear expectation.
//!
//! For a running loss `hbar(t, .)` (strictly increasing, bi-Lipschitz with
//! constants `c_lower <= c_upper`) define
//!
//! `Hbar(t, x, X) = E^[ hbar(t, x + X - E^[X]) ]`,
//!
//! and the effective barriers `L_t(X) = Hbar^{-1}(t, ., X)(l_t)`,
//! `U_t(X) = Hbar^{-1}(t, ., X)(u_t)`. Reflecting the expectation trace of a
//! process between `l` and `u` then reduces to a deterministic backward
//! Skorokhod problem between `L` and `U`:
//!
//! `R_T - R_t = -max{ (E^[Yb_T]-U_T)^+ ∧ inf_{t<=v<=T}(E^[Yb_v]-L_v),
//!                    sup_{t<=s<=T}[ (E^[Yb_s]-U_s) ∧ inf_{t<=v<=s}(E^[Yb_v]-L_v) ] }`.
//!
//! Inversions use plain bisection: the bi-Lipschitz lower slope certifies a
//! bracket around any probe, and each probe costs one G-heat solve, so probes
//! are budgeted and warm-started from the neighbouring node's root.

use crate::error::{Error, Result};
use crate::gexp::{GEngine, StateField};
use crate::grid::{max_partial_stieltjes_left, Band, BVPath, GridCurve, Regularity};
use crate::skorokhod::{backward_skorokhod, backward_trace};
use std::sync::Arc;

/// Running loss with its declared slope and growth constants. The constants
/// are bounds, not necessarily tight: two losses may share them, which is
/// what the stability estimate requires.
#[derive(Clone)]
pub struct LossFunction {
    eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    c_lower: f64,
    c_upper: f64,
    growth: f64,
    name: String,
}

impl std::fmt::Debug for LossFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossFunction")
            .field("name", &self.name)
            .field("c_lower", &self.c_lower)
            .field("c_upper", &self.c_upper)
            .field("growth", &self.growth)
            .finish()
    }
}

impl LossFunction {
    pub fn new(
        name: impl Into<String>,
        eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        c_lower: f64,
        c_upper: f64,
        growth: f64,
    ) -> Result<Self> {
        if !(c_lower > 0.0 && c_upper >= c_lower && growth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "loss constants must satisfy 0 < c_lower <= c_upper and growth > 0, got ({c_lower}, {c_upper}, {growth})"
            )));
        }
        Ok(LossFunction {
            eval,
            c_lower,
            c_upper,
            growth,
            name: name.into(),
        })
    }

    pub fn identity() -> Self {
        LossFunction::new("identity", Arc::new(|_, y| y), 1.0, 1.0, 1.0).unwrap()
    }

    /// Identity map carrying caller-chosen slope bounds (for cross-loss
    /// comparisons that must share constants).
    pub fn identity_with_constants(c_lower: f64, c_upper: f64, growth: f64) -> Result<Self> {
        LossFunction::new("identity", Arc::new(|_, y| y), c_lower, c_upper, growth)
    }

    /// `hbar(t, y) = a y + b` with `a > 0`.
    pub fn affine(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidInput("affine loss needs a positive slope".into()));
        }
        LossFunction::new(
            format!("affine({a},{b})"),
            Arc::new(move |_, y| a * y + b),
            a,
            a,
            a + b.abs(),
        )
    }

    /// `hbar(t, y) = y + amp * sin(y)` with `0 < amp < 1`; slopes `1 -+ amp`.
    pub fn sin_perturb(amp: f64) -> Result<Self> {
        if !(amp > 0.0 && amp < 1.0) {
            return Err(Error::InvalidInput("sin perturbation amplitude must be in (0,1)".into()));
        }
        LossFunction::new(
            format!("sin_perturb({amp})"),
            Arc::new(move |_, y| y + amp * y.sin()),
            1.0 - amp,
            1.0 + amp,
            1.0 + amp,
        )
    }

    pub fn eval(&self, t: f64, y: f64) -> f64 {
        (self.eval)(t, y)
    }

    pub fn c_lower(&self) -> f64 {
        self.c_lower
    }

    pub fn c_upper(&self) -> f64 {
        self.c_upper
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn same_constants(&self, other: &LossFunction) -> bool {
        self.c_lower == other.c_lower
            && self.c_upper == other.c_upper
            && self.growth == other.growth
    }

    /// Sample check of strict monotonicity, the bi-Lipschitz envelope and
    /// linear growth over the given times and value range.
    pub fn check_samples(&self, t_nodes: &[f64], y_lo: f64, y_hi: f64, n: usize) -> Result<()> {
        let step = (y_hi - y_lo) / n as f64;
        for &t in t_nodes {
            let mut prev = self.eval(t, y_lo);
            for k in 0..=n {
                let y = y_lo + k as f64 * step;
                let v = self.eval(t, y);
                if v.abs() > self.growth * (1.0 + y.abs()) + 1e-9 {
                    return Err(Error::Config(format!(
                        "loss '{}' breaks its linear growth bound at (t={t}, y={y})",
                        self.name
                    )));
                }
                if k > 0 {
                    let dy = step;
                    let dv = v - prev;
                    if dv <= 0.0 {
                        return Err(Error::Config(format!(
                            "loss '{}' is not strictly increasing near (t={t}, y={y})",
                            self.name
                        )));
                    }
                    if dv < self.c_lower * dy - 1e-9 || dv > self.c_upper * dy + 1e-9 {
                        return Err(Error::Config(format!(
                            "loss '{}' leaves its bi-Lipschitz envelope [{}, {}] near (t={t}, y={y})",
                            self.name, self.c_lower, self.c_upper
                        )));
                    }
                }
                prev = v;
            }
        }
        Ok(())
    }
}

/// Which centring the operator construction uses. The alternative centring
/// `Hbar'(t,x,X) = E^[hbar(t, X + E^[-X] + x)]` yields the same reflected
/// process; it is kept behind this switch for cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HbarVariant {
    #[default]
    Centered,
    AltCentered,
}

fn centring_offset(engine: &GEngine, variant: HbarVariant, field: &StateField) -> Result<f64> {
    match variant {
        HbarVariant::Centered => Ok(-engine.gexp(field)?),
        HbarVariant::AltCentered => engine.gexp(&field.map(|_, v| -v)?),
    }
}

fn hbar_at(
    engine: &GEngine,
    loss: &LossFunction,
    t: f64,
    x: f64,
    field: &StateField,
    offset: f64,
) -> Result<f64> {
    let payoff = field.map(|_, v| loss.eval(t, x + v + offset))?;
    engine.gexp(&payoff)
}

/// `Hbar(t, x, X) = E^[hbar(t, x + X - E^[X])]`.
pub fn hbar_mean(
    engine: &GEngine,
    loss: &LossFunction,
    t: f64,
    x: f64,
    field: &StateField,
) -> Result<f64> {
    let offset = centring_offset(engine, HbarVariant::Centered, field)?;
    hbar_at(engine, loss, t, x, field, offset)
}

/// Barrier inversion: the `x*` with `Hbar(t, x*, X) = target`, to residual
/// `tol_h_rel * max(1, |target|)` in the `Hbar` value.
pub fn invert_barrier(
    engine: &GEngine,
    loss: &LossFunction,
    t: f64,
    field: &StateField,
    target: f64,
) -> Result<f64> {
    let offset = centring_offset(engine, HbarVariant::Centered, field)?;
    let opts = ReflectOptions::default();
    invert_with(engine, loss, t, field, offset, target, target, &opts).map(|(x, _)| x)
}

/// Bisection with a bracket certified by the lower slope: for any probe `x0`,
/// the root lies within `|Hbar(x0) - target| / c_lower` of `x0`. Returns the
/// root and the number of `Hbar` evaluations spent.
fn invert_with(
    engine: &GEngine,
    loss: &LossFunction,
    t: f64,
    field: &StateField,
    offset: f64,
    target: f64,
    probe0: f64,
    opts: &ReflectOptions,
) -> Result<(f64, usize)> {
    let tol_h = opts.tol_h_rel * target.abs().max(1.0);
    let mut probes = 1usize;
    let h0 = hbar_at(engine, loss, t, probe0, field, offset)?;
    if (h0 - target).abs() <= tol_h {
        return Ok((probe0, probes));
    }
    let radius = (h0 - target).abs() / loss.c_lower() * (1.0 + 1e-9) + 1e-12;
    let (mut lo, mut hi) = if h0 > target {
        (probe0 - radius, probe0)
    } else {
        (probe0, probe0 + radius)
    };
    while probes < opts.probe_budget {
        let mid = 0.5 * (lo + hi);
        probes += 1;
        let h = hbar_at(engine, loss, t, mid, field, offset)?;
        if (h - target).abs() <= tol_h {
            return Ok((mid, probes));
        }
        if h > target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            // Bracket exhausted without meeting the residual: the declared
            // constants cannot hold on this data.
            break;
        }
    }
    Err(Error::Config(format!(
        "barrier inversion for loss '{}' failed at t={t}, target={target}: \
         bracket [{lo}, {hi}] after {probes} probes. The range condition on the \
         loss/barrier pair (finite-limit admissibility) is violated numerically.",
        loss.name()
    )))
}

/// Options for the reflection construction and its certification.
#[derive(Debug, Clone)]
pub struct ReflectOptions {
    /// Band containment relaxation; `None` derives `dt + dx` from the engine.
    pub epsilon: Option<f64>,
    /// Tolerance on the minimality Stieltjes sums and the flatness check.
    pub minimality_tol: f64,
    /// Allowed slack in the terminal admissibility test.
    pub admissibility_tol: f64,
    /// Max `Hbar` evaluations per inversion.
    pub probe_budget: usize,
    /// Relative residual for the inversion (`<= 1e-8` keeps identity-loss
    /// barriers exact to 1e-8 in x).
    pub tol_h_rel: f64,
    pub variant: HbarVariant,
}

impl Default for ReflectOptions {
    fn default() -> Self {
        ReflectOptions {
            epsilon: None,
            minimality_tol: 1e-10,
            admissibility_tol: 1e-6,
            probe_budget: 60,
            tol_h_rel: 5e-9,
            variant: HbarVariant::Centered,
        }
    }
}

/// Certification margins recorded with every reflected curve.
#[derive(Debug, Clone)]
pub struct ReflectCert {
    /// `max_{s<=t} int (E^[hbar(v, Y_v)] - l_v) dR_v`, must be `<= tol`.
    pub minimality_lower: f64,
    pub minimality_upper: f64,
    /// Worst excursion of the trace outside `[l - eps, u + eps]`.
    pub band_violation: f64,
    /// Worst `|dR|` on steps whose endpoints are strictly inside the band.
    pub flat_off_band: f64,
    /// Nodes where the sign pattern of `(E^[Y] vs L, U)` disagrees with the
    /// pattern of `(E^[hbar(Y)] vs l, u)`.
    pub equivalence_mismatches: usize,
    pub epsilon: f64,
    pub tol: f64,
}

impl ReflectCert {
    pub fn passes(&self) -> bool {
        self.minimality_lower <= self.tol
            && self.minimality_upper <= self.tol
            && self.band_violation <= self.epsilon
            && self.flat_off_band <= self.tol
            && self.equivalence_mismatches == 0
    }
}

/// Output of the backward Skorokhod problem with sublinear expectation.
#[derive(Debug, Clone)]
pub struct ReflectedCurve {
    /// Deterministic shift trace `rho_t = R_T - R_t`.
    pub rho: GridCurve,
    /// The reflection process `R` (bounded variation, `R_0 = 0`).
    pub regulator: BVPath,
    /// Reflected fields `Y_t = Yb_t + rho_t`.
    pub fields: Vec<StateField>,
    /// Constraint trace `E^[hbar(t, Y_t)]`.
    pub trace: GridCurve,
    /// Input expectation trace `E^[Yb_t]`.
    pub ybar_trace: GridCurve,
    /// Effective lower barrier `L_t(Yb_t)`.
    pub lower_op: GridCurve,
    /// Effective upper barrier `U_t(Yb_t)`.
    pub upper_op: GridCurve,
    pub cert: ReflectCert,
}

impl ReflectedCurve {
    /// `E^[Y_t] = E^[Yb_t] + rho_t`.
    pub fn mean_trace(&self) -> Vec<f64> {
        self.ybar_trace
            .values()
            .iter()
            .zip(self.rho.values())
            .map(|(m, r)| m + r)
            .collect()
    }
}

pub fn reflect_sublinear(
    engine: &GEngine,
    loss: &LossFunction,
    band: &Band,
    ybar: &[StateField],
) -> Result<ReflectedCurve> {
    reflect_sublinear_with(engine, loss, band, ybar, &ReflectOptions::default())
}

pub fn reflect_sublinear_with(
    engine: &GEngine,
    loss: &LossFunction,
    band: &Band,
    ybar: &[StateField],
    opts: &ReflectOptions,
) -> Result<ReflectedCurve> {
    let tgrid = engine.time_grid().clone();
    let n = tgrid.len();
    if ybar.len() != n {
        return Err(Error::InvalidInput(format!(
            "need one input field per grid node ({} nodes, {} fields)",
            n,
            ybar.len()
        )));
    }
    if !band.grid().same_grid(&tgrid) {
        return Err(Error::InvalidInput("barriers live on a different time grid".into()));
    }
    let range = reflect_indexed(engine, loss, band, ybar, 0, opts)?;

    let lambda_curve = GridCurve::new(tgrid.clone(), range.lambda, Regularity::Continuous)?;
    let upsilon_curve = GridCurve::new(tgrid.clone(), range.upsilon, Regularity::Continuous)?;
    let rho = GridCurve::new(tgrid.clone(), range.rho.clone(), Regularity::Continuous)?;
    let regulator = BVPath::from_values(
        tgrid.clone(),
        &range.rho.iter().map(|r| range.rho[0] - r).collect::<Vec<_>>(),
    )?;
    let trace_curve = GridCurve::new(tgrid.clone(), range.trace, Regularity::Continuous)?;
    let ybar_trace = GridCurve::new(tgrid.clone(), range.means, Regularity::Continuous)?;
    Ok(ReflectedCurve {
        rho,
        regulator,
        fields: range.fields,
        trace: trace_curve,
        ybar_trace,
        lower_op: lambda_curve,
        upper_op: upsilon_curve,
        cert: range.cert,
    })
}

/// Reflection restricted to grid nodes `i_lo .. i_lo + ybar.len() - 1`, with
/// the terminal anchor at the right end of the range. This is the engine
/// behind both the full-horizon construction and the windowed concatenation
/// used by the fixed-point solvers. Entry `k` corresponds to node `i_lo + k`.
#[derive(Debug, Clone)]
pub(crate) struct RangeReflection {
    pub rho: Vec<f64>,
    pub fields: Vec<StateField>,
    pub trace: Vec<f64>,
    pub means: Vec<f64>,
    pub lambda: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub cert: ReflectCert,
}

pub(crate) fn reflect_indexed(
    engine: &GEngine,
    loss: &LossFunction,
    band: &Band,
    ybar: &[StateField],
    i_lo: usize,
    opts: &ReflectOptions,
) -> Result<RangeReflection> {
    let tgrid = engine.time_grid().clone();
    let n = ybar.len();
    if n < 2 || i_lo + n > tgrid.len() {
        return Err(Error::InvalidInput(format!(
            "reflection range [{i_lo}, {}] does not fit the grid",
            i_lo + n - 1
        )));
    }
    let l: Vec<f64> = (0..n).map(|k| band.lower().value(i_lo + k)).collect();
    let u: Vec<f64> = (0..n).map(|k| band.upper().value(i_lo + k)).collect();

    // Range-condition proxy at the spatial-domain extremes, checked up front
    // so bracket failures surface as configuration errors.
    let sg = engine.spatial_grid();
    for k in 0..n {
        let t = tgrid.node(i_lo + k);
        if loss.eval(t, sg.x_min()) >= l[k] || loss.eval(t, sg.x_max()) <= u[k] {
            return Err(Error::Config(format!(
                "loss '{}' cannot reach both barriers at t={t} within the spatial domain; \
                 the finite-limit range condition fails on this configuration",
                loss.name()
            )));
        }
    }

    // Per-node means, offsets and inverted barriers, warm-starting each
    // bisection from the neighbouring node's root.
    let mut means = vec![0.0; n];
    let mut offsets = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    let mut upsilon = vec![0.0; n];
    let mut probe_l = None;
    let mut probe_u = None;
    for k in (0..n).rev() {
        let t = tgrid.node(i_lo + k);
        means[k] = engine.gexp(&ybar[k])?;
        offsets[k] = match opts.variant {
            HbarVariant::Centered => -means[k],
            HbarVariant::AltCentered => engine.gexp(&ybar[k].map(|_, v| -v)?)?,
        };
        let (xl, _) = invert_with(
            engine,
            loss,
            t,
            &ybar[k],
            offsets[k],
            l[k],
            probe_l.unwrap_or(l[k]),
            opts,
        )?;
        let (xu, _) = invert_with(
            engine,
            loss,
            t,
            &ybar[k],
            offsets[k],
            u[k],
            probe_u.unwrap_or(u[k]),
            opts,
        )?;
        lambda[k] = xl;
        upsilon[k] = xu;
        probe_l = Some(xl);
        probe_u = Some(xu);
        if !(xu - xl > 0.0) {
            return Err(Error::DegenerateBand(format!(
                "effective barriers collapsed at t={t}: L={xl}, U={xu}"
            )));
        }
    }

    // Terminal admissibility: l_T <= E^[hbar(T, Yb_T)] <= u_T.
    let t_term = tgrid.node(i_lo + n - 1);
    let e_term = hbar_at(engine, loss, t_term, means[n - 1], &ybar[n - 1], offsets[n - 1])?;
    if e_term < l[n - 1] - opts.admissibility_tol || e_term > u[n - 1] + opts.admissibility_tol {
        return Err(Error::InvalidInput(format!(
            "terminal datum inadmissible: E^[hbar(T, Yb_T)] = {e_term} outside [{}, {}]",
            l[n - 1],
            u[n - 1]
        )));
    }

    // Deterministic backward Skorokhod problem between the effective
    // barriers, driven by xbar = -E^[Yb] and anchored at a = E^[Yb_T]. The
    // recursion only sees node ordering, so a synthetic uniform grid over the
    // range carries the curves.
    let span_grid = crate::grid::make_grid(
        tgrid.node(i_lo + n - 1) - tgrid.node(i_lo),
        n - 1,
    )?;
    let lambda_curve = GridCurve::new(span_grid.clone(), lambda.clone(), Regularity::Continuous)?;
    let upsilon_curve = GridCurve::new(span_grid.clone(), upsilon.clone(), Regularity::Continuous)?;
    let op_band = Band::new(lambda_curve, upsilon_curve)?;
    let neg_mean = GridCurve::new(
        span_grid,
        means.iter().map(|m| -m).collect(),
        Regularity::Continuous,
    )?;
    let anchor = means[n - 1].clamp(lambda[n - 1], upsilon[n - 1]);
    let bsp = backward_skorokhod(&neg_mean, anchor, &op_band)?;
    let rho = backward_trace(&bsp);

    // Assemble the reflected process and its constraint trace.
    let mut fields = Vec::with_capacity(n);
    let mut trace = vec![0.0; n];
    for k in 0..n {
        let t = tgrid.node(i_lo + k);
        let y_field = ybar[k].shift(rho[k]);
        trace[k] = engine.gexp(&y_field.map(|_, v| loss.eval(t, v))?)?;
        fields.push(y_field);
    }

    let epsilon = opts
        .epsilon
        .unwrap_or(tgrid.dt() + engine.spatial_grid().dx());
    let cert = certify(
        &trace, &l, &u, &rho, &lambda, &upsilon, &means, epsilon, opts.minimality_tol,
    );

    Ok(RangeReflection {
        rho,
        fields,
        trace,
        means,
        lambda,
        upsilon,
        cert,
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn certify(
    trace: &[f64],
    l: &[f64],
    u: &[f64],
    rho: &[f64],
    lambda: &[f64],
    upsilon: &[f64],
    means: &[f64],
    epsilon: f64,
    tol: f64,
) -> ReflectCert {
    let n = trace.len();
    // dR_i over (t_{i-1}, t_i]: rho_t = R_T - R_t, so dR_i = rho_{i-1} - rho_i.
    let increments: Vec<f64> = (1..n).map(|i| rho[i - 1] - rho[i]).collect();
    // The regulator comes from a backward construction, so increments pair
    // with the left node of their interval.
    let f_lower: Vec<f64> = (0..n).map(|i| trace[i] - l[i]).collect();
    let f_upper: Vec<f64> = (0..n).map(|i| trace[i] - u[i]).collect();
    let minimality_lower = max_partial_stieltjes_left(&f_lower, &increments);
    let minimality_upper = max_partial_stieltjes_left(&f_upper, &increments);

    let band_violation = (0..n)
        .map(|i| (l[i] - trace[i]).max(trace[i] - u[i]))
        .fold(f64::NEG_INFINITY, f64::max);

    let interior = |i: usize| trace[i] > l[i] + epsilon && trace[i] < u[i] - epsilon;
    let mut flat = 0.0f64;
    for i in 1..n {
        if interior(i - 1) && interior(i) {
            flat = flat.max(increments[i - 1].abs());
        }
    }

    // Equivalence bridge: E^[Y_t] vs (L, U) must carry the same strict-sign
    // pattern as E^[hbar(t, Y_t)] vs (l, u), away from a small cushion.
    let cushion = 1e-6;
    let mut mismatches = 0;
    for i in 0..n {
        let y_mean = means[i] + rho[i];
        let pairs = [
            (y_mean - lambda[i], trace[i] - l[i]),
            (y_mean - upsilon[i], trace[i] - u[i]),
        ];
        for (a, b) in pairs {
            if a.abs() > cushion && b.abs() > cushion && a.signum() != b.signum() {
                mismatches += 1;
            }
        }
    }

    ReflectCert {
        minimality_lower,
        minimality_upper,
        band_violation,
        flat_off_band: flat,
        equivalence_mismatches: mismatches,
        epsilon,
        tol,
    }
}

/// Node margins of the a priori reflection bound
/// `|R_T - R_t| <= (1 + 2 c_upper/c_lower) sup_{s in [t,T]} E^[|Yb_s|] + C0(t,T)`
/// with `C0(t,T) = sup_{s in [t,T]} max(|L_s(0)|, |U_s(0)|)`.
#[derive(Debug, Clone)]
pub struct AprioriReport {
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub constant: f64,
}

pub fn apriori_r_bound(
    engine: &GEngine,
    loss: &LossFunction,
    band: &Band,
    curve: &ReflectedCurve,
    ybar: &[StateField],
) -> Result<AprioriReport> {
    let tgrid = engine.time_grid();
    let n = tgrid.len();
    let c = 1.0 + 2.0 * loss.c_upper() / loss.c_lower();
    let opts = ReflectOptions::default();

    let mut abs_mean = vec![0.0; n];
    let mut op_zero = vec![0.0; n];
    for i in 0..n {
        let t = tgrid.node(i);
        abs_mean[i] = engine.gexp(&ybar[i].abs())?;
        let zero = StateField::constant(engine.spatial_grid().clone(), t, 0.0)?;
        let (l0, _) = invert_with(engine, loss, t, &zero, 0.0, band.lower().value(i), band.lower().value(i), &opts)?;
        let (u0, _) = invert_with(engine, loss, t, &zero, 0.0, band.upper().value(i), band.upper().value(i), &opts)?;
        op_zero[i] = l0.abs().max(u0.abs());
    }
    // Suffix maxima realize the sup over [t, T].
    for i in (0..n - 1).rev() {
        abs_mean[i] = abs_mean[i].max(abs_mean[i + 1]);
        op_zero[i] = op_zero[i].max(op_zero[i + 1]);
    }
    let margins: Vec<f64> = (0..n)
        .map(|i| c * abs_mean[i] + op_zero[i] - curve.rho.value(i).abs())
        .collect();
    let worst_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(AprioriReport {
        margins,
        worst_margin,
        constant: c,
    })
}

/// One reflection instance bundled for the stability comparison.
pub struct StabilityInstance<'a> {
    pub loss: &'a LossFunction,
    pub band: &'a Band,
    pub curve: &'a ReflectedCurve,
    pub ybar: &'a [StateField],
}

/// Node margins of the two-instance stability bound: the difference of the
/// shift traces against the sum of the input-distance, cross-operator and
/// barrier-distance terms.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub lhs_max: f64,
}

pub fn stability_check(
    engine: &GEngine,
    a: &StabilityInstance<'_>,
    b: &StabilityInstance<'_>,
) -> Result<StabilityReport> {
    if !a.loss.same_constants(b.loss) {
        return Err(Error::InvalidInput(
            "stability comparison requires identical loss constants".into(),
        ));
    }
    let tgrid = engine.time_grid();
    let n = tgrid.len();
    let c_low = a.loss.c_lower();
    let c_up = a.loss.c_upper();
    let opts = ReflectOptions::default();

    let mut mean_diff = vec![0.0; n];
    let mut field_dist = vec![0.0; n];
    let mut cross = vec![0.0; n];
    let mut barrier_diff = vec![0.0; n];
    for i in 0..n {
        let t = tgrid.node(i);
        mean_diff[i] = (a.curve.ybar_trace.value(i) - b.curve.ybar_trace.value(i)).abs();
        field_dist[i] = engine.gexp(&a.ybar[i].sub(&b.ybar[i])?.abs())?;

        // Cross terms: loss-1 operators evaluated on the second input, then
        // Hbar under each loss at that point.
        let offset2 = centring_offset(engine, opts.variant, &b.ybar[i])?;
        let (l1_on_2, _) = invert_with(
            engine, a.loss, t, &b.ybar[i], offset2,
            a.band.lower().value(i), a.curve.lower_op.value(i), &opts,
        )?;
        let (u1_on_2, _) = invert_with(
            engine, a.loss, t, &b.ybar[i], offset2,
            a.band.upper().value(i), a.curve.upper_op.value(i), &opts,
        )?;
        let h1_l = hbar_at(engine, a.loss, t, l1_on_2, &b.ybar[i], offset2)?;
        let h2_l = hbar_at(engine, b.loss, t, l1_on_2, &b.ybar[i], offset2)?;
        let h1_u = hbar_at(engine, a.loss, t, u1_on_2, &b.ybar[i], offset2)?;
        let h2_u = hbar_at(engine, b.loss, t, u1_on_2, &b.ybar[i], offset2)?;
        cross[i] = (h1_l - h2_l).abs().max((h1_u - h2_u).abs());

        barrier_diff[i] = (a.band.lower().value(i) - b.band.lower().value(i))
            .abs()
            .max((a.band.upper().value(i) - b.band.upper().value(i)).abs());
    }
    for i in (0..n - 1).rev() {
        mean_diff[i] = mean_diff[i].max(mean_diff[i + 1]);
        field_dist[i] = field_dist[i].max(field_dist[i + 1]);
        cross[i] = cross[i].max(cross[i + 1]);
        barrier_diff[i] = barrier_diff[i].max(barrier_diff[i + 1]);
    }

    let mut margins = Vec::with_capacity(n);
    let mut lhs_max = 0.0f64;
    for i in 0..n {
        let lhs = (a.curve.rho.value(i) - b.curve.rho.value(i)).abs();
        lhs_max = lhs_max.max(lhs);
        let rhs = mean_diff[i]
            + 2.0 * c_up / c_low * field_dist[i]
            + (cross[i] + barrier_diff[i]) / c_low;
        margins.push(rhs - lhs);
    }
    let worst_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(StabilityReport {
        margins,
        worst_margin,
        lhs_max,
    })
}
