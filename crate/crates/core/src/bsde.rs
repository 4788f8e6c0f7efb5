//! Markovian G-BSDE solves (the unreflected building block).
//!
//! With terminal datum `Phi(B_T)` and generator `f(t, y, z)` the value
//! function is marched backward by
//!
//! `u <- u + dtau * [ G(D2 u) + f(t, u, Du) ]`
//!
//! under the engine's CFL sub-stepping, and `(Y_t, Z_t) = (u, du/dx)(t, B_t)`.
//! The non-increasing martingale part `K` is never stored as a field (it is
//! measure dependent); the Monte-Carlo diagnostic reconstructs it pathwise
//! and tests the statistical consequences it must have.

use crate::error::{Error, Result};
use crate::gexp::{GEngine, StateField};
use crate::grid::GridCurve;
use crate::rng::SplitRng;
use std::sync::Arc;

/// Generator regularity class, with the constants the estimates use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorKind {
    /// `|f(t,y,z) - f(t,y',z')| <= L (|y-y'| + |z-z'|)`.
    Lipschitz { l: f64 },
    /// `|f(t,y,z) - f(t,y',z')| <= lambda |y-y'| + gamma (1+|z|+|z'|) |z-z'|`.
    Quadratic { lambda: f64, gamma: f64 },
}

impl GeneratorKind {
    /// Contraction coefficient entering the Picard rate bookkeeping (the
    /// y-sensitivity of the generator).
    pub fn y_rate(&self) -> f64 {
        match self {
            GeneratorKind::Lipschitz { l } => *l,
            GeneratorKind::Quadratic { lambda, .. } => *lambda,
        }
    }
}

/// Driver `f(t, y, z)` with its declared regularity class and an optional
/// non-negative base-bound curve for the growth envelope.
#[derive(Clone)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub alpha_hat: Option<GridCurve>,
    f: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorSpec").field("kind", &self.kind).finish()
    }
}

impl GeneratorSpec {
    pub fn lipschitz(l: f64, f: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Lipschitz { l },
            alpha_hat: None,
            f,
        }
    }

    pub fn quadratic(
        lambda: f64,
        gamma: f64,
        f: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    ) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Quadratic { lambda, gamma },
            alpha_hat: None,
            f,
        }
    }

    pub fn zero() -> Self {
        GeneratorSpec::lipschitz(0.0, Arc::new(|_, _, _| 0.0))
    }

    pub fn with_alpha_hat(mut self, alpha_hat: GridCurve) -> Self {
        self.alpha_hat = Some(alpha_hat);
        self
    }

    pub fn eval(&self, t: f64, y: f64, z: f64) -> f64 {
        (self.f)(t, y, z)
    }

    /// Sample check of the declared envelope over `(t, y, z)` tuples.
    pub fn check_samples(&self, t_nodes: &[f64], y_max: f64, z_max: f64, n: usize) -> Result<()> {
        let mut bad = None;
        let grid = |k: usize, hi: f64| -(hi) + 2.0 * hi * k as f64 / n as f64;
        for &t in t_nodes {
            for ky in 0..=n {
                for kz in 0..=n {
                    let (y, z) = (grid(ky, y_max), grid(kz, z_max));
                    let (y2, z2) = (grid((ky + 1).min(n), y_max), grid((kz + 1).min(n), z_max));
                    let d = (self.eval(t, y, z) - self.eval(t, y2, z2)).abs();
                    let allowed = match self.kind {
                        GeneratorKind::Lipschitz { l } => {
                            l * ((y - y2).abs() + (z - z2).abs())
                        }
                        GeneratorKind::Quadratic { lambda, gamma } => {
                            lambda * (y - y2).abs()
                                + gamma * (1.0 + z.abs() + z2.abs()) * (z - z2).abs()
                        }
                    };
                    if d > allowed + 1e-9 {
                        bad = Some((t, y, z));
                    }
                }
            }
        }
        match bad {
            None => Ok(()),
            Some((t, y, z)) => Err(Error::Config(format!(
                "generator leaves its declared {:?} envelope near (t={t}, y={y}, z={z})",
                self.kind
            ))),
        }
    }
}

/// Numerical safeguards for the marching solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Gradient clip inside quadratic generators; a safety net, not a
    /// steady-state behaviour (clip events are counted).
    pub z_clip: f64,
    /// Blow-up ceiling on `max |u|`.
    pub value_ceiling: f64,
    /// Max step-halving retries per grid step.
    pub max_halvings: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            z_clip: 50.0,
            value_ceiling: 1e6,
            max_halvings: 4,
        }
    }
}

/// Value and gradient fields over all grid nodes plus solver metadata.
#[derive(Debug, Clone)]
pub struct GBSDESolution {
    pub values: Vec<StateField>,
    pub gradients: Vec<StateField>,
    pub substeps: usize,
    pub clip_events: usize,
    pub halvings: usize,
}

impl GBSDESolution {
    pub fn value_at_origin(&self, engine: &GEngine, i: usize) -> f64 {
        self.values[i].value_at(engine.zero_index())
    }
}

fn gradient_field(engine: &GEngine, u: &StateField) -> StateField {
    let m = engine.spatial_grid().len();
    let dx = engine.spatial_grid().dx();
    let v = u.values();
    let mut z = vec![0.0; m];
    z[0] = (v[1] - v[0]) / dx;
    z[m - 1] = (v[m - 1] - v[m - 2]) / dx;
    for j in 1..m - 1 {
        z[j] = (v[j + 1] - v[j - 1]) / (2.0 * dx);
    }
    StateField::new(engine.spatial_grid().clone(), u.t(), z).expect("finite gradients")
}

/// Backward marching shared by the plain and frozen-drift solves. The drift
/// closure receives `(i_right, tau, j, y, z)` with `i_right` the grid node at
/// the right end of the current step.
pub(crate) fn solve_markovian(
    engine: &GEngine,
    terminal: &StateField,
    opts: &SolveOptions,
    drift: &mut dyn FnMut(usize, f64, usize, f64, f64) -> f64,
) -> Result<GBSDESolution> {
    let n = engine.time_grid().len();
    if (terminal.t() - engine.time_grid().horizon()).abs() > 1e-9 {
        return Err(Error::InvalidInput("terminal field must sit at the horizon".into()));
    }
    solve_markovian_range(engine, terminal, 0, n - 1, opts, drift)
}

/// As [`solve_markovian`] but only over grid nodes `i_lo..=i_hi`, with the
/// terminal field at node `i_hi`. Entry `k` of the result corresponds to node
/// `i_lo + k`.
pub(crate) fn solve_markovian_range(
    engine: &GEngine,
    terminal: &StateField,
    i_lo: usize,
    i_hi: usize,
    opts: &SolveOptions,
    drift: &mut dyn FnMut(usize, f64, usize, f64, f64) -> f64,
) -> Result<GBSDESolution> {
    if !terminal.grid().same_grid(engine.spatial_grid()) {
        return Err(Error::InvalidInput("terminal field grid does not match the engine".into()));
    }
    let tgrid = engine.time_grid().clone();
    if i_lo >= i_hi || i_hi >= tgrid.len() {
        return Err(Error::InvalidInput(format!("bad node range [{i_lo}, {i_hi}]")));
    }
    if (terminal.t() - tgrid.node(i_hi)).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "terminal field time {} is not node {i_hi}",
            terminal.t()
        )));
    }
    let n = i_hi - i_lo + 1;

    let mut fields: Vec<Option<StateField>> = vec![None; n];
    fields[n - 1] = Some(terminal.clone());
    let mut current = terminal.values().to_vec();
    let mut substeps = 0usize;
    let mut halvings = 0usize;
    for i in (i_lo + 1..=i_hi).rev() {
        let (t_hi, t_lo) = (tgrid.node(i), tgrid.node(i - 1));
        let saved = current.clone();
        let mut subdiv = 1usize;
        loop {
            let mut step_drift =
                |tau: f64, j: usize, y: f64, z: f64| drift(i, tau, j, y, z);
            substeps += engine.march_segment_subdiv(&mut current, t_hi, t_lo, subdiv, &mut step_drift);
            let max_abs = current.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let bad = !max_abs.is_finite() || max_abs > opts.value_ceiling;
            if !bad {
                break;
            }
            if subdiv >= 1 << opts.max_halvings {
                return Err(Error::Divergence {
                    context: "markovian G-BSDE marching".into(),
                    detail: format!(
                        "|u| reached {max_abs:.3e} on step [{t_lo}, {t_hi}] despite {halvings} halvings"
                    ),
                });
            }
            subdiv *= 2;
            halvings += 1;
            current.copy_from_slice(&saved);
        }
        fields[i - 1 - i_lo] = Some(StateField::new(
            engine.spatial_grid().clone(),
            t_lo,
            current.clone(),
        )?);
    }

    let values: Vec<StateField> = fields.into_iter().map(|f| f.unwrap()).collect();
    let gradients = values.iter().map(|u| gradient_field(engine, u)).collect();
    Ok(GBSDESolution {
        values,
        gradients,
        substeps,
        clip_events: 0,
        halvings,
    })
}

/// Solves the G-BSDE with live `(y, z)` arguments in the generator.
pub fn solve_gbsde(
    engine: &GEngine,
    terminal: &StateField,
    spec: &GeneratorSpec,
) -> Result<GBSDESolution> {
    solve_gbsde_with(engine, terminal, spec, &SolveOptions::default())
}

pub fn solve_gbsde_with(
    engine: &GEngine,
    terminal: &StateField,
    spec: &GeneratorSpec,
    opts: &SolveOptions,
) -> Result<GBSDESolution> {
    let mut clip_events = 0usize;
    let quadratic = matches!(spec.kind, GeneratorKind::Quadratic { .. });
    let z_clip = opts.z_clip;
    let mut drift = |_i: usize, tau: f64, _j: usize, y: f64, z: f64| {
        let z_used = if quadratic && z.abs() > z_clip {
            clip_events += 1;
            z.clamp(-z_clip, z_clip)
        } else {
            z
        };
        spec.eval(tau, y, z_used)
    };
    let mut sol = solve_markovian(engine, terminal, opts, &mut drift)?;
    sol.clip_events = clip_events;
    Ok(sol)
}

/// Marches the pure G-heat flow of one terminal field, recording the value
/// field at every grid node (index 0 = time 0).
pub(crate) fn gheat_all_nodes(engine: &GEngine, terminal: &StateField) -> Result<Vec<StateField>> {
    let spec = GeneratorSpec::zero();
    let sol = solve_gbsde(engine, terminal, &spec)?;
    Ok(sol.values)
}

/// Monte-Carlo reconstruction of the martingale part `K` along Euler paths.
///
/// Under any constant volatility in the band, `K` must be non-increasing in
/// mean; under the scheme's per-node argmax branch it must be statistically
/// flat. Increments are rebuilt from `dK = dY + f dt - Z dB`.
#[derive(Debug, Clone)]
pub struct KDiagnostic {
    pub sigma: f64,
    pub n_paths: usize,
    /// Mean and standard error of `K_T` under the fixed volatility.
    pub mean_kt: f64,
    pub se_kt: f64,
    /// Worst per-step value of `mean dK_i - 3 SE_i` (must be <= 0).
    pub worst_step_excess: f64,
    /// Mean and standard error of `K_T` under the argmax-branch volatility.
    pub argmax_mean_kt: f64,
    pub argmax_se_kt: f64,
}

impl KDiagnostic {
    pub fn passes(&self) -> bool {
        self.mean_kt <= 3.0 * self.se_kt
            && self.worst_step_excess <= 0.0
            && self.argmax_mean_kt.abs() <= 3.0 * self.argmax_se_kt
    }
}

enum SigmaScheme {
    Fixed(f64),
    ArgmaxBranch,
}

fn simulate_k(
    engine: &GEngine,
    sol: &GBSDESolution,
    spec: &GeneratorSpec,
    scheme: &SigmaScheme,
    n_paths: usize,
    rng_root: &SplitRng,
) -> (f64, f64, f64) {
    let tgrid = engine.time_grid();
    let sgrid = engine.spatial_grid();
    let n = tgrid.len();
    let dt = tgrid.dt();
    let sqrt_dt = dt.sqrt();
    let m = sgrid.len();
    let dx = sgrid.dx();

    let mut kt_sum = 0.0;
    let mut kt_sumsq = 0.0;
    let mut step_sum = vec![0.0; n - 1];
    let mut step_sumsq = vec![0.0; n - 1];
    for p in 0..n_paths {
        let mut rng = rng_root.split(p as u64);
        let mut x = 0.0f64;
        let mut k_acc = 0.0f64;
        for i in 1..n {
            let t_prev = tgrid.node(i - 1);
            let u_prev = sol.values[i - 1].values();
            let y = sgrid.interpolate_quadratic(u_prev, x);
            let z = sgrid.interpolate_quadratic(sol.gradients[i - 1].values(), x);
            let sigma = match scheme {
                SigmaScheme::Fixed(s) => *s,
                SigmaScheme::ArgmaxBranch => {
                    let j = (((x - sgrid.x_min()) / dx).round() as isize)
                        .clamp(1, m as isize - 2) as usize;
                    let d2 = (u_prev[j + 1] - 2.0 * u_prev[j] + u_prev[j - 1]) / (dx * dx);
                    if d2 >= 0.0 {
                        engine.band().sigma_upper()
                    } else {
                        engine.band().sigma_lower()
                    }
                }
            };
            let db = sigma * sqrt_dt * rng.normal();
            let x_next = x + db;
            let y_next = sgrid.interpolate_quadratic(sol.values[i].values(), x_next);
            let dk = y_next - y + spec.eval(t_prev, y, z) * dt - z * db;
            k_acc += dk;
            step_sum[i - 1] += dk;
            step_sumsq[i - 1] += dk * dk;
            x = x_next;
        }
        kt_sum += k_acc;
        kt_sumsq += k_acc * k_acc;
    }
    let np = n_paths as f64;
    let mean = kt_sum / np;
    let var = (kt_sumsq / np - mean * mean).max(0.0);
    let se = (var / np).sqrt();
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..n - 1 {
        let sm = step_sum[i] / np;
        let sv = (step_sumsq[i] / np - sm * sm).max(0.0);
        let sse = (sv / np).sqrt();
        worst_excess = worst_excess.max(sm - 3.0 * sse);
    }
    (mean, se, worst_excess)
}

pub fn pathwise_k_diagnostic(
    engine: &GEngine,
    sol: &GBSDESolution,
    spec: &GeneratorSpec,
    sigma: f64,
    n_paths: usize,
    seed: u64,
) -> Result<KDiagnostic> {
    if !engine.band().contains(sigma) {
        return Err(Error::InvalidInput(format!(
            "path volatility {sigma} outside the band [{}, {}]",
            engine.band().sigma_lower(),
            engine.band().sigma_upper()
        )));
    }
    if n_paths < 2 {
        return Err(Error::InvalidInput("need at least two paths".into()));
    }
    let root = SplitRng::new(seed);
    let (mean_kt, se_kt, worst_step_excess) =
        simulate_k(engine, sol, spec, &SigmaScheme::Fixed(sigma), n_paths, &root.split(1));
    let (argmax_mean_kt, argmax_se_kt, _) = simulate_k(
        engine,
        sol,
        spec,
        &SigmaScheme::ArgmaxBranch,
        n_paths,
        &root.split(2),
    );
    Ok(KDiagnostic {
        sigma,
        n_paths,
        mean_kt,
        se_kt,
        worst_step_excess,
        argmax_mean_kt,
        argmax_se_kt,
    })
}

/// Exponential a priori bound for z-only generators with envelope
/// `|f(t,z)| <= beta_t + kappa/2 |z|^2`:
/// `exp(p kappa s~^2 |Y_t|) <= E^_t[ exp(p kappa s~^2 (|xi| + int_t^T beta)) ]`,
/// where `s~ = 1/sigma_lower`.
#[derive(Debug, Clone)]
pub struct ExpBoundReport {
    /// `min over (t, x)` of `(RHS - LHS) / RHS`.
    pub worst_relative_margin: f64,
}

pub fn exp_bound_check(
    engine: &GEngine,
    sol: &GBSDESolution,
    spec: &GeneratorSpec,
    beta_hat: &GridCurve,
    kappa: f64,
    p: f64,
) -> Result<ExpBoundReport> {
    let tgrid = engine.time_grid();
    let n = tgrid.len();
    if !(kappa > 0.0 && p >= 1.0) {
        return Err(Error::InvalidInput("need kappa > 0 and p >= 1".into()));
    }
    if beta_hat.values().iter().any(|&b| b < 0.0) {
        return Err(Error::InvalidInput("base bound must be non-negative".into()));
    }
    // Envelope sample check: z-only form and the quadratic growth cap.
    for (i, &t) in tgrid.nodes().iter().enumerate() {
        for k in 0..=20 {
            let z = -5.0 + 0.5 * k as f64;
            for y in [-1.0, 0.0, 1.0] {
                if (spec.eval(t, y, z) - spec.eval(t, 0.0, z)).abs() > 1e-12 {
                    return Err(Error::InvalidInput(
                        "exponential bound needs a z-only generator".into(),
                    ));
                }
            }
            let f = spec.eval(t, 0.0, z).abs();
            if f > beta_hat.value(i) + 0.5 * kappa * z * z + 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "generator breaks its envelope at (t={t}, z={z})"
                )));
            }
        }
    }

    let sl = engine.band().sigma_lower();
    let c = p * kappa / (sl * sl);
    let terminal_exp = sol.values[n - 1].map(|_, v| (c * v.abs()).exp())?;
    let rhs_fields = gheat_all_nodes(engine, &terminal_exp)?;

    // Trapezoid tail integrals of the base bound.
    let dt = tgrid.dt();
    let mut tail = vec![0.0; n];
    for i in (0..n - 1).rev() {
        tail[i] = tail[i + 1] + 0.5 * dt * (beta_hat.value(i) + beta_hat.value(i + 1));
    }

    let mut worst = f64::INFINITY;
    for i in 0..n {
        let scale = (c * tail[i]).exp();
        for j in 0..engine.spatial_grid().len() {
            let lhs = (c * sol.values[i].value_at(j).abs()).exp();
            let rhs = scale * rhs_fields[i].value_at(j);
            worst = worst.min((rhs - lhs) / rhs);
        }
    }
    Ok(ExpBoundReport {
        worst_relative_margin: worst,
    })
}

/// Empirical constant of the Lipschitz stability estimate
/// `|Y^1_t - Y^2_t|^alpha <= C E^_t[ |xi^1-xi^2|^alpha + (int_t^T h^ ds)^alpha ]`,
/// with `h^_s` the generator difference evaluated along the second solution.
///
/// The conditional expectation of the integral term is computed through the
/// sourced G-heat flow of `E^_t[int h^]`; for `alpha > 1` that term enters as
/// `(E^_t[int h^])^alpha`, exact for the deterministic differences the test
/// presets use.
#[derive(Debug, Clone)]
pub struct AppendixStabilityReport {
    /// `max over (t, x)` of `LHS / RHS`.
    pub c_hat: f64,
    pub alpha: f64,
}

pub fn appendix_stability_check(
    engine: &GEngine,
    sol1: &GBSDESolution,
    spec1: &GeneratorSpec,
    sol2: &GBSDESolution,
    spec2: &GeneratorSpec,
    alpha: f64,
) -> Result<AppendixStabilityReport> {
    if !(alpha >= 1.0) {
        return Err(Error::InvalidInput("alpha must be >= 1".into()));
    }
    let tgrid = engine.time_grid();
    let n = tgrid.len();
    let m = engine.spatial_grid().len();

    // Generator difference along the second solution, one field per node.
    let mut h_fields = Vec::with_capacity(n);
    for i in 0..n {
        let t = tgrid.node(i);
        let f = sol2.values[i].map(|x, y| {
            let z = engine
                .spatial_grid()
                .interpolate(sol2.gradients[i].values(), x);
            (spec1.eval(t, y, z) - spec2.eval(t, y, z)).abs()
        })?;
        h_fields.push(f);
    }

    let xi_term = sol1.values[n - 1]
        .sub(&sol2.values[n - 1])?
        .map(|_, v| v.abs().powf(alpha))?;
    let a_fields = gheat_all_nodes(engine, &xi_term)?;

    let zero_term = StateField::constant(engine.spatial_grid().clone(), tgrid.horizon(), 0.0)?;
    let mut drift = |i: usize, _tau: f64, j: usize, _y: f64, _z: f64| h_fields[i].value_at(j);
    let v_sol = solve_markovian(engine, &zero_term, &SolveOptions::default(), &mut drift)?;

    let mut c_hat = 0.0f64;
    for i in 0..n {
        for j in 0..m {
            let lhs = (sol1.values[i].value_at(j) - sol2.values[i].value_at(j))
                .abs()
                .powf(alpha);
            if lhs == 0.0 {
                continue;
            }
            let rhs = a_fields[i].value_at(j) + v_sol.values[i].value_at(j).max(0.0).powf(alpha);
            if rhs <= f64::MIN_POSITIVE {
                c_hat = f64::INFINITY;
            } else {
                c_hat = c_hat.max(lhs / rhs);
            }
        }
    }
    Ok(AppendixStabilityReport { c_hat, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gexp::{SpatialGrid, VolatilityBand};
    use crate::grid::make_grid;

    fn engine(band: (f64, f64), n_t: usize, m: usize) -> GEngine {
        let band = VolatilityBand::new(band.0, band.1).unwrap();
        let tgrid = make_grid(1.0, n_t).unwrap();
        let sgrid = SpatialGrid::symmetric(16.0, m).unwrap();
        GEngine::new(band, sgrid, tgrid, 0.45).unwrap()
    }

    #[test]
    fn zero_generator_reduces_to_gexp() {
        let e = engine((1.0, 2.0), 20, 161);
        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
        let sol = solve_gbsde(&e, &phi, &GeneratorSpec::zero()).unwrap();
        let direct = e.gexp(&phi).unwrap();
        assert!((sol.value_at_origin(&e, 0) - direct).abs() <= 1e-12);
        // Terminal field stored exactly.
        assert_eq!(sol.values.last().unwrap().values(), phi.values());
    }

    #[test]
    fn linear_decay_matches_the_ode() {
        let e = engine((1.0, 2.0), 20, 161);
        let one = StateField::constant(e.spatial_grid().clone(), 1.0, 1.0).unwrap();
        let spec = GeneratorSpec::lipschitz(0.1, Arc::new(|_, y, _| -0.1 * y));
        let sol = solve_gbsde(&e, &one, &spec).unwrap();
        let expect = (-0.1f64).exp();
        for v in sol.values[0].values() {
            assert!((v - expect).abs() <= 1e-4, "u(0) = {v} vs {expect}");
        }
    }

    #[test]
    fn constant_source_integrates_exactly() {
        let e = engine((1.0, 2.0), 10, 81);
        let zero = StateField::constant(e.spatial_grid().clone(), 1.0, 0.0).unwrap();
        let spec = GeneratorSpec::lipschitz(0.0, Arc::new(|_, _, _| 0.3));
        let sol = solve_gbsde(&e, &zero, &spec).unwrap();
        for (i, &t) in e.time_grid().nodes().iter().enumerate() {
            for v in sol.values[i].values() {
                assert!((v - 0.3 * (1.0 - t)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn comparison_principle() {
        let e = engine((1.0, 2.0), 10, 81);
        let phi1 = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
        let phi2 = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh() + 0.2).unwrap();
        let f1 = GeneratorSpec::lipschitz(0.2, Arc::new(|_, y, _| -0.2 * y));
        let f2 = GeneratorSpec::lipschitz(0.2, Arc::new(|_, y, _| -0.2 * y + 0.1));
        let s1 = solve_gbsde(&e, &phi1, &f1).unwrap();
        let s2 = solve_gbsde(&e, &phi2, &f2).unwrap();
        for i in 0..e.time_grid().len() {
            for (a, b) in s1.values[i].values().iter().zip(s2.values[i].values()) {
                assert!(*a <= b + 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_band_discounted_call() {
        let e = engine((1.0, 1.0), 50, 321);
        let r = 0.1;
        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.max(0.0)).unwrap();
        let spec = GeneratorSpec::lipschitz(r, Arc::new(move |_, y, _| -r * y));
        let sol = solve_gbsde(&e, &phi, &spec).unwrap();
        let expect = (-r as f64).exp() * (1.0 / (2.0 * std::f64::consts::PI).sqrt());
        let got = sol.value_at_origin(&e, 0);
        assert!(
            (got - expect).abs() <= 0.01 * expect,
            "discounted call {got} vs {expect}"
        );
    }

    #[test]
    fn quadratic_generator_stays_below_the_clip() {
        let e = engine((1.0, 2.0), 20, 161);
        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
        let spec = GeneratorSpec::quadratic(0.0, 0.2, Arc::new(|_, _, z| 0.1 * z * z));
        let sol = solve_gbsde(&e, &phi, &spec).unwrap();
        assert_eq!(sol.clip_events, 0);
        let max_z: f64 = sol
            .gradients
            .iter()
            .map(|g| g.max_norm())
            .fold(0.0, f64::max);
        assert!(max_z < 50.0);
    }

    #[test]
    fn huge_quadratic_coefficient_diverges() {
        let e = engine((1.0, 2.0), 10, 81);
        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x).unwrap();
        let spec = GeneratorSpec::quadratic(0.0, 4e4, Arc::new(|_, _, z| 2e4 * z * z));
        match solve_gbsde(&e, &phi, &spec) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn generator_envelope_sample_check() {
        let good = GeneratorSpec::lipschitz(0.3, Arc::new(|_, y, z| -0.2 * y + 0.1 * z));
        assert!(good.check_samples(&[0.0, 1.0], 2.0, 2.0, 8).is_ok());
        let bad = GeneratorSpec::lipschitz(0.05, Arc::new(|_, y, _| -0.2 * y));
        assert!(bad.check_samples(&[0.0, 1.0], 2.0, 2.0, 8).is_err());
    }

    #[test]
    fn k_diagnostic_flat_at_the_argmax_branch() {
        let e = engine((1.0, 2.0), 25, 161);
        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x * x).unwrap();
        let spec = GeneratorSpec::zero();
        let sol = solve_gbsde(&e, &phi, &spec).unwrap();
        // Convex payoff: the argmax branch is sigma_upper everywhere, so the
        // fixed upper-volatility run is also statistically flat.
        let diag = pathwise_k_diagnostic(&e, &sol, &spec, 2.0, 20_000, 77).unwrap();
        assert!(diag.passes(), "{diag:?}");
        assert!(diag.mean_kt.abs() <= 3.0 * diag.se_kt, "{diag:?}");
    }

    #[test]
    fn k_diagnostic_decreases_off_the_argmax_branch() {
        let e = engine((1.0, 2.0), 25, 161);
        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x * x).unwrap();
        let spec = GeneratorSpec::zero();
        let sol = solve_gbsde(&e, &phi, &spec).unwrap();
        let diag = pathwise_k_diagnostic(&e, &sol, &spec, 1.0, 20_000, 77).unwrap();
        assert!(diag.passes(), "{diag:?}");
        assert!(
            diag.mean_kt < -3.0 * diag.se_kt,
            "K_T should be strictly negative in mean: {diag:?}"
        );
    }

    #[test]
    fn k_diagnostic_constant_solution_is_noise() {
        let e = engine((1.0, 2.0), 10, 81);
        let phi = StateField::constant(e.spatial_grid().clone(), 1.0, 2.5).unwrap();
        let spec = GeneratorSpec::zero();
        let sol = solve_gbsde(&e, &phi, &spec).unwrap();
        let diag = pathwise_k_diagnostic(&e, &sol, &spec, 1.5, 5_000, 11).unwrap();
        assert!(diag.mean_kt.abs() <= 1e-12, "{diag:?}");
        assert!(pathwise_k_diagnostic(&e, &sol, &spec, 2.5, 100, 1).is_err());
    }

    #[test]
    fn exp_bound_holds_for_bounded_data() {
        let e = engine((1.0, 2.0), 10, 161);
        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
        let spec = GeneratorSpec::zero();
        let sol = solve_gbsde(&e, &phi, &spec).unwrap();
        let beta = GridCurve::constant(e.time_grid().clone(), 0.0).unwrap();
        let rep = exp_bound_check(&e, &sol, &spec, &beta, 0.4, 1.0).unwrap();
        assert!(rep.worst_relative_margin >= -1e-4, "{rep:?}");
    }

    #[test]
    fn exp_bound_trivial_and_quadratic_cases() {
        let e = engine((1.0, 2.0), 10, 161);
        let zero = StateField::constant(e.spatial_grid().clone(), 1.0, 0.0).unwrap();
        let spec = GeneratorSpec::zero();
        let sol = solve_gbsde(&e, &zero, &spec).unwrap();
        let beta = GridCurve::constant(e.time_grid().clone(), 0.0).unwrap();
        let rep = exp_bound_check(&e, &sol, &spec, &beta, 1.0, 1.0).unwrap();
        assert!(rep.worst_relative_margin >= -1e-12);

        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
        let qspec = GeneratorSpec::quadratic(0.0, 0.4, Arc::new(|_, _, z| 0.2 * z * z));
        let qsol = solve_gbsde(&e, &phi, &qspec).unwrap();
        let rep = exp_bound_check(&e, &qsol, &qspec, &beta, 0.4, 1.0).unwrap();
        assert!(rep.worst_relative_margin >= -1e-4, "{rep:?}");

        // y-dependent generators are rejected.
        let yspec = GeneratorSpec::lipschitz(0.1, Arc::new(|_, y, _| 0.1 * y));
        let ysol = solve_gbsde(&e, &phi, &yspec).unwrap();
        assert!(exp_bound_check(&e, &ysol, &yspec, &beta, 0.4, 1.0).is_err());
    }

    #[test]
    fn appendix_stability_identical_and_shifted() {
        let e = engine((1.0, 2.0), 10, 121);
        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
        let f1 = GeneratorSpec::lipschitz(0.2, Arc::new(|_, y, _| -0.2 * y));
        let f2 = GeneratorSpec::lipschitz(0.3, Arc::new(|_, y, _| -0.2 * y + 0.1));
        let s1 = solve_gbsde(&e, &phi, &f1).unwrap();
        let s2 = solve_gbsde(&e, &phi, &f2).unwrap();

        let same = appendix_stability_check(&e, &s1, &f1, &s1, &f1, 2.0).unwrap();
        assert_eq!(same.c_hat, 0.0);

        let rep = appendix_stability_check(&e, &s1, &f1, &s2, &f2, 2.0).unwrap();
        assert!(rep.c_hat.is_finite());
        assert!(rep.c_hat > 0.0);

        // Terminal-shift variant.
        let phi2 = phi.shift(0.1);
        let s3 = solve_gbsde(&e, &phi2, &f1).unwrap();
        let rep = appendix_stability_check(&e, &s1, &f1, &s3, &f1, 2.0).unwrap();
        assert!(rep.c_hat.is_finite() && rep.c_hat > 0.0);
    }

    #[test]
    fn gradient_gap_shrinks_with_the_data_gap() {
        // Perturbation ladder: the integrated squared gradient difference
        // decreases monotonically as the generator difference shrinks.
        let e = engine((1.0, 2.0), 10, 121);
        let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
        let base = GeneratorSpec::lipschitz(0.2, Arc::new(|_, y, _| -0.2 * y));
        let s_base = solve_gbsde(&e, &phi, &base).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.4, 0.2, 0.1, 0.05] {
            let pert = GeneratorSpec::lipschitz(
                0.2 + eps,
                Arc::new(move |_, y: f64, z: f64| -0.2 * y + eps * z.tanh()),
            );
            let s_p = solve_gbsde(&e, &phi, &pert).unwrap();
            let mut total = 0.0;
            for i in 0..e.time_grid().len() {
                let d = s_base.gradients[i].sub(&s_p.gradients[i]).unwrap();
                let sq = d.map(|_, v| v * v).unwrap();
                total += e.gexp(&sq).unwrap() * e.time_grid().dt();
            }
            assert!(total < last, "ladder not monotone: {total} !< {last}");
            last = total;
        }
    }
}
