//! Picard fixed-point solvers for doubly mean-reflected G-BSDE systems.
//!
//! One sweep freezes the solution vector inside the generators, solves each
//! component's unreflected G-BSDE with the gradient argument live, and
//! reflects the result between its barriers at the expectation level.
//! Iteration stops when the sup-over-nodes `E^[|difference|]` metric falls
//! below the tolerance. Windowed mode partitions `[0, T]` backward and runs
//! the same map window by window with the converged future frozen, which is
//! the concatenation the contraction argument uses; global iteration is the
//! default and treats the whole horizon as one window.
//!
//! The quadratic-unbounded regime is only ever solved through a truncation
//! schedule and its solutions are labelled stabilized, never certified.

use crate::bsde::{solve_markovian_range, GeneratorKind, SolveOptions};
use crate::error::{Error, Result};
use crate::gexp::{GEngine, StateField};
use crate::grid::{Band, BVPath, GridCurve, Regularity};
use crate::reflect::{
    apriori_r_bound, reflect_indexed, LossFunction, RangeReflection, ReflectCert, ReflectOptions,
    ReflectedCurve,
};
use std::sync::Arc;

/// Well-posedness regime of the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Lipschitz,
    QuadraticBounded,
    QuadraticUnbounded,
}

/// Component driver `f^j(t, y, z^j)` over the full solution vector `y` and
/// the component's own gradient.
#[derive(Clone)]
pub struct DmrGenerator {
    pub kind: GeneratorKind,
    f: Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for DmrGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DmrGenerator").field("kind", &self.kind).finish()
    }
}

impl DmrGenerator {
    pub fn new(kind: GeneratorKind, f: Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>) -> Self {
        DmrGenerator { kind, f }
    }

    /// Scalar driver depending on its own component only.
    pub fn scalar(kind: GeneratorKind, f: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>) -> Self {
        DmrGenerator {
            kind,
            f: Arc::new(move |t, y, z| f(t, y[0], z)),
        }
    }

    pub fn zero() -> Self {
        DmrGenerator::scalar(GeneratorKind::Lipschitz { l: 0.0 }, Arc::new(|_, _, _| 0.0))
    }

    pub fn eval(&self, t: f64, y: &[f64], z: f64) -> f64 {
        (self.f)(t, y, z)
    }
}

/// One component of the system: terminal datum, driver, loss, barriers.
#[derive(Debug, Clone)]
pub struct DmrComponent {
    pub terminal: StateField,
    pub generator: DmrGenerator,
    pub loss: LossFunction,
    pub band: Band,
}

/// Full problem description.
#[derive(Debug, Clone)]
pub struct DmrProblem {
    pub components: Vec<DmrComponent>,
    pub regime: Regime,
}

impl DmrProblem {
    pub fn scalar(
        terminal: StateField,
        generator: DmrGenerator,
        loss: LossFunction,
        band: Band,
        regime: Regime,
    ) -> Self {
        DmrProblem {
            components: vec![DmrComponent {
                terminal,
                generator,
                loss,
                band,
            }],
            regime,
        }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }
}

/// Iteration controls.
#[derive(Debug, Clone)]
pub struct PicardOptions {
    pub max_iters: usize,
    /// Stopping tolerance in the sup-node `E^[| . |]` metric.
    pub tol: f64,
    /// Window length; `None` iterates globally.
    pub window: Option<f64>,
    /// Constant initial guess (the default 0 matches the iteration the
    /// existence proofs start from).
    pub initial_offset: f64,
    pub reflect: ReflectOptions,
    pub solve: SolveOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            max_iters: 25,
            tol: 1e-8,
            window: None,
            initial_offset: 0.0,
            reflect: ReflectOptions::default(),
            solve: SolveOptions::default(),
        }
    }
}

/// How much trust the run earned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionLabel {
    /// Converged and every certification margin passed.
    Certified,
    /// Produced through a stabilizing truncation schedule; the limit object
    /// itself is not certifiable on a truncated domain.
    Stabilized,
    /// Converged but at least one certification margin failed.
    Uncertified,
}

/// Per-component output.
#[derive(Debug, Clone)]
pub struct ComponentSolution {
    /// Reflected value fields `Y^j(t_i, .)`.
    pub values: Vec<StateField>,
    /// Gradient fields `Z^j(t_i, .)`.
    pub gradients: Vec<StateField>,
    /// Shift trace `rho_t = R_T - R_t`.
    pub rho: GridCurve,
    pub regulator: BVPath,
    /// Constraint trace `E^[hbar^j(t, Y^j_t)]`.
    pub trace: GridCurve,
    /// Unreflected input trace `E^[Yb^j_t]` (effective global input).
    pub ybar_trace: GridCurve,
    /// Effective global unreflected fields (`Y - rho`).
    pub ybar_fields: Vec<StateField>,
    pub cert: ReflectCert,
    /// Worst margin of the a priori reflection bound.
    pub apriori_margin: f64,
}

impl ComponentSolution {
    pub fn as_reflected_curve(&self, engine: &GEngine) -> ReflectedCurve {
        let tgrid = engine.time_grid().clone();
        ReflectedCurve {
            rho: self.rho.clone(),
            regulator: self.regulator.clone(),
            fields: self.values.clone(),
            trace: self.trace.clone(),
            ybar_trace: self.ybar_trace.clone(),
            lower_op: GridCurve::constant(tgrid.clone(), 0.0).unwrap(),
            upper_op: GridCurve::constant(tgrid, 0.0).unwrap(),
            cert: self.cert.clone(),
        }
    }
}

/// Solver output: components, convergence history and certification label.
#[derive(Debug, Clone)]
pub struct DmrSolution {
    pub components: Vec<ComponentSolution>,
    /// Per-sweep distances, all windows concatenated.
    pub history: Vec<f64>,
    /// Per-window per-sweep distances.
    pub window_history: Vec<Vec<f64>>,
    /// Cheap sup-norm distances (not used for stopping).
    pub proxy_history: Vec<f64>,
    pub iterations: usize,
    /// `(1 + C) * L * h_window` with `C = 1 + 2 c_upper / c_lower`: the
    /// contraction coefficient the rate bookkeeping compares against.
    pub contraction_bound: f64,
    pub label: SolutionLabel,
}

impl DmrSolution {
    pub fn value_at_origin(&self, engine: &GEngine, component: usize, node: usize) -> f64 {
        self.components[component].values[node].value_at(engine.zero_index())
    }

    pub fn all_certs_pass(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.cert.passes() && c.apriori_margin >= -1e-6)
    }
}

fn validate_problem(engine: &GEngine, problem: &DmrProblem) -> Result<()> {
    if problem.components.is_empty() {
        return Err(Error::InvalidInput("problem has no components".into()));
    }
    let tgrid = engine.time_grid();
    for (j, comp) in problem.components.iter().enumerate() {
        if !comp.band.grid().same_grid(tgrid) {
            return Err(Error::InvalidInput(format!(
                "component {j}: barriers live on a different time grid"
            )));
        }
        if (comp.terminal.t() - tgrid.horizon()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "component {j}: terminal field is not at the horizon"
            )));
        }
        // Terminal admissibility per component.
        let n = tgrid.len();
        let t_term = tgrid.horizon();
        let hbar_term = comp
            .terminal
            .map(|_, v| comp.loss.eval(t_term, v))?;
        let e_term = engine.gexp(&hbar_term)?;
        let (l_t, u_t) = (comp.band.lower().value(n - 1), comp.band.upper().value(n - 1));
        if e_term < l_t - 1e-6 || e_term > u_t + 1e-6 {
            return Err(Error::InvalidInput(format!(
                "component {j}: terminal datum inadmissible, E^[hbar(T, xi)] = {e_term} \
                 outside [{l_t}, {u_t}]"
            )));
        }
    }
    // Shared loss constants in the multi-dimensional case.
    if problem.dimension() > 1 {
        let first = &problem.components[0].loss;
        if !problem.components.iter().all(|c| c.loss.same_constants(first)) {
            return Err(Error::InvalidInput(
                "multi-dimensional systems need shared loss constants across components".into(),
            ));
        }
    }
    Ok(())
}

fn contraction_bound(problem: &DmrProblem, h_window: f64) -> f64 {
    let c = problem
        .components
        .iter()
        .map(|c| 1.0 + 2.0 * c.loss.c_upper() / c.loss.c_lower())
        .fold(0.0f64, f64::max);
    let l = problem
        .components
        .iter()
        .map(|c| c.generator.kind.y_rate())
        .fold(0.0f64, f64::max);
    (1.0 + c) * l * h_window
}

/// Distance `sup_nodes E^[|a - b|]` between two field sequences.
fn field_distance(engine: &GEngine, a: &[StateField], b: &[StateField]) -> Result<(f64, f64)> {
    let mut dist = 0.0f64;
    let mut proxy = 0.0f64;
    for (fa, fb) in a.iter().zip(b) {
        let diff = fa.sub(fb)?.abs();
        proxy = proxy.max(diff.max_norm());
        dist = dist.max(engine.gexp(&diff)?);
    }
    Ok((dist, proxy))
}

struct WindowOutcome {
    /// Per-component reflection over the window range.
    reflections: Vec<RangeReflection>,
    /// Per-component unreflected window fields.
    ybar: Vec<Vec<StateField>>,
    /// Per-component gradient fields over the window range.
    gradients: Vec<Vec<StateField>>,
    history: Vec<f64>,
    proxy: Vec<f64>,
}

/// Runs the Picard map on nodes `[i_lo, i_hi]` with the given terminal fields
/// (one per component, at node `i_hi`) until the distance drops below `tol`.
fn window_pass(
    engine: &GEngine,
    problem: &DmrProblem,
    terminals: &[StateField],
    i_lo: usize,
    i_hi: usize,
    start: &[Vec<StateField>],
    opts: &PicardOptions,
) -> Result<WindowOutcome> {
    let n_comp = problem.dimension();
    let width = i_hi - i_lo + 1;
    let mut frozen: Vec<Vec<StateField>> = start.to_vec();
    let mut history = Vec::new();
    let mut proxy_hist = Vec::new();

    for sweep in 1..=opts.max_iters {
        let mut reflections = Vec::with_capacity(n_comp);
        let mut ybar_all = Vec::with_capacity(n_comp);
        let mut grads_all = Vec::with_capacity(n_comp);
        let mut new_fields: Vec<Vec<StateField>> = Vec::with_capacity(n_comp);
        for j in 0..n_comp {
            let comp = &problem.components[j];
            let quadratic = matches!(comp.generator.kind, GeneratorKind::Quadratic { .. });
            let z_clip = opts.solve.z_clip;
            let frozen_ref = &frozen;
            let gen = &comp.generator;
            let mut yvec = vec![0.0; n_comp];
            let mut drift = |i_right: usize, tau: f64, jx: usize, _y: f64, z: f64| {
                for (c, slot) in yvec.iter_mut().enumerate() {
                    *slot = frozen_ref[c][i_right - i_lo].value_at(jx);
                }
                let z_used = if quadratic { z.clamp(-z_clip, z_clip) } else { z };
                gen.eval(tau, &yvec, z_used)
            };
            let inner = solve_markovian_range(
                engine,
                &terminals[j],
                i_lo,
                i_hi,
                &opts.solve,
                &mut drift,
            )?;
            let refl = reflect_indexed(
                engine,
                &comp.loss,
                &comp.band,
                &inner.values,
                i_lo,
                &opts.reflect,
            )?;
            new_fields.push(refl.fields.clone());
            reflections.push(refl);
            ybar_all.push(inner.values);
            grads_all.push(inner.gradients);
        }

        let mut dist = 0.0f64;
        let mut proxy = 0.0f64;
        for j in 0..n_comp {
            let (d, p) = field_distance(engine, &new_fields[j], &frozen[j])?;
            dist = dist.max(d);
            proxy = proxy.max(p);
        }
        history.push(dist);
        proxy_hist.push(proxy);
        frozen = new_fields;
        if dist < opts.tol {
            return Ok(WindowOutcome {
                reflections,
                ybar: ybar_all,
                gradients: grads_all,
                history,
                proxy: proxy_hist,
            });
        }
        let _ = sweep;
        let _ = width;
    }
    Err(Error::NonConvergence {
        iters: opts.max_iters,
        residual: *history.last().unwrap_or(&f64::INFINITY),
        history,
    })
}

fn assemble(
    engine: &GEngine,
    problem: &DmrProblem,
    windows: &[(usize, usize, WindowOutcome)],
    history: Vec<f64>,
    proxy_history: Vec<f64>,
    window_history: Vec<Vec<f64>>,
    bound: f64,
) -> Result<DmrSolution> {
    let tgrid = engine.time_grid().clone();
    let n = tgrid.len();
    let n_comp = problem.dimension();
    let iterations = history.len();

    let mut components = Vec::with_capacity(n_comp);
    for j in 0..n_comp {
        let mut rho = vec![0.0; n];
        let mut values: Vec<Option<StateField>> = vec![None; n];
        let mut gradients: Vec<Option<StateField>> = vec![None; n];
        let mut trace = vec![0.0; n];
        let mut ybar_trace = vec![0.0; n];
        let mut ybar_fields: Vec<Option<StateField>> = vec![None; n];
        let mut lambda = vec![0.0; n];
        let mut upsilon = vec![0.0; n];

        // Windows are ordered latest first; node i_hi of window w equals
        // node i_lo of the previously assembled (later) window, whose values
        // take precedence there. rho accumulates across the seam.
        for (w, (i_lo, i_hi, out)) in windows.iter().enumerate() {
            let refl = &out.reflections[j];
            let offset = rho[*i_hi];
            let owned_hi = if w == 0 { *i_hi } else { *i_hi - 1 };
            for i in *i_lo..=owned_hi {
                let k = i - i_lo;
                rho[i] = refl.rho[k] + offset;
                values[i] = Some(out.reflections[j].fields[k].clone());
                gradients[i] = Some(out.gradients[j][k].clone());
                trace[i] = refl.trace[k];
                ybar_trace[i] = refl.means[k] - offset;
                ybar_fields[i] = Some(out.ybar[j][k].shift(-offset));
                lambda[i] = refl.lambda[k];
                upsilon[i] = refl.upsilon[k];
            }
        }
        let values: Vec<StateField> = values.into_iter().map(|f| f.unwrap()).collect();
        let gradients: Vec<StateField> = gradients.into_iter().map(|f| f.unwrap()).collect();
        let ybar_fields: Vec<StateField> = ybar_fields.into_iter().map(|f| f.unwrap()).collect();

        // Global certification on the assembled arrays.
        let comp = &problem.components[j];
        let epsilon = problem
            .components
            .first()
            .map(|_| tgrid.dt() + engine.spatial_grid().dx())
            .unwrap();
        let cert = crate::reflect::certify(
            &trace,
            comp.band.lower().values(),
            comp.band.upper().values(),
            &rho,
            &lambda,
            &upsilon,
            &ybar_trace,
            epsilon,
            1e-10,
        );

        let rho_curve = GridCurve::new(tgrid.clone(), rho.clone(), Regularity::Continuous)?;
        let regulator = BVPath::from_values(
            tgrid.clone(),
            &rho.iter().map(|r| rho[0] - r).collect::<Vec<_>>(),
        )?;
        let trace_curve = GridCurve::new(tgrid.clone(), trace, Regularity::Continuous)?;
        let ybar_curve = GridCurve::new(tgrid.clone(), ybar_trace, Regularity::Continuous)?;

        let mut comp_sol = ComponentSolution {
            values,
            gradients,
            rho: rho_curve,
            regulator,
            trace: trace_curve,
            ybar_trace: ybar_curve,
            ybar_fields,
            cert,
            apriori_margin: f64::INFINITY,
        };
        let curve = comp_sol.as_reflected_curve(engine);
        let apriori = apriori_r_bound(engine, &comp.loss, &comp.band, &curve, &comp_sol.ybar_fields)?;
        comp_sol.apriori_margin = apriori.worst_margin;
        components.push(comp_sol);
    }

    let label = if components
        .iter()
        .all(|c: &ComponentSolution| c.cert.passes() && c.apriori_margin >= -1e-6)
    {
        SolutionLabel::Certified
    } else {
        SolutionLabel::Uncertified
    };
    Ok(DmrSolution {
        components,
        history,
        window_history,
        proxy_history,
        iterations,
        contraction_bound: bound,
        label,
    })
}

fn solve_core(engine: &GEngine, problem: &DmrProblem, opts: &PicardOptions) -> Result<DmrSolution> {
    validate_problem(engine, problem)?;
    let tgrid = engine.time_grid();
    let n = tgrid.len();
    let n_comp = problem.dimension();

    // Window boundaries, latest first. Global mode is one window.
    let steps_per_window = match opts.window {
        None => n - 1,
        Some(h) => {
            if !(h > 0.0) {
                return Err(Error::InvalidInput("window length must be positive".into()));
            }
            ((h / tgrid.dt()).round() as usize).clamp(1, n - 1)
        }
    };
    let mut bounds = Vec::new();
    let mut hi = n - 1;
    while hi > 0 {
        let lo = hi.saturating_sub(steps_per_window);
        bounds.push((lo, hi));
        hi = lo;
    }

    let h_window = steps_per_window as f64 * tgrid.dt();
    let bound = contraction_bound(problem, h_window);

    let zero_guess = |i_lo: usize, i_hi: usize| -> Vec<Vec<StateField>> {
        (0..n_comp)
            .map(|_| {
                (i_lo..=i_hi)
                    .map(|i| {
                        StateField::constant(
                            engine.spatial_grid().clone(),
                            tgrid.node(i),
                            opts.initial_offset,
                        )
                        .unwrap()
                    })
                    .collect()
            })
            .collect()
    };

    let mut windows: Vec<(usize, usize, WindowOutcome)> = Vec::new();
    let mut history = Vec::new();
    let mut proxy_history = Vec::new();
    let mut window_history = Vec::new();
    let mut terminals: Vec<StateField> = problem
        .components
        .iter()
        .map(|c| c.terminal.clone())
        .collect();
    for &(i_lo, i_hi) in &bounds {
        let start = zero_guess(i_lo, i_hi);
        let out = window_pass(engine, problem, &terminals, i_lo, i_hi, &start, opts)?;
        history.extend(out.history.iter().cloned());
        proxy_history.extend(out.proxy.iter().cloned());
        window_history.push(out.history.clone());
        terminals = (0..n_comp)
            .map(|j| out.reflections[j].fields[0].clone())
            .collect();
        windows.push((i_lo, i_hi, out));
    }

    assemble(
        engine,
        problem,
        &windows,
        history,
        proxy_history,
        window_history,
        bound,
    )
}

/// Scalar Picard solver (Lipschitz or quadratic-bounded regime).
pub fn picard_solve(
    engine: &GEngine,
    problem: &DmrProblem,
    opts: &PicardOptions,
) -> Result<DmrSolution> {
    if problem.dimension() != 1 {
        return Err(Error::InvalidInput(
            "picard_solve is the scalar entry point; use multidim_solve".into(),
        ));
    }
    if problem.regime == Regime::QuadraticUnbounded {
        return Err(Error::InvalidInput(
            "the quadratic-unbounded regime must go through truncated_solve".into(),
        ));
    }
    solve_core(engine, problem, opts)
}

/// Diagonal multi-dimensional solver: each component's driver sees the full
/// frozen vector but only its own gradient.
pub fn multidim_solve(
    engine: &GEngine,
    problem: &DmrProblem,
    opts: &PicardOptions,
) -> Result<DmrSolution> {
    if problem.dimension() < 2 {
        return Err(Error::InvalidInput("multidim_solve needs at least two components".into()));
    }
    if problem.regime == Regime::QuadraticUnbounded {
        return Err(Error::InvalidInput(
            "the quadratic-unbounded regime must go through truncated_solve".into(),
        ));
    }
    solve_core(engine, problem, opts)
}

/// One extra Picard sweep from a converged solution; the returned distance is
/// the fixed-point residual.
pub fn extra_sweep_distance(
    engine: &GEngine,
    problem: &DmrProblem,
    solution: &DmrSolution,
    opts: &PicardOptions,
) -> Result<f64> {
    let n = engine.time_grid().len();
    let start: Vec<Vec<StateField>> = solution
        .components
        .iter()
        .map(|c| c.values.clone())
        .collect();
    let terminals: Vec<StateField> = problem
        .components
        .iter()
        .map(|c| c.terminal.clone())
        .collect();
    let mut one_shot = opts.clone();
    one_shot.max_iters = 1;
    one_shot.tol = f64::INFINITY;
    let out = window_pass(engine, problem, &terminals, 0, n - 1, &start, &one_shot)?;
    Ok(out.history[0])
}

/// Outcome of a truncation schedule.
#[derive(Debug, Clone)]
pub struct TruncationReport {
    pub levels: Vec<f64>,
    /// Distances between consecutive truncated solutions.
    pub distances: Vec<f64>,
    pub stabilized: bool,
}

/// Quadratic-unbounded solve via a truncation schedule: clamp the terminal
/// datum and the generator's base value at each level, solve the bounded
/// problem, and require the successive distances to stabilize. The final
/// answer is the largest-level solution, labelled stabilized.
pub fn truncated_solve(
    engine: &GEngine,
    problem: &DmrProblem,
    m_schedule: &[f64],
    opts: &PicardOptions,
) -> Result<(DmrSolution, TruncationReport)> {
    if problem.dimension() != 1 {
        return Err(Error::InvalidInput("truncation schedules are scalar-only".into()));
    }
    if problem.regime != Regime::QuadraticUnbounded {
        return Err(Error::InvalidInput(
            "truncated_solve expects the quadratic-unbounded regime".into(),
        ));
    }
    if m_schedule.len() < 2 || m_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "need an increasing truncation schedule with at least two levels".into(),
        ));
    }

    let comp = &problem.components[0];
    let mut solutions: Vec<DmrSolution> = Vec::new();
    for &m in m_schedule {
        if !(m > 0.0) {
            return Err(Error::InvalidInput("truncation levels must be positive".into()));
        }
        let clipped_terminal = comp.terminal.map(|_, v| v.clamp(-m, m))?;
        let base_gen = comp.generator.clone();
        let truncated_gen = DmrGenerator::new(
            base_gen.kind,
            Arc::new(move |t, y: &[f64], z| {
                let base = base_gen.eval(t, &[0.0], 0.0);
                base_gen.eval(t, y, z) - base + base.clamp(-m, m)
            }),
        );
        let sub = DmrProblem::scalar(
            clipped_terminal,
            truncated_gen,
            comp.loss.clone(),
            comp.band.clone(),
            Regime::QuadraticBounded,
        );
        solutions.push(solve_core(engine, &sub, opts)?);
    }

    let mut distances = Vec::new();
    for w in solutions.windows(2) {
        let (d, _) = field_distance(
            engine,
            &w[0].components[0].values,
            &w[1].components[0].values,
        )?;
        distances.push(d);
    }
    let stabilized = distances.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let report = TruncationReport {
        levels: m_schedule.to_vec(),
        distances: distances.clone(),
        stabilized,
    };
    if !stabilized {
        return Err(Error::InconclusiveTruncation(format!(
            "successive distances {distances:?} are not decreasing over levels {m_schedule:?}"
        )));
    }
    let mut last = solutions.pop().unwrap();
    last.label = SolutionLabel::Stabilized;
    Ok((last, report))
}
