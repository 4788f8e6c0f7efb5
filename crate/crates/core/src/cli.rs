//! Run orchestration and CSV emission for the command-line interface.
//!
//! Output schemas are fixed (column names, ordering, 12 significant digits),
//! so identical configurations and seeds give byte-identical files.

use crate::config::{CurveSpec, RunConfig, SkorokhodDirection};
use crate::dmr::{multidim_solve, picard_solve, truncated_solve, DmrSolution, SolutionLabel};
use crate::error::{Error, Result};
use crate::expr::EvalCtx;
use crate::gexp::{classical_expectation, scenario_lower_bound, StateField};
use crate::grid::{GridCurve, Regularity};
use crate::reflect::ReflectOptions;
use crate::rng::SplitRng;
use crate::skorokhod::{backward_skorokhod, check_minimality, forward_skorokhod};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// 12 significant digits, stable across runs.
pub fn fmt_g(v: f64) -> String {
    format!("{v:.11e}")
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

/// G-expectation sweep: one row per grid node with the sublinear value and
/// its classical/scenario companions.
pub fn cmd_gexp(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let engine = cfg.engine()?;
    let payoff = cfg
        .payoff
        .as_ref()
        .ok_or_else(|| Error::Config("gexp needs a 'payoff' expression".into()))?;
    let sigmas = cfg
        .sigmas
        .clone()
        .unwrap_or_else(|| vec![cfg.sigma_lower, cfg.sigma_upper]);

    let mut out = String::from("t,gexp,classical_lower,classical_upper,scenario_lower_bound\n");
    for (i, &t) in engine.time_grid().nodes().iter().enumerate() {
        let _ = i;
        let field = StateField::from_fn(engine.spatial_grid().clone(), t, |x| {
            payoff.eval(&EvalCtx::for_payoff(x))
        })?;
        let ge = engine.gexp(&field)?;
        let cl = classical_expectation(&field, cfg.sigma_lower)?;
        let cu = classical_expectation(&field, cfg.sigma_upper)?;
        let sc = scenario_lower_bound(&field, &sigmas, engine.band())?;
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_g(t),
            fmt_g(ge),
            fmt_g(cl),
            fmt_g(cu),
            fmt_g(sc)
        )
        .unwrap();
    }
    write_file(out_dir, "gexp.csv", &out)
}

/// Deterministic Skorokhod solve of a configured input curve, with the
/// certification block appended as comment lines.
pub fn cmd_skorokhod(cfg: &RunConfig, out_dir: &Path, base_dir: Option<&Path>) -> Result<PathBuf> {
    let tgrid = cfg.time_grid()?;
    let band = cfg.band_from(&tgrid, &cfg.lower, &cfg.upper, &cfg.barrier_file, base_dir)?;
    let direction = cfg
        .direction
        .ok_or_else(|| Error::Config("skorokhod needs a 'direction'".into()))?;
    let curve_spec = cfg
        .curve
        .as_ref()
        .ok_or_else(|| Error::Config("skorokhod needs a 'curve'".into()))?;

    let xbar = match curve_spec {
        CurveSpec::Expr(e) => GridCurve::from_fn(tgrid.clone(), |t| e.eval(&EvalCtx::for_curve(t)))?,
        CurveSpec::Random => {
            let mut rng = SplitRng::new(cfg.seed).split(0x5b0c);
            let mut vals = Vec::with_capacity(tgrid.len());
            let mut v = 0.5 * (band.lower().value(0) + band.upper().value(0));
            vals.push(v);
            for _ in 1..tgrid.len() {
                v = (v + (rng.uniform() - 0.5) * 1.2).clamp(-2.0, 2.0);
                vals.push(v);
            }
            GridCurve::new(tgrid.clone(), vals, Regularity::Continuous)?
        }
    };

    let sol = match direction {
        SkorokhodDirection::Forward => forward_skorokhod(&xbar, &band)?,
        SkorokhodDirection::Backward => backward_skorokhod(&xbar, cfg.anchor, &band)?,
    };
    let report = check_minimality(&sol, &xbar, &band, 1e-10);

    let mut out = String::from("t,xbar,l,u,x,k,tv\n");
    let kv = sol.k.values();
    for i in 0..tgrid.len() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_g(tgrid.node(i)),
            fmt_g(xbar.value(i)),
            fmt_g(band.lower().value(i)),
            fmt_g(band.upper().value(i)),
            fmt_g(sol.x.value(i)),
            fmt_g(kv[i]),
            fmt_g(sol.k.total_variation_at(i))
        )
        .unwrap();
    }
    writeln!(out, "# lower_sum = {}", fmt_g(report.lower_sum)).unwrap();
    writeln!(out, "# upper_sum = {}", fmt_g(report.upper_sum)).unwrap();
    writeln!(out, "# sign_up_violation = {}", fmt_g(report.sign_up_violation)).unwrap();
    writeln!(out, "# sign_down_violation = {}", fmt_g(report.sign_down_violation)).unwrap();
    writeln!(out, "# decomposition_residual = {}", fmt_g(report.decomposition_residual)).unwrap();
    writeln!(out, "# containment_violation = {}", fmt_g(report.containment_violation)).unwrap();
    writeln!(out, "# eval_agreement = {}", fmt_g(sol.eval_agreement)).unwrap();
    writeln!(out, "# minimality = {}", if report.passes() { "pass" } else { "FAIL" }).unwrap();
    write_file(out_dir, "skorokhod.csv", &out)
}

/// Everything `cmd_solve` leaves on disk, plus the pass/fail verdict.
pub struct SolveOutcome {
    pub solution: DmrSolution,
    pub files: Vec<PathBuf>,
    pub all_pass: bool,
}

/// Full reflected-system solve: per-component trace files, the Picard
/// history and a certification summary. The caller maps `all_pass` to the
/// process exit code.
pub fn cmd_solve(cfg: &RunConfig, out_dir: &Path, base_dir: Option<&Path>) -> Result<SolveOutcome> {
    let engine = cfg.engine()?;
    let problem = cfg.dmr_problem(&engine, base_dir)?;
    let mut opts = crate::dmr::PicardOptions::default();
    opts.max_iters = cfg.max_iters;
    opts.tol = cfg.tol;
    opts.window = cfg.window;
    opts.reflect = ReflectOptions::default();

    let (solution, truncation) = match problem.regime {
        crate::dmr::Regime::QuadraticUnbounded => {
            if cfg.truncation_schedule.len() < 2 {
                return Err(Error::Config(
                    "the quadratic-unbounded regime needs a truncation_schedule".into(),
                ));
            }
            let (sol, rep) = truncated_solve(&engine, &problem, &cfg.truncation_schedule, &opts)?;
            (sol, Some(rep))
        }
        _ => {
            let sol = if problem.dimension() == 1 {
                picard_solve(&engine, &problem, &opts)?
            } else {
                multidim_solve(&engine, &problem, &opts)?
            };
            (sol, None)
        }
    };

    let tgrid = engine.time_grid();
    let mut files = Vec::new();
    for (j, comp) in solution.components.iter().enumerate() {
        let band = &problem.components[j].band;
        let mut out = String::from("t,E_hbar,l,u,rho,TV_R,Y0,Z0\n");
        for i in 0..tgrid.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt_g(tgrid.node(i)),
                fmt_g(comp.trace.value(i)),
                fmt_g(band.lower().value(i)),
                fmt_g(band.upper().value(i)),
                fmt_g(comp.rho.value(i)),
                fmt_g(comp.regulator.total_variation_at(i)),
                fmt_g(comp.values[i].value_at(engine.zero_index())),
                fmt_g(comp.gradients[i].value_at(engine.zero_index()))
            )
            .unwrap();
        }
        files.push(write_file(out_dir, &format!("trace_{}.csv", j + 1), &out)?);
    }

    let mut picard = String::from("iter,distance\n");
    for (k, d) in solution.history.iter().enumerate() {
        writeln!(picard, "{},{}", k + 1, fmt_g(*d)).unwrap();
    }
    files.push(write_file(out_dir, "picard.csv", &picard)?);

    let mut cert = String::new();
    writeln!(cert, "label = {:?}", solution.label).unwrap();
    writeln!(cert, "iterations = {}", solution.iterations).unwrap();
    writeln!(cert, "contraction_bound = {}", fmt_g(solution.contraction_bound)).unwrap();
    if let Some(rep) = &truncation {
        writeln!(cert, "truncation_levels = {:?}", rep.levels).unwrap();
        let d: Vec<String> = rep.distances.iter().map(|v| fmt_g(*v)).collect();
        writeln!(cert, "truncation_distances = [{}]", d.join(", ")).unwrap();
        writeln!(cert, "truncation_stabilized = {}", rep.stabilized).unwrap();
    }
    for (j, comp) in solution.components.iter().enumerate() {
        writeln!(cert, "[component {}]", j + 1).unwrap();
        writeln!(cert, "minimality_lower = {}", fmt_g(comp.cert.minimality_lower)).unwrap();
        writeln!(cert, "minimality_upper = {}", fmt_g(comp.cert.minimality_upper)).unwrap();
        writeln!(cert, "band_violation = {}", fmt_g(comp.cert.band_violation)).unwrap();
        writeln!(cert, "band_epsilon = {}", fmt_g(comp.cert.epsilon)).unwrap();
        writeln!(cert, "flat_off_band = {}", fmt_g(comp.cert.flat_off_band)).unwrap();
        writeln!(cert, "equivalence_mismatches = {}", comp.cert.equivalence_mismatches).unwrap();
        writeln!(cert, "apriori_margin = {}", fmt_g(comp.apriori_margin)).unwrap();
        writeln!(cert, "total_variation = {}", fmt_g(comp.regulator.total_variation_at(tgrid.n_steps()))).unwrap();
        writeln!(cert, "passes = {}", comp.cert.passes() && comp.apriori_margin >= -1e-6).unwrap();
    }
    let all_pass = solution.all_certs_pass()
        && (solution.label == SolutionLabel::Certified
            || solution.label == SolutionLabel::Stabilized);
    writeln!(cert, "all_pass = {all_pass}").unwrap();
    files.push(write_file(out_dir, "cert.txt", &cert)?);

    Ok(SolveOutcome {
        solution,
        files,
        all_pass,
    })
}
