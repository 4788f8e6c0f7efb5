//! Python bindings: the G-expectation engine, the two-barrier Skorokhod
//! maps and the reflected-system solver, driven by the same expression and
//! configuration formats as the CLI.

use gbsde::cli::fmt_g;
use gbsde::config::RunConfig;
use gbsde::expr::{parse_expr, EvalCtx};
use gbsde::gexp::{
    classical_expectation, scenario_lower_bound, GEngine, SpatialGrid, StateField, VolatilityBand,
};
use gbsde::grid::{make_grid, Band, GridCurve, Regularity};
use gbsde::skorokhod::{backward_skorokhod, check_minimality, forward_skorokhod};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: gbsde::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// `G(a) = (sigma_upper^2 a^+ - sigma_lower^2 a^-) / 2`.
#[pyfunction]
fn g_function(a: f64, sigma_lower: f64, sigma_upper: f64) -> PyResult<f64> {
    let band = VolatilityBand::new(sigma_lower, sigma_upper).map_err(err)?;
    Ok(gbsde::gexp::g_function(a, &band))
}

/// Sublinear expectation engine over a uniform time/space grid.
#[pyclass]
struct Engine {
    inner: GEngine,
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (sigma_lower, sigma_upper, horizon, n_t, m_points, x_half=None, c_cfl=0.45))]
    fn new(
        sigma_lower: f64,
        sigma_upper: f64,
        horizon: f64,
        n_t: usize,
        m_points: usize,
        x_half: Option<f64>,
        c_cfl: f64,
    ) -> PyResult<Self> {
        let band = VolatilityBand::new(sigma_lower, sigma_upper).map_err(err)?;
        let tgrid = make_grid(horizon, n_t).map_err(err)?;
        let half = x_half.unwrap_or(8.0 * sigma_upper * horizon.sqrt());
        let sgrid = SpatialGrid::symmetric(half, m_points).map_err(err)?;
        let inner = GEngine::new(band, sgrid, tgrid, c_cfl).map_err(err)?;
        Ok(Engine { inner })
    }

    /// Spatial nodes of the state grid.
    fn x_nodes(&self) -> Vec<f64> {
        (0..self.inner.spatial_grid().len())
            .map(|j| self.inner.spatial_grid().x(j))
            .collect()
    }

    fn t_nodes(&self) -> Vec<f64> {
        self.inner.time_grid().nodes().to_vec()
    }

    /// `E^[phi(B_t)]` for a payoff expression in `x`.
    fn gexp(&self, payoff: &str, t: f64) -> PyResult<f64> {
        let e = parse_expr(payoff).map_err(err)?;
        let field = StateField::from_fn(self.inner.spatial_grid().clone(), t, |x| {
            e.eval(&EvalCtx::for_payoff(x))
        })
        .map_err(err)?;
        self.inner.gexp(&field).map_err(err)
    }

    /// `E^[phi(B_t)]` for nodal payoff values.
    fn gexp_values(&self, values: Vec<f64>, t: f64) -> PyResult<f64> {
        let field =
            StateField::new(self.inner.spatial_grid().clone(), t, values).map_err(err)?;
        self.inner.gexp(&field).map_err(err)
    }

    /// Conditional value field `E^_s[phi(B_t)]` as nodal values at time `s`.
    fn solve_gheat(&self, values: Vec<f64>, t: f64, back_to: f64) -> PyResult<Vec<f64>> {
        let field =
            StateField::new(self.inner.spatial_grid().clone(), t, values).map_err(err)?;
        let out = self.inner.solve_gheat(&field, back_to).map_err(err)?;
        Ok(out.values().to_vec())
    }

    /// Classical single-volatility expectation of a payoff expression.
    fn classical(&self, payoff: &str, sigma: f64, t: f64) -> PyResult<f64> {
        let e = parse_expr(payoff).map_err(err)?;
        let field = StateField::from_fn(self.inner.spatial_grid().clone(), t, |x| {
            e.eval(&EvalCtx::for_payoff(x))
        })
        .map_err(err)?;
        classical_expectation(&field, sigma).map_err(err)
    }

    /// Best lower bound over a finite family of scenario volatilities.
    fn scenario_lower_bound(&self, payoff: &str, sigmas: Vec<f64>, t: f64) -> PyResult<f64> {
        let e = parse_expr(payoff).map_err(err)?;
        let field = StateField::from_fn(self.inner.spatial_grid().clone(), t, |x| {
            e.eval(&EvalCtx::for_payoff(x))
        })
        .map_err(err)?;
        scenario_lower_bound(&field, &sigmas, self.inner.band()).map_err(err)
    }
}

fn curves_from(
    horizon: f64,
    xbar: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
) -> PyResult<(GridCurve, Band)> {
    if xbar.len() < 2 || xbar.len() != l.len() || xbar.len() != u.len() {
        return Err(PyValueError::new_err(
            "xbar, l and u need equal lengths (>= 2 nodes)",
        ));
    }
    let grid = make_grid(horizon, xbar.len() - 1).map_err(err)?;
    let xc = GridCurve::new(grid.clone(), xbar, Regularity::Continuous).map_err(err)?;
    let band = Band::new(
        GridCurve::new(grid.clone(), l, Regularity::Continuous).map_err(err)?,
        GridCurve::new(grid, u, Regularity::Continuous).map_err(err)?,
    )
    .map_err(err)?;
    Ok((xc, band))
}

fn skorokhod_dict<'py>(
    py: Python<'py>,
    sol: &gbsde::skorokhod::SkorokhodSolution,
    xbar: &GridCurve,
    band: &Band,
) -> PyResult<Bound<'py, PyDict>> {
    let report = check_minimality(sol, xbar, band, 1e-10);
    let d = PyDict::new_bound(py);
    d.set_item("x", sol.x.values().to_vec())?;
    d.set_item("k", sol.k.values())?;
    d.set_item("eval_agreement", sol.eval_agreement)?;
    d.set_item("minimality_pass", report.passes())?;
    d.set_item("lower_sum", report.lower_sum)?;
    d.set_item("upper_sum", report.upper_sum)?;
    Ok(d)
}

/// Forward two-barrier Skorokhod map on a uniform grid over `[0, horizon]`.
#[pyfunction]
fn skorokhod_forward<'py>(
    py: Python<'py>,
    xbar: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
    horizon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (xc, band) = curves_from(horizon, xbar, l, u)?;
    let sol = forward_skorokhod(&xc, &band).map_err(err)?;
    skorokhod_dict(py, &sol, &xc, &band)
}

/// Backward two-barrier Skorokhod map anchored at `a`.
#[pyfunction]
fn skorokhod_backward<'py>(
    py: Python<'py>,
    xbar: Vec<f64>,
    a: f64,
    l: Vec<f64>,
    u: Vec<f64>,
    horizon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (xc, band) = curves_from(horizon, xbar, l, u)?;
    let sol = backward_skorokhod(&xc, a, &band).map_err(err)?;
    skorokhod_dict(py, &sol, &xc, &band)
}

/// Solve a doubly mean-reflected system from the CLI configuration text.
/// Returns the per-component traces, the Picard history and the label.
#[pyfunction]
fn solve<'py>(py: Python<'py>, config_text: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::from_text(config_text).map_err(err)?;
    let engine = cfg.engine().map_err(err)?;
    let problem = cfg.dmr_problem(&engine, None).map_err(err)?;
    let mut opts = gbsde::dmr::PicardOptions::default();
    opts.max_iters = cfg.max_iters;
    opts.tol = cfg.tol;
    opts.window = cfg.window;
    let solution = match problem.regime {
        gbsde::dmr::Regime::QuadraticUnbounded => {
            let (sol, _rep) = gbsde::dmr::truncated_solve(
                &engine,
                &problem,
                &cfg.truncation_schedule,
                &opts,
            )
            .map_err(err)?;
            sol
        }
        _ if problem.dimension() == 1 => {
            gbsde::dmr::picard_solve(&engine, &problem, &opts).map_err(err)?
        }
        _ => gbsde::dmr::multidim_solve(&engine, &problem, &opts).map_err(err)?,
    };

    let out = PyDict::new_bound(py);
    out.set_item("t", engine.time_grid().nodes().to_vec())?;
    out.set_item("history", solution.history.clone())?;
    out.set_item("iterations", solution.iterations)?;
    out.set_item("label", format!("{:?}", solution.label))?;
    out.set_item("all_pass", solution.all_certs_pass())?;
    let comps = pyo3::types::PyList::empty_bound(py);
    let zero = engine.zero_index();
    for comp in &solution.components {
        let d = PyDict::new_bound(py);
        d.set_item("rho", comp.rho.values().to_vec())?;
        d.set_item("trace", comp.trace.values().to_vec())?;
        d.set_item(
            "y0",
            comp.values.iter().map(|f| f.value_at(zero)).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "z0",
            comp.gradients.iter().map(|f| f.value_at(zero)).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "total_variation",
            comp.regulator.total_variation_at(engine.time_grid().n_steps()),
        )?;
        d.set_item("cert_pass", comp.cert.passes())?;
        comps.append(d)?;
    }
    out.set_item("components", comps)?;
    Ok(out)
}

/// Run the deterministic self-test; returns `(name, pass, detail)` triples.
#[pyfunction]
#[pyo3(signature = (seed=42))]
fn selftest(seed: u64) -> Vec<(String, bool, String)> {
    gbsde::selftest::run_selftest(seed)
        .into_iter()
        .map(|c| (c.name.to_string(), c.pass, c.detail))
        .collect()
}

/// Format a float the way the CSV emitters do (12 significant digits).
#[pyfunction]
fn format_value(v: f64) -> String {
    fmt_g(v)
}

#[pymodule]
fn gbsde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(g_function, m)?)?;
    m.add_function(wrap_pyfunction!(skorokhod_forward, m)?)?;
    m.add_function(wrap_pyfunction!(skorokhod_backward, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_function(wrap_pyfunction!(format_value, m)?)?;
    Ok(())
}
