//! Desk-scale self-test: one deterministic pass over the library's named
//! invariants, printing a margin per check. Grids are kept small enough for
//! a commodity core; the heavier acceptance suite lives in the test tree.

use crate::bsde::{
    exp_bound_check, pathwise_k_diagnostic, solve_gbsde, GeneratorKind, GeneratorSpec,
};
use crate::dmr::{
    multidim_solve, picard_solve, truncated_solve, DmrComponent, DmrGenerator, DmrProblem,
    PicardOptions, Regime, SolutionLabel,
};
use crate::error::Error;
use crate::gexp::{
    classical_expectation, scenario_lower_bound, GEngine, SpatialGrid, StateField, VolatilityBand,
};
use crate::grid::{make_grid, Band, GridCurve, Regularity, TimeGrid};
use crate::reflect::{
    apriori_r_bound, hbar_mean, invert_barrier, reflect_sublinear, stability_check, LossFunction,
    StabilityInstance,
};
use crate::rng::SplitRng;
use crate::skorokhod::{backward_skorokhod, backward_trace, check_minimality, forward_skorokhod, oracle_skorokhod};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn engine(band: (f64, f64), horizon: f64, n_t: usize, m: usize) -> GEngine {
    let band = VolatilityBand::new(band.0, band.1).unwrap();
    let tgrid = make_grid(horizon, n_t).unwrap();
    let sgrid = SpatialGrid::symmetric(16.0, m).unwrap();
    GEngine::new(band, sgrid, tgrid, 0.45).unwrap()
}

fn const_band(tgrid: &Arc<TimeGrid>, lo: f64, hi: f64) -> Band {
    Band::new(
        GridCurve::constant(tgrid.clone(), lo).unwrap(),
        GridCurve::constant(tgrid.clone(), hi).unwrap(),
    )
    .unwrap()
}

fn random_wander(grid: &Arc<TimeGrid>, rng: &mut SplitRng) -> GridCurve {
    let mut vals = Vec::with_capacity(grid.len());
    let mut v = rng.uniform() * 1.8 - 0.9;
    vals.push(v);
    for _ in 1..grid.len() {
        v = (v + (rng.uniform() - 0.5) * 1.2).clamp(-2.0, 2.0);
        vals.push(v);
    }
    GridCurve::new(grid.clone(), vals, Regularity::Continuous).unwrap()
}

fn skorokhod_checks(seed: u64, out: &mut Vec<Check>) {
    let grid = make_grid(1.0, 32).unwrap();
    let band = const_band(&grid, -1.0, 1.0);
    let mut rng = SplitRng::new(seed).split(1);
    let mut worst_dist = 0.0f64;
    let mut worst_min = 0.0f64;
    for _ in 0..50 {
        let xbar = random_wander(&grid, &mut rng);
        let sol = forward_skorokhod(&xbar, &band).unwrap();
        let oracle = oracle_skorokhod(&xbar, &band, 500, 1e-13).unwrap();
        let dist = sol
            .x
            .values()
            .iter()
            .zip(oracle.x.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_dist = worst_dist.max(dist);
        let rep = check_minimality(&sol, &xbar, &band, 1e-10);
        worst_min = worst_min.max(rep.lower_sum.max(rep.upper_sum));
    }
    out.push(check(
        "skorokhod.oracle_agreement",
        worst_dist <= 1e-9,
        format!("sup distance {worst_dist:.3e} (<= 1e-9)"),
    ));
    out.push(check(
        "skorokhod.minimality_sums",
        worst_min <= 1e-10,
        format!("worst sum {worst_min:.3e} (<= 1e-10)"),
    ));

    let grid = make_grid(1.0, 200).unwrap();
    let xbar = GridCurve::constant(grid.clone(), 0.0).unwrap();
    let band = Band::new(
        GridCurve::from_fn(grid.clone(), |t| 1.0 - t).unwrap(),
        GridCurve::constant(grid.clone(), 2.0).unwrap(),
    )
    .unwrap();
    let sol = backward_skorokhod(&xbar, 0.0, &band).unwrap();
    let trace = backward_trace(&sol);
    let err = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &t)| (trace[i] - (1.0 - t)).abs())
        .fold(0.0, f64::max);
    out.push(check(
        "skorokhod.backward_hand_case",
        err <= 1e-10,
        format!("max error {err:.3e} (<= 1e-10)"),
    ));
}

fn gexp_checks(seed: u64, out: &mut Vec<Check>) {
    let e = engine((1.0, 2.0), 1.0, 25, 401);
    let sq = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x * x).unwrap();
    let v = e.gexp(&sq).unwrap();
    out.push(check(
        "gexp.convex_square",
        (v - 4.0).abs() <= 0.04,
        format!("gexp(x^2) = {v:.6} vs 4 (tol 0.04)"),
    ));
    let nsq = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| -x * x).unwrap();
    let v = e.gexp(&nsq).unwrap();
    out.push(check(
        "gexp.concave_square",
        (v + 1.0).abs() <= 0.01,
        format!("gexp(-x^2) = {v:.6} vs -1 (tol 0.01)"),
    ));
    let relu = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.max(0.0)).unwrap();
    let v = e.gexp(&relu).unwrap();
    let expect = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
    out.push(check(
        "gexp.relu_closed_form",
        (v - expect).abs() <= 0.008,
        format!("gexp(x^+) = {v:.6} vs {expect:.6} (tol 0.008)"),
    ));

    let mut rng = SplitRng::new(seed).split(2);
    let e_small = engine((1.0, 2.0), 1.0, 15, 161);
    let mut worst_hom = 0.0f64;
    let mut worst_tr = 0.0f64;
    let mut worst_sub = f64::NEG_INFINITY;
    let mut worst_mono = f64::NEG_INFINITY;
    for _ in 0..20 {
        let a1 = rng.uniform_in(-1.0, 1.0);
        let b1 = rng.uniform_in(0.3, 1.0);
        let c1 = rng.uniform_in(-2.0, 2.0);
        let a2 = rng.uniform_in(-1.0, 1.0);
        let b2 = rng.uniform_in(0.3, 1.0);
        let phi = StateField::from_fn(e_small.spatial_grid().clone(), 1.0, |x| {
            a1 * (b1 * (x - c1)).tanh()
        })
        .unwrap();
        let psi = StateField::from_fn(e_small.spatial_grid().clone(), 1.0, |x| {
            a2 * (b2 * x).tanh()
        })
        .unwrap();
        let lam = rng.uniform_in(0.0, 3.0);
        let c = rng.uniform_in(-2.0, 2.0);
        let gp = e_small.gexp(&phi).unwrap();
        let gps = e_small.gexp(&psi).unwrap();
        worst_hom = worst_hom
            .max((e_small.gexp(&phi.map(|_, v| lam * v).unwrap()).unwrap() - lam * gp).abs());
        worst_tr = worst_tr.max((e_small.gexp(&phi.shift(c)).unwrap() - (gp + c)).abs());
        let sum = phi
            .map(|x, v| v + psi.grid().interpolate(psi.values(), x))
            .unwrap();
        worst_sub = worst_sub.max(e_small.gexp(&sum).unwrap() - gp - gps);
        worst_mono = worst_mono.max(e_small.gexp(&phi.map(|_, v| v - 0.2).unwrap()).unwrap() - gp);
    }
    out.push(check(
        "gexp.homogeneity",
        worst_hom <= 1e-10,
        format!("worst defect {worst_hom:.3e} (<= 1e-10)"),
    ));
    out.push(check(
        "gexp.translation",
        worst_tr <= 1e-10,
        format!("worst defect {worst_tr:.3e} (<= 1e-10)"),
    ));
    out.push(check(
        "gexp.sublinearity",
        worst_sub <= 2e-3,
        format!("worst excess {worst_sub:.3e} (<= 2e-3)"),
    ));
    out.push(check(
        "gexp.monotonicity",
        worst_mono <= 1e-10,
        format!("worst defect {worst_mono:.3e} (<= 1e-10)"),
    ));

    let e_deg = engine((1.0, 1.0), 1.0, 15, 401);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a1 = rng.uniform_in(-1.0, 1.0);
        let b1 = rng.uniform_in(0.3, 1.0);
        let phi = StateField::from_fn(e_deg.spatial_grid().clone(), 1.0, |x| {
            a1 * (b1 * x).tanh()
        })
        .unwrap();
        worst = worst.max(
            (e_deg.gexp(&phi).unwrap() - classical_expectation(&phi, 1.0).unwrap()).abs(),
        );
    }
    out.push(check(
        "gexp.degenerate_vs_classical",
        worst <= 5e-3,
        format!("worst gap {worst:.3e} (<= 5e-3)"),
    ));

    let relu_low = scenario_lower_bound(&relu, &[1.0, 1.5, 2.0], e.band()).unwrap();
    let ge = e.gexp(&relu).unwrap();
    out.push(check(
        "gexp.scenario_bound",
        relu_low <= ge + 5e-3,
        format!("scenario {relu_low:.6} vs gexp {ge:.6}"),
    ));
}

fn reflect_checks(seed: u64, out: &mut Vec<Check>) {
    let e = engine((1.0, 2.0), 1.0, 10, 81);
    let loss = LossFunction::identity();
    let x_field = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| 0.3 * x).unwrap();
    let mut worst = 0.0f64;
    for target in [-0.5, 0.0, 1.0, 2.0] {
        let root = invert_barrier(&e, &loss, 1.0, &x_field, target).unwrap();
        worst = worst.max((root - target).abs());
    }
    out.push(check(
        "reflect.identity_operators",
        worst <= 1e-8,
        format!("worst |L - l| {worst:.3e} (<= 1e-8)"),
    ));

    let e2 = engine((1.0, 2.0), 1.0, 8, 121);
    let loss2 = LossFunction::sin_perturb(0.5).unwrap();
    let field = StateField::from_fn(e2.spatial_grid().clone(), 1.0, |x| x).unwrap();
    let mut lo_slope = f64::INFINITY;
    let mut hi_slope = f64::NEG_INFINITY;
    for delta in [0.1, 1.0] {
        let mut x = -1.0;
        let mut prev = hbar_mean(&e2, &loss2, 1.0, x, &field).unwrap();
        while x < 1.0 - 1e-9 {
            let next = hbar_mean(&e2, &loss2, 1.0, x + delta, &field).unwrap();
            let s = (next - prev) / delta;
            lo_slope = lo_slope.min(s);
            hi_slope = hi_slope.max(s);
            prev = next;
            x += delta;
        }
    }
    let pass = lo_slope >= loss2.c_lower() - 1e-6 && hi_slope <= loss2.c_upper() + 1e-6;
    out.push(check(
        "reflect.hbar_slope_envelope",
        pass,
        format!(
            "slopes in [{lo_slope:.4}, {hi_slope:.4}] vs [{}, {}]",
            loss2.c_lower(),
            loss2.c_upper()
        ),
    ));

    let mut rng = SplitRng::new(seed).split(3);
    let lip = 2.0 * loss2.c_upper() / loss2.c_lower();
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..10 {
        let a1 = rng.uniform_in(-1.0, 1.0);
        let a2 = rng.uniform_in(-1.0, 1.0);
        let b = rng.uniform_in(0.3, 1.0);
        let f1 =
            StateField::from_fn(e2.spatial_grid().clone(), 1.0, |x| a1 * (b * x).tanh()).unwrap();
        let f2 =
            StateField::from_fn(e2.spatial_grid().clone(), 1.0, |x| a2 * (b * x).tanh()).unwrap();
        let dist = e2.gexp(&f1.sub(&f2).unwrap().abs()).unwrap();
        for target in [-0.3, 0.4] {
            let x1 = invert_barrier(&e2, &loss2, 1.0, &f1, target).unwrap();
            let x2 = invert_barrier(&e2, &loss2, 1.0, &f2, target).unwrap();
            worst_gap = worst_gap.max((x1 - x2).abs() - lip * dist);
        }
    }
    out.push(check(
        "reflect.operator_lipschitz",
        worst_gap <= 1e-6,
        format!("worst excess {worst_gap:.3e} (<= 1e-6)"),
    ));

    // Interior preset: reflection vanishes.
    let e3 = engine((1.0, 1.0), 1.0, 10, 201);
    let term = StateField::from_fn(e3.spatial_grid().clone(), 1.0, |x| x.abs()).unwrap();
    let ybar: Vec<StateField> = e3
        .time_grid()
        .nodes()
        .iter()
        .map(|&t| e3.solve_gheat(&term, t).unwrap())
        .collect();
    let band = const_band(e3.time_grid(), 0.5, 1.0);
    let refl = reflect_sublinear(&e3, &LossFunction::identity(), &band, &ybar).unwrap();
    let tv = refl.regulator.total_variation_at(e3.time_grid().n_steps());
    out.push(check(
        "reflect.interior_flat",
        tv <= 1e-9 && refl.cert.passes(),
        format!("TV(R) = {tv:.3e} (<= 1e-9), cert pass = {}", refl.cert.passes()),
    ));

    // Falling-barrier hand case and the a priori bound.
    let e4 = engine((1.0, 2.0), 1.0, 50, 81);
    let zeros: Vec<StateField> = e4
        .time_grid()
        .nodes()
        .iter()
        .map(|&t| StateField::constant(e4.spatial_grid().clone(), t, 0.0).unwrap())
        .collect();
    let band4 = Band::new(
        GridCurve::from_fn(e4.time_grid().clone(), |t| 1.0 - t).unwrap(),
        GridCurve::constant(e4.time_grid().clone(), 2.0).unwrap(),
    )
    .unwrap();
    let loss4 = LossFunction::identity();
    let refl4 = reflect_sublinear(&e4, &loss4, &band4, &zeros).unwrap();
    let err = e4
        .time_grid()
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &t)| (refl4.rho.value(i) - (1.0 - t)).abs())
        .fold(0.0, f64::max);
    out.push(check(
        "reflect.falling_barrier_hand_case",
        err <= 1e-7,
        format!("max |rho - (1-t)| = {err:.3e} (<= 1e-7)"),
    ));
    let apriori = apriori_r_bound(&e4, &loss4, &band4, &refl4, &zeros).unwrap();
    out.push(check(
        "reflect.apriori_bound",
        apriori.worst_margin >= -1e-6,
        format!("worst margin {:.3e} (>= -1e-6)", apriori.worst_margin),
    ));

    let shifted: Vec<StateField> = zeros.iter().map(|f| f.shift(0.1)).collect();
    let refl4b = reflect_sublinear(&e4, &loss4, &band4, &shifted).unwrap();
    let inst1 = StabilityInstance {
        loss: &loss4,
        band: &band4,
        curve: &refl4,
        ybar: &zeros,
    };
    let inst2 = StabilityInstance {
        loss: &loss4,
        band: &band4,
        curve: &refl4b,
        ybar: &shifted,
    };
    let rep = stability_check(&e4, &inst1, &inst2).unwrap();
    out.push(check(
        "reflect.stability_bound",
        rep.worst_margin >= -1e-6,
        format!("worst margin {:.3e} (>= -1e-6)", rep.worst_margin),
    ));
}

fn bsde_checks(seed: u64, out: &mut Vec<Check>) {
    let e = engine((1.0, 2.0), 1.0, 20, 161);
    let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
    let sol = solve_gbsde(&e, &phi, &GeneratorSpec::zero()).unwrap();
    let gap = (sol.value_at_origin(&e, 0) - e.gexp(&phi).unwrap()).abs();
    out.push(check(
        "bsde.zero_generator_is_gexp",
        gap <= 1e-12,
        format!("gap {gap:.3e} (<= 1e-12)"),
    ));

    let one = StateField::constant(e.spatial_grid().clone(), 1.0, 1.0).unwrap();
    let spec = GeneratorSpec::lipschitz(0.1, Arc::new(|_, y, _| -0.1 * y));
    let sol = solve_gbsde(&e, &one, &spec).unwrap();
    let err = (sol.value_at_origin(&e, 0) - (-0.1f64).exp()).abs();
    out.push(check(
        "bsde.linear_decay_ode",
        err <= 1e-4,
        format!("error {err:.3e} (<= 1e-4)"),
    ));

    let phi2 = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x * x).unwrap();
    let spec0 = GeneratorSpec::zero();
    let sol2 = solve_gbsde(&e, &phi2, &spec0).unwrap();
    let diag = pathwise_k_diagnostic(&e, &sol2, &spec0, 1.0, 4000, seed ^ 0xD1A6).unwrap();
    out.push(check(
        "bsde.k_diagnostic",
        diag.passes() && diag.mean_kt < -3.0 * diag.se_kt,
        format!(
            "mean K_T {:.4} (se {:.4}), argmax mean {:.4} (se {:.4})",
            diag.mean_kt, diag.se_kt, diag.argmax_mean_kt, diag.argmax_se_kt
        ),
    ));

    let qspec = GeneratorSpec::quadratic(0.0, 0.4, Arc::new(|_, _, z| 0.2 * z * z));
    let qsol = solve_gbsde(&e, &phi, &qspec).unwrap();
    let beta = GridCurve::constant(e.time_grid().clone(), 0.0).unwrap();
    let rep = exp_bound_check(&e, &qsol, &qspec, &beta, 0.4, 1.0).unwrap();
    out.push(check(
        "bsde.exp_bound",
        rep.worst_relative_margin >= -1e-4,
        format!("worst relative margin {:.3e} (>= -1e-4)", rep.worst_relative_margin),
    ));
}

fn dmr_checks(out: &mut Vec<Check>) {
    // Lipschitz preset with a binding band.
    let e = engine((1.0, 2.0), 1.0, 25, 101);
    let terminal = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
    let gen = DmrGenerator::scalar(
        GeneratorKind::Lipschitz { l: 0.2 },
        Arc::new(|_, y, z| -0.2 * y + 0.1 * z),
    );
    let band = Band::new(
        GridCurve::from_fn(e.time_grid().clone(), |t| 0.25 - 0.5 * t).unwrap(),
        GridCurve::constant(e.time_grid().clone(), 1.5).unwrap(),
    )
    .unwrap();
    let problem = DmrProblem::scalar(
        terminal.clone(),
        gen,
        LossFunction::identity(),
        band,
        Regime::Lipschitz,
    );
    let opts = PicardOptions::default();
    match picard_solve(&e, &problem, &opts) {
        Ok(sol) => {
            let ratio_bound = sol.contraction_bound + 0.1;
            let worst_ratio = sol
                .history
                .windows(2)
                .skip(1)
                .filter(|w| w[0] > 100.0 * opts.tol)
                .map(|w| w[1] / w[0])
                .fold(0.0f64, f64::max);
            out.push(check(
                "dmr.lipschitz_converges",
                sol.iterations <= 25 && sol.label == SolutionLabel::Certified,
                format!("{} sweeps, label {:?}", sol.iterations, sol.label),
            ));
            out.push(check(
                "dmr.contraction_ratios",
                worst_ratio <= ratio_bound,
                format!("worst ratio {worst_ratio:.3} (<= {ratio_bound:.3})"),
            ));
        }
        Err(e) => {
            out.push(check("dmr.lipschitz_converges", false, format!("{e}")));
        }
    }

    // Symmetric coupled pair.
    let e2 = engine((1.0, 2.0), 1.0, 10, 81);
    let term2 = StateField::from_fn(e2.spatial_grid().clone(), 1.0, |x| x.tanh()).unwrap();
    let comp = |gen: DmrGenerator| DmrComponent {
        terminal: term2.clone(),
        generator: gen,
        loss: LossFunction::identity(),
        band: const_band(e2.time_grid(), -0.5, 1.5),
    };
    let problem2 = DmrProblem {
        components: vec![
            comp(DmrGenerator::new(
                GeneratorKind::Lipschitz { l: 0.1 },
                Arc::new(|_, y: &[f64], _| -0.1 * y[1]),
            )),
            comp(DmrGenerator::new(
                GeneratorKind::Lipschitz { l: 0.1 },
                Arc::new(|_, y: &[f64], _| -0.1 * y[0]),
            )),
        ],
        regime: Regime::Lipschitz,
    };
    match multidim_solve(&e2, &problem2, &PicardOptions::default()) {
        Ok(sol) => {
            let asym: f64 = (0..e2.time_grid().len())
                .map(|i| {
                    sol.components[0].values[i]
                        .values()
                        .iter()
                        .zip(sol.components[1].values[i].values())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            out.push(check(
                "dmr.symmetric_pair",
                asym <= 5e-8,
                format!("max |Y1 - Y2| = {asym:.3e} (<= 5e-8)"),
            ));
        }
        Err(e) => out.push(check("dmr.symmetric_pair", false, format!("{e}"))),
    }

    // Truncation schedule on an unbounded terminal.
    let e3 = engine((1.0, 2.0), 1.0, 10, 161);
    let term3 = StateField::from_fn(e3.spatial_grid().clone(), 1.0, |x| x).unwrap();
    let gen3 = DmrGenerator::scalar(
        GeneratorKind::Quadratic { lambda: 0.0, gamma: 0.3 },
        Arc::new(|_, _, z| 0.1 * z * z),
    );
    let problem3 = DmrProblem::scalar(
        term3,
        gen3,
        LossFunction::identity(),
        const_band(e3.time_grid(), -8.0, 8.0),
        Regime::QuadraticUnbounded,
    );
    match truncated_solve(&e3, &problem3, &[2.0, 4.0, 8.0], &PicardOptions::default()) {
        Ok((sol, rep)) => out.push(check(
            "dmr.truncation_stabilizes",
            sol.label == SolutionLabel::Stabilized && rep.distances[1] < rep.distances[0],
            format!("distances {:?}", rep.distances),
        )),
        Err(e) => out.push(check("dmr.truncation_stabilizes", false, format!("{e}"))),
    }
}

fn negative_checks(out: &mut Vec<Check>) {
    // Barrier gap zero is a validation error.
    let grid = make_grid(1.0, 4).unwrap();
    let l = GridCurve::constant(grid.clone(), 1.0).unwrap();
    let u = GridCurve::constant(grid.clone(), 1.0).unwrap();
    let gap_rejected = Band::new(l, u).is_err();
    out.push(check(
        "validation.zero_gap_rejected",
        gap_rejected,
        "Band::new(l == u) must fail".into(),
    ));

    // Quadratic blow-up is a divergence error.
    let e = engine((1.0, 2.0), 1.0, 10, 81);
    let phi = StateField::from_fn(e.spatial_grid().clone(), 1.0, |x| x).unwrap();
    let spec = GeneratorSpec::quadratic(0.0, 4e4, Arc::new(|_, _, z| 2e4 * z * z));
    let diverged = matches!(solve_gbsde(&e, &phi, &spec), Err(Error::Divergence { .. }));
    out.push(check(
        "validation.quadratic_blowup_detected",
        diverged,
        "huge gamma must trip the divergence guard".into(),
    ));
}

/// Runs every check; deterministic for a fixed seed.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    skorokhod_checks(seed, &mut out);
    gexp_checks(seed, &mut out);
    reflect_checks(seed, &mut out);
    bsde_checks(seed, &mut out);
    dmr_checks(&mut out);
    negative_checks(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_all_green_and_deterministic() {
        let a = run_selftest(42);
        for c in &a {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
        let b = run_selftest(42);
        let fmt = |v: &[Check]| {
            v.iter()
                .map(|c| format!("{}|{}|{}", c.name, c.pass, c.detail))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(fmt(&a), fmt(&b));
    }
}
