//! Run configuration: a flat, line-oriented `key = value` format with
//! optional `[component N]` sections. Unknown keys are rejected, and every
//! numeric field is validated against the module invariants before any solve
//! starts. Errors carry the offending line or key.

use crate::bsde::GeneratorKind;
use crate::dmr::{DmrComponent, DmrGenerator, DmrProblem, Regime};
use crate::error::{Error, Result};
use crate::expr::{parse_expr, EvalCtx, Expr, Var};
use crate::gexp::{GEngine, SpatialGrid, StateField, VolatilityBand};
use crate::grid::{make_grid, Band, GridCurve, TimeGrid};
use crate::reflect::LossFunction;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

const GLOBAL_KEYS: &[&str] = &[
    "T",
    "n_t",
    "sigma_lower",
    "sigma_upper",
    "m_points",
    "x_half",
    "c_cfl",
    "seed",
    "tol",
    "max_iters",
    "regime",
    "window",
    "truncation_schedule",
    "payoff",
    "sigmas",
    "direction",
    "curve",
    "anchor",
    "l",
    "u",
    "barrier_file",
];

const COMPONENT_KEYS: &[&str] = &["payoff", "f", "gen_kind", "loss", "l", "u", "barrier_file", "alpha_hat"];

#[derive(Debug, Clone, Default)]
struct RawSection {
    entries: BTreeMap<String, (usize, String)>,
}

#[derive(Debug, Clone)]
pub struct RawConfig {
    globals: RawSection,
    components: Vec<RawSection>,
}

fn parse_raw(text: &str) -> Result<RawConfig> {
    let mut globals = RawSection::default();
    let mut components: Vec<RawSection> = Vec::new();
    let mut in_component: Option<usize> = None;
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let inner = inner.trim();
            let idx: usize = inner
                .strip_prefix("component")
                .map(str::trim)
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| {
                    Error::Config(format!("line {}: bad section header '{line}'", lineno + 1))
                })?;
            if idx != components.len() + 1 {
                return Err(Error::Config(format!(
                    "line {}: component sections must be numbered consecutively from 1",
                    lineno + 1
                )));
            }
            components.push(RawSection::default());
            in_component = Some(idx - 1);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let (section, allowed): (&mut RawSection, &[&str]) = match in_component {
            None => (&mut globals, GLOBAL_KEYS),
            Some(i) => (&mut components[i], COMPONENT_KEYS),
        };
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "line {}: unknown key '{key}'",
                lineno + 1
            )));
        }
        if section
            .entries
            .insert(key.clone(), (lineno + 1, value))
            .is_some()
        {
            return Err(Error::Config(format!(
                "line {}: duplicate key '{key}'",
                lineno + 1
            )));
        }
    }
    Ok(RawConfig {
        globals,
        components,
    })
}

impl RawSection {
    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                let line = self.entries[key].0;
                Error::Config(format!("line {line}: key '{key}': cannot parse '{v}'"))
            }),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    fn expr(&self, key: &str) -> Result<Option<Expr>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse_expr(v).map(Some).map_err(|e| {
                let line = self.entries[key].0;
                Error::Config(format!("line {line}: key '{key}': {e}"))
            }),
        }
    }
}

/// Input curve for the skorokhod command.
#[derive(Debug, Clone)]
pub enum CurveSpec {
    Expr(Expr),
    /// Seeded piecewise-linear wander in `[-2, 2]`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkorokhodDirection {
    Forward,
    Backward,
}

#[derive(Debug, Clone)]
pub enum LossSpec {
    Identity,
    IdentityWith(f64, f64, f64),
    Affine(f64, f64),
    SinPerturb(f64),
}

impl LossSpec {
    pub fn build(&self) -> Result<LossFunction> {
        match self {
            LossSpec::Identity => Ok(LossFunction::identity()),
            LossSpec::IdentityWith(cl, cu, g) => LossFunction::identity_with_constants(*cl, *cu, *g),
            LossSpec::Affine(a, b) => LossFunction::affine(*a, *b),
            LossSpec::SinPerturb(amp) => LossFunction::sin_perturb(*amp),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComponentConfig {
    pub payoff: Expr,
    pub generator: Option<Expr>,
    pub gen_kind: GeneratorKind,
    pub loss: LossSpec,
    pub lower: Option<Expr>,
    pub upper: Option<Expr>,
    pub barrier_file: Option<PathBuf>,
    pub alpha_hat: Option<Expr>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub horizon: f64,
    pub n_t: usize,
    pub sigma_lower: f64,
    pub sigma_upper: f64,
    pub m_points: usize,
    pub x_half: Option<f64>,
    pub c_cfl: f64,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
    pub regime: Option<Regime>,
    pub window: Option<f64>,
    pub truncation_schedule: Vec<f64>,
    pub payoff: Option<Expr>,
    pub sigmas: Option<Vec<f64>>,
    pub direction: Option<SkorokhodDirection>,
    pub curve: Option<CurveSpec>,
    pub anchor: f64,
    pub lower: Option<Expr>,
    pub upper: Option<Expr>,
    pub barrier_file: Option<PathBuf>,
    pub components: Vec<ComponentConfig>,
}

fn parse_list(v: &str, key: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("key '{key}': bad number '{s}'")))
        })
        .collect()
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<RunConfig> {
        let raw = parse_raw(text)?;
        let g = &raw.globals;

        let regime = match g.get("regime") {
            None => None,
            Some("lipschitz") => Some(Regime::Lipschitz),
            Some("quadratic_bounded") => Some(Regime::QuadraticBounded),
            Some("quadratic_unbounded") => Some(Regime::QuadraticUnbounded),
            Some(other) => {
                return Err(Error::Config(format!("key 'regime': unknown regime '{other}'")))
            }
        };
        let direction = match g.get("direction") {
            None => None,
            Some("forward") => Some(SkorokhodDirection::Forward),
            Some("backward") => Some(SkorokhodDirection::Backward),
            Some(other) => {
                return Err(Error::Config(format!(
                    "key 'direction': expected forward|backward, got '{other}'"
                )))
            }
        };
        let curve = match g.get("curve") {
            None => None,
            Some("random") => Some(CurveSpec::Random),
            Some(src) => Some(CurveSpec::Expr(parse_expr(src)?)),
        };
        let truncation_schedule = match g.get("truncation_schedule") {
            None => Vec::new(),
            Some(v) => parse_list(v, "truncation_schedule")?,
        };
        let sigmas = match g.get("sigmas") {
            None => None,
            Some(v) => Some(parse_list(v, "sigmas")?),
        };

        let mut components = Vec::new();
        for (ci, sec) in raw.components.iter().enumerate() {
            let label = format!("component {}", ci + 1);
            let payoff = sec
                .expr("payoff")?
                .ok_or_else(|| Error::Config(format!("{label}: missing key 'payoff'")))?;
            payoff.restrict_vars(&[Var::X], &format!("{label}: payoff"))?;
            let generator = sec.expr("f")?;
            if let Some(f) = &generator {
                f.restrict_vars(
                    &[Var::T, Var::YOwn, Var::Z, Var::YIdx(0)],
                    &format!("{label}: f"),
                )?;
            }
            let gen_kind = match sec.get("gen_kind") {
                None => {
                    if generator.is_some() {
                        return Err(Error::Config(format!(
                            "{label}: a generator needs an explicit gen_kind"
                        )));
                    }
                    GeneratorKind::Lipschitz { l: 0.0 }
                }
                Some(v) => parse_gen_kind(v, &label)?,
            };
            let loss = parse_loss(sec.get("loss").unwrap_or("identity"), &label)?;
            let lower = sec.expr("l")?;
            let upper = sec.expr("u")?;
            for (name, e) in [("l", &lower), ("u", &upper)] {
                if let Some(e) = e {
                    e.restrict_vars(&[Var::T], &format!("{label}: {name}"))?;
                }
            }
            let barrier_file = sec.get("barrier_file").map(PathBuf::from);
            if barrier_file.is_some() && (lower.is_some() || upper.is_some()) {
                return Err(Error::Config(format!(
                    "{label}: give either barrier expressions or a barrier_file, not both"
                )));
            }
            if barrier_file.is_none() && (lower.is_none() || upper.is_none()) {
                return Err(Error::Config(format!("{label}: missing barriers (l and u)")));
            }
            let alpha_hat = sec.expr("alpha_hat")?;
            if let Some(a) = &alpha_hat {
                a.restrict_vars(&[Var::T], &format!("{label}: alpha_hat"))?;
            }
            components.push(ComponentConfig {
                payoff,
                generator,
                gen_kind,
                loss,
                lower,
                upper,
                barrier_file,
                alpha_hat,
            });
        }

        let payoff = g.expr("payoff")?;
        if let Some(p) = &payoff {
            p.restrict_vars(&[Var::X], "payoff")?;
        }
        let lower = g.expr("l")?;
        let upper = g.expr("u")?;
        for (name, e) in [("l", &lower), ("u", &upper)] {
            if let Some(e) = e {
                e.restrict_vars(&[Var::T], name)?;
            }
        }
        if let Some(CurveSpec::Expr(e)) = &curve {
            e.restrict_vars(&[Var::T], "curve")?;
        }

        let cfg = RunConfig {
            horizon: g.require("T")?,
            n_t: g.require("n_t")?,
            sigma_lower: g.require("sigma_lower")?,
            sigma_upper: g.require("sigma_upper")?,
            m_points: g.require("m_points")?,
            x_half: g.parse("x_half")?,
            c_cfl: g.parse("c_cfl")?.unwrap_or(0.45),
            seed: g.parse("seed")?.unwrap_or(0),
            tol: g.parse("tol")?.unwrap_or(1e-8),
            max_iters: g.parse("max_iters")?.unwrap_or(25),
            regime,
            window: g.parse("window")?,
            truncation_schedule,
            payoff,
            sigmas,
            direction,
            curve,
            anchor: g.parse("anchor")?.unwrap_or(0.0),
            lower,
            upper,
            barrier_file: g.get("barrier_file").map(PathBuf::from),
            components,
        };
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_text(&text)
    }

    pub fn time_grid(&self) -> Result<Arc<TimeGrid>> {
        make_grid(self.horizon, self.n_t)
    }

    pub fn engine(&self) -> Result<GEngine> {
        let band = VolatilityBand::new(self.sigma_lower, self.sigma_upper)?;
        let tgrid = self.time_grid()?;
        let half = self
            .x_half
            .unwrap_or(8.0 * self.sigma_upper * self.horizon.sqrt());
        let sgrid = SpatialGrid::symmetric(half, self.m_points)?;
        GEngine::new(band, sgrid, tgrid, self.c_cfl)
    }

    /// Barriers for one component (or the global skorokhod pair), from
    /// expressions or a tabulated CSV with columns `t,l,u`.
    pub fn band_from(
        &self,
        tgrid: &Arc<TimeGrid>,
        lower: &Option<Expr>,
        upper: &Option<Expr>,
        file: &Option<PathBuf>,
        base_dir: Option<&Path>,
    ) -> Result<Band> {
        if let Some(file) = file {
            let path = match base_dir {
                Some(dir) if file.is_relative() => dir.join(file),
                _ => file.clone(),
            };
            return read_barrier_csv(&path, tgrid);
        }
        let (le, ue) = match (lower, upper) {
            (Some(l), Some(u)) => (l, u),
            _ => return Err(Error::Config("missing barriers (l and u)".into())),
        };
        let l = GridCurve::from_fn(tgrid.clone(), |t| le.eval(&EvalCtx::for_curve(t)))?;
        let u = GridCurve::from_fn(tgrid.clone(), |t| ue.eval(&EvalCtx::for_curve(t)))?;
        Band::new(l, u)
    }

    /// Assembles the reflected-system description for the solve command.
    pub fn dmr_problem(&self, engine: &GEngine, base_dir: Option<&Path>) -> Result<DmrProblem> {
        let regime = self
            .regime
            .ok_or_else(|| Error::Config("missing required key 'regime'".into()))?;
        if self.components.is_empty() {
            return Err(Error::Config("solve needs at least one [component N] section".into()));
        }
        let n_comp = self.components.len();
        let tgrid = engine.time_grid();
        let mut components = Vec::with_capacity(n_comp);
        for (ci, cc) in self.components.iter().enumerate() {
            if let Some(f) = &cc.generator {
                if let Some(k) = f.max_component_index() {
                    if k >= n_comp {
                        return Err(Error::Config(format!(
                            "component {}: generator references y{} but only {n_comp} components exist",
                            ci + 1,
                            k + 1
                        )));
                    }
                }
            }
            let payoff = cc.payoff.clone();
            let terminal = StateField::from_fn(
                engine.spatial_grid().clone(),
                self.horizon,
                move |x| payoff.eval(&EvalCtx::for_payoff(x)),
            )?;
            let generator = match &cc.generator {
                None => DmrGenerator::zero(),
                Some(f) => {
                    let f = f.clone();
                    let own = ci;
                    DmrGenerator::new(
                        cc.gen_kind,
                        Arc::new(move |t, y: &[f64], z| {
                            f.eval(&EvalCtx {
                                x: 0.0,
                                t,
                                z,
                                y_own: y[own],
                                y_vec: y,
                            })
                        }),
                    )
                }
            };
            let loss = cc.loss.build()?;
            let band = self.band_from(tgrid, &cc.lower, &cc.upper, &cc.barrier_file, base_dir)?;
            components.push(DmrComponent {
                terminal,
                generator,
                loss,
                band,
            });
        }
        Ok(DmrProblem { components, regime })
    }
}

fn parse_gen_kind(v: &str, label: &str) -> Result<GeneratorKind> {
    let (name, args) = v.split_once(':').unwrap_or((v, ""));
    match name.trim() {
        "lipschitz" => {
            let l: f64 = args
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{label}: gen_kind lipschitz needs a constant")))?;
            if !(l >= 0.0) {
                return Err(Error::Config(format!("{label}: Lipschitz constant must be >= 0")));
            }
            Ok(GeneratorKind::Lipschitz { l })
        }
        "quadratic" => {
            let parts = parse_list(args, "gen_kind")?;
            if parts.len() != 2 {
                return Err(Error::Config(format!(
                    "{label}: gen_kind quadratic needs 'lambda,gamma'"
                )));
            }
            if !(parts[0] >= 0.0 && parts[1] > 0.0) {
                return Err(Error::Config(format!(
                    "{label}: quadratic constants must satisfy lambda >= 0, gamma > 0"
                )));
            }
            Ok(GeneratorKind::Quadratic {
                lambda: parts[0],
                gamma: parts[1],
            })
        }
        other => Err(Error::Config(format!("{label}: unknown gen_kind '{other}'"))),
    }
}

fn parse_loss(v: &str, label: &str) -> Result<LossSpec> {
    let (name, args) = v.split_once(':').unwrap_or((v, ""));
    match name.trim() {
        "identity" if args.is_empty() => Ok(LossSpec::Identity),
        "identity" => {
            let p = parse_list(args, "loss")?;
            if p.len() != 3 {
                return Err(Error::Config(format!(
                    "{label}: loss identity with constants needs 'c_lower,c_upper,growth'"
                )));
            }
            Ok(LossSpec::IdentityWith(p[0], p[1], p[2]))
        }
        "affine" => {
            let p = parse_list(args, "loss")?;
            if p.len() != 2 {
                return Err(Error::Config(format!("{label}: loss affine needs 'a,b'")));
            }
            Ok(LossSpec::Affine(p[0], p[1]))
        }
        "sin_perturb" => {
            let amp: f64 = args
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{label}: loss sin_perturb needs an amplitude")))?;
            Ok(LossSpec::SinPerturb(amp))
        }
        other => Err(Error::Config(format!("{label}: unknown loss '{other}'"))),
    }
}

fn read_barrier_csv(path: &Path, tgrid: &Arc<TimeGrid>) -> Result<Band> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("barrier file {}: {e}", path.display())))?;
    let mut l = Vec::new();
    let mut u = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with('t')) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Config(format!(
                "barrier file line {}: expected 't,l,u'",
                i + 1
            )));
        }
        let t: f64 = cols[0]
            .parse()
            .map_err(|_| Error::Config(format!("barrier file line {}: bad t", i + 1)))?;
        let idx = l.len();
        let expect = tgrid.node(idx.min(tgrid.len() - 1));
        if idx >= tgrid.len() || (t - expect).abs() > 1e-9 * tgrid.horizon().max(1.0) {
            return Err(Error::Config(format!(
                "barrier file line {}: time {t} does not match grid node {expect}",
                i + 1
            )));
        }
        l.push(
            cols[1]
                .parse()
                .map_err(|_| Error::Config(format!("barrier file line {}: bad l", i + 1)))?,
        );
        u.push(
            cols[2]
                .parse()
                .map_err(|_| Error::Config(format!("barrier file line {}: bad u", i + 1)))?,
        );
    }
    if l.len() != tgrid.len() {
        return Err(Error::Config(format!(
            "barrier file holds {} rows, grid has {} nodes",
            l.len(),
            tgrid.len()
        )));
    }
    Band::new(
        GridCurve::new(tgrid.clone(), l, crate::grid::Regularity::Continuous)?,
        GridCurve::new(tgrid.clone(), u, crate::grid::Regularity::Continuous)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE_CFG: &str = "
T = 1.0
n_t = 20
sigma_lower = 1.0
sigma_upper = 2.0
m_points = 81
regime = lipschitz
tol = 1e-8

[component 1]
payoff = tanh(x)
f = -0.2*y + 0.1*z
gen_kind = lipschitz:0.2
loss = identity
l = 0.25 - 0.5*t
u = 1.5
";

    #[test]
    fn parses_a_solve_config() {
        let cfg = RunConfig::from_text(SOLVE_CFG).unwrap();
        assert_eq!(cfg.n_t, 20);
        assert_eq!(cfg.components.len(), 1);
        let engine = cfg.engine().unwrap();
        let problem = cfg.dmr_problem(&engine, None).unwrap();
        assert_eq!(problem.dimension(), 1);
        assert_eq!(problem.regime, Regime::Lipschitz);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_sections() {
        assert!(RunConfig::from_text("T = 1\nn_t = 4\nwhatever = 3").is_err());
        assert!(RunConfig::from_text("[component 2]\npayoff = x").is_err());
        let dup = "T = 1\nT = 2\nn_t = 4\nsigma_lower = 1\nsigma_upper = 2\nm_points = 81";
        assert!(RunConfig::from_text(dup).is_err());
    }

    #[test]
    fn rejects_wrong_variables() {
        let bad = "
T = 1.0
n_t = 4
sigma_lower = 1.0
sigma_upper = 2.0
m_points = 81
regime = lipschitz
[component 1]
payoff = tanh(t)
l = 0.0
u = 1.0
";
        assert!(RunConfig::from_text(bad).is_err());
    }

    #[test]
    fn rejects_generator_referencing_missing_component() {
        let bad = "
T = 1.0
n_t = 4
sigma_lower = 1.0
sigma_upper = 2.0
m_points = 81
regime = lipschitz
[component 1]
payoff = tanh(x)
f = -0.1*y3
gen_kind = lipschitz:0.1
l = -1.0
u = 1.0
";
        let cfg = RunConfig::from_text(bad).unwrap();
        let engine = cfg.engine().unwrap();
        assert!(cfg.dmr_problem(&engine, None).is_err());
    }

    #[test]
    fn gexp_and_skorokhod_keys() {
        let cfg = RunConfig::from_text(
            "T = 1.0\nn_t = 8\nsigma_lower = 1\nsigma_upper = 2\nm_points = 81\npayoff = x^2\nsigmas = 1.0,2.0",
        )
        .unwrap();
        assert!(cfg.payoff.is_some());
        assert_eq!(cfg.sigmas.as_deref(), Some(&[1.0, 2.0][..]));

        let cfg = RunConfig::from_text(
            "T = 2.0\nn_t = 8\nsigma_lower = 1\nsigma_upper = 2\nm_points = 81\ndirection = forward\ncurve = t\nl = 0.0\nu = 1.0",
        )
        .unwrap();
        assert_eq!(cfg.direction, Some(SkorokhodDirection::Forward));
        let tg = cfg.time_grid().unwrap();
        let band = cfg
            .band_from(&tg, &cfg.lower, &cfg.upper, &cfg.barrier_file, None)
            .unwrap();
        assert_eq!(band.gap(), 1.0);
    }
}
