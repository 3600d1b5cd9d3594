use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::report::{Cell, ExperimentReport, RunMetadata, RunSummary, Table};
use super::{eta, AbsValue, Eta, Preset, TestFunction};
use crate::approx::best_projection;
use crate::basis::{
    inner_product, sobolev_orthonormalize, BasisElement, Difference, Function1D, OrthonormalBasis,
};
use crate::constraints::{ConstraintContext, ConstraintFamily, ConstraintSet, Sense};
use crate::solver::{solve, Algorithm, SolveResult, SolverConfig, Termination};
use crate::{Error, Result};

pub const AUDIT_POINTS: usize = 10_001;
pub const CURVE_POINTS: usize = 1_001;
pub const SURFACE_POINTS: usize = 101;

/// Dimensions used by the convergence study.
pub const CONVERGENCE_DIMS: std::ops::RangeInclusive<usize> = 2..=40;
/// Dimensions entering the fitted convergence slopes.
pub const SLOPE_DIMS: std::ops::RangeInclusive<usize> = 4..=40;
const SLOPE_FLOOR: f64 = 1e-12;

/// Iteration cap for the figure runs. Presets combining positivity with
/// monotonicity or convexity can converge sublinearly under greedy
/// projection; such runs are reported as `max_iters`.
pub const FIGURE_MAX_ITERS: usize = 2_000;
/// Iteration cap for each point of the convergence study.
pub const CONVERGENCE_MAX_ITERS: usize = 400;

/// Function being approximated in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Test(usize),
    Abs,
}

impl Target {
    pub fn name(self) -> String {
        match self {
            Target::Test(j) => format!("f{j}"),
            Target::Abs => "absx".into(),
        }
    }
}

impl Function1D for Target {
    fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
        match self {
            Target::Test(j) => TestFunction::new(*j).eval(x, deriv),
            Target::Abs => AbsValue.eval(x, deriv),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn piecewise_degree(&self) -> Option<usize> {
        match self {
            Target::Test(j) => Some(*j),
            Target::Abs => Some(1),
        }
    }
}

/// One constrained fit: H-best projection of the target onto the
/// N-dimensional polynomial space, then a constrained correction.
#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub target: Target,
    pub dim: usize,
    pub sobolev_order: usize,
    pub preset: Preset,
    pub cfg: SolverConfig,
}

impl Case {
    pub fn greedy(
        name: String,
        target: Target,
        dim: usize,
        q: usize,
        preset: &str,
    ) -> Result<Self> {
        Ok(Self {
            name,
            target,
            dim,
            sobolev_order: q,
            preset: preset.parse()?,
            cfg: SolverConfig {
                max_iters: FIGURE_MAX_ITERS,
                ..SolverConfig::new(Algorithm::Greedy)
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub case: Case,
    /// Unconstrained H-best coordinates.
    pub v: DVector<f64>,
    pub result: SolveResult,
    pub eta: Eta,
    pub grid_min_sdist: f64,
    pub report: ExperimentReport,
}

impl CaseOutcome {
    pub fn feasible(&self) -> bool {
        self.result.terminated == Termination::Feasible
    }
}

fn grid(points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |i| {
        if i + 1 == points {
            1.0
        } else {
            -1.0 + 2.0 * i as f64 / (points - 1) as f64
        }
    })
}

/// Smallest normalised signed distance of `c` over a uniform grid, evaluated
/// pointwise from basis values rather than through the solver's search.
pub fn grid_audit(
    c: &DVector<f64>,
    set: &ConstraintSet,
    basis: &OrthonormalBasis,
    points: usize,
) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for fam in &set.families {
        let m = fam.deriv_order;
        for y in grid(points).filter(|&y| fam.contains(y)) {
            let w = basis.eval(y, m)?;
            let norm = w.norm();
            if norm < 1e-14 {
                continue;
            }
            let r = basis.eval_element(&fam.bound_coeffs, y, m);
            let v = w.dot(c);
            worst = worst.min(fam.sense.sigma() * (r - v) / norm);
        }
    }
    Ok(worst)
}

fn l2_error(f: &dyn Function1D, c: &DVector<f64>, basis: &OrthonormalBasis) -> Result<f64> {
    let g = BasisElement::new(basis, c);
    let d = Difference { f, g: &g };
    Ok(inner_product(&d, &d, crate::basis::InnerProductSpec::l2())?
        .max(0.0)
        .sqrt())
}

fn curves_table(
    f: &dyn Function1D,
    v: &DVector<f64>,
    vt: &DVector<f64>,
    basis: &OrthonormalBasis,
) -> Result<Table> {
    let mut t = Table::new("curves", &["x", "f", "v", "v_tilde"]);
    for x in grid(CURVE_POINTS) {
        t.push(vec![
            x.into(),
            f.eval(x, 0)?.into(),
            basis.eval_element(v, x, 0).into(),
            basis.eval_element(vt, x, 0).into(),
        ]);
    }
    Ok(t)
}

fn spectrum_table(v: &DVector<f64>, vt: &DVector<f64>) -> Table {
    let mut t = Table::new("spectrum", &["j", "v_hat_abs", "w_tilde_abs"]);
    for j in 0..v.len() {
        t.push(vec![j.into(), v[j].abs().into(), vt[j].abs().into()]);
    }
    t
}

/// Runs a case and assembles its report (curves and coefficient spectrum).
pub fn run_case(case: &Case) -> Result<CaseOutcome> {
    let basis = sobolev_orthonormalize(case.sobolev_order, case.dim)?;
    let set = case.preset.constraint_set(&basis)?;
    let f = case.target;
    let v = best_projection(&f, &basis)?;
    let result = solve(&v, &set, &case.cfg, &basis, None)?;
    let eta = eta(&f, &v, &result.coeffs, &basis)?;
    let grid_min_sdist = grid_audit(&result.coeffs, &set, &basis, AUDIT_POINTS)?;
    let hybrid = case.cfg.algorithm == Algorithm::Hybrid;
    let report = ExperimentReport {
        name: case.name.clone(),
        metadata: Some(RunMetadata {
            function: f.name(),
            dim: case.dim,
            space: basis.space().name().into(),
            preset: case.preset.to_string(),
            algorithm: Some(case.cfg.algorithm.name().into()),
            epsilon: hybrid.then_some(case.cfg.epsilon),
            delta: Some(case.cfg.delta),
            max_iters: Some(case.cfg.max_iters),
        }),
        summary: Some(RunSummary {
            eta: Some(eta.eta),
            error_factor: Some(eta.error_factor),
            iterations: result.num_iterations(),
            terminated: termination_name(result.terminated).into(),
            final_worst_sdist: result.final_worst_sdist,
            grid_min_sdist,
            input_norm: v.norm(),
            output_norm: result.coeffs.norm(),
        }),
        notes: Vec::new(),
        tables: vec![
            curves_table(&f, &v, &result.coeffs, &basis)?,
            spectrum_table(&v, &result.coeffs),
        ],
    };
    Ok(CaseOutcome {
        case: case.clone(),
        v,
        result,
        eta,
        grid_min_sdist,
        report,
    })
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Feasible => "feasible",
        Termination::MaxIters => "max_iters",
        Termination::Stalled => "stalled",
    }
}

fn run_all(cases: &[Case]) -> Result<Vec<CaseOutcome>> {
    cases.par_iter().map(run_case).collect()
}

const SUMMARY_COLUMNS: [&str; 11] = [
    "name",
    "function",
    "dim",
    "space",
    "preset",
    "iterations",
    "eta",
    "terminated",
    "grid_min_sdist",
    "input_norm",
    "output_norm",
];

fn summary_row(o: &CaseOutcome) -> Vec<Cell> {
    vec![
        o.case.name.clone().into(),
        o.case.target.name().into(),
        o.case.dim.into(),
        format!("h{}", o.case.sobolev_order).into(),
        o.case.preset.to_string().into(),
        o.result.num_iterations().into(),
        o.eta.eta.into(),
        termination_name(o.result.terminated).into(),
        o.grid_min_sdist.into(),
        o.v.norm().into(),
        o.result.coeffs.norm().into(),
    ]
}

fn summary_report(name: &str, outcomes: &[CaseOutcome]) -> ExperimentReport {
    let mut t = Table::new("summary", &SUMMARY_COLUMNS);
    for o in outcomes {
        t.push(summary_row(o));
    }
    ExperimentReport {
        name: name.into(),
        tables: vec![t],
        ..ExperimentReport::default()
    }
}

/// Published (iterations, η) for each cell of the algorithm comparison.
pub fn table1_reference(dim: usize, algorithm: Algorithm, epsilon: f64) -> (usize, f64) {
    let small_eps = epsilon < 1e-4;
    match (dim, algorithm, small_eps) {
        (6, Algorithm::Greedy, _) => (20, 1.147),
        (31, Algorithm::Greedy, _) => (23, 0.986),
        (6, Algorithm::Averaged, _) => (36, 1.148),
        (31, Algorithm::Averaged, _) => (383, 0.985),
        (6, Algorithm::Hybrid, false) => (4, 1.1464),
        (6, Algorithm::Hybrid, true) => (16, 1.148),
        (31, Algorithm::Hybrid, false) => (2, 1.142),
        (31, Algorithm::Hybrid, true) => (3, 1.054),
        _ => (0, f64::NAN),
    }
}

pub fn table1_cases() -> Vec<Case> {
    let mut cases = Vec::new();
    for dim in [6, 31] {
        for algorithm in [Algorithm::Greedy, Algorithm::Averaged, Algorithm::Hybrid] {
            for epsilon in [1e-3, 1e-5] {
                cases.push(Case {
                    name: format!("table1_n{dim}_{}_eps{epsilon:e}", algorithm.name()),
                    target: Target::Test(2),
                    dim,
                    sobolev_order: 0,
                    preset: Preset(vec![super::PresetAtom::F0]),
                    cfg: SolverConfig {
                        epsilon,
                        ..SolverConfig::new(algorithm)
                    },
                });
            }
        }
    }
    cases
}

/// f₂ under positivity in L² with every algorithm. The first report is the
/// summary table; per-cell reports follow.
pub fn run_table1() -> Result<Vec<ExperimentReport>> {
    let outcomes = run_all(&table1_cases())?;
    let mut t = Table::new(
        "table1",
        &[
            "dim",
            "algorithm",
            "epsilon",
            "iterations",
            "eta",
            "error_factor",
            "terminated",
            "published_iterations",
            "published_eta",
        ],
    );
    for o in &outcomes {
        let cfg = o.case.cfg;
        let (pi, pe) = table1_reference(o.case.dim, cfg.algorithm, cfg.epsilon);
        t.push(vec![
            o.case.dim.into(),
            cfg.algorithm.name().into(),
            cfg.epsilon.into(),
            o.result.num_iterations().into(),
            o.eta.eta.into(),
            o.eta.error_factor.into(),
            termination_name(o.result.terminated).into(),
            pi.into(),
            pe.into(),
        ]);
    }
    let mut reports = vec![ExperimentReport {
        name: "table1".into(),
        notes: vec!["ambient space assumed to be L2 (not stated with the published table)".into()],
        tables: vec![t],
        ..ExperimentReport::default()
    }];
    reports.extend(outcomes.into_iter().map(|o| o.report));
    Ok(reports)
}

const STEP_PRESETS: [&str; 3] = ["F0", "F0+G0", "F0+G0+F1"];

pub fn step_cases() -> Result<Vec<Case>> {
    let mut cases = Vec::new();
    for dim in [6, 31] {
        for preset in STEP_PRESETS {
            let tag = preset.replace('+', "_").to_lowercase();
            cases.push(Case::greedy(
                format!("step_n{dim}_{tag}"),
                Target::Test(0),
                dim,
                0,
                preset,
            )?);
        }
    }
    Ok(cases)
}

pub fn f2_cases() -> Result<Vec<Case>> {
    let mut cases = Vec::new();
    for dim in [6, 31] {
        for q in 0..=2 {
            cases.push(Case::greedy(
                format!("f2_n{dim}_h{q}"),
                Target::Test(2),
                dim,
                q,
                "F0+F1+F2",
            )?);
        }
    }
    Ok(cases)
}

/// Signed distance of the degree-7 L² projection of the step to the
/// positivity halfspaces, with the greedy point and the violation set.
fn step_sdist_report() -> Result<ExperimentReport> {
    let basis = sobolev_orthonormalize(0, 8)?;
    let set = ConstraintSet::new(vec![ConstraintFamily::zero_bound(8, 0, Sense::Lower)])?;
    let ctx = ConstraintContext::new(&set, &basis)?;
    let v = best_projection(&Target::Test(0), &basis)?;
    let worst = ctx.min_sdist_global(&v)?;
    let mut curve = Table::new("sdist", &["x", "v", "sdist"]);
    for x in grid(CURVE_POINTS) {
        curve.push(vec![
            x.into(),
            basis.eval_element(&v, x, 0).into(),
            ctx.sdist(&v, 0, x)?.into(),
        ]);
    }
    let mut cells = Table::new("violation_set", &["lo", "hi"]);
    for (lo, hi) in ctx.violation_set(&v, 0)? {
        cells.push(vec![lo.into(), hi.into()]);
    }
    let mut point = Table::new("greedy_point", &["y_star", "sdist"]);
    point.push(vec![worst.y.into(), worst.value.into()]);
    Ok(ExperimentReport {
        name: "step_sdist_n8".into(),
        tables: vec![curve, cells, point],
        ..ExperimentReport::default()
    })
}

/// Step function with positivity, bounds and monotonicity, N ∈ {6, 31}.
pub fn run_step_experiment() -> Result<Vec<ExperimentReport>> {
    let outcomes = run_all(&step_cases()?)?;
    let mut reports = vec![summary_report("step", &outcomes)];
    reports.extend(outcomes.into_iter().map(|o| o.report));
    reports.push(step_sdist_report()?);
    Ok(reports)
}

/// f₂ with positivity, monotonicity and convexity in H⁰, H¹, H².
pub fn run_f2_experiment() -> Result<Vec<ExperimentReport>> {
    let outcomes = run_all(&f2_cases()?)?;
    let mut reports = vec![summary_report("f2", &outcomes)];
    reports.extend(outcomes.into_iter().map(|o| o.report));
    Ok(reports)
}

/// Coefficient magnitudes |v̂_j| and |w̃_j| for the step and f₂ runs.
pub fn run_spectrum() -> Result<Vec<ExperimentReport>> {
    let mut cases = step_cases()?;
    cases.extend(f2_cases()?);
    let outcomes = run_all(&cases)?;
    let mut t = Table::new(
        "spectrum_norms",
        &[
            "name",
            "preset_contains_zero",
            "input_norm_sq",
            "output_norm_sq",
        ],
    );
    for o in &outcomes {
        t.push(vec![
            o.case.name.clone().into(),
            o.case.preset.contains_zero().to_string().into(),
            o.v.norm_squared().into(),
            o.result.coeffs.norm_squared().into(),
        ]);
    }
    let mut reports = vec![ExperimentReport {
        name: "spectrum".into(),
        tables: vec![t],
        ..ExperimentReport::default()
    }];
    for o in outcomes {
        reports.push(ExperimentReport {
            name: format!("spectrum_{}", o.case.name),
            metadata: o.report.metadata,
            tables: vec![spectrum_table(&o.v, &o.result.coeffs)],
            ..ExperimentReport::default()
        });
    }
    Ok(reports)
}

/// Least-squares slope of log(error) against log(N), using the points with
/// N in [`SLOPE_DIMS`] whose error exceeds 1e-12.
pub fn loglog_slope(dims: &[usize], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = dims
        .iter()
        .zip(errors)
        .filter(|(n, e)| SLOPE_DIMS.contains(n) && **e > SLOPE_FLOOR)
        .map(|(&n, &e)| ((n as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// One convergence curve point.
#[derive(Debug, Clone, Copy)]
struct ConvergencePoint {
    dim: usize,
    unconstrained: f64,
    constrained: f64,
    iterations: usize,
    feasible: bool,
    grid_min_sdist: f64,
    input_norm: f64,
    output_norm: f64,
}

fn convergence_point(target: Target, preset: &Preset, dim: usize) -> Result<ConvergencePoint> {
    let basis = sobolev_orthonormalize(0, dim)?;
    let set = preset.constraint_set(&basis)?;
    let v = best_projection(&target, &basis)?;
    let cfg = SolverConfig {
        max_iters: CONVERGENCE_MAX_ITERS,
        ..SolverConfig::new(Algorithm::Greedy)
    };
    let r = solve(&v, &set, &cfg, &basis, None)?;
    Ok(ConvergencePoint {
        dim,
        unconstrained: l2_error(&target, &v, &basis)?,
        constrained: l2_error(&target, &r.coeffs, &basis)?,
        iterations: r.num_iterations(),
        feasible: r.terminated == Termination::Feasible,
        grid_min_sdist: grid_audit(&r.coeffs, &set, &basis, AUDIT_POINTS)?,
        input_norm: v.norm(),
        output_norm: r.coeffs.norm(),
    })
}

/// L² errors of constrained and unconstrained fits for N = 2..=40, with
/// fitted log-log slopes.
pub fn run_convergence() -> Result<Vec<ExperimentReport>> {
    let mut jobs = Vec::new();
    for target in [Target::Test(0), Target::Test(2)] {
        for preset in STEP_PRESETS {
            for dim in CONVERGENCE_DIMS {
                jobs.push((target, preset.parse::<Preset>()?, dim));
            }
        }
    }
    let points: Vec<ConvergencePoint> = jobs
        .par_iter()
        .map(|(t, p, n)| convergence_point(*t, p, *n))
        .collect::<Result<_>>()?;

    let mut errors = Table::new(
        "errors",
        &[
            "function",
            "preset",
            "dim",
            "unconstrained_error",
            "constrained_error",
            "iterations",
            "terminated",
            "grid_min_sdist",
            "input_norm",
            "output_norm",
        ],
    );
    let mut slopes = Table::new(
        "slopes",
        &[
            "function",
            "preset",
            "unconstrained_slope",
            "constrained_slope",
            "difference",
        ],
    );
    for (chunk, curve) in jobs
        .chunks(CONVERGENCE_DIMS.count())
        .zip(points.chunks(CONVERGENCE_DIMS.count()))
    {
        let (target, preset) = (chunk[0].0, &chunk[0].1);
        for p in curve {
            errors.push(vec![
                target.name().into(),
                preset.to_string().into(),
                p.dim.into(),
                p.unconstrained.into(),
                p.constrained.into(),
                p.iterations.into(),
                (if p.feasible {
                    "feasible"
                } else {
                    "not_feasible"
                })
                .into(),
                p.grid_min_sdist.into(),
                p.input_norm.into(),
                p.output_norm.into(),
            ]);
        }
        let dims: Vec<usize> = curve.iter().map(|p| p.dim).collect();
        let un: Vec<f64> = curve.iter().map(|p| p.unconstrained).collect();
        let co: Vec<f64> = curve.iter().map(|p| p.constrained).collect();
        let su = loglog_slope(&dims, &un).unwrap_or(f64::NAN);
        let sc = loglog_slope(&dims, &co).unwrap_or(f64::NAN);
        slopes.push(vec![
            target.name().into(),
            preset.to_string().into(),
            su.into(),
            sc.into(),
            (sc - su).abs().into(),
        ]);
    }
    Ok(vec![ExperimentReport {
        name: "convergence".into(),
        notes: vec![format!(
            "greedy projection in L2, at most {CONVERGENCE_MAX_ITERS} iterations per point"
        )],
        tables: vec![errors, slopes],
        ..ExperimentReport::default()
    }])
}

pub fn exotic_cases() -> Result<Vec<Case>> {
    let mut cases = Vec::new();
    for preset in ["J1", "J2"] {
        for dim in [4, 9, 31] {
            let name = format!("exotic_{}_n{dim}", preset.to_lowercase());
            cases.push(Case::greedy(name, Target::Abs, dim, 0, preset)?);
        }
    }
    Ok(cases)
}

/// |x| under the two piecewise-linear constraint sets.
pub fn run_exotic() -> Result<Vec<ExperimentReport>> {
    let outcomes = run_all(&exotic_cases()?)?;
    let mut summary = summary_report("exotic", &outcomes);
    let mut t = Table::new("origin", &["name", "v_tilde_at_zero"]);
    for o in &outcomes {
        let basis = sobolev_orthonormalize(o.case.sobolev_order, o.case.dim)?;
        t.push(vec![
            o.case.name.clone().into(),
            basis.eval_element(&o.result.coeffs, 0.0, 0).into(),
        ]);
    }
    summary.tables.push(t);
    let mut reports = vec![summary];
    reports.extend(outcomes.into_iter().map(|o| o.report));
    Ok(reports)
}

/// ℓ(y)(x) = Σ_j ŵ_j(y) v_j(x), where ŵ(y) is the unit representor of
/// c ↦ v^{(m)}(y), sampled on a square grid.
pub fn correction_surface(basis: &OrthonormalBasis, m: usize, points: usize) -> Result<Table> {
    let xs: Vec<f64> = grid(points).collect();
    let n = basis.dim();
    let mut values = DMatrix::zeros(points, n);
    for (i, &x) in xs.iter().enumerate() {
        values.row_mut(i).copy_from(&basis.eval(x, 0)?.transpose());
    }
    let mut t = Table::new("surface", &["y", "x", "ell"]);
    for &y in &xs {
        let w = basis.eval(y, m)?;
        let norm = w.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateRepresentor { y });
        }
        let ell = &values * (w / norm);
        for (i, &x) in xs.iter().enumerate() {
            t.push(vec![y.into(), x.into(), ell[i].into()]);
        }
    }
    Ok(t)
}

/// Correction-function surfaces for m, q ∈ {0, 1, 2} and N ∈ {6, 31}.
pub fn run_corrections() -> Result<Vec<ExperimentReport>> {
    let mut jobs = Vec::new();
    for dim in [6, 31] {
        for q in 0..=2 {
            for m in 0..=2 {
                jobs.push((dim, q, m));
            }
        }
    }
    jobs.par_iter()
        .map(|&(dim, q, m)| {
            let basis = sobolev_orthonormalize(q, dim)?;
            Ok(ExperimentReport {
                name: format!("corrections_n{dim}_h{q}_m{m}"),
                tables: vec![correction_surface(&basis, m, SURFACE_POINTS)?],
                ..ExperimentReport::default()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ::approx::assert_abs_diff_eq;

    #[test]
    fn grid_includes_endpoints_and_half() {
        let g: Vec<f64> = grid(101).collect();
        assert_eq!(g[0], -1.0);
        assert_eq!(g[100], 1.0);
        assert_eq!(g[75], 0.5);
        assert_eq!(g[50], 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let dims: Vec<usize> = (2..=40).collect();
        let errs: Vec<f64> = dims.iter().map(|&n| 3.0 * (n as f64).powf(-2.5)).collect();
        assert_abs_diff_eq!(loglog_slope(&dims, &errs).unwrap(), -2.5, epsilon = 1e-12);
        assert!(loglog_slope(&[4], &[1.0]).is_none());
    }

    #[test]
    fn grid_audit_matches_solver_distance() {
        let basis = sobolev_orthonormalize(1, 7).unwrap();
        let set: ConstraintSet = "F0+F1"
            .parse::<Preset>()
            .unwrap()
            .constraint_set(&basis)
            .unwrap();
        let c = DVector::from_fn(7, |i, _| ((i * 7 + 3) % 5) as f64 - 2.0);
        let ctx = ConstraintContext::new(&set, &basis).unwrap();
        let exact = ctx.min_sdist_global(&c).unwrap().value;
        let audit = grid_audit(&c, &set, &basis, AUDIT_POINTS).unwrap();
        assert!(audit >= exact - 1e-12);
        assert!(audit - exact < 1e-4);
    }

    #[test]
    fn small_case_runs_feasible() {
        let case = Case::greedy("t".into(), Target::Test(2), 6, 0, "F0").unwrap();
        let o = run_case(&case).unwrap();
        assert!(o.feasible());
        assert!(o.grid_min_sdist >= -1e-8);
        assert_abs_diff_eq!(o.eta.eta, 1.147, epsilon = 0.02);
        let curves = o.report.table("curves").unwrap();
        assert_eq!(curves.rows.len(), CURVE_POINTS);
    }

    #[test]
    fn correction_surface_peaks_on_the_diagonal_for_l2() {
        let basis = sobolev_orthonormalize(0, 6).unwrap();
        let t = correction_surface(&basis, 0, 21).unwrap();
        assert_eq!(t.rows.len(), 21 * 21);
        // For m = 0 the representor evaluated at its own point is ‖w(y)‖.
        for row in t.rows.chunks(21) {
            let y = row[0][0].as_f64().unwrap();
            let at_y = row.iter().find(|r| r[1].as_f64().unwrap() == y).unwrap()[2]
                .as_f64()
                .unwrap();
            assert_abs_diff_eq!(at_y, basis.eval(y, 0).unwrap().norm(), epsilon = 1e-12);
        }
    }
}
