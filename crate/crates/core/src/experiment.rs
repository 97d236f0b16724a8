//! Batch experiments: one model config, a set of solvers, a penalization
//! schedule, CSV artifacts and a plain-text summary.

use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::dual::{dual_value_lattice, dual_value_tree};
use crate::error::{Error, Result};
use crate::forward::TimeGrid;
use crate::grid::{SpaceGrid, ValueGrid};
use crate::model::{build_model, Config, MarkSpace, ModelSpec};
use crate::penalized::penalization_sweep;
use crate::qvi::{
    iterated_optimal_stopping, residual_check, solve_penalized_ipde, solve_qvi, Boundary, FdScheme,
};
use crate::regression::RegressionBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    Regression,
    LatticeDual,
    TreeDual,
    Ipde,
    Qvi,
    IteratedStopping,
}

impl Solver {
    pub const ALL: [Solver; 6] = [
        Solver::Regression,
        Solver::LatticeDual,
        Solver::TreeDual,
        Solver::Ipde,
        Solver::Qvi,
        Solver::IteratedStopping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Regression => "regression",
            Solver::LatticeDual => "lattice-dual",
            Solver::TreeDual => "tree-dual",
            Solver::Ipde => "ipde",
            Solver::Qvi => "qvi",
            Solver::IteratedStopping => "iterated-stopping",
        }
    }

    /// QVI and iterated stopping approximate the limit and ignore `n`.
    pub fn uses_level(self) -> bool {
        !matches!(self, Solver::Qvi | Solver::IteratedStopping)
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown solver `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub spec: ModelSpec,
    pub solvers: Vec<Solver>,
    pub levels: Vec<f64>,
    pub paths: usize,
    /// Time steps of the regression scheme. The finite-difference solvers
    /// pick their own step count from the CFL bound.
    pub steps: usize,
    pub dx: f64,
    pub bounds: (f64, f64),
    pub seed: u64,
    pub basis: RegressionBasis,
    pub tree_depth: usize,
    pub impulses: usize,
    pub boundary: Boundary,
    pub out_dir: PathBuf,
    /// Fill the `runtime_ms` column of the sweep CSV. Off by default so that
    /// reruns give byte-identical CSVs.
    pub record_runtime: bool,
}

impl ExperimentPlan {
    /// Reads model and experiment keys from a parsed config; missing
    /// experiment keys take defaults.
    pub fn from_config(cfg: &Config, out_dir: impl Into<PathBuf>) -> Result<Self> {
        let spec = build_model(cfg)?;
        let solvers = match cfg.get("solvers") {
            None => vec![Solver::Regression],
            Some(s) => s
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<Result<Vec<Solver>>>()?,
        };
        let bounds = match cfg.parse_list::<f64>("box")? {
            None => (-4.0, 4.0),
            Some(b) if b.len() == 2 => (b[0], b[1]),
            Some(_) => return Err(Error::Invalid("box expects `lo, hi`".into())),
        };
        let basis = match cfg.get("basis").unwrap_or("polynomial") {
            "polynomial" => {
                RegressionBasis::polynomial(cfg.parse_value("basis.degree")?.unwrap_or(3))
            }
            "local" => {
                RegressionBasis::local_hypercube(cfg.parse_value("basis.bins")?.unwrap_or(16))
            }
            other => return Err(Error::Invalid(format!("unknown basis `{other}`"))),
        };
        let boundary = match cfg.get("boundary") {
            None => Boundary::default(),
            Some(b) => b.parse()?,
        };
        let plan = ExperimentPlan {
            spec,
            solvers,
            levels: cfg
                .parse_list("n")?
                .unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]),
            paths: cfg.parse_value("paths")?.unwrap_or(10_000),
            steps: cfg.parse_value("steps")?.unwrap_or(50),
            dx: cfg.parse_value("dx")?.unwrap_or(0.05),
            bounds,
            seed: cfg.parse_value("seed")?.unwrap_or(1),
            basis,
            tree_depth: cfg.parse_value("tree.depth")?.unwrap_or(3),
            impulses: cfg.parse_value("impulses")?.unwrap_or(3),
            boundary,
            out_dir: out_dir.into(),
            record_runtime: false,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Solver selection must match the model shape.
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::Invalid("no solver selected".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|n| !(*n >= 0.0) || !n.is_finite()) {
            return Err(Error::Invalid(
                "penalization levels must be finite and nonnegative".into(),
            ));
        }
        for &s in &self.solvers {
            let fd = !matches!(s, Solver::Regression);
            if fd && self.spec.dim() != 1 {
                return Err(Error::NotOneDimensional(s.name()));
            }
            match s {
                Solver::LatticeDual | Solver::TreeDual if !self.spec.is_impulse_shape() => {
                    return Err(Error::NotImpulseShape("dual oracle"));
                }
                Solver::IteratedStopping if !self.spec.is_impulse_shape() => {
                    return Err(Error::NotImpulseShape("iterated optimal stopping"));
                }
                Solver::Qvi if !self.spec.has_obstacle_form() => {
                    return Err(Error::NotObstacleForm("QVI solver"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn max_level(&self) -> f64 {
        self.levels.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub solver: Solver,
    /// `(n, Y at (0, x0))`
    pub values: Vec<(f64, f64)>,
    pub error: Option<String>,
    pub runtime_ms: f64,
    /// Nondecreasing in `n`, where meaningful.
    pub monotone: Option<bool>,
}

impl SolverResult {
    pub fn value(&self, n: f64) -> Option<f64> {
        self.values.iter().find(|(m, _)| *m == n).map(|v| v.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub n: f64,
    pub solver: Solver,
    pub y0: f64,
    pub reference_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub reference: Solver,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Reference is `ipde` when present, else the first solver.
    pub fn from_results(results: &[SolverResult], levels: &[f64]) -> Result<Self> {
        if results.len() < 2 {
            return Err(Error::Invalid(
                "comparison needs at least two solvers".into(),
            ));
        }
        let reference = results
            .iter()
            .find(|r| r.solver == Solver::Ipde)
            .unwrap_or(&results[0]);
        let mut rows = Vec::new();
        for &n in levels {
            let base = reference.value(n).unwrap_or(f64::NAN);
            for r in results {
                let y0 = r.value(n).unwrap_or(f64::NAN);
                rows.push(ComparisonRow {
                    n,
                    solver: r.solver,
                    y0,
                    reference_gap: y0 - base,
                });
            }
        }
        Ok(ComparisonTable {
            reference: reference.solver,
            rows,
        })
    }

    pub fn gap(&self, n: f64, solver: Solver) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.solver == solver)
            .map(|r| r.reference_gap)
    }

    /// `n, solver, y0, reference_gap`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,solver,y0,reference_gap")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.n, r.solver, r.y0, r.reference_gap)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub results: Vec<SolverResult>,
    pub comparison: Option<ComparisonTable>,
    pub summary: String,
}

impl ExperimentOutcome {
    pub fn failed(&self) -> bool {
        self.results.iter().any(|r| r.error.is_some())
    }

    /// 0 on success, 2 when any solver failed.
    pub fn exit_code(&self) -> i32 {
        if self.failed() {
            2
        } else {
            0
        }
    }

    pub fn result(&self, solver: Solver) -> Option<&SolverResult> {
        self.results.iter().find(|r| r.solver == solver)
    }
}

struct Runner<'a> {
    plan: &'a ExperimentPlan,
    marks: MarkSpace,
    x0: f64,
}

impl Runner<'_> {
    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.plan.out_dir.join(name))?))
    }

    fn scheme(&self) -> Result<FdScheme> {
        let space = SpaceGrid::new(self.plan.bounds.0, self.plan.bounds.1, self.plan.dx)?;
        FdScheme::with_cfl(
            &self.plan.spec,
            &self.marks,
            space,
            self.plan.boundary,
            self.plan.max_level(),
        )
    }

    fn write_grid(&self, name: &str, v: &ValueGrid) -> Result<()> {
        let mut w = self.create(name)?;
        v.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Runs one solver, pushing values as they complete so partial output
    /// survives an error.
    fn run(&self, solver: Solver, values: &mut Vec<(f64, f64)>) -> Result<()> {
        let plan = self.plan;
        let spec = &plan.spec;
        match solver {
            Solver::Regression => {
                let grid = TimeGrid::new(spec.horizon(), plan.steps)?;
                let table = penalization_sweep(
                    spec,
                    &self.marks,
                    &grid,
                    &plan.basis,
                    &plan.levels,
                    plan.paths,
                    plan.seed,
                )?;
                let mut w = self.create("regression.csv")?;
                table.write_csv(&mut w, plan.record_runtime)?;
                w.flush()?;
                for r in &table.rows {
                    if let Some(e) = &r.error {
                        return Err(Error::Invalid(e.clone()));
                    }
                    values.push((r.n, r.y0));
                }
            }
            Solver::Ipde | Solver::LatticeDual => {
                let scheme = self.scheme()?;
                for &n in &plan.levels {
                    let v = if solver == Solver::Ipde {
                        solve_penalized_ipde(spec, &self.marks, &scheme, n)?
                    } else {
                        dual_value_lattice(spec, &self.marks, &scheme, n)?
                    };
                    self.write_grid(&format!("{solver}_n{n}.csv"), &v)?;
                    values.push((n, v.value_at(0, self.x0)));
                }
            }
            Solver::TreeDual => {
                let mut w = self.create("tree-dual.csv")?;
                writeln!(w, "n,y0")?;
                for &n in &plan.levels {
                    let y = dual_value_tree(spec, &self.marks, plan.tree_depth, n, plan.dx)?;
                    writeln!(w, "{n},{y}")?;
                    values.push((n, y));
                }
                w.flush()?;
            }
            Solver::Qvi => {
                let scheme = self.scheme()?;
                let v = solve_qvi(spec, &self.marks, &scheme)?;
                self.write_grid("qvi.csv", &v)?;
                let report = residual_check(&v, spec, &self.marks, &scheme);
                let mut w = self.create("qvi_residual.csv")?;
                report.write_csv(&mut w)?;
                w.flush()?;
                let y = v.value_at(0, self.x0);
                values.extend(plan.levels.iter().map(|&n| (n, y)));
            }
            Solver::IteratedStopping => {
                let scheme = self.scheme()?;
                let v = iterated_optimal_stopping(spec, &self.marks, &scheme, plan.impulses)?;
                self.write_grid("iterated-stopping.csv", &v)?;
                let y = v.value_at(0, self.x0);
                values.extend(plan.levels.iter().map(|&n| (n, y)));
            }
        }
        Ok(())
    }
}

fn nondecreasing(values: &[(f64, f64)]) -> bool {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted.windows(2).all(|w| w[1].1 >= w[0].1)
}

/// Runs every selected solver, writing per-solver CSVs, `comparison.csv`
/// (two or more solvers) and `summary.txt` into the output directory.
///
/// Solver failures do not abort the run; they are reported in the summary
/// and make [`ExperimentOutcome::exit_code`] return 2.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutcome> {
    plan.validate()?;
    fs::create_dir_all(&plan.out_dir)?;
    let runner = Runner {
        plan,
        marks: plan.spec.mark_space()?,
        x0: plan.spec.x0()[0],
    };
    let mut results = Vec::new();
    for &solver in &plan.solvers {
        let start = Instant::now();
        let mut values = Vec::new();
        let error = runner.run(solver, &mut values).err().map(|e| e.to_string());
        let monotone = (solver.uses_level() && solver != Solver::Regression && values.len() > 1)
            .then(|| nondecreasing(&values));
        results.push(SolverResult {
            solver,
            values,
            error,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
            monotone,
        });
    }
    // The sweep carries its own standard-error aware flags.
    if let Some(r) = results.iter_mut().find(|r| r.solver == Solver::Regression) {
        if r.error.is_none() && r.values.len() > 1 {
            let text = fs::read_to_string(plan.out_dir.join("regression.csv"))?;
            r.monotone = Some(!text.contains("violation"));
        }
    }

    let comparison = if results.len() >= 2 {
        let table = ComparisonTable::from_results(&results, &plan.levels)?;
        let mut w = BufWriter::new(File::create(plan.out_dir.join("comparison.csv"))?);
        table.write_csv(&mut w)?;
        w.flush()?;
        Some(table)
    } else {
        None
    };

    let summary = summarize(plan, &results, comparison.as_ref());
    fs::write(plan.out_dir.join("summary.txt"), &summary)?;
    Ok(ExperimentOutcome {
        results,
        comparison,
        summary,
    })
}

/// Runs the plan and returns the solver comparison; needs two or more
/// solvers.
pub fn compare_solvers(plan: &ExperimentPlan) -> Result<ComparisonTable> {
    if plan.solvers.len() < 2 {
        return Err(Error::Invalid(
            "comparison needs at least two solvers".into(),
        ));
    }
    run_experiment(plan)?
        .comparison
        .ok_or_else(|| Error::Invalid("comparison needs at least two solvers".into()))
}

fn summarize(
    plan: &ExperimentPlan,
    results: &[SolverResult],
    comparison: Option<&ComparisonTable>,
) -> String {
    let mut s = String::new();
    let x0 = plan.spec.x0()[0];
    let _ = writeln!(s, "Y(0, {x0}) by solver and penalization level");
    for r in results {
        let _ = writeln!(s, "\n[{}] runtime {:.1} ms", r.solver, r.runtime_ms);
        for (n, y) in &r.values {
            let _ = writeln!(s, "  n = {n:<8} y0 = {y:.10}");
        }
        match r.monotone {
            Some(true) => s.push_str("  monotone in n: yes\n"),
            Some(false) => s.push_str("  monotone in n: NO\n"),
            None => {}
        }
        if let Some(e) = &r.error {
            let _ = writeln!(s, "  FAILED: {e}");
        }
    }
    if results.len() >= 2 {
        s.push_str("\npairwise discrepancies |a - b|\n");
        for &n in &plan.levels {
            for (i, a) in results.iter().enumerate() {
                for b in &results[i + 1..] {
                    if let (Some(ya), Some(yb)) = (a.value(n), b.value(n)) {
                        let _ = writeln!(
                            s,
                            "  n = {n:<8} {} vs {}: {:.3e}",
                            a.solver,
                            b.solver,
                            (ya - yb).abs()
                        );
                    }
                }
            }
        }
    }
    if let Some(c) = comparison {
        let _ = writeln!(s, "\nreference solver: {}", c.reference);
    }
    if results.iter().any(|r| r.solver.uses_level()) && plan.levels.len() > 1 {
        s.push_str(
            "\nnote: the limit n -> infinity is approached along the schedule above; \
             no convergence rate is known, so extrapolation from it is heuristic.\n",
        );
    }
    s
}

/// Loads a config file and applies `key = value` overrides on top.
pub fn load_config(path: &Path, overrides: &[(&str, String)]) -> Result<Config> {
    let mut cfg = Config::load(path)?;
    for (k, v) in overrides {
        cfg.set(k, v.clone())?;
    }
    Ok(cfg)
}
