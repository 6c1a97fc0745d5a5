//! Experiment plumbing: run configuration, convergence families, CSV output
//! and field dumps.

use crate::analysis::{exact_errors, fill_orders, self_convergence, ConvergenceRow};
use crate::manufactured::{by_id, Example, ProblemSpec};
use crate::optimizer::{fixed_point_solve, ControlField, OptimalSolution, OptimizerOptions};
use crate::solver::{Discretization, DtRule};
use crate::{Error, Result, Vec2};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable capping the worker threads of `parallel_rows`.
pub const THREADS_ENV: &str = "SGFEM_THREADS";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub example: Example,
    pub beta: [f64; 2],
    pub alpha: f64,
    /// Squares per direction, strictly increasing.
    pub n: Vec<usize>,
    pub dt_rule: DtRule,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub output: Option<PathBuf>,
    /// Directory for field dumps of the finest row.
    pub emit_fields: Option<PathBuf>,
    /// Plot resolution of field dumps.
    pub resolution: usize,
    /// `(N_ref, M_ref)` of the reference run for problems without a closed form.
    pub reference: (usize, usize),
    pub parallel_rows: bool,
    /// Fill the `seconds` column; off by default so repeated runs give
    /// identical files.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizerOptions::default();
        Self {
            example: Example::Circle,
            beta: [1.0, 10.0],
            alpha: 1.0,
            n: vec![8, 16, 32, 64],
            dt_rule: DtRule::H2,
            tol: opt.tol,
            max_iter: opt.max_iter,
            damping: opt.damping,
            output: None,
            emit_fields: None,
            resolution: 64,
            reference: (128, 4096),
            parallel_rows: false,
            timing: false,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("cannot parse `{}`", s.trim())))
        .collect()
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected a boolean, got `{other}`")),
    }
}

fn parse_one<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}`"))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "example" => {
                self.example = Example::from_id(value).ok_or_else(|| format!("unknown example `{value}`"))?;
            }
            "beta" => {
                let b: Vec<f64> = parse_list(value)?;
                if b.len() != 2 {
                    return Err(format!("beta needs two values, got {}", b.len()));
                }
                self.beta = [b[0], b[1]];
            }
            "alpha" => self.alpha = parse_one(value)?,
            "n" => self.n = parse_list(value)?,
            "dt_rule" => self.dt_rule = value.parse()?,
            "tol" => self.tol = parse_one(value)?,
            "max_iter" => self.max_iter = parse_one(value)?,
            "damping" => self.damping = parse_one(value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            "emit_fields" => self.emit_fields = Some(PathBuf::from(value)),
            "resolution" => self.resolution = parse_one(value)?,
            "reference" => {
                let r: Vec<usize> = parse_list(value)?;
                if r.len() != 2 {
                    return Err("reference needs `N_ref,M_ref`".into());
                }
                self.reference = (r[0], r[1]);
            }
            "parallel_rows" => self.parallel_rows = parse_bool(value)?,
            "timing" => self.timing = parse_bool(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Reads flat `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: k + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            config.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Err(Error::Config { line: 0, message });
        if self.n.is_empty() || self.n.contains(&0) {
            return fail("n needs at least one positive mesh size".into());
        }
        if self.n.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("n must be strictly increasing, got {:?}", self.n));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return fail(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return fail("max_iter must be at least 1".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return fail(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return fail(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta[0] > 0.0 && self.beta[1] > 0.0) {
            return fail(format!("beta must be positive, got {:?}", self.beta));
        }
        if self.resolution == 0 {
            return fail("resolution must be positive".into());
        }
        Ok(())
    }

    pub fn problem(&self) -> ProblemSpec {
        let mut p = by_id(self.example.id(), self.beta[0], self.beta[1]).expect("every example id resolves");
        p.alpha = self.alpha;
        p
    }

    pub fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            damping: self.damping,
        }
    }

    pub fn steps(&self, n: usize) -> usize {
        self.dt_rule.steps(n, self.problem().t_final)
    }
}

/// A discretization with its optimal solution.
pub struct Run {
    pub disc: Discretization,
    pub solution: OptimalSolution,
    pub seconds: f64,
}

/// Sets up and solves one mesh from a zero initial control.
pub fn solve_one(problem: ProblemSpec, n: usize, m: usize, options: OptimizerOptions) -> Result<Run> {
    let start = Instant::now();
    let disc = Discretization::new(problem, n, m)?;
    let init = ControlField::zeros_for(&disc);
    let solution = fixed_point_solve(&disc, &init, options)?;
    Ok(Run {
        disc,
        solution,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub example: Example,
    pub beta: [f64; 2],
    pub rows: Vec<ConvergenceRow>,
    /// Mesh sizes whose optimization stopped at `max_iter`.
    pub unconverged: Vec<usize>,
    /// The last unconverged row's final change.
    pub last_change: f64,
}

impl ConvergenceTable {
    pub fn ensure_converged(&self) -> Result<()> {
        match self.unconverged.last() {
            None => Ok(()),
            Some(_) => Err(Error::NotConverged {
                iterations: self
                    .rows
                    .iter()
                    .filter(|r| self.unconverged.contains(&r.n))
                    .map(|r| r.iterations)
                    .max()
                    .unwrap_or(0),
                change: self.last_change,
            }),
        }
    }
}

fn threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `work` on every item, on up to `threads` scoped workers when
/// `parallel` is set; results keep the input order.
fn map_rows<T: Sync, R: Send>(items: &[T], parallel: bool, work: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = if parallel { threads().min(items.len()) } else { 1 };
    if workers <= 1 {
        return items.iter().map(work).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let done = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = work(&items[k]);
                done.lock().expect("no worker panics while holding the lock")[k] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every row computed")).collect()
}

/// Solves every mesh of the family and measures errors against the exact
/// solution, or against a reference run when there is none.
pub fn run_convergence(config: &RunConfig) -> Result<ConvergenceTable> {
    config.validate()?;
    let problem = config.problem();
    let options = config.options();
    let reference = if problem.has_exact() {
        None
    } else {
        let (nr, mr) = config.reference;
        Some(solve_one(problem.clone(), nr, mr, options)?)
    };
    let results = map_rows(&config.n, config.parallel_rows, |&n| -> Result<(ConvergenceRow, Option<f64>)> {
        let run = solve_one(problem.clone(), n, config.steps(n), options)?;
        let errors = match &reference {
            None => exact_errors(&run.disc, &run.solution).expect("closed form available"),
            Some(r) => self_convergence(&r.disc, &r.solution, &run.disc, &run.solution)?,
        };
        let change = run.solution.report.changes.last().copied().unwrap_or(0.0);
        let row = ConvergenceRow {
            n,
            m: run.disc.grid.m,
            err_state: errors[0],
            err_control: errors[1],
            err_adjoint: errors[2],
            order_state: None,
            order_control: None,
            order_adjoint: None,
            iterations: run.solution.report.iterations,
            wall_time: run.seconds,
        };
        let unconverged = (!run.solution.report.converged).then_some(change);
        if let (Some(dir), true) = (&config.emit_fields, Some(&n) == config.n.last()) {
            dump_fields(&run.disc, &run.solution, config.resolution, dir)?;
        }
        Ok((row, unconverged))
    });
    let mut rows = Vec::new();
    let mut unconverged = Vec::new();
    let mut last_change = 0.0;
    for r in results {
        let (row, change) = r?;
        if let Some(change) = change {
            unconverged.push(row.n);
            last_change = change;
        }
        rows.push(row);
    }
    fill_orders(&mut rows)?;
    Ok(ConvergenceTable {
        example: config.example,
        beta: config.beta,
        rows,
        unconverged,
        last_change,
    })
}

pub const CSV_HEADER: &str =
    "example,beta_minus,beta_plus,N,M,err_state,order_state,err_control,order_control,err_adjoint,order_adjoint,iters,seconds";

fn cell(v: Option<f64>) -> String {
    v.map(|o| format!("{o:.4}")).unwrap_or_default()
}

/// The table as CSV; the `seconds` column stays empty unless `timing`.
pub fn to_csv(table: &ConvergenceTable, timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        let seconds = if timing { format!("{:.3}", r.wall_time) } else { String::new() };
        writeln!(
            out,
            "{},{},{},{},{},{:.6e},{},{:.6e},{},{:.6e},{},{},{}",
            table.example.id(),
            table.beta[0],
            table.beta[1],
            r.n,
            r.m,
            r.err_state,
            cell(r.order_state),
            r.err_control,
            cell(r.order_control),
            r.err_adjoint,
            cell(r.order_adjoint),
            r.iterations,
            seconds
        )
        .expect("writing to a string");
    }
    out
}

/// Human-readable summary in the layout of a convergence table.
pub fn summary(table: &ConvergenceTable) -> String {
    let mut out = format!(
        "{} beta = ({}, {})\n{:>5} {:>6} {:>12} {:>7} {:>12} {:>7} {:>12} {:>7} {:>5}\n",
        table.example, table.beta[0], table.beta[1], "N", "M", "state", "order", "control", "order", "adjoint", "order", "iter"
    );
    let o = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    for r in &table.rows {
        writeln!(
            out,
            "{:>5} {:>6} {:>12.4e} {:>7} {:>12.4e} {:>7} {:>12.4e} {:>7} {:>5}",
            r.n,
            r.m,
            r.err_state,
            o(r.order_state),
            r.err_control,
            o(r.order_control),
            r.err_adjoint,
            o(r.order_adjoint),
            r.iterations
        )
        .expect("writing to a string");
    }
    out
}

/// Value of a discrete field at an arbitrary point of the domain.
fn point_value(disc: &Discretization, coeffs: &[f64], x: Vec2) -> Result<f64> {
    let loc = disc.space.mesh.locate_point(x)?;
    let side = disc.space.point_side(loc.element, x);
    Ok(disc.space.evaluate(coeffs, loc.element, x, side))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Writes `state.csv` and `adjoint.csv` on a `(P+1) x (P+1)` grid (the
/// fields on the last interval, `Y^M` and `P^{M-1}`) and `control.csv` at
/// the interface points of the last time node. Exact and error columns are
/// added when the problem has a closed form.
pub fn dump_fields(disc: &Discretization, sol: &OptimalSolution, resolution: usize, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let p = &disc.problem;
    let m = disc.grid.m;
    let t_end = disc.grid.knot(m);
    let exact = p.has_exact();
    let header = if exact { "x,y,value,exact,error\n" } else { "x,y,value\n" };
    let fields: [(&str, &[f64], f64); 2] = [
        ("state.csv", sol.state.on_interval(m), t_end),
        ("adjoint.csv", sol.adjoint.on_interval(m), disc.grid.knot(m - 1)),
    ];
    for (name, coeffs, t) in fields {
        let mut out = String::from(header);
        for j in 0..=resolution {
            for i in 0..=resolution {
                let x = Vec2::new(
                    -1.0 + 2.0 * i as f64 / resolution as f64,
                    -1.0 + 2.0 * j as f64 / resolution as f64,
                );
                let v = point_value(disc, coeffs, x)?;
                write!(out, "{},{},{:.12e}", x.x, x.y, v).expect("writing to a string");
                if exact {
                    let side = p.interface.side(x, 0.0);
                    let jet = if name == "state.csv" {
                        p.exact_state(x, side, t)
                    } else {
                        p.exact_adjoint(x, side, t)
                    };
                    let e = jet.map_or(0.0, |j| j.value);
                    write!(out, ",{:.12e},{:.12e}", e, v - e).expect("writing to a string");
                }
                out.push('\n');
            }
        }
        write_file(&dir.join(name), &out)?;
    }
    let (t, _) = disc.grid.gauss(m)[1];
    let mut out = String::from(if exact { "x,y,t,value,exact,error\n" } else { "x,y,t,value\n" });
    for (q, u) in disc.caches.interface.points.iter().zip(sol.control.slice(m, 1)) {
        write!(out, "{},{},{},{:.12e}", q.x.x, q.x.y, t, u).expect("writing to a string");
        if let Some(e) = p.exact_control(q.x, t) {
            write!(out, ",{:.12e},{:.12e}", e, u - e).expect("writing to a string");
        }
        out.push('\n');
    }
    write_file(&dir.join("control.csv"), &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config_with_comments() {
        let text = "# family\nexample = ex2c2\nbeta = 1, 10 # jump\nn = 4,8\ndt_rule = h1\ntol = 1e-8\n\ntiming = yes\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.example, Example::CubicConstrained);
        assert_eq!(c.beta, [1.0, 10.0]);
        assert_eq!(c.n, vec![4, 8]);
        assert_eq!(c.dt_rule, DtRule::H1);
        assert_eq!(c.tol, 1e-8);
        assert!(c.timing);
        c.validate().unwrap();
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let err = RunConfig::parse("example = ex1\n\nbeta = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = RunConfig::parse("colour = red").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        let err = RunConfig::parse("tol 1e-3").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
    }

    #[test]
    fn validation() {
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config { .. })));
        };
        bad(|c| c.tol = -1.0);
        bad(|c| c.tol = f64::NAN);
        bad(|c| c.n = vec![16, 8]);
        bad(|c| c.n = vec![]);
        bad(|c| c.damping = 0.0);
        bad(|c| c.max_iter = 0);
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn csv_layout() {
        let config = RunConfig {
            n: vec![4, 8],
            ..RunConfig::default()
        };
        let table = run_convergence(&config).unwrap();
        let csv = to_csv(&table, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first.len(), 13);
        assert_eq!(&first[..5], &["ex1", "1", "10", "4", "4"]);
        assert!(first[6].is_empty() && first[8].is_empty() && first[10].is_empty() && first[12].is_empty());
        let second: Vec<&str> = lines[2].split(',').collect();
        assert!(!second[6].is_empty());
        assert_eq!(csv, to_csv(&run_convergence(&config).unwrap(), false));
    }

    #[test]
    fn parallel_rows_match_sequential() {
        let config = RunConfig {
            n: vec![4, 8],
            ..RunConfig::default()
        };
        let parallel = RunConfig {
            parallel_rows: true,
            ..config.clone()
        };
        let a = to_csv(&run_convergence(&config).unwrap(), false);
        let b = to_csv(&run_convergence(&parallel).unwrap(), false);
        assert_eq!(a, b);
    }
}
