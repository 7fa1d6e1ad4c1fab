//! Process backend: writes the model as LP text, runs an external solver
//! from a command template, and reads its solution file back.
//!
//! The default template drives CBC. Placeholders in the template:
//! `{model_path}`, `{time_limit}` (seconds), `{solution_path}` and
//! `{start_path}` (CBC-format start file; the arguments containing it are
//! dropped when the model has no warm start).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::lp::{parse_name_values, write_lp, write_start_values};
use super::{Backend, RawSolution, SolveStatus};
use crate::error::{Error, Result};
use crate::milp::MilpModel;

/// Environment variable naming the solver executable.
pub const SOLVER_PATH_ENV: &str = "FEWBIT_SOLVER";

static SERIAL: Mutex<()> = Mutex::new(());

/// How the solver writes its solution file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionFormat {
    /// CBC's `-solu` output: a status line, then `index name value reduced`.
    Cbc,
    /// One `name value` pair per line; a written file means a feasible point.
    NameValue,
}

#[derive(Debug, Clone)]
pub struct ProcessBackend {
    executable: PathBuf,
    args: Vec<String>,
    start_args: Vec<String>,
    format: SolutionFormat,
    grace: Duration,
    serialize: bool,
    threads: usize,
    keep_dir: Option<PathBuf>,
}

fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}

impl ProcessBackend {
    /// CBC located through [`SOLVER_PATH_ENV`] or `cbc` on `PATH`.
    pub fn cbc() -> Result<Self> {
        let executable = match std::env::var_os(SOLVER_PATH_ENV) {
            Some(p) => PathBuf::from(p),
            None => find_on_path("cbc").ok_or_else(|| {
                Error::Solver(format!(
                    "no CBC executable found; install cbc or set {SOLVER_PATH_ENV}"
                ))
            })?,
        };
        Ok(Self::cbc_at(executable))
    }

    pub fn cbc_at(executable: impl Into<PathBuf>) -> Self {
        let args = [
            "{model_path}",
            "-timeMode",
            "elapsed",
            "-sec",
            "{time_limit}",
            "-threads",
            "{threads}",
            "{start_args}",
            "-solve",
            "-printingOptions",
            "all",
            "-solu",
            "{solution_path}",
        ];
        ProcessBackend {
            executable: executable.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
            start_args: vec!["-mips".into(), "{start_path}".into()],
            format: SolutionFormat::Cbc,
            grace: Duration::from_secs(10),
            serialize: false,
            threads: 1,
            keep_dir: None,
        }
    }

    /// Any executable driven by a custom argument template.
    pub fn from_template(
        executable: impl Into<PathBuf>,
        args: Vec<String>,
        format: SolutionFormat,
    ) -> Self {
        ProcessBackend {
            executable: executable.into(),
            args,
            start_args: Vec::new(),
            format,
            grace: Duration::from_secs(10),
            serialize: false,
            threads: 1,
            keep_dir: None,
        }
    }

    /// Run at most one solve at a time across the process.
    pub fn serialized(mut self, yes: bool) -> Self {
        self.serialize = yes;
        self
    }

    pub fn threads(mut self, n: usize) -> Self {
        self.threads = n.max(1);
        self
    }

    /// Extra time granted past the limit before the process is killed.
    pub fn grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    /// Copy the model, start, log and solution files of every solve into
    /// `dir`, prefixed by the model name.
    pub fn keep_files(mut self, dir: impl Into<PathBuf>) -> Self {
        self.keep_dir = Some(dir.into());
        self
    }

    pub fn executable(&self) -> &Path {
        &self.executable
    }

    fn command_args(&self, dir: &Path, time_limit: Duration, with_start: bool) -> Vec<String> {
        let fill = |a: &str| {
            a.replace("{model_path}", &dir.join("model.lp").to_string_lossy())
                .replace("{solution_path}", &dir.join("solution.txt").to_string_lossy())
                .replace("{start_path}", &dir.join("mipstart.txt").to_string_lossy())
                .replace("{time_limit}", &format!("{:.3}", time_limit.as_secs_f64()))
                .replace("{threads}", &self.threads.to_string())
        };
        let mut out = Vec::new();
        for a in &self.args {
            if a == "{start_args}" {
                if with_start {
                    out.extend(self.start_args.iter().map(|s| fill(s)));
                }
            } else {
                out.push(fill(a));
            }
        }
        out
    }
}

/// CBC's start format: a status header, then `index name value 0` lines.
fn cbc_start_file(model: &MilpModel, values: &[f64]) -> String {
    let mut out = String::from("Stopped on iterations - objective value 0\n");
    for (n, (var, x)) in model.vars().iter().zip(values).enumerate() {
        out.push_str(&format!("{n} {} {x} 0\n", var.name));
    }
    out
}

/// Parse a solution document in `format`. For [`SolutionFormat::NameValue`]
/// every variable must be present and the status is `feasible-limit`.
pub fn parse_solution(
    model: &MilpModel,
    text: &str,
    format: SolutionFormat,
) -> Result<(SolveStatus, Vec<f64>)> {
    match format {
        SolutionFormat::Cbc => parse_cbc_solution(model, text),
        SolutionFormat::NameValue => {
            let parsed = parse_name_values(model, text)?;
            let values = parsed
                .into_iter()
                .zip(model.vars())
                .map(|(v, var)| {
                    v.ok_or_else(|| Error::SolutionParse(format!("no value for {}", var.name)))
                })
                .collect::<Result<_>>()?;
            Ok((SolveStatus::FeasibleLimit, values))
        }
    }
}

fn status_of(line: &str) -> SolveStatus {
    let l = line.trim_start();
    if l.contains("no integer solution") {
        SolveStatus::NoIncumbent
    } else if l.starts_with("Optimal") {
        SolveStatus::Optimal
    } else if l.starts_with("Stopped") {
        SolveStatus::FeasibleLimit
    } else if l.starts_with("Infeasible") || l.starts_with("Integer infeasible") {
        SolveStatus::Infeasible
    } else {
        SolveStatus::Error
    }
}

/// Parse a CBC solution document against `model`. Row entries are skipped;
/// names that are neither rows nor variables are an error. Variables the
/// document omits take zero, which is how CBC prints zero columns.
pub fn parse_cbc_solution(model: &MilpModel, text: &str) -> Result<(SolveStatus, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::SolutionParse("empty solution document".into()))?;
    let status = status_of(header);
    let mut values = vec![0.0; model.vars().len()];
    for (n, line) in lines.enumerate() {
        let line = line.trim_start().trim_start_matches("**").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (name, value) = match fields.as_slice() {
            [_, name, value, ..] => (*name, *value),
            _ => {
                return Err(Error::SolutionParse(format!(
                    "line {}: expected `index name value`",
                    n + 2
                )))
            }
        };
        match model.lookup(name) {
            Some(id) => {
                values[id.0] = value.parse().map_err(|_| {
                    Error::SolutionParse(format!("line {}: bad number {value}", n + 2))
                })?;
            }
            None if model.has_row(name) => {}
            None => {
                return Err(Error::SolutionParse(format!(
                    "line {}: unknown name {name}",
                    n + 2
                )))
            }
        }
    }
    Ok((status, values))
}

/// Relative gap `|bound − incumbent| / max(1, |incumbent|)` from the
/// summary CBC prints when it stops.
fn gap_from_log(log: &str) -> Option<f64> {
    let field = |key: &str| {
        log.lines()
            .filter_map(|l| l.trim().strip_prefix(key))
            .filter_map(|v| v.trim().parse::<f64>().ok())
            .next_back()
    };
    let objective = field("Objective value:")?;
    let bound = field("Upper bound:").or_else(|| field("Lower bound:"))?;
    Some((bound - objective).abs() / objective.abs().max(1.0))
}

impl Backend for ProcessBackend {
    fn name(&self) -> &str {
        "process"
    }

    fn gap_definition(&self) -> &str {
        match self.format {
            SolutionFormat::Cbc => "|best bound − incumbent| / max(1, |incumbent|)",
            SolutionFormat::NameValue => "not reported",
        }
    }

    fn run(&self, model: &MilpModel, time_limit: Duration) -> Result<RawSolution> {
        let _guard = if self.serialize {
            Some(SERIAL.lock().unwrap_or_else(|e| e.into_inner()))
        } else {
            None
        };
        let dir = tempfile::Builder::new()
            .prefix("fewbit-solve")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let path = |name: &str| dir.path().join(name);
        let write = |name: &str, text: &str| {
            fs::write(path(name), text).map_err(|e| Error::io(path(name), e))
        };
        write("model.lp", &write_lp(model)?)?;
        let with_start = match model.warm_start() {
            Some(ws) => {
                write("start.txt", &write_start_values(model, ws)?)?;
                write("mipstart.txt", &cbc_start_file(model, ws))?;
                true
            }
            None => false,
        };

        let args = self.command_args(dir.path(), time_limit, with_start);
        let stdout = fs::File::create(path("solver.log")).map_err(|e| Error::io(path("solver.log"), e))?;
        let stderr = stdout.try_clone().map_err(|e| Error::io(path("solver.log"), e))?;
        let mut child = Command::new(&self.executable)
            .args(&args)
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .spawn()
            .map_err(|e| Error::Solver(format!("cannot start {}: {e}", self.executable.display())))?;
        let deadline = Instant::now() + time_limit + self.grace;
        let mut killed = false;
        let exit = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    killed = true;
                    break None;
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(20)),
                Err(e) => return Err(Error::Solver(format!("waiting for solver: {e}"))),
            }
        };
        if let Some(keep) = &self.keep_dir {
            fs::create_dir_all(keep).map_err(|e| Error::io(keep, e))?;
            for file in ["model.lp", "start.txt", "mipstart.txt", "solver.log", "solution.txt"] {
                if path(file).exists() {
                    let target = keep.join(format!("{}-{file}", model.name));
                    fs::copy(path(file), &target).map_err(|e| Error::io(target, e))?;
                }
            }
        }
        let log = fs::read_to_string(path("solver.log")).unwrap_or_default();
        if with_start && !log.contains("MIPStart values read") {
            log::warn!("{}: solver did not read the start file", model.name);
        }
        if killed {
            return Ok(RawSolution {
                status: SolveStatus::NoIncumbent,
                values: None,
                mip_gap: None,
                message: "solver killed after overrunning its time limit".into(),
            });
        }
        let solution = match fs::read_to_string(path("solution.txt")) {
            Ok(text) if !text.trim().is_empty() => text,
            _ => {
                let tail: Vec<&str> = log.lines().rev().take(5).collect();
                return Ok(RawSolution {
                    status: SolveStatus::NoIncumbent,
                    values: None,
                    mip_gap: None,
                    message: format!(
                        "no solution file (exit {:?}): {}",
                        exit.and_then(|s| s.code()),
                        tail.into_iter().rev().collect::<Vec<_>>().join(" | ")
                    ),
                });
            }
        };
        let (status, values) = parse_solution(model, &solution, self.format)?;
        let message = solution.lines().next().unwrap_or_default().trim().to_string();
        Ok(RawSolution {
            status,
            values: status.has_incumbent().then_some(values),
            mip_gap: gap_from_log(&log),
            message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{Cmp, Constraint, ObjSense, Role, VarKind};

    fn model() -> MilpModel {
        let mut m = MilpModel::new("t", ObjSense::Maximize);
        let w = m.add_var(Role::W, &[1, 0, 0], VarKind::Integer, -1.0, 1.0).unwrap();
        let q = m.add_var(Role::Q, &[0, 0], VarKind::Binary, 0.0, 1.0).unwrap();
        m.add_constraint(Constraint {
            name: "r0".into(),
            terms: vec![(w, 1.0), (q, -1.0)],
            cmp: Cmp::Ge,
            rhs: 0.0,
        })
        .unwrap();
        m.set_objective(ObjSense::Maximize, vec![(q, 1.0)]);
        m
    }

    #[test]
    fn parses_cbc_document_with_rows_and_exponents() {
        let text = "Optimal - objective value 1.00000000\n\
                    0 r0 0 0\n\
                    0 w_1_0_0 1 0\n\
                    1 q_0_0 9.9999e-01 -1\n";
        let (status, values) = parse_cbc_solution(&model(), text).unwrap();
        assert_eq!(status, SolveStatus::Optimal);
        assert_eq!(values, vec![1.0, 0.99999]);
    }

    #[test]
    fn unknown_names_are_rejected() {
        let text = "Optimal - objective value 1\n0 z_9 1 0\n";
        assert!(parse_cbc_solution(&model(), text).is_err());
    }

    #[test]
    fn status_lines() {
        assert_eq!(status_of("Stopped on time - objective value 3"), SolveStatus::FeasibleLimit);
        assert_eq!(
            status_of("Stopped on time (no integer solution - continuous used) - objective value 3"),
            SolveStatus::NoIncumbent
        );
        assert_eq!(status_of("Infeasible - objective value 0"), SolveStatus::Infeasible);
        assert_eq!(status_of("Integer infeasible - objective value 0"), SolveStatus::Infeasible);
    }

    #[test]
    fn gap_is_read_from_the_summary() {
        let log = "Result - Stopped on time limit\n\nObjective value: 16.00\nUpper bound: 20.000\nGap: 0.25\n";
        assert_eq!(gap_from_log(log), Some(0.25));
        let log = "Objective value: -0.00000000\nUpper bound: 20.000\nGap: -1.00\n";
        assert_eq!(gap_from_log(log), Some(20.0));
        assert_eq!(gap_from_log("Result - Optimal solution found\n"), None);
    }

    #[test]
    fn start_args_only_with_warm_start() {
        let b = ProcessBackend::cbc_at("/bin/cbc");
        let dir = Path::new("/tmp/x");
        let without = b.command_args(dir, Duration::from_secs(5), false);
        assert!(!without.iter().any(|a| a == "-mips"));
        let with = b.command_args(dir, Duration::from_secs(5), true);
        assert!(with.windows(2).any(|w| w[0] == "-mips" && w[1] == "/tmp/x/mipstart.txt"));
        assert!(with.contains(&"5.000".to_string()));
    }
}
