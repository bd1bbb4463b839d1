//! Subcommand implementations. Each returns the process exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use representer::admissibility::{
    self, check_gradient_orthogonality, check_gradient_psd, check_matrix_geometric, check_matrix_nondecreasing,
    check_path_invariance, check_vector_geometric, extract_h_matrix, extract_h_vector, search_violation, CheckOptions,
    CheckReport, HSource, Subject, Verdict,
};
use representer::data::{multitask_csv, read_multitask_csv, read_vector_csv};
use representer::linalg::{Mat, Vector};
use representer::regzoo::{MatrixRegularizer, RegularizerSpec, VectorRegularizer};
use representer::solvers::{
    default_gammas, gamma_path as run_gamma_path, gen_synthetic_mtl, solve_mtl, solve_vector, LossSpec, Mode,
    MultiTaskProblem, ProblemKind, Solution, SolverOptions, VectorProblem,
};

use crate::config::{CheckArgs, GammaPathArgs, GenDataArgs, ReportArgs, SearchArgs, SolveArgs};
use crate::exit;
use crate::CliError;

const DEFAULT_SEED: u64 = 42;
const DEFAULT_VECTOR_DIM: usize = 3;
const H_TABLE_POINTS: usize = 33;
const ALL_SUITES: [&str; 6] = [
    "geometric",
    "gradient-orthogonality",
    "h-extraction",
    "matrix-nondecreasing",
    "gradient-psd",
    "path-invariance",
];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `--reg`, reading `@path` from disk, and overrides `d`/`n` when given.
fn load_regularizer(raw: Option<&str>, d: Option<usize>, n: Option<usize>) -> Result<RegularizerSpec, CliError> {
    let raw = raw.ok_or_else(|| usage("--reg is required"))?;
    let text = match raw.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {path}: {e}")))?,
        None => raw.to_string(),
    };
    let mut value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("--reg is not valid JSON: {e}")))?;
    let object = value.as_object_mut().ok_or_else(|| usage("--reg must be a JSON object"))?;
    if let Some(d) = d {
        object.insert("d".into(), json!(d));
    }
    if let Some(n) = n {
        object.insert("n".into(), json!(n));
    }
    serde_json::from_value(value).map_err(|e| usage(format!("invalid regularizer: {e}")))
}

fn vector_only(spec: RegularizerSpec, command: &str) -> Result<(VectorRegularizer, Option<usize>), CliError> {
    match spec {
        RegularizerSpec::Vector { reg, d } => Ok((reg, d)),
        RegularizerSpec::Matrix(reg) => Err(usage(format!("{command} needs a vector regularizer, got {}", reg.name()))),
    }
}

fn parse_loss(name: Option<&str>) -> Result<LossSpec, CliError> {
    let name = name.unwrap_or("square");
    serde_json::from_value(json!(name)).map_err(|_| usage(format!("unknown loss {name:?} (square, hinge, logistic)")))
}

fn parse_modes(name: Option<&str>) -> Result<Vec<Mode>, CliError> {
    match name.unwrap_or("full") {
        "full" => Ok(vec![Mode::Full]),
        "reduced" => Ok(vec![Mode::Reduced]),
        "both" => Ok(vec![Mode::Full, Mode::Reduced]),
        other => Err(usage(format!("unknown mode {other:?} (full, reduced, both)"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Value, CliError> {
    serde_json::to_value(value).map_err(CliError::internal)
}

/// Writes via a sibling temporary file and a rename, so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let name = path.file_name().ok_or_else(|| usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io(e)
    })
}

fn emit(out: Option<&PathBuf>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn emit_report(out: Option<&PathBuf>, command: &str, config: Value, regularizer: Value, results: Value) -> Result<(), CliError> {
    let report = json!({
        "version": representer::VERSION,
        "command": command,
        "config": config,
        "regularizer": regularizer,
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&report).map_err(CliError::internal)?;
    text.push('\n');
    emit(out, &text)
}

fn path_str(p: &Option<PathBuf>) -> Value {
    p.as_ref().map_or(Value::Null, |p| json!(p.display().to_string()))
}

// ---------------------------------------------------------------- check

fn suite_entry(result: Result<CheckReport, representer::Error>, name: &str) -> (Value, Option<Verdict>) {
    match result {
        Ok(report) => {
            let verdict = report.verdict;
            (serde_json::to_value(&report).unwrap_or(Value::Null), Some(verdict))
        }
        Err(e) => (json!({ "suite": name, "skipped": e.to_string() }), None),
    }
}

fn skipped(name: &str, reason: &str) -> (Value, Option<Verdict>) {
    (json!({ "suite": name, "skipped": reason }), None)
}

pub fn check(args: &CheckArgs) -> Result<u8, CliError> {
    let spec = load_regularizer(args.reg.as_deref(), args.d, args.n)?;
    let suites: Vec<String> = match &args.suites {
        Some(list) => {
            for s in list {
                if !ALL_SUITES.contains(&s.as_str()) {
                    return Err(usage(format!("unknown suite {s:?}; known: {}", ALL_SUITES.join(", "))));
                }
            }
            list.clone()
        }
        None => ALL_SUITES.iter().map(|s| s.to_string()).collect(),
    };
    let trials = args.trials.unwrap_or(1000);
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let strict = args.strict.unwrap_or(false);
    let opts_with = |default_tol: f64| CheckOptions::new(trials, seed, args.tol.unwrap_or(default_tol));
    if trials == 0 {
        return Err(usage("--trials must be >= 1"));
    }
    if args.tol.is_some_and(|t| !(t >= 0.0)) {
        return Err(usage("--tol must be >= 0"));
    }

    let mut entries = Vec::new();
    let dims;
    match &spec {
        RegularizerSpec::Vector { reg, d } => {
            let d = d.unwrap_or(DEFAULT_VECTOR_DIM);
            dims = json!({ "d": d });
            for suite in &suites {
                let entry = match suite.as_str() {
                    "geometric" => suite_entry(check_vector_geometric(reg, d, &opts_with(admissibility::DEFAULT_TOL), strict), suite),
                    "gradient-orthogonality" => {
                        suite_entry(check_gradient_orthogonality(reg, d, &opts_with(admissibility::DEFAULT_TOL)), suite)
                    }
                    "h-extraction" => {
                        match extract_h_vector(reg, d, H_TABLE_POINTS, &opts_with(admissibility::FUNCTIONAL_FORM_TOL)) {
                            Ok(table) => {
                                let verdict = table.report.verdict;
                                let mut value = to_json(&table.report)?;
                                value["table"] = json!({ "xi": table.xi, "h": table.h });
                                (value, Some(verdict))
                            }
                            Err(e) => suite_entry(Err(e), suite),
                        }
                    }
                    "matrix-nondecreasing" | "gradient-psd" => skipped(suite, "matrix regularizers only"),
                    "path-invariance" => suite_entry(
                        check_path_invariance(Subject::Vector { reg, d }, &opts_with(admissibility::PATH_TOL)),
                        suite,
                    ),
                    _ => unreachable!("suite names validated above"),
                };
                entries.push(entry);
            }
        }
        RegularizerSpec::Matrix(reg) => {
            let (d, n) = reg.dims();
            dims = json!({ "d": d, "n": n });
            let wide = d >= 2 * n;
            let induced = HSource::Induced(reg.clone());
            let need_wide = format!("needs d >= 2n, got d = {d}, n = {n}");
            for suite in &suites {
                let entry = match suite.as_str() {
                    "geometric" => suite_entry(check_matrix_geometric(reg, &opts_with(admissibility::DEFAULT_TOL)), suite),
                    "gradient-orthogonality" => skipped(suite, "vector regularizers only"),
                    "h-extraction" if wide => {
                        suite_entry(extract_h_matrix(reg, &opts_with(admissibility::FUNCTIONAL_FORM_TOL)), suite)
                    }
                    "matrix-nondecreasing" if wide => {
                        suite_entry(check_matrix_nondecreasing(&induced, n, &opts_with(admissibility::DEFAULT_TOL)), suite)
                    }
                    "gradient-psd" if wide => {
                        suite_entry(check_gradient_psd(&induced, n, &opts_with(admissibility::FD_TOL)), suite)
                    }
                    "h-extraction" | "matrix-nondecreasing" | "gradient-psd" => skipped(suite, &need_wide),
                    "path-invariance" => {
                        suite_entry(check_path_invariance(Subject::Matrix(reg), &opts_with(admissibility::PATH_TOL)), suite)
                    }
                    _ => unreachable!("suite names validated above"),
                };
                entries.push(entry);
            }
        }
    }

    let refuted = entries.iter().any(|(_, v)| *v == Some(Verdict::Refuted));
    let ran = entries.iter().filter(|(_, v)| v.is_some()).count();
    let verdict = if refuted { Verdict::Refuted } else { Verdict::NoViolationFound };
    let config = json!({
        "dims": dims,
        "trials": trials,
        "seed": seed,
        "tol": args.tol,
        "strict": strict,
        "suites": suites,
        "out": path_str(&args.out),
    });
    let results = json!({
        "suites": entries.into_iter().map(|(v, _)| v).collect::<Vec<_>>(),
        "suites_run": ran,
        "verdict": verdict,
    });
    emit_report(args.out.as_ref(), "check", config, to_json(&spec)?, results)?;
    Ok(if refuted { exit::REFUTED } else { exit::OK })
}

// ---------------------------------------------------------------- solve / mtl

fn solver_options(args: &SolveArgs) -> Result<SolverOptions, CliError> {
    let defaults = SolverOptions::default();
    let opts = SolverOptions {
        max_iter: args.max_iter.unwrap_or(defaults.max_iter),
        smoothing: args.smoothing.unwrap_or(defaults.smoothing),
        continuation: args.continuation.unwrap_or(defaults.continuation),
        seed: args.seed.unwrap_or(DEFAULT_SEED),
        ..defaults
    };
    if opts.max_iter == 0 {
        return Err(usage("--max-iter must be >= 1"));
    }
    if !(opts.smoothing > 0.0) {
        return Err(usage("--smoothing must be > 0"));
    }
    Ok(opts)
}

fn problem_kind(args: &SolveArgs) -> Result<ProblemKind, CliError> {
    match args.gamma {
        Some(gamma) => Ok(ProblemKind::Regularization { gamma, loss: parse_loss(args.loss.as_deref())? }),
        None if args.loss.is_some() => Err(usage("--loss needs --gamma (without it the problem is interpolation)")),
        None => Ok(ProblemKind::Interpolation),
    }
}

fn solve_config(args: &SolveArgs, opts: &SolverOptions, kind: &ProblemKind, dims: Value) -> Result<Value, CliError> {
    Ok(json!({
        "data": path_str(&args.data),
        "dims": dims,
        "mode": args.mode.as_deref().unwrap_or("full"),
        "problem": to_json(kind)?,
        "shared": args.shared.unwrap_or(false),
        "solver": to_json(opts)?,
        "out": path_str(&args.out),
        "emit_plot": path_str(&args.emit_plot),
    }))
}

fn finish_solutions(
    args: &SolveArgs,
    command: &str,
    config: Value,
    regularizer: Value,
    solutions: Vec<Solution>,
) -> Result<u8, CliError> {
    if let Some(plot) = &args.emit_plot {
        let mut csv = String::from("mode,iteration,objective\n");
        for sol in &solutions {
            let mode = if sol.mode == Mode::Full { "full" } else { "reduced" };
            for (i, value) in sol.history.iter().enumerate() {
                writeln!(csv, "{mode},{i},{value}").expect("write to string");
            }
        }
        write_atomic(plot, &csv)?;
    }
    let converged = solutions.iter().all(|s| s.converged);
    let results = json!({ "solutions": to_json(&solutions)?, "converged": converged });
    emit_report(args.out.as_ref(), command, config, regularizer, results)?;
    if !converged {
        eprintln!("warning: solver did not converge; report written with converged = false");
        return Ok(exit::NOT_CONVERGED);
    }
    Ok(exit::OK)
}

pub fn solve(args: &SolveArgs) -> Result<u8, CliError> {
    let data = args.data.as_ref().ok_or_else(|| usage("--data is required"))?;
    if args.shared.is_some() {
        return Err(usage("--shared applies to mtl only"));
    }
    let (x, y) = read_vector_csv(data).map_err(|e| usage(e.to_string()))?;
    let spec = load_regularizer(args.reg.as_deref(), Some(x.ncols()), None)?;
    let (reg, _) = vector_only(spec.clone(), "solve")?;
    let modes = parse_modes(args.mode.as_deref())?;
    let opts = solver_options(args)?;
    let kind = problem_kind(args)?;
    let problem = VectorProblem::new(x, y, kind)?;
    let solutions = modes
        .iter()
        .map(|&mode| solve_vector(&problem, &reg, mode, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let config = solve_config(args, &opts, &kind, json!({ "d": problem.dim(), "m": problem.x.nrows() }))?;
    finish_solutions(args, "solve", config, to_json(&spec)?, solutions)
}

/// Collapses per-task inputs into one shared list; every task must list the
/// same inputs in the same order.
fn as_shared(problem: MultiTaskProblem) -> Result<MultiTaskProblem, CliError> {
    let x = problem.tasks[0].x.clone();
    if problem.tasks.iter().any(|t| t.x != x) {
        return Err(usage("--shared needs every task to have identical inputs in the same order"));
    }
    let y = Mat::from_fn(x.nrows(), problem.tasks.len(), |i, t| problem.tasks[t].y[i]);
    Ok(MultiTaskProblem::shared(x, y, problem.kind)?)
}

pub fn mtl(args: &SolveArgs) -> Result<u8, CliError> {
    let data = args.data.as_ref().ok_or_else(|| usage("--data is required"))?;
    let (d, tasks) = read_multitask_csv(data).map_err(|e| usage(e.to_string()))?;
    let n = tasks.len();
    let spec = load_regularizer(args.reg.as_deref(), Some(d), Some(n))?;
    let reg: MatrixRegularizer = match &spec {
        RegularizerSpec::Matrix(reg) => reg.clone(),
        RegularizerSpec::Vector { reg, .. } => {
            return Err(usage(format!("mtl needs a matrix regularizer, got {}", reg.name())))
        }
    };
    let modes = parse_modes(args.mode.as_deref())?;
    let opts = solver_options(args)?;
    let kind = problem_kind(args)?;
    let mut problem = MultiTaskProblem::new(d, tasks, kind)?;
    if args.shared.unwrap_or(false) {
        problem = as_shared(problem)?;
    }
    let solutions = modes
        .iter()
        .map(|&mode| solve_mtl(&problem, &reg, mode, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let samples: usize = problem.tasks.iter().map(|t| t.x.nrows()).sum();
    let config = solve_config(args, &opts, &kind, json!({ "d": d, "n": n, "samples": samples }))?;
    finish_solutions(args, "mtl", config, to_json(&spec)?, solutions)
}

// ---------------------------------------------------------------- gamma-path

pub fn gamma_path(args: &GammaPathArgs) -> Result<u8, CliError> {
    let x = Vector::from_vec(args.x.clone().unwrap_or_else(|| vec![1.0, 2.0]));
    let v = Vector::from_vec(args.v.clone().unwrap_or_else(|| vec![1.0, 1.0]));
    let y = Vector::from_vec(args.y.clone().unwrap_or_else(|| vec![1.0, 1.0]));
    let gammas = args.gammas.clone().unwrap_or_else(default_gammas);
    let raw = args.reg.clone().unwrap_or_else(|| r#"{"kind":"squared_l2"}"#.to_string());
    let spec = load_regularizer(Some(&raw), Some(x.len()), None)?;
    let (reg, _) = vector_only(spec.clone(), "gamma-path")?;
    let loss = parse_loss(args.loss.as_deref())?;
    let opts = SolverOptions { seed: args.seed.unwrap_or(DEFAULT_SEED), ..SolverOptions::default() };
    let report = run_gamma_path(&x, &reg, loss, &v, &y, &gammas, &opts)?;

    if let Some(plot) = &args.emit_plot {
        let mut csv = String::from("gamma,objective,limit_gap\n");
        for ((g, obj), gap) in report.gammas.iter().zip(&report.objectives).zip(&report.limit_gap) {
            writeln!(csv, "{g},{obj},{gap}").expect("write to string");
        }
        write_atomic(plot, &csv)?;
    }
    let converged = report.solutions.iter().all(|s| s.converged);
    let config = json!({
        "x": x.as_slice(),
        "v": v.as_slice(),
        "y": y.as_slice(),
        "loss": loss,
        "gammas": gammas,
        "solver": to_json(&opts)?,
        "out": path_str(&args.out),
        "emit_plot": path_str(&args.emit_plot),
    });
    let mut results = to_json(&report)?;
    results["converged"] = json!(converged);
    emit_report(args.out.as_ref(), "gamma-path", config, to_json(&spec)?, results)?;
    Ok(if converged { exit::OK } else { exit::NOT_CONVERGED })
}

// ---------------------------------------------------------------- counterexample

pub fn counterexample(args: &SearchArgs) -> Result<u8, CliError> {
    let spec = load_regularizer(args.reg.as_deref(), args.d, args.n)?;
    let budget = args.budget.unwrap_or(1000);
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let tol = args.tol.unwrap_or(admissibility::DEFAULT_TOL);
    let (subject, dims) = match &spec {
        RegularizerSpec::Vector { reg, d } => {
            let d = d.unwrap_or(DEFAULT_VECTOR_DIM);
            (Subject::Vector { reg, d }, json!({ "d": d }))
        }
        RegularizerSpec::Matrix(reg) => {
            let (d, n) = reg.dims();
            (Subject::Matrix(reg), json!({ "d": d, "n": n }))
        }
    };
    let found = search_violation(subject, budget, seed, tol)?;
    let drop = found.as_ref().and_then(|c| c.reevaluate_drop(subject));
    let config = json!({
        "dims": dims,
        "budget": budget,
        "seed": seed,
        "tol": tol,
        "out": path_str(&args.out),
    });
    let verdict = if found.is_some() { Verdict::Refuted } else { Verdict::NoViolationFound };
    let results = json!({
        "verdict": verdict,
        "counterexample": to_json(&found)?,
        "drop": drop,
    });
    emit_report(args.out.as_ref(), "counterexample", config, to_json(&spec)?, results)?;
    Ok(if found.is_some() { exit::REFUTED } else { exit::OK })
}

// ---------------------------------------------------------------- gen-data

pub fn gen_data(args: &GenDataArgs) -> Result<u8, CliError> {
    let (problem, _) = gen_synthetic_mtl(
        args.d.unwrap_or(10),
        args.n.unwrap_or(4),
        args.rank.unwrap_or(1),
        args.m.unwrap_or(5),
        args.noise.unwrap_or(0.0),
        args.seed.unwrap_or(DEFAULT_SEED),
    )?;
    emit(args.out.as_ref(), &multitask_csv(&problem))?;
    Ok(exit::OK)
}

// ---------------------------------------------------------------- report

/// Exit code and one-line summary for a report written by another command.
fn summarize(report: &Value) -> Result<(u8, String), String> {
    let command = report["command"].as_str().ok_or("missing \"command\"")?;
    let results = &report["results"];
    let name = report["regularizer"]["kind"].as_str().unwrap_or("-");
    Ok(match command {
        "check" | "counterexample" => {
            let verdict = results["verdict"].as_str().ok_or("missing results.verdict")?;
            let code = if verdict == "refuted" { exit::REFUTED } else { exit::OK };
            let mut line = format!("{command} {name}: {verdict}");
            if let Some(suites) = results["suites"].as_array() {
                for s in suites {
                    let suite = s["suite"].as_str().unwrap_or("?");
                    match s["verdict"].as_str() {
                        Some(v) => write!(line, "; {suite} {v} (worst {})", s["worst_violation"]).expect("string"),
                        None => write!(line, "; {suite} skipped").expect("string"),
                    }
                }
            }
            (code, line)
        }
        "solve" | "mtl" | "gamma-path" => {
            let converged = results["converged"].as_bool().ok_or("missing results.converged")?;
            let code = if converged { exit::OK } else { exit::NOT_CONVERGED };
            let detail = match command {
                "gamma-path" => format!("final gap {}", results["final_gap"]),
                _ => results["solutions"]
                    .as_array()
                    .map(|sols| {
                        sols.iter()
                            .map(|s| format!("{} objective {}", s["mode"].as_str().unwrap_or("?"), s["objective"]))
                            .collect::<Vec<_>>()
                            .join(", ")
                    })
                    .unwrap_or_default(),
            };
            (code, format!("{command} {name}: converged = {converged}; {detail}"))
        }
        other => return Err(format!("unknown command {other:?}")),
    })
}

pub fn report(args: &ReportArgs) -> Result<u8, CliError> {
    let mut worst = exit::OK;
    for path in &args.files {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| usage(format!("{} is not JSON: {e}", path.display())))?;
        let (code, line) = summarize(&value).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        println!("{}: {line}", path.display());
        worst = worst.max(code);
    }
    Ok(worst)
}
