//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::path::Path;
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use representer::admissibility::{
    check_matrix_geometric, check_order_gradient_agreement, check_vector_geometric, embedded_probe, extract_h_matrix,
    vector_probe, CertificateKind, CheckOptions, Counterexample, HSource, NamedH, Subject, Verdict, DEFAULT_TOL,
};
use representer::constructions::{random_special_orthogonal, MatrixPath, VectorPath};
use representer::linalg::{column_span_basis, gaussian_matrix, gaussian_vector, Mat, ThinSvd, Vector};
use representer::regzoo::{induced_h, GradientAvailability, HKind, MatrixKind, MatrixRegularizer, VectorRegularizer};
use representer::solvers::{
    default_gammas, gamma_path, gen_synthetic_mtl, solve_interpolation_mtl, solve_interpolation_vector, LossSpec, Mode,
    MultiTaskProblem, ProblemKind, SolverOptions, VectorProblem,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn project(w: &Mat, inputs_rows: &Mat) -> Mat {
    let b = column_span_basis(&inputs_rows.transpose());
    &b * (b.transpose() * w)
}

fn nuclear(w: &Mat) -> f64 {
    w.clone().svd(false, false).singular_values.sum()
}

fn admissible_implies_in_span() -> Outcome {
    let regs = [
        VectorRegularizer::SquaredL2,
        VectorRegularizer::HOfNorm(HKind::Sqrt),
        VectorRegularizer::HOfNorm(HKind::Square),
        VectorRegularizer::HOfNorm(HKind::Exp),
    ];
    let mut r = rng(101);
    let mut worst = 0.0_f64;
    for reg in regs {
        for i in 0..20 {
            let x = gaussian_matrix(&mut r, 3, 6);
            let y = gaussian_vector(&mut r, 3);
            let problem = VectorProblem::new(x, y, ProblemKind::Interpolation).map_err(|e| e.to_string())?;
            let opts = SolverOptions { seed: i, ..SolverOptions::default() };
            let sol = solve_interpolation_vector(&problem, &reg, Mode::Full, &opts).map_err(|e| e.to_string())?;
            ensure(sol.off_span_residual <= 1e-6, || {
                format!("{} problem {i}: off_span_residual {:e}", reg.name(), sol.off_span_residual)
            })?;
            worst = worst.max(sol.off_span_residual);
        }
    }
    Ok(format!("80 problems, worst off_span_residual {worst:.2e}"))
}

fn lp4_leaves_the_span() -> Outcome {
    // Grid oracle on the constraint line w = (1 - 2t, t).
    let steps = 1_000_000;
    let (mut best_t, mut best) = (0.0, f64::INFINITY);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let v = (1.0 - 2.0 * t).powi(4) + t.powi(4);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let oracle = [1.0 - 2.0 * best_t, best_t];
    let problem = VectorProblem::new(Mat::from_row_slice(1, 2, &[1.0, 2.0]), Vector::from_vec(vec![1.0]), ProblemKind::Interpolation)
        .map_err(|e| e.to_string())?;
    let sol = solve_interpolation_vector(&problem, &VectorRegularizer::LpNorm { p: 4.0 }, Mode::Full, &SolverOptions::default())
        .map_err(|e| e.to_string())?;
    let w = [sol.w[(0, 0)], sol.w[(1, 0)]];
    for k in 0..2 {
        ensure((w[k] - oracle[k]).abs() <= 1e-3, || format!("w = {w:?}, grid oracle {oracle:?}"))?;
    }
    ensure((w[0] - 0.28411).abs() <= 1e-3 && (w[1] - 0.35797).abs() <= 1e-3, || format!("w = {w:?}"))?;
    ensure((sol.off_span_residual - 0.206).abs() <= 0.01, || format!("off_span_residual {}", sol.off_span_residual))?;
    Ok(format!("w = ({:.5}, {:.5}), off_span_residual {:.4}", w[0], w[1], sol.off_span_residual))
}

fn geometric_refutations() -> Outcome {
    let opts = CheckOptions::new(1000, 42, DEFAULT_TOL);
    let l1 = VectorRegularizer::LpNorm { p: 1.0 };
    let report = check_vector_geometric(&l1, 2, &opts, false).map_err(|e| e.to_string())?;
    ensure(report.verdict == Verdict::Refuted, || "lp_norm(1) not refuted".into())?;
    let subject = Subject::Vector { reg: &l1, d: 2 };
    let (w, p) = vector_probe(2);
    ensure(w.as_slice() == [2.0, 1.0] && p.as_slice() == [0.25, -0.5], || "unexpected stored probe".into())?;
    let cert = Counterexample::orthogonal(subject, w, p).ok_or("probe did not evaluate")?;
    let drop = cert.reevaluate_drop(subject).ok_or("probe did not evaluate")?;
    ensure(drop == 0.25, || format!("probe drop {drop}"))?;
    let stored = report.counterexample.as_ref().ok_or("refuted report without certificate")?;
    ensure(stored.reevaluate_drop(subject).unwrap_or(f64::NAN) >= report.worst_violation - 1e-12, || {
        "stored certificate does not reproduce".into()
    })?;

    let mixed = MatrixRegularizer::new(MatrixKind::MixedNorm { p: 2.0, q: 1.0 }, 3, 2).map_err(|e| e.to_string())?;
    let report = check_matrix_geometric(&mixed, &opts).map_err(|e| e.to_string())?;
    ensure(report.verdict == Verdict::Refuted, || "mixed_norm(2,1) not refuted".into())?;
    let subject = Subject::Matrix(&mixed);
    let (w, p) = embedded_probe(3, 2);
    let cert = Counterexample::orthogonal(subject, w, p).ok_or("embedded probe did not evaluate")?;
    let embedded_drop = cert.reevaluate_drop(subject).ok_or("embedded probe did not evaluate")?;
    ensure(embedded_drop == 0.25 && cert.orthogonality_residual == 0.0, || {
        format!("embedded probe drop {embedded_drop}")
    })?;
    Ok(format!("lp_norm(1) probe drop {drop}, mixed_norm(2,1) embedded drop {embedded_drop}"))
}

fn trace_norm_sweep() -> Outcome {
    let mut r = rng(404);
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..1000 {
        let scale = [0.1, 1.0, 10.0][trial % 3];
        let w = gaussian_matrix(&mut r, 8, 3) * scale;
        let basis = column_span_basis(&w);
        let g = gaussian_matrix(&mut r, 8, 3) * scale;
        let p = &g - &basis * (basis.transpose() * &g);
        let drop = nuclear(&w) - nuclear(&(&w + &p));
        ensure(drop <= 1e-9, || format!("trial {trial}: trace norm drops by {drop:e}"))?;
        worst = worst.max(drop);
    }
    Ok(format!("1000 pairs, largest drop {worst:.2e}"))
}

fn multitask_span() -> Outcome {
    let (problem, _) = gen_synthetic_mtl(8, 4, 1, 3, 0.0, 42).map_err(|e| e.to_string())?;
    let reg = MatrixRegularizer::new(MatrixKind::TraceNorm, 8, 4).map_err(|e| e.to_string())?;
    let opts = SolverOptions { continuation: true, ..SolverOptions::default() };
    let full = solve_interpolation_mtl(&problem, &reg, Mode::Full, &opts).map_err(|e| e.to_string())?;
    let reduced = solve_interpolation_mtl(&problem, &reg, Mode::Reduced, &opts).map_err(|e| e.to_string())?;
    ensure(full.converged && reduced.converged, || "solver did not converge".into())?;
    let projected = project(&full.w, &problem.all_inputs());
    let mut constraint_change = 0.0_f64;
    for (t, task) in problem.tasks.iter().enumerate() {
        let before = &task.x * full.w.column(t);
        let after = &task.x * projected.column(t);
        constraint_change = constraint_change.max((after - before).amax());
    }
    ensure(constraint_change <= 1e-12, || format!("projection moves constraints by {constraint_change:e}"))?;
    let increase = nuclear(&projected) - nuclear(&full.w);
    ensure(increase <= 1e-9, || format!("projection raises the trace norm by {increase:e}"))?;
    let gap = (reduced.objective - full.objective).abs() / full.objective.abs();
    ensure(gap <= 1e-5, || format!("full {} vs reduced {}", full.objective, reduced.objective))?;

    let x = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
    let y = Mat::from_row_slice(1, 2, &[1.0, 1.0]);
    let toy = MultiTaskProblem::shared(x, y, ProblemKind::Interpolation).map_err(|e| e.to_string())?;
    let tn2 = MatrixRegularizer::new(MatrixKind::TraceNorm, 2, 2).map_err(|e| e.to_string())?;
    let mut toy_worst = 0.0_f64;
    for mode in [Mode::Full, Mode::Reduced] {
        let sol = solve_interpolation_mtl(&toy, &tn2, mode, &opts).map_err(|e| e.to_string())?;
        let err = (sol.objective - 2f64.sqrt()).abs();
        ensure(err <= 1e-6, || format!("shared toy objective {}", sol.objective))?;
        toy_worst = toy_worst.max(err);
    }
    Ok(format!(
        "constraint change {constraint_change:.1e}, trace norm change {increase:.1e}, mode gap {gap:.1e}, toy error {toy_worst:.1e}"
    ))
}

fn functional_form() -> Outcome {
    let mut r = rng(606);
    let g = gaussian_matrix(&mut r, 3, 3);
    let kinds = [
        MatrixKind::TraceNorm,
        MatrixKind::Frobenius,
        MatrixKind::Schatten { p: 3.0 },
        MatrixKind::ScaledSchatten { p: 1.0, m: &g + g.transpose() },
        MatrixKind::TaskVariance,
    ];
    let mut worst = 0.0_f64;
    for kind in kinds {
        let reg = MatrixRegularizer::new(kind, 8, 3).map_err(|e| e.to_string())?;
        for trial in 0..200 {
            let w = gaussian_matrix(&mut r, 8, 3) * [0.1, 1.0, 10.0][trial % 3];
            let direct = reg.eval(&w).map_err(|e| e.to_string())?;
            let via_h = induced_h(&reg, &(w.transpose() * &w)).map_err(|e| e.to_string())?;
            let err = (direct - via_h).abs();
            ensure(err <= 1e-8, || format!("{} trial {trial}: |diff| {err:e}", reg.name()))?;
            worst = worst.max(err);
        }
    }
    let mixed = MatrixRegularizer::new(MatrixKind::MixedNorm { p: 2.0, q: 1.0 }, 8, 3).map_err(|e| e.to_string())?;
    let report = extract_h_matrix(&mixed, &CheckOptions::new(200, 42, 1e-8)).map_err(|e| e.to_string())?;
    ensure(report.verdict == Verdict::Refuted, || "mixed_norm(2,1) passed the functional-form check".into())?;
    let cert = report.counterexample.ok_or("no witness")?;
    ensure(cert.kind == CertificateKind::EqualGram && (cert.values.0 - cert.values.1).abs() > 1e-8, || {
        "witness does not separate".into()
    })?;
    // The witness pair must share a Gram matrix.
    let other = &cert.point + &cert.perturbation;
    let gram_gap = (cert.point.transpose() * &cert.point - other.transpose() * &other).amax();
    ensure(gram_gap <= 1e-9 * cert.point.norm_squared().max(1.0), || format!("witness Gram gap {gram_gap:e}"))?;
    let mut u_witness = false;
    let u = random_special_orthogonal(8, &mut r);
    let w = gaussian_matrix(&mut r, 8, 3);
    if (mixed.eval(&w).unwrap() - mixed.eval(&(u.matrix() * &w)).unwrap()).abs() > 1e-8 {
        u_witness = true;
    }
    ensure(u_witness, || "random W vs UW did not separate mixed_norm(2,1)".into())?;
    Ok(format!(
        "1000 draws, worst |diff| {worst:.1e}; mixed_norm(2,1) witness {:.3} vs {:.3}",
        cert.values.0, cert.values.1
    ))
}

fn order_gradient_equivalence() -> Outcome {
    let opts = CheckOptions::new(300, 42, DEFAULT_TOL);
    let mut monotone = 0;
    for h in NamedH::ALL {
        let report = check_order_gradient_agreement(&HSource::Named(h), 3, &opts).map_err(|e| e.to_string())?;
        ensure(report.agree, || format!("{}: order {:?}, gradient {:?}", h.name(), report.order.verdict, report.gradient.verdict))?;
        ensure(report.order.passed == h.is_matrix_monotone(), || format!("{}: wrong verdict", h.name()))?;
        monotone += usize::from(report.order.passed);
    }
    ensure(monotone == 5, || format!("{monotone} monotone, expected 5"))?;
    Ok("10/10 agree (5 monotone, 5 not)".into())
}

fn gamma_paths() -> Outcome {
    let x = Vector::from_vec(vec![1.0, 2.0]);
    let ones = Vector::from_vec(vec![1.0, 1.0]);
    let opts = SolverOptions::default();
    let reg = VectorRegularizer::SquaredL2;
    let square = gamma_path(&x, &reg, LossSpec::Square, &ones, &ones, &default_gammas(), &opts).map_err(|e| e.to_string())?;
    // Ridge along x: w = s x with s = 2 / (2 + 5 gamma).
    for (gamma, gap) in square.gammas.iter().zip(&square.limit_gap) {
        let oracle = 25.0 * gamma / (2.0 + 5.0 * gamma);
        ensure((gap - oracle).abs() <= 1e-6, || format!("gamma {gamma}: gap {gap} vs oracle {oracle}"))?;
    }
    ensure(square.gammas.last() == Some(&1e-6) && square.final_gap < 1e-3, || {
        format!("square final gap {}", square.final_gap)
    })?;
    let v = Vector::from_vec(vec![1.0, -2.0]);
    let hinge = gamma_path(&x, &reg, LossSpec::Hinge, &v, &ones, &default_gammas(), &opts).map_err(|e| e.to_string())?;
    ensure(hinge.final_gap < 1e-2, || format!("hinge final gap {}", hinge.final_gap))?;
    let degenerate = Vector::from_vec(vec![-1.0, -2.0]);
    let err = gamma_path(&x, &reg, LossSpec::Hinge, &degenerate, &ones, &default_gammas(), &opts);
    ensure(matches!(err, Err(representer::Error::NotUnique(_))), || format!("v = (-1, -2) gave {err:?}"))?;
    Ok(format!("square final gap {:.2e}, hinge final gap {:.2e}, v = (-1,-2) not unique", square.final_gap, hinge.final_gap))
}

fn path_invariance() -> Outcome {
    let grid: Vec<f64> = (0..50).map(|k| k as f64 / 49.0).collect();
    let mut r = rng(909);
    let regs = [
        VectorRegularizer::HOfNorm(HKind::Identity),
        VectorRegularizer::HOfNorm(HKind::Sqrt),
        VectorRegularizer::HOfNorm(HKind::Square),
        VectorRegularizer::HOfNorm(HKind::Exp),
    ];
    let (mut norm_worst, mut omega_worst) = (0.0_f64, 0.0_f64);
    for i in 0..20 {
        let w = gaussian_vector(&mut r, 5);
        let mut e1 = Vector::zeros(5);
        e1[0] = 1.0;
        let path = VectorPath::new(&w, &e1).map_err(|e| e.to_string())?;
        for &l in &grid {
            let z = path.at(l);
            let err = (z.norm_squared() - w.norm_squared()).abs();
            ensure(err <= 1e-10, || format!("instance {i}: <z,z> drifts by {err:e}"))?;
            norm_worst = norm_worst.max(err);
            for reg in &regs {
                let err = (reg.eval(&z) - reg.eval(&w)).abs();
                ensure(err <= 1e-6, || format!("{} instance {i}: Omega drifts by {err:e}", reg.name()))?;
                omega_worst = omega_worst.max(err);
            }
        }
    }
    let smoothed = MatrixRegularizer::new(MatrixKind::SmoothedTraceNorm { eps: 1e-8 }, 6, 2).map_err(|e| e.to_string())?;
    let (mut sigma_worst, mut smooth_worst) = (0.0_f64, 0.0_f64);
    for i in 0..20 {
        let w = gaussian_matrix(&mut r, 6, 2);
        let svd = ThinSvd::new(&w);
        let u2 = svd.u.column(1).into_owned();
        let mut z = gaussian_vector(&mut r, 6);
        z -= &u2 * u2.dot(&z);
        z /= z.norm();
        let path = MatrixPath::new(&w, &z, i).map_err(|e| e.to_string())?;
        let sigma = svd.sigma.clone();
        let base = smoothed.eval(&w).map_err(|e| e.to_string())?;
        for &l in &grid {
            let zl = path.at(l);
            let s = zl.clone().svd(false, false).singular_values;
            let mut s: Vec<f64> = s.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            let err = s.iter().zip(sigma.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            ensure(err <= 1e-9, || format!("instance {i}: spectrum drifts by {err:e}"))?;
            sigma_worst = sigma_worst.max(err);
            let err = (smoothed.eval(&zl).map_err(|e| e.to_string())? - base).abs();
            ensure(err <= 1e-6, || format!("instance {i}: smoothed trace norm drifts by {err:e}"))?;
            smooth_worst = smooth_worst.max(err);
        }
    }
    Ok(format!(
        "<z,z> {norm_worst:.1e}, Omega {omega_worst:.1e}, spectrum {sigma_worst:.1e}, smoothed trace norm {smooth_worst:.1e}"
    ))
}

fn relative_gap(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}

fn central_difference(f: impl Fn(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..at.len())
        .map(|i| {
            let h = 1e-6 * at[i].abs().max(1.0);
            x[i] = at[i] + h;
            let up = f(&x);
            x[i] = at[i] - h;
            let down = f(&x);
            x[i] = at[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn gradient_hygiene() -> Outcome {
    const POINTS: usize = 100;
    const TOL: f64 = 1e-5;
    let mut r = rng(1010);
    let vector_regs = [
        VectorRegularizer::SquaredL2,
        VectorRegularizer::HOfNorm(HKind::Identity),
        VectorRegularizer::HOfNorm(HKind::Sqrt),
        VectorRegularizer::HOfNorm(HKind::Square),
        VectorRegularizer::HOfNorm(HKind::Exp),
        VectorRegularizer::HOfNorm(HKind::Affine { a: 2.0, b: -1.0 }),
        VectorRegularizer::LpNorm { p: 1.0 },
        VectorRegularizer::LpNorm { p: 1.5 },
        VectorRegularizer::LpNorm { p: 2.0 },
        VectorRegularizer::LpNorm { p: 3.0 },
        VectorRegularizer::LpNorm { p: 4.0 },
        VectorRegularizer::LpNorm { p: 0.5 },
    ];
    let mut kinds = 0;
    let mut worst = 0.0_f64;
    for reg in vector_regs {
        for i in 0..POINTS {
            let w = gaussian_vector(&mut r, 4);
            if reg.gradient_availability(&w) != GradientAvailability::Analytic {
                return Err(format!("{}: no gradient at a random point", reg.name()));
            }
            let g = reg.grad(&w).map_err(|e| e.to_string())?;
            let fd = central_difference(|x| reg.eval(&Vector::from_column_slice(x)), w.as_slice());
            let gap = relative_gap(g.as_slice(), &fd);
            ensure(gap <= TOL, || format!("{} point {i}: relative gap {gap:e}", reg.name()))?;
            worst = worst.max(gap);
        }
        kinds += 1;
    }
    let m = {
        let g = gaussian_matrix(&mut r, 3, 3);
        &g + g.transpose()
    };
    let matrix_kinds = [
        MatrixKind::Frobenius,
        MatrixKind::FrobeniusSquared,
        MatrixKind::TraceNorm,
        MatrixKind::SmoothedTraceNorm { eps: 1e-3 },
        MatrixKind::Schatten { p: 1.5 },
        MatrixKind::Schatten { p: 3.0 },
        MatrixKind::ScaledSchatten { p: 1.0, m: m.clone() },
        MatrixKind::ScaledSchatten { p: 2.0, m },
        MatrixKind::TaskVariance,
        MatrixKind::MixedNorm { p: 2.0, q: 1.0 },
        MatrixKind::MixedNorm { p: 2.0, q: 2.0 },
        MatrixKind::MixedNorm { p: 3.0, q: 1.5 },
    ];
    for kind in matrix_kinds {
        let reg = MatrixRegularizer::new(kind, 5, 3).map_err(|e| e.to_string())?;
        for i in 0..POINTS {
            let w = gaussian_matrix(&mut r, 5, 3);
            if reg.gradient_availability(&w) != GradientAvailability::Analytic {
                return Err(format!("{}: no gradient at a random point", reg.name()));
            }
            let g = reg.grad(&w).map_err(|e| e.to_string())?;
            let fd = central_difference(|x| reg.eval(&Mat::from_column_slice(5, 3, x)).unwrap_or(f64::NAN), w.as_slice());
            let gap = relative_gap(g.as_slice(), &fd);
            ensure(gap <= TOL, || format!("{} point {i}: relative gap {gap:e}", reg.name()))?;
            worst = worst.max(gap);
        }
        kinds += 1;
    }
    Ok(format!("{kinds} kinds x {POINTS} points, worst relative gap {worst:.1e}"))
}

fn run(bin: &str, args: &[&str], dir: &Path) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(bin).args(args).current_dir(dir).output().map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_representer");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    std::fs::write(d.join("v.csv"), "x_1,x_2,y\n1,2,1\n").map_err(|e| e.to_string())?;
    let (code, _) = run(bin, &["gen-data", "--d", "6", "--n", "3", "--m", "4", "--seed", "7", "--out", "mt.csv"], d)?;
    ensure(code == 0, || format!("gen-data exit {code}"))?;
    let commands: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        ("check", vec!["check", "--reg", r#"{"kind":"trace_norm","d":6,"n":3}"#, "--trials", "200"], vec![]),
        ("check-refuted", vec!["check", "--reg", r#"{"kind":"mixed_norm","p":2,"q":1,"d":3,"n":2}"#], vec![]),
        ("check-vector", vec!["check", "--reg", r#"{"kind":"lp_norm","p":1}"#, "--d", "2"], vec![]),
        ("solve", vec!["solve", "--reg", r#"{"kind":"lp_norm","p":4}"#, "--data", "v.csv", "--mode", "both", "--emit-plot", "OUT.csv"], vec!["OUT.csv"]),
        ("mtl", vec!["mtl", "--reg", r#"{"kind":"trace_norm"}"#, "--data", "mt.csv", "--mode", "both", "--continuation", "--emit-plot", "OUT.csv"], vec!["OUT.csv"]),
        ("gamma-path", vec!["gamma-path", "--loss", "hinge", "--v", "1,-2", "--emit-plot", "OUT.csv"], vec!["OUT.csv"]),
        ("counterexample", vec!["counterexample", "--reg", r#"{"kind":"mixed_norm","p":2,"q":1,"d":3,"n":2}"#], vec![]),
        ("gen-data", vec!["gen-data", "--d", "10", "--n", "4", "--rank", "1", "--m", "5", "--seed", "7"], vec![]),
    ];
    let mut reports = Vec::new();
    for (name, args, extras) in &commands {
        let out_file = format!("{name}.out");
        let plot_file = format!("{name}.csv");
        let mut full: Vec<&str> = args.iter().map(|a| if *a == "OUT.csv" { plot_file.as_str() } else { a }).collect();
        full.extend(["--out", out_file.as_str()]);
        let mut runs = Vec::new();
        for _ in 0..2 {
            let (code, _) = run(bin, &full, d)?;
            let body = std::fs::read(d.join(&out_file)).map_err(|e| format!("{name}: {e}"))?;
            let plot = if extras.is_empty() { Vec::new() } else { std::fs::read(d.join(&plot_file)).map_err(|e| e.to_string())? };
            runs.push((code, body, plot));
        }
        ensure(runs[0] == runs[1], || format!("{name}: reruns differ"))?;
        ensure(!String::from_utf8_lossy(&runs[0].1).contains("proved"), || format!("{name}: report claims proof"))?;
        if *name == "gen-data" {
            // Standard output carries the same bytes as the file.
            let (_, stdout) = run(bin, args, d)?;
            ensure(stdout == runs[0].1, || "gen-data stdout differs from its file".into())?;
        } else {
            reports.push(d.join(&out_file).display().to_string());
        }
    }
    let report_args: Vec<&str> = std::iter::once("report").chain(reports.iter().map(String::as_str)).collect();
    let first = run(bin, &report_args, d)?;
    let second = run(bin, &report_args, d)?;
    ensure(first == second, || "report summaries differ".into())?;
    Ok(format!("{} commands rerun byte-identical, plus report", commands.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("admissible regularizers interpolate in the span", admissible_implies_in_span),
        ("lp_norm(4) interpolant leaves the span", lp4_leaves_the_span),
        ("geometric check refutes lp_norm(1) and mixed_norm(2,1)", geometric_refutations),
        ("trace norm never drops under orthogonal perturbations", trace_norm_sweep),
        ("trace-norm multi-task solutions live in the input span", multitask_span),
        ("functional form through the induced h", functional_form),
        ("matrix monotonicity agrees with gradient PSD", order_gradient_equivalence),
        ("gamma paths reach the interpolant", gamma_paths),
        ("proof paths keep norm, spectrum and Omega", path_invariance),
        ("analytic gradients match central differences", gradient_hygiene),
        ("CLI reruns are byte-identical", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let started = std::time::Instant::now();
        let outcome = criterion();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS [{secs:.1}s] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL [{secs:.1}s] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
