use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use representer::admissibility::*;
use representer::linalg::gaussian_matrix;
use representer::regzoo::{HKind, MatrixKind, MatrixRegularizer, VectorRegularizer};
use representer::solvers::{solve_interpolation_vector, Mode, ProblemKind, SolverOptions, VectorProblem};

fn vector_catalog() -> Vec<VectorRegularizer> {
    vec![
        VectorRegularizer::SquaredL2,
        VectorRegularizer::HOfNorm(HKind::Identity),
        VectorRegularizer::HOfNorm(HKind::Sqrt),
        VectorRegularizer::HOfNorm(HKind::Square),
        VectorRegularizer::HOfNorm(HKind::Exp),
        VectorRegularizer::HOfNorm(HKind::Affine { a: 2.0, b: -1.0 }),
        VectorRegularizer::HOfNorm(HKind::Affine { a: -1.0, b: 0.0 }),
        VectorRegularizer::LpNorm { p: 1.0 },
        VectorRegularizer::LpNorm { p: 2.0 },
        VectorRegularizer::LpNorm { p: 3.0 },
        VectorRegularizer::LpNorm { p: 4.0 },
        VectorRegularizer::LpNorm { p: 0.5 },
    ]
}

fn matrix_catalog(d: usize, n: usize) -> Vec<MatrixRegularizer> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g = gaussian_matrix(&mut rng, n, n);
    let m = &g + g.transpose();
    [
        MatrixKind::Frobenius,
        MatrixKind::FrobeniusSquared,
        MatrixKind::TraceNorm,
        MatrixKind::SmoothedTraceNorm { eps: 1e-8 },
        MatrixKind::Schatten { p: 3.0 },
        MatrixKind::Rank,
        MatrixKind::ScaledSchatten { p: 1.0, m },
        MatrixKind::PartitionMinTrace { k: 2 },
        MatrixKind::TaskVariance,
        MatrixKind::MixedNorm { p: 2.0, q: 1.0 },
        MatrixKind::MixedNorm { p: 2.0, q: 2.0 },
    ]
    .into_iter()
    .map(|k| MatrixRegularizer::new(k, d, n).unwrap())
    .collect()
}

fn opts(trials: usize) -> CheckOptions {
    CheckOptions::new(trials, 42, DEFAULT_TOL)
}

#[test]
fn reports_are_byte_identical_on_rerun() {
    for reg in vector_catalog() {
        let a = check_vector_geometric(&reg, 3, &opts(200), false).unwrap();
        let b = check_vector_geometric(&reg, 3, &opts(200), false).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }
    for reg in matrix_catalog(4, 3) {
        let a = check_matrix_geometric(&reg, &opts(100)).unwrap();
        let b = check_matrix_geometric(&reg, &opts(100)).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }
}

#[test]
fn certificates_are_sound() {
    let mut refuted = 0;
    for reg in vector_catalog() {
        let report = check_vector_geometric(&reg, 3, &opts(1000), false).unwrap();
        if let Some(cert) = &report.counterexample {
            refuted += 1;
            let drop = cert.reevaluate_drop(Subject::Vector { reg: &reg, d: 3 }).unwrap();
            assert!(drop >= report.worst_violation - 1e-12, "{}", reg.name());
            assert!(cert.orthogonality_residual <= 1e-10);
        }
    }
    for reg in matrix_catalog(4, 3) {
        let report = check_matrix_geometric(&reg, &opts(1000)).unwrap();
        if let Some(cert) = &report.counterexample {
            refuted += 1;
            let drop = cert.reevaluate_drop(Subject::Matrix(&reg)).unwrap();
            assert!(drop >= report.worst_violation - 1e-12, "{}", reg.name());
            assert!(cert.orthogonality_residual <= 1e-10);
        }
    }
    assert!(refuted >= 5, "only {refuted} refutations");
}

#[test]
fn verdicts_match_the_catalog_claims() {
    for reg in vector_catalog() {
        let passed = check_vector_geometric(&reg, 3, &opts(1000), false).unwrap().passed;
        assert_eq!(passed, reg.claimed_admissible(), "{}", reg.name());
    }
    for reg in matrix_catalog(4, 3) {
        let passed = check_matrix_geometric(&reg, &opts(1000)).unwrap().passed;
        assert_eq!(passed, reg.claimed_admissible(), "{}", reg.name());
    }
}

#[test]
fn never_claims_proof() {
    let reg = VectorRegularizer::SquaredL2;
    let json = serde_json::to_string(&check_vector_geometric(&reg, 3, &opts(10), false).unwrap()).unwrap();
    assert!(json.contains("no-violation-found"));
    assert!(!json.contains("proved"));
}

#[test]
fn order_and_gradient_verdicts_agree() {
    for h in NamedH::ALL {
        let report = check_order_gradient_agreement(&HSource::Named(h), 3, &opts(300)).unwrap();
        assert!(report.agree, "{}", h.name());
        assert_eq!(report.order.passed, h.is_matrix_monotone(), "{}", h.name());
    }
}

#[test]
fn induced_h_of_admissible_kinds_is_nondecreasing() {
    for kind in [MatrixKind::TraceNorm, MatrixKind::Frobenius, MatrixKind::Schatten { p: 3.0 }, MatrixKind::TaskVariance] {
        let reg = MatrixRegularizer::new(kind, 6, 3).unwrap();
        let report = check_matrix_nondecreasing(&HSource::Induced(reg.clone()), 3, &opts(300)).unwrap();
        assert!(report.passed, "{}", reg.name());
    }
}

#[test]
fn h_table_is_nondecreasing_when_geometric() {
    for reg in vector_catalog() {
        if !check_vector_geometric(&reg, 3, &opts(1000), false).unwrap().passed {
            continue;
        }
        let table = extract_h_vector(&reg, 3, 33, &opts(100)).unwrap();
        assert!(table.h.windows(2).all(|p| p[1] >= p[0]), "{}", reg.name());
    }
}

#[test]
fn weyl_holds_for_random_scalings() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let g = gaussian_matrix(&mut rng, 3, 3);
        let m = &g + g.transpose();
        let report = check_weyl_scaled(&m, &CheckOptions::new(1000, 9, WEYL_TOL)).unwrap();
        assert!(report.passed, "{}", report.worst_violation);
    }
}

#[test]
fn smoothed_trace_norm_is_constant_on_matrix_paths() {
    let reg = MatrixRegularizer::new(MatrixKind::SmoothedTraceNorm { eps: 1e-8 }, 6, 2).unwrap();
    let report = check_path_invariance(Subject::Matrix(&reg), &CheckOptions::new(20, 1, 1e-6)).unwrap();
    assert!(report.passed, "{}", report.worst_violation);
    assert_eq!(report.skipped, 0);
}

#[test]
fn search_finds_mixed_norm_violation() {
    let reg = MatrixRegularizer::new(MatrixKind::MixedNorm { p: 2.0, q: 1.0 }, 3, 2).unwrap();
    let cert = search_violation(Subject::Matrix(&reg), 2000, 3, DEFAULT_TOL).unwrap().expect("violation");
    assert!(cert.values.0 > cert.values.1);
    assert!(cert.orthogonality_residual <= 1e-10);
}

/// Passing the geometric check predicts in-span interpolation solutions.
#[test]
fn geometric_pass_implies_in_span_solutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for reg in vector_catalog() {
        if !check_vector_geometric(&reg, 5, &opts(1000), false).unwrap().passed {
            continue;
        }
        for i in 0..20 {
            let x = gaussian_matrix(&mut rng, 2, 5);
            let y = gaussian_matrix(&mut rng, 2, 1).column(0).into_owned();
            let problem = VectorProblem::new(x, y, ProblemKind::Interpolation).unwrap();
            let options = SolverOptions { seed: i, ..SolverOptions::default() };
            let sol = solve_interpolation_vector(&problem, &reg, Mode::Full, &options).unwrap();
            assert!(sol.off_span_residual <= 1e-6, "{} {}", reg.name(), sol.off_span_residual);
        }
    }
}

#[test]
fn counterexample_json_is_row_major() {
    let reg = MatrixRegularizer::new(MatrixKind::MixedNorm { p: 2.0, q: 1.0 }, 3, 2).unwrap();
    let report = check_matrix_geometric(&reg, &opts(50)).unwrap();
    let value: serde_json::Value = serde_json::to_value(&report).unwrap();
    let point = &value["counterexample"]["point"];
    assert_eq!(point.as_array().unwrap().len(), 3);
    assert_eq!(point[0].as_array().unwrap().len(), 2);
    let back: CheckReport = serde_json::from_value(value).unwrap();
    assert_eq!(back.counterexample.unwrap().point.shape(), (3, 2));
}
