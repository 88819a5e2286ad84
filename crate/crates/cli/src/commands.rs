//! Command implementations: load inputs, run a construction, certify it, and
//! write the manifest, certificate, and trace files atomically.

use std::fs;
use std::path::{Path, PathBuf};

use parampath::constructions;
use parampath::error::Error;
use parampath::network::{self, Dataset, LossKind, NetworkSpec, Params, Theorem};
use parampath::pathkit::{self, ParamPath};
use parampath::verify::{self, SuiteResult};

use crate::trainer::{train_square, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILURES: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_CONSTRUCTION: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;

/// Exit code for a library error, per the command contract.
fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::HypothesisFailed { .. } => EXIT_HYPOTHESIS,
        Error::InvalidInput(_)
        | Error::InvalidParams(_)
        | Error::InvalidTarget(_)
        | Error::InvalidEpsilon(_) => EXIT_HYPOTHESIS,
        _ => EXIT_CONSTRUCTION,
    }
}

fn fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code_for(err)
}

fn fail_io(context: &str, err: impl std::fmt::Display) -> i32 {
    eprintln!("error: {context}: {err}");
    EXIT_HYPOTHESIS
}

/// Write via a temp file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, String> {
    let raw = fs::read_to_string(path).map_err(|e| format!("reading {what} {path:?}: {e}"))?;
    serde_json::from_str(&raw).map_err(|e| format!("parsing {what} {path:?}: {e}"))
}

pub struct OutputPaths {
    pub path: Option<PathBuf>,
    pub cert: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

fn emit_outputs(
    path: &ParamPath,
    cert: &pathkit::PathCertificate,
    spec: &NetworkSpec,
    data: &Dataset,
    trace_points: usize,
    out: &OutputPaths,
) -> Result<(), String> {
    if let Some(p) = &out.path {
        let bytes = serde_json::to_vec_pretty(path).map_err(|e| e.to_string())?;
        write_atomic(p, &bytes).map_err(|e| format!("writing manifest {p:?}: {e}"))?;
    }
    if let Some(p) = &out.cert {
        let bytes = serde_json::to_vec_pretty(cert).map_err(|e| e.to_string())?;
        write_atomic(p, &bytes).map_err(|e| format!("writing certificate {p:?}: {e}"))?;
    }
    if let Some(p) = &out.trace {
        let rows = pathkit::export_trace(path, spec, data, trace_points)
            .map_err(|e| e.to_string())?;
        write_atomic(p, pathkit::trace_to_csv(&rows).as_bytes())
            .map_err(|e| format!("writing trace {p:?}: {e}"))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_connect(
    spec_path: &Path,
    data_path: &Path,
    theta_path: &Path,
    theta_prime_path: &Path,
    theorem: &str,
    epsilon: f64,
    tol: f64,
    samples: usize,
    seed: u64,
    budget: usize,
    trace_points: usize,
    out: &OutputPaths,
) -> i32 {
    let spec: NetworkSpec = match load_json(spec_path, "spec") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let data: Dataset = match load_json(data_path, "dataset") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let theta: Params = match load_json(theta_path, "theta") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let theta_prime: Params = match load_json(theta_prime_path, "theta-prime") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let built = match theorem {
        "lin-data" => constructions::connect_lin_data(&spec, &data, &theta, &theta_prime, epsilon, seed),
        "wide-first" => {
            constructions::connect_wide_first(&spec, &data, &theta, &theta_prime, epsilon, budget, seed)
        }
        "all-wide" => constructions::connect_all_wide(&spec, &data, &theta, &theta_prime, budget, seed),
        other => {
            eprintln!("error: unknown theorem selector {other} (expected lin-data, wide-first, all-wide)");
            return EXIT_HYPOTHESIS;
        }
    };
    let path = match built {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let cert = match pathkit::certify(&path, &spec, &data, samples, tol) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Err(e) = emit_outputs(&path, &cert, &spec, &data, trace_points, out) {
        return fail_io("writing outputs", e);
    }
    println!(
        "connect {theorem}: segments {} max loss {:.6e} drift {:.3e} passed {}",
        path.segments().len(),
        cert.max_loss_observed,
        cert.max_constant_drift,
        cert.passed
    );
    if cert.passed {
        EXIT_OK
    } else {
        eprintln!("error: certificate failed");
        EXIT_CONSTRUCTION
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_descend(
    spec_path: &Path,
    data_path: &Path,
    theta_path: &Path,
    theorem: &str,
    wide_layer: usize,
    epsilon: f64,
    tol: f64,
    samples: usize,
    seed: u64,
    budget: usize,
    trace_points: usize,
    out: &OutputPaths,
) -> i32 {
    let spec: NetworkSpec = match load_json(spec_path, "spec") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let data: Dataset = match load_json(data_path, "dataset") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let theta: Params = match load_json(theta_path, "theta") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let built = match theorem {
        "no-bad-valley" => constructions::descend_no_bad_valley(
            &spec, &data, &theta, wide_layer, epsilon, budget, seed,
        ),
        "all-wide" => constructions::descend_all_wide(&spec, &data, &theta, epsilon, budget, seed),
        other => {
            eprintln!(
                "error: unknown theorem selector {other} (expected no-bad-valley, all-wide)"
            );
            return EXIT_HYPOTHESIS;
        }
    };
    let path = match built {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let cert = match pathkit::certify(&path, &spec, &data, samples, tol) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let terminal = path
        .end()
        .and_then(|p| network::loss(&spec, &p, &data))
        .map(|l| l.value);
    let terminal = match terminal {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    if let Err(e) = emit_outputs(&path, &cert, &spec, &data, trace_points, out) {
        return fail_io("writing outputs", e);
    }
    println!(
        "descend {theorem}: terminal loss {terminal:.6e} (epsilon {epsilon:.3e}) passed {}",
        cert.passed
    );
    if cert.passed && terminal <= epsilon {
        EXIT_OK
    } else {
        eprintln!("error: descent did not certify below epsilon");
        EXIT_CONSTRUCTION
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_ray(
    spec_path: &Path,
    data_path: &Path,
    theta_path: &Path,
    theorem: &str,
    scale_max: f64,
    tol: f64,
    samples: usize,
    seed: u64,
    trace_points: usize,
    out: &OutputPaths,
) -> i32 {
    let spec: NetworkSpec = match load_json(spec_path, "spec") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let data: Dataset = match load_json(data_path, "dataset") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let theta: Params = match load_json(theta_path, "theta") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let built = match theorem {
        "lin-data" => constructions::unbounded_ray_lin_data(&spec, &data, &theta, scale_max, seed),
        "wide-first" => constructions::unbounded_ray_wide_first(&spec, &data, &theta, scale_max),
        other => {
            eprintln!("error: unknown theorem selector {other} (expected lin-data, wide-first)");
            return EXIT_HYPOTHESIS;
        }
    };
    let path = match built {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let cert = match pathkit::certify(&path, &spec, &data, samples, tol) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let end = match path.end() {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    if let Err(e) = emit_outputs(&path, &cert, &spec, &data, trace_points, out) {
        return fail_io("writing outputs", e);
    }
    let n0 = theta.frobenius_norm();
    let n1 = end.frobenius_norm();
    println!(
        "ray {theorem}: parameter norm {n0:.6e} -> {n1:.6e} (ratio {:.3e}), drift {:.3e}, passed {}",
        n1 / n0,
        cert.max_constant_drift,
        cert.passed
    );
    if cert.passed {
        EXIT_OK
    } else {
        eprintln!("error: certificate failed");
        EXIT_CONSTRUCTION
    }
}

pub fn cmd_verify(
    seed: u64,
    instances: usize,
    manifest: Option<(&Path, &Path, &Path)>,
    tol: f64,
    samples: usize,
    out_report: Option<&Path>,
) -> i32 {
    let mut report = verify::run_all(seed, instances);
    if let Some((path_file, spec_file, data_file)) = manifest {
        let outcome = (|| -> Result<SuiteResult, String> {
            let spec: NetworkSpec = load_json(spec_file, "spec")?;
            let data: Dataset = load_json(data_file, "dataset")?;
            let path: ParamPath = load_json(path_file, "path manifest")?;
            let cert = pathkit::certify(&path, &spec, &data, samples, tol)
                .map_err(|e| e.to_string())?;
            Ok(SuiteResult {
                name: "manifest_certification".into(),
                passed: cert.passed,
                detail: format!(
                    "max loss {:.6e}, drift {:.3e}, bound excess {:.3e}",
                    cert.max_loss_observed, cert.max_constant_drift, cert.worst_bound_excess
                ),
            })
        })();
        match outcome {
            Ok(suite) => report.suites.push(suite),
            Err(e) => report.suites.push(SuiteResult {
                name: "manifest_certification".into(),
                passed: false,
                detail: e,
            }),
        }
        report.passed = report.suites.iter().all(|s| s.passed);
    }
    for suite in &report.suites {
        println!(
            "{} {}: {}",
            if suite.passed { "pass" } else { "FAIL" },
            suite.name,
            suite.detail
        );
    }
    if let Some(p) = out_report {
        match serde_json::to_vec_pretty(&report) {
            Ok(bytes) => {
                if let Err(e) = write_atomic(p, &bytes) {
                    return fail_io("writing report", e);
                }
            }
            Err(e) => return fail_io("serializing report", e),
        }
    }
    if report.passed {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILURES
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_barrier(
    spec_path: &Path,
    data_path: &Path,
    theorem: &str,
    train_target: f64,
    train_steps: usize,
    learning_rate: f64,
    tol: f64,
    samples: usize,
    seed: u64,
    budget: usize,
    trace_points: usize,
    out_trace: Option<&Path>,
    out: &OutputPaths,
) -> i32 {
    let spec: NetworkSpec = match load_json(spec_path, "spec") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    let data: Dataset = match load_json(data_path, "dataset") {
        Ok(v) => v,
        Err(e) => return fail_io("loading inputs", e),
    };
    if spec.loss != LossKind::Square {
        eprintln!("error: the barrier experiment requires the square loss");
        return EXIT_HYPOTHESIS;
    }
    let hypothesis = match theorem {
        "wide-first" => network::validate_hypotheses(&spec, &data, Theorem::WideFirst),
        "all-wide" => network::validate_hypotheses(&spec, &data, Theorem::AllWideConnect),
        other => {
            eprintln!("error: unknown theorem selector {other} (expected wide-first, all-wide)");
            return EXIT_HYPOTHESIS;
        }
    };
    if let Err(e) = hypothesis.into_result() {
        return fail(&e);
    }

    let cfg = TrainConfig {
        learning_rate,
        max_steps: train_steps,
        target_loss: train_target,
        seed,
    };
    let run_a = match train_square(&spec, &data, cfg) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let run_b = match train_square(
        &spec,
        &data,
        TrainConfig {
            seed: seed.wrapping_add(1),
            ..cfg
        },
    ) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    for (name, run) in [("theta", &run_a), ("theta-prime", &run_b)] {
        println!(
            "trained {name}: loss {:.6e} after {} steps",
            run.loss, run.steps
        );
        if !run.reached_target {
            eprintln!(
                "error: training {name} stalled at loss {:.6e} (target {:.3e})",
                run.loss, train_target
            );
            return EXIT_TRAINING;
        }
    }

    let built = match theorem {
        "wide-first" => constructions::connect_wide_first(
            &spec, &data, &run_a.params, &run_b.params, train_target, budget, seed,
        ),
        _ => constructions::connect_all_wide(&spec, &data, &run_a.params, &run_b.params, budget, seed),
    };
    let path = match built {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let cert = match pathkit::certify(&path, &spec, &data, samples, tol) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Err(e) = emit_outputs(&path, &cert, &spec, &data, trace_points, out) {
        return fail_io("writing outputs", e);
    }

    // Two traces at the same abscissae: the naive straight line in parameter
    // space, and the constructed path.
    let mut max_linear = f64::NEG_INFINITY;
    let mut max_constructed = f64::NEG_INFINITY;
    let mut csv = String::from("t,loss_linear,loss_constructed\n");
    for j in 0..trace_points {
        let t = j as f64 / (trace_points - 1) as f64;
        let linear_point = run_a.params.lerp(&run_b.params, t);
        let loss_linear = match network::loss(&spec, &linear_point, &data) {
            Ok(l) => l.value,
            Err(e) => return fail(&e),
        };
        let constructed_point = match path.evaluate(t) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let loss_constructed = match network::loss(&spec, &constructed_point, &data) {
            Ok(l) => l.value,
            Err(e) => return fail(&e),
        };
        max_linear = max_linear.max(loss_linear);
        max_constructed = max_constructed.max(loss_constructed);
        csv.push_str(&format!("{t},{loss_linear},{loss_constructed}\n"));
    }
    if let Some(p) = out_trace {
        if let Err(e) = write_atomic(p, csv.as_bytes()) {
            return fail_io("writing barrier trace", e);
        }
    }
    println!(
        "barrier: linear-scan max loss {max_linear:.6e}, constructed-path max loss {max_constructed:.6e}, passed {}",
        cert.passed
    );
    if cert.passed {
        EXIT_OK
    } else {
        eprintln!("error: certificate failed");
        EXIT_CONSTRUCTION
    }
}
