//! Experiment runner behind the `cogaction` binary.
//!
//! Every run writes `result.csv`, `report.json` and `summary.txt` into the
//! configured output directory, all at the end of the run. CSV and JSON are
//! byte-identical for identical config and seed; timings go to the summary
//! only.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::action::{residual_report, DiscreteFunctional};
use crate::config::{self, ExperimentConfig, Prepared, SpectrumPoint};
use crate::dynamics::integrate;
use crate::error::Error;
use crate::io;
use crate::limits::{
    causality_probe, epsilon_sweep, mass_sweep, strictly_decreasing, SweepResult, METRIC_NOTE,
};
use crate::parallel;
use crate::plot::{line_plot, Series};
use crate::potential::{check_gradient, relative_error, PotentialSpec};
use crate::solver::{
    hessian_spectrum, minimize_action, multistart_minimize, perturbed_start, stationary_point,
    SolverReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Relative-error threshold for discrete functional gradients.
pub const FUNCTIONAL_GRADIENT_TOLERANCE: f64 = 1e-5;

/// Exit status for an error raised while loading or running an experiment.
pub fn exit_status(e: &Error) -> i32 {
    match e {
        Error::Hypothesis(_) => EXIT_HYPOTHESIS,
        Error::Io { .. } => EXIT_IO,
        Error::Config(_)
        | Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::Csv { .. } => EXIT_CONFIG,
        Error::NumericDomain { .. }
        | Error::LowerBoundViolated { .. }
        | Error::Divergence { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::Singular { .. } => EXIT_NOT_CONVERGED,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub status: i32,
    pub message: String,
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Parses the config and loads every referenced file without computing.
pub fn validate(path: &Path) -> Result<(ExperimentConfig, Prepared), Error> {
    let cfg = config::load(path)?;
    let prepared = config::prepare(&cfg, &config_dir(path))?;
    Ok((cfg, prepared))
}

struct Artifacts {
    csv: Vec<u8>,
    report: serde_json::Value,
    lines: Vec<String>,
    plot: Option<String>,
    failure: Option<String>,
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s.into_bytes()
}

fn strip_time(mut r: SolverReport) -> SolverReport {
    r.wall_time = None;
    r
}

fn strip_sweep(mut s: SweepResult) -> SweepResult {
    for row in &mut s.rows {
        row.report = row.report.take().map(strip_time);
    }
    s
}

fn trajectory_plot(title: &str, traj: &crate::trajectory::Trajectory) -> String {
    let t: Vec<f64> = (0..=traj.intervals()).map(|k| traj.time(k)).collect();
    let series: Vec<Series<'_>> = (0..traj.dim())
        .map(|i| Series {
            label: format!("q{i}"),
            x: &t,
            y: (0..=traj.intervals()).map(|k| traj.node(k)[i]).collect(),
        })
        .collect();
    line_plot(title, "t", &series)
}

fn sweep_lines(result: &SweepResult) -> Vec<String> {
    let valid = result.all_valid();
    let mut lines = vec![
        format!("parameter: {}", result.parameter),
        format!("rows: {}", result.rows.len()),
        format!("all rows valid: {valid}"),
        format!(
            "reference: {} {} dt={:e}",
            result.reference.integrator,
            result.reference.dynamics.name(),
            result.reference.dt
        ),
        format!(
            "sup window: [{}, {}]",
            result.sup_window[0], result.sup_window[1]
        ),
        format!(
            "h1 strictly decreasing: {}",
            strictly_decreasing(&result.h1_distances())
        ),
        format!(
            "sup strictly decreasing: {}",
            strictly_decreasing(&result.sup_distances())
        ),
        format!("metric: {METRIC_NOTE}"),
    ];
    for r in &result.rows {
        lines.push(format!(
            "  {} = {:<10} h1 = {:.6e}  sup = {:.6e}  converged = {}",
            result.parameter, r.param, r.h1_dist, r.sup_dist, r.converged
        ));
    }
    lines
}

fn sweep_plot(result: &SweepResult) -> String {
    let params: Vec<f64> = result.rows.iter().map(|r| r.param).collect();
    line_plot(
        &format!("distance vs {}", result.parameter),
        result.parameter,
        &[
            Series {
                label: "H1".into(),
                x: &params,
                y: result.h1_distances(),
            },
            Series {
                label: "sup".into(),
                x: &params,
                y: result.sup_distances(),
            },
        ],
    )
}

fn functional_gradient_error(
    df: &DiscreteFunctional,
    traj: &crate::trajectory::Trajectory,
    step: f64,
) -> Result<f64, Error> {
    let g = df.grad(traj)?;
    let x = df.free_vars(traj);
    let mut fd = vec![0.0; x.len()];
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = df.eval(&df.with_free_vars(traj, &probe))?;
        probe[i] = x[i] - step;
        let minus = df.eval(&df.with_free_vars(traj, &probe))?;
        probe[i] = x[i];
        fd[i] = (plus - minus) / (2.0 * step);
    }
    Ok(relative_error(&g, &fd))
}

/// Seeded points in `[-2, 2]ⁿ` (and inputs in `[-1, 1]ᵐ` for time-varying kinds).
pub fn random_points(
    spec: &PotentialSpec,
    count: usize,
    seed: u64,
) -> Vec<(Vec<f64>, Option<Vec<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let q = (0..spec.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let u = spec
                .signal_dim()
                .map(|m| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect());
            (q, u)
        })
        .collect()
}

#[derive(Serialize)]
struct GradRow {
    target: &'static str,
    index: usize,
    relative_error: f64,
}

fn execute(
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<Artifacts, Error> {
    let seed = cfg.seed;
    Ok(match prepared {
        Prepared::Minimize { df, opts, starts } => match starts {
            None => {
                let m = minimize_action(df, opts)?;
                let residuals = residual_report(df, &m.trajectory)?;
                let report = strip_time(m.report.clone());
                let failure = (!report.converged).then(|| "solver did not converge".to_string());
                Artifacts {
                    csv: io::trajectory_csv(&m.trajectory),
                    report: json!({
                        "experiment": "minimize",
                        "family": df.family(),
                        "N": df.intervals(),
                        "report": report,
                        "residuals": residuals,
                    }),
                    lines: vec![
                        format!("family: {}", df.family().name()),
                        format!("N: {}", df.intervals()),
                        format!("converged: {}", m.report.converged),
                        format!("iterations: {}", m.report.iterations),
                        format!("final value: {:.16e}", m.report.final_value),
                        format!("stationarity norm: {:.3e}", m.report.stationarity_norm),
                        format!(
                            "solver wall time (s): {:.3}",
                            m.report.wall_time.unwrap_or(0.0)
                        ),
                    ],
                    plot: Some(trajectory_plot("minimizer", &m.trajectory)),
                    failure,
                }
            }
            Some(starts) => {
                let ms = multistart_minimize(df, opts, *starts, seed, threads)?;
                let best = ms
                    .results
                    .iter()
                    .filter_map(|r| r.as_ref().ok())
                    .min_by(|a, b| a.report.final_value.total_cmp(&b.report.final_value))
                    .ok_or_else(|| Error::invalid("every multistart run failed"))?;
                let failure = (ms.summary.converged != *starts)
                    .then(|| format!("{} of {} starts converged", ms.summary.converged, starts));
                Artifacts {
                    csv: io::trajectory_csv(&best.trajectory),
                    report: json!({
                        "experiment": "minimize",
                        "family": df.family(),
                        "N": df.intervals(),
                        "report": strip_time(best.report.clone()),
                        "multistart": ms.summary,
                    }),
                    lines: vec![
                        format!("family: {}", df.family().name()),
                        format!("starts: {starts}"),
                        format!("converged: {}", ms.summary.converged),
                        format!("clusters: {}", ms.summary.clusters.len()),
                        format!("cluster threshold (H1): {:.3e}", ms.summary.threshold),
                        "multistart cluster counts are observations, not a uniqueness proof".into(),
                    ],
                    plot: Some(trajectory_plot(
                        "best multistart minimizer",
                        &best.trajectory,
                    )),
                    failure,
                }
            }
        },
        Prepared::Integrate { spec } => {
            let out = integrate(spec)?;
            let q = &out.positions;
            let last = q.intervals();
            let max_rise = out
                .energy
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            Artifacts {
                csv: io::dynamics_csv(&out),
                report: json!({
                    "experiment": "integrate",
                    "kind": spec.kind,
                    "steps": last,
                    "dt": q.step(),
                    "final_position": q.node(last),
                    "final_velocity": out.velocities.as_ref().map(|v| v.node(last).to_vec()),
                    "energy_initial": out.energy[0],
                    "energy_final": out.energy[last],
                    "max_energy_increase_per_step": max_rise,
                }),
                lines: vec![
                    format!("kind: {}", spec.kind.name()),
                    format!("steps: {last}"),
                    format!(
                        "energy: {:.12e} -> {:.12e}",
                        out.energy[0], out.energy[last]
                    ),
                    format!("largest per-step energy increase: {max_rise:.3e}"),
                ],
                plot: Some(trajectory_plot(spec.kind.name(), q)),
                failure: None,
            }
        }
        Prepared::SweepEps {
            base,
            grid,
            epsilons,
            opts,
        } => {
            let r = strip_sweep(epsilon_sweep(base, epsilons, *grid, opts, threads)?);
            let failure = (!r.all_valid()).then(|| "some sweep rows did not converge".to_string());
            Artifacts {
                csv: io::sweep_csv(&r),
                lines: sweep_lines(&r),
                plot: Some(sweep_plot(&r)),
                report: json!({ "experiment": "sweep-eps", "family": base.family, "N": grid, "sweep": r }),
                failure,
            }
        }
        Prepared::SweepMass { sweep } => {
            let r = mass_sweep(sweep, threads)?;
            let failure = (!r.all_valid()).then(|| "some integrations diverged".to_string());
            Artifacts {
                csv: io::sweep_csv(&r),
                lines: sweep_lines(&r),
                plot: Some(sweep_plot(&r)),
                report: json!({ "experiment": "sweep-mass", "sweep": r }),
                failure,
            }
        }
        Prepared::Causality {
            base,
            grid,
            epsilons,
            t_star,
            offset,
            delta,
            opts,
        } => {
            let r = causality_probe(
                base, *t_star, offset, epsilons, *grid, opts, *delta, threads,
            )?;
            let valid = r.rows.iter().all(|row| row.converged);
            let mut lines = vec![
                format!("t*: {}  delta: {}", r.t_star, r.delta),
                format!(
                    "deviations strictly decreasing: {}",
                    strictly_decreasing(&r.deviations())
                ),
            ];
            for row in &r.rows {
                lines.push(format!(
                    "  epsilon = {:<10} deviation = {:.6e}",
                    row.param, row.deviation
                ));
            }
            if let Some(b) = &r.baseline {
                lines.push(format!(
                    "classical free-end baseline deviation: {:.6e}",
                    b.deviation
                ));
            }
            let params: Vec<f64> = r.rows.iter().map(|row| row.param).collect();
            let plot = line_plot(
                "pre-t* deviation vs epsilon",
                "epsilon",
                &[Series {
                    label: "deviation".into(),
                    x: &params,
                    y: r.deviations(),
                }],
            );
            Artifacts {
                csv: io::causality_csv(&r),
                report: json!({ "experiment": "causality", "N": grid, "probe": r }),
                lines,
                plot: Some(plot),
                failure: (!valid).then(|| "some minimizations did not converge".to_string()),
            }
        }
        Prepared::Gradcheck {
            potential,
            points,
            step,
            functional,
        } => {
            let pts = random_points(potential, *points, seed);
            let mut rows = Vec::new();
            for (i, p) in pts.iter().enumerate() {
                let c = check_gradient(potential, std::slice::from_ref(p), *step)?;
                rows.push(GradRow {
                    target: "potential",
                    index: i,
                    relative_error: c.max_relative_error,
                });
            }
            let overall = check_gradient(potential, &pts, *step)?;
            let mut passed = overall.passed;
            let mut lines = vec![
                format!("potential: {}", potential.kind().name()),
                format!(
                    "potential max relative error: {:.3e}",
                    overall.max_relative_error
                ),
            ];
            if let Some(df) = functional {
                let mut worst = 0.0_f64;
                for i in 0..*points {
                    let traj = perturbed_start(df, seed, i + 1);
                    let err = functional_gradient_error(df, &traj, 1e-6)?;
                    worst = worst.max(err);
                    rows.push(GradRow {
                        target: "functional",
                        index: i,
                        relative_error: err,
                    });
                }
                passed &= worst < FUNCTIONAL_GRADIENT_TOLERANCE;
                lines.push(format!(
                    "functional ({}) max relative error: {worst:.3e}",
                    df.family().name()
                ));
            }
            let header: Vec<String> = ["target", "index", "relative_error"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.target.to_string(),
                        r.index.to_string(),
                        io::fmt_float(r.relative_error),
                    ]
                })
                .collect();
            Artifacts {
                csv: io::csv_bytes(&header, &csv_rows),
                report: json!({ "experiment": "gradcheck", "passed": passed, "rows": rows }),
                lines,
                plot: None,
                failure: (!passed).then(|| "gradient check above tolerance".to_string()),
            }
        }
        Prepared::Spectrum {
            df,
            count,
            at,
            opts,
        } => {
            let (traj, report) = match at {
                SpectrumPoint::Minimizer => {
                    let m = minimize_action(df, opts)?;
                    (m.trajectory, Some(strip_time(m.report)))
                }
                SpectrumPoint::StationaryPoint => {
                    let m = stationary_point(df)?;
                    (m.trajectory, Some(strip_time(m.report)))
                }
                SpectrumPoint::StraightLine => (df.straight_line(), None),
            };
            let eig = hessian_spectrum(df, &traj, *count)?;
            let failure = match &report {
                Some(r) if !r.converged => Some("stationary point not reached".to_string()),
                _ => None,
            };
            let header: Vec<String> = vec!["index".into(), "eigenvalue".into()];
            let rows: Vec<Vec<String>> = eig
                .iter()
                .enumerate()
                .map(|(i, v)| vec![i.to_string(), io::fmt_float(*v)])
                .collect();
            let idx: Vec<f64> = (0..eig.len()).map(|i| i as f64).collect();
            let plot = line_plot(
                "smallest Hessian eigenvalues",
                "index",
                &[Series {
                    label: "eigenvalue".into(),
                    x: &idx,
                    y: eig.clone(),
                }],
            );
            Artifacts {
                csv: io::csv_bytes(&header, &rows),
                report: json!({
                    "experiment": "spectrum",
                    "family": df.family(),
                    "N": df.intervals(),
                    "at": at,
                    "eigenvalues": eig,
                    "report": report,
                }),
                lines: vec![
                    format!("family: {}", df.family().name()),
                    format!("smallest eigenvalue: {:.6e}", eig[0]),
                    format!("minimum (no negative eigenvalue): {}", eig[0] >= -1e-8),
                ],
                plot: Some(plot),
                failure,
            }
        }
    })
}

fn summary_text(
    experiment: &str,
    status: &str,
    seed: u64,
    threads: usize,
    elapsed: f64,
    lines: &[String],
) -> String {
    let mut s = format!(
        "experiment: {experiment}\nstatus: {status}\nseed: {seed}\nthreads: {threads}\nwall time (s): {elapsed:.3}\n"
    );
    for line in lines {
        s.push_str(line);
        s.push('\n');
    }
    s
}

/// Runs one experiment; `threads` overrides `COGACTION_THREADS`.
pub fn run(path: &Path, threads: Option<usize>) -> Outcome {
    let started = Instant::now();
    let (cfg, prepared) = match validate(path) {
        Ok(v) => v,
        Err(e) => {
            return Outcome {
                status: exit_status(&e),
                message: e.to_string(),
            }
        }
    };
    let out_dir = config_dir(path).join(&cfg.output_dir);
    if let Err(source) = std::fs::create_dir_all(&out_dir) {
        let e = Error::Io {
            path: out_dir,
            source,
        };
        return Outcome {
            status: EXIT_IO,
            message: e.to_string(),
        };
    }
    let thread_count = parallel::thread_count(threads);
    let name = cfg.experiment.name();
    let result = execute(&prepared, &cfg, threads);
    let elapsed = started.elapsed().as_secs_f64();
    let summary_path = out_dir.join("summary.txt");

    let artifacts = match result {
        Ok(a) => a,
        Err(e) => {
            let status = exit_status(&e);
            let text = summary_text(
                name,
                &format!("FAILED: {e}"),
                cfg.seed,
                thread_count,
                elapsed,
                &["no result.csv or report.json was written".into()],
            );
            if let Err(io_err) = io::write_bytes(&summary_path, text.as_bytes()) {
                return Outcome {
                    status: EXIT_IO,
                    message: io_err.to_string(),
                };
            }
            return Outcome {
                status,
                message: e.to_string(),
            };
        }
    };

    let (status, status_line) = match &artifacts.failure {
        None => (EXIT_OK, "ok".to_string()),
        Some(why) => (EXIT_NOT_CONVERGED, format!("FAILED: {why}")),
    };
    let writes = [
        (out_dir.join("result.csv"), artifacts.csv.clone()),
        (out_dir.join("report.json"), json_bytes(&artifacts.report)),
    ];
    for (p, bytes) in &writes {
        if let Err(e) = io::write_bytes(p, bytes) {
            let text = summary_text(
                name,
                &format!("FAILED: {e}"),
                cfg.seed,
                thread_count,
                elapsed,
                &artifacts.lines,
            );
            let _ = io::write_bytes(&summary_path, text.as_bytes());
            return Outcome {
                status: EXIT_IO,
                message: e.to_string(),
            };
        }
    }
    if cfg.plot {
        if let Some(svg) = &artifacts.plot {
            if let Err(e) = io::write_bytes(&out_dir.join("plot.svg"), svg.as_bytes()) {
                return Outcome {
                    status: EXIT_IO,
                    message: e.to_string(),
                };
            }
        }
    }
    let text = summary_text(
        name,
        &status_line,
        cfg.seed,
        thread_count,
        elapsed,
        &artifacts.lines,
    );
    if let Err(e) = io::write_bytes(&summary_path, text.as_bytes()) {
        return Outcome {
            status: EXIT_IO,
            message: e.to_string(),
        };
    }
    Outcome {
        status,
        message: format!("{name}: {status_line} ({})", out_dir.display()),
    }
}
