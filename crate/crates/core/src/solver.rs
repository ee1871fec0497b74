//! Direct minimization of discrete action functionals.
//!
//! The single minimizer is a limited-memory quasi-Newton method with a
//! backtracking Armijo line search, relaxed to approximate Wolfe conditions
//! once function values stop resolving the decrease. Its initial inverse-Hessian model is the
//! banded Hessian of the terms that are quadratic in the trajectory; for a
//! quadratic potential that is the exact Hessian, so the first step is a
//! Newton step. This matters for exponentially decaying weights, where the
//! Hessian is graded over dozens of orders of magnitude and an unpreconditioned
//! method would leave late nodes unconverged while the gradient test passes.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::action::{max_norm, DiscreteFunctional};
use crate::banded::BandCholesky;
use crate::error::{Error, Result};
use crate::limits::h1_distance;
use crate::parallel;
use crate::trajectory::Trajectory;

/// Largest free-variable count accepted by the dense eigensolver.
pub const MAX_SPECTRUM_SIZE: usize = 4000;

#[derive(Debug, Clone, PartialEq)]
pub enum Initialization {
    /// `q⁰ + t q¹` (with the pinned terminal node if any).
    StraightLine,
    Custom(Trajectory),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Converged when `max|∇| ≤ gradient_tolerance · (1 + |value|)`.
    pub gradient_tolerance: f64,
    pub sufficient_decrease: f64,
    pub backtracking_factor: f64,
    pub memory: usize,
    pub initialization: Initialization,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 5000,
            gradient_tolerance: 1e-8,
            sufficient_decrease: 1e-4,
            backtracking_factor: 0.5,
            memory: 10,
            initialization: Initialization::StraightLine,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        if !(self.gradient_tolerance > 0.0) || !self.gradient_tolerance.is_finite() {
            return Err(Error::invalid("gradient tolerance must be positive"));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::invalid(
                "sufficient-decrease constant must lie in (0, 1)",
            ));
        }
        if !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0) {
            return Err(Error::invalid("backtracking factor must lie in (0, 1)"));
        }
        if self.memory == 0 {
            return Err(Error::invalid("quasi-Newton memory must be positive"));
        }
        Ok(())
    }

    pub fn with_initialization(mut self, init: Trajectory) -> Self {
        self.initialization = Initialization::Custom(init);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_value: f64,
    pub stationarity_norm: f64,
    pub el_residual_max: Option<f64>,
    pub boundary_residual: Option<[f64; 2]>,
    /// Seconds; `None` when stripped for reproducible output.
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Minimization {
    pub trajectory: Trajectory,
    pub report: SolverReport,
    /// Functional value after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Absolute rise in `f` tolerated by the approximate-Wolfe acceptance.
const APPROX_WOLFE_SLACK: f64 = 1e-12;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn initial_trajectory(df: &DiscreteFunctional, opts: &SolverOptions) -> Result<Trajectory> {
    match &opts.initialization {
        Initialization::StraightLine => Ok(df.straight_line()),
        Initialization::Custom(traj) => {
            df.check_grid(traj)?;
            let scale = 1.0 + max_abs(traj.values());
            let violation = df.clamp_violation(traj);
            if violation > 1e-12 * scale {
                return Err(Error::invalid(format!(
                    "initial trajectory violates the clamped nodes by {violation:e}"
                )));
            }
            Ok(traj.clone())
        }
    }
}

fn finish_report(
    df: &DiscreteFunctional,
    traj: &Trajectory,
    value: f64,
    grad: &[f64],
    converged: bool,
    iterations: usize,
    started: Instant,
) -> Result<SolverReport> {
    let (el, bc) = if df.family().is_w_eps() && df.intervals() >= 8 {
        (
            Some(max_norm(&df.el_residual(traj)?)),
            Some(df.boundary_residual(traj)?),
        )
    } else {
        (None, None)
    };
    Ok(SolverReport {
        converged,
        iterations,
        final_value: value,
        stationarity_norm: max_abs(grad),
        el_residual_max: el,
        boundary_residual: bc,
        wall_time: Some(started.elapsed().as_secs_f64()),
    })
}

enum Preconditioner {
    Banded(BandCholesky),
    Scaled(f64),
}

impl Preconditioner {
    fn build(df: &DiscreteFunctional) -> Self {
        let with_pot = df.quadratic_hessian(true).cholesky();
        match with_pot {
            Ok(c) => Preconditioner::Banded(c),
            Err(_) => match df.quadratic_hessian(false).cholesky() {
                Ok(c) => Preconditioner::Banded(c),
                Err(_) => Preconditioner::Scaled(1.0),
            },
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Preconditioner::Banded(c) => c.solve(v).expect("preconditioner size matches"),
            Preconditioner::Scaled(s) => v.iter().map(|x| s * x).collect(),
        }
    }
}

/// Minimizes the functional over its free nodes.
pub fn minimize_action(df: &DiscreteFunctional, opts: &SolverOptions) -> Result<Minimization> {
    opts.validate()?;
    let started = Instant::now();
    let template = initial_trajectory(df, opts)?;
    let mut x = df.free_vars(&template);
    let (mut f, mut g) = df.value_and_grad(&template).map_err(|e| {
        Error::invalid(format!(
            "functional is not finite at the initialization: {e}"
        ))
    })?;
    let mut history = vec![f];
    let tolerance = |f: f64| opts.gradient_tolerance * (1.0 + f.abs());

    let mut precond = Preconditioner::build(df);
    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.memory);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.memory);
    let mut rho_hist: Vec<f64> = Vec::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut converged = max_abs(&g) <= tolerance(f);

    while !converged && iterations < opts.max_iterations {
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            alphas[i] = rho_hist[i] * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alphas[i] * yj;
            }
        }
        let mut r = precond.apply(&q);
        for i in 0..s_hist.len() {
            let beta = rho_hist[i] * dot(&y_hist[i], &r);
            for (rj, sj) in r.iter_mut().zip(&s_hist[i]) {
                *rj += sj * (alphas[i] - beta);
            }
        }
        let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = precond.apply(&g).iter().map(|v| -v).collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                precond = Preconditioner::Scaled(1.0);
                d = g.iter().map(|v| -v).collect();
                slope = dot(&g, &d);
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let x_new: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let traj = df.with_free_vars(&template, &x_new);
            if let Ok((f_new, g_new)) = df.value_and_grad(&traj) {
                // Approximate Wolfe: near the minimum the decrease along stiff
                // directions drops below the rounding of `f`, so fall back to
                // the directional derivative (Hager–Zhang).
                let new_slope = dot(&g_new, &d);
                let flat = f_new <= f + APPROX_WOLFE_SLACK
                    && new_slope >= 0.9 * slope
                    && new_slope <= -(1.0 - 2.0 * opts.sufficient_decrease) * slope;
                if f_new <= f + opts.sufficient_decrease * step * slope || flat {
                    accepted = Some((x_new, f_new, g_new));
                    break;
                }
            }
            step *= opts.backtracking_factor;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
            if let Preconditioner::Scaled(_) = precond {
                let yy = dot(&y_hist[y_hist.len() - 1], &y_hist[y_hist.len() - 1]);
                precond = Preconditioner::Scaled(sy / yy);
            }
        }
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        iterations += 1;
        converged = max_abs(&g) <= tolerance(f);
    }

    let trajectory = df.with_free_vars(&template, &x);
    let report = finish_report(df, &trajectory, f, &g, converged, iterations, started)?;
    Ok(Minimization {
        trajectory,
        report,
        history,
    })
}

/// Stationary point of a functional whose Hessian is constant (quadratic
/// potential), found by one Newton step with a pivoted banded solve. Unlike
/// [`minimize_action`] this also reaches saddles.
pub fn stationary_point(df: &DiscreteFunctional) -> Result<Minimization> {
    if !df.is_quadratic() {
        return Err(Error::invalid(
            "stationary_point needs a potential with constant Hessian",
        ));
    }
    let started = Instant::now();
    let template = df.straight_line();
    let x0 = df.free_vars(&template);
    let (f0, g0) = df.value_and_grad(&template)?;
    let step = df.quadratic_hessian(true).lu()?.solve(&g0)?;
    let x: Vec<f64> = x0.iter().zip(&step).map(|(a, b)| a - b).collect();
    let trajectory = df.with_free_vars(&template, &x);
    let (f, g) = df.value_and_grad(&trajectory)?;
    let converged = max_abs(&g) <= 1e-8 * (1.0 + f.abs());
    let report = finish_report(df, &trajectory, f, &g, converged, 1, started)?;
    Ok(Minimization {
        trajectory,
        report,
        history: vec![f0, f],
    })
}

/// Full free-node Hessian, analytic when the potential is quadratic and by
/// symmetric differences of the exact gradient otherwise.
pub fn free_hessian(df: &DiscreteFunctional, traj: &Trajectory) -> Result<DMatrix<f64>> {
    df.check_grid(traj)?;
    let size = df.free_len();
    if size > MAX_SPECTRUM_SIZE {
        return Err(Error::invalid(format!(
            "{size} free variables exceed the dense eigensolver limit {MAX_SPECTRUM_SIZE}"
        )));
    }
    if df.is_quadratic() {
        return Ok(df.quadratic_hessian(true).to_dense());
    }
    let x = df.free_vars(traj);
    let mut h = DMatrix::zeros(size, size);
    for j in 0..size {
        let step = 1e-5 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        xp[j] += step;
        let mut xm = x.clone();
        xm[j] -= step;
        let gp = df.grad(&df.with_free_vars(traj, &xp))?;
        let gm = df.grad(&df.with_free_vars(traj, &xm))?;
        for i in 0..size {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// The `k` algebraically smallest eigenvalues of the free-node Hessian, ascending.
pub fn hessian_spectrum(df: &DiscreteFunctional, traj: &Trajectory, k: usize) -> Result<Vec<f64>> {
    let size = df.free_len();
    if k == 0 || k > size {
        return Err(Error::invalid(format!(
            "requested {k} eigenvalues of a {size}-variable Hessian"
        )));
    }
    let h = free_hessian(df, traj)?;
    let mut eig: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig.truncate(k);
    Ok(eig)
}

/// Smooth random start: straight line plus low sine modes ramped by `t/T`,
/// untouched at the clamped nodes (and at a pinned terminal).
pub fn perturbed_start(df: &DiscreteFunctional, seed: u64, index: usize) -> Trajectory {
    let base = df.straight_line();
    if index == 0 {
        return base;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let n = df.dim();
    let amplitude = 0.5 * (1.0 + max_abs(base.values()));
    let modes = 3;
    let coefs: Vec<f64> = (0..modes * n)
        .map(|_| amplitude * rng.gen_range(-1.0..1.0))
        .collect();
    let big_t = df.horizon();
    let mut x = df.free_vars(&base);
    for (idx, k) in (2..=df.last_free_node()).enumerate() {
        let s = df.time(k) / big_t;
        for i in 0..n {
            let bump: f64 = (0..modes)
                .map(|j| coefs[j * n + i] * ((j + 1) as f64 * std::f64::consts::PI * s).sin())
                .sum();
            x[idx * n + i] += s * bump;
        }
    }
    df.with_free_vars(&base, &x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub size: usize,
    pub best_value: f64,
    pub representative_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartSummary {
    pub index: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_value: Option<f64>,
    pub stationarity_norm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultistartSummary {
    pub starts: usize,
    pub seed: u64,
    pub converged: usize,
    pub threshold: f64,
    pub clusters: Vec<Cluster>,
    pub runs: Vec<StartSummary>,
}

#[derive(Debug)]
pub struct Multistart {
    pub results: Vec<Result<Minimization>>,
    pub summary: MultistartSummary,
}

/// Runs the solver from `starts` initializations and clusters the results by
/// discrete H¹ distance. Start order is preserved whatever the thread count.
pub fn multistart_minimize(
    df: &DiscreteFunctional,
    opts: &SolverOptions,
    starts: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<Multistart> {
    if starts < 2 {
        return Err(Error::invalid("multistart needs at least 2 starts"));
    }
    opts.validate()?;
    let results: Vec<Result<Minimization>> = parallel::map_indexed(starts, threads, |i| {
        let init = perturbed_start(df, seed, i);
        let run_opts = opts.clone().with_initialization(init);
        minimize_action(df, &run_opts)
    });

    let scale = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|m| max_abs(m.trajectory.values()))
        .fold(0.0, f64::max);
    let threshold = 1e-4 * (1.0 + scale);
    let mut clusters: Vec<Cluster> = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let Ok(m) = r else { continue };
        let mut home = None;
        for (c, cluster) in clusters.iter().enumerate() {
            let rep = results[cluster.representative_index]
                .as_ref()
                .expect("representatives are successful runs");
            if h1_distance(&rep.trajectory, &m.trajectory)? <= threshold {
                home = Some(c);
                break;
            }
        }
        match home {
            Some(c) => {
                clusters[c].size += 1;
                clusters[c].best_value = clusters[c].best_value.min(m.report.final_value);
            }
            None => clusters.push(Cluster {
                size: 1,
                best_value: m.report.final_value,
                representative_index: i,
            }),
        }
    }
    let runs = results
        .iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(m) => StartSummary {
                index: i,
                converged: m.report.converged,
                iterations: m.report.iterations,
                final_value: Some(m.report.final_value),
                stationarity_norm: Some(m.report.stationarity_norm),
                error: None,
            },
            Err(e) => StartSummary {
                index: i,
                converged: false,
                iterations: 0,
                final_value: None,
                stationarity_norm: None,
                error: Some(e.to_string()),
            },
        })
        .collect::<Vec<_>>();
    let summary = MultistartSummary {
        starts,
        seed,
        converged: runs.iter().filter(|r| r.converged).count(),
        threshold,
        clusters,
        runs,
    };
    Ok(Multistart { results, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{build_discrete, ActionSpec, Coefficients, WeightFunction};
    use crate::potential::{InputSignal, PotentialSpec, SignalKind};

    fn oscillator(big_t: f64) -> ActionSpec {
        let k = PotentialSpec::isotropic(1, 1.0).unwrap();
        ActionSpec::classical(1.0, k, vec![1.0], vec![0.0], big_t).with_terminal(vec![big_t.cos()])
    }

    fn w_eps_quadratic(eps: f64) -> ActionSpec {
        let k = PotentialSpec::isotropic(1, 1.0).unwrap();
        ActionSpec::w_eps(1.0, eps, k, vec![1.0], vec![0.0], 3.0)
    }

    #[test]
    fn quadratic_w_eps_converges_fast() {
        let df = build_discrete(&w_eps_quadratic(0.05), 600).unwrap();
        let m = minimize_action(&df, &SolverOptions::default()).unwrap();
        assert!(m.report.converged, "{:?}", m.report);
        assert!(m.report.iterations <= 5, "{:?}", m.report);
        assert!(m.report.el_residual_max.is_some());
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let df = build_discrete(&w_eps_quadratic(0.1), 200).unwrap();
        let first = minimize_action(&df, &SolverOptions::default()).unwrap();
        let again = minimize_action(
            &df,
            &SolverOptions::default().with_initialization(first.trajectory.clone()),
        )
        .unwrap();
        assert_eq!(again.report.iterations, 0);
        assert!(again.report.converged);
        assert_eq!(again.trajectory, first.trajectory);
    }

    #[test]
    fn values_never_increase() {
        let pot = PotentialSpec::double_well(2, 1.0).unwrap();
        let spec = ActionSpec::gamma(
            Coefficients {
                alpha: 0.2,
                beta: 0.5,
                gamma1: 0.3,
                gamma2: 0.1,
                kappa: 0.1,
            },
            WeightFunction::ExpDecay { epsilon: 1.0 },
            pot,
            vec![0.3, -0.2],
            vec![0.0, 1.0],
            2.0,
        );
        let df = build_discrete(&spec, 80).unwrap();
        let m = minimize_action(&df, &SolverOptions::default()).unwrap();
        assert!(m.report.converged, "{:?}", m.report);
        for w in m.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_initialization() {
        let df = build_discrete(&w_eps_quadratic(0.1), 50).unwrap();
        let bad = Trajectory::from_fn(3.0, 50, 1, |t| vec![t]).unwrap();
        let opts = SolverOptions::default().with_initialization(bad);
        assert!(matches!(
            minimize_action(&df, &opts),
            Err(Error::InvalidInput(_))
        ));
        let wrong_grid = Trajectory::from_fn(3.0, 51, 1, |_| vec![1.0]).unwrap();
        let opts = SolverOptions::default().with_initialization(wrong_grid);
        assert!(minimize_action(&df, &opts).is_err());
    }

    #[test]
    fn invalid_options_are_rejected() {
        let df = build_discrete(&w_eps_quadratic(0.1), 50).unwrap();
        let opts = SolverOptions {
            backtracking_factor: 1.0,
            ..SolverOptions::default()
        };
        assert!(minimize_action(&df, &opts).is_err());
    }

    #[test]
    fn oscillator_spectrum_changes_sign_past_conjugate_point() {
        for (big_t, positive) in [(2.0, true), (6.0, false)] {
            let df = build_discrete(&oscillator(big_t), 200).unwrap();
            let sp = stationary_point(&df).unwrap();
            assert!(sp.report.converged);
            let eig = hessian_spectrum(&df, &sp.trajectory, 1).unwrap();
            assert_eq!(eig[0] > 0.0, positive, "T={big_t}: {eig:?}");
        }
    }

    #[test]
    fn finite_difference_hessian_matches_analytic_on_quadratic() {
        let df = build_discrete(&w_eps_quadratic(0.5), 12).unwrap();
        let traj = perturbed_start(&df, 7, 1);
        let exact = df.quadratic_hessian(true).to_dense();
        // force the finite-difference path through a non-quadratic twin
        let x = df.free_vars(&traj);
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp[j] += 1e-4;
            let gp = df.grad(&df.with_free_vars(&traj, &xp)).unwrap();
            let g0 = df.grad(&traj).unwrap();
            for i in 0..x.len() {
                let fd = (gp[i] - g0[i]) / 1e-4;
                assert!((fd - exact[(i, j)]).abs() < 1e-6 * (1.0 + exact[(i, j)].abs()));
            }
        }
    }

    #[test]
    fn spectrum_rejects_bad_k() {
        let df = build_discrete(&w_eps_quadratic(0.5), 12).unwrap();
        let traj = df.straight_line();
        assert!(hessian_spectrum(&df, &traj, 0).is_err());
        assert!(hessian_spectrum(&df, &traj, df.free_len() + 1).is_err());
    }

    #[test]
    fn perturbed_starts_respect_clamps() {
        let df = build_discrete(&oscillator(2.0), 40).unwrap();
        for i in 0..4 {
            let t = perturbed_start(&df, 11, i);
            assert_eq!(df.clamp_violation(&t), 0.0);
        }
        assert_ne!(perturbed_start(&df, 11, 1), perturbed_start(&df, 11, 2));
        assert_eq!(perturbed_start(&df, 11, 3), perturbed_start(&df, 11, 3));
    }

    #[test]
    fn multistart_convex_case_has_one_cluster_and_is_deterministic() {
        let df = build_discrete(&w_eps_quadratic(0.05), 300).unwrap();
        let a = multistart_minimize(&df, &SolverOptions::default(), 8, 42, Some(1)).unwrap();
        let b = multistart_minimize(&df, &SolverOptions::default(), 8, 42, Some(4)).unwrap();
        assert_eq!(a.summary.clusters.len(), 1);
        assert_eq!(a.summary.converged, 8);
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
        assert!(multistart_minimize(&df, &SolverOptions::default(), 1, 42, None).is_err());
    }

    #[test]
    fn multistart_double_well_clusters_bound_global_best() {
        let spec = ActionSpec::gamma(
            Coefficients {
                alpha: 1.0,
                beta: 1.0,
                gamma1: 0.0,
                gamma2: 0.0,
                kappa: 0.1,
            },
            WeightFunction::ConstantOne,
            PotentialSpec::coupled(PotentialSpec::double_well(1, 1.0).unwrap(), 1.0, 1).unwrap(),
            vec![0.5],
            vec![0.0],
            2.0,
        )
        .with_signal(InputSignal::new(SignalKind::Zero, 1, 2.0).unwrap());
        let df = build_discrete(&spec, 60).unwrap();
        let ms = multistart_minimize(&df, &SolverOptions::default(), 8, 3, None).unwrap();
        assert!(!ms.summary.clusters.is_empty());
        let best = ms
            .summary
            .clusters
            .iter()
            .map(|c| c.best_value)
            .fold(f64::INFINITY, f64::min);
        for c in &ms.summary.clusters {
            assert!(c.best_value >= best - 1e-12);
        }
        assert_eq!(ms.summary.clusters.iter().map(|c| c.size).sum::<usize>(), 8);
    }
}
