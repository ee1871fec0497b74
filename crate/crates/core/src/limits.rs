//! Limit experiments and the trajectory metrics they use.
//!
//! Distances are discrete and strong: the weak H¹ convergence of the theory
//! has no finite-dimensional counterpart, so the strong H¹ norm on the grid
//! stands in for it.

use serde::Serialize;

use crate::action::{build_discrete, ActionSpec, DiscreteFunctional, Family};
use crate::dynamics::{integrate, DynamicsKind, DynamicsSpec};
use crate::error::{check_dim, Error, Result};
use crate::parallel;
use crate::potential::PotentialSpec;
use crate::solver::{minimize_action, stationary_point, Minimization, SolverOptions, SolverReport};
use crate::trajectory::{Stencil, Trajectory};

/// Recorded with every sweep so readers know which norm was used.
pub const METRIC_NOTE: &str =
    "discrete strong H1 distance on the grid, a surrogate for weak H1 convergence";

/// Slack for strict monotonicity checks.
pub const MONOTONE_SLACK: f64 = 1e-12;

fn trapezoid(k: usize, intervals: usize, h: f64) -> f64 {
    if k == 0 || k == intervals {
        0.5 * h
    } else {
        h
    }
}

fn difference(a: &Trajectory, b: &Trajectory) -> Result<Trajectory> {
    a.check_grid(b)?;
    let nodes = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .collect();
    Trajectory::new(a.horizon(), a.intervals(), a.dim(), nodes)
}

/// `sqrt(Σ c_k (|a_k − b_k|² + |ȧ_k − ḃ_k|²))` with trapezoid weights `c_k`
/// and the trajectory's difference-stencil velocities.
pub fn h1_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let d = difference(a, b)?;
    let (big_n, h) = (d.intervals(), d.step());
    let total: f64 = (0..=big_n)
        .map(|k| {
            let v = Stencil::first(k, big_n).eval(&d);
            let pos: f64 = d.node(k).iter().map(|x| x * x).sum();
            let vel: f64 = v.iter().map(|x| x * x).sum();
            trapezoid(k, big_n, h) * (pos + vel)
        })
        .sum();
    Ok(total.sqrt())
}

pub fn l2_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let d = difference(a, b)?;
    let (big_n, h) = (d.intervals(), d.step());
    let total: f64 = (0..=big_n)
        .map(|k| trapezoid(k, big_n, h) * d.node(k).iter().map(|x| x * x).sum::<f64>())
        .sum();
    Ok(total.sqrt())
}

/// Largest Euclidean node difference over nodes with `t0 ≤ t_k ≤ t1`.
pub fn sup_distance(a: &Trajectory, b: &Trajectory, t0: f64, t1: f64) -> Result<f64> {
    a.check_grid(b)?;
    let tol = 1e-12 * a.horizon();
    Ok((0..=a.intervals())
        .filter(|&k| a.time(k) >= t0 - tol && a.time(k) <= t1 + tol)
        .map(|k| {
            a.node(k)
                .iter()
                .zip(b.node(k))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max))
}

/// Keeps every `stride`-th node, turning a fine integrator output into a coarse grid.
pub fn subsample(traj: &Trajectory, stride: usize) -> Result<Trajectory> {
    if stride == 0 || !traj.intervals().is_multiple_of(stride) {
        return Err(Error::invalid(format!(
            "cannot subsample {} intervals by {stride}",
            traj.intervals()
        )));
    }
    let n = traj.dim();
    let coarse = traj.intervals() / stride;
    let mut nodes = Vec::with_capacity((coarse + 1) * n);
    for k in 0..=coarse {
        nodes.extend_from_slice(traj.node(k * stride));
    }
    Trajectory::new(traj.horizon(), coarse, n, nodes)
}

/// `true` when every entry is below its predecessor by more than [`MONOTONE_SLACK`].
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0] - MONOTONE_SLACK)
}

fn check_parameter_list(what: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(format!("{what} list is empty")));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("{what} values must be positive")));
    }
    if !values.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::invalid(format!(
            "{what} list must be strictly decreasing"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceDescriptor {
    pub integrator: &'static str,
    pub dynamics: DynamicsKind,
    pub mass: Option<f64>,
    pub dissipation: f64,
    pub dt: f64,
    /// Integrator steps per grid interval.
    pub sample_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    /// NaN when the row is invalid.
    pub h1_dist: f64,
    pub l2_dist: f64,
    pub sup_dist: f64,
    pub converged: bool,
    pub iterations: usize,
    pub report: Option<SolverReport>,
    pub error: Option<String>,
}

impl SweepRow {
    fn invalid(
        param: f64,
        iterations: usize,
        report: Option<SolverReport>,
        error: Option<String>,
    ) -> Self {
        SweepRow {
            param,
            h1_dist: f64::NAN,
            l2_dist: f64::NAN,
            sup_dist: f64::NAN,
            converged: false,
            iterations,
            report,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// `"epsilon"` or `"mass"`.
    pub parameter: &'static str,
    pub rows: Vec<SweepRow>,
    pub reference: ReferenceDescriptor,
    pub sup_window: [f64; 2],
    pub metric: &'static str,
}

impl SweepResult {
    pub fn h1_distances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.h1_dist).collect()
    }

    pub fn sup_distances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sup_dist).collect()
    }

    pub fn all_valid(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

/// The causal dynamics a W-eps family should recover as `ε → 0`.
fn limit_dynamics(base: &ActionSpec, dt: f64) -> DynamicsSpec {
    let eta = if base.family == Family::WEpsDissipative {
        base.dissipation
    } else {
        0.0
    };
    let (m, pot, q0, q1, big_t) = (
        base.mass,
        base.potential.clone(),
        base.q0.clone(),
        base.q1.clone(),
        base.horizon,
    );
    match &base.signal {
        Some(signal) => {
            DynamicsSpec::online_heavy_ball(m, eta, pot, signal.clone(), q0, q1, big_t, dt)
        }
        None if eta > 0.0 => DynamicsSpec::heavy_ball(m, eta, pot, q0, q1, big_t, dt),
        None => DynamicsSpec::newton(m, pot, q0, q1, big_t, dt),
    }
}

/// Integrator steps per grid interval for reference solutions (`dt = h / 10`).
pub const REFERENCE_REFINEMENT: usize = 10;

fn check_w_eps(base: &ActionSpec) -> Result<()> {
    if !base.family.is_w_eps() {
        return Err(Error::invalid(format!(
            "limit experiments need a W-eps family, got {}",
            base.family.name()
        )));
    }
    Ok(())
}

/// Minimizes the functional for each `ε` and measures its distance to the
/// causal reference dynamics with the same Cauchy data. Non-converged rows are
/// kept and marked invalid.
pub fn epsilon_sweep(
    base: &ActionSpec,
    eps_list: &[f64],
    intervals: usize,
    opts: &SolverOptions,
    threads: Option<usize>,
) -> Result<SweepResult> {
    check_w_eps(base)?;
    check_parameter_list("epsilon", eps_list)?;
    let functionals = eps_list
        .iter()
        .map(|&eps| build_discrete(&base.clone().with_epsilon(eps), intervals))
        .collect::<Result<Vec<DiscreteFunctional>>>()?;
    let h = base.horizon / intervals as f64;
    let dt = h / REFERENCE_REFINEMENT as f64;
    let dynamics = limit_dynamics(base, dt);
    let fine = integrate(&dynamics)?;
    let reference = subsample(&fine.positions, REFERENCE_REFINEMENT)?;

    let rows = parallel::map_indexed(functionals.len(), threads, |i| {
        let eps = eps_list[i];
        match minimize_action(&functionals[i], opts) {
            Ok(m) if m.report.converged => {
                let q = &m.trajectory;
                let dists = (
                    h1_distance(q, &reference),
                    l2_distance(q, &reference),
                    sup_distance(q, &reference, 0.0, base.horizon),
                );
                match dists {
                    (Ok(h1), Ok(l2), Ok(sup)) => SweepRow {
                        param: eps,
                        h1_dist: h1,
                        l2_dist: l2,
                        sup_dist: sup,
                        converged: true,
                        iterations: m.report.iterations,
                        report: Some(m.report),
                        error: None,
                    },
                    _ => SweepRow::invalid(
                        eps,
                        m.report.iterations,
                        Some(m.report),
                        Some("distance failed".into()),
                    ),
                }
            }
            Ok(m) => SweepRow::invalid(eps, m.report.iterations, Some(m.report), None),
            Err(e) => SweepRow::invalid(eps, 0, None, Some(e.to_string())),
        }
    });
    Ok(SweepResult {
        parameter: "epsilon",
        rows,
        reference: ReferenceDescriptor {
            integrator: "rk4",
            dynamics: dynamics.kind,
            mass: dynamics.mass,
            dissipation: dynamics.dissipation,
            dt,
            sample_every: REFERENCE_REFINEMENT,
        },
        sup_window: [0.0, base.horizon],
        metric: METRIC_NOTE,
    })
}

/// Heavy ball for decreasing masses against the gradient flow with the same `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassSweep {
    pub potential: PotentialSpec,
    pub dissipation: f64,
    pub q0: Vec<f64>,
    /// Defaults to `−∇V(q⁰)/η`, the gradient-flow velocity at the start.
    pub q1: Option<Vec<f64>>,
    pub horizon: f64,
    pub masses: Vec<f64>,
    pub dt: f64,
    /// Start of the sup-distance window; defaults to `T/10`.
    pub cutoff: Option<f64>,
}

pub fn mass_sweep(sweep: &MassSweep, threads: Option<usize>) -> Result<SweepResult> {
    check_parameter_list("mass", &sweep.masses)?;
    if !(sweep.dissipation > 0.0) {
        return Err(Error::invalid("mass sweep needs eta > 0"));
    }
    let t0 = sweep.cutoff.unwrap_or(sweep.horizon / 10.0);
    if !(0.0..sweep.horizon).contains(&t0) {
        return Err(Error::invalid("cutoff must lie in [0, T)"));
    }
    let q1 = match &sweep.q1 {
        Some(q1) => {
            check_dim("initial velocity q1", sweep.q0.len(), q1.len())?;
            q1.clone()
        }
        None => sweep
            .potential
            .grad(&sweep.q0, None)?
            .iter()
            .map(|g| -g / sweep.dissipation)
            .collect(),
    };
    let flow_spec = DynamicsSpec::gradient_flow(
        sweep.dissipation,
        sweep.potential.clone(),
        sweep.q0.clone(),
        sweep.horizon,
        sweep.dt,
    );
    let flow = integrate(&flow_spec)?.positions;
    let rows = parallel::map_indexed(sweep.masses.len(), threads, |i| {
        let m = sweep.masses[i];
        let spec = DynamicsSpec::heavy_ball(
            m,
            sweep.dissipation,
            sweep.potential.clone(),
            sweep.q0.clone(),
            q1.clone(),
            sweep.horizon,
            sweep.dt,
        );
        match integrate(&spec) {
            Ok(out) => {
                let q = &out.positions;
                let steps = q.intervals();
                match (
                    h1_distance(q, &flow),
                    l2_distance(q, &flow),
                    sup_distance(q, &flow, t0, sweep.horizon),
                ) {
                    (Ok(h1), Ok(l2), Ok(sup)) => SweepRow {
                        param: m,
                        h1_dist: h1,
                        l2_dist: l2,
                        sup_dist: sup,
                        converged: true,
                        iterations: steps,
                        report: None,
                        error: None,
                    },
                    _ => SweepRow::invalid(m, steps, None, Some("distance failed".into())),
                }
            }
            Err(e) => SweepRow::invalid(m, 0, None, Some(e.to_string())),
        }
    });
    Ok(SweepResult {
        parameter: "mass",
        rows,
        reference: ReferenceDescriptor {
            integrator: "rk4",
            dynamics: DynamicsKind::GradientFlow,
            mass: None,
            dissipation: sweep.dissipation,
            dt: sweep.dt,
            sample_every: 1,
        },
        sup_window: [t0, sweep.horizon],
        metric: METRIC_NOTE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalityRow {
    pub param: f64,
    /// Sup-norm of the base/perturbed difference on `[0, t* − δ]`; NaN if invalid.
    pub deviation: f64,
    pub converged: bool,
    pub iterations_base: usize,
    pub iterations_perturbed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalityBaseline {
    pub family: Family,
    pub deviation: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalityResult {
    pub t_star: f64,
    pub delta: f64,
    pub offset: Vec<f64>,
    pub rows: Vec<CausalityRow>,
    /// Classical action with a free end: the non-causal contrast.
    pub baseline: Option<CausalityBaseline>,
}

impl CausalityResult {
    pub fn deviations(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.deviation).collect()
    }
}

/// Exact Newton solve when the functional is a convex quadratic, otherwise
/// L-BFGS. Past `t*` the gradient carries the factor `e^{−t/ε}`, which the
/// unweighted stationarity test cannot resolve; an iterative solve would stop
/// before the tail responds to the perturbation.
fn probe_minimize(df: &DiscreteFunctional, opts: &SolverOptions) -> Result<Minimization> {
    if df.is_quadratic() && df.quadratic_hessian(true).cholesky().is_ok() {
        stationary_point(df)
    } else {
        minimize_action(df, opts)
    }
}

/// Shifts the input by `offset` on `(t*, T]` and measures how much the
/// minimizer moves on `[0, t* − δ]` (`δ` defaults to five grid steps).
#[allow(clippy::too_many_arguments)]
pub fn causality_probe(
    base: &ActionSpec,
    t_star: f64,
    offset: &[f64],
    eps_list: &[f64],
    intervals: usize,
    opts: &SolverOptions,
    delta: Option<f64>,
    threads: Option<usize>,
) -> Result<CausalityResult> {
    check_w_eps(base)?;
    check_parameter_list("epsilon", eps_list)?;
    if !(t_star > 0.0 && t_star < base.horizon) {
        return Err(Error::invalid("t_star must lie in (0, T)"));
    }
    if base.signal.is_none() {
        return Err(Error::invalid(
            "causality probe perturbs the input signal; the potential must be time-varying",
        ));
    }
    let h = base.horizon / intervals as f64;
    let delta = delta.unwrap_or(5.0 * h);
    let window_end = t_star - delta;
    let pairs = eps_list
        .iter()
        .map(|&eps| {
            let df = build_discrete(&base.clone().with_epsilon(eps), intervals)?;
            let perturbed = df.with_signal_offset_after(t_star, offset)?;
            Ok((df, perturbed))
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = parallel::map_indexed(pairs.len(), threads, |i| {
        let (df, perturbed) = &pairs[i];
        let a = probe_minimize(df, opts);
        let b = probe_minimize(perturbed, opts);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let converged = a.report.converged && b.report.converged;
                let deviation = if converged {
                    sup_distance(&a.trajectory, &b.trajectory, 0.0, window_end).unwrap_or(f64::NAN)
                } else {
                    f64::NAN
                };
                CausalityRow {
                    param: eps_list[i],
                    deviation,
                    converged,
                    iterations_base: a.report.iterations,
                    iterations_perturbed: b.report.iterations,
                }
            }
            _ => CausalityRow {
                param: eps_list[i],
                deviation: f64::NAN,
                converged: false,
                iterations_base: 0,
                iterations_perturbed: 0,
            },
        }
    });

    let baseline = if base.potential.is_quadratic() {
        let classical = ActionSpec::classical(
            base.mass,
            base.potential.clone(),
            base.q0.clone(),
            base.q1.clone(),
            base.horizon,
        )
        .with_signal(base.signal.clone().expect("checked above"));
        let df = build_discrete(&classical, intervals)?;
        let perturbed = df.with_signal_offset_after(t_star, offset)?;
        let a = stationary_point(&df)?;
        let b = stationary_point(&perturbed)?;
        Some(CausalityBaseline {
            family: Family::ClassicalS,
            deviation: sup_distance(&a.trajectory, &b.trajectory, 0.0, window_end)?,
            converged: a.report.converged && b.report.converged,
        })
    } else {
        None
    };

    Ok(CausalityResult {
        t_star,
        delta,
        offset: offset.to_vec(),
        rows,
        baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::InputSignal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_traj(rng: &mut ChaCha8Rng) -> Trajectory {
        let nodes = (0..2 * 41).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Trajectory::new(2.0, 40, 2, nodes).unwrap()
    }

    #[test]
    fn h1_metric_axioms() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
        for _ in 0..5 {
            let (a, b, c) = (
                random_traj(&mut rng),
                random_traj(&mut rng),
                random_traj(&mut rng),
            );
            assert_eq!(h1_distance(&a, &a).unwrap(), 0.0);
            let ab = h1_distance(&a, &b).unwrap();
            assert_eq!(ab, h1_distance(&b, &a).unwrap());
            assert!(ab > 0.0);
            let (bc, ac) = (h1_distance(&b, &c).unwrap(), h1_distance(&a, &c).unwrap());
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn h1_of_constant_offset() {
        let zero = Trajectory::from_fn(1.0, 20, 1, |_| vec![0.0]).unwrap();
        let c = Trajectory::from_fn(1.0, 20, 1, |_| vec![-0.7]).unwrap();
        assert!((h1_distance(&zero, &c).unwrap() - 0.7).abs() < 1e-14);
        assert!((l2_distance(&zero, &c).unwrap() - 0.7).abs() < 1e-14);
        assert_eq!(sup_distance(&zero, &c, 0.0, 1.0).unwrap(), 0.7);
        let other = Trajectory::from_fn(1.0, 21, 1, |_| vec![0.0]).unwrap();
        assert!(h1_distance(&zero, &other).is_err());
    }

    #[test]
    fn subsample_keeps_every_stride_node() {
        let fine = Trajectory::from_fn(1.0, 40, 1, |t| vec![t * t]).unwrap();
        let coarse = subsample(&fine, 10).unwrap();
        assert_eq!(coarse.intervals(), 4);
        assert_eq!(coarse.node(2), fine.node(20));
        assert!(subsample(&fine, 3).is_err());
    }

    fn weps_quadratic() -> ActionSpec {
        let k = PotentialSpec::isotropic(1, 1.0).unwrap();
        ActionSpec::w_eps(1.0, 0.2, k, vec![1.0], vec![0.0], 3.0)
    }

    #[test]
    fn single_value_sweep_has_one_valid_row() {
        let r = epsilon_sweep(
            &weps_quadratic(),
            &[0.1],
            200,
            &SolverOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.all_valid());
        assert!(r.rows[0].h1_dist.is_finite());
        assert_eq!(r.reference.dynamics, DynamicsKind::Newton);
    }

    #[test]
    fn sweep_rejects_unsorted_lists_and_wrong_family() {
        let opts = SolverOptions::default();
        assert!(epsilon_sweep(&weps_quadratic(), &[0.1, 0.2], 100, &opts, None).is_err());
        assert!(epsilon_sweep(&weps_quadratic(), &[], 100, &opts, None).is_err());
        let k = PotentialSpec::isotropic(1, 1.0).unwrap();
        let classical = ActionSpec::classical(1.0, k, vec![1.0], vec![0.0], 3.0);
        assert!(epsilon_sweep(&classical, &[0.1], 100, &opts, None).is_err());
    }

    #[test]
    fn mass_sweep_at_equilibrium_is_zero() {
        let sweep = MassSweep {
            potential: PotentialSpec::isotropic(1, 1.0).unwrap(),
            dissipation: 1.0,
            q0: vec![0.0],
            q1: None,
            horizon: 3.0,
            masses: vec![0.5],
            dt: 1e-2,
            cutoff: None,
        };
        let r = mass_sweep(&sweep, None).unwrap();
        assert_eq!(r.rows[0].sup_dist, 0.0);
        assert_eq!(r.rows[0].h1_dist, 0.0);
        assert!((r.sup_window[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn null_perturbation_gives_zero_deviation() {
        let base = ActionSpec::w_eps(
            1.0,
            0.2,
            PotentialSpec::tracking(1, 1.0).unwrap(),
            vec![1.0],
            vec![0.0],
            3.0,
        )
        .with_signal(InputSignal::zero(1, 3.0).unwrap());
        let r = causality_probe(
            &base,
            1.5,
            &[0.0],
            &[0.2, 0.1],
            200,
            &SolverOptions::default(),
            None,
            None,
        )
        .unwrap();
        assert!(r
            .rows
            .iter()
            .all(|row| row.deviation == 0.0 && row.converged));
        assert_eq!(r.baseline.unwrap().deviation, 0.0);
        assert!(causality_probe(
            &base,
            3.0,
            &[1.0],
            &[0.2],
            200,
            &SolverOptions::default(),
            None,
            None
        )
        .is_err());
    }

    #[test]
    fn strict_decrease_uses_slack() {
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[1.0, 1.0 - 1e-14]));
        assert!(strictly_decreasing(&[5.0]));
    }
}
