//! Causal dynamics integrated with the classical fixed-step RK4 scheme.
//!
//! Second order: `m q̈ + η q̇ + ∇U(q, u(t)) = 0` (η = 0 is Newton's law).
//! First order: `q̇ = −∇U(q, u(t)) / η`.
//! Online kinds sample the input at the stage times with the signal's own
//! hold semantics.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::potential::{InputSignal, PotentialSpec};
use crate::trajectory::{Trajectory, MIN_INTERVALS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    Newton,
    HeavyBall,
    GradientFlow,
    OnlineHeavyBall,
    OnlineGradientFlow,
}

impl DynamicsKind {
    pub fn is_second_order(self) -> bool {
        matches!(
            self,
            DynamicsKind::Newton | DynamicsKind::HeavyBall | DynamicsKind::OnlineHeavyBall
        )
    }

    pub fn is_online(self) -> bool {
        matches!(
            self,
            DynamicsKind::OnlineHeavyBall | DynamicsKind::OnlineGradientFlow
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            DynamicsKind::Newton => "newton",
            DynamicsKind::HeavyBall => "heavy-ball",
            DynamicsKind::GradientFlow => "gradient-flow",
            DynamicsKind::OnlineHeavyBall => "online-heavy-ball",
            DynamicsKind::OnlineGradientFlow => "online-gradient-flow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSpec {
    pub kind: DynamicsKind,
    /// Absent for gradient-flow kinds.
    pub mass: Option<f64>,
    pub dissipation: f64,
    pub potential: PotentialSpec,
    pub signal: Option<InputSignal>,
    pub q0: Vec<f64>,
    /// Absent for gradient-flow kinds.
    pub q1: Option<Vec<f64>>,
    pub horizon: f64,
    pub dt: f64,
}

impl DynamicsSpec {
    pub fn newton(
        mass: f64,
        potential: PotentialSpec,
        q0: Vec<f64>,
        q1: Vec<f64>,
        horizon: f64,
        dt: f64,
    ) -> Self {
        DynamicsSpec {
            kind: DynamicsKind::Newton,
            mass: Some(mass),
            dissipation: 0.0,
            potential,
            signal: None,
            q0,
            q1: Some(q1),
            horizon,
            dt,
        }
    }

    pub fn heavy_ball(
        mass: f64,
        dissipation: f64,
        potential: PotentialSpec,
        q0: Vec<f64>,
        q1: Vec<f64>,
        horizon: f64,
        dt: f64,
    ) -> Self {
        DynamicsSpec {
            kind: DynamicsKind::HeavyBall,
            dissipation,
            ..Self::newton(mass, potential, q0, q1, horizon, dt)
        }
    }

    pub fn gradient_flow(
        dissipation: f64,
        potential: PotentialSpec,
        q0: Vec<f64>,
        horizon: f64,
        dt: f64,
    ) -> Self {
        DynamicsSpec {
            kind: DynamicsKind::GradientFlow,
            mass: None,
            dissipation,
            potential,
            signal: None,
            q0,
            q1: None,
            horizon,
            dt,
        }
    }

    /// `η = 0` is allowed here: undamped Newton motion in a time-varying potential.
    #[allow(clippy::too_many_arguments)]
    pub fn online_heavy_ball(
        mass: f64,
        dissipation: f64,
        potential: PotentialSpec,
        signal: InputSignal,
        q0: Vec<f64>,
        q1: Vec<f64>,
        horizon: f64,
        dt: f64,
    ) -> Self {
        DynamicsSpec {
            kind: DynamicsKind::OnlineHeavyBall,
            signal: Some(signal),
            ..Self::heavy_ball(mass, dissipation, potential, q0, q1, horizon, dt)
        }
    }

    pub fn online_gradient_flow(
        dissipation: f64,
        potential: PotentialSpec,
        signal: InputSignal,
        q0: Vec<f64>,
        horizon: f64,
        dt: f64,
    ) -> Self {
        DynamicsSpec {
            kind: DynamicsKind::OnlineGradientFlow,
            signal: Some(signal),
            ..Self::gradient_flow(dissipation, potential, q0, horizon, dt)
        }
    }

    /// Number of steps `T / dt`, checked to be an integer within rounding.
    pub fn steps(&self) -> Result<usize> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("horizon T must be positive"));
        }
        if !(self.dt > 0.0) || self.dt > self.horizon {
            return Err(Error::invalid("step dt must satisfy 0 < dt <= T"));
        }
        let ratio = self.horizon / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio {
            return Err(Error::invalid(format!(
                "T / dt = {ratio} is not an integer"
            )));
        }
        let steps = steps as usize;
        if steps < MIN_INTERVALS {
            return Err(Error::invalid(format!(
                "integration needs at least {MIN_INTERVALS} steps, got {steps}"
            )));
        }
        Ok(steps)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.potential.dim();
        check_dim("initial position q0", n, self.q0.len())?;
        self.steps()?;
        let eta = self.dissipation;
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid("dissipation eta must be >= 0"));
        }
        match self.kind {
            DynamicsKind::Newton if eta != 0.0 => {
                return Err(Error::invalid(
                    "newton dynamics has eta = 0; use heavy-ball",
                ))
            }
            DynamicsKind::HeavyBall
            | DynamicsKind::GradientFlow
            | DynamicsKind::OnlineGradientFlow
                if eta <= 0.0 =>
            {
                return Err(Error::invalid(format!(
                    "{} needs eta > 0",
                    self.kind.name()
                )))
            }
            _ => {}
        }
        if self.kind.is_second_order() {
            match self.mass {
                Some(m) if m > 0.0 && m.is_finite() => {}
                _ => return Err(Error::invalid("second-order dynamics needs mass m > 0")),
            }
            let q1 = self
                .q1
                .as_ref()
                .ok_or_else(|| Error::invalid("second-order dynamics needs initial velocity q1"))?;
            check_dim("initial velocity q1", n, q1.len())?;
        } else if self.mass.is_some() || self.q1.is_some() {
            return Err(Error::invalid(
                "gradient-flow dynamics takes neither mass nor initial velocity",
            ));
        }
        if self.kind.is_online() {
            let signal = self
                .signal
                .as_ref()
                .ok_or_else(|| Error::invalid("online dynamics needs an input signal"))?;
            let m = self
                .potential
                .signal_dim()
                .ok_or_else(|| Error::invalid("online dynamics needs a time-varying potential"))?;
            check_dim("signal dimension", m, signal.dim())?;
            if signal.horizon() < self.horizon * (1.0 - 1e-12) {
                return Err(Error::invalid(
                    "signal horizon is shorter than the integration horizon",
                ));
            }
        } else if self.signal.is_some() || self.potential.is_time_varying() {
            return Err(Error::invalid(format!(
                "{} is autonomous; use an online kind for time-varying potentials",
                self.kind.name()
            )));
        }
        if self
            .q0
            .iter()
            .chain(self.q1.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::non_finite("initial data", "t = 0"));
        }
        Ok(())
    }
}

/// Positions (and velocities for second-order kinds) at every step, plus energy.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsOutput {
    pub kind: DynamicsKind,
    pub positions: Trajectory,
    pub velocities: Option<Trajectory>,
    pub energy: Vec<f64>,
}

struct Force<'a> {
    spec: &'a DynamicsSpec,
    u: Vec<f64>,
}

impl<'a> Force<'a> {
    fn new(spec: &'a DynamicsSpec) -> Self {
        let m = spec.signal.as_ref().map_or(0, |s| s.dim());
        Force {
            spec,
            u: vec![0.0; m],
        }
    }

    /// `∇U(q, u(t))` into `out`; domain failures become divergence at `t`.
    /// The last stage of a step uses the left limit of the input so that a
    /// step never sees the next hold interval.
    fn grad(&mut self, t: f64, left: bool, q: &[f64], out: &mut [f64]) -> Result<()> {
        let u = match &self.spec.signal {
            Some(signal) => {
                let t = t.min(signal.horizon());
                if left {
                    signal.sample_left_into(t, &mut self.u)?;
                } else {
                    signal.sample_into(t, &mut self.u)?;
                }
                Some(self.u.as_slice())
            }
            None => None,
        };
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t });
        }
        match self.spec.potential.grad_into(q, u, out) {
            Ok(()) if out.iter().all(|v| v.is_finite()) => Ok(()),
            Ok(()) | Err(Error::NumericDomain { .. }) => Err(Error::Divergence { time: t }),
            Err(e) => Err(e),
        }
    }
}

fn axpy(out: &mut [f64], base: &[f64], a: f64, x: &[f64]) {
    for ((o, b), xi) in out.iter_mut().zip(base).zip(x) {
        *o = b + a * xi;
    }
}

/// `m q̈ + η q̇ + ∇U = 0`, RK4 on the first-order system `(q, v)`.
pub fn integrate_second_order(spec: &DynamicsSpec) -> Result<DynamicsOutput> {
    if !spec.kind.is_second_order() {
        return Err(Error::invalid(format!(
            "{} is not a second-order kind",
            spec.kind.name()
        )));
    }
    spec.validate()?;
    let steps = spec.steps()?;
    let h = spec.horizon / steps as f64;
    let n = spec.q0.len();
    let mass = spec.mass.expect("validated");
    let eta = spec.dissipation;
    let mut force = Force::new(spec);

    let mut q = spec.q0.clone();
    let mut v = spec.q1.clone().expect("validated");
    let mut qs = Vec::with_capacity((steps + 1) * n);
    let mut vs = Vec::with_capacity((steps + 1) * n);
    qs.extend_from_slice(&q);
    vs.extend_from_slice(&v);

    let (mut kq, mut kv) = (
        [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
    );
    let mut qt = vec![0.0; n];
    let mut vt = vec![0.0; n];
    let mut g = vec![0.0; n];
    for step in 0..steps {
        let t = step as f64 * h;
        let offsets = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s == 0 {
                qt.copy_from_slice(&q);
                vt.copy_from_slice(&v);
            } else {
                let (prev_q, prev_v) = (kq[s - 1].clone(), kv[s - 1].clone());
                axpy(&mut qt, &q, offsets[s] * h, &prev_q);
                axpy(&mut vt, &v, offsets[s] * h, &prev_v);
            }
            force.grad(t + offsets[s] * h, s == 3, &qt, &mut g)?;
            kq[s].copy_from_slice(&vt);
            for i in 0..n {
                kv[s][i] = -(eta * vt[i] + g[i]) / mass;
            }
        }
        for i in 0..n {
            q[i] += h / 6.0 * (kq[0][i] + 2.0 * kq[1][i] + 2.0 * kq[2][i] + kq[3][i]);
            v[i] += h / 6.0 * (kv[0][i] + 2.0 * kv[1][i] + 2.0 * kv[2][i] + kv[3][i]);
        }
        if q.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Divergence { time: t + h });
        }
        qs.extend_from_slice(&q);
        vs.extend_from_slice(&v);
    }
    let positions = Trajectory::new(spec.horizon, steps, n, qs)?;
    let velocities = Trajectory::new(spec.horizon, steps, n, vs)?;
    let energy = mechanical_energy(
        &positions,
        Some(&velocities),
        mass,
        &spec.potential,
        spec.signal.as_ref(),
    )?;
    Ok(DynamicsOutput {
        kind: spec.kind,
        positions,
        velocities: Some(velocities),
        energy,
    })
}

/// `q̇ = −∇U / η` with RK4.
pub fn integrate_gradient_flow(spec: &DynamicsSpec) -> Result<DynamicsOutput> {
    if spec.kind.is_second_order() {
        return Err(Error::invalid(format!(
            "{} is not a gradient-flow kind",
            spec.kind.name()
        )));
    }
    spec.validate()?;
    let steps = spec.steps()?;
    let h = spec.horizon / steps as f64;
    let n = spec.q0.len();
    let eta = spec.dissipation;
    let mut force = Force::new(spec);

    let mut q = spec.q0.clone();
    let mut qs = Vec::with_capacity((steps + 1) * n);
    qs.extend_from_slice(&q);
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut qt = vec![0.0; n];
    let offsets = [0.0, 0.5, 0.5, 1.0];
    for step in 0..steps {
        let t = step as f64 * h;
        for s in 0..4 {
            if s == 0 {
                qt.copy_from_slice(&q);
            } else {
                let prev = k[s - 1].clone();
                axpy(&mut qt, &q, offsets[s] * h, &prev);
            }
            let tail = &mut k[s..];
            force.grad(t + offsets[s] * h, s == 3, &qt, &mut tail[0])?;
            for x in tail[0].iter_mut() {
                *x = -*x / eta;
            }
        }
        for i in 0..n {
            q[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { time: t + h });
        }
        qs.extend_from_slice(&q);
    }
    let positions = Trajectory::new(spec.horizon, steps, n, qs)?;
    let energy = mechanical_energy(&positions, None, 0.0, &spec.potential, spec.signal.as_ref())?;
    Ok(DynamicsOutput {
        kind: spec.kind,
        positions,
        velocities: None,
        energy,
    })
}

pub fn integrate(spec: &DynamicsSpec) -> Result<DynamicsOutput> {
    if spec.kind.is_second_order() {
        integrate_second_order(spec)
    } else {
        integrate_gradient_flow(spec)
    }
}

/// `E_k = ½ m |v_k|² + U(q_k, u(t_k))`; the kinetic term is dropped without velocities.
pub fn mechanical_energy(
    positions: &Trajectory,
    velocities: Option<&Trajectory>,
    mass: f64,
    potential: &PotentialSpec,
    signal: Option<&InputSignal>,
) -> Result<Vec<f64>> {
    if let Some(v) = velocities {
        positions.check_grid(v)?;
    }
    check_dim("potential dimension", potential.dim(), positions.dim())?;
    let mut u = signal.map(|s| vec![0.0; s.dim()]);
    (0..=positions.intervals())
        .map(|k| {
            let t = positions.time(k);
            let input = match (signal, u.as_mut()) {
                (Some(s), Some(buf)) => {
                    s.sample_into(t.min(s.horizon()), buf)?;
                    Some(buf.as_slice())
                }
                _ => None,
            };
            let pot = potential.eval(positions.node(k), input)?;
            let kinetic = velocities.map_or(0.0, |v| {
                0.5 * mass * v.node(k).iter().map(|x| x * x).sum::<f64>()
            });
            Ok(kinetic + pot)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::SignalKind;
    use std::f64::consts::PI;

    fn spring(k: f64) -> PotentialSpec {
        PotentialSpec::isotropic(1, k).unwrap()
    }

    #[test]
    fn newton_oscillator_returns_after_one_period() {
        let spec = DynamicsSpec::newton(
            1.0,
            spring(1.0),
            vec![1.0],
            vec![0.0],
            2.0 * PI,
            2.0 * PI / 6283.0,
        );
        let out = integrate(&spec).unwrap();
        let last = out.positions.intervals();
        assert!((out.positions.node(last)[0] - 1.0).abs() < 1e-6);
        assert!(out.velocities.unwrap().node(last)[0].abs() < 1e-6);
    }

    #[test]
    fn heavy_ball_matches_overdamped_closed_form() {
        let spec = DynamicsSpec::heavy_ball(1.0, 3.0, spring(2.0), vec![1.0], vec![0.0], 5.0, 1e-3);
        let out = integrate(&spec).unwrap();
        for k in 0..=out.positions.intervals() {
            let t = out.positions.time(k);
            let exact = 2.0 * (-t).exp() - (-2.0 * t).exp();
            assert!((out.positions.node(k)[0] - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_flow_matches_exponential() {
        let spec = DynamicsSpec::gradient_flow(1.0, spring(1.0), vec![1.0], 3.0, 1e-3);
        let out = integrate(&spec).unwrap();
        for k in 0..=out.positions.intervals() {
            let t = out.positions.time(k);
            assert!((out.positions.node(k)[0] - (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn equilibrium_stays_put() {
        let flat = PotentialSpec::zero(2);
        let specs = [
            DynamicsSpec::newton(
                1.0,
                flat.clone(),
                vec![0.3, -1.0],
                vec![0.0, 0.0],
                1.0,
                0.01,
            ),
            DynamicsSpec::heavy_ball(
                2.0,
                0.5,
                flat.clone(),
                vec![0.3, -1.0],
                vec![0.0, 0.0],
                1.0,
                0.01,
            ),
            DynamicsSpec::gradient_flow(0.5, flat, vec![0.3, -1.0], 1.0, 0.01),
        ];
        for spec in specs {
            let out = integrate(&spec).unwrap();
            for k in 0..=out.positions.intervals() {
                assert_eq!(out.positions.node(k), &[0.3, -1.0]);
            }
        }
    }

    #[test]
    fn online_flow_relaxes_toward_held_input() {
        let table = vec![vec![1.0], vec![-0.5], vec![2.0]];
        let signal = InputSignal::new(SignalKind::Replay { table, hold: 1.0 }, 1, 3.0).unwrap();
        let pot = PotentialSpec::tracking(1, 1.0).unwrap();
        let spec = DynamicsSpec::online_gradient_flow(1.0, pot, signal, vec![0.0], 3.0, 1e-3);
        let out = integrate(&spec).unwrap();
        let targets = [1.0, -0.5, 2.0];
        let mut start = 0.0;
        for (j, &u) in targets.iter().enumerate() {
            for k in (j * 1000)..=((j + 1) * 1000) {
                let t = out.positions.time(k);
                let exact = u + (start - u) * (-(t - j as f64)).exp();
                assert!((out.positions.node(k)[0] - exact).abs() < 1e-6, "t={t}");
            }
            start = u + (start - u) * (-1.0f64).exp();
        }
    }

    #[test]
    fn online_with_zero_signal_is_bitwise_autonomous() {
        let coupled =
            PotentialSpec::coupled(PotentialSpec::double_well(2, 1.0).unwrap(), 1.5, 2).unwrap();
        let zero = InputSignal::zero(2, 2.0).unwrap();
        let online = DynamicsSpec::online_heavy_ball(
            1.0,
            0.4,
            coupled.clone(),
            zero.clone(),
            vec![0.5, 0.1],
            vec![0.2, 0.0],
            2.0,
            0.01,
        );
        let plain = DynamicsSpec::heavy_ball(
            1.0,
            0.4,
            PotentialSpec::zero(2),
            vec![0.5, 0.1],
            vec![0.2, 0.0],
            2.0,
            0.01,
        );
        assert_eq!(
            integrate(&online).unwrap().positions,
            integrate(&plain).unwrap().positions
        );
        let online =
            DynamicsSpec::online_gradient_flow(0.4, coupled, zero, vec![0.5, 0.1], 2.0, 0.01);
        let plain =
            DynamicsSpec::gradient_flow(0.4, PotentialSpec::zero(2), vec![0.5, 0.1], 2.0, 0.01);
        assert_eq!(
            integrate(&online).unwrap().positions,
            integrate(&plain).unwrap().positions
        );
    }

    #[test]
    fn divergence_reports_time() {
        let rosen = PotentialSpec::rosenbrock(2, 1.0, 100.0).unwrap();
        let spec = DynamicsSpec::gradient_flow(1e-3, rosen, vec![-3.0, 3.0], 1.0, 0.01);
        match integrate(&spec) {
            Err(Error::Divergence { time }) => assert!(time > 0.0 && time <= 1.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn spec_invariants_are_enforced() {
        let bad_eta = DynamicsSpec {
            dissipation: 0.5,
            ..DynamicsSpec::newton(1.0, spring(1.0), vec![1.0], vec![0.0], 1.0, 0.1)
        };
        assert!(bad_eta.validate().is_err());
        assert!(
            DynamicsSpec::heavy_ball(1.0, 0.0, spring(1.0), vec![1.0], vec![0.0], 1.0, 0.1)
                .validate()
                .is_err()
        );
        assert!(
            DynamicsSpec::gradient_flow(1.0, spring(1.0), vec![1.0], 1.0, 0.3)
                .validate()
                .is_err()
        );
        assert!(
            DynamicsSpec::gradient_flow(1.0, spring(1.0), vec![1.0], 1.0, 2.0)
                .validate()
                .is_err()
        );
        let spec = DynamicsSpec::gradient_flow(1.0, spring(1.0), vec![1.0], 1.0, 0.1);
        assert!(integrate_second_order(&spec).is_err());
    }

    #[test]
    fn energy_rejects_mismatched_series() {
        let a = Trajectory::from_fn(1.0, 10, 1, |_| vec![0.0]).unwrap();
        let b = Trajectory::from_fn(1.0, 11, 1, |_| vec![0.0]).unwrap();
        assert!(mechanical_energy(&a, Some(&b), 1.0, &spring(1.0), None).is_err());
        let e = mechanical_energy(&a, Some(&a), 1.0, &spring(1.0), None).unwrap();
        assert!(e.iter().all(|&x| x == 0.0));
    }
}
