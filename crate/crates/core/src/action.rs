//! Weighted action functionals on a uniform grid.
//!
//! All four families share one integrand,
//!
//! ```text
//! ϖ(t) [ μ/2 |q̈|² + ν/2 |q̇|² + γ q̇·q̈ + κ/2 |q|² + σ U(q, u(t)) ]
//! ```
//!
//! with family-specific coefficients (σ = −1 only for the classical action).
//! The integral is a trapezoidal sum over the nodes; derivatives come from the
//! stencils in [`crate::trajectory`]. Nodes 0 and 1 are clamped to
//! `q⁰` and `q⁰ + h q¹`, so the feasible set is affine and the remaining nodes
//! are free variables for unconstrained minimization.

use serde::{Deserialize, Serialize};

use crate::banded::SymBand;
use crate::error::{check_dim, Error, Hypothesis, Result};
use crate::potential::{InputSignal, PotentialSpec};
use crate::trajectory::{Stencil, Trajectory, MIN_INTERVALS};

/// Weights below this are clamped; configurations that would need it are rejected.
pub const WEIGHT_FLOOR: f64 = 1e-300;
/// Largest `T/ε` (or `ηT/m`) accepted in theorem mode.
pub const MAX_WEIGHT_EXPONENT: f64 = 600.0;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightFunction {
    ConstantOne,
    /// `e^{−t/ε}`
    ExpDecay {
        epsilon: f64,
    },
    /// `e^{ηt/m}`
    ExpGrowth {
        dissipation: f64,
        mass: f64,
    },
    /// One positive value per grid node.
    Tabulated {
        values: Vec<f64>,
    },
}

impl WeightFunction {
    fn validate(&self) -> Result<()> {
        match self {
            WeightFunction::ConstantOne => Ok(()),
            WeightFunction::ExpDecay { epsilon } => {
                if *epsilon > 0.0 && epsilon.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("exp-decay weight needs epsilon > 0"))
                }
            }
            WeightFunction::ExpGrowth { dissipation, mass } => {
                if *dissipation >= 0.0 && dissipation.is_finite() && *mass > 0.0 && mass.is_finite()
                {
                    Ok(())
                } else {
                    Err(Error::invalid("exp-growth weight needs eta >= 0 and m > 0"))
                }
            }
            WeightFunction::Tabulated { values } => {
                if values.iter().all(|v| *v > 0.0 && v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "tabulated weights must be positive and finite",
                    ))
                }
            }
        }
    }

    fn log_weight(&self, t: f64) -> f64 {
        match self {
            WeightFunction::ConstantOne => 0.0,
            WeightFunction::ExpDecay { epsilon } => -t / epsilon,
            WeightFunction::ExpGrowth { dissipation, mass } => dissipation * t / mass,
            WeightFunction::Tabulated { .. } => unreachable!("tabulated weights are node-indexed"),
        }
    }

    /// Bounds `(C₁, C₂)` with `C₁ ≤ ϖ(t) ≤ C₂` on `[0, T]`.
    pub fn bounds(&self, horizon: f64) -> (f64, f64) {
        match self {
            WeightFunction::ConstantOne => (1.0, 1.0),
            WeightFunction::ExpDecay { epsilon } => ((-horizon / epsilon).exp(), 1.0),
            WeightFunction::ExpGrowth { dissipation, mass } => {
                (1.0, (dissipation * horizon / mass).exp())
            }
            WeightFunction::Tabulated { values } => (
                values.iter().cloned().fold(f64::INFINITY, f64::min),
                values.iter().cloned().fold(0.0, f64::max),
            ),
        }
    }

    /// Weights at the `intervals + 1` grid nodes, plus whether any hit the floor.
    pub fn node_weights(&self, horizon: f64, intervals: usize) -> Result<(Vec<f64>, bool)> {
        self.validate()?;
        if let WeightFunction::Tabulated { values } = self {
            check_dim("tabulated weights", intervals + 1, values.len())?;
            return Ok((values.clone(), false));
        }
        let h = horizon / intervals as f64;
        let mut clamped = false;
        let weights = (0..=intervals)
            .map(|k| {
                let w = self.log_weight(k as f64 * h).exp();
                if w < WEIGHT_FLOOR {
                    clamped = true;
                    WEIGHT_FLOOR
                } else {
                    w
                }
            })
            .collect::<Vec<_>>();
        if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Config(format!(
                "weight overflows at node {k}; reduce the horizon or the growth rate"
            )));
        }
        Ok((weights, clamped))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// `½ m |q̇|² − V(q)`.
    #[serde(rename = "classical-S")]
    ClassicalS,
    /// `e^{−t/ε} (ε² m/2 |q̈|² + V(q))`.
    #[serde(rename = "W-eps")]
    WEps,
    /// `W-eps` plus `ε η/2 |q̇|²`.
    #[serde(rename = "W-eps-dissipative")]
    WEpsDissipative,
    /// General coefficients `μ, ν, γ, κ` with a time-dependent potential.
    #[serde(rename = "Gamma")]
    Gamma,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::ClassicalS => "classical-S",
            Family::WEps => "W-eps",
            Family::WEpsDissipative => "W-eps-dissipative",
            Family::Gamma => "Gamma",
        }
    }

    pub fn is_w_eps(self) -> bool {
        matches!(self, Family::WEps | Family::WEpsDissipative)
    }
}

/// `α, β, γ₁, γ₂, κ`, from which `μ = α + γ₂²`, `ν = β + γ₁²`, `γ = γ₁ γ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa: f64,
}

impl Coefficients {
    pub fn mu(&self) -> f64 {
        self.alpha + self.gamma2 * self.gamma2
    }

    pub fn nu(&self) -> f64 {
        self.beta + self.gamma1 * self.gamma1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma1 * self.gamma2
    }
}

/// Coefficients of the shared integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrand {
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub potential_sign: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub family: Family,
    pub coefficients: Coefficients,
    pub mass: f64,
    pub dissipation: f64,
    pub epsilon: Option<f64>,
    pub weight: WeightFunction,
    pub potential: PotentialSpec,
    pub signal: Option<InputSignal>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    pub horizon: f64,
    /// Pins the last node (Dirichlet condition). Only for the classical action.
    pub terminal: Option<Vec<f64>>,
    pub theorem_mode: bool,
}

impl ActionSpec {
    fn base(
        family: Family,
        potential: PotentialSpec,
        q0: Vec<f64>,
        q1: Vec<f64>,
        horizon: f64,
    ) -> Self {
        ActionSpec {
            family,
            coefficients: Coefficients::default(),
            mass: 1.0,
            dissipation: 0.0,
            epsilon: None,
            weight: WeightFunction::ConstantOne,
            potential,
            signal: None,
            q0,
            q1,
            horizon,
            terminal: None,
            theorem_mode: false,
        }
    }

    pub fn classical(
        mass: f64,
        potential: PotentialSpec,
        q0: Vec<f64>,
        q1: Vec<f64>,
        horizon: f64,
    ) -> Self {
        ActionSpec {
            mass,
            ..Self::base(Family::ClassicalS, potential, q0, q1, horizon)
        }
    }

    pub fn w_eps(
        mass: f64,
        epsilon: f64,
        potential: PotentialSpec,
        q0: Vec<f64>,
        q1: Vec<f64>,
        horizon: f64,
    ) -> Self {
        ActionSpec {
            mass,
            epsilon: Some(epsilon),
            weight: WeightFunction::ExpDecay { epsilon },
            ..Self::base(Family::WEps, potential, q0, q1, horizon)
        }
    }

    pub fn w_eps_dissipative(
        mass: f64,
        dissipation: f64,
        epsilon: f64,
        potential: PotentialSpec,
        q0: Vec<f64>,
        q1: Vec<f64>,
        horizon: f64,
    ) -> Self {
        ActionSpec {
            family: Family::WEpsDissipative,
            dissipation,
            ..Self::w_eps(mass, epsilon, potential, q0, q1, horizon)
        }
    }

    pub fn gamma(
        coefficients: Coefficients,
        weight: WeightFunction,
        potential: PotentialSpec,
        q0: Vec<f64>,
        q1: Vec<f64>,
        horizon: f64,
    ) -> Self {
        ActionSpec {
            coefficients,
            weight,
            ..Self::base(Family::Gamma, potential, q0, q1, horizon)
        }
    }

    pub fn with_signal(mut self, signal: InputSignal) -> Self {
        self.signal = Some(signal);
        self
    }

    pub fn with_weight(mut self, weight: WeightFunction) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_terminal(mut self, terminal: Vec<f64>) -> Self {
        self.terminal = Some(terminal);
        self
    }

    pub fn with_theorem_mode(mut self, on: bool) -> Self {
        self.theorem_mode = on;
        self
    }

    /// Same functional with a different `ε` (W-eps families only).
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self.weight = WeightFunction::ExpDecay { epsilon };
        self
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn integrand(&self) -> Integrand {
        let eps = self.epsilon.unwrap_or(0.0);
        match self.family {
            Family::ClassicalS => Integrand {
                mu: 0.0,
                nu: self.mass,
                gamma: 0.0,
                kappa: 0.0,
                potential_sign: -1.0,
            },
            Family::WEps => Integrand {
                mu: eps * eps * self.mass,
                nu: 0.0,
                gamma: 0.0,
                kappa: 0.0,
                potential_sign: 1.0,
            },
            Family::WEpsDissipative => Integrand {
                mu: eps * eps * self.mass,
                nu: eps * self.dissipation,
                gamma: 0.0,
                kappa: 0.0,
                potential_sign: 1.0,
            },
            Family::Gamma => Integrand {
                mu: self.coefficients.mu(),
                nu: self.coefficients.nu(),
                gamma: self.coefficients.gamma(),
                kappa: self.coefficients.kappa,
                potential_sign: 1.0,
            },
        }
    }

    /// Structural consistency; does not check the existence hypotheses.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        check_dim("initial position q0", n, self.q0.len())?;
        check_dim("initial velocity q1", n, self.q1.len())?;
        if self.q0.iter().chain(&self.q1).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("initial data", "q0/q1"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("horizon T must be positive"));
        }
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::invalid("mass m must be positive"));
        }
        if !(self.dissipation >= 0.0) || !self.dissipation.is_finite() {
            return Err(Error::invalid("dissipation eta must be >= 0"));
        }
        self.weight.validate()?;
        if self.family.is_w_eps() {
            let eps = self
                .epsilon
                .ok_or_else(|| Error::invalid("W-eps families need epsilon"))?;
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::invalid("epsilon must be positive"));
            }
            if self.weight != (WeightFunction::ExpDecay { epsilon: eps }) {
                return Err(Error::invalid(
                    "W-eps families use the weight exp(-t/epsilon)",
                ));
            }
        }
        if self.family == Family::Gamma {
            let c = &self.coefficients;
            let all = [c.alpha, c.beta, c.gamma1, c.gamma2, c.kappa];
            if all.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite("coefficient", "Gamma family"));
            }
            if c.alpha < 0.0 || c.beta < 0.0 || c.kappa < 0.0 {
                return Err(Error::invalid("alpha, beta and kappa must be >= 0"));
            }
        }
        if let Some(term) = &self.terminal {
            if self.family != Family::ClassicalS {
                return Err(Error::invalid(
                    "a pinned terminal node is only available for the classical action",
                ));
            }
            check_dim("terminal position", n, term.len())?;
        }
        match (self.potential.signal_dim(), &self.signal) {
            (Some(m), Some(s)) => {
                check_dim("signal dimension", m, s.dim())?;
                if (s.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
                    return Err(Error::invalid("signal horizon differs from action horizon"));
                }
            }
            (Some(_), None) => {
                return Err(Error::invalid(
                    "time-varying potential needs an input signal",
                ));
            }
            (None, Some(_)) => {
                return Err(Error::invalid("input signal given for a static potential"));
            }
            (None, None) => {}
        }
        Ok(())
    }

    /// Existence hypotheses, checked only in theorem mode.
    pub fn check_hypotheses(&self) -> Result<()> {
        if self.family == Family::Gamma {
            let c = &self.coefficients;
            if !(c.alpha > 0.0) {
                return Err(Error::Hypothesis(Hypothesis::AlphaPositive));
            }
            if !(c.beta > 0.0) {
                return Err(Error::Hypothesis(Hypothesis::BetaPositive));
            }
            if !(c.kappa > 0.0) {
                return Err(Error::Hypothesis(Hypothesis::KappaPositive));
            }
        }
        if !self.potential.lower_bound().is_finite() {
            return Err(Error::Hypothesis(Hypothesis::BoundedBelow));
        }
        if self.potential.is_time_varying() && !self.potential.vanishes_at_null_input() {
            return Err(Error::Hypothesis(Hypothesis::ZeroAtNullInput));
        }
        let exponent = match &self.weight {
            WeightFunction::ExpDecay { epsilon } => Some(self.horizon / epsilon),
            WeightFunction::ExpGrowth { dissipation, mass } => {
                Some(dissipation * self.horizon / mass)
            }
            _ => None,
        };
        if let Some(e) = exponent {
            if e > MAX_WEIGHT_EXPONENT {
                return Err(Error::Hypothesis(Hypothesis::WeightBounds(format!(
                    "exponent {e:.1} exceeds {MAX_WEIGHT_EXPONENT}; increase epsilon"
                ))));
            }
        }
        let (c1, c2) = self.weight.bounds(self.horizon);
        if !(c1 > 0.0) || !c2.is_finite() {
            return Err(Error::Hypothesis(Hypothesis::WeightBounds(format!(
                "C1 = {c1}, C2 = {c2}"
            ))));
        }
        Ok(())
    }
}

/// Grid realization of an [`ActionSpec`]; immutable after construction.
#[derive(Debug, Clone)]
pub struct DiscreteFunctional {
    spec: ActionSpec,
    intervals: usize,
    step: f64,
    weights: Vec<f64>,
    /// Trapezoid weight times `ϖ(t_k)`.
    quadrature: Vec<f64>,
    signal_samples: Option<Vec<f64>>,
    integrand: Integrand,
}

/// Builds the grid functional: node weights, sampled input, clamp data.
pub fn build_discrete(spec: &ActionSpec, intervals: usize) -> Result<DiscreteFunctional> {
    DiscreteFunctional::new(spec, intervals)
}

impl DiscreteFunctional {
    pub fn new(spec: &ActionSpec, intervals: usize) -> Result<Self> {
        if intervals < MIN_INTERVALS {
            return Err(Error::invalid(format!(
                "grid needs N >= {MIN_INTERVALS}, got {intervals}"
            )));
        }
        spec.validate()?;
        if spec.theorem_mode {
            spec.check_hypotheses()?;
        }
        let (weights, clamped) = spec.weight.node_weights(spec.horizon, intervals)?;
        if clamped {
            return Err(Error::Config(format!(
                "weight underflows below {WEIGHT_FLOOR:e} on the horizon; use a larger epsilon"
            )));
        }
        let step = spec.horizon / intervals as f64;
        let quadrature = weights
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let c = if k == 0 || k == intervals { 0.5 } else { 1.0 };
                c * step * w
            })
            .collect();
        let signal_samples = match &spec.signal {
            Some(signal) => {
                let m = signal.dim();
                let mut samples = vec![0.0; (intervals + 1) * m];
                for k in 0..=intervals {
                    let t = (k as f64 * step).min(signal.horizon());
                    signal.sample_into(t, &mut samples[k * m..(k + 1) * m])?;
                }
                Some(samples)
            }
            None => None,
        };
        Ok(DiscreteFunctional {
            spec: spec.clone(),
            intervals,
            step,
            weights,
            quadrature,
            signal_samples,
            integrand: spec.integrand(),
        })
    }

    pub fn spec(&self) -> &ActionSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrand(&self) -> Integrand {
        self.integrand
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn signal_at(&self, k: usize) -> Option<&[f64]> {
        self.signal_samples.as_ref().map(|s| {
            let m = s.len() / (self.intervals + 1);
            &s[k * m..(k + 1) * m]
        })
    }

    /// Free nodes are `2..=last_free`.
    pub fn last_free_node(&self) -> usize {
        if self.spec.terminal.is_some() {
            self.intervals - 1
        } else {
            self.intervals
        }
    }

    pub fn free_len(&self) -> usize {
        (self.last_free_node() - 1) * self.dim()
    }

    /// Node 1 under the initial-velocity clamp.
    pub fn clamp_node1(&self) -> Vec<f64> {
        self.spec
            .q0
            .iter()
            .zip(&self.spec.q1)
            .map(|(a, v)| a + self.step * v)
            .collect()
    }

    /// `q⁰ + t q¹` on the grid (last node pinned if the spec says so).
    pub fn straight_line(&self) -> Trajectory {
        let (q0, q1) = (&self.spec.q0, &self.spec.q1);
        let n = self.dim();
        let mut nodes = Vec::with_capacity((self.intervals + 1) * n);
        for k in 0..=self.intervals {
            let t = self.time(k);
            if k == 1 {
                nodes.extend(self.clamp_node1());
            } else {
                nodes.extend(q0.iter().zip(q1).map(|(a, v)| a + t * v));
            }
        }
        if let Some(term) = &self.spec.terminal {
            let k = self.intervals;
            nodes[k * n..(k + 1) * n].copy_from_slice(term);
        }
        Trajectory::new(self.spec.horizon, self.intervals, n, nodes)
            .expect("straight line from validated spec")
    }

    pub fn check_grid(&self, traj: &Trajectory) -> Result<()> {
        if traj.intervals() != self.intervals
            || traj.dim() != self.dim()
            || traj.horizon().to_bits() != self.spec.horizon.to_bits()
        {
            return Err(Error::invalid(format!(
                "trajectory grid (T={}, N={}, n={}) does not match functional (T={}, N={}, n={})",
                traj.horizon(),
                traj.intervals(),
                traj.dim(),
                self.spec.horizon,
                self.intervals,
                self.dim()
            )));
        }
        Ok(())
    }

    /// Largest deviation of the clamped nodes from their prescribed values.
    pub fn clamp_violation(&self, traj: &Trajectory) -> f64 {
        let mut worst = 0.0_f64;
        let node1 = self.clamp_node1();
        for (a, b) in traj.node(0).iter().zip(&self.spec.q0) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in traj.node(1).iter().zip(&node1) {
            worst = worst.max((a - b).abs());
        }
        if let Some(term) = &self.spec.terminal {
            for (a, b) in traj.node(self.intervals).iter().zip(term) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn free_vars(&self, traj: &Trajectory) -> Vec<f64> {
        let n = self.dim();
        traj.values()[2 * n..(self.last_free_node() + 1) * n].to_vec()
    }

    /// Writes free variables into a copy of `template` (clamped nodes kept).
    pub fn with_free_vars(&self, template: &Trajectory, x: &[f64]) -> Trajectory {
        let n = self.dim();
        let mut out = template.clone();
        out.values_mut()[2 * n..(self.last_free_node() + 1) * n].copy_from_slice(x);
        out
    }

    /// Same grid with the input shifted by `offset` at every node with `t_k > t_star`.
    pub fn with_signal_offset_after(&self, t_star: f64, offset: &[f64]) -> Result<Self> {
        let samples = self
            .signal_samples
            .as_ref()
            .ok_or_else(|| Error::invalid("signal perturbation needs a time-varying potential"))?;
        let m = samples.len() / (self.intervals + 1);
        check_dim("signal perturbation", m, offset.len())?;
        let mut out = self.clone();
        let s = out.signal_samples.as_mut().expect("checked above");
        for k in 0..=self.intervals {
            if self.time(k) > t_star {
                for (v, d) in s[k * m..(k + 1) * m].iter_mut().zip(offset) {
                    *v += d;
                }
            }
        }
        Ok(out)
    }

    fn potential_term(&self, k: usize, q: &[f64]) -> Result<f64> {
        self.spec
            .potential
            .eval(q, self.signal_at(k))
            .map_err(|e| match e {
                Error::NumericDomain { what, .. } => Error::non_finite(what, format!("node {k}")),
                other => other,
            })
    }

    /// Value, and optionally the gradient with respect to every node.
    fn value_and_node_grad(&self, traj: &Trajectory, mut grad: Option<&mut [f64]>) -> Result<f64> {
        let n = self.dim();
        let big_n = self.intervals;
        let h = self.step;
        let Integrand {
            mu,
            nu,
            gamma,
            kappa,
            potential_sign,
        } = self.integrand;
        let nodes = traj.values();
        let mut v = vec![0.0; n];
        let mut a = vec![0.0; n];
        let mut pot_grad = vec![0.0; n];
        let mut total = 0.0;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        for k in 0..=big_n {
            let s1 = Stencil::first(k, big_n);
            let s2 = Stencil::second(k, big_n);
            v.fill(0.0);
            a.fill(0.0);
            for (j, c) in s1.coefs.iter().enumerate() {
                let node = &nodes[(s1.start + j) * n..(s1.start + j + 1) * n];
                for (vi, qi) in v.iter_mut().zip(node) {
                    *vi += c * qi;
                }
            }
            for (j, c) in s2.coefs.iter().enumerate() {
                let node = &nodes[(s2.start + j) * n..(s2.start + j + 1) * n];
                for (ai, qi) in a.iter_mut().zip(node) {
                    *ai += c * qi;
                }
            }
            for vi in v.iter_mut() {
                *vi /= h;
            }
            for ai in a.iter_mut() {
                *ai /= h * h;
            }
            let q = &nodes[k * n..(k + 1) * n];
            let aa: f64 = a.iter().map(|x| x * x).sum();
            let vv: f64 = v.iter().map(|x| x * x).sum();
            let va: f64 = v.iter().zip(&a).map(|(x, y)| x * y).sum();
            let qq: f64 = q.iter().map(|x| x * x).sum();
            let u = self.potential_term(k, q)?;
            let lagrangian =
                0.5 * mu * aa + 0.5 * nu * vv + gamma * va + 0.5 * kappa * qq + potential_sign * u;
            if !lagrangian.is_finite() {
                return Err(Error::non_finite("integrand", format!("node {k}")));
            }
            let wq = self.quadrature[k];
            total += wq * lagrangian;

            if let Some(g) = grad.as_deref_mut() {
                self.spec
                    .potential
                    .grad_into(q, self.signal_at(k), &mut pot_grad)
                    .map_err(|e| match e {
                        Error::NumericDomain { what, .. } => {
                            Error::non_finite(what, format!("node {k}"))
                        }
                        other => other,
                    })?;
                for i in 0..n {
                    let pa = wq * (mu * a[i] + gamma * v[i]) / (h * h);
                    let pv = wq * (nu * v[i] + gamma * a[i]) / h;
                    for (j, c) in s2.coefs.iter().enumerate() {
                        g[(s2.start + j) * n + i] += pa * c;
                    }
                    for (j, c) in s1.coefs.iter().enumerate() {
                        g[(s1.start + j) * n + i] += pv * c;
                    }
                    g[k * n + i] += wq * (kappa * q[i] + potential_sign * pot_grad[i]);
                }
            }
        }
        if !total.is_finite() {
            return Err(Error::non_finite("functional value", "quadrature sum"));
        }
        Ok(total)
    }

    pub fn eval(&self, traj: &Trajectory) -> Result<f64> {
        self.check_grid(traj)?;
        self.value_and_node_grad(traj, None)
    }

    /// Value and exact gradient with respect to the free variables.
    pub fn value_and_grad(&self, traj: &Trajectory) -> Result<(f64, Vec<f64>)> {
        self.check_grid(traj)?;
        let n = self.dim();
        let mut g = vec![0.0; (self.intervals + 1) * n];
        let value = self.value_and_node_grad(traj, Some(&mut g))?;
        Ok((value, g[2 * n..(self.last_free_node() + 1) * n].to_vec()))
    }

    pub fn grad(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        self.value_and_grad(traj).map(|(_, g)| g)
    }

    /// Gamma family only: the same integral written as
    /// `α/2|q̈|² + β/2|q̇|² + ½|γ₁q̇ + γ₂q̈|² + κ/2|q|² + U`.
    pub fn eval_rewritten(&self, traj: &Trajectory) -> Result<f64> {
        if self.family() != Family::Gamma {
            return Err(Error::invalid(
                "rewritten form exists for the Gamma family only",
            ));
        }
        self.check_grid(traj)?;
        let c = self.spec.coefficients;
        let mut total = 0.0;
        for k in 0..=self.intervals {
            let v = traj.velocity(k);
            let a = traj.acceleration(k);
            let q = traj.node(k);
            let aa: f64 = a.iter().map(|x| x * x).sum();
            let vv: f64 = v.iter().map(|x| x * x).sum();
            let mixed: f64 = v
                .iter()
                .zip(&a)
                .map(|(x, y)| (c.gamma1 * x + c.gamma2 * y).powi(2))
                .sum();
            let qq: f64 = q.iter().map(|x| x * x).sum();
            let lagrangian = 0.5 * c.alpha * aa
                + 0.5 * c.beta * vv
                + 0.5 * mixed
                + 0.5 * c.kappa * qq
                + self.potential_term(k, q)?;
            total += self.quadrature[k] * lagrangian;
        }
        Ok(total)
    }

    /// Node-bandwidth of the free-variable Hessian, in scalar entries.
    pub(crate) fn hessian_bandwidth(&self) -> usize {
        let n = self.dim();
        3 * n + n - 1
    }

    /// Banded Hessian over the free variables of every term that is quadratic
    /// in the trajectory. The potential contributes only when its Hessian is
    /// independent of `q` and `include_potential` is set.
    pub fn quadratic_hessian(&self, include_potential: bool) -> SymBand {
        let n = self.dim();
        let big_n = self.intervals;
        let h = self.step;
        let last = self.last_free_node();
        let Integrand {
            mu,
            nu,
            gamma,
            kappa,
            potential_sign,
        } = self.integrand;
        let mut hess = SymBand::zeros(self.free_len(), self.hessian_bandwidth());
        let free = |node: usize| (2..=last).contains(&node);
        for k in 0..=big_n {
            let wq = self.quadrature[k];
            let s1 = Stencil::first(k, big_n);
            let s2 = Stencil::second(k, big_n);
            // dense local coefficients over nodes lo..lo+4
            let lo = s1.start.min(s2.start);
            let mut d1 = [0.0; 4];
            let mut d2 = [0.0; 4];
            for (j, c) in s1.coefs.iter().enumerate() {
                d1[s1.start + j - lo] = c / h;
            }
            for (j, c) in s2.coefs.iter().enumerate() {
                d2[s2.start + j - lo] = c / (h * h);
            }
            for r in 0..4 {
                for s in 0..=r {
                    let (nr, ns) = (lo + r, lo + s);
                    if nr > big_n || !free(nr) || !free(ns) {
                        continue;
                    }
                    let val = wq
                        * (mu * d2[r] * d2[s]
                            + nu * d1[r] * d1[s]
                            + gamma * (d1[r] * d2[s] + d2[r] * d1[s]));
                    if val == 0.0 {
                        continue;
                    }
                    for i in 0..n {
                        hess.add((nr - 2) * n + i, (ns - 2) * n + i, val);
                    }
                }
            }
            if free(k) {
                let base = (k - 2) * n;
                for i in 0..n {
                    hess.add(base + i, base + i, wq * kappa);
                }
                if include_potential {
                    if let Some(pot) = self.spec.potential.constant_hessian(self.signal_at(k)) {
                        for i in 0..n {
                            for j in 0..=i {
                                let val = wq * potential_sign * pot[i * n + j];
                                if val != 0.0 {
                                    hess.add(base + i, base + j, val);
                                }
                            }
                        }
                    }
                }
            }
        }
        hess
    }

    /// `true` when [`Self::quadratic_hessian`] with the potential is the exact Hessian.
    pub fn is_quadratic(&self) -> bool {
        self.spec.potential.is_quadratic()
    }

    /// Euler–Lagrange residual of the `W-eps` families at nodes `4..=N−4`:
    /// `m(ε² q⁽⁴⁾ − 2ε q⁽³⁾ + q̈) + ∇U`, plus `η(q̇ − ε q̈)` for the dissipative family.
    pub fn el_residual(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        if !self.family().is_w_eps() {
            return Err(Error::invalid(format!(
                "Euler-Lagrange residual is defined for W-eps families, not {}",
                self.family().name()
            )));
        }
        self.check_grid(traj)?;
        let big_n = self.intervals;
        if big_n < 8 {
            return Err(Error::invalid("Euler-Lagrange residual needs N >= 8"));
        }
        let eps = self.spec.epsilon.expect("validated W-eps spec");
        let m = self.spec.mass;
        let eta = if self.family() == Family::WEpsDissipative {
            self.spec.dissipation
        } else {
            0.0
        };
        (4..=big_n - 4)
            .map(|k| {
                let q4 = Stencil::fourth_central(k).eval(traj);
                let q3 = Stencil::third_central(k).eval(traj);
                let q2 = traj.acceleration(k);
                let q1 = traj.velocity(k);
                let grad = self.spec.potential.grad(traj.node(k), self.signal_at(k))?;
                Ok((0..self.dim())
                    .map(|i| {
                        m * (eps * eps * q4[i] - 2.0 * eps * q3[i] + q2[i])
                            + grad[i]
                            + eta * (q1[i] - eps * q2[i])
                    })
                    .collect())
            })
            .collect()
    }

    /// `(|q̈(T)|, |q⁽³⁾(T)|)` from one-sided stencils at the last node.
    pub fn boundary_residual(&self, traj: &Trajectory) -> Result<[f64; 2]> {
        if !self.family().is_w_eps() {
            return Err(Error::invalid(format!(
                "terminal residual is defined for W-eps families, not {}",
                self.family().name()
            )));
        }
        self.check_grid(traj)?;
        Ok([
            norm(&traj.acceleration(self.intervals)),
            norm(&traj.terminal_jerk()),
        ])
    }
}

pub fn eval_action(df: &DiscreteFunctional, traj: &Trajectory) -> Result<f64> {
    df.eval(traj)
}

pub fn grad_action(df: &DiscreteFunctional, traj: &Trajectory) -> Result<Vec<f64>> {
    df.grad(traj)
}

pub fn el_residual_weps(df: &DiscreteFunctional, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    df.el_residual(traj)
}

pub fn boundary_residual(df: &DiscreteFunctional, traj: &Trajectory) -> Result<[f64; 2]> {
    df.boundary_residual(traj)
}

/// Largest Euclidean norm over a list of residual vectors.
pub fn max_norm(residuals: &[Vec<f64>]) -> f64 {
    residuals.iter().map(|r| norm(r)).fold(0.0, f64::max)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Residual summary serialized next to solver output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub family: Family,
    #[serde(rename = "N")]
    pub intervals: usize,
    pub el_residual_max: Option<f64>,
    pub boundary_residual: Option<[f64; 2]>,
    pub stationarity_norm: f64,
}

pub fn residual_report(df: &DiscreteFunctional, traj: &Trajectory) -> Result<ResidualReport> {
    let g = df.grad(traj)?;
    let (el, bc) = if df.family().is_w_eps() && df.intervals() >= 8 {
        (
            Some(max_norm(&df.el_residual(traj)?)),
            Some(df.boundary_residual(traj)?),
        )
    } else {
        (None, None)
    };
    Ok(ResidualReport {
        family: df.family(),
        intervals: df.intervals(),
        el_residual_max: el,
        boundary_residual: bc,
        stationarity_norm: g.iter().fold(0.0, |m, x| m.max(x.abs())),
    })
}
