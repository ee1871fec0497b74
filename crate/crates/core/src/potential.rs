//! Potentials `V(q)` and time-dependent potentials `U(q, u)`, the input signals
//! `t ↦ u(t)` that drive them, and a finite-difference gradient check.
//!
//! Every potential carries a user-declared lower bound. Evaluation refuses to
//! return a value below it, so a mis-declared bound surfaces as an error
//! instead of silently breaking the well-posedness assumptions downstream.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

/// Labeled dataset for the logistic-loss potential, frozen at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("dataset has no rows"));
        }
        check_dim("dataset labels", features.len(), labels.len())?;
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::invalid("dataset has no feature columns"));
        }
        let mut flat = Vec::with_capacity(dim * features.len());
        for (row, x) in features.iter().enumerate() {
            check_dim("dataset row", dim, x.len())?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite("feature", format!("dataset row {row}")));
            }
            flat.extend_from_slice(x);
        }
        if let Some(row) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid(format!(
                "dataset row {row}: label must be -1 or +1"
            )));
        }
        Ok(Dataset {
            features: flat,
            labels,
            dim,
        })
    }

    /// Reads `x0..x{d-1},label` with a header row.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let d = headers.len().saturating_sub(1);
        let expected: Vec<String> = (0..d)
            .map(|i| format!("x{i}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        if d == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: format!("expected header {}", expected.join(",")),
            });
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let values = parse_row(path, &record)?;
            labels.push(values[d]);
            features.push(values[..d].to_vec());
        }
        Dataset::new(features, labels).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `½ qᵀ K q` with `K` symmetric positive semidefinite (row-major `n×n`).
    Quadratic { stiffness: Vec<f64> },
    /// `s Σᵢ (qᵢ² − 1)²`.
    DoubleWell { scale: f64 },
    /// `Σᵢ b (qᵢ₊₁ − qᵢ²)² + (a − qᵢ)²`.
    Rosenbrock { a: f64, b: f64 },
    /// Mean logistic loss `(1/M) Σ ln(1 + exp(−yⱼ xⱼ·q)) + ½ λ |q|²`.
    LogisticLoss { dataset: Dataset, l2: f64 },
    /// `c |u|² V_base(q)`: a static potential switched on by the input.
    TimeVaryingCoupled {
        coupling: f64,
        signal_dim: usize,
        base: Box<PotentialKind>,
    },
    /// `½ k |q − u|²`, the input acts as a moving target.
    Tracking { stiffness: f64 },
}

impl PotentialKind {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::Quadratic { .. } => "quadratic",
            PotentialKind::DoubleWell { .. } => "double-well",
            PotentialKind::Rosenbrock { .. } => "rosenbrock",
            PotentialKind::LogisticLoss { .. } => "logistic-loss",
            PotentialKind::TimeVaryingCoupled { .. } => "time-varying-coupled",
            PotentialKind::Tracking { .. } => "tracking",
        }
    }

    fn value(&self, q: &[f64], u: Option<&[f64]>) -> f64 {
        match self {
            PotentialKind::Quadratic { stiffness } => {
                let n = q.len();
                let mut acc = 0.0;
                for i in 0..n {
                    let row = &stiffness[i * n..(i + 1) * n];
                    acc += q[i] * dot(row, q);
                }
                0.5 * acc
            }
            PotentialKind::DoubleWell { scale } => {
                scale * q.iter().map(|x| (x * x - 1.0).powi(2)).sum::<f64>()
            }
            PotentialKind::Rosenbrock { a, b } => q
                .windows(2)
                .map(|w| b * (w[1] - w[0] * w[0]).powi(2) + (a - w[0]).powi(2))
                .sum(),
            PotentialKind::LogisticLoss { dataset, l2 } => {
                let m = dataset.len() as f64;
                let loss: f64 = (0..dataset.len())
                    .map(|j| softplus(-dataset.labels[j] * dot(dataset.row(j), q)))
                    .sum();
                loss / m + 0.5 * l2 * dot(q, q)
            }
            PotentialKind::TimeVaryingCoupled { coupling, base, .. } => {
                let u = u.expect("coupled potential needs an input");
                let gain = coupling * dot(u, u);
                if gain == 0.0 {
                    0.0
                } else {
                    gain * base.value(q, None)
                }
            }
            PotentialKind::Tracking { stiffness } => {
                let u = u.expect("tracking potential needs an input");
                0.5 * stiffness * q.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            }
        }
    }

    fn gradient(&self, q: &[f64], u: Option<&[f64]>, out: &mut [f64]) {
        match self {
            PotentialKind::Quadratic { stiffness } => {
                let n = q.len();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(&stiffness[i * n..(i + 1) * n], q);
                }
            }
            PotentialKind::DoubleWell { scale } => {
                for (o, x) in out.iter_mut().zip(q) {
                    *o = 4.0 * scale * x * (x * x - 1.0);
                }
            }
            PotentialKind::Rosenbrock { a, b } => {
                out.fill(0.0);
                for i in 0..q.len() - 1 {
                    let r = q[i + 1] - q[i] * q[i];
                    out[i] += -4.0 * b * q[i] * r - 2.0 * (a - q[i]);
                    out[i + 1] += 2.0 * b * r;
                }
            }
            PotentialKind::LogisticLoss { dataset, l2 } => {
                let m = dataset.len() as f64;
                for (o, x) in out.iter_mut().zip(q) {
                    *o = l2 * x;
                }
                for j in 0..dataset.len() {
                    let x = dataset.row(j);
                    let y = dataset.labels[j];
                    let s = sigmoid(-y * dot(x, q)) * (-y) / m;
                    for (o, xi) in out.iter_mut().zip(x) {
                        *o += s * xi;
                    }
                }
            }
            PotentialKind::TimeVaryingCoupled { coupling, base, .. } => {
                let u = u.expect("coupled potential needs an input");
                let gain = coupling * dot(u, u);
                if gain == 0.0 {
                    out.fill(0.0);
                } else {
                    base.gradient(q, None, out);
                    for o in out.iter_mut() {
                        *o *= gain;
                    }
                }
            }
            PotentialKind::Tracking { stiffness } => {
                let u = u.expect("tracking potential needs an input");
                for ((o, a), b) in out.iter_mut().zip(q).zip(u) {
                    *o = stiffness * (a - b);
                }
            }
        }
    }

    /// Hessian in `q` when it does not depend on `q`.
    fn constant_hessian(&self, n: usize, u: Option<&[f64]>) -> Option<Vec<f64>> {
        match self {
            PotentialKind::Quadratic { stiffness } => Some(stiffness.clone()),
            PotentialKind::Tracking { stiffness } => {
                let mut h = vec![0.0; n * n];
                for i in 0..n {
                    h[i * n + i] = *stiffness;
                }
                Some(h)
            }
            PotentialKind::TimeVaryingCoupled { coupling, base, .. } => {
                let gain = coupling * dot(u?, u?);
                let mut h = base.constant_hessian(n, None)?;
                for v in h.iter_mut() {
                    *v *= gain;
                }
                Some(h)
            }
            _ => None,
        }
    }
}

/// A potential together with its dimension and declared lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    kind: PotentialKind,
    dim: usize,
    lower_bound: f64,
}

impl PotentialSpec {
    pub fn quadratic(dim: usize, stiffness: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("potential dimension must be positive"));
        }
        check_dim("stiffness matrix entries", dim * dim, stiffness.len())?;
        if stiffness.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("stiffness entry", "quadratic potential"));
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (stiffness[i * dim + j], stiffness[j * dim + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::invalid("stiffness matrix must be symmetric"));
                }
            }
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, &stiffness));
        let scale = stiffness.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
            return Err(Error::invalid(
                "stiffness matrix must be positive semidefinite",
            ));
        }
        Ok(Self::from_kind(
            PotentialKind::Quadratic { stiffness },
            dim,
            0.0,
        ))
    }

    /// `½ k |q|²`.
    pub fn isotropic(dim: usize, k: f64) -> Result<Self> {
        let mut stiffness = vec![0.0; dim * dim];
        for i in 0..dim {
            stiffness[i * dim + i] = k;
        }
        Self::quadratic(dim, stiffness)
    }

    /// The identically zero potential.
    pub fn zero(dim: usize) -> Self {
        Self::from_kind(
            PotentialKind::Quadratic {
                stiffness: vec![0.0; dim * dim],
            },
            dim,
            0.0,
        )
    }

    pub fn double_well(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 || !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid("double-well needs dim > 0 and scale > 0"));
        }
        Ok(Self::from_kind(
            PotentialKind::DoubleWell { scale },
            dim,
            0.0,
        ))
    }

    pub fn rosenbrock(dim: usize, a: f64, b: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("rosenbrock needs dimension >= 2"));
        }
        if !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid("rosenbrock needs finite a and b > 0"));
        }
        Ok(Self::from_kind(
            PotentialKind::Rosenbrock { a, b },
            dim,
            0.0,
        ))
    }

    pub fn logistic_loss(dataset: Dataset, l2: f64) -> Result<Self> {
        if !(l2 >= 0.0) || !l2.is_finite() {
            return Err(Error::invalid("logistic-loss l2 must be finite and >= 0"));
        }
        let dim = dataset.dim();
        Ok(Self::from_kind(
            PotentialKind::LogisticLoss { dataset, l2 },
            dim,
            0.0,
        ))
    }

    /// `c |u|² V_base(q)`. The base potential must be static and declared non-negative.
    pub fn coupled(base: PotentialSpec, coupling: f64, signal_dim: usize) -> Result<Self> {
        if base.is_time_varying() {
            return Err(Error::invalid("coupled potential needs a static base"));
        }
        if !(base.lower_bound >= 0.0) {
            return Err(Error::invalid(
                "coupled potential needs a base declared bounded below by 0",
            ));
        }
        if !(coupling >= 0.0) || !coupling.is_finite() || signal_dim == 0 {
            return Err(Error::invalid(
                "coupled potential needs coupling >= 0 and signal dimension > 0",
            ));
        }
        let dim = base.dim;
        Ok(Self::from_kind(
            PotentialKind::TimeVaryingCoupled {
                coupling,
                signal_dim,
                base: Box::new(base.kind),
            },
            dim,
            0.0,
        ))
    }

    pub fn tracking(dim: usize, stiffness: f64) -> Result<Self> {
        if dim == 0 || !(stiffness >= 0.0) || !stiffness.is_finite() {
            return Err(Error::invalid("tracking needs dim > 0 and stiffness >= 0"));
        }
        Ok(Self::from_kind(
            PotentialKind::Tracking { stiffness },
            dim,
            0.0,
        ))
    }

    fn from_kind(kind: PotentialKind, dim: usize, lower_bound: f64) -> Self {
        PotentialSpec {
            kind,
            dim,
            lower_bound,
        }
    }

    /// Replaces the declared lower bound. It must not exceed the built-in default.
    pub fn with_lower_bound(mut self, bound: f64) -> Result<Self> {
        if bound.is_nan() || bound == f64::INFINITY {
            return Err(Error::invalid("lower bound must be a real number"));
        }
        if bound > self.lower_bound {
            return Err(Error::invalid(format!(
                "declared bound {bound} exceeds the attained infimum of {} ({})",
                self.kind.name(),
                self.lower_bound
            )));
        }
        self.lower_bound = bound;
        Ok(self)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn is_time_varying(&self) -> bool {
        self.signal_dim().is_some()
    }

    /// Dimension `m` of the input the potential expects, if time-varying.
    pub fn signal_dim(&self) -> Option<usize> {
        match &self.kind {
            PotentialKind::TimeVaryingCoupled { signal_dim, .. } => Some(*signal_dim),
            PotentialKind::Tracking { .. } => Some(self.dim),
            _ => None,
        }
    }

    /// Whether `U(·, 0) ≡ 0` holds by construction.
    pub fn vanishes_at_null_input(&self) -> bool {
        !matches!(self.kind, PotentialKind::Tracking { .. })
    }

    /// Whether the potential is a quadratic function of `q` (for every fixed input).
    pub fn is_quadratic(&self) -> bool {
        match &self.kind {
            PotentialKind::Quadratic { .. } | PotentialKind::Tracking { .. } => true,
            PotentialKind::TimeVaryingCoupled { base, .. } => {
                matches!(**base, PotentialKind::Quadratic { .. })
            }
            _ => false,
        }
    }

    fn check_args(&self, q: &[f64], u: Option<&[f64]>) -> Result<()> {
        check_dim("potential argument q", self.dim, q.len())?;
        match (self.signal_dim(), u) {
            (Some(m), Some(u)) => check_dim("potential input u", m, u.len()),
            (None, None) => Ok(()),
            (Some(_), None) => Err(Error::invalid(format!(
                "{} potential needs an input u",
                self.kind.name()
            ))),
            (None, Some(_)) => Err(Error::invalid(format!(
                "{} potential is static and takes no input",
                self.kind.name()
            ))),
        }
    }

    /// `U(q, u)` (or `V(q)` for static kinds).
    pub fn eval(&self, q: &[f64], u: Option<&[f64]>) -> Result<f64> {
        self.check_args(q, u)?;
        let value = self.kind.value(q, u);
        if !value.is_finite() {
            return Err(Error::non_finite(
                "potential value",
                format!("q = {q:?}, u = {u:?}"),
            ));
        }
        if value < self.lower_bound {
            return Err(Error::LowerBoundViolated {
                value,
                bound: self.lower_bound,
            });
        }
        Ok(value)
    }

    /// `∇_q U(q, u)`.
    pub fn grad(&self, q: &[f64], u: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.grad_into(q, u, &mut out)?;
        Ok(out)
    }

    pub fn grad_into(&self, q: &[f64], u: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        self.check_args(q, u)?;
        check_dim("gradient buffer", self.dim, out.len())?;
        self.kind.gradient(q, u, out);
        if out.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite(
                "potential gradient",
                format!("q = {q:?}, u = {u:?}"),
            ));
        }
        Ok(())
    }

    /// Row-major Hessian in `q`, available when it does not depend on `q`.
    pub fn constant_hessian(&self, u: Option<&[f64]>) -> Option<Vec<f64>> {
        self.kind.constant_hessian(self.dim, u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_point: usize,
    pub passed: bool,
}

/// Threshold above which [`check_gradient`] flags a failure.
pub const GRADIENT_CHECK_TOLERANCE: f64 = 1e-6;

/// Max-norm relative difference `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.iter().chain(b).fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Compares the analytic gradient with central differences at every point.
pub fn check_gradient(
    spec: &PotentialSpec,
    points: &[(Vec<f64>, Option<Vec<f64>>)],
    step: f64,
) -> Result<GradientCheck> {
    if points.is_empty() {
        return Err(Error::invalid("gradient check needs at least one point"));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut worst = (0.0_f64, 0usize);
    for (idx, (q, u)) in points.iter().enumerate() {
        let u = u.as_deref();
        let analytic = spec.grad(q, u)?;
        let mut fd = vec![0.0; q.len()];
        let mut probe = q.clone();
        for i in 0..q.len() {
            probe[i] = q[i] + step;
            let plus = spec.eval(&probe, u)?;
            probe[i] = q[i] - step;
            let minus = spec.eval(&probe, u)?;
            probe[i] = q[i];
            fd[i] = (plus - minus) / (2.0 * step);
        }
        let err = relative_error(&analytic, &fd);
        if err > worst.0 || idx == 0 {
            worst = (err, idx);
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst.0,
        worst_point: worst.1,
        passed: worst.0 < GRADIENT_CHECK_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `amplitude · sin(2π · frequency · t + phase)` on every component.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// Row `⌊t / hold⌋` of the table, clamped to the last row.
    Replay {
        table: Vec<Vec<f64>>,
        hold: f64,
    },
}

/// External input `t ↦ u(t)` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    kind: SignalKind,
    dim: usize,
    horizon: f64,
}

impl InputSignal {
    pub fn new(kind: SignalKind, dim: usize, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("signal dimension must be positive"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("signal horizon must be positive"));
        }
        match &kind {
            SignalKind::Zero => {}
            SignalKind::Constant { value } => {
                check_dim("constant signal", dim, value.len())?;
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::non_finite("signal value", "constant signal"));
                }
            }
            SignalKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                if ![amplitude, frequency, phase].iter().all(|v| v.is_finite()) {
                    return Err(Error::non_finite("sinusoid parameter", "signal"));
                }
            }
            SignalKind::Replay { table, hold } => {
                if table.is_empty() {
                    return Err(Error::invalid("replay table is empty"));
                }
                if !(*hold > 0.0) || !hold.is_finite() {
                    return Err(Error::invalid("replay hold interval must be positive"));
                }
                for (i, row) in table.iter().enumerate() {
                    check_dim("replay row", dim, row.len())?;
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::non_finite("replay value", format!("row {i}")));
                    }
                }
            }
        }
        Ok(InputSignal { kind, dim, horizon })
    }

    pub fn zero(dim: usize, horizon: f64) -> Result<Self> {
        Self::new(SignalKind::Zero, dim, horizon)
    }

    /// Reads a replay table with header `u0..u{m-1}`.
    pub fn replay_from_csv(path: &Path, hold: f64, horizon: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let m = headers.len();
        let expected: Vec<String> = (0..m).map(|i| format!("u{i}")).collect();
        if m == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: "expected header u0..u{m-1}".into(),
            });
        }
        let mut table = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            table.push(parse_row(path, &record)?);
        }
        Self::new(SignalKind::Replay { table, hold }, m, horizon).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn kind(&self) -> &SignalKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(t, &mut out)?;
        Ok(out)
    }

    pub fn sample_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        check_dim("signal buffer", self.dim, out.len())?;
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::invalid(format!(
                "signal sampled at t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        match &self.kind {
            SignalKind::Zero => out.fill(0.0),
            SignalKind::Constant { value } => out.copy_from_slice(value),
            SignalKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                let v = amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin();
                out.fill(v);
            }
            SignalKind::Replay { table, hold } => {
                let idx = ((t / hold).floor() as usize).min(table.len() - 1);
                out.copy_from_slice(&table[idx]);
            }
        }
        Ok(())
    }

    /// Left limit `u(t⁻)`; differs from [`Self::sample_into`] only at replay hold boundaries.
    pub fn sample_left_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        match &self.kind {
            SignalKind::Replay { table, hold } if t > 0.0 && t <= self.horizon => {
                check_dim("signal buffer", self.dim, out.len())?;
                let idx = ((t / hold).ceil() as usize)
                    .saturating_sub(1)
                    .min(table.len() - 1);
                out.copy_from_slice(&table[idx]);
                Ok(())
            }
            _ => self.sample_into(t, out),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            _ => unreachable!(),
        }
    } else {
        Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

fn parse_row(path: &Path, record: &csv::StringRecord) -> Result<Vec<f64>> {
    record
        .iter()
        .map(|field| {
            field.trim().parse::<f64>().map_err(|_| Error::Csv {
                path: path.to_path_buf(),
                message: format!(
                    "line {}: not a number: {field:?}",
                    record.position().map_or(0, |p| p.line())
                ),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SEED: u64 = 0x5eed_0001;

    fn small_dataset() -> Dataset {
        Dataset::new(
            vec![
                vec![1.0, 0.5],
                vec![-0.3, 1.2],
                vec![0.8, -1.0],
                vec![-1.5, -0.2],
            ],
            vec![1.0, -1.0, 1.0, -1.0],
        )
        .unwrap()
    }

    fn catalog() -> Vec<PotentialSpec> {
        let k = vec![2.0, 0.5, 0.5, 1.0];
        vec![
            PotentialSpec::quadratic(2, k).unwrap(),
            PotentialSpec::double_well(2, 1.0).unwrap(),
            PotentialSpec::rosenbrock(3, 1.0, 10.0).unwrap(),
            PotentialSpec::logistic_loss(small_dataset(), 0.1).unwrap(),
            PotentialSpec::coupled(PotentialSpec::double_well(2, 1.0).unwrap(), 0.7, 1).unwrap(),
            PotentialSpec::tracking(2, 3.0).unwrap(),
        ]
    }

    fn random_points(spec: &PotentialSpec, count: usize) -> Vec<(Vec<f64>, Option<Vec<f64>>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        (0..count)
            .map(|_| {
                let q = (0..spec.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let u = spec
                    .signal_dim()
                    .map(|m| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect());
                (q, u)
            })
            .collect()
    }

    #[test]
    fn quadratic_values() {
        let spec = PotentialSpec::isotropic(3, 1.0).unwrap();
        assert_eq!(spec.eval(&[0.0; 3], None).unwrap(), 0.0);
        assert_eq!(spec.grad(&[0.0; 3], None).unwrap(), vec![0.0; 3]);
        let one = PotentialSpec::isotropic(1, 1.0).unwrap();
        assert_eq!(one.eval(&[2.0], None).unwrap(), 2.0);
        assert_eq!(one.grad(&[2.0], None).unwrap(), vec![2.0]);
    }

    #[test]
    fn double_well_bottom_is_stationary() {
        let spec = PotentialSpec::double_well(1, 1.0).unwrap();
        assert_eq!(spec.grad(&[1.0], None).unwrap(), vec![0.0]);
        assert_eq!(spec.eval(&[1.0], None).unwrap(), 0.0);
        assert_eq!(spec.eval(&[0.0], None).unwrap(), 1.0);
    }

    #[test]
    fn time_varying_vanishes_at_null_input() {
        let spec =
            PotentialSpec::coupled(PotentialSpec::double_well(2, 1.0).unwrap(), 2.0, 3).unwrap();
        assert!(spec.vanishes_at_null_input());
        for (q, _) in random_points(&spec, 10) {
            assert_eq!(spec.eval(&q, Some(&[0.0; 3])).unwrap(), 0.0);
            assert_eq!(spec.grad(&q, Some(&[0.0; 3])).unwrap(), vec![0.0; 2]);
        }
    }

    #[test]
    fn every_potential_matches_finite_differences() {
        for spec in catalog() {
            let report = check_gradient(&spec, &random_points(&spec, 10), 1e-5).unwrap();
            assert!(
                report.passed,
                "{}: max rel error {}",
                spec.kind().name(),
                report.max_relative_error
            );
        }
    }

    #[test]
    fn quadratic_fd_is_exact_up_to_rounding() {
        let spec = PotentialSpec::isotropic(1, 1.0).unwrap();
        let pts: Vec<_> = [1.0, -0.5, 3.0].iter().map(|&x| (vec![x], None)).collect();
        let report = check_gradient(&spec, &pts, 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-8);
    }

    #[test]
    fn rosenbrock_gradient_check() {
        let spec = PotentialSpec::rosenbrock(2, 1.0, 100.0).unwrap();
        let report = check_gradient(&spec, &random_points(&spec, 10), 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn relative_error_of_identical_vectors_is_zero() {
        let spec = PotentialSpec::rosenbrock(2, 1.0, 100.0).unwrap();
        let g = spec.grad(&[0.3, -0.7], None).unwrap();
        assert_eq!(relative_error(&g, &g), 0.0);
    }

    #[test]
    fn values_respect_declared_bound() {
        for spec in catalog() {
            for (q, u) in random_points(&spec, 10) {
                let v = spec.eval(&q, u.as_deref()).unwrap();
                assert!(v >= spec.lower_bound());
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let spec = PotentialSpec::isotropic(2, 1.0).unwrap();
        assert!(matches!(
            spec.eval(&[1.0], None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(spec.eval(&[1.0, 2.0], Some(&[0.0])).is_err());
        let tv = PotentialSpec::tracking(2, 1.0).unwrap();
        assert!(tv.eval(&[1.0, 2.0], None).is_err());
        assert!(check_gradient(&spec, &[], 1e-5).is_err());
        assert!(matches!(
            spec.eval(&[f64::NAN, 0.0], None),
            Err(Error::NumericDomain { .. })
        ));
        assert!(PotentialSpec::quadratic(2, vec![1.0, 0.0, 0.0, -1.0]).is_err());
        assert!(PotentialSpec::quadratic(2, vec![1.0, 0.3, 0.0, 1.0]).is_err());
        assert!(PotentialSpec::isotropic(1, 1.0)
            .unwrap()
            .with_lower_bound(1.0)
            .is_err());
    }

    #[test]
    fn logistic_loss_is_stable_for_large_margins() {
        let spec = PotentialSpec::logistic_loss(small_dataset(), 0.0).unwrap();
        let v = spec.eval(&[800.0, -900.0], None).unwrap();
        assert!(v.is_finite() && v >= 0.0);
        assert!(spec
            .grad(&[800.0, -900.0], None)
            .unwrap()
            .iter()
            .all(|g| g.is_finite()));
    }

    #[test]
    fn signal_samples() {
        let zero = InputSignal::zero(2, 1.0).unwrap();
        assert_eq!(zero.sample(0.7).unwrap(), vec![0.0, 0.0]);

        let sine = InputSignal::new(
            SignalKind::Sinusoid {
                amplitude: 1.0,
                frequency: 1.0,
                phase: 0.0,
            },
            1,
            1.0,
        )
        .unwrap();
        assert_eq!(sine.sample(0.25).unwrap(), vec![1.0]);

        let replay = InputSignal::new(
            SignalKind::Replay {
                table: vec![vec![1.0], vec![2.0], vec![3.0]],
                hold: 1.0,
            },
            1,
            5.0,
        )
        .unwrap();
        assert_eq!(replay.sample(2.5).unwrap(), vec![3.0]);
        assert_eq!(replay.sample(4.9).unwrap(), vec![3.0]);
        assert_eq!(replay.sample(0.99).unwrap(), vec![1.0]);
        assert!(replay.sample(5.1).is_err());
        assert!(replay.sample(-0.1).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let sine = InputSignal::new(
            SignalKind::Sinusoid {
                amplitude: 0.3,
                frequency: 2.7,
                phase: 0.1,
            },
            3,
            2.0,
        )
        .unwrap();
        let a = sine.sample(1.234).unwrap();
        let b = sine.sample(1.234).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn csv_loaders() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        std::fs::write(&data, "x0,x1,label\n1.0,2.0,1\n-1.0,0.5,-1\n").unwrap();
        let ds = Dataset::from_csv(&data).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 2));

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "x0,x1,label\n1.0,2.0,0\n").unwrap();
        assert!(Dataset::from_csv(&bad).is_err());

        let table = dir.path().join("u.csv");
        std::fs::write(&table, "u0,u1\n0,0\n1,2\n").unwrap();
        let sig = InputSignal::replay_from_csv(&table, 0.5, 1.0).unwrap();
        assert_eq!(sig.sample(0.75).unwrap(), vec![1.0, 2.0]);

        assert!(matches!(
            Dataset::from_csv(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }
}
