use crate::error::{check_dim, Error, Result};

/// A trajectory sampled on the uniform grid `t_k = k h`, `h = T / N`, `k = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    horizon: f64,
    intervals: usize,
    dim: usize,
    nodes: Vec<f64>,
}

/// Smallest interval count for which all difference stencils are defined.
pub const MIN_INTERVALS: usize = 4;

impl Trajectory {
    pub fn new(horizon: f64, intervals: usize, dim: usize, nodes: Vec<f64>) -> Result<Self> {
        if intervals < MIN_INTERVALS {
            return Err(Error::invalid(format!(
                "trajectory needs at least {MIN_INTERVALS} intervals, got {intervals}"
            )));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("trajectory horizon must be positive"));
        }
        if dim == 0 {
            return Err(Error::invalid("trajectory dimension must be positive"));
        }
        check_dim("trajectory node values", (intervals + 1) * dim, nodes.len())?;
        if let Some(i) = nodes.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(
                "trajectory value",
                format!("node {}", i / dim),
            ));
        }
        Ok(Trajectory {
            horizon,
            intervals,
            dim,
            nodes,
        })
    }

    pub fn from_fn(
        horizon: f64,
        intervals: usize,
        dim: usize,
        f: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let h = horizon / intervals as f64;
        let mut nodes = Vec::with_capacity((intervals + 1) * dim);
        for k in 0..=intervals {
            let v = f(k as f64 * h);
            check_dim("trajectory sample", dim, v.len())?;
            nodes.extend(v);
        }
        Self::new(horizon, intervals, dim, nodes)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.nodes
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.nodes
    }

    /// True when both trajectories live on the same grid.
    pub fn same_grid(&self, other: &Trajectory) -> bool {
        self.intervals == other.intervals
            && self.dim == other.dim
            && self.horizon.to_bits() == other.horizon.to_bits()
    }

    pub(crate) fn check_grid(&self, other: &Trajectory) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "grid mismatch: (T={}, N={}, n={}) vs (T={}, N={}, n={})",
                self.horizon, self.intervals, self.dim, other.horizon, other.intervals, other.dim
            )))
        }
    }

    /// First derivative at node `k`.
    pub fn velocity(&self, k: usize) -> Vec<f64> {
        apply(self, Stencil::first(k, self.intervals), self.step())
    }

    /// Second derivative at node `k`.
    pub fn acceleration(&self, k: usize) -> Vec<f64> {
        apply(self, Stencil::second(k, self.intervals), self.step())
    }

    /// Third derivative at `t = T` from the last four nodes.
    pub fn terminal_jerk(&self) -> Vec<f64> {
        apply(self, Stencil::third_terminal(self.intervals), self.step())
    }
}

fn apply(traj: &Trajectory, stencil: Stencil, h: f64) -> Vec<f64> {
    let n = traj.dim;
    let scale = h.powi(stencil.order);
    let mut out = vec![0.0; n];
    for (j, c) in stencil.coefs.iter().enumerate() {
        for (o, q) in out.iter_mut().zip(traj.node(stencil.start + j)) {
            *o += c * q;
        }
    }
    for o in out.iter_mut() {
        *o /= scale;
    }
    out
}

/// Difference stencil: `f^(order)(t_k) ≈ Σ_j coefs[j] q[start + j] / h^order`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub start: usize,
    pub coefs: &'static [f64],
    pub order: i32,
}

impl Stencil {
    /// Central in the interior, one-sided second order at the endpoints.
    pub fn first(k: usize, n: usize) -> Self {
        match k {
            0 => Stencil {
                start: 0,
                coefs: &[-1.5, 2.0, -0.5],
                order: 1,
            },
            k if k == n => Stencil {
                start: n - 2,
                coefs: &[0.5, -2.0, 1.5],
                order: 1,
            },
            k => Stencil {
                start: k - 1,
                coefs: &[-0.5, 0.0, 0.5],
                order: 1,
            },
        }
    }

    /// Central in the interior, one-sided second order at the endpoints.
    pub fn second(k: usize, n: usize) -> Self {
        match k {
            0 => Stencil {
                start: 0,
                coefs: &[2.0, -5.0, 4.0, -1.0],
                order: 2,
            },
            k if k == n => Stencil {
                start: n - 3,
                coefs: &[-1.0, 4.0, -5.0, 2.0],
                order: 2,
            },
            k => Stencil {
                start: k - 1,
                coefs: &[1.0, -2.0, 1.0],
                order: 2,
            },
        }
    }

    pub fn third_terminal(n: usize) -> Self {
        Stencil {
            start: n - 3,
            coefs: &[-1.0, 3.0, -3.0, 1.0],
            order: 3,
        }
    }

    pub fn third_central(k: usize) -> Self {
        Stencil {
            start: k - 2,
            coefs: &[-0.5, 1.0, 0.0, -1.0, 0.5],
            order: 3,
        }
    }

    pub fn fourth_central(k: usize) -> Self {
        Stencil {
            start: k - 2,
            coefs: &[1.0, -4.0, 6.0, -4.0, 1.0],
            order: 4,
        }
    }

    pub fn eval(&self, traj: &Trajectory) -> Vec<f64> {
        apply(traj, *self, traj.step())
    }
}
