//! The reconstruction objective: a penalized regression on labeled slice
//! points plus an anisotropic Cahn–Hilliard energy,
//!
//! ```text
//! Π(θ) = p/(2S*) Σ_{S_out} û² + p/(2S*) Σ_{S_in} (û − 1)²
//!      + ∫_Ω ½ ∇ûᵀ ε ∇û + û²(1 − û)²/(2ε̄) dx
//! ```
//!
//! with the volume integral estimated by Monte Carlo batches or a fixed
//! cell-centered grid.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::net::{ParameterGradient, PhaseFieldNet, Tape};
use crate::rng::Rng;
use crate::slice_data::PhaseLabels;

/// Points per forward/backward pass.
const CHUNK: usize = 256;

/// Diagonal diffusion tensor `diag(ε_x, ε_y, ε_z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionTensor {
    eps: [f64; 3],
}

impl DiffusionTensor {
    pub fn new(eps_x: f64, eps_y: f64, eps_z: f64) -> Result<Self> {
        let eps = [eps_x, eps_y, eps_z];
        if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Config(format!(
                "diffusion coefficients must be positive, got {eps:?}"
            )));
        }
        Ok(DiffusionTensor { eps })
    }

    pub fn isotropic(eps: f64) -> Result<Self> {
        Self::new(eps, eps, eps)
    }

    pub fn components(&self) -> [f64; 3] {
        self.eps
    }

    /// Mean diagonal entry, which sets the double-well weight.
    pub fn eps_bar(&self) -> f64 {
        (self.eps[0] + self.eps[1] + self.eps[2]) / 3.0
    }
}

/// How the energy integral is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// Fresh i.i.d. uniform batch of `batch_size` points per evaluation.
    MonteCarlo,
    /// Mean over the `n³` cell-centered grid.
    FixedGrid(usize),
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::MonteCarlo => f.write_str("mc"),
            Estimator::FixedGrid(n) => write!(f, "grid:{n}"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    /// Accepts `mc` or `grid:<points per axis>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("estimator must be `mc` or `grid:<n>` with n ≥ 2, got `{s}`"));
        match s.trim() {
            "mc" => Ok(Estimator::MonteCarlo),
            other => {
                let n: usize = other.strip_prefix("grid:").ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if n < 2 {
                    return Err(bad());
                }
                Ok(Estimator::FixedGrid(n))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub penalty: f64,
    pub diffusion: DiffusionTensor,
    pub batch_size: usize,
    pub estimator: Estimator,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty.is_finite() && self.penalty > 0.0) {
            return Err(Error::Config(format!("penalty must be positive, got {}", self.penalty)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if let Estimator::FixedGrid(n) = self.estimator {
            if n < 2 {
                return Err(Error::Config(format!("fixed grid needs at least 2 points per axis, got {n}")));
            }
        }
        Ok(())
    }
}

/// The two objective terms and their sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub regression: f64,
    pub energy: f64,
}

/// `½ gᵀ ε g + u²(1 − u)²/(2ε̄)`.
pub fn energy_integrand(u: f64, grad: [f64; 3], eps: &DiffusionTensor) -> f64 {
    let [ex, ey, ez] = eps.eps;
    let well = u * (1.0 - u);
    0.5 * (ex * grad[0] * grad[0] + ey * grad[1] * grad[1] + ez * grad[2] * grad[2])
        + well * well / (2.0 * eps.eps_bar())
}

/// Derivatives of [`energy_integrand`] with respect to `u` and `g`.
fn energy_sensitivity(u: f64, grad: [f64; 3], eps: &DiffusionTensor) -> (f64, [f64; 3]) {
    let [ex, ey, ez] = eps.eps;
    let du = u * (1.0 - u) * (1.0 - 2.0 * u) / eps.eps_bar();
    (du, [ex * grad[0], ey * grad[1], ez * grad[2]])
}

/// Cell-centered point `k` of the `n³` grid, `x` varying slowest.
pub fn grid_point(n: usize, k: usize) -> [f64; 3] {
    let h = 1.0 / n as f64;
    let (ix, rest) = (k / (n * n), k % (n * n));
    let (iy, iz) = (rest / n, rest % n);
    [(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h, (iz as f64 + 0.5) * h]
}

/// Draw `count` i.i.d. uniform points of the unit cube, coordinates in `x, y, z` order.
pub fn sample_uniform(rng: &mut Rng, count: usize, out: &mut Vec<[f64; 3]>) {
    out.clear();
    out.extend((0..count).map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]));
}

/// Reusable evaluator for one labeled data set and objective specification.
pub struct Objective {
    spec: ObjectiveSpec,
    points: Vec<[f64; 3]>,
    targets: Vec<f64>,
    /// `p / S*`, the regression weight before the ½.
    weight: f64,
    tape: Tape,
    batch: Vec<[f64; 3]>,
    chunk: Vec<[f64; 3]>,
    seed_value: Vec<f64>,
    seed_grad: Vec<[f64; 3]>,
}

impl Objective {
    pub fn new(labels: &PhaseLabels, spec: ObjectiveSpec) -> Result<Self> {
        spec.validate()?;
        let assigned = labels.assigned();
        if assigned == 0 {
            return Err(Error::DegenerateLabels);
        }
        let mut points = Vec::with_capacity(assigned);
        let mut targets = Vec::with_capacity(assigned);
        points.extend_from_slice(&labels.inside);
        targets.resize(labels.inside.len(), 1.0);
        points.extend_from_slice(&labels.outside);
        targets.resize(assigned, 0.0);
        Ok(Objective {
            spec,
            points,
            targets,
            weight: spec.penalty / assigned as f64,
            tape: Tape::default(),
            batch: Vec::new(),
            chunk: Vec::with_capacity(CHUNK),
            seed_value: Vec::with_capacity(CHUNK),
            seed_grad: Vec::with_capacity(CHUNK),
        })
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    /// Number of labeled points `S*`.
    pub fn labeled_points(&self) -> usize {
        self.points.len()
    }

    /// Evaluate the objective. Monte Carlo mode consumes `3B` draws from `rng`.
    pub fn evaluate(&mut self, net: &PhaseFieldNet, rng: &mut Rng) -> Result<ObjectiveValue> {
        self.run(net, rng, None)
    }

    /// Evaluate the objective and add its parameter gradient into `grad`.
    pub fn evaluate_with_gradient(
        &mut self,
        net: &PhaseFieldNet,
        rng: &mut Rng,
        grad: &mut ParameterGradient,
    ) -> Result<ObjectiveValue> {
        let value = self.run(net, rng, Some(&mut *grad))?;
        if !grad.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok(value)
    }

    fn run(
        &mut self,
        net: &PhaseFieldNet,
        rng: &mut Rng,
        mut grad: Option<&mut ParameterGradient>,
    ) -> Result<ObjectiveValue> {
        let regression = self.regression(net, grad.as_deref_mut());
        let energy = match self.spec.estimator {
            Estimator::MonteCarlo => {
                let mut batch = std::mem::take(&mut self.batch);
                sample_uniform(rng, self.spec.batch_size, &mut batch);
                let e = self.energy(net, batch.len(), |k| batch[k], grad);
                self.batch = batch;
                e
            }
            Estimator::FixedGrid(n) => self.energy(net, n * n * n, |k| grid_point(n, k), grad),
        };
        let total = regression + energy;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok(ObjectiveValue {
            total,
            regression,
            energy,
        })
    }

    fn regression(&mut self, net: &PhaseFieldNet, mut grad: Option<&mut ParameterGradient>) -> f64 {
        let mut sum = 0.0;
        for (pts, targets) in self.points.chunks(CHUNK).zip(self.targets.chunks(CHUNK)) {
            net.forward_into(pts, false, &mut self.tape);
            self.seed_value.clear();
            for (&u, &t) in self.tape.values().iter().zip(targets) {
                let r = u - t;
                sum += r * r;
                self.seed_value.push(self.weight * r);
            }
            if let Some(g) = grad.as_deref_mut() {
                net.backward(&mut self.tape, &self.seed_value, None, g);
            }
        }
        0.5 * self.weight * sum
    }

    /// Mean integrand over `count` points produced by `point`.
    fn energy(
        &mut self,
        net: &PhaseFieldNet,
        count: usize,
        point: impl Fn(usize) -> [f64; 3],
        mut grad: Option<&mut ParameterGradient>,
    ) -> f64 {
        let eps = self.spec.diffusion;
        let scale = 1.0 / count as f64;
        let mut sum = 0.0;
        let mut start = 0;
        while start < count {
            let end = (start + CHUNK).min(count);
            self.chunk.clear();
            self.chunk.extend((start..end).map(&point));
            let with_grad = grad.is_some();
            net.forward_into(&self.chunk, true, &mut self.tape);
            let grads = self.tape.grads().expect("tangent pass");
            self.seed_value.clear();
            self.seed_grad.clear();
            for (&u, &g) in self.tape.values().iter().zip(grads) {
                sum += energy_integrand(u, g, &eps);
                if with_grad {
                    let (du, dg) = energy_sensitivity(u, g, &eps);
                    self.seed_value.push(scale * du);
                    self.seed_grad.push([scale * dg[0], scale * dg[1], scale * dg[2]]);
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                net.backward(&mut self.tape, &self.seed_value, Some(&self.seed_grad), g);
            }
            start = end;
        }
        sum * scale
    }
}

/// `(p/(2S*)) Σ (û − target)²` over all labeled points.
pub fn regression_loss(net: &PhaseFieldNet, labels: &PhaseLabels, penalty: f64) -> Result<f64> {
    let spec = ObjectiveSpec {
        penalty,
        diffusion: DiffusionTensor::isotropic(1.0)?,
        batch_size: 1,
        estimator: Estimator::MonteCarlo,
    };
    let mut objective = Objective::new(labels, spec)?;
    Ok(objective.regression(net, None))
}

fn energy_only(net: &PhaseFieldNet, eps: &DiffusionTensor, count: usize, point: impl Fn(usize) -> [f64; 3]) -> f64 {
    let mut objective = Objective {
        spec: ObjectiveSpec {
            penalty: 1.0,
            diffusion: *eps,
            batch_size: 1,
            estimator: Estimator::MonteCarlo,
        },
        points: Vec::new(),
        targets: Vec::new(),
        weight: 0.0,
        tape: Tape::default(),
        batch: Vec::new(),
        chunk: Vec::with_capacity(CHUNK),
        seed_value: Vec::new(),
        seed_grad: Vec::new(),
    };
    objective.energy(net, count, point, None)
}

/// Monte Carlo energy estimate from `batch_size` fresh uniform points.
pub fn mc_energy(net: &PhaseFieldNet, eps: &DiffusionTensor, batch_size: usize, rng: &mut Rng) -> f64 {
    let mut batch = Vec::new();
    sample_uniform(rng, batch_size, &mut batch);
    energy_only(net, eps, batch.len(), |k| batch[k])
}

/// Mean integrand over the `n³` cell-centered grid.
pub fn grid_energy(net: &PhaseFieldNet, eps: &DiffusionTensor, n: usize) -> f64 {
    energy_only(net, eps, n * n * n, |k| grid_point(n, k))
}

/// Regression loss plus the selected energy estimate.
pub fn total_objective(
    net: &PhaseFieldNet,
    labels: &PhaseLabels,
    spec: &ObjectiveSpec,
    rng: &mut Rng,
) -> Result<ObjectiveValue> {
    Objective::new(labels, *spec)?.evaluate(net, rng)
}

/// Objective value and its exact parameter gradient.
pub fn objective_gradient(
    net: &PhaseFieldNet,
    labels: &PhaseLabels,
    spec: &ObjectiveSpec,
    rng: &mut Rng,
) -> Result<(ObjectiveValue, ParameterGradient)> {
    let mut grad = ParameterGradient::zeros(net.param_count());
    let value = Objective::new(labels, *spec)?.evaluate_with_gradient(net, rng, &mut grad)?;
    Ok((value, grad))
}
