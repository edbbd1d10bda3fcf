//! A single scalar ARX agent that selects controls by expected-free-energy
//! minimization.
//!
//! The agent keeps fixed-length most-recent-first buffers of its own outputs,
//! its inputs, and optionally the outputs of coupled peers. A candidate
//! control u is scored with the closed-form one-step objective
//!
//!   J(u) = (1/(2 v_*)) [ (mu' x - m_*)^2 + (beta/(alpha-1)) (x' Lambda^{-1} x + 1) ]
//!          - (1/2) ln(x' Lambda^{-1} x + 1)
//!
//! (additive constants dropped) plus the control-prior penalty eta u^2 / 2,
//! and the minimizer over a fixed quantized grid is executed.

use nalgebra::DVector;

use crate::belief::{log_pdf_gaussian, log_pdf_student_t, NormalGammaBelief};
use crate::error::{Error, Result};

/// Fixed-length data buffers forming the autoregressive regressor, all
/// ordered most recent first and zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentMemory {
    outputs: Vec<f64>,
    inputs: Vec<f64>,
    peer_outputs: Vec<Vec<f64>>,
}

impl AgentMemory {
    pub fn new(output_len: usize, input_len: usize, n_peers: usize) -> Self {
        Self {
            outputs: vec![0.0; output_len],
            inputs: vec![0.0; input_len],
            peer_outputs: vec![vec![0.0; output_len]; n_peers],
        }
    }

    pub fn output_len(&self) -> usize {
        self.outputs.len()
    }

    pub fn input_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_peers(&self) -> usize {
        self.peer_outputs.len()
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn peer_outputs(&self, peer: usize) -> &[f64] {
        &self.peer_outputs[peer]
    }

    /// Regressor length: current control, input history, own output history
    /// and one output history per peer.
    pub fn regressor_len(&self) -> usize {
        1 + self.inputs.len() + self.outputs.len() * (1 + self.peer_outputs.len())
    }

    /// Concatenates `[u, inputs, own outputs, peer outputs...]`, each buffer
    /// most recent first.
    pub fn assemble_regressor(&self, u: f64) -> Result<DVector<f64>> {
        if !u.is_finite() {
            return Err(Error::NonFinite {
                context: "control u".into(),
            });
        }
        let mut x = Vec::with_capacity(self.regressor_len());
        x.push(u);
        x.extend_from_slice(&self.inputs);
        x.extend_from_slice(&self.outputs);
        for peer in &self.peer_outputs {
            x.extend_from_slice(peer);
        }
        Ok(DVector::from_vec(x))
    }

    pub fn shift_output(&mut self, y: f64) {
        shift(&mut self.outputs, y);
    }

    pub fn shift_input(&mut self, u: f64) {
        shift(&mut self.inputs, u);
    }

    pub fn shift_peer_output(&mut self, peer: usize, y: f64) {
        shift(&mut self.peer_outputs[peer], y);
    }
}

fn shift(buffer: &mut [f64], value: f64) {
    buffer.rotate_right(1);
    if let Some(first) = buffer.first_mut() {
        *first = value;
    }
}

/// Gaussian prior over desired future outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalPrior {
    pub mean: f64,
    pub variance: f64,
}

impl GoalPrior {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if variance <= 0.0 || !variance.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidParameter {
                name: "goal variance",
                reason: "must be positive and finite",
                value: variance,
            });
        }
        Ok(Self { mean, variance })
    }
}

/// Inclusive uniform quantization of the affordable control interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGrid {
    u_min: f64,
    u_max: f64,
    n: usize,
}

impl ControlGrid {
    pub fn new(u_min: f64, u_max: f64, n: usize) -> Result<Self> {
        if u_min >= u_max || !u_min.is_finite() || !u_max.is_finite() {
            return Err(Error::InvalidParameter {
                name: "control bounds",
                reason: "u_min must be finite and less than u_max",
                value: u_min,
            });
        }
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "grid size",
                reason: "must be at least 2",
                value: n as f64,
            });
        }
        Ok(Self { u_min, u_max, n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn u_min(&self) -> f64 {
        self.u_min
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// Grid point k = u_min + k (u_max - u_min) / (n - 1). The product is
    /// taken before the division so both endpoints are hit exactly.
    pub fn value(&self, k: usize) -> f64 {
        self.u_min + (k as f64) * (self.u_max - self.u_min) / ((self.n - 1) as f64)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|k| self.value(k))
    }
}

/// Scalar ARX agent: belief, memories, goal prior, control prior precision
/// and the control grid.
#[derive(Debug, Clone)]
pub struct ArxEfeAgent {
    belief: NormalGammaBelief,
    memory: AgentMemory,
    goal: GoalPrior,
    control_precision: f64,
    grid: ControlGrid,
}

impl ArxEfeAgent {
    pub fn new(
        belief: NormalGammaBelief,
        memory: AgentMemory,
        goal: GoalPrior,
        control_precision: f64,
        grid: ControlGrid,
    ) -> Result<Self> {
        if belief.dim() != memory.regressor_len() {
            return Err(Error::DimensionMismatch {
                expected: memory.regressor_len(),
                got: belief.dim(),
            });
        }
        if control_precision <= 0.0 || !control_precision.is_finite() {
            return Err(Error::InvalidParameter {
                name: "control precision",
                reason: "must be positive and finite",
                value: control_precision,
            });
        }
        Ok(Self {
            belief,
            memory,
            goal,
            control_precision,
            grid,
        })
    }

    /// Fresh agent from an isotropic prior and zeroed memories.
    #[allow(clippy::too_many_arguments)]
    pub fn from_prior(
        output_len: usize,
        input_len: usize,
        n_peers: usize,
        mu0: f64,
        lambda0: f64,
        alpha0: f64,
        beta0: f64,
        goal: GoalPrior,
        control_precision: f64,
        grid: ControlGrid,
    ) -> Result<Self> {
        let memory = AgentMemory::new(output_len, input_len, n_peers);
        let belief = NormalGammaBelief::isotropic_prior(
            memory.regressor_len(),
            mu0,
            lambda0,
            alpha0,
            beta0,
        )?;
        Self::new(belief, memory, goal, control_precision, grid)
    }

    pub fn belief(&self) -> &NormalGammaBelief {
        &self.belief
    }

    pub fn memory(&self) -> &AgentMemory {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut AgentMemory {
        &mut self.memory
    }

    pub fn goal(&self) -> GoalPrior {
        self.goal
    }

    pub fn control_precision(&self) -> f64 {
        self.control_precision
    }

    pub fn grid(&self) -> ControlGrid {
        self.grid
    }

    /// Closed-form expected free energy of candidate control `u`, additive
    /// constants dropped. Requires alpha > 1.
    pub fn efe_objective(&self, u: f64) -> Result<f64> {
        let alpha = self.belief.shape();
        if alpha <= 1.0 {
            return Err(Error::ShapeTooSmall { alpha });
        }
        let x = self.memory.assemble_regressor(u)?;
        let quad = self.belief.quadratic_form(&x)?;
        let goal_error = self.belief.mean().dot(&x) - self.goal.mean;
        let spread = (self.belief.rate() / (alpha - 1.0)) * (quad + 1.0);
        Ok(
            (goal_error * goal_error + spread) / (2.0 * self.goal.variance)
                - 0.5 * (quad + 1.0).ln(),
        )
    }

    /// Scores every grid point with `efe_objective(u) + eta u^2 / 2` and
    /// returns the minimizer plus the full score vector. Ties go to the
    /// smallest |u|, then to the smaller grid index.
    pub fn select_control(&self) -> Result<(f64, Vec<f64>)> {
        let mut scores = Vec::with_capacity(self.grid.len());
        let mut best: Option<(f64, f64)> = None; // (score, u)
        for u in self.grid.values() {
            let score = self.efe_objective(u)? + 0.5 * self.control_precision * u * u;
            scores.push(score);
            let better = match best {
                None => true,
                Some((best_score, best_u)) => {
                    score < best_score || (score == best_score && u.abs() < best_u.abs())
                }
            };
            if better {
                best = Some((score, u));
            }
        }
        let (_, u_hat) = best.expect("grid has at least two points");
        Ok((u_hat, scores))
    }

    /// One-step predictive mean and standard deviation for candidate `u`.
    pub fn predict(&self, u: f64) -> Result<(f64, f64)> {
        let x = self.memory.assemble_regressor(u)?;
        let predictive = self.belief.posterior_predictive(&x)?;
        Ok((predictive.location, predictive.variance()?.sqrt()))
    }

    /// Negative predictive log-density of `y_observed` under the current
    /// (pre-update) belief, with the regressor built from `u_executed`.
    pub fn surprise(&self, u_executed: f64, y_observed: f64) -> Result<f64> {
        let x = self.memory.assemble_regressor(u_executed)?;
        let predictive = self.belief.posterior_predictive(&x)?;
        Ok(-log_pdf_student_t(y_observed, &predictive)?)
    }

    /// Negative goal-prior log-density of `y_observed`.
    pub fn goal_alignment(&self, y_observed: f64) -> Result<f64> {
        Ok(-log_pdf_gaussian(
            y_observed,
            self.goal.mean,
            self.goal.variance,
        )?)
    }

    /// Absorbs an executed control and the resulting observation: updates the
    /// belief with the current regressor, then shifts the own-output and
    /// input buffers. Peer buffers are the caller's responsibility.
    pub fn observe(&mut self, u_executed: f64, y_observed: f64) -> Result<()> {
        let x = self.memory.assemble_regressor(u_executed)?;
        self.belief = self.belief.update(&x, y_observed)?;
        self.memory.shift_output(y_observed);
        self.memory.shift_input(u_executed);
        Ok(())
    }
}
