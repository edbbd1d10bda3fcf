//! Trial orchestration: plant-in-the-loop execution, Monte Carlo repetition
//! over seeds, and the coupled-versus-uncoupled comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{ArxEfeAgent, ControlGrid, GoalPrior};
use crate::ensemble::{CouplingTopology, Ensemble, StepMetrics};
use crate::error::{Error, Result};
use crate::plant::{MsdParams, PlantState, SensorModel};

/// Plant-side configuration: physics, integration and sensing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub m1: f64,
    pub m2: f64,
    pub c1: f64,
    pub c2: f64,
    pub k1: f64,
    pub k2: f64,
    pub dt: f64,
    pub n_iter: usize,
    pub noise_var: f64,
    pub init_z1: f64,
    pub init_z2: f64,
    pub init_v1: f64,
    pub init_v2: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            c1: 0.1,
            c2: 0.1,
            k1: 1.0,
            k2: 1.0,
            dt: 0.01,
            n_iter: 120,
            noise_var: 1e-5,
            init_z1: 0.0,
            init_z2: 0.0,
            init_v1: 0.0,
            init_v2: 0.0,
        }
    }
}

/// Agent-side configuration: priors, memory sizes, control grid and goals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub mu0: f64,
    pub lambda0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub eta: f64,
    pub m_y: usize,
    pub m_u: usize,
    pub u_min: f64,
    pub u_max: f64,
    pub grid_n: usize,
    pub goal_mean_1: f64,
    pub goal_var_1: f64,
    pub goal_mean_2: f64,
    pub goal_var_2: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            lambda0: 1.0,
            alpha0: 2.0,
            beta0: 3.0,
            eta: 0.001,
            m_y: 2,
            m_u: 2,
            u_min: -1.0,
            u_max: 1.0,
            grid_n: 999,
            goal_mean_1: 1.0,
            goal_var_1: 1.0,
            goal_mean_2: 2.0,
            goal_var_2: 1.0,
        }
    }
}

/// Ensemble-side configuration: whether the two agents share output buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub coupled: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { coupled: true }
    }
}

/// Run-level configuration: length and base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub horizon: usize,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            horizon: 100,
            seed: 0,
        }
    }
}

/// Full experiment configuration; `Default` carries the reference values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub agent: AgentSection,
    pub ensemble: EnsembleSection,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    /// Validates every invariant the components will rely on, naming the
    /// offending field.
    pub fn validate(&self) -> Result<()> {
        MsdParams::new(
            self.plant.m1,
            self.plant.m2,
            self.plant.c1,
            self.plant.c2,
            self.plant.k1,
            self.plant.k2,
        )?;
        for (name, value, positive) in [
            ("dt", self.plant.dt, true),
            ("noise_var", self.plant.noise_var, false),
            ("lambda0", self.agent.lambda0, true),
            ("alpha0", self.agent.alpha0, true),
            ("beta0", self.agent.beta0, true),
            ("eta", self.agent.eta, true),
            ("goal_var_1", self.agent.goal_var_1, true),
            ("goal_var_2", self.agent.goal_var_2, true),
        ] {
            let ok = value.is_finite() && if positive { value > 0.0 } else { value >= 0.0 };
            if !ok {
                return Err(Error::InvalidParameter {
                    name,
                    reason: if positive {
                        "must be positive and finite"
                    } else {
                        "must be non-negative and finite"
                    },
                    value,
                });
            }
        }
        for (name, value) in [
            ("init_z1", self.plant.init_z1),
            ("init_z2", self.plant.init_z2),
            ("init_v1", self.plant.init_v1),
            ("init_v2", self.plant.init_v2),
            ("mu0", self.agent.mu0),
            ("goal_mean_1", self.agent.goal_mean_1),
            ("goal_mean_2", self.agent.goal_mean_2),
        ] {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite",
                    value,
                });
            }
        }
        if self.plant.n_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "n_iter",
                reason: "must be at least 1",
                value: 0.0,
            });
        }
        if self.agent.m_y == 0 || self.agent.m_u == 0 {
            return Err(Error::InvalidParameter {
                name: "m_y/m_u",
                reason: "memory sizes must be at least 1",
                value: 0.0,
            });
        }
        ControlGrid::new(self.agent.u_min, self.agent.u_max, self.agent.grid_n)?;
        if self.experiment.horizon == 0 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: "must be at least 1",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// Same configuration up to the coupling mode (and the belief dimension
    /// it implies).
    pub fn matches_except_coupling(&self, other: &Self) -> bool {
        self.plant == other.plant
            && self.agent == other.agent
            && self.experiment == other.experiment
    }

    pub fn with_coupling(mut self, coupled: bool) -> Self {
        self.ensemble.coupled = coupled;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.experiment.seed = seed;
        self
    }

    fn build_ensemble(&self) -> Result<Ensemble> {
        let topology = if self.ensemble.coupled {
            CouplingTopology::fully_coupled(2)
        } else {
            CouplingTopology::uncoupled(2)
        };
        let grid = ControlGrid::new(self.agent.u_min, self.agent.u_max, self.agent.grid_n)?;
        let goals = [
            GoalPrior::new(self.agent.goal_mean_1, self.agent.goal_var_1)?,
            GoalPrior::new(self.agent.goal_mean_2, self.agent.goal_var_2)?,
        ];
        let agents = (0..2)
            .map(|i| {
                ArxEfeAgent::from_prior(
                    self.agent.m_y,
                    self.agent.m_u,
                    topology.peers(i).len(),
                    self.agent.mu0,
                    self.agent.lambda0,
                    self.agent.alpha0,
                    self.agent.beta0,
                    goals[i],
                    self.agent.eta,
                    grid,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(agents, topology)
    }
}

/// One decision step of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub agents: Vec<StepMetrics>,
}

/// Per-agent cumulative metrics over a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub cumulative_surprise: f64,
    pub cumulative_goal_cost: f64,
    pub final_alpha: f64,
}

/// Full record of a single trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub config: ExperimentConfig,
    pub steps: Vec<StepRecord>,
    pub summary: Vec<AgentSummary>,
}

/// Executes one trial: decide, advance the plant, measure, absorb; repeated
/// for the configured horizon. Deterministic given the config (the seed is
/// part of it).
pub fn run_trial(config: &ExperimentConfig) -> Result<TrialLog> {
    config.validate()?;
    let params = MsdParams::new(
        config.plant.m1,
        config.plant.m2,
        config.plant.c1,
        config.plant.c2,
        config.plant.k1,
        config.plant.k2,
    )?;
    let mut state = PlantState {
        position: [config.plant.init_z1, config.plant.init_z2],
        velocity: [config.plant.init_v1, config.plant.init_v2],
    };
    let mut sensor = SensorModel::new(config.plant.noise_var, config.experiment.seed)?;
    let mut ensemble = config.build_ensemble()?;

    let at_step = |step: usize| {
        move |e: Error| Error::TrialFailure {
            step,
            source: Box::new(e),
        }
    };

    let mut steps = Vec::with_capacity(config.experiment.horizon);
    for k in 0..config.experiment.horizon {
        let controls = ensemble.decide().map_err(at_step(k))?;
        state = params
            .advance(
                &state,
                [controls[0], controls[1]],
                config.plant.dt,
                config.plant.n_iter,
            )
            .map_err(at_step(k))?;
        let observations = sensor.measure(&state);
        let metrics = ensemble
            .absorb(&controls, &observations)
            .map_err(at_step(k))?;
        steps.push(StepRecord {
            step: k,
            agents: metrics,
        });
    }

    let summary = (0..2)
        .map(|i| AgentSummary {
            cumulative_surprise: steps.iter().map(|s| s.agents[i].surprise).sum(),
            cumulative_goal_cost: steps.iter().map(|s| s.agents[i].goal_alignment).sum(),
            final_alpha: ensemble.agents()[i].belief().shape(),
        })
        .collect();

    Ok(TrialLog {
        config: *config,
        steps,
        summary,
    })
}

/// Summary of one Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub agents: Vec<AgentSummary>,
}

/// A trial that aborted, with the step it failed at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailureRecord {
    pub seed: u64,
    pub message: String,
}

/// Per-agent robust statistics across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentAggregate {
    pub median_surprise: f64,
    pub iqr_surprise: f64,
    pub median_goal_cost: f64,
    pub iqr_goal_cost: f64,
}

/// Monte Carlo result over a contiguous range of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloAggregate {
    pub config: ExperimentConfig,
    pub n_seeds: usize,
    pub per_seed: Vec<SeedSummary>,
    pub failures: Vec<TrialFailureRecord>,
    pub agents: Vec<AgentAggregate>,
}

/// Runs `run_trial` for seeds `base, base+1, ..., base+n_seeds-1` and
/// aggregates per-agent medians and interquartile ranges. Failed trials are
/// excluded from the statistics and reported.
pub fn run_monte_carlo(config: &ExperimentConfig, n_seeds: usize) -> Result<MonteCarloAggregate> {
    if n_seeds == 0 {
        return Err(Error::InvalidParameter {
            name: "n_seeds",
            reason: "must be at least 1",
            value: 0.0,
        });
    }
    config.validate()?;
    let base = config.experiment.seed;
    let outcomes: Vec<(u64, Result<TrialLog>)> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|offset| {
            let seed = base + offset;
            (seed, run_trial(&config.with_seed(seed)))
        })
        .collect();

    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(log) => per_seed.push(SeedSummary {
                seed,
                agents: log.summary,
            }),
            Err(e) => failures.push(TrialFailureRecord {
                seed,
                message: e.to_string(),
            }),
        }
    }

    let agents = (0..2)
        .map(|i| {
            let surprises: Vec<f64> = per_seed
                .iter()
                .map(|s| s.agents[i].cumulative_surprise)
                .collect();
            let goal_costs: Vec<f64> = per_seed
                .iter()
                .map(|s| s.agents[i].cumulative_goal_cost)
                .collect();
            AgentAggregate {
                median_surprise: median(&surprises),
                iqr_surprise: interquartile_range(&surprises),
                median_goal_cost: median(&goal_costs),
                iqr_goal_cost: interquartile_range(&goal_costs),
            }
        })
        .collect();

    Ok(MonteCarloAggregate {
        config: *config,
        n_seeds,
        per_seed,
        failures,
        agents,
    })
}

/// Per-agent deltas (coupled minus uncoupled) and per-seed win counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentComparison {
    pub delta_median_surprise: f64,
    pub delta_median_goal_cost: f64,
    pub surprise_wins: usize,
    pub goal_wins: usize,
    pub seeds_compared: usize,
}

/// Outcome of the coupled-versus-uncoupled comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub agents: Vec<AgentComparison>,
    pub coupled_dominates: bool,
}

/// Compares a coupled aggregate against an uncoupled one. The aggregates
/// must come from configurations that differ at most in coupling mode.
pub fn compare(
    coupled: &MonteCarloAggregate,
    uncoupled: &MonteCarloAggregate,
) -> Result<ComparisonReport> {
    if !coupled.config.matches_except_coupling(&uncoupled.config) {
        return Err(Error::ConfigMismatch);
    }

    let mut agents = Vec::with_capacity(2);
    let mut dominates = true;
    for i in 0..2 {
        let delta_median_surprise =
            coupled.agents[i].median_surprise - uncoupled.agents[i].median_surprise;
        let delta_median_goal_cost =
            coupled.agents[i].median_goal_cost - uncoupled.agents[i].median_goal_cost;

        let mut surprise_wins = 0;
        let mut goal_wins = 0;
        let mut seeds_compared = 0;
        for c in &coupled.per_seed {
            if let Some(u) = uncoupled.per_seed.iter().find(|u| u.seed == c.seed) {
                seeds_compared += 1;
                if c.agents[i].cumulative_surprise < u.agents[i].cumulative_surprise {
                    surprise_wins += 1;
                }
                if c.agents[i].cumulative_goal_cost < u.agents[i].cumulative_goal_cost {
                    goal_wins += 1;
                }
            }
        }
        dominates &= delta_median_surprise < 0.0 && delta_median_goal_cost < 0.0;
        agents.push(AgentComparison {
            delta_median_surprise,
            delta_median_goal_cost,
            surprise_wins,
            goal_wins,
            seeds_compared,
        });
    }

    Ok(ComparisonReport {
        agents,
        coupled_dominates: dominates,
    })
}

fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

fn interquartile_range(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}

/// Linearly interpolated quantile of an unsorted sample; NaN when empty.
fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
