//! Ground-truth double mass-spring-damper simulator.
//!
//! Block 1 hangs off a fixed frame through spring k1 and damper c1; block 2
//! hangs off block 1 through k2 and c2. Each block takes an external force
//! input. States advance with the second-order Stormer-Verlet scheme
//!
//!   z' = z + dt v + (dt^2 / 2) a(z, v, u)
//!
//! and a velocity-Verlet velocity update with one fixed-point substitution
//! for the velocity-dependent damping force. Measurements are positions plus
//! i.i.d. Gaussian noise from a seeded generator.

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Masses, damping coefficients and spring stiffnesses of the two blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsdParams {
    pub m1: f64,
    pub m2: f64,
    pub c1: f64,
    pub c2: f64,
    pub k1: f64,
    pub k2: f64,
}

impl MsdParams {
    pub fn new(m1: f64, m2: f64, c1: f64, c2: f64, k1: f64, k2: f64) -> Result<Self> {
        for (name, value) in [("m1", m1), ("m2", m2), ("k1", k1), ("k2", k2)] {
            if value <= 0.0 || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be positive and finite",
                    value,
                });
            }
        }
        for (name, value) in [("c1", c1), ("c2", c2)] {
            if value < 0.0 || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be non-negative and finite",
                    value,
                });
            }
        }
        Ok(Self {
            m1,
            m2,
            c1,
            c2,
            k1,
            k2,
        })
    }

    /// Accelerations of the two blocks under control forces `u`.
    pub fn acceleration(&self, state: &PlantState, u: [f64; 2]) -> [f64; 2] {
        let [z1, z2] = state.position;
        let [v1, v2] = state.velocity;
        let a1 = (-(self.c1 + self.c2) * v1 + self.c2 * v2 - (self.k1 + self.k2) * z1
            + self.k2 * z2
            + u[0])
            / self.m1;
        let a2 = (self.c2 * v1 - self.c2 * v2 + self.k2 * z1 - self.k2 * z2 + u[1]) / self.m2;
        [a1, a2]
    }

    /// One Stormer-Verlet substep of length `dt` with the control held fixed.
    pub fn verlet_step(&self, state: &PlantState, u: [f64; 2], dt: f64) -> Result<PlantState> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive and finite",
                value: dt,
            });
        }
        let a_old = self.acceleration(state, u);
        let half_dt2 = 0.5 * dt * dt;
        let position = [
            state.position[0] + dt * state.velocity[0] + half_dt2 * a_old[0],
            state.position[1] + dt * state.velocity[1] + half_dt2 * a_old[1],
        ];
        // One fixed-point pass: evaluate the new acceleration at the new
        // position with an Euler-predicted velocity, then average.
        let predicted = PlantState {
            position,
            velocity: [
                state.velocity[0] + dt * a_old[0],
                state.velocity[1] + dt * a_old[1],
            ],
        };
        let a_new = self.acceleration(&predicted, u);
        let velocity = [
            state.velocity[0] + 0.5 * dt * (a_old[0] + a_new[0]),
            state.velocity[1] + 0.5 * dt * (a_old[1] + a_new[1]),
        ];
        let next = PlantState { position, velocity };
        if !next.is_finite() {
            return Err(Error::IntegrationDiverged);
        }
        Ok(next)
    }

    /// Applies `n_iter` substeps with the control zero-order-held.
    pub fn advance(
        &self,
        state: &PlantState,
        u: [f64; 2],
        dt: f64,
        n_iter: usize,
    ) -> Result<PlantState> {
        if n_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "n_iter",
                reason: "must be at least 1",
                value: 0.0,
            });
        }
        let mut current = *state;
        for _ in 0..n_iter {
            current = self.verlet_step(&current, u, dt)?;
        }
        Ok(current)
    }

    /// Mechanical energy: kinetic terms plus the two spring potentials.
    pub fn energy(&self, state: &PlantState) -> f64 {
        let [z1, z2] = state.position;
        let [v1, v2] = state.velocity;
        0.5 * self.m1 * v1 * v1
            + 0.5 * self.m2 * v2 * v2
            + 0.5 * self.k1 * z1 * z1
            + 0.5 * self.k2 * (z2 - z1) * (z2 - z1)
    }
}

/// Displacements and velocities of the two blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

impl PlantState {
    pub fn origin() -> Self {
        Self {
            position: [0.0, 0.0],
            velocity: [0.0, 0.0],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(&self.velocity)
            .all(|v| v.is_finite())
    }
}

/// Position sensor with i.i.d. Gaussian noise per coordinate, driven by a
/// seeded deterministic generator.
#[derive(Debug, Clone)]
pub struct SensorModel {
    noise_std: f64,
    rng: StdRng,
}

impl SensorModel {
    pub fn new(noise_variance: f64, seed: u64) -> Result<Self> {
        if noise_variance < 0.0 || !noise_variance.is_finite() {
            return Err(Error::InvalidParameter {
                name: "noise variance",
                reason: "must be non-negative and finite",
                value: noise_variance,
            });
        }
        Ok(Self {
            noise_std: noise_variance.sqrt(),
            rng: StdRng::seed_from_u64(seed),
        })
    }

    /// Measures both positions; with zero noise variance this is exact.
    pub fn measure(&mut self, state: &PlantState) -> [f64; 2] {
        let e1: f64 = StandardNormal.sample(&mut self.rng);
        let e2: f64 = StandardNormal.sample(&mut self.rng);
        [
            state.position[0] + self.noise_std * e1,
            state.position[1] + self.noise_std * e2,
        ]
    }
}
