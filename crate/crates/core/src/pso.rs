//! Penalty-based particle swarm search over antenna layouts.
//!
//! A particle is the full vector of antenna coordinates along the waveguide.
//! Layouts that break the spacing or range constraints get the fitness
//! [`PENALTY`], so the swarm never adopts them as a best position once a
//! feasible particle exists.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{spacing_feasible, PaLayout};
use crate::error::{Error, Result};
use crate::radiation_power::RadiationVector;
use crate::system_model::SystemModel;

/// Fitness of an infeasible layout.
pub const PENALTY: f64 = 1e30;

const MAX_SAMPLING_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct PsoParams {
    pub num_particles: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_iters: usize,
    /// Largest per-coordinate move in one iteration, m. `None` means a
    /// quarter of the search range.
    pub velocity_clamp: Option<f64>,
    pub num_starts: usize,
    /// Iterations without a relative gbest gain of `stall_tol` before a
    /// start stops.
    pub stall_iters: usize,
    pub stall_tol: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            num_particles: 50,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            max_iters: 200,
            velocity_clamp: None,
            num_starts: 4,
            stall_iters: 20,
            stall_tol: 1e-8,
        }
    }
}

impl PsoParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_particles == 0 || self.max_iters == 0 || self.num_starts == 0 {
            return Err(Error::Config(
                "PSO needs at least one particle, one iteration and one start".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.inertia) {
            return Err(Error::Config(format!("PSO inertia {} outside [0, 1]", self.inertia)));
        }
        Ok(())
    }
}

/// Box of antenna coordinates plus the spacing rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub dim: usize,
    pub range: f64,
    pub min_spacing: f64,
}

impl SearchSpace {
    pub fn for_model(model: &SystemModel, dim: usize) -> Self {
        Self { dim, range: model.config.area_x, min_spacing: model.config.min_spacing }
    }

    pub fn contains(&self, xs: &[f64]) -> bool {
        spacing_feasible(&PaLayout::new(xs.to_vec()), self.min_spacing, self.range)
    }

    /// Draws a random layout that satisfies the spacing and range rules:
    /// sorted uniform draws over the free length `range − (M − 1)Δ`, then
    /// the `i`-th one shifted right by `iΔ`.
    pub fn sample_feasible(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        if self.dim == 0 {
            return Ok(Vec::new());
        }
        let span = (self.dim - 1) as f64 * self.min_spacing;
        if span > self.range {
            return Err(Error::Infeasible(format!(
                "spacing: {} antennas at {} m need {span} m, waveguide range is {} m",
                self.dim, self.min_spacing, self.range
            )));
        }
        let free = self.range - span;
        for _ in 0..MAX_SAMPLING_ATTEMPTS {
            let mut xs: Vec<f64> = (0..self.dim).map(|_| rng.random_range(0.0..=free)).collect();
            xs.sort_by(f64::total_cmp);
            for (i, x) in xs.iter_mut().enumerate() {
                *x = (*x + i as f64 * self.min_spacing).min(self.range);
            }
            if self.contains(&xs) {
                return Ok(xs);
            }
        }
        Err(Error::Infeasible(format!(
            "spacing: no layout with {} antennas {} m apart found in [0, {}] after {MAX_SAMPLING_ATTEMPTS} draws",
            self.dim, self.min_spacing, self.range
        )))
    }
}

/// Negative weighted uplink gain `−Σ p_k g_k`, or [`PENALTY`].
pub fn uplink_fitness(model: &SystemModel, xs: &[f64], p: &[f64]) -> f64 {
    let layout = PaLayout::new(xs.to_vec());
    if !spacing_feasible(&layout, model.config.min_spacing, model.config.area_x) {
        return PENALTY;
    }
    -model
        .devices
        .iter()
        .zip(p)
        .map(|(d, &p)| p * model.channel.aggregate_uplink_gain(&layout, d))
        .sum::<f64>()
}

/// Negative uplink-gain-weighted harvested energy
/// `−Σ g_k β τ1 P_B |Σ_m h^D_mk|²`, or [`PENALTY`].
pub fn downlink_fitness(
    model: &SystemModel,
    xs: &[f64],
    w: &RadiationVector,
    g: &[f64],
    tau1: f64,
) -> f64 {
    let layout = PaLayout::new(xs.to_vec());
    if !spacing_feasible(&layout, model.config.min_spacing, model.config.area_x) {
        return PENALTY;
    }
    -model
        .devices
        .iter()
        .zip(g)
        .map(|(d, &g)| g * model.harvested_energy(&layout, w, d, tau1))
        .sum::<f64>()
}

/// State of one swarm.
#[derive(Debug, Clone)]
pub struct Swarm {
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub pbest: Vec<Vec<f64>>,
    pub pbest_fitness: Vec<f64>,
    pub gbest: Vec<f64>,
    pub gbest_fitness: f64,
}

impl Swarm {
    /// Builds a swarm from initial positions and velocities and evaluates it.
    pub fn new<F: Fn(&[f64]) -> f64>(positions: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>, fitness: &F) -> Self {
        let pbest_fitness: Vec<f64> = positions.iter().map(|x| fitness(x)).collect();
        let best = argmin(&pbest_fitness);
        Self {
            gbest: positions[best].clone(),
            gbest_fitness: pbest_fitness[best],
            pbest: positions.clone(),
            pbest_fitness,
            positions,
            velocities,
        }
    }

    /// One velocity/position update followed by the best-position updates.
    pub fn step<F: Fn(&[f64]) -> f64>(
        &mut self,
        params: &PsoParams,
        clamp: f64,
        rng: &mut ChaCha8Rng,
        fitness: &F,
    ) {
        for n in 0..self.positions.len() {
            let x = &mut self.positions[n];
            let v = &mut self.velocities[n];
            for d in 0..x.len() {
                let c1: f64 = rng.random();
                let c2: f64 = rng.random();
                let vel = params.inertia * v[d]
                    + params.cognitive * c1 * (self.pbest[n][d] - x[d])
                    + params.social * c2 * (self.gbest[d] - x[d]);
                v[d] = vel.clamp(-clamp, clamp);
                x[d] += v[d];
            }
        }
        for n in 0..self.positions.len() {
            let fit = fitness(&self.positions[n]);
            if fit < self.pbest_fitness[n] {
                self.pbest_fitness[n] = fit;
                self.pbest[n].clone_from(&self.positions[n]);
                if fit < self.gbest_fitness {
                    self.gbest_fitness = fit;
                    self.gbest.clone_from(&self.positions[n]);
                }
            }
        }
    }
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub best: Vec<f64>,
    pub fitness: f64,
    /// Best fitness so far after every iteration of every start.
    pub trace: Vec<f64>,
}

/// Multi-start PSO minimizing `fitness` over `space`. `seeds` are injected
/// as particles of the first start (the incumbent layout, typically).
pub fn run_pso<F: Fn(&[f64]) -> f64>(
    fitness: F,
    space: &SearchSpace,
    params: &PsoParams,
    rng: &mut ChaCha8Rng,
    seeds: &[Vec<f64>],
) -> Result<PsoResult> {
    params.validate()?;
    let clamp = params.velocity_clamp.unwrap_or(space.range / 4.0);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();

    for start in 0..params.num_starts {
        let mut positions = Vec::with_capacity(params.num_particles);
        if start == 0 {
            positions.extend(
                seeds
                    .iter()
                    .filter(|s| s.len() == space.dim)
                    .take(params.num_particles)
                    .cloned(),
            );
        }
        while positions.len() < params.num_particles {
            positions.push(space.sample_feasible(rng)?);
        }
        let velocities = (0..params.num_particles)
            .map(|_| (0..space.dim).map(|_| rng.random_range(-1.0..=1.0) * clamp * 0.1).collect())
            .collect();
        let mut swarm = Swarm::new(positions, velocities, &fitness);

        let mut history = vec![swarm.gbest_fitness];
        for _ in 0..params.max_iters {
            swarm.step(params, clamp, rng, &fitness);
            history.push(swarm.gbest_fitness);
            let running = best
                .as_ref()
                .map_or(swarm.gbest_fitness, |(_, f)| f.min(swarm.gbest_fitness));
            trace.push(running);
            if history.len() > params.stall_iters {
                let old = history[history.len() - 1 - params.stall_iters];
                let gain = old - swarm.gbest_fitness;
                if gain <= params.stall_tol * old.abs() {
                    break;
                }
            }
        }
        if best.as_ref().is_none_or(|(_, f)| swarm.gbest_fitness < *f) {
            best = Some((swarm.gbest.clone(), swarm.gbest_fitness));
        }
    }

    let (best, fitness) = best.expect("at least one start");
    if fitness >= PENALTY {
        return Err(Error::Infeasible(
            "spacing/range: no particle satisfied the antenna placement constraints".into(),
        ));
    }
    Ok(PsoResult { best, fitness, trace })
}
