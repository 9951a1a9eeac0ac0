//! Alternating optimization over placement, radiation, power and time.
//!
//! Each outer iteration runs the blocks in a fixed order: uplink placement,
//! downlink placement, radiation factors, transmit powers, time allocation.
//! A block's result is kept only if the re-evaluated capacity does not drop
//! and the state stays feasible; otherwise the previous variables are kept.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;

use crate::channel::PaLayout;
use crate::error::{Error, Result};
use crate::pso::{downlink_fitness, run_pso, uplink_fitness, PsoParams, SearchSpace};
use crate::radiation_power::{
    build_effective_channels, optimize_radiation, recover_powers, RadiationVector, SCA_MAX_ITERS, SCA_TOL,
};
use crate::system_model::{local_compute, AccessMode, ResourceAllocation, SolutionState, SystemModel};
use crate::time_alloc::{solve_slot_device, solve_time_alloc, TimeAllocProblem, TIME_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    UplinkPlacement,
    DownlinkPlacement,
    Radiation,
    Powers,
    TimeAllocation,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::UplinkPlacement => "uplink_placement",
            Block::DownlinkPlacement => "downlink_placement",
            Block::Radiation => "radiation",
            Block::Powers => "powers",
            Block::TimeAllocation => "time_allocation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub block: Block,
    /// Capacity after the block (the incumbent when rejected), bits.
    pub objective: f64,
    /// Change against the capacity before the block, bits.
    pub delta: f64,
    pub accepted: bool,
    pub feasible: bool,
    /// Largest relative energy slack over devices whose power was recovered
    /// without clamping. Only set for blocks that recover powers.
    pub recovery_slack: Option<f64>,
    pub pso_trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub iter: usize,
    pub objective: f64,
    pub blocks: Vec<BlockRecord>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AoTrace {
    pub initial_objective: f64,
    pub outer: Vec<OuterRecord>,
    pub converged: bool,
}

impl AoTrace {
    /// Initial capacity followed by the capacity after every outer iteration.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(self.outer.iter().map(|o| o.objective))
            .collect()
    }

    /// Capacity after every block, in execution order, starting with the
    /// initial capacity.
    pub fn block_objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(self.outer.iter().flat_map(|o| o.blocks.iter().map(|b| b.objective)))
            .collect()
    }

    /// CSV with header `outer_iter,objective_bits,block,delta_bits,feasible`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("outer_iter,objective_bits,block,delta_bits,feasible\n");
        let _ = writeln!(s, "0,{:.16e},init,{:.16e},true", self.initial_objective, 0.0);
        for o in &self.outer {
            for b in &o.blocks {
                let _ = writeln!(
                    s,
                    "{},{:.16e},{},{:.16e},{}",
                    o.iter,
                    b.objective,
                    b.block.name(),
                    b.delta,
                    b.feasible
                );
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoOptions {
    pub outer_tol: f64,
    pub max_outer: usize,
    pub pso: PsoParams,
    pub sca_max_iters: usize,
    pub sca_tol: f64,
    /// Golden-section tolerance relative to the frame length.
    pub time_tol: f64,
    /// Run the two placement blocks; off for fixed-position schemes.
    pub optimize_placement: bool,
    /// Reject blocks that lower the capacity.
    pub guard: bool,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-6,
            max_outer: 30,
            pso: PsoParams::default(),
            sca_max_iters: SCA_MAX_ITERS,
            sca_tol: SCA_TOL,
            time_tol: TIME_TOL,
            optimize_placement: true,
            guard: true,
        }
    }
}

/// Which weighted gain a placement block maximizes.
pub enum PlacementTarget<'a> {
    /// `Σ p_k g_k`.
    Uplink { p: &'a [f64] },
    /// `Σ g_k β τ1 P_B |Σ h^D_mk|²`.
    Downlink { w: &'a RadiationVector, g: &'a [f64], tau1: f64 },
}

/// Produces a candidate layout for one placement block.
pub trait PlacementSolver {
    fn place(
        &mut self,
        model: &SystemModel,
        target: PlacementTarget<'_>,
        incumbent: &PaLayout,
        rng: &mut ChaCha8Rng,
    ) -> Result<(PaLayout, Vec<f64>)>;
}

/// Multi-start PSO seeded with the incumbent layout and one compact cluster
/// per device.
#[derive(Debug, Clone)]
pub struct PsoPlacement {
    pub params: PsoParams,
}

/// `m` antennas centred on the waveguide point above `x`, spaced by the
/// smallest whole number of guided wavelengths that respects `Δ` so that
/// their in-waveguide phases agree. Shifted inside the waveguide when the
/// cluster would overhang an end.
pub fn cluster_layout(model: &SystemModel, m: usize, x: f64) -> PaLayout {
    let cfg = &model.config;
    let lg = model.channel.consts.lambda_guided;
    let step = (cfg.min_spacing / lg).ceil().max(1.0) * lg;
    let step = if (m.saturating_sub(1)) as f64 * step > cfg.area_x { cfg.min_spacing } else { step };
    let span = m.saturating_sub(1) as f64 * step;
    let start = (x - span / 2.0).clamp(0.0, (cfg.area_x - span).max(0.0));
    PaLayout::new((0..m).map(|i| (start + i as f64 * step).min(cfg.area_x)).collect())
}

impl PlacementSolver for PsoPlacement {
    fn place(
        &mut self,
        model: &SystemModel,
        target: PlacementTarget<'_>,
        incumbent: &PaLayout,
        rng: &mut ChaCha8Rng,
    ) -> Result<(PaLayout, Vec<f64>)> {
        let space = SearchSpace::for_model(model, incumbent.len());
        let m = incumbent.len();
        let seeds: Vec<Vec<f64>> = std::iter::once(incumbent.xs.clone())
            .chain(model.devices.iter().map(|d| cluster_layout(model, m, d.x).xs))
            .collect();
        let res = match target {
            PlacementTarget::Uplink { p } => {
                run_pso(|x| uplink_fitness(model, x, p), &space, &self.params, rng, &seeds)?
            }
            PlacementTarget::Downlink { w, g, tau1 } => {
                run_pso(|x| downlink_fitness(model, x, w, g, tau1), &space, &self.params, rng, &seeds)?
            }
        };
        Ok((PaLayout::new(res.best), res.trace))
    }
}

/// Fixed-PA layout: antennas at the centres of `M` equal waveguide segments.
pub fn uniform_layout(model: &SystemModel) -> Result<PaLayout> {
    let cfg = &model.config;
    let m = cfg.num_antennas;
    if m as f64 * cfg.min_spacing > cfg.area_x {
        return Err(Error::Config(format!(
            "{m} evenly spread antennas would sit {} m apart, below the {} m minimum",
            cfg.area_x / m as f64,
            cfg.min_spacing
        )));
    }
    Ok(PaLayout::new(
        (1..=m).map(|i| (2 * i - 1) as f64 * cfg.area_x / (2 * m) as f64).collect(),
    ))
}

/// Conventional array: half-wavelength spacing starting at the feed point.
pub fn ula_layout(model: &SystemModel) -> Result<PaLayout> {
    let cfg = &model.config;
    let spacing = (model.channel.consts.lambda_free / 2.0).max(cfg.min_spacing);
    let xs: Vec<f64> = (0..cfg.num_antennas).map(|i| i as f64 * spacing).collect();
    if xs.last().is_some_and(|&x| x > cfg.area_x) {
        return Err(Error::Config("array does not fit on the waveguide".into()));
    }
    Ok(PaLayout::new(xs))
}

/// Transmit powers from the harvested energy, lowering the CPU frequency of
/// devices whose harvest does not even cover local computing. Returns the
/// completed state and the recovery slack of unclamped devices.
pub fn with_recovered_powers(
    model: &SystemModel,
    uplink: PaLayout,
    downlink: PaLayout,
    w: RadiationVector,
    mut alloc: ResourceAllocation,
    access: AccessMode,
) -> (SolutionState, f64) {
    let probe = model.assemble(uplink.clone(), downlink.clone(), w.clone(), alloc.clone(), access);
    let rec = recover_powers(model, &probe);
    let harvested = model.harvested_energies(&downlink, &w, alloc.tau1);
    let cfg = &model.config;
    for (k, &clamped) in rec.clamped.iter().enumerate() {
        if clamped {
            alloc.f[k] = (harvested[k].max(0.0) / (cfg.frame_duration * cfg.chip_kappa)).cbrt();
        }
    }
    alloc.p = rec.p;
    let state = model.assemble(uplink, downlink, w, alloc, access);
    let slack = recovery_slack(model, &state, &rec.clamped, &harvested);
    (state, slack)
}

fn recovery_slack(model: &SystemModel, state: &SolutionState, clamped: &[bool], harvested: &[f64]) -> f64 {
    let tx = state.access.tx_time(state.alloc.tau2, model.num_devices());
    state
        .report
        .energy
        .iter()
        .zip(clamped)
        .zip(harvested)
        .enumerate()
        .filter(|(k, ((_, &c), _))| !c && tx > 0.0 && state.alloc.p[*k] > 0.0)
        .map(|(_, ((s, _), &e))| (s / e.max(f64::MIN_POSITIVE)).abs())
        .fold(0.0, f64::max)
}

/// Algorithm initialization: fixed-PA layouts for both phases, uniform
/// radiation, an even frame split, idle CPUs and powers from the harvest.
pub fn init_solution(model: &SystemModel) -> Result<SolutionState> {
    let layout = uniform_layout(model)?;
    init_with_layouts(model, layout.clone(), layout)
}

pub fn init_with_layouts(model: &SystemModel, uplink: PaLayout, downlink: PaLayout) -> Result<SolutionState> {
    let t = model.config.frame_duration;
    let k = model.num_devices();
    let alloc = ResourceAllocation { p: vec![0.0; k], tau1: t / 2.0, tau2: t / 2.0, f: vec![0.0; k] };
    let w = RadiationVector::uniform(uplink.len());
    let (state, _) = with_recovered_powers(model, uplink, downlink, w, alloc, AccessMode::Noma);
    if !state.report.feasible {
        return Err(Error::Infeasible(format!(
            "initial state violates {}",
            state.report.violations().join(", ")
        )));
    }
    Ok(state)
}

struct Runner<'a> {
    model: &'a SystemModel,
    opts: &'a AoOptions,
}

impl Runner<'_> {
    fn offer(
        &self,
        current: &mut SolutionState,
        block: Block,
        candidate: SolutionState,
        recovery_slack: Option<f64>,
        pso_trace: Option<Vec<f64>>,
    ) -> BlockRecord {
        let before = current.objective;
        let improves = candidate.objective >= before;
        let accepted = candidate.report.feasible && (!self.opts.guard || improves);
        if accepted {
            *current = candidate;
        }
        BlockRecord {
            block,
            objective: current.objective,
            delta: current.objective - before,
            accepted,
            feasible: current.report.feasible,
            recovery_slack: if accepted { recovery_slack } else { None },
            pso_trace,
        }
    }

    fn uplink_block(&self, current: &mut SolutionState, placer: &mut dyn PlacementSolver, rng: &mut ChaCha8Rng) -> Result<BlockRecord> {
        let (layout, trace) = placer.place(
            self.model,
            PlacementTarget::Uplink { p: &current.alloc.p },
            &current.uplink_layout,
            rng,
        )?;
        let cand = self.model.assemble(
            layout,
            current.downlink_layout.clone(),
            current.w.clone(),
            current.alloc.clone(),
            current.access,
        );
        Ok(self.offer(current, Block::UplinkPlacement, cand, None, Some(trace)))
    }

    fn downlink_block(&self, current: &mut SolutionState, placer: &mut dyn PlacementSolver, rng: &mut ChaCha8Rng) -> Result<BlockRecord> {
        let g = self.model.uplink_gains(&current.uplink_layout);
        let (layout, trace) = placer.place(
            self.model,
            PlacementTarget::Downlink { w: &current.w, g: &g, tau1: current.alloc.tau1 },
            &current.downlink_layout,
            rng,
        )?;
        let (cand, slack) = with_recovered_powers(
            self.model,
            current.uplink_layout.clone(),
            layout,
            current.w.clone(),
            current.alloc.clone(),
            current.access,
        );
        Ok(self.offer(current, Block::DownlinkPlacement, cand, Some(slack), Some(trace)))
    }

    fn radiation_block(&self, current: &mut SolutionState) -> BlockRecord {
        let g = self.model.uplink_gains(&current.uplink_layout);
        let chan = build_effective_channels(self.model, &current.downlink_layout, &g, current.alloc.tau1);
        let res = optimize_radiation(&chan, &current.w, self.opts.sca_max_iters, self.opts.sca_tol);
        let (cand, slack) = with_recovered_powers(
            self.model,
            current.uplink_layout.clone(),
            current.downlink_layout.clone(),
            res.w,
            current.alloc.clone(),
            current.access,
        );
        self.offer(current, Block::Radiation, cand, Some(slack), None)
    }

    fn powers_block(&self, current: &mut SolutionState) -> BlockRecord {
        let (cand, slack) = with_recovered_powers(
            self.model,
            current.uplink_layout.clone(),
            current.downlink_layout.clone(),
            current.w.clone(),
            current.alloc.clone(),
            current.access,
        );
        self.offer(current, Block::Powers, cand, Some(slack), None)
    }

    fn time_block(&self, current: &mut SolutionState) -> BlockRecord {
        let model = self.model;
        let g = model.uplink_gains(&current.uplink_layout);
        let rate = model.noma_rate(&current.alloc.p, &g, current.uplink_layout.len());
        let h = model.downlink_gains(&current.downlink_layout, &current.w);
        let prob = TimeAllocProblem::from_model(model, rate, h, current.alloc.p.clone());
        let sol = solve_time_alloc(&prob, self.opts.time_tol * model.config.frame_duration);
        let alloc = ResourceAllocation { p: current.alloc.p.clone(), tau1: sol.tau1, tau2: sol.tau2, f: sol.f };
        let cand = model.assemble(
            current.uplink_layout.clone(),
            current.downlink_layout.clone(),
            current.w.clone(),
            alloc,
            current.access,
        );
        self.offer(current, Block::TimeAllocation, cand, None, None)
    }
}

/// Runs the alternating optimization from `init` with PSO placement.
pub fn run_alternating(
    model: &SystemModel,
    init: SolutionState,
    opts: &AoOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(SolutionState, AoTrace)> {
    let mut placer = PsoPlacement { params: opts.pso.clone() };
    run_alternating_with(model, init, opts, rng, &mut placer)
}

pub fn run_alternating_with(
    model: &SystemModel,
    init: SolutionState,
    opts: &AoOptions,
    rng: &mut ChaCha8Rng,
    placer: &mut dyn PlacementSolver,
) -> Result<(SolutionState, AoTrace)> {
    if !init.report.feasible {
        return Err(Error::Infeasible(format!(
            "initial state violates {}",
            init.report.violations().join(", ")
        )));
    }
    let runner = Runner { model, opts };
    let mut current = init;
    let mut trace = AoTrace { initial_objective: current.objective, ..Default::default() };

    for iter in 1..=opts.max_outer {
        let started = Instant::now();
        let before = current.objective;
        let mut blocks = Vec::with_capacity(5);
        if opts.optimize_placement {
            blocks.push(runner.uplink_block(&mut current, placer, rng)?);
            blocks.push(runner.downlink_block(&mut current, placer, rng)?);
        }
        blocks.push(runner.radiation_block(&mut current));
        blocks.push(runner.powers_block(&mut current));
        blocks.push(runner.time_block(&mut current));
        trace.outer.push(OuterRecord {
            iter,
            objective: current.objective,
            blocks,
            wall_time: started.elapsed(),
        });
        let gain = current.objective - before;
        if gain <= opts.outer_tol * before.abs() {
            trace.converged = true;
            break;
        }
    }
    Ok((current, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    Proposed,
    ConventionalMimo,
    FixedPa,
    Tdma,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [SchemeId::Proposed, SchemeId::ConventionalMimo, SchemeId::FixedPa, SchemeId::Tdma];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Proposed => "proposed",
            SchemeId::ConventionalMimo => "conventional_mimo",
            SchemeId::FixedPa => "fixed_pa",
            SchemeId::Tdma => "tdma",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    pub scheme: SchemeId,
    pub state: SolutionState,
    pub trace: AoTrace,
}

impl SchemeOutcome {
    pub fn harvested_energy(&self, model: &SystemModel) -> f64 {
        model
            .harvested_energies(&self.state.downlink_layout, &self.state.w, self.state.alloc.tau1)
            .iter()
            .sum()
    }

    pub fn outer_iters(&self) -> usize {
        self.trace.outer.len()
    }
}

/// Runs schemes for one scenario, sharing intermediate results: the proposed
/// scheme starts from the fixed-PA solution and the TDMA scheme reuses the
/// proposed placement and radiation.
pub struct SchemeRunner<'a> {
    model: &'a SystemModel,
    opts: AoOptions,
    fixed: Option<SchemeOutcome>,
    proposed: Option<SchemeOutcome>,
}

impl<'a> SchemeRunner<'a> {
    pub fn new(model: &'a SystemModel, opts: AoOptions) -> Self {
        Self { model, opts, fixed: None, proposed: None }
    }

    pub fn run(&mut self, scheme: SchemeId) -> Result<SchemeOutcome> {
        match scheme {
            SchemeId::FixedPa => self.fixed_pa(),
            SchemeId::Proposed => self.proposed(),
            SchemeId::ConventionalMimo => self.conventional(),
            SchemeId::Tdma => self.tdma(),
        }
    }

    fn fixed_opts(&self) -> AoOptions {
        AoOptions { optimize_placement: false, ..self.opts.clone() }
    }

    fn fixed_pa(&mut self) -> Result<SchemeOutcome> {
        if let Some(done) = &self.fixed {
            return Ok(done.clone());
        }
        let init = init_solution(self.model)?;
        let mut rng = self.model.config.solver_rng();
        let (state, trace) = run_alternating(self.model, init, &self.fixed_opts(), &mut rng)?;
        let out = SchemeOutcome { scheme: SchemeId::FixedPa, state, trace };
        self.fixed = Some(out.clone());
        Ok(out)
    }

    fn proposed(&mut self) -> Result<SchemeOutcome> {
        if let Some(done) = &self.proposed {
            return Ok(done.clone());
        }
        let fixed = self.fixed_pa()?;
        let mut rng = self.model.config.solver_rng();
        let (state, trace) = run_alternating(self.model, fixed.state, &self.opts, &mut rng)?;
        let out = SchemeOutcome { scheme: SchemeId::Proposed, state, trace };
        self.proposed = Some(out.clone());
        Ok(out)
    }

    fn conventional(&mut self) -> Result<SchemeOutcome> {
        let ula = ula_layout(self.model)?;
        let init = init_with_layouts(self.model, ula.clone(), ula)?;
        let mut rng = self.model.config.solver_rng();
        let (state, trace) = run_alternating(self.model, init, &self.fixed_opts(), &mut rng)?;
        Ok(SchemeOutcome { scheme: SchemeId::ConventionalMimo, state, trace })
    }

    fn tdma(&mut self) -> Result<SchemeOutcome> {
        let proposed = self.proposed()?;
        let state = tdma_allocation(self.model, &proposed.state);
        Ok(SchemeOutcome { scheme: SchemeId::Tdma, state, trace: proposed.trace })
    }
}

/// Re-times a solution as `K + 1` equal slots: one for harvesting and one
/// offloading slot per device, with each device's CPU frequency re-optimized
/// for its own slot.
pub fn tdma_allocation(model: &SystemModel, base: &SolutionState) -> SolutionState {
    let k = model.num_devices();
    let t = model.config.frame_duration;
    let slot = t / (k + 1) as f64;
    let tau1 = slot;
    let tau2 = t - tau1;
    let g = model.uplink_gains(&base.uplink_layout);
    let harvested = model.harvested_energies(&base.downlink_layout, &base.w, tau1);
    let m = base.uplink_layout.len();
    let (f, p): (Vec<f64>, Vec<f64>) = harvested
        .iter()
        .zip(&g)
        .map(|(&e, &g)| {
            let (f, p) = solve_slot_device(model, e, g, slot, m);
            // keep the energy budget exact after the cube/cube-root round trip
            let spent = local_compute(f, &model.config).1;
            (f, p.min(((e - spent) / slot).max(0.0)))
        })
        .unzip();
    let alloc = ResourceAllocation { p, tau1, tau2, f };
    model.assemble(
        base.uplink_layout.clone(),
        base.downlink_layout.clone(),
        base.w.clone(),
        alloc,
        AccessMode::Tdma,
    )
}

/// Runs one scheme from scratch.
pub fn run_baseline(scheme: SchemeId, model: &SystemModel, opts: &AoOptions) -> Result<SolutionState> {
    Ok(SchemeRunner::new(model, opts.clone()).run(scheme)?.state)
}
