//! Energy, computation and capacity bookkeeping for one frame.
//!
//! A frame is split into a wireless-power phase of length `tau1` and an
//! offloading phase of length `tau2`. Each device spends its harvested
//! energy on uplink transmission and on local computing.

use crate::channel::{Channel, PaLayout};
use crate::error::Result;
use crate::radiation_power::RadiationVector;
use crate::scenario::{derive_constants, DeviceLayout, Position, ScenarioConfig};

/// Default relative tolerance for constraint checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceAllocation {
    /// Device transmit powers, W.
    pub p: Vec<f64>,
    /// Wireless-power phase, s.
    pub tau1: f64,
    /// Offloading phase, s.
    pub tau2: f64,
    /// Local CPU frequencies, cycles/s.
    pub f: Vec<f64>,
}

impl ResourceAllocation {
    pub fn zeros(num_devices: usize) -> Self {
        Self { p: vec![0.0; num_devices], tau1: 0.0, tau2: 0.0, f: vec![0.0; num_devices] }
    }
}

/// How devices share the offloading phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccessMode {
    /// All devices transmit together for the whole offloading phase and the
    /// server decodes the sum rate.
    #[default]
    Noma,
    /// The offloading phase is cut into equal per-device slots.
    Tdma,
}

impl AccessMode {
    /// Time each device spends transmitting.
    pub fn tx_time(self, tau2: f64, num_devices: usize) -> f64 {
        match self {
            AccessMode::Noma => tau2,
            AccessMode::Tdma if num_devices == 0 => 0.0,
            AccessMode::Tdma => tau2 / num_devices as f64,
        }
    }
}

/// Signed slack of every constraint; non-negative means satisfied.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Smallest uplink antenna gap minus the minimum spacing, m.
    pub uplink_spacing: f64,
    pub downlink_spacing: f64,
    /// Smallest distance of an antenna to the waveguide ends, m.
    pub uplink_range: f64,
    pub downlink_range: f64,
    /// Per device `E_k − p_k·t_k − e_k`, J.
    pub energy: Vec<f64>,
    /// `1 − Σ α_m²`.
    pub radiation: f64,
    /// `T − τ1 − τ2`, s.
    pub time: f64,
    /// Smallest decision variable among powers, frequencies and durations.
    pub nonnegativity: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    /// Names of the violated constraints.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.uplink_spacing < 0.0 || self.downlink_spacing < 0.0 {
            out.push(format!(
                "antenna spacing (uplink {:.3e}, downlink {:.3e})",
                self.uplink_spacing, self.downlink_spacing
            ));
        }
        if self.uplink_range < 0.0 || self.downlink_range < 0.0 {
            out.push("waveguide range".to_string());
        }
        for (k, s) in self.energy.iter().enumerate() {
            if *s < 0.0 {
                out.push(format!("energy budget of device {k} ({s:.3e} J)"));
            }
        }
        if self.radiation < 0.0 {
            out.push(format!("radiation norm ({:.3e})", self.radiation));
        }
        if self.time < 0.0 {
            out.push(format!("frame time ({:.3e} s)", self.time));
        }
        if self.nonnegativity < 0.0 {
            out.push("non-negativity".to_string());
        }
        out
    }
}

/// Every decision variable plus its evaluated capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    pub uplink_layout: PaLayout,
    pub downlink_layout: PaLayout,
    pub w: RadiationVector,
    pub alloc: ResourceAllocation,
    pub access: AccessMode,
    /// Bits computed per frame.
    pub objective: f64,
    pub report: FeasibilityReport,
}

/// Computing bits and energy of one device running at `f` for a frame.
pub fn local_compute(f: f64, config: &ScenarioConfig) -> (f64, f64) {
    let t = config.frame_duration;
    (t * f / config.cycles_per_bit, t * config.chip_kappa * f.powi(3))
}

/// A scenario with its devices dropped and channel constants derived.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub config: ScenarioConfig,
    pub channel: Channel,
    pub devices: DeviceLayout,
}

impl SystemModel {
    pub fn new(config: ScenarioConfig, devices: DeviceLayout) -> Result<Self> {
        config.validate()?;
        let consts = derive_constants(&config)?;
        let channel = Channel::new(consts, &config);
        Ok(Self { config, channel, devices })
    }

    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn noise_power(&self) -> f64 {
        self.channel.consts.noise_power
    }

    /// `|Σ_m h^D_mk|²` for every device.
    pub fn downlink_gains(&self, layout: &PaLayout, w: &RadiationVector) -> Vec<f64> {
        self.devices
            .iter()
            .map(|d| self.channel.aggregate_downlink_gain(layout, w, d))
            .collect()
    }

    /// `g_k` for every device.
    pub fn uplink_gains(&self, layout: &PaLayout) -> Vec<f64> {
        self.devices
            .iter()
            .map(|d| self.channel.aggregate_uplink_gain(layout, d))
            .collect()
    }

    pub fn harvested_energy(
        &self,
        downlink_layout: &PaLayout,
        w: &RadiationVector,
        device: &Position,
        tau1: f64,
    ) -> f64 {
        let gain = self.channel.aggregate_downlink_gain(downlink_layout, w, device);
        self.energy_from_gain(gain, tau1)
    }

    /// `β τ1 P_B H` for a precomputed downlink gain `H`.
    pub fn energy_from_gain(&self, gain: f64, tau1: f64) -> f64 {
        self.config.harvest_efficiency * tau1 * self.config.bs_power * gain
    }

    pub fn harvested_energies(
        &self,
        downlink_layout: &PaLayout,
        w: &RadiationVector,
        tau1: f64,
    ) -> Vec<f64> {
        self.downlink_gains(downlink_layout, w)
            .into_iter()
            .map(|h| self.energy_from_gain(h, tau1))
            .collect()
    }

    /// Offloading rate coefficient `B·log2(1 + Σ p_k g_k / (M σ²))`, bits/s.
    pub fn noma_rate(&self, p: &[f64], gains: &[f64], num_antennas: usize) -> f64 {
        let signal: f64 = p.iter().zip(gains).map(|(p, g)| p * g).sum();
        let noise = num_antennas as f64 * self.noise_power();
        self.config.bandwidth * (1.0 + signal / noise).log2()
    }

    /// Rate of one device transmitting alone, bits/s.
    pub fn single_rate(&self, p: f64, gain: f64, num_antennas: usize) -> f64 {
        let noise = num_antennas as f64 * self.noise_power();
        self.config.bandwidth * (1.0 + p * gain / noise).log2()
    }

    /// Bits offloaded in one frame under the sum-rate uplink.
    pub fn offload_bits(&self, uplink_layout: &PaLayout, alloc: &ResourceAllocation) -> f64 {
        let gains = self.uplink_gains(uplink_layout);
        alloc.tau2 * self.noma_rate(&alloc.p, &gains, uplink_layout.len())
    }

    fn offload_bits_for(&self, uplink_layout: &PaLayout, alloc: &ResourceAllocation, access: AccessMode) -> f64 {
        match access {
            AccessMode::Noma => self.offload_bits(uplink_layout, alloc),
            AccessMode::Tdma => {
                let slot = access.tx_time(alloc.tau2, self.num_devices());
                let gains = self.uplink_gains(uplink_layout);
                alloc
                    .p
                    .iter()
                    .zip(&gains)
                    .map(|(&p, &g)| slot * self.single_rate(p, g, uplink_layout.len()))
                    .sum()
            }
        }
    }

    pub fn local_bits(&self, alloc: &ResourceAllocation) -> f64 {
        alloc.f.iter().map(|&f| local_compute(f, &self.config).0).sum()
    }

    /// Offloaded plus locally computed bits.
    pub fn evaluate_capacity(&self, state: &SolutionState) -> f64 {
        self.capacity_of(&state.uplink_layout, &state.alloc, state.access)
    }

    pub fn capacity_of(&self, uplink_layout: &PaLayout, alloc: &ResourceAllocation, access: AccessMode) -> f64 {
        self.offload_bits_for(uplink_layout, alloc, access) + self.local_bits(alloc)
    }

    pub fn check_feasibility(&self, state: &SolutionState, tol: f64) -> FeasibilityReport {
        self.report_for(
            &state.uplink_layout,
            &state.downlink_layout,
            &state.w,
            &state.alloc,
            state.access,
            tol,
        )
    }

    fn report_for(
        &self,
        uplink: &PaLayout,
        downlink: &PaLayout,
        w: &RadiationVector,
        alloc: &ResourceAllocation,
        access: AccessMode,
        tol: f64,
    ) -> FeasibilityReport {
        let cfg = &self.config;
        let delta = cfg.min_spacing;
        let spacing = |l: &PaLayout| if l.len() < 2 { f64::INFINITY } else { l.min_gap() - delta };
        let range = |l: &PaLayout| if l.is_empty() { f64::INFINITY } else { l.range_margin(cfg.area_x) };

        let tx = access.tx_time(alloc.tau2, self.num_devices());
        let harvested = self.harvested_energies(downlink, w, alloc.tau1);
        let mut energy_ok = true;
        let energy: Vec<f64> = harvested
            .iter()
            .zip(alloc.p.iter().zip(&alloc.f))
            .map(|(&e_k, (&p, &f))| {
                let spent = p * tx + local_compute(f, cfg).1;
                let slack = e_k - spent;
                if slack < -tol * e_k.max(spent) {
                    energy_ok = false;
                }
                slack
            })
            .collect();

        let radiation = 1.0 - w.norm_sqr();
        let time = cfg.frame_duration - alloc.tau1 - alloc.tau2;
        let nonnegativity = alloc
            .p
            .iter()
            .chain(&alloc.f)
            .chain([&alloc.tau1, &alloc.tau2])
            .copied()
            .fold(f64::INFINITY, f64::min);

        let len_scale = cfg.area_x;
        let (us, ds) = (spacing(uplink), spacing(downlink));
        let (ur, dr) = (range(uplink), range(downlink));
        let feasible = energy_ok
            && us >= -tol * len_scale
            && ds >= -tol * len_scale
            && ur >= -tol * len_scale
            && dr >= -tol * len_scale
            && radiation >= -tol
            && time >= -tol * cfg.frame_duration
            && nonnegativity >= 0.0
            && alloc.p.len() == self.num_devices()
            && alloc.f.len() == self.num_devices();

        FeasibilityReport {
            uplink_spacing: us,
            downlink_spacing: ds,
            uplink_range: ur,
            downlink_range: dr,
            energy,
            radiation,
            time,
            nonnegativity,
            feasible,
        }
    }

    /// Bundles the variables into a state with objective and report filled in.
    pub fn assemble(
        &self,
        uplink_layout: PaLayout,
        downlink_layout: PaLayout,
        w: RadiationVector,
        alloc: ResourceAllocation,
        access: AccessMode,
    ) -> SolutionState {
        let objective = self.capacity_of(&uplink_layout, &alloc, access);
        let report = self.report_for(&uplink_layout, &downlink_layout, &w, &alloc, access, FEASIBILITY_TOL);
        SolutionState { uplink_layout, downlink_layout, w, alloc, access, objective, report }
    }
}
