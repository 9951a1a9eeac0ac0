//! Pinching-antenna assisted wireless-powered mobile edge computing.
//!
//! A base station feeds a dielectric waveguide carrying `M` pinching
//! antennas. Devices first harvest energy from the downlink, then split their
//! tasks between local computing and uplink offloading. The crate models the
//! frame, maximizes the number of computed bits by alternating over antenna
//! placement (PSO), radiation factors (successive convex approximation),
//! transmit powers and time allocation, and runs the baseline schemes and
//! parameter sweeps.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod orchestrator;
pub mod pso;
pub mod radiation_power;
pub mod scenario;
pub mod system_model;
pub mod time_alloc;

pub use channel::{spacing_feasible, Channel, ComplexGain, PaLayout};
pub use error::{Error, Result};
pub use experiments::{emit_csv, run_sweep, SweepParam, SweepSpec, SweepTable};
pub use orchestrator::{init_solution, run_alternating, run_baseline, AoOptions, AoTrace, SchemeId, SchemeRunner};
pub use pso::{run_pso, PsoParams};
pub use radiation_power::{optimize_radiation, recover_powers, sca_step, RadiationVector};
pub use scenario::{derive_constants, sample_devices, ChannelConstants, DeviceLayout, Position, ScenarioConfig};
pub use system_model::{ResourceAllocation, SolutionState, SystemModel};
pub use time_alloc::{solve_time_alloc, TimeAllocProblem};
