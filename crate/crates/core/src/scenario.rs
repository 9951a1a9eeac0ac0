//! Scenario configuration, derived channel constants and device drops.
//!
//! Powers are held in watts everywhere inside the crate. The dBm forms only
//! exist on the config-file boundary (`bs_power_dbm`, `noise_psd_dbm_hz`).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

const DEVICE_STREAM: u64 = 0;
const SOLVER_STREAM: u64 = 1;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// A point in the deployment frame. The waveguide runs along the x-axis at
/// height `waveguide_height`, fed at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Physical and protocol constants of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Width of the service area along the waveguide, m.
    pub area_x: f64,
    /// Depth of the service area, m.
    pub area_y: f64,
    /// Height of the waveguide above ground, m.
    pub waveguide_height: f64,
    /// Frame duration T, s.
    pub frame_duration: f64,
    pub num_devices: usize,
    pub num_antennas: usize,
    /// Base-station transmit power, W.
    pub bs_power: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_psd_dbm_hz: f64,
    /// Signal bandwidth, Hz.
    pub bandwidth: f64,
    /// Task computation intensity, cycles/bit.
    pub cycles_per_bit: f64,
    /// Effective switched capacitance of the device chips.
    pub chip_kappa: f64,
    /// RF-to-DC conversion efficiency.
    pub harvest_efficiency: f64,
    /// Carrier frequency, Hz.
    pub carrier_freq: f64,
    /// Effective refractive index of the dielectric waveguide.
    pub refractive_index: f64,
    /// Minimum spacing between pinching antennas, m.
    pub min_spacing: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let carrier_freq = 28e9;
        Self {
            area_x: 30.0,
            area_y: 10.0,
            waveguide_height: 3.0,
            frame_duration: 1.0,
            num_devices: 4,
            num_antennas: 4,
            bs_power: dbm_to_watts(43.0),
            noise_psd_dbm_hz: -174.0,
            bandwidth: 100e6,
            cycles_per_bit: 200.0,
            chip_kappa: 1e-28,
            harvest_efficiency: 0.5,
            carrier_freq,
            refractive_index: 1.4,
            // half a free-space wavelength
            min_spacing: SPEED_OF_LIGHT / carrier_freq / 2.0,
            rng_seed: 1,
        }
    }
}

/// Constants shared by every channel evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConstants {
    /// c / (4π f_c), m.
    pub eta: f64,
    /// Free-space wavelength, m.
    pub lambda_free: f64,
    /// Guided wavelength, m.
    pub lambda_guided: f64,
    /// Receiver noise power over the signal bandwidth, W.
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviceLayout {
    pub positions: Vec<Position>,
}

impl DeviceLayout {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Position> {
        self.positions.iter()
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("area_x", self.area_x),
            ("area_y", self.area_y),
            ("waveguide_height", self.waveguide_height),
            ("frame_duration", self.frame_duration),
            ("bandwidth", self.bandwidth),
            ("carrier_freq", self.carrier_freq),
            ("cycles_per_bit", self.cycles_per_bit),
            ("chip_kappa", self.chip_kappa),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.bs_power.is_finite() && self.bs_power >= 0.0) {
            return Err(Error::Config(format!(
                "bs_power must be non-negative, got {}",
                self.bs_power
            )));
        }
        if !self.noise_psd_dbm_hz.is_finite() {
            return Err(Error::Config("noise_psd_dbm_hz must be finite".into()));
        }
        if !(self.harvest_efficiency > 0.0 && self.harvest_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "harvest_efficiency must lie in (0, 1], got {}",
                self.harvest_efficiency
            )));
        }
        if !(self.refractive_index >= 1.0) {
            return Err(Error::Config(format!(
                "refractive_index must be >= 1, got {}",
                self.refractive_index
            )));
        }
        if !(self.min_spacing >= 0.0) {
            return Err(Error::Config(format!(
                "min_spacing must be >= 0, got {}",
                self.min_spacing
            )));
        }
        if self.num_antennas == 0 {
            return Err(Error::Config("num_antennas must be at least 1".into()));
        }
        let span = (self.num_antennas - 1) as f64 * self.min_spacing;
        if span > self.area_x {
            return Err(Error::Config(format!(
                "{} antennas at spacing {} need {span} m of waveguide, only {} available",
                self.num_antennas, self.min_spacing, self.area_x
            )));
        }
        Ok(())
    }

    pub fn bs_power_dbm(&self) -> f64 {
        watts_to_dbm(self.bs_power)
    }

    pub fn set_bs_power_dbm(&mut self, dbm: f64) {
        self.bs_power = dbm_to_watts(dbm);
    }

    /// Position of the waveguide point at coordinate `x`.
    pub fn antenna_position(&self, x: f64) -> Position {
        Position::new(x, 0.0, self.waveguide_height)
    }

    /// RNG stream used only for device drops.
    pub fn device_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(DEVICE_STREAM);
        rng
    }

    /// RNG stream used by the stochastic solvers. Independent of the device
    /// stream, so solver changes never move the devices.
    pub fn solver_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(SOLVER_STREAM);
        rng
    }

    /// Parses the flat `key = value` format. Unknown keys are rejected,
    /// missing keys keep their defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|msg| Error::Parse { line: line_no, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse::<T>()
                .map_err(|_| format!("invalid value `{value}` for `{key}`"))
        }
        match key {
            "area_x" => self.area_x = num(key, value)?,
            "area_y" => self.area_y = num(key, value)?,
            "waveguide_height" => self.waveguide_height = num(key, value)?,
            "frame_duration" => self.frame_duration = num(key, value)?,
            "num_devices" => self.num_devices = num(key, value)?,
            "num_antennas" => self.num_antennas = num(key, value)?,
            "bs_power_dbm" => self.bs_power = dbm_to_watts(num(key, value)?),
            "noise_psd_dbm_hz" => self.noise_psd_dbm_hz = num(key, value)?,
            "bandwidth" => self.bandwidth = num(key, value)?,
            "cycles_per_bit" => self.cycles_per_bit = num(key, value)?,
            "chip_kappa" => self.chip_kappa = num(key, value)?,
            "harvest_efficiency" => self.harvest_efficiency = num(key, value)?,
            "carrier_freq" => self.carrier_freq = num(key, value)?,
            "refractive_index" => self.refractive_index = num(key, value)?,
            "min_spacing" => self.min_spacing = num(key, value)?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Renders the config in the same format `parse` reads.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let rows: [(&str, String); 16] = [
            ("area_x", self.area_x.to_string()),
            ("area_y", self.area_y.to_string()),
            ("waveguide_height", self.waveguide_height.to_string()),
            ("frame_duration", self.frame_duration.to_string()),
            ("num_devices", self.num_devices.to_string()),
            ("num_antennas", self.num_antennas.to_string()),
            ("bs_power_dbm", self.bs_power_dbm().to_string()),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz.to_string()),
            ("bandwidth", self.bandwidth.to_string()),
            ("cycles_per_bit", self.cycles_per_bit.to_string()),
            ("chip_kappa", self.chip_kappa.to_string()),
            ("harvest_efficiency", self.harvest_efficiency.to_string()),
            ("carrier_freq", self.carrier_freq.to_string()),
            ("refractive_index", self.refractive_index.to_string()),
            ("min_spacing", self.min_spacing.to_string()),
            ("rng_seed", self.rng_seed.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

pub fn derive_constants(config: &ScenarioConfig) -> Result<ChannelConstants> {
    if !(config.carrier_freq.is_finite() && config.carrier_freq > 0.0) {
        return Err(Error::Config(format!(
            "carrier_freq must be positive, got {}",
            config.carrier_freq
        )));
    }
    if !(config.bandwidth.is_finite() && config.bandwidth > 0.0) {
        return Err(Error::Config(format!(
            "bandwidth must be positive, got {}",
            config.bandwidth
        )));
    }
    let lambda_free = SPEED_OF_LIGHT / config.carrier_freq;
    let noise_dbm = config.noise_psd_dbm_hz + 10.0 * config.bandwidth.log10();
    Ok(ChannelConstants {
        eta: lambda_free / (4.0 * PI),
        lambda_free,
        lambda_guided: lambda_free / config.refractive_index,
        noise_power: dbm_to_watts(noise_dbm),
    })
}

/// Drops `num_devices` devices uniformly over the service rectangle.
pub fn sample_devices(config: &ScenarioConfig) -> DeviceLayout {
    let mut rng = config.device_rng();
    let positions = (0..config.num_devices)
        .map(|_| {
            let x = rng.random_range(0.0..=config.area_x);
            let y = rng.random_range(0.0..=config.area_y);
            Position::ground(x, y)
        })
        .collect();
    DeviceLayout { positions }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn constants_at_28ghz() {
        let cfg = ScenarioConfig::default();
        let c = derive_constants(&cfg).unwrap();
        assert!(rel(c.lambda_free, 1.0707e-2) < 1e-4);
        assert!(rel(c.eta, 8.521e-4) < 1e-4);
        assert!(rel(c.lambda_guided, 7.648e-3) < 1e-4);
        assert_eq!(c.eta, c.lambda_free / (4.0 * PI));
        assert!(c.lambda_guided <= c.lambda_free);
    }

    #[test]
    fn noise_power_over_100mhz() {
        let c = derive_constants(&ScenarioConfig::default()).unwrap();
        assert!(rel(c.noise_power, 3.981e-13) < 1e-3);
    }

    #[test]
    fn unit_refractive_index_gives_free_space_wavelength() {
        let cfg = ScenarioConfig { refractive_index: 1.0, ..Default::default() };
        let c = derive_constants(&cfg).unwrap();
        assert_eq!(c.lambda_guided, c.lambda_free);
    }

    #[test]
    fn derive_constants_is_pure() {
        let cfg = ScenarioConfig::default();
        assert_eq!(derive_constants(&cfg).unwrap(), derive_constants(&cfg.clone()).unwrap());
    }

    #[test]
    fn bad_frequency_or_bandwidth_is_config_error() {
        let cfg = ScenarioConfig { carrier_freq: 0.0, ..Default::default() };
        assert!(matches!(derive_constants(&cfg), Err(Error::Config(_))));
        let cfg = ScenarioConfig { bandwidth: -1.0, ..Default::default() };
        assert!(matches!(derive_constants(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_devices() {
        let cfg = ScenarioConfig { rng_seed: 77, ..Default::default() };
        assert_eq!(sample_devices(&cfg), sample_devices(&cfg));
        let other = ScenarioConfig { rng_seed: 78, ..Default::default() };
        assert_ne!(sample_devices(&cfg), sample_devices(&other));
    }

    #[test]
    fn zero_devices() {
        let cfg = ScenarioConfig { num_devices: 0, ..Default::default() };
        assert!(sample_devices(&cfg).is_empty());
    }

    #[test]
    fn device_mean_x_is_centered() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for seed in 0..100 {
            let cfg = ScenarioConfig { rng_seed: seed, num_devices: 100, ..Default::default() };
            let devs = sample_devices(&cfg);
            for p in devs.iter() {
                assert!((0.0..=cfg.area_x).contains(&p.x));
                assert!((0.0..=cfg.area_y).contains(&p.y));
                assert_eq!(p.z, 0.0);
                sum += p.x;
                n += 1;
            }
        }
        assert_eq!(n, 10_000);
        assert!(rel(sum / n as f64, 15.0) < 0.02);
    }

    #[test]
    fn device_stream_independent_of_solver_stream() {
        let cfg = ScenarioConfig::default();
        let a: f64 = cfg.device_rng().random();
        let b: f64 = cfg.solver_rng().random();
        assert_ne!(a, b);
    }

    #[test]
    fn validation_rejects_crowded_waveguide() {
        let cfg = ScenarioConfig { num_antennas: 4, min_spacing: 11.0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ScenarioConfig { num_antennas: 4, min_spacing: 10.0, ..Default::default() };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn validation_rejects_bad_efficiency() {
        for eff in [0.0, 1.5, f64::NAN] {
            let cfg = ScenarioConfig { harvest_efficiency: eff, ..Default::default() };
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn parse_roundtrip_and_dbm_boundary() {
        let text = "# comment\narea_x = 40\nbs_power_dbm = 30 # 1 W\nrng_seed=9\n";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.area_x, 40.0);
        assert!(rel(cfg.bs_power, 1.0) < 1e-12);
        assert_eq!(cfg.rng_seed, 9);
        let back = ScenarioConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back.area_x, cfg.area_x);
        assert!(rel(back.bs_power, cfg.bs_power) < 1e-12);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = ScenarioConfig::parse("area_x = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = ScenarioConfig::parse("area_x 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = ScenarioConfig::parse("area_x = -3\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = ScenarioConfig::default();
        assert_eq!((cfg.area_x, cfg.area_y, cfg.waveguide_height), (30.0, 10.0, 3.0));
        assert_eq!((cfg.num_devices, cfg.num_antennas), (4, 4));
        assert!((cfg.bs_power_dbm() - 43.0).abs() < 1e-12);
        assert_eq!(cfg.bandwidth, 100e6);
        assert_eq!(cfg.cycles_per_bit, 200.0);
        assert_eq!(cfg.chip_kappa, 1e-28);
        assert!(cfg.validate().is_ok());
    }
}
