//! Line-of-sight channels between pinching antennas and ground devices.
//!
//! Every antenna sits on a waveguide at height `d` along the x-axis, fed at
//! the origin. A coefficient combines free-space path loss, the free-space
//! phase over the antenna-device distance, and the guided phase over the
//! in-waveguide distance `|x_m|`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::radiation_power::RadiationVector;
use crate::scenario::{ChannelConstants, Position, ScenarioConfig};

pub type ComplexGain = Complex64;

/// Antenna x-coordinates along the waveguide for one phase.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PaLayout {
    pub xs: Vec<f64>,
}

impl PaLayout {
    pub fn new(xs: Vec<f64>) -> Self {
        Self { xs }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Smallest pairwise separation, `+inf` for fewer than two antennas.
    pub fn min_gap(&self) -> f64 {
        let mut sorted = self.xs.clone();
        sorted.sort_by(f64::total_cmp);
        sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest distance from any antenna to the ends of `[0, range]`;
    /// negative when an antenna is outside.
    pub fn range_margin(&self, range: f64) -> f64 {
        self.xs
            .iter()
            .map(|&x| x.min(range - x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Rounding slack of the spacing and range checks, relative to the range.
pub const SPACING_SLACK: f64 = 1e-12;

/// True iff every pair is at least `delta` apart and every antenna lies in
/// `[0, range]`, up to [`SPACING_SLACK`]` · range` of rounding.
pub fn spacing_feasible(layout: &PaLayout, delta: f64, range: f64) -> bool {
    let slack = SPACING_SLACK * range;
    layout.xs.iter().all(|&x| (-slack..=range + slack).contains(&x)) && layout.min_gap() >= delta - slack
}

/// Channel evaluator for one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub consts: ChannelConstants,
    pub height: f64,
}

impl Channel {
    pub fn new(consts: ChannelConstants, config: &ScenarioConfig) -> Self {
        Self { consts, height: config.waveguide_height }
    }

    fn antenna(&self, x: f64) -> Position {
        Position::new(x, 0.0, self.height)
    }

    /// Unit-radiation phasor divided by distance, `exp(-j phase) / r`,
    /// without the `η` factor.
    pub fn phasor(&self, x: f64, device: &Position) -> ComplexGain {
        let r = device.distance(&self.antenna(x));
        let phase = 2.0 * PI * r / self.consts.lambda_free
            + 2.0 * PI * x.abs() / self.consts.lambda_guided;
        Complex64::from_polar(1.0 / r, -phase)
    }

    pub fn downlink_coeff(
        &self,
        layout: &PaLayout,
        m: usize,
        device: &Position,
        alpha_m: f64,
    ) -> ComplexGain {
        self.phasor(layout.xs[m], device) * (self.consts.eta * alpha_m)
    }

    pub fn uplink_coeff(&self, layout: &PaLayout, m: usize, device: &Position) -> ComplexGain {
        self.phasor(layout.xs[m], device) * self.consts.eta
    }

    /// `|Σ_m h^D_mk|²`.
    ///
    /// Panics when the layout and the radiation vector disagree in length.
    pub fn aggregate_downlink_gain(
        &self,
        layout: &PaLayout,
        w: &RadiationVector,
        device: &Position,
    ) -> f64 {
        assert_eq!(
            layout.len(),
            w.len(),
            "layout has {} antennas, radiation vector {}",
            layout.len(),
            w.len()
        );
        (0..layout.len())
            .map(|m| self.downlink_coeff(layout, m, device, w.alpha[m]))
            .sum::<Complex64>()
            .norm_sqr()
    }

    /// Uplink gain `g_k = |Σ_m h^U_mk|²`.
    pub fn aggregate_uplink_gain(&self, layout: &PaLayout, device: &Position) -> f64 {
        (0..layout.len())
            .map(|m| self.uplink_coeff(layout, m, device))
            .sum::<Complex64>()
            .norm_sqr()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::derive_constants;
    use proptest::prelude::*;

    fn channel() -> Channel {
        let cfg = ScenarioConfig::default();
        Channel::new(derive_constants(&cfg).unwrap(), &cfg)
    }

    #[test]
    fn perpendicular_device_magnitude() {
        let ch = channel();
        let layout = PaLayout::new(vec![5.0]);
        let h = ch.downlink_coeff(&layout, 0, &Position::ground(5.0, 0.0), 1.0);
        assert!((h.norm() - ch.consts.eta / 3.0).abs() < 1e-18);
        assert!(((h.norm() - 2.840e-4) / 2.840e-4).abs() < 1e-3);
    }

    #[test]
    fn zero_radiation_factor_silences_antenna() {
        let ch = channel();
        let layout = PaLayout::new(vec![5.0]);
        let h = ch.downlink_coeff(&layout, 0, &Position::ground(1.0, 2.0), 0.0);
        assert_eq!(h.norm(), 0.0);
    }

    #[test]
    fn doubling_distance_halves_magnitude() {
        // r = 3 straight below, r = 6 with a 3√3 horizontal offset
        let ch = channel();
        let layout = PaLayout::new(vec![0.0]);
        let near = ch.uplink_coeff(&layout, 0, &Position::ground(0.0, 0.0)).norm();
        let far = ch
            .uplink_coeff(&layout, 0, &Position::ground(0.0, 27f64.sqrt()))
            .norm();
        assert!((far / near - 0.5).abs() < 1e-14);
    }

    #[test]
    fn origin_phase_is_free_space_only() {
        let ch = channel();
        let layout = PaLayout::new(vec![0.0]);
        let h = ch.uplink_coeff(&layout, 0, &Position::ground(0.0, 0.0));
        let expected = Complex64::from_polar(ch.consts.eta / 3.0, -2.0 * PI * 3.0 / ch.consts.lambda_free);
        assert!((h - expected).norm() < 1e-18);
    }

    #[test]
    fn single_antenna_uplink_gain() {
        let ch = channel();
        let layout = PaLayout::new(vec![12.0]);
        let g = ch.aggregate_uplink_gain(&layout, &Position::ground(12.0, 0.0));
        let expected = (ch.consts.eta / 3.0).powi(2);
        assert!(((g - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn single_antenna_downlink_gain_matches_coefficient() {
        let ch = channel();
        let layout = PaLayout::new(vec![7.0]);
        let dev = Position::ground(3.0, 4.0);
        let w = RadiationVector::new(vec![0.8]);
        let h = ch.downlink_coeff(&layout, 0, &dev, 0.8);
        assert!((ch.aggregate_downlink_gain(&layout, &w, &dev) - h.norm_sqr()).abs() < 1e-24);
        let zero = RadiationVector::new(vec![0.0]);
        assert_eq!(ch.aggregate_downlink_gain(&layout, &zero, &dev), 0.0);
    }

    /// Second antenna placed so that its total phase equals the first one's
    /// modulo 2π, found by bisection on the phase mismatch.
    fn phase_aligned_pair(ch: &Channel, dev: &Position) -> PaLayout {
        let total_phase = |x: f64| {
            let r = dev.distance(&Position::new(x, 0.0, ch.height));
            2.0 * PI * r / ch.consts.lambda_free + 2.0 * PI * x / ch.consts.lambda_guided
        };
        let x1 = dev.x;
        let target = total_phase(x1);
        // phase grows monotonically for x > device x; find the next 2π multiple
        let turns = |x: f64| (total_phase(x) - target) / (2.0 * PI);
        let mut lo = x1 + 0.5;
        let n = turns(lo).ceil();
        let mut hi = lo + 0.1;
        while turns(hi) < n {
            hi += 0.1;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if turns(mid) < n {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        PaLayout::new(vec![x1, 0.5 * (lo + hi)])
    }

    #[test]
    fn coherent_pair_adds_magnitudes() {
        let ch = channel();
        let dev = Position::ground(10.0, 2.0);
        let layout = phase_aligned_pair(&ch, &dev);
        let w = RadiationVector::new(vec![0.6, 0.8]);
        let h1 = ch.downlink_coeff(&layout, 0, &dev, 0.6).norm();
        let h2 = ch.downlink_coeff(&layout, 1, &dev, 0.8).norm();
        let g = ch.aggregate_downlink_gain(&layout, &w, &dev);
        assert!(((g - (h1 + h2).powi(2)) / g).abs() < 1e-9);
    }

    #[test]
    fn equidistant_aligned_pair_quadruples_uplink_gain() {
        // device midway between two antennas; in-waveguide phases differ by
        // 2π·Δx/λ_g, so choose Δx as a whole number of guided wavelengths
        let ch = channel();
        let lg = ch.consts.lambda_guided;
        let half = 100.0 * lg;
        let dev = Position::ground(10.0, 1.0);
        let pair = PaLayout::new(vec![10.0 - half, 10.0 + half]);
        let single = PaLayout::new(vec![10.0 - half]);
        let g2 = ch.aggregate_uplink_gain(&pair, &dev);
        let g1 = ch.aggregate_uplink_gain(&single, &dev);
        assert!((g2 / g1 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn spacing_predicate() {
        let d = 0.01;
        assert!(spacing_feasible(&PaLayout::new(vec![0.0, d]), d, 30.0));
        assert!(!spacing_feasible(&PaLayout::new(vec![0.0, d / 2.0]), d, 30.0));
        assert!(!spacing_feasible(&PaLayout::new(vec![0.0, 30.0 + 1e-9]), d, 30.0));
        assert!(!spacing_feasible(&PaLayout::new(vec![-1e-9, 5.0]), d, 30.0));
        assert!(spacing_feasible(&PaLayout::new(vec![20.0, 0.0, 10.0]), d, 30.0));
        assert!(spacing_feasible(&PaLayout::new(vec![]), d, 30.0));
    }

    #[test]
    #[should_panic]
    fn dimension_mismatch_panics() {
        let ch = channel();
        let layout = PaLayout::new(vec![1.0, 2.0]);
        ch.aggregate_downlink_gain(&layout, &RadiationVector::new(vec![1.0]), &Position::ground(0.0, 0.0));
    }

    fn arb_device() -> impl Strategy<Value = Position> {
        (0.0..30.0f64, 0.0..10.0f64).prop_map(|(x, y)| Position::ground(x, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn uplink_is_downlink_at_unit_alpha(x in 0.0..30.0f64, dev in arb_device()) {
            let ch = channel();
            let layout = PaLayout::new(vec![x]);
            prop_assert_eq!(
                ch.uplink_coeff(&layout, 0, &dev),
                ch.downlink_coeff(&layout, 0, &dev, 1.0)
            );
        }

        #[test]
        fn magnitude_and_phase_decompose(x in 0.0..30.0f64, dev in arb_device()) {
            let ch = channel();
            let layout = PaLayout::new(vec![x]);
            let h = ch.uplink_coeff(&layout, 0, &dev);
            let r = ((dev.x - x).powi(2) + dev.y.powi(2) + 9.0).sqrt();
            prop_assert!(((h.norm() - ch.consts.eta / r) / h.norm()).abs() < 1e-12);
            let free = Complex64::from_polar(1.0, -2.0 * PI * r / ch.consts.lambda_free);
            let guided = Complex64::from_polar(1.0, -2.0 * PI * x / ch.consts.lambda_guided);
            let rebuilt = free * guided * (ch.consts.eta / r);
            prop_assert!((rebuilt - h).norm() <= 1e-9 * h.norm());
        }

        #[test]
        fn reflection_across_waveguide(xs in prop::collection::vec(0.0..30.0f64, 1..5), dev in arb_device()) {
            let ch = channel();
            let layout = PaLayout::new(xs);
            let mirrored = Position::ground(dev.x, -dev.y);
            let g = ch.aggregate_uplink_gain(&layout, &dev);
            let gm = ch.aggregate_uplink_gain(&layout, &mirrored);
            prop_assert!((g - gm).abs() <= 1e-12 * g.max(1e-300));
        }

        #[test]
        fn coherent_sum_bounded_by_magnitude_sum(
            xs in prop::collection::vec(0.0..30.0f64, 1..6),
            dev in arb_device(),
        ) {
            let ch = channel();
            let layout = PaLayout::new(xs);
            let bound: f64 = (0..layout.len()).map(|m| ch.uplink_coeff(&layout, m, &dev).norm()).sum();
            prop_assert!(ch.aggregate_uplink_gain(&layout, &dev) <= bound * bound * (1.0 + 1e-12));
        }
    }
}
