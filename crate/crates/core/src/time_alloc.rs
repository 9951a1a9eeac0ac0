//! Frame split and CPU frequencies for fixed layouts, radiation and powers.
//!
//! Harvested energy only grows with `τ1`, so the frame is always used fully:
//! `τ1 = T − τ2`. For a given `τ2` every device runs its CPU on whatever
//! energy is left after transmitting, which leaves a concave function of the
//! single variable `τ2`.

use crate::system_model::SystemModel;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(x_max, f_max)`; the endpoints are compared too.
pub fn golden_section_max(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    [(a, f(a)), (b, f(b)), (x1, f1), (x2, f2), (mid, f(mid))]
        .into_iter()
        .fold((a, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
}

/// Inputs of the time/frequency subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAllocProblem {
    /// Offloading rate, bits/s.
    pub rate: f64,
    /// Per-device downlink power gains.
    pub gains: Vec<f64>,
    /// Fixed transmit powers, W.
    pub p: Vec<f64>,
    pub frame: f64,
    pub cycles_per_bit: f64,
    pub kappa: f64,
    pub efficiency: f64,
    pub bs_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeAllocSolution {
    pub tau1: f64,
    pub tau2: f64,
    pub f: Vec<f64>,
    pub objective: f64,
    /// Neither offloading nor harvesting has any value.
    pub degenerate: bool,
}

impl TimeAllocProblem {
    pub fn from_model(model: &SystemModel, rate: f64, gains: Vec<f64>, p: Vec<f64>) -> Self {
        let c = &model.config;
        Self {
            rate,
            gains,
            p,
            frame: c.frame_duration,
            cycles_per_bit: c.cycles_per_bit,
            kappa: c.chip_kappa,
            efficiency: c.harvest_efficiency,
            bs_power: c.bs_power,
        }
    }

    fn harvest_rate(&self, k: usize) -> f64 {
        self.efficiency * self.bs_power * self.gains[k]
    }

    /// Largest frequency device `k` can sustain when offloading for `tau2`.
    pub fn frequency(&self, k: usize, tau2: f64) -> f64 {
        let spare = self.harvest_rate(k) * (self.frame - tau2) - self.p[k] * tau2;
        (spare.max(0.0) / (self.frame * self.kappa)).cbrt()
    }

    pub fn frequencies(&self, tau2: f64) -> Vec<f64> {
        (0..self.gains.len()).map(|k| self.frequency(k, tau2)).collect()
    }

    /// Capacity as a function of the offloading time alone.
    pub fn reduced_objective(&self, tau2: f64) -> f64 {
        let local: f64 = (0..self.gains.len()).map(|k| self.frequency(k, tau2)).sum();
        self.rate * tau2 + self.frame / self.cycles_per_bit * local
    }

    /// `dφ/dτ2`; devices at zero frequency contribute nothing.
    pub fn reduced_derivative(&self, tau2: f64) -> f64 {
        let scale = (self.frame * self.kappa).cbrt();
        let local: f64 = (0..self.gains.len())
            .map(|k| {
                let h = self.harvest_rate(k);
                let spare = h * (self.frame - tau2) - self.p[k] * tau2;
                if spare > 0.0 {
                    -(h + self.p[k]) / (3.0 * scale * spare.powf(2.0 / 3.0))
                } else {
                    0.0
                }
            })
            .sum();
        self.rate + self.frame / self.cycles_per_bit * local
    }

    /// Longest offloading phase every device can still power.
    pub fn max_offload_time(&self) -> f64 {
        (0..self.gains.len())
            .filter(|&k| self.p[k] > 0.0)
            .map(|k| {
                let h = self.harvest_rate(k);
                self.frame * h / (self.p[k] + h)
            })
            .fold(self.frame, f64::min)
    }
}

/// Default search tolerance relative to the frame length.
pub const TIME_TOL: f64 = 1e-10;

pub fn solve_time_alloc(prob: &TimeAllocProblem, tol: f64) -> TimeAllocSolution {
    let frame = prob.frame;
    if prob.rate <= 0.0 && prob.gains.iter().all(|&h| h <= 0.0) {
        return TimeAllocSolution {
            tau1: frame,
            tau2: 0.0,
            f: vec![0.0; prob.gains.len()],
            objective: 0.0,
            degenerate: true,
        };
    }
    let upper = prob.max_offload_time().clamp(0.0, frame);
    let (tau2, objective) = if upper > 0.0 {
        let coarse = golden_section_max(|t| prob.reduced_objective(t), 0.0, upper, tol);
        // the objective is flat to rounding near the optimum; the derivative
        // is monotone, so bisect its sign change to pin the stationary point
        let polished = polish_stationary(prob, 0.0, upper);
        let fine = (polished, prob.reduced_objective(polished));
        // golden only wins when it beats the stationary point by more than
        // rounding, which can happen when the derivative is poorly scaled
        if fine.1 >= coarse.1 - 1e-12 * coarse.1.abs() {
            fine
        } else {
            coarse
        }
    } else {
        (0.0, prob.reduced_objective(0.0))
    };
    TimeAllocSolution {
        tau1: frame - tau2,
        tau2,
        f: prob.frequencies(tau2),
        objective,
        degenerate: false,
    }
}

fn polish_stationary(prob: &TimeAllocProblem, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    if prob.reduced_derivative(lo) <= 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if prob.reduced_derivative(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Per-slot CPU frequency for a device that owns one offloading slot of
/// length `slot` and harvested `energy` joules. Returns `(f, p)`.
pub fn solve_slot_device(
    model: &SystemModel,
    energy: f64,
    uplink_gain: f64,
    slot: f64,
    num_antennas: usize,
) -> (f64, f64) {
    let c = &model.config;
    let fmax = (energy.max(0.0) / (c.frame_duration * c.chip_kappa)).cbrt();
    let power = |f: f64| {
        if slot > 0.0 {
            ((energy - c.frame_duration * c.chip_kappa * f.powi(3)) / slot).max(0.0)
        } else {
            0.0
        }
    };
    let value = |f: f64| {
        slot * model.single_rate(power(f), uplink_gain, num_antennas)
            + c.frame_duration * f / c.cycles_per_bit
    };
    if fmax <= 0.0 {
        return (0.0, power(0.0));
    }
    let (f, _) = golden_section_max(value, 0.0, fmax, 1e-12 * fmax);
    (f, power(f))
}
