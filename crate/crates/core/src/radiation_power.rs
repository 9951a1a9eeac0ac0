//! Radiation-factor optimization and transmit-power recovery.
//!
//! With layouts and times fixed, the weighted harvested energy is the convex
//! quadratic `Σ_k c_k wᵀR_k w` with `R_k = Re(u_k^* u_kᵀ)`. Each successive
//! convex approximation step replaces every `|u_kᵀw|²` by its tangent plane at
//! the current point `ŵ`. Over the unit ball the linearized program is solved
//! exactly by `w = a / ‖a‖` with `a = Σ_k 2 c_k R_k ŵ`.

use num_complex::Complex64;

use crate::channel::PaLayout;
use crate::system_model::{local_compute, SolutionState, SystemModel};

/// Real per-antenna radiation factors, `Σ α_m² ≤ 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RadiationVector {
    pub alpha: Vec<f64>,
}

impl RadiationVector {
    pub fn new(alpha: Vec<f64>) -> Self {
        Self { alpha }
    }

    /// Equal split `1/√M` on every antenna.
    pub fn uniform(m: usize) -> Self {
        let a = 1.0 / (m as f64).sqrt();
        Self { alpha: vec![a; m] }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum()
    }

    /// Flips the global sign so the largest-magnitude factor is non-negative.
    pub fn canonicalize(mut self) -> Self {
        let pivot = self
            .alpha
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            self.alpha.iter_mut().for_each(|a| *a = -*a);
        }
        self
    }
}

/// Per-device quadratic form of the downlink gain.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceChannel {
    /// Downlink phasors over distance, without `η` and `α`.
    pub u: Vec<Complex64>,
    /// `Re(u^* uᵀ)`, row-major `M × M`.
    pub r: Vec<f64>,
    /// Objective weight `g_k β τ1 P_B η²`.
    pub c: f64,
}

impl DeviceChannel {
    pub fn from_phasors(u: Vec<Complex64>, c: f64) -> Self {
        let m = u.len();
        let mut r = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                r[i * m + j] = (u[i].conj() * u[j]).re;
            }
        }
        Self { u, r, c }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `wᵀ R x`.
    pub fn bilinear(&self, w: &[f64], x: &[f64]) -> f64 {
        let m = self.dim();
        (0..m)
            .map(|i| w[i] * (0..m).map(|j| self.r[i * m + j] * x[j]).sum::<f64>())
            .sum()
    }

    /// `|uᵀw|²`, the auxiliary epigraph value `t_k` at equality.
    pub fn gain(&self, w: &[f64]) -> f64 {
        self.u
            .iter()
            .zip(w)
            .map(|(u, a)| u * a)
            .sum::<Complex64>()
            .norm_sqr()
    }

    /// Tangent-plane lower bound of `wᵀRw` at `w_hat`.
    pub fn surrogate(&self, w: &[f64], w_hat: &[f64]) -> f64 {
        2.0 * self.bilinear(w_hat, w) - self.bilinear(w_hat, w_hat)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub devices: Vec<DeviceChannel>,
}

impl EffectiveChannel {
    pub fn dim(&self) -> usize {
        self.devices.first().map_or(0, DeviceChannel::dim)
    }

    /// Weighted harvested-energy objective `Σ_k c_k |u_kᵀw|²`.
    pub fn objective(&self, w: &RadiationVector) -> f64 {
        self.devices.iter().map(|d| d.c * d.gain(&w.alpha)).sum()
    }

    /// Ascent direction `Σ_k 2 c_k R_k ŵ`.
    pub fn linear_coefficients(&self, w_hat: &RadiationVector) -> Vec<f64> {
        let m = w_hat.len();
        let mut a = vec![0.0; m];
        for d in &self.devices {
            for (i, ai) in a.iter_mut().enumerate() {
                let row: f64 = (0..m).map(|j| d.r[i * m + j] * w_hat.alpha[j]).sum();
                *ai += 2.0 * d.c * row;
            }
        }
        a
    }
}

pub fn build_effective_channels(
    model: &SystemModel,
    downlink_layout: &PaLayout,
    uplink_gains: &[f64],
    tau1: f64,
) -> EffectiveChannel {
    let cfg = &model.config;
    let eta = model.channel.consts.eta;
    let scale = cfg.harvest_efficiency * tau1 * cfg.bs_power * eta * eta;
    let devices = model
        .devices
        .iter()
        .zip(uplink_gains)
        .map(|(dev, &g)| {
            let u = downlink_layout
                .xs
                .iter()
                .map(|&x| model.channel.phasor(x, dev))
                .collect();
            DeviceChannel::from_phasors(u, g * scale)
        })
        .collect();
    EffectiveChannel { devices }
}

/// One linearize-and-solve step: the unit vector along the ascent direction.
/// Returns `w_hat` when the direction vanishes.
pub fn sca_step(chan: &EffectiveChannel, w_hat: &RadiationVector) -> RadiationVector {
    let a = chan.linear_coefficients(w_hat);
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return w_hat.clone();
    }
    RadiationVector::new(a.into_iter().map(|x| x / norm).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiationResult {
    pub w: RadiationVector,
    /// Objective at the initial point followed by one entry per step.
    pub trace: Vec<f64>,
}

pub const SCA_MAX_ITERS: usize = 100;
pub const SCA_TOL: f64 = 1e-8;

/// Iterates `sca_step` until the relative objective gain drops below `tol`
/// and returns the best iterate seen, sign-canonicalized (the gain does not
/// depend on the sign of `w`).
pub fn optimize_radiation(
    chan: &EffectiveChannel,
    w_init: &RadiationVector,
    max_iters: usize,
    tol: f64,
) -> RadiationResult {
    let mut best = w_init.clone();
    let mut best_obj = chan.objective(&best);
    let mut trace = vec![best_obj];
    let mut current = best.clone();
    for _ in 0..max_iters {
        let next = sca_step(chan, &current);
        let obj = chan.objective(&next);
        trace.push(obj);
        let gain = obj - best_obj;
        if obj > best_obj {
            best = next.clone();
            best_obj = obj;
        }
        if next == current || gain <= tol * best_obj.abs() {
            break;
        }
        current = next;
    }
    RadiationResult { w: best.canonicalize(), trace }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRecovery {
    pub p: Vec<f64>,
    /// Devices whose harvested energy did not cover local computing.
    pub clamped: Vec<bool>,
    /// Set when the offloading phase has zero length.
    pub no_offload: bool,
}

/// Spends all energy left after local computing on transmission:
/// `p_k = max(0, (E_k − e_k) / t_k)`.
pub fn recover_powers(model: &SystemModel, state: &SolutionState) -> PowerRecovery {
    let k = model.num_devices();
    let tx = state.access.tx_time(state.alloc.tau2, k);
    if !(tx > 0.0) {
        return PowerRecovery { p: vec![0.0; k], clamped: vec![false; k], no_offload: true };
    }
    let harvested = model.harvested_energies(&state.downlink_layout, &state.w, state.alloc.tau1);
    let mut clamped = vec![false; k];
    let p = harvested
        .iter()
        .zip(&state.alloc.f)
        .enumerate()
        .map(|(i, (&e, &f))| {
            let spare = e - local_compute(f, &model.config).1;
            if spare < 0.0 {
                clamped[i] = true;
            }
            (spare / tx).max(0.0)
        })
        .collect();
    PowerRecovery { p, clamped, no_offload: false }
}
