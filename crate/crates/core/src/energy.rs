//! eNodeB energy spent on Random Access Response (RAR) messages.
//!
//! Each detected preamble is answered by a 56-bit RAR (MAC subheader plus
//! payload) sent with QPSK inside the RAR window. A subframe carries at most
//! `N_max` RARs; its energy follows the linear load model
//! `(P_o + k δ P_t) 10^-3` J for `k` loaded PRB pairs.

use serde::{Deserialize, Serialize};

use crate::analytic::SlotTrace;
use crate::error::{Error, Result};

/// Bits per RAR: one byte of MAC subheader and six bytes of RAR payload.
pub const RAR_BITS: u32 = 56;
/// RAR information bits a single subframe may carry regardless of bandwidth.
pub const MAX_RAR_BITS_PER_SUBFRAME: u32 = 2216;
/// Highest admissible RAR information bits per modulated symbol.
pub const MAX_MCS_RATE: f64 = 0.930;
const PRB_BANDWIDTH_MHZ: f64 = 0.180;

/// How real-valued expected successes enter the RAR energy of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuccessRounding {
    /// Use `E[S_i]` as is; the subframe count takes its ceiling.
    #[default]
    Real,
    /// Round `E[S_i]` to the nearest integer first.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub bandwidth_mhz: f64,
    pub mcs_rate: f64,
    pub data_symbols_per_prb: u32,
    pub prb_per_subframe: u32,
    pub rar_window_subframes: u32,
    pub fixed_power_w: f64,
    pub prb_transmit_power_w: f64,
    pub pa_efficiency: f64,
    pub success_rounding: SuccessRounding,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl EnergyConfig {
    /// 5 MHz cell with 25 PRBs, code rate 0.930, 120 data symbols per PRB,
    /// a 5-subframe RAR window and the 170 W / 0.8 W / 30 % power model.
    pub fn reference() -> Self {
        Self {
            bandwidth_mhz: 5.0,
            mcs_rate: 0.930,
            data_symbols_per_prb: 120,
            prb_per_subframe: 25,
            rar_window_subframes: 5,
            fixed_power_w: 170.0,
            prb_transmit_power_w: 0.8,
            pa_efficiency: 0.3,
            success_rounding: SuccessRounding::Real,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_mhz > 0.0 && self.bandwidth_mhz.is_finite()) {
            return Err(Error::domain("bandwidth_mhz", format!("must be positive, got {}", self.bandwidth_mhz)));
        }
        if !(self.mcs_rate > 0.0 && self.mcs_rate <= MAX_MCS_RATE) {
            return Err(Error::domain(
                "mcs_rate",
                format!("must lie in (0, {MAX_MCS_RATE}], got {}", self.mcs_rate),
            ));
        }
        if self.data_symbols_per_prb == 0 {
            return Err(Error::domain("data_symbols_per_prb", "must be positive"));
        }
        let prb_limit = self.prb_limit();
        if self.prb_per_subframe == 0 || self.prb_per_subframe > prb_limit {
            return Err(Error::domain(
                "prb_per_subframe",
                format!(
                    "{} must lie in [1, {prb_limit}] for {} MHz (bandwidth / 180 kHz)",
                    self.prb_per_subframe, self.bandwidth_mhz
                ),
            ));
        }
        if self.rar_window_subframes == 0 {
            return Err(Error::domain("rar_window_subframes", "must be positive"));
        }
        for (field, v) in [
            ("fixed_power_w", self.fixed_power_w),
            ("prb_transmit_power_w", self.prb_transmit_power_w),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(field, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.pa_efficiency > 0.0 && self.pa_efficiency <= 1.0) {
            return Err(Error::domain(
                "pa_efficiency",
                format!("must lie in (0, 1], got {}", self.pa_efficiency),
            ));
        }
        Ok(())
    }

    /// Largest PRB count the bandwidth admits, `floor(B / 180 kHz)`.
    pub fn prb_limit(&self) -> u32 {
        // Nudge guards exact multiples against representation error.
        (self.bandwidth_mhz / PRB_BANDWIDTH_MHZ + 1e-9).floor() as u32
    }

    /// Physical bits needed per RAR, `ceil(56 / M_cs)`.
    pub fn physical_bits_per_rar(&self) -> u32 {
        (RAR_BITS as f64 / self.mcs_rate - 1e-9).ceil() as u32
    }

    /// RARs one PRB pair can hold, `2 D_s M_cs / 56` (not rounded).
    pub fn rars_per_prb(&self) -> f64 {
        2.0 * self.data_symbols_per_prb as f64 * self.mcs_rate / RAR_BITS as f64
    }

    /// PRB pairs occupied by `rars` RAR messages.
    pub fn prb_pairs_for(&self, rars: f64) -> f64 {
        rars / self.rars_per_prb()
    }
}

/// Subframe cap from the 2216-bit limit: 39 RARs.
pub fn rar_cap_per_subframe() -> u32 {
    MAX_RAR_BITS_PER_SUBFRAME / RAR_BITS
}

/// Maximum RARs per subframe: `min(floor(2 D_s M_cs N_prb / 56), 39)`.
pub fn max_rars_per_subframe(config: &EnergyConfig) -> u32 {
    let by_resources = (config.rars_per_prb() * config.prb_per_subframe as f64 + 1e-9).floor() as u32;
    by_resources.min(rar_cap_per_subframe())
}

/// Subframes needed to answer `successes` devices, `ceil(r / N_max)`.
pub fn rar_subframes(successes: f64, max_per_subframe: u32) -> u32 {
    if successes <= 0.0 || max_per_subframe == 0 {
        return 0;
    }
    (successes / max_per_subframe as f64).ceil() as u32
}

/// Energy of one TTI with `prb_pairs` loaded PRB pairs, in joules.
pub fn tti_energy(prb_pairs: f64, config: &EnergyConfig) -> f64 {
    (config.fixed_power_w + prb_pairs * config.pa_efficiency * config.prb_transmit_power_w) * 1e-3
}

/// Energy to answer `successes` devices within one RAR window, in joules.
/// Subframes beyond the window are not charged; those devices back off.
pub fn rar_burst_energy(successes: f64, config: &EnergyConfig) -> f64 {
    if successes <= 0.0 {
        return 0.0;
    }
    let cap = max_rars_per_subframe(config);
    let charged = rar_subframes(successes, cap).min(config.rar_window_subframes);
    let cap = cap as f64;
    (0..charged)
        .map(|j| {
            let sent = (successes - j as f64 * cap).min(cap);
            tti_energy(config.prb_pairs_for(sent), config)
        })
        .sum()
}

/// RAR energy of one slot's expected successes under the configured rounding.
pub fn slot_energy(expected_successes: f64, config: &EnergyConfig) -> f64 {
    let r = match config.success_rounding {
        SuccessRounding::Real => expected_successes,
        SuccessRounding::Nearest => expected_successes.round(),
    };
    rar_burst_energy(r, config)
}

/// Mean eNodeB RAR energy over an access cycle, in joules.
pub fn cycle_energy(trace: &SlotTrace, config: &EnergyConfig) -> f64 {
    trace
        .rows
        .iter()
        .map(|row| slot_energy(row.expected_successes, config))
        .sum()
}
