//! MCS catalogue, BLER curves and resource-block arithmetic.

use alloc::format;
use alloc::vec::Vec;

use crate::channel::to_db;
use crate::numerics::{rayleigh_expect, QuadratureSpec};
use crate::{Error, Result};

/// Resource elements per resource block: 12 subcarriers × 7 OFDM symbols.
pub const SYMBOLS_PER_RB: u32 = 12 * 7;

/// Floor applied to every interpolated BLER.
pub const BLER_FLOOR: f64 = 1e-12;

/// BLER sampled against SNR in dB; interpolation is linear in
/// (dB, log10 BLER) and clamps to the end samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BlerCurve {
    snr_db: Vec<f64>,
    log_bler: Vec<f64>,
    bler: Vec<f64>,
}

impl BlerCurve {
    /// `points` must be strictly increasing in SNR with non-increasing BLER
    /// in `[0, 1]`.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("BLER curve has no samples".into()));
        }
        for (i, &(snr, bler)) in points.iter().enumerate() {
            if !snr.is_finite() {
                return Err(Error::Config(format!("sample {i}: SNR must be finite")));
            }
            if !(0.0..=1.0).contains(&bler) {
                return Err(Error::Config(format!("sample {i}: BLER {bler} outside [0, 1]")));
            }
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config(format!("samples {i} and {}: SNR not strictly increasing", i + 1)));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::Config(format!("samples {i} and {}: BLER increases with SNR", i + 1)));
            }
        }
        let bler: Vec<f64> = points.iter().map(|p| p.1.max(BLER_FLOOR)).collect();
        Ok(Self {
            snr_db: points.iter().map(|p| p.0).collect(),
            log_bler: bler.iter().map(|&b| libm::log10(b)).collect(),
            bler,
        })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.snr_db.iter().copied().zip(self.bler.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.snr_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snr_db.is_empty()
    }

    pub fn at_db(&self, snr_db: f64) -> f64 {
        let n = self.snr_db.len();
        let value = if !(snr_db > self.snr_db[0]) {
            self.bler[0]
        } else if snr_db >= self.snr_db[n - 1] {
            self.bler[n - 1]
        } else {
            // first sample strictly above snr_db
            let hi = self.snr_db.partition_point(|&s| s <= snr_db);
            let lo = hi - 1;
            let t = (snr_db - self.snr_db[lo]) / (self.snr_db[hi] - self.snr_db[lo]);
            let log_b = self.log_bler[lo] + t * (self.log_bler[hi] - self.log_bler[lo]);
            libm::pow(10.0, log_b)
        };
        value.clamp(BLER_FLOOR, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsEntry {
    pub id: u32,
    pub modulation_order: u32,
    pub code_rate: f64,
    pub curve: BlerCurve,
}

impl McsEntry {
    pub fn new(id: u32, modulation_order: u32, code_rate: f64, curve: BlerCurve) -> Result<Self> {
        if !matches!(modulation_order, 4 | 16 | 64) {
            return Err(Error::Config(format!("MCS {id}: modulation order {modulation_order} not in {{4, 16, 64}}")));
        }
        if !(code_rate > 0.0 && code_rate <= 1.0) {
            return Err(Error::Config(format!("MCS {id}: code rate {code_rate} outside (0, 1]")));
        }
        Ok(Self { id, modulation_order, code_rate, curve })
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.modulation_order.trailing_zeros()
    }

    /// Information bits per resource element, `R log2 M`.
    pub fn spectral_efficiency(&self) -> f64 {
        self.code_rate * self.bits_per_symbol() as f64
    }
}

/// Smallest RB count that carries `payload_bits` at this MCS:
/// `ceil(D / (84 log2 M R))`.
pub fn rb_needed(payload_bits: u32, mcs: &McsEntry) -> u32 {
    let per_rb = SYMBOLS_PER_RB as f64 * mcs.spectral_efficiency();
    let exact = payload_bits as f64 / per_rb;
    // absorb representation error of rates such as 1/3
    libm::ceil(exact - 1e-9).max(0.0) as u32
}

/// Code rate needed to fit `payload_bits` into `rbs` blocks at modulation
/// order `m`.
pub fn required_code_rate(payload_bits: u32, rbs: u32, modulation_order: u32) -> f64 {
    payload_bits as f64 / (SYMBOLS_PER_RB as f64 * rbs as f64 * modulation_order.trailing_zeros() as f64)
}

pub fn bler_at(mcs: &McsEntry, snr_linear: f64) -> f64 {
    let snr_db = if snr_linear > 0.0 { to_db(snr_linear) } else { f64::NEG_INFINITY };
    mcs.curve.at_db(snr_db)
}

/// BLER averaged over Rayleigh fading with mean SNR `gamma_b`.
pub fn expected_bler(mcs: &McsEntry, gamma_b: f64, spec: &QuadratureSpec) -> Result<f64> {
    rayleigh_expect(|g| bler_at(mcs, g), gamma_b, spec)
}

/// MCS entries ordered by spectral efficiency (then id).
#[derive(Debug, Clone, PartialEq)]
pub struct Catalogue {
    entries: Vec<McsEntry>,
}

impl Catalogue {
    pub fn new(mut entries: Vec<McsEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("MCS catalogue is empty".into()));
        }
        entries.sort_by(|a, b| a.spectral_efficiency().total_cmp(&b.spectral_efficiency()).then(a.id.cmp(&b.id)));
        for w in entries.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::Config(format!("duplicate MCS id {}", w[0].id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> &McsEntry {
        &self.entries[index]
    }

    /// Index of the lowest-efficiency entry.
    pub fn most_robust(&self) -> usize {
        0
    }

    /// Highest-efficiency entry whose BLER at `snr_linear` is strictly below
    /// `pe_threshold`.
    pub fn select(&self, snr_linear: f64, pe_threshold: f64) -> Option<usize> {
        self.entries.iter().rposition(|e| bler_at(e, snr_linear) < pe_threshold)
    }

    /// Most robust entry that fits in `rbs` blocks; the most efficient entry
    /// when none fits.
    pub fn fitting(&self, payload_bits: u32, rbs: u32) -> usize {
        self.entries.iter().position(|e| rb_needed(payload_bits, e) <= rbs).unwrap_or(self.entries.len() - 1)
    }
}

pub fn select_mcs(catalogue: &Catalogue, snr_linear: f64, pe_threshold: f64) -> Option<&McsEntry> {
    catalogue.select(snr_linear, pe_threshold).map(|i| catalogue.get(i))
}

/// Per-tick resource-block budget.
#[derive(Debug, Clone, PartialEq)]
pub struct RbBudget {
    pub payload_bits: u32,
    pub total_rb: u32,
    pub allocated: Vec<(u64, u32)>,
}

impl RbBudget {
    pub fn new(total_rb: u32, payload_bits: u32) -> Self {
        Self { payload_bits, total_rb, allocated: Vec::new() }
    }

    pub fn used(&self) -> u32 {
        self.allocated.iter().map(|a| a.1).sum()
    }

    pub fn remaining(&self) -> u32 {
        self.total_rb - self.used()
    }

    /// Assigns `rbs` to `agv` if they fit; never assigns a partial count.
    pub fn try_assign(&mut self, agv: u64, rbs: u32) -> bool {
        if rbs <= self.remaining() {
            self.allocated.push((agv, rbs));
            true
        } else {
            false
        }
    }
}

/// Exponential waterfall `BLER(γ) = min(1, exp(-slope (γ_dB - onset)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waterfall {
    pub slope_per_db: f64,
    pub onset_db: f64,
}

impl Waterfall {
    pub fn bler_db(&self, snr_db: f64) -> f64 {
        libm::exp(-self.slope_per_db * (snr_db - self.onset_db)).min(1.0)
    }

    /// Samples on a 0.5 dB grid from 2 dB below the onset until the curve
    /// reaches the BLER floor.
    pub fn sample(&self) -> Vec<(f64, f64)> {
        let first = libm::floor(2.0 * (self.onset_db - 2.0)) / 2.0;
        let last = self.onset_db - libm::log(BLER_FLOOR) / self.slope_per_db + 0.5;
        let mut points = Vec::new();
        let mut snr = first;
        while snr <= last {
            points.push((snr, self.bler_db(snr).max(BLER_FLOOR)));
            snr += 0.5;
        }
        points
    }
}

/// `(id, M, R, waterfall)` for the shipped nine-entry table.
///
/// Every entry reaches 10% BLER at the Shannon limit of its spectral
/// efficiency plus an implementation gap of 2 dB (QPSK), 2.5 dB (16QAM) or
/// 3 dB (64QAM). All slopes are 1.5 per dB, so the onset sits
/// `ln 10 / 1.5 = 1.535` dB below the 10% point.
pub const DEFAULT_TABLE: [(u32, u32, f64, Waterfall); 9] = [
    (0, 4, 1.0 / 3.0, Waterfall { slope_per_db: 1.5, onset_db: -1.8 }),
    (1, 4, 1.0 / 2.0, Waterfall { slope_per_db: 1.5, onset_db: 0.5 }),
    (2, 4, 3.0 / 4.0, Waterfall { slope_per_db: 1.5, onset_db: 3.1 }),
    (3, 16, 1.0 / 3.0, Waterfall { slope_per_db: 1.5, onset_db: 2.8 }),
    (4, 16, 1.0 / 2.0, Waterfall { slope_per_db: 1.5, onset_db: 5.7 }),
    (5, 16, 3.0 / 4.0, Waterfall { slope_per_db: 1.5, onset_db: 9.4 }),
    (6, 64, 1.0 / 3.0, Waterfall { slope_per_db: 1.5, onset_db: 6.2 }),
    (7, 64, 1.0 / 2.0, Waterfall { slope_per_db: 1.5, onset_db: 9.9 }),
    (8, 64, 3.0 / 4.0, Waterfall { slope_per_db: 1.5, onset_db: 14.8 }),
];

pub fn default_catalogue() -> Catalogue {
    let entries = DEFAULT_TABLE
        .iter()
        .map(|&(id, m, r, w)| {
            let curve = BlerCurve::new(&w.sample()).expect("waterfall samples are monotone");
            McsEntry::new(id, m, r, curve).expect("default table is valid")
        })
        .collect();
    Catalogue::new(entries).expect("default table is valid")
}
