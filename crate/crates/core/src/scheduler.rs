//! Per-tick downlink resource allocation.
//!
//! One priority ordering is computed per tick and AGVs are served greedily in
//! that order: each gets an MCS for its instantaneous SNR and the RBs that MCS
//! needs, or nothing if those RBs are no longer available.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::link_adaptation::{bler_at, rb_needed, Catalogue, RbBudget};
use crate::stability::{p_instability, StabilityParams, ThresholdTable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    /// Highest probability of instability first, with a per-AGV dynamic
    /// error-probability threshold.
    Instability,
    /// Highest instantaneous SNR first.
    MaxSnr,
    /// Largest control error first.
    ErrorFirst,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Instability, PolicyKind::MaxSnr, PolicyKind::ErrorFirst];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Instability => "instability",
            PolicyKind::MaxSnr => "maxsnr",
            PolicyKind::ErrorFirst => "error",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "instability" => Ok(PolicyKind::Instability),
            "maxsnr" | "max_snr" => Ok(PolicyKind::MaxSnr),
            "error" | "error_first" => Ok(PolicyKind::ErrorFirst),
            other => {
                Err(Error::Config(alloc::format!("unknown policy {other:?} (expected instability, maxsnr or error)")))
            }
        }
    }
}

/// What the scheduler knows about one active AGV at the start of a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: u64,
    pub arrival_tick: u64,
    pub error: f64,
    pub loss_count: u32,
    pub inst_snr: f64,
    pub mean_snr: f64,
    /// Rayleigh-averaged BLER of the AGV's current MCS; only read by the
    /// instability policy.
    pub expected_pe: f64,
}

/// Scheduling context shared by every AGV in a tick.
#[derive(Debug, Clone)]
pub struct SchedulerContext<'a> {
    pub catalogue: &'a Catalogue,
    pub stability: StabilityParams,
    pub thresholds: &'a ThresholdTable,
    pub error_threshold: f64,
    /// Threshold used by the max-SNR and error-first policies.
    pub constant_pe_threshold: f64,
    /// Treat every scheduled transmission as error-free.
    pub ideal_channel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub id: u64,
    pub rb_count: u32,
    /// Catalogue index of the MCS used, `None` when unscheduled.
    pub mcs: Option<usize>,
    pub inst_bler: f64,
    pub scheduled: bool,
    /// No MCS met the threshold and the most robust one was used.
    pub fallback: bool,
    pub pe_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AllocationDecision {
    /// One entry per candidate, in priority order.
    pub allocations: Vec<Allocation>,
}

impl AllocationDecision {
    pub fn rb_used(&self) -> u32 {
        self.allocations.iter().map(|a| a.rb_count).sum()
    }

    pub fn fallback_count(&self) -> usize {
        self.allocations.iter().filter(|a| a.scheduled && a.fallback).count()
    }

    pub fn get(&self, id: u64) -> Option<&Allocation> {
        self.allocations.iter().find(|a| a.id == id)
    }
}

fn priority_key(policy: PolicyKind, c: &Candidate, ctx: &SchedulerContext<'_>) -> Result<f64> {
    Ok(match policy {
        PolicyKind::Instability => {
            let s = &ctx.stability;
            if c.loss_count >= s.n_max {
                1.0
            } else {
                p_instability(c.expected_pe, s.correlation, s.n_max, c.loss_count, s.form)?
            }
        }
        PolicyKind::MaxSnr => c.inst_snr,
        // closest to the threshold first, i.e. smallest |ε_th - ε|
        PolicyKind::ErrorFirst => -(ctx.error_threshold - c.error).abs(),
    })
}

/// Candidate indices in descending priority. Ties go to the earlier arrival,
/// then the lower id.
pub fn priority_order(policy: PolicyKind, candidates: &[Candidate], ctx: &SchedulerContext<'_>) -> Result<Vec<usize>> {
    let keys = candidates.iter().map(|c| priority_key(policy, c, ctx)).collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap_or(Ordering::Equal)
            .then(candidates[a].arrival_tick.cmp(&candidates[b].arrival_tick))
            .then(candidates[a].id.cmp(&candidates[b].id))
    });
    Ok(order)
}

/// Error-probability ceiling for this AGV under `policy`.
pub fn pe_threshold(policy: PolicyKind, c: &Candidate, ctx: &SchedulerContext<'_>) -> f64 {
    match policy {
        PolicyKind::Instability => ctx.thresholds.get(c.loss_count),
        PolicyKind::MaxSnr | PolicyKind::ErrorFirst => ctx.constant_pe_threshold,
    }
}

pub fn allocate_tick(
    policy: PolicyKind,
    candidates: &[Candidate],
    budget: &mut RbBudget,
    ctx: &SchedulerContext<'_>,
) -> Result<AllocationDecision> {
    let order = priority_order(policy, candidates, ctx)?;
    let catalogue = ctx.catalogue;
    let mut allocations = Vec::with_capacity(candidates.len());
    for i in order {
        let c = &candidates[i];
        let threshold = pe_threshold(policy, c, ctx);
        let selected =
            if ctx.ideal_channel { Some(catalogue.len() - 1) } else { catalogue.select(c.inst_snr, threshold) };
        let (mcs, fallback) = match selected {
            Some(m) => (m, false),
            None => (catalogue.most_robust(), true),
        };
        let entry = catalogue.get(mcs);
        let rbs = rb_needed(budget.payload_bits, entry);
        let allocation = if budget.try_assign(c.id, rbs) {
            let inst_bler = if ctx.ideal_channel { 0.0 } else { bler_at(entry, c.inst_snr) };
            Allocation {
                id: c.id,
                rb_count: rbs,
                mcs: Some(mcs),
                inst_bler,
                scheduled: true,
                fallback,
                pe_threshold: threshold,
            }
        } else {
            Allocation {
                id: c.id,
                rb_count: 0,
                mcs: None,
                inst_bler: 1.0,
                scheduled: false,
                fallback,
                pe_threshold: threshold,
            }
        };
        allocations.push(allocation);
    }
    Ok(AllocationDecision { allocations })
}

/// Bernoulli delivery with success probability `1 - inst_bler`. Exactly one
/// uniform is consumed per call, scheduled or not.
pub fn draw_delivery<R: Rng + ?Sized>(allocation: &Allocation, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    allocation.scheduled && u >= allocation.inst_bler
}
