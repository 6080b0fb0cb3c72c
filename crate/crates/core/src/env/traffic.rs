//! Poisson arrivals and the per-slot transmit/discard rule.
//!
//! Traffic is counted in whole bits. A link can move at most
//! `floor(C · T_s)` bits in a slot; anything above that is discarded and
//! recorded as leftover. Nothing is queued into the next slot.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// Draws `count` independent Poisson(`rate_bps · slot_s`) bit counts.
pub fn draw_arrivals<R: Rng + ?Sized>(
    rng: &mut R,
    rate_bps: f64,
    slot_s: f64,
    count: usize,
) -> Vec<u64> {
    let mean = rate_bps * slot_s;
    if mean <= 0.0 {
        return vec![0; count];
    }
    let poisson = Poisson::new(mean).expect("positive finite Poisson mean");
    (0..count).map(|_| poisson.sample(rng) as u64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transmission {
    /// Realized rate Ψ in bits/s.
    pub rate_bps: f64,
    pub delivered_bits: u64,
    pub leftover_bits: u64,
}

/// Applies the capacity limit to one link.
pub fn transmit_link(arrived_bits: u64, capacity_bps: f64, slot_s: f64) -> Transmission {
    let budget = (capacity_bps * slot_s).floor();
    let budget = if budget.is_finite() && budget > 0.0 {
        budget.min(u64::MAX as f64) as u64
    } else {
        0
    };
    let delivered = arrived_bits.min(budget);
    Transmission {
        rate_bps: delivered as f64 / slot_s,
        delivered_bits: delivered,
        leftover_bits: arrived_bits - delivered,
    }
}

/// Transmits every link; returns per-link results and the slot throughput `Σ Ψ`.
pub fn transmit(arrivals: &[u64], capacities_bps: &[f64], slot_s: f64) -> (Vec<Transmission>, f64) {
    assert_eq!(arrivals.len(), capacities_bps.len(), "one capacity per link");
    let links: Vec<Transmission> = arrivals
        .iter()
        .zip(capacities_bps)
        .map(|(&a, &c)| transmit_link(a, c, slot_s))
        .collect();
    let throughput = links.iter().map(|l| l.rate_bps).sum();
    (links, throughput)
}
