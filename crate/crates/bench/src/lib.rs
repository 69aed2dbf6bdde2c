//! Shared fixtures for the criterion benchmarks.

use thpmimo_core::channel::sample_channel;
use thpmimo_core::thp::order_users;
use thpmimo_core::{ChannelModel, ChannelSet, Permutation, SystemConfig};

/// Desk-like system with a configurable BS array size, used to expose the
/// O(N_s²R_s²) per-iteration scaling of the analog precoder sweep.
pub fn sized_system(tx_antennas: usize) -> SystemConfig {
    SystemConfig {
        users: 2,
        tx_antennas,
        tx_chains: 4,
        rx_antennas: vec![4, 4],
        rx_chains: vec![2, 2],
        streams: vec![1, 1],
        qam_order: 16,
        power_budget: 100.0,
        noise_std: vec![1.0, 1.0],
        csi_error_std: vec![0.1, 0.1],
    }
}

pub fn fixture(tx_antennas: usize, seed: u64) -> (SystemConfig, ChannelSet, Permutation) {
    let cfg = sized_system(tx_antennas).with_snr_db(20.0);
    let (_, cs) = sample_channel(&cfg, &ChannelModel::default(), seed).unwrap();
    let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
    (cfg, cs, ordering)
}
