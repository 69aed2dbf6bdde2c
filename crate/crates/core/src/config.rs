use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions and scalars defining one downlink scenario.
///
/// The base station drives `tx_antennas` elements through `tx_chains` RF
/// chains; user `m` receives on `rx_antennas[m]` elements through
/// `rx_chains[m]` chains and decodes `streams[m]` data streams.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemConfig {
    pub users: usize,
    pub tx_antennas: usize,
    pub tx_chains: usize,
    pub rx_antennas: Vec<usize>,
    pub rx_chains: Vec<usize>,
    pub streams: Vec<usize>,
    /// Square-QAM order (power of 4).
    pub qam_order: u32,
    /// Transmit power budget.
    pub power_budget: f64,
    /// Per-user noise standard deviation.
    pub noise_std: Vec<f64>,
    /// Per-user CSI error standard deviation.
    pub csi_error_std: Vec<f64>,
}

impl SystemConfig {
    /// Total number of data streams across users.
    pub fn total_streams(&self) -> usize {
        self.streams.iter().sum()
    }

    /// Index of the first stream of user `m` in the stacked stream vector.
    pub fn stream_offset(&self, m: usize) -> usize {
        self.streams[..m].iter().sum()
    }

    pub fn sum_rx_antennas(&self) -> usize {
        self.rx_antennas.iter().sum()
    }

    pub fn sum_rx_chains(&self) -> usize {
        self.rx_chains.iter().sum()
    }

    /// Sets the power budget from an SNR in dB, with SNR = 10 log10(P_t / σ²)
    /// referenced to the first user's noise level.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        let sigma2 = self.noise_std[0] * self.noise_std[0];
        self.power_budget = sigma2 * 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.users;
        if m == 0 {
            return Err(Error::InvalidConfig("need at least one user".into()));
        }
        for (name, v) in [
            ("rx_antennas", &self.rx_antennas),
            ("rx_chains", &self.rx_chains),
            ("streams", &self.streams),
        ] {
            if v.len() != m {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {} entries for {m} users",
                    v.len()
                )));
            }
        }
        if self.noise_std.len() != m || self.csi_error_std.len() != m {
            return Err(Error::InvalidConfig(
                "noise_std/csi_error_std must have one entry per user".into(),
            ));
        }
        if self.tx_antennas < self.tx_chains {
            return Err(Error::InvalidConfig(
                "tx_antennas must be >= tx_chains".into(),
            ));
        }
        if self.tx_chains < self.total_streams() {
            return Err(Error::InvalidConfig(
                "tx_chains must be >= total streams".into(),
            ));
        }
        for u in 0..m {
            if self.rx_antennas[u] < self.rx_chains[u] || self.rx_chains[u] < self.streams[u] {
                return Err(Error::InvalidConfig(format!(
                    "user {u}: need rx_antennas >= rx_chains >= streams"
                )));
            }
            if self.streams[u] == 0 {
                return Err(Error::InvalidConfig(format!("user {u}: zero streams")));
            }
        }
        if !(self.qam_order >= 4
            && self.qam_order.is_power_of_two()
            && self.qam_order.trailing_zeros() % 2 == 0)
        {
            return Err(Error::InvalidConfig(format!(
                "qam_order {} is not a square power-of-4 QAM size",
                self.qam_order
            )));
        }
        if !(self.power_budget > 0.0) {
            return Err(Error::InvalidConfig("power_budget must be > 0".into()));
        }
        if self.noise_std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidConfig("noise_std entries must be > 0".into()));
        }
        if self.csi_error_std.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::InvalidConfig(
                "csi_error_std entries must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Small configuration sized so that full suites run in minutes.
    pub fn desk() -> Self {
        SystemConfig {
            users: 2,
            tx_antennas: 16,
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

    /// Full-scale configuration: 4 users, 32 BS antennas / 8 chains,
    /// 8 receive antennas / 2 chains and 2 streams per user, 16-QAM.
    pub fn paper() -> Self {
        SystemConfig {
            users: 4,
            tx_antennas: 32,
            tx_chains: 8,
            rx_antennas: vec![8; 4],
            rx_chains: vec![2; 4],
            streams: vec![2; 4],
            qam_order: 16,
            power_budget: 100.0,
            noise_std: vec![1.0; 4],
            csi_error_std: vec![0.1; 4],
        }
    }
}

/// Parameters of the clustered mmWave channel generator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChannelModel {
    pub clusters: usize,
    pub rays_per_cluster: usize,
    /// Standard deviation of the Laplacian per-ray angle bias (radians).
    pub angle_spread: f64,
    /// Cluster center angles are uniform in (-range, range) (radians).
    pub center_angle_range: f64,
    /// Per-element steering phase factor κ in exp(jκ n sinθ); π for
    /// half-wavelength spacing.
    pub spacing_phase: f64,
    /// Maximum Doppler shift in Hz (0 for block-static channels).
    pub doppler_hz: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            clusters: 3,
            rays_per_cluster: 5,
            angle_spread: 5.0_f64.to_radians(),
            center_angle_range: std::f64::consts::PI / 8.0,
            spacing_phase: std::f64::consts::PI,
            doppler_hz: 0.0,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.rays_per_cluster == 0 {
            return Err(Error::InvalidConfig(
                "need at least one cluster and one ray".into(),
            ));
        }
        if !(self.angle_spread >= 0.0) || !(self.center_angle_range >= 0.0) {
            return Err(Error::InvalidConfig("angle parameters must be >= 0".into()));
        }
        if !(self.doppler_hz >= 0.0) {
            return Err(Error::InvalidConfig("doppler_hz must be >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_and_paper_configs_validate() {
        SystemConfig::desk().validate().unwrap();
        SystemConfig::paper().validate().unwrap();
        ChannelModel::default().validate().unwrap();
    }

    #[test]
    fn snr_sets_power_budget() {
        let cfg = SystemConfig::desk().with_snr_db(20.0);
        assert!((cfg.power_budget - 100.0).abs() < 1e-12);
        let cfg = SystemConfig::desk().with_snr_db(0.0);
        assert!((cfg.power_budget - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let mut cfg = SystemConfig::desk();
        cfg.tx_chains = 1; // fewer chains than streams
        assert!(cfg.validate().is_err());

        let mut cfg = SystemConfig::desk();
        cfg.qam_order = 8; // not square QAM
        assert!(cfg.validate().is_err());

        let mut cfg = SystemConfig::desk();
        cfg.rx_chains = vec![5, 2]; // more chains than antennas
        assert!(cfg.validate().is_err());
    }
}
