//! Scenario file handling. The scenario is a TOML document whose sections
//! mirror [`SimConfig`]; every key is optional and defaults to the built-in
//! 300 GHz street-canyon preset. Unknown keys are rejected.

use crate::engine::SimConfig;
use crate::error::{Result, SimError};
use std::path::Path;

/// [OP] parse_config — load and validate a scenario file.
pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Config {
        key: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn serialize_config(cfg: &SimConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| SimError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Experiment;
    use crate::mac::Scheme;

    #[test]
    fn empty_file_gives_table_preset() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg.radio.carrier_ghz, 300.0);
        assert_eq!(cfg.radio.bandwidth_ghz, 10.0);
        assert_eq!(cfg.radio.tx_power_dbm, 0.0);
        assert_eq!(cfg.deployment.antenna.tx_gain_db, 30.0);
        assert_eq!(cfg.deployment.antenna.rx_gain_db, 30.0);
        assert_eq!(cfg.canyon.length_m, 200.0);
        assert_eq!(cfg.canyon.lanes_per_direction, 3);
        assert_eq!(cfg.mac.cw_min, 8);
        assert_eq!(cfg.mac.cw_max, 1024);
        assert_eq!(cfg.clock.slot_duration_s, 5e-6);
        assert_eq!(cfg.schemes, Scheme::ALL.to_vec());
    }

    #[test]
    fn invalid_value_names_the_key() {
        let err = parse_config_str("[radio]\nbandwidth_ghz = -1.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bandwidth_ghz"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config_str("[radio]\nbandwidht_ghz = 1.0\n").unwrap_err();
        assert!(matches!(err, SimError::Parse(_)));
    }

    #[test]
    fn roundtrip_is_stable() {
        let mut cfg = parse_config_str("").unwrap();
        cfg.experiment = Experiment::Fig5;
        cfg.replications = 7;
        cfg.master_seed = 99;
        let text = serialize_config(&cfg).unwrap();
        let again = parse_config_str(&text).unwrap();
        let text2 = serialize_config(&again).unwrap();
        assert_eq!(text, text2);
        assert_eq!(again.replications, 7);
        assert_eq!(again.master_seed, 99);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = parse_config_str(
            "[canyon]\nlength_m = 120.0\n\n[mac]\nradar_duty = 0.25\n",
        )
        .unwrap();
        assert_eq!(cfg.canyon.length_m, 120.0);
        assert_eq!(cfg.canyon.lane_width_m, 2.75);
        assert_eq!(cfg.mac.radar_duty, 0.25);
        assert_eq!(cfg.mac.cw_max, 1024);
    }
}
