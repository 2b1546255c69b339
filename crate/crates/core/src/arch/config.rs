//! Network hyperparameters as a flat `key=value` record.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub base_channels: usize,
    pub levels: usize,
    pub csc_kernel: usize,
    pub lka_kernel: usize,
    pub lka_dilated_kernel: usize,
    pub lka_dilation: usize,
    pub hda_enabled: bool,
    pub csc_enabled: bool,
    pub lka_enabled: bool,
    pub sdca_enabled: bool,
    pub fdpa_enabled: bool,
    pub alpha_init: f32,
    pub beta_init: f32,
    pub blocks_per_level: usize,
    /// Residual double 3×3 conv at every level of the backbone.
    pub conv_blocks: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            base_channels: 36,
            levels: 3,
            csc_kernel: 31,
            lka_kernel: 5,
            lka_dilated_kernel: 7,
            lka_dilation: 3,
            hda_enabled: true,
            csc_enabled: true,
            lka_enabled: true,
            sdca_enabled: true,
            fdpa_enabled: true,
            alpha_init: 0.0,
            beta_init: 1.0,
            blocks_per_level: 1,
            conv_blocks: true,
        }
    }
}

pub(crate) fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl NetworkConfig {
    pub const KEYS: &'static [&'static str] = &[
        "base_channels",
        "levels",
        "csc_kernel",
        "lka_kernel",
        "lka_dilated_kernel",
        "lka_dilation",
        "hda_enabled",
        "csc_enabled",
        "lka_enabled",
        "sdca_enabled",
        "fdpa_enabled",
        "alpha_init",
        "beta_init",
        "blocks_per_level",
        "conv_blocks",
    ];

    /// Assign one field by name. Returns `Ok(false)` for keys this record
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "base_channels" => self.base_channels = parse_value(key, value)?,
            "levels" => self.levels = parse_value(key, value)?,
            "csc_kernel" => self.csc_kernel = parse_value(key, value)?,
            "lka_kernel" => self.lka_kernel = parse_value(key, value)?,
            "lka_dilated_kernel" => self.lka_dilated_kernel = parse_value(key, value)?,
            "lka_dilation" => self.lka_dilation = parse_value(key, value)?,
            "hda_enabled" => self.hda_enabled = parse_value(key, value)?,
            "csc_enabled" => self.csc_enabled = parse_value(key, value)?,
            "lka_enabled" => self.lka_enabled = parse_value(key, value)?,
            "sdca_enabled" => self.sdca_enabled = parse_value(key, value)?,
            "fdpa_enabled" => self.fdpa_enabled = parse_value(key, value)?,
            "alpha_init" => self.alpha_init = parse_value(key, value)?,
            "beta_init" => self.beta_init = parse_value(key, value)?,
            "blocks_per_level" => self.blocks_per_level = parse_value(key, value)?,
            "conv_blocks" => self.conv_blocks = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("base_channels", self.base_channels.to_string()),
            ("levels", self.levels.to_string()),
            ("csc_kernel", self.csc_kernel.to_string()),
            ("lka_kernel", self.lka_kernel.to_string()),
            ("lka_dilated_kernel", self.lka_dilated_kernel.to_string()),
            ("lka_dilation", self.lka_dilation.to_string()),
            ("hda_enabled", self.hda_enabled.to_string()),
            ("csc_enabled", self.csc_enabled.to_string()),
            ("lka_enabled", self.lka_enabled.to_string()),
            ("sdca_enabled", self.sdca_enabled.to_string()),
            ("fdpa_enabled", self.fdpa_enabled.to_string()),
            ("alpha_init", self.alpha_init.to_string()),
            ("beta_init", self.beta_init.to_string()),
            ("blocks_per_level", self.blocks_per_level.to_string()),
            ("conv_blocks", self.conv_blocks.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.base_channels == 0 {
            return bad("base_channels must be positive".into());
        }
        if self.levels != 3 {
            return bad(format!("levels is fixed at 3, got {}", self.levels));
        }
        for (key, k) in [
            ("csc_kernel", self.csc_kernel),
            ("lka_kernel", self.lka_kernel),
            ("lka_dilated_kernel", self.lka_dilated_kernel),
        ] {
            if k == 0 || k % 2 == 0 {
                return bad(format!("{key} must be odd, got {k}"));
            }
        }
        if self.lka_dilation == 0 || self.blocks_per_level == 0 {
            return bad("lka_dilation and blocks_per_level must be positive".into());
        }
        if !self.alpha_init.is_finite() || !self.beta_init.is_finite() {
            return bad("alpha_init and beta_init must be finite".into());
        }
        Ok(())
    }

    /// `key=value` lines in [`Self::KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            writeln!(out, "{k}={v}").expect("write to string");
        }
        out
    }

    /// Parse [`Self::to_text`] output; every line must name a known key.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = NetworkConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{line}`")))?;
            if !cfg.set(k.trim(), v)? {
                return Err(Error::Config(format!("unknown key `{}`", k.trim())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = NetworkConfig {
            csc_enabled: false,
            alpha_init: 0.25,
            csc_kernel: 15,
            ..Default::default()
        };
        assert_eq!(NetworkConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(cfg.entries().len(), NetworkConfig::KEYS.len());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(NetworkConfig::from_text("csc_kernel=30").is_err());
        assert!(NetworkConfig::from_text("levels=4").is_err());
        assert!(NetworkConfig::from_text("bogus=1").is_err());
        assert!(NetworkConfig::from_text("hda_enabled=maybe").is_err());
    }
}
