use serde::Serialize;

use crate::error::{Error, Result};

/// Training hyperparameters for one model-size label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizePreset {
    pub label: &'static str,
    pub n_layer: u64,
    pub n_head: u64,
    pub batch_size: u64,
    pub learning_rate: f64,
}

pub const PRESETS: [SizePreset; 5] = [
    SizePreset { label: "20M", n_layer: 8, n_head: 8, batch_size: 96, learning_rate: 0.0015 },
    SizePreset { label: "30M", n_layer: 8, n_head: 8, batch_size: 160, learning_rate: 0.0013 },
    SizePreset { label: "55M", n_layer: 10, n_head: 10, batch_size: 224, learning_rate: 0.0011 },
    SizePreset { label: "100M", n_layer: 14, n_head: 12, batch_size: 320, learning_rate: 0.0009 },
    SizePreset { label: "200M", n_layer: 16, n_head: 16, batch_size: 512, learning_rate: 0.0008 },
];

/// Looks a preset up by label, ignoring ASCII case.
pub fn preset(label: &str) -> Result<SizePreset> {
    PRESETS
        .iter()
        .find(|p| p.label.eq_ignore_ascii_case(label.trim()))
        .copied()
        .ok_or_else(|| Error::UnknownPreset(label.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        let p = preset("100m").unwrap();
        assert_eq!((p.n_layer, p.n_head, p.batch_size), (14, 12, 320));
        assert_eq!(p.learning_rate, 0.0009);
        assert!(matches!(preset("7B"), Err(Error::UnknownPreset(_))));
    }
}
