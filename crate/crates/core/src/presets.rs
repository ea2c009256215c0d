//! Built-in configs shipped with the binary.

use crate::config::{load_str, ConfigError, LoadedConfig};

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        /// `(name, TOML text)` for every built-in preset.
        pub const PRESETS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../presets/", $name, ".toml"))),)*
        ];
    };
}

presets!(
    "fig3",
    "fig4_weak",
    "fig4_mid",
    "fig4_strong",
    "fig5",
    "fig6_strong_near",
    "fig6_strong_far",
    "fig6_weak_near",
    "fig6_weak_far",
    "fig7",
    "fig8",
    "reverse",
    "pumping",
);

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn load(name: &str) -> Option<Result<LoadedConfig, ConfigError>> {
    source(name).map(load_str)
}
