//! Bundled case-study configurations.

/// Two-state system with a soft bound on the discounted second-state
/// variance.
pub const TWO_STATE: &str = include_str!("../configs/two_state.json");

/// Eight-state coaxial-helicopter hover model with a discounted
/// control-energy bound.
pub const HELICOPTER: &str = include_str!("../configs/helicopter.json");

