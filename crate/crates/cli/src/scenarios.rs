//! Scenarios shipped with the binary.

pub const BUNDLED: &[(&str, &str)] = &[
    (
        "location-normal",
        include_str!("../scenarios/location-normal.toml"),
    ),
    (
        "consistency-linear-normal",
        include_str!("../scenarios/consistency-linear-normal.toml"),
    ),
    (
        "consistency-linear-exponential",
        include_str!("../scenarios/consistency-linear-exponential.toml"),
    ),
    (
        "consistency-exp-normal",
        include_str!("../scenarios/consistency-exp-normal.toml"),
    ),
    (
        "normality-location",
        include_str!("../scenarios/normality-location.toml"),
    ),
    (
        "normality-linear",
        include_str!("../scenarios/normality-linear.toml"),
    ),
    (
        "expansion-location",
        include_str!("../scenarios/expansion-location.toml"),
    ),
    (
        "expansion-linear",
        include_str!("../scenarios/expansion-linear.toml"),
    ),
    (
        "contamination-linear",
        include_str!("../scenarios/contamination-linear.toml"),
    ),
    (
        "contamination-leverage",
        include_str!("../scenarios/contamination-leverage.toml"),
    ),
    (
        "mixture-location",
        include_str!("../scenarios/mixture-location.toml"),
    ),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
