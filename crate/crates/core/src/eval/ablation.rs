use std::fmt;
use std::str::FromStr;

use super::EvalError;
use crate::config::TrainConfig;

/// Module switch combinations compared against the full network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Graph attention only.
    Gat,
    /// Temporal attention, no regional stage.
    LtGat,
    /// Regional stage, no temporal attention.
    LsGat,
    /// Everything.
    LtsGat,
    /// Everything except domain adaptation.
    NoDa,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Gat,
        Variant::LtGat,
        Variant::LsGat,
        Variant::LtsGat,
        Variant::NoDa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gat => "GAT",
            Variant::LtGat => "LT-GAT",
            Variant::LsGat => "LS-GAT",
            Variant::LtsGat => "LTS-GAT",
            Variant::NoDa => "-DA",
        }
    }

    /// `base` with the module switches of this variant. Domain adaptation
    /// keeps its setting in `base` except for [`Variant::NoDa`].
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        let (temporal, spatial) = match self {
            Variant::Gat => (false, false),
            Variant::LtGat => (true, false),
            Variant::LsGat => (false, true),
            Variant::LtsGat | Variant::NoDa => (true, true),
        };
        cfg.disable_temporal = !temporal;
        cfg.disable_spatial = !spatial;
        if self == Variant::NoDa {
            cfg.disable_domain_adaptation = true;
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name().to_ascii_lowercase() == key || (key == "no-da" && *v == Variant::NoDa))
            .ok_or_else(|| EvalError::UnknownVariant(s.to_string()))
    }
}
