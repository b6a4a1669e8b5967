//! Electrode layout: channel names, scalp coordinates and the cortical
//! region partition used by the spatial encoder.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_REGIONS: &str = include_str!("../data/regions_32.json");
const DEFAULT_ELECTRODES: &str = include_str!("../data/electrodes_32.json");

#[derive(Debug, Error)]
pub enum MontageError {
    #[error("region map is empty")]
    NoRegions,
    #[error("region `{0}` has no channels")]
    EmptyRegion(String),
    #[error("channel {channel} in region `{region}` is out of range for {n} channels")]
    ChannelOutOfRange {
        region: String,
        channel: usize,
        n: usize,
    },
    #[error("channel {channel} appears in both `{first}` and `{second}`")]
    Overlap {
        channel: usize,
        first: String,
        second: String,
    },
    #[error("channels {0:?} are not assigned to any region")]
    Uncovered(Vec<usize>),
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("electrode file lists {names} names but {coords} coordinates")]
    CoordCount { names: usize, coords: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub channels: Vec<usize>,
}

/// Disjoint, exhaustive grouping of channel indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMap {
    pub regions: Vec<Region>,
}

impl RegionMap {
    /// Nine regions over the 32-channel layout of [`Electrodes::default_32`].
    pub fn default_32() -> Self {
        let map: RegionMap =
            serde_json::from_str(DEFAULT_REGIONS).expect("bundled region map is valid JSON");
        map.validate(32).expect("bundled region map is a partition");
        map
    }

    pub fn load(path: &Path) -> Result<Self, MontageError> {
        let text = std::fs::read_to_string(path).map_err(|source| MontageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| MontageError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    /// A single region holding every channel.
    pub fn single(n: usize) -> Self {
        Self {
            regions: vec![Region {
                name: "all".into(),
                channels: (0..n).collect(),
            }],
        }
    }

    /// Contiguous chunks of roughly equal size. Used for reduced layouts.
    pub fn contiguous(n: usize, regions: usize) -> Self {
        assert!(regions >= 1 && regions <= n, "need 1 <= regions <= n");
        let base = n / regions;
        let extra = n % regions;
        let mut start = 0;
        let regions = (0..regions)
            .map(|r| {
                let len = base + usize::from(r < extra);
                let region = Region {
                    name: format!("region-{r}"),
                    channels: (start..start + len).collect(),
                };
                start += len;
                region
            })
            .collect();
        Self { regions }
    }

    pub fn validate(&self, n: usize) -> Result<(), MontageError> {
        if self.regions.is_empty() {
            return Err(MontageError::NoRegions);
        }
        let mut owner: Vec<Option<&str>> = vec![None; n];
        for r in &self.regions {
            if r.channels.is_empty() {
                return Err(MontageError::EmptyRegion(r.name.clone()));
            }
            for &c in &r.channels {
                if c >= n {
                    return Err(MontageError::ChannelOutOfRange {
                        region: r.name.clone(),
                        channel: c,
                        n,
                    });
                }
                if let Some(first) = owner[c] {
                    return Err(MontageError::Overlap {
                        channel: c,
                        first: first.to_string(),
                        second: r.name.clone(),
                    });
                }
                owner[c] = Some(&r.name);
            }
        }
        let missing: Vec<usize> = (0..n).filter(|&c| owner[c].is_none()).collect();
        if !missing.is_empty() {
            return Err(MontageError::Uncovered(missing));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.regions.iter().map(|r| r.channels.len()).sum()
    }

    /// Region index of every channel.
    pub fn region_of_channels(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_channels()];
        for (i, r) in self.regions.iter().enumerate() {
            for &c in &r.channels {
                out[c] = i;
            }
        }
        out
    }

    /// Sorted union of the channels of the named regions.
    pub fn channels_of(&self, names: &[&str]) -> Result<Vec<usize>, MontageError> {
        let mut set = BTreeSet::new();
        for name in names {
            let region = self
                .regions
                .iter()
                .find(|r| r.name == *name)
                .ok_or_else(|| MontageError::UnknownRegion(name.to_string()))?;
            set.extend(region.channels.iter().copied());
        }
        Ok(set.into_iter().collect())
    }

    pub fn names(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.name.clone()).collect()
    }
}

/// Channel names with unit-sphere positions (x right, y front, z up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrodes {
    pub channels: Vec<String>,
    pub coords: Vec<[f64; 3]>,
}

impl Electrodes {
    pub fn default_32() -> Self {
        let e: Electrodes =
            serde_json::from_str(DEFAULT_ELECTRODES).expect("bundled electrodes are valid JSON");
        assert_eq!(e.channels.len(), e.coords.len());
        e
    }

    pub fn load(path: &Path) -> Result<Self, MontageError> {
        let text = std::fs::read_to_string(path).map_err(|source| MontageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let e: Electrodes = serde_json::from_str(&text).map_err(|source| MontageError::Json {
            path: path.display().to_string(),
            source,
        })?;
        if e.channels.len() != e.coords.len() {
            return Err(MontageError::CoordCount {
                names: e.channels.len(),
                coords: e.coords.len(),
            });
        }
        Ok(e)
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.coords[a], self.coords[b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    }
}

/// Region names that receive the class signal in synthetic data by default.
pub const PLANTED_REGIONS: [&str; 4] = [
    "frontal-left",
    "frontal-midline",
    "frontal-right",
    "temporal-right",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_map_partitions_32_channels() {
        let map = RegionMap::default_32();
        assert_eq!(map.len(), 9);
        assert_eq!(map.n_channels(), 32);
        let e = Electrodes::default_32();
        let name = |c: usize| e.channels[c].as_str();
        let parietal = &map.regions[7];
        assert_eq!(parietal.name, "parietal");
        let mut names: Vec<&str> = parietal.channels.iter().map(|&c| name(c)).collect();
        names.sort();
        assert_eq!(names, ["CP1", "CP2", "P3", "P4", "Pz"]);
    }

    #[test]
    fn validation_errors() {
        let bad = RegionMap {
            regions: vec![
                Region { name: "a".into(), channels: vec![0, 1] },
                Region { name: "b".into(), channels: vec![1] },
            ],
        };
        assert!(matches!(bad.validate(2), Err(MontageError::Overlap { channel: 1, .. })));
        let gap = RegionMap {
            regions: vec![Region { name: "a".into(), channels: vec![0] }],
        };
        assert!(matches!(gap.validate(3), Err(MontageError::Uncovered(v)) if v == vec![1, 2]));
        let empty = RegionMap {
            regions: vec![Region { name: "a".into(), channels: vec![] }],
        };
        assert!(matches!(empty.validate(0), Err(MontageError::EmptyRegion(_))));
        assert!(matches!(
            RegionMap::single(2).validate(1),
            Err(MontageError::ChannelOutOfRange { channel: 1, .. })
        ));
    }

    #[test]
    fn contiguous_split() {
        let map = RegionMap::contiguous(7, 3);
        map.validate(7).unwrap();
        assert_eq!(map.regions[0].channels, vec![0, 1, 2]);
        assert_eq!(map.region_of_channels(), vec![0, 0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn neighbouring_electrodes_are_close() {
        let e = Electrodes::default_32();
        let idx = |n: &str| e.channels.iter().position(|c| c == n).unwrap();
        assert!(e.distance(idx("Fp1"), idx("Fp2")) < e.distance(idx("Fp1"), idx("O2")));
    }
}
