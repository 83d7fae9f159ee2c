use core::str::FromStr;

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::geometry::PointCloud;
use crate::rng;

/// Simplified sensor corruptions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    BeamMissing,
    Jitter,
    RangeCut,
}

impl Corruption {
    pub const ALL: [Self; 3] = [Self::BeamMissing, Self::Jitter, Self::RangeCut];

    pub fn name(self) -> &'static str {
        match self {
            Self::BeamMissing => "beam-missing",
            Self::Jitter => "jitter",
            Self::RangeCut => "range-cut",
        }
    }
}

impl FromStr for Corruption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beam-missing" => Ok(Self::BeamMissing),
            "jitter" => Ok(Self::Jitter),
            "range-cut" => Ok(Self::RangeCut),
            other => Err(config_err!("unknown corruption `{}`", other)),
        }
    }
}

/// Severity level 1 (light) to 3 (heavy).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Severity(u8);

impl Severity {
    pub const ALL: [Self; 3] = [Self(1), Self(2), Self(3)];

    pub fn new(level: u8) -> Result<Self> {
        if (1..=3).contains(&level) {
            Ok(Self(level))
        } else {
            Err(config_err!("severity must be 1, 2 or 3, got {}", level))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    fn pick(self, values: [f64; 3]) -> f64 {
        values[usize::from(self.0 - 1)]
    }
}

/// Drops beam `b` when its 1-based number `b + 1` equals `round(m·k)` for
/// some integer `m ≥ 1` (every k-th beam, with fractional `k` allowed).
pub fn drop_beams(cloud: &PointCloud, every: f64) -> PointCloud {
    let dropped = |beam: u16| {
        let n = f64::from(beam) + 1.0;
        let m_lo = ((n - 0.5) / every).floor().max(1.0);
        let m_hi = ((n + 0.5) / every).ceil();
        let mut m = m_lo;
        while m <= m_hi {
            if (m * every).round() == n {
                return true;
            }
            m += 1.0;
        }
        false
    };
    PointCloud {
        points: cloud.points.iter().filter(|p| !dropped(p.beam)).copied().collect(),
    }
}

/// Adds zero-mean Gaussian noise with standard deviation `sigma` to xyz.
pub fn jitter(cloud: &PointCloud, sigma: f64, seed: u64) -> PointCloud {
    if sigma == 0.0 {
        return cloud.clone();
    }
    let mut r = rng::for_purpose(seed, "jitter");
    let mut out = cloud.clone();
    for p in &mut out.points {
        for v in &mut p.xyz {
            let n: f64 = r.sample(StandardNormal);
            *v += sigma * n;
        }
    }
    out
}

/// Removes points farther than `max_range`.
pub fn range_cut(cloud: &PointCloud, max_range: f64) -> PointCloud {
    PointCloud {
        points: cloud
            .points
            .iter()
            .filter(|p| p.depth() <= max_range)
            .copied()
            .collect(),
    }
}

/// Applies `kind` at `severity`:
/// beam-missing drops every 4th/2nd/1.5th beam, jitter uses
/// σ = 0.02/0.05/0.10 m, range-cut keeps points within 40/30/20 m.
pub fn corrupt(cloud: &PointCloud, kind: Corruption, severity: Severity, seed: u64) -> PointCloud {
    match kind {
        Corruption::BeamMissing => drop_beams(cloud, severity.pick([4.0, 2.0, 1.5])),
        Corruption::Jitter => jitter(cloud, severity.pick([0.02, 0.05, 0.10]), seed),
        Corruption::RangeCut => range_cut(cloud, severity.pick([40.0, 30.0, 20.0])),
    }
}
