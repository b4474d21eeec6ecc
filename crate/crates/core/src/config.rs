//! Hyperparameter presets and the full pipeline configuration.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contour::Axis;
use crate::curvature::{ScaleSet, DEFAULT_HOCS_BINS};
use crate::descriptors::{DEFAULT_DIM, DEFAULT_KEYPOINTS};
use crate::dtw::AlignmentConfig;
use crate::error::{Error, Result};
use crate::evaluation::{FeatureConfig, MatcherConfig, DEFAULT_EDGE_POINTS};
use crate::lnbnn::{IndexConfig, DEFAULT_K, DEFAULT_LEAF_SIZE, DEFAULT_TREES};
use crate::weights::{SpatialWeights, DEFAULT_DEGREE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Dorsal fins: 128 columns, band 8, scales 0.04..0.10 of fin height.
    Bottlenose,
    /// Flukes: 748 columns, band 75, scales 0.02..0.08 of fluke width.
    Humpback,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bottlenose" => Ok(Self::Bottlenose),
            "humpback" => Ok(Self::Humpback),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatcherKind {
    Dtw,
    Lnbnn,
    Hocs,
}

impl FromStr for MatcherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dtw" => Ok(Self::Dtw),
            "lnbnn" => Ok(Self::Lnbnn),
            "hocs" => Ok(Self::Hocs),
            other => Err(Error::Config(format!("unknown matcher {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub edge_points: usize,
    pub scales: Vec<f64>,
    pub axis: Axis,
    pub band: Option<usize>,
    pub resample_to: usize,
    pub keypoints: usize,
    pub dim: usize,
    pub k: usize,
    pub trees: usize,
    pub leaf_size: usize,
    pub exact: bool,
    pub bins: usize,
    pub degree: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn profile(p: Profile) -> Self {
        let (resample_to, band, scales, axis) = match p {
            Profile::Bottlenose => (128, 8, vec![0.04, 0.06, 0.08, 0.10], Axis::Height),
            Profile::Humpback => (748, 75, vec![0.02, 0.04, 0.06, 0.08], Axis::Width),
        };
        Self {
            edge_points: DEFAULT_EDGE_POINTS,
            scales,
            axis,
            band: Some(band),
            resample_to,
            keypoints: DEFAULT_KEYPOINTS,
            dim: DEFAULT_DIM,
            k: DEFAULT_K,
            trees: DEFAULT_TREES,
            leaf_size: DEFAULT_LEAF_SIZE,
            exact: false,
            bins: DEFAULT_HOCS_BINS,
            degree: DEFAULT_DEGREE,
            seed: 0,
        }
    }

    pub fn features(&self) -> Result<FeatureConfig> {
        Ok(FeatureConfig {
            edge_points: self.edge_points,
            scales: ScaleSet::new(self.scales.clone(), self.axis)?,
        })
    }

    pub fn alignment(&self, weights: Option<SpatialWeights>) -> AlignmentConfig {
        AlignmentConfig {
            band: self.band,
            weights,
            resample_to: self.resample_to,
        }
    }

    pub fn index(&self) -> IndexConfig {
        IndexConfig {
            trees: self.trees,
            leaf_size: self.leaf_size,
            seed: self.seed,
            exact: self.exact,
        }
    }

    pub fn matcher(&self, kind: MatcherKind, weights: Option<SpatialWeights>) -> MatcherConfig {
        match kind {
            MatcherKind::Dtw => MatcherConfig::Dtw(self.alignment(weights)),
            MatcherKind::Lnbnn => MatcherConfig::Lnbnn {
                keypoints: self.keypoints,
                dim: self.dim,
                k: self.k,
                index: self.index(),
            },
            MatcherKind::Hocs => MatcherConfig::Hocs { bins: self.bins },
        }
    }
}
