//! Identification of individual animals from the trailing edge of a fin or
//! fluke.
//!
//! A traced edge is turned into a multi-scale integral-curvature matrix
//! ([`curvature`]). Database individuals are then ranked for a query either by
//! spatially weighted time-warping alignment of the matrices ([`dtw`],
//! [`weights`]) or by local naive Bayes nearest-neighbor scoring over
//! curvature descriptors ([`descriptors`], [`lnbnn`]). [`evaluation`] builds
//! encounter-level splits and top-k reports, and [`synthgen`] produces labelled
//! synthetic edges for testing.

mod binio;
pub mod config;
pub mod contour;
pub mod curvature;
pub mod descriptors;
pub mod dtw;
pub mod error;
pub mod evaluation;
pub mod lnbnn;
pub mod ranking;
pub mod synthgen;
pub mod weights;

pub use config::{MatcherKind, PipelineConfig, Profile};
pub use contour::{Axis, Contour, EncounterDatabase, ImageKey, Point};
pub use curvature::{CurvatureMatrix, ScaleSet};
pub use descriptors::{DescriptorSet, KeypointSet};
pub use dtw::{AlignmentConfig, AlignmentResult, Sequence};
pub use error::{Error, Result};
pub use evaluation::{FeatureConfig, Features, Matcher, MatcherConfig, RunsReport, Split, TopKReport};
pub use lnbnn::{IndexConfig, NnIndex, ScoreTable};
pub use ranking::{QueryKey, RankedList, Rankings};
pub use synthgen::{DatasetConfig, DistortionConfig, IndividualTemplate};
pub use weights::{LearnConfig, SpatialWeights, WeightsFile};
