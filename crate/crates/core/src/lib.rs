//! Metamorphic relations as carriers of training knowledge for MNIST
//! classifiers: image transforms, the substitution protocol that builds
//! augmented training sets, a LeNet-5 style network trained with SGD, and the
//! t-test used to compare the two kinds of network.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod mr;
pub mod nn;
pub mod seed;
pub mod stats;
pub mod transforms;

pub use dataset::{AugmentationPlan, Mnist, Pool, PoolOrigin, SplitResult};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, TrialRecord};
pub use mr::{LabeledSample, MetamorphicGroup, MetamorphicRelation, MrKind, ParamDraw, ParamSpec};
pub use nn::{NetworkParams, TrainConfig};
pub use transforms::GrayImage;
