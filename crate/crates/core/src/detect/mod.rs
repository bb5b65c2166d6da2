//! Degeneracy detection: swarm images, labels, the covariance baseline and
//! the learned classifier.

pub mod baseline;
pub mod dataset;
pub mod detector;
pub mod image;
pub mod label;
pub mod model;
pub mod nn;
pub mod train;

pub use baseline::{covariance_eigenvalues, detect_covariance_baseline};
pub use dataset::{
    generate_synthetic_dataset, read_dataset, split_indices, write_dataset, DatasetSample, Split,
};
pub use detector::{CovarianceDetector, Detector, DetectorKind, NeuralDetector, StubDetector};
pub use image::{
    gaussian_augment, linear_map, swarm_image, AugmentConfig, MappingConfig, ParticleImage,
};
pub use label::{label_sample, Label};
pub use model::{gradient_check, Mode, ModelConfig, ModelParams};
pub use train::{model_train, train_with, EpochMetrics, TrainConfig, TrainOutcome};
