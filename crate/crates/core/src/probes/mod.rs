//! Opponent-action probes and PCA of last-layer activations.

mod dataset;
mod pca;
mod probe;

pub use dataset::{
    collect_probe_dataset, dataset_from_samples, sample_rounds, split_indices, FeatureSource, ListenerSample,
    ProbeDataset, ProbeVariant, HELD_OUT_FRACTION,
};
pub use pca::{
    between_class_ratio, collect_activations, pca_project, write_pca_csv, ActivationMatrix, PcaResult,
    POWER_MAX_ITERATIONS, POWER_TOLERANCE,
};
pub use probe::{geometric_sizes, train_probe, write_accuracy_csv, AccuracyCurve, ProbeConfig, ProbeKind};
