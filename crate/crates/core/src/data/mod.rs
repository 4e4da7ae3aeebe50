//! Datasets, the IDX loader, non-IID partitioning and k-means.

mod dataset;
pub mod idx;
mod kmeans;
mod partition;

pub use dataset::{class_distribution, generate_gaussian_dataset, ClassDistribution, Dataset, GaussianMixture};
pub use idx::load_idx;
pub use kmeans::{kmeans, KMeans, KMEANS_RESTARTS};
pub use partition::{non_iid_partition, ClassSplit, PartitionPlan};
