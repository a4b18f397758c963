//! Similarity search, k-means clustering and t-SNE embedding of feature vectors.

pub mod kmeans;
pub mod search;
pub mod tsne;

pub use kmeans::{kmeans_assign, kmeans_fit, kmeans_fit_weighted, KMeansConfig, KMeansModel};
pub use search::{knn_search, knn_search_id, l2_distance, Neighbor, NeighborList};
pub use tsne::{compute_affinities, separation_ratio, tsne_embed, Affinities, EmbeddingMap, TsneConfig};
