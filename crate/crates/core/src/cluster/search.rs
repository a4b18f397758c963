use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataio::FeatureStore;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Euclidean distance between two compatible feature vectors.
pub fn l2_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    a.ensure_compatible(b)?;
    Ok(l2(&a.values, &b.values))
}

/// Euclidean distance accumulated in f64, in index order.
pub fn l2(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = f64::from(*x) - f64::from(*y);
        s += d * d;
    }
    s.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub query: Option<String>,
    pub neighbors: Vec<Neighbor>,
}

fn by_distance_then_id(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id))
}

/// The `k` nearest records, ascending by distance with ties broken by id.
pub fn knn_search(query: &FeatureVector, store: &FeatureStore, k: usize) -> Result<NeighborList> {
    if store.is_empty() {
        return Err(Error::invalid("cannot search an empty store"));
    }
    query.provenance.ensure_same(store.provenance())?;
    if query.dim() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            actual: query.dim(),
        });
    }
    if k == 0 || k > store.len() {
        return Err(Error::invalid(format!(
            "k = {k} must lie in 1..={}",
            store.len()
        )));
    }
    let mut all: Vec<Neighbor> = store
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| Neighbor {
            id: id.clone(),
            distance: l2(&query.values, store.row(i)),
        })
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, by_distance_then_id);
        all.truncate(k);
    }
    all.sort_by(by_distance_then_id);
    Ok(NeighborList {
        query: None,
        neighbors: all,
    })
}

/// Searches with a stored record as the query.
pub fn knn_search_id(id: &str, store: &FeatureStore, k: usize) -> Result<NeighborList> {
    let q = store
        .get(id)
        .ok_or_else(|| Error::invalid(format!("query id '{id}' is not in the store")))?;
    let mut list = knn_search(&q, store, k)?;
    list.query = Some(id.to_string());
    Ok(list)
}
