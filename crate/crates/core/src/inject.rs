//! Synthetic anomaly injection: planted cliques (structural) and copied
//! far-away feature rows (attribute).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{ArcError, Result};

/// Candidate pool size for attribute perturbation.
pub const DEFAULT_CANDIDATES: usize = 50;
/// Clique size used for every benchmark graph.
pub const DEFAULT_CLIQUE_SIZE: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionSpec {
    /// Clique size.
    pub p: usize,
    /// Number of cliques.
    pub q: usize,
    /// Candidate pool size per attribute target.
    pub k: usize,
    /// Attribute anomalies; `None` means `p·q`.
    pub attr_count: Option<usize>,
    pub seed: u64,
}

impl InjectionSpec {
    pub fn attr_count(&self) -> usize {
        self.attr_count.unwrap_or(self.p * self.q)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.p < 2 {
            return Err(ArcError::invalid(format!("clique size {} below 2", self.p)));
        }
        if self.k == 0 {
            return Err(ArcError::invalid("candidate pool size must be at least 1"));
        }
        let total = self.p * self.q + self.attr_count();
        if total >= n {
            return Err(ArcError::invalid(format!(
                "{total} anomalies requested for {n} nodes"
            )));
        }
        Ok(())
    }
}

fn labels_or_zero(ds: &Dataset) -> Vec<u8> {
    ds.labels.clone().unwrap_or_else(|| vec![0; ds.n_nodes()])
}

/// Draws `count` distinct elements of `pool` without replacement.
fn draw(pool: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Plants `q` disjoint cliques of `p` currently-normal nodes each and labels
/// their members anomalous.
pub fn inject_structural(ds: &Dataset, p: usize, q: usize, seed: u64) -> Result<Dataset> {
    if p < 2 {
        return Err(ArcError::invalid(format!("clique size {p} below 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    inject_structural_with(ds, p, q, &mut rng)
}

fn inject_structural_with(ds: &Dataset, p: usize, q: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let mut labels = labels_or_zero(ds);
    let pool: Vec<usize> = (0..ds.n_nodes()).filter(|&i| labels[i] == 0).collect();
    if p * q > pool.len() {
        return Err(ArcError::invalid(format!(
            "{q} cliques of {p} need {} nodes, only {} available",
            p * q,
            pool.len()
        )));
    }
    let chosen = draw(&pool, p * q, rng);
    let mut extra = Vec::with_capacity(q * p * (p - 1) / 2);
    for clique in chosen.chunks(p) {
        for (a, &u) in clique.iter().enumerate() {
            labels[u] = 1;
            for &v in &clique[a + 1..] {
                extra.push((u, v));
            }
        }
    }
    Dataset::new(
        ds.name.clone(),
        ds.features.clone(),
        ds.edges.with_edges(extra)?,
        Some(labels),
    )
}

/// For each of `count` normal targets, samples `k` candidates among the
/// remaining normal nodes and overwrites the target's features with those
/// of the farthest (Euclidean) candidate.
pub fn inject_attribute(ds: &Dataset, count: usize, k: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    inject_attribute_with(ds, count, k, &mut rng)
}

fn inject_attribute_with(ds: &Dataset, count: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    if k == 0 {
        return Err(ArcError::invalid("candidate pool size must be at least 1"));
    }
    let mut labels = labels_or_zero(ds);
    let normals: Vec<usize> = (0..ds.n_nodes()).filter(|&i| labels[i] == 0).collect();
    if count > normals.len() {
        return Err(ArcError::invalid(format!(
            "{count} attribute targets requested, only {} normal nodes",
            normals.len()
        )));
    }
    let targets = draw(&normals, count, rng);
    for &t in &targets {
        labels[t] = 1;
    }
    // candidates never include a target, so their rows are still original
    let candidates: Vec<usize> = (0..ds.n_nodes()).filter(|&i| labels[i] == 0).collect();
    if count > 0 && k > candidates.len() {
        return Err(ArcError::invalid(format!(
            "candidate pool of {k} requested, only {} eligible nodes",
            candidates.len()
        )));
    }

    let mut features = ds.features.clone();
    for &t in &targets {
        let picks = draw(&candidates, k, rng);
        let target_row = ds.features.row(t);
        let mut best = picks[0];
        let mut best_d = f64::NEG_INFINITY;
        for &c in &picks {
            let d: f64 = target_row
                .iter()
                .zip(ds.features.row(c))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d > best_d || (d == best_d && c < best) {
                best = c;
                best_d = d;
            }
        }
        features.row_mut(t).copy_from_slice(ds.features.row(best));
    }
    Dataset::new(ds.name.clone(), features, ds.edges.clone(), Some(labels))
}

/// Structural then attribute injection on disjoint node sets.
pub fn inject_combined(ds: &Dataset, spec: &InjectionSpec) -> Result<Dataset> {
    spec.validate(ds.n_nodes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let structural = inject_structural_with(ds, spec.p, spec.q, &mut rng)?;
    inject_attribute_with(&structural, spec.attr_count(), spec.k, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeList;
    use crate::tensor::Tensor;

    fn blank(n: usize, d: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = Tensor::randn(n, d, 1.0, &mut rng);
        Dataset::new("blank", x, EdgeList::empty(n), None).unwrap()
    }

    #[test]
    fn smallest_clique() {
        let ds = inject_structural(&blank(4, 2), 2, 1, 0).unwrap();
        assert_eq!(ds.edges.len(), 1);
        assert_eq!(ds.anomalies().len(), 2);
    }

    #[test]
    fn cliques_are_complete() {
        let ds = inject_structural(&blank(20, 2), 3, 2, 5).unwrap();
        let a = ds.anomalies();
        assert_eq!(a.len(), 6);
        // empty base graph: every edge is intra-clique
        assert_eq!(ds.edges.len(), 2 * 3);
    }

    #[test]
    fn structural_needs_enough_nodes() {
        assert!(inject_structural(&blank(5, 2), 3, 2, 0).is_err());
        assert!(inject_structural(&blank(5, 2), 1, 2, 0).is_err());
    }

    #[test]
    fn exhaustive_pool_picks_global_farthest() {
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![5.0], vec![-2.0]]).unwrap();
        let ds = Dataset::new("line", x, EdgeList::empty(4), None).unwrap();
        for seed in 0..10 {
            let out = inject_attribute(&ds, 1, 3, seed).unwrap();
            let t = out.anomalies()[0];
            let v = ds.features.get(t, 0);
            let farthest = [0.0, 1.0, 5.0, -2.0]
                .into_iter()
                .max_by(|a: &f64, b: &f64| (a - v).abs().total_cmp(&(b - v).abs()))
                .unwrap();
            assert_eq!(out.features.get(t, 0), farthest);
        }
    }

    #[test]
    fn combined_counts() {
        let ds = inject_combined(
            &blank(60, 3),
            &InjectionSpec {
                p: 3,
                q: 2,
                k: 5,
                attr_count: None,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(ds.anomalies().len(), 12);

        let same = inject_combined(
            &blank(60, 3),
            &InjectionSpec {
                p: 3,
                q: 0,
                k: 5,
                attr_count: Some(0),
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(same.features, blank(60, 3).features);
        assert!(same.anomalies().is_empty());
        assert!(same.edges.is_empty());
    }

    #[test]
    fn spec_rejects_overfull() {
        let spec = InjectionSpec {
            p: 5,
            q: 2,
            k: 3,
            attr_count: None,
            seed: 0,
        };
        assert!(spec.validate(20).is_err());
        assert!(spec.validate(21).is_ok());
    }
}
