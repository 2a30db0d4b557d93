//! Synthetic graphs for experiments and demos: a stochastic block model
//! with community-dependent Gaussian features, and a planted dataset whose
//! anomaly signal lives only in high-frequency feature columns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{ArcError, Result};
use crate::graph::EdgeList;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n_nodes: usize,
    pub communities: usize,
    /// Expected within-community degree.
    pub degree_in: f64,
    /// Expected cross-community degree.
    pub degree_out: f64,
    pub n_features: usize,
    /// Std of the per-community feature centers.
    pub center_scale: f64,
    /// Std of per-node noise around the center.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        SbmSpec {
            n_nodes: 1000,
            communities: 5,
            degree_in: 6.0,
            degree_out: 2.0,
            n_features: 200,
            center_scale: 1.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Community of each node: contiguous blocks of near-equal size.
fn block_assignment(n: usize, c: usize) -> Vec<usize> {
    (0..n).map(|i| i * c / n).collect()
}

fn sbm_edges(n: usize, comm: &[usize], p_in: f64, p_out: f64, rng: &mut ChaCha8Rng) -> Result<EdgeList> {
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if comm[u] == comm[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                pairs.push((u, v));
            }
        }
    }
    EdgeList::new(n, pairs)
}

/// Unlabeled SBM graph; node `i` belongs to community `i·c/n`.
pub fn generate_sbm(name: &str, spec: &SbmSpec) -> Result<Dataset> {
    let SbmSpec {
        n_nodes: n,
        communities: c,
        ..
    } = *spec;
    if n < 2 || c == 0 || c > n || spec.n_features == 0 {
        return Err(ArcError::invalid(format!(
            "SBM needs n >= 2, 1 <= communities <= n and features >= 1 (got n={n}, c={c}, d={})",
            spec.n_features
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let comm = block_assignment(n, c);
    let block = n as f64 / c as f64;
    let p_in = (spec.degree_in / (block - 1.0).max(1.0)).clamp(0.0, 1.0);
    let p_out = if c > 1 {
        (spec.degree_out / (n as f64 - block)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let edges = sbm_edges(n, &comm, p_in, p_out, &mut rng)?;

    let centers = Tensor::randn(c, spec.n_features, spec.center_scale, &mut rng);
    let mut x = Tensor::randn(n, spec.n_features, spec.noise, &mut rng);
    for i in 0..n {
        let center = centers.row(comm[i]).to_vec();
        x.row_mut(i).iter_mut().zip(&center).for_each(|(v, m)| *v += m);
    }
    Dataset::new(name, x, edges, None)
}

/// Graph for the smoothness experiment: `groups` blocks of `per_group`
/// columns, block `g` mixing a community signal with noise of increasing
/// strength so that later blocks are less smooth. Anomalies (a `rate`
/// fraction) receive a large shift only in the least smooth block.
pub fn planted_smoothness(
    n_nodes: usize,
    groups: usize,
    per_group: usize,
    rate: f64,
    seed: u64,
) -> Result<Dataset> {
    if groups < 2 || per_group == 0 || !(0.0..0.5).contains(&rate) {
        return Err(ArcError::invalid(
            "planted dataset needs >= 2 groups, >= 1 column per group and rate in [0, 0.5)",
        ));
    }
    let spec = SbmSpec {
        n_nodes,
        communities: 4,
        n_features: 1,
        seed,
        ..SbmSpec::default()
    };
    let base = generate_sbm("planted", &spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let comm = block_assignment(n_nodes, spec.communities);
    let d = groups * per_group;
    let centers = Tensor::randn(spec.communities, d, 1.0, &mut rng);

    let mut x = Tensor::zeros(n_nodes, d);
    for i in 0..n_nodes {
        for col in 0..d {
            let g = col / per_group;
            // noise share grows from 0.05 (smooth) to 1.0 (pure noise)
            let mix = 0.05 + 0.95 * g as f64 / (groups - 1) as f64;
            let z: f64 = StandardNormal.sample(&mut rng);
            x.set(i, col, (1.0 - mix) * centers.get(comm[i], col) + mix * z);
        }
    }

    let n_anom = ((n_nodes as f64) * rate).round() as usize;
    let targets = rand::seq::index::sample(&mut rng, n_nodes, n_anom).into_vec();
    let mut labels = vec![0u8; n_nodes];
    let noisy = (groups - 1) * per_group..d;
    for &t in &targets {
        labels[t] = 1;
        for col in noisy.clone() {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let v = x.get(t, col);
            x.set(t, col, v + 3.0 * sign);
        }
    }
    Dataset::new("planted", x, base.edges, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_shape_and_degree() {
        let ds = generate_sbm(
            "t",
            &SbmSpec {
                n_nodes: 400,
                n_features: 7,
                ..SbmSpec::default()
            },
        )
        .unwrap();
        assert_eq!(ds.features.shape(), (400, 7));
        let avg = 2.0 * ds.edges.len() as f64 / 400.0;
        assert!((avg - 8.0).abs() < 1.5, "average degree {avg}");
    }

    #[test]
    fn sbm_is_seeded() {
        let spec = SbmSpec {
            n_nodes: 50,
            n_features: 3,
            ..SbmSpec::default()
        };
        assert_eq!(generate_sbm("a", &spec).unwrap(), generate_sbm("a", &spec).unwrap());
    }

    #[test]
    fn planted_has_labels() {
        let ds = planted_smoothness(200, 5, 4, 0.05, 1).unwrap();
        assert_eq!(ds.n_features(), 20);
        assert_eq!(ds.anomalies().len(), 10);
    }
}
