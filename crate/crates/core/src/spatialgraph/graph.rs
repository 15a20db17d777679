use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ContextFeatureMatrix, CONTEXT_COUNT};
use crate::landuse::QualityLabel;
use crate::numerics::Tensor;

pub const NODE_COUNT: usize = CONTEXT_COUNT + 1;

/// Context nodes in geographic ring order NW, N, NE, E, SE, S, SW, W.
/// Node `k` carries context `k`; node 0 is the centre.
pub const RING_ORDER: [usize; 8] = [1, 2, 3, 5, 8, 7, 6, 4];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjacencyPattern {
    #[serde(rename = "star")]
    Star,
    #[serde(rename = "ring")]
    Ring,
    #[default]
    #[serde(rename = "star+ring")]
    StarRing,
}

/// Which node rows enter the pooled embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolSet {
    #[default]
    AllNodes,
    ContextsOnly,
}

/// A community graph: 9×9 adjacency and 9×K node attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGraph {
    pub adjacency: Tensor,
    pub attributes: Tensor,
}

pub fn adjacency(pattern: AdjacencyPattern) -> Tensor {
    let mut a = Tensor::zeros(&[NODE_COUNT, NODE_COUNT]);
    let d = a.data_mut();
    let mut link = |i: usize, j: usize| {
        d[i * NODE_COUNT + j] = 1.0;
        d[j * NODE_COUNT + i] = 1.0;
    };
    if pattern != AdjacencyPattern::Ring {
        for k in 1..NODE_COUNT {
            link(0, k);
        }
    }
    if pattern != AdjacencyPattern::Star {
        for w in 0..RING_ORDER.len() {
            link(RING_ORDER[w], RING_ORDER[(w + 1) % RING_ORDER.len()]);
        }
    }
    a
}

/// Graph of one community; the centre row of the attributes is zero.
pub fn build_graph(x: &ContextFeatureMatrix, pattern: AdjacencyPattern) -> Result<SpatialGraph> {
    graph_from_rows(&x.values, pattern)
}

pub fn graph_from_rows(x: &Tensor, pattern: AdjacencyPattern) -> Result<SpatialGraph> {
    if x.shape().len() != 2 || x.rows() != CONTEXT_COUNT {
        return Err(Error::Dimension {
            op: "build_graph",
            left: vec![CONTEXT_COUNT, 0],
            right: x.shape().to_vec(),
        });
    }
    let k = x.cols();
    let mut data = vec![0.0; k];
    data.extend_from_slice(x.data());
    Ok(SpatialGraph {
        adjacency: adjacency(pattern),
        attributes: Tensor::matrix(NODE_COUNT, k, data)?,
    })
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` with `D̂` the degrees of `A + I`.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor> {
    let n = a.rows();
    if a.shape() != [n, n] {
        return Err(Error::Dimension {
            op: "normalize_adjacency",
            left: vec![n, n],
            right: a.shape().to_vec(),
        });
    }
    let t = with_self_loops(a);
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / t.row(i).iter().sum::<f64>().sqrt())
        .collect();
    let data = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            inv_sqrt[i] * t.data()[idx] * inv_sqrt[j]
        })
        .collect();
    Tensor::matrix(n, n, data)
}

/// Reconstruction target `A + I`.
pub fn with_self_loops(a: &Tensor) -> Tensor {
    let n = a.rows();
    a.add(&Tensor::identity(n)).expect("square adjacency")
}

/// Mean over the selected node rows.
pub fn pool_rows(m: &Tensor, set: PoolSet) -> Vec<f64> {
    let start = match set {
        PoolSet::AllNodes => 0,
        PoolSet::ContextsOnly => 1,
    };
    let count = (m.rows() - start) as f64;
    let mut out = vec![0.0; m.cols()];
    for r in start..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= count);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    Sampled,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextEmbedding {
    pub community_id: u64,
    pub mode: EmbeddingMode,
    pub z: Vec<f64>,
}

/// Area under the ROC curve for scores of the off-diagonal pairs, with the
/// 0/1 entries of `target` as classes. Ties count one half. Returns `None`
/// when either class is empty.
pub fn reconstruction_auc(target: &Tensor, scores: &Tensor) -> Option<f64> {
    let n = target.rows();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = scores.at(i, j);
            if target.at(i, j) > 0.5 {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Writes `community_id,label,z1..zd`; `None` labels are written as
/// `unlabeled`.
pub fn write_embeddings_csv(
    path: &Path,
    rows: &[(ContextEmbedding, Option<QualityLabel>)],
) -> Result<()> {
    let d = rows.first().map_or(0, |(e, _)| e.z.len());
    let mut out = String::from("community_id,label");
    for i in 1..=d {
        out.push_str(&format!(",z{i}"));
    }
    out.push('\n');
    for (e, label) in rows {
        out.push_str(&e.community_id.to_string());
        out.push(',');
        out.push_str(label.map_or("unlabeled", |l| l.as_str()));
        for v in &e.z {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_ring_degrees() {
        let a = adjacency(AdjacencyPattern::StarRing);
        assert_eq!(a, a.transpose());
        assert_eq!(a.row(0).iter().sum::<f64>(), 8.0);
        for k in 1..NODE_COUNT {
            assert_eq!(a.at(k, k), 0.0);
            assert_eq!(a.row(k).iter().sum::<f64>(), 3.0);
        }
        // NW–N and W–NW are ring neighbours, NW–SE is not.
        assert_eq!(a.at(1, 2), 1.0);
        assert_eq!(a.at(4, 1), 1.0);
        assert_eq!(a.at(1, 8), 0.0);
        assert_eq!(adjacency(AdjacencyPattern::Star).sum(), 16.0);
        assert_eq!(
            adjacency(AdjacencyPattern::Ring).row(0).iter().sum::<f64>(),
            0.0
        );
    }

    #[test]
    fn normalization_examples() {
        let two = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&two).unwrap();
        assert!(n.data().iter().all(|v| (v - 0.5).abs() < 1e-15));
        let one = Tensor::zeros(&[1, 1]);
        assert_eq!(normalize_adjacency(&one).unwrap().data(), &[1.0]);
        let ring = normalize_adjacency(&adjacency(AdjacencyPattern::Ring)).unwrap();
        for k in 1..NODE_COUNT {
            assert!((ring.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_centre_row_is_zero() {
        let x = Tensor::filled(&[8, 4], 2.0);
        let g = graph_from_rows(&x, AdjacencyPattern::StarRing).unwrap();
        assert_eq!(g.attributes.row(0), &[0.0; 4]);
        assert_eq!(g.attributes.row(8), &[2.0; 4]);
        assert!(graph_from_rows(&Tensor::zeros(&[7, 4]), AdjacencyPattern::Star).is_err());
    }

    #[test]
    fn pooling_examples() {
        let same = Tensor::from_rows(&vec![vec![1.0, -2.0]; 9]).unwrap();
        assert_eq!(pool_rows(&same, PoolSet::AllNodes), vec![1.0, -2.0]);
        let mut rows = vec![vec![0.0, 0.0, 0.0]];
        for i in 0..4 {
            let v = vec![i as f64, 1.0, -3.0];
            rows.push(v.clone());
            rows.push(v.iter().map(|x| -x).collect());
        }
        let m = Tensor::from_rows(&rows).unwrap();
        assert!(pool_rows(&m, PoolSet::AllNodes)
            .iter()
            .all(|v| v.abs() < 1e-15));
        let m = Tensor::from_rows(
            &(0..9)
                .map(|i| vec![i as f64, 2.0 * i as f64, 1.0])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(pool_rows(&m, PoolSet::AllNodes), vec![4.0, 8.0, 1.0]);
        assert_eq!(pool_rows(&m, PoolSet::ContextsOnly), vec![4.5, 9.0, 1.0]);
    }

    #[test]
    fn auc_examples() {
        let t = Tensor::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let perfect = Tensor::from_rows(&[
            vec![0.0, 0.9, 0.1],
            vec![0.9, 0.0, 0.2],
            vec![0.1, 0.2, 0.0],
        ])
        .unwrap();
        assert_eq!(reconstruction_auc(&t, &perfect), Some(1.0));
        let flat = Tensor::filled(&[3, 3], 0.5);
        assert_eq!(reconstruction_auc(&t, &flat), Some(0.5));
        assert_eq!(reconstruction_auc(&Tensor::identity(3), &flat), None);
    }
}
