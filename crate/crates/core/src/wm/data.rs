//! Stacking of recorded windows into per-step model inputs and targets.

use std::sync::Arc;

use super::model::ObsBatch;
use crate::error::{Error, Result};
use crate::features::{message_graph, node_features, symlog, FeatureNorm};
use crate::nn::{EdgeList, Mat};
use crate::sim::NetSnapshot;
use crate::traj::Window;
use crate::traj::Dataset;

/// Inputs and targets for one time step of a batch of windows.
pub struct StepBatch {
    pub obs: ObsBatch,
    /// `B*N x 1` CH flags applied on the transition into this step.
    pub a_prev: Mat,
    /// `B*N x 2` symlog positions.
    pub pos: Mat,
    /// `B*N x 1` symlog energies.
    pub energy: Mat,
    /// Row-major `B*N x N` link indicators.
    pub adj: Arc<Vec<f64>>,
    /// `B` symlog rewards and continue flags of the transition into this
    /// step; absent on the first step of a window.
    pub reward: Option<Mat>,
    pub cont: Option<Arc<Vec<f64>>>,
}

/// Stacks snapshots of `B` networks of equal size into one encoder input.
pub fn stack_obs(snaps: &[&NetSnapshot], norms: &[FeatureNorm]) -> ObsBatch {
    let n = snaps[0].n();
    let b = snaps.len();
    let mut features = Mat::zeros(b * n, crate::features::NODE_FEATURES);
    let (mut src, mut dst, mut feat, mut alive) = (Vec::new(), Vec::new(), Vec::new(), Vec::with_capacity(b * n));
    for (k, (snap, norm)) in snaps.iter().zip(norms).enumerate() {
        assert_eq!(snap.n(), n, "all stacked networks need the same node count");
        let f = node_features(snap, norm);
        features.data[k * n * f.cols..(k + 1) * n * f.cols].copy_from_slice(&f.data);
        let (edges, ef) = message_graph(snap, norm);
        src.extend(edges.src.iter().map(|s| s + k * n));
        dst.extend(edges.dst.iter().map(|d| d + k * n));
        feat.extend_from_slice(&ef.data);
        alive.extend(snap.nodes.iter().map(|x| x.alive as u8 as f64));
    }
    let e = feat.len();
    ObsBatch {
        features,
        edges: Arc::new(EdgeList { src, dst, num_nodes: b * n }),
        edge_feat: Mat::from_vec(e, 1, feat),
        alive,
        n,
    }
}

/// Node count shared by every episode in the dataset.
pub fn dataset_n(ds: &Dataset) -> Result<usize> {
    let first = ds
        .episodes
        .first()
        .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))?
        .n();
    if ds.episodes.iter().any(|e| e.n() != first) {
        return Err(Error::InvalidArgument(
            "world-model training needs every episode at the same node count".into(),
        ));
    }
    Ok(first)
}

/// Builds the `len` step batches for a set of equal-length windows.
pub fn build_steps(ds: &Dataset, windows: &[Window]) -> Vec<StepBatch> {
    let len = windows[0].len;
    let n = ds.episodes[windows[0].episode].n();
    let b = windows.len();
    let norms: Vec<FeatureNorm> = windows
        .iter()
        .map(|w| FeatureNorm::from_scenario(ds.scenario_of(&ds.episodes[w.episode])))
        .collect();
    (0..len)
        .map(|k| {
            let snaps: Vec<NetSnapshot> = windows
                .iter()
                .map(|w| {
                    let ep = &ds.episodes[w.episode];
                    ep.snapshot(w.offset + k, ds.scenario_of(ep))
                })
                .collect();
            let refs: Vec<&NetSnapshot> = snaps.iter().collect();
            let obs = stack_obs(&refs, &norms);
            let mut a_prev = Mat::zeros(b * n, 1);
            let mut pos = Mat::zeros(b * n, 2);
            let mut energy = Mat::zeros(b * n, 1);
            let mut adj = vec![0.0; b * n * n];
            for (bi, (w, snap)) in windows.iter().zip(&snaps).enumerate() {
                let ep = &ds.episodes[w.episode];
                for i in 0..n {
                    let r = bi * n + i;
                    let node = &snap.nodes[i];
                    a_prev.data[r] = if k == 0 {
                        node.ch_flag as u8 as f64
                    } else {
                        ep.actions[w.offset + k - 1][i] as f64
                    };
                    pos.data[2 * r] = symlog(node.position.x);
                    pos.data[2 * r + 1] = symlog(node.position.y);
                    energy.data[r] = symlog(node.energy);
                    for j in 0..n {
                        adj[r * n + j] = snap.adj(i, j) as u8 as f64;
                    }
                }
            }
            let (reward, cont) = if k == 0 {
                (None, None)
            } else {
                let idx = |w: &Window| w.offset + k - 1;
                let r = windows.iter().map(|w| symlog(ds.episodes[w.episode].rewards[idx(w)])).collect();
                let c = windows
                    .iter()
                    .map(|w| ds.episodes[w.episode].continues[idx(w)] as u8 as f64)
                    .collect();
                (Some(Mat::from_vec(b, 1, r)), Some(Arc::new(c)))
            };
            StepBatch {
                obs,
                a_prev,
                pos,
                energy,
                adj: Arc::new(adj),
                reward,
                cont,
            }
        })
        .collect()
}
