use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::actor::{select_actions, Actor};
use crate::baselines::ClusterPolicy;
use crate::features::FeatureNorm;
use crate::nn::{Mat, Tape};
use crate::sim::NetSnapshot;
use crate::wm::{stack_obs, WorldModel};

/// The trained actor acting in the simulator: the world model's posterior
/// filters real observations into the latent state the actor reads.
pub struct WmPolicy {
    pub wm: Arc<WorldModel>,
    pub actor: Arc<Actor>,
    pub norm: FeatureNorm,
    /// Threshold probabilities at 0.5 instead of sampling.
    pub greedy: bool,
    state: Option<(Mat, Mat)>,
    a_prev: Vec<f64>,
}

impl WmPolicy {
    pub fn new(wm: Arc<WorldModel>, actor: Arc<Actor>, norm: FeatureNorm, greedy: bool) -> Self {
        Self {
            wm,
            actor,
            norm,
            greedy,
            state: None,
            a_prev: Vec::new(),
        }
    }
}

impl ClusterPolicy for WmPolicy {
    fn name(&self) -> &str {
        "grssm"
    }

    fn reset(&mut self) {
        self.state = None;
        self.a_prev.clear();
    }

    fn act(&mut self, snap: &NetSnapshot, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let n = snap.n();
        let tape = Tape::no_grad();
        let obs = stack_obs(&[snap], &[self.norm]);
        let state = match self.state.take() {
            Some((h, z)) => (tape.constant(h), tape.constant(z)),
            None => {
                self.a_prev = snap.nodes.iter().map(|x| x.ch_flag as u8 as f64).collect();
                self.wm.initial_state(&tape, n, rng)
            }
        };
        let a_prev = tape.constant(Mat::from_vec(n, 1, self.a_prev.clone()));
        let o = self.wm.observe_step(&tape, state, a_prev, &obs, rng, false);
        let logits = self.actor.logits(&tape, o.h, o.z, a_prev, n);
        let action = select_actions(&logits.value(), &obs.alive, rng, self.greedy);
        self.state = Some(((*o.h.value()).clone(), (*o.z.value()).clone()));
        self.a_prev = action.data.clone();
        action.data.iter().map(|&v| v as u8).collect()
    }
}
