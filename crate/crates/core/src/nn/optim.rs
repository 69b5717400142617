use super::mat::Mat;
use super::params::ParamStore;

/// Adam with optional global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    m: Vec<Option<Mat>>,
    v: Vec<Option<Mat>>,
}

impl Adam {
    pub fn new(lr: f64, clip_norm: Option<f64>) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update and returns the pre-clipping global gradient norm.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Mat>]) -> f64 {
        let norm = global_norm(grads);
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let m = self.m[i].get_or_insert_with(|| Mat::zeros(g.rows, g.cols));
            let v = self.v[i].get_or_insert_with(|| Mat::zeros(g.rows, g.cols));
            for k in 0..g.data.len() {
                let gk = g.data[k] * scale;
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
            }
            if self.lr == 0.0 {
                continue;
            }
            let p = store.get_mut(super::params::ParamId(i));
            for k in 0..p.data.len() {
                let mh = m.data[k] / bc1;
                let vh = v.data[k] / bc2;
                p.data[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        norm
    }
}

pub fn global_norm(grads: &[Option<Mat>]) -> f64 {
    grads.iter().flatten().map(|g| g.sq_norm()).sum::<f64>().sqrt()
}

/// Sums `src` into `dst`, scaled by `w`.
pub fn accumulate(dst: &mut Vec<Option<Mat>>, src: Vec<Option<Mat>>, w: f64) {
    if dst.len() < src.len() {
        dst.resize(src.len(), None);
    }
    for (d, s) in dst.iter_mut().zip(src) {
        let Some(mut s) = s else { continue };
        if w != 1.0 {
            s.data.iter_mut().for_each(|x| *x *= w);
        }
        match d {
            Some(d) => d.add_assign(&s),
            None => *d = Some(s),
        }
    }
}
