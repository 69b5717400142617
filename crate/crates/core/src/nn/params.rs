use std::sync::Arc;

use rand::Rng;

use super::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub value: Arc<Mat>,
}

/// Named, ordered collection of trainable matrices.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry {
            name,
            value: Arc::new(value),
        });
        ParamId(self.entries.len() - 1)
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Mat::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.entries[id.0].value
    }

    pub(crate) fn value_arc(&self, id: ParamId) -> Arc<Mat> {
        Arc::clone(&self.entries[id.0].value)
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        Arc::make_mut(&mut self.entries[id.0].value)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Total scalar count of the parameters whose names satisfy `keep`.
    pub fn scalar_count_where(&self, keep: impl Fn(&str) -> bool) -> usize {
        self.entries.iter().filter(|e| keep(&e.name)).map(|e| e.value.len()).sum()
    }

    pub fn scalar_count(&self) -> usize {
        self.scalar_count_where(|_| true)
    }

    /// Replaces values by name; every name in `other` must exist with the same shape.
    pub fn load_from(&mut self, other: &[(String, Mat)]) -> Result<(), String> {
        if other.len() != self.entries.len() {
            return Err(format!(
                "parameter count mismatch: checkpoint has {}, model has {}",
                other.len(),
                self.entries.len()
            ));
        }
        for (name, m) in other {
            let id = self.find(name).ok_or_else(|| format!("unknown parameter {name}"))?;
            if self.get(id).shape() != m.shape() {
                return Err(format!(
                    "shape mismatch for {name}: checkpoint {:?}, model {:?}",
                    m.shape(),
                    self.get(id).shape()
                ));
            }
            *self.get_mut(id) = m.clone();
        }
        Ok(())
    }

    pub fn to_named(&self) -> Vec<(String, Mat)> {
        self.entries.iter().map(|e| (e.name.clone(), (*e.value).clone())).collect()
    }
}
