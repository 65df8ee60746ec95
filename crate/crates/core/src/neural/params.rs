//! All learnable arrays live in one flat buffer so that the optimizer,
//! clipping, checkpoints and gradient checks can treat them uniformly.

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Weight,
    Bias,
    /// LSTM bias; the forget-gate quarter starts at one.
    GateBias,
    /// Row-per-symbol table, subject to max-norm renormalization.
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub kind: SlotKind,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

pub type SlotId = usize;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Layout {
    pub slots: Vec<Slot>,
    pub size: usize,
}

impl Layout {
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, kind: SlotKind) -> SlotId {
        let slot = Slot {
            name: name.into(),
            offset: self.size,
            rows,
            cols,
            kind,
        };
        self.size += slot.len();
        self.slots.push(slot);
        self.slots.len() - 1
    }

    pub fn find(&self, name: &str) -> Option<SlotId> {
        self.slots.iter().position(|s| s.name == name)
    }
}

/// Flat parameter (or gradient) buffer interpreted through a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub data: Vec<f64>,
}

impl Tensors {
    pub fn zeros(layout: &Layout) -> Self {
        Tensors {
            data: vec![0.0; layout.size],
        }
    }

    /// Uniform(-scale, scale) weights and embeddings, zero biases and unit
    /// forget-gate biases.
    pub fn init(layout: &Layout, scale: f64, rng: &mut impl Rng) -> Self {
        let mut t = Tensors::zeros(layout);
        for slot in &layout.slots {
            let chunk = &mut t.data[slot.range()];
            match slot.kind {
                SlotKind::Weight | SlotKind::Embedding => {
                    for v in chunk.iter_mut() {
                        *v = rng.random_range(-scale..scale);
                    }
                }
                SlotKind::Bias => {}
                SlotKind::GateBias => {
                    let h = slot.cols / 4;
                    chunk[h..2 * h].fill(1.0);
                }
            }
        }
        t
    }

    pub fn view<'a>(&'a self, layout: &Layout, id: SlotId) -> ArrayView2<'a, f64> {
        let s = &layout.slots[id];
        ArrayView2::from_shape((s.rows, s.cols), &self.data[s.range()]).unwrap()
    }

    pub fn view_mut<'a>(&'a mut self, layout: &Layout, id: SlotId) -> ArrayViewMut2<'a, f64> {
        let s = &layout.slots[id];
        ArrayViewMut2::from_shape((s.rows, s.cols), &mut self.data[s.range()]).unwrap()
    }

    pub fn slice(&self, layout: &Layout, id: SlotId) -> &[f64] {
        &self.data[layout.slots[id].range()]
    }

    pub fn row<'a>(&'a self, layout: &Layout, id: SlotId, r: usize) -> &'a [f64] {
        let s = &layout.slots[id];
        let start = s.offset + r * s.cols;
        &self.data[start..start + s.cols]
    }

    pub fn row_mut<'a>(&'a mut self, layout: &Layout, id: SlotId, r: usize) -> &'a mut [f64] {
        let s = &layout.slots[id];
        let start = s.offset + r * s.cols;
        &mut self.data[start..start + s.cols]
    }

    pub fn add_assign(&mut self, other: &Tensors) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rescales every embedding row whose L2 norm exceeds `max_norm`.
    pub fn renorm_embeddings(&mut self, layout: &Layout, max_norm: f64) {
        for (id, slot) in layout.slots.iter().enumerate() {
            if slot.kind != SlotKind::Embedding {
                continue;
            }
            for r in 0..slot.rows {
                let row = self.row_mut(layout, id, r);
                let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > max_norm {
                    let k = max_norm / (n + 1e-7);
                    row.iter_mut().for_each(|v| *v *= k);
                }
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(size: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Tensors, grads: &Tensors) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.data.len() {
            let g = grads.data[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scales `grads` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Tensors, max_norm: f64) -> f64 {
    let n = grads.norm();
    if n > max_norm {
        grads.scale(max_norm / n);
    }
    n
}
