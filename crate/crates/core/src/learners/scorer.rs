//! Scalar score functions over one-hot encoded transitions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What part of a transition a scorer looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signature {
    /// `(s, a)`
    #[serde(rename = "s,a")]
    StateAction,
    /// `(s, s')`
    #[serde(rename = "s,sn")]
    StateNext,
    /// `(s)`
    #[serde(rename = "s")]
    State,
    /// `(s, (s', a))`
    #[serde(rename = "s,sn,a")]
    StateNextAction,
}

/// A transition whose action may be unobserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub s: usize,
    pub a: Option<usize>,
    pub sn: usize,
}

impl Transition {
    pub fn new(s: usize, a: usize, sn: usize) -> Self {
        Transition { s, a: Some(a), sn }
    }
}

/// Indices of the active unit in each one-hot block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScorerInput {
    idx: [usize; 3],
    len: usize,
}

impl ScorerInput {
    pub fn indices(&self) -> &[usize] {
        &self.idx[..self.len]
    }
}

impl Signature {
    fn block_sizes(self, n_states: usize, n_actions: usize) -> Vec<usize> {
        match self {
            Signature::StateAction => vec![n_states, n_actions],
            Signature::StateNext => vec![n_states, n_states],
            Signature::State => vec![n_states],
            Signature::StateNextAction => vec![n_states, n_states, n_actions],
        }
    }

    fn raw(self, t: &Transition) -> Result<([usize; 3], usize)> {
        let need_action = || {
            t.a.ok_or_else(|| Error::Signature(format!("signature {self:?} needs the action, which is unobserved")))
        };
        Ok(match self {
            Signature::StateAction => ([t.s, need_action()?, 0], 2),
            Signature::StateNext => ([t.s, t.sn, 0], 2),
            Signature::State => ([t.s, 0, 0], 1),
            Signature::StateNextAction => ([t.s, t.sn, need_action()?], 3),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerKind {
    #[default]
    Tabular,
    /// Feed-forward net with tanh hidden layers and a linear scalar output.
    Mlp {
        #[serde(default = "default_widths")]
        widths: Vec<usize>,
    },
}

fn default_widths() -> Vec<usize> {
    vec![64, 64]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    kind: ScorerKind,
    signature: Signature,
    blocks: Vec<usize>,
    offsets: Vec<usize>,
    /// `(fan_in, fan_out)` of every MLP layer including the output.
    layers: Vec<(usize, usize)>,
    params: Vec<f64>,
}

impl Scorer {
    /// Tabular scorers start at zero. MLP hidden layers get Glorot-uniform
    /// weights from `rng`; biases and the output layer start at zero, so every
    /// fresh scorer outputs 0.
    pub fn new<R: Rng + ?Sized>(
        kind: ScorerKind,
        signature: Signature,
        n_states: usize,
        n_actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let blocks = signature.block_sizes(n_states, n_actions);
        let offsets = blocks
            .iter()
            .scan(0, |acc, &b| {
                let o = *acc;
                *acc += b;
                Some(o)
            })
            .collect();
        let mut scorer = Scorer {
            kind: kind.clone(),
            signature,
            blocks,
            offsets,
            layers: Vec::new(),
            params: Vec::new(),
        };
        match kind {
            ScorerKind::Tabular => {
                scorer.params = vec![0.0; scorer.blocks.iter().product()];
            }
            ScorerKind::Mlp { widths } => {
                if widths.is_empty() || widths.contains(&0) {
                    return Err(Error::config("scorer.widths", "need at least one positive width"));
                }
                let mut fan_in: usize = scorer.blocks.iter().sum();
                for &w in &widths {
                    scorer.layers.push((fan_in, w));
                    fan_in = w;
                }
                scorer.layers.push((fan_in, 1));
                let hidden = scorer.layers.len() - 1;
                for (l, &(fi, fo)) in scorer.layers.iter().enumerate() {
                    let bound = (6.0 / (fi + fo) as f64).sqrt();
                    for _ in 0..fi * fo {
                        let w = if l < hidden { rng.random_range(-bound..bound) } else { 0.0 };
                        scorer.params.push(w);
                    }
                    scorer.params.extend(std::iter::repeat_n(0.0, fo));
                }
            }
        }
        Ok(scorer)
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn kind(&self) -> &ScorerKind {
        &self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input(&self, t: &Transition) -> Result<ScorerInput> {
        let (idx, len) = self.signature.raw(t)?;
        for (i, (&x, &b)) in idx[..len].iter().zip(&self.blocks).enumerate() {
            if x >= b {
                return Err(Error::Signature(format!("component {i} = {x} exceeds block size {b}")));
            }
        }
        Ok(ScorerInput { idx, len })
    }

    fn check(&self, x: &ScorerInput) -> Result<()> {
        if x.len != self.blocks.len() || x.indices().iter().zip(&self.blocks).any(|(&i, &b)| i >= b) {
            return Err(Error::Signature(format!(
                "input {:?} does not match signature {:?}",
                x.indices(),
                self.signature
            )));
        }
        Ok(())
    }

    pub(crate) fn table_index(&self, x: &ScorerInput) -> usize {
        x.indices().iter().zip(&self.blocks).fold(0, |acc, (&i, &b)| acc * b + i)
    }

    pub fn value(&self, x: &ScorerInput) -> f64 {
        match self.kind {
            ScorerKind::Tabular => self.params[self.table_index(x)],
            ScorerKind::Mlp { .. } => self.forward(x).0,
        }
    }

    /// Value and full parameter gradient.
    pub fn eval(&self, x: &ScorerInput) -> Result<(f64, Vec<f64>)> {
        self.check(x)?;
        let mut grad = vec![0.0; self.params.len()];
        let v = self.accumulate(x, 1.0, &mut grad);
        Ok((v, grad))
    }

    /// Adds `scale * grad f(x)` into `grad` and returns `f(x)`. The input is
    /// assumed to come from [`Scorer::input`].
    pub fn accumulate(&self, x: &ScorerInput, scale: f64, grad: &mut [f64]) -> f64 {
        match self.kind {
            ScorerKind::Tabular => {
                let i = self.table_index(x);
                grad[i] += scale;
                self.params[i]
            }
            ScorerKind::Mlp { .. } => {
                let (value, acts) = self.forward(x);
                self.backward(x, &acts, scale, grad);
                value
            }
        }
    }

    /// Hidden activations of every layer, and the output.
    fn forward(&self, x: &ScorerInput) -> (f64, Vec<Vec<f64>>) {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        let n_layers = self.layers.len();
        let mut out = 0.0;
        for (l, &(fi, fo)) in self.layers.iter().enumerate() {
            let w = &self.params[offset..offset + fi * fo];
            let b = &self.params[offset + fi * fo..offset + fi * fo + fo];
            let mut z = b.to_vec();
            if l == 0 {
                for (&i, &o) in x.indices().iter().zip(&self.offsets) {
                    let col = o + i;
                    for (j, zj) in z.iter_mut().enumerate() {
                        *zj += w[j * fi + col];
                    }
                }
            } else {
                let h = &acts[l - 1];
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += w[j * fi..(j + 1) * fi].iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            offset += fi * fo + fo;
            if l + 1 == n_layers {
                out = z[0];
            } else {
                z.iter_mut().for_each(|v| *v = v.tanh());
                acts.push(z);
            }
        }
        (out, acts)
    }

    fn backward(&self, x: &ScorerInput, acts: &[Vec<f64>], scale: f64, grad: &mut [f64]) {
        let starts: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, &(fi, fo)| {
                let s = *acc;
                *acc += fi * fo + fo;
                Some(s)
            })
            .collect();
        // Gradient of the output w.r.t. the pre-activation of the current layer.
        let mut delta = vec![scale];
        for l in (0..self.layers.len()).rev() {
            let (fi, fo) = self.layers[l];
            let start = starts[l];
            let bias = start + fi * fo;
            for j in 0..fo {
                grad[bias + j] += delta[j];
            }
            if l == 0 {
                for (&i, &o) in x.indices().iter().zip(&self.offsets) {
                    let col = o + i;
                    for (j, d) in delta.iter().enumerate() {
                        grad[start + j * fi + col] += d;
                    }
                }
                break;
            }
            let h = &acts[l - 1];
            let w = &self.params[start..start + fi * fo];
            let mut back = vec![0.0; fi];
            for (j, &d) in delta.iter().enumerate() {
                let row = start + j * fi;
                for k in 0..fi {
                    grad[row + k] += d * h[k];
                    back[k] += d * w[j * fi + k];
                }
            }
            for (k, b) in back.iter_mut().enumerate() {
                *b *= 1.0 - h[k] * h[k];
            }
            delta = back;
        }
    }
}
