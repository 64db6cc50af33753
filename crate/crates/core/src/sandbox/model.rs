//! Per-class binary heads on an optional ReLU hidden layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn random(inputs: usize, outputs: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Dense::zeros(inputs, outputs);
        for w in &mut layer.weights {
            *w = scale * rng.sample::<f64, _>(StandardNormal);
        }
        layer
    }

    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    hidden: Option<Dense>,
    head: Dense,
    /// Cosine head scale; `None` for a plain linear head.
    temperature: Option<f64>,
}

/// Parameter gradients with the same layout as [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    hidden: Option<Dense>,
    head: Dense,
}

/// Intermediate values kept from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pre_hidden: Vec<f64>,
    features: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Model {
    /// Plain heads start at zero so every initial score is one half. A cosine
    /// head needs nonzero directions and starts from small seeded weights.
    pub fn new(input_dim: usize, num_classes: usize, kind: ModelKind, temperature: Option<f64>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = match kind {
            ModelKind::Linear => None,
            ModelKind::Mlp { hidden } => {
                Some(Dense::random(input_dim, hidden, (2.0 / input_dim as f64).sqrt(), &mut rng))
            }
        };
        let head_inputs = hidden.as_ref().map_or(input_dim, |h| h.outputs);
        let head = match temperature {
            None => Dense::zeros(head_inputs, num_classes),
            Some(_) => Dense::random(head_inputs, num_classes, 0.01, &mut rng),
        };
        Model {
            hidden,
            head,
            temperature,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.head.outputs
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.as_ref().map_or(self.head.inputs, |h| h.inputs)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            hidden: self.hidden.as_ref().map(|h| Dense::zeros(h.inputs, h.outputs)),
            head: Dense::zeros(self.head.inputs, self.head.outputs),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Activations {
        let (pre_hidden, features) = match &self.hidden {
            None => (Vec::new(), x.to_vec()),
            Some(h) => {
                let pre: Vec<f64> = (0..h.outputs).map(|o| dot(h.row(o), x) + h.bias[o]).collect();
                let post = pre.iter().map(|v| v.max(0.0)).collect();
                (pre, post)
            }
        };
        let logits = match self.temperature {
            None => (0..self.head.outputs)
                .map(|c| dot(self.head.row(c), &features) + self.head.bias[c])
                .collect(),
            Some(t) => {
                let fnorm = norm(&features);
                (0..self.head.outputs)
                    .map(|c| {
                        let w = self.head.row(c);
                        let wnorm = norm(w);
                        let cos = if fnorm > 0.0 && wnorm > 0.0 { dot(w, &features) / (wnorm * fnorm) } else { 0.0 };
                        t * cos + self.head.bias[c]
                    })
                    .collect()
            }
        };
        Activations {
            pre_hidden,
            features,
            logits,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).logits
    }

    /// Adds the parameter gradient for loss gradient `dlogits` at input `x` into `grads`.
    pub fn backward(&self, x: &[f64], act: &Activations, dlogits: &[f64], grads: &mut Gradients) {
        let p = self.head.inputs;
        let mut dfeatures = vec![0.0; p];
        let fnorm = norm(&act.features);
        for (c, &g) in dlogits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.head.bias[c] += g;
            let w = self.head.row(c);
            let gw = &mut grads.head.weights[c * p..(c + 1) * p];
            match self.temperature {
                None => {
                    for j in 0..p {
                        gw[j] += g * act.features[j];
                        dfeatures[j] += g * w[j];
                    }
                }
                Some(t) => {
                    let wnorm = norm(w);
                    if fnorm == 0.0 || wnorm == 0.0 {
                        continue;
                    }
                    // f = t <w, v> / |w| with v = phi / |phi|.
                    let cos_w = dot(w, &act.features) / fnorm;
                    for j in 0..p {
                        let v = act.features[j] / fnorm;
                        gw[j] += g * t * (v / wnorm - cos_w * w[j] / (wnorm * wnorm * wnorm));
                        let u = w[j] / wnorm;
                        dfeatures[j] += g * t * (u - dot(w, &act.features) / (wnorm * fnorm) * v) / fnorm;
                    }
                }
            }
        }
        if let (Some(h), Some(gh)) = (&self.hidden, grads.hidden.as_mut()) {
            let d = h.inputs;
            for (o, (&pre, &g)) in act.pre_hidden.iter().zip(&dfeatures).enumerate().take(h.outputs) {
                if pre <= 0.0 {
                    continue;
                }
                gh.bias[o] += g;
                for (gw, xi) in gh.weights[o * d..(o + 1) * d].iter_mut().zip(x) {
                    *gw += g * xi;
                }
            }
        }
    }

    /// `params -= step * grads`.
    pub fn apply(&mut self, grads: &Gradients, step: f64) {
        fn update(layer: &mut Dense, grad: &Dense, step: f64) {
            for (w, g) in layer.weights.iter_mut().zip(&grad.weights) {
                *w -= step * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
                *b -= step * g;
            }
        }
        if let (Some(h), Some(gh)) = (self.hidden.as_mut(), grads.hidden.as_ref()) {
            update(h, gh, step);
        }
        update(&mut self.head, &grads.head, step);
    }

    /// The same model with every head logit negated, which reverses each class ranking.
    pub fn inverted(&self) -> Model {
        let mut m = self.clone();
        for w in m.head.weights.iter_mut().chain(m.head.bias.iter_mut()) {
            *w = -*w;
        }
        m
    }

    pub fn parameters_finite(&self) -> bool {
        let head = self.head.weights.iter().chain(&self.head.bias);
        match &self.hidden {
            Some(h) => head.chain(&h.weights).chain(&h.bias).all(|v| v.is_finite()),
            None => head.clone().all(|v| v.is_finite()),
        }
    }

    #[cfg(test)]
    fn params_mut(&mut self) -> Vec<&mut f64> {
        let mut out: Vec<&mut f64> = self.head.weights.iter_mut().chain(self.head.bias.iter_mut()).collect();
        if let Some(h) = self.hidden.as_mut() {
            out.extend(h.weights.iter_mut().chain(h.bias.iter_mut()));
        }
        out
    }
}

#[cfg(test)]
impl Gradients {
    fn flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.head.weights.iter().chain(&self.head.bias).copied().collect();
        if let Some(h) = &self.hidden {
            out.extend(h.weights.iter().chain(&h.bias));
        }
        out
    }
}
