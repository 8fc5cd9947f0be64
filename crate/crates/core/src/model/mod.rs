//! Mean-aggregation graph convolution with a two-logit link classifier.
//!
//! Each graph layer computes
//!
//! ```text
//! H_{l+1} = leaky([H_l ‖ A'·H_l] · W_l + b_l)
//! ```
//!
//! with `H_0` the pivot-relative subgraph features and `A'` the
//! row-normalized adjacency (self-loops included), so `A'·H_l` is a weighted
//! mean over each node's neighbourhood. The head maps the final embedding
//! of every 1-hop node to `(z_P, z_N)`.
//!
//! Gradients are computed by an explicit reverse pass over the activations
//! cached in a [`ForwardTrace`].

mod checkpoint;

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::distributions::{Distribution, Uniform};

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::error::{Error, Result};
use crate::rng;
use crate::subgraph::Subgraph;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.1;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Affine map `x·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            weight: Array2::zeros((rows, cols)),
            bias: Array1::zeros(cols),
        }
    }

    fn shape(&self) -> (usize, usize) {
        self.weight.dim()
    }

    fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Learned weights: graph layers plus the link head.
#[derive(Clone, Debug)]
pub struct GcnParams {
    pub layers: Vec<Linear>,
    pub head: Linear,
    pub leaky_slope: f64,
    /// Hash of the training configuration that produced these weights.
    pub config_hash: u64,
    id: u64,
}

impl PartialEq for GcnParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.head == other.head
            && self.leaky_slope.to_bits() == other.leaky_slope.to_bits()
            && self.config_hash == other.config_hash
    }
}

/// Parameter-shaped gradient (or momentum) buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Linear>,
    pub head: Linear,
}

impl Gradients {
    pub fn zeros_like(params: &GcnParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Linear::zeros(l.shape().0, l.shape().1))
                .collect(),
            head: Linear::zeros(params.head.shape().0, params.head.shape().1),
        }
    }

    fn parts_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.layers.iter_mut().chain(std::iter::once(&mut self.head))
    }

    fn parts(&self) -> impl Iterator<Item = &Linear> {
        self.layers.iter().chain(std::iter::once(&self.head))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.parts_mut().zip(other.parts()) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in self.parts_mut() {
            p.weight *= factor;
            p.bias *= factor;
        }
    }

    /// Flattened in the same order as [`GcnParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(self.parts())
    }
}

fn flatten<'a>(parts: impl Iterator<Item = &'a Linear>) -> Vec<f64> {
    let mut out = Vec::new();
    for p in parts {
        out.extend(p.weight.iter());
        out.extend(p.bias.iter());
    }
    out
}

/// Cached activations of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    params_id: u64,
    adjacency: Array2<f64>,
    /// Per graph layer: concatenated input `[H ‖ A'H]` and pre-activation.
    cats: Vec<Array2<f64>>,
    pres: Vec<Array2<f64>>,
    /// Final embeddings of the 1-hop rows.
    head_input: Array2<f64>,
    node_count: usize,
    /// `(z_P, z_N)` per 1-hop node.
    pub logits: Vec<[f64; 2]>,
}

impl ForwardTrace {
    /// Softmax probability of a link for each 1-hop node.
    pub fn link_probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|z| link_probability(*z)).collect()
    }
}

/// `softmax(z)[0]` computed stably.
pub fn link_probability(z: [f64; 2]) -> f64 {
    1.0 / (1.0 + (z[1] - z[0]).exp())
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

impl GcnParams {
    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    pub fn init(d_in: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if d_in == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "invalid architecture: d_in={d_in}, hidden={hidden:?}"
            )));
        }
        let mut rng = rng::stream(seed, &[0x1A7E]);
        let mut draw = |rows: usize, cols: usize| {
            let a = 1.0 / (rows as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a);
            Linear {
                weight: Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut rng)),
                bias: Array1::zeros(cols),
            }
        };
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = d_in;
        for &h in hidden {
            layers.push(draw(2 * width, h));
            width = h;
        }
        let head = draw(width, 2);
        Ok(Self {
            layers,
            head,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            config_hash: 0,
            id: fresh_id(),
        })
    }

    pub(crate) fn from_parts(layers: Vec<Linear>, head: Linear, leaky_slope: f64, config_hash: u64) -> Self {
        Self {
            layers,
            head,
            leaky_slope,
            config_hash,
            id: fresh_id(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].shape().0 / 2
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::len).sum::<usize>() + self.head.len()
    }

    pub fn check_input_dim(&self, d: usize) -> Result<()> {
        if self.input_dim() != d {
            return Err(Error::Shape {
                layer: "layer 0".into(),
                reason: format!(
                    "expects {}-dimensional features (weight rows {}), got d={d}",
                    self.input_dim(),
                    self.layers[0].shape().0
                ),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(self.layers.iter().chain(std::iter::once(&self.head)))
    }

    /// Overwrites every parameter from a flat vector in [`Self::to_flat`] order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::SizeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter().copied();
        for p in self.layers.iter_mut().chain(std::iter::once(&mut self.head)) {
            p.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            p.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        self.id = fresh_id();
        Ok(())
    }

    /// Applies `f(param, grad, state)` element-wise over every parameter,
    /// its gradient and an optimizer state buffer of the same shape.
    pub fn update_with(&mut self, grads: &Gradients, state: &mut Gradients, mut f: impl FnMut(&mut f64, f64, &mut f64)) {
        let params = self.layers.iter_mut().chain(std::iter::once(&mut self.head));
        for ((p, g), st) in params.zip(grads.parts()).zip(state.parts_mut()) {
            for ((w, &gw), sw) in p.weight.iter_mut().zip(g.weight.iter()).zip(st.weight.iter_mut()) {
                f(w, gw, sw);
            }
            for ((b, &gb), sb) in p.bias.iter_mut().zip(g.bias.iter()).zip(st.bias.iter_mut()) {
                f(b, gb, sb);
            }
        }
        self.id = fresh_id();
    }

    pub fn forward(&self, sg: &Subgraph) -> Result<ForwardTrace> {
        let (n, d) = sg.features.dim();
        self.check_input_dim(d)?;
        if sg.adjacency.dim() != (n, n) {
            return Err(Error::Shape {
                layer: "input".into(),
                reason: format!("adjacency {:?} for {n} nodes", sg.adjacency.dim()),
            });
        }
        if sg.one_hop_count == 0 || sg.one_hop_count > n {
            return Err(Error::Shape {
                layer: "head".into(),
                reason: format!("{} 1-hop rows in a {n}-node subgraph", sg.one_hop_count),
            });
        }

        let slope = self.leaky_slope;
        let mut cats = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut h = sg.features.clone();
        for layer in &self.layers {
            let agg = sg.adjacency.dot(&h);
            let cat = concatenate![Axis(1), h, agg];
            let pre = cat.dot(&layer.weight) + &layer.bias;
            h = pre.mapv(|x| leaky(x, slope));
            cats.push(cat);
            pres.push(pre);
        }
        let head_input = h.slice(s![..sg.one_hop_count, ..]).to_owned();
        let z = head_input.dot(&self.head.weight) + &self.head.bias;
        let logits = z.rows().into_iter().map(|r| [r[0], r[1]]).collect();
        Ok(ForwardTrace {
            params_id: self.id,
            adjacency: sg.adjacency.clone(),
            cats,
            pres,
            head_input,
            node_count: n,
            logits,
        })
    }

    /// Reverse pass: gradients of a scalar loss given its gradient with
    /// respect to each 1-hop node's logits.
    pub fn backward(&self, trace: &ForwardTrace, logit_grads: &[[f64; 2]]) -> Result<Gradients> {
        if trace.params_id != self.id {
            return Err(Error::StaleTrace);
        }
        let m = trace.logits.len();
        if logit_grads.len() != m {
            return Err(Error::SizeMismatch(format!(
                "{} logit gradients for {m} 1-hop nodes",
                logit_grads.len()
            )));
        }
        let g = Array2::from_shape_fn((m, 2), |(i, c)| logit_grads[i][c]);
        let mut grads = Gradients::zeros_like(self);

        grads.head.weight = trace.head_input.t().dot(&g);
        grads.head.bias = g.sum_axis(Axis(0));
        let width = self.head.shape().0;
        let mut dh = Array2::<f64>::zeros((trace.node_count, width));
        dh.slice_mut(s![..m, ..]).assign(&g.dot(&self.head.weight.t()));

        let slope = self.leaky_slope;
        for l in (0..self.layers.len()).rev() {
            let dpre = &dh * &trace.pres[l].mapv(|x| leaky_grad(x, slope));
            grads.layers[l].weight = trace.cats[l].t().dot(&dpre);
            grads.layers[l].bias = dpre.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let dcat = dpre.dot(&self.layers[l].weight.t());
            let w = dcat.ncols() / 2;
            dh = dcat.slice(s![.., ..w]).to_owned() + trace.adjacency.t().dot(&dcat.slice(s![.., w..]));
        }
        Ok(grads)
    }
}
