//! Layered stochastic networks of ±1 Bernoulli units.
//!
//! A recognition network samples bottom-up, `v -> u^1 -> ... -> u`, and a
//! generator network samples top-down, `u -> ... -> u^1 -> v`. The visible
//! layer of the generator is split into a deterministic `tanh` block for
//! continuous pixels and a Bernoulli block for binary units (class spins, or
//! binary pixels on toy datasets).

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{check_len, QahmError, Result};
use crate::spin::SpinVector;

/// Uniform half-width of the initial weight distribution.
pub const INIT_WEIGHT_SCALE: f64 = 0.01;

/// `P(u = +1 | logit) = 1 / (1 + exp(-2 logit))`.
#[inline]
pub fn spin_up_probability(logit: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * logit).exp())
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln P(spin | logit)` for a ±1 Bernoulli unit.
#[inline]
pub fn spin_log_prob(spin: f64, logit: f64) -> f64 {
    -softplus(-2.0 * spin * logit)
}

#[derive(Clone, Debug, PartialEq)]
struct Affine {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Affine {
    fn zeros(rows: usize, cols: usize) -> Self {
        Affine {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
        }
    }

    fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-INIT_WEIGHT_SCALE, INIT_WEIGHT_SCALE).unwrap();
        Affine {
            rows,
            cols,
            weights: (0..rows * cols).map(|_| dist.sample(rng)).collect(),
            biases: vec![0.0; rows],
        }
    }

    fn from_parts(rows: usize, cols: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        check_len("layer weights", rows * cols, weights.len())?;
        check_len("layer biases", rows, biases.len())?;
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(QahmError::InvalidParameter("layer parameters must be finite".into()));
        }
        Ok(Affine {
            rows,
            cols,
            weights,
            biases,
        })
    }

    fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("layer input", self.cols, input.len())?;
        Ok(self.logits_unchecked(input))
    }

    fn logits_unchecked(&self, input: &[f64]) -> Vec<f64> {
        if self.cols == 0 {
            return self.biases.clone();
        }
        self.weights
            .chunks_exact(self.cols)
            .take(self.rows)
            .zip(&self.biases)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

macro_rules! affine_accessors {
    ($ty:ty) => {
        impl $ty {
            pub fn rows(&self) -> usize {
                self.params.rows
            }

            pub fn cols(&self) -> usize {
                self.params.cols
            }

            /// Row-major weight matrix, `rows x cols`.
            pub fn weights(&self) -> &[f64] {
                &self.params.weights
            }

            pub fn weights_mut(&mut self) -> &mut [f64] {
                &mut self.params.weights
            }

            pub fn biases(&self) -> &[f64] {
                &self.params.biases
            }

            pub fn biases_mut(&mut self) -> &mut [f64] {
                &mut self.params.biases
            }

            pub fn weight(&self, i: usize, j: usize) -> f64 {
                self.params.weights[i * self.params.cols + j]
            }

            pub fn set_weight(&mut self, i: usize, j: usize, value: f64) {
                self.params.weights[i * self.params.cols + j] = value;
            }

            pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
                self.params.logits(input)
            }

            pub(crate) fn apply(&mut self, grad: &LayerGradient, lr: f64) {
                for (w, g) in self.params.weights.iter_mut().zip(&grad.weights) {
                    *w += lr * g;
                }
                for (b, g) in self.params.biases.iter_mut().zip(&grad.biases) {
                    *b += lr * g;
                }
            }

            pub(crate) fn all_finite(&self) -> bool {
                self.params
                    .weights
                    .iter()
                    .chain(&self.params.biases)
                    .all(|v| v.is_finite())
            }
        }
    };
}

/// One conditional layer of independent ±1 units:
/// `P(u_i = +1 | x) = sigmoid(2 (sum_j W_ij x_j + b_i))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliLayer {
    params: Affine,
}

affine_accessors!(BernoulliLayer);

impl BernoulliLayer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BernoulliLayer {
            params: Affine::zeros(rows, cols),
        }
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        BernoulliLayer {
            params: Affine::random(rows, cols, rng),
        }
    }

    pub fn from_parts(rows: usize, cols: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        Ok(BernoulliLayer {
            params: Affine::from_parts(rows, cols, weights, biases)?,
        })
    }

    /// `P(u_i = +1 | input)` for every unit.
    pub fn cond_probs(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .params
            .logits(input)?
            .into_iter()
            .map(spin_up_probability)
            .collect())
    }

    /// Conditional means `E[u_i | input] = tanh(logit_i)`.
    pub fn means(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.params.logits(input)?.into_iter().map(f64::tanh).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, input: &[f64], rng: &mut R) -> Result<SpinVector> {
        let probs = self.cond_probs(input)?;
        Ok(SpinVector::from_vec_unchecked(
            probs
                .into_iter()
                .map(|p| if rng.random::<f64>() < p { 1.0 } else { -1.0 })
                .collect(),
        ))
    }

    /// `ln P(output | input)`.
    pub fn log_prob(&self, input: &[f64], output: &[f64]) -> Result<f64> {
        check_len("layer output", self.rows(), output.len())?;
        Ok(self
            .params
            .logits(input)?
            .into_iter()
            .zip(output)
            .map(|(x, &s)| spin_log_prob(s, x))
            .sum())
    }
}

/// Deterministic `tanh` layer emitting continuous values in `(-1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousHead {
    params: Affine,
}

affine_accessors!(ContinuousHead);

impl ContinuousHead {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ContinuousHead {
            params: Affine::zeros(rows, cols),
        }
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        ContinuousHead {
            params: Affine::random(rows, cols, rng),
        }
    }

    pub fn from_parts(rows: usize, cols: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        Ok(ContinuousHead {
            params: Affine::from_parts(rows, cols, weights, biases)?,
        })
    }

    pub fn activate(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.params.logits(input)?.into_iter().map(f64::tanh).collect())
    }

    /// Log-density of `target` under a unit-variance Gaussian centred on the
    /// activation, with the normalizing constant dropped.
    pub fn log_density(&self, input: &[f64], target: &[f64]) -> Result<f64> {
        check_len("head target", self.rows(), target.len())?;
        let out = self.activate(input)?;
        Ok(-0.5 * out.iter().zip(target).map(|(m, t)| (t - m) * (t - m)).sum::<f64>())
    }
}

/// Layer widths shared by a recognition/generator pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerWidths {
    /// Continuous visible units, modelled by the `tanh` head.
    pub continuous: usize,
    /// Binary visible units, modelled by Bernoulli units.
    pub binary: usize,
    /// Hidden widths from the visible side up; the last entry is the deepest layer.
    pub hidden: Vec<usize>,
}

impl LayerWidths {
    pub fn new(continuous: usize, binary: usize, hidden: Vec<usize>) -> Result<Self> {
        if continuous + binary == 0 {
            return Err(QahmError::InvalidParameter("visible layer is empty".into()));
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(QahmError::InvalidParameter(
                "hidden widths must be a nonempty list of positive integers".into(),
            ));
        }
        Ok(LayerWidths {
            continuous,
            binary,
            hidden,
        })
    }

    pub fn visible(&self) -> usize {
        self.continuous + self.binary
    }

    pub fn deepest(&self) -> usize {
        *self.hidden.last().unwrap()
    }

    pub fn stochastic_units(&self) -> usize {
        self.binary + self.hidden.iter().sum::<usize>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Recognition,
    Generator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisibleHead {
    pub continuous: ContinuousHead,
    pub binary: BernoulliLayer,
}

/// One ancestral sample through a network.
///
/// `hidden[0]` is `u^1` (next to the visible layer) and `hidden.last()` is the
/// deepest layer `u`. `visible` is continuous pixels followed by binary units.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub visible: Vec<f64>,
    pub hidden: Vec<SpinVector>,
}

impl Trajectory {
    pub fn deepest(&self) -> &SpinVector {
        self.hidden.last().unwrap()
    }
}

/// A stack of stochastic layers in one direction.
///
/// Layers are indexed by the hidden layer they produce: for the recognition
/// network `layers[k]` maps `hidden[k-1]` (or `v` when `k = 0`) to
/// `hidden[k]`; for the generator `layers[k]` maps `hidden[k+1]` to
/// `hidden[k]` and `head` maps `hidden[0]` to the visible layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepNetwork {
    direction: Direction,
    widths: LayerWidths,
    pub layers: Vec<BernoulliLayer>,
    pub head: Option<VisibleHead>,
}

impl DeepNetwork {
    fn build(
        direction: Direction,
        widths: &LayerWidths,
        mut bern: impl FnMut(usize, usize) -> BernoulliLayer,
        mut cont: impl FnMut(usize, usize) -> ContinuousHead,
    ) -> Self {
        let h = &widths.hidden;
        let (layers, head) = match direction {
            Direction::Recognition => {
                let layers = (0..h.len())
                    .map(|k| {
                        let input = if k == 0 { widths.visible() } else { h[k - 1] };
                        bern(h[k], input)
                    })
                    .collect();
                (layers, None)
            }
            Direction::Generator => {
                let layers = (0..h.len() - 1).map(|k| bern(h[k], h[k + 1])).collect();
                let head = VisibleHead {
                    continuous: cont(widths.continuous, h[0]),
                    binary: bern(widths.binary, h[0]),
                };
                (layers, Some(head))
            }
        };
        DeepNetwork {
            direction,
            widths: widths.clone(),
            layers,
            head,
        }
    }

    pub fn zeros(direction: Direction, widths: &LayerWidths) -> Self {
        Self::build(direction, widths, BernoulliLayer::zeros, ContinuousHead::zeros)
    }

    /// Weights uniform in `[-0.01, 0.01]`, biases zero.
    pub fn random<R: Rng + ?Sized>(direction: Direction, widths: &LayerWidths, rng: &mut R) -> Self {
        let rng = std::cell::RefCell::new(rng);
        Self::build(
            direction,
            widths,
            |r, c| BernoulliLayer::random(r, c, &mut **rng.borrow_mut()),
            |r, c| ContinuousHead::random(r, c, &mut **rng.borrow_mut()),
        )
    }

    /// Assembles a network from explicit layers, checking that widths chain.
    pub fn from_parts(
        direction: Direction,
        widths: LayerWidths,
        layers: Vec<BernoulliLayer>,
        head: Option<VisibleHead>,
    ) -> Result<Self> {
        let template = Self::zeros(direction, &widths);
        check_len("layer count", template.layers.len(), layers.len())?;
        for (t, l) in template.layers.iter().zip(&layers) {
            check_len("layer rows", t.rows(), l.rows())?;
            check_len("layer cols", t.cols(), l.cols())?;
        }
        match (&template.head, &head) {
            (None, None) => {}
            (Some(t), Some(h)) => {
                check_len("head rows", t.continuous.rows(), h.continuous.rows())?;
                check_len("head cols", t.continuous.cols(), h.continuous.cols())?;
                check_len("binary head rows", t.binary.rows(), h.binary.rows())?;
                check_len("binary head cols", t.binary.cols(), h.binary.cols())?;
            }
            _ => return Err(QahmError::Usage("only generator networks carry a visible head".into())),
        }
        Ok(DeepNetwork {
            direction,
            widths,
            layers,
            head,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn widths(&self) -> &LayerWidths {
        &self.widths
    }

    fn expect(&self, direction: Direction) -> Result<()> {
        if self.direction == direction {
            Ok(())
        } else {
            Err(QahmError::Usage(format!(
                "operation needs a {direction:?} network, got {:?}",
                self.direction
            )))
        }
    }

    fn head(&self) -> &VisibleHead {
        self.head.as_ref().expect("generator networks always carry a head")
    }

    /// Bottom-up ancestral sample `v -> u^1 -> ... -> u`.
    pub fn recognition_pass<R: Rng + ?Sized>(&self, v: &[f64], rng: &mut R) -> Result<Trajectory> {
        self.expect(Direction::Recognition)?;
        check_len("visible vector", self.widths.visible(), v.len())?;
        let mut hidden: Vec<SpinVector> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = hidden.last().map_or(v, |h| h.as_slice());
            let next = layer.sample(input, rng)?;
            hidden.push(next);
        }
        Ok(Trajectory {
            visible: v.to_vec(),
            hidden,
        })
    }

    /// Top-down ancestral sample starting from the deepest layer `u`.
    pub fn generator_pass<R: Rng + ?Sized>(&self, u: &SpinVector, rng: &mut R) -> Result<Trajectory> {
        self.expect(Direction::Generator)?;
        check_len("deepest layer", self.widths.deepest(), u.len())?;
        let depth = self.widths.hidden.len();
        let mut hidden = vec![u.clone(); depth];
        for k in (0..depth - 1).rev() {
            hidden[k] = self.layers[k].sample(hidden[k + 1].as_slice(), rng)?;
        }
        let head = self.head();
        let mut visible = head.continuous.activate(hidden[0].as_slice())?;
        visible.extend(head.binary.sample(hidden[0].as_slice(), rng)?.iter());
        Ok(Trajectory { visible, hidden })
    }

    /// Generator conditional means of the visible layer given `u^1`:
    /// `tanh` outputs for continuous units, `E[v_i | u^1]` for binary ones.
    pub fn visible_means(&self, u1: &[f64]) -> Result<Vec<f64>> {
        self.expect(Direction::Generator)?;
        let head = self.head();
        let mut out = head.continuous.activate(u1)?;
        out.extend(head.binary.means(u1)?);
        Ok(out)
    }

    /// Probabilities `P(v_b = +1 | u^1)` of the binary visible units.
    pub fn binary_visible_probs(&self, u1: &[f64]) -> Result<Vec<f64>> {
        self.expect(Direction::Generator)?;
        self.head().binary.cond_probs(u1)
    }

    /// `ln Q(u^1, ..., u | v)` for a recognition trajectory.
    pub fn recognition_log_prob(&self, traj: &Trajectory) -> Result<f64> {
        self.expect(Direction::Recognition)?;
        check_len("trajectory depth", self.layers.len(), traj.hidden.len())?;
        let mut total = 0.0;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 {
                traj.visible.as_slice()
            } else {
                traj.hidden[k - 1].as_slice()
            };
            total += layer.log_prob(input, traj.hidden[k].as_slice())?;
        }
        Ok(total)
    }

    /// `ln P(v, u^1, ..., u^L | u)`, excluding the prior. Continuous units
    /// contribute the unit-variance Gaussian log-density without its constant.
    pub fn generator_log_prob(&self, traj: &Trajectory) -> Result<f64> {
        self.expect(Direction::Generator)?;
        check_len("trajectory depth", self.widths.hidden.len(), traj.hidden.len())?;
        check_len("visible vector", self.widths.visible(), traj.visible.len())?;
        let mut total = 0.0;
        for (k, layer) in self.layers.iter().enumerate() {
            total += layer.log_prob(traj.hidden[k + 1].as_slice(), traj.hidden[k].as_slice())?;
        }
        let head = self.head();
        let u1 = traj.hidden[0].as_slice();
        let (cont, bin) = traj.visible.split_at(self.widths.continuous);
        total += head.continuous.log_density(u1, cont)?;
        total += head.binary.log_prob(u1, bin)?;
        Ok(total)
    }

    pub(crate) fn apply(&mut self, grad: &NetworkGradient, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            layer.apply(g, lr);
        }
        if let (Some(head), Some(g)) = (self.head.as_mut(), grad.head.as_ref()) {
            head.continuous.apply(&g.0, lr);
            head.binary.apply(&g.1, lr);
        }
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.layers.iter().all(BernoulliLayer::all_finite)
            && self
                .head
                .as_ref()
                .is_none_or(|h| h.continuous.all_finite() && h.binary.all_finite())
    }

    /// Visits every parameter in a fixed order (layers, then head).
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights());
            out.extend_from_slice(l.biases());
        }
        if let Some(h) = &self.head {
            out.extend_from_slice(h.continuous.weights());
            out.extend_from_slice(h.continuous.biases());
            out.extend_from_slice(h.binary.weights());
            out.extend_from_slice(h.binary.biases());
        }
        out
    }

    /// Mutable access to parameter `index` in [`DeepNetwork::parameters`] order.
    pub fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            let n = l.weights().len();
            if index < n {
                return &mut l.weights_mut()[index];
            }
            index -= n;
            let n = l.biases().len();
            if index < n {
                return &mut l.biases_mut()[index];
            }
            index -= n;
        }
        let h = self.head.as_mut().expect("parameter index out of range");
        let lens = [
            h.continuous.weights().len(),
            h.continuous.biases().len(),
            h.binary.weights().len(),
        ];
        let mut slot = 0;
        while slot < 3 && index >= lens[slot] {
            index -= lens[slot];
            slot += 1;
        }
        match slot {
            0 => &mut h.continuous.weights_mut()[index],
            1 => &mut h.continuous.biases_mut()[index],
            2 => &mut h.binary.weights_mut()[index],
            _ => h
                .binary
                .biases_mut()
                .get_mut(index)
                .expect("parameter index out of range"),
        }
    }

    /// Every joint hidden configuration of the recognition network for input
    /// `v`, with its probability `Q(u^1, ..., u | v)`.
    pub fn enumerate_recognition(&self, v: &[f64]) -> Result<Vec<(Vec<SpinVector>, f64)>> {
        self.expect(Direction::Recognition)?;
        check_len("visible vector", self.widths.visible(), v.len())?;
        let total: usize = self.widths.hidden.iter().sum();
        if total > ENUMERATION_LIMIT {
            return Err(QahmError::Capacity {
                what: "hidden units to enumerate",
                actual: total,
                limit: ENUMERATION_LIMIT,
            });
        }
        let mut frontier: Vec<(Vec<SpinVector>, f64)> = vec![(Vec::new(), 1.0)];
        for layer in &self.layers {
            let width = layer.rows();
            let mut next = Vec::with_capacity(frontier.len() << width);
            for (prefix, p) in frontier {
                let input = prefix.last().map_or(v, |h| h.as_slice());
                let probs = layer.cond_probs(input)?;
                for state in 0..1usize << width {
                    let s = SpinVector::from_index(state, width);
                    let q: f64 = probs
                        .iter()
                        .zip(s.iter())
                        .map(|(&p1, x)| if x > 0.0 { p1 } else { 1.0 - p1 })
                        .product();
                    let mut traj = prefix.clone();
                    traj.push(s);
                    next.push((traj, p * q));
                }
            }
            frontier = next;
        }
        Ok(frontier)
    }
}

impl DeepNetwork {
    /// Every top-down completion of the deepest state `u`: hidden layers and
    /// binary visible units, with probability `P(v, u^1, ..., u^L | u)`.
    /// Continuous pixels take their deterministic `tanh` values.
    pub fn enumerate_generator(&self, u: &SpinVector) -> Result<Vec<(Trajectory, f64)>> {
        self.expect(Direction::Generator)?;
        check_len("deepest layer", self.widths.deepest(), u.len())?;
        let depth = self.widths.hidden.len();
        let total: usize = self.widths.hidden[..depth - 1].iter().sum::<usize>() + self.widths.binary;
        if total > ENUMERATION_LIMIT {
            return Err(QahmError::Capacity {
                what: "generator units to enumerate",
                actual: total,
                limit: ENUMERATION_LIMIT,
            });
        }
        // Partial trajectories hold hidden layers from the deepest downwards.
        let mut frontier: Vec<(Vec<SpinVector>, f64)> = vec![(vec![u.clone()], 1.0)];
        for k in (0..depth - 1).rev() {
            let layer = &self.layers[k];
            let mut next = Vec::with_capacity(frontier.len() << layer.rows());
            for (prefix, p) in frontier {
                let probs = layer.cond_probs(prefix.last().unwrap().as_slice())?;
                for state in 0..1usize << layer.rows() {
                    let s = SpinVector::from_index(state, layer.rows());
                    let mut t = prefix.clone();
                    t.push(s.clone());
                    next.push((t, p * product_prob(&probs, &s)));
                }
            }
            frontier = next;
        }
        let head = self.head();
        let mut out = Vec::with_capacity(frontier.len() << self.widths.binary);
        for (mut layers, p) in frontier {
            layers.reverse();
            let u1 = layers[0].as_slice();
            let cont = head.continuous.activate(u1)?;
            let probs = head.binary.cond_probs(u1)?;
            for state in 0..1usize << self.widths.binary {
                let s = SpinVector::from_index(state, self.widths.binary);
                let mut visible = cont.clone();
                visible.extend(s.iter());
                out.push((
                    Trajectory {
                        visible,
                        hidden: layers.clone(),
                    },
                    p * product_prob(&probs, &s),
                ));
            }
        }
        Ok(out)
    }
}

fn product_prob(up: &[f64], s: &SpinVector) -> f64 {
    up.iter()
        .zip(s.iter())
        .map(|(&p, x)| if x > 0.0 { p } else { 1.0 - p })
        .product()
}

/// Limit on the number of jointly enumerated stochastic units.
pub const ENUMERATION_LIMIT: usize = 20;

/// Gradient with the shape of one affine layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerGradient {
    fn zeros(rows: usize, cols: usize) -> Self {
        LayerGradient {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
        }
    }

    /// Adds `weight * residual_i * input_j` to the weights and
    /// `weight * residual_i` to the biases.
    fn add_outer(&mut self, residual: &[f64], input: &[f64], weight: f64) {
        for (i, &r) in residual.iter().enumerate() {
            let r = weight * r;
            if r == 0.0 {
                continue;
            }
            self.biases[i] += r;
            let row = &mut self.weights[i * self.cols..(i + 1) * self.cols];
            for (g, x) in row.iter_mut().zip(input) {
                *g += r * x;
            }
        }
    }

    fn add_scaled(&mut self, other: &LayerGradient, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += scale * b;
        }
    }

    fn scale(&mut self, s: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .for_each(|v| *v *= s);
    }

    fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Gradient for every parameter of a [`DeepNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGradient {
    pub layers: Vec<LayerGradient>,
    /// `(continuous head, binary head)` for generator networks.
    pub head: Option<(LayerGradient, LayerGradient)>,
}

impl NetworkGradient {
    pub fn zeros_like(net: &DeepNetwork) -> Self {
        NetworkGradient {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient::zeros(l.rows(), l.cols()))
                .collect(),
            head: net.head.as_ref().map(|h| {
                (
                    LayerGradient::zeros(h.continuous.rows(), h.continuous.cols()),
                    LayerGradient::zeros(h.binary.rows(), h.binary.cols()),
                )
            }),
        }
    }

    pub fn add_scaled(&mut self, other: &NetworkGradient, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(b, scale);
        }
        if let (Some(a), Some(b)) = (self.head.as_mut(), other.head.as_ref()) {
            a.0.add_scaled(&b.0, scale);
            a.1.add_scaled(&b.1, scale);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.layers.iter_mut().for_each(|l| l.scale(s));
        if let Some(h) = self.head.as_mut() {
            h.0.scale(s);
            h.1.scale(s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        let head = self.head.as_ref().map_or(0.0, |h| h.0.max_abs().max(h.1.max_abs()));
        self.layers.iter().fold(head, |m, l| m.max(l.max_abs()))
    }

    /// Flattened in the same order as [`DeepNetwork::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        if let Some((c, b)) = &self.head {
            for l in [c, b] {
                out.extend_from_slice(&l.weights);
                out.extend_from_slice(&l.biases);
            }
        }
        out
    }

    /// Accumulates the generator log-likelihood gradient for one trajectory:
    /// `(u_i^l - <u_i^l>_P) u_j^{l+1}` per layer, and the squared-error
    /// residual through `tanh` for the continuous head.
    pub fn accumulate_generator(&mut self, net: &DeepNetwork, traj: &Trajectory, weight: f64) -> Result<()> {
        net.expect(Direction::Generator)?;
        for (k, layer) in net.layers.iter().enumerate() {
            let input = traj.hidden[k + 1].as_slice();
            let means = layer.means(input)?;
            let residual: Vec<f64> = traj.hidden[k].iter().zip(&means).map(|(u, m)| u - m).collect();
            self.layers[k].add_outer(&residual, input, weight);
        }
        let head = net.head();
        let (cg, bg) = self.head.as_mut().expect("generator gradient carries a head");
        let u1 = traj.hidden[0].as_slice();
        let (cont, bin) = traj.visible.split_at(net.widths.continuous);
        if !cont.is_empty() {
            let out = head.continuous.activate(u1)?;
            let residual: Vec<f64> = cont.iter().zip(&out).map(|(v, t)| (v - t) * (1.0 - t * t)).collect();
            cg.add_outer(&residual, u1, weight);
        }
        if !bin.is_empty() {
            let means = head.binary.means(u1)?;
            let residual: Vec<f64> = bin.iter().zip(&means).map(|(v, m)| v - m).collect();
            bg.add_outer(&residual, u1, weight);
        }
        Ok(())
    }

    /// Accumulates the recognition log-likelihood gradient for one trajectory:
    /// `(u_i^l - <u_i^l>_Q) u_j^{l-1}` per layer.
    pub fn accumulate_recognition(&mut self, net: &DeepNetwork, traj: &Trajectory, weight: f64) -> Result<()> {
        net.expect(Direction::Recognition)?;
        for (k, layer) in net.layers.iter().enumerate() {
            let input = if k == 0 {
                traj.visible.as_slice()
            } else {
                traj.hidden[k - 1].as_slice()
            };
            let means = layer.means(input)?;
            let residual: Vec<f64> = traj.hidden[k].iter().zip(&means).map(|(u, m)| u - m).collect();
            self.layers[k].add_outer(&residual, input, weight);
        }
        Ok(())
    }
}
