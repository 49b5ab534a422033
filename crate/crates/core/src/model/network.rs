//! The gated two-stream network: parameter layout, forward passes with
//! recorded intermediates, and the matching backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{GateLayout, ModelConfig};
use super::layers::{self, cast, GateShape, GruCache, GruShape, NormCache, Scalar};
use crate::error::{Error, Result};

/// Input geometry the network is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub context_len: usize,
    pub motion_channels: usize,
    pub motion_len: usize,
}

impl InputDims {
    pub fn standard() -> Self {
        InputDims {
            context_len: 50,
            motion_channels: crate::dataio::MOTION_AXES,
            motion_len: crate::dataio::WEEK_MINUTES,
        }
    }

    pub fn motion_size(&self) -> usize {
        self.motion_channels * self.motion_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Init {
    Zero,
    One,
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Glorot { fan_in: usize, fan_out: usize },
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    #[serde(skip, default = "zero_init")]
    init: Init,
}

fn zero_init() -> Init {
    Init::Zero
}

impl PartialEq for ParamGroup {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name && self.offset == o.offset && self.shape == o.shape
    }
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Default)]
struct LayoutBuilder {
    groups: Vec<ParamGroup>,
    next: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.next;
        let g = ParamGroup {
            name,
            offset,
            shape,
            init,
        };
        self.next += g.len();
        self.groups.push(g);
        offset
    }
}

#[derive(Debug, Clone)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

#[derive(Debug, Clone)]
struct Gate {
    w: usize,
    b: usize,
    channels: usize,
    len: usize,
    per_position: bool,
}

impl Gate {
    fn n(&self) -> usize {
        if self.per_position {
            self.channels * self.len
        } else {
            self.channels
        }
    }
}

#[derive(Debug, Clone)]
struct Norm {
    gamma: usize,
    beta: usize,
    channels: usize,
    len: usize,
}

#[derive(Debug, Clone)]
struct Conv {
    w: usize,
    b: usize,
    cin: usize,
    cout: usize,
    k: usize,
    pool: usize,
    len: usize,
}

#[derive(Debug, Clone)]
struct Gru {
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    input: usize,
    hidden: usize,
    steps: usize,
}

/// Network structure: everything except the parameter values.
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    dims: InputDims,
    groups: Vec<ParamGroup>,
    n_params: usize,
    context_gate: Option<Gate>,
    context_layers: Vec<Dense>,
    motion_gate: Option<Gate>,
    norm_in: Option<Norm>,
    convs: Vec<Conv>,
    norm_out: Option<Norm>,
    gru: Option<Gru>,
    head: Vec<Dense>,
}

/// Dropout source for one training sample.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

fn dropout_apply<T: Scalar>(x: &mut [T], drop: &mut Option<Dropout<'_>>) -> Option<Vec<T>> {
    let d = drop.as_mut()?;
    if d.rate <= 0.0 {
        return None;
    }
    let keep: T = cast(1.0 / (1.0 - d.rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if d.rng.gen::<f64>() < d.rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    for (v, &m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

/// Dense → ReLU → Dropout, recorded for backprop.
pub struct DenseTrace<T> {
    input: Vec<T>,
    /// Post-ReLU, pre-dropout activations.
    relu_out: Vec<T>,
    mask: Option<Vec<T>>,
}

pub struct ContextTrace<T> {
    input: Vec<T>,
    /// Gate outputs (importance), empty when gates are disabled.
    pub gate: Vec<T>,
    layers: Vec<DenseTrace<T>>,
    pub embedding: Vec<T>,
}

pub struct ConvTrace<T> {
    input: Vec<T>,
    pool_idx: Vec<usize>,
}

pub struct MotionTrace<T> {
    input: Vec<T>,
    pub gate: Vec<T>,
    norm_in: NormCache<T>,
    convs: Vec<ConvTrace<T>>,
    norm_out: NormCache<T>,
    gru: GruCache<T>,
    pub embedding: Vec<T>,
}

pub struct HeadTrace<T> {
    input: Vec<T>,
    layers: Vec<DenseTrace<T>>,
    last_input: Vec<T>,
    pub logit: T,
}

pub struct Trace<T> {
    pub context: Option<ContextTrace<T>>,
    pub motion: Option<MotionTrace<T>>,
    pub head: HeadTrace<T>,
}

impl Network {
    pub fn new(config: &ModelConfig, dims: InputDims) -> Result<Self> {
        config.validate()?;
        if dims.context_len == 0 || dims.motion_channels == 0 || dims.motion_len == 0 {
            return Err(Error::Config("input dimensions must be positive".into()));
        }
        if dims.motion_channels % config.group_norm_groups != 0 {
            return Err(Error::Config(
                "motion channels must be divisible by group_norm_groups".into(),
            ));
        }
        let mut b = LayoutBuilder::default();
        let gate = |b: &mut LayoutBuilder, name: &str, channels, len, layout| {
            let per_position = layout == GateLayout::PerPosition;
            let shape = if per_position { vec![channels, len] } else { vec![channels] };
            Gate {
                w: b.push(format!("{name}.weight"), shape.clone(), Init::Zero),
                b: b.push(format!("{name}.bias"), shape, Init::Zero),
                channels,
                len,
                per_position,
            }
        };
        let dense = |b: &mut LayoutBuilder, name: String, inp: usize, out: usize| Dense {
            w: b.push(
                format!("{name}.weight"),
                vec![out, inp],
                Init::Glorot {
                    fan_in: inp,
                    fan_out: out,
                },
            ),
            b: b.push(format!("{name}.bias"), vec![out], Init::Zero),
            inp,
            out,
        };

        let mut context_gate = None;
        let mut context_layers = Vec::new();
        if config.streams.context() {
            if config.gates {
                context_gate = Some(gate(
                    &mut b,
                    "context_gate",
                    1,
                    dims.context_len,
                    config.context_gate_layout,
                ));
            }
            let mut inp = dims.context_len;
            for (i, &out) in config.context_encoder_layers.iter().enumerate() {
                context_layers.push(dense(&mut b, format!("context_encoder.{i}"), inp, out));
                inp = out;
            }
        }

        let (mut motion_gate, mut norm_in, mut norm_out, mut gru) = (None, None, None, None);
        let mut convs = Vec::new();
        if config.streams.motion() {
            if config.gates {
                motion_gate = Some(gate(
                    &mut b,
                    "motion_gate",
                    dims.motion_channels,
                    dims.motion_len,
                    config.motion_gate_layout,
                ));
            }
            let norm = |b: &mut LayoutBuilder, name: &str, channels, len| Norm {
                gamma: b.push(format!("{name}.gamma"), vec![channels], Init::One),
                beta: b.push(format!("{name}.beta"), vec![channels], Init::Zero),
                channels,
                len,
            };
            norm_in = Some(norm(&mut b, "motion_encoder.norm_in", dims.motion_channels, dims.motion_len));
            let (mut cin, mut len) = (dims.motion_channels, dims.motion_len);
            for (i, blk) in config.motion_cnn_blocks.iter().enumerate() {
                if len / blk.pool == 0 {
                    return Err(Error::Config(format!(
                        "motion sequence too short for CNN block {i}"
                    )));
                }
                let name = format!("motion_encoder.conv{i}");
                convs.push(Conv {
                    w: b.push(
                        format!("{name}.weight"),
                        vec![blk.out_channels, cin, blk.kernel],
                        Init::Glorot {
                            fan_in: cin * blk.kernel,
                            fan_out: blk.out_channels * blk.kernel,
                        },
                    ),
                    b: b.push(format!("{name}.bias"), vec![blk.out_channels], Init::Zero),
                    cin,
                    cout: blk.out_channels,
                    k: blk.kernel,
                    pool: blk.pool,
                    len,
                });
                cin = blk.out_channels;
                len /= blk.pool;
            }
            if cin % config.group_norm_groups != 0 {
                return Err(Error::Config(
                    "last CNN width must be divisible by group_norm_groups".into(),
                ));
            }
            norm_out = Some(norm(&mut b, "motion_encoder.norm_out", cin, len));
            let h = config.gru_hidden;
            let glorot = |i, o| Init::Glorot { fan_in: i, fan_out: o };
            gru = Some(Gru {
                w_ih: b.push("motion_encoder.gru.w_ih".into(), vec![3 * h, cin], glorot(cin, 3 * h)),
                w_hh: b.push("motion_encoder.gru.w_hh".into(), vec![3 * h, h], glorot(h, 3 * h)),
                b_ih: b.push("motion_encoder.gru.b_ih".into(), vec![3 * h], Init::Zero),
                b_hh: b.push("motion_encoder.gru.b_hh".into(), vec![3 * h], Init::Zero),
                input: cin,
                hidden: h,
                steps: len,
            });
        }

        let mut head = Vec::new();
        let mut inp = config.head_input();
        for (i, &out) in config.head_layers.iter().enumerate() {
            head.push(dense(&mut b, format!("head.{i}"), inp, out));
            inp = out;
        }

        Ok(Network {
            config: config.clone(),
            dims,
            n_params: b.next,
            groups: b.groups,
            context_gate,
            context_layers,
            motion_gate,
            norm_in,
            convs,
            norm_out,
            gru,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> InputDims {
        self.dims
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Fresh parameters: Glorot-uniform weights, zero biases, unit norm
    /// scales, zero gates (every gate starts at 0.5).
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![T::zero(); self.n_params];
        for g in &self.groups {
            let slot = &mut p[g.range()];
            match g.init {
                Init::Zero => {}
                Init::One => slot.iter_mut().for_each(|v| *v = T::one()),
                Init::Glorot { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    for v in slot.iter_mut() {
                        *v = cast(rng.gen_range(-a..a));
                    }
                }
            }
        }
        p
    }

    pub fn check_inputs<T>(&self, context: &[T], motion: &[T]) -> Result<()> {
        if self.config.streams.context() && context.len() != self.dims.context_len {
            return Err(Error::Shape(format!(
                "context has {} values, model expects {}",
                context.len(),
                self.dims.context_len
            )));
        }
        if self.config.streams.motion() && motion.len() != self.dims.motion_size() {
            return Err(Error::Shape(format!(
                "motion has {} values, model expects {}x{}",
                motion.len(),
                self.dims.motion_channels,
                self.dims.motion_len
            )));
        }
        Ok(())
    }

    fn dense_stack<T: Scalar>(
        p: &[T],
        layers: &[Dense],
        mut x: Vec<T>,
        drop: &mut Option<Dropout<'_>>,
    ) -> (Vec<DenseTrace<T>>, Vec<T>) {
        let mut traces = Vec::with_capacity(layers.len());
        for l in layers {
            let mut y = vec![T::zero(); l.out];
            layers::linear_forward(
                &p[l.w..l.w + l.out * l.inp],
                &p[l.b..l.b + l.out],
                &x,
                &mut y,
            );
            layers::relu_inplace(&mut y);
            let relu_out = y.clone();
            let mask = dropout_apply(&mut y, drop);
            traces.push(DenseTrace {
                input: std::mem::replace(&mut x, y),
                relu_out,
                mask,
            });
        }
        (traces, x)
    }

    fn dense_stack_backward<T: Scalar>(
        p: &[T],
        layers: &[Dense],
        traces: &[DenseTrace<T>],
        mut dy: Vec<T>,
        grad: &mut [T],
        need_dx: bool,
    ) -> Option<Vec<T>> {
        for (i, (l, t)) in layers.iter().zip(traces).enumerate().rev() {
            if let Some(mask) = &t.mask {
                for (g, &m) in dy.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            layers::relu_backward(&t.relu_out, &mut dy);
            let (dw, db) = split_two(grad, l.w, l.out * l.inp, l.b, l.out);
            let mut dx = vec![T::zero(); l.inp];
            let want = i > 0 || need_dx;
            layers::linear_backward(
                &p[l.w..l.w + l.out * l.inp],
                &t.input,
                &dy,
                dw,
                db,
                want.then_some(&mut dx[..]),
            );
            if !want {
                return None;
            }
            dy = dx;
        }
        Some(dy)
    }

    fn gate_shape(g: &Gate, relu: bool) -> GateShape {
        GateShape {
            channels: g.channels,
            len: g.len,
            per_position: g.per_position,
            relu,
        }
    }

    /// Context gate outputs alone.
    pub fn context_gate_weights<T: Scalar>(&self, p: &[T], context: &[T]) -> Option<Vec<T>> {
        let g = self.context_gate.as_ref()?;
        let mut gated = vec![T::zero(); context.len()];
        let mut w = vec![T::zero(); context.len()];
        layers::gate_forward(
            &Self::gate_shape(g, self.config.gate_relu),
            &p[g.w..g.w + g.n()],
            &p[g.b..g.b + g.n()],
            context,
            &mut gated,
            &mut w,
        );
        Some(w)
    }

    /// Motion gate outputs alone.
    pub fn motion_gate_weights<T: Scalar>(&self, p: &[T], motion: &[T]) -> Option<Vec<T>> {
        let g = self.motion_gate.as_ref()?;
        let mut gated = vec![T::zero(); motion.len()];
        let mut w = vec![T::zero(); motion.len()];
        layers::gate_forward(
            &Self::gate_shape(g, self.config.gate_relu),
            &p[g.w..g.w + g.n()],
            &p[g.b..g.b + g.n()],
            motion,
            &mut gated,
            &mut w,
        );
        Some(w)
    }

    pub fn context_forward<T: Scalar>(
        &self,
        p: &[T],
        context: &[T],
        drop: &mut Option<Dropout<'_>>,
    ) -> ContextTrace<T> {
        let (x, gate) = match &self.context_gate {
            Some(g) => {
                let mut gated = vec![T::zero(); context.len()];
                let mut w = vec![T::zero(); context.len()];
                layers::gate_forward(
                    &Self::gate_shape(g, self.config.gate_relu),
                    &p[g.w..g.w + g.n()],
                    &p[g.b..g.b + g.n()],
                    context,
                    &mut gated,
                    &mut w,
                );
                (gated, w)
            }
            None => (context.to_vec(), Vec::new()),
        };
        let (layers, embedding) = Self::dense_stack(p, &self.context_layers, x, drop);
        ContextTrace {
            input: context.to_vec(),
            gate,
            layers,
            embedding,
        }
    }

    pub fn motion_forward<T: Scalar>(&self, p: &[T], motion: &[T]) -> MotionTrace<T> {
        let (x, gate) = match &self.motion_gate {
            Some(g) => {
                let mut gated = vec![T::zero(); motion.len()];
                let mut w = vec![T::zero(); motion.len()];
                layers::gate_forward(
                    &Self::gate_shape(g, self.config.gate_relu),
                    &p[g.w..g.w + g.n()],
                    &p[g.b..g.b + g.n()],
                    motion,
                    &mut gated,
                    &mut w,
                );
                (gated, w)
            }
            None => (motion.to_vec(), Vec::new()),
        };
        let groups = self.config.group_norm_groups;
        let ni = self.norm_in.as_ref().expect("motion stream");
        let mut h = vec![T::zero(); x.len()];
        let norm_in = layers::group_norm_forward(
            &x,
            ni.channels,
            ni.len,
            groups,
            &p[ni.gamma..ni.gamma + ni.channels],
            &p[ni.beta..ni.beta + ni.channels],
            &mut h,
        );
        let mut convs = Vec::with_capacity(self.convs.len());
        for c in &self.convs {
            let mut y = vec![T::zero(); c.cout * c.len];
            layers::conv1d_forward(
                &p[c.w..c.w + c.cout * c.cin * c.k],
                &p[c.b..c.b + c.cout],
                &h,
                c.cin,
                c.cout,
                c.k,
                c.len,
                &mut y,
            );
            let (pooled, idx) = layers::relu_maxpool_forward(&y, c.cout, c.len, c.pool);
            convs.push(ConvTrace {
                input: std::mem::replace(&mut h, pooled),
                pool_idx: idx,
            });
        }
        let no = self.norm_out.as_ref().expect("motion stream");
        let mut normed = vec![T::zero(); h.len()];
        let norm_out = layers::group_norm_forward(
            &h,
            no.channels,
            no.len,
            groups,
            &p[no.gamma..no.gamma + no.channels],
            &p[no.beta..no.beta + no.channels],
            &mut normed,
        );
        let g = self.gru.as_ref().expect("motion stream");
        let hh = g.hidden;
        let gru = layers::gru_forward(
            &GruShape {
                input: g.input,
                hidden: hh,
                steps: g.steps,
            },
            &p[g.w_ih..g.w_ih + 3 * hh * g.input],
            &p[g.w_hh..g.w_hh + 3 * hh * hh],
            &p[g.b_ih..g.b_ih + 3 * hh],
            &p[g.b_hh..g.b_hh + 3 * hh],
            &normed,
        );
        let embedding = gru.last(hh).to_vec();
        MotionTrace {
            input: motion.to_vec(),
            gate,
            norm_in,
            convs,
            norm_out,
            gru,
            embedding,
        }
    }

    /// Head over already computed embeddings; either may be empty when the
    /// corresponding stream is disabled.
    pub fn head_forward<T: Scalar>(
        &self,
        p: &[T],
        context_embedding: &[T],
        motion_embedding: &[T],
        drop: &mut Option<Dropout<'_>>,
    ) -> HeadTrace<T> {
        let mut x = Vec::with_capacity(self.config.head_input());
        if self.config.streams.context() {
            x.extend_from_slice(context_embedding);
        }
        if self.config.streams.motion() {
            x.extend_from_slice(motion_embedding);
        }
        let input = x.clone();
        let (hidden, last) = self.head.split_at(self.head.len() - 1);
        let (layers, h) = Self::dense_stack(p, hidden, x, drop);
        let l = &last[0];
        let mut out = [T::zero()];
        layers::linear_forward(&p[l.w..l.w + l.inp], &p[l.b..l.b + 1], &h, &mut out);
        HeadTrace {
            input,
            layers,
            last_input: h,
            logit: out[0],
        }
    }

    /// Full forward pass. Without dropout this is the inference path.
    pub fn forward<T: Scalar>(
        &self,
        p: &[T],
        context: &[T],
        motion: &[T],
        mut drop: Option<Dropout<'_>>,
    ) -> Trace<T> {
        let c = self
            .config
            .streams
            .context()
            .then(|| self.context_forward(p, context, &mut drop));
        let m = self
            .config
            .streams
            .motion()
            .then(|| self.motion_forward(p, motion));
        let head = self.head_forward(
            p,
            c.as_ref().map(|c| &c.embedding[..]).unwrap_or(&[]),
            m.as_ref().map(|m| &m.embedding[..]).unwrap_or(&[]),
            &mut drop,
        );
        Trace {
            context: c,
            motion: m,
            head,
        }
    }

    pub fn logit<T: Scalar>(&self, p: &[T], context: &[T], motion: &[T]) -> T {
        self.forward(p, context, motion, None).head.logit
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d logit`.
    pub fn backward<T: Scalar>(&self, p: &[T], trace: &Trace<T>, dlogit: T, grad: &mut [T]) {
        let h = &trace.head;
        let (hidden, last) = self.head.split_at(self.head.len() - 1);
        let l = &last[0];
        let (dw, db) = split_two(grad, l.w, l.inp, l.b, 1);
        let mut dh = vec![T::zero(); l.inp];
        layers::linear_backward(&p[l.w..l.w + l.inp], &h.last_input, &[dlogit], dw, db, Some(&mut dh));
        let d_in = if hidden.is_empty() {
            dh
        } else {
            Self::dense_stack_backward(p, hidden, &h.layers, dh, grad, true).expect("dx requested")
        };
        debug_assert_eq!(d_in.len(), h.input.len());

        let mut offset = 0;
        if let Some(c) = &trace.context {
            let n = self.config.context_embed_dim;
            self.context_backward(p, c, d_in[offset..offset + n].to_vec(), grad);
            offset += n;
        }
        if let Some(m) = &trace.motion {
            let n = self.config.motion_embed_dim;
            self.motion_backward(p, m, &d_in[offset..offset + n], grad);
        }
    }

    fn context_backward<T: Scalar>(&self, p: &[T], c: &ContextTrace<T>, d_emb: Vec<T>, grad: &mut [T]) {
        let need_dx = self.context_gate.is_some();
        let dx = Self::dense_stack_backward(p, &self.context_layers, &c.layers, d_emb, grad, need_dx);
        if let (Some(g), Some(dx)) = (&self.context_gate, dx) {
            let (dw, db) = split_two(grad, g.w, g.n(), g.b, g.n());
            layers::gate_backward(
                &Self::gate_shape(g, self.config.gate_relu),
                &p[g.w..g.w + g.n()],
                &p[g.b..g.b + g.n()],
                &c.input,
                &c.gate,
                &dx,
                dw,
                db,
            );
        }
    }

    fn motion_backward<T: Scalar>(&self, p: &[T], m: &MotionTrace<T>, d_emb: &[T], grad: &mut [T]) {
        let groups = self.config.group_norm_groups;
        let g = self.gru.as_ref().expect("motion stream");
        let hh = g.hidden;
        let shape = GruShape {
            input: g.input,
            hidden: hh,
            steps: g.steps,
        };
        let mut d_normed = vec![T::zero(); g.input * g.steps];
        {
            let (dw_ih, dw_hh, db_ih, db_hh) = split_four(
                grad,
                (g.w_ih, 3 * hh * g.input),
                (g.w_hh, 3 * hh * hh),
                (g.b_ih, 3 * hh),
                (g.b_hh, 3 * hh),
            );
            layers::gru_backward(
                &shape,
                &p[g.w_ih..g.w_ih + 3 * hh * g.input],
                &p[g.w_hh..g.w_hh + 3 * hh * hh],
                &m.gru,
                d_emb,
                dw_ih,
                dw_hh,
                db_ih,
                db_hh,
                Some(&mut d_normed),
            );
        }
        let no = self.norm_out.as_ref().expect("motion stream");
        let mut dh = vec![T::zero(); d_normed.len()];
        {
            let (dg, dbeta) = split_two(grad, no.gamma, no.channels, no.beta, no.channels);
            layers::group_norm_backward(
                &m.norm_out,
                no.channels,
                no.len,
                groups,
                &p[no.gamma..no.gamma + no.channels],
                &d_normed,
                dg,
                dbeta,
                Some(&mut dh),
            );
        }
        for (c, t) in self.convs.iter().zip(&m.convs).rev() {
            let mut dy = vec![T::zero(); c.cout * c.len];
            layers::relu_maxpool_backward(&t.pool_idx, &dh, &mut dy);
            let mut dx = vec![T::zero(); c.cin * c.len];
            let (dw, db) = split_two(grad, c.w, c.cout * c.cin * c.k, c.b, c.cout);
            layers::conv1d_backward(
                &p[c.w..c.w + c.cout * c.cin * c.k],
                &t.input,
                &dy,
                c.cin,
                c.cout,
                c.k,
                c.len,
                dw,
                db,
                Some(&mut dx),
            );
            dh = dx;
        }
        let ni = self.norm_in.as_ref().expect("motion stream");
        let need_dx = self.motion_gate.is_some();
        let mut dx = vec![T::zero(); if need_dx { dh.len() } else { 0 }];
        {
            let (dg, dbeta) = split_two(grad, ni.gamma, ni.channels, ni.beta, ni.channels);
            layers::group_norm_backward(
                &m.norm_in,
                ni.channels,
                ni.len,
                groups,
                &p[ni.gamma..ni.gamma + ni.channels],
                &dh,
                dg,
                dbeta,
                need_dx.then_some(&mut dx[..]),
            );
        }
        if let Some(gt) = &self.motion_gate {
            let (dw, db) = split_two(grad, gt.w, gt.n(), gt.b, gt.n());
            layers::gate_backward(
                &Self::gate_shape(gt, self.config.gate_relu),
                &p[gt.w..gt.w + gt.n()],
                &p[gt.b..gt.b + gt.n()],
                &m.input,
                &m.gate,
                &dx,
                dw,
                db,
            );
        }
    }
}

/// Two disjoint mutable windows of `grad`; `a` must precede `b`.
fn split_two<T>(grad: &mut [T], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a + alen <= b);
    let (lo, hi) = grad.split_at_mut(b);
    (&mut lo[a..a + alen], &mut hi[..blen])
}

type Four<'a, T> = (&'a mut [T], &'a mut [T], &'a mut [T], &'a mut [T]);

fn split_four<T>(
    grad: &mut [T],
    a: (usize, usize),
    b: (usize, usize),
    c: (usize, usize),
    d: (usize, usize),
) -> Four<'_, T> {
    let (x, rest) = grad.split_at_mut(b.0);
    let (y, rest) = rest.split_at_mut(c.0 - b.0);
    let (z, w) = rest.split_at_mut(d.0 - c.0);
    (&mut x[a.0..a.0 + a.1], &mut y[..b.1], &mut z[..c.1], &mut w[..d.1])
}
