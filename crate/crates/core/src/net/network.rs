use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// One trunk feeds the action, message and value heads.
    Shared,
    /// The message head has its own trunk with no parameters in common with
    /// the action/value path.
    SeparateComm,
}

/// Trunk nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    #[default]
    Relu,
}

impl Activation {
    fn apply<T: Scalar>(self, v: &mut [T]) {
        match self {
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(T::zero())),
        }
    }

    /// Multiplies `d` by the derivative, expressed through the output `h`.
    fn backward<T: Scalar>(self, h: &[T], d: &mut [T]) {
        match self {
            Activation::Tanh => {
                for (di, &hi) in d.iter_mut().zip(h) {
                    *di *= T::one() - hi * hi;
                }
            }
            Activation::Relu => {
                for (di, &hi) in d.iter_mut().zip(h) {
                    if hi <= T::zero() {
                        *di = T::zero();
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub n_actions: usize,
    pub n_messages: usize,
    pub architecture: Architecture,
    #[serde(default)]
    pub activation: Activation,
}

/// Trunk width used for each payoff size of the standard grid.
pub fn default_hidden_width(n_actions: usize) -> usize {
    match n_actions {
        2 => 40,
        4 => 60,
        8 => 100,
        n => 20 * n,
    }
}

/// One named tensor inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSlot {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn is_bias(&self) -> bool {
        self.name.ends_with(".b") || self.name.ends_with(".b1") || self.name.ends_with(".b2")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wa: usize,
    ba: usize,
    wc: usize,
    bc: usize,
    wv: usize,
    bv: usize,
    // comm trunk, only for SeparateComm
    cw1: usize,
    cb1: usize,
    cw2: usize,
    cb2: usize,
    total: usize,
}

impl NetShape {
    pub fn slots(&self) -> Vec<TensorSlot> {
        let (i, h, n, m) = (self.input, self.hidden, self.n_actions, self.n_messages);
        let mut spec: Vec<(&'static str, usize, usize)> = vec![
            ("trunk.w1", h, i),
            ("trunk.b1", h, 1),
            ("trunk.w2", h, h),
            ("trunk.b2", h, 1),
            ("action.w", n, h),
            ("action.b", n, 1),
            ("comm.w", m, h),
            ("comm.b", m, 1),
            ("value.w", 1, h),
            ("value.b", 1, 1),
        ];
        if self.architecture == Architecture::SeparateComm {
            spec.extend([
                ("comm_trunk.w1", h, i),
                ("comm_trunk.b1", h, 1),
                ("comm_trunk.w2", h, h),
                ("comm_trunk.b2", h, 1),
            ]);
        }
        let mut offset = 0;
        spec.into_iter()
            .map(|(name, rows, cols)| {
                let slot = TensorSlot {
                    name,
                    rows,
                    cols,
                    offset,
                };
                offset += rows * cols;
                slot
            })
            .collect()
    }

    fn offsets(&self) -> Offsets {
        let slots = self.slots();
        let at = |name: &str| slots.iter().find(|s| s.name == name).map_or(0, |s| s.offset);
        Offsets {
            w1: at("trunk.w1"),
            b1: at("trunk.b1"),
            w2: at("trunk.w2"),
            b2: at("trunk.b2"),
            wa: at("action.w"),
            ba: at("action.b"),
            wc: at("comm.w"),
            bc: at("comm.b"),
            wv: at("value.w"),
            bv: at("value.b"),
            cw1: at("comm_trunk.w1"),
            cb1: at("comm_trunk.b1"),
            cw2: at("comm_trunk.w2"),
            cb2: at("comm_trunk.b2"),
            total: slots.last().map_or(0, |s| s.offset + s.len()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.offsets().total
    }
}

/// All weights of one agent in a single flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<T> {
    shape: NetShape,
    off: Offsets,
    data: Vec<T>,
}

/// Gradient buffer laid out exactly like [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    pub data: Vec<T>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros_like(params: &PolicyParams<T>) -> Self {
        Self {
            data: vec![T::zero(); params.data.len()],
        }
    }

    pub fn reset(&mut self) {
        self.data.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn scale(&mut self, k: T) {
        self.data.iter_mut().for_each(|g| *g *= k);
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|g| *g == T::zero())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetOutputs<T> {
    pub action_logits: Vec<T>,
    pub comm_logits: Vec<T>,
    pub value: T,
    /// Post-activation output of the second (last) trunk layer.
    pub hidden: Vec<T>,
}

/// Forward-pass intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub input: Vec<T>,
    nz: Vec<usize>,
    h1: Vec<T>,
    h2: Vec<T>,
    c1: Vec<T>,
    c2: Vec<T>,
    pub outputs: NetOutputs<T>,
}

impl<T> Trace<T> {
    pub fn outputs(&self) -> &NetOutputs<T> {
        &self.outputs
    }
}

/// Upstream gradients of a scalar loss with respect to each head's output.
/// `None` means the head does not contribute.
#[derive(Debug, Clone, Default)]
pub struct HeadGrads<T> {
    pub action: Option<Vec<T>>,
    pub comm: Option<Vec<T>>,
    pub value: Option<T>,
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let split = n - n % 4;
    for (ca, cb) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in a[split..].iter().zip(&b[split..]) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Indices of the nonzero entries of `x`.
fn nonzero<T: Scalar>(x: &[T]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != T::zero())
        .map(|(j, _)| j)
        .collect()
}

/// `out = W x + b` touching only the columns listed in `nz`.
fn affine_sparse<T: Scalar>(w: &[T], b: &[T], x: &[T], nz: &[usize], out: &mut Vec<T>) {
    let cols = x.len();
    out.clear();
    out.extend(
        w.chunks_exact(cols)
            .zip(b)
            .map(|(row, &bias)| nz.iter().fold(bias, |acc, &j| acc + row[j] * x[j])),
    );
}

/// `gw += g x^T`, `gb += g` for a sparse `x`.
fn add_outer_sparse<T: Scalar>(gw: &mut [T], gb: &mut [T], g: &[T], x: &[T], nz: &[usize]) {
    let cols = x.len();
    for ((row, b), &gi) in gw.chunks_exact_mut(cols).zip(gb.iter_mut()).zip(g) {
        if gi == T::zero() {
            continue;
        }
        *b += gi;
        for &j in nz {
            row[j] += gi * x[j];
        }
    }
}

/// `out = W x + b` for a row-major `rows x cols` matrix.
fn affine<T: Scalar>(w: &[T], b: &[T], x: &[T], out: &mut Vec<T>) {
    let cols = x.len();
    out.clear();
    out.extend(w.chunks_exact(cols).zip(b).map(|(row, &bias)| dot(row, x) + bias));
}

/// `out += W^T g`.
fn add_transpose_product<T: Scalar>(w: &[T], g: &[T], out: &mut [T]) {
    let cols = out.len();
    for (row, &gi) in w.chunks_exact(cols).zip(g) {
        if gi == T::zero() {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += gi * wij;
        }
    }
}

/// `gw += g x^T`, `gb += g`.
fn add_outer<T: Scalar>(gw: &mut [T], gb: &mut [T], g: &[T], x: &[T]) {
    let cols = x.len();
    for ((row, b), &gi) in gw.chunks_exact_mut(cols).zip(gb.iter_mut()).zip(g) {
        if gi == T::zero() {
            continue;
        }
        *b += gi;
        for (r, &xj) in row.iter_mut().zip(x) {
            *r += gi * xj;
        }
    }
}

impl<T: Scalar> PolicyParams<T> {
    pub fn zeros(shape: NetShape) -> Self {
        let off = shape.offsets();
        Self {
            shape,
            off,
            data: vec![T::zero(); off.total],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        for slot in shape.slots() {
            if slot.is_bias() {
                continue;
            }
            let limit = T::lit(6.0 / (slot.rows + slot.cols) as f64).sqrt();
            let two = T::lit(2.0);
            for w in &mut p.data[slot.range()] {
                *w = (two * T::unit_uniform(rng) - T::one()) * limit;
            }
        }
        p
    }

    pub fn from_flat(shape: NetShape, data: Vec<T>) -> Result<Self> {
        let off = shape.offsets();
        if data.len() != off.total {
            return Err(Error::shape("parameters", off.total, data.len()));
        }
        Ok(Self { shape, off, data })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn slot(&self, name: &str) -> Option<TensorSlot> {
        self.shape.slots().into_iter().find(|s| s.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.slot(name).map(|s| &self.data[s.range()])
    }

    /// Ranges holding the message head (`comm.w`, `comm.b`).
    pub fn comm_head_ranges(&self) -> Vec<Range<usize>> {
        let m = self.shape.n_messages;
        let h = self.shape.hidden;
        vec![self.off.wc..self.off.wc + m * h, self.off.bc..self.off.bc + m]
    }

    /// Ranges of everything on the action path: shared trunk, action head, value head.
    pub fn action_path_ranges(&self) -> Vec<Range<usize>> {
        let slots = self.shape.slots();
        slots
            .iter()
            .filter(|s| s.name.starts_with("trunk.") || s.name.starts_with("action.") || s.name.starts_with("value."))
            .map(TensorSlot::range)
            .collect()
    }

    fn check_input(&self, obs: &[T]) -> Result<()> {
        if obs.len() != self.shape.input {
            return Err(Error::shape("observation", self.shape.input, obs.len()));
        }
        Ok(())
    }

    pub fn forward(&self, obs: &[T]) -> Result<NetOutputs<T>> {
        Ok(self.forward_trace(obs)?.outputs)
    }

    pub fn forward_trace(&self, obs: &[T]) -> Result<Trace<T>> {
        self.check_input(obs)?;
        let NetShape {
            input,
            hidden: h,
            n_actions: n,
            n_messages: m,
            architecture,
            activation,
        } = self.shape;
        let o = &self.off;
        let d = &self.data;

        let mut h1 = Vec::with_capacity(h);
        let nz = nonzero(obs);
        affine_sparse(&d[o.w1..o.w1 + h * input], &d[o.b1..o.b1 + h], obs, &nz, &mut h1);
        activation.apply(&mut h1);
        let mut h2 = Vec::with_capacity(h);
        affine(&d[o.w2..o.w2 + h * h], &d[o.b2..o.b2 + h], &h1, &mut h2);
        activation.apply(&mut h2);

        let (mut c1, mut c2) = (Vec::new(), Vec::new());
        if architecture == Architecture::SeparateComm {
            affine_sparse(&d[o.cw1..o.cw1 + h * input], &d[o.cb1..o.cb1 + h], obs, &nz, &mut c1);
            activation.apply(&mut c1);
            affine(&d[o.cw2..o.cw2 + h * h], &d[o.cb2..o.cb2 + h], &c1, &mut c2);
            activation.apply(&mut c2);
        }
        let comm_src = if architecture == Architecture::SeparateComm {
            &c2
        } else {
            &h2
        };

        let mut action_logits = Vec::with_capacity(n);
        affine(&d[o.wa..o.wa + n * h], &d[o.ba..o.ba + n], &h2, &mut action_logits);
        let mut comm_logits = Vec::with_capacity(m);
        affine(&d[o.wc..o.wc + m * h], &d[o.bc..o.bc + m], comm_src, &mut comm_logits);
        let value = dot(&d[o.wv..o.wv + h], &h2) + d[o.bv];

        Ok(Trace {
            input: obs.to_vec(),
            nz,
            outputs: NetOutputs {
                action_logits,
                comm_logits,
                value,
                hidden: h2.clone(),
            },
            h1,
            h2,
            c1,
            c2,
        })
    }

    fn check_heads(&self, g: &HeadGrads<T>) -> Result<()> {
        if let Some(a) = &g.action {
            if a.len() != self.shape.n_actions {
                return Err(Error::shape("action head gradient", self.shape.n_actions, a.len()));
            }
        }
        if let Some(c) = &g.comm {
            if c.len() != self.shape.n_messages {
                return Err(Error::shape("comm head gradient", self.shape.n_messages, c.len()));
            }
        }
        Ok(())
    }

    /// Accumulates parameter gradients of the loss whose head gradients are
    /// `heads` into `grads`.
    pub fn backward_into(&self, trace: &Trace<T>, heads: &HeadGrads<T>, grads: &mut ParamGrads<T>) -> Result<()> {
        self.backward_impl(trace, heads, grads, false).map(|_| ())
    }

    /// Like [`Self::backward_into`], also returning the gradient with respect
    /// to the input.
    fn backward_impl(
        &self,
        trace: &Trace<T>,
        heads: &HeadGrads<T>,
        grads: &mut ParamGrads<T>,
        want_dx: bool,
    ) -> Result<Vec<T>> {
        self.check_heads(heads)?;
        if grads.data.len() != self.data.len() {
            return Err(Error::shape("gradient buffer", self.data.len(), grads.data.len()));
        }
        let NetShape {
            input,
            hidden: h,
            n_actions: n,
            n_messages: m,
            architecture,
            activation,
        } = self.shape;
        let o = self.off;
        let d = &self.data;
        let g = &mut grads.data;
        let separate = architecture == Architecture::SeparateComm;

        let mut dx = vec![T::zero(); input];
        let mut dh2 = vec![T::zero(); h];
        let mut trunk_active = false;

        if let Some(ga) = &heads.action {
            let (gw, gb) = g[o.wa..o.ba + n].split_at_mut(n * h);
            add_outer(gw, gb, ga, &trace.h2);
            add_transpose_product(&d[o.wa..o.wa + n * h], ga, &mut dh2);
            trunk_active = true;
        }
        if let Some(gv) = heads.value {
            if gv != T::zero() {
                for ((gw, &hj), (dj, &wj)) in g[o.wv..o.wv + h]
                    .iter_mut()
                    .zip(&trace.h2)
                    .zip(dh2.iter_mut().zip(&d[o.wv..o.wv + h]))
                {
                    *gw += gv * hj;
                    *dj += gv * wj;
                }
                g[o.bv] += gv;
                trunk_active = true;
            }
        }
        if let Some(gc) = &heads.comm {
            let src = if separate { &trace.c2 } else { &trace.h2 };
            let (gw, gb) = g[o.wc..o.bc + m].split_at_mut(m * h);
            add_outer(gw, gb, gc, src);
            if separate {
                let mut dc2 = vec![T::zero(); h];
                add_transpose_product(&d[o.wc..o.wc + m * h], gc, &mut dc2);
                activation.backward(&trace.c2, &mut dc2);
                let (gw, gb) = g[o.cw2..o.cb2 + h].split_at_mut(h * h);
                add_outer(gw, gb, &dc2, &trace.c1);
                let mut dc1 = vec![T::zero(); h];
                add_transpose_product(&d[o.cw2..o.cw2 + h * h], &dc2, &mut dc1);
                activation.backward(&trace.c1, &mut dc1);
                let (gw, gb) = g[o.cw1..o.cb1 + h].split_at_mut(h * input);
                add_outer_sparse(gw, gb, &dc1, &trace.input, &trace.nz);
                if want_dx {
                    add_transpose_product(&d[o.cw1..o.cw1 + h * input], &dc1, &mut dx);
                }
            } else {
                add_transpose_product(&d[o.wc..o.wc + m * h], gc, &mut dh2);
                trunk_active = true;
            }
        }

        if trunk_active {
            activation.backward(&trace.h2, &mut dh2);
            let (gw, gb) = g[o.w2..o.b2 + h].split_at_mut(h * h);
            add_outer(gw, gb, &dh2, &trace.h1);
            let mut dh1 = vec![T::zero(); h];
            add_transpose_product(&d[o.w2..o.w2 + h * h], &dh2, &mut dh1);
            activation.backward(&trace.h1, &mut dh1);
            let (gw, gb) = g[o.w1..o.b1 + h].split_at_mut(h * input);
            add_outer_sparse(gw, gb, &dh1, &trace.input, &trace.nz);
            if want_dx {
                add_transpose_product(&d[o.w1..o.w1 + h * input], &dh1, &mut dx);
            }
        }
        Ok(dx)
    }

    /// Exact gradients of the loss defined by `heads` at `obs`.
    pub fn backward(&self, obs: &[T], heads: &HeadGrads<T>) -> Result<ParamGrads<T>> {
        let trace = self.forward_trace(obs)?;
        let mut grads = ParamGrads::zeros_like(self);
        self.backward_into(&trace, heads, &mut grads)?;
        Ok(grads)
    }

    /// Gradient with respect to the observation.
    pub fn input_gradient(&self, obs: &[T], heads: &HeadGrads<T>) -> Result<Vec<T>> {
        let trace = self.forward_trace(obs)?;
        let mut scratch = ParamGrads::zeros_like(self);
        self.backward_impl(&trace, heads, &mut scratch, true)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn shape(arch: Architecture) -> NetShape {
        NetShape {
            input: 6,
            hidden: 5,
            n_actions: 2,
            n_messages: 3,
            architecture: arch,
            activation: Default::default(),
        }
    }

    fn obs() -> Vec<f64> {
        vec![0.3, -1.2, 0.5, 1.0, 0.0, -0.7]
    }

    #[test]
    fn slot_layout_is_contiguous() {
        let s = shape(Architecture::SeparateComm);
        let slots = s.slots();
        let mut next = 0;
        for slot in &slots {
            assert_eq!(slot.offset, next);
            next += slot.len();
        }
        assert_eq!(next, s.param_count());
        assert_eq!(slots.len(), 14);
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = PolicyParams::<f64>::zeros(shape(Architecture::Shared));
        let out = p.forward(&obs()).unwrap();
        assert!(out.action_logits.iter().all(|&x| x == 0.0));
        assert!(out.comm_logits.iter().all(|&x| x == 0.0));
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn init_biases_zero_weights_bounded() {
        let s = shape(Architecture::Shared);
        let p = PolicyParams::<f64>::init(s, &mut stream(1, Stream::Agent1Init));
        for slot in s.slots() {
            let t = &p.as_slice()[slot.range()];
            if slot.is_bias() {
                assert!(t.iter().all(|&x| x == 0.0), "{}", slot.name);
            } else {
                let lim = (6.0 / (slot.rows + slot.cols) as f64).sqrt();
                assert!(t.iter().all(|&x| x.abs() <= lim), "{}", slot.name);
                assert!(t.iter().any(|&x| x != 0.0));
            }
        }
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let s = shape(Architecture::Shared);
        let p = PolicyParams::<f64>::init(s, &mut stream(2, Stream::Agent1Init));
        let a = p.forward(&obs()).unwrap();
        let b = p.forward(&obs()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_input_width() {
        let p = PolicyParams::<f64>::zeros(shape(Architecture::Shared));
        let err = p.forward(&[1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("observation"));
    }

    #[test]
    fn zero_head_grads_give_zero_grads() {
        let s = shape(Architecture::Shared);
        let p = PolicyParams::<f64>::init(s, &mut stream(3, Stream::Agent1Init));
        let heads = HeadGrads {
            action: Some(vec![0.0; 2]),
            comm: Some(vec![0.0; 3]),
            value: Some(0.0),
        };
        assert!(p.backward(&obs(), &heads).unwrap().is_zero());
    }

    #[test]
    fn separate_comm_isolation() {
        let s = shape(Architecture::SeparateComm);
        let p = PolicyParams::<f64>::init(s, &mut stream(4, Stream::Agent1Init));
        let heads = HeadGrads {
            comm: Some(vec![0.4, -0.1, 0.9]),
            ..Default::default()
        };
        let g = p.backward(&obs(), &heads).unwrap();
        for r in p.action_path_ranges() {
            assert!(g.data[r].iter().all(|&x| x == 0.0));
        }
        let ct = p.slot("comm_trunk.w1").unwrap();
        assert!(g.data[ct.range()].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn head_gradient_shape_checked() {
        let p = PolicyParams::<f64>::zeros(shape(Architecture::Shared));
        let heads = HeadGrads {
            action: Some(vec![1.0; 3]),
            ..Default::default()
        };
        assert!(p.backward(&obs(), &heads).is_err());
    }
}
