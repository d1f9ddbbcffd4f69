//! Pre-norm transformer stacks.
//!
//! A [`ModuleGraph`] is: token embedding (linear) → learned positional
//! embedding → `depth` blocks of `x + MHSA(LN(x))`, `x + MLP(LN(x))` with a
//! GELU MLP → final layer norm → optional output projection.

use super::{NnetError, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub in_dim: usize,
    pub d_model: usize,
    pub heads: usize,
    pub depth: usize,
    pub mlp_hidden: usize,
    pub n_positions: usize,
    /// Output projection width; `None` returns the normalized hidden states.
    pub out_dim: Option<usize>,
    pub init_std: f64,
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(NnetError::ShapeMismatch(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.in_dim == 0 || self.d_model == 0 || self.mlp_hidden == 0 || self.n_positions == 0 {
            return Err(NnetError::ShapeMismatch("zero-sized graph dimension".into()));
        }
        Ok(())
    }
}

/// Handles of a `x·W + b` layer.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        inp: usize,
        out: usize,
        std: f64,
        rng: &mut SeededRng,
    ) -> Self {
        let mut lin = Self::register_no_bias(store, name, inp, out, std, rng);
        lin.bias = Some(store.add(format!("{name}.bias"), Tensor::zeros(vec![out])));
        lin
    }

    /// `x·W` only.
    pub fn register_no_bias<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        inp: usize,
        out: usize,
        std: f64,
        rng: &mut SeededRng,
    ) -> Self {
        let w = (0..inp * out).map(|_| T::c(rng.trunc_normal(std))).collect();
        Self {
            weight: store.add(format!("{name}.weight"), Tensor::new(vec![inp, out], w)),
            bias: None,
        }
    }

    fn lookup<T: Real>(store: &ParamStore<T>, name: &str) -> Result<Self, NnetError> {
        Ok(Self {
            weight: lookup(store, &format!("{name}.weight"))?,
            bias: store.id_of(&format!("{name}.bias")),
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn register<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(vec![dim], T::one())),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(vec![dim])),
        }
    }

    fn lookup<T: Real>(store: &ParamStore<T>, name: &str) -> Result<Self, NnetError> {
        Ok(Self {
            gain: lookup(store, &format!("{name}.gain"))?,
            bias: lookup(store, &format!("{name}.bias"))?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        tape.layer_norm(x, g, b)
    }
}

fn lookup<T: Real>(store: &ParamStore<T>, name: &str) -> Result<ParamId, NnetError> {
    store
        .id_of(name)
        .ok_or_else(|| NnetError::Checkpoint(format!("missing parameter {name}")))
}

#[derive(Clone, Debug)]
struct Block {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    proj: Linear,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// Multi-head self-attention over the rows of `x`.
fn attention<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, b: &Block, heads: usize, x: Var) -> Var {
    let d = tape.shape(x).1;
    let dh = d / heads;
    let q = b.q.forward(tape, store, x);
    let k = b.k.forward(tape, store, x);
    let v = b.v.forward(tape, store, x);
    let scale = T::one() / T::c(dh as f64).sqrt();
    let outs: Vec<Var> = (0..heads)
        .map(|h| {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let s = tape.matmul_nt(qh, kh);
            let s = tape.scale(s, scale);
            let p = tape.softmax_rows(s);
            tape.matmul(p, vh)
        })
        .collect();
    let cat = if heads == 1 { outs[0] } else { tape.concat_cols(&outs) };
    b.proj.forward(tape, store, cat)
}

#[derive(Clone, Debug)]
pub struct ModuleGraph<T> {
    pub name: String,
    pub config: GraphConfig,
    pub params: ParamStore<T>,
    embed: Linear,
    pos: ParamId,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    head: Option<Linear>,
}

impl<T: Real> ModuleGraph<T> {
    /// Fresh graph: truncated-normal weights, zero biases, unit layer-norm gains.
    pub fn new(name: &str, config: GraphConfig, tag: usize, rng: &mut SeededRng) -> Result<Self, NnetError> {
        config.validate()?;
        let std = config.init_std;
        let mut s = ParamStore::new(tag);
        let embed = Linear::register(&mut s, "embed", config.in_dim, config.d_model, std, rng);
        let pos_vals = (0..config.n_positions * config.d_model)
            .map(|_| T::c(rng.trunc_normal(std)))
            .collect();
        let pos = s.add("pos_embed", Tensor::new(vec![config.n_positions, config.d_model], pos_vals));
        let d = config.d_model;
        let blocks = (0..config.depth)
            .map(|i| {
                let p = format!("blocks.{i}");
                Block {
                    ln1: LayerNorm::register(&mut s, &format!("{p}.ln1"), d),
                    q: Linear::register(&mut s, &format!("{p}.attn.q"), d, d, std, rng),
                    // a key bias shifts every score in a row equally and cancels in softmax
                    k: Linear::register_no_bias(&mut s, &format!("{p}.attn.k"), d, d, std, rng),
                    v: Linear::register(&mut s, &format!("{p}.attn.v"), d, d, std, rng),
                    proj: Linear::register(&mut s, &format!("{p}.attn.proj"), d, d, std, rng),
                    ln2: LayerNorm::register(&mut s, &format!("{p}.ln2"), d),
                    fc1: Linear::register(&mut s, &format!("{p}.mlp.fc1"), d, config.mlp_hidden, std, rng),
                    fc2: Linear::register(&mut s, &format!("{p}.mlp.fc2"), config.mlp_hidden, d, std, rng),
                }
            })
            .collect();
        let ln_f = LayerNorm::register(&mut s, "ln_f", d);
        let head = config
            .out_dim
            .map(|o| Linear::register(&mut s, "head", d, o, std, rng));
        Ok(Self {
            name: name.to_string(),
            config,
            params: s,
            embed,
            pos,
            blocks,
            ln_f,
            head,
        })
    }

    /// Rebinds a graph to an existing store (e.g. loaded from a checkpoint),
    /// checking that every expected parameter exists with the right shape.
    pub fn from_store(name: &str, config: GraphConfig, params: ParamStore<T>) -> Result<Self, NnetError> {
        let reference = ModuleGraph::<T>::new(name, config.clone(), params.tag, &mut SeededRng::new(0))?;
        if reference.params.len() != params.len() {
            return Err(NnetError::Checkpoint(format!(
                "expected {} parameters, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        for (n, t) in reference.params.iter() {
            let got = params
                .by_name(n)
                .ok_or_else(|| NnetError::Checkpoint(format!("missing parameter {n}")))?;
            if got.shape != t.shape {
                return Err(NnetError::Checkpoint(format!(
                    "{n}: shape {:?} != {:?}",
                    got.shape, t.shape
                )));
            }
        }
        let blocks = (0..config.depth)
            .map(|i| {
                let p = format!("blocks.{i}");
                Ok(Block {
                    ln1: LayerNorm::lookup(&params, &format!("{p}.ln1"))?,
                    q: Linear::lookup(&params, &format!("{p}.attn.q"))?,
                    k: Linear::lookup(&params, &format!("{p}.attn.k"))?,
                    v: Linear::lookup(&params, &format!("{p}.attn.v"))?,
                    proj: Linear::lookup(&params, &format!("{p}.attn.proj"))?,
                    ln2: LayerNorm::lookup(&params, &format!("{p}.ln2"))?,
                    fc1: Linear::lookup(&params, &format!("{p}.mlp.fc1"))?,
                    fc2: Linear::lookup(&params, &format!("{p}.mlp.fc2"))?,
                })
            })
            .collect::<Result<Vec<_>, NnetError>>()?;
        Ok(Self {
            name: name.to_string(),
            embed: Linear::lookup(&params, "embed")?,
            pos: lookup(&params, "pos_embed")?,
            blocks,
            ln_f: LayerNorm::lookup(&params, "ln_f")?,
            head: match config.out_dim {
                Some(_) => Some(Linear::lookup(&params, "head")?),
                None => None,
            },
            config,
            params,
        })
    }

    pub fn cast<U: Real>(&self) -> ModuleGraph<U> {
        ModuleGraph::from_store(&self.name, self.config.clone(), self.params.cast())
            .expect("cast preserves layout")
    }

    pub fn n_params(&self) -> usize {
        self.params.n_scalars()
    }

    pub fn embed(&self, tape: &mut Tape<T>, x: Var) -> Var {
        self.embed.forward(tape, &self.params, x)
    }

    /// Adds the positional rows at `positions` (one per row of `h`).
    pub fn add_positions(&self, tape: &mut Tape<T>, h: Var, positions: &[usize]) -> Var {
        let pos = tape.param(&self.params, self.pos);
        let rows = tape.gather_rows(pos, positions);
        tape.add(h, rows)
    }

    /// Transformer blocks followed by the final layer norm.
    pub fn run_blocks(&self, tape: &mut Tape<T>, mut h: Var) -> Var {
        let p = &self.params;
        for b in &self.blocks {
            let n1 = b.ln1.forward(tape, p, h);
            let a = attention(tape, p, b, self.config.heads, n1);
            h = tape.add(h, a);
            let n2 = b.ln2.forward(tape, p, h);
            let m = b.fc1.forward(tape, p, n2);
            let m = tape.gelu(m);
            let m = b.fc2.forward(tape, p, m);
            h = tape.add(h, m);
        }
        self.ln_f.forward(tape, p, h)
    }

    pub fn project(&self, tape: &mut Tape<T>, h: Var) -> Var {
        match &self.head {
            Some(head) => head.forward(tape, &self.params, h),
            None => h,
        }
    }

    /// Full pass for rows occupying `positions`.
    pub fn forward_tape(&self, tape: &mut Tape<T>, x: Var, positions: &[usize]) -> Var {
        let h = self.embed(tape, x);
        let h = self.add_positions(tape, h, positions);
        let h = self.run_blocks(tape, h);
        self.project(tape, h)
    }

    /// Inference on `[n_tokens × in_dim]` input at positions `0..n_tokens`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnetError> {
        let (n, d) = x.dims2();
        if d != self.config.in_dim || n > self.config.n_positions || n == 0 {
            return Err(NnetError::ShapeMismatch(format!(
                "{}: input {n}x{d}, expected up to {}x{}",
                self.name, self.config.n_positions, self.config.in_dim
            )));
        }
        if x.data.iter().any(|v| !v.is_finite()) {
            return Err(NnetError::NonFiniteActivation(format!("{} input", self.name)));
        }
        let mut tape = Tape::new();
        let xv = tape.leaf(n, d, x.data.clone());
        let positions: Vec<usize> = (0..n).collect();
        let y = self.forward_tape(&mut tape, xv, &positions);
        let (r, c) = tape.shape(y);
        let out = tape.value(y).to_vec();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(NnetError::NonFiniteActivation(self.name.clone()));
        }
        Ok(Tensor::matrix(r, c, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(out: Option<usize>) -> GraphConfig {
        GraphConfig {
            in_dim: 6,
            d_model: 8,
            heads: 2,
            depth: 2,
            mlp_hidden: 12,
            n_positions: 5,
            out_dim: out,
            init_std: 0.02,
        }
    }

    #[test]
    fn identity_linear_passes_input_through() {
        let mut s = ParamStore::<f64>::new(0);
        let lin = Linear::register(&mut s, "l", 3, 3, 0.0, &mut SeededRng::new(0));
        s.get_mut(lin.weight).data = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let mut t = Tape::new();
        let x = t.leaf(2, 3, vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]);
        let y = lin.forward(&mut t, &s, x);
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn zeroed_graph_is_constant_across_tokens() {
        let mut g = ModuleGraph::<f64>::new("g", tiny(None), 0, &mut SeededRng::new(1)).unwrap();
        for t in g.params.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        for (name, t) in g.params.clone().iter() {
            if name.ends_with(".gain") {
                g.params.by_name_mut(name).unwrap().data = vec![1.0; t.len()];
            }
        }
        let x = Tensor::matrix(5, 6, vec![0.7; 30]);
        let y = g.forward(&x).unwrap();
        let first = y.data[..8].to_vec();
        assert!(y.data.chunks(8).all(|r| r == first.as_slice()));
    }

    #[test]
    fn forward_is_deterministic_and_shaped() {
        let g = ModuleGraph::<f32>::new("g", tiny(Some(6)), 0, &mut SeededRng::new(2)).unwrap();
        let x = Tensor::matrix(4, 6, (0..24).map(|i| (i as f32 * 0.37).sin()).collect());
        let a = g.forward(&x).unwrap();
        let b = g.forward(&x).unwrap();
        assert_eq!(a.shape, vec![4, 6]);
        assert_eq!(a, b);
    }

    #[test]
    fn bad_inputs_rejected() {
        let g = ModuleGraph::<f32>::new("g", tiny(None), 0, &mut SeededRng::new(2)).unwrap();
        assert!(matches!(
            g.forward(&Tensor::matrix(2, 5, vec![0.0; 10])),
            Err(NnetError::ShapeMismatch(_))
        ));
        let mut bad = Tensor::matrix(1, 6, vec![0.0; 6]);
        bad.data[3] = f32::NAN;
        assert!(matches!(g.forward(&bad), Err(NnetError::NonFiniteActivation(_))));
    }

    #[test]
    fn parameter_count_reported() {
        let g = ModuleGraph::<f32>::new("g", tiny(None), 0, &mut SeededRng::new(2)).unwrap();
        // embed 6*8+8, pos 5*8, per block 2 LN (32) + 4 attn (4*72, no key bias) + fc1 8*12+12 + fc2 12*8+8, ln_f 16
        let per_block = 32 + 4 * 72 - 8 + 108 + 104;
        assert_eq!(g.n_params(), 56 + 40 + 2 * per_block + 16);
    }
}
