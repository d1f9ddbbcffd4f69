//! Central-difference gradient verification.

use super::{ModuleGraph, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::SeededRng;

/// Anything whose parameters can be perturbed in place.
pub trait HasParams {
    fn stores(&self) -> Vec<&ParamStore<f64>>;
    fn stores_mut(&mut self) -> Vec<&mut ParamStore<f64>>;
}

impl HasParams for ParamStore<f64> {
    fn stores(&self) -> Vec<&ParamStore<f64>> {
        vec![self]
    }
    fn stores_mut(&mut self) -> Vec<&mut ParamStore<f64>> {
        vec![self]
    }
}

impl HasParams for ModuleGraph<f64> {
    fn stores(&self) -> Vec<&ParamStore<f64>> {
        vec![&self.params]
    }
    fn stores_mut(&mut self) -> Vec<&mut ParamStore<f64>> {
        vec![&mut self.params]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst element.
    pub worst: String,
    pub n_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the tape's gradient of `loss` with central differences for every
/// scalar parameter of `model`.
pub fn grad_check<M: HasParams>(model: &mut M, eps: f64, loss: impl Fn(&M, &mut Tape<f64>) -> Var) -> GradCheckReport {
    let mut tape = Tape::new();
    let l = loss(model, &mut tape);
    let grads = tape.backward(l);
    let eval = |m: &M| {
        let mut t = Tape::new();
        let v = loss(m, &mut t);
        t.scalar(v)
    };
    let layout: Vec<(usize, Vec<(String, usize)>)> = model
        .stores()
        .iter()
        .map(|s| (s.tag, s.iter().map(|(n, t)| (n.to_string(), t.len())).collect()))
        .collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        n_checked: 0,
    };
    for (si, (tag, tensors)) in layout.iter().enumerate() {
        for (ti, (name, len)) in tensors.iter().enumerate() {
            let id = ParamId {
                store: *tag,
                index: ti,
            };
            let analytic = grads.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; *len]);
            for k in 0..*len {
                let orig = model.stores_mut()[si].get(id).data[k];
                model.stores_mut()[si].get_mut(id).data[k] = orig + eps;
                let up = eval(model);
                model.stores_mut()[si].get_mut(id).data[k] = orig - eps;
                let down = eval(model);
                model.stores_mut()[si].get_mut(id).data[k] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let err = relative_error(analytic[k], numeric);
                report.n_checked += 1;
                if err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst = format!("{name}[{k}] (analytic {:.6e}, numeric {numeric:.6e})", analytic[k]);
                }
            }
        }
    }
    report
}

/// Fixed random projection of a graph's output, used as a scalar loss.
pub fn projection_loss(graph: &ModuleGraph<f64>, tape: &mut Tape<f64>, input: &Tensor<f64>, seed: u64) -> Var {
    let (n, d) = input.dims2();
    let x = tape.leaf(n, d, input.data.clone());
    let positions: Vec<usize> = (0..n).collect();
    let y = graph.forward_tape(tape, x, &positions);
    let (r, c) = tape.shape(y);
    let mut rng = SeededRng::new(seed);
    let w = tape.leaf(c, 1, (0..c).map(|_| rng.normal()).collect());
    let proj = tape.matmul(y, w);
    let coef = tape.leaf(1, r, (0..r).map(|_| rng.normal()).collect());
    let s = tape.matmul(coef, proj);
    tape.sum(s)
}

/// [`grad_check`] on a [`ModuleGraph`] with a fixed random projection loss.
pub fn grad_check_graph(graph: &ModuleGraph<f64>, input: &Tensor<f64>, eps: f64) -> GradCheckReport {
    let mut g = graph.clone();
    grad_check(&mut g, eps, |m, t| projection_loss(m, t, input, 0x5eed))
}
