//! Checks the tape's gradients of a small transformer encoder against
//! central finite differences, then shows a broken backward being caught.
//!
//! cargo run --example gradcheck

use std::sync::Arc;
use vimguard::nnet::layers::Linear;
use vimguard::nnet::tape::CustomBackward;
use vimguard::nnet::{grad_check, grad_check_graph, GraphConfig, ModuleGraph, ParamStore, Tensor};
use vimguard::rng::SeededRng;

fn main() {
    let cfg = GraphConfig {
        in_dim: 6,
        d_model: 8,
        heads: 2,
        depth: 2,
        mlp_hidden: 16,
        n_positions: 5,
        out_dim: Some(4),
        init_std: 0.5,
    };
    let mut rng = SeededRng::new(1);
    let graph = ModuleGraph::<f64>::new("encoder", cfg, 0, &mut rng).unwrap();
    let x = Tensor::matrix(5, 6, (0..30).map(|_| rng.normal()).collect());
    let report = grad_check_graph(&graph, &x, 1e-5);
    println!(
        "encoder: {} parameters checked, max relative error {:.2e} ({})",
        report.n_checked, report.max_rel_error, report.worst
    );

    let mut store = ParamStore::<f64>::new(0);
    let lin = Linear::register(&mut store, "lin", 3, 3, 0.5, &mut rng);
    // tanh whose backward forgot the (1 - y^2) factor
    let broken: CustomBackward<f64> = Arc::new(|_x, _y, g| g.to_vec());
    let report = grad_check(&mut store, 1e-5, |s, t| {
        let xv = t.leaf(1, 3, vec![0.2, -0.7, 1.3]);
        let h = lin.forward(t, s, xv);
        let h = t.custom_unary(h, f64::tanh, broken.clone());
        t.sum(h)
    });
    println!(
        "broken tanh: max relative error {:.2e}, passes 1e-4: {}",
        report.max_rel_error,
        report.passes(1e-4)
    );
}
