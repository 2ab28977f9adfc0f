//! Checks tape gradients of a layer-normed linear map against central
//! differences.
//!
//!     cargo run --example gradient_check

use kvqa::nn::layers::{apply_layer_norm, apply_linear};
use kvqa::nn::{finite_diff_check, finite_diff_check_params, Graph, ParamStore, Tensor};

fn main() -> kvqa::Result<()> {
    let mut store = ParamStore::new();
    store.insert(
        "lin.w",
        Tensor::matrix(3, 4, (0..12).map(|i| (i as f64).sin()).collect())?,
    );
    store.insert("lin.b", Tensor::vector(vec![0.1, -0.2, 0.3, 0.0]));
    store.insert("ln.gamma", Tensor::vector(vec![1.0, 0.5, 2.0, 1.5]));
    store.insert("ln.beta", Tensor::vector(vec![0.0, 0.1, -0.1, 0.2]));
    let x = Tensor::matrix(2, 3, vec![0.3, -1.2, 0.8, 2.0, 0.1, -0.5])?;
    let weights = Tensor::matrix(2, 4, vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.2, 0.7, 1.1])?;

    let objective = |g: &mut Graph, s: &ParamStore, x| {
        let h = apply_linear(g, s, "lin", x)?;
        let y = apply_layer_norm(g, s, "ln", h)?;
        let w = g.constant(weights.clone());
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    };
    let params = finite_diff_check_params(
        |g, s| {
            let x = g.constant(x.clone());
            objective(g, s, x)
        },
        &store,
        &["lin.w", "lin.b", "ln.gamma", "ln.beta"],
        1e-6,
        None,
        0,
    )?;
    let input = finite_diff_check(|g, x| objective(g, &store, x), &x, 1e-6)?;
    println!("parameters: {params:?}");
    println!("input:      {input:?}");
    Ok(())
}
