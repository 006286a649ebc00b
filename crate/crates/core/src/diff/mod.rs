//! Deterministic dense-tensor compute graphs with reverse-mode gradients,
//! verified against finite differences.

mod check;
mod graph;
mod rng;
mod tensor;

pub use check::{finite_diff_check, FiniteDiffOpts};
pub use graph::{Bindings, EvalOpts, Execution, Gradients, Graph, GraphBuilder, NodeId};
pub use rng::CounterRng;
pub use tensor::{Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_tensor(rng: &mut CounterRng, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.standard_normal()).collect()).unwrap()
    }

    /// Random values with magnitude in (0.2, 1.5): bounded away from zero
    /// (where the relative-error denominator floors out) and from the
    /// clamp kinks at +-0.5, so the finite-difference oracle stays clean.
    fn rand_tensor_bounded(rng: &mut CounterRng, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| loop {
                let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                let mag = rng.uniform_in(0.2, 1.5);
                if (mag - 0.5).abs() > 0.05 {
                    return sign * mag;
                }
            })
            .collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn relu_forward_matches_definition() {
        let mut gb = GraphBuilder::<f64>::new();
        let x = gb.input("x", &[3]).unwrap();
        let y = gb.relu(x);
        let g = gb.finish(&[("y", y)]);
        let mut inputs = Bindings::new();
        inputs.insert("x", Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let exec = g
            .forward(&Bindings::new(), &inputs, EvalOpts::default())
            .unwrap();
        assert_eq!(exec.value(y).unwrap().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn conv1d_output_lengths_match_stride_formula() {
        // (L + 2*1 - 3) / 2 + 1, so 5000 -> 2500 and repeated halving.
        for (l, want) in [(5000usize, 2500usize), (8, 4), (64, 32)] {
            let mut gb = GraphBuilder::<f64>::new();
            let x = gb.input("x", &[1, l]).unwrap();
            let w = gb.param("w", &[4, 1, 3]).unwrap();
            let b = gb.param("b", &[4]).unwrap();
            let y = gb.conv1d(x, w, b, 2, 1).unwrap();
            let g = gb.finish(&[("y", y)]);
            assert_eq!(g.node_shape(y), &[4, want]);
        }
    }

    #[test]
    fn tconv1d_doubles_length() {
        // (L - 1) * 2 - 2*1 + 4 = 2L, so 625 -> 1250.
        let mut gb = GraphBuilder::<f64>::new();
        let x = gb.input("x", &[2, 625]).unwrap();
        let w = gb.param("w", &[2, 3, 4]).unwrap();
        let b = gb.param("b", &[3]).unwrap();
        let y = gb.tconv1d(x, w, b, 2, 1).unwrap();
        let g = gb.finish(&[("y", y)]);
        assert_eq!(g.node_shape(y), &[3, 1250]);
    }

    #[test]
    fn conv_then_tconv_round_trips_length() {
        // Three stride-2 convolutions then three transposed ones map L -> L
        // whenever L is divisible by 8.
        for l in [8usize, 64, 120, 512] {
            let mut gb = GraphBuilder::<f64>::new();
            let x = gb.input("x", &[1, l]).unwrap();
            let mut cur = x;
            let chans = [1usize, 4, 8, 16];
            for s in 0..3 {
                let w = gb
                    .param(&format!("cw{s}"), &[chans[s + 1], chans[s], 3])
                    .unwrap();
                let b = gb.param(&format!("cb{s}"), &[chans[s + 1]]).unwrap();
                cur = gb.conv1d(cur, w, b, 2, 1).unwrap();
            }
            for s in 0..3 {
                let w = gb
                    .param(&format!("tw{s}"), &[chans[3 - s], chans[2 - s], 4])
                    .unwrap();
                let b = gb.param(&format!("tb{s}"), &[chans[2 - s]]).unwrap();
                cur = gb.tconv1d(cur, w, b, 2, 1).unwrap();
            }
            let g = gb.finish(&[("y", cur)]);
            assert_eq!(g.node_shape(cur), &[1, l]);
        }
    }

    #[test]
    fn sum_of_params_has_all_ones_gradient() {
        let mut gb = GraphBuilder::<f64>::new();
        let p = gb.param("p", &[5]).unwrap();
        let s = gb.sum(p);
        let g = gb.finish(&[("loss", s)]);
        let mut params = Bindings::new();
        params.insert("p", Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0, 4.0]));
        let inputs = Bindings::new();
        let exec = g.forward(&params, &inputs, EvalOpts::default()).unwrap();
        let grads = g
            .backward(&params, &inputs, &exec, s)
            .unwrap()
            .into_param_grads(&g);
        assert_eq!(grads.get("p").unwrap().data(), &[1.0; 5]);
    }

    #[test]
    fn quadratic_gradient_is_the_point() {
        // loss = |p|^2 / 2  =>  grad = p
        let mut gb = GraphBuilder::<f64>::new();
        let p = gb.param("p", &[4]).unwrap();
        let sq = gb.mul(p, p).unwrap();
        let s = gb.sum(sq);
        let half = gb.scalar(0.5);
        let loss = gb.mul(s, half).unwrap();
        let g = gb.finish(&[("loss", loss)]);
        let mut params = Bindings::new();
        params.insert("p", Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0]));
        let inputs = Bindings::new();
        let exec = g.forward(&params, &inputs, EvalOpts::default()).unwrap();
        let grads = g
            .backward(&params, &inputs, &exec, loss)
            .unwrap()
            .into_param_grads(&g);
        assert_eq!(grads.get("p").unwrap().data(), &[1.0, -2.0, 0.5, 3.0]);
    }

    #[test]
    fn linear_model_finite_diff_error_is_tiny() {
        let mut gb = GraphBuilder::<f64>::new();
        let x = gb.input("x", &[6]).unwrap();
        let w = gb.param("w", &[1, 6]).unwrap();
        let b = gb.param("b", &[1]).unwrap();
        let y = gb.affine(x, w, b).unwrap();
        let loss = gb.sum(y);
        let g = gb.finish(&[("loss", loss)]);
        let mut rng = CounterRng::new(1);
        let mut params = Bindings::new();
        params.insert("w", rand_tensor(&mut rng, &[1, 6]));
        params.insert("b", rand_tensor(&mut rng, &[1]));
        let mut inputs = Bindings::new();
        inputs.insert("x", rand_tensor(&mut rng, &[6]));
        let err =
            finite_diff_check(&g, &params, &inputs, "loss", FiniteDiffOpts::default()).unwrap();
        assert!(err < 1e-9, "linear model error {err}");
    }

    /// One small graph per node type, gradient-checked on many seeds.
    fn node_type_graph(
        kind: &str,
    ) -> (Graph<f64>, Vec<(String, Vec<usize>)>, Vec<(String, Vec<usize>)>) {
        let mut gb = GraphBuilder::<f64>::new();
        let mut params = vec![("p".to_string(), vec![6usize])];
        let mut inputs: Vec<(String, Vec<usize>)> = vec![];
        let p = gb.param("p", &[6]).unwrap();
        let y = match kind {
            "relu" => gb.relu(p),
            "exp" => gb.exp(p),
            "softmax" => gb.softmax(p).unwrap(),
            "log" | "sqrt" => {
                // keep strictly positive via exp first
                let e = gb.exp(p);
                if kind == "log" {
                    gb.log(e)
                } else {
                    gb.sqrt(e)
                }
            }
            "add" | "sub" | "mul" | "div" => {
                let q = gb.param("q", &[6]).unwrap();
                params.push(("q".to_string(), vec![6]));
                match kind {
                    "add" => gb.add(p, q).unwrap(),
                    "sub" => gb.sub(p, q).unwrap(),
                    "mul" => gb.mul(p, q).unwrap(),
                    _ => {
                        let shifted = gb.exp(q); // keep denominator positive
                        gb.div(p, shifted).unwrap()
                    }
                }
            }
            "scalar_broadcast" => {
                let s = gb.param("s", &[1]).unwrap();
                params.push(("s".to_string(), vec![1]));
                gb.mul(p, s).unwrap()
            }
            "mean" => gb.mean(p),
            "concat_slice" => {
                let q = gb.param("q", &[3]).unwrap();
                params.push(("q".to_string(), vec![3]));
                let c = gb.concat(&[p, q]).unwrap();
                gb.slice(c, 2, 5).unwrap()
            }
            "clamp" => gb.clamp(p, -0.5, 0.5),
            "reshape" => gb.reshape(p, &[2, 3]).unwrap(),
            "affine" => {
                let x = gb.input("x", &[4]).unwrap();
                inputs.push(("x".to_string(), vec![4]));
                let w = gb.param("w", &[6, 4]).unwrap();
                params.push(("w".to_string(), vec![6, 4]));
                let a = gb.affine(x, w, p).unwrap();
                gb.relu(a)
            }
            "conv1d" => {
                let x = gb.input("x", &[2, 12]).unwrap();
                inputs.push(("x".to_string(), vec![2, 12]));
                let w = gb.param("w", &[3, 2, 3]).unwrap();
                params.push(("w".to_string(), vec![3, 2, 3]));
                let b = gb.param("b", &[3]).unwrap();
                params.push(("b".to_string(), vec![3]));
                let c = gb.conv1d(x, w, b, 2, 1).unwrap();
                gb.relu(c)
            }
            "tconv1d" => {
                let x = gb.input("x", &[2, 6]).unwrap();
                inputs.push(("x".to_string(), vec![2, 6]));
                let w = gb.param("w", &[2, 3, 4]).unwrap();
                params.push(("w".to_string(), vec![2, 3, 4]));
                let b = gb.param("b", &[3]).unwrap();
                params.push(("b".to_string(), vec![3]));
                let c = gb.tconv1d(x, w, b, 2, 1).unwrap();
                gb.relu(c)
            }
            "dropout" => gb.dropout(p, 0.5).unwrap(),
            other => panic!("unknown node kind {other}"),
        };
        let sq = gb.mul(y, y).unwrap();
        let loss = gb.mean(sq);
        (gb.finish(&[("loss", loss)]), params, inputs)
    }

    #[test]
    fn every_node_type_passes_finite_diff_on_many_seeds() {
        let kinds = [
            "relu",
            "exp",
            "log",
            "sqrt",
            "softmax",
            "add",
            "sub",
            "mul",
            "div",
            "scalar_broadcast",
            "mean",
            "concat_slice",
            "clamp",
            "reshape",
            "affine",
            "conv1d",
            "tconv1d",
            "dropout",
        ];
        for kind in kinds {
            let (graph, param_shapes, input_shapes) = node_type_graph(kind);
            for seed in 0..100u64 {
                let mut rng = CounterRng::new(0xD1FF).derive_str(kind).derive(seed);
                let mut params = Bindings::new();
                for (name, shape) in &param_shapes {
                    params.insert(name.clone(), rand_tensor_bounded(&mut rng, shape));
                }
                let mut inputs = Bindings::new();
                for (name, shape) in &input_shapes {
                    inputs.insert(name.clone(), rand_tensor_bounded(&mut rng, shape));
                }
                let opts = FiniteDiffOpts {
                    eval: EvalOpts {
                        train: kind == "dropout",
                        dropout_key: seed,
                    },
                    ..FiniteDiffOpts::default()
                };
                let err = finite_diff_check(&graph, &params, &inputs, "loss", opts).unwrap();
                assert!(err < 1e-4, "{kind} seed {seed}: error {err}");
            }
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut gb = GraphBuilder::<f64>::new();
        let p = gb.param("p", &[3]).unwrap();
        let y = gb.relu(p);
        let g = gb.finish(&[("y", y)]);
        let mut params = Bindings::new();
        params.insert("p", Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let inputs = Bindings::new();
        let exec = g.forward(&params, &inputs, EvalOpts::default()).unwrap();
        assert!(matches!(
            g.backward(&params, &inputs, &exec, y),
            Err(DiffError::Contract(_))
        ));
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let mut gb = GraphBuilder::<f64>::new();
        let x = gb.input("x", &[4]).unwrap();
        let y = gb.relu(x);
        let g = gb.finish(&[("y", y)]);
        let mut inputs = Bindings::new();
        inputs.insert("x", Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        assert!(matches!(
            g.forward(&Bindings::new(), &inputs, EvalOpts::default()),
            Err(DiffError::Shape(_))
        ));
    }

    #[test]
    fn forward_is_deterministic_and_dropout_replays_by_key() {
        let mut gb = GraphBuilder::<f64>::new();
        let x = gb.input("x", &[64]).unwrap();
        let d = gb.dropout(x, 0.5).unwrap();
        let g = gb.finish(&[("y", d)]);
        let mut rng = CounterRng::new(3);
        let mut inputs = Bindings::new();
        inputs.insert("x", rand_tensor(&mut rng, &[64]));
        let opts = EvalOpts {
            train: true,
            dropout_key: 42,
        };
        let a = g.forward(&Bindings::new(), &inputs, opts).unwrap();
        let b = g.forward(&Bindings::new(), &inputs, opts).unwrap();
        assert_eq!(a.value(d).unwrap().data(), b.value(d).unwrap().data());
        let c = g
            .forward(
                &Bindings::new(),
                &inputs,
                EvalOpts {
                    train: true,
                    dropout_key: 43,
                },
            )
            .unwrap();
        assert_ne!(a.value(d).unwrap().data(), c.value(d).unwrap().data());
        // Eval mode: identity.
        let e = g
            .forward(&Bindings::new(), &inputs, EvalOpts::default())
            .unwrap();
        assert_eq!(e.value(d).unwrap().data(), inputs.get("x").unwrap().data());
    }

    #[test]
    fn shared_parameter_gradients_accumulate_across_uses() {
        // loss = sum(p * c1) + sum(p * c2) => grad = c1 + c2
        let mut gb = GraphBuilder::<f64>::new();
        let p = gb.param("p", &[3]).unwrap();
        let c1 = gb.constant(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let c2 = gb.constant(Tensor::from_vec(vec![10.0, 20.0, 30.0]));
        let a = gb.mul(p, c1).unwrap();
        let b = gb.mul(p, c2).unwrap();
        let sa = gb.sum(a);
        let sb = gb.sum(b);
        let loss = gb.add(sa, sb).unwrap();
        let g = gb.finish(&[("loss", loss)]);
        let mut params = Bindings::new();
        params.insert("p", Tensor::from_vec(vec![5.0, 5.0, 5.0]));
        let inputs = Bindings::new();
        let exec = g.forward(&params, &inputs, EvalOpts::default()).unwrap();
        let grads = g
            .backward(&params, &inputs, &exec, loss)
            .unwrap()
            .into_param_grads(&g);
        assert_eq!(grads.get("p").unwrap().data(), &[11.0, 22.0, 33.0]);
    }
}
