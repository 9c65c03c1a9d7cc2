use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check_inputs, close};
use super::*;
use crate::error::{Error, Result};

const TRIALS: usize = 100;
const LAYER_TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    )
    .unwrap()
}

/// Reduces any output to a scalar with fixed pseudo-random weights.
fn project(tape: &mut Tape, out: Var) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let w: Vec<f64> = (0..n)
        .map(|i| 0.5 + ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    let w = tape.constant(Tensor::new(shape, w)?);
    let p = tape.mul(out, w)?;
    tape.sum_all(p)
}

fn run_trials<F>(name: &str, shapes: &[&[usize]], f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 31 + 7);
    for trial in 0..TRIALS {
        let inputs: Vec<Tensor> = shapes.iter().map(|s| random(&mut rng, s)).collect();
        let report = check_inputs(
            |t, v| {
                let out = f(t, v)?;
                project(t, out)
            },
            &inputs,
            LAYER_TOL,
        )
        .unwrap();
        assert!(
            report.passed(),
            "{name} trial {trial}: {:?}",
            &report.mismatches[..report.mismatches.len().min(3)]
        );
    }
}

#[test]
fn matmul_examples() {
    let mut t = Tape::new();
    let i2 = t.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
    let m = t.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let p = t.matmul(i2, m).unwrap();
    assert_eq!(t.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

    let a = t.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    let b = t.constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
    let p = t.matmul(a, b).unwrap();
    assert_eq!(t.value(p).data(), &[11.0]);
    assert_eq!(t.value(p).shape(), &[1, 1]);
}

#[test]
fn matmul_gradient_matches_frozen_fd_value() {
    // Frozen from the central-difference oracle (step 1e-5): d sum(a·b)/da = [[2, 5]].
    let expected = [2.0, 5.0];
    let mut t = Tape::new();
    let a = t.variable(Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap());
    let b = t.constant(Tensor::from_rows(&[vec![2.0], vec![5.0]]).unwrap());
    let p = t.matmul(a, b).unwrap();
    let s = t.sum_all(p).unwrap();
    let g = t.backward(s).unwrap();
    for (x, e) in g.get(a).unwrap().iter().zip(expected) {
        assert!(close(*x, e, LAYER_TOL));
    }
    let report = check_inputs(
        |t, v| {
            let b = t.constant(Tensor::from_rows(&[vec![2.0], vec![5.0]])?);
            let p = t.matmul(v[0], b)?;
            t.sum_all(p)
        },
        &[Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap()],
        LAYER_TOL,
    )
    .unwrap();
    assert!(report.passed());
}

#[test]
fn matmul_shape_error_reports_both_shapes() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    match t.matmul(a, b) {
        Err(Error::Shape { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn elementwise_examples() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let z = t.constant(Tensor::vector(vec![0.0; 3]));
    let p = t.mul(a, z).unwrap();
    assert_eq!(t.value(p).data(), &[0.0, 0.0, 0.0]);

    let a = t.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = t.constant(Tensor::vector(vec![3.0, 4.0]));
    let s = t.add(a, b).unwrap();
    assert_eq!(t.value(s).data(), &[4.0, 6.0]);

    let bad = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert!(matches!(t.add(a, bad), Err(Error::Shape { .. })));

    // grad of sum(a ⊙ b) w.r.t. a at a=[2,3], b=[5,7] is [5,7] (finite-difference oracle).
    let report = check_inputs(
        |t, v| {
            let p = t.mul(v[0], v[1])?;
            t.sum_all(p)
        },
        &[
            Tensor::vector(vec![2.0, 3.0]),
            Tensor::vector(vec![5.0, 7.0]),
        ],
        LAYER_TOL,
    )
    .unwrap();
    assert!(report.passed());
    let mut t = Tape::new();
    let a = t.variable(Tensor::vector(vec![2.0, 3.0]));
    let b = t.constant(Tensor::vector(vec![5.0, 7.0]));
    let p = t.mul(a, b).unwrap();
    let s = t.sum_all(p).unwrap();
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(a).unwrap(), &[5.0, 7.0]);
}

#[test]
fn activation_examples() {
    let mut t = Tape::new();
    let z = t.variable(Tensor::scalar(0.0));
    let s = t.sigmoid(z);
    assert_eq!(t.value(s).item().unwrap(), 0.5);
    let th = t.tanh(z);
    assert_eq!(t.value(th).item().unwrap(), 0.0);
    let e = t.elu(z);
    assert_eq!(t.value(e).item().unwrap(), 0.0);
    let far = t.constant(Tensor::scalar(-20.0));
    let ef = t.elu(far);
    let v = t.value(ef).item().unwrap();
    assert!(v > -1.0 && v < -0.999);

    let u = t.constant(Tensor::vector(vec![0.0; 3]));
    let sm = t.softmax(u, 0).unwrap();
    for p in t.value(sm).data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }

    let g = t.backward(s).unwrap();
    assert_eq!(g.get(z).unwrap(), &[0.25]);
}

#[test]
fn structural_examples() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = t.constant(Tensor::vector(vec![3.0]));
    let c = t.concat(&[a, b], 0).unwrap();
    assert_eq!(t.value(c).data(), &[1.0, 2.0, 3.0]);

    let mut train = Tape::training(9, 0);
    let x = train.constant(Tensor::vector(vec![5.0, 6.0]));
    let d = train.dropout(x, 0.0).unwrap();
    assert_eq!(train.value(d).data(), &[5.0, 6.0]);

    let mut eval = Tape::new();
    let x = eval.constant(Tensor::vector(vec![5.0, 6.0]));
    let d = eval.dropout(x, 0.5).unwrap();
    assert_eq!(eval.value(d).data(), &[5.0, 6.0]);

    let y = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert!(matches!(t.slice(y, 0, 2..4), Err(Error::Index(_))));
    assert!(matches!(t.softmax(y, 1), Err(Error::Index(_))));
}

#[test]
fn dropout_scales_survivors_and_zeroes_the_rest() {
    let mut t = Tape::training(3, 11);
    let x = t.constant(Tensor::full(&[10_000], 1.0));
    let d = t.dropout(x, 0.25).unwrap();
    let out = t.value(d).data();
    let kept = out.iter().filter(|v| **v != 0.0).count();
    assert!(out
        .iter()
        .all(|v| *v == 0.0 || (*v - 1.0 / 0.75).abs() < 1e-12));
    let frac = kept as f64 / out.len() as f64;
    assert!((frac - 0.75).abs() < 0.02, "kept fraction {frac}");
}

#[test]
fn backward_product_rule_and_accumulation() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::scalar(2.0));
    let y = store.add("y", Tensor::scalar(3.0));
    for round in 1..=2 {
        let mut t = Tape::new();
        let xv = t.param(&store, x);
        let yv = t.param(&store, y);
        let l = t.mul(xv, yv).unwrap();
        let g = t.backward(l).unwrap();
        store.accumulate(&t.param_grads(&g));
        assert_eq!(store.grad(x), &[3.0 * round as f64]);
        assert_eq!(store.grad(y), &[2.0 * round as f64]);
    }
    store.zero_grad();
    assert_eq!(store.grad(x), &[0.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut t = Tape::new();
    let x = t.variable(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(t.backward(x), Err(Error::Contract(_))));
}

#[test]
fn sigmoid_of_linear_map_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = random(&mut rng, &[3, 3]);
    let x = random(&mut rng, &[3, 1]);
    let report = check_inputs(
        |t, v| {
            let p = t.matmul(v[0], v[1])?;
            let s = t.sigmoid(p);
            t.sum_all(s)
        },
        &[w, x],
        LAYER_TOL,
    )
    .unwrap();
    assert!(report.passed());
}

#[test]
fn fd_matmul_family() {
    run_trials("matmul", &[&[3, 4], &[4, 2]], |t, v| t.matmul(v[0], v[1]));
    run_trials("matmul_batched_rows", &[&[2, 3, 4], &[4, 2]], |t, v| {
        t.matmul(v[0], v[1])
    });
    run_trials("matmul_nt", &[&[2, 3, 4], &[5, 4]], |t, v| {
        t.matmul_nt(v[0], v[1])
    });
    run_trials("bmm", &[&[2, 3, 4], &[2, 4, 2]], |t, v| t.bmm(v[0], v[1]));
    run_trials("bmm_nt", &[&[2, 3, 4], &[2, 5, 4]], |t, v| {
        t.bmm_nt(v[0], v[1])
    });
}

#[test]
fn fd_elementwise_with_broadcast() {
    run_trials("add", &[&[2, 3], &[2, 3]], |t, v| t.add(v[0], v[1]));
    run_trials("sub_bias", &[&[2, 3], &[3]], |t, v| t.sub(v[0], v[1]));
    run_trials("mul_col", &[&[2, 3], &[2, 1]], |t, v| t.mul(v[0], v[1]));
    run_trials("mul_mid", &[&[2, 4, 3], &[2, 1, 3]], |t, v| {
        t.mul(v[0], v[1])
    });
    run_trials("mul_scalar", &[&[2, 3], &[1]], |t, v| t.mul(v[0], v[1]));
    run_trials("scale", &[&[2, 3]], |t, v| Ok(t.scale(v[0], -1.7)));
}

#[test]
fn fd_activations() {
    run_trials("sigmoid", &[&[3, 4]], |t, v| Ok(t.sigmoid(v[0])));
    run_trials("tanh", &[&[3, 4]], |t, v| Ok(t.tanh(v[0])));
    run_trials("elu", &[&[3, 4]], |t, v| Ok(t.elu(v[0])));
    run_trials("relu", &[&[3, 4]], |t, v| Ok(t.relu(v[0])));
    run_trials("softmax_last", &[&[3, 4]], |t, v| t.softmax(v[0], 1));
    run_trials("softmax_first", &[&[3, 4]], |t, v| t.softmax(v[0], 0));
    run_trials("softmax_mid", &[&[2, 3, 4]], |t, v| t.softmax(v[0], 1));
    run_trials("standardize", &[&[3, 5]], |t, v| t.standardize(v[0], 1e-5));
}

#[test]
fn fd_structural() {
    run_trials("concat0", &[&[2, 3], &[1, 3]], |t, v| {
        t.concat(&[v[0], v[1]], 0)
    });
    run_trials("concat1", &[&[2, 3], &[2, 2]], |t, v| {
        t.concat(&[v[0], v[1]], 1)
    });
    run_trials("slice", &[&[3, 5]], |t, v| t.slice(v[0], 1, 1..4));
    run_trials("reshape", &[&[3, 4]], |t, v| t.reshape(v[0], &[2, 6]));
    run_trials("transpose", &[&[2, 3, 4]], |t, v| t.transpose(v[0]));
    run_trials("sum", &[&[2, 3, 4]], |t, v| t.sum(v[0], 1));
    run_trials("mean", &[&[2, 3, 4]], |t, v| t.mean(v[0], 2));
}

#[test]
fn fd_dropout_in_training_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..TRIALS {
        let x = random(&mut rng, &[4, 5]);
        let check = |t: &mut Tape, v: &[Var]| -> Result<Var> {
            let d = t.dropout(v[0], 0.3)?;
            let s = t.tanh(d);
            project(t, s)
        };
        // Fresh training tapes with the same (seed, step) reuse the same mask.
        let mut tape = Tape::training(1, trial as u64);
        let xv = tape.variable(x.clone());
        let out = check(&mut tape, &[xv]).unwrap();
        let g = tape.backward(out).unwrap();
        let analytic = g.get(xv).unwrap().to_vec();
        for e in 0..x.numel() {
            let eval = |delta: f64| {
                let mut xp = x.clone();
                xp.data_mut()[e] += delta;
                let mut t = Tape::training(1, trial as u64);
                let v = t.variable(xp);
                let o = check(&mut t, &[v]).unwrap();
                t.value(o).item().unwrap()
            };
            let numeric = (eval(1e-5) - eval(-1e-5)) / 2e-5;
            assert!(close(analytic[e], numeric, LAYER_TOL));
        }
    }
}

#[test]
fn replay_is_bit_identical() {
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut t = Tape::training(5, 3);
        let a = t.variable(random(&mut rng, &[4, 6]));
        let w = t.variable(random(&mut rng, &[3, 6]));
        let h = t.matmul_nt(a, w).unwrap();
        let h = t.dropout(h, 0.2).unwrap();
        let h = t.softmax(h, 1).unwrap();
        let l = t.sum_all(h).unwrap();
        let l = t.scale(l, 0.3);
        let g = t.backward(l).unwrap();
        (t.value(h).clone(), g.get(w).unwrap().to_vec())
    };
    let (a, ga) = build();
    let (b, gb) = build();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
}

proptest! {
    #[test]
    fn softmax_normalises_and_ignores_shift(
        logits in prop::collection::vec(-30.0f64..30.0, 1..12),
        shift in -50.0f64..50.0,
    ) {
        let n = logits.len();
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(logits.clone()));
        let shifted = t.constant(Tensor::vector(logits.iter().map(|x| x + shift).collect()));
        let p = t.softmax(a, 0).unwrap();
        let q = t.softmax(shifted, 0).unwrap();
        let total: f64 = t.value(p).data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for i in 0..n {
            prop_assert!((t.value(p).data()[i] - t.value(q).data()[i]).abs() < 1e-9);
        }
    }
}
