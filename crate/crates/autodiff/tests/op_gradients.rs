//! Every differentiable op against central differences, over randomized inputs.

use plantar_autodiff::{
    finite_difference_check, BatchNormMode, GradCheck, Mode, Result, Tape, Tensor, Var,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Reduces an arbitrary-shaped output to a scalar with fixed random weights,
/// so every output element contributes a distinct slope.
fn weighted_sum(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let w = random(&mut rng, t.shape(y));
    let w = t.constant(w);
    let p = t.mul(y, w)?;
    t.sum(p)
}

fn check(name: &str, shapes: &[&[usize]], f: impl Fn(&mut Tape, &[Var], u64) -> Result<Var>) {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor> = shapes.iter().map(|s| random(&mut rng, s)).collect();
        let report = GradCheck::default()
            .run(|t, v| f(t, v, seed), &inputs)
            .unwrap_or_else(|e| panic!("{name} seed {seed}: {e}"));
        assert!(
            report.max_relative_error < TOL,
            "{name} seed {seed}: relative error {}",
            report.max_relative_error
        );
    }
}

#[test]
fn matmul_plain_and_batched() {
    check("matmul", &[&[3, 4], &[4, 2]], |t, v, s| {
        let y = t.matmul(v[0], v[1])?;
        weighted_sum(t, y, s)
    });
    check("matmul-lhs-batched", &[&[2, 3, 4], &[4, 5]], |t, v, s| {
        let y = t.matmul(v[0], v[1])?;
        weighted_sum(t, y, s)
    });
    check("matmul-batched", &[&[2, 3, 4], &[2, 4, 2]], |t, v, s| {
        let y = t.matmul(v[0], v[1])?;
        weighted_sum(t, y, s)
    });
}

#[test]
fn conv2d_with_and_without_bias() {
    check("conv2d", &[&[2, 2, 5, 4], &[3, 2, 3, 3]], |t, v, s| {
        let y = t.conv2d(v[0], v[1], None, 1, 1)?;
        weighted_sum(t, y, s)
    });
    check("conv2d-stride2-bias", &[&[2, 2, 6, 4], &[3, 2, 3, 3], &[3]], |t, v, s| {
        let y = t.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
        weighted_sum(t, y, s)
    });
}

#[test]
fn elementwise_binary_with_broadcast() {
    for (name, rhs) in [("same", &[3usize, 4][..]), ("suffix", &[4][..]), ("scalar", &[1][..])] {
        check(&format!("add-{name}"), &[&[3, 4], rhs], |t, v, s| {
            let y = t.add(v[0], v[1])?;
            weighted_sum(t, y, s)
        });
        check(&format!("sub-{name}"), &[&[3, 4], rhs], |t, v, s| {
            let y = t.sub(v[0], v[1])?;
            weighted_sum(t, y, s)
        });
        check(&format!("mul-{name}"), &[&[3, 4], rhs], |t, v, s| {
            let y = t.mul(v[0], v[1])?;
            weighted_sum(t, y, s)
        });
    }
}

#[test]
fn shape_ops() {
    check("concat", &[&[2, 3, 2], &[2, 1, 2], &[2, 2, 2]], |t, v, s| {
        let y = t.concat(v, 1)?;
        weighted_sum(t, y, s)
    });
    check("reshape", &[&[2, 6]], |t, v, s| {
        let y = t.reshape(v[0], [3, 4])?;
        weighted_sum(t, y, s)
    });
    check("transpose", &[&[2, 3, 4]], |t, v, s| {
        let y = t.transpose(v[0], [2, 0, 1])?;
        weighted_sum(t, y, s)
    });
    check("slice", &[&[3, 5, 2]], |t, v, s| {
        let y = t.slice(v[0], 1, 1, 3)?;
        weighted_sum(t, y, s)
    });
}

#[test]
fn nonlinearities() {
    check("softmax", &[&[3, 5]], |t, v, s| {
        let y = t.softmax(v[0])?;
        weighted_sum(t, y, s)
    });
    check("sigmoid", &[&[4, 3]], |t, v, s| {
        let y = t.sigmoid(v[0])?;
        weighted_sum(t, y, s)
    });
    check("tanh", &[&[4, 3]], |t, v, s| {
        let y = t.tanh(v[0])?;
        weighted_sum(t, y, s)
    });
    // uniform(-1, 1) inputs stay well away from the kink relative to the step
    check("relu", &[&[4, 3]], |t, v, s| {
        let y = t.relu(v[0])?;
        weighted_sum(t, y, s)
    });
    check("log", &[&[4, 3]], |t, v, s| {
        let sq = t.mul(v[0], v[0])?;
        let one = t.constant(Tensor::scalar(1.0));
        let pos = t.add(sq, one)?;
        let y = t.log(pos)?;
        weighted_sum(t, y, s)
    });
    check("scale", &[&[4, 3]], |t, v, s| {
        let y = t.scale(v[0], -2.5)?;
        weighted_sum(t, y, s)
    });
}

#[test]
fn reductions() {
    check("mean", &[&[3, 4]], |t, v, s| {
        let y = t.mean(v[0])?;
        let y = t.mul(y, y)?;
        weighted_sum(t, y, s)
    });
    check("sum", &[&[3, 4]], |t, v, _| {
        let sq = t.mul(v[0], v[0])?;
        t.sum(sq)
    });
}

#[test]
fn batchnorm_train_and_infer() {
    check("batchnorm-train", &[&[3, 2, 2, 2], &[2], &[2]], |t, v, s| {
        let y = t.batch_norm(v[0], v[1], v[2], 1e-5, BatchNormMode::Train)?;
        weighted_sum(t, y, s)
    });
    check("batchnorm-infer", &[&[3, 2, 2, 2], &[2], &[2]], |t, v, s| {
        let mode = BatchNormMode::Infer {
            mean: vec![0.1, -0.2],
            var: vec![0.5, 1.5],
        };
        let y = t.batch_norm(v[0], v[1], v[2], 1e-5, mode)?;
        weighted_sum(t, y, s)
    });
}

#[test]
fn dropout_train_mask_is_differentiable() {
    check("dropout", &[&[5, 4]], |t, v, s| {
        let y = t.dropout(v[0], 0.3, Mode::Train, 11)?;
        weighted_sum(t, y, s)
    });
}

#[test]
fn mean_of_softmax_matches_finite_differences() {
    let x = Tensor::from_vec(vec![1.0, 0.0]);
    // mean(softmax(x)) is constant in x, so weight the softmax to get a nonzero slope
    let err = finite_difference_check(
        |t, x| {
            let y = t.softmax(x)?;
            let w = t.constant(Tensor::from_vec(vec![2.0, -1.0]));
            let p = t.mul(y, w)?;
            t.mean(p)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");

    // and the literal form: analytic gradient is zero, numeric is rounding noise
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let y = tape.softmax(xv).unwrap();
    let m = tape.mean(y).unwrap();
    let g = tape.backward(m).unwrap();
    assert!(g.get(xv).unwrap().max_abs() < 1e-15);
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..5,
        cols in 1usize..7,
        seed in any::<u64>(),
        spread in 0.1f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn([rows, cols], |_| rng.gen_range(-spread..spread));
        let mut t = Tape::new();
        let v = t.constant(x);
        let y = t.softmax(v).unwrap();
        for row in t.value(y).data().chunks(cols) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn reshape_and_transpose_round_trip(
        a in 1usize..4, b in 1usize..4, c in 1usize..4, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn([a, b, c], |_| rng.gen());
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let r = t.reshape(v, [a * b * c]).unwrap();
        let back = t.reshape(r, [a, b, c]).unwrap();
        prop_assert_eq!(t.value(back), &x);
        let p = t.transpose(v, [1, 2, 0]).unwrap();
        let q = t.transpose(p, [2, 0, 1]).unwrap();
        prop_assert_eq!(t.value(q), &x);
    }
}
