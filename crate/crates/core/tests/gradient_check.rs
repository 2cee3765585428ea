mod oracles;

use ndarray::Array2;
use oracles::{finite_difference_grads, relative_error};
use pude::neural::{DenseNet, Mode, NetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(net: &DenseNet, x: &Array2<f64>, mode: Mode, upstream: &Array2<f64>) -> f64 {
    let (_, cache) = net.forward_pass(x.view(), mode).unwrap();
    let analytic = net.backward(&cache, upstream.view()).unwrap();
    let (fd_params, fd_input) = finite_difference_grads(net, x, mode, upstream, 1e-5);
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.param_slices().iter().zip(&fd_params) {
        for (&a, &n) in a.iter().zip(n) {
            worst = worst.max(relative_error(a, n, 1e-6));
        }
    }
    for (&a, &n) in analytic.input.iter().zip(fd_input.iter()) {
        worst = worst.max(relative_error(a, n, 1e-6));
    }
    worst
}

#[test]
fn random_three_layer_nets_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..40 {
        let batch_norm = case % 2 == 0;
        let spec = NetSpec {
            input: rng.random_range(1..5),
            hidden: vec![rng.random_range(1..6), rng.random_range(1..6)],
            output: rng.random_range(1..3),
            batch_norm,
        };
        let net = DenseNet::init(&spec, case).unwrap();
        let rows = rng.random_range(2..6);
        let x = Array2::from_shape_simple_fn((rows, spec.input), || rng.random_range(-2.0..2.0));
        let up = Array2::from_shape_simple_fn((rows, spec.output), || rng.random_range(-1.0..1.0));
        for mode in [Mode::Train, Mode::Eval] {
            let worst = check(&net, &x, mode, &up);
            assert!(worst < 1e-4, "case {case} {mode:?}: relative error {worst}");
        }
    }
}
