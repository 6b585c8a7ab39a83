mod common;

use popinf_core::autodiff::{grad, grad_through_update, hvp, Graph, Mat, Objective, Scalar, Var};
use popinf_core::models::{mlp_forward, MseLoss};
use popinf_oracles as oracle;
use proptest::prelude::*;

#[test]
fn mlp_gradients_match_finite_differences() {
    let e = common::mlp_gradient_error(25);
    assert!(e < oracle::tol::FD_GRADIENT, "{e}");
}

#[test]
fn through_update_matches_finite_differences() {
    let e = common::through_update_error(10);
    assert!(e < oracle::tol::FD_THROUGH_UPDATE, "{e}");
}

#[test]
fn mlp_forward_matches_naive_network() {
    for seed in 0..10 {
        let r = common::random_net(seed);
        let c = r.config;
        let dims = [c.input_dim, c.hidden_dim, c.hidden_dim, c.output_dim];
        let mut off = 0;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..3 {
            let (a, b) = (dims[l], dims[l + 1]);
            weights.push((0..a).map(|i| r.theta[off + i * b..off + (i + 1) * b].to_vec()).collect::<Vec<_>>());
            off += a * b;
            biases.push(r.theta[off..off + b].to_vec());
            off += b;
        }
        let x: Vec<f64> = r.x.data[..c.input_dim].to_vec();
        let params = popinf_core::autodiff::ParamVector::new(r.theta.clone(), c.layout()).unwrap();
        let got = mlp_forward(&params, &c, &x).unwrap();
        let want = oracle::naive_mlp(&weights, &biases, &x);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

struct Rosenbrock;

impl Objective for Rosenbrock {
    fn build<S: Scalar>(&self, g: &mut Graph<S>, theta: Var) -> Var {
        let x = g.slice(theta, 0, 1, 1);
        let y = g.slice(theta, 1, 1, 1);
        let one = g.constant(&Mat::from_vec(1, 1, vec![1.0]));
        let a = g.sub(one, x);
        let a2 = g.square(a);
        let x2 = g.square(x);
        let b = g.sub(y, x2);
        let b2 = g.square(b);
        let b2 = g.scale(b2, 100.0);
        g.add(a2, b2)
    }
}

#[test]
fn hessian_vector_product_of_rosenbrock() {
    let (x, y) = (0.7, -0.4);
    let h = [
        [2.0 - 400.0 * (y - x * x) + 800.0 * x * x, -400.0 * x],
        [-400.0 * x, 200.0],
    ];
    let v = [0.3, -1.1];
    let (_, _, hv) = hvp(&Rosenbrock, &[x, y], &v).unwrap();
    for i in 0..2 {
        let want = h[i][0] * v[0] + h[i][1] * v[1];
        assert!((hv[i] - want).abs() < 1e-10 * want.abs().max(1.0));
    }
}

#[test]
fn first_order_update_is_outer_gradient_at_adapted_point() {
    let r = common::random_net(77);
    let inner = MseLoss { config: r.config, x: &r.x, y: &r.y };
    let outer = MseLoss { config: r.config, x: &r.x2, y: &r.y2 };
    let mg = grad_through_update(&outer, &inner, &r.theta, 0.1, 1, true).unwrap();
    let direct = grad(&outer, &mg.adapted).unwrap();
    assert_eq!(mg.gradient, direct);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradient_is_linear_in_loss_scale(seed in 0u64..1000, c in 0.1f64..5.0) {
        struct Scaled<'a>(MseLoss<'a>, f64);
        impl Objective for Scaled<'_> {
            fn build<S: Scalar>(&self, g: &mut Graph<S>, theta: Var) -> Var {
                let l = self.0.build(g, theta);
                g.scale(l, self.1)
            }
        }
        let r = common::random_net(seed);
        let loss = MseLoss { config: r.config, x: &r.x, y: &r.y };
        let g1 = grad(&loss, &r.theta).unwrap();
        let gc = grad(&Scaled(MseLoss { config: r.config, x: &r.x, y: &r.y }, c), &r.theta).unwrap();
        for (a, b) in g1.iter().zip(&gc) {
            prop_assert!((a * c - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}
