//! Reverse-mode gradients against central finite differences.

mod common;

use common::{analytic_grad, gaussian, grad_check, random_pair, rng, Model};
use sagda_core::adversarial::{self, DomainPath};
use sagda_core::{Matrix, Tape, Var};

const TOL: f64 = 1e-4;

/// Reduces a matrix-valued node to a scalar with fixed random weights.
fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> Var {
    let (r, c) = tape.value(v).shape();
    let w = tape.constant(gaussian(r, c, &mut rng(seed)));
    let p = tape.mul(v, w).unwrap();
    tape.sum(p)
}

fn check(name: &str, shapes: &[(usize, usize)], f: impl Fn(&mut Tape, &[Var]) -> Var) {
    let mut r = rng(name.len() as u64 * 31 + 7);
    let params: Vec<Matrix> = shapes.iter().map(|&(a, b)| gaussian(a, b, &mut r)).collect();
    let err = grad_check(&params, f);
    assert!(err < TOL, "{name}: relative error {err:e}");
}

#[test]
fn binary_ops() {
    check("matmul", &[(3, 4), (4, 2)], |t, v| {
        let o = t.matmul(v[0], v[1]).unwrap();
        weighted_sum(t, o, 1)
    });
    check("add", &[(3, 2), (3, 2)], |t, v| {
        let o = t.add(v[0], v[1]).unwrap();
        weighted_sum(t, o, 2)
    });
    check("sub", &[(3, 2), (3, 2)], |t, v| {
        let o = t.sub(v[0], v[1]).unwrap();
        weighted_sum(t, o, 3)
    });
    check("mul", &[(3, 2), (3, 2)], |t, v| {
        let o = t.mul(v[0], v[1]).unwrap();
        weighted_sum(t, o, 4)
    });
    check("hcat", &[(3, 2), (3, 1)], |t, v| {
        let o = t.hcat(v[0], v[1]).unwrap();
        weighted_sum(t, o, 5)
    });
    check("vcat", &[(2, 3), (1, 3)], |t, v| {
        let o = t.vcat(v[0], v[1]).unwrap();
        weighted_sum(t, o, 6)
    });
    check("add_row", &[(4, 3), (1, 3)], |t, v| {
        let o = t.add_row(v[0], v[1]).unwrap();
        weighted_sum(t, o, 7)
    });
    check("mul_col", &[(4, 3), (4, 1)], |t, v| {
        let o = t.mul_col(v[0], v[1]).unwrap();
        weighted_sum(t, o, 8)
    });
}

#[test]
fn unary_ops() {
    check("scale", &[(3, 3)], |t, v| {
        let o = t.scale(v[0], -1.7);
        weighted_sum(t, o, 10)
    });
    check("neg", &[(3, 3)], |t, v| {
        let o = t.neg(v[0]);
        weighted_sum(t, o, 11)
    });
    check("add_scalar", &[(3, 3)], |t, v| {
        let o = t.add_scalar(v[0], 0.4);
        weighted_sum(t, o, 12)
    });
    check("transpose", &[(2, 5)], |t, v| {
        let o = t.transpose(v[0]);
        weighted_sum(t, o, 13)
    });
    check("columns", &[(3, 5)], |t, v| {
        let o = t.columns(v[0], 1, 3).unwrap();
        weighted_sum(t, o, 14)
    });
    check("leaky_relu", &[(4, 4)], |t, v| {
        let o = t.leaky_relu(v[0], 0.2);
        weighted_sum(t, o, 15)
    });
    check("sigmoid", &[(4, 4)], |t, v| {
        let o = t.sigmoid(v[0]);
        weighted_sum(t, o, 16)
    });
    check("exp", &[(3, 3)], |t, v| {
        let o = t.exp(v[0]);
        weighted_sum(t, o, 17)
    });
    check("log", &[(3, 3)], |t, v| {
        let e = t.exp(v[0]);
        let o = t.log(e);
        weighted_sum(t, o, 18)
    });
    check("clamp_min", &[(4, 4)], |t, v| {
        let o = t.clamp_min(v[0], 0.1);
        weighted_sum(t, o, 19)
    });
    check("dropout", &[(5, 4)], |t, v| {
        let o = t.dropout(v[0], 0.4, 77).unwrap();
        weighted_sum(t, o, 20)
    });
    check("mean", &[(3, 4)], |t, v| {
        let s = t.exp(v[0]);
        t.mean(s)
    });
    check("row_sum", &[(3, 4)], |t, v| {
        let o = t.row_sum(v[0]);
        weighted_sum(t, o, 21)
    });
    check("softmax", &[(4, 3)], |t, v| {
        let o = t.softmax(v[0]);
        weighted_sum(t, o, 22)
    });
    check("log_softmax", &[(4, 3)], |t, v| {
        let o = t.log_softmax(v[0]);
        weighted_sum(t, o, 23)
    });
}

#[test]
fn losses() {
    check("source_loss", &[(6, 3)], |t, v| adversarial::source_loss(t, v[0], &[0, 2, 1, 1, 0, 2]).unwrap());
    check("target_entropy", &[(5, 3)], |t, v| adversarial::target_entropy_loss(t, v[0]).unwrap());
    check("domain_loss", &[(8, 1)], |t, v| {
        let s = t.sigmoid(v[0]);
        adversarial::domain_loss(t, s, &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap()
    });
}

#[test]
fn full_objective_on_small_pair() {
    let model = Model::new(random_pair(8, 8, 5, 3, 4), None);
    let params = model.params((6, 4), 1);
    let err = grad_check(&params, |t, v| model.objective(t, v, DomainPath::Direct));
    assert!(err < TOL, "full objective: relative error {err:e}");
}

#[test]
fn reversal_negates_only_the_encoder_share_of_the_domain_gradient() {
    let mut model = Model::new(random_pair(8, 8, 5, 3, 5), Some(6));
    let params = model.params((6, 4), 2);
    let (direct_value, direct) = analytic_grad(&params, |t, v| model.objective(t, v, DomainPath::Direct));
    let (reversed_value, reversed) = analytic_grad(&params, |t, v| model.objective(t, v, DomainPath::Reversed));
    assert_eq!(direct_value, reversed_value, "reversal must not change the forward value");

    model.gammas.1 = 0.0;
    let (_, no_domain) = analytic_grad(&params, |t, v| model.objective(t, v, DomainPath::Direct));
    for p in 0..5 {
        // direct = rest + γ2·∂L_D, reversed = rest − γ2·∂L_D
        let want = no_domain[p].scale(2.0).sub(&direct[p]).unwrap();
        common::assert_close(&reversed[p], &want, 1e-12, "encoder gradient");
        assert!(direct[p].sub(&no_domain[p]).unwrap().max_abs() > 0.0);
    }
    for p in 5..9 {
        common::assert_close(&reversed[p], &direct[p], 0.0, "head gradient");
    }
    assert!(direct[7].max_abs() > 0.0, "domain head must receive a gradient");
}

#[test]
fn grl_is_identity_forward_and_negation_backward() {
    let x = gaussian(3, 2, &mut rng(3));
    let (v1, g1) = analytic_grad(std::slice::from_ref(&x), |t, v| {
        let r = t.reverse_grad(v[0]);
        weighted_sum(t, r, 40)
    });
    let (v2, g2) = analytic_grad(std::slice::from_ref(&x), |t, v| weighted_sum(t, v[0], 40));
    assert_eq!(v1, v2);
    common::assert_close(&g1[0], &g2[0].scale(-1.0), 0.0, "grl");
}
