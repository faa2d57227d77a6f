mod common;

use std::collections::HashMap;

use neurosynth::blocks::{
    bilateral_mult, bilateral_mult_from_cores, core_device_step, mult_core, root_square, split, CoreState,
    DeviceParams,
};
use neurosynth::dsl::{eval_expr, parse_system, Expr};
use neurosynth::synth::{decompose_signed, scale_to_currents, ScalingMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const UA: f64 = 1e-6;
const VARS: [&str; 3] = ["x", "y", "u"];

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-1000i32..1000).prop_map(|k| Expr::Const(k as f64 / 64.0)),
        prop::sample::select(&VARS[..]).prop_map(Expr::var),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), prop_oneof![-8i32..-1, 1i32..8]).prop_map(|(a, d)| Expr::Div(Box::new(a), d as f64 * 0.5)),
            (inner, 1u32..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
        ]
    })
}

fn system_source(fx: &Expr, fy: &Expr) -> String {
    format!(
        "system r {{ extern u = step(1, inf, 0.5); state x {{ init = 0.25; tau = 1.5; }} \
         state y {{ init = -1; tau = 2; }} dx/dt = {fx}; dy/dt = {fy}; }}"
    )
}

/// Postfix evaluator, independent of the recursive one.
enum Op {
    Push(f64),
    Load(String),
    Add,
    Sub,
    Mul,
    Neg,
    Scale(f64),
    Pow(u32),
}

fn to_postfix(e: &Expr, out: &mut Vec<Op>) {
    match e {
        Expr::Const(c) => out.push(Op::Push(*c)),
        Expr::Var(v) => out.push(Op::Load(v.clone())),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            to_postfix(a, out);
            to_postfix(b, out);
            out.push(match e {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                _ => Op::Mul,
            });
        }
        Expr::Neg(a) => {
            to_postfix(a, out);
            out.push(Op::Neg);
        }
        Expr::Div(a, d) => {
            to_postfix(a, out);
            out.push(Op::Scale(*d));
        }
        Expr::Pow(a, k) => {
            to_postfix(a, out);
            out.push(Op::Pow(*k));
        }
    }
}

fn run_postfix(ops: &[Op], env: &HashMap<String, f64>) -> f64 {
    let mut stack: Vec<f64> = Vec::new();
    for op in ops {
        let v = match op {
            Op::Push(c) => *c,
            Op::Load(v) => env[v],
            Op::Neg => -stack.pop().unwrap(),
            Op::Scale(d) => stack.pop().unwrap() / d,
            Op::Pow(k) => {
                let b = stack.pop().unwrap();
                (1..*k).fold(b, |acc, _| acc * b)
            }
            Op::Add | Op::Sub | Op::Mul => {
                let b = stack.pop().unwrap();
                let a = stack.pop().unwrap();
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    _ => a * b,
                }
            }
        };
        stack.push(v);
    }
    assert_eq!(stack.len(), 1);
    stack[0]
}

fn same_float(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn print_then_parse_is_identity(fx in expr(), fy in expr()) {
        let spec = parse_system(&system_source(&fx, &fy)).unwrap();
        prop_assert_eq!(&spec.derivatives["x"], &fx);
        prop_assert_eq!(&spec.derivatives["y"], &fy);
        let again = parse_system(&spec.to_string()).unwrap();
        prop_assert_eq!(again, spec);
    }

    #[test]
    fn evaluators_agree(e in expr(), x in -3.0f64..3.0, y in -3.0f64..3.0, u in -3.0f64..3.0) {
        let env: HashMap<String, f64> = [("x", x), ("y", y), ("u", u)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let mut ops = Vec::new();
        to_postfix(&e, &mut ops);
        let direct = eval_expr(&e, &env).unwrap();
        prop_assert!(same_float(direct, run_postfix(&ops, &env)));
        let bound = e.bind(&VARS).unwrap().eval(&[x, y, u]);
        prop_assert!(same_float(direct, bound));
    }

    #[test]
    fn root_square_identity(i_in in 0.0f64..10e-6, b in 1e-9f64..10e-6) {
        let out = root_square(i_in, b).unwrap();
        let want = 4.0 * i_in * b;
        prop_assert!((out * out - want).abs() <= 4.0 * f64::EPSILON * want);
    }

    #[test]
    fn mult_core_expansion(i_in in 0.0f64..10e-6, b in 1e-9f64..10e-6) {
        let lhs = mult_core(i_in, b).unwrap() - i_in - b / 4.0;
        let rhs = i_in * i_in / b;
        // rounding of the three-term difference scales with the largest term
        let scale = mult_core(i_in, b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-14 * scale);
    }

    #[test]
    fn bilateral_rails_and_bilinearity(
        x in -10e-6f64..10e-6, y in -10e-6f64..10e-6, a in 0.0f64..10.0, b in 1e-7f64..10e-6,
    ) {
        let (xp, xm) = split(x);
        let (yp, ym) = split(y);
        let (p, m) = bilateral_mult(xp, xm, yp, ym, b).unwrap();
        prop_assert!(p >= 0.0 && m >= 0.0);
        let net = p - m;
        prop_assert!((net - 2.0 * x * y / b).abs() <= 1e-12 * (2.0 * x * y / b).abs().max(f64::MIN_POSITIVE));
        let (sp, sm) = split(a * x);
        let (p2, m2) = bilateral_mult(sp, sm, yp, ym, b).unwrap();
        prop_assert!(((p2 - m2) - a * net).abs() <= 1e-12 * (a * net).abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn split_recombines(x in -1e-3f64..1e-3) {
        let (p, m) = split(x);
        prop_assert_eq!(p - m, x);
        prop_assert!(p == 0.0 || m == 0.0);
        prop_assert!(p >= 0.0 && m >= 0.0);
    }

    #[test]
    fn rail_expansion_matches_signed_evaluation(
        fx in expr(), rails in prop::collection::vec((0.0f64..3e-6, 0.0f64..3e-6), 3),
    ) {
        let src = system_source(&fx, &Expr::Const(0.0));
        let spec = parse_system(&src).unwrap();
        let sm = ScalingMap::uniform(&spec, &DeviceParams::default(), UA, 1e-9, 1e-6);
        let cs = match scale_to_currents(&spec, &sm) {
            Ok(cs) => cs,
            Err(_) => return Ok(()), // degree above 3
        };
        let f = &cs.functions["x"];
        let signed: Vec<f64> = rails.iter().map(|(p, m)| p - m).collect();
        let rp = decompose_signed(f);
        let (fp, fm) = rp.eval(&rails);
        prop_assert!(fp >= 0.0 && fm >= 0.0);
        let want = f.eval(&signed);
        let scale = fp + fm + want.abs();
        prop_assert!(((fp - fm) - want).abs() <= 1e-12 * scale.max(1e-30));
    }

    #[test]
    fn core_output_is_odd_in_drive(i_cin in 1e-10f64..1e-8, steps in 1usize..50) {
        let p = DeviceParams::default();
        let s0 = CoreState::quiescent(&p, 2e-6).unwrap();
        let (mut up, mut down) = (s0, s0);
        for _ in 0..steps {
            up = core_device_step(&up, i_cin, 1e-6, 800e-12, &p).unwrap();
            down = core_device_step(&down, -i_cin, 1e-6, 800e-12, &p).unwrap();
        }
        prop_assert!((up.i_out() + down.i_out()).abs() <= 1e-12 * up.i_out().abs());
    }
}

#[test]
fn cores_compose_to_bilateral_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        use rand::Rng;
        let x: f64 = rng.gen_range(-5e-6..5e-6);
        let y: f64 = rng.gen_range(-5e-6..5e-6);
        let b: f64 = rng.gen_range(0.5e-6..5e-6);
        let (xp, xm) = split(x);
        let (yp, ym) = split(y);
        let (p, m) = bilateral_mult_from_cores(xp, xm, yp, ym, b).unwrap();
        let want = 2.0 * x * y / b;
        // each core output is at least b/4, which bounds the rounding of p − m
        assert!(((p - m) - want).abs() <= 1e-12 * (p + m), "x={x} y={y} b={b}");
    }
}

#[test]
fn random_netlists_match_their_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..20 {
        use rand::Rng;
        let n = rng.gen_range(1..=3);
        let src = common::random_system(&mut rng, n);
        let spec = parse_system(&src).unwrap();
        let err = common::oracle_error(&spec, &mut rng, 200);
        assert!(err <= 1e-9, "system {k}: {err:e}\n{src}");
    }
}
