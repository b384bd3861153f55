mod common;

use adc_core::ad::{differentiate_forward, differentiate_gradient};
use adc_core::corpus;
use adc_core::dsl::{parse, print, Module};
use adc_core::eval::{Arg, Program};
use adc_core::semantic::activity;
use proptest::prelude::*;

const PARAMS: [&str; 3] = ["x", "y", "z"];

/// Source text of a smooth expression over `vars`.
fn expr(vars: Vec<String>) -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (1u32..9).prop_map(|c| format!("{c}")),
        (0u32..100).prop_map(|c| format!("{}.{:02}", c / 10, c % 100)),
        proptest::sample::select(vars),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} * {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} / (1.5 + {b} * {b})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(0.1 * {a})")),
            inner.prop_map(|a| format!("pow({a}, 2)")),
        ]
    })
}

/// Straight-line function over x, y, z with locals a, b, c; each local reads
/// only parameters and earlier locals.
fn straight_line() -> impl Strategy<Value = (Vec<String>, String)> {
    let vars = |n: usize| {
        let mut v: Vec<String> = PARAMS.iter().map(|s| s.to_string()).collect();
        v.extend(["a", "b", "c"][..n].iter().map(|s| s.to_string()));
        v
    };
    (expr(vars(0)), expr(vars(1)), expr(vars(2)), expr(vars(3)))
        .prop_map(|(a, b, c, r)| (vec![a, b, c], r))
}

fn body(locals: &[String], ret: &str) -> String {
    format!(
        "real f(real x, real y, real z) {{ real a = {}; real b = {}; real c = {}; return {ret}; }}",
        locals[0], locals[1], locals[2]
    )
}

fn wrt_set() -> impl Strategy<Value = Vec<&'static str>> {
    proptest::sample::subsequence(PARAMS.to_vec(), 0..=3)
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    [-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn print_parse_round_trip((locals, ret) in straight_line()) {
        let m = parse(&body(&locals, &ret)).unwrap();
        let text = print(&m);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(print(&back), text);
    }

    #[test]
    fn activity_is_monotone((locals, ret) in straight_line(), a in wrt_set(), b in wrt_set()) {
        let f = parse(&body(&locals, &ret)).unwrap().functions.remove(0);
        let mut union = a.clone();
        union.extend(b.iter().filter(|w| !a.contains(w)));
        let small = activity(&f, &a).unwrap();
        let big = activity(&f, &union).unwrap();
        prop_assert!(small.is_subset(&big));
    }

    #[test]
    fn inactive_locals_ignore_perturbations((locals, ret) in straight_line(), wrt in wrt_set(), at in point(), dx in 0.1f64..1.0) {
        let f = parse(&body(&locals, &ret)).unwrap().functions.remove(0);
        let act = activity(&f, &wrt).unwrap();
        for v in ["a", "b", "c"] {
            if act.contains(v) {
                continue;
            }
            let probe = parse(&body(&locals, v)).unwrap();
            let p = Program::compile(&probe).unwrap();
            let base = p.call("f", &at.map(Arg::Real)).unwrap().value.unwrap();
            let mut moved = at;
            for w in &wrt {
                moved[PARAMS.iter().position(|q| q == w).unwrap()] += dx;
            }
            let after = p.call("f", &moved.map(Arg::Real)).unwrap().value.unwrap();
            prop_assert_eq!(base.to_bits(), after.to_bits(), "{} changed", v);
        }
    }

    #[test]
    fn reverse_matches_forward((locals, ret) in straight_line(), at in point()) {
        let f = parse(&body(&locals, &ret)).unwrap().functions.remove(0);
        let g = differentiate_gradient(&f, &PARAMS).unwrap();
        let mut fs = vec![f.clone(), g.derived.clone()];
        for w in PARAMS {
            fs.push(differentiate_forward(&f, w).unwrap().derived);
        }
        let p = Program::compile(&Module::new(fs)).unwrap();
        let mut args: Vec<Arg> = at.iter().copied().map(Arg::Real).collect();
        args.extend((0..3).map(|_| Arg::Array(vec![0.0])));
        let rev = p.call(&g.derived.name, &args).unwrap();
        prop_assert_eq!(rev.ops.pushes, rev.ops.pops);
        for (i, _) in PARAMS.iter().enumerate() {
            let t = p.call(&format!("f_darg{i}"), &args[..3]).unwrap().value.unwrap();
            let r = rev.array(3 + i)[0];
            prop_assert!(common::close(t, r, 1e-12), "d{}: forward {} reverse {}", PARAMS[i], t, r);
        }
    }

    #[test]
    fn corpus_gradients_agree_at_random_seeds(seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for cf in corpus::functions() {
            let h = common::Harness::new(&cf);
            let args = (cf.sample)(&mut rng);
            let (r, _) = h.reverse(&args);
            let (t, _) = h.forward(&args);
            prop_assert!(common::rel_err(&r, &t) <= 1e-12, "{}: {:?} vs {:?}", cf.name, r, t);
        }
    }

    #[test]
    fn evaluation_is_deterministic((locals, ret) in straight_line(), at in point()) {
        let p = Program::compile(&parse(&body(&locals, &ret)).unwrap()).unwrap();
        let args = at.map(Arg::Real);
        let a = p.call("f", &args).unwrap();
        let b = p.call("f", &args).unwrap();
        prop_assert_eq!(a.value.map(f64::to_bits), b.value.map(f64::to_bits));
        prop_assert_eq!(a.ops, b.ops);
    }
}
