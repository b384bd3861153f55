mod common;

use adc_core::ad::*;
use adc_core::corpus::{self, GAUSS};
use adc_core::dsl::{parse, print_function, Module, Qualifier, ReturnType};
use adc_core::eval::{Arg, Program};
use adc_core::semantic::{check_function, propagate_qualifiers};

use common::{close, Harness};

const PHI1: f64 = 0.2419707245191434;

fn one(src: &str) -> adc_core::dsl::FunctionDef {
    parse(src).unwrap().functions.remove(0)
}

fn run(functions: Vec<adc_core::dsl::FunctionDef>, name: &str, args: &[Arg]) -> adc_core::eval::EvalOutput {
    Program::compile(&Module::new(functions)).unwrap().call(name, args).unwrap()
}

fn tangent_at(src: &str, wrt: &str, args: &[Arg]) -> f64 {
    let f = one(src);
    let t = differentiate_forward(&f, wrt).unwrap();
    let name = t.derived.name.clone();
    run(vec![f, t.derived], &name, args).value.unwrap()
}

#[test]
fn forward_square() {
    assert_eq!(tangent_at("real f(real x) { return x * x; }", "x", &[Arg::Real(3.0)]), 6.0);
}

#[test]
fn forward_square_plus_sine() {
    assert_eq!(tangent_at("real f(real x) { return x * x + sin(x); }", "x", &[Arg::Real(0.0)]), 1.0);
}

#[test]
fn forward_gauss_wrt_x() {
    let d = tangent_at(GAUSS, "x", &[Arg::Real(1.0), Arg::Real(0.0), Arg::Real(1.0)]);
    assert!((d + PHI1).abs() <= 1e-15, "{d}");
}

#[test]
fn forward_name_is_darg_index() {
    let f = one(GAUSS);
    assert_eq!(differentiate_forward(&f, "p").unwrap().derived.name, "gauss_darg1");
}

#[test]
fn product_gradient() {
    let f = one("real f(real x, real y) { return x * y; }");
    let g = differentiate_gradient(&f, &["x", "y"]).unwrap();
    assert_eq!(g.derived.name, "f_grad");
    assert_eq!(g.slots, vec!["_d_x", "_d_y"]);
    let out = run(vec![g.derived], "f_grad", &[Arg::Real(3.0), Arg::Real(5.0), Arg::Array(vec![0.0]), Arg::Array(vec![0.0])]);
    assert_eq!((out.array(2)[0], out.array(3)[0]), (5.0, 3.0));
}

#[test]
fn gauss_gradient_signature_and_values() {
    let f = one(GAUSS);
    let g = differentiate_gradient(&f, &["x", "p"]).unwrap();
    let d = &g.derived;
    assert_eq!(d.name, "gauss_grad_0_1");
    let names: Vec<&str> = d.params.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["x", "p", "sigma", "_d_x", "_d_p"]);
    assert_eq!(d.ret, ReturnType::Void);
    assert!(d.qualifiers.contains(&Qualifier::Device) && d.qualifiers.contains(&Qualifier::Host));
    let args = [Arg::Real(1.0), Arg::Real(0.0), Arg::Real(1.0), Arg::Array(vec![0.0]), Arg::Array(vec![0.0])];
    let out = run(vec![g.derived.clone()], "gauss_grad_0_1", &args);
    assert!((out.array(3)[0] + PHI1).abs() <= 1e-15);
    assert!((out.array(4)[0] - PHI1).abs() <= 1e-15);
}

#[test]
fn suffix_uses_sorted_positions() {
    let f = one(GAUSS);
    assert_eq!(gradient_name(&f, &["p", "x"]), "gauss_grad_0_1");
    assert_eq!(gradient_name(&f, &["sigma"]), "gauss_grad_2");
    assert_eq!(gradient_name(&f, &["sigma", "x", "p"]), "gauss_grad");
}

#[test]
fn slots_accumulate_across_calls() {
    let f = one(GAUSS);
    let g = differentiate_gradient(&f, &["x", "p"]).unwrap();
    let p = Program::compile(&Module::new(vec![g.derived])).unwrap();
    let mut args = vec![Arg::Real(0.3), Arg::Real(-0.2), Arg::Real(1.1), Arg::Array(vec![0.0]), Arg::Array(vec![0.0])];
    let first = p.call("gauss_grad_0_1", &args).unwrap();
    args[3] = Arg::Array(first.array(3).to_vec());
    args[4] = Arg::Array(first.array(4).to_vec());
    let second = p.call("gauss_grad_0_1", &args).unwrap();
    assert_eq!(second.array(3)[0], 2.0 * first.array(3)[0]);
    assert_eq!(second.array(4)[0], 2.0 * first.array(4)[0]);
}

#[test]
fn pruning_changes_cost_not_values() {
    let f = one("real f(real x, real y) { real a = y * y * y; real b = x * a; return b + sin(y); }");
    let pruned = differentiate_gradient_with(&f, &["x"], ReverseOptions { prune: true }).unwrap();
    let full = differentiate_gradient_with(&f, &["x"], ReverseOptions { prune: false }).unwrap();
    let args = [Arg::Real(0.7), Arg::Real(1.3), Arg::Array(vec![0.0])];
    let a = run(vec![pruned.derived.clone()], &pruned.derived.name, &args);
    let b = run(vec![full.derived.clone()], &full.derived.name, &args);
    assert_eq!(a.array(2), b.array(2));
    assert!(a.ops.total() < b.ops.total(), "{} vs {}", a.ops.total(), b.ops.total());
}

#[test]
fn inactive_parameter_has_zero_derivative() {
    let f = one("real f(real x, real y) { return x * x; }");
    let g = differentiate_gradient(&f, &["y"]).unwrap();
    let out = run(vec![g.derived.clone()], &g.derived.name, &[Arg::Real(2.0), Arg::Real(9.0), Arg::Array(vec![0.0])]);
    assert_eq!(out.array(2), [0.0]);
    assert_eq!(tangent_at("real f(real x, real y) { return x * x; }", "y", &[Arg::Real(2.0), Arg::Real(9.0)]), 0.0);
}

#[test]
fn array_seed_is_linear() {
    let f = one(corpus::SUMN);
    let t = differentiate_forward(&f, "x").unwrap();
    let name = t.derived.name.clone();
    let p = Program::compile(&Module::new(vec![f, t.derived])).unwrap();
    let x = vec![0.3, -1.1, 0.8, 0.05];
    let dir = |s: Vec<f64>| {
        p.call(&name, &[Arg::Array(x.clone()), Arg::Int(4), Arg::Array(s)]).unwrap().value.unwrap()
    };
    let e0 = dir(vec![1.0, 0.0, 0.0, 0.0]);
    let e2 = dir(vec![0.0, 0.0, 1.0, 0.0]);
    let mixed = dir(vec![2.0, 0.0, -3.0, 0.0]);
    assert!(close(mixed, 2.0 * e0 - 3.0 * e2, 1e-14));
}

#[test]
fn global_functions_are_rejected() {
    let m = parse(GAUSS).unwrap();
    let k = m.function("compute").unwrap();
    assert!(differentiate_gradient(k, &["sigma"]).is_err());
    assert!(differentiate_forward(k, "sigma").is_err());
}

#[test]
fn bad_wrt_is_rejected() {
    let f = one("real f(real x, int n) { return x; }");
    assert!(differentiate_gradient(&f, &[]).is_err());
    assert!(differentiate_gradient(&f, &["n"]).is_err());
    assert!(differentiate_forward(&f, "n").is_err());
    assert!(differentiate_forward(&f, "z").is_err());
}

#[test]
fn emitted_code_reparses_for_the_corpus() {
    for cf in corpus::functions() {
        let m = cf.module();
        let f = m.function(cf.name).unwrap();
        let mut derived = vec![differentiate_gradient(f, &cf.wrt).unwrap().derived];
        for w in &cf.wrt {
            derived.push(differentiate_forward(f, w).unwrap().derived);
        }
        for d in derived {
            let text = print_function(&d);
            let back = parse(&text).unwrap_or_else(|e| panic!("{}: {e}\n{text}", d.name));
            check_function(&back.functions[0], &m).unwrap();
            assert_eq!(back.functions[0].name, d.name);
            assert_eq!(propagate_qualifiers(&d).unwrap(), propagate_qualifiers(f).unwrap(), "{}", d.name);
        }
    }
}

#[test]
fn request_api_covers_both_modes() {
    let m = parse(GAUSS).unwrap();
    let fwd = differentiate(&m, &DerivativeRequest::forward("gauss", "sigma")).unwrap();
    assert_eq!(fwd[0].name, "gauss_darg2");
    let rev = differentiate(&m, &DerivativeRequest::reverse("gauss", &["x", "p"])).unwrap();
    assert_eq!(rev[0].name, "gauss_grad_0_1");
    assert!(differentiate(&m, &DerivativeRequest::reverse("nope", &["x"])).is_err());
}

#[test]
fn gauss_hessian_matches_differences_of_the_gradient() {
    let cf = corpus::functions().into_iter().find(|c| c.name == "gauss").unwrap();
    let h = Harness::new(&cf);
    let plan = h.hessian_plan();
    let at = [Arg::Real(1.0), Arg::Real(0.0), Arg::Real(1.0)];
    let hr = plan.eval(&at).unwrap();
    let fd = common::fd_of_gradient(&h, &at);
    // At one standard deviation the density sits on an inflection point, so
    // several entries vanish; compare with an absolute floor.
    for i in 0..3 {
        for j in 0..3 {
            assert!(close(hr.matrix[i][j], fd[i][j], 1e-5), "{i},{j}: {} vs {}", hr.matrix[i][j], fd[i][j]);
        }
    }
    assert!(hr.matrix[0][0].abs() <= 1e-15);
}
