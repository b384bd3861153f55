use std::path::PathBuf;
use std::process::{Command, Output};

fn adc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adc")).args(args).output().expect("adc runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name).display().to_string()
}

#[test]
fn parse_summarises_and_rejects() {
    let ok = adc(&["parse", &corpus("gauss.dsl")]);
    assert!(ok.status.success());
    assert!(stdout(&ok).contains("device host real gauss(real x, real p, real sigma): 2 statement(s)"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dsl");
    std::fs::write(&bad, "real f( { }").unwrap();
    let err = adc(&["parse", bad.to_str().unwrap()]);
    assert_eq!(err.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&err.stderr).contains("1:"));
}

#[test]
fn check_reports_symbols() {
    let o = adc(&["check", &corpus("gauss.dsl")]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("gauss: qualifiers [device, host]"), "{text}");
    assert!(text.contains(" t @ "), "{text}");
}

#[test]
fn diff_prints_both_modes() {
    let rev = stdout(&adc(&["diff", "--mode", "reverse", "--wrt", "x,p", &corpus("gauss.dsl"), "--fn", "gauss"]));
    assert!(rev.starts_with("device host void gauss_grad_0_1(real x, real p, real sigma, real[] _d_x, real[] _d_p)"));
    let fwd = stdout(&adc(&["diff", "--mode", "forward", "--wrt", "x", &corpus("gauss.dsl"), "--fn", "gauss"]));
    assert!(fwd.starts_with("device host real gauss_darg0("), "{fwd}");
}

#[test]
fn diff_writes_a_loadable_module() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.dsl");
    let o = adc(&["diff", &corpus("polynomial.dsl"), "--fn", "polynomial", "--wrt", "x,y", "--o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("real polynomial(") && text.contains("void polynomial_grad("));
    assert!(adc(&["parse", out.to_str().unwrap()]).status.success());
}

#[test]
fn run_counts_operations() {
    let o = adc(&["run", &corpus("gauss.dsl"), "--fn", "gauss", "--args", "1,0,1", "--count-ops"]);
    let text = stdout(&o);
    let value: f64 = text.lines().next().unwrap().parse().unwrap();
    assert!((value - 0.2419707245191434).abs() < 1e-16);
    assert!(text.contains("total=13"), "{text}");
}

#[test]
fn run_takes_arrays() {
    let o = adc(&["run", &corpus("sumn.dsl"), "--fn", "sumN", "--args", "[0;0;0],3"]);
    assert_eq!(stdout(&o).lines().next(), Some("0.00000000000000000"));
}

#[test]
fn hessian_and_numdiff() {
    let h = stdout(&adc(&["hessian", &corpus("polynomial.dsl"), "--fn", "polynomial", "--wrt", "x,y", "--at", "1,-1"]));
    let rows: Vec<Vec<f64>> = h.lines().skip(1).map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect()).collect();
    // 3x^3 - 2xy + y^2 - 5x + 7: [[18x, -2], [-2, 2]].
    assert_eq!(rows, vec![vec![18.0, -2.0], vec![-2.0, 2.0]]);

    let n = stdout(&adc(&["numdiff", &corpus("gauss.dsl"), "--fn", "gauss", "--at", "1,0,1", "--wrt", "x,p"]));
    assert!(n.contains("evaluations: 4"), "{n}");
}

#[test]
fn race_check_exit_codes() {
    assert_eq!(adc(&["race-check", &corpus("gauss.dsl"), "--kernel", "compute"]).status.code(), Some(0));
    let o = adc(&["race-check", &corpus("gauss.dsl"), "--kernel", "compute_shared"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("shared-write-hazard"));
}

#[test]
fn launch_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let init = dir.path().join("init.csv");
    let mut csv = String::from("x,p,dx,dp\n");
    for i in 0..10 {
        csv.push_str(&format!("{},{},0,0\n", i as f64 * 0.1, 0.0));
    }
    std::fs::write(&init, csv).unwrap();
    let o = adc(&["launch", &corpus("gauss.dsl"), "--kernel", "compute", "--n", "10", "--block", "4", "--init", init.to_str().unwrap(), "--set", "sigma=1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("10 of 12 threads active"));
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let dx = header.iter().position(|h| *h == "dx").unwrap();
    let row0: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row0[dx].parse::<f64>().unwrap(), 0.0);

    let refused = adc(&["launch", &corpus("gauss.dsl"), "--kernel", "compute_shared", "--n", "10", "--block", "4", "--init", init.to_str().unwrap(), "--set", "sigma=1"]);
    assert_eq!(refused.status.code(), Some(1));
}

#[test]
fn bench_fit_small() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.csv");
    let o = adc(&["bench", "fit", "--gaussians", "1", "--events", "5000", "--bins", "100", "--repeats", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    let plot = adc(&["bench", "fit", "--plot", out.to_str().unwrap()]);
    assert!(stdout(&plot).starts_with("# params"));
}
