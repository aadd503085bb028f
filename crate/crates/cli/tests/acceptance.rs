//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! when any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use linsys::closure::{member_c0, member_c0_unprojected, member_closure, ClosureOptions, Triple};
use linsys::designs::{monte_carlo, Design, McOptions};
use linsys::moments::{
    covariance_vj, estimate, gradient_dj, gradient_with, sigma_at, sigma_hat, xi_samples, Dataset, EntrySpec,
    MomentModel,
};
use linsys::rng::{derive_seed, stream};
use linsys::{Matrix, Vector};
use rand::Rng;

const SIZE_BOUND: f64 = 0.0638;
const REPS: usize = 1000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

/// Size at every listed value, both methods.
fn size_check(design: Design, values: &[f64], ns: &[usize], seed: u64) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for &n in ns {
        let c = monte_carlo(&design, values, &McOptions::new(n, REPS, 0.05, seed)).expect("monte carlo");
        pass &= c.reject_direct.iter().chain(&c.reject_screening).all(|&f| f <= SIZE_BOUND);
        parts.push(format!(
            "n={n} at {:?}: direct [{}] screening [{}]",
            values,
            fmt(&c.reject_direct),
            fmt(&c.reject_screening)
        ));
    }
    verdict(pass, format!("{} (bound {SIZE_BOUND})", parts.join("; ")))
}

fn criterion_1() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for h in [3, 10] {
        let v = size_check(Design::Cox { h }, &[0.0], &[2000], 101);
        pass &= v.pass;
        parts.push(format!("H={h} {}", v.detail));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_2() -> Verdict {
    let grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let c = monte_carlo(&Design::Cox { h: 3 }, &grid, &McOptions::new(2000, REPS, 0.05, 102)).expect("monte carlo");
    let last = grid.len() - 1;
    let rise_d = c.reject_direct[last] - c.reject_direct[0];
    let rise_s = c.reject_screening[last] - c.reject_screening[0];
    let order = (0..grid.len()).all(|k| c.reject_screening[k] >= c.reject_direct[k] - 0.05);
    verdict(
        rise_d >= 0.2 && rise_s >= 0.2 && order,
        format!(
            "direct [{}] screening [{}]; rise {rise_d:.3}/{rise_s:.3} (need >= 0.2); screening >= direct - 0.05: {order}",
            fmt(&c.reject_direct),
            fmt(&c.reject_screening)
        ),
    )
}

fn criterion_3() -> Verdict {
    size_check(Design::Goff, &[0.60, 0.62, 0.65], &[2000, 5000], 103)
}

fn criterion_4() -> Verdict {
    size_check(Design::Fh, &[21.0, 22.0, 24.0], &[2000], 104)
}

fn uniform(rng: &mut impl Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
}

fn criterion_5() -> Verdict {
    let mut rng = stream(105, 0);
    let opts = ClosureOptions::default();
    let (mut disagree, mut violations, mut members) = (0, 0, 0);
    for _ in 0..1000 {
        let p = rng.random_range(1..=4);
        let d0 = rng.random_range(0..=2);
        let d1 = rng.random_range(1..=3);
        let a0 = (d0 > 0).then(|| uniform(&mut rng, p, d0));
        let a1 = uniform(&mut rng, p, d1);
        let beta = Vector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
        let t = Triple::new(a0, a1, beta).expect("triple");
        let projected = member_c0(&t, opts.band_tol).expect("member_c0").0;
        let direct = member_c0_unprojected(&t, opts.band_tol).expect("direct LP").0;
        disagree += usize::from(projected != direct);
        members += usize::from(projected);
        if projected && !member_closure(&t, &opts).expect("closure").in_closure {
            violations += 1;
        }
    }
    verdict(
        disagree == 0 && violations == 0,
        format!("1000 triples, {members} in C0; {disagree} disagreements with the unprojected LP; {violations} members outside the closure"),
    )
}

/// `b' (I - A0 (A0'A0)^-1 A0') y` through an explicit inverse.
fn projected_form(a0: &Matrix, b: &Vector, y: &Vector) -> f64 {
    let gram = (a0.transpose() * a0).try_inverse().expect("full column rank");
    let m0 = Matrix::identity(a0.nrows(), a0.nrows()) - a0 * gram * a0.transpose();
    b.dot(&(m0 * y))
}

fn random_model(rng: &mut impl Rng, p: usize, d0: usize, d1: usize, k: usize) -> MomentModel {
    let entry = |rng: &mut dyn rand::RngCore| EntrySpec::Mean {
        feature: rng.random_range(0..k),
        scale: rng.random_range(0.5..2.0),
        offset: rng.random_range(-1.0..1.0),
    };
    let a0 = (0..p).map(|_| (0..d0).map(|_| entry(rng)).collect()).collect();
    let b = (0..p).map(|_| (0..=d1).map(|_| entry(rng)).collect()).collect();
    MomentModel::new(k, Some(a0), b, vec![]).expect("model")
}

fn criterion_6() -> Verdict {
    let mut rng = stream(106, 0);
    let (mut worst_grad, mut worst_var) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let p = rng.random_range(2..=4);
        let d0 = rng.random_range(1..p);
        let d1 = rng.random_range(1..=2);
        let k = 5;
        let model = random_model(&mut rng, p, d0, d1, k);
        let data = Dataset::from_matrix(Matrix::from_fn(60, k, |_, c| rng.random_range(-1.0..1.0) * (1.0 + c as f64))).unwrap();
        let est = estimate(&model, &data).expect("estimate");
        let a0 = est.a0_hat.clone().expect("A0 present");
        let y = Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        for j in 0..=d1 {
            let b = est.b_hat[j].clone();
            let d = gradient_dj(Some(&a0), &b, &y).expect("gradient");
            let mut fd = Vector::zeros(p * d0 + p);
            let h = 1e-6;
            for idx in 0..p * d0 {
                let (r, c) = (idx % p, idx / p);
                let (mut up, mut dn) = (a0.clone(), a0.clone());
                up[(r, c)] += h;
                dn[(r, c)] -= h;
                fd[idx] = (projected_form(&up, &b, &y) - projected_form(&dn, &b, &y)) / (2.0 * h);
            }
            for i in 0..p {
                let (mut up, mut dn) = (b.clone(), b.clone());
                up[i] += h;
                dn[i] -= h;
                fd[p * d0 + i] = (projected_form(&a0, &up, &y) - projected_form(&a0, &dn, &y)) / (2.0 * h);
            }
            worst_grad = worst_grad.max((&d - &fd).amax() / fd.amax().max(1e-12));

            let w = xi_samples(&est, j).expect("xi") * &y;
            let m = w.mean();
            let var = w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / est.n as f64;
            let q = sigma_hat(&covariance_vj(&est, j).unwrap(), &gradient_with(&est.projection, &b, &y), 1e-300)
                .unwrap()
                .raw_variance;
            worst_var = worst_var.max((var - q).abs() / q.abs().max(1e-300));
        }
    }
    verdict(
        worst_grad < 1e-5 && worst_var <= 1e-8,
        format!("100 instances: worst gradient relative error {worst_grad:.2e} (< 1e-5); worst variance relative gap {worst_var:.2e} (<= 1e-8)"),
    )
}

fn criterion_7() -> Verdict {
    let h = 3;
    let design = Design::Cox { h };
    let model = design.model(0.0).expect("model");
    let y = Vector::from_element(h, 1.0 / h as f64);
    let j = h; // the -beta column
    let n2 = 1000;
    let reps = 2000;
    let mut values = Vec::with_capacity(reps);
    let mut s2 = 0.0;
    for r in 0..reps {
        let data = design.generate(n2, derive_seed(107, &[r as u64])).expect("data");
        let est = estimate(&model, &data).expect("estimate");
        values.push((n2 as f64).sqrt() * est.projected_row(j).dot(&y));
        s2 += sigma_at(&est, j, &y, 1e-6).expect("sigma").sigma.powi(2);
    }
    let mean = values.iter().sum::<f64>() / reps as f64;
    let emp = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let avg = s2 / reps as f64;
    let ratio = emp / avg;
    verdict(
        (ratio - 1.0).abs() <= 0.15,
        format!("empirical variance {emp:.4}, mean sigma^2 {avg:.4}, ratio {ratio:.4} (within 15%)"),
    )
}

fn criterion_8() -> Verdict {
    let opts = ClosureOptions::default();
    let axis: Vec<f64> = (0..41).map(|k| (k as f64 - 20.0) / 10.0).collect();
    let mut wrong = Vec::new();
    for &a in &axis {
        for &b in &axis {
            let beta = Vector::from_element(1, b);
            // (i) a x = b with x free; a zero column stands in for the empty x1 block
            let free = Triple::new(Some(Matrix::from_element(1, 1, a)), Matrix::zeros(1, 1), beta.clone()).unwrap();
            let r = member_closure(&free, &opts).unwrap();
            if r.in_c0 != (a != 0.0 || b == 0.0) || !r.in_closure {
                wrong.push(format!("(i) a={a} b={b}"));
            }
            // (ii) a x = b with x >= 0
            let signed = Triple::new(None, Matrix::from_element(1, 1, a), beta).unwrap();
            let r = member_closure(&signed, &opts).unwrap();
            if r.in_c0 != (a * b > 0.0 || b == 0.0) || r.in_closure != (a * b >= 0.0 || a == 0.0) {
                wrong.push(format!("(ii) a={a} b={b}"));
            }
        }
    }
    verdict(
        wrong.is_empty(),
        format!("2 x 41 x 41 grid; {} mismatches {}", wrong.len(), wrong.iter().take(5).cloned().collect::<Vec<_>>().join(", ")),
    )
}

/// Token-wise comparison; numeric tokens may differ by 1e-10.
fn same_output(a: &str, b: &str) -> bool {
    let split = |s: &str| -> Vec<String> {
        s.split(|c: char| c.is_whitespace() || ",:[]{}\"".contains(c))
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    };
    let (ta, tb) = (split(a), split(b));
    ta.len() == tb.len()
        && ta.iter().zip(&tb).all(|(x, y)| match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(u), Ok(v)) => u == v || (u - v).abs() <= 1e-10,
            _ => x == y,
        })
}

fn run_cli(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_linsys"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run linsys");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();
    std::fs::write(d.join("triple.json"), r#"{"a0": [[1.0], [0.5]], "a1": [[1.0, 0.0], [0.0, 1.0]], "beta": [0.3, -0.2]}"#).unwrap();
    let (code, _) = run_cli(&["generate", "--design", "goff", "--n", "800", "--seed", "3", "--out", "data.csv", "--model-out", "model.json"], d);
    assert_eq!(code, 0, "generate failed");
    let (code, _) = run_cli(&["simulate", "--design", "cox", "--H", "3", "--n", "200", "--reps", "20", "--grid", "-0.5:0.5:0.25", "--seed", "7", "--out", "curve.csv"], d);
    assert_eq!(code, 0, "simulate failed");

    let commands: Vec<Vec<&str>> = vec![
        vec!["closure-check", "triple.json"],
        vec!["test", "--design", "goff", "--n", "2000", "--value", "0.62", "--seed", "11"],
        vec!["test", "--model", "model.json", "--data", "data.csv", "--value", "0.7", "--method", "direct", "--seed", "12", "--splits", "3"],
        vec!["invert", "--design", "goff", "--n", "2000", "--grid", "0.4:0.85:0.05", "--seed", "13"],
        vec!["invert", "--model", "model.json", "--data", "data.csv", "--grid", "0.4:0.85:0.05", "--seed", "14", "--format", "csv"],
        vec!["simulate", "--design", "fh", "--n", "300", "--reps", "10", "--grid", "20:25:2.5", "--seed", "15"],
        vec!["simulate", "--design", "cox", "--H", "4", "--n", "300", "--reps", "10", "--grid", "-1:1:0.5", "--seed", "16", "--format", "json"],
        vec!["plot", "curve.csv", "--design", "cox"],
        vec!["generate", "--design", "fh", "--n", "50", "--seed", "17", "--out", "/dev/stdout"],
    ];
    let mut bad = Vec::new();
    for args in &commands {
        let (c1, o1) = run_cli(args, d);
        let (c2, o2) = run_cli(args, d);
        if c1 != c2 || o1.is_empty() || !same_output(&o1, &o2) {
            bad.push(args.join(" "));
        }
    }
    verdict(bad.is_empty(), format!("{} commands run twice; differing: [{}]", commands.len(), bad.join("; ")))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("size, Cox design", criterion_1),
        ("power shape, Cox design", criterion_2),
        ("size, Goff design", criterion_3),
        ("size, FH design", criterion_4),
        ("closure oracle equivalence", criterion_5),
        ("gradient and variance identities", criterion_6),
        ("variance calibration", criterion_7),
        ("scalar membership geometry", criterion_8),
        ("CLI determinism", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = f();
        failed += usize::from(!v.pass);
        println!(
            "criterion {}: {} {name} ({:.1}s): {}",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
