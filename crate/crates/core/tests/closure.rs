use linsys::closure::{member_c0, member_cbar0, member_closure, ClosureOptions, Triple};
use linsys::rng::stream;
use linsys::{Matrix, Vector};
use proptest::prelude::*;
use rand::Rng;

fn uniform(rng: &mut impl Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
}

fn orthogonal(rng: &mut impl Rng, d: usize) -> Matrix {
    uniform(rng, d, d).qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cbar0_value_depends_on_the_column_space_only(seed: u64, p in 2usize..5, d0 in 1usize..3, d1 in 1usize..4) {
        let mut rng = stream(seed, 0);
        let a0 = uniform(&mut rng, p, d0);
        let a1 = uniform(&mut rng, p, d1);
        let beta = Vector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
        let q = orthogonal(&mut rng, d0);
        let opts = ClosureOptions::default();
        let (_, v1, _) = member_cbar0(&Triple::new(Some(a0.clone()), a1.clone(), beta.clone()).unwrap(), &opts).unwrap();
        let (_, v2, _) = member_cbar0(&Triple::new(Some(&a0 * q), a1, beta).unwrap(), &opts).unwrap();
        prop_assert!((v1 - v2).abs() <= 1e-9, "{} vs {}", v1, v2);
    }
}

#[test]
fn clear_non_members_have_no_nearby_member() {
    let mut rng = stream(17, 0);
    let opts = ClosureOptions::default();
    let mut checked = 0;
    while checked < 5 {
        let p = 3;
        let a0 = uniform(&mut rng, p, 1);
        let a1 = uniform(&mut rng, p, 2);
        let beta = Vector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
        let t = Triple::new(Some(a0.clone()), a1.clone(), beta.clone()).unwrap();
        let r = member_closure(&t, &opts).unwrap();
        if r.in_c0 || r.lp_value < 0.05 {
            continue;
        }
        assert!(!r.in_closure);
        checked += 1;
        for _ in 0..10_000 {
            // a random direction of Frobenius norm 1e-3 over (A0, A1, beta)
            let mut e: Vec<f64> = (0..p * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            e.iter_mut().for_each(|v| *v *= 1e-3 / norm);
            let da0 = Matrix::from_column_slice(p, 1, &e[..p]);
            let da1 = Matrix::from_column_slice(p, 2, &e[p..3 * p]);
            let db = Vector::from_column_slice(&e[3 * p..]);
            let moved = Triple::new(Some(&a0 + da0), &a1 + da1, &beta + db).unwrap();
            assert!(!member_c0(&moved, 1e-8).unwrap().0);
        }
    }
}
