use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vnet_morl::checks::ccs_brute_force;
use vnet_morl::pareto::{ccs, dominates, hypervolume, pareto_front, Dominance};

fn points(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0f64..10.0, 0.0f64..10.0).prop_map(|(a, b)| [a, b]), 1..max)
}

/// O(n^2) reference: not weakly dominated by a distinct earlier point or
/// strictly dominated by any point.
fn front_brute(p: &[[f64; 2]]) -> Vec<usize> {
    (0..p.len())
        .filter(|&i| {
            !(0..p.len()).any(|j| {
                let ge = p[j][0] >= p[i][0] && p[j][1] >= p[i][1];
                let gt = p[j][0] > p[i][0] || p[j][1] > p[i][1];
                j != i && ge && (gt || j < i)
            })
        })
        .collect()
}

fn select(p: &[[f64; 2]], idx: &[usize]) -> Vec<[f64; 2]> {
    idx.iter().map(|&i| p[i]).collect()
}

#[test]
fn dominance_examples() {
    assert_eq!(dominates(&[2.0, 3.0], &[1.0, 3.0]).unwrap(), Dominance::Strict);
    assert_eq!(dominates(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), Dominance::Weak);
    assert_eq!(dominates(&[2.0, 1.0], &[1.0, 2.0]).unwrap(), Dominance::None);
    assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn front_and_ccs_examples() {
    let concave = [[1.0, 0.0], [0.0, 1.0], [0.4, 0.4]];
    assert_eq!(pareto_front(&concave).unwrap(), vec![0, 1, 2]);
    assert_eq!(ccs(&concave).unwrap(), vec![0, 1]);
    assert_eq!(pareto_front(&[[1.0, 1.0], [0.0, 0.0]]).unwrap(), vec![0]);
    assert_eq!(ccs(&[[0.3, 0.7]]).unwrap(), vec![0]);
    // Collinear points on a hull facet all attain the supporting value.
    assert_eq!(ccs(&[[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]).unwrap(), vec![0, 1, 2]);
}

#[test]
fn hypervolume_examples() {
    assert_eq!(hypervolume(&[[1.0, 1.0]], &[0.0, 0.0]).unwrap(), 1.0);
    assert!((hypervolume(&[[1.0, 0.5], [0.5, 1.0]], &[0.0, 0.0]).unwrap() - 0.75).abs() < 1e-15);
    assert!(hypervolume(&[[1.0, -0.5]], &[0.0, 0.0]).is_err());
}

#[test]
fn front_matches_brute_force_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let p: Vec<[f64; 2]> = (0..50)
            .map(|_| [rng.random_range(0..20) as f64 / 4.0, rng.random_range(0..20) as f64 / 4.0])
            .collect();
        assert_eq!(pareto_front(&p).unwrap(), front_brute(&p));
    }
}

#[test]
fn hypervolume_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let p: Vec<[f64; 2]> = (0..8).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let exact = hypervolume(&p, &[0.0, 0.0]).unwrap();
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| {
                let (x, y) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                p.iter().any(|q| q[0] >= x && q[1] >= y)
            })
            .count();
        let mc = hits as f64 / n as f64;
        assert!((mc - exact).abs() <= 0.01 * exact, "{mc} vs {exact}");
    }
}

proptest! {
    #[test]
    fn ccs_is_subset_of_front(p in points(40)) {
        let front = pareto_front(&p).unwrap();
        for i in ccs(&p).unwrap() {
            prop_assert!(front.contains(&i));
        }
    }

    #[test]
    fn filters_are_idempotent(p in points(40)) {
        let f = select(&p, &pareto_front(&p).unwrap());
        prop_assert_eq!(pareto_front(&f).unwrap(), (0..f.len()).collect::<Vec<_>>());
        let c = select(&p, &ccs(&p).unwrap());
        prop_assert_eq!(ccs(&c).unwrap(), (0..c.len()).collect::<Vec<_>>());
    }

    #[test]
    fn ccs_matches_grid(p in points(30)) {
        prop_assert_eq!(ccs(&p).unwrap(), ccs_brute_force(&p, 10_000));
    }

    #[test]
    fn hypervolume_is_monotone(p in points(30), extra in (0.0f64..10.0, 0.0f64..10.0)) {
        let before = hypervolume(&p, &[0.0, 0.0]).unwrap();
        let mut q = p.clone();
        q.push([extra.0, extra.1]);
        let after = hypervolume(&q, &[0.0, 0.0]).unwrap();
        prop_assert!(after >= before * (1.0 - 1e-12), "{} < {}", after, before);
    }

    #[test]
    fn hypervolume_ignores_dominated_points(p in points(30)) {
        let f = select(&p, &pareto_front(&p).unwrap());
        let a = hypervolume(&p, &[0.0, 0.0]).unwrap();
        let b = hypervolume(&f, &[0.0, 0.0]).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}
