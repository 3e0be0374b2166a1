mod common;

use common::max_abs_diff;
use lmmns::properties::{check_ef, check_pe, check_si};
use lmmns::{solve_lmmns, solve_lmmns_general, solve_modified_lmmns, solve_waterfilling, Allocation, Instance, Norm};
use proptest::prelude::*;

/// Reference solver written from the definition: raise a common normalized
/// share by bisection, freeze users who hit their bound or touch a saturated
/// resource, repeat.
fn reference(inst: &Instance) -> Vec<f64> {
    let (n, m) = (inst.n(), inst.m());
    let per_task: Vec<f64> = (0..n)
        .map(|i| {
            let ws: Vec<f64> = (0..m).map(|j| inst.demand(i, j) / inst.weight(i, j)).collect();
            match inst.norm() {
                Norm::Infinity => ws.iter().copied().fold(0.0, f64::max),
                Norm::Finite(p) => ws.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p),
            }
        })
        .collect();
    let mut x = vec![0.0; n];
    let mut frozen = vec![false; n];
    let load = |x: &[f64]| -> Vec<f64> {
        (0..m).map(|j| (0..n).map(|i| inst.demand(i, j) * x[i]).sum()).collect()
    };
    while frozen.iter().any(|f| !f) {
        let at = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|i| if frozen[i] { x[i] } else { inst.bound(i).min(t / per_task[i]) })
                .collect()
        };
        let fits = |t: f64| load(&at(t)).iter().all(|&c| c <= 1.0 + 1e-13);
        let mut hi = 1.0;
        while fits(hi) && hi < 1e30 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x = at(lo);
        let c = load(&x);
        let mut progressed = false;
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            let capped = x[i] >= inst.bound(i) * (1.0 - 1e-12);
            let blocked = (0..m).any(|j| inst.demand(i, j) > 0.0 && c[j] >= 1.0 - 1e-9);
            if capped || blocked {
                frozen[i] = true;
                progressed = true;
            }
        }
        assert!(progressed, "reference solver stalled");
    }
    x
}

fn instance_strategy(zeros: bool) -> impl Strategy<Value = Instance> {
    (1usize..=8, 1usize..=4, any::<u64>(), 0usize..5, any::<bool>()).prop_map(move |(n, m, seed, k, rw)| {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let o = common::Opts {
            zero_prob: if zeros { 0.3 } else { 0.0 },
            random_weights: rw,
            unbounded_prob: 0.2,
            norm: common::NORMS[k],
        };
        common::random_instance(&mut rng, n, m, o)
    })
}

fn feasible(inst: &Instance, a: &Allocation) -> bool {
    a.check_invariants(inst).is_ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_reference_solver(inst in instance_strategy(true)) {
        let want = reference(&inst);
        let got = solve_lmmns_general(&inst).unwrap();
        prop_assert!(max_abs_diff(&got.tasks, &want) <= 1e-6 * want.iter().fold(1.0, |a, &b| f64::max(a, b)),
            "{:?} vs {:?}", got.tasks, want);
    }

    #[test]
    fn solvers_agree_without_zeros(inst in instance_strategy(false)) {
        let a = solve_lmmns(&inst).unwrap();
        let b = solve_lmmns_general(&inst).unwrap();
        let c = solve_waterfilling(&inst).unwrap();
        prop_assert!(max_abs_diff(&a.tasks, &b.tasks) <= 1e-7);
        prop_assert!(max_abs_diff(&a.tasks, &c.tasks) <= 1e-7);
    }

    #[test]
    fn allocations_are_feasible(inst in instance_strategy(true)) {
        for a in [solve_lmmns_general(&inst), solve_waterfilling(&inst)] {
            let a = a.unwrap();
            prop_assert!(feasible(&inst, &a), "{:?}", a.check_invariants(&inst));
        }
        if let Ok(a) = solve_modified_lmmns(&inst) {
            prop_assert!(feasible(&inst, &a));
        }
    }

    #[test]
    fn pareto_efficient(inst in instance_strategy(true)) {
        let a = solve_lmmns_general(&inst).unwrap();
        let r = check_pe(&inst, &a).unwrap();
        prop_assert!(r.holds, "{:?}", r.witness);
    }

    #[test]
    fn envy_free(inst in instance_strategy(true)) {
        let a = solve_lmmns_general(&inst).unwrap();
        let r = check_ef(&inst, &a).unwrap();
        prop_assert!(r.holds, "{:?}", r.witness);
    }

    #[test]
    fn sharing_incentive_at_infinity(inst in instance_strategy(true)) {
        let inst = inst.with_norm(Norm::Infinity);
        let a = solve_lmmns_general(&inst).unwrap();
        let r = check_si(&inst, &a).unwrap();
        prop_assert!(r.holds, "{:?}", r.witness);
    }

    #[test]
    fn single_threshold_without_zeros(inst in instance_strategy(false)) {
        // every user either sits at its bound or shares the common top level
        let a = solve_lmmns(&inst).unwrap();
        let free: Vec<f64> = (0..inst.n())
            .filter(|&i| a.tasks[i] < inst.bound(i) * (1.0 - 1e-9))
            .map(|i| a.normalized_shares[i])
            .collect();
        let top = a.normalized_shares.iter().copied().fold(0.0, f64::max);
        for ns in free {
            prop_assert!((ns - top).abs() <= 1e-9 * top.max(1.0), "{ns} vs {top}");
        }
        for i in 0..inst.n() {
            prop_assert!(a.normalized_shares[i] <= top * (1.0 + 1e-12));
        }
    }

    #[test]
    fn modified_is_sharing_incentive(inst in instance_strategy(true)) {
        if let Ok(a) = solve_modified_lmmns(&inst) {
            let r = check_si(&inst, &a).unwrap();
            prop_assert!(r.holds, "{:?}", r.witness);
        }
    }

    #[test]
    fn scale_invariance_of_bounds(inst in instance_strategy(false)) {
        // raising every bound above the unbounded solution changes nothing
        let open = Instance::new(inst.demand_rows(), Some(inst.weight_rows()), vec![f64::INFINITY; inst.n()], inst.norm()).unwrap();
        let a = solve_lmmns(&open).unwrap();
        let loose: Vec<f64> = a.tasks.iter().map(|x| x * 2.0 + 1.0).collect();
        let b = solve_lmmns(&Instance::new(inst.demand_rows(), Some(inst.weight_rows()), loose, inst.norm()).unwrap()).unwrap();
        prop_assert!(max_abs_diff(&a.tasks, &b.tasks) <= 1e-9 * a.tasks.iter().fold(1.0, |m, &v| f64::max(m, v)));
    }
}
