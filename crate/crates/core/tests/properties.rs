mod common;

use common::{random_instance, Opts, NORMS};
use lmmns::fixtures::load_fixture;
use lmmns::lp::solve_ceei;
use lmmns::properties::{
    check, check_bbf, check_ef, check_pe, evaluate_misreport, lexicographic_compare, probe_gsp, Property,
    ProbeConfig, Report,
};
use lmmns::{solve_lmmns, solve_lmmns_general, Allocation, Error, Instance, Norm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;

fn corpus(seed: u64, count: usize, zeros: bool) -> Vec<Instance> {
    corpus_with(seed, count, zeros, true)
}

fn corpus_with(seed: u64, count: usize, zeros: bool, mixed_weights: bool) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let n = rng.gen_range(2..=12);
            let m = rng.gen_range(1..=4);
            let o = Opts {
                zero_prob: if zeros { 0.25 } else { 0.0 },
                random_weights: mixed_weights && k % 2 == 1,
                norm: NORMS[k % NORMS.len()],
                ..Opts::default()
            };
            random_instance(&mut rng, n, m, o)
        })
        .collect()
}

#[test]
fn lmmns_is_pe_and_ef_on_corpus() {
    for (k, inst) in corpus(1, 300, true).iter().enumerate() {
        let a = solve_lmmns_general(inst).unwrap();
        for r in [check_pe(inst, &a).unwrap(), check_ef(inst, &a).unwrap()] {
            assert!(r.holds, "instance {k}: {r:?}");
        }
    }
}

#[test]
fn ceei_is_pe_ef_and_bbf_on_corpus() {
    for (k, inst) in corpus_with(2, 150, false, false).iter().enumerate() {
        let a = solve_ceei(inst, 1e-11).unwrap().allocation;
        for r in [check_pe(inst, &a).unwrap(), check_ef(inst, &a).unwrap(), check_bbf(inst, &a).unwrap()] {
            assert!(r.holds, "instance {k}: {r:?}");
        }
    }
}

#[test]
fn bbf_does_not_imply_ef() {
    let f = load_fixture("thm10_bbf_ef").unwrap();
    let inst = &f.instances["main"];
    let given = Allocation::from_tasks(inst, vec![1.0, 1.0, 1.0]);
    assert!(check_bbf(inst, &given).unwrap().holds);
    let ef = check_ef(inst, &given).unwrap();
    assert!(!ef.holds);
    assert_eq!(ef.witness.unwrap().users[0], 0);
}

#[test]
fn zero_allocation_is_not_pe() {
    let inst = corpus(3, 1, false).remove(0);
    let zero = Allocation::from_tasks(&inst, vec![0.0; inst.n()]);
    let r = check_pe(&inst, &zero).unwrap();
    assert!(!r.holds);
    assert!(r.witness.is_some());
}

#[test]
fn envy_witness_names_both_users() {
    let inst = Instance::new(vec![vec![0.1, 0.1], vec![0.1, 0.1]], None, vec![f64::INFINITY; 2], Norm::Infinity).unwrap();
    let a = Allocation::from_tasks(&inst, vec![8.0, 2.0]);
    let r = check_ef(&inst, &a).unwrap();
    assert!(!r.holds);
    assert_eq!(r.witness.unwrap().users, vec![1, 0]);
}

#[test]
fn checkers_reject_infeasible_allocations() {
    let inst = Instance::new(vec![vec![0.5]], None, vec![f64::INFINITY], Norm::L1).unwrap();
    let over = Allocation::from_tasks(&inst, vec![3.0]);
    for p in [Property::Pe, Property::Si, Property::Ef, Property::Bbf] {
        assert!(matches!(check(p, &inst, &over), Err(Error::InvalidArgument(_))), "{p:?}");
    }
}

#[test]
fn property_names_parse() {
    for (s, p) in [("pe", Property::Pe), ("si", Property::Si), ("ef", Property::Ef), ("bbf", Property::Bbf)] {
        assert_eq!(s.parse::<Property>().unwrap(), p);
    }
    assert!("gsp2".parse::<Property>().is_err());
}

#[test]
fn lexicographic_order_sorts_first() {
    assert_eq!(lexicographic_compare(&[0.3, 0.1], &[0.1, 0.3]).unwrap(), Ordering::Equal);
    assert_eq!(lexicographic_compare(&[0.2, 0.9], &[0.1, 0.95]).unwrap(), Ordering::Greater);
    assert_eq!(lexicographic_compare(&[0.1, 0.5], &[0.1, 0.6]).unwrap(), Ordering::Less);
    assert!(lexicographic_compare(&[0.1], &[0.1, 0.2]).is_err());
}

#[test]
fn lmmns_dominates_other_mechanisms_lexicographically() {
    for inst in corpus(4, 100, true) {
        let best = solve_lmmns_general(&inst).unwrap();
        let other = solve_ceei(&inst, 1e-11).unwrap().allocation;
        let ord = lexicographic_compare(&best.normalized_shares, &other.normalized_shares).unwrap();
        assert_ne!(ord, Ordering::Less);
    }
}

#[test]
fn probe_is_deterministic() {
    let inst = corpus(5, 1, false).remove(0);
    let solver = |i: &Instance| solve_lmmns(i);
    let cfg = ProbeConfig::default();
    let a = probe_gsp(&inst, &solver, &cfg).unwrap();
    let b = probe_gsp(&inst, &solver, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.samples.unwrap() > 0);
}

#[test]
fn misreport_to_a_capped_user_is_not_a_gain() {
    let f = load_fixture("example1").unwrap();
    let inst = &f.instances["bounded"];
    let solver = |i: &Instance| solve_lmmns(i);
    let truth = solver(inst).unwrap();
    // user 0 already runs all of its 5 tasks
    let dev = evaluate_misreport(
        inst,
        &solver,
        &truth,
        &[Report {
            user: 0,
            demands: vec![0.01, 0.01],
            bound: 5.0,
        }],
    )
    .unwrap();
    assert!(dev.is_none());
}

#[test]
fn misreport_beats_ceei_but_not_lmmds() {
    let f = load_fixture("thm11_bbf_gsp").unwrap();
    let inst = &f.instances["main"];
    let lie = [Report {
        user: 0,
        demands: vec![2.0 / 3.0, 1.0],
        bound: f64::INFINITY,
    }];
    let ceei = |i: &Instance| Ok(solve_ceei(i, 1e-12)?.allocation);
    let truth = ceei(inst).unwrap();
    assert!(evaluate_misreport(inst, &ceei, &truth, &lie).unwrap().is_some());
    let lmmds = |i: &Instance| solve_lmmns(i);
    let truth = lmmds(inst).unwrap();
    assert!(evaluate_misreport(inst, &lmmds, &truth, &lie).unwrap().is_none());
}
