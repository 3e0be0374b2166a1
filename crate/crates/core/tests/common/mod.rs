#![allow(dead_code)]

use lmmns::{Instance, Norm};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub struct Opts {
    pub zero_prob: f64,
    pub random_weights: bool,
    pub unbounded_prob: f64,
    pub norm: Norm,
}

impl Default for Opts {
    fn default() -> Self {
        Opts {
            zero_prob: 0.0,
            random_weights: false,
            unbounded_prob: 0.1,
            norm: Norm::Infinity,
        }
    }
}

pub const NORMS: [Norm; 5] = [Norm::Finite(1.0), Norm::Finite(2.0), Norm::Finite(3.5), Norm::Finite(10.0), Norm::Infinity];

/// Random valid instance. Bounds sit between the sharing-incentive floor and
/// 2n times it, so caps bind for some users and not others.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, o: Opts) -> Instance {
    let mut demands = vec![vec![0.0; m]; n];
    for row in demands.iter_mut() {
        for r in row.iter_mut() {
            if rng.gen::<f64>() >= o.zero_prob {
                *r = rng.gen_range(0.001..1.0);
            }
        }
        if row.iter().all(|&r| r == 0.0) {
            let j = rng.gen_range(0..m);
            row[j] = rng.gen_range(0.001..1.0);
        }
    }
    let weights = if o.random_weights {
        let mut w = vec![vec![0.0; m]; n];
        for j in 0..m {
            let col: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
            let s: f64 = col.iter().sum();
            for i in 0..n {
                w[i][j] = col[i] / s;
            }
        }
        w
    } else {
        vec![vec![1.0 / n as f64; m]; n]
    };
    let bounds = (0..n)
        .map(|i| {
            if rng.gen::<f64>() < o.unbounded_prob {
                return f64::INFINITY;
            }
            let top = (0..m).map(|j| demands[i][j] / weights[i][j]).fold(0.0, f64::max);
            let floor = 1.0 / top;
            floor * rng.gen_range(0.0..(2.0 * n as f64).ln()).exp()
        })
        .collect();
    let w = if o.random_weights { Some(weights) } else { None };
    Instance::new(demands, w, bounds, o.norm).expect("generator produced an invalid instance")
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
