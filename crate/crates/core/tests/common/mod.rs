#![allow(dead_code)]

use entropy_loss::network::{objective_gradients, EntropyAttachment, Targets, ToyNetwork};
use entropy_loss::{EntropyLossConfig, Execution, SampleMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> SampleMatrix {
    let data = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    SampleMatrix::new(n, d, data).unwrap()
}

pub fn uniform_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> SampleMatrix {
    let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SampleMatrix::new(n, d, data).unwrap()
}

/// `‖a − b‖∞ / ‖b‖∞`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-300)
}

/// Every point's k-th neighbor distance is separated from its (k−1)-th and
/// (k+1)-th by more than `margin` relative, so small perturbations keep the
/// neighbor assignment.
pub fn tie_free(points: &SampleMatrix, k: usize, margin: f64) -> bool {
    let n = points.rows();
    (0..n).all(|i| {
        let mut ds: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| entropy_loss::matrix::squared_distance(points.row(i), points.row(j)).sqrt())
            .collect();
        ds.sort_by(f64::total_cmp);
        let rk = ds[k - 1];
        let below = k < 2 || rk - ds[k - 2] > margin * rk;
        let above = k >= ds.len() || ds[k] - rk > margin * rk;
        rk > 0.0 && below && above
    })
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn central_differences(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Column sums of `g`, i.e. the sum of all gradient rows.
pub fn row_sum(g: &SampleMatrix) -> Vec<f64> {
    let mut s = vec![0.0; g.cols()];
    for row in g.iter_rows() {
        for (a, v) in s.iter_mut().zip(row) {
            *a += v;
        }
    }
    s
}

pub fn flat_parameters(net: &ToyNetwork) -> Vec<f64> {
    net.parameters().concat()
}

pub fn with_parameters(net: &ToyNetwork, flat: &[f64]) -> ToyNetwork {
    let mut out = net.clone();
    let mut it = flat.iter();
    for p in out.parameters_mut() {
        for v in p.iter_mut() {
            *v = *it.next().unwrap();
        }
    }
    out
}

/// Task loss plus weighted Entropy Loss.
pub fn objective(net: &ToyNetwork, batch: &SampleMatrix, targets: &Targets, config: &EntropyLossConfig) -> f64 {
    objective_gradients(net, batch, targets, config, EntropyAttachment::PostActivation, Execution::Sequential)
        .unwrap()
        .0
        .total
}

pub fn bits(net: &ToyNetwork) -> Vec<u64> {
    flat_parameters(net).iter().map(|v| v.to_bits()).collect()
}
