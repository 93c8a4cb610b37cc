//! Nearest-neighbor differential entropy estimators (Kozachenko–Leonenko),
//! their gradient with respect to the samples, and per-layer entropy deltas.
//!
//! All logarithms are natural, so estimates are in nats.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::SampleMatrix;
use crate::neighbor_search::{knn_distances_with, NeighborDistances};

/// Euler–Mascheroni constant γ.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Volume of the unit ball in `d` dimensions, `π^{d/2} / Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    ln_unit_ball_volume(d).map(f64::exp)
}

/// Natural log of [`unit_ball_volume`]. Stays finite for large `d`.
pub fn ln_unit_ball_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid_argument("dimension must be at least 1"));
    }
    // V_d = V_{d-2} · 2π/d, seeded with V_1 = 2 and V_2 = π
    let mut ln_v = if d % 2 == 1 {
        std::f64::consts::LN_2
    } else {
        std::f64::consts::PI.ln()
    };
    let mut m = if d % 2 == 1 { 1 } else { 2 };
    while m < d {
        m += 2;
        ln_v += (2.0 * std::f64::consts::PI / m as f64).ln();
    }
    Ok(ln_v)
}

/// Digamma function ψ(x) for x > 0.
///
/// Shifts the argument to x ≥ 6 with ψ(x) = ψ(x+1) − 1/x, then applies the
/// asymptotic expansion through the x⁻¹² term.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid_argument(format!(
            "digamma is only defined here for finite x > 0, got {x}"
        )));
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_{2j} / (2j x^{2j}), j = 1..6
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    Ok(shift + x.ln() - 0.5 * inv - series)
}

/// What to do when two samples coincide (the log-distance term would be −∞).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum DuplicatePolicy {
    /// Fail with [`Error::Degenerate`].
    #[default]
    Reject,
    /// Add centered uniform noise before estimating. `half_width` defaults to
    /// `1e-10 ×` the larger of the widest coordinate range and the largest
    /// magnitude in the sample.
    Jitter {
        #[serde(default)]
        half_width: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

impl DuplicatePolicy {
    pub fn jitter() -> Self {
        DuplicatePolicy::Jitter {
            half_width: None,
            seed: 0,
        }
    }
}

const DEFAULT_JITTER_SCALE: f64 = 1e-10;

/// Scale used for the default jitter width: the larger of the widest column
/// range and the largest magnitude, so the jitter survives rounding even when
/// all samples sit in a tiny cluster far from the origin. Falls back to 1.
fn data_scale(points: &SampleMatrix) -> f64 {
    let d = points.cols();
    let mut range: f64 = 0.0;
    for j in 0..d {
        let (lo, hi) = points
            .iter_rows()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
        range = range.max(hi - lo);
    }
    let mag = points.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = range.max(mag);
    if scale > 0.0 {
        scale
    } else {
        1.0
    }
}

/// Applies the jitter step of `policy`, if any.
pub fn apply_duplicate_policy<'a>(
    points: &'a SampleMatrix,
    policy: &DuplicatePolicy,
) -> Result<Cow<'a, SampleMatrix>> {
    match *policy {
        DuplicatePolicy::Reject => Ok(Cow::Borrowed(points)),
        DuplicatePolicy::Jitter { half_width, seed } => {
            let h = half_width.unwrap_or_else(|| DEFAULT_JITTER_SCALE * data_scale(points));
            if !(h >= 0.0) || !h.is_finite() {
                return Err(Error::invalid_argument(format!("jitter half-width must be ≥ 0, got {h}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = points.clone();
            for v in out.as_mut_slice() {
                *v += rng.gen_range(-1.0..=1.0) * h;
            }
            Ok(Cow::Owned(out))
        }
    }
}

/// A differential entropy estimate in nats with the sample shape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub n: usize,
    pub k: usize,
    pub d: usize,
}

fn check_sample_count(points: &SampleMatrix) -> Result<()> {
    if points.rows() < 2 {
        return Err(Error::invalid_argument(format!(
            "entropy estimation needs at least 2 samples, got {}",
            points.rows()
        )));
    }
    Ok(())
}

fn neighbors_without_duplicates(
    points: &SampleMatrix,
    k: usize,
    exec: Execution,
) -> Result<NeighborDistances> {
    let nd = knn_distances_with(points, k, exec)?;
    if let Some(i) = (0..nd.n()).find(|&i| nd.distances(i)[0] == 0.0) {
        return Err(Error::degenerate(format!(
            "sample {i} coincides with sample {} (zero nearest-neighbor distance); \
             use the jitter duplicate policy to perturb ties",
            nd.indices(i)[0]
        )));
    }
    Ok(nd)
}

/// `Σ_i ln r_{k}(x_i)`, summed in index order.
fn sum_ln_kth_distance(nd: &NeighborDistances) -> f64 {
    (0..nd.n()).map(|i| nd.kth_distance(i).ln()).sum()
}

/// Nearest-neighbor estimate
/// `H = ln(n−1) + ln V_d + γ + (d/n) Σ_i ln r(x_i)`, where r is the distance to
/// the nearest other sample.
pub fn entropy_nn(points: &SampleMatrix, policy: &DuplicatePolicy) -> Result<EntropyEstimate> {
    check_sample_count(points)?;
    let points = apply_duplicate_policy(points, policy)?;
    let (n, d) = (points.rows(), points.cols());
    let nd = neighbors_without_duplicates(&points, 1, Execution::default())?;
    let value = ((n - 1) as f64).ln()
        + ln_unit_ball_volume(d)?
        + EULER_GAMMA
        + d as f64 * sum_ln_kth_distance(&nd) / n as f64;
    Ok(EntropyEstimate { value, n, k: 1, d })
}

/// k-th-neighbor estimate
/// `H(X,k) = −ψ(k) + ψ(n) + ln V_d + (d/n) Σ_i ln r_k(x_i)`.
pub fn entropy_knn(
    points: &SampleMatrix,
    k: usize,
    policy: &DuplicatePolicy,
) -> Result<EntropyEstimate> {
    entropy_knn_with(points, k, policy, Execution::default())
}

pub fn entropy_knn_with(
    points: &SampleMatrix,
    k: usize,
    policy: &DuplicatePolicy,
    exec: Execution,
) -> Result<EntropyEstimate> {
    check_sample_count(points)?;
    let points = apply_duplicate_policy(points, policy)?;
    let nd = neighbors_without_duplicates(&points, k, exec)?;
    estimate_from_neighbors(&points, &nd)
}

fn estimate_from_neighbors(points: &SampleMatrix, nd: &NeighborDistances) -> Result<EntropyEstimate> {
    let (n, d, k) = (points.rows(), points.cols(), nd.k());
    let value = -digamma(k as f64)? + digamma(n as f64)? + ln_unit_ball_volume(d)?
        + d as f64 * sum_ln_kth_distance(nd) / n as f64;
    Ok(EntropyEstimate { value, n, k, d })
}

/// Gradient of [`entropy_knn`] with respect to every sample, holding the
/// neighbor assignment fixed. Valid wherever no k-th-neighbor distance is
/// tied; at ties the lower-index neighbor is used.
pub fn entropy_knn_gradient(points: &SampleMatrix, k: usize) -> Result<SampleMatrix> {
    check_sample_count(points)?;
    let nd = neighbors_without_duplicates(points, k, Execution::default())?;
    Ok(gradient_from_neighbors(points, &nd, Execution::default()))
}

/// Estimate and gradient from a single neighbor search. With a jitter
/// policy both are evaluated at the perturbed samples.
pub fn entropy_knn_with_gradient(
    points: &SampleMatrix,
    k: usize,
    policy: &DuplicatePolicy,
    exec: Execution,
) -> Result<(EntropyEstimate, SampleMatrix)> {
    check_sample_count(points)?;
    let points = apply_duplicate_policy(points, policy)?;
    let nd = neighbors_without_duplicates(&points, k, exec)?;
    let est = estimate_from_neighbors(&points, &nd)?;
    Ok((est, gradient_from_neighbors(&points, &nd, exec)))
}

fn gradient_from_neighbors(points: &SampleMatrix, nd: &NeighborDistances, exec: Execution) -> SampleMatrix {
    let (n, d) = (points.rows(), points.cols());
    let coef = d as f64 / n as f64;
    // ∂/∂x_j of coef·ln‖x_j − x_m‖ is coef·(x_j − x_m)/r²; x_m receives the negation
    let pair_terms: Vec<Vec<f64>> = exec.map_range(n, |j| {
        let m = nd.kth_index(j);
        let r = nd.kth_distance(j);
        let scale = coef / (r * r);
        points
            .row(j)
            .iter()
            .zip(points.row(m))
            .map(|(a, b)| scale * (a - b))
            .collect()
    });
    let mut grad = SampleMatrix::zeros(n, d);
    for (j, term) in pair_terms.iter().enumerate() {
        let m = nd.kth_index(j);
        for (g, t) in grad.row_mut(j).iter_mut().zip(term) {
            *g += t;
        }
        for (g, t) in grad.row_mut(m).iter_mut().zip(term) {
            *g -= t;
        }
    }
    grad
}

/// Per-layer entropies and their consecutive differences `ΔH_n = H_{n+1} − H_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub layer_entropies: Vec<f64>,
    pub deltas: Vec<f64>,
}

pub fn layer_deltas(layer_entropies: &[f64]) -> Result<EntropyProfile> {
    if layer_entropies.len() < 2 {
        return Err(Error::invalid_argument(format!(
            "entropy deltas need at least 2 layers, got {}",
            layer_entropies.len()
        )));
    }
    Ok(EntropyProfile {
        layer_entropies: layer_entropies.to_vec(),
        deltas: layer_entropies.windows(2).map(|w| w[1] - w[0]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn line(xs: &[f64]) -> SampleMatrix {
        SampleMatrix::from_column(xs).unwrap()
    }

    /// ψ(n) = −γ + Σ_{j=1}^{n−1} 1/j for integer n.
    fn digamma_harmonic(n: u32) -> f64 {
        -EULER_GAMMA + (1..n).map(|j| 1.0 / j as f64).sum::<f64>()
    }

    #[test]
    fn unit_ball_volumes() {
        assert_abs_diff_eq!(unit_ball_volume(1).unwrap(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(unit_ball_volume(2).unwrap(), PI, epsilon = 1e-14);
        assert_abs_diff_eq!(unit_ball_volume(3).unwrap(), 4.0 * PI / 3.0, epsilon = 1e-14);
        // V_4 = π²/2, V_5 = 8π²/15
        assert_abs_diff_eq!(unit_ball_volume(4).unwrap(), PI * PI / 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(unit_ball_volume(5).unwrap(), 8.0 * PI * PI / 15.0, epsilon = 1e-13);
        assert!(matches!(unit_ball_volume(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn digamma_reference_values() {
        assert_abs_diff_eq!(digamma(1.0).unwrap(), -0.5772156649, epsilon = 1e-10);
        assert_abs_diff_eq!(digamma(2.0).unwrap(), 0.4227843351, epsilon = 1e-10);
        assert_abs_diff_eq!(digamma(10.0).unwrap(), 2.2517525891, epsilon = 1e-10);
        for n in 1..200 {
            assert_abs_diff_eq!(digamma(n as f64).unwrap(), digamma_harmonic(n), epsilon = 1e-10);
        }
        // ψ(1/2) = −γ − 2 ln 2
        assert_abs_diff_eq!(
            digamma(0.5).unwrap(),
            -EULER_GAMMA - 2.0 * std::f64::consts::LN_2,
            epsilon = 1e-10
        );
    }

    #[test]
    fn digamma_recurrence() {
        for &x in &[0.1, 0.7, 1.3, 2.9, 5.5, 17.25] {
            let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert_abs_diff_eq!(lhs, 1.0 / x, epsilon = 1e-10);
        }
    }

    #[test]
    fn digamma_domain() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.5).is_err());
        assert!(digamma(f64::NAN).is_err());
    }

    #[test]
    fn two_point_nn_estimate() {
        let est = entropy_nn(&line(&[0.0, 1.0]), &DuplicatePolicy::Reject).unwrap();
        assert_abs_diff_eq!(est.value, std::f64::consts::LN_2 + EULER_GAMMA, epsilon = 1e-12);
        assert_eq!((est.n, est.k, est.d), (2, 1, 1));
    }

    #[test]
    fn duplicates_are_rejected() {
        let pts = line(&[0.3, 0.3, 1.0]);
        assert!(matches!(entropy_nn(&pts, &DuplicatePolicy::Reject), Err(Error::Degenerate(_))));
        assert!(matches!(
            entropy_knn(&pts, 1, &DuplicatePolicy::Reject),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(entropy_knn_gradient(&pts, 1), Err(Error::Degenerate(_))));
        let est = entropy_nn(&pts, &DuplicatePolicy::jitter()).unwrap();
        assert!(est.value.is_finite());
    }

    #[test]
    fn sample_count_and_order_errors() {
        assert!(matches!(
            entropy_nn(&line(&[1.0]), &DuplicatePolicy::Reject),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            entropy_knn(&line(&[1.0, 2.0, 4.0]), 3, &DuplicatePolicy::Reject),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn two_point_gradient() {
        // each point is the other's neighbor, so both pair terms land on each row:
        // H = const + ln|x1 − x0|, ∂H/∂x0 = −1
        let pts = line(&[0.0, 1.0]);
        let g = entropy_knn_gradient(&pts, 1).unwrap();
        assert_eq!(g.as_slice(), &[-1.0, 1.0]);
        let h = 1e-6;
        let f = |x0: f64| entropy_knn(&line(&[x0, 1.0]), 1, &DuplicatePolicy::Reject).unwrap().value;
        assert_abs_diff_eq!((f(h) - f(-h)) / (2.0 * h), -1.0, epsilon = 1e-8);
    }

    #[test]
    fn k1_matches_nn_up_to_constants() {
        let pts = line(&[0.1, 0.5, 1.7, 2.0, 3.9, 4.2]);
        let nn = entropy_nn(&pts, &DuplicatePolicy::Reject).unwrap().value;
        let k1 = entropy_knn(&pts, 1, &DuplicatePolicy::Reject).unwrap().value;
        let n = 6.0f64;
        assert_abs_diff_eq!(k1 - nn, digamma(n).unwrap() - (n - 1.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn deltas() {
        assert_eq!(layer_deltas(&[3.0, 2.0, 1.0]).unwrap().deltas, vec![-1.0, -1.0]);
        assert_eq!(layer_deltas(&[5.0; 4]).unwrap().deltas, vec![0.0; 3]);
        let p = layer_deltas(&[1.0, 0.4, 0.1]).unwrap();
        assert_abs_diff_eq!(p.deltas[0], -0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.deltas[1], -0.3, epsilon = 1e-15);
        assert!(layer_deltas(&[1.0]).is_err());
    }

    #[test]
    fn jitter_is_seeded() {
        let pts = line(&[1.0, 1.0, 2.0]);
        let p = DuplicatePolicy::Jitter { half_width: Some(1e-6), seed: 4 };
        assert_eq!(apply_duplicate_policy(&pts, &p).unwrap(), apply_duplicate_policy(&pts, &p).unwrap());
    }

    #[test]
    fn default_jitter_survives_tight_clusters() {
        // saturated activations: spread ~1e-15 around 1.0
        let pts = line(&[1.0, 1.0, 1.0 - 1e-15, 1.0]);
        assert!(entropy_knn(&pts, 1, &DuplicatePolicy::jitter()).is_ok());
    }
}
