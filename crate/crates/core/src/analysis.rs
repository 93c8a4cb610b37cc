//! Run analytics: PCA of layer features, accuracy-curve smoothing, mean
//! accuracy and the R² of a logarithmic fit to a training curve.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// `c × d`, orthonormal rows, ordered by explained variance.
    pub components: SampleMatrix,
    /// Descending, nonnegative. Sample covariance (divisor n − 1).
    pub explained_variance: Vec<f64>,
    /// `n × c` projections of the centered input.
    pub projected: SampleMatrix,
    pub mean: Vec<f64>,
    /// Trace of the covariance.
    pub total_variance: f64,
}

impl PcaResult {
    /// Projects new points with the fitted mean and basis.
    pub fn project(&self, points: &SampleMatrix) -> Result<SampleMatrix> {
        let d = self.mean.len();
        if points.cols() != d {
            return Err(Error::invalid_argument(format!(
                "points have {} columns, basis has {d}",
                points.cols()
            )));
        }
        let c = self.components.rows();
        let mut out = Vec::with_capacity(points.rows() * c);
        for row in points.iter_rows() {
            for comp in self.components.iter_rows() {
                out.push(row.iter().zip(&self.mean).zip(comp).map(|((x, m), v)| (x - m) * v).sum());
            }
        }
        Ok(SampleMatrix::from_raw(points.rows(), c, out))
    }

    /// Maps projections back to the input space.
    pub fn reconstruct(&self, projected: &SampleMatrix) -> SampleMatrix {
        let d = self.mean.len();
        let mut out = Vec::with_capacity(projected.rows() * d);
        for p in projected.iter_rows() {
            let mut x = self.mean.clone();
            for (coef, comp) in p.iter().zip(self.components.iter_rows()) {
                for (xi, vi) in x.iter_mut().zip(comp) {
                    *xi += coef * vi;
                }
            }
            out.extend(x);
        }
        SampleMatrix::from_raw(projected.rows(), d, out)
    }
}

/// Principal components from the eigendecomposition of the sample covariance.
/// Each component's first non-negligible coordinate is made positive.
pub fn pca(points: &SampleMatrix, c: usize) -> Result<PcaResult> {
    let (n, d) = (points.rows(), points.cols());
    if n < 2 {
        return Err(Error::invalid_argument(format!("PCA needs at least 2 points, got {n}")));
    }
    if c == 0 || c > n.min(d) {
        return Err(Error::invalid_argument(format!(
            "component count {c} must lie in 1..={}",
            n.min(d)
        )));
    }
    points.check_finite()?;

    let mut mean = vec![0.0; d];
    for row in points.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in points.iter_rows() {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let total_variance = cov.trace();
    if !(total_variance > 0.0) {
        return Err(Error::degenerate("all points coincide; covariance is zero"));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(c * d);
    let mut explained_variance = Vec::with_capacity(c);
    for &j in order.iter().take(c) {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        components.extend(v);
        explained_variance.push(eig.eigenvalues[j].max(0.0));
    }

    let mut result = PcaResult {
        components: SampleMatrix::from_raw(c, d, components),
        explained_variance,
        projected: SampleMatrix::zeros(n, c),
        mean,
        total_variance,
    };
    result.projected = result.project(points)?;
    Ok(result)
}

/// Centered moving average. Each output is the mean of the values within
/// `window / 2` indices, with the window truncated at either end.
pub fn smooth_curve(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid_argument(format!("window must be a positive odd integer, got {window}")));
    }
    if window > values.len() {
        return Err(Error::invalid_argument(format!(
            "window {window} is longer than the curve ({})",
            values.len()
        )));
    }
    let half = window / 2;
    Ok((0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

/// Least-squares fit of `y = a·ln(t + 1) + b` over `t = 0, 1, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

pub fn log_regression_r2(curve: &[f64]) -> Result<CurveFit> {
    let n = curve.len();
    if n < 3 {
        return Err(Error::invalid_argument(format!("log regression needs at least 3 points, got {n}")));
    }
    let xs: Vec<f64> = (0..n).map(|t| ((t + 1) as f64).ln()).collect();
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = curve.iter().sum::<f64>() / nf;
    let ss_tot: f64 = curve.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::degenerate("curve is constant; R² is undefined"));
    }
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs.iter().zip(curve).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let a = sxy / sxx;
    let b = y_mean - a * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(curve)
        .map(|(x, y)| {
            let r = y - (a * x + b);
            r * r
        })
        .sum();
    Ok(CurveFit {
        a,
        b,
        r_squared: 1.0 - ss_res / ss_tot,
    })
}

pub fn mean_accuracy(curve: &[f64]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::invalid_argument("accuracy curve is empty"));
    }
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}

/// One layer's features in the shared projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedLayer {
    pub projected: SampleMatrix,
    pub centroid: Vec<f64>,
}

/// Projects every layer onto one PCA basis fitted to all layers together, so
/// the per-layer point clouds and centroids can be plotted as a trajectory.
pub fn layer_trajectory(layers: &[SampleMatrix], c: usize) -> Result<Vec<ProjectedLayer>> {
    if layers.len() < 2 {
        return Err(Error::invalid_argument(format!(
            "a trajectory needs at least 2 layers, got {}",
            layers.len()
        )));
    }
    let basis = pca(&SampleMatrix::vstack(layers)?, c)?;
    layers
        .iter()
        .map(|layer| {
            let projected = basis.project(layer)?;
            let mut centroid = vec![0.0; c];
            for row in projected.iter_rows() {
                for (m, v) in centroid.iter_mut().zip(row) {
                    *m += v;
                }
            }
            centroid.iter_mut().for_each(|m| *m /= projected.rows() as f64);
            Ok(ProjectedLayer { projected, centroid })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pca_on_a_line() {
        let rows: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        let res = pca(&SampleMatrix::from_rows(&rows).unwrap(), 2).unwrap();
        let s = 5.0f64.sqrt();
        assert_abs_diff_eq!(res.components.get(0, 0), 1.0 / s, epsilon = 1e-10);
        assert_abs_diff_eq!(res.components.get(0, 1), 2.0 / s, epsilon = 1e-10);
        assert_abs_diff_eq!(res.explained_variance[1], 0.0, epsilon = 1e-10);
        let sum: f64 = res.explained_variance.iter().sum();
        assert_abs_diff_eq!(sum, res.total_variance, epsilon = 1e-8);
    }

    #[test]
    fn pca_errors() {
        let pts = SampleMatrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(pca(&pts, 1), Err(Error::Degenerate(_))));
        let pts = SampleMatrix::from_rows(&[[1.0, 2.0], [0.0, 2.0]]).unwrap();
        assert!(matches!(pca(&pts, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(pca(&pts, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth_curve(&[0.75; 6], 5).unwrap(), vec![0.75; 6]);
        for v in smooth_curve(&[0.7; 6], 5).unwrap() {
            assert_abs_diff_eq!(v, 0.7, epsilon = 1e-15);
        }
        let spike = [0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(
            smooth_curve(&spike, 5).unwrap(),
            vec![0.0, 0.0, 2.0, 2.0, 2.0, 2.0, 2.0, 0.0, 0.0]
        );
        let ramp: Vec<f64> = (1..=9).map(f64::from).collect();
        let s = smooth_curve(&ramp, 5).unwrap();
        assert_eq!(&s[2..7], &ramp[2..7]);
        assert_eq!(s[0], 2.0);
        assert!(smooth_curve(&[1.0, 2.0], 5).is_err());
        assert!(smooth_curve(&[1.0; 8], 4).is_err());
    }

    #[test]
    fn log_fit_recovers_model() {
        let curve: Vec<f64> = (0..50).map(|t| 2.0 * ((t + 1) as f64).ln() + 0.1).collect();
        let fit = log_regression_r2(&curve).unwrap();
        assert_abs_diff_eq!(fit.a, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.b, 0.1, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-9);
        assert!(matches!(log_regression_r2(&[0.5; 10]), Err(Error::Degenerate(_))));
        assert!(matches!(log_regression_r2(&[0.5, 1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mean_accuracy_examples() {
        assert_eq!(mean_accuracy(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mean_accuracy(&[0.0, 1.0]).unwrap(), 0.5);
        assert_abs_diff_eq!(mean_accuracy(&[0.2, 0.4, 0.6]).unwrap(), 0.4, epsilon = 1e-15);
        assert!(mean_accuracy(&[]).is_err());
    }

    #[test]
    fn identical_layers_project_identically() {
        let layer = SampleMatrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.5, -1.0], [3.0, 0.0, 0.2], [0.4, 0.4, 0.9]]).unwrap();
        let traj = layer_trajectory(&[layer.clone(), layer.clone(), layer], 2).unwrap();
        assert_eq!(traj[0], traj[1]);
        assert_eq!(traj[1], traj[2]);
        assert!(layer_trajectory(&[SampleMatrix::zeros(3, 2)], 2).is_err());
    }
}
