use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::Modality;
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLabel {
    pub class: u32,
    pub modality: Modality,
    pub converted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub label: PointLabel,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and eigenvectors as columns of a row-major `n×n`
/// buffer.
fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Projects rows onto the top two principal components of the centered
/// data. Each component is signed so that its largest-magnitude loading
/// is positive.
pub fn project_2d(embeddings: &Tensor, labels: &[PointLabel]) -> Result<Vec<ProjectedPoint>> {
    let (n, d) = (embeddings.rows(), embeddings.cols());
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            expected: vec![n],
            got: vec![labels.len()],
        });
    }
    if n < 2 || d < 2 {
        return Err(Error::DegenerateCovariance(format!("need at least 2 points in 2+ dimensions, got {n}×{d}")));
    }
    let mut mean = vec![0.0; d];
    for row in embeddings.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = embeddings
        .iter_rows()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += row[i] * row[j];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if trace <= 0.0 {
        return Err(Error::DegenerateCovariance("all points coincide".into()));
    }

    let (values, vectors) = jacobi_eigen(cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let component = |c: usize| -> Vec<f64> {
        let mut col: Vec<f64> = (0..d).map(|k| vectors[k * d + c]).collect();
        let mut lead = 0;
        for (k, x) in col.iter().enumerate() {
            if x.abs() > col[lead].abs() {
                lead = k;
            }
        }
        if col[lead] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        col
    };
    let (pc1, pc2) = (component(order[0]), component(order[1]));
    let proj = |row: &[f64], pc: &[f64]| row.iter().zip(pc).map(|(a, b)| a * b).sum::<f64>();
    Ok(centered
        .iter()
        .zip(labels)
        .map(|(row, &label)| ProjectedPoint {
            x: proj(row, &pc1),
            y: proj(row, &pc2),
            label,
        })
        .collect())
}

pub fn write_projection_csv(points: &[ProjectedPoint]) -> String {
    let mut out = String::from("x,y,class,modality,converted\n");
    for p in points {
        let _ = writeln!(
            out,
            "{:?},{:?},{},{},{}",
            p.x,
            p.y,
            p.label.class,
            p.label.modality.name(),
            u8::from(p.label.converted)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(n: usize) -> Vec<PointLabel> {
        vec![
            PointLabel {
                class: 0,
                modality: Modality::Photo,
                converted: false,
            };
            n
        ]
    }

    #[test]
    fn points_on_a_line() {
        let t = Tensor::from_rows(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [-1.0, -2.0, -3.0]]).unwrap();
        let p = project_2d(&t, &labels(4)).unwrap();
        for q in &p {
            assert!(q.y.abs() < 1e-12);
        }
        let mean_x: f64 = p.iter().map(|q| q.x).sum::<f64>() / 4.0;
        assert!(mean_x.abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let same = Tensor::from_rows(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(project_2d(&same, &labels(2)), Err(Error::DegenerateCovariance(_))));
        let one = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(project_2d(&one, &labels(1)), Err(Error::DegenerateCovariance(_))));
    }

    #[test]
    fn matches_independent_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (n, d) = (rng.random_range(3..30), rng.random_range(2..8));
            let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t = Tensor::matrix(n, d, data.clone()).unwrap();
            let p = project_2d(&t, &labels(n)).unwrap();

            let x = nalgebra::DMatrix::from_row_slice(n, d, &data);
            let mean = x.row_mean();
            let centered = nalgebra::DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
            let svd = centered.clone().svd(false, false);
            let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            let best_err: f64 = sv[2..].iter().map(|s| s * s).sum();
            let captured: f64 = p.iter().map(|q| q.x * q.x + q.y * q.y).sum();
            let total: f64 = centered.iter().map(|v| v * v).sum();
            assert!(((total - captured) - best_err).abs() < 1e-8 * total.max(1.0));
            let m: (f64, f64) = p.iter().fold((0.0, 0.0), |a, q| (a.0 + q.x, a.1 + q.y));
            assert!(m.0.abs() < 1e-9 && m.1.abs() < 1e-9);
        }
    }

    #[test]
    fn csv_has_header() {
        let t = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let csv = write_projection_csv(&project_2d(&t, &labels(2)).unwrap());
        assert!(csv.starts_with("x,y,class,modality,converted\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
