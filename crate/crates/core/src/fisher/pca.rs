use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Projection onto the leading principal axes, without whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub input_dim: usize,
    pub output_dim: usize,
    pub mean: Vec<f64>,
    /// `output_dim` orthonormal rows of length `input_dim`, by decreasing
    /// eigenvalue.
    pub basis: Vec<Vec<f64>>,
}

impl PcaModel {
    /// `basis · (x − mean)`.
    pub fn project(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(&v, m)| f64::from(v) - m).collect();
        Ok(self
            .basis
            .iter()
            .map(|row| row.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Projects every vector with `model`.
pub fn apply_pca<S: AsRef<[f32]>>(model: &PcaModel, vectors: &[S]) -> Result<Vec<Vec<f64>>> {
    vectors.iter().map(|v| model.project(v.as_ref())).collect()
}

pub fn train_pca<S: AsRef<[f32]>>(samples: &[S], output_dim: usize) -> Result<PcaModel> {
    train_pca_with_spectrum(samples, output_dim).map(|(m, _)| m)
}

/// Trains PCA and also returns every eigenvalue of the population
/// (divide-by-n) covariance, in decreasing order.
pub fn train_pca_with_spectrum<S: AsRef<[f32]>>(samples: &[S], output_dim: usize) -> Result<(PcaModel, Vec<f64>)> {
    let n = samples.len();
    let input_dim = samples.first().map(|s| s.as_ref().len()).unwrap_or(0);
    if output_dim == 0 || input_dim == 0 || output_dim > input_dim {
        return Err(Error::InvalidParameter(format!(
            "cannot reduce {input_dim}-d data to {output_dim} dimensions"
        )));
    }
    if n <= output_dim {
        return Err(Error::InvalidParameter(format!(
            "PCA needs more than {output_dim} samples, got {n}"
        )));
    }
    if let Some(bad) = samples.iter().map(|s| s.as_ref().len()).find(|&l| l != input_dim) {
        return Err(Error::DimensionMismatch {
            expected: input_dim,
            found: bad,
        });
    }

    let mut mean = vec![0.0; input_dim];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s.as_ref()) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(input_dim, input_dim);
    let mut c = vec![0.0; input_dim];
    for s in samples {
        for (ci, (&v, m)) in c.iter_mut().zip(s.as_ref().iter().zip(&mean)) {
            *ci = f64::from(v) - m;
        }
        for i in 0..input_dim {
            let ci = c[i];
            for j in i..input_dim {
                cov[(i, j)] += ci * c[j];
            }
        }
    }
    for i in 0..input_dim {
        for j in i..input_dim {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..input_dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();

    let top = spectrum[0];
    let rank = spectrum.iter().filter(|&&l| top > 0.0 && l > top * 1e-10).count();
    if rank < output_dim {
        return Err(Error::RankDeficient {
            rank,
            required: output_dim,
        });
    }

    let basis = order[..output_dim]
        .iter()
        .map(|&i| {
            let mut row: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= norm);
            // sign convention: largest-magnitude component positive
            let pivot = row
                .iter()
                .copied()
                .reduce(|a, b| if b.abs() > a.abs() { b } else { a })
                .unwrap();
            if pivot < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            row
        })
        .collect();

    Ok((
        PcaModel {
            input_dim,
            output_dim,
            mean,
            basis,
        },
        spectrum,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(n: usize, d: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // anisotropic so eigenvalues are distinct
        (0..n)
            .map(|_| (0..d).map(|j| rng.random_range(-1.0f32..1.0) * (1.0 + j as f32)).collect())
            .collect()
    }

    #[test]
    fn principal_axis_of_a_line() {
        let samples: Vec<Vec<f32>> = (-5..=5).map(|t| vec![t as f32, 2.0 * t as f32]).collect();
        let m = train_pca(&samples, 1).unwrap();
        let s5 = 5f64.sqrt();
        assert!((m.basis[0][0] - 1.0 / s5).abs() < 1e-12);
        assert!((m.basis[0][1] - 2.0 / s5).abs() < 1e-12);
    }

    #[test]
    fn mean_projects_to_zero() {
        let samples = random_samples(50, 6, 1);
        let m = train_pca(&samples, 3).unwrap();
        let mean32: Vec<f32> = m.mean.iter().map(|&v| v as f32).collect();
        let y = m.project(&mean32).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn basis_rows_orthonormal_and_sign_fixed() {
        let samples = random_samples(200, 10, 2);
        let m = train_pca(&samples, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = m.basis[i].iter().zip(&m.basis[j]).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-6);
            }
            let pivot = m.basis[i].iter().copied().reduce(|a, b| if b.abs() > a.abs() { b } else { a }).unwrap();
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn reconstruction_error_is_discarded_spectrum() {
        let samples = random_samples(300, 8, 3);
        let (m, spectrum) = train_pca_with_spectrum(&samples, 3).unwrap();
        let mut err = 0.0;
        for s in &samples {
            let y = m.project(s).unwrap();
            for j in 0..8 {
                let recon: f64 = m.mean[j] + (0..3).map(|k| y[k] * m.basis[k][j]).sum::<f64>();
                err += (f64::from(s[j]) - recon).powi(2);
            }
        }
        err /= samples.len() as f64;
        let discarded: f64 = spectrum[3..].iter().sum();
        assert!((err - discarded).abs() < 1e-8, "{err} vs {discarded}");
    }

    #[test]
    fn rank_deficiency_reports_rank() {
        let samples: Vec<Vec<f32>> = (0..20).map(|t| vec![t as f32, 2.0 * t as f32, 0.0]).collect();
        match train_pca(&samples, 2) {
            Err(Error::RankDeficient { rank, required }) => assert_eq!((rank, required), (1, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_samples_and_mismatch() {
        let samples = random_samples(3, 4, 4);
        assert!(train_pca(&samples, 3).is_err());
        let m = train_pca(&random_samples(20, 4, 5), 2).unwrap();
        assert!(matches!(m.project(&[0.0; 3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn identity_basis_gives_centered_input() {
        let m = PcaModel {
            input_dim: 3,
            output_dim: 3,
            mean: vec![1.0, 2.0, 3.0],
            basis: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        };
        assert_eq!(m.project(&[2.0, 2.0, 0.0]).unwrap(), vec![1.0, 0.0, -3.0]);
        let z = PcaModel { mean: vec![0.0; 3], ..m };
        assert_eq!(z.project(&[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    proptest::proptest! {
        #[test]
        fn projection_never_grows_norm(x in proptest::collection::vec(-10.0f32..10.0, 6)) {
            let m = train_pca(&random_samples(60, 6, 6), 4).unwrap();
            let y = m.project(&x).unwrap();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nc = x.iter().zip(&m.mean).map(|(&a, b)| (f64::from(a) - b).powi(2)).sum::<f64>().sqrt();
            proptest::prop_assert!(ny <= nc + 1e-9);
        }
    }
}
