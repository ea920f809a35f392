//! The arc-cosine (ReLU NTK) Gram matrix over aggregated node features and the
//! graph kernel complexity functional `2 yᵀ H⁻¹ y / N`.

use std::io::{Read, Write};
use std::sync::OnceLock;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::AggregatedFeatures;
use crate::linalg::{Cholesky, Matrix, SymmetricEigen};
use crate::pseudolabel::LabelMatrix;
use crate::scalar::{dot, norm2, Scalar};

/// Relative size of the diagonal shift used when `H` is numerically singular.
pub const RIDGE_SCALE: f64 = 1e-8;

/// `H(d) = d (π − arccos d) / 2π` for a dot product `d` of unit vectors.
#[inline]
pub fn kernel_entry<T: Scalar>(d: T) -> T {
    // arccos has infinite slope at ±1, so a few ulps of normalization error on
    // parallel rows would otherwise show up as a ~1e-8 perturbation of H.
    let snap = T::one() - T::of(8.0) * T::epsilon();
    let d = if d >= snap {
        T::one()
    } else if d <= -snap {
        -T::one()
    } else {
        d
    };
    d * (T::PI() - d.acos()) / (T::PI() + T::PI())
}

#[derive(Debug)]
pub struct GramMatrix<T> {
    h: Matrix<T>,
    factor: Cholesky<T>,
    ridge: T,
    lambda_min: OnceLock<Option<T>>,
}

impl<T: Scalar> GramMatrix<T> {
    /// Wraps a precomputed symmetric kernel matrix and factors it.
    pub fn from_matrix(h: Matrix<T>) -> Result<Self> {
        if h.rows() != h.cols() {
            return Err(Error::Shape {
                expected: "square Gram matrix".into(),
                got: format!("{}x{}", h.rows(), h.cols()),
            });
        }
        let (factor, ridge) = match Cholesky::factor(&h) {
            Some(f) => (f, T::zero()),
            None => {
                let n = h.rows().max(1);
                let ridge = T::of(RIDGE_SCALE) * h.trace() / T::of(n as f64);
                warn!(
                    "Gram matrix is not numerically positive definite; adding ridge {:e}",
                    ridge.to_f64_lossy()
                );
                let f = Cholesky::factor_shifted(&h, ridge).ok_or(Error::NotPositiveDefinite {
                    ridge: ridge.to_f64_lossy(),
                })?;
                (f, ridge)
            }
        };
        Ok(GramMatrix {
            h,
            factor,
            ridge,
            lambda_min: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.h.rows()
    }

    pub fn h(&self) -> &Matrix<T> {
        &self.h
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.factor
    }

    /// Diagonal shift actually added before factoring (zero when unneeded).
    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn ridge_used(&self) -> bool {
        self.ridge > T::zero()
    }

    /// Smallest eigenvalue of `H` before any ridge; computed once on demand.
    pub fn lambda_min(&self) -> Result<T> {
        self.lambda_min
            .get_or_init(|| SymmetricEigen::new(&self.h).ok().map(|e| e.min()))
            .ok_or(Error::EigenNoConvergence)
    }

    pub fn eigen(&self) -> Result<SymmetricEigen<T>> {
        SymmetricEigen::new(&self.h)
    }
}

/// Builds `H∞` from unit-row aggregated features.
pub fn gram_matrix<T: Scalar>(xt: &AggregatedFeatures<T>) -> Result<GramMatrix<T>> {
    GramMatrix::from_matrix(kernel_matrix(&xt.matrix))
}

/// Dense kernel matrix of unit rows; the diagonal is pinned to 1/2.
pub fn kernel_matrix<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let n = x.rows();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        T::of(0.5)
                    } else {
                        // Computing (min, max) keeps H bitwise symmetric.
                        let (a, b) = if i < j { (i, j) } else { (j, i) };
                        kernel_entry(dot(x.row(a), x.row(b)))
                    }
                })
                .collect()
        })
        .collect();
    Matrix::from_rows(&rows).expect("square by construction")
}

pub fn min_eigenvalue<T: Scalar>(gm: &GramMatrix<T>) -> Result<T> {
    gm.lambda_min()
}

/// Solves `(H + ridge·I) z = rhs` through the cached factor and audits the
/// residual: `‖r‖ ≤ tol·‖rhs‖`, or `‖r‖ ≤ tol·(‖H + ridge·I‖_F ‖z‖ + ‖rhs‖)`
/// once a ridge is in play.
pub fn solve_spd<T: Scalar>(gm: &GramMatrix<T>, rhs: &[T]) -> Result<Vec<T>> {
    let n = gm.n();
    if rhs.len() != n {
        return Err(Error::Shape {
            expected: format!("right-hand side of length {n}"),
            got: rhs.len().to_string(),
        });
    }
    let z = gm.factor.solve(rhs);
    let mut r = gm.h.matvec(&z);
    for ((ri, &zi), &bi) in r.iter_mut().zip(&z).zip(rhs) {
        *ri += gm.ridge * zi - bi;
    }
    let residual = norm2(&r);
    let mut scale = norm2(rhs);
    if gm.ridge_used() {
        // A ridged system is near-singular by construction; judge it by normwise
        // backward error instead of the plain relative residual.
        scale += (gm.h.frobenius_norm() + gm.ridge * T::of((n as f64).sqrt())) * norm2(&z);
    }
    let tolerance = T::of(T::SOLVE_RTOL) * scale;
    if !(residual <= tolerance) {
        return Err(Error::IllConditioned {
            residual: residual.to_f64_lossy(),
            tolerance: tolerance.to_f64_lossy(),
        });
    }
    Ok(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GkcValue<T> {
    pub value: T,
    pub per_column: Vec<T>,
    pub ridge_used: bool,
}

/// `Σ_c 2 y_cᵀ (H + ridge·I)⁻¹ y_c / N`, one solve per label channel.
pub fn gkc<T: Scalar>(gm: &GramMatrix<T>, labels: &LabelMatrix<T>) -> Result<GkcValue<T>> {
    let n = gm.n();
    let scale = T::of(2.0) / T::of(n as f64);
    let mut per_column = Vec::with_capacity(labels.columns.len());
    for y in &labels.columns {
        if y.len() != n {
            return Err(Error::Shape {
                expected: format!("label column of length {n}"),
                got: y.len().to_string(),
            });
        }
        let z = solve_spd(gm, y)?;
        per_column.push(scale * dot(y, &z));
    }
    Ok(GkcValue {
        value: per_column.iter().copied().sum(),
        per_column,
        ridge_used: gm.ridge_used(),
    })
}

const GRAM_MAGIC: &[u8; 4] = b"GKGM";

/// Row-major little-endian `f64` dump behind a 16-byte header
/// (`"GKGM"`, `u32` N, then eight reserved zero bytes).
pub fn write_gram<T: Scalar, W: Write>(h: &Matrix<T>, mut w: W) -> std::io::Result<()> {
    let n = h.rows() as u32;
    w.write_all(GRAM_MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    for v in h.as_slice() {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_gram<T: Scalar, R: Read>(mut r: R) -> Result<Matrix<T>> {
    let bad = |m: &str| Error::Shape {
        expected: "GKGM Gram dump".into(),
        got: m.to_string(),
    };
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| bad("truncated header"))?;
    if &header[..4] != GRAM_MAGIC {
        return Err(bad("bad magic"));
    }
    let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; n * n * 8];
    r.read_exact(&mut buf).map_err(|_| bad("truncated body"))?;
    let data = buf
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Matrix::from_vec(n, n, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudolabel::{encode_labels, Encoding, LabelSource};

    #[test]
    fn closed_forms() {
        assert!((kernel_entry(1.0f64) - 0.5).abs() < 1e-15);
        assert_eq!(kernel_entry(0.0f64), 0.0);
        assert!((kernel_entry(0.5f64) - 1.0 / 6.0).abs() < 1e-15);
        assert!(kernel_entry(-1.0f64).abs() < 1e-15);
        // Rounding past the domain is clamped instead of producing NaN.
        assert!((kernel_entry(1.0f64 + 1e-15) - 0.5).abs() < 1e-14);
        assert!(kernel_entry(-1.0f64 - 1e-15).is_finite());
    }

    #[test]
    fn kernel_entry_bounded() {
        for i in 0..=200 {
            let d = -1.0 + i as f64 / 100.0;
            let k = kernel_entry(d);
            assert!(k.abs() <= 0.5 + 1e-15);
        }
    }

    fn half_identity(n: usize) -> GramMatrix<f64> {
        let xt = AggregatedFeatures::from_unit_rows(Matrix::identity(n)).unwrap();
        gram_matrix(&xt).unwrap()
    }

    #[test]
    fn orthonormal_rows_give_half_identity() {
        let gm = half_identity(5);
        assert_eq!(gm.h(), &{
            let mut m = Matrix::<f64>::identity(5);
            (0..5).for_each(|i| m[(i, i)] = 0.5);
            m
        });
        assert!((gm.lambda_min().unwrap() - 0.5).abs() < 1e-15);
        assert!(!gm.ridge_used());
    }

    #[test]
    fn gkc_of_half_identity() {
        let n = 6;
        let gm = half_identity(n);
        let ones = LabelMatrix {
            columns: vec![vec![1.0; n]],
            encoding: Encoding::ScalarTruth,
        };
        let v = gkc(&gm, &ones).unwrap();
        assert!((v.value - 4.0).abs() < 1e-14);
        let zero = LabelMatrix {
            columns: vec![vec![0.0; n]],
            encoding: Encoding::ScalarTruth,
        };
        assert_eq!(gkc(&gm, &zero).unwrap().value, 0.0);
        let short = LabelMatrix {
            columns: vec![vec![0.0; n - 1]],
            encoding: Encoding::ScalarTruth,
        };
        assert!(matches!(gkc(&gm, &short), Err(Error::Shape { .. })));
    }

    #[test]
    fn solve_small_cases() {
        let gm = half_identity(3);
        assert_eq!(solve_spd(&gm, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let z = solve_spd(&gm, &[1.0, 0.0, 0.0]).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-15 && z[1] == 0.0 && z[2] == 0.0);
    }

    #[test]
    fn duplicate_rows_trigger_ridge() {
        let r = 1.0 / 2f64.sqrt();
        let x = Matrix::from_rows(&[vec![r, r], vec![r, r], vec![1.0, 0.0]]).unwrap();
        let xt = AggregatedFeatures::from_unit_rows(x).unwrap();
        let gm = gram_matrix(&xt).unwrap();
        assert!(gm.lambda_min().unwrap().abs() < 1e-10);
        assert!(gm.ridge_used());
        assert!((gm.ridge() - 1e-8 * 0.5).abs() < 1e-20);
        let labels = encode_labels(
            LabelSource::<f64>::from_classes(&[0, 1, 1]),
            Encoding::OneHot,
        )
        .unwrap();
        assert!(gkc(&gm, &labels).unwrap().ridge_used);
    }

    #[test]
    fn gram_dump_round_trip() {
        let gm = half_identity(3);
        let mut buf = Vec::new();
        write_gram(gm.h(), &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 9 * 8);
        assert_eq!(&buf[..4], b"GKGM");
        let back: Matrix<f64> = read_gram(&buf[..]).unwrap();
        assert_eq!(&back, gm.h());
        assert!(read_gram::<f64, _>(&[b'X'; 16][..]).is_err());
        assert!(read_gram::<f64, _>(&buf[..40]).is_err());
    }
}
