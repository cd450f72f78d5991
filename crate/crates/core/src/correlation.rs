//! Power spectral densities of the stiffness fluctuations (Markov model).

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::material::SymmetryClass;
use crate::quadrature::adaptive_integrate;

/// Tolerance for symmetry and semidefiniteness of the coefficient matrix,
/// relative to its largest entry.
pub const RHO_TOL: f64 = 1.0e-12;

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error("correlation length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error(
        "coefficient matrix is {got}x{got}, fluctuation class {class} needs {expected}x{expected}"
    )]
    Dimension {
        class: SymmetryClass,
        expected: usize,
        got: usize,
    },
    #[error("coefficient matrix is not square")]
    NotSquare,
    #[error("coefficient matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("coefficient matrix is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NotSemidefinite(f64),
    #[error("coefficient matrix has non-finite entries")]
    NonFinite,
    #[error("channel index ({0}, {1}) out of range for {2} constants")]
    IndexOutOfRange(usize, usize, usize),
    #[error("unknown correlation kind {0:?}")]
    UnknownKind(String),
    #[error("cannot read correlation file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed correlation JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Markov,
}

/// On-disk form: `{"kind": "markov", "a_m": .., "class": .., "rho": [[..]]}`.
/// `rho` may be omitted for the all-ones default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFile {
    pub kind: String,
    pub a_m: f64,
    pub class: SymmetryClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<f64>>>,
}

/// Markov correlation model with a single correlation length `a` and a
/// matrix of correlation coefficients between the fluctuation constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationModel {
    a: f64,
    class: SymmetryClass,
    rho: DMatrix<f64>,
    kind: CorrelationKind,
}

impl CorrelationModel {
    pub fn markov(
        a: f64,
        class: SymmetryClass,
        rho: DMatrix<f64>,
    ) -> Result<Self, CorrelationError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(CorrelationError::BadLength(a));
        }
        if !rho.is_square() {
            return Err(CorrelationError::NotSquare);
        }
        let n = class.n_constants();
        if rho.nrows() != n {
            return Err(CorrelationError::Dimension {
                class,
                expected: n,
                got: rho.nrows(),
            });
        }
        if rho.iter().any(|x| !x.is_finite()) {
            return Err(CorrelationError::NonFinite);
        }
        let scale = rho.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (rho[(i, j)] - rho[(j, i)]).abs() > RHO_TOL * scale {
                    return Err(CorrelationError::NotSymmetric(i, j));
                }
            }
        }
        let min_eig = SymmetricEigen::new(rho.clone()).eigenvalues.min();
        if min_eig < -RHO_TOL * scale * n as f64 {
            return Err(CorrelationError::NotSemidefinite(min_eig));
        }
        Ok(Self {
            a,
            class,
            rho,
            kind: CorrelationKind::Markov,
        })
    }

    /// All coefficients equal to one: fully correlated fluctuations.
    pub fn all_ones(a: f64, class: SymmetryClass) -> Result<Self, CorrelationError> {
        let n = class.n_constants();
        Self::markov(a, class, DMatrix::from_element(n, n, 1.0))
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Effective length `6^(-1/3) a`.
    pub fn lbar(&self) -> f64 {
        self.a / 6f64.cbrt()
    }

    pub fn class(&self) -> SymmetryClass {
        self.class
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn kind(&self) -> CorrelationKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.rho.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.rho.iter().all(|&x| x == 0.0)
    }

    /// `lbar^3 / pi^2 / (1 + (lbar |q|)^2)^2`, the spectral profile shared by all pairs [m^3].
    pub fn profile(&self, q_norm: f64) -> f64 {
        let l = self.lbar();
        let s = 1.0 + (l * q_norm).powi(2);
        l.powi(3) / (PI * PI) / (s * s)
    }

    /// Power spectral density of the pair (m, n) at wave vector `q` [m^3].
    pub fn psd(&self, m: usize, n: usize, q: &Vector3<f64>) -> Result<f64, CorrelationError> {
        let size = self.n();
        if m >= size || n >= size {
            return Err(CorrelationError::IndexOutOfRange(m, n, size));
        }
        Ok(self.rho[(m, n)] * self.profile(q.norm()))
    }

    /// Same model with coefficients multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self, CorrelationError> {
        Self::markov(self.a, self.class, &self.rho * s)
    }

    /// Same coefficients with correlation length `a`.
    pub fn with_length(&self, a: f64) -> Result<Self, CorrelationError> {
        Self::markov(a, self.class, self.rho.clone())
    }

    /// `int y^2 dy int dOmega rho_00 exp(-y / lbar)`, radial part by adaptive quadrature.
    pub fn normalization_integral(&self) -> f64 {
        let l = self.lbar();
        let rho = self.rho[(0, 0)];
        let radial =
            adaptive_integrate(|y| y * y * (-y / l).exp(), 0.0, 60.0 * l, 1e-14 * l.powi(3));
        4.0 * PI * rho * radial
    }

    /// Relative residual of the normalization identity
    /// `int y^2 dy int dOmega rho exp(-y/lbar) = (4/3) pi a^3 rho`.
    pub fn normalization_check(&self) -> f64 {
        let exact = 4.0 / 3.0 * PI * self.a.powi(3) * self.rho[(0, 0)];
        let got = self.normalization_integral();
        if exact == 0.0 {
            return got.abs();
        }
        ((got - exact) / exact).abs()
    }

    pub fn from_file_data(file: &CorrelationFile) -> Result<Self, CorrelationError> {
        if file.kind != "markov" {
            return Err(CorrelationError::UnknownKind(file.kind.clone()));
        }
        match &file.rho {
            None => Self::all_ones(file.a_m, file.class),
            Some(rows) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(CorrelationError::NotSquare);
                }
                let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                Self::markov(file.a_m, file.class, m)
            }
        }
    }

    pub fn to_file_data(&self) -> CorrelationFile {
        let n = self.n();
        CorrelationFile {
            kind: "markov".into(),
            a_m: self.a,
            class: self.class,
            rho: Some(
                (0..n)
                    .map(|i| (0..n).map(|j| self.rho[(i, j)]).collect())
                    .collect(),
            ),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CorrelationError> {
        let text = std::fs::read_to_string(path)?;
        let file: CorrelationFile = serde_json::from_str(&text)?;
        Self::from_file_data(&file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_examples() {
        let m = CorrelationModel::all_ones(1e-3, SymmetryClass::Cubic).unwrap();
        let l = m.lbar();
        let p0 = m.psd(0, 1, &Vector3::zeros()).unwrap();
        assert!((p0 - l.powi(3) / (PI * PI)).abs() <= 1e-15 * p0);
        let p1 = m.psd(2, 2, &Vector3::new(0.0, 1.0 / l, 0.0)).unwrap();
        assert!((p1 - p0 / 4.0).abs() <= 1e-15 * p0);
        let q = Vector3::new(300.0, -20.0, 5.0);
        assert_eq!(m.psd(0, 0, &q).unwrap(), m.psd(0, 0, &-q).unwrap());
        assert!(matches!(
            m.psd(3, 0, &q),
            Err(CorrelationError::IndexOutOfRange(3, 0, 3))
        ));
        let zero =
            CorrelationModel::markov(1.0, SymmetryClass::Isotropic, DMatrix::zeros(2, 2)).unwrap();
        assert!(zero.is_zero());
        assert_eq!(zero.psd(0, 1, &q).unwrap(), 0.0);
    }

    #[test]
    fn lbar_cubed() {
        let m = CorrelationModel::all_ones(2.0, SymmetryClass::Isotropic).unwrap();
        assert!((m.lbar().powi(3) - 8.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn validation() {
        let c = SymmetryClass::Isotropic;
        assert!(matches!(
            CorrelationModel::all_ones(0.0, c),
            Err(CorrelationError::BadLength(_))
        ));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            CorrelationModel::markov(1.0, c, bad),
            Err(CorrelationError::NotSymmetric(0, 1))
        ));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            CorrelationModel::markov(1.0, c, indef),
            Err(CorrelationError::NotSemidefinite(_))
        ));
        let wrong = DMatrix::identity(3, 3);
        assert!(matches!(
            CorrelationModel::markov(1.0, c, wrong),
            Err(CorrelationError::Dimension { .. })
        ));
    }

    #[test]
    fn normalization() {
        let m = CorrelationModel::all_ones(1.0, SymmetryClass::Isotropic).unwrap();
        assert!(m.normalization_check() < 1e-8);
        let v1 = m.normalization_integral();
        let v2 = m.with_length(2.0).unwrap().normalization_integral();
        assert!((v2 / v1 - 8.0).abs() < 1e-8);
        let half = m.scaled(0.5).unwrap();
        assert!((half.normalization_integral() / v1 - 0.5).abs() < 1e-12);
        assert!(half.normalization_check() < 1e-8);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"kind":"markov","a_m":0.001,"class":"cubic"}"#;
        let f: CorrelationFile = serde_json::from_str(text).unwrap();
        let m = CorrelationModel::from_file_data(&f).unwrap();
        assert_eq!(m.n(), 3);
        let back = CorrelationModel::from_file_data(&m.to_file_data()).unwrap();
        assert_eq!(back, m);
        let f = CorrelationFile {
            kind: "gaussian".into(),
            ..f
        };
        assert!(matches!(
            CorrelationModel::from_file_data(&f),
            Err(CorrelationError::UnknownKind(_))
        ));
    }
}
