//! Elasticity tensors in Voigt and blocked form, symmetry-class constructors,
//! stability checks and the built-in material database.
//!
//! Constants are stored internally in Pa. Material files and the CLI use GPa.

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One gigapascal in pascal.
pub const GPA: f64 = 1.0e9;

/// Relative tolerance on the smallest Voigt eigenvalue for positive definiteness.
pub const PD_RELATIVE_TOL: f64 = 1.0e-9;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("tensor index ({0}, {1}) out of range 1..=3")]
    IndexOutOfRange(usize, usize),
    #[error("density must be positive and finite, got {0}")]
    InvalidDensity(f64),
    #[error("{class} takes {expected} constants, got {got}")]
    ConstantCount {
        class: SymmetryClass,
        expected: usize,
        got: usize,
    },
    #[error("non-finite elastic constant at position {0}")]
    NonFinite(usize),
    #[error("unstable material: {}", .0.join("; "))]
    Unstable(Vec<String>),
    #[error("unknown material '{0}'")]
    Unknown(String),
    #[error("unknown symmetry class '{0}'")]
    UnknownClass(String),
    #[error("material file: {0}")]
    Io(#[from] std::io::Error),
    #[error("material file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Elastic symmetry class. Also used to tag the class of the fluctuation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    Isotropic,
    Cubic,
    TransverseIsotropic,
    Orthotropic,
    Triclinic,
}

impl fmt::Display for SymmetryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SymmetryClass::Isotropic => "isotropic",
            SymmetryClass::Cubic => "cubic",
            SymmetryClass::TransverseIsotropic => "transverse_isotropic",
            SymmetryClass::Orthotropic => "orthotropic",
            SymmetryClass::Triclinic => "triclinic",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SymmetryClass {
    type Err = MaterialError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "isotropic" | "iso" => Ok(SymmetryClass::Isotropic),
            "cubic" => Ok(SymmetryClass::Cubic),
            "transverse_isotropic" | "ti" | "hexagonal" => Ok(SymmetryClass::TransverseIsotropic),
            "orthotropic" | "orthorhombic" => Ok(SymmetryClass::Orthotropic),
            "triclinic" => Ok(SymmetryClass::Triclinic),
            _ => Err(MaterialError::UnknownClass(s.to_string())),
        }
    }
}

impl SymmetryClass {
    pub const ALL: [SymmetryClass; 5] = [
        SymmetryClass::Isotropic,
        SymmetryClass::Cubic,
        SymmetryClass::TransverseIsotropic,
        SymmetryClass::Orthotropic,
        SymmetryClass::Triclinic,
    ];

    /// Number of independent elastic constants of the class.
    pub fn n_constants(self) -> usize {
        match self {
            SymmetryClass::Isotropic => 2,
            SymmetryClass::Cubic => 3,
            SymmetryClass::TransverseIsotropic => 5,
            SymmetryClass::Orthotropic => 9,
            SymmetryClass::Triclinic => 21,
        }
    }

    /// Voigt matrix of the class pattern for the given constants.
    ///
    /// Isotropic constants are `[lambda, mu]`; triclinic constants are the 21
    /// entries of the Voigt upper triangle in row-major order.
    pub fn voigt_pattern(self, c: &[f64]) -> Result<Matrix6<f64>, MaterialError> {
        if c.len() != self.n_constants() {
            return Err(MaterialError::ConstantCount {
                class: self,
                expected: self.n_constants(),
                got: c.len(),
            });
        }
        let mut v = Matrix6::zeros();
        match self {
            SymmetryClass::Isotropic => {
                let (lambda, mu) = (c[0], c[1]);
                for i in 0..3 {
                    for j in 0..3 {
                        v[(i, j)] = lambda;
                    }
                    v[(i, i)] = lambda + 2.0 * mu;
                    v[(i + 3, i + 3)] = mu;
                }
            }
            SymmetryClass::Cubic => {
                for i in 0..3 {
                    for j in 0..3 {
                        v[(i, j)] = if i == j { c[0] } else { c[1] };
                    }
                    v[(i + 3, i + 3)] = c[2];
                }
            }
            SymmetryClass::TransverseIsotropic => {
                v[(0, 0)] = c[0];
                v[(1, 1)] = c[0];
                v[(0, 1)] = c[1];
                v[(1, 0)] = c[1];
                v[(0, 2)] = c[2];
                v[(2, 0)] = c[2];
                v[(1, 2)] = c[2];
                v[(2, 1)] = c[2];
                v[(2, 2)] = c[3];
                v[(3, 3)] = c[4];
                v[(4, 4)] = c[4];
                v[(5, 5)] = 0.5 * (c[0] - c[1]);
            }
            SymmetryClass::Orthotropic => {
                v[(0, 0)] = c[0];
                v[(0, 1)] = c[1];
                v[(1, 0)] = c[1];
                v[(0, 2)] = c[2];
                v[(2, 0)] = c[2];
                v[(1, 1)] = c[3];
                v[(1, 2)] = c[4];
                v[(2, 1)] = c[4];
                v[(2, 2)] = c[5];
                v[(3, 3)] = c[6];
                v[(4, 4)] = c[7];
                v[(5, 5)] = c[8];
            }
            SymmetryClass::Triclinic => {
                let mut n = 0;
                for i in 0..6 {
                    for j in i..6 {
                        v[(i, j)] = c[n];
                        v[(j, i)] = c[n];
                        n += 1;
                    }
                }
            }
        }
        Ok(v)
    }

    /// Voigt matrix of the m-th canonical unit stiffness (constant m set to one,
    /// all others zero).
    pub fn unit_stiffness(self, m: usize) -> Option<Matrix6<f64>> {
        let n = self.n_constants();
        if m >= n {
            return None;
        }
        let mut c = vec![0.0; n];
        c[m] = 1.0;
        self.voigt_pattern(&c).ok()
    }

    /// Short labels of the constants, as used in material files.
    pub fn constant_names(self) -> Vec<String> {
        match self {
            SymmetryClass::Isotropic => vec!["lambda".into(), "mu".into()],
            SymmetryClass::Triclinic => {
                let mut names = Vec::with_capacity(21);
                for i in 1..=6 {
                    for j in i..=6 {
                        names.push(format!("C{i}{j}"));
                    }
                }
                names
            }
            other => (1..=other.n_constants()).map(|i| format!("c{i}")).collect(),
        }
    }

    /// Class-specific sufficient conditions for a positive definite energy,
    /// checked in order. Returns the description of every violated inequality.
    fn class_inequalities(self, c: &[f64]) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, what: &str| {
            if !ok {
                out.push(what.to_string());
            }
        };
        match self {
            SymmetryClass::Isotropic => {
                let (l, m) = (c[0], c[1]);
                check(m > 0.0, "mu > 0");
                check(3.0 * l + 2.0 * m > 0.0, "3 lambda + 2 mu > 0");
            }
            SymmetryClass::Cubic => {
                check(c[0] - c[1] > 0.0, "c1 - c2 > 0");
                check(c[0] + 2.0 * c[1] > 0.0, "c1 + 2 c2 > 0");
                check(c[2] > 0.0, "c3 > 0");
            }
            SymmetryClass::TransverseIsotropic => {
                let (c1, c2, c3, c4, c5) = (c[0], c[1], c[2], c[3], c[4]);
                check(c1 > 0.0, "c1 > 0");
                check(c4 > 0.0, "c4 > 0");
                check(c5 > 0.0, "c5 > 0");
                check(c2 * c2 < c1 * c1, "c2^2 < c1^2");
                check(c3 * c3 < c1 * c4, "c3^2 < c1 c4");
                check(
                    2.0 * c1 * c3 * c3 + c4 * c2 * c2 - 2.0 * c2 * c3 * c3 < c1 * c1 * c4,
                    "2 c1 c3^2 + c4 c2^2 - 2 c2 c3^2 < c1^2 c4",
                );
            }
            SymmetryClass::Orthotropic => {
                let [c1, c2, c3, c4, c5, c6, c7, c8, c9] =
                    [c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8]];
                for (v, name) in [
                    (c1, "c1 > 0"),
                    (c4, "c4 > 0"),
                    (c6, "c6 > 0"),
                    (c7, "c7 > 0"),
                    (c8, "c8 > 0"),
                    (c9, "c9 > 0"),
                ] {
                    check(v > 0.0, name);
                }
                check(c2 * c2 < c1 * c4, "c2^2 < c1 c4");
                check(c3 * c3 < c1 * c6, "c3^2 < c1 c6");
                check(c5 * c5 < c4 * c6, "c5^2 < c4 c6");
                check(
                    c1 * c5 * c5 + c4 * c3 * c3 + c6 * c2 * c2 - 2.0 * c2 * c3 * c5 < c1 * c4 * c6,
                    "c1 c5^2 + c4 c3^2 + c6 c2^2 - 2 c2 c3 c5 < c1 c4 c6",
                );
            }
            SymmetryClass::Triclinic => {}
        }
        out
    }
}

/// Maps a symmetric pair of tensor axes (1-based) to the Voigt multi-index 1..=6.
pub fn voigt_index(i: usize, j: usize) -> Result<usize, MaterialError> {
    if !(1..=3).contains(&i) || !(1..=3).contains(&j) {
        return Err(MaterialError::IndexOutOfRange(i, j));
    }
    Ok(voigt0(i - 1, j - 1) + 1)
}

/// Zero-based Voigt index.
#[inline]
pub(crate) fn voigt0(i: usize, j: usize) -> usize {
    const MAP: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];
    MAP[i][j]
}

/// Stiffness tensor as a 3x3 array of 3x3 blocks: entry `[3i + j][3k + l]`
/// holds `C^{ijkl}`, so block `(i, k)` has elements `C^{ijkl}` indexed by `(j, l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockedStiffness {
    pub blocks: [[f64; 9]; 9],
}

impl BlockedStiffness {
    pub fn from_voigt(v: &Matrix6<f64>) -> Self {
        let mut blocks = [[0.0; 9]; 9];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        blocks[3 * i + j][3 * k + l] = v[(voigt0(i, j), voigt0(k, l))];
                    }
                }
            }
        }
        Self { blocks }
    }

    /// Inverse of [`BlockedStiffness::from_voigt`].
    pub fn to_voigt(&self) -> Matrix6<f64> {
        const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (2, 0), (0, 1)];
        let mut v = Matrix6::zeros();
        for (a, &(i, j)) in PAIRS.iter().enumerate() {
            for (b, &(k, l)) in PAIRS.iter().enumerate() {
                v[(a, b)] = self.blocks[3 * i + j][3 * k + l];
            }
        }
        v
    }

    #[inline]
    pub fn tensor(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.blocks[3 * i + j][3 * k + l]
    }

    /// The 3x3 block `(i, k)` (zero-based).
    pub fn block(&self, i: usize, k: usize) -> [[f64; 3]; 3] {
        let mut b = [[0.0; 3]; 3];
        for (j, row) in b.iter_mut().enumerate() {
            for (l, x) in row.iter_mut().enumerate() {
                *x = self.blocks[3 * i + j][3 * k + l];
            }
        }
        b
    }
}

/// Symmetric 6x6 Voigt stiffness with density and symmetry class.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityMatrix {
    voigt: Matrix6<f64>,
    blocked: BlockedStiffness,
    density: f64,
    class: SymmetryClass,
    constants: Vec<f64>,
}

impl ElasticityMatrix {
    /// Builds from class constants in Pa. Fails on any stability violation.
    pub fn from_constants(
        class: SymmetryClass,
        constants: &[f64],
        density: f64,
    ) -> Result<Self, MaterialError> {
        let m = Self::from_constants_unchecked(class, constants, density)?;
        let report = m.validate_stability();
        if report.is_stable() {
            Ok(m)
        } else {
            Err(MaterialError::Unstable(report.violations))
        }
    }

    /// Builds without the stability check (density and finiteness are still checked).
    pub fn from_constants_unchecked(
        class: SymmetryClass,
        constants: &[f64],
        density: f64,
    ) -> Result<Self, MaterialError> {
        if !(density.is_finite() && density > 0.0) {
            return Err(MaterialError::InvalidDensity(density));
        }
        if let Some(pos) = constants.iter().position(|c| !c.is_finite()) {
            return Err(MaterialError::NonFinite(pos));
        }
        let voigt = class.voigt_pattern(constants)?;
        Ok(Self {
            blocked: BlockedStiffness::from_voigt(&voigt),
            voigt,
            density,
            class,
            constants: constants.to_vec(),
        })
    }

    pub fn voigt(&self) -> &Matrix6<f64> {
        &self.voigt
    }

    pub fn blocked(&self) -> &BlockedStiffness {
        &self.blocked
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn class(&self) -> SymmetryClass {
        self.class
    }

    /// Class constants in Pa.
    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn to_blocked(&self) -> BlockedStiffness {
        self.blocked
    }

    /// Positive definiteness of the 6x6 form plus the class inequalities.
    pub fn validate_stability(&self) -> StabilityReport {
        let mut violations = self.class.class_inequalities(&self.constants);
        let eig = SymmetricEigen::new(self.voigt).eigenvalues;
        let max_abs = eig.iter().fold(0.0_f64, |a, &e| a.max(e.abs()));
        let min = eig.min();
        if !(min > PD_RELATIVE_TOL * max_abs) {
            violations.push(format!(
                "6x6 Voigt matrix not positive definite (smallest eigenvalue {min:.6e} Pa)"
            ));
        }
        StabilityReport { violations }
    }

    /// Cubic anisotropy factor `c1 - c2 - 2 c3`, if the class is cubic.
    pub fn anisotropy_factor(&self) -> Option<f64> {
        match self.class {
            SymmetryClass::Cubic => {
                let c = &self.constants;
                Some(c[0] - c[1] - 2.0 * c[2])
            }
            _ => None,
        }
    }
}

pub fn build_isotropic(
    lambda: f64,
    mu: f64,
    density: f64,
) -> Result<ElasticityMatrix, MaterialError> {
    ElasticityMatrix::from_constants(SymmetryClass::Isotropic, &[lambda, mu], density)
}

pub fn build_cubic(
    c1: f64,
    c2: f64,
    c3: f64,
    density: f64,
) -> Result<ElasticityMatrix, MaterialError> {
    ElasticityMatrix::from_constants(SymmetryClass::Cubic, &[c1, c2, c3], density)
}

pub fn build_transverse_isotropic(
    c: [f64; 5],
    density: f64,
) -> Result<ElasticityMatrix, MaterialError> {
    ElasticityMatrix::from_constants(SymmetryClass::TransverseIsotropic, &c, density)
}

pub fn build_orthotropic(c: [f64; 9], density: f64) -> Result<ElasticityMatrix, MaterialError> {
    ElasticityMatrix::from_constants(SymmetryClass::Orthotropic, &c, density)
}

/// Full anisotropy from the Voigt upper triangle (row-major, 21 entries).
pub fn build_triclinic(upper: [f64; 21], density: f64) -> Result<ElasticityMatrix, MaterialError> {
    ElasticityMatrix::from_constants(SymmetryClass::Triclinic, &upper, density)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StabilityReport {
    pub violations: Vec<String>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.violations.is_empty()
    }
}

/// On-disk material description. Constants in GPa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialFile {
    pub name: String,
    pub class: SymmetryClass,
    #[serde(rename = "constants_GPa")]
    pub constants_gpa: Vec<f64>,
    pub density_kg_m3: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRecord {
    pub name: String,
    pub matrix: ElasticityMatrix,
    pub note: String,
}

impl MaterialRecord {
    pub fn from_file_data(file: &MaterialFile) -> Result<Self, MaterialError> {
        let pa: Vec<f64> = file.constants_gpa.iter().map(|c| c * GPA).collect();
        Ok(Self {
            name: file.name.clone(),
            matrix: ElasticityMatrix::from_constants(file.class, &pa, file.density_kg_m3)?,
            note: file.note.clone().unwrap_or_default(),
        })
    }

    pub fn to_file_data(&self) -> MaterialFile {
        MaterialFile {
            name: self.name.clone(),
            class: self.matrix.class(),
            constants_gpa: self.matrix.constants().iter().map(|c| c / GPA).collect(),
            density_kg_m3: self.matrix.density(),
            note: (!self.note.is_empty()).then(|| self.note.clone()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, MaterialError> {
        let text = std::fs::read_to_string(path)?;
        let file: MaterialFile = serde_json::from_str(&text)?;
        Self::from_file_data(&file)
    }
}

fn builtin_files() -> Vec<MaterialFile> {
    let rec = |name: &str, class, c: &[f64], rho, note: &str| MaterialFile {
        name: name.to_string(),
        class,
        constants_gpa: c.to_vec(),
        density_kg_m3: rho,
        note: Some(note.to_string()),
    };
    vec![
        rec(
            "nickel",
            SymmetryClass::Cubic,
            &[253.0, 152.0, 124.0],
            8910.0,
            "single-crystal Ni, cubic",
        ),
        rec(
            "zinc",
            SymmetryClass::TransverseIsotropic,
            &[165.0, 31.1, 50.0, 61.8, 39.6],
            7140.0,
            "single-crystal Zn, hexagonal (transversely isotropic about e3)",
        ),
        rec(
            "celestite",
            SymmetryClass::Orthotropic,
            &[104.0, 77.0, 60.0, 106.0, 62.0, 129.0, 13.5, 27.9, 26.6],
            3960.0,
            "single-crystal SrSO4, orthorhombic; C33 = 129 and C44 = 13.5 GPa (Landolt-Boernstein)",
        ),
        rec(
            "steel",
            SymmetryClass::Isotropic,
            &[121.153_846_153_846_15, 80.769_230_769_230_77],
            7850.0,
            "reference isotropic material (E = 210 GPa, nu = 0.3)",
        ),
    ]
}

/// Built-in material records, in a fixed order.
pub fn builtin_materials() -> Vec<MaterialRecord> {
    builtin_files()
        .iter()
        .map(|f| MaterialRecord::from_file_data(f).expect("built-in materials are stable"))
        .collect()
}

pub fn builtin(name: &str) -> Result<MaterialRecord, MaterialError> {
    builtin_materials()
        .into_iter()
        .find(|r| r.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| MaterialError::Unknown(name.to_string()))
}

/// Resolves a built-in name or, failing that, a path to a material JSON file.
pub fn resolve(name_or_path: &str) -> Result<MaterialRecord, MaterialError> {
    match builtin(name_or_path) {
        Ok(r) => Ok(r),
        Err(e) => {
            let p = Path::new(name_or_path);
            if p.exists() {
                MaterialRecord::load(p)
            } else {
                Err(e)
            }
        }
    }
}
