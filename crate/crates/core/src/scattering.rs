//! Scattering symbols, differential cross-sections `sigma_ab(k, q)`, partial
//! and total cross-sections, and their normalized form.
//!
//! Fluctuation constants are measured in GPa: a coefficient matrix of all ones
//! describes unit (GPa)^2 variance, and every cross-section is reported per
//! that unit.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::christoffel::{
    decompose, detect_acoustic_axes, AxisReport, ChristoffelError, ModeDecomposition, AXIS_TOL,
};
use crate::correlation::CorrelationModel;
use crate::material::{BlockedStiffness, ElasticityMatrix, SymmetryClass, GPA};
use crate::quadrature::{QuadratureError, SphereRule};

pub mod isotropic;

#[derive(Debug, Error, PartialEq)]
pub enum ScatteringError {
    #[error(transparent)]
    Christoffel(#[from] ChristoffelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("constant index {index} out of range for fluctuation class {class}")]
    BadConstant { class: SymmetryClass, index: usize },
    #[error("mode index {0} out of range 0..3")]
    BadMode(usize),
    #[error("frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("no fluctuations: total cross-section vanishes, normalized cross-sections undefined")]
    NoFluctuations,
    #[error("quadrature under-resolved: doubling the orders changes the cross-sections by {0:.3e} (relative)")]
    Unconverged(f64),
}

/// Sparse blocked forms of the canonical unit stiffnesses of a fluctuation
/// class, in Pa per GPa of the constant.
#[derive(Debug, Clone)]
pub struct FluctuationBasis {
    class: SymmetryClass,
    entries: Vec<Vec<(usize, usize, f64)>>,
}

impl FluctuationBasis {
    pub fn new(class: SymmetryClass) -> Self {
        let entries = (0..class.n_constants())
            .map(|m| {
                let unit = class.unit_stiffness(m).expect("index within class") * GPA;
                let b = BlockedStiffness::from_voigt(&unit);
                let mut e = Vec::new();
                for (r, row) in b.blocks.iter().enumerate() {
                    for (s, &x) in row.iter().enumerate() {
                        if x != 0.0 {
                            e.push((r, s, x));
                        }
                    }
                }
                e
            })
            .collect();
        Self { class, entries }
    }

    pub fn class(&self) -> SymmetryClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `E_m w` as a 9-vector.
    pub fn apply(&self, m: usize, w: &[f64; 9]) -> [f64; 9] {
        let mut out = [0.0; 9];
        for &(r, s, x) in &self.entries[m] {
            out[r] += x * w[s];
        }
        out
    }

    /// `u^T E_m w`.
    pub fn bilinear(&self, m: usize, u: &[f64; 9], w: &[f64; 9]) -> f64 {
        self.entries[m]
            .iter()
            .map(|&(r, s, x)| u[r] * x * w[s])
            .sum()
    }
}

/// The 9-vector `e (x) k` with entry `3i + j` equal to `e_i k_j`.
pub fn dyad(e: &Vector3<f64>, k: &Vector3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = e[i] * k[j];
        }
    }
    out
}

fn dot9(a: &[f64; 9], b: &[f64; 9]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_mode(alpha: usize) -> Result<(), ScatteringError> {
    if alpha > 2 {
        Err(ScatteringError::BadMode(alpha))
    } else {
        Ok(())
    }
}

fn check_omega(omega: f64) -> Result<(), ScatteringError> {
    if omega.is_finite() && omega > 0.0 {
        Ok(())
    } else {
        Err(ScatteringError::BadFrequency(omega))
    }
}

/// `h^(m)_ab(k, q) = rho^-1 (e_a(k) (x) k)^T E_m (e_b(q) (x) q)` for the given
/// polarizations.
pub fn symbol_with_polarizations(
    material: &ElasticityMatrix,
    basis: &FluctuationBasis,
    m: usize,
    k: &Vector3<f64>,
    e_alpha: &Vector3<f64>,
    q: &Vector3<f64>,
    e_beta: &Vector3<f64>,
) -> Result<f64, ScatteringError> {
    if m >= basis.len() {
        return Err(ScatteringError::BadConstant {
            class: basis.class(),
            index: m,
        });
    }
    Ok(basis.bilinear(m, &dyad(e_alpha, k), &dyad(e_beta, q)) / material.density())
}

/// Scattering symbol `h^(m)_ab(k, q)` with the mode polarizations of
/// `material` at `k` and `q` (deterministic basis at degeneracies).
pub fn basis_symbol(
    material: &ElasticityMatrix,
    class: SymmetryClass,
    m: usize,
    k: &Vector3<f64>,
    alpha: usize,
    q: &Vector3<f64>,
    beta: usize,
) -> Result<f64, ScatteringError> {
    check_mode(alpha)?;
    check_mode(beta)?;
    let dk = decompose(material, k)?;
    let dq = decompose(material, q)?;
    let basis = FluctuationBasis::new(class);
    symbol_with_polarizations(
        material,
        &basis,
        m,
        k,
        &dk.polarizations[alpha],
        q,
        &dq.polarizations[beta],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DifferentialXs {
    pub value: f64,
    /// Incoming or outgoing mode lies on an acoustic axis; the value uses the
    /// deterministic transverse basis.
    pub degenerate: bool,
}

/// Scattering kernel for one background material and one correlation model.
#[derive(Debug, Clone)]
pub struct Kernel<'a> {
    pub material: &'a ElasticityMatrix,
    pub corr: &'a CorrelationModel,
    pub basis: FluctuationBasis,
}

impl<'a> Kernel<'a> {
    pub fn new(material: &'a ElasticityMatrix, corr: &'a CorrelationModel) -> Self {
        Self {
            material,
            corr,
            basis: FluctuationBasis::new(corr.class()),
        }
    }

    /// `sum_mn rho_mn h_m h_n` for unit-modulus wave vectors.
    fn quadratic(&self, h: &[f64]) -> f64 {
        let rho = self.corr.rho();
        let n = h.len();
        let mut s = 0.0;
        for i in 0..n {
            let mut t = 0.0;
            for j in 0..n {
                t += rho[(i, j)] * h[j];
            }
            s += h[i] * t;
        }
        // rho is semidefinite; negative values are rounding
        s.max(0.0)
    }

    /// `sigma` for explicit wave vectors and polarizations:
    /// `pi / (2 w_k w_q) R(|k - q|) sum_mn rho_mn h_m h_n`.
    pub fn sigma_raw(
        &self,
        k: &Vector3<f64>,
        e_alpha: &Vector3<f64>,
        omega_k: f64,
        q: &Vector3<f64>,
        e_beta: &Vector3<f64>,
        omega_q: f64,
    ) -> f64 {
        let u = dyad(e_alpha, k);
        let w = dyad(e_beta, q);
        let rho = self.material.density();
        let h: Vec<f64> = (0..self.basis.len())
            .map(|m| self.basis.bilinear(m, &u, &w) / rho)
            .collect();
        PI / (2.0 * omega_k * omega_q) * self.corr.profile((k - q).norm()) * self.quadratic(&h)
    }

    /// On-shell `sigma_ab(omega k_hat / c_a, omega q_hat / c_b)`.
    pub fn differential(
        &self,
        omega: f64,
        k_hat: &Vector3<f64>,
        alpha: usize,
        q_hat: &Vector3<f64>,
        beta: usize,
    ) -> Result<DifferentialXs, ScatteringError> {
        check_omega(omega)?;
        check_mode(alpha)?;
        check_mode(beta)?;
        let dk = decompose(self.material, k_hat)?;
        let dq = decompose(self.material, q_hat)?;
        Ok(self.differential_decomposed(omega, &dk, alpha, &dq, beta))
    }

    pub fn differential_decomposed(
        &self,
        omega: f64,
        dk: &ModeDecomposition,
        alpha: usize,
        dq: &ModeDecomposition,
        beta: usize,
    ) -> DifferentialXs {
        let k = dk.direction * (omega / dk.speeds[alpha]);
        let q = dq.direction * (omega / dq.speeds[beta]);
        let value = self.sigma_raw(
            &k,
            &dk.polarizations[alpha],
            omega,
            &q,
            &dq.polarizations[beta],
            omega,
        );
        DifferentialXs {
            value,
            degenerate: dk.isolation(alpha) <= AXIS_TOL || dq.isolation(beta) <= AXIS_TOL,
        }
    }
}

/// On-shell differential cross-section `sigma_ab` at frequency `omega`.
pub fn differential_xsection(
    material: &ElasticityMatrix,
    corr: &CorrelationModel,
    omega: f64,
    k_hat: &Vector3<f64>,
    alpha: usize,
    q_hat: &Vector3<f64>,
    beta: usize,
) -> Result<DifferentialXs, ScatteringError> {
    Kernel::new(material, corr).differential(omega, k_hat, alpha, q_hat, beta)
}

/// Default base resolution and panel order of [`cross_section_rule`].
pub const DEFAULT_GRADED: (usize, usize) = (4, 8);

/// Panels are refined until their side is below this multiple of the local
/// relative speed gap.
const GAP_FEATURE_SCALE: f64 = 5.0;

/// Graded cubed-sphere rule for shell integrals over `material`: panels are
/// refined geometrically towards every acoustic axis (and its antipode), where
/// the integrand has direction-dependent point singularities, and towards
/// narrow near-degenerate valleys between them.
pub fn cross_section_rule(
    material: &ElasticityMatrix,
    n_base: usize,
    order: usize,
) -> Result<SphereRule, ScatteringError> {
    match detect_acoustic_axes(material, 2.0, AXIS_TOL) {
        AxisReport::DegenerateEverywhere => Ok(SphereRule::graded(&[], n_base, order)?),
        AxisReport::Axes(axes) => {
            let mut points = Vec::with_capacity(2 * axes.len());
            for a in &axes {
                let v = Vector3::from(a.direction);
                points.push(v);
                points.push(-v);
            }
            let feature = |x: &Vector3<f64>| match decompose(material, x) {
                Ok(d) => GAP_FEATURE_SCALE * d.relative_gap(0, 1).min(d.relative_gap(1, 2)),
                Err(_) => 0.0,
            };
            Ok(SphereRule::graded_with_features(
                &points, n_base, order, feature,
            )?)
        }
    }
}

/// Outgoing-side mode data at every node of a sphere rule, computed once per
/// material.
#[derive(Debug, Clone)]
pub struct OutgoingNodes {
    pub directions: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    /// Phase speeds per node.
    pub speeds: Vec<[f64; 3]>,
    pub polarizations: Vec<[Vector3<f64>; 3]>,
    pub orders: (usize, usize),
}

impl OutgoingNodes {
    pub fn new(material: &ElasticityMatrix, rule: &SphereRule) -> Result<Self, ScatteringError> {
        let decs: Vec<ModeDecomposition> = rule
            .nodes()
            .par_iter()
            .map(|n| decompose(material, n))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            directions: decs.iter().map(|d| d.direction).collect(),
            weights: rule.weights().to_vec(),
            speeds: decs.iter().map(|d| d.speeds).collect(),
            polarizations: decs.iter().map(|d| d.polarizations).collect(),
            orders: rule.orders(),
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// Sphere integrator for partial cross-sections of one material/correlation pair.
#[derive(Debug, Clone)]
pub struct CrossSections<'a> {
    pub kernel: Kernel<'a>,
    pub nodes: OutgoingNodes,
}

impl<'a> CrossSections<'a> {
    pub fn new(
        material: &'a ElasticityMatrix,
        corr: &'a CorrelationModel,
        rule: &SphereRule,
    ) -> Result<Self, ScatteringError> {
        let kernel = Kernel::new(material, corr);
        let nodes = OutgoingNodes::new(material, rule)?;
        Ok(Self { kernel, nodes })
    }

    /// Per-node contributions `2 pi omega^2 w_j c_b(q_j)^-3 sigma_ab(k, q_j)` for
    /// all three outgoing modes, in node order.
    pub fn node_rates(&self, omega: f64, dk: &ModeDecomposition, alpha: usize) -> Vec<[f64; 3]> {
        let rho = self.kernel.material.density();
        let n = self.kernel.basis.len();
        let c_a = dk.speeds[alpha];
        let k = dk.direction * (omega / c_a);
        let u = dyad(&dk.polarizations[alpha], &dk.direction);
        // E_m is symmetric, so u^T E_m w = (E_m u) . w
        let v: Vec<[f64; 9]> = (0..n).map(|m| self.kernel.basis.apply(m, &u)).collect();
        let mut h = vec![0.0; n];
        (0..self.nodes.len())
            .map(|j| {
                let dir = self.nodes.directions[j];
                let mut out = [0.0; 3];
                for (b, o) in out.iter_mut().enumerate() {
                    let c_b = self.nodes.speeds[j][b];
                    let q = dir * (omega / c_b);
                    let w = dyad(&self.nodes.polarizations[j][b], &dir);
                    for (hm, vm) in h.iter_mut().zip(&v) {
                        *hm = dot9(vm, &w);
                    }
                    let scale = (omega / c_a) * (omega / c_b) / rho;
                    let sigma = PI / (2.0 * omega * omega)
                        * self.kernel.corr.profile((k - q).norm())
                        * self.kernel.quadratic(&h)
                        * scale
                        * scale;
                    *o = 2.0 * PI * omega * omega * self.nodes.weights[j] * sigma / c_b.powi(3);
                }
                out
            })
            .collect()
    }

    /// `Sigma_ab(k_hat)` for b = 0, 1, 2, accumulated sequentially in node order.
    pub fn partial(&self, omega: f64, dk: &ModeDecomposition, alpha: usize) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for r in self.node_rates(omega, dk, alpha) {
            for b in 0..3 {
                acc[b] += r[b];
            }
        }
        acc
    }
}

/// `Sigma_ab(k_hat)` at frequency `omega` by the sphere rule.
pub fn partial_total_xsection(
    material: &ElasticityMatrix,
    corr: &CorrelationModel,
    omega: f64,
    k_hat: &Vector3<f64>,
    alpha: usize,
    beta: usize,
    rule: &SphereRule,
) -> Result<f64, ScatteringError> {
    check_omega(omega)?;
    check_mode(alpha)?;
    check_mode(beta)?;
    let xs = CrossSections::new(material, corr, rule)?;
    let dk = decompose(material, k_hat)?;
    Ok(xs.partial(omega, &dk, alpha)[beta])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalXs {
    /// `Sigma_a = sum_b Sigma_ab` [1/s per (GPa)^2].
    pub total: f64,
    pub partial: [f64; 3],
    /// `Sigma_ab / Sigma_a`.
    pub normalized: [f64; 3],
}

impl TotalXs {
    pub fn from_partial(partial: [f64; 3]) -> Result<Self, ScatteringError> {
        let total = partial[0] + partial[1] + partial[2];
        if !(total > 0.0) {
            return Err(ScatteringError::NoFluctuations);
        }
        Ok(Self {
            total,
            partial,
            normalized: partial.map(|p| p / total),
        })
    }
}

/// `Sigma_a` and `Sigma#_a.` at frequency `omega`.
pub fn total_xsection(
    material: &ElasticityMatrix,
    corr: &CorrelationModel,
    omega: f64,
    k_hat: &Vector3<f64>,
    alpha: usize,
    rule: &SphereRule,
) -> Result<TotalXs, ScatteringError> {
    check_omega(omega)?;
    check_mode(alpha)?;
    if corr.is_zero() {
        return Err(ScatteringError::NoFluctuations);
    }
    let xs = CrossSections::new(material, corr, rule)?;
    let dk = decompose(material, k_hat)?;
    TotalXs::from_partial(xs.partial(omega, &dk, alpha))
}

/// Cross-sections over a set of incoming directions at fixed `a |k|`; the
/// frequency of mode `a` along `k_hat` is `c_a(k_hat) |k|` with `|k| = ak / a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossSectionTable {
    pub ak: f64,
    pub rule_orders: (usize, usize),
    pub directions: Vec<[f64; 3]>,
    /// `[direction][alpha][beta]`.
    pub partial: Vec<[[f64; 3]; 3]>,
    /// `[direction][alpha]`.
    pub total: Vec<[f64; 3]>,
    pub normalized: Vec<[[f64; 3]; 3]>,
    /// `[direction][alpha]`: incoming mode on an acoustic axis.
    pub degenerate: Vec<[bool; 3]>,
}

impl CrossSectionTable {
    pub fn compute(
        material: &ElasticityMatrix,
        corr: &CorrelationModel,
        ak: f64,
        directions: &[Vector3<f64>],
        rule: &SphereRule,
    ) -> Result<Self, ScatteringError> {
        if corr.is_zero() {
            return Err(ScatteringError::NoFluctuations);
        }
        let k_norm = ak / corr.a();
        check_omega(k_norm)?;
        let xs = CrossSections::new(material, corr, rule)?;
        let rows: Vec<([[f64; 3]; 3], [f64; 3], [[f64; 3]; 3], [bool; 3], [f64; 3])> = directions
            .par_iter()
            .map(|dir| {
                let dk = decompose(material, dir)?;
                let mut partial = [[0.0; 3]; 3];
                let mut total = [0.0; 3];
                let mut normalized = [[0.0; 3]; 3];
                let mut degenerate = [false; 3];
                for alpha in 0..3 {
                    let omega = dk.speeds[alpha] * k_norm;
                    let t = TotalXs::from_partial(xs.partial(omega, &dk, alpha))?;
                    partial[alpha] = t.partial;
                    total[alpha] = t.total;
                    normalized[alpha] = t.normalized;
                    degenerate[alpha] = dk.isolation(alpha) <= AXIS_TOL;
                }
                let d = dk.direction;
                Ok((partial, total, normalized, degenerate, [d[0], d[1], d[2]]))
            })
            .collect::<Result<_, ScatteringError>>()?;
        let mut table = Self {
            ak,
            rule_orders: rule.orders(),
            directions: Vec::with_capacity(rows.len()),
            partial: Vec::with_capacity(rows.len()),
            total: Vec::with_capacity(rows.len()),
            normalized: Vec::with_capacity(rows.len()),
            degenerate: Vec::with_capacity(rows.len()),
        };
        for (p, t, n, d, dir) in rows {
            table.partial.push(p);
            table.total.push(t);
            table.normalized.push(n);
            table.degenerate.push(d);
            table.directions.push(dir);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Largest relative difference of `Sigma_ab` against another table on the
    /// same directions, skipping entries flagged degenerate in either table.
    pub fn max_relative_difference(&self, other: &Self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.len().min(other.len()) {
            for a in 0..3 {
                if self.degenerate[i][a] || other.degenerate[i][a] {
                    continue;
                }
                let scale = self.total[i][a].abs().max(other.total[i][a].abs());
                for b in 0..3 {
                    let d = (self.partial[i][a][b] - other.partial[i][a][b]).abs();
                    worst = worst.max(d / scale);
                }
            }
        }
        worst
    }
}

/// Relative change of the partial cross-sections between `rule` and the rule
/// with doubled orders, over `directions`.
pub fn convergence_check(
    material: &ElasticityMatrix,
    corr: &CorrelationModel,
    ak: f64,
    directions: &[Vector3<f64>],
    rule: &SphereRule,
) -> Result<f64, ScatteringError> {
    let coarse = CrossSectionTable::compute(material, corr, ak, directions, rule)?;
    let fine = CrossSectionTable::compute(material, corr, ak, directions, &rule.refined())?;
    Ok(coarse.max_relative_difference(&fine))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReciprocityReport {
    /// `max |sigma_ab(k, q) - sigma_ba(q, k)| / max(|.|)`.
    pub swap: f64,
    /// `max |sigma_ab(k, q) - sigma_ba(-q, -k)| / max(|.|)`.
    pub reversal: f64,
    pub samples: usize,
}

impl ReciprocityReport {
    pub fn max_violation(&self) -> f64 {
        self.swap.max(self.reversal)
    }
}

fn relative(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Random unit vector from two uniform draws.
pub fn random_direction<R: Rng>(rng: &mut R) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Evaluates both reciprocity relations on `samples` random on-shell channels.
pub fn reciprocity_check(
    material: &ElasticityMatrix,
    corr: &CorrelationModel,
    omega: f64,
    samples: usize,
    seed: u64,
) -> Result<ReciprocityReport, ScatteringError> {
    check_omega(omega)?;
    let kernel = Kernel::new(material, corr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ReciprocityReport {
        swap: 0.0,
        reversal: 0.0,
        samples,
    };
    for _ in 0..samples {
        let k_hat = random_direction(&mut rng);
        let q_hat = random_direction(&mut rng);
        let alpha = rng.random_range(0..3);
        let beta = rng.random_range(0..3);
        let forward = kernel
            .differential(omega, &k_hat, alpha, &q_hat, beta)?
            .value;
        let swapped = kernel
            .differential(omega, &q_hat, beta, &k_hat, alpha)?
            .value;
        let reversed = kernel
            .differential(omega, &-q_hat, beta, &-k_hat, alpha)?
            .value;
        report.swap = report.swap.max(relative(forward, swapped));
        report.reversal = report.reversal.max(relative(forward, reversed));
    }
    Ok(report)
}
