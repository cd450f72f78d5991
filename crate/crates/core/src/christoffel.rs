//! Christoffel (acoustic) tensor, its spectral decomposition, group velocity,
//! velocity surfaces and acoustic-axis detection.

use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::LatLongGrid;
use crate::material::{ElasticityMatrix, SymmetryClass};

pub type WaveVector = Vector3<f64>;

/// Eigenvalue pairs closer than this (relative to the largest eigenvalue) are
/// treated as exactly degenerate and get the deterministic transverse basis.
pub const DEGENERACY_EIG_TOL: f64 = 1.0e-12;

/// Relative phase-speed gap below which a direction is an acoustic axis.
pub const AXIS_TOL: f64 = 1.0e-6;

/// Angular distance below which two refined axes are the same axis [rad].
pub const AXIS_MERGE_RAD: f64 = 1.0e-4;

#[derive(Debug, Error, PartialEq)]
pub enum ChristoffelError {
    #[error("wave vector must be non-zero")]
    ZeroWaveVector,
    #[error("wave vector has non-finite components")]
    NonFinite,
    #[error("mode index {0} out of range 0..3")]
    BadMode(usize),
    #[error(
        "modes {} and {} are degenerate along ({:.6}, {:.6}, {:.6}) (relative gap {gap:.3e}): acoustic axis",
        .modes.0 + 1, .modes.1 + 1, .direction[0], .direction[1], .direction[2]
    )]
    Degenerate {
        direction: [f64; 3],
        modes: (usize, usize),
        gap: f64,
    },
}

/// The 9x3 matrix stacking `k` block-diagonally.
pub fn wavevector_matrix(k: &WaveVector) -> SMatrix<f64, 9, 3> {
    let mut m = SMatrix::<f64, 9, 3>::zeros();
    for c in 0..3 {
        for r in 0..3 {
            m[(3 * c + r, c)] = k[r];
        }
    }
    m
}

fn check_vector(k: &WaveVector) -> Result<f64, ChristoffelError> {
    if !k.iter().all(|x| x.is_finite()) {
        return Err(ChristoffelError::NonFinite);
    }
    let n = k.norm();
    if n == 0.0 {
        return Err(ChristoffelError::ZeroWaveVector);
    }
    Ok(n)
}

/// `rho^-1 M(k)^T C M(k)`, assembled directly from the blocked stiffness.
pub fn christoffel(
    material: &ElasticityMatrix,
    k: &WaveVector,
) -> Result<Matrix3<f64>, ChristoffelError> {
    check_vector(k)?;
    Ok(christoffel_unchecked(material, k))
}

pub(crate) fn christoffel_unchecked(material: &ElasticityMatrix, k: &WaveVector) -> Matrix3<f64> {
    let b = &material.blocked().blocks;
    let mut g = Matrix3::zeros();
    for i in 0..3 {
        for kk in i..3 {
            let mut s = 0.0;
            for j in 0..3 {
                let row = &b[3 * i + j];
                for l in 0..3 {
                    s += row[3 * kk + l] * k[j] * k[l];
                }
            }
            g[(i, kk)] = s / material.density();
            g[(kk, i)] = g[(i, kk)];
        }
    }
    g
}

/// Closed-form Christoffel matrix for the named symmetry classes; `None` for
/// triclinic input.
pub fn christoffel_closed_form(
    material: &ElasticityMatrix,
    k: &WaveVector,
) -> Option<Matrix3<f64>> {
    let c = material.constants();
    let rho = material.density();
    let (k1, k2, k3) = (k[0], k[1], k[2]);
    let kk = k * k.transpose();
    let k2n = k.norm_squared();
    let m = match material.class() {
        SymmetryClass::Isotropic => {
            let (lambda, mu) = (c[0], c[1]);
            let cp2 = (lambda + 2.0 * mu) / rho;
            let cs2 = mu / rho;
            return Some(Matrix3::identity() * (cs2 * k2n) + kk * (cp2 - cs2));
        }
        SymmetryClass::Cubic => {
            let a = c[0] - c[1] - 2.0 * c[2];
            kk * (c[1] + c[2])
                + Matrix3::identity() * (c[2] * k2n)
                + Matrix3::from_diagonal(&Vector3::new(k1 * k1, k2 * k2, k3 * k3)) * a
        }
        SymmetryClass::TransverseIsotropic => {
            let (c1, c2, c3, c4, c5) = (c[0], c[1], c[2], c[3], c[4]);
            let c66 = 0.5 * (c1 - c2);
            let c12p = 0.5 * (c1 + c2);
            Matrix3::new(
                c1 * k1 * k1 + c66 * k2 * k2 + c5 * k3 * k3,
                c12p * k1 * k2,
                (c3 + c5) * k1 * k3,
                c12p * k1 * k2,
                c66 * k1 * k1 + c1 * k2 * k2 + c5 * k3 * k3,
                (c3 + c5) * k2 * k3,
                (c3 + c5) * k1 * k3,
                (c3 + c5) * k2 * k3,
                c5 * (k1 * k1 + k2 * k2) + c4 * k3 * k3,
            )
        }
        SymmetryClass::Orthotropic => {
            let [c1, c2, c3, c4, c5, c6, c7, c8, c9] =
                [c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8]];
            Matrix3::new(
                c1 * k1 * k1 + c9 * k2 * k2 + c8 * k3 * k3,
                (c2 + c9) * k1 * k2,
                (c3 + c8) * k1 * k3,
                (c2 + c9) * k1 * k2,
                c9 * k1 * k1 + c4 * k2 * k2 + c7 * k3 * k3,
                (c5 + c7) * k2 * k3,
                (c3 + c8) * k1 * k3,
                (c5 + c7) * k2 * k3,
                c8 * k1 * k1 + c7 * k2 * k2 + c6 * k3 * k3,
            )
        }
        SymmetryClass::Triclinic => return None,
    };
    Some(m / rho)
}

/// Deterministic orthonormal pair spanning the plane normal to `n`:
/// `z1 = normalize(n x u)` with `u = e3`, or `u = e1` when `|n . e3| > 0.9`,
/// and `z2 = n x z1`.
pub fn transverse_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let u = if n[2].abs() > 0.9 {
        Vector3::x()
    } else {
        Vector3::z()
    };
    let z1 = n.cross(&u).normalize();
    let z2 = n.cross(&z1);
    (z1, z2)
}

/// Flips `v` so that its largest-magnitude component is positive (ties go to
/// the lowest index).
pub fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let max = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let lead = v
        .iter()
        .position(|x| x.abs() >= max - 1e-12 * max)
        .unwrap_or(0);
    if v[lead] < 0.0 {
        -v
    } else {
        v
    }
}

/// Phase speeds and polarizations along one direction, modes sorted by speed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeDecomposition {
    pub direction: Vector3<f64>,
    /// Phase speeds `c1 <= c2 <= c3` [m/s].
    pub speeds: [f64; 3],
    pub polarizations: [Vector3<f64>; 3],
    /// Numerically coincident pair (zero-based) replaced by the transverse basis.
    pub degenerate: Option<(usize, usize)>,
}

impl ModeDecomposition {
    /// `omega_alpha^2` at wave number `k_norm`.
    pub fn eigenvalue(&self, alpha: usize, k_norm: f64) -> f64 {
        let w = self.speeds[alpha] * k_norm;
        w * w
    }

    pub fn projector(&self, alpha: usize) -> Matrix3<f64> {
        let e = &self.polarizations[alpha];
        e * e.transpose()
    }

    /// `(c_b - c_a) / c_b` for neighbouring modes `a < b`.
    pub fn relative_gap(&self, a: usize, b: usize) -> f64 {
        (self.speeds[b] - self.speeds[a]) / self.speeds[b]
    }

    /// Smallest relative gap between mode `alpha` and its neighbours.
    pub fn isolation(&self, alpha: usize) -> f64 {
        let mut g = f64::INFINITY;
        if alpha > 0 {
            g = g.min(self.relative_gap(alpha - 1, alpha));
        }
        if alpha < 2 {
            g = g.min(self.relative_gap(alpha, alpha + 1));
        }
        g
    }
}

/// Spectral decomposition of the Christoffel tensor along `direction`
/// (normalized internally).
pub fn decompose(
    material: &ElasticityMatrix,
    direction: &Vector3<f64>,
) -> Result<ModeDecomposition, ChristoffelError> {
    let n = check_vector(direction)?;
    let k_hat = direction / n;
    let gamma = christoffel_unchecked(material, &k_hat);
    Ok(decompose_matrix(&gamma, &k_hat))
}

pub(crate) fn decompose_matrix(gamma: &Matrix3<f64>, k_hat: &Vector3<f64>) -> ModeDecomposition {
    let eig = SymmetricEigen::new(*gamma);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lam: [f64; 3] = order.map(|i| eig.eigenvalues[i]);
    let mut pols: [Vector3<f64>; 3] = order.map(|i| eig.eigenvectors.column(i).into_owned());

    let scale = lam[2].abs().max(f64::MIN_POSITIVE);
    let deg01 = lam[1] - lam[0] <= DEGENERACY_EIG_TOL * scale;
    let deg12 = lam[2] - lam[1] <= DEGENERACY_EIG_TOL * scale;
    let degenerate = match (deg01, deg12) {
        (true, true) => {
            let (z1, z2) = transverse_basis(k_hat);
            pols = [z1, z2, *k_hat];
            Some((0, 1))
        }
        (true, false) => {
            let axis = aligned_axis(&pols[2], k_hat);
            let (z1, z2) = transverse_basis(&axis);
            pols[0] = z1;
            pols[1] = z2;
            Some((0, 1))
        }
        (false, true) => {
            let axis = aligned_axis(&pols[0], k_hat);
            let (z1, z2) = transverse_basis(&axis);
            pols[1] = z1;
            pols[2] = z2;
            Some((1, 2))
        }
        (false, false) => None,
    };
    ModeDecomposition {
        direction: *k_hat,
        speeds: lam.map(|l| l.max(0.0).sqrt()),
        polarizations: pols.map(canonical_sign),
        degenerate,
    }
}

/// The isolated polarization, snapped to `k_hat` when it is longitudinal to
/// machine precision so the transverse basis matches the isotropic one.
fn aligned_axis(e: &Vector3<f64>, k_hat: &Vector3<f64>) -> Vector3<f64> {
    let d = e.dot(k_hat);
    if d.abs() > 1.0 - 1e-12 {
        *k_hat
    } else if d < 0.0 {
        -e
    } else {
        *e
    }
}

/// Group velocity `grad_k omega_alpha` of mode `alpha` (zero-based) along `direction`.
///
/// Computed as `e^T (grad_k Gamma) e / (2 omega)` with the analytic gradient of
/// the quadratic form; independent of `|k|`.
pub fn group_velocity(
    material: &ElasticityMatrix,
    alpha: usize,
    direction: &Vector3<f64>,
) -> Result<Vector3<f64>, ChristoffelError> {
    if alpha > 2 {
        return Err(ChristoffelError::BadMode(alpha));
    }
    let d = decompose(material, direction)?;
    let gap = d.isolation(alpha);
    if gap <= AXIS_TOL {
        let partner = if alpha > 0 && d.relative_gap(alpha - 1, alpha) <= AXIS_TOL {
            (alpha - 1, alpha)
        } else {
            (alpha, alpha + 1)
        };
        return Err(ChristoffelError::Degenerate {
            direction: [d.direction[0], d.direction[1], d.direction[2]],
            modes: partner,
            gap,
        });
    }
    Ok(group_velocity_of(material, &d, alpha))
}

/// Group velocity from an existing decomposition, without the degeneracy check.
pub fn group_velocity_of(
    material: &ElasticityMatrix,
    d: &ModeDecomposition,
    alpha: usize,
) -> Vector3<f64> {
    let b = &material.blocked().blocks;
    let e = &d.polarizations[alpha];
    let k = &d.direction;
    let mut v = Vector3::zeros();
    for m in 0..3 {
        let mut s = 0.0;
        for i in 0..3 {
            let row = &b[3 * i + m];
            for kk in 0..3 {
                for l in 0..3 {
                    s += e[i] * row[3 * kk + l] * e[kk] * k[l];
                }
            }
        }
        v[m] = s;
    }
    v / (material.density() * d.speeds[alpha])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub direction: [f64; 3],
    pub speeds: [f64; 3],
}

/// Phase speeds at every direction, in input order.
pub fn velocity_surface(
    material: &ElasticityMatrix,
    directions: &[Vector3<f64>],
) -> Vec<SurfaceRow> {
    directions
        .par_iter()
        .map(|dir| {
            let k = dir.normalize();
            let d = decompose_matrix(&christoffel_unchecked(material, &k), &k);
            SurfaceRow {
                direction: [k[0], k[1], k[2]],
                speeds: d.speeds,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcousticAxis {
    /// Antipodal representative with its first non-zero component positive.
    pub direction: [f64; 3],
    /// Degenerate mode pair, 1-based.
    pub modes: (usize, usize),
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "axes", rename_all = "snake_case")]
pub enum AxisReport {
    Axes(Vec<AcousticAxis>),
    /// Two speeds coincide over the whole sphere (isotropic-like input).
    DegenerateEverywhere,
}

impl AxisReport {
    pub fn axes(&self) -> &[AcousticAxis] {
        match self {
            AxisReport::Axes(a) => a,
            AxisReport::DegenerateEverywhere => &[],
        }
    }
}

fn rel_gap_at(material: &ElasticityMatrix, dir: &Vector3<f64>, pair: usize) -> f64 {
    let k = dir.normalize();
    let g = christoffel_unchecked(material, &k);
    let mut e = SymmetricEigen::new(g).eigenvalues;
    e.as_mut_slice().sort_by(f64::total_cmp);
    let c: [f64; 3] = [
        e[0].max(0.0).sqrt(),
        e[1].max(0.0).sqrt(),
        e[2].max(0.0).sqrt(),
    ];
    (c[pair + 1] - c[pair]) / c[pair + 1]
}

/// Antipodal representative: components below 1e-8 snapped to zero, then the
/// first remaining non-zero component made positive.
fn antipodal_representative(v: Vector3<f64>) -> Vector3<f64> {
    let v = v.map(|x| if x.abs() < 1e-8 { 0.0 } else { x }).normalize();
    match v.iter().find(|x| **x != 0.0) {
        Some(&x) if x < 0.0 => -v,
        _ => v,
    }
}

/// Locates acoustic axes: local minima of the relative gap on a lat-long seed
/// grid of spacing `grid_deg`, each refined by a Nelder-Mead search on the
/// squared gap and accepted when the gap falls below `tol`.
pub fn detect_acoustic_axes(material: &ElasticityMatrix, grid_deg: f64, tol: f64) -> AxisReport {
    let grid = LatLongGrid::with_step_deg(grid_deg);
    let dirs = grid.directions();
    let mut axes: Vec<AcousticAxis> = Vec::new();
    let mut everywhere = true;
    for pair in 0..2 {
        let gaps: Vec<f64> = dirs
            .par_iter()
            .map(|d| rel_gap_at(material, d, pair))
            .collect();
        if gaps.iter().any(|&g| g >= tol) {
            everywhere = false;
        } else {
            return AxisReport::DegenerateEverywhere;
        }
        let mut seeds = Vec::new();
        for i in 0..grid.n_theta {
            for j in 0..grid.n_phi {
                let g = gaps[i * grid.n_phi + j];
                if grid
                    .neighbours(i, j)
                    .iter()
                    .all(|&(a, b)| g <= gaps[a * grid.n_phi + b])
                {
                    seeds.push(dirs[i * grid.n_phi + j]);
                }
            }
        }
        let step = grid.step();
        let refined: Vec<(Vector3<f64>, f64)> = seeds
            .par_iter()
            .map(|s| refine_axis(material, s, pair, step))
            .collect();
        for (dir, gap) in refined {
            if gap >= tol {
                continue;
            }
            let rep = antipodal_representative(dir);
            let dup = axes.iter_mut().find(|a| {
                let d = Vector3::from(a.direction);
                a.modes == (pair + 1, pair + 2)
                    && d.dot(&rep).abs().min(1.0).acos() < AXIS_MERGE_RAD
            });
            match dup {
                Some(a) if gap < a.relative_gap => {
                    a.direction = [rep[0], rep[1], rep[2]];
                    a.relative_gap = gap;
                }
                Some(_) => {}
                None => axes.push(AcousticAxis {
                    direction: [rep[0], rep[1], rep[2]],
                    modes: (pair + 1, pair + 2),
                    relative_gap: gap,
                }),
            }
        }
    }
    debug_assert!(!everywhere);
    axes.sort_by(|a, b| {
        a.modes
            .cmp(&b.modes)
            .then(b.direction[0].total_cmp(&a.direction[0]))
            .then(b.direction[1].total_cmp(&a.direction[1]))
            .then(b.direction[2].total_cmp(&a.direction[2]))
    });
    AxisReport::Axes(axes)
}

fn refine_axis(
    material: &ElasticityMatrix,
    seed: &Vector3<f64>,
    pair: usize,
    step: f64,
) -> (Vector3<f64>, f64) {
    let mut center = *seed;
    let mut scale = step;
    let mut best = rel_gap_at(material, &center, pair);
    // Restart from the current best with a shrinking simplex to escape stalls.
    for _ in 0..6 {
        let (t1, t2) = transverse_basis(&center);
        let at = |x: [f64; 2]| (center + t1 * x[0] + t2 * x[1]).normalize();
        let f = |x: [f64; 2]| {
            let g = rel_gap_at(material, &at(x), pair);
            g * g
        };
        let (x, _) = nelder_mead(f, [0.0, 0.0], scale, 400, 1e-15 * step);
        let cand = at(x);
        let g = rel_gap_at(material, &cand, pair);
        if g <= best {
            best = g;
            center = cand;
        }
        if best < 1e-3 * AXIS_TOL {
            break;
        }
        scale *= 0.1;
    }
    (center, best)
}

/// Minimal Nelder-Mead on R^2. Stops when the simplex diameter falls below `xtol`.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: F,
    x0: [f64; 2],
    step: f64,
    max_iter: usize,
    xtol: f64,
) -> ([f64; 2], f64) {
    let mut s = [x0, [x0[0] + step, x0[1]], [x0[0], x0[1] + step]];
    let mut fs = s.map(&f);
    let lerp =
        |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        s = idx.map(|i| s[i]);
        fs = idx.map(|i| fs[i]);
        let diam = (0..2)
            .map(|k| {
                let d1 = s[1][k] - s[0][k];
                let d2 = s[2][k] - s[0][k];
                d1.abs().max(d2.abs())
            })
            .fold(0.0, f64::max);
        if diam < xtol {
            break;
        }
        let centroid = [(s[0][0] + s[1][0]) * 0.5, (s[0][1] + s[1][1]) * 0.5];
        let xr = lerp(centroid, s[2], -1.0);
        let fr = f(xr);
        if fr < fs[0] {
            let xe = lerp(centroid, s[2], -2.0);
            let fe = f(xe);
            if fe < fr {
                s[2] = xe;
                fs[2] = fe;
            } else {
                s[2] = xr;
                fs[2] = fr;
            }
        } else if fr < fs[1] {
            s[2] = xr;
            fs[2] = fr;
        } else {
            let (xc, fc) = if fr < fs[2] {
                let xc = lerp(centroid, xr, 0.5);
                (xc, f(xc))
            } else {
                let xc = lerp(centroid, s[2], 0.5);
                (xc, f(xc))
            };
            if fc < fs[2].min(fr) {
                s[2] = xc;
                fs[2] = fc;
            } else {
                for i in 1..3 {
                    s[i] = lerp(s[0], s[i], 0.5);
                    fs[i] = f(s[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| fs[a].total_cmp(&fs[b])).unwrap_or(0);
    (s[best], fs[best])
}
