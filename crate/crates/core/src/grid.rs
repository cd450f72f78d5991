//! Equiangular latitude-longitude grid used for maps and seed searches.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Cell-centred lat-long grid: `theta_i = (i + 1/2) step`, `phi_j = (j + 1/2) step`,
/// with theta the colatitude from e3 and phi measured from e1 towards e2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLongGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl LatLongGrid {
    /// Grid with spacing as close as possible to `step_deg` degrees.
    pub fn with_step_deg(step_deg: f64) -> Self {
        let n_theta = ((180.0 / step_deg).round() as usize).max(1);
        Self {
            n_theta,
            n_phi: 2 * n_theta,
        }
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self) -> f64 {
        PI / self.n_theta as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * PI / self.n_theta as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * 2.0 * PI / self.n_phi as f64
    }

    pub fn direction(&self, i: usize, j: usize) -> Vector3<f64> {
        spherical(self.theta(i), self.phi(j))
    }

    /// All directions, row-major in (theta, phi).
    pub fn directions(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.n_theta {
            for j in 0..self.n_phi {
                out.push(self.direction(i, j));
            }
        }
        out
    }

    /// The 8-neighbourhood of cell (i, j), wrapping in phi and across the poles.
    pub fn neighbours(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(8);
        let n_phi = self.n_phi as isize;
        for di in [-1isize, 0, 1] {
            for dj in [-1isize, 0, 1] {
                if di == 0 && dj == 0 {
                    continue;
                }
                let mut ii = i as isize + di;
                let mut jj = j as isize + dj;
                if ii < 0 || ii >= self.n_theta as isize {
                    ii = if ii < 0 { 0 } else { self.n_theta as isize - 1 };
                    jj += n_phi / 2;
                }
                out.push((ii as usize, jj.rem_euclid(n_phi) as usize));
            }
        }
        out
    }
}

pub fn spherical(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// (colatitude, longitude) of a unit vector, longitude in [0, 2 pi).
pub fn to_spherical(v: &Vector3<f64>) -> (f64, f64) {
    let theta = v[2].clamp(-1.0, 1.0).acos();
    let phi = v[1].atan2(v[0]).rem_euclid(2.0 * PI);
    (theta, phi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_degree_grid() {
        let g = LatLongGrid::with_step_deg(2.0);
        assert_eq!((g.n_theta, g.n_phi), (90, 180));
        assert!((g.theta(0) - 1f64.to_radians()).abs() < 1e-15);
        let d = g.direction(45, 0);
        assert!((d.norm() - 1.0).abs() < 1e-15);
        assert_eq!(g.neighbours(0, 0).len(), 8);
        assert!(g.neighbours(0, 0).contains(&(0, 90)));
        assert!(g.neighbours(5, 0).contains(&(4, 179)));
    }

    #[test]
    fn spherical_round_trip() {
        let v = spherical(0.7, 4.0);
        let (t, p) = to_spherical(&v);
        assert!((t - 0.7).abs() < 1e-14 && (p - 4.0).abs() < 1e-14);
    }
}
