//! Closed-form cross-sections for an isotropic background with isotropic
//! (lambda, mu) fluctuations. Shear modes use the transverse basis
//! `z1(k), z2(k)` of [`transverse_basis`]; matrix-valued kernels act on 2x2
//! shear intensity matrices in that basis.
//!
//! `R_mn` below is `rho_mn * profile(|k - q|) * GPa^2`, matching the unit
//! convention of the generic kernel.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::christoffel::transverse_basis;
use crate::correlation::CorrelationModel;
use crate::material::{SymmetryClass, GPA};
use crate::quadrature::SphereRule;

/// Background Lame constants [Pa], density and the isotropic correlation model.
#[derive(Debug, Clone)]
pub struct IsotropicMedium<'a> {
    pub lambda: f64,
    pub mu: f64,
    pub density: f64,
    pub corr: &'a CorrelationModel,
}

impl IsotropicMedium<'_> {
    pub fn c_p(&self) -> f64 {
        ((self.lambda + 2.0 * self.mu) / self.density).sqrt()
    }

    pub fn c_s(&self) -> f64 {
        (self.mu / self.density).sqrt()
    }

    /// `(R_ll, R_lm, R_mm)` at lag `p`.
    fn r(&self, p: &Vector3<f64>) -> (f64, f64, f64) {
        assert_eq!(self.corr.class(), SymmetryClass::Isotropic);
        let s = self.corr.profile(p.norm()) * GPA * GPA;
        let rho = self.corr.rho();
        (rho[(0, 0)] * s, rho[(0, 1)] * s, rho[(1, 1)] * s)
    }

    fn basis(v: &Vector3<f64>) -> [Vector3<f64>; 2] {
        let (a, b) = transverse_basis(&v.normalize());
        [a, b]
    }

    /// P to P.
    pub fn sigma_pp(&self, k: &Vector3<f64>, q: &Vector3<f64>) -> f64 {
        let c = k.normalize().dot(&q.normalize());
        let (rll, rlm, rmm) = self.r(&(k - q));
        PI / 2.0 * k.norm_squared() / (self.density * (self.lambda + 2.0 * self.mu))
            * (rll + 4.0 * c * c * rlm + 4.0 * c.powi(4) * rmm)
    }

    /// P to S, contracted with the shear intensity matrix `a` at `q`.
    pub fn sigma_ps(&self, k: &Vector3<f64>, q: &Vector3<f64>, a: &Matrix2<f64>) -> f64 {
        let kh = k.normalize();
        let c = kh.dot(&q.normalize());
        let z = Self::basis(q);
        let v = Vector2::new(kh.dot(&z[0]), kh.dot(&z[1]));
        let (_, _, rmm) = self.r(&(k - q));
        PI / 2.0 * 4.0 * k.norm_squared() / (self.density * self.mu)
            * c
            * c
            * rmm
            * (v.transpose() * a * v)[0]
    }

    /// S to P: 2x2 matrix in the shear basis at `k`, for unit P intensity at `q`.
    pub fn sigma_sp(&self, k: &Vector3<f64>, q: &Vector3<f64>) -> Matrix2<f64> {
        let qh = q.normalize();
        let c = k.normalize().dot(&qh);
        let z = Self::basis(k);
        let w = Vector2::new(z[0].dot(&qh), z[1].dot(&qh));
        let (_, _, rmm) = self.r(&(k - q));
        w * w.transpose()
            * (PI / 2.0 * 4.0 * k.norm_squared() / (self.density * (self.lambda + 2.0 * self.mu))
                * c
                * c
                * rmm)
    }

    /// `G'_jk = (z_j(k) . q_hat)(z_k(q) . k_hat) + (k_hat . q_hat)(z_j(k) . z_k(q))`.
    pub fn g_prime(k: &Vector3<f64>, q: &Vector3<f64>) -> Matrix2<f64> {
        let kh = k.normalize();
        let qh = q.normalize();
        let zk = Self::basis(k);
        let zq = Self::basis(q);
        let c = kh.dot(&qh);
        Matrix2::from_fn(|j, l| zk[j].dot(&qh) * zq[l].dot(&kh) + c * zk[j].dot(&zq[l]))
    }

    /// S to S acting on the shear intensity matrix `a` at `q`.
    pub fn sigma_ss(&self, k: &Vector3<f64>, q: &Vector3<f64>, a: &Matrix2<f64>) -> Matrix2<f64> {
        let g = Self::g_prime(k, q);
        let (_, _, rmm) = self.r(&(k - q));
        g * a * g.transpose() * (PI / 2.0 * k.norm_squared() / (self.density * self.mu) * rmm)
    }

    /// `Sigma_PP(k_hat) = 2 pi omega^2 int c_P^-3 sigma_PP dOmega` at frequency `omega`.
    pub fn total_pp(&self, omega: f64, k_hat: &Vector3<f64>, rule: &SphereRule) -> f64 {
        let cp = self.c_p();
        let k = k_hat.normalize() * (omega / cp);
        let integral: f64 = rule
            .nodes()
            .iter()
            .zip(rule.weights())
            .map(|(n, w)| w * self.sigma_pp(&k, &(n * (omega / cp))))
            .sum();
        2.0 * PI * omega * omega * integral / cp.powi(3)
    }
}
