//! Quadrature on the unit sphere (Gaussian product rules and graded cubed-sphere
//! rules), plus a small adaptive Gauss-Legendre integrator for one-dimensional
//! radial integrals.

use std::f64::consts::PI;

use nalgebra::Vector3;
use thiserror::Error;

/// Default production orders (polar, azimuthal).
pub const DEFAULT_ORDERS: (usize, usize) = (32, 64);

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature orders must be >= 1, got ({0}, {1})")]
    BadOrders(usize, usize),
    #[error("singular point {0} is too close to another one for the graded rule")]
    CloseSingularities(usize),
    #[error("integrand is not finite at node {index} ({x:.6}, {y:.6}, {z:.6})")]
    NonFinite {
        index: usize,
        x: f64,
        y: f64,
        z: f64,
    },
}

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Construction of a [`SphereRule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleScheme {
    /// Gauss-Legendre in cos(theta) times the trapezoid rule in phi.
    Product { n_polar: usize, n_azimuth: usize },
    /// Equiangular cubed sphere with `n_base` x `n_base` panels per face and
    /// `order` x `order` Gauss points per panel, graded towards singular points.
    Graded { n_base: usize, order: usize },
}

/// A quadrature rule on the unit sphere: nodes with weights summing to 4 pi.
///
/// Product rules order their nodes polar-major: node `i * n_azimuth + j` sits
/// at the i-th polar node and azimuth `2 pi j / n_azimuth`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    nodes: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    scheme: RuleScheme,
    mesh: Option<Box<GradedMesh>>,
}

/// Panels of a graded rule and the singular point (if any) owning each one.
#[derive(Debug, Clone)]
struct GradedMesh {
    n_base: usize,
    points: Vec<Vector3<f64>>,
    leaves: Vec<Panel>,
    owner: Vec<Option<usize>>,
}

impl SphereRule {
    pub fn new(n_polar: usize, n_azimuth: usize) -> Result<Self, QuadratureError> {
        if n_polar == 0 || n_azimuth == 0 {
            return Err(QuadratureError::BadOrders(n_polar, n_azimuth));
        }
        let (mu, wmu) = gauss_legendre(n_polar);
        let dphi = 2.0 * PI / n_azimuth as f64;
        let mut nodes = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        for (&ct, &wt) in mu.iter().zip(&wmu) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for j in 0..n_azimuth {
                let phi = dphi * j as f64;
                let (sp, cp) = phi.sin_cos();
                let v = Vector3::new(st * cp, st * sp, ct);
                nodes.push(v / v.norm());
                weights.push(wt * dphi);
            }
        }
        Ok(Self {
            nodes,
            weights,
            scheme: RuleScheme::Product { n_polar, n_azimuth },
            mesh: None,
        })
    }

    pub fn default_rule() -> Self {
        Self::new(DEFAULT_ORDERS.0, DEFAULT_ORDERS.1).expect("default orders are valid")
    }

    /// Composite rule for integrands that are smooth except at the isolated
    /// directions `singular`, where they may be bounded but direction-dependent
    /// (as the split between two coincident wave sheets at an acoustic axis).
    ///
    /// Panels of an equiangular cubed sphere are split near each singular point
    /// until they are small compared with its distance to the other points.
    /// The panels touching a point are then replaced by a fan of triangles with
    /// apex at the point, integrated in gnomonic coordinates with collapsed
    /// (Duffy) Gauss rules, where such integrands are smooth. Fan weights may be
    /// negative when the removed region is not star-shaped.
    pub fn graded(
        singular: &[Vector3<f64>],
        n_base: usize,
        order: usize,
    ) -> Result<Self, QuadratureError> {
        Self::graded_with_features(singular, n_base, order, |_| f64::INFINITY)
    }

    /// As [`SphereRule::graded`], additionally splitting panels away from the
    /// singular points while they are larger than the local feature size
    /// `feature(x)` (angle, sampled at the panel corners and centre).
    pub fn graded_with_features<F>(
        singular: &[Vector3<f64>],
        n_base: usize,
        order: usize,
        feature: F,
    ) -> Result<Self, QuadratureError>
    where
        F: Fn(&Vector3<f64>) -> f64,
    {
        if n_base == 0 || order == 0 {
            return Err(QuadratureError::BadOrders(n_base, order));
        }
        let points: Vec<Vector3<f64>> = singular.iter().map(|p| p.normalize()).collect();
        if let Some((index, p)) = points
            .iter()
            .enumerate()
            .find(|(_, p)| !p.iter().all(|x| x.is_finite()))
        {
            return Err(QuadratureError::NonFinite {
                index,
                x: p[0],
                y: p[1],
                z: p[2],
            });
        }
        let target: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let sep = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| angle(p, q))
                    .fold(PI, f64::min);
                sep / 6.0
            })
            .collect();

        let step = PI / 2.0 / n_base as f64;
        let mut stack = Vec::new();
        for face in (0..6).rev() {
            for i in (0..n_base).rev() {
                for j in (0..n_base).rev() {
                    let a0 = -PI / 4.0 + step * i as f64;
                    let b0 = -PI / 4.0 + step * j as f64;
                    stack.push(Panel {
                        face,
                        a0,
                        a1: a0 + step,
                        b0,
                        b1: b0 + step,
                        depth: 0,
                    });
                }
            }
        }
        let mut leaves = Vec::new();
        while let Some(p) = stack.pop() {
            let c = p.center();
            let side = p.side();
            let near = |r: f64| points.iter().any(|a| angle(&c, a) < r * side);
            let split = p.depth < MAX_GRADED_DEPTH
                && (points
                    .iter()
                    .zip(&target)
                    .any(|(a, &s)| side > s && angle(&c, a) < 2.0 * side)
                    || (p.depth < MAX_FEATURE_DEPTH
                        && !near(3.0)
                        && p.samples().iter().any(|x| feature(x) < side)));
            if split {
                stack.extend(p.children().into_iter().rev());
            } else {
                leaves.push(p);
            }
        }

        let mut owner: Vec<Option<usize>> = vec![None; leaves.len()];
        for (pi, a) in points.iter().enumerate() {
            for (li, leaf) in leaves.iter().enumerate() {
                if angle(&leaf.center(), a) < 1.5 * leaf.side() {
                    if owner[li].is_some() {
                        return Err(QuadratureError::CloseSingularities(pi));
                    }
                    owner[li] = Some(pi);
                }
            }
        }
        let mesh = GradedMesh {
            n_base,
            points,
            leaves,
            owner,
        };
        Ok(Self::from_mesh(mesh, order))
    }

    fn from_mesh(mesh: GradedMesh, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (leaf, own) in mesh.leaves.iter().zip(&mesh.owner) {
            if own.is_none() {
                leaf.push_nodes(&x, &w, &mut nodes, &mut weights);
            }
        }
        for (pi, a) in mesh.points.iter().enumerate() {
            let edges = boundary_edges(
                mesh.leaves
                    .iter()
                    .zip(&mesh.owner)
                    .filter(|(_, o)| **o == Some(pi))
                    .map(|(l, _)| l),
            );
            push_fan(a, &edges, &x, &w, &mut nodes, &mut weights);
        }
        Self {
            nodes,
            weights,
            scheme: RuleScheme::Graded {
                n_base: mesh.n_base,
                order,
            },
            mesh: Some(Box::new(mesh)),
        }
    }

    /// Number of cubed-sphere panels of a graded rule (fans excluded).
    pub fn panel_count(&self) -> Option<usize> {
        self.mesh
            .as_ref()
            .map(|m| m.owner.iter().filter(|o| o.is_none()).count())
    }

    /// The rule with doubled orders: both product orders, or the panel order of
    /// a graded rule.
    pub fn refined(&self) -> Self {
        match self.scheme {
            RuleScheme::Product { n_polar, n_azimuth } => {
                Self::new(2 * n_polar, 2 * n_azimuth).expect("orders stay valid")
            }
            RuleScheme::Graded { order, .. } => {
                let mesh = self.mesh.as_ref().expect("graded rules keep their mesh");
                Self::from_mesh((**mesh).clone(), 2 * order)
            }
        }
    }

    pub fn nodes(&self) -> &[Vector3<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn scheme(&self) -> RuleScheme {
        self.scheme
    }

    /// `(n_polar, n_azimuth)` for product rules, `(n_base, order)` for graded ones.
    pub fn orders(&self) -> (usize, usize) {
        match self.scheme {
            RuleScheme::Product { n_polar, n_azimuth } => (n_polar, n_azimuth),
            RuleScheme::Graded { n_base, order } => (n_base, order),
        }
    }

    /// Spherical-polynomial degree integrated exactly by a product rule.
    pub fn exact_degree(&self) -> Option<usize> {
        match self.scheme {
            RuleScheme::Product { n_polar, n_azimuth } => {
                Some((2 * n_polar - 1).min(n_azimuth - 1))
            }
            RuleScheme::Graded { .. } => None,
        }
    }

    /// Weighted sum over the nodes, accumulated in node order.
    pub fn integrate<F>(&self, mut f: F) -> Result<f64, QuadratureError>
    where
        F: FnMut(&Vector3<f64>) -> f64,
    {
        let mut acc = 0.0;
        for (index, (x, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(x);
            if !v.is_finite() {
                return Err(QuadratureError::NonFinite {
                    index,
                    x: x[0],
                    y: x[1],
                    z: x[2],
                });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Index of the node closest to `dir`.
    pub fn nearest_node(&self, dir: &Vector3<f64>) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.dot(dir);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }
}

const MAX_GRADED_DEPTH: u32 = 20;
const MAX_FEATURE_DEPTH: u32 = 10;

/// Cube faces as (normal, e_u, e_v), each right-handed.
const FACES: [[[f64; 3]; 3]; 6] = [
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    [[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
    [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
    [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
    [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    [[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
];

fn angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Equiangular panel `[a0, a1] x [b0, b1]` on one cube face.
#[derive(Debug, Clone, Copy)]
struct Panel {
    face: usize,
    a0: f64,
    a1: f64,
    b0: f64,
    b1: f64,
    depth: u32,
}

impl Panel {
    fn point(&self, a: f64, b: f64) -> Vector3<f64> {
        let [n, eu, ev] = FACES[self.face].map(Vector3::from);
        (n + eu * a.tan() + ev * b.tan()).normalize()
    }

    fn center(&self) -> Vector3<f64> {
        self.point(0.5 * (self.a0 + self.a1), 0.5 * (self.b0 + self.b1))
    }

    /// Corners in counter-clockwise order seen from outside the sphere.
    fn corners(&self) -> [Vector3<f64>; 4] {
        [
            self.point(self.a0, self.b0),
            self.point(self.a1, self.b0),
            self.point(self.a1, self.b1),
            self.point(self.a0, self.b1),
        ]
    }

    /// Corners, edge midpoints and centre.
    fn samples(&self) -> [Vector3<f64>; 9] {
        let am = 0.5 * (self.a0 + self.a1);
        let bm = 0.5 * (self.b0 + self.b1);
        let mut out = [Vector3::zeros(); 9];
        let mut n = 0;
        for a in [self.a0, am, self.a1] {
            for b in [self.b0, bm, self.b1] {
                out[n] = self.point(a, b);
                n += 1;
            }
        }
        out
    }

    /// Longest side, as an angle.
    fn side(&self) -> f64 {
        let c = self.corners();
        (0..4)
            .map(|i| angle(&c[i], &c[(i + 1) % 4]))
            .fold(0.0, f64::max)
    }

    fn children(&self) -> [Panel; 4] {
        let am = 0.5 * (self.a0 + self.a1);
        let bm = 0.5 * (self.b0 + self.b1);
        let d = self.depth + 1;
        let f = self.face;
        [
            Panel {
                face: f,
                a0: self.a0,
                a1: am,
                b0: self.b0,
                b1: bm,
                depth: d,
            },
            Panel {
                face: f,
                a0: am,
                a1: self.a1,
                b0: self.b0,
                b1: bm,
                depth: d,
            },
            Panel {
                face: f,
                a0: self.a0,
                a1: am,
                b0: bm,
                b1: self.b1,
                depth: d,
            },
            Panel {
                face: f,
                a0: am,
                a1: self.a1,
                b0: bm,
                b1: self.b1,
                depth: d,
            },
        ]
    }

    fn push_nodes(
        &self,
        x: &[f64],
        w: &[f64],
        nodes: &mut Vec<Vector3<f64>>,
        weights: &mut Vec<f64>,
    ) {
        let (ca, ha) = (0.5 * (self.a0 + self.a1), 0.5 * (self.a1 - self.a0));
        let (cb, hb) = (0.5 * (self.b0 + self.b1), 0.5 * (self.b1 - self.b0));
        for (xi, wi) in x.iter().zip(w) {
            let a = ca + ha * xi;
            let ta = a.tan();
            for (xj, wj) in x.iter().zip(w) {
                let b = cb + hb * xj;
                let tb = b.tan();
                let r2 = 1.0 + ta * ta + tb * tb;
                let jac = (1.0 + ta * ta) * (1.0 + tb * tb) / (r2 * r2.sqrt());
                nodes.push(self.point(a, b));
                weights.push(wi * wj * ha * hb * jac);
            }
        }
    }
}

/// Directed outer edges of a union of panels; shared edges cancel.
fn boundary_edges<'a>(
    panels: impl Iterator<Item = &'a Panel>,
) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let key = |v: &Vector3<f64>| v.map(|x| (x * 1e9).round() as i64);
    let mut edges: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
    for p in panels {
        let c = p.corners();
        for i in 0..4 {
            let (a, b) = (c[i], c[(i + 1) % 4]);
            if let Some(pos) = edges
                .iter()
                .position(|(x, y)| key(x) == key(&b) && key(y) == key(&a))
            {
                edges.remove(pos);
            } else {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Fan of collapsed Gauss rules over the triangles (apex, P, Q), in gnomonic
/// coordinates centred at the apex.
fn push_fan(
    apex: &Vector3<f64>,
    edges: &[(Vector3<f64>, Vector3<f64>)],
    x: &[f64],
    w: &[f64],
    nodes: &mut Vec<Vector3<f64>>,
    weights: &mut Vec<f64>,
) {
    let u = if apex[2].abs() > 0.9 {
        Vector3::x()
    } else {
        Vector3::z()
    };
    let t1 = apex.cross(&u).normalize();
    let t2 = apex.cross(&t1);
    let gnomonic = |v: &Vector3<f64>| {
        let d = v.dot(apex);
        (v.dot(&t1) / d, v.dot(&t2) / d)
    };
    for (p, q) in edges {
        let (p1, p2) = gnomonic(p);
        let (q1, q2) = gnomonic(q);
        let cross = p1 * q2 - p2 * q1;
        for (xt, wt) in x.iter().zip(w) {
            let t = 0.5 * (xt + 1.0);
            for (xs, ws) in x.iter().zip(w) {
                let s = 0.5 * (xs + 1.0);
                let y1 = t * (p1 + s * (q1 - p1));
                let y2 = t * (p2 + s * (q2 - p2));
                let r2 = 1.0 + y1 * y1 + y2 * y2;
                nodes.push((apex + t1 * y1 + t2 * y2).normalize());
                weights.push(0.25 * wt * ws * t * cross / (r2 * r2.sqrt()));
            }
        }
    }
}

/// Adaptive Gauss-Legendre integration of `f` over `[a, b]`: each panel is
/// accepted when the 10- and 20-point rules agree to `tol` (absolute, scaled by
/// the panel width fraction), otherwise bisected.
pub fn adaptive_integrate<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let (x10, w10) = gauss_legendre(10);
    let (x20, w20) = gauss_legendre(20);
    let panel = |lo: f64, hi: f64, x: &[f64], w: &[f64]| {
        let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        x.iter()
            .zip(w)
            .map(|(xi, wi)| wi * f(c + h * xi))
            .sum::<f64>()
            * h
    };
    let width = b - a;
    let mut stack = vec![(a, b, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let coarse = panel(lo, hi, &x10, &w10);
        let fine = panel(lo, hi, &x20, &w20);
        let allowed = tol * ((hi - lo) / width).max(1e-3);
        if (fine - coarse).abs() <= allowed || depth >= 40 {
            total += fine;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_small_cases() {
        let (x, w) = gauss_legendre(1);
        assert_eq!(x, vec![0.0]);
        assert!((w[0] - 2.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!((x[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in [4, 7, 16, 33] {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let exact = if p % 2 == 1 {
                    0.0
                } else {
                    2.0 / (p as f64 + 1.0)
                };
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((q - exact).abs() < 1e-13, "n={n} p={p} q={q}");
            }
        }
    }

    #[test]
    fn sphere_rule_basic_moments() {
        let rule = SphereRule::new(2, 3).unwrap();
        let area = rule.integrate(|_| 1.0).unwrap();
        assert!((area - 4.0 * PI).abs() < 1e-13);
        let z2 = rule.integrate(|x| x[2] * x[2]).unwrap();
        assert!((z2 - 4.0 * PI / 3.0).abs() < 1e-12);
        for n in rule.nodes() {
            assert!((n.norm() - 1.0).abs() < 1e-14);
        }
        assert!(rule.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn non_finite_integrand_names_node() {
        let rule = SphereRule::new(2, 4).unwrap();
        let err = rule
            .integrate(|x| if x[0] > 0.5 { f64::NAN } else { 1.0 })
            .unwrap_err();
        assert!(matches!(err, QuadratureError::NonFinite { index: 0, .. }));
        assert!(matches!(
            SphereRule::new(0, 4),
            Err(QuadratureError::BadOrders(0, 4))
        ));
    }

    #[test]
    fn graded_rule_without_points() {
        let rule = SphereRule::graded(&[], 3, 12).unwrap();
        assert_eq!(rule.len(), 6 * 9 * 144);
        let area: f64 = rule.weights().iter().sum();
        assert!((area - 4.0 * PI).abs() < 1e-12);
        let m = rule.integrate(|x| x[0].powi(4) * x[1].powi(2)).unwrap();
        // int x^4 y^2 dOmega = 4 pi * 3 / 105
        assert!((m - 4.0 * PI * 3.0 / 105.0).abs() < 1e-10, "{m}");
    }

    #[test]
    fn graded_rule_resolves_direction_dependent_points() {
        // Around a (and -a) the integrand depends only on the azimuth about a:
        // f = cos^2(azimuth), so each hemisphere contributes 2 pi * (1/2) * 2.
        let a = Vector3::new(0.3, -0.5, 0.8).normalize();
        let t1 = a.cross(&Vector3::z()).normalize();
        let t2 = a.cross(&t1);
        let f = |x: &Vector3<f64>| {
            let (p, q) = (x.dot(&t1), x.dot(&t2));
            p * p / (p * p + q * q)
        };
        let rule = SphereRule::graded(&[a, -a], 4, 10).unwrap();
        let v = rule.integrate(f).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-11, "{}", v - 2.0 * PI);
        let area: f64 = rule.weights().iter().sum();
        assert!((area - 4.0 * PI).abs() < 1e-12);
        let product = SphereRule::new(64, 128).unwrap().integrate(f).unwrap();
        assert!((product - 2.0 * PI).abs() > 1e-8);
        let r2 = rule.refined();
        assert_eq!(r2.orders(), (4, 20));
    }

    #[test]
    fn graded_rule_close_points() {
        let a = Vector3::new(0.0, 0.70, 0.71).normalize();
        let b = Vector3::new(0.0, 0.77, 0.64).normalize();
        let t1 = Vector3::x();
        let f = |x: &Vector3<f64>| {
            let mut s = 0.0;
            for p in [a, b, -a, -b] {
                let d = x - p * x.dot(&p);
                let t2 = p.cross(&t1);
                let (u, v) = (d.dot(&t1), d.dot(&t2));
                s += u * u / (u * u + v * v);
            }
            s
        };
        let rule = SphereRule::graded(&[a, b, -a, -b], 4, 8).unwrap();
        let fine = rule.refined();
        let (v1, v2) = (rule.integrate(f).unwrap(), fine.integrate(f).unwrap());
        assert!((v1 - v2).abs() < 1e-9 * v2, "{v1} {v2}");
        assert!((v2 - 8.0 * PI).abs() < 1e-9 * v2);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        // int_0^inf y^2 exp(-y) dy = 2
        let v = adaptive_integrate(|y| y * y * (-y).exp(), 0.0, 200.0, 1e-13);
        assert!((v - 2.0).abs() < 1e-11, "{v}");
        let v = adaptive_integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12);
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() / exact < 1e-10, "{v} {exact}");
    }
}
