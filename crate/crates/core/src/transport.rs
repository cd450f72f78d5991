//! Monte Carlo solution of the coupled scalar transport equations in a
//! statistically homogeneous medium.
//!
//! Phase space is discretized on the nodes of a product sphere rule: a state
//! is a pair (mode, node). Particles fly straight along the group velocity of
//! their state, wait an exponential time with the total scattering rate of
//! that state, and jump to a new state drawn from alias tables built from the
//! partial cross-sections on the same rule.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Rotation3, Unit, Vector3};
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::christoffel::{
    decompose, group_velocity, group_velocity_of, transverse_basis, ChristoffelError,
};
use crate::correlation::{CorrelationError, CorrelationFile, CorrelationModel};
use crate::grid::{to_spherical, LatLongGrid};
use crate::material::{resolve, ElasticityMatrix, MaterialError, MaterialRecord};
use crate::quadrature::{QuadratureError, RuleScheme, SphereRule};
use crate::scattering::{CrossSections, ScatteringError};

/// Default product-rule orders of the transport state space.
pub const DEFAULT_TRANSPORT_ORDERS: [usize; 2] = [16, 32];

/// Rotation applied to a direction lying on an acoustic axis before its group
/// velocity is evaluated.
pub const AXIS_NUDGE_RAD: f64 = 1.0e-4;

const BLOCK: usize = 2048;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Christoffel(#[from] ChristoffelError),
    #[error(transparent)]
    Scattering(#[from] ScatteringError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("transport needs a product rule with positive weights")]
    RuleNotProduct,
    #[error("rate matrix is singular: no unique stationary state")]
    Singular,
}

/// Monte Carlo carrier of the specific intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub position: Vector3<f64>,
    pub direction: Vector3<f64>,
    /// Index of `direction` in the rule.
    pub node: usize,
    /// Zero-based mode.
    pub mode: usize,
    pub weight: f64,
    pub omega: f64,
}

/// Collision-rate tables on the states of one sphere rule at one frequency.
#[derive(Debug, Clone)]
pub struct RateTables {
    omega: f64,
    directions: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    speeds: Vec<[f64; 3]>,
    group_velocity: Vec<[Vector3<f64>; 3]>,
    degenerate: Vec<[bool; 3]>,
    /// `rates[s][t]`, rate of the jump from state `s` to state `t` [1/s].
    rates: Vec<Vec<f64>>,
    total: Vec<f64>,
    alias: Vec<Option<WeightedAliasIndex<f64>>>,
}

fn nudged(dir: &Vector3<f64>) -> Vector3<f64> {
    let (z1, _) = transverse_basis(dir);
    Rotation3::from_axis_angle(&Unit::new_normalize(z1), AXIS_NUDGE_RAD) * dir
}

impl RateTables {
    /// Builds the tables from the partial cross-sections: the jump rate from
    /// `(a, k_i)` to `(b, q_j)` is `2 pi omega^2 w_j c_b(q_j)^-3 sigma_ab`.
    pub fn build(
        material: &ElasticityMatrix,
        corr: &CorrelationModel,
        omega: f64,
        rule: &SphereRule,
    ) -> Result<Self, TransportError> {
        if !matches!(rule.scheme(), RuleScheme::Product { .. }) {
            return Err(TransportError::RuleNotProduct);
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(ScatteringError::BadFrequency(omega).into());
        }
        let xs = CrossSections::new(material, corr, rule)?;
        let n = rule.len();
        let decs = rule
            .nodes()
            .iter()
            .map(|d| decompose(material, d))
            .collect::<Result<Vec<_>, _>>()?;
        let mut group = Vec::with_capacity(n);
        let mut degenerate = Vec::with_capacity(n);
        for d in &decs {
            let mut g = [Vector3::zeros(); 3];
            let mut flag = [false; 3];
            for a in 0..3 {
                g[a] = match group_velocity(material, a, &d.direction) {
                    Ok(v) => v,
                    Err(ChristoffelError::Degenerate { .. }) => {
                        flag[a] = true;
                        match group_velocity(material, a, &nudged(&d.direction)) {
                            Ok(v) => v,
                            // degenerate on a whole neighbourhood: any polarization
                            // of the pair gives the same group velocity
                            Err(_) => group_velocity_of(material, d, a),
                        }
                    }
                    Err(e) => return Err(e.into()),
                };
            }
            group.push(g);
            degenerate.push(flag);
        }
        let states: Vec<(usize, usize)> =
            (0..3).flat_map(|a| (0..n).map(move |i| (a, i))).collect();
        let rates: Vec<Vec<f64>> = states
            .par_iter()
            .map(|&(a, i)| {
                let r = xs.node_rates(omega, &decs[i], a);
                let mut row = vec![0.0; 3 * n];
                for (j, rj) in r.iter().enumerate() {
                    for b in 0..3 {
                        row[b * n + j] = rj[b];
                    }
                }
                row
            })
            .collect();
        let total: Vec<f64> = rates.iter().map(|r| r.iter().sum()).collect();
        let alias = rates
            .iter()
            .zip(&total)
            .map(|(r, &t)| {
                if t > 0.0 {
                    WeightedAliasIndex::new(r.clone()).ok()
                } else {
                    None
                }
            })
            .collect();
        Ok(Self {
            omega,
            directions: decs.iter().map(|d| d.direction).collect(),
            weights: rule.weights().to_vec(),
            speeds: decs.iter().map(|d| d.speeds).collect(),
            group_velocity: group,
            degenerate,
            rates,
            total,
            alias,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn n_nodes(&self) -> usize {
        self.directions.len()
    }

    pub fn n_states(&self) -> usize {
        3 * self.n_nodes()
    }

    pub fn state(&self, mode: usize, node: usize) -> usize {
        mode * self.n_nodes() + node
    }

    /// `(mode, node)` of a state index.
    pub fn split(&self, state: usize) -> (usize, usize) {
        (state / self.n_nodes(), state % self.n_nodes())
    }

    pub fn direction(&self, node: usize) -> Vector3<f64> {
        self.directions[node]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn speed(&self, mode: usize, node: usize) -> f64 {
        self.speeds[node][mode]
    }

    pub fn group_velocity(&self, mode: usize, node: usize) -> Vector3<f64> {
        self.group_velocity[node][mode]
    }

    pub fn is_degenerate(&self, mode: usize, node: usize) -> bool {
        self.degenerate[node][mode]
    }

    pub fn degenerate_states(&self) -> usize {
        self.degenerate.iter().flatten().filter(|&&d| d).count()
    }

    /// States that never scatter.
    pub fn ballistic_states(&self) -> usize {
        self.total.iter().filter(|&&t| t <= 0.0).count()
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from][to]
    }

    /// `Sigma_a` at a state [1/s].
    pub fn total_rate(&self, state: usize) -> f64 {
        self.total[state]
    }

    /// `Sigma_ab` at a state, summed over outgoing nodes in node order.
    pub fn partial(&self, state: usize) -> [f64; 3] {
        let n = self.n_nodes();
        let row = &self.rates[state];
        [0, 1, 2].map(|b| row[b * n..(b + 1) * n].iter().sum())
    }

    /// Jump distribution out of a state; empty for ballistic states.
    pub fn probabilities(&self, state: usize) -> Vec<f64> {
        let t = self.total[state];
        if t > 0.0 {
            self.rates[state].iter().map(|r| r / t).collect()
        } else {
            Vec::new()
        }
    }

    /// Draws the post-collision state.
    pub fn sample<R: rand::Rng>(&self, state: usize, rng: &mut R) -> Option<usize> {
        self.alias[state].as_ref().map(|a| a.sample(rng))
    }

    /// Largest violation of `m_s R[s][t] = m_t R[t][s]` with the shell
    /// measure `m_(a,i) = w_i / c_a(k_i)^3`, relative to the largest flux.
    pub fn detailed_balance_violation(&self) -> f64 {
        let m = self.shell_measure();
        let ns = self.n_states();
        let mut worst = 0.0_f64;
        let mut scale = 0.0_f64;
        for s in 0..ns {
            for t in 0..ns {
                let a = m[s] * self.rates[s][t];
                let b = m[t] * self.rates[t][s];
                scale = scale.max(a.abs());
                worst = worst.max((a - b).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// `w_i / c_a(k_i)^3` per state.
    pub fn shell_measure(&self) -> Vec<f64> {
        (0..self.n_states())
            .map(|s| {
                let (a, i) = self.split(s);
                self.weights[i] / self.speeds[i][a].powi(3)
            })
            .collect()
    }

    /// Stationary state distribution: the normalized null vector of the
    /// transposed generator, by dense LU.
    pub fn stationary(&self) -> Result<Vec<f64>, TransportError> {
        let ns = self.n_states();
        let mut g = DMatrix::<f64>::zeros(ns, ns);
        for s in 0..ns {
            for t in 0..ns {
                g[(t, s)] += self.rates[s][t];
            }
            g[(s, s)] -= self.total[s];
        }
        let last = ns - 1;
        for s in 0..ns {
            g[(last, s)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(ns);
        rhs[last] = 1.0;
        let pi = g.lu().solve(&rhs).ok_or(TransportError::Singular)?;
        if pi.iter().any(|x| !x.is_finite()) {
            return Err(TransportError::Singular);
        }
        Ok(pi.iter().copied().collect())
    }

    /// Per-mode sums of a state distribution.
    pub fn mode_fractions(&self, pi: &[f64]) -> [f64; 3] {
        let n = self.n_nodes();
        [0, 1, 2].map(|a| pi[a * n..(a + 1) * n].iter().sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub elapsed: f64,
    pub collided: bool,
    /// The particle started the step in a state on an acoustic axis.
    pub degenerate: bool,
}

/// Advances a particle by one free flight, truncated at `dt_max`. On
/// collision the mode and direction are redrawn; the weight and frequency are
/// never touched.
pub fn step<R: rand::Rng>(
    p: &mut ParticleState,
    rng: &mut R,
    tables: &RateTables,
    dt_max: f64,
) -> Step {
    let s = tables.state(p.mode, p.node);
    let rate = tables.total_rate(s);
    let tau = if rate > 0.0 {
        Exp::new(rate).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    };
    let degenerate = tables.is_degenerate(p.mode, p.node);
    let v = tables.group_velocity(p.mode, p.node);
    if tau < dt_max {
        p.position += v * tau;
        let t = tables.sample(s, rng).expect("scattering state has a table");
        let (b, j) = tables.split(t);
        p.mode = b;
        p.node = j;
        p.direction = tables.direction(j);
        Step {
            elapsed: tau,
            collided: true,
            degenerate,
        }
    } else {
        p.position += v * dt_max;
        Step {
            elapsed: dt_max,
            collided: false,
            degenerate,
        }
    }
}

/// Initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// Point source at the origin, directions distributed by the rule weights
    /// (isotropic), in one mode (1-based).
    Point { mode: usize },
    /// All particles at the origin, in one mode, along the rule node nearest
    /// to `direction`.
    Plane { mode: usize, direction: [f64; 3] },
}

/// Cubic spatial tally grid centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub half_width_m: f64,
    pub bins: usize,
}

impl SpatialGrid {
    pub fn bin_width(&self) -> f64 {
        2.0 * self.half_width_m / self.bins as f64
    }

    /// Flat index `(ix * bins + iy) * bins + iz`, or `None` outside the box.
    pub fn index(&self, x: &Vector3<f64>) -> Option<usize> {
        let mut idx = [0usize; 3];
        for c in 0..3 {
            let u = (x[c] + self.half_width_m) / self.bin_width();
            if !(u >= 0.0 && u < self.bins as f64) {
                return None;
            }
            idx[c] = u as usize;
        }
        Some((idx[0] * self.bins + idx[1]) * self.bins + idx[2])
    }

    pub fn len(&self) -> usize {
        self.bins.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        self.bins == 0
    }
}

fn default_rule() -> [usize; 2] {
    DEFAULT_TRANSPORT_ORDERS
}

fn default_direction_bins() -> [usize; 2] {
    [18, 36]
}

/// Simulation configuration (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Built-in material name or path to a material JSON file.
    pub material: String,
    pub corr: CorrelationFile,
    pub omega_rad_s: f64,
    pub particles: usize,
    pub end_time_s: f64,
    pub tally_dt_s: f64,
    pub seed: u64,
    #[serde(default = "default_rule")]
    pub rule: [usize; 2],
    /// Lat-long direction histogram bins (polar, azimuthal).
    #[serde(default = "default_direction_bins")]
    pub direction_bins: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<SpatialGrid>,
    pub source: Source,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), TransportError> {
        let bad = |m: String| Err(TransportError::Config(m));
        if self.particles == 0 {
            return bad("particles must be >= 1".into());
        }
        if !(self.end_time_s.is_finite() && self.end_time_s > 0.0) {
            return bad(format!(
                "end_time_s must be positive, got {}",
                self.end_time_s
            ));
        }
        if !(self.tally_dt_s.is_finite() && self.tally_dt_s > 0.0) {
            return bad(format!(
                "tally_dt_s must be positive, got {}",
                self.tally_dt_s
            ));
        }
        if !(self.omega_rad_s.is_finite() && self.omega_rad_s > 0.0) {
            return bad(format!(
                "omega_rad_s must be positive, got {}",
                self.omega_rad_s
            ));
        }
        if self.rule.contains(&0) || self.direction_bins.contains(&0) {
            return bad("rule orders and direction bins must be >= 1".into());
        }
        if let Some(g) = &self.spatial {
            if g.bins == 0 || !(g.half_width_m.is_finite() && g.half_width_m > 0.0) {
                return bad("spatial grid needs bins >= 1 and a positive half width".into());
            }
        }
        let mode = match &self.source {
            Source::Point { mode } => *mode,
            Source::Plane { mode, direction } => {
                if Vector3::from(*direction).norm() == 0.0 {
                    return bad("plane source direction must be nonzero".into());
                }
                *mode
            }
        };
        if !(1..=3).contains(&mode) {
            return bad(format!("source mode must be 1, 2 or 3, got {mode}"));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TransportError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| TransportError::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<(MaterialRecord, CorrelationModel), TransportError> {
        self.validate()?;
        Ok((
            resolve(&self.material)?,
            CorrelationModel::from_file_data(&self.corr)?,
        ))
    }

    /// Tally times `0, dt, 2 dt, ...` up to the end time.
    pub fn frame_times(&self) -> Vec<f64> {
        let n = (self.end_time_s / self.tally_dt_s * (1.0 + 1e-12)).floor() as usize;
        (0..=n).map(|i| i as f64 * self.tally_dt_s).collect()
    }

    pub fn rule(&self) -> Result<SphereRule, TransportError> {
        Ok(SphereRule::new(self.rule[0], self.rule[1])?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TallyFrame {
    pub time: f64,
    /// Particles per mode.
    pub counts: [u64; 3],
    /// Energy per mode, each particle carrying `1 / particles`.
    pub energy: [f64; 3],
    /// `[mode][theta_bin * n_phi + phi_bin]` particle counts.
    pub direction_histogram: Vec<Vec<u64>>,
    /// Counts on the spatial grid, all modes together.
    #[serde(skip)]
    pub spatial: Option<Vec<u64>>,
    /// Particles outside the spatial grid.
    pub outside: u64,
}

impl TallyFrame {
    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn fractions(&self) -> [f64; 3] {
        let n = self.total_count() as f64;
        self.counts.map(|c| c as f64 / n)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub collisions: u64,
    /// Free flights started on an acoustic-axis state.
    pub degenerate_steps: u64,
    pub degenerate_states: usize,
    pub ballistic_states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub frames: Vec<TallyFrame>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone)]
struct Accum {
    counts: [u64; 3],
    dirs: Vec<Vec<u64>>,
    spatial: Option<Vec<u64>>,
    outside: u64,
}

impl Accum {
    fn new(n_dir: usize, spatial: Option<usize>) -> Self {
        Self {
            counts: [0; 3],
            dirs: vec![vec![0; n_dir]; 3],
            spatial: spatial.map(|n| vec![0; n]),
            outside: 0,
        }
    }

    fn merge(&mut self, o: &Accum) {
        for a in 0..3 {
            self.counts[a] += o.counts[a];
            for (x, y) in self.dirs[a].iter_mut().zip(&o.dirs[a]) {
                *x += y;
            }
        }
        if let (Some(s), Some(t)) = (self.spatial.as_mut(), o.spatial.as_ref()) {
            for (x, y) in s.iter_mut().zip(t) {
                *x += y;
            }
        }
        self.outside += o.outside;
    }
}

/// Deterministic per-particle stream.
pub fn particle_rng(seed: u64, particle: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle);
    rng
}

/// Initial state of a particle.
pub fn emit<R: rand::Rng>(
    source: &Source,
    tables: &RateTables,
    iso: &WeightedAliasIndex<f64>,
    omega: f64,
    weight: f64,
    rng: &mut R,
) -> ParticleState {
    let (mode, node) = match source {
        Source::Point { mode } => (mode - 1, iso.sample(rng)),
        Source::Plane { mode, direction } => {
            let d = Vector3::from(*direction).normalize();
            let node = (0..tables.n_nodes())
                .max_by(|&a, &b| {
                    tables
                        .direction(a)
                        .dot(&d)
                        .total_cmp(&tables.direction(b).dot(&d))
                })
                .expect("rule has nodes");
            (mode - 1, node)
        }
    };
    ParticleState {
        position: Vector3::zeros(),
        direction: tables.direction(node),
        node,
        mode,
        weight,
        omega,
    }
}

/// Runs the simulation on prebuilt tables. Results depend only on the
/// configuration, not on the number of worker threads.
pub fn run_with_tables(
    config: &SimConfig,
    tables: &RateTables,
) -> Result<RunOutput, TransportError> {
    config.validate()?;
    let times = config.frame_times();
    let grid = LatLongGrid {
        n_theta: config.direction_bins[0],
        n_phi: config.direction_bins[1],
    };
    let dir_bin: Vec<usize> = (0..tables.n_nodes())
        .map(|i| {
            let (t, p) = to_spherical(&tables.direction(i));
            let it = ((t / PI * grid.n_theta as f64) as usize).min(grid.n_theta - 1);
            let ip = ((p / (2.0 * PI) * grid.n_phi as f64) as usize).min(grid.n_phi - 1);
            it * grid.n_phi + ip
        })
        .collect();
    let iso = WeightedAliasIndex::new(tables.weights().to_vec())
        .map_err(|e| TransportError::Config(e.to_string()))?;
    let n = config.particles;
    let weight = 1.0 / n as f64;
    let omega = tables.omega();
    let spatial = config.spatial;
    let blocks: Vec<(Vec<Accum>, u64, u64)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![Accum::new(grid.len(), spatial.map(|g| g.len())); times.len()];
            let mut collisions = 0u64;
            let mut degenerate = 0u64;
            for idx in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let mut rng = particle_rng(config.seed, idx as u64);
                let mut p = emit(&config.source, tables, &iso, omega, weight, &mut rng);
                let mut t = 0.0;
                for (f, &tf) in times.iter().enumerate() {
                    while t < tf {
                        let s = step(&mut p, &mut rng, tables, tf - t);
                        debug_assert_eq!(p.omega, omega);
                        degenerate += s.degenerate as u64;
                        if s.collided {
                            collisions += 1;
                            t += s.elapsed;
                        } else {
                            t = tf;
                        }
                    }
                    let a = &mut acc[f];
                    a.counts[p.mode] += 1;
                    a.dirs[p.mode][dir_bin[p.node]] += 1;
                    if let (Some(g), Some(h)) = (spatial, a.spatial.as_mut()) {
                        match g.index(&p.position) {
                            Some(i) => h[i] += 1,
                            None => a.outside += 1,
                        }
                    }
                }
            }
            (acc, collisions, degenerate)
        })
        .collect();
    let mut total = vec![Accum::new(grid.len(), spatial.map(|g| g.len())); times.len()];
    let mut diagnostics = Diagnostics {
        degenerate_states: tables.degenerate_states(),
        ballistic_states: tables.ballistic_states(),
        ..Default::default()
    };
    for (acc, c, d) in &blocks {
        for (t, a) in total.iter_mut().zip(acc) {
            t.merge(a);
        }
        diagnostics.collisions += c;
        diagnostics.degenerate_steps += d;
    }
    let frames = times
        .iter()
        .zip(total)
        .map(|(&time, a)| TallyFrame {
            time,
            counts: a.counts,
            energy: a.counts.map(|c| c as f64 * weight),
            direction_histogram: a.dirs,
            spatial: a.spatial,
            outside: a.outside,
        })
        .collect();
    Ok(RunOutput {
        frames,
        diagnostics,
    })
}

/// Builds the tables for `config` and runs it.
pub fn run(config: &SimConfig) -> Result<(RunOutput, RateTables), TransportError> {
    let (record, corr) = config.resolve()?;
    let tables = RateTables::build(&record.matrix, &corr, config.omega_rad_s, &config.rule()?)?;
    let out = run_with_tables(config, &tables)?;
    Ok((out, tables))
}
