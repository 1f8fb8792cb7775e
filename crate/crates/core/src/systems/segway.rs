//! Planar Segway-like benchmark: unicycle kinematics carrying an inverted
//! pendulum, stabilized by full-state feedback and steered to a goal.
//!
//! Internal state is `[x, y, ω, v, φ, φ̇]` with forward speed `v`; the
//! emitted signal is `[x, y, ω, ẋ, ẏ, φ, φ̇]`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix4, RowVector4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SystemModel;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::stl::{Signal, SignalSchema};

pub const SEGWAY_COORDINATES: [&str; 7] = ["x", "y", "omega", "xdot", "ydot", "phi", "phidot"];
pub const PHI: usize = 5;

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Feedback gains. The balance loop commands forward acceleration
/// `u = −k·[p, v, φ, φ̇]` where `p` is the position relative to the goal
/// along the current heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegwayGains {
    pub position: f64,
    pub velocity: f64,
    pub tilt: f64,
    pub tilt_rate: f64,
    /// Turn-rate command per radian of heading error.
    pub heading: f64,
    pub max_turn_rate: f64,
    /// Along-heading goal distance seen by the balance loop is clipped to this.
    pub max_position_error: f64,
}

impl SegwayGains {
    /// Places all four balance-loop poles at `−pole` for the linearized
    /// model `v̇ = u, φ̈ = a φ − b u` (Ackermann's formula).
    pub fn pole_placement(natural_frequency: f64, coupling: f64, pole: f64) -> Result<Self> {
        let (a, b) = balance_matrices(natural_frequency, coupling);
        let ctrb = Matrix4::from_columns(&[b, a * b, a * a * b, a * a * a * b]);
        let inv = ctrb
            .try_inverse()
            .ok_or_else(|| Error::invalid("segway", "balance loop is not controllable"))?;
        let id = Matrix4::identity();
        let p = pole;
        // (A + pI)^4 is the desired characteristic polynomial evaluated at A
        let shifted = a + id * p;
        let desired = shifted * shifted * shifted * shifted;
        let k: RowVector4<f64> = RowVector4::new(0.0, 0.0, 0.0, 1.0) * inv * desired;
        Ok(Self {
            position: k[0],
            velocity: k[1],
            tilt: k[2],
            tilt_rate: k[3],
            heading: 2.0,
            max_turn_rate: 1.5,
            max_position_error: 1.0,
        })
    }

    fn balance_row(&self) -> RowVector4<f64> {
        RowVector4::new(self.position, self.velocity, self.tilt, self.tilt_rate)
    }
}

fn balance_matrices(natural_frequency: f64, coupling: f64) -> (Matrix4<f64>, Vector4<f64>) {
    let w2 = natural_frequency * natural_frequency;
    #[rustfmt::skip]
    let a = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, w2, 0.0,
    );
    (a, Vector4::new(0.0, 1.0, 0.0, -coupling))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegwayParams {
    pub goal: [f64; 2],
    pub gains: SegwayGains,
    /// `ω_n` of the pendulum; `φ̈ = ω_n² sin φ − coupling·u`.
    pub natural_frequency: f64,
    pub coupling: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Std of the initial planar position perturbation (true twin).
    pub init_noise_sigma: f64,
    /// Std of the initial heading and tilt perturbations (true twin).
    pub angle_noise_sigma: f64,
    /// Std of the additive tilt-acceleration disturbance, held per step (true twin).
    pub process_noise_sigma: f64,
    /// Goal distance below which the heading loop stops turning.
    pub arrive_radius: f64,
}

impl Default for SegwayParams {
    fn default() -> Self {
        let natural_frequency = 19.6f64.sqrt();
        let coupling = 2.0;
        Self {
            goal: [2.5, 2.5],
            gains: SegwayGains::pole_placement(natural_frequency, coupling, 2.0).expect("controllable"),
            natural_frequency,
            coupling,
            dt: 0.01,
            horizon: 15.0,
            init_noise_sigma: 0.05,
            angle_noise_sigma: 0.05,
            process_noise_sigma: 0.0,
            arrive_radius: 0.05,
        }
    }
}

impl SegwayParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("natural_frequency", self.natural_frequency),
            ("max_turn_rate", self.gains.max_turn_rate),
            ("max_position_error", self.gains.max_position_error),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("segway", format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("init_noise_sigma", self.init_noise_sigma),
            ("angle_noise_sigma", self.angle_noise_sigma),
            ("process_noise_sigma", self.process_noise_sigma),
            ("arrive_radius", self.arrive_radius),
            ("heading gain", self.gains.heading),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("segway", format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.dt > self.horizon {
            return Err(Error::invalid("segway", "dt exceeds horizon"));
        }
        let worst = self.closed_loop_spectral_abscissa();
        if !(worst < 0.0) {
            return Err(Error::invalid(
                "segway",
                format!("gains do not stabilize the balance loop (max eigenvalue real part {worst})"),
            ));
        }
        Ok(())
    }

    /// Largest real part among the linearized balance-loop eigenvalues.
    pub fn closed_loop_spectral_abscissa(&self) -> f64 {
        let (a, b) = balance_matrices(self.natural_frequency, self.coupling);
        let closed = a - b * self.gains.balance_row();
        closed
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn samples(&self) -> usize {
        (self.horizon / self.dt + 1e-9).floor() as usize + 1
    }

    /// Same parameters with every noise source switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            init_noise_sigma: 0.0,
            angle_noise_sigma: 0.0,
            process_noise_sigma: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Twin {
    /// Deterministic simulator; the seed is ignored.
    Nominal,
    /// Simulator with perturbed initial condition and optional process noise.
    True,
}

#[derive(Clone, Debug)]
pub struct SegwayModel {
    params: SegwayParams,
    twin: Twin,
    domain: Domain,
}

impl SegwayModel {
    /// Phenomena are the initial planar position in `domain`; heading and
    /// tilt start at zero.
    pub fn new(params: SegwayParams, twin: Twin, domain: Domain) -> Result<Self> {
        params.validate()?;
        if domain.dim() != 2 {
            return Err(Error::invalid("segway", format!("phenomena domain must be 2-D, got {}", domain.dim())));
        }
        Ok(Self { params, twin, domain })
    }

    pub fn nominal(params: SegwayParams, domain: Domain) -> Result<Self> {
        Self::new(params, Twin::Nominal, domain)
    }

    pub fn true_twin(params: SegwayParams, domain: Domain) -> Result<Self> {
        Self::new(params, Twin::True, domain)
    }

    pub fn params(&self) -> &SegwayParams {
        &self.params
    }

    pub fn twin(&self) -> Twin {
        self.twin
    }

    fn control(&self, s: &[f64; 6]) -> (f64, f64) {
        let g = &self.params.gains;
        let [x, y, heading, v, phi, phi_dot] = *s;
        let (ex, ey) = (self.params.goal[0] - x, self.params.goal[1] - y);
        let (sin_h, cos_h) = heading.sin_cos();
        // negative when the goal lies ahead
        let p = -(ex * cos_h + ey * sin_h);
        let p = p.clamp(-g.max_position_error, g.max_position_error);
        let accel = -(g.position * p + g.velocity * v + g.tilt * phi + g.tilt_rate * phi_dot);

        let turn = if ex.hypot(ey) < self.params.arrive_radius {
            0.0
        } else {
            let mut err = wrap(ey.atan2(ex) - heading);
            // reversing is as good as driving forward
            if err.abs() > PI / 2.0 {
                err = wrap(err - PI);
            }
            (g.heading * err).clamp(-g.max_turn_rate, g.max_turn_rate)
        };
        (accel, turn)
    }

    fn derivative(&self, s: &[f64; 6], accel: f64, turn: f64, disturbance: f64) -> [f64; 6] {
        let w2 = self.params.natural_frequency * self.params.natural_frequency;
        let [_, _, heading, v, phi, phi_dot] = *s;
        [
            v * heading.cos(),
            v * heading.sin(),
            turn,
            accel,
            phi_dot,
            w2 * phi.sin() - self.params.coupling * accel + disturbance,
        ]
    }

    fn emit(s: &[f64; 6], out: &mut Vec<f64>) {
        let [x, y, heading, v, phi, phi_dot] = *s;
        out.extend_from_slice(&[x, y, heading, v * heading.cos(), v * heading.sin(), phi, phi_dot]);
    }
}

fn wrap(angle: f64) -> f64 {
    let a = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if a == -PI {
        PI
    } else {
        a
    }
}

impl SystemModel for SegwayModel {
    fn schema(&self) -> SignalSchema {
        SignalSchema::new(SEGWAY_COORDINATES).expect("static names")
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn simulate(&self, d: &[f64], seed: u64) -> Result<Signal> {
        if !self.domain.contains(d) {
            return Err(Error::usage(format!("phenomena {d:?} outside the domain")));
        }
        let p = &self.params;
        let mut state = [d[0], d[1], 0.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let process_sigma = match self.twin {
            Twin::Nominal => 0.0,
            Twin::True => {
                state[0] += p.init_noise_sigma * normal();
                state[1] += p.init_noise_sigma * normal();
                state[2] += p.angle_noise_sigma * normal();
                state[4] += p.angle_noise_sigma * normal();
                p.process_noise_sigma
            }
        };

        let n = p.samples();
        let h = p.dt;
        let mut data = Vec::with_capacity(n * 7);
        Self::emit(&state, &mut data);
        for k in 1..n {
            let disturbance = if process_sigma > 0.0 { process_sigma * normal() } else { 0.0 };
            // control held over the step
            let (accel, turn) = self.control(&state);
            let f = |s: &[f64; 6]| self.derivative(s, accel, turn, disturbance);
            let k1 = f(&state);
            let k2 = f(&axpy(&state, 0.5 * h, &k1));
            let k3 = f(&axpy(&state, 0.5 * h, &k2));
            let k4 = f(&axpy(&state, h, &k3));
            for j in 0..6 {
                state[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            if state.iter().any(|v| !(v.abs() <= DIVERGENCE_LIMIT)) {
                return Err(Error::Divergence {
                    d: d.to_vec(),
                    seed,
                    time: k as f64 * h,
                });
            }
            Self::emit(&state, &mut data);
        }
        Signal::from_flat(h, 7, data)
    }
}

fn axpy(s: &[f64; 6], h: f64, k: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|j| s[j] + h * k[j])
}

/// Writes a Segway trajectory as CSV with a leading time column.
pub fn write_trajectory_csv<W: Write>(signal: &Signal, out: W) -> Result<()> {
    if signal.dim() != SEGWAY_COORDINATES.len() {
        return Err(Error::usage(format!("expected a 7-dimensional trajectory, got {}", signal.dim())));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time"];
    header.extend(SEGWAY_COORDINATES);
    w.write_record(&header)?;
    for (k, sample) in signal.samples().enumerate() {
        let mut row = vec![signal.time(k).to_string()];
        row.extend(sample.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
