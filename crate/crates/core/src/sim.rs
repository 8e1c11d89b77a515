//! Time-domain simulation of the DOB loops, Nyquist sampling and step metrics.
//!
//! Blocks are realized in controllable canonical form and integrated together
//! with fixed-step RK4. Dead time is a sample-exact delay line on the plant
//! input, never a rational approximation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;
use thiserror::Error;

use crate::model::{ControllerSet, DobFilter, ModelError, PlantModel};
use crate::tf::{ComplexResponse, FrequencyResponse, Polynomial, RationalTF, TfError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("transfer function is improper")]
    ImproperTF,
    #[error("plant must be strictly proper for simulation")]
    BiproperPlant,
    #[error("time step {dt} exceeds 1/(50·{fastest}) for the fastest loop pole")]
    StepTooLarge { dt: f64, fastest: f64 },
    #[error("invalid simulation setting: {0}")]
    InvalidSetting(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tf(#[from] TfError),
}

/// `ẋ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Output row.
    pub c: DVector<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `C (sI - A)^{-1} B + D`.
    pub fn eval(&self, s: Complex64) -> Option<Complex64> {
        let n = self.order();
        if n == 0 {
            return Some(Complex64::new(self.d, 0.0));
        }
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let a = Complex64::new(-self.a[(i, j)], 0.0);
            if i == j {
                a + s
            } else {
                a
            }
        });
        let b = DVector::<Complex64>::from_fn(n, |i, _| Complex64::new(self.b[i], 0.0));
        let x = m.lu().solve(&b)?;
        Some(
            (0..n)
                .map(|i| x[i] * self.c[i])
                .sum::<Complex64>()
                + self.d,
        )
    }
}

/// Controllable canonical realization of a proper transfer function.
pub fn realize(tf: &RationalTF) -> Result<StateSpace, SimError> {
    let blk = Block::new(tf)?;
    let n = blk.den.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for (k, ak) in blk.den.iter().enumerate() {
        a[(n - 1, k)] = -ak;
    }
    let mut b = DVector::zeros(n);
    if n > 0 {
        b[n - 1] = 1.0;
    }
    Ok(StateSpace {
        a,
        b,
        c: DVector::from_vec(blk.c.clone()),
        d: blk.d,
    })
}

/// Companion-form block stored by coefficients: `ẋ_i = x_{i+1}`,
/// `ẋ_n = -Σ a_k x_k + u`, `y = Σ c_k x_k + d u`.
#[derive(Debug, Clone, PartialEq)]
struct Block {
    den: Vec<f64>,
    c: Vec<f64>,
    d: f64,
}

impl Block {
    fn new(tf: &RationalTF) -> Result<Self, SimError> {
        if !tf.is_proper() {
            return Err(SimError::ImproperTF);
        }
        let den = tf.den();
        let n = den.degree();
        let num = tf.num();
        let d = if num.degree() == n && !num.is_zero() { num.coeff(n) } else { 0.0 };
        let rest = num.sub(&den.scale(d));
        Ok(Self {
            den: den.coeffs()[..n].to_vec(),
            c: (0..n).map(|k| rest.coeff(k)).collect(),
            d,
        })
    }

    fn n(&self) -> usize {
        self.den.len()
    }

    fn output(&self, x: &[f64], u: f64) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + self.d * u
    }

    fn derivative(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        let n = self.n();
        if n == 0 {
            return;
        }
        dx[..n - 1].copy_from_slice(&x[1..n]);
        dx[n - 1] = u - self.den.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
    }
}

/// Delay line holding one sample per step; the delay is rounded up to whole
/// samples so a step input is shifted by exactly `⌈τ/dt⌉` samples.
#[derive(Debug, Clone)]
pub struct DelayLine {
    samples: usize,
    buf: VecDeque<f64>,
}

impl DelayLine {
    pub fn new(tau: f64, dt: f64) -> Self {
        let samples = if tau > 0.0 { (tau / dt - 1e-9).ceil() as usize } else { 0 };
        Self {
            samples,
            buf: VecDeque::from(vec![0.0; samples + 1]),
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Appends the value at the current step.
    pub fn push(&mut self, v: f64) {
        self.buf.push_back(v);
        if self.buf.len() > self.samples + 1 {
            self.buf.pop_front();
        }
    }

    /// Delayed value at fraction `theta ∈ [0, 1]` of the current step.
    /// Requires at least one sample of delay.
    pub fn at(&self, theta: f64) -> f64 {
        let a = self.buf[0];
        let b = self.buf.get(1).copied().unwrap_or(a);
        (1.0 - theta) * a + theta * b
    }

    /// The sample leaving the line at the current step.
    pub fn output(&self) -> f64 {
        self.buf[0]
    }
}

/// Applies a pure delay to a sampled signal.
pub fn delay_samples(input: &[f64], tau: f64, dt: f64) -> Vec<f64> {
    let mut line = DelayLine::new(tau, dt);
    input
        .iter()
        .map(|&v| {
            line.push(v);
            line.output()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// `u_c = C (r - y)`.
    #[default]
    OneDof,
    /// `u_c = C_s (C_p r - y)`: stabilizing feedback with a reference filter.
    TwoDof,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Signal {
    #[default]
    Zero,
    Step { amplitude: f64, start: f64 },
    Sine { amplitude: f64, frequency: f64, start: f64 },
}

impl Signal {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Signal::Zero => 0.0,
            Signal::Step { amplitude, start } => {
                if t >= start {
                    amplitude
                } else {
                    0.0
                }
            }
            Signal::Sine { amplitude, frequency, start } => {
                if t >= start {
                    amplitude * (frequency * (t - start)).sin()
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimInputs {
    pub reference: Signal,
    pub disturbance: Signal,
    /// Uniform measurement noise on `[-a, a]`, held over each step.
    pub noise_amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub dt: f64,
    pub horizon: f64,
    /// Time constant of the roll-off added to improper controllers.
    pub derivative_filter_tau: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            horizon: 5.0,
            derivative_filter_tau: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub dt: f64,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub d_hat: Vec<f64>,
    /// `r`, `dis`, `noise`.
    pub channels: BTreeMap<String, Vec<f64>>,
    /// Time at which `|y|` exceeded the divergence threshold.
    pub diverged_at: Option<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// `C/(τ_f s + 1)^m` with the smallest `m` making it proper.
pub fn proper_controller(c: &RationalTF, tau_f: f64) -> Result<RationalTF, SimError> {
    let excess = c.num().degree() as i64 - c.den().degree() as i64;
    if excess <= 0 || c.is_zero() {
        return Ok(c.clone());
    }
    if !(tau_f > 0.0) {
        return Err(SimError::InvalidSetting("improper controller needs a positive derivative filter"));
    }
    let f = Polynomial::linear(1.0, tau_f).pow(excess as u32);
    Ok(RationalTF::new(c.num().clone(), c.den().mul(&f))?)
}

struct Loop {
    plant: Block,
    ctrl: Block,
    prefilter: Option<Block>,
    /// `Q/G_n` acting on the measurement, and `Q` acting on the control.
    dob: Option<(Block, Block)>,
    offsets: [usize; 6],
}

impl Loop {
    fn state_len(&self) -> usize {
        self.offsets[5]
    }
}

fn fastest_pole(tfs: &[&RationalTF]) -> Result<f64, SimError> {
    let mut m: f64 = 0.0;
    for tf in tfs {
        for p in tf.poles()? {
            m = m.max(p.norm());
        }
    }
    Ok(m)
}

/// Simulates the DOB loop:
/// `y = G (u + dis)` with dead time, `y_m = y + ξ`,
/// `d̂ = Q Ĝ_n^{-1} y_m - Q u`, `u = u_c - d̂`.
/// Without a DOB filter the loop reduces to `u = u_c`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_closed_loop(
    structure: Structure,
    plant: &PlantModel,
    delta: f64,
    dob: Option<&DobFilter>,
    controllers: &ControllerSet,
    inputs: &SimInputs,
    settings: &SimSettings,
) -> Result<SimTrace, SimError> {
    let dt = settings.dt;
    if !(dt > 0.0) || !(settings.horizon > 0.0) || !dt.is_finite() || !settings.horizon.is_finite() {
        return Err(SimError::InvalidSetting("dt and horizon must be positive"));
    }
    let g = crate::model::perturbed_plant(plant, delta)?;
    if !g.rational.is_strictly_proper() {
        return Err(SimError::BiproperPlant);
    }
    let c = proper_controller(&controllers.outer, settings.derivative_filter_tau)?;
    let pf = match (structure, &controllers.prefilter) {
        (Structure::TwoDof, Some(p)) => Some(p.clone()),
        _ => None,
    };
    let dob_tfs = match dob {
        Some(q) => {
            let qt = q.tf();
            let model = plant.approx_nominal.as_ref().unwrap_or(&plant.nominal);
            let f1 = qt.div(model)?;
            if !f1.is_proper() {
                return Err(SimError::InvalidSetting("Q/G_n must be proper; raise the filter order"));
            }
            Some((f1, qt))
        }
        None => None,
    };

    let mut all: Vec<&RationalTF> = vec![&g.rational, &c];
    if let Some(p) = &pf {
        all.push(p);
    }
    if let Some((f1, q)) = &dob_tfs {
        all.push(f1);
        all.push(q);
    }
    let fastest = fastest_pole(&all)?;
    if dt > 1.0 / (50.0 * fastest) * (1.0 + 1e-12) {
        return Err(SimError::StepTooLarge { dt, fastest });
    }

    let plant_b = Block::new(&g.rational)?;
    let ctrl_b = Block::new(&c)?;
    let pf_b = pf.as_ref().map(Block::new).transpose()?;
    let dob_b = match &dob_tfs {
        Some((f1, q)) => Some((Block::new(f1)?, Block::new(q)?)),
        None => None,
    };
    let sizes = [
        plant_b.n(),
        ctrl_b.n(),
        pf_b.as_ref().map_or(0, Block::n),
        dob_b.as_ref().map_or(0, |b| b.0.n()),
        dob_b.as_ref().map_or(0, |b| b.1.n()),
    ];
    let mut offsets = [0usize; 6];
    for i in 0..5 {
        offsets[i + 1] = offsets[i] + sizes[i];
    }
    let lp = Loop {
        plant: plant_b,
        ctrl: ctrl_b,
        prefilter: pf_b,
        dob: dob_b,
        offsets,
    };

    let steps = (settings.horizon / dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed);
    let mut line = DelayLine::new(g.tau, dt);
    let delayed = line.samples() > 0;

    let n = lp.state_len();
    let mut x = vec![0.0; n];
    let mut trace = SimTrace {
        dt,
        t: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        d_hat: Vec::with_capacity(steps + 1),
        channels: BTreeMap::new(),
        diverged_at: None,
    };
    let mut r_ch = Vec::with_capacity(steps + 1);
    let mut dis_ch = Vec::with_capacity(steps + 1);
    let mut noise_ch = Vec::with_capacity(steps + 1);

    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];

    for k in 0..=steps {
        let t = k as f64 * dt;
        let noise = if inputs.noise_amplitude > 0.0 {
            inputs.noise_amplitude * rng.random_range(-1.0..=1.0)
        } else {
            0.0
        };
        let sig = Signals {
            inputs,
            noise,
            line: if delayed { Some(&line) } else { None },
        };
        let out = lp.outputs(&x, t, 0.0, &sig);
        trace.t.push(t);
        trace.y.push(out.y);
        trace.u.push(out.u);
        trace.d_hat.push(out.d_hat);
        r_ch.push(inputs.reference.at(t));
        dis_ch.push(inputs.disturbance.at(t));
        noise_ch.push(noise);
        if !out.y.is_finite() || out.y.abs() > DIVERGENCE_LIMIT {
            trace.diverged_at = Some(t);
            break;
        }
        if k == steps {
            break;
        }
        if delayed {
            line.push(out.u + inputs.disturbance.at(t));
        }
        let sig = Signals {
            inputs,
            noise,
            line: if delayed { Some(&line) } else { None },
        };
        lp.deriv(&x, t, 0.0, &sig, &mut k1);
        axpy(&x, 0.5 * dt, &k1, &mut tmp);
        lp.deriv(&tmp, t + 0.5 * dt, 0.5, &sig, &mut k2);
        axpy(&x, 0.5 * dt, &k2, &mut tmp);
        lp.deriv(&tmp, t + 0.5 * dt, 0.5, &sig, &mut k3);
        axpy(&x, dt, &k3, &mut tmp);
        lp.deriv(&tmp, t + dt, 1.0, &sig, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    trace.channels.insert("r".into(), r_ch);
    trace.channels.insert("dis".into(), dis_ch);
    trace.channels.insert("noise".into(), noise_ch);
    Ok(trace)
}

fn axpy(x: &[f64], a: f64, k: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = x[i] + a * k[i];
    }
}

struct Signals<'a> {
    inputs: &'a SimInputs,
    noise: f64,
    line: Option<&'a DelayLine>,
}

struct Outputs {
    y: f64,
    y_meas: f64,
    r_f: f64,
    e: f64,
    u: f64,
    d_hat: f64,
    plant_in: f64,
}

impl Loop {
    fn split<'a>(&self, x: &'a [f64]) -> [&'a [f64]; 5] {
        let o = &self.offsets;
        [
            &x[o[0]..o[1]],
            &x[o[1]..o[2]],
            &x[o[2]..o[3]],
            &x[o[3]..o[4]],
            &x[o[4]..o[5]],
        ]
    }

    fn outputs(&self, x: &[f64], t: f64, theta: f64, sig: &Signals) -> Outputs {
        let [xp, xc, xf, x1, x2] = self.split(x);
        let y = self.plant.output(xp, 0.0);
        let y_meas = y + sig.noise;
        let r = sig.inputs.reference.at(t);
        let r_f = self.prefilter.as_ref().map_or(r, |p| p.output(xf, r));
        let e = r_f - y_meas;
        let u_c = self.ctrl.output(xc, e);
        // Q is strictly proper, so d̂ depends on u only through the filter state.
        let d_hat = match &self.dob {
            Some((f1, q)) => f1.output(x1, y_meas) - q.output(x2, 0.0),
            None => 0.0,
        };
        let u = u_c - d_hat;
        let dis = sig.inputs.disturbance.at(t);
        let plant_in = match sig.line {
            Some(l) => l.at(theta),
            None => u + dis,
        };
        Outputs {
            y,
            y_meas,
            r_f,
            e,
            u,
            d_hat,
            plant_in,
        }
    }

    fn deriv(&self, x: &[f64], t: f64, theta: f64, sig: &Signals, dx: &mut [f64]) {
        let o = self.outputs(x, t, theta, sig);
        let [xp, xc, xf, x1, x2] = self.split(x);
        let off = &self.offsets;
        let (dp, rest) = dx.split_at_mut(off[1]);
        let (dc, rest) = rest.split_at_mut(off[2] - off[1]);
        let (df, rest) = rest.split_at_mut(off[3] - off[2]);
        let (d1, d2) = rest.split_at_mut(off[4] - off[3]);
        self.plant.derivative(xp, o.plant_in, dp);
        self.ctrl.derivative(xc, o.e, dc);
        if let Some(p) = &self.prefilter {
            p.derivative(xf, sig.inputs.reference.at(t), df);
        }
        if let Some((f1, q)) = &self.dob {
            f1.derivative(x1, o.y_meas, d1);
            q.derivative(x2, o.u, d2);
        }
        let _ = o.r_f;
    }
}

// ---------------------------------------------------------------------------

/// Samples `L(jw)` on a log grid and inserts midpoints wherever the phase
/// moves more than 5° between neighbours.
pub fn nyquist_curve<L: FrequencyResponse + ?Sized>(
    l: &L,
    w_lo: f64,
    w_hi: f64,
    n_points: usize,
) -> Result<ComplexResponse, SimError> {
    if !(w_lo > 0.0) || !(w_hi > w_lo) || n_points < 2 {
        return Err(SimError::InvalidSetting("need 0 < w_lo < w_hi and at least two points"));
    }
    let max_step = 5.0 * PI / 180.0;
    let base = crate::tf::log_grid(w_lo, w_hi, n_points);
    let eval = |w: f64| l.response_at(Complex64::new(0.0, w));
    let mut grid = vec![base[0]];
    let mut values = vec![eval(base[0])?];
    for &w in &base[1..] {
        let v = eval(w)?;
        refine(&eval, *grid.last().unwrap(), *values.last().unwrap(), w, v, max_step, 0, &mut grid, &mut values)?;
        grid.push(w);
        values.push(v);
    }
    let pole_hits = vec![false; grid.len()];
    Ok(ComplexResponse {
        grid,
        values,
        pole_hits,
    })
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> Result<Complex64, TfError>>(
    eval: &F,
    w0: f64,
    v0: Complex64,
    w1: f64,
    v1: Complex64,
    max_step: f64,
    depth: u32,
    grid: &mut Vec<f64>,
    values: &mut Vec<Complex64>,
) -> Result<(), SimError> {
    let step = (v1 / v0).arg().abs();
    if step <= max_step || depth >= 24 {
        return Ok(());
    }
    let wm = (w0 * w1).sqrt();
    let vm = eval(wm)?;
    refine(eval, w0, v0, wm, vm, max_step, depth + 1, grid, values)?;
    grid.push(wm);
    values.push(vm);
    refine(eval, wm, vm, w1, v1, max_step, depth + 1, grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Supremum of `y`.
    pub overshoot: f64,
    /// Infimum of `y`.
    pub undershoot: f64,
    /// Time after which `y` stays within 2% of the final reference value.
    pub settling_time_2pct: Option<f64>,
    pub steady_state_error: f64,
    pub settled: bool,
}

/// Step-response figures relative to the final value of the `r` channel.
pub fn step_metrics(trace: &SimTrace) -> Result<StepMetrics, SimError> {
    if trace.is_empty() {
        return Err(SimError::InvalidSetting("empty trace"));
    }
    let r_final = trace
        .channels
        .get("r")
        .and_then(|r| r.last().copied())
        .ok_or(SimError::InvalidSetting("trace has no reference channel"))?;
    if r_final == 0.0 {
        return Err(SimError::InvalidSetting("reference must be a nonzero step"));
    }
    let overshoot = trace.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let undershoot = trace.y.iter().copied().fold(f64::INFINITY, f64::min);
    let band = 0.02 * r_final.abs();
    let last_out = trace.y.iter().rposition(|y| (y - r_final).abs() > band);
    let settled = last_out.is_none_or(|i| i + 1 < trace.len());
    let settling_time_2pct = if settled {
        Some(last_out.map_or(trace.t[0], |i| trace.t[i + 1]))
    } else {
        None
    };
    Ok(StepMetrics {
        overshoot,
        undershoot,
        settling_time_2pct,
        steady_state_error: r_final - trace.y[trace.len() - 1],
        settled,
    })
}

/// Amplitude of the `w0` component of `x` over samples at or after `from`,
/// by least squares on `[sin, cos, 1]`.
pub fn sinusoid_amplitude(t: &[f64], x: &[f64], w0: f64, from: f64) -> f64 {
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut rhs = nalgebra::Vector3::<f64>::zeros();
    for (&ti, &xi) in t.iter().zip(x) {
        if ti < from {
            continue;
        }
        let phi = nalgebra::Vector3::new((w0 * ti).sin(), (w0 * ti).cos(), 1.0);
        m += phi * phi.transpose();
        rhs += phi * xi;
    }
    match m.lu().solve(&rhs) {
        Some(c) => c[0].hypot(c[1]),
        None => f64::NAN,
    }
}

/// Root-mean-square of `x` over samples at or after `from`.
pub fn rms_from(t: &[f64], x: &[f64], from: f64) -> f64 {
    let v: Vec<f64> = t
        .iter()
        .zip(x)
        .filter(|(ti, _)| **ti >= from)
        .map(|(_, xi)| xi * xi)
        .collect();
    if v.is_empty() {
        return f64::NAN;
    }
    (v.iter().sum::<f64>() / v.len() as f64).sqrt()
}
