//! DOB bandwidth constraints.
//!
//! Two backends answer the same question — which filter bandwidths `g` are
//! admissible for a plant and a design spec:
//!
//! * `Literal` evaluates the ψ functions and the printed sufficient
//!   inequalities on frequency/Δ grids;
//! * `Exact` measures the closed-loop quantities those inequalities are meant
//!   to guarantee (robust stability, sensitivity peaks, the achieved
//!   performance band) directly over the Δ grid.
//!
//! The theorem is selected from the plant: right-half-plane pole, right-half-plane
//! zero, dead time, or minimum phase, in that order of precedence.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

use crate::integral::{integrate, semicircle_sup, AnalysisError};
use crate::model::{
    approx_inverse_loop, inner_loop, outer_loop, ControllerSet, DobFilter, LoopSet, ModelError,
    PlantModel, DEFAULT_DELTA_SAMPLES,
};
use crate::stability::{closed_loop_stability, verdict_from_roots, Stability, StabilityError};
use crate::tf::{blaschke, classify, log_grid, QuasiRational, RationalTF, TfError, AXIS_TOL};
use crate::LogConvention;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("plant is not minimum phase")]
    NotMinimumPhase,
    #[error("plant has dead time")]
    HasDelay,
    #[error("plant has no dead time")]
    ZeroDelay,
    #[error("plant has no right-half-plane zero")]
    NoRhpZero,
    #[error("plant has no right-half-plane pole")]
    NoRhpPole,
    #[error("an approximate nominal model is required for a plant with a right-half-plane zero")]
    MissingApproxNominal,
    #[error("a stabilizing outer controller is required for an unstable plant")]
    MissingController,
    #[error("the stabilizing controller does not stabilize the nominal plant")]
    NotStabilized,
    #[error("invalid design spec: {0}")]
    InvalidSpec(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("logarithm argument outside its domain: {0}")]
    DomainError(&'static str),
    #[error("g·τ = {0} exceeds 3")]
    DiscriminantNegative(f64),
    #[error("angle bound {0} lies outside (0, π/2); no band satisfies the spec")]
    InfeasibleAngles(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Tf(#[from] TfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    MinimumPhase,
    TimeDelay,
    RhpZero,
    RhpPole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Literal,
    #[default]
    Exact,
}

/// How `sup_log_s` is read: as a value of `sup log|S|`, or as a magnitude
/// bound on `|S|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupKind {
    #[default]
    Log,
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub alpha: f64,
    pub alpha_beta: f64,
    pub alpha_gamma: f64,
    /// Demanded performance band: `|S| ≤ α_β` on `[0, w_beta]`.
    pub w_beta: f64,
    pub w_gamma: f64,
    /// When set, `w_γ = w_gamma_per_g · g` replaces the fixed `w_gamma`.
    pub w_gamma_per_g: Option<f64>,
    pub sup_log_s: f64,
    pub sup_kind: SupKind,
    pub delta: f64,
    pub k: u32,
    pub m: f64,
    /// Fixed region radius; by default `g·δ^{-1/n}` for an order-`n` filter.
    pub r: Option<f64>,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<(), SolverError> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.alpha) || !unit(self.alpha_beta) {
            return Err(SolverError::InvalidSpec("alpha and alpha_beta must lie in (0, 1]"));
        }
        if !(self.alpha_gamma > 0.0) {
            return Err(SolverError::InvalidSpec("alpha_gamma must be positive"));
        }
        if !(self.w_beta > 0.0) || !(self.w_gamma > self.w_beta) || !self.w_gamma.is_finite() {
            return Err(SolverError::InvalidSpec("need 0 < w_beta < w_gamma"));
        }
        if let Some(c) = self.w_gamma_per_g {
            if !(c > 0.0) {
                return Err(SolverError::InvalidSpec("w_gamma_per_g must be positive"));
            }
        }
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(SolverError::InvalidSpec("delta must lie in (0, 1/2]"));
        }
        if self.k < 1 {
            return Err(SolverError::InvalidSpec("k must be at least 1"));
        }
        if !(self.sup_log_s > 0.0) {
            return Err(SolverError::InvalidSpec("sup_log_s must be positive"));
        }
        if self.sup_kind == SupKind::Magnitude && !(self.sup_log_s > 1.0) {
            return Err(SolverError::InvalidSpec("a magnitude bound on |S| must exceed 1"));
        }
        if let Some(r) = self.r {
            if !(r > 0.0) {
                return Err(SolverError::InvalidSpec("R must be positive"));
            }
        }
        Ok(())
    }

    /// The budget as a value of `log sup|S|` in the given convention.
    pub fn sup_log(&self, conv: LogConvention) -> f64 {
        match self.sup_kind {
            SupKind::Log => self.sup_log_s,
            SupKind::Magnitude => conv.log(self.sup_log_s),
        }
    }

    /// The budget as a bound on `sup|S|`.
    pub fn peak_budget(&self, conv: LogConvention) -> f64 {
        match self.sup_kind {
            SupKind::Log => conv.exp(self.sup_log_s),
            SupKind::Magnitude => self.sup_log_s,
        }
    }

    pub fn w_gamma_at(&self, g: f64) -> f64 {
        self.w_gamma_per_g.map_or(self.w_gamma, |c| c * g)
    }
}

/// Everything a constraint check needs apart from the bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub plant: PlantModel,
    pub order: u32,
    pub controllers: Option<ControllerSet>,
    pub spec: DesignSpec,
    pub delta_points: usize,
    pub conv: LogConvention,
}

impl Problem {
    pub fn new(plant: PlantModel, order: u32, spec: DesignSpec) -> Self {
        Self {
            plant,
            order,
            controllers: None,
            spec,
            delta_points: DEFAULT_DELTA_SAMPLES,
            conv: LogConvention::Nat,
        }
    }

    pub fn with_controllers(mut self, c: ControllerSet) -> Self {
        self.controllers = Some(c);
        self
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.plant.delta.samples(self.delta_points)
    }

    pub fn theorem(&self) -> Result<Theorem, SolverError> {
        select_theorem(&self.plant)
    }

    /// The loop the theorem constrains, one per Δ sample.
    pub fn loops(&self, theorem: Theorem, g: f64) -> Result<Vec<LoopSet>, SolverError> {
        let q = DobFilter::make_lpf(self.order, g)?;
        self.deltas()
            .into_iter()
            .map(|d| self.loop_at(theorem, &q, d))
            .collect()
    }

    fn loop_at(&self, theorem: Theorem, q: &DobFilter, delta: f64) -> Result<LoopSet, SolverError> {
        Ok(match theorem {
            Theorem::MinimumPhase | Theorem::TimeDelay => inner_loop(&self.plant, q, delta)?,
            Theorem::RhpZero => approx_inverse_loop(&self.plant, q, delta)?,
            Theorem::RhpPole => {
                let c = self.controllers.as_ref().ok_or(SolverError::MissingController)?;
                outer_loop(&self.plant, q, c, delta)?
            }
        })
    }
}

/// Right-half-plane pole → right-half-plane zero → dead time → minimum phase.
pub fn select_theorem(plant: &PlantModel) -> Result<Theorem, SolverError> {
    let c = classify(&plant.nominal_delayed())?;
    Ok(if c.has_rhp_pole() {
        Theorem::RhpPole
    } else if c.has_rhp_zero() {
        Theorem::RhpZero
    } else if c.has_delay() {
        Theorem::TimeDelay
    } else {
        Theorem::MinimumPhase
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub theorem: Theorem,
    pub backend: Backend,
    /// The bandwidth the point values refer to (the upper interval edge for sweeps).
    pub bandwidth: Option<f64>,
    pub psi_values: BTreeMap<String, f64>,
    pub literal_ok: BTreeMap<String, bool>,
    pub sweep_bandwidth_interval: Option<[f64; 2]>,
    pub achieved_w_beta: f64,
    pub peak_s: f64,
    pub peak_t: f64,
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ConstraintReport {
    fn empty(theorem: Theorem, backend: Backend) -> Self {
        Self {
            theorem,
            backend,
            bandwidth: None,
            psi_values: BTreeMap::new(),
            literal_ok: BTreeMap::new(),
            sweep_bandwidth_interval: None,
            achieved_w_beta: f64::NAN,
            peak_s: f64::NAN,
            peak_t: f64::NAN,
            values: BTreeMap::new(),
            notes: Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// ψ functions

/// `(sup + 3δ/(2k)) / (sup + log(1/α))`; the usable band is `w_β ≤ ψ w_γ`.
pub fn psi_minimum_phase(spec: &DesignSpec, conv: LogConvention) -> f64 {
    let sup = spec.sup_log(conv);
    (sup + 3.0 * spec.delta / (2.0 * spec.k as f64)) / (sup + conv.log(1.0 / spec.alpha))
}

/// `(sup + 3πδ/(4τR)) / (sup + log(1/α))`.
pub fn psi_time_delay(spec: &DesignSpec, tau: f64, r: f64, conv: LogConvention) -> Result<f64, SolverError> {
    if !(tau > 0.0) {
        return Err(SolverError::ZeroDelay);
    }
    let sup = spec.sup_log(conv);
    Ok((sup + 3.0 * PI * spec.delta / (4.0 * tau * r)) / (sup + conv.log(1.0 / spec.alpha)))
}

fn tan_checked(x: f64) -> Result<f64, SolverError> {
    if x > 0.0 && x < FRAC_PI_2 {
        Ok(x.tan())
    } else {
        Err(SolverError::InfeasibleAngles(x))
    }
}

/// `(ψ₁, ψ₂)` from the spec's `w_β`, `w_γ`, with `b_s_val = |B_S^{-1}(z)|`.
pub fn psi_rhp_zero(
    spec: &DesignSpec,
    z: f64,
    b_s_val: f64,
    conv: LogConvention,
) -> Result<(f64, f64), SolverError> {
    Ok((
        psi1_rhp_zero(spec, z, b_s_val, spec.w_gamma, conv)?,
        psi2_rhp_zero(spec, z, b_s_val, spec.w_beta, conv)?,
    ))
}

fn psi1_rhp_zero(spec: &DesignSpec, z: f64, b: f64, w_gamma: f64, conv: LogConvention) -> Result<f64, SolverError> {
    if !(z > 0.0) {
        return Err(SolverError::InvalidArgument("z must be positive"));
    }
    let sup = spec.sup_log(conv);
    let a = sup + conv.log(1.0 / spec.alpha_beta);
    let gg = (w_gamma / z).atan();
    let x = (conv.log(1.0 + spec.alpha_gamma) * (PI - 2.0 * gg) + 2.0 * sup * gg) / (2.0 * a)
        - PI * conv.log(b) / (2.0 * a);
    tan_checked(x)
}

fn psi2_rhp_zero(spec: &DesignSpec, z: f64, b: f64, w_beta: f64, conv: LogConvention) -> Result<f64, SolverError> {
    if !(z > 0.0) {
        return Err(SolverError::InvalidArgument("z must be positive"));
    }
    let sup = spec.sup_log(conv);
    let a = sup + conv.log(1.0 / spec.alpha_beta);
    let inv_g = conv.log(1.0 / (1.0 + spec.alpha_gamma));
    let gb = (w_beta / z).atan();
    let x = (inv_g * PI + 2.0 * (conv.log(1.0 / spec.alpha_beta) + sup) * gb) / (2.0 * (sup + inv_g))
        + PI * conv.log(b) / (2.0 * a);
    tan_checked(x)
}

/// `tan(π(log(1/α) + log|B_T^{-1}(p)|) / (2(log(1/α) + log‖T_o‖∞)))`.
pub fn psi_rhp_pole(alpha: f64, b_t_val: f64, t_inf_norm: f64, conv: LogConvention) -> Result<f64, SolverError> {
    let la = conv.log(1.0 / alpha);
    tan_checked(PI * (la + conv.log(b_t_val)) / (2.0 * (la + conv.log(t_inf_norm))))
}

// ---------------------------------------------------------------------------
// Exact backend

/// Worst-case closed-loop quantities over the Δ grid at one bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactMetrics {
    pub g: f64,
    pub w_gamma: f64,
    pub robustly_stable: bool,
    pub peak_s: f64,
    pub peak_t: f64,
    /// Largest `w` with `|S| ≤ α_β` on all of `[0, w]`.
    pub achieved_w_beta: f64,
    /// Same with `α` in place of `α_β`.
    pub achieved_w_alpha: f64,
    /// `max |L|` and `max |T|` for `w ≥ w_γ`.
    pub l_tail: f64,
    pub t_tail: f64,
    /// Δ sample attaining `peak_s`.
    pub worst_delta: f64,
    pub admissible: bool,
}

const METRIC_GRID: (f64, f64, usize) = (1e-3, 1e5, 1601);

fn metric_grid() -> Vec<f64> {
    log_grid(METRIC_GRID.0, METRIC_GRID.1, METRIC_GRID.2)
}

struct Curves {
    l: Vec<f64>,
    s: Vec<f64>,
    t: Vec<f64>,
}

fn parts(l: &QuasiRational, w: f64) -> (f64, f64, f64) {
    let (n, d) = l.eval_parts(Complex64::new(0.0, w));
    let c = d + n;
    ((n / d).norm(), (d / c).norm(), (n / c).norm())
}

fn curves(l: &QuasiRational, grid: &[f64]) -> Curves {
    let mut out = Curves {
        l: Vec::with_capacity(grid.len()),
        s: Vec::with_capacity(grid.len()),
        t: Vec::with_capacity(grid.len()),
    };
    for &w in grid {
        let (a, b, c) = parts(l, w);
        out.l.push(a);
        out.s.push(b);
        out.t.push(c);
    }
    out
}

/// Maximum of `f` on the grid, refined on a fine local grid around the argmax.
fn refined_max<F: Fn(f64) -> f64>(grid: &[f64], vals: &[f64], f: F) -> f64 {
    let (i, best) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    (0..=64)
        .map(|k| f(lo * (hi / lo).powf(k as f64 / 64.0)))
        .fold(best, f64::max)
}

/// Largest `w` such that `s(w') ≤ level` for every `w' ≤ w`.
fn first_crossing<F: Fn(f64) -> f64>(grid: &[f64], vals: &[f64], level: f64, f: F) -> f64 {
    match vals.iter().position(|v| *v > level) {
        None => f64::INFINITY,
        Some(0) => 0.0,
        Some(i) => {
            let (mut lo, mut hi) = (grid[i - 1], grid[i]);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > level {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            lo
        }
    }
}

fn tail_max<F: Fn(f64) -> f64>(grid: &[f64], vals: &[f64], from: f64, f: F) -> f64 {
    grid.iter()
        .zip(vals)
        .filter(|(w, _)| **w >= from)
        .map(|(_, v)| *v)
        .fold(f(from), f64::max)
}

pub fn exact_metrics(problem: &Problem, theorem: Theorem, g: f64) -> Result<ExactMetrics, SolverError> {
    let spec = &problem.spec;
    let budget = spec.peak_budget(problem.conv);
    let w_gamma = spec.w_gamma_at(g);
    let grid = metric_grid();
    let mut m = ExactMetrics {
        g,
        w_gamma,
        robustly_stable: true,
        peak_s: 0.0,
        peak_t: 0.0,
        achieved_w_beta: f64::INFINITY,
        achieved_w_alpha: f64::INFINITY,
        l_tail: 0.0,
        t_tail: 0.0,
        worst_delta: f64::NAN,
        admissible: false,
    };
    for (ls, delta) in problem.loops(theorem, g)?.iter().zip(problem.deltas()) {
        m.robustly_stable &= closed_loop_stability(&ls.l)?.is_stable();
        let l = &ls.l;
        let c = curves(l, &grid);
        let ps = refined_max(&grid, &c.s, |w| parts(l, w).1);
        if ps > m.peak_s {
            m.peak_s = ps;
            m.worst_delta = delta;
        }
        m.peak_t = m.peak_t.max(refined_max(&grid, &c.t, |w| parts(l, w).2));
        m.achieved_w_beta = m
            .achieved_w_beta
            .min(first_crossing(&grid, &c.s, spec.alpha_beta, |w| parts(l, w).1));
        m.achieved_w_alpha = m
            .achieved_w_alpha
            .min(first_crossing(&grid, &c.s, spec.alpha, |w| parts(l, w).1));
        m.l_tail = m.l_tail.max(tail_max(&grid, &c.l, w_gamma, |w| parts(l, w).0));
        m.t_tail = m.t_tail.max(tail_max(&grid, &c.t, w_gamma, |w| parts(l, w).2));
    }
    m.admissible = m.robustly_stable && m.peak_s <= budget && m.achieved_w_beta >= spec.w_beta;
    match theorem {
        // The tail hypothesis behind the Bode-integral bound.
        Theorem::MinimumPhase => m.admissible &= m.l_tail <= spec.delta,
        // Co-sensitivity roll-off of the outer loop.
        Theorem::RhpPole => m.admissible &= m.t_tail <= spec.alpha,
        // For a right-half-plane zero the co-sensitivity tail is reported, not
        // gated: |T| above w_γ is bounded below by |r_err(∞)|-driven terms that
        // no bandwidth removes.
        Theorem::RhpZero | Theorem::TimeDelay => {}
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Literal backend

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LiteralResult {
    pub psi: BTreeMap<String, f64>,
    pub ok: BTreeMap<String, bool>,
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub admissible: bool,
}

fn jw(w: f64) -> Complex64 {
    Complex64::new(0.0, w)
}

/// Grid on `(0, w)` (open at the right end) for "for all w < …" checks.
fn below(w: f64) -> Vec<f64> {
    if !(w > 0.0) || !w.is_finite() {
        return Vec::new();
    }
    log_grid(w * 1e-5, w * (1.0 - 1e-9), 400)
}

fn above(w: f64) -> Vec<f64> {
    if !w.is_finite() {
        return Vec::new();
    }
    let w = w.max(1e-9);
    log_grid(w * (1.0 + 1e-9), w.max(METRIC_GRID.1) * 10.0, 400)
}

struct Pieces {
    q: RationalTF,
    w: RationalTF,
}

impl Pieces {
    fn new(problem: &Problem, q: &DobFilter) -> Self {
        Self {
            q: q.tf(),
            w: problem.plant.weight.realize(),
        }
    }

    fn at(&self, w: f64) -> Result<(Complex64, Complex64), SolverError> {
        Ok((self.q.eval(jw(w))?, self.w.eval(jw(w))?))
    }
}

fn all_deltas<F>(deltas: &[f64], grid: &[f64], mut f: F) -> Result<bool, SolverError>
where
    F: FnMut(f64, f64) -> Result<bool, SolverError>,
{
    for &d in deltas {
        for &w in grid {
            if !f(d, w)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

pub fn literal_eval(problem: &Problem, theorem: Theorem, g: f64) -> Result<LiteralResult, SolverError> {
    match theorem {
        Theorem::MinimumPhase => literal_minimum_phase(problem, g),
        Theorem::TimeDelay => literal_time_delay(problem, g),
        Theorem::RhpZero => literal_rhp_zero(problem, g),
        Theorem::RhpPole => literal_rhp_pole(problem, g),
    }
}

fn literal_minimum_phase(problem: &Problem, g: f64) -> Result<LiteralResult, SolverError> {
    let spec = &problem.spec;
    let conv = problem.conv;
    let mut out = LiteralResult::default();
    let deltas = problem.deltas();
    let q = DobFilter::make_lpf(problem.order, g)?;
    let nominal_tail_ok = nominal_tail_ok(problem, g)?;
    out.ok.insert("nominal_loop_tail".into(), nominal_tail_ok);

    if problem.order == 1 {
        out.notes.push("first-order DOB: good robustness, limited performance".into());
        out.admissible = nominal_tail_ok;
        return Ok(out);
    }
    if problem.order != spec.k + 1 {
        out.notes.push(format!(
            "filter order {} differs from k + 1 = {}",
            problem.order,
            spec.k + 1
        ));
    }
    let psi = psi_minimum_phase(spec, conv);
    let w_gamma = spec.w_gamma_at(g);
    let wb = psi * w_gamma;
    out.psi.insert("psi".into(), psi);
    out.values.insert("w_beta_bound".into(), wb);

    let p = Pieces::new(problem, &q);
    let a = spec.alpha;
    let filter_gain_below_w_beta = all_deltas(&deltas, &below(wb), |d, w| {
        let (qv, wv) = p.at(w)?;
        Ok(qv.norm() >= (1.0 - a) / (1.0 + a * (d * wv).norm()))
    })?;
    let ratio = |d: f64, w: f64| -> Result<f64, SolverError> {
        let (qv, wv) = p.at(w)?;
        Ok((1.0 - qv).norm() / (1.0 + d * qv * wv).norm())
    };
    let sensitivity_at_w_beta = all_deltas(&deltas, &[wb], |d, w| Ok(ratio(d, w)? >= a))?;
    let mut grid_low = below(wb);
    grid_low.push(wb);
    let sensitivity_below_w_beta = all_deltas(&deltas, &grid_low, |d, w| Ok(ratio(d, w)? <= a))?;
    out.ok.insert("filter_gain_below_w_beta".into(), filter_gain_below_w_beta);
    out.ok.insert("sensitivity_at_w_beta".into(), sensitivity_at_w_beta);
    out.ok.insert("sensitivity_below_w_beta".into(), sensitivity_below_w_beta);
    let low_frequency_ok = filter_gain_below_w_beta && sensitivity_at_w_beta;
    if low_frequency_ok != sensitivity_below_w_beta {
        out.notes
            .push("the |1+α|ΔW|| and |1+ΔQW| forms of the low-frequency condition disagree".into());
    }
    out.ok.insert("low_frequency_forms_agree".into(), low_frequency_ok == sensitivity_below_w_beta);
    out.admissible = low_frequency_ok && nominal_tail_ok;
    Ok(out)
}

/// `|L_i(jw)| ≤ δ` for all `w ≥ w_γ` on the nominal inner loop.
fn nominal_tail_ok(problem: &Problem, g: f64) -> Result<bool, SolverError> {
    let q = DobFilter::make_lpf(problem.order, g)?;
    let ls = inner_loop(&problem.plant, &q, problem.plant.delta.nominal_sample())?;
    let w_gamma = problem.spec.w_gamma_at(g);
    let mut grid = vec![w_gamma];
    grid.extend(above(w_gamma));
    Ok(grid.iter().all(|w| parts(&ls.l, *w).0 <= problem.spec.delta))
}

/// Largest `g` whose nominal inner loop satisfies `|L_i| ≤ δ` beyond `w_γ`.
pub fn literal_bandwidth_cap(problem: &Problem) -> Result<f64, SolverError> {
    let ok = |g: f64| nominal_tail_ok(problem, g);
    let (mut lo, mut hi) = (1e-3, 1e-3);
    if !ok(lo)? {
        return Ok(0.0);
    }
    while ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Ok(f64::INFINITY);
        }
    }
    while hi / lo - 1.0 > 1e-6 {
        let mid = (lo * hi).sqrt();
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn default_r(problem: &Problem, g: f64) -> f64 {
    problem
        .spec
        .r
        .unwrap_or_else(|| g * problem.spec.delta.powf(-1.0 / problem.order as f64))
}

/// Smallest `R` with `sup |L_i| ≤ δ` on the axis beyond `R` and on the
/// right-half-plane arc of radius `R`, worst case over Δ.
pub fn smallest_feasible_r(problem: &Problem, theorem: Theorem, g: f64) -> Result<f64, SolverError> {
    let loops = problem.loops(theorem, g)?;
    let ok = |r: f64| -> Result<bool, SolverError> {
        for ls in &loops {
            if semicircle_sup(&ls.l, r)? > problem.spec.delta {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut hi = g.max(1e-6);
    let mut n = 0;
    while !ok(hi)? {
        hi *= 2.0;
        n += 1;
        if n > 60 {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = hi / 2.0;
    if ok(lo)? {
        // Feasible all the way down to g·2^-k; bound the search.
        lo = hi * 1e-6;
        if ok(lo)? {
            return Ok(lo);
        }
    }
    while hi / lo - 1.0 > 1e-4 {
        let mid = (lo * hi).sqrt();
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn literal_time_delay(problem: &Problem, g: f64) -> Result<LiteralResult, SolverError> {
    let spec = &problem.spec;
    let conv = problem.conv;
    let tau = problem.plant.tau;
    let mut out = LiteralResult::default();
    let deltas = problem.deltas();
    let q = DobFilter::make_lpf(problem.order, g)?;
    let r = default_r(problem, g);
    let psi = psi_time_delay(spec, tau, r, conv)?;
    let wr = psi * r;
    out.psi.insert("psi".into(), psi);
    out.values.insert("r".into(), r);
    out.values.insert("psi_r".into(), wr);
    let r_min = smallest_feasible_r(problem, Theorem::TimeDelay, g)?;
    out.values.insert("r_min".into(), r_min);
    if r_min.is_finite() {
        out.psi.insert("psi_at_r_min".into(), psi_time_delay(spec, tau, r_min, conv)?);
    }

    let p = Pieces::new(problem, &q);
    let a = spec.alpha;
    let mut grid = below(wr);
    grid.push(wr);
    let filter_ratio_below_psi_r = all_deltas(&deltas, &grid, |d, w| {
        let (qv, wv) = p.at(w)?;
        Ok(qv.norm() / (1.0 - qv).norm() >= (1.0 - a) / (a * (1.0 + d * wv).norm()))
    })?;
    let sensitivity_at_psi_r = all_deltas(&deltas, &[wr], |d, w| {
        let (qv, wv) = p.at(w)?;
        let e = Complex64::from_polar(1.0, -w * tau);
        Ok((1.0 - qv).norm() / (1.0 - qv + qv * (1.0 + d * wv) * e).norm() >= a)
    })?;
    out.ok.insert("filter_ratio_below_psi_r".into(), filter_ratio_below_psi_r);
    out.ok.insert("sensitivity_at_psi_r".into(), sensitivity_at_psi_r);
    let mut admissible = filter_ratio_below_psi_r && sensitivity_at_psi_r;
    if problem.order == 1 {
        let bandwidth_below_psi_r = all_deltas(&deltas, &grid, |d, w| {
            let (_, wv) = p.at(w)?;
            Ok(g >= (1.0 - a) * w / (a * (1.0 + d * wv).norm()))
        })?;
        let first_order_sensitivity_at_psi_r = all_deltas(&deltas, &[wr], |d, w| {
            let (_, wv) = p.at(w)?;
            let e = Complex64::from_polar(1.0, -w * tau);
            Ok(w / (jw(w) + g * (1.0 + d * wv) * e).norm() >= a)
        })?;
        out.ok.insert("bandwidth_below_psi_r".into(), bandwidth_below_psi_r);
        out.ok.insert("first_order_sensitivity_at_psi_r".into(), first_order_sensitivity_at_psi_r);
        admissible &= bandwidth_below_psi_r && first_order_sensitivity_at_psi_r;
    }
    out.admissible = admissible;
    Ok(out)
}

/// The right-half-plane zero closest to the origin, as a positive real.
fn rhp_zero(plant: &PlantModel) -> Result<f64, SolverError> {
    let c = classify(&plant.nominal_delayed())?;
    c.rhp_zeros
        .iter()
        .map(|z| Complex64::new(z[0], z[1]).norm())
        .min_by(|a, b| a.total_cmp(b))
        .ok_or(SolverError::NoRhpZero)
}

fn rhp_pole(plant: &PlantModel) -> Result<f64, SolverError> {
    let c = classify(&plant.nominal_delayed())?;
    c.rhp_poles
        .iter()
        .map(|z| Complex64::new(z[0], z[1]).norm())
        .min_by(|a, b| a.total_cmp(b))
        .ok_or(SolverError::NoRhpPole)
}

fn rhp_points(p: &crate::tf::Polynomial) -> Result<Vec<Complex64>, SolverError> {
    if p.degree() == 0 {
        return Ok(Vec::new());
    }
    Ok(crate::tf::roots(p)?
        .into_iter()
        .filter(|z| z.re > AXIS_TOL * z.norm().max(1.0))
        .collect())
}

/// `|B^{-1}(x)|` for the right-half-plane roots of `p`.
fn blaschke_inverse_at(p: &crate::tf::Polynomial, x: f64) -> Result<f64, SolverError> {
    let b = blaschke(&rhp_points(p)?)?;
    Ok(1.0 / b.eval(Complex64::new(x, 0.0))?.norm())
}

fn literal_rhp_zero(problem: &Problem, g: f64) -> Result<LiteralResult, SolverError> {
    let spec = &problem.spec;
    let conv = problem.conv;
    let mut out = LiteralResult::default();
    let deltas = problem.deltas();
    let z = rhp_zero(&problem.plant)?;
    let q = DobFilter::make_lpf(problem.order, g)?;
    let nominal = approx_inverse_loop(&problem.plant, &q, problem.plant.delta.nominal_sample())?;
    let b_s = blaschke_inverse_at(&nominal.l.den_poly_sum(), z)?;
    out.values.insert("z".into(), z);
    out.values.insert("b_s_inv".into(), b_s);
    let w_gamma = spec.w_gamma_at(g);
    let psi1 = match psi1_rhp_zero(spec, z, b_s, w_gamma, conv) {
        Ok(v) => v,
        Err(SolverError::InfeasibleAngles(x)) => {
            out.notes.push(format!("psi1 angle {x} outside (0, π/2)"));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let w1 = z * psi1;
    let psi2 = match psi2_rhp_zero(spec, z, b_s, w1, conv) {
        Ok(v) => v,
        Err(SolverError::InfeasibleAngles(x)) => {
            out.psi.insert("psi1".into(), psi1);
            out.notes.push(format!("psi2 angle {x} outside (0, π/2)"));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let w2 = z * psi2;
    out.psi.insert("psi1".into(), psi1);
    out.psi.insert("psi2".into(), psi2);
    out.values.insert("w_beta_bound".into(), w1);
    out.values.insert("w_gamma_bound".into(), w2);
    if psi2 < psi1 {
        out.notes.push("psi2 < psi1: the two angle bounds cross".into());
    }

    let r = problem.plant.model_mismatch()?;
    let p = Pieces::new(problem, &q);
    let (ab, ag) = (spec.alpha_beta, spec.alpha_gamma);
    let at = |d: f64, w: f64| -> Result<(Complex64, Complex64), SolverError> {
        let (qv, wv) = p.at(w)?;
        Ok((qv, r.eval(jw(w))? * (1.0 + d * wv)))
    };
    let filter_ratio_below_w1 = all_deltas(&deltas, &below(w1), |d, w| {
        let (qv, ru) = at(d, w)?;
        Ok(qv.norm() / (1.0 - qv).norm() >= (1.0 - ab) / (ab * ru.norm()))
    })?;
    let sensitivity_at_w1 = all_deltas(&deltas, &[w1], |d, w| {
        let (qv, ru) = at(d, w)?;
        Ok((1.0 - qv).norm() / (1.0 - qv + ru * qv).norm() >= ab)
    })?;
    let loop_gain_above_w2 = all_deltas(&deltas, &above(w2), |d, w| {
        let (qv, ru) = at(d, w)?;
        Ok((ru * qv).norm() / (1.0 - qv).norm() <= ag / (1.0 - ag))
    })?;
    let cosensitivity_at_w2 = all_deltas(&deltas, &[w2], |d, w| {
        let (qv, ru) = at(d, w)?;
        Ok((ru * qv).norm() / (1.0 - qv + ru * qv).norm() >= ag)
    })?;
    out.ok.insert("filter_ratio_below_w1".into(), filter_ratio_below_w1);
    out.ok.insert("sensitivity_at_w1".into(), sensitivity_at_w1);
    out.ok.insert("loop_gain_above_w2".into(), loop_gain_above_w2);
    out.ok.insert("cosensitivity_at_w2".into(), cosensitivity_at_w2);
    out.ok.insert("relaxed".into(), filter_ratio_below_w1 && sensitivity_at_w1 && cosensitivity_at_w2);
    out.admissible = filter_ratio_below_w1 && sensitivity_at_w1 && loop_gain_above_w2 && cosensitivity_at_w2;
    Ok(out)
}

fn controller(problem: &Problem) -> Result<&ControllerSet, SolverError> {
    problem.controllers.as_ref().ok_or(SolverError::MissingController)
}

fn literal_rhp_pole(problem: &Problem, g: f64) -> Result<LiteralResult, SolverError> {
    let spec = &problem.spec;
    let conv = problem.conv;
    let mut out = LiteralResult::default();
    let deltas = problem.deltas();
    let c = controller(problem)?;
    let p_rhp = rhp_pole(&problem.plant)?;
    let q = DobFilter::make_lpf(problem.order, g)?;
    let nominal = outer_loop(&problem.plant, &q, c, problem.plant.delta.nominal_sample())?;
    let grid = metric_grid();
    let tc = curves(&nominal.l, &grid);
    let t_inf = refined_max(&grid, &tc.t, |w| parts(&nominal.l, w).2);
    let b_t = blaschke_inverse_at(&c.outer.mul(&problem.plant.nominal).num().clone(), p_rhp)?;
    out.values.insert("p".into(), p_rhp);
    out.values.insert("t_inf_norm".into(), t_inf);
    out.values.insert("b_t_inv".into(), b_t);
    let psi = match psi_rhp_pole(spec.alpha, b_t, t_inf, conv) {
        Ok(v) => v,
        Err(SolverError::InfeasibleAngles(x)) => {
            out.notes.push(format!("psi angle {x} outside (0, π/2)"));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.psi.insert("psi".into(), psi);
    let w0 = p_rhp * psi;
    out.values.insert("p_psi".into(), w0);
    let pcs = Pieces::new(problem, &q);
    let a = spec.alpha;
    let mut grid_high = vec![w0];
    grid_high.extend(above(w0));
    let high_frequency_margin = all_deltas(&deltas, &grid_high, |d, w| {
        let (qv, wv) = pcs.at(w)?;
        let gv = problem.plant.nominal.eval(jw(w))? * (1.0 + d * wv);
        let cv = c.outer.eval(jw(w))?;
        Ok((1.0 + d * qv * wv).norm() >= (1.0 - a) / a * (cv * gv).norm())
    })?;
    out.ok.insert("high_frequency_margin".into(), high_frequency_margin);
    out.admissible = high_frequency_margin;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Checks and sweeps

fn check_preconditions(problem: &Problem, theorem: Theorem) -> Result<(), SolverError> {
    problem.spec.validate()?;
    let c = classify(&problem.plant.nominal_delayed())?;
    match theorem {
        Theorem::MinimumPhase => {
            if c.has_rhp_zero() {
                return Err(SolverError::NotMinimumPhase);
            }
            if c.has_delay() {
                return Err(SolverError::HasDelay);
            }
        }
        Theorem::TimeDelay => {
            if !c.has_delay() {
                return Err(SolverError::ZeroDelay);
            }
        }
        Theorem::RhpZero => {
            if !c.has_rhp_zero() {
                return Err(SolverError::NoRhpZero);
            }
            if problem.plant.approx_nominal.is_none() {
                return Err(SolverError::MissingApproxNominal);
            }
        }
        Theorem::RhpPole => {
            if !c.has_rhp_pole() {
                return Err(SolverError::NoRhpPole);
            }
            let cs = controller(problem)?;
            let l = cs.outer.mul(&problem.plant.nominal);
            let char_poly = l.den().add(l.num());
            if verdict_from_roots(&crate::tf::roots(&char_poly)?) != Stability::Stable {
                return Err(SolverError::NotStabilized);
            }
        }
    }
    Ok(())
}

/// Both backends at a single bandwidth.
pub fn check(problem: &Problem, theorem: Theorem, g: f64) -> Result<ConstraintReport, SolverError> {
    check_preconditions(problem, theorem)?;
    let mut rep = ConstraintReport::empty(theorem, Backend::Exact);
    rep.bandwidth = Some(g);
    fill_point(problem, theorem, g, &mut rep)?;
    Ok(rep)
}

fn fill_point(problem: &Problem, theorem: Theorem, g: f64, rep: &mut ConstraintReport) -> Result<(), SolverError> {
    let lit = literal_eval(problem, theorem, g)?;
    let m = exact_metrics(problem, theorem, g)?;
    rep.psi_values.extend(lit.psi);
    rep.literal_ok.extend(lit.ok);
    rep.literal_ok.insert("all".into(), lit.admissible);
    rep.notes.extend(lit.notes);
    rep.values.extend(lit.values);
    rep.achieved_w_beta = m.achieved_w_beta;
    rep.peak_s = m.peak_s;
    rep.peak_t = m.peak_t;
    rep.values.insert("achieved_w_alpha".into(), m.achieved_w_alpha);
    rep.values.insert("l_tail".into(), m.l_tail);
    rep.values.insert("t_tail".into(), m.t_tail);
    rep.values.insert("w_gamma".into(), m.w_gamma);
    rep.values.insert("worst_delta".into(), m.worst_delta);
    rep.values.insert("robustly_stable".into(), if m.robustly_stable { 1.0 } else { 0.0 });
    rep.values.insert("exact_admissible".into(), if m.admissible { 1.0 } else { 0.0 });
    if theorem == Theorem::RhpZero {
        rep.literal_ok.insert("t_tail_within_alpha_gamma".into(), m.t_tail <= problem.spec.alpha_gamma);
    }
    Ok(())
}

pub fn check_minimum_phase(problem: &Problem, g: f64) -> Result<ConstraintReport, SolverError> {
    check(problem, Theorem::MinimumPhase, g)
}

pub fn check_time_delay(problem: &Problem, g: f64) -> Result<ConstraintReport, SolverError> {
    check(problem, Theorem::TimeDelay, g)
}

pub fn check_rhp_zero(problem: &Problem, g: f64) -> Result<ConstraintReport, SolverError> {
    check(problem, Theorem::RhpZero, g)
}

pub fn check_rhp_pole(problem: &Problem, g: f64) -> Result<ConstraintReport, SolverError> {
    check(problem, Theorem::RhpPole, g)
}

fn admissible(problem: &Problem, theorem: Theorem, backend: Backend, g: f64) -> Result<bool, SolverError> {
    match backend {
        Backend::Exact => Ok(exact_metrics(problem, theorem, g)?.admissible),
        Backend::Literal => Ok(literal_eval(problem, theorem, g)?.admissible),
    }
}

/// Maximal contiguous admissible run over `g_grid` (first one on ties), with
/// each interior edge bisected to 1% relative width on the admissible side.
pub fn sweep_admissible_bandwidth(
    problem: &Problem,
    backend: Backend,
    g_grid: &[f64],
) -> Result<ConstraintReport, SolverError> {
    if g_grid.len() < 30 {
        return Err(SolverError::InvalidArgument("bandwidth grid needs at least 30 points"));
    }
    if g_grid.windows(2).any(|p| !(p[1] > p[0])) || !(g_grid[0] > 0.0) {
        return Err(SolverError::InvalidArgument("bandwidth grid must be positive and increasing"));
    }
    let theorem = problem.theorem()?;
    check_preconditions(problem, theorem)?;
    let mut rep = ConstraintReport::empty(theorem, backend);

    let evals: Vec<Result<bool, SolverError>> = g_grid
        .par_iter()
        .map(|&g| admissible(problem, theorem, backend, g))
        .collect();
    let failures = evals.iter().filter(|r| r.is_err()).count();
    if failures > 0 {
        rep.notes.push(format!("{failures} grid points could not be evaluated and count as inadmissible"));
    }
    let flags: Vec<bool> = evals.into_iter().map(|r| r.unwrap_or(false)).collect();
    let ok = |g: f64| admissible(problem, theorem, backend, g).unwrap_or(false);

    if let Some((a, b)) = longest_run(&flags) {
        let lo = if a > 0 { bisect_edge(&ok, g_grid[a - 1], g_grid[a]) } else { g_grid[0] };
        let hi = if b + 1 < g_grid.len() {
            bisect_edge(&ok, g_grid[b + 1], g_grid[b])
        } else {
            g_grid[b]
        };
        if a == 0 {
            rep.notes.push("admissible run reaches the lower end of the grid".into());
        }
        if b + 1 == g_grid.len() {
            rep.notes.push("admissible run reaches the upper end of the grid".into());
        }
        rep.sweep_bandwidth_interval = Some([lo, hi]);
        rep.bandwidth = Some(hi);
        fill_point(problem, theorem, hi, &mut rep)?;
        rep.values.insert("lower_edge_achieved_w_beta".into(), exact_metrics(problem, theorem, lo)?.achieved_w_beta);
    } else {
        rep.notes.push("no admissible bandwidth on the grid".into());
        // Still report the diagnostic values, at the geometric middle of the grid.
        let mid = (g_grid[0] * g_grid[g_grid.len() - 1]).sqrt();
        if fill_point(problem, theorem, mid, &mut rep).is_ok() {
            rep.notes.push(format!("point values reported at g = {mid:.4}"));
        }
    }
    if theorem == Theorem::MinimumPhase && backend == Backend::Literal {
        rep.values.insert("bandwidth_cap".into(), literal_bandwidth_cap(problem)?);
        rep.psi_values.insert("psi".into(), psi_minimum_phase(&problem.spec, problem.conv));
        rep.values.insert(
            "w_beta_bound_at_w_gamma".into(),
            psi_minimum_phase(&problem.spec, problem.conv) * problem.spec.w_gamma,
        );
    }
    Ok(rep)
}

fn longest_run(flags: &[bool]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b - a + 1) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// Geometric bisection between an inadmissible and an admissible point;
/// returns a point on the admissible side within 1% of the boundary.
fn bisect_edge<F: Fn(f64) -> bool>(ok: &F, mut bad: f64, mut good: f64) -> f64 {
    while (good / bad).ln().abs() > 0.01f64.ln_1p() {
        let mid = (bad * good).sqrt();
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

/// Conjunction of closed-loop stability over the Δ grid.
pub fn nyquist_robust_stability(problem: &Problem, g: f64) -> Result<bool, SolverError> {
    let theorem = problem.theorem()?;
    for ls in problem.loops(theorem, g)? {
        if !closed_loop_stability(&ls.l)?.is_stable() {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Step-response limits and the delay refinement

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSpec {
    pub y_undershoot: f64,
    pub y_overshoot: f64,
    pub w_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerfLimits {
    pub w_b_upper: Option<f64>,
    pub w_b_lower: Option<f64>,
}

impl PerfLimits {
    pub fn admits(&self, w_b: f64) -> bool {
        self.w_b_upper.is_none_or(|u| w_b <= u) && self.w_b_lower.is_none_or(|l| w_b >= l)
    }
}

/// Closed-loop bandwidth limits implied by undershoot (right-half-plane zero `z`)
/// and overshoot (right-half-plane pole `p`) demands.
pub fn perf_limits(
    spec: &PerformanceSpec,
    z: Option<f64>,
    p: Option<f64>,
    conv: LogConvention,
) -> Result<PerfLimits, SolverError> {
    let mut out = PerfLimits::default();
    if let Some(z) = z {
        let arg = 1.0 - 0.9 / spec.y_undershoot;
        if !(arg > 0.0) {
            return Err(SolverError::DomainError("1 - 0.9/y_undershoot must be positive"));
        }
        let v = 2.1991 * z / conv.log(arg);
        if !(v > 0.0) || !v.is_finite() {
            return Err(SolverError::DomainError("undershoot demand gives a non-positive bandwidth bound"));
        }
        out.w_b_upper = Some(v);
    }
    if let Some(p) = p {
        let arg = 10.0 * (spec.y_overshoot - 0.9);
        if !(arg > 0.0) {
            return Err(SolverError::DomainError("10(y_overshoot - 0.9) must be positive"));
        }
        let v = 2.1991 * p / conv.log(arg);
        if !(v > 0.0) || !v.is_finite() {
            return Err(SolverError::DomainError("overshoot demand gives a non-positive bandwidth bound"));
        }
        out.w_b_lower = Some(v);
    }
    Ok(out)
}

/// `|S(jw)|²` of the nominal first-order delayed loop `g e^{-τs}/s`.
pub fn delayed_sensitivity_sq(g: f64, tau: f64, w: f64) -> f64 {
    w * w / (w * w - 2.0 * g * w * (w * tau).sin() + g * g)
}

/// Approximate crossing frequencies `w₁ ≤ w₂` of `|S| = 1` for `g e^{-τs}/s`.
pub fn crossing_frequencies(g: f64, tau: f64) -> Result<(f64, f64), SolverError> {
    if !(tau > 0.0) {
        return Err(SolverError::ZeroDelay);
    }
    let disc = 3.0 - g * tau;
    if disc < 0.0 {
        return Err(SolverError::DiscriminantNegative(g * tau));
    }
    let root = 1.73205 * (tau * tau * disc).sqrt();
    let t3 = tau.powi(3);
    Ok((((3.0 * tau - root) / t3).sqrt(), ((3.0 * tau + root) / t3).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedDelayBound {
    pub w1: f64,
    pub w2: f64,
    /// Mean of `ln|S|` over `[w1, w2]` at the given `g`.
    pub level: f64,
    /// Largest `g ≤ 3/τ` whose level stays within the budget.
    pub refined_cap: f64,
    /// Largest deviation between the closed form and `|1/(1+L)|²` on 500 points.
    pub closed_form_max_error: f64,
}

/// Mean of `ln|S|` over `[w₁, w₂]`: the constant level that carries the same
/// positive log-sensitivity area as the true curve on that band.
pub fn sectional_level(g: f64, tau: f64) -> Result<f64, SolverError> {
    let (w1, w2) = crossing_frequencies(g, tau)?;
    if w2 - w1 <= 0.0 {
        return Ok(0.5 * delayed_sensitivity_sq(g, tau, w1).ln());
    }
    let q = integrate(|w| 0.5 * delayed_sensitivity_sq(g, tau, w).ln(), w1, w2, 1e-12, 1e-12, 2000);
    Ok(q.value / (w2 - w1))
}

/// Replaces the `[w_β, R]` band of the delay theorem by `[w₁, w₂]`.
pub fn refined_delay_bound(g: f64, tau: f64, budget_log: f64) -> Result<RefinedDelayBound, SolverError> {
    let (w1, w2) = crossing_frequencies(g, tau)?;
    let level = sectional_level(g, tau)?;

    let g_max = 3.0 / tau;
    let n = 300;
    let gs: Vec<f64> = (1..=n).map(|k| g_max * k as f64 / n as f64).collect();
    let mut cap = 0.0;
    let mut prev = None;
    for &gi in &gs {
        if sectional_level(gi, tau)? <= budget_log {
            cap = gi;
            prev = Some(gi);
        } else {
            if let Some(good) = prev {
                let (mut lo, mut hi) = (good, gi);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if sectional_level(mid, tau)? <= budget_log {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cap = lo;
            }
            break;
        }
    }

    let l = QuasiRational::from_delayed(&crate::tf::DelayedTF::new(RationalTF::integrator(g), tau)?);
    let mut err: f64 = 0.0;
    for w in log_grid(1e-2 * g.max(1e-3), 1e2 * g.max(1e-3), 500) {
        let (_, s, _) = parts(&l, w);
        let closed = delayed_sensitivity_sq(g, tau, w);
        err = err.max((closed - s * s).abs());
    }
    Ok(RefinedDelayBound {
        w1,
        w2,
        level,
        refined_cap: cap,
        closed_form_max_error: err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeltaInterval, UncertaintyWeight};

    fn spec() -> DesignSpec {
        DesignSpec {
            alpha: 0.1,
            alpha_beta: 0.5,
            alpha_gamma: 0.2,
            w_beta: 5.0,
            w_gamma: 100.0,
            w_gamma_per_g: None,
            sup_log_s: 2f64.sqrt(),
            sup_kind: SupKind::Log,
            delta: 0.4,
            k: 1,
            m: 1.0,
            r: None,
        }
    }

    fn min_phase_plant() -> PlantModel {
        let w = UncertaintyWeight::new(100.0, 0.2, 5.0).unwrap();
        PlantModel::new(
            RationalTF::from_descending(&[1.0, 5.0], &[1.0, 5.0, 6.0]).unwrap(),
            w,
            DeltaInterval::new(-0.199, 1.0, &w).unwrap(),
            0.0,
            None,
        )
        .unwrap()
    }

    #[test]
    fn psi1_hand_value() {
        let mut s = spec();
        s.sup_log_s = 2f64.ln();
        s.alpha = 0.5;
        s.delta = 1e-300;
        assert!((psi_minimum_phase(&s, LogConvention::Nat) - 0.5).abs() < 1e-12);
        s.alpha = 1.0 - 1e-12;
        assert!((psi_minimum_phase(&s, LogConvention::Nat) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn psi1_monotone_in_k() {
        let mut s = spec();
        let mut prev = f64::INFINITY;
        for k in 1..6 {
            s.k = k;
            let p = psi_minimum_phase(&s, LogConvention::Nat);
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn psi2_singular_as_delay_vanishes() {
        let s = spec();
        let a = psi_time_delay(&s, 1e-2, 100.0, LogConvention::Nat).unwrap();
        let b = psi_time_delay(&s, 1e-8, 100.0, LogConvention::Nat).unwrap();
        assert!(b > 1e3 * a);
        assert_eq!(psi_time_delay(&s, 0.0, 1.0, LogConvention::Nat), Err(SolverError::ZeroDelay));
    }

    #[test]
    fn psi3_blaschke_shrinks_band() {
        let mut s = spec();
        s.alpha_gamma = 0.01;
        s.sup_log_s = 5.0;
        s.w_gamma = 100.0;
        let (p1, _) = psi_rhp_zero(&s, 50.0, 1.0, LogConvention::Nat).unwrap();
        let (p1b, _) = psi_rhp_zero(&s, 50.0, 3.0, LogConvention::Nat).unwrap();
        assert!(p1.is_finite() && p1b < p1);
        assert!(matches!(
            psi_rhp_zero(&s, 50.0, 1e6, LogConvention::Nat),
            Err(SolverError::InfeasibleAngles(_))
        ));
    }

    #[test]
    fn psi2_thm3_inverts_psi1() {
        // With w_β = zψ₁ the second bound lands exactly on w_γ.
        let mut s = spec();
        s.sup_log_s = 2.0;
        s.sup_kind = SupKind::Magnitude;
        s.alpha_beta = 0.5;
        for g in [10.0, 20.0, 40.0] {
            let wg = 2.0 * g;
            let p1 = psi1_rhp_zero(&s, 50.0, 1.0, wg, LogConvention::Nat).unwrap();
            let p2 = psi2_rhp_zero(&s, 50.0, 1.0, 50.0 * p1, LogConvention::Nat).unwrap();
            assert!((50.0 * p2 - wg).abs() < 1e-9 * wg);
        }
    }

    #[test]
    fn psi4_limits() {
        assert!(psi_rhp_pole(0.3, 1.0, 1.84, LogConvention::Nat).unwrap() > 1.0);
        assert!(psi_rhp_pole(0.3, 1e9, 1.0, LogConvention::Nat).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(spec().validate().is_ok());
        let mut s = spec();
        s.delta = 0.6;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.w_beta = 200.0;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.sup_kind = SupKind::Magnitude;
        s.sup_log_s = 0.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn theorem_dispatch() {
        assert_eq!(select_theorem(&min_phase_plant()).unwrap(), Theorem::MinimumPhase);
        let mut p = min_phase_plant();
        p.tau = 0.01;
        assert_eq!(select_theorem(&p).unwrap(), Theorem::TimeDelay);
    }

    #[test]
    fn literal_infeasible_for_tiny_alpha() {
        let mut s = spec();
        s.alpha = 1e-6;
        let p = Problem::new(min_phase_plant(), 2, s);
        let lit = literal_eval(&p, Theorem::MinimumPhase, 50.0).unwrap();
        assert!(!lit.ok["filter_gain_below_w_beta"]);
    }

    #[test]
    fn literal_holds_without_uncertainty_and_lax_alpha() {
        let mut plant = min_phase_plant();
        plant.delta = DeltaInterval::nominal();
        let mut s = spec();
        s.alpha = 0.999;
        let p = Problem::new(plant, 2, s);
        let lit = literal_eval(&p, Theorem::MinimumPhase, 50.0).unwrap();
        assert!(lit.ok["filter_gain_below_w_beta"] && lit.ok["sensitivity_at_w_beta"], "{lit:?}");
    }

    #[test]
    fn exact_metrics_order_effect() {
        let p1 = Problem::new(min_phase_plant(), 1, spec());
        let mut prev = 0.0;
        for order in 1..=3 {
            let p = Problem { order, ..p1.clone() };
            let m = exact_metrics(&p, Theorem::MinimumPhase, 100.0).unwrap();
            assert!(m.robustly_stable);
            assert!(m.peak_s >= prev);
            prev = m.peak_s;
        }
    }

    #[test]
    fn runs() {
        assert_eq!(longest_run(&[false, true, true, false, true]), Some((1, 2)));
        assert_eq!(longest_run(&[true, false, true]), Some((0, 0)));
        assert_eq!(longest_run(&[false, false]), None);
        assert_eq!(longest_run(&[true, true]), Some((0, 1)));
    }

    #[test]
    fn bisection_edge_within_one_percent() {
        let ok = |g: f64| g <= 61.8;
        let e = bisect_edge(&ok, 70.0, 50.0);
        assert!((61.8 / 1.01..=61.8).contains(&e));
        let e = bisect_edge(&|g: f64| g >= 12.0, 10.0, 15.0);
        assert!((12.0..=12.0 * 1.01).contains(&e));
    }

    #[test]
    fn perf_limit_domains() {
        let s = PerformanceSpec { y_undershoot: -0.1, y_overshoot: 1.5, w_b: 5.0 };
        let l = perf_limits(&s, Some(50.0), Some(5.0), LogConvention::Nat).unwrap();
        assert!((l.w_b_upper.unwrap() - 2.1991 * 50.0 / 10f64.ln()).abs() < 1e-12);
        assert!((l.w_b_lower.unwrap() - 2.1991 * 5.0 / 6f64.ln()).abs() < 1e-12);
        assert_eq!(perf_limits(&s, None, None, LogConvention::Nat).unwrap(), PerfLimits::default());
        // 1 - 0.9/y = 0.1: the logarithm is negative.
        let bad = PerformanceSpec { y_undershoot: 1.0, ..s };
        assert!(matches!(perf_limits(&bad, Some(50.0), None, LogConvention::Nat), Err(SolverError::DomainError(_))));
        assert!(matches!(perf_limits(&bad, Some(50.0), None, LogConvention::Log10), Err(SolverError::DomainError(_))));
    }

    #[test]
    fn crossing_degenerate() {
        let tau = 0.01;
        let (a, b) = crossing_frequencies(3.0 / tau, tau).unwrap();
        assert!((a - 3f64.sqrt() / tau).abs() < 1e-9 * a);
        assert_eq!(a, b);
        assert!(matches!(crossing_frequencies(301.0, tau), Err(SolverError::DiscriminantNegative(_))));
    }

    #[test]
    fn closed_form_without_delay() {
        let g = 40.0;
        assert!((delayed_sensitivity_sq(g, 0.0, g) - 0.5).abs() < 1e-15);
    }
}
