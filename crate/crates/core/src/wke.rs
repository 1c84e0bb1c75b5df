//! Damped and driven kinetic equation
//! `dz/dt = -2 g z + eps^2 K(t)(z) + 2 b^2`, `z(0) = 0`, on radial fields.
//!
//! Time stepping is the exponential integrator with the kinetic term frozen
//! at the left end of each step; the linear part is exact. The stationary
//! state solves `2 g z - eps^2 K(inf)(z) = 2 b^2` by fixed-point iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::{base_grid, k_tau_factor, KineticOptions, KineticPlan, Radial, RadialField, Tail};
use crate::model::ModelParams;

/// Numerical settings of the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WkeConfig {
    /// Time step, in `(0, 1/2]`.
    pub h: f64,
    /// Weight exponent of the reported norms.
    pub norm_r: f64,
    /// Radii carrying the solution.
    pub knots: Vec<f64>,
    pub kinetic: KineticOptions,
    /// Abort when `|z|_r` exceeds this multiple of `|b^2|_r` (or of the
    /// initial norm, whichever is larger).
    pub blowup_factor: f64,
    pub max_iter: usize,
    /// Residual target of the stationary iteration.
    pub tol: f64,
}

impl WkeConfig {
    /// Defaults: `h = 0.05`, norms with weight `d + 2`, 16 radii on `[0, 5 sigma]`.
    pub fn new(params: &ModelParams) -> Self {
        Self {
            h: 0.05,
            norm_r: params.d as f64 + 2.0,
            knots: base_grid(5.0 * params.sigma, 16),
            kinetic: KineticOptions::coarse(),
            blowup_factor: 10.0,
            max_iter: 200,
            tol: 1e-10,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 0.5) {
            return Err(Error::InvalidParam(format!("step must lie in (0, 1/2], got {}", self.h)));
        }
        if !(self.norm_r >= 0.0) || !(self.blowup_factor > 1.0) || self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidParam("bad solver settings".into()));
        }
        RadialField::new(self.knots.clone(), vec![0.0; self.knots.len()], Tail::Zero)?;
        Ok(())
    }
}

/// `sup_i <r_i>^r |v_i|` over the knots.
pub fn knot_norm(knots: &[f64], values: &[f64], r: f64) -> f64 {
    knots.iter().zip(values).map(|(k, v)| (1.0 + k * k).powf(r / 2.0) * v.abs()).fold(0.0, f64::max)
}

/// `(b^2 / g)(1 - e^{-2 g tau})` at the knots.
pub fn linear_values(params: &ModelParams, knots: &[f64], tau: f64) -> Vec<f64> {
    knots
        .iter()
        .map(|&r| {
            let r2 = r * r;
            params.b_coeff_r2(r2) * -(-2.0 * params.gamma_r2(r2) * tau).exp_m1()
        })
        .collect()
}

/// Closed-form solution of the linear flow at time `tau`.
pub fn linear_solution(params: &ModelParams, knots: &[f64], tau: f64) -> Result<RadialField> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParam(format!("tau must be >= 0, got {tau}")));
    }
    RadialField::new(knots.to_vec(), linear_values(params, knots, tau), Tail::Zero)
}

/// One solution at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WkeState {
    pub tau: f64,
    pub eps: f64,
    pub h: f64,
    pub z: RadialField,
    /// `|z|_r` after every step so far.
    pub norms: Vec<f64>,
}

impl WkeState {
    pub fn initial(knots: &[f64], eps: f64, h: f64) -> Result<Self> {
        let z = RadialField::new(knots.to_vec(), vec![0.0; knots.len()], Tail::Zero)?;
        Ok(Self { tau: 0.0, eps, h, z, norms: vec![0.0] })
    }
}

/// Stored trajectory of one amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub eps: f64,
    pub knots: Vec<f64>,
    pub times: Vec<f64>,
    /// Solution values at the knots, one row per time.
    pub values: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    /// Smallest value seen; negative values flag a loss of positivity.
    pub min_value: f64,
}

impl Trajectory {
    pub fn sup_norm(&self) -> f64 {
        self.norms.iter().cloned().fold(0.0, f64::max)
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().expect("trajectory holds the initial state")
    }

    /// `sup_t |z(t) - z0(t)|_r` against the linear solution.
    pub fn sup_deviation_from_linear(&self, params: &ModelParams, r: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(&t, z)| {
                let lin = linear_values(params, &self.knots, t);
                let diff: Vec<f64> = z.iter().zip(&lin).map(|(a, b)| a - b).collect();
                knot_norm(&self.knots, &diff, r)
            })
            .fold(0.0, f64::max)
    }

    /// CSV rows `tau,radius,z,norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,radius,z,norm\n");
        for ((t, z), n) in self.times.iter().zip(&self.values).zip(&self.norms) {
            for (r, v) in self.knots.iter().zip(z) {
                out.push_str(&format!("{t:.6},{r:.12e},{v:.12e},{n:.12e}\n"));
            }
        }
        out
    }
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.is_empty() || eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidParam("amplitudes must be finite and nonnegative".into()));
    }
    Ok(())
}

struct Drive {
    decay: Vec<f64>,
    forcing: Vec<f64>,
    kin: Vec<f64>,
    b2_norm: f64,
}

fn drive(params: &ModelParams, cfg: &WkeConfig) -> Drive {
    let mut decay = Vec::new();
    let mut forcing = Vec::new();
    let mut kin = Vec::new();
    let mut b2 = Vec::new();
    for &r in &cfg.knots {
        let r2 = r * r;
        let g = params.gamma_r2(r2);
        let e = (-2.0 * g * cfg.h).exp();
        decay.push(e);
        // 2 int_0^h e^{-2 g t} b^2 dt
        forcing.push(params.b_coeff_r2(r2) * -(-2.0 * g * cfg.h).exp_m1());
        kin.push(k_tau_factor(cfg.h, g));
        b2.push(params.forcing().squared_r2(r2));
    }
    let b2_norm = knot_norm(&cfg.knots, &b2, cfg.norm_r);
    Drive { decay, forcing, kin, b2_norm }
}

fn kinetic_plan(params: &ModelParams, cfg: &WkeConfig, eps: &[f64]) -> Result<Option<KineticPlan>> {
    if eps.iter().all(|e| *e == 0.0) {
        return Ok(None);
    }
    Ok(Some(KineticPlan::new(params, cfg.knots.clone(), cfg.kinetic)?))
}

/// Advances one state by one step.
pub fn wke_step(params: &ModelParams, cfg: &WkeConfig, state: &WkeState) -> Result<WkeState> {
    cfg.validate()?;
    let plan = kinetic_plan(params, cfg, &[state.eps])?;
    let mut out = advance(cfg, &drive(params, cfg), plan.as_ref(), &[state.clone()])?;
    Ok(out.pop().expect("one state in, one state out"))
}

fn advance(
    cfg: &WkeConfig,
    dr: &Drive,
    plan: Option<&KineticPlan>,
    states: &[WkeState],
) -> Result<Vec<WkeState>> {
    let tau = states[0].tau;
    let active: Vec<usize> = (0..states.len()).filter(|&i| states[i].eps > 0.0).collect();
    let mut kin: Vec<Option<Vec<f64>>> = vec![None; states.len()];
    if let (Some(plan), false) = (plan, active.is_empty()) {
        let fields: Vec<&dyn Radial> = active.iter().map(|&i| &states[i].z as &dyn Radial).collect();
        let profiles = plan.apply_many(tau, &fields)?;
        for (&i, p) in active.iter().zip(profiles) {
            kin[i] = Some(p.totals());
        }
    }
    let mut out = Vec::with_capacity(states.len());
    for (st, k) in states.iter().zip(kin) {
        let e2 = st.eps * st.eps;
        let vals: Vec<f64> = st
            .z
            .values()
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let mut next = dr.decay[i] * z + dr.forcing[i];
                if let Some(k) = &k {
                    next += e2 * dr.kin[i] * k[i];
                }
                next
            })
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(format!("non-finite solution at eps = {}", st.eps)));
        }
        let n = knot_norm(&cfg.knots, &vals, cfg.norm_r);
        // scale of the problem: the forcing, or the initial data when unforced
        let start = st.norms.first().copied().unwrap_or_else(|| knot_norm(&cfg.knots, st.z.values(), cfg.norm_r));
        if n > cfg.blowup_factor * dr.b2_norm.max(start) {
            return Err(Error::BlowUp(format!(
                "|z|_r = {n:.3e} exceeds {} |b^2|_r at eps = {}, tau = {:.3}",
                cfg.blowup_factor,
                st.eps,
                tau + cfg.h
            )));
        }
        let mut norms = st.norms.clone();
        norms.push(n);
        out.push(WkeState { tau: tau + cfg.h, eps: st.eps, h: cfg.h, z: st.z.with_values(vals)?, norms });
    }
    Ok(out)
}

/// Integrates from `z(0) = 0` to `t_end` for several amplitudes at once;
/// kernel evaluations are shared between the runs.
pub fn solve_batch(params: &ModelParams, eps: &[f64], t_end: f64, cfg: &WkeConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    check_eps(eps)?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParam(format!("end time must be finite and >= 0, got {t_end}")));
    }
    let plan = kinetic_plan(params, cfg, eps)?;
    let dr = drive(params, cfg);
    let steps = (t_end / cfg.h - 1e-9).ceil().max(0.0) as usize;
    let mut states: Vec<WkeState> =
        eps.iter().map(|&e| WkeState::initial(&cfg.knots, e, cfg.h)).collect::<Result<_>>()?;
    let mut trajs: Vec<Trajectory> = eps
        .iter()
        .map(|&e| Trajectory {
            eps: e,
            knots: cfg.knots.clone(),
            times: vec![0.0],
            values: vec![vec![0.0; cfg.knots.len()]],
            norms: vec![0.0],
            min_value: 0.0,
        })
        .collect();
    for n in 1..=steps {
        states = advance(cfg, &dr, plan.as_ref(), &states)?;
        for (tr, st) in trajs.iter_mut().zip(&mut states) {
            // times as n h so that the linear flow is reproduced exactly
            st.tau = n as f64 * cfg.h;
            tr.times.push(st.tau);
            tr.values.push(st.z.values().to_vec());
            tr.norms.push(*st.norms.last().expect("pushed above"));
            tr.min_value = st.z.values().iter().cloned().fold(tr.min_value, f64::min);
        }
    }
    Ok(trajs)
}

pub fn solve(params: &ModelParams, eps: f64, t_end: f64, cfg: &WkeConfig) -> Result<Trajectory> {
    Ok(solve_batch(params, &[eps], t_end, cfg)?.pop().expect("one run"))
}

/// Stationary state of one amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub eps: f64,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub iterations: usize,
    /// `|2 g z - eps^2 K(inf) z - 2 b^2|_r` after each iteration.
    pub residuals: Vec<f64>,
}

impl Stationary {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::INFINITY)
    }

    /// `|z - b^2 / g|_r`.
    pub fn deviation(&self, params: &ModelParams, r: f64) -> f64 {
        let base = linear_values(params, &self.knots, f64::INFINITY);
        let diff: Vec<f64> = self.values.iter().zip(&base).map(|(a, b)| a - b).collect();
        knot_norm(&self.knots, &diff, r)
    }

    pub fn field(&self) -> Result<RadialField> {
        RadialField::new(self.knots.clone(), self.values.clone(), Tail::Zero)
    }
}

/// Fixed point of `z = (2 b^2 + eps^2 K(inf) z) / (2 g)` from `z = b^2 / g`,
/// for several amplitudes at once.
pub fn stationary_batch(params: &ModelParams, eps: &[f64], cfg: &WkeConfig) -> Result<Vec<Stationary>> {
    cfg.validate()?;
    check_eps(eps)?;
    let knots = &cfg.knots;
    let g: Vec<f64> = knots.iter().map(|r| params.gamma_r2(r * r)).collect();
    let b2: Vec<f64> = knots.iter().map(|r| params.forcing().squared_r2(r * r)).collect();
    let start: Vec<f64> = b2.iter().zip(&g).map(|(b, g)| b / g).collect();
    let plan = kinetic_plan(params, cfg, eps)?;
    let mut out: Vec<Stationary> = eps
        .iter()
        .map(|&e| Stationary { eps: e, knots: knots.clone(), values: start.clone(), iterations: 0, residuals: vec![] })
        .collect();
    let mut done: Vec<bool> = eps.iter().map(|&e| e == 0.0).collect();
    for st in out.iter_mut().filter(|s| s.eps == 0.0) {
        st.residuals.push(0.0);
    }
    let plan = match plan {
        Some(p) => p,
        None => return Ok(out),
    };
    for _ in 0..cfg.max_iter {
        let open: Vec<usize> = (0..eps.len()).filter(|&i| !done[i]).collect();
        if open.is_empty() {
            break;
        }
        let fields: Vec<RadialField> =
            open.iter().map(|&i| RadialField::new(knots.clone(), out[i].values.clone(), Tail::Zero)).collect::<Result<_>>()?;
        let refs: Vec<&dyn Radial> = fields.iter().map(|f| f as &dyn Radial).collect();
        let ks = plan.apply_many(f64::INFINITY, &refs)?;
        for (&i, k) in open.iter().zip(ks) {
            let st = &mut out[i];
            let e2 = st.eps * st.eps;
            let k = k.totals();
            let res: Vec<f64> =
                (0..knots.len()).map(|t| 2.0 * g[t] * st.values[t] - e2 * k[t] - 2.0 * b2[t]).collect();
            let rn = knot_norm(knots, &res, cfg.norm_r);
            st.residuals.push(rn);
            if !rn.is_finite() || (st.residuals.len() > 3 && rn > 10.0 * st.residuals[0]) {
                return Err(Error::BlowUp(format!("stationary iteration diverges at eps = {}: eps too large", st.eps)));
            }
            if rn <= cfg.tol {
                done[i] = true;
                continue;
            }
            for t in 0..knots.len() {
                st.values[t] = (2.0 * b2[t] + e2 * k[t]) / (2.0 * g[t]);
            }
            st.iterations += 1;
        }
    }
    if let Some(i) = (0..eps.len()).find(|&i| !done[i]) {
        return Err(Error::NoConvergence(format!(
            "stationary iteration did not contract in {} iterations at eps = {}: eps too large",
            cfg.max_iter, eps[i]
        )));
    }
    Ok(out)
}

pub fn stationary(params: &ModelParams, eps: f64, cfg: &WkeConfig) -> Result<Stationary> {
    Ok(stationary_batch(params, &[eps], cfg)?.pop().expect("one run"))
}

/// Distance to the stationary state along a trajectory against
/// `c1 e^{-tau} + c2 eps^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub eps: f64,
    pub c1: f64,
    pub c2: f64,
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub envelope: Vec<f64>,
    pub holds: bool,
}

/// `|z(tau) - z^eps|_r` along `traj`.
pub fn distance_to_stationary(traj: &Trajectory, stat: &Stationary, r: f64) -> Result<Vec<f64>> {
    if traj.knots != stat.knots {
        return Err(Error::InvalidParam("trajectory and stationary state use different knots".into()));
    }
    Ok(traj
        .values
        .iter()
        .map(|z| {
            let diff: Vec<f64> = z.iter().zip(&stat.values).map(|(a, b)| a - b).collect();
            knot_norm(&traj.knots, &diff, r)
        })
        .collect())
}

/// Smallest `c2` such that `distance <= c1 e^{-tau} + c2 eps^2` with
/// `c1 = |z^eps|_r`.
pub fn fit_envelope_c2(traj: &Trajectory, stat: &Stationary, r: f64) -> Result<f64> {
    let c1 = knot_norm(&stat.knots, &stat.values, r);
    let dist = distance_to_stationary(traj, stat, r)?;
    let e2 = traj.eps * traj.eps;
    if e2 == 0.0 {
        return Ok(0.0);
    }
    Ok(traj.times.iter().zip(&dist).map(|(t, dd)| (dd - c1 * (-t).exp()) / e2).fold(0.0, f64::max))
}

/// Checks the envelope with `c1 = |z^eps|_r` and the given `c2`.
pub fn long_time_check(traj: &Trajectory, stat: &Stationary, c2: f64, r: f64) -> Result<EnvelopeReport> {
    let c1 = knot_norm(&stat.knots, &stat.values, r);
    let distance = distance_to_stationary(traj, stat, r)?;
    let e2 = traj.eps * traj.eps;
    let envelope: Vec<f64> = traj.times.iter().map(|t| c1 * (-t).exp() + c2 * e2).collect();
    let holds = distance.iter().zip(&envelope).all(|(d, e)| *d <= e * (1.0 + 1e-12));
    Ok(EnvelopeReport { eps: traj.eps, c1, c2, times: traj.times.clone(), distance, envelope, holds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    fn small_cfg(p: &ModelParams) -> WkeConfig {
        WkeConfig { knots: base_grid(4.5, 10), ..WkeConfig::new(p) }
    }

    #[test]
    fn linear_solution_limits() {
        let p = params();
        let knots = base_grid(5.0, 12);
        assert!(linear_solution(&p, &knots, 0.0).unwrap().values().iter().all(|v| *v == 0.0));
        let inf = linear_values(&p, &knots, f64::INFINITY);
        for (r, v) in knots.iter().zip(&inf) {
            assert!((v - p.b_coeff_r2(r * r)).abs() <= 1e-16);
        }
        let mut prev = vec![0.0; knots.len()];
        for k in 1..50 {
            let cur = linear_values(&p, &knots, 0.1 * k as f64);
            assert!(cur.iter().zip(&prev).all(|(a, b)| a >= b));
            prev = cur;
        }
        assert!(linear_solution(&p, &knots, -1.0).is_err());
    }

    #[test]
    fn zero_amplitude_is_exact() {
        let p = params();
        let cfg = WkeConfig::new(&p);
        let tr = solve(&p, 0.0, 3.0, &cfg).unwrap();
        for (t, z) in tr.times.iter().zip(&tr.values) {
            let exact = linear_values(&p, &cfg.knots, *t);
            for (a, b) in z.iter().zip(&exact) {
                assert!((a - b).abs() <= 1e-12, "tau {t}: {a} vs {b}");
            }
        }
        let empty = solve(&p, 0.0, 0.0, &cfg).unwrap();
        assert_eq!(empty.values.len(), 1);
        assert!(empty.last().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_decay_without_forcing() {
        let p = ModelParams { b0: 0.0, ..params() };
        let cfg = WkeConfig::new(&p);
        let z0: Vec<f64> = cfg.knots.iter().map(|r| (-r * r).exp()).collect();
        let st = WkeState {
            tau: 0.0,
            eps: 0.0,
            h: cfg.h,
            z: RadialField::new(cfg.knots.clone(), z0.clone(), Tail::Zero).unwrap(),
            norms: vec![],
        };
        let next = wke_step(&p, &cfg, &st).unwrap();
        for ((r, a), b) in cfg.knots.iter().zip(next.z.values()).zip(&z0) {
            let g = p.gamma_r2(r * r);
            assert!((a - b * (-2.0 * g * cfg.h).exp()).abs() <= 1e-16);
        }
    }

    #[test]
    fn step_validation() {
        let p = params();
        let cfg = WkeConfig { h: 0.7, ..WkeConfig::new(&p) };
        assert!(solve(&p, 0.0, 1.0, &cfg).is_err());
        let cfg = WkeConfig::new(&p);
        assert!(solve(&p, -0.1, 1.0, &cfg).is_err());
        assert!(solve(&p, 0.1, f64::NAN, &cfg).is_err());
    }

    #[test]
    fn small_amplitude_scaling() {
        let p = params();
        let cfg = small_cfg(&p);
        let trs = solve_batch(&p, &[0.05, 0.1, 0.2], 2.0, &cfg).unwrap();
        let ratios: Vec<f64> = trs.iter().map(|t| t.sup_deviation_from_linear(&p, cfg.norm_r) / (t.eps * t.eps)).collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(lo > 0.0 && hi / lo < 1.2, "{ratios:?}");
        assert!(trs.iter().all(|t| t.min_value >= 0.0));
    }

    #[test]
    fn first_order_in_the_step() {
        let p = params();
        let mut ends = Vec::new();
        for h in [0.2, 0.1, 0.05] {
            let cfg = WkeConfig { h, ..small_cfg(&p) };
            ends.push(solve(&p, 0.3, 1.0, &cfg).unwrap().last().to_vec());
        }
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let d1 = diff(&ends[0], &ends[1]);
        let d2 = diff(&ends[1], &ends[2]);
        let ratio = d1 / d2;
        assert!(ratio > 1.6 && ratio < 2.6, "Richardson ratio {ratio}");
    }

    #[test]
    fn stationary_state() {
        let p = params();
        let cfg = small_cfg(&p);
        let st = stationary_batch(&p, &[0.0, 0.05, 0.1, 0.2], &cfg).unwrap();
        assert_eq!(st[0].values, linear_values(&p, &cfg.knots, f64::INFINITY));
        let mut ratios = vec![];
        for s in &st[1..] {
            assert!(s.residual() <= 1e-10);
            // geometric decrease of the residual
            for w in s.residuals.windows(2) {
                assert!(w[1] < w[0]);
            }
            ratios.push(s.deviation(&p, cfg.norm_r) / (s.eps * s.eps));
        }
        assert!(ratios[2] / ratios[0] < 1.2 && ratios[0] / ratios[2] < 1.2, "{ratios:?}");
    }

    #[test]
    fn large_amplitude_is_rejected() {
        let p = ModelParams { b0: 6.0, ..params() };
        let cfg = WkeConfig { max_iter: 40, ..small_cfg(&p) };
        let e = stationary(&p, 0.5, &cfg).unwrap_err();
        assert!(matches!(e, Error::BlowUp(_) | Error::NoConvergence(_)), "{e}");
    }

    #[test]
    fn approach_to_stationary_state() {
        let p = params();
        let cfg = WkeConfig { h: 0.1, ..small_cfg(&p) };
        let tr = solve(&p, 0.2, 8.0, &cfg).unwrap();
        let st = stationary(&p, 0.2, &cfg).unwrap();
        let dist = distance_to_stationary(&tr, &st, cfg.norm_r).unwrap();
        // the discrete flow keeps the stationary state fixed up to the memory
        // of the kernels
        assert!(dist.last().unwrap() < &(1e-5 * dist[0]));
        let c2 = fit_envelope_c2(&tr, &st, cfg.norm_r).unwrap();
        let rep = long_time_check(&tr, &st, c2, cfg.norm_r).unwrap();
        assert!(rep.holds);
    }

    #[test]
    fn zero_amplitude_envelope_is_exact_decay() {
        let p = params();
        let cfg = WkeConfig::new(&p);
        let tr = solve(&p, 0.0, 5.0, &cfg).unwrap();
        let st = stationary(&p, 0.0, &cfg).unwrap();
        let rep = long_time_check(&tr, &st, 0.0, cfg.norm_r).unwrap();
        assert!(rep.holds);
        let c1 = rep.c1;
        for (t, d) in rep.times.iter().zip(&rep.distance) {
            assert!(*d <= c1 * (-2.0 * t).exp() * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn trajectory_csv_shape() {
        let p = params();
        let cfg = WkeConfig::new(&p);
        let tr = solve(&p, 0.0, 0.1, &cfg).unwrap();
        let csv = tr.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 * cfg.knots.len());
    }
}
