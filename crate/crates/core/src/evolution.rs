//! Right-hand side of the hatted system and the time integrator.
//!
//! The right-hand side is assembled from the full variables and the exact
//! background derivatives are subtracted afterwards, so the zero hatted state
//! is a fixed point to round-off. The lapse carries the stiff parabolic part
//! `μ(t)Δ n̂` with `μ = a(t)⁻²`; by default it is integrated exactly per Fourier
//! mode inside a Lawson (integrating-factor) RK4 step.

use serde::{Deserialize, Serialize};

use crate::background::{adaptive_gk15, flrw_background, BackgroundState, FlrwParams};
use crate::diagnostics::{record, DiagnosticsRecord, Trajectory};
use crate::error::{Result, SimError};
use crate::frame_ops::{map_points, Local, SpatialDerivs};
use crate::grid::{sup, Field};
use crate::state::{
    e_idx, epsi_idx, gamma_idx, k_idx, project_trace, unhat, State, E0PSI, NUM_COMPONENTS,
    N_HAT, PSI_HAT,
};

/// Treatment of the `μ(t)Δ n̂` term of the lapse equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LapseScheme {
    /// Exact exponential per Fourier mode inside Lawson RK4 (fourth order).
    #[default]
    IntegratingFactor,
    /// Backward-Euler Helmholtz solve per stage (first order in the coupling).
    BackwardEuler,
    /// Fully explicit, with the parabolic step restriction.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt_cfl_factor: f64,
    pub t_end: f64,
    #[serde(default)]
    pub symmetrize: bool,
    #[serde(default = "default_sobolev")]
    pub n_sobolev: usize,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    #[serde(default)]
    pub lapse_scheme: LapseScheme,
    /// Upper bound on the step, in units of 1/H.
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Overrides the CFL step (still clipped to output times).
    #[serde(default)]
    pub fixed_dt: Option<f64>,
    /// Holds n̂ at its initial value.
    #[serde(default)]
    pub freeze_lapse: bool,
}

fn default_sobolev() -> usize {
    4
}
fn default_stride() -> usize {
    1
}
fn default_dt_max() -> f64 {
    0.05
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt_cfl_factor: 0.5,
            t_end: 8.0,
            symmetrize: false,
            n_sobolev: default_sobolev(),
            output_stride: default_stride(),
            lapse_scheme: LapseScheme::default(),
            dt_max: default_dt_max(),
            fixed_dt: None,
            freeze_lapse: false,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidParameter(m));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.dt_cfl_factor > 0.0 && self.dt_cfl_factor <= 1.0) {
            return bad(format!("dt_cfl_factor must lie in (0, 1], got {}", self.dt_cfl_factor));
        }
        if !(self.dt_max > 0.0) {
            return bad(format!("dt_max must be positive, got {}", self.dt_max));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("fixed_dt must be positive, got {dt}"));
            }
        }
        if self.output_stride == 0 {
            return bad("output_stride must be at least 1".into());
        }
        Ok(())
    }
}

/// Time derivative of every hatted component, with the full lapse equation
/// in the n̂ slot.
pub fn rhs(
    s: &State,
    params: &FlrwParams,
    bg: &BackgroundState,
    symmetrize: bool,
) -> Result<State> {
    let f = unhat(s, bg)?;
    let grid = &s.grid;
    let d = SpatialDerivs::new(grid, &f);
    let lambda = params.lambda;
    let rates = map_points(grid.len(), |p| {
        let l = Local::at(&f, &d, p);
        point_rates(&l, lambda, bg, symmetrize)
    });
    let mut out = State::zeros(grid, s.t);
    for (p, r) in rates.iter().enumerate() {
        for (c, v) in r.iter().enumerate() {
            out.comps[c][p] = *v;
        }
    }
    for (name_idx, c) in out.comps.iter_mut().enumerate() {
        if let Some(index) = c.iter().position(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteField {
                field: crate::state::component_names()[name_idx].clone(),
                index,
            });
        }
        *c = grid.dealias(c);
    }
    Ok(out)
}

fn point_rates(
    l: &Local,
    lambda: f64,
    bg: &BackgroundState,
    symmetrize: bool,
) -> [f64; NUM_COMPONENTS] {
    let mut r = [0.0; NUM_COMPONENTS];
    let n = l.n;

    let forcing = l.k_forcing(lambda);
    let mut kdot = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let fij = if symmetrize {
                0.5 * (forcing[i][j] + forcing[j][i])
            } else {
                forcing[i][j]
            };
            kdot[i][j] = n * (l.trk * l.k[i][j] + fij);
            kdot[j][i] = kdot[i][j];
        }
    }
    let tr = (kdot[0][0] + kdot[1][1] + kdot[2][2]) / 3.0;
    for i in 0..3 {
        for j in i..3 {
            r[k_idx(i, j)] = kdot[i][j] - if i == j { tr } else { 0.0 };
        }
    }
    // The diagonal entries are small differences of O(trk²) terms; rounding in
    // `3 tr` would leave a trace far above the size of k̂, so close it exactly.
    r[k_idx(2, 2)] = -(r[k_idx(0, 0)] + r[k_idx(1, 1)]);

    let gdot = l.gamma_rate(symmetrize);
    for i in 0..3 {
        for (j, b) in [(0, 1), (0, 2), (1, 2)] {
            r[gamma_idx(i, j, b).unwrap().0] = n * gdot[i][j][b];
        }
    }

    for i in 0..3 {
        for a in 0..3 {
            let mut v = 0.0;
            for c in 0..3 {
                v += l.k[i][c] * l.e[c][a];
            }
            r[e_idx(i, a)] = n * v - if i == a { bg.frame_coef_dot } else { 0.0 };
        }
    }

    r[N_HAT] = l.lapse_rate(lambda, bg.trk_dot);
    r[E0PSI] = n * l.e0psi_rate() - bg.phi_dot;
    let epsi = l.epsi_rate();
    for i in 0..3 {
        r[epsi_idx(i)] = n * epsi[i];
    }
    r[PSI_HAT] = n * l.e0psi - bg.phi;
    r
}

/// Time derivative of the hyperbolic/transport block; the n̂ slot is zero.
pub fn rhs_hyperbolic(
    s: &State,
    params: &FlrwParams,
    bg: &BackgroundState,
    symmetrize: bool,
) -> Result<State> {
    let mut r = rhs(s, params, bg, symmetrize)?;
    r.comps[N_HAT] = s.grid.zeros();
    Ok(r)
}

/// `(∂_t n̂ - μ Δ n̂, μ)` with `μ = a(t)⁻²`.
pub fn lapse_rhs_split(
    s: &State,
    params: &FlrwParams,
    bg: &BackgroundState,
) -> Result<(Field, f64)> {
    let r = rhs(s, params, bg, false)?;
    let mu = bg.frame_coef * bg.frame_coef;
    Ok((explicit_lapse(&r.comps[N_HAT], s, mu), mu))
}

fn explicit_lapse(full: &Field, s: &State, mu: f64) -> Field {
    let lap = s.grid.laplacian(s.n_hat());
    full.iter().zip(&lap).map(|(f, l)| f - mu * l).collect()
}

/// `∫_{t1}^{t2} a(t)⁻² dt`.
pub fn inverse_a2_integral(params: &FlrwParams, t1: f64, t2: f64) -> f64 {
    if t2 <= t1 {
        return 0.0;
    }
    let f = |t: f64| inverse_scale_factor(params, t).powi(2);
    adaptive_gk15(&f, t1, t2, 1e-15 * (t2 - t1), 20)
}

fn inverse_scale_factor(params: &FlrwParams, t: f64) -> f64 {
    let s = 3.0 * params.hubble();
    let d = params.alpha() * (s * t).sinh() + (s * t).cosh();
    1.0 / (params.a0 * d.cbrt())
}

/// Nonlinear part of the split right-hand side at a stage.
fn stage_rhs(u: &State, params: &FlrwParams, cfg: &EvolutionConfig) -> Result<State> {
    let bg = flrw_background(params, u.t);
    let mut r = rhs(u, params, &bg, cfg.symmetrize)?;
    if cfg.freeze_lapse {
        r.comps[N_HAT] = u.grid.zeros();
    } else if cfg.lapse_scheme != LapseScheme::Explicit {
        let mu = bg.frame_coef * bg.frame_coef;
        r.comps[N_HAT] = explicit_lapse(&r.comps[N_HAT], u, mu);
    }
    Ok(r)
}

fn combine(base: &State, t: f64, terms: &[(f64, &State)]) -> State {
    let mut out = base.clone();
    out.t = t;
    for (c, s) in terms {
        out.axpy(*c, s);
    }
    out
}

/// Applies `exp(integral · Δ)` to the lapse.
fn propagate(u: &mut State, integral: f64) {
    if integral > 0.0 {
        u.comps[N_HAT] = u.grid.apply_radial(&u.comps[N_HAT], |k2| (-k2 * integral).exp());
    }
}

/// Advances `s` by `dt`, then removes round-off trace from k̂.
pub fn step(s: &State, params: &FlrwParams, dt: f64, cfg: &EvolutionConfig) -> Result<State> {
    let mut out = step_unprojected(s, params, dt, cfg)?;
    project_trace(&mut out.comps);
    Ok(out)
}

fn step_unprojected(
    s: &State,
    params: &FlrwParams,
    dt: f64,
    cfg: &EvolutionConfig,
) -> Result<State> {
    if !(dt > 0.0) {
        return Err(SimError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let t = s.t;
    let (th, t1) = (t + 0.5 * dt, t + dt);
    let implicit = !cfg.freeze_lapse && cfg.lapse_scheme != LapseScheme::Explicit;
    let mut out = match (implicit, cfg.lapse_scheme) {
        (true, LapseScheme::IntegratingFactor) => {
            let i_half = inverse_a2_integral(params, t, th);
            let i_late = inverse_a2_integral(params, th, t1);
            let k1 = stage_rhs(s, params, cfg)?;
            let mut u2 = combine(s, th, &[(0.5 * dt, &k1)]);
            propagate(&mut u2, i_half);
            let k2 = stage_rhs(&u2, params, cfg)?;
            let mut u3 = s.clone();
            u3.t = th;
            propagate(&mut u3, i_half);
            u3.axpy(0.5 * dt, &k2);
            let k3 = stage_rhs(&u3, params, cfg)?;
            let mut u4 = s.clone();
            u4.t = t1;
            propagate(&mut u4, i_half + i_late);
            let mut k3p = k3.clone();
            propagate(&mut k3p, i_late);
            u4.axpy(dt, &k3p);
            let k4 = stage_rhs(&u4, params, cfg)?;
            let mut out = combine(s, t1, &[(dt / 6.0, &k1)]);
            propagate(&mut out, i_half + i_late);
            let mut mid = combine(&k2, t1, &[(1.0, &k3)]);
            propagate(&mut mid, i_late);
            out.axpy(dt / 3.0, &mid);
            out.axpy(dt / 6.0, &k4);
            out
        }
        (true, _) => {
            let helm = |u: &mut State| -> Result<()> {
                let mu = inverse_scale_factor(params, u.t).powi(2);
                let c = (u.t - t) * mu;
                u.comps[N_HAT] = u.grid.helmholtz_solve(&u.comps[N_HAT], 1.0, c)?;
                Ok(())
            };
            let k1 = stage_rhs(s, params, cfg)?;
            let mut u2 = combine(s, th, &[(0.5 * dt, &k1)]);
            helm(&mut u2)?;
            let k2 = stage_rhs(&u2, params, cfg)?;
            let mut u3 = combine(s, th, &[(0.5 * dt, &k2)]);
            helm(&mut u3)?;
            let k3 = stage_rhs(&u3, params, cfg)?;
            let mut u4 = combine(s, t1, &[(dt, &k3)]);
            helm(&mut u4)?;
            let k4 = stage_rhs(&u4, params, cfg)?;
            let mut out = combine(
                s,
                t1,
                &[(dt / 6.0, &k1), (dt / 3.0, &k2), (dt / 3.0, &k3), (dt / 6.0, &k4)],
            );
            helm(&mut out)?;
            out
        }
        (false, _) => {
            let k1 = stage_rhs(s, params, cfg)?;
            let u2 = combine(s, th, &[(0.5 * dt, &k1)]);
            let k2 = stage_rhs(&u2, params, cfg)?;
            let u3 = combine(s, th, &[(0.5 * dt, &k2)]);
            let k3 = stage_rhs(&u3, params, cfg)?;
            let u4 = combine(s, t1, &[(dt, &k3)]);
            let k4 = stage_rhs(&u4, params, cfg)?;
            combine(
                s,
                t1,
                &[(dt / 6.0, &k1), (dt / 3.0, &k2), (dt / 3.0, &k3), (dt / 6.0, &k4)],
            )
        }
    };
    out.t = t1;
    out.check_finite()?;
    let min_lapse = out.min_lapse();
    if !(min_lapse > 0.0) {
        return Err(SimError::LapseNonPositive { t: t1, min_lapse });
    }
    let before = state_sup(s).max(1e-12);
    let after = state_sup(&out);
    if after > 10.0 * before {
        return Err(SimError::StabilityViolation {
            t: t1,
            factor: after / before,
        });
    }
    Ok(out)
}

fn state_sup(s: &State) -> f64 {
    s.comps.iter().map(|c| sup(c)).fold(0.0, f64::max)
}

/// Step size at time `t` before clipping to output times.
pub fn stable_dt(s: &State, params: &FlrwParams, cfg: &EvolutionConfig) -> f64 {
    if let Some(dt) = cfg.fixed_dt {
        return dt;
    }
    let h = params.hubble();
    let a = inverse_scale_factor(params, s.t).recip();
    let dx = s.grid.min_spacing();
    let mut dt = 0.5 * dx * a;
    if cfg.lapse_scheme == LapseScheme::Explicit && !cfg.freeze_lapse {
        dt = dt.min(dx * dx * a * a / 6.0);
    }
    (cfg.dt_cfl_factor * dt).min(cfg.dt_max / h)
}

/// Marches from `s0` to `cfg.t_end`, recording diagnostics every
/// `output_stride` steps, at every snapshot time and at the end. Snapshot
/// times are hit exactly and the full state is stored there.
pub fn evolve(
    s0: &State,
    params: &FlrwParams,
    cfg: &EvolutionConfig,
    snapshot_times: &[f64],
    sink: &mut dyn FnMut(&DiagnosticsRecord) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let mut targets: Vec<f64> = snapshot_times
        .iter()
        .copied()
        .filter(|&t| t > s0.t && t < cfg.t_end)
        .collect();
    targets.push(cfg.t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    let mut traj = Trajectory::default();
    let mut s = s0.clone();
    let wants_snapshot = |t: f64| snapshot_times.iter().any(|&x| (x - t).abs() <= 1e-9);
    let mut push = |s: &State, traj: &mut Trajectory, trace_ratio: f64| -> Result<()> {
        let mut rec = record(s, params, cfg.n_sobolev)?;
        rec.max_trace_ratio = trace_ratio;
        sink(&rec)?;
        traj.records.push(rec);
        if wants_snapshot(s.t) {
            traj.snapshots.push(s.clone());
        }
        Ok(())
    };
    let fail = |t: f64, e: SimError| SimError::EvolutionFailed {
        t,
        source: Box::new(e),
    };
    push(&s, &mut traj, 0.0).map_err(|e| fail(s.t, e))?;

    let mut steps = 0usize;
    let mut trace_ratio = 0.0f64;
    for &target in &targets {
        while s.t < target {
            let mut dt = stable_dt(&s, params, cfg);
            let land = s.t + dt >= target - 1e-12 * target.abs().max(1.0);
            if land {
                dt = target - s.t;
            }
            let next = step_unprojected(&s, params, dt, cfg).map_err(|e| fail(s.t, e))?;
            s = next;
            if land {
                s.t = target;
            }
            steps += 1;
            traj.steps = steps;
            // Trace left by the update itself, before it is projected out.
            let ksup = (10..16).map(|c| sup(&s.comps[c])).fold(0.0, f64::max);
            let ratio = if ksup > 0.0 { s.trace_k_sup() / ksup } else { 0.0 };
            s.project_trace();
            trace_ratio = trace_ratio.max(ratio);
            traj.max_trace_ratio = traj.max_trace_ratio.max(ratio);
            if land || steps % cfg.output_stride == 0 {
                push(&s, &mut traj, trace_ratio).map_err(|e| fail(s.t, e))?;
                trace_ratio = 0.0;
            }
        }
    }
    traj.final_state = Some(s);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn inverse_a2_integral_vacuum() {
        let p = FlrwParams::new(3.0, 1.0, 0.0, 0.0).unwrap();
        let exact = 0.5 * ((-2.0f64 * 0.3).exp() - (-2.0f64 * 1.1).exp());
        assert!((inverse_a2_integral(&p, 0.3, 1.1) - exact).abs() < 1e-15);
    }

    #[test]
    fn zero_state_is_a_fixed_point_of_the_rhs() {
        let p = FlrwParams::new(3.0, 1.0, 0.0, 3.0).unwrap();
        let g = Grid::line(16).unwrap();
        for &t in &[0.0, 1.0, 4.0] {
            let bg = flrw_background(&p, t);
            for sym in [false, true] {
                let r = rhs(&State::zeros(&g, t), &p, &bg, sym).unwrap();
                for c in &r.comps {
                    assert!(sup(c) <= 1e-12, "{}", sup(c));
                }
            }
            let (ex, mu) = lapse_rhs_split(&State::zeros(&g, t), &p, &bg).unwrap();
            assert!(sup(&ex) <= 1e-12);
            assert_eq!(mu, bg.frame_coef * bg.frame_coef);
        }
    }

    #[test]
    fn violating_alpha_leaves_a_lapse_residual() {
        use crate::background::AlphaConvention;
        let p = FlrwParams::new(3.0, 1.0, 0.0, 3.0)
            .unwrap()
            .with_convention(AlphaConvention::ConstraintViolating);
        let g = Grid::line(8).unwrap();
        let bg = flrw_background(&p, 0.0);
        let r = rhs(&State::zeros(&g, 0.0), &p, &bg, false).unwrap();
        // Λ - φ² - 3ä/a = φ0² at t = 0.
        let expect = p.lambda - bg.phi * bg.phi - 3.0 * bg.a_ddot / bg.a;
        assert!((r.comps[N_HAT][0] - expect).abs() < 1e-12);
        assert!((expect - 9.0).abs() < 1e-12);
        for c in 1..NUM_COMPONENTS {
            assert!(sup(&r.comps[c]) < 1e-12);
        }
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let mut c = EvolutionConfig::default();
        assert!(c.validate().is_ok());
        c.dt_cfl_factor = 1.5;
        assert!(c.validate().is_err());
        c = EvolutionConfig { t_end: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
