//! Energy, decay-rate fits, asymptotic data at future infinity, causal
//! character of grad ψ and metric reconstruction from the frame.

use crate::background::{flrw_background, flrw_limits, FlrwParams};
use crate::constraints;
use crate::error::{Result, SimError};
use crate::grid::{sup, Field, Grid};
use crate::state::{
    e_idx, epsi_idx, gamma_idx, k_idx, state_norms, unhat, FullVars, State, StateNorms, E0PSI,
    N_HAT, PSI_HAT,
};

/// Per-output summary of a state.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub norms: StateNorms,
    pub energy: f64,
    pub ham_sup: f64,
    pub ham_l2: f64,
    pub mom_sup: f64,
    pub mom_l2: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Largest `|tr k̂| / sup|k̂|` over the steps since the previous record.
    pub max_trace_ratio: f64,
    pub psi_flrw: f64,
    pub q: Field,
    pub psi_hat: Field,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<State>,
    pub steps: usize,
    pub max_trace_ratio: f64,
    pub final_state: Option<State>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// `(t, value)` pairs of a per-record quantity.
    pub fn series(&self, f: impl Fn(&DiagnosticsRecord) -> f64) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, f(r))).collect()
    }

    pub fn snapshot_near(&self, t: f64) -> Option<&State> {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

/// `e^{2Ht}(‖k̂‖² + ‖γ̂‖² + ‖ê‖² + e^{Ht}‖n̂‖² + ‖êψ‖²)` in H^N.
pub fn total_energy(s: &State, order: usize, params: &FlrwParams) -> f64 {
    energy_from_norms(&state_norms(s, order), s.t, params.hubble())
}

fn energy_from_norms(n: &StateNorms, t: f64, h: f64) -> f64 {
    let w = (h * t).exp();
    w * w * (n.k * n.k + n.gamma * n.gamma + n.e * n.e + w * n.n * n.n + n.epsi * n.epsi)
}

pub fn record(s: &State, params: &FlrwParams, order: usize) -> Result<DiagnosticsRecord> {
    let bg = flrw_background(params, s.t);
    let f = unhat(s, &bg)?;
    let c = constraints::evaluate(&f, params, &bg);
    let q = causal_character(&f);
    let norms = state_norms(s, order);
    let q_min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let q_max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DiagnosticsRecord {
        t: s.t,
        energy: energy_from_norms(&norms, s.t, params.hubble()),
        norms,
        ham_sup: c.ham_sup,
        ham_l2: c.ham_l2,
        mom_sup: c.mom_sup,
        mom_l2: c.mom_l2,
        q_min,
        q_max,
        max_trace_ratio: 0.0,
        psi_flrw: bg.psi,
        q,
        psi_hat: s.psi_hat().clone(),
    })
}

/// Least-squares slope of `ln v` against `t` inside `window`, with r².
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<(f64, f64)> {
    let eps = 1e-9 * (1.0 + window.0.abs().max(window.1.abs()));
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= window.0 - eps && t <= window.1 + eps)
        .collect();
    if pts.len() < 5 {
        return Err(SimError::InsufficientSamples {
            got: pts.len(),
            need: 5,
        });
    }
    if let Some(&(t, value)) = pts.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(SimError::NonPositiveValue { t, value });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(t, v) in &pts {
        let (dx, dy) = (t - mt, v.ln() - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, r2))
}

/// `q = (e₀ψ)² - Σ_I (e_Iψ)²`: positive for a timelike gradient.
pub fn causal_character(f: &FullVars) -> Field {
    (0..f.n.len())
        .map(|p| {
            let s: f64 = f.epsi.iter().map(|e| e[p] * e[p]).sum();
            f.e0psi[p] * f.e0psi[p] - s
        })
        .collect()
}

/// Stiff-fluid energy density `ρ = q/2`.
pub fn fluid_density(f: &FullVars) -> Field {
    causal_character(f).into_iter().map(|q| 0.5 * q).collect()
}

/// Frame components `e[I][i]` at one point.
fn frame_at(e: &[[Field; 3]; 3], p: usize) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for a in 0..3 {
            m[i][a] = e[i][a][p];
        }
    }
    m
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |i: usize, j: usize| {
        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
        let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
        m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = c(j, i) / det;
        }
    }
    Some(inv)
}

fn frobenius(m: &[[f64; 3]; 3]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dual frame `v_i^C` (indexed `[i][C]`) with `v_i^C e_C^j = δ_i^j`, and the
/// metric `g_ij = v_i^C v_j^C` as the six components 11, 22, 33, 12, 13, 23.
pub fn reconstruct_metric_from_frame(
    e: &[[Field; 3]; 3],
) -> Result<([[Field; 3]; 3], [Field; 6])> {
    let len = e[0][0].len();
    let zeros = || vec![0.0; len];
    let mut v: [[Field; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| zeros()));
    let mut g: [Field; 6] = std::array::from_fn(|_| zeros());
    for p in 0..len {
        let m = frame_at(e, p);
        let inv = invert3(&m).ok_or(SimError::SingularFrame {
            index: p,
            condition: f64::INFINITY,
        })?;
        let condition = frobenius(&m) * frobenius(&inv);
        if !(condition <= 1e8) {
            return Err(SimError::SingularFrame { index: p, condition });
        }
        // V E = I with E[C][j] = e_C^j, so V = E⁻¹ and v_i^C = V[i][C].
        for i in 0..3 {
            for c in 0..3 {
                v[i][c][p] = inv[i][c];
            }
        }
        for (slot, &(i, j)) in SYM.iter().enumerate() {
            g[slot][p] = (0..3).map(|c| inv[i][c] * inv[j][c]).sum();
        }
    }
    Ok((v, g))
}

pub fn reconstruct_metric(f: &FullVars) -> Result<([[Field; 3]; 3], [Field; 6])> {
    reconstruct_metric_from_frame(&f.e)
}

const SYM: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Limits at future infinity extracted from late-time snapshots.
#[derive(Debug, Clone)]
pub struct AsymptoticData {
    pub t1: f64,
    pub t2: f64,
    pub n_hat_inf: Field,
    /// `[I][i]`.
    pub e_hat_inf: [[Field; 3]; 3],
    /// Storage slots of γ̂ (see the state layout).
    pub gamma_hat_inf: [Field; 9],
    pub epsi_inf: [Field; 3],
    /// Symmetric part of the k̂ forcing, slots 11, 22, 33, 12, 13, 23.
    pub f_khat: [Field; 6],
    /// Largest `|F_IJ - F_JI|` relative to `sup |F|`.
    pub f_khat_asymmetry: f64,
    /// Largest `|tr F|` relative to `sup |F|`.
    pub f_khat_trace: f64,
    pub f_e0psi: Field,
    pub k_hat_inf: [Field; 6],
    pub e0psi_inf: Field,
    pub e_inf: [[Field; 3]; 3],
    pub g_inf: [Field; 6],
    pub psi_inf: Field,
    /// r² of the leading-order rate fits that guard the window.
    pub leading_r2: Vec<(String, f64)>,
}

/// `(Q2 - r Q1)/(1 - r)` with `r = e^{-gap (t2 - t1)}`, eliminating a
/// remainder that decays like `e^{-gap t}`.
fn richardson(q1: &[f64], q2: &[f64], gap: f64, t1: f64, t2: f64) -> Field {
    let r = (-gap * (t2 - t1)).exp();
    q1.iter().zip(q2).map(|(a, b)| (b - r * a) / (1.0 - r)).collect()
}

fn scaled(f: &[f64], w: f64) -> Field {
    f.iter().map(|v| v * w).collect()
}

/// Evaluates the k̂ forcing coefficient from first-order limits. Returns the
/// full 3×3 array `[I][J]`.
pub fn forcing_khat(
    grid: &Grid,
    e_inf: &[[Field; 3]; 3],
    gamma_inf: &[Field; 9],
    epsi_inf: &[Field; 3],
    h: f64,
) -> [[Field; 3]; 3] {
    let len = grid.len();
    let grads: Vec<[Field; 3]> = gamma_inf.iter().map(|g| grid.gradient(g)).collect();
    let gam = |i: usize, j: usize, b: usize, p: usize| match gamma_idx(i, j, b) {
        Some((idx, s)) => s * gamma_inf[idx - 16][p],
        None => 0.0,
    };
    // e∞_C(γ∞_IJB)
    let eg = |c: usize, i: usize, j: usize, b: usize, p: usize| match gamma_idx(i, j, b) {
        Some((idx, s)) => s * (0..3).map(|a| e_inf[c][a][p] * grads[idx - 16][a][p]).sum::<f64>(),
        None => 0.0,
    };
    let mut out: [[Field; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; len]));
    for p in 0..len {
        let gt: Vec<f64> = (0..3).map(|d| (0..3).map(|c| gam(c, c, d, p)).sum()).collect();
        let div: f64 = (0..3)
            .flat_map(|c| (0..3).map(move |d| (c, d)))
            .map(|(c, d)| eg(c, d, d, c, p))
            .sum();
        let mut quad = 0.0;
        for c in 0..3 {
            for d in 0..3 {
                for e in 0..3 {
                    quad += gam(c, e, d, p) * gam(d, e, c, p);
                }
            }
        }
        quad += gt.iter().map(|v| v * v).sum::<f64>();
        let psi2: f64 = epsi_inf.iter().map(|f| f[p] * f[p]).sum();
        for i in 0..3 {
            for j in 0..3 {
                let mut v = -epsi_inf[i][p] * epsi_inf[j][p];
                for c in 0..3 {
                    v += eg(c, i, j, c, p) - eg(i, c, j, c, p);
                    v -= gam(i, j, c, p) * gt[c];
                    for d in 0..3 {
                        v -= gam(c, i, d, p) * gam(d, j, c, p);
                    }
                }
                if i == j {
                    v += -2.0 / 3.0 * div + quad / 3.0 + psi2 / 3.0;
                }
                out[i][j][p] = v / h;
            }
        }
    }
    out
}

/// Evaluates the ê₀ψ forcing coefficient from first-order limits.
pub fn forcing_e0psi(
    grid: &Grid,
    e_inf: &[[Field; 3]; 3],
    gamma_inf: &[Field; 9],
    epsi_inf: &[Field; 3],
    h: f64,
) -> Field {
    let grads: Vec<[Field; 3]> = epsi_inf.iter().map(|f| grid.gradient(f)).collect();
    (0..grid.len())
        .map(|p| {
            let mut v = 0.0;
            for c in 0..3 {
                v += (0..3).map(|a| e_inf[c][a][p] * grads[c][a][p]).sum::<f64>();
                for d in 0..3 {
                    let g = match gamma_idx(c, c, d) {
                        Some((idx, s)) => s * gamma_inf[idx - 16][p],
                        None => 0.0,
                    };
                    v -= g * epsi_inf[d][p];
                }
            }
            v / h
        })
        .collect()
}

/// Default extraction window `[4/H, 8/H]`.
pub fn default_window(params: &FlrwParams) -> (f64, f64) {
    let h = params.hubble();
    (4.0 / h, 8.0 / h)
}

/// Extracts limits at future infinity by two-point Richardson extrapolation
/// between the first and last snapshot inside `window`.
pub fn extract_asymptotics(
    traj: &Trajectory,
    params: &FlrwParams,
    window: (f64, f64),
) -> Result<AsymptoticData> {
    let h = params.hubble();
    let eps = 1e-9 * (1.0 + window.1.abs());
    let snaps: Vec<&State> = traj
        .snapshots
        .iter()
        .filter(|s| s.t >= window.0 - eps && s.t <= window.1 + eps)
        .collect();
    if snaps.len() < 3 {
        return Err(SimError::InsufficientSamples {
            got: snaps.len(),
            need: 3,
        });
    }
    if window.0 < 3.0 / h - eps {
        return Err(SimError::WindowTooEarly(format!(
            "window starts at {} < 3/H",
            window.0
        )));
    }
    let (s1, s2) = (snaps[0], snaps[snaps.len() - 1]);
    let (t1, t2) = (s1.t, s2.t);
    let grid = s1.grid.clone();

    let leading_r2 = leading_fits(&snaps)?;

    let rich = |c: usize, weight: f64, gap: f64| {
        richardson(
            &scaled(&s1.comps[c], (weight * h * t1).exp()),
            &scaled(&s2.comps[c], (weight * h * t2).exp()),
            gap * h,
            t1,
            t2,
        )
    };
    let n_hat_inf = rich(N_HAT, 2.0, 2.0);
    let e_hat_inf: [[Field; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|a| rich(e_idx(i, a), 1.0, 2.0)));
    let gamma_hat_inf: [Field; 9] = std::array::from_fn(|q| rich(16 + q, 1.0, 2.0));
    let epsi_inf: [Field; 3] = std::array::from_fn(|i| rich(epsi_idx(i), 1.0, 2.0));

    let inv_ainf = 1.0 / params.a_inf_coef();
    let e_inf: [[Field; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|a| {
            let d = if i == a { inv_ainf } else { 0.0 };
            e_hat_inf[i][a].iter().map(|v| v + d).collect()
        })
    });

    let f_full = forcing_khat(&grid, &e_inf, &gamma_hat_inf, &epsi_inf, h);
    let f_scale = f_full.iter().flatten().map(|f| sup(f)).fold(0.0, f64::max);
    let mut asym = 0.0f64;
    let mut trace = 0.0f64;
    for p in 0..grid.len() {
        for i in 0..3 {
            for j in 0..3 {
                asym = asym.max((f_full[i][j][p] - f_full[j][i][p]).abs());
            }
        }
        trace = trace.max((0..3).map(|i| f_full[i][i][p]).sum::<f64>().abs());
    }
    let rel = |x: f64| if f_scale > 0.0 { x / f_scale } else { 0.0 };
    let f_khat: [Field; 6] = std::array::from_fn(|slot| {
        let (i, j) = SYM[slot];
        f_full[i][j]
            .iter()
            .zip(&f_full[j][i])
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    });
    let f_e0psi = forcing_e0psi(&grid, &e_inf, &gamma_hat_inf, &epsi_inf, h);

    let second_order = |c: usize, forcing: &Field| {
        let strip = |s: &State| -> Field {
            let t = s.t;
            s.comps[c]
                .iter()
                .zip(forcing)
                .map(|(v, f)| (v - f * (-2.0 * h * t).exp()) * (3.0 * h * t).exp())
                .collect()
        };
        richardson(&strip(s1), &strip(s2), h, t1, t2)
    };
    let k_hat_inf: [Field; 6] = std::array::from_fn(|slot| {
        let (i, j) = SYM[slot];
        second_order(k_idx(i, j), &f_khat[slot])
    });
    let e0psi_inf = second_order(E0PSI, &f_e0psi);

    let (_, g_inf) = reconstruct_metric_from_frame(&e_inf)?;
    let (_, psi_flrw_inf) = flrw_limits(params);
    let psi_inf = richardson(&s1.comps[PSI_HAT], &s2.comps[PSI_HAT], 2.0 * h, t1, t2)
        .into_iter()
        .map(|v| v + psi_flrw_inf)
        .collect();

    Ok(AsymptoticData {
        t1,
        t2,
        n_hat_inf,
        e_hat_inf,
        gamma_hat_inf,
        epsi_inf,
        f_khat,
        f_khat_asymmetry: rel(asym),
        f_khat_trace: rel(trace),
        f_e0psi,
        k_hat_inf,
        e0psi_inf,
        e_inf,
        g_inf,
        psi_inf,
        leading_r2,
    })
}

/// Decay fits of the leading-order groups over the snapshots; any group
/// that is not at round-off must fit with r² ≥ 0.99.
fn leading_fits(snaps: &[&State]) -> Result<Vec<(String, f64)>> {
    let groups: [(&str, Vec<usize>); 4] = [
        ("n_hat", vec![N_HAT]),
        ("e_hat", (1..10).collect()),
        ("gamma_hat", (16..25).collect()),
        ("epsi_hat", (26..29).collect()),
    ];
    let mut out = Vec::new();
    for (name, comps) in groups {
        let series: Vec<(f64, f64)> = snaps
            .iter()
            .map(|s| (s.t, comps.iter().map(|&c| sup(&s.comps[c])).fold(0.0, f64::max)))
            .collect();
        if series.iter().any(|&(_, v)| v <= 1e-13) {
            continue;
        }
        let window = (series[0].0, series[series.len() - 1].0);
        if series.len() < 5 {
            continue;
        }
        let (_, r2) = fit_decay_rate(&series, window)?;
        if r2 < 0.99 {
            return Err(SimError::WindowTooEarly(format!(
                "{name} decay fit has r² = {r2:.4} over [{}, {}]",
                window.0, window.1
            )));
        }
        out.push((name.to_string(), r2));
    }
    Ok(out)
}

/// Least-squares coefficients of `Σ_j c_j(x) e^{-p_j H t}` fitted pointwise
/// to a field time series. Returns one field per exponent.
pub fn fit_exponential_modes(
    samples: &[(f64, &Field)],
    rates: &[f64],
    h: f64,
) -> Result<Vec<Field>> {
    let m = samples.len();
    let k = rates.len();
    if m < k {
        return Err(SimError::InsufficientSamples { got: m, need: k });
    }
    let t0 = samples[0].0;
    // Columns normalized at t0 for conditioning.
    let mut q: Vec<Vec<f64>> = rates
        .iter()
        .map(|&r| samples.iter().map(|(t, _)| (-r * h * (t - t0)).exp()).collect())
        .collect();
    // Modified Gram–Schmidt: A = Q R.
    let mut r = vec![vec![0.0; k]; k];
    for j in 0..k {
        for i in 0..j {
            let d: f64 = (0..m).map(|s| q[i][s] * q[j][s]).sum();
            r[i][j] = d;
            for s in 0..m {
                q[j][s] -= d * q[i][s];
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(SimError::InvalidParameter("degenerate exponential basis".into()));
        }
        r[j][j] = norm;
        for v in q[j].iter_mut() {
            *v /= norm;
        }
    }
    let len = samples[0].1.len();
    let mut out = vec![vec![0.0; len]; k];
    for p in 0..len {
        let qty: Vec<f64> = (0..k)
            .map(|j| (0..m).map(|s| q[j][s] * samples[s].1[p]).sum())
            .collect();
        let mut c = vec![0.0; k];
        for j in (0..k).rev() {
            let mut v = qty[j];
            for i in j + 1..k {
                v -= r[j][i] * c[i];
            }
            c[j] = v / r[j][j];
        }
        for j in 0..k {
            // Undo the normalization: coefficient of e^{-p H t}.
            out[j][p] = c[j] * (rates[j] * h * t0).exp();
        }
    }
    Ok(out)
}

/// First sampled time after which `q` stays negative at each grid point
/// (None if `q` is non-negative at the last record).
pub fn causal_flip_times(traj: &Trajectory) -> Vec<Option<f64>> {
    let Some(last) = traj.records.last() else {
        return Vec::new();
    };
    (0..last.q.len())
        .map(|p| {
            let mut flip = None;
            for r in traj.records.iter().rev() {
                if r.q[p] < 0.0 {
                    flip = Some(r.t);
                } else {
                    break;
                }
            }
            flip
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_examples() {
        let p = FlrwParams::new(3.0, 1.0, 0.0, 3.0).unwrap();
        let g = Grid::line(8).unwrap();
        assert_eq!(total_energy(&State::zeros(&g, 0.0), 4, &p), 0.0);
        let mut s = State::zeros(&g, 0.0);
        s.comps[N_HAT] = g.constant(0.2);
        let v = g.volume();
        assert!((total_energy(&s, 4, &p) - 0.04 * v).abs() < 1e-12);
        s.t = 1.0;
        let e = total_energy(&s, 4, &p);
        assert!((e - 3f64.exp() * 0.04 * v).abs() < 1e-10 * e);
    }

    #[test]
    fn decay_fit_examples() {
        let s: Vec<(f64, f64)> = (0..10).map(|i| {
            let t = i as f64 * 0.5;
            (t, 5.0 * (-2.0 * t).exp())
        }).collect();
        let (r, r2) = fit_decay_rate(&s, (0.0, 5.0)).unwrap();
        assert!((r + 2.0).abs() < 1e-10);
        assert!((r2 - 1.0).abs() < 1e-12);

        let c: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 3.0)).collect();
        assert_eq!(fit_decay_rate(&c, (0.0, 5.0)).unwrap().0, 0.0);

        let w: Vec<(f64, f64)> = (0..200).map(|i| {
            let t = i as f64 * 0.05;
            (t, 3.0 * (-t).exp() * (1.0 + 0.01 * (10.0 * t).sin()))
        }).collect();
        assert!((fit_decay_rate(&w, (0.0, 10.0)).unwrap().0 + 1.0).abs() < 0.02);

        assert!(matches!(
            fit_decay_rate(&s[..3], (0.0, 5.0)),
            Err(SimError::InsufficientSamples { got: 3, need: 5 })
        ));
        let mut bad = s.clone();
        bad[2].1 = 0.0;
        assert!(matches!(fit_decay_rate(&bad, (0.0, 5.0)), Err(SimError::NonPositiveValue { .. })));
    }

    #[test]
    fn metric_of_flrw_frame() {
        let g = Grid::line(4).unwrap();
        let a = 2.5;
        let e: [[Field; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|j| g.constant(if i == j { 1.0 / a } else { 0.0 }))
        });
        let (v, m) = reconstruct_metric_from_frame(&e).unwrap();
        for p in 0..4 {
            assert!((v[1][1][p] - a).abs() < 1e-15);
            assert!((m[0][p] - a * a).abs() < 1e-14);
            assert_eq!(m[3][p], 0.0);
        }
    }

    #[test]
    fn singular_frame_rejected() {
        let g = Grid::line(4).unwrap();
        let mut e: [[Field; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|j| g.constant(if i == j { 1.0 } else { 0.0 }))
        });
        e[2][2][1] = 1e-10;
        assert!(matches!(
            reconstruct_metric_from_frame(&e),
            Err(SimError::SingularFrame { index: 1, .. })
        ));
    }

    #[test]
    fn zero_limits_give_zero_forcing() {
        let g = Grid::line(8).unwrap();
        let e: [[Field; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|j| g.constant(if i == j { 0.9 } else { 0.0 }))
        });
        let zero9: [Field; 9] = std::array::from_fn(|_| g.zeros());
        let zero3: [Field; 3] = std::array::from_fn(|_| g.zeros());
        let f = forcing_khat(&g, &e, &zero9, &zero3, 1.0);
        assert!(f.iter().flatten().all(|c| sup(c) == 0.0));
        assert_eq!(sup(&forcing_e0psi(&g, &e, &zero9, &zero3, 1.0)), 0.0);
    }

    #[test]
    fn exponential_mode_fit_recovers_coefficients() {
        let g = Grid::line(4).unwrap();
        let a = g.sample(|x| x[0].sin());
        let b = g.constant(0.3);
        let fields: Vec<(f64, Field)> = (0..12)
            .map(|i| {
                let t = 4.0 + i as f64 * 0.3;
                let f = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| x * (-2.0 * t).exp() + y * (-3.0 * t).exp())
                    .collect();
                (t, f)
            })
            .collect();
        let samples: Vec<(f64, &Field)> = fields.iter().map(|(t, f)| (*t, f)).collect();
        let c = fit_exponential_modes(&samples, &[2.0, 3.0, 4.0], 1.0).unwrap();
        for p in 0..4 {
            assert!((c[0][p] - a[p]).abs() < 1e-9);
            assert!((c[1][p] - b[p]).abs() < 1e-7);
        }
    }
}
