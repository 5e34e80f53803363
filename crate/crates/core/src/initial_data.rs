//! Constraint-satisfying initial states: exact FLRW, homogeneous anisotropic
//! data, and conformally flat data with an inhomogeneous scalar velocity.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::background::{flrw_background, FlrwParams};
use crate::diagnostics::reconstruct_metric_from_frame;
use crate::error::{Result, SimError};
use crate::grid::{sup, Field, Grid};
use crate::state::{hat, FullVars, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    ExactFlrw,
    HomogeneousAnisotropic,
    ConformalPerturbation,
}

/// One term `coefficient * sin(k·x + phase)` of the scalar velocity profile.
/// A missing phase is drawn from the recipe seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub wavevector: [i32; 3],
    pub coefficient: f64,
    #[serde(default)]
    pub phase: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRecipe {
    pub kind: DataKind,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub modes: Vec<Mode>,
    /// `(κ1, κ2)`; κ3 follows from the Hamiltonian constraint.
    #[serde(default)]
    pub anisotropy: Option<(f64, f64)>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
}

fn default_tol() -> f64 {
    1e-11
}

fn default_max_newton() -> usize {
    20
}

impl DataRecipe {
    pub fn exact_flrw() -> Self {
        Self {
            kind: DataKind::ExactFlrw,
            amplitude: 0.0,
            modes: Vec::new(),
            anisotropy: None,
            seed: 0,
            solver_tol: default_tol(),
            max_newton: default_max_newton(),
        }
    }

    pub fn anisotropic(k1: f64, k2: f64) -> Self {
        Self {
            kind: DataKind::HomogeneousAnisotropic,
            anisotropy: Some((k1, k2)),
            ..Self::exact_flrw()
        }
    }

    pub fn conformal(amplitude: f64, modes: Vec<Mode>) -> Self {
        Self {
            kind: DataKind::ConformalPerturbation,
            amplitude,
            modes,
            ..Self::exact_flrw()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(SimError::InvalidParameter(format!(
                "amplitude must be a finite non-negative number, got {}",
                self.amplitude
            )));
        }
        for m in &self.modes {
            if m.wavevector == [0, 0, 0] {
                return Err(SimError::InvalidParameter(
                    "perturbation modes must have a nonzero wavevector".into(),
                ));
            }
            if !m.coefficient.is_finite() || m.phase.is_some_and(|p| !p.is_finite()) {
                return Err(SimError::InvalidParameter("non-finite mode data".into()));
            }
        }
        if self.kind == DataKind::HomogeneousAnisotropic && self.anisotropy.is_none() {
            return Err(SimError::InvalidParameter(
                "homogeneous anisotropic data needs (k1, k2)".into(),
            ));
        }
        if !(self.solver_tol > 0.0) || self.max_newton == 0 {
            return Err(SimError::InvalidParameter(
                "solver_tol must be positive and max_newton at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The profile `δφ(x)` sampled on `grid`. Modes the grid cannot resolve
    /// alias like any sampled function; the discrete mean is removed.
    pub fn delta_phi(&self, grid: &Grid) -> Result<Field> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = grid.zeros();
        for m in &self.modes {
            let phase = m.phase.unwrap_or_else(|| rng.gen_range(0.0..TAU));
            let kv = m.wavevector.map(f64::from);
            let f = grid.sample(|x| (kv[0] * x[0] + kv[1] * x[1] + kv[2] * x[2] + phase).sin());
            for (o, v) in out.iter_mut().zip(f) {
                *o += self.amplitude * m.coefficient * v;
            }
        }
        let mean = grid.mean(&out);
        for v in out.iter_mut() {
            *v -= mean;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct LichnerowiczSolution {
    pub phi: Field,
    /// Constant value of `k_IJ = λ δ_IJ`.
    pub lambda_cmc: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// `-8ΔΦ - a0²(2Λ + φ² - 6λ²)Φ⁵` pointwise.
fn lich_residual(grid: &Grid, params: &FlrwParams, phi_sq: &[f64], u: &[f64], lam: f64) -> Field {
    let lap = grid.laplacian(u);
    let a2 = params.a0 * params.a0;
    u.iter()
        .zip(&lap)
        .zip(phi_sq)
        .map(|((&v, &l), &p2)| {
            -8.0 * l - a2 * (2.0 * params.lambda + p2 - 6.0 * lam * lam) * v.powi(5)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned restarted GMRES.
fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    restart: usize,
    max_cycles: usize,
) -> Vec<f64> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return x;
    }
    for _ in 0..max_cycles {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = dot(&r, &r).sqrt();
        if beta <= rel_tol * bnorm {
            break;
        }
        let mut v = vec![r.iter().map(|v| v / beta).collect::<Vec<f64>>()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            let zj = precond(&v[j]);
            let mut w = apply(&zj);
            z.push(zj);
            for i in 0..=j {
                h[i][j] = dot(&w, &v[i]);
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= h[i][j] * vk;
                }
            }
            h[j + 1][j] = dot(&w, &w).sqrt();
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            let next_norm = h[j + 1][j];
            if g[j + 1].abs() <= rel_tol * bnorm || next_norm == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / next_norm).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, zk) in z.iter().take(used).enumerate() {
            for (xi, zi) in x.iter_mut().zip(zk) {
                *xi += y[k] * zi;
            }
        }
    }
    x
}

/// Newton solve for the conformal factor Φ and the constant mean curvature
/// parameter λ of conformally flat data with `k = λ g`, normalized so that
/// `mean(Φ) = 1`.
pub fn lichnerowicz_solve(
    params: &FlrwParams,
    grid: &Grid,
    delta_phi: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<LichnerowiczSolution> {
    let bg = flrw_background(params, 0.0);
    let m = grid.mean(delta_phi);
    if m.abs() > 1e-12 * (1.0 + sup(delta_phi)) {
        return Err(SimError::InvalidParameter(format!(
            "scalar velocity perturbation must have zero mean, got {m:e}"
        )));
    }
    let phi_sq: Field = delta_phi.iter().map(|d| (bg.phi + d).powi(2)).collect();
    let a2 = params.a0 * params.a0;
    let len = grid.len();
    let mut u = grid.constant(1.0);
    let mut lam = bg.trk / 3.0;
    let mut r = lich_residual(grid, params, &phi_sq, &u, lam);
    let mut res = sup(&r);
    let mut iterations = 0;
    while res > tol {
        if iterations == max_iter {
            return Err(SimError::NoConvergence {
                residual: res,
                iterations,
            });
        }
        iterations += 1;
        // J[δΦ, δλ] = -8ΔδΦ - 5a0² S Φ⁴ δΦ + 12 a0² λ Φ⁵ δλ.
        let c: Field = u
            .iter()
            .zip(&phi_sq)
            .map(|(&v, &p2)| 5.0 * a2 * (2.0 * params.lambda + p2 - 6.0 * lam * lam) * v.powi(4))
            .collect();
        let d: Field = u.iter().map(|&v| 12.0 * a2 * lam * v.powi(5)).collect();
        let (c_bar, d_bar) = (grid.mean(&c), grid.mean(&d));
        let apply = |x: &[f64]| {
            let (du, dl) = (&x[..len], x[len]);
            let lap = grid.laplacian(du);
            let mut out: Vec<f64> = (0..len)
                .map(|p| -8.0 * lap[p] - c[p] * du[p] + d[p] * dl)
                .collect();
            out.push(grid.mean(du));
            out
        };
        let precond = |x: &[f64]| {
            let (rf, nm) = (&x[..len], x[len]);
            let rm = grid.mean(rf);
            let centered: Field = rf.iter().map(|v| v - rm).collect();
            let mut out = grid.apply_radial(&centered, |k2| {
                if k2 == 0.0 {
                    0.0
                } else {
                    1.0 / (8.0 * k2 - c_bar)
                }
            });
            for v in out.iter_mut() {
                *v += nm;
            }
            out.push((rm + c_bar * nm) / d_bar);
            out
        };
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        rhs.push(1.0 - grid.mean(&u));
        let delta = gmres(apply, precond, &rhs, 1e-13, 40, 10);

        let mut step = 1.0;
        loop {
            let trial: Field = u.iter().zip(&delta).map(|(v, d)| v + step * d).collect();
            let min = trial.iter().copied().fold(f64::INFINITY, f64::min);
            let lam_trial = lam + step * delta[len];
            if min > 0.0 {
                let r_trial = lich_residual(grid, params, &phi_sq, &trial, lam_trial);
                let res_trial = sup(&r_trial);
                if res_trial < res || step < 1.0 / 64.0 {
                    u = trial;
                    lam = lam_trial;
                    r = r_trial;
                    res = res_trial;
                    break;
                }
            } else if step < 1.0 / 64.0 {
                return Err(SimError::NonPositivePhi {
                    min,
                    iteration: iterations,
                });
            }
            step *= 0.5;
        }
    }
    Ok(LichnerowiczSolution {
        phi: u,
        lambda_cmc: lam,
        residual: res,
        iterations,
    })
}

/// Orthonormal frame `e[I][i]` obtained by Gram–Schmidt on `∂₁, ∂₂, ∂₃` (in
/// that order) with respect to `g`, given as components 11, 22, 33, 12, 13,
/// 23.
pub fn gram_schmidt_frame(g: &[Field; 6]) -> Result<[[Field; 3]; 3]> {
    let len = g[0].len();
    let mut e: [[Field; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; len]));
    const SLOT: [[usize; 3]; 3] = [[0, 3, 4], [3, 1, 5], [4, 5, 2]];
    for p in 0..len {
        let gm = |i: usize, j: usize| g[SLOT[i][j]][p];
        let inner = |u: &[f64; 3], v: &[f64; 3]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += u[i] * gm(i, j) * v[j];
                }
            }
            s
        };
        let scale = gm(0, 0).abs().max(gm(1, 1).abs()).max(gm(2, 2).abs());
        let mut basis: Vec<[f64; 3]> = Vec::with_capacity(3);
        for a in 0..3 {
            let mut v = [0.0; 3];
            v[a] = 1.0;
            for b in &basis {
                let c = inner(&v, b);
                for i in 0..3 {
                    v[i] -= c * b[i];
                }
            }
            let nrm = inner(&v, &v);
            if !(nrm > 1e-10 * scale) {
                return Err(SimError::NotPositiveDefinite { index: p });
            }
            let s = nrm.sqrt();
            basis.push(v.map(|x| x / s));
        }
        for (i, b) in basis.iter().enumerate() {
            for a in 0..3 {
                e[i][a][p] = b[a];
            }
        }
    }
    Ok(e)
}

/// Connection coefficients `γ_IJB = g(∇_{e_I} e_J, e_B)` of an orthonormal
/// frame, from its commutators, indexed `[I][J][B]`.
pub fn initial_gamma(grid: &Grid, e: &[[Field; 3]; 3]) -> Result<[[[Field; 3]; 3]; 3]> {
    let (v, _) = reconstruct_metric_from_frame(e)?;
    let len = grid.len();
    let grads: Vec<Vec<[Field; 3]>> = (0..3)
        .map(|j| (0..3).map(|a| grid.gradient(&e[j][a])).collect())
        .collect();
    // c[I][J][K] = v_a^K [e_I, e_J]^a
    let mut c = vec![[[[0.0; 3]; 3]; 3]; len];
    for (p, cp) in c.iter_mut().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                let mut comm = [0.0; 3];
                for (a, ca) in comm.iter_mut().enumerate() {
                    for b in 0..3 {
                        *ca += e[i][b][p] * grads[j][a][b][p] - e[j][b][p] * grads[i][a][b][p];
                    }
                }
                for k in 0..3 {
                    cp[i][j][k] = (0..3).map(|a| v[a][k][p] * comm[a]).sum();
                }
            }
        }
    }
    let mut gamma: [[[Field; 3]; 3]; 3] =
        std::array::from_fn(|_| std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; len])));
    for (p, cp) in c.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                for b in 0..3 {
                    gamma[i][j][b][p] = 0.5 * (cp[i][j][b] - cp[j][b][i] + cp[b][i][j]);
                }
            }
        }
    }
    Ok(gamma)
}

/// Third diagonal entry of `k` fixed by the Hamiltonian constraint for
/// homogeneous data, `2(κ1κ2 + κ3(κ1 + κ2)) = 2Λ + φ²`.
pub fn anisotropic_k3(params: &FlrwParams, k1: f64, k2: f64) -> Result<f64> {
    let num = params.lambda + 0.5 * params.phi0 * params.phi0 - k1 * k2;
    let den = k1 + k2;
    if den == 0.0 || !(num / den).is_finite() {
        return Err(SimError::NoRealRoot(format!(
            "k1 + k2 = {den} leaves no solution for k3"
        )));
    }
    Ok(num / den)
}

fn diag(grid: &Grid, d: [f64; 3]) -> [[Field; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| grid.constant(if i == j { d[i] } else { 0.0 })))
}

pub fn build_initial_state(params: &FlrwParams, recipe: &DataRecipe, grid: &Grid) -> Result<State> {
    params.validate()?;
    recipe.validate()?;
    let bg = flrw_background(params, 0.0);
    let zero3 = || std::array::from_fn(|_| grid.zeros());
    match recipe.kind {
        DataKind::ExactFlrw => Ok(State::zeros(grid, 0.0)),
        DataKind::HomogeneousAnisotropic => {
            let (k1, k2) = recipe.anisotropy.expect("validated");
            let k3 = anisotropic_k3(params, k1, k2)?;
            let trk = k1 + k2 + k3;
            let f = FullVars {
                t: 0.0,
                grid: grid.clone(),
                n: grid.constant(1.0 + bg.trk - trk),
                e: diag(grid, [bg.frame_coef; 3]),
                k: diag(grid, [k1, k2, k3]),
                gamma: std::array::from_fn(|_| diag(grid, [0.0; 3])),
                e0psi: grid.constant(bg.phi),
                epsi: zero3(),
                psi: grid.constant(bg.psi),
                trk: grid.constant(trk),
            };
            Ok(hat(&f, &bg))
        }
        DataKind::ConformalPerturbation => {
            let dphi = recipe.delta_phi(grid)?;
            let sol = lichnerowicz_solve(params, grid, &dphi, recipe.solver_tol, recipe.max_newton)?;
            let a2 = params.a0 * params.a0;
            let gxx: Field = sol.phi.iter().map(|u| u.powi(4) * a2).collect();
            let metric = [
                gxx.clone(),
                gxx.clone(),
                gxx,
                grid.zeros(),
                grid.zeros(),
                grid.zeros(),
            ];
            let e = gram_schmidt_frame(&metric)?;
            let gamma = initial_gamma(grid, &e)?;
            let lam = sol.lambda_cmc;
            let f = FullVars {
                t: 0.0,
                grid: grid.clone(),
                n: grid.constant(1.0 + bg.trk - 3.0 * lam),
                e,
                k: diag(grid, [lam; 3]),
                gamma,
                e0psi: dphi.iter().map(|d| bg.phi + d).collect(),
                epsi: zero3(),
                psi: grid.constant(bg.psi),
                trk: grid.constant(3.0 * lam),
            };
            Ok(hat(&f, &bg))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints;
    use crate::state::{state_norms, unhat};

    fn params() -> FlrwParams {
        FlrwParams::new(3.0, 1.0, 0.0, 3.0).unwrap()
    }

    fn sine_recipe(amp: f64) -> DataRecipe {
        DataRecipe::conformal(
            amp,
            vec![Mode {
                wavevector: [1, 0, 0],
                coefficient: 1.0,
                phase: Some(0.0),
            }],
        )
    }

    #[test]
    fn flat_data_needs_no_newton_step() {
        let g = Grid::line(16).unwrap();
        let p = params();
        let s = lichnerowicz_solve(&p, &g, &g.zeros(), 1e-11, 10).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(s.phi.iter().all(|&v| v == 1.0));
        assert_eq!(s.lambda_cmc, flrw_background(&p, 0.0).trk / 3.0);
    }

    #[test]
    fn small_perturbation_matches_linear_solve() {
        let g = Grid::line(32).unwrap();
        let p = params();
        let r = sine_recipe(1e-3);
        let dphi = r.delta_phi(&g).unwrap();
        let s = lichnerowicz_solve(&p, &g, &dphi, 1e-12, 10).unwrap();
        assert!(s.iterations <= 6, "{}", s.iterations);
        // -8Δu = 2 a0² φ δφ with a zero-mean source and no change in λ.
        let lin = g.apply_radial(&dphi, |k2| if k2 == 0.0 { 0.0 } else { 2.0 * p.phi0 / (8.0 * k2) });
        for q in 0..g.len() {
            assert!((s.phi[q] - 1.0 - lin[q]).abs() < 1e-6);
        }
        assert!((g.mean(&s.phi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonzero_mean() {
        let g = Grid::line(8).unwrap();
        assert!(lichnerowicz_solve(&params(), &g, &g.constant(1e-3), 1e-11, 5).is_err());
    }

    #[test]
    fn gram_schmidt_examples() {
        let g = Grid::line(8).unwrap();
        let m = [g.constant(4.0), g.constant(9.0), g.constant(16.0), g.zeros(), g.zeros(), g.zeros()];
        let e = gram_schmidt_frame(&m).unwrap();
        assert_eq!(e[0][0][3], 0.5);
        assert!((e[1][1][3] - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(e[2][2][3], 0.25);
        assert_eq!(e[0][1][3], 0.0);

        let bad = [g.constant(1.0), g.constant(1.0), g.constant(1.0), g.constant(1.0), g.zeros(), g.zeros()];
        assert!(matches!(gram_schmidt_frame(&bad), Err(SimError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn gram_schmidt_is_orthonormal_for_a_full_metric() {
        let g = Grid::new([8, 8, 1]).unwrap();
        let m = [
            g.sample(|x| 2.0 + 0.3 * x[0].sin()),
            g.sample(|x| 1.5 + 0.2 * x[1].cos()),
            g.constant(1.0),
            g.sample(|x| 0.4 * (x[0] + x[1]).sin()),
            g.constant(0.1),
            g.sample(|x| 0.2 * x[1].sin()),
        ];
        let e = gram_schmidt_frame(&m).unwrap();
        let slot = [[0, 3, 4], [3, 1, 5], [4, 5, 2]];
        for p in 0..g.len() {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            s += e[i][a][p] * m[slot[a][b]][p] * e[j][b][p];
                        }
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((s - want).abs() < 1e-12);
                }
            }
            // Lower-triangular structure from the fixed ordering.
            assert_eq!(e[0][1][p], 0.0);
            assert_eq!(e[0][2][p], 0.0);
            assert_eq!(e[1][2][p], 0.0);
        }
    }

    #[test]
    fn conformal_connection_matches_closed_form() {
        // e_I = f ∂_I gives γ_IJB = δ_IJ ∂_B f - δ_IB ∂_J f.
        let g = Grid::line(32).unwrap();
        let phi = g.sample(|x| 1.0 + 0.01 * x[0].sin());
        let f: Field = phi.iter().map(|u| u.powi(-2)).collect();
        let e = diag(&g, [0.0; 3]);
        let e: [[Field; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|j| if i == j { f.clone() } else { e[i][j].clone() })
        });
        let gamma = initial_gamma(&g, &e).unwrap();
        let df = g.gradient(&f);
        for p in 0..g.len() {
            for i in 0..3 {
                for j in 0..3 {
                    for b in 0..3 {
                        let want = (if i == j { df[b][p] } else { 0.0 })
                            - (if i == b { df[j][p] } else { 0.0 });
                        assert!((gamma[i][j][b][p] - want).abs() < 1e-12);
                        assert!((gamma[i][j][b][p] + gamma[i][b][j][p]).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn exact_flrw_is_zero() {
        let g = Grid::line(8).unwrap();
        let s = build_initial_state(&params(), &DataRecipe::exact_flrw(), &g).unwrap();
        let n = state_norms(&s, 4);
        assert_eq!(n, Default::default());
    }

    #[test]
    fn anisotropic_data_satisfies_constraints() {
        let g = Grid::line(4).unwrap();
        let p = params();
        let k = flrw_background(&p, 0.0).trk / 3.0 + 1e-3;
        let s = build_initial_state(&p, &DataRecipe::anisotropic(k, k), &g).unwrap();
        let c = constraints::evaluate_state(&s, &p, &flrw_background(&p, 0.0)).unwrap();
        assert!(c.ham_sup < 1e-12, "{}", c.ham_sup);
        assert!(c.mom_sup == 0.0);
        for comp in &s.comps {
            assert!(comp.iter().all(|v| *v == comp[0]));
        }
        assert!(anisotropic_k3(&p, 1.0, -1.0).is_err());
    }

    #[test]
    fn conformal_data_satisfies_constraints() {
        let g = Grid::line(32).unwrap();
        let p = params();
        let s = build_initial_state(&p, &sine_recipe(1e-3), &g).unwrap();
        let bg = flrw_background(&p, 0.0);
        let c = constraints::evaluate_state(&s, &p, &bg).unwrap();
        assert!(c.ham_sup < 1e-9, "{}", c.ham_sup);
        assert!(c.mom_sup < 1e-9, "{}", c.mom_sup);
        let f = unhat(&s, &bg).unwrap();
        assert!(f.trk.iter().all(|v| *v == f.trk[0]));
        let n = state_norms(&s, 0);
        assert!(n.e0psi_sup > 0.9e-3 && n.e0psi_sup < 1.1e-3);
    }

    #[test]
    fn seeded_phases_are_reproducible() {
        let g = Grid::new([8, 8, 1]).unwrap();
        let mut r = sine_recipe(1e-3);
        r.modes = vec![
            Mode { wavevector: [1, 1, 0], coefficient: 1.0, phase: None },
            Mode { wavevector: [0, 2, 0], coefficient: 0.5, phase: None },
        ];
        r.seed = 7;
        let a = r.delta_phi(&g).unwrap();
        assert_eq!(a, r.delta_phi(&g).unwrap());
        assert!(g.mean(&a).abs() < 1e-18);
        r.seed = 8;
        assert_ne!(a, r.delta_phi(&g).unwrap());
        r.modes[0].wavevector = [0, 0, 0];
        assert!(r.delta_phi(&g).is_err());
    }
}
