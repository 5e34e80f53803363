//! Hamiltonian and momentum constraint residuals in the orthonormal frame.

use crate::background::{BackgroundState, FlrwParams};
use crate::frame_ops::{map_points, Local, SpatialDerivs};
use crate::grid::{sup, Field, Grid};
use crate::state::{unhat, FullVars, State};
use crate::Result;

#[derive(Debug, Clone)]
pub struct ConstraintResiduals {
    pub hamiltonian: Field,
    pub momentum: [Field; 3],
    pub ham_sup: f64,
    pub mom_sup: f64,
    pub ham_l2: f64,
    pub mom_l2: f64,
}

impl ConstraintResiduals {
    fn new(grid: &Grid, hamiltonian: Field, momentum: [Field; 3]) -> Self {
        let ham_sup = sup(&hamiltonian);
        let ham_l2 = grid.l2_norm(&hamiltonian);
        let mom_sup = momentum.iter().map(|m| sup(m)).fold(0.0, f64::max);
        let mom_l2 = momentum.iter().map(|m| grid.l2_sq(m)).sum::<f64>().sqrt();
        Self {
            hamiltonian,
            momentum,
            ham_sup,
            mom_sup,
            ham_l2,
            mom_l2,
        }
    }
}

/// Pointwise `2e_C γ_DDC - γ_CDE γ_EDC - γ_CCD γ_EED` minus
/// `k_CD k_CD - (n-1-trk_FLRW)² + 2Λ + (e₀ψ)² + e_Cψ e_Cψ`.
pub fn hamiltonian_residual(f: &FullVars, params: &FlrwParams, bg: &BackgroundState) -> Field {
    let d = SpatialDerivs::new(&f.grid, f);
    map_points(f.grid.len(), |p| Local::at(f, &d, p).hamiltonian(params.lambda, bg.trk))
}

/// Pointwise `e_C k_CI + e_I n - k_ID γ_CCD - k_CD γ_CID + e₀ψ e_Iψ`.
pub fn momentum_residual(f: &FullVars) -> [Field; 3] {
    let d = SpatialDerivs::new(&f.grid, f);
    let m = map_points(f.grid.len(), |p| Local::at(f, &d, p).momentum());
    [0, 1, 2].map(|i| m.iter().map(|v| v[i]).collect())
}

pub fn evaluate(f: &FullVars, params: &FlrwParams, bg: &BackgroundState) -> ConstraintResiduals {
    let d = SpatialDerivs::new(&f.grid, f);
    let vals = map_points(f.grid.len(), |p| {
        let l = Local::at(f, &d, p);
        (l.hamiltonian(params.lambda, bg.trk), l.momentum())
    });
    let ham = vals.iter().map(|v| v.0).collect();
    let mom = [0, 1, 2].map(|i| vals.iter().map(|v| v.1[i]).collect());
    ConstraintResiduals::new(&f.grid, ham, mom)
}

pub fn evaluate_state(
    s: &State,
    params: &FlrwParams,
    bg: &BackgroundState,
) -> Result<ConstraintResiduals> {
    Ok(evaluate(&unhat(s, bg)?, params, bg))
}

/// Momentum constraint written with hatted variables:
/// `e_C k̂_CI + (2/3) e_I n̂ - k̂_ID γ_CCD - k̂_CD γ_CID + e₀ψ ê_Iψ`.
///
/// Frame derivatives use the full frame; algebraically identical to
/// [`momentum_residual`].
pub fn momentum_residual_hatted(s: &State, bg: &BackgroundState) -> Result<[Field; 3]> {
    let f = unhat(s, bg)?;
    let g = &s.grid;
    let len = g.len();
    let grad_n = g.gradient(s.n_hat());
    let grad_k: Vec<[Field; 3]> = (0..3)
        .flat_map(|c| (0..3).map(move |i| (c, i)))
        .map(|(c, i)| g.gradient(s.k_hat(c, i)))
        .collect();
    let frame = |c: usize, grad: &[Field; 3], p: usize| {
        (0..3).map(|a| f.e[c][a][p] * grad[a][p]).sum::<f64>()
    };
    let mut out = [g.zeros(), g.zeros(), g.zeros()];
    for p in 0..len {
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = 2.0 / 3.0 * frame(i, &grad_n, p) + f.e0psi[p] * s.epsi_hat(i)[p];
            for c in 0..3 {
                v += frame(c, &grad_k[3 * c + i], p);
                let gt_c: f64 = (0..3).map(|e| s.gamma_hat_at(e, e, c, p)).sum();
                v -= s.k_hat(i, c)[p] * gt_c;
                for d in 0..3 {
                    v -= s.k_hat(c, d)[p] * s.gamma_hat_at(c, i, d, p);
                }
            }
            o[p] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::flrw_background;

    #[test]
    fn flrw_has_zero_residuals() {
        let p = FlrwParams::new(3.0, 1.0, 0.0, 3.0).unwrap();
        let g = Grid::line(16).unwrap();
        for &t in &[0.0, 0.8, 3.0] {
            let bg = flrw_background(&p, t);
            let r = evaluate_state(&State::zeros(&g, t), &p, &bg).unwrap();
            assert!(r.ham_sup <= 1e-12 * (2.0 * p.lambda + p.phi0 * p.phi0), "{}", r.ham_sup);
            assert!(r.mom_sup <= 1e-13);
        }
    }

    #[test]
    fn violating_alpha_violates_hamiltonian() {
        use crate::background::AlphaConvention;
        let p = FlrwParams::new(3.0, 1.0, 0.0, 3.0)
            .unwrap()
            .with_convention(AlphaConvention::ConstraintViolating);
        let g = Grid::line(8).unwrap();
        let bg = flrw_background(&p, 0.0);
        let r = evaluate_state(&State::zeros(&g, 0.0), &p, &bg).unwrap();
        // 6h² - 2Λ - φ² = φ0², the Hamiltonian residual is -(k·k - trk²) - ... = φ0².
        assert!((r.ham_sup - 9.0).abs() < 1e-12, "{}", r.ham_sup);
    }
}
