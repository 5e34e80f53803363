//! Pointwise view of the full variables together with their frame
//! derivatives `e_C f = e_C^a ∂_a f`. Shared by the evolution right-hand side
//! and the constraint evaluators.

use rayon::prelude::*;

use crate::grid::{Field, Grid};
use crate::state::FullVars;

type V3 = [f64; 3];
type M3 = [[f64; 3]; 3];
type T3 = [[[f64; 3]; 3]; 3];

/// Unique (I ≤ J) index pairs of a symmetric 3×3 tensor.
const SYM: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
/// Unique (J < B) index pairs of an antisymmetric pair.
const ANTI: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Partial derivatives of every field that appears differentiated.
pub(crate) struct SpatialDerivs {
    dn: [Field; 3],
    /// ∂_a(e_J n), indexed `[J][a]`.
    den: [[Field; 3]; 3],
    /// ∂_a k for the pairs in `SYM`.
    dk: Vec<[Field; 3]>,
    /// ∂_a γ_I(JB) for slot `3I + p`, pairs in `ANTI`.
    dgamma: Vec<[Field; 3]>,
    de0psi: [Field; 3],
    depsi: [[Field; 3]; 3],
}

fn frame_apply(e: &[[Field; 3]; 3], grad: &[Field; 3], c: usize, p: usize) -> f64 {
    e[c][0][p] * grad[0][p] + e[c][1][p] * grad[1][p] + e[c][2][p] * grad[2][p]
}

impl SpatialDerivs {
    pub(crate) fn new(grid: &Grid, f: &FullVars) -> Self {
        let mut sources: Vec<&Field> = vec![&f.n, &f.e0psi];
        sources.extend(f.epsi.iter());
        sources.extend(SYM.iter().map(|&(i, j)| &f.k[i][j]));
        for i in 0..3 {
            sources.extend(ANTI.iter().map(|&(j, b)| &f.gamma[i][j][b]));
        }
        let mut grads: Vec<[Field; 3]> = sources.par_iter().map(|s| grid.gradient(s)).collect();
        let dgamma = grads.split_off(11);
        let dk = grads.split_off(5);
        let mut it = grads.into_iter();
        let dn = it.next().unwrap();
        let de0psi = it.next().unwrap();
        let depsi = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];

        let len = grid.len();
        let en: Vec<Field> = (0..3)
            .map(|j| (0..len).map(|p| frame_apply(&f.e, &dn, j, p)).collect())
            .collect();
        let den: Vec<[Field; 3]> = en.par_iter().map(|s| grid.gradient(s)).collect();
        let den = [den[0].clone(), den[1].clone(), den[2].clone()];
        Self {
            dn,
            den,
            dk,
            dgamma,
            de0psi,
            depsi,
        }
    }
}

/// All variables and first frame derivatives at one grid point.
pub(crate) struct Local {
    pub n: f64,
    pub trk: f64,
    pub e: M3,
    pub k: M3,
    pub g: T3,
    pub e0psi: f64,
    pub epsi: V3,
    /// e_I n.
    pub en: V3,
    /// e_I(e_J n), indexed `[I][J]`.
    pub een: M3,
    /// e_C k_IJ, indexed `[C][I][J]`.
    pub ek: T3,
    /// e_C γ_IJB, indexed `[C][I][J][B]`.
    pub eg: [T3; 3],
    /// e_I(e₀ψ).
    pub ee0: V3,
    /// e_C(e_Iψ), indexed `[C][I]`.
    pub eep: M3,
}

impl Local {
    pub(crate) fn at(f: &FullVars, d: &SpatialDerivs, p: usize) -> Self {
        let mut l = Local {
            n: f.n[p],
            trk: f.trk[p],
            e: [[0.0; 3]; 3],
            k: [[0.0; 3]; 3],
            g: [[[0.0; 3]; 3]; 3],
            e0psi: f.e0psi[p],
            epsi: [0.0; 3],
            en: [0.0; 3],
            een: [[0.0; 3]; 3],
            ek: [[[0.0; 3]; 3]; 3],
            eg: [[[[0.0; 3]; 3]; 3]; 3],
            ee0: [0.0; 3],
            eep: [[0.0; 3]; 3],
        };
        for i in 0..3 {
            l.epsi[i] = f.epsi[i][p];
            for j in 0..3 {
                l.e[i][j] = f.e[i][j][p];
                l.k[i][j] = f.k[i][j][p];
                for b in 0..3 {
                    l.g[i][j][b] = f.gamma[i][j][b][p];
                }
            }
        }
        for c in 0..3 {
            l.en[c] = frame_apply(&f.e, &d.dn, c, p);
            l.ee0[c] = frame_apply(&f.e, &d.de0psi, c, p);
            for i in 0..3 {
                l.een[c][i] = frame_apply(&f.e, &d.den[i], c, p);
                l.eep[c][i] = frame_apply(&f.e, &d.depsi[i], c, p);
            }
            for (s, &(i, j)) in SYM.iter().enumerate() {
                let v = frame_apply(&f.e, &d.dk[s], c, p);
                l.ek[c][i][j] = v;
                l.ek[c][j][i] = v;
            }
            for i in 0..3 {
                for (q, &(j, b)) in ANTI.iter().enumerate() {
                    let v = frame_apply(&f.e, &d.dgamma[3 * i + q], c, p);
                    l.eg[c][i][j][b] = v;
                    l.eg[c][i][b][j] = -v;
                }
            }
        }
        l
    }

    /// γ_CCD, the contracted connection, indexed by D.
    pub fn gamma_trace(&self) -> V3 {
        let mut t = [0.0; 3];
        for (d, td) in t.iter_mut().enumerate() {
            *td = (0..3).map(|c| self.g[c][c][d]).sum();
        }
        t
    }

    /// `e_C k_CJ + e_J n - k_JD γ_CCD - k_CD γ_CJD + e₀ψ e_Jψ`.
    pub fn momentum(&self) -> V3 {
        let gt = self.gamma_trace();
        let mut m = [0.0; 3];
        for (j, mj) in m.iter_mut().enumerate() {
            let mut v = self.en[j] + self.e0psi * self.epsi[j];
            for c in 0..3 {
                v += self.ek[c][c][j];
                v -= self.k[j][c] * gt[c];
                for d in 0..3 {
                    v -= self.k[c][d] * self.g[c][j][d];
                }
            }
            *mj = v;
        }
        m
    }

    /// Left minus right side of the Hamiltonian constraint.
    pub fn hamiltonian(&self, lambda: f64, trk_flrw: f64) -> f64 {
        let gt = self.gamma_trace();
        let mut lhs = 0.0;
        for c in 0..3 {
            for d in 0..3 {
                lhs += 2.0 * self.eg[c][d][d][c];
                lhs -= gt[c] * self.g[d][d][c];
                for e in 0..3 {
                    lhs -= self.g[c][d][e] * self.g[e][d][c];
                }
            }
        }
        let lapse_shift = self.n - 1.0 - trk_flrw;
        let mut kk = 0.0;
        for c in 0..3 {
            for d in 0..3 {
                kk += self.k[c][d] * self.k[c][d];
            }
        }
        let grad2: f64 = self.epsi.iter().map(|v| v * v).sum();
        let rhs = kk - lapse_shift * lapse_shift + 2.0 * lambda + self.e0psi * self.e0psi + grad2;
        lhs - rhs
    }

    /// Right side F_IJ of the k equation (without the `trk k` term).
    pub fn k_forcing(&self, lambda: f64) -> M3 {
        let gt = self.gamma_trace();
        let ninv = 1.0 / self.n;
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut v = -ninv * self.een[i][j] - self.epsi[i] * self.epsi[j];
                if i == j {
                    v -= lambda;
                }
                for c in 0..3 {
                    v += self.eg[c][i][j][c] - self.eg[i][c][j][c];
                    v += ninv * self.g[i][j][c] * self.en[c];
                    v -= self.g[i][j][c] * gt[c];
                    for d in 0..3 {
                        v -= self.g[c][i][d] * self.g[d][j][c];
                    }
                }
                out[i][j] = v;
            }
        }
        out
    }

    /// `e₀γ_IJB` from the connection equation, optionally with the
    /// momentum-constraint additions that symmetrize the system.
    pub fn gamma_rate(&self, symmetrize: bool) -> T3 {
        let ninv = 1.0 / self.n;
        let k = &self.k;
        let g = &self.g;
        let mut out = [[[0.0; 3]; 3]; 3];
        let mom = if symmetrize { Some(self.momentum()) } else { None };
        for i in 0..3 {
            for j in 0..3 {
                for b in 0..3 {
                    if j == b {
                        continue;
                    }
                    let mut v = self.ek[b][i][j] - self.ek[j][b][i];
                    v += ninv * (self.en[b] * k[j][i] - self.en[j] * k[b][i]);
                    for c in 0..3 {
                        v += k[i][c] * g[c][j][b];
                        v -= k[i][c] * g[b][j][c];
                        v -= k[c][j] * g[b][i][c];
                        v += k[i][c] * g[j][b][c];
                        v += k[b][c] * g[j][i][c];
                    }
                    if let Some(m) = mom {
                        if i == b {
                            v -= m[j];
                        }
                        if i == j {
                            v += m[b];
                        }
                    }
                    out[i][j][b] = v;
                }
            }
        }
        out
    }

    /// `e₀(e₀ψ)`.
    pub fn e0psi_rate(&self) -> f64 {
        let gt = self.gamma_trace();
        let ninv = 1.0 / self.n;
        let mut v = self.trk * self.e0psi;
        for c in 0..3 {
            v += self.eep[c][c] - gt[c] * self.epsi[c] + ninv * self.en[c] * self.epsi[c];
        }
        v
    }

    /// `e₀(e_Iψ)`.
    pub fn epsi_rate(&self) -> V3 {
        let ninv = 1.0 / self.n;
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.ee0[i] + ninv * self.en[i] * self.e0psi;
            for c in 0..3 {
                v += self.k[i][c] * self.epsi[c];
            }
            *o = v;
        }
        out
    }

    /// `∂_t n` from the parabolic lapse equation.
    pub fn lapse_rate(&self, lambda: f64, trk_flrw_dot: f64) -> f64 {
        let gt = self.gamma_trace();
        let mut v = self.n * lambda - self.n * self.e0psi * self.e0psi + trk_flrw_dot;
        for c in 0..3 {
            v += self.een[c][c] - gt[c] * self.en[c];
            for d in 0..3 {
                v -= self.n * self.k[c][d] * self.k[c][d];
            }
        }
        v
    }
}

/// Evaluates `f` at every grid point in parallel.
pub(crate) fn map_points<T: Send>(len: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..len).into_par_iter().map(f).collect()
}
