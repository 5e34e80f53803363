//! Hatted evolution variables, their full-variable counterparts, and norms.
//!
//! A [`State`] stores 30 component fields in a fixed order, which is also the
//! order used by state snapshots:
//!
//! | index   | component                                         |
//! |---------|---------------------------------------------------|
//! | 0       | n̂                                                 |
//! | 1..=9   | ê_I^i at `1 + 3I + i`                              |
//! | 10..=15 | k̂_11, k̂_22, k̂_33, k̂_12, k̂_13, k̂_23                   |
//! | 16..=24 | γ̂_I(JB) at `16 + 3I + p`, pairs p = (12), (13), (23) |
//! | 25      | ê₀ψ                                                |
//! | 26..=28 | ê_Iψ                                               |
//! | 29      | ψ̂                                                  |
//!
//! Indices in the table are 1-based for frame labels; the code uses 0-based.

use std::io::{Read, Write};

use crate::background::BackgroundState;
use crate::error::{Result, SimError};
use crate::grid::{read_field, read_line, sup, write_field, Field, Grid};

pub const NUM_COMPONENTS: usize = 30;
pub const N_HAT: usize = 0;
pub const E0PSI: usize = 25;
pub const PSI_HAT: usize = 29;

pub const fn e_idx(i: usize, a: usize) -> usize {
    1 + 3 * i + a
}

pub const fn k_idx(i: usize, j: usize) -> usize {
    if i == j {
        return 10 + i;
    }
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    13 + lo + hi - 1
}

const fn pair(j: usize, b: usize) -> usize {
    j + b - 1
}

/// Storage slot and sign of γ̂_IJB, or `None` when `J == B`.
pub const fn gamma_idx(i: usize, j: usize, b: usize) -> Option<(usize, f64)> {
    if j == b {
        None
    } else if j < b {
        Some((16 + 3 * i + pair(j, b), 1.0))
    } else {
        Some((16 + 3 * i + pair(b, j), -1.0))
    }
}

pub const fn epsi_idx(i: usize) -> usize {
    26 + i
}

/// Human-readable component names in storage order.
pub fn component_names() -> Vec<String> {
    let mut names = vec!["n_hat".to_string()];
    for i in 0..3 {
        for a in 0..3 {
            names.push(format!("e_hat_{}{}", i + 1, a + 1));
        }
    }
    for s in ["11", "22", "33", "12", "13", "23"] {
        names.push(format!("k_hat_{s}"));
    }
    for i in 0..3 {
        for p in ["12", "13", "23"] {
            names.push(format!("gamma_hat_{}{p}", i + 1));
        }
    }
    names.push("e0psi_hat".into());
    for i in 0..3 {
        names.push(format!("epsi_hat_{}", i + 1));
    }
    names.push("psi_hat".into());
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub grid: Grid,
    pub comps: Vec<Field>,
}

impl State {
    pub fn zeros(grid: &Grid, t: f64) -> Self {
        Self {
            t,
            grid: grid.clone(),
            comps: vec![grid.zeros(); NUM_COMPONENTS],
        }
    }

    pub fn n_hat(&self) -> &Field {
        &self.comps[N_HAT]
    }

    pub fn e_hat(&self, i: usize, a: usize) -> &Field {
        &self.comps[e_idx(i, a)]
    }

    pub fn k_hat(&self, i: usize, j: usize) -> &Field {
        &self.comps[k_idx(i, j)]
    }

    pub fn e0psi_hat(&self) -> &Field {
        &self.comps[E0PSI]
    }

    pub fn epsi_hat(&self, i: usize) -> &Field {
        &self.comps[epsi_idx(i)]
    }

    pub fn psi_hat(&self) -> &Field {
        &self.comps[PSI_HAT]
    }

    /// Value of γ̂_IJB at grid point `p`.
    pub fn gamma_hat_at(&self, i: usize, j: usize, b: usize, p: usize) -> f64 {
        match gamma_idx(i, j, b) {
            Some((idx, s)) => s * self.comps[idx][p],
            None => 0.0,
        }
    }

    /// `self += c * other`, component by component.
    pub fn axpy(&mut self, c: f64, other: &State) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
    }

    /// Removes the trace of k̂ pointwise.
    pub fn project_trace(&mut self) {
        project_trace(&mut self.comps);
    }

    /// Max over points of `|tr k̂|`.
    pub fn trace_k_sup(&self) -> f64 {
        (0..self.grid.len())
            .map(|p| (0..3).map(|i| self.comps[k_idx(i, i)][p]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        let names = component_names();
        for (c, name) in self.comps.iter().zip(&names) {
            crate::grid::check_finite(c, name)?;
        }
        Ok(())
    }

    pub fn min_lapse(&self) -> f64 {
        self.comps[N_HAT].iter().fold(f64::INFINITY, |m, v| m.min(1.0 + v))
    }

    pub fn write_snapshot(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "# state t={} components={}", self.t, NUM_COMPONENTS)?;
        for c in &self.comps {
            write_field(w, self.grid.dims(), c)?;
        }
        Ok(())
    }

    pub fn read_snapshot(r: &mut impl Read) -> Result<Self> {
        let header = read_line(r)?;
        let bad = || SimError::Snapshot(format!("bad state header `{header}`"));
        let rest = header.strip_prefix("# state t=").ok_or_else(bad)?;
        let (t, count) = rest.split_once(" components=").ok_or_else(bad)?;
        let t: f64 = t.parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        if count != NUM_COMPONENTS {
            return Err(SimError::Snapshot(format!(
                "expected {NUM_COMPONENTS} components, found {count}"
            )));
        }
        let mut comps = Vec::with_capacity(count);
        let mut dims = None;
        for _ in 0..count {
            let (d, v) = read_field(r)?;
            if dims.is_some_and(|x| x != d) {
                return Err(SimError::Snapshot("inconsistent component dims".into()));
            }
            dims = Some(d);
            comps.push(v);
        }
        let grid = Grid::new(dims.unwrap())?;
        Ok(Self { t, grid, comps })
    }
}

pub(crate) fn project_trace(comps: &mut [Field]) {
    let len = comps[k_idx(0, 0)].len();
    for p in 0..len {
        let tr = (0..3).map(|i| comps[k_idx(i, i)][p]).sum::<f64>() / 3.0;
        if tr != 0.0 {
            for i in 0..3 {
                comps[k_idx(i, i)][p] -= tr;
            }
        }
    }
}

type Mat3 = [[Field; 3]; 3];

/// Full (un-hatted) reduced variables with all index positions populated.
#[derive(Debug, Clone)]
pub struct FullVars {
    pub t: f64,
    pub grid: Grid,
    pub n: Field,
    /// `e[I][i]` is the frame component e_I^i.
    pub e: Mat3,
    /// Symmetric, including its trace.
    pub k: Mat3,
    /// `gamma[I][J][B]`, antisymmetric in (J, B).
    pub gamma: [Mat3; 3],
    pub e0psi: Field,
    pub epsi: [Field; 3],
    pub psi: Field,
    pub trk: Field,
}

fn mat3(f: impl Fn(usize, usize) -> Field) -> Mat3 {
    [
        [f(0, 0), f(0, 1), f(0, 2)],
        [f(1, 0), f(1, 1), f(1, 2)],
        [f(2, 0), f(2, 1), f(2, 2)],
    ]
}

pub fn unhat(s: &State, bg: &BackgroundState) -> Result<FullVars> {
    if (s.t - bg.t).abs() > 1e-12 * (1.0 + s.t.abs()) {
        return Err(SimError::InvalidParameter(format!(
            "state time {} does not match background time {}",
            s.t, bg.t
        )));
    }
    let min_lapse = s.min_lapse();
    if !(min_lapse > 0.0) {
        return Err(SimError::LapseNonPositive { t: s.t, min_lapse });
    }
    let nh = s.n_hat();
    let n: Field = nh.iter().map(|v| 1.0 + v).collect();
    let trk: Field = nh.iter().map(|v| bg.trk - v).collect();
    let e = mat3(|i, a| {
        let d = if i == a { bg.frame_coef } else { 0.0 };
        s.e_hat(i, a).iter().map(|v| v + d).collect()
    });
    let k = mat3(|i, j| {
        let kh = s.k_hat(i, j);
        if i == j {
            kh.iter().zip(&trk).map(|(v, t)| v + t / 3.0).collect()
        } else {
            kh.clone()
        }
    });
    let gamma = [0, 1, 2].map(|i| {
        mat3(|j, b| match gamma_idx(i, j, b) {
            Some((idx, sign)) => s.comps[idx].iter().map(|v| sign * v).collect(),
            None => s.grid.zeros(),
        })
    });
    Ok(FullVars {
        t: s.t,
        grid: s.grid.clone(),
        n,
        e,
        k,
        gamma,
        e0psi: s.e0psi_hat().iter().map(|v| v + bg.phi).collect(),
        epsi: [0, 1, 2].map(|i| s.epsi_hat(i).clone()),
        psi: s.psi_hat().iter().map(|v| v + bg.psi).collect(),
        trk,
    })
}

/// Inverse of [`unhat`]: subtracts the background. Only the trace-free part
/// of `k` and the (J < B) half of `gamma` are read.
pub fn hat(f: &FullVars, bg: &BackgroundState) -> State {
    let grid = &f.grid;
    let mut s = State::zeros(grid, f.t);
    s.comps[N_HAT] = f.n.iter().map(|v| v - 1.0).collect();
    for i in 0..3 {
        for a in 0..3 {
            let d = if i == a { bg.frame_coef } else { 0.0 };
            s.comps[e_idx(i, a)] = f.e[i][a].iter().map(|v| v - d).collect();
        }
    }
    let len = grid.len();
    for i in 0..3 {
        for j in i..3 {
            let mut c = f.k[i][j].clone();
            if i == j {
                for p in 0..len {
                    let tr = f.k[0][0][p] + f.k[1][1][p] + f.k[2][2][p];
                    c[p] -= tr / 3.0;
                }
            }
            s.comps[k_idx(i, j)] = c;
        }
    }
    for i in 0..3 {
        for (j, b) in [(0, 1), (0, 2), (1, 2)] {
            let (idx, _) = gamma_idx(i, j, b).unwrap();
            s.comps[idx] = f.gamma[i][j][b].clone();
        }
    }
    s.comps[E0PSI] = f.e0psi.iter().map(|v| v - bg.phi).collect();
    for i in 0..3 {
        s.comps[epsi_idx(i)] = f.epsi[i].clone();
    }
    s.comps[PSI_HAT] = f.psi.iter().map(|v| v - bg.psi).collect();
    s
}

/// H^N and sup norms of each variable group.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateNorms {
    pub k: f64,
    pub gamma: f64,
    pub e: f64,
    pub n: f64,
    /// ê₀ψ and the three ê_Iψ together.
    pub epsi: f64,
    pub k_sup: f64,
    pub gamma_sup: f64,
    pub e_sup: f64,
    pub n_sup: f64,
    pub e0psi_sup: f64,
    pub eipsi_sup: f64,
    pub psi_sup: f64,
}

/// Component slots of each group with their multiplicity in the full index
/// set (off-diagonal k̂ and every stored γ̂ appear twice).
fn group(name: &str) -> Vec<(usize, f64)> {
    match name {
        "k" => (10..16).map(|c| (c, if c < 13 { 1.0 } else { 2.0 })).collect(),
        "gamma" => (16..25).map(|c| (c, 2.0)).collect(),
        "e" => (1..10).map(|c| (c, 1.0)).collect(),
        "n" => vec![(N_HAT, 1.0)],
        "epsi" => (25..29).map(|c| (c, 1.0)).collect(),
        _ => unreachable!(),
    }
}

pub fn state_norms(s: &State, order: usize) -> StateNorms {
    let g = &s.grid;
    let hn = |name: &str| {
        group(name)
            .into_iter()
            .map(|(c, w)| w * g.sobolev_sq(&s.comps[c], order))
            .sum::<f64>()
            .sqrt()
    };
    let sup_of = |range: std::ops::Range<usize>| range.map(|c| sup(&s.comps[c])).fold(0.0, f64::max);
    StateNorms {
        k: hn("k"),
        gamma: hn("gamma"),
        e: hn("e"),
        n: hn("n"),
        epsi: hn("epsi"),
        k_sup: sup_of(10..16),
        gamma_sup: sup_of(16..25),
        e_sup: sup_of(1..10),
        n_sup: sup(s.n_hat()),
        e0psi_sup: sup(s.e0psi_hat()),
        eipsi_sup: sup_of(26..29),
        psi_sup: sup(s.psi_hat()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{flrw_background, FlrwParams};

    fn grid() -> Grid {
        Grid::line(16).unwrap()
    }

    #[test]
    fn index_maps_are_a_bijection() {
        let mut seen = vec![false; NUM_COMPONENTS];
        seen[N_HAT] = true;
        seen[E0PSI] = true;
        seen[PSI_HAT] = true;
        for i in 0..3 {
            seen[epsi_idx(i)] = true;
            for a in 0..3 {
                seen[e_idx(i, a)] = true;
            }
            for j in 0..3 {
                assert_eq!(k_idx(i, j), k_idx(j, i));
                seen[k_idx(i, j)] = true;
                for b in 0..3 {
                    match (gamma_idx(i, j, b), gamma_idx(i, b, j)) {
                        (Some((x, s)), Some((y, r))) => {
                            assert_eq!(x, y);
                            assert_eq!(s, -r);
                            seen[x] = true;
                        }
                        (None, None) => assert_eq!(j, b),
                        _ => panic!("asymmetric gamma map"),
                    }
                }
            }
        }
        assert!(seen.iter().all(|&x| x));
        assert_eq!(component_names().len(), NUM_COMPONENTS);
        assert_eq!(k_idx(0, 1), 13);
        assert_eq!(k_idx(0, 2), 14);
        assert_eq!(k_idx(1, 2), 15);
    }

    #[test]
    fn zero_state_unhats_to_flrw() {
        let p = FlrwParams::new(3.0, 1.0, 0.2, 3.0).unwrap();
        let bg = flrw_background(&p, 0.7);
        let s = State::zeros(&grid(), 0.7);
        let f = unhat(&s, &bg).unwrap();
        for x in 0..16 {
            assert_eq!(f.n[x], 1.0);
            assert_eq!(f.trk[x], bg.trk);
            assert_eq!(f.e[1][1][x], bg.frame_coef);
            assert_eq!(f.e[0][1][x], 0.0);
            assert!((f.k[2][2][x] - bg.trk / 3.0).abs() < 1e-15);
            assert_eq!(f.e0psi[x], bg.phi);
            assert_eq!(f.psi[x], bg.psi);
        }
    }

    #[test]
    fn constant_lapse_shifts_trace() {
        let p = FlrwParams::new(3.0, 1.0, 0.0, 0.0).unwrap();
        let bg = flrw_background(&p, 0.0);
        let mut s = State::zeros(&grid(), 0.0);
        s.comps[N_HAT] = grid().constant(0.1);
        let f = unhat(&s, &bg).unwrap();
        assert!(f.trk.iter().all(|v| (v + 3.1).abs() < 1e-14));
    }

    #[test]
    fn rejects_non_positive_lapse() {
        let p = FlrwParams::new(3.0, 1.0, 0.0, 0.0).unwrap();
        let bg = flrw_background(&p, 0.0);
        let mut s = State::zeros(&grid(), 0.0);
        s.comps[N_HAT][4] = -1.0;
        assert!(matches!(unhat(&s, &bg), Err(SimError::LapseNonPositive { .. })));
    }

    #[test]
    fn norms_examples() {
        let g = grid();
        let v = g.volume();
        let mut s = State::zeros(&g, 0.0);
        assert_eq!(state_norms(&s, 4), StateNorms::default());
        s.comps[k_idx(0, 1)] = g.sample(|x| x[0].sin());
        let nm = state_norms(&s, 0);
        assert!((nm.k - v.sqrt()).abs() < 1e-12);
        let mut s = State::zeros(&g, 0.0);
        s.comps[N_HAT] = g.constant(-0.3);
        let nm = state_norms(&s, 4);
        assert!((nm.n - 0.3 * v.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = Grid::new([4, 2, 1]).unwrap();
        let mut s = State::zeros(&g, 1.25);
        for (c, f) in s.comps.iter_mut().enumerate() {
            for (p, v) in f.iter_mut().enumerate() {
                *v = (c * 10 + p) as f64 * 0.1;
            }
        }
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        let r = State::read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(r, s);
    }
}
