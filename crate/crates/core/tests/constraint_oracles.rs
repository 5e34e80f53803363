use flrw_sim::background::{flrw_background, FlrwParams};
use flrw_sim::constraints::{evaluate, momentum_residual, momentum_residual_hatted};
use flrw_sim::evolution::{evolve, EvolutionConfig};
use flrw_sim::grid::{Field, Grid};
use flrw_sim::initial_data::{build_initial_state, DataRecipe, Mode};
use flrw_sim::state::{unhat, FullVars, State};

fn mode(k: [i32; 3], c: f64, phase: f64) -> Mode {
    Mode {
        wavevector: k,
        coefficient: c,
        phase: Some(phase),
    }
}

/// A genuinely three-dimensional state: conformal data evolved briefly so
/// every variable group is populated.
fn evolved_state() -> (FlrwParams, State) {
    let p = FlrwParams::new(3.0, 1.0, 0.0, 3.0).unwrap();
    let g = Grid::new([8, 8, 8]).unwrap();
    let recipe = DataRecipe::conformal(
        1e-2,
        vec![mode([1, 0, 0], 1.0, 0.1), mode([0, 1, 0], 0.7, 0.5), mode([1, 1, 1], 0.4, 1.3)],
    );
    let s0 = build_initial_state(&p, &recipe, &g).unwrap();
    let evo = EvolutionConfig {
        t_end: 0.3,
        ..Default::default()
    };
    let s = evolve(&s0, &p, &evo, &[], &mut |_| Ok(())).unwrap().final_state.unwrap();
    (p, s)
}

/// Hamiltonian residual written out independently, with the contractions
/// taken in a different order.
fn hamiltonian_reference(f: &FullVars, lambda: f64) -> Field {
    let g = &f.grid;
    let grad = |x: &Field| g.gradient(x);
    // contracted[C] = γ_DDC.
    let mut contracted: [Field; 3] = [g.zeros(), g.zeros(), g.zeros()];
    for (c, out) in contracted.iter_mut().enumerate() {
        for d in (0..3).rev() {
            for (p, v) in f.gamma[d][d][c].iter().enumerate() {
                out[p] += v;
            }
        }
    }
    let dtr: Vec<[Field; 3]> = contracted.iter().map(grad).collect();
    (0..g.len())
        .map(|p| {
            let mut v = 0.0;
            for c in (0..3).rev() {
                for a in (0..3).rev() {
                    v += 2.0 * f.e[c][a][p] * dtr[c][a][p];
                }
            }
            for e in (0..3).rev() {
                for d in (0..3).rev() {
                    for c in (0..3).rev() {
                        v -= f.gamma[c][d][e][p] * f.gamma[e][d][c][p];
                        v -= f.gamma[c][c][d][p] * f.gamma[e][e][d][p];
                    }
                }
            }
            for d in (0..3).rev() {
                for c in (0..3).rev() {
                    v -= f.k[c][d][p] * f.k[c][d][p];
                }
                v -= f.epsi[d][p] * f.epsi[d][p];
            }
            v + f.trk[p] * f.trk[p] - 2.0 * lambda - f.e0psi[p] * f.e0psi[p]
        })
        .collect()
}

#[test]
fn hamiltonian_matches_independent_evaluation() {
    let (p, s) = evolved_state();
    let bg = flrw_background(&p, s.t);
    let f = unhat(&s, &bg).unwrap();
    let ours = evaluate(&f, &p, &bg).hamiltonian;
    let reference = hamiltonian_reference(&f, p.lambda);
    let gap = ours
        .iter()
        .zip(&reference)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap <= 1e-13, "{gap:e}");
    // The state is far from round-off, so the comparison is not vacuous.
    assert!(ours.iter().any(|v| v.abs() > 1e-9));
}

#[test]
fn hatted_momentum_matches_full_form() {
    let (p, s) = evolved_state();
    let bg = flrw_background(&p, s.t);
    let full = momentum_residual(&unhat(&s, &bg).unwrap());
    let hatted = momentum_residual_hatted(&s, &bg).unwrap();
    for (a, b) in full.iter().zip(&hatted) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }
}

#[test]
fn residuals_of_the_background_vanish() {
    let p = FlrwParams::new(3.0, 2.0, 0.5, 1.5).unwrap();
    let g = Grid::new([4, 4, 4]).unwrap();
    for t in [0.0, 0.4, 3.0] {
        let bg = flrw_background(&p, t);
        let c = evaluate(&unhat(&State::zeros(&g, t), &bg).unwrap(), &p, &bg);
        assert!(c.ham_sup <= 1e-12 && c.mom_sup == 0.0, "{t}: {} {}", c.ham_sup, c.mom_sup);
    }
}
