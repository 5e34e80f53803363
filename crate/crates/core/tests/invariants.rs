use proptest::prelude::*;

use flrw_sim::background::{flrw_background, FlrwParams};
use flrw_sim::grid::Grid;
use flrw_sim::state::{hat, unhat, State, NUM_COMPONENTS};

const N: usize = 8;

fn params() -> FlrwParams {
    FlrwParams::new(3.0, 1.0, 0.2, 3.0).unwrap()
}

/// A hatted state on an 8-point line with entries in `[-scale, scale]`.
fn state_strategy(scale: f64) -> impl Strategy<Value = (f64, State)> {
    (
        0.0f64..4.0,
        prop::collection::vec(-scale..scale, NUM_COMPONENTS * N),
    )
        .prop_map(|(t, vals)| {
            let g = Grid::line(N).unwrap();
            let mut s = State::zeros(&g, t);
            for (c, chunk) in s.comps.iter_mut().zip(vals.chunks(N)) {
                c.copy_from_slice(chunk);
            }
            s.project_trace();
            (t, s)
        })
}

fn max_abs(s: &State) -> f64 {
    s.comps.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

proptest! {
    #[test]
    fn hat_inverts_unhat((t, s) in state_strategy(0.5)) {
        let bg = flrw_background(&params(), t);
        let back = hat(&unhat(&s, &bg).unwrap(), &bg);
        let scale = max_abs(&s).max(bg.trk.abs()).max(bg.psi.abs()).max(1.0);
        for (a, b) in s.comps.iter().zip(&back.comps) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-14 * scale, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn trace_projection_is_idempotent((_t, s) in state_strategy(10.0)) {
        let mut again = s.clone();
        again.project_trace();
        let scale = max_abs(&s);
        for (a, b) in s.comps.iter().zip(&again.comps) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-15 * scale);
            }
        }
    }

    #[test]
    fn unhatted_connection_is_exactly_antisymmetric((t, s) in state_strategy(0.5)) {
        let f = unhat(&s, &flrw_background(&params(), t)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for b in 0..3 {
                    for p in 0..N {
                        prop_assert_eq!(f.gamma[i][j][b][p], -f.gamma[i][b][j][p]);
                    }
                }
            }
        }
    }

    #[test]
    fn dealiasing_is_idempotent(vals in prop::collection::vec(-1.0f64..1.0, 16 * 4 * 2)) {
        let g = Grid::new([16, 4, 2]).unwrap();
        let once = g.dealias(&vals);
        prop_assert_eq!(g.dealias(&once), once);
    }

    #[test]
    fn trace_free_after_projection((_t, s) in state_strategy(10.0)) {
        prop_assert!(s.trace_k_sup() <= 1e-14 * max_abs(&s));
    }
}
