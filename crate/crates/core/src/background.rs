//! Closed-form FLRW background with a massless scalar field and Λ > 0.
//!
//! The scale factor is `a(t) = a0 (α sinh(3Ht) + cosh(3Ht))^{1/3}` with
//! `H = sqrt(Λ/3)`. Everything else (scalar momentum, mean curvature, frame
//! coefficient and their time derivatives) follows analytically from it.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Selects the coefficient α in front of the `sinh` term of the scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaConvention {
    /// `α = sqrt(φ0²/(2Λ) + 1)`: satisfies the FLRW Hamiltonian constraint
    /// `6(ȧ/a)² = 2Λ + φ²` exactly.
    #[default]
    ConstraintConsistent,
    /// `α = sqrt(φ0²/Λ + 1)`. Violates the Hamiltonian constraint by `φ0²`
    /// at `t = 0`; kept for comparison runs.
    ConstraintViolating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlrwParams {
    /// Cosmological constant Λ.
    pub lambda: f64,
    /// Initial scale factor.
    pub a0: f64,
    /// Initial scalar field value.
    pub psi0: f64,
    /// Initial scalar momentum `∂_t ψ(0)`.
    pub phi0: f64,
    #[serde(default)]
    pub alpha_convention: AlphaConvention,
}

impl FlrwParams {
    pub fn new(lambda: f64, a0: f64, psi0: f64, phi0: f64) -> Result<Self> {
        let p = Self {
            lambda,
            a0,
            psi0,
            phi0,
            alpha_convention: AlphaConvention::ConstraintConsistent,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_convention(mut self, convention: AlphaConvention) -> Self {
        self.alpha_convention = convention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.a0.is_finite() && self.a0 > 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "a0 must be positive, got {}",
                self.a0
            )));
        }
        if !self.psi0.is_finite() || !self.phi0.is_finite() {
            return Err(SimError::InvalidParameter(
                "psi0 and phi0 must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Asymptotic Hubble rate `H = sqrt(Λ/3)`.
    pub fn hubble(&self) -> f64 {
        (self.lambda / 3.0).sqrt()
    }

    pub fn alpha(&self) -> f64 {
        let phi2 = self.phi0 * self.phi0;
        match self.alpha_convention {
            AlphaConvention::ConstraintConsistent => (phi2 / (2.0 * self.lambda) + 1.0).sqrt(),
            AlphaConvention::ConstraintViolating => (phi2 / self.lambda + 1.0).sqrt(),
        }
    }

    /// `lim e^{-Ht} a(t) = a0 ((α+1)/2)^{1/3}`.
    pub fn a_inf_coef(&self) -> f64 {
        self.a0 * (0.5 * (self.alpha() + 1.0)).cbrt()
    }
}

/// Exact background values of every reduced variable at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundState {
    pub t: f64,
    pub a: f64,
    pub a_dot: f64,
    pub a_ddot: f64,
    pub psi: f64,
    pub phi: f64,
    pub phi_dot: f64,
    /// Mean curvature `-3 ȧ/a`.
    pub trk: f64,
    pub trk_dot: f64,
    /// Diagonal frame coefficient `1/a`.
    pub frame_coef: f64,
    pub frame_coef_dot: f64,
}

impl BackgroundState {
    /// Expansion rate `ȧ/a`.
    pub fn hubble_rate(&self) -> f64 {
        self.a_dot / self.a
    }
}

/// `D(t) = α sinh(st) + cosh(st)` and `D'(t)/D(t)` with `s = 3H`.
fn warp(params: &FlrwParams, t: f64) -> (f64, f64) {
    let s = 3.0 * params.hubble();
    let alpha = params.alpha();
    let (sh, ch) = ((s * t).sinh(), (s * t).cosh());
    let d = alpha * sh + ch;
    let dprime_over_d = s * (alpha * ch + sh) / d;
    (d, dprime_over_d)
}

fn phi_at(params: &FlrwParams, t: f64) -> f64 {
    params.phi0 / warp(params, t).0
}

pub fn flrw_background(params: &FlrwParams, t: f64) -> BackgroundState {
    let h_inf = params.hubble();
    let s = 3.0 * h_inf;
    let (d, dd_over_d) = warp(params, t);
    let a = params.a0 * d.cbrt();
    let h = dd_over_d / 3.0;
    // D'' = s² D, hence ḣ = s²/3 - 3h².
    let h_dot = s * s / 3.0 - 3.0 * h * h;
    let a_dot = a * h;
    let a_ddot = a * (h * h + h_dot);
    let phi = params.phi0 / d;
    let phi_dot = -3.0 * h * phi;
    let psi = params.psi0 + integrate_phi(params, 0.0, t);
    BackgroundState {
        t,
        a,
        a_dot,
        a_ddot,
        psi,
        phi,
        phi_dot,
        trk: -3.0 * h,
        trk_dot: -3.0 * h_dot,
        frame_coef: 1.0 / a,
        frame_coef_dot: -h / a,
    }
}

/// `(lim e^{-Ht} a(t), lim ψ_FLRW(t))`.
pub fn flrw_limits(params: &FlrwParams) -> (f64, f64) {
    (params.a_inf_coef(), psi_inf(params))
}

fn psi_inf(params: &FlrwParams) -> f64 {
    if params.phi0 == 0.0 {
        return params.psi0;
    }
    // |φ(t)| ≤ 2|φ0| e^{-3Ht}, so the tail beyond T is below 2|φ0| e^{-3HT}/(3H).
    let h = params.hubble();
    let tail_tol = 1e-13;
    let t_cut = ((2.0 * params.phi0.abs() / (3.0 * h * tail_tol)).ln() / (3.0 * h)).max(1.0 / h);
    params.psi0 + integrate_phi(params, 0.0, t_cut)
}

fn integrate_phi(params: &FlrwParams, t0: f64, t1: f64) -> f64 {
    if params.phi0 == 0.0 || t1 <= t0 {
        return 0.0;
    }
    // Split into pieces of length ~1/(3H) so every panel is well resolved.
    let piece = 1.0 / (3.0 * params.hubble());
    let pieces = ((t1 - t0) / piece).ceil().max(1.0) as usize;
    let w = (t1 - t0) / pieces as f64;
    let tol = 1e-12 / pieces as f64;
    (0..pieces)
        .map(|i| {
            let a = t0 + i as f64 * w;
            adaptive_gk15(&|t| phi_at(params, t), a, a + w, tol, 40)
        })
        .sum()
}

/// `(|a(t) - a∞ e^{Ht}|, |φ(t) - 2φ0/(α+1) e^{-3Ht}|)`, evaluated without
/// cancellation.
pub fn flrw_asymptotic_check(params: &FlrwParams, t: f64) -> (f64, f64) {
    let h = params.hubble();
    let s = 3.0 * h;
    let alpha = params.alpha();
    // D(t) = (α+1)/2 e^{st} (1 + x), x = (1-α)/(1+α) e^{-2st}.
    let x = (1.0 - alpha) / (1.0 + alpha) * (-2.0 * s * t).exp();
    let a_lead = params.a_inf_coef() * (h * t).exp();
    let err_a = (a_lead * ((x.ln_1p() / 3.0).exp_m1())).abs();
    let phi_lead = 2.0 * params.phi0 / (alpha + 1.0) * (-s * t).exp();
    let err_phi = (phi_lead * (-x / (1.0 + x))).abs();
    (err_a, err_phi)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G_W: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WK[7] * fc;
    let mut gauss = G_W[3] * fc;
    for j in 0..7 {
        let dx = hw * GK_NODES[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += GK_WK[j] * s;
        if j % 2 == 1 {
            gauss += G_W[j / 2] * s;
        }
    }
    (kronrod * hw, ((kronrod - gauss) * hw).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature to absolute tolerance `tol`.
pub(crate) fn adaptive_gk15(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let (val, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return val;
    }
    let m = 0.5 * (a + b);
    adaptive_gk15(f, a, m, 0.5 * tol, depth - 1) + adaptive_gk15(f, m, b, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(lambda: f64, phi0: f64) -> FlrwParams {
        FlrwParams::new(lambda, 1.0, 0.0, phi0).unwrap()
    }

    /// Closed-form `∫_0^t φ0/(α sinh(st) + cosh(st)) dt` for α > 1.
    fn psi_closed_form(p: &FlrwParams, t: f64) -> f64 {
        let s = 3.0 * p.hubble();
        let alpha = p.alpha();
        let beta = (alpha * alpha - 1.0).sqrt();
        // α sinh x + cosh x = β sinh(x + c), tanh c = 1/α.
        let c = (1.0 / alpha).atanh();
        let g = |x: f64| ((x + c) / 2.0).tanh().ln();
        p.phi0 / (s * beta) * (g(s * t) - g(0.0))
    }

    #[test]
    fn vacuum_is_de_sitter() {
        let p = cc(3.0, 0.0);
        let bg = flrw_background(&p, 2.0);
        assert!((bg.a - 2f64.exp().powi(1)).abs() < 1e-12 * bg.a);
        assert_eq!(bg.phi, 0.0);
        assert!((bg.trk + 3.0).abs() < 1e-13);
    }

    #[test]
    fn initial_values() {
        let p = FlrwParams::new(2.0, 1.7, 0.3, -1.2).unwrap();
        let bg = flrw_background(&p, 0.0);
        assert_eq!(bg.a, 1.7);
        assert_eq!(bg.phi, -1.2);
        assert_eq!(bg.psi, 0.3);
    }

    #[test]
    fn constraint_consistent_initial_rate() {
        let p = cc(3.0, 3.0);
        let bg = flrw_background(&p, 0.0);
        let h = bg.hubble_rate();
        assert!((h - 2.5f64.sqrt()).abs() < 1e-14);
        assert!((6.0 * h * h - 15.0).abs() < 1e-12);
    }

    #[test]
    fn violating_alpha_breaks_hamiltonian_constraint() {
        let p = cc(3.0, 3.0).with_convention(AlphaConvention::ConstraintViolating);
        assert!((p.alpha() - 2.0).abs() < 1e-15);
        let bg = flrw_background(&p, 0.0);
        let h = bg.hubble_rate();
        assert!((6.0 * h * h - (2.0 * p.lambda + 2.0 * 9.0)).abs() < 1e-12);
    }

    #[test]
    fn limits() {
        let (ainf, psinf) = flrw_limits(&cc(3.0, 0.0));
        assert_eq!(ainf, 1.0);
        assert_eq!(psinf, 0.0);

        let p = cc(3.0, 3.0);
        let (ainf, _) = flrw_limits(&p);
        let expect = ((2.5f64.sqrt() + 1.0) / 2.0).cbrt();
        assert!((ainf - expect).abs() < 1e-15);
        assert!((ainf - 1.0887).abs() < 1e-4);
        let t = 20.0 / p.hubble();
        let bg = flrw_background(&p, t);
        assert!((bg.a * (-p.hubble() * t).exp() - ainf).abs() < 1e-12);

        let pv = p.with_convention(AlphaConvention::ConstraintViolating);
        assert!((pv.a_inf_coef() - 1.5f64.cbrt()).abs() < 1e-15);
        assert!((pv.a_inf_coef() - 1.1447).abs() < 1e-4);
    }

    #[test]
    fn psi_quadrature_matches_closed_form() {
        let p = FlrwParams::new(3.0, 1.0, 0.25, 3.0).unwrap();
        for &t in &[0.1, 0.5, 1.0, 3.0, 7.0] {
            let bg = flrw_background(&p, t);
            let exact = 0.25 + psi_closed_form(&p, t);
            assert!((bg.psi - exact).abs() < 1e-12, "t={t}: {} vs {}", bg.psi, exact);
        }
        let (_, psinf) = flrw_limits(&p);
        let c = (1.0 / p.alpha()).atanh();
        let exact_inf = 0.25 - p.phi0 / (3.0 * p.hubble() * (p.alpha().powi(2) - 1.0).sqrt())
            * (c / 2.0).tanh().ln();
        assert!((psinf - exact_inf).abs() < 1e-12);
    }

    #[test]
    fn conservation_and_constraint_along_time() {
        for &(lambda, phi0) in &[(3.0, 3.0), (0.7, -1.1), (12.0, 0.2)] {
            let p = cc(lambda, phi0);
            let h = p.hubble();
            for i in 0..=40 {
                let t = i as f64 * 0.5 / h;
                let bg = flrw_background(&p, t);
                let c = bg.phi * bg.a.powi(3);
                assert!((c - phi0).abs() <= 1e-13 * phi0.abs());
                let r = 6.0 * bg.hubble_rate().powi(2) - 2.0 * lambda - bg.phi * bg.phi;
                assert!(r.abs() <= 1e-12 * (2.0 * lambda + phi0 * phi0));
                assert!(bg.a_dot > 0.0);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = cc(3.0, 3.0);
        let eps = 1e-5;
        for &t in &[0.05, 0.4, 1.3] {
            let m = flrw_background(&p, t - eps);
            let c = flrw_background(&p, t);
            let q = flrw_background(&p, t + eps);
            let d = |f: fn(&BackgroundState) -> f64| (f(&q) - f(&m)) / (2.0 * eps);
            let ok = |fd: f64, exact: f64| (fd - exact).abs() < 1e-7 * (1.0 + exact.abs());
            assert!(ok(d(|b| b.a), c.a_dot));
            assert!(ok(d(|b| b.a_dot), c.a_ddot));
            assert!(ok(d(|b| b.phi), c.phi_dot));
            assert!(ok(d(|b| b.trk), c.trk_dot));
            assert!(ok(d(|b| b.frame_coef), c.frame_coef_dot));
            assert!(ok(d(|b| b.psi), c.phi));
        }
    }

    #[test]
    fn raychaudhuri_holds() {
        let p = cc(3.0, 3.0);
        for &t in &[0.0, 0.3, 2.0] {
            let bg = flrw_background(&p, t);
            let lhs = bg.a_ddot / bg.a;
            assert!((lhs - (p.lambda - bg.phi * bg.phi) / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn asymptotic_rates() {
        let p = cc(3.0, 0.0);
        assert_eq!(flrw_asymptotic_check(&p, 3.0), (0.0, 0.0));

        let p = cc(3.0, 3.0);
        let h = p.hubble();
        let ts: Vec<f64> = (0..=12).map(|i| 3.0 + 0.25 * i as f64).collect();
        let slope = |vals: Vec<f64>| {
            let n = ts.len() as f64;
            let mt = ts.iter().sum::<f64>() / n;
            let ly: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
            let my = ly.iter().sum::<f64>() / n;
            let num: f64 = ts.iter().zip(&ly).map(|(t, y)| (t - mt) * (y - my)).sum();
            let den: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
            num / den
        };
        let ephi = ts.iter().map(|&t| flrw_asymptotic_check(&p, t).1).collect();
        assert!((slope(ephi) + 9.0 * h).abs() < 0.05);
        let ea = ts
            .iter()
            .map(|&t| flrw_asymptotic_check(&p, t).0 / (h * t).exp())
            .collect();
        assert!(slope(ea) <= -6.0 * h + 0.05);
    }

    #[test]
    fn mean_curvature_approaches_de_sitter_value() {
        let p = cc(3.0, 3.0);
        let h = p.hubble();
        let f = |t: f64| flrw_background(&p, t).trk + 3.0 * h;
        let rate = (f(3.0).abs().ln() - f(2.0).abs().ln()) / 1.0;
        assert!((rate + 6.0 * h).abs() < 0.05);
    }

    /// Integrates `ä = a(Λ - 2(ȧ/a)²)`, `φ' = -3(ȧ/a)φ` with classical RK4
    /// and compares against the closed form.
    #[test]
    fn closed_form_matches_background_ode() {
        let p = cc(3.0, 3.0);
        let bg0 = flrw_background(&p, 0.0);
        let rhs = |y: [f64; 3]| {
            let h = y[1] / y[0];
            [y[1], y[0] * (p.lambda - 2.0 * h * h), -3.0 * h * y[2]]
        };
        let mut y = [bg0.a, bg0.a_dot, bg0.phi];
        let dt = 1e-4;
        let steps = 10_000;
        for _ in 0..steps {
            let add = |y: [f64; 3], k: [f64; 3], c: f64| {
                [y[0] + c * k[0], y[1] + c * k[1], y[2] + c * k[2]]
            };
            let k1 = rhs(y);
            let k2 = rhs(add(y, k1, dt / 2.0));
            let k3 = rhs(add(y, k2, dt / 2.0));
            let k4 = rhs(add(y, k3, dt));
            for i in 0..3 {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let bg = flrw_background(&p, dt * steps as f64);
        assert!((y[0] - bg.a).abs() < 1e-9 * bg.a);
        assert!((y[1] - bg.a_dot).abs() < 1e-9 * bg.a_dot);
        assert!((y[2] - bg.phi).abs() < 1e-10);
    }
}
