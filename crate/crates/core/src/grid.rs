//! Periodic uniform grid on [0, 2π)³ with Fourier spectral operators.
//!
//! Fields are plain row-major `Vec<f64>` (axis 3 fastest). Axes with a single
//! point are inactive: fields are constant along them and every derivative
//! in that direction vanishes.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SimError};

pub type Field = Vec<f64>;

type Plan = Arc<dyn Fft<f64>>;

#[derive(Clone)]
pub struct Grid {
    n: [usize; 3],
    forward: [Option<Plan>; 3],
    inverse: [Option<Plan>; 3],
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

/// Integer wave number of FFT index `j` on an axis of `n` points, and
/// whether it is the (unpaired) Nyquist mode.
fn wavenumber(j: usize, n: usize) -> (f64, bool) {
    if n == 1 {
        (0.0, false)
    } else if 2 * j == n {
        (j as f64, true)
    } else if 2 * j < n {
        (j as f64, false)
    } else {
        (j as f64 - n as f64, false)
    }
}

impl Grid {
    pub fn new(n: [usize; 3]) -> Result<Self> {
        for (axis, &ni) in n.iter().enumerate() {
            if ni != 1 && (ni < 2 || ni % 2 != 0) {
                return Err(SimError::InvalidParameter(format!(
                    "grid axis {} has {} points; expected 1 or an even number >= 2",
                    axis + 1,
                    ni
                )));
            }
        }
        let mut planner = FftPlanner::new();
        let mut forward: [Option<Plan>; 3] = [None, None, None];
        let mut inverse: [Option<Plan>; 3] = [None, None, None];
        for a in 0..3 {
            if n[a] > 1 {
                forward[a] = Some(planner.plan_fft_forward(n[a]));
                inverse[a] = Some(planner.plan_fft_inverse(n[a]));
            }
        }
        Ok(Self { n, forward, inverse })
    }

    /// One-dimensional grid with `n` points along axis 1.
    pub fn line(n: usize) -> Result<Self> {
        Self::new([n, 1, 1])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_active(&self, axis: usize) -> bool {
        self.n[axis] > 1
    }

    /// Zero-based indices of the axes along which fields may vary.
    pub fn effective_dims(&self) -> Vec<usize> {
        (0..3).filter(|&a| self.is_active(a)).collect()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.n[axis] as f64
    }

    /// Smallest spacing over active axes (2π if there are none).
    pub fn min_spacing(&self) -> f64 {
        self.effective_dims()
            .into_iter()
            .map(|a| self.spacing(a))
            .fold(2.0 * std::f64::consts::PI, f64::min)
    }

    pub fn volume(&self) -> f64 {
        (2.0 * std::f64::consts::PI).powi(3)
    }

    pub fn zeros(&self) -> Field {
        vec![0.0; self.len()]
    }

    pub fn constant(&self, c: f64) -> Field {
        vec![c; self.len()]
    }

    fn strides(&self) -> [usize; 3] {
        [self.n[1] * self.n[2], self.n[2], 1]
    }

    /// Coordinates of every grid point.
    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        let h = [self.spacing(0), self.spacing(1), self.spacing(2)];
        let [n1, n2, n3] = self.n;
        (0..n1 * n2 * n3).map(move |idx| {
            let i3 = idx % n3;
            let i2 = (idx / n3) % n2;
            let i1 = idx / (n2 * n3);
            [i1 as f64 * h[0], i2 as f64 * h[1], i3 as f64 * h[2]]
        })
    }

    /// Samples `f(x)` on the grid.
    pub fn sample(&self, f: impl Fn([f64; 3]) -> f64) -> Field {
        self.points().map(f).collect()
    }

    fn transform(&self, buf: &mut [Complex<f64>], plans: &[Option<Plan>; 3]) {
        let strides = self.strides();
        let total = self.len();
        for a in 0..3 {
            let Some(plan) = &plans[a] else { continue };
            let n = self.n[a];
            let stride = strides[a];
            if stride == 1 {
                plan.process(buf);
                continue;
            }
            let mut line = vec![Complex::new(0.0, 0.0); n];
            let block = n * stride;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = buf[base + j * stride];
                    }
                    plan.process(&mut line);
                    for (j, v) in line.iter().enumerate() {
                        buf[base + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// Unnormalized forward DFT.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = f.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        buf
    }

    /// Inverse DFT including the 1/N normalization; returns the real part.
    pub fn inverse(&self, mut c: Vec<Complex<f64>>) -> Field {
        self.transform(&mut c, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        c.into_iter().map(|z| z.re * scale).collect()
    }

    /// Visits every Fourier mode with its wave vector and Nyquist flags.
    fn for_each_mode(&self, mut visit: impl FnMut(usize, [f64; 3], [bool; 3])) {
        let [n1, n2, n3] = self.n;
        let mut idx = 0;
        for j1 in 0..n1 {
            let (m1, q1) = wavenumber(j1, n1);
            for j2 in 0..n2 {
                let (m2, q2) = wavenumber(j2, n2);
                for j3 in 0..n3 {
                    let (m3, q3) = wavenumber(j3, n3);
                    visit(idx, [m1, m2, m3], [q1, q2, q3]);
                    idx += 1;
                }
            }
        }
    }

    /// Multiplies every Fourier coefficient of `f` by `symbol(m, nyquist)`.
    pub fn apply_symbol(
        &self,
        f: &[f64],
        symbol: impl Fn([f64; 3], [bool; 3]) -> Complex<f64>,
    ) -> Field {
        let mut c = self.forward(f);
        self.for_each_mode(|i, m, q| c[i] *= symbol(m, q));
        self.inverse(c)
    }

    /// Multiplies each mode by `g(|m|²)`.
    pub fn apply_radial(&self, f: &[f64], g: impl Fn(f64) -> f64) -> Field {
        self.apply_symbol(f, |m, _| {
            Complex::new(g(m[0] * m[0] + m[1] * m[1] + m[2] * m[2]), 0.0)
        })
    }

    /// Derivative along `axis` (0-based) without input validation.
    pub fn derivative(&self, f: &[f64], axis: usize) -> Field {
        if !self.is_active(axis) {
            return self.zeros();
        }
        self.apply_symbol(f, |m, q| {
            if q[axis] {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(0.0, m[axis])
            }
        })
    }

    /// All three partial derivatives from a single forward transform.
    pub fn gradient(&self, f: &[f64]) -> [Field; 3] {
        let active = self.effective_dims();
        let mut out = [self.zeros(), self.zeros(), self.zeros()];
        if active.is_empty() {
            return out;
        }
        let c = self.forward(f);
        for a in active {
            let mut d = c.clone();
            self.for_each_mode(|i, m, q| {
                d[i] *= if q[a] {
                    Complex::new(0.0, 0.0)
                } else {
                    Complex::new(0.0, m[a])
                };
            });
            out[a] = self.inverse(d);
        }
        out
    }

    /// Exact derivative of the trigonometric interpolant along `axis`
    /// (1, 2 or 3). The Nyquist mode is dropped.
    pub fn spectral_derivative(&self, f: &[f64], axis: usize) -> Result<Field> {
        if !(1..=3).contains(&axis) {
            return Err(SimError::InvalidParameter(format!("axis {axis} not in 1..=3")));
        }
        check_finite(f, "input")?;
        Ok(self.derivative(f, axis - 1))
    }

    pub fn laplacian(&self, f: &[f64]) -> Field {
        self.apply_radial(f, |k2| -k2)
    }

    /// Solves `(sigma - mu Δ) u = f` mode by mode.
    pub fn helmholtz_solve(&self, f: &[f64], sigma: f64, mu: f64) -> Result<Field> {
        if !(sigma > 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "helmholtz sigma must be positive, got {sigma}"
            )));
        }
        if !(mu >= 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "helmholtz mu must be non-negative, got {mu}"
            )));
        }
        check_finite(f, "input")?;
        Ok(self.apply_radial(f, |k2| 1.0 / (sigma + mu * k2)))
    }

    fn outside_two_thirds(&self, m: [f64; 3]) -> bool {
        (0..3).any(|a| 3.0 * m[a].abs() > self.n[a] as f64)
    }

    /// Two-thirds rule: removes every mode with some `|m_i| > n_i/3`.
    ///
    /// A field whose high band is already at round-off level is returned
    /// untouched, so the filter is exactly idempotent.
    pub fn dealias(&self, f: &[f64]) -> Field {
        let mut c = self.forward(f);
        let mut high = 0.0f64;
        let mut total = 0.0f64;
        self.for_each_mode(|i, m, _| {
            let a = c[i].norm();
            total = total.max(a);
            if self.outside_two_thirds(m) {
                high = high.max(a);
            }
        });
        if high <= 64.0 * f64::EPSILON * total {
            return f.to_vec();
        }
        self.for_each_mode(|i, m, _| {
            if self.outside_two_thirds(m) {
                c[i] = Complex::new(0.0, 0.0);
            }
        });
        self.inverse(c)
    }

    /// Mean over grid points.
    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / f.len() as f64
    }

    /// `∫ f² dx` by the equal-weight rule.
    pub fn l2_sq(&self, f: &[f64]) -> f64 {
        self.volume() * f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.l2_sq(f).sqrt()
    }

    fn multi_indices(&self, order: usize) -> Vec<[usize; 3]> {
        let lim = |a: usize| if self.is_active(a) { order } else { 0 };
        let mut out = Vec::new();
        for i in 0..=lim(0) {
            for j in 0..=lim(1) {
                for k in 0..=lim(2) {
                    if i + j + k <= order {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }

    /// `Σ_{|ι|≤M} ‖∂^ι f‖²_{L²}`, evaluated through Parseval.
    pub fn sobolev_sq(&self, f: &[f64], order: usize) -> f64 {
        let c = self.forward(f);
        let indices = self.multi_indices(order);
        let mut sum = 0.0;
        self.for_each_mode(|i, m, q| {
            let w: f64 = indices
                .iter()
                .map(|iota| {
                    (0..3)
                        .map(|a| match iota[a] {
                            0 => 1.0,
                            _ if q[a] => 0.0,
                            p => m[a].powi(2 * p as i32),
                        })
                        .product::<f64>()
                })
                .sum();
            sum += w * c[i].norm_sqr();
        });
        let n = self.len() as f64;
        self.volume() * sum / (n * n)
    }

    pub fn sobolev_norm(&self, f: &[f64], order: usize) -> f64 {
        self.sobolev_sq(f, order).sqrt()
    }

    /// `Σ_{|ι|≤M} max |∂^ι f|`.
    pub fn sup_norm_cm(&self, f: &[f64], order: usize) -> f64 {
        let c = self.forward(f);
        self.multi_indices(order)
            .into_iter()
            .map(|iota| {
                if iota == [0, 0, 0] {
                    return sup(f);
                }
                let mut d = c.clone();
                self.for_each_mode(|i, m, q| {
                    let mut s = Complex::new(1.0, 0.0);
                    for a in 0..3 {
                        if iota[a] > 0 {
                            s *= if q[a] {
                                Complex::new(0.0, 0.0)
                            } else {
                                Complex::new(0.0, m[a]).powi(iota[a] as i32)
                            };
                        }
                    }
                    d[i] *= s;
                });
                sup(&self.inverse(d))
            })
            .sum()
    }
}

pub fn sup(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn check_finite(f: &[f64], name: &str) -> Result<()> {
    match f.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(SimError::NonFiniteField {
            field: name.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

/// Writes `dims n1 n2 n3\n` followed by little-endian binary64 values.
pub fn write_field(w: &mut impl Write, dims: [usize; 3], values: &[f64]) -> Result<()> {
    if dims.iter().product::<usize>() != values.len() {
        return Err(SimError::Snapshot(format!(
            "dims {:?} do not match {} values",
            dims,
            values.len()
        )));
    }
    writeln!(w, "dims {} {} {}", dims[0], dims[1], dims[2])?;
    let mut bytes = Vec::with_capacity(8 * values.len());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub(crate) fn read_line(r: &mut impl Read) -> Result<String> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(SimError::Snapshot("unexpected end of file in header".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 4096 {
            return Err(SimError::Snapshot("header line too long".into()));
        }
    }
    String::from_utf8(line).map_err(|_| SimError::Snapshot("header is not UTF-8".into()))
}

pub fn read_field(r: &mut impl Read) -> Result<([usize; 3], Field)> {
    let header = read_line(r)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "dims" {
        return Err(SimError::Snapshot(format!("bad field header `{header}`")));
    }
    let mut dims = [0usize; 3];
    for (d, p) in dims.iter_mut().zip(&parts[1..]) {
        *d = p
            .parse()
            .map_err(|_| SimError::Snapshot(format!("bad dimension `{p}`")))?;
    }
    let count: usize = dims.iter().product();
    let mut bytes = vec![0u8; 8 * count];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((dims, values))
}
