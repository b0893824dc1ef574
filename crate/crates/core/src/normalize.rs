//! Quotient by temporal scalings: dummy extension, amplitude `A`, projector `P`,
//! synchronized times, rescaled frames `U^(m)`, generalized multipliers and the
//! normalized equations of motion.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::scalar::{Cx, Real};
use crate::shell::{Nonlinearity, Sabra, ShellField, ShellState};

/// Tolerance on `A(U) = 1` accepted by [`normalized_rhs`].
pub const CONSTRAINT_TOL: f64 = 1e-8;

/// A forced-model state with the dummy shells `u_{-2} = 0`, `u_{-1} = 2` materialized,
/// so that `Σ_{n<0} k_n²|u_n|² = 1` and `A(x) = 1`.
pub type ExtendedState<T> = ShellState<T>;

/// Attaches the dummy tail to a forced-model state. Already extended states are returned
/// unchanged.
pub fn extend_dummy<T: Real>(state: &ShellState<T>) -> Result<ExtendedState<T>> {
    if state.is_extended() {
        return Ok(state.clone());
    }
    if state.n_min() != 0 {
        return Err(Error::Structural(format!(
            "dummy extension needs a window starting at shell 0, got {}",
            state.n_min()
        )));
    }
    Ok(extend_shells(state.t, state.amplitudes()))
}

pub(crate) fn extend_shells<T: Real>(t: T, u: &[Cx<T>]) -> ExtendedState<T> {
    let mut values = Vec::with_capacity(u.len() + 2);
    values.push(Cx::new(T::zero(), T::zero()));
    values.push(Cx::new(T::lit(2.0), T::zero()));
    values.extend_from_slice(u);
    let mut s = ShellState::from_parts(t, ShellField::new(-2, values), false);
    s.set_extended(true);
    s
}

/// `A(x) = sqrt(Σ_{n<0} k_n²|u_n|²)`.
pub fn amplitude<T: Real>(x: &ShellState<T>) -> T {
    negative_sum(x.field()).sqrt()
}

fn negative_sum<T: Real>(f: &ShellField<T>) -> T {
    f.iter()
        .filter(|(n, _)| *n < 0)
        .map(|(n, z)| T::wavenumber(2 * n) * z.norm_sqr())
        .sum()
}

/// `A∘g^m(x) = sqrt(A(x)² + Σ_{0<=n<m} k_n²|u_n|²)`; equals `1` at `m = 0` for an extended
/// state. Only `m >= 0` is supported since the forced model resolves no shells below 0.
pub fn amplitude_at_scale<T: Real>(x: &ShellState<T>, m: i32) -> Result<T> {
    if m < 0 {
        return Err(Error::Unsupported(format!("amplitude at negative scale m = {m}")));
    }
    let f = x.field();
    let mut acc = negative_sum(f);
    for n in 0..m {
        acc = acc + T::wavenumber(2 * n) * f.get(n).norm_sqr();
    }
    Ok(acc.sqrt())
}

/// `[A∘g^0, A∘g^1, ..., A∘g^{m_max}]` for a forced-model frame with the dummy tail, using the
/// same summation order as [`amplitude_at_scale`].
pub fn scale_amplitudes<T: Real>(u: &[Cx<T>], m_max: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(m_max + 1);
    // Dummy tail: k_{-1}²·|2|² = 1.
    let mut acc = T::one();
    out.push(acc.sqrt());
    for n in 0..m_max {
        let z = u.get(n).copied().unwrap_or(Cx::new(T::zero(), T::zero()));
        acc = acc + T::wavenumber(2 * n as i32) * z.norm_sqr();
        out.push(acc.sqrt());
    }
    out
}

/// `P(x) = h^{A(x)}(x)`: every amplitude, dummies included, divided by `A(x)`.
pub fn project<T: Real>(x: &ShellState<T>) -> Result<ShellState<T>> {
    let a = amplitude(x);
    if !(a > T::zero()) {
        return Err(Error::Domain("projection of a state with A(x) = 0".into()));
    }
    crate::shell::time_scale(x, a)
}

/// Generalized multiplier `σ_n = A∘g^{n+1} / A∘g^n`.
pub fn multiplier_sigma<T: Real>(x: &ShellState<T>, n: i32) -> Result<T> {
    Ok(amplitude_at_scale(x, n + 1)? / amplitude_at_scale(x, n)?)
}

/// Right-hand side of the normalized system for the Sabra model,
/// `dU_n/dτ = B_n(U) + U_n Σ_{j<0} k_j³(2π_{j+1} - π_j/2 - π_{j-1}/4)`.
pub fn normalized_rhs<T: Real>(u: &ShellState<T>) -> Result<ShellField<T>> {
    normalized_rhs_with(&Sabra, u)
}

/// Normalized right-hand side `B(U) + U·rate(U)` for any quadratic transfer; the rate is
/// the model's [`Nonlinearity::normalization_rate`].
pub fn normalized_rhs_with<T: Real, M: Nonlinearity<T>>(model: &M, u: &ShellState<T>) -> Result<ShellField<T>> {
    let a2 = negative_sum(u.field());
    if (a2 - T::one()).abs() > T::lit(CONSTRAINT_TOL) {
        return Err(Error::Domain(format!(
            "normalized state violates Σ_(n<0) k_n²|U_n|² = 1 (got {a2})"
        )));
    }
    Ok(normalized_field_rhs(model, u.field()))
}

/// Unchecked normalized tendency on a bare field.
pub fn normalized_field_rhs<T: Real, M: Nonlinearity<T>>(model: &M, f: &ShellField<T>) -> ShellField<T> {
    let mut out = ShellField::zeros(f.n_min(), f.n_max());
    model.apply(f.n_min(), f.values(), out.values_mut());
    let rate = model.normalization_rate(f);
    for (o, z) in out.values_mut().iter_mut().zip(f.values()) {
        *o = *o + *z * rate;
    }
    out
}

/// One sample of a rescaled frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledSample<T> {
    /// Original time `t`.
    pub t: T,
    /// Synchronized time `τ^(m)`.
    pub tau: T,
    /// Measure weight `A∘g^m` at this sample.
    pub weight: T,
    /// Original-time interval represented by this sample.
    pub dt: T,
    /// `U_n^(m)` for `n` in the frame window.
    pub u: Vec<Cx<T>>,
}

/// Normalized velocities `U_n^(m) = k_m u_{n+m} / A∘g^m` along a trajectory, with the
/// synchronized time `dτ^(m) = A∘g^m dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledFrame<T> {
    pub m: i32,
    pub n_lo: i32,
    pub n_hi: i32,
    pub samples: Vec<RescaledSample<T>>,
}

impl<T: Real> RescaledFrame<T> {
    /// `U_n^(m)` of sample `k`; zero outside the window.
    pub fn get(&self, k: usize, n: i32) -> Cx<T> {
        if n < self.n_lo || n > self.n_hi {
            Cx::new(T::zero(), T::zero())
        } else {
            self.samples[k].u[(n - self.n_lo) as usize]
        }
    }

    /// `Σ_{n<0} k_n²|U_n^(m)|²` for sample `k` when the window reaches the dummy shell
    /// (`n_lo <= -m-1`); `None` otherwise.
    pub fn constraint_sum(&self, k: usize) -> Option<T> {
        if self.n_lo > -self.m - 1 {
            return None;
        }
        let s = &self.samples[k];
        Some(
            (self.n_lo..0)
                .map(|n| T::wavenumber(2 * n) * s.u[(n - self.n_lo) as usize].norm_sqr())
                .sum(),
        )
    }

    /// Writes `t, tau_m, weight, Re/Im U_n` columns with a header naming the shells.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        write!(w, "t,tau_m,weight")?;
        for n in self.n_lo..=self.n_hi {
            write!(w, ",re_U{n},im_U{n}")?;
        }
        writeln!(w)?;
        for s in &self.samples {
            write!(w, "{},{},{}", s.t, s.tau, s.weight)?;
            for z in &s.u {
                write!(w, ",{},{}", z.re, z.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Extracts the rescaled frame at scale `m` over the window `[n_lo, n_hi]`.
///
/// `τ^(m)` is accumulated by the trapezoidal rule on the recorded samples, starting from
/// `A∘g^m(t_0)·t_0`. Shells below the dummy tail read as zero.
pub fn rescaled_frame<T: Real>(traj: &Trajectory<T>, m: i32, window: (i32, i32)) -> Result<RescaledFrame<T>> {
    let (n_lo, n_hi) = window;
    let n_shells = traj.n_shells() as i32;
    if m < 0 {
        return Err(Error::Structural(format!("scale shift m = {m} must be >= 0")));
    }
    if !(n_lo <= 0 && 0 < n_hi) {
        return Err(Error::Structural(format!(
            "window [{n_lo}, {n_hi}] must satisfy n_lo <= 0 < n_hi"
        )));
    }
    if m + n_hi > n_shells - 1 {
        return Err(Error::Structural(format!(
            "window [{n_lo}, {n_hi}] at m = {m} reaches shell {} beyond the evolved {} shells",
            m + n_hi,
            n_shells
        )));
    }
    let km = T::wavenumber(m);
    let dt = traj.stride_dt();
    let half = T::lit(0.5);
    let mut samples: Vec<RescaledSample<T>> = Vec::with_capacity(traj.frames.len());
    let mut excess = T::zero();
    for f in &traj.frames {
        let a = *scale_amplitudes(&f.u, m as usize).last().unwrap();
        let x = extend_shells(f.t, &f.u);
        let u = (n_lo..=n_hi).map(|n| x.get(n + m) * km / a).collect();
        // τ = t + accumulated excess over t.
        excess = match samples.last() {
            None => (a - T::one()) * f.t,
            Some(prev) => excess + (f.t - prev.t) * ((a + prev.weight) * half - T::one()),
        };
        let tau = f.t + excess;
        samples.push(RescaledSample {
            t: f.t,
            tau,
            weight: a,
            dt,
            u,
        });
    }
    Ok(RescaledFrame { m, n_lo, n_hi, samples })
}
