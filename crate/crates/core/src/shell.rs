//! Sabra shell model: state, nonlinear transfer, forced/viscous right-hand side and the
//! exact temporal (`h^a`) and spatial (`g^m`) scaling maps.
//!
//! Shells live on a contiguous window `[n_min, n_max]` of integer indices with
//! wavenumbers `k_n = 2^n`. Every amplitude outside the window reads as zero; the dummy
//! tail used by the quotient construction is materialized inside the window (see
//! [`crate::normalize::extend_dummy`]).

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{times_i, Cx, Real};

/// Minimum window length: the nonlinear stencil couples shells `n-2..=n+2`.
pub const MIN_WINDOW: usize = 4;

/// Complex amplitudes over a contiguous shell window, zero outside it.
#[derive(Clone, Debug, PartialEq)]
pub struct ShellField<T> {
    n_min: i32,
    values: Vec<Cx<T>>,
}

impl<T: Real> ShellField<T> {
    pub fn new(n_min: i32, values: Vec<Cx<T>>) -> Self {
        ShellField { n_min, values }
    }

    pub fn zeros(n_min: i32, n_max: i32) -> Self {
        let len = (n_max - n_min + 1).max(0) as usize;
        ShellField {
            n_min,
            values: vec![Cx::new(T::zero(), T::zero()); len],
        }
    }

    pub fn n_min(&self) -> i32 {
        self.n_min
    }

    pub fn n_max(&self) -> i32 {
        self.n_min + self.values.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, n: i32) -> bool {
        n >= self.n_min && n <= self.n_max()
    }

    /// Amplitude of shell `n`; zero outside the window.
    #[inline]
    pub fn get(&self, n: i32) -> Cx<T> {
        let i = n - self.n_min;
        if i < 0 || i as usize >= self.values.len() {
            Cx::new(T::zero(), T::zero())
        } else {
            self.values[i as usize]
        }
    }

    pub fn set(&mut self, n: i32, z: Cx<T>) {
        assert!(self.contains(n), "shell {n} outside window");
        let i = (n - self.n_min) as usize;
        self.values[i] = z;
    }

    pub fn values(&self) -> &[Cx<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Cx<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Cx<T>> {
        self.values
    }

    /// `(n, u_n)` pairs over the window.
    pub fn iter(&self) -> impl Iterator<Item = (i32, Cx<T>)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &z)| (self.n_min + i as i32, z))
    }

    /// `g^m` on the field: `u'_n = k_m u_{n+m}` with the window shifted to `[n_min-m, n_max-m]`.
    pub fn space_scale(&self, m: i32) -> Self {
        let km = T::wavenumber(m);
        ShellField {
            n_min: self.n_min - m,
            values: self.values.iter().map(|&z| z * km).collect(),
        }
    }

    /// `g^m` evaluated on an arbitrary output window `[lo, hi]`; reads outside the source
    /// window are zero.
    pub fn space_scale_onto(&self, m: i32, lo: i32, hi: i32) -> Self {
        let km = T::wavenumber(m);
        ShellField {
            n_min: lo,
            values: (lo..=hi).map(|n| self.get(n + m) * km).collect(),
        }
    }

    /// Restriction to `[lo, hi]`, zero-filled where the window does not reach.
    pub fn restrict(&self, lo: i32, hi: i32) -> Self {
        self.space_scale_onto(0, lo, hi)
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, z| acc.max(z.norm()))
    }
}

/// A point of the shell-model phase space: amplitudes on a window plus a time stamp.
#[derive(Clone, Debug, PartialEq)]
pub struct ShellState<T> {
    pub t: T,
    field: ShellField<T>,
    /// Whether the window carries the materialized dummy tail `u_{-1} = 2`.
    extended: bool,
}

impl<T: Real> ShellState<T> {
    /// Builds a validated state: `n_min <= 0 <= n_max`, at least [`MIN_WINDOW`] shells and
    /// finite amplitudes.
    pub fn new(t: T, n_min: i32, u: Vec<Cx<T>>) -> Result<Self> {
        let field = ShellField::new(n_min, u);
        if field.len() < MIN_WINDOW {
            return Err(Error::Structural(format!(
                "window of {} shells is shorter than the stencil width {MIN_WINDOW}",
                field.len()
            )));
        }
        if n_min > 0 || field.n_max() < 0 {
            return Err(Error::Structural(format!(
                "window [{n_min}, {}] does not contain shell 0",
                field.n_max()
            )));
        }
        if let Some((n, _)) = field.iter().find(|(_, z)| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain(format!("non-finite amplitude at shell {n}")));
        }
        Ok(ShellState {
            t,
            field,
            extended: false,
        })
    }

    /// Forced-model state on shells `0..u.len()` at time zero.
    pub fn from_shells(u: Vec<Cx<T>>) -> Result<Self> {
        Self::new(T::zero(), 0, u)
    }

    pub fn zeros(n_min: i32, n_max: i32) -> Result<Self> {
        let field = ShellField::zeros(n_min, n_max);
        Self::new(T::zero(), n_min, field.into_values())
    }

    pub(crate) fn from_parts(t: T, field: ShellField<T>, extended: bool) -> Self {
        ShellState { t, field, extended }
    }

    pub fn field(&self) -> &ShellField<T> {
        &self.field
    }

    pub fn field_mut(&mut self) -> &mut ShellField<T> {
        &mut self.field
    }

    pub fn n_min(&self) -> i32 {
        self.field.n_min()
    }

    pub fn n_max(&self) -> i32 {
        self.field.n_max()
    }

    pub fn get(&self, n: i32) -> Cx<T> {
        self.field.get(n)
    }

    pub fn amplitudes(&self) -> &[Cx<T>] {
        self.field.values()
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Cx<T>] {
        self.field.values_mut()
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    pub(crate) fn set_extended(&mut self, extended: bool) {
        self.extended = extended;
    }
}

/// Quadratic shell-to-shell transfer `B_n(u)`.
///
/// Implementations evaluate on a zero-padded window. [`Sabra`] is the physical model;
/// the other implementations exist for tests and negative controls.
pub trait Nonlinearity<T: Real>: Sync {
    /// Writes `B_n` for every shell of `u` (window starting at `n_min`) into `out`.
    fn apply(&self, n_min: i32, u: &[Cx<T>], out: &mut [Cx<T>]);

    /// Rate `-(dA/dt)/A^2` entering the normalized equations for a state with `A = 1`:
    /// `-Σ_{j<0} k_j² Re(conj(U_j) B_j(U))`.
    fn normalization_rate(&self, field: &ShellField<T>) -> T {
        let mut b = vec![Cx::new(T::zero(), T::zero()); field.len()];
        self.apply(field.n_min(), field.values(), &mut b);
        let mut acc = T::zero();
        for (i, z) in field.values().iter().enumerate() {
            let n = field.n_min() + i as i32;
            if n < 0 {
                acc = acc + T::wavenumber(2 * n) * (z.conj() * b[i]).re;
            }
        }
        -acc
    }
}

/// `B_n = i(k_{n+1} u_{n+2} u*_{n+1} - k_{n-1} u_{n+1} u*_{n-1} + k_{n-2} u_{n-1} u_{n-2})`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sabra;

#[inline]
fn sabra_into<T: Real>(n_min: i32, u: &[Cx<T>], out: &mut [Cx<T>], third_sign: T) {
    let len = u.len();
    let zero = Cx::new(T::zero(), T::zero());
    // k_{n-2} for the first shell of the window, doubled as n advances.
    let mut k_m2 = T::wavenumber(n_min - 2);
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    for i in 0..len {
        let k_m1 = k_m2 * two;
        let k_p1 = k_m2 * four * two;
        let mut acc = zero;
        if i + 2 < len {
            acc = acc + u[i + 2] * u[i + 1].conj() * k_p1;
        }
        if i >= 1 && i + 1 < len {
            acc = acc - u[i + 1] * u[i - 1].conj() * k_m1;
        }
        if i >= 2 {
            acc = acc + u[i - 1] * u[i - 2] * (k_m2 * third_sign);
        }
        out[i] = times_i(acc);
        k_m2 = k_m1;
    }
}

/// `π_j = Im(conj(U_{j-1}) conj(U_j) U_{j+1})`.
#[inline]
fn triad_flux<T: Real>(field: &ShellField<T>, j: i32) -> T {
    (field.get(j - 1).conj() * field.get(j).conj() * field.get(j + 1)).im
}

impl<T: Real> Nonlinearity<T> for Sabra {
    fn apply(&self, n_min: i32, u: &[Cx<T>], out: &mut [Cx<T>]) {
        sabra_into(n_min, u, out, T::one());
    }

    /// `Σ_{j<0} k_j³ (2π_{j+1} - π_j/2 - π_{j-1}/4)`, summed over every `j` whose triads
    /// touch the window; terms vanish where the padding is zero.
    fn normalization_rate(&self, field: &ShellField<T>) -> T {
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        let two = T::lit(2.0);
        let mut acc = T::zero();
        for j in (field.n_min() - 2)..0 {
            let kj3 = T::wavenumber(3 * j);
            let term = two * triad_flux(field, j + 1)
                - half * triad_flux(field, j)
                - quarter * triad_flux(field, j - 1);
            acc = acc + kj3 * term;
        }
        acc
    }
}

/// Sabra with the sign of the backward (`k_{n-2}`) term flipped. Breaks energy
/// conservation while keeping homogeneity and scaling covariance; used as a negative
/// control by the verification suite.
#[derive(Clone, Copy, Debug, Default)]
pub struct CorruptedSabra;

impl<T: Real> Nonlinearity<T> for CorruptedSabra {
    fn apply(&self, n_min: i32, u: &[Cx<T>], out: &mut [Cx<T>]) {
        sabra_into(n_min, u, out, -T::one());
    }
}

/// No shell interaction at all; isolates the linear (viscous + forcing) part.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoTransfer;

impl<T: Real> Nonlinearity<T> for NoTransfer {
    fn apply(&self, _n_min: i32, _u: &[Cx<T>], out: &mut [Cx<T>]) {
        out.iter_mut()
            .for_each(|z| *z = Cx::new(T::zero(), T::zero()));
    }
}

/// Physical parameters and run schedule of the forced/viscous model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Reynolds number; `f64::INFINITY` gives the ideal (inviscid) model.
    pub reynolds: f64,
    pub f0: Complex<f64>,
    pub f1: Complex<f64>,
    /// Evolved shells `n = 0..n_shells`; `u_n = 0` above.
    pub n_shells: usize,
    pub dt: f64,
    pub t_end: f64,
    pub t_transient: f64,
    pub record_stride: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale preset.
    fn default() -> Self {
        ModelConfig {
            reynolds: 1e7,
            f0: Complex::new(2.0, 2.0),
            f1: Complex::new(1.0, 1.0),
            n_shells: 28,
            dt: 1e-5,
            t_end: 200.0,
            t_transient: 20.0,
            record_stride: 200,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// High-Reynolds preset: `Re = 2.5e11`, 40 shells, `0 <= t <= 100`.
    pub fn high_reynolds() -> Self {
        ModelConfig {
            reynolds: 2.5e11,
            n_shells: 40,
            dt: 1e-7,
            t_end: 100.0,
            t_transient: 10.0,
            record_stride: 10_000,
            ..ModelConfig::default()
        }
    }

    /// Checks the parameter invariants. `t_transient == t_end` is accepted and yields an
    /// empty recording.
    pub fn validate(&self) -> Result<()> {
        if !(self.reynolds > 0.0) {
            return Err(Error::Config(format!("reynolds must be > 0, got {}", self.reynolds)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be finite and > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_transient >= 0.0 && self.t_transient <= self.t_end) {
            return Err(Error::Config(format!(
                "need 0 <= t_transient <= t_end, got t_transient = {}, t_end = {}",
                self.t_transient, self.t_end
            )));
        }
        if self.record_stride < 1 {
            return Err(Error::Config("record_stride must be >= 1".into()));
        }
        if self.n_shells < 8 {
            return Err(Error::Config(format!("n_shells must be >= 8, got {}", self.n_shells)));
        }
        for (name, f) in [("f0", self.f0), ("f1", self.f1)] {
            if !(f.re.is_finite() && f.im.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// `1/Re`, zero for the ideal model.
    pub fn viscosity(&self) -> f64 {
        1.0 / self.reynolds
    }

    /// Time step suggested by the nonlinear CFL condition at the Kolmogorov scale:
    /// `c / max(1, sqrt(Re), max_n k_n |u_n|)`. The viscous term needs no restriction.
    pub fn suggested_dt<T: Real>(&self, initial: &ShellState<T>, safety: f64) -> f64 {
        let cfl = initial
            .field()
            .iter()
            .map(|(n, z)| f64::wavenumber(n) * z.norm().as_f64())
            .fold(1.0f64, f64::max);
        let kolmogorov = if self.reynolds.is_finite() {
            self.reynolds.sqrt()
        } else {
            1.0
        };
        safety / cfl.max(kolmogorov)
    }
}

/// `B_n` on the whole window, zero-padded. With `n_min = 0` the first two shells get the
/// truncated boundary stencils of the forced model.
pub fn nonlinear_term<T: Real>(state: &ShellState<T>) -> Result<ShellField<T>> {
    nonlinear_term_with(&Sabra, state)
}

pub fn nonlinear_term_with<T: Real, M: Nonlinearity<T>>(
    model: &M,
    state: &ShellState<T>,
) -> Result<ShellField<T>> {
    let f = state.field();
    if f.len() < MIN_WINDOW {
        return Err(Error::Structural(format!(
            "window of {} shells is shorter than the stencil width {MIN_WINDOW}",
            f.len()
        )));
    }
    let mut out = ShellField::zeros(f.n_min(), f.n_max());
    model.apply(f.n_min(), f.values(), out.values_mut());
    Ok(out)
}

/// Forcing vector on the forced-model window starting at shell 0.
pub(crate) fn forcing_vector<T: Real>(cfg: &ModelConfig, len: usize) -> Vec<Cx<T>> {
    let mut f = vec![Cx::new(T::zero(), T::zero()); len];
    if len > 0 {
        f[0] = Cx::new(T::lit(cfg.f0.re), T::lit(cfg.f0.im));
    }
    if len > 1 {
        f[1] = Cx::new(T::lit(cfg.f1.re), T::lit(cfg.f1.im));
    }
    f
}

/// `du_n/dt = B_n - Re⁻¹ k_n² u_n + f_n` on the forced-model window.
pub fn full_rhs<T: Real>(state: &ShellState<T>, cfg: &ModelConfig) -> Result<ShellField<T>> {
    full_rhs_with(&Sabra, state, cfg)
}

pub fn full_rhs_with<T: Real, M: Nonlinearity<T>>(
    model: &M,
    state: &ShellState<T>,
    cfg: &ModelConfig,
) -> Result<ShellField<T>> {
    if state.n_min() != 0 {
        return Err(Error::Structural(format!(
            "forced model is defined on n >= 0, window starts at {}",
            state.n_min()
        )));
    }
    let mut out = nonlinear_term_with(model, state)?;
    let nu = T::lit(cfg.viscosity());
    let forcing = forcing_vector::<T>(cfg, out.len());
    for (i, z) in out.values_mut().iter_mut().enumerate() {
        let k = T::wavenumber(i as i32);
        *z = *z - state.amplitudes()[i] * (nu * k * k) + forcing[i];
    }
    Ok(out)
}

/// Ideal-model tendencies on the interior `[n_min+2, n_max-2]`, where the three-term
/// stencil is complete.
pub fn ideal_rhs<T: Real>(state: &ShellState<T>) -> Result<ShellField<T>> {
    let f = state.field();
    if f.len() < 5 {
        return Err(Error::Structural(format!(
            "ideal stencil needs a window two shells wider than the output on both sides, got {} shells",
            f.len()
        )));
    }
    let full = nonlinear_term(state)?;
    Ok(full.restrict(f.n_min() + 2, f.n_max() - 2))
}

/// `h^a`: `u'_n = u_n / a`.
pub fn time_scale<T: Real>(state: &ShellState<T>, a: T) -> Result<ShellState<T>> {
    if !(a > T::zero()) || !a.is_finite() {
        return Err(Error::Domain(format!("time scaling needs a > 0, got {a}")));
    }
    let inv = a.recip();
    let field = ShellField::new(
        state.n_min(),
        state.amplitudes().iter().map(|&z| z * inv).collect(),
    );
    Ok(ShellState::from_parts(state.t, field, state.is_extended()))
}

/// `g^m`: `u'_n = k_m u_{n+m}`, window shifted to `[n_min-m, n_max-m]`. Reads outside the
/// window are zero, or the materialized dummy tail when the state is extended; the flag is
/// carried over to the result.
pub fn space_scale<T: Real>(state: &ShellState<T>, m: i32) -> ShellState<T> {
    ShellState::from_parts(state.t, state.field().space_scale(m), state.is_extended())
}

/// `Σ |u_n|²` over the window.
pub fn energy<T: Real>(state: &ShellState<T>) -> T {
    state.amplitudes().iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Cx<f64> {
        Cx::new(re, im)
    }

    fn random_state(rng: &mut ChaCha8Rng, n_min: i32, n_max: i32) -> ShellState<f64> {
        let u = (n_min..=n_max)
            .map(|n| {
                let r = f64::wavenumber(n).powf(-1.0 / 3.0) * rng.random_range(0.2..1.5);
                let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Cx::from_polar(r, th)
            })
            .collect();
        ShellState::new(0.0, n_min, u).unwrap()
    }

    /// Literal transcription of the printed stencils, used as an independent check.
    fn printed_b(u: &[Cx<f64>], n: usize) -> Cx<f64> {
        let g = |j: isize| -> Cx<f64> {
            if j < 0 || j as usize >= u.len() {
                c(0.0, 0.0)
            } else {
                u[j as usize]
            }
        };
        let k = |j: isize| 2f64.powi(j as i32);
        let n = n as isize;
        let i = c(0.0, 1.0);
        match n {
            0 => i * k(1) * g(2) * g(1).conj(),
            1 => i * (k(2) * g(3) * g(2).conj() - k(0) * g(2) * g(0).conj()),
            _ => {
                i * (k(n + 1) * g(n + 2) * g(n + 1).conj() - k(n - 1) * g(n + 1) * g(n - 1).conj()
                    + k(n - 2) * g(n - 1) * g(n - 2))
            }
        }
    }

    #[test]
    fn zero_state_has_no_transfer() {
        let s = ShellState::<f64>::zeros(0, 9).unwrap();
        assert!(nonlinear_term(&s).unwrap().values().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_shell_has_no_self_interaction() {
        let mut s = ShellState::<f64>::zeros(0, 9).unwrap();
        s.field_mut().set(5, c(1.0, 0.0));
        assert!(nonlinear_term(&s).unwrap().values().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn three_unit_shells_hand_values() {
        let mut u = vec![c(0.0, 0.0); 8];
        u[0] = c(1.0, 0.0);
        u[1] = c(1.0, 0.0);
        u[2] = c(1.0, 0.0);
        let s = ShellState::from_shells(u).unwrap();
        let b = nonlinear_term(&s).unwrap();
        assert_eq!(b.get(0), c(0.0, 2.0));
        assert_eq!(b.get(1), c(0.0, -1.0));
        assert_eq!(b.get(2), c(0.0, 1.0));
        // k_1 u_2 u_1 reaches shell 3.
        assert_eq!(b.get(3), c(0.0, 2.0));
        assert_eq!(b.get(4), c(0.0, 0.0));
    }

    #[test]
    fn matches_printed_stencils_on_random_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(&mut rng, 0, 11);
        let b = nonlinear_term(&s).unwrap();
        for n in 0..12usize {
            let want = printed_b(s.amplitudes(), n);
            assert_relative_eq!(b.get(n as i32).re, want.re, epsilon = 1e-13, max_relative = 1e-13);
            assert_relative_eq!(b.get(n as i32).im, want.im, epsilon = 1e-13, max_relative = 1e-13);
        }
    }

    #[test]
    fn short_window_is_structural_error() {
        assert!(matches!(
            ShellState::<f64>::new(0.0, 0, vec![c(0.0, 0.0); 3]),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            ShellState::<f64>::new(0.0, 1, vec![c(0.0, 0.0); 5]),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn non_finite_amplitude_rejected() {
        let mut u = vec![c(0.0, 0.0); 5];
        u[2] = c(f64::NAN, 0.0);
        assert!(matches!(ShellState::new(0.0, 0, u), Err(Error::Domain(_))));
    }

    #[test]
    fn forcing_only_rhs() {
        let cfg = ModelConfig {
            n_shells: 8,
            ..ModelConfig::default()
        };
        let s = ShellState::<f64>::zeros(0, 7).unwrap();
        let r = full_rhs(&s, &cfg).unwrap();
        assert_eq!(r.get(0), c(2.0, 2.0));
        assert_eq!(r.get(1), c(1.0, 1.0));
        for n in 2..8 {
            assert_eq!(r.get(n), c(0.0, 0.0));
        }
    }

    #[test]
    fn inviscid_unforced_rhs_is_nonlinear_term() {
        let cfg = ModelConfig {
            reynolds: f64::INFINITY,
            f0: c(0.0, 0.0),
            f1: c(0.0, 0.0),
            ..ModelConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_state(&mut rng, 0, 9);
        assert_eq!(full_rhs(&s, &cfg).unwrap(), nonlinear_term(&s).unwrap());
    }

    #[test]
    fn single_shell_viscous_decay_rate() {
        let cfg = ModelConfig {
            reynolds: 4.0,
            f0: c(0.0, 0.0),
            f1: c(0.0, 0.0),
            ..ModelConfig::default()
        };
        let mut s = ShellState::<f64>::zeros(0, 7).unwrap();
        s.field_mut().set(3, c(1.0, 0.0));
        let r = full_rhs(&s, &cfg).unwrap();
        assert_eq!(r.get(3), c(-16.0, 0.0));
    }

    #[test]
    fn full_rhs_needs_forced_window() {
        let s = ShellState::<f64>::zeros(-2, 7).unwrap();
        assert!(matches!(full_rhs(&s, &ModelConfig::default()), Err(Error::Structural(_))));
    }

    #[test]
    fn ideal_rhs_commutes_with_space_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_state(&mut rng, -6, 8);
        for m in [-2, -1, 1, 2, 3] {
            let lhs = ideal_rhs(&space_scale(&x, m)).unwrap();
            let rhs = ideal_rhs(&x).unwrap().space_scale(m);
            assert_eq!(lhs.n_min(), rhs.n_min());
            for ((_, a), (_, b)) in lhs.iter().zip(rhs.iter()) {
                assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn ideal_rhs_quadratic_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_state(&mut rng, -4, 6);
        for a in [0.5, 2.0, 3.7] {
            let lhs = ideal_rhs(&time_scale(&x, a).unwrap()).unwrap();
            let rhs = ideal_rhs(&x).unwrap();
            for ((_, l), (_, r)) in lhs.iter().zip(rhs.iter()) {
                assert!((l - r / (a * a)).norm() <= 1e-13 * r.norm());
            }
        }
        let z = ShellState::<f64>::zeros(-3, 3).unwrap();
        assert!(ideal_rhs(&z).unwrap().values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn ideal_rhs_needs_wide_window() {
        let s = ShellState::<f64>::zeros(-1, 2).unwrap();
        assert!(matches!(ideal_rhs(&s), Err(Error::Structural(_))));
    }

    #[test]
    fn nonlinearity_conserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (lo, hi) in [(0, 15), (-5, 10), (0, 39)] {
            let x = random_state(&mut rng, lo, hi);
            let b = nonlinear_term(&x).unwrap();
            let flux: f64 = x
                .amplitudes()
                .iter()
                .zip(b.values())
                .map(|(u, b)| (u.conj() * b).re)
                .sum();
            let bound = 1e-12 * energy(&x) * f64::wavenumber(hi);
            assert!(flux.abs() <= bound, "flux {flux} > {bound}");
        }
    }

    #[test]
    fn corrupted_sign_breaks_energy_conservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = random_state(&mut rng, 0, 12);
        let b = nonlinear_term_with(&CorruptedSabra, &x).unwrap();
        let flux: f64 = x
            .amplitudes()
            .iter()
            .zip(b.values())
            .map(|(u, b)| (u.conj() * b).re)
            .sum();
        assert!(flux.abs() > 1e-6);
    }

    #[test]
    fn time_scale_laws() {
        let mut u = vec![c(0.0, 0.0); 6];
        u[0] = c(0.0, 4.0);
        let x = ShellState::from_shells(u).unwrap();
        assert_eq!(time_scale(&x, 1.0).unwrap(), x);
        assert_eq!(time_scale(&x, 2.0).unwrap().get(0), c(0.0, 2.0));
        assert!(matches!(time_scale(&x, 0.0), Err(Error::Domain(_))));
        assert!(matches!(time_scale(&x, -1.0), Err(Error::Domain(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let y = random_state(&mut rng, -3, 5);
        let two_step = time_scale(&time_scale(&y, 1.7).unwrap(), 0.3).unwrap();
        let one_step = time_scale(&y, 1.7 * 0.3).unwrap();
        for (a, b) in two_step.amplitudes().iter().zip(one_step.amplitudes()) {
            assert!((a - b).norm() <= 1e-15 * b.norm());
        }
    }

    #[test]
    fn space_scale_laws() {
        let mut u = vec![c(0.0, 0.0); 8];
        u[3] = c(1.0, 1.0);
        let x = ShellState::from_shells(u).unwrap();
        assert_eq!(space_scale(&x, 0), x);
        let y = space_scale(&x, 1);
        assert_eq!(y.get(2), c(2.0, 2.0));
        assert_eq!(y.n_min(), -1);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let z = random_state(&mut rng, -4, 6);
        for (m1, m2) in [(1, 2), (-3, 1), (2, -2)] {
            assert_eq!(space_scale(&space_scale(&z, m1), m2), space_scale(&z, m1 + m2));
        }
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy(&ShellState::<f64>::zeros(0, 5).unwrap()), 0.0);
        let mut u = vec![c(0.0, 0.0); 5];
        u[0] = c(3.0, 0.0);
        u[1] = c(0.0, 4.0);
        assert_eq!(energy(&ShellState::from_shells(u).unwrap()), 25.0);
    }

    #[test]
    fn sabra_rate_matches_flux_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_state(&mut rng, -6, 6);
        let pi_form = Sabra.normalization_rate(x.field());
        let flux_form = NoOverride.normalization_rate(x.field());
        assert_relative_eq!(pi_form, flux_form, max_relative = 1e-12);

        struct NoOverride;
        impl Nonlinearity<f64> for NoOverride {
            fn apply(&self, n_min: i32, u: &[Cx<f64>], out: &mut [Cx<f64>]) {
                Sabra.apply(n_min, u, out)
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let mut u = vec![Cx::new(0.0f32, 0.0); 8];
        u[0] = Cx::new(1.0, 0.0);
        u[1] = Cx::new(1.0, 0.0);
        u[2] = Cx::new(1.0, 0.0);
        let b = nonlinear_term(&ShellState::from_shells(u).unwrap()).unwrap();
        assert_eq!(b.get(0), Cx::new(0.0, 2.0));
    }
}
