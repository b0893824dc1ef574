//! Integrating-factor Runge–Kutta time stepping of the forced/viscous model and
//! decimated trajectory recording.
//!
//! The viscous term is linear and diagonal, so `v_n = u_n exp(k_n² t / Re)` removes it
//! exactly; the remaining nonlinear + forcing part is advanced with classical RK4
//! (Lawson's scheme). Stability is then governed by the nonlinear CFL number only.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format;
use crate::scalar::{Cx, Real};
use crate::shell::{forcing_vector, ModelConfig, Nonlinearity, Sabra, ShellField, ShellState};

/// Amplitudes above this abort the run.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// One recorded sample of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    pub t: T,
    /// Shells `0..n_shells`.
    pub u: Vec<Cx<T>>,
}

impl<T: Real> Frame<T> {
    pub fn to_state(&self) -> ShellState<T> {
        ShellState::from_parts(self.t, ShellField::new(0, self.u.clone()), false)
    }
}

/// Run parameters stored alongside a trajectory (the binary header).
#[derive(Clone, Debug, PartialEq)]
pub struct RunInfo {
    pub n_shells: usize,
    pub stride_dt: f64,
    pub reynolds: f64,
    pub f0: Cx<f64>,
    pub f1: Cx<f64>,
    pub seed: u64,
}

impl RunInfo {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        RunInfo {
            n_shells: cfg.n_shells,
            stride_dt: cfg.dt * cfg.record_stride as f64,
            reynolds: cfg.reynolds,
            f0: cfg.f0,
            f1: cfg.f1,
            seed: cfg.seed,
        }
    }
}

/// Decimated samples of the flow `Φ^t`, uniformly spaced by `stride_dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub info: RunInfo,
    pub frames: Vec<Frame<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn n_shells(&self) -> usize {
        self.info.n_shells
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn stride_dt(&self) -> T {
        T::lit(self.info.stride_dt)
    }

    /// Checks time ordering, uniform spacing and a constant amplitude count.
    pub fn check(&self) -> Result<()> {
        let n = self.info.n_shells;
        if let Some((i, _)) = self.frames.iter().enumerate().find(|(_, f)| f.u.len() != n) {
            return Err(Error::Structural(format!(
                "frame {i} carries {} shells, expected {n}",
                self.frames[i].u.len()
            )));
        }
        for w in self.frames.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Structural(format!(
                    "frame times not increasing: {} then {}",
                    w[0].t, w[1].t
                )));
            }
        }
        Ok(())
    }

    /// Writes the binary trajectory file.
    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_trajectory(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        format::read_trajectory(path)
    }

    /// Time averages `⟨|u_n|²⟩` per shell.
    pub fn spectrum(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.info.n_shells];
        for f in &self.frames {
            for (a, z) in acc.iter_mut().zip(&f.u) {
                *a = *a + z.norm_sqr();
            }
        }
        let count = T::lit(self.frames.len().max(1) as f64);
        acc.into_iter().map(|a| a / count).collect()
    }

    /// Total energy `Σ|u_n|²` per frame.
    pub fn energy_series(&self) -> Vec<T> {
        self.frames
            .iter()
            .map(|f| f.u.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }
}

/// Integration clock: the state time is always `step * dt` from the run origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clock {
    pub step: u64,
    pub dt: f64,
}

/// Lawson IF-RK4 stepper with preallocated work buffers.
pub struct Integrator<T, M = Sabra> {
    model: M,
    dt: T,
    e_full: Vec<T>,
    e_half: Vec<T>,
    forcing: Vec<Cx<T>>,
    a: Vec<Cx<T>>,
    b: Vec<Cx<T>>,
    c: Vec<Cx<T>>,
    d: Vec<Cx<T>>,
    stage: Vec<Cx<T>>,
}

impl<T: Real> Integrator<T, Sabra> {
    pub fn new(cfg: &ModelConfig, dt: f64) -> Result<Self> {
        Self::with_model(Sabra, cfg, dt)
    }
}

impl<T: Real, M: Nonlinearity<T>> Integrator<T, M> {
    pub fn with_model(model: M, cfg: &ModelConfig, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step must be > 0, got {dt}")));
        }
        let n = cfg.n_shells;
        let nu = cfg.viscosity();
        let decay = |frac: f64| -> Vec<T> {
            (0..n)
                .map(|i| {
                    let k = f64::wavenumber(i as i32);
                    T::lit((-nu * k * k * dt * frac).exp())
                })
                .collect()
        };
        let zero = vec![Cx::new(T::zero(), T::zero()); n];
        Ok(Integrator {
            model,
            dt: T::lit(dt),
            e_full: decay(1.0),
            e_half: decay(0.5),
            forcing: forcing_vector(cfg, n),
            a: zero.clone(),
            b: zero.clone(),
            c: zero.clone(),
            d: zero.clone(),
            stage: zero,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    fn tendency(model: &M, forcing: &[Cx<T>], u: &[Cx<T>], out: &mut [Cx<T>]) {
        model.apply(0, u, out);
        for (o, f) in out.iter_mut().zip(forcing) {
            *o = *o + *f;
        }
    }

    /// Advances the amplitudes `u` (shells `0..n`) by one step in place.
    pub fn advance(&mut self, u: &mut [Cx<T>]) {
        assert_eq!(u.len(), self.e_full.len(), "state size does not match configuration");
        let dt = self.dt;
        let half = dt * T::lit(0.5);
        let two = T::lit(2.0);
        let sixth = dt / T::lit(6.0);

        Self::tendency(&self.model, &self.forcing, u, &mut self.a);
        for i in 0..u.len() {
            self.stage[i] = (u[i] + self.a[i] * half) * self.e_half[i];
        }
        Self::tendency(&self.model, &self.forcing, &self.stage, &mut self.b);
        for i in 0..u.len() {
            self.stage[i] = u[i] * self.e_half[i] + self.b[i] * half;
        }
        Self::tendency(&self.model, &self.forcing, &self.stage, &mut self.c);
        for i in 0..u.len() {
            self.stage[i] = u[i] * self.e_full[i] + self.c[i] * (dt * self.e_half[i]);
        }
        Self::tendency(&self.model, &self.forcing, &self.stage, &mut self.d);
        for i in 0..u.len() {
            let (ef, eh) = (self.e_full[i], self.e_half[i]);
            u[i] = u[i] * ef + (self.a[i] * ef + (self.b[i] + self.c[i]) * (two * eh) + self.d[i]) * sixth;
        }
    }
}

fn check_finite<T: Real>(t: f64, u: &[Cx<T>]) -> Result<()> {
    let mut max_abs = 0.0f64;
    let mut finite = true;
    for z in u {
        let a = z.norm().as_f64();
        if !a.is_finite() {
            finite = false;
        }
        max_abs = max_abs.max(a);
    }
    if !finite || max_abs > BLOWUP_THRESHOLD {
        return Err(Error::BlowUp {
            t,
            max_abs: if finite { max_abs } else { f64::INFINITY },
            frame: u.iter().map(|z| (z.re.as_f64(), z.im.as_f64())).collect(),
        });
    }
    Ok(())
}

/// One integrating-factor RK4 step of size `dt` for the Sabra model.
pub fn step<T: Real>(state: &ShellState<T>, cfg: &ModelConfig, dt: f64) -> Result<ShellState<T>> {
    step_with(Sabra, state, cfg, dt)
}

/// [`step`] with an arbitrary nonlinearity (test hook).
pub fn step_with<T: Real, M: Nonlinearity<T>>(
    model: M,
    state: &ShellState<T>,
    cfg: &ModelConfig,
    dt: f64,
) -> Result<ShellState<T>> {
    if state.n_min() != 0 || state.amplitudes().len() != cfg.n_shells {
        return Err(Error::Structural(format!(
            "state window [{}, {}] does not match the {} configured shells",
            state.n_min(),
            state.n_max(),
            cfg.n_shells
        )));
    }
    let mut integ = Integrator::with_model(model, cfg, dt)?;
    let mut next = state.clone();
    integ.advance(next.amplitudes_mut());
    next.t = state.t + T::lit(dt);
    check_finite(next.t.as_f64(), next.amplitudes())?;
    Ok(next)
}

/// Seeded random initial condition: `|u_n| = 10⁻² k_n^{-1/3}` with uniform phases.
pub fn initial_state<T: Real>(cfg: &ModelConfig) -> ShellState<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u = (0..cfg.n_shells)
        .map(|n| {
            let r = 1e-2 * f64::wavenumber(n as i32).powf(-1.0 / 3.0);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let z = Cx::from_polar(r, phase);
            Cx::new(T::lit(z.re), T::lit(z.im))
        })
        .collect();
    ShellState::from_parts(T::zero(), ShellField::new(0, u), false)
}

/// Integrates `state` (at clock `clock`) for `steps` steps, calling `record` after every
/// step with the new clock.
pub fn integrate<T: Real, M: Nonlinearity<T>>(
    integ: &mut Integrator<T, M>,
    state: &mut ShellState<T>,
    clock: &mut Clock,
    steps: u64,
    mut record: impl FnMut(&Clock, &ShellState<T>),
) -> Result<()> {
    for _ in 0..steps {
        integ.advance(state.amplitudes_mut());
        clock.step += 1;
        let t = clock.step as f64 * clock.dt;
        state.t = T::lit(t);
        check_finite(t, state.amplitudes())?;
        record(clock, state);
    }
    Ok(())
}

/// Integrates the forced model from the seeded initial condition to `t_end`, keeping every
/// `record_stride`-th step with `t >= t_transient`.
pub fn run<T: Real>(cfg: &ModelConfig) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let mut traj = Trajectory {
        info: RunInfo::from_config(cfg),
        frames: Vec::new(),
    };
    if cfg.t_end <= cfg.t_transient {
        return Ok(traj);
    }
    let total = (cfg.t_end / cfg.dt).round() as u64;
    let stride = cfg.record_stride as u64;
    let mut state = initial_state::<T>(cfg);
    let mut clock = Clock { step: 0, dt: cfg.dt };
    let mut integ = Integrator::new(cfg, cfg.dt)?;
    let keep = |c: &Clock| c.step.is_multiple_of(stride) && c.step as f64 * c.dt >= cfg.t_transient;
    if keep(&clock) {
        traj.frames.push(Frame {
            t: state.t,
            u: state.amplitudes().to_vec(),
        });
    }
    integrate(&mut integ, &mut state, &mut clock, total, |c, s| {
        if keep(c) {
            traj.frames.push(Frame {
                t: s.t,
                u: s.amplitudes().to_vec(),
            });
        }
    })?;
    Ok(traj)
}

/// [`run`] followed by writing the trajectory file.
pub fn run_to_file<T: Real>(cfg: &ModelConfig, path: &Path) -> Result<Trajectory<T>> {
    let traj = run(cfg)?;
    traj.save(path)?;
    Ok(traj)
}

/// Saves a full-precision state plus integration clock.
pub fn checkpoint<T: Real>(state: &ShellState<T>, clock: &Clock, cfg: &ModelConfig, path: &Path) -> Result<()> {
    format::write_checkpoint(path, &RunInfo::from_config(cfg), state, clock)
}

/// Restores a state written by [`checkpoint`].
pub fn resume<T: Real>(path: &Path) -> Result<(ShellState<T>, Clock, RunInfo)> {
    format::read_checkpoint(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shell::{energy, NoTransfer};

    fn ideal_cfg(n: usize) -> ModelConfig {
        ModelConfig {
            reynolds: f64::INFINITY,
            f0: Cx::new(0.0, 0.0),
            f1: Cx::new(0.0, 0.0),
            n_shells: n,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn linear_part_is_exact() {
        let cfg = ModelConfig {
            reynolds: 50.0,
            f0: Cx::new(0.0, 0.0),
            f1: Cx::new(0.0, 0.0),
            n_shells: 8,
            ..ModelConfig::default()
        };
        let mut u = vec![Cx::new(0.0, 0.0); 8];
        u[3] = Cx::new(1.0, 0.0);
        let s = ShellState::<f64>::from_shells(u).unwrap();
        let dt = 0.013;
        let next = step_with(NoTransfer, &s, &cfg, dt).unwrap();
        let want = (-64.0 * dt / 50.0f64).exp();
        assert!((next.get(3).re - want).abs() <= 2.0 * f64::EPSILON);
        assert_eq!(next.get(3).im, 0.0);
    }

    #[test]
    fn energy_drift_of_ideal_run() {
        let cfg = ideal_cfg(10);
        let mut s = initial_state::<f64>(&ModelConfig { seed: 9, ..cfg.clone() });
        s.amplitudes_mut().iter_mut().for_each(|z| *z *= 50.0);
        let e0 = energy(&s);
        let mut integ = Integrator::new(&cfg, 1e-4).unwrap();
        for _ in 0..10_000 {
            integ.advance(s.amplitudes_mut());
        }
        let drift = ((energy(&s) - e0) / e0).abs();
        assert!(drift < 1e-8, "relative drift {drift}");
    }

    #[test]
    fn blow_up_is_reported() {
        let cfg = ideal_cfg(8);
        let mut s = initial_state::<f64>(&cfg);
        s.amplitudes_mut().iter_mut().for_each(|z| *z *= 1e13);
        match step(&s, &cfg, 1e-3) {
            Err(Error::BlowUp { max_abs, frame, .. }) => {
                assert!(max_abs > BLOWUP_THRESHOLD);
                assert_eq!(frame.len(), 8);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_horizon_gives_empty_trajectory() {
        let cfg = ModelConfig {
            n_shells: 10,
            reynolds: 1e4,
            t_end: 1.0,
            t_transient: 1.0,
            dt: 1e-3,
            ..ModelConfig::default()
        };
        let traj = run::<f64>(&cfg).unwrap();
        assert!(traj.frames.is_empty());
    }

    #[test]
    fn recording_schedule() {
        let cfg = ModelConfig {
            n_shells: 10,
            reynolds: 1e4,
            t_end: 1.0,
            t_transient: 0.5,
            dt: 1e-3,
            record_stride: 10,
            ..ModelConfig::default()
        };
        let traj = run::<f64>(&cfg).unwrap();
        traj.check().unwrap();
        assert_eq!(traj.frames.len(), 51);
        assert_eq!(traj.frames[0].t, 0.5);
        assert_eq!(traj.frames.last().unwrap().t, 1.0);
        for w in traj.frames.windows(2) {
            let gap = w[1].t - w[0].t;
            assert!((gap - 0.01).abs() <= 2.0 * f64::EPSILON);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ModelConfig {
            n_shells: 12,
            reynolds: 1e5,
            t_end: 0.5,
            t_transient: 0.0,
            dt: 1e-3,
            record_stride: 5,
            seed: 77,
            ..ModelConfig::default()
        };
        let a = run::<f64>(&cfg).unwrap();
        let b = run::<f64>(&cfg).unwrap();
        assert_eq!(a, b);
        let c = run::<f64>(&ModelConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a.frames[1].u, c.frames[1].u);
    }

    #[test]
    fn high_reynolds_configuration_runs() {
        let cfg = ModelConfig::high_reynolds();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_shells, 40);
        assert_eq!(cfg.reynolds, 2.5e11);
        assert_eq!(cfg.f0, cfg.f1 * 2.0);
        assert_eq!(cfg.f1, Cx::new(1.0, 1.0));
        // The full horizon takes ~10⁹ steps; check the configuration integrates cleanly.
        let mut state = initial_state::<f64>(&cfg);
        let mut clock = Clock { step: 0, dt: cfg.dt };
        let mut integ = Integrator::new(&cfg, cfg.dt).unwrap();
        integrate(&mut integ, &mut state, &mut clock, 20_000, |_, _| {}).unwrap();
        assert_eq!(clock.step, 20_000);
    }
}
