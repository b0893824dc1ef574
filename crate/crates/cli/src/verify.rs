//! Invariant suite run on generated data. Every check is parameterized by the transfer
//! term so a deliberately broken model can be pushed through the same gates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use hsym_core::integrator::{integrate, Clock, Frame, Integrator, RunInfo, Trajectory};
use hsym_core::normalize::{
    amplitude, amplitude_at_scale, extend_dummy, multiplier_sigma, normalized_field_rhs, project, rescaled_frame,
};
use hsym_core::perron::{build_transfer, estimate_density, SigmaGrid};
use hsym_core::shell::{nonlinear_term_with, space_scale, time_scale, ModelConfig, Nonlinearity, ShellField, ShellState};
use hsym_core::stats::structure_function;
use hsym_core::synthetic::lognormal_pairs;
use hsym_core::Cx;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub passed: bool,
    pub failed: Vec<&'static str>,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}

fn below(name: &'static str, value: f64, tolerance: f64, detail: String) -> Check {
    Check {
        name,
        passed: value < tolerance,
        value,
        tolerance,
        detail,
    }
}

type V = Vec<Cx<f64>>;

fn random_shells(rng: &mut ChaCha8Rng, n: usize) -> V {
    (0..n)
        .map(|i| {
            Cx::from_polar(
                2f64.powf(-(i as f64) / 3.0) * rng.random_range(0.2..1.5),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect()
}

fn transfer<M: Nonlinearity<f64>>(model: &M, n_min: i32, u: &[Cx<f64>]) -> V {
    let s = ShellState::new(0.0, n_min, u.to_vec()).expect("valid window");
    nonlinear_term_with(model, &s).expect("window wide enough").into_values()
}

fn energy_conservation<M: Nonlinearity<f64>>(model: &M, rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let n_min = if trial % 2 == 0 { 0 } else { -4 };
        let u = random_shells(rng, 14);
        let b = transfer(model, n_min, &u);
        let (mut sum, mut scale) = (0.0, 0.0);
        for (z, bz) in u.iter().zip(&b) {
            let p = z.conj() * bz;
            sum += p.re;
            scale += p.norm();
        }
        worst = worst.max(sum.abs() / scale);
    }
    below(
        "energy_conservation",
        worst,
        1e-12,
        "max |Σ Re(conj(u_n) B_n)| / Σ |conj(u_n) B_n| over 100 random states".into(),
    )
}

fn quadratic_homogeneity<M: Nonlinearity<f64>>(model: &M, rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let u = random_shells(rng, 12);
        let c: f64 = rng.random_range(-3.0..3.0);
        let b = transfer(model, 0, &u);
        let bc = transfer(model, 0, &u.iter().map(|z| z * c).collect::<V>());
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max) * c * c;
        for (x, y) in b.iter().zip(&bc) {
            worst = worst.max((x * (c * c) - y).norm() / scale);
        }
    }
    below("quadratic_homogeneity", worst, 1e-12, "max |B(cu) - c²B(u)| / |c²B(u)|".into())
}

fn space_scaling_commutation<M: Nonlinearity<f64>>(model: &M, rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for m in -3..=3 {
        let x = ShellState::new(0.0, -8, random_shells(rng, 16)).unwrap();
        let interior = |s: &ShellState<f64>| {
            let f = nonlinear_term_with(model, s).unwrap();
            f.restrict(f.n_min() + 2, f.n_max() - 2)
        };
        let lhs = interior(&space_scale(&x, m));
        let rhs = interior(&x).space_scale(m);
        let scale = lhs.max_abs();
        for n in lhs.n_min()..=lhs.n_max() {
            worst = worst.max((lhs.get(n) - rhs.get(n)).norm() / scale);
        }
    }
    below(
        "space_scaling_commutation",
        worst,
        1e-12,
        "ideal tendencies of g^m(x) vs g^m of tendencies, m = -3..3".into(),
    )
}

fn projector_laws(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let (mut idem, mut hinv, mut sig, mut amp) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let x = extend_dummy(&ShellState::from_shells(random_shells(rng, 12)).unwrap()).unwrap();
        let a: f64 = rng.random_range(0.05..20.0);
        let xa = time_scale(&x, a).unwrap();
        let p = project(&x).unwrap();
        let pp = project(&p).unwrap();
        let pa = project(&xa).unwrap();
        for n in p.n_min()..=p.n_max() {
            let scale = p.get(n).norm().max(1e-3);
            idem = idem.max((pp.get(n) - p.get(n)).norm() / scale);
            hinv = hinv.max((pa.get(n) - p.get(n)).norm() / scale);
        }
        for n in 0..10 {
            let s = multiplier_sigma(&x, n).unwrap();
            sig = sig.max((s - multiplier_sigma(&xa, n).unwrap()).abs() / s);
        }
        for m in 0..11 {
            let direct = amplitude_at_scale(&x, m).unwrap();
            amp = amp.max((direct - amplitude(&space_scale(&x, m))).abs() / direct);
        }
    }
    vec![
        below("projector_idempotence", idem, 1e-12, "max |P(P(x)) - P(x)|".into()),
        below("projector_time_invariance", hinv, 1e-12, "max |P(h^a x) - P(x)|".into()),
        below("multiplier_time_invariance", sig, 1e-12, "max |σ_n(h^a x) - σ_n(x)| / σ_n".into()),
        below(
            "scale_amplitude_identity",
            amp,
            1e-12,
            "A(g^m x) against the direct partial sum".into(),
        ),
    ]
}

fn rescaled_identities(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let traj = Trajectory {
        info: RunInfo {
            n_shells: 16,
            stride_dt: 0.01,
            reynolds: 1e6,
            f0: Cx::new(2.0, 2.0),
            f1: Cx::new(1.0, 1.0),
            seed: 0,
        },
        frames: (0..40)
            .map(|k| Frame {
                t: 0.01 * k as f64,
                u: random_shells(rng, 16),
            })
            .collect(),
    };
    let (mut ident, mut constraint) = (0.0f64, 0.0f64);
    for m in 0..=12 {
        let fr = rescaled_frame(&traj, m, (-m - 1, 2)).unwrap();
        for (k, f) in traj.frames.iter().enumerate() {
            constraint = constraint.max((fr.constraint_sum(k).unwrap() - 1.0).abs());
            let lhs = f.u[m as usize + 1] / f.u[m as usize];
            let rhs = fr.get(k, 1) / fr.get(k, 0);
            ident = ident.max((lhs - rhs).norm() / lhs.norm());
        }
    }
    vec![
        below(
            "multiplier_identity",
            ident,
            1e-12,
            "u_(m+1)/u_m against U_1/U_0 of the rescaled frame, m = 0..12".into(),
        ),
        below(
            "rescaled_constraint",
            constraint,
            1e-12,
            "|Σ_(n<0) k_n²|U_n^(m)|² - 1| at every sample".into(),
        ),
    ]
}

fn constraint_preservation<M: Nonlinearity<f64>>(model: &M, rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = ShellState::new(0.0, -6, random_shells(rng, 13)).unwrap();
        let u = project(&x).unwrap();
        let du = normalized_field_rhs(model, u.field());
        let rate: f64 = (u.n_min()..0)
            .map(|n| {
                let k2 = 4f64.powi(n);
                2.0 * k2 * (u.get(n).conj() * du.get(n)).re
            })
            .sum();
        let scale: f64 = (u.n_min()..0)
            .map(|n| 4f64.powi(n) * (u.get(n).conj() * du.get(n)).norm())
            .sum();
        worst = worst.max(rate.abs() / scale.max(1.0));
    }
    below(
        "constraint_preservation",
        worst,
        1e-10,
        "d/dτ Σ_(n<0) k_n²|U_n|² under the normalized equations".into(),
    )
}

/// Largest componentwise gap between the normalized system integrated in `τ` and the
/// projected, time-synchronized original ideal system, over `τ ∈ [0, tau_end]`.
pub fn oracle_error<M: Nonlinearity<f64>>(model: &M, seed: u64, window: (i32, i32), dt: f64, tau_end: f64) -> f64 {
    let (lo, hi) = window;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k2 = |n: i32| 4f64.powi(n);
    let amp2 = |u: &[Cx<f64>]| -> f64 {
        u.iter()
            .enumerate()
            .filter(|(i, _)| lo + (*i as i32) < 0)
            .map(|(i, z)| k2(lo + i as i32) * z.norm_sqr())
            .sum()
    };
    let axpy = |u: &[Cx<f64>], h: f64, d: &[Cx<f64>]| -> V { u.iter().zip(d).map(|(a, b)| a + b * h).collect() };
    let rk4 = |u: &[Cx<f64>], h: f64, f: &dyn Fn(&[Cx<f64>]) -> V| -> V {
        let a = f(u);
        let b = f(&axpy(u, h / 2.0, &a));
        let c = f(&axpy(u, h / 2.0, &b));
        let d = f(&axpy(u, h, &c));
        u.iter()
            .enumerate()
            .map(|(i, z)| z + (a[i] + (b[i] + c[i]) * 2.0 + d[i]) * (h / 6.0))
            .collect()
    };
    let x0: V = (lo..=hi)
        .map(|n| {
            Cx::from_polar(
                2f64.powf(-(n as f64) / 3.0) * rng.random_range(0.5..1.5),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let len = x0.len();

    // Original system in t with τ' = A(x) carried as an extra component.
    let aug = |v: &[Cx<f64>]| -> V {
        let mut d = transfer(model, lo, &v[..len]);
        d.push(Cx::new(amp2(&v[..len]).sqrt(), 0.0));
        d
    };
    let mut xs = vec![x0.clone()];
    let mut taus = vec![0.0];
    let mut v = x0.clone();
    v.push(Cx::new(0.0, 0.0));
    while *taus.last().unwrap() < tau_end + 10.0 * dt {
        v = rk4(&v, dt, &aug);
        xs.push(v[..len].to_vec());
        taus.push(v[len].re);
    }
    // dU/dτ along the projected original trajectory, by the chain rule.
    let derivative = |x: &[Cx<f64>]| -> V {
        let xd = transfer(model, lo, x);
        let a = amp2(x).sqrt();
        let ad = (0..len)
            .filter(|i| lo + (*i as i32) < 0)
            .map(|i| k2(lo + i as i32) * (x[i].conj() * xd[i]).re)
            .sum::<f64>()
            / a;
        x.iter().zip(&xd).map(|(z, dz)| (dz / a - z * (ad / (a * a))) / a).collect()
    };

    let a0 = amp2(&x0).sqrt();
    let mut u: V = x0.iter().map(|z| z / a0).collect();
    let norm = |u: &[Cx<f64>]| -> V { normalized_field_rhs(model, &ShellField::new(lo, u.to_vec())).into_values() };
    let steps = (tau_end / dt).round() as usize;
    let mut worst = 0.0f64;
    let mut j = 0;
    for s in 0..=steps {
        let tau = s as f64 * dt;
        if s > 0 {
            u = rk4(&u, dt, &norm);
        }
        while taus[j + 1] < tau {
            j += 1;
        }
        let h = taus[j + 1] - taus[j];
        let f = (tau - taus[j]) / h;
        let (ya, yb) = (&xs[j], &xs[j + 1]);
        let (aa, ab) = (amp2(ya).sqrt(), amp2(yb).sqrt());
        let (da, db) = (derivative(ya), derivative(yb));
        let (f2, f3) = (f * f, f * f * f);
        for n in (lo + 2)..=(hi - 2) {
            let i = (n - lo) as usize;
            let oracle = ya[i] / aa * (2.0 * f3 - 3.0 * f2 + 1.0)
                + da[i] * (h * (f3 - 2.0 * f2 + f))
                + yb[i] / ab * (-2.0 * f3 + 3.0 * f2)
                + db[i] * (h * (f3 - f2));
            worst = worst.max((oracle - u[i]).norm());
        }
    }
    worst
}

/// Error ratios of successive step halvings on a smooth ideal 8-shell problem over
/// `0 <= t <= t_end`, measured against a run with 8× finer steps than the finest tested.
pub fn richardson_ratios<M: Nonlinearity<f64> + Clone>(model: &M, t_end: f64) -> hsym_core::Result<Vec<f64>> {
    let n = 8;
    let cfg = ModelConfig {
        reynolds: f64::INFINITY,
        f0: Cx::new(0.0, 0.0),
        f1: Cx::new(0.0, 0.0),
        n_shells: n,
        ..ModelConfig::default()
    };
    let start: V = (0..n)
        .map(|i| Cx::from_polar(0.5 * 2f64.powf(-(i as f64) / 3.0), 0.7 * i as f64 + 0.3))
        .collect();
    let solve = |steps: u64| -> hsym_core::Result<V> {
        let dt = t_end / steps as f64;
        let mut s = ShellState::from_shells(start.clone()).unwrap();
        let mut clock = Clock { step: 0, dt };
        let mut integ = Integrator::with_model(model.clone(), &cfg, dt)?;
        integrate(&mut integ, &mut s, &mut clock, steps, |_, _| {})?;
        Ok(s.amplitudes().to_vec())
    };
    let base = 25u64;
    let reference = solve(base * 64)?;
    let errors = (0..4)
        .map(|j| {
            Ok(solve(base << j)?
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max))
        })
        .collect::<hsym_core::Result<Vec<f64>>>()?;
    Ok(errors.windows(2).map(|w| w[0] / w[1]).collect())
}

fn order_zero(seed: u64) -> Check {
    let pairs = lognormal_pairs(20_000, 0.45, 0.3, 0.5, seed);
    let mut worst = 0.0f64;
    for depth in [0, 1] {
        let rho = estimate_density(&pairs, &SigmaGrid::default(), depth).unwrap();
        let r = build_transfer(&rho, 0.0).solve(1e-14, 1000).unwrap_or(f64::NAN);
        worst = worst.max((r - 1.0).abs());
    }
    let traj = hsym_core::synthetic::lognormal_trajectory(20, 8, 0.47, 0.1, 0.1, seed);
    for n in 0..8 {
        worst = worst.max((structure_function(&traj, 0.0, n).unwrap() - 1.0).abs());
    }
    if worst.is_nan() {
        worst = f64::INFINITY;
    }
    below(
        "order_zero",
        worst,
        1e-8,
        "|R_0 - 1| for memory depths 0 and 1, and |S_0 - 1|".into(),
    )
}

const RICHARDSON_T_END: f64 = 0.25;

/// Runs every check on data drawn from `seed`.
pub fn run_suite<M: Nonlinearity<f64> + Clone>(model: &M, seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![
        energy_conservation(model, &mut rng),
        quadratic_homogeneity(model, &mut rng),
        space_scaling_commutation(model, &mut rng),
    ];
    checks.extend(projector_laws(&mut rng));
    checks.extend(rescaled_identities(&mut rng));
    checks.push(constraint_preservation(model, &mut rng));
    checks.push(below(
        "oracle_equivalence",
        oracle_error(model, seed, (-6, 6), 1e-4, 0.5),
        1e-5,
        "normalized equations vs projected ideal run, window -6..6, dt = 1e-4, τ ≤ 0.5".into(),
    ));
    let ratios = richardson_ratios(model, RICHARDSON_T_END).unwrap_or_default();
    let spread = ratios.iter().map(|r| (r - 16.0).abs()).fold(0.0, f64::max);
    checks.push(Check {
        name: "integrator_order",
        passed: !ratios.is_empty() && ratios.iter().all(|r| (12.0..=20.0).contains(r)),
        value: if ratios.is_empty() { f64::INFINITY } else { spread },
        tolerance: 4.0,
        detail: format!(
            "step-halving error ratios {}",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    });
    checks.push(order_zero(seed));
    let failed = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect::<Vec<_>>();
    Verdict {
        passed: failed.is_empty(),
        failed,
        checks,
    }
}
