//! Synthetic multiplier data with known statistics.

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::integrator::{Frame, RunInfo, Trajectory};
use crate::perron::MultiplierPair;
use crate::scalar::{Cx, Real};

/// Independent lognormal `σ₀`, `σ₋₁` pairs with log-mean `mu` and log-std `s`.
pub fn lognormal_pairs(n: usize, mu: f64, s: f64, weight: f64, seed: u64) -> Vec<MultiplierPair<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = LogNormal::new(mu, s).expect("finite lognormal parameters");
    (0..n)
        .map(|_| MultiplierPair {
            sigma0: dist.sample(&mut rng),
            sigma_prev: dist.sample(&mut rng),
            scale: 0,
            weight,
        })
        .collect()
}

/// Trajectory whose frame `k` realizes the multipliers `sigmas[k]` exactly: with
/// `a_0 = 1` and `a_{m+1} = σ_m a_m`, shell `m` gets `|u_m| = sqrt(a_{m+1}² - a_m²)/k_m`
/// and a uniform random phase. Every `σ` must be at least 1.
pub fn multiplier_trajectory(sigmas: &[Vec<f64>], stride_dt: f64, seed: u64) -> Trajectory<f64> {
    let n = sigmas.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = sigmas
        .iter()
        .enumerate()
        .map(|(k, row)| {
            assert_eq!(row.len(), n, "every frame needs the same shell count");
            let mut a = 1.0f64;
            let u = row
                .iter()
                .enumerate()
                .map(|(m, &s)| {
                    assert!(s >= 1.0, "multiplier {s} below 1 cannot be realized");
                    let next = a * s;
                    let mag = (next * next - a * a).sqrt() / f64::wavenumber(m as i32);
                    a = next;
                    Cx::from_polar(mag, rng.random_range(0.0..std::f64::consts::TAU))
                })
                .collect();
            Frame {
                t: k as f64 * stride_dt,
                u,
            }
        })
        .collect();
    Trajectory {
        info: RunInfo {
            n_shells: n,
            stride_dt,
            reynolds: f64::INFINITY,
            f0: Cx::new(0.0, 0.0),
            f1: Cx::new(0.0, 0.0),
            seed,
        },
        frames,
    }
}

/// [`multiplier_trajectory`] with i.i.d. lognormal multipliers; draws below 1 are redrawn,
/// which for `mu/s` above about 4 changes the moments negligibly.
pub fn lognormal_trajectory(
    frames: usize,
    n_shells: usize,
    mu: f64,
    s: f64,
    stride_dt: f64,
    seed: u64,
) -> Trajectory<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let dist = LogNormal::new(mu, s).expect("finite lognormal parameters");
    let sigmas: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            (0..n_shells)
                .map(|_| loop {
                    let x = dist.sample(&mut rng);
                    if x >= 1.0 {
                        break x;
                    }
                })
                .collect()
        })
        .collect();
    multiplier_trajectory(&sigmas, stride_dt, seed)
}

/// Ensemble of fixed points of `g∘h^a` up to phases: `u_n = ξ (a/2)^n e^{iφ_n}` with a
/// random magnitude `ξ` per frame and random phases per shell. Structure functions scale
/// exactly as `k_n^{-p(1 - log₂ a)}`.
pub fn self_similar_ensemble(frames: usize, n_shells: usize, a: f64, seed: u64) -> Trajectory<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = a / 2.0;
    let frames = (0..frames)
        .map(|k| {
            let xi: f64 = rng.random_range(0.2..2.0);
            let u = (0..n_shells)
                .map(|n| Cx::from_polar(xi * ratio.powi(n as i32), rng.random_range(0.0..std::f64::consts::TAU)))
                .collect();
            Frame { t: k as f64, u }
        })
        .collect();
    Trajectory {
        info: RunInfo {
            n_shells,
            stride_dt: 1.0,
            reynolds: f64::INFINITY,
            f0: Cx::new(0.0, 0.0),
            f1: Cx::new(0.0, 0.0),
            seed,
        },
        frames,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::scale_amplitudes;
    use approx::assert_relative_eq;

    #[test]
    fn multipliers_are_realized() {
        let sig = vec![vec![1.3, 1.0, 2.2, 1.7], vec![1.1, 1.9, 1.05, 1.4]];
        let t = multiplier_trajectory(&sig, 0.5, 3);
        for (f, row) in t.frames.iter().zip(&sig) {
            let a = scale_amplitudes(&f.u, 4);
            for m in 0..4 {
                assert_relative_eq!(a[m + 1] / a[m], row[m], max_relative = 1e-13);
            }
        }
        assert_eq!(t.frames[1].t, 0.5);
    }

    #[test]
    fn self_similar_frames_are_fixed_points() {
        let a = 2f64.powf(2.0 / 3.0);
        let t = self_similar_ensemble(3, 12, a, 4);
        for f in &t.frames {
            let x = crate::shell::ShellState::from_shells(f.u.clone()).unwrap();
            let y = crate::shell::space_scale(&crate::shell::time_scale(&x, a).unwrap(), 1);
            for n in 0..11 {
                assert_relative_eq!(y.get(n).norm(), x.get(n).norm(), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn lognormal_pairs_moments() {
        let p = lognormal_pairs(200_000, 0.3, 0.2, 1.0, 1);
        let mean_log = p.iter().map(|x| x.sigma0.ln()).sum::<f64>() / p.len() as f64;
        assert!((mean_log - 0.3).abs() < 3e-3);
        assert!(p.iter().all(|x| x.sigma0 > 0.0 && x.weight == 1.0));
    }

    #[test]
    fn lognormal_trajectory_stays_above_one() {
        let t = lognormal_trajectory(50, 10, 0.47, 0.1, 0.01, 9);
        assert_eq!(t.n_shells(), 10);
        for f in &t.frames {
            let a = scale_amplitudes(&f.u, 10);
            assert!(a.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
