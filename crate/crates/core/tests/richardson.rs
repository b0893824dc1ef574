use hsym_core::integrator::{integrate, Clock, Integrator};
use hsym_core::shell::{ModelConfig, ShellState};
use hsym_core::Cx;

fn ideal(n: usize) -> ModelConfig {
    ModelConfig {
        reynolds: f64::INFINITY,
        f0: Cx::new(0.0, 0.0),
        f1: Cx::new(0.0, 0.0),
        n_shells: n,
        ..ModelConfig::default()
    }
}

fn start(n: usize) -> ShellState<f64> {
    let u = (0..n)
        .map(|i| Cx::from_polar(0.5 * 2f64.powf(-(i as f64) / 3.0), 0.7 * i as f64 + 0.3))
        .collect();
    ShellState::from_shells(u).unwrap()
}

fn solve(n: usize, t_end: f64, steps: u64) -> Vec<Cx<f64>> {
    let cfg = ideal(n);
    let dt = t_end / steps as f64;
    let mut s = start(n);
    let mut clock = Clock { step: 0, dt };
    let mut integ = Integrator::new(&cfg, dt).unwrap();
    integrate(&mut integ, &mut s, &mut clock, steps, |_, _| {}).unwrap();
    s.amplitudes().to_vec()
}

fn dist(a: &[Cx<f64>], b: &[Cx<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn fourth_order_convergence() {
    let (n, t_end) = (8, 1.0);
    let base = 25u64;
    let reference = solve(n, t_end, base * 64);
    let errors: Vec<f64> = (0..4).map(|j| dist(&solve(n, t_end, base << j), &reference)).collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((12.0..=20.0).contains(&ratio), "errors {errors:?}");
    }
}
