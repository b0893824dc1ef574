use hsym_core::perron::{build_transfer, closed_form_rp, estimate_density, exponent_from_eigenvalue, lognormal_zeta, SigmaGrid};
use hsym_core::stats::{fit_exponents, SfTable};
use hsym_core::synthetic::{lognormal_pairs, self_similar_ensemble};

#[test]
fn self_similar_ensemble_has_k41_exponents() {
    let traj = self_similar_ensemble(400, 20, 2f64.powf(2.0 / 3.0), 3);
    let orders = [1.0, 2.0, 3.0, 4.0, 6.0];
    let table = fit_exponents(&SfTable::from_trajectory(&traj, &orders).unwrap(), (2, 17)).unwrap();
    for (i, p) in orders.iter().enumerate() {
        let fit = table.fit(i).unwrap();
        assert!((fit.zeta - p / 3.0).abs() < 1e-6, "p = {p}: {}", fit.zeta);
    }
}

#[test]
fn lognormal_multipliers_match_closed_form() {
    let (mu, s) = (0.47f64, 0.2f64);
    let pairs = lognormal_pairs(1_000_000, mu, s, 1.0, 2);
    let rho = estimate_density(&pairs, &SigmaGrid::default(), 0).unwrap();
    for p in [0.5, 1.0, 2.0, 3.0, 4.0] {
        let r = build_transfer(&rho, p).solve(1e-12, 1000).unwrap();
        let exact = 2f64.powf(-p) * (mu * p + s * s * p * p / 2.0).exp();
        assert!((r / exact - 1.0).abs() < 0.01, "p = {p}: {r} vs {exact}");
        assert!((r / closed_form_rp(&rho, p) - 1.0).abs() < 1e-10);
        let zeta = exponent_from_eigenvalue(r).unwrap();
        let expected = lognormal_zeta(mu, s * s, p);
        assert!((zeta / expected - 1.0).abs() < 0.01, "p = {p}: {zeta} vs {expected}");
    }
}
