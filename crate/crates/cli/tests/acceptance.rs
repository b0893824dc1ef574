//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Exits nonzero when a criterion fails for a reason not listed in `KNOWN_GAPS`.

use std::time::Instant;

use hsym_cli::commands;
use hsym_cli::config::RunConfig;
use hsym_cli::verify::{run_suite, Verdict};
use hsym_core::perron::{build_transfer, estimate_density, exponent_from_eigenvalue, lognormal_zeta, SigmaGrid};
use hsym_core::shell::{CorruptedSabra, Sabra};
use hsym_core::stats::{fit_exponents, SfTable};
use hsym_core::synthetic::{lognormal_pairs, self_similar_ensemble};

/// Sub-checks whose failure on the desk run is understood: the one-step memory transfer
/// operator underestimates the higher exponents there.
const KNOWN_GAPS: &[&str] = &["agreement p=2", "agreement p=3"];

struct Outcome {
    id: u8,
    title: &'static str,
    failed: Vec<String>,
    detail: String,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.failed.is_empty()
    }

    fn known(&self) -> bool {
        !self.passed() && self.failed.iter().all(|f| KNOWN_GAPS.contains(&f.as_str()))
    }
}

fn from_verdict(id: u8, title: &'static str, v: &Verdict, names: &[&str]) -> Outcome {
    let mut failed = Vec::new();
    let mut parts = Vec::new();
    for name in names {
        let c = v.check(name).unwrap_or_else(|| panic!("suite lacks {name}"));
        parts.push(format!("{name} {:.2e}/{:.0e}", c.value, c.tolerance));
        if !c.passed {
            failed.push(name.to_string());
        }
    }
    Outcome {
        id,
        title,
        failed,
        detail: parts.join(", "),
    }
}

fn self_similar() -> Outcome {
    let orders = [1.0, 2.0, 3.0, 4.0, 6.0];
    let traj = self_similar_ensemble(400, 20, 2f64.powf(2.0 / 3.0), 3);
    let table = fit_exponents(&SfTable::from_trajectory(&traj, &orders).unwrap(), (2, 17)).unwrap();
    let mut worst = 0.0f64;
    for (i, p) in orders.iter().enumerate() {
        worst = worst.max((table.fit(i).unwrap().zeta - p / 3.0).abs());
    }
    Outcome {
        id: 4,
        title: "self-similar ensemble gives p/3",
        failed: if worst < 1e-6 { vec![] } else { vec!["zeta".into()] },
        detail: format!("max |zeta_p - p/3| = {worst:.2e} (limit 1e-6)"),
    }
}

fn lognormal() -> Outcome {
    let (mu, s) = (0.47f64, 0.2f64);
    let pairs = lognormal_pairs(1_000_000, mu, s, 1.0, 2);
    let rho = estimate_density(&pairs, &SigmaGrid::default(), 0).unwrap();
    let (mut r_err, mut z_err) = (0.0f64, 0.0f64);
    let mut failed = Vec::new();
    for p in [0.5, 1.0, 2.0, 3.0, 4.0] {
        let r = build_transfer(&rho, p).solve(1e-12, 1000).unwrap();
        let exact = 2f64.powf(-p) * (mu * p + s * s * p * p / 2.0).exp();
        let z = exponent_from_eigenvalue(r).unwrap();
        let re = (r / exact - 1.0).abs();
        let ze = (z / lognormal_zeta(mu, s * s, p) - 1.0).abs();
        if re >= 0.01 || ze >= 0.01 {
            failed.push(format!("p={p}"));
        }
        r_err = r_err.max(re);
        z_err = z_err.max(ze);
    }
    Outcome {
        id: 5,
        title: "lognormal multipliers match the closed form",
        failed,
        detail: format!("max rel err R_p {r_err:.2e}, zeta_p {z_err:.2e} (limit 1e-2)"),
    }
}

fn desk(dir: &std::path::Path) -> (Outcome, Outcome) {
    let cfg = RunConfig {
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    };
    let clock = Instant::now();
    let (traj, sim) = commands::simulate(&cfg).expect("desk run");
    println!(
        "desk run: Re {:e}, {} shells, {} frames, spectral slope {:.3}, viscous slope {:.1}, {:.0} s",
        cfg.model.reynolds,
        cfg.model.n_shells,
        sim.frames,
        sim.spectral_slope,
        sim.viscous_slope,
        clock.elapsed().as_secs_f64()
    );
    commands::normalize(&cfg).expect("normalize");
    let pdf = commands::pdfs(&cfg).expect("pdf");
    let u_ks = pdf.collapse_at(0).unwrap();
    let mut failed = Vec::new();
    if pdf.scales.len() < 5 {
        failed.push("band width".into());
    }
    if u_ks >= 0.05 {
        failed.push("collapse".into());
    }
    if pdf.kolmogorov < 3.0 * u_ks {
        failed.push("symmetry breaking".into());
    }
    let collapse = Outcome {
        id: 6,
        title: "rescaled PDFs collapse, Kolmogorov-rescaled ones do not",
        failed,
        detail: format!(
            "m = {}..{}: KS(U_0) = {u_ks:.4} (limit 0.05), KS(k^1/3 u) = {:.4} = {:.2}x (need >= 3x)",
            pdf.scales[0],
            pdf.scales[pdf.scales.len() - 1],
            pdf.kolmogorov,
            pdf.kolmogorov / u_ks
        ),
    };

    let pf = commands::perron_from_trajectory(&cfg, &traj).expect("pf");
    let mut failed = Vec::new();
    let mut parts = Vec::new();
    for p in [1.0, 2.0, 3.0] {
        let r = pf.row(p).unwrap();
        let limit = (2.0 * r.combined_stderr()).max(0.08);
        parts.push(format!(
            "p={p}: sf {:.3} pf {:.3} gap {:.3}/{limit:.3}",
            r.zeta_sf,
            r.zeta_pf,
            r.abs_diff()
        ));
        if r.abs_diff().is_nan() || r.abs_diff() > limit {
            failed.push(format!("agreement p={p}"));
        }
    }
    let mut cs_worst = f64::NEG_INFINITY;
    for a in &pf.rows {
        for b in &pf.rows {
            let (p, q) = (a.p / 2.0, b.p / 2.0);
            if let Some(mid) = pf.row(p + q) {
                // log2 R²_{p+q} - log2(R_{2p} R_{2q}) in exponent units, against its noise.
                let excess = a.zeta_pf + b.zeta_pf - 2.0 * mid.zeta_pf;
                let noise = (a.zeta_pf_stderr.powi(2) + b.zeta_pf_stderr.powi(2) + 4.0 * mid.zeta_pf_stderr.powi(2)).sqrt();
                cs_worst = cs_worst.max(excess - 2.0 * noise);
            }
        }
    }
    if cs_worst > 0.0 {
        failed.push("cauchy-schwarz".into());
    }
    let z2 = pf.row(2.0).unwrap().zeta_sf;
    if z2.is_nan() || z2 <= 2.0 / 3.0 {
        failed.push("zeta_2 > 2/3".into());
    }
    parts.push(format!("cauchy-schwarz margin {:.3}", -cs_worst));
    parts.push(format!("zeta_2 = {z2:.3}"));
    let consistency = Outcome {
        id: 7,
        title: "structure-function and transfer-operator exponents agree",
        failed,
        detail: parts.join("; "),
    };
    (collapse, consistency)
}

fn main() {
    let started = Instant::now();
    let clean = run_suite(&Sabra, 1);
    let corrupt = run_suite(&CorruptedSabra, 1);
    let dir = tempfile::tempdir().expect("scratch directory");
    let (six, seven) = desk(dir.path());
    let outcomes = vec![
        from_verdict(
            1,
            "exact identities",
            &clean,
            &[
                "energy_conservation",
                "quadratic_homogeneity",
                "space_scaling_commutation",
                "projector_idempotence",
                "projector_time_invariance",
                "multiplier_time_invariance",
                "multiplier_identity",
                "rescaled_constraint",
                "order_zero",
            ],
        ),
        from_verdict(2, "normalized system matches the projected ideal run", &clean, &["oracle_equivalence"]),
        {
            let mut o = from_verdict(3, "integrator is fourth order", &clean, &["integrator_order"]);
            o.detail = clean.check("integrator_order").unwrap().detail.clone();
            o
        },
        self_similar(),
        lognormal(),
        six,
        seven,
        Outcome {
            id: 8,
            title: "corrupted sign fails only energy conservation",
            failed: if corrupt.failed == ["energy_conservation"] {
                vec![]
            } else {
                vec!["negative control".into()]
            },
            detail: format!("failed checks: {}", corrupt.failed.join(", ")),
        },
    ];

    let mut unexpected = 0;
    for o in &outcomes {
        let status = if o.passed() {
            "PASS"
        } else if o.known() {
            "FAIL (known gap)"
        } else {
            unexpected += 1;
            "FAIL"
        };
        println!("criterion {} {status}: {}: {}", o.id, o.title, o.detail);
        if !o.passed() {
            println!("    failing: {}", o.failed.join(", "));
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    println!(
        "acceptance: {passed}/{} passed, {unexpected} unexpected failure(s), {:.0} s",
        outcomes.len(),
        started.elapsed().as_secs_f64()
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}
