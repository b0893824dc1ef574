//! The analysis stages behind each subcommand. Each takes a resolved [`RunConfig`],
//! writes its artifacts into the output directory and returns a summary.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hsym_core::integrator::{run, Trajectory};
use hsym_core::normalize::{rescaled_frame, RescaledFrame, RescaledSample};
use hsym_core::perron::{
    build_transfer, collect_multipliers, estimate_density_par, exponent_from_eigenvalue, ConditionalDensity,
    MultiplierPair, SigmaGrid,
};
use hsym_core::stats::{fit_exponents, ols_slope, pairwise_ks, pdf, spread_edges, SfTable, WeightedHistogram};
use hsym_core::{Cx, Error, Real, Result};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

/// Writes through `f` into a fresh file at `path`.
fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Loads the trajectory named by the config, with a configuration error naming the
/// `trajectory` key when the file is absent.
pub fn load_trajectory(cfg: &RunConfig) -> Result<Trajectory<f64>> {
    let path = cfg.trajectory_path();
    if !path.exists() {
        return Err(Error::Config(format!(
            "trajectory: no file at {} (run `simulate` first or set the trajectory key)",
            path.display()
        )));
    }
    Trajectory::load(&path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateSummary {
    pub path: PathBuf,
    pub frames: usize,
    pub energy_first_half: f64,
    pub energy_second_half: f64,
    /// Log₂ slope of `⟨|u_n|²⟩` against `k_n` over the fit band.
    pub spectral_slope: f64,
    /// Log₂ slope of the time average of `|u_n|` over the top four shells.
    pub viscous_slope: f64,
    pub stationary: bool,
}

impl SimulateSummary {
    pub fn lines(&self) -> Vec<(String, String)> {
        vec![
            ("trajectory".into(), self.path.display().to_string()),
            ("frames".into(), self.frames.to_string()),
            ("energy_first_half".into(), self.energy_first_half.to_string()),
            ("energy_second_half".into(), self.energy_second_half.to_string()),
            ("spectral_slope".into(), self.spectral_slope.to_string()),
            ("viscous_slope".into(), self.viscous_slope.to_string()),
            ("stationary".into(), self.stationary.to_string()),
        ]
    }
}

fn log_slope(spectrum: &[f64], lo: i32, hi: i32) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..=hi)
        .map(|n| (n as f64, spectrum[n as usize].log2()))
        .unzip();
    if ys.iter().any(|y| !y.is_finite()) {
        return f64::NEG_INFINITY;
    }
    ols_slope(&xs, &ys).0
}

pub fn simulate(cfg: &RunConfig) -> Result<(Trajectory<f64>, SimulateSummary)> {
    cfg.validate()?;
    ensure_dir(&cfg.output_dir)?;
    let traj: Trajectory<f64> = run(&cfg.model)?;
    let path = cfg.trajectory_path();
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    traj.save(&path)?;

    let spectrum = traj.spectrum();
    write_file(&cfg.output_dir.join("spectrum.csv"), |w| {
        writeln!(w, "n,k_n,mean_abs2")?;
        for (n, e) in spectrum.iter().enumerate() {
            writeln!(w, "{n},{},{e}", f64::wavenumber(n as i32))?;
        }
        Ok(())
    })?;
    let energy = traj.energy_series();
    write_file(&cfg.output_dir.join("energy.csv"), |w| {
        writeln!(w, "t,energy")?;
        for (f, e) in traj.frames.iter().zip(&energy) {
            writeln!(w, "{},{e}", f.t)?;
        }
        Ok(())
    })?;

    let half = energy.len() / 2;
    let mean = |s: &[f64]| if s.is_empty() { f64::NAN } else { s.iter().sum::<f64>() / s.len() as f64 };
    let (e1, e2) = (mean(&energy[..half]), mean(&energy[half..]));
    let n = spectrum.len() as i32;
    let mut mean_abs = vec![0.0; spectrum.len()];
    for f in &traj.frames {
        for (m, z) in mean_abs.iter_mut().zip(&f.u) {
            *m += z.norm() / traj.len() as f64;
        }
    }
    let (lo, hi) = cfg.resolved_fit_band();
    let summary = SimulateSummary {
        path,
        frames: traj.len(),
        energy_first_half: e1,
        energy_second_half: e2,
        spectral_slope: if traj.is_empty() { f64::NAN } else { log_slope(&spectrum, lo, hi) },
        viscous_slope: if traj.is_empty() { f64::NAN } else { log_slope(&mean_abs, n - 4, n - 1) },
        stationary: (e1 - e2).abs() <= 0.2 * 0.5 * (e1 + e2),
    };
    Ok((traj, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub m: i32,
    pub file: String,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub trajectory: String,
    pub stride_dt: f64,
    pub window: (i32, i32),
    pub frames: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(Error::Config(format!(
                "output_dir: no {MANIFEST} in {} (run `normalize` first)",
                dir.display()
            )));
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path,
            reason: e.to_string(),
        })
    }
}

pub fn normalize(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let traj = load_trajectory(cfg)?;
    let (lo, hi) = cfg.resolved_m_band();
    ensure_dir(&cfg.output_dir)?;
    let frames = (lo..=hi)
        .into_par_iter()
        .map(|m| {
            let frame = rescaled_frame(&traj, m, cfg.window)?;
            let file = format!("U_m{m}.csv");
            frame.save_csv(&cfg.output_dir.join(&file))?;
            Ok(ManifestEntry {
                m,
                file,
                samples: frame.samples.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        trajectory: cfg.trajectory_path().display().to_string(),
        stride_dt: traj.stride_dt(),
        window: cfg.window,
        frames,
    };
    let path = cfg.output_dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

/// Reads a rescaled-frame CSV as written by `normalize`.
pub fn read_frame_csv(path: &Path, m: i32, stride_dt: f64) -> Result<RescaledFrame<f64>> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .map_err(|e| io_err(path, e))?;
    let shells: Vec<i32> = header
        .split(',')
        .filter_map(|c| c.strip_prefix("re_U"))
        .map(|n| n.parse().map_err(|_| bad(format!("bad column {n}"))))
        .collect::<Result<_>>()?;
    let (n_lo, n_hi) = match (shells.first(), shells.last()) {
        (Some(&a), Some(&b)) if b - a + 1 == shells.len() as i32 => (a, b),
        _ => return Err(bad("header does not name a contiguous shell window".into())),
    };
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let v: Vec<f64> = line
            .split(',')
            .map(|x| x.parse().map_err(|_| bad(format!("line {}: bad number {x}", i + 2))))
            .collect::<Result<_>>()?;
        if v.len() != 3 + 2 * shells.len() {
            return Err(bad(format!("line {}: expected {} fields", i + 2, 3 + 2 * shells.len())));
        }
        samples.push(RescaledSample {
            t: v[0],
            tau: v[1],
            weight: v[2],
            dt: stride_dt,
            u: v[3..].chunks(2).map(|c| Cx::new(c[0], c[1])).collect(),
        });
    }
    Ok(RescaledFrame { m, n_lo, n_hi, samples })
}

/// Values of `Re U_n` resampled on a uniform `τ` grid with the mean spacing, by linear
/// interpolation. Unit weights.
fn tau_uniform(frame: &RescaledFrame<f64>, n: i32) -> Vec<f64> {
    let s = &frame.samples;
    if s.len() < 2 {
        return s.iter().map(|x| frame_value(frame, x, n)).collect();
    }
    let (t0, t1) = (s[0].tau, s[s.len() - 1].tau);
    let step = (t1 - t0) / (s.len() - 1) as f64;
    let mut out = Vec::with_capacity(s.len());
    let mut j = 0;
    for i in 0..s.len() {
        let tau = t0 + step * i as f64;
        while j + 2 < s.len() && s[j + 1].tau < tau {
            j += 1;
        }
        let (a, b) = (&s[j], &s[j + 1]);
        let f = ((tau - a.tau) / (b.tau - a.tau)).clamp(0.0, 1.0);
        out.push(frame_value(frame, a, n) * (1.0 - f) + frame_value(frame, b, n) * f);
    }
    out
}

fn frame_value(frame: &RescaledFrame<f64>, s: &RescaledSample<f64>, n: i32) -> f64 {
    s.u[(n - frame.n_lo) as usize].re
}

/// Samples and weights of `Re U_n^(m)` under the time-synchronized measure.
fn shell_samples(frame: &RescaledFrame<f64>, n: i32, tau_resample: bool) -> (Vec<f64>, Vec<f64>) {
    if tau_resample {
        let v = tau_uniform(frame, n);
        let w = vec![1.0; v.len()];
        (v, w)
    } else {
        frame
            .samples
            .iter()
            .map(|s| (frame_value(frame, s, n), s.weight * s.dt))
            .unzip()
    }
}

/// Histograms of every group on shared edges spread over the pooled samples.
fn shared_pdfs(groups: &[(Vec<f64>, Vec<f64>)], bins: usize) -> Result<Vec<WeightedHistogram<f64>>> {
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.0.iter().copied()).collect();
    let weights: Vec<f64> = groups.iter().flat_map(|g| g.1.iter().copied()).collect();
    let edges = spread_edges(&pooled, &weights, bins)?;
    groups.iter().map(|(v, w)| pdf(v, w, &edges)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdfSummary {
    pub scales: Vec<i32>,
    /// `(n, max pairwise KS across m)` for every shell of the window.
    pub collapse: Vec<(i32, f64)>,
    /// Max pairwise KS of the Kolmogorov-rescaled `Re u_m` profiles.
    pub kolmogorov: f64,
}

impl PdfSummary {
    pub fn collapse_at(&self, n: i32) -> Option<f64> {
        self.collapse.iter().find(|c| c.0 == n).map(|c| c.1)
    }

    pub fn lines(&self) -> Vec<(String, String)> {
        let mut out = vec![(
            "scales".to_string(),
            format!("{}..{}", self.scales[0], self.scales[self.scales.len() - 1]),
        )];
        for (n, d) in &self.collapse {
            out.push((format!("ks_max_U{n}"), d.to_string()));
        }
        out.push(("ks_max_kolmogorov".into(), self.kolmogorov.to_string()));
        out
    }
}

pub fn pdfs(cfg: &RunConfig) -> Result<PdfSummary> {
    cfg.validate()?;
    let manifest = Manifest::load(&cfg.output_dir)?;
    if manifest.frames.len() < 2 {
        return Err(Error::Structural("collapse needs at least two scales in the manifest".into()));
    }
    let frames = manifest
        .frames
        .par_iter()
        .map(|e| read_frame_csv(&cfg.output_dir.join(&e.file), e.m, manifest.stride_dt))
        .collect::<Result<Vec<_>>>()?;
    let scales: Vec<i32> = frames.iter().map(|f| f.m).collect();
    let (n_lo, n_hi) = (frames[0].n_lo, frames[0].n_hi);

    let per_shell = (n_lo..=n_hi)
        .into_par_iter()
        .map(|n| {
            let groups: Vec<_> = frames.iter().map(|f| shell_samples(f, n, cfg.tau_resample)).collect();
            let hists = shared_pdfs(&groups, cfg.pdf_bins)?;
            for (f, h) in frames.iter().zip(&hists) {
                write_file(&cfg.output_dir.join(format!("pdf_{}_{n}.csv", f.m)), |w| h.write_csv(w))?;
            }
            Ok((n, pairwise_ks(&hists)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_file(&cfg.output_dir.join("collapse.csv"), |w| {
        writeln!(w, "shell,m_a,m_b,ks")?;
        for (n, pairs) in &per_shell {
            for (i, j, d) in pairs {
                writeln!(w, "{n},{},{},{d}", scales[*i], scales[*j])?;
            }
        }
        Ok(())
    })?;

    // Kolmogorov rescaling of the raw velocity: k_m^{1/3} Re u_m = k_m^{-2/3} A∘g^m Re U_0^(m),
    // sampled uniformly in the original time.
    let kgroups: Vec<_> = frames
        .iter()
        .map(|f| {
            let km = f64::wavenumber(f.m);
            f.samples
                .iter()
                .map(|s| (km.powf(-2.0 / 3.0) * s.weight * frame_value(f, s, 0), s.dt))
                .unzip()
        })
        .collect();
    let khists = shared_pdfs(&kgroups, cfg.pdf_bins)?;
    for (f, h) in frames.iter().zip(&khists) {
        write_file(&cfg.output_dir.join(format!("kolmogorov_{}.csv", f.m)), |w| h.write_csv(w))?;
    }
    let kpairs = pairwise_ks(&khists)?;
    write_file(&cfg.output_dir.join("collapse_kolmogorov.csv"), |w| {
        writeln!(w, "m_a,m_b,ks")?;
        for (i, j, d) in &kpairs {
            writeln!(w, "{},{},{d}", scales[*i], scales[*j])?;
        }
        Ok(())
    })?;

    let max = |pairs: &[(usize, usize, f64)]| pairs.iter().fold(0.0f64, |a, p| a.max(p.2));
    Ok(PdfSummary {
        collapse: per_shell.iter().map(|(n, p)| (*n, max(p))).collect(),
        kolmogorov: max(&kpairs),
        scales,
    })
}

pub fn structure_functions(cfg: &RunConfig) -> Result<SfTable<f64>> {
    cfg.validate()?;
    let traj = load_trajectory(cfg)?;
    sf_from_trajectory(cfg, &traj)
}

pub fn sf_from_trajectory(cfg: &RunConfig, traj: &Trajectory<f64>) -> Result<SfTable<f64>> {
    let table = fit_exponents(
        &SfTable::from_trajectory(traj, &cfg.p_list)?,
        cfg.resolved_fit_band(),
    )?;
    ensure_dir(&cfg.output_dir)?;
    write_file(&cfg.output_dir.join("sf.csv"), |w| table.write_sf_csv(w))?;
    write_file(&cfg.output_dir.join("zeta.csv"), |w| table.write_zeta_csv(w))?;
    Ok(table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PfRow {
    pub p: f64,
    pub r_p: f64,
    pub zeta_pf: f64,
    /// Delete-one-block jackknife over contiguous time blocks.
    pub zeta_pf_stderr: f64,
    pub zeta_sf: f64,
    pub zeta_sf_stderr: f64,
}

impl PfRow {
    pub fn abs_diff(&self) -> f64 {
        (self.zeta_pf - self.zeta_sf).abs()
    }

    pub fn combined_stderr(&self) -> f64 {
        self.zeta_pf_stderr.hypot(self.zeta_sf_stderr)
    }
}

#[derive(Clone, Debug)]
pub struct PfReport {
    pub rows: Vec<PfRow>,
    pub density: ConditionalDensity<f64>,
    pub samples: usize,
}

impl PfReport {
    pub fn row(&self, p: f64) -> Option<&PfRow> {
        self.rows.iter().find(|r| (r.p - p).abs() < 1e-12)
    }

    pub fn lines(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("samples".to_string(), self.samples.to_string()),
            ("regularized_columns".to_string(), self.density.regularized().len().to_string()),
        ];
        for r in &self.rows {
            out.push((format!("zeta_pf_{}", r.p), r.zeta_pf.to_string()));
            out.push((format!("zeta_sf_{}", r.p), r.zeta_sf.to_string()));
        }
        out
    }
}

const JACKKNIFE_BLOCKS: usize = 10;
const POWER_TOL: f64 = 1e-12;
const POWER_ITERS: usize = 20_000;

/// `(R_p, ζ_p)` per order.
type Exponents = Vec<(f64, f64)>;

fn pf_exponents(
    pairs: &[MultiplierPair<f64>],
    grid: &SigmaGrid<f64>,
    depth: usize,
    orders: &[f64],
) -> Result<(ConditionalDensity<f64>, Exponents)> {
    let rho = estimate_density_par(pairs, grid, depth)?;
    let out = orders
        .par_iter()
        .map(|&p| {
            let r = build_transfer(&rho, p).solve(POWER_TOL, POWER_ITERS)?;
            Ok((r, exponent_from_eigenvalue(r)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rho, out))
}

pub fn perron(cfg: &RunConfig) -> Result<PfReport> {
    cfg.validate()?;
    let traj = load_trajectory(cfg)?;
    perron_from_trajectory(cfg, &traj)
}

pub fn perron_from_trajectory(cfg: &RunConfig, traj: &Trajectory<f64>) -> Result<PfReport> {
    let grid = SigmaGrid::log_spaced(cfg.grid_min, cfg.grid_max, cfg.grid_bins)?;
    let pairs = collect_multipliers(traj, cfg.resolved_m_band())?;
    let (density, main) = pf_exponents(&pairs, &grid, cfg.memory_depth, &cfg.p_list)?;

    let block = pairs.len().div_ceil(JACKKNIFE_BLOCKS);
    let jack: Vec<Option<Vec<f64>>> = (0..JACKKNIFE_BLOCKS)
        .map(|b| {
            let kept: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| i / block != b)
                .map(|(_, s)| *s)
                .collect();
            pf_exponents(&kept, &grid, cfg.memory_depth, &cfg.p_list)
                .ok()
                .map(|(_, z)| z.into_iter().map(|x| x.1).collect())
        })
        .collect();

    let sf = fit_exponents(&SfTable::from_trajectory(traj, &cfg.p_list)?, cfg.resolved_fit_band())?;
    let rows: Vec<PfRow> = cfg
        .p_list
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (r_p, zeta_pf) = main[i];
            let reps: Option<Vec<f64>> = jack.iter().map(|j| j.as_ref().map(|z| z[i])).collect();
            let zeta_pf_stderr = reps.map_or(f64::NAN, |z| {
                let k = z.len() as f64;
                let mean = z.iter().sum::<f64>() / k;
                ((k - 1.0) / k * z.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt()
            });
            let fit = sf.fit(i);
            PfRow {
                p,
                r_p,
                zeta_pf,
                zeta_pf_stderr,
                zeta_sf: fit.map_or(f64::NAN, |f| f.zeta),
                zeta_sf_stderr: fit.map_or(f64::NAN, |f| f.stderr),
            }
        })
        .collect();

    ensure_dir(&cfg.output_dir)?;
    write_file(&cfg.output_dir.join("pf_zeta.csv"), |w| {
        writeln!(w, "p,R_p,zeta_pf,zeta_fit_from_sf,abs_diff,zeta_pf_stderr,zeta_sf_stderr")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.p,
                r.r_p,
                r.zeta_pf,
                r.zeta_sf,
                r.abs_diff(),
                r.zeta_pf_stderr,
                r.zeta_sf_stderr
            )?;
        }
        Ok(())
    })?;
    write_file(&cfg.output_dir.join("density.csv"), |w| density.write_csv(w))?;
    write_file(&cfg.output_dir.join("flags.txt"), |w| {
        let centers = density.grid().centers();
        for &c in density.regularized() {
            writeln!(w, "regularized column {c} (sigma = {}): filled with the marginal", centers[c])?;
        }
        for msg in density.warnings() {
            writeln!(w, "{msg}")?;
        }
        Ok(())
    })?;
    Ok(PfReport {
        rows,
        density,
        samples: pairs.len(),
    })
}
