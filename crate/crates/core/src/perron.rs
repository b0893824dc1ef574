//! Multiplier transfer operators and their dominant eigenvalues.
//!
//! Multipliers `σ_m = A∘g^{m+1}/A∘g^m` are binned on a log grid, weighted by `A∘g^m Δt`.
//! The conditional density `ρ(σ₀ | σ₋₁)` (memory depth 1) or the marginal `ρ(σ₀)`
//! (depth 0) defines `K_p[b, c] = 2^{-p} σ_c^p ρ(σ_b | σ_c) Δσ_b`, whose Perron eigenvalue
//! `R_p` gives `ζ_p = -log₂ R_p`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::normalize::scale_amplitudes;
use crate::scalar::Real;

/// Log-spaced bins on `[σ_min, σ_max]` with geometric-midpoint representatives.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaGrid<T> {
    edges: Vec<T>,
    centers: Vec<T>,
}

impl<T: Real> SigmaGrid<T> {
    pub fn log_spaced(sigma_min: T, sigma_max: T, bins: usize) -> Result<Self> {
        if !(sigma_min > T::zero()) || !(sigma_max > sigma_min) || !sigma_max.is_finite() {
            return Err(Error::Config(format!(
                "sigma grid needs 0 < min < max, got [{sigma_min}, {sigma_max}]"
            )));
        }
        if bins == 0 {
            return Err(Error::Config("sigma grid needs at least one bin".into()));
        }
        let (lo, hi) = (sigma_min.ln(), sigma_max.ln());
        let step = (hi - lo) / T::lit(bins as f64);
        let edges: Vec<T> = (0..=bins)
            .map(|i| match i {
                0 => sigma_min,
                i if i == bins => sigma_max,
                i => (lo + step * T::lit(i as f64)).exp(),
            })
            .collect();
        let centers = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        Ok(SigmaGrid { edges, centers })
    }

    pub fn bins(&self) -> usize {
        self.centers.len()
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn widths(&self) -> Vec<T> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Bin holding `sigma`, or `None` outside the grid.
    pub fn bin_of(&self, sigma: T) -> Option<usize> {
        let last = *self.edges.last().unwrap();
        if !(sigma >= self.edges[0]) || sigma > last {
            return None;
        }
        Some((self.edges.partition_point(|&e| e <= sigma) - 1).min(self.bins() - 1))
    }

    /// Like [`bin_of`](Self::bin_of) but out-of-range values go to the end bins.
    pub fn clamped_bin(&self, sigma: T) -> usize {
        self.bin_of(sigma)
            .unwrap_or(if sigma < self.edges[0] { 0 } else { self.bins() - 1 })
    }
}

impl<T: Real> Default for SigmaGrid<T> {
    /// 200 bins on `[1e-3, 1e2]`.
    fn default() -> Self {
        Self::log_spaced(T::lit(1e-3), T::lit(1e2), 200).unwrap()
    }
}

/// One multiplier observation: `σ_m` and `σ_{m-1}` of the same frame, weighted by
/// `A∘g^m Δt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiplierPair<T> {
    pub sigma0: T,
    pub sigma_prev: T,
    pub scale: i32,
    pub weight: T,
}

/// Multiplier pairs for every frame and every `m` in the inclusive band.
pub fn collect_multipliers<T: Real>(traj: &Trajectory<T>, m_band: (i32, i32)) -> Result<Vec<MultiplierPair<T>>> {
    let (lo, hi) = m_band;
    if hi < lo {
        return Err(Error::Structural(format!("empty multiplier band {lo}..{hi}")));
    }
    if lo < 1 || hi + 1 > traj.n_shells() as i32 {
        return Err(Error::Structural(format!(
            "multiplier band {lo}..{hi} must lie in 1..{} for {} shells",
            traj.n_shells() as i32 - 1,
            traj.n_shells()
        )));
    }
    if traj.frames.is_empty() {
        return Err(Error::Structural("no recorded frames to collect multipliers from".into()));
    }
    let dt = traj.stride_dt();
    let mut out = Vec::with_capacity(traj.frames.len() * (hi - lo + 1) as usize);
    for f in &traj.frames {
        let a = scale_amplitudes(&f.u, hi as usize + 1);
        for m in lo..=hi {
            let m = m as usize;
            out.push(MultiplierPair {
                sigma0: a[m + 1] / a[m],
                sigma_prev: a[m] / a[m - 1],
                scale: m as i32,
                weight: a[m] * dt,
            });
        }
    }
    Ok(out)
}

/// Mergeable weighted counts for density estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityAccumulator<T> {
    grid: SigmaGrid<T>,
    depth: usize,
    marginal: Vec<T>,
    joint: Vec<T>,
    counts: Vec<usize>,
    samples: usize,
    clamped: usize,
}

impl<T: Real> DensityAccumulator<T> {
    pub fn new(grid: SigmaGrid<T>, depth: usize) -> Result<Self> {
        if depth > 1 {
            return Err(Error::Unsupported(format!("memory depth {depth}; only 0 and 1 are implemented")));
        }
        let g = grid.bins();
        Ok(DensityAccumulator {
            marginal: vec![T::zero(); g],
            joint: if depth == 1 { vec![T::zero(); g * g] } else { Vec::new() },
            counts: vec![0; g],
            samples: 0,
            clamped: 0,
            grid,
            depth,
        })
    }

    pub fn add(&mut self, s: &MultiplierPair<T>) {
        let g = self.grid.bins();
        if self.grid.bin_of(s.sigma0).is_none() || self.grid.bin_of(s.sigma_prev).is_none() {
            self.clamped += 1;
        }
        let b = self.grid.clamped_bin(s.sigma0);
        let c = self.grid.clamped_bin(s.sigma_prev);
        self.marginal[b] = self.marginal[b] + s.weight;
        if self.depth == 1 {
            self.joint[b * g + c] = self.joint[b * g + c] + s.weight;
            self.counts[c] += 1;
        } else {
            self.counts[b] += 1;
        }
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.depth != other.depth {
            return Err(Error::Structural("cannot merge density accumulators on different grids".into()));
        }
        for (a, b) in self.marginal.iter_mut().zip(&other.marginal) {
            *a = *a + *b;
        }
        for (a, b) in self.joint.iter_mut().zip(&other.joint) {
            *a = *a + *b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.samples += other.samples;
        self.clamped += other.clamped;
        Ok(())
    }

    /// Normalizes the accumulated counts into a density.
    pub fn finish(self) -> Result<ConditionalDensity<T>> {
        let g = self.grid.bins();
        let widths = self.grid.widths();
        let total: T = self.marginal.iter().copied().sum();
        if self.samples == 0 || !(total > T::zero()) {
            return Err(Error::Domain("no multiplier samples with positive weight".into()));
        }
        let marginal: Vec<T> = self
            .marginal
            .iter()
            .zip(&widths)
            .map(|(&m, &w)| m / (total * w))
            .collect();
        let mut warnings = Vec::new();
        if self.clamped > 0 {
            warnings.push(format!(
                "{} samples fell outside [{}, {}] and were clamped to the end bins",
                self.clamped,
                self.grid.edges[0],
                self.grid.edges[g]
            ));
        }
        let mut regularized = Vec::new();
        let columns = if self.depth == 1 {
            let mut cols = vec![vec![T::zero(); g]; g];
            for (c, col) in cols.iter_mut().enumerate() {
                let mass: T = (0..g).map(|b| self.joint[b * g + c]).sum();
                if mass > T::zero() {
                    for b in 0..g {
                        col[b] = self.joint[b * g + c] / (mass * widths[b]);
                    }
                    if self.counts[c] < 10 * g {
                        warnings.push(format!(
                            "column {c} (sigma {}) has {} samples, below {}",
                            self.grid.centers[c],
                            self.counts[c],
                            10 * g
                        ));
                    }
                } else {
                    col.clone_from(&marginal);
                    regularized.push(c);
                }
            }
            Some(cols)
        } else {
            if self.samples < 10 * g {
                warnings.push(format!("{} samples, below {}", self.samples, 10 * g));
            }
            None
        };
        Ok(ConditionalDensity {
            grid: self.grid,
            depth: self.depth,
            marginal,
            columns,
            counts: self.counts,
            regularized,
            warnings,
        })
    }
}

/// `ρ(σ₀)` (depth 0) or `ρ(σ₀ | σ₋₁)` (depth 1) on a [`SigmaGrid`]; every column integrates
/// to one against the bin widths.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalDensity<T> {
    grid: SigmaGrid<T>,
    depth: usize,
    marginal: Vec<T>,
    columns: Option<Vec<Vec<T>>>,
    counts: Vec<usize>,
    regularized: Vec<usize>,
    warnings: Vec<String>,
}

impl<T: Real> ConditionalDensity<T> {
    /// Depth-0 density from nonnegative bin values, normalized to integrate to one.
    pub fn from_marginal(grid: SigmaGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.bins() {
            return Err(Error::Structural(format!(
                "{} density values for {} bins",
                values.len(),
                grid.bins()
            )));
        }
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Domain("density values must be finite and nonnegative".into()));
        }
        let mass: T = values.iter().zip(grid.widths()).map(|(&v, w)| v * w).sum();
        if !(mass > T::zero()) {
            return Err(Error::Domain("density has zero mass".into()));
        }
        let g = grid.bins();
        Ok(ConditionalDensity {
            marginal: values.into_iter().map(|v| v / mass).collect(),
            grid,
            depth: 0,
            columns: None,
            counts: vec![0; g],
            regularized: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn grid(&self) -> &SigmaGrid<T> {
        &self.grid
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn marginal(&self) -> &[T] {
        &self.marginal
    }

    /// `ρ(· | σ_c)`; the marginal at depth 0.
    pub fn column(&self, c: usize) -> &[T] {
        match &self.columns {
            Some(cols) => &cols[c],
            None => &self.marginal,
        }
    }

    /// Samples per column (per conditioning bin at depth 1, per σ₀ bin at depth 0).
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Conditioning bins with no data, filled with the marginal.
    pub fn regularized(&self) -> &[usize] {
        &self.regularized
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `σ bin, marginal[, column values]` rows.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        write!(w, "sigma,marginal")?;
        if self.columns.is_some() {
            for c in self.grid.centers() {
                write!(w, ",given_{c}")?;
            }
        }
        writeln!(w)?;
        for (b, s) in self.grid.centers().iter().enumerate() {
            write!(w, "{s},{}", self.marginal[b])?;
            if let Some(cols) = &self.columns {
                for col in cols {
                    write!(w, ",{}", col[b])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Weighted histogram estimate of the multiplier density at memory depth `depth`.
pub fn estimate_density<T: Real>(
    samples: &[MultiplierPair<T>],
    grid: &SigmaGrid<T>,
    depth: usize,
) -> Result<ConditionalDensity<T>> {
    let mut acc = DensityAccumulator::new(grid.clone(), depth)?;
    for s in samples {
        acc.add(s);
    }
    acc.finish()
}

/// Parallel variant of [`estimate_density`] over chunks of samples.
pub fn estimate_density_par<T: Real>(
    samples: &[MultiplierPair<T>],
    grid: &SigmaGrid<T>,
    depth: usize,
) -> Result<ConditionalDensity<T>> {
    let empty = DensityAccumulator::new(grid.clone(), depth)?;
    let acc = samples
        .par_chunks(1 << 16)
        .map(|chunk| {
            let mut a = empty.clone();
            for s in chunk {
                a.add(s);
            }
            a
        })
        .reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b).expect("accumulators share one grid");
                a
            },
        );
    acc.finish()
}

/// Dense nonnegative matrix acting on multiplier marginals, with its solved eigenpair.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix<T> {
    pub order: T,
    pub sigma: Vec<T>,
    size: usize,
    entries: Vec<T>,
    pub eigenvalue: Option<T>,
    pub eigenvector: Option<Vec<T>>,
}

impl<T: Real> TransferMatrix<T> {
    /// Row-major `size × size` matrix.
    pub fn from_entries(order: T, sigma: Vec<T>, entries: Vec<T>) -> Result<Self> {
        let size = sigma.len();
        if entries.len() != size * size || size == 0 {
            return Err(Error::Structural(format!(
                "{} entries for a {size}×{size} transfer matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !(*e >= T::zero()) || !e.is_finite()) {
            return Err(Error::Domain("transfer matrix entries must be finite and nonnegative".into()));
        }
        Ok(TransferMatrix {
            order,
            sigma,
            size,
            entries,
            eigenvalue: None,
            eigenvector: None,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, b: usize, c: usize) -> T {
        self.entries[b * self.size + c]
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    fn apply(&self, v: &[T], out: &mut [T]) {
        for (row, o) in self.entries.chunks_exact(self.size).zip(out.iter_mut()) {
            *o = row.iter().zip(v).map(|(&k, &x)| k * x).sum();
        }
    }

    /// Runs [`power_iterate`] and stores the eigenpair.
    pub fn solve(&mut self, tol: T, max_iter: usize) -> Result<T> {
        let (r, v) = power_iterate(self, tol, max_iter)?;
        self.eigenvalue = Some(r);
        self.eigenvector = Some(v);
        Ok(r)
    }
}

/// `K_p[b, c] = 2^{-p} σ_c^p ρ(σ_b | σ_c) Δσ_b`.
pub fn build_transfer<T: Real>(rho: &ConditionalDensity<T>, p: T) -> TransferMatrix<T> {
    let g = rho.grid.bins();
    let widths = rho.grid.widths();
    let scale = T::lit(2.0).powf(-p);
    let col_factor: Vec<T> = rho.grid.centers().iter().map(|&s| scale * s.powf(p)).collect();
    let mut entries = vec![T::zero(); g * g];
    for c in 0..g {
        let col = rho.column(c);
        for b in 0..g {
            entries[b * g + c] = col_factor[c] * col[b] * widths[b];
        }
    }
    TransferMatrix {
        order: p,
        sigma: rho.grid.centers().to_vec(),
        size: g,
        entries,
        eigenvalue: None,
        eigenvector: None,
    }
}

/// Power iteration `v ← Kv/‖Kv‖₁` from the uniform vector until the eigenvalue estimate
/// changes by less than `tol` (relative). Returns `R` and the L1-normalized eigenvector.
pub fn power_iterate<T: Real>(k: &TransferMatrix<T>, tol: T, max_iter: usize) -> Result<(T, Vec<T>)> {
    if k.entries.iter().all(|e| *e == T::zero()) {
        return Err(Error::Domain("power iteration on a zero matrix".into()));
    }
    let n = k.size;
    let mut v = vec![T::one() / T::lit(n as f64); n];
    let mut next = vec![T::zero(); n];
    let mut estimate = T::nan();
    for it in 1..=max_iter {
        k.apply(&v, &mut next);
        let norm: T = next.iter().copied().sum();
        if !(norm > T::zero()) {
            return Err(Error::Domain(format!(
                "iterate vanished after {it} steps: the matrix is nilpotent on the start vector"
            )));
        }
        for (x, y) in v.iter_mut().zip(&next) {
            *x = *y / norm;
        }
        if (norm - estimate).abs() <= tol * norm {
            return Ok((norm, v));
        }
        estimate = norm;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate: estimate.as_f64(),
    })
}

/// Solves `K_p` for every order concurrently.
pub fn solve_orders<T: Real>(
    rho: &ConditionalDensity<T>,
    orders: &[T],
    tol: T,
    max_iter: usize,
) -> Vec<Result<TransferMatrix<T>>> {
    orders
        .par_iter()
        .map(|&p| {
            let mut k = build_transfer(rho, p);
            k.solve(tol, max_iter)?;
            Ok(k)
        })
        .collect()
}

/// `R_p = 2^{-p} Σ_b σ_b^p ρ(σ_b) Δσ_b` from the marginal.
pub fn closed_form_rp<T: Real>(rho: &ConditionalDensity<T>, p: T) -> T {
    let s: T = rho
        .grid
        .centers()
        .iter()
        .zip(&rho.marginal)
        .zip(rho.grid.widths())
        .map(|((&sig, &d), w)| sig.powf(p) * d * w)
        .sum();
    T::lit(2.0).powf(-p) * s
}

/// `ζ_p = -log₂ R_p`.
pub fn exponent_from_eigenvalue<T: Real>(r: T) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::Domain(format!("eigenvalue {r} is not positive")));
    }
    Ok(-r.log2())
}

/// `ζ_p` of independent lognormal multipliers with log-mean `mu` and log-variance `s2`.
pub fn lognormal_zeta(mu: f64, s2: f64, p: f64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    p * (1.0 - mu / ln2) - s2 * p * p / (2.0 * ln2)
}
