//! Weighted time averages, structure functions, exponent fits, mergeable histograms and
//! weighted Kolmogorov–Smirnov distances between them.

use std::io::Write;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::normalize::RescaledFrame;
use crate::scalar::Real;

/// `Σ ψ_k w_k Δt_k / Σ w_k Δt_k`.
///
/// With `w = A∘g^m` this is the average over the normalized measure expressed through the
/// original one: `⟨ψ⟩_ν = ⟨(ψ∘P) A⟩_μ / ⟨A⟩_μ`.
pub fn weighted_average<T: Real>(series: &[T], weights: &[T], dts: &[T]) -> Result<T> {
    if series.is_empty() {
        return Err(Error::Domain("weighted average of an empty series".into()));
    }
    if series.len() != weights.len() || series.len() != dts.len() {
        return Err(Error::Structural(format!(
            "length mismatch: {} values, {} weights, {} intervals",
            series.len(),
            weights.len(),
            dts.len()
        )));
    }
    let mut num = T::zero();
    let mut den = T::zero();
    for ((&x, &w), &dt) in series.iter().zip(weights).zip(dts) {
        num = num + x * w * dt;
        den = den + w * dt;
    }
    if !(den > T::zero()) {
        return Err(Error::Domain("weights sum to zero".into()));
    }
    Ok(num / den)
}

/// `S_p(k_n) = ⟨|u_n|^p⟩` over the recorded frames (unweighted).
pub fn structure_function<T: Real>(traj: &Trajectory<T>, p: T, n: i32) -> Result<T> {
    if n < 0 || n as usize >= traj.n_shells() {
        return Err(Error::Structural(format!(
            "shell {n} outside evolved range 0..{}",
            traj.n_shells()
        )));
    }
    if traj.frames.is_empty() {
        return Err(Error::Domain("structure function of an empty trajectory".into()));
    }
    let sum: T = traj.frames.iter().map(|f| f.u[n as usize].norm().powf(p)).sum();
    Ok(sum / T::lit(traj.frames.len() as f64))
}

/// Normalized structure function `N_p(k_n)` evaluated on the rescaled frame at scale `m`.
///
/// Uses `|u_n| = |U_{n-m}^(m)| A∘g^m / k_m`: the ν-average of
/// `ψ = |U_{n-m}|^p (A∘g^m)^{p-1} k_m^{-p}` under the weight channel, multiplied by
/// `⟨A∘g^m⟩_μ`. With the dummy tail this coincides with [`structure_function`].
pub fn normalized_structure_function<T: Real>(frame: &RescaledFrame<T>, p: T, n: i32) -> Result<T> {
    let j = n - frame.m;
    if j < frame.n_lo || j > frame.n_hi {
        return Err(Error::Structural(format!(
            "shell {n} is not covered by the frame at m = {} (window [{}, {}])",
            frame.m, frame.n_lo, frame.n_hi
        )));
    }
    if frame.samples.is_empty() {
        return Err(Error::Domain("normalized structure function of an empty frame".into()));
    }
    let km_p = T::wavenumber(frame.m).powf(-p);
    let idx = (j - frame.n_lo) as usize;
    let psi: Vec<T> = frame
        .samples
        .iter()
        .map(|s| s.u[idx].norm().powf(p) * s.weight.powf(p - T::one()) * km_p)
        .collect();
    let w: Vec<T> = frame.samples.iter().map(|s| s.weight).collect();
    let dts: Vec<T> = frame.samples.iter().map(|s| s.dt).collect();
    let nu_avg = weighted_average(&psi, &w, &dts)?;
    let ones = vec![T::one(); w.len()];
    let mean_a = weighted_average(&w, &ones, &dts)?;
    Ok(nu_avg * mean_a)
}

/// Fitted exponent with its OLS standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentFit<T> {
    pub zeta: T,
    pub stderr: T,
}

/// Structure functions `S_p(k_n)` over orders × shells, with optional fits.
#[derive(Clone, Debug, PartialEq)]
pub struct SfTable<T> {
    pub orders: Vec<T>,
    pub shells: Vec<i32>,
    /// `values[i][j] = S_{orders[i]}(k_{shells[j]})`.
    pub values: Vec<Vec<T>>,
    pub fits: Vec<Option<ExponentFit<T>>>,
    pub band: Option<(i32, i32)>,
}

impl<T: Real> SfTable<T> {
    pub fn new(orders: Vec<T>, shells: Vec<i32>, values: Vec<Vec<T>>) -> Result<Self> {
        if values.len() != orders.len() || values.iter().any(|r| r.len() != shells.len()) {
            return Err(Error::Structural("structure-function table shape mismatch".into()));
        }
        if let Some(v) = values.iter().flatten().find(|v| !(**v >= T::zero())) {
            return Err(Error::Domain(format!("negative structure function value {v}")));
        }
        let fits = vec![None; orders.len()];
        Ok(SfTable {
            orders,
            shells,
            values,
            fits,
            band: None,
        })
    }

    /// Computes `S_p` for every order and every evolved shell of the trajectory.
    pub fn from_trajectory(traj: &Trajectory<T>, orders: &[T]) -> Result<Self> {
        let shells: Vec<i32> = (0..traj.n_shells() as i32).collect();
        let values = orders
            .iter()
            .map(|&p| {
                shells
                    .iter()
                    .map(|&n| structure_function(traj, p, n))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(orders.to_vec(), shells, values)
    }

    pub fn fit(&self, order_index: usize) -> Option<ExponentFit<T>> {
        self.fits.get(order_index).copied().flatten()
    }

    /// `n, k_n, S_p...` rows.
    pub fn write_sf_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        write!(w, "n,k_n")?;
        for p in &self.orders {
            write!(w, ",S_{p}")?;
        }
        writeln!(w)?;
        for (j, n) in self.shells.iter().enumerate() {
            write!(w, "{n},{}", f64::wavenumber(*n))?;
            for row in &self.values {
                write!(w, ",{}", row[j])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// `p, zeta, stderr` rows for fitted orders.
    pub fn write_zeta_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "p,zeta,stderr")?;
        for (p, fit) in self.orders.iter().zip(&self.fits) {
            if let Some(f) = fit {
                writeln!(w, "{p},{},{}", f.zeta, f.stderr)?;
            }
        }
        Ok(())
    }
}

/// Inertial band `4 <= n <= round(0.75 log₂ Re) - 4`.
pub fn default_fit_band(reynolds: f64) -> (i32, i32) {
    (4, (0.75 * reynolds.log2()).round() as i32 - 4)
}

/// Least-squares slope of `log₂ S_p` against `n` over `band`; `ζ_p = -slope`.
pub fn fit_exponents<T: Real>(table: &SfTable<T>, band: (i32, i32)) -> Result<SfTable<T>> {
    let (lo, hi) = band;
    let cols: Vec<usize> = table
        .shells
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= lo && n <= hi)
        .map(|(j, _)| j)
        .collect();
    if hi < lo || cols.len() != (hi - lo + 1) as usize {
        return Err(Error::Structural(format!(
            "fit band [{lo}, {hi}] is not inside the tabulated shells"
        )));
    }
    if cols.len() < 3 {
        return Err(Error::Structural(format!(
            "fit band [{lo}, {hi}] has fewer than 3 shells"
        )));
    }
    let mut out = table.clone();
    out.band = Some(band);
    for (i, row) in table.values.iter().enumerate() {
        let mut xs = Vec::with_capacity(cols.len());
        let mut ys = Vec::with_capacity(cols.len());
        for &j in &cols {
            let v = row[j];
            if !(v > T::zero()) {
                return Err(Error::Domain(format!(
                    "S_{} at shell {} is {v}, cannot take a logarithm",
                    table.orders[i], table.shells[j]
                )));
            }
            xs.push(T::lit(table.shells[j] as f64));
            ys.push(v.log2());
        }
        let (slope, stderr) = ols_slope(&xs, &ys);
        out.fits[i] = Some(ExponentFit {
            zeta: -slope,
            stderr,
        });
    }
    Ok(out)
}

/// Slope of the least-squares line and its standard error.
pub fn ols_slope<T: Real>(xs: &[T], ys: &[T]) -> (T, T) {
    let n = T::lit(xs.len() as f64);
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: T = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: T = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let dof = n - T::lit(2.0);
    let stderr = if dof > T::zero() {
        (ssr / dof / sxx).sqrt()
    } else {
        T::zero()
    };
    (slope, stderr)
}

/// Mergeable weighted histogram over strictly increasing bin edges.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedHistogram<T> {
    edges: Vec<T>,
    mass: Vec<T>,
    underflow: T,
    overflow: T,
    total: T,
}

impl<T: Real> WeightedHistogram<T> {
    pub fn new(edges: Vec<T>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Structural("histogram needs at least two edges".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Structural("histogram edges must be strictly increasing".into()));
        }
        let bins = edges.len() - 1;
        Ok(WeightedHistogram {
            edges,
            mass: vec![T::zero(); bins],
            underflow: T::zero(),
            overflow: T::zero(),
            total: T::zero(),
        })
    }

    /// `bins` equal-width bins on `[lo, hi]`.
    pub fn uniform(lo: T, hi: T, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::Structural(format!("bad uniform binning [{lo}, {hi}] × {bins}")));
        }
        let w = (hi - lo) / T::lit(bins as f64);
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + w * T::lit(i as f64) })
            .collect();
        Self::new(edges)
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn underflow(&self) -> T {
        self.underflow
    }

    pub fn overflow(&self) -> T {
        self.overflow
    }

    pub fn total_weight(&self) -> T {
        self.total
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    /// Bin containing `x` (left-closed; the last bin is closed on both sides).
    pub fn bin_of(&self, x: T) -> Option<usize> {
        let last = *self.edges.last().unwrap();
        if x < self.edges[0] || x > last || x.is_nan() {
            return None;
        }
        if x == last {
            return Some(self.bins() - 1);
        }
        Some(self.edges.partition_point(|&e| e <= x) - 1)
    }

    pub fn add(&mut self, x: T, weight: T) {
        self.total = self.total + weight;
        match self.bin_of(x) {
            Some(b) => self.mass[b] = self.mass[b] + weight,
            None if x < self.edges[0] => self.underflow = self.underflow + weight,
            None => self.overflow = self.overflow + weight,
        }
    }

    /// Adds the masses of a histogram with identical edges.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::Structural("cannot merge histograms with different edges".into()));
        }
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a = *a + *b;
        }
        self.underflow = self.underflow + other.underflow;
        self.overflow = self.overflow + other.overflow;
        self.total = self.total + other.total;
        Ok(())
    }

    pub fn centers(&self) -> Vec<T> {
        let half = T::lit(0.5);
        self.edges.windows(2).map(|w| (w[0] + w[1]) * half).collect()
    }

    /// `mass / (total · width)` per bin.
    pub fn density(&self) -> Vec<T> {
        self.edges
            .windows(2)
            .zip(&self.mass)
            .map(|(w, &m)| {
                if self.total > T::zero() {
                    m / (self.total * (w[1] - w[0]))
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    /// Cumulative distribution at each right bin edge, underflow included.
    pub fn cdf(&self) -> Vec<T> {
        let mut acc = self.underflow;
        self.mass
            .iter()
            .map(|&m| {
                acc = acc + m;
                if self.total > T::zero() {
                    acc / self.total
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    /// `bin_center, density` rows.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "bin_center,density")?;
        for (c, d) in self.centers().iter().zip(self.density()) {
            writeln!(w, "{c},{d}")?;
        }
        Ok(())
    }
}

/// Weighted histogram of `samples` over `edges`.
pub fn pdf<T: Real>(samples: &[T], weights: &[T], edges: &[T]) -> Result<WeightedHistogram<T>> {
    if samples.len() != weights.len() {
        return Err(Error::Structural(format!(
            "{} samples but {} weights",
            samples.len(),
            weights.len()
        )));
    }
    let mut h = WeightedHistogram::new(edges.to_vec())?;
    for (&x, &w) in samples.iter().zip(weights) {
        h.add(x, w);
    }
    Ok(h)
}

/// 201 uniform bins over ±5 weighted standard deviations about the pooled mean.
pub fn default_edges<T: Real>(pooled: &[T], weights: &[T]) -> Result<Vec<T>> {
    spread_edges(pooled, weights, 201)
}

/// `bins` uniform bins over ±5 weighted standard deviations about the pooled mean.
pub fn spread_edges<T: Real>(pooled: &[T], weights: &[T], bins: usize) -> Result<Vec<T>> {
    let ones = vec![T::one(); pooled.len()];
    let mean = weighted_average(pooled, weights, &ones)?;
    let sq: Vec<T> = pooled.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let sd = weighted_average(&sq, weights, &ones)?.sqrt();
    let half = if sd > T::zero() { T::lit(5.0) * sd } else { T::one() };
    Ok(WeightedHistogram::uniform(mean - half, mean + half, bins)?.edges)
}

/// Kolmogorov–Smirnov distance between the weighted CDFs of two histograms.
pub fn ks_distance<T: Real>(a: &WeightedHistogram<T>, b: &WeightedHistogram<T>) -> Result<T> {
    if a.edges != b.edges {
        return Err(Error::Structural("KS distance needs identical edges".into()));
    }
    Ok(a.cdf()
        .into_iter()
        .zip(b.cdf())
        .fold(T::zero(), |acc, (x, y)| acc.max((x - y).abs())))
}

/// Pairwise KS distances `(i, j, D_ij)` for `i < j`.
pub fn pairwise_ks<T: Real>(pdfs: &[WeightedHistogram<T>]) -> Result<Vec<(usize, usize, T)>> {
    let mut out = Vec::new();
    for i in 0..pdfs.len() {
        for j in i + 1..pdfs.len() {
            out.push((i, j, ks_distance(&pdfs[i], &pdfs[j])?));
        }
    }
    Ok(out)
}

/// Maximum pairwise KS distance; zero means the profiles collapse exactly.
pub fn collapse_distance<T: Real>(pdfs: &[WeightedHistogram<T>]) -> Result<T> {
    if pdfs.len() < 2 {
        return Err(Error::Structural("collapse distance needs at least two histograms".into()));
    }
    Ok(pairwise_ks(pdfs)?
        .into_iter()
        .fold(T::zero(), |acc, (_, _, d)| acc.max(d)))
}
