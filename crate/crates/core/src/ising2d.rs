//! Exact density of states of the periodic square-lattice Ising model and
//! its energy cumulants near the critical point.

use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::dp_exact;
use crate::error::{Error, Result};
use crate::fisher::{binned_fisher, FisherReport};
use crate::spectra::{ln_biguint, DiscreteSpectrum, ThermalEnsemble};
use crate::special::{fit_line, golden_max, LineFit};

/// Smallest and largest supported linear sizes.
pub const MIN_SIZE: usize = 4;
pub const MAX_SIZE: usize = 32;

/// Environment variable overriding the density-of-states cache directory.
pub const CACHE_ENV: &str = "THERMOBIN_CACHE_DIR";

/// Inverse critical temperature `ln(1 + sqrt 2) / 2`.
pub fn critical_beta() -> f64 {
    std::f64::consts::SQRT_2.ln_1p() / 2.0
}

/// Critical temperature `2 / ln(1 + sqrt 2)`.
pub fn critical_temperature() -> f64 {
    1.0 / critical_beta()
}

/// Spontaneous magnetization per spin of the infinite lattice.
pub fn magnetization_thermodynamic_limit(temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {temperature}")));
    }
    if temperature >= critical_temperature() {
        return Ok(0.0);
    }
    let sh = (2.0 / temperature).sinh();
    let inner = 1.0 - sh.powi(-4);
    Ok(inner.max(0.0).powf(0.125))
}

/// Degeneracies of the `L x L` periodic lattice; entry `j` counts the
/// configurations with energy `-2N + 4j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsingDos {
    size: usize,
    counts: Vec<BigUint>,
}

#[derive(Serialize, Deserialize)]
struct DosRecord {
    #[serde(rename = "L")]
    size: usize,
    levels: Vec<LevelRecord>,
}

#[derive(Serialize, Deserialize)]
struct LevelRecord {
    #[serde(rename = "E")]
    energy: i64,
    g: String,
}

impl IsingDos {
    /// Wraps precomputed counts after checking the exact invariants.
    pub fn from_counts(size: usize, counts: Vec<BigUint>) -> Result<Self> {
        check_size(size)?;
        let n = size * size;
        if counts.len() != n + 1 {
            return Err(Error::InvalidSpectrum(format!(
                "expected {} energy slots for L = {size}, got {}",
                n + 1,
                counts.len()
            )));
        }
        let dos = Self { size, counts };
        if dos.total() != BigUint::one() << n {
            return Err(Error::InvalidSpectrum("degeneracies do not sum to 2^N".into()));
        }
        if dos.counts.iter().ne(dos.counts.iter().rev()) {
            return Err(Error::InvalidSpectrum("degeneracies are not symmetric under E -> -E".into()));
        }
        Ok(dos)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sites(&self) -> usize {
        self.size * self.size
    }

    /// Degeneracy at energy `e`; zero off the lattice of allowed energies.
    pub fn degeneracy(&self, energy: i64) -> BigUint {
        let shifted = energy + 2 * self.sites() as i64;
        if shifted < 0 || shifted % 4 != 0 {
            return BigUint::zero();
        }
        self.counts.get((shifted / 4) as usize).cloned().unwrap_or_default()
    }

    /// Nonzero `(E, g)` pairs in increasing energy.
    pub fn levels(&self) -> impl Iterator<Item = (i64, &BigUint)> + '_ {
        let base = -2 * self.sites() as i64;
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_zero())
            .map(move |(j, g)| (base + 4 * j as i64, g))
    }

    pub fn total(&self) -> BigUint {
        self.counts.iter().sum()
    }

    pub fn to_spectrum(&self) -> Result<DiscreteSpectrum> {
        DiscreteSpectrum::from_counts(self.levels().map(|(e, g)| (e as f64, g.clone())))
    }

    pub fn ensemble(&self, beta: f64) -> Result<ThermalEnsemble> {
        ThermalEnsemble::new(self.to_spectrum()?, beta)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let record = DosRecord {
            size: self.size,
            levels: self
                .levels()
                .map(|(e, g)| LevelRecord {
                    energy: e,
                    g: g.to_str_radix(10),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let record: DosRecord = serde_json::from_str(text)?;
        check_size(record.size)?;
        let n = record.size * record.size;
        let mut counts = vec![BigUint::zero(); n + 1];
        for level in record.levels {
            let shifted = level.energy + 2 * n as i64;
            if shifted < 0 || shifted % 4 != 0 || shifted / 4 > n as i64 {
                return Err(Error::InvalidSpectrum(format!("energy {} is not allowed", level.energy)));
            }
            counts[(shifted / 4) as usize] = level
                .g
                .parse()
                .map_err(|_| Error::InvalidSpectrum(format!("bad degeneracy {:?}", level.g)))?;
        }
        Self::from_counts(record.size, counts)
    }
}

fn check_size(size: usize) -> Result<()> {
    if !(MIN_SIZE..=MAX_SIZE).contains(&size) || !size.is_multiple_of(2) {
        return Err(Error::UnsupportedSize(size));
    }
    Ok(())
}

type Poly = Vec<BigInt>;

fn poly_mul(a: &[BigInt], b: &[BigInt]) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if !y.is_zero() {
                out[i + j] += x * y;
            }
        }
    }
    out
}

fn poly_add_scaled(acc: &mut Poly, b: &[BigInt], scale: &BigInt) {
    if acc.len() < b.len() {
        acc.resize(b.len(), BigInt::zero());
    }
    for (slot, y) in acc.iter_mut().zip(b) {
        if !y.is_zero() {
            *slot += y * scale;
        }
    }
}

fn small(coeffs: &[i64]) -> Poly {
    coeffs.iter().map(|&c| BigInt::from(c)).collect()
}

/// Chebyshev-type recursion `P_k = A P_{k-1} - P_{k-2}` from the given seeds.
fn chebyshev(seed0: i64, order: usize) -> Poly {
    let mut prev = small(&[seed0]);
    let mut cur = small(&[0, 1]);
    if order == 0 {
        return prev;
    }
    for _ in 1..order {
        let mut next = vec![BigInt::zero()];
        next.extend(cur.iter().cloned());
        for (slot, p) in next.iter_mut().zip(&prev) {
            *slot -= p;
        }
        prev = std::mem::replace(&mut cur, next);
    }
    cur
}

/// Power sums `p_0..=p_count` of the roots of a monic polynomial.
fn power_sums(f: &[BigInt], count: usize) -> Vec<BigInt> {
    let degree = f.len() - 1;
    let c = |k: usize| &f[degree - k];
    let mut p = vec![BigInt::zero(); count + 1];
    p[0] = BigInt::from(degree);
    for k in 1..=count {
        let mut s = if k <= degree { -BigInt::from(k) * c(k) } else { BigInt::zero() };
        for i in 1..=(k - 1).min(degree) {
            s -= c(i) * &p[k - i];
        }
        p[k] = s;
    }
    p
}

/// Monic polynomial whose roots are all pairwise sums of roots of `f` and `g`.
fn composed_sum(f: &[BigInt], g: &[BigInt]) -> Poly {
    let degree = (f.len() - 1) * (g.len() - 1);
    let pf = power_sums(f, degree);
    let pg = power_sums(g, degree);
    let mut sums = vec![BigInt::zero(); degree + 1];
    let mut binom = vec![BigInt::one()];
    for k in 0..=degree {
        if k > 0 {
            let mut next = vec![BigInt::one(); k + 1];
            for m in 1..k {
                next[m] = &binom[m - 1] + &binom[m];
            }
            binom = next;
        }
        sums[k] = (0..=k).map(|m| &binom[m] * &pf[m] * &pg[k - m]).sum();
    }
    // Newton's identities back to coefficients
    let mut c = vec![BigInt::zero(); degree + 1];
    c[0] = BigInt::one();
    for k in 1..=degree {
        let mut s = sums[k].clone();
        for i in 1..k {
            s += &c[i] * &sums[k - i];
        }
        debug_assert!((&s % BigInt::from(k)).is_zero());
        c[k] = -s / BigInt::from(k);
    }
    c.reverse();
    c
}

/// `f(A + shift)`.
fn translate(f: &[BigInt], shift: i64) -> Poly {
    let step = small(&[shift, 1]);
    let mut out: Poly = Vec::new();
    for coef in f.iter().rev() {
        out = poly_mul(&out, &step);
        if out.is_empty() {
            out.push(BigInt::zero());
        }
        out[0] += coef;
    }
    out
}

/// `sum_m c_m B^m D^{n-m}` with `B = (1 + x^2)^2` and `D = x (1 - x^2)`.
fn to_boltzmann_variable(c: &[BigInt], n: usize) -> Poly {
    let b = small(&[1, 0, 2, 0, 1]);
    let d = small(&[0, 1, 0, -1]);
    let mut acc: Poly = Vec::new();
    let mut b_power = small(&[1]);
    for m in 0..=n {
        acc = poly_mul(&acc, &d);
        if let Some(cm) = c.get(m) {
            poly_add_scaled(&mut acc, &b_power, cm);
        }
        b_power = poly_mul(&b_power, &b);
    }
    acc
}

/// Exact degeneracies from the factorized partition function, expanded in
/// `x = e^{-2 beta}` with integer polynomial arithmetic.
pub fn exact_dos(size: usize) -> Result<IsingDos> {
    check_size(size)?;
    let n = size * size;
    let half = size / 2;
    let wt = chebyshev(2, half);
    let wu = chebyshev(1, half - 1);
    let one = small(&[1]);
    let s_tt = composed_sum(&wt, &wt);
    let (s_tu, s_uu) = if half > 1 {
        (composed_sum(&wt, &wu), composed_sum(&wu, &wu))
    } else {
        (one.clone(), one.clone())
    };
    let z1 = poly_mul(&s_tt, &s_tt);
    let z2 = poly_mul(&poly_mul(&translate(&wt, -2), &translate(&wt, 2)), &poly_mul(&s_tu, &s_tu));
    let z4_root = poly_mul(&poly_mul(&translate(&wu, -2), &translate(&wu, 2)), &s_uu);
    let z4 = poly_mul(&z4_root, &z4_root);
    let mut even = z1;
    poly_add_scaled(&mut even, &z2, &BigInt::from(2));
    let mut q = to_boltzmann_variable(&even, n / 2);
    // [(1-x)^2 - x^2 (1+x)^2] [(1+x)^2 - x^2 (1-x)^2]
    let odd_factor = poly_mul(&small(&[1, -2, 0, -2, -1]), &small(&[1, 2, 0, 2, -1]));
    let odd = poly_mul(&to_boltzmann_variable(&z4, n / 2 - 2), &odd_factor);
    poly_add_scaled(&mut q, &odd, &BigInt::one());
    let two = BigInt::from(2);
    let mut counts = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let coef = q.get(2 * j).cloned().unwrap_or_default();
        if !(&coef % &two).is_zero() || coef.is_negative() {
            return Err(Error::InvalidSpectrum(format!("non-integral degeneracy at slot {j}")));
        }
        let (sign, mag) = (coef / &two).into_parts();
        counts.push(if sign == Sign::Minus { BigUint::zero() } else { mag });
    }
    if q.iter().skip(2 * n + 1).any(|c| !c.is_zero()) || q.iter().skip(1).step_by(2).any(|c| !c.is_zero()) {
        return Err(Error::InvalidSpectrum("unexpected odd or out-of-range terms".into()));
    }
    IsingDos::from_counts(size, counts)
}

/// Default cache location: `$THERMOBIN_CACHE_DIR`, else a directory under the system temp dir.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("thermobin-cache"))
}

pub fn cache_path(dir: &Path, size: usize) -> PathBuf {
    dir.join(format!("ising_dos_L{size}.json"))
}

/// Reads a cached density of states, recomputing and rewriting it when the
/// file is missing or fails validation.
pub fn load_or_compute(size: usize, dir: &Path) -> Result<IsingDos> {
    check_size(size)?;
    let path = cache_path(dir, size);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(dos) = IsingDos::from_json_str(&text) {
            if dos.size == size {
                return Ok(dos);
            }
        }
    }
    let dos = exact_dos(size)?;
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".ising_dos_L{size}.{}.tmp", std::process::id()));
    fs::write(&tmp, dos.to_json_string()?)?;
    fs::rename(&tmp, &path)?;
    Ok(dos)
}

/// Several sizes at once, computed in parallel.
pub fn load_many(sizes: &[usize], dir: Option<&Path>) -> Result<Vec<IsingDos>> {
    sizes
        .par_iter()
        .map(|&l| match dir {
            Some(d) => load_or_compute(l, d),
            None => exact_dos(l),
        })
        .collect()
}

/// Energy cumulants at one inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantReport {
    pub beta: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
}

/// Precomputed `(E, ln g)` for repeated cumulant evaluations.
#[derive(Debug, Clone)]
pub struct CumulantEvaluator {
    energies: Vec<f64>,
    log_counts: Vec<f64>,
}

impl CumulantEvaluator {
    pub fn new(dos: &IsingDos) -> Self {
        let (energies, log_counts) = dos.levels().map(|(e, g)| (e as f64, ln_biguint(g))).unzip();
        Self { energies, log_counts }
    }

    pub fn at(&self, beta: f64) -> CumulantReport {
        let log_w: Vec<f64> = self
            .energies
            .iter()
            .zip(&self.log_counts)
            .map(|(e, lg)| lg - beta * e)
            .collect();
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_w.iter().map(|a| (a - top).exp()).collect();
        let z: f64 = w.iter().sum();
        let mean = w.iter().zip(&self.energies).map(|(w, e)| w * e).sum::<f64>() / z;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for (w, e) in w.iter().zip(&self.energies) {
            let d = e - mean;
            let d2 = d * d;
            m2 += w * d2;
            m3 += w * d2 * d;
            m4 += w * d2 * d2;
        }
        let (m2, m3, m4) = (m2 / z, m3 / z, m4 / z);
        CumulantReport {
            beta,
            kappa1: mean,
            kappa2: m2,
            kappa3: m3,
            kappa4: m4 - 3.0 * m2 * m2,
        }
    }

    /// `ln Z(beta)`.
    pub fn ln_partition(&self, beta: f64) -> f64 {
        let log_w: Vec<f64> = self
            .energies
            .iter()
            .zip(&self.log_counts)
            .map(|(e, lg)| lg - beta * e)
            .collect();
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + log_w.iter().map(|a| (a - top).exp()).sum::<f64>().ln()
    }

    /// `ln Z(beta + step) - ln Z(beta)`, evaluated as `ln <e^{-step E}>` so that
    /// small steps do not cancel.
    pub fn ln_partition_step(&self, beta: f64, step: f64) -> f64 {
        let log_w: Vec<f64> = self
            .energies
            .iter()
            .zip(&self.log_counts)
            .map(|(e, lg)| lg - beta * e)
            .collect();
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut shift) = (0.0, 0.0);
        for (a, e) in log_w.iter().zip(&self.energies) {
            let w = (a - top).exp();
            z += w;
            shift += w * (-step * e).exp_m1();
        }
        (shift / z).ln_1p()
    }
}

pub fn cumulants(dos: &IsingDos, beta: f64) -> CumulantReport {
    CumulantEvaluator::new(dos).at(beta)
}

/// Extremum of the third cumulant on one side of the critical point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantPeak {
    pub beta: f64,
    /// `|beta - beta_c|`.
    pub offset: f64,
    /// `|kappa_3|` at the peak.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThirdCumulantPeaks {
    /// Negative lobe on the high-temperature side.
    pub below: CumulantPeak,
    /// Positive lobe on the low-temperature side.
    pub above: CumulantPeak,
}

/// Relative scan step in units of the critical inverse temperature.
pub const PEAK_SCAN_STEP: f64 = 1e-4;
/// Scan half-width in units of the critical inverse temperature.
pub const PEAK_SCAN_HALF_WIDTH: f64 = 0.7;
pub const PEAK_BETA_TOL: f64 = 1e-8;

/// Locates the two extrema of the third cumulant around the critical point by
/// a uniform scan followed by golden-section refinement.
pub fn third_cumulant_peaks(dos: &IsingDos) -> ThirdCumulantPeaks {
    let eval = CumulantEvaluator::new(dos);
    let bc = critical_beta();
    let step = PEAK_SCAN_STEP * bc;
    let steps = (PEAK_SCAN_HALF_WIDTH / PEAK_SCAN_STEP).round() as i64;
    let grid: Vec<f64> = (-steps..=steps).map(|k| bc + k as f64 * step).collect();
    let k3: Vec<f64> = grid.par_iter().map(|&b| eval.at(b).kappa3).collect();
    let refine = |sign: f64, keep: &dyn Fn(f64) -> bool| {
        let (idx, _) = grid
            .iter()
            .zip(&k3)
            .enumerate()
            .filter(|(_, (b, _))| keep(**b))
            .max_by(|a, b| (sign * a.1 .1).total_cmp(&(sign * b.1 .1)))
            .expect("scan grid is nonempty on both sides");
        let (beta, value) = golden_max(
            |b| sign * eval.at(b).kappa3,
            grid[idx] - step,
            grid[idx] + step,
            PEAK_BETA_TOL,
        );
        CumulantPeak {
            beta,
            offset: (beta - bc).abs(),
            magnitude: value.abs(),
        }
    };
    ThirdCumulantPeaks {
        below: refine(-1.0, &|b| b < bc),
        above: refine(1.0, &|b| b > bc),
    }
}

/// Quantity whose size dependence is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingObservable {
    /// Variance, fitted against `N ln N`.
    Kappa2,
    /// Fourth cumulant, fitted against `N`.
    Kappa4,
    /// Third-cumulant peak magnitude below the critical inverse temperature.
    Kappa3PeakBelow,
    Kappa3PeakAbove,
    /// Distance of the third-cumulant peak from the critical point.
    PeakOffsetBelow,
    PeakOffsetAbove,
}

impl ScalingObservable {
    pub fn name(self) -> &'static str {
        match self {
            Self::Kappa2 => "kappa2",
            Self::Kappa4 => "kappa4",
            Self::Kappa3PeakBelow => "kappa3_peak_below",
            Self::Kappa3PeakAbove => "kappa3_peak_above",
            Self::PeakOffsetBelow => "peak_offset_below",
            Self::PeakOffsetAbove => "peak_offset_above",
        }
    }
}

/// Log-log least-squares fit of an observable against system size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub observable: ScalingObservable,
    pub sizes: Vec<usize>,
    /// Abscissa before taking logs: `N`, or `N ln N` for the variance.
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl ScalingFit {
    /// `max / min` of `value / abscissa`.
    pub fn spread_of_normalized(&self) -> f64 {
        let ratios: Vec<f64> = self.values.iter().zip(&self.abscissa).map(|(v, a)| v / a).collect();
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }
}

/// Fits `ln |value|` against `ln N` (or `ln(N ln N)`) over the given lattices.
/// Cumulants are evaluated at `beta`, defaulting to the critical point; peak
/// observables scan around the critical point instead.
pub fn cumulant_scaling_fit(dos: &[IsingDos], observable: ScalingObservable, beta: Option<f64>) -> Result<ScalingFit> {
    let mut sizes: Vec<usize> = dos.iter().map(IsingDos::size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 || sizes.len() != dos.len() {
        return Err(Error::InsufficientSizes(sizes.len()));
    }
    let beta = beta.unwrap_or_else(critical_beta);
    let mut rows: Vec<(usize, f64, f64)> = dos
        .par_iter()
        .map(|d| {
            let n = d.sites() as f64;
            let (x, y) = match observable {
                ScalingObservable::Kappa2 => (n * n.ln(), cumulants(d, beta).kappa2),
                ScalingObservable::Kappa4 => (n, cumulants(d, beta).kappa4),
                ScalingObservable::Kappa3PeakBelow => (n, third_cumulant_peaks(d).below.magnitude),
                ScalingObservable::Kappa3PeakAbove => (n, third_cumulant_peaks(d).above.magnitude),
                ScalingObservable::PeakOffsetBelow => (n, third_cumulant_peaks(d).below.offset),
                ScalingObservable::PeakOffsetAbove => (n, third_cumulant_peaks(d).above.offset),
            };
            (d.size(), x, y)
        })
        .collect();
    rows.sort_by_key(|r| r.0);
    let xs: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.2.abs().ln()).collect();
    let LineFit {
        slope,
        intercept,
        r_squared,
    } = fit_line(&xs, &ys);
    Ok(ScalingFit {
        observable,
        sizes: rows.iter().map(|r| r.0).collect(),
        abscissa: rows.iter().map(|r| r.1).collect(),
        values: rows.iter().map(|r| r.2).collect(),
        exponent: slope,
        intercept,
        r_squared,
    })
}

/// Optimal `bins`-outcome energy measurement of the lattice at `beta`.
pub fn criticality_binning_study(dos: &IsingDos, beta: f64, bins: usize) -> Result<FisherReport> {
    let ensemble = dos.ensemble(beta)?;
    let binning = dp_exact(&ensemble, bins)?;
    binned_fisher(&ensemble, &binning)
}

/// Specific heat per spin `beta^2 kappa_2 / N`.
pub fn specific_heat(dos: &IsingDos, beta: f64) -> f64 {
    beta * beta * cumulants(dos, beta).kappa2 / dos.sites() as f64
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use num_traits::ToPrimitive;
    use std::collections::BTreeMap;

    /// Exhaustive enumeration, counts indexed by `(E + 2N) / 4`.
    pub(crate) fn enumerate_counts(size: usize) -> Vec<u64> {
        let n = size * size;
        let mut counts = vec![0u64; n + 1];
        for state in 0u64..(1 << n) {
            let spin = |i: usize, j: usize| (state >> ((i % size) * size + (j % size))) & 1;
            let mut unsatisfied = 0;
            for i in 0..size {
                for j in 0..size {
                    unsatisfied += (spin(i, j) != spin(i, j + 1)) as usize;
                    unsatisfied += (spin(i, j) != spin(i + 1, j)) as usize;
                }
            }
            // E = -2N + 2u
            counts[unsatisfied / 2] += 1;
        }
        counts
    }

    /// Row-to-row transfer with polynomial-valued entries, indexed by the
    /// number of unsatisfied bonds.
    pub(crate) fn transfer_matrix_counts(size: usize) -> Vec<u64> {
        let n = size * size;
        let rows = 1usize << size;
        let bonds = 2 * n + 1;
        let within = |s: usize| (s ^ s.rotate_right_in(size)).count_ones() as usize;
        let mut total = vec![0u64; bonds];
        for first in 0..rows {
            let mut vec = vec![vec![0u64; bonds]; rows];
            vec[first][within(first)] = 1;
            for _ in 1..size {
                let mut next = vec![vec![0u64; bonds]; rows];
                for (prev, poly) in vec.iter().enumerate() {
                    if poly.iter().all(|&c| c == 0) {
                        continue;
                    }
                    for (cur, out) in next.iter_mut().enumerate() {
                        let add = within(cur) + (prev ^ cur).count_ones() as usize;
                        for (k, &c) in poly.iter().enumerate() {
                            if c != 0 {
                                out[k + add] += c;
                            }
                        }
                    }
                }
                vec = next;
            }
            for (last, poly) in vec.iter().enumerate() {
                let add = (last ^ first).count_ones() as usize;
                for (k, &c) in poly.iter().enumerate() {
                    if c != 0 {
                        total[k + add] += c;
                    }
                }
            }
        }
        (0..=n).map(|j| total[2 * j]).collect()
    }

    trait RotateIn {
        fn rotate_right_in(self, width: usize) -> Self;
    }

    impl RotateIn for usize {
        fn rotate_right_in(self, width: usize) -> usize {
            ((self >> 1) | ((self & 1) << (width - 1))) & ((1 << width) - 1)
        }
    }

    fn as_u64(dos: &IsingDos) -> Vec<u64> {
        dos.counts.iter().map(|g| g.to_u64().unwrap()).collect()
    }

    #[test]
    fn l4_matches_enumeration() {
        let dos = exact_dos(4).unwrap();
        assert_eq!(as_u64(&dos), enumerate_counts(4));
        assert_eq!(dos.degeneracy(-32), BigUint::from(2u8));
        assert_eq!(&as_u64(&dos)[..9], &[2, 0, 32, 64, 424, 1728, 6688, 13568, 20524]);
    }

    #[test]
    fn l6_matches_transfer_matrix() {
        let dos = exact_dos(6).unwrap();
        assert_eq!(as_u64(&dos), transfer_matrix_counts(6));
    }

    #[test]
    fn transfer_matrix_agrees_with_enumeration() {
        assert_eq!(transfer_matrix_counts(4), enumerate_counts(4));
    }

    #[test]
    fn l8_invariants() {
        let dos = exact_dos(8).unwrap();
        assert_eq!(dos.total(), BigUint::one() << 64);
        let levels: BTreeMap<i64, BigUint> = dos.levels().map(|(e, g)| (e, g.clone())).collect();
        for (e, g) in &levels {
            assert_eq!(levels.get(&-e), Some(g));
        }
        assert_eq!(dos.degeneracy(-128), BigUint::from(2u8));
        assert_eq!(dos.degeneracy(-126), BigUint::zero());
    }

    #[test]
    fn rejects_bad_sizes() {
        for l in [2, 5, 34, 0] {
            assert!(matches!(exact_dos(l), Err(Error::UnsupportedSize(_))));
        }
    }

    #[test]
    fn critical_point_identity() {
        assert!(((2.0 * critical_beta()).sinh() - 1.0).abs() < 1e-14);
        assert!((critical_temperature() - 2.26919).abs() < 1e-5);
    }

    #[test]
    fn magnetization_curve() {
        assert!((magnetization_thermodynamic_limit(1e-3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(magnetization_thermodynamic_limit(critical_temperature()).unwrap(), 0.0);
        let m2 = magnetization_thermodynamic_limit(2.0).unwrap();
        let direct = (1.0 - (1.0f64).sinh().powi(-4)).powf(0.125);
        assert!((m2 - direct).abs() < 1e-15 && m2 > 0.9);
        let near = magnetization_thermodynamic_limit(critical_temperature() * (1.0 - 1e-12)).unwrap();
        assert!(near < 0.05);
        assert!(magnetization_thermodynamic_limit(0.0).is_err());
    }

    #[test]
    fn cumulants_at_infinite_temperature() {
        let dos = exact_dos(6).unwrap();
        let c = cumulants(&dos, 0.0);
        assert!(c.kappa1.abs() < 1e-9 && c.kappa3.abs() < 1e-6);
        // independent bonds at beta = 0: var = 2N
        assert!((c.kappa2 - 72.0).abs() < 1e-9);
    }

    #[test]
    fn cumulants_match_log_partition_derivatives() {
        let dos = exact_dos(8).unwrap();
        let eval = CumulantEvaluator::new(&dos);
        let b = critical_beta();
        let h = 1e-3;
        let lz = |x: f64| eval.ln_partition(x);
        let c = eval.at(b);
        let d1 = (lz(b + h) - lz(b - h)) / (2.0 * h);
        let d2 = (lz(b + h) - 2.0 * lz(b) + lz(b - h)) / (h * h);
        assert!((-d1 / c.kappa1 - 1.0).abs() < 1e-4);
        assert!((d2 / c.kappa2 - 1.0).abs() < 1e-4);
        // third and fourth via differences of the variance
        let h = 1e-4;
        let k2 = |x: f64| eval.at(x).kappa2;
        let d3 = (k2(b + h) - k2(b - h)) / (2.0 * h);
        let d4 = (k2(b + h) - 2.0 * k2(b) + k2(b - h)) / (h * h);
        assert!((-d3 / c.kappa3 - 1.0).abs() < 1e-4);
        assert!((d4 / c.kappa4 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn variance_matches_ensemble() {
        let dos = exact_dos(8).unwrap();
        let ens = dos.ensemble(critical_beta()).unwrap();
        let c = cumulants(&dos, critical_beta());
        assert!((c.kappa2 / ens.variance() - 1.0).abs() < 1e-9);
        assert!((c.kappa1 / ens.mean_energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn specific_heat_matches_free_energy_curvature() {
        let dos = exact_dos(8).unwrap();
        let eval = CumulantEvaluator::new(&dos);
        let n = dos.sites() as f64;
        for b in [0.3, critical_beta(), 0.6] {
            let h = 1e-6 * b;
            // second derivative of (1/N) ln Z times beta^2
            let curv = (eval.ln_partition_step(b, h) + eval.ln_partition_step(b, -h)) / (h * h);
            let from_fd = b * b * curv / n;
            assert!((from_fd / specific_heat(&dos, b) - 1.0).abs() < 1e-4, "beta {b}");
        }
    }

    #[test]
    fn json_roundtrip_and_cache() {
        let dos = exact_dos(6).unwrap();
        let text = dos.to_json_string().unwrap();
        assert!(text.starts_with(r#"{"L":6,"levels":[{"E":-72,"g":"2"}"#));
        assert_eq!(IsingDos::from_json_str(&text).unwrap(), dos);
        let dir = std::env::temp_dir().join(format!("thermobin-unit-{}", std::process::id()));
        let first = load_or_compute(6, &dir).unwrap();
        assert!(cache_path(&dir, 6).exists());
        assert_eq!(load_or_compute(6, &dir).unwrap(), first);
        fs::write(cache_path(&dir, 6), "{\"L\":6,\"levels\":[]}").unwrap();
        assert_eq!(load_or_compute(6, &dir).unwrap(), first);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn full_resolution_gives_unit_ratio() {
        let dos = exact_dos(4).unwrap();
        let levels = dos.levels().count();
        let r = criticality_binning_study(&dos, critical_beta(), levels).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_fit_needs_three_sizes() {
        let d = vec![exact_dos(4).unwrap(), exact_dos(6).unwrap()];
        assert!(matches!(
            cumulant_scaling_fit(&d, ScalingObservable::Kappa4, None),
            Err(Error::InsufficientSizes(2))
        ));
    }
}
