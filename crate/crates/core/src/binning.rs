//! Optimal consecutive energy binnings: Lloyd-Max iteration, exact dynamic
//! programming and exhaustive search.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{binned_fisher, FisherReport};
use crate::spectra::{BinMoments, DiscreteSpectrum, ThermalEnsemble};

/// Bins with probability below this are treated as empty during iteration.
const EMPTY_BIN_MASS: f64 = 1e-15;
/// Relative jitter applied to quantile starts after the first.
const START_JITTER: f64 = 0.2;
/// Score differences below this (relative to the variance) count as ties.
const TIE_TOL: f64 = 1e-14;
const CONSECUTIVE_LIMIT: f64 = 1e6;
const ASSIGNMENT_LIMIT: f64 = 1e7;

/// Consecutive energy bins `[-inf, c_1), [c_1, c_2), ..., [c_{d-1}, +inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BinningRecord", into = "BinningRecord")]
pub struct Binning {
    cuts: Vec<f64>,
}

impl Binning {
    /// Bins from the interior cut points.
    pub fn new(cuts: Vec<f64>) -> Result<Self> {
        if cuts.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("bin cuts must be finite".into()));
        }
        if cuts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("bin cuts must be strictly increasing".into()));
        }
        Ok(Self { cuts })
    }

    /// The single bin covering everything.
    pub fn trivial() -> Self {
        Self { cuts: Vec::new() }
    }

    /// Bins from the full boundary list `b_0 < ... < b_d`; the outer two only
    /// delimit the spectrum and are replaced by `±inf`.
    pub fn from_boundaries(boundaries: &[f64]) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidParameter("a binning needs at least two boundaries".into()));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("boundaries must be strictly increasing".into()));
        }
        Self::new(boundaries[1..boundaries.len() - 1].to_vec())
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn num_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    /// `[-inf, c_1, ..., c_{d-1}, +inf]`.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cuts.len() + 2);
        out.push(f64::NEG_INFINITY);
        out.extend_from_slice(&self.cuts);
        out.push(f64::INFINITY);
        out
    }

    /// Mass and moments about the ensemble mean for each bin.
    pub fn moments(&self, ensemble: &ThermalEnsemble) -> Result<Vec<BinMoments>> {
        let b = self.boundaries();
        b.windows(2).map(|w| ensemble.interval_moments(w[0], w[1])).collect()
    }

    pub fn probabilities(&self, ensemble: &ThermalEnsemble) -> Result<Vec<f64>> {
        Ok(self.moments(ensemble)?.iter().map(|m| m.mass).collect())
    }

    /// Mean energy inside each bin (NaN for empty bins).
    pub fn bin_energies(&self, ensemble: &ThermalEnsemble) -> Result<Vec<f64>> {
        let mu = ensemble.mean_energy();
        Ok(self
            .moments(ensemble)?
            .iter()
            .map(|m| if m.mass > 0.0 { mu + m.first / m.mass } else { f64::NAN })
            .collect())
    }
}

/// JSON form of a binning: boundaries with infinities written as strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinningRecord {
    pub boundaries: Vec<serde_json::Value>,
}

/// Finite numbers stay numbers; `±inf` and NaN become `"inf"`, `"-inf"`, `"nan"`.
pub fn float_to_json(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::Value::from(x)
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn float_from_json(v: &serde_json::Value) -> Option<f64> {
    match v {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => match s.as_str() {
            "inf" | "+inf" | "Infinity" => Some(f64::INFINITY),
            "-inf" | "-Infinity" => Some(f64::NEG_INFINITY),
            "nan" | "NaN" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

impl From<Binning> for BinningRecord {
    fn from(b: Binning) -> Self {
        Self {
            boundaries: b.boundaries().into_iter().map(float_to_json).collect(),
        }
    }
}

impl TryFrom<BinningRecord> for Binning {
    type Error = Error;

    fn try_from(rec: BinningRecord) -> Result<Self> {
        let values = rec
            .boundaries
            .iter()
            .map(|v| float_from_json(v).ok_or_else(|| Error::InvalidParameter(format!("bad boundary {v}"))))
            .collect::<Result<Vec<_>>>()?;
        Binning::from_boundaries(&values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    LloydMax,
    DpExact,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub bins: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub num_starts: usize,
    pub mode: SolverMode,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            bins: 2,
            max_iters: 10_000,
            rel_tol: 1e-10,
            num_starts: 8,
            mode: SolverMode::LloydMax,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_bins(bins: usize) -> Self {
        Self {
            bins,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::InvalidParameter("number of bins must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("rel_tol must be positive".into()));
        }
        if self.num_starts == 0 {
            return Err(Error::InvalidParameter("num_starts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one solver start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: usize,
    pub iterations: usize,
    /// `max_a |b_a - (eps_a + eps_{a+1})/2|` over the energy standard deviation.
    pub residual: f64,
    pub converged: bool,
    pub reseeds: usize,
    pub coarse_fisher: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub mode: SolverMode,
    pub starts: Vec<StartRecord>,
    pub best_start: usize,
}

impl ConvergenceRecord {
    pub fn best(&self) -> &StartRecord {
        &self.starts[self.best_start]
    }

    fn single(mode: SolverMode, coarse_fisher: f64) -> Self {
        Self {
            mode,
            starts: vec![StartRecord {
                start: 0,
                iterations: 0,
                residual: 0.0,
                converged: true,
                reseeds: 0,
                coarse_fisher,
            }],
            best_start: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub binning: Binning,
    pub report: FisherReport,
    pub record: ConvergenceRecord,
}

/// Run the solver selected in `config`.
pub fn solve(ensemble: &ThermalEnsemble, config: &SolverConfig) -> Result<SolverOutcome> {
    config.validate()?;
    match config.mode {
        SolverMode::LloydMax => lloyd_max(ensemble, config),
        SolverMode::DpExact => {
            let binning = dp_exact(ensemble, config.bins)?;
            let report = binned_fisher(ensemble, &binning)?;
            let record = ConvergenceRecord::single(SolverMode::DpExact, report.coarse_fisher);
            Ok(SolverOutcome {
                binning,
                report,
                record,
            })
        }
        SolverMode::BruteForce => {
            let optimum = brute_force(ensemble, config.bins, false)?;
            let binning = optimum.binning.expect("consecutive search yields a binning");
            let report = binned_fisher(ensemble, &binning)?;
            let record = ConvergenceRecord::single(SolverMode::BruteForce, report.coarse_fisher);
            Ok(SolverOutcome {
                binning,
                report,
                record,
            })
        }
    }
}

// ---- Lloyd-Max ----

struct StartResult {
    cuts: Vec<f64>,
    report: FisherReport,
    record: StartRecord,
}

/// Multi-start Lloyd-Max iteration: boundaries move to the midpoints of
/// neighbouring bin energies until they stop moving.
pub fn lloyd_max(ensemble: &ThermalEnsemble, config: &SolverConfig) -> Result<SolverOutcome> {
    config.validate()?;
    let d = config.bins;
    if d < 2 {
        return Err(Error::InvalidParameter("Lloyd-Max needs at least 2 bins".into()));
    }
    if let Some(s) = ensemble.discrete() {
        if d > s.len() {
            return Err(Error::TooManyBins {
                requested: d,
                available: s.len(),
            });
        }
    }
    let quantiles = (1..d)
        .map(|a| ensemble.quantile(a as f64 / d as f64))
        .collect::<Result<Vec<f64>>>()?;
    let results = (0..config.num_starts)
        .into_par_iter()
        .map(|start| {
            let init = jittered_start(ensemble, &quantiles, start, config.seed);
            run_start(ensemble, init, start, config)
        })
        .collect::<Result<Vec<StartResult>>>()?;

    let mut best = 0;
    for (k, r) in results.iter().enumerate().skip(1) {
        let scale = results[best].report.thermal_fisher.max(f64::MIN_POSITIVE);
        if r.report.coarse_fisher > results[best].report.coarse_fisher + TIE_TOL * scale {
            best = k;
        }
    }
    let record = ConvergenceRecord {
        mode: SolverMode::LloydMax,
        starts: results.iter().map(|r| r.record.clone()).collect(),
        best_start: best,
    };
    let chosen = &results[best];
    let outcome = SolverOutcome {
        binning: Binning::new(chosen.cuts.clone())?,
        report: chosen.report.clone(),
        record,
    };
    if !outcome.record.best().converged {
        return Err(Error::NoConvergence(Box::new(outcome)));
    }
    Ok(outcome)
}

fn jittered_start(ensemble: &ThermalEnsemble, quantiles: &[f64], start: usize, seed: u64) -> Vec<f64> {
    let mut cuts = quantiles.to_vec();
    if start > 0 {
        let (lo, hi) = ensemble.effective_support();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(start as u64);
        for a in 0..cuts.len() {
            let left = if a == 0 { lo } else { quantiles[a - 1] };
            let right = if a + 1 == quantiles.len() { hi } else { quantiles[a + 1] };
            let gap = (quantiles[a] - left).min(right - quantiles[a]).max(0.0);
            cuts[a] = quantiles[a] + START_JITTER * gap * rng.random_range(-1.0..=1.0);
        }
        cuts.sort_by(f64::total_cmp);
    }
    match ensemble.discrete() {
        Some(s) => cuts.iter().map(|&c| snap_to_gap(s.energies(), c)).collect(),
        None => cuts,
    }
}

/// Midpoint of the gap between adjacent levels that contains `x`.
pub fn snap_to_gap(energies: &[f64], x: f64) -> f64 {
    let i = energies.partition_point(|&e| e <= x).clamp(1, energies.len() - 1);
    0.5 * (energies[i - 1] + energies[i])
}

fn run_start(ensemble: &ThermalEnsemble, mut cuts: Vec<f64>, start: usize, config: &SolverConfig) -> Result<StartResult> {
    let discrete = ensemble.discrete();
    let spread = ensemble.variance().sqrt().max(f64::MIN_POSITIVE);
    let mu = ensemble.mean_energy();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut reseeds = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;

    while iterations < config.max_iters {
        iterations += 1;
        let binning = Binning::new(dedup_sorted(cuts.clone()))?;
        let moments = binning.moments(ensemble)?;
        if binning.num_bins() < config.bins || moments.iter().any(|m| m.mass < EMPTY_BIN_MASS) {
            cuts = reseed(ensemble, &binning, &moments, config.bins);
            reseeds += 1;
            continue;
        }
        let eps: Vec<f64> = moments.iter().map(|m| mu + m.first / m.mass).collect();
        let targets: Vec<f64> = eps
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                match discrete {
                    Some(s) => snap_to_gap(s.energies(), mid),
                    None => mid,
                }
            })
            .collect();
        residual = cuts
            .iter()
            .zip(&targets)
            .map(|(c, t)| (c - t).abs())
            .fold(0.0, f64::max)
            / spread;
        if let Some(s) = discrete {
            let key: Vec<u64> = targets.iter().map(|x| x.to_bits()).collect();
            if residual == 0.0 {
                converged = true;
                break;
            }
            if let Some(&first) = seen.get(&key) {
                // a cycle of snapped cut sets: keep its best member
                cuts = best_in_cycle(ensemble, &history[first..])?;
                residual = snapped_residual(ensemble, s, &cuts, spread)?;
                converged = true;
                break;
            }
            seen.insert(key, history.len());
            history.push(targets.clone());
        } else if residual <= config.rel_tol {
            converged = true;
            break;
        }
        cuts = targets;
    }

    if let Some(s) = discrete {
        if converged {
            cuts = exchange_polish(ensemble, s, cuts)?;
            residual = snapped_residual(ensemble, s, &cuts, spread)?;
        }
    }
    let binning = Binning::new(cuts.clone())?;
    let report = binned_fisher(ensemble, &binning)?;
    Ok(StartResult {
        cuts,
        record: StartRecord {
            start,
            iterations,
            residual,
            converged,
            reseeds,
            coarse_fisher: report.coarse_fisher,
        },
        report,
    })
}

/// Local search over gap indices once the snapped midpoint rule has settled:
/// per-cut ascent between neighbours, joint one-gap shifts, then relocation of
/// a single cut anywhere in the spectrum. The midpoint rule alone can stop
/// short of the optimum, or in a different basin altogether.
fn exchange_polish(ensemble: &ThermalEnsemble, s: &DiscreteSpectrum, cuts: Vec<f64>) -> Result<Vec<f64>> {
    let (scorer, _) = IntervalScorer::new(ensemble)?;
    let e = s.energies();
    let n = e.len();
    let mut idx: Vec<usize> = cuts.iter().map(|&c| e.partition_point(|&x| x < c)).collect();
    let tol = TIE_TOL * ensemble.variance().max(f64::MIN_POSITIVE);
    let mut current = local_ascent(&scorer, &mut idx, n, tol);
    loop {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for a in 0..idx.len() {
            for c in 1..n {
                if idx.contains(&c) {
                    continue;
                }
                let mut trial = idx.clone();
                trial[a] = c;
                trial.sort_unstable();
                let value = local_ascent(&scorer, &mut trial, n, tol);
                if value > current + tol && best.as_ref().is_none_or(|(b, _)| value > *b) {
                    best = Some((value, trial));
                }
            }
        }
        match best {
            Some((value, trial)) => {
                current = value;
                idx = trial;
            }
            None => return Ok(cuts_from_indices(e, &idx)),
        }
    }
}

fn partition_score(scorer: &IntervalScorer, idx: &[usize], n: usize) -> f64 {
    let mut prev = 0;
    let mut sum = 0.0;
    for &c in idx.iter().chain(std::iter::once(&n)) {
        sum += scorer.score(prev, c);
        prev = c;
    }
    sum
}

/// Coordinate ascent plus joint one-gap shifts until neither improves.
fn local_ascent(scorer: &IntervalScorer, idx: &mut [usize], n: usize, tol: f64) -> f64 {
    let k = idx.len();
    // joint moves for few cuts, single-cut moves otherwise
    let moves: Vec<Vec<i64>> = if k <= 5 {
        (0..3usize.pow(k as u32))
            .map(|code| (0..k).map(|a| (code / 3usize.pow(a as u32) % 3) as i64 - 1).collect::<Vec<i64>>())
            .filter(|m| m.iter().filter(|&&x| x != 0).count() > 1)
            .collect()
    } else {
        Vec::new()
    };
    loop {
        let mut moved = true;
        while moved {
            moved = false;
            for a in 0..k {
                let lo = if a == 0 { 0 } else { idx[a - 1] };
                let hi = if a + 1 == k { n } else { idx[a + 1] };
                let pair = |c: usize| scorer.score(lo, c) + scorer.score(c, hi);
                let here = pair(idx[a]);
                let (arg, value) = (lo + 1..hi)
                    .map(|c| (c, pair(c)))
                    .fold((idx[a], here), |acc, x| if x.1 > acc.1 { x } else { acc });
                if value > here + tol {
                    idx[a] = arg;
                    moved = true;
                }
            }
        }
        let current = partition_score(scorer, idx, n);
        let mut best: Option<(f64, Vec<usize>)> = None;
        for m in &moves {
            let trial: Vec<usize> = idx.iter().zip(m).map(|(&i, &d)| (i as i64 + d) as usize).collect();
            let valid = trial[0] >= 1 && trial[k - 1] < n && trial.windows(2).all(|w| w[1] > w[0]);
            if !valid {
                continue;
            }
            let value = partition_score(scorer, &trial, n);
            if value > current + tol && best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, trial));
            }
        }
        match best {
            Some((_, trial)) => idx.copy_from_slice(&trial),
            None => return current,
        }
    }
}

fn dedup_sorted(mut cuts: Vec<f64>) -> Vec<f64> {
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

fn best_in_cycle(ensemble: &ThermalEnsemble, members: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in members {
        let c = binned_fisher(ensemble, &Binning::new(cuts.clone())?)?.coarse_fisher;
        if best.as_ref().is_none_or(|(bc, _)| c > *bc) {
            best = Some((c, cuts.clone()));
        }
    }
    Ok(best.expect("cycle is nonempty").1)
}

fn snapped_residual(ensemble: &ThermalEnsemble, s: &DiscreteSpectrum, cuts: &[f64], spread: f64) -> Result<f64> {
    let eps = Binning::new(cuts.to_vec())?.bin_energies(ensemble)?;
    Ok(cuts
        .iter()
        .zip(eps.windows(2))
        .map(|(c, w)| (c - snap_to_gap(s.energies(), 0.5 * (w[0] + w[1]))).abs())
        .fold(0.0, f64::max)
        / spread)
}

/// Replace an empty bin by splitting the bin with the largest within-bin
/// variance at its conditional mean energy.
fn reseed(ensemble: &ThermalEnsemble, binning: &Binning, moments: &[BinMoments], bins: usize) -> Vec<f64> {
    let mut cuts = binning.cuts().to_vec();
    if cuts.len() + 1 == bins {
        if let Some(k) = moments.iter().position(|m| m.mass < EMPTY_BIN_MASS) {
            cuts.remove(if k < cuts.len() { k } else { k - 1 });
        }
    }
    let mu = ensemble.mean_energy();
    while cuts.len() + 1 < bins {
        let Ok(current) = Binning::new(cuts.clone()) else { break };
        let Ok(moments) = current.moments(ensemble) else { break };
        let bounds = current.boundaries();
        let mut order: Vec<usize> = (0..moments.len()).filter(|&k| moments[k].mass >= EMPTY_BIN_MASS).collect();
        order.sort_by(|&a, &b| moments[b].within_variance().total_cmp(&moments[a].within_variance()));
        let split = order.into_iter().find_map(|k| {
            let (a, b) = (bounds[k], bounds[k + 1]);
            let centre = mu + moments[k].first / moments[k].mass;
            let cut = match ensemble.discrete() {
                Some(s) => {
                    let inside: Vec<f64> = s.energies().iter().copied().filter(|&e| e >= a && e < b).collect();
                    if inside.len() < 2 {
                        return None;
                    }
                    snap_to_gap(&inside, centre)
                }
                None => centre,
            };
            (cut > a && cut < b && moments[k].within_variance() > 0.0).then_some(cut)
        });
        let Some(cut) = split else { break };
        cuts.push(cut);
        cuts.sort_by(f64::total_cmp);
    }
    cuts
}

// ---- exact search over discrete spectra ----

/// Prefix sums for `O(1)` scoring of a run of consecutive levels.
struct IntervalScorer {
    mass: Vec<f64>,
    first: Vec<f64>,
}

impl IntervalScorer {
    fn new(ensemble: &ThermalEnsemble) -> Result<(Self, &DiscreteSpectrum)> {
        let (Some(s), Some(q)) = (ensemble.discrete(), ensemble.level_probabilities()) else {
            return Err(Error::InvalidParameter("exact binning needs a discrete spectrum".into()));
        };
        let mu = ensemble.mean_energy();
        let n = s.len();
        let mut mass = vec![0.0; n + 1];
        let mut first = vec![0.0; n + 1];
        for i in 0..n {
            mass[i + 1] = mass[i] + q[i];
            first[i + 1] = first[i] + q[i] * (s.energies()[i] - mu);
        }
        Ok((Self { mass, first }, s))
    }

    /// `(sum q (E - mu))^2 / sum q` over levels `i..j`.
    fn score(&self, i: usize, j: usize) -> f64 {
        let m = self.mass[j] - self.mass[i];
        if m <= 0.0 {
            return 0.0;
        }
        let f = self.first[j] - self.first[i];
        f * f / m
    }
}

fn cuts_from_indices(energies: &[f64], indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&i| 0.5 * (energies[i - 1] + energies[i])).collect()
}

fn check_bins(s: &DiscreteSpectrum, d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter("number of bins must be at least 1".into()));
    }
    if d > s.len() {
        return Err(Error::TooManyBins {
            requested: d,
            available: s.len(),
        });
    }
    Ok(())
}

/// Globally optimal consecutive binning by dynamic programming over cut positions.
/// Near-ties resolve to the lexicographically smallest cut-index vector.
pub fn dp_exact(ensemble: &ThermalEnsemble, d: usize) -> Result<Binning> {
    let (scorer, s) = IntervalScorer::new(ensemble)?;
    check_bins(s, d)?;
    let n = s.len();
    let tol = TIE_TOL * ensemble.variance().max(f64::MIN_POSITIVE);
    // suffix[k][i]: best score for levels i..n split into k+1 bins
    let mut suffix: Vec<Vec<f64>> = Vec::with_capacity(d);
    suffix.push((0..=n).map(|i| scorer.score(i, n)).collect());
    for k in 1..d.saturating_sub(1) {
        let prev = &suffix[k - 1];
        let row: Vec<f64> = (0..=n)
            .into_par_iter()
            .map(|i| {
                if i + k + 1 > n {
                    return f64::NEG_INFINITY;
                }
                (i + 1..=n - k)
                    .map(|j| scorer.score(i, j) + prev[j])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        suffix.push(row);
    }
    let mut indices = Vec::with_capacity(d - 1);
    let mut i = 0;
    for remaining in (1..d).rev() {
        let tail = &suffix[remaining - 1];
        let options = (i + 1..=n - remaining).map(|j| (j, scorer.score(i, j) + tail[j]));
        let best = options.clone().map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
        let j = options
            .clone()
            .find(|&(_, v)| v >= best - tol)
            .map(|(j, _)| j)
            .expect("at least one cut position");
        indices.push(j);
        i = j;
    }
    Binning::new(cuts_from_indices(s.energies(), &indices))
}

/// Result of an exhaustive search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceOptimum {
    pub coarse_fisher: f64,
    /// Outcome label of each distinct level.
    pub assignment: Vec<usize>,
    /// Present when the optimum is a consecutive binning.
    pub binning: Option<Binning>,
}

/// Exhaustive optimum over consecutive cuts, or over every assignment of
/// levels to `d` outcomes when `allow_nonconsecutive` is set.
pub fn brute_force(ensemble: &ThermalEnsemble, d: usize, allow_nonconsecutive: bool) -> Result<BruteForceOptimum> {
    let (scorer, s) = IntervalScorer::new(ensemble)?;
    check_bins(s, d)?;
    let n = s.len();
    let b4 = ensemble.beta().powi(4);
    let tol = TIE_TOL * ensemble.variance().max(f64::MIN_POSITIVE);
    if !allow_nonconsecutive {
        let count = binomial_f64(n - 1, d - 1);
        if count > CONSECUTIVE_LIMIT {
            return Err(Error::InstanceTooLarge(format!(
                "{count:.3e} consecutive binnings exceed the limit of {CONSECUTIVE_LIMIT:e}"
            )));
        }
        let mut idx: Vec<usize> = (1..d).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        loop {
            let mut total = 0.0;
            let mut prev = 0;
            for &c in idx.iter().chain(std::iter::once(&n)) {
                total += scorer.score(prev, c);
                prev = c;
            }
            if best.as_ref().is_none_or(|(b, _)| total > b + tol) {
                best = Some((total, idx.clone()));
            }
            if !next_combination(&mut idx, n - 1) {
                break;
            }
        }
        let (score, idx) = best.expect("at least one binning");
        let mut assignment = vec![0; n];
        for (bin, w) in std::iter::once(0).chain(idx.iter().copied()).chain(std::iter::once(n)).collect::<Vec<_>>().windows(2).enumerate() {
            for a in &mut assignment[w[0]..w[1]] {
                *a = bin;
            }
        }
        return Ok(BruteForceOptimum {
            coarse_fisher: b4 * score,
            assignment,
            binning: Some(Binning::new(cuts_from_indices(s.energies(), &idx))?),
        });
    }

    let count = (d as f64).powi(n as i32);
    if count > ASSIGNMENT_LIMIT {
        return Err(Error::InstanceTooLarge(format!(
            "{count:.3e} level assignments exceed the limit of {ASSIGNMENT_LIMIT:e}"
        )));
    }
    let q = ensemble.level_probabilities().expect("discrete ensemble");
    let mu = ensemble.mean_energy();
    let dev: Vec<f64> = s.energies().iter().map(|e| e - mu).collect();
    let mut labels = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut mass = vec![0.0; d];
    let mut first = vec![0.0; d];
    loop {
        mass.iter_mut().for_each(|x| *x = 0.0);
        first.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            mass[labels[i]] += q[i];
            first[labels[i]] += q[i] * dev[i];
        }
        let total: f64 = mass
            .iter()
            .zip(&first)
            .map(|(m, f)| if *m > 0.0 { f * f / m } else { 0.0 })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| total > b + tol) {
            best = Some((total, labels.clone()));
        }
        // odometer increment, first level fastest
        let mut pos = 0;
        while pos < n {
            labels[pos] += 1;
            if labels[pos] < d {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }
    let (score, assignment) = best.expect("at least one assignment");
    let binning = consecutive_binning(s.energies(), &assignment)?;
    Ok(BruteForceOptimum {
        coarse_fisher: b4 * score,
        assignment,
        binning,
    })
}

/// The binning realizing `assignment` when each label occupies one run of levels.
fn consecutive_binning(energies: &[f64], assignment: &[usize]) -> Result<Option<Binning>> {
    let mut runs = vec![assignment[0]];
    let mut cut_idx = Vec::new();
    for i in 1..assignment.len() {
        if assignment[i] != assignment[i - 1] {
            if runs.contains(&assignment[i]) {
                return Ok(None);
            }
            runs.push(assignment[i]);
            cut_idx.push(i);
        }
    }
    Ok(Some(Binning::new(cuts_from_indices(energies, &cut_idx))?))
}

/// Advance a strictly increasing index vector with entries in `1..=max`.
fn next_combination(idx: &mut [usize], max: usize) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        if idx[pos] < max - (k - 1 - pos) {
            idx[pos] += 1;
            for later in pos + 1..k {
                idx[later] = idx[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// One evaluated point of a ratio landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub cuts: Vec<f64>,
    pub ratio: f64,
}

/// `C/F` over the product of per-cut grids, skipping non-increasing combinations.
pub fn ratio_landscape(ensemble: &ThermalEnsemble, d: usize, grids: &[Vec<f64>]) -> Result<Vec<LandscapePoint>> {
    if d < 2 || grids.len() != d - 1 {
        return Err(Error::InvalidParameter(format!(
            "a {d}-bin landscape needs {} cut grids, got {}",
            d.saturating_sub(1),
            grids.len()
        )));
    }
    let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
    for grid in grids {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                let floor = prefix.last().copied();
                grid.iter()
                    .filter(move |&&x| floor.is_none_or(|p| x > p))
                    .map(move |&x| {
                        let mut c = prefix.clone();
                        c.push(x);
                        c
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    combos
        .into_par_iter()
        .map(|cuts| {
            let report = binned_fisher(ensemble, &Binning::new(cuts.clone())?)?;
            Ok(LandscapePoint {
                cuts,
                ratio: report.ratio,
            })
        })
        .collect()
}
