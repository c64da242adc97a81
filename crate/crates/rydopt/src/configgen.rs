//! Random configuration generation and distance-distribution fitting.
//!
//! Initial configurations are drawn by sequential rejection inside a square
//! box: the first atom lands anywhere in `[-R_max, R_max]^2`, each further
//! atom is redrawn until it clears a minimum distance `R_min` from every
//! atom already placed.
//!
//! Because the consensus optimizer contracts configurations, comparing its
//! final configurations against fresh draws from the *initial* box would be
//! unfair. Instead, the pairwise-distance distribution of a batch of final
//! configurations is estimated with a Gaussian kernel density (reflected at
//! zero, since distances are positive), and a new `(R_min, R_max)` pair is
//! fitted by grid search so that the box sampler's own distance density
//! minimizes the Kullback-Leibler divergence from the target. Draws from
//! the fitted box are the fair random baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

use crate::hardware::Configuration;

/// Numerical floor applied to densities inside the KL logarithm.
pub const KL_DENSITY_FLOOR: f64 = 1e-12;

/// Bandwidth floor for degenerate (single-valued) sample sets.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ConfigGenError {
    #[error("invalid box sampler: {0}")]
    InvalidSampler(String),
    #[error("could not place atom {atom_index} after {attempts} draws (r_min too tight)")]
    InfeasibleSampler { atom_index: usize, attempts: usize },
    #[error("density estimation needs at least 2 samples, got {0}")]
    NotEnoughSamples(usize),
    #[error("distance samples must be positive and finite (offending value {0})")]
    InvalidSample(f64),
    #[error("no feasible (r_min, r_max) candidate on the search grid")]
    EmptyFeasibleGrid,
    #[error(transparent)]
    Hardware(#[from] crate::hardware::HardwareError),
}

/// Sequential rejection sampler for atom configurations in a square box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSampler {
    /// Box half-width: positions live in `[-r_max, r_max]^2`.
    pub r_max: f64,
    /// Minimum pairwise distance (`0` disables the constraint).
    pub r_min: f64,
    pub num_atoms: usize,
    /// Per-atom draw budget before the sampler reports infeasibility.
    pub max_resamples: usize,
}

impl BoxSampler {
    pub fn new(
        r_min: f64,
        r_max: f64,
        num_atoms: usize,
        max_resamples: usize,
    ) -> Result<Self, ConfigGenError> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(ConfigGenError::InvalidSampler(format!("r_max = {r_max}")));
        }
        if !(r_min >= 0.0) || !r_min.is_finite() {
            return Err(ConfigGenError::InvalidSampler(format!("r_min = {r_min}")));
        }
        // box diagonal; beyond it two atoms cannot be placed at all
        if num_atoms >= 2 && r_min >= 2.0 * std::f64::consts::SQRT_2 * r_max {
            return Err(ConfigGenError::InvalidSampler(format!(
                "r_min = {r_min} exceeds the box diagonal of r_max = {r_max}"
            )));
        }
        if num_atoms == 0 {
            return Err(ConfigGenError::InvalidSampler("num_atoms = 0".into()));
        }
        if max_resamples == 0 {
            return Err(ConfigGenError::InvalidSampler("max_resamples = 0".into()));
        }
        Ok(Self {
            r_max,
            r_min,
            num_atoms,
            max_resamples,
        })
    }

    /// Draw one configuration: first atom unconstrained, each subsequent
    /// atom redrawn until it is at least `r_min` away from all placed atoms.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Configuration, ConfigGenError> {
        let mut placed: Vec<[f64; 2]> = Vec::with_capacity(self.num_atoms);
        for atom_index in 0..self.num_atoms {
            let mut attempts = 0usize;
            loop {
                let candidate = [
                    rng.gen_range(-self.r_max..=self.r_max),
                    rng.gen_range(-self.r_max..=self.r_max),
                ];
                let ok = placed
                    .iter()
                    .all(|p| crate::hardware::dist(*p, candidate) >= self.r_min);
                if ok {
                    placed.push(candidate);
                    break;
                }
                attempts += 1;
                if attempts >= self.max_resamples {
                    return Err(ConfigGenError::InfeasibleSampler {
                        atom_index,
                        attempts,
                    });
                }
            }
        }
        Ok(Configuration::new(placed)?)
    }

    /// Draw configurations until at least `n_distances` pairwise distances
    /// have been collected (whole configurations only).
    pub fn sample_distances<R: Rng>(
        &self,
        n_distances: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>, ConfigGenError> {
        let per_config = self.num_atoms * (self.num_atoms - 1) / 2;
        if per_config == 0 {
            return Err(ConfigGenError::InvalidSampler(
                "need at least 2 atoms to collect pairwise distances".into(),
            ));
        }
        let mut out = Vec::with_capacity(n_distances + per_config);
        while out.len() < n_distances {
            out.extend(self.sample(rng)?.pairwise_distances());
        }
        Ok(out)
    }
}

/// Gaussian kernel density estimate of a set of pairwise distances,
/// reflected at zero so no probability mass leaks to negative distances.
#[derive(Debug, Clone)]
pub struct DistanceDensity {
    samples: Vec<f64>,
    bandwidth: f64,
    grid: Vec<f64>,
    density: Vec<f64>,
}

const GRID_POINTS: usize = 512;

/// Silverman's rule of thumb on the raw samples, floored for degenerate
/// sample sets.
fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let quantile = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * n.powf(-0.2)).max(BANDWIDTH_FLOOR)
}

impl DistanceDensity {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Evaluate the (reflected) kernel density at an arbitrary point.
    pub fn density_at(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let h = self.bandwidth;
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * self.samples.len() as f64);
        let mut acc = 0.0;
        for &s in &self.samples {
            let u = (x - s) / h;
            let v = (x + s) / h;
            acc += (-0.5 * u * u).exp() + (-0.5 * v * v).exp();
        }
        acc * norm
    }

    /// Trapezoid integral of the density over its grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Grid point with the highest density value.
    pub fn argmax(&self) -> f64 {
        let mut best = 0;
        for i in 1..self.density.len() {
            if self.density[i] > self.density[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    pub fn mean_sample(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Write `distance,density` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "distance,density")?;
        for (x, d) in self.grid.iter().zip(&self.density) {
            writeln!(w, "{x},{d}")?;
        }
        Ok(())
    }
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
    }
    acc
}

/// Estimate the distance density of a sample set on a grid covering
/// `[0, max + 3 bandwidths]`.
pub fn estimate_density(distances: &[f64]) -> Result<DistanceDensity, ConfigGenError> {
    if distances.len() < 2 {
        return Err(ConfigGenError::NotEnoughSamples(distances.len()));
    }
    for &d in distances {
        if !d.is_finite() || d <= 0.0 {
            return Err(ConfigGenError::InvalidSample(d));
        }
    }
    let bandwidth = silverman_bandwidth(distances);
    let max = distances.iter().fold(0.0f64, |a, &b| a.max(b));
    let hi = max + 3.0 * bandwidth;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| hi * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    // canonical sample order makes the estimate exactly permutation-invariant
    let mut samples = distances.to_vec();
    samples.sort_by(|a, b| a.total_cmp(b));
    let mut dd = DistanceDensity {
        samples,
        bandwidth,
        grid,
        density: Vec::new(),
    };
    dd.density = dd.grid.iter().map(|&x| dd.density_at(x)).collect();
    Ok(dd)
}

/// `KL(p || q)` via the trapezoid rule on a shared grid, with both
/// densities floored before the logarithm.
pub fn kl_on_grid(grid: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let integrand: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let pi = pi.max(KL_DENSITY_FLOOR);
            let qi = qi.max(KL_DENSITY_FLOOR);
            pi * (pi / qi).ln()
        })
        .collect();
    trapezoid(grid, &integrand)
}

/// Search ranges and Monte Carlo budget of [`fit_box`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub r_min_range: (f64, f64),
    pub r_min_steps: usize,
    pub r_max_range: (f64, f64),
    pub r_max_steps: usize,
    /// Minimum pairwise-distance sample count per candidate.
    pub mc_distance_samples: usize,
    pub max_resamples: usize,
    pub seed: u64,
    /// Number of grid points the KL integral is evaluated on.
    pub kl_grid_points: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            r_min_range: (0.2, 2.0),
            r_min_steps: 20,
            r_max_range: (0.5, 4.0),
            r_max_steps: 20,
            mc_distance_samples: 20_000,
            max_resamples: 10_000,
            seed: 0,
            kl_grid_points: 160,
        }
    }
}

impl FitOptions {
    pub fn r_min_values(&self) -> Vec<f64> {
        linspace(self.r_min_range.0, self.r_min_range.1, self.r_min_steps)
    }

    pub fn r_max_values(&self) -> Vec<f64> {
        linspace(self.r_max_range.0, self.r_max_range.1, self.r_max_steps)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// A fitted sampler together with the divergence it achieved.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FittedBox {
    pub r_min: f64,
    pub r_max: f64,
    pub kl: f64,
}

impl FittedBox {
    pub fn sampler(&self, num_atoms: usize, max_resamples: usize) -> BoxSampler {
        BoxSampler::new(self.r_min, self.r_max, num_atoms, max_resamples)
            .expect("fitted parameters came from a feasible candidate")
    }
}

/// Monte Carlo KL of one candidate sampler against the target, on the
/// down-sampled target grid. `None` when the candidate cannot place atoms.
fn candidate_kl(
    sampler: &BoxSampler,
    target_grid: &[f64],
    target_density: &[f64],
    n_samples: usize,
    rng: &mut ChaCha12Rng,
) -> Option<f64> {
    let distances = sampler.sample_distances(n_samples, rng).ok()?;
    let cand = estimate_density(&distances).ok()?;
    let q: Vec<f64> = target_grid.iter().map(|&x| cand.density_at(x)).collect();
    Some(kl_on_grid(target_grid, target_density, &q))
}

/// Fit `(R_min, R_max)` by exhaustive grid search: each candidate's induced
/// distance density is estimated from a fixed-seed Monte Carlo draw and
/// scored by `KL(target || candidate)`. Ties break toward smaller `R_max`,
/// then smaller `R_min`. Deterministic for a given seed and grid.
pub fn fit_box(
    target: &DistanceDensity,
    num_atoms: usize,
    opts: &FitOptions,
) -> Result<FittedBox, ConfigGenError> {
    if num_atoms < 2 {
        return Err(ConfigGenError::InvalidSampler(
            "fitting needs at least 2 atoms".into(),
        ));
    }
    // KL is evaluated on a thinned copy of the target grid
    let stride = (target.grid().len() / opts.kl_grid_points.max(2)).max(1);
    let kl_grid: Vec<f64> = target.grid().iter().step_by(stride).copied().collect();
    let kl_target: Vec<f64> = target.density().iter().step_by(stride).copied().collect();

    let mut candidates = Vec::new();
    for &r_min in &opts.r_min_values() {
        for &r_max in &opts.r_max_values() {
            candidates.push((r_min, r_max));
        }
    }

    let scored: Vec<Option<(f64, f64, f64)>> = candidates
        .par_iter()
        .enumerate()
        .map(|(idx, &(r_min, r_max))| {
            let sampler = BoxSampler::new(r_min, r_max, num_atoms, opts.max_resamples).ok()?;
            let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
            rng.set_stream(idx as u64 + 1);
            let kl = candidate_kl(
                &sampler,
                &kl_grid,
                &kl_target,
                opts.mc_distance_samples,
                &mut rng,
            )?;
            Some((kl, r_max, r_min))
        })
        .collect();

    let best = scored
        .into_iter()
        .flatten()
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.total_cmp(&b.2))
        })
        .ok_or(ConfigGenError::EmptyFeasibleGrid)?;

    Ok(FittedBox {
        r_min: best.2,
        r_max: best.1,
        kl: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_respects_min_distance() {
        let s = BoxSampler::new(1.0, 2.5, 4, 10_000).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let cfg = s.sample(&mut rng).unwrap();
            assert!(cfg.min_pairwise_distance().unwrap() >= 1.0);
            for p in cfg.positions() {
                assert!(p[0].abs() <= 2.5 && p[1].abs() <= 2.5);
            }
        }
    }

    #[test]
    fn sampler_reports_infeasibility_with_atom_index() {
        // feasible by the diagonal bound but practically impossible for 3 atoms
        let s = BoxSampler::new(2.7, 1.0, 3, 200).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut saw_failure = false;
        for _ in 0..10 {
            if let Err(ConfigGenError::InfeasibleSampler { atom_index, .. }) = s.sample(&mut rng) {
                assert!(atom_index >= 1);
                saw_failure = true;
                break;
            }
        }
        assert!(saw_failure);
    }

    #[test]
    fn sampler_rejects_impossible_bounds() {
        assert!(BoxSampler::new(3.0, 1.0, 2, 100).is_err());
        assert!(BoxSampler::new(-0.1, 1.0, 2, 100).is_err());
    }

    #[test]
    fn point_mass_density_peaks_at_sample() {
        let samples = vec![1.0; 50];
        let d = estimate_density(&samples).unwrap();
        let cell = d.grid()[1] - d.grid()[0];
        assert!((d.argmax() - 1.0).abs() <= cell);
    }

    #[test]
    fn well_separated_clusters_give_bimodal_density() {
        let mut samples = vec![1.0, 1.02, 0.98, 1.01, 0.99];
        samples.extend([3.0, 3.02, 2.98, 3.01, 2.99]);
        let d = estimate_density(&samples).unwrap();
        // count strict local maxima of the gridded density
        let vals = d.density();
        let mut maxima = 0;
        for i in 1..vals.len() - 1 {
            if vals[i] > vals[i - 1] && vals[i] > vals[i + 1] {
                maxima += 1;
            }
        }
        assert_eq!(maxima, 2);
    }

    #[test]
    fn density_integrates_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let s = BoxSampler::new(0.5, 2.0, 3, 10_000).unwrap();
        let distances = s.sample_distances(5000, &mut rng).unwrap();
        let d = estimate_density(&distances).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-3, "integral {}", d.integral());
    }

    #[test]
    fn density_is_permutation_invariant() {
        let mut samples: Vec<f64> = (1..=40).map(|i| 0.5 + 0.1 * i as f64).collect();
        let d1 = estimate_density(&samples).unwrap();
        samples.reverse();
        samples.swap(3, 17);
        let d2 = estimate_density(&samples).unwrap();
        assert_eq!(d1.density(), d2.density());
        assert_eq!(d1.bandwidth(), d2.bandwidth());
    }

    #[test]
    fn density_rejects_bad_samples() {
        assert!(matches!(
            estimate_density(&[1.0]),
            Err(ConfigGenError::NotEnoughSamples(1))
        ));
        assert!(matches!(
            estimate_density(&[1.0, -2.0]),
            Err(ConfigGenError::InvalidSample(_))
        ));
    }

    #[test]
    fn kl_of_identical_densities_is_zero() {
        let grid = linspace(0.0, 5.0, 100);
        let p: Vec<f64> = grid.iter().map(|x| (-x).exp()).collect();
        assert_eq!(kl_on_grid(&grid, &p, &p), 0.0);
    }

    #[test]
    fn kl_penalizes_mismatch() {
        let grid = linspace(0.0, 5.0, 200);
        let p: Vec<f64> = grid.iter().map(|x| (-(x - 1.0f64).powi(2)).exp()).collect();
        let q: Vec<f64> = grid.iter().map(|x| (-(x - 3.0f64).powi(2)).exp()).collect();
        assert!(kl_on_grid(&grid, &p, &q) > kl_on_grid(&grid, &p, &p));
    }

    #[test]
    fn csv_export_shape() {
        let d = estimate_density(&[0.9, 1.1, 1.0, 1.2, 0.8]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "distance,density");
        assert_eq!(lines.count(), GRID_POINTS);
    }
}
