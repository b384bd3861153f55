use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::GaussSumModel;
use super::FitError;

/// Fixed-width binning of `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Histogram, FitError> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(FitError::DegenerateRange { lo, hi });
        }
        if bins == 0 {
            return Err(FitError::Invalid("a histogram needs at least one bin".into()));
        }
        Ok(Histogram { lo, hi, counts: vec![0.0; bins] })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    pub fn fill(&mut self, x: f64) {
        if x >= self.lo && x < self.hi {
            let i = (((x - self.lo) / self.width()) as usize).min(self.bins() - 1);
            self.counts[i] += 1.0;
        }
    }

    pub fn entries(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Mean of the binned distribution, using bin centers.
    pub fn mean(&self) -> f64 {
        let n = self.entries();
        self.counts.iter().enumerate().map(|(i, c)| c * self.center(i)).sum::<f64>() / n
    }

    pub fn stddev(&self) -> f64 {
        let (n, m) = (self.entries(), self.mean());
        let var = self.counts.iter().enumerate().map(|(i, c)| c * (self.center(i) - m).powi(2)).sum::<f64>() / n;
        var.sqrt()
    }

    /// Bins with at least one entry, as (center, count).
    pub fn nonempty(&self) -> Vec<(f64, f64)> {
        self.counts.iter().enumerate().filter(|(_, c)| **c > 0.0).map(|(i, c)| (self.center(i), *c)).collect()
    }
}

/// Draw `events` points from `model` restricted to `range` by rejection
/// sampling under the flat envelope `peak_bound`, and bin them.
pub fn sample_histogram(model: &GaussSumModel, events: u64, bins: usize, range: (f64, f64), seed: u64) -> Result<Histogram, FitError> {
    let mut h = Histogram::new(bins, range.0, range.1)?;
    if events == 0 {
        return Err(FitError::Invalid("at least one event is required".into()));
    }
    let bound = model.peak_bound();
    if !(bound > 0.0) {
        return Err(FitError::Invalid("the model is identically zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    while accepted < events {
        let x = rng.gen_range(range.0..range.1);
        if rng.gen::<f64>() * bound < model.value(x) {
            h.fill(x);
            accepted += 1;
        }
    }
    Ok(h)
}
