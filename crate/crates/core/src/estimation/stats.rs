use statrs::function::gamma::ln_gamma;

use super::EstimationError;

/// Bias correction for the sample standard deviation of `n` normal draws:
/// `sqrt((n-1)/2) * Γ((n-1)/2) / Γ(n/2)`.
pub fn sigma_correction(n: usize) -> Result<f64, EstimationError> {
    if n < 2 {
        return Err(EstimationError::Domain("sigma correction needs n >= 2"));
    }
    let m = (n - 1) as f64;
    Ok((m / 2.0).sqrt() * (ln_gamma(m / 2.0) - ln_gamma(n as f64 / 2.0)).exp())
}

/// Spread of a measurement series and of its batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Samples used (whole batches only).
    pub n: usize,
    pub batch_size: usize,
    pub batches: usize,
    pub mean: f64,
    /// Corrected single-sample deviation, σ_1.
    pub std_dev: f64,
    /// Observed deviation of the batch means, σ_N. Falls back to the
    /// prediction when there is only one batch.
    pub std_of_means: f64,
    /// Samples beyond the last whole batch.
    pub rejected: usize,
}

impl BatchStats {
    /// `std_dev / sqrt(batch_size)`.
    pub fn predicted_std_of_means(&self) -> f64 {
        self.std_dev / (self.batch_size as f64).sqrt()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Corrected sample standard deviation; 0 for fewer than two values.
pub fn corrected_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    var.sqrt() * sigma_correction(v.len()).unwrap_or(1.0)
}

/// Splits `values` into consecutive batches of `batch_size` and reports the
/// spread of single samples and of batch means.
pub fn batch_stats(values: &[f64], batch_size: usize) -> Result<BatchStats, EstimationError> {
    if batch_size < 1 {
        return Err(EstimationError::Domain("batch size must be at least 1"));
    }
    if values.len() < batch_size {
        return Err(EstimationError::Domain("fewer values than one batch"));
    }
    let batches = values.len() / batch_size;
    let used = &values[..batches * batch_size];
    let std_dev = corrected_std(used);
    let std_of_means = if batches >= 2 {
        let means: Vec<f64> = used.chunks_exact(batch_size).map(mean).collect();
        corrected_std(&means)
    } else {
        std_dev / (batch_size as f64).sqrt()
    };
    Ok(BatchStats {
        n: used.len(),
        batch_size,
        batches,
        mean: mean(used),
        std_dev,
        std_of_means,
        rejected: values.len() - used.len(),
    })
}

/// Smallest batch size whose mean scatters by at most `sigma_target`.
pub fn required_samples(sigma_1: f64, sigma_target: f64) -> Result<usize, EstimationError> {
    if !(sigma_1 > 0.0) || !(sigma_target > 0.0) {
        return Err(EstimationError::Domain("sigmas must be positive"));
    }
    let ratio = (sigma_1 / sigma_target).powi(2);
    // an exact integer ratio must not round up because of representation error
    Ok(((ratio * (1.0 - 1e-12)).ceil() as usize).max(1))
}
