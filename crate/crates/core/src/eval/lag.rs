use crate::error::{Error, Result};

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Pearson correlation between `rain[t]` and `discharge[t + τ]` for
/// `τ = 0..=max_lag`, over the steps with rain. `None` marks a lag with
/// fewer than three such steps or zero variance.
pub fn precip_discharge_lag_correlation(rain: &[f64], discharge: &[f64], max_lag: usize) -> Result<Vec<Option<f64>>> {
    if rain.len() != discharge.len() || rain.len() <= max_lag + 2 {
        return Err(Error::invalid(format!(
            "lag correlation needs equal series longer than max_lag + 2 ({} and {})",
            rain.len(),
            discharge.len()
        )));
    }
    Ok((0..=max_lag)
        .map(|lag| {
            let (x, y): (Vec<f64>, Vec<f64>) = (0..rain.len() - lag)
                .filter(|&t| rain[t] > 0.0)
                .map(|t| (rain[t], discharge[t + lag]))
                .unzip();
            if x.len() < 3 {
                None
            } else {
                pearson(&x, &y)
            }
        })
        .collect())
}
