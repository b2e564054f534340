use crate::error::{Error, Result};

/// Fills missing runs by linear interpolation between the flanking
/// observations. Leading and trailing gaps take the nearest observation.
pub fn interpolate_downstream(series: &[Option<f64>]) -> Result<Vec<f64>> {
    let observed: Vec<usize> = (0..series.len()).filter(|&i| series[i].is_some()).collect();
    let (&first, &last) = match (observed.first(), observed.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::invalid("series has no observations")),
    };
    let mut out = vec![0.0; series.len()];
    out[..first].fill(series[first].unwrap());
    out[last..].fill(series[last].unwrap());
    for pair in observed.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        let (a, b) = (series[i].unwrap(), series[j].unwrap());
        out[i] = a;
        for (k, slot) in out.iter_mut().enumerate().take(j).skip(i + 1) {
            let w = (k - i) as f64 / (j - i) as f64;
            *slot = a + w * (b - a);
        }
    }
    Ok(out)
}

/// Result of regressing an upstream gauge on its downstream neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub values: Vec<f64>,
    /// Intercept of `up = a + b * down`.
    pub a: f64,
    pub b: f64,
}

/// Fits `up = a + b * down` by least squares over concurrent observations
/// and fills the missing upstream entries from the fit.
pub fn impute_upstream(up: &[Option<f64>], down: &[f64]) -> Result<Imputation> {
    if up.len() != down.len() {
        return Err(Error::invalid(format!(
            "upstream has {} steps, downstream {}",
            up.len(),
            down.len()
        )));
    }
    let pairs: Vec<(f64, f64)> = up.iter().zip(down).filter_map(|(u, &d)| u.map(|u| (d, u))).collect();
    if pairs.len() < 2 {
        return Err(Error::DegenerateRegression(format!(
            "{} concurrent observations, need at least 2",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateRegression("downstream series is constant".into()));
    }
    let b = sxy / sxx;
    let a = mean_y - b * mean_x;
    let values = up.iter().zip(down).map(|(u, &d)| u.unwrap_or(a + b * d)).collect();
    Ok(Imputation { values, a, b })
}
