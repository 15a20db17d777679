use crate::error::{Error, Result};
use crate::landuse::LandUseConfig;

fn check(set: &[LandUseConfig], op: &str) -> Result<(usize, usize)> {
    let first = set
        .first()
        .ok_or_else(|| Error::Precondition(format!("{op} needs at least one excellent plan")))?;
    let (m, n) = (first.channels(), first.resolution());
    if set.iter().any(|c| c.channels() != m || c.resolution() != n) {
        return Err(Error::Precondition(format!("{op}: plans differ in shape")));
    }
    Ok((m, n))
}

/// Elementwise mean over the excellent plans.
pub fn baseline_avg(set: &[LandUseConfig]) -> Result<LandUseConfig> {
    let (m, n) = check(set, "baseline_avg")?;
    let mut acc = vec![0.0; m * n * n];
    for c in set {
        for (a, v) in acc.iter_mut().zip(c.data()) {
            *a += v;
        }
    }
    let k = set.len() as f64;
    LandUseConfig::from_data(m, n, acc.into_iter().map(|v| v / k).collect())
}

/// Elementwise maximum over the excellent plans.
pub fn baseline_max(set: &[LandUseConfig]) -> Result<LandUseConfig> {
    let (m, n) = check(set, "baseline_max")?;
    let mut acc = vec![0.0f64; m * n * n];
    for c in set {
        for (a, v) in acc.iter_mut().zip(c.data()) {
            *a = a.max(*v);
        }
    }
    LandUseConfig::from_data(m, n, acc)
}
