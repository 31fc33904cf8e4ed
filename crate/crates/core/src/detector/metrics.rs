use super::EtaMode;
use crate::error::{Error, Result};

/// Empirical `q`-quantile with linear interpolation between order
/// statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::contract("quantile threshold needs at least 2 scores"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::contract(format!("quantile {q} outside (0, 1)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    Ok(match sorted.get(lo + 1) {
        Some(&hi) if frac > 0.0 => sorted[lo] + frac * (hi - sorted[lo]),
        _ => sorted[lo],
    })
}

/// Decisions `score ≥ η` and the η used; both absent for [`EtaMode::None`].
pub fn decide(scores: &[f64], eta_mode: EtaMode) -> Result<(Option<Vec<bool>>, Option<f64>)> {
    if scores.is_empty() {
        return Err(Error::contract("no scores to threshold"));
    }
    let eta = match eta_mode {
        EtaMode::Fixed(v) => v,
        EtaMode::Quantile(q) => quantile(scores, q)?,
        EtaMode::None => return Ok((None, None)),
    };
    Ok((Some(scores.iter().map(|&s| s >= eta).collect()), Some(eta)))
}

/// Mann–Whitney AUC with OOD (`true`) as the positive class and midranks
/// for ties.
pub fn auc(scores: &[f64], flags: &[bool]) -> Result<f64> {
    if scores.len() != flags.len() {
        return Err(Error::contract(format!(
            "{} scores but {} flags",
            scores.len(),
            flags.len()
        )));
    }
    let positives = flags.iter().filter(|&&f| f).count();
    let negatives = flags.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::contract("AUC needs both OOD and ID graphs"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let hits = order[start..end].iter().filter(|&&i| flags[i]).count();
        rank_sum += midrank * hits as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}
