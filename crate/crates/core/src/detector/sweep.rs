use super::{detect, DetectorConfig};
use crate::error::{Error, Result};
use crate::gnn::GinCheckpoint;
use crate::graphdata::Graph;

pub const DEFAULT_ALPHA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const DEFAULT_BETA_GRID: [f64; 5] = [0.01, 0.03, 0.05, 0.07, 0.09];

/// AUC per `(α, β)` cell, rows indexed by α.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub auc: Vec<Vec<f64>>,
}

impl SweepTable {
    /// Header `alpha\beta,<β…>`, then one row per α.
    pub fn to_csv(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut out = format!("alpha\\beta,{}\n", join(&self.betas));
        for (a, row) in self.alphas.iter().zip(&self.auc) {
            out.push_str(&format!("{a:?},{}\n", join(row)));
        }
        out
    }
}

/// Comma-separated list of reals, e.g. `0.1,0.3,0.5`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Error::Usage(format!("grid entry {t:?} is not a non-negative real")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Usage("empty grid".into()));
    }
    Ok(values)
}

/// One independent detection run per cell, each from the same seed.
pub fn sweep(
    ckpt: &GinCheckpoint,
    test_graphs: &[Graph],
    alpha_grid: &[f64],
    beta_grid: &[f64],
    base: &DetectorConfig,
) -> Result<SweepTable> {
    if alpha_grid.is_empty() || beta_grid.is_empty() {
        return Err(Error::contract("sweep grids must be nonempty"));
    }
    let mut auc = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let mut row = Vec::with_capacity(beta_grid.len());
        for &beta in beta_grid {
            let mut cfg = base.clone();
            cfg.loss.alpha = alpha;
            cfg.loss.beta = beta;
            let report = detect(ckpt, test_graphs, &cfg)?.report;
            row.push(
                report
                    .auc
                    .ok_or_else(|| Error::contract("sweep needs ground-truth OOD flags on every test graph"))?,
            );
        }
        auc.push(row);
    }
    Ok(SweepTable {
        alphas: alpha_grid.to_vec(),
        betas: beta_grid.to_vec(),
        auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.1, 0.3,0.5").unwrap(), vec![0.1, 0.3, 0.5]);
        assert!(matches!(parse_grid("0.1,,0.3"), Err(Error::Usage(_))));
        assert!(matches!(parse_grid("a"), Err(Error::Usage(_))));
        assert!(matches!(parse_grid("-1"), Err(Error::Usage(_))));
    }

    #[test]
    fn csv_layout() {
        let t = SweepTable {
            alphas: vec![0.1, 0.3],
            betas: vec![0.05],
            auc: vec![vec![0.75], vec![1.0]],
        };
        assert_eq!(t.to_csv(), "alpha\\beta,0.05\n0.1,0.75\n0.3,1.0\n");
    }
}
