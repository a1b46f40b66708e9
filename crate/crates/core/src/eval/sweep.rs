use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalConfig, ManifestEntry};
use crate::backend::AcousticBackend;
use crate::error::{Error, Result};
use crate::masking::{MaskStrategy, RandomMasking, RegularMasking};

pub const SWEEP_CSV_HEADER: &str = "param,value,pcc_mean,pcc_std";

/// Hyperparameter varied by a sweep. Probability and length imply random
/// masking, slice count implies regular masking, layer keeps the strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    MaskProb,
    MaskLen,
    Layer,
    Slices,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::MaskProb => "mask-prob",
            SweepParam::MaskLen => "mask-len",
            SweepParam::Layer => "layer",
            SweepParam::Slices => "slices",
        }
    }

    /// Returns `base` with this parameter set to `value`.
    pub fn apply(&self, base: &EvalConfig, value: f64, num_layers: usize) -> Result<EvalConfig> {
        let mut cfg = base.clone();
        let random = |cfg: &EvalConfig| match cfg.scoring.strategy {
            MaskStrategy::Random(r) => r,
            MaskStrategy::Regular(_) => RandomMasking::default(),
        };
        match self {
            SweepParam::MaskProb => {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(Error::InvalidParams(format!("mask-prob must be in (0, 1], got {value}")));
                }
                let mut r = random(&cfg);
                r.mask_percent = value * 100.0;
                cfg.scoring.strategy = MaskStrategy::Random(r);
            }
            SweepParam::MaskLen => {
                let mut r = random(&cfg);
                r.span_len = positive_int(self, value)?;
                cfg.scoring.strategy = MaskStrategy::Random(r);
            }
            SweepParam::Layer => {
                let layer = positive_int(self, value)?;
                if layer > num_layers {
                    return Err(Error::LayerOutOfRange { layer, num_layers });
                }
                cfg.scoring.layer = layer;
            }
            SweepParam::Slices => {
                cfg.scoring.strategy = MaskStrategy::Regular(RegularMasking {
                    slices: positive_int(self, value)?,
                });
            }
        }
        cfg.scoring.strategy.validate()?;
        Ok(cfg)
    }
}

fn positive_int(param: &SweepParam, value: f64) -> Result<usize> {
    if value.fract() != 0.0 || value < 1.0 || !value.is_finite() {
        return Err(Error::InvalidParams(format!(
            "{} must be a positive integer, got {value}",
            param.name()
        )));
    }
    Ok(value as usize)
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask-prob" => Ok(SweepParam::MaskProb),
            "mask-len" => Ok(SweepParam::MaskLen),
            "layer" => Ok(SweepParam::Layer),
            "slices" => Ok(SweepParam::Slices),
            other => Err(Error::InvalidParams(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub pcc_mean: f64,
    pub pcc_std: f64,
}

/// One evaluation per value. All values are validated before any run starts.
pub fn sweep(
    entries: &[ManifestEntry],
    backend: &dyn AcousticBackend,
    base: &EvalConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidParams("no sweep values given".into()));
    }
    let configs: Vec<EvalConfig> = values
        .iter()
        .map(|&v| param.apply(base, v, backend.num_layers()))
        .collect::<Result<_>>()?;
    configs
        .iter()
        .zip(values)
        .map(|(cfg, &value)| {
            let result = evaluate(entries, backend, cfg)?;
            Ok(SweepRow {
                param,
                value,
                pcc_mean: result.pcc_mean,
                pcc_std: result.pcc_std,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{},{},{},{}", row.param, row.value, row.pcc_mean, row.pcc_std)?;
    }
    Ok(())
}
