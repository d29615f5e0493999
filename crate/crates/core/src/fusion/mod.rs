//! Late fusion of the vocal and echoic posteriors.
//!
//! Reliability-based fusion gates each modality on two N-best indicators and
//! combines the survivors log-linearly; MLP fusion learns the combination.

mod augment;
mod fit;
mod ga;
mod mlp;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{read_bundle, write_bundle, TensorEntry};
use crate::error::{Error, Result};
use crate::nn::PredictionVector;

pub use augment::{apply_augmentation, AugmentConfig, FusionAugmentation};
pub use fit::{fit_rb_params, objective, FusionSample, RbFit, RbFitConfig, TracePoint};
pub use ga::{latin_hypercube, run_ga, sphere, GaConfig, GaResult};
pub use mlp::{mlp_fuse, train_mlp_fusion, MlpConfig, MlpFusionModel, MlpReport};

/// Probabilities are clamped to this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-10;
pub const DEFAULT_N_BEST: usize = 4;

fn sorted_logs(probs: &[f64], n_best: usize) -> Result<Vec<f64>> {
    if n_best < 2 || n_best > probs.len() {
        return Err(Error::InvalidArgument(format!(
            "n_best must lie in 2..={}, got {n_best}",
            probs.len()
        )));
    }
    let mut logs: Vec<f64> = probs.iter().map(|p| p.max(PROB_FLOOR).ln()).collect();
    logs.sort_by(|a, b| b.total_cmp(a));
    logs.truncate(n_best);
    Ok(logs)
}

/// Mean log ratio of the top hypothesis to each of the next `n_best − 1`.
pub fn nbest_difference(probs: &PredictionVector, n_best: usize) -> Result<f64> {
    let logs = sorted_logs(&probs.probs, n_best)?;
    let top = logs[0];
    Ok(logs[1..].iter().map(|l| top - l).sum::<f64>() / (n_best - 1) as f64)
}

/// Mean pairwise log ratio among the top `n_best` hypotheses.
pub fn nbest_dispersion(probs: &PredictionVector, n_best: usize) -> Result<f64> {
    let logs = sorted_logs(&probs.probs, n_best)?;
    let mut s = 0.0;
    for i in 0..n_best {
        for j in i + 1..n_best {
            s += logs[i] - logs[j];
        }
    }
    Ok(2.0 * s / (n_best * (n_best - 1)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityIndicators {
    pub l_v: f64,
    pub d_v: f64,
    pub l_e: f64,
    pub d_e: f64,
    pub n_best: usize,
}

impl ReliabilityIndicators {
    pub fn compute(vocal: &PredictionVector, echoic: &PredictionVector, n_best: usize) -> Result<Self> {
        Ok(Self {
            l_v: nbest_difference(vocal, n_best)?,
            d_v: nbest_dispersion(vocal, n_best)?,
            l_e: nbest_difference(echoic, n_best)?,
            d_e: nbest_dispersion(echoic, n_best)?,
            n_best,
        })
    }

    /// `[L_v, D_v, L_e, D_e]`.
    pub fn as_array(&self) -> [f64; 4] {
        [self.l_v, self.d_v, self.l_e, self.d_e]
    }
}

/// Thresholds and weights fitted by the GA, adjustments by grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub t_l_v: f64,
    pub t_d_v: f64,
    pub t_l_e: f64,
    pub t_d_e: f64,
    /// Weights of `[L_v, D_v, L_e, D_e]` in the fusion exponent.
    pub w: [f64; 4],
    pub a_v_s: f64,
    pub a_v_u: f64,
    pub a_e_s: f64,
    pub a_e_u: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            t_l_v: 0.0,
            t_d_v: 0.0,
            t_l_e: 0.0,
            t_d_e: 0.0,
            w: [1.0, 1.0, -1.0, -1.0],
            a_v_s: 1.0,
            a_v_u: 1.0,
            a_e_s: 1.0,
            a_e_u: 1.0,
        }
    }
}

pub const ADJUSTMENT_RANGE: (f64, f64) = (0.0, 1.5);

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamsMeta {
    n_best: usize,
    names: Vec<String>,
}

const PARAM_NAMES: [&str; 12] = [
    "t_l_v", "t_d_v", "t_l_e", "t_d_e", "w_1", "w_2", "w_3", "w_4", "a_v_s", "a_v_u", "a_e_s", "a_e_u",
];

impl FusionParams {
    /// Flat order: thresholds, weights, adjustments.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.t_l_v, self.t_d_v, self.t_l_e, self.t_d_e];
        v.extend(self.w);
        v.extend([self.a_v_s, self.a_v_u, self.a_e_s, self.a_e_u]);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(Error::ShapeMismatch {
                expected: "12 fusion parameters".into(),
                got: format!("{}", v.len()),
            });
        }
        Ok(Self {
            t_l_v: v[0],
            t_d_v: v[1],
            t_l_e: v[2],
            t_d_e: v[3],
            w: [v[4], v[5], v[6], v[7]],
            a_v_s: v[8],
            a_v_u: v[9],
            a_e_s: v[10],
            a_e_u: v[11],
        })
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_vec();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("fusion parameters must be finite".into()));
        }
        if v[..4].iter().any(|t| *t < 0.0) {
            return Err(Error::InvalidArgument("thresholds must be non-negative".into()));
        }
        let (lo, hi) = ADJUSTMENT_RANGE;
        if v[8..].iter().any(|a| *a < lo || *a > hi) {
            return Err(Error::InvalidArgument(format!("adjustments must lie in [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>, n_best: usize) -> Result<()> {
        let meta = ParamsMeta {
            n_best,
            names: PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        write_bundle(
            path,
            "rb-fusion",
            &meta,
            &[(
                TensorEntry {
                    name: "params".into(),
                    shape: vec![12],
                },
                &self.to_vec(),
            )],
        )
    }

    /// Parameters and the N-best depth they were fitted for.
    pub fn read(path: impl AsRef<Path>) -> Result<(Self, usize)> {
        let (meta, tensors): (ParamsMeta, _) = read_bundle(path, "rb-fusion")?;
        let (_, data) = tensors
            .into_iter()
            .next()
            .ok_or_else(|| Error::Container("fusion file without parameters".into()))?;
        Ok((Self::from_slice(&data)?, meta.n_best))
    }
}

/// `(R_v, R_e)`: each modality is reliable when both of its indicators
/// strictly exceed their thresholds.
pub fn reliability_gate(ind: &ReliabilityIndicators, params: &FusionParams) -> (bool, bool) {
    (
        ind.l_v > params.t_l_v && ind.d_v > params.t_d_v,
        ind.l_e > params.t_l_e && ind.d_e > params.t_d_e,
    )
}

/// Weight of the vocal stream, `sigmoid(Σ w_i·a_i·d_i)`.
pub fn fusion_exponent(ind: &ReliabilityIndicators, params: &FusionParams, adjust: &[f64; 4]) -> f64 {
    let d = ind.as_array();
    let z: f64 = (0..4).map(|i| params.w[i] * adjust[i] * d[i]).sum();
    1.0 / (1.0 + (-z).exp())
}

/// Adjustment vector for the arg-max classes of both modalities. A vocal
/// "silence" keeps the vocal entries at one; a_v_s is therefore never used.
pub fn select_adjustments(vocal_argmax: usize, echoic_argmax: usize, params: &FusionParams, silence: usize, unknown: usize) -> [f64; 4] {
    let mut a = [1.0; 4];
    if vocal_argmax == unknown {
        a[0] = params.a_v_u;
        a[1] = params.a_v_u;
    }
    if echoic_argmax == silence {
        a[2] = params.a_e_s;
        a[3] = params.a_e_s;
    } else if echoic_argmax == unknown {
        a[2] = params.a_e_u;
        a[3] = params.a_e_u;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    Fused,
    VocalOnly,
    EchoicOnly,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutcome {
    pub kind: OutcomeKind,
    pub probs: Option<PredictionVector>,
    pub lambda: Option<f64>,
}

impl FusionOutcome {
    /// Emitted class, or `None` for rejected outcomes.
    pub fn decision(&self) -> Option<usize> {
        self.probs.as_ref().map(PredictionVector::argmax)
    }
}

/// Class ids of the two non-command classes, in vocabulary order.
pub const SILENCE: usize = crate::sim::SILENCE;
pub const UNKNOWN: usize = crate::sim::UNKNOWN;

/// Reliability-gated log-linear fusion for the reference vocabulary.
pub fn rb_fuse(vocal: &PredictionVector, echoic: &PredictionVector, params: &FusionParams, n_best: usize) -> Result<FusionOutcome> {
    if vocal.len() != echoic.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} classes", vocal.len()),
            got: format!("{} classes", echoic.len()),
        });
    }
    let ind = ReliabilityIndicators::compute(vocal, echoic, n_best)?;
    Ok(fuse_with_indicators(vocal, echoic, &ind, params))
}

pub(crate) fn fuse_with_indicators(
    vocal: &PredictionVector,
    echoic: &PredictionVector,
    ind: &ReliabilityIndicators,
    params: &FusionParams,
) -> FusionOutcome {
    match reliability_gate(ind, params) {
        (true, true) => {
            let a = select_adjustments(vocal.argmax(), echoic.argmax(), params, SILENCE, UNKNOWN);
            let lambda = fusion_exponent(ind, params, &a);
            let logs: Vec<f64> = vocal
                .probs
                .iter()
                .zip(&echoic.probs)
                .map(|(v, e)| lambda * v.max(PROB_FLOOR).ln() + (1.0 - lambda) * e.max(PROB_FLOOR).ln())
                .collect();
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = ex.iter().sum();
            FusionOutcome {
                kind: OutcomeKind::Fused,
                probs: Some(PredictionVector {
                    probs: ex.into_iter().map(|v| v / s).collect(),
                }),
                lambda: Some(lambda),
            }
        }
        (true, false) => FusionOutcome {
            kind: OutcomeKind::VocalOnly,
            probs: Some(vocal.clone()),
            lambda: None,
        },
        (false, true) => FusionOutcome {
            kind: OutcomeKind::EchoicOnly,
            probs: Some(echoic.clone()),
            lambda: None,
        },
        (false, false) => FusionOutcome {
            kind: OutcomeKind::Rejected,
            probs: None,
            lambda: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(p: &[f64]) -> PredictionVector {
        PredictionVector { probs: p.to_vec() }
    }

    #[test]
    fn indicator_examples() {
        let p = pv(&[0.8, 0.1, 0.05, 0.05]);
        assert!((nbest_difference(&p, 2).unwrap() - 8f64.ln()).abs() < 1e-12);
        let q = pv(&[0.5, 0.3, 0.2]);
        let want = ((5.0f64 / 3.0).ln() + 2.5f64.ln() + 1.5f64.ln()) / 3.0;
        assert!((nbest_dispersion(&q, 3).unwrap() - want).abs() < 1e-12);
        let onehot = pv(&[1.0, 0.0, 0.0]);
        assert!((nbest_difference(&onehot, 2).unwrap() - 1e10f64.ln()).abs() < 1e-9);
        assert!(nbest_difference(&q, 1).is_err());
        assert!(nbest_difference(&q, 4).is_err());
    }

    #[test]
    fn gate_is_strict() {
        let ind = ReliabilityIndicators {
            l_v: 1.0,
            d_v: 2.0,
            l_e: 2.0,
            d_e: 2.0,
            n_best: 2,
        };
        let p = FusionParams {
            t_l_v: 1.0,
            t_d_v: 1.0,
            t_l_e: 1.0,
            t_d_e: 1.0,
            ..FusionParams::default()
        };
        assert_eq!(reliability_gate(&ind, &p), (false, true));
    }

    #[test]
    fn adjustment_rules() {
        let p = FusionParams {
            a_v_s: 0.1,
            a_v_u: 0.2,
            a_e_s: 0.3,
            a_e_u: 0.4,
            ..FusionParams::default()
        };
        assert_eq!(select_adjustments(0, 1, &p, SILENCE, UNKNOWN), [1.0; 4]);
        assert_eq!(select_adjustments(0, UNKNOWN, &p, SILENCE, UNKNOWN), [1.0, 1.0, 0.4, 0.4]);
        assert_eq!(select_adjustments(SILENCE, 2, &p, SILENCE, UNKNOWN), [1.0; 4]);
        assert_eq!(select_adjustments(UNKNOWN, SILENCE, &p, SILENCE, UNKNOWN), [0.2, 0.2, 0.3, 0.3]);
    }

    #[test]
    fn symmetric_geometric_mean() {
        let p = FusionParams {
            w: [0.0; 4],
            ..FusionParams::default()
        };
        let out = rb_fuse(&pv(&[0.9, 0.1]), &pv(&[0.1, 0.9]), &p, 2).unwrap();
        assert_eq!(out.kind, OutcomeKind::Fused);
        let probs = out.probs.unwrap().probs;
        assert!((probs[0] - 0.5).abs() < 1e-12 && (probs[1] - 0.5).abs() < 1e-12);
        assert_eq!(out.lambda, Some(0.5));
    }

    #[test]
    fn params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = FusionParams {
            t_l_v: 0.5,
            w: [0.25, -1.0, 2.0, 0.125],
            a_e_u: 0.5,
            ..FusionParams::default()
        };
        let path = dir.path().join("rb.bin");
        p.write(&path, 4).unwrap();
        assert_eq!(FusionParams::read(&path).unwrap(), (p, 4));
    }
}
