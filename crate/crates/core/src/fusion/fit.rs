use serde::{Deserialize, Serialize};

use super::ga::{run_ga, GaConfig};
use super::{fuse_with_indicators, FusionParams, ReliabilityIndicators, ADJUSTMENT_RANGE, DEFAULT_N_BEST, SILENCE};
use crate::error::{Error, Result};
use crate::nn::PredictionVector;
use crate::seed::{derive_seed, rng_for, stream};
use crate::sim::parallel_map;

/// One tuning example: both posteriors and the true class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSample {
    pub vocal: PredictionVector,
    pub echoic: PredictionVector,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbFitConfig {
    pub n_best: usize,
    pub ga: GaConfig,
    pub threshold_range: (f64, f64),
    pub weight_range: (f64, f64),
    /// Share of the tune set used by the short initial run.
    pub prerun_fraction: f64,
    pub prerun_generations: usize,
    pub grid_step: f64,
    pub refine_step: f64,
}

impl Default for RbFitConfig {
    fn default() -> Self {
        Self {
            n_best: DEFAULT_N_BEST,
            ga: GaConfig::default(),
            threshold_range: (0.0, 10.0),
            weight_range: (-5.0, 5.0),
            prerun_fraction: 0.2,
            prerun_generations: 30,
            grid_step: 0.1,
            refine_step: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub stage: String,
    pub step: usize,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbFit {
    pub params: FusionParams,
    pub objective: f64,
    /// Best-so-far tune objective: GA generations, then the two grid passes.
    pub trace: Vec<TracePoint>,
    /// Best individual of the short subsample run seeded into the GA.
    pub prerun_best: Vec<f64>,
}

struct Prepared<'a> {
    samples: &'a [FusionSample],
    indicators: Vec<ReliabilityIndicators>,
}

/// Scoring token of a decision: silence and rejection emit nothing.
fn token(class: Option<usize>) -> Option<usize> {
    class.filter(|&c| c != SILENCE)
}

impl Prepared<'_> {
    fn accuracy(&self, params: &FusionParams, rows: &[usize]) -> f64 {
        let mut correct = 0;
        for &i in rows {
            let s = &self.samples[i];
            let out = fuse_with_indicators(&s.vocal, &s.echoic, &self.indicators[i], params);
            if token(out.decision()) == token(Some(s.label)) {
                correct += 1;
            }
        }
        correct as f64 / rows.len() as f64
    }
}

/// Fraction of samples whose fused decision yields the reference token.
pub fn objective(samples: &[FusionSample], params: &FusionParams, n_best: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("fusion tune set"));
    }
    let p = prepare(samples, n_best)?;
    let rows: Vec<usize> = (0..samples.len()).collect();
    Ok(p.accuracy(params, &rows))
}

fn prepare(samples: &[FusionSample], n_best: usize) -> Result<Prepared<'_>> {
    let indicators = samples
        .iter()
        .map(|s| ReliabilityIndicators::compute(&s.vocal, &s.echoic, n_best))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { samples, indicators })
}

fn from_genes(g: &[f64]) -> FusionParams {
    FusionParams {
        t_l_v: g[0],
        t_d_v: g[1],
        t_l_e: g[2],
        t_d_e: g[3],
        w: [g[4], g[5], g[6], g[7]],
        ..FusionParams::default()
    }
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Best point of a 3-D grid over `(a_v_u, a_e_s, a_e_u)`; the incumbent is
/// replaced only on strict improvement.
fn grid_pass(p: &Prepared, rows: &[usize], base: FusionParams, best: f64, axes: [Vec<f64>; 3], jobs: usize) -> (FusionParams, f64) {
    let mut points: Vec<[f64; 3]> = Vec::new();
    for &a in &axes[0] {
        for &b in &axes[1] {
            for &c in &axes[2] {
                points.push([a, b, c]);
            }
        }
    }
    let scores = parallel_map(points.len(), jobs, |i| {
        let [a_v_u, a_e_s, a_e_u] = points[i];
        p.accuracy(
            &FusionParams {
                a_v_u,
                a_e_s,
                a_e_u,
                ..base
            },
            rows,
        )
    });
    let (mut params, mut value) = (base, best);
    for (pt, s) in points.iter().zip(scores) {
        if s > value {
            value = s;
            params = FusionParams {
                a_v_u: pt[0],
                a_e_s: pt[1],
                a_e_u: pt[2],
                ..base
            };
        }
    }
    (params, value)
}

/// GA over thresholds and weights, then grid search over the adjustments.
pub fn fit_rb_params(samples: &[FusionSample], cfg: &RbFitConfig, seed: u64, jobs: usize) -> Result<RbFit> {
    if samples.is_empty() {
        return Err(Error::Empty("fusion tune set"));
    }
    if !(cfg.grid_step > 0.0 && cfg.refine_step > 0.0) || !(0.0 < cfg.prerun_fraction && cfg.prerun_fraction <= 1.0) {
        return Err(Error::Config("grid steps and prerun_fraction must be positive".into()));
    }
    let p = prepare(samples, cfg.n_best)?;
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut bounds = vec![cfg.threshold_range; 4];
    bounds.extend([cfg.weight_range; 4]);

    let mut sub = all.clone();
    rand::seq::SliceRandom::shuffle(sub.as_mut_slice(), &mut rng_for(seed, stream::GA, u64::MAX));
    sub.truncate(((samples.len() as f64 * cfg.prerun_fraction).ceil() as usize).max(1));
    sub.sort_unstable();
    let pre_cfg = GaConfig {
        generations: cfg.prerun_generations,
        ..cfg.ga.clone()
    };
    let pre = run_ga(
        |g| p.accuracy(&from_genes(g), &sub),
        &bounds,
        &pre_cfg,
        derive_seed(seed, stream::GA, 1),
        &[],
        jobs,
    )?;
    let main = run_ga(
        |g| p.accuracy(&from_genes(g), &all),
        &bounds,
        &cfg.ga,
        derive_seed(seed, stream::GA, 2),
        std::slice::from_ref(&pre.best),
        jobs,
    )?;
    let mut trace: Vec<TracePoint> = main
        .trace
        .iter()
        .enumerate()
        .map(|(step, &best)| TracePoint {
            stage: "ga".into(),
            step,
            best,
        })
        .collect();

    let base = from_genes(&main.best);
    let (lo, hi) = ADJUSTMENT_RANGE;
    let coarse = axis(lo, hi, cfg.grid_step);
    let (params, value) = grid_pass(&p, &all, base, main.best_fitness, [coarse.clone(), coarse.clone(), coarse], jobs);
    trace.push(TracePoint {
        stage: "grid".into(),
        step: 0,
        best: value,
    });
    let around = |c: f64| axis((c - cfg.grid_step).max(lo), (c + cfg.grid_step).min(hi), cfg.refine_step);
    let (params, value) = grid_pass(
        &p,
        &all,
        params,
        value,
        [around(params.a_v_u), around(params.a_e_s), around(params.a_e_u)],
        jobs,
    );
    trace.push(TracePoint {
        stage: "grid".into(),
        step: 1,
        best: value,
    });
    Ok(RbFit {
        params,
        objective: value,
        trace,
        prerun_best: pre.best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocal_oracle_set() {
        let samples: Vec<FusionSample> = (0..40)
            .map(|i| {
                let label = i % 12;
                let mut probs = vec![0.02; 12];
                probs[label] = 1.0 - 0.02 * 11.0;
                FusionSample {
                    vocal: PredictionVector { probs },
                    echoic: PredictionVector::uniform(12),
                    label,
                }
            })
            .collect();
        let cfg = RbFitConfig {
            ga: GaConfig {
                generations: 20,
                ..GaConfig::default()
            },
            prerun_generations: 5,
            ..RbFitConfig::default()
        };
        let fit = fit_rb_params(&samples, &cfg, 3, 1).unwrap();
        assert_eq!(fit.objective, 1.0);
        for w in fit.trace.windows(2) {
            assert!(w[1].best >= w[0].best);
        }
    }
}
