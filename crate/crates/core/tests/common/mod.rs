//! Independent oracles shared by several test targets.
#![allow(dead_code)]

use std::collections::HashMap;

use dualkws::fusion::{FusionParams, OutcomeKind, SILENCE, UNKNOWN};

pub const FLOOR: f64 = 1e-10;

/// Direct transcription of the indicator definitions over every pair.
pub fn oracle_indicators(p: &[f64], n: usize) -> (f64, f64) {
    let mut s: Vec<f64> = p.iter().map(|v| v.max(FLOOR)).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let diff = (1..n).map(|k| (s[0] / s[k]).ln()).sum::<f64>() / (n - 1) as f64;
    let mut pairs = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            pairs += (s[a] / s[b]).ln();
        }
    }
    (diff, 2.0 * pairs / (n * (n - 1)) as f64)
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Case table written from the definitions: gate on strict thresholds,
/// fuse as a renormalised weighted geometric mean.
pub fn oracle_fuse(v: &[f64], e: &[f64], prm: &FusionParams, n: usize) -> (OutcomeKind, Option<Vec<f64>>) {
    let (lv, dv) = oracle_indicators(v, n);
    let (le, de) = oracle_indicators(e, n);
    let rv = lv > prm.t_l_v && dv > prm.t_d_v;
    let re = le > prm.t_l_e && de > prm.t_d_e;
    match (rv, re) {
        (true, true) => {
            let mut a = [1.0; 4];
            let (va, ea) = (argmax(v), argmax(e));
            if va == UNKNOWN {
                a[0] = prm.a_v_u;
                a[1] = prm.a_v_u;
            }
            if ea == SILENCE {
                a[2] = prm.a_e_s;
                a[3] = prm.a_e_s;
            }
            if ea == UNKNOWN {
                a[2] = prm.a_e_u;
                a[3] = prm.a_e_u;
            }
            let d = [lv, dv, le, de];
            let z: f64 = (0..4).map(|i| prm.w[i] * a[i] * d[i]).sum();
            let lambda = 1.0 / (1.0 + (-z).exp());
            let raw: Vec<f64> = v
                .iter()
                .zip(e)
                .map(|(x, y)| x.max(FLOOR).powf(lambda) * y.max(FLOOR).powf(1.0 - lambda))
                .collect();
            let s: f64 = raw.iter().sum();
            (OutcomeKind::Fused, Some(raw.into_iter().map(|r| r / s).collect()))
        }
        (true, false) => (OutcomeKind::VocalOnly, Some(v.to_vec())),
        (false, true) => (OutcomeKind::EchoicOnly, Some(e.to_vec())),
        (false, false) => (OutcomeKind::Rejected, None),
    }
}

/// Whether any indicator sits so close to its threshold that rounding
/// differences between two correct implementations could flip the gate.
pub fn near_boundary(v: &[f64], e: &[f64], prm: &FusionParams, n: usize) -> bool {
    let (lv, dv) = oracle_indicators(v, n);
    let (le, de) = oracle_indicators(e, n);
    [(lv, prm.t_l_v), (dv, prm.t_d_v), (le, prm.t_l_e), (de, prm.t_d_e)]
        .iter()
        .any(|(x, t)| (x - t).abs() < 1e-9)
}

/// Memoised recursion over prefixes. At each cell the optimal move is picked
/// in the order diagonal, deletion, insertion, which fixes the counts among
/// equal-cost alignments. Returns (cost, s, d, i, c).
pub fn wer_oracle(r: &[usize], h: &[usize]) -> (usize, usize, usize, usize, usize) {
    fn go(r: &[usize], h: &[usize], i: usize, j: usize, memo: &mut HashMap<(usize, usize), (usize, usize, usize, usize, usize)>) -> (usize, usize, usize, usize, usize) {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if i == 0 && j == 0 {
            (0, 0, 0, 0, 0)
        } else {
            let mut options = Vec::new();
            if i > 0 && j > 0 {
                let (c, s, d, ins, k) = go(r, h, i - 1, j - 1, memo);
                if r[i - 1] == h[j - 1] {
                    options.push((c, s, d, ins, k + 1));
                } else {
                    options.push((c + 1, s + 1, d, ins, k));
                }
            }
            if i > 0 {
                let (c, s, d, ins, k) = go(r, h, i - 1, j, memo);
                options.push((c + 1, s, d + 1, ins, k));
            }
            if j > 0 {
                let (c, s, d, ins, k) = go(r, h, i, j - 1, memo);
                options.push((c + 1, s, d, ins + 1, k));
            }
            let best = options.iter().map(|o| o.0).min().unwrap();
            *options.iter().find(|o| o.0 == best).unwrap()
        };
        memo.insert((i, j), v);
        v
    }
    go(r, h, r.len(), h.len(), &mut HashMap::new())
}

