//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Cosine similarity straight from the definition.
pub fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for i in 0..u.len() {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if uu == 0.0 || vv == 0.0 {
        0.0
    } else {
        uv / (uu * vv).sqrt()
    }
}

/// Reported similarities live on a 1e-12 grid and never exceed 1.
fn to_grid(s: f64) -> f64 {
    let q = (s * 1e12).round() / 1e12;
    if q > 1.0 { 1.0 } else { q }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleFlag {
    pub row_id: usize,
    pub count: usize,
    pub max: f64,
}

/// Double loop over every cross-group pair; returns both groups' flagged rows
/// sorted by (count desc, max desc, id asc).
pub fn oracle_flags(
    pf: &[(usize, Vec<f64>)],
    uu: &[(usize, Vec<f64>)],
    tau: f64,
) -> (Vec<OracleFlag>, Vec<OracleFlag>) {
    let cut = tau - 1e-12;
    let mut pf_out: Vec<OracleFlag> = Vec::new();
    let mut uu_tally = vec![(0usize, f64::NEG_INFINITY); uu.len()];
    for (pid, p) in pf {
        let mut count = 0;
        let mut max = f64::NEG_INFINITY;
        for (j, (_, q)) in uu.iter().enumerate() {
            let s = oracle_cosine(p, q);
            if s >= cut {
                count += 1;
                if s > max {
                    max = s;
                }
                uu_tally[j].0 += 1;
                if s > uu_tally[j].1 {
                    uu_tally[j].1 = s;
                }
            }
        }
        if count > 0 {
            pf_out.push(OracleFlag { row_id: *pid, count, max });
        }
    }
    let mut uu_out: Vec<OracleFlag> = uu
        .iter()
        .zip(uu_tally)
        .filter(|(_, t)| t.0 > 0)
        .map(|((id, _), (count, max))| OracleFlag { row_id: *id, count, max: to_grid(max) })
        .collect();
    for f in pf_out.iter_mut() {
        f.max = to_grid(f.max);
    }
    let order = |a: &OracleFlag, b: &OracleFlag| {
        if a.count != b.count {
            return b.count.cmp(&a.count);
        }
        if a.max != b.max {
            return b.max.partial_cmp(&a.max).unwrap();
        }
        a.row_id.cmp(&b.row_id)
    };
    pf_out.sort_by(order);
    uu_out.sort_by(order);
    (pf_out, uu_out)
}

/// Weighted L2-regularized logistic loss computed naively.
pub fn oracle_loss(x: &[Vec<f64>], y: &[bool], w: &[f64], beta: &[f64], b: f64, lambda: f64) -> f64 {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for i in 0..x.len() {
        let z: f64 = x[i].iter().zip(beta).map(|(a, c)| a * c).sum::<f64>() + b;
        let p = 1.0 / (1.0 + (-z).exp());
        let nll = if y[i] { -p.ln() } else { -(1.0 - p).ln() };
        total += w[i] * nll;
        wsum += w[i];
    }
    total / wsum + 0.5 * lambda * beta.iter().map(|c| c * c).sum::<f64>()
}

/// Central finite differences of [`oracle_loss`]; the last entry is the
/// intercept.
pub fn fd_gradient(
    x: &[Vec<f64>],
    y: &[bool],
    w: &[f64],
    beta: &[f64],
    b: f64,
    lambda: f64,
    h: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(beta.len() + 1);
    for j in 0..beta.len() {
        let mut plus = beta.to_vec();
        let mut minus = beta.to_vec();
        plus[j] += h;
        minus[j] -= h;
        out.push((oracle_loss(x, y, w, &plus, b, lambda) - oracle_loss(x, y, w, &minus, b, lambda)) / (2.0 * h));
    }
    out.push((oracle_loss(x, y, w, beta, b + h, lambda) - oracle_loss(x, y, w, beta, b - h, lambda)) / (2.0 * h));
    out
}

/// Weighted favorable rate per protected value: (privileged, unprivileged).
pub fn weighted_base_rates(privileged: &[bool], favorable: &[bool], w: &[f64]) -> (f64, f64) {
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    for i in 0..w.len() {
        let g = privileged[i] as usize;
        den[g] += w[i];
        if favorable[i] {
            num[g] += w[i];
        }
    }
    (num[1] / den[1], num[0] / den[0])
}

/// Random vectors drawn partly from a small pool of non-negative prototypes
/// so that exact and near duplicates occur across groups.
pub fn clustered_vectors(rng: &mut impl Rng, n: usize, dim: usize, pool: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.6) {
                let base = &pool[rng.gen_range(0..pool.len())];
                base.iter()
                    .map(|v| {
                        if rng.gen_bool(0.3) {
                            (v + rng.gen_range(0.0..0.02)).min(1.0)
                        } else {
                            *v
                        }
                    })
                    .collect()
            } else {
                (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect()
            }
        })
        .collect()
}

/// Kahan-Babuska summation.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = sum + x;
        c += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + c
}
