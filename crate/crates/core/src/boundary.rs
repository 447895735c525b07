//! Discrete energy increment model, the detectability boundary
//! `B(n, gamma, R_s)`, the satisfaction ratio `rho = SCR / B` and bucketed
//! empirical validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model parameters for the increment `E(S_{n+1}) - E(S_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementModel {
    pub n: usize,
    pub delta_mu: f64,
    pub sigma_t_region: f64,
    pub r_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementTerms {
    pub gain: f64,
    pub stat_resistance: f64,
    pub geo_resistance: f64,
    pub total: f64,
}

fn check_model(m: &IncrementModel) -> Result<()> {
    if m.n < 2 {
        return Err(Error::Contract(format!("increment model needs n >= 2, got {}", m.n)));
    }
    if !(m.r_s > 0.0) || !(m.sigma_t_region > 0.0) || !m.delta_mu.is_finite() {
        return Err(Error::Contract("increment model needs r_s > 0, sigma_t > 0, finite delta_mu".into()));
    }
    Ok(())
}

pub fn increment_terms(m: &IncrementModel) -> Result<IncrementTerms> {
    check_model(m)?;
    let n = m.n as f64;
    let gain = 1.0 / (n * n.ln());
    let stat_resistance = -(m.delta_mu * m.delta_mu) / (2.0 * n * m.sigma_t_region * m.sigma_t_region);
    let geo_resistance = -1.0 / (2.0 * std::f64::consts::PI * m.r_s * m.r_s);
    Ok(IncrementTerms {
        gain,
        stat_resistance,
        geo_resistance,
        total: gain + stat_resistance + geo_resistance,
    })
}

/// `(1/gamma) * sqrt(2n * max(0, 1/(n ln n) - 1/(2 pi R_s^2)))`.
pub fn boundary_b(n: usize, gamma: f64, r_s: f64) -> Result<f64> {
    if n < 2 || !(gamma > 0.0) || !(r_s > 0.0) {
        return Err(Error::Contract(format!(
            "boundary needs n >= 2, gamma > 0, r_s > 0 (n={n}, gamma={gamma}, r_s={r_s})"
        )));
    }
    let nf = n as f64;
    let slack = 1.0 / (nf * nf.ln()) - 1.0 / (2.0 * std::f64::consts::PI * r_s * r_s);
    Ok((2.0 * nf * slack.max(0.0)).sqrt() / gamma)
}

/// `scr / b`, infinite when `b == 0`.
pub fn satisfaction_ratio(scr: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::INFINITY
    } else {
        scr / b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposition1 {
    /// First `n` after which every model increment up to `n_max` is negative.
    pub n0: usize,
    /// Size maximizing the cumulative model energy (first maximum).
    pub argmax: usize,
    pub holds: bool,
}

/// Scans `n = 2..=n_max`. The cumulative energy is anchored at `E(2) = 0`
/// with `E(n+1) = E(n) + total(n)`.
pub fn proposition1_scan(delta_mu: f64, sigma_t_region: f64, r_s: f64, n_max: usize) -> Result<Proposition1> {
    if n_max < 2 {
        return Err(Error::Contract("scan needs n_max >= 2".into()));
    }
    let totals = (2..=n_max)
        .map(|n| {
            increment_terms(&IncrementModel {
                n,
                delta_mu,
                sigma_t_region,
                r_s,
            })
            .map(|t| t.total)
        })
        .collect::<Result<Vec<_>>>()?;
    if totals[totals.len() - 1] >= 0.0 {
        return Err(Error::NoSignChange(n_max));
    }
    let mut n0 = n_max;
    while n0 > 2 && totals[n0 - 3] < 0.0 {
        n0 -= 1;
    }

    let (mut energy, mut best, mut argmax) = (0.0f64, 0.0f64, 2usize);
    for (i, t) in totals.iter().enumerate() {
        energy += t;
        let n = i + 3;
        if n <= n_max && energy > best {
            best = energy;
            argmax = n;
        }
    }
    Ok(Proposition1 {
        n0,
        argmax,
        holds: argmax <= n0,
    })
}

/// Default `rho` bucket edges; bucket `i` is `(edges[i], edges[i+1]]`.
pub const DEFAULT_RHO_EDGES: [f64; 6] = [0.0, 0.5, 1.0, 1.5, 2.0, f64::INFINITY];

pub const SUCCESS_IOU: f64 = 0.5;

mod inf_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// One evaluated target; infinite `b_value`, `gamma` and `rho` serialize as null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub scr: f64,
    #[serde(with = "inf_null")]
    pub gamma: f64,
    pub n: usize,
    #[serde(with = "inf_null")]
    pub b_value: f64,
    #[serde(with = "inf_null")]
    pub rho: f64,
    pub iou: f64,
}

impl TargetRecord {
    /// Builds a record from measured statistics. `|scr|` is used so dark
    /// and bright targets are treated alike.
    pub fn new(scr: f64, gamma: f64, n: usize, r_s: f64, iou: f64) -> Result<Self> {
        let b_value = if gamma.is_infinite() {
            0.0
        } else if gamma <= 0.0 {
            f64::INFINITY
        } else {
            boundary_b(n, gamma, r_s)?
        };
        let rho = if b_value.is_infinite() {
            0.0
        } else {
            satisfaction_ratio(scr.abs(), b_value)
        };
        Ok(Self {
            scr,
            gamma,
            n,
            b_value,
            rho,
            iou,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    #[serde(with = "inf_null")]
    pub hi: f64,
    pub count: usize,
    pub mean_iou: Option<f64>,
    pub success_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub v: u32,
    pub records: Vec<TargetRecord>,
    pub buckets: Vec<Bucket>,
}

/// Index of the bucket holding `rho`; non-positive values fall in the first.
pub fn bucket_index(rho: f64, edges: &[f64]) -> usize {
    let last = edges.len() - 2;
    (0..=last).find(|&i| rho <= edges[i + 1]).unwrap_or(last)
}

pub fn bucketed_validation(records: Vec<TargetRecord>, edges: &[f64]) -> Result<BoundaryReport> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("bucket edges must be strictly increasing, at least two".into()));
    }
    if records.iter().any(|r| r.rho.is_nan() || r.iou.is_nan()) {
        return Err(Error::Contract("NaN rho or IoU in boundary records".into()));
    }
    let k = edges.len() - 1;
    let mut sums = vec![(0usize, 0.0f64, 0usize); k];
    for r in &records {
        let b = &mut sums[bucket_index(r.rho, edges)];
        b.0 += 1;
        b.1 += r.iou;
        b.2 += usize::from(r.iou > SUCCESS_IOU);
    }
    let buckets = sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, iou_sum, hits))| Bucket {
            lo: edges[i],
            hi: edges[i + 1],
            count,
            mean_iou: (count > 0).then(|| iou_sum / count as f64),
            success_rate: (count > 0).then(|| hits as f64 / count as f64),
        })
        .collect();
    Ok(BoundaryReport { v: 1, records, buckets })
}

impl BoundaryReport {
    pub fn records_csv(&self) -> String {
        let mut out = String::from("scr,gamma,n,b_value,rho,iou\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.scr, r.gamma, r.n, r.b_value, r.rho, r.iou));
        }
        out
    }

    pub fn buckets_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("lo,hi,count,mean_iou,success_rate\n");
        for b in &self.buckets {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lo,
                b.hi,
                b.count,
                opt(b.mean_iou),
                opt(b.success_rate)
            ));
        }
        out
    }

    /// True when success rates never drop across non-empty buckets.
    pub fn success_non_decreasing(&self) -> bool {
        let rates: Vec<f64> = self.buckets.iter().filter_map(|b| b.success_rate).collect();
        rates.windows(2).all(|w| w[0] <= w[1])
    }
}
