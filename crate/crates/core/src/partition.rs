//! Dyadic partitions of the real line induced by a monotone map `G0: ℝ → (0, 1)`,
//! and coarsening of observations into bin indices.
//!
//! Bins are half-open in transformed space: observation `y` falls in bin `m`
//! (0-based) iff `G0(y) ∈ [m 2^{-M}, (m + 1) 2^{-M})`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hmm::EmissionLaw;

/// A user-supplied strictly increasing continuous bijection ℝ → (0, 1).
pub trait MonotoneMap: Send + Sync {
    fn name(&self) -> &str;
    fn eval(&self, y: f64) -> f64;
    fn inverse(&self, u: f64) -> f64;
}

#[derive(Clone)]
pub enum TransformG0 {
    /// Logistic outside `[-3, 3]`, linear `zeta + eta·y` inside, joined continuously.
    SigmoidLinear { zeta: f64, eta: f64 },
    PureSigmoid,
    CustomMonotone(Arc<dyn MonotoneMap>),
}

const LINEAR_HALF_WIDTH: f64 = 3.0;

fn sigmoid(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

impl TransformG0 {
    /// Sigmoid-linear map with the constants fixed by continuity at `|y| = 3`.
    pub fn sigmoid_linear() -> Self {
        let hi = sigmoid(LINEAR_HALF_WIDTH);
        TransformG0::SigmoidLinear { zeta: 0.5, eta: (hi - 0.5) / LINEAR_HALF_WIDTH }
    }

    pub fn mode(&self) -> &str {
        match self {
            TransformG0::SigmoidLinear { .. } => "sigmoid-linear",
            TransformG0::PureSigmoid => "pure-sigmoid",
            TransformG0::CustomMonotone(_) => "custom-monotone",
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            TransformG0::SigmoidLinear { zeta, eta } => {
                if y.abs() > LINEAR_HALF_WIDTH {
                    sigmoid(y)
                } else {
                    zeta + eta * y
                }
            }
            TransformG0::PureSigmoid => sigmoid(y),
            TransformG0::CustomMonotone(m) => m.eval(y),
        }
    }

    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::DomainError(format!("G0 inverse needs u in (0, 1), got {u}")));
        }
        Ok(match self {
            TransformG0::SigmoidLinear { zeta, eta } => {
                let lo = zeta - eta * LINEAR_HALF_WIDTH;
                let hi = zeta + eta * LINEAR_HALF_WIDTH;
                if (lo..=hi).contains(&u) {
                    (u - zeta) / eta
                } else {
                    logit(u)
                }
            }
            TransformG0::PureSigmoid => logit(u),
            TransformG0::CustomMonotone(m) => m.inverse(u),
        })
    }
}

impl fmt::Debug for TransformG0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformG0::SigmoidLinear { zeta, eta } => f
                .debug_struct("SigmoidLinear")
                .field("zeta", zeta)
                .field("eta", eta)
                .finish(),
            TransformG0::PureSigmoid => f.write_str("PureSigmoid"),
            TransformG0::CustomMonotone(m) => write!(f, "CustomMonotone({})", m.name()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

impl Serialize for TransformG0 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            TransformG0::SigmoidLinear { zeta, eta } => TransformRepr {
                mode: self.mode().into(),
                zeta: Some(*zeta),
                eta: Some(*eta),
                name: None,
            },
            TransformG0::PureSigmoid => TransformRepr { mode: self.mode().into(), zeta: None, eta: None, name: None },
            TransformG0::CustomMonotone(m) => TransformRepr {
                mode: self.mode().into(),
                zeta: None,
                eta: None,
                name: Some(m.name().to_string()),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransformG0 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = TransformRepr::deserialize(d)?;
        match repr.mode.as_str() {
            "sigmoid-linear" => {
                let default = TransformG0::sigmoid_linear();
                match (repr.zeta, repr.eta) {
                    (None, None) => Ok(default),
                    (Some(zeta), Some(eta)) => Ok(TransformG0::SigmoidLinear { zeta, eta }),
                    _ => Err(D::Error::custom("sigmoid-linear needs both zeta and eta, or neither")),
                }
            }
            "pure-sigmoid" => Ok(TransformG0::PureSigmoid),
            "custom-monotone" => Err(D::Error::custom(
                "custom-monotone transforms cannot be reconstructed from JSON; build them in code",
            )),
            other => Err(D::Error::custom(format!("unknown transform mode {other:?}"))),
        }
    }
}

fn serialize_edges<S: Serializer>(edges: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(edges.len()))?;
    for e in edges {
        if *e == f64::NEG_INFINITY {
            seq.serialize_element("-inf")?;
        } else if *e == f64::INFINITY {
            seq.serialize_element("inf")?;
        } else {
            seq.serialize_element(e)?;
        }
    }
    seq.end()
}

fn deserialize_edges<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    use serde::de::Error as _;
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Edge {
        Num(f64),
        Text(String),
    }
    Vec::<Edge>::deserialize(d)?
        .into_iter()
        .map(|e| match e {
            Edge::Num(x) => Ok(x),
            Edge::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Edge::Text(t) if t == "inf" || t == "+inf" => Ok(f64::INFINITY),
            Edge::Text(t) => Err(D::Error::custom(format!("bad edge {t:?}"))),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DyadicPartition {
    #[serde(rename = "M")]
    level: u32,
    transform: TransformG0,
    #[serde(serialize_with = "serialize_edges", deserialize_with = "deserialize_edges")]
    edges: Vec<f64>,
}

/// Bin indices of a series, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarsenedSeries {
    pub kappa: usize,
    pub bins: Vec<usize>,
}

impl CoarsenedSeries {
    pub fn new(kappa: usize, bins: Vec<usize>) -> Result<Self> {
        if kappa == 0 || bins.iter().any(|&b| b >= kappa) {
            return Err(Error::invalid(format!("bin index out of range for kappa = {kappa}")));
        }
        Ok(Self { kappa, bins })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.kappa];
        for &b in &self.bins {
            c[b] += 1;
        }
        c
    }

    pub fn prefix(&self, n: usize) -> Self {
        Self { kappa: self.kappa, bins: self.bins[..n.min(self.bins.len())].to_vec() }
    }
}

pub fn build_partition(transform: TransformG0, level: u32) -> Result<DyadicPartition> {
    if level == 0 {
        return Err(Error::invalid("partition level M must be at least 1"));
    }
    if level > 30 {
        return Err(Error::invalid("partition level M above 30 is not supported"));
    }
    let kappa = 1usize << level;
    let mut edges = Vec::with_capacity(kappa + 1);
    edges.push(f64::NEG_INFINITY);
    for m in 1..kappa {
        edges.push(transform.inverse(m as f64 / kappa as f64)?);
    }
    edges.push(f64::INFINITY);
    Ok(DyadicPartition { level, transform, edges })
}

impl DyadicPartition {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn kappa(&self) -> usize {
        1 << self.level
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn transform(&self) -> &TransformG0 {
        &self.transform
    }

    /// Width of every bin in transformed space, `2^{-M}`.
    pub fn unit_width(&self) -> f64 {
        1.0 / self.kappa() as f64
    }

    pub fn bin_of(&self, y: f64) -> usize {
        let kappa = self.kappa();
        let u = self.transform.eval(y);
        // u·2^M is exact for dyadic u, so boundary points land in the upper bin.
        ((u * kappa as f64).floor() as usize).min(kappa - 1)
    }

    pub fn coarsen(&self, y: &[f64]) -> CoarsenedSeries {
        CoarsenedSeries { kappa: self.kappa(), bins: y.iter().map(|&v| self.bin_of(v)).collect() }
    }

    /// R×κ matrix of per-state bin probabilities `F_r(I_m)`.
    pub fn bin_probabilities(&self, laws: &[EmissionLaw]) -> DMatrix<f64> {
        let kappa = self.kappa();
        DMatrix::from_fn(laws.len(), kappa, |r, m| {
            let hi = if m + 1 == kappa { 1.0 } else { laws[r].cdf(self.edges[m + 1]) };
            let lo = if m == 0 { 0.0 } else { laws[r].cdf(self.edges[m]) };
            (hi - lo).max(0.0)
        })
    }

    /// Rank of the bin-probability matrix and its condition number
    /// `σ_1 / σ_R` (infinite when the rank is below R).
    pub fn admissibility_check(&self, laws: &[EmissionLaw]) -> Admissibility {
        let f = self.bin_probabilities(laws);
        let r = laws.len();
        let sv = f.singular_values();
        let mut sv: Vec<f64> = sv.iter().cloned().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let top = sv.first().cloned().unwrap_or(0.0);
        let tol = top * 1e-10 * (r.max(self.kappa())) as f64;
        let rank = sv.iter().filter(|&&s| s > tol).count();
        let condition = if rank < r || r == 0 { f64::INFINITY } else { top / sv[r - 1] };
        Admissibility { rank, condition_number: condition, admissible: rank == r }
    }
}

impl PartialEq for DyadicPartition {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level && self.edges == other.edges && self.transform.mode() == other.transform.mode()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub rank: usize,
    pub condition_number: f64,
    pub admissible: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> Vec<EmissionLaw> {
        vec![
            EmissionLaw::Normal { mean: -1.0, sd: 1.0 },
            EmissionLaw::Normal { mean: 1.0, sd: 1.0 },
        ]
    }

    #[test]
    fn sigmoid_linear_constants() {
        let s3 = 1.0 / (1.0 + (-3.0f64).exp());
        assert!((s3 - 0.952574).abs() < 1e-6);
        match TransformG0::sigmoid_linear() {
            TransformG0::SigmoidLinear { zeta, eta } => {
                assert!((zeta - 0.5).abs() < 1e-15);
                assert!((eta - (s3 - (1.0 - s3)) / 6.0).abs() < 1e-15);
                assert!((eta - 0.150858).abs() < 1e-6);
            }
            _ => unreachable!(),
        }
        let g = TransformG0::sigmoid_linear();
        assert_eq!(g.eval(0.0), 0.5);
        // Continuity at both joins.
        for y in [3.0f64, -3.0] {
            let inside = g.eval(y);
            let outside = g.eval(y + y.signum() * 1e-12);
            assert!((inside - outside).abs() < 1e-11);
        }
    }

    #[test]
    fn odd_symmetry_and_round_trip() {
        for g in [TransformG0::sigmoid_linear(), TransformG0::PureSigmoid] {
            for y in [-7.5, -3.0, -1.2, 0.0, 0.4, 1.7, 2.999, 3.5, 12.0] {
                assert!((g.eval(-y) - (1.0 - g.eval(y))).abs() < 1e-15);
                assert!((g.inverse(g.eval(y)).unwrap() - y).abs() < 1e-10, "{y}");
            }
        }
    }

    #[test]
    fn inverse_domain_errors() {
        let g = TransformG0::sigmoid_linear();
        for u in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(g.inverse(u), Err(Error::DomainError(_))));
        }
    }

    #[test]
    fn partition_examples() {
        let p = build_partition(TransformG0::sigmoid_linear(), 1).unwrap();
        assert_eq!(p.kappa(), 2);
        assert_eq!(p.edges()[1], 0.0);
        assert_eq!(build_partition(TransformG0::sigmoid_linear(), 3).unwrap().kappa(), 8);
        assert!(build_partition(TransformG0::sigmoid_linear(), 0).is_err());
    }

    #[test]
    fn partitions_are_nested() {
        for m in 1..7 {
            let coarse = build_partition(TransformG0::sigmoid_linear(), m).unwrap();
            let fine = build_partition(TransformG0::sigmoid_linear(), m + 1).unwrap();
            for (k, e) in coarse.edges().iter().enumerate() {
                assert_eq!(*e, fine.edges()[2 * k]);
            }
            assert!(fine.edges().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn coarsening_conventions() {
        let p = build_partition(TransformG0::sigmoid_linear(), 2).unwrap();
        // G0(0) = 0.5 lies in [0.5, 0.75): third bin.
        assert_eq!(p.bin_of(0.0), 2);
        assert_eq!(p.bin_of(f64::NEG_INFINITY), 0);
        assert_eq!(p.bin_of(f64::INFINITY), 3);
        assert_eq!(p.bin_of(1e300), 3);
        let ys: Vec<f64> = (-100..=100).map(|i| i as f64 * 0.07).collect();
        let c = p.coarsen(&ys);
        assert!(c.bins.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(c.counts().iter().sum::<usize>(), ys.len());
    }

    #[test]
    fn admissibility_examples() {
        let p1 = build_partition(TransformG0::sigmoid_linear(), 1).unwrap();
        let a = p1.admissibility_check(&truth());
        assert_eq!(a.rank, 2);
        assert!(a.admissible && a.condition_number.is_finite());
        let same = vec![EmissionLaw::Normal { mean: 0.0, sd: 1.0 }; 2];
        assert!(p1.admissibility_check(&same).rank < 2);
        let p3 = build_partition(TransformG0::sigmoid_linear(), 3).unwrap();
        assert_eq!(p3.admissibility_check(&truth()[..1]).rank, 1);
        let probs = p3.bin_probabilities(&truth());
        for r in 0..2 {
            assert!((probs.row(r).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_json_round_trip() {
        let p = build_partition(TransformG0::sigmoid_linear(), 3).unwrap();
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["M"], 3);
        assert_eq!(json["transform"]["mode"], "sigmoid-linear");
        assert_eq!(json["edges"][0], "-inf");
        let back: DyadicPartition = serde_json::from_value(json).unwrap();
        assert_eq!(back.edges(), p.edges());
        assert_eq!(back.kappa(), 8);
    }
}
