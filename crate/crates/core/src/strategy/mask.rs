//! Mask construction and the mixed-weight arithmetic shared by the
//! stochastic strategies.
//!
//! Ranked masks use one global ranking across all maskable tensors: exactly
//! `ceil((1 - p) * N)` entries are kept, ties at the threshold resolved by
//! (tensor name ascending, row-major index ascending). Selection by count
//! rather than a literal percentile threshold keeps tied entries
//! deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::MlpModel;
use crate::strategy::accum::{FreqAccumulator, GradAccumulator, TensorMap};
use crate::tensor::{Matrix, Rng};

/// Update-frequency penalty is skipped below this stage length.
pub const PENALTY_BOUNDARY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskProvenance {
    /// Fresh Bernoulli draw (resampled every step).
    Bernoulli,
    /// Importance ranking of accumulated gradient statistics.
    Ranked,
    /// Computed once before training, never refreshed.
    Fixed,
}

/// Binary matrices congruent to the maskable tensors, entries in {0, 1}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskSet {
    values: TensorMap,
    provenance: MaskProvenance,
}

impl MaskSet {
    pub fn new(values: TensorMap, provenance: MaskProvenance) -> Self {
        MaskSet { values, provenance }
    }

    pub fn provenance(&self) -> MaskProvenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: MaskProvenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.values.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Matrix)> {
        self.values.iter()
    }

    pub fn ones_count(&self) -> usize {
        self.values
            .iter()
            .map(|(_, m)| m.data().iter().filter(|v| **v == 1.0).count())
            .sum()
    }

    pub fn total_entries(&self) -> usize {
        self.values.total_entries()
    }

    /// All-ones mask over the model's maskable tensors.
    pub fn full(model: &MlpModel, provenance: MaskProvenance) -> Self {
        let mut values = TensorMap::new();
        for p in model.maskable_params() {
            let (r, c) = p.value().shape();
            values.insert(p.name().to_string(), Matrix::ones(r, c));
        }
        MaskSet { values, provenance }
    }

    /// Independent Bernoulli(keep_prob) entries over the maskable tensors.
    pub fn bernoulli(model: &MlpModel, keep_prob: f64, rng: &mut Rng) -> Result<Self> {
        let mut values = TensorMap::new();
        // model order == name order here; sampling is per-tensor in a
        // deterministic sequence either way
        for p in model.maskable_params() {
            let (r, c) = p.value().shape();
            values.insert(
                p.name().to_string(),
                Matrix::bernoulli_mask(r, c, keep_prob, rng)?,
            );
        }
        Ok(MaskSet {
            values,
            provenance: MaskProvenance::Bernoulli,
        })
    }
}

/// Number of kept entries: `ceil((1 - p) * n)`, evaluated as
/// `n - floor(p * n)` with a tiny epsilon so that grid probabilities like
/// 0.3 are treated as the exact rationals they denote.
pub fn keep_count(p: f64, n: usize) -> usize {
    debug_assert!((0.0..1.0).contains(&p));
    n - ((p * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Scores laid out in global ranking order (name asc, row-major index asc).
fn flatten_scores(scores: &TensorMap) -> Vec<f64> {
    let mut flat = Vec::with_capacity(scores.total_entries());
    for (_, m) in scores.iter() {
        flat.extend_from_slice(m.data());
    }
    flat
}

fn mask_from_selected(scores: &TensorMap, selected: &[bool], provenance: MaskProvenance) -> MaskSet {
    let mut values = TensorMap::new();
    let mut offset = 0;
    for (name, m) in scores.iter() {
        let mut mask = Matrix::zeros(m.rows(), m.cols());
        for (i, v) in mask.data_mut().iter_mut().enumerate() {
            if selected[offset + i] {
                *v = 1.0;
            }
        }
        offset += m.len();
        values.insert(name.clone(), mask);
    }
    MaskSet::new(values, provenance)
}

/// Keep the top `ceil((1 - p) * N)` entries of `scores` by value, ties
/// resolved in flat (name, index) order.
fn ranked_mask_from_scores(scores: &TensorMap, p: f64, provenance: MaskProvenance) -> Result<MaskSet> {
    if scores.is_empty() {
        return Err(Error::EmptyAccumulator);
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p {p} outside [0, 1)")));
    }
    let flat = flatten_scores(scores);
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ranking scores".into()));
    }
    let keep = keep_count(p, flat.len());

    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        flat[b]
            .partial_cmp(&flat[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });

    let mut selected = vec![false; flat.len()];
    for &idx in order.iter().take(keep) {
        selected[idx] = true;
    }
    Ok(mask_from_selected(scores, &selected, provenance))
}

/// Importance ranking of the gradient accumulator alone (the dense variant).
pub fn ranked_mask_dense(gam: &GradAccumulator, p: f64) -> Result<MaskSet> {
    ranked_mask_from_scores(&gam.0, p, MaskProvenance::Ranked)
}

/// Frequency-penalized ranking for the mix variant: the per-update average
/// accumulated gradient statistic, damped by `exp(-freq / us)` once stages
/// are long enough (`us >= 50`) for the penalty to be stable. Entries never
/// updated in Stage I score 0.
pub fn ranked_mask_mix(
    gam: &GradAccumulator,
    fam: &FreqAccumulator,
    us: usize,
    p: f64,
) -> Result<MaskSet> {
    ranked_mask_mix_with_boundary(gam, fam, us, p, PENALTY_BOUNDARY)
}

pub fn ranked_mask_mix_with_boundary(
    gam: &GradAccumulator,
    fam: &FreqAccumulator,
    us: usize,
    p: f64,
    penalty_boundary: usize,
) -> Result<MaskSet> {
    if gam.0.is_empty() || fam.0.is_empty() {
        return Err(Error::EmptyAccumulator);
    }
    let mut scores = TensorMap::new();
    for (name, g) in gam.0.iter() {
        let f = fam
            .0
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("frequency accumulator missing {name}")))?;
        if !g.same_shape(f) {
            return Err(Error::DimensionMismatch(format!(
                "accumulators for {name} disagree: {:?} vs {:?}",
                g.shape(),
                f.shape()
            )));
        }
        let mut s = Matrix::zeros(g.rows(), g.cols());
        for ((out, gv), fv) in s.data_mut().iter_mut().zip(g.data()).zip(f.data()) {
            *out = mix_score(*gv, *fv, us, penalty_boundary);
        }
        scores.insert(name.clone(), s);
    }
    ranked_mask_from_scores(&scores, p, MaskProvenance::Ranked)
}

/// Selection score of one entry.
pub fn mix_score(gam: f64, fam: f64, us: usize, penalty_boundary: usize) -> f64 {
    if fam == 0.0 {
        return 0.0;
    }
    let ratio = gam / fam;
    if us < penalty_boundary {
        ratio
    } else {
        ratio * (-(fam / us as f64)).exp()
    }
}

/// Forward weights for a mixed update against an anchor:
/// kept entries move away from the anchor by `1/(1 - p)`, dropped entries
/// sit exactly at the anchor. Algebraically this is
/// `(M.W + (I - M).A - p.A) / (1 - p)`; the rearranged form
/// `W + p (W - A) / (1 - p)` makes two identities hold bit-exactly:
/// `W == A` gives the anchor back for any mask, and `p == 0` leaves `W`
/// untouched.
pub fn mixed_weights(value: &Matrix, anchor: &Matrix, mask: &Matrix, p: f64) -> Result<Matrix> {
    if p >= 1.0 || p < 0.0 {
        return Err(Error::InvalidArgument(format!("drop fraction {p} outside [0, 1)")));
    }
    if !value.same_shape(anchor) || !value.same_shape(mask) {
        return Err(Error::DimensionMismatch("mixed_weights shapes".into()));
    }
    let mut out = value.clone();
    let scale = p / (1.0 - p);
    for ((o, a), m) in out.data_mut().iter_mut().zip(anchor.data()).zip(mask.data()) {
        if *m == 1.0 {
            *o += scale * (*o - *a);
        } else {
            *o = *a;
        }
    }
    out.ensure_finite("mixed_weights")?;
    Ok(out)
}

/// Pull a gradient taken at the mixed weights back onto the raw parameters:
/// kept entries scale by `1/(1 - p)`, dropped entries get exactly zero.
pub fn mixed_grad_to_param(grad: &Matrix, mask: &Matrix, p: f64) -> Result<Matrix> {
    if p >= 1.0 || p < 0.0 {
        return Err(Error::InvalidArgument(format!("drop fraction {p} outside [0, 1)")));
    }
    if !grad.same_shape(mask) {
        return Err(Error::DimensionMismatch("mixed_grad shapes".into()));
    }
    let mut out = grad.clone();
    let denom = 1.0 - p;
    for (g, m) in out.data_mut().iter_mut().zip(mask.data()) {
        if *m == 1.0 {
            *g /= denom;
        } else {
            *g = 0.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_tensor(scores: &[f64]) -> GradAccumulator {
        let mut map = TensorMap::new();
        map.insert("w", Matrix::from_vec(1, scores.len(), scores.to_vec()).unwrap());
        GradAccumulator(map)
    }

    fn freq(values: &[f64]) -> FreqAccumulator {
        let mut map = TensorMap::new();
        map.insert("w", Matrix::from_vec(1, values.len(), values.to_vec()).unwrap());
        FreqAccumulator(map)
    }

    #[test]
    fn dense_ranking_selects_top_half() {
        let gam = single_tensor(&[0.4, 0.1, 0.3, 0.2]);
        let mask = ranked_mask_dense(&gam, 0.5).unwrap();
        assert_eq!(mask.get("w").unwrap().data(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn p_zero_keeps_everything() {
        let gam = single_tensor(&[0.0, 5.0, 1.0]);
        let mask = ranked_mask_dense(&gam, 0.0).unwrap();
        assert_eq!(mask.ones_count(), 3);
    }

    #[test]
    fn ties_break_by_flat_index() {
        let gam = single_tensor(&[1.0, 1.0, 1.0, 1.0]);
        let mask = ranked_mask_dense(&gam, 0.5).unwrap();
        assert_eq!(mask.get("w").unwrap().data(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn tensor_name_breaks_cross_tensor_ties() {
        let mut map = TensorMap::new();
        map.insert("b", Matrix::filled(1, 2, 1.0));
        map.insert("a", Matrix::filled(1, 2, 1.0));
        let mask = ranked_mask_dense(&GradAccumulator(map), 0.5).unwrap();
        assert_eq!(mask.get("a").unwrap().data(), &[1.0, 1.0]);
        assert_eq!(mask.get("b").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn empty_accumulator_is_an_error() {
        let gam = GradAccumulator(TensorMap::new());
        assert!(matches!(ranked_mask_dense(&gam, 0.1), Err(Error::EmptyAccumulator)));
    }

    #[test]
    fn keep_count_handles_grid_probabilities() {
        assert_eq!(keep_count(0.3, 10), 7);
        assert_eq!(keep_count(0.0, 10), 10);
        assert_eq!(keep_count(0.5, 5), 3); // ceil(2.5)
        assert_eq!(keep_count(0.1, 10000), 9000);
        assert_eq!(keep_count(0.25, 4), 3);
    }

    #[test]
    fn mix_score_matches_direct_evaluation() {
        // (2/50) * e^{-50/100}
        let s = mix_score(2.0, 50.0, 100, PENALTY_BOUNDARY);
        assert!((s - 0.024261226388505336).abs() < 1e-15);
        // below the boundary the penalty is bypassed exactly
        assert_eq!(mix_score(2.0, 50.0, 40, PENALTY_BOUNDARY), 0.04);
        // untouched entries never outrank touched ones
        assert_eq!(mix_score(0.0, 0.0, 100, PENALTY_BOUNDARY), 0.0);
    }

    #[test]
    fn frequency_penalty_prefers_rarely_updated_entries() {
        let gam = single_tensor(&[1.0, 1.0]);
        let fam = freq(&[10.0, 90.0]);
        let mask = ranked_mask_mix(&gam, &fam, 100, 0.5).unwrap();
        assert_eq!(mask.get("w").unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn mixed_weights_scalar_case() {
        // W=3, anchor=1, p=0.5, M=0 -> anchor
        let w = Matrix::filled(1, 1, 3.0);
        let a = Matrix::filled(1, 1, 1.0);
        let dropped = Matrix::zeros(1, 1);
        let kept = Matrix::ones(1, 1);
        assert_eq!(mixed_weights(&w, &a, &dropped, 0.5).unwrap().get(0, 0), 1.0);
        // kept entry: (3 - 0.5*1) / 0.5 = 5
        assert_eq!(mixed_weights(&w, &a, &kept, 0.5).unwrap().get(0, 0), 5.0);
        assert!(mixed_weights(&w, &a, &kept, 1.0).is_err());
    }

    #[test]
    fn anchor_identity_is_bit_exact() {
        let mut rng = Rng::new(4);
        let w = Matrix::gaussian_init(3, 3, 0.0, 1.0, &mut rng).unwrap();
        for p in [0.1, 0.3, 0.5, 0.7] {
            let mask = Matrix::bernoulli_mask(3, 3, 0.5, &mut rng).unwrap();
            let mixed = mixed_weights(&w, &w, &mask, p).unwrap();
            for (x, y) in mixed.data().iter().zip(w.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn p_zero_mixing_is_bit_exact_identity() {
        let mut rng = Rng::new(6);
        let w = Matrix::gaussian_init(4, 4, 0.0, 1.0, &mut rng).unwrap();
        let a = Matrix::gaussian_init(4, 4, 0.0, 1.0, &mut rng).unwrap();
        let mask = Matrix::ones(4, 4);
        let mixed = mixed_weights(&w, &a, &mask, 0.0).unwrap();
        for (x, y) in mixed.data().iter().zip(w.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let g = Matrix::gaussian_init(4, 4, 0.0, 1.0, &mut rng).unwrap();
        let back = mixed_grad_to_param(&g, &mask, 0.0).unwrap();
        for (x, y) in back.data().iter().zip(g.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn dropped_entries_get_zero_gradient() {
        let g = Matrix::filled(2, 2, 4.0);
        let mut mask = Matrix::ones(2, 2);
        mask.set(1, 1, 0.0);
        let back = mixed_grad_to_param(&g, &mask, 0.5).unwrap();
        assert_eq!(back.get(0, 0), 8.0);
        assert_eq!(back.get(1, 1), 0.0);
    }
}
