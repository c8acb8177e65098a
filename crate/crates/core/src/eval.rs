//! Classification (DET / EER) and recognition-utility (EDC / pAUC)
//! evaluation, plus per-expression discard flow.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{Expression, SampleMeta};
use crate::dataset::BinaryLabel;

/// Guards `floor(d * n)` against `d` landing one ulp below a grid value.
const DISCARD_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no {0:?} scores")]
    MissingClass(BinaryLabel),
    #[error("score is NaN")]
    NanScore,
    #[error("no quality score for sample {0:?}")]
    UnknownSample(String),
    #[error("comparison list is empty")]
    NoComparisons,
    #[error("comparison pairs sample {0:?} with itself")]
    SelfComparison(String),
    #[error("need at least 2 curve points for an area, got {0}")]
    TooFewPoints(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("comparisons line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    /// Ascending thresholds, bracketed by `-inf` and `+inf`.
    pub points: Vec<DetPoint>,
    pub eer: f64,
}

/// DET curve with neutral as the positive class: a score `s` is accepted as
/// neutral at threshold `t` when `s >= t`.
pub fn det_curve(scores: &[(f64, BinaryLabel)]) -> Result<DetCurve, EvalError> {
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(EvalError::NanScore);
    }
    let positives = scores.iter().filter(|(_, l)| *l == BinaryLabel::Neutral).count();
    let negatives = scores.len() - positives;
    if positives == 0 {
        return Err(EvalError::MissingClass(BinaryLabel::Neutral));
    }
    if negatives == 0 {
        return Err(EvalError::MissingClass(BinaryLabel::NonNeutral));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (np, nn) = (positives as f64, negatives as f64);
    let mut points = vec![DetPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        fnr: 0.0,
    }];
    // Counts of each class strictly below the current threshold.
    let (mut pos_below, mut neg_below) = (0usize, 0usize);
    let mut k = 0;
    while k < sorted.len() {
        let t = sorted[k].0;
        points.push(DetPoint {
            threshold: t,
            fpr: (negatives - neg_below) as f64 / nn,
            fnr: pos_below as f64 / np,
        });
        while k < sorted.len() && sorted[k].0 == t {
            match sorted[k].1 {
                BinaryLabel::Neutral => pos_below += 1,
                BinaryLabel::NonNeutral => neg_below += 1,
            }
            k += 1;
        }
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        fnr: 1.0,
    });
    let eer = equal_error_rate(&points);
    Ok(DetCurve { points, eer })
}

/// Crossing of FNR and FPR along the curve, linearly interpolated between
/// the two bracketing points.
pub fn equal_error_rate(points: &[DetPoint]) -> f64 {
    let k = points
        .iter()
        .position(|p| p.fnr - p.fpr >= 0.0)
        .expect("curve ends with fnr = 1, fpr = 0");
    let hi = points[k];
    let d_hi = hi.fnr - hi.fpr;
    if d_hi == 0.0 || k == 0 {
        return hi.fnr;
    }
    let lo = points[k - 1];
    let d_lo = lo.fnr - lo.fpr;
    let lambda = -d_lo / (d_hi - d_lo);
    lo.fnr + lambda * (hi.fnr - lo.fnr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatedComparison {
    pub probe_id: String,
    pub reference_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    Fixed(f64),
    /// Smallest threshold whose zero-discard FNMR reaches this value.
    StartingFnmr(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdcConfig {
    pub d_max: f64,
    pub grid_step: f64,
    pub threshold_mode: ThresholdMode,
}

impl Default for EdcConfig {
    fn default() -> Self {
        Self {
            d_max: 0.20,
            grid_step: 0.01,
            threshold_mode: ThresholdMode::StartingFnmr(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdcCurve {
    pub discard_fractions: Vec<f64>,
    pub fnmr_values: Vec<f64>,
    pub threshold: f64,
    pub pauc: f64,
    pub pauc_normalized: f64,
    /// Set when every comparison was discarded before the end of the grid;
    /// the curve then stops at the last non-empty point.
    pub truncated: bool,
}

/// `0, step, 2 step, ...` up to `d_max`, with `d_max` always the last point.
pub fn discard_grid(d_max: f64, step: f64) -> Result<Vec<f64>, EvalError> {
    if !(d_max > 0.0 && d_max <= 1.0) {
        return Err(EvalError::InvalidConfig(format!("d_max {d_max} must lie in (0, 1]")));
    }
    if !(step > 0.0 && step <= d_max) {
        return Err(EvalError::InvalidConfig(format!("grid step {step} must lie in (0, d_max]")));
    }
    let steps = (d_max / step + DISCARD_EPS).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|i| (i as f64 * step).min(d_max)).collect();
    if let Some(last) = grid.last_mut() {
        if (d_max - *last).abs() <= DISCARD_EPS * d_max {
            *last = d_max;
        } else {
            grid.push(d_max);
        }
    }
    Ok(grid)
}

pub fn discard_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + DISCARD_EPS).floor() as usize).min(n)
}

/// Smallest threshold `t` with `#{similarity < t} >= ceil(f0 * P)`.
pub fn threshold_for_starting_fnmr(similarities: &[f64], f0: f64) -> Result<f64, EvalError> {
    if !(0.0..=1.0).contains(&f0) {
        return Err(EvalError::InvalidConfig(format!("starting FNMR {f0} outside [0, 1]")));
    }
    if similarities.is_empty() {
        return Err(EvalError::NoComparisons);
    }
    let mut sorted = similarities.to_vec();
    sorted.sort_by(f64::total_cmp);
    let needed = ((f0 * sorted.len() as f64 - DISCARD_EPS).ceil().max(0.0) as usize).min(sorted.len());
    Ok(match needed {
        0 => sorted[0],
        m => sorted[m - 1].next_up(),
    })
}

pub fn edc_curve(
    qualities: &HashMap<String, f64>,
    comparisons: &[MatedComparison],
    cfg: &EdcConfig,
) -> Result<EdcCurve, EvalError> {
    let grid = discard_grid(cfg.d_max, cfg.grid_step)?;
    edc_curve_on_grid(qualities, comparisons, &grid, cfg.threshold_mode)
}

/// EDC on an explicit ascending grid starting at 0.
pub fn edc_curve_on_grid(
    qualities: &HashMap<String, f64>,
    comparisons: &[MatedComparison],
    grid: &[f64],
    mode: ThresholdMode,
) -> Result<EdcCurve, EvalError> {
    if comparisons.is_empty() {
        return Err(EvalError::NoComparisons);
    }
    if grid.len() < 2 || grid[0] != 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) || grid[grid.len() - 1] > 1.0 {
        return Err(EvalError::InvalidConfig("grid must ascend from 0 within [0, 1]".into()));
    }
    let quality = |id: &str| {
        qualities
            .get(id)
            .copied()
            .ok_or_else(|| EvalError::UnknownSample(id.to_string()))
    };
    let mut pairs = Vec::with_capacity(comparisons.len());
    for c in comparisons {
        if c.probe_id == c.reference_id {
            return Err(EvalError::SelfComparison(c.probe_id.clone()));
        }
        if c.similarity.is_nan() {
            return Err(EvalError::NanScore);
        }
        let q = quality(&c.probe_id)?.min(quality(&c.reference_id)?);
        pairs.push((q, c));
    }
    pairs.sort_by(|(qa, a), (qb, b)| {
        qa.total_cmp(qb)
            .then_with(|| a.probe_id.cmp(&b.probe_id))
            .then_with(|| a.reference_id.cmp(&b.reference_id))
            .then_with(|| a.similarity.total_cmp(&b.similarity))
    });

    let threshold = match mode {
        ThresholdMode::Fixed(t) => t,
        ThresholdMode::StartingFnmr(f0) => {
            let sims: Vec<f64> = comparisons.iter().map(|c| c.similarity).collect();
            threshold_for_starting_fnmr(&sims, f0)?
        }
    };

    // rejected_after[k] = false non-matches among pairs[k..]
    let total = pairs.len();
    let mut rejected_after = vec![0usize; total + 1];
    for k in (0..total).rev() {
        rejected_after[k] = rejected_after[k + 1] + usize::from(pairs[k].1.similarity < threshold);
    }

    let mut discard_fractions = Vec::with_capacity(grid.len());
    let mut fnmr_values = Vec::with_capacity(grid.len());
    let mut truncated = false;
    for &d in grid {
        let k = discard_count(d, total);
        let retained = total - k;
        if retained == 0 {
            truncated = true;
            break;
        }
        discard_fractions.push(d);
        fnmr_values.push(rejected_after[k] as f64 / retained as f64);
    }

    let area = if discard_fractions.len() >= 2 {
        trapezoid(&discard_fractions, &fnmr_values)?
    } else {
        0.0
    };
    let span = discard_fractions.last().copied().unwrap_or(0.0);
    Ok(EdcCurve {
        discard_fractions,
        fnmr_values,
        threshold,
        pauc: area,
        pauc_normalized: if span > 0.0 { area / span } else { 0.0 },
        truncated,
    })
}

/// Trapezoidal area under `(xs, ys)`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(EvalError::TooFewPoints(xs.len().min(ys.len())));
    }
    Ok(xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum())
}

/// Raw and `d_max`-normalized partial area of an EDC curve.
pub fn pauc(curve: &EdcCurve) -> Result<(f64, f64), EvalError> {
    let raw = trapezoid(&curve.discard_fractions, &curve.fnmr_values)?;
    let span = curve.discard_fractions[curve.discard_fractions.len() - 1] - curve.discard_fractions[0];
    Ok((raw, raw / span))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassFlow {
    pub discard_fractions: Vec<f64>,
    /// Per-expression share of the retained samples at each grid point, for
    /// every expression present in the input.
    pub proportions: BTreeMap<Expression, Vec<f64>>,
    pub retained: Vec<usize>,
}

/// Drops the `floor(d * N)` lowest-confidence samples (ties by sample id)
/// at each grid point and reports the expression mix of what remains.
pub fn class_flow(
    qualities: &HashMap<String, f64>,
    samples: &[SampleMeta],
    grid: &[f64],
) -> Result<ClassFlow, EvalError> {
    if grid.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return Err(EvalError::InvalidConfig("discard fractions must lie in [0, 1]".into()));
    }
    let mut ranked = Vec::with_capacity(samples.len());
    for s in samples {
        let q = qualities
            .get(&s.sample_id)
            .copied()
            .ok_or_else(|| EvalError::UnknownSample(s.sample_id.clone()))?;
        if q.is_nan() {
            return Err(EvalError::NanScore);
        }
        ranked.push((q, s.sample_id.as_str(), s.expression));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));

    let labels: Vec<Expression> = {
        let present: HashSet<Expression> = ranked.iter().map(|r| r.2).collect();
        let mut v: Vec<_> = present.into_iter().collect();
        v.sort();
        v
    };
    let n = ranked.len();
    let mut proportions: BTreeMap<Expression, Vec<f64>> =
        labels.iter().map(|&l| (l, Vec::with_capacity(grid.len()))).collect();
    let mut retained = Vec::with_capacity(grid.len());
    for &d in grid {
        let k = discard_count(d, n);
        let kept = &ranked[k..];
        let mut counts: BTreeMap<Expression, usize> = BTreeMap::new();
        for r in kept {
            *counts.entry(r.2).or_default() += 1;
        }
        for &l in &labels {
            let share = if kept.is_empty() {
                0.0
            } else {
                counts.get(&l).copied().unwrap_or(0) as f64 / kept.len() as f64
            };
            proportions.get_mut(&l).unwrap().push(share);
        }
        retained.push(kept.len());
    }
    Ok(ClassFlow {
        discard_fractions: grid.to_vec(),
        proportions,
        retained,
    })
}

pub const COMPARISONS_HEADER: &str = "probe_id,reference_id,similarity";

pub fn parse_comparisons(text: &str) -> Result<Vec<MatedComparison>, EvalError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == COMPARISONS_HEADER => {}
        _ => {
            return Err(EvalError::Parse {
                line: 1,
                message: format!("expected header {COMPARISONS_HEADER:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Parse { line: idx + 1, message };
        let fields: Vec<&str> = line.split(',').collect();
        let [probe, reference, sim] = fields[..] else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let similarity = sim.parse().map_err(|_| err(format!("bad similarity {sim:?}")))?;
        out.push(MatedComparison {
            probe_id: probe.to_string(),
            reference_id: reference.to_string(),
            similarity,
        });
    }
    Ok(out)
}

pub fn read_comparisons(path: impl AsRef<Path>) -> Result<Vec<MatedComparison>, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_comparisons(&text)
}

pub fn format_comparisons(comparisons: &[MatedComparison]) -> String {
    let mut out = format!("{COMPARISONS_HEADER}\n");
    for c in comparisons {
        writeln!(out, "{},{},{}", c.probe_id, c.reference_id, c.similarity).unwrap();
    }
    out
}

pub fn det_csv(curve: &DetCurve) -> String {
    let mut out = String::from("threshold,fpr,fnr\n");
    for p in &curve.points {
        writeln!(out, "{},{:.9},{:.9}", p.threshold, p.fpr, p.fnr).unwrap();
    }
    out
}

pub fn edc_csv(curve: &EdcCurve) -> String {
    let mut out = String::from("discard_fraction,fnmr\n");
    for (d, f) in curve.discard_fractions.iter().zip(&curve.fnmr_values) {
        writeln!(out, "{d:.9},{f:.9}").unwrap();
    }
    out
}

pub fn flow_csv(flow: &ClassFlow) -> String {
    let mut out = String::from("discard_fraction,label,proportion\n");
    for (i, d) in flow.discard_fractions.iter().enumerate() {
        for (label, shares) in &flow.proportions {
            writeln!(out, "{d:.9},{label},{:.9}", shares[i]).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::{NonNeutral as Nn, Neutral as N};

    #[test]
    fn det_examples() {
        let separable = det_curve(&[(0.9, N), (0.8, N), (0.1, Nn), (0.2, Nn)]).unwrap();
        assert_eq!(separable.eer, 0.0);
        let mixed = det_curve(&[(0.9, N), (0.2, N), (0.8, Nn), (0.1, Nn)]).unwrap();
        assert_eq!(mixed.eer, 0.5);
        let anti = det_curve(&[(0.1, N), (0.2, N), (0.8, Nn), (0.9, Nn)]).unwrap();
        assert_eq!(anti.eer, 1.0);
        assert_eq!(mixed.points.len(), 6);
        assert_eq!(mixed.points[0], DetPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, fnr: 0.0 });
    }

    #[test]
    fn det_interpolates_between_brackets() {
        // N = {0.3, 0.6, 0.9}, NN = {0.5}: at t=0.5 fnr=1/3, fpr=1; at t=0.6 fnr=1/3, fpr=0.
        let curve = det_curve(&[(0.3, N), (0.6, N), (0.9, N), (0.5, Nn)]).unwrap();
        assert!((curve.eer - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn det_needs_both_classes() {
        assert!(matches!(det_curve(&[(0.1, N)]), Err(EvalError::MissingClass(Nn))));
        assert!(matches!(det_curve(&[(f64::NAN, N), (0.1, Nn)]), Err(EvalError::NanScore)));
    }

    #[test]
    fn grid_construction() {
        let g = discard_grid(0.2, 0.01).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[20], 0.2);
        assert_eq!(discard_grid(0.25, 0.1).unwrap(), vec![0.0, 0.1, 0.2, 0.25]);
        assert!(discard_grid(0.0, 0.01).is_err());
        assert_eq!(discard_count(0.29, 100), 29);
    }

    #[test]
    fn trapezoid_shapes() {
        assert!((trapezoid(&[0.0, 0.2], &[0.05, 0.0]).unwrap() - 0.005).abs() < 1e-15);
        assert_eq!(trapezoid(&[0.0, 0.1, 0.2], &[0.0; 3]).unwrap(), 0.0);
        assert!(trapezoid(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn starting_threshold() {
        let sims = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        let t = threshold_for_starting_fnmr(&sims, 0.2).unwrap();
        assert!(t > 0.2 && t < 0.3);
        assert_eq!(sims.iter().filter(|&&s| s < t).count(), 2);
        assert_eq!(threshold_for_starting_fnmr(&sims, 0.0).unwrap(), 0.1);
    }

    #[test]
    fn edc_errors() {
        let q: HashMap<String, f64> = [("a".to_string(), 0.5)].into();
        let c = vec![MatedComparison {
            probe_id: "a".into(),
            reference_id: "b".into(),
            similarity: 0.3,
        }];
        assert!(matches!(
            edc_curve(&q, &c, &EdcConfig::default()),
            Err(EvalError::UnknownSample(id)) if id == "b"
        ));
        assert!(matches!(edc_curve(&q, &[], &EdcConfig::default()), Err(EvalError::NoComparisons)));
    }

    #[test]
    fn edc_truncates_when_everything_is_discarded() {
        let q: HashMap<String, f64> = [("a", 0.1), ("b", 0.2), ("c", 0.3)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let c = vec![MatedComparison {
            probe_id: "a".into(),
            reference_id: "b".into(),
            similarity: 0.3,
        }];
        let curve = edc_curve_on_grid(&q, &c, &[0.0, 0.5, 1.0], ThresholdMode::Fixed(0.5)).unwrap();
        assert!(curve.truncated);
        assert_eq!(curve.discard_fractions, vec![0.0, 0.5]);
        assert_eq!(curve.fnmr_values, vec![1.0, 1.0]);
    }

    #[test]
    fn comparisons_csv_roundtrip() {
        let c = vec![MatedComparison {
            probe_id: "a".into(),
            reference_id: "b".into(),
            similarity: 0.625,
        }];
        assert_eq!(parse_comparisons(&format_comparisons(&c)).unwrap(), c);
        assert!(parse_comparisons("a,b\n").is_err());
    }
}
