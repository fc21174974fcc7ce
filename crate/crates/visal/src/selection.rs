//! Top-down key-object selection: classes are ranked by saliency statistics
//! accumulated over previous frames, the current frame's detection proposals
//! are scored against that ranking, and the winning box is locally
//! contrast-enhanced (falling back to a centered Gaussian prior when no
//! history exists).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{centered_gaussian, Frame, Rect, SaliencyMap};

/// One detection box: class label, pixel bounds, detector confidence.
///
/// Scoring uses the saliency-overlap statistic, not `det_conf`; the detector
/// confidence is carried for serialization and audit.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub class_id: i64,
    pub bbox: Rect,
    pub det_conf: f64,
}

/// How the supra-threshold pixel count inside a box is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapMode {
    /// Raw pixel count (the literal definition).
    Raw,
    /// Count divided by box area, removing the large-box bias.
    Normalized,
}

/// Ranked class list with per-class average confidence, accumulated over the
/// frames seen so far.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalRanking {
    gsc: Vec<i64>,
    gss: BTreeMap<i64, f64>,
}

impl GlobalRanking {
    pub fn is_empty(&self) -> bool {
        self.gsc.is_empty()
    }

    /// Class ids, best first.
    pub fn classes(&self) -> &[i64] {
        &self.gsc
    }

    /// Per-frame average confidence for a ranked class.
    pub fn average(&self, class_id: i64) -> Option<f64> {
        self.gss.get(&class_id).copied()
    }

    /// 1-based position of a class in the ranking.
    pub fn rank(&self, class_id: i64) -> Option<usize> {
        self.gsc.iter().position(|&c| c == class_id).map(|i| i + 1)
    }

    pub fn averages(&self) -> &BTreeMap<i64, f64> {
        &self.gss
    }
}

/// Intensity remap ranges for the local enhancement: pixels are stretched
/// from `[in_lo, in_hi]` onto `[out_lo, out_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceRanges {
    in_lo: f64,
    in_hi: f64,
    out_lo: f64,
    out_hi: f64,
}

impl EnhanceRanges {
    pub fn new(in_lo: f64, in_hi: f64, out_lo: f64, out_hi: f64) -> Result<Self> {
        for (lo, hi, which) in [(in_lo, in_hi, "input"), (out_lo, out_hi, "output")] {
            if !(0.0..=255.0).contains(&lo) || !(0.0..=255.0).contains(&hi) {
                return Err(Error::config(format!(
                    "{which} range [{lo}, {hi}] outside [0, 255]"
                )));
            }
            if hi <= lo {
                return Err(Error::config(format!(
                    "degenerate {which} range [{lo}, {hi}]"
                )));
            }
        }
        Ok(EnhanceRanges {
            in_lo,
            in_hi,
            out_lo,
            out_hi,
        })
    }

    pub fn in_lo(&self) -> f64 {
        self.in_lo
    }

    pub fn in_hi(&self) -> f64 {
        self.in_hi
    }

    pub fn out_lo(&self) -> f64 {
        self.out_lo
    }

    pub fn out_hi(&self) -> f64 {
        self.out_hi
    }
}

/// How enhancement ranges are chosen per selected region.
#[derive(Debug, Clone, PartialEq)]
pub enum EnhanceMode {
    /// Input range from percentiles of the region's own intensities.
    Percentile {
        lo_pct: f64,
        hi_pct: f64,
        out_lo: f64,
        out_hi: f64,
    },
    /// Fixed ranges for every region.
    Fixed(EnhanceRanges),
}

/// Knobs for [`select_and_augment`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectParams {
    /// Saliency binarization threshold for the overlap statistic, in (0,1).
    pub tau: f64,
    pub overlap: OverlapMode,
    pub enhance: EnhanceMode,
    /// Center-prior Gaussian sigmas as fractions of (height, width).
    pub center_sigma_frac: (f64, f64),
}

impl Default for SelectParams {
    fn default() -> Self {
        SelectParams {
            tau: 0.5,
            overlap: OverlapMode::Raw,
            enhance: EnhanceMode::Percentile {
                lo_pct: 2.0,
                hi_pct: 98.0,
                out_lo: 0.0,
                out_hi: 255.0,
            },
            center_sigma_frac: (1.0 / 3.0, 1.0 / 3.0),
        }
    }
}

/// Which path produced an augmented frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    KeyObject,
    CenterPrior,
}

/// Audit record for one frame's selection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiReport {
    /// 1-based frame index; filled in by the pipeline driver.
    pub frame: usize,
    pub branch: Branch,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub winner_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bbox: Option<[usize; 4]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
}

/// One proposal's score, in rank order after sorting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredProposal {
    /// Index into the input proposal list.
    pub index: usize,
    pub score: f64,
    /// True when the class was ranked but its stored average was zero, so the
    /// ratio term was dropped.
    pub zero_avg_guard: bool,
}

/// Count of pixels inside `bbox` whose saliency is at least `tau`; in
/// normalized mode the count is divided by the box area.
pub fn overlap_confidence(s: &SaliencyMap, bbox: &Rect, tau: f64, mode: OverlapMode) -> f64 {
    let mut count = 0usize;
    for y in bbox.y1..bbox.y2.min(s.height()) {
        for x in bbox.x1..bbox.x2.min(s.width()) {
            if s.get(y, x) >= tau {
                count += 1;
            }
        }
    }
    match mode {
        OverlapMode::Raw => count as f64,
        OverlapMode::Normalized => count as f64 / bbox.area() as f64,
    }
}

/// Accumulate per-class overlap confidence over a history of
/// (saliency, proposals) pairs, average by the history length, and rank
/// classes by that average, best first. Ties keep first-appearance order.
pub fn global_ranking(
    history: &[(SaliencyMap, Vec<Proposal>)],
    tau: f64,
    mode: OverlapMode,
) -> GlobalRanking {
    if history.is_empty() {
        return GlobalRanking::default();
    }
    // first-appearance order, so the later stable sort breaks ties predictably
    let mut order: Vec<i64> = Vec::new();
    let mut totals: BTreeMap<i64, f64> = BTreeMap::new();
    for (s, proposals) in history {
        for p in proposals {
            let conf = overlap_confidence(s, &p.bbox, tau, mode);
            if !totals.contains_key(&p.class_id) {
                order.push(p.class_id);
            }
            *totals.entry(p.class_id).or_insert(0.0) += conf;
        }
    }
    let denom = history.len() as f64;
    let gss: BTreeMap<i64, f64> = totals.into_iter().map(|(c, v)| (c, v / denom)).collect();
    let mut gsc = order;
    gsc.sort_by(|a, b| gss[b].partial_cmp(&gss[a]).unwrap());
    GlobalRanking { gsc, gss }
}

/// Score every proposal against the current saliency map and ranking.
///
/// A ranked class with average `g` and 1-based rank `r` scores
/// `conf * (1 + (conf/g) * (1/r))`; an unranked (newly seen) class scores
/// `2 * conf`. The result is sorted by score descending, ties broken by the
/// smaller input index.
pub fn score_proposals(
    proposals: &[Proposal],
    s: &SaliencyMap,
    ranking: &GlobalRanking,
    tau: f64,
    mode: OverlapMode,
) -> Vec<ScoredProposal> {
    let mut scored: Vec<ScoredProposal> = proposals
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let conf = overlap_confidence(s, &p.bbox, tau, mode);
            match ranking.rank(p.class_id) {
                Some(rank) => {
                    let g = ranking.average(p.class_id).expect("ranked class has average");
                    if g == 0.0 {
                        ScoredProposal {
                            index,
                            score: conf,
                            zero_avg_guard: true,
                        }
                    } else {
                        ScoredProposal {
                            index,
                            score: conf * (1.0 + (conf / g) * (1.0 / rank as f64)),
                            zero_avg_guard: false,
                        }
                    }
                }
                None => ScoredProposal {
                    index,
                    score: 2.0 * conf,
                    zero_avg_guard: false,
                },
            }
        })
        .collect();
    // stable sort: equal scores keep ascending input-index order
    scored.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    scored
}

/// Linear intensity remap of a grayscale patch from the input range onto the
/// output range, with saturation at both ends and round-half-to-even.
pub fn stretch_contrast(roi: &Frame, r: &EnhanceRanges) -> Result<Frame> {
    let span_in = r.in_hi - r.in_lo;
    let span_out = r.out_hi - r.out_lo;
    let lo_q = r.out_lo.round_ties_even();
    let hi_q = r.out_hi.round_ties_even();
    let mut out = roi.clone();
    for p in out.data_mut() {
        let t = ((*p as f64 - r.in_lo) / span_in).clamp(0.0, 1.0);
        let v = (t * span_out + r.out_lo).round_ties_even().clamp(lo_q, hi_q);
        *p = v as u8;
    }
    Ok(out)
}

fn percentile_u8(sorted: &[u8], pct: f64) -> u8 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn center_prior_frame(f: &Frame, sigma_frac: (f64, f64)) -> Frame {
    let sigma_y = sigma_frac.0 * f.height() as f64;
    let sigma_x = sigma_frac.1 * f.width() as f64;
    let mask = centered_gaussian(f.height(), f.width(), sigma_y, sigma_x);
    let mut out = f.clone();
    for y in 0..f.height() {
        for x in 0..f.width() {
            let v = (f.get(y, x) as f64 * mask.get(y, x))
                .round_ties_even()
                .clamp(0.0, 255.0);
            out.set(y, x, v as u8);
        }
    }
    out
}

/// Pick the key object for one frame and return the augmented frame plus an
/// audit report.
///
/// With a non-empty ranking and at least one proposal, the top-scored box is
/// selected and its region replaced by a contrast-stretched copy; every pixel
/// outside the box is bit-identical to the input. Otherwise the whole frame
/// is attenuated by a centered Gaussian prior.
pub fn select_and_augment(
    f: &Frame,
    s: &SaliencyMap,
    proposals: &[Proposal],
    ranking: &GlobalRanking,
    params: &SelectParams,
) -> Result<(Frame, RoiReport)> {
    if f.height() != s.height() || f.width() != s.width() {
        return Err(Error::dim(format!(
            "frame {}x{} vs saliency {}x{}",
            f.height(),
            f.width(),
            s.height(),
            s.width()
        )));
    }
    for p in proposals {
        p.bbox.validate_in(f.width(), f.height())?;
    }

    let mut flags = Vec::new();
    let center_prior = if ranking.is_empty() {
        true
    } else if proposals.is_empty() {
        flags.push("no_proposals".to_string());
        true
    } else {
        false
    };
    if center_prior {
        let out = center_prior_frame(f, params.center_sigma_frac);
        return Ok((
            out,
            RoiReport {
                frame: 0,
                branch: Branch::CenterPrior,
                winner_index: None,
                class: None,
                bbox: None,
                score: None,
                flags,
            },
        ));
    }

    let scored = score_proposals(proposals, s, ranking, params.tau, params.overlap);
    let winner = scored[0];
    if winner.zero_avg_guard {
        flags.push("zero_avg_guard".to_string());
    }
    let chosen = &proposals[winner.index];
    let roi = chosen.bbox;

    let patch = f.crop(&roi)?;
    let ranges = match &params.enhance {
        EnhanceMode::Fixed(r) => Some(*r),
        EnhanceMode::Percentile {
            lo_pct,
            hi_pct,
            out_lo,
            out_hi,
        } => {
            let mut sorted = patch.data().to_vec();
            sorted.sort_unstable();
            let mut in_lo = percentile_u8(&sorted, *lo_pct) as f64;
            let mut in_hi = percentile_u8(&sorted, *hi_pct) as f64;
            if in_hi <= in_lo {
                in_lo = sorted[0] as f64;
                in_hi = sorted[sorted.len() - 1] as f64;
                flags.push("range_widened".to_string());
            }
            if in_hi <= in_lo {
                // flat region: nothing to stretch
                flags.push("flat_roi".to_string());
                None
            } else {
                Some(EnhanceRanges::new(in_lo, in_hi, *out_lo, *out_hi)?)
            }
        }
    };

    let mut out = f.clone();
    if let Some(r) = ranges {
        let enhanced = stretch_contrast(&patch, &r)?;
        out.paste(&roi, &enhanced)?;
    }
    Ok((
        out,
        RoiReport {
            frame: 0,
            branch: Branch::KeyObject,
            winner_index: Some(winner.index),
            class: Some(chosen.class_id),
            bbox: Some([roi.x1, roi.y1, roi.x2, roi.y2]),
            score: Some(winner.score),
            flags,
        },
    ))
}
