//! Moment candidates and their confidence scores.
//!
//! Frames are 0-based and intervals inclusive: `[i, j]` spans `j − i + 1`
//! frames.

/// Moment `[i, j]` with confidence `s_i · e_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

/// Lengths up to this are enumerated at every start.
pub const DENSE_LENGTH: usize = 8;
/// Growth factor of the sparse lengths beyond [`DENSE_LENGTH`].
pub const LENGTH_RATIO: f64 = 1.5;

/// Intersection over union of two inclusive frame intervals.
pub fn temporal_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    debug_assert!(a.0 <= a.1 && b.0 <= b.1, "reversed interval");
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    let inter = if hi >= lo { hi - lo + 1 } else { 0 };
    let union = (a.1 - a.0 + 1) + (b.1 - b.0 + 1) - inter;
    inter as f64 / union as f64
}

fn scored(s: &[f64], e: &[f64], i: usize, j: usize) -> Candidate {
    Candidate { i, j, score: s[i] * e[j] }
}

/// All `L(L+1)/2` intervals.
pub fn score_candidates_full(s: &[f64], e: &[f64]) -> Vec<Candidate> {
    assert_eq!(s.len(), e.len(), "start and end sequences differ in length");
    let l = s.len();
    let mut out = Vec::with_capacity(l * (l + 1) / 2);
    for i in 0..l {
        for j in i..l {
            out.push(scored(s, e, i, j));
        }
    }
    out
}

/// `(length, start stride)` groups of the sparse scheme for a video of
/// `len` frames: every length up to 8 at stride 1, then lengths
/// `⌈8·1.5^k⌉` at stride `max(1, ⌊ℓ/8⌋)`.
pub fn sparse_schedule(len: usize) -> Vec<(usize, usize)> {
    let mut groups: Vec<(usize, usize)> = (1..=DENSE_LENGTH.min(len)).map(|l| (l, 1)).collect();
    for k in 1.. {
        let l = (DENSE_LENGTH as f64 * LENGTH_RATIO.powi(k)).ceil() as usize;
        if l > len {
            break;
        }
        if groups.last().is_some_and(|&(prev, _)| prev == l) {
            continue;
        }
        groups.push((l, (l / DENSE_LENGTH).max(1)));
    }
    groups
}

/// The sparse `O(L log L)` subset of [`score_candidates_full`], in
/// (length, start) order and without duplicates.
pub fn score_candidates_sparse(s: &[f64], e: &[f64]) -> Vec<Candidate> {
    assert_eq!(s.len(), e.len(), "start and end sequences differ in length");
    let len = s.len();
    let mut out = Vec::new();
    for (l, stride) in sparse_schedule(len) {
        for i in (0..=len - l).step_by(stride) {
            out.push(scored(s, e, i, i + l - 1));
        }
    }
    out
}
