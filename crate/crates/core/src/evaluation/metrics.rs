//! R@n,IoU=m and the report CSV.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::evaluation::candidates::{temporal_iou, Candidate};

/// Scored candidates of one query and its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryCandidates {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
    pub ground_truth: (usize, usize),
}

/// Descending score, then smaller `i`, then smaller `j`.
pub fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.i.cmp(&b.i))
        .then(a.j.cmp(&b.j))
}

/// The best `n` candidates in rank order.
pub fn top_n(candidates: &[Candidate], n: usize) -> Vec<Candidate> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(rank_order);
    sorted.truncate(n);
    sorted
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryHit {
    pub query_id: String,
    pub n: usize,
    pub m: f64,
    pub hit: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recall {
    pub n: usize,
    pub m: f64,
    /// Percentage in `[0, 100]`.
    pub recall: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CandidateStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub queries: usize,
    /// One entry per `(n, m)` in grid order; empty without queries.
    pub recalls: Vec<Recall>,
    /// Query-major, then `(n, m)` in grid order.
    pub hits: Vec<QueryHit>,
    pub candidates: CandidateStats,
}

impl MetricsReport {
    pub fn recall(&self, n: usize, m: f64) -> Option<f64> {
        self.recalls.iter().find(|r| r.n == n && r.m == m).map(|r| r.recall)
    }
}

/// A query counts at `(n, m)` when one of its top `n` candidates has IoU
/// strictly above `m` with the ground truth.
pub fn recall_at_n_iou(queries: &[QueryCandidates], ns: &[usize], ms: &[f64]) -> MetricsReport {
    let mut report = MetricsReport {
        queries: queries.len(),
        ..Default::default()
    };
    if queries.is_empty() {
        return report;
    }
    let max_n = ns.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; ns.len() * ms.len()];
    for q in queries {
        // Best IoU among the top k, for every k up to max_n.
        let ranked = top_n(&q.candidates, max_n);
        let mut best = Vec::with_capacity(ranked.len());
        let mut running = f64::NEG_INFINITY;
        for c in &ranked {
            running = running.max(temporal_iou((c.i, c.j), q.ground_truth));
            best.push(running);
        }
        for (a, &n) in ns.iter().enumerate() {
            let reach = match n.min(best.len()) {
                0 => None,
                k => Some(best[k - 1]),
            };
            for (b, &m) in ms.iter().enumerate() {
                let hit = reach.is_some_and(|iou| iou > m);
                counts[a * ms.len() + b] += usize::from(hit);
                report.hits.push(QueryHit {
                    query_id: q.query_id.clone(),
                    n,
                    m,
                    hit,
                });
            }
        }
    }
    for (a, &n) in ns.iter().enumerate() {
        for (b, &m) in ms.iter().enumerate() {
            report.recalls.push(Recall {
                n,
                m,
                recall: 100.0 * counts[a * ms.len() + b] as f64 / queries.len() as f64,
            });
        }
    }
    let sizes: Vec<usize> = queries.iter().map(|q| q.candidates.len()).collect();
    report.candidates = CandidateStats {
        min: sizes.iter().copied().min().unwrap_or(0),
        max: sizes.iter().copied().max().unwrap_or(0),
        mean: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
    };
    report
}

/// `query_id,n,m,hit` rows, a blank line, then the aggregate block.
pub fn report_csv(report: &MetricsReport) -> String {
    let mut out = String::from("query_id,n,m,hit\n");
    for h in &report.hits {
        writeln!(out, "{},{},{},{}", h.query_id, h.n, h.m, u8::from(h.hit)).expect("writing to a String");
    }
    out.push('\n');
    out.push_str("n,m,recall\n");
    for r in &report.recalls {
        writeln!(out, "{},{},{:.4}", r.n, r.m, r.recall).expect("writing to a String");
    }
    let c = report.candidates;
    writeln!(
        out,
        "\nqueries,candidates_min,candidates_max,candidates_mean\n{},{},{},{:.2}",
        report.queries, c.min, c.max, c.mean
    )
    .expect("writing to a String");
    out
}
