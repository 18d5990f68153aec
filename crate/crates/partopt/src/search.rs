//! Candidate enumeration, parallel evaluation and report rendering.
//!
//! A search takes a model, an optional availability mask, a set of candidate
//! policies and an optional weight valuation, evaluates every candidate
//! through the prune/decompose/score pipeline and reports the minimizer.
//! Evaluation order, tie-breaking and rendering are all deterministic: the
//! same input produces byte-identical reports regardless of thread count.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use num::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::ser::Serializer;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{balancing, score, variation, MetricsError};
use crate::model::{rational_str, AvailabilityMask, ParamId, Pmdp, Policy, Rational, Valuation};
use crate::prune::{prune_pipeline, PruneError};
use crate::scc::{decompose, size_histogram, SizeHistogram};

/// Ambient demand band a situation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EnvLevel {
    Low,
    Medium,
    High,
}

impl EnvLevel {
    pub const ALL: [EnvLevel; 3] = [EnvLevel::Low, EnvLevel::Medium, EnvLevel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvLevel::Low => "low",
            EnvLevel::Medium => "medium",
            EnvLevel::High => "high",
        }
    }
}

impl fmt::Display for EnvLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stored charge band a situation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BatteryLevel {
    Low,
    Regular,
    High,
}

impl BatteryLevel {
    pub const ALL: [BatteryLevel; 3] =
        [BatteryLevel::Low, BatteryLevel::Regular, BatteryLevel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            BatteryLevel::Low => "low",
            BatteryLevel::Regular => "regular",
            BatteryLevel::High => "high",
        }
    }
}

impl fmt::Display for BatteryLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One of the nine situation categories a search is pinned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Category {
    pub env: EnvLevel,
    pub battery: BatteryLevel,
}

impl Category {
    /// All nine categories, environment level varying slowest.
    pub fn all() -> Vec<Category> {
        let mut out = Vec::with_capacity(9);
        for env in EnvLevel::ALL {
            for battery in BatteryLevel::ALL {
                out.push(Category { env, battery });
            }
        }
        out
    }

    /// Stable identifier, e.g. `medium_regular`.
    pub fn id(&self) -> String {
        format!("{}_{}", self.env, self.battery)
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::all().into_iter().find(|c| c.id() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("grid step {0} does not divide 1 into whole steps")]
    BadStep(String),
    #[error("no parameter group with index {0}")]
    UnknownGroup(usize),
    #[error("grid search needs at least one parameter group")]
    NoGroups,
    #[error("no candidates to evaluate")]
    NoCandidates,
    #[error("every candidate failed; first failure: {0}")]
    NoViableCandidate(String),
    #[error("thread pool: {0}")]
    Threads(String),
}

/// Why a single candidate could not be scored.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Where a candidate set came from, echoed in diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CandidateSource {
    Explicit,
    Grid { step: Rational },
}

impl fmt::Display for CandidateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateSource::Explicit => f.write_str("explicit"),
            CandidateSource::Grid { step } => write!(f, "grid step {}", rational_str(step)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub source: CandidateSource,
    pub policies: Vec<Policy>,
}

impl CandidateSet {
    pub fn explicit(policies: Vec<Policy>) -> CandidateSet {
        CandidateSet {
            source: CandidateSource::Explicit,
            policies,
        }
    }

    pub fn grid(m: &Pmdp, spec: &GridSpec) -> Result<CandidateSet, SearchError> {
        Ok(CandidateSet {
            source: CandidateSource::Grid {
                step: spec.step.clone(),
            },
            policies: enumerate_candidates(m, spec)?,
        })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }
}

/// A grid over the model's parameter groups: every assignment gives each
/// group member a multiple of `step` and each group sums exactly to 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub step: Rational,
    /// Indices into the model's group list; empty means every group.
    pub groups: Vec<usize>,
}

impl GridSpec {
    pub fn new(step: Rational) -> GridSpec {
        GridSpec {
            step,
            groups: Vec::new(),
        }
    }

    pub fn over_groups(step: Rational, groups: Vec<usize>) -> GridSpec {
        GridSpec { step, groups }
    }
}

fn steps_per_unit(step: &Rational) -> Result<usize, SearchError> {
    let bad = || SearchError::BadStep(rational_str(step));
    if step <= &Rational::zero() || step > &Rational::one() {
        return Err(bad());
    }
    let inv = Rational::one() / step;
    if !inv.is_integer() {
        return Err(bad());
    }
    inv.to_integer().to_usize().ok_or_else(bad)
}

/// All ways to write `total` as an ordered sum of `k` non-negative counts,
/// first position ascending.
fn compositions(k: usize, total: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for rest in compositions(k - 1, total - first) {
            let mut v = Vec::with_capacity(k);
            v.push(first);
            v.extend(rest);
            out.push(v);
        }
    }
    out
}

/// Enumerates grid candidates as policies `c0`, `c1`, ... in cross-product
/// order, the first selected group varying slowest.
pub fn enumerate_candidates(m: &Pmdp, spec: &GridSpec) -> Result<Vec<Policy>, SearchError> {
    let n = steps_per_unit(&spec.step)?;
    let indices: Vec<usize> = if spec.groups.is_empty() {
        (0..m.groups().len()).collect()
    } else {
        spec.groups.clone()
    };
    if indices.is_empty() {
        return Err(SearchError::NoGroups);
    }
    let mut per_group = Vec::with_capacity(indices.len());
    for &gi in &indices {
        let group = m.groups().get(gi).ok_or(SearchError::UnknownGroup(gi))?;
        let points: Vec<Vec<Rational>> = compositions(group.members().len(), n)
            .into_iter()
            .map(|counts| {
                counts
                    .into_iter()
                    .map(|c| &spec.step * Rational::from(num::BigInt::from(c)))
                    .collect()
            })
            .collect();
        per_group.push((group, points));
    }

    let mut strides = vec![1usize; per_group.len()];
    for j in (0..per_group.len().saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * per_group[j + 1].1.len();
    }
    let total: usize = per_group.iter().map(|(_, p)| p.len()).product();

    let mut out = Vec::with_capacity(total);
    for i in 0..total {
        let mut valuation = Valuation::new();
        for (j, (group, points)) in per_group.iter().enumerate() {
            let d = (i / strides[j]) % points.len();
            for (member, value) in group.members().iter().zip(&points[d]) {
                valuation
                    .insert(member.clone(), value.clone())
                    .expect("grid values lie in [0, 1]");
            }
        }
        out.push(Policy {
            id: format!("c{i}"),
            valuation,
            mask: None,
        });
    }
    Ok(out)
}

/// Full scoring result for one candidate.
#[derive(Debug, Clone)]
pub struct EvaluationRow {
    pub policy: String,
    pub valuation: Valuation,
    pub components: usize,
    pub singletons: usize,
    pub histogram: SizeHistogram,
    pub balancing: f64,
    pub variation: f64,
    pub score: f64,
}

/// A candidate the pipeline rejected, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowFailure {
    pub policy: String,
    pub error: String,
}

/// Weight of every declared parameter: the candidate's own assignment where
/// present, then the ambient valuation, then 1.
fn theta_for(pol: &Policy, env: Option<&Valuation>, all: &BTreeSet<ParamId>) -> Valuation {
    let mut theta = pol.valuation.clone();
    if let Some(env) = env {
        theta.extend_missing(env);
    }
    for p in all {
        if !theta.contains(p) {
            theta
                .insert(p.clone(), Rational::one())
                .expect("1 lies in [0, 1]");
        }
    }
    theta
}

/// Runs one candidate through prune, decomposition and both metrics.
pub fn evaluate_candidate(
    m: &Pmdp,
    mask: Option<&AvailabilityMask>,
    pol: &Policy,
    env: Option<&Valuation>,
) -> Result<EvaluationRow, EvalError> {
    let (pruned, _trace) = prune_pipeline(m, mask, Some(pol))?;
    let cs = decompose(&pruned);
    let hist = size_histogram(&cs);
    let bal = balancing(&hist)?;
    let theta = theta_for(pol, env, m.param_set());
    let var = variation(&cs, &theta, m.param_set())?;
    Ok(EvaluationRow {
        policy: pol.id.clone(),
        valuation: pol.valuation.clone(),
        components: cs.len(),
        singletons: hist.singletons(),
        histogram: hist,
        balancing: bal,
        variation: var,
        score: score(bal, var),
    })
}

/// Inputs shared by every candidate of one search run.
#[derive(Debug, Clone, Copy)]
pub struct SearchRequest<'a> {
    pub model: &'a Pmdp,
    /// Text whose digest identifies the model in the report.
    pub model_text: &'a str,
    pub mask: Option<&'a AvailabilityMask>,
    pub env: Option<&'a Valuation>,
    pub category: Option<&'a str>,
    /// 0 uses the global thread pool, 1 runs sequentially, anything else
    /// runs on a dedicated pool of that size.
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub fingerprint: String,
    pub category: Option<String>,
    /// Index of the winning row in `rows`.
    pub best: usize,
    pub rows: Vec<EvaluationRow>,
    pub source: String,
    pub candidates: usize,
    pub failures: Vec<RowFailure>,
}

impl Report {
    pub fn best_row(&self) -> &EvaluationRow {
        &self.rows[self.best]
    }
}

/// SHA-256 of the model text, as lowercase hex.
pub fn model_fingerprint(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

fn candidate_order_min(rows: &[EvaluationRow]) -> usize {
    let mut best = 0usize;
    for (i, row) in rows.iter().enumerate().skip(1) {
        let cur = &rows[best];
        let better = match row.score.total_cmp(&cur.score) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => (row.singletons, row.components) < (cur.singletons, cur.components),
        };
        if better {
            best = i;
        }
    }
    best
}

/// Evaluates every candidate and reports the minimizer. Rows keep candidate
/// order; ties fall to fewer singleton components, then fewer components,
/// then the earlier candidate.
pub fn best_policy(
    req: &SearchRequest<'_>,
    candidates: &CandidateSet,
) -> Result<Report, SearchError> {
    if candidates.is_empty() {
        return Err(SearchError::NoCandidates);
    }
    let evaluate = |pol: &Policy| -> Result<EvaluationRow, RowFailure> {
        evaluate_candidate(req.model, req.mask, pol, req.env).map_err(|e| RowFailure {
            policy: pol.id.clone(),
            error: e.to_string(),
        })
    };
    let results: Vec<Result<EvaluationRow, RowFailure>> = match req.threads {
        1 => candidates.policies.iter().map(evaluate).collect(),
        0 => candidates.policies.par_iter().map(evaluate).collect(),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SearchError::Threads(e.to_string()))?
            .install(|| candidates.policies.par_iter().map(evaluate).collect()),
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    if rows.is_empty() {
        return Err(SearchError::NoViableCandidate(failures[0].error.clone()));
    }
    let best = candidate_order_min(&rows);
    Ok(Report {
        fingerprint: model_fingerprint(req.model_text),
        category: req.category.map(str::to_string),
        best,
        rows,
        source: candidates.source.to_string(),
        candidates: candidates.len(),
        failures,
    })
}

fn metric_str(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".to_string()
    }
}

fn histogram_str(h: &SizeHistogram) -> String {
    h.counts
        .iter()
        .map(|(size, count)| format!("{size}:{count}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Tab-separated report: one column per parameter group (member values
/// comma-joined, `-` where the candidate leaves a member free), then
/// component count, singleton count, the full size histogram and the three
/// metric values.
pub fn render_tsv(report: &Report, m: &Pmdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# model: {}", report.fingerprint);
    if let Some(c) = &report.category {
        let _ = writeln!(out, "# category: {c}");
    }
    let _ = writeln!(
        out,
        "# candidates: {} ({}), evaluated: {}",
        report.candidates,
        report.source,
        report.rows.len()
    );
    let _ = writeln!(out, "# best: {}", report.best_row().policy);

    let mut cols = vec!["policy".to_string()];
    for g in m.groups() {
        let names: Vec<&str> = g.members().iter().map(|p| p.as_str()).collect();
        cols.push(names.join(","));
    }
    for fixed in ["#C", "#SS", "S:#C", "Bal", "Var", "score"] {
        cols.push(fixed.to_string());
    }
    let _ = writeln!(out, "{}", cols.join("\t"));

    for row in &report.rows {
        let mut cells = vec![row.policy.clone()];
        for g in m.groups() {
            let vals: Vec<String> = g
                .members()
                .iter()
                .map(|p| {
                    row.valuation
                        .get(p)
                        .map(rational_str)
                        .unwrap_or_else(|| "-".to_string())
                })
                .collect();
            cells.push(vals.join(","));
        }
        cells.push(row.components.to_string());
        cells.push(row.singletons.to_string());
        cells.push(histogram_str(&row.histogram));
        cells.push(metric_str(row.balancing));
        cells.push(metric_str(row.variation));
        cells.push(metric_str(row.score));
        let _ = writeln!(out, "{}", cells.join("\t"));
    }
    out
}

fn ser_metric<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Serialize)]
struct RowView<'a> {
    policy: &'a str,
    assignments: std::collections::BTreeMap<&'a str, String>,
    components: usize,
    singletons: usize,
    histogram: &'a std::collections::BTreeMap<usize, usize>,
    #[serde(serialize_with = "ser_metric")]
    balancing: f64,
    #[serde(serialize_with = "ser_metric")]
    variation: f64,
    #[serde(serialize_with = "ser_metric")]
    score: f64,
}

#[derive(Serialize)]
struct DiagnosticsView<'a> {
    source: &'a str,
    candidates: usize,
    evaluated: usize,
    failures: &'a [RowFailure],
}

#[derive(Serialize)]
struct ReportView<'a> {
    fingerprint: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<&'a str>,
    best: RowView<'a>,
    rows: Vec<RowView<'a>>,
    diagnostics: DiagnosticsView<'a>,
}

fn row_view(row: &EvaluationRow) -> RowView<'_> {
    RowView {
        policy: &row.policy,
        assignments: row
            .valuation
            .iter()
            .map(|(p, v)| (p.as_str(), rational_str(v)))
            .collect(),
        components: row.components,
        singletons: row.singletons,
        histogram: &row.histogram.counts,
        balancing: row.balancing,
        variation: row.variation,
        score: row.score,
    }
}

/// JSON report. Finite metric values are numbers; an unbounded balancing
/// score is the string `"inf"`.
pub fn render_json(report: &Report) -> String {
    let view = ReportView {
        fingerprint: &report.fingerprint,
        category: report.category.as_deref(),
        best: row_view(report.best_row()),
        rows: report.rows.iter().map(row_view).collect(),
        diagnostics: DiagnosticsView {
            source: &report.source,
            candidates: report.candidates,
            evaluated: report.rows.len(),
            failures: &report.failures,
        },
    };
    let mut text = serde_json::to_string_pretty(&view).expect("report serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, MaskRule, ParamId, PmdpBuilder};
    use num::BigInt;

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    /// Three states: s0 branches by `p`/`q`, s1 returns to s0, s2 absorbs.
    fn branching_model() -> Pmdp {
        let mut b = PmdpBuilder::new("branching");
        let p = b.param("p").unwrap();
        let q = b.param("q").unwrap();
        b.group(vec![p.clone(), q.clone()]).unwrap();
        b.action("a").unwrap();
        let mut labels = std::collections::BTreeMap::new();
        labels.insert("role".to_string(), "entry".to_string());
        b.state_with("s0", Rational::zero(), labels).unwrap();
        b.state("s1").unwrap();
        b.state("s2").unwrap();
        b.initial("s0");
        b.transition(
            "s0",
            "a",
            vec![
                (LinExpr::param(p), "s1".to_string()),
                (LinExpr::param(q), "s2".to_string()),
            ],
        );
        b.transition("s1", "a", vec![(LinExpr::one(), "s0".to_string())]);
        b.transition("s2", "a", vec![(LinExpr::one(), "s2".to_string())]);
        b.build().unwrap()
    }

    fn policy(id: &str, p: Rational, q: Rational) -> Policy {
        let mut v = Valuation::new();
        v.insert(ParamId::new("p").unwrap(), p).unwrap();
        v.insert(ParamId::new("q").unwrap(), q).unwrap();
        Policy {
            id: id.to_string(),
            valuation: v,
            mask: None,
        }
    }

    fn request<'a>(m: &'a Pmdp, text: &'a str, threads: usize) -> SearchRequest<'a> {
        SearchRequest {
            model: m,
            model_text: text,
            mask: None,
            env: None,
            category: None,
            threads,
        }
    }

    #[test]
    fn half_grid_on_one_pair_group() {
        let m = branching_model();
        let set = CandidateSet::grid(&m, &GridSpec::new(rat(1, 2))).unwrap();
        assert_eq!(set.len(), 3);
        let first = &set.policies[0].valuation;
        assert_eq!(first.get(&ParamId::new("p").unwrap()), Some(&rat(0, 1)));
        assert_eq!(first.get(&ParamId::new("q").unwrap()), Some(&rat(1, 1)));
        let last = &set.policies[2].valuation;
        assert_eq!(last.get(&ParamId::new("p").unwrap()), Some(&rat(1, 1)));
    }

    #[test]
    fn tenth_grid_over_three_members_has_66_points() {
        let mut b = PmdpBuilder::new("g3");
        let x = b.param("x").unwrap();
        let y = b.param("y").unwrap();
        let z = b.param("z").unwrap();
        b.group(vec![x.clone(), y.clone(), z.clone()]).unwrap();
        b.action("a").unwrap();
        b.state("s0").unwrap();
        b.state("s1").unwrap();
        b.state("s2").unwrap();
        b.initial("s0");
        b.transition(
            "s0",
            "a",
            vec![
                (LinExpr::param(x), "s0".to_string()),
                (LinExpr::param(y), "s1".to_string()),
                (LinExpr::param(z), "s2".to_string()),
            ],
        );
        b.transition("s1", "a", vec![(LinExpr::one(), "s0".to_string())]);
        b.transition("s2", "a", vec![(LinExpr::one(), "s0".to_string())]);
        let m = b.build().unwrap();
        let pols = enumerate_candidates(&m, &GridSpec::new(rat(1, 10))).unwrap();
        assert_eq!(pols.len(), 66);
        for pol in &pols {
            let sum: Rational = pol.valuation.iter().map(|(_, v)| v.clone()).sum();
            assert!(sum.is_one());
        }
        // first member ascends slowest within a group
        assert_eq!(
            pols[0].valuation.get(&ParamId::new("x").unwrap()),
            Some(&rat(0, 1))
        );
        assert_eq!(
            pols[65].valuation.get(&ParamId::new("x").unwrap()),
            Some(&rat(1, 1))
        );
    }

    #[test]
    fn rejected_steps() {
        let m = branching_model();
        for step in [rat(3, 10), rat(0, 1), rat(2, 1), rat(-1, 2)] {
            assert!(matches!(
                enumerate_candidates(&m, &GridSpec::new(step)),
                Err(SearchError::BadStep(_))
            ));
        }
    }

    #[test]
    fn cross_product_puts_first_group_slowest() {
        let mut b = PmdpBuilder::new("g2x2");
        let a1 = b.param("a1").unwrap();
        let a2 = b.param("a2").unwrap();
        let b1 = b.param("b1").unwrap();
        let b2 = b.param("b2").unwrap();
        b.group(vec![a1.clone(), a2.clone()]).unwrap();
        b.group(vec![b1.clone(), b2.clone()]).unwrap();
        b.action("act").unwrap();
        b.state("s0").unwrap();
        b.state("s1").unwrap();
        b.initial("s0");
        b.transition(
            "s0",
            "act",
            vec![
                (LinExpr::param(a1), "s0".to_string()),
                (LinExpr::param(a2), "s1".to_string()),
            ],
        );
        b.transition(
            "s1",
            "act",
            vec![
                (LinExpr::param(b1), "s0".to_string()),
                (LinExpr::param(b2), "s1".to_string()),
            ],
        );
        let m = b.build().unwrap();
        let pols = enumerate_candidates(&m, &GridSpec::new(rat(1, 2))).unwrap();
        assert_eq!(pols.len(), 9);
        let a1 = ParamId::new("a1").unwrap();
        let b1 = ParamId::new("b1").unwrap();
        // b1 cycles fastest; a1 stays put for three consecutive candidates
        assert_eq!(pols[0].valuation.get(&a1), pols[2].valuation.get(&a1));
        assert_ne!(pols[0].valuation.get(&b1), pols[1].valuation.get(&b1));
        assert_ne!(pols[2].valuation.get(&a1), pols[3].valuation.get(&a1));
    }

    #[test]
    fn grid_group_subset_and_bad_index() {
        let m = branching_model();
        let pols = enumerate_candidates(&m, &GridSpec::over_groups(rat(1, 2), vec![0])).unwrap();
        assert_eq!(pols.len(), 3);
        assert!(matches!(
            enumerate_candidates(&m, &GridSpec::over_groups(rat(1, 2), vec![1])),
            Err(SearchError::UnknownGroup(1))
        ));
    }

    #[test]
    fn minimizer_wins_and_rows_keep_candidate_order() {
        let m = branching_model();
        let text = "branching";
        let set = CandidateSet::grid(&m, &GridSpec::new(rat(1, 2))).unwrap();
        let report = best_policy(&request(&m, text, 1), &set).unwrap();
        assert_eq!(report.rows.len(), 3);
        // c0 keeps only the absorbing half: two singletons, unbounded score
        assert_eq!(report.rows[0].policy, "c0");
        assert!(report.rows[0].score.is_infinite());
        // c2 collapses everything into one two-state cycle
        assert_eq!(report.best_row().policy, "c2");
        assert_eq!(report.best_row().components, 1);
        assert_eq!(report.rows[1].components, 2);
        assert!(report.rows[1].score > report.best_row().score);
        assert_eq!(report.candidates, 3);
        assert!(report.failures.is_empty());
    }

    #[test]
    fn reports_are_identical_across_thread_counts() {
        let m = branching_model();
        let text = "branching";
        let set = CandidateSet::grid(&m, &GridSpec::new(rat(1, 4))).unwrap();
        let sequential = best_policy(&request(&m, text, 1), &set).unwrap();
        let pooled = best_policy(&request(&m, text, 4), &set).unwrap();
        assert_eq!(render_tsv(&sequential, &m), render_tsv(&pooled, &m));
        assert_eq!(render_json(&sequential), render_json(&pooled));
    }

    #[test]
    fn embedded_mask_failure_lands_in_diagnostics() {
        let m = branching_model();
        let mut bad = policy("bad", rat(1, 1), rat(0, 1));
        bad.mask = Some(AvailabilityMask {
            rules: vec![MaskRule {
                predicate: vec![("role".to_string(), "entry".to_string())],
                allowed: std::collections::BTreeSet::new(),
            }],
        });
        let good = policy("good", rat(1, 1), rat(0, 1));
        let set = CandidateSet::explicit(vec![bad, good]);
        let report = best_policy(&request(&m, "t", 1), &set).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].policy, "bad");
        assert_eq!(report.best_row().policy, "good");
    }

    #[test]
    fn all_failures_is_an_error() {
        let m = branching_model();
        let mut bad = policy("bad", rat(1, 1), rat(0, 1));
        bad.mask = Some(AvailabilityMask {
            rules: vec![MaskRule {
                predicate: vec![("role".to_string(), "entry".to_string())],
                allowed: std::collections::BTreeSet::new(),
            }],
        });
        let set = CandidateSet::explicit(vec![bad]);
        assert!(matches!(
            best_policy(&request(&m, "t", 1), &set),
            Err(SearchError::NoViableCandidate(_))
        ));
        assert!(matches!(
            best_policy(&request(&m, "t", 1), &CandidateSet::explicit(Vec::new())),
            Err(SearchError::NoCandidates)
        ));
    }

    #[test]
    fn tsv_layout() {
        let m = branching_model();
        let set = CandidateSet::explicit(vec![policy("only", rat(1, 2), rat(1, 2))]);
        let report = best_policy(&request(&m, "text", 1), &set).unwrap();
        let tsv = render_tsv(&report, &m);
        let header = tsv
            .lines()
            .find(|l| !l.starts_with('#'))
            .expect("header line");
        assert_eq!(header, "policy\tp,q\t#C\t#SS\tS:#C\tBal\tVar\tscore");
        let row = tsv.lines().last().unwrap();
        let cells: Vec<&str> = row.split('\t').collect();
        assert_eq!(cells[0], "only");
        assert_eq!(cells[1], "1/2,1/2");
        assert_eq!(cells[2], "2");
        assert_eq!(cells[3], "1");
        assert_eq!(cells[4], "1:1 2:1");
        assert!(tsv.contains("# best: only"));
    }

    #[test]
    fn json_metric_rendering_inf_as_string() {
        let m = branching_model();
        // q = 1 leaves two singleton components, so balancing is unbounded
        let set = CandidateSet::explicit(vec![
            policy("sink", rat(0, 1), rat(1, 1)),
            policy("loop", rat(1, 1), rat(0, 1)),
        ]);
        let report = best_policy(&request(&m, "text", 1), &set).unwrap();
        let json = render_json(&report);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["rows"][0]["balancing"], serde_json::json!("inf"));
        assert_eq!(parsed["rows"][1]["balancing"], serde_json::json!(1.0));
        assert_eq!(parsed["best"]["policy"], serde_json::json!("loop"));
        assert_eq!(parsed["diagnostics"]["evaluated"], serde_json::json!(2));
        assert_eq!(
            parsed["rows"][0]["assignments"]["p"],
            serde_json::json!("0")
        );
    }

    #[test]
    fn fingerprint_is_sha256_hex() {
        let fp = model_fingerprint("pmdp x\n");
        assert_eq!(fp.len(), 64);
        assert!(fp.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(fp, model_fingerprint("pmdp x\n"));
        assert_ne!(fp, model_fingerprint("pmdp y\n"));
    }

    #[test]
    fn category_ids() {
        let all = Category::all();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0].id(), "low_low");
        assert_eq!(all[4].id(), "medium_regular");
        assert_eq!(all[8].id(), "high_high");
        assert_eq!(
            Category::parse("medium_high").map(|c| c.env),
            Some(EnvLevel::Medium)
        );
        assert!(Category::parse("sideways_low").is_none());
    }
}
