//! Exact polarization index over a labeled cohort.
//!
//! `poli = (S_max - S_w) / (S_max - S_min)`, where `S_w` sums the Euclidean
//! distances of all within-group pairs, `m` counts those pairs, and
//! `S_min`/`S_max` sum the `m` smallest/largest distances over every pair of
//! users regardless of group.
//!
//! The extremal sums are found without materializing the `n(n-1)/2`
//! distances. A first pass over all pairs accumulates `S_w` and a value
//! histogram; the bins holding the two boundary ranks are then refined until
//! they are small enough to collect, and a last pass sums everything strictly
//! below (above) the boundary window and collects the window itself. Memory is
//! bounded by the histogram plus the candidate cap, independent of `m`.
//!
//! All sums go through [`ExactSum`], so results are bit-identical for any
//! user order, group naming, or worker count.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::approx::ApproxTrace;
use crate::embedding::{l2, LabeledCohort, PointSet};
use crate::error::{Error, Result};
use crate::exact_sum::ExactSum;

/// Which cohort the `s_*` fields of a [`PoliResult`] were measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsScope {
    FullCohort,
    /// Approximate run: the statistics come from the final round's last sample.
    LastSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoliResult {
    pub s_w: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub m: u64,
    pub poli: f64,
    pub n_used: usize,
    pub group_sizes: BTreeMap<String, usize>,
    pub degenerate: bool,
    pub scope: StatsScope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ApproxTrace>,
}

/// Tuning knobs for the exact path. None of them change the result bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactOptions {
    /// Worker threads for the pair passes.
    pub jobs: usize,
    /// Largest boundary window collected into memory before refining further.
    pub candidate_cap: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            candidate_cap: 1 << 22,
        }
    }
}

/// Number of unordered within-group pairs, `sum |p|(|p|-1)/2`.
pub fn within_pair_count(group_sizes: impl IntoIterator<Item = usize>) -> u64 {
    group_sizes
        .into_iter()
        .map(|k| (k as u64) * (k as u64).saturating_sub(1) / 2)
        .sum()
}

fn total_pairs(n: usize) -> u64 {
    (n as u64) * (n as u64).saturating_sub(1) / 2
}

/// Sum of within-group pair distances and the number of such pairs.
pub fn within_group_sum(cohort: &LabeledCohort) -> (f64, u64) {
    let points = cohort.flatten();
    let sw = pair_pass(&points, 1, ExactSum::new, |acc, same, d| {
        if same {
            acc.add(d)
        }
    }, |a, b| a.merge(&b));
    let m = within_pair_count(cohort.groups().values().map(Vec::len));
    (sw.value(), m)
}

/// Sums of the `m` smallest and `m` largest pairwise distances in the cohort.
pub fn extremal_sums(cohort: &LabeledCohort, m: u64) -> Result<(f64, f64)> {
    extremal_sums_with(cohort, m, &ExactOptions::default())
}

pub fn extremal_sums_with(cohort: &LabeledCohort, m: u64, opts: &ExactOptions) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::UndefinedPoli("m = 0: no within-group pairs".into()));
    }
    let points = cohort.flatten();
    let n_pairs = total_pairs(points.len());
    if m > n_pairs {
        return Err(Error::Internal(format!(
            "m = {m} exceeds the {n_pairs} available pairs"
        )));
    }
    let out = Selection::run(&points, m, false, opts)?;
    Ok((out.s_min, out.s_max))
}

pub fn poli_exact(cohort: &LabeledCohort) -> Result<PoliResult> {
    poli_exact_with(cohort, &ExactOptions::default())
}

pub fn poli_exact_with(cohort: &LabeledCohort, opts: &ExactOptions) -> Result<PoliResult> {
    if cohort.contrastable_groups() < 2 {
        return Err(Error::UndefinedPoli(format!(
            "need at least 2 groups with 2 or more members, found {}",
            cohort.contrastable_groups()
        )));
    }
    let points = cohort.flatten();
    let m = within_pair_count(cohort.groups().values().map(Vec::len));
    let sel = Selection::run(&points, m, true, opts)?;
    let s_w = sel.s_w.expect("s_w requested");
    Ok(assemble(s_w, sel.s_min, sel.s_max, m, cohort))
}

/// poli from the three sums, with the `S_max == S_min` convention.
pub fn poli_from_sums(s_w: f64, s_min: f64, s_max: f64) -> (f64, bool) {
    let span = s_max - s_min;
    if span <= 0.0 {
        return (0.0, true);
    }
    (((s_max - s_w) / span).clamp(0.0, 1.0), false)
}

fn assemble(s_w: f64, s_min: f64, s_max: f64, m: u64, cohort: &LabeledCohort) -> PoliResult {
    let (poli, degenerate) = poli_from_sums(s_w, s_min, s_max);
    PoliResult {
        s_w,
        s_min,
        s_max,
        m,
        poli,
        n_used: cohort.n(),
        group_sizes: cohort.group_sizes(),
        degenerate,
        scope: StatsScope::FullCohort,
        trace: None,
    }
}

// ---------------------------------------------------------------------------
// pair enumeration
// ---------------------------------------------------------------------------

/// Splits rows into `blocks` contiguous ranges with roughly equal pair counts.
fn row_blocks(n: usize, blocks: usize) -> Vec<(usize, usize)> {
    let total = total_pairs(n);
    if blocks <= 1 || n < 2 {
        return vec![(0, n)];
    }
    let per = total.div_ceil(blocks as u64).max(1);
    let mut out = Vec::with_capacity(blocks);
    let mut start = 0;
    let mut acc = 0u64;
    for i in 0..n {
        acc += (n - 1 - i) as u64;
        if acc >= per {
            out.push((start, i + 1));
            start = i + 1;
            acc = 0;
        }
    }
    if start < n {
        out.push((start, n));
    }
    out
}

/// Visits every unordered pair `i < j` once with `(same_group, distance)`.
///
/// With `jobs > 1` the rows are split into blocks, each block runs with its
/// own state, and block states are merged in block order.
fn pair_pass<S, I, V, M>(points: &PointSet, jobs: usize, init: I, visit: V, merge: M) -> S
where
    S: Send,
    I: Fn() -> S + Sync,
    V: Fn(&mut S, bool, f64) + Sync,
    M: Fn(&mut S, S),
{
    let n = points.len();
    let run_block = |(start, end): (usize, usize)| {
        let mut state = init();
        for i in start..end {
            let row_i = points.row(i);
            let li = points.labels[i];
            for j in (i + 1)..n {
                let d = l2(row_i, points.row(j));
                visit(&mut state, li == points.labels[j], d);
            }
        }
        state
    };
    if jobs <= 1 {
        return run_block((0, n));
    }
    let blocks = row_blocks(n, jobs);
    let states: Vec<S> = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| {
            use rayon::prelude::*;
            blocks.par_iter().map(|&b| run_block(b)).collect()
        }),
        Err(_) => blocks.iter().map(|&b| run_block(b)).collect(),
    };
    let mut iter = states.into_iter();
    let mut acc = iter.next().unwrap_or_else(&init);
    for s in iter {
        merge(&mut acc, s);
    }
    acc
}

// ---------------------------------------------------------------------------
// extremal selection
// ---------------------------------------------------------------------------

const MAX_BINS: usize = 1 << 16;
const MAX_REFINEMENTS: usize = 64;

/// An inclusive value window `[lo, hi]` known to contain the target order
/// statistic, with `below` values strictly smaller than `lo`.
#[derive(Debug, Clone, Copy)]
struct Window {
    lo: f64,
    hi: f64,
    below: u64,
    count: u64,
}

impl Window {
    fn contains(&self, d: f64) -> bool {
        d >= self.lo && d <= self.hi
    }

    fn single_valued(&self) -> bool {
        self.lo == self.hi
    }
}

/// Monotone map from a value range onto `bins` buckets.
#[derive(Debug, Clone, Copy)]
struct BinMap {
    lo: f64,
    scale: f64,
    bins: usize,
}

impl BinMap {
    fn new(lo: f64, hi: f64, bins: usize) -> Self {
        let width = hi - lo;
        let scale = if width > 0.0 && width.is_finite() {
            bins as f64 / width
        } else {
            0.0
        };
        Self { lo, scale, bins }
    }

    #[inline]
    fn index(&self, d: f64) -> usize {
        // `as` saturates negatives to 0; the min clamps the top edge.
        (((d - self.lo) * self.scale) as usize).min(self.bins - 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Bin {
    count: u64,
    min: f64,
    max: f64,
}

const EMPTY_BIN: Bin = Bin {
    count: 0,
    min: f64::INFINITY,
    max: f64::NEG_INFINITY,
};

#[derive(Clone)]
struct Histogram {
    map: BinMap,
    bins: Vec<Bin>,
}

impl Histogram {
    fn new(map: BinMap) -> Self {
        Self {
            map,
            bins: vec![EMPTY_BIN; map.bins],
        }
    }

    #[inline]
    fn push(&mut self, d: f64) {
        let bin = &mut self.bins[self.map.index(d)];
        bin.count += 1;
        if d < bin.min {
            bin.min = d;
        }
        if d > bin.max {
            bin.max = d;
        }
    }

    fn merge(&mut self, other: Histogram) {
        for (a, b) in self.bins.iter_mut().zip(other.bins) {
            a.count += b.count;
            a.min = a.min.min(b.min);
            a.max = a.max.max(b.max);
        }
    }

    /// Narrows `window` to the bin holding the `rank`-th smallest value
    /// (1-based, counted over the whole multiset).
    fn locate(&self, window: &Window, rank: u64) -> Result<Window> {
        let mut below = window.below;
        for bin in self.bins.iter().filter(|b| b.count > 0) {
            if below + bin.count >= rank {
                return Ok(Window {
                    lo: bin.min,
                    hi: bin.max,
                    below,
                    count: bin.count,
                });
            }
            below += bin.count;
        }
        Err(Error::Internal(format!(
            "rank {rank} not reached in histogram (only {below} values)"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Smallest,
    Largest,
}

#[derive(Debug, Clone, Copy)]
struct Target {
    side: Side,
    /// 1-based rank of the boundary value among all pairs, ascending.
    rank: u64,
    window: Window,
}

impl Target {
    fn ready(&self, cap: usize) -> bool {
        self.window.single_valued() || self.window.count <= cap as u64
    }
}

/// Per-worker state for one pass.
#[derive(Clone)]
struct PassState {
    s_w: Option<ExactSum>,
    hists: [Option<(Window, Histogram)>; 2],
}

impl PassState {
    fn merge(&mut self, other: PassState) {
        if let (Some(a), Some(b)) = (self.s_w.as_mut(), other.s_w.as_ref()) {
            a.merge(b);
        }
        for (mine, theirs) in self.hists.iter_mut().zip(other.hists) {
            if let (Some((_, a)), Some((_, b))) = (mine.as_mut(), theirs) {
                a.merge(b);
            }
        }
    }
}

struct Selection {
    s_min: f64,
    s_max: f64,
    s_w: Option<f64>,
}

fn bin_count(window_count: u64) -> usize {
    ((window_count / 64) as usize).next_power_of_two().clamp(16, MAX_BINS)
}

/// Upper bound on any pairwise distance: twice the largest distance to the centroid.
fn distance_bound(points: &PointSet) -> Result<f64> {
    let n = points.len();
    let dim = points.dim;
    let mut centroid = vec![0.0f64; dim];
    for i in 0..n {
        for (c, x) in centroid.iter_mut().zip(points.row(i)) {
            *c += x;
        }
    }
    for c in &mut centroid {
        *c /= n as f64;
    }
    let radius = (0..n)
        .map(|i| l2(points.row(i), &centroid))
        .fold(0.0f64, f64::max);
    let bound = 2.0 * radius;
    if !(bound * bound).is_finite() {
        return Err(Error::Data(
            "coordinates too large: squared distances overflow".into(),
        ));
    }
    Ok(bound)
}

impl Selection {
    fn run(points: &PointSet, m: u64, want_sw: bool, opts: &ExactOptions) -> Result<Selection> {
        let n_pairs = total_pairs(points.len());
        let jobs = opts.jobs.max(1);
        let cap = opts.candidate_cap.max(1);
        let bound = distance_bound(points)?;

        let full = Window {
            lo: 0.0,
            hi: f64::INFINITY,
            below: 0,
            count: n_pairs,
        };
        let mut targets = [
            Target {
                side: Side::Smallest,
                rank: m,
                window: full,
            },
            Target {
                side: Side::Largest,
                rank: n_pairs - m + 1,
                window: full,
            },
        ];

        // First pass: within-group sum and a histogram over [0, bound].
        let first_map = BinMap::new(0.0, bound, bin_count(n_pairs));
        let template = PassState {
            s_w: want_sw.then(ExactSum::new),
            // both targets read the same first histogram
            hists: [Some((full, Histogram::new(first_map))), None],
        };
        let mut first = pair_pass(
            points,
            jobs,
            || template.clone(),
            |s, same, d| {
                if same {
                    if let Some(sw) = s.s_w.as_mut() {
                        sw.add(d);
                    }
                }
                if let Some((_, h)) = s.hists[0].as_mut() {
                    h.push(d);
                }
            },
            PassState::merge,
        );
        let s_w = first.s_w.take().map(|s| s.value());
        let (_, hist) = first.hists[0].take().expect("first histogram");
        for t in &mut targets {
            t.window = hist.locate(&t.window, t.rank)?;
        }
        drop(hist);

        // Refine until both boundary windows fit in memory.
        let mut refinements = 0;
        while targets.iter().any(|t| !t.ready(cap)) && refinements < MAX_REFINEMENTS {
            refinements += 1;
            let mut init = PassState {
                s_w: None,
                hists: [None, None],
            };
            for (k, t) in targets.iter().enumerate() {
                if !t.ready(cap) {
                    let map = BinMap::new(t.window.lo, t.window.hi, bin_count(t.window.count));
                    init.hists[k] = Some((t.window, Histogram::new(map)));
                }
            }
            let state = pair_pass(
                points,
                jobs,
                || init.clone(),
                |s, _, d| {
                    for slot in s.hists.iter_mut().flatten() {
                        if slot.0.contains(d) {
                            slot.1.push(d);
                        }
                    }
                },
                PassState::merge,
            );
            let mut progressed = false;
            for (k, slot) in state.hists.into_iter().enumerate() {
                if let Some((window, h)) = slot {
                    let next = h.locate(&window, targets[k].rank)?;
                    if next.count < window.count || next.single_valued() {
                        progressed = true;
                    }
                    targets[k].window = next;
                }
            }
            if !progressed {
                break;
            }
        }

        // Final pass: exact tails outside the windows, candidates inside.
        let [low, high] = targets;
        let collect = [!low.window.single_valued(), !high.window.single_valued()];
        let (low_tail, high_tail, low_cands, high_cands) = if low.window.hi < high.window.lo {
            banded_pass(points, jobs, &low.window, &high.window, collect)
        } else {
            overlapping_pass(points, jobs, &low.window, &high.window, collect)
        };
        let s_min = finish(&low, low_tail, low_cands, m, n_pairs)?;
        let s_max = finish(&high, high_tail, high_cands, m, n_pairs)?;
        Ok(Selection { s_min, s_max, s_w })
    }
}

type FinalSums = (ExactSum, ExactSum, Option<Vec<f64>>, Option<Vec<f64>>);

#[derive(Clone)]
struct BandState {
    sums: [ExactSum; 5],
    cands: [Vec<f64>; 2],
}

/// Final pass when the low window lies entirely below the high window.
///
/// Every distance falls in one of five bands (below, low window, between,
/// high window, above); the band index is computed without branches and
/// selects the accumulator, which keeps the unpredictable comparisons out of
/// the branch predictor.
fn banded_pass(points: &PointSet, jobs: usize, low: &Window, high: &Window, collect: [bool; 2]) -> FinalSums {
    let (t0, t1, t2, t3) = (low.lo, low.hi, high.lo, high.hi);
    let state = pair_pass(
        points,
        jobs,
        || BandState {
            sums: std::array::from_fn(|_| ExactSum::new()),
            cands: [Vec::new(), Vec::new()],
        },
        |s, _, d| {
            let band = (d >= t0) as usize + (d > t1) as usize + (d >= t2) as usize + (d > t3) as usize;
            s.sums[band].add(d);
            if band & 1 == 1 {
                let k = band >> 1;
                if collect[k] {
                    s.cands[k].push(d);
                }
            }
        },
        |a, b| {
            for (x, y) in a.sums.iter_mut().zip(b.sums.iter()) {
                x.merge(y);
            }
            for (x, mut y) in a.cands.iter_mut().zip(b.cands) {
                x.append(&mut y);
            }
        },
    );
    let BandState { sums, cands } = state;
    let [below, _, _, _, above] = sums;
    let [low_c, high_c] = cands;
    (
        below,
        above,
        collect[0].then_some(low_c),
        collect[1].then_some(high_c),
    )
}

fn overlapping_pass(points: &PointSet, jobs: usize, low: &Window, high: &Window, collect: [bool; 2]) -> FinalSums {
    let state = pair_pass(
        points,
        jobs,
        || BandState {
            sums: std::array::from_fn(|_| ExactSum::new()),
            cands: [Vec::new(), Vec::new()],
        },
        |s, _, d| {
            if d < low.lo {
                s.sums[0].add(d);
            } else if d <= low.hi && collect[0] {
                s.cands[0].push(d);
            }
            if d > high.hi {
                s.sums[4].add(d);
            } else if d >= high.lo && collect[1] {
                s.cands[1].push(d);
            }
        },
        |a, b| {
            for (x, y) in a.sums.iter_mut().zip(b.sums.iter()) {
                x.merge(y);
            }
            for (x, mut y) in a.cands.iter_mut().zip(b.cands) {
                x.append(&mut y);
            }
        },
    );
    let BandState { sums, cands } = state;
    let [below, _, _, _, above] = sums;
    let [low_c, high_c] = cands;
    (
        below,
        above,
        collect[0].then_some(low_c),
        collect[1].then_some(high_c),
    )
}

/// Completes an extremal sum from its exact tail and the boundary window.
fn finish(target: &Target, mut tail: ExactSum, cands: Option<Vec<f64>>, m: u64, n_pairs: u64) -> Result<f64> {
    let w = target.window;
    let outside = match target.side {
        Side::Smallest => w.below,
        Side::Largest => n_pairs - w.below - w.count,
    };
    if tail.terms() != outside {
        return Err(Error::Internal(format!(
            "tail count {} disagrees with histogram count {outside}",
            tail.terms()
        )));
    }
    let need = m - outside;
    if need > w.count {
        return Err(Error::Internal("boundary window smaller than required".into()));
    }
    match cands {
        None => tail.add_repeated(w.lo, need),
        Some(mut c) => {
            if c.len() as u64 != w.count {
                return Err(Error::Internal(format!(
                    "collected {} candidates, expected {}",
                    c.len(),
                    w.count
                )));
            }
            c.sort_unstable_by(f64::total_cmp);
            let need = need as usize;
            let picked = match target.side {
                Side::Smallest => &c[..need],
                Side::Largest => &c[c.len() - need..],
            };
            for &d in picked {
                tail.add(d);
            }
        }
    }
    Ok(tail.value())
}
