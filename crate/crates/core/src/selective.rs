//! Selective classification with a confidence threshold.
//!
//! The loss `1{err ∧ p̂ > θ} − α·1{p̂ > θ} + α` is piecewise constant with a
//! single jump per sample, so the leftmost root of its empirical risk is
//! always one of the confidences (or −∞). Everything here works on the sorted
//! scale: position `j ∈ 0..=N` stands for the threshold `P̂_(j)`, with `0`
//! meaning −∞ (predict on everything) and `N` meaning abstain everywhere.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibrationResult, Calibrator, ThetaHat};
use crate::data::{Label, LabelKind, Sample};
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::risk::{rng_from_seed, trial_seed};

/// Largest perturbation applied when breaking ties.
pub const TIE_JITTER: f64 = 1e-12;

/// Confidences and error bits for one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectiveInstance {
    p_hat: Vec<f64>,
    err: Vec<bool>,
    alpha: f64,
    tie_seed: Option<u64>,
}

fn check_inputs(p_hat: &[f64], err: &[bool], alpha: f64) -> Result<()> {
    if p_hat.len() != err.len() {
        return Err(Error::DimensionMismatch { expected: p_hat.len(), got: err.len() });
    }
    if p_hat.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("α must lie in (0, 1), got {alpha}")));
    }
    for (index, &p) in p_hat.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidSample { index, reason: format!("confidence {p} outside [0, 1]") });
        }
    }
    Ok(())
}

fn sorted_order(p_hat: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p_hat.len()).collect();
    order.sort_by(|&a, &b| p_hat[a].total_cmp(&p_hat[b]).then(a.cmp(&b)));
    order
}

fn first_tie(p_hat: &[f64], order: &[usize]) -> Option<usize> {
    order.windows(2).find(|w| p_hat[w[0]] == p_hat[w[1]]).map(|w| w[1])
}

impl SelectiveInstance {
    /// Requires pairwise distinct confidences.
    pub fn new(p_hat: Vec<f64>, err: Vec<bool>, alpha: f64) -> Result<Self> {
        check_inputs(&p_hat, &err, alpha)?;
        if let Some(index) = first_tie(&p_hat, &sorted_order(&p_hat)) {
            return Err(Error::InvalidSample { index, reason: "tied confidence".into() });
        }
        Ok(SelectiveInstance { p_hat, err, alpha, tie_seed: None })
    }

    /// Breaks ties by spreading each tied group over at most
    /// [`TIE_JITTER`], in a seeded random order. Groups sitting near 1 are
    /// spread downward so confidences stay in `[0, 1]`.
    pub fn with_tie_break(mut p_hat: Vec<f64>, err: Vec<bool>, alpha: f64, seed: u64) -> Result<Self> {
        check_inputs(&p_hat, &err, alpha)?;
        let order = sorted_order(&p_hat);
        if first_tie(&p_hat, &order).is_none() {
            return Ok(SelectiveInstance { p_hat, err, alpha, tie_seed: None });
        }
        let mut rng = rng_from_seed(seed);
        let mut start = 0;
        while start < order.len() {
            let v = p_hat[order[start]];
            let mut end = start + 1;
            while end < order.len() && p_hat[order[end]] == v {
                end += 1;
            }
            if end - start > 1 {
                let mut group: Vec<usize> = order[start..end].to_vec();
                group.shuffle(&mut rng);
                let step = TIE_JITTER / (end - start) as f64;
                let sign = if v + TIE_JITTER > 1.0 { -1.0 } else { 1.0 };
                for (k, &i) in group.iter().enumerate() {
                    p_hat[i] = v + sign * step * k as f64;
                }
            }
            start = end;
        }
        if let Some(index) = first_tie(&p_hat, &sorted_order(&p_hat)) {
            return Err(Error::InvalidSample { index, reason: "tie survives jitter".into() });
        }
        Ok(SelectiveInstance { p_hat, err, alpha, tie_seed: Some(seed) })
    }

    /// Reads `x[0]` as the confidence and the binary label as the error bit.
    pub fn from_samples(data: &[Sample], alpha: f64, tie_seed: Option<u64>) -> Result<Self> {
        let (p, e) = split_samples(data)?;
        match tie_seed {
            Some(seed) => Self::with_tie_break(p, e, alpha, seed),
            None => Self::new(p, e, alpha),
        }
    }

    pub fn to_samples(&self) -> Vec<Sample> {
        self.p_hat
            .iter()
            .zip(&self.err)
            .map(|(&p, &e)| Sample::new(vec![p], Label::Binary(e)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.p_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_hat.is_empty()
    }

    pub fn p_hat(&self) -> &[f64] {
        &self.p_hat
    }

    pub fn err(&self) -> &[bool] {
        &self.err
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Seed used for tie breaking, if any ties were broken.
    pub fn tie_seed(&self) -> Option<u64> {
        self.tie_seed
    }

    pub fn sorted_view(&self) -> SortedView {
        SortedView::new(&self.p_hat, &self.err, self.alpha)
    }
}

fn split_samples(data: &[Sample]) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut p = Vec::with_capacity(data.len());
    let mut e = Vec::with_capacity(data.len());
    for (index, z) in data.iter().enumerate() {
        let conf = *z.x.first().ok_or_else(|| Error::InvalidSample { index, reason: "missing confidence".into() })?;
        let bit = error_bit(&z.y).ok_or_else(|| Error::InvalidSample { index, reason: "error bit must be 0 or 1".into() })?;
        p.push(conf);
        e.push(bit);
    }
    Ok((p, e))
}

fn error_bit(y: &Label) -> Option<bool> {
    match y {
        Label::Binary(b) => Some(*b),
        Label::Real(v) if *v == 0.0 || *v == 1.0 => Some(*v == 1.0),
        _ => None,
    }
}

/// The instance in ascending-confidence order.
#[derive(Clone, Debug, PartialEq)]
pub struct SortedView {
    pub alpha: f64,
    /// `order[k]` is the original index of the sample with rank `k + 1`.
    pub order: Vec<usize>,
    /// `ranks[i] = V_i ∈ 1..=N`.
    pub ranks: Vec<usize>,
    /// Error bits by rank.
    pub e: Vec<bool>,
    /// `t[j] = −Σ_{i≤j} E_i + jα` for `j = 0..=N`.
    pub t: Vec<f64>,
    /// `prefix[j]` counts errors with rank ≤ j.
    pub prefix: Vec<usize>,
    /// `suffix[j]` counts errors with rank > j.
    pub suffix: Vec<usize>,
}

impl SortedView {
    fn new(p_hat: &[f64], err: &[bool], alpha: f64) -> Self {
        let order = sorted_order(p_hat);
        let n = order.len();
        let mut ranks = vec![0; n];
        for (k, &i) in order.iter().enumerate() {
            ranks[i] = k + 1;
        }
        let e: Vec<bool> = order.iter().map(|&i| err[i]).collect();
        let mut prefix = vec![0; n + 1];
        for j in 1..=n {
            prefix[j] = prefix[j - 1] + e[j - 1] as usize;
        }
        let total = prefix[n];
        let suffix = prefix.iter().map(|&c| total - c).collect();
        let t = (0..=n).map(|j| j as f64 * alpha - prefix[j] as f64).collect();
        SortedView { alpha, order, ranks, e, t, prefix, suffix }
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// Running error rate `Ē_j` for `j = 1..=N`.
    pub fn running_error_rate(&self, j: usize) -> f64 {
        self.prefix[j] as f64 / j as f64
    }

    /// Whether `T_j ∈ [α−2, α−1)`, evaluated on the integer error count.
    pub fn in_band(&self, j: usize) -> bool {
        let c = self.prefix[j] as f64;
        let base = (j as f64 - 1.0) * self.alpha;
        c > base + 1.0 && c <= base + 2.0
    }
}

/// The risk constraint on the `len` points above a threshold, `count` of
/// which are errors.
fn feasible(count: usize, len: usize, alpha: f64) -> bool {
    (count as f64) <= alpha * (len as f64)
}

/// Leftmost feasible position on the sorted scale.
pub fn threshold_index(view: &SortedView) -> usize {
    let n = view.len();
    (0..=n).find(|&j| feasible(view.suffix[j], n - j, view.alpha)).unwrap_or(n)
}

/// `max{j : 1 + T_j ≥ 0}`, evaluated on integer counts. Kept for comparison
/// with [`threshold_index`]; the two disagree on many instances.
pub fn max_formula_index(view: &SortedView) -> usize {
    (0..=view.len())
        .rev()
        .find(|&j| view.prefix[j] as f64 <= j as f64 * view.alpha + 1.0)
        .unwrap_or(0)
}

fn theta_at(inst: &SelectiveInstance, view: &SortedView, j: usize) -> ThetaHat {
    if j == 0 {
        ThetaHat::NegInf
    } else {
        ThetaHat::scalar(inst.p_hat[view.order[j - 1]])
    }
}

fn selective_result(theta: ThetaHat, index: usize, n: usize, err_above: usize, above: usize, alpha: f64) -> CalibrationResult {
    let nf = n as f64;
    let risk = (err_above as f64 - alpha * above as f64 + alpha * nf) / nf;
    CalibrationResult::new(theta, "selective-leftmost-root", alpha)
        .with_diagnostic("index", index as f64)
        .with_diagnostic("empirical_risk", risk)
        .with_diagnostic("pred_rate", above as f64 / nf)
        .with_diagnostic("n", nf)
}

/// The leftmost root `inf{θ : R̂(θ) ≤ α}` of the selective risk.
pub fn fit_threshold(inst: &SelectiveInstance) -> CalibrationResult {
    let view = inst.sorted_view();
    let j = threshold_index(&view);
    let n = view.len();
    selective_result(theta_at(inst, &view, j), j, n, view.suffix[j], n - j, inst.alpha)
}

/// Full-scale index of each leave-one-out fit, computed by `N` refits.
pub fn loo_threshold_indices_naive(inst: &SelectiveInstance) -> Result<Vec<usize>> {
    let n = inst.len();
    if n < 2 {
        return Err(Error::TooSmall { need: 2, got: n });
    }
    let view = inst.sorted_view();
    Ok((0..n)
        .map(|i| {
            let mut p = inst.p_hat.clone();
            let mut e = inst.err.clone();
            p.remove(i);
            e.remove(i);
            let sub = SelectiveInstance { p_hat: p, err: e, alpha: inst.alpha, tie_seed: None };
            let j = threshold_index(&sub.sorted_view());
            let r = view.ranks[i];
            if j < r {
                j
            } else {
                j + 1
            }
        })
        .collect())
}

/// Leave-one-out index tables built from the full-data suffix counts.
///
/// Removing the sample of rank `r` leaves, at full-scale position `J < r`,
/// `suffix[J] − E_r` errors among `N − 1 − J` points, and at `J > r`,
/// `suffix[J]` errors among `N − J` points. The first table answers the
/// `J < r` case for both values of `E_r`; the second gives the first
/// feasible `J` at or after each position for the `J > r` case.
struct LooTables {
    first_below: [usize; 2],
    first_above_from: Vec<usize>,
}

impl LooTables {
    fn new(view: &SortedView) -> Self {
        let n = view.len();
        let alpha = view.alpha;
        let first_below = [0usize, 1].map(|e| {
            (0..n)
                .find(|&j| view.suffix[j] >= e && feasible(view.suffix[j] - e, n - 1 - j, alpha))
                .unwrap_or(usize::MAX)
        });
        let mut first_above_from = vec![usize::MAX; n + 2];
        for j in (0..=n).rev() {
            first_above_from[j] = if feasible(view.suffix[j], n - j, alpha) { j } else { first_above_from[j + 1] };
        }
        LooTables { first_below, first_above_from }
    }

    /// Full-scale index after removing rank `r` with error bit `e`.
    fn index(&self, r: usize, e: bool) -> usize {
        let below = self.first_below[e as usize];
        if below < r {
            below
        } else {
            self.first_above_from[r + 1]
        }
    }
}

/// Full-scale index of each leave-one-out fit, in the instance's sample
/// order. Runs in `O(N log N)` and agrees exactly with
/// [`loo_threshold_indices_naive`].
pub fn loo_threshold_indices(inst: &SelectiveInstance) -> Result<Vec<usize>> {
    let n = inst.len();
    if n < 2 {
        return Err(Error::TooSmall { need: 2, got: n });
    }
    let view = inst.sorted_view();
    let tables = LooTables::new(&view);
    Ok((0..n).map(|i| tables.index(view.ranks[i], inst.err[i])).collect())
}

/// `K = max_i |ĵ_{-i} − ĵ|`.
pub fn k_statistic(inst: &SelectiveInstance) -> Result<usize> {
    let loo = loo_threshold_indices(inst)?;
    let j = threshold_index(&inst.sorted_view());
    Ok(loo.into_iter().map(|l| l.abs_diff(j)).max().unwrap_or(0))
}

/// Number of `j ∈ 1..=N` whose partial sum `T_j` lies in `[α−2, α−1)`,
/// equivalently `Ē_j ∈ (α + (1−α)/j, α + (2−α)/j]`.
pub fn band_crossing_count(inst: &SelectiveInstance) -> usize {
    let view = inst.sorted_view();
    (1..=view.len()).filter(|&j| view.in_band(j)).count()
}

/// Endpoints `(α + (1−α)/j, α + (2−α)/j)` of the band at position `j`.
pub fn band_endpoints(alpha: f64, j: usize) -> (f64, f64) {
    let jf = j as f64;
    (alpha + (1.0 - alpha) / jf, alpha + (2.0 - alpha) / jf)
}

/// `Σ_i w_i Δ_i`, the leave-one-out loss sum minus the full-data loss sum,
/// with `w_i = α` for correct points and `−(1−α)` for errors.
pub fn weighted_crossing_sum(inst: &SelectiveInstance) -> Result<f64> {
    let loo = loo_threshold_indices(inst)?;
    let view = inst.sorted_view();
    let j = threshold_index(&view);
    let a = inst.alpha;
    let mut s = 0.0;
    for i in 0..inst.len() {
        let v = view.ranks[i];
        let delta = (loo[i] >= v) as i32 - (j >= v) as i32;
        let w = if inst.err[i] { -(1.0 - a) } else { a };
        s += w * delta as f64;
    }
    Ok(s)
}

/// `ℓ(err, p̂; θ)`; the sentinel −∞ predicts on everything.
pub fn selective_loss(err: bool, p_hat: f64, theta: f64, alpha: f64) -> f64 {
    let abstain = theta >= p_hat;
    if err {
        if abstain {
            alpha
        } else {
            1.0
        }
    } else if abstain {
        alpha
    } else {
        0.0
    }
}

/// The abstention loss as a [`Loss`] on samples `(x = [p̂], y = error bit)`.
#[derive(Clone, Copy, Debug)]
pub struct SelectiveLoss {
    pub alpha: f64,
}

impl Loss for SelectiveLoss {
    fn dim(&self) -> usize {
        1
    }

    fn label_kind(&self) -> LabelKind {
        LabelKind::Binary
    }

    fn evaluate(&self, z: &Sample, theta: &[f64]) -> f64 {
        let err = error_bit(&z.y).unwrap_or(false);
        selective_loss(err, z.x[0], theta[0], self.alpha)
    }

    fn bounded_01(&self) -> bool {
        true
    }
}

/// The leftmost-root calibrator. Tied confidences are handled in threshold
/// space, and leave-one-out fits use a tie-aware linear pass.
#[derive(Clone, Copy, Debug)]
pub struct SelectiveThreshold {
    pub alpha: f64,
}

impl Calibrator for SelectiveThreshold {
    fn id(&self) -> String {
        "selective-leftmost-root".into()
    }

    fn calibrate(&self, data: &[Sample], _loss: &dyn Loss) -> Result<CalibrationResult> {
        let (p, e) = split_samples(data)?;
        check_inputs(&p, &e, self.alpha)?;
        let order = sorted_order(&p);
        let n = p.len();
        let mut suffix = vec![0usize; n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] + e[order[k]] as usize;
        }
        // Only the last member of a tie group is a valid cut.
        let k = (0..=n)
            .filter(|&k| k == 0 || k == n || p[order[k - 1]] < p[order[k]])
            .find(|&k| feasible(suffix[k], n - k, self.alpha))
            .unwrap_or(n);
        let theta = if k == 0 { ThetaHat::NegInf } else { ThetaHat::scalar(p[order[k - 1]]) };
        Ok(selective_result(theta, k, n, suffix[k], n - k, self.alpha))
    }

    fn calibrate_leave_one_out(&self, data: &[Sample], _loss: &dyn Loss) -> Result<Vec<CalibrationResult>> {
        let inst = match SelectiveInstance::from_samples(data, self.alpha, None) {
            Ok(inst) => inst,
            Err(Error::InvalidSample { reason, .. }) if reason == "tied confidence" => {
                let (p, e) = split_samples(data)?;
                if p.len() < 2 {
                    return Err(Error::TooSmall { need: 2, got: p.len() });
                }
                return Ok(tied_leave_one_out(&p, &e, self.alpha));
            }
            Err(e) => return Err(e),
        };
        let n = inst.len();
        if n < 2 {
            return Err(Error::TooSmall { need: 2, got: n });
        }
        let view = inst.sorted_view();
        let tables = LooTables::new(&view);
        Ok((0..n)
            .map(|i| {
                let r = view.ranks[i];
                let big_j = tables.index(r, inst.err[i]);
                let (sub_j, err_above, above) = if big_j < r {
                    (big_j, view.suffix[big_j] - inst.err[i] as usize, n - 1 - big_j)
                } else {
                    (big_j - 1, view.suffix[big_j], n - big_j)
                };
                selective_result(theta_at(&inst, &view, big_j), sub_j, n - 1, err_above, above, self.alpha)
            })
            .collect())
    }
}

/// Leave-one-out fits with tied confidences, where only boundaries between
/// tie groups are valid cuts. Removing point `i` lowers the counts of every
/// cut at or below the start of its group and leaves higher cuts unchanged,
/// so the leftmost feasible cut is the first feasible one in the lowered
/// range if any, otherwise the first originally feasible cut above the
/// group.
fn tied_leave_one_out(p: &[f64], e: &[bool], alpha: f64) -> Vec<CalibrationResult> {
    let n = p.len();
    let order = sorted_order(p);
    let mut suffix = vec![0usize; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + e[order[k]] as usize;
    }
    let boundary = |k: usize| k == 0 || k == n || p[order[k - 1]] < p[order[k]];
    let mut start = vec![0usize; n];
    let mut end = vec![0usize; n];
    let mut k = 0;
    while k < n {
        let mut m = k + 1;
        while m < n && p[order[m]] == p[order[k]] {
            m += 1;
        }
        for q in k..m {
            start[q] = k;
            end[q] = m;
        }
        k = m;
    }
    let first_lowered = [0usize, 1].map(|b| {
        (0..n)
            .filter(|&k| boundary(k))
            .find(|&k| suffix[k] >= b && feasible(suffix[k] - b, n - 1 - k, alpha))
            .unwrap_or(usize::MAX)
    });
    let mut first_from = vec![usize::MAX; n + 1];
    first_from[n] = n;
    for k in (0..n).rev() {
        first_from[k] = if boundary(k) && feasible(suffix[k], n - k, alpha) { k } else { first_from[k + 1] };
    }
    let theta = |k: usize| if k == 0 { ThetaHat::NegInf } else { ThetaHat::scalar(p[order[k - 1]]) };
    let mut rank = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }
    (0..n)
        .map(|i| {
            let (s, en) = (start[rank[i]], end[rank[i]]);
            let ei = e[i] as usize;
            let low = first_lowered[ei];
            if low <= s {
                selective_result(theta(low), low, n - 1, suffix[low] - ei, n - 1 - low, alpha)
            } else {
                let k = first_from[en];
                selective_result(theta(k), k - 1, n - 1, suffix[k], n - k, alpha)
            }
        })
        .collect()
}

/// Figure-style scenarios for the error sequence in ascending-confidence
/// order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Error probability decays linearly from 2α to 0 at the midpoint.
    WellRanked,
    /// Constant error probability 0.35.
    PoorlyRankedConst,
    /// Constant error probability α.
    Adversarial,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::WellRanked, Scenario::PoorlyRankedConst, Scenario::Adversarial];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::WellRanked => "well_ranked",
            Scenario::PoorlyRankedConst => "poorly_ranked_const",
            Scenario::Adversarial => "adversarial",
        }
    }

    /// Error probability of the `i`-th least confident of `n + 1` points.
    pub fn error_probability(self, i: usize, n: usize, alpha: f64) -> f64 {
        match self {
            Scenario::WellRanked => {
                let m = (n as f64 + 1.0) / 2.0;
                (2.0 * alpha * (1.0 - (i as f64 - 1.0) / m)).max(0.0)
            }
            Scenario::PoorlyRankedConst => 0.35,
            Scenario::Adversarial => alpha,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

/// `n + 1` points with confidences `i/(n+2)` and independent errors
/// `E_i ~ Bernoulli(p_i)`.
pub fn scenario_generate(kind: Scenario, n: usize, alpha: f64, seed: u64) -> Result<SelectiveInstance> {
    if n < 1 {
        return Err(Error::TooSmall { need: 1, got: n });
    }
    let big_n = n + 1;
    let mut rng = rng_from_seed(seed);
    let denom = (n + 2) as f64;
    let p_hat = (1..=big_n).map(|i| i as f64 / denom).collect();
    let err = (1..=big_n)
        .map(|i| rng.random::<f64>() < kind.error_probability(i, n, alpha))
        .collect();
    SelectiveInstance::new(p_hat, err, alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectiveBeta {
    pub beta: f64,
    pub se: f64,
    pub mean_k: f64,
    pub trials: usize,
}

/// `β = 2·max{α, 1−α}·E[K]/N`, estimated over generated instances. Trial
/// `t` receives the seed `seed + t`.
pub fn selective_stability_beta<G>(generator: G, cfg: MonteCarloConfig) -> Result<SelectiveBeta>
where
    G: Fn(u64) -> Result<SelectiveInstance> + Sync,
{
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let draws: Vec<(f64, f64)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let inst = generator(trial_seed(cfg.seed, t))?;
            let k = k_statistic(&inst)? as f64;
            let a = inst.alpha;
            Ok((k, 2.0 * a.max(1.0 - a) * k / inst.len() as f64))
        })
        .collect::<Result<_>>()?;
    let t = draws.len() as f64;
    let mean_k = draws.iter().map(|d| d.0).sum::<f64>() / t;
    let beta = draws.iter().map(|d| d.1).sum::<f64>() / t;
    let se = if draws.len() > 1 {
        let var = draws.iter().map(|d| (d.1 - beta).powi(2)).sum::<f64>() / (t - 1.0);
        (var / t).sqrt()
    } else {
        0.0
    };
    Ok(SelectiveBeta { beta, se, mean_k, trials: cfg.trials })
}
