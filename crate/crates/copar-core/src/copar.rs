//! The block-structured time-series copula model: canonical dependence
//! blocks, sequential selection and estimation, joint likelihood refinement,
//! information criteria, lag-order selection, simulation, and a plain-text
//! model format.
//!
//! A model of order `k` over `m` jointly observed series attaches one
//! marginal distribution to each series and carries all dependence — within
//! each series over time and between series — through `m²k + m(m−1)/2`
//! pair-copula *blocks*. A block is a single bivariate copula reused by every
//! time index at its lag (the dependence structure is stationary), and any
//! pair further apart than `k` steps is conditionally independent. Laying the
//! blocks over the stacked variables reproduces exactly the regular vine of
//! [`build_copar_structure`](crate::vine::build_copar_structure).
//!
//! Estimation follows the natural dependency order of the blocks: each
//! block's pooled conditional observations only involve blocks fitted before
//! it, so selection, estimation, and likelihood evaluation all run as passes
//! of one rolling walker ([`walk_edges`]) that carries a `k`-deep window of
//! conditional distribution values per series instead of materializing the
//! full vine.

use crate::error::{CoparError, Result};
use crate::margins::{self, Margin, MarginFamily};
use crate::optim::maximize_box;
use crate::pair_copulas::{self, Family, FittedCopula, PairCopula};
use crate::special::clamp_unit;
use crate::stats;
use crate::vine::{build_copar_structure, rvine_sample, RVineMatrix, VariableId};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Identifier of one dependence block.
///
/// `Serial` blocks couple a series with its own past; `Cross` blocks couple
/// the present of series `to` with the value of series `from` at `lag` steps
/// earlier. Contemporaneous dependence is the `lag = 0` cross block, which by
/// the column-order convention always points from the earlier-ordered series
/// to the later one (`from < to`). Cross blocks with `from > to` carry the
/// feedback direction and exist for `lag ≥ 1` only.
///
/// The `Ord` implementation is the estimation order: all blocks among the
/// first `s − 1` series precede the blocks that involve series `s`, and
/// within one stage the incoming cross blocks come first (grouped by source
/// series, lags ascending), followed per lag by the outgoing cross blocks and
/// then the serial block. Every block's conditional arguments only depend on
/// blocks that sort before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockLabel {
    /// Dependence of a series on its own value `lag` steps back.
    Serial { series: usize, lag: usize },
    /// Dependence of series `to` on the value of series `from` at `lag`
    /// steps back (`lag = 0` is contemporaneous and requires `from < to`).
    Cross { from: usize, to: usize, lag: usize },
}

impl BlockLabel {
    /// The block's lag.
    pub fn lag(&self) -> usize {
        match *self {
            BlockLabel::Serial { lag, .. } | BlockLabel::Cross { lag, .. } => lag,
        }
    }

    /// Whether the block couples two different series.
    pub fn is_cross(&self) -> bool {
        matches!(self, BlockLabel::Cross { .. })
    }

    /// Sort key implementing the estimation order.
    fn sort_key(&self) -> (usize, u8, usize, usize) {
        match *self {
            BlockLabel::Serial { series, lag } => (series, 1, lag, series),
            BlockLabel::Cross { from, to, lag } if from < to => (to, 0, from, lag),
            BlockLabel::Cross { from, to, lag } => (from, 1, lag, to),
        }
    }
}

impl PartialOrd for BlockLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BlockLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl fmt::Display for BlockLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BlockLabel::Serial { series, lag } => write!(f, "s{series}.lag{lag}"),
            BlockLabel::Cross { from, to, lag } => write!(f, "s{from}->s{to}.lag{lag}"),
        }
    }
}

impl FromStr for BlockLabel {
    type Err = CoparError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CoparError::parse(format!("malformed block label: {s:?}"));
        let (head, lag) = s.split_once(".lag").ok_or_else(bad)?;
        let lag: usize = lag.parse().map_err(|_| bad())?;
        let series = |tok: &str| -> Result<usize> {
            let n: usize = tok.strip_prefix('s').ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(bad());
            }
            Ok(n)
        };
        let label = match head.split_once("->") {
            Some((a, b)) => BlockLabel::Cross {
                from: series(a)?,
                to: series(b)?,
                lag,
            },
            None => BlockLabel::Serial {
                series: series(head)?,
                lag,
            },
        };
        match label {
            BlockLabel::Serial { lag: 0, .. } => Err(bad()),
            BlockLabel::Cross { from, to, .. } if from == to => Err(bad()),
            BlockLabel::Cross { from, to, lag: 0 } if from > to => Err(bad()),
            _ => Ok(label),
        }
    }
}

/// All block labels of an order-`k` model over `m` series, in estimation
/// order. The length equals [`count_copulas`](crate::vine::count_copulas).
pub fn canonical_blocks(m: usize, k: usize) -> Vec<BlockLabel> {
    let mut labels = Vec::new();
    for s in 1..=m {
        for p in 1..s {
            for lag in 0..=k {
                labels.push(BlockLabel::Cross { from: p, to: s, lag });
            }
        }
        for lag in 1..=k {
            for p in 1..s {
                labels.push(BlockLabel::Cross { from: s, to: p, lag });
            }
            labels.push(BlockLabel::Serial { series: s, lag });
        }
    }
    labels
}

/// Position of a block in [`canonical_blocks`] order, computed arithmetically.
pub(crate) fn block_position(m: usize, k: usize, label: BlockLabel) -> usize {
    debug_assert!(m >= 2);
    // Blocks in stage s: (s−1)(k+1) incoming cross + k·s outgoing-and-serial.
    let stage_offset = |s: usize| {
        if s < 2 {
            0
        } else {
            (k + 1) * (s - 1) * (s - 2) / 2 + k * (s - 1) * s / 2
        }
    };
    match label {
        BlockLabel::Serial { series: s, lag: l } => {
            stage_offset(s) + (s - 1) * (k + 1) + (l - 1) * s + (s - 1)
        }
        BlockLabel::Cross { from, to, lag } if from < to => {
            stage_offset(to) + (from - 1) * (k + 1) + lag
        }
        BlockLabel::Cross { from: s, to: p, lag: l } => {
            stage_offset(s) + (s - 1) * (k + 1) + (l - 1) * s + (p - 1)
        }
    }
}

/// What the walker should do at one edge instance.
pub(crate) enum EdgeStep {
    /// Apply this copula to the running conditionals and continue up the
    /// column.
    Absorb(PairCopula),
    /// Report the edge's arguments through the observer, then leave the
    /// column.
    Record,
    /// Leave the column without reporting.
    Halt,
}

/// Applies an h-function, passing independence through unchanged.
pub(crate) fn h_or_pass(cop: &PairCopula, a: f64, b: f64) -> f64 {
    if matches!(cop, PairCopula::Independence) {
        a
    } else {
        cop.h(a, b)
    }
}

/// Walks every block edge instance of the stacked series in time order,
/// maintaining for each series the window of conditional distribution values
/// the structure needs (depth `k`, truncated near the start of the sample).
///
/// For the variable of series `j` at time `t` the edges appear in the
/// structure's within-column order: cross edges from each earlier-ordered
/// series at lags `0..=k` (nearest time first), then the series' own serial
/// edges at lags `1..=k`, then cross edges from each later-ordered series at
/// lags `1..=k`. For each edge, `decide` is called with the block's position
/// and label; on [`EdgeStep::Absorb`] and [`EdgeStep::Record`] the observer
/// sees the two conditional arguments (current variable first, partner
/// second). The walk leaves a column on `Record` or `Halt` — partial columns
/// leave exactly the state that blocks deciding `Absorb` so far can produce,
/// which is all later passes of a sequential fit ever read.
///
/// Returns the final window state, indexed `1..=m` by series; entry `a` of a
/// series' window is the conditional distribution value of its observation
/// `a` steps back given everything the structure conditions it on. Slot `0`
/// is unused.
pub(crate) fn walk_edges<D, O>(
    m: usize,
    k: usize,
    t_len: usize,
    us: &[f64],
    mut decide: D,
    mut observe: O,
) -> Vec<Vec<f64>>
where
    D: FnMut(usize, BlockLabel) -> EdgeStep,
    O: FnMut(usize, BlockLabel, f64, f64),
{
    debug_assert_eq!(us.len(), m * t_len);
    let mut v: Vec<Vec<f64>> = vec![Vec::new(); m + 1];
    for t in 1..=t_len {
        for j in 1..=m {
            let depth = k.min(t - 1);
            let mut direct = clamp_unit(us[(t - 1) * m + j - 1]);
            let mut own: Vec<f64> = Vec::with_capacity(depth + 1);
            let mut open = true;
            'fwd: for p in 1..j {
                for lag in 0..=depth {
                    let label = BlockLabel::Cross { from: p, to: j, lag };
                    let pos = block_position(m, k, label);
                    match decide(pos, label) {
                        EdgeStep::Absorb(cop) => {
                            let w = v[p][lag];
                            observe(pos, label, direct, w);
                            direct = h_or_pass(&cop, direct, w);
                        }
                        EdgeStep::Record => {
                            let w = v[p][lag];
                            observe(pos, label, direct, w);
                            open = false;
                            break 'fwd;
                        }
                        EdgeStep::Halt => {
                            open = false;
                            break 'fwd;
                        }
                    }
                }
            }
            if open {
                own.push(direct);
                for lag in 1..=depth {
                    let label = BlockLabel::Serial { series: j, lag };
                    let pos = block_position(m, k, label);
                    match decide(pos, label) {
                        EdgeStep::Absorb(cop) => {
                            let w = v[j][lag - 1];
                            observe(pos, label, direct, w);
                            own.push(h_or_pass(&cop, w, direct));
                            direct = h_or_pass(&cop, direct, w);
                        }
                        EdgeStep::Record => {
                            let w = v[j][lag - 1];
                            observe(pos, label, direct, w);
                            open = false;
                            break;
                        }
                        EdgeStep::Halt => {
                            open = false;
                            break;
                        }
                    }
                }
            }
            if open {
                'rev: for q in j + 1..=m {
                    for lag in 1..=depth {
                        let label = BlockLabel::Cross { from: q, to: j, lag };
                        let pos = block_position(m, k, label);
                        match decide(pos, label) {
                            EdgeStep::Absorb(cop) => {
                                let w = v[q][lag - 1];
                                observe(pos, label, direct, w);
                                v[q][lag - 1] = h_or_pass(&cop, w, direct);
                                direct = h_or_pass(&cop, direct, w);
                            }
                            EdgeStep::Record => {
                                let w = v[q][lag - 1];
                                observe(pos, label, direct, w);
                                break 'rev;
                            }
                            EdgeStep::Halt => break 'rev,
                        }
                    }
                }
            }
            v[j] = own;
        }
    }
    v
}

/// Outcome of fitting or evaluating one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFitRecord {
    /// Which block this record describes.
    pub label: BlockLabel,
    /// The copula kept for the block.
    pub copula: PairCopula,
    /// Pooled log-likelihood contribution of the block's edges.
    pub loglik: f64,
    /// Number of pooled pairs behind the block.
    pub n_obs: usize,
    /// Whether the parameter search failed and tau-inversion starting values
    /// were kept.
    pub fell_back_to_tau: bool,
}

/// Summary of one fitted model: the full log-likelihood, the parameter
/// counts entering the information criteria, the criteria themselves, and a
/// per-block trace in estimation order.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Marginal plus copula log-likelihood.
    pub loglik: f64,
    /// Free parameters across all copula blocks.
    pub n_copula_params: usize,
    /// Free parameters across all margins.
    pub n_margin_params: usize,
    /// Total parameter count (`n_copula_params + n_margin_params`).
    pub n_params: usize,
    /// Scalar observation count `m · T` used by the criteria.
    pub n_obs: usize,
    /// Akaike criterion.
    pub aic: f64,
    /// Bayesian criterion.
    pub bic: f64,
    /// Hannan-Quinn criterion.
    pub hqc: f64,
    /// Per-block fit records in estimation order.
    pub blocks: Vec<BlockFitRecord>,
    /// Non-fatal problems encountered while fitting.
    pub warnings: Vec<String>,
}

/// A fitted model: one margin per series and one pair-copula per dependence
/// block. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct CoparModel {
    m: usize,
    k: usize,
    margins: Vec<Margin>,
    blocks: BTreeMap<BlockLabel, PairCopula>,
}

impl CoparModel {
    /// Assembles a model and checks it is complete: `m ≥ 2`, `k ≥ 1`, one
    /// margin per series, and exactly the canonical block set.
    pub fn new(
        m: usize,
        k: usize,
        margins: Vec<Margin>,
        blocks: BTreeMap<BlockLabel, PairCopula>,
    ) -> Result<CoparModel> {
        if m < 2 {
            return Err(CoparError::argument("a model needs at least two series"));
        }
        if k == 0 {
            return Err(CoparError::argument("the model order must be at least 1"));
        }
        if margins.len() != m {
            return Err(CoparError::argument(format!(
                "expected {m} margins, got {}",
                margins.len()
            )));
        }
        let canonical = canonical_blocks(m, k);
        if blocks.len() != canonical.len() {
            return Err(CoparError::argument(format!(
                "expected {} blocks for m={m}, k={k}, got {}",
                canonical.len(),
                blocks.len()
            )));
        }
        for label in &canonical {
            if !blocks.contains_key(label) {
                return Err(CoparError::argument(format!("missing block {label}")));
            }
        }
        Ok(CoparModel { m, k, margins, blocks })
    }

    /// Number of series.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Model order (maximum dependent lag).
    pub fn k(&self) -> usize {
        self.k
    }

    /// The fitted margins, one per series in column order.
    pub fn margins(&self) -> &[Margin] {
        &self.margins
    }

    /// All blocks in estimation order.
    pub fn blocks(&self) -> &BTreeMap<BlockLabel, PairCopula> {
        &self.blocks
    }

    /// One block's copula, if the label belongs to this model.
    pub fn block(&self, label: BlockLabel) -> Option<&PairCopula> {
        self.blocks.get(&label)
    }

    /// Largest lag at which any block is not independence (0 when the model
    /// is fully independent). This is the order the data support under the
    /// selection test, as opposed to the order `k` the model was built with.
    pub fn max_dependent_lag(&self) -> usize {
        self.blocks
            .iter()
            .filter(|(_, cop)| !matches!(cop, PairCopula::Independence))
            .map(|(label, _)| label.lag())
            .max()
            .unwrap_or(0)
    }

    /// Blocks in estimation order as a flat table indexed by block position.
    fn block_table(&self) -> Vec<PairCopula> {
        self.blocks.values().copied().collect()
    }

    /// Materializes the model over `t_len` time points as a vine matrix with
    /// every block's copula tiled across all its time indices and
    /// independence beyond lag `k`.
    pub fn tiled_matrix(&self, t_len: usize) -> Result<RVineMatrix> {
        let mut mat = build_copar_structure(self.m, t_len, self.k)?;
        let d = mat.dim();
        for col in 0..d {
            let diag = VariableId::from_index(mat.diagonal(col), self.m);
            for row in col + 1..d {
                let partner = VariableId::from_index(mat.entry(row, col), self.m);
                let lag = diag.time - partner.time;
                if lag > self.k {
                    continue;
                }
                let label = if diag.series == partner.series {
                    BlockLabel::Serial { series: diag.series, lag }
                } else {
                    BlockLabel::Cross {
                        from: partner.series,
                        to: diag.series,
                        lag,
                    }
                };
                let cop = *self.blocks.get(&label).ok_or_else(|| {
                    CoparError::argument(format!("model has no block {label}"))
                })?;
                mat.set_copula(row, col, cop)?;
            }
        }
        Ok(mat)
    }
}

/// Checks a stacked dataset: at least two series, all the same nonzero
/// length, all values finite. Returns `(m, t_len)`.
pub(crate) fn validate_series(data: &[Vec<f64>]) -> Result<(usize, usize)> {
    if data.len() < 2 {
        return Err(CoparError::argument("need at least two series"));
    }
    let t_len = data[0].len();
    if t_len == 0 {
        return Err(CoparError::argument("series must not be empty"));
    }
    for (j, series) in data.iter().enumerate() {
        if series.len() != t_len {
            return Err(CoparError::argument(format!(
                "series {} has length {} but series 1 has length {t_len}",
                j + 1,
                series.len()
            )));
        }
        if series.iter().any(|x| !x.is_finite()) {
            return Err(CoparError::argument(format!(
                "series {} contains a non-finite value",
                j + 1
            )));
        }
    }
    Ok((data.len(), t_len))
}

/// Stacks per-series probability-integral transforms into variable order:
/// the value for series `j` at time `t` lands at `(t−1)·m + j − 1`.
pub(crate) fn pit_stack(margins: &[Margin], data: &[Vec<f64>]) -> Vec<f64> {
    let m = margins.len();
    let t_len = data[0].len();
    let mut us = vec![0.0; m * t_len];
    for (j, series) in data.iter().enumerate() {
        for (ti, &x) in series.iter().enumerate() {
            us[ti * m + j] = margins[j].pit(x);
        }
    }
    us
}

/// Fits the blocks in estimation order, one rolling pass per block: edges of
/// already-fitted blocks are absorbed, the target block's pooled arguments
/// are recorded, and the strategy turns them into a fitted copula.
pub(crate) fn fit_blocks_with<S>(
    m: usize,
    k: usize,
    t_len: usize,
    us: &[f64],
    mut strategy: S,
) -> Result<Vec<BlockFitRecord>>
where
    S: FnMut(BlockLabel, &[f64], &[f64]) -> Result<FittedCopula>,
{
    let order = canonical_blocks(m, k);
    let mut committed: Vec<PairCopula> = Vec::with_capacity(order.len());
    let mut records = Vec::with_capacity(order.len());
    for (bi, &target) in order.iter().enumerate() {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        walk_edges(
            m,
            k,
            t_len,
            us,
            |pos, _| {
                if pos < bi {
                    EdgeStep::Absorb(committed[pos])
                } else if pos == bi {
                    EdgeStep::Record
                } else {
                    EdgeStep::Halt
                }
            },
            |pos, _, a, b| {
                if pos == bi {
                    xs.push(a);
                    ws.push(b);
                }
            },
        );
        let fitted = strategy(target, &xs, &ws)
            .map_err(|e| CoparError::fit(format!("block {target}: {e}")))?;
        committed.push(fitted.copula);
        records.push(BlockFitRecord {
            label: target,
            copula: fitted.copula,
            loglik: fitted.loglik,
            n_obs: xs.len(),
            fell_back_to_tau: fitted.fell_back_to_tau,
        });
    }
    Ok(records)
}

/// Copula log-likelihood of a complete block table over the stacked PIT
/// data, one rolling pass.
pub(crate) fn rolling_copula_loglik(
    table: &[PairCopula],
    m: usize,
    k: usize,
    t_len: usize,
    us: &[f64],
) -> f64 {
    let mut total = 0.0;
    walk_edges(
        m,
        k,
        t_len,
        us,
        |pos, _| EdgeStep::Absorb(table[pos]),
        |pos, _, a, b| {
            if !matches!(table[pos], PairCopula::Independence) {
                total += table[pos].log_pdf(a, b);
            }
        },
    );
    total
}

/// Like [`rolling_copula_loglik`] but also returns per-block log-likelihood
/// and pooled-pair counts, indexed by block position.
fn evaluate_blocks(
    table: &[PairCopula],
    m: usize,
    k: usize,
    t_len: usize,
    us: &[f64],
) -> (f64, Vec<(f64, usize)>) {
    let mut per = vec![(0.0, 0usize); table.len()];
    let mut total = 0.0;
    walk_edges(
        m,
        k,
        t_len,
        us,
        |pos, _| EdgeStep::Absorb(table[pos]),
        |pos, _, a, b| {
            let ll = if matches!(table[pos], PairCopula::Independence) {
                0.0
            } else {
                table[pos].log_pdf(a, b)
            };
            total += ll;
            per[pos].0 += ll;
            per[pos].1 += 1;
        },
    );
    (total, per)
}

/// Assembles a [`FitReport`] from per-block records and the margin side.
fn build_report(
    records: Vec<BlockFitRecord>,
    margin_loglik: f64,
    n_margin_params: usize,
    n_obs: usize,
    warnings: Vec<String>,
) -> Result<FitReport> {
    let copula_loglik: f64 = records.iter().map(|r| r.loglik).sum();
    let n_copula_params: usize = records.iter().map(|r| r.copula.n_params()).sum();
    let loglik = margin_loglik + copula_loglik;
    let n_params = n_copula_params + n_margin_params;
    let (aic, bic, hqc) = information_criteria(loglik, n_params, n_obs)?;
    Ok(FitReport {
        loglik,
        n_copula_params,
        n_margin_params,
        n_params,
        n_obs,
        aic,
        bic,
        hqc,
        blocks: records,
        warnings,
    })
}

/// Fits margins per series, returning the margins, their summed
/// log-likelihood, and their total parameter count.
pub(crate) fn fit_margins(
    data: &[Vec<f64>],
    margin_families: &[MarginFamily],
) -> Result<(Vec<Margin>, f64, usize)> {
    let mut margins = Vec::with_capacity(data.len());
    let mut loglik = 0.0;
    let mut n_params = 0;
    for (j, series) in data.iter().enumerate() {
        let fitted = margins::fit(margin_families[j], series).map_err(|e| {
            CoparError::fit(format!("margin for series {}: {e}", j + 1))
        })?;
        loglik += fitted.loglik;
        n_params += margin_families[j].n_params();
        margins.push(fitted.margin);
    }
    Ok((margins, loglik, n_params))
}

/// Fits an order-`k` model sequentially: margins first, then every block in
/// estimation order on its pooled conditional observations, selecting the
/// family per block from `candidates` (with the usual independence pretest).
///
/// Requires `T ≥ 5k + 5` so every block has a healthy pooled sample.
pub fn fit_copar_sequential(
    data: &[Vec<f64>],
    k: usize,
    margin_families: &[MarginFamily],
    candidates: &[Family],
) -> Result<(CoparModel, FitReport)> {
    let (m, t_len) = validate_series(data)?;
    if k == 0 {
        return Err(CoparError::argument("the model order must be at least 1"));
    }
    if t_len < 5 * k + 5 {
        return Err(CoparError::argument(format!(
            "series length {t_len} is too short for order {k}: need at least {}",
            5 * k + 5
        )));
    }
    if margin_families.len() != m {
        return Err(CoparError::argument(format!(
            "expected {m} margin families, got {}",
            margin_families.len()
        )));
    }
    if candidates.is_empty() {
        return Err(CoparError::argument(
            "need at least one candidate copula family",
        ));
    }
    let (fitted_margins, margin_loglik, n_margin_params) =
        fit_margins(data, margin_families)?;
    let us = pit_stack(&fitted_margins, data);
    let mut warnings = Vec::new();
    let records = fit_blocks_with(m, k, t_len, &us, |label, xs, ws| {
        let fitted = pair_copulas::select(xs, ws, candidates)?;
        if fitted.fell_back_to_tau {
            warnings.push(format!(
                "block {label}: parameter search failed, keeping tau-inversion start values"
            ));
        }
        Ok(fitted)
    })?;
    let blocks: BTreeMap<_, _> = records.iter().map(|r| (r.label, r.copula)).collect();
    let model = CoparModel::new(m, k, fitted_margins, blocks)?;
    let report = build_report(records, margin_loglik, n_margin_params, m * t_len, warnings)?;
    Ok((model, report))
}

/// Log-likelihood of a model on a dataset: the sum of marginal log-densities
/// plus the copula log-density of the tiled vine on the PIT data. Computed
/// with one rolling pass; agrees with evaluating
/// [`rvine_logdensity`](crate::vine::rvine_logdensity) on the materialized
/// matrix.
pub fn copar_loglik(model: &CoparModel, data: &[Vec<f64>]) -> Result<f64> {
    let (m, t_len) = validate_series(data)?;
    if m != model.m {
        return Err(CoparError::argument(format!(
            "model covers {} series but the data has {m}",
            model.m
        )));
    }
    if t_len < model.k + 1 {
        return Err(CoparError::argument(format!(
            "need at least {} time points to evaluate an order-{} model",
            model.k + 1,
            model.k
        )));
    }
    let mut total = 0.0;
    for (j, series) in data.iter().enumerate() {
        total += margins::loglik(&model.margins[j], series);
    }
    let us = pit_stack(&model.margins, data);
    total += rolling_copula_loglik(&model.block_table(), m, model.k, t_len, &us);
    Ok(total)
}

/// Refines all copula parameters of a sequentially fitted model by one joint
/// box-constrained quasi-Newton search (families and margins stay fixed).
/// The refined log-likelihood never falls below the starting one; if the
/// search fails the starting model is returned with a warning in the report.
pub fn refine_mle(model: &CoparModel, data: &[Vec<f64>]) -> Result<(CoparModel, FitReport)> {
    let (m, t_len) = validate_series(data)?;
    if m != model.m {
        return Err(CoparError::argument(format!(
            "model covers {} series but the data has {m}",
            model.m
        )));
    }
    if t_len < model.k + 1 {
        return Err(CoparError::argument(format!(
            "need at least {} time points to evaluate an order-{} model",
            model.k + 1,
            model.k
        )));
    }
    let mut margin_loglik = 0.0;
    let mut n_margin_params = 0;
    for (j, series) in data.iter().enumerate() {
        margin_loglik += margins::loglik(&model.margins[j], series);
        n_margin_params += model.margins[j].family().n_params();
    }
    let us = pit_stack(&model.margins, data);
    let table0 = model.block_table();

    // Pack the free parameters of every non-independence block.
    let mut x0 = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut slots: Vec<(usize, usize, usize)> = Vec::new();
    for (pos, cop) in table0.iter().enumerate() {
        if matches!(cop, PairCopula::Independence) {
            continue;
        }
        let (l, u) = cop.family().param_box(cop.kendall_tau());
        let params = cop.params();
        slots.push((pos, x0.len(), params.len()));
        for i in 0..params.len() {
            x0.push(params[i].clamp(l[i], u[i]));
            lo.push(l[i]);
            hi.push(u[i]);
        }
    }

    let rebuild = |theta: &[f64]| -> Result<Vec<PairCopula>> {
        let mut table = table0.clone();
        for &(pos, off, len) in &slots {
            table[pos] = PairCopula::from_params(table[pos].family(), &theta[off..off + len])?;
        }
        Ok(table)
    };

    let mut warnings = Vec::new();
    let table = if x0.is_empty() {
        table0.clone()
    } else {
        let objective = |theta: &[f64]| match rebuild(theta) {
            Ok(table) => rolling_copula_loglik(&table, m, model.k, t_len, &us),
            Err(_) => f64::NEG_INFINITY,
        };
        let start_value = objective(&x0);
        match maximize_box(objective, &x0, &lo, &hi) {
            Ok(result) if result.value.is_finite() && result.value >= start_value => {
                rebuild(&result.x)?
            }
            Ok(_) => {
                warnings.push(
                    "joint refinement did not improve on the sequential fit; keeping the starting model"
                        .to_string(),
                );
                table0.clone()
            }
            Err(e) => {
                warnings.push(format!(
                    "joint refinement failed ({e}); keeping the starting model"
                ));
                table0.clone()
            }
        }
    };

    let order = canonical_blocks(m, model.k);
    let blocks: BTreeMap<_, _> = order.iter().copied().zip(table.iter().copied()).collect();
    let refined = CoparModel::new(m, model.k, model.margins.clone(), blocks)?;
    let (_, per_block) = evaluate_blocks(&table, m, model.k, t_len, &us);
    let records: Vec<BlockFitRecord> = order
        .iter()
        .zip(table.iter())
        .zip(per_block.iter())
        .map(|((&label, &copula), &(loglik, n_obs))| BlockFitRecord {
            label,
            copula,
            loglik,
            n_obs,
            fell_back_to_tau: false,
        })
        .collect();
    let report = build_report(records, margin_loglik, n_margin_params, m * t_len, warnings)?;
    Ok((refined, report))
}

/// The three information criteria for a log-likelihood, parameter count, and
/// scalar observation count `n_obs = m · T`. Errors when `n_obs ≤ e`, where
/// the Hannan-Quinn term is undefined.
pub fn information_criteria(
    loglik: f64,
    n_params: usize,
    n_obs: usize,
) -> Result<(f64, f64, f64)> {
    let aic = stats::aic(loglik, n_params);
    let bic = stats::bic(loglik, n_params, n_obs);
    let hqc = stats::hqc(loglik, n_params, n_obs)?;
    Ok((aic, bic, hqc))
}

/// Which information criterion drives a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    Aic,
    Bic,
    Hqc,
}

impl Criterion {
    /// Stable lowercase name used by the CLI.
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
            Criterion::Hqc => "hqc",
        }
    }

    /// Reads this criterion's value out of a report.
    pub fn of(self, report: &FitReport) -> f64 {
        match self {
            Criterion::Aic => report.aic,
            Criterion::Bic => report.bic,
            Criterion::Hqc => report.hqc,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = CoparError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            "hqc" => Ok(Criterion::Hqc),
            _ => Err(CoparError::parse(format!(
                "unknown criterion {s:?} (expected aic, bic, or hqc)"
            ))),
        }
    }
}

/// Selects the model order by fitting all-Gaussian models of order
/// `1..=k_max` (a fast proxy for the full selection) and minimizing the
/// criterion; ties go to the smaller order. Margins are fitted once and
/// shared. Returns the chosen order and the per-order reports.
///
/// Requires `k_max ≤ (T − 5) / 5`, matching the sequential fit's length
/// requirement at the largest candidate order.
pub fn select_order(
    data: &[Vec<f64>],
    k_max: usize,
    criterion: Criterion,
    margin_families: &[MarginFamily],
) -> Result<(usize, Vec<FitReport>)> {
    let (m, t_len) = validate_series(data)?;
    if k_max == 0 {
        return Err(CoparError::argument("k_max must be at least 1"));
    }
    if t_len < 5 * k_max + 5 {
        return Err(CoparError::argument(format!(
            "series length {t_len} is too short for k_max {k_max}: need at least {}",
            5 * k_max + 5
        )));
    }
    if margin_families.len() != m {
        return Err(CoparError::argument(format!(
            "expected {m} margin families, got {}",
            margin_families.len()
        )));
    }
    let (fitted_margins, margin_loglik, n_margin_params) =
        fit_margins(data, margin_families)?;
    let us = pit_stack(&fitted_margins, data);
    let mut reports = Vec::with_capacity(k_max);
    let mut best_k = 1;
    let mut best_value = f64::INFINITY;
    for k in 1..=k_max {
        let records = fit_blocks_with(m, k, t_len, &us, |_, xs, ws| {
            pair_copulas::fit(Family::Gaussian, xs, ws)
        })?;
        let report = build_report(
            records,
            margin_loglik,
            n_margin_params,
            m * t_len,
            Vec::new(),
        )?;
        let value = criterion.of(&report);
        if value < best_value {
            best_value = value;
            best_k = k;
        }
        reports.push(report);
    }
    Ok((best_k, reports))
}

/// Simulates one path of `t_len` joint observations from the model,
/// deterministic in `seed`. Returns `m` series of length `t_len`.
pub fn simulate(model: &CoparModel, t_len: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if t_len < model.k + 1 {
        return Err(CoparError::argument(format!(
            "need at least {} time points to lay out an order-{} model",
            model.k + 1,
            model.k
        )));
    }
    let mat = model.tiled_matrix(t_len)?;
    let row = rvine_sample(&mat, 1, seed)
        .pop()
        .expect("one sample path requested");
    let mut out = vec![vec![0.0; t_len]; model.m];
    for j in 1..=model.m {
        for t in 1..=t_len {
            let u = clamp_unit(row[VariableId::new(j, t).index(model.m) - 1]);
            out[j - 1][t - 1] = model.margins[j - 1].quantile(u)?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Plain-text model format
// ---------------------------------------------------------------------------

impl CoparModel {
    /// Serializes the model — and optionally its fit report — as plain text.
    /// Floats print in shortest round-trip form, so parsing the output with
    /// [`CoparModel::from_text`] reproduces the model exactly.
    pub fn to_text(&self, report: Option<&FitReport>) -> String {
        let mut out = String::new();
        out.push_str("copar-model\n");
        out.push_str(&format!("m {}\n", self.m));
        out.push_str(&format!("k {}\n", self.k));
        out.push_str("margins\n");
        for (j, margin) in self.margins.iter().enumerate() {
            out.push_str(&format!("{} {}", j + 1, margin.family().name()));
            for p in margin.params() {
                out.push_str(&format!(" {p}"));
            }
            out.push('\n');
        }
        out.push_str("blocks\n");
        for (label, cop) in &self.blocks {
            out.push_str(&format!("{label} {}", cop.family().name()));
            for p in cop.params() {
                out.push_str(&format!(" {p}"));
            }
            out.push_str(&format!(" tau {}\n", cop.kendall_tau()));
        }
        if let Some(report) = report {
            out.push_str("fit\n");
            out.push_str(&format!("loglik {}\n", report.loglik));
            out.push_str(&format!("n_copula_params {}\n", report.n_copula_params));
            out.push_str(&format!("n_margin_params {}\n", report.n_margin_params));
            out.push_str(&format!("n_obs {}\n", report.n_obs));
            out.push_str(&format!("aic {}\n", report.aic));
            out.push_str(&format!("bic {}\n", report.bic));
            out.push_str(&format!("hqc {}\n", report.hqc));
            for rec in &report.blocks {
                out.push_str(&format!(
                    "block {} loglik {} n_obs {} fallback {}\n",
                    rec.label, rec.loglik, rec.n_obs, rec.fell_back_to_tau
                ));
            }
            for w in &report.warnings {
                out.push_str(&format!("warning {w}\n"));
            }
        }
        out.push_str("end\n");
        out
    }

    /// Parses the output of [`CoparModel::to_text`].
    pub fn from_text(text: &str) -> Result<(CoparModel, Option<FitReport>)> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let expect = |got: Option<&str>, want: &str| -> Result<()> {
            match got {
                Some(line) if line == want => Ok(()),
                other => Err(CoparError::parse(format!(
                    "expected {want:?} in model document, found {other:?}"
                ))),
            }
        };
        let keyed_value = |line: Option<&str>, key: &str| -> Result<String> {
            let line = line.ok_or_else(|| {
                CoparError::parse(format!("model document ended before {key:?}"))
            })?;
            let rest = line.strip_prefix(key).ok_or_else(|| {
                CoparError::parse(format!("expected {key:?} line, found {line:?}"))
            })?;
            Ok(rest.trim().to_string())
        };
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| CoparError::parse(format!("bad {what}: {s:?}")))
        };
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| CoparError::parse(format!("bad {what}: {s:?}")))
        };

        expect(lines.next(), "copar-model")?;
        let m = parse_usize(&keyed_value(lines.next(), "m")?, "series count")?;
        let k = parse_usize(&keyed_value(lines.next(), "k")?, "order")?;
        expect(lines.next(), "margins")?;
        let mut margins = Vec::with_capacity(m);
        for j in 1..=m {
            let line = lines.next().ok_or_else(|| {
                CoparError::parse("model document ended inside the margins section")
            })?;
            let mut toks = line.split_whitespace();
            let idx = parse_usize(toks.next().unwrap_or(""), "margin index")?;
            if idx != j {
                return Err(CoparError::parse(format!(
                    "margin lines must be in series order; expected {j}, found {idx}"
                )));
            }
            let family: MarginFamily = toks
                .next()
                .ok_or_else(|| CoparError::parse("margin line missing family"))?
                .parse()?;
            let mut params = Vec::with_capacity(family.n_params());
            for _ in 0..family.n_params() {
                params.push(parse_f64(
                    toks.next()
                        .ok_or_else(|| CoparError::parse("margin line missing parameter"))?,
                    "margin parameter",
                )?);
            }
            margins.push(Margin::from_params(family, &params)?);
        }
        expect(lines.next(), "blocks")?;
        let canonical = canonical_blocks(m, k);
        let mut blocks = BTreeMap::new();
        for _ in 0..canonical.len() {
            let line = lines.next().ok_or_else(|| {
                CoparError::parse("model document ended inside the blocks section")
            })?;
            let mut toks = line.split_whitespace();
            let label: BlockLabel = toks
                .next()
                .ok_or_else(|| CoparError::parse("block line missing label"))?
                .parse()?;
            let family: Family = toks
                .next()
                .ok_or_else(|| CoparError::parse("block line missing family"))?
                .parse()?;
            let mut params = Vec::with_capacity(family.n_params());
            for _ in 0..family.n_params() {
                params.push(parse_f64(
                    toks.next()
                        .ok_or_else(|| CoparError::parse("block line missing parameter"))?,
                    "block parameter",
                )?);
            }
            blocks.insert(label, PairCopula::from_params(family, &params)?);
        }
        let model = CoparModel::new(m, k, margins, blocks)?;

        let next = lines.next();
        match next {
            Some("end") => Ok((model, None)),
            Some("fit") => {
                let loglik = parse_f64(&keyed_value(lines.next(), "loglik")?, "loglik")?;
                let n_copula_params = parse_usize(
                    &keyed_value(lines.next(), "n_copula_params")?,
                    "n_copula_params",
                )?;
                let n_margin_params = parse_usize(
                    &keyed_value(lines.next(), "n_margin_params")?,
                    "n_margin_params",
                )?;
                let n_obs = parse_usize(&keyed_value(lines.next(), "n_obs")?, "n_obs")?;
                let aic = parse_f64(&keyed_value(lines.next(), "aic")?, "aic")?;
                let bic = parse_f64(&keyed_value(lines.next(), "bic")?, "bic")?;
                let hqc = parse_f64(&keyed_value(lines.next(), "hqc")?, "hqc")?;
                let mut records = Vec::new();
                let mut warnings = Vec::new();
                let mut tail = None;
                for line in lines.by_ref() {
                    if line == "end" {
                        tail = Some(());
                        break;
                    }
                    if let Some(rest) = line.strip_prefix("warning ") {
                        warnings.push(rest.to_string());
                        continue;
                    }
                    let rest = line.strip_prefix("block ").ok_or_else(|| {
                        CoparError::parse(format!("unexpected line in fit section: {line:?}"))
                    })?;
                    let mut toks = rest.split_whitespace();
                    let label: BlockLabel = toks
                        .next()
                        .ok_or_else(|| CoparError::parse("trace line missing label"))?
                        .parse()?;
                    let copula = *model.block(label).ok_or_else(|| {
                        CoparError::parse(format!("trace references unknown block {label}"))
                    })?;
                    let mut need = |key: &str| -> Result<String> {
                        let k = toks.next();
                        if k != Some(key) {
                            return Err(CoparError::parse(format!(
                                "trace line missing {key:?}"
                            )));
                        }
                        toks.next()
                            .map(str::to_string)
                            .ok_or_else(|| CoparError::parse(format!("trace {key} missing value")))
                    };
                    let loglik = parse_f64(&need("loglik")?, "trace loglik")?;
                    let n_obs = parse_usize(&need("n_obs")?, "trace n_obs")?;
                    let fallback = match need("fallback")?.as_str() {
                        "true" => true,
                        "false" => false,
                        other => {
                            return Err(CoparError::parse(format!(
                                "bad fallback flag: {other:?}"
                            )))
                        }
                    };
                    records.push(BlockFitRecord {
                        label,
                        copula,
                        loglik,
                        n_obs,
                        fell_back_to_tau: fallback,
                    });
                }
                if tail.is_none() {
                    return Err(CoparError::parse("model document missing final \"end\""));
                }
                let n_params = n_copula_params + n_margin_params;
                let report = FitReport {
                    loglik,
                    n_copula_params,
                    n_margin_params,
                    n_params,
                    n_obs,
                    aic,
                    bic,
                    hqc,
                    blocks: records,
                    warnings,
                };
                Ok((model, Some(report)))
            }
            other => Err(CoparError::parse(format!(
                "expected \"fit\" or \"end\", found {other:?}"
            ))),
        }
    }
}
