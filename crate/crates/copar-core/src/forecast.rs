//! Monte-Carlo forecasting from a fitted model: h-step point forecasts and
//! sample-quantile prediction intervals, in three modes — per-series
//! (unconditional), joint path sampling, and conditional on observed future
//! values of the pivot series.
//!
//! The sampler extends the rolling conditional-distribution window that also
//! drives estimation: after walking the history once, each forecast step
//! realizes the new variables in pivot order by inverting the column's
//! h-function chain at one uniform draw, then pushes the value through the
//! same column update the walker applies to observed data. Only the trailing
//! `k`-deep window per series is carried, so each step costs `O(m²k)`
//! regardless of history length. Copulas beyond lag `k` are independence, so
//! the chains never reach further back than the window the model retains.

use crate::copar::{
    block_position, h_or_pass, pit_stack, validate_series, walk_edges, BlockLabel, CoparModel,
    EdgeStep,
};
use crate::error::{CoparError, Result};
use crate::margins::Margin;
use crate::pair_copulas::PairCopula;
use crate::special::clamp_unit;
use crate::stats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// What is sampled and what is given during forecasting.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastMode {
    /// Sample every series; report each series' own predictive distribution.
    Unconditional,
    /// Identical sampling to [`ForecastMode::Unconditional`] (the joint draw
    /// is what both modes simulate); named separately because the joint
    /// sample paths are the quantity of interest, typically retained via
    /// `keep_samples`.
    Joint,
    /// The pivot series' future values are observed, not sampled: step `s`
    /// substitutes `pivot_values[s - 1]` (data scale) for series 1 and
    /// samples only the remaining series.
    Conditional {
        /// Observed future values of the pivot series, one per horizon step.
        pivot_values: Vec<f64>,
    },
}

/// A forecasting job: the model, the observed history, and what to produce.
#[derive(Debug, Clone)]
pub struct ForecastRequest<'a> {
    /// Fitted model to forecast from.
    pub model: &'a CoparModel,
    /// Observed history, one inner vector per series in column order.
    pub history: &'a [Vec<f64>],
    /// Number of future time steps, at least 1.
    pub horizon: usize,
    /// Monte-Carlo sample paths, at least 100.
    pub n_samples: usize,
    /// Interval level: the reported interval spans the `alpha/2` and
    /// `1 - alpha/2` sample quantiles.
    pub alpha: f64,
    /// Sampling mode.
    pub mode: ForecastMode,
    /// Restrict the result to one series (1-based). `None` reports every
    /// series the mode forecasts. In conditional mode the pivot series is
    /// given, not forecast, so selecting series 1 is an error.
    pub series: Option<usize>,
    /// Retain the sampled paths in the result.
    pub keep_samples: bool,
}

/// Point and interval forecast for one series at one horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesForecast {
    /// Series index, 1-based.
    pub series: usize,
    /// Horizon step, 1-based.
    pub horizon: usize,
    /// Sample mean of the predictive draws.
    pub point: f64,
    /// `alpha/2` sample quantile.
    pub lower: f64,
    /// `1 - alpha/2` sample quantile.
    pub upper: f64,
}

/// Forecast output: one row per reported series and horizon step, plus the
/// settings needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// Interval level used.
    pub alpha: f64,
    /// Number of sample paths used.
    pub n_samples: usize,
    /// Master seed used.
    pub seed: u64,
    /// Rows ordered by horizon step, then series.
    pub rows: Vec<SeriesForecast>,
    /// Sampled paths (data scale) when requested: `samples[path][step]` is
    /// an m-vector in series order. In conditional mode the pivot entries
    /// are the supplied values.
    pub samples: Option<Vec<Vec<Vec<f64>>>>,
}

impl ForecastResult {
    /// The row for one series and horizon step, if reported.
    pub fn row(&self, series: usize, horizon: usize) -> Option<&SeriesForecast> {
        self.rows
            .iter()
            .find(|r| r.series == series && r.horizon == horizon)
    }
}

/// The flattened model plus the window-advancing operations shared by the
/// sampler and the conditional-CDF constructor.
struct Engine<'a> {
    m: usize,
    k: usize,
    table: Vec<PairCopula>,
    margins: &'a [Margin],
}

impl<'a> Engine<'a> {
    fn new(model: &'a CoparModel) -> Engine<'a> {
        Engine {
            m: model.m(),
            k: model.k(),
            table: model.blocks().values().copied().collect(),
            margins: model.margins(),
        }
    }

    fn block(&self, label: BlockLabel) -> PairCopula {
        self.table[block_position(self.m, self.k, label)]
    }

    /// Walks the whole history once and returns the per-series windows of
    /// conditional distribution values at the history's end.
    fn history_state(&self, history: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let us = pit_stack(self.margins, history);
        walk_edges(
            self.m,
            self.k,
            history[0].len(),
            &us,
            |pos, _| EdgeStep::Absorb(self.table[pos]),
            |_, _, _, _| {},
        )
    }

    /// The `(copula, partner value)` pairs of the column realizing series
    /// `j` at absolute time `t_abs`, in tree order, independence edges
    /// omitted (they pass values through unchanged). Requires the state to
    /// have already advanced series `1..j` to `t_abs`.
    fn chain(&self, state: &[Vec<f64>], j: usize, t_abs: usize) -> Vec<(PairCopula, f64)> {
        let depth = self.k.min(t_abs - 1);
        let mut chain = Vec::new();
        for p in 1..j {
            for lag in 0..=depth {
                let cop = self.block(BlockLabel::Cross { from: p, to: j, lag });
                if !matches!(cop, PairCopula::Independence) {
                    chain.push((cop, state[p][lag]));
                }
            }
        }
        for lag in 1..=depth {
            let cop = self.block(BlockLabel::Serial { series: j, lag });
            if !matches!(cop, PairCopula::Independence) {
                chain.push((cop, state[j][lag - 1]));
            }
        }
        for q in j + 1..=self.m {
            for lag in 1..=depth {
                let cop = self.block(BlockLabel::Cross { from: q, to: j, lag });
                if !matches!(cop, PairCopula::Independence) {
                    chain.push((cop, state[q][lag - 1]));
                }
            }
        }
        chain
    }

    /// Advances the window with a realized PIT value for series `j` at
    /// absolute time `t_abs` — the same column update the history walker
    /// applies, so re-walking an extended history reproduces this state
    /// exactly.
    fn push_value(&self, state: &mut [Vec<f64>], j: usize, t_abs: usize, u: f64) {
        let depth = self.k.min(t_abs - 1);
        let mut direct = clamp_unit(u);
        for p in 1..j {
            for lag in 0..=depth {
                let cop = self.block(BlockLabel::Cross { from: p, to: j, lag });
                direct = h_or_pass(&cop, direct, state[p][lag]);
            }
        }
        let mut own = Vec::with_capacity(depth + 1);
        own.push(direct);
        for lag in 1..=depth {
            let cop = self.block(BlockLabel::Serial { series: j, lag });
            let w = state[j][lag - 1];
            own.push(h_or_pass(&cop, w, direct));
            direct = h_or_pass(&cop, direct, w);
        }
        for q in j + 1..=self.m {
            for lag in 1..=depth {
                let cop = self.block(BlockLabel::Cross { from: q, to: j, lag });
                let w = state[q][lag - 1];
                state[q][lag - 1] = h_or_pass(&cop, w, direct);
                direct = h_or_pass(&cop, direct, w);
            }
        }
        state[j] = own;
    }
}

/// Evaluates the conditional CDF encoded by a chain: composes the
/// h-functions in tree order.
fn cdf_along(chain: &[(PairCopula, f64)], u: f64) -> f64 {
    let mut x = clamp_unit(u);
    for &(cop, partner) in chain {
        x = cop.h(x, partner);
    }
    x
}

/// Inverts [`cdf_along`]: maps a uniform draw to the PIT value whose
/// conditional CDF equals it, by inverting the chain deepest tree first.
fn invert_along(chain: &[(PairCopula, f64)], w: f64) -> f64 {
    let mut x = clamp_unit(w);
    for &(cop, partner) in chain.iter().rev() {
        x = cop.h_inverse(x, partner);
    }
    x
}

fn validate_history(model: &CoparModel, history: &[Vec<f64>]) -> Result<usize> {
    let (m, t_len) = validate_series(history)?;
    if m != model.m() {
        return Err(CoparError::argument(format!(
            "model covers {} series but the history has {m}",
            model.m()
        )));
    }
    if t_len < model.k() {
        return Err(CoparError::argument(format!(
            "history length {t_len} is shorter than the model order {}",
            model.k()
        )));
    }
    Ok(t_len)
}

/// The conditional distribution function of series `target` one step past
/// the history, on the PIT scale: the returned function maps a PIT value `u`
/// of the next observation to `F(u | history, partial)`.
///
/// `partial` supplies the already-realized PIT values of the current step's
/// earlier-ordered series (`target - 1` of them, in series order) — empty
/// when the target is the pivot. The function is a composition of
/// h-functions along the target's column in the structure extended by one
/// time point; only the trailing `k`-window of the history enters, since all
/// deeper pair-copulas are independence.
pub fn conditional_next_cdf(
    model: &CoparModel,
    history: &[Vec<f64>],
    target: usize,
    partial: &[f64],
) -> Result<impl Fn(f64) -> f64 + use<>> {
    let t_len = validate_history(model, history)?;
    if target == 0 || target > model.m() {
        return Err(CoparError::argument(format!(
            "target series {target} out of range 1..={}",
            model.m()
        )));
    }
    if partial.len() != target - 1 {
        return Err(CoparError::argument(format!(
            "target series {target} needs {} partial value(s), got {}",
            target - 1,
            partial.len()
        )));
    }
    if partial.iter().any(|u| !u.is_finite() || !(0.0..=1.0).contains(u)) {
        return Err(CoparError::argument(
            "partial values must be probabilities in [0, 1]",
        ));
    }
    let engine = Engine::new(model);
    let mut state = engine.history_state(history);
    let t_abs = t_len + 1;
    for (p, &u) in partial.iter().enumerate() {
        engine.push_value(&mut state, p + 1, t_abs, u);
    }
    let chain = engine.chain(&state, target, t_abs);
    Ok(move |u: f64| cdf_along(&chain, u))
}

/// Runs a forecast: `n_samples` Monte-Carlo paths through the extended
/// structure, each path seeded with `seed + path index` and drawing one
/// uniform per sampled series per step, in pivot order. Points are sample
/// means; intervals are the `alpha/2` and `1 - alpha/2` sample quantiles.
/// Deterministic given the request and seed.
pub fn forecast(req: &ForecastRequest<'_>, seed: u64) -> Result<ForecastResult> {
    let model = req.model;
    let m = model.m();
    let t_len = validate_history(model, req.history)?;
    if req.horizon == 0 {
        return Err(CoparError::argument("forecast horizon must be at least 1"));
    }
    if req.n_samples < 100 {
        return Err(CoparError::argument(format!(
            "n_samples must be at least 100, got {}",
            req.n_samples
        )));
    }
    if !(req.alpha > 0.0 && req.alpha < 1.0) {
        return Err(CoparError::argument(format!(
            "alpha must lie strictly between 0 and 1, got {}",
            req.alpha
        )));
    }
    let pivot_us: Option<Vec<f64>> = match &req.mode {
        ForecastMode::Conditional { pivot_values } => {
            if pivot_values.len() != req.horizon {
                return Err(CoparError::argument(format!(
                    "conditional mode needs exactly {} pivot value(s), got {}",
                    req.horizon,
                    pivot_values.len()
                )));
            }
            if pivot_values.iter().any(|x| !x.is_finite()) {
                return Err(CoparError::argument(
                    "conditional pivot values must be finite",
                ));
            }
            Some(
                pivot_values
                    .iter()
                    .map(|&x| clamp_unit(model.margins()[0].pit(x)))
                    .collect(),
            )
        }
        _ => None,
    };
    let conditional = pivot_us.is_some();
    let reported: Vec<usize> = match req.series {
        Some(j) => {
            if j == 0 || j > m {
                return Err(CoparError::argument(format!(
                    "series {j} out of range 1..={m}"
                )));
            }
            if conditional && j == 1 {
                return Err(CoparError::argument(
                    "conditional mode supplies the pivot series; only non-pivot series are conditionally forecast",
                ));
            }
            vec![j]
        }
        None if conditional => (2..=m).collect(),
        None => (1..=m).collect(),
    };

    let engine = Engine::new(model);
    let base_state = engine.history_state(req.history);
    let mut draws: Vec<Vec<Vec<f64>>> =
        vec![vec![Vec::with_capacity(req.n_samples); m]; req.horizon];
    let mut samples: Option<Vec<Vec<Vec<f64>>>> = req
        .keep_samples
        .then(|| Vec::with_capacity(req.n_samples));

    for path in 0..req.n_samples {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(path as u64));
        let mut state = base_state.clone();
        let mut path_values: Vec<Vec<f64>> = Vec::new();
        for step in 1..=req.horizon {
            let t_abs = t_len + step;
            let mut step_values = vec![0.0; m];
            for j in 1..=m {
                let u = if j == 1 {
                    if let Some(pivot_us) = &pivot_us {
                        pivot_us[step - 1]
                    } else {
                        invert_along(&engine.chain(&state, j, t_abs), rng.gen::<f64>())
                    }
                } else {
                    invert_along(&engine.chain(&state, j, t_abs), rng.gen::<f64>())
                };
                engine.push_value(&mut state, j, t_abs, u);
                let x = model.margins()[j - 1].quantile(clamp_unit(u))?;
                draws[step - 1][j - 1].push(x);
                step_values[j - 1] = x;
            }
            if samples.is_some() {
                path_values.push(step_values);
            }
        }
        if let Some(samples) = samples.as_mut() {
            samples.push(path_values);
        }
    }

    let lower_p = req.alpha / 2.0;
    let upper_p = 1.0 - req.alpha / 2.0;
    let mut rows = Vec::with_capacity(req.horizon * reported.len());
    for step in 1..=req.horizon {
        for &j in &reported {
            let values = &mut draws[step - 1][j - 1];
            let point = stats::mean(values);
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
            let lower = stats::empirical_quantile(values, lower_p)?;
            let upper = stats::empirical_quantile(values, upper_p)?;
            rows.push(SeriesForecast {
                series: j,
                horizon: step,
                point,
                lower,
                upper,
            });
        }
    }
    Ok(ForecastResult {
        alpha: req.alpha,
        n_samples: req.n_samples,
        seed,
        rows,
        samples,
    })
}
