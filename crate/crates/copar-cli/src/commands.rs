//! The six commands: fit, order-select, forecast, granger, simulate,
//! evaluate. Each resolves its settings, runs the corresponding library
//! operations, and emits a deterministic delimiter-separated table (or model
//! document) to stdout or `--out`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use copar_core::copar::{self, CoparModel};
use copar_core::error::CoparError;
use copar_core::forecast::{forecast, ForecastMode, ForecastRequest, ForecastResult};
use copar_core::inference::{fit_var, granger_test, mean_interval_score, rmse, var_forecast};
use copar_core::stats::empirical_quantile;

use crate::config::{ModeSpec, RunConfig};
use crate::data::{ingest_csv, Dataset};
use crate::CliError;

/// Maps library errors onto exit classes: argument/domain violations are
/// usage errors (exit 2), everything else is a runtime failure (exit 1).
fn core_err(e: CoparError) -> CliError {
    let msg = e.to_string();
    match e {
        CoparError::Argument(_) => CliError::Usage(msg),
        _ => CliError::Runtime(msg),
    }
}

/// Shortest round-trip rendering, switching to scientific notation for
/// tiny magnitudes (plain `Display` would print hundreds of zeros).
fn fmt_g(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Prints the header to stdout, then the body to stdout or `--out`.
fn emit(cfg: &RunConfig, header: &str, body: &str) -> Result<(), CliError> {
    print!("{header}");
    match &cfg.out {
        Some(path) => {
            write_file(path, &format!("{header}{body}"))?;
            println!("# wrote {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = RunConfig::require(&cfg.data, "data")?;
    ingest_csv(&path)
}

fn load_model(path: &Path) -> Result<CoparModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    // Model files written with --out carry leading `#` provenance lines.
    let document: String = text
        .lines()
        .filter(|line| !line.trim_start().starts_with('#'))
        .map(|line| format!("{line}\n"))
        .collect();
    let (model, _) = CoparModel::from_text(&document)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(model)
}

/// Fits a model of order `--order` to the data, optionally refining all
/// copula parameters jointly, and emits the model document.
pub fn cmd_fit(cfg: &RunConfig) -> Result<(), CliError> {
    let header = cfg.header(
        "fit",
        &["data", "families", "margins", "order", "out", "refine", "seed"],
    );
    let dataset = load_dataset(cfg)?;
    let k = RunConfig::require(&cfg.order, "order")?;
    let margin_families = cfg.margin_families(dataset.m())?;
    let (mut model, mut report) =
        copar::fit_copar_sequential(&dataset.columns, k, &margin_families, &cfg.families)
            .map_err(core_err)?;
    if cfg.refine {
        let (refined, refined_report) =
            copar::refine_mle(&model, &dataset.columns).map_err(core_err)?;
        model = refined;
        report = refined_report;
    }
    emit(cfg, &header, &model.to_text(Some(&report)))
}

/// Compares model orders `1..=k_max` by information criterion and emits a
/// per-order table with the chosen order marked.
pub fn cmd_order_select(cfg: &RunConfig) -> Result<(), CliError> {
    let header = cfg.header(
        "order-select",
        &["criterion", "data", "k-max", "margins", "out", "seed"],
    );
    let dataset = load_dataset(cfg)?;
    let k_max = RunConfig::require(&cfg.k_max, "k-max")?;
    let margin_families = cfg.margin_families(dataset.m())?;
    let (best_k, reports) =
        copar::select_order(&dataset.columns, k_max, cfg.criterion, &margin_families)
            .map_err(core_err)?;
    let mut body = String::from("k,loglik,n_params,aic,bic,hqc,chosen\n");
    for (idx, report) in reports.iter().enumerate() {
        let k = idx + 1;
        let _ = writeln!(
            body,
            "{k},{},{},{},{},{},{}",
            report.loglik,
            report.n_params,
            report.aic,
            report.bic,
            report.hqc,
            u8::from(k == best_k)
        );
    }
    emit(cfg, &header, &body)
}

/// Builds the sampling mode from the resolved config.
fn forecast_mode(cfg: &RunConfig) -> Result<ForecastMode, CliError> {
    Ok(match cfg.mode {
        ModeSpec::Unconditional => ForecastMode::Unconditional,
        ModeSpec::Joint => ForecastMode::Joint,
        ModeSpec::Conditional => ForecastMode::Conditional {
            pivot_values: RunConfig::require(&cfg.pivot, "pivot")?,
        },
    })
}

/// Forecasts `--horizon` steps ahead from the end of the data, using either
/// a saved model (`--model`) or a fresh sequential fit (`--order`).
pub fn cmd_forecast(cfg: &RunConfig) -> Result<(), CliError> {
    let header = cfg.header(
        "forecast",
        &[
            "alpha", "data", "families", "horizon", "margins", "mode", "model",
            "order", "out", "pivot", "plot-data", "samples", "seed", "series",
        ],
    );
    let dataset = load_dataset(cfg)?;
    let model = match &cfg.model {
        Some(path) => load_model(path)?,
        None => {
            let k = RunConfig::require(&cfg.order, "order")
                .map_err(|_| CliError::Usage("forecast needs --model or --order".into()))?;
            let margin_families = cfg.margin_families(dataset.m())?;
            copar::fit_copar_sequential(&dataset.columns, k, &margin_families, &cfg.families)
                .map_err(core_err)?
                .0
        }
    };
    if model.m() != dataset.m() {
        return Err(CliError::Usage(format!(
            "model covers {} series but the data has {}",
            model.m(),
            dataset.m()
        )));
    }
    let request = ForecastRequest {
        model: &model,
        history: &dataset.columns,
        horizon: cfg.horizon,
        n_samples: cfg.samples,
        alpha: cfg.alpha,
        mode: forecast_mode(cfg)?,
        series: cfg.series,
        keep_samples: cfg.plot_data.is_some(),
    };
    let result = forecast(&request, cfg.seed).map_err(core_err)?;
    let mut body = String::from("series,horizon,point,lower,upper\n");
    for row in &result.rows {
        let _ = writeln!(
            body,
            "{},{},{},{},{}",
            dataset.names[row.series - 1],
            row.horizon,
            row.point,
            row.lower,
            row.upper
        );
    }
    if let Some(path) = &cfg.plot_data {
        write_file(path, &fan_chart(&result, &dataset.names)?)?;
        println!("# wrote {}", path.display());
    }
    emit(cfg, &header, &body)
}

/// Long-format fan-chart data from the kept sample paths: one row per
/// reported series, horizon step, and quantile of the predictive sample.
fn fan_chart(result: &ForecastResult, names: &[String]) -> Result<String, CliError> {
    let samples = result
        .samples
        .as_ref()
        .expect("sampling keeps paths when plot data is requested");
    let mut reported: Vec<(usize, usize)> = result
        .rows
        .iter()
        .map(|row| (row.horizon, row.series))
        .collect();
    reported.sort_unstable();
    let mut body = String::from("series,horizon,quantile,value\n");
    for (step, series) in reported {
        let mut draws: Vec<f64> = samples
            .iter()
            .map(|path| path[step - 1][series - 1])
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        for i in 1..=19 {
            let p = i as f64 / 20.0;
            let value = empirical_quantile(&draws, p).map_err(core_err)?;
            let _ = writeln!(body, "{},{step},{p},{value}", names[series - 1]);
        }
    }
    Ok(body)
}

/// Runs the likelihood-ratio lead-lag test for every ordered pair of series
/// and reports each direction's statistic and decision at `--alpha`.
pub fn cmd_granger(cfg: &RunConfig) -> Result<(), CliError> {
    let header = cfg.header(
        "granger",
        &["alpha", "data", "families", "margins", "order", "out", "seed"],
    );
    let dataset = load_dataset(cfg)?;
    let k = RunConfig::require(&cfg.order, "order")?;
    let margin_families = cfg.margin_families(dataset.m())?;
    let mut body = String::from("cause,effect,statistic,df,p_value,causal\n");
    for cause in 1..=dataset.m() {
        for effect in 1..=dataset.m() {
            if cause == effect {
                continue;
            }
            let r = granger_test(
                &dataset.columns,
                k,
                (cause, effect),
                &margin_families,
                &cfg.families,
            )
            .map_err(core_err)?;
            let _ = writeln!(
                body,
                "{},{},{},{},{},{}",
                dataset.names[cause - 1],
                dataset.names[effect - 1],
                r.statistic,
                r.df,
                fmt_g(r.p_value),
                if r.p_value < cfg.alpha { "yes" } else { "no" }
            );
        }
    }
    emit(cfg, &header, &body)
}

/// Simulates `--length` joint observations from a saved model and emits
/// them as CSV ready for re-ingestion.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let header = cfg.header("simulate", &["length", "model", "out", "seed"]);
    let path = RunConfig::require(&cfg.model, "model")?;
    let length = RunConfig::require(&cfg.length, "length")?;
    let model = load_model(&path)?;
    let columns = copar::simulate(&model, length, cfg.seed).map_err(core_err)?;
    let dataset = Dataset {
        names: (1..=model.m()).map(|j| format!("s{j}")).collect(),
        timestamps: None,
        columns,
    };
    emit(cfg, &header, &dataset.to_csv())
}

/// One method's rolling one-step forecasts over the test split.
#[derive(Debug, Clone, Default)]
struct MethodTrack {
    points: Vec<f64>,
    lowers: Vec<f64>,
    uppers: Vec<f64>,
}

impl MethodTrack {
    fn push(&mut self, point: f64, lower: f64, upper: f64) {
        self.points.push(point);
        self.lowers.push(lower);
        self.uppers.push(upper);
    }
}

/// The methods compared by `evaluate`, in reporting order. The joint row
/// repeats the unconditional one because a one-step-ahead joint draw and an
/// unconditional draw are the same sampler.
const METHODS: [&str; 4] = [
    "copar-unconditional",
    "copar-joint",
    "copar-conditional",
    "var",
];

/// Renders the RMSE and MIS tables (methods × ordered pairs) from the
/// rolling tracks. `per_pair` holds, per ordered pair, the four method
/// tracks in [`METHODS`] order plus the realized test values.
fn metric_tables(
    labels: &[String],
    per_pair: &[(Vec<MethodTrack>, Vec<f64>)],
    alpha: f64,
) -> Result<String, CliError> {
    let mut rmse_rows = vec![String::new(); METHODS.len()];
    let mut mis_rows = vec![String::new(); METHODS.len()];
    for (tracks, actuals) in per_pair {
        for (row, track) in tracks.iter().enumerate() {
            let e = rmse(actuals, &track.points).map_err(core_err)?;
            let s = mean_interval_score(&track.lowers, &track.uppers, actuals, alpha)
                .map_err(core_err)?;
            let _ = write!(rmse_rows[row], ",{e}");
            let _ = write!(mis_rows[row], ",{s}");
        }
    }
    let mut body = String::new();
    let head = format!("method,{}\n", labels.join(","));
    body.push_str("# rmse\n");
    body.push_str(&head);
    for (name, cells) in METHODS.iter().zip(&rmse_rows) {
        let _ = writeln!(body, "{name}{cells}");
    }
    body.push_str("# mis\n");
    body.push_str(&head);
    for (name, cells) in METHODS.iter().zip(&mis_rows) {
        let _ = writeln!(body, "{name}{cells}");
    }
    Ok(body)
}

/// Rolling out-of-sample comparison. For every ordered pair of series
/// (target|companion) a bivariate model with the companion as pivot is
/// refitted sequentially at each test step on all data released so far,
/// and the target's next value is forecast unconditionally, jointly,
/// conditionally on the companion's released value, and by a VAR baseline
/// fitted on the same window. Test values never enter any fit before their
/// prediction is recorded.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let header = cfg.header(
        "evaluate",
        &[
            "alpha", "data", "families", "margins", "order", "out", "samples",
            "seed", "split",
        ],
    );
    let dataset = load_dataset(cfg)?;
    let k = RunConfig::require(&cfg.order, "order")?;
    let split = RunConfig::require(&cfg.split, "split")?;
    let t_len = dataset.t_len();
    if split < 5 * k + 5 || split >= t_len {
        return Err(CliError::Usage(format!(
            "split: need {} <= split < {t_len} (rows before the split train the first fit)",
            5 * k + 5
        )));
    }
    let margin_families = cfg.margin_families(dataset.m())?;

    let mut labels = Vec::new();
    let mut per_pair = Vec::new();
    for target in 1..=dataset.m() {
        for companion in 1..=dataset.m() {
            if target == companion {
                continue;
            }
            labels.push(format!(
                "{}|{}",
                dataset.names[target - 1],
                dataset.names[companion - 1]
            ));
            let pair_mf = [
                margin_families[companion - 1],
                margin_families[target - 1],
            ];
            let pair_idx = per_pair.len();
            let mut tracks = vec![MethodTrack::default(); METHODS.len()];
            let mut actuals = Vec::with_capacity(t_len - split);
            for t in split..t_len {
                let train = vec![
                    dataset.columns[companion - 1][..t].to_vec(),
                    dataset.columns[target - 1][..t].to_vec(),
                ];
                let step_seed = cfg.seed.wrapping_add(
                    ((pair_idx * t_len + t) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                let (model, _) =
                    copar::fit_copar_sequential(&train, k, &pair_mf, &cfg.families)
                        .map_err(core_err)?;
                let request = ForecastRequest {
                    model: &model,
                    history: &train,
                    horizon: 1,
                    n_samples: cfg.samples,
                    alpha: cfg.alpha,
                    mode: ForecastMode::Unconditional,
                    series: Some(2),
                    keep_samples: false,
                };
                let uncond = forecast(&request, step_seed).map_err(core_err)?;
                let released = dataset.columns[companion - 1][t];
                let conditional = forecast(
                    &ForecastRequest {
                        mode: ForecastMode::Conditional {
                            pivot_values: vec![released],
                        },
                        ..request
                    },
                    step_seed,
                )
                .map_err(core_err)?;
                let var = fit_var(&train, k).map_err(core_err)?;
                let var_fc = var_forecast(&var, &train, 1, cfg.alpha).map_err(core_err)?;

                let u = uncond.row(2, 1).expect("requested series");
                tracks[0].push(u.point, u.lower, u.upper);
                tracks[1].push(u.point, u.lower, u.upper);
                let c = conditional.row(2, 1).expect("requested series");
                tracks[2].push(c.point, c.lower, c.upper);
                let v = var_fc.row(2, 1).expect("var reports every series");
                tracks[3].push(v.point, v.lower, v.upper);
                actuals.push(dataset.columns[target - 1][t]);
            }
            per_pair.push((tracks, actuals));
        }
    }
    let body = metric_tables(&labels, &per_pair, cfg.alpha)?;
    emit(cfg, &header, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_zero_rmse_and_width_mis() {
        let actuals = vec![1.0, -2.0, 0.5, 3.25];
        let mut track = MethodTrack::default();
        for &x in &actuals {
            track.push(x, x - 1.0, x + 1.0);
        }
        let per_pair = vec![(vec![track.clone(), track.clone(), track.clone(), track], actuals)];
        let body = metric_tables(&["y|x".into()], &per_pair, 0.05).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "# rmse");
        assert_eq!(lines[1], "method,y|x");
        for line in &lines[2..6] {
            let (_, value) = line.split_once(',').unwrap();
            assert_eq!(value, "0", "RMSE must be exactly zero in {line:?}");
        }
        assert_eq!(lines[6], "# mis");
        for line in &lines[8..12] {
            let (_, value) = line.split_once(',').unwrap();
            assert_eq!(value, "2", "covered intervals score their width in {line:?}");
        }
    }

    #[test]
    fn metric_tables_keep_methods_by_row_and_pairs_by_column() {
        let mk = |points: &[f64]| {
            let mut track = MethodTrack::default();
            for &x in points {
                track.push(x, x - 1.0, x + 1.0);
            }
            track
        };
        let actuals = vec![0.0, 0.0];
        let per_pair = vec![
            (
                vec![mk(&[0.0, 0.0]), mk(&[1.0, 1.0]), mk(&[2.0, 2.0]), mk(&[3.0, 3.0])],
                actuals.clone(),
            ),
            (
                vec![mk(&[4.0, 4.0]), mk(&[5.0, 5.0]), mk(&[6.0, 6.0]), mk(&[7.0, 7.0])],
                actuals,
            ),
        ];
        let body = metric_tables(&["a|b".into(), "b|a".into()], &per_pair, 0.1).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[1], "method,a|b,b|a");
        assert_eq!(lines[2], "copar-unconditional,0,4");
        assert_eq!(lines[3], "copar-joint,1,5");
        assert_eq!(lines[4], "copar-conditional,2,6");
        assert_eq!(lines[5], "var,3,7");
    }
}
