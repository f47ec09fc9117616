//! The four subcommand bodies, kept free of process-exit concerns: errors
//! come back as either usage problems or hard failures and `main` maps
//! them to exit codes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use gape::data::{self, load_and_validate, write_dataset, SyntheticError, SyntheticSpec};
use gape::growth::annualized_growth;
use gape::report::{self, write_backtest_reports};
use gape::valuation::{
    ga_pe, peg_payback_period, peg_ratio, solvency_bound, GaPeOutcome, ValuationInputs,
};

use crate::config::{ReturnsMode, RunConfig};

pub enum CmdError {
    /// Caller mistake: bad flags, malformed config or spec, out-of-domain
    /// metric inputs. Exit code 3.
    Usage(String),
    /// Environment or data failure: unreadable files, integrity
    /// violations, formation failures. Exit code 2.
    Hard(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTICS: i32 = 1;
pub const EXIT_HARD: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

/// `gape validate`: load the datasets and print the diagnostic report.
pub fn cmd_validate(data_dir: &Path) -> Result<i32, CmdError> {
    let (_, report) = load_and_validate(data_dir).map_err(|e| CmdError::Hard(e.to_string()))?;
    if report.is_clean() {
        println!("ok: datasets are clean");
        Ok(EXIT_OK)
    } else {
        print!("{report}");
        Ok(EXIT_DIAGNOSTICS)
    }
}

pub struct MetricRequest {
    pub price: f64,
    pub eps: Option<f64>,
    pub growth: Option<f64>,
    pub eps_history: Option<Vec<f64>>,
    pub window: u32,
}

/// `gape metric`: one-shot valuation report as JSON on stdout.
pub fn cmd_metric(request: &MetricRequest) -> Result<i32, CmdError> {
    let usage = |msg: String| CmdError::Usage(msg);
    let (eps, growth) = match (&request.eps_history, request.eps, request.growth) {
        (Some(history), None, None) => {
            let k = request.window as usize;
            if history.len() < k + 1 {
                return Err(usage(format!(
                    "eps history of {} entries cannot span a {k}-year window",
                    history.len()
                )));
            }
            let e_end = history[history.len() - 1];
            let e_start = history[history.len() - 1 - k];
            let growth = annualized_growth(e_end, e_start, request.window)
                .map_err(|e| usage(e.to_string()))?;
            (e_end, growth)
        }
        (None, Some(eps), Some(growth)) => (eps, growth),
        _ => {
            return Err(usage(
                "provide either --eps and --growth, or --eps-history (with --window)".into(),
            ))
        }
    };

    let inputs =
        ValuationInputs::new(request.price, eps, growth).map_err(|e| usage(e.to_string()))?;
    let bound = solvency_bound(request.price, eps).expect("inputs validated");
    let outcome = match ga_pe(&inputs) {
        GaPeOutcome::Finite { years } => json!({ "finite": true, "years": years }),
        GaPeOutcome::Infinite { payback_proportion } => json!({
            "finite": false,
            "payback_proportion": payback_proportion,
            "note": "growth is at or below the solvency bound; cumulative earnings never reach the price",
        }),
    };
    let (peg, peg_note) = match peg_ratio(inputs.pe(), growth * 100.0) {
        Ok(value) => (json!(value), None),
        Err(_) => (
            json!(null),
            Some("PEG is undefined for non-positive growth"),
        ),
    };
    let mut body = json!({
        "price": request.price,
        "eps": eps,
        "growth": growth,
        "pe": inputs.pe(),
        "solvency_bound": bound,
        "gape": outcome,
        "peg": peg,
        "peg_payback_years": peg_payback_period(&inputs),
    });
    if let Some(note) = peg_note {
        body["peg_note"] = json!(note);
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&body).expect("valid JSON")
    );
    Ok(EXIT_OK)
}

/// Manifest echoed beside the backtest artifacts: the resolved config plus
/// a digest of every input file. Identical manifests imply byte-identical
/// outputs.
#[derive(Serialize)]
struct RunManifest<'a> {
    config: &'a RunConfig,
    input_digests: BTreeMap<String, String>,
}

/// `gape backtest`: run the protocol and write the report artifacts.
pub fn cmd_backtest(config: &RunConfig) -> Result<i32, CmdError> {
    let hard = |msg: String| CmdError::Hard(msg);
    let (universe, report) =
        load_and_validate(&config.data_dir).map_err(|e| hard(e.to_string()))?;
    if !report.is_clean() {
        eprint!("{report}");
        eprintln!("warning: proceeding despite diagnostics; flagged securities are excluded from formation");
    }
    let universe = match config.returns_mode {
        ReturnsMode::Total => universe,
        ReturnsMode::PriceOnly => universe.with_price_only_returns(),
    };

    let result = gape::portfolio::run_backtest(&universe, &config.backtest_config())
        .map_err(|e| hard(e.to_string()))?;
    write_backtest_reports(&config.output_dir, &universe, &result, &config.cap_sweep)
        .map_err(|e| hard(e.to_string()))?;

    let mut input_digests = BTreeMap::new();
    for file in [
        "prices.csv",
        "earnings_quarterly.csv",
        "delistings.csv",
        "links.csv",
        "factors.csv",
    ] {
        let digest =
            report::file_digest(&config.data_dir.join(file)).map_err(|e| hard(e.to_string()))?;
        input_digests.insert(file.to_string(), digest);
    }
    let manifest = RunManifest {
        config,
        input_digests,
    };
    report::write_json_atomic(&config.output_dir.join("run_manifest.json"), &manifest)
        .map_err(|e| hard(e.to_string()))?;

    for file in report::BACKTEST_ARTIFACTS
        .iter()
        .copied()
        .chain(["run_manifest.json"])
    {
        println!("wrote {}", config.output_dir.join(file).display());
    }
    Ok(EXIT_OK)
}

/// `gape synth`: generate the synthetic datasets and their manifest.
pub fn cmd_synth(spec_file: &Path, seed: u64, output_dir: &Path) -> Result<i32, CmdError> {
    let contents = std::fs::read_to_string(spec_file)
        .map_err(|e| CmdError::Hard(format!("cannot read {}: {e}", spec_file.display())))?;
    let spec: SyntheticSpec = serde_json::from_str(&contents)
        .map_err(|e| CmdError::Usage(format!("{}: {e}", spec_file.display())))?;
    let (dataset, manifest) = data::generate_synthetic(&spec, seed).map_err(|e| match e {
        SyntheticError::Infeasible(msg) => CmdError::Usage(msg),
    })?;
    write_dataset(output_dir, &dataset).map_err(|e| CmdError::Hard(e.to_string()))?;
    report::write_json_atomic(&output_dir.join("manifest.json"), &manifest)
        .map_err(|e| CmdError::Hard(e.to_string()))?;
    println!(
        "wrote {} firms x {} months under {}",
        spec.firm_count,
        spec.months,
        output_dir.display()
    );
    Ok(EXIT_OK)
}
