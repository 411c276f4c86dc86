use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use triplet_core::budget::budget_report;
use triplet_core::config::{load_config, LoadedConfig, BUNDLED_PAPER_TABLE1};
use triplet_core::detection::{simulate, ChainModel, SimMode};
use triplet_core::fock::{apply_first_order_cascade, evolve_exact, triplet_probability, CascadeParams, QuantumState};
use triplet_core::histogram::{analyze_peak, read_histogram_csv, to_csv_string, DEFAULT_PEAK_WINDOW};
use triplet_core::phasematch::{
    min_phasematch_temperature, ppktp_output_wavelength, solve_pair_wavelengths, tuning_curve,
};
use triplet_core::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "triplet",
    version,
    about = "Cascaded down-conversion photon-triplet simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment file path or bundled config name
    #[arg(long, default_value = BUNDLED_PAPER_TABLE1)]
    config: String,
    /// Override the config's master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (or directory for `simulate`); stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Predicted triplet rate, P_SPDC estimates and dark-count budget as JSON
    Budget {
        #[command(flatten)]
        common: Common,
    },
    /// Phase matching at one temperature (JSON) or a tuning curve (CSV)
    Phasematch {
        #[command(flatten)]
        common: Common,
        /// Pump wavelength into the PPLN crystal, nm
        #[arg(long, conflicts_with = "ppktp_temp_c")]
        pump_nm: Option<f64>,
        /// Derive the pump wavelength from the PPKTP crystal temperature
        #[arg(long)]
        ppktp_temp_c: Option<f64>,
        /// PPLN temperature; omit for a temperature sweep
        #[arg(long)]
        temp_c: Option<f64>,
        #[arg(long, default_value_t = 40.0)]
        t_start_c: f64,
        #[arg(long, default_value_t = 90.0)]
        t_stop_c: f64,
        #[arg(long, default_value_t = 0.5)]
        t_step_c: f64,
    },
    /// Monte Carlo of the detector chain; writes histogram.csv and counters.json
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SimMode>,
        /// D2-D3 delay override, ns
        #[arg(long, allow_hyphen_values = true)]
        delay_ns: Option<f64>,
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Peak analysis of a histogram CSV
    Analyze {
        #[command(flatten)]
        common: Common,
        csv: PathBuf,
        /// Acquisition time of the histogram; defaults to the config duration
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_PEAK_WINDOW)]
        window: usize,
    },
    /// Four-mode cascade amplitudes as JSON
    Fock {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda1: f64,
        #[arg(long)]
        lambda2: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        alpha_re: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha_im: f64,
        /// Also run the full truncated evolution
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = triplet_core::fock::DEFAULT_N_MAX)]
        n_max: u8,
    },
}

fn parse_mode(s: &str) -> Result<SimMode, String> {
    match s {
        "aggregated" => Ok(SimMode::Aggregated),
        "event_driven" | "event-driven" => Ok(SimMode::EventDriven),
        _ => Err(format!("unknown mode `{s}` (aggregated | event_driven)")),
    }
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidParameter { .. } | Error::Csv { .. } | Error::Io { .. } => {
                Failure::Usage(e.into())
            }
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load(common: &Common) -> Result<LoadedConfig, Failure> {
    let cfg = load_config(&common.config)?;
    Ok(match common.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn envelope(cfg: &LoadedConfig, key: &str, payload: impl Serialize) -> anyhow::Result<Value> {
    Ok(json!({
        "version": VERSION,
        "config": serde_json::to_value(cfg)?,
        key: serde_json::to_value(payload)?,
    }))
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn state_json(s: &QuantumState) -> Value {
    let amps: Vec<Value> = s
        .amplitudes()
        .map(|(k, a)| json!({ "occupations": k.occupations(), "re": a.re, "im": a.im }))
        .collect();
    json!({
        "kind": s.kind(),
        "truncation": s.truncation(),
        "norm_sqr": s.norm_sqr(),
        "amplitudes": amps,
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Budget { common } => {
            let cfg = load(&common)?;
            let report = budget_report(&cfg.budget_inputs, cfg.propagation_samples, cfg.experiment.seed)?;
            let v = envelope(&cfg, "report", &report)?;
            emit(&pretty(&v)?, common.out.as_deref())?;
        }
        Command::Phasematch {
            common,
            pump_nm,
            ppktp_temp_c,
            temp_c,
            t_start_c,
            t_stop_c,
            t_step_c,
        } => {
            let cfg = load(&common)?;
            let pump = match (pump_nm, ppktp_temp_c) {
                (Some(p), _) => p,
                (None, Some(t)) => {
                    let cal = cfg
                        .ppktp
                        .as_ref()
                        .ok_or_else(|| Failure::Usage(anyhow::anyhow!("config has no crystal.ppktp calibration")))?;
                    ppktp_output_wavelength(cal, t)?
                }
                (None, None) => {
                    return Err(Failure::Usage(anyhow::anyhow!(
                        "--pump-nm or --ppktp-temp-c is required"
                    )))
                }
            };
            match temp_c {
                Some(t) => {
                    let crystal = cfg.crystal.at_temperature(t);
                    let pair = solve_pair_wavelengths(&crystal, pump)?;
                    let cutoff = min_phasematch_temperature(&crystal, pump).ok();
                    let result = json!({
                        "pump_nm": pump,
                        "temperature_c": t,
                        "poling_period_um": crystal.poling_period_um,
                        "phase_matched": pair.is_some(),
                        "status": if pair.is_some() { "phase_matched" } else { "no phase matching" },
                        "signal_nm": pair.map(|p| p.signal_wavelength_nm),
                        "idler_nm": pair.map(|p| p.idler_wavelength_nm),
                        "min_phasematch_temperature_c": cutoff.map(|c| c.temperature_c),
                    });
                    emit(&pretty(&envelope(&cfg, "phasematch", result)?)?, common.out.as_deref())?;
                }
                None => {
                    if !(t_step_c > 0.0 && t_stop_c >= t_start_c) {
                        return Err(Failure::Usage(anyhow::anyhow!("invalid temperature sweep")));
                    }
                    let n = ((t_stop_c - t_start_c) / t_step_c + 1e-9).floor() as usize;
                    let temps: Vec<f64> = (0..=n).map(|i| t_start_c + i as f64 * t_step_c).collect();
                    let curve = tuning_curve(&cfg.crystal, pump, &temps)?;
                    let mut csv = String::from("temperature_C,signal_nm,idler_nm\n");
                    for (t, p) in curve {
                        if let Some(p) = p {
                            csv.push_str(&format!(
                                "{t},{:.4},{:.4}\n",
                                p.signal_wavelength_nm, p.idler_wavelength_nm
                            ));
                        }
                    }
                    emit(&csv, common.out.as_deref())?;
                }
            }
        }
        Command::Simulate {
            common,
            mode,
            delay_ns,
            duration_s,
        } => {
            let mut cfg = load(&common)?;
            if let Some(m) = mode {
                cfg.experiment.mode = m;
                cfg.file.simulation.mode = m;
            }
            if let Some(d) = delay_ns {
                cfg.experiment.d2_d3_delay_ns = d;
                cfg.file.simulation.d2_d3_delay_ns = d;
            }
            if let Some(d) = duration_s {
                cfg.experiment.duration_s = d;
                cfg.file.simulation.duration_s = d;
            }
            let result = simulate(&cfg.experiment)?;
            let expected = ChainModel::new(&cfg.experiment)?.expected();
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let csv_path = dir.join("histogram.csv");
            std::fs::write(&csv_path, to_csv_string(&result.histogram))
                .with_context(|| format!("writing {}", csv_path.display()))?;
            let sidecar = envelope(
                &cfg,
                "result",
                json!({
                    "seed": result.seed,
                    "mode": result.mode,
                    "d2_d3_delay_ns": result.d2_d3_delay_ns,
                    "counters": result.counters,
                    "expected": expected,
                    "histogram_csv": "histogram.csv",
                }),
            )?;
            let json_path = dir.join("counters.json");
            std::fs::write(&json_path, pretty(&sidecar)?)
                .with_context(|| format!("writing {}", json_path.display()))?;
        }
        Command::Analyze {
            common,
            csv,
            duration_s,
            window,
        } => {
            let cfg = load(&common)?;
            let duration = duration_s.unwrap_or(cfg.experiment.duration_s);
            let h = read_histogram_csv(&csv, duration)?;
            let report = analyze_peak(&h, window)?;
            emit(&pretty(&envelope(&cfg, "peak", report)?)?, common.out.as_deref())?;
        }
        Command::Fock {
            common,
            lambda1,
            lambda2,
            alpha_re,
            alpha_im,
            exact,
            n_max,
        } => {
            let cfg = load(&common)?;
            let params = CascadeParams::new(lambda1, lambda2, num_complex::Complex64::new(alpha_re, alpha_im))?;
            for w in params.perturbative_warnings() {
                eprintln!("warning: {w}");
            }
            let first = apply_first_order_cascade(&params)?;
            let exact_state = if exact {
                Some(evolve_exact(&params, n_max)?)
            } else {
                None
            };
            let payload = json!({
                "lambda1": lambda1,
                "lambda2": lambda2,
                "alpha": { "re": alpha_re, "im": alpha_im },
                "triplet_probability": triplet_probability(&params)?,
                "first_order": state_json(&first),
                "exact": exact_state.as_ref().map(state_json),
            });
            emit(&pretty(&envelope(&cfg, "fock", payload)?)?, common.out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, err) = match &f {
                Failure::Usage(e) => ("usage", e),
                Failure::Runtime(e) => ("runtime", e),
            };
            eprintln!("{}", json!({ "error": kind, "message": format!("{err:#}") }));
            ExitCode::from(f.code())
        }
    }
}
