//! Experiment file loading with a strict schema.
//!
//! Unknown keys anywhere in the document are rejected with their key path.
//! Range checks run after parsing so every module's invariants hold on a
//! loaded config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::budget::{
    infer_p_spdc_from_power, p_spdc_from_coinc, p_spdc_from_triplets, BudgetInputs, EfficiencyBudget, Measurements,
    UncertainValue, DEFAULT_PROPAGATION_SAMPLES,
};
use crate::detection::{DetectorSpec, ExperimentConfig, SimMode, TacMode, TacSpec, DEFAULT_TRIGGER_CAP};
use crate::error::{Error, Result};
use crate::phasematch::{
    fit_poling_period, CalibrationAnchor, CrystalSpec, PolingFit, PpktpCalibration, SellmeierSet, TuningPoint,
};

pub const BUNDLED_PAPER_TABLE1: &str = "paper_table1";
const PAPER_TABLE1_TOML: &str = include_str!("../configs/paper_table1.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub r_trigger: UncertainValue,
    pub eta_d1: UncertainValue,
    pub eta_775: UncertainValue,
    pub p_coinc: UncertainValue,
    pub eta_lp: UncertainValue,
    pub eta_duty: UncertainValue,
    pub eta_tac: UncertainValue,
    pub eta_cw: UncertainValue,
    pub eta_in: UncertainValue,
    pub eta_out: UncertainValue,
    pub eta_bs: UncertainValue,
    pub eta_d2: UncertainValue,
    pub eta_d3: UncertainValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default)]
    pub gate_width_ns: Option<f64>,
    #[serde(default)]
    pub dark_prob_per_gate: f64,
    #[serde(default)]
    pub jitter_sigma_ps: f64,
    #[serde(default)]
    pub dead_time_ns: f64,
    #[serde(default)]
    pub delay_offset_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsSection {
    pub d1: DetectorSection,
    pub d2: DetectorSection,
    pub d3: DetectorSection,
    pub tac: TacSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SellmeierChoice {
    Named(String),
    Inline(SellmeierSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitPoint {
    pub pump_nm: f64,
    pub temperature_c: f64,
    pub signal_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpktpSection {
    pub anchors: [CalibrationAnchor; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    pub sellmeier: SellmeierChoice,
    #[serde(default = "default_qpm_order")]
    pub qpm_order: u32,
    pub crystal_length_mm: f64,
    pub temperature_c: f64,
    /// Fixed poling period; when absent it is fitted to `fit_points`.
    #[serde(default)]
    pub poling_period_um: Option<f64>,
    #[serde(default)]
    pub fit_points: Vec<FitPoint>,
    #[serde(default)]
    pub ppktp: Option<PpktpSection>,
}

fn default_qpm_order() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PSpdcSource {
    Value(f64),
    /// One of `from_coinc`, `from_triplets`, `from_power`.
    Derived(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub duration_s: f64,
    pub seed: u64,
    pub mode: SimMode,
    #[serde(default)]
    pub d2_d3_delay_ns: f64,
    pub bin_width_ns: f64,
    pub p_spdc: PSpdcSource,
    #[serde(default)]
    pub trigger_cap: Option<u64>,
    #[serde(default)]
    pub propagation_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub budget: BudgetSection,
    pub measurements: Measurements,
    pub detectors: DetectorsSection,
    pub crystal: CrystalSection,
    pub simulation: SimulationSection,
}

/// Fully validated configuration with every derived quantity resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadedConfig {
    pub file: ExperimentFile,
    #[serde(skip)]
    pub experiment: ExperimentConfig,
    #[serde(skip)]
    pub budget_inputs: BudgetInputs,
    #[serde(skip)]
    pub crystal: CrystalSpec,
    pub p_spdc_resolved: f64,
    pub poling_fit: Option<PolingFit>,
    pub poling_period_um_resolved: f64,
    #[serde(skip)]
    pub ppktp: Option<PpktpCalibration>,
    pub propagation_samples: usize,
}

impl LoadedConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.file.simulation.seed = seed;
        self.experiment.seed = seed;
        self
    }
}

pub fn parse_experiment_file(text: &str) -> Result<ExperimentFile> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
        path: "<document>".into(),
        message: e.to_string().trim().replace('\n', " "),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string().trim().replace('\n', " "),
    })
}

/// Reads `source` as a path, or as the name of a bundled config when no such file exists.
pub fn read_config_source(source: &str) -> Result<String> {
    let path = Path::new(source);
    if path.exists() {
        return std::fs::read_to_string(path).map_err(|e| Error::io(path, e));
    }
    match source {
        BUNDLED_PAPER_TABLE1 => Ok(PAPER_TABLE1_TOML.to_string()),
        _ => Err(Error::Config {
            path: source.into(),
            message: format!("no such file and no bundled config named `{source}`"),
        }),
    }
}

pub fn load_config(source: &str) -> Result<LoadedConfig> {
    resolve(parse_experiment_file(&read_config_source(source)?)?)
}

pub fn bundled_paper_table1() -> LoadedConfig {
    load_config(BUNDLED_PAPER_TABLE1).expect("bundled config is valid")
}

fn resolve_sellmeier(choice: &SellmeierChoice) -> Result<SellmeierSet> {
    match choice {
        SellmeierChoice::Named(name) => SellmeierSet::by_name(name).ok_or_else(|| Error::Config {
            path: "crystal.sellmeier".into(),
            message: format!("unknown Sellmeier set `{name}`"),
        }),
        SellmeierChoice::Inline(set) => Ok(set.clone()),
    }
}

fn detector(section: &DetectorSection, efficiency: f64) -> DetectorSpec {
    DetectorSpec {
        efficiency,
        gate_width_ns: section.gate_width_ns,
        dark_prob_per_gate: section.dark_prob_per_gate,
        jitter_sigma_ps: section.jitter_sigma_ps,
        dead_time_ns: section.dead_time_ns,
        delay_offset_ns: section.delay_offset_ns,
    }
}

pub fn resolve(file: ExperimentFile) -> Result<LoadedConfig> {
    let b = &file.budget;
    let d = &file.detectors;
    let sim = &file.simulation;
    let gate = |s: &DetectorSection, name: &str| {
        s.gate_width_ns.ok_or_else(|| Error::Config {
            path: format!("detectors.{name}.gate_width_ns"),
            message: "gated detector needs a gate width".into(),
        })
    };
    let budget = EfficiencyBudget {
        r_trigger: b.r_trigger,
        eta_d1: b.eta_d1,
        eta_775: b.eta_775,
        p_coinc: b.p_coinc,
        eta_lp: b.eta_lp,
        eta_duty: b.eta_duty,
        eta_tac: b.eta_tac,
        eta_cw: b.eta_cw,
        eta_in: b.eta_in,
        eta_out: b.eta_out,
        eta_bs: b.eta_bs,
        eta_d2: b.eta_d2,
        eta_d3: b.eta_d3,
        dark_prob_d2: d.d2.dark_prob_per_gate,
        dark_prob_d3: d.d3.dark_prob_per_gate,
        gate_d2_ns: gate(&d.d2, "d2")?,
        gate_d3_ns: gate(&d.d3, "d3")?,
        bin_width_ns: sim.bin_width_ns,
    };
    budget.validate()?;
    if d.tac.mode == TacMode::AlternateEventSkip && budget.eta_tac.mean != 0.5 {
        return Err(Error::param(
            "budget.eta_tac",
            "alternate-event-skip acquisition implies eta_tac = 0.5",
        ));
    }
    let m = &file.measurements;
    if !(m.coinc_to_singles > 0.0 && m.coinc_to_singles <= 1.0) {
        return Err(Error::param("measurements.coinc_to_singles", "must lie in (0, 1]"));
    }
    let budget_inputs = BudgetInputs {
        budget: budget.clone(),
        measurements: m.clone(),
        duration_s: sim.duration_s,
    };

    let p_spdc = match &sim.p_spdc {
        PSpdcSource::Value(v) => *v,
        PSpdcSource::Derived(name) => match name.as_str() {
            "from_coinc" => p_spdc_from_coinc(&budget)?.mean,
            "from_triplets" => p_spdc_from_triplets(&budget, m.triplet_rate_per_hour)?.mean,
            "from_power" => infer_p_spdc_from_power(m.power_in_w, m.power_out_w, &budget)?.mean,
            other => {
                return Err(Error::Config {
                    path: "simulation.p_spdc".into(),
                    message: format!(
                        "expected a probability or one of from_coinc, from_triplets, from_power; got `{other}`"
                    ),
                })
            }
        },
    };

    let experiment = ExperimentConfig {
        d1: detector(&d.d1, budget.eta_d1.mean),
        d2: detector(&d.d2, budget.eta_d2.mean),
        d3: detector(&d.d3, budget.eta_d3.mean),
        tac: d.tac,
        trigger_rate_hz: budget.r_trigger.mean,
        p_spdc,
        duration_s: sim.duration_s,
        d2_d3_delay_ns: sim.d2_d3_delay_ns,
        bin_width_ns: sim.bin_width_ns,
        seed: sim.seed,
        mode: sim.mode,
        trigger_cap: sim.trigger_cap.unwrap_or(DEFAULT_TRIGGER_CAP),
        budget: budget.clone(),
    };
    experiment.validate()?;

    let c = &file.crystal;
    let sellmeier = resolve_sellmeier(&c.sellmeier)?;
    let (poling_period_um, poling_fit) = match (c.poling_period_um, c.fit_points.is_empty()) {
        (Some(p), _) => (p, None),
        (None, false) => {
            let points = c
                .fit_points
                .iter()
                .map(|p| TuningPoint::from_signal(p.pump_nm, p.temperature_c, p.signal_nm))
                .collect::<Result<Vec<_>>>()?;
            let fit = fit_poling_period(&points, &sellmeier, c.qpm_order)?;
            (fit.poling_period_um, Some(fit))
        }
        (None, true) => {
            return Err(Error::Config {
                path: "crystal".into(),
                message: "either poling_period_um or fit_points is required".into(),
            })
        }
    };
    let crystal = CrystalSpec {
        poling_period_um,
        crystal_length_mm: c.crystal_length_mm,
        temperature_c: c.temperature_c,
        sellmeier,
        qpm_order: c.qpm_order,
    };
    crystal.validate()?;
    let ppktp = c
        .ppktp
        .as_ref()
        .map(|p| PpktpCalibration::new(p.anchors[0], p.anchors[1]))
        .transpose()?;

    let propagation_samples = sim.propagation_samples.unwrap_or(DEFAULT_PROPAGATION_SAMPLES);
    Ok(LoadedConfig {
        experiment,
        budget_inputs,
        crystal,
        p_spdc_resolved: p_spdc,
        poling_fit,
        poling_period_um_resolved: poling_period_um,
        ppktp,
        propagation_samples,
        file,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::r_triple;

    fn paper_text() -> String {
        read_config_source(BUNDLED_PAPER_TABLE1).unwrap()
    }

    #[test]
    fn bundled_config_reproduces_rate() {
        let cfg = bundled_paper_table1();
        let r = r_triple(&cfg.budget_inputs.budget).unwrap();
        assert!((r - 5.56).abs() < 0.01, "{r}");
        assert_eq!(cfg.experiment.d2_d3_delay_ns, 0.0);
        assert!(cfg.poling_fit.is_some());
    }

    #[test]
    fn eta_range_error_names_key() {
        let text = paper_text().replace(
            "eta_d2 = { mean = 0.20, sigma = 0.02 }",
            "eta_d2 = { mean = 1.5, sigma = 0.02 }",
        );
        let err = resolve(parse_experiment_file(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("budget.eta_d2"), "{err}");
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = paper_text().replace(
            "jitter_sigma_ps = 360.0\n\n[detectors.d2]",
            "jitter_sigma_pz = 360.0\n\n[detectors.d2]",
        );
        let err = parse_experiment_file(&text).unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert!(path.starts_with("detectors.d1"), "{path}");
                assert!(message.contains("jitter_sigma_pz"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_p_spdc_source() {
        let text = paper_text().replace("\"from_triplets\"", "\"from_nowhere\"");
        assert!(resolve(parse_experiment_file(&text).unwrap()).is_err());
    }

    #[test]
    fn numeric_p_spdc_and_fixed_period() {
        let text = paper_text()
            .replace("p_spdc = \"from_triplets\"", "p_spdc = 1e-5")
            .replace("qpm_order = 1", "qpm_order = 1\npoling_period_um = 19.0");
        let cfg = resolve(parse_experiment_file(&text).unwrap()).unwrap();
        assert_eq!(cfg.experiment.p_spdc, 1e-5);
        assert_eq!(cfg.crystal.poling_period_um, 19.0);
        assert!(cfg.poling_fit.is_none());
    }

    #[test]
    fn missing_file_and_unknown_bundle() {
        assert!(load_config("/definitely/not/here.toml").is_err());
    }

    #[test]
    fn parse_error_is_reported() {
        assert!(matches!(parse_experiment_file("[budget"), Err(Error::Config { .. })));
    }
}
