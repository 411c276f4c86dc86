//! Analytic triplet-rate and dark-count budget with uncertainty propagation.
//!
//! Efficiencies are plain fractions, rates are in Hz unless a name says
//! otherwise, gates and bins are in nanoseconds.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::rng::substream;

pub const DEFAULT_PROPAGATION_SAMPLES: usize = 100_000;
pub const MIN_PROPAGATION_SAMPLES: usize = 10_000;
const SAMPLE_CHUNK: usize = 4096;
const SECONDS_PER_HOUR: f64 = 3600.0;

/// Planck constant times speed of light, J·m.
const HC: f64 = 6.626_070_15e-34 * 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertainValue {
    pub mean: f64,
    /// One standard deviation.
    pub sigma: f64,
}

impl UncertainValue {
    pub const fn new(mean: f64, sigma: f64) -> Self {
        UncertainValue { mean, sigma }
    }

    pub const fn exact(mean: f64) -> Self {
        UncertainValue { mean, sigma: 0.0 }
    }

    pub fn relative(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            (self.sigma / self.mean).abs()
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.mean - self.sigma, self.mean + self.sigma)
    }

    pub fn overlaps(&self, other: &UncertainValue) -> bool {
        let (a_lo, a_hi) = self.interval();
        let (b_lo, b_hi) = other.interval();
        a_lo <= b_hi && b_lo <= a_hi
    }

    pub fn scale(&self, k: f64) -> UncertainValue {
        UncertainValue::new(self.mean * k, self.sigma * k.abs())
    }
}

/// Two significant figures on the uncertainty, value rounded to match.
impl std::fmt::Display for UncertainValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let reference = if self.sigma > 0.0 { self.sigma } else { self.mean.abs() };
        if reference == 0.0 || !reference.is_finite() {
            return write!(f, "{} ± {}", self.mean, self.sigma);
        }
        let exp = reference.log10().floor() as i32;
        if (-3..=4).contains(&exp) {
            let decimals = (1 - exp).max(0) as usize;
            write!(f, "{:.*} ± {:.*}", decimals, self.mean, decimals, self.sigma)
        } else {
            let scale = 10f64.powi(exp);
            write!(f, "({:.1} ± {:.1})e{}", self.mean / scale, self.sigma / scale, exp)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBudget {
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
    pub dark_prob_d2: f64,
    pub dark_prob_d3: f64,
    pub gate_d2_ns: f64,
    pub gate_d3_ns: f64,
    pub bin_width_ns: f64,
}

impl EfficiencyBudget {
    /// Uncertain parameters in declaration order, with their config key.
    pub fn parameters(&self) -> [(&'static str, UncertainValue); 13] {
        BudgetParam::ALL.map(|p| (p.key(), p.get(self)))
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in self.parameters() {
            let path = format!("budget.{key}");
            if !v.mean.is_finite() || !v.sigma.is_finite() || v.sigma < 0.0 {
                return Err(Error::param(path, "mean must be finite and sigma finite and >= 0"));
            }
            if key == "r_trigger" {
                if v.mean <= 0.0 {
                    return Err(Error::param(path, "trigger rate must be > 0"));
                }
            } else if !(0.0..=1.0).contains(&v.mean) {
                return Err(Error::param(path, format!("{} is outside [0, 1]", v.mean)));
            }
        }
        for (key, p) in [("dark_prob_d2", self.dark_prob_d2), ("dark_prob_d3", self.dark_prob_d3)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(key, format!("{p} is outside [0, 1]")));
            }
        }
        if !(self.gate_d3_ns > 0.0 && self.gate_d2_ns > self.gate_d3_ns) {
            return Err(Error::param("gates", "require gate_d2 > gate_d3 > 0"));
        }
        self.bins_per_gate()?;
        Ok(())
    }

    /// Number of histogram bins tiling the D2 gate.
    pub fn bins_per_gate(&self) -> Result<u32> {
        let ratio = self.gate_d2_ns / self.bin_width_ns;
        let rounded = ratio.round();
        if !(self.bin_width_ns > 0.0) || rounded < 1.0 || (ratio - rounded).abs() > 1e-9 {
            return Err(Error::param(
                "bin_width_ns",
                format!("{} ns does not tile the {} ns gate", self.bin_width_ns, self.gate_d2_ns),
            ));
        }
        Ok(rounded as u32)
    }
}

/// The uncertain entries of [`EfficiencyBudget`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetParam {
    RTrigger,
    EtaD1,
    Eta775,
    PCoinc,
    EtaLp,
    EtaDuty,
    EtaTac,
    EtaCw,
    EtaIn,
    EtaOut,
    EtaBs,
    EtaD2,
    EtaD3,
}

impl BudgetParam {
    pub const ALL: [BudgetParam; 13] = [
        BudgetParam::RTrigger,
        BudgetParam::EtaD1,
        BudgetParam::Eta775,
        BudgetParam::PCoinc,
        BudgetParam::EtaLp,
        BudgetParam::EtaDuty,
        BudgetParam::EtaTac,
        BudgetParam::EtaCw,
        BudgetParam::EtaIn,
        BudgetParam::EtaOut,
        BudgetParam::EtaBs,
        BudgetParam::EtaD2,
        BudgetParam::EtaD3,
    ];

    pub fn key(self) -> &'static str {
        match self {
            BudgetParam::RTrigger => "r_trigger",
            BudgetParam::EtaD1 => "eta_d1",
            BudgetParam::Eta775 => "eta_775",
            BudgetParam::PCoinc => "p_coinc",
            BudgetParam::EtaLp => "eta_lp",
            BudgetParam::EtaDuty => "eta_duty",
            BudgetParam::EtaTac => "eta_tac",
            BudgetParam::EtaCw => "eta_cw",
            BudgetParam::EtaIn => "eta_in",
            BudgetParam::EtaOut => "eta_out",
            BudgetParam::EtaBs => "eta_bs",
            BudgetParam::EtaD2 => "eta_d2",
            BudgetParam::EtaD3 => "eta_d3",
        }
    }

    fn slot(self, b: &mut EfficiencyBudget) -> &mut UncertainValue {
        match self {
            BudgetParam::RTrigger => &mut b.r_trigger,
            BudgetParam::EtaD1 => &mut b.eta_d1,
            BudgetParam::Eta775 => &mut b.eta_775,
            BudgetParam::PCoinc => &mut b.p_coinc,
            BudgetParam::EtaLp => &mut b.eta_lp,
            BudgetParam::EtaDuty => &mut b.eta_duty,
            BudgetParam::EtaTac => &mut b.eta_tac,
            BudgetParam::EtaCw => &mut b.eta_cw,
            BudgetParam::EtaIn => &mut b.eta_in,
            BudgetParam::EtaOut => &mut b.eta_out,
            BudgetParam::EtaBs => &mut b.eta_bs,
            BudgetParam::EtaD2 => &mut b.eta_d2,
            BudgetParam::EtaD3 => &mut b.eta_d3,
        }
    }

    pub fn get(self, b: &EfficiencyBudget) -> UncertainValue {
        match self {
            BudgetParam::RTrigger => b.r_trigger,
            BudgetParam::EtaD1 => b.eta_d1,
            BudgetParam::Eta775 => b.eta_775,
            BudgetParam::PCoinc => b.p_coinc,
            BudgetParam::EtaLp => b.eta_lp,
            BudgetParam::EtaDuty => b.eta_duty,
            BudgetParam::EtaTac => b.eta_tac,
            BudgetParam::EtaCw => b.eta_cw,
            BudgetParam::EtaIn => b.eta_in,
            BudgetParam::EtaOut => b.eta_out,
            BudgetParam::EtaBs => b.eta_bs,
            BudgetParam::EtaD2 => b.eta_d2,
            BudgetParam::EtaD3 => b.eta_d3,
        }
    }

    pub fn set_mean(self, b: &mut EfficiencyBudget, mean: f64) {
        self.slot(b).mean = mean;
    }

    /// Physical range used to truncate sampled values.
    fn bounds(self) -> (f64, f64) {
        match self {
            BudgetParam::RTrigger => (0.0, f64::INFINITY),
            _ => (0.0, 1.0),
        }
    }
}

/// Auxiliary measurements that feed the inversions and cross-checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurements {
    /// 775/848 nm coincidence-to-singles ratio of the primary source.
    pub coinc_to_singles: f64,
    /// Background-subtracted triplet rate observed in the cascade run.
    pub triplet_rate_per_hour: UncertainValue,
    /// Laser power into the waveguide for the classical efficiency check, W.
    pub power_in_w: UncertainValue,
    /// Down-converted power at the output fiber, W.
    pub power_out_w: UncertainValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetInputs {
    pub budget: EfficiencyBudget,
    pub measurements: Measurements,
    pub duration_s: f64,
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(name, format!("{p} is outside [0, 1]")));
    }
    Ok(())
}

/// η_in · η_out² · 2η_BS² · η_D2 · η_D3: secondary-source optics and detectors common to both experiments.
fn secondary_chain(b: &EfficiencyBudget) -> f64 {
    b.eta_in.mean * b.eta_out.mean.powi(2) * 2.0 * b.eta_bs.mean.powi(2) * b.eta_d2.mean * b.eta_d3.mean
}

/// Triple-coincidence probability per D1 trigger.
pub fn p_triple(budget: &EfficiencyBudget, p_spdc: f64) -> Result<f64> {
    budget.validate()?;
    check_probability("p_spdc", p_spdc)?;
    Ok(budget.eta_775.mean * p_spdc * secondary_chain(budget))
}

/// Detected coincidence probability per photon injected into the waveguide (laser characterisation).
pub fn p_coinc(budget: &EfficiencyBudget, p_spdc: f64) -> Result<f64> {
    budget.validate()?;
    check_probability("p_spdc", p_spdc)?;
    Ok(p_spdc * secondary_chain(budget) * budget.eta_lp.mean.powi(2) * budget.eta_duty.mean)
}

/// Triple probability per trigger written through the measured coincidence probability.
pub fn p_triple_from_coinc(budget: &EfficiencyBudget) -> Result<f64> {
    budget.validate()?;
    let b = budget;
    let denom = b.eta_lp.mean.powi(2) * b.eta_duty.mean;
    if denom == 0.0 {
        return Err(Error::param("eta_lp/eta_duty", "must be non-zero"));
    }
    Ok(b.eta_775.mean * b.p_coinc.mean / denom)
}

/// Predicted detected triplet rate, counts per hour.
pub fn r_triple(budget: &EfficiencyBudget) -> Result<f64> {
    let p = p_triple_from_coinc(budget)?;
    Ok(SECONDS_PER_HOUR * budget.r_trigger.mean * p * budget.eta_tac.mean * budget.eta_cw.mean)
}

/// Photon flux of a monochromatic beam, photons per second.
pub fn photon_rate(power_w: f64, wavelength_nm: f64) -> Result<f64> {
    if !(power_w >= 0.0) || !(wavelength_nm > 0.0) {
        return Err(Error::param("photon_rate", "power must be >= 0 and wavelength > 0"));
    }
    Ok(power_w * wavelength_nm * 1e-9 / HC)
}

/// Coincidence probability per input photon from a counted coincidence rate.
pub fn p_coinc_from_counts(coinc_per_s: UncertainValue, photons_per_s: f64) -> Result<UncertainValue> {
    if !(photons_per_s > 0.0) {
        return Err(Error::param("photons_per_s", "must be > 0"));
    }
    Ok(coinc_per_s.scale(1.0 / photons_per_s))
}

/// Linear error propagation for `c · Π x_i^{k_i}`.
fn power_law(factors: &[(UncertainValue, i32)], constant: f64) -> UncertainValue {
    let mean = constant * factors.iter().map(|(v, k)| v.mean.powi(*k)).product::<f64>();
    let rel2: f64 = factors
        .iter()
        .map(|(v, k)| (f64::from(*k) * v.relative()).powi(2))
        .sum();
    UncertainValue::new(mean, mean.abs() * rel2.sqrt())
}

/// Fiber-coupling probability of the 775 nm photon given a trigger at D1.
pub fn infer_eta_775(coinc_to_singles: f64, eta_d1: UncertainValue) -> Result<UncertainValue> {
    if !(coinc_to_singles > 0.0 && coinc_to_singles <= 1.0) {
        return Err(Error::param("coinc_to_singles", "ratio must lie in (0, 1]"));
    }
    if !(eta_d1.mean > 0.0 && eta_d1.mean <= 1.0) {
        return Err(Error::param("eta_d1", "mean must lie in (0, 1]"));
    }
    Ok(power_law(&[(eta_d1, -1)], coinc_to_singles))
}

/// P_SPDC from the laser coincidence measurement by inverting the coincidence chain.
pub fn p_spdc_from_coinc(budget: &EfficiencyBudget) -> Result<UncertainValue> {
    budget.validate()?;
    let b = budget;
    Ok(power_law(
        &[
            (b.p_coinc, 1),
            (b.eta_in, -1),
            (b.eta_out, -2),
            (b.eta_lp, -2),
            (b.eta_bs, -2),
            (b.eta_d2, -1),
            (b.eta_d3, -1),
            (b.eta_duty, -1),
        ],
        0.5,
    ))
}

/// P_SPDC from the observed single-photon-pumped triplet rate by inverting the triple chain.
pub fn p_spdc_from_triplets(budget: &EfficiencyBudget, rate_per_hour: UncertainValue) -> Result<UncertainValue> {
    budget.validate()?;
    let b = budget;
    Ok(power_law(
        &[
            (rate_per_hour, 1),
            (b.r_trigger, -1),
            (b.eta_775, -1),
            (b.eta_in, -1),
            (b.eta_out, -2),
            (b.eta_bs, -2),
            (b.eta_d2, -1),
            (b.eta_d3, -1),
            (b.eta_tac, -1),
            (b.eta_cw, -1),
        ],
        0.5 / SECONDS_PER_HOUR,
    ))
}

/// P_SPDC from classical powers. The pair carries the pump-photon energy, so
/// photon-energy factors cancel and each lossy element enters once.
pub fn infer_p_spdc_from_power(
    p_in_w: UncertainValue,
    p_out_w: UncertainValue,
    budget: &EfficiencyBudget,
) -> Result<UncertainValue> {
    if !(p_in_w.mean > 0.0) || p_out_w.mean < 0.0 {
        return Err(Error::param("power", "input power must be > 0 and output power >= 0"));
    }
    budget.validate()?;
    let b = budget;
    let denom = b.eta_in.mean * b.eta_out.mean * b.eta_lp.mean;
    if denom == 0.0 {
        return Err(Error::param("eta_in/eta_out/eta_lp", "must be non-zero"));
    }
    if p_out_w.mean == 0.0 {
        return Ok(UncertainValue::exact(0.0));
    }
    Ok(power_law(
        &[
            (p_out_w, 1),
            (p_in_w, -1),
            (b.eta_in, -1),
            (b.eta_out, -1),
            (b.eta_lp, -1),
        ],
        1.0,
    ))
}

/// Accidental triples from a genuine trigger and dark counts at both gated detectors.
pub fn expected_dark_triples(budget: &EfficiencyBudget, duration_s: f64) -> Result<UncertainValue> {
    budget.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::param("duration_s", "must be > 0"));
    }
    let b = budget;
    let k = b.dark_prob_d2 * b.dark_prob_d3 * duration_s;
    Ok(power_law(&[(b.r_trigger, 1), (b.eta_tac, 1)], k))
}

pub fn background_per_bin(budget: &EfficiencyBudget, duration_s: f64) -> Result<UncertainValue> {
    let total = expected_dark_triples(budget, duration_s)?;
    Ok(total.scale(1.0 / f64::from(budget.bins_per_gate()?)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyVerdict {
    pub consistent: bool,
    pub verdict: String,
}

/// Pairwise 1σ-interval overlap of independent estimates.
pub fn consistency(estimates: &[UncertainValue]) -> ConsistencyVerdict {
    let consistent = estimates
        .iter()
        .enumerate()
        .all(|(i, a)| estimates[i + 1..].iter().all(|b| a.overlaps(b)));
    let verdict = if consistent {
        "consistent within 1σ"
    } else {
        "inconsistent at 1σ"
    };
    ConsistencyVerdict {
        consistent,
        verdict: verdict.to_string(),
    }
}

/// Named scalar outputs of the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    RTriplePerHour,
    PTriple,
    PSpdcFromCoinc,
    PSpdcFromTriplets,
    PSpdcFromPower,
    Eta775,
    ExpectedDarkTriples,
    BackgroundPerBin,
}

/// Measurement inputs that carry uncertainty besides the budget itself.
#[derive(Debug, Clone, Copy)]
struct MeasurementDraw {
    triplet_rate: f64,
    power_in: f64,
    power_out: f64,
}

impl Quantity {
    fn evaluate(self, b: &EfficiencyBudget, m: &MeasurementDraw, inputs: &BudgetInputs) -> f64 {
        let chain = secondary_chain(b);
        let lp_duty = b.eta_lp.mean.powi(2) * b.eta_duty.mean;
        match self {
            Quantity::PTriple => b.eta_775.mean * b.p_coinc.mean / lp_duty,
            Quantity::RTriplePerHour => {
                SECONDS_PER_HOUR * b.r_trigger.mean * b.eta_775.mean * b.p_coinc.mean / lp_duty
                    * b.eta_tac.mean
                    * b.eta_cw.mean
            }
            Quantity::PSpdcFromCoinc => b.p_coinc.mean / (chain * lp_duty),
            Quantity::PSpdcFromTriplets => {
                m.triplet_rate
                    / (SECONDS_PER_HOUR * b.r_trigger.mean * b.eta_775.mean * chain * b.eta_tac.mean * b.eta_cw.mean)
            }
            Quantity::PSpdcFromPower => m.power_out / (b.eta_in.mean * b.eta_out.mean * b.eta_lp.mean * m.power_in),
            Quantity::Eta775 => inputs.measurements.coinc_to_singles / b.eta_d1.mean,
            Quantity::ExpectedDarkTriples => {
                b.r_trigger.mean * b.dark_prob_d2 * b.dark_prob_d3 * b.eta_tac.mean * inputs.duration_s
            }
            Quantity::BackgroundPerBin => {
                let bins = b.gate_d2_ns / b.bin_width_ns;
                b.r_trigger.mean * b.dark_prob_d2 * b.dark_prob_d3 * b.eta_tac.mean * inputs.duration_s / bins.round()
            }
        }
    }

    pub fn plug_in(self, inputs: &BudgetInputs) -> f64 {
        self.evaluate(&inputs.budget, &MeasurementDraw::at_means(inputs), inputs)
    }
}

impl MeasurementDraw {
    fn at_means(inputs: &BudgetInputs) -> Self {
        let m = &inputs.measurements;
        MeasurementDraw {
            triplet_rate: m.triplet_rate_per_hour.mean,
            power_in: m.power_in_w.mean,
            power_out: m.power_out_w.mean,
        }
    }
}

fn truncated_normal<R: Rng>(rng: &mut R, v: UncertainValue, lo: f64, hi: f64) -> f64 {
    if v.sigma == 0.0 {
        return v.mean;
    }
    let normal = Normal::new(v.mean, v.sigma).expect("sigma validated finite and > 0");
    loop {
        let x = normal.sample(rng);
        if x > lo && x <= hi {
            return x;
        }
    }
}

fn draw_inputs<R: Rng>(rng: &mut R, inputs: &BudgetInputs) -> (EfficiencyBudget, MeasurementDraw) {
    let mut b = inputs.budget.clone();
    for p in BudgetParam::ALL {
        let (lo, hi) = p.bounds();
        let x = truncated_normal(rng, p.get(&inputs.budget), lo, hi);
        p.set_mean(&mut b, x);
    }
    let m = &inputs.measurements;
    let draw = MeasurementDraw {
        triplet_rate: truncated_normal(rng, m.triplet_rate_per_hour, 0.0, f64::INFINITY),
        power_in: truncated_normal(rng, m.power_in_w, 0.0, f64::INFINITY),
        power_out: truncated_normal(rng, m.power_out_w, 0.0, f64::INFINITY),
    };
    (b, draw)
}

fn mean_and_sd(values: &[f64]) -> UncertainValue {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    UncertainValue::new(mean, var.sqrt())
}

/// Monte Carlo propagation with independent Gaussians truncated to physical ranges.
pub fn propagate(inputs: &BudgetInputs, quantity: Quantity, samples: usize, seed: u64) -> Result<UncertainValue> {
    propagate_with(inputs, quantity, samples, seed, Execution::default())
}

pub fn propagate_with(
    inputs: &BudgetInputs,
    quantity: Quantity,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<UncertainValue> {
    if samples < MIN_PROPAGATION_SAMPLES {
        return Err(Error::param(
            "samples",
            format!("need at least {MIN_PROPAGATION_SAMPLES} samples, got {samples}"),
        ));
    }
    inputs.budget.validate()?;
    if all_exact(inputs) {
        return Ok(UncertainValue::exact(quantity.plug_in(inputs)));
    }
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let parts = map_indexed(exec, chunks, |c| {
        let mut rng = substream(seed, "budget.propagate", c as u64);
        let n = SAMPLE_CHUNK.min(samples - c * SAMPLE_CHUNK);
        (0..n)
            .map(|_| {
                let (b, m) = draw_inputs(&mut rng, inputs);
                quantity.evaluate(&b, &m, inputs)
            })
            .collect::<Vec<f64>>()
    });
    let values: Vec<f64> = parts.into_iter().flatten().collect();
    Ok(mean_and_sd(&values))
}

fn all_exact(inputs: &BudgetInputs) -> bool {
    let m = &inputs.measurements;
    BudgetParam::ALL.iter().all(|p| p.get(&inputs.budget).sigma == 0.0)
        && m.triplet_rate_per_hour.sigma == 0.0
        && m.power_in_w.sigma == 0.0
        && m.power_out_w.sigma == 0.0
}

/// First-order Taylor propagation with central finite differences.
pub fn propagate_linear(inputs: &BudgetInputs, quantity: Quantity) -> Result<UncertainValue> {
    inputs.budget.validate()?;
    let base_m = MeasurementDraw::at_means(inputs);
    let f0 = quantity.evaluate(&inputs.budget, &base_m, inputs);
    let mut var = 0.0;
    for p in BudgetParam::ALL {
        let v = p.get(&inputs.budget);
        if v.sigma == 0.0 {
            continue;
        }
        let h = 1e-6 * v.mean.abs().max(v.sigma);
        let mut up = inputs.budget.clone();
        let mut down = inputs.budget.clone();
        p.set_mean(&mut up, v.mean + h);
        p.set_mean(&mut down, v.mean - h);
        let d = (quantity.evaluate(&up, &base_m, inputs) - quantity.evaluate(&down, &base_m, inputs)) / (2.0 * h);
        var += (d * v.sigma).powi(2);
    }
    let m = &inputs.measurements;
    type Setter = fn(&mut MeasurementDraw, f64);
    let measured: [(UncertainValue, Setter); 3] = [
        (m.triplet_rate_per_hour, |d, x| d.triplet_rate = x),
        (m.power_in_w, |d, x| d.power_in = x),
        (m.power_out_w, |d, x| d.power_out = x),
    ];
    for (v, set) in measured {
        if v.sigma == 0.0 {
            continue;
        }
        let h = 1e-6 * v.mean.abs().max(v.sigma);
        let (mut up, mut down) = (base_m, base_m);
        set(&mut up, v.mean + h);
        set(&mut down, v.mean - h);
        let d = (quantity.evaluate(&inputs.budget, &up, inputs) - quantity.evaluate(&inputs.budget, &down, inputs))
            / (2.0 * h);
        var += (d * v.sigma).powi(2);
    }
    Ok(UncertainValue::new(f0, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub r_triple_per_hour: UncertainValue,
    pub p_triple: UncertainValue,
    pub p_spdc_from_coinc: UncertainValue,
    pub p_spdc_from_triplets: UncertainValue,
    pub p_spdc_from_power: UncertainValue,
    pub expected_dark_triples: UncertainValue,
    pub background_per_bin: UncertainValue,
    pub eta_775_inferred: UncertainValue,
    pub p_spdc_consistency: ConsistencyVerdict,
}

/// Full budget: central values at the parameter means, σ from seeded Monte Carlo.
pub fn budget_report(inputs: &BudgetInputs, samples: usize, seed: u64) -> Result<BudgetReport> {
    budget_report_with(inputs, samples, seed, Execution::default())
}

pub fn budget_report_with(inputs: &BudgetInputs, samples: usize, seed: u64, exec: Execution) -> Result<BudgetReport> {
    inputs.budget.validate()?;
    let one = |q: Quantity, stream: u64| -> Result<UncertainValue> {
        let mc = propagate_with(
            inputs,
            q,
            samples,
            crate::rng::derive_seed(seed, "budget.quantity", stream),
            exec,
        )?;
        Ok(UncertainValue::new(q.plug_in(inputs), mc.sigma))
    };
    let p_spdc_from_coinc = one(Quantity::PSpdcFromCoinc, 2)?;
    let p_spdc_from_triplets = one(Quantity::PSpdcFromTriplets, 3)?;
    let p_spdc_from_power = one(Quantity::PSpdcFromPower, 4)?;
    Ok(BudgetReport {
        r_triple_per_hour: one(Quantity::RTriplePerHour, 0)?,
        p_triple: one(Quantity::PTriple, 1)?,
        p_spdc_consistency: consistency(&[p_spdc_from_coinc, p_spdc_from_triplets, p_spdc_from_power]),
        p_spdc_from_coinc,
        p_spdc_from_triplets,
        p_spdc_from_power,
        expected_dark_triples: one(Quantity::ExpectedDarkTriples, 5)?,
        background_per_bin: one(Quantity::BackgroundPerBin, 6)?,
        eta_775_inferred: infer_eta_775(inputs.measurements.coinc_to_singles, inputs.budget.eta_d1)?,
    })
}
