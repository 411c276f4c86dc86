//! Monte Carlo of the gated detection chain D1 → D2 → D3 → time acquisition card.
//!
//! Every D1 trigger opens the D2 gate; a D2 click arms D3 for a short gate
//! placed where the partner photon is expected. Times are integer
//! picoseconds measured from the D1 tag, which also opens the D2 gate.
//!
//! Two modes draw from the same per-trigger law:
//! * event-driven walks the trigger sequence, jumping geometrically to the
//!   next trigger on which D2 fires, and simulates each such trigger;
//! * aggregated draws category totals from binomial laws and only samples
//!   arrival times for the handful of D3 clicks.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::budget::EfficiencyBudget;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::histogram::Histogram;
use crate::rng::{derive_seed, substream, SimRng};

pub const DEFAULT_TRIGGER_CAP: u64 = 1_000_000_000;
/// Triggers per independently seeded event-driven block.
const EVENT_BLOCK: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub efficiency: f64,
    /// `None` for the free-running trigger detector.
    pub gate_width_ns: Option<f64>,
    pub dark_prob_per_gate: f64,
    pub jitter_sigma_ps: f64,
    /// Carried for completeness; the configured trigger rate is already the post-saturation rate.
    pub dead_time_ns: f64,
    pub delay_offset_ns: f64,
}

impl DetectorSpec {
    pub fn validate(&self, name: &str) -> Result<()> {
        let p = |field: &str| format!("detectors.{name}.{field}");
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::param(p("efficiency"), "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dark_prob_per_gate) {
            return Err(Error::param(p("dark_prob_per_gate"), "must lie in [0, 1]"));
        }
        if !(self.jitter_sigma_ps >= 0.0 && self.jitter_sigma_ps.is_finite()) {
            return Err(Error::param(p("jitter_sigma_ps"), "must be finite and >= 0"));
        }
        if !(self.dead_time_ns >= 0.0) {
            return Err(Error::param(p("dead_time_ns"), "must be >= 0"));
        }
        if let Some(g) = self.gate_width_ns {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::param(p("gate_width_ns"), "must be > 0"));
            }
        }
        if !self.delay_offset_ns.is_finite() {
            return Err(Error::param(p("delay_offset_ns"), "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TacMode {
    /// Internal dead time: only every second stop event is stored.
    AlternateEventSkip,
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TacSpec {
    pub resolution_ps: i64,
    pub mode: TacMode,
}

impl TacSpec {
    pub fn efficiency(&self) -> f64 {
        match self.mode {
            TacMode::AlternateEventSkip => 0.5,
            TacMode::Ideal => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    EventDriven,
    Aggregated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub budget: EfficiencyBudget,
    pub d1: DetectorSpec,
    pub d2: DetectorSpec,
    pub d3: DetectorSpec,
    pub tac: TacSpec,
    pub trigger_rate_hz: f64,
    pub p_spdc: f64,
    pub duration_s: f64,
    pub d2_d3_delay_ns: f64,
    pub bin_width_ns: f64,
    pub seed: u64,
    pub mode: SimMode,
    pub trigger_cap: u64,
}

fn ns_to_ps(name: &str, ns: f64) -> Result<i64> {
    let ps = (ns * 1000.0).round();
    if !ns.is_finite() || ((ns * 1000.0) - ps).abs() > 1e-6 {
        return Err(Error::param(
            name,
            format!("{ns} ns is not a whole number of picoseconds"),
        ));
    }
    Ok(ps as i64)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        self.d1.validate("d1")?;
        self.d2.validate("d2")?;
        self.d3.validate("d3")?;
        if self.d2.gate_width_ns.is_none() || self.d3.gate_width_ns.is_none() {
            return Err(Error::param("detectors", "d2 and d3 must be gated"));
        }
        if !(self.trigger_rate_hz > 0.0) {
            return Err(Error::param("trigger_rate_hz", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.p_spdc) {
            return Err(Error::param("simulation.p_spdc", "must lie in [0, 1]"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::param("simulation.duration_s", "must be > 0"));
        }
        if self.tac.resolution_ps <= 0 {
            return Err(Error::param("tac.resolution_ps", "must be > 0"));
        }
        if !self.d2_d3_delay_ns.is_finite() {
            return Err(Error::param("simulation.d2_d3_delay_ns", "must be finite"));
        }
        let model = ChainModel::new(self)?;
        if model.window_ps % model.bin_width_ps != 0 {
            return Err(Error::param(
                "simulation.bin_width_ns",
                format!("{} ns does not divide the D2 gate", self.bin_width_ns),
            ));
        }
        if !(0..model.window_ps).contains(&model.signal_arrival_ps) {
            return Err(Error::param(
                "detectors.d2.delay_offset_ns",
                "signal arrival must lie inside the D2 gate",
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig { seed, ..self.clone() }
    }

    pub fn with_delay(&self, d2_d3_delay_ns: f64) -> ExperimentConfig {
        ExperimentConfig {
            d2_d3_delay_ns,
            ..self.clone()
        }
    }

    pub fn triggers(&self) -> u64 {
        (self.trigger_rate_hz * self.duration_s).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub triggers: u64,
    pub d2_fires: u64,
    pub d3_fires: u64,
    /// D3 clicks from the partner photon of a D2 signal click.
    pub signal_triples: u64,
    /// D3 dark clicks, behind either a signal or a dark D2 click.
    pub dark_triples: u64,
    /// Stop events stored by the acquisition card (= histogram total).
    pub recorded: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub histogram: Histogram,
    pub counters: Counters,
    pub seed: u64,
    pub mode: SimMode,
    pub d2_d3_delay_ns: f64,
}

/// P(partner photon inside the D3 gate): the D2–D3 timing difference is
/// Gaussian with width `sigma_ns`, the gate of width `gate_ns` is displaced by `shift_ns`.
pub fn gate_acceptance(shift_ns: f64, gate_ns: f64, sigma_ns: f64) -> f64 {
    let (lo, hi) = (shift_ns - 0.5 * gate_ns, shift_ns + 0.5 * gate_ns);
    if sigma_ns == 0.0 {
        return if lo <= 0.0 && 0.0 < hi { 1.0 } else { 0.0 };
    }
    let n = StdNormal::standard();
    n.cdf(hi / sigma_ns) - n.cdf(lo / sigma_ns)
}

/// Mean fraction of a D3 gate, centred `shift` after a uniformly placed D2
/// click, that overlaps the acquisition window `[0, window)`.
pub fn mean_window_overlap(shift_ns: f64, gate_ns: f64, window_ns: f64) -> f64 {
    let w = window_ns;
    let antiderivative = |x: f64| {
        let x = x.clamp(-w, w);
        w * x - 0.5 * x * x.abs()
    };
    let (a, b) = (shift_ns - 0.5 * gate_ns, shift_ns + 0.5 * gate_ns);
    (antiderivative(b) - antiderivative(a)) / (w * gate_ns)
}

/// Per-trigger probabilities and timing constants derived from a config.
#[derive(Debug, Clone)]
pub struct ChainModel {
    pub triggers: u64,
    /// Triplet photons reach the D2 and D3 fibers.
    pub p_pair: f64,
    /// D2 clicks on the signal photon.
    pub q_signal: f64,
    pub p_dark_d2: f64,
    pub p_dark_d3: f64,
    pub eta_d3: f64,
    pub window_ps: i64,
    pub gate_d3_ps: i64,
    pub bin_width_ps: i64,
    pub signal_arrival_ps: i64,
    pub d3_shift_ps: i64,
    pub sigma_d1_ps: f64,
    pub sigma_d2_ps: f64,
    pub sigma_d3_ps: f64,
    pub tac_resolution_ps: i64,
    pub tac_efficiency: f64,
    pub tac_mode: TacMode,
}

impl ChainModel {
    pub fn new(c: &ExperimentConfig) -> Result<Self> {
        let b = &c.budget;
        let p_pair = b.eta_775.mean
            * b.eta_in.mean
            * c.p_spdc
            * b.eta_out.mean.powi(2)
            * 2.0
            * b.eta_bs.mean.powi(2)
            * b.eta_cw.mean;
        let gate_d2 = c.d2.gate_width_ns.unwrap_or(b.gate_d2_ns);
        let gate_d3 = c.d3.gate_width_ns.unwrap_or(b.gate_d3_ns);
        let bin_width_ps = ns_to_ps("simulation.bin_width_ns", c.bin_width_ns)?;
        if bin_width_ps <= 0 {
            return Err(Error::param("simulation.bin_width_ns", "must be > 0"));
        }
        Ok(ChainModel {
            triggers: c.triggers(),
            p_pair,
            q_signal: p_pair * c.d2.efficiency,
            p_dark_d2: c.d2.dark_prob_per_gate,
            p_dark_d3: c.d3.dark_prob_per_gate,
            eta_d3: c.d3.efficiency,
            window_ps: ns_to_ps("detectors.d2.gate_width_ns", gate_d2)?,
            gate_d3_ps: ns_to_ps("detectors.d3.gate_width_ns", gate_d3)?,
            bin_width_ps,
            signal_arrival_ps: ns_to_ps("detectors.d2.delay_offset_ns", c.d2.delay_offset_ns)?,
            d3_shift_ps: ns_to_ps("simulation.d2_d3_delay_ns", c.d3.delay_offset_ns + c.d2_d3_delay_ns)?,
            sigma_d1_ps: c.d1.jitter_sigma_ps,
            sigma_d2_ps: c.d2.jitter_sigma_ps,
            sigma_d3_ps: c.d3.jitter_sigma_ps,
            tac_resolution_ps: c.tac.resolution_ps,
            tac_efficiency: c.tac.efficiency(),
            tac_mode: c.tac.mode,
        })
    }

    pub fn bins(&self) -> usize {
        (self.window_ps / self.bin_width_ps) as usize
    }

    fn sigma_diff_ps(&self) -> f64 {
        self.sigma_d2_ps.hypot(self.sigma_d3_ps)
    }

    /// Probability that the partner photon lands inside the D3 gate.
    pub fn gate_acceptance(&self) -> f64 {
        gate_acceptance(self.d3_shift_ps as f64, self.gate_d3_ps as f64, self.sigma_diff_ps())
    }

    pub fn dark_overlap(&self) -> f64 {
        mean_window_overlap(self.d3_shift_ps as f64, self.gate_d3_ps as f64, self.window_ps as f64)
    }

    /// Overlap fraction of a D3 gate centred at `center_ps` with the window.
    fn overlap_at(&self, center_ps: f64) -> (f64, f64, f64) {
        let half = 0.5 * self.gate_d3_ps as f64;
        let lo = (center_ps - half).max(0.0);
        let hi = (center_ps + half).min(self.window_ps as f64);
        let frac = ((hi - lo) / self.gate_d3_ps as f64).max(0.0);
        (frac, lo, hi)
    }

    /// Expected counters (before acquisition-card losses, except `recorded`).
    pub fn expected(&self) -> ExpectedCounters {
        let n = self.triggers as f64;
        let d2_signal = n * self.q_signal;
        let d2_dark = (n - d2_signal) * self.p_dark_d2;
        let catch = self.gate_acceptance() * self.eta_d3;
        let signal_triples = d2_signal * catch;
        let (f_sig, _, _) = self.overlap_at((self.signal_arrival_ps + self.d3_shift_ps) as f64);
        let dark_triples =
            d2_dark * self.p_dark_d3 * self.dark_overlap() + (d2_signal - signal_triples) * self.p_dark_d3 * f_sig;
        ExpectedCounters {
            d2_fires: d2_signal + d2_dark,
            signal_triples,
            dark_triples,
            recorded: (signal_triples + dark_triples) * self.tac_efficiency,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedCounters {
    pub d2_fires: f64,
    pub signal_triples: f64,
    pub dark_triples: f64,
    pub recorded: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StopKind {
    Signal,
    Dark,
}

#[derive(Debug, Clone, Copy)]
struct Stop {
    kind: StopKind,
    interval_ps: i64,
}

fn gaussian(rng: &mut SimRng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    }
}

fn uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn binomial(rng: &mut SimRng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
}

impl ChainModel {
    fn signal_interval(&self, j1: f64, j3: f64) -> i64 {
        (self.signal_arrival_ps as f64 + j3 - j1).round() as i64
    }

    /// D2 tag-relative centre of the D3 gate after a signal click.
    fn signal_gate_center(&self, j1: f64, j2: f64) -> f64 {
        self.signal_arrival_ps as f64 - j1 + j2 + self.d3_shift_ps as f64
    }

    fn in_d3_gate(&self, j2: f64, j3: f64) -> bool {
        let half = 0.5 * self.gate_d3_ps as f64;
        let x = j3 - j2 - self.d3_shift_ps as f64;
        -half <= x && x < half
    }

    /// One trigger on which D2 clicked, signal or dark.
    fn simulate_d2_click(&self, rng: &mut SimRng, signal: bool) -> Option<Stop> {
        if signal {
            let j1 = gaussian(rng, self.sigma_d1_ps);
            let j2 = gaussian(rng, self.sigma_d2_ps);
            let j3 = gaussian(rng, self.sigma_d3_ps);
            if self.in_d3_gate(j2, j3) && rng.random::<f64>() < self.eta_d3 {
                return Some(Stop {
                    kind: StopKind::Signal,
                    interval_ps: self.signal_interval(j1, j3),
                });
            }
            let (frac, lo, hi) = self.overlap_at(self.signal_gate_center(j1, j2));
            if rng.random::<f64>() < self.p_dark_d3 * frac {
                return Some(Stop {
                    kind: StopKind::Dark,
                    interval_ps: uniform(rng, lo, hi).floor() as i64,
                });
            }
            None
        } else {
            let u = uniform(rng, 0.0, self.window_ps as f64);
            let (frac, lo, hi) = self.overlap_at(u + self.d3_shift_ps as f64);
            if rng.random::<f64>() < self.p_dark_d3 * frac {
                return Some(Stop {
                    kind: StopKind::Dark,
                    interval_ps: uniform(rng, lo, hi).floor() as i64,
                });
            }
            None
        }
    }

    /// Signal arrival conditioned on the partner landing inside the D3 gate.
    fn conditioned_signal_interval(&self, rng: &mut SimRng) -> i64 {
        let half = 0.5 * self.gate_d3_ps as f64;
        let shift = self.d3_shift_ps as f64;
        let sd = self.sigma_diff_ps();
        let diff = if sd == 0.0 {
            0.0
        } else {
            let n = StdNormal::standard();
            let (c_lo, c_hi) = (n.cdf((shift - half) / sd), n.cdf((shift + half) / sd));
            let u = c_lo + (c_hi - c_lo) * rng.random::<f64>();
            let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            sd * n.inverse_cdf(u)
        };
        // j2 | (j3 - j2 = diff)
        let (s2, s3) = (self.sigma_d2_ps.powi(2), self.sigma_d3_ps.powi(2));
        let j2 = if sd == 0.0 {
            0.0
        } else {
            -diff * s2 / (s2 + s3) + gaussian(rng, (s2 * s3 / (s2 + s3)).sqrt())
        };
        let j3 = j2 + diff;
        let j1 = gaussian(rng, self.sigma_d1_ps);
        self.signal_interval(j1, j3)
    }

    fn dark_dark_interval(&self, rng: &mut SimRng) -> i64 {
        let half = 0.5 * self.gate_d3_ps as f64;
        let w = self.window_ps as f64;
        let shift = self.d3_shift_ps as f64;
        loop {
            let u = uniform(rng, 0.0, w);
            let v = u + uniform(rng, shift - half, shift + half);
            if (0.0..w).contains(&v) {
                return v.floor() as i64;
            }
        }
    }

    fn signal_dark_interval(&self, rng: &mut SimRng) -> i64 {
        loop {
            let j1 = gaussian(rng, self.sigma_d1_ps);
            let j2 = gaussian(rng, self.sigma_d2_ps);
            let (frac, lo, hi) = self.overlap_at(self.signal_gate_center(j1, j2));
            if frac > 0.0 {
                return uniform(rng, lo, hi).floor() as i64;
            }
        }
    }

    fn quantize(&self, interval_ps: i64) -> i64 {
        interval_ps.div_euclid(self.tac_resolution_ps) * self.tac_resolution_ps
    }
}

fn fill(model: &ChainModel, duration_s: f64, stops: impl Iterator<Item = i64>) -> Result<Histogram> {
    let mut h = Histogram::zeros(model.bin_width_ps, model.bins(), duration_s)?;
    for t in stops {
        if let Some(i) = h.bin_of(model.quantize(t)) {
            h.counts[i] += 1;
        }
    }
    Ok(h)
}

struct BlockOutcome {
    d2_fires: u64,
    stops: Vec<Stop>,
}

fn simulate_block(model: &ChainModel, seed: u64, block: u64) -> BlockOutcome {
    let mut rng = substream(seed, "detection.event_block", block);
    let start = block * EVENT_BLOCK;
    let len = EVENT_BLOCK.min(model.triggers - start);
    let q_any = model.q_signal + (1.0 - model.q_signal) * model.p_dark_d2;
    let mut out = BlockOutcome {
        d2_fires: 0,
        stops: Vec::new(),
    };
    if q_any <= 0.0 {
        return out;
    }
    let geometric = (q_any < 1.0).then(|| Geometric::new(q_any).expect("q in (0, 1)"));
    let signal_share = model.q_signal / q_any;
    let mut pos: u64 = 0;
    loop {
        let gap = geometric.as_ref().map_or(0, |g| g.sample(&mut rng));
        pos = pos.saturating_add(gap);
        if pos >= len {
            break;
        }
        out.d2_fires += 1;
        let signal = rng.random::<f64>() < signal_share;
        if let Some(stop) = model.simulate_d2_click(&mut rng, signal) {
            out.stops.push(stop);
        }
        pos += 1;
    }
    out
}

/// Trigger-by-trigger simulation, jumping between triggers on which D2 clicks.
pub fn simulate_event_driven(config: &ExperimentConfig) -> Result<SimResult> {
    simulate_event_driven_with(config, Execution::default())
}

pub fn simulate_event_driven_with(config: &ExperimentConfig, exec: Execution) -> Result<SimResult> {
    config.validate()?;
    let model = ChainModel::new(config)?;
    if model.triggers > config.trigger_cap {
        return Err(Error::TriggerCapExceeded {
            triggers: model.triggers,
            cap: config.trigger_cap,
        });
    }
    let blocks = model.triggers.div_ceil(EVENT_BLOCK) as usize;
    let outcomes = map_indexed(exec, blocks, |b| simulate_block(&model, config.seed, b as u64));

    let mut counters = Counters {
        triggers: model.triggers,
        ..Counters::default()
    };
    let mut phase = substream(config.seed, "detection.tac_phase", 0).random::<bool>() as u64;
    let mut kept = Vec::new();
    for o in outcomes {
        counters.d2_fires += o.d2_fires;
        for stop in o.stops {
            match stop.kind {
                StopKind::Signal => counters.signal_triples += 1,
                StopKind::Dark => counters.dark_triples += 1,
            }
            let keep = match model.tac_mode {
                TacMode::Ideal => true,
                TacMode::AlternateEventSkip => {
                    phase ^= 1;
                    phase == 1
                }
            };
            if keep {
                kept.push(stop.interval_ps);
            }
        }
    }
    counters.d3_fires = counters.signal_triples + counters.dark_triples;
    let histogram = fill(&model, config.duration_s, kept.into_iter())?;
    counters.recorded = histogram.total();
    Ok(SimResult {
        histogram,
        counters,
        seed: config.seed,
        mode: SimMode::EventDriven,
        d2_d3_delay_ns: config.d2_d3_delay_ns,
    })
}

/// Category totals from binomial laws; arrival times only for recorded stops.
pub fn simulate_aggregated(config: &ExperimentConfig) -> Result<SimResult> {
    config.validate()?;
    let model = ChainModel::new(config)?;
    let mut rng = substream(config.seed, "detection.aggregated", 0);
    let n = model.triggers;

    let d2_signal = binomial(&mut rng, n, model.q_signal);
    let d2_dark = binomial(&mut rng, n - d2_signal, model.p_dark_d2);
    let signal_triples = binomial(&mut rng, d2_signal, model.gate_acceptance() * model.eta_d3);
    let (f_sig, _, _) = model.overlap_at((model.signal_arrival_ps + model.d3_shift_ps) as f64);
    let signal_dark = binomial(&mut rng, d2_signal - signal_triples, model.p_dark_d3 * f_sig);
    let dark_dark = binomial(&mut rng, d2_dark, model.p_dark_d3 * model.dark_overlap());

    let keep_signal = binomial(&mut rng, signal_triples, model.tac_efficiency);
    let keep_signal_dark = binomial(&mut rng, signal_dark, model.tac_efficiency);
    let keep_dark_dark = binomial(&mut rng, dark_dark, model.tac_efficiency);

    let mut stops = Vec::with_capacity((keep_signal + keep_signal_dark + keep_dark_dark) as usize);
    stops.extend((0..keep_signal).map(|_| model.conditioned_signal_interval(&mut rng)));
    stops.extend((0..keep_signal_dark).map(|_| model.signal_dark_interval(&mut rng)));
    stops.extend((0..keep_dark_dark).map(|_| model.dark_dark_interval(&mut rng)));

    let histogram = fill(&model, config.duration_s, stops.into_iter())?;
    let counters = Counters {
        triggers: n,
        d2_fires: d2_signal + d2_dark,
        d3_fires: signal_triples + signal_dark + dark_dark,
        signal_triples,
        dark_triples: signal_dark + dark_dark,
        recorded: histogram.total(),
    };
    Ok(SimResult {
        histogram,
        counters,
        seed: config.seed,
        mode: SimMode::Aggregated,
        d2_d3_delay_ns: config.d2_d3_delay_ns,
    })
}

pub fn simulate(config: &ExperimentConfig) -> Result<SimResult> {
    match config.mode {
        SimMode::EventDriven => simulate_event_driven(config),
        SimMode::Aggregated => simulate_aggregated(config),
    }
}

/// Independent runs for each seed, in seed order.
pub fn simulate_seeds(config: &ExperimentConfig, seeds: &[u64], exec: Execution) -> Result<Vec<SimResult>> {
    // event-driven runs parallelise internally over trigger blocks
    let inner = if exec.is_parallel() {
        Execution::Sequential
    } else {
        exec
    };
    map_indexed(exec, seeds.len(), |i| {
        let c = config.with_seed(seeds[i]);
        match c.mode {
            SimMode::EventDriven => simulate_event_driven_with(&c, inner),
            SimMode::Aggregated => simulate_aggregated(&c),
        }
    })
    .into_iter()
    .collect()
}

/// One run per D2–D3 delay, each on its own substream of the master seed.
pub fn scan_delay(config: &ExperimentConfig, delays_ns: &[f64]) -> Result<Vec<SimResult>> {
    scan_delay_with(config, delays_ns, Execution::default())
}

pub fn scan_delay_with(config: &ExperimentConfig, delays_ns: &[f64], exec: Execution) -> Result<Vec<SimResult>> {
    let gate = config.d3.gate_width_ns.unwrap_or(config.budget.gate_d3_ns);
    if let Some(bad) = delays_ns.iter().find(|d| d.abs() > gate) {
        return Err(Error::param(
            "delays",
            format!("{bad} ns exceeds the ±{gate} ns D3 gate"),
        ));
    }
    let inner = if exec.is_parallel() {
        Execution::Sequential
    } else {
        exec
    };
    map_indexed(exec, delays_ns.len(), |i| {
        let c = config
            .with_delay(delays_ns[i])
            .with_seed(derive_seed(config.seed, "detection.scan_delay", i as u64));
        match c.mode {
            SimMode::EventDriven => simulate_event_driven_with(&c, inner),
            SimMode::Aggregated => simulate_aggregated(&c),
        }
    })
    .into_iter()
    .collect()
}
