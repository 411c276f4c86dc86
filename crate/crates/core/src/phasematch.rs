//! Quasi-phase-matched down-conversion in the secondary (PPLN) crystal.
//!
//! All three fields are extraordinary waves; the grating vector of the
//! poling closes the momentum mismatch. Wavelengths cross the public API
//! in nanometres, the dispersion formula works in micrometres.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WAVELENGTH_DOMAIN_NM: (f64, f64) = (400.0, 2000.0);
pub const TEMPERATURE_DOMAIN_C: (f64, f64) = (20.0, 200.0);
pub const SIGNAL_SCAN_NM: (f64, f64) = (1400.0, 1700.0);
pub const SIGNAL_GRID_STEP_NM: f64 = 0.1;
pub const DEGENERACY_SCAN_C: (f64, f64) = (20.0, 120.0);
pub const PUMP_BAND_NM: (f64, f64) = (770.0, 780.0);
const ENERGY_TOLERANCE: f64 = 1e-6;

/// Temperature-dependent extended Sellmeier formula
///
/// `n² = a1 + b1·f + (a2 + b2·f)/(λ² − (a3 + b3·f)²) + (a4 + b4·f)/(λ² − a5²) − a6·λ²`
///
/// with `f = (T − t_ref)(T + t_shift)`, λ in µm and T in °C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierSet {
    pub name: String,
    pub a: [f64; 6],
    pub b: [f64; 4],
    pub t_ref_c: f64,
    pub t_shift_c: f64,
}

impl SellmeierSet {
    pub const CONGRUENT_LN_E: &'static str = "congruent_ln_e";

    /// Extraordinary index of congruent lithium niobate (Jundt, Opt. Lett. 22, 1553, 1997).
    pub fn congruent_ln_extraordinary() -> Self {
        SellmeierSet {
            name: Self::CONGRUENT_LN_E.to_string(),
            a: [5.35583, 0.100473, 0.20692, 100.0, 11.34927, 1.5334e-2],
            b: [4.629e-7, 3.862e-8, -0.89e-8, 2.657e-5],
            t_ref_c: 24.5,
            t_shift_c: 570.82,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            Self::CONGRUENT_LN_E => Some(Self::congruent_ln_extraordinary()),
            _ => None,
        }
    }

    fn n_squared(&self, lambda_um: f64, temp_c: f64) -> f64 {
        let [a1, a2, a3, a4, a5, a6] = self.a;
        let [b1, b2, b3, b4] = self.b;
        let f = (temp_c - self.t_ref_c) * (temp_c + self.t_shift_c);
        let l2 = lambda_um * lambda_um;
        let uv_pole = a3 + b3 * f;
        a1 + b1 * f + (a2 + b2 * f) / (l2 - uv_pole * uv_pole) + (a4 + b4 * f) / (l2 - a5 * a5) - a6 * l2
    }

    /// Checks `n > 1`, finiteness and the absence of poles on the validated domain.
    pub fn validate(&self) -> Result<()> {
        if self.a.iter().chain(&self.b).any(|c| !c.is_finite()) {
            return Err(Error::param("sellmeier", "coefficients must be finite"));
        }
        let (l_lo, l_hi) = WAVELENGTH_DOMAIN_NM;
        let (t_lo, t_hi) = TEMPERATURE_DOMAIN_C;
        for ti in 0..=36 {
            let t = t_lo + (t_hi - t_lo) * f64::from(ti) / 36.0;
            let f = (t - self.t_ref_c) * (t + self.t_shift_c);
            let uv = (self.a[2] + self.b[2] * f).abs() * 1000.0;
            let ir = self.a[4].abs() * 1000.0;
            for pole in [uv, ir] {
                if (l_lo..=l_hi).contains(&pole) {
                    return Err(Error::param(
                        "sellmeier",
                        format!("pole at {pole:.1} nm inside the wavelength domain (T = {t} C)"),
                    ));
                }
            }
            for li in 0..=160 {
                let l = (l_lo + (l_hi - l_lo) * f64::from(li) / 160.0) / 1000.0;
                let n2 = self.n_squared(l, t);
                if !n2.is_finite() || n2 <= 1.0 {
                    return Err(Error::param(
                        "sellmeier",
                        format!("index not > 1 at {:.0} nm, {t} C", l * 1000.0),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_domain(wavelength_nm: f64, temperature_c: f64) -> Result<()> {
    let (l_lo, l_hi) = WAVELENGTH_DOMAIN_NM;
    let (t_lo, t_hi) = TEMPERATURE_DOMAIN_C;
    if !(l_lo..=l_hi).contains(&wavelength_nm) {
        return Err(Error::Domain(format!(
            "wavelength {wavelength_nm} nm outside [{l_lo}, {l_hi}] nm"
        )));
    }
    if !(t_lo..=t_hi).contains(&temperature_c) {
        return Err(Error::Domain(format!(
            "temperature {temperature_c} C outside [{t_lo}, {t_hi}] C"
        )));
    }
    Ok(())
}

pub fn refractive_index(s: &SellmeierSet, wavelength_nm: f64, temperature_c: f64) -> Result<f64> {
    check_domain(wavelength_nm, temperature_c)?;
    Ok(s.n_squared(wavelength_nm / 1000.0, temperature_c).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalSpec {
    pub poling_period_um: f64,
    pub crystal_length_mm: f64,
    pub temperature_c: f64,
    pub sellmeier: SellmeierSet,
    pub qpm_order: u32,
}

impl CrystalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.poling_period_um > 0.0 && self.poling_period_um.is_finite()) {
            return Err(Error::param("crystal.poling_period_um", "must be > 0"));
        }
        if !(self.crystal_length_mm > 0.0) {
            return Err(Error::param("crystal.crystal_length_mm", "must be > 0"));
        }
        if self.qpm_order == 0 || self.qpm_order.is_multiple_of(2) {
            return Err(Error::param("crystal.qpm_order", "must be an odd positive integer"));
        }
        self.sellmeier.validate()
    }

    pub fn at_temperature(&self, temperature_c: f64) -> CrystalSpec {
        CrystalSpec {
            temperature_c,
            ..self.clone()
        }
    }

    fn grating_vector(&self) -> f64 {
        f64::from(self.qpm_order) * 2.0 * PI / self.poling_period_um
    }
}

/// Idler wavelength fixed by energy conservation.
pub fn idler_wavelength(pump_nm: f64, signal_nm: f64) -> Result<f64> {
    if !(signal_nm > pump_nm) {
        return Err(Error::Domain(format!(
            "signal {signal_nm} nm must be longer than pump {pump_nm} nm"
        )));
    }
    let idler = 1.0 / (1.0 / pump_nm - 1.0 / signal_nm);
    if !idler.is_finite() || idler <= 0.0 {
        return Err(Error::Domain("non-physical idler wavelength".into()));
    }
    Ok(idler)
}

fn wavevector(s: &SellmeierSet, wavelength_nm: f64, temperature_c: f64) -> Result<f64> {
    let n = refractive_index(s, wavelength_nm, temperature_c)?;
    Ok(2.0 * PI * n / (wavelength_nm / 1000.0))
}

/// Material mismatch `k_p − k_s − k_i` in rad/µm, without the grating term.
fn material_mismatch(s: &SellmeierSet, temperature_c: f64, pump_nm: f64, signal_nm: f64) -> Result<f64> {
    let idler_nm = idler_wavelength(pump_nm, signal_nm)?;
    Ok(wavevector(s, pump_nm, temperature_c)?
        - wavevector(s, signal_nm, temperature_c)?
        - wavevector(s, idler_nm, temperature_c)?)
}

/// `Δk = k_p − k_s − k_i − m·2π/Λ` in rad/µm at the crystal temperature.
pub fn phase_mismatch(c: &CrystalSpec, pump_nm: f64, signal_nm: f64) -> Result<f64> {
    Ok(material_mismatch(&c.sellmeier, c.temperature_c, pump_nm, signal_nm)? - c.grating_vector())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningPoint {
    pub pump_wavelength_nm: f64,
    pub temperature_c: f64,
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
}

impl TuningPoint {
    /// Builds a point from pump and the shorter-wavelength photon; the idler follows from energy conservation.
    pub fn from_signal(pump_nm: f64, temperature_c: f64, signal_nm: f64) -> Result<Self> {
        let idler = idler_wavelength(pump_nm, signal_nm)?;
        let (s, i) = if signal_nm <= idler {
            (signal_nm, idler)
        } else {
            (idler, signal_nm)
        };
        Ok(TuningPoint {
            pump_wavelength_nm: pump_nm,
            temperature_c,
            signal_wavelength_nm: s,
            idler_wavelength_nm: i,
        })
    }

    pub fn energy_mismatch(&self) -> f64 {
        let lhs = 1.0 / self.pump_wavelength_nm;
        let rhs = 1.0 / self.signal_wavelength_nm + 1.0 / self.idler_wavelength_nm;
        ((lhs - rhs) / lhs).abs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.energy_mismatch() > ENERGY_TOLERANCE {
            return Err(Error::param("tuning_point", "violates energy conservation"));
        }
        if self.signal_wavelength_nm > self.idler_wavelength_nm {
            return Err(Error::param("tuning_point", "signal must not exceed idler"));
        }
        Ok(())
    }
}

fn bisect<F>(mut lo: f64, mut hi: f64, mut f_lo: f64, f: F, x_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= x_tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Non-degenerate signal/idler pair at the crystal temperature, or `None` below cutoff.
pub fn solve_pair_wavelengths(c: &CrystalSpec, pump_nm: f64) -> Result<Option<TuningPoint>> {
    let (p_lo, p_hi) = PUMP_BAND_NM;
    if !(p_lo..=p_hi).contains(&pump_nm) {
        return Err(Error::Domain(format!("pump {pump_nm} nm outside [{p_lo}, {p_hi}] nm")));
    }
    let degenerate = 2.0 * pump_nm;
    let (s_lo, s_hi) = SIGNAL_SCAN_NM;
    let upper = s_hi.min(degenerate);
    let n_steps = ((upper - s_lo) / SIGNAL_GRID_STEP_NM).floor() as usize;
    let mut grid: Vec<f64> = (0..=n_steps)
        .map(|i| s_lo + i as f64 * SIGNAL_GRID_STEP_NM)
        .filter(|&s| s < upper)
        .collect();
    grid.push(upper);

    let dk = |s: f64| phase_mismatch(c, pump_nm, s);
    let values = grid.iter().map(|&s| dk(s)).collect::<Result<Vec<_>>>()?;

    // walk down from degeneracy so the branch nearest degeneracy wins
    for i in (0..grid.len() - 1).rev() {
        let (a, b) = (grid[i], grid[i + 1]);
        let (fa, fb) = (values[i], values[i + 1]);
        if fb == 0.0 {
            return TuningPoint::from_signal(pump_nm, c.temperature_c, b).map(Some);
        }
        if fa == 0.0 || (fa < 0.0) != (fb < 0.0) {
            let root = if fa == 0.0 { a } else { bisect(a, b, fa, dk, 1e-9)? };
            return TuningPoint::from_signal(pump_nm, c.temperature_c, root).map(Some);
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Degeneracy {
    pub temperature_c: f64,
    pub wavelength_nm: f64,
}

/// Lowest temperature at which the pump phase-matches, where signal and idler are degenerate.
pub fn min_phasematch_temperature(c: &CrystalSpec, pump_nm: f64) -> Result<Degeneracy> {
    let degenerate = 2.0 * pump_nm;
    let grating = c.grating_vector();
    let f = |t: f64| Ok(material_mismatch(&c.sellmeier, t, pump_nm, degenerate)? - grating);
    let (t_lo, t_hi) = DEGENERACY_SCAN_C;
    let mut prev_t = t_lo;
    let mut prev = f(t_lo)?;
    let steps = (t_hi - t_lo).round() as usize;
    for i in 1..=steps {
        let t = t_lo + i as f64;
        let v = f(t)?;
        if prev == 0.0 {
            return Ok(Degeneracy {
                temperature_c: prev_t,
                wavelength_nm: degenerate,
            });
        }
        if (v < 0.0) != (prev < 0.0) || v == 0.0 {
            let root = bisect(prev_t, t, prev, f, 1e-9)?;
            return Ok(Degeneracy {
                temperature_c: root,
                wavelength_nm: degenerate,
            });
        }
        prev_t = t;
        prev = v;
    }
    Err(Error::Domain(format!(
        "no degeneracy temperature for pump {pump_nm} nm in [{t_lo}, {t_hi}] C"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolingFit {
    pub poling_period_um: f64,
    /// Sum of squared Δk residuals, (rad/µm)².
    pub residual: f64,
}

/// Least-squares poling period over measured tuning points.
///
/// Δk is affine in the grating vector `G = m·2π/Λ`, so the optimum is
/// `G = mean(k_p − k_s − k_i)` over the points.
pub fn fit_poling_period(points: &[TuningPoint], s: &SellmeierSet, qpm_order: u32) -> Result<PolingFit> {
    if points.is_empty() {
        return Err(Error::param("points", "at least one tuning point is required"));
    }
    if qpm_order == 0 {
        return Err(Error::param("qpm_order", "must be >= 1"));
    }
    let mut mismatch = points
        .iter()
        .map(|p| {
            p.validate()?;
            material_mismatch(s, p.temperature_c, p.pump_wavelength_nm, p.signal_wavelength_nm)
        })
        .collect::<Result<Vec<_>>>()?;
    // order-independent summation
    mismatch.sort_by(f64::total_cmp);
    let grating = mismatch.iter().sum::<f64>() / mismatch.len() as f64;
    if !(grating > 0.0) {
        return Err(Error::Convergence(format!(
            "fitted grating vector {grating} rad/um is not positive"
        )));
    }
    let residual = mismatch.iter().map(|k| (k - grating).powi(2)).sum();
    Ok(PolingFit {
        poling_period_um: f64::from(qpm_order) * 2.0 * PI / grating,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationAnchor {
    pub temperature_c: f64,
    pub wavelength_nm: f64,
}

/// Two-point temperature → wavelength map for the primary-source 775 nm band photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpktpCalibration {
    pub anchors: [CalibrationAnchor; 2],
}

impl PpktpCalibration {
    pub const RANGE_MARGIN_C: f64 = 5.0;

    pub fn new(a: CalibrationAnchor, b: CalibrationAnchor) -> Result<Self> {
        let cal = PpktpCalibration { anchors: [a, b] };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.anchors;
        if a.temperature_c == b.temperature_c {
            return Err(Error::param("ppktp.anchors", "anchor temperatures must differ"));
        }
        Ok(())
    }
}

pub fn ppktp_output_wavelength(cal: &PpktpCalibration, temperature_c: f64) -> Result<f64> {
    cal.validate()?;
    let [a, b] = cal.anchors;
    let lo = a.temperature_c.min(b.temperature_c) - PpktpCalibration::RANGE_MARGIN_C;
    let hi = a.temperature_c.max(b.temperature_c) + PpktpCalibration::RANGE_MARGIN_C;
    if !(lo..=hi).contains(&temperature_c) {
        return Err(Error::Domain(format!(
            "PPKTP temperature {temperature_c} C outside calibrated range [{lo}, {hi}] C"
        )));
    }
    let slope = (b.wavelength_nm - a.wavelength_nm) / (b.temperature_c - a.temperature_c);
    Ok(a.wavelength_nm + slope * (temperature_c - a.temperature_c))
}

/// Samples the tuning curve over `temperatures`; `None` entries lie below cutoff.
pub fn tuning_curve(c: &CrystalSpec, pump_nm: f64, temperatures: &[f64]) -> Result<Vec<(f64, Option<TuningPoint>)>> {
    temperatures
        .iter()
        .map(|&t| Ok((t, solve_pair_wavelengths(&c.at_temperature(t), pump_nm)?)))
        .collect()
}
