//! Triple-coincidence histograms: background, peak integration, significance, CSV I/O.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use serde::Serialize;

use crate::budget::UncertainValue;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "bin_start_ns,counts";
pub const DEFAULT_PEAK_WINDOW: usize = 3;
pub const MIN_OFF_PEAK_BINS: usize = 5;

/// Fixed-width time bins. Times are stored as integer picoseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Histogram {
    pub bin_width_ps: i64,
    pub start_offset_ps: i64,
    pub counts: Vec<u64>,
    #[serde(skip)]
    duration_ms: u64,
}

impl Histogram {
    pub fn new(bin_width_ps: i64, start_offset_ps: i64, counts: Vec<u64>, duration_s: f64) -> Result<Self> {
        if bin_width_ps <= 0 {
            return Err(Error::Histogram(format!(
                "bin width must be > 0, got {bin_width_ps} ps"
            )));
        }
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(Error::Histogram(format!("duration must be > 0, got {duration_s} s")));
        }
        Ok(Histogram {
            bin_width_ps,
            start_offset_ps,
            counts,
            duration_ms: (duration_s * 1000.0).round() as u64,
        })
    }

    pub fn zeros(bin_width_ps: i64, bins: usize, duration_s: f64) -> Result<Self> {
        Histogram::new(bin_width_ps, 0, vec![0; bins], duration_s)
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.bin_width_ps as f64 / 1000.0
    }

    pub fn start_offset_ns(&self) -> f64 {
        self.start_offset_ps as f64 / 1000.0
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ms as f64 / 1000.0
    }

    pub fn window_ns(&self) -> f64 {
        self.bin_width_ns() * self.counts.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_start_ps(&self, i: usize) -> i64 {
        self.start_offset_ps + i as i64 * self.bin_width_ps
    }

    /// Bin holding an interval measured from the histogram origin, if inside the window.
    pub fn bin_of(&self, interval_ps: i64) -> Option<usize> {
        let rel = interval_ps - self.start_offset_ps;
        if rel < 0 {
            return None;
        }
        let idx = (rel / self.bin_width_ps) as usize;
        (idx < self.counts.len()).then_some(idx)
    }

    pub fn with_offset(&self, start_offset_ps: i64) -> Histogram {
        Histogram {
            start_offset_ps,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Background {
    pub mean: f64,
    pub sigma: f64,
    pub bins: usize,
}

/// Mean and sample standard deviation of the bins outside `exclude`.
pub fn estimate_background(h: &Histogram, exclude: Range<usize>) -> Result<Background> {
    let off: Vec<f64> = h
        .counts
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(i))
        .map(|(_, &c)| c as f64)
        .collect();
    if off.len() < MIN_OFF_PEAK_BINS {
        return Err(Error::Histogram(format!(
            "{} off-peak bins, need at least {MIN_OFF_PEAK_BINS}",
            off.len()
        )));
    }
    let n = off.len() as f64;
    let mean = off.iter().sum::<f64>() / n;
    let var = off.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Background {
        mean,
        sigma: var.sqrt(),
        bins: off.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakReport {
    /// Half-open bin index range `[start, end)`.
    pub peak_window: (usize, usize),
    pub peak_window_start_ns: f64,
    pub raw_peak_counts: u64,
    pub peak_bin_max: u64,
    pub background_mean_per_bin: f64,
    pub background_sigma_per_bin: f64,
    pub net_counts: UncertainValue,
    pub net_rate_per_hour: UncertainValue,
    /// (max peak bin − background mean) / √(background mean)
    pub significance_sigma: f64,
    /// net counts / √(window · background mean)
    pub window_significance_sigma: f64,
}

fn poisson_significance(excess: f64, expected: f64) -> f64 {
    // one-count floor keeps an empty background finite
    (excess / expected.max(1.0).sqrt()).max(0.0)
}

/// Integrates the `window_size`-bin window with the largest sum against the off-peak background.
pub fn analyze_peak(h: &Histogram, window_size: usize) -> Result<PeakReport> {
    if h.counts.is_empty() {
        return Err(Error::Histogram("empty histogram".into()));
    }
    if window_size == 0 || window_size.is_multiple_of(2) {
        return Err(Error::Histogram(format!("window size must be odd, got {window_size}")));
    }
    if window_size >= h.counts.len() {
        return Err(Error::Histogram(format!(
            "window of {window_size} bins does not fit {} bins",
            h.counts.len()
        )));
    }
    let mut best = (0usize, 0u64);
    let mut sum: u64 = h.counts[..window_size].iter().sum();
    best.1 = sum;
    for start in 1..=h.counts.len() - window_size {
        sum = sum + h.counts[start + window_size - 1] - h.counts[start - 1];
        if sum > best.1 {
            best = (start, sum);
        }
    }
    let (start, raw) = best;
    let window = start..start + window_size;
    let bg = estimate_background(h, window.clone())?;
    let peak_bin_max = h.counts[window.clone()].iter().copied().max().unwrap_or(0);

    let expected_bg = window_size as f64 * bg.mean;
    let net = raw as f64 - expected_bg;
    let net_sigma = (raw as f64 + expected_bg).sqrt();
    let hours = h.duration_s() / 3600.0;
    Ok(PeakReport {
        peak_window: (window.start, window.end),
        peak_window_start_ns: h.bin_start_ps(start) as f64 / 1000.0,
        raw_peak_counts: raw,
        peak_bin_max,
        background_mean_per_bin: bg.mean,
        background_sigma_per_bin: bg.sigma,
        net_counts: UncertainValue::new(net, net_sigma),
        net_rate_per_hour: UncertainValue::new(net / hours, net_sigma / hours),
        significance_sigma: poisson_significance(peak_bin_max as f64 - bg.mean, bg.mean),
        window_significance_sigma: poisson_significance(net, expected_bg),
    })
}

fn format_ps_as_ns(ps: i64) -> String {
    let sign = if ps < 0 { "-" } else { "" };
    let abs = ps.unsigned_abs();
    let (whole, frac) = (abs / 1000, abs % 1000);
    if frac == 0 {
        format!("{sign}{whole}")
    } else {
        let digits = format!("{frac:03}");
        format!("{sign}{whole}.{}", digits.trim_end_matches('0'))
    }
}

fn parse_ns_as_ps(field: &str) -> Option<i64> {
    let x: f64 = field.parse().ok()?;
    let ps = (x * 1000.0).round();
    (x.is_finite() && ((x * 1000.0) - ps).abs() < 1e-6).then_some(ps as i64)
}

pub fn to_csv_string(h: &Histogram) -> String {
    let mut out = String::with_capacity(16 * (h.counts.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{}", format_ps_as_ns(h.bin_start_ps(i)), c);
    }
    out
}

pub fn parse_csv(text: &str, duration_s: f64) -> Result<Histogram> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_start_matches('\u{feff}') == CSV_HEADER => {}
        Some((_, other)) => {
            return Err(Error::Csv {
                line: 1,
                message: format!("expected header `{CSV_HEADER}`, found `{other}`"),
            })
        }
        None => {
            return Err(Error::Csv {
                line: 1,
                message: "missing header".into(),
            })
        }
    }
    let mut starts = Vec::new();
    let mut counts = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let err = |message: String| Error::Csv { line: line_no, message };
        let mut fields = line.split(',');
        let (Some(start), Some(count), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(format!("expected 2 fields, found `{line}`")));
        };
        let start = parse_ns_as_ps(start.trim()).ok_or_else(|| err(format!("bad bin start `{start}`")))?;
        let count = count.trim();
        if count.starts_with('-') {
            return Err(err(format!("negative count `{count}`")));
        }
        let count: u64 = count.parse().map_err(|_| err(format!("bad count `{count}`")))?;
        starts.push(start);
        counts.push(count);
    }
    if starts.len() < 2 {
        return Err(Error::Csv {
            line: starts.len() + 1,
            message: "need at least two bins to fix the bin width".into(),
        });
    }
    let width = starts[1] - starts[0];
    if width <= 0 {
        return Err(Error::Csv {
            line: 3,
            message: "bin starts must increase".into(),
        });
    }
    for (i, pair) in starts.windows(2).enumerate() {
        if pair[1] - pair[0] != width {
            return Err(Error::Csv {
                line: i + 3,
                message: format!("inconsistent bin width: {} ps vs {width} ps", pair[1] - pair[0]),
            });
        }
    }
    Histogram::new(width, starts[0], counts, duration_s)
}

pub fn write_histogram_csv(h: &Histogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(h)).map_err(|e| Error::io(path, e))
}

pub fn read_histogram_csv(path: impl AsRef<Path>, duration_s: f64) -> Result<Histogram> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, duration_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(counts: Vec<u64>) -> Histogram {
        Histogram::new(800, 0, counts, 72_000.0).unwrap()
    }

    #[test]
    fn flat_background() {
        let h = hist(vec![7; 25]);
        let bg = estimate_background(&h, 11..14).unwrap();
        assert_eq!(bg.mean, 7.0);
        assert_eq!(bg.sigma, 0.0);
        assert_eq!(bg.bins, 22);
    }

    #[test]
    fn too_few_off_peak_bins() {
        let h = hist(vec![1; 7]);
        assert!(estimate_background(&h, 2..5).is_err());
    }

    #[test]
    fn all_zero_histogram() {
        let r = analyze_peak(&hist(vec![0; 25]), 3).unwrap();
        assert_eq!(r.raw_peak_counts, 0);
        assert_eq!(r.significance_sigma, 0.0);
    }

    #[test]
    fn empty_and_bad_windows() {
        assert!(analyze_peak(&hist(vec![]), 3).is_err());
        assert!(analyze_peak(&hist(vec![1; 25]), 2).is_err());
        assert!(analyze_peak(&hist(vec![1; 3]), 3).is_err());
    }

    #[test]
    fn peak_is_located_and_integrated() {
        let mut counts = vec![10; 25];
        counts[11] = 30;
        counts[12] = 60;
        counts[13] = 35;
        let r = analyze_peak(&hist(counts), 3).unwrap();
        assert_eq!(r.peak_window, (11, 14));
        assert_eq!(r.raw_peak_counts, 125);
        assert_eq!(r.background_mean_per_bin, 10.0);
        assert_eq!(r.net_counts.mean, 95.0);
        assert!((r.net_counts.sigma - (155.0f64).sqrt()).abs() < 1e-12);
        assert!((r.net_rate_per_hour.mean - 95.0 / 20.0).abs() < 1e-12);
        assert!((r.significance_sigma - 50.0 / 10f64.sqrt()).abs() < 1e-12);
        assert!((r.peak_window_start_ns - 8.8).abs() < 1e-12);
    }

    #[test]
    fn significance_monotone_in_peak() {
        let mut prev = -1.0;
        for peak in 10..80u64 {
            let mut counts = vec![10; 25];
            counts[12] = peak;
            let s = analyze_peak(&hist(counts), 3).unwrap().significance_sigma;
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn ns_formatting() {
        assert_eq!(format_ps_as_ns(0), "0");
        assert_eq!(format_ps_as_ns(800), "0.8");
        assert_eq!(format_ps_as_ns(2400), "2.4");
        assert_eq!(format_ps_as_ns(19_200), "19.2");
        assert_eq!(format_ps_as_ns(-1_250), "-1.25");
        assert_eq!(format_ps_as_ns(103), "0.103");
        assert_eq!(parse_ns_as_ps("2.4"), Some(2400));
        assert_eq!(parse_ns_as_ps("0.0001"), None);
    }

    #[test]
    fn csv_layout_is_exact() {
        let h = hist(vec![3, 0, 12]);
        assert_eq!(to_csv_string(&h), "bin_start_ns,counts\n0,3\n0.8,0\n1.6,12\n");
    }

    #[test]
    fn csv_rejects_negative_count_with_line() {
        let err = parse_csv("bin_start_ns,counts\n0,3\n0.8,-1\n1.6,2\n", 1.0).unwrap_err();
        match err {
            Error::Csv { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("negative"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_rejects_malformed() {
        assert!(parse_csv("start,counts\n0,1\n", 1.0).is_err());
        assert!(parse_csv("bin_start_ns,counts\n0,1\n0.8\n", 1.0).is_err());
        assert!(parse_csv("bin_start_ns,counts\n0,1\n0.8,2\n2.0,1\n", 1.0).is_err());
        assert!(parse_csv("bin_start_ns,counts\n0,x\n0.8,2\n", 1.0).is_err());
        assert!(parse_csv("bin_start_ns,counts\n0,1\n", 1.0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let h = Histogram::new(800, -4000, vec![5, 9, 1, 0, 44], 3600.0).unwrap();
        write_histogram_csv(&h, &path).unwrap();
        assert_eq!(read_histogram_csv(&path, 3600.0).unwrap(), h);
    }
}
