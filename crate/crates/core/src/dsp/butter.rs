use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One biquad: `[b0, b1, b2, a0, a1, a2]` with `a0 == 1`.
pub type Section = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandpassDesign {
    pub order: usize,
    pub band_hz: [f64; 2],
    pub fs_hz: f64,
}

impl Default for BandpassDesign {
    fn default() -> Self {
        Self { order: 5, band_hz: [0.1, 20.0], fs_hz: 64.0 }
    }
}

/// Second-order-sections IIR filter.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Section>,
    pub design: BandpassDesign,
}

/// The fixed band-pass used everywhere: order 5, 0.1–20 Hz at 64 Hz.
pub fn design_bandpass() -> SosFilter {
    design_butter_bandpass(BandpassDesign::default()).expect("default design is valid")
}

/// Digital Butterworth band-pass via the analog prototype, a low-pass to
/// band-pass transform on pre-warped edges and the bilinear transform.
pub fn design_butter_bandpass(design: BandpassDesign) -> Result<SosFilter> {
    let BandpassDesign { order, band_hz: [lo, hi], fs_hz } = design;
    if order == 0 || !(0.0 < lo && lo < hi && hi < fs_hz / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid band-pass design: order {order}, band [{lo}, {hi}] Hz at {fs_hz} Hz"
        )));
    }
    let n = order as f64;
    // Analog prototype poles on the left half of the unit circle.
    let proto: Vec<Complex64> = (0..order)
        .map(|k| {
            let m = -(order as f64) + 1.0 + 2.0 * k as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * n))
        })
        .collect();

    let warp = |f: f64| 2.0 * fs_hz * (PI * f / fs_hz).tan();
    let (w1, w2) = (warp(lo), warp(hi));
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    let mut analog_poles = Vec::with_capacity(2 * order);
    for p in &proto {
        let half = p * (bw / 2.0);
        let disc = (half * half - w0_sq).sqrt();
        analog_poles.push(half + disc);
        analog_poles.push(half - disc);
    }
    // `order` zeros at s = 0, `order` at infinity; gain bw^order.
    let fs2 = 2.0 * fs_hz;
    let mut gain = Complex64::new(bw.powi(order as i32), 0.0);
    gain *= Complex64::new(fs2, 0.0).powu(order as u32);
    for p in &analog_poles {
        gain /= fs2 - p;
    }
    let poles: Vec<Complex64> = analog_poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();

    let mut sections = pair_poles(&poles)?
        .into_iter()
        .map(|(a1, a2)| [1.0, 0.0, -1.0, 1.0, a1, a2])
        .collect::<Vec<_>>();
    // Poles closest to the unit circle go last.
    sections.sort_by(|a, b| a[5].abs().partial_cmp(&b[5].abs()).unwrap_or(std::cmp::Ordering::Equal));
    let k = gain.re;
    for c in &mut sections[0][..3] {
        *c *= k;
    }
    Ok(SosFilter { sections, design })
}

/// Groups poles into conjugate pairs (complex) or pairs of reals, returning
/// denominator coefficients `(a1, a2)` per section.
fn pair_poles(poles: &[Complex64]) -> Result<Vec<(f64, f64)>> {
    const TOL: f64 = 1e-10;
    let mut reals: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= TOL).map(|p| p.re).collect();
    let upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > TOL).collect();
    let lower = poles.iter().filter(|p| p.im < -TOL).count();
    if upper.len() != lower || reals.len() % 2 != 0 {
        return Err(Error::Numerical("pole set is not conjugate-symmetric".into()));
    }
    let mut out: Vec<(f64, f64)> = upper.iter().map(|p| (-2.0 * p.re, p.norm_sqr())).collect();
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    for pair in reals.chunks(2) {
        out.push((-(pair[0] + pair[1]), pair[0] * pair[1]));
    }
    Ok(out)
}

impl SosFilter {
    pub fn n_sections(&self) -> usize {
        self.sections.len()
    }

    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * PI * f_hz / self.design.fs_hz;
        let zi = Complex64::from_polar(1.0, -w);
        let zi2 = zi * zi;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            let num = s[0] + s[1] * zi + s[2] * zi2;
            let den = s[3] + s[4] * zi + s[5] * zi2;
            acc * num / den
        })
    }

    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.response(f_hz).norm()
    }

    /// Roots of every section denominator.
    pub fn poles(&self) -> Vec<Complex64> {
        self.sections
            .iter()
            .flat_map(|s| {
                let (a1, a2) = (s[4] / s[3], s[5] / s[3]);
                let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
                [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
            })
            .collect()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// `b0,b1,b2,a0,a1,a2` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("b0,b1,b2,a0,a1,a2\n");
        for sec in &self.sections {
            let row: Vec<String> = sec.iter().map(|v| format!("{v}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_and_stable() {
        let f = design_bandpass();
        assert_eq!(f.n_sections(), 5);
        assert!(f.sections.iter().all(|s| s[3] == 1.0));
        assert!(f.max_pole_radius() < 1.0 - 1e-6);
    }

    #[test]
    fn magnitude_targets() {
        let f = design_bandpass();
        assert_eq!(f.magnitude(0.0), 0.0);
        let m4 = f.magnitude(4.0);
        assert!((0.98..=1.001).contains(&m4), "|H(4)| = {m4}");
        assert!(f.magnitude(30.0) < 0.1);
    }

    #[test]
    fn edges_are_half_power() {
        let f = design_bandpass();
        for edge in [0.1, 20.0] {
            let m = f.magnitude(edge);
            assert!((m - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6, "|H({edge})| = {m}");
        }
    }

    #[test]
    fn csv_has_one_row_per_section() {
        let csv = design_bandpass().to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("b0,b1,b2,a0,a1,a2"));
    }

    #[test]
    fn rejects_band_above_nyquist() {
        let bad = BandpassDesign { band_hz: [0.1, 40.0], ..Default::default() };
        assert!(design_butter_bandpass(bad).is_err());
    }
}
