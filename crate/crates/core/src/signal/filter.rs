//! Butterworth IIR design (bilinear transform of the analog prototype) and
//! zero-phase forward-backward filtering with second-order sections.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::SignalError;

/// One biquad: `b0 + b1 z^-1 + b2 z^-2` over `1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    Lowpass(f64),
    Highpass(f64),
    Bandpass(f64, f64),
}

/// Designs an `order`-th order Butterworth filter. For band-pass designs the
/// prototype order is `order`, giving `2 * order` poles.
pub fn butterworth(order: usize, kind: FilterKind, fs: f64) -> Result<Sos, SignalError> {
    let nyquist = fs / 2.0;
    let check = |f: f64| {
        if f <= 0.0 || f >= nyquist {
            Err(SignalError::CutoffOutOfRange { cutoff: f, nyquist })
        } else {
            Ok(())
        }
    };
    match kind {
        FilterKind::Lowpass(f) | FilterKind::Highpass(f) => check(f)?,
        FilterKind::Bandpass(lo, hi) => {
            check(lo)?;
            check(hi)?;
            if lo >= hi {
                return Err(SignalError::InvalidBand { low: lo, high: hi });
            }
        }
    }
    assert!(order > 0, "filter order must be positive");

    let prewarp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    // Analog prototype poles on the left half of the unit circle.
    let proto: Vec<Complex64> = (0..order)
        .map(|i| {
            let m = -(order as f64) + 1.0 + 2.0 * i as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * order as f64))
        })
        .collect();

    let (zeros, poles, gain) = match kind {
        FilterKind::Lowpass(f) => {
            let wo = prewarp(f);
            let poles: Vec<_> = proto.iter().map(|p| p * wo).collect();
            (Vec::new(), poles, wo.powi(order as i32))
        }
        FilterKind::Highpass(f) => {
            let wo = prewarp(f);
            let poles: Vec<_> = proto.iter().map(|p| wo / p).collect();
            let prod: Complex64 = proto.iter().map(|p| -p).product();
            (vec![Complex64::new(0.0, 0.0); order], poles, (1.0 / prod).re)
        }
        FilterKind::Bandpass(lo, hi) => {
            let (w1, w2) = (prewarp(lo), prewarp(hi));
            let bw = w2 - w1;
            let wo = (w1 * w2).sqrt();
            let mut poles = Vec::with_capacity(2 * order);
            for p in &proto {
                let half = p * (bw / 2.0);
                let root = (half * half - wo * wo).sqrt();
                poles.push(half + root);
                poles.push(half - root);
            }
            (vec![Complex64::new(0.0, 0.0); order], poles, bw.powi(order as i32))
        }
    };

    // Bilinear transform.
    let fs2 = 2.0 * fs;
    let mut zd: Vec<Complex64> = zeros.iter().map(|z| (fs2 + z) / (fs2 - z)).collect();
    let pd: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    zd.resize(pd.len(), Complex64::new(-1.0, 0.0));
    let num: Complex64 = zeros.iter().map(|z| fs2 - z).product();
    let den: Complex64 = poles.iter().map(|p| fs2 - p).product();
    let kd = gain * (num / den).re;

    Ok(zpk_to_sos(&zd, &pd, kd))
}

fn zpk_to_sos(zeros: &[Complex64], poles: &[Complex64], gain: f64) -> Sos {
    const IM_TOL: f64 = 1e-10;
    let mut denominators: Vec<[f64; 2]> = Vec::new();
    let mut real_poles = Vec::new();
    for p in poles {
        if p.im > IM_TOL {
            denominators.push([-2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= IM_TOL {
            real_poles.push(p.re);
        }
    }
    for pair in real_poles.chunks(2) {
        match pair {
            [a, b] => denominators.push([-(a + b), a * b]),
            [a] => denominators.push([-a, 0.0]),
            _ => unreachable!(),
        }
    }

    // Butterworth digital zeros are real (+1 or -1); pairing the smallest with
    // the largest keeps band-pass sections balanced.
    let mut zr: Vec<f64> = zeros.iter().map(|z| z.re).collect();
    zr.sort_by(f64::total_cmp);
    let mut numerators = Vec::new();
    let (mut lo, mut hi) = (0usize, zr.len());
    while lo < hi {
        if hi - lo >= 2 {
            let (a, b) = (zr[lo], zr[hi - 1]);
            numerators.push([1.0, -(a + b), a * b]);
            lo += 1;
            hi -= 1;
        } else {
            numerators.push([1.0, -zr[lo], 0.0]);
            lo += 1;
        }
    }
    numerators.resize(denominators.len(), [1.0, 0.0, 0.0]);

    let mut sections: Vec<Biquad> = numerators
        .into_iter()
        .zip(denominators)
        .map(|(b, a)| Biquad { b, a })
        .collect();
    if let Some(first) = sections.first_mut() {
        for v in &mut first.b {
            *v *= gain;
        }
    }
    Sos { sections }
}

impl Sos {
    /// Magnitude response at `freq` Hz for sampling rate `fs`.
    pub fn magnitude(&self, freq: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * freq / fs;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| {
                let num = s.b[0] + s.b[1] * z1 + s.b[2] * z2;
                let den = 1.0 + s.a[0] * z1 + s.a[1] * z2;
                (num / den).norm()
            })
            .product()
    }

    /// Steady-state section states for a unit step input.
    fn step_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let dc = (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
                let y = dc * scale;
                let s2 = s.b[2] * scale - s.a[1] * y;
                let s1 = y - s.b[0] * scale;
                scale = y;
                [s1, s2]
            })
            .collect()
    }

    /// Causal filtering (direct form II transposed) starting from `state`.
    fn run(&self, x: &mut [f64], mut state: Vec<[f64; 2]>) {
        for v in x.iter_mut() {
            let mut sample = *v;
            for (s, st) in self.sections.iter().zip(state.iter_mut()) {
                let y = s.b[0] * sample + st[0];
                st[0] = s.b[1] * sample - s.a[0] * y + st[1];
                st[1] = s.b[2] * sample - s.a[1] * y;
                sample = y;
            }
            *v = sample;
        }
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.run(&mut out, vec![[0.0; 2]; self.sections.len()]);
        out
    }

    /// Zero-phase filtering: forward then backward over an odd-reflected
    /// extension of the signal, with steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }

        let zi = self.step_state();
        let scaled = |x0: f64| zi.iter().map(|s| [s[0] * x0, s[1] * x0]).collect::<Vec<_>>();

        let x0 = ext[0];
        self.run(&mut ext, scaled(x0));
        ext.reverse();
        let y0 = ext[0];
        self.run(&mut ext, scaled(y0));
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowpass_dc_gain_is_unity() {
        let sos = butterworth(4, FilterKind::Lowpass(20.0), 128.0).unwrap();
        assert!((sos.magnitude(0.0, 128.0) - 1.0).abs() < 1e-12);
        assert!((sos.magnitude(20.0, 128.0) - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn bandpass_edges_are_half_power() {
        let sos = butterworth(4, FilterKind::Bandpass(8.0, 12.0), 128.0).unwrap();
        assert!((sos.magnitude(8.0, 128.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((sos.magnitude(12.0, 128.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!(sos.magnitude(0.0, 128.0) < 1e-12);
        assert_eq!(sos.sections.len(), 4);
    }

    #[test]
    fn highpass_blocks_dc() {
        let sos = butterworth(3, FilterKind::Highpass(10.0), 100.0).unwrap();
        assert!(sos.magnitude(0.0, 100.0) < 1e-12);
        assert!((sos.magnitude(49.9, 100.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cutoff_beyond_nyquist_is_rejected() {
        assert!(butterworth(4, FilterKind::Lowpass(70.0), 128.0).is_err());
        assert!(butterworth(4, FilterKind::Bandpass(12.0, 8.0), 128.0).is_err());
    }

    #[test]
    fn filtfilt_has_no_phase_shift() {
        let fs = 128.0;
        let x: Vec<f64> = (0..2048)
            .map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin())
            .collect();
        let sos = butterworth(4, FilterKind::Bandpass(6.0, 16.0), fs).unwrap();
        let y = sos.filtfilt(&x);
        let gain = sos.magnitude(10.0, fs).powi(2);
        for i in 300..1700 {
            assert!((y[i] - gain * x[i]).abs() < 1e-3, "sample {i}");
        }
    }
}
