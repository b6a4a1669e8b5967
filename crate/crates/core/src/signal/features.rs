use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::filter::{butterworth, FilterKind};
use super::SignalError;
use crate::autodiff::Matrix;

/// Filter order of both the anti-alias low-pass and the band filters.
pub const FILTER_ORDER: usize = 4;
/// Variance floor applied before taking the log in [`differential_entropy`].
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// One recording: `channels[c][t]` at `sampling_rate` Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrial {
    pub participant: u32,
    pub trial: u32,
    pub channels: Vec<Vec<f64>>,
    pub sampling_rate: f64,
    pub valence: f64,
    pub arousal: f64,
}

impl RawTrial {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.sampling_rate > 0.0) {
            return Err(SignalError::InvalidRate(self.sampling_rate));
        }
        let len = self.len();
        if let Some(c) = self.channels.iter().position(|ch| ch.len() != len) {
            return Err(SignalError::RaggedChannels {
                channel: c,
                expected: len,
                actual: self.channels[c].len(),
            });
        }
        for r in [self.valence, self.arousal] {
            if !(1.0..=9.0).contains(&r) {
                return Err(SignalError::RatingOutOfRange(r));
            }
        }
        Ok(())
    }

    fn with_channels(&self, channels: Vec<Vec<f64>>, sampling_rate: f64) -> Self {
        Self {
            channels,
            sampling_rate,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub fn new(name: &str, low_hz: f64, high_hz: f64) -> Self {
        Self {
            name: name.to_string(),
            low_hz,
            high_hz,
        }
    }

    /// Theta 4-7, alpha 8-12, beta 13-30, gamma 30-45 Hz.
    pub fn defaults() -> Vec<BandSpec> {
        vec![
            Self::new("theta", 4.0, 7.0),
            Self::new("alpha", 8.0, 12.0),
            Self::new("beta", 13.0, 30.0),
            Self::new("gamma", 30.0, 45.0),
        ]
    }

    /// Looks up a default band by name.
    pub fn by_name(name: &str) -> Result<BandSpec, SignalError> {
        Self::defaults()
            .into_iter()
            .find(|b| b.name == name)
            .ok_or_else(|| SignalError::UnknownBand(name.to_string()))
    }

    pub fn validate(&self, sampling_rate: f64) -> Result<(), SignalError> {
        let nyquist = sampling_rate / 2.0;
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz) {
            return Err(SignalError::InvalidBand {
                low: self.low_hz,
                high: self.high_hz,
            });
        }
        if self.high_hz >= nyquist {
            return Err(SignalError::CutoffOutOfRange {
                cutoff: self.high_hz,
                nyquist,
            });
        }
        Ok(())
    }
}

/// Anti-alias low-pass (at 80% of the new Nyquist) followed by decimation.
/// Non-integer ratios are resampled by linear interpolation of the filtered
/// signal. Output length is `floor(len * target / source)`.
pub fn downsample(trial: &RawTrial, target_hz: f64) -> Result<RawTrial, SignalError> {
    let source = trial.sampling_rate;
    if !(target_hz > 0.0) || target_hz >= source {
        return Err(SignalError::TargetRateNotBelowSource {
            target: target_hz,
            source_rate: source,
        });
    }
    let sos = butterworth(FILTER_ORDER, FilterKind::Lowpass(0.8 * target_hz / 2.0), source)?;
    let ratio = source / target_hz;
    let out_len = (trial.len() as f64 * target_hz / source).floor() as usize;
    let integer = (ratio - ratio.round()).abs() < 1e-9;
    let channels = trial
        .channels
        .iter()
        .map(|ch| {
            let smooth = sos.filtfilt(ch);
            (0..out_len)
                .map(|i| {
                    if integer {
                        smooth[i * ratio.round() as usize]
                    } else {
                        let t = i as f64 * ratio;
                        let lo = t.floor() as usize;
                        let frac = t - lo as f64;
                        let hi = (lo + 1).min(smooth.len() - 1);
                        smooth[lo] * (1.0 - frac) + smooth[hi] * frac
                    }
                })
                .collect()
        })
        .collect();
    Ok(trial.with_channels(channels, target_hz))
}

/// Zero-phase band-pass of every channel.
pub fn bandpass(trial: &RawTrial, band: &BandSpec) -> Result<RawTrial, SignalError> {
    band.validate(trial.sampling_rate)?;
    let sos = butterworth(
        FILTER_ORDER,
        FilterKind::Bandpass(band.low_hz, band.high_hz),
        trial.sampling_rate,
    )?;
    let channels = trial.channels.iter().map(|ch| sos.filtfilt(ch)).collect();
    Ok(trial.with_channels(channels, trial.sampling_rate))
}

/// Index ranges of `samples` equal samples, each cut into `k` equal
/// segments. Trailing points that do not fill a segment are dropped.
pub fn segment_and_split(
    len: usize,
    samples: usize,
    k: usize,
) -> Result<Vec<Vec<Range<usize>>>, SignalError> {
    let required = samples * k;
    if required == 0 || len < required {
        return Err(SignalError::TrialTooShort {
            required,
            actual: len,
        });
    }
    let seg = len / required;
    Ok((0..samples)
        .map(|s| {
            (0..k)
                .map(|j| {
                    let start = (s * k + j) * seg;
                    start..start + seg
                })
                .collect()
        })
        .collect())
}

/// Gaussian differential entropy `0.5 ln(2 pi e var)` with the unbiased
/// sample variance floored at [`VARIANCE_FLOOR`].
pub fn differential_entropy(segment: &[f64]) -> f64 {
    let n = segment.len();
    let var = if n < 2 {
        0.0
    } else {
        let mean = segment.iter().sum::<f64>() / n as f64;
        segment.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    };
    0.5 * (2.0 * PI * E * var.max(VARIANCE_FLOOR)).ln()
}

/// `r > 5` is high. A rating of exactly 5 is low when `threshold_inclusive`
/// is set, high otherwise.
pub fn binarize_rating(r: f64, threshold_inclusive: bool) -> Result<u8, SignalError> {
    if !(1.0..=9.0).contains(&r) {
        return Err(SignalError::RatingOutOfRange(r));
    }
    Ok(if r > 5.0 || (r == 5.0 && !threshold_inclusive) {
        1
    } else {
        0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Valence,
    Arousal,
}

impl Dimension {
    pub fn name(self) -> &'static str {
        match self {
            Dimension::Valence => "valence",
            Dimension::Arousal => "arousal",
        }
    }
}

impl std::str::FromStr for Dimension {
    type Err = SignalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "valence" => Ok(Dimension::Valence),
            "arousal" => Ok(Dimension::Arousal),
            other => Err(SignalError::Format(format!("unknown dimension `{other}`"))),
        }
    }
}

/// DE features of one sample, laid out `[channel][segment][band]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    pub n: usize,
    pub k: usize,
    pub bands: usize,
    pub x: Vec<f64>,
    pub valence: u8,
    pub arousal: u8,
    pub participant: u32,
    pub trial: u32,
    pub sample_index: u32,
}

impl FeatureSample {
    #[inline]
    pub fn get(&self, channel: usize, segment: usize, band: usize) -> f64 {
        self.x[(channel * self.k + segment) * self.bands + band]
    }

    pub fn label(&self, dim: Dimension) -> u8 {
        match dim {
            Dimension::Valence => self.valence,
            Dimension::Arousal => self.arousal,
        }
    }

    /// `n x k` slice of one band.
    pub fn band_matrix(&self, band: usize) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.k);
        for c in 0..self.n {
            for s in 0..self.k {
                m.set(c, s, self.get(c, s, band));
            }
        }
        m
    }

    /// Band slices side by side: `n x (k * bands)`, band-major columns.
    pub fn flat_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.k * self.bands);
        for c in 0..self.n {
            for b in 0..self.bands {
                for s in 0..self.k {
                    m.set(c, b * self.k + s, self.get(c, s, b));
                }
            }
        }
        m
    }

    /// Keeps a subset of bands, in the given order.
    pub fn select_bands(&self, bands: &[usize]) -> FeatureSample {
        let mut x = Vec::with_capacity(self.n * self.k * bands.len());
        for c in 0..self.n {
            for s in 0..self.k {
                x.extend(bands.iter().map(|&b| self.get(c, s, b)));
            }
        }
        FeatureSample {
            bands: bands.len(),
            x,
            ..self.clone()
        }
    }

    pub fn unit(&self) -> (u32, u32) {
        (self.participant, self.trial)
    }
}

/// Splits a preprocessed trial into `samples_per_trial` feature samples of
/// shape `n x k x bands`.
pub fn extract_features(
    trial: &RawTrial,
    bands: &[BandSpec],
    k: usize,
    samples_per_trial: usize,
    threshold_inclusive: bool,
) -> Result<Vec<FeatureSample>, SignalError> {
    trial.validate()?;
    let ranges = segment_and_split(trial.len(), samples_per_trial, k)?;
    let n = trial.channels.len();
    let d = bands.len();
    let valence = binarize_rating(trial.valence, threshold_inclusive)?;
    let arousal = binarize_rating(trial.arousal, threshold_inclusive)?;
    let filtered = bands
        .iter()
        .map(|b| bandpass(trial, b))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ranges
        .iter()
        .enumerate()
        .map(|(s_idx, segments)| {
            let mut x = vec![0.0; n * k * d];
            for c in 0..n {
                for (j, range) in segments.iter().enumerate() {
                    for (b, band) in filtered.iter().enumerate() {
                        x[(c * k + j) * d + b] =
                            differential_entropy(&band.channels[c][range.clone()]);
                    }
                }
            }
            FeatureSample {
                n,
                k,
                bands: d,
                x,
                valence,
                arousal,
                participant: trial.participant,
                trial: trial.trial,
                sample_index: s_idx as u32,
            }
        })
        .collect())
}

/// Per-coordinate z-scoring statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of every coordinate.
    pub fn fit(samples: &[&FeatureSample]) -> Result<Self, SignalError> {
        if samples.len() < 2 {
            return Err(SignalError::TooFewSamples {
                required: 2,
                actual: samples.len(),
            });
        }
        let dim = samples[0].x.len();
        if let Some(bad) = samples.iter().find(|s| s.x.len() != dim) {
            return Err(SignalError::Format(format!(
                "feature length {} differs from {}",
                bad.x.len(),
                dim
            )));
        }
        let count = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(&s.x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; dim];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(&s.x).zip(&mean) {
                *acc += (v - m).powi(2);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let v = v / count;
                // Rounding noise on a constant coordinate is not variance.
                if v <= 1e-24 * (1.0 + m * m) {
                    0.0
                } else {
                    v.sqrt()
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    /// Zero-variance coordinates map to 0.
    pub fn apply(&self, sample: &FeatureSample) -> FeatureSample {
        let x = sample
            .x
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s == 0.0 { 0.0 } else { (v - m) / s })
            .collect();
        FeatureSample {
            x,
            ..sample.clone()
        }
    }
}

/// Standardizes each participant's samples with that participant's own
/// statistics. Output order matches input order.
pub fn standardize(samples: &[FeatureSample]) -> Result<Vec<FeatureSample>, SignalError> {
    let mut groups: BTreeMap<u32, Vec<&FeatureSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.participant).or_default().push(s);
    }
    let mut fitted = BTreeMap::new();
    for (p, group) in &groups {
        let st = Standardizer::fit(group).map_err(|e| match e {
            SignalError::TooFewSamples { required, actual } => {
                SignalError::TooFewParticipantSamples {
                    participant: *p,
                    required,
                    actual,
                }
            }
            other => other,
        })?;
        fitted.insert(*p, st);
    }
    Ok(samples.iter().map(|s| fitted[&s.participant].apply(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn sine(freq: f64, fs: f64, len: usize, amp: f64) -> Vec<f64> {
        (0..len)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn trial(channels: Vec<Vec<f64>>, fs: f64) -> RawTrial {
        RawTrial {
            participant: 1,
            trial: 0,
            channels,
            sampling_rate: fs,
            valence: 7.2,
            arousal: 3.0,
        }
    }

    /// Amplitude of a sinusoid from the RMS of the central region.
    fn amplitude(x: &[f64]) -> f64 {
        let mid = &x[x.len() / 4..3 * x.len() / 4];
        (2.0 * mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
    }

    #[test]
    fn downsample_length() {
        let t = trial(vec![vec![0.0; 7680]], 512.0);
        let d = downsample(&t, 128.0).unwrap();
        assert_eq!(d.len(), 1920);
        assert_eq!(d.sampling_rate, 128.0);
    }

    #[test]
    fn downsample_rejects_upsampling() {
        let t = trial(vec![vec![0.0; 100]], 128.0);
        assert!(matches!(
            downsample(&t, 128.0),
            Err(SignalError::TargetRateNotBelowSource { .. })
        ));
        assert!(downsample(&t, 256.0).is_err());
    }

    #[test]
    fn downsample_preserves_in_band_sine() {
        let t = trial(vec![sine(10.0, 512.0, 7680, 1.0)], 512.0);
        let d = downsample(&t, 128.0).unwrap();
        let expected = sine(10.0, 128.0, 1920, 1.0);
        let amp = amplitude(&d.channels[0]);
        assert!((amp - 1.0).abs() < 0.02, "amplitude {amp}");
        let mid = 480..1440;
        let err = mid
            .map(|i| (d.channels[0][i] - expected[i]).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.02, "max deviation {err}");
    }

    #[test]
    fn downsample_suppresses_aliasing() {
        let x = sine(100.0, 512.0, 7680, 1.0);
        let input_power = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let d = downsample(&trial(vec![x], 512.0), 128.0).unwrap();
        let ch = &d.channels[0];
        let out_power = ch.iter().map(|v| v * v).sum::<f64>() / ch.len() as f64;
        assert!(out_power < 0.01 * input_power, "{out_power} vs {input_power}");
    }

    #[test]
    fn downsample_non_integer_ratio() {
        let t = trial(vec![sine(5.0, 200.0, 2000, 1.0)], 200.0);
        let d = downsample(&t, 128.0).unwrap();
        assert_eq!(d.len(), 1280);
        assert!((amplitude(&d.channels[0]) - 1.0).abs() < 0.02);
    }

    #[test]
    fn bandpass_removes_dc() {
        let t = trial(vec![vec![3.0; 2048]], 128.0);
        let out = bandpass(&t, &BandSpec::new("broad", 4.0, 45.0)).unwrap();
        let max = out.channels[0].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max < 1e-3 * 3.0, "max {max}");
    }

    #[test]
    fn bandpass_passes_alpha_and_blocks_gamma() {
        let t = trial(vec![sine(10.0, 128.0, 3840, 1.0)], 128.0);
        let alpha = bandpass(&t, &BandSpec::by_name("alpha").unwrap()).unwrap();
        let a = amplitude(&alpha.channels[0]);
        assert!((0.95..=1.05).contains(&a), "alpha amplitude {a}");
        let gamma = bandpass(&t, &BandSpec::by_name("gamma").unwrap()).unwrap();
        let g = amplitude(&gamma.channels[0]);
        assert!(g < 0.1, "gamma amplitude {g}");
    }

    #[test]
    fn bandpass_stopband_attenuation() {
        // One octave below alpha's lower edge.
        let t = trial(vec![sine(4.0, 128.0, 3840, 1.0)], 128.0);
        let out = bandpass(&t, &BandSpec::by_name("alpha").unwrap()).unwrap();
        assert!(amplitude(&out.channels[0]) < 0.1);
    }

    #[test]
    fn bandpass_rejects_band_past_nyquist() {
        let t = trial(vec![vec![0.0; 512]], 64.0);
        assert!(matches!(
            bandpass(&t, &BandSpec::by_name("gamma").unwrap()),
            Err(SignalError::CutoffOutOfRange { .. })
        ));
    }

    #[test]
    fn segmentation_lengths() {
        let r = segment_and_split(7680, 3, 10).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|s| s.len() == 10 && s.iter().all(|g| g.len() == 256)));
        let r = segment_and_split(3840, 3, 10).unwrap();
        assert!(r.iter().all(|s| s.iter().all(|g| g.len() == 128)));
        assert_eq!(segment_and_split(3841, 3, 10).unwrap(), r);
        match segment_and_split(29, 3, 10) {
            Err(SignalError::TrialTooShort { required, actual }) => {
                assert_eq!((required, actual), (30, 29));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn segmentation_partitions_the_truncated_trial() {
        let r = segment_and_split(3845, 3, 10).unwrap();
        let flat: Vec<usize> = r.iter().flatten().flat_map(|g| g.clone()).collect();
        assert_eq!(flat, (0..3840).collect::<Vec<_>>());
    }

    #[test]
    fn de_reference_values() {
        let sigma2 = 1.0 / (2.0 * PI * E);
        let x = [sigma2.sqrt(), -sigma2.sqrt()];
        // Two points +-a have unbiased variance 2a^2.
        let halved: Vec<f64> = x.iter().map(|v| v / 2f64.sqrt()).collect();
        assert!(differential_entropy(&halved).abs() < 1e-12);
        let constant = differential_entropy(&[4.0; 100]);
        assert!((constant - 0.5 * (2.0 * PI * E * 1e-10).ln()).abs() < 1e-12);
        assert!((constant + 10.0946).abs() < 1e-3);
    }

    #[test]
    fn de_of_unit_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..2560).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        assert!((differential_entropy(&x) - 1.41894).abs() < 0.05);
    }

    #[test]
    fn rating_rule() {
        assert_eq!(binarize_rating(7.2, true).unwrap(), 1);
        assert_eq!(binarize_rating(3.0, true).unwrap(), 0);
        assert_eq!(binarize_rating(5.0, true).unwrap(), 0);
        assert_eq!(binarize_rating(5.0, false).unwrap(), 1);
        assert!(binarize_rating(0.5, true).is_err());
        assert!(binarize_rating(9.5, true).is_err());
    }

    #[test]
    fn feature_shape_and_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let channels = (0..4)
            .map(|_| (0..3840).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let out = extract_features(&trial(channels, 128.0), &BandSpec::defaults(), 10, 3, true)
            .unwrap();
        assert_eq!(out.len(), 3);
        for (i, s) in out.iter().enumerate() {
            assert_eq!((s.n, s.k, s.bands, s.x.len()), (4, 10, 4, 160));
            assert_eq!(s.sample_index, i as u32);
            assert_eq!((s.valence, s.arousal), (1, 0));
        }
    }

    #[test]
    fn identical_channels_give_identical_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch: Vec<f64> = (0..1200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let out = extract_features(
            &trial(vec![ch.clone(), ch], 128.0),
            &BandSpec::defaults(),
            10,
            3,
            true,
        )
        .unwrap();
        for s in &out {
            for seg in 0..10 {
                for b in 0..4 {
                    assert_eq!(s.get(0, seg, b), s.get(1, seg, b));
                }
            }
        }
    }

    #[test]
    fn power_ratio_shows_up_as_de_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..7680)
                .map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let base = sine(10.0, 128.0, 7680, 1.0);
        let loud: Vec<f64> = base
            .iter()
            .zip(noise(&mut rng))
            .map(|(v, n)| 10f64.sqrt() * v + n)
            .collect();
        let quiet: Vec<f64> = base.iter().zip(noise(&mut rng)).map(|(v, n)| v + n).collect();
        let alpha = [BandSpec::by_name("alpha").unwrap()];
        let out = extract_features(&trial(vec![loud, quiet], 128.0), &alpha, 10, 3, true).unwrap();
        for s in &out {
            for seg in 0..10 {
                let diff = s.get(0, seg, 0) - s.get(1, seg, 0);
                assert!((diff - 0.5 * 100f64.ln() / 2.0).abs() < 0.01, "{diff}");
            }
        }
    }

    fn sample(participant: u32, x: Vec<f64>) -> FeatureSample {
        FeatureSample {
            n: 1,
            k: 1,
            bands: x.len(),
            x,
            valence: 0,
            arousal: 0,
            participant,
            trial: 0,
            sample_index: 0,
        }
    }

    #[test]
    fn standardize_small_cases() {
        let out = standardize(&[sample(1, vec![1.0, 5.0]), sample(1, vec![3.0, 5.0])]).unwrap();
        assert_eq!(out[0].x, vec![-1.0, 0.0]);
        assert_eq!(out[1].x, vec![1.0, 0.0]);
    }

    #[test]
    fn standardize_needs_two_samples_per_participant() {
        let err = standardize(&[
            sample(1, vec![1.0]),
            sample(1, vec![2.0]),
            sample(2, vec![3.0]),
        ])
        .unwrap_err();
        assert!(matches!(
            err,
            SignalError::TooFewParticipantSamples { participant: 2, .. }
        ));
    }

    #[test]
    fn standardize_random_set_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<FeatureSample> = (0..72)
            .map(|i| {
                let x = (0..6)
                    .map(|j| 3.0 * j as f64 + 2.0 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                sample(i % 2, x)
            })
            .collect();
        let out = standardize(&samples).unwrap();
        for p in 0..2 {
            let group: Vec<&FeatureSample> = out.iter().filter(|s| s.participant == p).collect();
            for j in 0..6 {
                let vals: Vec<f64> = group.iter().map(|s| s.x[j]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                assert!(mean.abs() < 1e-9);
                assert!((var - 1.0).abs() < 1e-6);
            }
        }
    }
}
