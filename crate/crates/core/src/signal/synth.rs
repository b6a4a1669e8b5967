use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{BandSpec, RawTrial, SignalError};
use crate::montage::{RegionMap, PLANTED_REGIONS};

/// Rating emitted for class-1 and class-0 trials.
pub const HIGH_RATING: f64 = 7.5;
pub const LOW_RATING: f64 = 2.5;

/// Parameters of the synthetic recording generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub participants: u32,
    pub trials: u32,
    /// Class-1 alpha and gamma amplitudes are multiplied by `1 + separation`
    /// in the planted channels.
    pub separation: f64,
    /// Log-standard-deviation of the per-participant, per-channel gain.
    pub domain_shift: f64,
    pub n_channels: usize,
    pub sampling_rate: f64,
    pub duration_s: f64,
    pub planted_channels: Vec<usize>,
    /// Oscillation amplitude per band, in theta/alpha/beta/gamma order.
    pub band_amplitudes: [f64; 4],
    /// Log-standard-deviation of the per-trial amplitude jitter.
    pub jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let planted = RegionMap::default_32()
            .channels_of(&PLANTED_REGIONS)
            .expect("bundled map holds the planted regions");
        Self {
            seed: 0,
            participants: 4,
            trials: 20,
            separation: 1.0,
            domain_shift: 0.0,
            n_channels: 32,
            sampling_rate: 128.0,
            duration_s: 60.0,
            planted_channels: planted,
            band_amplitudes: [2.0, 2.0, 1.5, 1.0],
            jitter: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |msg: String| Err(SignalError::InvalidSynth(msg));
        if !(self.separation >= 0.0) {
            return bad(format!("separation must be >= 0, got {}", self.separation));
        }
        if !(self.domain_shift >= 0.0) {
            return bad(format!("domain shift must be >= 0, got {}", self.domain_shift));
        }
        if !(self.sampling_rate > 0.0 && self.duration_s > 0.0) {
            return bad("sampling rate and duration must be positive".into());
        }
        if self.sampling_rate / 2.0 <= 45.0 {
            return bad(format!(
                "sampling rate {} Hz cannot carry the gamma band",
                self.sampling_rate
            ));
        }
        if let Some(&c) = self.planted_channels.iter().find(|&&c| c >= self.n_channels) {
            return bad(format!("planted channel {c} >= {}", self.n_channels));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates `participants * trials` labelled recordings. Each participant
/// gets an equal number of class-0 and class-1 trials (one extra class-0
/// trial for odd counts), in a shuffled order.
///
/// Every trial draws from its own random stream, so output is identical for
/// a fixed configuration regardless of evaluation order.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Vec<RawTrial>, SignalError> {
    cfg.validate()?;
    let bands = BandSpec::defaults();
    let len = (cfg.duration_s * cfg.sampling_rate).round() as usize;
    let mut planted = vec![false; cfg.n_channels];
    for &c in &cfg.planted_channels {
        planted[c] = true;
    }

    let mut out = Vec::with_capacity((cfg.participants * cfg.trials) as usize);
    for p in 0..cfg.participants {
        let p_stream = (u64::from(p) + 1) << 32;
        let mut meta = stream_rng(cfg.seed, p_stream);
        let gains: Vec<f64> = (0..cfg.n_channels)
            .map(|_| (cfg.domain_shift * meta.sample::<f64, _>(StandardNormal)).exp())
            .collect();
        let mut classes: Vec<bool> = (0..cfg.trials).map(|t| t < cfg.trials / 2).collect();
        classes.shuffle(&mut meta);

        for (t, &high) in classes.iter().enumerate() {
            let mut rng = stream_rng(cfg.seed, p_stream | (t as u64 + 1));
            let channels = (0..cfg.n_channels)
                .map(|c| {
                    let mut x: Vec<f64> =
                        (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    for (b, band) in bands.iter().enumerate() {
                        let freq = rng.gen_range(band.low_hz + 0.5..band.high_hz - 0.5);
                        let phase = rng.gen_range(0.0..2.0 * PI);
                        let jitter = (cfg.jitter * rng.sample::<f64, _>(StandardNormal)).exp();
                        let boosted = high && planted[c] && (b == 1 || b == 3);
                        let amp = cfg.band_amplitudes[b]
                            * jitter
                            * if boosted { 1.0 + cfg.separation } else { 1.0 };
                        let w = 2.0 * PI * freq / cfg.sampling_rate;
                        for (i, v) in x.iter_mut().enumerate() {
                            *v += amp * (w * i as f64 + phase).sin();
                        }
                    }
                    x.iter_mut().for_each(|v| *v *= gains[c]);
                    x
                })
                .collect();
            let rating = if high { HIGH_RATING } else { LOW_RATING };
            out.push(RawTrial {
                participant: p,
                trial: t as u32,
                channels,
                sampling_rate: cfg.sampling_rate,
                valence: rating,
                arousal: rating,
            });
        }
    }
    Ok(out)
}
