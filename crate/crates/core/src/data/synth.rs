//! Deterministic stand-in for paired vibration/acoustic fault recordings.
//!
//! Each class is a train of decaying resonance bursts at a class-specific
//! repetition rate, plus white Gaussian noise:
//!
//! ```text
//! x(t) = sum_k A_k exp(-(t - t_k) / tau) sin(2 pi f_res (t - t_k)) [t >= t_k] + sigma * n(t)
//! ```
//!
//! Both channels of a class share the burst times; the acoustic channel rings
//! at its own resonance and carries more noise.

use super::{
    normalize_window, window_starts, Modality, ModalityMode, Recording, Window, WindowedDataset,
    DEFAULT_SAMPLE_RATE_HZ, DEFAULT_WINDOW_LEN,
};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

pub const BEARING_CLASSES: [&str; 9] = [
    "Healthy", "Inner-1", "Inner-2", "Outer-1", "Outer-2", "Ball-1", "Ball-2", "Cage-1", "Cage-2",
];

pub const MOTOR_CLASSES: [&str; 8] = [
    "Class 1", "Class 2", "Class 3", "Class 4", "Class 5", "Class 6", "Class 7", "Class 8",
];

#[derive(Clone, Debug, PartialEq)]
pub struct FaultSignature {
    pub name: String,
    pub repetition_hz: f64,
    pub vibration_resonance_hz: f64,
    pub acoustic_resonance_hz: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub windows_per_class: usize,
    pub window_len: usize,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub signatures: Vec<FaultSignature>,
    pub vibration_noise: f64,
    pub acoustic_noise: f64,
    /// Burst decay time constant in seconds.
    pub decay_s: f64,
    /// Relative standard deviation of the inter-burst interval.
    pub jitter: f64,
}

impl SynthSpec {
    /// Defaults: 42 kHz, 1000-sample windows, acoustic noise twice the vibration noise.
    pub fn new(num_classes: usize, windows_per_class: usize, seed: u64) -> Self {
        Self {
            num_classes,
            windows_per_class,
            window_len: DEFAULT_WINDOW_LEN,
            seed,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            signatures: default_signatures(num_classes),
            vibration_noise: 0.35,
            acoustic_noise: 0.7,
            decay_s: 5e-4,
            jitter: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "synthetic data needs >= 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.windows_per_class == 0 || self.window_len == 0 {
            return Err(Error::Config("windows_per_class and window_len must be >= 1".into()));
        }
        if !(self.sample_rate_hz > 0.0) || !(self.decay_s > 0.0) {
            return Err(Error::Config("sample rate and decay must be positive".into()));
        }
        if !(self.vibration_noise >= 0.0) || !(self.acoustic_noise >= 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::Config("noise levels and jitter must be >= 0".into()));
        }
        if self.signatures.len() != self.num_classes {
            return Err(Error::Config(format!(
                "{} signatures for {} classes",
                self.signatures.len(),
                self.num_classes
            )));
        }
        for (i, a) in self.signatures.iter().enumerate() {
            if !(a.repetition_hz > 0.0) {
                return Err(Error::Config(format!("{}: repetition rate must be positive", a.name)));
            }
            if self.signatures[..i].iter().any(|b| b.repetition_hz == a.repetition_hz) {
                return Err(Error::Config(format!(
                    "{}: repetition rate {} Hz is not unique",
                    a.name, a.repetition_hz
                )));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.signatures.iter().map(|s| s.name.clone()).collect()
    }

    pub fn samples_per_recording(&self) -> usize {
        self.windows_per_class * self.window_len
    }
}

/// Distinct repetition rates and resonances spread across the band below Nyquist.
pub fn default_signatures(num_classes: usize) -> Vec<FaultSignature> {
    let names: Vec<String> = match num_classes {
        9 => BEARING_CLASSES.iter().map(|s| s.to_string()).collect(),
        8 => MOTOR_CLASSES.iter().map(|s| s.to_string()).collect(),
        n => (1..=n).map(|i| format!("Class {i}")).collect(),
    };
    let n = num_classes.max(1) as f64;
    names
        .into_iter()
        .enumerate()
        .map(|(c, name)| {
            let c = c as f64;
            FaultSignature {
                name,
                repetition_hz: 240.0 + 85.0 * c,
                vibration_resonance_hz: 1500.0 + c * 15_000.0 / n,
                acoustic_resonance_hz: 2200.0 + c * 14_000.0 / n,
                amplitude: 1.0,
            }
        })
        .collect()
}

/// One channel of class `class_id`, `windows_per_class * window_len` samples long.
///
/// Burst timing is drawn from `rng` first, so clones of the same generator give
/// both channels of a run identical burst times but independent noise.
pub fn synth_recording(
    class_id: usize,
    spec: &SynthSpec,
    rng: &mut Rng,
    modality: Modality,
) -> Result<Recording> {
    if class_id >= spec.num_classes || class_id >= spec.signatures.len() {
        return Err(Error::Config(format!(
            "class {class_id} outside 0..{}",
            spec.num_classes
        )));
    }
    let sig = &spec.signatures[class_id];
    let n = spec.samples_per_recording();
    let fs = spec.sample_rate_hz;
    let (resonance, sigma) = match modality {
        Modality::Vibration => (sig.vibration_resonance_hz, spec.vibration_noise),
        Modality::Acoustic => (sig.acoustic_resonance_hz, spec.acoustic_noise),
    };

    let period = fs / sig.repetition_hz;
    let mut bursts = Vec::new();
    let mut t = rng.uniform() * period;
    while t < n as f64 {
        let amp = sig.amplitude * (1.0 + 0.1 * rng.normal());
        bursts.push((t, amp));
        t += period * (1.0 + spec.jitter * rng.normal()).max(0.5);
    }
    let salt = match modality {
        Modality::Vibration => 0x5649_4252,
        Modality::Acoustic => 0x4143_4f55,
    };
    let mut noise_rng = Rng::new(rng.next_u64() ^ salt);

    let mut samples = vec![0.0; n];
    let tau = spec.decay_s * fs;
    let ring = (10.0 * tau).ceil() as usize;
    let w = std::f64::consts::TAU * resonance / fs;
    if sig.amplitude != 0.0 {
        for &(start, amp) in &bursts {
            let first = start.ceil() as usize;
            for i in first..(first + ring).min(n) {
                let dt = i as f64 - start;
                samples[i] += amp * (-dt / tau).exp() * (w * dt).sin();
            }
        }
    }
    if sigma > 0.0 {
        for s in &mut samples {
            *s += sigma * noise_rng.normal();
        }
    }
    Ok(Recording {
        samples,
        sample_rate_hz: fs,
        label: class_id,
        modality,
        source_id: format!("synth-{class_id}"),
    })
}

/// Paired, class-balanced, normalized windows; a pure function of `spec`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<WindowedDataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let mut windows = Vec::with_capacity(spec.num_classes * spec.windows_per_class);
    for class_id in 0..spec.num_classes {
        let class_rng = rng.fork();
        let vib = synth_recording(class_id, spec, &mut class_rng.clone(), Modality::Vibration)?;
        let ac = synth_recording(class_id, spec, &mut class_rng.clone(), Modality::Acoustic)?;
        for start in window_starts(vib.samples.len(), spec.window_len, spec.window_len)? {
            let cut = |r: &Recording| -> Result<Tensor> {
                Ok(normalize_window(&Tensor::new(
                    r.samples[start..start + spec.window_len].to_vec(),
                    &[spec.window_len, 1],
                )?))
            };
            windows.push(Window {
                vibration: Some(cut(&vib)?),
                acoustic: Some(cut(&ac)?),
                label: class_id,
                source_id: vib.source_id.clone(),
                start,
            });
        }
    }
    Ok(WindowedDataset {
        windows,
        class_names: spec.class_names(),
        mode: ModalityMode::Paired,
        window_len: spec.window_len,
    })
}

/// Both raw channels for every class, as written by the `generate` command.
pub fn synth_recordings(spec: &SynthSpec) -> Result<Vec<(Recording, Recording)>> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    (0..spec.num_classes)
        .map(|class_id| {
            let class_rng = rng.fork();
            Ok((
                synth_recording(class_id, spec, &mut class_rng.clone(), Modality::Vibration)?,
                synth_recording(class_id, spec, &mut class_rng.clone(), Modality::Acoustic)?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counts bursts as rising crossings of a threshold on the rectified signal,
    /// with a refractory gap shorter than any burst period.
    fn count_bursts(samples: &[f64], threshold: f64, refractory: usize) -> usize {
        let mut count = 0;
        let mut last: Option<usize> = None;
        for (i, &v) in samples.iter().enumerate() {
            if v.abs() > threshold && last.map_or(true, |l| i - l > refractory) {
                count += 1;
                last = Some(i);
            } else if v.abs() > threshold {
                last = Some(i);
            }
        }
        count
    }

    #[test]
    fn silent_when_no_signal_or_noise() {
        let mut spec = SynthSpec::new(9, 2, 1);
        spec.vibration_noise = 0.0;
        for s in &mut spec.signatures {
            s.amplitude = 0.0;
        }
        let r = synth_recording(3, &spec, &mut Rng::new(1), Modality::Vibration).unwrap();
        assert!(r.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn burst_count_over_one_second_tracks_repetition_rate() {
        let mut spec = SynthSpec::new(9, 42, 5);
        spec.vibration_noise = 0.0;
        for class_id in [0, 4, 8] {
            let r = synth_recording(class_id, &spec, &mut Rng::new(class_id as u64), Modality::Vibration)
                .unwrap();
            assert_eq!(r.samples.len(), 42_000);
            let f_rep = spec.signatures[class_id].repetition_hz;
            // A burst stays above 0.3 for ~25 samples; the fastest class repeats every ~45.
            let period = 42_000.0 / f_rep;
            let n = count_bursts(&r.samples, 0.3, (period * 0.3) as usize);
            assert!(
                (n as f64 - f_rep).abs() <= 2.0,
                "class {class_id}: {n} bursts vs {f_rep} Hz"
            );
        }
    }

    #[test]
    fn recordings_are_deterministic() {
        let spec = SynthSpec::new(9, 3, 5);
        let a = synth_recording(2, &spec, &mut Rng::new(9), Modality::Acoustic).unwrap();
        let b = synth_recording(2, &spec, &mut Rng::new(9), Modality::Acoustic).unwrap();
        assert_eq!(a, b);
        assert!(synth_recording(9, &spec, &mut Rng::new(9), Modality::Acoustic).is_err());
    }

    #[test]
    fn dataset_shape_and_balance() {
        let spec = SynthSpec::new(9, 20, 3);
        let ds = synth_dataset(&spec).unwrap();
        assert_eq!(ds.len(), 180);
        assert_eq!(ds.class_counts(), vec![20; 9]);
        assert_eq!(ds.class_names[0], "Healthy");
        assert_eq!(ds.mode, ModalityMode::Paired);
        assert_eq!(ds, synth_dataset(&spec).unwrap());
        let w = &ds.windows[25];
        assert_eq!(w.vibration.as_ref().unwrap().shape(), &[1000, 1]);
        assert_eq!(w.acoustic.as_ref().unwrap().shape(), &[1000, 1]);
    }

    #[test]
    fn acoustic_is_noisier() {
        let spec = SynthSpec::new(9, 5, 3);
        assert!(spec.acoustic_noise > spec.vibration_noise);
        let mut clean = spec.clone();
        clean.vibration_noise = 0.0;
        clean.acoustic_noise = 0.0;
        let snr = |m: Modality, sigma: f64| {
            let r = synth_recording(1, &clean, &mut Rng::new(4), m).unwrap();
            let power = r.samples.iter().map(|v| v * v).sum::<f64>() / r.samples.len() as f64;
            power / (sigma * sigma)
        };
        assert!(
            snr(Modality::Vibration, spec.vibration_noise) > snr(Modality::Acoustic, spec.acoustic_noise)
        );
    }

    #[test]
    fn validation() {
        assert!(SynthSpec::new(0, 5, 1).validate().is_err());
        let mut spec = SynthSpec::new(4, 5, 1);
        spec.signatures[1].repetition_hz = spec.signatures[0].repetition_hz;
        assert!(spec.validate().is_err());
        let rates: Vec<f64> = SynthSpec::new(9, 1, 1).signatures.iter().map(|s| s.repetition_hz).collect();
        assert!(rates.windows(2).all(|w| w[0] != w[1]));
    }
}
