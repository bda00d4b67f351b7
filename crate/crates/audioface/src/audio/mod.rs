//! Audio spectrogram extraction aligned to video frames.
//!
//! Each video frame gets a 256×24×2 complex spectrogram: 24 Hann-windowed
//! STFT columns (30 ms windows, 10 ms apart) centered on the frame
//! timestamp, with 256 frequency bins each (FFT size 512, DC dropped).

mod wav;

pub use wav::{read_wav_mono, resample_linear, write_wav_mono};

use crate::error::PipelineError;
use crate::Result;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub const SPEC_BINS: usize = 256;
pub const SPEC_FRAMES: usize = 24;

/// STFT extraction parameters.
#[derive(Debug, Clone, Copy)]
pub struct StftParams {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub bins: usize,
    pub columns: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams {
            sample_rate: 16_000,
            window_ms: 30.0,
            hop_ms: 10.0,
            fft_size: 512,
            bins: SPEC_BINS,
            columns: SPEC_FRAMES,
        }
    }
}

impl StftParams {
    pub fn window_samples(&self) -> usize {
        (self.window_ms / 1000.0 * self.sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms / 1000.0 * self.sample_rate as f64).round() as usize
    }
}

/// One video frame's complex spectrogram, `bins × columns × 2` reals
/// (real and imaginary parts interleaved last).
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub bins: usize,
    pub columns: usize,
    pub data: Vec<f32>,
    pub frame_timestamp: f64,
    /// True when part of the span fell outside the audio and was zero-padded.
    pub padded: bool,
}

impl Spectrogram {
    #[inline]
    pub fn at(&self, bin: usize, col: usize) -> (f32, f32) {
        let i = (bin * self.columns + col) * 2;
        (self.data[i], self.data[i + 1])
    }

    pub fn magnitude(&self, bin: usize, col: usize) -> f32 {
        let (re, im) = self.at(bin, col);
        (re * re + im * im).sqrt()
    }
}

/// Reusable STFT machinery (FFT plan plus the Hann window).
pub struct SpectrogramExtractor {
    params: StftParams,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    window: Vec<f64>,
}

impl SpectrogramExtractor {
    pub fn new(params: StftParams) -> SpectrogramExtractor {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(params.fft_size);
        let n = params.window_samples();
        // Periodic Hann window.
        let window = (0..n)
            .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos()))
            .collect();
        SpectrogramExtractor { params, fft, window }
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    /// Hann-windowed, zero-padded FFT of one analysis window. Returns the
    /// retained bins (bin `k` of the output is FFT bin `k + 1`; DC dropped)
    /// plus a flag set when `samples` was shorter than the window.
    pub fn stft_window(&self, samples: &[f32]) -> (Vec<Complex<f64>>, bool) {
        let n = self.params.window_samples();
        let padded = samples.len() < n;
        let mut buf = vec![Complex::new(0.0, 0.0); self.params.fft_size];
        for i in 0..n.min(samples.len()) {
            buf[i] = Complex::new(samples[i] as f64 * self.window[i], 0.0);
        }
        self.fft.process(&mut buf);
        (buf[1..=self.params.bins].to_vec(), padded)
    }

    /// Spectrogram centered on one timestamp. Windows reaching outside the
    /// audio are zero-padded.
    pub fn spectrogram_at(&self, audio: &[f32], timestamp: f64) -> Spectrogram {
        let p = &self.params;
        let n = p.window_samples();
        let hop = p.hop_ms / 1000.0;
        let half_window = p.window_ms / 2000.0;
        let mut data = vec![0.0f32; p.bins * p.columns * 2];
        let mut padded = false;
        for col in 0..p.columns {
            let center = timestamp + (col as f64 - (p.columns as f64 - 1.0) / 2.0) * hop;
            let start = ((center - half_window) * p.sample_rate as f64).round() as i64;
            let mut window_samples = vec![0.0f32; n];
            for (i, slot) in window_samples.iter_mut().enumerate() {
                let idx = start + i as i64;
                if idx >= 0 && (idx as usize) < audio.len() {
                    *slot = audio[idx as usize];
                } else {
                    padded = true;
                }
            }
            let (bins, _) = self.stft_window(&window_samples);
            for (b, c) in bins.iter().enumerate() {
                let i = (b * p.columns + col) * 2;
                data[i] = c.re as f32;
                data[i + 1] = c.im as f32;
            }
        }
        Spectrogram {
            bins: p.bins,
            columns: p.columns,
            data,
            frame_timestamp: timestamp,
            padded,
        }
    }
}

/// Builds one spectrogram per video timestamp.
pub fn build_spectrogram_sequence(
    audio: &[f32],
    params: StftParams,
    video_timestamps: &[f64],
) -> Result<Vec<Spectrogram>> {
    if audio.is_empty() {
        return Err(PipelineError::InvalidInput("empty audio".into()));
    }
    let extractor = SpectrogramExtractor::new(params);
    Ok(video_timestamps.iter().map(|&t| extractor.spectrogram_at(audio, t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, seconds: f64) -> Vec<f32> {
        let n = (rate as f64 * seconds) as usize;
        (0..n)
            .map(|i| (std::f64::consts::TAU * freq * i as f64 / rate as f64).sin() as f32)
            .collect()
    }

    #[test]
    fn zero_input_gives_zero_bins() {
        let ex = SpectrogramExtractor::new(StftParams::default());
        let (bins, padded) = ex.stft_window(&vec![0.0; 480]);
        assert!(!padded);
        assert!(bins.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn short_input_sets_the_padding_flag() {
        let ex = SpectrogramExtractor::new(StftParams::default());
        let (_, padded) = ex.stft_window(&vec![0.1; 100]);
        assert!(padded);
    }

    #[test]
    fn one_khz_tone_peaks_at_fft_bin_32() {
        let ex = SpectrogramExtractor::new(StftParams::default());
        let audio = sine(1000.0, 16_000, 0.1);
        let (bins, _) = ex.stft_window(&audio[0..480]);
        let peak = bins
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.norm().partial_cmp(&b.norm()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        // Stored index k holds FFT bin k+1; 1000 Hz / (16000/512) = bin 32.
        assert_eq!(peak + 1, 32);
    }

    #[test]
    fn parseval_energy_identity() {
        let ex = SpectrogramExtractor::new(StftParams::default());
        let audio = sine(997.0, 16_000, 0.05);
        let n = 480;
        let windowed_energy: f64 = audio[0..n]
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let w = 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos());
                (s as f64 * w).powi(2)
            })
            .sum();
        let (bins, _) = ex.stft_window(&audio[0..480]);
        let bin_energy: f64 = bins.iter().map(|c| c.norm_sqr()).sum();
        let expected = 512.0 / 2.0 * windowed_energy;
        assert!(
            (bin_energy - expected).abs() / expected < 1e-3,
            "bins {} vs expected {}",
            bin_energy,
            expected
        );
    }

    #[test]
    fn silence_yields_all_zero_spectrograms() {
        let timestamps: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let specs =
            build_spectrogram_sequence(&vec![0.0; 16_000], StftParams::default(), &timestamps)
                .unwrap();
        assert_eq!(specs.len(), 30);
        for s in &specs {
            assert_eq!(s.data.len(), 256 * 24 * 2);
            assert!(s.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn stationary_tone_gives_identical_columns() {
        // 500 Hz advances exactly 5 cycles per 10 ms hop, so every window
        // sees the same waveform.
        let audio = sine(500.0, 16_000, 2.0);
        let specs =
            build_spectrogram_sequence(&audio, StftParams::default(), &[1.0]).unwrap();
        let s = &specs[0];
        for bin in 0..256 {
            let (re0, im0) = s.at(bin, 0);
            for col in 1..24 {
                let (re, im) = s.at(bin, col);
                assert!((re - re0).abs() < 1e-6 && (im - im0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn impulse_energy_is_confined_to_central_columns() {
        let mut audio = vec![0.0f32; 32_000];
        let t = 1.0;
        audio[(t * 16_000.0) as usize] = 1.0;
        let specs = build_spectrogram_sequence(&audio, StftParams::default(), &[t]).unwrap();
        let s = &specs[0];
        for col in 0..24 {
            let energy: f64 = (0..256).map(|b| s.magnitude(b, col) as f64).sum();
            let center = (col as f64 - 11.5) * 0.01; // column center offset, seconds
            if center.abs() < 0.015 {
                assert!(energy > 1e-3, "central column {} is empty", col);
            } else {
                assert!(energy < 1e-9, "outer column {} has energy {}", col, energy);
            }
        }
    }

    #[test]
    fn ten_ms_shift_moves_columns_by_one() {
        let mut rng_state = 12345u64;
        let mut noise = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 33) as f32 / (1u64 << 31) as f32) - 0.5
        };
        let audio: Vec<f32> = (0..32_000).map(|_| noise()).collect();
        let hop = 160usize;
        let mut shifted = vec![0.0f32; audio.len()];
        shifted[hop..].copy_from_slice(&audio[..audio.len() - hop]);
        let a = build_spectrogram_sequence(&audio, StftParams::default(), &[1.0]).unwrap();
        let b = build_spectrogram_sequence(&shifted, StftParams::default(), &[1.0]).unwrap();
        for bin in 0..256 {
            for col in 0..23 {
                let (re_a, im_a) = a[0].at(bin, col);
                let (re_b, im_b) = b[0].at(bin, col + 1);
                assert!((re_a - re_b).abs() < 1e-6 && (im_a - im_b).abs() < 1e-6);
            }
        }
    }
}
