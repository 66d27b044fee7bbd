//! Glottal-source spectral measures: H1-H2 and H1-A3.
//!
//! Per 40 ms frame (10 ms hop) a YIN pitch estimate decides voicing. Voiced
//! frames are Hann-windowed and zero-padded to `fft_size`; H1 and H2 are the
//! peak magnitudes (dB) within ±10% of f0 and 2·f0. F3 is the third formant
//! from the roots of an order-18 LPC polynomial computed on the
//! pre-emphasized frame, and A3 is the magnitude of the harmonic nearest F3.
//! Utterance values are medians over voiced frames. Amplitudes are
//! uncorrected for formant influence.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ProcessingLabel, SourceLabel, UtteranceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum AcousticsError {
    #[error("frame of {len} samples is shorter than the {needed} needed for the f0 band")]
    FrameTooShort { len: usize, needed: usize },
    #[error("harmonic search band around {0} Hz contains no DFT bin")]
    BandEmpty(f64),
    #[error("frequency {0} Hz outside (0, Nyquist)")]
    BadFrequency(f64),
    #[error("frame length {len} must exceed LPC order {order}")]
    OrderTooHigh { len: usize, order: usize },
    #[error("Levinson-Durbin recursion unstable at order {0}")]
    UnstableRecursion(usize),
    #[error("prediction polynomial has no roots")]
    NoRoots,
    #[error("audio is {0:.3} s, at least 0.2 s required")]
    TooShort(f64),
    #[error("no voiced frames")]
    NoVoicedFrames,
    #[error("sample rate {0} Hz, expected {1} Hz")]
    WrongSampleRate(u32, u32),
    #[error("audio contains non-finite samples")]
    NonFinite,
    #[error("cannot decode {path}: {reason}")]
    Decode { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis parameters. Any subset may be given as JSON; missing keys keep
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcousticConfig {
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    pub yin_threshold: f64,
    pub lpc_order: usize,
    pub preemphasis: f64,
    pub f3_min: f64,
    pub f3_max: f64,
    pub min_formant_hz: f64,
    pub max_bandwidth_hz: f64,
    /// Relative half-width of the harmonic peak search.
    pub harmonic_search: f64,
    pub fft_size: usize,
    pub min_voiced_frames: usize,
    pub min_duration_s: f64,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_ms: 40.0,
            hop_ms: 10.0,
            f0_min: 60.0,
            f0_max: 400.0,
            yin_threshold: 0.15,
            lpc_order: 18,
            preemphasis: 0.97,
            f3_min: 1500.0,
            f3_max: 3500.0,
            min_formant_hz: 150.0,
            max_bandwidth_hz: 700.0,
            harmonic_search: 0.10,
            fft_size: 8192,
            min_voiced_frames: 10,
            min_duration_s: 0.2,
        }
    }
}

impl AcousticConfig {
    pub fn frame_len(&self) -> usize {
        (self.frame_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }
}

pub fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// YIN fundamental frequency estimate.
///
/// The difference function uses an integration window of half the frame and
/// lags up to `fs / f_min`. The first lag in the band where the cumulative
/// mean normalized difference drops below `threshold` is followed to its
/// local minimum and refined by parabolic interpolation. Returns `None` for
/// unvoiced frames.
pub fn yin_f0(frame: &[f64], sample_rate: u32, band: (f64, f64), threshold: f64) -> Result<Option<f64>, AcousticsError> {
    let fs = sample_rate as f64;
    let tau_max = (fs / band.0).ceil() as usize;
    let tau_min = ((fs / band.1).floor() as usize).max(2);
    let needed = 2 * tau_max;
    if frame.len() < needed {
        return Err(AcousticsError::FrameTooShort { len: frame.len(), needed });
    }
    if frame.iter().map(|x| x * x).sum::<f64>() < 1e-20 * frame.len() as f64 {
        return Ok(None);
    }
    let window = frame.len() / 2;
    let mut diff = vec![0.0; tau_max + 2];
    for (tau, d) in diff.iter_mut().enumerate().skip(1) {
        *d = (0..window).map(|j| (frame[j] - frame[j + tau]).powi(2)).sum();
    }
    let mut cmnd = vec![1.0; tau_max + 2];
    let mut running = 0.0;
    for tau in 1..diff.len() {
        running += diff[tau];
        cmnd[tau] = if running > 0.0 { diff[tau] * tau as f64 / running } else { 1.0 };
    }
    let mut tau = tau_min;
    while tau <= tau_max {
        if cmnd[tau] < threshold {
            while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            let (a, b, c) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 1e-15 { (0.5 * (a - c) / denom).clamp(-1.0, 1.0) } else { 0.0 };
            let period = tau as f64 + shift;
            let f0 = fs / period;
            return Ok((f0 >= band.0 && f0 <= band.1).then_some(f0));
        }
        tau += 1;
    }
    Ok(None)
}

/// Magnitude spectrum of a Hann-windowed, zero-padded frame, scaled so a
/// sinusoid of amplitude `A` peaks at `A`.
pub struct Spectrum {
    magnitudes: Vec<f64>,
    bin_hz: f64,
    nyquist: f64,
}

pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
}

impl SpectrumAnalyzer {
    pub fn new(fft_size: usize) -> Self {
        Self { fft: FftPlanner::new().plan_fft_forward(fft_size), fft_size }
    }

    pub fn spectrum(&self, frame: &[f64], sample_rate: u32) -> Spectrum {
        let len = frame.len().min(self.fft_size);
        let w = hann(len);
        let gain: f64 = w.iter().sum();
        let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); self.fft_size];
        for ((b, x), wv) in buf.iter_mut().zip(frame).zip(&w) {
            b.re = x * wv;
        }
        self.fft.process(&mut buf);
        let magnitudes = buf[..=self.fft_size / 2].iter().map(|c| 2.0 * c.norm() / gain).collect();
        Spectrum { magnitudes, bin_hz: sample_rate as f64 / self.fft_size as f64, nyquist: sample_rate as f64 / 2.0 }
    }
}

fn to_db(mag: f64) -> f64 {
    20.0 * mag.max(1e-12).log10()
}

impl Spectrum {
    /// Largest magnitude (dB) within `±search·f` of `f`.
    pub fn peak_db(&self, f: f64, search: f64) -> Result<f64, AcousticsError> {
        if !(f > 0.0 && f < self.nyquist) {
            return Err(AcousticsError::BadFrequency(f));
        }
        let lo = (f * (1.0 - search) / self.bin_hz).ceil() as usize;
        let hi = ((f * (1.0 + search) / self.bin_hz).floor() as usize).min(self.magnitudes.len() - 1);
        if lo > hi {
            return Err(AcousticsError::BandEmpty(f));
        }
        Ok(to_db(self.magnitudes[lo..=hi].iter().copied().fold(0.0, f64::max)))
    }
}

/// Harmonic amplitude in dB with the default search width and FFT size.
pub fn harmonic_amplitude(frame: &[f64], sample_rate: u32, f_target: f64) -> Result<f64, AcousticsError> {
    let cfg = AcousticConfig::default();
    SpectrumAnalyzer::new(cfg.fft_size.max(frame.len())).spectrum(frame, sample_rate).peak_db(f_target, cfg.harmonic_search)
}

pub fn pre_emphasize(frame: &[f64], coef: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(frame.len());
    if let Some(&first) = frame.first() {
        out.push(first);
    }
    out.extend(frame.windows(2).map(|w| w[1] - coef * w[0]));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lpc {
    /// Predictor coefficients `a_k`: `x[n] ≈ Σ a_k x[n-k]`.
    pub coeffs: Vec<f64>,
    pub reflection: Vec<f64>,
    /// Prediction error energy after the final order.
    pub residual_energy: f64,
    /// Lag-0 autocorrelation (frame energy).
    pub energy: f64,
}

/// Autocorrelation-method LPC by Levinson-Durbin recursion.
pub fn lpc_coeffs(frame: &[f64], order: usize) -> Result<Lpc, AcousticsError> {
    if frame.len() <= order {
        return Err(AcousticsError::OrderTooHigh { len: frame.len(), order });
    }
    let r: Vec<f64> = (0..=order).map(|lag| frame.iter().zip(&frame[lag..]).map(|(a, b)| a * b).sum()).collect();
    let mut a: Vec<f64> = Vec::with_capacity(order);
    let mut reflection = Vec::with_capacity(order);
    let mut err = r[0];
    for m in 0..order {
        if err <= 0.0 {
            return Err(AcousticsError::UnstableRecursion(m + 1));
        }
        let acc = r[m + 1] - a.iter().enumerate().map(|(k, ak)| ak * r[m - k]).sum::<f64>();
        let k = acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(AcousticsError::UnstableRecursion(m + 1));
        }
        let prev = a.clone();
        for (j, aj) in a.iter_mut().enumerate() {
            *aj -= k * prev[m - 1 - j];
        }
        a.push(k);
        reflection.push(k);
        err *= 1.0 - k * k;
    }
    Ok(Lpc { coeffs: a, reflection, residual_energy: err, energy: r[0] })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub frequency: f64,
    pub bandwidth: f64,
}

/// Formant candidates from the roots of `1 - Σ a_k z^-k`, found as the
/// eigenvalues of its companion matrix. Keeps roots in the upper half plane
/// with bandwidth at most `max_bandwidth` and frequency at least `min_freq`,
/// sorted by frequency.
pub fn formants_from_lpc(coeffs: &[f64], sample_rate: u32, min_freq: f64, max_bandwidth: f64) -> Result<Vec<Formant>, AcousticsError> {
    let p = coeffs.len();
    if p == 0 {
        return Err(AcousticsError::NoRoots);
    }
    let fs = sample_rate as f64;
    let companion = DMatrix::from_fn(p, p, |i, j| if i == 0 { coeffs[j] } else if i == j + 1 { 1.0 } else { 0.0 });
    let mut out: Vec<Formant> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im > 1e-12)
        .map(|z| Formant {
            frequency: z.im.atan2(z.re) * fs / (2.0 * std::f64::consts::PI),
            bandwidth: -fs / std::f64::consts::PI * z.norm().ln(),
        })
        .filter(|f| f.bandwidth <= max_bandwidth && f.frequency >= min_freq)
        .collect();
    out.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(out)
}

/// Per-frame measurements for one voiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VoicedFrame {
    pub start: usize,
    pub f0: f64,
    pub h1_db: f64,
    pub h2_db: f64,
    pub a3_db: Option<f64>,
    pub f3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticMeasurement {
    pub utt_id: String,
    pub h1_h2_db: Option<f64>,
    pub h1_a3_db: Option<f64>,
    pub n_voiced_frames: usize,
    pub coverage: f64,
    pub reliable: bool,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

pub struct Analyzer {
    cfg: AcousticConfig,
    spectra: SpectrumAnalyzer,
}

impl Analyzer {
    pub fn new(cfg: AcousticConfig) -> Self {
        let n = cfg.fft_size.max(cfg.frame_len()).next_power_of_two();
        Self { spectra: SpectrumAnalyzer::new(n), cfg }
    }

    pub fn config(&self) -> &AcousticConfig {
        &self.cfg
    }

    /// Voiced-frame measurements plus the total frame count.
    pub fn voiced_frames(&self, audio: &AudioBuffer) -> Result<(Vec<VoicedFrame>, usize), AcousticsError> {
        let cfg = &self.cfg;
        if audio.sample_rate != cfg.sample_rate {
            return Err(AcousticsError::WrongSampleRate(audio.sample_rate, cfg.sample_rate));
        }
        if audio.samples.iter().any(|x| !x.is_finite()) {
            return Err(AcousticsError::NonFinite);
        }
        if audio.duration() < cfg.min_duration_s {
            return Err(AcousticsError::TooShort(audio.duration()));
        }
        let (frame_len, hop) = (cfg.frame_len(), cfg.hop_len());
        let fs = audio.sample_rate;
        let mut frames = Vec::new();
        let mut total = 0;
        let mut start = 0;
        while start + frame_len <= audio.samples.len() {
            total += 1;
            let frame = &audio.samples[start..start + frame_len];
            if let Some(f0) = yin_f0(frame, fs, (cfg.f0_min, cfg.f0_max), cfg.yin_threshold)? {
                if let Some(vf) = self.measure_frame(frame, start, f0)? {
                    frames.push(vf);
                }
            }
            start += hop;
        }
        Ok((frames, total))
    }

    fn measure_frame(&self, frame: &[f64], start: usize, f0: f64) -> Result<Option<VoicedFrame>, AcousticsError> {
        let cfg = &self.cfg;
        let fs = self.cfg.sample_rate;
        let spec = self.spectra.spectrum(frame, fs);
        let (h1_db, h2_db) = match (spec.peak_db(f0, cfg.harmonic_search), spec.peak_db(2.0 * f0, cfg.harmonic_search)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Ok(None),
        };
        let mut emphasized = pre_emphasize(frame, cfg.preemphasis);
        for (x, w) in emphasized.iter_mut().zip(hann(frame.len())) {
            *x *= w;
        }
        let f3 = lpc_coeffs(&emphasized, cfg.lpc_order)
            .ok()
            .and_then(|lpc| formants_from_lpc(&lpc.coeffs, fs, cfg.min_formant_hz, cfg.max_bandwidth_hz).ok())
            .and_then(|fm| fm.get(2).map(|f| f.frequency))
            .filter(|f| (cfg.f3_min..=cfg.f3_max).contains(f));
        let a3_db = f3.and_then(|f3| {
            let k = (f3 / f0).round().max(1.0);
            spec.peak_db(k * f0, cfg.harmonic_search).ok()
        });
        Ok(Some(VoicedFrame { start, f0, h1_db, h2_db, a3_db, f3: if a3_db.is_some() { f3 } else { None } }))
    }

    pub fn analyze(&self, utt_id: &str, audio: &AudioBuffer) -> Result<AcousticMeasurement, AcousticsError> {
        let (frames, total) = self.voiced_frames(audio)?;
        if frames.is_empty() {
            return Err(AcousticsError::NoVoicedFrames);
        }
        let mut h1h2: Vec<f64> = frames.iter().map(|f| f.h1_db - f.h2_db).collect();
        let mut h1a3: Vec<f64> = frames.iter().filter_map(|f| f.a3_db.map(|a3| f.h1_db - a3)).collect();
        Ok(AcousticMeasurement {
            utt_id: utt_id.to_string(),
            h1_h2_db: median(&mut h1h2),
            h1_a3_db: median(&mut h1a3),
            n_voiced_frames: frames.len(),
            coverage: frames.len() as f64 / total.max(1) as f64,
            reliable: frames.len() >= self.cfg.min_voiced_frames,
        })
    }
}

pub fn analyze_utterance(utt_id: &str, audio: &AudioBuffer, cfg: &AcousticConfig) -> Result<AcousticMeasurement, AcousticsError> {
    Analyzer::new(cfg.clone()).analyze(utt_id, audio)
}

/// Decode a 16-bit PCM or 32-bit float WAV. Multichannel files keep the first
/// channel; the returned flag reports that case.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(AudioBuffer, bool), AcousticsError> {
    let path = path.as_ref();
    let decode = |reason: String| AcousticsError::Decode { path: path.display().to_string(), reason };
    let mut reader = hound::WavReader::open(path).map_err(|e| decode(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| decode(e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| decode(e.to_string()))?,
        (fmt, bits) => return Err(decode(format!("unsupported sample format {fmt:?} with {bits} bits"))),
    };
    let samples = interleaved.into_iter().step_by(channels).collect();
    Ok((AudioBuffer::new(samples, spec.sample_rate), channels > 1))
}

/// One output row of the batch analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticRow {
    pub measurement: AcousticMeasurement,
    pub source: SourceLabel,
    pub processing: ProcessingLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchIssue {
    pub utt_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchReport {
    pub rows: Vec<AcousticRow>,
    pub failures: Vec<BatchIssue>,
    pub warnings: Vec<BatchIssue>,
}

fn audio_path(root: &Path, rec: &UtteranceRecord) -> Option<PathBuf> {
    rec.audio_path.as_ref().map(|p| root.join(p))
}

/// Analyze every record in manifest order. Decode failures are collected in
/// the report and do not stop the batch; utterances without voiced frames
/// produce an unreliable row with empty measures.
pub fn batch_acoustics(records: &[UtteranceRecord], audio_root: &Path, cfg: &AcousticConfig) -> BatchReport {
    let analyzer = Analyzer::new(cfg.clone());
    let results: Vec<_> = records
        .par_iter()
        .map(|rec| {
            let path = audio_path(audio_root, rec).ok_or_else(|| "record has no audio_path".to_string())?;
            let (audio, multichannel) = read_wav(&path).map_err(|e| e.to_string())?;
            let measurement = match analyzer.analyze(&rec.utt_id, &audio) {
                Ok(m) => m,
                Err(AcousticsError::NoVoicedFrames) => AcousticMeasurement {
                    utt_id: rec.utt_id.clone(),
                    h1_h2_db: None,
                    h1_a3_db: None,
                    n_voiced_frames: 0,
                    coverage: 0.0,
                    reliable: false,
                },
                Err(e) => return Err(e.to_string()),
            };
            Ok((AcousticRow { measurement, source: rec.source, processing: rec.processing }, multichannel))
        })
        .collect();
    let mut report = BatchReport::default();
    for (rec, res) in records.iter().zip(results) {
        match res {
            Ok((row, multichannel)) => {
                if multichannel {
                    report.warnings.push(BatchIssue { utt_id: rec.utt_id.clone(), message: "multichannel input, first channel used".into() });
                }
                report.rows.push(row);
            }
            Err(message) => report.failures.push(BatchIssue { utt_id: rec.utt_id.clone(), message }),
        }
    }
    report
}

pub const CSV_HEADER: &str = "utt_id,source,processing,h1_h2_db,h1_a3_db,n_voiced_frames,coverage,reliable";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn write_csv<W: std::io::Write>(mut w: W, rows: &[AcousticRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        let m = &r.measurement;
        writeln!(
            w,
            "{},{},{},{},{},{},{:?},{}",
            m.utt_id,
            r.source.as_str(),
            r.processing.as_str(),
            opt(m.h1_h2_db),
            opt(m.h1_a3_db),
            m.n_voiced_frames,
            m.coverage,
            m.reliable
        )?;
    }
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<AcousticRow>, String> {
    use std::io::BufRead;
    let mut lines = std::io::BufReader::new(r).lines();
    let header = lines.next().ok_or("empty acoustics CSV")?.map_err(|e| e.to_string())?;
    if header.trim_end() != CSV_HEADER {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |what: &str| format!("line {}: bad {what}", i + 2);
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 8 {
            return Err(err("field count"));
        }
        let num = |s: &str, what: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| err(what))
            }
        };
        rows.push(AcousticRow {
            measurement: AcousticMeasurement {
                utt_id: f[0].to_string(),
                h1_h2_db: num(f[3], "h1_h2_db")?,
                h1_a3_db: num(f[4], "h1_a3_db")?,
                n_voiced_frames: f[5].parse().map_err(|_| err("n_voiced_frames"))?,
                coverage: f[6].parse().map_err(|_| err("coverage"))?,
                reliable: f[7].parse().map_err(|_| err("reliable"))?,
            },
            source: f[1].parse().map_err(|_| err("source"))?,
            processing: f[2].parse().map_err(|_| err("processing"))?,
        });
    }
    Ok(rows)
}
