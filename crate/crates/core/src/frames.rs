//! Locating a target in a static-camera frame: background estimation from
//! empty frames, background subtraction, pixel subsampling, and a per-channel
//! fit with automatic choice of the monotone direction.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ParameterBox, SensorDataset};
use crate::error::{MonolocError, Result};
use crate::estimators::{select_direction, EstimatorSpec, SearchConfig};
use crate::inference::{bootstrap_m_of_n_at, mix64, Ellipsoid};
use crate::isotonic::Direction;
use crate::profile::{norm, ProfileWorkspace};

pub const SCHEMA: &str = "monoloc/1";

/// Gray-level image, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MonolocError::EmptyInput);
        }
        if data.len() != rows * cols {
            return Err(MonolocError::InvalidInput(format!(
                "{} values for a {rows}x{cols} frame",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MonolocError::InvalidInput("non-finite intensity".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    fn check_shape(&self, other: &Frame) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MonolocError::ShapeMismatch {
                expected_rows: self.rows,
                expected_cols: self.cols,
                rows: other.rows,
                cols: other.cols,
            });
        }
        Ok(())
    }

    pub fn negated(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }
}

/// Frames of equal size with one label each (channel names or file names).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStack {
    pub frames: Vec<Frame>,
    pub labels: Vec<String>,
}

impl FrameStack {
    pub fn new(frames: Vec<Frame>, labels: Vec<String>) -> Result<Self> {
        if frames.is_empty() {
            return Err(MonolocError::EmptyInput);
        }
        if labels.len() != frames.len() {
            return Err(MonolocError::InvalidInput("one label per frame required".into()));
        }
        for f in &frames[1..] {
            frames[0].check_shape(f)?;
        }
        Ok(Self { frames, labels })
    }

    pub fn unlabeled(frames: Vec<Frame>) -> Result<Self> {
        let labels = (0..frames.len()).map(|i| i.to_string()).collect();
        Self::new(frames, labels)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames[0].rows, self.frames[0].cols)
    }
}

fn pgm_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    loop {
        let mut b = [0u8];
        if r.read(&mut b)? == 0 {
            break;
        }
        match b[0] {
            b'#' if tok.is_empty() => {
                let mut line = Vec::new();
                r.read_until(b'\n', &mut line)?;
            }
            c if c.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    break;
                }
            }
            c => tok.push(c),
        }
    }
    if tok.is_empty() {
        return Err(MonolocError::Parse("truncated PGM header".into()));
    }
    String::from_utf8(tok).map_err(|e| MonolocError::Parse(e.to_string()))
}

fn pgm_number<R: BufRead>(r: &mut R, what: &str) -> Result<usize> {
    let t = pgm_token(r)?;
    t.parse().map_err(|_| MonolocError::Parse(format!("bad PGM {what}: {t}")))
}

/// Binary PGM (`P5`), 8-bit or 16-bit big-endian samples.
pub fn read_pgm<R: Read>(reader: R) -> Result<Frame> {
    let mut r = BufReader::new(reader);
    if pgm_token(&mut r)? != "P5" {
        return Err(MonolocError::Parse("expected binary PGM (P5)".into()));
    }
    let cols = pgm_number(&mut r, "width")?;
    let rows = pgm_number(&mut r, "height")?;
    let maxval = pgm_number(&mut r, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(MonolocError::Parse(format!("bad PGM maxval {maxval}")));
    }
    let wide = maxval > 255;
    let mut raw = vec![0u8; rows * cols * if wide { 2 } else { 1 }];
    r.read_exact(&mut raw)
        .map_err(|_| MonolocError::Parse("truncated PGM pixel data".into()))?;
    let data = if wide {
        raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    } else {
        raw.iter().map(|&v| v as f64).collect()
    };
    Frame::new(rows, cols, data)
}

/// Write an 8-bit P5 PGM; intensities are rounded and clamped to `0..=255`.
pub fn write_pgm<W: Write>(frame: &Frame, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", frame.cols, frame.rows)?;
    let bytes: Vec<u8> = frame.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Plain numeric matrix, one image row per line, comma separated, no header.
pub fn read_csv_frame<R: Read>(reader: R) -> Result<Frame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| MonolocError::Parse(e.to_string()))?;
        if cols.is_some_and(|c| c != rec.len()) {
            return Err(MonolocError::Parse(format!("ragged CSV frame at row {rows}")));
        }
        cols = Some(rec.len());
        for field in rec.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|_| MonolocError::Parse(format!("bad intensity {field:?}")))?,
            );
        }
        rows += 1;
    }
    Frame::new(rows, cols.unwrap_or(0), data)
}

/// Read a `.pgm` or `.csv` frame, chosen by extension.
pub fn read_frame(path: &Path) -> Result<Frame> {
    let f = std::fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pgm") => read_pgm(f),
        Some("csv") => read_csv_frame(f),
        _ => Err(MonolocError::Parse(format!("unknown frame format: {}", path.display()))),
    }
}

/// All `.pgm` and `.csv` frames in a directory, in file-name order.
pub fn read_frame_dir(dir: &Path) -> Result<FrameStack> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("pgm") | Some("csv")
            )
        })
        .collect();
    paths.sort();
    let frames = paths.iter().map(|p| read_frame(p)).collect::<Result<Vec<_>>>()?;
    let labels = paths
        .iter()
        .map(|p| p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()))
        .collect();
    FrameStack::new(frames, labels)
}

/// Pixelwise mean of the empty frames.
pub fn estimate_background(empty: &FrameStack) -> Result<Frame> {
    let first = empty.frames.first().ok_or(MonolocError::EmptyInput)?;
    let mut sum = vec![0.0; first.data.len()];
    for f in &empty.frames {
        first.check_shape(f)?;
        for (s, v) in sum.iter_mut().zip(&f.data) {
            *s += v;
        }
    }
    let k = empty.frames.len() as f64;
    Frame::new(first.rows, first.cols, sum.into_iter().map(|s| s / k).collect())
}

/// Frame minus background at every pixel. Pixel `(row, col)` sits at
/// `(col + 0.5, row + 0.5)`; the monitoring region is the image extent.
pub fn center_frame(frame: &Frame, background: &Frame) -> Result<SensorDataset> {
    background.check_shape(frame)?;
    let mut x = Vec::with_capacity(2 * frame.data.len());
    let mut y = Vec::with_capacity(frame.data.len());
    for r in 0..frame.rows {
        for c in 0..frame.cols {
            x.push(c as f64 + 0.5);
            x.push(r as f64 + 0.5);
            y.push(frame.get(r, c) - background.get(r, c));
        }
    }
    let bounds = ParameterBox::new(vec![0.0, 0.0], vec![frame.cols as f64, frame.rows as f64])?;
    SensorDataset::new(x, y, 2, Some(bounds))
}

/// `k^2` distinct indices out of `n`, ascending, determined by `seed`.
pub fn subsample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    let want = k * k;
    if want > n {
        return Err(MonolocError::TooFewPixels {
            requested: want,
            available: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, want).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Uniform draw of `k^2` pixels without replacement.
pub fn subsample_grid(data: &SensorDataset, k: usize, seed: u64) -> Result<SensorDataset> {
    Ok(data.select(&subsample_indices(data.len(), k, seed)?))
}

/// `|n^-1 M_n(theta)|` with `theta` at every sensor location, rows of
/// `[x_1, .., x_d, norm]`.
pub fn score_field(data: &SensorDataset, direction: Direction) -> Vec<Vec<f64>> {
    let mut ws = ProfileWorkspace::new();
    data.points()
        .map(|p| {
            ws.evaluate(data.x(), data.y(), data.dim(), p, direction, false);
            let mut row = p.to_vec();
            row.push(norm(&ws.score));
            row
        })
        .collect()
}

/// m-out-of-n bootstrap settings for the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBootstrap {
    pub replicates: usize,
    /// `m = floor(n^m_exponent)`.
    pub m_exponent: f64,
}

impl Default for FrameBootstrap {
    fn default() -> Self {
        Self {
            replicates: 200,
            m_exponent: 0.875,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Pixels per side of the random subsample.
    pub grid: usize,
    pub seed: u64,
    pub search: SearchConfig,
    pub bootstrap: Option<FrameBootstrap>,
    /// Export the score norm at every subsampled pixel.
    pub score_field: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            grid: 100,
            seed: 0,
            search: SearchConfig::default(),
            bootstrap: Some(FrameBootstrap::default()),
            score_field: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub label: String,
    /// Set when the channel failed; the other fields are then empty.
    pub error: Option<String>,
    pub theta: Vec<f64>,
    pub direction: Option<Direction>,
    pub sse_non_increasing: f64,
    pub sse_non_decreasing: f64,
    pub converged: bool,
    pub objective: f64,
    pub eta_knots: Vec<f64>,
    pub eta_values: Vec<f64>,
    pub bootstrap_m: Option<usize>,
    pub bootstrap_failed: Option<usize>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub ellipsoids: Vec<Ellipsoid>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score_field: Option<Vec<Vec<f64>>>,
}

impl ChannelReport {
    fn failed(label: String, err: MonolocError) -> Self {
        Self {
            label,
            error: Some(err.to_string()),
            theta: Vec::new(),
            direction: None,
            sse_non_increasing: f64::NAN,
            sse_non_decreasing: f64::NAN,
            converged: false,
            objective: f64::NAN,
            eta_knots: Vec::new(),
            eta_values: Vec::new(),
            bootstrap_m: None,
            bootstrap_failed: None,
            covariance: None,
            ellipsoids: Vec::new(),
            score_field: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub grid: usize,
    pub subsample_size: usize,
    pub background_frames: Vec<usize>,
    pub frame_rows: usize,
    pub frame_cols: usize,
    pub search: SearchConfig,
    pub bootstrap: Option<FrameBootstrap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema: String,
    pub channels: Vec<ChannelReport>,
    pub provenance: Provenance,
}

impl PipelineReport {
    pub fn all_converged(&self) -> bool {
        self.channels.iter().all(|c| c.error.is_none() && c.converged)
    }
}

fn locate_channel(
    frame: &Frame,
    background: &FrameStack,
    opts: &PipelineOptions,
    channel: usize,
    label: String,
) -> Result<ChannelReport> {
    let bg = estimate_background(background)?;
    let full = center_frame(frame, &bg)?;
    let data = subsample_grid(&full, opts.grid, opts.seed)?;
    let choice = select_direction(&data, &opts.search)?;
    let est = &choice.chosen;
    let mut report = ChannelReport {
        label,
        error: None,
        theta: est.theta.clone(),
        direction: Some(est.direction),
        sse_non_increasing: choice.sse_non_increasing,
        sse_non_decreasing: choice.sse_non_decreasing,
        converged: est.converged,
        objective: est.objective_at_solution,
        eta_knots: est.eta.knots().to_vec(),
        eta_values: est.eta.values().to_vec(),
        bootstrap_m: None,
        bootstrap_failed: None,
        covariance: None,
        ellipsoids: Vec::new(),
        score_field: None,
    };
    if let Some(bs) = &opts.bootstrap {
        let n = data.len();
        let m = ((n as f64).powf(bs.m_exponent).floor() as usize).clamp(1, n);
        let spec = EstimatorSpec::ssce(est.direction, opts.search.clone());
        let seed = mix64(opts.seed, 1 + channel as u64);
        let summary = bootstrap_m_of_n_at(&data, &spec, est, m, bs.replicates, seed)?;
        report.bootstrap_m = Some(m);
        report.bootstrap_failed = Some(summary.failed);
        report.covariance = Some(summary.covariance);
        report.ellipsoids = summary.ellipsoids;
    }
    if opts.score_field {
        report.score_field = Some(score_field(&data, est.direction));
    }
    Ok(report)
}

/// Fit every channel of `target` against the empty frames of the same
/// channel. A failing channel is reported without stopping the others.
pub fn locate_in_frame(
    target: &FrameStack,
    backgrounds: &[FrameStack],
    opts: &PipelineOptions,
) -> Result<PipelineReport> {
    if backgrounds.len() != target.len() {
        return Err(MonolocError::InvalidInput(format!(
            "{} target channels but {} background stacks",
            target.len(),
            backgrounds.len()
        )));
    }
    let (rows, cols) = target.shape();
    let channels: Vec<ChannelReport> = (0..target.len())
        .into_par_iter()
        .map(|c| {
            let label = target.labels[c].clone();
            locate_channel(&target.frames[c], &backgrounds[c], opts, c, label.clone())
                .unwrap_or_else(|e| ChannelReport::failed(label, e))
        })
        .collect();
    Ok(PipelineReport {
        schema: SCHEMA.into(),
        channels,
        provenance: Provenance {
            seed: opts.seed,
            grid: opts.grid,
            subsample_size: opts.grid * opts.grid,
            background_frames: backgrounds.iter().map(FrameStack::len).collect(),
            frame_rows: rows,
            frame_cols: cols,
            search: opts.search.clone(),
            bootstrap: opts.bootstrap.clone(),
        },
    })
}

/// Synthetic static scene with a disk-shaped target, for testing the
/// pipeline against a known location. The background of each channel is a
/// smooth gradient; the target adds `contrast` on the disk, optionally
/// softened by a Gaussian blur of width `blur` pixels. Pixels are rounded
/// to 8-bit gray levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub rows: usize,
    pub cols: usize,
    /// Target centre `(x, y)` in pixel coordinates.
    pub center: [f64; 2],
    pub radius: f64,
    /// Per-channel background levels and target contrasts.
    pub base: Vec<f64>,
    pub contrast: Vec<f64>,
    pub noise_sd: f64,
    pub blur: f64,
}

impl SyntheticScene {
    /// Three channels, `rows x cols`, bright (`polarity > 0`) or dark target.
    pub fn three_channel(rows: usize, cols: usize, center: [f64; 2], radius: f64, polarity: f64) -> Self {
        let s = polarity.signum();
        Self {
            rows,
            cols,
            center,
            radius,
            base: vec![110.0, 125.0, 100.0],
            contrast: vec![70.0 * s, 55.0 * s, 60.0 * s],
            noise_sd: 6.0,
            blur: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.base.len()
    }

    fn background_value(&self, c: usize, r: usize, col: usize) -> f64 {
        let u = col as f64 / self.cols as f64;
        let v = r as f64 / self.rows as f64;
        self.base[c] + 25.0 * u - 15.0 * v + 8.0 * (6.0 * u + 2.0 * c as f64).sin() * (4.0 * v).cos()
    }

    /// Target mask in `[0, 1]`: the disk, blurred when `blur > 0`.
    pub fn mask(&self) -> Frame {
        let hard = Frame::from_fn(self.rows, self.cols, |r, c| {
            let dx = c as f64 + 0.5 - self.center[0];
            let dy = r as f64 + 0.5 - self.center[1];
            if dx * dx + dy * dy <= self.radius * self.radius {
                1.0
            } else {
                0.0
            }
        });
        if self.blur <= 0.0 {
            return hard;
        }
        let half = (3.0 * self.blur).ceil() as isize;
        let kernel: Vec<f64> = (-half..=half)
            .map(|i| (-(i * i) as f64 / (2.0 * self.blur * self.blur)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        let conv = |f: &Frame, horizontal: bool| {
            Frame::from_fn(f.rows, f.cols, |r, c| {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let off = k as isize - half;
                    let (rr, cc) = if horizontal {
                        (r as isize, c as isize + off)
                    } else {
                        (r as isize + off, c as isize)
                    };
                    if rr >= 0 && cc >= 0 && (rr as usize) < f.rows && (cc as usize) < f.cols {
                        acc += w * f.get(rr as usize, cc as usize);
                    }
                }
                acc / total
            })
        };
        conv(&conv(&hard, true), false)
    }

    fn render(&self, c: usize, mask: Option<&Frame>, rng: &mut ChaCha8Rng) -> Frame {
        let noise = Normal::new(0.0, self.noise_sd.max(0.0)).expect("finite noise");
        Frame::from_fn(self.rows, self.cols, |r, col| {
            let mut v = self.background_value(c, r, col);
            if let Some(m) = mask {
                v += self.contrast[c] * m.get(r, col);
            }
            if self.noise_sd > 0.0 {
                v += noise.sample(rng);
            }
            v.round().clamp(0.0, 255.0)
        })
    }

    /// `count` empty frames for each channel.
    pub fn backgrounds(&self, count: usize, seed: u64) -> Vec<FrameStack> {
        (0..self.channels())
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed, c as u64));
                let frames = (0..count).map(|_| self.render(c, None, &mut rng)).collect();
                FrameStack::unlabeled(frames).expect("nonempty stack")
            })
            .collect()
    }

    /// The frame containing the target, one entry per channel.
    pub fn target(&self, seed: u64) -> FrameStack {
        let mask = self.mask();
        let frames = (0..self.channels())
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed, 1000 + c as u64));
                self.render(c, Some(&mask), &mut rng)
            })
            .collect();
        let labels = ["red", "green", "blue"]
            .iter()
            .map(|s| s.to_string())
            .chain((3..).map(|i| format!("channel{i}")))
            .take(self.channels())
            .collect();
        FrameStack::new(frames, labels).expect("consistent channels")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let f = Frame::from_fn(3, 4, |r, c| (r * 10 + c) as f64);
        let mut buf = Vec::new();
        write_pgm(&f, &mut buf).unwrap();
        assert_eq!(read_pgm(&buf[..]).unwrap(), f);
    }

    #[test]
    fn pgm_header_comments_and_wide_samples() {
        let mut buf = b"P5\n# made by hand\n2 1\n# depth\n1000\n".to_vec();
        buf.extend_from_slice(&[0x01, 0x00, 0x03, 0xe8]);
        let f = read_pgm(&buf[..]).unwrap();
        assert_eq!(f.data, vec![256.0, 1000.0]);
        assert!(read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_pgm(&b"P5\n2 2\n255\n\x00"[..]).is_err());
    }

    #[test]
    fn csv_frame_parsing() {
        let f = read_csv_frame(&b"1, 2,3\n4,5,6\n"[..]).unwrap();
        assert_eq!((f.rows, f.cols), (2, 3));
        assert_eq!(f.get(1, 2), 6.0);
        assert!(read_csv_frame(&b"1,2\n3\n"[..]).is_err());
    }

    #[test]
    fn background_is_pixelwise_mean() {
        let a = Frame::from_fn(2, 2, |_, _| 1.0);
        let b = Frame::from_fn(2, 2, |r, c| (r + c) as f64);
        let bg = estimate_background(&FrameStack::unlabeled(vec![a, b]).unwrap()).unwrap();
        assert_eq!(bg.data, vec![0.5, 1.0, 1.0, 1.5]);
    }

    #[test]
    fn shape_mismatch_detected() {
        let a = Frame::from_fn(2, 2, |_, _| 1.0);
        let b = Frame::from_fn(2, 3, |_, _| 1.0);
        assert!(matches!(
            FrameStack::unlabeled(vec![a.clone(), b.clone()]),
            Err(MonolocError::ShapeMismatch { .. })
        ));
        assert!(matches!(center_frame(&b, &a), Err(MonolocError::ShapeMismatch { .. })));
    }

    #[test]
    fn centering_uses_pixel_centres() {
        let bg = Frame::from_fn(2, 3, |_, _| 10.0);
        let mut f = bg.clone();
        f.data[4] = 17.0; // row 1, col 1
        let ds = center_frame(&f, &bg).unwrap();
        assert_eq!(ds.point(4), &[1.5, 1.5]);
        assert_eq!(ds.y().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(ds.y()[4], 7.0);
        assert_eq!(ds.bounds().upper(), &[3.0, 2.0]);
    }

    #[test]
    fn subsample_sizes() {
        let bg = Frame::from_fn(5, 5, |_, _| 0.0);
        let ds = center_frame(&bg, &bg).unwrap();
        assert_eq!(subsample_grid(&ds, 5, 1).unwrap().len(), 25);
        assert_eq!(subsample_indices(25, 5, 3).unwrap(), (0..25).collect::<Vec<_>>());
        assert!(matches!(
            subsample_grid(&ds, 6, 1),
            Err(MonolocError::TooFewPixels { requested: 36, available: 25 })
        ));
    }

    #[test]
    fn blur_keeps_mask_in_unit_range() {
        let mut s = SyntheticScene::three_channel(30, 40, [20.0, 15.0], 5.0, 1.0);
        s.blur = 1.5;
        let m = s.mask();
        assert!(m.data.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        assert!(m.get(15, 20) > 0.9 && m.get(0, 0) < 1e-6);
    }
}
