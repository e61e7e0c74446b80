//! Multichannel sampled signals and their file formats.
//!
//! Samples are stored row-major (channel after channel). The binary
//! container is little-endian: a 16-byte header (`NTRKSIG\0`, format
//! version as `u32`, four reserved zero bytes), then `fs` as `f64`,
//! `n_channels` as `u32`, `n_samples` as `u64`, then the samples as `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};

const MAGIC: &[u8; 8] = b"NTRKSIG\0";
const FORMAT_VERSION: u32 = 1;

/// A sampled time series with one or more channels of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal {
    data: Vec<f64>,
    n_channels: usize,
    n_samples: usize,
    fs: f64,
    labels: Option<Vec<String>>,
}

impl MultichannelSignal {
    /// Builds a signal from row-major samples.
    pub fn new(data: Vec<f64>, n_channels: usize, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(invalid(format!("sampling rate must be positive, got {fs}")));
        }
        if n_channels == 0 {
            return Err(invalid("signal needs at least one channel"));
        }
        if data.len() % n_channels != 0 {
            return Err(Error::Shape(format!(
                "{} samples cannot be split into {} equal channels",
                data.len(),
                n_channels
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite sample at channel {}, index {}",
                i / (data.len() / n_channels).max(1),
                i % (data.len() / n_channels).max(1)
            )));
        }
        let n_samples = data.len() / n_channels;
        Ok(Self { data, n_channels, n_samples, fs, labels: None })
    }

    pub fn from_channels(channels: Vec<Vec<f64>>, fs: f64) -> Result<Self> {
        let n_channels = channels.len();
        if n_channels == 0 {
            return Err(invalid("signal needs at least one channel"));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        Self::new(channels.concat(), n_channels, fs)
    }

    pub fn mono(samples: Vec<f64>, fs: f64) -> Result<Self> {
        Self::new(samples, 1, fs)
    }

    pub fn zeros(n_channels: usize, n_samples: usize, fs: f64) -> Result<Self> {
        Self::new(vec![0.0; n_channels * n_samples], n_channels, fs)
    }

    /// Attaches channel names. The list must have one entry per channel.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_channels {
            return Err(Error::Shape(format!(
                "{} labels for {} channels",
                labels.len(),
                self.n_channels
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Name of channel `i`: its label when present, otherwise `ch{i}`.
    pub fn channel_name(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => format!("ch{i}"),
        }
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.fs
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_samples.max(1)).take(self.n_channels)
    }

    /// Same channels and rate, new samples. Used by per-channel transforms.
    pub(crate) fn with_data(&self, data: Vec<f64>, n_samples: usize, fs: f64) -> Self {
        debug_assert_eq!(data.len(), n_samples * self.n_channels);
        Self { data, n_channels: self.n_channels, n_samples, fs, labels: self.labels.clone() }
    }

    /// Copy of samples `start..end` on every channel.
    pub fn slice_samples(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.n_samples {
            return Err(invalid(format!(
                "sample range {start}..{end} outside 0..{}",
                self.n_samples
            )));
        }
        let mut data = Vec::with_capacity((end - start) * self.n_channels);
        for ch in self.channels() {
            data.extend_from_slice(&ch[start..end]);
        }
        Ok(self.with_data(data, end - start, self.fs))
    }

    /// Stacks signals with identical rate and length into one signal.
    pub fn stack(parts: &[&MultichannelSignal]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| invalid("nothing to stack"))?;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.n_samples != first.n_samples || p.fs != first.fs {
                return Err(Error::Shape("stacked signals differ in length or rate".into()));
            }
            data.extend_from_slice(&p.data);
            labels.extend((0..p.n_channels).map(|i| p.channel_name(i)));
        }
        let n_channels = parts.iter().map(|p| p.n_channels).sum();
        Self::new(data, n_channels, first.fs)?.with_labels(labels)
    }

    pub fn write_container<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[0u8; 4])?;
        w.write_all(&self.fs.to_le_bytes())?;
        let n_channels = u32::try_from(self.n_channels)
            .map_err(|_| invalid("too many channels for the container format"))?;
        w.write_all(&n_channels.to_le_bytes())?;
        w.write_all(&(self.n_samples as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_container<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..8] != MAGIC {
            return Err(Error::Format("not a signal container (bad magic)".into()));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b8)?;
        let fs = f64::from_le_bytes(b8);
        r.read_exact(&mut b4)?;
        let n_channels = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let n_samples = u64::from_le_bytes(b8) as usize;
        let total = n_channels
            .checked_mul(n_samples)
            .ok_or_else(|| Error::Format("container dimensions overflow".into()))?;
        let mut raw = vec![0u8; total * 8];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(data, n_channels, fs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_container(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_container(BufReader::new(File::open(path)?))
    }

    /// CSV with a header row; first column is time in seconds, then one
    /// column per channel.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let names: Vec<String> = (0..self.n_channels).map(|i| self.channel_name(i)).collect();
        writeln!(w, "time_s,{}", names.join(","))?;
        for t in 0..self.n_samples {
            write!(w, "{}", t as f64 / self.fs)?;
            for c in 0..self.n_channels {
                write!(w, ",{}", self.data[c * self.n_samples + t])?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`write_csv`](Self::write_csv). The
    /// sampling rate is recovered from the spacing of the time column.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))??;
        let names: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
        if names.is_empty() {
            return Err(Error::Format("CSV needs a time column and at least one channel".into()));
        }
        let mut times = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Format(format!("row {} is short", lineno + 2)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {e}", lineno + 2)))
            };
            times.push(parse(fields.next())?);
            for col in columns.iter_mut() {
                col.push(parse(fields.next())?);
            }
        }
        if times.len() < 2 {
            return Err(Error::Format("CSV needs at least two rows to infer the rate".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::Format("time column must be increasing".into()));
        }
        Self::from_channels(columns, 1.0 / dt)?.with_labels(names)
    }
}
