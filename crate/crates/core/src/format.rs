//! Binary trace-set files.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic        8  "CLKBTRC1"
//! version      u32 (1)
//! n_traces     u32
//! core_count   u8
//! sample_period_s f64
//! oversampling u32
//! noise_sigma  f64
//! alpha        f64
//! pulse        u8, pulse_half_width f64
//! capture_cycles u32
//! error_fraction f64
//! idle_edge_amplitude f64
//! random_trigger u8
//! seed         u64
//! key          16
//! key2         16            (core_count == 2 only)
//! fs           frequency set
//! fs2          frequency set (core_count == 2 only)
//! traces       n_traces records
//! ```
//!
//! A frequency set is `label_len u16, label utf-8, base_hz f64, f1..f4 f64,
//! duty_cycle f64`.
//!
//! A trace record is `failed u8, plaintext 16, ciphertext 16, n_samples u32,
//! samples f32 * n_samples`, followed by the clock ground truth: for each
//! core `n_edges u16, f64 * n_edges`, and for dual-core sets the dummy core's
//! ciphertext (16 bytes).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::aes::Block;
use crate::clock::FrequencySet;
use crate::error::{Error, Result};
use crate::synth::{ClockMeta, PowerTrace, PulseShape, TraceConfig, TraceSet};

pub const MAGIC: &[u8; 8] = b"CLKBTRC1";
pub const VERSION: u32 = 1;

pub fn write_trace_set(ts: &TraceSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode(ts, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_trace_set(path: impl AsRef<Path>) -> Result<TraceSet> {
    let mut r = BufReader::new(File::open(path)?);
    decode(&mut r)
}

pub fn to_bytes(ts: &TraceSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    encode(ts, &mut out)?;
    Ok(out)
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<TraceSet> {
    decode(&mut bytes)
}

fn encode(ts: &TraceSet, w: &mut impl Write) -> Result<()> {
    let cores = ts.core_count();
    if ts.fs2.is_some() != (cores == 2) {
        return Err(Error::Malformed("fs2 must be present exactly for dual-core sets".into()));
    }
    let n = u32::try_from(ts.traces.len()).map_err(|_| Error::Overflow("trace count"))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&[cores])?;
    w.write_all(&ts.sample_period_s().to_le_bytes())?;
    let c = &ts.config;
    w.write_all(&c.oversampling.to_le_bytes())?;
    w.write_all(&c.noise_sigma.to_le_bytes())?;
    w.write_all(&c.alpha.to_le_bytes())?;
    w.write_all(&[c.pulse.code()])?;
    w.write_all(&c.pulse_half_width.to_le_bytes())?;
    w.write_all(&c.capture_cycles.to_le_bytes())?;
    w.write_all(&c.error_fraction.to_le_bytes())?;
    w.write_all(&c.idle_edge_amplitude.to_le_bytes())?;
    w.write_all(&[c.random_trigger as u8])?;
    w.write_all(&ts.seed.to_le_bytes())?;
    w.write_all(&ts.key)?;
    if let Some(k2) = &ts.key2 {
        w.write_all(k2)?;
    }
    write_fs(w, &ts.fs)?;
    if let Some(fs2) = &ts.fs2 {
        write_fs(w, fs2)?;
    }
    for t in &ts.traces {
        if t.core_count != cores {
            return Err(Error::Malformed("mixed core counts in one set".into()));
        }
        w.write_all(&[t.failed as u8])?;
        w.write_all(&t.plaintext)?;
        w.write_all(&t.ciphertext)?;
        let ns = u32::try_from(t.samples.len()).map_err(|_| Error::Overflow("sample count"))?;
        w.write_all(&ns.to_le_bytes())?;
        let mut buf = Vec::with_capacity(t.samples.len() * 4);
        for s in &t.samples {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        w.write_all(&buf)?;
        if t.clock_meta.round_edges_s.len() != cores as usize {
            return Err(Error::Malformed("clock metadata does not match core count".into()));
        }
        for edges in &t.clock_meta.round_edges_s {
            let ne = u16::try_from(edges.len()).map_err(|_| Error::Overflow("edge count"))?;
            w.write_all(&ne.to_le_bytes())?;
            for e in edges {
                w.write_all(&e.to_le_bytes())?;
            }
        }
        if cores == 2 {
            let ct2 = t
                .clock_meta
                .ciphertext2
                .ok_or_else(|| Error::Malformed("dual-core trace without second ciphertext".into()))?;
            w.write_all(&ct2)?;
        }
    }
    Ok(())
}

fn write_fs(w: &mut impl Write, fs: &FrequencySet) -> Result<()> {
    let label = fs.label.as_bytes();
    let len = u16::try_from(label.len()).map_err(|_| Error::Overflow("label length"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(label)?;
    w.write_all(&fs.base_hz.to_le_bytes())?;
    for f in &fs.fundamentals {
        w.write_all(&f.to_le_bytes())?;
    }
    w.write_all(&fs.duty_cycle.to_le_bytes())?;
    Ok(())
}

struct Reader<'a, R: Read> {
    inner: &'a mut R,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated(what),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn vec(&mut self, len: usize, what: &'static str) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        let got = self.inner.by_ref().take(len as u64).read_to_end(&mut buf)?;
        if got != len {
            return Err(Error::Truncated(what));
        }
        Ok(buf)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.bytes::<1>(what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(what)?))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }

    fn flag(&mut self, what: &'static str) -> Result<bool> {
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Malformed(format!("{what}: flag byte {v}"))),
        }
    }

    fn block(&mut self, what: &'static str) -> Result<Block> {
        self.bytes(what)
    }

    fn fs(&mut self) -> Result<FrequencySet> {
        let len = self.u16("frequency set label")? as usize;
        let label = String::from_utf8(self.vec(len, "frequency set label")?)
            .map_err(|_| Error::Malformed("label is not utf-8".into()))?;
        let base_hz = self.f64("base frequency")?;
        let mut fundamentals = [0.0; 4];
        for f in fundamentals.iter_mut() {
            *f = self.f64("fundamental frequency")?;
        }
        let duty = self.f64("duty cycle")?;
        FrequencySet::with_duty(label, base_hz, fundamentals, duty)
            .map_err(|e| Error::Malformed(e.to_string()))
    }
}

fn decode(r: &mut impl Read) -> Result<TraceSet> {
    let mut r = Reader { inner: r };
    let magic: [u8; 8] = r.bytes("magic")?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = r.u32("trace count")? as usize;
    let cores = r.u8("core count")?;
    if cores != 1 && cores != 2 {
        return Err(Error::Malformed(format!("core count {cores}")));
    }
    let sample_period = r.f64("sample period")?;
    let oversampling = r.u32("oversampling")?;
    let noise_sigma = r.f64("noise sigma")?;
    let alpha = r.f64("alpha")?;
    let pulse = PulseShape::from_code(r.u8("pulse shape")?)
        .ok_or_else(|| Error::Malformed("unknown pulse shape".into()))?;
    let pulse_half_width = r.f64("pulse half width")?;
    let capture_cycles = r.u32("capture cycles")?;
    let error_fraction = r.f64("error fraction")?;
    let idle_edge_amplitude = r.f64("idle edge amplitude")?;
    let random_trigger = r.flag("random trigger")?;
    let seed = r.u64("seed")?;
    let config = TraceConfig {
        oversampling,
        noise_sigma,
        alpha,
        pulse,
        pulse_half_width,
        capture_cycles,
        error_fraction,
        idle_edge_amplitude,
        random_trigger,
    };
    config
        .validate()
        .map_err(|e| Error::Malformed(e.to_string()))?;
    let key = r.block("key")?;
    let key2 = if cores == 2 { Some(r.block("key2")?) } else { None };
    let fs = r.fs()?;
    let fs2 = if cores == 2 { Some(r.fs()?) } else { None };
    let expected_period = fs.base_period() / oversampling as f64;
    if (sample_period - expected_period).abs() > 1e-9 * expected_period {
        return Err(Error::Malformed("sample period does not match header".into()));
    }

    let mut traces = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let failed = r.flag("failed flag")?;
        let plaintext = r.block("plaintext")?;
        let ciphertext = r.block("ciphertext")?;
        let ns = r.u32("sample count")? as usize;
        let raw = r.vec(ns * 4, "samples")?;
        let samples = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut round_edges_s = Vec::with_capacity(cores as usize);
        for _ in 0..cores {
            let ne = r.u16("edge count")? as usize;
            let mut edges = Vec::with_capacity(ne);
            for _ in 0..ne {
                edges.push(r.f64("edge time")?);
            }
            round_edges_s.push(edges);
        }
        let ciphertext2 = if cores == 2 {
            Some(r.block("second ciphertext")?)
        } else {
            None
        };
        traces.push(PowerTrace {
            samples,
            sample_period_s: sample_period,
            plaintext,
            ciphertext,
            failed,
            core_count: cores,
            clock_meta: ClockMeta {
                round_edges_s,
                ciphertext2,
            },
        });
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(Error::Malformed("trailing bytes after last trace".into()));
    }
    Ok(TraceSet {
        traces,
        key,
        key2,
        fs,
        fs2,
        config,
        seed,
    })
}
