//! Binary dataset container and line-oriented text ingestion.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! magic "EEGC" | version u16 | num_samples u64 | seq_len u32 | num_classes u16
//! class-name table: per class  u16 length + UTF-8 bytes
//! key table:        per sample u16 length + UTF-8 bytes
//! (version 2 only)  split seed u64 + split tag u8 per sample
//! label block:      u8 per sample
//! signal block:     num_samples x seq_len f32, row-major
//! ```
//!
//! Version 1 files carry no split assignment; writing a dataset that has one
//! produces version 2. Signals round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, Sample, Split, SplitTag};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EEGC";
const VERSION_PLAIN: u16 = 1;
const VERSION_SPLIT: u16 = 2;

pub fn write_container(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    let version = if dataset.split.is_some() {
        VERSION_SPLIT
    } else {
        VERSION_PLAIN
    };
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&(dataset.len() as u64).to_le_bytes())?;
    w.write_all(&(dataset.seq_len as u32).to_le_bytes())?;
    w.write_all(&(dataset.num_classes() as u16).to_le_bytes())?;
    for name in &dataset.class_names {
        write_str(&mut w, name)?;
    }
    for s in &dataset.samples {
        write_str(&mut w, &s.key)?;
    }
    if let Some(split) = &dataset.split {
        w.write_all(&split.seed.to_le_bytes())?;
        for tag in &split.tags {
            w.write_all(&[tag.code()])?;
        }
    }
    for s in &dataset.samples {
        w.write_all(&[s.label])?;
    }
    for s in &dataset.samples {
        for v in &s.signal {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad container magic {:02x?}, expected {MAGIC:02x?}",
            magic
        )));
    }
    let version = read_u16(&mut r)?;
    if version != VERSION_PLAIN && version != VERSION_SPLIT {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let num_samples = read_u64(&mut r)? as usize;
    let seq_len = read_u32(&mut r)? as usize;
    let num_classes = read_u16(&mut r)? as usize;
    let class_names = (0..num_classes)
        .map(|_| read_str(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let keys = (0..num_samples)
        .map(|_| read_str(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let split = if version == VERSION_SPLIT {
        let seed = read_u64(&mut r)?;
        let mut tags = vec![0u8; num_samples];
        read_exact(&mut r, &mut tags)?;
        Some(Split {
            seed,
            tags: tags
                .into_iter()
                .map(SplitTag::from_code)
                .collect::<Result<Vec<_>>>()?,
        })
    } else {
        None
    };
    let mut labels = vec![0u8; num_samples];
    read_exact(&mut r, &mut labels)?;
    let mut samples = Vec::with_capacity(num_samples);
    let mut buf = vec![0u8; seq_len * 4];
    for (key, label) in keys.into_iter().zip(labels) {
        read_exact(&mut r, &mut buf)?;
        let signal = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        samples.push(Sample { key, label, signal });
    }
    // trailing garbage means the file was not produced by this writer
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("container has trailing bytes".into()));
    }
    let mut ds = Dataset::new(class_names, seq_len, samples)?;
    ds.split = split;
    ds.validate()?;
    Ok(ds)
}

/// Text ingestion: one record per line, `label:v1,v2,...,vL`. All lines must
/// share the same length; keys are assigned sequentially.
pub fn read_text_dataset(path: &Path, class_names: &[String]) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    let mut seq_len = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (label_str, values_str) = line.split_once(':').ok_or_else(|| {
            Error::Format(format!("line {}: expected 'label:v1,v2,...'", lineno + 1))
        })?;
        let label: u8 = label_str
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad label '{label_str}'", lineno + 1)))?;
        if label as usize >= class_names.len() {
            return Err(Error::Input(format!(
                "line {}: label {label} out of range for {} classes",
                lineno + 1,
                class_names.len()
            )));
        }
        let signal = values_str
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f32>()
                    .map_err(|_| Error::Format(format!("line {}: bad float '{v}'", lineno + 1)))
            })
            .collect::<Result<Vec<f32>>>()?;
        match seq_len {
            None => seq_len = Some(signal.len()),
            Some(l) if l != signal.len() => {
                return Err(Error::Format(format!(
                    "line {}: length {} differs from {}",
                    lineno + 1,
                    signal.len(),
                    l
                )))
            }
            _ => {}
        }
        samples.push(Sample {
            key: format!("txt-{:06}", samples.len()),
            label,
            signal,
        });
    }
    let seq_len = seq_len.ok_or_else(|| Error::Format("text dataset is empty".into()))?;
    Dataset::new(class_names.to_vec(), seq_len, samples)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::Format(format!("string too long ({} bytes)", bytes.len())));
    }
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("container truncated".into()))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u16(r)? as usize;
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::Format("invalid UTF-8 in string table".into()))
}
