//! Dataset directory: `manifest.json` with counts, dimensions and seeds, plus
//! `data.nsk` holding the tensors in the `NSK1` container.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::checkpoint::{decode, encode, record_offsets, TensorRecord};
use crate::signal::SourceTrial;
use crate::synthgen::{Dataset, GenConfig, Sample, StimulusImage};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "data.nsk";
const FORMAT: &str = "neuroscore-dataset";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub n_samples: usize,
    pub category_names: Vec<String>,
    pub category_counts: Vec<usize>,
    pub image_height: usize,
    pub image_width: usize,
    pub source_len: usize,
    pub fs_hz: f64,
    pub epoch_start_ms: f64,
    pub master_seed: u64,
    /// Per-sample generator seeds, in payload order.
    pub seeds: Vec<u64>,
    pub generator: GenConfig,
}

pub fn manifest_for(ds: &Dataset) -> Result<Manifest> {
    let first = ds
        .samples
        .first()
        .ok_or_else(|| Error::Input("dataset is empty".into()))?;
    let mut counts = vec![0; ds.n_categories()];
    for s in &ds.samples {
        *counts
            .get_mut(s.category)
            .ok_or_else(|| Error::Input(format!("sample category {} out of range", s.category)))? += 1;
    }
    Ok(Manifest {
        format: FORMAT.into(),
        version: VERSION,
        n_samples: ds.samples.len(),
        category_names: ds.config.category_names.clone(),
        category_counts: counts,
        image_height: first.image.height,
        image_width: first.image.width,
        source_len: first.trial.samples.len(),
        fs_hz: first.trial.fs_hz,
        epoch_start_ms: first.trial.epoch_start_ms,
        master_seed: ds.config.master_seed,
        seeds: ds.samples.iter().map(|s| s.image.seed).collect(),
        generator: ds.config.clone(),
    })
}

/// Tensor records for the payload file.
pub fn dataset_records(ds: &Dataset, m: &Manifest) -> Result<Vec<TensorRecord>> {
    let n = m.n_samples;
    let mut images = Vec::with_capacity(n * m.image_height * m.image_width);
    let mut sources = Vec::with_capacity(n * m.source_len);
    for (i, s) in ds.samples.iter().enumerate() {
        if s.image.pixels.len() != m.image_height * m.image_width || s.trial.samples.len() != m.source_len {
            return Err(Error::Shape(format!("sample {i} differs in image or source size")));
        }
        if s.trial.fs_hz != m.fs_hz || s.trial.epoch_start_ms != m.epoch_start_ms {
            return Err(Error::Shape(format!("sample {i} differs in sampling rate or epoch start")));
        }
        images.extend_from_slice(&s.image.pixels);
        sources.extend_from_slice(&s.trial.samples);
    }
    let per = |f: &dyn Fn(&Sample) -> f64| ds.samples.iter().map(f).collect::<Vec<_>>();
    Ok(vec![
        TensorRecord::new("images", vec![n, m.image_height, m.image_width], images),
        TensorRecord::new("sources", vec![n, m.source_len], sources),
        TensorRecord::new("quality", vec![n], per(&|s| s.image.quality)),
        TensorRecord::new("true_amplitude", vec![n], per(&|s| s.trial.true_amplitude.unwrap_or(f64::NAN))),
        TensorRecord::new("category", vec![n], per(&|s| s.category as f64)),
    ])
}

pub fn export_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    let manifest = manifest_for(ds)?;
    let records = dataset_records(ds, &manifest)?;
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join(MANIFEST_FILE), json)?;
    fs::write(dir.join(PAYLOAD_FILE), encode(&records))?;
    Ok(())
}

/// Byte offset of a 1-based line/column position.
fn text_offset(text: &str, line: usize, column: usize) -> u64 {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)) as u64
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text)
        .map_err(|e| Error::format(text_offset(text, e.line(), e.column()), format!("manifest: {e}")))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::format(0, format!("manifest: unsupported format {} v{}", m.format, m.version)));
    }
    Ok(m)
}

/// Rebuilds a dataset from its manifest and decoded payload, cross-checking
/// every count and dimension the manifest declares.
pub fn assemble_dataset(m: &Manifest, records: &[TensorRecord]) -> Result<Dataset> {
    let offsets = record_offsets(records);
    let n = m.n_samples;
    let find = |name: &str, dims: Vec<usize>| -> Result<(&TensorRecord, u64)> {
        let (i, r) = records
            .iter()
            .enumerate()
            .find(|(_, r)| r.name == name)
            .ok_or_else(|| Error::format(0, format!("payload has no {name} record")))?;
        if r.dims != dims {
            return Err(Error::format(
                offsets[i],
                format!("{name} has dims {:?}, manifest implies {dims:?}", r.dims),
            ));
        }
        Ok((r, offsets[i]))
    };
    if m.category_counts.iter().sum::<usize>() != n || m.seeds.len() != n {
        return Err(Error::format(0, "manifest counts disagree with n_samples"));
    }
    if m.category_names.len() != m.category_counts.len() {
        return Err(Error::format(0, "manifest category names and counts differ in length"));
    }
    let (images, _) = find("images", vec![n, m.image_height, m.image_width])?;
    let (sources, _) = find("sources", vec![n, m.source_len])?;
    let (quality, _) = find("quality", vec![n])?;
    let (amp, _) = find("true_amplitude", vec![n])?;
    let (cat, cat_off) = find("category", vec![n])?;
    let mut counts = vec![0usize; m.category_counts.len()];
    let mut samples = Vec::with_capacity(n);
    let pix = m.image_height * m.image_width;
    for i in 0..n {
        let c = cat.data[i];
        if c < 0.0 || c.fract() != 0.0 || c as usize >= counts.len() {
            return Err(Error::format(cat_off, format!("sample {i} has invalid category {c}")));
        }
        let c = c as usize;
        counts[c] += 1;
        let trial = SourceTrial::new(sources.data[i * m.source_len..(i + 1) * m.source_len].to_vec(), m.fs_hz, m.epoch_start_ms)
            .map_err(|e| Error::format(0, format!("sample {i}: {e}")))?;
        samples.push(Sample {
            category: c,
            image: StimulusImage {
                height: m.image_height,
                width: m.image_width,
                pixels: images.data[i * pix..(i + 1) * pix].to_vec(),
                quality: quality.data[i],
                category: c,
                seed: m.seeds[i],
            },
            trial: SourceTrial {
                true_amplitude: Some(amp.data[i]).filter(|v| !v.is_nan()),
                ..trial
            },
        });
    }
    if counts != m.category_counts {
        return Err(Error::format(
            cat_off,
            format!("payload category counts {counts:?} differ from manifest {:?}", m.category_counts),
        ));
    }
    Ok(Dataset {
        config: m.generator.clone(),
        samples,
    })
}

pub fn import_dataset(dir: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest = parse_manifest(&text)?;
    let records = decode(&fs::read(dir.join(PAYLOAD_FILE))?)?;
    assemble_dataset(&manifest, &records)
}
