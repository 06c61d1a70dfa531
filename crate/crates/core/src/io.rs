//! File formats: binary recordings, CSV code sets, JSON models and reports.
//!
//! Recordings use a compact little-endian binary layout (magic `VEPR`);
//! everything human-inspectable — codes, TRFs, decoder models, traces,
//! configs — is CSV or JSON. All text output is locale-independent, and
//! floats in CSV are printed with 17 significant digits so a read-back is
//! bit-exact.
//!
//! Recording layout, all little-endian:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `VEPR`                           |
//! | 4      | 4    | version (u32, = 1)                     |
//! | 8      | 4    | n_trials (u32)                         |
//! | 12     | 4    | n_channels (u32)                       |
//! | 16     | 4    | n_samples (u32)                        |
//! | 20     | 8    | sample_rate (f64)                      |
//! | 28     | 4·T  | labels (u32 each)                      |
//! | ...    | 8·T·C·S | payload, trial → channel → sample   |
//!
//! The latency offset is analysis metadata, not part of the transport
//! format; readers get 0 and writers warn when dropping a non-zero value.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderModel, Recording};
use crate::encoder::Trf;
use crate::error::{Error, Result};
use crate::rng::GENERATOR_NAME;
use crate::stimgen::{CodeKind, CodeSet, CodeStage, StimulusCode};

pub const RECORDING_MAGIC: [u8; 4] = *b"VEPR";
pub const RECORDING_VERSION: u32 = 1;
pub const CODE_SET_VERSION: u32 = 1;
pub const TRF_VERSION: u32 = 1;
pub const MODEL_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Recording binary format
// ---------------------------------------------------------------------------

pub fn write_recording(rec: &Recording, path: &Path) -> Result<()> {
    let (t, c, s) = (rec.n_trials(), rec.n_channels(), rec.n_samples());
    for (name, v) in [("n_trials", t), ("n_channels", c), ("n_samples", s)] {
        if v > u32::MAX as usize {
            return Err(Error::InvalidParam(format!("{name} {v} exceeds the u32 format limit")));
        }
    }
    if rec.latency_offset_s != 0.0 {
        log::warn!(
            "recording latency offset {} s is not part of the file format and will be dropped",
            rec.latency_offset_s
        );
    }
    let mut bytes =
        Vec::with_capacity(28 + 4 * t + 8 * t * c * s);
    bytes.extend_from_slice(&RECORDING_MAGIC);
    bytes.extend_from_slice(&RECORDING_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(t as u32).to_le_bytes());
    bytes.extend_from_slice(&(c as u32).to_le_bytes());
    bytes.extend_from_slice(&(s as u32).to_le_bytes());
    bytes.extend_from_slice(&rec.sample_rate_hz.to_le_bytes());
    for label in &rec.labels {
        bytes.extend_from_slice(&label.to_le_bytes());
    }
    for trial in 0..t {
        for ch in 0..c {
            for sample in 0..s {
                bytes.extend_from_slice(&rec.data[[trial, ch, sample]].to_le_bytes());
            }
        }
    }
    fs::write(path, &bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn take<'a>(bytes: &'a [u8], offset: usize, len: usize) -> Result<&'a [u8]> {
    if bytes.len() < offset + len {
        return Err(Error::TruncatedPayload {
            offset: offset as u64,
            expected_bytes: len as u64,
            found_bytes: bytes.len().saturating_sub(offset) as u64,
        });
    }
    Ok(&bytes[offset..offset + len])
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, offset, 4)?.try_into().unwrap()))
}

pub fn read_recording(path: &Path) -> Result<Recording> {
    let bytes =
        fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let magic = take(&bytes, 0, 4)?;
    if magic != RECORDING_MAGIC {
        return Err(Error::BadMagic {
            offset: 0,
            expected: RECORDING_MAGIC,
            found: magic.try_into().unwrap(),
        });
    }
    let version = read_u32(&bytes, 4)?;
    if version != RECORDING_VERSION {
        return Err(Error::VersionUnsupported {
            offset: 4,
            found: version,
            supported: RECORDING_VERSION,
        });
    }
    let t = read_u32(&bytes, 8)? as usize;
    let c = read_u32(&bytes, 12)? as usize;
    let s = read_u32(&bytes, 16)? as usize;
    let rate = f64::from_le_bytes(take(&bytes, 20, 8)?.try_into().unwrap());
    let mut labels = Vec::with_capacity(t);
    for i in 0..t {
        labels.push(read_u32(&bytes, 28 + 4 * i)?);
    }
    let payload_offset = 28 + 4 * t;
    let payload = take(&bytes, payload_offset, 8 * t * c * s)?;
    let expected_total = payload_offset + 8 * t * c * s;
    if bytes.len() > expected_total {
        return Err(Error::TrailingBytes {
            offset: expected_total as u64,
            extra_bytes: (bytes.len() - expected_total) as u64,
        });
    }
    let mut data = Array3::<f64>::zeros((t, c, s));
    let mut k = 0;
    for trial in 0..t {
        for ch in 0..c {
            for sample in 0..s {
                data[[trial, ch, sample]] =
                    f64::from_le_bytes(payload[k..k + 8].try_into().unwrap());
                k += 8;
            }
        }
    }
    Recording::new(data, labels, rate, 0.0)
}

// ---------------------------------------------------------------------------
// Code sets: CSV values + JSON sidecar
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeMeta {
    class_id: u32,
    kind: CodeKind,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeSetSidecar {
    version: u32,
    stage: CodeStage,
    frame_rate_hz: f64,
    n_frames: usize,
    objective: Option<f64>,
    generator_name: String,
    codes: Vec<CodeMeta>,
    provenance: BTreeMap<String, String>,
}

/// Sidecar path of a code CSV: same stem with a `.json` extension.
pub fn code_sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Write `class_id,frame_index,value` rows plus a JSON sidecar holding the
/// metadata the CSV cannot carry (stage, kinds, seeds, provenance).
pub fn write_code_set(set: &CodeSet, csv_path: &Path) -> Result<()> {
    let mut text = String::from("class_id,frame_index,value\n");
    for code in &set.codes {
        for (i, v) in code.values.iter().enumerate() {
            text.push_str(&format!("{},{},{:.16e}\n", code.class_id, i, v));
        }
    }
    fs::write(csv_path, text)
        .map_err(|e| Error::io(format!("writing {}", csv_path.display()), e))?;
    let sidecar = CodeSetSidecar {
        version: CODE_SET_VERSION,
        stage: set.stage,
        frame_rate_hz: set.frame_rate_hz(),
        n_frames: set.n_frames(),
        objective: set.objective,
        generator_name: GENERATOR_NAME.to_string(),
        codes: set
            .codes
            .iter()
            .map(|c| CodeMeta { class_id: c.class_id, kind: c.kind, seed: c.seed })
            .collect(),
        provenance: set.provenance.clone(),
    };
    write_json(&sidecar, &code_sidecar_path(csv_path))
}

pub fn read_code_set(csv_path: &Path) -> Result<CodeSet> {
    let text = fs::read_to_string(csv_path)
        .map_err(|e| Error::io(format!("reading {}", csv_path.display()), e))?;
    let table_err = |line: usize, reason: String| Error::MalformedTable {
        path: csv_path.display().to_string(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "class_id,frame_index,value")) => {}
        Some((_, other)) => {
            return Err(table_err(1, format!("expected code header, found '{other}'")))
        }
        None => return Err(table_err(1, "empty file".into())),
    }
    // Group rows by class in first-appearance order.
    let mut order: Vec<u32> = Vec::new();
    let mut frames: BTreeMap<u32, Vec<(usize, f64)>> = BTreeMap::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = line.split(',');
        let (a, b, c) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => return Err(table_err(lineno, "expected 3 comma-separated fields".into())),
        };
        let class_id: u32 =
            a.parse().map_err(|_| table_err(lineno, format!("bad class_id '{a}'")))?;
        let frame: usize =
            b.parse().map_err(|_| table_err(lineno, format!("bad frame_index '{b}'")))?;
        let value: f64 = c.parse().map_err(|_| table_err(lineno, format!("bad value '{c}'")))?;
        if !frames.contains_key(&class_id) {
            order.push(class_id);
        }
        frames.entry(class_id).or_default().push((frame, value));
    }
    if order.is_empty() {
        return Err(table_err(1, "no code rows".into()));
    }
    let sidecar_path = code_sidecar_path(csv_path);
    let sidecar: CodeSetSidecar = read_json(&sidecar_path)?;
    if sidecar.version != CODE_SET_VERSION {
        return Err(Error::VersionUnsupported {
            offset: 0,
            found: sidecar.version,
            supported: CODE_SET_VERSION,
        });
    }
    if sidecar.codes.len() != order.len() {
        return Err(table_err(
            0,
            format!("sidecar lists {} codes, CSV holds {}", sidecar.codes.len(), order.len()),
        ));
    }
    let mut codes = Vec::with_capacity(order.len());
    for (class_id, meta) in order.iter().zip(&sidecar.codes) {
        if meta.class_id != *class_id {
            return Err(table_err(
                0,
                format!("sidecar code order ({}) disagrees with CSV ({class_id})", meta.class_id),
            ));
        }
        let mut rows = frames.remove(class_id).unwrap();
        rows.sort_unstable_by_key(|(f, _)| *f);
        for (i, (f, _)) in rows.iter().enumerate() {
            if *f != i {
                return Err(table_err(
                    0,
                    format!("class {class_id}: frame indices must cover 0..n, found {f} at {i}"),
                ));
            }
        }
        let values: Vec<f64> = rows.into_iter().map(|(_, v)| v).collect();
        if values.len() != sidecar.n_frames {
            return Err(table_err(
                0,
                format!(
                    "class {class_id} has {} frames, sidecar says {}",
                    values.len(),
                    sidecar.n_frames
                ),
            ));
        }
        codes.push(StimulusCode::new(
            *class_id,
            sidecar.frame_rate_hz,
            values,
            meta.kind,
            meta.seed,
        )?);
    }
    let mut set = CodeSet::new(codes, sidecar.stage)?;
    set.objective = sidecar.objective;
    set.provenance = sidecar.provenance;
    Ok(set)
}

// ---------------------------------------------------------------------------
// TRF JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrfFile {
    version: u32,
    sample_rate_hz: f64,
    lag_min_s: f64,
    lag_max_s: f64,
    ridge_lambda: f64,
    coeffs: Vec<f64>,
}

pub fn write_trf(trf: &Trf, path: &Path) -> Result<()> {
    write_json(
        &TrfFile {
            version: TRF_VERSION,
            sample_rate_hz: trf.sample_rate_hz,
            lag_min_s: trf.lag_min_s,
            lag_max_s: trf.lag_max_s,
            ridge_lambda: trf.ridge_lambda,
            coeffs: trf.coeffs.clone(),
        },
        path,
    )
}

pub fn read_trf(path: &Path) -> Result<Trf> {
    let file: TrfFile = read_json(path)?;
    if file.version != TRF_VERSION {
        return Err(Error::VersionUnsupported {
            offset: 0,
            found: file.version,
            supported: TRF_VERSION,
        });
    }
    let trf = Trf::from_coeffs(
        file.coeffs,
        file.sample_rate_hz,
        file.lag_min_s,
        file.ridge_lambda,
        0,
    )?;
    if (trf.lag_max_s - file.lag_max_s).abs() > 1e-9 {
        return Err(Error::MalformedTable {
            path: path.display().to_string(),
            line: 0,
            reason: format!(
                "lag_max_s {} inconsistent with {} coefficients from lag_min_s {}",
                file.lag_max_s,
                trf.coeffs.len(),
                file.lag_min_s
            ),
        });
    }
    Ok(trf)
}

// ---------------------------------------------------------------------------
// Decoder model JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    sample_rate_hz: f64,
    n_components: usize,
    shrinkage_gamma: f64,
    n_channels: usize,
    template_samples: usize,
    /// Spatial filters, `n_channels` rows of `n_components` entries.
    weights: Vec<Vec<f64>>,
    /// Per class: `n_components` rows of `template_samples` entries.
    templates: BTreeMap<u32, Vec<Vec<f64>>>,
}

pub fn write_model(model: &DecoderModel, path: &Path) -> Result<()> {
    let weights: Vec<Vec<f64>> =
        model.weights.rows().into_iter().map(|r| r.to_vec()).collect();
    let templates: BTreeMap<u32, Vec<Vec<f64>>> = model
        .templates
        .iter()
        .map(|(id, t)| (*id, t.rows().into_iter().map(|r| r.to_vec()).collect()))
        .collect();
    write_json(
        &ModelFile {
            version: MODEL_VERSION,
            sample_rate_hz: model.sample_rate_hz,
            n_components: model.n_components,
            shrinkage_gamma: model.shrinkage_gamma,
            n_channels: model.n_channels(),
            template_samples: model.template_samples(),
            weights,
            templates,
        },
        path,
    )
}

pub fn read_model(path: &Path) -> Result<DecoderModel> {
    let file: ModelFile = read_json(path)?;
    if file.version != MODEL_VERSION {
        return Err(Error::VersionUnsupported {
            offset: 0,
            found: file.version,
            supported: MODEL_VERSION,
        });
    }
    let shape_err = |reason: String| Error::MalformedTable {
        path: path.display().to_string(),
        line: 0,
        reason,
    };
    let weights = nested_to_array(&file.weights, file.n_channels, file.n_components)
        .map_err(|r| shape_err(format!("weights: {r}")))?;
    let mut templates = BTreeMap::new();
    for (id, rows) in &file.templates {
        let t = nested_to_array(rows, file.n_components, file.template_samples)
            .map_err(|r| shape_err(format!("template {id}: {r}")))?;
        templates.insert(*id, t);
    }
    if templates.is_empty() {
        return Err(shape_err("model holds no templates".into()));
    }
    Ok(DecoderModel {
        weights,
        templates,
        n_components: file.n_components,
        shrinkage_gamma: file.shrinkage_gamma,
        sample_rate_hz: file.sample_rate_hz,
    })
}

fn nested_to_array(
    rows: &[Vec<f64>],
    n_rows: usize,
    n_cols: usize,
) -> std::result::Result<Array2<f64>, String> {
    if rows.len() != n_rows {
        return Err(format!("expected {n_rows} rows, found {}", rows.len()));
    }
    let mut out = Array2::<f64>::zeros((n_rows, n_cols));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n_cols {
            return Err(format!("row {i} has {} entries, expected {n_cols}", row.len()));
        }
        for (j, v) in row.iter().enumerate() {
            out[[i, j]] = *v;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Generic JSON and table helpers
// ---------------------------------------------------------------------------

/// Pretty-printed JSON with a trailing newline; stable key order comes from
/// using ordered maps in the serialized types.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(format!("serializing {}", path.display()), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(format!("parsing {}", path.display()), e))
}

/// Write a small CSV table from a header and preformatted rows.
pub fn write_table(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let file =
        fs::File::create(path).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(format!("writing {}", path.display()), e);
    writeln!(w, "{header}").map_err(io_err)?;
    for row in rows {
        writeln!(w, "{row}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

// ---------------------------------------------------------------------------
