//! File formats: the raw CSV/JSON layout, and the two tar snapshots (raw and
//! processed) that bundle them.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{Dataset, RawDataset};
use super::schema::Schema;
use super::types::{
    AgeGroup, ContextPattern, FeatureDescriptor, Gender, HealthLabels, Indicator, MotionPattern,
    MotionSample, NormalizationStats, Participant, RawContextRecord, RawMotionRecord, RawValue,
    MOTION_AXES, WEEK_MINUTES,
};
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

fn parse_err(file: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line: line as usize,
        msg: msg.into(),
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(r)
}

fn csv_error(file: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_err(file, line, e.to_string())
}

pub fn parse_schema(file: &Path, bytes: &[u8]) -> Result<Schema> {
    let features: Vec<FeatureDescriptor> =
        serde_json::from_slice(bytes).map_err(|e| parse_err(file, e.line() as u64, e.to_string()))?;
    Schema::new(features)
}

pub fn parse_context<R: Read>(file: &Path, schema: &Schema, r: R) -> Result<Vec<RawContextRecord>> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    if headers.get(0) != Some("participant_id") {
        return Err(parse_err(file, 1, "first column must be `participant_id`"));
    }
    let columns: Vec<&FeatureDescriptor> = headers
        .iter()
        .skip(1)
        .map(|id| {
            schema
                .get(id)
                .map_err(|_| Error::Schema(format!("{}: unknown feature id `{id}`", file.display())))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(file, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let id = row.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(parse_err(file, line, "empty participant_id"));
        }
        let mut values = BTreeMap::new();
        for (cell, f) in row.iter().skip(1).zip(&columns) {
            if cell.is_empty() {
                continue;
            }
            let v = if f.is_numeric() {
                let x: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(file, line, format!("`{}`: not a number: `{cell}`", f.id)))?;
                if !x.is_finite() {
                    return Err(parse_err(file, line, format!("`{}`: non-finite value", f.id)));
                }
                RawValue::Number(x)
            } else {
                RawValue::Category(cell.to_string())
            };
            values.insert(f.id.clone(), v);
        }
        out.push(RawContextRecord {
            participant_id: id,
            values,
        });
    }
    Ok(out)
}

pub fn parse_labels<R: Read>(file: &Path, r: R) -> Result<BTreeMap<String, HealthLabels>> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    let expected: Vec<&str> = std::iter::once("participant_id")
        .chain(Indicator::ALL.iter().map(|i| i.name()))
        .collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            file,
            1,
            format!("header must be `{}`", expected.join(",")),
        ));
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(file, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let id = row.get(0).unwrap_or_default().to_string();
        let mut labels = HealthLabels::default();
        for (i, cell) in row.iter().skip(1).enumerate() {
            labels.0[i] = match cell {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(file, line, format!("label must be 0 or 1, got `{other}`"))),
            };
        }
        if out.insert(id.clone(), labels).is_some() {
            return Err(Error::Integrity(format!(
                "{}: duplicate participant id `{id}`",
                file.display()
            )));
        }
    }
    Ok(out)
}

pub fn parse_motion<R: Read>(file: &Path, participant_id: &str, r: R) -> Result<RawMotionRecord> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["timestamp", "ax", "ay", "az"] {
        return Err(parse_err(file, 1, "header must be `timestamp,ax,ay,az`"));
    }
    let mut samples: Vec<MotionSample> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(file, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let timestamp: i64 = row[0]
            .parse()
            .map_err(|_| parse_err(file, line, format!("bad timestamp `{}`", &row[0])))?;
        let mut axes = [0f32; 3];
        for (a, cell) in axes.iter_mut().zip(row.iter().skip(1)) {
            *a = cell
                .parse()
                .ok()
                .filter(|v: &f32| v.is_finite())
                .ok_or_else(|| parse_err(file, line, format!("bad acceleration `{cell}`")))?;
        }
        if let Some(prev) = samples.last() {
            if timestamp <= prev.timestamp {
                return Err(parse_err(file, line, "timestamps must be strictly increasing"));
            }
        }
        samples.push(MotionSample {
            timestamp,
            ax: axes[0],
            ay: axes[1],
            az: axes[2],
        });
    }
    Ok(RawMotionRecord {
        participant_id: participant_id.to_string(),
        samples,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads the raw file layout. Nothing is imputed or scaled.
pub fn load_dataset(
    context_file: &Path,
    motion_dir: &Path,
    labels_file: &Path,
    schema_file: &Path,
) -> Result<RawDataset> {
    let schema = parse_schema(schema_file, &read_file(schema_file)?)?;
    let context = parse_context(context_file, &schema, &read_file(context_file)?[..])?;
    let labels = parse_labels(labels_file, &read_file(labels_file)?[..])?;
    let mut motion = BTreeMap::new();
    for r in &context {
        let path = motion_dir.join(format!("{}.csv", r.participant_id));
        let record = parse_motion(&path, &r.participant_id, &read_file(&path)?[..])?;
        motion.insert(r.participant_id.clone(), record);
    }
    finish_raw(schema, context, motion, labels)
}

fn finish_raw(
    schema: Schema,
    context: Vec<RawContextRecord>,
    motion: BTreeMap<String, RawMotionRecord>,
    labels: BTreeMap<String, HealthLabels>,
) -> Result<RawDataset> {
    let raw = RawDataset {
        schema,
        context,
        motion,
        labels,
    };
    raw.validate()?;
    for r in &raw.context {
        if !raw.labels.contains_key(&r.participant_id) {
            return Err(Error::Integrity(format!(
                "no labels for participant `{}`",
                r.participant_id
            )));
        }
    }
    Ok(raw)
}

fn fmt_value(v: &RawValue) -> String {
    match v {
        RawValue::Number(x) => format!("{x}"),
        RawValue::Category(c) => c.clone(),
    }
}

/// Serializes a raw dataset into its constituent files, keyed by relative
/// path. Motion files live under `motion/`.
pub fn raw_files(raw: &RawDataset) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    files.insert(
        "schema.json".to_string(),
        serde_json::to_vec_pretty(raw.schema.features())?,
    );

    let mut ctx = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("participant_id")
        .chain(raw.schema.features().iter().map(|f| f.id.as_str()))
        .collect();
    ctx.write_record(&header).map_err(csv_io)?;
    for r in &raw.context {
        let row: Vec<String> = std::iter::once(r.participant_id.clone())
            .chain(
                raw.schema
                    .features()
                    .iter()
                    .map(|f| r.values.get(&f.id).map(fmt_value).unwrap_or_default()),
            )
            .collect();
        ctx.write_record(&row).map_err(csv_io)?;
    }
    files.insert("context.csv".into(), ctx.into_inner().map_err(|e| csv_io(e.into_error().into()))?);

    let mut lab = String::from("participant_id,MVPA,PHYF,VVAS,PSYF,RESI,CONN\n");
    for r in &raw.context {
        let l = raw.labels.get(&r.participant_id).copied().unwrap_or_default();
        lab.push_str(&r.participant_id);
        for v in l.0 {
            lab.push_str(if v { ",1" } else { ",0" });
        }
        lab.push('\n');
    }
    files.insert("labels.csv".into(), lab.into_bytes());

    for (id, m) in &raw.motion {
        let mut s = String::with_capacity(m.samples.len() * 32 + 20);
        s.push_str("timestamp,ax,ay,az\n");
        for x in &m.samples {
            use std::fmt::Write as _;
            let _ = writeln!(s, "{},{},{},{}", x.timestamp, x.ax, x.ay, x.az);
        }
        files.insert(format!("motion/{id}.csv"), s.into_bytes());
    }

    let stats = super::preprocess::compute_stats(&raw.schema, &raw.context);
    files.insert(
        "normalization_stats.json".into(),
        serde_json::to_vec_pretty(&stats)?,
    );
    Ok(files)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Artifact(format!("csv write failed: {e}"))
}

/// Writes the raw layout into `dir`.
pub fn write_raw_dir(raw: &RawDataset, dir: &Path) -> Result<()> {
    for (name, bytes) in raw_files(raw)? {
        let path = dir.join(&name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Deterministic tar: fixed mode, zero mtime/uid/gid, entries sorted by name.
pub fn write_archive(files: &BTreeMap<String, Vec<u8>>) -> Result<Vec<u8>> {
    let mut builder = tar::Builder::new(Vec::new());
    for (name, bytes) in files {
        let mut header = tar::Header::new_gnu();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder
            .append_data(&mut header, name, &bytes[..])
            .map_err(|e| Error::Artifact(format!("archive write failed: {e}")))?;
    }
    builder
        .into_inner()
        .map_err(|e| Error::Artifact(format!("archive write failed: {e}")))
}

pub fn read_archive(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut archive = tar::Archive::new(bytes);
    let mut out = BTreeMap::new();
    let entries = archive
        .entries()
        .map_err(|e| Error::Artifact(format!("corrupt archive: {e}")))?;
    for entry in entries {
        let mut entry = entry.map_err(|e| Error::Artifact(format!("corrupt archive: {e}")))?;
        let name = entry
            .path()
            .map_err(|e| Error::Artifact(format!("corrupt archive: {e}")))?
            .to_string_lossy()
            .into_owned();
        let mut data = Vec::new();
        entry
            .read_to_end(&mut data)
            .map_err(|e| Error::Artifact(format!("corrupt archive: {e}")))?;
        out.insert(name, data);
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn take<'a>(files: &'a BTreeMap<String, Vec<u8>>, name: &str) -> Result<&'a [u8]> {
    files
        .get(name)
        .map(|v| v.as_slice())
        .ok_or_else(|| Error::Artifact(format!("snapshot is missing `{name}`")))
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    v: u32,
    kind: String,
    participants: usize,
}

pub fn raw_snapshot_bytes(raw: &RawDataset) -> Result<Vec<u8>> {
    let mut files = raw_files(raw)?;
    files.insert(
        "manifest.json".into(),
        serde_json::to_vec_pretty(&Manifest {
            v: SNAPSHOT_VERSION,
            kind: "raw".into(),
            participants: raw.len(),
        })?,
    );
    write_archive(&files)
}

fn check_manifest(files: &BTreeMap<String, Vec<u8>>, kind: &str) -> Result<()> {
    let m: Manifest = serde_json::from_slice(take(files, "manifest.json")?)?;
    if m.v != SNAPSHOT_VERSION || m.kind != kind {
        return Err(Error::Artifact(format!(
            "expected a v{SNAPSHOT_VERSION} `{kind}` snapshot, found v{} `{}`",
            m.v, m.kind
        )));
    }
    Ok(())
}

pub fn read_raw_snapshot(bytes: &[u8]) -> Result<RawDataset> {
    let files = read_archive(bytes)?;
    check_manifest(&files, "raw")?;
    let schema = parse_schema(Path::new("schema.json"), take(&files, "schema.json")?)?;
    let context = parse_context(Path::new("context.csv"), &schema, take(&files, "context.csv")?)?;
    let labels = parse_labels(Path::new("labels.csv"), take(&files, "labels.csv")?)?;
    let mut motion = BTreeMap::new();
    for r in &context {
        let name = format!("motion/{}.csv", r.participant_id);
        let record = parse_motion(Path::new(&name), &r.participant_id, take(&files, &name)?)?;
        motion.insert(r.participant_id.clone(), record);
    }
    finish_raw(schema, context, motion, labels)
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredParticipant {
    id: String,
    gender: Gender,
    age: u8,
    age_group: AgeGroup,
    learning_mode: String,
    context: Vec<f32>,
    labels: HealthLabels,
    imputed_mask: Vec<bool>,
}

/// Processed snapshot: JSON metadata plus little-endian `f32` motion blocks.
pub fn processed_snapshot_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut files = BTreeMap::new();
    files.insert(
        "manifest.json".into(),
        serde_json::to_vec_pretty(&Manifest {
            v: SNAPSHOT_VERSION,
            kind: "processed".into(),
            participants: ds.len(),
        })?,
    );
    files.insert(
        "schema.json".into(),
        serde_json::to_vec_pretty(ds.schema.features())?,
    );
    files.insert(
        "normalization_stats.json".into(),
        serde_json::to_vec_pretty(&ds.normalization_stats)?,
    );
    let stored: Vec<StoredParticipant> = ds
        .participants
        .iter()
        .map(|p| StoredParticipant {
            id: p.id.clone(),
            gender: p.gender,
            age: p.age,
            age_group: p.age_group,
            learning_mode: p.learning_mode.clone(),
            context: p.context.values.clone(),
            labels: p.labels,
            imputed_mask: p.imputed_mask.clone(),
        })
        .collect();
    files.insert("participants.json".into(), serde_json::to_vec(&stored)?);

    let mut motion = Vec::with_capacity(ds.len() * MOTION_AXES * WEEK_MINUTES * 4);
    let mut coverage = Vec::with_capacity(ds.len() * WEEK_MINUTES);
    for p in &ds.participants {
        for v in &p.motion.values {
            motion.extend_from_slice(&v.to_le_bytes());
        }
        coverage.extend(p.motion.coverage.iter().map(|&c| c as u8));
    }
    files.insert("motion.bin".into(), motion);
    files.insert("coverage.bin".into(), coverage);
    write_archive(&files)
}

pub fn read_processed_snapshot(bytes: &[u8]) -> Result<Dataset> {
    let files = read_archive(bytes)?;
    check_manifest(&files, "processed")?;
    let schema = parse_schema(Path::new("schema.json"), take(&files, "schema.json")?)?;
    let normalization_stats: NormalizationStats =
        serde_json::from_slice(take(&files, "normalization_stats.json")?)?;
    let stored: Vec<StoredParticipant> = serde_json::from_slice(take(&files, "participants.json")?)?;
    let motion = take(&files, "motion.bin")?;
    let coverage = take(&files, "coverage.bin")?;
    let block = MOTION_AXES * WEEK_MINUTES;
    if motion.len() != stored.len() * block * 4 || coverage.len() != stored.len() * WEEK_MINUTES {
        return Err(Error::Artifact("motion block size does not match participant count".into()));
    }
    let participants = stored
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let bytes = &motion[i * block * 4..(i + 1) * block * 4];
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let coverage = coverage[i * WEEK_MINUTES..(i + 1) * WEEK_MINUTES]
                .iter()
                .map(|&c| c != 0)
                .collect();
            Participant {
                id: s.id,
                gender: s.gender,
                age: s.age,
                age_group: s.age_group,
                learning_mode: s.learning_mode,
                context: ContextPattern { values: s.context },
                motion: MotionPattern { values, coverage },
                labels: s.labels,
                imputed_mask: s.imputed_mask,
            }
        })
        .collect();
    let ds = Dataset {
        schema,
        participants,
        normalization_stats,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes `bytes` to `path`, refusing to clobber an existing file unless
/// `force` is set.
pub fn write_guarded(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Argument(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    read_file(path)
}

/// Paths of the raw layout inside a directory.
pub fn raw_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    (
        dir.join("context.csv"),
        dir.join("motion"),
        dir.join("labels.csv"),
        dir.join("schema.json"),
    )
}
