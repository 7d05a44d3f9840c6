//! File formats: lane-map JSON, INTERACTION-style track CSV, scene and
//! graph JSON sets, embeddings CSV.
//!
//! CSV artifacts written by the pipeline start with a `# config_hash=<hex>`
//! comment line; readers skip `#` lines.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SceneGraph;
use crate::scene::{wrap_angle, LaneMap, ObjectClass, SceneSet, TrafficParticipant, TrafficScene, Vec2};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    id: String,
    lanes: Vec<LaneRecord>,
    #[serde(default)]
    relations: Vec<crate::scene::LaneRelation>,
}

#[derive(Serialize, Deserialize)]
struct LaneRecord {
    id: String,
    width: f64,
    centerline: Vec<[f64; 2]>,
}

/// Reads a lane map; the map id defaults to the file stem.
pub fn read_map(path: &Path) -> Result<LaneMap> {
    let file: MapFile = read_json(path)?;
    let id = if file.id.is_empty() {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    } else {
        file.id
    };
    let lanes = file
        .lanes
        .into_iter()
        .map(|l| crate::scene::Lane::new(l.id, l.width, l.centerline.iter().map(|p| Vec2::new(p[0], p[1])).collect()))
        .collect::<Result<Vec<_>>>()?;
    LaneMap::new(id, lanes, file.relations)
}

pub fn write_map(path: &Path, map: &LaneMap) -> Result<()> {
    let file = MapFile {
        id: map.id.clone(),
        lanes: map
            .lanes
            .iter()
            .map(|l| LaneRecord {
                id: l.id.clone(),
                width: l.width,
                centerline: l.centerline.iter().map(|p| [p.x, p.y]).collect(),
            })
            .collect(),
        relations: map.relations.clone(),
    };
    write_json(path, &file)
}

/// One row of a track file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub track_id: String,
    pub frame_id: u64,
    pub timestamp_ms: u64,
    pub agent_type: String,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    /// Missing for some agent types in INTERACTION; heading then falls back
    /// to the velocity direction.
    pub psi_rad: Option<f64>,
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRow>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(BufReader::new(f));
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<TrackRow>().enumerate() {
        let row = rec.map_err(|e| Error::Invalid(format!("{}: record {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_tracks(path: &Path, rows: &[TrackRow]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Snapshots frames into scenes: frames are kept when their offset from the
/// first frame is a multiple of `stride`. Speeds become velocity norms.
pub fn tracks_to_scenes(rows: &[TrackRow], map_id: &str, location: &str, stride: u64) -> Result<Vec<TrafficScene>> {
    let stride = stride.max(1);
    let mut frames: BTreeMap<u64, Vec<(usize, &TrackRow)>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        frames.entry(r.frame_id).or_default().push((i, r));
    }
    let Some(&first) = frames.keys().next() else {
        return Ok(Vec::new());
    };
    let mut scenes = Vec::new();
    for (frame, members) in frames {
        // every record is checked, also on frames the stride drops
        let mut participants = Vec::with_capacity(members.len());
        for (i, r) in members {
            let record = |msg: String| Error::Invalid(format!("track record {} (track {}, frame {frame}): {msg}", i + 1, r.track_id));
            let class = ObjectClass::parse(&r.agent_type).ok_or_else(|| record(format!("unknown agent type `{}`", r.agent_type)))?;
            let heading = r.psi_rad.unwrap_or_else(|| r.vy.atan2(r.vx));
            let p = TrafficParticipant::new(r.track_id.clone(), Vec2::new(r.x, r.y), r.vx.hypot(r.vy), wrap_angle(heading), class)
                .map_err(|e| record(e.to_string()))?;
            participants.push(p);
        }
        if (frame - first) % stride != 0 {
            continue;
        }
        let scene = TrafficScene {
            scene_id: format!("{location}-f{frame}"),
            location_label: location.to_string(),
            map_ref: map_id.to_string(),
            participants,
        };
        scene.validate()?;
        scenes.push(scene);
    }
    Ok(scenes)
}

/// Inverse of [`tracks_to_scenes`] with stride 1: scene `k` becomes frame
/// `k`, 100 ms apart.
pub fn scenes_to_tracks(scenes: &[TrafficScene]) -> Vec<TrackRow> {
    let mut rows = Vec::new();
    for (k, s) in scenes.iter().enumerate() {
        for p in &s.participants {
            let (sin, cos) = p.heading.sin_cos();
            rows.push(TrackRow {
                track_id: p.id.clone(),
                frame_id: k as u64,
                timestamp_ms: k as u64 * 100,
                agent_type: p.class.as_str().to_string(),
                x: p.position.x,
                y: p.position.y,
                vx: p.speed * cos,
                vy: p.speed * sin,
                psi_rad: Some(p.heading),
            });
        }
    }
    rows
}

pub fn read_scene_set(path: &Path) -> Result<SceneSet> {
    let mut set: SceneSet = read_json(path)?;
    set.finalize()?;
    Ok(set)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphSet {
    #[serde(default)]
    pub config_hash: String,
    pub graphs: Vec<SceneGraph>,
}

/// One embedding row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub scene_id: String,
    pub location_label: String,
    pub embedding: Vec<f64>,
}

fn write_hash_line(w: &mut impl Write, hash: &str) -> std::io::Result<()> {
    if hash.is_empty() {
        Ok(())
    } else {
        writeln!(w, "# config_hash={hash}")
    }
}

/// Reads the `# config_hash=` line of a pipeline CSV, if present.
pub fn csv_config_hash(path: &Path) -> Result<Option<String>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    Ok(first.trim().strip_prefix("# config_hash=").map(str::to_string))
}

/// `scene_id,location_label,e0..e{n-1}`
pub fn write_embeddings(path: &Path, hash: &str, rows: &[EmbeddingRecord]) -> Result<()> {
    let width = rows.first().map_or(0, |r| r.embedding.len());
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = BufWriter::new(f);
    write_hash_line(&mut buf, hash).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(buf);
    let mut header = vec!["scene_id".to_string(), "location_label".to_string()];
    header.extend((0..width).map(|i| format!("e{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.scene_id.clone(), r.location_label.clone()];
        rec.extend(r.embedding.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(BufReader::new(f));
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 3 {
            return Err(Error::Invalid(format!("{}: row {} has no embedding columns", path.display(), i + 1)));
        }
        let embedding = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Invalid(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        out.push(EmbeddingRecord {
            scene_id: rec[0].to_string(),
            location_label: rec[1].to_string(),
            embedding,
        });
    }
    Ok(out)
}

/// Writes plain CSV rows after the hash comment line.
pub fn write_csv_rows(path: &Path, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = BufWriter::new(f);
    write_hash_line(&mut buf, hash).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
