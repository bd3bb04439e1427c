//! HighD-schema ingestion and the canonical trajectory model.
//!
//! Raw recordings use image coordinates: x to the right, y downwards, and
//! bounding-box corners. Everything downstream works in a canonical frame per
//! roadway where x grows along the travel direction, y grows towards the
//! driver's left and lanes are numbered from the rightmost lane (1) leftwards.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrivingDirection {
    /// Upper roadway in the image, traffic moves towards decreasing raw x.
    Upper,
    /// Lower roadway in the image, traffic moves towards increasing raw x.
    Lower,
}

impl DrivingDirection {
    pub fn from_highd(code: i64) -> Option<Self> {
        match code {
            1 => Some(DrivingDirection::Upper),
            2 => Some(DrivingDirection::Lower),
            _ => None,
        }
    }

    pub fn highd_code(self) -> i64 {
        match self {
            DrivingDirection::Upper => 1,
            DrivingDirection::Lower => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateFrame {
    Raw,
    Canonical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub recording_id: u32,
    pub frame_rate: f64,
    pub upper_lane_markings: Vec<f64>,
    pub lower_lane_markings: Vec<f64>,
    /// m/s, `None` when the stretch has no limit.
    pub speed_limit: Option<f64>,
    pub has_merge_lane: bool,
}

impl RecordingMeta {
    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn raw_markings(&self, direction: DrivingDirection) -> &[f64] {
        match direction {
            DrivingDirection::Upper => &self.upper_lane_markings,
            DrivingDirection::Lower => &self.lower_lane_markings,
        }
    }

    /// Lane markings of one roadway expressed as canonical lateral positions, ascending.
    pub fn canonical_markings(&self, direction: DrivingDirection) -> Vec<f64> {
        let raw = self.raw_markings(direction);
        let mut out: Vec<f64> = match direction {
            DrivingDirection::Upper => raw.to_vec(),
            DrivingDirection::Lower => raw.iter().map(|m| -m).collect(),
        };
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn layout(&self, direction: DrivingDirection) -> Result<RoadLayout> {
        build_layout(&self.canonical_markings(direction))
    }

    fn validate(&self) -> Result<()> {
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::DataIntegrity(format!(
                "recording {}: frame rate must be positive, got {}",
                self.recording_id, self.frame_rate
            )));
        }
        for (name, m) in [
            ("upper", &self.upper_lane_markings),
            ("lower", &self.lower_lane_markings),
        ] {
            if m.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::DataIntegrity(format!(
                    "recording {}: {name} lane markings are not strictly increasing",
                    self.recording_id
                )));
            }
            if m.len() < 3 {
                return Err(Error::Geometry(format!(
                    "recording {}: {name} roadway has {} markings, need at least 3",
                    self.recording_id,
                    m.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub frame: i64,
    /// Vehicle center, longitudinal.
    pub x: f64,
    /// Vehicle center, lateral.
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub lane_id: i32,
    pub preceding_id: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u32,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub direction: DrivingDirection,
    pub num_lane_changes: u32,
    pub coordinates: CoordinateFrame,
    pub frames: Vec<TrackFrame>,
}

impl Track {
    pub fn first_frame(&self) -> i64 {
        self.frames.first().map_or(0, |f| f.frame)
    }

    pub fn last_frame(&self) -> i64 {
        self.frames.last().map_or(-1, |f| f.frame)
    }

    pub fn at(&self, frame: i64) -> Option<&TrackFrame> {
        let first = self.frames.first()?.frame;
        if frame < first {
            return None;
        }
        self.frames.get((frame - first) as usize)
    }

    /// Copy restricted to `[from, to]` (inclusive); `None` if there is no overlap.
    pub fn clipped(&self, from: i64, to: i64) -> Option<Track> {
        let frames: Vec<TrackFrame> = self
            .frames
            .iter()
            .filter(|f| f.frame >= from && f.frame <= to)
            .copied()
            .collect();
        if frames.is_empty() {
            return None;
        }
        Some(Track {
            frames,
            ..self.clone()
        })
    }

    pub fn check_invariants(&self) -> Result<()> {
        if !(self.vehicle_length > 0.0 && self.vehicle_width > 0.0) {
            return Err(Error::DataIntegrity(format!(
                "track {}: vehicle dimensions must be positive",
                self.track_id
            )));
        }
        if self.frames.windows(2).any(|w| w[1].frame != w[0].frame + 1) {
            return Err(Error::DataIntegrity(format!(
                "track {}: frames are not contiguous",
                self.track_id
            )));
        }
        if self
            .frames
            .iter()
            .any(|f| !(f.x.is_finite() && f.y.is_finite() && f.vx.is_finite() && f.vy.is_finite()))
        {
            return Err(Error::DataIntegrity(format!(
                "track {}: non-finite kinematics",
                self.track_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub meta: RecordingMeta,
    pub tracks: Vec<Track>,
}

impl Recording {
    /// Canonicalizes every track; the recording keeps its meta untouched.
    pub fn canonical(&self) -> Result<Recording> {
        let tracks = self
            .tracks
            .iter()
            .map(|t| canonicalize(t, &self.meta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Recording {
            meta: self.meta.clone(),
            tracks,
        })
    }

    pub fn track(&self, id: u32) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == id)
    }
}

/// Lane geometry of one roadway in canonical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadLayout {
    pub lane_centers: Vec<f64>,
    /// Lane markings, ascending; the outermost two are the road edges.
    pub lane_boundaries: Vec<f64>,
    pub road_boundary_low: f64,
    pub road_boundary_high: f64,
    pub lane_width: f64,
}

impl RoadLayout {
    pub fn num_lanes(&self) -> usize {
        self.lane_centers.len()
    }

    pub fn road_boundaries(&self) -> [f64; 2] {
        [self.road_boundary_low, self.road_boundary_high]
    }

    /// Canonical lane number (rightmost = 1) of a lateral position, `None`
    /// outside the outermost markings.
    pub fn lane_of(&self, y: f64) -> Option<u32> {
        let m = &self.lane_boundaries;
        if y < m[0] || y > m[m.len() - 1] {
            return None;
        }
        let interior = m[1..m.len() - 1].iter().filter(|&&b| y >= b).count();
        Some(interior as u32 + 1)
    }

    /// Number of interior (divider) markings strictly below `y`'s side; changes
    /// exactly when a vehicle center crosses a divider.
    pub fn divider_side(&self, y: f64) -> usize {
        let m = &self.lane_boundaries;
        m[1..m.len() - 1].iter().filter(|&&b| y >= b).count()
    }

    pub fn is_on_road(&self, y: f64) -> bool {
        y >= self.road_boundary_low && y <= self.road_boundary_high
    }
}

/// Lane centers, markings and road edges from one roadway's markings.
pub fn build_layout(markings: &[f64]) -> Result<RoadLayout> {
    if markings.len() < 3 {
        return Err(Error::Geometry(format!(
            "{} lane markings given, at least 3 are needed for two lanes",
            markings.len()
        )));
    }
    if markings.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Geometry(
            "lane markings must be strictly increasing".into(),
        ));
    }
    let mut gaps: Vec<f64> = markings.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let lane_width = if gaps.len() % 2 == 1 {
        gaps[mid]
    } else {
        0.5 * (gaps[mid - 1] + gaps[mid])
    };
    let lane_centers = markings.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(RoadLayout {
        lane_centers,
        lane_boundaries: markings.to_vec(),
        road_boundary_low: markings[0] - lane_width / 2.0,
        road_boundary_high: markings[markings.len() - 1] + lane_width / 2.0,
        lane_width,
    })
}

/// Raw HighD lane ids of one roadway, ordered by increasing raw y.
///
/// HighD numbers the gaps between consecutive markings of the concatenated
/// upper+lower marking list starting at 2, so lane `k` lies between marking
/// `k-1` and `k` (1-based).
fn raw_lane_ids(meta: &RecordingMeta, direction: DrivingDirection) -> Vec<i32> {
    let nu = meta.upper_lane_markings.len() as i32;
    let nl = meta.lower_lane_markings.len() as i32;
    match direction {
        DrivingDirection::Upper => (2..=nu).collect(),
        DrivingDirection::Lower => (nu + 2..=nu + nl).collect(),
    }
}

/// Expresses a raw track in the canonical frame of its roadway. Idempotent.
pub fn canonicalize(track: &Track, meta: &RecordingMeta) -> Result<Track> {
    if track.coordinates == CoordinateFrame::Canonical {
        return Ok(track.clone());
    }
    let raw_ids = raw_lane_ids(meta, track.direction);
    let num_lanes = raw_ids.len() as i32;
    let layout = meta.layout(track.direction)?;
    let to_canonical_lane = |raw: i32| -> Option<i32> {
        let pos = raw_ids.iter().position(|&r| r == raw)? as i32;
        Some(match track.direction {
            // Smallest raw y is the rightmost lane when driving towards -x.
            DrivingDirection::Upper => pos + 1,
            DrivingDirection::Lower => num_lanes - pos,
        })
    };
    if !track
        .frames
        .iter()
        .any(|f| to_canonical_lane(f.lane_id).is_some())
    {
        return Err(Error::DataIntegrity(format!(
            "track {}: lane ids never match the {:?} roadway (expected one of {:?})",
            track.track_id, track.direction, raw_ids
        )));
    }
    let frames = track
        .frames
        .iter()
        .map(|f| {
            let (x, y, vx, vy, ax, ay) = match track.direction {
                DrivingDirection::Upper => (-f.x, f.y, -f.vx, f.vy, -f.ax, f.ay),
                DrivingDirection::Lower => (f.x, -f.y, f.vx, -f.vy, f.ax, -f.ay),
            };
            let lane_id = to_canonical_lane(f.lane_id)
                .or_else(|| layout.lane_of(y).map(|l| l as i32))
                .unwrap_or(0);
            TrackFrame {
                frame: f.frame,
                x,
                y,
                vx,
                vy,
                ax,
                ay,
                lane_id,
                preceding_id: f.preceding_id,
            }
        })
        .collect();
    Ok(Track {
        frames,
        coordinates: CoordinateFrame::Canonical,
        ..track.clone()
    })
}

/// Inverse of [`canonicalize`] for a canonical track; used to emit raw files.
pub fn decanonicalize(track: &Track, meta: &RecordingMeta) -> Result<Track> {
    if track.coordinates == CoordinateFrame::Raw {
        return Ok(track.clone());
    }
    let raw_ids = raw_lane_ids(meta, track.direction);
    let num_lanes = raw_ids.len() as i32;
    let frames = track
        .frames
        .iter()
        .map(|f| {
            let (x, y, vx, vy, ax, ay) = match track.direction {
                DrivingDirection::Upper => (-f.x, f.y, -f.vx, f.vy, -f.ax, f.ay),
                DrivingDirection::Lower => (f.x, -f.y, f.vx, -f.vy, f.ax, -f.ay),
            };
            let lane_id = if f.lane_id >= 1 && f.lane_id <= num_lanes {
                match track.direction {
                    DrivingDirection::Upper => raw_ids[(f.lane_id - 1) as usize],
                    DrivingDirection::Lower => raw_ids[(num_lanes - f.lane_id) as usize],
                }
            } else {
                0
            };
            TrackFrame {
                frame: f.frame,
                x,
                y,
                vx,
                vy,
                ax,
                ay,
                lane_id,
                preceding_id: f.preceding_id,
            }
        })
        .collect();
    Ok(Track {
        frames,
        coordinates: CoordinateFrame::Raw,
        ..track.clone()
    })
}

/// Column names of the three CSV files. Defaults follow HighD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub frame: String,
    pub id: String,
    pub x: String,
    pub y: String,
    pub width: String,
    pub height: String,
    pub x_velocity: String,
    pub y_velocity: String,
    pub x_acceleration: String,
    pub y_acceleration: String,
    pub lane_id: String,
    pub preceding_id: String,
    pub driving_direction: String,
    pub num_lane_changes: String,
    pub frame_rate: String,
    pub speed_limit: String,
    pub upper_lane_markings: String,
    pub lower_lane_markings: String,
    /// Optional boolean column; absent means "no merge lane".
    pub merge_lane: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            frame: "frame".into(),
            id: "id".into(),
            x: "x".into(),
            y: "y".into(),
            width: "width".into(),
            height: "height".into(),
            x_velocity: "xVelocity".into(),
            y_velocity: "yVelocity".into(),
            x_acceleration: "xAcceleration".into(),
            y_acceleration: "yAcceleration".into(),
            lane_id: "laneId".into(),
            preceding_id: "precedingId".into(),
            driving_direction: "drivingDirection".into(),
            num_lane_changes: "numLaneChanges".into(),
            frame_rate: "frameRate".into(),
            speed_limit: "speedLimit".into(),
            upper_lane_markings: "upperLaneMarkings".into(),
            lower_lane_markings: "lowerLaneMarkings".into(),
            merge_lane: "hasMergeLane".into(),
        }
    }
}

/// Paths of the three files that make up one recording.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RecordingFiles {
    pub recording_meta: PathBuf,
    pub tracks_meta: PathBuf,
    pub tracks: PathBuf,
}

impl RecordingFiles {
    pub fn in_dir(dir: &Path, recording_id: u32) -> Self {
        Self {
            recording_meta: dir.join(format!("{recording_id:02}_recordingMeta.csv")),
            tracks_meta: dir.join(format!("{recording_id:02}_tracksMeta.csv")),
            tracks: dir.join(format!("{recording_id:02}_tracks.csv")),
        }
    }
}

/// Recording ids with a complete file triple in `dir`, ascending.
pub fn discover_recordings(dir: &Path) -> Result<Vec<u32>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(prefix) = name.strip_suffix("_recordingMeta.csv") {
            if let Ok(id) = prefix.parse::<u32>() {
                let files = RecordingFiles::in_dir(dir, id);
                if files.tracks_meta.exists() && files.tracks.exists() {
                    ids.push(id);
                }
            }
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| self.schema_error(name, None))
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn schema_error(&self, column: &str, line: Option<u64>) -> Error {
        Error::Schema {
            file: self.path.clone(),
            column: column.to_owned(),
            line,
        }
    }

    fn parse<T: std::str::FromStr>(
        &self,
        rec: &csv::StringRecord,
        line: u64,
        idx: usize,
        name: &str,
    ) -> Result<T> {
        rec.get(idx)
            .and_then(|s| s.parse::<T>().ok())
            .ok_or_else(|| self.schema_error(name, Some(line)))
    }
}

fn parse_markings(field: &str) -> Option<Vec<f64>> {
    field
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().ok())
        .collect()
}

fn parse_bool(field: &str) -> Option<bool> {
    match field.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

struct TrackMetaRow {
    direction: DrivingDirection,
    num_lane_changes: u32,
    length: f64,
    width: f64,
}

/// Loads one recording from its three CSV files, converting bounding-box
/// corners to vehicle centers.
pub fn load_recording(files: &RecordingFiles, columns: &ColumnMap) -> Result<Recording> {
    let meta = load_recording_meta(&files.recording_meta, columns)?;

    let tm = Table::read(&files.tracks_meta)?;
    let c_id = tm.column(&columns.id)?;
    let c_dir = tm.column(&columns.driving_direction)?;
    let c_nlc = tm.column(&columns.num_lane_changes)?;
    let c_w = tm.column(&columns.width)?;
    let c_h = tm.column(&columns.height)?;
    let mut track_meta = BTreeMap::new();
    for (line, rec) in &tm.rows {
        let id: u32 = tm.parse(rec, *line, c_id, &columns.id)?;
        let code: i64 = tm.parse(rec, *line, c_dir, &columns.driving_direction)?;
        let direction = DrivingDirection::from_highd(code)
            .ok_or_else(|| tm.schema_error(&columns.driving_direction, Some(*line)))?;
        let num_lane_changes = tm.parse(rec, *line, c_nlc, &columns.num_lane_changes)?;
        let length = tm.parse(rec, *line, c_w, &columns.width)?;
        let width = tm.parse(rec, *line, c_h, &columns.height)?;
        track_meta.insert(
            id,
            TrackMetaRow {
                direction,
                num_lane_changes,
                length,
                width,
            },
        );
    }

    let tr = Table::read(&files.tracks)?;
    let c_frame = tr.column(&columns.frame)?;
    let c_id = tr.column(&columns.id)?;
    let c_x = tr.column(&columns.x)?;
    let c_y = tr.column(&columns.y)?;
    let c_w = tr.column(&columns.width)?;
    let c_h = tr.column(&columns.height)?;
    let c_vx = tr.column(&columns.x_velocity)?;
    let c_vy = tr.column(&columns.y_velocity)?;
    let c_ax = tr.column(&columns.x_acceleration)?;
    let c_ay = tr.column(&columns.y_acceleration)?;
    let c_lane = tr.column(&columns.lane_id)?;
    let c_prec = tr.column(&columns.preceding_id)?;

    let mut frames_by_track: BTreeMap<u32, Vec<TrackFrame>> = BTreeMap::new();
    for (line, rec) in &tr.rows {
        let line = *line;
        let id: u32 = tr.parse(rec, line, c_id, &columns.id)?;
        let bx: f64 = tr.parse(rec, line, c_x, &columns.x)?;
        let by: f64 = tr.parse(rec, line, c_y, &columns.y)?;
        let bw: f64 = tr.parse(rec, line, c_w, &columns.width)?;
        let bh: f64 = tr.parse(rec, line, c_h, &columns.height)?;
        let preceding: i64 = tr.parse(rec, line, c_prec, &columns.preceding_id)?;
        frames_by_track.entry(id).or_default().push(TrackFrame {
            frame: tr.parse(rec, line, c_frame, &columns.frame)?,
            x: bx + bw / 2.0,
            y: by + bh / 2.0,
            vx: tr.parse(rec, line, c_vx, &columns.x_velocity)?,
            vy: tr.parse(rec, line, c_vy, &columns.y_velocity)?,
            ax: tr.parse(rec, line, c_ax, &columns.x_acceleration)?,
            ay: tr.parse(rec, line, c_ay, &columns.y_acceleration)?,
            lane_id: tr.parse(rec, line, c_lane, &columns.lane_id)?,
            preceding_id: (preceding > 0).then_some(preceding as u32),
        });
    }

    let mut tracks = Vec::with_capacity(frames_by_track.len());
    for (id, mut frames) in frames_by_track {
        let tm_row = track_meta.get(&id).ok_or_else(|| {
            Error::DataIntegrity(format!("track {id} has frames but no tracksMeta row"))
        })?;
        frames.sort_by_key(|f| f.frame);
        let track = Track {
            track_id: id,
            vehicle_length: tm_row.length,
            vehicle_width: tm_row.width,
            direction: tm_row.direction,
            num_lane_changes: tm_row.num_lane_changes,
            coordinates: CoordinateFrame::Raw,
            frames,
        };
        track.check_invariants()?;
        tracks.push(track);
    }
    Ok(Recording { meta, tracks })
}

fn load_recording_meta(path: &Path, columns: &ColumnMap) -> Result<RecordingMeta> {
    let t = Table::read(path)?;
    let c_id = t.column(&columns.id)?;
    let c_fr = t.column(&columns.frame_rate)?;
    let c_sl = t.column(&columns.speed_limit)?;
    let c_up = t.column(&columns.upper_lane_markings)?;
    let c_lo = t.column(&columns.lower_lane_markings)?;
    let c_merge = t.optional_column(&columns.merge_lane);
    let (line, rec) = t
        .rows
        .first()
        .ok_or_else(|| t.schema_error(&columns.id, None))?;
    let line = *line;
    let speed_limit: f64 = t.parse(rec, line, c_sl, &columns.speed_limit)?;
    let markings = |idx: usize, name: &str| {
        rec.get(idx)
            .and_then(parse_markings)
            .ok_or_else(|| t.schema_error(name, Some(line)))
    };
    let has_merge_lane = match c_merge {
        Some(idx) => rec
            .get(idx)
            .and_then(parse_bool)
            .ok_or_else(|| t.schema_error(&columns.merge_lane, Some(line)))?,
        None => false,
    };
    let meta = RecordingMeta {
        recording_id: t.parse(rec, line, c_id, &columns.id)?,
        frame_rate: t.parse(rec, line, c_fr, &columns.frame_rate)?,
        upper_lane_markings: markings(c_up, &columns.upper_lane_markings)?,
        lower_lane_markings: markings(c_lo, &columns.lower_lane_markings)?,
        speed_limit: (speed_limit >= 0.0).then_some(speed_limit),
        has_merge_lane,
    };
    meta.validate()?;
    Ok(meta)
}

fn join_markings(m: &[f64]) -> String {
    m.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes a recording as the three HighD-schema CSV files (default column
/// names). Canonical tracks are converted back to raw image coordinates.
pub fn write_recording(recording: &Recording, dir: &Path) -> Result<RecordingFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = &recording.meta;
    let files = RecordingFiles::in_dir(dir, meta.recording_id);

    let mut w = csv::Writer::from_path(&files.recording_meta)?;
    w.write_record([
        "id",
        "frameRate",
        "speedLimit",
        "upperLaneMarkings",
        "lowerLaneMarkings",
        "hasMergeLane",
    ])?;
    w.write_record([
        meta.recording_id.to_string(),
        meta.frame_rate.to_string(),
        meta.speed_limit.unwrap_or(-1.0).to_string(),
        join_markings(&meta.upper_lane_markings),
        join_markings(&meta.lower_lane_markings),
        u8::from(meta.has_merge_lane).to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(&files.recording_meta, e))?;

    let mut tracks: Vec<Track> = recording
        .tracks
        .iter()
        .map(|t| decanonicalize(t, meta))
        .collect::<Result<_>>()?;
    tracks.sort_by_key(|t| t.track_id);

    let mut w = csv::Writer::from_path(&files.tracks_meta)?;
    w.write_record([
        "id",
        "width",
        "height",
        "numFrames",
        "drivingDirection",
        "numLaneChanges",
    ])?;
    for t in &tracks {
        w.write_record([
            t.track_id.to_string(),
            t.vehicle_length.to_string(),
            t.vehicle_width.to_string(),
            t.frames.len().to_string(),
            t.direction.highd_code().to_string(),
            t.num_lane_changes.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&files.tracks_meta, e))?;

    let file = File::create(&files.tracks).map_err(|e| Error::io(&files.tracks, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(&files.tracks, e);
    writeln!(
        out,
        "frame,id,x,y,width,height,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId,precedingId"
    )
    .map_err(io_err)?;
    for t in &tracks {
        for f in &t.frames {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                f.frame,
                t.track_id,
                f.x - t.vehicle_length / 2.0,
                f.y - t.vehicle_width / 2.0,
                t.vehicle_length,
                t.vehicle_width,
                f.vx,
                f.vy,
                f.ax,
                f.ay,
                f.lane_id,
                f.preceding_id.unwrap_or(0)
            )
            .map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn layout_from_even_markings() {
        let l = build_layout(&[0.0, 4.0, 8.0]).unwrap();
        assert_eq!(l.lane_centers, vec![2.0, 6.0]);
        assert_eq!(l.road_boundaries(), [-2.0, 10.0]);
        assert_eq!(l.lane_width, 4.0);
    }

    #[test]
    fn layout_from_uneven_markings() {
        let l = build_layout(&[0.0, 3.9, 7.8]).unwrap();
        assert_abs_diff_eq!(l.lane_width, 3.9, epsilon = 1e-12);
        assert_abs_diff_eq!(l.road_boundary_low, -1.95, epsilon = 1e-12);
        assert_abs_diff_eq!(l.road_boundary_high, 9.75, epsilon = 1e-12);
    }

    #[test]
    fn layout_needs_two_lanes() {
        assert!(matches!(build_layout(&[0.0, 4.0]), Err(Error::Geometry(_))));
    }

    #[test]
    fn lane_lookup() {
        let l = build_layout(&[0.0, 4.0, 8.0, 12.0]).unwrap();
        assert_eq!(l.lane_of(1.0), Some(1));
        assert_eq!(l.lane_of(4.0), Some(2));
        assert_eq!(l.lane_of(11.0), Some(3));
        assert_eq!(l.lane_of(-0.5), None);
        assert_eq!(l.divider_side(-0.5), 0);
        assert_eq!(l.divider_side(12.5), 2);
    }

    fn meta() -> RecordingMeta {
        RecordingMeta {
            recording_id: 1,
            frame_rate: 25.0,
            upper_lane_markings: vec![8.0, 12.0, 16.0],
            lower_lane_markings: vec![20.0, 24.0, 28.0],
            speed_limit: None,
            has_merge_lane: false,
        }
    }

    fn raw_track(direction: DrivingDirection, lane_id: i32, vx: f64) -> Track {
        Track {
            track_id: 7,
            vehicle_length: 4.0,
            vehicle_width: 2.0,
            direction,
            num_lane_changes: 0,
            coordinates: CoordinateFrame::Raw,
            frames: (0..3)
                .map(|i| TrackFrame {
                    frame: i,
                    x: 100.0 + vx * 0.04 * i as f64,
                    y: 10.0,
                    vx,
                    vy: 0.1,
                    ax: 0.0,
                    ay: 0.0,
                    lane_id,
                    preceding_id: None,
                })
                .collect(),
        }
    }

    #[test]
    fn upper_roadway_flips_longitudinal_axis() {
        let t = canonicalize(&raw_track(DrivingDirection::Upper, 2, -30.0), &meta()).unwrap();
        assert!(t.frames.iter().all(|f| f.vx > 0.0));
        // raw lane 2 is the smallest-y upper lane: rightmost for traffic towards -x
        assert!(t.frames.iter().all(|f| f.lane_id == 1));
        assert_eq!(t.frames[0].y, 10.0);
    }

    #[test]
    fn lower_roadway_keeps_x_and_negates_y() {
        let raw = raw_track(DrivingDirection::Lower, 6, 30.0);
        let t = canonicalize(&raw, &meta()).unwrap();
        for (a, b) in raw.frames.iter().zip(&t.frames) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.vx, b.vx);
            assert_eq!(-a.y, b.y);
        }
        // raw lane 6 is the largest-y lower lane: rightmost for traffic towards +x
        assert!(t.frames.iter().all(|f| f.lane_id == 1));
    }

    #[test]
    fn canonicalize_is_idempotent_and_invertible() {
        let raw = raw_track(DrivingDirection::Upper, 3, -25.0);
        let once = canonicalize(&raw, &meta()).unwrap();
        let twice = canonicalize(&once, &meta()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(decanonicalize(&once, &meta()).unwrap(), raw);
    }

    #[test]
    fn foreign_lane_ids_are_rejected() {
        let raw = raw_track(DrivingDirection::Upper, 6, -25.0);
        assert!(matches!(
            canonicalize(&raw, &meta()),
            Err(Error::DataIntegrity(_))
        ));
    }

    #[test]
    fn canonical_markings_are_ascending() {
        let m = meta();
        assert_eq!(
            m.canonical_markings(DrivingDirection::Lower),
            vec![-28.0, -24.0, -20.0]
        );
        let l = m.layout(DrivingDirection::Lower).unwrap();
        assert_eq!(l.lane_centers, vec![-26.0, -22.0]);
    }
}
