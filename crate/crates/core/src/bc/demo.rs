use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obs::{Observation, OBS_DIM, OBS_SCHEMA};
use crate::sim::{RoadMap, VehicleGeometry, VehicleLimits, VehiclePose};

pub const DEMO_FORMAT: &str = "evodrive-demo";
pub const DEMO_VERSION: u32 = 1;
/// Labels are offsets from the center of the lane nearest the ego at the
/// start of each slice.
pub const LABEL_FRAME: &str = "lane-center-at-slice-start";
/// `[t, observation…, x, y, φ, v]`.
pub const RECORD_WIDTH: usize = 1 + OBS_DIM + 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoHeader {
    pub format: String,
    pub version: u32,
    pub observation_schema: String,
    pub label_frame: String,
    pub dt: f64,
    pub road: RoadMap,
    pub geometry: VehicleGeometry,
    pub limits: VehicleLimits,
    /// Who produced the records, e.g. `scripted-expert` or `teleop`.
    pub source: String,
    pub seed: Option<u64>,
}

impl DemoHeader {
    pub fn new(dt: f64, road: RoadMap, geometry: VehicleGeometry, limits: VehicleLimits, source: &str) -> Self {
        Self {
            format: DEMO_FORMAT.to_string(),
            version: DEMO_VERSION,
            observation_schema: OBS_SCHEMA.to_string(),
            label_frame: LABEL_FRAME.to_string(),
            dt,
            road,
            geometry,
            limits,
            source: source.to_string(),
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemonstrationRecord {
    pub t: f64,
    pub observation: Vec<f64>,
    pub pose: VehiclePose,
}

impl DemonstrationRecord {
    pub fn new(t: f64, observation: &Observation, pose: VehiclePose) -> Self {
        Self {
            t,
            observation: observation.to_vec(),
            pose,
        }
    }

    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(RECORD_WIDTH);
        row.push(self.t);
        row.extend(&self.observation);
        row.extend([self.pose.x, self.pose.y, self.pose.phi, self.pose.v]);
        row
    }

    /// The pose is taken verbatim; no normalization is applied on read.
    pub fn from_row(row: &[f64]) -> std::result::Result<Self, String> {
        if row.len() != RECORD_WIDTH {
            return Err(format!("record has {} values, expected {RECORD_WIDTH}", row.len()));
        }
        let p = &row[1 + OBS_DIM..];
        Ok(Self {
            t: row[0],
            observation: row[1..1 + OBS_DIM].to_vec(),
            pose: VehiclePose {
                x: p[0],
                y: p[1],
                phi: p[2],
                v: p[3],
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoSession {
    pub header: DemoHeader,
    pub records: Vec<DemonstrationRecord>,
}

/// Line-by-line demonstration writer. Dropping it without [`finish`]
/// still leaves every appended record on disk once the buffer flushes.
///
/// [`finish`]: DemoWriter::finish
pub struct DemoWriter {
    out: BufWriter<File>,
    path: PathBuf,
    last_t: Option<f64>,
    count: usize,
}

impl DemoWriter {
    pub fn create(path: &Path, header: &DemoHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let line = serde_json::to_string(header).expect("header serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            last_t: None,
            count: 0,
        })
    }

    pub fn append(&mut self, rec: &DemonstrationRecord) -> Result<()> {
        if rec.observation.len() != OBS_DIM {
            return Err(Error::Precondition(format!(
                "observation has {} values, expected {OBS_DIM}",
                rec.observation.len()
            )));
        }
        if self.last_t.is_some_and(|t| rec.t <= t) {
            return Err(Error::Precondition(format!(
                "timestamp {} does not follow {}",
                rec.t,
                self.last_t.unwrap()
            )));
        }
        let line = serde_json::to_string(&rec.to_row()).expect("record serializes");
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.last_t = Some(rec.t);
        self.count += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Flush and return the number of records written.
    pub fn finish(mut self) -> Result<usize> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.count)
    }
}

pub fn write_demo(path: &Path, session: &DemoSession) -> Result<()> {
    let mut w = DemoWriter::create(path, &session.header)?;
    for r in &session.records {
        w.append(r)?;
    }
    w.finish().map(|_| ())
}

/// Read a demonstration file, rejecting other formats and observation schemas.
pub fn read_demo(path: &Path) -> Result<DemoSession> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::format(path, 1, "missing header line"))?
        .map_err(|e| Error::io(path, e))?;
    let header: DemoHeader =
        serde_json::from_str(&first).map_err(|e| Error::format(path, 1, format!("bad header: {e}")))?;
    if header.format != DEMO_FORMAT || header.version != DEMO_VERSION {
        return Err(Error::format(
            path,
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    if header.observation_schema != OBS_SCHEMA {
        return Err(Error::SchemaMismatch {
            found: header.observation_schema,
            expected: OBS_SCHEMA.to_string(),
        });
    }
    let mut records: Vec<DemonstrationRecord> = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = serde_json::from_str(&line).map_err(|e| Error::format(path, n, e.to_string()))?;
        let rec = DemonstrationRecord::from_row(&row).map_err(|m| Error::format(path, n, m))?;
        if records.last().is_some_and(|p| rec.t <= p.t) {
            return Err(Error::format(path, n, "timestamps must increase strictly"));
        }
        records.push(rec);
    }
    Ok(DemoSession { header, records })
}
