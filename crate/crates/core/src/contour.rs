//! Trailing-edge contours: ingestion, validation and arc-length preprocessing.
//!
//! A [`Contour`] is an ordered polyline traced along the trailing edge of a fin
//! or fluke, labelled with the individual, encounter and image it came from.
//! Contours are grouped into an [`EncounterDatabase`] keyed by
//! `(individual, encounter, image)`.
//!
//! Two interchange formats are supported, both UTF-8:
//!
//! * JSONL, one object per line:
//!   `{"individual": str, "encounter": str, "image": str, "points": [[x, y], ...]}`
//! * CSV with header `individual,encounter,image,point_index,x,y`; rows of one
//!   contour are grouped by their id triple and ordered by `point_index`.
//!
//! Point order is stored as traced. Nothing here canonicalizes orientation.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D point in image pixels.
pub type Point = [f64; 2];

/// Identifies one image of one encounter of one individual.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ImageKey {
    pub individual: String,
    pub encounter: String,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    individual: String,
    encounter: String,
    image: String,
    points: Vec<Point>,
}

impl Contour {
    /// Builds a validated contour. Consecutive duplicate points are dropped;
    /// fewer than two remaining points or any non-finite coordinate is an error.
    pub fn new(
        individual: impl Into<String>,
        encounter: impl Into<String>,
        image: impl Into<String>,
        points: Vec<Point>,
    ) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Degenerate(format!("non-finite coordinate {p:?}")));
        }
        let mut deduped: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            if deduped.last() != Some(&p) {
                deduped.push(p);
            }
        }
        if deduped.len() < 2 {
            return Err(Error::Degenerate(format!(
                "{} distinct point(s), need at least 2",
                deduped.len()
            )));
        }
        Ok(Self {
            individual: individual.into(),
            encounter: encounter.into(),
            image: image.into(),
            points: deduped,
        })
    }

    /// Same labels, new geometry.
    pub fn with_points(&self, points: Vec<Point>) -> Result<Self> {
        Self::new(
            self.individual.clone(),
            self.encounter.clone(),
            self.image.clone(),
            points,
        )
    }

    pub fn individual(&self) -> &str {
        &self.individual
    }

    pub fn encounter(&self) -> &str {
        &self.encounter
    }

    pub fn image(&self) -> &str {
        &self.image
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn key(&self) -> ImageKey {
        ImageKey {
            individual: self.individual.clone(),
            encounter: self.encounter.clone(),
            image: self.image.clone(),
        }
    }

    pub fn arc_length(&self) -> f64 {
        arc_length(&self.points)
    }
}

/// Total polyline length.
pub fn arc_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| dist(w[0], w[1])).sum()
}

#[inline]
pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Resamples a polyline to `n` points spaced uniformly by arc length.
///
/// Interpolation is linear along the original segments, and the first and
/// last points are reproduced exactly.
pub fn resample_points(points: &[Point], n: usize) -> Result<Vec<Point>> {
    if n < 2 {
        return Err(Error::Domain(format!("resample count {n} < 2")));
    }
    if points.len() < 2 {
        return Err(Error::Degenerate("fewer than 2 points".into()));
    }
    let mut cumulative = Vec::with_capacity(points.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in points.windows(2) {
        total += dist(w[0], w[1]);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::Degenerate("zero total arc length".into()));
    }

    let last = points.len() - 1;
    let mut out = Vec::with_capacity(n);
    out.push(points[0]);
    let mut seg = 0;
    for k in 1..n - 1 {
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 1 < last && cumulative[seg + 1] < target {
            seg += 1;
        }
        let (s0, s1) = (cumulative[seg], cumulative[seg + 1]);
        let t = if s1 > s0 { (target - s0) / (s1 - s0) } else { 0.0 };
        let (a, b) = (points[seg], points[seg + 1]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out.push(points[last]);
    Ok(out)
}

/// Arc-length resampling of a contour, keeping its labels.
pub fn resample_arclength(c: &Contour, n: usize) -> Result<Contour> {
    let points = resample_points(&c.points, n)?;
    Ok(Contour {
        individual: c.individual.clone(),
        encounter: c.encounter.clone(),
        image: c.image.clone(),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Vertical extent, used for dorsal fins.
    #[default]
    Height,
    /// Horizontal extent, used for flukes.
    Width,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "height" => Ok(Axis::Height),
            "width" => Ok(Axis::Width),
            other => Err(Error::Config(format!("unknown axis {other:?}"))),
        }
    }
}

/// Bounding-box extent of the contour along `axis`.
pub fn normalized_extent(c: &Contour, axis: Axis) -> Result<f64> {
    extent(&c.points, axis)
}

pub(crate) fn extent(points: &[Point], axis: Axis) -> Result<f64> {
    let k = match axis {
        Axis::Width => 0,
        Axis::Height => 1,
    };
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[k]), hi.max(p[k]))
        });
    let e = hi - lo;
    if e > 0.0 && e.is_finite() {
        Ok(e)
    } else {
        Err(Error::Degenerate(format!("zero extent along {axis:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown contour format {other:?}"))),
        }
    }
}

/// A record that was read but not admitted to the database.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub database: EncounterDatabase,
    pub rejected: Vec<Rejected>,
}

#[derive(Deserialize)]
struct JsonRecord {
    individual: String,
    encounter: String,
    image: String,
    points: Vec<Point>,
}

#[derive(Deserialize)]
struct CsvRow {
    individual: String,
    encounter: String,
    image: String,
    point_index: usize,
    x: f64,
    y: f64,
}

/// Parses a contour stream.
///
/// Records that decode but violate contour invariants are always rejected
/// with a diagnostic. Undecodable records abort with a line-numbered parse
/// error when `strict`, and are rejected otherwise. A repeated id triple is a
/// conflict error in both modes.
pub fn parse_contours<R: BufRead>(reader: R, format: Format, strict: bool) -> Result<Ingested> {
    match format {
        Format::Jsonl => parse_jsonl(reader, strict),
        Format::Csv => parse_csv(reader, strict),
    }
}

fn parse_jsonl<R: BufRead>(reader: R, strict: bool) -> Result<Ingested> {
    let mut out = Ingested::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) if strict => {
                return Err(Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })
            }
            Err(e) => {
                out.rejected.push(Rejected {
                    line: line_no,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match Contour::new(record.individual, record.encounter, record.image, record.points) {
            Ok(c) => out.database.insert(c)?,
            Err(e) => out.rejected.push(Rejected {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

type CsvGroup = (usize, Vec<(usize, Point)>);

fn parse_csv<R: BufRead>(reader: R, strict: bool) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    // triple -> (first line seen, rows)
    let mut groups: BTreeMap<(String, String, String), CsvGroup> = BTreeMap::new();
    let headers = rdr.headers().map_err(csv_io)?.clone();
    for record in rdr.records() {
        let parsed = record.and_then(|rec| {
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            rec.deserialize::<CsvRow>(Some(&headers)).map(|row| (line, row))
        });
        let (line, row) = match parsed {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                if strict {
                    return Err(Error::Parse {
                        line,
                        message: e.to_string(),
                    });
                }
                out.rejected.push(Rejected {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let entry = groups
            .entry((row.individual, row.encounter, row.image))
            .or_insert_with(|| (line, Vec::new()));
        entry.1.push((row.point_index, [row.x, row.y]));
    }
    for ((individual, encounter, image), (line, mut rows)) in groups {
        rows.sort_by_key(|r| r.0);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            out.rejected.push(Rejected {
                line,
                reason: "repeated point_index".into(),
            });
            continue;
        }
        let points = rows.into_iter().map(|r| r.1).collect();
        match Contour::new(individual, encounter, image, points) {
            Ok(c) => out.database.insert(c)?,
            Err(e) => out.rejected.push(Rejected {
                line,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

type Images = BTreeMap<String, Contour>;
type Encounters = BTreeMap<String, Images>;

/// Contours grouped individual -> encounter -> image, all in sorted id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncounterDatabase {
    individuals: BTreeMap<String, Encounters>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Summary {
    pub individuals: usize,
    pub encounters: usize,
    pub images: usize,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} individuals, {} encounters, {} images",
            self.individuals, self.encounters, self.images
        )
    }
}

impl EncounterDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, c: Contour) -> Result<()> {
        let images = self
            .individuals
            .entry(c.individual.clone())
            .or_default()
            .entry(c.encounter.clone())
            .or_default();
        match images.entry(c.image.clone()) {
            Entry::Occupied(_) => Err(Error::Conflict {
                individual: c.individual,
                encounter: c.encounter,
                image: c.image,
            }),
            Entry::Vacant(v) => {
                v.insert(c);
                Ok(())
            }
        }
    }

    pub fn from_contours(contours: impl IntoIterator<Item = Contour>) -> Result<Self> {
        let mut db = Self::new();
        for c in contours {
            db.insert(c)?;
        }
        Ok(db)
    }

    pub fn get(&self, individual: &str, encounter: &str, image: &str) -> Option<&Contour> {
        self.individuals.get(individual)?.get(encounter)?.get(image)
    }

    pub fn individuals(&self) -> impl Iterator<Item = &str> {
        self.individuals.keys().map(String::as_str)
    }

    pub fn contains_individual(&self, individual: &str) -> bool {
        self.individuals.contains_key(individual)
    }

    /// Encounter ids of one individual, sorted.
    pub fn encounters(&self, individual: &str) -> Vec<&str> {
        self.individuals
            .get(individual)
            .map(|e| e.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Images of one encounter, sorted by image id.
    pub fn encounter_images(&self, individual: &str, encounter: &str) -> Vec<&Contour> {
        self.individuals
            .get(individual)
            .and_then(|e| e.get(encounter))
            .map(|imgs| imgs.values().collect())
            .unwrap_or_default()
    }

    /// All images of one individual across encounters.
    pub fn individual_images(&self, individual: &str) -> Vec<&Contour> {
        self.individuals
            .get(individual)
            .map(|e| e.values().flat_map(|imgs| imgs.values()).collect())
            .unwrap_or_default()
    }

    pub fn contours(&self) -> impl Iterator<Item = &Contour> {
        self.individuals
            .values()
            .flat_map(|e| e.values())
            .flat_map(|imgs| imgs.values())
    }

    pub fn into_contours(self) -> impl Iterator<Item = Contour> {
        self.individuals
            .into_values()
            .flat_map(|e| e.into_values())
            .flat_map(|imgs| imgs.into_values())
    }

    pub fn summary(&self) -> Summary {
        Summary {
            individuals: self.individuals.len(),
            encounters: self.individuals.values().map(|e| e.len()).sum(),
            images: self.contours().count(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    /// Writes the database as JSONL in sorted id order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for c in self.contours() {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["individual", "encounter", "image", "point_index", "x", "y"])
            .map_err(csv_io)?;
        for c in self.contours() {
            for (i, p) in c.points.iter().enumerate() {
                wtr.write_record([
                    c.individual.as_str(),
                    c.encounter.as_str(),
                    c.image.as_str(),
                    &i.to_string(),
                    &p[0].to_string(),
                    &p[1].to_string(),
                ])
                .map_err(csv_io)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
