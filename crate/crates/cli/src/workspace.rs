//! Workspace layout and the content-addressed artifact cache.
//!
//! ```text
//! <root>/db/contours.jsonl
//! <root>/artifacts/<hash>/{curvature.json, curvature.bin}
//! <root>/artifacts/<hash>/{index.json, index.bin}
//! <root>/reports/
//! ```
//!
//! A manifest is written after its payload, so a directory with a manifest
//! is complete.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use finprint::contour::{parse_contours, Format};
use finprint::descriptors::{extract_descriptors, extract_keypoints};
use finprint::evaluation::config_hash;
use finprint::lnbnn::build_index;
use finprint::{
    CurvatureMatrix, DescriptorSet, EncounterDatabase, FeatureConfig, Features, ImageKey, IndexConfig, NnIndex,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub struct Workspace {
    root: PathBuf,
}

/// The stored database and a digest of its serialized form.
pub struct Database {
    pub contours: EncounterDatabase,
    pub digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurvatureManifest {
    config_hash: String,
    database: String,
    features: FeatureConfig,
    images: Vec<ImageKey>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexManifest {
    pub config_hash: String,
    pub curvature: String,
    pub keypoints: usize,
    pub dim: usize,
    pub index: IndexConfig,
    pub images: usize,
    pub descriptors: usize,
    pub indexable: usize,
}

pub struct Cached<T> {
    pub value: T,
    pub hash: String,
    pub hit: bool,
}

fn data(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| data(path, e))?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| data(path, e))?;
    w.write_all(b"\n").map_err(|e| data(path, e))?;
    w.flush().map_err(|e| data(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let r = BufReader::new(File::open(path).map_err(|e| data(path, e))?);
    serde_json::from_reader(r).map_err(|e| data(path, e))
}

/// Reads a contour file, reporting rejected records on stderr.
pub fn read_contours(path: &Path, format: Format, strict: bool) -> CliResult<(EncounterDatabase, usize)> {
    let file = File::open(path).map_err(|e| data(path, e))?;
    let ingested = parse_contours(BufReader::new(file), format, strict).map_err(|e| data(path, e))?;
    for r in &ingested.rejected {
        eprintln!("{}:{}: rejected: {}", path.display(), r.line, r.reason);
    }
    Ok((ingested.database, ingested.rejected.len()))
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn dir(&self, name: &str) -> CliResult<PathBuf> {
        let d = self.root.join(name);
        fs::create_dir_all(&d).map_err(|e| data(&d, e))?;
        Ok(d)
    }

    pub fn database_path(&self) -> PathBuf {
        self.root.join("db").join("contours.jsonl")
    }

    pub fn reports(&self) -> CliResult<PathBuf> {
        self.dir("reports")
    }

    fn artifact(&self, hash: &str) -> CliResult<PathBuf> {
        self.dir(&format!("artifacts/{hash}"))
    }

    pub fn has_database(&self) -> bool {
        self.database_path().is_file()
    }

    pub fn save_database(&self, db: &EncounterDatabase) -> CliResult<()> {
        self.dir("db")?;
        let path = self.database_path();
        let mut w = BufWriter::new(File::create(&path).map_err(|e| data(&path, e))?);
        db.write_jsonl(&mut w)?;
        w.flush().map_err(|e| data(&path, e))
    }

    pub fn load_database(&self) -> CliResult<Database> {
        let path = self.database_path();
        if !path.is_file() {
            return Err(CliError::Data(format!(
                "no database at {}; run `finprint ingest` first",
                path.display()
            )));
        }
        let bytes = fs::read(&path).map_err(|e| data(&path, e))?;
        let digest = Sha256::digest(&bytes);
        let digest: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        let contours = parse_contours(bytes.as_slice(), Format::Jsonl, true)
            .map_err(|e| data(&path, e))?
            .database;
        Ok(Database { contours, digest })
    }

    /// Curvature for every database image, computed once per feature
    /// configuration and database content.
    pub fn curvature(&self, db: &Database, cfg: &FeatureConfig) -> CliResult<Cached<Features>> {
        let hash = config_hash(&("curvature", cfg, &db.digest))?;
        let dir = self.artifact(&hash)?;
        let (manifest, payload) = (dir.join("curvature.json"), dir.join("curvature.bin"));
        if manifest.is_file() {
            let m: CurvatureManifest = read_json(&manifest)?;
            let mut r = BufReader::new(File::open(&payload).map_err(|e| data(&payload, e))?);
            let curvature = m
                .images
                .into_iter()
                .map(|k| Ok((k, CurvatureMatrix::read_binary(&mut r).map_err(|e| data(&payload, e))?)))
                .collect::<CliResult<_>>()?;
            return Ok(Cached {
                value: Features { curvature },
                hash,
                hit: true,
            });
        }
        let features = Features::compute(&db.contours, cfg)?;
        let mut w = BufWriter::new(File::create(&payload).map_err(|e| data(&payload, e))?);
        for m in features.curvature.values() {
            m.write_binary(&mut w)?;
        }
        w.flush().map_err(|e| data(&payload, e))?;
        write_json(
            &manifest,
            &CurvatureManifest {
                config_hash: hash.clone(),
                database: db.digest.clone(),
                features: cfg.clone(),
                images: features.curvature.keys().cloned().collect(),
            },
        )?;
        Ok(Cached {
            value: features,
            hash,
            hit: false,
        })
    }

    /// Descriptor index over every database image.
    pub fn index(
        &self,
        features: &Cached<Features>,
        keypoints: usize,
        dim: usize,
        cfg: IndexConfig,
    ) -> CliResult<Cached<(NnIndex, IndexManifest)>> {
        let hash = config_hash(&("index", &features.hash, keypoints, dim, cfg))?;
        let dir = self.artifact(&hash)?;
        let (manifest, payload) = (dir.join("index.json"), dir.join("index.bin"));
        if manifest.is_file() {
            let m: IndexManifest = read_json(&manifest)?;
            let mut r = BufReader::new(File::open(&payload).map_err(|e| data(&payload, e))?);
            let index = NnIndex::read_binary(&mut r).map_err(|e| data(&payload, e))?;
            return Ok(Cached {
                value: (index, m),
                hash,
                hit: true,
            });
        }
        let sets = descriptor_sets(&features.value, keypoints, dim)?;
        let index = build_index(&sets, cfg)?;
        let m = IndexManifest {
            config_hash: hash.clone(),
            curvature: features.hash.clone(),
            keypoints,
            dim,
            index: cfg,
            images: sets.len(),
            descriptors: sets.iter().map(DescriptorSet::len).sum(),
            indexable: index.len(),
        };
        let mut w = BufWriter::new(File::create(&payload).map_err(|e| data(&payload, e))?);
        index.write_binary(&mut w)?;
        w.flush().map_err(|e| data(&payload, e))?;
        write_json(&manifest, &m)?;
        Ok(Cached {
            value: (index, m),
            hash,
            hit: false,
        })
    }
}

/// Descriptors for every image, checking each image's count against its
/// keypoint pairs.
pub fn descriptor_sets(features: &Features, keypoints: usize, dim: usize) -> CliResult<Vec<DescriptorSet>> {
    use rayon::prelude::*;
    features
        .curvature
        .par_iter()
        .map(|(key, m)| {
            let kp = extract_keypoints(m, keypoints)?;
            let d = extract_descriptors(m, &kp, dim, key.clone())?;
            if d.len() != kp.pair_count() {
                return Err(CliError::Internal(format!(
                    "{key:?}: {} descriptors for {} keypoint pairs",
                    d.len(),
                    kp.pair_count()
                )));
            }
            Ok(d)
        })
        .collect()
}
