//! Dataset manifests, synthetic dataset generation and stem-directory ingestion.
//!
//! Layout on disk:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<split>/<track_id>/<label>.wav
//! ```
//!
//! `manifest.json` fields:
//!
//! | field         | type                 | meaning                                  |
//! |---------------|----------------------|------------------------------------------|
//! | `schema`      | `"remixer-dataset"`  | format tag                               |
//! | `version`     | integer (1)          | bumped on incompatible changes           |
//! | `sample_rate` | integer              | shared by every stem                     |
//! | `k`           | integer              | sources per item                         |
//! | `labels`      | array of strings     | source names, index order                |
//! | `items`       | array                | `{track_id, split, seed, stems}`         |
//!
//! Stem paths are relative to the manifest's directory; `seed` is `null` for
//! ingested tracks.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::{synth_source, FAMILY_LABELS, FAMILY_ORDER};
use super::wav::{read_wav, write_wav, BitDepth};
use crate::error::{Error, Result};
use crate::signal::{is_active_segment, segment_bounds, SourceSet, Waveform, DEFAULT_ACTIVE_THRESHOLD_DB};

pub const MANIFEST_SCHEMA: &str = "remixer-dataset";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Peak of every generated mixture.
pub const MIX_PEAK: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?} (expected train, val or test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestItem {
    pub track_id: String,
    pub split: Split,
    pub seed: Option<u64>,
    pub stems: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema: String,
    pub version: u32,
    pub sample_rate: u32,
    pub k: usize,
    pub labels: Vec<String>,
    pub items: Vec<ManifestItem>,
    /// Directory the stem paths are relative to; set on load.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, sample_rate: u32, labels: Vec<String>) -> Self {
        DatasetManifest {
            schema: MANIFEST_SCHEMA.to_string(),
            version: MANIFEST_VERSION,
            sample_rate,
            k: labels.len(),
            labels,
            items: Vec::new(),
            root: root.into(),
        }
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(Error::Format(format!("manifest schema {:?} is not {MANIFEST_SCHEMA:?}", self.schema)));
        }
        if self.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", self.version)));
        }
        if self.labels.len() != self.k {
            return Err(Error::Format(format!("{} labels for k = {}", self.labels.len(), self.k)));
        }
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(&item.track_id) {
                return Err(Error::Format(format!("track {} listed twice", item.track_id)));
            }
            if item.stems.len() != self.k {
                return Err(Error::Format(format!(
                    "track {} has {} stems, expected {}",
                    item.track_id,
                    item.stems.len(),
                    self.k
                )));
            }
        }
        Ok(())
    }

    pub fn items_in(&self, split: Split) -> impl Iterator<Item = &ManifestItem> {
        self.items.iter().filter(move |i| i.split == split)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a manifest from a file, or from `<dir>/manifest.json` when given a directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push(MANIFEST_FILE);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.validate()?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    /// Reads the stems of one item into a labelled source set.
    pub fn load_item(&self, item: &ManifestItem) -> Result<SourceSet> {
        let mut sources = Vec::with_capacity(self.k);
        for rel in &item.stems {
            let w = read_wav(self.root.join(rel))?;
            if w.sample_rate != self.sample_rate {
                return Err(Error::Format(format!(
                    "{}: sample rate {} differs from manifest rate {}",
                    rel.display(),
                    w.sample_rate,
                    self.sample_rate
                )));
            }
            sources.push(w);
        }
        SourceSet::new(sources, self.labels.clone())
    }
}

/// One fixed-length window of a track.
#[derive(Debug, Clone)]
pub struct Segment {
    pub track_id: String,
    pub index: usize,
    pub sources: SourceSet,
}

/// Cuts every item of `split` into windows. With `active_only`, windows in
/// which some source is silent are dropped; their indices are not reused.
pub fn load_segments(
    manifest: &DatasetManifest,
    split: Split,
    length_s: f64,
    hop_s: f64,
    active_only: bool,
) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for item in manifest.items_in(split) {
        let set = manifest.load_item(item)?;
        for (index, (start, len)) in segment_bounds(set.len(), set.sample_rate(), length_s, hop_s)
            .into_iter()
            .enumerate()
        {
            let sources = set.slice(start, len);
            if active_only && !is_active_segment(&sources, DEFAULT_ACTIVE_THRESHOLD_DB) {
                continue;
            }
            out.push(Segment {
                track_id: item.track_id.clone(),
                index,
                sources,
            });
        }
    }
    Ok(out)
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub k: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            k: 4,
            n_train: 50,
            n_val: 10,
            n_test: 10,
            duration_s: 4.0,
            sample_rate: crate::signal::DEFAULT_SAMPLE_RATE,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=FAMILY_ORDER.len()).contains(&self.k) {
            return Err(Error::invalid(format!("k = {} must be between 2 and {}", self.k, FAMILY_ORDER.len())));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::invalid(format!("duration {} s must be positive", self.duration_s)));
        }
        if self.n_train + self.n_val + self.n_test == 0 {
            return Err(Error::invalid("dataset would have no items"));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser; derives independent seeds from a master seed.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of item `index` (counted across splits in train, val, test order).
pub fn item_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Labels assigned to the first `k` source slots.
pub fn synth_labels(k: usize) -> Vec<String> {
    FAMILY_LABELS[..k].iter().map(|s| s.to_string()).collect()
}

/// Renders the stems of one synthetic item, normalised so the mixture peaks at `MIX_PEAK`.
pub fn synth_item(k: usize, duration_s: f64, sample_rate: u32, seed: u64) -> Result<Vec<Waveform>> {
    let mut stems = Vec::with_capacity(k);
    for (slot, family) in FAMILY_ORDER[..k].iter().enumerate() {
        stems.push(synth_source(&family.default_spec(), duration_s, sample_rate, splitmix64(seed ^ slot as u64))?);
    }
    // normalise on the float32 values that will be stored, so the stored stems sum to the stored peak
    let n = stems[0].len();
    let peak = (0..n)
        .map(|i| stems.iter().map(|s| s.samples[i]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let factor = if peak > 0.0 { MIX_PEAK / peak } else { 1.0 };
    Ok(stems
        .into_iter()
        .map(|s| Waveform::new(s.samples.iter().map(|v| (v * factor) as f32 as f64).collect(), sample_rate))
        .collect())
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Generates the dataset under `root` and writes its manifest.
pub fn build_dataset(root: impl AsRef<Path>, cfg: &SynthConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let root = root.as_ref();
    let labels = synth_labels(cfg.k);
    let mut manifest = DatasetManifest::new(root, cfg.sample_rate, labels.clone());
    let counts = [(Split::Train, cfg.n_train), (Split::Val, cfg.n_val), (Split::Test, cfg.n_test)];
    let mut index = 0u64;
    for (split, n) in counts {
        for i in 0..n {
            let seed = item_seed(cfg.seed, index);
            index += 1;
            let track_id = format!("{split}-{i:04}");
            let rel_dir = PathBuf::from(split.as_str()).join(&track_id);
            ensure_dir(&root.join(&rel_dir))?;
            let stems = synth_item(cfg.k, cfg.duration_s, cfg.sample_rate, seed)?;
            let mut paths = Vec::with_capacity(cfg.k);
            for (stem, label) in stems.iter().zip(&labels) {
                let rel = rel_dir.join(format!("{label}.wav"));
                write_wav(root.join(&rel), stem, BitDepth::Float32)?;
                paths.push(rel);
            }
            manifest.items.push(ManifestItem {
                track_id,
                split,
                seed: Some(seed),
                stems: paths,
            });
        }
    }
    manifest.save(root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// A track `ingest_stems` could not use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub track: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub manifest: DatasetManifest,
    pub rejected: Vec<Rejection>,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn check_track(root: &Path, track_dir: &Path, labels: &[String]) -> std::result::Result<(u32, Vec<PathBuf>), String> {
    let mut shape: Option<(u32, usize)> = None;
    let mut rels = Vec::with_capacity(labels.len());
    for label in labels {
        let path = track_dir.join(format!("{label}.wav"));
        if !path.is_file() {
            return Err(format!("missing stem {label}.wav"));
        }
        let w = read_wav(&path).map_err(|e| format!("{label}.wav: {e}"))?;
        match shape {
            None => shape = Some((w.sample_rate, w.len())),
            Some((rate, len)) => {
                if w.sample_rate != rate {
                    return Err(format!("{label}.wav is {} Hz, other stems are {rate} Hz", w.sample_rate));
                }
                if w.len() != len {
                    return Err(format!("{label}.wav has {} samples, other stems have {len}", w.len()));
                }
            }
        }
        rels.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
    }
    Ok((shape.map(|s| s.0).unwrap_or(0), rels))
}

/// Builds a manifest over an existing stem directory.
///
/// Tracks live at `<dir>/<split>/<track_id>/<label>.wav` with split one of
/// `train`, `val`, `test`; a directory without split folders is read as a
/// flat list of tracks assigned to `test`. Tracks with missing, unreadable or
/// mismatched stems are skipped and listed in the report. Every accepted
/// track must share one sample rate.
pub fn ingest_stems(dir: impl AsRef<Path>, labels: &[String]) -> Result<IngestReport> {
    let dir = dir.as_ref();
    if labels.is_empty() {
        return Err(Error::invalid("at least one label is required"));
    }
    let mut groups: BTreeMap<Split, Vec<PathBuf>> = BTreeMap::new();
    let mut has_splits = false;
    for split in Split::ALL {
        let sd = dir.join(split.as_str());
        if sd.is_dir() {
            has_splits = true;
            groups.insert(split, sorted_subdirs(&sd)?);
        }
    }
    if !has_splits {
        groups.insert(Split::Test, sorted_subdirs(dir)?);
    }

    let mut manifest = DatasetManifest::new(dir, 0, labels.to_vec());
    let mut rejected = Vec::new();
    for (split, tracks) in groups {
        for track_dir in tracks {
            let track_id = track_dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            match check_track(dir, &track_dir, labels) {
                Ok((rate, stems)) => {
                    if manifest.sample_rate == 0 {
                        manifest.sample_rate = rate;
                    }
                    if rate != manifest.sample_rate {
                        rejected.push(Rejection {
                            track: track_id,
                            reason: format!("{rate} Hz differs from dataset rate {} Hz", manifest.sample_rate),
                        });
                        continue;
                    }
                    manifest.items.push(ManifestItem {
                        track_id,
                        split,
                        seed: None,
                        stems,
                    });
                }
                Err(reason) => rejected.push(Rejection { track: track_id, reason }),
            }
        }
    }
    manifest.validate()?;
    Ok(IngestReport { manifest, rejected })
}
