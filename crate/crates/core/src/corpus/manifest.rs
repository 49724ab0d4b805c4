use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use super::gen::{gen_image, ImageKind, ImageSpec};
use super::pnm;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

pub const MANIFEST_FILE: &str = "manifest.tsv";
const HEADER: &str = "path\tlabel\tkind\tseed";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config(format!("unknown split {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Difficulty {
    Easy,
    Hard,
}

impl Difficulty {
    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        }
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            _ => Err(Error::config(format!("unknown label {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the corpus root, e.g. `train/img_0003.ppm`.
    pub path: PathBuf,
    pub label: Difficulty,
    pub kind: ImageKind,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn split(&self) -> Option<Split> {
        self.path
            .components()
            .next()
            .and_then(|c| c.as_os_str().to_str())
            .and_then(|s| s.parse().ok())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut entries = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let here = offset;
            offset += line.len();
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() || line.starts_with('#') || line == HEADER {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::parse(here, format!("expected 4 columns, got {}", cols.len())));
            }
            let bad = |e: Error| Error::parse(here, e.to_string());
            entries.push(ManifestEntry {
                path: PathBuf::from(cols[0]),
                label: cols[1].parse().map_err(bad)?,
                kind: cols[2].parse().map_err(bad)?,
                seed: cols[3]
                    .parse()
                    .map_err(|_| Error::parse(here, format!("bad seed {:?}", cols[3])))?,
            });
        }
        Ok(CorpusManifest {
            root: root.to_path_buf(),
            entries,
        })
    }

    pub fn save(&self) -> Result<()> {
        let mut out = String::from(HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.path.display(),
                e.label.name(),
                e.kind,
                e.seed
            ));
        }
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }

    /// Entries of one split, keeping their order.
    pub fn split(&self, split: Split) -> CorpusManifest {
        CorpusManifest {
            root: self.root.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| e.split() == Some(split))
                .cloned()
                .collect(),
        }
    }

    pub fn filter_label(&self, label: Difficulty) -> CorpusManifest {
        CorpusManifest {
            root: self.root.clone(),
            entries: self.entries.iter().filter(|e| e.label == label).cloned().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load_image(&self, index: usize) -> Result<Image> {
        let e = self
            .entries
            .get(index)
            .ok_or_else(|| Error::Usage(format!("manifest index {index} out of range")))?;
        pnm::read_ppm(&self.root.join(&e.path))
    }

    pub fn load_all(&self) -> Result<Vec<Image>> {
        (0..self.len()).map(|i| self.load_image(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub hard_fraction: f64,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_train: 200,
            n_val: 40,
            n_test: 40,
            hard_fraction: 0.2,
            height: 128,
            width: 128,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Val => self.n_val,
            Split::Test => self.n_test,
        }
    }
}

/// The spec of every image the corpus `cfg` describes, without touching disk.
pub fn corpus_specs(cfg: &CorpusConfig) -> Result<Vec<(ManifestEntry, ImageSpec)>> {
    if !(0.0..=1.0).contains(&cfg.hard_fraction) {
        return Err(Error::config(format!(
            "hard fraction {} outside [0, 1]",
            cfg.hard_fraction
        )));
    }
    let mut out = Vec::new();
    for (si, split) in Split::ALL.into_iter().enumerate() {
        let n = cfg.count(split);
        let n_hard = (n as f64 * cfg.hard_fraction).round() as usize;
        let mut hard: Vec<bool> = (0..n).map(|i| i < n_hard).collect();
        let mut r = rng::rng_for(&[cfg.seed, rng::stream::SPLIT, si as u64]);
        hard.shuffle(&mut r);
        for (idx, &is_hard) in hard.iter().enumerate() {
            let kind = if is_hard {
                ImageKind::HARD[r.gen_range(0..ImageKind::HARD.len())]
            } else {
                ImageKind::EASY[r.gen_range(0..ImageKind::EASY.len())]
            };
            let seed = rng::derive_seed(&[cfg.seed, si as u64, idx as u64]);
            let entry = ManifestEntry {
                path: PathBuf::from(format!("{}/img_{idx:04}.ppm", split.name())),
                label: if is_hard { Difficulty::Hard } else { Difficulty::Easy },
                kind,
                seed,
            };
            out.push((entry, ImageSpec::from_seed(kind, cfg.height, cfg.width, seed)));
        }
    }
    Ok(out)
}

/// Writes every image plus the manifest under `root`.
pub fn generate_corpus(root: &Path, cfg: &CorpusConfig) -> Result<CorpusManifest> {
    let specs = corpus_specs(cfg)?;
    for split in Split::ALL {
        let dir = root.join(split.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut entries = Vec::with_capacity(specs.len());
    for (entry, spec) in specs {
        pnm::write_ppm16(&gen_image(&spec)?, &root.join(&entry.path))?;
        entries.push(entry);
    }
    let manifest = CorpusManifest {
        root: root.to_path_buf(),
        entries,
    };
    manifest.save()?;
    Ok(manifest)
}
