//! Dataset manifests.
//!
//! A manifest is UTF-8 text, one record per line. Lines starting with `#`
//! and blank lines are ignored. A record is a tab-separated list of
//! `key=value` fields:
//!
//! ```text
//! # lessvit manifest v1
//! path=tile_00000.ght	label=2	split=train
//! path=tile_00001.ght	label=-	split=val
//! ```
//!
//! `path` is relative to the manifest's directory, `label` is a class index
//! or `-`, and `split` is one of `train`, `val`, `test`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::cube::HyperCube;
use super::tile_file::read_tile;
use crate::error::{LessError, Result};

pub const MANIFEST_HEADER: &str = "# lessvit manifest v1";
pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: String,
    pub label: Option<usize>,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.records {
            let label = r.label.map_or_else(|| "-".to_string(), |l| l.to_string());
            out.push_str(&format!("path={}\tlabel={label}\tsplit={}\n", r.path, r.split));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| LessError::Manifest {
                line: i + 1,
                reason,
            };
            let (mut path, mut label, mut split) = (None, None, None);
            for field in line.split('\t') {
                let (k, v) = field
                    .split_once('=')
                    .ok_or_else(|| err(format!("field `{field}` is not key=value")))?;
                match k {
                    "path" => path = Some(v.to_string()),
                    "label" if v == "-" => label = Some(None),
                    "label" => {
                        label = Some(Some(
                            v.parse().map_err(|_| err(format!("bad label `{v}`")))?,
                        ))
                    }
                    "split" => split = Some(v.parse::<Split>().map_err(err)?),
                    other => return Err(err(format!("unknown key `{other}`"))),
                }
            }
            records.push(ManifestRecord {
                path: path.ok_or_else(|| err("missing path".into()))?,
                label: label.unwrap_or(None),
                split: split.ok_or_else(|| err("missing split".into()))?,
            });
        }
        Ok(Self { records })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// A tile loaded through a manifest.
#[derive(Clone, Debug)]
pub struct Sample {
    pub cube: HyperCube,
    pub label: Option<usize>,
    pub split: Split,
}

/// Read every tile listed in `dir/manifest.tsv`.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    let manifest = Manifest::read(dir.join(MANIFEST_FILE))?;
    manifest
        .records
        .into_iter()
        .map(|r| {
            let path: PathBuf = dir.join(&r.path);
            Ok(Sample {
                cube: read_tile(&path)?,
                label: r.label,
                split: r.split,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let m = Manifest {
            records: vec![
                ManifestRecord {
                    path: "a.ght".into(),
                    label: Some(3),
                    split: Split::Train,
                },
                ManifestRecord {
                    path: "b.ght".into(),
                    label: None,
                    split: Split::Test,
                },
            ],
        };
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn reports_line_numbers() {
        let err = Manifest::parse("# x\npath=a\tsplit=nope\n").unwrap_err();
        assert!(matches!(err, LessError::Manifest { line: 2, .. }));
    }
}
