//! Corpus manifests: one tab-separated line per sample naming its iris,
//! mask and code images relative to the manifest's directory.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{expand_mask, FilterBank, IrisCode, IrisSample};
use crate::io::netpbm::{read_pbm, read_pgm, write_pbm, write_pgm, NetpbmError};
use crate::surrogate::TrainingPair;
use crate::synth::{Corpus, CorpusRecord, Eye};

pub const HEADER: &str = "identity\teye\tsample\tiris\tmask\tcode";
pub const VERSION_LINE: &str = "# irisadv manifest v1";
pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        source: NetpbmError,
    },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub identity: usize,
    pub eye: Eye,
    pub sample: usize,
    pub iris: PathBuf,
    pub mask: PathBuf,
    pub code: PathBuf,
}

impl ManifestEntry {
    pub fn for_key(identity: usize, eye: Eye, sample: usize) -> Self {
        let stem = format!("{identity:04}_{}_{sample:02}", eye.tag());
        Self {
            identity,
            eye,
            sample,
            iris: PathBuf::from(format!("iris/{stem}.pgm")),
            mask: PathBuf::from(format!("mask/{stem}.pbm")),
            code: PathBuf::from(format!("code/{stem}.pbm")),
        }
    }
}

pub fn manifest_to_text(entries: &[ManifestEntry]) -> String {
    let mut out = format!("{VERSION_LINE}\n{HEADER}\n");
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            e.identity,
            e.eye.tag(),
            e.sample,
            e.iris.display(),
            e.mask.display(),
            e.code.display()
        ));
    }
    out
}

pub fn manifest_from_text(text: &str, path: &str) -> Result<Vec<ManifestEntry>, ManifestError> {
    let err = |line: usize, reason: String| ManifestError::Parse {
        path: path.to_string(),
        line,
        reason,
    };
    let mut entries = Vec::new();
    let mut saw_header = false;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != HEADER {
                return Err(err(n, format!("expected header `{HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(err(n, format!("expected 6 tab-separated fields, found {}", f.len())));
        }
        let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| err(n, format!("bad {what} `{s}`")));
        entries.push(ManifestEntry {
            identity: int(f[0], "identity")?,
            eye: f[1].parse().map_err(|e: String| err(n, e))?,
            sample: int(f[2], "sample")?,
            iris: PathBuf::from(f[3]),
            mask: PathBuf::from(f[4]),
            code: PathBuf::from(f[5]),
        });
    }
    if !saw_header {
        return Err(err(0, "missing header".into()));
    }
    Ok(entries)
}

fn image_err(path: &Path) -> impl Fn(NetpbmError) -> ManifestError + '_ {
    move |source| ManifestError::Image {
        path: path.display().to_string(),
        source,
    }
}

/// Writes every record's images plus `manifest.tsv` under `dir`.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<PathBuf, ManifestError> {
    let mut entries = Vec::with_capacity(corpus.records.len());
    for r in &corpus.records {
        let e = ManifestEntry::for_key(r.identity, r.eye, r.sample);
        let (p_iris, p_mask, p_code) = (dir.join(&e.iris), dir.join(&e.mask), dir.join(&e.code));
        write_pgm(&p_iris, &r.pair.sample.iris).map_err(image_err(&p_iris))?;
        write_pbm(&p_mask, &r.pair.sample.mask).map_err(image_err(&p_mask))?;
        write_pbm(&p_code, &r.pair.code.bits).map_err(image_err(&p_code))?;
        entries.push(e);
    }
    let path = dir.join(MANIFEST_FILE);
    super::write_file(&path, manifest_to_text(&entries).as_bytes()).map_err(ManifestError::Io)?;
    Ok(path)
}

/// Loads a corpus written by [`write_corpus`]. Code masks are recomputed from
/// the pixel masks with `bank`.
pub fn load_corpus(manifest: &Path, bank: &FilterBank) -> Result<Corpus, ManifestError> {
    let bytes = super::read_file(manifest).map_err(ManifestError::Io)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| ManifestError::Io(format!("{}: not UTF-8", manifest.display())))?;
    let entries = manifest_from_text(&text, &manifest.display().to_string())?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut records = Vec::with_capacity(entries.len());
    for e in entries {
        let (p_iris, p_mask, p_code) = (dir.join(&e.iris), dir.join(&e.mask), dir.join(&e.code));
        let iris = read_pgm(&p_iris).map_err(image_err(&p_iris))?;
        let mask = read_pbm(&p_mask).map_err(image_err(&p_mask))?;
        let bits = read_pbm(&p_code).map_err(image_err(&p_code))?;
        let sample = IrisSample::new(iris, mask).map_err(|e| ManifestError::Io(format!("{}: {e}", p_iris.display())))?;
        let (h, w) = sample.dims();
        if bits.dims() != (bank.len() * h, w) {
            return Err(ManifestError::Io(format!(
                "{}: code is {:?}, expected {:?} for a {}-filter bank",
                p_code.display(),
                bits.dims(),
                (bank.len() * h, w),
                bank.len()
            )));
        }
        let code = IrisCode {
            planes: bank.len(),
            bits,
            mask: expand_mask(&sample.mask, bank),
        };
        records.push(CorpusRecord {
            identity: e.identity,
            eye: e.eye,
            sample: e.sample,
            pair: TrainingPair { sample, code },
        });
    }
    Ok(Corpus { records })
}
