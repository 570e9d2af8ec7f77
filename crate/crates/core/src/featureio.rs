//! MFK1 feature files, MMT1 match files, and pair manifests.
//!
//! Binary layouts are little-endian throughout. Strings are a `u32` byte
//! length followed by UTF-8 bytes.
//!
//! MFK1: `"MFK1"`, version `u32 = 1`, channel `u8`, weights variant `u8`,
//! image id, original `w, h: u32`, working `w, h: u32`, scale factor `f64`,
//! `n: u32`, `d: u32`, `n × (x, y, score: f32)`, `n × d` descriptor `f32`.
//!
//! MMT1: `"MMT1"`, version `u32 = 1`, pair id, image a id, image b id,
//! `m: u32`, `m × (ax, ay, bx, by, confidence: f32, channel: u8, scale_tag: f32)`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::model::{Channel, Correspondence, FeatureSet, Keypoint, MatchSet, WeightsVariant};

pub const FEATURE_MAGIC: &[u8; 4] = b"MFK1";
pub const MATCH_MAGIC: &[u8; 4] = b"MMT1";
pub const FORMAT_VERSION: u32 = 1;

const MATCH_ROW_BYTES: usize = 5 * 4 + 1 + 4;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("BAD_MAGIC: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("TRUNCATED: {0}")]
    Truncated(String),
    #[error("INVALID: {0}")]
    Invalid(String),
    #[error("IO: {0}")]
    Io(#[from] io::Error),
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::BadMagic { .. } => "BAD_MAGIC",
            FormatError::Truncated(_) => "TRUNCATED",
            FormatError::Invalid(_) => "INVALID",
            FormatError::Io(_) => "IO_ERROR",
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len_u32(&mut self, n: usize, what: &str) -> Result<(), FormatError> {
        let n = u32::try_from(n).map_err(|_| FormatError::Invalid(format!("{what} count {n} exceeds u32")))?;
        self.u32(n);
        Ok(())
    }
    fn string(&mut self, s: &str) -> Result<(), FormatError> {
        self.len_u32(s.len(), "string byte")?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return Err(FormatError::Truncated(format!(
                "{what} needs {n} bytes at offset {}, {remaining} left",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], FormatError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
    fn u8(&mut self, what: &str) -> Result<u8, FormatError> {
        Ok(self.array::<1>(what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
    fn f32(&mut self, what: &str) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }
    fn f64(&mut self, what: &str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
    fn string(&mut self, what: &str) -> Result<String, FormatError> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| FormatError::Invalid(format!("{what} is not UTF-8")))
    }
    /// Fails unless `count × row_bytes` more bytes are available, before any allocation.
    fn require(&self, count: usize, row_bytes: usize, what: &str) -> Result<(), FormatError> {
        let remaining = self.buf.len() - self.pos;
        match count.checked_mul(row_bytes) {
            Some(total) if total <= remaining => Ok(()),
            _ => Err(FormatError::Truncated(format!(
                "{count} {what} of {row_bytes} bytes declared, {remaining} bytes left"
            ))),
        }
    }
    fn magic(&mut self, expected: &'static [u8; 4]) -> Result<(), FormatError> {
        let bad = || FormatError::BadMagic {
            expected: std::str::from_utf8(expected).expect("ascii magic"),
        };
        let got = self.take(4, "magic").map_err(|_| bad())?;
        if got != expected {
            return Err(bad());
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(FormatError::Invalid(format!("unsupported version {version}")));
        }
        Ok(())
    }
    fn finish(&self) -> Result<(), FormatError> {
        let extra = self.buf.len() - self.pos;
        if extra != 0 {
            return Err(FormatError::Invalid(format!("{extra} trailing bytes")));
        }
        Ok(())
    }
}

pub fn encode_features(set: &FeatureSet) -> Result<Vec<u8>, FormatError> {
    set.validate().map_err(|e| FormatError::Invalid(e.0))?;
    let mut w = Writer(Vec::with_capacity(64 + set.image_id.len() + set.len() * 12 + set.descriptors.len() * 4));
    w.0.extend_from_slice(FEATURE_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(set.channel.to_byte());
    w.u8(set.weights_variant.to_byte());
    w.string(&set.image_id)?;
    w.u32(set.original_size.0);
    w.u32(set.original_size.1);
    w.u32(set.working_size.0);
    w.u32(set.working_size.1);
    w.f64(set.scale_factor);
    w.len_u32(set.len(), "keypoint")?;
    w.len_u32(set.descriptor_dim, "descriptor dimension")?;
    for kp in &set.keypoints {
        w.f32(kp.x);
        w.f32(kp.y);
        w.f32(kp.score);
    }
    for &v in &set.descriptors {
        w.f32(v);
    }
    Ok(w.0)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSet, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.magic(FEATURE_MAGIC)?;
    let channel_byte = r.u8("channel")?;
    let channel = Channel::from_byte(channel_byte)
        .ok_or_else(|| FormatError::Invalid(format!("channel byte {channel_byte}")))?;
    let variant_byte = r.u8("weights variant")?;
    let weights_variant = WeightsVariant::from_byte(variant_byte)
        .ok_or_else(|| FormatError::Invalid(format!("weights variant byte {variant_byte}")))?;
    let image_id = r.string("image id")?;
    let original_size = (r.u32("original width")?, r.u32("original height")?);
    let working_size = (r.u32("working width")?, r.u32("working height")?);
    let scale_factor = r.f64("scale factor")?;
    let n = r.u32("keypoint count")? as usize;
    let d = r.u32("descriptor dimension")? as usize;
    r.require(n, 12, "keypoints")?;
    let keypoints = (0..n)
        .map(|i| {
            Ok(Keypoint {
                x: r.f32("keypoint")?,
                y: r.f32("keypoint")?,
                score: r.f32("keypoint")?,
                index: i as u32,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let values = n
        .checked_mul(d)
        .ok_or_else(|| FormatError::Truncated(format!("{n}x{d} descriptor block overflows")))?;
    r.require(values, 4, "descriptor values")?;
    let descriptors = (0..values)
        .map(|_| r.f32("descriptor"))
        .collect::<Result<Vec<_>, FormatError>>()?;
    r.finish()?;
    let mut set = FeatureSet {
        image_id,
        channel,
        weights_variant,
        scale_factor,
        original_size,
        working_size,
        keypoints,
        descriptors,
        descriptor_dim: d,
    };
    set.normalize_descriptors().map_err(|e| FormatError::Invalid(e.0))?;
    set.validate().map_err(|e| FormatError::Invalid(e.0))?;
    Ok(set)
}

pub fn encode_matches(set: &MatchSet) -> Result<Vec<u8>, FormatError> {
    set.validate().map_err(|e| FormatError::Invalid(e.0))?;
    let mut w = Writer(Vec::with_capacity(32 + set.len() * MATCH_ROW_BYTES));
    w.0.extend_from_slice(MATCH_MAGIC);
    w.u32(FORMAT_VERSION);
    w.string(&set.pair_id)?;
    w.string(&set.image_a)?;
    w.string(&set.image_b)?;
    w.len_u32(set.len(), "correspondence")?;
    for c in &set.correspondences {
        w.f32(c.a[0]);
        w.f32(c.a[1]);
        w.f32(c.b[0]);
        w.f32(c.b[1]);
        w.f32(c.confidence);
        w.u8(c.channel.to_byte());
        w.f32(c.scale_tag);
    }
    Ok(w.0)
}

pub fn decode_matches(bytes: &[u8]) -> Result<MatchSet, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.magic(MATCH_MAGIC)?;
    let mut set = MatchSet::new(r.string("pair id")?, r.string("image a")?, r.string("image b")?);
    let m = r.u32("correspondence count")? as usize;
    r.require(m, MATCH_ROW_BYTES, "correspondences")?;
    set.correspondences.reserve_exact(m);
    for _ in 0..m {
        let a = [r.f32("ax")?, r.f32("ay")?];
        let b = [r.f32("bx")?, r.f32("by")?];
        let confidence = r.f32("confidence")?;
        let channel_byte = r.u8("channel")?;
        let channel = Channel::from_byte(channel_byte)
            .ok_or_else(|| FormatError::Invalid(format!("channel byte {channel_byte}")))?;
        let scale_tag = r.f32("scale tag")?;
        set.correspondences.push(Correspondence {
            a,
            b,
            confidence,
            channel,
            scale_tag,
        });
    }
    r.finish()?;
    set.validate().map_err(|e| FormatError::Invalid(e.0))?;
    Ok(set)
}

pub fn write_feature_file(set: &FeatureSet, path: &Path) -> Result<(), FormatError> {
    Ok(fs::write(path, encode_features(set)?)?)
}

pub fn read_feature_file(path: &Path) -> Result<FeatureSet, FormatError> {
    decode_features(&fs::read(path)?)
}

pub fn write_match_file(set: &MatchSet, path: &Path) -> Result<(), FormatError> {
    Ok(fs::write(path, encode_matches(set)?)?)
}

pub fn read_match_file(path: &Path) -> Result<MatchSet, FormatError> {
    decode_matches(&fs::read(path)?)
}

/// Ground-truth label of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Matching,
    NonMatching,
    Unknown,
}

impl PairLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PairLabel::Matching => "MATCH",
            PairLabel::NonMatching => "NONMATCH",
            PairLabel::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for PairLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MATCH" => Ok(PairLabel::Matching),
            "NONMATCH" => Ok(PairLabel::NonMatching),
            "UNKNOWN" => Ok(PairLabel::Unknown),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// One manifest line. Paths are resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub image_a: String,
    pub image_b: String,
    pub label: PairLabel,
    /// Feature files of image a; a channel may list one file per scale.
    pub features_a: Vec<(Channel, PathBuf)>,
    pub features_b: Vec<(Channel, PathBuf)>,
    /// Precomputed match files, at most one per channel.
    pub match_files: Vec<(Channel, PathBuf)>,
}

impl ManifestEntry {
    pub fn match_file(&self, channel: Channel) -> Option<&Path> {
        self.match_files.iter().find(|(c, _)| *c == channel).map(|(_, p)| p.as_path())
    }

    fn paths(&self) -> impl Iterator<Item = &Path> {
        self.features_a
            .iter()
            .chain(&self.features_b)
            .chain(&self.match_files)
            .map(|(_, p)| p.as_path())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("PARSE_ERROR: line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("DUPLICATE_PAIR_ID: {0:?}")]
    DuplicatePairId(String),
    #[error("MISSING_FILE: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("IO: {0}")]
    Io(#[from] io::Error),
}

impl ManifestError {
    pub fn code(&self) -> &'static str {
        match self {
            ManifestError::Parse { .. } => "PARSE_ERROR",
            ManifestError::DuplicatePairId(_) => "DUPLICATE_PAIR_ID",
            ManifestError::MissingFile(_) => "MISSING_FILE",
            ManifestError::Io(_) => "IO_ERROR",
        }
    }
}

fn parse_file_list(field: &str, base: &Path, line: usize) -> Result<Vec<(Channel, PathBuf)>, ManifestError> {
    if field == "-" {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|item| {
            let (channel, path) = item.split_once('=').ok_or_else(|| ManifestError::Parse {
                line,
                msg: format!("expected CHANNEL=path, got {item:?}"),
            })?;
            let channel = channel.parse::<Channel>().map_err(|msg| ManifestError::Parse { line, msg })?;
            if path.is_empty() {
                return Err(ManifestError::Parse {
                    line,
                    msg: "empty path".into(),
                });
            }
            Ok((channel, base.join(path)))
        })
        .collect()
}

/// Parses manifest text. `base` anchors relative paths; file existence is not checked.
pub fn parse_manifest(text: &str, base: &Path) -> Result<PairManifest, ManifestError> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 6 && fields.len() != 7 {
            return Err(ManifestError::Parse {
                line,
                msg: format!("expected 6 or 7 tab-separated fields, got {}", fields.len()),
            });
        }
        if fields[..3].iter().any(|f| f.is_empty()) {
            return Err(ManifestError::Parse {
                line,
                msg: "empty pair or image id".into(),
            });
        }
        let label = fields[3].parse().map_err(|msg| ManifestError::Parse { line, msg })?;
        let entry = ManifestEntry {
            pair_id: fields[0].to_owned(),
            image_a: fields[1].to_owned(),
            image_b: fields[2].to_owned(),
            label,
            features_a: parse_file_list(fields[4], base, line)?,
            features_b: parse_file_list(fields[5], base, line)?,
            match_files: match fields.get(6) {
                Some(f) => parse_file_list(f, base, line)?,
                None => Vec::new(),
            },
        };
        let mut channels = HashSet::new();
        if !entry.match_files.iter().all(|(c, _)| channels.insert(*c)) {
            return Err(ManifestError::Parse {
                line,
                msg: "more than one match file for a channel".into(),
            });
        }
        if !seen.insert(entry.pair_id.clone()) {
            return Err(ManifestError::DuplicatePairId(entry.pair_id));
        }
        entries.push(entry);
    }
    Ok(PairManifest { entries })
}

pub fn load_manifest(path: &Path) -> Result<PairManifest, ManifestError> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let manifest = parse_manifest(&text, base)?;
    for entry in &manifest.entries {
        if let Some(missing) = entry.paths().find(|p| !p.is_file()) {
            return Err(ManifestError::MissingFile(missing.to_path_buf()));
        }
    }
    Ok(manifest)
}

fn format_file_list(files: &[(Channel, PathBuf)], base: &Path) -> String {
    if files.is_empty() {
        return "-".into();
    }
    files
        .iter()
        .map(|(c, p)| {
            let shown = p.strip_prefix(base).unwrap_or(p);
            format!("{c}={}", shown.display())
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders a manifest; paths under `base` are written relative to it.
pub fn format_manifest(manifest: &PairManifest, base: &Path) -> String {
    let mut out = String::from("# pair_id\timage_a\timage_b\tlabel\tfeatures_a\tfeatures_b\tmatches\n");
    for e in &manifest.entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            e.pair_id,
            e.image_a,
            e.image_b,
            e.label,
            format_file_list(&e.features_a, base),
            format_file_list(&e.features_b, base),
            format_file_list(&e.match_files, base),
        ));
    }
    out
}

pub fn write_manifest(manifest: &PairManifest, path: &Path) -> io::Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    fs::write(path, format_manifest(manifest, base))
}
