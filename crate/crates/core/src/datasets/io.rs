//! Binary and CSV dataset formats.
//!
//! Binary layout: a text header of `key=value` lines ending with `end`,
//! then little-endian `f64` sample values (row-major, sample after sample),
//! `u16` labels, the train/val/test index arrays as `u64`, and optionally
//! the per-channel normalization mean and std as `f64`.
//!
//! CSV layout: a `#series_len=..,channels=..,num_classes=..` comment line,
//! then one row per sample with the flattened `L·D` values followed by the
//! label. Values are written with 17 significant digits.

use std::path::{Path, PathBuf};

use super::{DataError, DatasetBundle, LabeledSeries, NormStats, Provenance, Splits};
use crate::digest::sha256_hex;
use crate::gradcore::Tensor;

const MAGIC: &str = "TARDIFF-DATA";
const VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save(bundle: &DatasetBundle, path: &Path, format: Format) -> Result<(), DataError> {
    match format {
        Format::Binary => save_binary(bundle, path),
        Format::Csv => save_csv(bundle, path),
    }
}

pub fn load(path: &Path, format: Format) -> Result<DatasetBundle, DataError> {
    match format {
        Format::Binary => load_binary(path),
        Format::Csv => load_csv(path),
    }
}

pub fn encode_binary(bundle: &DatasetBundle) -> Vec<u8> {
    let empty = Splits::default();
    let splits = bundle.splits.as_ref().unwrap_or(&empty);
    let mut out = format!(
        "{MAGIC}\nversion={VERSION}\nn={}\nseries_len={}\nchannels={}\nnum_classes={}\n\
         train={}\nval={}\ntest={}\nsplits={}\nstats={}\nend\n",
        bundle.len(),
        bundle.series_len,
        bundle.channels,
        bundle.num_classes,
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        u8::from(bundle.splits.is_some()),
        u8::from(bundle.stats.is_some()),
    )
    .into_bytes();
    for s in &bundle.samples {
        for v in s.x.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for s in &bundle.samples {
        out.extend_from_slice(&(s.y as u16).to_le_bytes());
    }
    for list in [&splits.train, &splits.val, &splits.test] {
        for &i in list {
            out.extend_from_slice(&(i as u64).to_le_bytes());
        }
    }
    if let Some(stats) = &bundle.stats {
        for v in stats.mean.iter().chain(&stats.std) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_binary(bundle: &DatasetBundle, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, encode_binary(bundle)).map_err(|e| io_err(path, e))
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.bytes.len(),
                needed: self.pos + n - self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u16(&mut self) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
}

/// Parse a `key=value` text header terminated by an `end` line. Returns the
/// pairs and the byte offset where the payload starts.
pub(crate) fn parse_header<'a>(
    path: &Path,
    bytes: &'a [u8],
    magic: &str,
) -> Result<(Vec<(&'a str, &'a str)>, usize), DataError> {
    let bad = |reason: String| DataError::BadHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut pos = 0;
    let mut line_no = 0;
    let mut pairs = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("header is not terminated by an `end` line".into()))?;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| bad(format!("line {} is not UTF-8", line_no + 1)))?;
        pos += nl + 1;
        line_no += 1;
        if line_no == 1 {
            if line != magic {
                return Err(bad(format!("expected magic {magic:?}, found {line:?}")));
            }
            continue;
        }
        if line == "end" {
            return Ok((pairs, pos));
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {line_no} is not key=value: {line:?}")))?;
        pairs.push((k, v));
    }
}

pub(crate) fn header_value<'a>(path: &Path, pairs: &[(&str, &'a str)], key: &str) -> Result<&'a str, DataError> {
    pairs
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| DataError::BadHeader {
            path: path.to_path_buf(),
            reason: format!("missing key {key}"),
        })
}

fn header_usize(path: &Path, pairs: &[(&str, &str)], key: &str) -> Result<usize, DataError> {
    let v = header_value(path, pairs, key)?;
    v.parse().map_err(|_| DataError::BadHeader {
        path: path.to_path_buf(),
        reason: format!("{key}={v} is not a non-negative integer"),
    })
}

pub fn decode_binary(path: &Path, bytes: &[u8]) -> Result<DatasetBundle, DataError> {
    if bytes.is_empty() {
        return Err(DataError::Empty { path: path.to_path_buf() });
    }
    let (pairs, start) = parse_header(path, bytes, MAGIC)?;
    let version = header_value(path, &pairs, "version")?;
    if version != VERSION {
        return Err(DataError::Version {
            path: path.to_path_buf(),
            found: version.to_string(),
        });
    }
    let n = header_usize(path, &pairs, "n")?;
    if n == 0 {
        return Err(DataError::Empty { path: path.to_path_buf() });
    }
    let l = header_usize(path, &pairs, "series_len")?;
    let d = header_usize(path, &pairs, "channels")?;
    let num_classes = header_usize(path, &pairs, "num_classes")?;
    let sizes = [
        header_usize(path, &pairs, "train")?,
        header_usize(path, &pairs, "val")?,
        header_usize(path, &pairs, "test")?,
    ];
    let has_splits = header_usize(path, &pairs, "splits")? == 1;
    let has_stats = header_usize(path, &pairs, "stats")? == 1;

    let mut r = Reader { path, bytes, pos: start };
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = Vec::with_capacity(l * d);
        for _ in 0..l * d {
            x.push(r.f64()?);
        }
        values.push(x);
    }
    let mut samples = Vec::with_capacity(n);
    for (i, x) in values.into_iter().enumerate() {
        let y = r.u16()? as usize;
        let x = Tensor::new(vec![l, d], x).map_err(|e| DataError::BadHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        samples.push(LabeledSeries { id: i as u64, x, y });
    }
    let mut lists: [Vec<usize>; 3] = Default::default();
    for (list, &size) in lists.iter_mut().zip(&sizes) {
        for _ in 0..size {
            let i = r.u64()? as usize;
            if i >= n {
                return Err(DataError::BadHeader {
                    path: path.to_path_buf(),
                    reason: format!("split index {i} out of range"),
                });
            }
            list.push(i);
        }
    }
    let stats = if has_stats {
        let mut v = Vec::with_capacity(2 * d);
        for _ in 0..2 * d {
            v.push(r.f64()?);
        }
        let std = v.split_off(d);
        Some(NormStats { mean: v, std })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(DataError::BadHeader {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes after payload", bytes.len() - r.pos),
        });
    }
    let mut bundle = DatasetBundle::from_samples(
        samples,
        num_classes,
        Provenance::File {
            digest: sha256_hex(bytes),
        },
    )?;
    let [train, val, test] = lists;
    if has_splits {
        bundle.splits = Some(Splits { train, val, test });
    }
    bundle.stats = stats;
    Ok(bundle)
}

pub fn load_binary(path: &Path) -> Result<DatasetBundle, DataError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode_binary(path, &bytes)
}

pub fn save_csv(bundle: &DatasetBundle, path: &Path) -> Result<(), DataError> {
    let mut out = format!(
        "#series_len={},channels={},num_classes={}\n",
        bundle.series_len, bundle.channels, bundle.num_classes
    );
    for s in &bundle.samples {
        for v in s.x.data() {
            out.push_str(&format!("{v:.16e},"));
        }
        out.push_str(&s.y.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_csv(path: &Path) -> Result<DatasetBundle, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_csv(path, &text)
}

fn parse_csv(path: &Path, text: &str) -> Result<DatasetBundle, DataError> {
    let p = || path.to_path_buf();
    let mut lines = text.lines();
    let header = match lines.next() {
        None => return Err(DataError::Empty { path: p() }),
        Some(h) if h.trim().is_empty() => return Err(DataError::Empty { path: p() }),
        Some(h) => h,
    };
    let bad = |reason: &str| DataError::BadHeader {
        path: p(),
        reason: reason.to_string(),
    };
    let meta = header.strip_prefix('#').ok_or_else(|| bad("first line must be a #key=value comment"))?;
    let mut dims = [None; 3];
    for kv in meta.split(',') {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad("header entries must be key=value"))?;
        let v: usize = v.trim().parse().map_err(|_| bad("header values must be integers"))?;
        match k.trim() {
            "series_len" => dims[0] = Some(v),
            "channels" => dims[1] = Some(v),
            "num_classes" => dims[2] = Some(v),
            _ => return Err(bad("unknown header key")),
        }
    }
    let [Some(l), Some(d), Some(num_classes)] = dims else {
        return Err(bad("header needs series_len, channels and num_classes"));
    };
    let width = l * d;
    let mut samples = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width + 1 {
            return Err(DataError::MalformedRow {
                path: p(),
                row,
                column: cells.len(),
                reason: format!("expected {} columns, found {}", width + 1, cells.len()),
            });
        }
        let mut x = Vec::with_capacity(width);
        for (c, cell) in cells[..width].iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::MalformedRow {
                path: p(),
                row,
                column: c + 1,
                reason: format!("non-numeric cell {cell:?}"),
            })?;
            x.push(v);
        }
        let y: usize = cells[width].trim().parse().map_err(|_| DataError::MalformedRow {
            path: p(),
            row,
            column: width + 1,
            reason: format!("label {:?} is not a class id", cells[width]),
        })?;
        let x = Tensor::new(vec![l, d], x).map_err(|e| bad(&e.to_string()))?;
        samples.push(LabeledSeries {
            id: samples.len() as u64,
            x,
            y,
        });
    }
    if samples.is_empty() {
        return Err(DataError::Empty { path: p() });
    }
    DatasetBundle::from_samples(
        samples,
        num_classes,
        Provenance::File {
            digest: sha256_hex(text.as_bytes()),
        },
    )
}

/// Write `<path>.manifest.json` next to a saved bundle.
pub fn write_manifest(path: &Path, bundle: &DatasetBundle, extra: serde_json::Value) -> Result<PathBuf, DataError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let provenance = match &bundle.provenance {
        // Onsets are per-sample metadata; the generator settings regenerate them.
        Provenance::Generated { spec, .. } => serde_json::json!({ "generator": spec }),
        other => serde_json::to_value(other).expect("serializable"),
    };
    let manifest = serde_json::json!({
        "file": path.file_name().and_then(|f| f.to_str()),
        "digest": sha256_hex(&bytes),
        "n": bundle.len(),
        "series_len": bundle.series_len,
        "channels": bundle.channels,
        "num_classes": bundle.num_classes,
        "provenance": provenance,
        "extra": extra,
    });
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    let mpath = PathBuf::from(name);
    let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
    std::fs::write(&mpath, text).map_err(|e| io_err(&mpath, e))?;
    Ok(mpath)
}
