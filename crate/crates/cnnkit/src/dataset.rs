//! Dataset ingestion (class folders or YOLO labels), image decoding and
//! manifest files.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use cnnkit_core::image::Image;
use cnnkit_core::split::{deterministic_split, DatasetManifest};
use log::warn;

use crate::error::{Error, Result};
use crate::fsutil::{create_dir, write_atomic};
use crate::{nct, ppm};

pub const POSITIVE_CLASS: &str = "auto_rickshaw";
pub const NEGATIVE_CLASS: &str = "non_autorickshaw";

/// File extensions treated as images during ingestion. Only PPM and ".nct"
/// decode natively; the rest are listed so they are not silently ignored.
pub const IMAGE_EXTENSIONS: [&str; 10] = [
    "ppm", "pnm", "nct", "jpg", "jpeg", "png", "bmp", "webp", "tif", "tiff",
];

const CONVERSION_HINT: &str =
    "convert it offline to binary PPM first, e.g. `magick input.jpg -depth 8 output.ppm`";

/// Lowercases and replaces every character outside `[a-z0-9]` with `_`.
pub fn sanitize_class_name(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

pub fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && !path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'))
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(Error::io(dir))? {
        out.push(entry.map_err(Error::io(dir))?.path());
    }
    out.sort();
    Ok(out)
}

/// One class folder found by [`ingest_class_tree`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDir {
    pub name: String,
    pub dir: PathBuf,
    /// Image file names, sorted.
    pub files: Vec<String>,
}

/// Scans the subdirectories of `root`. Class names are sanitized and sorted;
/// empty classes are dropped with a warning.
pub fn ingest_class_tree(root: &Path) -> Result<Vec<ClassDir>> {
    if !root.is_dir() {
        return Err(Error::Usage(format!(
            "input directory {} does not exist",
            root.display()
        )));
    }
    let mut classes: Vec<ClassDir> = Vec::new();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let raw = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if raw.starts_with('.') {
            continue;
        }
        let name = sanitize_class_name(&raw);
        let files: Vec<String> = sorted_entries(&dir)?
            .into_iter()
            .filter(|p| is_image_file(p))
            .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_string))
            .collect();
        if files.is_empty() {
            warn!("class directory {} has no images; dropped", dir.display());
            continue;
        }
        if let Some(other) = classes.iter().find(|c| c.name == name) {
            return Err(Error::format(
                root,
                format!(
                    "directories {} and {} both sanitize to class {name}",
                    other.dir.display(),
                    dir.display()
                ),
            ));
        }
        classes.push(ClassDir { name, dir, files });
    }
    if classes.is_empty() {
        return Err(Error::format(root, "no class directory contains images"));
    }
    classes.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(classes)
}

/// Result of [`ingest_yolo`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct YoloOutcome {
    pub positives: Vec<PathBuf>,
    pub negatives: Vec<PathBuf>,
    /// Images whose label file could not be parsed, with the reason.
    pub errors: Vec<(PathBuf, String)>,
    pub warnings: Vec<String>,
}

/// Parses one YOLO label file. Returns whether any line names a positive id,
/// plus warnings for coordinates outside `[0, 1]`.
pub fn parse_yolo_label(
    text: &str,
    positive_ids: &BTreeSet<u32>,
) -> Result<(bool, Vec<String>), String> {
    let mut positive = false;
    let mut warnings = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(format!(
                "line {}: expected 5 fields, found {}",
                n + 1,
                fields.len()
            ));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|_| format!("line {}: bad class id {:?}", n + 1, fields[0]))?;
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .map_err(|_| format!("line {}: bad coordinate {f:?}", n + 1))?;
            if !(0.0..=1.0).contains(&v) {
                warnings.push(format!("line {}: coordinate {v} outside [0, 1]", n + 1));
            }
        }
        positive |= positive_ids.contains(&id);
    }
    Ok((positive, warnings))
}

/// Assigns every image in `images` to the positive class iff its label file
/// `labels/<stem>.txt` names an id in `positive_ids`. Missing or empty label
/// files mean negative; unparsable ones are reported and skipped.
pub fn ingest_yolo(
    images: &Path,
    labels: &Path,
    positive_ids: &BTreeSet<u32>,
) -> Result<YoloOutcome> {
    for dir in [images, labels] {
        if !dir.is_dir() {
            return Err(Error::Usage(format!(
                "directory {} does not exist",
                dir.display()
            )));
        }
    }
    let mut out = YoloOutcome::default();
    for img in sorted_entries(images)?
        .into_iter()
        .filter(|p| is_image_file(p))
    {
        let stem = img.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let label = labels.join(format!("{stem}.txt"));
        let text = match fs::read_to_string(&label) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => {
                return Err(Error::Io {
                    path: label,
                    source: e,
                })
            }
        };
        match parse_yolo_label(&text, positive_ids) {
            Ok((positive, warnings)) => {
                for w in warnings {
                    warn!("{}: {w}", label.display());
                    out.warnings.push(format!("{}: {w}", label.display()));
                }
                if positive {
                    out.positives.push(img);
                } else {
                    out.negatives.push(img);
                }
            }
            Err(msg) => {
                warn!("{}: {msg}; image skipped", label.display());
                out.errors.push((img, msg));
            }
        }
    }
    Ok(out)
}

/// Copies `files` into `output/<class>/`, creating directories as needed.
pub fn materialize(output: &Path, class: &str, files: &[PathBuf]) -> Result<()> {
    let dir = output.join(class);
    create_dir(&dir)?;
    for src in files {
        let name = src
            .file_name()
            .ok_or_else(|| Error::format(src, "not a file"))?;
        let dst = dir.join(name);
        fs::copy(src, &dst).map_err(Error::io(&dst))?;
    }
    Ok(())
}

/// Decodes a P6 PPM or a 3×H×W ".nct" tensor with values in `[0, 1]`,
/// choosing by magic bytes.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<Image> {
    if bytes.starts_with(ppm::MAGIC) {
        return ppm::decode(bytes, path);
    }
    if bytes.starts_with(nct::MAGIC) {
        let t = nct::decode(bytes, path)?;
        let &[3, h, w] = t.shape() else {
            return Err(Error::format(
                path,
                format!("expected a 3xHxW tensor, found shape {:?}", t.shape()),
            ));
        };
        if let Some(i) = t.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::format(
                path,
                format!("value {} at element {i} outside [0, 1]", t.data()[i]),
            ));
        }
        let plane = h * w;
        let mut data = vec![0.0f32; 3 * plane];
        for (c, chan) in t.data().chunks_exact(plane).enumerate() {
            for (i, v) in chan.iter().enumerate() {
                data[3 * i + c] = *v;
            }
        }
        return Image::new(h, w, data).map_err(|e| Error::format(path, e.to_string()));
    }
    let magic: String = bytes
        .iter()
        .take(4)
        .map(|b| {
            if b.is_ascii_graphic() {
                *b as char
            } else {
                '.'
            }
        })
        .collect();
    Err(Error::format(
        path,
        format!("unsupported image format (magic {magic:?}); {CONVERSION_HINT}"),
    ))
}

pub fn load_image(path: &Path) -> Result<Image> {
    decode_image(&fs::read(path).map_err(Error::io(path))?, path)
}

/// Scans a class tree and splits it. Sample paths are relative to `data`
/// with `/` separators, and the manifest root is the canonical `data` path.
pub fn build_manifest(data: &Path, val_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Usage(format!(
            "--val-fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let classes = ingest_class_tree(data)?;
    let per_class: Vec<(String, Vec<String>)> = classes
        .iter()
        .map(|c| {
            let folder = c
                .dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            (
                c.name.clone(),
                c.files.iter().map(|f| format!("{folder}/{f}")).collect(),
            )
        })
        .collect();
    let mut manifest = deterministic_split(&per_class, val_fraction, seed)?.manifest;
    let root = data.canonicalize().map_err(Error::io(data))?;
    manifest.root = root.to_string_lossy().into_owned();
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read(path).map_err(Error::io(path))?;
    let manifest: DatasetManifest = serde_json::from_slice(&text)
        .map_err(|e| Error::format(path, format!("invalid manifest: {e}")))?;
    manifest
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(manifest)
}

/// Absolute location of a manifest sample. A relative root is taken relative
/// to the manifest's own directory.
pub fn sample_path(manifest: &DatasetManifest, manifest_path: &Path, sample: &str) -> PathBuf {
    let root = Path::new(&manifest.root);
    let base = if root.is_absolute() {
        root.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(root)
    };
    base.join(sample)
}
