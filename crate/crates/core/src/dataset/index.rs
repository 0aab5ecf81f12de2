use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::taxonomy::ClassTaxonomy;
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 5] = ["jpg", "jpeg", "png", "tif", "tiff"];
const MANIFEST_MAGIC: &str = "#! marrow-index v1";

/// One cell image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleRecord {
    /// Path relative to the dataset root with `/` separators. Unique per index.
    pub id: String,
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    #[default]
    Uniform,
    Stratified,
}

/// Where an index came from and which random steps produced it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Lineage {
    pub root: PathBuf,
    pub subset_fraction: Option<f64>,
    pub subset_mode: Option<SubsetMode>,
    pub subset_seed: Option<u64>,
    pub split: Option<String>,
    pub train_fraction: Option<f64>,
    pub split_seed: Option<u64>,
}

/// An immutable list of samples plus its lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    samples: Vec<SampleRecord>,
    lineage: Lineage,
}

impl DatasetIndex {
    pub fn new(samples: Vec<SampleRecord>, lineage: Lineage) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(Self { samples, lineage })
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Sample count per label index, for labels that occur at least once.
    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }

    /// Per-class counts keyed by class code.
    pub fn class_counts_by_code(&self, taxonomy: &ClassTaxonomy) -> Result<BTreeMap<String, usize>> {
        self.class_counts()
            .into_iter()
            .map(|(label, n)| Ok((taxonomy.code(label)?.to_string(), n)))
            .collect()
    }

    pub(crate) fn with_lineage(samples: Vec<SampleRecord>, lineage: Lineage) -> Self {
        Self { samples, lineage }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanWarning {
    UnknownClassFolder(PathBuf),
    StrayFile(PathBuf),
    Unreadable(PathBuf),
}

impl std::fmt::Display for ScanWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScanWarning::UnknownClassFolder(p) => {
                write!(f, "folder {} is not a known class code; skipped", p.display())
            }
            ScanWarning::StrayFile(p) => write!(f, "{} is not inside a class folder; skipped", p.display()),
            ScanWarning::Unreadable(p) => write!(f, "{} could not be read; skipped", p.display()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub index: DatasetIndex,
    pub warnings: Vec<ScanWarning>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Indexes `<root>/<CODE>/**/<image>` trees. Samples come back sorted by id.
pub fn scan_dataset(root: &Path, taxonomy: &ClassTaxonomy) -> Result<ScanOutcome> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut class_dirs = Vec::new();
    let mut warnings = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if path.is_dir() {
            match taxonomy.index_of(&name) {
                Ok(label) => class_dirs.push((path, label)),
                Err(_) => warnings.push(ScanWarning::UnknownClassFolder(path)),
            }
        } else if is_image(&path) {
            warnings.push(ScanWarning::StrayFile(path));
        }
    }
    class_dirs.sort();

    let mut samples = Vec::new();
    for (dir, label) in class_dirs {
        for entry in WalkDir::new(&dir).sort_by_file_name() {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    let p = e.path().map(Path::to_path_buf).unwrap_or_else(|| dir.clone());
                    warnings.push(ScanWarning::Unreadable(p));
                    continue;
                }
            };
            if !entry.file_type().is_file() || !is_image(entry.path()) {
                continue;
            }
            if std::fs::File::open(entry.path()).is_err() {
                warnings.push(ScanWarning::Unreadable(entry.path().to_path_buf()));
                continue;
            }
            samples.push(SampleRecord {
                id: relative_id(root, entry.path()),
                path: entry.path().to_path_buf(),
                label,
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let lineage = Lineage {
        root: root.to_path_buf(),
        ..Lineage::default()
    };
    Ok(ScanOutcome {
        index: DatasetIndex::new(samples, lineage)?,
        warnings,
    })
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_else(|| "-".into())
}

/// Renders the line-delimited manifest: a `#` lineage header, then one
/// `id<TAB>relative path<TAB>class code` line per sample.
pub fn render_index(index: &DatasetIndex, taxonomy: &ClassTaxonomy) -> Result<String> {
    let lin = index.lineage();
    let mut out = String::new();
    out.push_str(MANIFEST_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "# root = {}", lin.root.display());
    let _ = writeln!(out, "# subset_fraction = {}", fmt_opt(&lin.subset_fraction));
    let mode = lin.subset_mode.map(|m| match m {
        SubsetMode::Uniform => "uniform",
        SubsetMode::Stratified => "stratified",
    });
    let _ = writeln!(out, "# subset_mode = {}", fmt_opt(&mode));
    let _ = writeln!(out, "# subset_seed = {}", fmt_opt(&lin.subset_seed));
    let _ = writeln!(out, "# split = {}", fmt_opt(&lin.split));
    let _ = writeln!(out, "# train_fraction = {}", fmt_opt(&lin.train_fraction));
    let _ = writeln!(out, "# split_seed = {}", fmt_opt(&lin.split_seed));
    for s in index.samples() {
        let rel = s.path.strip_prefix(&lin.root).unwrap_or(&s.path);
        let rel = relative_id(Path::new(""), rel);
        if s.id.contains(['\t', '\n']) || rel.contains(['\t', '\n']) {
            return Err(Error::invalid(format!("sample `{}` contains a tab or newline", s.id)));
        }
        let _ = writeln!(out, "{}\t{}\t{}", s.id, rel, taxonomy.code(s.label)?);
    }
    Ok(out)
}

pub fn parse_index(text: &str, source_name: &str, taxonomy: &ClassTaxonomy) -> Result<DatasetIndex> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line: Some(line),
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == MANIFEST_MAGIC => {}
        _ => return Err(err(1, format!("expected `{MANIFEST_MAGIC}` header"))),
    }
    let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut samples = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| err(lineno, "header line without `=`".into()))?;
            header.insert(k.trim().to_string(), (lineno, v.trim().to_string()));
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, rel, code] = fields[..] else {
            return Err(err(lineno, format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        let label = taxonomy.index_of(code).map_err(|e| err(lineno, e.to_string()))?;
        samples.push((lineno, id.to_string(), rel.to_string(), label));
    }

    fn field<T: std::str::FromStr>(
        header: &BTreeMap<String, (usize, String)>,
        key: &str,
        err: &dyn Fn(usize, String) -> Error,
    ) -> Result<Option<T>> {
        match header.get(key) {
            None => Err(err(1, format!("missing header field `{key}`"))),
            Some((_, v)) if v == "-" => Ok(None),
            Some((l, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| err(*l, format!("bad value `{v}` for `{key}`"))),
        }
    }
    let root: PathBuf = field::<String>(&header, "root", &err)?
        .ok_or_else(|| err(1, "`root` must be set".into()))?
        .into();
    let subset_mode = match field::<String>(&header, "subset_mode", &err)?.as_deref() {
        None => None,
        Some("uniform") => Some(SubsetMode::Uniform),
        Some("stratified") => Some(SubsetMode::Stratified),
        Some(other) => return Err(err(header["subset_mode"].0, format!("unknown subset_mode `{other}`"))),
    };
    let lineage = Lineage {
        subset_fraction: field(&header, "subset_fraction", &err)?,
        subset_mode,
        subset_seed: field(&header, "subset_seed", &err)?,
        split: field(&header, "split", &err)?,
        train_fraction: field(&header, "train_fraction", &err)?,
        split_seed: field(&header, "split_seed", &err)?,
        root: root.clone(),
    };
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(samples.len());
    for (lineno, id, rel, label) in samples {
        if !seen.insert(id.clone()) {
            return Err(err(lineno, format!("duplicate sample id `{id}`")));
        }
        records.push(SampleRecord {
            id,
            path: root.join(rel),
            label,
        });
    }
    Ok(DatasetIndex::with_lineage(records, lineage))
}

pub fn write_index(path: &Path, index: &DatasetIndex, taxonomy: &ClassTaxonomy) -> Result<()> {
    let text = render_index(index, taxonomy)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_index(path: &Path, taxonomy: &ClassTaxonomy) -> Result<DatasetIndex> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_index(&text, &path.display().to_string(), taxonomy)
}
