//! The 21 bone-marrow cell categories and their label indices.
//!
//! Label indices follow the alphabetical order of the three-letter codes, so
//! index 0 is `ABE` and index 20 is `PMO`. Every manifest, checkpoint and
//! probability column in the crate uses this ordering.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CLASS_COUNT: usize = 21;

const BONE_MARROW_CLASSES: [(&str, &str); CLASS_COUNT] = [
    ("ABE", "Abnormal eosinophil"),
    ("ART", "Artefact"),
    ("BAS", "Basophil"),
    ("BLA", "Blast"),
    ("EBO", "Erythroblast"),
    ("EOS", "Eosinophil"),
    ("FGC", "Faggott cell"),
    ("HAC", "Hairy cell"),
    ("KSC", "Smudge cell"),
    ("LYI", "Immature lymphocyte"),
    ("LYT", "Lymphocyte"),
    ("MMZ", "Metamyelocyte"),
    ("MON", "Monocyte"),
    ("MYB", "Myelocyte"),
    ("NGB", "Band neutrophil"),
    ("NGS", "Segmented neutrophil"),
    ("NIF", "Not identifiable"),
    ("OTH", "Other cells"),
    ("PEB", "Proerythroblast"),
    ("PLM", "Plasma cell"),
    ("PMO", "Promyelocyte"),
];

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ClassEntry {
    pub code: String,
    pub name: String,
}

/// Ordered code/name table with lookups in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTaxonomy {
    entries: Vec<ClassEntry>,
    by_code: HashMap<String, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyFile {
    class: Vec<ClassEntry>,
}

impl ClassTaxonomy {
    /// The built-in bone-marrow taxonomy.
    pub fn bone_marrow() -> Self {
        let entries = BONE_MARROW_CLASSES
            .iter()
            .map(|(code, name)| ClassEntry {
                code: (*code).to_string(),
                name: (*name).to_string(),
            })
            .collect();
        Self::from_entries(entries).expect("built-in taxonomy is valid")
    }

    pub fn from_entries(entries: Vec<ClassEntry>) -> Result<Self> {
        if entries.len() != CLASS_COUNT {
            return Err(Error::Taxonomy(format!(
                "expected {CLASS_COUNT} classes, found {}",
                entries.len()
            )));
        }
        let mut by_code = HashMap::with_capacity(entries.len());
        for (idx, entry) in entries.iter().enumerate() {
            let valid = entry.code.len() == 3 && entry.code.chars().all(|c| c.is_ascii_uppercase());
            if !valid {
                return Err(Error::Taxonomy(format!(
                    "class code `{}` is not three uppercase letters",
                    entry.code
                )));
            }
            if by_code.insert(entry.code.clone(), idx).is_some() {
                return Err(Error::Taxonomy(format!("duplicate class code `{}`", entry.code)));
            }
        }
        Ok(Self { entries, by_code })
    }

    /// Loads an override table from a TOML file of `[[class]]` tables with
    /// `code` and `name` keys.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TaxonomyFile = toml::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: line_of(&text, e.span().map(|s| s.start)),
            message: e.message().to_string(),
        })?;
        Self::from_entries(file.class)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn index_of(&self, code: &str) -> Result<usize> {
        self.by_code
            .get(code)
            .copied()
            .ok_or_else(|| Error::UnknownClass(code.to_string()))
    }

    pub fn name_of(&self, code: &str) -> Result<&str> {
        self.index_of(code).map(|i| self.entries[i].name.as_str())
    }

    pub fn code(&self, index: usize) -> Result<&str> {
        self.entries
            .get(index)
            .map(|e| e.code.as_str())
            .ok_or_else(|| Error::invalid(format!("class index {index} out of range")))
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.code.as_str())
    }

    /// SHA-256 over the ordered `code\tname` lines, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entries {
            hasher.update(e.code.as_bytes());
            hasher.update(b"\t");
            hasher.update(e.name.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

impl Default for ClassTaxonomy {
    fn default() -> Self {
        Self::bone_marrow()
    }
}

pub(crate) fn line_of(text: &str, offset: Option<usize>) -> Option<usize> {
    offset.map(|o| text[..o.min(text.len())].matches('\n').count() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_code() {
        let t = ClassTaxonomy::bone_marrow();
        assert_eq!(t.name_of("BAS").unwrap(), "Basophil");
        assert_eq!(t.len(), 21);
        assert!(matches!(t.name_of("XYZ"), Err(Error::UnknownClass(_))));
    }

    #[test]
    fn indices_follow_code_order() {
        let t = ClassTaxonomy::bone_marrow();
        let codes: Vec<_> = t.codes().collect();
        let mut sorted = codes.clone();
        sorted.sort();
        assert_eq!(codes, sorted);
        assert_eq!(t.index_of("ABE").unwrap(), 0);
        assert_eq!(t.index_of("PMO").unwrap(), 20);
        for (i, code) in codes.iter().enumerate() {
            assert_eq!(t.index_of(code).unwrap(), i);
            assert_eq!(t.code(i).unwrap(), *code);
        }
    }

    #[test]
    fn rejects_duplicates_and_wrong_count() {
        let mut entries = ClassTaxonomy::bone_marrow().entries().to_vec();
        entries[1].code = "ABE".into();
        assert!(matches!(ClassTaxonomy::from_entries(entries), Err(Error::Taxonomy(_))));

        let mut short = ClassTaxonomy::bone_marrow().entries().to_vec();
        short.pop();
        assert!(matches!(ClassTaxonomy::from_entries(short), Err(Error::Taxonomy(_))));
    }

    #[test]
    fn override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("taxonomy.toml");
        let mut text = String::new();
        for e in ClassTaxonomy::bone_marrow().entries() {
            text.push_str(&format!("[[class]]\ncode = \"{}\"\nname = \"{} (override)\"\n", e.code, e.name));
        }
        std::fs::write(&path, &text).unwrap();
        let t = ClassTaxonomy::from_file(&path).unwrap();
        assert_eq!(t.name_of("BLA").unwrap(), "Blast (override)");
        assert_ne!(t.fingerprint(), ClassTaxonomy::bone_marrow().fingerprint());

        std::fs::write(&path, "[[class]]\ncode = \"AAA\"\nname = \"x\"\n").unwrap();
        assert!(matches!(ClassTaxonomy::from_file(&path), Err(Error::Taxonomy(_))));
    }
}
