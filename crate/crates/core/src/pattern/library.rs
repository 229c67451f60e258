use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::smarts::{parse_smarts, SmartsError, SmartsPattern};

const DEFAULT_LIBRARY_TSV: &str = include_str!("../../data/default_fg_library.tsv");

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("line {line}: expected `name<TAB>smarts`")]
    BadLine { line: usize },
    #[error("line {line}: invalid group name {name:?}")]
    BadName { line: usize, name: String },
    #[error("line {line}: duplicate group name {name:?}")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: {source}")]
    Pattern {
        line: usize,
        #[source]
        source: SmartsError,
    },
    #[error("cannot read library {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct FunctionalGroup {
    pub name: String,
    pub pattern: SmartsPattern,
}

/// Ordered functional-group patterns. Entry position is the feature index.
#[derive(Debug, Clone)]
pub struct FunctionalGroupLibrary {
    entries: Vec<FunctionalGroup>,
    by_name: HashMap<String, usize>,
    version_tag: String,
}

impl FunctionalGroupLibrary {
    /// Parses the `name<TAB>smarts` format. Blank lines and lines starting
    /// with `#` are skipped; a `# version: <tag>` comment sets the version
    /// tag, otherwise it is derived from a digest of the text.
    pub fn from_tsv(text: &str) -> Result<FunctionalGroupLibrary, LibraryError> {
        let mut entries = Vec::new();
        let mut by_name = HashMap::new();
        let mut version_tag = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(tag) = comment.trim().strip_prefix("version:") {
                    version_tag = Some(tag.trim().to_string());
                }
                continue;
            }
            let mut cols = trimmed.split('\t');
            let (Some(name), Some(smarts), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(LibraryError::BadLine { line });
            };
            let name = name.trim();
            if !valid_name(name) {
                return Err(LibraryError::BadName {
                    line,
                    name: name.to_string(),
                });
            }
            let pattern = parse_smarts(smarts.trim()).map_err(|source| LibraryError::Pattern { line, source })?;
            if by_name.insert(name.to_string(), entries.len()).is_some() {
                return Err(LibraryError::DuplicateName {
                    line,
                    name: name.to_string(),
                });
            }
            entries.push(FunctionalGroup {
                name: name.to_string(),
                pattern,
            });
        }
        let version_tag = version_tag.unwrap_or_else(|| {
            let digest = Sha256::digest(text.as_bytes());
            let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
            format!("sha256:{hex}")
        });
        Ok(FunctionalGroupLibrary {
            entries,
            by_name,
            version_tag,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<FunctionalGroupLibrary, LibraryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LibraryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        FunctionalGroupLibrary::from_tsv(&text)
    }

    pub fn entries(&self) -> &[FunctionalGroup] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn version_tag(&self) -> &str {
        &self.version_tag
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.entries.get(index).map(|e| e.name.as_str())
    }
}

/// Names end up quoted inside rule text and in `name (xN)` lists, so quotes,
/// control characters and the list separator are refused.
fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.chars().any(|c| c.is_control() || c == '"')
        && !name.contains("), ")
        && !name.contains(" (x")
}

/// The bundled curated library.
pub fn default_library() -> FunctionalGroupLibrary {
    FunctionalGroupLibrary::from_tsv(DEFAULT_LIBRARY_TSV).expect("bundled library is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_library_loads() {
        let lib = default_library();
        assert!(lib.len() >= 40);
        assert_eq!(lib.version_tag(), "treekd-default-fg-1");
        assert_eq!(lib.index_of("hydroxyl"), Some(0));
    }

    #[test]
    fn digest_version_when_untagged() {
        let lib = FunctionalGroupLibrary::from_tsv("a\tC\n").unwrap();
        assert!(lib.version_tag().starts_with("sha256:"));
        let other = FunctionalGroupLibrary::from_tsv("a\tN\n").unwrap();
        assert_ne!(lib.version_tag(), other.version_tag());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            FunctionalGroupLibrary::from_tsv("a\tC\na\tN\n"),
            Err(LibraryError::DuplicateName { line: 2, .. })
        ));
        assert!(matches!(
            FunctionalGroupLibrary::from_tsv("justaname\n"),
            Err(LibraryError::BadLine { line: 1 })
        ));
        assert!(matches!(
            FunctionalGroupLibrary::from_tsv("x\t[$(O)]\n"),
            Err(LibraryError::Pattern { line: 1, .. })
        ));
        assert!(matches!(
            FunctionalGroupLibrary::from_tsv("say \"hi\"\tC\n"),
            Err(LibraryError::BadName { .. })
        ));
    }

    #[test]
    fn missing_file() {
        let err = FunctionalGroupLibrary::from_path("/nonexistent/lib.tsv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/lib.tsv"));
    }
}
