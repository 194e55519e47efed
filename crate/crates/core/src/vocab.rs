//! Type vocabulary partitioned into general, fine, and ultra-fine tiers.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Partition {
    General,
    Fine,
    UltraFine,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::General, Partition::Fine, Partition::UltraFine];
}

/// Ordered type set with a tier assignment for every type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeVocabulary {
    types: Vec<String>,
    index: HashMap<String, usize>,
    tier: Vec<Partition>,
    members: [Vec<usize>; 3],
}

impl TypeVocabulary {
    /// Builds a vocabulary; every type not listed as general or fine is ultra-fine.
    pub fn new<S: AsRef<str>>(all_types: &[S], general: &[S], fine: &[S]) -> Result<Self> {
        let mut index = HashMap::with_capacity(all_types.len());
        let mut types = Vec::with_capacity(all_types.len());
        for t in all_types {
            let t = t.as_ref().to_string();
            if index.insert(t.clone(), types.len()).is_some() {
                return Err(Error::InvalidInput(format!("duplicate type `{t}`")));
            }
            types.push(t);
        }
        let mut tier = vec![Partition::UltraFine; types.len()];
        for (list, part) in [(general, Partition::General), (fine, Partition::Fine)] {
            for t in list {
                let t = t.as_ref();
                let i = *index.get(t).ok_or_else(|| Error::UnknownType(t.to_string()))?;
                if tier[i] != Partition::UltraFine {
                    return Err(Error::InvalidInput(format!(
                        "type `{t}` listed in more than one partition"
                    )));
                }
                tier[i] = part;
            }
        }
        let mut members: [Vec<usize>; 3] = Default::default();
        for (i, p) in tier.iter().enumerate() {
            members[*p as usize].push(i);
        }
        Ok(TypeVocabulary {
            types,
            index,
            tier,
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn name(&self, index: usize) -> &str {
        &self.types[index]
    }

    pub fn index_of(&self, t: &str) -> Option<usize> {
        self.index.get(t).copied()
    }

    pub fn contains(&self, t: &str) -> bool {
        self.index.contains_key(t)
    }

    pub fn partition_of(&self, index: usize) -> Partition {
        self.tier[index]
    }

    /// Vocabulary indices belonging to `part`, ascending.
    pub fn members(&self, part: Partition) -> &[usize] {
        &self.members[part as usize]
    }

    pub fn member_names(&self, part: Partition) -> BTreeSet<&str> {
        self.members(part).iter().map(|&i| self.name(i)).collect()
    }

    /// Resolves type names to indices, failing on the first unknown name.
    pub fn indices<'a, I>(&self, names: I) -> Result<Vec<usize>>
    where
        I: IntoIterator<Item = &'a String>,
    {
        names
            .into_iter()
            .map(|n| self.index_of(n).ok_or_else(|| Error::UnknownType(n.clone())))
            .collect()
    }

    /// Stable digest of the ordered type list and its partition, used to pair
    /// checkpoints with the vocabulary they were trained on.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (t, p) in self.types.iter().zip(&self.tier) {
            h.update(t.as_bytes());
            h.update([0u8, *p as u8 + 1, b'\n']);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>()
    }
}

fn read_type_list(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

/// Loads a vocabulary from three one-type-per-line files.
pub fn load_vocabulary(
    vocab_file: impl AsRef<Path>,
    general_file: impl AsRef<Path>,
    fine_file: impl AsRef<Path>,
) -> Result<TypeVocabulary> {
    let (vocab_file, general_file, fine_file) = (vocab_file.as_ref(), general_file.as_ref(), fine_file.as_ref());
    let all = read_type_list(vocab_file)?;
    let mut seen = HashSet::new();
    for (line, t) in &all {
        if !seen.insert(t.as_str()) {
            return Err(Error::format(vocab_file, *line, format!("duplicate type `{t}`")));
        }
    }
    let mut subsets = Vec::with_capacity(2);
    for path in [general_file, fine_file] {
        let list = read_type_list(path)?;
        for (line, t) in &list {
            if !seen.contains(t.as_str()) {
                return Err(Error::format(
                    path,
                    *line,
                    format!("type `{t}` is not in {}", vocab_file.display()),
                ));
            }
        }
        subsets.push(list.into_iter().map(|(_, t)| t).collect::<Vec<_>>());
    }
    let all: Vec<String> = all.into_iter().map(|(_, t)| t).collect();
    TypeVocabulary::new(&all, &subsets[0], &subsets[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, lines: &[&str]) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        p
    }

    #[test]
    fn ultrafine_is_the_remainder() {
        let dir = tempfile::tempdir().unwrap();
        let v = write(dir.path(), "v", &["person", "actor", "location"]);
        let g = write(dir.path(), "g", &["person", "location"]);
        let f = write(dir.path(), "f", &[]);
        let vocab = load_vocabulary(&v, &g, &f).unwrap();
        assert_eq!(vocab.member_names(Partition::UltraFine), BTreeSet::from(["actor"]));
        assert_eq!(vocab.members(Partition::General), &[0, 2]);
        assert_eq!(vocab.index_of("actor"), Some(1));
    }

    #[test]
    fn duplicate_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let v = write(dir.path(), "v", &["person", "actor", "person"]);
        let g = write(dir.path(), "g", &["person"]);
        let f = write(dir.path(), "f", &[]);
        let err = load_vocabulary(&v, &g, &f).unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }), "{err}");
    }

    #[test]
    fn subset_entry_outside_vocab_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let v = write(dir.path(), "v", &["person"]);
        let g = write(dir.path(), "g", &["person"]);
        let f = write(dir.path(), "f", &["artist"]);
        assert!(matches!(
            load_vocabulary(&v, &g, &f).unwrap_err(),
            Error::Format { line: 1, .. }
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_vocabulary("/nonexistent/v.txt", "/x", "/y").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/v.txt"));
    }

    #[test]
    fn fingerprint_depends_on_partition() {
        let a = TypeVocabulary::new(&["a", "b"], &["a"], &[]).unwrap();
        let b = TypeVocabulary::new(&["a", "b"], &[], &["a"]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }

    proptest! {
        #[test]
        fn partition_is_exact(n in 1usize..60, picks in proptest::collection::vec(0u8..3, 60)) {
            let all: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let general: Vec<String> = all.iter().zip(&picks).filter(|(_, p)| **p == 0).map(|(t, _)| t.clone()).collect();
            let fine: Vec<String> = all.iter().zip(&picks).filter(|(_, p)| **p == 1).map(|(t, _)| t.clone()).collect();
            let v = TypeVocabulary::new(&all, &general, &fine).unwrap();
            let sizes: usize = Partition::ALL.iter().map(|p| v.members(*p).len()).sum();
            prop_assert_eq!(sizes, v.len());
            for (i, t) in v.types().iter().enumerate() {
                prop_assert_eq!(v.index_of(t), Some(i));
            }
        }
    }
}
