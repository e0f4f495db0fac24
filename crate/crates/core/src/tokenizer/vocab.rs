use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub const DEFAULT_BOS: &str = "<s>";
pub const NEWLINE: &str = "\n";

/// Surface list in id order, or an explicit surface → id map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurfaceTable {
    List(Vec<String>),
    Map(BTreeMap<String, u32>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Specials {
    pub bos: String,
    pub newline: String,
}

/// On-disk vocabulary manifest. Specials absent from `surfaces` are
/// appended after the highest id, bos first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabManifest {
    pub surfaces: SurfaceTable,
    pub specials: Specials,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    index: HashMap<String, TokenId>,
    bos: TokenId,
    newline: TokenId,
    max_surface_len: usize,
}

impl Vocabulary {
    pub fn from_manifest(manifest: VocabManifest) -> Result<Self> {
        let mut surfaces: Vec<String> = match manifest.surfaces {
            SurfaceTable::List(list) => list,
            SurfaceTable::Map(map) => {
                let n = map.len();
                let mut slots: Vec<Option<String>> = vec![None; n];
                for (surface, id) in map {
                    let id = id as usize;
                    if id >= n {
                        return Err(Error::Vocab(format!(
                            "id {id} for {surface:?} leaves a gap (size {n})"
                        )));
                    }
                    if slots[id].is_some() {
                        return Err(Error::Vocab(format!("id {id} assigned twice")));
                    }
                    slots[id] = Some(surface);
                }
                // n distinct ids below n: every slot is filled
                slots.into_iter().map(|s| s.unwrap_or_default()).collect()
            }
        };
        let Specials { bos, newline } = manifest.specials;
        if bos.is_empty() {
            return Err(Error::Vocab("missing bos special".into()));
        }
        if newline != NEWLINE {
            return Err(Error::Vocab(format!(
                "newline special must be \"\\n\", got {newline:?}"
            )));
        }
        if bos == newline {
            return Err(Error::Vocab("bos and newline share a surface".into()));
        }
        let mut index = HashMap::with_capacity(surfaces.len() + 2);
        for (i, s) in surfaces.iter().enumerate() {
            if index.insert(s.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::Vocab(format!("duplicate surface {s:?}")));
            }
        }
        let mut special_id = |s: &str, surfaces: &mut Vec<String>| {
            *index.entry(s.to_string()).or_insert_with(|| {
                surfaces.push(s.to_string());
                TokenId(surfaces.len() as u32 - 1)
            })
        };
        let bos = special_id(&bos, &mut surfaces);
        let newline = special_id(&newline, &mut surfaces);
        let max_surface_len = surfaces.iter().map(|s| s.len()).max().unwrap_or(0);
        Ok(Vocabulary {
            surfaces,
            index,
            bos,
            newline,
            max_surface_len,
        })
    }

    /// Builds a vocabulary from word surfaces (deduplicated, order kept),
    /// with `<s>` and `\n` as specials.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = std::collections::HashSet::new();
        let list: Vec<String> = words
            .into_iter()
            .map(Into::into)
            .filter(|w| w != DEFAULT_BOS && w != NEWLINE && seen.insert(w.clone()))
            .collect();
        Self::from_manifest(VocabManifest {
            surfaces: SurfaceTable::List(list),
            specials: Specials {
                bos: DEFAULT_BOS.into(),
                newline: NEWLINE.into(),
            },
        })
        .expect("deduplicated word list is a valid vocabulary")
    }

    /// 256 byte surfaces `<0x00>`..`<0xFF>` plus the specials.
    pub fn byte_level() -> Self {
        Self::from_words((0..=255u8).map(byte_surface))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: VocabManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_manifest(manifest)
    }

    pub fn to_manifest(&self) -> VocabManifest {
        VocabManifest {
            surfaces: SurfaceTable::List(self.surfaces.clone()),
            specials: Specials {
                bos: self.surfaces[self.bos.index()].clone(),
                newline: NEWLINE.into(),
            },
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_manifest())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn newline(&self) -> TokenId {
        self.newline
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> Result<&str> {
        self.surfaces
            .get(id.index())
            .map(String::as_str)
            .ok_or(Error::TokenOutOfRange {
                id: id.0,
                size: self.surfaces.len(),
            })
    }

    pub fn max_surface_len(&self) -> usize {
        self.max_surface_len
    }
}

pub fn byte_surface(b: u8) -> String {
    format!("<0x{b:02X}>")
}

pub fn parse_byte_surface(s: &str) -> Option<u8> {
    let hex = s.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_level_size() {
        let v = Vocabulary::byte_level();
        assert_eq!(v.len(), 258);
        assert_eq!(v.surface(v.newline()).unwrap(), "\n");
        assert_ne!(v.bos(), v.newline());
    }

    #[test]
    fn missing_newline_special_rejected() {
        let json = r#"{"surfaces": ["a", "b"], "specials": {"bos": "<s>"}}"#;
        let parsed: std::result::Result<VocabManifest, _> = serde_json::from_str(json);
        assert!(parsed.is_err());
        let json = r#"{"surfaces": ["a", "b"], "specials": {"bos": "<s>", "newline": ""}}"#;
        let m: VocabManifest = serde_json::from_str(json).unwrap();
        assert!(Vocabulary::from_manifest(m).is_err());
    }

    #[test]
    fn duplicate_surface_rejected() {
        let m = VocabManifest {
            surfaces: SurfaceTable::List(vec!["a".into(), "a".into()]),
            specials: Specials {
                bos: "<s>".into(),
                newline: "\n".into(),
            },
        };
        assert!(matches!(Vocabulary::from_manifest(m), Err(Error::Vocab(_))));
    }

    #[test]
    fn permuted_map_accepted() {
        let surfaces = ["alpha", "beta", "gamma", "delta", "eps"];
        let perm = [3u32, 0, 4, 1, 2];
        let map: BTreeMap<String, u32> = surfaces
            .iter()
            .zip(perm)
            .map(|(s, i)| (s.to_string(), i))
            .collect();
        let v = Vocabulary::from_manifest(VocabManifest {
            surfaces: SurfaceTable::Map(map),
            specials: Specials {
                bos: "<s>".into(),
                newline: "\n".into(),
            },
        })
        .unwrap();
        for (s, i) in surfaces.iter().zip(perm) {
            assert_eq!(v.surface(TokenId(i)).unwrap(), *s);
            assert_eq!(v.id(s), Some(TokenId(i)));
        }
        // exhaustive scan: every id resolves and maps back to itself
        for i in 0..v.len() as u32 {
            let s = v.surface(TokenId(i)).unwrap();
            assert_eq!(v.id(s), Some(TokenId(i)));
        }
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn gapped_map_rejected() {
        let map: BTreeMap<String, u32> = [("a".to_string(), 0), ("b".to_string(), 5)].into();
        let r = Vocabulary::from_manifest(VocabManifest {
            surfaces: SurfaceTable::Map(map),
            specials: Specials {
                bos: "<s>".into(),
                newline: "\n".into(),
            },
        });
        assert!(r.is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let v = Vocabulary::from_words(["x", "y", "\n", "z"]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.json");
        v.save(&p).unwrap();
        let w = Vocabulary::load(&p).unwrap();
        assert_eq!(w.len(), v.len());
        assert_eq!(w.newline(), v.newline());
        assert_eq!(w.bos(), v.bos());
    }
}
