//! Class catalog: which class ids are countable things, amorphous stuff, or
//! the reserved no-object class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("catalog needs at least 2 classes (one real class plus background), got {0}")]
    TooFewClasses(usize),
    #[error("class ids must be contiguous 0..{expected_len}; entry {position} has id {found}")]
    NonContiguous {
        expected_len: usize,
        position: usize,
        found: u32,
    },
    #[error("background id {0} is not a catalog entry")]
    MissingBackground(u32),
    #[error("background class {0} must not be marked as a thing")]
    BackgroundIsThing(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Thing,
    Stuff,
    Background,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class_id: u32,
    pub name: String,
    pub is_thing: bool,
}

/// Ordered list of classes with ids `0..C`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCatalog", into = "RawCatalog")]
pub struct ClassCatalog {
    entries: Vec<ClassEntry>,
    background_id: u32,
}

#[derive(Serialize, Deserialize)]
struct RawCatalog {
    background_id: u32,
    entries: Vec<ClassEntry>,
}

impl TryFrom<RawCatalog> for ClassCatalog {
    type Error = CatalogError;

    fn try_from(raw: RawCatalog) -> Result<Self, Self::Error> {
        ClassCatalog::new(raw.entries, raw.background_id)
    }
}

impl From<ClassCatalog> for RawCatalog {
    fn from(c: ClassCatalog) -> Self {
        RawCatalog {
            background_id: c.background_id,
            entries: c.entries,
        }
    }
}

impl ClassCatalog {
    pub fn new(entries: Vec<ClassEntry>, background_id: u32) -> Result<Self, CatalogError> {
        if entries.len() < 2 {
            return Err(CatalogError::TooFewClasses(entries.len()));
        }
        for (position, e) in entries.iter().enumerate() {
            if e.class_id as usize != position {
                return Err(CatalogError::NonContiguous {
                    expected_len: entries.len(),
                    position,
                    found: e.class_id,
                });
            }
        }
        let bg = entries
            .get(background_id as usize)
            .ok_or(CatalogError::MissingBackground(background_id))?;
        if bg.is_thing {
            return Err(CatalogError::BackgroundIsThing(background_id));
        }
        Ok(Self { entries, background_id })
    }

    /// Catalog with `num_stuff` stuff classes first, then things, and the
    /// background as the last id. Used by the synthetic generator.
    pub fn synthetic(num_classes: usize, num_stuff: usize) -> Result<Self, CatalogError> {
        if num_classes < 2 {
            return Err(CatalogError::TooFewClasses(num_classes));
        }
        let background = num_classes - 1;
        let entries = (0..num_classes)
            .map(|id| {
                let (name, is_thing) = if id == background {
                    ("background".to_string(), false)
                } else if id < num_stuff {
                    (format!("stuff_{id}"), false)
                } else {
                    (format!("thing_{id}"), true)
                };
                ClassEntry {
                    class_id: id as u32,
                    name,
                    is_thing,
                }
            })
            .collect();
        Self::new(entries, background as u32)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn background_id(&self) -> u32 {
        self.background_id
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassEntry> {
        self.entries.get(class_id as usize)
    }

    pub fn kind(&self, class_id: u32) -> Option<ClassKind> {
        let e = self.get(class_id)?;
        Some(if class_id == self.background_id {
            ClassKind::Background
        } else if e.is_thing {
            ClassKind::Thing
        } else {
            ClassKind::Stuff
        })
    }

    pub fn is_thing(&self, class_id: u32) -> bool {
        self.kind(class_id) == Some(ClassKind::Thing)
    }

    pub fn is_stuff(&self, class_id: u32) -> bool {
        self.kind(class_id) == Some(ClassKind::Stuff)
    }

    pub fn thing_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.class_id).filter(|&id| self.is_thing(id))
    }

    pub fn stuff_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.class_id).filter(|&id| self.is_stuff(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: u32, thing: bool) -> ClassEntry {
        ClassEntry {
            class_id: id,
            name: format!("c{id}"),
            is_thing: thing,
        }
    }

    #[test]
    fn synthetic_layout() {
        let c = ClassCatalog::synthetic(12, 4).unwrap();
        assert_eq!(c.len(), 12);
        assert_eq!(c.background_id(), 11);
        assert_eq!(c.stuff_ids().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(c.thing_ids().count(), 7);
        assert_eq!(c.kind(11), Some(ClassKind::Background));
        assert_eq!(c.kind(12), None);
    }

    #[test]
    fn rejects_gaps_and_bad_background() {
        let gap = vec![entry(0, false), entry(2, true)];
        assert!(matches!(
            ClassCatalog::new(gap, 0),
            Err(CatalogError::NonContiguous { position: 1, .. })
        ));
        assert_eq!(
            ClassCatalog::new(vec![entry(0, false), entry(1, true)], 1),
            Err(CatalogError::BackgroundIsThing(1))
        );
        assert_eq!(
            ClassCatalog::new(vec![entry(0, false), entry(1, true)], 5),
            Err(CatalogError::MissingBackground(5))
        );
        assert_eq!(
            ClassCatalog::new(vec![entry(0, false)], 0),
            Err(CatalogError::TooFewClasses(1))
        );
    }

    #[test]
    fn json_roundtrip_validates() {
        let c = ClassCatalog::synthetic(5, 2).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: ClassCatalog = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"background_id": 0, "entries": [{"class_id": 0, "name": "a", "is_thing": true}, {"class_id": 1, "name": "b", "is_thing": false}]}"#;
        assert!(serde_json::from_str::<ClassCatalog>(bad).is_err());
    }
}
