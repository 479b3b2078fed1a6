//! Per-pixel panoptic labels.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::catalog::ClassCatalog;
use crate::mask::BitMask;

/// A class plus an instance id. `instance_id == 0` means "no instance" and is
/// the only legal value for stuff classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub class_id: u32,
    pub instance_id: u32,
}

impl Label {
    pub fn stuff(class_id: u32) -> Self {
        Self {
            class_id,
            instance_id: 0,
        }
    }

    pub fn thing(class_id: u32, instance_id: u32) -> Self {
        Self { class_id, instance_id }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("pixel ({x}, {y}) has class {class_id} which is not in the catalog")]
    UnknownClass { x: usize, y: usize, class_id: u32 },
    #[error("pixel ({x}, {y}) has instance {instance_id} on non-thing class {class_id}")]
    InstanceOnNonThing {
        x: usize,
        y: usize,
        class_id: u32,
        instance_id: u32,
    },
    #[error("pixel ({x}, {y}) carries the background class")]
    BackgroundLabel { x: usize, y: usize },
}

/// H×W grid of optional labels; `None` is void.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanopticMap {
    width: usize,
    height: usize,
    cells: Vec<Option<Label>>,
}

impl PanopticMap {
    pub fn void(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![None; width * height],
        }
    }

    /// Panics if `cells.len() != width * height`.
    pub fn from_cells(width: usize, height: usize, cells: Vec<Option<Label>>) -> Self {
        assert_eq!(cells.len(), width * height, "cell count mismatch");
        Self { width, height, cells }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Option<Label>] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [Option<Label>] {
        &mut self.cells
    }

    pub fn get(&self, x: usize, y: usize) -> Option<Label> {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: Option<Label>) {
        self.cells[y * self.width + x] = label;
    }

    pub fn void_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Pixel count per distinct label, in label order.
    pub fn segment_areas(&self) -> BTreeMap<Label, usize> {
        let mut areas = BTreeMap::new();
        for l in self.cells.iter().flatten() {
            *areas.entry(*l).or_insert(0) += 1;
        }
        areas
    }

    pub fn segment_mask(&self, label: Label) -> BitMask {
        BitMask::from_fn(self.width, self.height, |i| self.cells[i] == Some(label))
    }

    /// Number of distinct thing segments.
    pub fn instance_count(&self, catalog: &ClassCatalog) -> usize {
        self.segment_areas()
            .keys()
            .filter(|l| catalog.is_thing(l.class_id))
            .count()
    }

    /// Renumbers instance ids per image so that thing segments are numbered
    /// 1, 2, ... in raster order of their first pixel. Two maps that differ only
    /// by instance relabeling have identical canonical forms.
    pub fn canonical(&self) -> Self {
        let mut remap: HashMap<Label, u32> = HashMap::new();
        let mut next = 1u32;
        let cells = self
            .cells
            .iter()
            .map(|c| {
                c.map(|l| {
                    if l.instance_id == 0 {
                        l
                    } else {
                        let id = *remap.entry(l).or_insert_with(|| {
                            let id = next;
                            next += 1;
                            id
                        });
                        Label::thing(l.class_id, id)
                    }
                })
            })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            cells,
        }
    }

    pub fn validate(&self, catalog: &ClassCatalog) -> Result<(), MapError> {
        for (i, c) in self.cells.iter().enumerate() {
            let Some(l) = c else { continue };
            let (x, y) = (i % self.width, i / self.width);
            match catalog.kind(l.class_id) {
                None => {
                    return Err(MapError::UnknownClass {
                        x,
                        y,
                        class_id: l.class_id,
                    })
                }
                Some(crate::catalog::ClassKind::Background) => return Err(MapError::BackgroundLabel { x, y }),
                Some(crate::catalog::ClassKind::Stuff) if l.instance_id != 0 => {
                    return Err(MapError::InstanceOnNonThing {
                        x,
                        y,
                        class_id: l.class_id,
                        instance_id: l.instance_id,
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_ignores_instance_numbering() {
        let a = PanopticMap::from_cells(3, 1, vec![Some(Label::thing(2, 7)), None, Some(Label::thing(2, 3))]);
        let b = PanopticMap::from_cells(3, 1, vec![Some(Label::thing(2, 1)), None, Some(Label::thing(2, 9))]);
        assert_ne!(a, b);
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.canonical().get(2, 0), Some(Label::thing(2, 2)));
    }

    #[test]
    fn validate_flags_instance_on_stuff() {
        let cat = ClassCatalog::synthetic(4, 2).unwrap();
        let mut m = PanopticMap::void(2, 2);
        m.set(0, 0, Some(Label::stuff(0)));
        m.set(1, 0, Some(Label::thing(2, 1)));
        assert!(m.validate(&cat).is_ok());
        m.set(1, 1, Some(Label::thing(1, 4)));
        assert!(matches!(
            m.validate(&cat),
            Err(MapError::InstanceOnNonThing { x: 1, y: 1, .. })
        ));
        m.set(1, 1, Some(Label::stuff(3)));
        assert_eq!(m.validate(&cat), Err(MapError::BackgroundLabel { x: 1, y: 1 }));
    }

    #[test]
    fn areas_and_instances() {
        let cat = ClassCatalog::synthetic(4, 2).unwrap();
        let m = PanopticMap::from_cells(
            4,
            1,
            vec![
                Some(Label::stuff(0)),
                Some(Label::thing(2, 1)),
                Some(Label::thing(2, 1)),
                Some(Label::thing(2, 2)),
            ],
        );
        let areas = m.segment_areas();
        assert_eq!(areas[&Label::thing(2, 1)], 2);
        assert_eq!(m.instance_count(&cat), 2);
        assert_eq!(m.segment_mask(Label::thing(2, 1)).count(), 2);
    }
}
