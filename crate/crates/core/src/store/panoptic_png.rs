//! COCO panoptic interchange: an RGB PNG whose pixels encode a segment id as
//! `R + 256 * G + 65536 * B`, plus a JSON sidecar mapping segment ids to
//! classes. Segment id 0 is void.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::panoptic::{Label, PanopticMap};

pub const MAX_SEGMENT_ID: u32 = (1 << 24) - 1;

pub fn encode_segment_id(id: u32) -> Result<[u8; 3], StoreError> {
    if id > MAX_SEGMENT_ID {
        return Err(StoreError::SegmentIdOutOfRange(id));
    }
    Ok([(id & 0xff) as u8, (id >> 8 & 0xff) as u8, (id >> 16) as u8])
}

pub fn decode_segment_id(rgb: [u8; 3]) -> u32 {
    rgb[0] as u32 + 256 * rgb[1] as u32 + 65536 * rgb[2] as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub id: u32,
    pub category_id: u32,
    #[serde(default)]
    pub instance_id: u32,
    #[serde(default)]
    pub area: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentTable {
    segments: Vec<SegmentInfo>,
}

impl SegmentTable {
    pub fn new(segments: Vec<SegmentInfo>) -> Self {
        Self { segments }
    }

    /// One segment per distinct label, ids assigned 1.. in label order.
    pub fn from_map(map: &PanopticMap) -> Self {
        let segments = map
            .segment_areas()
            .into_iter()
            .enumerate()
            .map(|(i, (l, area))| SegmentInfo {
                id: i as u32 + 1,
                category_id: l.class_id,
                instance_id: l.instance_id,
                area,
            })
            .collect();
        Self { segments }
    }

    pub fn segments(&self) -> &[SegmentInfo] {
        &self.segments
    }
}

#[derive(Serialize, Deserialize)]
struct Annotation {
    file_name: String,
    width: usize,
    height: usize,
    segments_info: Vec<SegmentInfo>,
}

/// `foo.png` -> `foo.json`.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

pub fn write_panoptic_png(map: &PanopticMap, table: &SegmentTable, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let mut by_label: HashMap<Label, u32> = HashMap::new();
    for s in table.segments() {
        if s.id == 0 {
            return Err(StoreError::ReservedSegmentId);
        }
        encode_segment_id(s.id)?;
        by_label.insert(Label::thing(s.category_id, s.instance_id), s.id);
    }

    let mut areas: BTreeMap<u32, usize> = BTreeMap::new();
    let mut buf = Vec::with_capacity(map.len() * 3);
    for cell in map.cells() {
        let id = match cell {
            None => 0,
            Some(l) => {
                let id = *by_label.get(l).ok_or(StoreError::MissingSegment {
                    class_id: l.class_id,
                    instance_id: l.instance_id,
                })?;
                *areas.entry(id).or_insert(0) += 1;
                id
            }
        };
        buf.extend_from_slice(&encode_segment_id(id)?);
    }
    let img: RgbImage =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, buf).expect("buffer sized from map");
    img.save_with_format(path, image::ImageFormat::Png)?;

    let segments_info = table
        .segments()
        .iter()
        .filter(|s| areas.contains_key(&s.id))
        .map(|s| SegmentInfo {
            area: areas[&s.id],
            ..s.clone()
        })
        .collect();
    let ann = Annotation {
        file_name: path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        width: map.width(),
        height: map.height(),
        segments_info,
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&ann).map_err(|e| StoreError::json(&side, e))?;
    fs::write(&side, json).map_err(|e| StoreError::io(&side, e))
}

pub fn read_panoptic_png(path: impl AsRef<Path>) -> Result<PanopticMap, StoreError> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| StoreError::io(&side, e))?;
    let ann: Annotation = serde_json::from_str(&text).map_err(|e| StoreError::json(&side, e))?;
    let lookup: HashMap<u32, Label> = ann
        .segments_info
        .iter()
        .map(|s| (s.id, Label::thing(s.category_id, s.instance_id)))
        .collect();

    let img = image::open(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let cells = img
        .pixels()
        .map(|&Rgb(rgb)| match decode_segment_id(rgb) {
            0 => Ok(None),
            id => lookup
                .get(&id)
                .copied()
                .map(Some)
                .ok_or(StoreError::UnknownSegmentId(id)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PanopticMap::from_cells(w, h, cells))
}
