//! File formats: 16-bit depth / 8-bit mask / 16-bit NOCS PNGs, JSON scene and
//! prediction records, and atomic file writes.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma, Rgb, RgbImage};
use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{DepthMap, InstanceMask, Intrinsics, SimilarityTransform};
use crate::render::NocsMap;

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        e.into()
    })
}

fn encode_png<P, C>(img: &ImageBuffer<P, C>) -> Result<Vec<u8>>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn open_png(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found", path.display()),
        )
        .into());
    }
    Ok(image::open(path)?)
}

pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width as u32, depth.height as u32, depth.data.clone())
            .expect("depth buffer size");
    write_atomic(path, &encode_png(&img)?)
}

pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    match open_png(path)? {
        image::DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            DepthMap::from_data(w as usize, h as usize, img.into_raw())
        }
        _ => Err(Error::parse(
            path.display().to_string(),
            "depth must be a single-channel 16-bit PNG",
        )),
    }
}

pub fn write_mask_png(path: &Path, mask: &InstanceMask) -> Result<()> {
    let img: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(mask.width as u32, mask.height as u32, mask.data.clone())
            .expect("mask buffer size");
    write_atomic(path, &encode_png(&img)?)
}

pub fn read_mask_png(path: &Path) -> Result<InstanceMask> {
    match open_png(path)? {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            InstanceMask::from_data(w as usize, h as usize, img.into_raw())
        }
        _ => Err(Error::parse(
            path.display().to_string(),
            "mask must be a single-channel 8-bit PNG",
        )),
    }
}

/// Coordinate to 16-bit channel value.
pub fn encode_nocs_channel(c: f64) -> u16 {
    (c.clamp(0.0, 1.0) * 65535.0).round() as u16
}

pub fn write_nocs_png(path: &Path, nocs: &NocsMap) -> Result<()> {
    let mut raw = Vec::with_capacity(nocs.len() * 3);
    for i in 0..nocs.len() {
        if nocs.valid[i] {
            raw.extend(nocs.data[i].iter().map(|&c| encode_nocs_channel(c)));
        } else {
            raw.extend([0u16; 3]);
        }
    }
    let img: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(nocs.width as u32, nocs.height as u32, raw).expect("nocs size");
    write_atomic(path, &encode_png(&img)?)
}

/// Reads a 16-bit NOCS PNG; validity comes from the nonzero pixels of `mask`.
pub fn read_nocs_png(path: &Path, mask: &InstanceMask) -> Result<NocsMap> {
    let img = match open_png(path)? {
        image::DynamicImage::ImageRgb16(img) => img,
        _ => {
            return Err(Error::parse(
                path.display().to_string(),
                "NOCS map must be a 3-channel 16-bit PNG",
            ))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w != mask.width || h != mask.height {
        return Err(Error::invalid("NOCS map and mask differ in size"));
    }
    let mut nocs = NocsMap::new(w, h);
    for (i, px) in img.pixels().enumerate() {
        if mask.data[i] != 0 {
            nocs.set(i, Vector3::from(px.0.map(|v| v as f64 / 65535.0)));
        }
    }
    Ok(nocs)
}

pub fn write_rgb_png(path: &Path, rgb: &RgbImage) -> Result<()> {
    write_atomic(path, &encode_png(rgb)?)
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    Ok(open_png(path)?.to_rgb8())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    let intr: Intrinsics = read_json(path)?;
    intr.validate()?;
    Ok(intr)
}

/// Pose as uniform scale, row-major rotation and translation (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub scale: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&SimilarityTransform> for PoseRecord {
    fn from(t: &SimilarityTransform) -> Self {
        PoseRecord {
            scale: t.scale(),
            rotation: t.rotation_row_major(),
            translation: (*t.translation()).into(),
        }
    }
}

impl PoseRecord {
    pub fn to_transform(&self) -> Result<SimilarityTransform> {
        SimilarityTransform::new_projected(
            self.scale,
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from(self.translation),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub class_id: u32,
    pub instance_id: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    pub pose: PoseRecord,
    pub dimensions: [f64; 3],
    #[serde(default)]
    pub handle_visible: Option<bool>,
}

/// Per-image scene description / ground-truth metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub class_id: u32,
    pub score: f64,
    pub pose: PoseRecord,
    pub dimensions: [f64; 3],
    #[serde(default)]
    pub inlier_count: usize,
    #[serde(default)]
    pub rmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u8>,
}

/// Per-image prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub detections: Vec<DetectionRecord>,
}

/// File names of one frame inside an output directory.
#[derive(Debug, Clone)]
pub struct FramePaths {
    pub rgb: PathBuf,
    pub nocs: PathBuf,
    pub depth: PathBuf,
    pub mask: PathBuf,
    pub meta: PathBuf,
    pub pred: PathBuf,
}

impl FramePaths {
    pub fn new(dir: &Path, image_id: &str) -> Self {
        FramePaths {
            rgb: dir.join(format!("{image_id}_rgb.png")),
            nocs: dir.join(format!("{image_id}_nocs.png")),
            depth: dir.join(format!("{image_id}_depth.png")),
            mask: dir.join(format!("{image_id}_mask.png")),
            meta: dir.join(format!("{image_id}_meta.json")),
            pred: dir.join(format!("{image_id}_pred.json")),
        }
    }
}

/// Image ids of all files in `dir` ending in `suffix`, sorted.
pub fn list_ids(dir: &Path, suffix: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(id) = name.strip_suffix(suffix) {
            if !id.is_empty() && !name.starts_with('.') {
                ids.push(id.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}
