//! File formats: MetaImage volumes, PNG/PGM masks, θ documents and
//! annotation CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BinaryVolume, Mask2, MaskStack, ScalarVolume, TransformParams, Volume, Voxel};
use crate::metrics::{AnnotationPair, AnnotationSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl ElementType {
    pub fn met_name(self) -> &'static str {
        match self {
            ElementType::U8 => "MET_UCHAR",
            ElementType::I8 => "MET_CHAR",
            ElementType::U16 => "MET_USHORT",
            ElementType::I16 => "MET_SHORT",
            ElementType::U32 => "MET_UINT",
            ElementType::I32 => "MET_INT",
            ElementType::F32 => "MET_FLOAT",
            ElementType::F64 => "MET_DOUBLE",
        }
    }

    pub fn from_met_name(s: &str) -> Option<Self> {
        Some(match s {
            "MET_UCHAR" => ElementType::U8,
            "MET_CHAR" => ElementType::I8,
            "MET_USHORT" => ElementType::U16,
            "MET_SHORT" => ElementType::I16,
            "MET_UINT" => ElementType::U32,
            "MET_INT" => ElementType::I32,
            "MET_FLOAT" => ElementType::F32,
            "MET_DOUBLE" => ElementType::F64,
            _ => return None,
        })
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::U8 | ElementType::I8 => 1,
            ElementType::U16 | ElementType::I16 => 2,
            ElementType::U32 | ElementType::I32 | ElementType::F32 => 4,
            ElementType::F64 => 8,
        }
    }
}

/// The subset of a MetaImage header this crate reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct MhdHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub offset: [f64; 3],
    pub element_type: ElementType,
    pub msb: bool,
    /// `None` means `LOCAL`: the payload follows the header in the same file.
    pub data_file: Option<String>,
    pub header_size: usize,
}

impl MhdHeader {
    pub fn to_text(&self) -> String {
        let [nx, ny, nz] = self.dims;
        let [sx, sy, sz] = self.spacing;
        let [ox, oy, oz] = self.offset;
        let mut s = String::new();
        s.push_str("ObjectType = Image\n");
        s.push_str("NDims = 3\n");
        s.push_str("BinaryData = True\n");
        s.push_str(&format!("BinaryDataByteOrderMSB = {}\n", if self.msb { "True" } else { "False" }));
        s.push_str("CompressedData = False\n");
        s.push_str("TransformMatrix = 1 0 0 0 1 0 0 0 1\n");
        s.push_str(&format!("Offset = {ox} {oy} {oz}\n"));
        s.push_str(&format!("ElementSpacing = {sx} {sy} {sz}\n"));
        s.push_str(&format!("DimSize = {nx} {ny} {nz}\n"));
        if self.header_size > 0 {
            s.push_str(&format!("HeaderSize = {}\n", self.header_size));
        }
        s.push_str(&format!("ElementType = {}\n", self.element_type.met_name()));
        s.push_str(&format!("ElementDataFile = {}\n", self.data_file.as_deref().unwrap_or("LOCAL")));
        s
    }

    fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }
}

fn parse_triple<T: std::str::FromStr>(path: &Path, key: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::format(path, format!("{key} needs 3 values, got `{value}`")));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| Error::format(path, format!("{key}: cannot parse `{p}`")))?);
    }
    out.try_into().map_err(|_| Error::format(path, format!("{key} needs 3 values")))
}

/// Parses the header and returns it with the byte length of the header text.
pub fn parse_mhd_header(path: &Path, bytes: &[u8]) -> Result<(MhdHeader, usize)> {
    let mut pos = 0usize;
    let mut dims = None;
    let mut spacing = [1.0; 3];
    let mut offset = [0.0; 3];
    let mut element_type = None;
    let mut msb = false;
    let mut header_size = 0usize;
    let mut data_file: Option<Option<String>> = None;
    while data_file.is_none() {
        let Some(len) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(Error::format(path, "header ends before ElementDataFile"));
        };
        let line = std::str::from_utf8(&bytes[pos..pos + len]).map_err(|_| Error::format(path, "header is not UTF-8"))?;
        pos += len + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::format(path, format!("malformed header line `{line}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "NDims" => {
                if value != "3" {
                    return Err(Error::format(path, format!("only 3D volumes are supported, NDims = {value}")));
                }
            }
            "DimSize" => dims = Some(parse_triple::<usize>(path, key, value)?),
            "ElementSpacing" | "ElementSize" => spacing = parse_triple::<f64>(path, key, value)?,
            "Offset" | "Origin" | "Position" => offset = parse_triple::<f64>(path, key, value)?,
            "ElementType" => {
                element_type = Some(ElementType::from_met_name(value).ok_or_else(|| Error::format(path, format!("unsupported ElementType {value}")))?)
            }
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => msb = value.eq_ignore_ascii_case("true"),
            "CompressedData" => {
                if value.eq_ignore_ascii_case("true") {
                    return Err(Error::format(path, "compressed payloads are not supported"));
                }
            }
            "BinaryData" => {
                if !value.eq_ignore_ascii_case("true") {
                    return Err(Error::format(path, "ASCII payloads are not supported"));
                }
            }
            "HeaderSize" => {
                header_size = value.parse::<i64>().map_err(|_| Error::format(path, format!("HeaderSize: cannot parse `{value}`")))?.max(0) as usize
            }
            "ElementDataFile" => data_file = Some(if value == "LOCAL" { None } else { Some(value.to_string()) }),
            _ => {}
        }
    }
    let header = MhdHeader {
        dims: dims.ok_or_else(|| Error::format(path, "missing DimSize"))?,
        spacing,
        offset,
        element_type: element_type.ok_or_else(|| Error::format(path, "missing ElementType"))?,
        msb,
        data_file: data_file.expect("loop exits on ElementDataFile"),
        header_size,
    };
    Ok((header, pos))
}

pub fn read_mhd_header(path: &Path) -> Result<MhdHeader> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_mhd_header(path, &bytes)?.0)
}

/// Header plus raw payload bytes exactly as stored.
pub fn read_mhd_raw(path: &Path) -> Result<(MhdHeader, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, len) = parse_mhd_header(path, &bytes)?;
    let (payload, payload_path): (Vec<u8>, PathBuf) = match &header.data_file {
        None => (bytes[len..].to_vec(), path.to_path_buf()),
        Some(name) => {
            let p = path.parent().unwrap_or(Path::new(".")).join(name);
            (fs::read(&p).map_err(|e| Error::io(&p, e))?, p)
        }
    };
    let need = header.voxel_count() * header.element_type.size();
    if payload.len() < header.header_size + need {
        return Err(Error::format(payload_path, format!("payload has {} bytes, expected {}", payload.len(), header.header_size + need)));
    }
    Ok((header.clone(), payload[header.header_size..header.header_size + need].to_vec()))
}

fn decode(header: &MhdHeader, payload: &[u8]) -> Vec<f64> {
    let size = header.element_type.size();
    payload
        .chunks_exact(size)
        .map(|c| {
            let mut b = [0u8; 8];
            b[..size].copy_from_slice(c);
            if header.msb {
                b[..size].reverse();
            }
            match header.element_type {
                ElementType::U8 => b[0] as f64,
                ElementType::I8 => b[0] as i8 as f64,
                ElementType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
                ElementType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
                ElementType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                ElementType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                ElementType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                ElementType::F64 => f64::from_le_bytes(b),
            }
        })
        .collect()
}

fn isotropic_spacing(path: &Path, header: &MhdHeader) -> Result<f64> {
    let [sx, sy, sz] = header.spacing;
    let tol = 1e-9 * sx.abs();
    if (sy - sx).abs() > tol || (sz - sx).abs() > tol {
        return Err(Error::format(path, format!("anisotropic spacing {sx} {sy} {sz} is not supported")));
    }
    Ok(sx)
}

pub fn read_scalar_volume(path: &Path) -> Result<ScalarVolume> {
    let (header, payload) = read_mhd_raw(path)?;
    let vs = isotropic_spacing(path, &header)?;
    let data: Vec<f32> = match header.element_type {
        ElementType::F32 if !header.msb => payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        _ => decode(&header, &payload).into_iter().map(|v| v as f32).collect(),
    };
    Volume::new(header.dims, vs, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a mask volume; any nonzero voxel counts as inside.
pub fn read_binary_volume(path: &Path) -> Result<BinaryVolume> {
    let (header, payload) = read_mhd_raw(path)?;
    let vs = isotropic_spacing(path, &header)?;
    let data: Vec<u8> = match header.element_type {
        ElementType::U8 => payload.iter().map(|&b| u8::from(b != 0)).collect(),
        _ => decode(&header, &payload).into_iter().map(|v| u8::from(v != 0.0)).collect(),
    };
    Volume::new(header.dims, vs, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Volume element types with a MetaImage encoding.
pub trait MetElement: Voxel {
    const ELEMENT: ElementType;
    fn write_le(self, out: &mut Vec<u8>);
}

impl MetElement for u8 {
    const ELEMENT: ElementType = ElementType::U8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
}

impl MetElement for f32 {
    const ELEMENT: ElementType = ElementType::F32;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

/// Writes `path` (`.mhd` with a sibling `.raw`, or `.mha` with the payload inline).
pub fn write_volume<T: MetElement>(path: &Path, vol: &Volume<T>) -> Result<()> {
    let local = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mha"));
    let raw_name = format!("{}.raw", path.file_stem().and_then(|s| s.to_str()).unwrap_or("volume"));
    let vs = vol.voxel_size();
    let header = MhdHeader {
        dims: vol.dims(),
        spacing: [vs; 3],
        offset: [0.0; 3],
        element_type: T::ELEMENT,
        msb: false,
        data_file: if local { None } else { Some(raw_name.clone()) },
        header_size: 0,
    };
    let mut payload = Vec::with_capacity(vol.data().len() * T::ELEMENT.size());
    for &v in vol.data() {
        v.write_le(&mut payload);
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(header.to_text().as_bytes()).map_err(|e| Error::io(path, e))?;
    if local {
        file.write_all(&payload).map_err(|e| Error::io(path, e))?;
    } else {
        let raw = path.with_file_name(&raw_name);
        fs::write(&raw, &payload).map_err(|e| Error::io(&raw, e))?;
    }
    Ok(())
}

/// Reads a PNG or PGM/PBM mask; any nonzero gray value counts as inside.
pub fn read_mask(path: &Path) -> Result<Mask2> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    Mask2::new(w as usize, h as usize, gray.into_raw().into_iter().map(|v| u8::from(v != 0)).collect())
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Writes an 8-bit grayscale PNG with inside = 255.
pub fn write_mask_png(path: &Path, mask: &Mask2) -> Result<()> {
    let data: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    write_gray_png(path, mask.width(), mask.height(), data)
}

pub fn write_gray_png(path: &Path, width: usize, height: usize, data: Vec<u8>) -> Result<()> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, data).ok_or_else(|| Error::InvalidInput("image buffer size mismatch".into()))?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_gray(path: &Path) -> Result<image::GrayImage> {
    Ok(image::open(path).map_err(|e| Error::format(path, e.to_string()))?.to_luma8())
}

fn is_mask_file(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| ["png", "pgm", "pbm", "pnm"].contains(&e.to_ascii_lowercase().as_str()))
}

/// Trailing decimal number of a file stem, e.g. `slice_012` -> 12.
fn trailing_index(p: &Path) -> Option<i64> {
    let stem = p.file_stem()?.to_str()?;
    let digits: String = stem.chars().rev().take_while(|c| c.is_ascii_digit()).collect::<Vec<_>>().into_iter().rev().collect();
    digits.parse().ok()
}

/// Loads every mask image in `dir`, sorted by file name. Slice indices come
/// from the trailing number of each file name when all files have distinct
/// ones, else they are 0, 1, 2, ... in name order.
pub fn read_mask_dir(dir: &Path) -> Result<MaskStack> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_mask_file(p))
        .collect();
    if files.is_empty() {
        return Err(Error::format(dir, "no mask images (.png, .pgm, .pbm) found"));
    }
    let numbered: Option<Vec<i64>> = files.iter().map(|p| trailing_index(p)).collect();
    let indices = match numbered {
        Some(mut idx) => {
            let mut pairs: Vec<(i64, PathBuf)> = idx.drain(..).zip(files.drain(..)).collect();
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            let distinct = pairs.windows(2).all(|w| w[0].0 < w[1].0);
            if distinct {
                let (i, f): (Vec<i64>, Vec<PathBuf>) = pairs.into_iter().unzip();
                files = f;
                i
            } else {
                files = pairs.into_iter().map(|p| p.1).collect();
                files.sort();
                (0..files.len() as i64).collect()
            }
        }
        None => {
            files.sort();
            (0..files.len() as i64).collect()
        }
    };
    let masks = files.iter().map(|p| read_mask(p)).collect::<Result<Vec<_>>>()?;
    if let Some((k, m)) = masks.iter().enumerate().find(|(_, m)| (m.width(), m.height()) != (masks[0].width(), masks[0].height())) {
        return Err(Error::DimensionMismatch(format!(
            "{} is {}x{}, {} is {}x{}",
            files[k].display(),
            m.width(),
            m.height(),
            files[0].display(),
            masks[0].width(),
            masks[0].height()
        )));
    }
    MaskStack::new(masks, indices)
}

pub fn mask_file_name(index: i64) -> String {
    format!("slice_{index:03}.png")
}

pub fn write_mask_dir(dir: &Path, stack: &MaskStack) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (m, &idx) in stack.masks().iter().zip(stack.slice_indices()) {
        write_mask_png(&dir.join(mask_file_name(idx)), m)?;
    }
    Ok(())
}

pub const THETA_FORMAT: &str = "slicereg-theta";
pub const THETA_VERSION: u32 = 1;

/// Coordinate conventions stored with every θ document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conventions {
    pub model: String,
    pub rotation: String,
    pub angle_unit: String,
    pub ct_frame: String,
    pub photo_frame: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            model: "T(c, i) = R * ([offset_x_i, offset_y_i, offset_z + spacing * i] + scaling * [c_u, c_v, 0])".into(),
            rotation: "R = Rz(rotation_z) * Ry(rotation_y) * Rx(rotation_x), right-handed, about CT axes".into(),
            angle_unit: "radian".into(),
            ct_frame: "voxel units; voxel index k on an axis of n voxels sits at k - (n - 1) / 2; x fastest in storage".into(),
            photo_frame: "pixel units; (col, row) sits at (col - (w - 1) / 2, row - (h - 1) / 2)".into(),
        }
    }
}

/// One joint θ (a single transform bound to every slice) or one
/// single-slice transform per slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaDocument {
    pub format: String,
    pub version: u32,
    pub conventions: Conventions,
    pub transforms: Vec<TransformParams>,
}

impl ThetaDocument {
    pub fn new(transforms: Vec<TransformParams>) -> Self {
        ThetaDocument { format: THETA_FORMAT.into(), version: THETA_VERSION, conventions: Conventions::default(), transforms }
    }
}

pub fn theta_to_json(transforms: &[TransformParams]) -> String {
    let mut s = serde_json::to_string_pretty(&ThetaDocument::new(transforms.to_vec())).expect("θ serializes");
    s.push('\n');
    s
}

pub fn write_theta(path: &Path, transforms: &[TransformParams]) -> Result<()> {
    fs::write(path, theta_to_json(transforms)).map_err(|e| Error::io(path, e))
}

pub fn read_theta(path: &Path) -> Result<Vec<TransformParams>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ThetaDocument = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if doc.format != THETA_FORMAT || doc.version != THETA_VERSION {
        return Err(Error::format(path, format!("expected {THETA_FORMAT} version {THETA_VERSION}, found {} version {}", doc.format, doc.version)));
    }
    if doc.conventions.rotation != Conventions::default().rotation {
        return Err(Error::format(path, format!("unsupported rotation convention `{}`", doc.conventions.rotation)));
    }
    if doc.transforms.is_empty() {
        return Err(Error::format(path, "no transforms"));
    }
    for t in &doc.transforms {
        t.validate().map_err(|e| Error::format(path, e.to_string()))?;
    }
    Ok(doc.transforms)
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRow {
    slice: usize,
    photo_u: f64,
    photo_v: f64,
    ct_u: f64,
    ct_v: f64,
}

/// Parses annotation CSV (`slice,photo_u,photo_v,ct_u,ct_v`) into one set
/// per slice, in order of first appearance.
pub fn parse_annotations(path: &Path, text: &str, pixel_size_mm: f64) -> Result<Vec<AnnotationSet>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    let expected = ["slice", "photo_u", "photo_v", "ct_u", "ct_v"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(path, format!("header must be `{}`", expected.join(","))));
    }
    let mut sets: Vec<(usize, Vec<AnnotationPair>)> = Vec::new();
    for row in reader.deserialize::<AnnotationRow>() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        let pair = AnnotationPair { photo: [row.photo_u, row.photo_v], ct: [row.ct_u, row.ct_v] };
        match sets.iter_mut().find(|(s, _)| *s == row.slice) {
            Some((_, pairs)) => pairs.push(pair),
            None => sets.push((row.slice, vec![pair])),
        }
    }
    if sets.is_empty() {
        return Err(Error::format(path, "no annotation rows"));
    }
    sets.into_iter()
        .map(|(slice, pairs)| AnnotationSet::new(slice, pixel_size_mm, pairs).map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

pub fn read_annotations(path: &Path, pixel_size_mm: f64) -> Result<Vec<AnnotationSet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(path, &text, pixel_size_mm)
}

pub fn annotations_to_csv(sets: &[AnnotationSet]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for set in sets {
        for p in &set.pairs {
            w.serialize(AnnotationRow { slice: set.slice, photo_u: p.photo[0], photo_v: p.photo[1], ct_u: p.ct[0], ct_v: p.ct[1] })
                .expect("in-memory CSV write");
        }
    }
    if sets.iter().all(|s| s.pairs.is_empty()) {
        w.write_record(["slice", "photo_u", "photo_v", "ct_u", "ct_v"]).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

pub fn write_annotations(path: &Path, sets: &[AnnotationSet]) -> Result<()> {
    fs::write(path, annotations_to_csv(sets)).map_err(|e| Error::io(path, e))
}
