//! File formats: 8-bit PNG images and masks, indexed parsing PNGs, keypoint
//! JSON, and crash-safe writes.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::person::{Keypoint, ParsingMap, NUM_CLASSES};
use crate::tensor::{BinaryMask, ImageTensor};

/// Writes `bytes` to a sibling temp file, syncs it and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::param(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Maps `[0, 1]` to `0..=255`, clamping out-of-range values.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(width: usize, height: usize, color: ColorType, palette: Option<Vec<u8>>, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(BitDepth::Eight);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        let mut writer = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
        writer.write_image_data(data).map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    data: Vec<u8>,
}

fn decode(bytes: &[u8], transform: Transformations) -> Result<Decoded> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(transform);
    let mut reader = dec.read_info().map_err(|e| Error::Format(format!("png: {e}")))?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Format("png image too large".into()))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(|e| Error::Format(format!("png: {e}")))?;
    if info.bit_depth != BitDepth::Eight {
        return Err(Error::Format(format!("expected 8-bit samples, got {:?}", info.bit_depth)));
    }
    data.truncate(info.buffer_size());
    Ok(Decoded { width: info.width as usize, height: info.height as usize, color: info.color_type, data })
}

/// RGB PNG bytes from a 3-channel tensor in `[0, 1]`.
pub fn encode_rgb_png(img: &ImageTensor) -> Result<Vec<u8>> {
    if img.channels() != 3 {
        return Err(Error::dim(format!("RGB PNG needs 3 channels, got {}", img.channels())));
    }
    let (_, h, w) = img.shape();
    let mut data = Vec::with_capacity(3 * h * w);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data.push(quantize(img.get(c, y, x)));
            }
        }
    }
    encode(w, h, ColorType::Rgb, None, &data)
}

/// Decodes any 8-bit PNG to a 3-channel tensor in `[0, 1]`; gray is
/// replicated and alpha dropped.
pub fn decode_rgb_png(bytes: &[u8]) -> Result<ImageTensor> {
    let d = decode(bytes, Transformations::EXPAND | Transformations::STRIP_16)?;
    let stride = match d.color {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        other => return Err(Error::Format(format!("unsupported colour type {other:?}"))),
    };
    Ok(ImageTensor::from_fn(3, d.height, d.width, |c, y, x| {
        let base = (y * d.width + x) * stride;
        let v = if stride < 3 { d.data[base] } else { d.data[base + c] };
        v as f64 / 255.0
    }))
}

/// 8-bit grayscale PNG, set pixels 255.
pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    let data: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode(mask.width(), mask.height(), ColorType::Grayscale, None, &data)
}

/// A pixel is set when its luminance-free first channel is at least 128.
pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask> {
    BinaryMask::from_threshold(&decode_rgb_png(bytes)?.channel(0), 128.0 / 255.0 - 1e-9)
}

/// Display colours for the seven classes, by class id.
pub const PARSING_PALETTE: [[u8; 3]; NUM_CLASSES] = [
    [0, 0, 0],
    [254, 0, 0],
    [0, 0, 254],
    [254, 85, 0],
    [51, 169, 220],
    [0, 254, 254],
    [85, 51, 0],
];

/// Indexed PNG whose pixel values are class ids.
pub fn encode_parsing_png(parsing: &ParsingMap) -> Result<Vec<u8>> {
    let palette: Vec<u8> = PARSING_PALETTE.iter().flatten().copied().collect();
    encode(parsing.width(), parsing.height(), ColorType::Indexed, Some(palette), parsing.labels())
}

/// Accepts an indexed or 8-bit grayscale PNG with values in `0..=6`.
pub fn decode_parsing_png(bytes: &[u8]) -> Result<ParsingMap> {
    let d = decode(bytes, Transformations::IDENTITY)?;
    if !matches!(d.color, ColorType::Indexed | ColorType::Grayscale) {
        return Err(Error::Format(format!("parsing map must be indexed or grayscale, got {:?}", d.color)));
    }
    if let Some(v) = d.data.iter().find(|&&v| v as usize >= NUM_CLASSES) {
        return Err(Error::Format(format!("parsing map holds label {v}, expected 0..{}", NUM_CLASSES - 1)));
    }
    ParsingMap::new(d.height, d.width, d.data)
}

pub fn parse_keypoints_json(text: &str) -> Result<Vec<Keypoint>> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("keypoints: {e}")))
}

pub fn keypoints_json(points: &[Keypoint]) -> String {
    serde_json::to_string_pretty(points).expect("keypoints serialize")
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_rgb_png(path: &Path) -> Result<ImageTensor> {
    decode_rgb_png(&read(path)?)
}

pub fn write_rgb_png(img: &ImageTensor, path: &Path) -> Result<()> {
    write_atomic(path, &encode_rgb_png(img)?)
}

pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    decode_mask_png(&read(path)?)
}

pub fn write_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mask_png(mask)?)
}

pub fn read_parsing_png(path: &Path) -> Result<ParsingMap> {
    decode_parsing_png(&read(path)?)
}

pub fn write_parsing_png(parsing: &ParsingMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_parsing_png(parsing)?)
}

pub fn read_keypoints(path: &Path) -> Result<Vec<Keypoint>> {
    parse_keypoints_json(&String::from_utf8_lossy(&read(path)?))
}

pub fn write_keypoints(points: &[Keypoint], path: &Path) -> Result<()> {
    write_atomic(path, keypoints_json(points).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_round_trip_is_exact_on_quantized_values() {
        let img = ImageTensor::from_fn(3, 5, 7, |c, y, x| ((c * 31 + y * 7 + x * 13) % 256) as f64 / 255.0);
        let back = decode_rgb_png(&encode_rgb_png(&img).unwrap()).unwrap();
        assert_eq!(back, img);
        let bytes = encode_rgb_png(&img).unwrap();
        assert_eq!(encode_rgb_png(&decode_rgb_png(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn quantization_clamps() {
        assert_eq!(quantize(-0.5), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(0.5), 128);
    }

    #[test]
    fn mask_and_parsing_round_trips() {
        let m = BinaryMask::from_fn(6, 4, |y, x| (y + x) % 2 == 0);
        assert_eq!(decode_mask_png(&encode_mask_png(&m).unwrap()).unwrap(), m);
        let p = ParsingMap::from_fn(6, 4, |y, x| (y * 4 + x) % NUM_CLASSES).unwrap();
        let bytes = encode_parsing_png(&p).unwrap();
        assert_eq!(decode_parsing_png(&bytes).unwrap(), p);
        // Grayscale maps with class ids as values are accepted too.
        let gray = encode(4, 6, ColorType::Grayscale, None, p.labels()).unwrap();
        assert_eq!(decode_parsing_png(&gray).unwrap(), p);
        let bad = encode(2, 1, ColorType::Grayscale, None, &[0, 9]).unwrap();
        assert!(matches!(decode_parsing_png(&bad), Err(Error::Format(_))));
        assert!(matches!(decode_rgb_png(b"not a png"), Err(Error::Format(_))));
    }

    #[test]
    fn keypoint_json() {
        let pts = parse_keypoints_json(r#"[{"id": 0, "x": 3.5, "y": 2}, {"id": 17, "x": 0, "y": 1.25}]"#).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[1].id, pts[1].x, pts[1].y), (17, 0.0, 1.25));
        assert_eq!(parse_keypoints_json(&keypoints_json(&pts)).unwrap(), pts);
        assert!(parse_keypoints_json("{").is_err());
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/out.bin"), b"x").is_err());
    }
}
